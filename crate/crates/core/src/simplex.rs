//! Dense two-phase simplex solver for small linear programs with equality
//! constraints and per-variable box bounds.
//!
//! Pivoting uses Bland's anti-cycling rule throughout; optimality means all
//! reduced costs exceed `-OPT_TOL`. Problem sizes here are a few hundred
//! variables, so a dense tableau is the simplest thing that works.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Reduced-cost tolerance certifying optimality.
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;

/// `min c'x` subject to `eq_matrix * x = eq_rhs` and `lower <= x <= upper`
/// (bounds may be infinite).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    fn validate(&self) -> Result<()> {
        let nv = self.objective.len();
        if self.eq_matrix.ncols() != nv && self.eq_matrix.nrows() > 0 {
            return Err(Error::Dimension(format!(
                "constraint matrix has {} columns for {} variables",
                self.eq_matrix.ncols(),
                nv
            )));
        }
        if self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(Error::Dimension(format!(
                "{} constraint rows but {} right-hand sides",
                self.eq_matrix.nrows(),
                self.eq_rhs.len()
            )));
        }
        if self.lower.len() != nv || self.upper.len() != nv {
            return Err(Error::Dimension(
                "bound vectors must match the variable count".into(),
            ));
        }
        Ok(())
    }
}

/// Solver verdict. Infeasibility and unboundedness are verdicts, not errors.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { point: DVector<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

// How each standard-form column maps back to an original variable.
#[derive(Debug, Clone, Copy)]
enum ColKind {
    // x_orig = offset + y
    Shifted { orig: usize, offset: f64 },
    // x_orig = offset - y
    Flipped { orig: usize, offset: f64 },
    // free variable split: x_orig = y_pos - y_neg
    FreePos { orig: usize },
    FreeNeg { orig: usize },
    // slack of an upper-bound row
    Slack,
    Artificial,
}

/// Solves the program with a two-phase dense simplex.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpOutcome> {
    lp.validate()?;
    let nv = lp.objective.len();
    let m_eq = lp.eq_matrix.nrows();

    for j in 0..nv {
        if lp.lower[j] > lp.upper[j] {
            return Ok(LpOutcome::Infeasible);
        }
    }

    // Standard form: every structural column is nonnegative; double-bounded
    // variables get an extra `y + s = span` row.
    let mut kinds: Vec<ColKind> = Vec::new();
    let mut col_of_var: Vec<usize> = Vec::with_capacity(nv);
    let mut bound_rows: Vec<(usize, f64)> = Vec::new(); // (column, span)
    for j in 0..nv {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        let col = kinds.len();
        col_of_var.push(col);
        if l.is_finite() {
            kinds.push(ColKind::Shifted { orig: j, offset: l });
            if u.is_finite() {
                bound_rows.push((col, u - l));
            }
        } else if u.is_finite() {
            kinds.push(ColKind::Flipped { orig: j, offset: u });
        } else {
            kinds.push(ColKind::FreePos { orig: j });
            kinds.push(ColKind::FreeNeg { orig: j });
        }
    }
    let n_struct = kinds.len();
    let n_slack = bound_rows.len();
    let n_rows = m_eq + n_slack;
    let n_cols = n_struct + n_slack + m_eq; // artificials only for eq rows

    // tableau = [A | b], kept canonical w.r.t. the basis at all times
    let mut t = DMatrix::zeros(n_rows, n_cols + 1);
    for r in 0..m_eq {
        let mut rhs = lp.eq_rhs[r];
        for j in 0..nv {
            let a = lp.eq_matrix[(r, j)];
            if a == 0.0 {
                continue;
            }
            match kinds[col_of_var[j]] {
                ColKind::Shifted { offset, .. } => {
                    t[(r, col_of_var[j])] = a;
                    rhs -= a * offset;
                }
                ColKind::Flipped { offset, .. } => {
                    t[(r, col_of_var[j])] = -a;
                    rhs -= a * offset;
                }
                ColKind::FreePos { .. } => {
                    t[(r, col_of_var[j])] = a;
                    t[(r, col_of_var[j] + 1)] = -a;
                }
                _ => unreachable!(),
            }
        }
        t[(r, n_cols)] = rhs;
    }
    for (k, &(col, span)) in bound_rows.iter().enumerate() {
        let r = m_eq + k;
        t[(r, col)] = 1.0;
        t[(r, n_struct + k)] = 1.0;
        t[(r, n_cols)] = span;
        kinds.push(ColKind::Slack);
    }
    for r in 0..m_eq {
        kinds.push(ColKind::Artificial);
        if t[(r, n_cols)] < 0.0 {
            for c in 0..=n_cols {
                t[(r, c)] = -t[(r, c)];
            }
        }
        t[(r, n_struct + n_slack + r)] = 1.0;
    }

    // initial basis: artificials on eq rows, slacks on bound rows
    let mut basis: Vec<usize> = (0..n_rows)
        .map(|r| {
            if r < m_eq {
                n_struct + n_slack + r
            } else {
                n_struct + (r - m_eq)
            }
        })
        .collect();

    // phase 1: minimize the sum of artificials
    let phase1_cost: Vec<f64> = (0..n_cols)
        .map(|c| if matches!(kinds[c], ColKind::Artificial) { 1.0 } else { 0.0 })
        .collect();
    match run_simplex(&mut t, &mut basis, &phase1_cost, n_cols) {
        SimplexEnd::Optimal => {}
        SimplexEnd::Unbounded => {
            return Err(Error::Internal("phase 1 cannot be unbounded".into()));
        }
    }
    let phase1_value: f64 = basis
        .iter()
        .enumerate()
        .map(|(r, &b)| phase1_cost[b] * t[(r, n_cols)])
        .sum();
    if phase1_value > 1e-7 {
        return Ok(LpOutcome::Infeasible);
    }

    // drive basic artificials out; rows that cannot pivot are redundant
    let mut drop_rows: Vec<usize> = Vec::new();
    for r in 0..n_rows {
        if !matches!(kinds[basis[r]], ColKind::Artificial) {
            continue;
        }
        let pivot_col = (0..n_struct + n_slack)
            .find(|&c| t[(r, c)].abs() > 1e-8);
        match pivot_col {
            Some(c) => pivot(&mut t, &mut basis, r, c),
            None => drop_rows.push(r),
        }
    }
    if !drop_rows.is_empty() {
        let keep: Vec<usize> = (0..n_rows).filter(|r| !drop_rows.contains(r)).collect();
        let mut t2 = DMatrix::zeros(keep.len(), n_cols + 1);
        let mut basis2 = Vec::with_capacity(keep.len());
        for (new_r, &old_r) in keep.iter().enumerate() {
            for c in 0..=n_cols {
                t2[(new_r, c)] = t[(old_r, c)];
            }
            basis2.push(basis[old_r]);
        }
        t = t2;
        basis = basis2;
    }

    // phase 2: original objective over structural columns, artificials barred
    let mut phase2_cost = vec![0.0; n_cols];
    for (c, kind) in kinds.iter().enumerate().take(n_struct) {
        match *kind {
            ColKind::Shifted { orig, .. } => phase2_cost[c] = lp.objective[orig],
            ColKind::Flipped { orig, .. } => phase2_cost[c] = -lp.objective[orig],
            ColKind::FreePos { orig } => phase2_cost[c] = lp.objective[orig],
            ColKind::FreeNeg { orig } => phase2_cost[c] = -lp.objective[orig],
            _ => {}
        }
    }
    match run_simplex(&mut t, &mut basis, &phase2_cost, n_struct + n_slack) {
        SimplexEnd::Optimal => {}
        SimplexEnd::Unbounded => return Ok(LpOutcome::Unbounded),
    }

    // read the solution back in original coordinates
    let mut std_values = vec![0.0; n_cols];
    for (r, &b) in basis.iter().enumerate() {
        std_values[b] = t[(r, t.ncols() - 1)];
    }
    let mut x = DVector::zeros(nv);
    for (c, kind) in kinds.iter().enumerate().take(n_struct) {
        match *kind {
            ColKind::Shifted { orig, offset } => x[orig] = offset + std_values[c],
            ColKind::Flipped { orig, offset } => x[orig] = offset - std_values[c],
            ColKind::FreePos { orig } => x[orig] += std_values[c],
            ColKind::FreeNeg { orig } => x[orig] -= std_values[c],
            _ => {}
        }
    }
    let value = lp
        .objective
        .iter()
        .zip(x.iter())
        .map(|(c, v)| c * v)
        .sum();
    Ok(LpOutcome::Optimal { point: x, value })
}

enum SimplexEnd {
    Optimal,
    Unbounded,
}

/// Bland-rule simplex iterations over the first `enterable` columns.
fn run_simplex(
    t: &mut DMatrix<f64>,
    basis: &mut [usize],
    cost: &[f64],
    enterable: usize,
) -> SimplexEnd {
    let n_rows = t.nrows();
    let rhs_col = t.ncols() - 1;
    loop {
        // reduced costs via the canonical tableau: r_j = c_j - c_B' T_j
        let mut entering = None;
        for c in 0..enterable {
            if basis.contains(&c) {
                continue;
            }
            let mut reduced = cost[c];
            for r in 0..n_rows {
                let cb = cost[basis[r]];
                if cb != 0.0 {
                    reduced -= cb * t[(r, c)];
                }
            }
            if reduced < -OPT_TOL {
                entering = Some(c); // Bland: smallest eligible index
                break;
            }
        }
        let Some(c_in) = entering else {
            return SimplexEnd::Optimal;
        };

        let mut leaving: Option<(usize, f64)> = None;
        for r in 0..n_rows {
            let a = t[(r, c_in)];
            if a > PIVOT_TOL {
                let ratio = t[(r, rhs_col)] / a;
                match leaving {
                    None => leaving = Some((r, ratio)),
                    Some((best_r, best)) => {
                        // Bland tie-break: smallest basic variable index
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && basis[r] < basis[best_r])
                        {
                            leaving = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((r_out, _)) = leaving else {
            return SimplexEnd::Unbounded;
        };
        pivot(t, basis, r_out, c_in);
    }
}

fn pivot(t: &mut DMatrix<f64>, basis: &mut [usize], row: usize, col: usize) {
    let rhs_col = t.ncols() - 1;
    let pv = t[(row, col)];
    for c in 0..=rhs_col {
        t[(row, c)] /= pv;
    }
    for r in 0..t.nrows() {
        if r == row {
            continue;
        }
        let factor = t[(r, col)];
        if factor != 0.0 {
            for c in 0..=rhs_col {
                t[(r, c)] -= factor * t[(row, c)];
            }
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn solve(lp: &LinearProgram) -> LpOutcome {
        lp_solve(lp).unwrap()
    }

    #[test]
    fn box_only_minimum() {
        let lp = LinearProgram {
            objective: vec![1.0],
            eq_matrix: DMatrix::zeros(0, 1),
            eq_rhs: DVector::zeros(0),
            lower: vec![2.0],
            upper: vec![5.0],
        };
        match solve(&lp) {
            LpOutcome::Optimal { point, value } => {
                assert_relative_eq!(point[0], 2.0, epsilon = 1e-9);
                assert_relative_eq!(value, 2.0, epsilon = 1e-9);
            }
            other => panic!("expected optimum, got {:?}", other),
        }
    }

    #[test]
    fn forced_by_equality() {
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            eq_matrix: dmatrix![1.0, 1.0],
            eq_rhs: DVector::from_element(1, 3.0),
            lower: vec![0.0, 0.0],
            upper: vec![3.0, 3.0],
        };
        match solve(&lp) {
            LpOutcome::Optimal { value, .. } => assert_relative_eq!(value, 3.0, epsilon = 1e-9),
            other => panic!("expected optimum, got {:?}", other),
        }
    }

    #[test]
    fn infeasible_detected() {
        let lp = LinearProgram {
            objective: vec![0.0, 0.0],
            eq_matrix: dmatrix![1.0, 1.0],
            eq_rhs: DVector::from_element(1, -1.0),
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        assert!(matches!(solve(&lp), LpOutcome::Infeasible));
    }

    #[test]
    fn unbounded_detected() {
        let lp = LinearProgram {
            objective: vec![-1.0],
            eq_matrix: DMatrix::zeros(0, 1),
            eq_rhs: DVector::zeros(0),
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
        };
        assert!(matches!(solve(&lp), LpOutcome::Unbounded));
    }

    #[test]
    fn upper_bounded_from_below_infinite() {
        let lp = LinearProgram {
            objective: vec![-1.0],
            eq_matrix: DMatrix::zeros(0, 1),
            eq_rhs: DVector::zeros(0),
            lower: vec![f64::NEG_INFINITY],
            upper: vec![5.0],
        };
        match solve(&lp) {
            LpOutcome::Optimal { point, value } => {
                assert_relative_eq!(point[0], 5.0, epsilon = 1e-9);
                assert_relative_eq!(value, -5.0, epsilon = 1e-9);
            }
            other => panic!("expected optimum, got {:?}", other),
        }
    }

    #[test]
    fn free_variable_with_equality() {
        // min x + 2y st x + y = 1, x free, y in [0, 10] -> x = 1, y = 0
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            eq_matrix: dmatrix![1.0, 1.0],
            eq_rhs: DVector::from_element(1, 1.0),
            lower: vec![f64::NEG_INFINITY, 0.0],
            upper: vec![f64::INFINITY, 10.0],
        };
        match solve(&lp) {
            LpOutcome::Optimal { point, value } => {
                assert_relative_eq!(point[0], 1.0, epsilon = 1e-9);
                assert_relative_eq!(point[1], 0.0, epsilon = 1e-9);
                assert_relative_eq!(value, 1.0, epsilon = 1e-9);
            }
            other => panic!("expected optimum, got {:?}", other),
        }
    }

    #[test]
    fn redundant_rows_handled() {
        let lp = LinearProgram {
            objective: vec![2.0, 1.0],
            eq_matrix: dmatrix![1.0, 1.0; 2.0, 2.0],
            eq_rhs: DVector::from_vec(vec![3.0, 6.0]),
            lower: vec![0.0, 0.0],
            upper: vec![3.0, 3.0],
        };
        match solve(&lp) {
            LpOutcome::Optimal { value, .. } => assert_relative_eq!(value, 3.0, epsilon = 1e-9),
            other => panic!("expected optimum, got {:?}", other),
        }
    }

    #[test]
    fn inverted_bounds_are_infeasible() {
        let lp = LinearProgram {
            objective: vec![1.0],
            eq_matrix: DMatrix::zeros(0, 1),
            eq_rhs: DVector::zeros(0),
            lower: vec![2.0],
            upper: vec![1.0],
        };
        assert!(matches!(solve(&lp), LpOutcome::Infeasible));
    }

    /// Every vertex of {Ax = b, l <= x <= u} fixes nv - m variables at a
    /// bound; enumerate them all and take the best feasible objective.
    fn vertex_enumeration_optimum(lp: &LinearProgram) -> Option<f64> {
        let nv = lp.objective.len();
        let m = lp.eq_matrix.nrows();
        let mut best: Option<f64> = None;
        let free_count = nv - m;
        let mut combo: Vec<usize> = (0..m).collect(); // indices of basic vars

        fn next_combination(combo: &mut [usize], n: usize) -> bool {
            let k = combo.len();
            let mut i = k;
            while i > 0 {
                i -= 1;
                if combo[i] < n - (k - i) {
                    combo[i] += 1;
                    for j in i + 1..k {
                        combo[j] = combo[j - 1] + 1;
                    }
                    return true;
                }
            }
            false
        }

        loop {
            let basic: Vec<usize> = combo.clone();
            let fixed: Vec<usize> = (0..nv).filter(|j| !basic.contains(j)).collect();
            assert_eq!(fixed.len(), free_count);
            for mask in 0..(1usize << free_count) {
                let mut x = DVector::zeros(nv);
                for (bit, &j) in fixed.iter().enumerate() {
                    x[j] = if mask & (1 << bit) != 0 {
                        lp.upper[j]
                    } else {
                        lp.lower[j]
                    };
                }
                let mut a_basic = DMatrix::zeros(m, m);
                let mut rhs = lp.eq_rhs.clone();
                for (col, &j) in basic.iter().enumerate() {
                    for r in 0..m {
                        a_basic[(r, col)] = lp.eq_matrix[(r, j)];
                    }
                }
                for &j in &fixed {
                    for r in 0..m {
                        rhs[r] -= lp.eq_matrix[(r, j)] * x[j];
                    }
                }
                if let Some(sol) = a_basic.lu().solve(&rhs) {
                    let mut ok = true;
                    for (col, &j) in basic.iter().enumerate() {
                        x[j] = sol[col];
                        if x[j] < lp.lower[j] - 1e-9 || x[j] > lp.upper[j] + 1e-9 {
                            ok = false;
                            break;
                        }
                    }
                    if ok {
                        let value: f64 = lp
                            .objective
                            .iter()
                            .zip(x.iter())
                            .map(|(c, v)| c * v)
                            .sum();
                        best = Some(best.map_or(value, |b: f64| b.min(value)));
                    }
                }
            }
            if !next_combination(&mut combo, nv) {
                break;
            }
        }
        best
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..10 {
            let nv = rng.random_range(3..=6);
            let m = rng.random_range(1..=3.min(nv - 1));
            let mut a = DMatrix::zeros(m, nv);
            for r in 0..m {
                for c in 0..nv {
                    a[(r, c)] = rng.random_range(-2.0..2.0);
                }
            }
            let lower = vec![0.0; nv];
            let upper: Vec<f64> = (0..nv).map(|_| rng.random_range(0.5..3.0)).collect();
            // pick an interior point so the LP is feasible by construction
            let x0 = DVector::from_fn(nv, |j, _| rng.random_range(0.0..upper[j]));
            let b = &a * &x0;
            let objective: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lp = LinearProgram {
                objective,
                eq_matrix: a,
                eq_rhs: b,
                lower,
                upper,
            };
            let oracle = vertex_enumeration_optimum(&lp).expect("feasible by construction");
            match solve(&lp) {
                LpOutcome::Optimal { value, .. } => {
                    assert!(
                        (value - oracle).abs() < 1e-8,
                        "trial {}: simplex {} vs oracle {}",
                        trial,
                        value,
                        oracle
                    );
                }
                other => panic!("trial {}: expected optimum, got {:?}", trial, other),
            }
        }
    }
}
