//! Compression constraint sets over a base network, feasibility testing,
//! projection of candidates back into a constraint set, and maximal
//! compression (minimum total notional) as a linear program.
//!
//! All four sets keep each bank's net liability position equal to the base
//! network's. They differ in how much rewiring they allow:
//!
//! * bilateral: only pairwise netting, each exposure within `[0, base]`;
//! * conservative: any cyclical netting, each exposure within `[0, base]`;
//! * rerouting: arbitrary rewiring with row sums (gross obligations) fixed;
//! * nonconservative: arbitrary rewiring with row sums at most the base's.
//!
//! `fix_society` additionally pins the societal column (bilateral pins it
//! already via the pairwise rule against the society node).

use crate::error::{Error, Result};
use crate::network::{net_positions, LiabilityNetwork};
use crate::simplex::{lp_solve, LinearProgram, LpOutcome};
use nalgebra::{DMatrix, DVector};

/// Default absolute feasibility tolerance. Currency units are millions, so
/// this is far below a cent at that scale.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Bilateral,
    Conservative,
    Rerouting,
    Nonconservative,
}

impl ConstraintKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::Bilateral => "bilateral",
            ConstraintKind::Conservative => "conservative",
            ConstraintKind::Rerouting => "rerouting",
            ConstraintKind::Nonconservative => "nonconservative",
        }
    }
}

/// A compression constraint set relative to a base network.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    pub base: LiabilityNetwork,
    pub kind: ConstraintKind,
    pub fix_society: bool,
}

impl ConstraintSpec {
    pub fn new(base: LiabilityNetwork, kind: ConstraintKind, fix_society: bool) -> Self {
        Self {
            base,
            kind,
            fix_society,
        }
    }
}

/// Outcome of a feasibility check.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub max_violation: f64,
    pub violations: Vec<String>,
}

/// Checks membership of `candidate` in the constraint set, within an
/// absolute tolerance, reporting every violated condition.
pub fn is_feasible(
    candidate: &LiabilityNetwork,
    spec: &ConstraintSpec,
    tol: f64,
) -> Result<FeasibilityReport> {
    let n = spec.base.n();
    if candidate.n() != n {
        return Err(Error::Dimension(format!(
            "candidate has {} banks, base has {}",
            candidate.n(),
            n
        )));
    }
    let mut violations = Vec::new();
    let mut max_violation = 0.0f64;
    let mut record = |amount: f64, msg: String| {
        if amount > tol {
            violations.push(msg);
        }
        if amount > max_violation {
            max_violation = amount;
        }
    };

    match spec.kind {
        ConstraintKind::Bilateral => {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    if i < j {
                        let net_c = candidate.interbank(i, j) - candidate.interbank(j, i);
                        let net_b = spec.base.interbank(i, j) - spec.base.interbank(j, i);
                        record(
                            (net_c - net_b).abs(),
                            format!(
                                "pairwise net {}->{} is {}, base {}",
                                i + 1,
                                j + 1,
                                net_c,
                                net_b
                            ),
                        );
                    }
                    let excess = candidate.interbank(i, j) - spec.base.interbank(i, j);
                    record(
                        excess,
                        format!("exposure {}->{} exceeds base by {}", i + 1, j + 1, excess),
                    );
                }
                // against the society node the pairwise rule pins the column
                let d = (candidate.societal(i) - spec.base.societal(i)).abs();
                record(
                    d,
                    format!("societal obligation of bank {} moved by {}", i + 1, d),
                );
            }
        }
        ConstraintKind::Conservative => {
            check_net_positions(candidate, spec, &mut record);
            for i in 0..n {
                for j in 0..=n {
                    let excess = candidate.matrix()[(i, j)] - spec.base.matrix()[(i, j)];
                    record(
                        excess,
                        format!("entry {}->node {} exceeds base by {}", i + 1, j, excess),
                    );
                }
            }
        }
        ConstraintKind::Rerouting => {
            check_net_positions(candidate, spec, &mut record);
            let rc = candidate.total_obligations();
            let rb = spec.base.total_obligations();
            for i in 0..n {
                record(
                    (rc[i] - rb[i]).abs(),
                    format!("row sum of bank {} is {}, base {}", i + 1, rc[i], rb[i]),
                );
            }
        }
        ConstraintKind::Nonconservative => {
            check_net_positions(candidate, spec, &mut record);
            let rc = candidate.total_obligations();
            let rb = spec.base.total_obligations();
            for i in 0..n {
                record(
                    rc[i] - rb[i],
                    format!("row sum of bank {} grew to {} from {}", i + 1, rc[i], rb[i]),
                );
            }
        }
    }
    if spec.fix_society {
        for i in 0..n {
            let d = (candidate.societal(i) - spec.base.societal(i)).abs();
            record(
                d,
                format!("societal obligation of bank {} moved by {}", i + 1, d),
            );
        }
    }
    Ok(FeasibilityReport {
        feasible: violations.is_empty(),
        max_violation,
        violations,
    })
}

fn check_net_positions(
    candidate: &LiabilityNetwork,
    spec: &ConstraintSpec,
    record: &mut impl FnMut(f64, String),
) {
    let nc = net_positions(candidate);
    let nb = net_positions(&spec.base);
    for i in 0..nc.len() {
        record(
            (nc[i] - nb[i]).abs(),
            format!("net position of bank {} is {}, base {}", i + 1, nc[i], nb[i]),
        );
    }
}

// ---------------------------------------------------------------------------
// free-coordinate view of a constraint set

/// Row-sum constraint attached to one bank's free coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RowRule {
    Free,
    Equal(f64),
    AtMost(f64),
}

const REPAIR_TOL: f64 = 1e-8;
const REPAIR_MAX_ITER: usize = 20_000;

/// Cached geometry of one constraint set: the free coordinates, their box
/// bounds, per-row sum rules, and the net-position subspace projector.
/// Build once, project many candidates.
#[derive(Debug, Clone)]
pub struct Polytope {
    spec: ConstraintSpec,
    /// (row, col) of each free coordinate in the full matrix.
    coords: Vec<(usize, usize)>,
    /// var indices per bank row.
    row_vars: Vec<Vec<usize>>,
    upper: Vec<f64>,
    row_rules: Vec<RowRule>,
    /// net-position operator over free coordinates and its pseudo-inverse
    net_op: DMatrix<f64>,
    net_pinv: DMatrix<f64>,
    net_target: DVector<f64>,
}

impl Polytope {
    pub fn new(spec: ConstraintSpec) -> Result<Self> {
        let n = spec.base.n();
        let society_free = !spec.fix_society && spec.kind != ConstraintKind::Bilateral;
        let mut coords = Vec::new();
        let mut row_vars = vec![Vec::new(); n];
        let mut upper = Vec::new();
        for i in 0..n {
            if society_free {
                coords.push((i, 0));
                row_vars[i].push(coords.len() - 1);
                upper.push(match spec.kind {
                    ConstraintKind::Conservative => spec.base.societal(i),
                    _ => f64::INFINITY,
                });
            }
            for j in 0..n {
                if j == i {
                    continue;
                }
                coords.push((i, j + 1));
                row_vars[i].push(coords.len() - 1);
                upper.push(match spec.kind {
                    ConstraintKind::Bilateral | ConstraintKind::Conservative => {
                        spec.base.interbank(i, j)
                    }
                    _ => f64::INFINITY,
                });
            }
        }
        let nv = coords.len();

        let base_rows = spec.base.total_obligations();
        let row_rules: Vec<RowRule> = (0..n)
            .map(|i| {
                let fixed_part = if society_free {
                    0.0
                } else {
                    spec.base.societal(i)
                };
                match spec.kind {
                    ConstraintKind::Rerouting => RowRule::Equal(base_rows[i] - fixed_part),
                    ConstraintKind::Nonconservative => RowRule::AtMost(base_rows[i] - fixed_part),
                    _ => RowRule::Free,
                }
            })
            .collect();

        // net position operator: +1 on out-edges of bank i (society column
        // included when free), -1 on in-edges
        let mut net_op = DMatrix::zeros(n, nv);
        for (v, &(r, c)) in coords.iter().enumerate() {
            net_op[(r, v)] += 1.0;
            if c >= 1 {
                net_op[(c - 1, v)] -= 1.0;
            }
        }
        let mut net_target = net_positions(&spec.base);
        if !society_free {
            for i in 0..n {
                net_target[i] -= spec.base.societal(i);
            }
        }
        let net_pinv = if nv > 0 {
            net_op
                .clone()
                .svd(true, true)
                .pseudo_inverse(1e-10)
                .map_err(|e| Error::Internal(format!("net operator SVD failed: {}", e)))?
        } else {
            DMatrix::zeros(0, n)
        };

        Ok(Self {
            spec,
            coords,
            row_vars,
            upper,
            row_rules,
            net_op,
            net_pinv,
            net_target,
        })
    }

    pub fn spec(&self) -> &ConstraintSpec {
        &self.spec
    }

    /// Number of free coordinates.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Extracts the free coordinates of a full matrix.
    pub fn free_coords(&self, matrix: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.coords.len(),
            self.coords.iter().map(|&(r, c)| matrix[(r, c)]),
        )
    }

    /// Rebuilds a full network from free coordinates, filling fixed entries
    /// from the base.
    pub fn network_from_free(&self, v: &DVector<f64>) -> Result<LiabilityNetwork> {
        let n = self.spec.base.n();
        let mut m = DMatrix::zeros(n, n + 1);
        let society_free = !self.spec.fix_society && self.spec.kind != ConstraintKind::Bilateral;
        if !society_free {
            for i in 0..n {
                m[(i, 0)] = self.spec.base.societal(i);
            }
        }
        for (idx, &(r, c)) in self.coords.iter().enumerate() {
            // tiny negatives from the least-squares pass are numerical noise
            m[(r, c)] = if v[idx] < 0.0 && v[idx] > -1e-9 {
                0.0
            } else {
                v[idx]
            };
        }
        LiabilityNetwork::from_matrix(m)
    }

    fn project_net_subspace(&self, v: &mut DVector<f64>) {
        let residual = &self.net_op * &*v - &self.net_target;
        *v -= &self.net_pinv * residual;
    }

    fn project_rows_and_box(&self, v: &mut DVector<f64>) {
        for (i, rule) in self.row_rules.iter().enumerate() {
            let vars = &self.row_vars[i];
            match *rule {
                RowRule::Free => {
                    for &idx in vars {
                        v[idx] = v[idx].clamp(0.0, self.upper[idx]);
                    }
                }
                RowRule::Equal(target) => {
                    project_row_to_sum(v, vars, target);
                }
                RowRule::AtMost(target) => {
                    for &idx in vars {
                        v[idx] = v[idx].max(0.0);
                    }
                    let total: f64 = vars.iter().map(|&idx| v[idx]).sum();
                    if total > target {
                        project_row_to_sum(v, vars, target);
                    }
                }
            }
        }
    }

    /// Nearest feasible network to `candidate`: alternating projections
    /// between the net-position subspace and the box/row-sum set, then an
    /// equality-constrained least-squares pass to pin the affine
    /// constraints exactly.
    pub fn project(&self, candidate: &DMatrix<f64>) -> Result<LiabilityNetwork> {
        let n = self.spec.base.n();
        if candidate.nrows() != n || candidate.ncols() != n + 1 {
            return Err(Error::Dimension(format!(
                "candidate is {}x{}, expected {}x{}",
                candidate.nrows(),
                candidate.ncols(),
                n,
                n + 1
            )));
        }
        if self.spec.kind == ConstraintKind::Bilateral {
            return Ok(self.project_bilateral(candidate));
        }
        let target = self.free_coords(candidate);
        let mut v = target.clone();
        let mut iterations = 0;
        loop {
            let prev = v.clone();
            self.project_net_subspace(&mut v);
            self.project_rows_and_box(&mut v);
            iterations += 1;
            let change = (&v - &prev).amax();
            if change < REPAIR_TOL {
                break;
            }
            if iterations >= REPAIR_MAX_ITER {
                return Err(Error::NonConvergence {
                    what: "constraint-set projection",
                    iterations,
                    residual: change,
                });
            }
        }
        if let Some(exact) = self.exactness_pass(&target, &v) {
            v = exact;
        }
        let net = self.network_from_free(&v)?;
        let report = is_feasible(&net, &self.spec, FEAS_TOL)?;
        if !report.feasible {
            return Err(Error::NonConvergence {
                what: "constraint-set projection",
                iterations,
                residual: report.max_violation,
            });
        }
        Ok(net)
    }

    /// Re-solves the projection as an equality-constrained least squares on
    /// the active set identified by the alternating projections: active
    /// bounds stay fixed, the net equations (and any tight row-sum rows)
    /// hold exactly, remaining coordinates move as little as possible from
    /// the original candidate. Returns None when the polish would leave the
    /// polytope.
    fn exactness_pass(&self, target: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        let nv = v.len();
        let active_tol = 1e-9;
        let mut fixed_value = vec![None::<f64>; nv];
        for idx in 0..nv {
            if v[idx] <= active_tol {
                fixed_value[idx] = Some(0.0);
            } else if self.upper[idx].is_finite() && v[idx] >= self.upper[idx] - active_tol {
                fixed_value[idx] = Some(self.upper[idx]);
            }
        }
        let free: Vec<usize> = (0..nv).filter(|&i| fixed_value[i].is_none()).collect();

        // equality rows: net positions, Equal rows, tight AtMost rows
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        let n = self.spec.base.n();
        for i in 0..n {
            let coeffs: Vec<(usize, f64)> = (0..nv)
                .filter(|&idx| self.net_op[(i, idx)] != 0.0)
                .map(|idx| (idx, self.net_op[(i, idx)]))
                .collect();
            rows.push((coeffs, self.net_target[i]));
        }
        for (i, rule) in self.row_rules.iter().enumerate() {
            let sum: f64 = self.row_vars[i].iter().map(|&idx| v[idx]).sum();
            let tight = match *rule {
                RowRule::Equal(t) => Some(t),
                RowRule::AtMost(t) if sum >= t - active_tol => Some(t),
                _ => None,
            };
            if let Some(t) = tight {
                rows.push((self.row_vars[i].iter().map(|&idx| (idx, 1.0)).collect(), t));
            }
        }

        // reduce to the free coordinates
        let pos_of: std::collections::HashMap<usize, usize> =
            free.iter().enumerate().map(|(p, &idx)| (idx, p)).collect();
        let mut e = DMatrix::zeros(rows.len(), free.len());
        let mut f = DVector::zeros(rows.len());
        for (r, (coeffs, rhs)) in rows.iter().enumerate() {
            let mut adjusted = *rhs;
            for &(idx, a) in coeffs {
                match pos_of.get(&idx) {
                    Some(&p) => e[(r, p)] = a,
                    None => adjusted -= a * fixed_value[idx].unwrap(),
                }
            }
            f[r] = adjusted;
        }
        let c_free = DVector::from_iterator(free.len(), free.iter().map(|&idx| target[idx]));
        let sol = if free.is_empty() {
            // every coordinate sits on a bound; usable only if those values
            // already satisfy the equality rows
            if f.amax() > 1e-9 {
                return None;
            }
            c_free
        } else {
            let residual = &e * &c_free - &f;
            let pinv = e.svd(true, true).pseudo_inverse(1e-10).ok()?;
            &c_free - pinv * residual
        };

        let mut out = v.clone();
        for (p, &idx) in free.iter().enumerate() {
            let value = sol[p];
            if value < -1e-9 || (self.upper[idx].is_finite() && value > self.upper[idx] + 1e-9) {
                return None;
            }
            out[idx] = value.max(0.0);
        }
        for idx in 0..nv {
            if let Some(value) = fixed_value[idx] {
                out[idx] = value;
            }
        }
        // AtMost rows that were slack must stay slack
        for (i, rule) in self.row_rules.iter().enumerate() {
            if let RowRule::AtMost(t) = *rule {
                let sum: f64 = self.row_vars[i].iter().map(|&idx| out[idx]).sum();
                if sum > t + 1e-9 {
                    return None;
                }
            }
        }
        Some(out)
    }

    /// Exact projection for the bilateral set: each unordered pair is an
    /// independent segment, the societal column is pinned to the base.
    fn project_bilateral(&self, candidate: &DMatrix<f64>) -> LiabilityNetwork {
        let n = self.spec.base.n();
        let mut m = DMatrix::zeros(n, n + 1);
        for i in 0..n {
            m[(i, 0)] = self.spec.base.societal(i);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let b_ij = self.spec.base.interbank(i, j);
                let b_ji = self.spec.base.interbank(j, i);
                let c = b_ij - b_ji;
                let lo = c.max(0.0);
                let hi = b_ij.min(b_ji + c);
                let a_ij = candidate[(i, j + 1)];
                let a_ji = candidate[(j, i + 1)];
                let t = (0.5 * (a_ij + a_ji + c)).clamp(lo, hi);
                m[(i, j + 1)] = t;
                m[(j, i + 1)] = t - c;
            }
        }
        LiabilityNetwork::from_matrix(m).expect("pairwise projection stays in bounds")
    }

    /// Builds the minimum-total-notional linear program over the free
    /// coordinates (nonconservative row sums get explicit slack variables,
    /// the bilateral set gets one pairwise-net row per pair).
    pub fn maximal_compression_lp(&self) -> LinearProgram {
        let n = self.spec.base.n();
        let nv = self.dim();
        let n_slack = self
            .row_rules
            .iter()
            .filter(|r| matches!(r, RowRule::AtMost(_)))
            .count();
        let n_rowsum_rows = self
            .row_rules
            .iter()
            .filter(|r| !matches!(r, RowRule::Free))
            .count();
        let pair_rows = if self.spec.kind == ConstraintKind::Bilateral {
            n * (n - 1) / 2
        } else {
            0
        };
        let total_rows = n + n_rowsum_rows + pair_rows;
        let total_vars = nv + n_slack;

        let mut a = DMatrix::zeros(total_rows, total_vars);
        let mut b = DVector::zeros(total_rows);
        for i in 0..n {
            for idx in 0..nv {
                a[(i, idx)] = self.net_op[(i, idx)];
            }
            b[i] = self.net_target[i];
        }
        let mut row = n;
        let mut slack = nv;
        for (i, rule) in self.row_rules.iter().enumerate() {
            match *rule {
                RowRule::Free => {}
                RowRule::Equal(t) => {
                    for &idx in &self.row_vars[i] {
                        a[(row, idx)] = 1.0;
                    }
                    b[row] = t;
                    row += 1;
                }
                RowRule::AtMost(t) => {
                    for &idx in &self.row_vars[i] {
                        a[(row, idx)] = 1.0;
                    }
                    a[(row, slack)] = 1.0;
                    b[row] = t;
                    slack += 1;
                    row += 1;
                }
            }
        }
        if self.spec.kind == ConstraintKind::Bilateral {
            let idx_of: std::collections::HashMap<(usize, usize), usize> = self
                .coords
                .iter()
                .enumerate()
                .map(|(idx, &(r, c))| ((r, c), idx))
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    a[(row, idx_of[&(i, j + 1)])] = 1.0;
                    a[(row, idx_of[&(j, i + 1)])] = -1.0;
                    b[row] = self.spec.base.interbank(i, j) - self.spec.base.interbank(j, i);
                    row += 1;
                }
            }
        }

        let mut objective = vec![1.0; nv];
        objective.extend(std::iter::repeat(0.0).take(n_slack));
        let lower = vec![0.0; total_vars];
        let mut upper: Vec<f64> = self.upper.clone();
        upper.extend(std::iter::repeat(f64::INFINITY).take(n_slack));
        LinearProgram {
            objective,
            eq_matrix: a,
            eq_rhs: b,
            lower,
            upper,
        }
    }
}

/// Projects a raw candidate matrix into the constraint set, minimizing the
/// squared deviation. Builds the polytope each call; use [`Polytope`]
/// directly inside optimization loops.
pub fn repair(candidate: &DMatrix<f64>, spec: &ConstraintSpec) -> Result<LiabilityNetwork> {
    Polytope::new(spec.clone())?.project(candidate)
}

/// The feasible network with minimum total notional.
///
/// Bilateral compression short-circuits to the pairwise closed form
/// `L_ij = max(0, base_ij - base_ji)`; the other sets go through the LP.
pub fn maximal_compression(spec: &ConstraintSpec) -> Result<LiabilityNetwork> {
    if spec.kind == ConstraintKind::Bilateral {
        return bilateral_closed_form(&spec.base);
    }
    maximal_compression_lp(spec)
}

/// LP route for maximal compression, valid for every constraint kind
/// (used to cross-check the bilateral closed form).
pub fn maximal_compression_lp(spec: &ConstraintSpec) -> Result<LiabilityNetwork> {
    let polytope = Polytope::new(spec.clone())?;
    let lp = polytope.maximal_compression_lp();
    match lp_solve(&lp)? {
        LpOutcome::Optimal { point, .. } => {
            let free = point.rows(0, polytope.dim()).into_owned();
            polytope.network_from_free(&free)
        }
        LpOutcome::Infeasible => Err(Error::Internal(
            "maximal compression LP infeasible although the base network is feasible".into(),
        )),
        LpOutcome::Unbounded => Err(Error::Internal(
            "maximal compression LP unbounded although notional is bounded below by zero".into(),
        )),
    }
}

/// `L_ij = max(0, base_ij - base_ji)`, the most the network can be
/// compressed pairwise.
fn bilateral_closed_form(base: &LiabilityNetwork) -> Result<LiabilityNetwork> {
    let n = base.n();
    let mut m = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        m[(i, 0)] = base.societal(i);
        for j in 0..n {
            if i != j {
                m[(i, j + 1)] = (base.interbank(i, j) - base.interbank(j, i)).max(0.0);
            }
        }
    }
    LiabilityNetwork::from_matrix(m)
}

fn project_row_to_sum(v: &mut DVector<f64>, vars: &[usize], target: f64) {
    // Euclidean projection of the row onto {w >= 0, sum w = target}:
    // w_i = max(0, v_i - tau) with tau chosen so the sum matches.
    let mut sorted: Vec<f64> = vars.iter().map(|&idx| v[idx]).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut tau = None;
    for (count, &value) in sorted.iter().enumerate() {
        cumulative += value;
        let candidate_tau = (cumulative - target) / (count + 1) as f64;
        if candidate_tau < value {
            tau = Some(candidate_tau);
        }
    }
    match tau {
        Some(tau) => {
            for &idx in vars {
                v[idx] = (v[idx] - tau).max(0.0);
            }
        }
        None => {
            for &idx in vars {
                v[idx] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate, NetworkKind};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn figure1_left() -> LiabilityNetwork {
        LiabilityNetwork::from_edges(
            3,
            &[
                (1, 2, 1.0),
                (2, 1, 10.0),
                (2, 3, 2.0),
                (3, 2, 20.0),
                (3, 1, 3.0),
                (1, 3, 30.0),
            ],
        )
        .unwrap()
    }

    fn figure2_left() -> LiabilityNetwork {
        LiabilityNetwork::from_edges(
            3,
            &[
                (1, 2, 1.0),
                (2, 3, 2.0),
                (3, 1, 3.0),
                (2, 1, 10.0),
                (3, 2, 20.0),
                (1, 3, 30.0),
            ],
        )
        .unwrap()
    }

    fn all_kinds() -> [ConstraintKind; 4] {
        [
            ConstraintKind::Bilateral,
            ConstraintKind::Conservative,
            ConstraintKind::Rerouting,
            ConstraintKind::Nonconservative,
        ]
    }

    fn random_network(rng: &mut ChaCha8Rng, n: usize) -> LiabilityNetwork {
        let mut m = DMatrix::zeros(n, n + 1);
        for i in 0..n {
            m[(i, 0)] = rng.random_range(0.5..2.0);
            for j in 0..n {
                if i != j && rng.random_bool(0.7) {
                    m[(i, j + 1)] = rng.random_range(0.0..2.0);
                }
            }
        }
        LiabilityNetwork::from_matrix(m).unwrap()
    }

    #[test]
    fn identity_is_feasible_for_all_kinds() {
        let base = figure1_left();
        for kind in all_kinds() {
            for fix_society in [false, true] {
                let spec = ConstraintSpec::new(base.clone(), kind, fix_society);
                let report = is_feasible(&base, &spec, FEAS_TOL).unwrap();
                assert!(
                    report.feasible,
                    "{:?} fix={} {:?}",
                    kind, fix_society, report.violations
                );
            }
        }
    }

    #[test]
    fn figure1_bilateral_reduction_feasible() {
        let base = figure1_left();
        // mu_1 = 1, mu_2 = 2, mu_3 = 3 netted off both legs of each pair
        let candidate =
            LiabilityNetwork::from_edges(3, &[(2, 1, 9.0), (3, 2, 18.0), (1, 3, 27.0)]).unwrap();
        let spec = ConstraintSpec::new(base, ConstraintKind::Bilateral, false);
        assert!(is_feasible(&candidate, &spec, FEAS_TOL).unwrap().feasible);
    }

    #[test]
    fn figure2_rerouting_vs_conservative() {
        let base = figure2_left();
        // alpha = 1, beta = -1: blue cycle cleared, red cycle raised by 1
        let candidate = LiabilityNetwork::from_edges(
            3,
            &[
                (2, 3, 1.0),
                (3, 1, 2.0),
                (2, 1, 11.0),
                (3, 2, 21.0),
                (1, 3, 31.0),
            ],
        )
        .unwrap();
        let rerouting = ConstraintSpec::new(base.clone(), ConstraintKind::Rerouting, false);
        assert!(is_feasible(&candidate, &rerouting, FEAS_TOL)
            .unwrap()
            .feasible);
        let conservative = ConstraintSpec::new(base, ConstraintKind::Conservative, false);
        let report = is_feasible(&candidate, &conservative, FEAS_TOL).unwrap();
        assert!(!report.feasible);
        assert!(report.max_violation >= 1.0 - 1e-9);
    }

    #[test]
    fn bilateral_closed_form_on_figure1() {
        let base = figure1_left();
        let spec = ConstraintSpec::new(base, ConstraintKind::Bilateral, false);
        let net = maximal_compression(&spec).unwrap();
        assert_relative_eq!(net.interbank(1, 0), 9.0, epsilon = 1e-12);
        assert_relative_eq!(net.interbank(2, 1), 18.0, epsilon = 1e-12);
        assert_relative_eq!(net.interbank(0, 2), 27.0, epsilon = 1e-12);
        assert_eq!(net.interbank(0, 1), 0.0);
        assert_eq!(net.interbank(1, 2), 0.0);
        assert_eq!(net.interbank(2, 0), 0.0);
        assert_relative_eq!(net.total_notional(), 54.0, epsilon = 1e-9);
    }

    #[test]
    fn conservative_removes_equal_cycle() {
        let base = generate(&NetworkKind::Ring {
            permutation: vec![1, 2, 0],
            societal: 0.5,
        })
        .unwrap();
        let spec = ConstraintSpec::new(base, ConstraintKind::Conservative, false);
        let net = maximal_compression(&spec).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(net.interbank(i, j), 0.0, epsilon = 1e-9);
            }
            assert_relative_eq!(net.societal(i), 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn acyclic_network_is_already_maximal_conservative() {
        // chain 1 -> 2 -> 3 plus societal edges; nothing to net
        let base =
            LiabilityNetwork::from_edges(3, &[(1, 2, 2.0), (2, 3, 1.0), (1, 0, 0.5), (3, 0, 1.5)])
                .unwrap();
        let spec = ConstraintSpec::new(base.clone(), ConstraintKind::Conservative, false);
        let net = maximal_compression(&spec).unwrap();
        assert_relative_eq!((net.matrix() - base.matrix()).amax(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn maximal_output_feasible_and_not_larger() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.random_range(2..=6);
            let base = random_network(&mut rng, n);
            for kind in all_kinds() {
                for fix_society in [false, true] {
                    let spec = ConstraintSpec::new(base.clone(), kind, fix_society);
                    let net = maximal_compression(&spec).unwrap();
                    let report = is_feasible(&net, &spec, FEAS_TOL).unwrap();
                    assert!(report.feasible, "{:?}: {:?}", kind, report.violations);
                    assert!(net.total_notional() <= base.total_notional() + 1e-6);
                    let diff = (net_positions(&net) - net_positions(&base)).amax();
                    assert!(diff <= 1e-6, "{:?}: net moved {}", kind, diff);
                }
            }
        }
    }

    #[test]
    fn bilateral_closed_form_matches_lp() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let n = rng.random_range(2..=5);
            let base = random_network(&mut rng, n);
            let spec = ConstraintSpec::new(base, ConstraintKind::Bilateral, false);
            let closed = maximal_compression(&spec).unwrap();
            let lp = maximal_compression_lp(&spec).unwrap();
            assert_relative_eq!(closed.total_notional(), lp.total_notional(), epsilon = 1e-9);
        }
    }

    #[test]
    fn feasible_candidate_is_projection_fixed_point() {
        let base = figure2_left();
        for kind in all_kinds() {
            let spec = ConstraintSpec::new(base.clone(), kind, false);
            let out = repair(base.matrix(), &spec).unwrap();
            assert_relative_eq!((out.matrix() - base.matrix()).amax(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn repair_moves_candidate_no_farther_than_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.random_range(2..=5);
            let base = random_network(&mut rng, n);
            let spec = ConstraintSpec::new(base.clone(), ConstraintKind::Rerouting, false);
            let mut candidate = base.matrix().clone();
            for v in candidate.iter_mut() {
                *v *= rng.random_range(0.0..2.0);
            }
            let out = repair(&candidate, &spec).unwrap();
            assert!(is_feasible(&out, &spec, FEAS_TOL).unwrap().feasible);
            let dist_out = (out.matrix() - &candidate).norm();
            let dist_base = (base.matrix() - &candidate).norm();
            assert!(dist_out <= dist_base + 1e-6);
        }
    }

    #[test]
    fn set_inclusions_hold_on_random_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..15 {
            let n = rng.random_range(2..=5);
            let base = random_network(&mut rng, n);
            let mut noise = |rng: &mut ChaCha8Rng, b: &LiabilityNetwork| {
                let mut m = b.matrix().clone();
                for v in m.iter_mut() {
                    *v *= rng.random_range(0.0..1.5);
                }
                m
            };

            // bilateral member passes conservative and nonconservative
            let spec_b = ConstraintSpec::new(base.clone(), ConstraintKind::Bilateral, false);
            let member = repair(&noise(&mut rng, &base), &spec_b).unwrap();
            for kind in [ConstraintKind::Conservative, ConstraintKind::Nonconservative] {
                let spec = ConstraintSpec::new(base.clone(), kind, false);
                assert!(is_feasible(&member, &spec, FEAS_TOL).unwrap().feasible);
            }

            // conservative member passes nonconservative
            let spec_c = ConstraintSpec::new(base.clone(), ConstraintKind::Conservative, false);
            let member = repair(&noise(&mut rng, &base), &spec_c).unwrap();
            let spec_n = ConstraintSpec::new(base.clone(), ConstraintKind::Nonconservative, false);
            assert!(is_feasible(&member, &spec_n, FEAS_TOL).unwrap().feasible);

            // rerouting member passes nonconservative
            let spec_r = ConstraintSpec::new(base.clone(), ConstraintKind::Rerouting, false);
            let member = repair(&noise(&mut rng, &base), &spec_r).unwrap();
            assert!(is_feasible(&member, &spec_n, FEAS_TOL).unwrap().feasible);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let base = figure1_left();
        let other = LiabilityNetwork::zeros(2);
        let spec = ConstraintSpec::new(base, ConstraintKind::Rerouting, false);
        assert!(is_feasible(&other, &spec, FEAS_TOL).is_err());
    }
}
