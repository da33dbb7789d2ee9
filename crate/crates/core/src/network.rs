//! Core network data model: nominal liability matrices, validation,
//! generators for the standard test topologies, and file I/O.
//!
//! A network over `n` banks is an `n x (n+1)` nonnegative matrix. Column 0
//! is the societal node (external creditors); column `j >= 1` is bank `j`.
//! Society never owes anything, so there is no row for it.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Nominal obligations of `n` banks, including the societal column.
///
/// Immutable after construction; all accessors use 0-based bank indices.
/// In files, banks are numbered `1..=n` and node `0` is society.
#[derive(Debug, Clone, PartialEq)]
pub struct LiabilityNetwork {
    matrix: DMatrix<f64>, // n rows, n+1 columns, column 0 = society
}

impl LiabilityNetwork {
    /// Builds a network from an `n x (n+1)` matrix, rejecting negative
    /// entries and self-obligations.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n + 1 {
            return Err(Error::Dimension(format!(
                "expected {} columns for {} banks, got {}",
                n + 1,
                n,
                matrix.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..=n {
                let v = matrix[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!(
                        "liability from bank {} to node {} is {}, must be finite and >= 0",
                        i + 1,
                        j,
                        v
                    )));
                }
            }
            if matrix[(i, i + 1)] != 0.0 {
                return Err(Error::Validation(format!(
                    "bank {} has a self-obligation of {}",
                    i + 1,
                    matrix[(i, i + 1)]
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// The empty network on `n` banks.
    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n, n + 1),
        }
    }

    /// Builds a network from `(from, to, amount)` edges using file node ids
    /// (`from` in `1..=n`, `to` in `0..=n`).
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n + 1);
        for &(from, to, amount) in edges {
            if from == 0 || from > n {
                return Err(Error::Validation(format!(
                    "unknown debtor node id {} (banks are 1..={})",
                    from, n
                )));
            }
            if to > n {
                return Err(Error::Validation(format!(
                    "unknown creditor node id {} (nodes are 0..={})",
                    to, n
                )));
            }
            m[(from - 1, to)] += amount;
        }
        Self::from_matrix(m)
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Full liability matrix, `n x (n+1)` with column 0 the societal node.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Interbank obligation from bank `i` to bank `j` (0-based).
    pub fn interbank(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j + 1)]
    }

    /// Obligation of bank `i` to society.
    pub fn societal(&self, i: usize) -> f64 {
        self.matrix[(i, 0)]
    }

    /// The `n x n` interbank block (societal column dropped).
    pub fn interbank_block(&self) -> DMatrix<f64> {
        self.matrix.columns(1, self.n()).into_owned()
    }

    /// The societal column as a vector.
    pub fn societal_column(&self) -> DVector<f64> {
        self.matrix.column(0).into_owned()
    }

    /// Total obligations per bank (row sums including society).
    pub fn total_obligations(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.matrix.row_iter().map(|r| r.sum()))
    }

    /// Interbank receivables per bank (column sums of the interbank block).
    pub fn interbank_receivables(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_iterator(n, (0..n).map(|j| self.matrix.column(j + 1).sum()))
    }

    /// Sum of all entries, societal column included.
    pub fn total_notional(&self) -> f64 {
        self.matrix.sum()
    }

    /// Replaces entries, revalidating the result.
    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(matrix)
    }

    /// Loads a network from a file in the given format.
    pub fn load(path: &Path, format: FileFormat) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match format {
            FileFormat::EdgeListCsv => Self::from_csv_str(&text),
            FileFormat::DenseJson => Self::from_json_str(&text),
        }
    }

    /// Saves the network in the given format.
    pub fn save(&self, path: &Path, format: FileFormat) -> Result<()> {
        let text = match format {
            FileFormat::EdgeListCsv => self.to_csv_string(),
            FileFormat::DenseJson => self.to_json_string(),
        };
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Parses the edge-list CSV format (`from,to,amount` with node 0 the
    /// societal node; a `# banks=n` comment pins the bank count).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut declared_n = None;
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(eq) = rest.trim().strip_prefix("banks=") {
                    declared_n = Some(eq.trim().parse::<usize>().map_err(|e| {
                        Error::Parse(format!("bad banks= comment {:?}: {}", rest.trim(), e))
                    })?);
                }
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        let expected = ["from", "to", "amount"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse(format!(
                "expected header from,to,amount, got {:?}",
                headers
            )));
        }
        let mut edges = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if record.len() != 3 {
                return Err(Error::Parse(format!("malformed row {:?}", record)));
            }
            let from: usize = record[0]
                .parse()
                .map_err(|e| Error::Parse(format!("bad debtor id {:?}: {}", &record[0], e)))?;
            let to: usize = record[1]
                .parse()
                .map_err(|e| Error::Parse(format!("bad creditor id {:?}: {}", &record[1], e)))?;
            let amount: f64 = record[2]
                .parse()
                .map_err(|e| Error::Parse(format!("bad amount {:?}: {}", &record[2], e)))?;
            edges.push((from, to, amount));
        }
        let n = declared_n.unwrap_or_else(|| {
            edges
                .iter()
                .map(|&(from, to, _)| from.max(to))
                .max()
                .unwrap_or(0)
        });
        Self::from_edges(n, &edges)
    }

    /// Writes the edge-list CSV format. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn to_csv_string(&self) -> String {
        let n = self.n();
        let mut out = format!("# banks={}\nfrom,to,amount\n", n);
        for i in 0..n {
            for j in 0..=n {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    out.push_str(&format!("{},{},{}\n", i + 1, j, v));
                }
            }
        }
        out
    }

    /// Parses the dense JSON format (`{"n": ..., "liabilities": [[...]]}`).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let dense: DenseJson =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if dense.liabilities.len() != dense.n {
            return Err(Error::Parse(format!(
                "expected {} rows, got {}",
                dense.n,
                dense.liabilities.len()
            )));
        }
        let mut m = DMatrix::zeros(dense.n, dense.n + 1);
        for (i, row) in dense.liabilities.iter().enumerate() {
            if row.len() != dense.n + 1 {
                return Err(Error::Parse(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    row.len(),
                    dense.n + 1
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Self::from_matrix(m)
    }

    /// Writes the dense JSON format.
    pub fn to_json_string(&self) -> String {
        let n = self.n();
        let dense = DenseJson {
            n,
            liabilities: (0..n)
                .map(|i| (0..=n).map(|j| self.matrix[(i, j)]).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&dense).expect("dense matrix serializes")
    }
}

/// On-disk formats for liability networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    EdgeListCsv,
    DenseJson,
}

impl FileFormat {
    /// Guesses the format from a file extension (`.json` is dense JSON,
    /// anything else the edge-list CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => FileFormat::DenseJson,
            _ => FileFormat::EdgeListCsv,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DenseJson {
    n: usize,
    liabilities: Vec<Vec<f64>>,
}

/// Total obligations and relative liabilities of a network.
///
/// `pi` rows sum to 1 where the bank owes anything, and are all zero for
/// banks with no obligations (those banks trivially pay 0 in full).
#[derive(Debug, Clone)]
pub struct RelativeLiabilities {
    /// Total obligations per bank, societal column included.
    pub pbar: DVector<f64>,
    /// Relative liabilities, `n x (n+1)`, column 0 societal.
    pub pi: DMatrix<f64>,
}

impl RelativeLiabilities {
    /// The `n x n` interbank block of the relative liability matrix.
    pub fn interbank_block(&self) -> DMatrix<f64> {
        let n = self.pi.nrows();
        self.pi.columns(1, n).into_owned()
    }
}

/// Computes total obligations and relative liabilities.
pub fn relative_liabilities(network: &LiabilityNetwork) -> RelativeLiabilities {
    let n = network.n();
    let pbar = network.total_obligations();
    let mut pi = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        if pbar[i] > 0.0 {
            for j in 0..=n {
                pi[(i, j)] = network.matrix()[(i, j)] / pbar[i];
            }
        }
    }
    RelativeLiabilities { pbar, pi }
}

/// Net liability position per bank: interbank obligations minus interbank
/// receivables, plus the societal obligation. Every compression set keeps
/// this vector fixed.
pub fn net_positions(network: &LiabilityNetwork) -> DVector<f64> {
    let n = network.n();
    let mut net = DVector::zeros(n);
    for i in 0..n {
        let mut v = network.societal(i);
        for j in 0..n {
            v += network.interbank(i, j) - network.interbank(j, i);
        }
        net[i] = v;
    }
    net
}

/// Parameters of the generic symmetric three-bank family: societal
/// obligation `y` per bank, cycle weights `lambda` (1->2->3->1) and `xi`
/// (1->3->2->1), and endowment multipliers `x` with `x[0] <= x[1] <= x[2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeBankParams {
    pub x: [f64; 3],
    pub y: f64,
    pub lambda: f64,
    pub xi: f64,
}

impl ThreeBankParams {
    pub fn new(x: [f64; 3], y: f64, lambda: f64, xi: f64) -> Result<Self> {
        if !(x[0] <= x[1] && x[1] <= x[2]) {
            return Err(Error::InvalidInput(format!(
                "endowment multipliers must be sorted ascending, got {:?}",
                x
            )));
        }
        if y < 0.0 || lambda < 0.0 || xi < 0.0 {
            return Err(Error::InvalidInput(format!(
                "y, lambda, xi must be nonnegative, got y={} lambda={} xi={}",
                y, lambda, xi
            )));
        }
        Ok(Self { x, y, lambda, xi })
    }
}

/// Standard generated topologies.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkKind {
    /// `L_ij = 1/(n-1)` for all `i != j`, societal obligation `y` per bank.
    CompleteRegular { n: usize, societal: f64 },
    /// Unit-weight ring along a permutation (0-based, no fixed points).
    Ring {
        permutation: Vec<usize>,
        societal: f64,
    },
    /// No interbank obligations, societal obligation `y` per bank.
    FullyCompressed { n: usize, societal: f64 },
    /// The symmetric three-bank family.
    ThreeBank(ThreeBankParams),
}

/// Builds one of the standard topologies.
pub fn generate(kind: &NetworkKind) -> Result<LiabilityNetwork> {
    match kind {
        NetworkKind::CompleteRegular { n, societal } => {
            check_nonneg(*societal)?;
            let n = *n;
            if n < 2 {
                return Err(Error::InvalidInput(
                    "complete-regular network needs at least 2 banks".into(),
                ));
            }
            let mut m = DMatrix::zeros(n, n + 1);
            let w = 1.0 / (n as f64 - 1.0);
            for i in 0..n {
                m[(i, 0)] = *societal;
                for j in 0..n {
                    if i != j {
                        m[(i, j + 1)] = w;
                    }
                }
            }
            LiabilityNetwork::from_matrix(m)
        }
        NetworkKind::Ring {
            permutation,
            societal,
        } => {
            check_nonneg(*societal)?;
            let n = permutation.len();
            let mut seen = vec![false; n];
            for (i, &p) in permutation.iter().enumerate() {
                if p >= n || seen[p] || p == i {
                    return Err(Error::InvalidInput(format!(
                        "invalid permutation {:?}: must be a derangement of 0..{}",
                        permutation, n
                    )));
                }
                seen[p] = true;
            }
            let mut m = DMatrix::zeros(n, n + 1);
            for (i, &p) in permutation.iter().enumerate() {
                m[(i, 0)] = *societal;
                m[(i, p + 1)] = 1.0;
            }
            LiabilityNetwork::from_matrix(m)
        }
        NetworkKind::FullyCompressed { n, societal } => {
            check_nonneg(*societal)?;
            let mut m = DMatrix::zeros(*n, *n + 1);
            for i in 0..*n {
                m[(i, 0)] = *societal;
            }
            LiabilityNetwork::from_matrix(m)
        }
        NetworkKind::ThreeBank(p) => {
            let mut m = DMatrix::zeros(3, 4);
            for i in 0..3 {
                m[(i, 0)] = p.y;
            }
            // cycle 1->2->3->1 carries lambda, cycle 1->3->2->1 carries xi
            m[(0, 2)] = p.lambda;
            m[(1, 3)] = p.lambda;
            m[(2, 1)] = p.lambda;
            m[(0, 3)] = p.xi;
            m[(2, 2)] = p.xi;
            m[(1, 1)] = p.xi;
            LiabilityNetwork::from_matrix(m)
        }
    }
}

fn check_nonneg(v: f64) -> Result<()> {
    if v < 0.0 {
        return Err(Error::InvalidInput(format!(
            "parameter must be nonnegative, got {}",
            v
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn csv_edges_transcribe_directly() {
        let text = "from,to,amount\n1,0,1.0\n1,2,1.0\n";
        let net = LiabilityNetwork::from_csv_str(text).unwrap();
        assert_eq!(net.n(), 2);
        assert_eq!(net.societal(0), 1.0);
        assert_eq!(net.interbank(0, 1), 1.0);
        assert_eq!(net.interbank(1, 0), 0.0);
        assert_eq!(net.societal(1), 0.0);
    }

    #[test]
    fn self_loop_rejected() {
        let text = "from,to,amount\n1,1,5.0\n";
        assert!(matches!(
            LiabilityNetwork::from_csv_str(text),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn negative_amount_rejected() {
        let text = "from,to,amount\n2,3,-1.0\n";
        assert!(matches!(
            LiabilityNetwork::from_csv_str(text),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn unknown_node_id_rejected() {
        assert!(LiabilityNetwork::from_edges(2, &[(3, 0, 1.0)]).is_err());
        assert!(LiabilityNetwork::from_edges(2, &[(0, 1, 1.0)]).is_err());
        assert!(LiabilityNetwork::from_edges(2, &[(1, 3, 1.0)]).is_err());
    }

    #[test]
    fn relative_liabilities_basic() {
        let net = LiabilityNetwork::from_edges(2, &[(1, 0, 1.0), (1, 2, 1.0)]).unwrap();
        let rel = relative_liabilities(&net);
        assert_eq!(rel.pbar[0], 2.0);
        assert_eq!(rel.pi[(0, 0)], 0.5);
        assert_eq!(rel.pi[(0, 2)], 0.5);
        // bank 2 owes nothing: zero row convention
        assert_eq!(rel.pbar[1], 0.0);
        assert!(rel.pi.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relative_liabilities_ring() {
        let net = generate(&NetworkKind::Ring {
            permutation: vec![1, 2, 0],
            societal: 1.0,
        })
        .unwrap();
        let rel = relative_liabilities(&net);
        for i in 0..3 {
            assert_eq!(rel.pbar[i], 2.0);
            assert_eq!(rel.pi[(i, 0)], 0.5);
        }
    }

    #[test]
    fn net_positions_examples() {
        // symmetric interbank network, zero societal column
        let net =
            LiabilityNetwork::from_edges(3, &[(1, 2, 2.0), (2, 1, 2.0), (2, 3, 5.0), (3, 2, 5.0)])
                .unwrap();
        assert!(net_positions(&net).iter().all(|&v| v == 0.0));

        let net = LiabilityNetwork::from_edges(2, &[(1, 2, 1.0), (2, 1, 10.0)]).unwrap();
        let net_pos = net_positions(&net);
        assert_eq!(net_pos[0], -9.0);
        assert_eq!(net_pos[1], 9.0);
    }

    #[test]
    fn net_positions_sum_to_societal_total() {
        let net = LiabilityNetwork::from_edges(
            3,
            &[(1, 2, 3.0), (2, 3, 1.5), (3, 1, 0.25), (1, 0, 2.0), (3, 0, 4.0)],
        )
        .unwrap();
        let total: f64 = net_positions(&net).sum();
        assert_relative_eq!(total, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn generate_fully_compressed() {
        let net = generate(&NetworkKind::FullyCompressed {
            n: 3,
            societal: 1.0,
        })
        .unwrap();
        for i in 0..3 {
            assert_eq!(net.societal(i), 1.0);
            for j in 0..3 {
                assert_eq!(net.interbank(i, j), 0.0);
            }
        }
    }

    #[test]
    fn generate_ring_123() {
        let net = generate(&NetworkKind::Ring {
            permutation: vec![1, 2, 0],
            societal: 0.5,
        })
        .unwrap();
        assert_eq!(net.interbank(0, 1), 1.0);
        assert_eq!(net.interbank(1, 2), 1.0);
        assert_eq!(net.interbank(2, 0), 1.0);
        assert_eq!(net.interbank(1, 0), 0.0);
    }

    #[test]
    fn three_bank_half_half_is_complete() {
        let p = ThreeBankParams::new([1.0, 2.0, 3.0], 1.0, 0.5, 0.5).unwrap();
        let net = generate(&NetworkKind::ThreeBank(p)).unwrap();
        let complete = generate(&NetworkKind::CompleteRegular {
            n: 3,
            societal: 1.0,
        })
        .unwrap();
        assert_eq!(net.matrix(), complete.matrix());
    }

    #[test]
    fn complete_regular_rows_sum() {
        for n in [2usize, 3, 7, 10] {
            let net = generate(&NetworkKind::CompleteRegular { n, societal: 0.7 }).unwrap();
            for v in net.total_obligations().iter() {
                assert_relative_eq!(*v, 1.7, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn invalid_permutation_rejected() {
        assert!(generate(&NetworkKind::Ring {
            permutation: vec![0, 1, 2],
            societal: 0.0
        })
        .is_err());
        assert!(generate(&NetworkKind::Ring {
            permutation: vec![1, 1, 0],
            societal: 0.0
        })
        .is_err());
    }

    #[test]
    fn isolated_last_bank_survives_round_trip() {
        let net = LiabilityNetwork::from_edges(3, &[(1, 2, 1.25)]).unwrap();
        let back = LiabilityNetwork::from_csv_str(&net.to_csv_string()).unwrap();
        assert_eq!(net, back);
    }
}
