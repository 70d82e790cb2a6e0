//! Network data model: dyad weights, per-dyad covariates, directedness, and
//! the partition types the estimation works with.
//!
//! Node indices are 0-based internally; the `.spm` reader and writer translate
//! from/to the 1-based external convention. Self-loops are never stored and
//! undirected networks keep one entry per unordered dyad (canonically `i < j`).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::models::{CovariateMode, Family, ModelSpec};

/// A weighted network with optional dense per-dyad covariates.
///
/// `weights` holds only nonzero dyads; an absent dyad means weight 0. When
/// `p > 0` every dyad carries exactly `p` covariate values in a dense table
/// indexed by the canonical dyad order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub n: usize,
    pub directed: bool,
    /// Sparse dyad weights in canonical order: `i < j` when undirected,
    /// lexicographic `(i, j)`, `i != j`, when directed.
    pub weights: Vec<(u32, u32, f64)>,
    pub covariates: Option<CovariateTable>,
}

/// Dense covariate storage: `p` values per canonical dyad.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub p: usize,
    pub data: Vec<f64>,
}

/// One broken `Network` invariant, naming the dyad or field at fault.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SelfLoop { i: usize },
    IndexOutOfRange { i: usize, j: usize },
    NonFiniteWeight { i: usize, j: usize },
    AsymmetricWeight { i: usize, j: usize, w_ij: f64, w_ji: f64 },
    DuplicateDyad { i: usize, j: usize },
    CovariateArity { expected: usize, got: usize },
    NonFiniteCovariate { dyad_index: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::SelfLoop { i } => write!(f, "self-loop stored on node {i}"),
            Violation::IndexOutOfRange { i, j } => {
                write!(f, "dyad ({i}, {j}) outside node range")
            }
            Violation::NonFiniteWeight { i, j } => {
                write!(f, "non-finite weight on dyad ({i}, {j})")
            }
            Violation::AsymmetricWeight { i, j, w_ij, w_ji } => {
                write!(f, "undirected dyad ({i}, {j}) stored asymmetrically: {w_ij} vs {w_ji}")
            }
            Violation::DuplicateDyad { i, j } => write!(f, "dyad ({i}, {j}) stored twice"),
            Violation::CovariateArity { expected, got } => {
                write!(f, "covariate table holds {got} values, expected {expected}")
            }
            Violation::NonFiniteCovariate { dyad_index } => {
                write!(f, "non-finite covariate at dyad index {dyad_index}")
            }
        }
    }
}

impl Network {
    /// Builds a network from raw dyad entries, canonicalizing storage.
    ///
    /// For undirected networks a dyad may be given in either orientation (or
    /// both, with identical values). Self-loops and contradictory duplicates
    /// are rejected. `covariates`, when given, must supply one row per raw
    /// entry, all of the same arity `p >= 1`.
    pub fn from_entries(
        n: usize,
        directed: bool,
        entries: &[(usize, usize, f64)],
        covariates: Option<&[Vec<f64>]>,
    ) -> Result<Network> {
        let p = match covariates {
            Some(rows) => {
                if rows.len() != entries.len() {
                    return Err(Error::DimensionMismatch {
                        what: "covariate rows",
                        expected: entries.len(),
                        got: rows.len(),
                    });
                }
                let p = rows.first().map_or(0, |r| r.len());
                if p == 0 {
                    return Err(Error::InvalidParameters(
                        "covariate rows must have arity >= 1".into(),
                    ));
                }
                for r in rows {
                    if r.len() != p {
                        return Err(Error::DimensionMismatch {
                            what: "covariate arity",
                            expected: p,
                            got: r.len(),
                        });
                    }
                }
                p
            }
            None => 0,
        };

        let n_dyads = dyad_count(n, directed);
        let mut weight_at: Vec<Option<f64>> = vec![None; n_dyads];
        let mut cov_data = if p > 0 { vec![0.0; n_dyads * p] } else { Vec::new() };
        let mut cov_seen = vec![false; if p > 0 { n_dyads } else { 0 }];

        for (k, &(i, j, w)) in entries.iter().enumerate() {
            if i == j {
                return Err(Error::InvalidParameters(format!(
                    "self-loop on node {i} is not representable"
                )));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidParameters(format!(
                    "dyad ({i}, {j}) outside node range 0..{n}"
                )));
            }
            let idx = dyad_index(n, directed, i, j);
            match weight_at[idx] {
                None => weight_at[idx] = Some(w),
                Some(prev) if prev == w => {}
                Some(_) => {
                    return Err(Error::ContradictoryDuplicate { line: k + 1, i, j });
                }
            }
            if p > 0 {
                let row = &covariates.unwrap()[k];
                if cov_seen[idx] {
                    if cov_data[idx * p..(idx + 1) * p] != row[..] {
                        return Err(Error::ContradictoryDuplicate { line: k + 1, i, j });
                    }
                } else {
                    cov_data[idx * p..(idx + 1) * p].copy_from_slice(row);
                    cov_seen[idx] = true;
                }
            }
        }

        if p > 0 {
            if let Some(idx) = cov_seen.iter().position(|s| !s) {
                let (i, j) = dyad_from_index(n, directed, idx);
                return Err(Error::MissingDyad { i, j });
            }
        }

        let mut weights = Vec::new();
        for (idx, w) in weight_at.iter().enumerate() {
            if let Some(w) = *w {
                if w != 0.0 {
                    let (i, j) = dyad_from_index(n, directed, idx);
                    weights.push((i as u32, j as u32, w));
                }
            }
        }

        Ok(Network {
            n,
            directed,
            weights,
            covariates: if p > 0 {
                Some(CovariateTable { p, data: cov_data })
            } else {
                None
            },
        })
    }

    /// Covariate dimension (0 when the network carries none).
    pub fn p(&self) -> usize {
        self.covariates.as_ref().map_or(0, |c| c.p)
    }

    /// Number of modeled dyads: `n(n-1)` directed, `n(n-1)/2` undirected.
    pub fn dyad_count(&self) -> usize {
        dyad_count(self.n, self.directed)
    }

    /// Covariate vector of a dyad, canonicalized for undirected networks.
    pub fn covariate(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.covariates.as_ref().map(|c| {
            let idx = dyad_index(self.n, self.directed, i, j);
            &c.data[idx * c.p..(idx + 1) * c.p]
        })
    }

    /// Weight of a dyad (0 when absent). Linear scan; meant for small lookups,
    /// the fitting paths iterate `weights` directly.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if self.directed || i < j { (i, j) } else { (j, i) };
        self.weights
            .iter()
            .find(|&&(x, y, _)| (x as usize, y as usize) == (a, b))
            .map_or(0.0, |&(_, _, w)| w)
    }

    /// Iterates all canonical dyads `(i, j)` in index order.
    pub fn all_dyads(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        dyad_iter(self.n, self.directed)
    }

    /// Checks every `Network` invariant, returning diagnostics instead of failing.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = std::collections::HashMap::new();
        for &(i, j, w) in &self.weights {
            let (i, j) = (i as usize, j as usize);
            if i == j {
                out.push(Violation::SelfLoop { i });
                continue;
            }
            if i >= self.n || j >= self.n {
                out.push(Violation::IndexOutOfRange { i, j });
                continue;
            }
            if !w.is_finite() {
                out.push(Violation::NonFiniteWeight { i, j });
            }
            if !self.directed {
                // both orientations may be stored; values must agree
                if let Some(&w_ji) = seen.get(&(j, i)) {
                    if w_ji != w {
                        out.push(Violation::AsymmetricWeight {
                            i: j,
                            j: i,
                            w_ij: w_ji,
                            w_ji: w,
                        });
                    }
                }
            }
            if seen.insert((i, j), w).is_some() {
                out.push(Violation::DuplicateDyad { i, j });
            }
        }
        if let Some(cov) = &self.covariates {
            let expected = self.dyad_count() * cov.p;
            if cov.data.len() != expected {
                out.push(Violation::CovariateArity {
                    expected,
                    got: cov.data.len(),
                });
            } else if let Some(k) = cov.data.iter().position(|v| !v.is_finite()) {
                out.push(Violation::NonFiniteCovariate { dyad_index: k / cov.p });
            }
        }
        out
    }
}

/// All canonical dyads of an `n`-node network in index order: lexicographic
/// ordered pairs when directed, `i < j` pairs otherwise.
pub(crate) fn dyad_iter(n: usize, directed: bool) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| {
        let before = 0..if directed { i } else { 0 };
        before.chain(i + 1..n).map(move |j| (i, j))
    })
}

/// Number of ordered (directed) or unordered (undirected) dyads on `n` nodes.
pub fn dyad_count(n: usize, directed: bool) -> usize {
    if directed {
        n * (n - 1)
    } else {
        n * (n - 1) / 2
    }
}

/// Canonical dense index of a dyad.
pub(crate) fn dyad_index(n: usize, directed: bool, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < n && j < n);
    if directed {
        i * (n - 1) + if j > i { j - 1 } else { j }
    } else {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }
}

/// Inverse of [`dyad_index`].
pub(crate) fn dyad_from_index(n: usize, directed: bool, idx: usize) -> (usize, usize) {
    if directed {
        let i = idx / (n - 1);
        let r = idx % (n - 1);
        let j = if r >= i { r + 1 } else { r };
        (i, j)
    } else {
        let mut i = 0;
        let mut base = 0;
        while base + (n - i - 1) <= idx {
            base += n - i - 1;
            i += 1;
        }
        (i, i + 1 + (idx - base))
    }
}

/// A hard node partition into `q` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardPartition {
    pub labels: Vec<usize>,
    pub q: usize,
    /// Set when some group in `0..q` has no member (or when the producing
    /// algorithm could not distinguish nodes at all).
    pub degenerate: bool,
}

impl HardPartition {
    pub fn new(labels: Vec<usize>, q: usize) -> HardPartition {
        assert!(labels.iter().all(|&l| l < q), "label out of range");
        let mut used = vec![false; q];
        for &l in &labels {
            used[l] = true;
        }
        let degenerate = !used.iter().all(|&u| u);
        HardPartition { labels, q, degenerate }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn group_members(&self, g: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == g).collect()
    }
}

/// Variational membership matrix tau (`n x q`, rows on the simplex).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    tau: DMatrix<f64>,
}

impl SoftAssignment {
    /// Wraps a matrix after checking the simplex invariants.
    pub fn from_matrix(tau: DMatrix<f64>) -> Result<SoftAssignment> {
        for i in 0..tau.nrows() {
            let mut s = 0.0;
            for q in 0..tau.ncols() {
                let v = tau[(i, q)];
                if !(v >= 0.0) {
                    return Err(Error::InvalidParameters(format!(
                        "tau[{i}][{q}] = {v} is negative or NaN"
                    )));
                }
                s += v;
            }
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameters(format!(
                    "tau row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(SoftAssignment { tau })
    }

    /// The only valid assignment when `q == 1`: an all-ones column.
    pub fn trivial(n: usize) -> SoftAssignment {
        SoftAssignment { tau: DMatrix::from_element(n, 1, 1.0) }
    }

    pub fn uniform(n: usize, q: usize) -> SoftAssignment {
        SoftAssignment { tau: DMatrix::from_element(n, q, 1.0 / q as f64) }
    }

    /// Softens a hard partition: the assigned group gets `1 - (q-1) eps`,
    /// every other group `eps`.
    pub fn from_hard(hard: &HardPartition, eps: f64) -> SoftAssignment {
        let q = hard.q;
        let mut tau = DMatrix::from_element(hard.n(), q, eps);
        for (i, &l) in hard.labels.iter().enumerate() {
            tau[(i, l)] = 1.0 - (q as f64 - 1.0) * eps;
        }
        SoftAssignment { tau }
    }

    /// One-hot embedding of a hard partition.
    pub fn one_hot(hard: &HardPartition) -> SoftAssignment {
        let mut tau = DMatrix::zeros(hard.n(), hard.q);
        for (i, &l) in hard.labels.iter().enumerate() {
            tau[(i, l)] = 1.0;
        }
        SoftAssignment { tau }
    }

    pub fn n(&self) -> usize {
        self.tau.nrows()
    }

    pub fn q(&self) -> usize {
        self.tau.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.tau
    }

    /// Maximum-a-posteriori labels; ties break toward the lowest group index.
    pub fn harden(&self) -> HardPartition {
        let labels = (0..self.n())
            .map(|i| {
                let mut best = 0;
                let mut best_v = self.tau[(i, 0)];
                for q in 1..self.q() {
                    if self.tau[(i, q)] > best_v {
                        best_v = self.tau[(i, q)];
                        best = q;
                    }
                }
                best
            })
            .collect();
        HardPartition::new(labels, self.q())
    }

    /// Clamps entries below `floor` and renormalizes each row.
    pub fn floor_and_renormalize(&mut self, floor: f64) {
        for i in 0..self.tau.nrows() {
            let mut s = 0.0;
            for q in 0..self.tau.ncols() {
                let v = self.tau[(i, q)].max(floor);
                self.tau[(i, q)] = v;
                s += v;
            }
            for q in 0..self.tau.ncols() {
                self.tau[(i, q)] /= s;
            }
        }
    }

    pub(crate) fn from_matrix_unchecked(tau: DMatrix<f64>) -> SoftAssignment {
        SoftAssignment { tau }
    }
}

/// Removes a fitted covariate effect, producing a covariate-free network for
/// spectral initialization. Poisson family divides by `exp(beta' y)`, the
/// Gaussian family subtracts `beta' y`, the Bernoulli family divides by
/// `logistic(beta' y)` (values may exceed 1; the result is only used as a
/// similarity input).
pub fn residual_network(network: &Network, beta: &[f64], spec: &ModelSpec) -> Result<Network> {
    let p = network.p();
    if spec.covariates == CovariateMode::None || p == 0 {
        return Err(Error::MissingCovariates {
            model: spec.cli_name().to_string(),
        });
    }
    if beta.len() != p {
        return Err(Error::DimensionMismatch {
            what: "beta length",
            expected: p,
            got: beta.len(),
        });
    }

    let mut weights = Vec::new();
    // covariates force every dyad to carry a value, so walk them all: for the
    // Gaussian family a zero weight still leaves a nonzero residual
    let mut stored = network.weights.iter().peekable();
    for (idx, (i, j)) in network.all_dyads().enumerate() {
        let w = match stored.peek() {
            Some(&&(a, b, w))
                if dyad_index(network.n, network.directed, a as usize, b as usize) == idx =>
            {
                stored.next();
                w
            }
            _ => 0.0,
        };
        let y = network.covariate(i, j).unwrap();
        let eta: f64 = beta.iter().zip(y).map(|(b, v)| b * v).sum();
        let r = match spec.family {
            Family::Poisson => w / eta.exp(),
            Family::Gaussian => w - eta,
            Family::Bernoulli => w / crate::models::logistic(eta),
        };
        if r != 0.0 {
            weights.push((i as u32, j as u32, r));
        }
    }

    Ok(Network {
        n: network.n,
        directed: network.directed,
        weights,
        covariates: None,
    })
}

/// Chance-corrected agreement between two labelings of the same nodes.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut row = vec![0u64; ka];
    let mut col = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        row[x] += 1;
        col[y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.iter().map(|&v| c2(v)).sum();
    let sum_row: f64 = row.iter().map(|&v| c2(v)).sum();
    let sum_col: f64 = col.iter().map(|&v| c2(v)).sum();
    let expected = sum_row * sum_col / c2(n as u64);
    let max = 0.5 * (sum_row + sum_col);
    if (max - expected).abs() < 1e-300 {
        return 1.0;
    }
    (sum_cells - expected) / (max - expected)
}
