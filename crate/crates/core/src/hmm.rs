//! Hidden Markov model representation.
//!
//! Conventions: `T[i][j] = P[h_{t+1} = i | h_t = j]` and
//! `O[i][j] = P[y_t = i | h_t = j]`, so columns are distributions. Output
//! strings map to row indices big-endian in base `m` (first symbol most
//! significant); see [`crate::moments::IndexMap`].

use std::borrow::Cow;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rng;
use crate::tensor::khatri_rao;

/// Column-sum tolerance for `T` and `O`.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance on `‖T·pi − pi‖₁`.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Default power-iteration cap for [`Hmm::stationary`].
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Default cap on `m^tau`, the number of rows of a likelihood matrix.
pub const DEFAULT_ROW_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    t: Matrix,
    o: Matrix,
    pi: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HmmJson {
    n: usize,
    m: usize,
    #[serde(rename = "T")]
    t: Vec<Vec<f64>>,
    #[serde(rename = "O")]
    o: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi: Option<Vec<f64>>,
}

/// One way an [`Hmm`] fails its invariants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    ColumnSum { matrix: &'static str, column: usize, residual: f64 },
    NegativeEntry { matrix: &'static str, row: usize, column: usize, value: f64 },
    EntryAboveOne { matrix: &'static str, row: usize, column: usize, value: f64 },
    NonFinite { matrix: &'static str, row: usize, column: usize },
    NotStationary { residual: f64 },
    StationarySum { residual: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::ColumnSum { matrix, column, residual } => {
                write!(f, "{matrix} column {column} sums off by {residual:.3e}")
            }
            Violation::NegativeEntry { matrix, row, column, value } => {
                write!(f, "negative entry {matrix}[{row}][{column}] = {value}")
            }
            Violation::EntryAboveOne { matrix, row, column, value } => {
                write!(f, "entry above one {matrix}[{row}][{column}] = {value}")
            }
            Violation::NonFinite { matrix, row, column } => {
                write!(f, "non-finite entry {matrix}[{row}][{column}]")
            }
            Violation::NotStationary { residual } => write!(f, "pi not stationary, residual {residual:.3e}"),
            Violation::StationarySum { residual } => write!(f, "pi sums off by {residual:.3e}"),
        }
    }
}

fn check_stochastic(name: &'static str, m: &Matrix, out: &mut Vec<Violation>) {
    for (j, col) in m.column_iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFinite { matrix: name, row: i, column: j });
            } else if v < 0.0 {
                out.push(Violation::NegativeEntry { matrix: name, row: i, column: j, value: v });
            } else if v > 1.0 + STOCHASTIC_TOL {
                out.push(Violation::EntryAboveOne { matrix: name, row: i, column: j, value: v });
            }
        }
        let residual = 1.0 - col.sum();
        if residual.abs() > STOCHASTIC_TOL {
            out.push(Violation::ColumnSum { matrix: name, column: j, residual });
        }
    }
}

/// A window `y_{-tau} .. y_{tau}` of `2·tau + 1` output symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationWindow {
    pub symbols: Vec<usize>,
}

impl ObservationWindow {
    pub fn tau(&self) -> usize {
        self.symbols.len() / 2
    }

    /// The symbol `y_0`.
    pub fn present(&self) -> usize {
        self.symbols[self.tau()]
    }

    /// `y_1 .. y_tau` in time order.
    pub fn future(&self) -> &[usize] {
        &self.symbols[self.tau() + 1..]
    }

    /// `y_{-1}, y_{-2}, .., y_{-tau}`: most recent first.
    pub fn past(&self) -> impl Iterator<Item = usize> + '_ {
        self.symbols[..self.tau()].iter().rev().copied()
    }
}

/// The factors `A`, `B`, `C` of the window moment tensor.
#[derive(Debug, Clone)]
pub struct LikelihoodFactors {
    pub tau: usize,
    /// `A[L(l_1..l_tau)][i] = P[y_1..y_tau = l | h_0 = i]`.
    pub a: Matrix,
    /// `B[L(l_{-1}..l_{-tau})][i] = P[y_{-1}..y_{-tau} = l | h_0 = i]`.
    pub b: Matrix,
    /// `C[l][i] = P[y_0 = l, h_0 = i]`.
    pub c: Matrix,
}

impl Hmm {
    /// Builds an HMM from `T` (n×n) and `O` (m×n). Only shapes are checked;
    /// use [`Hmm::validate`] for the probabilistic invariants.
    pub fn new(t: Matrix, o: Matrix) -> Result<Self> {
        if t.nrows() != t.ncols() || t.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "T must be square and nonempty, got {}x{}",
                t.nrows(),
                t.ncols()
            )));
        }
        if o.ncols() != t.ncols() || o.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "O must be m x {}, got {}x{}",
                t.ncols(),
                o.nrows(),
                o.ncols()
            )));
        }
        Ok(Self { t, o, pi: None })
    }

    /// Attach a known stationary distribution.
    pub fn with_pi(mut self, pi: Vector) -> Result<Self> {
        if pi.len() != self.n() {
            return Err(Error::DimensionMismatch(format!("pi has length {}, expected {}", pi.len(), self.n())));
        }
        self.pi = Some(pi);
        Ok(self)
    }

    /// Compute and attach the stationary distribution.
    pub fn with_stationary(self) -> Result<Self> {
        if self.pi.is_some() {
            return Ok(self);
        }
        let pi = self.stationary()?;
        self.with_pi(pi)
    }

    pub fn n(&self) -> usize {
        self.t.ncols()
    }

    pub fn m(&self) -> usize {
        self.o.nrows()
    }

    pub fn transition(&self) -> &Matrix {
        &self.t
    }

    pub fn observation(&self) -> &Matrix {
        &self.o
    }

    pub fn pi(&self) -> Option<&Vector> {
        self.pi.as_ref()
    }

    /// The attached stationary distribution, or a freshly computed one.
    pub fn stationary_distribution(&self) -> Result<Cow<'_, Vector>> {
        match &self.pi {
            Some(p) => Ok(Cow::Borrowed(p)),
            None => self.stationary().map(Cow::Owned),
        }
    }

    /// Every violated invariant; empty iff the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_stochastic("T", &self.t, &mut out);
        check_stochastic("O", &self.o, &mut out);
        if let Some(pi) = &self.pi {
            let residual = (&self.t * pi - pi).abs().sum();
            if residual > STATIONARY_TOL {
                out.push(Violation::NotStationary { residual });
            }
            let sum_res = 1.0 - pi.sum();
            if sum_res.abs() > STATIONARY_TOL {
                out.push(Violation::StationarySum { residual: sum_res });
            }
            for (i, &v) in pi.iter().enumerate() {
                if v < 0.0 {
                    out.push(Violation::NegativeEntry { matrix: "pi", row: i, column: 0, value: v });
                }
            }
        }
        out
    }

    /// Stationary distribution with the default iteration cap.
    pub fn stationary(&self) -> Result<Vector> {
        stationary_of(&self.t, DEFAULT_MAX_ITER)
    }

    /// Transition matrix of the time-reversed chain.
    pub fn time_reverse(&self, pi: &Vector) -> Result<Matrix> {
        time_reverse(&self.t, pi)
    }

    /// `A^{(tau)}` by the Khatri-Rao recursion, `A^{(1)} = O·T` and
    /// `A^{(t)} = (O ⊙ A^{(t-1)})·T`.
    pub fn likelihood_matrix(&self, tau: usize) -> Result<Matrix> {
        self.likelihood_matrix_capped(tau, DEFAULT_ROW_CAP)
    }

    pub fn likelihood_matrix_capped(&self, tau: usize, row_cap: usize) -> Result<Matrix> {
        likelihood_recursion(&self.t, &self.o, tau, row_cap)
    }

    /// Likelihoods of the past `y_{-1} .. y_{-tau}` given `h_0`, through the
    /// time-reversed chain.
    pub fn reverse_likelihood_matrix(&self, tau: usize) -> Result<Matrix> {
        let pi = self.stationary_distribution()?;
        let rev = time_reverse(&self.t, &pi)?;
        likelihood_recursion(&rev, &self.o, tau, DEFAULT_ROW_CAP)
    }

    /// `C[l][i] = O[l][i]·pi[i]`.
    pub fn joint_factor(&self) -> Result<Matrix> {
        let pi = self.stationary_distribution()?;
        let mut c = self.o.clone();
        for (j, mut col) in c.column_iter_mut().enumerate() {
            col *= pi[j];
        }
        Ok(c)
    }

    pub fn factors(&self, tau: usize) -> Result<LikelihoodFactors> {
        Ok(LikelihoodFactors {
            tau,
            a: self.likelihood_matrix(tau)?,
            b: self.reverse_likelihood_matrix(tau)?,
            c: self.joint_factor()?,
        })
    }

    /// `count` i.i.d. stationary windows of length `2·tau + 1`.
    pub fn sample_windows(&self, tau: usize, count: usize, seed: u64) -> Result<Vec<ObservationWindow>> {
        Ok(self
            .sample_labeled_windows(tau, count, seed)?
            .into_iter()
            .map(|(_, w)| w)
            .collect())
    }

    /// As [`Hmm::sample_windows`], also returning the hidden path of each
    /// window.
    pub fn sample_labeled_windows(
        &self,
        tau: usize,
        count: usize,
        seed: u64,
    ) -> Result<Vec<(Vec<usize>, ObservationWindow)>> {
        if tau == 0 {
            return Err(Error::InvalidSpec("tau must be at least 1".into()));
        }
        let pi = self.stationary_distribution()?;
        let sampler = Sampler::new(self, &pi);
        let len = 2 * tau + 1;
        // Fixed shard boundaries keep the output independent of thread count.
        const SHARD: usize = 1 << 14;
        let shards = count.div_ceil(SHARD);
        let out: Vec<Vec<(Vec<usize>, ObservationWindow)>> = (0..shards)
            .into_par_iter()
            .map(|s| {
                let mut rng = rng::stream(seed, s as u64);
                let here = SHARD.min(count - s * SHARD);
                (0..here).map(|_| sampler.path(len, &mut rng)).collect()
            })
            .collect();
        Ok(out.into_iter().flatten().collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = HmmJson {
            n: self.n(),
            m: self.m(),
            t: linalg::to_rows(&self.t),
            o: linalg::to_rows(&self.o),
            pi: self.pi.as_ref().map(|p| p.iter().copied().collect()),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: HmmJson = serde_json::from_str(s)?;
        let t = linalg::from_rows(&doc.t)?;
        let o = linalg::from_rows(&doc.o)?;
        if t.ncols() != doc.n || o.nrows() != doc.m {
            return Err(Error::DimensionMismatch("declared n/m disagree with matrices".into()));
        }
        let h = Hmm::new(t, o)?;
        match doc.pi {
            Some(p) => h.with_pi(Vector::from_vec(p)),
            None => Ok(h),
        }
    }
}

impl Serialize for Hmm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HmmJson {
            n: self.n(),
            m: self.m(),
            t: linalg::to_rows(&self.t),
            o: linalg::to_rows(&self.o),
            pi: self.pi.as_ref().map(|p| p.iter().copied().collect()),
        }
        .serialize(s)
    }
}

/// Cumulative tables for inverse-CDF sampling.
struct Sampler {
    pi: Vec<f64>,
    t: Vec<Vec<f64>>,
    o: Vec<Vec<f64>>,
}

fn cumulative<'a>(it: impl Iterator<Item = &'a f64>) -> Vec<f64> {
    let mut acc = 0.0;
    it.map(|&p| {
        acc += p.max(0.0);
        acc
    })
    .collect()
}

fn draw(cdf: &[f64], rng: &mut rng::Rng) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

impl Sampler {
    fn new(h: &Hmm, pi: &Vector) -> Self {
        Self {
            pi: cumulative(pi.iter()),
            t: h.t.column_iter().map(|c| cumulative(c.iter())).collect(),
            o: h.o.column_iter().map(|c| cumulative(c.iter())).collect(),
        }
    }

    fn path(&self, len: usize, rng: &mut rng::Rng) -> (Vec<usize>, ObservationWindow) {
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let mut h = draw(&self.pi, rng);
        for step in 0..len {
            if step > 0 {
                h = draw(&self.t[h], rng);
            }
            states.push(h);
            symbols.push(draw(&self.o[h], rng));
        }
        (states, ObservationWindow { symbols })
    }
}

/// Stationary distribution of a column-stochastic matrix.
///
/// Power iteration from the uniform vector; if that has not reached
/// `‖T·pi − pi‖₁ ≤ 1e-10` after `max_iter` steps (periodic chains such as
/// permutations), iteration continues on the lazy chain `(I + T)/2`, which
/// has the same fixed points and is aperiodic.
pub fn stationary_of(t: &Matrix, max_iter: usize) -> Result<Vector> {
    let n = t.ncols();
    let residual = |x: &Vector| (t * x - x).abs().sum();
    let mut x = Vector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iter {
        if residual(&x) <= STATIONARY_TOL {
            return Ok(polish(t, x, residual));
        }
        x = t * &x;
        x /= x.sum();
    }
    for _ in 0..max_iter {
        if residual(&x) <= STATIONARY_TOL {
            return Ok(polish(t, x, residual));
        }
        x = 0.5 * (&x + t * &x);
        x /= x.sum();
    }
    let r = residual(&x);
    if r <= STATIONARY_TOL {
        Ok(x)
    } else {
        Err(Error::NonConvergent { iterations: 2 * max_iter, residual: r })
    }
}

/// Keep iterating the lazy chain while the residual still improves, so
/// downstream ratios such as `pi[i]/pi[j]` are accurate to rounding.
fn polish(t: &Matrix, mut x: Vector, residual: impl Fn(&Vector) -> f64) -> Vector {
    let mut best = residual(&x);
    for _ in 0..10_000 {
        if best == 0.0 {
            break;
        }
        let mut next = 0.5 * (&x + t * &x);
        next /= next.sum();
        let r = residual(&next);
        if r >= best {
            break;
        }
        x = next;
        best = r;
    }
    x
}

/// `T'[i][j] = T[j][i]·pi[i]/pi[j]`.
pub fn time_reverse(t: &Matrix, pi: &Vector) -> Result<Matrix> {
    let n = t.ncols();
    if pi.len() != n {
        return Err(Error::DimensionMismatch(format!("pi has length {}, expected {n}", pi.len())));
    }
    if let Some((state, &mass)) = pi.iter().enumerate().find(|(_, &p)| p < 1e-14) {
        return Err(Error::ZeroStationaryMass { state, mass });
    }
    Ok(Matrix::from_fn(n, n, |i, j| t[(j, i)] * pi[i] / pi[j]))
}

fn likelihood_recursion(t: &Matrix, o: &Matrix, tau: usize, row_cap: usize) -> Result<Matrix> {
    if tau == 0 {
        return Err(Error::InvalidSpec("tau must be at least 1".into()));
    }
    let rows = (o.nrows() as u128).checked_pow(tau as u32).unwrap_or(u128::MAX);
    if rows > row_cap as u128 {
        return Err(Error::SizeCap { rows, cap: row_cap });
    }
    let mut a = o * t;
    for _ in 1..tau {
        a = khatri_rao(o, &a)? * t;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Hmm {
        let t = Matrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
        let o = Matrix::from_row_slice(2, 2, &[0.7, 0.25, 0.3, 0.75]);
        Hmm::new(t, o).unwrap()
    }

    fn cycle(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| if i == (j + 1) % n { 1.0 } else { 0.0 })
    }

    #[test]
    fn validate_accepts_identity_uniform() {
        let h = Hmm::new(Matrix::identity(2, 2), Matrix::from_element(2, 2, 0.5)).unwrap();
        assert!(h.validate().is_empty());
    }

    #[test]
    fn validate_reports_short_column() {
        let t = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.5]);
        let h = Hmm::new(t, Matrix::from_element(1, 2, 1.0)).unwrap();
        let v = h.validate();
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::ColumnSum { matrix, column, residual } => {
                assert_eq!((*matrix, *column), ("T", 0));
                assert!((residual - 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_reports_negative_entry() {
        let o = Matrix::from_row_slice(2, 1, &[-0.1, 1.1]);
        let h = Hmm::new(Matrix::identity(1, 1), o).unwrap();
        let v = h.validate();
        assert!(v.iter().any(|x| matches!(x, Violation::NegativeEntry { matrix: "O", .. })));
        assert!(v.iter().any(|x| x.to_string().contains("negative entry")));
    }

    #[test]
    fn shape_errors() {
        assert!(Hmm::new(Matrix::zeros(2, 3), Matrix::zeros(1, 3)).is_err());
        assert!(Hmm::new(Matrix::identity(2, 2), Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn stationary_examples() {
        let h = Hmm::new(Matrix::from_element(2, 2, 0.5), Matrix::from_element(1, 2, 1.0)).unwrap();
        let pi = h.stationary().unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);

        let pi = two_state().stationary().unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-9);

        let h = Hmm::new(cycle(5), Matrix::from_element(1, 5, 1.0)).unwrap();
        let pi = h.stationary().unwrap();
        assert!(pi.iter().all(|&p| (p - 0.2).abs() < 1e-12));
    }

    #[test]
    fn stationary_periodic_from_nonuniform_falls_back_to_lazy_chain() {
        // Bipartite-periodic chain with a non-uniform stationary law.
        let t = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0]);
        let pi = stationary_of(&t, 200).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-9);
        assert!((pi[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn time_reverse_examples() {
        let h = two_state();
        let pi = h.stationary().unwrap();
        let rev = h.time_reverse(&pi).unwrap();
        // T'[0][1] = T[1][0]·pi0/pi1 = 0.1·2 = 0.2, T'[1][0] = T[0][1]·pi1/pi0 = 0.1.
        assert!((rev[(0, 1)] - 0.2).abs() < 1e-9);
        assert!((rev[(1, 0)] - 0.1).abs() < 1e-9);
        for s in linalg::column_sums(&rev) {
            assert!((s - 1.0).abs() < 1e-10);
        }
        // Involution.
        let back = time_reverse(&rev, &pi).unwrap();
        assert!((back - h.transition()).amax() < 1e-10);

        let p = cycle(4);
        let uniform = Vector::from_element(4, 0.25);
        assert_eq!(time_reverse(&p, &uniform).unwrap(), p.transpose());

        let sym = Matrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, 0.3]);
        let pi = Vector::from_element(2, 0.5);
        assert!((time_reverse(&sym, &pi).unwrap() - &sym).amax() < 1e-15);

        let bad = Vector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(time_reverse(&sym, &bad), Err(Error::ZeroStationaryMass { state: 1, .. })));
    }

    #[test]
    fn base_likelihood_is_ot() {
        let h = two_state();
        let a1 = h.likelihood_matrix(1).unwrap();
        assert!((a1 - h.observation() * h.transition()).amax() < 1e-15);
    }

    #[test]
    fn cycle_with_labels_gives_one_hot_columns() {
        let n = 3;
        let h = Hmm::new(cycle(n), Matrix::identity(n, n)).unwrap();
        for tau in 1..=3 {
            let a = h.likelihood_matrix(tau).unwrap();
            for col in a.column_iter() {
                assert_eq!(col.iter().filter(|&&x| x == 1.0).count(), 1);
                assert_eq!(col.sum(), 1.0);
            }
            assert_eq!(linalg::numerical_rank(&a, 1e-8), n);
        }
    }

    #[test]
    fn size_cap_enforced() {
        let h = two_state();
        assert!(matches!(h.likelihood_matrix_capped(4, 8), Err(Error::SizeCap { rows: 16, cap: 8 })));
        assert!(h.likelihood_matrix_capped(3, 8).is_ok());
    }

    #[test]
    fn joint_factor_examples() {
        let n = 3;
        let h = Hmm::new(cycle(n), Matrix::identity(n, n)).unwrap();
        let c = h.joint_factor().unwrap();
        assert!((c - Matrix::identity(n, n) / 3.0).amax() < 1e-15);

        let o = Matrix::from_column_slice(3, 1, &[0.2, 0.3, 0.5]);
        let h = Hmm::new(Matrix::identity(1, 1), o.clone()).unwrap();
        assert_eq!(h.joint_factor().unwrap(), o);
    }

    #[test]
    fn reversible_chain_has_b_equal_a() {
        let t = Matrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, 0.3]);
        let o = Matrix::from_row_slice(2, 2, &[0.6, 0.1, 0.4, 0.9]);
        let h = Hmm::new(t, o).unwrap();
        let a = h.likelihood_matrix(3).unwrap();
        let b = h.reverse_likelihood_matrix(3).unwrap();
        assert!((a - b).amax() < 1e-14);
    }

    #[test]
    fn deterministic_windows() {
        let h = Hmm::new(Matrix::identity(1, 1), Matrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let w = h.sample_windows(1, 10, 3).unwrap();
        assert!(w.iter().all(|w| w.symbols == vec![0, 0, 0]));
        let a = two_state().sample_windows(2, 40_000, 11).unwrap();
        let b = two_state().sample_windows(2, 40_000, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, two_state().sample_windows(2, 40_000, 12).unwrap());
    }

    #[test]
    fn json_roundtrip() {
        let h = two_state().with_stationary().unwrap();
        let s = h.to_json().unwrap();
        assert!(s.contains("\"T\""));
        let back = Hmm::from_json(&s).unwrap();
        assert_eq!(back.transition(), h.transition());
        assert_eq!(back.observation(), h.observation());
        assert!(back.pi().is_some());
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        // Row-major nested arrays: T[0][1] = P[h'=0 | h=1].
        assert_eq!(v["T"][0][1].as_f64().unwrap(), 0.2);
    }
}
