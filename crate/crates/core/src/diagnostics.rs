//! Structural measurements of an HMM: conditioning, ℓ1 gain, visit
//! statistics, degree and support mass, Kruskal checks and counting bounds.

use std::collections::HashSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hmm::Hmm;
use crate::linalg::{self, Matrix, Vector};
use crate::rng;

/// Relative singular-value cutoff for full-rank verdicts at exact moments.
pub const RANK_TOL: f64 = 1e-8;
/// `σ_n / σ_max` below this counts as rank deficient for condition numbers.
pub const KAPPA_CUTOFF: f64 = 1e-13;
pub const DEFAULT_VISIT_TRIALS: usize = 100_000;

/// Smallest singular value.
pub fn sigma_min_l2(t: &Matrix) -> f64 {
    linalg::singular_values(t).last().copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Exact,
    /// Best value found by local search; an upper bound on the true minimum.
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L1Mode {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { restarts: 32, iterations: 400, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Estimate {
    pub value: f64,
    pub method: MethodTag,
}

fn l1(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn l1_ratio(t: &Matrix, x: &Vector) -> f64 {
    l1(&(t * x)) / l1(x)
}

/// `min_x ‖Tx‖₁ / ‖x‖₁`.
///
/// Exact mode uses `σ = 1 / ‖T⁻¹‖₁` where `‖·‖₁` is the induced norm (maximum
/// absolute column sum); the minimizer is `T⁻¹ e_j` for the heaviest column
/// `j`. Singular matrices give 0.
pub fn sigma_min_l1(t: &Matrix, mode: L1Mode, budget: SearchBudget) -> Result<L1Estimate> {
    if !t.is_square() {
        return Err(Error::DimensionMismatch(format!("{}×{} is not square", t.nrows(), t.ncols())));
    }
    if t.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    match mode {
        L1Mode::Exact => Ok(L1Estimate { value: sigma_min_l1_exact(t).0, method: MethodTag::Exact }),
        L1Mode::Heuristic => Ok(L1Estimate { value: sigma_min_l1_search(t, budget), method: MethodTag::Heuristic }),
    }
}

/// Exact value and a minimizing vector (`None` for singular input).
pub fn sigma_min_l1_exact(t: &Matrix) -> (f64, Option<Vector>) {
    let n = t.nrows();
    let Some(inv) = t.clone().lu().try_inverse() else {
        return (0.0, None);
    };
    if !inv.iter().all(|x| x.is_finite()) {
        return (0.0, None);
    }
    let (j, norm) = inv
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .enumerate()
        .fold((0, 0.0), |best, (j, s)| if s > best.1 { (j, s) } else { best });
    let mut e = Vector::zeros(n);
    e[j] = 1.0;
    let x = inv * e;
    let direct = l1_ratio(t, &x);
    // The closed form and the ratio at its witness agree up to rounding; keep
    // the smaller so the value stays attained.
    (direct.min(1.0 / norm), Some(x))
}

fn sigma_min_l1_search(t: &Matrix, budget: SearchBudget) -> f64 {
    let n = t.nrows();
    let mut best = f64::INFINITY;
    let mut starts: Vec<Vector> = (0..n)
        .map(|j| {
            let mut e = Vector::zeros(n);
            e[j] = 1.0;
            e
        })
        .collect();
    let mut rng = rng::rng(budget.seed);
    for _ in 0..budget.restarts {
        starts.push(Vector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0));
    }
    for x0 in starts {
        best = best.min(descend(t, x0, budget.iterations));
    }
    best
}

/// Projected subgradient descent on the ℓ1 unit sphere.
fn descend(t: &Matrix, mut x: Vector, iterations: usize) -> f64 {
    let norm = l1(&x);
    if norm == 0.0 {
        return f64::INFINITY;
    }
    x /= norm;
    let mut best = l1(&(t * &x));
    for it in 0..iterations {
        let tx = t * &x;
        let f = l1(&tx);
        best = best.min(f);
        let g = t.transpose() * tx.map(f64::signum) - x.map(f64::signum) * f;
        let gn = g.norm();
        if gn < 1e-15 {
            break;
        }
        let step = 0.5 / (1.0 + it as f64).sqrt();
        let cand = &x - g * (step / gn);
        let cn = l1(&cand);
        if cn < 1e-300 {
            break;
        }
        x = cand / cn;
    }
    best.min(l1(&(t * &x)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitStatistic {
    /// Failure fraction averaged uniformly over start states.
    pub delta1: f64,
    pub stderr: f64,
    /// Worst start state.
    pub max_over_states: f64,
    /// Failure fraction under the stationary start, when one exists.
    pub stationary_average: Option<f64>,
    pub per_state: Vec<f64>,
    pub walks_per_state: usize,
}

/// Column-wise cumulative sampling tables for a stochastic matrix.
struct ColumnSampler {
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl ColumnSampler {
    fn new(t: &Matrix) -> Self {
        let mut targets = Vec::with_capacity(t.ncols());
        let mut cumulative = Vec::with_capacity(t.ncols());
        for col in t.column_iter() {
            let (mut tg, mut cu, mut acc) = (Vec::new(), Vec::new(), 0.0);
            for (i, &p) in col.iter().enumerate() {
                if p > 0.0 {
                    acc += p;
                    tg.push(i);
                    cu.push(acc);
                }
            }
            targets.push(tg);
            cumulative.push(cu);
        }
        Self { targets, cumulative }
    }

    fn step(&self, from: usize, rng: &mut rng::Rng) -> usize {
        let cu = &self.cumulative[from];
        let u = rng.random::<f64>() * cu.last().copied().unwrap_or(1.0);
        let k = cu.partition_point(|&c| c <= u).min(cu.len() - 1);
        self.targets[from][k]
    }
}

/// Fraction of walks of `walk_len` states (start included) that visit fewer
/// than `distinct_target` distinct states. Walks are stratified over start
/// states with `⌈trials / n⌉` walks each.
pub fn visit_statistic(t: &Matrix, walk_len: usize, distinct_target: usize, trials: usize, seed: u64) -> Result<VisitStatistic> {
    let n = t.ncols();
    if n == 0 || trials == 0 {
        return Err(Error::EmptyInput);
    }
    let sampler = ColumnSampler::new(t);
    if sampler.targets.iter().any(Vec::is_empty) {
        return Err(Error::InvalidSpec("transition matrix has an all-zero column".into()));
    }
    let walks = trials.div_ceil(n);
    let per_state: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|start| {
            let mut rng = rng::stream(seed, start as u64);
            let mut stamp = vec![0u32; n];
            let mut failures = 0usize;
            for w in 0..walks {
                let tag = w as u32 + 1;
                let mut state = start;
                stamp[state] = tag;
                let mut distinct = 1;
                for _ in 1..walk_len {
                    state = sampler.step(state, &mut rng);
                    if stamp[state] != tag {
                        stamp[state] = tag;
                        distinct += 1;
                    }
                }
                if distinct < distinct_target {
                    failures += 1;
                }
            }
            failures as f64 / walks as f64
        })
        .collect();
    let delta1 = per_state.iter().sum::<f64>() / n as f64;
    let var: f64 = per_state.iter().map(|f| f * (1.0 - f) / walks as f64).sum();
    let stationary_average = crate::hmm::stationary_of(t, crate::hmm::DEFAULT_MAX_ITER)
        .ok()
        .map(|pi| pi.iter().zip(&per_state).map(|(p, f)| p * f).sum());
    Ok(VisitStatistic {
        delta1,
        stderr: var.sqrt() / n as f64,
        max_over_states: per_state.iter().copied().fold(0.0, f64::max),
        stationary_average,
        per_state,
        walks_per_state: walks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassProfile {
    pub residuals: Vec<f64>,
    pub max: f64,
}

/// Per column, the mass outside the `d` largest entries.
pub fn mass_profile(m: &Matrix, d: usize) -> MassProfile {
    let residuals: Vec<f64> = m
        .column_iter()
        .map(|c| {
            let mut v: Vec<f64> = c.iter().copied().collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v.iter().skip(d).sum::<f64>().max(0.0)
        })
        .collect();
    let max = residuals.iter().copied().fold(0.0, f64::max);
    MassProfile { residuals, max }
}

/// Per column, the fewest entries whose complement carries at most `tol`.
pub fn effective_degrees(m: &Matrix, tol: f64) -> Vec<usize> {
    m.column_iter()
        .map(|c| {
            let mut v: Vec<f64> = c.iter().copied().collect();
            v.sort_by(|a, b| b.total_cmp(a));
            let total: f64 = v.iter().sum();
            let mut kept = 0.0;
            for (d, x) in v.iter().enumerate() {
                if total - kept <= tol {
                    return d;
                }
                kept += x;
            }
            v.len()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KruskalReport {
    pub rank_a: usize,
    pub rank_b: usize,
    pub columns: usize,
    pub min_c_pair_separation: f64,
    pub verdict: Verdict,
}

impl KruskalReport {
    pub fn satisfied(&self) -> bool {
        self.verdict == Verdict::Satisfied
    }
}

/// Full column rank of `A` and `B` plus pairwise separation of the
/// ℓ2-normalized columns of `C`.
pub fn kruskal_check(a: &Matrix, b: &Matrix, c: &Matrix, tol: f64) -> Result<KruskalReport> {
    let k = a.ncols();
    if b.ncols() != k || c.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "factor column counts {}, {}, {}",
            a.ncols(),
            b.ncols(),
            c.ncols()
        )));
    }
    let rank_a = linalg::numerical_rank(a, tol);
    let rank_b = linalg::numerical_rank(b, tol);
    let unit: Vec<Vector> = c
        .column_iter()
        .map(|col| {
            let nrm = col.norm();
            if nrm > 0.0 {
                col / nrm
            } else {
                col.into_owned()
            }
        })
        .collect();
    let mut sep = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            sep = sep.min((&unit[i] - &unit[j]).norm());
        }
    }
    let ok = rank_a == k && rank_b == k && sep > tol;
    Ok(KruskalReport {
        rank_a,
        rank_b,
        columns: k,
        min_c_pair_separation: sep,
        verdict: if ok { Verdict::Satisfied } else { Verdict::Violated },
    })
}

/// Kruskal check on the model's own factors at window `tau`.
pub fn kruskal_check_hmm(h: &Hmm, tau: usize) -> Result<KruskalReport> {
    let f = h.factors(tau)?;
    kruskal_check(&f.a, &f.b, &f.c, RANK_TOL)
}

/// `(2t/c)^(m^c)`, saturating at `u64::MAX`.
pub fn counting_rank_bound(c: usize, m: usize, t: usize) -> Result<u64> {
    if c == 0 || t < c {
        return Err(Error::InvalidSpec(format!("counting bound needs c >= 1 and t >= c, got c = {c}, t = {t}")));
    }
    let base = 2.0 * t as f64 / c as f64;
    let exponent = (m as f64).powf(c as f64);
    let v = base.powf(exponent).ceil();
    Ok(if v.is_finite() && v < u64::MAX as f64 { v as u64 } else { u64::MAX })
}

/// Number of distinct tuples of per-residue-class symbol counts over all
/// strings of length `t`, where position `s ∈ 1..=t` belongs to class
/// `s mod c`. Rows of `A^(t)` sharing a tuple coincide for a union of
/// `c`-cycles, so this bounds its rank.
pub fn count_vector_classes(c: usize, m: usize, t: usize) -> Result<usize> {
    if c == 0 || m == 0 {
        return Err(Error::InvalidSpec("c and m must be positive".into()));
    }
    let total = (m as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
    if total > crate::hmm::DEFAULT_ROW_CAP as u128 {
        return Err(Error::SizeCap { rows: total, cap: crate::hmm::DEFAULT_ROW_CAP });
    }
    let mut seen: HashSet<Vec<u16>> = HashSet::new();
    let mut digits = vec![0usize; t];
    for _ in 0..total as usize {
        let mut counts = vec![0u16; c * m];
        for (pos, &sym) in digits.iter().enumerate() {
            counts[((pos + 1) % c) * m + sym] += 1;
        }
        seen.insert(counts);
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < m {
                break;
            }
            *d = 0;
        }
    }
    Ok(seen.len())
}

/// `κ₂(A^(tau)) = σ_max / σ_n`, or `+∞` when `σ_n < 1e-13·σ_max`.
#[allow(non_snake_case)]
pub fn condition_number_A(h: &Hmm, tau: usize) -> Result<f64> {
    let a = h.likelihood_matrix(tau)?;
    Ok(condition_number_of(&a, h.n()))
}

/// `σ_max / σ_k` of any matrix, `+∞` when `σ_k` is missing or negligible.
pub fn condition_number_of(a: &Matrix, k: usize) -> f64 {
    let s = linalg::singular_values(a);
    match (s.first(), s.get(k.saturating_sub(1))) {
        (Some(&top), Some(&low)) if top > 0.0 && low >= KAPPA_CUTOFF * top => top / low,
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { c1: 20.0, c2: 16.0, c3: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeProfile {
    /// Per state, fewest targets carrying all but `tol` of the mass.
    pub effective_degree: Vec<usize>,
    pub max_effective_degree: usize,
    /// Allowed degree `⌊m^(1/c2)⌋` (at least 1).
    pub allowed: usize,
    /// Worst residual mass outside the top `allowed` entries.
    pub residual_at_allowed: f64,
}

fn degree_profile(m_cols: &Matrix, allowed: usize, tol: f64) -> DegreeProfile {
    let eff = effective_degrees(m_cols, tol);
    DegreeProfile {
        max_effective_degree: eff.iter().copied().max().unwrap_or(0),
        effective_degree: eff,
        allowed,
        residual_at_allowed: mass_profile(m_cols, allowed).max,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionProfile {
    pub n: usize,
    pub m: usize,
    pub sigma1_t: L1Estimate,
    pub sigma1_trev: L1Estimate,
    pub sigma2_t: f64,
    pub sigma2_trev: f64,
    pub walk_len: usize,
    pub distinct_target: usize,
    pub visit_t: VisitStatistic,
    pub visit_trev: VisitStatistic,
    pub degree_t: DegreeProfile,
    pub degree_trev: DegreeProfile,
    pub support: DegreeProfile,
    pub thresholds: Thresholds,
    /// Smallest `c` allowed by the ℓ1 conditioning requirement.
    pub c_lower: f64,
    /// Largest `c` allowed by the measured failure masses.
    pub c_upper: f64,
    /// `c_lower < c_upper` and degree and support within their allowances.
    pub feasible: bool,
}

impl AssumptionProfile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub l1_mode: L1Mode,
    pub budget: SearchBudget,
    pub visit_trials: usize,
    pub mass_tol: f64,
    pub thresholds: Thresholds,
    pub seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            l1_mode: L1Mode::Exact,
            budget: SearchBudget::default(),
            visit_trials: DEFAULT_VISIT_TRIALS,
            mass_tol: 1e-12,
            thresholds: Thresholds::default(),
            seed: 0,
        }
    }
}

/// Measured counterparts of the learnability assumptions for a model.
pub fn assumption_profile(h: &Hmm, opts: &ProfileOptions) -> Result<AssumptionProfile> {
    let (n, m) = (h.n(), h.m());
    let pi = h.stationary_distribution()?.into_owned();
    let trev = crate::hmm::time_reverse(h.transition(), &pi)?;
    let t = h.transition();
    let log_m_n = if m > 1 { (n as f64).ln() / (m as f64).ln() } else { n as f64 };
    let walk_len = ((15.0 * log_m_n).ceil() as usize).max(1);
    let distinct_target = ((10.0 * log_m_n).ceil() as usize).max(1);
    let th = opts.thresholds;
    let s1 = sigma_min_l1(t, opts.l1_mode, opts.budget)?;
    let s1r = sigma_min_l1(&trev, opts.l1_mode, opts.budget)?;
    let visit_t = visit_statistic(t, walk_len, distinct_target, opts.visit_trials, rng::derive(opts.seed, 0))?;
    let visit_trev = visit_statistic(&trev, walk_len, distinct_target, opts.visit_trials, rng::derive(opts.seed, 1))?;
    let allowed_degree = ((m as f64).powf(1.0 / th.c2).floor() as usize).max(1);
    let allowed_support = ((m as f64).powf(1.0 / th.c3).floor() as usize).max(1);
    let degree_t = degree_profile(t, allowed_degree, opts.mass_tol);
    let degree_trev = degree_profile(&trev, allowed_degree, opts.mass_tol);
    let support = degree_profile(h.observation(), allowed_support, opts.mass_tol);

    let ln_m = (m.max(2) as f64).ln();
    let ln_n = (n.max(2) as f64).ln();
    let sigma1 = s1.value.min(s1r.value);
    let c_lower = if sigma1 <= 0.0 { f64::INFINITY } else { (th.c1 * -sigma1.ln() / ln_m).max(0.0) };
    let c_upper = [
        visit_t.max_over_states.max(visit_trev.max_over_states),
        degree_t.residual_at_allowed.max(degree_trev.residual_at_allowed),
        support.residual_at_allowed,
    ]
    .iter()
    .map(|&delta| if delta <= 0.0 { f64::INFINITY } else { -delta.ln() / ln_n })
    .fold(f64::INFINITY, f64::min);
    let feasible = c_lower < c_upper
        && degree_t.max_effective_degree <= allowed_degree
        && degree_trev.max_effective_degree <= allowed_degree
        && support.max_effective_degree <= allowed_support;
    Ok(AssumptionProfile {
        n,
        m,
        sigma1_t: s1,
        sigma1_trev: s1r,
        sigma2_t: sigma_min_l2(t),
        sigma2_trev: sigma_min_l2(&trev),
        walk_len,
        distinct_target,
        visit_t,
        visit_trev,
        degree_t,
        degree_trev,
        support,
        thresholds: th,
        c_lower,
        c_upper,
        feasible,
    })
}
