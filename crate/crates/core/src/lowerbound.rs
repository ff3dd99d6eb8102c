//! The hidden chain conditioned on a fixed future output string, and the
//! contraction properties that make dense random-walk HMMs hard to learn.

use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::simplex_point;
use crate::hmm::Hmm;
use crate::linalg::{self, Matrix, Vector};
use crate::rng;

/// Transition matrices of the hidden chain conditioned on `o_1..o_tau`.
///
/// `matrices[t][j][i] = P[h_{t+1} = j | h_t = i, o_{t+1..tau}]` for
/// `t = 0..tau`. With `β_t(i) = P[o_{t+1..tau} | h_t = i]` this is
/// `T[j][i]·O[o_{t+1}][j]·β_{t+1}(j) / β_t(i)`.
#[derive(Debug, Clone)]
pub struct ConditionedChain {
    pub matrices: Vec<Matrix>,
    /// `β_t` rescaled to unit maximum, `t = 0..=tau`.
    pub scaled_beta: Vec<Vector>,
    /// `ln` of the rescaling factors, so `ln β_t = ln β̃_t + Σ_{s≥t} log_scales[s]`.
    pub log_scales: Vec<f64>,
    /// `unreachable[t][i]` marks states from which the remaining outputs are
    /// impossible; their columns fall back to the plain transition column.
    pub unreachable: Vec<Vec<bool>>,
}

impl ConditionedChain {
    pub fn tau(&self) -> usize {
        self.matrices.len()
    }

    /// `ln β_t(i)`.
    pub fn log_beta(&self, t: usize, i: usize) -> f64 {
        self.scaled_beta[t][i].ln() + self.log_scales[t..].iter().sum::<f64>()
    }
}

fn check_outputs(h: &Hmm, outputs: &[usize]) -> Result<()> {
    if outputs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&symbol) = outputs.iter().find(|&&s| s >= h.m()) {
        return Err(Error::AlphabetMismatch { symbol, m: h.m() });
    }
    Ok(())
}

pub fn conditioned_chain(h: &Hmm, outputs: &[usize]) -> Result<ConditionedChain> {
    check_outputs(h, outputs)?;
    let (t, o) = (h.transition(), h.observation());
    let n = h.n();
    let tau = outputs.len();
    let mut scaled_beta = vec![Vector::zeros(n); tau + 1];
    scaled_beta[tau] = Vector::from_element(n, 1.0);
    let mut log_scales = vec![0.0; tau];
    let mut matrices = vec![Matrix::zeros(n, n); tau];
    let mut unreachable = vec![vec![false; n]; tau + 1];
    for step in (0..tau).rev() {
        let emit = o.row(outputs[step]).transpose();
        let w = emit.component_mul(&scaled_beta[step + 1]);
        let w_max = w.max();
        if w_max <= 0.0 {
            return Err(Error::ZeroLikelihood { step });
        }
        let r = w / w_max;
        // rho[i] is the r-weighted mean of column i of T, so column i of the
        // conditioned matrix is T[j][i]·r[j]/rho[i].
        let mut rho = Vector::zeros(n);
        for i in 0..n {
            let col = t.column(i);
            let (weighted, total) = col.iter().zip(r.iter()).fold((0.0, 0.0), |(a, b), (&c, &x)| (a + c * x, b + c));
            rho[i] = weighted / total;
            if rho[i] > 0.0 {
                let scaled = col.component_mul(&r) / rho[i];
                matrices[step].set_column(i, &scaled);
            } else {
                unreachable[step][i] = true;
                matrices[step].set_column(i, &col);
            }
        }
        let z = rho.max();
        if z <= 0.0 {
            return Err(Error::ZeroLikelihood { step });
        }
        scaled_beta[step] = rho / z;
        log_scales[step] = z.ln() + w_max.ln();
    }
    Ok(ConditionedChain { matrices, scaled_beta, log_scales, unreachable })
}

/// `ln P[o_1..o_tau]` from the start distribution `pi` by the scaled forward
/// recursion.
pub fn forward_log_likelihood(h: &Hmm, pi: &Vector, outputs: &[usize]) -> Result<f64> {
    check_outputs(h, outputs)?;
    let mut alpha = pi.clone();
    let mut ll = 0.0;
    for &sym in outputs {
        alpha = h.transition() * alpha;
        alpha.component_mul_assign(&h.observation().row(sym).transpose());
        let s = alpha.sum();
        if s <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += s.ln();
        alpha /= s;
    }
    Ok(ll)
}

/// `ln P[o_1..o_tau]` rebuilt from the conditioned transitions alone.
///
/// Along any path `h_0, h_1, …` with positive conditioned probability,
/// `β_0(h_0) = Π_t T[h_{t+1}][h_t]·O[o_{t+1}][h_{t+1}] / T^(t)[h_{t+1}][h_t]`;
/// each start state follows its most likely conditioned successor.
pub fn telescoping_log_likelihood(h: &Hmm, chain: &ConditionedChain, pi: &Vector, outputs: &[usize]) -> Result<f64> {
    check_outputs(h, outputs)?;
    if chain.tau() != outputs.len() {
        return Err(Error::DimensionMismatch(format!("chain of length {} for {} outputs", chain.tau(), outputs.len())));
    }
    let (t, o) = (h.transition(), h.observation());
    let mut terms = Vec::with_capacity(h.n());
    for start in 0..h.n() {
        if pi[start] <= 0.0 || chain.unreachable[0][start] {
            continue;
        }
        let mut state = start;
        let mut log_beta = 0.0;
        for (step, tt) in chain.matrices.iter().enumerate() {
            let col = tt.column(state);
            let next = col.iamax();
            let cond = col[next];
            log_beta += (t[(next, state)] * o[(outputs[step], next)]).ln() - cond.ln();
            state = next;
        }
        terms.push(pi[start].ln() + log_beta);
    }
    Ok(log_sum_exp(&terms))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionProbe {
    /// Largest `‖Tx‖₂` seen over random unit mean-zero probes.
    pub monte_carlo: f64,
    /// Operator norm of `T` restricted to the mean-zero subspace.
    pub certified: f64,
}

fn mean_zero_unit(n: usize, rng: &mut rng::Rng) -> Vector {
    loop {
        let mut x = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mean = x.mean();
        x.add_scalar_mut(-mean);
        let nrm = x.norm();
        if nrm > 1e-12 {
            return x / nrm;
        }
    }
}

/// `‖T (I − 11ᵀ/n)‖₂`.
pub fn restricted_norm(tt: &Matrix) -> f64 {
    let n = tt.ncols();
    let proj = Matrix::identity(n, n) - Matrix::from_element(n, n, 1.0 / n as f64);
    linalg::singular_values(&(tt * proj)).first().copied().unwrap_or(0.0)
}

pub fn contraction_probe(tt: &Matrix, probes: usize, seed: u64) -> ContractionProbe {
    let n = tt.ncols();
    let mut rng = rng::rng(seed);
    let monte_carlo = if n < 2 {
        0.0
    } else {
        (0..probes.max(1)).map(|_| (tt * mean_zero_unit(n, &mut rng)).norm()).fold(0.0, f64::max)
    };
    ContractionProbe { monte_carlo, certified: restricted_norm(tt) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spectrum {
    /// `|λ|` of the second-largest eigenvalue.
    pub lambda2: f64,
    /// Smallest eigenvalue.
    pub lambda_min: f64,
    /// Largest `|λ|` over all eigenvalues but the top one.
    pub nontrivial_radius: f64,
}

/// Eigenvalue summary of a symmetric transition matrix.
pub fn spectral_gap(t: &Matrix) -> Result<Spectrum> {
    if !t.is_square() {
        return Err(Error::DimensionMismatch(format!("{}×{} is not square", t.nrows(), t.ncols())));
    }
    let asym = (t - t.transpose()).amax();
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let mut ev: Vec<f64> = t.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev.len() < 2 {
        return Ok(Spectrum { lambda2: 0.0, lambda_min: ev.first().copied().unwrap_or(0.0), nontrivial_radius: 0.0 });
    }
    Ok(Spectrum {
        lambda2: ev[1].abs(),
        lambda_min: ev[ev.len() - 1],
        nontrivial_radius: ev[1].abs().max(ev[ev.len() - 1].abs()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmissionConcentration {
    pub max_deviation: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Largest `|P[o_{t+1} = j | h_t = i] − 1/m|` for a walk `t` and outputs
/// `o`, against `√(6 ln n / (d·m))`.
pub fn emission_concentration_check(o: &Matrix, t: &Matrix, d: usize) -> Result<EmissionConcentration> {
    if o.ncols() != t.nrows() || !t.is_square() {
        return Err(Error::DimensionMismatch(format!("O is {:?}, T is {:?}", o.shape(), t.shape())));
    }
    let (m, n) = o.shape();
    let next = o * t;
    let max_deviation = next.iter().map(|p| (p - 1.0 / m as f64).abs()).fold(0.0, f64::max);
    let bound = (6.0 * (n as f64).ln() / (d as f64 * m as f64)).sqrt();
    Ok(EmissionConcentration { max_deviation, bound, holds: max_deviation <= bound })
}

/// Fraction of seeds for which the concentration bound fails on a random
/// `d`-regular graph with uniform-simplex output columns.
pub fn emission_concentration_failures(n: usize, d: usize, m: usize, trials: usize, seed: u64) -> Result<f64> {
    let fails: Result<Vec<bool>> = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let s = rng::derive(seed, k);
            let t = crate::generators::regular_graph_transition(n, d, s)?;
            let o = random_observation(n, m, rng::derive(s, 1));
            Ok(!emission_concentration_check(&o, &t, d)?.holds)
        })
        .collect();
    let fails = fails?;
    Ok(fails.iter().filter(|&&f| f).count() as f64 / trials.max(1) as f64)
}

/// Output columns drawn independently and uniformly from the simplex.
pub fn random_observation(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = rng::rng(seed);
    let mut o = Matrix::zeros(m, n);
    for j in 0..n {
        o.set_column(j, &Vector::from_vec(simplex_point(m, &mut rng)));
    }
    o
}

/// `√(100·m³·ln³ n / (2d))`, the deviation term in the contraction bound.
pub fn alpha_bound(n: usize, d: usize, m: usize) -> f64 {
    let ln = (n as f64).ln();
    (100.0 * (m as f64).powi(3) * ln.powi(3) / (2.0 * d as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub trial: usize,
    pub t: usize,
    /// `‖x_{t+1}‖₁ / ‖x_t‖₁` for the propagated perturbation.
    pub l1_ratio: f64,
    /// `‖x_{t+1}‖₂ / ‖x_t‖₂`.
    pub l2_ratio: f64,
    /// Restricted ℓ2 norm of the step's conditioned transition, when requested.
    pub certified: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceDecay {
    /// Per step, the largest ℓ1 distance between the two conditioned
    /// posteriors over all trials, relative to the starting distance.
    pub curve: Vec<f64>,
    /// Per trial, the geometric mean of the per-step ℓ1 ratios.
    pub trial_rates: Vec<f64>,
    pub median_rate: f64,
    pub max_rate: f64,
    pub steps: Vec<StepRecord>,
    /// Output strings that were impossible under the model and redrawn.
    pub skipped: usize,
}

impl InfluenceDecay {
    /// Fraction of recorded steps whose ℓ2 ratio is at most `limit`.
    pub fn fraction_within(&self, limit: f64) -> f64 {
        let ok = self.steps.iter().filter(|s| s.l2_ratio <= limit).count();
        ok as f64 / self.steps.len().max(1) as f64
    }
}

/// Propagate a random mean-zero difference of start distributions through
/// the chain conditioned on output strings sampled from the model.
pub fn influence_decay(h: &Hmm, tau: usize, trials: usize, seed: u64) -> Result<InfluenceDecay> {
    influence_decay_with(h, tau, trials, seed, false)
}

/// [`influence_decay`], additionally computing the restricted ℓ2 norm of
/// every conditioned transition when `certify` is set.
pub fn influence_decay_with(h: &Hmm, tau: usize, trials: usize, seed: u64, certify: bool) -> Result<InfluenceDecay> {
    if tau == 0 || trials == 0 {
        return Err(Error::EmptyInput);
    }
    let n = h.n();
    let pi = h.stationary_distribution()?.into_owned();
    const MAX_REDRAWS: usize = 100;
    let runs: Result<Vec<(Vec<f64>, Vec<StepRecord>, usize)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng::stream(seed, trial as u64);
            let mut skipped = 0;
            let chain = loop {
                let outputs = sample_outputs(h, &pi, tau, &mut rng);
                match conditioned_chain(h, &outputs) {
                    Ok(c) => break c,
                    Err(Error::ZeroLikelihood { .. }) if skipped < MAX_REDRAWS => skipped += 1,
                    Err(e) => return Err(e),
                }
            };
            let p = Vector::from_vec(simplex_point(n, &mut rng));
            let q = Vector::from_vec(simplex_point(n, &mut rng));
            let mut x = p - q;
            let mut log_dist = 0.0;
            let mut curve = Vec::with_capacity(tau + 1);
            curve.push(0.0);
            let mut steps = Vec::with_capacity(tau);
            for (t, tt) in chain.matrices.iter().enumerate() {
                let l1_before = x.lp_norm(1);
                let l2_before = x.norm();
                if l1_before == 0.0 {
                    break;
                }
                let mut y = tt * &x;
                // Column sums are one, so the sum stays zero up to rounding.
                let drift = y.mean();
                y.add_scalar_mut(-drift);
                let l1_ratio = y.lp_norm(1) / l1_before;
                steps.push(StepRecord {
                    trial,
                    t,
                    l1_ratio,
                    l2_ratio: y.norm() / l2_before,
                    certified: certify.then(|| restricted_norm(tt)),
                });
                log_dist += l1_ratio.ln();
                curve.push(log_dist);
                let nrm = y.lp_norm(1);
                x = if nrm > 0.0 { y / nrm } else { y };
            }
            Ok((curve, steps, skipped))
        })
        .collect();
    let runs = runs?;
    let mut curve = vec![f64::NEG_INFINITY; tau + 1];
    let mut trial_rates = Vec::with_capacity(trials);
    let mut steps = Vec::new();
    let mut skipped = 0;
    for (c, s, k) in runs {
        for (slot, v) in curve.iter_mut().zip(&c) {
            *slot = slot.max(*v);
        }
        let rate = if s.is_empty() { 0.0 } else { (c[s.len()] / s.len() as f64).exp() };
        trial_rates.push(rate);
        steps.extend(s);
        skipped += k;
    }
    let curve = curve.into_iter().map(f64::exp).collect();
    let median_rate = linalg::median(&mut trial_rates.clone());
    let max_rate = trial_rates.iter().copied().fold(0.0, f64::max);
    Ok(InfluenceDecay { curve, trial_rates, median_rate, max_rate, steps, skipped })
}

fn sample_outputs(h: &Hmm, pi: &Vector, tau: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let draw = |p: &mut dyn Iterator<Item = f64>, rng: &mut rng::Rng| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in p.enumerate() {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    };
    let (t, o) = (h.transition(), h.observation());
    let mut state = draw(&mut pi.iter().copied(), rng);
    (0..tau)
        .map(|_| {
            state = draw(&mut t.column(state).iter().copied(), rng);
            draw(&mut o.column(state).iter().copied(), rng)
        })
        .collect()
}

/// One CSV row per conditioned step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub trial: usize,
    pub t: usize,
    pub measured_contraction: f64,
    pub l1_ratio: f64,
    pub certified: Option<f64>,
    pub alpha_bound: f64,
    pub lambda2: f64,
    pub seed: u64,
}

pub fn decay_rows(decay: &InfluenceDecay, n: usize, d: usize, m: usize, lambda2: f64, seed: u64) -> Vec<DecayRow> {
    let alpha = alpha_bound(n, d, m);
    decay
        .steps
        .iter()
        .map(|s| DecayRow {
            n,
            d,
            m,
            trial: s.trial,
            t: s.t,
            measured_contraction: s.l2_ratio,
            l1_ratio: s.l1_ratio,
            certified: s.certified,
            alpha_bound: alpha,
            lambda2,
            seed,
        })
        .collect()
}

pub fn write_decay_csv<W: Write>(rows: &[DecayRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    fn random_hmm(n: usize, m: usize, seed: u64) -> Hmm {
        let mut rng = rng::rng(seed);
        let mut t = Matrix::from_fn(n, n, |_, _| rng.random::<f64>());
        linalg::normalize_columns(&mut t, 0.0).unwrap();
        Hmm::new(t, random_observation(n, m, seed + 1000)).unwrap()
    }

    fn assert_stochastic(m: &Matrix) {
        for s in linalg::column_sums(m) {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_emissions_are_inert() {
        let mut h = random_hmm(5, 3, 1);
        h = Hmm::new(h.transition().clone(), Matrix::from_element(3, 5, 1.0 / 3.0)).unwrap();
        let chain = conditioned_chain(&h, &[0, 2, 1, 1]).unwrap();
        for tt in &chain.matrices {
            assert!((tt - h.transition()).amax() < 1e-12);
        }
    }

    #[test]
    fn deterministic_single_step_is_bayes() {
        let t = Matrix::from_element(3, 3, 1.0 / 3.0);
        let o = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let h = Hmm::new(t, o).unwrap();
        let chain = conditioned_chain(&h, &[0]).unwrap();
        let want = Matrix::from_row_slice(3, 3, &[0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5]);
        assert!((&chain.matrices[0] - want).amax() < 1e-15);
    }

    #[test]
    fn matches_path_enumeration() {
        let h = random_hmm(3, 2, 7);
        let (t, o) = (h.transition(), h.observation());
        let outputs = [1, 0];
        let chain = conditioned_chain(&h, &outputs).unwrap();
        // P[h_1 = j | h_0 = i, o_1, o_2] by summing over h_2.
        for i in 0..3 {
            let mut joint = [0.0; 3];
            for j in 0..3 {
                for k in 0..3 {
                    joint[j] += t[(j, i)] * o[(1, j)] * t[(k, j)] * o[(0, k)];
                }
            }
            let z: f64 = joint.iter().sum();
            for j in 0..3 {
                assert!((chain.matrices[0][(j, i)] - joint[j] / z).abs() < 1e-14);
            }
        }
        // P[h_2 = k | h_1 = j, o_2].
        for j in 0..3 {
            let z: f64 = (0..3).map(|k| t[(k, j)] * o[(0, k)]).sum();
            for k in 0..3 {
                assert!((chain.matrices[1][(k, j)] - t[(k, j)] * o[(0, k)] / z).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn telescoping_matches_forward() {
        for seed in 0..20 {
            let h = random_hmm(4 + (seed as usize % 3), 3, seed);
            let pi = h.stationary().unwrap();
            let mut rng = rng::rng(seed);
            let outputs = sample_outputs(&h, &pi, 30, &mut rng);
            let chain = conditioned_chain(&h, &outputs).unwrap();
            chain.matrices.iter().for_each(assert_stochastic);
            let a = telescoping_log_likelihood(&h, &chain, &pi, &outputs).unwrap();
            let b = forward_log_likelihood(&h, &pi, &outputs).unwrap();
            assert!(((a - b).exp() - 1.0).abs() < 1e-10, "seed {seed}: {a} vs {b}");
            let direct: f64 = (0..h.n()).map(|i| pi[i] * chain.log_beta(0, i).exp()).sum::<f64>().ln();
            assert!((direct - b).abs() < 1e-10);
        }
    }

    #[test]
    fn impossible_strings_are_rejected() {
        let o = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let h = Hmm::new(Matrix::identity(2, 2), o).unwrap();
        assert!(matches!(conditioned_chain(&h, &[0, 1]), Err(Error::ZeroLikelihood { step: 1 })));
        let o = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let h = Hmm::new(Matrix::identity(2, 2), o).unwrap();
        let chain = conditioned_chain(&h, &[0]).unwrap();
        assert!(chain.unreachable[0][1]);
        assert_stochastic(&chain.matrices[0]);
    }

    #[test]
    fn long_strings_do_not_underflow() {
        let h = random_hmm(6, 4, 3);
        let pi = h.stationary().unwrap();
        let mut rng = rng::rng(5);
        let outputs = sample_outputs(&h, &pi, 1000, &mut rng);
        let chain = conditioned_chain(&h, &outputs).unwrap();
        let a = telescoping_log_likelihood(&h, &chain, &pi, &outputs).unwrap();
        let b = forward_log_likelihood(&h, &pi, &outputs).unwrap();
        assert!(a.is_finite() && a < -100.0);
        assert!(((a - b).exp() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn probe_examples() {
        let u = Matrix::from_element(5, 5, 0.2);
        let p = contraction_probe(&u, 50, 1);
        assert!(p.monte_carlo < 1e-15 && p.certified < 1e-15);
        let p = contraction_probe(&Matrix::identity(5, 5), 50, 1);
        assert!((p.monte_carlo - 1.0).abs() < 1e-12 && (p.certified - 1.0).abs() < 1e-12);
        let t = generators::regular_graph_transition(100, 3, 4).unwrap();
        let p = contraction_probe(&t, 200, 2);
        assert!(p.certified <= 1.0 + 1e-12);
        assert!(p.monte_carlo <= p.certified + 1e-12);
    }

    #[test]
    fn spectrum_examples() {
        let n = 7;
        let k = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 / (n - 1) as f64 });
        let s = spectral_gap(&k).unwrap();
        assert!((s.lambda2 - 1.0 / (n - 1) as f64).abs() < 1e-12);
        let c = Matrix::from_fn(8, 8, |i, j| if (i + 1) % 8 == j || (j + 1) % 8 == i { 0.5 } else { 0.0 });
        let s = spectral_gap(&c).unwrap();
        assert!((s.lambda2 - (2.0 * std::f64::consts::PI / 8.0).cos()).abs() < 1e-12);
        assert!((s.nontrivial_radius - 1.0).abs() < 1e-12);
        assert!(matches!(spectral_gap(&generators::cycle(4)), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn emission_examples() {
        let t = generators::regular_graph_transition(20, 4, 1).unwrap();
        let r = emission_concentration_check(&Matrix::from_element(3, 20, 1.0 / 3.0), &t, 4).unwrap();
        assert!(r.max_deviation < 1e-15 && r.holds);

        let o = random_observation(30, 4, 2);
        let full = Matrix::from_element(30, 30, 1.0 / 30.0);
        let r = emission_concentration_check(&o, &full, 30).unwrap();
        let avg = o.column_mean();
        let want = avg.iter().map(|p| (p - 0.25).abs()).fold(0.0, f64::max);
        assert!((r.max_deviation - want).abs() < 1e-14);
    }

    #[test]
    fn decay_on_permutation_and_dense_graph() {
        let o = random_observation(12, 3, 1);
        let h = Hmm::new(generators::cycle(12), o).unwrap();
        let d = influence_decay(&h, 20, 8, 1).unwrap();
        assert!(d.median_rate >= 1.0 - 1e-9 && d.max_rate <= 1.0 + 1e-9);

        let t = generators::regular_graph_transition(60, 10, 3).unwrap();
        let h = Hmm::new(t, random_observation(60, 4, 4)).unwrap();
        let d = influence_decay_with(&h, 15, 8, 2, true).unwrap();
        assert!(d.max_rate < 1.0);
        for s in &d.steps {
            assert!(s.l2_ratio <= s.certified.unwrap() + 1e-12);
        }
        assert_eq!(d.curve.len(), 16);
        assert!(d.curve.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let rows = decay_rows(&d, 60, 10, 4, 0.5, 2);
        let mut buf = Vec::new();
        write_decay_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,d,m,trial,t,measured_contraction,l1_ratio,certified,alpha_bound,lambda2,seed\n"));
        assert_eq!(text.lines().count(), rows.len() + 1);
    }

    #[test]
    fn uniform_emission_decay_tracks_spectrum() {
        let t = generators::regular_graph_transition(40, 4, 9).unwrap();
        let radius = spectral_gap(&t).unwrap().nontrivial_radius;
        let h = Hmm::new(t, Matrix::from_element(3, 40, 1.0 / 3.0)).unwrap();
        let d = influence_decay(&h, 400, 6, 3).unwrap();
        assert!((d.median_rate - radius).abs() < 0.05, "{} vs {radius}", d.median_rate);
    }
}
