//! Seeded experiment sweeps that write `results.csv` and `manifest.json`.
//!
//! Every random quantity is derived from the config seed, so the same config
//! always produces the same rows. Cells run in a rayon pool and are merged by
//! cell index.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diagnostics::{self, condition_number_A, condition_number_of, count_vector_classes, counting_rank_bound, kruskal_check_hmm};
use crate::error::{Error, Result};
use crate::generators::{self, make_observation, make_transition, ObservationSpec, SupportWeights, TransitionSpec};
use crate::hmm::{Hmm, DEFAULT_ROW_CAP};
use crate::lowerbound;
use crate::moments::{empirical_moment_tensor, exact_moment_tensor};
use crate::recovery::recover;
use crate::rng::derive;
use crate::tensor::DecompositionOptions;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CycleCond,
    DegreeCond,
    RecoverExact,
    RecoverSampled,
    LowerboundDecay,
    Identifiability,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::CycleCond,
        Experiment::DegreeCond,
        Experiment::RecoverExact,
        Experiment::RecoverSampled,
        Experiment::LowerboundDecay,
        Experiment::Identifiability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::CycleCond => "cycle-cond",
            Experiment::DegreeCond => "degree-cond",
            Experiment::RecoverExact => "recover-exact",
            Experiment::RecoverSampled => "recover-sampled",
            Experiment::LowerboundDecay => "lowerbound-decay",
            Experiment::Identifiability => "identifiability",
        }
    }

    /// Header of `results.csv`.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Experiment::CycleCond => &[
                "cell", "n", "m", "tau", "k", "c", "eps", "trials", "finite_trials", "mean_kappa", "geo_mean_kappa", "seed",
                "instance_hash",
            ],
            Experiment::DegreeCond => &[
                "cell", "n", "m", "tau", "k", "d", "eps", "trials", "finite_trials", "mean_kappa", "geo_mean_kappa", "seed",
                "instance_hash",
            ],
            Experiment::RecoverExact | Experiment::RecoverSampled => &[
                "cell", "n", "m", "tau", "k", "transition", "trial", "samples", "kruskal", "status", "t_error", "o_error",
                "max_column_l1", "reconstruction_error", "retries", "detail", "seed", "instance_hash",
            ],
            Experiment::LowerboundDecay => &[
                "n", "d", "m", "graph", "graph_trial", "trial", "t", "measured_contraction", "l1_ratio", "certified",
                "alpha_bound", "lambda2", "median_rate", "seed", "instance_hash",
            ],
            Experiment::Identifiability => &[
                "check", "n", "m", "c", "t", "measured", "bound", "kappa", "kruskal", "pass", "seed", "instance_hash",
            ],
        }
    }

    /// One line per CSV column, for help text.
    pub fn column_help(self) -> &'static str {
        match self {
            Experiment::CycleCond => {
                "results.csv columns:\ncell: sweep cell index\nn, m, tau, k: states, alphabet, window, output support size\n\
                 c, eps: short-cycle length and its mixture weight\ntrials, finite_trials: instances drawn and those with finite κ\n\
                 mean_kappa, geo_mean_kappa: arithmetic and geometric mean of κ(A) over trials\n\
                 seed: run seed\ninstance_hash: hash of every instance spec in the cell"
            }
            Experiment::DegreeCond => {
                "results.csv columns:\ncell: sweep cell index\nn, m, tau, k: states, alphabet, window, output support size\n\
                 d, eps: out-degree of the random digraph and its per-edge weight\n\
                 trials, finite_trials: instances drawn and those with finite κ\n\
                 mean_kappa, geo_mean_kappa: arithmetic and geometric mean of κ(A) over trials\n\
                 seed: run seed\ninstance_hash: hash of every instance spec in the cell"
            }
            Experiment::RecoverExact | Experiment::RecoverSampled => {
                "results.csv columns:\ncell, trial: grid cell and repetition\nn, m, tau, k: states, alphabet, window, output support size\n\
                 transition: transition family\nsamples: windows drawn (empty for exact moments)\n\
                 kruskal: satisfied or violated at this window\nstatus: ok, kruskal_violated or failed\n\
                 t_error, o_error: max column ℓ1 error of the aligned T and O estimates\n\
                 max_column_l1: larger of the two\nreconstruction_error: tensor residual of the decomposition\n\
                 retries: projection draws used\ndetail: error message when status is failed\n\
                 seed: instance seed\ninstance_hash: hash of the instance spec"
            }
            Experiment::LowerboundDecay => {
                "results.csv columns:\nn, d, m: states, graph degree (1 for the directed cycle), alphabet\n\
                 graph: regular or cycle\ngraph_trial, trial: graph repetition and output string\n\
                 t: conditioned step\nmeasured_contraction: ℓ2 ratio of the propagated difference\n\
                 l1_ratio: ℓ1 ratio of the propagated difference\ncertified: restricted ℓ2 norm when --certify is set\n\
                 alpha_bound: deviation term of the contraction bound\nlambda2: second eigenvalue magnitude (empty for the cycle)\n\
                 median_rate: median per-string geometric ℓ1 rate on this graph\n\
                 seed: graph seed\ninstance_hash: hash of the instance spec"
            }
            Experiment::Identifiability => {
                "results.csv columns:\ncheck: count_rank, de_bruijn_rank or de_bruijn_recovery\nn, m, c, t: states, alphabet, cycle length, window\n\
                 measured: rank, or recovery error\nbound: count-vector bound, n, or error tolerance\n\
                 kappa: κ(A) at this window\nkruskal: satisfied or violated\npass: whether measured respects bound\n\
                 seed: instance seed\ninstance_hash: hash of the instance spec"
            }
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment {s:?}")))
    }
}

/// Transition family used by the recovery experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionKind {
    Cycle,
    CycleMixture,
    Union,
    DegreeMixture,
    Regular,
    Identity,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 6] = [
        TransitionKind::Cycle,
        TransitionKind::CycleMixture,
        TransitionKind::Union,
        TransitionKind::DegreeMixture,
        TransitionKind::Regular,
        TransitionKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransitionKind::Cycle => "cycle",
            TransitionKind::CycleMixture => "cycle-mixture",
            TransitionKind::Union => "union",
            TransitionKind::DegreeMixture => "degree-mixture",
            TransitionKind::Regular => "regular",
            TransitionKind::Identity => "identity",
        }
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransitionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown transition kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Hidden state counts; every value is a sweep dimension.
    pub n: Vec<usize>,
    /// Alphabet sizes; every value is a sweep dimension.
    pub m: Vec<usize>,
    /// Window length. When unset the conditioning sweeps use the smallest
    /// `tau` with `m^tau ≥ n`, and recovery the smallest such `tau` whose
    /// factors pass the Kruskal check.
    pub tau: Option<usize>,
    /// Output support size `k` of random observation columns.
    pub support: usize,
    pub weights: SupportWeights,
    pub transitions: Vec<TransitionKind>,
    /// Cycle lengths. For recovery only the first is used, and when empty
    /// the smallest divisor `c` of `n` with `2c ≥ n` is taken.
    pub cycles: Vec<usize>,
    /// Out-degrees. For recovery only the first is used.
    pub degrees: Vec<usize>,
    /// Mixture weights. For recovery only the first is used.
    pub eps: Vec<f64>,
    /// Window counts for `recover-sampled`.
    pub samples: Vec<usize>,
    /// Conditioned steps per output string for `lowerbound-decay`.
    pub steps: usize,
    /// Output strings per graph for `lowerbound-decay`.
    pub strings: usize,
    /// Also compute the restricted ℓ2 norm of every conditioned step.
    pub certify: bool,
    pub trials: usize,
    pub seed: u64,
    /// Fixes the recovery instance instead of deriving one per trial.
    pub instance_seed: Option<u64>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for `experiment`.
    pub fn new(experiment: Experiment, seed: u64, out: impl Into<PathBuf>) -> Self {
        let base = ExperimentConfig {
            experiment,
            n: vec![128],
            m: vec![8],
            tau: None,
            support: 4,
            weights: SupportWeights::Simplex,
            transitions: vec![TransitionKind::Cycle],
            cycles: vec![],
            degrees: vec![],
            eps: vec![],
            samples: vec![],
            steps: 20,
            strings: 5,
            certify: false,
            trials: 10,
            seed,
            instance_seed: None,
            out: out.into(),
        };
        match experiment {
            Experiment::CycleCond => ExperimentConfig { cycles: vec![2, 4, 8, 16], eps: vec![0.1, 0.2, 0.4], ..base },
            Experiment::DegreeCond => ExperimentConfig { degrees: vec![2, 4, 8, 16], eps: vec![0.02, 0.04, 0.06], ..base },
            Experiment::RecoverExact => {
                ExperimentConfig { n: vec![4], m: vec![3], support: 2, eps: vec![0.1], degrees: vec![2], ..base }
            }
            Experiment::RecoverSampled => ExperimentConfig {
                n: vec![4],
                m: vec![3],
                support: 2,
                eps: vec![0.1],
                degrees: vec![2],
                samples: vec![1_000, 10_000, 100_000, 1_000_000],
                trials: 5,
                ..base
            },
            Experiment::LowerboundDecay => {
                ExperimentConfig { n: vec![100, 500], degrees: vec![16], trials: 20, ..base }
            }
            Experiment::Identifiability => {
                ExperimentConfig { n: vec![8, 12, 16], m: vec![2], cycles: vec![1, 2], tau: Some(5), ..base }
            }
        }
    }

    /// Check every parameter before any work is done.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n.is_empty() || self.m.is_empty() {
            return bad("at least one value of n and m is required".into());
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 2) {
            return bad(format!("n = {n} must be at least 2"));
        }
        if let Some(&m) = self.m.iter().find(|&&m| m < 2) {
            return bad(format!("m = {m} must be at least 2"));
        }
        if self.tau == Some(0) {
            return bad("tau must be at least 1".into());
        }
        if let Some(&e) = self.eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return bad(format!("eps = {e} outside [0, 1]"));
        }
        let uses_support = !matches!(self.experiment, Experiment::LowerboundDecay | Experiment::Identifiability);
        if uses_support {
            if let Some(&m) = self.m.iter().find(|&&m| self.support == 0 || self.support > m) {
                return bad(format!("support size {} must be in 1..={m}", self.support));
            }
        }
        match self.experiment {
            Experiment::CycleCond => {
                require(!self.cycles.is_empty() && !self.eps.is_empty(), "cycle-cond needs --cycles and --eps")?;
                for &n in &self.n {
                    for &c in &self.cycles {
                        if c == 0 || n % c != 0 {
                            return bad(format!("cycle length {c} does not divide n = {n}"));
                        }
                    }
                }
                self.check_windows()
            }
            Experiment::DegreeCond => {
                require(!self.degrees.is_empty() && !self.eps.is_empty(), "degree-cond needs --degrees and --eps")?;
                for &n in &self.n {
                    for &d in &self.degrees {
                        if d == 0 || d >= n {
                            return bad(format!("degree {d} needs 1 <= d < n = {n}"));
                        }
                        for &e in &self.eps {
                            if e * d as f64 > 1.0 + 1e-15 {
                                return bad(format!("eps·d = {} exceeds 1 for d = {d}, eps = {e}", e * d as f64));
                            }
                        }
                    }
                }
                self.check_windows()
            }
            Experiment::RecoverExact | Experiment::RecoverSampled => {
                require(!self.transitions.is_empty(), "at least one transition kind is required")?;
                if self.experiment == Experiment::RecoverSampled {
                    require(!self.samples.is_empty(), "recover-sampled needs --samples")?;
                    require(self.samples.iter().all(|&s| s > 0), "sample counts must be positive")?;
                }
                for &n in &self.n {
                    for &kind in &self.transitions {
                        self.recovery_transition(kind, n, 0)?;
                    }
                    for &m in &self.m {
                        if let Some(tau) = self.tau {
                            let rows = checked_pow(m, tau);
                            if rows < n as u128 {
                                return bad(format!("m^tau = {rows} is below n = {n}"));
                            }
                            check_tensor_cap(m, tau)?;
                        } else {
                            check_tensor_cap(m, smallest_full_tau(n, m))?;
                        }
                    }
                }
                Ok(())
            }
            Experiment::LowerboundDecay => {
                require(!self.degrees.is_empty(), "lowerbound-decay needs --degrees")?;
                require(self.steps > 0 && self.strings > 0, "steps and strings must be positive")?;
                for &n in &self.n {
                    for &d in &self.degrees {
                        if d == 0 || d >= n || (n * d) % 2 != 0 {
                            return bad(format!("no {d}-regular graph on {n} vertices"));
                        }
                    }
                }
                Ok(())
            }
            Experiment::Identifiability => {
                let t = self.tau.unwrap_or(5);
                for &m in &self.m {
                    if checked_pow(m, t) > DEFAULT_ROW_CAP as u128 {
                        return bad(format!("m^tau = {} exceeds the row cap", checked_pow(m, t)));
                    }
                    for &n in &self.n {
                        if let Some(j) = exact_log(n, m) {
                            check_tensor_cap(m, j)?;
                        }
                    }
                }
                require(self.cycles.iter().all(|&c| c > 0), "cycle lengths must be positive")
            }
        }
    }

    fn check_windows(&self) -> Result<()> {
        for &n in &self.n {
            for &m in &self.m {
                let tau = self.tau.unwrap_or_else(|| smallest_full_tau(n, m));
                let rows = checked_pow(m, tau);
                if rows < n as u128 {
                    return Err(Error::InvalidConfig(format!("m^tau = {rows} is below n = {n}, κ would be infinite")));
                }
                if rows > DEFAULT_ROW_CAP as u128 {
                    return Err(Error::InvalidConfig(format!("m^tau = {rows} exceeds the row cap {DEFAULT_ROW_CAP}")));
                }
            }
        }
        Ok(())
    }

    fn recovery_transition(&self, kind: TransitionKind, n: usize, seed: u64) -> Result<TransitionSpec> {
        let c = match self.cycles.first() {
            Some(&c) => c,
            None => (1..=n).find(|c| n % c == 0 && 2 * c >= n).unwrap_or(n),
        };
        let d = self.degrees.first().copied().unwrap_or(2);
        let eps = self.eps.first().copied().unwrap_or(0.1);
        let needs_c = matches!(kind, TransitionKind::CycleMixture | TransitionKind::Union);
        if needs_c && (c == 0 || n % c != 0) {
            return Err(Error::InvalidConfig(format!("cycle length {c} does not divide n = {n}")));
        }
        let needs_d = matches!(kind, TransitionKind::DegreeMixture | TransitionKind::Regular);
        if needs_d && (d == 0 || d >= n) {
            return Err(Error::InvalidConfig(format!("degree {d} needs 1 <= d < n = {n}")));
        }
        if kind == TransitionKind::DegreeMixture && eps * d as f64 > 1.0 + 1e-15 {
            return Err(Error::InvalidConfig(format!("eps·d = {} exceeds 1", eps * d as f64)));
        }
        Ok(match kind {
            TransitionKind::Cycle => TransitionSpec::CyclePermutation { n },
            TransitionKind::CycleMixture => TransitionSpec::CycleMixture { n, c, eps },
            TransitionKind::Union => TransitionSpec::UnionOfCycles { n, c },
            TransitionKind::DegreeMixture => TransitionSpec::DegreeMixture { n, d, eps, seed },
            TransitionKind::Regular => TransitionSpec::RegularDigraph { n, d, seed },
            TransitionKind::Identity => TransitionSpec::Identity { n },
        })
    }

    /// Window used by the conditioning sweeps for `(n, m)`.
    pub fn conditioning_tau(&self, n: usize, m: usize) -> usize {
        self.tau.unwrap_or_else(|| smallest_full_tau(n, m))
    }
}

fn require(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg.into()))
    }
}

fn checked_pow(m: usize, t: usize) -> u128 {
    (m as u128).checked_pow(t as u32).unwrap_or(u128::MAX)
}

fn smallest_full_tau(n: usize, m: usize) -> usize {
    let mut tau = 1;
    while checked_pow(m, tau) < n as u128 {
        tau += 1;
    }
    tau
}

fn check_tensor_cap(m: usize, tau: usize) -> Result<()> {
    let cells = checked_pow(m, 2 * tau + 1);
    if cells > DEFAULT_ROW_CAP as u128 {
        return Err(Error::InvalidConfig(format!("moment tensor with m^(2tau+1) = {cells} cells exceeds the cap")));
    }
    Ok(())
}

fn exact_log(n: usize, m: usize) -> Option<usize> {
    let mut p = 1u128;
    let mut j = 0;
    while p < n as u128 {
        p *= m as u128;
        j += 1;
    }
    (p == n as u128 && j > 0).then_some(j)
}

/// Short SHA-256 of the JSON encoding of `value`.
pub fn instance_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("instance specs serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// SHA-256 of `blob <len>\0<content>`, the framing git uses for blobs.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

fn mean_kappas(kappas: &[f64]) -> (usize, f64, f64) {
    let finite = kappas.iter().filter(|k| k.is_finite()).count();
    let mean = kappas.iter().sum::<f64>() / kappas.len() as f64;
    let geo = (kappas.iter().map(|k| k.ln()).sum::<f64>() / kappas.len() as f64).exp();
    (finite, mean, geo)
}

const OBSERVATION_STREAM: u64 = 1;
const DIGRAPH_STREAM: u64 = 2;

fn fig3_observation(cfg: &ExperimentConfig, n: usize, m: usize, trial: usize) -> ObservationSpec {
    ObservationSpec::RandomSupport {
        n,
        m,
        k: cfg.support,
        seed: derive(derive(cfg.seed, OBSERVATION_STREAM), trial as u64),
        weights: cfg.weights,
    }
}

#[derive(Debug, Clone, Serialize)]
struct CycleRow {
    cell: usize,
    n: usize,
    m: usize,
    tau: usize,
    k: usize,
    c: usize,
    eps: f64,
    trials: usize,
    finite_trials: usize,
    mean_kappa: f64,
    geo_mean_kappa: f64,
    seed: u64,
    instance_hash: String,
}

#[derive(Debug, Clone, Serialize)]
struct DegreeRow {
    cell: usize,
    n: usize,
    m: usize,
    tau: usize,
    k: usize,
    d: usize,
    eps: f64,
    trials: usize,
    finite_trials: usize,
    mean_kappa: f64,
    geo_mean_kappa: f64,
    seed: u64,
    instance_hash: String,
}

fn conditioning_cell(
    cfg: &ExperimentConfig,
    n: usize,
    m: usize,
    transition: impl Fn(usize) -> TransitionSpec,
) -> Result<(usize, Vec<f64>, String)> {
    let tau = cfg.conditioning_tau(n, m);
    let mut specs = Vec::with_capacity(cfg.trials);
    let mut kappas = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let (ts, os) = (transition(trial), fig3_observation(cfg, n, m, trial));
        let h = Hmm::new(make_transition(&ts)?, make_observation(&os)?)?;
        kappas.push(condition_number_A(&h, tau)?);
        specs.push((ts, os));
    }
    Ok((tau, kappas, instance_hash(&(&specs, tau))))
}

fn cycle_cond(cfg: &ExperimentConfig) -> Vec<Result<Vec<CycleRow>>> {
    let cells: Vec<(usize, usize, usize, f64)> = grid4(&cfg.n, &cfg.m, &cfg.cycles, &cfg.eps);
    cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(n, m, c, eps))| {
            let (tau, kappas, hash) = conditioning_cell(cfg, n, m, |_| TransitionSpec::CycleMixture { n, c, eps })?;
            let (finite_trials, mean_kappa, geo_mean_kappa) = mean_kappas(&kappas);
            Ok(vec![CycleRow {
                cell,
                n,
                m,
                tau,
                k: cfg.support,
                c,
                eps,
                trials: cfg.trials,
                finite_trials,
                mean_kappa,
                geo_mean_kappa,
                seed: cfg.seed,
                instance_hash: hash,
            }])
        })
        .collect()
}

fn degree_cond(cfg: &ExperimentConfig) -> Vec<Result<Vec<DegreeRow>>> {
    let cells = grid4(&cfg.n, &cfg.m, &cfg.degrees, &cfg.eps);
    cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(n, m, d, eps))| {
            let graph_seed = |trial: usize| derive(derive(derive(cfg.seed, DIGRAPH_STREAM), d as u64), trial as u64);
            let (tau, kappas, hash) =
                conditioning_cell(cfg, n, m, |trial| TransitionSpec::DegreeMixture { n, d, eps, seed: graph_seed(trial) })?;
            let (finite_trials, mean_kappa, geo_mean_kappa) = mean_kappas(&kappas);
            Ok(vec![DegreeRow {
                cell,
                n,
                m,
                tau,
                k: cfg.support,
                d,
                eps,
                trials: cfg.trials,
                finite_trials,
                mean_kappa,
                geo_mean_kappa,
                seed: cfg.seed,
                instance_hash: hash,
            }])
        })
        .collect()
}

fn grid4<A: Copy, B: Copy>(n: &[usize], m: &[usize], a: &[A], b: &[B]) -> Vec<(usize, usize, A, B)> {
    let mut out = Vec::new();
    for &n in n {
        for &m in m {
            for &x in a {
                for &y in b {
                    out.push((n, m, x, y));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
struct RecoveryRow {
    cell: usize,
    n: usize,
    m: usize,
    tau: usize,
    k: usize,
    transition: String,
    trial: usize,
    samples: Option<usize>,
    kruskal: &'static str,
    status: &'static str,
    t_error: Option<f64>,
    o_error: Option<f64>,
    max_column_l1: Option<f64>,
    reconstruction_error: Option<f64>,
    retries: Option<usize>,
    detail: String,
    seed: u64,
    instance_hash: String,
}

struct RecoveryInstance {
    h: Hmm,
    tau: usize,
    kruskal: bool,
    hash: String,
}

fn recovery_instance(cfg: &ExperimentConfig, kind: TransitionKind, n: usize, m: usize, seed: u64) -> Result<RecoveryInstance> {
    let ts = cfg.recovery_transition(kind, n, derive(seed, 1))?;
    let os = ObservationSpec::RandomSupport { n, m, k: cfg.support, seed, weights: cfg.weights };
    let h = Hmm::new(make_transition(&ts)?, make_observation(&os)?)?;
    let (tau, kruskal) = match cfg.tau {
        Some(tau) => (tau, kruskal_check_hmm(&h, tau)?.satisfied()),
        None => {
            let first = smallest_full_tau(n, m);
            let mut found = None;
            let mut tau = first;
            while checked_pow(m, 2 * tau + 1) <= DEFAULT_ROW_CAP as u128 {
                if kruskal_check_hmm(&h, tau)?.satisfied() {
                    found = Some(tau);
                    break;
                }
                tau += 1;
            }
            match found {
                Some(tau) => (tau, true),
                None => (first, false),
            }
        }
    };
    let hash = instance_hash(&(&ts, &os, tau));
    Ok(RecoveryInstance { h, tau, kruskal, hash })
}

fn recovery_row(
    cfg: &ExperimentConfig,
    cell: usize,
    kind: TransitionKind,
    trial: usize,
    samples: Option<usize>,
    inst: &RecoveryInstance,
    seed: u64,
    outcome: Option<Result<crate::recovery::RecoveredHmm>>,
) -> RecoveryRow {
    let mut row = RecoveryRow {
        cell,
        n: inst.h.n(),
        m: inst.h.m(),
        tau: inst.tau,
        k: cfg.support,
        transition: kind.name().into(),
        trial,
        samples,
        kruskal: if inst.kruskal { "satisfied" } else { "violated" },
        status: "kruskal_violated",
        t_error: None,
        o_error: None,
        max_column_l1: None,
        reconstruction_error: None,
        retries: None,
        detail: String::new(),
        seed,
        instance_hash: inst.hash.clone(),
    };
    match outcome {
        None => {}
        Some(Ok(r)) => {
            let e = r.errors.expect("reference given");
            row.status = "ok";
            row.t_error = Some(e.t_max_column_l1);
            row.o_error = Some(e.o_max_column_l1);
            row.max_column_l1 = Some(e.max_column_l1);
            row.reconstruction_error = Some(r.reconstruction_error);
            row.retries = Some(r.retries_used);
        }
        Some(Err(e)) => {
            row.status = "failed";
            row.detail = e.to_string();
        }
    }
    row
}

fn recovery_cells(cfg: &ExperimentConfig) -> Vec<(usize, usize, TransitionKind)> {
    let mut cells = Vec::new();
    for &n in &cfg.n {
        for &m in &cfg.m {
            for &kind in &cfg.transitions {
                cells.push((n, m, kind));
            }
        }
    }
    cells
}

fn recover_exact(cfg: &ExperimentConfig) -> Vec<Result<Vec<RecoveryRow>>> {
    let cells = recovery_cells(cfg);
    cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(n, m, kind))| {
            (0..cfg.trials)
                .map(|trial| {
                    let seed = match cfg.instance_seed {
                        Some(s) => s,
                        None => derive(cfg.seed, trial as u64),
                    };
                    let inst = recovery_instance(cfg, kind, n, m, seed)?;
                    let outcome = inst.kruskal.then(|| {
                        let mt = exact_moment_tensor(&inst.h, inst.tau)?;
                        let dseed = derive(derive(seed, 2), trial as u64);
                        recover(&mt, n, dseed, &DecompositionOptions::default(), Some(&inst.h))
                    });
                    Ok(recovery_row(cfg, cell, kind, trial, None, &inst, seed, outcome))
                })
                .collect()
        })
        .collect()
}

fn recover_sampled(cfg: &ExperimentConfig) -> Vec<Result<Vec<RecoveryRow>>> {
    let seed = cfg.instance_seed.unwrap_or(cfg.seed);
    let cells = recovery_cells(cfg);
    cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(n, m, kind))| {
            let inst = recovery_instance(cfg, kind, n, m, seed)?;
            let mut rows = Vec::new();
            for &s in &cfg.samples {
                for trial in 0..cfg.trials {
                    let outcome = inst.kruskal.then(|| {
                        let wseed = derive(derive(derive(seed, 3), trial as u64), s as u64);
                        let windows = inst.h.sample_windows(inst.tau, s, wseed)?;
                        let mt = empirical_moment_tensor(&windows, m, inst.tau)?;
                        let dseed = derive(derive(seed, 2), trial as u64);
                        recover(&mt, n, dseed, &DecompositionOptions::noisy(), Some(&inst.h))
                    });
                    rows.push(recovery_row(cfg, cell, kind, trial, Some(s), &inst, seed, outcome));
                }
            }
            Ok(rows)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct DecayCsvRow {
    n: usize,
    d: usize,
    m: usize,
    graph: &'static str,
    graph_trial: usize,
    trial: usize,
    t: usize,
    measured_contraction: f64,
    l1_ratio: f64,
    certified: Option<f64>,
    alpha_bound: f64,
    lambda2: Option<f64>,
    median_rate: f64,
    seed: u64,
    instance_hash: String,
}

const DECAY_STREAM: u64 = 4;

fn lowerbound_decay(cfg: &ExperimentConfig) -> Vec<Result<Vec<DecayCsvRow>>> {
    // Cells: every (n, d, m, graph trial) on a regular graph, then one
    // directed-cycle contrast per (n, m).
    #[derive(Clone, Copy)]
    enum Cell {
        Regular { n: usize, d: usize, m: usize, trial: usize },
        Cycle { n: usize, m: usize },
    }
    let mut cells = Vec::new();
    for &n in &cfg.n {
        for &m in &cfg.m {
            for &d in &cfg.degrees {
                for trial in 0..cfg.trials {
                    cells.push(Cell::Regular { n, d, m, trial });
                }
            }
            cells.push(Cell::Cycle { n, m });
        }
    }
    cells
        .par_iter()
        .map(|&cell| {
            let (n, d, m, graph, graph_trial, t, lambda2, seed) = match cell {
                Cell::Regular { n, d, m, trial } => {
                    let seed = derive(derive(derive(cfg.seed, DECAY_STREAM), (n * 1_000_003 + d) as u64), trial as u64);
                    let t = generators::regular_graph_transition(n, d, seed)?;
                    let l2 = lowerbound::spectral_gap(&t)?.lambda2;
                    (n, d, m, "regular", trial, t, Some(l2), seed)
                }
                Cell::Cycle { n, m } => {
                    let seed = derive(derive(cfg.seed, DECAY_STREAM + 1), n as u64);
                    (n, 1, m, "cycle", 0, generators::cycle(n), None, seed)
                }
            };
            let o_seed = derive(seed, m as u64);
            let h = Hmm::new(t, lowerbound::random_observation(n, m, o_seed))?;
            let decay = lowerbound::influence_decay_with(&h, cfg.steps, cfg.strings, derive(seed, 7), cfg.certify)?;
            let hash = instance_hash(&json!({"graph": graph, "n": n, "d": d, "seed": seed, "m": m, "observation_seed": o_seed}));
            let alpha = lowerbound::alpha_bound(n, d, m);
            Ok(decay
                .steps
                .iter()
                .map(|s| DecayCsvRow {
                    n,
                    d,
                    m,
                    graph,
                    graph_trial,
                    trial: s.trial,
                    t: s.t,
                    measured_contraction: s.l2_ratio,
                    l1_ratio: s.l1_ratio,
                    certified: s.certified,
                    alpha_bound: alpha,
                    lambda2,
                    median_rate: decay.median_rate,
                    seed,
                    instance_hash: hash.clone(),
                })
                .collect())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct IdentRow {
    check: &'static str,
    n: usize,
    m: usize,
    c: Option<usize>,
    t: usize,
    measured: f64,
    bound: f64,
    kappa: Option<f64>,
    kruskal: &'static str,
    pass: bool,
    seed: u64,
    instance_hash: String,
}

const IDENT_STREAM: u64 = 5;

fn identifiability(cfg: &ExperimentConfig) -> Vec<Result<Vec<IdentRow>>> {
    #[derive(Clone, Copy)]
    enum Cell {
        Counting { n: usize, m: usize, c: usize },
        DeBruijn { n: usize, m: usize, j: usize },
    }
    let max_t = cfg.tau.unwrap_or(5);
    let mut cells = Vec::new();
    for &n in &cfg.n {
        for &m in &cfg.m {
            for &c in cfg.cycles.iter().filter(|&&c| n % c == 0) {
                cells.push(Cell::Counting { n, m, c });
            }
            if let Some(j) = exact_log(n, m) {
                cells.push(Cell::DeBruijn { n, m, j });
            }
        }
    }
    let verdict = |ok: bool| if ok { "satisfied" } else { "violated" };
    cells
        .par_iter()
        .map(|&cell| match cell {
            Cell::Counting { n, m, c } => {
                let seed = derive(derive(derive(cfg.seed, IDENT_STREAM), n as u64), c as u64);
                let ts = TransitionSpec::UnionOfCycles { n, c };
                let os = ObservationSpec::RandomSupport { n, m, k: m, seed, weights: SupportWeights::Simplex };
                let h = Hmm::new(make_transition(&ts)?, make_observation(&os)?)?;
                let hash = instance_hash(&(&ts, &os));
                (c.max(1)..=max_t)
                    .map(|t| {
                        let a = h.likelihood_matrix(t)?;
                        let rank = linalg::numerical_rank(&a, diagnostics::RANK_TOL);
                        let classes = count_vector_classes(c, m, t)?;
                        let bound = classes.min(n).min(counting_rank_bound(c, m, t)?.min(usize::MAX as u64) as usize);
                        Ok(IdentRow {
                            check: "count_rank",
                            n,
                            m,
                            c: Some(c),
                            t,
                            measured: rank as f64,
                            bound: bound as f64,
                            kappa: Some(condition_number_of(&a, n)),
                            kruskal: verdict(kruskal_check_hmm(&h, t)?.satisfied()),
                            pass: rank <= bound,
                            seed,
                            instance_hash: hash.clone(),
                        })
                    })
                    .collect()
            }
            Cell::DeBruijn { n, m, j } => {
                let ts = TransitionSpec::CyclePermutation { n };
                let os = ObservationSpec::DeBruijn { n, m };
                let h = Hmm::new(make_transition(&ts)?, make_observation(&os)?)?;
                let hash = instance_hash(&(&ts, &os));
                let a = h.likelihood_matrix(j)?;
                let rank = linalg::numerical_rank(&a, diagnostics::RANK_TOL);
                let kappa = condition_number_of(&a, n);
                let kruskal = verdict(kruskal_check_hmm(&h, j)?.satisfied());
                let seed = derive(derive(cfg.seed, IDENT_STREAM), 0);
                let error = exact_moment_tensor(&h, j)
                    .and_then(|mt| recover(&mt, n, seed, &DecompositionOptions::default(), Some(&h)))
                    .map(|r| r.errors.expect("reference given").max_column_l1)
                    .unwrap_or(f64::INFINITY);
                Ok(vec![
                    IdentRow {
                        check: "de_bruijn_rank",
                        n,
                        m,
                        c: None,
                        t: j,
                        measured: rank as f64,
                        bound: n as f64,
                        kappa: Some(kappa),
                        kruskal,
                        pass: rank == n && (kappa - 1.0).abs() < 1e-9,
                        seed,
                        instance_hash: hash.clone(),
                    },
                    IdentRow {
                        check: "de_bruijn_recovery",
                        n,
                        m,
                        c: None,
                        t: j,
                        measured: error,
                        bound: 1e-8,
                        kappa: Some(kappa),
                        kruskal,
                        pass: error <= 1e-8,
                        seed,
                        instance_hash: hash,
                    },
                ])
            }
        })
        .collect()
}

/// What `run` produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub results: PathBuf,
    pub manifest: PathBuf,
    pub rows: usize,
    pub summary: Value,
}

/// Completed cells and the first error among the failed ones.
struct Collected {
    csv: Vec<u8>,
    rows: usize,
    failed: Vec<(usize, String)>,
}

fn collect<R: Serialize>(experiment: Experiment, cells: Vec<Result<Vec<R>>>) -> Result<Collected> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    wr.write_record(experiment.columns())?;
    let mut rows = 0;
    let mut failed = Vec::new();
    for (i, cell) in cells.into_iter().enumerate() {
        match cell {
            Ok(rs) => {
                for r in rs {
                    wr.serialize(r)?;
                    rows += 1;
                }
            }
            Err(e) => failed.push((i, e.to_string())),
        }
    }
    let csv = wr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(Collected { csv, rows, failed })
}

/// Validate `config`, run the experiment and write `<out>/results.csv` and
/// `<out>/manifest.json`. Cells that fail are left out of the CSV, the
/// manifest is marked partial, and an error is returned after both files are
/// written.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let collected = match config.experiment {
        Experiment::CycleCond => collect(config.experiment, cycle_cond(config))?,
        Experiment::DegreeCond => collect(config.experiment, degree_cond(config))?,
        Experiment::RecoverExact => collect(config.experiment, recover_exact(config))?,
        Experiment::RecoverSampled => collect(config.experiment, recover_sampled(config))?,
        Experiment::LowerboundDecay => collect(config.experiment, lowerbound_decay(config))?,
        Experiment::Identifiability => collect(config.experiment, identifiability(config))?,
    };
    let summary = summarize(config, &collected.csv)?;
    let partial = !collected.failed.is_empty();
    fs::create_dir_all(&config.out)?;
    let results = config.out.join("results.csv");
    let manifest = config.out.join("manifest.json");
    fs::write(&results, &collected.csv)?;
    let config_json = serde_json::to_vec(config)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let doc = json!({
        "experiment": config.experiment,
        "config": config,
        "seed": config.seed,
        "input_hash": content_hash(&config_json),
        "results_hash": content_hash(&collected.csv),
        "created_unix": created,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "defaults": declared_defaults(config),
        "note": note(config.experiment),
        "rows": collected.rows,
        "partial": partial,
        "failed_cells": collected.failed.iter().map(|(i, e)| json!({"cell": i, "error": e})).collect::<Vec<_>>(),
        "summary": summary,
    });
    fs::write(&manifest, serde_json::to_string_pretty(&doc)? + "\n")?;
    if let Some((cell, msg)) = collected.failed.first() {
        return Err(Error::Partial { failed: collected.failed.len(), first_cell: *cell, message: msg.clone() });
    }
    Ok(RunReport { results, manifest, rows: collected.rows, summary })
}

fn declared_defaults(cfg: &ExperimentConfig) -> Value {
    let windows: Vec<Value> = cfg
        .n
        .iter()
        .flat_map(|&n| cfg.m.iter().map(move |&m| (n, m)))
        .map(|(n, m)| json!({"n": n, "m": m, "tau": cfg.tau.unwrap_or_else(|| smallest_full_tau(n, m))}))
        .collect();
    json!({
        "observation": {"kind": "random_support", "k": cfg.support, "weights": cfg.weights},
        "tau_rule": if cfg.tau.is_some() { "fixed" } else { "smallest tau with m^tau >= n" },
        "windows": windows,
        "observation_seeds": "shared across cells: trial t uses derive(derive(seed, 1), t)",
    })
}

fn note(experiment: Experiment) -> &'static str {
    match experiment {
        Experiment::CycleCond | Experiment::DegreeCond => {
            "Condition numbers are judged by rank-correlation trends across the sweep, not by absolute value."
        }
        Experiment::RecoverExact => "Errors are max column l1 distances after aligning recovered states to the generator.",
        Experiment::RecoverSampled => "Errors are max column l1 distances; the summary reports the log-log slope of median error against samples.",
        Experiment::LowerboundDecay => "Rates are geometric means of per-step l1 contraction of a propagated start-distribution difference.",
        Experiment::Identifiability => "Ranks use a 1e-8 relative singular value cutoff.",
    }
}

fn summarize(cfg: &ExperimentConfig, csv: &[u8]) -> Result<Value> {
    let records = read_records(csv)?;
    let num = |r: &BTreeMap<String, String>, k: &str| r.get(k).and_then(|v| v.parse::<f64>().ok());
    Ok(match cfg.experiment {
        Experiment::CycleCond | Experiment::DegreeCond => {
            let (dim, dim_expect) = if cfg.experiment == Experiment::CycleCond {
                ("c", Trend::Decreasing)
            } else {
                ("d", Trend::Increasing)
            };
            let queries = [
                TrendQuery::new(&["n", "m", dim], "eps", "mean_kappa", Trend::Increasing),
                TrendQuery::new(&["n", "m", "eps"], dim, "mean_kappa", dim_expect),
            ];
            let tests: Vec<Value> = queries
                .iter()
                .map(|q| match trend_test(csv, q) {
                    Ok(r) => json!({"query": q, "report": r}),
                    Err(e) => json!({"query": q, "error": e.to_string()}),
                })
                .collect();
            json!({"trend_tests": tests})
        }
        Experiment::RecoverExact => {
            let count = |s: &str| records.iter().filter(|r| r["status"] == s).count();
            let max_err = records.iter().filter_map(|r| num(r, "max_column_l1")).fold(0.0, f64::max);
            json!({"ok": count("ok"), "kruskal_violated": count("kruskal_violated"), "failed": count("failed"), "max_column_l1": max_err})
        }
        Experiment::RecoverSampled => {
            let mut by_cell: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
            for r in &records {
                let cell = r["cell"].parse().unwrap_or(0);
                let s = r["samples"].parse().unwrap_or(0);
                by_cell.entry((cell, s)).or_default().push(num(r, "max_column_l1").unwrap_or(f64::INFINITY));
            }
            let mut cells: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
            for ((cell, s), mut errs) in by_cell {
                cells.entry(cell).or_default().push((s, linalg::median(&mut errs)));
            }
            let out: Vec<Value> = cells
                .into_iter()
                .map(|(cell, pts)| {
                    let x: Vec<f64> = pts.iter().map(|p| (p.0 as f64).log10()).collect();
                    let y: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
                    let slope = if pts.len() >= 2 && y.iter().all(|v| v.is_finite()) { Some(linalg::ols_slope(&x, &y)) } else { None };
                    json!({"cell": cell, "median_error": pts.iter().map(|p| json!({"samples": p.0, "error": p.1})).collect::<Vec<_>>(), "log_log_slope": slope})
                })
                .collect();
            json!({"cells": out})
        }
        Experiment::LowerboundDecay => {
            let mut groups: BTreeMap<(usize, usize, String), (f64, f64, f64, f64)> = BTreeMap::new();
            for r in &records {
                let key = (r["n"].parse().unwrap_or(0), r["d"].parse().unwrap_or(0), r["graph"].clone());
                let e = groups.entry(key).or_insert((0.0, 0.0, f64::INFINITY, 0.0));
                e.0 = e.0.max(num(r, "lambda2").unwrap_or(0.0));
                e.1 = e.1.max(num(r, "median_rate").unwrap_or(0.0));
                e.2 = e.2.min(num(r, "median_rate").unwrap_or(f64::INFINITY));
                e.3 = e.3.max(num(r, "l1_ratio").unwrap_or(0.0));
            }
            let out: Vec<Value> = groups
                .into_iter()
                .map(|((n, d, graph), (l2, rate_max, rate_min, step_max))| {
                    json!({"n": n, "d": d, "graph": graph, "max_lambda2": l2, "spectral_limit": 3.0 / (d as f64).sqrt(),
                           "max_median_rate": rate_max, "min_median_rate": rate_min, "max_step_l1_ratio": step_max})
                })
                .collect();
            json!({"groups": out})
        }
        Experiment::Identifiability => {
            let passed = records.iter().filter(|r| r["pass"] == "true").count();
            json!({"checks": records.len(), "passed": passed})
        }
    })
}

fn read_records(csv: &[u8]) -> Result<Vec<BTreeMap<String, String>>> {
    let mut rd = csv::Reader::from_reader(csv);
    let headers = rd.headers()?.clone();
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        out.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
}

impl FromStr for Trend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increasing" => Ok(Trend::Increasing),
            "decreasing" => Ok(Trend::Decreasing),
            _ => Err(Error::InvalidConfig(format!("expected increasing or decreasing, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendQuery {
    pub group_by: Vec<String>,
    pub order_by: String,
    pub value: String,
    pub expect: Trend,
}

impl TrendQuery {
    pub fn new(group_by: &[&str], order_by: &str, value: &str, expect: Trend) -> Self {
        TrendQuery {
            group_by: group_by.iter().map(|s| s.to_string()).collect(),
            order_by: order_by.into(),
            value: value.into(),
            expect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTrend {
    pub group: String,
    pub points: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub groups: Vec<GroupTrend>,
    /// Median of `ρ` with the expected sign folded in, so agreement is
    /// positive.
    pub median_rho: f64,
    pub pass: bool,
}

/// Spearman correlation of `value` against `order_by` within each group of
/// rows sharing the `group_by` columns. Passes when the median
/// sign-adjusted `ρ` is at least 0.8.
pub fn trend_test<R: Read>(csv: R, query: &TrendQuery) -> Result<TrendReport> {
    let mut rd = csv::Reader::from_reader(csv);
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidConfig(format!("column {name:?} not in CSV")))
    };
    let group_cols: Vec<usize> = query.group_by.iter().map(|g| col(g)).collect::<Result<_>>()?;
    let (order_col, value_col) = (col(&query.order_by)?, col(&query.value)?);
    let parse = |v: &str, name: &str| {
        v.parse::<f64>().map_err(|_| Error::InvalidConfig(format!("column {name:?} has non-numeric value {v:?}")))
    };
    let mut groups: BTreeMap<Vec<String>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        let key = group_cols.iter().map(|&c| rec[c].to_string()).collect();
        let e = groups.entry(key).or_default();
        e.0.push(parse(&rec[order_col], &query.order_by)?);
        e.1.push(parse(&rec[value_col], &query.value)?);
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData("no rows".into()));
    }
    let sign = match query.expect {
        Trend::Increasing => 1.0,
        Trend::Decreasing => -1.0,
    };
    let mut out = Vec::with_capacity(groups.len());
    for (key, (x, y)) in groups {
        let label = query.group_by.iter().zip(&key).map(|(g, v)| format!("{g}={v}")).collect::<Vec<_>>().join(",");
        if x.len() < 3 {
            return Err(Error::InsufficientData(format!("group {label} has {} points, need 3", x.len())));
        }
        out.push(GroupTrend { group: label, points: x.len(), rho: linalg::spearman(&x, &y) });
    }
    let mut adjusted: Vec<f64> = out.iter().map(|g| sign * g.rho).collect();
    let median_rho = linalg::median(&mut adjusted);
    Ok(TrendReport { groups: out, median_rho, pass: median_rho >= 0.8 })
}

/// [`trend_test`] on a CSV file.
pub fn trend_test_path(path: &Path, query: &TrendQuery) -> Result<TrendReport> {
    trend_test(fs::File::open(path)?, query)
}
