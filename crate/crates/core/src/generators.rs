//! Structured transition and observation matrices.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionSpec {
    /// `h → h + 1 (mod n)`.
    CyclePermutation { n: usize },
    /// `n / c` disjoint cycles of length `c`.
    UnionOfCycles { n: usize, c: usize },
    /// `eps·P_c + (1 − eps)·P_n`.
    CycleMixture { n: usize, c: usize, eps: f64 },
    /// `eps·G_d + (1 − eps·d)·P_n` with `G_d` the adjacency of a seeded
    /// out-regular digraph.
    DegreeMixture { n: usize, d: usize, eps: f64, seed: u64 },
    /// Uniform random walk on a seeded out-regular digraph without
    /// self-loops.
    RegularDigraph { n: usize, d: usize, seed: u64 },
    /// Independent product chain, transition `T₁ ⊗ T₂`.
    Factorial { first: Box<TransitionSpec>, second: Box<TransitionSpec> },
    Identity { n: usize },
}

impl TransitionSpec {
    pub fn n(&self) -> usize {
        match self {
            TransitionSpec::CyclePermutation { n }
            | TransitionSpec::UnionOfCycles { n, .. }
            | TransitionSpec::CycleMixture { n, .. }
            | TransitionSpec::DegreeMixture { n, .. }
            | TransitionSpec::RegularDigraph { n, .. }
            | TransitionSpec::Identity { n } => *n,
            TransitionSpec::Factorial { first, second } => first.n() * second.n(),
        }
    }
}

/// How mass is spread over the chosen support of a random output column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SupportWeights {
    /// `1/k` on every support symbol.
    #[default]
    Equal,
    /// Uniform on the probability simplex over the support.
    Simplex,
}

impl std::str::FromStr for SupportWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(SupportWeights::Equal),
            "simplex" => Ok(SupportWeights::Simplex),
            _ => Err(invalid(format!("support weights must be equal or simplex, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationSpec {
    RandomSupport {
        n: usize,
        m: usize,
        k: usize,
        seed: u64,
        #[serde(default)]
        weights: SupportWeights,
    },
    DeterministicRandomLabels { n: usize, m: usize, seed: u64 },
    /// Column `j` emits symbol `s[j]` of a De Bruijn sequence; needs
    /// `n = m^j`.
    DeBruijn { n: usize, m: usize },
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

/// Cyclic shift on `n` states.
pub fn cycle(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i == (j + 1) % n { 1.0 } else { 0.0 })
}

/// Disjoint `c`-cycles on consecutive blocks of states.
pub fn union_of_cycles(n: usize, c: usize) -> Result<Matrix> {
    if c == 0 || n % c != 0 {
        return Err(invalid(format!("cycle length {c} does not divide n = {n}")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        let base = j - j % c;
        if i == base + (j - base + 1) % c {
            1.0
        } else {
            0.0
        }
    }))
}

/// `d` distinct out-neighbours per node, self-loops excluded. Entry
/// `[i][j] = 1` for an edge `j → i`.
pub fn regular_digraph_adjacency(n: usize, d: usize, seed: u64) -> Result<Matrix> {
    if d == 0 || d >= n {
        return Err(invalid(format!("out-degree {d} needs 1 <= d < n = {n}")));
    }
    let mut rng = rng::rng(seed);
    let mut g = Matrix::zeros(n, n);
    for j in 0..n {
        for idx in sample(&mut rng, n - 1, d) {
            let i = if idx >= j { idx + 1 } else { idx };
            g[(i, j)] = 1.0;
        }
    }
    Ok(g)
}

pub fn make_transition(spec: &TransitionSpec) -> Result<Matrix> {
    match *spec {
        TransitionSpec::CyclePermutation { n } => {
            if n == 0 {
                return Err(invalid("n must be positive"));
            }
            Ok(cycle(n))
        }
        TransitionSpec::UnionOfCycles { n, c } => union_of_cycles(n, c),
        TransitionSpec::CycleMixture { n, c, eps } => {
            if !(0.0..=1.0).contains(&eps) {
                return Err(invalid(format!("eps = {eps} outside [0, 1]")));
            }
            Ok(union_of_cycles(n, c)? * eps + cycle(n) * (1.0 - eps))
        }
        TransitionSpec::DegreeMixture { n, d, eps, seed } => {
            if eps < 0.0 || eps * d as f64 > 1.0 + 1e-15 {
                return Err(invalid(format!("eps·d = {} exceeds 1", eps * d as f64)));
            }
            let g = regular_digraph_adjacency(n, d, seed)?;
            Ok(g * eps + cycle(n) * (1.0 - eps * d as f64).max(0.0))
        }
        TransitionSpec::RegularDigraph { n, d, seed } => Ok(regular_digraph_adjacency(n, d, seed)? / d as f64),
        TransitionSpec::Factorial { ref first, ref second } => {
            Ok(linalg::kron(&make_transition(first)?, &make_transition(second)?))
        }
        TransitionSpec::Identity { n } => {
            if n == 0 {
                return Err(invalid("n must be positive"));
            }
            Ok(Matrix::identity(n, n))
        }
    }
}

/// Point uniform on the probability simplex of dimension `k`.
pub fn simplex_point(k: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn make_observation(spec: &ObservationSpec) -> Result<Matrix> {
    match *spec {
        ObservationSpec::RandomSupport { n, m, k, seed, weights } => {
            if k == 0 || k > m {
                return Err(invalid(format!("support size {k} must be in 1..={m}")));
            }
            let mut rng = rng::rng(seed);
            let mut o = Matrix::zeros(m, n);
            for j in 0..n {
                let support = sample(&mut rng, m, k);
                let w = match weights {
                    SupportWeights::Equal => vec![1.0 / k as f64; k],
                    SupportWeights::Simplex => simplex_point(k, &mut rng),
                };
                for (i, wi) in support.iter().zip(w) {
                    o[(i, j)] = wi;
                }
            }
            Ok(o)
        }
        ObservationSpec::DeterministicRandomLabels { n, m, seed } => {
            if m == 0 {
                return Err(invalid("m must be positive"));
            }
            let mut rng = rng::rng(seed);
            let mut o = Matrix::zeros(m, n);
            for j in 0..n {
                o[(rng.random_range(0..m), j)] = 1.0;
            }
            Ok(o)
        }
        ObservationSpec::DeBruijn { n, m } => {
            let j = exact_log(n, m).ok_or_else(|| invalid(format!("n = {n} is not a power of m = {m}")))?;
            let s = de_bruijn_sequence(m, j)?;
            let mut o = Matrix::zeros(m, n);
            for (col, &sym) in s.iter().enumerate() {
                o[(sym, col)] = 1.0;
            }
            Ok(o)
        }
    }
}

/// `j ≥ 1` with `m^j = n`, if any.
fn exact_log(n: usize, m: usize) -> Option<usize> {
    if m < 2 || n < m {
        return None;
    }
    let (mut p, mut j) = (1usize, 0);
    while p < n {
        p = p.checked_mul(m)?;
        j += 1;
    }
    (p == n).then_some(j)
}

/// Cyclic sequence of length `m^j` containing every length-`j` string over
/// `[0, m)` exactly once, read off an Eulerian circuit of the order-`(j−1)`
/// De Bruijn graph.
pub fn de_bruijn_sequence(m: usize, j: usize) -> Result<Vec<usize>> {
    if m < 2 || j == 0 {
        return Err(invalid(format!("De Bruijn sequence needs m >= 2 and j >= 1, got m = {m}, j = {j}")));
    }
    let nodes = m.checked_pow(j as u32 - 1).ok_or_else(|| invalid("sequence too long"))?;
    // Hierholzer: node u has out-edges labelled 0..m to (u·m + s) mod nodes.
    let mut next = vec![0usize; nodes];
    let mut stack: Vec<(usize, Option<usize>)> = vec![(0, None)];
    let mut circuit = Vec::with_capacity(nodes * m);
    while let Some(&(u, _)) = stack.last() {
        if next[u] < m {
            let s = next[u];
            next[u] += 1;
            stack.push(((u * m + s) % nodes, Some(s)));
        } else if let Some((_, Some(s))) = stack.pop() {
            circuit.push(s);
        }
    }
    circuit.reverse();
    Ok(circuit)
}

/// Adjacency lists of a uniformly-paired simple `d`-regular graph.
///
/// Points are paired one edge at a time, rejecting pairs that would form a
/// loop or a repeated edge; a run that gets stuck restarts from scratch.
pub fn random_regular_graph(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if d >= n || (n * d) % 2 != 0 {
        return Err(invalid(format!("no simple {d}-regular graph on {n} vertices")));
    }
    const MAX_RESTARTS: u64 = 1000;
    'restart: for attempt in 0..MAX_RESTARTS {
        let mut rng = rng::stream(seed, attempt);
        let mut points: Vec<usize> = (0..n * d).map(|p| p / d).collect();
        let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(d); n];
        while !points.is_empty() {
            let mut placed = false;
            for _ in 0..(50 * points.len()).max(1000) {
                let a = rng.random_range(0..points.len());
                let b = rng.random_range(0..points.len());
                let (u, v) = (points[a], points[b]);
                if a == b || u == v || adj[u].contains(&v) {
                    continue;
                }
                adj[u].push(v);
                adj[v].push(u);
                let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                points.swap_remove(hi);
                points.swap_remove(lo);
                placed = true;
                break;
            }
            if !placed {
                continue 'restart;
            }
        }
        return Ok(adj);
    }
    Err(invalid(format!("{d}-regular graph on {n} vertices not found in {MAX_RESTARTS} restarts")))
}

/// Random-walk matrix `A/d` of a random undirected `d`-regular graph.
/// Symmetric and doubly stochastic.
pub fn regular_graph_transition(n: usize, d: usize, seed: u64) -> Result<Matrix> {
    let adj = random_regular_graph(n, d, seed)?;
    let mut t = Matrix::zeros(n, n);
    for (u, nbrs) in adj.iter().enumerate() {
        for &v in nbrs {
            t[(v, u)] = 1.0 / d as f64;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn assert_stochastic(m: &Matrix) {
        for (j, s) in linalg::column_sums(m).iter().enumerate() {
            assert!((s - 1.0).abs() < 1e-12, "column {j} sums to {s}");
        }
        assert!(m.iter().all(|&x| x >= 0.0));
    }

    fn cyclic_substrings(s: &[usize], j: usize) -> HashSet<Vec<usize>> {
        (0..s.len()).map(|i| (0..j).map(|k| s[(i + k) % s.len()]).collect()).collect()
    }

    #[test]
    fn cycle_of_four() {
        let t = make_transition(&TransitionSpec::CyclePermutation { n: 4 }).unwrap();
        let want = Matrix::from_row_slice(
            4,
            4,
            &[0., 0., 0., 1., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0.],
        );
        assert_eq!(t, want);
    }

    #[test]
    fn degenerate_mixture_is_the_cycle() {
        let t = make_transition(&TransitionSpec::CycleMixture { n: 12, c: 3, eps: 0.0 }).unwrap();
        assert_eq!(t, cycle(12));
    }

    #[test]
    fn union_of_cycles_has_order_c() {
        for (n, c) in [(12, 3), (20, 4), (8, 8), (6, 1)] {
            let t = union_of_cycles(n, c).unwrap();
            assert_stochastic(&t);
            assert_eq!(t.pow(c as u32), Matrix::identity(n, n));
        }
        assert!(matches!(union_of_cycles(10, 3), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn generated_transitions_are_stochastic() {
        let specs = [
            TransitionSpec::CycleMixture { n: 16, c: 4, eps: 0.3 },
            TransitionSpec::DegreeMixture { n: 16, d: 3, eps: 0.2, seed: 4 },
            TransitionSpec::RegularDigraph { n: 10, d: 4, seed: 1 },
            TransitionSpec::Identity { n: 5 },
            TransitionSpec::Factorial {
                first: Box::new(TransitionSpec::CyclePermutation { n: 3 }),
                second: Box::new(TransitionSpec::CycleMixture { n: 4, c: 2, eps: 0.5 }),
            },
        ];
        for s in &specs {
            let t = make_transition(s).unwrap();
            assert_eq!(t.ncols(), s.n());
            assert_stochastic(&t);
        }
        assert!(make_transition(&TransitionSpec::DegreeMixture { n: 16, d: 4, eps: 0.3, seed: 0 }).is_err());
        assert!(make_transition(&TransitionSpec::RegularDigraph { n: 4, d: 4, seed: 0 }).is_err());
    }

    #[test]
    fn regular_digraph_columns() {
        let t = make_transition(&TransitionSpec::RegularDigraph { n: 12, d: 5, seed: 9 }).unwrap();
        for j in 0..12 {
            let col = t.column(j);
            assert_eq!(col.iter().filter(|&&x| x > 0.0).count(), 5);
            assert!(col.iter().all(|&x| x == 0.0 || x == 0.2));
            assert_eq!(col[j], 0.0);
        }
    }

    #[test]
    fn degree_mixture_mass_layout() {
        let (n, d, eps) = (16, 3, 0.1);
        let t = make_transition(&TransitionSpec::DegreeMixture { n, d, eps, seed: 2 }).unwrap();
        for j in 0..n {
            let next = (j + 1) % n;
            assert!(t[(next, j)] >= 1.0 - eps * d as f64 - 1e-15);
        }
    }

    #[test]
    fn factorial_is_kronecker() {
        let t1 = Matrix::from_row_slice(2, 2, &[0.9, 0.3, 0.1, 0.7]);
        let t2 = Matrix::from_row_slice(2, 2, &[0.6, 0.2, 0.4, 0.8]);
        let k = linalg::kron(&t1, &t2);
        // Prob[(i1, j1) -> (i2, j2)] = T1(i2, i1)·T2(j2, j1), state index i·2 + j.
        assert!((k[(2 + 1, 0)] - t1[(1, 0)] * t2[(1, 0)]).abs() < 1e-15);
        let mut want: Vec<f64> = linalg::singular_values(&t1)
            .iter()
            .flat_map(|a| linalg::singular_values(&t2).into_iter().map(move |b| a * b))
            .collect();
        want.sort_by(|a, b| b.total_cmp(a));
        let got = linalg::singular_values(&k);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn random_support_variants() {
        let o = make_observation(&ObservationSpec::RandomSupport { n: 7, m: 4, k: 4, seed: 3, weights: SupportWeights::Equal })
            .unwrap();
        assert!(o.iter().all(|&x| x == 0.25));

        let o = make_observation(&ObservationSpec::RandomSupport { n: 9, m: 5, k: 2, seed: 3, weights: SupportWeights::Equal })
            .unwrap();
        for col in o.column_iter() {
            assert_eq!(col.iter().filter(|&&x| x == 0.5).count(), 2);
            assert_eq!(col.sum(), 1.0);
        }

        let o =
            make_observation(&ObservationSpec::RandomSupport { n: 9, m: 5, k: 3, seed: 3, weights: SupportWeights::Simplex })
                .unwrap();
        assert_stochastic(&o);
        for col in o.column_iter() {
            assert!(col.iter().filter(|&&x| x > 0.0).count() <= 3);
        }
        assert!(make_observation(&ObservationSpec::RandomSupport { n: 2, m: 2, k: 3, seed: 0, weights: SupportWeights::Equal })
            .is_err());
    }

    #[test]
    fn deterministic_labels_are_one_hot() {
        let o = make_observation(&ObservationSpec::DeterministicRandomLabels { n: 20, m: 3, seed: 5 }).unwrap();
        for col in o.column_iter() {
            assert_eq!(col.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(col.sum(), 1.0);
        }
    }

    #[test]
    fn de_bruijn_examples() {
        assert_eq!(de_bruijn_sequence(2, 1).unwrap(), vec![0, 1]);
        for (m, j) in [(2, 3), (3, 2), (2, 4), (4, 3)] {
            let s = de_bruijn_sequence(m, j).unwrap();
            assert_eq!(s.len(), m.pow(j as u32));
            assert_eq!(cyclic_substrings(&s, j).len(), s.len(), "m={m} j={j}");
        }
        assert!(de_bruijn_sequence(1, 2).is_err());

        let o = make_observation(&ObservationSpec::DeBruijn { n: 8, m: 2 }).unwrap();
        let labels: Vec<usize> = o.column_iter().map(|c| c.iter().position(|&x| x == 1.0).unwrap()).collect();
        assert_eq!(cyclic_substrings(&labels, 3).len(), 8);
        assert!(make_observation(&ObservationSpec::DeBruijn { n: 12, m: 2 }).is_err());
    }

    #[test]
    fn regular_graph_is_simple_and_regular() {
        for (n, d, seed) in [(10, 3, 1), (100, 16, 2), (50, 2, 3)] {
            let adj = random_regular_graph(n, d, seed).unwrap();
            for (u, nbrs) in adj.iter().enumerate() {
                assert_eq!(nbrs.len(), d);
                assert!(!nbrs.contains(&u));
                let set: HashSet<_> = nbrs.iter().collect();
                assert_eq!(set.len(), d);
                for &v in nbrs {
                    assert!(adj[v].contains(&u));
                }
            }
            let t = regular_graph_transition(n, d, seed).unwrap();
            assert_eq!(t, t.transpose());
            assert_stochastic(&t);
        }
        assert!(random_regular_graph(5, 3, 0).is_err());
    }

    #[test]
    fn specs_roundtrip_json() {
        let s = TransitionSpec::Factorial {
            first: Box::new(TransitionSpec::CycleMixture { n: 4, c: 2, eps: 0.25 }),
            second: Box::new(TransitionSpec::Identity { n: 2 }),
        };
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"kind\":\"factorial\""));
        assert_eq!(serde_json::from_str::<TransitionSpec>(&j).unwrap(), s);
        let o: ObservationSpec = serde_json::from_str(r#"{"kind":"random_support","n":4,"m":3,"k":2,"seed":1}"#).unwrap();
        assert!(matches!(o, ObservationSpec::RandomSupport { weights: SupportWeights::Equal, .. }));
    }
}
