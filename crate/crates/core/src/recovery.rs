//! Recover transition and observation matrices from a window moment tensor.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hmm::Hmm;
use crate::linalg::{self, Matrix};
use crate::moments::MomentTensor;
use crate::tensor::{khatri_rao, pinv, simultaneous_diagonalize, ser_matrix, DecompositionOptions, DecompositionResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryErrors {
    /// Induced ℓ1 norm of `T̂ − T` (largest column ℓ1 distance).
    pub t_max_column_l1: f64,
    pub o_max_column_l1: f64,
    /// Entrywise ℓ1 distances.
    pub t_total_l1: f64,
    pub o_total_l1: f64,
    /// Largest of the two per-matrix column errors.
    pub max_column_l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClampReport {
    /// Negative mass set to zero before renormalizing.
    pub negative_mass: f64,
    /// Mass above one cut back before renormalizing.
    pub excess_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveredHmm {
    #[serde(rename = "T_hat", serialize_with = "ser_matrix")]
    pub t_hat: Matrix,
    #[serde(rename = "O_hat", serialize_with = "ser_matrix")]
    pub o_hat: Matrix,
    /// `column_permutation[r]` is the reference state matched to recovered
    /// state `r`. Matrices above are already reordered by it.
    pub column_permutation: Option<Vec<usize>>,
    pub errors: Option<RecoveryErrors>,
    pub t_clamp: ClampReport,
    pub o_clamp: ClampReport,
    pub pairing_residuals: Vec<f64>,
    pub retries_used: usize,
    pub reconstruction_error: f64,
    pub degenerate_clusters: Vec<usize>,
    #[serde(skip)]
    pub decomposition: DecompositionResult,
}

impl RecoveredHmm {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_hmm(&self) -> Result<Hmm> {
        Hmm::new(self.t_hat.clone(), self.o_hat.clone())
    }
}

/// Sum the rows of an `m^tau × n` likelihood matrix over the last symbol.
pub fn marginalize_last(a: &Matrix, m: usize) -> Result<Matrix> {
    if m == 0 || a.nrows() % m != 0 || a.nrows() < m * m {
        return Err(Error::DimensionMismatch(format!("{} rows is not m^tau with tau >= 2 for m = {m}", a.nrows())));
    }
    let rows = a.nrows() / m;
    Ok(Matrix::from_fn(rows, a.ncols(), |r, j| (0..m).map(|s| a[(r * m + s, j)]).sum()))
}

/// Set negatives to zero, cap entries at one and rescale columns to sum to
/// one.
fn clamp_stochastic(m: &mut Matrix) -> ClampReport {
    let mut report = ClampReport { negative_mass: 0.0, excess_mass: 0.0 };
    for x in m.iter_mut() {
        if *x < 0.0 {
            report.negative_mass -= *x;
            *x = 0.0;
        } else if *x > 1.0 {
            report.excess_mass += *x - 1.0;
            *x = 1.0;
        }
    }
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let s = col.sum();
        if s > 0.0 {
            col /= s;
        } else {
            col.fill(1.0 / n);
        }
    }
    report
}

/// Estimate `(T, O)` from a moment tensor with `n` hidden states. When a
/// reference model is given the estimate is reordered to match it and
/// errors are filled in.
pub fn recover(
    mt: &MomentTensor,
    n: usize,
    seed: u64,
    opts: &DecompositionOptions,
    reference: Option<&Hmm>,
) -> Result<RecoveredHmm> {
    let (m, tau) = (mt.m, mt.tau);
    if tau == 0 {
        return Err(Error::InvalidSpec("window tau must be at least 1".into()));
    }
    let rows = m.pow(tau as u32);
    if n == 0 || n > rows {
        return Err(Error::DimensionMismatch(format!("n = {n} exceeds m^tau = {rows}")));
    }
    let dec = simultaneous_diagonalize(&mt.tensor, n, seed, opts)?;
    let mut o_hat = dec.c_hat.clone();
    if let Err(j) = linalg::normalize_columns(&mut o_hat, 1e-300) {
        return Err(Error::RankDeficient { rank: j, expected: n });
    }
    let prefix = if tau == 1 { Matrix::from_element(1, n, 1.0) } else { marginalize_last(&dec.a_hat, m)? };
    let kr = khatri_rao(&o_hat, &prefix)?;
    let rank = linalg::numerical_rank(&kr, opts.rank_tol);
    if rank < n {
        return Err(Error::RankDeficient { rank, expected: n });
    }
    let mut t_hat = pinv(&kr, opts.rank_tol) * &dec.a_hat;
    let t_clamp = clamp_stochastic(&mut t_hat);
    let o_clamp = clamp_stochastic(&mut o_hat);

    let (column_permutation, errors) = match reference {
        None => (None, None),
        Some(h) => {
            if h.n() != n || h.m() != m {
                return Err(Error::DimensionMismatch(format!(
                    "reference has n = {}, m = {} but recovery used n = {n}, m = {m}",
                    h.n(),
                    h.m()
                )));
            }
            let a_ref = h.likelihood_matrix(tau)?;
            let stacked_hat = stack(&dec.a_hat, &o_hat);
            let stacked_ref = stack(&a_ref, h.observation());
            let (perm, _) = align_columns(&stacked_hat, &stacked_ref)?;
            t_hat = permute_states(&t_hat, &perm);
            o_hat = permute_columns(&o_hat, &perm);
            let errors = compare(&t_hat, &o_hat, h);
            (Some(perm), Some(errors))
        }
    };
    Ok(RecoveredHmm {
        t_hat,
        o_hat,
        column_permutation,
        errors,
        t_clamp,
        o_clamp,
        pairing_residuals: dec.pairing_residuals.clone(),
        retries_used: dec.retries_used,
        reconstruction_error: dec.reconstruction_error,
        degenerate_clusters: dec.degenerate_clusters.clone(),
        decomposition: dec,
    })
}

fn stack(top: &Matrix, bottom: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Column `r` moves to position `perm[r]`.
fn permute_columns(x: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(x.nrows(), x.ncols());
    for (r, &p) in perm.iter().enumerate() {
        out.set_column(p, &x.column(r));
    }
    out
}

/// Relabel states on both sides of a transition matrix.
fn permute_states(t: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(t.nrows(), t.ncols());
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            out[(perm[i], perm[j])] = t[(i, j)];
        }
    }
    out
}

fn column_l1(diff: &Matrix) -> (f64, f64) {
    (linalg::max_column_l1(diff), diff.iter().map(|x| x.abs()).sum())
}

/// Error of an already aligned estimate against a reference model.
pub fn compare(t_hat: &Matrix, o_hat: &Matrix, reference: &Hmm) -> RecoveryErrors {
    let (t_max, t_total) = column_l1(&(t_hat - reference.transition()));
    let (o_max, o_total) = column_l1(&(o_hat - reference.observation()));
    RecoveryErrors {
        t_max_column_l1: t_max,
        o_max_column_l1: o_max,
        t_total_l1: t_total,
        o_total_l1: o_total,
        max_column_l1: t_max.max(o_max),
    }
}

/// Optimal assignment of the columns of `x` to those of `y` under ℓ1
/// distance. Returns `perm` with `x` column `r` matched to `y` column
/// `perm[r]`, and the matched distances.
pub fn align_columns(x: &Matrix, y: &Matrix) -> Result<(Vec<usize>, Vec<f64>)> {
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch(format!("shapes {:?} and {:?}", x.shape(), y.shape())));
    }
    let k = x.ncols();
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|r| (0..k).map(|c| (x.column(r) - y.column(c)).iter().map(|v| v.abs()).sum()).collect())
        .collect();
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::PairingFailure("estimate has non-finite entries and cannot be aligned".into()));
    }
    let perm = hungarian(&cost);
    let dist = perm.iter().enumerate().map(|(r, &c)| cost[r][c]).collect();
    Ok((perm, dist))
}

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials). Returns the column assigned to each
/// row.
///
/// # Panics
/// If any cost is not finite.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    assert!(cost.iter().flatten().all(|c| c.is_finite()), "assignment costs must be finite");
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut next = 0;
            for c in 1..=n {
                if !used[c] {
                    let cur = cost[r - 1][c - 1] - u[r] - v[c];
                    if cur < minv[c] {
                        minv[c] = cur;
                        way[c] = col0;
                    }
                    if minv[c] < delta {
                        delta = minv[c];
                        next = c;
                    }
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = next;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for c in 1..=n {
        assignment[owner[c] - 1] = c - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{self, ObservationSpec, SupportWeights};
    use crate::moments::exact_moment_tensor;
    use crate::rng;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    fn four_state(seed: u64) -> Hmm {
        let o = generators::make_observation(&ObservationSpec::RandomSupport {
            n: 4,
            m: 3,
            k: 2,
            seed,
            weights: SupportWeights::Simplex,
        })
        .unwrap();
        Hmm::new(generators::cycle(4), o).unwrap()
    }

    #[test]
    fn hungarian_beats_greedy() {
        let cost = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![3.0, 6.0, 9.0]];
        let p = hungarian(&cost);
        let total: f64 = p.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 10.0);
        let mut rng = rng::rng(4);
        for _ in 0..50 {
            let k = 5;
            let cost: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect();
            let p = hungarian(&cost);
            let got: f64 = p.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
            let mut best = f64::INFINITY;
            let mut perm: Vec<usize> = (0..k).collect();
            permutations(&mut perm, 0, &mut |q| {
                best = best.min(q.iter().enumerate().map(|(r, &c)| cost[r][c]).sum());
            });
            assert!((got - best).abs() < 1e-12);
        }
    }

    fn permutations(p: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
        if i == p.len() {
            f(p);
            return;
        }
        for j in i..p.len() {
            p.swap(i, j);
            permutations(p, i + 1, f);
            p.swap(i, j);
        }
    }

    #[test]
    fn align_examples() {
        let x = Matrix::from_row_slice(3, 3, &[0.2, 0.5, 0.1, 0.3, 0.5, 0.1, 0.5, 0.0, 0.8]);
        let (p, d) = align_columns(&x, &x).unwrap();
        assert_eq!(p, vec![0, 1, 2]);
        assert!(d.iter().all(|&v| v == 0.0));

        let mut y = x.clone();
        y.swap_columns(0, 2);
        let (p, d) = align_columns(&x, &y).unwrap();
        assert_eq!(p, vec![2, 1, 0]);
        assert!(d.iter().all(|&v| v == 0.0));

        let mut rng = rng::rng(11);
        let mut x = Matrix::from_fn(4, 3, |_, _| rng.random::<f64>());
        linalg::normalize_columns(&mut x, 0.0).unwrap();
        let mut target: Vec<usize> = (0..3).collect();
        target.shuffle(&mut rng);
        let mut y = permute_columns(&x, &target);
        y.iter_mut().for_each(|v| *v += 1e-8 * (rng.random::<f64>() * 2.0 - 1.0));
        let (p, d) = align_columns(&x, &y).unwrap();
        assert_eq!(p, target);
        assert!(d.iter().all(|&v| v <= 4e-8));

        assert!(align_columns(&x, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn marginalize_examples() {
        let h = four_state(2);
        let a3 = h.likelihood_matrix(3).unwrap();
        let a2 = h.likelihood_matrix(2).unwrap();
        assert!((marginalize_last(&a3, 3).unwrap() - a2).amax() < 1e-12);

        let mut a = Matrix::zeros(4, 2);
        a[(3, 0)] = 1.0;
        a[(2, 1)] = 1.0;
        let p = marginalize_last(&a, 2).unwrap();
        assert_eq!(p, Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]));

        let u = Matrix::from_element(27, 2, 1.0 / 27.0);
        let p = marginalize_last(&u, 3).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-15));
        assert!(marginalize_last(&Matrix::zeros(3, 1), 3).is_err());
    }

    #[test]
    fn recovers_four_state_cycle() {
        for seed in 0..5 {
            let h = four_state(seed);
            let mt = exact_moment_tensor(&h, 2).unwrap();
            let r = recover(&mt, 4, seed, &DecompositionOptions::default(), Some(&h)).unwrap();
            let e = r.errors.as_ref().unwrap();
            assert!(e.max_column_l1 <= 1e-6, "seed {seed}: {e:?}");
            for s in linalg::column_sums(&r.t_hat).iter().chain(&linalg::column_sums(&r.o_hat)) {
                assert!((s - 1.0).abs() < 1e-6);
            }
            let json = r.to_json().unwrap();
            assert!(json.contains("\"T_hat\""));
        }
    }

    #[test]
    fn de_bruijn_labels_recover_despite_repeated_columns() {
        for (n, m, tau) in [(8, 2, 3), (16, 2, 4), (9, 3, 2)] {
            let o = generators::make_observation(&ObservationSpec::DeBruijn { n, m }).unwrap();
            let h = Hmm::new(generators::cycle(n), o).unwrap();
            let mt = exact_moment_tensor(&h, tau).unwrap();
            let r = recover(&mt, n, 1, &DecompositionOptions::default(), Some(&h)).unwrap();
            assert!(r.errors.unwrap().max_column_l1 < 1e-10);
            assert_eq!(r.degenerate_clusters.len(), m);
        }
    }

    #[test]
    fn non_finite_estimates_are_not_aligned() {
        let x = Matrix::from_element(2, 2, f64::NAN);
        assert!(matches!(align_columns(&x, &Matrix::identity(2, 2)), Err(Error::PairingFailure(_))));
    }

    #[test]
    fn single_state_is_trivial() {
        let o = Matrix::from_column_slice(3, 1, &[0.5, 0.3, 0.2]);
        let h = Hmm::new(Matrix::identity(1, 1), o.clone()).unwrap();
        let mt = exact_moment_tensor(&h, 1).unwrap();
        let r = recover(&mt, 1, 0, &DecompositionOptions::default(), None).unwrap();
        assert!((r.t_hat[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((&r.o_hat - o).amax() < 1e-12);
        assert!(r.errors.is_none() && r.column_permutation.is_none());
    }

    #[test]
    fn too_many_states_is_rejected() {
        let h = four_state(0);
        let mt = exact_moment_tensor(&h, 1).unwrap();
        assert!(matches!(
            recover(&mt, 4, 0, &DecompositionOptions::default(), None),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
