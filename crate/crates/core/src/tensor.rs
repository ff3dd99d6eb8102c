//! Dense third-order tensors and decomposition by simultaneous
//! diagonalization.
//!
//! Storage is row-major: entry `(i, j, l)` lives at `(i·d2 + j)·d3 + l`.
//! Matricizations and the Khatri-Rao product share one flattening rule: the
//! earlier mode is the more significant index. With that rule
//! `matricize(outer3(A, B, C), 3) == C · (A ⊙ B)^T`.

use std::io::{Read, Write};

use nalgebra::{Complex, Schur};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Tensor3 {
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        Self { dims: (d1, d2, d3), data: vec![0.0; d1 * d2 * d3] }
    }

    pub fn from_vec(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for dims {:?}",
                data.len(),
                dims
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("tensor entries must be finite".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.dims.1 + j) * self.dims.2 + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[self.offset(i, j, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, l: usize, v: f64) {
        let o = self.offset(i, j, l);
        self.data[o] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, l: usize, v: f64) {
        let o = self.offset(i, j, l);
        self.data[o] += v;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_distance(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_difference(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Flat binary layout: three little-endian `u64` dims followed by the
    /// entries as little-endian `f64` in storage order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for d in [self.dims.0, self.dims.1, self.dims.2] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut buf)?;
            *d = u64::from_le_bytes(buf) as usize;
        }
        let len = dims[0]
            .checked_mul(dims[1])
            .and_then(|x| x.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidSpec("tensor dims overflow".into()))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Tensor3::from_vec((dims[0], dims[1], dims[2]), data)
    }
}

/// `Σ_r A_r ⊗ B_r ⊗ C_r`.
pub fn outer3(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Tensor3> {
    let k = a.ncols();
    if b.ncols() != k || c.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "column counts {}, {}, {}",
            k,
            b.ncols(),
            c.ncols()
        )));
    }
    // M_(3) = C (A ⊙ B)^T, then scatter into storage order.
    let m3 = c * khatri_rao(a, b)?.transpose();
    let (d1, d2, d3) = (a.nrows(), b.nrows(), c.nrows());
    let mut t = Tensor3::zeros(d1, d2, d3);
    for i in 0..d1 {
        for j in 0..d2 {
            for l in 0..d3 {
                t.set(i, j, l, m3[(l, i * d2 + j)]);
            }
        }
    }
    Ok(t)
}

/// Mode-k unfolding. Mode 1 is `d1 × (d2·d3)` with column `j·d3 + l`; mode 2
/// is `d2 × (d1·d3)` with column `i·d3 + l`; mode 3 is `d3 × (d1·d2)` with
/// column `i·d2 + j`.
pub fn matricize(m: &Tensor3, mode: Mode) -> Matrix {
    let (d1, d2, d3) = m.dims;
    match mode {
        Mode::One => Matrix::from_fn(d1, d2 * d3, |i, c| m.get(i, c / d3, c % d3)),
        Mode::Two => Matrix::from_fn(d2, d1 * d3, |j, c| m.get(c / d3, j, c % d3)),
        Mode::Three => Matrix::from_fn(d3, d1 * d2, |l, c| m.get(c / d2, c % d2, l)),
    }
}

/// Column-wise Kronecker product: column `r` is `A_r ⊗ B_r` flattened with
/// the `A` index most significant.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let k = a.ncols();
    if b.ncols() != k {
        return Err(Error::DimensionMismatch(format!("column counts {} and {}", k, b.ncols())));
    }
    let (p, q) = (a.nrows(), b.nrows());
    let mut out = Matrix::zeros(p * q, k);
    for r in 0..k {
        for i in 0..p {
            let ai = a[(i, r)];
            for j in 0..q {
                out[(i * q + j, r)] = ai * b[(j, r)];
            }
        }
    }
    Ok(out)
}

/// Contract the third mode with `w`: `X[i][j] = Σ_l M[i][j][l]·w[l]`.
pub fn project3(m: &Tensor3, w: &[f64]) -> Result<Matrix> {
    let (d1, d2, d3) = m.dims;
    if w.len() != d3 {
        return Err(Error::DimensionMismatch(format!("weight length {} for d3 = {d3}", w.len())));
    }
    Ok(Matrix::from_fn(d1, d2, |i, j| {
        let base = m.offset(i, j, 0);
        m.data[base..base + d3].iter().zip(w).map(|(x, y)| x * y).sum()
    }))
}

/// Moore–Penrose pseudoinverse, dropping singular values below
/// `rank_tol · σ_max`.
pub fn pinv(m: &Matrix, rank_tol: f64) -> Matrix {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    let (u, s, v) = linalg::svd_sorted(m);
    let cutoff = rank_tol * s.first().copied().unwrap_or(0.0);
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (r, &sr) in s.iter().enumerate() {
        if sr > cutoff && sr > 0.0 {
            out += v.column(r) * u.column(r).transpose() / sr;
        }
    }
    out
}

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionOptions {
    /// Accept a reciprocal pair when `|λ_A·λ_B − 1|` is below this.
    pub pairing_tol: f64,
    /// Failed projection pairs tolerated before giving up.
    pub max_retries: usize,
    /// Largest tolerated `|Im λ| / max|λ|`.
    pub imag_tol: f64,
    /// Eigenvalues closer than `cluster_tol · max|λ|` share an eigenspace.
    pub cluster_tol: f64,
    /// Projected slices with `σ_min/σ_max` below this count as singular.
    pub singular_tol: f64,
    /// Relative cutoff for pseudoinverses and the rank-k subspace check.
    pub rank_tol: f64,
    /// Use the all-ones contraction (the pair marginal) as the second slice
    /// instead of a random one.
    pub marginal_slice: bool,
    /// Successful projection pairs to compare; the one reconstructing `M`
    /// best is kept.
    pub candidates: usize,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        Self {
            pairing_tol: 1e-6,
            max_retries: 5,
            imag_tol: 1e-8,
            cluster_tol: 1e-8,
            singular_tol: 1e-13,
            rank_tol: DEFAULT_RANK_TOL,
            marginal_slice: false,
            candidates: 1,
        }
    }
}

impl DecompositionOptions {
    /// Tolerances suited to moments estimated from samples.
    pub fn noisy() -> Self {
        Self {
            pairing_tol: 0.5,
            max_retries: 20,
            imag_tol: 1e-6,
            cluster_tol: 1e-12,
            singular_tol: 1e-13,
            rank_tol: 1e-8,
            marginal_slice: true,
            candidates: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionResult {
    /// Column-stochastic estimates of the three factors. Entries are not
    /// clamped; see [`DecompositionResult::clamped`].
    #[serde(serialize_with = "ser_matrix")]
    pub a_hat: Matrix,
    #[serde(serialize_with = "ser_matrix")]
    pub b_hat: Matrix,
    #[serde(serialize_with = "ser_matrix")]
    pub c_hat: Matrix,
    pub projections: (Vec<f64>, Vec<f64>),
    pub pairing_residuals: Vec<f64>,
    pub reconstruction_error: f64,
    /// Total negative mass in `a_hat`, `b_hat`, `c_hat`.
    pub negative_mass: f64,
    pub retries_used: usize,
    /// Sizes of eigenvalue clusters with multiplicity above one.
    pub degenerate_clusters: Vec<usize>,
}

pub(crate) fn ser_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    linalg::to_rows(m).serialize(s)
}

fn negative_mass(m: &Matrix) -> f64 {
    m.iter().filter(|&&x| x < 0.0).map(|x| -x).sum()
}

fn clamp_nonnegative(m: &Matrix) -> Matrix {
    m.map(|x| x.max(0.0))
}

impl DecompositionResult {
    /// Factors with negative entries set to zero.
    pub fn clamped(&self) -> (Matrix, Matrix, Matrix) {
        (clamp_nonnegative(&self.a_hat), clamp_nonnegative(&self.b_hat), clamp_nonnegative(&self.c_hat))
    }
}

fn unit_sphere(dim: usize, rng: &mut rng::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Top-`k` left singular vectors, failing if the `k`-th singular value is
/// below `rank_tol · σ_max`.
fn top_subspace(m: &Matrix, k: usize, rank_tol: f64) -> Result<Matrix> {
    let (u, s, _) = linalg::svd_sorted(m);
    let rank = s.iter().filter(|&&x| x > rank_tol * s[0]).count();
    if s.len() < k || rank < k {
        return Err(Error::RankDeficient { rank, expected: k });
    }
    Ok(u.columns(0, k).into_owned())
}

fn inverse(m: &Matrix) -> Option<Matrix> {
    m.clone().try_inverse()
}

fn condition_ratio(m: &Matrix) -> f64 {
    let s = linalg::singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

/// A set of equal eigenvalues and an orthonormal basis of their eigenspace.
struct EigenCluster {
    value: f64,
    basis: Matrix,
}

enum EigenFailure {
    Complex(f64),
    NoConvergence,
}

/// Eigenvalues from a real Schur decomposition. Francis iterations can stall
/// on highly repeated spectra, in which case the decomposition is retried
/// after random orthogonal similarities.
fn eigenvalues(g: &Matrix) -> Option<Vec<Complex<f64>>> {
    let k = g.nrows();
    let cap = 200 * k.max(10);
    let schur = |m: Matrix| Schur::try_new(m, f64::EPSILON, cap).map(|s| s.complex_eigenvalues().iter().copied().collect());
    if let Some(ev) = schur(g.clone()) {
        return Some(ev);
    }
    let mut rng = rng::rng(k as u64);
    for _ in 0..8 {
        let q = Matrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
        if let Some(ev) = schur(q.transpose() * g * &q) {
            return Some(ev);
        }
    }
    None
}

/// Real eigen-decomposition of a diagonalizable matrix whose spectrum is
/// expected to be real, grouping numerically equal eigenvalues.
fn real_eigenspaces(g: &Matrix, opts: &DecompositionOptions) -> std::result::Result<Vec<EigenCluster>, EigenFailure> {
    let k = g.nrows();
    let eig = eigenvalues(g).ok_or(EigenFailure::NoConvergence)?;
    let scale = eig.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let max_imag = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / scale;
    if max_imag > opts.imag_tol {
        return Err(EigenFailure::Complex(max_imag));
    }
    let mut values: Vec<f64> = eig.iter().map(|z| z.re).collect();
    values.sort_by(|a, b| a.total_cmp(b));

    let mut groups: Vec<Vec<f64>> = Vec::new();
    for v in values {
        match groups.last_mut() {
            Some(g) if (v - g[g.len() - 1]).abs() <= opts.cluster_tol * scale => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    Ok(groups
        .into_iter()
        .map(|grp| {
            let value = grp.iter().sum::<f64>() / grp.len() as f64;
            let shifted = g - Matrix::identity(k, k) * value;
            let (_, _, v) = linalg::svd_sorted(&shifted);
            let r = grp.len();
            EigenCluster { value, basis: v.columns(k - r, r).into_owned() }
        })
        .collect())
}

/// Resolve a basis `q` (rows × r) of a subspace spanned by nonnegative
/// columns with disjoint supports into those columns, by successive
/// projection onto the largest remaining row. Returns `None` if the result
/// has materially negative entries.
fn resolve_anchored_cluster(q: &Matrix) -> Option<Matrix> {
    let r = q.ncols();
    let mut residual = q.clone();
    let mut anchors = Vec::with_capacity(r);
    for _ in 0..r {
        let (best, norm) = (0..residual.nrows())
            .map(|i| (i, residual.row(i).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if norm < 1e-10 {
            return None;
        }
        anchors.push(best);
        let dir = residual.row(best).transpose() / norm;
        let proj = &residual * &dir;
        residual -= proj * dir.transpose();
    }
    let anchor_rows = Matrix::from_fn(r, r, |a, c| q[(anchors[a], c)]);
    let inv = inverse(&anchor_rows)?;
    let mut cols = q * inv;
    linalg::normalize_columns(&mut cols, 1e-12).ok()?;
    let scale = cols.amax();
    if cols.iter().any(|&x| x < -1e-8 * scale) {
        return None;
    }
    Some(cols)
}

/// Greedy matching of `λ_A` to `λ_B` minimizing `|λ_A·λ_B − 1|`. Returns for
/// each A-index its B-index and residual.
fn pair_reciprocal(la: &[f64], lb: &[f64]) -> Vec<(usize, f64)> {
    let k = la.len();
    let mut costs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
    for (i, a) in la.iter().enumerate() {
        for (j, b) in lb.iter().enumerate() {
            costs.push(((a * b - 1.0).abs(), i, j));
        }
    }
    costs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = vec![(usize::MAX, f64::INFINITY); k];
    let mut used_b = vec![false; k];
    for (c, i, j) in costs {
        if out[i].0 == usize::MAX && !used_b[j] {
            out[i] = (j, c);
            used_b[j] = true;
        }
    }
    out
}

enum Attempt {
    Retry(Error),
    Done(Box<DecompositionResult>),
}

/// Decompose `M ≈ Σ_{r<k} A_r ⊗ B_r ⊗ C_r` by simultaneous diagonalization.
///
/// Two random unit vectors `a`, `b` project `M` to slices `X`, `Y`. Both
/// are compressed onto the top-`k` singular subspaces of the mode-1 and
/// mode-2 unfoldings, giving `k×k` matrices `X̃ = Ã·D_a·B̃ᵀ` and
/// `Ỹ = Ã·D_b·B̃ᵀ`. Eigenvectors of `X̃Ỹ⁻¹` are the columns of `Ã` and those
/// of `(X̃⁻¹Ỹ)ᵀ` the columns of `B̃`, with reciprocal eigenvalues; pairs are
/// matched on that. `C` then follows from `M_(3)·((Â ⊙ B̂)^†)ᵀ`.
///
/// When several columns of `C` are parallel their eigenvalues coincide and
/// the eigenspace is not resolved by the projections. Such a cluster is
/// split by anchor rows if its columns have disjoint supports, and the
/// matching `B̃` columns are then solved from `X̃`; otherwise the call fails
/// with [`Error::PairingFailure`].
pub fn simultaneous_diagonalize(
    m: &Tensor3,
    k: usize,
    seed: u64,
    opts: &DecompositionOptions,
) -> Result<DecompositionResult> {
    let (d1, d2, d3) = m.dims;
    if k == 0 || d1 < k || d2 < k {
        return Err(Error::DimensionMismatch(format!("rank {k} with dims {:?}", m.dims)));
    }
    let u = top_subspace(&matricize(m, Mode::One), k, opts.rank_tol)?;
    let v = top_subspace(&matricize(m, Mode::Two), k, opts.rank_tol)?;

    let wanted = opts.candidates.max(1);
    let mut best: Option<Box<DecompositionResult>> = None;
    let mut found = 0;
    let mut last_err = None;
    for attempt in 0..opts.max_retries + wanted {
        let mut rng = rng::stream(seed, attempt as u64);
        let a = unit_sphere(d3, &mut rng);
        let b = if opts.marginal_slice {
            vec![1.0 / (d3 as f64).sqrt(); d3]
        } else {
            unit_sphere(d3, &mut rng)
        };
        match decompose_once(m, k, &u, &v, a, b, opts)? {
            Attempt::Done(mut res) => {
                res.retries_used = attempt + 1 - (found + 1);
                if best.as_ref().is_none_or(|b| res.reconstruction_error < b.reconstruction_error) {
                    best = Some(res);
                }
                found += 1;
                if found == wanted {
                    break;
                }
            }
            Attempt::Retry(e) => last_err = Some(e),
        }
    }
    if let Some(res) = best {
        return Ok(*res);
    }
    Err(match last_err.expect("at least one attempt") {
        Error::SingularProjection { .. } => Error::SingularProjection { attempts: opts.max_retries + wanted },
        Error::ComplexEigenvalues { max_imag, .. } => {
            Error::ComplexEigenvalues { attempts: opts.max_retries + wanted, max_imag }
        }
        e => e,
    })
}

fn decompose_once(
    m: &Tensor3,
    k: usize,
    u: &Matrix,
    v: &Matrix,
    a: Vec<f64>,
    b: Vec<f64>,
    opts: &DecompositionOptions,
) -> Result<Attempt> {
    let x = u.transpose() * project3(m, &a)? * v;
    let y = u.transpose() * project3(m, &b)? * v;
    if condition_ratio(&x) < opts.singular_tol || condition_ratio(&y) < opts.singular_tol {
        return Ok(Attempt::Retry(Error::SingularProjection { attempts: 1 }));
    }
    let (Some(x_inv), Some(y_inv)) = (inverse(&x), inverse(&y)) else {
        return Ok(Attempt::Retry(Error::SingularProjection { attempts: 1 }));
    };
    let ga = &x * &y_inv;
    let gb = (&x_inv * &y).transpose();

    let clusters_a = match real_eigenspaces(&ga, opts) {
        Ok(c) => c,
        Err(EigenFailure::Complex(max_imag)) => {
            return Ok(Attempt::Retry(Error::ComplexEigenvalues { attempts: 1, max_imag }))
        }
        Err(EigenFailure::NoConvergence) => {
            return Ok(Attempt::Retry(Error::NonConvergent { iterations: 200 * k.max(10), residual: f64::NAN }))
        }
    };
    let clusters_b = match real_eigenspaces(&gb, opts) {
        Ok(c) => c,
        Err(EigenFailure::Complex(max_imag)) => {
            return Ok(Attempt::Retry(Error::ComplexEigenvalues { attempts: 1, max_imag }))
        }
        Err(EigenFailure::NoConvergence) => {
            return Ok(Attempt::Retry(Error::NonConvergent { iterations: 200 * k.max(10), residual: f64::NAN }))
        }
    };

    let degenerate: Vec<usize> = clusters_a.iter().map(|c| c.basis.ncols()).filter(|&r| r > 1).collect();
    let (a_tilde, b_tilde, residuals) = if degenerate.is_empty() {
        if clusters_b.len() != k {
            return Ok(Attempt::Retry(Error::PairingFailure(
                "A-side spectrum is simple but B-side spectrum is not".into(),
            )));
        }
        let la: Vec<f64> = clusters_a.iter().map(|c| c.value).collect();
        let lb: Vec<f64> = clusters_b.iter().map(|c| c.value).collect();
        let pairs = pair_reciprocal(&la, &lb);
        let worst = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        if worst > opts.pairing_tol {
            return Ok(Attempt::Retry(Error::PairingFailure(format!(
                "reciprocal residual {worst:.3e} exceeds {:.1e}",
                opts.pairing_tol
            ))));
        }
        let mut at = Matrix::zeros(k, k);
        let mut bt = Matrix::zeros(k, k);
        for (r, (c, &(j, _))) in clusters_a.iter().zip(&pairs).enumerate() {
            at.set_column(r, &c.basis.column(0));
            bt.set_column(r, &clusters_b[j].basis.column(0));
        }
        (at, bt, pairs.iter().map(|p| p.1).collect::<Vec<_>>())
    } else {
        // Resolve clusters in the lifted space, where disjoint supports are
        // visible, then map back.
        let mut lifted = Matrix::zeros(u.nrows(), k);
        let mut values = Vec::with_capacity(k);
        let mut col = 0;
        for c in &clusters_a {
            let block = u * &c.basis;
            let resolved = if c.basis.ncols() == 1 {
                block
            } else {
                match resolve_anchored_cluster(&block) {
                    Some(r) => r,
                    None => {
                        return Err(Error::PairingFailure(format!(
                            "eigenvalue cluster of multiplicity {} cannot be resolved",
                            c.basis.ncols()
                        )))
                    }
                }
            };
            for r in 0..resolved.ncols() {
                lifted.set_column(col, &resolved.column(r));
                values.push(c.value);
                col += 1;
            }
        }
        let at = u.transpose() * lifted;
        // X̃ = Ã D_a B̃ᵀ, so D_a B̃ᵀ = Ã⁻¹ X̃; the diagonal scale is removed
        // by the column normalization below.
        let Some(at_inv) = inverse(&at) else {
            return Ok(Attempt::Retry(Error::SingularProjection { attempts: 1 }));
        };
        let bt = (at_inv * &x).transpose();
        let lb: Vec<f64> = clusters_b
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.value, c.basis.ncols()))
            .collect();
        let residuals: Vec<f64> = pair_reciprocal(&values, &lb).iter().map(|p| p.1).collect();
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        if worst > opts.pairing_tol {
            return Ok(Attempt::Retry(Error::PairingFailure(format!(
                "reciprocal residual {worst:.3e} exceeds {:.1e}",
                opts.pairing_tol
            ))));
        }
        (at, bt, residuals)
    };

    let mut a_hat = u * a_tilde;
    let mut b_hat = v * b_tilde;
    if let Err(j) = linalg::normalize_columns(&mut a_hat, 1e-12) {
        return Ok(Attempt::Retry(Error::PairingFailure(format!("A column {j} has vanishing sum"))));
    }
    if let Err(j) = linalg::normalize_columns(&mut b_hat, 1e-12) {
        return Ok(Attempt::Retry(Error::PairingFailure(format!("B column {j} has vanishing sum"))));
    }
    let kr = khatri_rao(&a_hat, &b_hat)?;
    let c_hat = matricize(m, Mode::Three) * pinv(&kr, opts.rank_tol).transpose();
    let recon = outer3(&a_hat, &b_hat, &c_hat)?;
    let reconstruction_error = recon.frobenius_distance(m);
    let neg = negative_mass(&a_hat) + negative_mass(&b_hat) + negative_mass(&c_hat);
    Ok(Attempt::Done(Box::new(DecompositionResult {
        a_hat,
        b_hat,
        c_hat,
        projections: (a, b),
        pairing_residuals: residuals,
        reconstruction_error,
        negative_mass: neg,
        retries_used: 0,
        degenerate_clusters: degenerate,
    })))
}
