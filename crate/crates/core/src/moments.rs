//! Window moment tensors.
//!
//! `M[L(y_1..y_tau)][L(y_{-1}..y_{-tau})][y_0]` is the stationary probability
//! of the window: future string on mode 1, past string (most recent first) on
//! mode 2, present symbol on mode 3.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hmm::{Hmm, ObservationWindow, DEFAULT_ROW_CAP};
use crate::linalg::Vector;
use crate::tensor::{outer3, Tensor3};

/// Big-endian base-`m` bijection between strings of length `tau` and
/// `[0, m^tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexMap {
    pub m: usize,
    pub tau: usize,
}

impl IndexMap {
    pub fn new(m: usize, tau: usize) -> Self {
        Self { m, tau }
    }

    pub fn size(&self) -> usize {
        self.m.pow(self.tau as u32)
    }

    pub fn index_of(&self, s: &[usize]) -> Result<usize> {
        if s.len() != self.tau {
            return Err(Error::DimensionMismatch(format!("string of length {} for tau = {}", s.len(), self.tau)));
        }
        s.iter().try_fold(0usize, |acc, &c| {
            if c >= self.m {
                Err(Error::OutOfRange { index: c, bound: self.m })
            } else {
                Ok(acc * self.m + c)
            }
        })
    }

    pub fn string_of(&self, idx: usize) -> Result<Vec<usize>> {
        let size = self.size();
        if idx >= size {
            return Err(Error::OutOfRange { index: idx, bound: size });
        }
        let mut out = vec![0; self.tau];
        let mut rest = idx;
        for slot in out.iter_mut().rev() {
            *slot = rest % self.m;
            rest /= self.m;
        }
        Ok(out)
    }

    /// Index of an iterator of symbols already known to be in range.
    fn index_iter(&self, it: impl Iterator<Item = usize>) -> usize {
        it.fold(0, |acc, c| acc * self.m + c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Empirical { sample_count: usize, seed: Option<u64> },
}

#[derive(Debug, Clone)]
pub struct MomentTensor {
    pub tensor: Tensor3,
    pub tau: usize,
    pub m: usize,
    pub provenance: Provenance,
}

impl MomentTensor {
    /// Sum over the first two modes: the distribution of `y_0`.
    pub fn present_marginal(&self) -> Vector {
        let (d1, d2, d3) = self.tensor.dims();
        let mut out = Vector::zeros(d3);
        for i in 0..d1 {
            for j in 0..d2 {
                for l in 0..d3 {
                    out[l] += self.tensor.get(i, j, l);
                }
            }
        }
        out
    }

    /// Nonzero entries as CSV rows `future_idx,past_idx,present,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["future_idx", "past_idx", "present", "value"])?;
        let (d1, d2, d3) = self.tensor.dims();
        for i in 0..d1 {
            for j in 0..d2 {
                for l in 0..d3 {
                    let v = self.tensor.get(i, j, l);
                    if v != 0.0 {
                        wr.write_record([i.to_string(), j.to_string(), l.to_string(), format!("{v:e}")])?;
                    }
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn check_cap(m: usize, tau: usize) -> Result<()> {
    let rows = (m as u128).checked_pow(tau as u32).unwrap_or(u128::MAX);
    if rows > DEFAULT_ROW_CAP as u128 {
        return Err(Error::SizeCap { rows, cap: DEFAULT_ROW_CAP });
    }
    Ok(())
}

/// `M = A ⊗ B ⊗ C` from the model's likelihood factors.
pub fn exact_moment_tensor(h: &Hmm, tau: usize) -> Result<MomentTensor> {
    check_cap(h.m(), tau)?;
    let f = h.factors(tau)?;
    Ok(MomentTensor { tensor: outer3(&f.a, &f.b, &f.c)?, tau, m: h.m(), provenance: Provenance::Exact })
}

/// Window probabilities computed directly by the forward recursion from the
/// stationary distribution, one window at a time. Independent of the factor
/// construction; intended for small `m^(2·tau+1)`.
pub fn window_probabilities(h: &Hmm, tau: usize) -> Result<MomentTensor> {
    let m = h.m();
    let len = 2 * tau + 1;
    let total = (m as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if total > DEFAULT_ROW_CAP as u128 {
        return Err(Error::SizeCap { rows: total, cap: DEFAULT_ROW_CAP });
    }
    let pi = h.stationary_distribution()?.into_owned();
    let (t, o) = (h.transition(), h.observation());
    let full = IndexMap::new(m, len);
    let side = IndexMap::new(m, tau);
    let d = side.size();
    let mut out = Tensor3::zeros(d, d, m);
    for idx in 0..full.size() {
        let w = full.string_of(idx)?;
        let mut alpha = pi.clone();
        for (step, &sym) in w.iter().enumerate() {
            if step > 0 {
                alpha = t * alpha;
            }
            alpha.component_mul_assign(&o.row(sym).transpose());
        }
        let window = ObservationWindow { symbols: w };
        let fi = side.index_iter(window.future().iter().copied());
        let pj = side.index_iter(window.past());
        out.set(fi, pj, window.present(), alpha.sum());
    }
    Ok(MomentTensor { tensor: out, tau, m, provenance: Provenance::Exact })
}

/// Plug-in estimate: window counts divided by the number of windows.
pub fn empirical_moment_tensor(windows: &[ObservationWindow], m: usize, tau: usize) -> Result<MomentTensor> {
    empirical_with_seed(windows, m, tau, None)
}

pub fn empirical_with_seed(
    windows: &[ObservationWindow],
    m: usize,
    tau: usize,
    seed: Option<u64>,
) -> Result<MomentTensor> {
    if windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_cap(m, tau)?;
    let len = 2 * tau + 1;
    for w in windows {
        if w.symbols.len() != len {
            return Err(Error::DimensionMismatch(format!("window of length {} for tau = {tau}", w.symbols.len())));
        }
        if let Some(&symbol) = w.symbols.iter().find(|&&s| s >= m) {
            return Err(Error::AlphabetMismatch { symbol, m });
        }
    }
    let side = IndexMap::new(m, tau);
    let d = side.size();
    let cells = d * d * m;
    let counts = windows
        .par_chunks(1 << 14)
        .map(|chunk| {
            let mut c = vec![0u64; cells];
            for w in chunk {
                let fi = side.index_iter(w.future().iter().copied());
                let pj = side.index_iter(w.past());
                c[(fi * d + pj) * m + w.present()] += 1;
            }
            c
        })
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let total = windows.len() as f64;
    let data = counts.into_iter().map(|c| c as f64 / total).collect();
    Ok(MomentTensor {
        tensor: Tensor3::from_vec((d, d, m), data)?,
        tau,
        m,
        provenance: Provenance::Empirical { sample_count: windows.len(), seed },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn two_state() -> Hmm {
        let t = Matrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
        let o = Matrix::from_row_slice(2, 2, &[0.7, 0.25, 0.3, 0.75]);
        Hmm::new(t, o).unwrap()
    }

    #[test]
    fn index_examples() {
        assert_eq!(IndexMap::new(2, 3).index_of(&[1, 0, 1]).unwrap(), 5);
        assert_eq!(IndexMap::new(3, 2).index_of(&[2, 1]).unwrap(), 7);
        assert_eq!(IndexMap::new(3, 2).string_of(7).unwrap(), vec![2, 1]);
        assert!(matches!(IndexMap::new(2, 2).index_of(&[0, 2]), Err(Error::OutOfRange { index: 2, bound: 2 })));
        assert!(matches!(IndexMap::new(2, 2).string_of(4), Err(Error::OutOfRange { index: 4, bound: 4 })));
    }

    #[test]
    fn single_state_tensor_is_product_of_emissions() {
        let o = Matrix::from_column_slice(3, 1, &[0.5, 0.3, 0.2]);
        let h = Hmm::new(Matrix::identity(1, 1), o.clone()).unwrap();
        let mt = exact_moment_tensor(&h, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    let want = o[i] * o[j] * o[l];
                    assert!((mt.tensor.get(i, j, l) - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn two_state_matches_brute_force_paths() {
        let h = two_state();
        let pi = h.stationary().unwrap();
        let (t, o) = (h.transition(), h.observation());
        let mt = exact_moment_tensor(&h, 1).unwrap();
        for ym in 0..2 {
            for y0 in 0..2 {
                for y1 in 0..2 {
                    let mut p = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            for c in 0..2 {
                                p += pi[a] * o[(ym, a)] * t[(b, a)] * o[(y0, b)] * t[(c, b)] * o[(y1, c)];
                            }
                        }
                    }
                    assert!((mt.tensor.get(y1, ym, y0) - p).abs() < 1e-12);
                }
            }
        }
        assert!((mt.tensor.sum() - 1.0).abs() < 1e-12);
        let marginal = mt.present_marginal();
        let opi = h.observation() * pi;
        assert!((marginal - opi).amax() < 1e-10);
    }

    #[test]
    fn empirical_examples() {
        let one = vec![ObservationWindow { symbols: vec![0, 0, 0] }];
        let mt = empirical_moment_tensor(&one, 2, 1).unwrap();
        assert_eq!(mt.tensor.get(0, 0, 0), 1.0);
        assert_eq!(mt.tensor.sum(), 1.0);

        let all: Vec<_> = (0..8)
            .map(|i| ObservationWindow { symbols: IndexMap::new(2, 3).string_of(i).unwrap() })
            .collect();
        let mt = empirical_moment_tensor(&all, 2, 1).unwrap();
        assert!(mt.tensor.data().iter().all(|&x| x == 0.125));

        assert!(matches!(empirical_moment_tensor(&[], 2, 1), Err(Error::EmptyInput)));
        let bad = vec![ObservationWindow { symbols: vec![0, 3, 0] }];
        assert!(matches!(empirical_moment_tensor(&bad, 2, 1), Err(Error::AlphabetMismatch { symbol: 3, m: 2 })));
    }

    #[test]
    fn past_is_indexed_most_recent_first() {
        // y_{-2} = 1, y_{-1} = 0, y_0 = 0, y_1 = 0, y_2 = 1.
        let w = vec![ObservationWindow { symbols: vec![1, 0, 0, 0, 1] }];
        let mt = empirical_moment_tensor(&w, 2, 2).unwrap();
        // future (0,1) -> 1; past read (y_{-1}, y_{-2}) = (0,1) -> 1.
        assert_eq!(mt.tensor.get(1, 1, 0), 1.0);
    }

    #[test]
    fn csv_lists_nonzero_entries() {
        let one = vec![ObservationWindow { symbols: vec![1, 0, 1] }];
        let mt = empirical_moment_tensor(&one, 2, 1).unwrap();
        let mut buf = Vec::new();
        mt.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "future_idx,past_idx,present,value\n1,1,0,1e0\n");
    }
}
