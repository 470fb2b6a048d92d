//! Banded LU with partial pivoting (LAPACK `gbtf2` layout).

use super::sparse::SparseOperator;
use crate::error::{Error, Result};

/// Factorization of a banded matrix; entry `(i, j)` lives at
/// `ab[kv + i - j + j * ldab]` with `kv = kl + ku` leaving room for fill.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    kv: usize,
    ldab: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &SparseOperator) -> Result<Self> {
        a.check_square()?;
        let n = a.rows();
        let (kl, ku) = a.bandwidths();
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        for (i, j, v) in a.triplets() {
            ab[kv + i - j + j * ldab] = v;
        }
        let idx = |i: usize, j: usize| kv + i - j + j * ldab;
        let mut pivots = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = ab[idx(j, j)].abs();
            for p in 1..=km {
                let v = ab[idx(j + p, j)].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            pivots[j] = j + jp;
            if best == 0.0 {
                return Err(Error::LinearSolveFailure(format!(
                    "zero pivot in banded factorization at column {j}"
                )));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(idx(j, c), idx(j + jp, c));
                }
            }
            if km > 0 {
                let d = ab[idx(j, j)];
                for i in 1..=km {
                    ab[idx(j + i, j)] /= d;
                }
                for c in j + 1..=ju {
                    let u = ab[idx(j, c)];
                    if u == 0.0 {
                        continue;
                    }
                    let base_c = kv + j - c + c * ldab;
                    let base_j = kv + j * ldab;
                    for i in 1..=km {
                        // ab[idx(j+i, c)] -= ab[idx(j+i, j)] * u
                        ab[base_c + i] -= ab[base_j + i] * u;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            kv,
            ldab,
            ab,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let (kv, ldab) = (self.kv, self.ldab);
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                let base = kv + j * ldab;
                for i in 1..=km {
                    b[j + i] -= self.ab[base + i] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let base = kv + j * ldab;
            b[j] /= self.ab[base];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    // ab[idx(i, j)] with i < j
                    b[i] -= self.ab[base + i - j] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
