//! Dense small-matrix kernels and sparse storage with direct and iterative
//! solvers.

pub mod banded;
pub mod dense;
pub mod krylov;
pub mod sparse;

pub use banded::BandedLu;
pub use dense::{lu_factor, DenseMatrix, LuFactors};
pub use krylov::{bicgstab, conjugate_gradient, Ilu0};
pub use sparse::{assemble, SparseOperator, TripletBuilder};

use crate::error::{Error, Result};

/// Systems above this size use the preconditioned Krylov path.
pub const DIRECT_SOLVE_LIMIT: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMethod {
    /// Banded LU with partial pivoting.
    Direct,
    /// Jacobi-preconditioned CG; symmetric positive-definite operators only.
    ConjugateGradient,
    /// ILU(0)-preconditioned BiCGSTAB.
    BiCgStab,
    /// Direct up to [`DIRECT_SOLVE_LIMIT`] unknowns, BiCGSTAB beyond.
    Auto,
}

/// One-shot solve of `A x = rhs`.
pub fn sparse_solve(a: &SparseOperator, rhs: &[f64], method: SolveMethod, tol: f64) -> Result<Vec<f64>> {
    LinearSolver::new(a, method, tol)?.solve(rhs)
}

/// A reusable solver for a fixed operator.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    kind: SolverKind,
    tol: f64,
    /// `perm[i]` is the row/column of original unknown `i` in the factored matrix.
    perm: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
enum SolverKind {
    Direct(BandedLu),
    Cg(SparseOperator),
    BiCgStab(SparseOperator, Ilu0),
}

impl LinearSolver {
    pub fn new(a: &SparseOperator, method: SolveMethod, tol: f64) -> Result<Self> {
        a.check_square()?;
        let method = match method {
            SolveMethod::Auto if a.rows() <= DIRECT_SOLVE_LIMIT => SolveMethod::Direct,
            SolveMethod::Auto => SolveMethod::BiCgStab,
            m => m,
        };
        let kind = match method {
            SolveMethod::Direct => SolverKind::Direct(BandedLu::factor(a)?),
            SolveMethod::ConjugateGradient => SolverKind::Cg(a.clone()),
            SolveMethod::BiCgStab => SolverKind::BiCgStab(a.clone(), Ilu0::new(a)?),
            SolveMethod::Auto => unreachable!(),
        };
        Ok(Self { kind, tol, perm: None })
    }

    /// Factors `P A Pᵀ` where `P` sends unknown `i` to position `perm[i]`;
    /// [`solve`](Self::solve) still takes and returns vectors in the original
    /// order.
    pub fn with_ordering(a: &SparseOperator, perm: Vec<usize>, method: SolveMethod, tol: f64) -> Result<Self> {
        a.check_square()?;
        if perm.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: perm.len(),
            });
        }
        let mut b = TripletBuilder::new(a.rows(), a.cols());
        for (i, j, v) in a.triplets() {
            b.push(perm[i], perm[j], v);
        }
        let mut solver = Self::new(&b.build(), method, tol)?;
        solver.perm = Some(perm);
        Ok(solver)
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.kind, SolverKind::Direct(_))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.perm {
            None => self.solve_raw(rhs),
            Some(p) => {
                let mut b = vec![0.0; rhs.len()];
                for (i, &v) in rhs.iter().enumerate() {
                    b[p[i]] = v;
                }
                let x = self.solve_raw(&b)?;
                Ok(p.iter().map(|&pi| x[pi]).collect())
            }
        }
    }

    fn solve_raw(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let max_iter = 10 * rhs.len().max(100);
        match &self.kind {
            SolverKind::Direct(lu) => Ok(lu.solve(rhs)),
            SolverKind::Cg(a) => conjugate_gradient(a, rhs, None, self.tol, max_iter),
            SolverKind::BiCgStab(a, ilu) => bicgstab(a, ilu, rhs, None, self.tol, max_iter),
        }
    }
}

/// `‖b − A x‖ / ‖b‖` (or the absolute residual when `b = 0`).
pub fn relative_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_returns_rhs() {
        let a = SparseOperator::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        for m in [SolveMethod::Direct, SolveMethod::ConjugateGradient, SolveMethod::BiCgStab] {
            assert_eq!(sparse_solve(&a, &b, m, 1e-12).unwrap(), b);
        }
    }

    #[test]
    fn direct_and_iterative_agree_on_spd_banded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 120;
        let bw = 4;
        // A = Bᵀ B + I with B banded gives an SPD banded matrix.
        let mut bb = TripletBuilder::new(n, n);
        for i in 0..n {
            for j in i..(i + bw).min(n) {
                bb.push(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let b = bb.build();
        let bt = b.transpose();
        let mut tb = TripletBuilder::new(n, n);
        for i in 0..n {
            tb.push(i, i, 1.0);
            for (k, v) in bt.row(i) {
                for (j, w) in b.row(k) {
                    tb.push(i, j, v * w);
                }
            }
        }
        let a = tb.build();
        assert!(a.asymmetry() < 1e-14);
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xd = sparse_solve(&a, &rhs, SolveMethod::Direct, 0.0).unwrap();
        let xc = sparse_solve(&a, &rhs, SolveMethod::ConjugateGradient, 1e-12).unwrap();
        let xb = sparse_solve(&a, &rhs, SolveMethod::BiCgStab, 1e-12).unwrap();
        for i in 0..n {
            assert!((xd[i] - xc[i]).abs() < 1e-8);
            assert!((xd[i] - xb[i]).abs() < 1e-8);
        }
        assert!(relative_residual(&a, &xd, &rhs) < 1e-12);
    }

    #[test]
    fn permuted_solve_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 30;
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 4.0);
            b.push(i, (i + 1) % n, rng.gen_range(-1.0..1.0));
            b.push(i, (i + n - 1) % n, rng.gen_range(-1.0..1.0));
        }
        let a = b.build();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let perm: Vec<usize> = (0..n).map(|i| if 2 * i < n { 2 * i } else { 2 * (n - 1 - i) + 1 }).collect();
        let x = LinearSolver::with_ordering(&a, perm, SolveMethod::Direct, 0.0)
            .unwrap()
            .solve(&rhs)
            .unwrap();
        assert!(relative_residual(&a, &x, &rhs) < 1e-13);
    }
}
