//! Preconditioned conjugate gradients and BiCGSTAB.

use super::sparse::SparseOperator;
use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Incomplete LU with zero fill on the sparsity pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &SparseOperator) -> Result<Self> {
        a.check_square()?;
        let (rp, ci, v) = a.raw();
        let n = a.rows();
        let row_ptr = rp.to_vec();
        let col_idx = ci.to_vec();
        let mut values = v.to_vec();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                if col_idx[p] == i {
                    diag[i] = p;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::LinearSolveFailure(format!(
                    "ILU(0): structurally zero diagonal in row {i}"
                )));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[p]] = p;
            }
            for p in row_ptr[i]..diag[i] {
                let k = col_idx[p];
                let pivot = values[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::LinearSolveFailure(format!("ILU(0): zero pivot in row {k}")));
                }
                let l = values[p] / pivot;
                values[p] = l;
                for q in diag[k] + 1..row_ptr[k + 1] {
                    let j = col_idx[q];
                    let target = pos[j];
                    if target != usize::MAX && target >= row_ptr[i] && target < row_ptr[i + 1] {
                        values[target] -= l * values[q];
                    }
                }
            }
            for p in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[p]] = usize::MAX;
            }
        }
        Ok(Self {
            row_ptr,
            col_idx,
            values,
            diag,
        })
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut z = r.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for p in self.row_ptr[i]..self.diag[i] {
                s -= self.values[p] * z[self.col_idx[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..self.row_ptr[i + 1] {
                s -= self.values[p] * z[self.col_idx[p]];
            }
            z[i] = s / self.values[self.diag[i]];
        }
        z
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive-definite `A`.
pub fn conjugate_gradient(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(x);
        }
        a.matvec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if it + 1 == max_iter {
            break;
        }
    }
    let res = norm(&r) / bnorm;
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::NotConverged {
            iterations: max_iter,
            residual: res,
        })
    }
}

/// Right-preconditioned BiCGSTAB with an ILU(0) preconditioner.
pub fn bicgstab(
    a: &SparseOperator,
    precond: &Ilu0,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    for _ in 0..max_iter {
        if res <= tol {
            return Ok(x);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond.apply(&p);
        a.matvec_into(&p_hat, &mut v);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        if norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(x);
        }
        let s_hat = precond.apply(&s);
        let t = a.matvec(&s_hat);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if omega == 0.0 {
            break;
        }
    }
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::NotConverged {
            iterations: max_iter,
            residual: res,
        })
    }
}
