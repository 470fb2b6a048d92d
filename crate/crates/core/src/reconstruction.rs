//! Narrow-stencil reconstruction from low-order Legendre moments.
//!
//! On every element `K` the polynomial `R_K u ∈ Q^k` is fixed by matching the
//! order-`m` moments of `u` on each of the `3^d` stencil members. The system is
//! square exactly when `k + 1 = 3(m + 1)`; its matrix `M_K` has rows blocked by
//! stencil member (stencil order) and `β ∈ A^m`, and columns indexed by
//! `α ∈ A^k`, both in trace order.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{lu_factor, DenseMatrix};
use crate::mesh::{ElementId, Stencil, Stencil1d, StencilKind, TensorMesh};
use crate::polynomials::{gauss_rule, legendre_eval_all, IndexSet, QuadratureRule};

/// Reconstruction is declared singular above this 1-norm condition estimate.
pub const SINGULARITY_THRESHOLD: f64 = 1e12;

/// Reconstruction order `k`, moment order `m` and dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OrderPair {
    pub k: usize,
    pub m: usize,
    pub dim: usize,
}

impl OrderPair {
    /// The well-posed pair for reconstruction order `k` (`k ∈ {2, 5}`).
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        let m = match k {
            2 => 0,
            5 => 1,
            _ => return Err(Error::UnsupportedOrder(k)),
        };
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(Self { k, m, dim })
    }

    /// `(m+1)^d`, moments (degrees of freedom) per element.
    pub fn moments_per_element(&self) -> usize {
        (self.m + 1).pow(self.dim as u32)
    }

    /// `(k+1)^d`, coefficients of the reconstructed polynomial.
    pub fn coefficients(&self) -> usize {
        (self.k + 1).pow(self.dim as u32)
    }

    pub fn stencil_size(&self) -> usize {
        3usize.pow(self.dim as u32)
    }

    /// Quadrature points per direction used throughout the solver.
    pub fn quadrature_points(&self) -> usize {
        self.k + 2
    }
}

/// Per-direction affine data of a stencil member relative to the owner:
/// `a = h_member / h_owner`, `b = 2 (x_member − x_owner) / h_owner`.
fn member_geometry(mesh: &TensorMesh, direction: usize, owner: usize, st: &Stencil1d) -> [(f64, f64); 3] {
    let h0 = mesh.size(direction, owner);
    let x0 = mesh.center(direction, owner);
    let mut out = [(0.0, 0.0); 3];
    for (s, slot) in out.iter_mut().enumerate() {
        let j = st.indices[s];
        let a = mesh.size(direction, j) / h0;
        let b = 2.0 * (mesh.center(direction, j) + st.shifts[s] - x0) / h0;
        *slot = (a, b);
    }
    out
}

/// `((2β+1)/2) ∫_{-1}^{1} L̂^β(x̂) L̂^α(a x̂ + b) dx̂` for all `β ≤ m`, `α ≤ k`,
/// indexed `[β][α]`.
fn factor_table(k: usize, m: usize, a: f64, b: f64, quad: &QuadratureRule) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; k + 1]; m + 1];
    for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
        let inner = legendre_eval_all(m, x);
        let outer = legendre_eval_all(k, a * x + b);
        for (beta, row) in t.iter_mut().enumerate() {
            for (alpha, v) in row.iter_mut().enumerate() {
                *v += w * inner[beta] * outer[alpha];
            }
        }
    }
    for (beta, row) in t.iter_mut().enumerate() {
        let s = (2 * beta + 1) as f64 / 2.0;
        row.iter_mut().for_each(|v| *v *= s);
    }
    t
}

/// One-dimensional moment matrix of element `index` along `direction`, rows
/// `(member, β)` and columns `α`.
pub fn moment_matrix_1d(mesh: &TensorMesh, direction: usize, index: usize, pair: OrderPair) -> DenseMatrix {
    let st = mesh.stencil_1d(direction, index);
    let geo = member_geometry(mesh, direction, index, &st);
    let quad = gauss_rule(pair.quadrature_points()).expect("small Gauss rule");
    let rows = 3 * (pair.m + 1);
    let mut out = DenseMatrix::zeros(rows, pair.k + 1);
    for (s, &(a, b)) in geo.iter().enumerate() {
        let t = factor_table(pair.k, pair.m, a, b, &quad);
        for beta in 0..=pair.m {
            for alpha in 0..=pair.k {
                out[(s * (pair.m + 1) + beta, alpha)] = t[beta][alpha];
            }
        }
    }
    out
}

/// Square moment matrix `M_K` assembled directly from the entry formula.
pub fn moment_matrix(mesh: &TensorMesh, element: &ElementId, pair: OrderPair) -> DenseMatrix {
    let stencil = mesh.stencil_of(element);
    assemble(mesh, &stencil, pair, &geometry_of(mesh, &stencil))
}

fn geometry_of(mesh: &TensorMesh, stencil: &Stencil) -> Vec<[(f64, f64); 3]> {
    stencil
        .directions
        .iter()
        .enumerate()
        .map(|(d, st)| member_geometry(mesh, d, stencil.owner.index[d], st))
        .collect()
}

/// Factor tables `[direction][member][β][α]`.
fn stencil_tables(pair: OrderPair, geo: &[[(f64, f64); 3]]) -> Vec<Vec<Vec<Vec<f64>>>> {
    let quad = gauss_rule(pair.quadrature_points()).expect("small Gauss rule");
    geo.iter()
        .map(|g| g.iter().map(|&(a, b)| factor_table(pair.k, pair.m, a, b, &quad)).collect())
        .collect()
}

fn assemble(mesh: &TensorMesh, stencil: &Stencil, pair: OrderPair, geo: &[[(f64, f64); 3]]) -> DenseMatrix {
    let am = IndexSet::new(pair.m, mesh.dim());
    let ak = IndexSet::new(pair.k, mesh.dim());
    let tables = stencil_tables(pair, geo);
    let n = ak.len();
    let mut out = DenseMatrix::zeros(n, n);
    let block = am.len();
    for s in 0..stencil.members.len() {
        let pos = stencil.member_position(s);
        for (r, beta) in am.iter().enumerate() {
            for (c, alpha) in ak.iter().enumerate() {
                let v: f64 = (0..mesh.dim())
                    .map(|d| tables[d][pos[d]][beta.0[d]][alpha.0[d]])
                    .product();
                out[(s * block + r, c)] = v;
            }
        }
    }
    out
}

/// `M_K⁻¹` as the tensor product of the inverted 1D moment matrices, which
/// is considerably more accurate than inverting the assembled matrix.
fn tensor_inverse(dim: usize, stencil: &Stencil, pair: OrderPair, geo: &[[(f64, f64); 3]]) -> Result<DenseMatrix> {
    let am = IndexSet::new(pair.m, dim);
    let ak = IndexSet::new(pair.k, dim);
    let tables = stencil_tables(pair, geo);
    let nb = pair.m + 1;
    let mut inv_1d = Vec::with_capacity(dim);
    for t in &tables {
        let mut m = DenseMatrix::zeros(3 * nb, pair.k + 1);
        for (s, ts) in t.iter().enumerate() {
            for beta in 0..nb {
                for alpha in 0..=pair.k {
                    m[(s * nb + beta, alpha)] = ts[beta][alpha];
                }
            }
        }
        let lu = lu_factor(&m).map_err(|_| Error::SingularMatrix {
            element: stencil.owner.linear,
            condition: f64::INFINITY,
        })?;
        inv_1d.push(refine_inverse(&m, lu.inverse()));
    }
    let n = ak.len();
    let block = am.len();
    let mut out = DenseMatrix::zeros(n, n);
    for s in 0..stencil.members.len() {
        let pos = stencil.member_position(s);
        for (r, beta) in am.iter().enumerate() {
            for (c, alpha) in ak.iter().enumerate() {
                out[(c, s * block + r)] = (0..dim)
                    .map(|d| inv_1d[d][(alpha.0[d], pos[d] * nb + beta.0[d])])
                    .product();
            }
        }
    }
    Ok(out)
}

/// Result of a well-posedness audit of one moment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WellPosedness {
    pub determinant: f64,
    pub condition_estimate: f64,
    /// Closed-form `|det M_K|` when one is known for this configuration.
    pub oracle: Option<f64>,
    /// `| |det| − oracle | / oracle`.
    pub relative_deviation: Option<f64>,
}

/// Closed-form `|det|` of the 1D order-`k` moment matrix given the size
/// ratios `a_s = h_s / h_owner` of the three members in stencil order.
///
/// For `k = 5` the last factor carries exponent 4; this is the exact value of
/// the determinant (and the exponent the lower bounds below require).
pub fn determinant_oracle_1d(k: usize, kind: StencilKind, a: [f64; 3]) -> Option<f64> {
    let (p, q) = match kind {
        // center: neighbours j-1, j+1
        StencilKind::Center => (a[0], a[2]),
        // backward: j-2, j-1
        StencilKind::Backward => (a[0], a[1]),
        // forward: j+1, j+2
        StencilKind::Forward => (a[2], a[1]),
    };
    match (k, kind) {
        (2, StencilKind::Center) => Some(2.0 * (q + 1.0) * (p + 1.0) * (p + q + 1.0)),
        (2, _) => Some(2.0 * (q + 1.0) * (q + p) * (q + p + 1.0)),
        (5, StencilKind::Center) => Some(
            252.0 * p * q * (q + 1.0).powi(4) * (p + 1.0).powi(4) * (p + q + 1.0).powi(4),
        ),
        (5, _) => Some(252.0 * p * q * (q + 1.0).powi(4) * (p + q).powi(4) * (p + q + 1.0).powi(4)),
        _ => None,
    }
}

/// Printed lower bound of `|det|` for meshes whose neighbour ratios exceed `a_min`.
pub fn determinant_lower_bound_1d(k: usize, kind: StencilKind, a_min: f64) -> Option<f64> {
    let a = a_min;
    match (k, kind) {
        (2, StencilKind::Center) => Some(2.0 * (a + 1.0).powi(2) * (2.0 * a + 1.0)),
        (2, _) => Some(4.0 * a * (a + 1.0) * (2.0 * a + 1.0)),
        (5, StencilKind::Center) => Some(252.0 * a * a * (a + 1.0).powi(8) * (2.0 * a + 1.0).powi(4)),
        (5, _) => Some(4032.0 * a.powi(6) * (a + 1.0).powi(4) * (2.0 * a + 1.0).powi(4)),
        _ => None,
    }
}

/// Closed-form `|det M_K|` for any supported element: the 1D formula, or in
/// 2D the Kronecker identity `det(A ⊗ B) = det(A)^p det(B)^p` with
/// `p = 3(m+1)`.
pub fn determinant_oracle(mesh: &TensorMesh, element: &ElementId, pair: OrderPair) -> Option<f64> {
    let stencil = mesh.stencil_of(element);
    let geo = geometry_of(mesh, &stencil);
    let per_dir: Option<Vec<f64>> = stencil
        .directions
        .iter()
        .zip(&geo)
        .map(|(st, g)| determinant_oracle_1d(pair.k, st.kind, [g[0].0, g[1].0, g[2].0]))
        .collect();
    let per_dir = per_dir?;
    if mesh.dim() == 1 {
        Some(per_dir[0])
    } else {
        let p = (3 * (pair.m + 1)) as i32;
        Some(per_dir[0].powi(p) * per_dir[1].powi(p))
    }
}

/// Numeric determinant and condition estimate of `matrix`, compared against
/// the closed form for `element` when one applies.
pub fn wellposedness_check(
    matrix: &DenseMatrix,
    mesh: &TensorMesh,
    element: &ElementId,
    pair: OrderPair,
) -> Result<WellPosedness> {
    let lu = lu_factor(matrix).map_err(|_| Error::SingularMatrix {
        element: element.linear,
        condition: f64::INFINITY,
    })?;
    let determinant = lu.determinant();
    let condition_estimate = lu.condition_estimate();
    if !(condition_estimate <= SINGULARITY_THRESHOLD) {
        return Err(Error::SingularMatrix {
            element: element.linear,
            condition: condition_estimate,
        });
    }
    let oracle = determinant_oracle(mesh, element, pair);
    let relative_deviation = oracle.map(|o| (determinant.abs() - o).abs() / o);
    Ok(WellPosedness {
        determinant,
        condition_estimate,
        oracle,
        relative_deviation,
    })
}

/// Element-independent part of a reconstruction: the moment matrix and its
/// inverse `T`. Shared between elements with identical stencil geometry.
#[derive(Debug, Clone)]
pub struct LocalReconstruction {
    pub matrix: DenseMatrix,
    /// `T = M⁻¹`; maps stacked stencil moments to Legendre coefficients on
    /// the owner.
    pub inverse: DenseMatrix,
    pub determinant: f64,
    pub condition_estimate: f64,
}

/// Reconstruction data of one element.
#[derive(Debug, Clone)]
pub struct ReconstructionTable {
    pub owner: ElementId,
    pub pair: OrderPair,
    pub stencil: Stencil,
    pub local: Arc<LocalReconstruction>,
}

impl ReconstructionTable {
    /// Legendre coefficients of `R_K u` on the owner from stacked stencil moments.
    pub fn apply(&self, stencil_moments: &[f64]) -> Vec<f64> {
        self.local.inverse.matvec(stencil_moments)
    }
}

/// `Σ a_i b_i + c` accumulated with error-free transformations, so the
/// result is as accurate as if computed in twice the working precision.
fn compensated_dot(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>, c: f64) -> f64 {
    let (mut s, mut err) = (c, 0.0);
    for (x, y) in a.zip(b) {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        err += (s - (t - z)) + (p - z) + pe;
        s = t;
    }
    s + err
}

/// Iterative refinement `T ← T + T (I − M T)` with the residual formed in
/// extended precision. Far stencil members make the moment matrices badly
/// scaled, and a plain LU inverse loses several digits beyond what the
/// data supports.
fn refine_inverse(m: &DenseMatrix, mut t: DenseMatrix) -> DenseMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    for _ in 0..3 {
        let mut r = DenseMatrix::zeros(rows, rows);
        for i in 0..rows {
            for j in 0..rows {
                let delta = if i == j { 1.0 } else { 0.0 };
                r[(i, j)] = compensated_dot(m.row(i).iter().map(|v| -v), (0..cols).map(|l| t[(l, j)]), delta);
            }
        }
        let corr = t.matmul(&r);
        for i in 0..cols {
            for j in 0..rows {
                t[(i, j)] += corr[(i, j)];
            }
        }
    }
    t
}

fn build_local(mesh: &TensorMesh, stencil: &Stencil, pair: OrderPair, geo: &[[(f64, f64); 3]]) -> Result<LocalReconstruction> {
    let element = stencil.owner.linear;
    let matrix = assemble(mesh, stencil, pair, geo);
    let lu = lu_factor(&matrix).map_err(|_| Error::SingularMatrix {
        element,
        condition: f64::INFINITY,
    })?;
    let condition_estimate = lu.condition_estimate();
    if !(condition_estimate <= SINGULARITY_THRESHOLD) {
        return Err(Error::SingularMatrix {
            element,
            condition: condition_estimate,
        });
    }
    Ok(LocalReconstruction {
        determinant: lu.determinant(),
        inverse: tensor_inverse(mesh.dim(), stencil, pair, geo)?,
        matrix,
        condition_estimate,
    })
}

/// Reconstruction map of a single element.
pub fn reconstruction_map(mesh: &TensorMesh, element: &ElementId, pair: OrderPair) -> Result<ReconstructionTable> {
    let stencil = mesh.stencil_of(element);
    let local = build_local(mesh, &stencil, pair, &geometry_of(mesh, &stencil))?;
    Ok(ReconstructionTable {
        owner: *element,
        pair,
        stencil,
        local: Arc::new(local),
    })
}

/// Reconstruction maps of all elements. Elements whose stencils have
/// bit-identical geometry share one factorization (every interior element of
/// a uniform mesh, for instance).
pub fn reconstruction_tables(mesh: &TensorMesh, pair: OrderPair) -> Result<Vec<ReconstructionTable>> {
    let mut cache: HashMap<Vec<u64>, Arc<LocalReconstruction>> = HashMap::new();
    let mut out = Vec::with_capacity(mesh.num_elements());
    for element in mesh.elements() {
        let stencil = mesh.stencil_of(&element);
        let geo = geometry_of(mesh, &stencil);
        let key: Vec<u64> = geo
            .iter()
            .flat_map(|g| g.iter().flat_map(|&(a, b)| [a.to_bits(), b.to_bits()]))
            .collect();
        let local = match cache.get(&key) {
            Some(l) => l.clone(),
            None => {
                let l = Arc::new(build_local(mesh, &stencil, pair, &geo)?);
                cache.insert(key, l.clone());
                l
            }
        };
        out.push(ReconstructionTable {
            owner: element,
            pair,
            stencil,
            local,
        });
    }
    Ok(out)
}

/// One row of a reconstruction convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionErrorRow {
    pub cells: usize,
    pub h: f64,
    pub l2_error: f64,
    pub h1_error: f64,
    pub l2_rate: Option<f64>,
    pub h1_rate: Option<f64>,
}

/// L² and broken H¹-seminorm errors of `R^k u` (DoFs = moments of `u`) over a
/// sequence of meshes, with observed rates between consecutive meshes.
pub fn reconstruction_error_study(
    u: &(dyn Fn([f64; 2]) -> f64 + Sync),
    gradient: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
    meshes: &[TensorMesh],
    k: usize,
) -> Result<Vec<ReconstructionErrorRow>> {
    let mut rows: Vec<ReconstructionErrorRow> = Vec::new();
    for mesh in meshes {
        let pair = OrderPair::new(k, mesh.dim())?;
        let space = crate::rdg::RdgSpace::new(mesh.clone(), pair)?;
        let dofs = space.project(u);
        let l2 = space.l2_error(&dofs, |x| u(x));
        let h1 = space.h1_seminorm_error(&dofs, |x| gradient(x));
        let h = mesh.max_size();
        let (l2_rate, h1_rate) = match rows.last() {
            Some(prev) => (
                Some((prev.l2_error / l2).ln() / (prev.h / h).ln()),
                Some((prev.h1_error / h1).ln() / (prev.h / h).ln()),
            ),
            None => (None, None),
        };
        rows.push(ReconstructionErrorRow {
            cells: mesh.num_elements(),
            h,
            l2_error: l2,
            h1_error: h1,
            l2_rate,
            h1_rate,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_1d(n: usize, periodic: bool) -> TensorMesh {
        TensorMesh::uniform(&[0.0], &[n as f64], &[n], &[periodic]).unwrap()
    }

    #[test]
    fn center_matrix_k2() {
        let mesh = uniform_1d(5, false);
        let e = mesh.element(2).unwrap();
        let m = moment_matrix(&mesh, &e, OrderPair::new(2, 1).unwrap());
        let expect = [[1.0, -2.0, 6.0], [1.0, 0.0, 0.0], [1.0, 2.0, 6.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[(i, j)] - expect[i][j]).abs() < 1e-13);
            }
        }
        let w = wellposedness_check(&m, &mesh, &e, OrderPair::new(2, 1).unwrap()).unwrap();
        assert!((w.determinant - 24.0).abs() < 1e-12);
        assert!(w.relative_deviation.unwrap() < 1e-12);
    }

    #[test]
    fn center_determinant_k5() {
        let mesh = uniform_1d(7, true);
        let e = mesh.element(3).unwrap();
        let pair = OrderPair::new(5, 1).unwrap();
        let m = moment_matrix(&mesh, &e, pair);
        let w = wellposedness_check(&m, &mesh, &e, pair).unwrap();
        // 252 · 2^4 · 2^4 · 3^4
        assert!((w.determinant.abs() - 5_225_472.0).abs() / 5_225_472.0 < 1e-10);
        assert_eq!(w.oracle, Some(5_225_472.0));
    }

    #[test]
    fn owner_block_is_identity() {
        let mesh = TensorMesh::new(
            vec![vec![0.0, 0.4, 1.1, 1.5, 2.6], vec![0.0, 1.0, 1.6, 2.0]],
            vec![false, true],
        )
        .unwrap();
        for k in [2, 5] {
            let pair = OrderPair::new(k, 2).unwrap();
            let am = IndexSet::new(pair.m, 2);
            let ak = IndexSet::new(pair.k, 2);
            for e in mesh.elements() {
                let table = reconstruction_map(&mesh, &e, pair).unwrap();
                let s = table.stencil.members.iter().position(|&m| m == e.linear).unwrap();
                let nb = pair.moments_per_element();
                for r in 0..nb {
                    let col = ak.position(am.get(r)).unwrap();
                    for c in 0..pair.coefficients() {
                        let expect = if col == c { 1.0 } else { 0.0 };
                        assert!((table.local.matrix[(s * nb + r, c)] - expect).abs() < 1e-12);
                    }
                }
                let prod = table.local.matrix.matmul(&table.local.inverse);
                assert!(prod.sub(&DenseMatrix::identity(pair.coefficients())).max_abs() < 1e-10);
            }
        }
    }

    #[test]
    fn linear_data_reconstructs_linear_polynomial() {
        // cells [-1.5,-0.5], [-0.5,0.5], [0.5,1.5]; averages of x are -1, 0, 1
        let mesh = TensorMesh::uniform(&[-1.5], &[1.5], &[3], &[false]).unwrap();
        let e = mesh.element(1).unwrap();
        let table = reconstruction_map(&mesh, &e, OrderPair::new(2, 1).unwrap()).unwrap();
        let c = table.apply(&[-1.0, 0.0, 1.0]);
        assert!(c[0].abs() < 1e-14 && (c[1] - 0.5).abs() < 1e-14 && c[2].abs() < 1e-14);
        let c1 = table.apply(&[1.0, 1.0, 1.0]);
        assert!((c1[0] - 1.0).abs() < 1e-14 && c1[1].abs() < 1e-14 && c1[2].abs() < 1e-14);
    }

    #[test]
    fn uniform_tables_are_shared() {
        let mesh = uniform_1d(10, false);
        let tables = reconstruction_tables(&mesh, OrderPair::new(2, 1).unwrap()).unwrap();
        assert!(Arc::ptr_eq(&tables[3].local, &tables[6].local));
        assert!(!Arc::ptr_eq(&tables[0].local, &tables[5].local));
    }

    #[test]
    fn unsupported_order() {
        assert_eq!(OrderPair::new(3, 1).unwrap_err(), Error::UnsupportedOrder(3));
    }
}
