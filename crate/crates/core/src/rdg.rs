//! The reduced DG space `U_h^k = R^k V_h^m`.
//!
//! Unknowns are the order-`m` Legendre moments of the solution on every
//! element, stored element-major with `β ∈ A^m` trace-ascending inside each
//! element. The solution on an element is the order-`k` polynomial
//! reconstructed from the moments of its stencil, so a basis function
//! `φ_K^β` is supported on every element whose stencil contains `K`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{assemble, DenseMatrix, SparseOperator, TripletBuilder};
use crate::mesh::{ElementId, Point, TensorMesh};
use crate::polynomials::{gauss_rule, legendre_eval_with_derivative, IndexSet, QuadratureRule};
use crate::reconstruction::{reconstruction_tables, OrderPair, ReconstructionTable};

/// Which trace to take when a point sits on an element interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The element on the negative side of the interface.
    Lower,
    /// The element on the positive side of the interface.
    Upper,
}

/// Legendre coefficients of the reconstructed solution on one element.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPoly {
    pub element: usize,
    pub coefficients: Vec<f64>,
}

/// Tensor-product Legendre basis `L^α`, `α ∈ A^k`, tabulated at the
/// reference volume and face quadrature points.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// `values[q][α]`
    pub values: Vec<Vec<f64>>,
    /// `gradients[i][q][α]`: reference derivative along direction `i`.
    pub gradients: Vec<Vec<Vec<f64>>>,
    /// `faces[i][side]`: the face `r_i = ∓1`.
    pub faces: Vec<[FaceBasis; 2]>,
}

#[derive(Debug, Clone)]
pub struct FaceBasis {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ReferenceBasis {
    fn new(ak: &IndexSet, quad: &QuadratureRule) -> Self {
        let dim = ak.dim();
        let k = ak.order();
        let tab = |x: f64| legendre_eval_with_derivative(k, x);
        let basis_at = |r: Point| -> (Vec<f64>, Vec<Vec<f64>>) {
            let per_dir: Vec<(Vec<f64>, Vec<f64>)> = (0..dim).map(|i| tab(r[i])).collect();
            let mut vals = Vec::with_capacity(ak.len());
            let mut grads = vec![Vec::with_capacity(ak.len()); dim];
            for a in ak.iter() {
                let v: f64 = (0..dim).map(|i| per_dir[i].0[a.0[i]]).product();
                vals.push(v);
                for (g, grad) in grads.iter_mut().enumerate() {
                    let d: f64 = (0..dim)
                        .map(|i| if i == g { per_dir[i].1[a.0[i]] } else { per_dir[i].0[a.0[i]] })
                        .product();
                    grad.push(d);
                }
            }
            (vals, grads)
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        if dim == 1 {
            for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
                points.push([x, 0.0]);
                weights.push(w);
            }
        } else {
            for (&y, &wy) in quad.nodes.iter().zip(&quad.weights) {
                for (&x, &wx) in quad.nodes.iter().zip(&quad.weights) {
                    points.push([x, y]);
                    weights.push(wx * wy);
                }
            }
        }
        let mut values = Vec::with_capacity(points.len());
        let mut gradients = vec![Vec::with_capacity(points.len()); dim];
        for &p in &points {
            let (v, g) = basis_at(p);
            values.push(v);
            for (i, gi) in g.into_iter().enumerate() {
                gradients[i].push(gi);
            }
        }
        let faces = (0..dim)
            .map(|i| {
                let make = |r_i: f64| {
                    let (pts, wts): (Vec<Point>, Vec<f64>) = if dim == 1 {
                        (vec![[r_i, 0.0]], vec![1.0])
                    } else {
                        quad.nodes
                            .iter()
                            .zip(&quad.weights)
                            .map(|(&s, &w)| {
                                let mut p = [s, s];
                                p[i] = r_i;
                                (p, w)
                            })
                            .unzip()
                    };
                    let vals = pts.iter().map(|&p| basis_at(p).0).collect();
                    FaceBasis {
                        points: pts,
                        weights: wts,
                        values: vals,
                    }
                };
                [make(-1.0), make(1.0)]
            })
            .collect();
        Self {
            points,
            weights,
            values,
            gradients,
            faces,
        }
    }
}

/// Global RDG space over a tensor mesh.
#[derive(Debug, Clone)]
pub struct RdgSpace {
    mesh: TensorMesh,
    pair: OrderPair,
    moment_set: IndexSet,
    coefficient_set: IndexSet,
    quad: QuadratureRule,
    tables: Vec<ReconstructionTable>,
    basis: ReferenceBasis,
}

impl RdgSpace {
    pub fn new(mesh: TensorMesh, pair: OrderPair) -> Result<Self> {
        if pair.dim != mesh.dim() {
            return Err(Error::DimensionMismatch {
                expected: mesh.dim(),
                found: pair.dim,
            });
        }
        let tables = reconstruction_tables(&mesh, pair)?;
        let quad = gauss_rule(pair.quadrature_points())?;
        let moment_set = IndexSet::new(pair.m, mesh.dim());
        let coefficient_set = IndexSet::new(pair.k, mesh.dim());
        let basis = ReferenceBasis::new(&coefficient_set, &quad);
        let space = Self {
            mesh,
            pair,
            moment_set,
            coefficient_set,
            quad,
            tables,
            basis,
        };
        // dimension law: N (m+1)^d = N (k+1)^d / 3^d
        let n = space.mesh.num_elements();
        assert_eq!(space.ndof(), n * pair.moments_per_element());
        assert_eq!(space.ndof() * pair.stencil_size(), n * pair.coefficients());
        Ok(space)
    }

    pub fn mesh(&self) -> &TensorMesh {
        &self.mesh
    }

    pub fn pair(&self) -> OrderPair {
        self.pair
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn moment_set(&self) -> &IndexSet {
        &self.moment_set
    }

    pub fn coefficient_set(&self) -> &IndexSet {
        &self.coefficient_set
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn reference_basis(&self) -> &ReferenceBasis {
        &self.basis
    }

    pub fn table(&self, element: usize) -> &ReconstructionTable {
        &self.tables[element]
    }

    pub fn dofs_per_element(&self) -> usize {
        self.moment_set.len()
    }

    pub fn num_coefficients(&self) -> usize {
        self.coefficient_set.len()
    }

    /// `N (m+1)^d`.
    pub fn ndof(&self) -> usize {
        self.mesh.num_elements() * self.dofs_per_element()
    }

    pub fn dof_index(&self, element: usize, beta: usize) -> usize {
        element * self.dofs_per_element() + beta
    }

    /// Stacked moments of the stencil members of `element`, stencil order.
    pub fn gather(&self, dofs: &[f64], element: usize) -> Vec<f64> {
        let nb = self.dofs_per_element();
        self.tables[element]
            .stencil
            .members
            .iter()
            .flat_map(|&m| dofs[m * nb..(m + 1) * nb].iter().copied())
            .collect()
    }

    pub fn local_poly(&self, dofs: &[f64], element: usize) -> LocalPoly {
        assert_eq!(dofs.len(), self.ndof());
        LocalPoly {
            element,
            coefficients: self.tables[element].apply(&self.gather(dofs, element)),
        }
    }

    /// Local coefficients of every element.
    pub fn local_polys(&self, dofs: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(dofs.len(), self.ndof());
        (0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| self.tables[e].apply(&self.gather(dofs, e)))
            .collect()
    }

    /// Adds `P_Kᵀ r` into `out`, where `P_K` maps global DoFs to the local
    /// coefficients of `element` and `r` is tested against `L_K^α`.
    pub fn scatter_local(&self, element: usize, local: &[f64], out: &mut [f64]) {
        let nb = self.dofs_per_element();
        let t = &self.tables[element];
        let contrib = t.local.inverse.matvec_transpose(local);
        for (s, &m) in t.stencil.members.iter().enumerate() {
            for b in 0..nb {
                out[m * nb + b] += contrib[s * nb + b];
            }
        }
    }

    /// `Σ_K P_Kᵀ r_K` for one local residual per element.
    pub fn scatter_locals(&self, locals: &[Vec<f64>]) -> Vec<f64> {
        let nb = self.dofs_per_element();
        let contribs: Vec<Vec<f64>> = locals
            .par_iter()
            .enumerate()
            .map(|(e, r)| self.tables[e].local.inverse.matvec_transpose(r))
            .collect();
        let mut out = vec![0.0; self.ndof()];
        for (e, c) in contribs.iter().enumerate() {
            for (s, &m) in self.tables[e].stencil.members.iter().enumerate() {
                for b in 0..nb {
                    out[m * nb + b] += c[s * nb + b];
                }
            }
        }
        out
    }

    /// Adds `P_testᵀ L P_trial` to `builder`; `L` acts on local coefficients,
    /// rows tested on `test`, columns expanded on `trial`.
    pub fn scatter_bilinear(&self, builder: &mut TripletBuilder, test: usize, trial: usize, local: &DenseMatrix) {
        let nb = self.dofs_per_element();
        let tt = &self.tables[test];
        let tr = &self.tables[trial];
        let w = tt.local.inverse.transpose().matmul(&local.matmul(&tr.local.inverse));
        for (s, &ms) in tt.stencil.members.iter().enumerate() {
            for (t, &mt) in tr.stencil.members.iter().enumerate() {
                for b in 0..nb {
                    for c in 0..nb {
                        builder.push(ms * nb + b, mt * nb + c, w[(s * nb + b, t * nb + c)]);
                    }
                }
            }
        }
    }

    /// Value of a local polynomial at reference point `r`.
    pub fn eval_local(&self, coefficients: &[f64], r: Point) -> f64 {
        let dim = self.dim();
        let k = self.pair.k;
        let tabs: Vec<Vec<f64>> = (0..dim)
            .map(|i| crate::polynomials::legendre_eval_all(k, r[i]))
            .collect();
        self.coefficient_set
            .iter()
            .zip(coefficients)
            .map(|(a, c)| c * (0..dim).map(|i| tabs[i][a.0[i]]).product::<f64>())
            .sum()
    }

    /// Physical gradient of a local polynomial at reference point `r`.
    pub fn eval_local_gradient(&self, element: &ElementId, coefficients: &[f64], r: Point) -> [f64; 2] {
        let dim = self.dim();
        let k = self.pair.k;
        let tabs: Vec<(Vec<f64>, Vec<f64>)> = (0..dim).map(|i| legendre_eval_with_derivative(k, r[i])).collect();
        let mut g = [0.0; 2];
        for (gi, gval) in g.iter_mut().enumerate().take(dim) {
            let scale = 2.0 / self.mesh.size(gi, element.index[gi]);
            let s: f64 = self
                .coefficient_set
                .iter()
                .zip(coefficients)
                .map(|(a, c)| {
                    c * (0..dim)
                        .map(|i| if i == gi { tabs[i].1[a.0[i]] } else { tabs[i].0[a.0[i]] })
                        .product::<f64>()
                })
                .sum();
            *gval = scale * s;
        }
        g
    }

    pub fn eval_solution(&self, dofs: &[f64], x: Point, side: Side) -> Result<f64> {
        let e = self.mesh.locate(x, side == Side::Lower)?;
        let c = self.local_poly(dofs, e.linear).coefficients;
        Ok(self.eval_local(&c, self.mesh.to_reference(&e, x)))
    }

    pub fn eval_gradient(&self, dofs: &[f64], x: Point, side: Side) -> Result<[f64; 2]> {
        let e = self.mesh.locate(x, side == Side::Lower)?;
        let c = self.local_poly(dofs, e.linear).coefficients;
        Ok(self.eval_local_gradient(&e, &c, self.mesh.to_reference(&e, x)))
    }

    /// Moments `I_K^β u0` of `u0` on every element: the DoFs of `R^k u0`.
    pub fn project(&self, u0: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        let nb = self.dofs_per_element();
        let per_element: Vec<Vec<f64>> = (0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let el = self.mesh.element(e).unwrap();
                let fvals: Vec<f64> = self
                    .basis
                    .points
                    .iter()
                    .map(|&r| u0(self.mesh.from_reference(&el, r)))
                    .collect();
                self.moments_from_values(&fvals)
            })
            .collect();
        let mut out = Vec::with_capacity(self.ndof());
        for v in per_element {
            debug_assert_eq!(v.len(), nb);
            out.extend(v);
        }
        out
    }

    /// Order-`m` moments from function values at the reference volume points.
    fn moments_from_values(&self, fvals: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        self.moment_set
            .iter()
            .map(|b| {
                // A^m ⊂ A^k, so L^β is a column of the tabulated basis
                let col = self.coefficient_set.position(*b).unwrap();
                let scale: f64 = (0..dim).map(|i| (2 * b.0[i] + 1) as f64 / 2.0).product();
                scale
                    * self
                        .basis
                        .weights
                        .iter()
                        .zip(&self.basis.values)
                        .zip(fvals)
                        .map(|((w, v), f)| w * v[col] * f)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Moments of the discrete solution `u_h` itself (round-trips the DoFs).
    pub fn moments_of_solution(&self, dofs: &[f64]) -> Vec<f64> {
        let polys = self.local_polys(dofs);
        polys
            .iter()
            .flat_map(|c| {
                let vals: Vec<f64> = self.basis.values.iter().map(|v| v.iter().zip(c).map(|(a, b)| a * b).sum()).collect();
                self.moments_from_values(&vals)
            })
            .collect()
    }

    /// Diagonal of the local mass matrix `∫_K L^α L^α`.
    pub fn local_mass_diagonal(&self, element: &ElementId) -> Vec<f64> {
        let vol = self.mesh.volume(element);
        self.coefficient_set
            .iter()
            .map(|a| vol * (0..self.dim()).map(|i| 1.0 / (2 * a.0[i] + 1) as f64).product::<f64>())
            .collect()
    }

    /// `(φ_{K'}^{β'}, φ_K^β)_Ω` assembled as `Σ_K P_Kᵀ D_K P_K`.
    pub fn mass_matrix(&self) -> SparseOperator {
        let n = self.ndof();
        assemble(n, n, self.mesh.num_elements(), |e, b| {
            let el = self.mesh.element(e).unwrap();
            let d = self.local_mass_diagonal(&el);
            let mut local = DenseMatrix::zeros(d.len(), d.len());
            for (i, v) in d.iter().enumerate() {
                local[(i, i)] = *v;
            }
            self.scatter_bilinear(b, e, e, &local);
        })
    }

    /// `∫_Ω u_h = Σ_K |K| I_K^0 u_h`.
    pub fn integral(&self, dofs: &[f64]) -> f64 {
        let nb = self.dofs_per_element();
        self.mesh
            .elements()
            .map(|e| self.mesh.volume(&e) * dofs[e.linear * nb])
            .sum()
    }

    /// DoFs of the constant function `c`.
    pub fn constant(&self, c: f64) -> Vec<f64> {
        let nb = self.dofs_per_element();
        let mut v = vec![0.0; self.ndof()];
        for e in 0..self.mesh.num_elements() {
            v[e * nb] = c;
        }
        v
    }

    /// Sum over elements of `∫_K g(x, local coefficients, r)` by quadrature.
    fn integrate_elements(&self, f: impl Fn(&ElementId, &[f64], usize, Point) -> f64 + Sync, polys: &[Vec<f64>]) -> f64 {
        (0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let el = self.mesh.element(e).unwrap();
                let jac = self.mesh.volume(&el) / 2f64.powi(self.dim() as i32);
                jac * self
                    .basis
                    .points
                    .iter()
                    .zip(&self.basis.weights)
                    .enumerate()
                    .map(|(q, (&r, &w))| w * f(&el, &polys[e], q, self.mesh.from_reference(&el, r)))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// `‖u_h − u‖_{L²}`.
    pub fn l2_error(&self, dofs: &[f64], exact: impl Fn(Point) -> f64 + Sync) -> f64 {
        let polys = self.local_polys(dofs);
        self.integrate_elements(
            |_, c, q, x| (self.value_at(c, q) - exact(x)).powi(2),
            &polys,
        )
        .sqrt()
    }

    /// Broken `|u_h − u|_{H¹}` against the exact gradient.
    pub fn h1_seminorm_error(&self, dofs: &[f64], gradient: impl Fn(Point) -> [f64; 2] + Sync) -> f64 {
        let polys = self.local_polys(dofs);
        self.integrate_elements(
            |el, c, q, x| {
                let g = self.gradient_at(el, c, q);
                let ge = gradient(x);
                (0..self.dim()).map(|i| (g[i] - ge[i]).powi(2)).sum()
            },
            &polys,
        )
        .sqrt()
    }

    /// `(Σ_i ‖q_i / scale − ∂_i u‖²)^{1/2}` for auxiliary variables `q_i`.
    pub fn gradient_error(&self, q: &[Vec<f64>], scale: f64, gradient: impl Fn(Point) -> [f64; 2] + Sync) -> f64 {
        let polys: Vec<Vec<Vec<f64>>> = q.iter().map(|qi| self.local_polys(qi)).collect();
        let mut total = 0.0;
        for (i, p) in polys.iter().enumerate() {
            total += self.integrate_elements(
                |_, c, q, x| (self.value_at(c, q) / scale - gradient(x)[i]).powi(2),
                p,
            );
        }
        total.sqrt()
    }

    /// Local polynomial value at volume quadrature point `q`.
    pub fn value_at(&self, c: &[f64], q: usize) -> f64 {
        self.basis.values[q].iter().zip(c).map(|(a, b)| a * b).sum()
    }

    /// Physical gradient of a local polynomial at volume quadrature point `q`.
    pub fn gradient_at(&self, element: &ElementId, c: &[f64], q: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (i, gi) in g.iter_mut().enumerate().take(self.dim()) {
            let scale = 2.0 / self.mesh.size(i, element.index[i]);
            *gi = scale * self.basis.gradients[i][q].iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        }
        g
    }

    /// Discrete `‖u_h‖_{L²}`.
    pub fn l2_norm(&self, dofs: &[f64]) -> f64 {
        self.l2_error(dofs, |_| 0.0)
    }

    /// Maximum and minimum of `u_h` over `samples` equispaced points per
    /// direction on every element (element edges included).
    pub fn sampled_extrema(&self, dofs: &[f64], samples: usize) -> (f64, f64) {
        let polys = self.local_polys(dofs);
        let pts = reference_samples(self.dim(), samples);
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for c in &polys {
            for &r in &pts {
                let v = self.eval_local(c, r);
                hi = hi.max(v);
                lo = lo.min(v);
            }
        }
        (hi, lo)
    }
}

/// Equispaced reference points including the element edges.
pub fn reference_samples(dim: usize, per_direction: usize) -> Vec<Point> {
    let n = per_direction.max(2);
    let s: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    if dim == 1 {
        s.iter().map(|&x| [x, 0.0]).collect()
    } else {
        let mut v = Vec::with_capacity(n * n);
        for &y in &s {
            for &x in &s {
                v.push([x, y]);
            }
        }
        v
    }
}
