//! Local DG discretization of `u_t + ∇·(b f(u)) − εΔu + r(x, u) = g` on an
//! RDG space.
//!
//! Diffusion is rewritten with `q = √ε ∇u` and the alternating fluxes
//! `û = u⁻`, `q̂ = q⁺`; convection uses the local Lax-Friedrichs flux. All
//! operators act on DoF vectors and are tested against the RDG basis:
//!
//! ```text
//! M q_i   = B_i u + l_i(t)
//! M u_t   = Σ_i A_i q_i + R(u, t)
//! ```
//!
//! where `l_i` carries Dirichlet data and `R` collects convection, reaction
//! and source.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{assemble, DenseMatrix, LinearSolver, SolveMethod, SparseOperator, TripletBuilder};
use crate::mesh::Point;
use crate::rdg::RdgSpace;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(x, s) ↦ value`, with `s` a time or a solution value depending on use.
pub type FieldFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Boundary treatment of one direction.
#[derive(Clone)]
pub enum Boundary {
    Periodic,
    /// Dirichlet data `u_D(x, t)` on both ends.
    Dirichlet(FieldFn),
}

impl fmt::Debug for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "Periodic"),
            Boundary::Dirichlet(_) => write!(f, "Dirichlet"),
        }
    }
}

/// Coefficients of `u_t + ∇·(b(x) f(u)) − εΔu + r(x, u) = g(x, t)`.
#[derive(Clone)]
pub struct PdeProblem {
    pub dim: usize,
    pub epsilon: f64,
    pub velocity: VectorField,
    pub flux: ScalarFn,
    pub flux_derivative: ScalarFn,
    /// `r(x, u)`
    pub reaction: Option<FieldFn>,
    /// `g(x, t)`
    pub source: Option<FieldFn>,
    pub boundary: Vec<Boundary>,
}

impl fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeProblem")
            .field("dim", &self.dim)
            .field("epsilon", &self.epsilon)
            .field("reaction", &self.reaction.is_some())
            .field("source", &self.source.is_some())
            .field("boundary", &self.boundary)
            .finish()
    }
}

impl PdeProblem {
    /// The zero problem: no diffusion, zero velocity, `f(u) = u`, periodic.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            epsilon: 0.0,
            velocity: Arc::new(|_| [0.0; 2]),
            flux: Arc::new(|u| u),
            flux_derivative: Arc::new(|_| 1.0),
            reaction: None,
            source: None,
            boundary: vec![Boundary::Periodic; dim],
        }
    }

    pub fn with_diffusion(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_velocity(mut self, b: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.velocity = Arc::new(b);
        self
    }

    /// Constant velocity.
    pub fn with_constant_velocity(self, b: [f64; 2]) -> Self {
        self.with_velocity(move |_| b)
    }

    /// `f(u) = u²/2`.
    pub fn with_burgers_flux(mut self) -> Self {
        self.flux = Arc::new(|u| 0.5 * u * u);
        self.flux_derivative = Arc::new(|u| u);
        self
    }

    pub fn with_reaction(mut self, r: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.reaction = Some(Arc::new(r));
        self
    }

    pub fn with_source(mut self, g: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Some(Arc::new(g));
        self
    }

    /// Dirichlet data on every direction.
    pub fn with_dirichlet(mut self, data: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        let data: FieldFn = Arc::new(data);
        self.boundary = vec![Boundary::Dirichlet(data); self.dim];
        self
    }
}

/// `½(b_n f(u⁻) + b_n f(u⁺) − α (u⁺ − u⁻))` with
/// `α = max(|f′(u⁻)|, |f′(u⁺)|) · b_max`, where `b_n` is the normal velocity
/// at the point and `b_max` its maximum over the face.
pub fn lax_friedrichs_flux(
    u_minus: f64,
    u_plus: f64,
    b_n: f64,
    b_max: f64,
    f: &dyn Fn(f64) -> f64,
    df: &dyn Fn(f64) -> f64,
) -> f64 {
    let alpha = df(u_minus).abs().max(df(u_plus).abs()) * b_max;
    0.5 * (b_n * (f(u_minus) + f(u_plus)) - alpha * (u_plus - u_minus))
}

#[derive(Debug, Clone)]
struct FaceGeometry {
    /// Measure factor of the reference face rule (`h_j / 2` in 2D, 1 in 1D).
    scale: f64,
    points: Vec<Point>,
    normal_velocity: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ElementGeometry {
    jacobian: f64,
    /// `2 / h_i`
    inv_half: [f64; 2],
    points: Vec<Point>,
    velocity: Vec<[f64; 2]>,
    /// `faces[i][side]`, side 0 is the lower face.
    faces: Vec<[FaceGeometry; 2]>,
}

/// The assembled semi-discrete system.
pub struct SemiDiscreteSystem {
    space: RdgSpace,
    problem: PdeProblem,
    geometry: Vec<ElementGeometry>,
    mass: SparseOperator,
    a: Vec<SparseOperator>,
    b: Vec<SparseOperator>,
    method: SolveMethod,
    tol: f64,
    mass_solver: OnceLock<LinearSolver>,
}

impl fmt::Debug for SemiDiscreteSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemiDiscreteSystem")
            .field("ndof", &self.space.ndof())
            .field("problem", &self.problem)
            .finish()
    }
}

impl SemiDiscreteSystem {
    pub fn new(space: RdgSpace, problem: PdeProblem) -> Result<Self> {
        let dim = space.dim();
        if problem.dim != dim || problem.boundary.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: problem.dim,
            });
        }
        if !(problem.epsilon >= 0.0) {
            return Err(Error::Parse(format!("diffusion coefficient must be >= 0, got {}", problem.epsilon)));
        }
        for (i, bc) in problem.boundary.iter().enumerate() {
            let periodic = matches!(bc, Boundary::Periodic);
            if periodic != space.mesh().is_periodic(i) {
                return Err(Error::Parse(format!(
                    "boundary condition in direction {i} does not match mesh periodicity"
                )));
            }
        }
        let geometry = build_geometry(&space, &problem);
        let mass = space.mass_matrix();
        let mut system = Self {
            space,
            problem,
            geometry,
            mass,
            a: Vec::new(),
            b: Vec::new(),
            method: SolveMethod::Auto,
            tol: 1e-10,
            mass_solver: OnceLock::new(),
        };
        if system.problem.epsilon > 0.0 {
            let (a, b) = system.assemble_diffusion();
            system.a = a;
            system.b = b;
        }
        Ok(system)
    }

    /// Linear solver used for mass and stage systems.
    pub fn with_linear_solver(mut self, method: SolveMethod, tol: f64) -> Self {
        self.method = method;
        self.tol = tol;
        self.mass_solver = OnceLock::new();
        self
    }

    pub fn into_space(self) -> RdgSpace {
        self.space
    }

    pub fn space(&self) -> &RdgSpace {
        &self.space
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    /// `A_i`, empty when `ε = 0`.
    pub fn a(&self) -> &[SparseOperator] {
        &self.a
    }

    /// `B_i`, empty when `ε = 0`.
    pub fn b(&self) -> &[SparseOperator] {
        &self.b
    }

    /// Number of auxiliary fields `q_i` (0 without diffusion).
    pub fn num_aux(&self) -> usize {
        self.b.len()
    }

    pub fn ndof(&self) -> usize {
        self.space.ndof()
    }

    fn sqrt_eps(&self) -> f64 {
        self.problem.epsilon.sqrt()
    }

    /// `∫ ∂_i L^α L^β` and face products `∫ L^α|_{s} L^β|_{s'}` on the
    /// reference element.
    fn reference_derivative(&self, i: usize) -> DenseMatrix {
        let basis = self.space.reference_basis();
        let nc = self.space.num_coefficients();
        let mut d = DenseMatrix::zeros(nc, nc);
        for (q, w) in basis.weights.iter().enumerate() {
            for a in 0..nc {
                let ga = w * basis.gradients[i][q][a];
                if ga != 0.0 {
                    for b in 0..nc {
                        d[(a, b)] += ga * basis.values[q][b];
                    }
                }
            }
        }
        d
    }

    fn reference_face_product(&self, i: usize, test_side: usize, trial_side: usize) -> DenseMatrix {
        let basis = self.space.reference_basis();
        let nc = self.space.num_coefficients();
        let ft = &basis.faces[i][test_side];
        let fr = &basis.faces[i][trial_side];
        let mut m = DenseMatrix::zeros(nc, nc);
        for (p, w) in ft.weights.iter().enumerate() {
            for a in 0..nc {
                for b in 0..nc {
                    m[(a, b)] += w * ft.values[p][a] * fr.values[p][b];
                }
            }
        }
        m
    }

    /// `(A_i, B_i)` for every direction.
    fn assemble_diffusion(&self) -> (Vec<SparseOperator>, Vec<SparseOperator>) {
        let n = self.ndof();
        let mesh = self.space.mesh();
        let se = self.sqrt_eps();
        let scale = |m: &DenseMatrix, s: f64| -> DenseMatrix {
            let mut out = m.clone();
            for r in 0..out.rows() {
                for c in 0..out.cols() {
                    out[(r, c)] *= s;
                }
            }
            out
        };
        let mut a_ops = Vec::new();
        let mut b_ops = Vec::new();
        for i in 0..self.space.dim() {
            let d = self.reference_derivative(i);
            let f = [
                [self.reference_face_product(i, 0, 0), self.reference_face_product(i, 0, 1)],
                [self.reference_face_product(i, 1, 0), self.reference_face_product(i, 1, 1)],
            ];
            let volume = |e: usize| -> DenseMatrix {
                let g = &self.geometry[e];
                scale(&d, -se * g.jacobian * g.inv_half[i])
            };
            // û = u⁻: the lower element's trace, tested from both sides.
            let b_op = assemble(n, n, mesh.num_elements(), |e, bld: &mut TripletBuilder| {
                let el = mesh.element(e).unwrap();
                let fs = self.geometry[e].faces[i][1].scale;
                self.space.scatter_bilinear(bld, e, e, &volume(e));
                if let Some(r) = mesh.neighbor(&el, i, true) {
                    self.space.scatter_bilinear(bld, e, e, &scale(&f[1][1], se * fs));
                    self.space.scatter_bilinear(bld, r.linear, e, &scale(&f[0][1], -se * fs));
                }
            });
            // q̂ = q⁺ inside, interior trace on the boundary.
            let a_op = assemble(n, n, mesh.num_elements(), |e, bld: &mut TripletBuilder| {
                let el = mesh.element(e).unwrap();
                let fs = self.geometry[e].faces[i][1].scale;
                self.space.scatter_bilinear(bld, e, e, &volume(e));
                match mesh.neighbor(&el, i, true) {
                    Some(r) => {
                        self.space.scatter_bilinear(bld, e, r.linear, &scale(&f[1][0], se * fs));
                        self.space.scatter_bilinear(bld, r.linear, r.linear, &scale(&f[0][0], -se * fs));
                    }
                    None => self.space.scatter_bilinear(bld, e, e, &scale(&f[1][1], se * fs)),
                }
                if mesh.neighbor(&el, i, false).is_none() {
                    self.space.scatter_bilinear(bld, e, e, &scale(&f[0][0], -se * fs));
                }
            });
            a_ops.push(a_op);
            b_ops.push(b_op);
        }
        (a_ops, b_ops)
    }

    /// Dirichlet lift `l_i(t)` of the auxiliary equations (zero vectors for
    /// periodic directions).
    pub fn diffusion_lift(&self, t: f64) -> Vec<Vec<f64>> {
        let n = self.ndof();
        let mesh = self.space.mesh();
        let basis = self.space.reference_basis();
        let nc = self.space.num_coefficients();
        let se = self.sqrt_eps();
        (0..self.num_aux())
            .map(|i| {
                let data = match &self.problem.boundary[i] {
                    Boundary::Periodic => return vec![0.0; n],
                    Boundary::Dirichlet(g) => g,
                };
                let locals: Vec<(usize, Vec<f64>)> = mesh
                    .elements()
                    .filter_map(|el| {
                        let mut r = vec![0.0; nc];
                        let mut hit = false;
                        for (side, sign) in [(0usize, -1.0), (1, 1.0)] {
                            if mesh.neighbor(&el, i, side == 1).is_some() {
                                continue;
                            }
                            hit = true;
                            let fg = &self.geometry[el.linear].faces[i][side];
                            let fb = &basis.faces[i][side];
                            for (p, &x) in fg.points.iter().enumerate() {
                                let c = sign * se * fg.scale * fb.weights[p] * data(x, t);
                                for (ra, va) in r.iter_mut().zip(&fb.values[p]) {
                                    *ra += c * va;
                                }
                            }
                        }
                        hit.then_some((el.linear, r))
                    })
                    .collect();
                let mut out = vec![0.0; n];
                for (e, r) in locals {
                    self.space.scatter_local(e, &r, &mut out);
                }
                out
            })
            .collect()
    }

    /// Values of the local polynomial of element `e` on its face `(i, side)`.
    fn trace(&self, poly: &[f64], i: usize, side: usize) -> Vec<f64> {
        self.space.reference_basis().faces[i][side]
            .values
            .iter()
            .map(|v| v.iter().zip(poly).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Normal convective flux `b·e_i f̂` at the points of face `(i, side)` of
    /// element `e`. Both elements sharing a face evaluate it identically.
    fn face_flux(&self, e: usize, i: usize, side: usize, polys: &[Vec<f64>], t: f64) -> Vec<f64> {
        let mesh = self.space.mesh();
        let el = mesh.element(e).unwrap();
        let (lower, upper) = if side == 0 {
            (mesh.neighbor(&el, i, false).map(|l| l.linear), Some(e))
        } else {
            (Some(e), mesh.neighbor(&el, i, true).map(|u| u.linear))
        };
        let geom = match lower {
            Some(l) => &self.geometry[l].faces[i][1],
            None => &self.geometry[e].faces[i][0],
        };
        let f = &*self.problem.flux;
        let df = &*self.problem.flux_derivative;
        let b_max = geom.normal_velocity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ul = lower.map(|l| self.trace(&polys[l], i, 1));
        let ur = upper.map(|u| self.trace(&polys[u], i, 0));
        let data = |p: usize| -> f64 {
            match &self.problem.boundary[i] {
                Boundary::Dirichlet(g) => g(geom.points[p], t),
                Boundary::Periodic => unreachable!("periodic directions have no boundary faces"),
            }
        };
        (0..geom.points.len())
            .map(|p| {
                let bn = geom.normal_velocity[p];
                match (&ul, &ur) {
                    (Some(l), Some(r)) => lax_friedrichs_flux(l[p], r[p], bn, b_max, f, df),
                    // lower boundary: inflow when b_n > 0
                    (None, Some(r)) if bn > 0.0 => lax_friedrichs_flux(data(p), r[p], bn, b_max, f, df),
                    (None, Some(r)) => bn * f(r[p]),
                    // upper boundary: inflow when b_n < 0
                    (Some(l), None) if bn < 0.0 => lax_friedrichs_flux(l[p], data(p), bn, b_max, f, df),
                    (Some(l), None) => bn * f(l[p]),
                    (None, None) => unreachable!(),
                }
            })
            .collect()
    }

    /// `R(u, t)`: convection, reaction and source tested against every basis
    /// function.
    pub fn convection_reaction_source_residual(&self, dofs: &[f64], t: f64) -> Vec<f64> {
        let polys = self.space.local_polys(dofs);
        let basis = self.space.reference_basis();
        let nc = self.space.num_coefficients();
        let dim = self.space.dim();
        let locals: Vec<Vec<f64>> = (0..self.space.mesh().num_elements())
            .into_par_iter()
            .map(|e| {
                let g = &self.geometry[e];
                let c = &polys[e];
                let mut r = vec![0.0; nc];
                for q in 0..basis.points.len() {
                    let u: f64 = basis.values[q].iter().zip(c).map(|(a, b)| a * b).sum();
                    let x = g.points[q];
                    let w = g.jacobian * basis.weights[q];
                    let fu = (self.problem.flux)(u);
                    for i in 0..dim {
                        let coef = w * fu * g.velocity[q][i] * g.inv_half[i];
                        if coef != 0.0 {
                            for (ra, ga) in r.iter_mut().zip(&basis.gradients[i][q]) {
                                *ra += coef * ga;
                            }
                        }
                    }
                    let mut s = 0.0;
                    if let Some(src) = &self.problem.source {
                        s += src(x, t);
                    }
                    if let Some(re) = &self.problem.reaction {
                        s -= re(x, u);
                    }
                    if s != 0.0 {
                        for (ra, va) in r.iter_mut().zip(&basis.values[q]) {
                            *ra += w * s * va;
                        }
                    }
                }
                for i in 0..dim {
                    for side in 0..2 {
                        let h = self.face_flux(e, i, side, &polys, t);
                        let fb = &basis.faces[i][side];
                        // outward normal is −e_i on the lower face
                        let sign = if side == 0 { 1.0 } else { -1.0 };
                        let fs = g.faces[i][side].scale;
                        for (p, hp) in h.iter().enumerate() {
                            let coef = sign * fs * fb.weights[p] * hp;
                            for (ra, va) in r.iter_mut().zip(&fb.values[p]) {
                                *ra += coef * va;
                            }
                        }
                    }
                }
                r
            })
            .collect();
        self.space.scatter_locals(&locals)
    }

    fn dof_ordering(&self, stride: usize) -> Vec<usize> {
        let nb = self.space.dofs_per_element();
        let elements = self.space.mesh().banded_ordering();
        let mut perm = vec![0; self.ndof() * stride];
        for (e, &pe) in elements.iter().enumerate() {
            for f in 0..stride {
                for b in 0..nb {
                    perm[(e * stride + f) * nb + b] = (pe * stride + f) * nb + b;
                }
            }
        }
        perm
    }

    fn mass_solver(&self) -> Result<&LinearSolver> {
        if let Some(s) = self.mass_solver.get() {
            return Ok(s);
        }
        let s = LinearSolver::with_ordering(&self.mass, self.dof_ordering(1), self.method, self.tol)?;
        Ok(self.mass_solver.get_or_init(|| s))
    }

    /// `M⁻¹ r`.
    pub fn mass_solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.mass_solver()?.solve(r)
    }

    /// `q_i = M⁻¹ (B_i u + l_i(t))`, in units of `√ε ∂_i u`.
    pub fn auxiliary(&self, dofs: &[f64], t: f64) -> Result<Vec<Vec<f64>>> {
        let lift = self.diffusion_lift(t);
        self.b
            .iter()
            .zip(lift)
            .map(|(b, mut l)| {
                b.matvec_add(1.0, dofs, &mut l);
                self.mass_solve(&l)
            })
            .collect()
    }

    /// `(u_t, q)` with `u_t = M⁻¹ (Σ A_i q_i + R(u, t))`.
    pub fn semidiscrete_rhs(&self, dofs: &[f64], t: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let q = self.auxiliary(dofs, t)?;
        let mut r = self.convection_reaction_source_residual(dofs, t);
        for (a, qi) in self.a.iter().zip(&q) {
            a.matvec_add(1.0, qi, &mut r);
        }
        Ok((self.mass_solve(&r)?, q))
    }

    /// Stage matrix `[M, −c A_1 … −c A_d; −B_i, M]` over the unknowns
    /// `(u, q_1, …, q_d)`, interleaved per element.
    pub fn stage_matrix(&self, coeff: f64) -> SparseOperator {
        let s = 1 + self.num_aux();
        let nb = self.space.dofs_per_element();
        let idx = |g: usize, f: usize| ((g / nb) * s + f) * nb + g % nb;
        let n = self.ndof() * s;
        let mut b = TripletBuilder::new(n, n);
        for (i, j, v) in self.mass.triplets() {
            for f in 0..s {
                b.push(idx(i, f), idx(j, f), v);
            }
        }
        for (f, (a, bo)) in self.a.iter().zip(&self.b).enumerate() {
            for (i, j, v) in a.triplets() {
                b.push(idx(i, 0), idx(j, f + 1), -coeff * v);
            }
            for (i, j, v) in bo.triplets() {
                b.push(idx(i, f + 1), idx(j, 0), -v);
            }
        }
        b.build()
    }

    /// Factorization of [`stage_matrix`](Self::stage_matrix).
    pub fn stage_solver(&self, coeff: f64) -> Result<StageSolver> {
        let stride = 1 + self.num_aux();
        let matrix = self.stage_matrix(coeff);
        let solver = LinearSolver::with_ordering(&matrix, self.dof_ordering(stride), self.method, self.tol)?;
        Ok(StageSolver { coeff, solver })
    }

    /// Solves `M u − c Σ A_i q_i = rhs`, `M q_i − B_i u = l_i(t)`. Returns
    /// `u` and `Σ A_i q_i`.
    pub fn solve_stage(&self, stage: &StageSolver, rhs: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = 1 + self.num_aux();
        let nb = self.space.dofs_per_element();
        let n = self.ndof();
        let lift = self.diffusion_lift(t);
        let mut full = vec![0.0; n * s];
        for g in 0..n {
            let base = (g / nb) * s * nb + g % nb;
            full[base] = rhs[g];
            for (f, l) in lift.iter().enumerate() {
                full[base + (f + 1) * nb] = l[g];
            }
        }
        let x = stage.solver.solve(&full)?;
        let mut u = vec![0.0; n];
        let mut q = vec![vec![0.0; n]; self.num_aux()];
        for g in 0..n {
            let base = (g / nb) * s * nb + g % nb;
            u[g] = x[base];
            for (f, qf) in q.iter_mut().enumerate() {
                qf[g] = x[base + (f + 1) * nb];
            }
        }
        let mut aq = vec![0.0; n];
        for (a, qi) in self.a.iter().zip(&q) {
            a.matvec_add(1.0, qi, &mut aq);
        }
        Ok((u, aq))
    }
}

/// A factored stage matrix for one value of `Δt a_ii`.
#[derive(Debug, Clone)]
pub struct StageSolver {
    pub coeff: f64,
    solver: LinearSolver,
}

fn build_geometry(space: &RdgSpace, problem: &PdeProblem) -> Vec<ElementGeometry> {
    let mesh = space.mesh();
    let basis = space.reference_basis();
    let dim = space.dim();
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let el = mesh.element(e).unwrap();
            let points: Vec<Point> = basis.points.iter().map(|&r| mesh.from_reference(&el, r)).collect();
            let velocity = points.iter().map(|&x| (problem.velocity)(x)).collect();
            let mut inv_half = [0.0; 2];
            for (i, v) in inv_half.iter_mut().enumerate().take(dim) {
                *v = 2.0 / mesh.size(i, el.index[i]);
            }
            let faces = (0..dim)
                .map(|i| {
                    let scale = if dim == 1 {
                        1.0
                    } else {
                        let j = 1 - i;
                        0.5 * mesh.size(j, el.index[j])
                    };
                    let make = |side: usize| {
                        let pts: Vec<Point> = basis.faces[i][side]
                            .points
                            .iter()
                            .map(|&r| mesh.from_reference(&el, r))
                            .collect();
                        let bn = pts.iter().map(|&x| (problem.velocity)(x)[i]).collect();
                        FaceGeometry {
                            scale,
                            points: pts,
                            normal_velocity: bn,
                        }
                    };
                    [make(0), make(1)]
                })
                .collect();
            ElementGeometry {
                jacobian: mesh.volume(&el) / 2f64.powi(dim as i32),
                inv_half,
                points,
                velocity,
                faces,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TensorMesh;
    use crate::reconstruction::OrderPair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn space(lo: &[f64], hi: &[f64], cells: &[usize], periodic: bool, k: usize) -> RdgSpace {
        let d = cells.len();
        let mesh = TensorMesh::uniform(lo, hi, cells, &vec![periodic; d]).unwrap();
        RdgSpace::new(mesh, OrderPair::new(k, d).unwrap()).unwrap()
    }

    #[test]
    fn flux_examples() {
        let id = |u: f64| u;
        let one = |_: f64| 1.0;
        let burgers = |u: f64| 0.5 * u * u;
        let dburgers = |u: f64| u;
        assert_eq!(lax_friedrichs_flux(0.7, 0.7, 1.0, 1.0, &burgers, &dburgers), burgers(0.7));
        assert!((lax_friedrichs_flux(0.3, -2.0, 1.0, 1.0, &id, &one) - 0.3).abs() < 1e-15);
        let v = lax_friedrichs_flux(1.0, -0.1, 1.0, 1.0, &burgers, &dburgers);
        assert!((v - 0.8025).abs() < 1e-15);
        // monotone: nondecreasing in u⁻, nonincreasing in u⁺
        let grid: Vec<f64> = (0..21).map(|i| -2.0 + 0.2 * i as f64).collect();
        for &a in &grid {
            for w in grid.windows(2) {
                let fl = |x, y| lax_friedrichs_flux(x, y, 0.8, 0.8, &burgers, &dburgers);
                assert!(fl(w[1], a) >= fl(w[0], a) - 1e-14);
                assert!(fl(a, w[1]) <= fl(a, w[0]) + 1e-14);
            }
        }
    }

    #[test]
    fn constant_state_has_zero_residual() {
        let s = space(&[0.0, 0.0], &[1.0, 2.0], &[5, 4], true, 2);
        let p = PdeProblem::new(2).with_constant_velocity([1.0, -0.5]);
        let sys = SemiDiscreteSystem::new(s, p).unwrap();
        let r = sys.convection_reaction_source_residual(&sys.space().constant(1.7), 0.0);
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn reaction_of_unity_is_minus_mass_row_sums() {
        let s = space(&[0.0], &[1.0], &[7], false, 5);
        let p = PdeProblem::new(1).with_reaction(|_, u| u).with_dirichlet(|_, _| 0.0);
        let sys = SemiDiscreteSystem::new(s, p).unwrap();
        let one = sys.space().constant(1.0);
        let r = sys.convection_reaction_source_residual(&one, 0.0);
        let m1 = sys.mass().matvec(&one);
        for (a, b) in r.iter().zip(&m1) {
            assert!((a + b).abs() < 1e-13);
        }
    }

    #[test]
    fn diffusion_operators_are_adjoint() {
        for (periodic, k) in [(true, 2), (false, 2), (true, 5), (false, 5)] {
            for d in [1, 2] {
                let (lo, hi, cells) = if d == 1 {
                    (vec![0.0], vec![1.0], vec![6])
                } else {
                    (vec![0.0, 0.0], vec![1.0, 1.5], vec![4, 5])
                };
                let s = space(&lo, &hi, &cells, periodic, k);
                let mut p = PdeProblem::new(d).with_diffusion(0.3);
                if !periodic {
                    p = p.with_dirichlet(|x, t| x[0] + t);
                }
                let sys = SemiDiscreteSystem::new(s, p).unwrap();
                for (a, b) in sys.a().iter().zip(sys.b()) {
                    let bt = b.transpose();
                    let scale = a.triplets().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
                    for (i, j, v) in a.triplets() {
                        assert!((v + bt.get(i, j)).abs() < 1e-12 * scale, "d={d} k={k} periodic={periodic}");
                    }
                    for (i, j, v) in bt.triplets() {
                        assert!((v + a.get(i, j)).abs() < 1e-12 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let s = space(&[0.0, 0.0], &[1.0, 1.0], &[4, 4], true, 5);
        let sys = SemiDiscreteSystem::new(s, PdeProblem::new(2).with_diffusion(1.0)).unwrap();
        let q = sys.auxiliary(&sys.space().constant(3.0), 0.0).unwrap();
        assert!(q.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn auxiliary_approximates_scaled_derivative() {
        let eps: f64 = 0.25;
        let err = |n: usize| {
            let s = space(&[0.0], &[2.0 * PI], &[n], true, 2);
            let sys = SemiDiscreteSystem::new(s, PdeProblem::new(1).with_diffusion(eps)).unwrap();
            let u = sys.space().project(|x| x[0].sin());
            let q = sys.auxiliary(&u, 0.0).unwrap();
            sys.space().gradient_error(&q, eps.sqrt(), |x| [x[0].cos(), 0.0])
        };
        let (e1, e2) = (err(16), err(32));
        let rate = (e1 / e2).log2();
        assert!(rate > 2.8, "rate {rate}");
    }

    #[test]
    fn dirichlet_zero_state_is_fixed_point() {
        let s = space(&[0.0, 0.0], &[1.0, 1.0], &[4, 5], false, 2);
        let p = PdeProblem::new(2)
            .with_diffusion(0.1)
            .with_burgers_flux()
            .with_velocity(|x| [-x[1], x[0]])
            .with_dirichlet(|_, _| 0.0);
        let sys = SemiDiscreteSystem::new(s, p).unwrap();
        let (du, q) = sys.semidiscrete_rhs(&vec![0.0; sys.ndof()], 0.3).unwrap();
        assert!(du.iter().chain(q.iter().flatten()).all(|v| *v == 0.0));
    }

    #[test]
    fn periodic_convection_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [2, 5] {
            let s = space(&[0.0, 0.0], &[1.0, 1.0], &[5, 6], true, k);
            let p = PdeProblem::new(2)
                .with_burgers_flux()
                .with_velocity(|x| [1.0 + 0.5 * (2.0 * PI * x[1]).sin(), 0.3]);
            let sys = SemiDiscreteSystem::new(s, p).unwrap();
            let u: Vec<f64> = (0..sys.ndof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = sys.convection_reaction_source_residual(&u, 0.0);
            let one = sys.space().constant(1.0);
            let scale = r.iter().map(|v| v.abs()).sum::<f64>();
            assert!(dot(&one, &r).abs() < 1e-13 * scale.max(1.0));
        }
    }

    #[test]
    fn pure_diffusion_dissipates_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for periodic in [true, false] {
            let s = space(&[0.0, 0.0], &[1.0, 1.0], &[4, 5], periodic, 5);
            let mut p = PdeProblem::new(2).with_diffusion(0.5);
            if !periodic {
                p = p.with_dirichlet(|_, _| 0.0);
            }
            let sys = SemiDiscreteSystem::new(s, p).unwrap();
            for _ in 0..5 {
                let u: Vec<f64> = (0..sys.ndof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (du, _) = sys.semidiscrete_rhs(&u, 0.0).unwrap();
                let rate = dot(&u, &sys.mass().matvec(&du));
                assert!(rate <= 1e-12, "d/dt |u|^2 = {rate}");
            }
        }
    }

    #[test]
    fn heat_operator_consistency() {
        // u = sin(x), ε = 1: u_t = −sin(x)
        let err = |n: usize| {
            let s = space(&[0.0], &[2.0 * PI], &[n], true, 2);
            let sys = SemiDiscreteSystem::new(s, PdeProblem::new(1).with_diffusion(1.0)).unwrap();
            let u = sys.space().project(|x| x[0].sin());
            let (du, _) = sys.semidiscrete_rhs(&u, 0.0).unwrap();
            sys.space().l2_error(&du, |x| -x[0].sin())
        };
        let (e1, e2) = (err(32), err(64));
        assert!((e1 / e2).log2() > 2.8, "{e1} {e2}");
    }

    #[test]
    fn stage_solve_satisfies_both_equations() {
        let s = space(&[0.0, 0.0], &[1.0, 1.0], &[5, 4], false, 2);
        let p = PdeProblem::new(2).with_diffusion(0.2).with_dirichlet(|x, t| x[0] * x[1] + t);
        let sys = SemiDiscreteSystem::new(s, p).unwrap();
        let rhs: Vec<f64> = (0..sys.ndof()).map(|i| (i as f64 * 0.37).sin()).collect();
        let stage = sys.stage_solver(0.05).unwrap();
        let (u, aq) = sys.solve_stage(&stage, &rhs, 0.4).unwrap();
        let q = sys.auxiliary(&u, 0.4).unwrap();
        let mut check = sys.mass().matvec(&u);
        for (a, qi) in sys.a().iter().zip(&q) {
            a.matvec_add(-0.05, qi, &mut check);
        }
        for (c, r) in check.iter().zip(&rhs) {
            assert!((c - r).abs() < 1e-10);
        }
        let mut aq2 = vec![0.0; sys.ndof()];
        for (a, qi) in sys.a().iter().zip(&q) {
            a.matvec_add(1.0, qi, &mut aq2);
        }
        for (x, y) in aq.iter().zip(&aq2) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
