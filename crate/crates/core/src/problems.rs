//! The nine benchmark problems: four in 1D, five in 2D.
//!
//! Cases with a closed-form solution carry it together with its gradient and
//! a manufactured source; [`TestCase::self_check`] substitutes the exact
//! solution into the PDE with finite differences and verifies that the
//! source balances it.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ldg::{Boundary, FieldFn, PdeProblem};
use crate::mesh::{Point, TensorMesh};

pub type InitialFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub struct TestCase {
    pub name: &'static str,
    pub problem: PdeProblem,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub initial: InitialFn,
    /// `u(x, t)`
    pub exact: Option<FieldFn>,
    /// `∇u(x, t)`
    pub gradient: Option<GradientFn>,
    pub t_final: f64,
    /// `Δt = cfl · ĥ`
    pub cfl: f64,
    /// Cells per direction for a default run.
    pub default_cells: usize,
    /// Finite-difference step of the manufactured-residual check, sized to
    /// the narrowest feature of the exact solution.
    pub fd_step: f64,
}

impl fmt::Debug for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestCase")
            .field("name", &self.name)
            .field("problem", &self.problem)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("exact", &self.exact.is_some())
            .field("t_final", &self.t_final)
            .field("cfl", &self.cfl)
            .finish()
    }
}

/// Names accepted by [`by_name`], in catalog order.
pub const NAMES: [&str; 9] = [
    "1d-test1", "1d-test2", "1d-test3", "1d-test4", "2d-test1", "2d-test2", "2d-test3", "2d-test4", "2d-test5",
];

impl TestCase {
    pub fn dim(&self) -> usize {
        self.problem.dim
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.problem.boundary[0], Boundary::Periodic)
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Uniform mesh with `cells` elements per direction.
    pub fn mesh(&self, cells: usize) -> Result<TensorMesh> {
        let d = self.dim();
        TensorMesh::uniform(&self.lo, &self.hi, &vec![cells; d], &vec![self.is_periodic(); d])
    }

    /// `u_t + ∇·(b f(u)) − εΔu + r(x, u) − g` at `(x, t)` by sixth-order
    /// central differences of the exact solution, together with the sum of
    /// the magnitudes of the individual terms.
    pub fn manufactured_residual(&self, x: Point, t: f64) -> Option<(f64, f64)> {
        let u = self.exact.as_ref()?;
        let p = &self.problem;
        let h = self.fd_step;
        let w1 = [-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0];
        let w2 = [2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0];
        let shifted = |i: usize, s: f64| {
            let mut y = x;
            y[i] += s;
            y
        };
        let ut: f64 = (0..7).map(|j| w1[j] * u(x, t + (j as f64 - 3.0) * h)).sum::<f64>() / (60.0 * h);
        let mut conv = 0.0;
        let mut lap = 0.0;
        for i in 0..p.dim {
            conv += (0..7)
                .map(|j| {
                    let y = shifted(i, (j as f64 - 3.0) * h);
                    w1[j] * (p.velocity)(y)[i] * (p.flux)(u(y, t))
                })
                .sum::<f64>()
                / (60.0 * h);
            lap += (0..7)
                .map(|j| w2[j] * u(shifted(i, (j as f64 - 3.0) * h), t))
                .sum::<f64>()
                / (180.0 * h * h);
        }
        let uv = u(x, t);
        let r = p.reaction.as_ref().map_or(0.0, |r| r(x, uv));
        let g = p.source.as_ref().map_or(0.0, |g| g(x, t));
        let diff = p.epsilon * lap;
        let residual = ut + conv - diff + r - g;
        Some((residual, ut.abs() + conv.abs() + diff.abs() + r.abs() + g.abs()))
    }

    /// Largest relative manufactured residual over `samples` space-time
    /// points of `Ω × [0, t_final]`; errors when it exceeds `tol`.
    pub fn self_check(&self, samples: usize, tol: f64) -> Result<f64> {
        if self.exact.is_none() {
            return Ok(0.0);
        }
        // additive recurrence with irrational increments
        let alphas = [0.754_877_666_246_692_7, 0.569_840_290_998_053_3, 0.438_579_630_590_083_4];
        let mut worst = 0.0f64;
        for s in 0..samples {
            let frac = |a: f64| ((s as f64 + 0.5) * a).fract();
            let mut x = [0.0; 2];
            for (i, xi) in x.iter_mut().enumerate().take(self.dim()) {
                *xi = self.lo[i] + frac(alphas[i]) * (self.hi[i] - self.lo[i]);
            }
            let t = frac(alphas[2]) * self.t_final;
            let (r, scale) = self.manufactured_residual(x, t).unwrap();
            let rel = r.abs() / scale.max(1.0);
            worst = worst.max(rel);
        }
        if worst > tol {
            return Err(Error::Parse(format!(
                "{}: manufactured residual {worst:.3e} exceeds {tol:.1e}",
                self.name
            )));
        }
        Ok(worst)
    }
}

/// Look up a case by name (case-insensitive, `_` and `-` interchangeable).
pub fn by_name(name: &str) -> Result<TestCase> {
    let key = name.to_ascii_lowercase().replace('_', "-");
    let case = match key.as_str() {
        "1d-test1" => one_d_test1(),
        "1d-test2" => one_d_test2(),
        "1d-test3" => one_d_test3(),
        "1d-test4" => one_d_test4(),
        "2d-test1" => two_d_test1(),
        "2d-test2" => two_d_test2(),
        "2d-test3" => two_d_test3(),
        "2d-test4" => two_d_test4(),
        "2d-test5" => two_d_test5(),
        _ => return Err(Error::UnknownProblem(name.to_string())),
    };
    Ok(case)
}

/// All nine cases.
pub fn catalog() -> Vec<TestCase> {
    NAMES.iter().map(|n| by_name(n).unwrap()).collect()
}

fn one_d(name: &'static str, problem: PdeProblem, lo: f64, hi: f64) -> TestCase {
    TestCase {
        name,
        problem,
        lo: vec![lo],
        hi: vec![hi],
        initial: Arc::new(|_| 0.0),
        exact: None,
        gradient: None,
        t_final: 1.0,
        cfl: 1.0,
        default_cells: 64,
        fd_step: 1e-2,
    }
}

fn with_exact(
    mut case: TestCase,
    u: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
    grad: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static,
) -> TestCase {
    let u: FieldFn = Arc::new(u);
    let u0 = u.clone();
    case.initial = Arc::new(move |x| u0(x, 0.0));
    case.exact = Some(u);
    case.gradient = Some(Arc::new(grad));
    case
}

/// `u_t + u_x − u_xx = g` on `[0, 2π]`, `u = sin(x − t)`.
fn one_d_test1() -> TestCase {
    let p = PdeProblem::new(1)
        .with_diffusion(1.0)
        .with_constant_velocity([1.0, 0.0])
        .with_source(|x, t| (x[0] - t).sin());
    with_exact(
        one_d("1d-test1", p, 0.0, 2.0 * PI),
        |x, t| (x[0] - t).sin(),
        |x, t| [(x[0] - t).cos(), 0.0],
    )
}

/// `u_t + (u²/2)_x − u_xx = g` on `[−π, π]`, `u = sin(x − t)`.
fn one_d_test2() -> TestCase {
    let p = PdeProblem::new(1)
        .with_diffusion(1.0)
        .with_constant_velocity([1.0, 0.0])
        .with_burgers_flux()
        .with_source(|x, t| {
            let (s, c) = (x[0] - t).sin_cos();
            -c + s * c + s
        });
    with_exact(
        one_d("1d-test2", p, -PI, PI),
        |x, t| (x[0] - t).sin(),
        |x, t| [(x[0] - t).cos(), 0.0],
    )
}

/// `u_t − ν² u_xx + u³ − u = 0` on `[−1, 1]`, travelling tanh wave.
fn one_d_test3() -> TestCase {
    let nu: f64 = 0.1;
    let speed = 3.0 * nu / SQRT_2;
    let width = 2.0 * SQRT_2 * nu;
    let exact = move |x: Point, t: f64| 0.5 * (1.0 - ((x[0] - speed * t) / width).tanh());
    let p = PdeProblem::new(1)
        .with_diffusion(nu * nu)
        .with_reaction(|_, u| u * u * u - u)
        .with_dirichlet(exact);
    let mut case = with_exact(one_d("1d-test3", p, -1.0, 1.0), exact, move |x, t| {
        let s = 1.0 / ((x[0] - speed * t) / width).cosh();
        [-0.5 * s * s / width, 0.0]
    });
    case.fd_step = 2e-3;
    case
}

/// Viscous Burgers with reaction `π cos(πx) u`, boundary values 1 and −0.1
/// and a step at `x = 0.3`. No closed form.
fn one_d_test4() -> TestCase {
    let p = PdeProblem::new(1)
        .with_diffusion(1e-3)
        .with_constant_velocity([1.0, 0.0])
        .with_burgers_flux()
        .with_reaction(|x, u| PI * (PI * x[0]).cos() * u)
        .with_dirichlet(|x, _| if x[0] < 0.5 { 1.0 } else { -0.1 });
    let mut case = one_d("1d-test4", p, 0.0, 1.0);
    case.initial = Arc::new(|x| if x[0] <= 0.3 { 1.0 } else { -0.1 });
    // Δt = h blows up for k = 5 on 32 cells
    case.cfl = 0.5;
    case.default_cells = 128;
    case
}

fn two_d(name: &'static str, problem: PdeProblem, lo: f64, hi: f64, cfl: f64) -> TestCase {
    TestCase {
        name,
        problem,
        lo: vec![lo; 2],
        hi: vec![hi; 2],
        initial: Arc::new(|_| 0.0),
        exact: None,
        gradient: None,
        t_final: 1.0,
        cfl,
        default_cells: 20,
        fd_step: 1e-2,
    }
}

fn wave_2d(x: Point, t: f64) -> f64 {
    (x[0] + x[1] - 2.0 * t).sin()
}

fn wave_2d_gradient(x: Point, t: f64) -> [f64; 2] {
    let c = (x[0] + x[1] - 2.0 * t).cos();
    [c, c]
}

/// `u_t + ∇·(u, u) − Δu = g` on `[0, 2π]²`, `u = sin(x + y − 2t)`.
fn two_d_test1() -> TestCase {
    let p = PdeProblem::new(2)
        .with_diffusion(1.0)
        .with_constant_velocity([1.0, 1.0])
        .with_source(|x, t| 2.0 * wave_2d(x, t));
    with_exact(two_d("2d-test1", p, 0.0, 2.0 * PI, 0.5), wave_2d, wave_2d_gradient)
}

/// Burgers analogue of 2D-Test1.
fn two_d_test2() -> TestCase {
    let p = PdeProblem::new(2)
        .with_diffusion(1.0)
        .with_constant_velocity([1.0, 1.0])
        .with_burgers_flux()
        .with_source(|x, t| {
            let (s, c) = (x[0] + x[1] - 2.0 * t).sin_cos();
            -2.0 * c + 2.0 * s * c + 2.0 * s
        });
    with_exact(two_d("2d-test2", p, 0.0, 2.0 * PI, 0.5), wave_2d, wave_2d_gradient)
}

/// Allen-Cahn `u_t − Δu + (u³ − u)/ν² = g`, `ν = 0.3`, `u = e^{−2t} sin(x + y)`.
fn two_d_test3() -> TestCase {
    let inv_nu2 = 1.0 / (0.3f64 * 0.3);
    let exact = |x: Point, t: f64| (-2.0 * t).exp() * (x[0] + x[1]).sin();
    let p = PdeProblem::new(2)
        .with_diffusion(1.0)
        .with_reaction(move |_, u| inv_nu2 * (u * u * u - u))
        .with_source(move |x, t| {
            let u = exact(x, t);
            inv_nu2 * (u * u * u - u)
        });
    with_exact(two_d("2d-test3", p, 0.0, 2.0 * PI, 0.2), exact, |x, t| {
        let c = (-2.0 * t).exp() * (x[0] + x[1]).cos();
        [c, c]
    })
}

/// `φ(s) = s tanh((1 − s)/ν)` and its first two derivatives.
fn layer_profile(s: f64, nu: f64) -> (f64, f64, f64) {
    let th = ((1.0 - s) / nu).tanh();
    let sech2 = 1.0 - th * th;
    let d1 = th - s / nu * sech2;
    let d2 = -2.0 / nu * sech2 - 2.0 * s / (nu * nu) * sech2 * th;
    (s * th, d1, d2)
}

/// Viscous Burgers on `[0, 1]²` with `u = (e^t − 1) φ(x) φ(y)`, `ν = 0.01`.
fn two_d_test4() -> TestCase {
    let nu = 1e-2;
    let exact = move |x: Point, t: f64| t.exp_m1() * layer_profile(x[0], nu).0 * layer_profile(x[1], nu).0;
    let p = PdeProblem::new(2)
        .with_diffusion(nu)
        .with_constant_velocity([1.0, 1.0])
        .with_burgers_flux()
        .with_dirichlet(|_, _| 0.0)
        .with_source(move |x, t| {
            let (px, dx, ddx) = layer_profile(x[0], nu);
            let (py, dy, ddy) = layer_profile(x[1], nu);
            let psi = t.exp_m1();
            let u = psi * px * py;
            let ut = t.exp() * px * py;
            let conv = u * psi * (dx * py + px * dy);
            let lap = psi * (ddx * py + px * ddy);
            ut + conv - nu * lap
        });
    let mut case = with_exact(two_d("2d-test4", p, 0.0, 1.0, 0.5), exact, move |x, t| {
        let (px, dx, _) = layer_profile(x[0], nu);
        let (py, dy, _) = layer_profile(x[1], nu);
        let psi = t.exp_m1();
        [psi * dx * py, psi * px * dy]
    });
    case.default_cells = 50;
    case.fd_step = 2e-4;
    case
}

/// Slotted disk, cone and smooth hump on the unit square (radius 0.15),
/// evaluated at unit-square coordinates.
pub fn rotating_bodies(s: Point) -> f64 {
    let r0 = 0.15;
    let dist = |c: Point| ((s[0] - c[0]).powi(2) + (s[1] - c[1]).powi(2)).sqrt() / r0;
    let disk = dist([0.5, 0.75]);
    if disk <= 1.0 {
        let in_slot = (s[0] - 0.5).abs() < 0.025 && s[1] < 0.85;
        return if in_slot { 0.0 } else { 1.0 };
    }
    let cone = dist([0.5, 0.25]);
    if cone <= 1.0 {
        return 1.0 - cone;
    }
    let hump = dist([0.25, 0.5]);
    if hump <= 1.0 {
        return 0.25 * (1.0 + (PI * hump).cos());
    }
    0.0
}

/// Rigid rotation `b = (−y, x)` with `ν = 10⁻³` on `[−2π, 2π]²`; the bodies
/// are placed by mapping the unit square onto the domain.
fn two_d_test5() -> TestCase {
    let p = PdeProblem::new(2)
        .with_diffusion(1e-3)
        .with_velocity(|x| [-x[1], x[0]])
        .with_dirichlet(|_, _| 0.0);
    let mut case = two_d("2d-test5", p, -2.0 * PI, 2.0 * PI, 0.1);
    case.initial = Arc::new(|x| rotating_bodies([x[0] / (4.0 * PI) + 0.5, x[1] / (4.0 * PI) + 0.5]));
    case.default_cells = 50;
    case
}
