//! Three-stage, third-order IMEX Runge-Kutta time stepping.
//!
//! Diffusion is implicit, everything else explicit. Systems are written in
//! mass-weighted form `M u' = K(t, u) + N(t, u)` where the implicit part `K`
//! is linear in `u`; see [`ImexSystem`].

use std::time::Instant;

use crate::error::{Error, Result};
use crate::ldg::{SemiDiscreteSystem, StageSolver};

/// `γ`, the diagonal of the implicit tableau (root of `6γ³ − 18γ² + 9γ − 1`).
pub const GAMMA: f64 = 0.435866521508459;
/// `α₁`
pub const ALPHA1: f64 = -0.35;

/// Butcher tableau pair `(c, A, b)` / `(c, Â, b̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImexTableau {
    pub c: [f64; 4],
    pub a: [[f64; 4]; 4],
    pub a_hat: [[f64; 4]; 4],
    pub b: [f64; 4],
    pub b_hat: [f64; 4],
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Tolerance of the order-condition gate.
pub const ORDER_CONDITION_TOL: f64 = 1e-12;

impl ImexTableau {
    /// Tableau for the given parameters; `α₂` follows from the others.
    pub fn from_parameters(gamma: f64, alpha1: f64, beta1: f64, beta2: f64) -> Self {
        let alpha2 = (1.0 / 3.0 - 2.0 * gamma * gamma - 2.0 * beta2 * alpha1 * gamma) / (gamma * (1.0 - gamma));
        let c = [0.0, gamma, 0.5 * (1.0 + gamma), 1.0];
        let a = [
            [0.0; 4],
            [0.0, gamma, 0.0, 0.0],
            [0.0, 0.5 * (1.0 - gamma), gamma, 0.0],
            [0.0, beta1, beta2, gamma],
        ];
        let a_hat = [
            [0.0; 4],
            [gamma, 0.0, 0.0, 0.0],
            [0.5 * (1.0 + gamma) - alpha1, alpha1, 0.0, 0.0],
            [0.0, 1.0 - alpha2, alpha2, 0.0],
        ];
        let b = [0.0, beta1, beta2, gamma];
        Self {
            c,
            a,
            a_hat,
            b,
            b_hat: b,
            gamma,
            beta1,
            beta2,
            alpha1,
            alpha2,
        }
    }

    /// Residuals of the order conditions up to order three, including the
    /// row-sum conditions and the coupling conditions between the two
    /// tableaus.
    pub fn order_residuals(&self) -> Vec<(&'static str, f64)> {
        let dot = |x: &[f64; 4], y: &[f64; 4]| -> f64 { x.iter().zip(y).map(|(p, q)| p * q).sum() };
        let mv = |m: &[[f64; 4]; 4], v: &[f64; 4]| -> [f64; 4] {
            let mut out = [0.0; 4];
            for (o, row) in out.iter_mut().zip(m) {
                *o = dot(row, v);
            }
            out
        };
        let ones = [1.0; 4];
        let c2 = self.c.map(|x| x * x);
        let (ac, ahc) = (mv(&self.a, &self.c), mv(&self.a_hat, &self.c));
        let (rows, rows_hat) = (mv(&self.a, &ones), mv(&self.a_hat, &ones));
        let row_err = (0..4)
            .map(|i| (rows[i] - self.c[i]).abs().max((rows_hat[i] - self.c[i]).abs()))
            .fold(0.0, f64::max);
        vec![
            ("sum b = 1", dot(&self.b, &ones) - 1.0),
            ("sum b_hat = 1", dot(&self.b_hat, &ones) - 1.0),
            ("row sums = c", row_err),
            ("b.c = 1/2", dot(&self.b, &self.c) - 0.5),
            ("b_hat.c = 1/2", dot(&self.b_hat, &self.c) - 0.5),
            ("b.c^2 = 1/3", dot(&self.b, &c2) - 1.0 / 3.0),
            ("b_hat.c^2 = 1/3", dot(&self.b_hat, &c2) - 1.0 / 3.0),
            ("b.A c = 1/6", dot(&self.b, &ac) - 1.0 / 6.0),
            ("b_hat.A_hat c = 1/6", dot(&self.b_hat, &ahc) - 1.0 / 6.0),
            ("b.A_hat c = 1/6", dot(&self.b, &ahc) - 1.0 / 6.0),
            ("b_hat.A c = 1/6", dot(&self.b_hat, &ac) - 1.0 / 6.0),
        ]
    }

    /// Fails on the first order condition violated by more than `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        for (condition, r) in self.order_residuals() {
            if !(r.abs() <= tol) {
                return Err(Error::OrderConditionViolation { condition, residual: r });
            }
        }
        Ok(())
    }
}

/// The scheme with `β₁ = −3γ²/2 + 4γ − 1/4` and `β₂ = 3γ²/2 − 5γ + 5/4`,
/// checked against the order conditions.
pub fn build_tableau() -> Result<ImexTableau> {
    let g = GAMMA;
    let beta1 = -1.5 * g * g + 4.0 * g - 0.25;
    // The constant term is +5/4; −5/4 breaks Σb = 1.
    let beta2 = 1.5 * g * g - 5.0 * g + 1.25;
    let t = ImexTableau::from_parameters(g, ALPHA1, beta1, beta2);
    t.check(ORDER_CONDITION_TOL)?;
    Ok(t)
}

/// A mass-weighted system `M u' = K(t, u) + N(t, u)` with linear implicit
/// part `K`.
pub trait ImexSystem {
    /// `N(t, u)`, already multiplied by the mass matrix.
    fn explicit_term(&mut self, t: f64, u: &[f64]) -> Result<Vec<f64>>;
    /// Solves `M u − coeff K(t, u) = rhs`; returns `u` and `K(t, u)`.
    fn implicit_stage_solve(&mut self, t: f64, coeff: f64, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    fn mass_apply(&self, u: &[f64]) -> Vec<f64>;
    fn mass_solve(&mut self, r: &[f64]) -> Result<Vec<f64>>;
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    if a != 0.0 {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }
}

/// One step from `t` to `t + dt`.
pub fn imex_step<S: ImexSystem + ?Sized>(sys: &mut S, tab: &ImexTableau, u: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(format!("time step must be positive, got {dt}")));
    }
    let mu = sys.mass_apply(u);
    let mut explicit = vec![sys.explicit_term(t, u)?];
    let mut implicit: Vec<Vec<f64>> = vec![Vec::new()];
    for i in 1..4 {
        let mut rhs = mu.clone();
        for j in 1..i {
            axpy(&mut rhs, dt * tab.a[i][j], &implicit[j]);
        }
        for (j, n) in explicit.iter().enumerate().take(i) {
            axpy(&mut rhs, dt * tab.a_hat[i][j], n);
        }
        let ti = t + tab.c[i] * dt;
        let (ui, ki) = sys.implicit_stage_solve(ti, dt * tab.a[i][i], &rhs)?;
        implicit.push(ki);
        explicit.push(sys.explicit_term(ti, &ui)?);
    }
    let mut rhs = mu;
    for i in 1..4 {
        axpy(&mut rhs, dt * tab.b[i], &implicit[i]);
    }
    for (i, n) in explicit.iter().enumerate() {
        axpy(&mut rhs, dt * tab.b_hat[i], n);
    }
    sys.mass_solve(&rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
}

/// Accepted steps of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepLog {
    pub steps: Vec<StepRecord>,
    pub wall_seconds: f64,
}

impl StepLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Time reached by the last accepted step.
    pub fn final_time(&self) -> Option<f64> {
        self.steps.last().map(|s| s.t)
    }
}

/// A failed run with the steps accepted before the failure.
#[derive(Debug)]
pub struct AdvanceError {
    pub error: Error,
    pub log: StepLog,
}

impl std::fmt::Display for AdvanceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} accepted steps)", self.error, self.log.len())
    }
}

impl std::error::Error for AdvanceError {}

/// Steps from `t0` to `t_final` with constant `dt`, clipping the last step
/// to land on `t_final`. Fails with [`Error::NonFiniteState`] as soon as a
/// state contains NaN or infinity.
pub fn advance<S: ImexSystem + ?Sized>(
    sys: &mut S,
    tab: &ImexTableau,
    u0: &[f64],
    t0: f64,
    t_final: f64,
    dt: f64,
) -> std::result::Result<(Vec<f64>, StepLog), AdvanceError> {
    let start = Instant::now();
    let mut log = StepLog::default();
    let fail = |error: Error, mut log: StepLog| {
        log.wall_seconds = start.elapsed().as_secs_f64();
        AdvanceError { error, log }
    };
    if !(dt > 0.0) || !dt.is_finite() || t_final < t0 {
        return Err(fail(
            Error::InvalidTimeStep(format!("dt = {dt}, interval [{t0}, {t_final}]")),
            log,
        ));
    }
    let mut u = u0.to_vec();
    let mut t = t0;
    // a final step shorter than this fraction of dt is merged into the previous one
    let merge = 1e-8 * dt;
    while t_final - t > merge {
        let mut h = dt.min(t_final - t);
        if t_final - (t + h) <= merge {
            h = t_final - t;
        }
        u = match imex_step(sys, tab, &u, t, h) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, log)),
        };
        let next = if h == t_final - t { t_final } else { t + h };
        if u.iter().any(|v| !v.is_finite()) {
            return Err(fail(
                Error::NonFiniteState {
                    time: next,
                    steps: log.len() + 1,
                },
                log,
            ));
        }
        t = next;
        log.steps.push(StepRecord {
            step: log.len() + 1,
            t,
            dt: h,
        });
    }
    log.wall_seconds = start.elapsed().as_secs_f64();
    Ok((u, log))
}

/// [`ImexSystem`] view of an LDG semi-discretization; caches the stage
/// factorization while `Δt a_ii` is unchanged.
#[derive(Debug)]
pub struct LdgImex<'a> {
    system: &'a SemiDiscreteSystem,
    stage: Option<StageSolver>,
    factorizations: usize,
}

impl<'a> LdgImex<'a> {
    pub fn new(system: &'a SemiDiscreteSystem) -> Self {
        Self {
            system,
            stage: None,
            factorizations: 0,
        }
    }

    /// Number of stage factorizations performed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }
}

impl ImexSystem for LdgImex<'_> {
    fn explicit_term(&mut self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.system.convection_reaction_source_residual(u, t))
    }

    fn implicit_stage_solve(&mut self, t: f64, coeff: f64, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.stage.as_ref().map(|s| s.coeff.to_bits()) != Some(coeff.to_bits()) {
            self.stage = Some(self.system.stage_solver(coeff)?);
            self.factorizations += 1;
        }
        self.system.solve_stage(self.stage.as_ref().unwrap(), rhs, t)
    }

    fn mass_apply(&self, u: &[f64]) -> Vec<f64> {
        self.system.mass().matvec(u)
    }

    fn mass_solve(&mut self, r: &[f64]) -> Result<Vec<f64>> {
        self.system.mass_solve(r)
    }
}

/// Scalar `y' = λ_I y + λ_E y + s(t)`, with `λ_I y` implicit and the rest
/// explicit.
#[derive(Debug, Clone, Copy)]
pub struct LinearOde {
    pub lambda_implicit: f64,
    pub lambda_explicit: f64,
    pub forcing: fn(f64) -> f64,
}

impl LinearOde {
    /// `y' = λ y`, fully implicit.
    pub fn implicit(lambda: f64) -> Self {
        Self {
            lambda_implicit: lambda,
            lambda_explicit: 0.0,
            forcing: |_| 0.0,
        }
    }
}

impl ImexSystem for LinearOde {
    fn explicit_term(&mut self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.lambda_explicit * u[0] + (self.forcing)(t)])
    }

    fn implicit_stage_solve(&mut self, _t: f64, coeff: f64, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let y = rhs[0] / (1.0 - coeff * self.lambda_implicit);
        Ok((vec![y], vec![self.lambda_implicit * y]))
    }

    fn mass_apply(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }

    fn mass_solve(&mut self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.to_vec())
    }
}

/// Observed global order of `y' = λ y` on `[0, 1]` with `y(0) = 1`, for the
/// step sizes `dts`; returns `(dt, error, rate)` rows.
pub fn ode_convergence(tab: &ImexTableau, lambda: f64, dts: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for &dt in dts {
        let mut ode = LinearOde::implicit(lambda);
        let (y, _) = advance(&mut ode, tab, &[1.0], 0.0, 1.0, dt).map_err(|e| e.error)?;
        let err = (y[0] - lambda.exp()).abs();
        let rate = rows
            .last()
            .map_or(f64::NAN, |&(pdt, perr, _)| (perr / err).ln() / (pdt / dt).ln());
        rows.push((dt, err, rate));
    }
    Ok(rows)
}
