//! Running benchmark cases, convergence studies, and CSV/dump output.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::ldg::SemiDiscreteSystem;
use crate::linalg::SolveMethod;
use crate::mesh::{StencilKind, TensorMesh};
use crate::problems::TestCase;
use crate::rdg::{RdgSpace, Side};
use crate::reconstruction::{moment_matrix, wellposedness_check, OrderPair};
use crate::timestepping::{advance, build_tableau, LdgImex};

/// Parameters of one run; `None` fields fall back to the case defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub k: usize,
    pub cells: Option<usize>,
    pub cfl: Option<f64>,
    pub t_final: Option<f64>,
    pub solver: SolveMethod,
    pub tol: f64,
}

impl RunConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            cells: None,
            cfl: None,
            t_final: None,
            solver: SolveMethod::Auto,
            tol: 1e-10,
        }
    }

    pub fn cells(mut self, cells: usize) -> Self {
        self.cells = Some(cells);
        self
    }

    pub fn cfl(mut self, cfl: f64) -> Self {
        self.cfl = Some(cfl);
        self
    }

    pub fn t_final(mut self, t: f64) -> Self {
        self.t_final = Some(t);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub problem: String,
    pub k: usize,
    pub cells: usize,
    pub ndof: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
    /// `‖u_h − u‖_{L²}` at the final time, when the exact solution is known.
    pub error_u: Option<f64>,
    /// `‖q_h/√ε − ∇u‖_{L²}` at the final time.
    pub error_q: Option<f64>,
    pub max: f64,
    pub min: f64,
    pub wall_seconds: f64,
}

/// Final state of a run together with its space.
pub struct RunOutput {
    pub space: RdgSpace,
    pub dofs: Vec<f64>,
    pub summary: RunSummary,
}

/// Advance `case` to its final time on a uniform mesh.
pub fn run_case(case: &TestCase, cfg: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let cells = cfg.cells.unwrap_or(case.default_cells);
    let cfl = cfg.cfl.unwrap_or(case.cfl);
    let t_final = cfg.t_final.unwrap_or(case.t_final);
    if !(cfl > 0.0) {
        return Err(Error::InvalidTimeStep(format!("cfl = {cfl}")));
    }
    let mesh = case.mesh(cells)?;
    let h = mesh.min_size();
    let dt = cfl * h;
    let space = RdgSpace::new(mesh, OrderPair::new(cfg.k, case.dim())?)?;
    let u0 = space.project(|x| (case.initial)(x));
    let system = SemiDiscreteSystem::new(space, case.problem.clone())?.with_linear_solver(cfg.solver, cfg.tol);
    let tab = build_tableau()?;
    let mut imex = LdgImex::new(&system);
    let (dofs, log) = advance(&mut imex, &tab, &u0, 0.0, t_final, dt).map_err(|e| e.error)?;
    let t_end = log.final_time().unwrap_or(0.0);

    let space = system.space();
    let (error_u, error_q) = match (&case.exact, &case.gradient) {
        (Some(u), grad) => {
            let eu = space.l2_error(&dofs, |x| u(x, t_end));
            let eq = match grad {
                Some(g) if case.problem.epsilon > 0.0 => {
                    let q = system.auxiliary(&dofs, t_end)?;
                    Some(space.gradient_error(&q, case.problem.epsilon.sqrt(), |x| g(x, t_end)))
                }
                _ => None,
            };
            (Some(eu), eq)
        }
        _ => (None, None),
    };
    let (max, min) = space.sampled_extrema(&dofs, 5);
    let summary = RunSummary {
        problem: case.name.to_string(),
        k: cfg.k,
        cells,
        ndof: space.ndof(),
        h,
        dt,
        steps: log.len(),
        t_final: t_end,
        error_u,
        error_q,
        max,
        min,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    drop(imex);
    Ok(RunOutput {
        space: system.into_space(),
        dofs,
        summary,
    })
}

/// One row of a convergence table; rates are relative to the previous row.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub cells: usize,
    pub h: f64,
    pub error_u: f64,
    pub rate_u: Option<f64>,
    pub error_q: Option<f64>,
    pub rate_q: Option<f64>,
}

/// `log(e_prev / e) / log(h_prev / h)`.
pub fn observed_rate(h_prev: f64, e_prev: f64, h: f64, e: f64) -> f64 {
    (e_prev / e).ln() / (h_prev / h).ln()
}

/// Rates from a sequence of `(h, error_u, error_q)`.
pub fn rate_table(cells: &[usize], data: &[(f64, f64, Option<f64>)]) -> Vec<RateRow> {
    let mut rows: Vec<RateRow> = Vec::with_capacity(data.len());
    for (i, (&n, &(h, eu, eq))) in cells.iter().zip(data).enumerate() {
        let (rate_u, rate_q) = if i == 0 {
            (None, None)
        } else {
            let (hp, eup, eqp) = data[i - 1];
            let rq = match (eqp, eq) {
                (Some(a), Some(b)) => Some(observed_rate(hp, a, h, b)),
                _ => None,
            };
            (Some(observed_rate(hp, eup, h, eu)), rq)
        };
        rows.push(RateRow {
            cells: n,
            h,
            error_u: eu,
            rate_u,
            error_q: eq,
            rate_q,
        });
    }
    rows
}

/// Runs `case` on each mesh in `cells` and tabulates errors and rates.
///
/// Cases without a closed form are measured against a surrogate reference
/// (see [`surrogate_reference`]).
pub fn convergence(case: &TestCase, cfg: &RunConfig, cells: &[usize], cache: Option<&Path>) -> Result<Vec<RateRow>> {
    if cells.len() < 2 {
        return Err(Error::NeedTwoMeshes);
    }
    let reference = if case.has_exact() {
        None
    } else {
        let finest = *cells.iter().max().unwrap();
        Some(surrogate_reference(case, cfg, 4 * finest, cache)?)
    };
    let mut data = Vec::with_capacity(cells.len());
    for &n in cells {
        let out = run_case(case, &cfg.clone().cells(n))?;
        let s = &out.summary;
        let eu = match &reference {
            None => s.error_u.unwrap(),
            Some(r) => surrogate_error(&out.space, &out.dofs, &r.space, &r.dofs)?,
        };
        data.push((s.h, eu, s.error_q));
    }
    Ok(rate_table(cells, &data))
}

/// Final state of `case` on a fine mesh, read from `cache` when present and
/// written there otherwise.
pub fn surrogate_reference(case: &TestCase, cfg: &RunConfig, cells: usize, cache: Option<&Path>) -> Result<RunOutput> {
    let t = cfg.t_final.unwrap_or(case.t_final);
    let cfl = cfg.cfl.unwrap_or(case.cfl);
    let file = cache.map(|dir| dir.join(format!("{}_k{}_n{}_t{t}_cfl{cfl}.dump", case.name, cfg.k, cells)));
    if let Some(path) = &file {
        if path.exists() {
            let dump = read_solution_dump(path)?;
            let mesh = case.mesh(cells)?;
            let space = RdgSpace::new(mesh, OrderPair::new(cfg.k, case.dim())?)?;
            if dump.dofs.len() == space.ndof() {
                let summary = RunSummary {
                    problem: case.name.to_string(),
                    k: cfg.k,
                    cells,
                    ndof: space.ndof(),
                    h: space.mesh().min_size(),
                    dt: cfl * space.mesh().min_size(),
                    steps: 0,
                    t_final: t,
                    error_u: None,
                    error_q: None,
                    max: f64::NAN,
                    min: f64::NAN,
                    wall_seconds: 0.0,
                };
                return Ok(RunOutput {
                    space,
                    dofs: dump.dofs,
                    summary,
                });
            }
        }
    }
    let out = run_case(case, &cfg.clone().cells(cells))?;
    if let Some(path) = &file {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        let mut w = std::fs::File::create(path).map_err(io_err)?;
        write_solution_dump(&mut w, &out.space, &out.dofs, &out.summary)?;
    }
    Ok(out)
}

/// `‖u_h − u_ref‖_{L²}` with `u_ref` evaluated pointwise on the coarse
/// quadrature.
pub fn surrogate_error(space: &RdgSpace, dofs: &[f64], ref_space: &RdgSpace, ref_dofs: &[f64]) -> Result<f64> {
    // validate once; interior quadrature points always locate
    ref_space.eval_solution(ref_dofs, space.mesh().element_center(&space.mesh().element(0)?), Side::Lower)?;
    Ok(space.l2_error(dofs, |x| ref_space.eval_solution(ref_dofs, x, Side::Lower).unwrap_or(f64::NAN)))
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

/// `cells,h,error_u,rate_u,error_q,rate_q`; missing values are left empty.
pub fn write_rates_csv(w: &mut impl Write, rows: &[RateRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
    writeln!(w, "cells,h,error_u,rate_u,error_q,rate_q").map_err(io_err)?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6e},{:.6e},{},{},{}",
            r.cells,
            r.h,
            r.error_u,
            r.rate_u.map(|x| format!("{x:.4}")).unwrap_or_default(),
            opt(r.error_q),
            r.rate_q.map(|x| format!("{x:.4}")).unwrap_or_default(),
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Moment DoFs with a `# key=value` header, one
/// `elem_index,alpha_index,coefficient` line per unknown.
pub fn write_solution_dump(w: &mut impl Write, space: &RdgSpace, dofs: &[f64], summary: &RunSummary) -> Result<()> {
    let per = space.dofs_per_element();
    let header = [
        ("problem", summary.problem.clone()),
        ("dim", space.dim().to_string()),
        ("k", summary.k.to_string()),
        ("cells", summary.cells.to_string()),
        ("t", format!("{:.17e}", summary.t_final)),
        ("dt", format!("{:.17e}", summary.dt)),
    ];
    for (k, v) in header {
        writeln!(w, "# {k}={v}").map_err(io_err)?;
    }
    writeln!(w, "elem_index,alpha_index,coefficient").map_err(io_err)?;
    for (i, v) in dofs.iter().enumerate() {
        writeln!(w, "{},{},{:.17e}", i / per, i % per, v).map_err(io_err)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionDump {
    pub header: BTreeMap<String, String>,
    pub dofs: Vec<f64>,
}

pub fn read_solution_dump(path: &Path) -> Result<SolutionDump> {
    let f = std::fs::File::open(path).map_err(io_err)?;
    parse_solution_dump(BufReader::new(f))
}

pub fn parse_solution_dump(r: impl BufRead) -> Result<SolutionDump> {
    let mut header = BTreeMap::new();
    let mut dofs = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(kv) = line.strip_prefix('#') {
            if let Some((k, v)) = kv.trim().split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line.starts_with("elem_index") {
            continue;
        }
        let value = line
            .rsplit(',')
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse(format!("dump line {}: {line}", n + 1)))?;
        dofs.push(value);
    }
    Ok(SolutionDump { header, dofs })
}

/// `x[,y],value` at `per_direction` equispaced points per element and
/// direction.
pub fn write_samples_csv(w: &mut impl Write, space: &RdgSpace, dofs: &[f64], per_direction: usize) -> Result<()> {
    let mesh = space.mesh();
    let pts = crate::rdg::reference_samples(space.dim(), per_direction);
    let polys = space.local_polys(dofs);
    if space.dim() == 1 {
        writeln!(w, "x,value").map_err(io_err)?;
    } else {
        writeln!(w, "x,y,value").map_err(io_err)?;
    }
    for el in mesh.elements() {
        for &r in &pts {
            let x = mesh.from_reference(&el, r);
            let v = space.eval_local(&polys[el.linear], r);
            if space.dim() == 1 {
                writeln!(w, "{:.10e},{:.10e}", x[0], v).map_err(io_err)?;
            } else {
                writeln!(w, "{:.10e},{:.10e},{:.10e}", x[0], x[1], v).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

pub fn write_to_path(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    f(&mut w)?;
    w.flush().map_err(io_err)?;
    Ok(path.to_path_buf())
}

/// Well-posedness summary for one stencil configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    /// Stencil kind per direction, e.g. `center` or `forward/center`.
    pub kind: String,
    pub elements: usize,
    pub min_abs_determinant: f64,
    pub max_condition: f64,
    /// Largest relative deviation from the closed-form determinant.
    pub max_oracle_deviation: f64,
}

/// Determinant and conditioning of every moment matrix of `mesh`, grouped
/// by stencil kind. Fails on the first singular matrix.
pub fn wellposedness_audit(mesh: &TensorMesh, pair: OrderPair) -> Result<Vec<AuditRow>> {
    let mut groups: BTreeMap<String, AuditRow> = BTreeMap::new();
    for el in mesh.elements() {
        let stencil = mesh.stencil_of(&el);
        let kind = stencil
            .kinds()
            .iter()
            .map(|k: &StencilKind| k.label())
            .collect::<Vec<_>>()
            .join("/");
        let wp = wellposedness_check(&moment_matrix(mesh, &el, pair), mesh, &el, pair)?;
        let row = groups.entry(kind.clone()).or_insert(AuditRow {
            kind,
            elements: 0,
            min_abs_determinant: f64::INFINITY,
            max_condition: 0.0,
            max_oracle_deviation: 0.0,
        });
        row.elements += 1;
        row.min_abs_determinant = row.min_abs_determinant.min(wp.determinant.abs());
        row.max_condition = row.max_condition.max(wp.condition_estimate);
        row.max_oracle_deviation = row.max_oracle_deviation.max(wp.relative_deviation.unwrap_or(0.0));
    }
    Ok(groups.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::by_name;

    #[test]
    fn rates_of_a_power_law() {
        let cells = [10, 20, 40];
        let data: Vec<_> = cells
            .iter()
            .map(|&n| {
                let h = 1.0 / n as f64;
                (h, 3.0 * h.powi(3), Some(h.powi(2)))
            })
            .collect();
        let rows = rate_table(&cells, &data);
        assert!(rows[0].rate_u.is_none());
        assert!((rows[2].rate_u.unwrap() - 3.0).abs() < 1e-12);
        assert!((rows[1].rate_q.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_mesh_is_rejected() {
        let case = by_name("1d-test1").unwrap();
        assert!(matches!(
            convergence(&case, &RunConfig::new(2), &[8], None),
            Err(Error::NeedTwoMeshes)
        ));
    }

    #[test]
    fn dump_round_trip() {
        let case = by_name("1d-test1").unwrap();
        let out = run_case(&case, &RunConfig::new(2).cells(8).t_final(0.1)).unwrap();
        let mut buf = Vec::new();
        write_solution_dump(&mut buf, &out.space, &out.dofs, &out.summary).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("elem_index,alpha_index,coefficient"));
        let dump = parse_solution_dump(text.as_bytes()).unwrap();
        assert_eq!(dump.dofs, out.dofs);
        assert_eq!(dump.header["problem"], "1d-test1");
        assert_eq!(dump.header["cells"], "8");
    }

    #[test]
    fn samples_csv_shape() {
        let case = by_name("2d-test1").unwrap();
        let out = run_case(&case, &RunConfig::new(2).cells(4).t_final(0.05)).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &out.space, &out.dofs, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,y,value");
        assert_eq!(lines.len(), 1 + 16 * 9);
    }

    #[test]
    fn short_run_reports_errors() {
        let case = by_name("1d-test1").unwrap();
        let out = run_case(&case, &RunConfig::new(2).cells(16).t_final(0.2)).unwrap();
        let s = &out.summary;
        assert!((s.t_final - 0.2).abs() < 1e-14);
        assert!(s.error_u.unwrap() < 1e-2);
        assert!(s.error_q.unwrap() < 5e-2);
        assert!(s.max > 0.9 && s.min < -0.9);
    }

    #[test]
    fn audit_groups_by_kind() {
        let mesh = TensorMesh::uniform(&[0.0, 0.0], &[1.0, 1.0], &[5, 5], &[false, false]).unwrap();
        let rows = wellposedness_audit(&mesh, OrderPair::new(2, 2).unwrap()).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows.iter().map(|r| r.elements).sum::<usize>(), 25);
        for r in &rows {
            assert!(r.max_oracle_deviation < 1e-10, "{r:?}");
        }
    }
}
