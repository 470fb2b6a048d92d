mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rdg::problems::{by_name, NAMES};
use rdg::reconstruction::OrderPair;
use rdg::study::{self, RateRow};

use config::{parse_cells, parse_solver, Settings};

#[derive(Parser, Debug)]
#[command(name = "rdg", version, about = "Reduced DG / LDG-IMEX solver for convection-diffusion-reaction problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Advance one problem to its final time and write the solution.
    Run(Common),
    /// Run a problem on several meshes and tabulate errors and rates.
    Convergence(Common),
    /// Audit the moment matrices of a mesh for singularity.
    CheckWellposedness(Common),
    /// List the built-in problems.
    List,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// key = value file; flags given on the command line take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem name, e.g. 1d-test1 or 2d-test5
    #[arg(long)]
    problem: Option<String>,
    /// Reconstruction order k (2 or 5)
    #[arg(long)]
    order: Option<usize>,
    /// Cells per direction; comma-separated list for convergence
    #[arg(long)]
    cells: Option<String>,
    /// Δt = cfl · h
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Output directory
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Relative residual tolerance of iterative solves
    #[arg(long)]
    tol: Option<f64>,
    /// Linear solver: auto, direct, bicgstab, cg
    #[arg(long)]
    solver: Option<String>,
}

impl Common {
    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        if let Some(p) = &self.problem {
            s.problem = p.clone();
        }
        if let Some(k) = self.order {
            s.order = k;
        }
        if let Some(c) = &self.cells {
            s.cells = parse_cells(c)?;
        }
        if self.cfl.is_some() {
            s.cfl = self.cfl;
        }
        if self.t_final.is_some() {
            s.t_final = self.t_final;
        }
        if let Some(o) = &self.output {
            s.output = o.clone();
        }
        if self.threads.is_some() {
            s.threads = self.threads;
        }
        if let Some(t) = self.tol {
            s.tol = t;
        }
        if let Some(m) = &self.solver {
            s.solver = parse_solver(m)?;
        }
        s.validate()?;
        if let Some(n) = s.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring thread pool")?;
        }
        Ok(s)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into())
}

fn run(s: &Settings) -> Result<()> {
    let case = by_name(&s.problem)?;
    let mut cfg = s.run_config();
    match s.cells.as_slice() {
        [] => {}
        [n] => cfg = cfg.cells(*n),
        _ => bail!("run takes a single cell count"),
    }
    let out = study::run_case(&case, &cfg)?;
    let sm = &out.summary;
    std::fs::create_dir_all(&s.output).with_context(|| format!("creating {}", s.output.display()))?;
    let stem = format!("{}_k{}_n{}", sm.problem, sm.k, sm.cells);
    let dump = study::write_to_path(&s.output.join(format!("{stem}.dump")), |w| {
        study::write_solution_dump(w, &out.space, &out.dofs, sm)
    })?;
    let samples = study::write_to_path(&s.output.join(format!("{stem}_samples.csv")), |w| {
        study::write_samples_csv(w, &out.space, &out.dofs, 4)
    })?;
    println!(
        "problem={} k={} N={} ndof={} h={:.4e} dt={:.4e} steps={} t={} err_u={} err_q={} max={:.6} min={:.6} wall={:.2}s",
        sm.problem,
        sm.k,
        sm.cells,
        sm.ndof,
        sm.h,
        sm.dt,
        sm.steps,
        sm.t_final,
        fmt_opt(sm.error_u),
        fmt_opt(sm.error_q),
        sm.max,
        sm.min,
        sm.wall_seconds
    );
    println!("wrote {} and {}", dump.display(), samples.display());
    Ok(())
}

fn print_rates(rows: &[RateRow]) {
    println!("{:>6} {:>11} {:>11} {:>7} {:>11} {:>7}", "N", "h", "err_u", "rate", "err_q", "rate");
    for r in rows {
        println!(
            "{:>6} {:>11.4e} {:>11.4e} {:>7} {:>11} {:>7}",
            r.cells,
            r.h,
            r.error_u,
            r.rate_u.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            fmt_opt(r.error_q),
            r.rate_q.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
        );
    }
}

fn convergence(s: &Settings) -> Result<()> {
    let case = by_name(&s.problem)?;
    let cells = if s.cells.is_empty() {
        if case.dim() == 1 {
            vec![16, 32, 64, 128]
        } else {
            vec![10, 20, 30]
        }
    } else {
        s.cells.clone()
    };
    std::fs::create_dir_all(&s.output).with_context(|| format!("creating {}", s.output.display()))?;
    let cache = s.output.join("reference");
    let rows = study::convergence(&case, &s.run_config(), &cells, Some(&cache))?;
    if !case.has_exact() {
        println!("(errors measured against a 4x refined surrogate reference)");
    }
    print_rates(&rows);
    let path = study::write_to_path(&s.output.join(format!("{}_k{}_rates.csv", case.name, s.order)), |w| {
        study::write_rates_csv(w, &rows)
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn check_wellposedness(s: &Settings) -> Result<()> {
    let case = by_name(&s.problem)?;
    let cells = match s.cells.as_slice() {
        [] => case.default_cells,
        [n] => *n,
        _ => bail!("check-wellposedness takes a single cell count"),
    };
    let mesh = case.mesh(cells)?;
    let pair = OrderPair::new(s.order, case.dim())?;
    let rows = study::wellposedness_audit(&mesh, pair)?;
    println!(
        "{:<20} {:>8} {:>12} {:>12} {:>12}",
        "stencil", "elements", "min |det|", "max cond", "oracle dev"
    );
    for r in rows {
        println!(
            "{:<20} {:>8} {:>12.4e} {:>12.4e} {:>12.2e}",
            r.kind, r.elements, r.min_abs_determinant, r.max_condition, r.max_oracle_deviation
        );
    }
    println!("all moment matrices nonsingular");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::List => {
            for n in NAMES {
                println!("{n}");
            }
            Ok(())
        }
        Command::Run(c) => c.settings().and_then(|s| run(&s)),
        Command::Convergence(c) => c.settings().and_then(|s| convergence(&s)),
        Command::CheckWellposedness(c) => c.settings().and_then(|s| check_wellposedness(&s)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
