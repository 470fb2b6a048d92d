//! Run settings merged from a `key = value` file and command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rdg::linalg::SolveMethod;

/// Settings shared by all subcommands. Command-line flags override the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub problem: String,
    pub order: usize,
    /// One entry for `run`, at least two for `convergence`.
    pub cells: Vec<usize>,
    pub cfl: Option<f64>,
    pub t_final: Option<f64>,
    pub output: PathBuf,
    pub threads: Option<usize>,
    pub tol: f64,
    pub solver: SolveMethod,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            problem: "1d-test1".into(),
            order: 2,
            cells: Vec::new(),
            cfl: None,
            t_final: None,
            output: PathBuf::from("output"),
            threads: None,
            tol: 1e-10,
            solver: SolveMethod::Auto,
        }
    }
}

pub fn parse_cells(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<usize>().with_context(|| format!("invalid cell count `{p}`"))
        })
        .collect()
}

pub fn parse_solver(s: &str) -> Result<SolveMethod> {
    Ok(match s.trim().to_ascii_lowercase().as_str() {
        "auto" => SolveMethod::Auto,
        "direct" => SolveMethod::Direct,
        "bicgstab" => SolveMethod::BiCgStab,
        "cg" => SolveMethod::ConjugateGradient,
        other => bail!("unknown solver `{other}` (auto, direct, bicgstab, cg)"),
    })
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected key = value", n + 1))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.apply_map(&parse_config(&text)?)
    }

    pub fn apply_map(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in map {
            let bad = || format!("invalid value for `{k}`: {v}");
            match k.as_str() {
                "problem" => self.problem = v.clone(),
                "order" => self.order = v.parse().with_context(bad)?,
                "cells" => self.cells = parse_cells(v)?,
                "cfl" => self.cfl = Some(v.parse().with_context(bad)?),
                "t_final" => self.t_final = Some(v.parse().with_context(bad)?),
                "output" => self.output = PathBuf::from(v),
                "threads" => self.threads = Some(v.parse().with_context(bad)?),
                "tol" => self.tol = v.parse().with_context(bad)?,
                "solver" => self.solver = parse_solver(v)?,
                other => bail!("unknown configuration key `{other}`"),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.order != 2 && self.order != 5 {
            bail!("order must be 2 or 5, got {}", self.order);
        }
        if let Some(&n) = self.cells.iter().find(|&&n| n < 3) {
            bail!("at least 3 cells per direction are required, got {n}");
        }
        if let Some(c) = self.cfl {
            if !(c > 0.0) {
                bail!("cfl must be positive, got {c}");
            }
        }
        if let Some(t) = self.t_final {
            if !(t >= 0.0) {
                bail!("final time must be non-negative, got {t}");
            }
        }
        if !(self.tol > 0.0) {
            bail!("tolerance must be positive, got {}", self.tol);
        }
        Ok(())
    }

    pub fn run_config(&self) -> rdg::study::RunConfig {
        let mut cfg = rdg::study::RunConfig::new(self.order);
        cfg.cfl = self.cfl;
        cfg.t_final = self.t_final;
        cfg.solver = self.solver;
        cfg.tol = self.tol;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trip() {
        let map = parse_config("# comment\nproblem = 2d-test3\norder=5\ncells = 10, 20\nt-final = 0.5 # trailing\n").unwrap();
        let mut s = Settings::default();
        s.apply_map(&map).unwrap();
        assert_eq!(s.problem, "2d-test3");
        assert_eq!(s.order, 5);
        assert_eq!(s.cells, vec![10, 20]);
        assert_eq!(s.t_final, Some(0.5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("order 5").is_err());
        let mut s = Settings::default();
        assert!(s.apply_map(&parse_config("colour = red").unwrap()).is_err());
        s.order = 3;
        assert!(s.validate().is_err());
        s.order = 2;
        s.cells = vec![2];
        assert!(s.validate().is_err());
        assert!(parse_solver("lu").is_err());
    }
}
