//! Output files. Every file starts with `# config_hash=<hex>`; floats are
//! written with 17 significant digits so they round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use kirchhoff_core::energy::EnergyReport;
use kirchhoff_core::solver::{HistoryEntry, SolveResult};

use crate::config::RunConfig;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write(dir: &Path, name: &str, hash: &str, body: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), format!("# config_hash={hash}\n{body}"))
}

pub fn write_config(dir: &Path, cfg: &RunConfig) -> io::Result<()> {
    write(dir, "config.txt", &cfg.hash(), &cfg.canonical())
}

/// One line per vertex: `d` integer coordinates then the value.
pub fn solution_dump(cfg: &RunConfig, result: &SolveResult) -> String {
    let mut out = format!(
        "# d={} L={} a={} b={} p={} q={} s={} c_w={} h0={} kappa={} alpha={}\n",
        cfg.d, cfg.l, cfg.a, cfg.b, cfg.p, cfg.q, cfg.s, cfg.c_w, cfg.h0, cfg.kappa, cfg.alpha
    );
    let domain = result.field.domain();
    for (x, v) in domain.vertices().zip(result.field.values()) {
        for c in x {
            write!(out, "{c} ").unwrap();
        }
        writeln!(out, "{}", num(*v)).unwrap();
    }
    out
}

pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from("iteration,j,grad_sup\n");
    for h in history {
        writeln!(out, "{},{},{}", h.iteration, num(h.j), num(h.grad_sup)).unwrap();
    }
    out
}

pub const ENERGY_HEADER: &str =
    "j,hnorm_sq,grad_sq,lp_norm_p,log_term,k,grad_sup,tol_solve,nehari_residual,iterations,converged,restarts";

pub fn energy_row(report: &EnergyReport, result: &SolveResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        num(report.j),
        num(report.hnorm_sq),
        num(report.grad_sq),
        num(report.lp_norm_p),
        num(report.log_term),
        num(report.k),
        num(result.grad_sup),
        num(result.tol_solve),
        num(result.nehari_residual),
        result.iterations,
        result.converged,
        result.restarts
    )
}
