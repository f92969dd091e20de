//! `slitlab`: config-driven experiment runner for the slit-domain thin
//! obstacle laboratory.
//!
//! One subcommand per experiment kind; `--config` points at a `key = value`
//! file whose settings override the flags. Exit codes: 0 on success, 1 when
//! an acceptance assertion fails (or the run errors), 2 on a malformed
//! config.

use clap::{Args, Parser, Subcommand};
use slitlab::config::{parse_h, ExperimentConfig, ExperimentKind};
use slitlab::report::progress;
use slitlab::runner;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "slitlab", about = "slit-domain thin obstacle laboratory", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value`); overrides the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid spacing, e.g. `1/128`.
    #[arg(long)]
    h: Option<String>,
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Thin obstacle (Signorini) model solve with free-boundary extraction.
    SolveSignorini(Common),
    /// Degenerate equation manufactured-solution study.
    SolveDegenerate(Common),
    /// Almgren frequency profile of the model blow-up field.
    Frequency(Common),
    /// Campanato decay exponent recovery.
    Campanato(Common),
    /// Boundary Harnack ratio experiment.
    Harnack(Common),
    /// Weighted Poincare corpus and Hardy equality probe.
    VerifyInequalities(Common),
    /// End-to-end C^{2,alpha} free-boundary pipeline (n = 2).
    PipelineC2alpha(Common),
}

impl Cmd {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Cmd::SolveSignorini(c) => (ExperimentKind::Signorini, c),
            Cmd::SolveDegenerate(c) => (ExperimentKind::Degenerate, c),
            Cmd::Frequency(c) => (ExperimentKind::Frequency, c),
            Cmd::Campanato(c) => (ExperimentKind::Campanato, c),
            Cmd::Harnack(c) => (ExperimentKind::Harnack, c),
            Cmd::VerifyInequalities(c) => (ExperimentKind::Inequalities, c),
            Cmd::PipelineC2alpha(c) => (ExperimentKind::Pipeline, c),
        }
    }
}

fn resolve(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::default_for(kind);
    if let Some(h) = &common.h {
        cfg.h_den = parse_h(0, h).map_err(|e| format!("--h: {}", e.message))?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        cfg.apply_file(&text).map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.cmd.split();
    let cfg = match resolve(kind, &common) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    match runner::run(&cfg) {
        Ok(rep) => {
            progress(&format!(
                "{}: {} (report in {})",
                rep.stage,
                if rep.pass { "pass" } else { "FAIL" },
                cfg.out.join("report.json").display()
            ));
            if rep.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(1)
        }
    }
}
