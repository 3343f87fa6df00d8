//! Experiment runner: bandit update comparisons, contextual-bandit and
//! tabular-MDP policy iteration, gradient verification, and Monte-Carlo
//! certification of the trust-region negative results. Every run is
//! reproducible bit-exactly from (subcommand, flags, seed); results land in
//! the output directory as CSV plus SVG line charts.

mod bandit_cmd;
mod common;
mod config;
mod contextual_cmd;
mod gradcheck_cmd;
mod lemma_cmd;
mod mdp_cmd;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "klapi", version, about = "KL-regularized vs. KL-constrained policy iteration experiments")]
struct Cli {
    /// Output directory for CSV and SVG files [default: out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Optional key=value config file; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for seed-level parallelism [default: all cores]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Mirror descent vs. trust region on the two-armed Gaussian bandit
    Bandit(bandit_cmd::BanditCmd),
    /// Gradient improvement rules on a contextual bandit
    Contextual(contextual_cmd::ContextualCmd),
    /// Policy iteration on tabular average-reward MDPs
    Mdp(mdp_cmd::MdpCmd),
    /// Numerical gradient / bound / convexity / identity verification
    Gradcheck(gradcheck_cmd::GradcheckCmd),
    /// Monte-Carlo certification of the trust-region negative results
    Lemma(lemma_cmd::LemmaCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        // read once by the worker pool on first use; results are merged in
        // seed order, so the thread count never changes any output
        std::env::set_var("RAYON_NUM_THREADS", jobs.to_string());
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<(), String> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", out_dir.display()))?;
    match &cli.cmd {
        Cmd::Bandit(c) => bandit_cmd::run(c, &cfg, &out_dir),
        Cmd::Contextual(c) => contextual_cmd::run(c, &cfg, &out_dir),
        Cmd::Mdp(c) => mdp_cmd::run(c, &cfg, &out_dir),
        Cmd::Gradcheck(c) => gradcheck_cmd::run(c, &cfg, &out_dir),
        Cmd::Lemma(c) => lemma_cmd::run(c, &cfg, &out_dir),
    }
}
