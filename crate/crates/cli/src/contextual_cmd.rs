//! `klapi contextual`: the four gradient improvement rules on a contextual
//! bandit built from synthetic Gaussian clusters or an IDX dataset.

use std::path::{Path, PathBuf};

use clap::Args;
use klapi::api::{run_api, ApiConfig, ApiEnv, PhaseLog};
use klapi::envs::{idx_load, synth_cluster_env, ContextualBanditEnv};
use klapi::objectives::OptimizerConfig;
use klapi::parallel::run_seeds;
use klapi::policy::{LogLinearSoftmaxPolicy, SoftmaxPolicy};

use crate::common::{AlgoArg, EvalArg};
use crate::config::{FileConfig, SeedSpec};
use crate::output::{fmt9, line_chart, palette, write_csv, write_svg, Series};

pub const CSV_HEADER: &str = "algo,eta,seed,phase,avg_reward,kl_forward,kl_reverse";

#[derive(Args, Debug)]
pub struct ContextualCmd {
    /// Improvement rules to run [default: cpo,mdpo,surrogate,vmpo]
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<AlgoArg>>,
    /// Regularization / constraint strengths to sweep [default: 20]
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Samples per phase [default: 1000]
    #[arg(long)]
    tau: Option<usize>,
    /// Number of phases [default: 100]
    #[arg(long)]
    phases: Option<usize>,
    /// Seeds: a count N or an inclusive range A..B [default: 5]
    #[arg(long)]
    seeds: Option<SeedSpec>,
    /// Advantage estimation mode [default: least-squares]
    #[arg(long)]
    eval: Option<EvalArg>,
    /// Optimizer steps per improvement [default: 100]
    #[arg(long)]
    policy_steps: Option<usize>,
    /// Adam learning rate [default: 0.05]
    #[arg(long)]
    lr: Option<f64>,
    /// Number of synthetic classes [default: 10]
    #[arg(long)]
    classes: Option<usize>,
    /// Synthetic feature dimension [default: 16]
    #[arg(long)]
    dim: Option<usize>,
    /// Synthetic cluster separation [default: 4.0]
    #[arg(long)]
    separation: Option<f64>,
    /// Seed for the synthetic environment itself [default: 0]
    #[arg(long)]
    env_seed: Option<u64>,
    /// IDX image file (use with --idx-labels instead of the synthetic env)
    #[arg(long, requires = "idx_labels")]
    idx_images: Option<PathBuf>,
    /// IDX label file
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,
}

pub fn run(cmd: &ContextualCmd, cfg: &FileConfig, out_dir: &Path) -> Result<(), String> {
    let algos = cfg.resolve_list(
        cmd.algos.clone(),
        "algos",
        &[AlgoArg::Cpo, AlgoArg::Mdpo, AlgoArg::Surrogate, AlgoArg::Vmpo],
    )?;
    let etas = cfg.resolve_list(cmd.eta.clone(), "eta", &[20.0])?;
    let tau = cfg.resolve(cmd.tau, "tau", 1000)?;
    let phases = cfg.resolve(cmd.phases, "phases", 100)?;
    let seeds = cfg.resolve(cmd.seeds.clone(), "seeds", SeedSpec((0..5).collect()))?.0;
    let eval = cfg.resolve(cmd.eval, "eval", EvalArg::LeastSquares)?;
    let policy_steps = cfg.resolve(cmd.policy_steps, "policy_steps", 100)?;
    let lr = cfg.resolve(cmd.lr, "lr", 0.05)?;
    if algos.contains(&AlgoArg::ExactMd) {
        return Err("contextual: exact-md needs a tabular policy; pick a gradient rule".into());
    }
    if eval == EvalArg::Tabular {
        return Err("contextual: eval must be least-squares or oracle".into());
    }

    let env = build_env(cmd, cfg)?;
    let n_actions = env.n_classes;
    let dim = env.dim;
    let env = ApiEnv::Contextual(env);

    let mut rows = Vec::new();
    for &eta in &etas {
        for (ai, &algo) in algos.iter().enumerate() {
            let logs: Vec<Result<Vec<PhaseLog>, String>> = run_seeds(&seeds, |seed| {
                let config = ApiConfig {
                    tau,
                    phases,
                    eta,
                    improvement: algo.kind(),
                    eval: eval.mode(),
                    optimizer: OptimizerConfig { learning_rate: lr },
                    policy_steps,
                    seed,
                };
                let policy = SoftmaxPolicy::LogLinear(LogLinearSoftmaxPolicy::zeros(n_actions, dim));
                run_api(&env, policy, None, &config)
                    .map(|(logs, _)| logs)
                    .map_err(|e| e.to_string())
            });
            let mut chart_series = Vec::new();
            for (&seed, logs) in seeds.iter().zip(logs) {
                let logs = logs?;
                for log in &logs {
                    rows.push(format!(
                        "{},{},{seed},{},{},{},{}",
                        algo.name(),
                        fmt9(eta),
                        log.phase,
                        fmt9(log.avg_reward),
                        fmt9(log.kl_forward),
                        fmt9(log.kl_reverse),
                    ));
                }
                chart_series.push(Series {
                    label: format!("{} seed {seed}", algo.name()),
                    color: palette(ai).to_string(),
                    points: logs
                        .iter()
                        .map(|l| (l.phase as f64, l.avg_reward))
                        .collect(),
                });
            }
            let svg = line_chart(
                &format!("contextual bandit, {}, eta {eta}", algo.name()),
                "phase",
                "average reward",
                &chart_series,
                None,
            );
            write_svg(
                &out_dir.join(format!("contextual_{}_eta{eta}.svg", algo.name())),
                &svg,
            )
            .map_err(|e| e.to_string())?;
        }
    }
    write_csv(&out_dir.join("contextual.csv"), CSV_HEADER, &rows).map_err(|e| e.to_string())
}

fn build_env(cmd: &ContextualCmd, cfg: &FileConfig) -> Result<ContextualBanditEnv, String> {
    match (&cmd.idx_images, &cmd.idx_labels) {
        (Some(images), Some(labels)) => {
            let (features, labels) = idx_load(images, labels).map_err(|e| e.to_string())?;
            ContextualBanditEnv::from_dataset(features, labels).map_err(|e| e.to_string())
        }
        _ => {
            let classes = cfg.resolve(cmd.classes, "classes", 10)?;
            let dim = cfg.resolve(cmd.dim, "dim", 16)?;
            let separation = cfg.resolve(cmd.separation, "separation", 4.0)?;
            let env_seed = cfg.resolve(cmd.env_seed, "env_seed", 0)?;
            synth_cluster_env(classes, dim, separation, env_seed).map_err(|e| e.to_string())
        }
    }
}
