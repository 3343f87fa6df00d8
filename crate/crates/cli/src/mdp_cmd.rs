//! `klapi mdp`: phase-loop policy iteration on tabular average-reward MDPs,
//! with the optimal average reward from the exact solver as a reference.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use klapi::api::{run_api, ApiConfig, ApiEnv, PhaseLog};
use klapi::envs::{fourier_features, gridworld_4x4, riverswim, solve_optimal, TabularMdp};
use klapi::objectives::OptimizerConfig;
use klapi::parallel::run_seeds;
use klapi::policy::{LogLinearSoftmaxPolicy, SoftmaxPolicy, TabularSoftmaxPolicy};

use crate::common::{AlgoArg, EvalArg};
use crate::config::{FileConfig, SeedSpec};
use crate::output::{fmt9, line_chart, palette, write_csv, write_svg, Series};

pub const CSV_HEADER: &str = "algo,fixture,eta,seed,phase,avg_reward,j_star";

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum PolicyArg {
    Tabular,
    LogLinear,
}

impl std::str::FromStr for PolicyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum FeatureArg {
    /// One-hot state indicators.
    OneHot,
    /// Fourier basis of the normalized state index.
    Fourier,
}

impl std::str::FromStr for FeatureArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args, Debug)]
pub struct MdpCmd {
    /// Built-in environment [default: riverswim] [possible: riverswim, gridworld]
    #[arg(long)]
    fixture: Option<String>,
    /// Load the environment from a text file instead of a fixture
    #[arg(long, conflicts_with = "fixture")]
    mdp_file: Option<PathBuf>,
    /// Improvement rules to run [default: exact-md,mdpo]
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<AlgoArg>>,
    /// Regularization / constraint strengths to sweep [default: 0.1]
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Steps per phase [default: 5000]
    #[arg(long)]
    tau: Option<usize>,
    /// Number of phases [default: 50]
    #[arg(long)]
    phases: Option<usize>,
    /// Seeds: a count N or an inclusive range A..B [default: 5]
    #[arg(long)]
    seeds: Option<SeedSpec>,
    /// Advantage estimation mode [default: tabular]
    #[arg(long)]
    eval: Option<EvalArg>,
    /// Policy parameterization [default: tabular]
    #[arg(long)]
    policy: Option<PolicyArg>,
    /// Feature map for log-linear policies [default: one-hot]
    #[arg(long)]
    features: Option<FeatureArg>,
    /// Fourier basis order [default: 3]
    #[arg(long)]
    order: Option<usize>,
    /// Optimizer steps per improvement [default: 200]
    #[arg(long)]
    policy_steps: Option<usize>,
    /// Adam learning rate [default: 0.1]
    #[arg(long)]
    lr: Option<f64>,
}

pub fn run(cmd: &MdpCmd, cfg: &FileConfig, out_dir: &Path) -> Result<(), String> {
    let fixture = cfg.resolve(cmd.fixture.clone(), "fixture", "riverswim".to_string())?;
    let algos = cfg.resolve_list(cmd.algos.clone(), "algos", &[AlgoArg::ExactMd, AlgoArg::Mdpo])?;
    let etas = cfg.resolve_list(cmd.eta.clone(), "eta", &[0.1])?;
    let tau = cfg.resolve(cmd.tau, "tau", 5000)?;
    let phases = cfg.resolve(cmd.phases, "phases", 50)?;
    let seeds = cfg.resolve(cmd.seeds.clone(), "seeds", SeedSpec((0..5).collect()))?.0;
    let eval = cfg.resolve(cmd.eval, "eval", EvalArg::Tabular)?;
    let policy_kind = cfg.resolve(cmd.policy, "policy", PolicyArg::Tabular)?;
    let features = cfg.resolve(cmd.features, "features", FeatureArg::OneHot)?;
    let order = cfg.resolve(cmd.order, "order", 3)?;
    let policy_steps = cfg.resolve(cmd.policy_steps, "policy_steps", 200)?;
    let lr = cfg.resolve(cmd.lr, "lr", 0.1)?;
    if eval == EvalArg::Oracle {
        return Err("mdp: oracle evaluation only exists for contextual bandits".into());
    }
    if policy_kind == PolicyArg::LogLinear && algos.contains(&AlgoArg::ExactMd) {
        return Err("mdp: exact-md needs a tabular policy".into());
    }

    let (mdp, fixture_name) = load_mdp(cmd, &fixture)?;
    let ns = mdp.n_states;
    let na = mdp.n_actions;
    let (j_star, _) = solve_optimal(&mdp).map_err(|e| e.to_string())?;
    let env = ApiEnv::Mdp(mdp);

    // log-linear policies (and least-squares evaluation) see states through
    // this map; fourier features of x/(ns-1) match an order-limited basis
    let featurize = move |x: usize| -> Vec<f64> {
        match features {
            FeatureArg::OneHot => {
                let mut v = vec![0.0; ns];
                v[x] = 1.0;
                v
            }
            FeatureArg::Fourier => {
                let xn = if ns > 1 { x as f64 / (ns - 1) as f64 } else { 0.0 };
                fourier_features(&[xn], order, usize::MAX).expect("1-d fourier basis")
            }
        }
    };
    let dim = featurize(0).len();
    let needs_features = policy_kind == PolicyArg::LogLinear || eval == EvalArg::LeastSquares;

    let mut rows = Vec::new();
    let mut chart_series = Vec::new();
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
                let policy = match policy_kind {
                    PolicyArg::Tabular => {
                        SoftmaxPolicy::Tabular(TabularSoftmaxPolicy::zeros(ns, na))
                    }
                    PolicyArg::LogLinear => {
                        SoftmaxPolicy::LogLinear(LogLinearSoftmaxPolicy::zeros(na, dim))
                    }
                };
                let f = needs_features.then_some(&featurize as &(dyn Fn(usize) -> Vec<f64> + Sync));
                run_api(&env, policy, f, &config)
                    .map(|(logs, _)| logs)
                    .map_err(|e| e.to_string())
            });
            for (&seed, logs) in seeds.iter().zip(logs) {
                let logs = logs?;
                for log in &logs {
                    rows.push(format!(
                        "{},{fixture_name},{},{seed},{},{},{}",
                        algo.name(),
                        fmt9(eta),
                        log.phase,
                        fmt9(log.avg_reward),
                        fmt9(j_star),
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
        }
    }
    let svg = line_chart(
        &format!("{fixture_name}: per-phase average reward"),
        "phase",
        "average reward",
        &chart_series,
        Some((j_star, "optimal")),
    );
    write_svg(&out_dir.join(format!("mdp_{fixture_name}.svg")), &svg).map_err(|e| e.to_string())?;
    write_csv(&out_dir.join("mdp.csv"), CSV_HEADER, &rows).map_err(|e| e.to_string())
}

fn load_mdp(cmd: &MdpCmd, fixture: &str) -> Result<(TabularMdp, String), String> {
    if let Some(path) = &cmd.mdp_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read MDP file {}: {e}", path.display()))?;
        let mdp = TabularMdp::parse(&text).map_err(|e| e.to_string())?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "file".into());
        return Ok((mdp, name));
    }
    match fixture {
        "riverswim" => Ok((riverswim(), "riverswim".into())),
        "gridworld" => Ok((gridworld_4x4(), "gridworld".into())),
        other => Err(format!("unknown fixture {other:?}; pick riverswim or gridworld")),
    }
}
