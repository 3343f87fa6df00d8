//! `klapi lemma`: Monte-Carlo certification of the two negative results for
//! the exact trust-region update — expected non-improvement from a
//! near-optimal policy, and the linear regret lower bound.

use std::path::Path;

use clap::Args;
use klapi::bandit::{
    find_lemma1_instance, lemma1_expected_next_theta, regret_lower_bound, run_bandit_experiment,
    BanditAlgo, BanditInstance,
};
use klapi::parallel::run_seeds;
use klapi::rng::RngStream;

use crate::config::FileConfig;
use crate::output::{fmt9, write_csv};

pub const CSV_HEADER: &str = "check,delta,sigma,eta,theta,tau,trials,value,ci95,bound,pass";

#[derive(Args, Debug)]
pub struct LemmaCmd {
    /// Constraint radius for the non-improvement check [default: 0.05]
    #[arg(long)]
    eta: Option<f64>,
    /// Current arm-1 probability θ_k [default: 0.95]
    #[arg(long)]
    theta: Option<f64>,
    /// Pulls per phase [default: 20]
    #[arg(long)]
    tau: Option<usize>,
    /// Monte-Carlo trials for the non-improvement check [default: 100000]
    #[arg(long)]
    trials: Option<usize>,
    /// Seed for instance search and simulation [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Reward gap for the regret check [default: 1.0]
    #[arg(long)]
    regret_delta: Option<f64>,
    /// Constraint radius for the regret check [default: 0.5]
    #[arg(long)]
    regret_eta: Option<f64>,
    /// Total pulls T for the regret check [default: 2000]
    #[arg(long)]
    regret_horizon: Option<usize>,
    /// Seeds averaged in the regret check [default: 2000]
    #[arg(long)]
    regret_seeds: Option<u64>,
}

pub fn run(cmd: &LemmaCmd, cfg: &FileConfig, out_dir: &Path) -> Result<(), String> {
    let eta = cfg.resolve(cmd.eta, "eta", 0.05)?;
    let theta = cfg.resolve(cmd.theta, "theta", 0.95)?;
    let tau = cfg.resolve(cmd.tau, "tau", 20)?;
    let trials = cfg.resolve(cmd.trials, "trials", 100_000)?;
    let seed = cfg.resolve(cmd.seed, "seed", 0)?;
    let regret_delta = cfg.resolve(cmd.regret_delta, "regret_delta", 1.0)?;
    let regret_eta = cfg.resolve(cmd.regret_eta, "regret_eta", 0.5)?;
    let regret_horizon = cfg.resolve(cmd.regret_horizon, "regret_horizon", 2000)?;
    let regret_seeds = cfg.resolve(cmd.regret_seeds, "regret_seeds", 2000)?;

    let mut rows = Vec::new();

    // non-improvement: search for an instance, then re-certify it on a fresh
    // stream so the reported row is not the selected noise
    let instance = find_lemma1_instance(eta, theta, tau, trials, seed)
        .map_err(|e| format!("lemma: instance search failed: {e}"))?;
    let mut rng = RngStream::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (mean, ci) = lemma1_expected_next_theta(&instance, theta, eta, tau, trials, &mut rng)
        .map_err(|e| e.to_string())?;
    let improve_pass = mean + ci <= theta;
    rows.push(format!(
        "non-improvement,{},{},{},{},{tau},{trials},{},{},{},{improve_pass}",
        fmt9(instance.delta),
        fmt9(instance.sigma),
        fmt9(eta),
        fmt9(theta),
        fmt9(mean),
        fmt9(ci),
        fmt9(theta),
    ));

    // linear regret: empirical mean regret of the trust-region update must
    // clear the closed-form lower bound at one-sided 95% confidence
    if regret_horizon < tau || regret_horizon % tau != 0 {
        return Err("lemma: regret_horizon must be a positive multiple of tau".into());
    }
    let phases = regret_horizon / tau;
    let instance = BanditInstance::new(regret_delta, 1.0).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..regret_seeds).collect();
    let regrets: Vec<Result<f64, String>> = run_seeds(&seeds, |s| {
        run_bandit_experiment(&instance, BanditAlgo::Trpo, regret_eta, tau, phases, s, false)
            .map(|r| r.cumulative_regret)
            .map_err(|e| e.to_string())
    });
    let regrets: Vec<f64> = regrets.into_iter().collect::<Result<_, _>>()?;
    let n = regrets.len() as f64;
    let mean_regret = regrets.iter().sum::<f64>() / n;
    let var = regrets.iter().map(|r| (r - mean_regret).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let regret_ci = 1.645 * (var / n).sqrt();
    let bound = regret_lower_bound(&instance, regret_eta, tau, regret_horizon);
    let regret_pass = mean_regret - regret_ci >= bound;
    rows.push(format!(
        "linear-regret,{},{},{},-,{tau},{regret_seeds},{},{},{},{regret_pass}",
        fmt9(regret_delta),
        fmt9(1.0),
        fmt9(regret_eta),
        fmt9(mean_regret),
        fmt9(regret_ci),
        fmt9(bound),
    ));

    write_csv(&out_dir.join("lemma.csv"), CSV_HEADER, &rows).map_err(|e| e.to_string())?;
    for row in &rows {
        println!("{row}");
    }
    if improve_pass && regret_pass {
        Ok(())
    } else {
        Err("lemma: certification failed (see lemma.csv)".into())
    }
}
