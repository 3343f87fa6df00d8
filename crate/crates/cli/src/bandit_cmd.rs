//! `klapi bandit`: exact mirror-descent vs. trust-region updates on the
//! two-armed Gaussian bandit, over a (gap, step-size) grid.

use std::path::Path;

use clap::Args;
use klapi::bandit::{
    regret_lower_bound, run_bandit_experiment, BanditAlgo, BanditInstance, BanditRunResult,
};
use klapi::parallel::run_seeds;

use crate::config::{FileConfig, SeedSpec};
use crate::output::{fmt9, line_chart, write_csv, write_svg, Series};

pub const CSV_HEADER: &str = "algo,delta,eta,seed,phase,theta,phase_regret";
pub const SUMMARY_HEADER: &str =
    "delta,eta,tau,horizon,seeds,mean_regret,ci95,bound,pass";

#[derive(Args, Debug)]
pub struct BanditCmd {
    /// Reward gaps to sweep, comma separated [default: 0.5,1.0]
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Step sizes / constraint radii to sweep [default: 0.1,0.5,1.0]
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Reward noise standard deviation [default: 1.0]
    #[arg(long)]
    sigma: Option<f64>,
    /// Pulls per phase [default: 20]
    #[arg(long)]
    tau: Option<usize>,
    /// Number of phases [default: 100]
    #[arg(long)]
    phases: Option<usize>,
    /// Seeds: a count N or an inclusive range A..B [default: 10]
    #[arg(long)]
    seeds: Option<SeedSpec>,
    /// Estimate the gap from all data so far instead of the current phase
    #[arg(long)]
    all_data: bool,
    /// Also write a summary comparing mean trust-region regret to its
    /// closed-form lower bound
    #[arg(long)]
    certify_lemma2: bool,
}

pub fn run(cmd: &BanditCmd, cfg: &FileConfig, out_dir: &Path) -> Result<(), String> {
    let deltas = cfg.resolve_list(cmd.delta.clone(), "delta", &[0.5, 1.0])?;
    let etas = cfg.resolve_list(cmd.eta.clone(), "eta", &[0.1, 0.5, 1.0])?;
    let sigma = cfg.resolve(cmd.sigma, "sigma", 1.0)?;
    let tau = cfg.resolve(cmd.tau, "tau", 20)?;
    let phases = cfg.resolve(cmd.phases, "phases", 100)?;
    let seeds = cfg.resolve(cmd.seeds.clone(), "seeds", SeedSpec((0..10).collect()))?.0;
    if deltas.is_empty() || etas.is_empty() {
        return Err("bandit: need at least one delta and one eta".into());
    }

    let mut rows = Vec::new();
    let mut summary_rows = Vec::new();
    for &delta in &deltas {
        for &eta in &etas {
            let instance = BanditInstance::new(delta, sigma).map_err(|e| e.to_string())?;
            let mut chart_series = Vec::new();
            for (ai, algo) in [(0usize, BanditAlgo::Md), (1, BanditAlgo::Trpo)] {
                let all_data = cmd.all_data;
                let results: Vec<Result<BanditRunResult, String>> = run_seeds(&seeds, |seed| {
                    run_bandit_experiment(&instance, algo, eta, tau, phases, seed, all_data)
                        .map_err(|e| e.to_string())
                });
                let name = algo_name(algo);
                for (&seed, res) in seeds.iter().zip(results) {
                    let res = res?;
                    for phase in 1..=phases {
                        rows.push(format!(
                            "{name},{},{},{seed},{phase},{},{}",
                            fmt9(delta),
                            fmt9(eta),
                            fmt9(res.theta_trace[phase]),
                            fmt9(res.phase_regret[phase - 1]),
                        ));
                    }
                    chart_series.push(Series {
                        label: format!("{name} seed {seed}"),
                        color: crate::output::palette(ai).to_string(),
                        points: res
                            .theta_trace
                            .iter()
                            .enumerate()
                            .map(|(k, &t)| (k as f64, t))
                            .collect(),
                    });
                }
                if cmd.certify_lemma2 && algo == BanditAlgo::Trpo {
                    summary_rows.push(lemma2_row(&instance, eta, tau, phases, &seeds)?);
                }
            }
            let svg = line_chart(
                &format!("two-armed bandit, gap {delta}, eta {eta}"),
                "phase",
                "P(best arm)",
                &chart_series,
                None,
            );
            write_svg(
                &out_dir.join(format!("bandit_theta_d{delta}_eta{eta}.svg")),
                &svg,
            )
            .map_err(|e| e.to_string())?;
        }
    }
    write_csv(&out_dir.join("bandit.csv"), CSV_HEADER, &rows).map_err(|e| e.to_string())?;
    if cmd.certify_lemma2 {
        write_csv(&out_dir.join("bandit_summary.csv"), SUMMARY_HEADER, &summary_rows)
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn algo_name(algo: BanditAlgo) -> &'static str {
    match algo {
        BanditAlgo::Md => "md",
        BanditAlgo::Trpo => "trpo",
    }
}

/// Mean trust-region regret across seeds against the closed-form lower
/// bound, with a one-sided 95% normal CI (pass means the CI clears the bound).
fn lemma2_row(
    instance: &BanditInstance,
    eta: f64,
    tau: usize,
    phases: usize,
    seeds: &[u64],
) -> Result<String, String> {
    let regrets: Vec<Result<f64, String>> = run_seeds(seeds, |seed| {
        run_bandit_experiment(instance, BanditAlgo::Trpo, eta, tau, phases, seed, false)
            .map(|r| r.cumulative_regret)
            .map_err(|e| e.to_string())
    });
    let regrets: Vec<f64> = regrets.into_iter().collect::<Result<_, _>>()?;
    let n = regrets.len() as f64;
    let mean = regrets.iter().sum::<f64>() / n;
    let var = regrets.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let ci = 1.645 * (var / n).sqrt();
    let horizon = tau * phases;
    let bound = regret_lower_bound(instance, eta, tau, horizon);
    let pass = mean - ci >= bound;
    Ok(format!(
        "{},{},{tau},{horizon},{},{},{},{},{pass}",
        fmt9(instance.delta),
        fmt9(eta),
        seeds.len(),
        fmt9(mean),
        fmt9(ci),
        fmt9(bound),
    ))
}
