//! `klapi gradcheck`: numerical verification suites over seeded random
//! instances — finite-difference gradients for every loss and policy kind,
//! the surrogate upper bound, midpoint convexity (and the log-linear
//! counterexample), and the suboptimality-gap identity.

use std::path::Path;

use clap::Args;
use klapi::math::{finite_diff_grad, kl_divergence, softmax, ProbVec};
use klapi::objectives::{
    loss_and_grad, psi_target, suboptimality_gap_check, ImprovementBatch, LossKind,
};
use klapi::policy::{
    LogLinearSoftmaxPolicy, MlpSoftmaxPolicy, Policy, State, TabularSoftmaxPolicy,
};
use klapi::rng::RngStream;

use crate::config::FileConfig;
use crate::output::{fmt9, write_csv};

pub const CSV_HEADER: &str = "check,loss,policy,instances,value,threshold,pass";

const LOSSES: [(LossKind, &str); 4] = [
    (LossKind::Cpo, "cpo"),
    (LossKind::Mdpo, "mdpo"),
    (LossKind::Surrogate, "surrogate"),
    (LossKind::Vmpo, "vmpo"),
];

#[derive(Args, Debug)]
pub struct GradcheckCmd {
    /// Random instances per check [default: 20]
    #[arg(long)]
    instances: Option<usize>,
    /// Base seed for instance generation [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Self-test hook: perturb one analytic gradient component so the
    /// finite-difference check must fail
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum PolicyKind {
    Tabular,
    LogLinear,
    Mlp,
}

impl PolicyKind {
    fn name(self) -> &'static str {
        match self {
            PolicyKind::Tabular => "tabular",
            PolicyKind::LogLinear => "log-linear",
            PolicyKind::Mlp => "mlp",
        }
    }

    fn fd_threshold(self) -> f64 {
        match self {
            PolicyKind::Mlp => 1e-5,
            _ => 1e-6,
        }
    }
}

pub fn run(cmd: &GradcheckCmd, cfg: &FileConfig, out_dir: &Path) -> Result<(), String> {
    let instances = cfg.resolve(cmd.instances, "instances", 20)?;
    let seed = cfg.resolve(cmd.seed, "seed", 0)?;
    if instances < 1 {
        return Err("gradcheck: need at least one instance".into());
    }
    let base = RngStream::new(seed);

    let mut rows = Vec::new();
    let mut all_pass = true;
    let mut push = |rows: &mut Vec<String>, check: &str, loss: &str, policy: &str, n: usize, value: f64, threshold: f64, pass: bool| {
        rows.push(format!(
            "{check},{loss},{policy},{n},{},{},{pass}",
            fmt9(value),
            fmt9(threshold),
        ));
        all_pass &= pass;
    };

    // finite differences, every loss on every policy representation
    for (pi, kind) in [PolicyKind::Tabular, PolicyKind::LogLinear, PolicyKind::Mlp]
        .into_iter()
        .enumerate()
    {
        for (li, (loss, loss_name)) in LOSSES.into_iter().enumerate() {
            let mut max_err = 0.0f64;
            for i in 0..instances {
                let mut rng = base.split(1_000 + (pi * 4 + li) as u64 * 10_000 + i as u64);
                let err = fd_instance(loss, kind, cmd.corrupt_gradient, &mut rng)?;
                max_err = max_err.max(err);
            }
            let threshold = kind.fd_threshold();
            push(&mut rows, "fd", loss_name, kind.name(), instances, max_err, threshold, max_err <= threshold);
        }
    }

    // surrogate loss dominates the reverse-KL objective it relaxes
    let mut min_margin = f64::INFINITY;
    for i in 0..instances {
        let mut rng = base.split(2_000_000 + i as u64);
        min_margin = min_margin.min(surrogate_margin(&mut rng)?);
    }
    push(&mut rows, "bound", "surrogate", "tabular", instances, min_margin, -1e-12, min_margin >= -1e-12);

    // midpoint convexity in the activation table
    for (loss, loss_name) in [(LossKind::Vmpo, "vmpo"), (LossKind::Surrogate, "surrogate")] {
        let mut max_violation = f64::NEG_INFINITY;
        for i in 0..instances {
            let mut rng = base.split(3_000_000 + i as u64);
            max_violation = max_violation.max(midpoint_violation(loss, &mut rng)?);
        }
        push(&mut rows, "convexity", loss_name, "tabular", instances, max_violation, 1e-12, max_violation <= 1e-12);
    }

    // the constrained-update loss is not convex once the parameterization is
    // under-complete: search for a recorded midpoint violation
    let witness = nonconvexity_witness(&base, 20_000)?;
    push(&mut rows, "nonconvexity-witness", "cpo", "log-linear", instances, witness.unwrap_or(0.0), 1e-9, witness.is_some());

    // regularized-objective gap equals KL(candidate ‖ exact maximizer)
    let mut max_gap_err = 0.0f64;
    for i in 0..instances {
        let mut rng = base.split(4_000_000 + i as u64);
        max_gap_err = max_gap_err.max(gap_identity_error(&mut rng)?);
    }
    push(&mut rows, "identity", "-", "-", instances, max_gap_err, 1e-10, max_gap_err <= 1e-10);

    write_csv(&out_dir.join("gradcheck.csv"), CSV_HEADER, &rows).map_err(|e| e.to_string())?;
    for row in &rows {
        println!("{row}");
    }
    if all_pass {
        Ok(())
    } else {
        Err("gradcheck: at least one check failed (see gradcheck.csv)".into())
    }
}

fn rand_vec(n: usize, scale: f64, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_in(-scale, scale)).collect()
}

fn rand_dist(n: usize, rng: &mut RngStream) -> ProbVec {
    softmax(&rand_vec(n, 1.5, rng))
}

/// Builds one random batch + (policy, reference policy) pair of the given
/// representation and returns the max relative gradient error.
fn fd_instance(
    loss: LossKind,
    kind: PolicyKind,
    corrupt: bool,
    rng: &mut RngStream,
) -> Result<f64, String> {
    let n_states = 2 + (rng.uniform() * 3.0) as usize;
    let n_actions = 2 + (rng.uniform() * 3.0) as usize;
    let dim = 3;
    let eta = rng.uniform_in(0.1, 2.0);

    let states: Vec<State> = match kind {
        PolicyKind::Tabular => (0..n_states).map(State::Index).collect(),
        _ => (0..n_states)
            .map(|_| State::Features(rand_vec(dim, 1.0, rng)))
            .collect(),
    };
    let adv: Vec<Vec<f64>> = (0..n_states)
        .map(|_| rand_vec(n_actions, 1.0, rng))
        .collect();
    let batch = ImprovementBatch::all_actions(states, adv).map_err(|e| e.to_string())?;

    let err = match kind {
        PolicyKind::Tabular => {
            let pi_k = random_tabular(n_states, n_actions, rng);
            let policy = random_tabular(n_states, n_actions, rng);
            fd_error(loss, &batch, policy, &pi_k, eta, corrupt)?
        }
        PolicyKind::LogLinear => {
            let pi_k = random_loglinear(n_actions, dim, rng);
            let policy = random_loglinear(n_actions, dim, rng);
            fd_error(loss, &batch, policy, &pi_k, eta, corrupt)?
        }
        PolicyKind::Mlp => {
            let pi_k = MlpSoftmaxPolicy::init(&[dim, 6, n_actions], rng).map_err(|e| e.to_string())?;
            let policy = MlpSoftmaxPolicy::init(&[dim, 6, n_actions], rng).map_err(|e| e.to_string())?;
            fd_error(loss, &batch, policy, &pi_k, eta, corrupt)?
        }
    };
    Ok(err)
}

fn random_tabular(ns: usize, na: usize, rng: &mut RngStream) -> TabularSoftmaxPolicy {
    TabularSoftmaxPolicy::from_logits(ns, na, rand_vec(ns * na, 1.0, rng))
        .expect("well-sized logits")
}

fn random_loglinear(na: usize, dim: usize, rng: &mut RngStream) -> LogLinearSoftmaxPolicy {
    LogLinearSoftmaxPolicy::from_theta(na, dim, rand_vec(na * dim, 1.0, rng))
        .expect("well-sized theta")
}

fn fd_error<P: Policy + Clone, S: Policy>(
    loss: LossKind,
    batch: &ImprovementBatch,
    policy: P,
    pi_k: &S,
    eta: f64,
    corrupt: bool,
) -> Result<f64, String> {
    let (_, mut grad) = loss_and_grad(loss, batch, &policy, pi_k, eta).map_err(|e| e.to_string())?;
    if corrupt {
        grad[0] += 1e-3;
    }
    let params = policy.params().to_vec();
    let f = |p: &[f64]| {
        let mut probe = policy.clone();
        probe.set_params(p).expect("same-length params");
        loss_and_grad(loss, batch, &probe, pi_k, eta)
            .expect("loss evaluates on perturbed params")
            .0
    };
    let fd = finite_diff_grad(f, &params, 1e-6);
    let scale = fd.iter().fold(1.0f64, |m, &g| m.max(g.abs()));
    let err = grad
        .iter()
        .zip(&fd)
        .fold(0.0f64, |m, (&a, &n)| m.max((a - n).abs()));
    Ok(err / scale)
}

/// The margin L_surr − E_x KL(π_θ ‖ ψ_k); nonnegative when the bound holds.
fn surrogate_margin(rng: &mut RngStream) -> Result<f64, String> {
    let n_states = 2 + (rng.uniform() * 3.0) as usize;
    let n_actions = 2 + (rng.uniform() * 3.0) as usize;
    let eta = rng.uniform_in(0.1, 2.0);
    let states: Vec<State> = (0..n_states).map(State::Index).collect();
    let adv: Vec<Vec<f64>> = (0..n_states)
        .map(|_| rand_vec(n_actions, 1.0, rng))
        .collect();
    let batch = ImprovementBatch::all_actions(states.clone(), adv.clone()).map_err(|e| e.to_string())?;
    let pi_k = random_tabular(n_states, n_actions, rng);
    let policy = random_tabular(n_states, n_actions, rng);
    let (l_surr, _) =
        loss_and_grad(LossKind::Surrogate, &batch, &policy, &pi_k, eta).map_err(|e| e.to_string())?;
    let mut mean_kl = 0.0;
    for (x, row) in states.iter().zip(&adv) {
        let psi = psi_target(&pi_k.action_dist(x).map_err(|e| e.to_string())?, row, eta)
            .map_err(|e| e.to_string())?;
        let p = policy.action_dist(x).map_err(|e| e.to_string())?;
        mean_kl += kl_divergence(&p, &psi).map_err(|e| e.to_string())?;
    }
    mean_kl /= n_states as f64;
    Ok(l_surr - mean_kl)
}

/// L((A+B)/2) − (L(A)+L(B))/2 for one random pair of tabular activation
/// tables; ≤ 0 up to rounding when the loss is convex in the activations.
fn midpoint_violation(loss: LossKind, rng: &mut RngStream) -> Result<f64, String> {
    let n_states = 2 + (rng.uniform() * 3.0) as usize;
    let n_actions = 2 + (rng.uniform() * 3.0) as usize;
    let eta = rng.uniform_in(0.1, 2.0);
    let states: Vec<State> = (0..n_states).map(State::Index).collect();
    let adv: Vec<Vec<f64>> = (0..n_states)
        .map(|_| rand_vec(n_actions, 1.0, rng))
        .collect();
    let batch = ImprovementBatch::all_actions(states, adv).map_err(|e| e.to_string())?;
    let pi_k = random_tabular(n_states, n_actions, rng);
    let a = rand_vec(n_states * n_actions, 2.0, rng);
    let b = rand_vec(n_states * n_actions, 2.0, rng);
    let mid: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| 0.5 * (x + y)).collect();
    let eval = |logits: Vec<f64>| -> Result<f64, String> {
        let p = TabularSoftmaxPolicy::from_logits(n_states, n_actions, logits)
            .map_err(|e| e.to_string())?;
        Ok(loss_and_grad(loss, &batch, &p, &pi_k, eta)
            .map_err(|e| e.to_string())?
            .0)
    };
    Ok(eval(mid)? - 0.5 * (eval(a)? + eval(b)?))
}

/// Searches random under-complete log-linear instances (1-d features, 3
/// actions) for a midpoint-convexity violation of the constrained-update loss.
fn nonconvexity_witness(base: &RngStream, attempts: usize) -> Result<Option<f64>, String> {
    let n_actions = 3;
    let dim = 1;
    for i in 0..attempts {
        let mut rng = base.split(5_000_000 + i as u64);
        let states = vec![State::Features(vec![1.0]), State::Features(vec![-1.0])];
        let adv: Vec<Vec<f64>> = (0..2).map(|_| rand_vec(n_actions, 1.0, &mut rng)).collect();
        let batch = ImprovementBatch::all_actions(states, adv).map_err(|e| e.to_string())?;
        let pi_k = random_loglinear(n_actions, dim, &mut rng);
        let a = rand_vec(n_actions * dim, 2.0, &mut rng);
        let b = rand_vec(n_actions * dim, 2.0, &mut rng);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| 0.5 * (x + y)).collect();
        let eval = |theta: Vec<f64>| -> Result<f64, String> {
            let p = LogLinearSoftmaxPolicy::from_theta(n_actions, dim, theta)
                .map_err(|e| e.to_string())?;
            Ok(loss_and_grad(LossKind::Cpo, &batch, &p, &pi_k, 0.5)
                .map_err(|e| e.to_string())?
                .0)
        };
        let violation = eval(mid)? - 0.5 * (eval(a)? + eval(b)?);
        if violation > 1e-9 {
            return Ok(Some(violation));
        }
    }
    Ok(None)
}

fn gap_identity_error(rng: &mut RngStream) -> Result<f64, String> {
    let n = 2 + (rng.uniform() * 4.0) as usize;
    let eta = rng.uniform_in(0.1, 2.0);
    let pi_k = rand_dist(n, rng);
    let candidate = rand_dist(n, rng);
    let q_hat = rand_vec(n, 1.0, rng);
    let (gap, kl) =
        suboptimality_gap_check(&candidate, &pi_k, &q_hat, eta).map_err(|e| e.to_string())?;
    Ok((gap - kl).abs())
}
