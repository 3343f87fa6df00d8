//! The phase loop: collect data with the current policy, estimate its
//! advantages, improve, repeat. Each phase warm-starts the improvement from
//! the current parameters and logs the phase's average reward and the KL
//! movement between consecutive policies.

use crate::envs::{
    ls_policy_eval, ridge_fit_per_action, tabular_policy_eval, ContextualBanditEnv, LinearQ,
    TabularMdp, Trajectory,
};
use crate::error::{Error, Result};
use crate::math::ProbVec;
use crate::objectives::{
    exact_md_update, improve_cpo, improve_regularized, ImprovementBatch, ImprovementReport,
    LossKind, OptimizerConfig,
};
use crate::policy::{empirical_kl, KlDirection, Policy, SoftmaxPolicy, State};
use crate::rng::RngStream;

/// Environments the phase loop can drive.
#[derive(Debug, Clone)]
pub enum ApiEnv {
    Mdp(TabularMdp),
    Contextual(ContextualBanditEnv),
}

/// How advantages are estimated from a phase's data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Empirical means of differential returns per state-action pair.
    TabularEmpirical,
    /// Ridge regression of returns (MDP) or rewards (contextual) on features.
    LeastSquares,
    /// Contextual only: the exact reward table 1{a = label}.
    Oracle,
}

/// Which improvement rule closes each phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImprovementKind {
    Cpo,
    Mdpo,
    Surrogate,
    Vmpo,
    /// The analytic per-state tilt; requires a tabular policy.
    ExactMd,
}

#[derive(Debug, Clone)]
pub struct ApiConfig {
    /// Steps per phase.
    pub tau: usize,
    /// Number of phases.
    pub phases: usize,
    /// Constraint radius / inverse regularization weight.
    pub eta: f64,
    pub improvement: ImprovementKind,
    pub eval: EvalMode,
    pub optimizer: OptimizerConfig,
    /// Optimizer step budget per improvement.
    pub policy_steps: usize,
    pub seed: u64,
}

impl ApiConfig {
    fn validate(&self) -> Result<()> {
        if self.tau < 1 || self.phases < 1 || !(self.eta > 0.0) {
            return Err(Error::InvalidArgument(
                "api config needs tau >= 1, phases >= 1, eta > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One phase's record.
#[derive(Debug, Clone)]
pub struct PhaseLog {
    pub phase: usize,
    /// Mean reward over the phase's τ steps.
    pub avg_reward: f64,
    pub report: Option<ImprovementReport>,
    /// Mean KL(π_k ‖ π_{k+1}) over phase states.
    pub kl_forward: f64,
    /// Mean KL(π_{k+1} ‖ π_k) over phase states.
    pub kl_reverse: f64,
    pub duration_secs: f64,
}

/// One phase's raw data.
#[derive(Debug, Clone)]
pub enum PhaseData {
    Trajectory(Trajectory),
    Contextual {
        contexts: Vec<Vec<f64>>,
        labels: Vec<usize>,
        actions: Vec<usize>,
        rewards: Vec<f64>,
        behavior_probs: Vec<f64>,
    },
}

impl PhaseData {
    pub fn len(&self) -> usize {
        match self {
            PhaseData::Trajectory(t) => t.len(),
            PhaseData::Contextual { rewards, .. } => rewards.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_reward(&self) -> f64 {
        let rewards = match self {
            PhaseData::Trajectory(t) => &t.rewards,
            PhaseData::Contextual { rewards, .. } => rewards,
        };
        rewards.iter().sum::<f64>() / rewards.len().max(1) as f64
    }
}

/// Maps an MDP state index to the observation a non-tabular policy sees.
pub type Featurizer<'a> = &'a (dyn Fn(usize) -> Vec<f64> + Sync);

fn mdp_state(policy: &SoftmaxPolicy, featurize: Option<Featurizer>, x: usize) -> Result<State> {
    match policy {
        SoftmaxPolicy::Tabular(_) => Ok(State::Index(x)),
        _ => {
            let f = featurize.ok_or_else(|| {
                Error::InvalidArgument(
                    "non-tabular policy on an MDP needs a state featurizer".into(),
                )
            })?;
            Ok(State::Features(f(x)))
        }
    }
}

/// Executes the policy for exactly τ environment steps.
///
/// For MDPs the walk continues from `current_state`, which is updated in
/// place (the environment is continuing, not episodic).
pub fn collect_data(
    env: &ApiEnv,
    policy: &SoftmaxPolicy,
    featurize: Option<Featurizer>,
    tau: usize,
    current_state: &mut usize,
    rng: &mut RngStream,
) -> Result<PhaseData> {
    if tau < 1 {
        return Err(Error::InvalidArgument("tau must be >= 1".into()));
    }
    match env {
        ApiEnv::Mdp(mdp) => {
            let mut traj = Trajectory::default();
            let mut x = *current_state;
            for _ in 0..tau {
                let s = mdp_state(policy, featurize, x)?;
                let a = policy.sample_action(&s, rng)?;
                let xp = mdp.step(x, a, rng);
                traj.push(x, a, mdp.reward(x, a), xp);
                x = xp;
            }
            *current_state = x;
            Ok(PhaseData::Trajectory(traj))
        }
        ApiEnv::Contextual(cb) => {
            let mut contexts = Vec::with_capacity(tau);
            let mut labels = Vec::with_capacity(tau);
            let mut actions = Vec::with_capacity(tau);
            let mut rewards = Vec::with_capacity(tau);
            let mut behavior_probs = Vec::with_capacity(tau);
            for _ in 0..tau {
                let (x, label) = cb.sample(rng);
                let s = State::Features(x.clone());
                let dist = policy.action_dist(&s)?;
                let a = dist.sample(rng);
                behavior_probs.push(dist[a]);
                rewards.push(cb.reward(a, label));
                contexts.push(x);
                labels.push(label);
                actions.push(a);
            }
            Ok(PhaseData::Contextual {
                contexts,
                labels,
                actions,
                rewards,
                behavior_probs,
            })
        }
    }
}

/// Per-phase evaluation state carried across phases (warm starts).
#[derive(Debug, Clone, Default)]
pub struct EvalState {
    pub value_weights: Option<LinearQ>,
}

fn advantage_row(q_row: &[f64], pi: &ProbVec) -> Vec<f64> {
    let v: f64 = pi.as_slice().iter().zip(q_row).map(|(p, q)| p * q).sum();
    q_row.iter().map(|&q| q - v).collect()
}

/// Packages a phase's data into an improvement batch: full advantage rows,
/// or sampled importance-weighted triples when the improvement kind asks
/// for them.
pub fn policy_evaluation(
    env: &ApiEnv,
    data: &PhaseData,
    policy: &SoftmaxPolicy,
    featurize: Option<Featurizer>,
    config: &ApiConfig,
    eval_state: &mut EvalState,
) -> Result<ImprovementBatch> {
    if data.is_empty() {
        return Err(Error::EmptyInput("phase data"));
    }
    let sampled = config.improvement == ImprovementKind::Cpo;
    let n_actions = policy.num_actions();
    // q_rows[t] is the estimated action-value row at the t-th visited state
    let (states, q_rows): (Vec<State>, Vec<Vec<f64>>) = match (env, data) {
        (ApiEnv::Mdp(mdp), PhaseData::Trajectory(traj)) => {
            let states: Vec<State> = traj
                .states
                .iter()
                .map(|&x| mdp_state(policy, featurize, x))
                .collect::<Result<_>>()?;
            let q_rows = match config.eval {
                EvalMode::TabularEmpirical => {
                    let eval = tabular_policy_eval(traj, mdp.n_states, mdp.n_actions)?;
                    traj.states.iter().map(|&x| eval.q_row(x).to_vec()).collect()
                }
                EvalMode::LeastSquares => {
                    let f = featurize.ok_or_else(|| {
                        Error::InvalidArgument("least-squares evaluation needs a featurizer".into())
                    })?;
                    let model =
                        ls_policy_eval(traj, f, n_actions, eval_state.value_weights.as_ref())?;
                    let rows = traj.states.iter().map(|&x| model.eval_row(&f(x))).collect();
                    eval_state.value_weights = Some(model);
                    rows
                }
                EvalMode::Oracle => {
                    return Err(Error::InvalidArgument(
                        "oracle evaluation only applies to contextual environments".into(),
                    ))
                }
            };
            (states, q_rows)
        }
        (
            ApiEnv::Contextual(_),
            PhaseData::Contextual {
                contexts,
                labels,
                actions,
                rewards,
                ..
            },
        ) => {
            let states: Vec<State> = contexts.iter().map(|x| State::Features(x.clone())).collect();
            let q_rows = match config.eval {
                EvalMode::Oracle => labels
                    .iter()
                    .map(|&label| {
                        let mut row = vec![0.0; n_actions];
                        row[label] = 1.0;
                        row
                    })
                    .collect(),
                EvalMode::LeastSquares => {
                    let model = ridge_fit_per_action(
                        contexts,
                        actions,
                        rewards,
                        n_actions,
                        eval_state.value_weights.as_ref(),
                    )?;
                    let rows = contexts.iter().map(|x| model.eval_row(x)).collect();
                    eval_state.value_weights = Some(model);
                    rows
                }
                EvalMode::TabularEmpirical => {
                    return Err(Error::InvalidArgument(
                        "tabular-empirical evaluation needs a finite state space".into(),
                    ))
                }
            };
            (states, q_rows)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "phase data does not match the environment kind".into(),
            ))
        }
    };

    let adv_rows: Vec<Vec<f64>> = states
        .iter()
        .zip(&q_rows)
        .map(|(x, q)| Ok(advantage_row(q, &policy.action_dist(x)?)))
        .collect::<Result<_>>()?;

    if sampled {
        let actions: Vec<usize> = match data {
            PhaseData::Trajectory(t) => t.actions.clone(),
            PhaseData::Contextual { actions, .. } => actions.clone(),
        };
        let behavior: Vec<f64> = match data {
            PhaseData::Contextual { behavior_probs, .. } => behavior_probs.clone(),
            PhaseData::Trajectory(_) => states
                .iter()
                .zip(&actions)
                .map(|(x, &a)| Ok(policy.action_dist(x)?[a]))
                .collect::<Result<_>>()?,
        };
        let adv: Vec<f64> = adv_rows
            .iter()
            .zip(&actions)
            .map(|(row, &a)| row[a])
            .collect();
        ImprovementBatch::sampled(states, actions, adv, behavior)
    } else {
        ImprovementBatch::all_actions(states, adv_rows)
    }
}

/// Runs K phases of Algorithm-style policy iteration from the given initial
/// policy (uniform by construction for zero-initialized heads).
pub fn run_api(
    env: &ApiEnv,
    initial: SoftmaxPolicy,
    featurize: Option<Featurizer>,
    config: &ApiConfig,
) -> Result<(Vec<PhaseLog>, SoftmaxPolicy)> {
    config.validate()?;
    if config.improvement == ImprovementKind::ExactMd && initial.as_tabular().is_none() {
        return Err(Error::InvalidArgument(
            "the exact mirror-descent update requires a tabular policy".into(),
        ));
    }
    let mut rng = RngStream::new(config.seed);
    let mut policy = initial;
    let mut logs = Vec::with_capacity(config.phases);
    let mut eval_state = EvalState::default();
    let mut current_state = 0usize;
    for k in 0..config.phases {
        let started = std::time::Instant::now();
        let data = collect_data(env, &policy, featurize, config.tau, &mut current_state, &mut rng)?;
        let avg_reward = data.mean_reward();
        let batch = policy_evaluation(env, &data, &policy, featurize, config, &mut eval_state)?;
        let (next, report) = match config.improvement {
            ImprovementKind::Cpo => {
                let (p, r) = improve_cpo(&batch, &policy, config.eta, config.optimizer, config.policy_steps)?;
                (p, Some(r))
            }
            ImprovementKind::Mdpo | ImprovementKind::Surrogate | ImprovementKind::Vmpo => {
                let kind = match config.improvement {
                    ImprovementKind::Mdpo => LossKind::Mdpo,
                    ImprovementKind::Surrogate => LossKind::Surrogate,
                    _ => LossKind::Vmpo,
                };
                let (p, r) = improve_regularized(
                    &batch,
                    &policy,
                    config.eta,
                    kind,
                    config.optimizer,
                    config.policy_steps,
                )?;
                (p, Some(r))
            }
            ImprovementKind::ExactMd => {
                let tab = policy.as_tabular().expect("checked above");
                // full advantage table; unvisited states keep zero rows
                let mdp = match env {
                    ApiEnv::Mdp(m) => m,
                    ApiEnv::Contextual(_) => {
                        return Err(Error::InvalidArgument(
                            "the exact mirror-descent update requires an MDP environment".into(),
                        ))
                    }
                };
                let traj = match &data {
                    PhaseData::Trajectory(t) => t,
                    PhaseData::Contextual { .. } => unreachable!(),
                };
                let eval = tabular_policy_eval(traj, mdp.n_states, mdp.n_actions)?;
                let mut adv_table = Vec::with_capacity(mdp.n_states);
                for x in 0..mdp.n_states {
                    let dist = tab.action_dist(&State::Index(x))?;
                    adv_table.push(advantage_row(eval.q_row(x), &dist));
                }
                let next_tab = exact_md_update(tab, &adv_table, config.eta)?;
                (SoftmaxPolicy::Tabular(next_tab), None)
            }
        };
        let kl_forward = empirical_kl(&policy, &next, &batch.states, KlDirection::AFromB)?;
        let kl_reverse = empirical_kl(&next, &policy, &batch.states, KlDirection::AFromB)?;
        policy = next;
        logs.push(PhaseLog {
            phase: k,
            avg_reward,
            report,
            kl_forward,
            kl_reverse,
            duration_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok((logs, policy))
}
