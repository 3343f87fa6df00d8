//! Policy-improvement objectives over softmax policies: the expected-advantage
//! loss with a trust-region stopping rule, its KL-regularized variant, the
//! reversed-KL surrogate with an activation-matching term, and the
//! cross-entropy-to-target loss. Also the exact tabular mirror-descent update
//! and the loss suboptimality-gap identity.
//!
//! All gradients are exact: each loss produces a per-state gradient in
//! activation space, which the policy backpropagates to its parameters.

use crate::error::{Error, Result};
use crate::math::{kl_divergence, log_sum_exp, softmax, AdamState, ProbVec};
use crate::policy::{empirical_kl, KlDirection, Policy, SoftmaxPolicy, State, TabularSoftmaxPolicy};

/// One phase's improvement dataset.
#[derive(Debug, Clone)]
pub struct ImprovementBatch {
    pub states: Vec<State>,
    pub mode: BatchMode,
}

/// Advantage estimates: full per-action rows, or sampled (action, estimate,
/// behavior probability) triples for the importance-weighted estimator.
#[derive(Debug, Clone)]
pub enum BatchMode {
    AllActions { adv: Vec<Vec<f64>> },
    Sampled {
        actions: Vec<usize>,
        adv: Vec<f64>,
        behavior_probs: Vec<f64>,
    },
}

impl ImprovementBatch {
    pub fn all_actions(states: Vec<State>, adv: Vec<Vec<f64>>) -> Result<Self> {
        if states.len() != adv.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                got: adv.len(),
            });
        }
        Ok(Self {
            states,
            mode: BatchMode::AllActions { adv },
        })
    }

    pub fn sampled(
        states: Vec<State>,
        actions: Vec<usize>,
        adv: Vec<f64>,
        behavior_probs: Vec<f64>,
    ) -> Result<Self> {
        let n = states.len();
        if actions.len() != n || adv.len() != n || behavior_probs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: actions.len().min(adv.len()).min(behavior_probs.len()),
            });
        }
        if behavior_probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument(
                "sampled batch needs strictly positive behavior probabilities".into(),
            ));
        }
        Ok(Self {
            states,
            mode: BatchMode::Sampled {
                actions,
                adv,
                behavior_probs,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn all_actions_adv(&self) -> Result<&[Vec<f64>]> {
        match &self.mode {
            BatchMode::AllActions { adv } => Ok(adv),
            BatchMode::Sampled { .. } => Err(Error::InvalidArgument(
                "this loss needs full advantage rows, got a sampled batch".into(),
            )),
        }
    }
}

/// The exponential tilt ψ(·) ∝ π_k(·) exp(η Â(·)), computed in log space.
pub fn psi_target(pi_k_dist: &ProbVec, adv_row: &[f64], eta: f64) -> Result<ProbVec> {
    if pi_k_dist.len() != adv_row.len() {
        return Err(Error::DimensionMismatch {
            expected: pi_k_dist.len(),
            got: adv_row.len(),
        });
    }
    let logits: Vec<f64> = pi_k_dist
        .as_slice()
        .iter()
        .zip(adv_row)
        .map(|(&p, &a)| p.ln() + eta * a)
        .collect();
    Ok(softmax(&logits))
}

/// Which regularized loss an improvement loop optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Cpo,
    Mdpo,
    Surrogate,
    Vmpo,
}

fn zero_grad<P: Policy>(policy: &P) -> Vec<f64> {
    vec![0.0; policy.param_len()]
}

/// Negative expected advantage −(1/N) Σ_x Σ_a π_θ(a|x) Â(x,a), or its
/// importance-weighted sampled form, with the exact gradient.
pub fn loss_cpo<P: Policy>(batch: &ImprovementBatch, policy: &P) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("improvement batch"));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = zero_grad(policy);
    match &batch.mode {
        BatchMode::AllActions { adv } => {
            for (x, row) in batch.states.iter().zip(adv) {
                let pi = policy.action_dist(x)?;
                if pi.len() != row.len() {
                    return Err(Error::DimensionMismatch {
                        expected: pi.len(),
                        got: row.len(),
                    });
                }
                let expected: f64 = pi.as_slice().iter().zip(row).map(|(p, a)| p * a).sum();
                loss -= expected / n;
                let g_q: Vec<f64> = pi
                    .as_slice()
                    .iter()
                    .zip(row)
                    .map(|(&p, &a)| -p * (a - expected) / n)
                    .collect();
                policy.backprop_from_activation_grad(x, &g_q, &mut grad)?;
            }
        }
        BatchMode::Sampled {
            actions,
            adv,
            behavior_probs,
        } => {
            for i in 0..batch.states.len() {
                let x = &batch.states[i];
                let pi = policy.action_dist(x)?;
                let a = actions[i];
                let weight = adv[i] / behavior_probs[i];
                loss -= pi[a] * weight / n;
                // d π(a)/dq_b = π(a) (δ_{ab} − π_b)
                let mut g_q: Vec<f64> = pi
                    .as_slice()
                    .iter()
                    .map(|&pb| weight * pi[a] * pb / n)
                    .collect();
                g_q[a] -= weight * pi[a] / n;
                policy.backprop_from_activation_grad(x, &g_q, &mut grad)?;
            }
        }
    }
    Ok((loss, grad))
}

/// Regularized loss: negative expected advantage plus η⁻¹ mean KL(π_θ ‖ π_k).
pub fn loss_mdpo<P: Policy, S: Policy>(
    batch: &ImprovementBatch,
    policy: &P,
    pi_k: &S,
    eta: f64,
) -> Result<(f64, Vec<f64>)> {
    let adv = batch.all_actions_adv()?;
    let (mut loss, mut grad) = loss_cpo(batch, policy)?;
    let n = batch.len() as f64;
    for (x, _row) in batch.states.iter().zip(adv) {
        let pi = policy.action_dist(x)?;
        let pk = pi_k.action_dist(x)?;
        let kl = kl_divergence(&pi, &pk)?;
        loss += kl / (eta * n);
        let g_q: Vec<f64> = pi
            .as_slice()
            .iter()
            .zip(pk.as_slice())
            .map(|(&p, &q)| p * ((p / q).ln() - kl) / (eta * n))
            .collect();
        policy.backprop_from_activation_grad(x, &g_q, &mut grad)?;
    }
    Ok((loss, grad))
}

/// The θ-dependent part of the regularized loss written against the tilted
/// target: mean over states of KL(π_θ(·|x) ‖ ψ_k(x, ·)).
///
/// η · loss_mdpo differs from this by a θ-independent constant; the surrogate
/// loss upper-bounds it.
pub fn mdpo_kl_form<P: Policy, S: Policy>(
    batch: &ImprovementBatch,
    policy: &P,
    pi_k: &S,
    eta: f64,
) -> Result<f64> {
    let adv = batch.all_actions_adv()?;
    let n = batch.len() as f64;
    let mut total = 0.0;
    for (x, row) in batch.states.iter().zip(adv) {
        let pi = policy.action_dist(x)?;
        let psi = psi_target(&pi_k.action_dist(x)?, row, eta)?;
        total += kl_divergence(&pi, &psi)?;
    }
    Ok(total / n)
}

/// Reversed-KL surrogate: mean over states of KL(ψ ‖ π_θ) plus a
/// 0.25-weighted squared activation-matching term with the per-state optimal
/// scalar baseline (the action mean of q_k + ηÂ − q_θ).
pub fn loss_surrogate<P: Policy, S: Policy>(
    batch: &ImprovementBatch,
    policy: &P,
    pi_k: &S,
    eta: f64,
) -> Result<(f64, Vec<f64>)> {
    let adv = batch.all_actions_adv()?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = zero_grad(policy);
    for (x, row) in batch.states.iter().zip(adv) {
        let q_theta = policy.activations(x)?;
        let q_k = pi_k.activations(x)?;
        if q_k.len() != row.len() || q_theta.len() != row.len() {
            return Err(Error::DimensionMismatch {
                expected: row.len(),
                got: q_k.len().min(q_theta.len()),
            });
        }
        let pi = softmax(&q_theta);
        let psi = psi_target(&pi_k.action_dist(x)?, row, eta)?;
        loss += kl_divergence(&psi, &pi)? / n;
        // residual w = q_k + ηÂ − q_θ, centered by its optimal baseline
        let w: Vec<f64> = q_k
            .iter()
            .zip(row)
            .zip(&q_theta)
            .map(|((&qk, &a), &qt)| qk + eta * a - qt)
            .collect();
        let w_bar = w.iter().sum::<f64>() / w.len() as f64;
        loss += 0.25 * w.iter().map(|&wi| (wi - w_bar).powi(2)).sum::<f64>() / n;
        let g_q: Vec<f64> = pi
            .as_slice()
            .iter()
            .zip(psi.as_slice())
            .zip(&w)
            .map(|((&p, &ps), &wi)| (p - ps - 0.5 * (wi - w_bar)) / n)
            .collect();
        policy.backprop_from_activation_grad(x, &g_q, &mut grad)?;
    }
    Ok((loss, grad))
}

/// Cross-entropy against the tilted target: −(1/N) Σ_x Σ_a ψ(x,a) log π_θ(a|x).
pub fn loss_vmpo<P: Policy, S: Policy>(
    batch: &ImprovementBatch,
    policy: &P,
    pi_k: &S,
    eta: f64,
) -> Result<(f64, Vec<f64>)> {
    let adv = batch.all_actions_adv()?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = zero_grad(policy);
    for (x, row) in batch.states.iter().zip(adv) {
        let q_theta = policy.activations(x)?;
        let pi = softmax(&q_theta);
        let psi = psi_target(&pi_k.action_dist(x)?, row, eta)?;
        let lse = log_sum_exp(&q_theta)?;
        for a in 0..q_theta.len() {
            if psi[a] > 0.0 {
                loss -= psi[a] * (q_theta[a] - lse) / n;
            }
        }
        let g_q: Vec<f64> = pi
            .as_slice()
            .iter()
            .zip(psi.as_slice())
            .map(|(&p, &ps)| (p - ps) / n)
            .collect();
        policy.backprop_from_activation_grad(x, &g_q, &mut grad)?;
    }
    Ok((loss, grad))
}

/// Evaluates the chosen loss and its gradient.
pub fn loss_and_grad<P: Policy, S: Policy>(
    kind: LossKind,
    batch: &ImprovementBatch,
    policy: &P,
    pi_k: &S,
    eta: f64,
) -> Result<(f64, Vec<f64>)> {
    match kind {
        LossKind::Cpo => loss_cpo(batch, policy),
        LossKind::Mdpo => loss_mdpo(batch, policy, pi_k, eta),
        LossKind::Surrogate => loss_surrogate(batch, policy, pi_k, eta),
        LossKind::Vmpo => loss_vmpo(batch, policy, pi_k, eta),
    }
}

/// Analytic per-state mirror-descent step: logits += η · Â.
pub fn exact_md_update(
    pi_k: &TabularSoftmaxPolicy,
    adv: &[Vec<f64>],
    eta: f64,
) -> Result<TabularSoftmaxPolicy> {
    if adv.len() != pi_k.n_states {
        return Err(Error::DimensionMismatch {
            expected: pi_k.n_states,
            got: adv.len(),
        });
    }
    let mut next = pi_k.clone();
    for (x, row) in adv.iter().enumerate() {
        let step: Vec<f64> = row.iter().map(|&a| eta * a).collect();
        next.add_to_row(x, &step)?;
    }
    Ok(next)
}

/// Why an improvement loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    KlConstraint,
    Converged,
}

/// Summary of one improvement loop.
#[derive(Debug, Clone)]
pub struct ImprovementReport {
    pub steps: usize,
    pub final_loss: f64,
    /// Mean KL(π_k ‖ π_new) over batch states.
    pub kl_forward: f64,
    /// Mean KL(π_new ‖ π_k) over batch states.
    pub kl_reverse: f64,
    pub stop: StopReason,
}

/// Optimizer hyperparameters for the improvement loops.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
        }
    }
}

fn finish_report<P: Policy, S: Policy>(
    policy: &P,
    pi_k: &S,
    states: &[State],
    steps: usize,
    final_loss: f64,
    stop: StopReason,
) -> Result<ImprovementReport> {
    Ok(ImprovementReport {
        steps,
        final_loss,
        kl_forward: empirical_kl(pi_k, policy, states, KlDirection::AFromB)?,
        kl_reverse: empirical_kl(policy, pi_k, states, KlDirection::AFromB)?,
        stop,
    })
}

/// Trust-region improvement: gradient steps on the expected-advantage loss,
/// checking the empirical KL(π_k ‖ π_θ) over batch states after each step and
/// returning the last feasible iterate once the radius η is exceeded.
pub fn improve_cpo(
    batch: &ImprovementBatch,
    pi_k: &SoftmaxPolicy,
    eta: f64,
    opt: OptimizerConfig,
    max_steps: usize,
) -> Result<(SoftmaxPolicy, ImprovementReport)> {
    if max_steps < 1 {
        return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
    }
    let mut policy = pi_k.clone();
    let mut adam = AdamState::new(policy.param_len(), opt.learning_rate);
    let mut params = policy.params().to_vec();
    let mut last_loss = loss_cpo(batch, &policy)?.0;
    let mut steps = 0;
    let mut stop = StopReason::MaxSteps;
    for _ in 0..max_steps {
        let (loss, grad) = loss_cpo(batch, &policy)?;
        let prev = params.clone();
        adam.update_in_place(&mut params, &grad)?;
        policy.set_params(&params)?;
        let kl = empirical_kl(pi_k, &policy, &batch.states, KlDirection::AFromB)?;
        if kl > eta {
            // discard the violating step, keep the last feasible iterate
            params = prev;
            policy.set_params(&params)?;
            stop = StopReason::KlConstraint;
            break;
        }
        steps += 1;
        last_loss = loss;
    }
    let report = finish_report(&policy, pi_k, &batch.states, steps, last_loss, stop)?;
    Ok((policy, report))
}

/// Unconstrained improvement: n_steps optimizer steps on the chosen
/// regularized loss, warm-started from π_k's parameters.
pub fn improve_regularized(
    batch: &ImprovementBatch,
    pi_k: &SoftmaxPolicy,
    eta: f64,
    kind: LossKind,
    opt: OptimizerConfig,
    n_steps: usize,
) -> Result<(SoftmaxPolicy, ImprovementReport)> {
    if n_steps < 1 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    let mut policy = pi_k.clone();
    let mut adam = AdamState::new(policy.param_len(), opt.learning_rate);
    let mut params = policy.params().to_vec();
    let mut last_loss = 0.0;
    for _ in 0..n_steps {
        let (loss, grad) = loss_and_grad(kind, batch, &policy, pi_k, eta)?;
        adam.update_in_place(&mut params, &grad)?;
        policy.set_params(&params)?;
        last_loss = loss;
    }
    let report = finish_report(
        &policy,
        pi_k,
        &batch.states,
        n_steps,
        last_loss,
        StopReason::MaxSteps,
    )?;
    Ok((policy, report))
}

/// The loss suboptimality-gap identity: the regularized-objective gap between
/// the exact tilted maximizer and a candidate equals KL(candidate ‖ maximizer).
///
/// Returns (gap, kl); the two agree to ~1e-10 for well-scaled inputs.
pub fn suboptimality_gap_check(
    candidate: &ProbVec,
    pi_k: &ProbVec,
    q_hat: &[f64],
    eta: f64,
) -> Result<(f64, f64)> {
    if candidate.len() != pi_k.len() || q_hat.len() != pi_k.len() {
        return Err(Error::DimensionMismatch {
            expected: pi_k.len(),
            got: candidate.len().min(q_hat.len()),
        });
    }
    let u_star = psi_target(pi_k, q_hat, eta)?;
    let objective = |p: &ProbVec| -> Result<f64> {
        let linear: f64 = p
            .as_slice()
            .iter()
            .zip(q_hat)
            .map(|(&pi, &q)| eta * q * pi)
            .sum();
        Ok(linear - kl_divergence(p, pi_k)?)
    };
    let gap = objective(&u_star)? - objective(candidate)?;
    let kl = kl_divergence(candidate, &u_star)?;
    Ok((gap, kl))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::finite_diff_grad;
    use crate::policy::LogLinearSoftmaxPolicy;
    use crate::rng::RngStream;

    fn uniform2() -> ProbVec {
        ProbVec::new(vec![0.5, 0.5]).unwrap()
    }

    fn rand_batch(
        n_states: usize,
        n_actions: usize,
        rng: &mut RngStream,
    ) -> (ImprovementBatch, TabularSoftmaxPolicy) {
        let states: Vec<State> = (0..n_states).map(State::Index).collect();
        let adv: Vec<Vec<f64>> = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
            .collect();
        let logits: Vec<f64> = (0..n_states * n_actions)
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect();
        let pi_k = TabularSoftmaxPolicy::from_logits(n_states, n_actions, logits).unwrap();
        (ImprovementBatch::all_actions(states, adv).unwrap(), pi_k)
    }

    fn fd_loss_check<F>(policy: &TabularSoftmaxPolicy, grad: &[f64], eval: F, tol: f64)
    where
        F: Fn(&TabularSoftmaxPolicy) -> f64,
    {
        let base = policy.clone();
        let numeric = finite_diff_grad(
            |p| {
                let mut pol = base.clone();
                pol.set_params(p).unwrap();
                eval(&pol)
            },
            policy.params(),
            1e-6,
        );
        let scale = numeric.iter().map(|g| g.abs()).fold(1.0f64, f64::max);
        for (i, (a, n)) in grad.iter().zip(&numeric).enumerate() {
            assert!(
                (a - n).abs() / scale < tol,
                "param {i}: analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn psi_examples() {
        let pk = ProbVec::new(vec![0.2, 0.3, 0.5]).unwrap();
        let same = psi_target(&pk, &[0.7, 0.7, 0.7], 1.0).unwrap();
        for (a, b) in same.as_slice().iter().zip(pk.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
        let tiny = psi_target(&pk, &[1.0, -2.0, 0.4], 1e-12).unwrap();
        for (a, b) in tiny.as_slice().iter().zip(pk.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        let eta = 0.3;
        let psi = psi_target(&uniform2(), &[0.0, 9f64.ln() / eta], eta).unwrap();
        assert!((psi[0] - 0.1).abs() < 1e-12);
        assert!((psi[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn cpo_trivial_examples() {
        let states = vec![State::Index(0), State::Index(1)];
        let zero_adv = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let batch = ImprovementBatch::all_actions(states, zero_adv).unwrap();
        let pol = TabularSoftmaxPolicy::zeros(2, 2);
        let (loss, grad) = loss_cpo(&batch, &pol).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));

        // near-deterministic policy on the argmax achieves loss near -max adv
        let batch = ImprovementBatch::all_actions(
            vec![State::Index(0)],
            vec![vec![0.2, 0.9]],
        )
        .unwrap();
        let greedy = TabularSoftmaxPolicy::from_logits(1, 2, vec![-40.0, 40.0]).unwrap();
        let (loss, _) = loss_cpo(&batch, &greedy).unwrap();
        assert!((loss + 0.9).abs() < 1e-12);
    }

    #[test]
    fn cpo_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(10);
        let (batch, pi_k) = rand_batch(3, 4, &mut rng);
        let (_, grad) = loss_cpo(&batch, &pi_k).unwrap();
        fd_loss_check(&pi_k, &grad, |p| loss_cpo(&batch, p).unwrap().0, 1e-6);
    }

    #[test]
    fn cpo_sampled_mode_and_gradient() {
        let mut rng = RngStream::new(20);
        let states = vec![State::Index(0), State::Index(1), State::Index(0)];
        let actions = vec![1, 0, 2];
        let adv = vec![0.5, -0.3, 0.8];
        let probs = vec![0.4, 0.7, 0.2];
        let batch =
            ImprovementBatch::sampled(states, actions.clone(), adv.clone(), probs.clone()).unwrap();
        let logits: Vec<f64> = (0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let pol = TabularSoftmaxPolicy::from_logits(2, 3, logits).unwrap();
        let (loss, grad) = loss_cpo(&batch, &pol).unwrap();
        // hand-computed importance-weighted loss
        let mut expected = 0.0;
        for i in 0..3 {
            let x = match batch.states[i] {
                State::Index(s) => s,
                _ => unreachable!(),
            };
            let pi = pol.action_dist(&State::Index(x)).unwrap();
            expected -= pi[actions[i]] / probs[i] * adv[i] / 3.0;
        }
        assert!((loss - expected).abs() < 1e-14);
        fd_loss_check(&pol, &grad, |p| loss_cpo(&batch, p).unwrap().0, 1e-6);
    }

    #[test]
    fn sampled_batch_rejects_zero_behavior_prob() {
        assert!(ImprovementBatch::sampled(
            vec![State::Index(0)],
            vec![0],
            vec![1.0],
            vec![0.0]
        )
        .is_err());
    }

    #[test]
    fn mdpo_at_psi_has_zero_gradient() {
        let mut rng = RngStream::new(30);
        let (batch, pi_k) = rand_batch(2, 3, &mut rng);
        let eta = 0.8;
        let adv = batch.all_actions_adv().unwrap().to_vec();
        // set the candidate's logits to ln psi so pi_theta = psi exactly
        let mut logits = Vec::new();
        for (x, row) in adv.iter().enumerate() {
            let psi = psi_target(&pi_k.action_dist(&State::Index(x)).unwrap(), row, eta).unwrap();
            logits.extend(psi.as_slice().iter().map(|p| p.ln()));
        }
        let at_psi = TabularSoftmaxPolicy::from_logits(2, 3, logits).unwrap();
        let (_, grad) = loss_mdpo(&batch, &at_psi, &pi_k, eta).unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-10, "gradient norm {norm}");
    }

    #[test]
    fn mdpo_large_eta_approaches_cpo() {
        let mut rng = RngStream::new(31);
        let (batch, pi_k) = rand_batch(2, 3, &mut rng);
        let (l_cpo, _) = loss_cpo(&batch, &pi_k).unwrap();
        let (l_mdpo, _) = loss_mdpo(&batch, &pi_k, &pi_k, 1e9).unwrap();
        assert!((l_cpo - l_mdpo).abs() < 1e-8);
    }

    #[test]
    fn mdpo_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(32);
        let (batch, pi_k) = rand_batch(3, 4, &mut rng);
        let logits: Vec<f64> = (0..12).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let pol = TabularSoftmaxPolicy::from_logits(3, 4, logits).unwrap();
        let (_, grad) = loss_mdpo(&batch, &pol, &pi_k, 0.5).unwrap();
        fd_loss_check(&pol, &grad, |p| loss_mdpo(&batch, p, &pi_k, 0.5).unwrap().0, 1e-6);
    }

    #[test]
    fn mdpo_rejects_sampled_batch() {
        let batch =
            ImprovementBatch::sampled(vec![State::Index(0)], vec![0], vec![1.0], vec![0.5])
                .unwrap();
        let pol = TabularSoftmaxPolicy::zeros(1, 2);
        assert!(loss_mdpo(&batch, &pol, &pol, 0.5).is_err());
        assert!(loss_surrogate(&batch, &pol, &pol, 0.5).is_err());
        assert!(loss_vmpo(&batch, &pol, &pol, 0.5).is_err());
    }

    #[test]
    fn surrogate_exact_match_gives_zero_loss() {
        let mut rng = RngStream::new(40);
        let (batch, pi_k) = rand_batch(2, 3, &mut rng);
        let eta = 0.6;
        let adv = batch.all_actions_adv().unwrap().to_vec();
        let mut matched = pi_k.clone();
        for (x, row) in adv.iter().enumerate() {
            let step: Vec<f64> = row.iter().map(|&a| eta * a).collect();
            matched.add_to_row(x, &step).unwrap();
        }
        let (loss, _) = loss_surrogate(&batch, &matched, &pi_k, eta).unwrap();
        assert!(loss.abs() < 1e-12, "loss = {loss}");
    }

    #[test]
    fn surrogate_invariant_to_per_state_activation_shift() {
        let mut rng = RngStream::new(41);
        let (batch, pi_k) = rand_batch(2, 3, &mut rng);
        let logits: Vec<f64> = (0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let pol = TabularSoftmaxPolicy::from_logits(2, 3, logits.clone()).unwrap();
        let shifted_logits: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(i, &l)| l + if i < 3 { 1.7 } else { -0.9 })
            .collect();
        let shifted = TabularSoftmaxPolicy::from_logits(2, 3, shifted_logits).unwrap();
        let (a, _) = loss_surrogate(&batch, &pol, &pi_k, 0.6).unwrap();
        let (b, _) = loss_surrogate(&batch, &shifted, &pi_k, 0.6).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn surrogate_upper_bounds_reversed_kl_form() {
        let mut rng = RngStream::new(42);
        for _ in 0..1000 {
            let (batch, pi_k) = rand_batch(2, 3, &mut rng);
            let logits: Vec<f64> = (0..6).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let pol = TabularSoftmaxPolicy::from_logits(2, 3, logits).unwrap();
            let eta = 0.1 + rng.uniform();
            let (surr, _) = loss_surrogate(&batch, &pol, &pi_k, eta).unwrap();
            let kl_form = mdpo_kl_form(&batch, &pol, &pi_k, eta).unwrap();
            assert!(surr >= kl_form - 1e-12, "{surr} < {kl_form}");
        }
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(43);
        let (batch, pi_k) = rand_batch(3, 4, &mut rng);
        let logits: Vec<f64> = (0..12).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let pol = TabularSoftmaxPolicy::from_logits(3, 4, logits).unwrap();
        let (_, grad) = loss_surrogate(&batch, &pol, &pi_k, 0.7).unwrap();
        fd_loss_check(&pol, &grad, |p| loss_surrogate(&batch, p, &pi_k, 0.7).unwrap().0, 1e-6);
    }

    #[test]
    fn vmpo_examples_and_gradient() {
        let mut rng = RngStream::new(50);
        let (batch, pi_k) = rand_batch(2, 3, &mut rng);
        let eta = 0.9;
        let adv = batch.all_actions_adv().unwrap().to_vec();
        let mut logits = Vec::new();
        let mut entropy = 0.0;
        for (x, row) in adv.iter().enumerate() {
            let psi = psi_target(&pi_k.action_dist(&State::Index(x)).unwrap(), row, eta).unwrap();
            entropy -= psi.as_slice().iter().map(|&p| p * p.ln()).sum::<f64>() / 2.0;
            logits.extend(psi.as_slice().iter().map(|p| p.ln()));
        }
        let at_psi = TabularSoftmaxPolicy::from_logits(2, 3, logits).unwrap();
        let (loss, grad) = loss_vmpo(&batch, &at_psi, &pi_k, eta).unwrap();
        assert!((loss - entropy).abs() < 1e-12);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-12);

        let logits: Vec<f64> = (0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let pol = TabularSoftmaxPolicy::from_logits(2, 3, logits).unwrap();
        let (_, grad) = loss_vmpo(&batch, &pol, &pi_k, eta).unwrap();
        fd_loss_check(&pol, &grad, |p| loss_vmpo(&batch, p, &pi_k, eta).unwrap().0, 1e-6);
    }

    #[test]
    fn vmpo_one_hot_target_is_log_loss() {
        // huge advantage on one action makes psi numerically one-hot
        let batch = ImprovementBatch::all_actions(
            vec![State::Index(0)],
            vec![vec![0.0, 1000.0]],
        )
        .unwrap();
        let pi_k = TabularSoftmaxPolicy::zeros(1, 2);
        let pol = TabularSoftmaxPolicy::from_logits(1, 2, vec![0.3, -0.4]).unwrap();
        let (loss, _) = loss_vmpo(&batch, &pol, &pi_k, 1.0).unwrap();
        let log_loss = -pol.action_dist(&State::Index(0)).unwrap()[1].ln();
        assert!((loss - log_loss).abs() < 1e-12);
    }

    #[test]
    fn exact_md_examples() {
        let pi_k = TabularSoftmaxPolicy::from_logits(2, 2, vec![0.1, 0.4, -0.3, 0.2]).unwrap();
        let unchanged = exact_md_update(&pi_k, &[vec![0.0, 0.0], vec![0.0, 0.0]], 0.5).unwrap();
        assert_eq!(unchanged.params(), pi_k.params());

        let constant = exact_md_update(&pi_k, &[vec![2.0, 2.0], vec![-1.0, -1.0]], 0.5).unwrap();
        for x in 0..2 {
            let a = pi_k.action_dist(&State::Index(x)).unwrap();
            let b = constant.action_dist(&State::Index(x)).unwrap();
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((p - q).abs() < 1e-14);
            }
        }
        assert!(exact_md_update(&pi_k, &[vec![0.0, 0.0]], 0.5).is_err());
    }

    #[test]
    fn exact_md_is_mdpo_stationary_point_and_grid_optimal() {
        let mut rng = RngStream::new(60);
        let (batch, pi_k) = rand_batch(2, 3, &mut rng);
        let eta = 0.8;
        let adv = batch.all_actions_adv().unwrap().to_vec();
        let updated = exact_md_update(&pi_k, &adv, eta).unwrap();
        let (best_loss, grad) = loss_mdpo(&batch, &updated, &pi_k, eta).unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm <= 1e-8, "gradient norm {norm}");
        for _ in 0..10_000 {
            let mut perturbed = updated.clone();
            let params: Vec<f64> = updated
                .params()
                .iter()
                .map(|p| p + rng.uniform_in(-0.5, 0.5))
                .collect();
            perturbed.set_params(&params).unwrap();
            let (loss, _) = loss_mdpo(&batch, &perturbed, &pi_k, eta).unwrap();
            assert!(loss >= best_loss - 1e-12);
        }
    }

    #[test]
    fn improve_cpo_zero_adv_and_zero_radius() {
        let states = vec![State::Index(0)];
        let batch =
            ImprovementBatch::all_actions(states, vec![vec![0.0, 0.0]]).unwrap();
        let pi_k = SoftmaxPolicy::Tabular(TabularSoftmaxPolicy::zeros(1, 2));
        let (pol, report) =
            improve_cpo(&batch, &pi_k, 0.5, OptimizerConfig::default(), 10).unwrap();
        assert_eq!(pol.params(), pi_k.params());
        assert_eq!(report.stop, StopReason::MaxSteps);

        let batch2 =
            ImprovementBatch::all_actions(vec![State::Index(0)], vec![vec![1.0, -1.0]]).unwrap();
        let (pol, report) =
            improve_cpo(&batch2, &pi_k, 0.0, OptimizerConfig::default(), 10).unwrap();
        // any real step violates a zero radius, so the start point comes back
        assert_eq!(pol.params(), pi_k.params());
        assert_eq!(report.stop, StopReason::KlConstraint);
        assert_eq!(report.steps, 0);
    }

    #[test]
    fn improve_cpo_moves_wrong_way_on_bad_advantage_until_constraint_binds() {
        // misleading estimate: negative advantage on the actually-best action
        let batch =
            ImprovementBatch::all_actions(vec![State::Index(0)], vec![vec![0.4, -0.4]]).unwrap();
        let pi_k = SoftmaxPolicy::Tabular(TabularSoftmaxPolicy::zeros(1, 2));
        let eta = 0.05;
        let opt = OptimizerConfig { learning_rate: 0.02 };
        let (pol, report) = improve_cpo(&batch, &pi_k, eta, opt, 10_000).unwrap();
        assert_eq!(report.stop, StopReason::KlConstraint);
        // moved toward action 0 (the one the estimate favors)
        let d = pol.action_dist(&State::Index(0)).unwrap();
        assert!(d[0] > 0.5);
        // the forward KL sits at the radius, within one step's slack
        assert!(report.kl_forward <= eta);
        assert!(report.kl_forward > 0.8 * eta, "kl = {}", report.kl_forward);
    }

    #[test]
    fn improve_regularized_mdpo_converges_to_closed_form() {
        let mut rng = RngStream::new(70);
        let (batch, pi_k_tab) = rand_batch(2, 3, &mut rng);
        let eta = 0.8;
        let adv = batch.all_actions_adv().unwrap().to_vec();
        let oracle = exact_md_update(&pi_k_tab, &adv, eta).unwrap();
        let pi_k = SoftmaxPolicy::Tabular(pi_k_tab);
        let opt = OptimizerConfig { learning_rate: 0.05 };
        let (pol, _) =
            improve_regularized(&batch, &pi_k, eta, LossKind::Mdpo, opt, 3000).unwrap();
        let kl = empirical_kl(&pol, &oracle, &batch.states, KlDirection::AFromB).unwrap();
        assert!(kl <= 1e-4, "kl to closed form = {kl}");
    }

    #[test]
    fn improve_regularized_step_count_contract() {
        let batch =
            ImprovementBatch::all_actions(vec![State::Index(0)], vec![vec![1.0, 0.0]]).unwrap();
        let pi_k = SoftmaxPolicy::Tabular(TabularSoftmaxPolicy::zeros(1, 2));
        assert!(improve_regularized(&batch, &pi_k, 0.5, LossKind::Vmpo, OptimizerConfig::default(), 0).is_err());
        let (pol, report) =
            improve_regularized(&batch, &pi_k, 0.5, LossKind::Vmpo, OptimizerConfig::default(), 1)
                .unwrap();
        assert_eq!(report.steps, 1);
        assert_ne!(pol.params(), pi_k.params());
    }

    #[test]
    fn improve_regularized_vmpo_decreases_loss() {
        let mut rng = RngStream::new(71);
        let (batch, pi_k_tab) = rand_batch(3, 4, &mut rng);
        let pi_k = SoftmaxPolicy::Tabular(pi_k_tab.clone());
        let (start, _) = loss_vmpo(&batch, &pi_k_tab, &pi_k_tab, 0.5).unwrap();
        let opt = OptimizerConfig { learning_rate: 0.02 };
        let (pol, report) =
            improve_regularized(&batch, &pi_k, 0.5, LossKind::Vmpo, opt, 500).unwrap();
        assert!(report.final_loss < start);
        let _ = pol;
    }

    #[test]
    fn suboptimality_gap_identity() {
        let mut rng = RngStream::new(80);
        let pk = ProbVec::new(vec![0.2, 0.5, 0.3]).unwrap();
        let q = [0.4, -0.2, 0.9];
        let u_star = psi_target(&pk, &q, 0.7).unwrap();
        let (gap, kl) = suboptimality_gap_check(&u_star, &pk, &q, 0.7).unwrap();
        assert!(gap.abs() < 1e-12 && kl.abs() < 1e-12);

        let (gap, kl) = suboptimality_gap_check(&pk, &pk, &q, 0.7).unwrap();
        assert!((gap - kl).abs() < 1e-12);
        assert!((kl - kl_divergence(&pk, &u_star).unwrap()).abs() < 1e-15);

        for _ in 0..1000 {
            let n = 2 + rng.index(4);
            let draw = |rng: &mut RngStream| {
                let raw: Vec<f64> = (0..n).map(|_| rng.uniform() + 1e-3).collect();
                let s: f64 = raw.iter().sum();
                ProbVec::new(raw.iter().map(|x| x / s).collect()).unwrap()
            };
            let pk = draw(&mut rng);
            let c = draw(&mut rng);
            let q: Vec<f64> = (0..n).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let eta = 0.05 + 2.0 * rng.uniform();
            let (gap, kl) = suboptimality_gap_check(&c, &pk, &q, eta).unwrap();
            assert!((gap - kl).abs() <= 1e-10, "gap {gap} vs kl {kl}");
        }
    }

    #[test]
    fn vmpo_and_surrogate_midpoint_convex_in_activations() {
        let mut rng = RngStream::new(90);
        for _ in 0..200 {
            let (batch, pi_k) = rand_batch(2, 3, &mut rng);
            let draw = |rng: &mut RngStream| {
                let logits: Vec<f64> = (0..6).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
                TabularSoftmaxPolicy::from_logits(2, 3, logits).unwrap()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let mid_params: Vec<f64> = a
                .params()
                .iter()
                .zip(b.params())
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            let mut mid = a.clone();
            mid.set_params(&mid_params).unwrap();
            for kind in [LossKind::Vmpo, LossKind::Surrogate] {
                let la = loss_and_grad(kind, &batch, &a, &pi_k, 0.6).unwrap().0;
                let lb = loss_and_grad(kind, &batch, &b, &pi_k, 0.6).unwrap().0;
                let lm = loss_and_grad(kind, &batch, &mid, &pi_k, 0.6).unwrap().0;
                assert!(lm <= 0.5 * (la + lb) + 1e-12, "{kind:?}: {lm} > avg of {la}, {lb}");
            }
        }
    }

    #[test]
    fn cpo_loss_nonconvexity_witness_in_restricted_parameterization() {
        // an under-complete log-linear policy (d < |A|) makes the expected
        // advantage non-convex in theta; record one violating midpoint pair
        let mut rng = RngStream::new(91);
        let batch = ImprovementBatch::all_actions(
            vec![State::Features(vec![1.0]), State::Features(vec![-1.0])],
            vec![vec![1.0, -0.2, 0.3], vec![-0.5, 0.8, 0.1]],
        )
        .unwrap();
        let mut found = false;
        for _ in 0..20_000 {
            let draw = |rng: &mut RngStream| {
                let theta: Vec<f64> = (0..3).map(|_| rng.uniform_in(-4.0, 4.0)).collect();
                LogLinearSoftmaxPolicy::from_theta(3, 1, theta).unwrap()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let mid_params: Vec<f64> = a
                .params()
                .iter()
                .zip(b.params())
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            let mut mid = a.clone();
            mid.set_params(&mid_params).unwrap();
            let la = loss_cpo(&batch, &a).unwrap().0;
            let lb = loss_cpo(&batch, &b).unwrap().0;
            let lm = loss_cpo(&batch, &mid).unwrap().0;
            if lm > 0.5 * (la + lb) + 1e-9 {
                found = true;
                break;
            }
        }
        assert!(found, "no midpoint-convexity violation found");
    }
}
