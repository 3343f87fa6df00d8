//! Monte-Carlo policy evaluation from a single trajectory.
//!
//! Both estimators average differential returns: partial sums of
//! (reward − Ĵ) started at each visit of (x, a) and truncated at the first
//! return to x (regenerative cycles), falling back to the trajectory end
//! for the final incomplete cycle. The cycle estimate converges to
//! Q(x,a) − V(x), the advantage, which is the only quantity the
//! improvement losses consume; for a single-state environment it reduces
//! to the per-step reward minus Ĵ, matching the bandit's empirical-mean
//! convention exactly.

use super::mdp::Trajectory;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Tabular-empirical estimates.
#[derive(Debug, Clone)]
pub struct TabularEval {
    pub n_states: usize,
    pub n_actions: usize,
    /// Empirical average reward Ĵ.
    pub j_hat: f64,
    /// Q̂(x, a): mean differential return over visits; 0 for unvisited pairs.
    pub q_hat: Vec<f64>,
}

impl TabularEval {
    pub fn q_row(&self, x: usize) -> &[f64] {
        &self.q_hat[x * self.n_actions..(x + 1) * self.n_actions]
    }
}

fn differential_returns(trajectory: &Trajectory) -> (f64, Vec<f64>) {
    let n = trajectory.len();
    let j_hat = trajectory.rewards.iter().sum::<f64>() / n as f64;
    // prefix[t] = sum over s < t of (r_s - j_hat)
    let mut prefix = vec![0.0; n + 1];
    for t in 0..n {
        prefix[t + 1] = prefix[t] + trajectory.rewards[t] - j_hat;
    }
    // next_visit[t]: first s > t with states[s] == states[t], else n
    let max_state = trajectory.states.iter().copied().max().unwrap_or(0);
    let mut seen = vec![n; max_state + 1];
    let mut returns = vec![0.0; n];
    for t in (0..n).rev() {
        let x = trajectory.states[t];
        returns[t] = prefix[seen[x]] - prefix[t];
        seen[x] = t;
    }
    (j_hat, returns)
}

/// Empirical-mean evaluation over state-action visits.
pub fn tabular_policy_eval(
    trajectory: &Trajectory,
    n_states: usize,
    n_actions: usize,
) -> Result<TabularEval> {
    if trajectory.is_empty() {
        return Err(Error::EmptyInput("trajectory"));
    }
    let (j_hat, returns) = differential_returns(trajectory);
    let mut sums = vec![0.0; n_states * n_actions];
    let mut counts = vec![0usize; n_states * n_actions];
    for t in 0..trajectory.len() {
        let idx = trajectory.states[t] * n_actions + trajectory.actions[t];
        sums[idx] += returns[t];
        counts[idx] += 1;
    }
    let q_hat = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(TabularEval {
        n_states,
        n_actions,
        j_hat,
        q_hat,
    })
}

/// A linear action-value model: Q̂(x, a) = w_a · φ(x).
#[derive(Debug, Clone)]
pub struct LinearQ {
    pub n_actions: usize,
    pub dim: usize,
    /// Per-action weight rows, [a][i] flattened.
    pub weights: Vec<f64>,
}

impl LinearQ {
    pub fn eval(&self, features: &[f64], action: usize) -> f64 {
        let row = &self.weights[action * self.dim..(action + 1) * self.dim];
        row.iter().zip(features).map(|(w, x)| w * x).sum()
    }

    pub fn eval_row(&self, features: &[f64]) -> Vec<f64> {
        (0..self.n_actions).map(|a| self.eval(features, a)).collect()
    }
}

/// Ridge least squares of per-step targets on features, fit independently
/// per action. A warm start seeds weights of actions without data; actions
/// with data are refit from scratch (the ridge solution is unique).
pub fn ridge_fit_per_action(
    features: &[Vec<f64>],
    actions: &[usize],
    targets: &[f64],
    n_actions: usize,
    warm_start: Option<&LinearQ>,
) -> Result<LinearQ> {
    if features.is_empty() {
        return Err(Error::EmptyInput("regression data"));
    }
    let dim = features[0].len();
    let ridge = 1e-8;
    let mut weights = match warm_start {
        Some(w) if w.dim == dim && w.n_actions == n_actions => w.weights.clone(),
        _ => vec![0.0; n_actions * dim],
    };
    for a in 0..n_actions {
        let rows: Vec<usize> = (0..features.len()).filter(|&t| actions[t] == a).collect();
        if rows.is_empty() {
            continue;
        }
        let mut gram = DMatrix::from_element(dim, dim, 0.0);
        let mut moment = DVector::zeros(dim);
        for &t in &rows {
            let f = &features[t];
            for i in 0..dim {
                moment[i] += f[i] * targets[t];
                for j in 0..dim {
                    gram[(i, j)] += f[i] * f[j];
                }
            }
        }
        for i in 0..dim {
            gram[(i, i)] += ridge;
        }
        let sol = gram
            .lu()
            .solve(&moment)
            .ok_or_else(|| Error::InvalidArgument("singular least-squares system".into()))?;
        weights[a * dim..(a + 1) * dim].copy_from_slice(sol.as_slice());
    }
    Ok(LinearQ {
        n_actions,
        dim,
        weights,
    })
}

/// Ridge least squares of differential returns on state features.
pub fn ls_policy_eval<F: Fn(usize) -> Vec<f64>>(
    trajectory: &Trajectory,
    featurize: F,
    n_actions: usize,
    warm_start: Option<&LinearQ>,
) -> Result<LinearQ> {
    if trajectory.is_empty() {
        return Err(Error::EmptyInput("trajectory"));
    }
    let (_, returns) = differential_returns(trajectory);
    let features: Vec<Vec<f64>> = trajectory.states.iter().map(|&x| featurize(x)).collect();
    ridge_fit_per_action(&features, &trajectory.actions, &returns, n_actions, warm_start)
}
