//! Finite average-reward MDPs with exact solvers.
//!
//! `solve_policy` computes the stationary distribution, average reward, and
//! value functions of a fixed policy from the evaluation equation; it is the
//! oracle every Monte-Carlo estimator in this crate is checked against.
//! `solve_optimal` runs relative value iteration with span-seminorm stopping.
//! Both apply the (I + P)/2 aperiodicity transform so periodic chains (e.g.
//! deterministic cycles) converge too; the transform leaves stationary
//! distributions and average rewards unchanged.

use crate::error::{Error, Result};
use crate::math::ProbVec;
use crate::rng::RngStream;
use nalgebra::{DMatrix, DVector};

/// A finite MDP: row-stochastic transition tensor and rewards in [0, 1].
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// P(x' | x, a), indexed [x][a][x'] flattened.
    transitions: Vec<f64>,
    /// r(x, a), indexed [x][a] flattened.
    rewards: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        if transitions.len() != n_states * n_actions * n_states {
            return Err(Error::DimensionMismatch {
                expected: n_states * n_actions * n_states,
                got: transitions.len(),
            });
        }
        if rewards.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                expected: n_states * n_actions,
                got: rewards.len(),
            });
        }
        if rewards.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::InvalidArgument(
                "rewards must lie in [0, 1]".into(),
            ));
        }
        let mdp = Self {
            n_states,
            n_actions,
            transitions,
            rewards,
        };
        for x in 0..n_states {
            for a in 0..n_actions {
                let row = mdp.transition_row(x, a);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "P(.|{x}, {a}) is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        Ok(mdp)
    }

    pub fn transition_row(&self, x: usize, a: usize) -> &[f64] {
        let base = (x * self.n_actions + a) * self.n_states;
        &self.transitions[base..base + self.n_states]
    }

    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.rewards[x * self.n_actions + a]
    }

    /// Samples x' ~ P(· | x, a).
    pub fn step(&self, x: usize, a: usize, rng: &mut RngStream) -> usize {
        let row = self.transition_row(x, a);
        let u = rng.uniform();
        let mut acc = 0.0;
        for (i, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.n_states - 1
    }

    /// Parses the plain-text format: `|X| |A|`, then r entries row-major,
    /// then P entries in (x, a, x') order, all whitespace-separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| -> Result<&str> {
            tokens
                .next()
                .ok_or_else(|| Error::InvalidArgument(format!("mdp file truncated at {what}")))
        };
        let n_states: usize = next("|X|")?
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("bad |X|: {e}")))?;
        let n_actions: usize = next("|A|")?
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("bad |A|: {e}")))?;
        let mut rewards = Vec::with_capacity(n_states * n_actions);
        for i in 0..n_states * n_actions {
            rewards.push(
                next("rewards")?
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("bad reward {i}: {e}")))?,
            );
        }
        let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
        for i in 0..n_states * n_actions * n_states {
            transitions.push(
                next("transitions")?
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("bad transition {i}: {e}")))?,
            );
        }
        Self::new(n_states, n_actions, transitions, rewards)
    }

    /// Serializes in the format accepted by [`TabularMdp::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n_states, self.n_actions);
        for x in 0..self.n_states {
            let row: Vec<String> = (0..self.n_actions)
                .map(|a| format!("{}", self.reward(x, a)))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                let row: Vec<String> = self
                    .transition_row(x, a)
                    .iter()
                    .map(|p| format!("{p}"))
                    .collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

/// Exact quantities of a fixed policy on a fixed MDP.
#[derive(Debug, Clone)]
pub struct StationaryAnalysis {
    /// Stationary state distribution μ_π.
    pub mu: Vec<f64>,
    /// Stationary state-action distribution ν_π = μ_π ⊗ π.
    pub nu: Vec<f64>,
    /// Average reward J_π.
    pub j: f64,
    /// Action values, [x][a] flattened, normalized so ⟨μ, V⟩ = 0.
    pub q: Vec<f64>,
    /// State values V_π.
    pub v: Vec<f64>,
    /// Advantages A_π = Q_π − V_π, [x][a] flattened.
    pub adv: Vec<f64>,
}

impl StationaryAnalysis {
    pub fn q_row(&self, x: usize) -> &[f64] {
        let na = self.q.len() / self.v.len();
        &self.q[x * na..(x + 1) * na]
    }

    pub fn adv_row(&self, x: usize) -> &[f64] {
        let na = self.adv.len() / self.v.len();
        &self.adv[x * na..(x + 1) * na]
    }
}

const POWER_ITER_BUDGET: usize = 2_000_000;

fn stationary_distribution(p_pi: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p_pi.nrows();
    let mut mu = DVector::from_element(n, 1.0 / n as f64);
    // power iteration on (I + P)/2: same fixed point, aperiodic
    for _ in 0..POWER_ITER_BUDGET {
        let next = 0.5 * (&mu.transpose() * p_pi).transpose() + 0.5 * &mu;
        let diff: f64 = (&next - &mu).abs().sum();
        mu = next;
        let norm: f64 = mu.sum();
        mu /= norm;
        if diff <= 1e-14 {
            let residual: f64 = ((&mu.transpose() * p_pi).transpose() - &mu).abs().sum();
            if residual > 1e-9 {
                break;
            }
            return Ok(mu.iter().cloned().collect());
        }
    }
    Err(Error::IterationBudget(
        "stationary distribution power iteration did not converge; chain may not be unichain"
            .into(),
    ))
}

/// Solves the average-reward evaluation equation for a fixed policy.
///
/// `pi` gives the action distribution per state. The returned values satisfy
/// Q(x,a) = r(x,a) − J + Σ_x' P(x'|x,a) V(x') with ⟨μ, V⟩ = 0.
pub fn solve_policy(mdp: &TabularMdp, pi: &[ProbVec]) -> Result<StationaryAnalysis> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    if pi.len() != ns {
        return Err(Error::DimensionMismatch {
            expected: ns,
            got: pi.len(),
        });
    }
    let mut p_pi = DMatrix::zeros(ns, ns);
    let mut r_pi = DVector::zeros(ns);
    for x in 0..ns {
        if pi[x].len() != na {
            return Err(Error::DimensionMismatch {
                expected: na,
                got: pi[x].len(),
            });
        }
        for a in 0..na {
            let w = pi[x][a];
            r_pi[x] += w * mdp.reward(x, a);
            for (xp, &p) in mdp.transition_row(x, a).iter().enumerate() {
                p_pi[(x, xp)] += w * p;
            }
        }
    }
    let mu = stationary_distribution(&p_pi)?;
    let mu_vec = DVector::from_column_slice(&mu);
    let j: f64 = mu_vec.dot(&r_pi);

    // (I − P_π + 1 μᵀ) V = r_π − J 1 pins the ⟨μ, V⟩ = 0 solution
    let ones = DVector::from_element(ns, 1.0);
    let system = DMatrix::identity(ns, ns) - &p_pi + &ones * mu_vec.transpose();
    let rhs = &r_pi - j * &ones;
    let v = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("singular evaluation system".into()))?;
    let shift = mu_vec.dot(&v);
    let v: Vec<f64> = v.iter().map(|x| x - shift).collect();

    let mut q = vec![0.0; ns * na];
    let mut adv = vec![0.0; ns * na];
    let mut nu = vec![0.0; ns * na];
    for x in 0..ns {
        for a in 0..na {
            let qa = mdp.reward(x, a) - j
                + mdp
                    .transition_row(x, a)
                    .iter()
                    .zip(&v)
                    .map(|(p, vx)| p * vx)
                    .sum::<f64>();
            q[x * na + a] = qa;
            adv[x * na + a] = qa - v[x];
            nu[x * na + a] = mu[x] * pi[x][a];
        }
    }
    Ok(StationaryAnalysis {
        mu,
        nu,
        j,
        q,
        v,
        adv,
    })
}

const RVI_BUDGET: usize = 2_000_000;

/// Relative value iteration: returns (J*, greedy deterministic policy).
pub fn solve_optimal(mdp: &TabularMdp) -> Result<(f64, Vec<usize>)> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let bellman = |h: &[f64]| -> Vec<f64> {
        (0..ns)
            .map(|x| {
                (0..na)
                    .map(|a| {
                        mdp.reward(x, a)
                            + mdp
                                .transition_row(x, a)
                                .iter()
                                .zip(h)
                                .map(|(p, hx)| p * hx)
                                .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    let mut h = vec![0.0; ns];
    for _ in 0..RVI_BUDGET {
        let th = bellman(&h);
        let g: Vec<f64> = th.iter().zip(&h).map(|(t, hx)| t - hx).collect();
        let (gmin, gmax) = g
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        if gmax - gmin <= 1e-10 {
            let j_star = 0.5 * (gmax + gmin);
            let greedy = (0..ns)
                .map(|x| {
                    (0..na)
                        .map(|a| {
                            (
                                a,
                                mdp.reward(x, a)
                                    + mdp
                                        .transition_row(x, a)
                                        .iter()
                                        .zip(&h)
                                        .map(|(p, hx)| p * hx)
                                        .sum::<f64>(),
                            )
                        })
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .unwrap()
                        .0
                })
                .collect();
            return Ok((j_star, greedy));
        }
        // damped update with the first state's gain subtracted keeps h bounded
        let anchor = th[0] - h[0];
        for x in 0..ns {
            h[x] = 0.5 * h[x] + 0.5 * (th[x] - anchor);
        }
    }
    Err(Error::IterationBudget(
        "relative value iteration did not reach the span tolerance".into(),
    ))
}

/// An ordered record of τ environment steps.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, x: usize, a: usize, r: f64, xp: usize) {
        self.states.push(x);
        self.actions.push(a);
        self.rewards.push(r);
        self.next_states.push(xp);
    }
}
