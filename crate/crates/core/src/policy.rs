//! Softmax policy representations: tabular, log-linear, and a small ReLU MLP.
//!
//! All three expose activations q_θ(x, ·) with a softmax head, a flat
//! parameter vector, and exact reverse-mode gradients from activation space
//! back to parameters. Optimizers and gradient checks only see the flat
//! vector, so they are representation-agnostic.
//!
//! Flat layouts:
//! - tabular: logits row-major, |X| × |A|
//! - log-linear: theta row-major, |A| × d (activations = theta · x)
//! - MLP: per layer, weights row-major (out × in) then biases (out);
//!   ReLU on hidden layers, linear output of size |A|

use crate::error::{Error, Result};
use crate::math::{softmax, kl_divergence, ProbVec};
use crate::rng::RngStream;
use std::io::{Read, Write};

/// A state as seen by a policy: an index for tabular policies, a feature
/// vector for parametric ones.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Index(usize),
    Features(Vec<f64>),
}

impl State {
    pub fn features(&self) -> Option<&[f64]> {
        match self {
            State::Features(f) => Some(f),
            State::Index(_) => None,
        }
    }
}

/// Which direction to average KL over states in [`empirical_kl`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlDirection {
    /// KL(A ‖ B): the constraint direction of the trust-region check.
    AFromB,
    /// KL(B ‖ A): the regularizer direction of the mirror-descent objective.
    BFromA,
}

/// Common surface of all softmax policy representations.
pub trait Policy {
    fn num_actions(&self) -> usize;
    fn param_len(&self) -> usize;
    fn params(&self) -> &[f64];
    fn set_params(&mut self, p: &[f64]) -> Result<()>;

    /// q_θ(x, ·), the pre-softmax activations.
    fn activations(&self, x: &State) -> Result<Vec<f64>>;

    /// Accumulates ∂L/∂params into `grad_out`, given ∂L/∂q = `g_q` at x.
    fn backprop_from_activation_grad(
        &self,
        x: &State,
        g_q: &[f64],
        grad_out: &mut [f64],
    ) -> Result<()>;

    fn action_dist(&self, x: &State) -> Result<ProbVec> {
        Ok(softmax(&self.activations(x)?))
    }

    fn sample_action(&self, x: &State, rng: &mut RngStream) -> Result<usize> {
        Ok(self.action_dist(x)?.sample(rng))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

/// Tabular softmax: one logits row per state.
#[derive(Debug, Clone)]
pub struct TabularSoftmaxPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    logits: Vec<f64>,
}

impl TabularSoftmaxPolicy {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        check_dim(n_states * n_actions, logits.len())?;
        Ok(Self {
            n_states,
            n_actions,
            logits,
        })
    }

    pub fn logits_row(&self, state: usize) -> &[f64] {
        &self.logits[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// Adds `step` elementwise to the logits of one state.
    pub fn add_to_row(&mut self, state: usize, step: &[f64]) -> Result<()> {
        check_dim(self.n_actions, step.len())?;
        let row = &mut self.logits[state * self.n_actions..(state + 1) * self.n_actions];
        for (l, s) in row.iter_mut().zip(step) {
            *l += s;
        }
        Ok(())
    }
}

impl Policy for TabularSoftmaxPolicy {
    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn param_len(&self) -> usize {
        self.logits.len()
    }

    fn params(&self) -> &[f64] {
        &self.logits
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.logits.len(), p.len())?;
        self.logits.copy_from_slice(p);
        Ok(())
    }

    fn activations(&self, x: &State) -> Result<Vec<f64>> {
        match x {
            State::Index(i) if *i < self.n_states => Ok(self.logits_row(*i).to_vec()),
            State::Index(i) => Err(Error::DimensionMismatch {
                expected: self.n_states,
                got: *i,
            }),
            State::Features(_) => Err(Error::InvalidArgument(
                "tabular policy expects a state index".into(),
            )),
        }
    }

    fn backprop_from_activation_grad(
        &self,
        x: &State,
        g_q: &[f64],
        grad_out: &mut [f64],
    ) -> Result<()> {
        check_dim(self.n_actions, g_q.len())?;
        check_dim(self.param_len(), grad_out.len())?;
        match x {
            State::Index(i) if *i < self.n_states => {
                let row = &mut grad_out[i * self.n_actions..(i + 1) * self.n_actions];
                for (g, &gq) in row.iter_mut().zip(g_q) {
                    *g += gq;
                }
                Ok(())
            }
            _ => Err(Error::InvalidArgument(
                "tabular policy expects a valid state index".into(),
            )),
        }
    }
}

/// Log-linear softmax: activations = theta · x, theta ∈ R^{|A| × d}.
#[derive(Debug, Clone)]
pub struct LogLinearSoftmaxPolicy {
    pub n_actions: usize,
    pub dim: usize,
    theta: Vec<f64>,
}

impl LogLinearSoftmaxPolicy {
    pub fn zeros(n_actions: usize, dim: usize) -> Self {
        Self {
            n_actions,
            dim,
            theta: vec![0.0; n_actions * dim],
        }
    }

    pub fn from_theta(n_actions: usize, dim: usize, theta: Vec<f64>) -> Result<Self> {
        check_dim(n_actions * dim, theta.len())?;
        Ok(Self {
            n_actions,
            dim,
            theta,
        })
    }
}

impl Policy for LogLinearSoftmaxPolicy {
    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn param_len(&self) -> usize {
        self.theta.len()
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.theta.len(), p.len())?;
        self.theta.copy_from_slice(p);
        Ok(())
    }

    fn activations(&self, x: &State) -> Result<Vec<f64>> {
        let f = x
            .features()
            .ok_or_else(|| Error::InvalidArgument("log-linear policy expects features".into()))?;
        check_dim(self.dim, f.len())?;
        let mut q = vec![0.0; self.n_actions];
        for a in 0..self.n_actions {
            let row = &self.theta[a * self.dim..(a + 1) * self.dim];
            q[a] = row.iter().zip(f).map(|(w, x)| w * x).sum();
        }
        Ok(q)
    }

    fn backprop_from_activation_grad(
        &self,
        x: &State,
        g_q: &[f64],
        grad_out: &mut [f64],
    ) -> Result<()> {
        check_dim(self.n_actions, g_q.len())?;
        check_dim(self.param_len(), grad_out.len())?;
        let f = x
            .features()
            .ok_or_else(|| Error::InvalidArgument("log-linear policy expects features".into()))?;
        check_dim(self.dim, f.len())?;
        // ∂(g_q · θx)/∂θ = g_q xᵀ
        for a in 0..self.n_actions {
            let row = &mut grad_out[a * self.dim..(a + 1) * self.dim];
            for (g, &xi) in row.iter_mut().zip(f) {
                *g += g_q[a] * xi;
            }
        }
        Ok(())
    }
}

/// Feed-forward softmax policy with ReLU hidden layers and a linear output
/// layer of size |A|.
#[derive(Debug, Clone)]
pub struct MlpSoftmaxPolicy {
    /// Layer widths, input first, |A| last.
    pub sizes: Vec<usize>,
    params: Vec<f64>,
}

impl MlpSoftmaxPolicy {
    /// Glorot-uniform weights, zero biases, drawn from the given stream.
    pub fn init(sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "MLP needs at least input and output sizes".into(),
            ));
        }
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.uniform_in(-bound, bound));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        let mut rng = RngStream::new(0);
        let mut p = Self::init(sizes, &mut rng)?;
        p.params.iter_mut().for_each(|v| *v = 0.0);
        Ok(p)
    }

    fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offset of layer l's weight block in the flat vector.
    fn layer_offset(&self, layer: usize) -> usize {
        let mut off = 0;
        for l in 0..layer {
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        off
    }

    /// Forward pass keeping every layer's post-activation output.
    fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        for l in 0..self.layer_count() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let prev = &acts[l];
            let mut out = vec![0.0; n_out];
            for j in 0..n_out {
                let row = &weights[j * n_in..(j + 1) * n_in];
                let z: f64 = biases[j] + row.iter().zip(prev).map(|(w, x)| w * x).sum::<f64>();
                // ReLU on hidden layers; subgradient at 0 is 0
                out[j] = if l + 1 < self.layer_count() {
                    z.max(0.0)
                } else {
                    z
                };
            }
            acts.push(out);
        }
        acts
    }
}

impl Policy for MlpSoftmaxPolicy {
    fn num_actions(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn param_len(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.params.len(), p.len())?;
        self.params.copy_from_slice(p);
        Ok(())
    }

    fn activations(&self, x: &State) -> Result<Vec<f64>> {
        let f = x
            .features()
            .ok_or_else(|| Error::InvalidArgument("MLP policy expects features".into()))?;
        check_dim(self.sizes[0], f.len())?;
        Ok(self.forward_cached(f).pop().unwrap())
    }

    fn backprop_from_activation_grad(
        &self,
        x: &State,
        g_q: &[f64],
        grad_out: &mut [f64],
    ) -> Result<()> {
        check_dim(self.num_actions(), g_q.len())?;
        check_dim(self.param_len(), grad_out.len())?;
        let f = x
            .features()
            .ok_or_else(|| Error::InvalidArgument("MLP policy expects features".into()))?;
        check_dim(self.sizes[0], f.len())?;
        let acts = self.forward_cached(f);
        let mut delta = g_q.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let prev = &acts[l];
            {
                let wgrad = &mut grad_out[off..off + n_in * n_out];
                for j in 0..n_out {
                    for i in 0..n_in {
                        wgrad[j * n_in + i] += delta[j] * prev[i];
                    }
                }
            }
            {
                let bgrad = &mut grad_out[off + n_in * n_out..off + n_in * n_out + n_out];
                for j in 0..n_out {
                    bgrad[j] += delta[j];
                }
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev_delta = vec![0.0; n_in];
                for i in 0..n_in {
                    let mut s = 0.0;
                    for j in 0..n_out {
                        s += weights[j * n_in + i] * delta[j];
                    }
                    // post-activation > 0 iff the ReLU passed its input through
                    prev_delta[i] = if acts[l][i] > 0.0 { s } else { 0.0 };
                }
                delta = prev_delta;
            }
        }
        Ok(())
    }
}

/// Any of the three representations behind one value type.
#[derive(Debug, Clone)]
pub enum SoftmaxPolicy {
    Tabular(TabularSoftmaxPolicy),
    LogLinear(LogLinearSoftmaxPolicy),
    Mlp(MlpSoftmaxPolicy),
}

impl SoftmaxPolicy {
    pub fn as_tabular(&self) -> Option<&TabularSoftmaxPolicy> {
        match self {
            SoftmaxPolicy::Tabular(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_tabular_mut(&mut self) -> Option<&mut TabularSoftmaxPolicy> {
        match self {
            SoftmaxPolicy::Tabular(t) => Some(t),
            _ => None,
        }
    }
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            SoftmaxPolicy::Tabular($p) => $body,
            SoftmaxPolicy::LogLinear($p) => $body,
            SoftmaxPolicy::Mlp($p) => $body,
        }
    };
}

impl Policy for SoftmaxPolicy {
    fn num_actions(&self) -> usize {
        dispatch!(self, p => p.num_actions())
    }
    fn param_len(&self) -> usize {
        dispatch!(self, p => p.param_len())
    }
    fn params(&self) -> &[f64] {
        dispatch!(self, p => p.params())
    }
    fn set_params(&mut self, v: &[f64]) -> Result<()> {
        dispatch!(self, p => p.set_params(v))
    }
    fn activations(&self, x: &State) -> Result<Vec<f64>> {
        dispatch!(self, p => p.activations(x))
    }
    fn backprop_from_activation_grad(
        &self,
        x: &State,
        g_q: &[f64],
        grad_out: &mut [f64],
    ) -> Result<()> {
        dispatch!(self, p => p.backprop_from_activation_grad(x, g_q, grad_out))
    }
}

/// Mean KL divergence between two policies' action distributions over a
/// state multiset, in the requested direction.
pub fn empirical_kl<PA: Policy, PB: Policy>(
    policy_a: &PA,
    policy_b: &PB,
    states: &[State],
    direction: KlDirection,
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptyInput("empirical_kl states"));
    }
    let mut total = 0.0;
    for x in states {
        let da = policy_a.action_dist(x)?;
        let db = policy_b.action_dist(x)?;
        total += match direction {
            KlDirection::AFromB => kl_divergence(&da, &db)?,
            KlDirection::BFromA => kl_divergence(&db, &da)?,
        };
    }
    Ok(total / states.len() as f64)
}

const KIND_TABULAR: u32 = 0;
const KIND_LOG_LINEAR: u32 = 1;
const KIND_MLP: u32 = 2;

/// Writes a policy snapshot: little-endian header (kind, dim count, dims)
/// followed by the flat parameter vector as little-endian f64.
pub fn write_policy<W: Write>(policy: &SoftmaxPolicy, w: &mut W) -> Result<()> {
    let (kind, dims): (u32, Vec<u32>) = match policy {
        SoftmaxPolicy::Tabular(t) => (KIND_TABULAR, vec![t.n_states as u32, t.n_actions as u32]),
        SoftmaxPolicy::LogLinear(l) => (KIND_LOG_LINEAR, vec![l.n_actions as u32, l.dim as u32]),
        SoftmaxPolicy::Mlp(m) => (KIND_MLP, m.sizes.iter().map(|&s| s as u32).collect()),
    };
    w.write_all(&kind.to_le_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in &dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for v in policy.params() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a snapshot written by [`write_policy`].
pub fn read_policy<R: Read>(r: &mut R) -> Result<SoftmaxPolicy> {
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let kind = read_u32(r)?;
    let ndims = read_u32(r)? as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(read_u32(r)? as usize);
    }
    let mut policy = match (kind, dims.as_slice()) {
        (KIND_TABULAR, [ns, na]) => SoftmaxPolicy::Tabular(TabularSoftmaxPolicy::zeros(*ns, *na)),
        (KIND_LOG_LINEAR, [na, d]) => {
            SoftmaxPolicy::LogLinear(LogLinearSoftmaxPolicy::zeros(*na, *d))
        }
        (KIND_MLP, sizes) if sizes.len() >= 2 => SoftmaxPolicy::Mlp(MlpSoftmaxPolicy::zeros(sizes)?),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "bad policy snapshot header: kind {kind}, dims {dims:?}"
            )))
        }
    };
    let mut params = vec![0.0; policy.param_len()];
    let mut f64buf = [0u8; 8];
    for v in params.iter_mut() {
        r.read_exact(&mut f64buf)?;
        *v = f64::from_le_bytes(f64buf);
    }
    policy.set_params(&params)?;
    Ok(policy)
}
