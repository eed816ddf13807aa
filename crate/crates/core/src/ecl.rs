//! Energy-based contrastive objective.
//!
//! A three-layer GCN encoder and a two-layer projector map each subgraph view
//! to a pooled vector `z`. The energy of a view pair is
//! `E(v, v') = ||z - z'||^2 / tau`. Training combines:
//!
//! - a discriminative term: for every anchor view, the positive's Boltzmann
//!   weight against the batch's other-pair views,
//! - a generative term: a contrastive-divergence surrogate `E+ - E-` whose
//!   negative phase comes from SGLD samples in feature space,
//! - a regularizer: the mean squared cross-pair energy, damping energy
//!   magnitudes.
//!
//! All losses are built on a [`Tape`], so one backward pass yields exact
//! parameter gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diff::{DiffError, ParamStore, Tape, Value};
use crate::math;
use crate::matrix::Matrix;
use crate::sampler::ViewBatch;
use crate::seeds;

#[derive(Debug, thiserror::Error)]
pub enum EclError {
    #[error("temperature must be positive, got {0}")]
    BadTau(f64),
    #[error("invalid hyperparameters: {0}")]
    BadHyper(&'static str),
    #[error("batch must contain at least {needed} pairs, got {got}")]
    BatchTooSmall { got: usize, needed: usize },
    #[error("SGLD diverged at step {step}: {source}")]
    Sgld { step: usize, source: DiffError },
    #[error("generative term needs SGLD samples when alpha != 0")]
    MissingSamples,
    #[error("got {got} SGLD samples for a batch of {want}")]
    SampleCount { got: usize, want: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Layer widths of the encoder/projector stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EclDims {
    /// Input feature width `D + D_s`.
    pub input: usize,
    /// GCN hidden and output width.
    pub hidden: usize,
    /// Projector output width.
    pub proj: usize,
}

impl EclDims {
    pub fn new(input: usize) -> Self {
        EclDims { input, hidden: 128, proj: 128 }
    }
}

/// Names and shapes of the encoder + projector parameters inside a store.
#[derive(Clone, Debug)]
pub struct EclParams {
    pub dims: EclDims,
    prefix: String,
}

/// Tape handles for one forward pass over the ECL parameters.
pub struct EclHandles {
    enc_w1: Value,
    enc_w2: Value,
    enc_w3: Value,
    proj_w1: Value,
    proj_b1: Value,
    proj_w2: Value,
    proj_b2: Value,
}

impl EclParams {
    /// Register glorot-initialized parameters under `prefix` in the store.
    pub fn init(store: &mut ParamStore, prefix: &str, dims: EclDims, seed: u64) -> Result<Self, DiffError> {
        let params = EclParams { dims, prefix: String::from(prefix) };
        let rng_for = |tag: u64| seeds::rng(seeds::child(seed, tag));
        store.insert(&params.name("enc.w1"), Matrix::glorot(dims.input, dims.hidden, &mut rng_for(0)))?;
        store.insert(&params.name("enc.w2"), Matrix::glorot(dims.hidden, dims.hidden, &mut rng_for(1)))?;
        store.insert(&params.name("enc.w3"), Matrix::glorot(dims.hidden, dims.hidden, &mut rng_for(2)))?;
        store.insert(&params.name("proj.w1"), Matrix::glorot(dims.hidden, dims.hidden, &mut rng_for(3)))?;
        store.insert(&params.name("proj.b1"), Matrix::zeros(1, dims.hidden))?;
        store.insert(&params.name("proj.w2"), Matrix::glorot(dims.hidden, dims.proj, &mut rng_for(4)))?;
        store.insert(&params.name("proj.b2"), Matrix::zeros(1, dims.proj))?;
        Ok(params)
    }

    /// Describe parameters that already exist in a store (e.g. loaded from a
    /// checkpoint).
    pub fn attach(prefix: &str, dims: EclDims) -> Self {
        EclParams { dims, prefix: String::from(prefix) }
    }

    pub fn name(&self, suffix: &str) -> String {
        format!("{}.{}", self.prefix, suffix)
    }

    pub fn param_names(&self) -> Vec<String> {
        ["enc.w1", "enc.w2", "enc.w3", "proj.w1", "proj.b1", "proj.w2", "proj.b2"]
            .iter()
            .map(|s| self.name(s))
            .collect()
    }

    /// Bind as differentiable parameters.
    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<EclHandles, DiffError> {
        Ok(EclHandles {
            enc_w1: tape.param(store, &self.name("enc.w1"))?,
            enc_w2: tape.param(store, &self.name("enc.w2"))?,
            enc_w3: tape.param(store, &self.name("enc.w3"))?,
            proj_w1: tape.param(store, &self.name("proj.w1"))?,
            proj_b1: tape.param(store, &self.name("proj.b1"))?,
            proj_w2: tape.param(store, &self.name("proj.w2"))?,
            proj_b2: tape.param(store, &self.name("proj.b2"))?,
        })
    }

    /// Bind as constants (no gradients), for SGLD chains and evaluation.
    pub fn bind_frozen(&self, tape: &mut Tape, store: &ParamStore) -> Result<EclHandles, DiffError> {
        let get = |store: &ParamStore, name: &str| -> Result<Matrix, DiffError> {
            store.get(name).cloned().ok_or_else(|| DiffError::UnknownParam(String::from(name)))
        };
        Ok(EclHandles {
            enc_w1: tape.constant(get(store, &self.name("enc.w1"))?)?,
            enc_w2: tape.constant(get(store, &self.name("enc.w2"))?)?,
            enc_w3: tape.constant(get(store, &self.name("enc.w3"))?)?,
            proj_w1: tape.constant(get(store, &self.name("proj.w1"))?)?,
            proj_b1: tape.constant(get(store, &self.name("proj.b1"))?)?,
            proj_w2: tape.constant(get(store, &self.name("proj.w2"))?)?,
            proj_b2: tape.constant(get(store, &self.name("proj.b2"))?)?,
        })
    }
}

/// Loss weights and SGLD settings.
#[derive(Clone, Copy, Debug)]
pub struct EclHyper {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub k_steps: usize,
}

impl Default for EclHyper {
    fn default() -> Self {
        EclHyper { tau: 0.1, alpha: 0.1, beta: 0.01, lambda: 0.01, k_steps: 3 }
    }
}

impl EclHyper {
    pub fn validate(&self) -> Result<(), EclError> {
        if !(self.tau > 0.0) {
            return Err(EclError::BadTau(self.tau));
        }
        if !(self.alpha >= 0.0) {
            return Err(EclError::BadHyper("alpha must be nonnegative"));
        }
        if !(self.beta >= 0.0) {
            return Err(EclError::BadHyper("beta must be nonnegative"));
        }
        if !(self.lambda > 0.0) {
            return Err(EclError::BadHyper("lambda must be positive"));
        }
        Ok(())
    }

    /// `d + alpha * g + beta * r` — the scalar combination rule.
    pub fn combine(&self, d: f64, g: f64, r: f64) -> f64 {
        d + self.alpha * g + self.beta * r
    }
}

/// Pooled view embeddings of a batch: row `n` of `z_a` / `z_b` is the first /
/// second view of pair `n`.
#[derive(Clone, Copy, Debug)]
pub struct BatchEmbeddings {
    pub z_a: Value,
    pub z_b: Value,
}

/// Three-layer GCN: `A ( relu(A relu(A x W1) W2) ) W3`, no normalization
/// layers anywhere (they would break the SGLD chain).
pub fn encode(tape: &mut Tape, h: &EclHandles, adj: Value, x: Value) -> Result<Value, DiffError> {
    let xw = tape.matmul(x, h.enc_w1)?;
    let l1 = tape.matmul(adj, xw)?;
    let l1 = tape.relu(l1)?;
    let hw = tape.matmul(l1, h.enc_w2)?;
    let l2 = tape.matmul(adj, hw)?;
    let l2 = tape.relu(l2)?;
    let hw = tape.matmul(l2, h.enc_w3)?;
    tape.matmul(adj, hw)
}

/// Projector (affine, relu, affine) applied per node row, then mean-pooled
/// into a single `1 x F` view vector.
pub fn project_pool(tape: &mut Tape, h: &EclHandles, z_nodes: Value) -> Result<Value, DiffError> {
    let p = tape.matmul(z_nodes, h.proj_w1)?;
    let p = tape.add_row_broadcast(p, h.proj_b1)?;
    let p = tape.relu(p)?;
    let p = tape.matmul(p, h.proj_w2)?;
    let p = tape.add_row_broadcast(p, h.proj_b2)?;
    tape.mean_pool_rows(p)
}

/// `project_pool(encode(...))`: one subgraph view to its pooled vector.
pub fn pooled_view(tape: &mut Tape, h: &EclHandles, adj: Value, x: Value) -> Result<Value, DiffError> {
    let z = encode(tape, h, adj, x)?;
    project_pool(tape, h, z)
}

/// `||z - z'||^2 / tau` for two `1 x F` vectors.
pub fn pair_energy(tape: &mut Tape, z: Value, z_prime: Value, tau: f64) -> Result<Value, EclError> {
    if !(tau > 0.0) {
        return Err(EclError::BadTau(tau));
    }
    let d = tape.sub(z, z_prime)?;
    let sq = tape.square(d)?;
    let s = tape.sum(sq)?;
    Ok(tape.scale(s, 1.0 / tau)?)
}

/// Encode and pool both views of every pair in the batch.
pub fn embed_batch(
    tape: &mut Tape,
    h: &EclHandles,
    batch: &ViewBatch<'_>,
) -> Result<BatchEmbeddings, EclError> {
    if batch.len() < 2 {
        return Err(EclError::BatchTooSmall { got: batch.len(), needed: 2 });
    }
    let mut za = Vec::with_capacity(batch.len());
    let mut zb = Vec::with_capacity(batch.len());
    for (sg, pair) in batch.iter() {
        let adj = tape.constant(sg.local_adj.clone())?;
        let xa = tape.constant(pair.view_a.clone())?;
        let xb = tape.constant(pair.view_b.clone())?;
        za.push(pooled_view(tape, h, adj, xa)?);
        zb.push(pooled_view(tape, h, adj, xb)?);
    }
    Ok(BatchEmbeddings { z_a: tape.concat_rows(&za)?, z_b: tape.concat_rows(&zb)? })
}

/// Per-view energy matrix `E_ij = ||x_i - x_j||^2 / tau` of all 2N stacked
/// views (`z_a` rows first, then `z_b` rows).
fn stacked_energies(tape: &mut Tape, emb: &BatchEmbeddings, tau: f64) -> Result<(Value, usize), EclError> {
    if !(tau > 0.0) {
        return Err(EclError::BadTau(tau));
    }
    let n = tape.value(emb.z_a).rows();
    let stacked = tape.concat_rows(&[emb.z_a, emb.z_b])?;
    let d = tape.pairwise_sqdist(stacked, stacked)?;
    Ok((tape.scale(d, 1.0 / tau)?, n))
}

/// InfoNCE-style contrast in energy form: every one of the 2N views anchors
/// once; its positive is the partner view, its 2(N-1) negatives are all views
/// of other pairs. Per anchor the loss is
/// `E_pos + log[(1/(2N)) * sum_neg exp(-E_neg)]`, averaged over anchors.
pub fn discriminative_loss(tape: &mut Tape, emb: &BatchEmbeddings, tau: f64) -> Result<Value, EclError> {
    let (e, n) = stacked_energies(tape, emb, tau)?;
    if n < 2 {
        return Err(EclError::BatchTooSmall { got: n, needed: 2 });
    }
    let two_n = 2 * n;
    let pos_mask = Matrix::from_fn(two_n, two_n, |i, j| if (i + n) % two_n == j { 1.0 } else { 0.0 });
    let neg_mask = Matrix::from_fn(two_n, two_n, |i, j| if i % n == j % n { 0.0 } else { 1.0 });

    let pos_mask_v = tape.constant(pos_mask)?;
    let masked_pos = tape.mul_elem(e, pos_mask_v)?;
    let e_pos = tape.sum_rows(masked_pos)?;

    let neg_e = tape.neg(e)?;
    let lse = tape.masked_row_logsumexp(neg_e, &neg_mask)?;

    let per_anchor = tape.add(e_pos, lse)?;
    let per_anchor = tape.add_scalar(per_anchor, -math::log(two_n as f64))?;
    Ok(tape.mean(per_anchor)?)
}

/// Marginal energy of a batch under the EBM: `-log sum_n exp(-E(z_n, z'_n))`
/// over row-aligned pairs, computed overflow-safe.
pub fn batch_marginal_energy(tape: &mut Tape, z_a: Value, z_b: Value, tau: f64) -> Result<Value, EclError> {
    if !(tau > 0.0) {
        return Err(EclError::BadTau(tau));
    }
    let d = tape.sub(z_a, z_b)?;
    let sq = tape.square(d)?;
    let row_e = tape.sum_rows(sq)?;
    let row_e = tape.scale(row_e, 1.0 / tau)?;
    let neg = tape.neg(row_e)?;
    let lse = tape.logsumexp(neg)?;
    Ok(tape.neg(lse)?)
}

/// Mean squared cross-pair energy `(1/(2N)) sum_{n != m} E(z_n, z'_m)^2`.
pub fn regularization_loss(tape: &mut Tape, emb: &BatchEmbeddings, tau: f64) -> Result<Value, EclError> {
    if !(tau > 0.0) {
        return Err(EclError::BadTau(tau));
    }
    let n = tape.value(emb.z_a).rows();
    if n < 2 {
        return Err(EclError::BatchTooSmall { got: n, needed: 2 });
    }
    let d = tape.pairwise_sqdist(emb.z_a, emb.z_b)?;
    let e = tape.scale(d, 1.0 / tau)?;
    let sq = tape.square(e)?;
    let off_diag = tape.zero_diag(sq)?;
    let total = tape.sum(off_diag)?;
    Ok(tape.scale(total, 1.0 / (2.0 * n as f64))?)
}

/// Contrastive-divergence surrogate `E+ - E-` from already-pooled rows: the
/// positive phase pairs `z_a` with `z_b`, the negative phase pairs the SGLD
/// sample embeddings `z_s` with the same `z_b`.
pub fn generative_term(
    tape: &mut Tape,
    z_a: Value,
    z_b: Value,
    z_s: Value,
    tau: f64,
) -> Result<Value, EclError> {
    let e_plus = batch_marginal_energy(tape, z_a, z_b, tau)?;
    let e_minus = batch_marginal_energy(tape, z_s, z_b, tau)?;
    Ok(tape.sub(e_plus, e_minus)?)
}

/// Generative loss over a batch: embeds `view_a`, `view_b`, and the SGLD
/// samples (as constants) with the current parameters, then applies
/// [`generative_term`]. Differentiable in the parameters only.
pub fn generative_loss(
    tape: &mut Tape,
    h: &EclHandles,
    batch: &ViewBatch<'_>,
    nu_star: &[Matrix],
    tau: f64,
) -> Result<Value, EclError> {
    if nu_star.len() != batch.len() {
        return Err(EclError::SampleCount { got: nu_star.len(), want: batch.len() });
    }
    let emb = embed_batch(tape, h, batch)?;
    let z_s = embed_samples(tape, h, batch, nu_star)?;
    generative_term(tape, emb.z_a, emb.z_b, z_s, tau)
}

fn embed_samples(
    tape: &mut Tape,
    h: &EclHandles,
    batch: &ViewBatch<'_>,
    nu_star: &[Matrix],
) -> Result<Value, EclError> {
    let mut zs = Vec::with_capacity(nu_star.len());
    for (idx, sample) in nu_star.iter().enumerate() {
        let sg = batch.subgraph(idx);
        let adj = tape.constant(sg.local_adj.clone())?;
        let x = tape.constant(sample.clone())?;
        zs.push(pooled_view(tape, h, adj, x)?);
    }
    Ok(tape.concat_rows(&zs)?)
}

/// Energies along an SGLD chain: `energies[k]` is the batch marginal energy
/// of the particles entering step `k` (so `energies[0]` is the initial state
/// and the last entry is the final state).
pub struct SgldTrace {
    pub samples: Vec<Matrix>,
    pub energies: Vec<f64>,
}

/// Langevin sampling in feature space with a test hook scaling all noise
/// (1 for real sampling, 0 for deterministic gradient descent).
pub fn sgld_sample_traced(
    store: &ParamStore,
    params: &EclParams,
    batch: &ViewBatch<'_>,
    hyper: &EclHyper,
    seed: u64,
    noise_scale: f64,
) -> Result<SgldTrace, EclError> {
    hyper.validate()?;
    let std = math::sqrt(hyper.lambda) * noise_scale;

    // Fixed negatives-side targets: pooled view_b under current parameters.
    let z_b = {
        let mut tape = Tape::new();
        let h = params.bind_frozen(&mut tape, store)?;
        let mut rows = Vec::with_capacity(batch.len());
        for (sg, pair) in batch.iter() {
            let adj = tape.constant(sg.local_adj.clone())?;
            let xb = tape.constant(pair.view_b.clone())?;
            rows.push(pooled_view(&mut tape, &h, adj, xb)?);
        }
        let all = tape.concat_rows(&rows)?;
        tape.value(all).clone()
    };

    let mut particles: Vec<Matrix> = Vec::with_capacity(batch.len());
    for (idx, (_, pair)) in batch.iter().enumerate() {
        let mut rng = seeds::rng(seeds::mix(seed, &[0, idx as u64]));
        let (r, c) = pair.view_a.shape();
        let noise = Matrix::normal(r, c, 0.0, std, &mut rng);
        particles.push(pair.view_a.zip_map(&noise, |x, n| x + n));
    }

    let mut energies = Vec::with_capacity(hyper.k_steps + 1);
    let step_err = |step: usize| move |source: EclError| match source {
        EclError::Diff(d) => EclError::Sgld { step, source: d },
        other => other,
    };
    for k in 0..hyper.k_steps {
        let mut tape = Tape::new();
        let h = params.bind_frozen(&mut tape, store).map_err(|e| EclError::Sgld { step: k, source: e })?;
        let mut inputs = Vec::with_capacity(particles.len());
        let mut zs = Vec::with_capacity(particles.len());
        for (idx, particle) in particles.iter().enumerate() {
            let sg = batch.subgraph(idx);
            let adj = tape.constant(sg.local_adj.clone()).map_err(|e| EclError::Sgld { step: k, source: e })?;
            let x = tape.input(particle.clone()).map_err(|e| EclError::Sgld { step: k, source: e })?;
            inputs.push(x);
            zs.push(pooled_view(&mut tape, &h, adj, x).map_err(|e| EclError::Sgld { step: k, source: e })?);
        }
        let z_s = tape.concat_rows(&zs).map_err(|e| EclError::Sgld { step: k, source: e })?;
        let z_b_const = tape.constant(z_b.clone()).map_err(|e| EclError::Sgld { step: k, source: e })?;
        let energy = batch_marginal_energy(&mut tape, z_s, z_b_const, hyper.tau).map_err(step_err(k))?;
        energies.push(tape.scalar(energy)?);
        tape.backward(energy).map_err(|e| EclError::Sgld { step: k, source: e })?;

        for (idx, particle) in particles.iter_mut().enumerate() {
            let grad = tape.grad(inputs[idx]).cloned().unwrap_or_else(|| {
                Matrix::zeros(particle.rows(), particle.cols())
            });
            let mut rng = seeds::rng(seeds::mix(seed, &[1 + k as u64, idx as u64]));
            let (r, c) = particle.shape();
            let omega = Matrix::normal(r, c, 0.0, std, &mut rng);
            for ((p, &g), &w) in particle.data_mut().iter_mut().zip(grad.data()).zip(omega.data()) {
                *p = *p - 0.5 * hyper.lambda * g + w;
            }
            if !particle.all_finite() {
                return Err(EclError::Sgld { step: k, source: DiffError::NonFinite { op: "sgld_update" } });
            }
        }
    }

    // Energy of the final state.
    let final_energy = {
        let mut tape = Tape::new();
        let h = params.bind_frozen(&mut tape, store).map_err(|e| EclError::Sgld { step: hyper.k_steps, source: e })?;
        let mut zs = Vec::with_capacity(particles.len());
        for (idx, particle) in particles.iter().enumerate() {
            let sg = batch.subgraph(idx);
            let adj = tape.constant(sg.local_adj.clone()).map_err(|e| EclError::Sgld { step: hyper.k_steps, source: e })?;
            let x = tape.constant(particle.clone()).map_err(|e| EclError::Sgld { step: hyper.k_steps, source: e })?;
            zs.push(pooled_view(&mut tape, &h, adj, x).map_err(|e| EclError::Sgld { step: hyper.k_steps, source: e })?);
        }
        let z_s = tape.concat_rows(&zs).map_err(|e| EclError::Sgld { step: hyper.k_steps, source: e })?;
        let z_b_const = tape.constant(z_b).map_err(|e| EclError::Sgld { step: hyper.k_steps, source: e })?;
        let energy = batch_marginal_energy(&mut tape, z_s, z_b_const, hyper.tau).map_err(step_err(hyper.k_steps))?;
        tape.scalar(energy)?
    };
    energies.push(final_energy);

    Ok(SgldTrace { samples: particles, energies })
}

/// Draw the negative-phase feature samples for one batch.
pub fn sgld_sample(
    store: &ParamStore,
    params: &EclParams,
    batch: &ViewBatch<'_>,
    hyper: &EclHyper,
    seed: u64,
) -> Result<Vec<Matrix>, EclError> {
    sgld_sample_traced(store, params, batch, hyper, seed, 1.0).map(|t| t.samples)
}

/// Raw component values of one ECL evaluation, for logging.
#[derive(Clone, Copy, Debug, Default)]
pub struct EclComponents {
    pub discriminative: f64,
    pub generative: f64,
    pub regularization: f64,
    pub total: f64,
}

/// Assemble the full objective from precomputed SGLD samples. `nu_star` may
/// be `None` only when `alpha == 0` (the generative term is then skipped and
/// reported as 0).
pub fn ecl_loss_with_samples(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EclParams,
    batch: &ViewBatch<'_>,
    nu_star: Option<&[Matrix]>,
    hyper: &EclHyper,
) -> Result<(Value, EclComponents), EclError> {
    hyper.validate()?;
    let h = params.bind(tape, store)?;
    let emb = embed_batch(tape, &h, batch)?;
    let disc = discriminative_loss(tape, &emb, hyper.tau)?;
    let reg = regularization_loss(tape, &emb, hyper.tau)?;

    let mut total = {
        let scaled_reg = tape.scale(reg, hyper.beta)?;
        tape.add(disc, scaled_reg)?
    };
    let mut gen_value = 0.0;
    if hyper.alpha != 0.0 {
        let samples = nu_star.ok_or(EclError::MissingSamples)?;
        if samples.len() != batch.len() {
            return Err(EclError::SampleCount { got: samples.len(), want: batch.len() });
        }
        let z_s = embed_samples(tape, &h, batch, samples)?;
        let gen = generative_term(tape, emb.z_a, emb.z_b, z_s, hyper.tau)?;
        gen_value = tape.scalar(gen)?;
        let scaled_gen = tape.scale(gen, hyper.alpha)?;
        total = tape.add(total, scaled_gen)?;
    }

    let components = EclComponents {
        discriminative: tape.scalar(disc)?,
        generative: gen_value,
        regularization: tape.scalar(reg)?,
        total: tape.scalar(total)?,
    };
    Ok((total, components))
}

/// One full objective evaluation: runs SGLD (if `alpha != 0`), then builds
/// the loss graph on `tape`. Deterministic given `seed`.
pub fn ecl_loss(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EclParams,
    batch: &ViewBatch<'_>,
    hyper: &EclHyper,
    seed: u64,
) -> Result<(Value, EclComponents), EclError> {
    hyper.validate()?;
    let nu_star = if hyper.alpha != 0.0 {
        Some(sgld_sample(store, params, batch, hyper, seed)?)
    } else {
        None
    };
    ecl_loss_with_samples(tape, store, params, batch, nu_star.as_deref(), hyper)
}
