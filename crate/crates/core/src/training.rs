//! Negated-revenue loss, exact reverse-mode gradients through the
//! transform / softmax / ReLU / inverse-transform composition, and the SGD
//! training loop.
//!
//! The gradient code is hand-written: every min, max, ReLU, and clamp picks
//! its active branch during the forward pass (ties to the lowest index) and
//! backpropagation follows only those branches. [`finite_diff_grad`] is the
//! independent oracle; it touches nothing but [`loss`].

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::mechanism::{self, NetConfig, NetParams, Tensor};
use crate::valuation::{self, ValuationModel, ValuationProfile};
use crate::{AuctionError, Result};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// L2 coefficient applied to effective weights `exp(alpha)` and biases.
    pub l2: f64,
    pub iterations: u64,
    pub batch_size: usize,
    /// Training-set size; the held-out test set has the same size.
    pub dataset_size: usize,
    /// Checkpoint interval for the revenue trace.
    pub eval_every: u64,
    pub seed: u64,
    pub init: InitConfig,
}

/// Gaussian initialization for the raw parameter tensors.
///
/// The default keeps every transform near the identity (weights near 1,
/// biases near 0), so the initial mechanism is approximately a plain SPA.
/// Shifting `beta_mean` below zero starts the mechanism with a positive
/// reserve price, which is required for reserve learning: from a
/// near-identity start the no-sale branch of the loss has zero probability
/// mass and plain SGD cannot discover a reserve on its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub alpha_mean: f64,
    pub alpha_sd: f64,
    pub beta_mean: f64,
    pub beta_sd: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { alpha_mean: 0.0, alpha_sd: 0.1, beta_mean: 0.0, beta_sd: 0.1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(AuctionError::Config(format!(
                "learning_rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(AuctionError::Config(format!("l2 must be finite and >= 0, got {}", self.l2)));
        }
        if self.dataset_size == 0 {
            return Err(AuctionError::Config("dataset_size must be >= 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.dataset_size {
            return Err(AuctionError::Config(format!(
                "batch_size must be in 1..={}, got {}",
                self.dataset_size, self.batch_size
            )));
        }
        if self.eval_every == 0 {
            return Err(AuctionError::Config("eval_every must be >= 1".into()));
        }
        for (name, x) in [
            ("alpha_mean", self.init.alpha_mean),
            ("alpha_sd", self.init.alpha_sd),
            ("beta_mean", self.init.beta_mean),
            ("beta_sd", self.init.beta_sd),
        ] {
            if !x.is_finite() {
                return Err(AuctionError::Config(format!("init {name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Gradients shaped like the parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_alpha: Vec<f64>,
    pub d_beta: Vec<f64>,
}

impl GradientSet {
    fn zeros(p: usize) -> Self {
        Self { d_alpha: vec![0.0; p], d_beta: vec![0.0; p] }
    }
}

/// One row of the revenue trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: u64,
    pub train_loss: f64,
    pub test_revenue_soft: f64,
    pub test_revenue_hard: f64,
}

/// Per-checkpoint test-revenue history of one training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RevenueTrace {
    pub checkpoints: Vec<TracePoint>,
}

impl RevenueTrace {
    pub fn final_point(&self) -> Option<&TracePoint> {
        self.checkpoints.last()
    }
}

/// Trace of one relaxed forward pass with every active branch recorded.
struct ProfileTrace {
    /// Active (k, j) of each bidder's forward transform.
    fwd_branch: Vec<(usize, usize)>,
    /// Softmax probabilities over n + 1 slots.
    alloc: Vec<f64>,
    /// Index of the highest *other* transformed bid per bidder (None for n = 1).
    p0_source: Vec<Option<usize>>,
    /// Whether the SPA-0 ReLU passed the other-max through (> 0).
    relu_active: Vec<bool>,
    /// Unclamped inverse-transform payment and its active (k, j).
    pay_raw: Vec<f64>,
    inv_branch: Vec<(usize, usize)>,
    /// Whether the final payment clamp is in the positive branch.
    clamp_active: Vec<bool>,
    /// Clamped payments.
    payments: Vec<f64>,
}

impl ProfileTrace {
    fn revenue(&self) -> f64 {
        self.alloc.iter().zip(&self.payments).map(|(g, p)| g * p).sum()
    }
}

fn trace_profile(params: &NetParams, profile: &ValuationProfile) -> Result<ProfileTrace> {
    let cfg = params.config();
    let n = cfg.n;
    if profile.len() != n {
        return Err(AuctionError::Usage(format!(
            "profile has {} bids, network expects {n}",
            profile.len()
        )));
    }
    let values = profile.values();

    let mut transformed = Vec::with_capacity(n);
    let mut fwd_branch = Vec::with_capacity(n);
    for (i, &v) in values.iter().enumerate() {
        let (tb, k, j) = mechanism::transform_traced(params, i, v);
        transformed.push(tb);
        fwd_branch.push((k, j));
    }
    let alloc = mechanism::allocate(&transformed, cfg.kappa)?;

    // Top two transformed bids give every bidder's max-over-others in O(n).
    let mut top1 = 0usize;
    let mut top2: Option<usize> = None;
    for i in 1..n {
        if transformed[i] > transformed[top1] {
            top2 = Some(top1);
            top1 = i;
        } else if top2.map_or(true, |t| transformed[i] > transformed[t]) {
            top2 = Some(i);
        }
    }

    let mut p0_source = Vec::with_capacity(n);
    let mut relu_active = Vec::with_capacity(n);
    let mut pay_raw = Vec::with_capacity(n);
    let mut inv_branch = Vec::with_capacity(n);
    let mut clamp_active = Vec::with_capacity(n);
    let mut payments = Vec::with_capacity(n);
    for i in 0..n {
        let src = if i == top1 { top2 } else { Some(top1) };
        let other_max = src.map_or(f64::NEG_INFINITY, |s| transformed[s]);
        let active = other_max > 0.0;
        let p0 = other_max.max(0.0);
        let (raw, k, j) = mechanism::inverse_traced(params, i, p0);
        let clamped = raw > 0.0;
        p0_source.push(src);
        relu_active.push(active);
        pay_raw.push(raw);
        inv_branch.push((k, j));
        clamp_active.push(clamped);
        payments.push(raw.max(0.0));
    }
    Ok(ProfileTrace {
        fwd_branch,
        alloc,
        p0_source,
        relu_active,
        pay_raw,
        inv_branch,
        clamp_active,
        payments,
    })
}

fn l2_penalty(params: &NetParams, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let cfg = params.config();
    let mut acc = 0.0;
    for i in 0..cfg.n {
        for k in 0..cfg.k {
            for j in 0..cfg.j {
                let w = params.weight(i, k, j);
                acc += w * w;
            }
        }
    }
    acc += params.beta().iter().map(|b| b * b).sum::<f64>();
    l2 * acc
}

/// Negated mean revenue over the batch, plus the L2 penalty on effective
/// weights and biases when `l2 > 0`.
pub fn loss(params: &NetParams, batch: &[ValuationProfile], l2: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(AuctionError::Usage("loss needs a non-empty batch".into()));
    }
    let mut acc = 0.0;
    for profile in batch {
        acc += trace_profile(params, profile)?.revenue();
    }
    Ok(-acc / batch.len() as f64 + l2_penalty(params, l2))
}

/// Exact reverse-mode gradients of [`loss`] with respect to alpha and beta.
///
/// Min/max/ReLU kinks use the active-branch subgradient; the branch chosen in
/// the forward pass (ties to the lowest index, ReLU and clamp at 0 take the
/// zero-slope side) is the one differentiated.
pub fn backward(params: &NetParams, batch: &[ValuationProfile], l2: f64) -> Result<GradientSet> {
    if batch.is_empty() {
        return Err(AuctionError::Usage("backward needs a non-empty batch".into()));
    }
    let cfg = params.config();
    let p = cfg.param_count();
    let mut grads = GradientSet::zeros(p);
    let scale = 1.0 / batch.len() as f64;

    for (s, profile) in batch.iter().enumerate() {
        let trace = trace_profile(params, profile)?;
        let rev = trace.revenue();
        if !rev.is_finite() {
            return Err(AuctionError::Numeric(format!(
                "non-finite revenue while differentiating profile {s}"
            )));
        }

        // d revenue / d transformed_bid, accumulated over both channels.
        let mut d_tb = vec![0.0f64; cfg.n];

        // Softmax channel: revenue = sum_i g_i pay_i with logits kappa * tb
        // (the dummy logit is constant), so
        // d rev / d tb_m = kappa * g_m * (pay_m - rev).
        for m in 0..cfg.n {
            d_tb[m] = cfg.kappa * trace.alloc[m] * (trace.payments[m] - rev);
        }

        for i in 0..cfg.n {
            // Payment channel. pay_i = max(0, (p0_i - beta_a) / w_a).
            let d_pay = if trace.clamp_active[i] { trace.alloc[i] } else { 0.0 };
            if d_pay != 0.0 {
                let (k, j) = trace.inv_branch[i];
                let idx = params.idx(i, k, j);
                let w = params.weight(i, k, j);
                // d pay / d alpha = -pay_raw, d pay / d beta = -1/w.
                grads.d_alpha[idx] -= scale * d_pay * trace.pay_raw[i];
                grads.d_beta[idx] -= scale * d_pay / w;
                // Through p0 into the runner-up's transformed bid.
                if trace.relu_active[i] {
                    if let Some(src) = trace.p0_source[i] {
                        d_tb[src] += d_pay / w;
                    }
                }
            }
        }

        // Transform channel: tb_i = w_a * v_i + beta_a on the active branch.
        for i in 0..cfg.n {
            if d_tb[i] == 0.0 {
                continue;
            }
            let (k, j) = trace.fwd_branch[i];
            let idx = params.idx(i, k, j);
            grads.d_alpha[idx] += scale * d_tb[i] * params.weight(i, k, j) * profile.values()[i];
            grads.d_beta[idx] += scale * d_tb[i];
        }
    }

    // Loss is negated revenue; add the L2 term on w = exp(alpha) and beta.
    for idx in 0..p {
        grads.d_alpha[idx] = -grads.d_alpha[idx] + 2.0 * l2 * (2.0 * params.alpha()[idx]).exp();
        grads.d_beta[idx] = -grads.d_beta[idx] + 2.0 * l2 * params.beta()[idx];
    }

    if grads.d_alpha.iter().chain(grads.d_beta.iter()).any(|g| !g.is_finite()) {
        return Err(AuctionError::Numeric("non-finite gradient".into()));
    }
    Ok(grads)
}

/// Central finite differences of [`loss`] per coordinate; the independent
/// gradient oracle. Exercises nothing but the loss itself.
pub fn finite_diff_grad(
    params: &NetParams,
    batch: &[ValuationProfile],
    l2: f64,
    eps: f64,
) -> Result<GradientSet> {
    if !(eps > 0.0) {
        return Err(AuctionError::Usage(format!("eps must be > 0, got {eps}")));
    }
    let p = params.config().param_count();
    let mut grads = GradientSet::zeros(p);
    let mut work = params.clone();
    for tensor in [Tensor::Alpha, Tensor::Beta] {
        for idx in 0..p {
            work.perturb(tensor, idx, eps);
            let hi = loss(&work, batch, l2)?;
            work.perturb(tensor, idx, -2.0 * eps);
            let lo = loss(&work, batch, l2)?;
            work.perturb(tensor, idx, eps);
            let g = (hi - lo) / (2.0 * eps);
            match tensor {
                Tensor::Alpha => grads.d_alpha[idx] = g,
                Tensor::Beta => grads.d_beta[idx] = g,
            }
        }
    }
    Ok(grads)
}

/// Compact encoding of every active branch the loss takes on a batch.
///
/// Two parameter points with equal fingerprints lie on the same smooth piece
/// of the loss, which is the precondition for comparing [`backward`] against
/// [`finite_diff_grad`] at a kinked objective.
pub fn branch_fingerprint(params: &NetParams, batch: &[ValuationProfile]) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for profile in batch {
        let trace = trace_profile(params, profile)?;
        for i in 0..params.config().n {
            out.push(trace.fwd_branch[i].0 as u32);
            out.push(trace.fwd_branch[i].1 as u32);
            out.push(trace.inv_branch[i].0 as u32);
            out.push(trace.inv_branch[i].1 as u32);
            out.push(trace.p0_source[i].map_or(u32::MAX, |s| s as u32));
            out.push(trace.relu_active[i] as u32);
            out.push(trace.clamp_active[i] as u32);
        }
    }
    Ok(out)
}

/// One SGD update: `theta <- theta - lr * grad` on both tensors.
///
/// Effective weights stay strictly positive because only raw `alpha` moves.
pub fn sgd_step(params: &NetParams, grads: &GradientSet, lr: f64) -> NetParams {
    let mut next = params.clone();
    next.update(|idx, alpha, beta| {
        *alpha -= lr * grads.d_alpha[idx];
        *beta -= lr * grads.d_beta[idx];
    });
    next
}

/// Draws initial parameters on the documented init stream.
pub fn init_params(net_config: NetConfig, init: &InitConfig, seed: u64) -> Result<NetParams> {
    let mut rng = valuation::stream_rng(seed, 2);
    let alpha_dist = Normal::new(init.alpha_mean, init.alpha_sd)
        .map_err(|e| AuctionError::Config(format!("alpha init: {e}")))?;
    let beta_dist = Normal::new(init.beta_mean, init.beta_sd)
        .map_err(|e| AuctionError::Config(format!("beta init: {e}")))?;
    let p = net_config.param_count();
    let alpha: Vec<f64> = (0..p).map(|_| alpha_dist.sample(&mut rng)).collect();
    let beta: Vec<f64> = (0..p).map(|_| beta_dist.sample(&mut rng)).collect();
    NetParams::new(net_config, alpha, beta)
}

/// Runs the full training loop.
///
/// Generates a training set (stream 0) and a held-out test set (stream 1)
/// from the config seed, initializes parameters (stream 2), then iterates
/// mini-batch sampling (stream 3, shuffled without replacement per epoch),
/// [`backward`], and [`sgd_step`]. The revenue trace records the initial
/// point, every `eval_every`-th iteration, and the final iteration. Test
/// revenue is reported both softmax-relaxed and under the hard mechanism;
/// the L2 penalty enters only the optimized loss, never reported revenue.
pub fn train(
    config: &TrainConfig,
    net_config: NetConfig,
    model: &ValuationModel,
) -> Result<(NetParams, RevenueTrace)> {
    config.validate()?;
    let n = net_config.n;
    let s = config.dataset_size;
    let train_set = valuation::generate_dataset_stream(model, n, s, config.seed, 0)?;
    let test_set = valuation::generate_dataset_stream(model, n, s, config.seed, 1)?;

    let mut params = init_params(net_config, &config.init, config.seed)?;
    let mut batch_rng = valuation::stream_rng(config.seed, 3);
    let mut order: Vec<usize> = (0..s).collect();
    let mut pos = s; // force a shuffle before the first batch

    let mut trace = RevenueTrace::default();
    let checkpoint = |iteration: u64, params: &NetParams| -> Result<TracePoint> {
        let train_loss = loss(params, train_set.profiles(), config.l2)?;
        if !train_loss.is_finite() {
            return Err(AuctionError::Training {
                iteration,
                detail: format!("non-finite training loss {train_loss}"),
            });
        }
        let test_revenue_soft = -loss(params, test_set.profiles(), 0.0)?;
        let mut hard_acc = 0.0;
        for profile in test_set.profiles() {
            hard_acc += mechanism::hard_mechanism(params, profile.values())?.payment;
        }
        let test_revenue_hard = hard_acc / test_set.len() as f64;
        Ok(TracePoint { iteration, train_loss, test_revenue_soft, test_revenue_hard })
    };

    trace.checkpoints.push(checkpoint(0, &params)?);
    let mut batch = Vec::with_capacity(config.batch_size);
    for it in 1..=config.iterations {
        if pos + config.batch_size > s {
            order.shuffle(&mut batch_rng);
            pos = 0;
        }
        batch.clear();
        batch.extend(
            order[pos..pos + config.batch_size]
                .iter()
                .map(|&i| train_set.profiles()[i].clone()),
        );
        pos += config.batch_size;

        let grads = backward(&params, &batch, config.l2).map_err(|e| match e {
            AuctionError::Numeric(detail) => AuctionError::Training { iteration: it, detail },
            other => other,
        })?;
        params = sgd_step(&params, &grads, config.learning_rate);

        if (it % config.eval_every == 0 || it == config.iterations)
            && trace.checkpoints.last().map(|c| c.iteration) != Some(it)
        {
            trace.checkpoints.push(checkpoint(it, &params)?);
        }
    }
    Ok((params, trace))
}

/// Writes a revenue trace as CSV with the standard header, preceded by the
/// given provenance comment lines (each written verbatim after `# `).
pub fn write_trace(path: &Path, trace: &RevenueTrace, provenance: &[String]) -> Result<()> {
    let mut out = String::new();
    for line in provenance {
        writeln!(out, "# {line}").expect("string write");
    }
    writeln!(out, "iteration,train_loss,test_revenue_soft,test_revenue_hard").expect("string write");
    for c in &trace.checkpoints {
        writeln!(
            out,
            "{},{},{},{}",
            c.iteration, c.train_loss, c.test_revenue_soft, c.test_revenue_hard
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}
