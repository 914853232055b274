//! The auction network: per-bidder monotone min-max transforms with exact
//! inverses, softmax allocation over transformed bids plus a zero dummy,
//! SPA-0 payments, and the composed conditional payment.
//!
//! Two evaluation modes share the same parameters:
//!
//! - [`forward`]: the softmax-relaxed mechanism used for training. Every
//!   bidder gets a strictly positive allocation probability and the residual
//!   mass on the dummy slot is the no-sale probability.
//! - [`hard_mechanism`]: the exact mechanism used for deployment and for
//!   DSIC/IR verification. The unit goes to the highest transformed bid if it
//!   is strictly positive, at the inverse transform of the runner-up.
//!
//! Each transform is `phi_i(b) = min_k max_j (w_kj b + beta_kj)` with
//! `w_kj = exp(alpha_kj) > 0`, so it is strictly increasing and its exact
//! inverse is `max_k min_j (y - beta_kj) / w_kj`. Storing raw `alpha` keeps
//! the optimization unconstrained while guaranteeing positive weights.

use std::fmt::Write as _;
use std::path::Path;

use crate::valuation::ValuationProfile;
use crate::{AuctionError, Result};

/// Shape and sharpness of the auction network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Bidder count.
    pub n: usize,
    /// Linear-function groups per bidder (the outer min).
    pub k: usize,
    /// Linear functions per group (the inner max).
    pub j: usize,
    /// Softmax sharpness; larger values approach the hard allocation.
    pub kappa: f64,
}

impl NetConfig {
    pub fn new(n: usize, k: usize, j: usize, kappa: f64) -> Result<Self> {
        if n == 0 || k == 0 || j == 0 {
            return Err(AuctionError::Config(format!(
                "network shape must be positive, got n={n} k={k} j={j}"
            )));
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(AuctionError::Config(format!("kappa must be finite and > 0, got {kappa}")));
        }
        Ok(Self { n, k, j, kappa })
    }

    /// Parameters per tensor (`n * k * j`).
    pub fn param_count(&self) -> usize {
        self.n * self.k * self.j
    }
}

/// Per-bidder transform parameters. Effective weights are `exp(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Cached `exp(alpha)`, kept in sync by every mutation path.
    weights: Vec<f64>,
    config: NetConfig,
}

impl NetParams {
    /// Builds parameters from raw tensors in row-major `(i, k, j)` order.
    pub fn new(config: NetConfig, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let p = config.param_count();
        if alpha.len() != p || beta.len() != p {
            return Err(AuctionError::Usage(format!(
                "parameter tensors must have {p} entries, got alpha={} beta={}",
                alpha.len(),
                beta.len()
            )));
        }
        if alpha.iter().chain(beta.iter()).any(|x| !x.is_finite()) {
            return Err(AuctionError::Numeric("non-finite parameter".into()));
        }
        let weights = alpha.iter().map(|a| a.exp()).collect();
        Ok(Self { alpha, beta, weights, config })
    }

    /// The identity configuration: all weights 1, all biases 0, so every
    /// transform is `phi(b) = b` and the hard mechanism is a plain SPA-0.
    pub fn identity(config: NetConfig) -> Self {
        let p = config.param_count();
        Self::new(config, vec![0.0; p], vec![0.0; p]).expect("identity params are valid")
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    #[inline]
    pub(crate) fn idx(&self, i: usize, k: usize, j: usize) -> usize {
        (i * self.config.k + k) * self.config.j + j
    }

    /// Effective weight `w_kj^i = exp(alpha_kj^i)`.
    pub fn weight(&self, i: usize, k: usize, j: usize) -> f64 {
        self.weights[self.idx(i, k, j)]
    }

    pub(crate) fn update(&mut self, f: impl Fn(usize, &mut f64, &mut f64)) {
        for idx in 0..self.alpha.len() {
            f(idx, &mut self.alpha[idx], &mut self.beta[idx]);
            self.weights[idx] = self.alpha[idx].exp();
        }
    }

    pub(crate) fn perturb(&mut self, tensor: Tensor, idx: usize, delta: f64) {
        match tensor {
            Tensor::Alpha => {
                self.alpha[idx] += delta;
                self.weights[idx] = self.alpha[idx].exp();
            }
            Tensor::Beta => self.beta[idx] += delta,
        }
    }

    /// Test-only fault injection: overrides one effective weight directly,
    /// bypassing the `exp(alpha)` positivity guarantee. Exists so the
    /// DSIC/IR checkers can be shown to detect a broken (non-monotone)
    /// mechanism; never called on any production path.
    #[doc(hidden)]
    pub fn override_weight_for_tests(&mut self, i: usize, k: usize, j: usize, w: f64) {
        let idx = self.idx(i, k, j);
        self.weights[idx] = w;
    }

    fn check_bidder(&self, i: usize) -> Result<()> {
        if i >= self.config.n {
            return Err(AuctionError::Usage(format!(
                "bidder index {i} out of range for n={}",
                self.config.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Tensor {
    Alpha,
    Beta,
}

/// `phi_i(b) = min_k max_j (w_kj b + beta_kj)`; strictly increasing in `b`.
pub fn transform(params: &NetParams, i: usize, b: f64) -> Result<f64> {
    params.check_bidder(i)?;
    Ok(transform_traced(params, i, b).0)
}

/// Transform plus the active `(k, j)` branch. Ties go to the first index in
/// iteration order so subgradients are deterministic.
pub(crate) fn transform_traced(params: &NetParams, i: usize, b: f64) -> (f64, usize, usize) {
    let cfg = params.config();
    let mut best = f64::INFINITY;
    let (mut bk, mut bj) = (0, 0);
    for k in 0..cfg.k {
        let mut group = f64::NEG_INFINITY;
        let mut gj = 0;
        for j in 0..cfg.j {
            let idx = params.idx(i, k, j);
            let val = params.weights[idx] * b + params.beta[idx];
            if val > group {
                group = val;
                gj = j;
            }
        }
        if group < best {
            best = group;
            bk = k;
            bj = gj;
        }
    }
    (best, bk, bj)
}

/// Exact inverse of [`transform`]: `max_k min_j (y - beta_kj) / w_kj`.
pub fn inverse_transform(params: &NetParams, i: usize, y: f64) -> Result<f64> {
    params.check_bidder(i)?;
    Ok(inverse_traced(params, i, y).0)
}

pub(crate) fn inverse_traced(params: &NetParams, i: usize, y: f64) -> (f64, usize, usize) {
    let cfg = params.config();
    let mut best = f64::NEG_INFINITY;
    let (mut bk, mut bj) = (0, 0);
    for k in 0..cfg.k {
        let mut group = f64::INFINITY;
        let mut gj = 0;
        for j in 0..cfg.j {
            let idx = params.idx(i, k, j);
            let val = (y - params.beta[idx]) / params.weights[idx];
            if val < group {
                group = val;
                gj = j;
            }
        }
        if group > best {
            best = group;
            bk = k;
            bj = gj;
        }
    }
    (best, bk, bj)
}

/// Softmax allocation over the transformed bids plus the dummy zero slot.
///
/// Returns `N + 1` probabilities; the last entry is the no-sale mass.
/// Computed with max-subtraction so large `kappa * bid` values cannot
/// overflow.
pub fn allocate(transformed: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if transformed.iter().any(|x| !x.is_finite()) {
        return Err(AuctionError::Numeric("non-finite transformed bid in allocate".into()));
    }
    if !(kappa > 0.0) {
        return Err(AuctionError::Config(format!("kappa must be > 0, got {kappa}")));
    }
    let top = transformed.iter().fold(0.0f64, |m, &x| m.max(kappa * x));
    let mut out: Vec<f64> = transformed.iter().map(|&x| (kappa * x - top).exp()).collect();
    out.push((-top).exp()); // dummy slot at transformed bid 0
    let total: f64 = out.iter().sum();
    for g in &mut out {
        *g /= total;
    }
    Ok(out)
}

/// SPA-0 payment in transformed space: `max(0, max_{j != i} transformed_j)`.
///
/// Independent of the bidder's own entry by construction. With a single
/// bidder the empty max is the zero reserve.
pub fn spa0_payment(transformed: &[f64], i: usize) -> Result<f64> {
    if i >= transformed.len() {
        return Err(AuctionError::Usage(format!(
            "bidder index {i} out of range for {} transformed bids",
            transformed.len()
        )));
    }
    let other_max = transformed
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(other_max.max(0.0))
}

/// Conditional payment: the SPA-0 payment mapped back to bid space,
/// `p_i = phi_i^{-1}(p_i^0)`.
pub fn conditional_payment(params: &NetParams, i: usize, p0: f64) -> Result<f64> {
    inverse_transform(params, i, p0)
}

/// Softmax-relaxed outcome: allocation probabilities over the miners plus the
/// no-sale slot, and per-miner conditional payments.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    /// `n + 1` probabilities; entry `n` is the no-sale dummy.
    pub alloc: Vec<f64>,
    /// Conditional payments, clamped at zero.
    pub payments: Vec<f64>,
    /// Transformed bids (diagnostic).
    pub transformed_bids: Vec<f64>,
}

/// Expected seller revenue of a relaxed outcome, `sum_i alloc_i * payment_i`.
pub fn revenue(outcome: &AuctionOutcome) -> f64 {
    outcome
        .alloc
        .iter()
        .zip(&outcome.payments)
        .map(|(g, p)| g * p)
        .sum()
}

/// Runs the relaxed mechanism: transform, softmax allocation, SPA-0 payment,
/// inverse-transform payment, for every bidder.
pub fn forward(params: &NetParams, profile: &ValuationProfile) -> Result<AuctionOutcome> {
    let n = params.config().n;
    if profile.len() != n {
        return Err(AuctionError::Usage(format!(
            "profile has {} bids, network expects {n}",
            profile.len()
        )));
    }
    let transformed: Vec<f64> = (0..n)
        .map(|i| transform_traced(params, i, profile.values()[i]).0)
        .collect();
    let alloc = allocate(&transformed, params.config().kappa)?;
    let payments = (0..n)
        .map(|i| {
            let p0 = spa0_payment(&transformed, i)?;
            // Clamped at zero: a positive bias can push phi_i(0) above the
            // zero reserve, which would otherwise produce a subsidy.
            Ok(conditional_payment(params, i, p0)?.max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(AuctionOutcome { alloc, payments, transformed_bids: transformed })
}

/// Exact mechanism outcome: a single winner (or no sale) and its payment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardOutcome {
    pub winner: Option<usize>,
    pub payment: f64,
}

/// The exact Theorem-1 mechanism: SPA-0 on transformed bids.
///
/// Sells to the highest transformed bid only if it is strictly positive
/// (ties to the lowest index); the winner pays the inverse transform of
/// `max(0, second-highest transformed bid)`, clamped at zero.
pub fn hard_mechanism(params: &NetParams, bids: &[f64]) -> Result<HardOutcome> {
    let n = params.config().n;
    if bids.len() != n {
        return Err(AuctionError::Usage(format!(
            "got {} bids, network expects {n}",
            bids.len()
        )));
    }
    if bids.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(AuctionError::Usage("bids must be finite and non-negative".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut winner = 0usize;
    let mut second = f64::NEG_INFINITY;
    for i in 0..n {
        let tb = transform_traced(params, i, bids[i]).0;
        if tb > best {
            second = best;
            best = tb;
            winner = i;
        } else if tb > second {
            second = tb;
        }
    }
    if best <= 0.0 {
        return Ok(HardOutcome { winner: None, payment: 0.0 });
    }
    let p0 = second.max(0.0);
    let payment = inverse_traced(params, winner, p0).0.max(0.0);
    Ok(HardOutcome { winner: Some(winner), payment })
}

const CHECKPOINT_MAGIC: &str = "auction-checkpoint v1";

/// Writes a versioned, self-describing parameter checkpoint. Tensors are
/// stored as decimal floats in row-major `(i, k, j)` order using the shortest
/// representation that parses back bit-exactly.
pub fn write_checkpoint(path: &Path, params: &NetParams) -> Result<()> {
    std::fs::write(path, checkpoint_string(params))?;
    Ok(())
}

/// The checkpoint file body, without any leading comment lines.
pub fn checkpoint_string(params: &NetParams) -> String {
    let cfg = params.config();
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC}").expect("string write");
    writeln!(out, "n={} k={} j={} kappa={}", cfg.n, cfg.k, cfg.j, cfg.kappa).expect("string write");
    for (name, tensor) in [("alpha", params.alpha()), ("beta", params.beta())] {
        let row: Vec<String> = tensor.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{name} {}", row.join(" ")).expect("string write");
    }
    out
}

/// Reads a checkpoint written by [`write_checkpoint`]. Leading `#` comment
/// lines (provenance headers) are skipped.
pub fn read_checkpoint(path: &Path) -> Result<NetParams> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    match lines.next() {
        Some(CHECKPOINT_MAGIC) => {}
        Some(other) => {
            return Err(AuctionError::Format(format!(
                "unsupported checkpoint header `{other}` (expected `{CHECKPOINT_MAGIC}`)"
            )))
        }
        None => return Err(AuctionError::Format("empty checkpoint file".into())),
    }
    let shape = lines
        .next()
        .ok_or_else(|| AuctionError::Format("checkpoint missing shape line".into()))?;
    let mut n = None;
    let mut k = None;
    let mut j = None;
    let mut kappa = None;
    for tok in shape.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| AuctionError::Format(format!("bad shape field `{tok}`")))?;
        match key {
            "n" => n = val.parse::<usize>().ok(),
            "k" => k = val.parse::<usize>().ok(),
            "j" => j = val.parse::<usize>().ok(),
            "kappa" => kappa = val.parse::<f64>().ok(),
            _ => return Err(AuctionError::Format(format!("unknown shape field `{key}`"))),
        }
    }
    let (n, k, j, kappa) = match (n, k, j, kappa) {
        (Some(n), Some(k), Some(j), Some(kappa)) => (n, k, j, kappa),
        _ => return Err(AuctionError::Format("checkpoint shape line must set n, k, j, kappa".into())),
    };
    let config = NetConfig::new(n, k, j, kappa)?;

    let mut read_tensor = |name: &str| -> Result<Vec<f64>> {
        let line = lines
            .next()
            .ok_or_else(|| AuctionError::Format(format!("checkpoint missing `{name}` tensor")))?;
        let body = line
            .strip_prefix(name)
            .ok_or_else(|| AuctionError::Format(format!("expected `{name}` tensor line, got `{line}`")))?;
        body.split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| AuctionError::Format(format!("{name} tensor: bad float `{tok}`: {e}")))
            })
            .collect()
    };
    let alpha = read_tensor("alpha")?;
    let beta = read_tensor("beta")?;
    NetParams::new(config, alpha, beta)
}
