//! Second-price baseline, Monte Carlo revenue estimators, empirical regret,
//! and the winning-probability sweep used for the benchmark comparisons.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::mechanism::{self, HardOutcome, NetParams};
use crate::valuation::{self, Dataset, ValuationModel, ValuationProfile};
use crate::{AuctionError, Result};

/// Monte Carlo revenue estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevenueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn estimate_from(values: impl Iterator<Item = f64>) -> Result<RevenueEstimate> {
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for v in values {
        count += 1;
        sum += v;
        sum_sq += v * v;
    }
    if count == 0 {
        return Err(AuctionError::Usage("revenue estimate needs at least one sample".into()));
    }
    let mean = sum / count as f64;
    let var = (sum_sq / count as f64 - mean * mean).max(0.0);
    let std_error = if count > 1 { (var / (count - 1) as f64).sqrt() } else { 0.0 };
    Ok(RevenueEstimate { mean, std_error, samples: count })
}

/// Plain second-price auction on raw bids: highest bid wins (ties to the
/// lowest index) and pays the second-highest bid; a single bidder pays the
/// zero reserve.
pub fn spa_outcome(bids: &[f64]) -> Result<HardOutcome> {
    if bids.is_empty() {
        return Err(AuctionError::Usage("spa_outcome needs at least one bid".into()));
    }
    let mut winner = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for (i, &b) in bids.iter().enumerate() {
        if b > best {
            second = best;
            best = b;
            winner = i;
        } else if b > second {
            second = b;
        }
    }
    let payment = if second.is_finite() { second } else { 0.0 };
    Ok(HardOutcome { winner: Some(winner), payment })
}

/// Monte Carlo mean of the second-highest valuation over `samples` profiles
/// drawn from the model (the SPA baseline revenue).
pub fn spa_expected_revenue(
    model: &ValuationModel,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<RevenueEstimate> {
    if samples == 0 {
        return Err(AuctionError::Usage("samples must be >= 1".into()));
    }
    if n < 1 {
        return Err(AuctionError::Usage("n must be >= 1".into()));
    }
    let mut rng = valuation::stream_rng(seed, 4);
    estimate_from((0..samples).map(|_| {
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for _ in 0..n {
            let v = model.sample_value(&mut rng);
            if v > best {
                second = best;
                best = v;
            } else if v > second {
                second = v;
            }
        }
        if second.is_finite() {
            second
        } else {
            0.0
        }
    }))
}

/// Which mechanism relaxation an estimator evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevenueMode {
    /// Softmax-relaxed expected revenue `sum_i g_i p_i`.
    Soft,
    /// Exact mechanism: the realized winner's payment.
    Hard,
}

/// Mean mechanism revenue over a dataset in the requested mode.
pub fn expected_revenue(
    params: &NetParams,
    dataset: &Dataset,
    mode: RevenueMode,
) -> Result<RevenueEstimate> {
    let values: Vec<f64> = dataset
        .profiles()
        .iter()
        .map(|profile| match mode {
            RevenueMode::Soft => Ok(mechanism::revenue(&mechanism::forward(params, profile)?)),
            RevenueMode::Hard => Ok(mechanism::hard_mechanism(params, profile.values())?.payment),
        })
        .collect::<Result<_>>()?;
    estimate_from(values.into_iter())
}

fn hard_utility(params: &NetParams, bids: &[f64], i: usize, value: f64) -> Result<f64> {
    let out = mechanism::hard_mechanism(params, bids)?;
    Ok(if out.winner == Some(i) { value - out.payment } else { 0.0 })
}

/// Maximum utility gain bidder `i` can achieve by deviating from its truthful
/// bid, over a uniform grid of `grid` deviation bids in `[0, bid_ceil]`,
/// clamped below at zero.
///
/// This is a falsification test for the DSIC guarantee, not a proof: a
/// correctly-built mechanism yields zero regret on every instance, and an
/// injected violation (for example a negative effective weight) shows up as
/// positive regret.
pub fn empirical_regret(
    params: &NetParams,
    profile: &ValuationProfile,
    i: usize,
    grid: usize,
    bid_ceil: f64,
) -> Result<f64> {
    if grid < 2 {
        return Err(AuctionError::Usage("deviation grid needs at least 2 points".into()));
    }
    if i >= profile.len() {
        return Err(AuctionError::Usage(format!("bidder index {i} out of range")));
    }
    let value = profile.values()[i];
    let truthful = hard_utility(params, profile.values(), i, value)?;
    let mut bids = profile.values().to_vec();
    let mut worst: f64 = 0.0;
    for step in 0..grid {
        let deviation = bid_ceil * step as f64 / (grid - 1) as f64;
        bids[i] = deviation;
        let u = hard_utility(params, &bids, i, value)?;
        worst = worst.max(u - truthful);
    }
    Ok(worst)
}

/// One point of the winning-probability curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub c1: f64,
    pub win_prob: f64,
    pub std_error: f64,
}

/// Winning probability of miner 1 versus its initial capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

/// Estimates the probability that miner 1 wins the hard mechanism as its
/// capacity `c_1` varies over `c1_grid` (strictly increasing, all positive).
///
/// For each grid point, miner 1's valuation is `t_1 / c_1` with `t_1` from
/// the model's block-size distribution, while miners `2..N` draw both `t`
/// and `c` from the model.
pub fn winning_prob_sweep(
    params: &NetParams,
    model: &ValuationModel,
    c1_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<SweepCurve> {
    if c1_grid.is_empty() {
        return Err(AuctionError::Usage("c1 grid must be non-empty".into()));
    }
    if c1_grid.iter().any(|c| !(*c > 0.0)) {
        return Err(AuctionError::Usage("capacities must be > 0".into()));
    }
    if c1_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AuctionError::Usage("c1 grid must be strictly increasing".into()));
    }
    if samples == 0 {
        return Err(AuctionError::Usage("samples must be >= 1".into()));
    }
    let n = params.config().n;
    let mut rng = valuation::stream_rng(seed, 4);
    let mut points = Vec::with_capacity(c1_grid.len());
    let mut bids = vec![0.0f64; n];
    for &c1 in c1_grid {
        let mut wins = 0usize;
        for _ in 0..samples {
            let t1 = rng.gen_range(model.t_min()..model.t_max());
            bids[0] = t1 / c1;
            for bid in bids.iter_mut().skip(1) {
                *bid = model.sample_value(&mut rng);
            }
            if mechanism::hard_mechanism(params, &bids)?.winner == Some(0) {
                wins += 1;
            }
        }
        let p = wins as f64 / samples as f64;
        let std_error = (p * (1.0 - p) / samples as f64).sqrt();
        points.push(SweepPoint { c1, win_prob: p, std_error });
    }
    Ok(SweepCurve { points })
}

/// Writes a sweep curve as CSV (`c_1,win_prob,std_error`), preceded by the
/// given provenance comment lines.
pub fn write_sweep(path: &Path, curve: &SweepCurve, provenance: &[String]) -> Result<()> {
    let mut out = String::new();
    for line in provenance {
        writeln!(out, "# {line}").expect("string write");
    }
    writeln!(out, "c_1,win_prob,std_error").expect("string write");
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.c1, p.win_prob, p.std_error).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}
