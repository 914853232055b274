//! Miner valuation model: `v = t / c` with block size `t ~ U[t_min, t_max]`
//! and initial compute capacity `c ~ U[c_min, c_max]`.
//!
//! Sampling draws `(t, c)` directly, so it is exact by construction. The
//! closed-form density of `v` is constant on the interior of the support but
//! picks up boundary corrections where the change of variables clips against
//! the `t` range; [`ValuationModel::pdf`] implements the full piecewise form.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{AuctionError, Result};

/// Deterministic, portable sub-stream derived from one user-facing seed.
///
/// ChaCha exposes a 64-bit stream nonce that is independent of the key, so
/// distinct `stream` values yield statistically independent generators from
/// the same seed. Stream assignments used by this crate:
///
/// | stream | use                          |
/// |--------|------------------------------|
/// | 0      | training dataset             |
/// | 1      | held-out test dataset        |
/// | 2      | parameter initialization     |
/// | 3      | mini-batch index shuffling   |
/// | 4+     | Monte Carlo estimator shards |
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform block-size / compute-capacity model generating miner valuations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValuationModel {
    t_min: f64,
    t_max: f64,
    c_min: f64,
    c_max: f64,
}

impl ValuationModel {
    /// Requires `0 <= t_min < t_max` and `0 < c_min < c_max`.
    pub fn new(t_min: f64, t_max: f64, c_min: f64, c_max: f64) -> Result<Self> {
        let finite = [t_min, t_max, c_min, c_max].iter().all(|x| x.is_finite());
        if !finite || !(0.0 <= t_min && t_min < t_max) || !(0.0 < c_min && c_min < c_max) {
            return Err(AuctionError::Config(format!(
                "invalid valuation model bounds: t in [{t_min}, {t_max}], c in [{c_min}, {c_max}] \
                 (need 0 <= t_min < t_max and 0 < c_min < c_max)"
            )));
        }
        Ok(Self { t_min, t_max, c_min, c_max })
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Support of the valuation distribution, `[t_min/c_max, t_max/c_min]`.
    pub fn support(&self) -> (f64, f64) {
        (self.t_min / self.c_max, self.t_max / self.c_min)
    }

    /// Exact density of `v = t/c`.
    ///
    /// On the interior region `t_min/c_min <= v <= t_max/c_max` this reduces
    /// to the constant `(c_min + c_max) / (2 (t_max - t_min))`. Near the ends
    /// of the support the integration range over `z = c` is clipped to
    /// `[max(c_min, t_min/v), min(c_max, t_max/v)]`, which yields the
    /// boundary corrections that make the density integrate to one.
    pub fn pdf(&self, v: f64) -> f64 {
        if !(v > 0.0) {
            // v == 0 carries mass only when t_min == 0 (then t = 0 exactly,
            // a boundary point of the support).
            return if v == 0.0 && self.t_min == 0.0 {
                (self.c_min + self.c_max) / (2.0 * (self.t_max - self.t_min))
            } else {
                0.0
            };
        }
        let lo = (self.t_min / v).max(self.c_min);
        let hi = (self.t_max / v).min(self.c_max);
        if hi <= lo {
            return 0.0;
        }
        (hi * hi - lo * lo) / (2.0 * (self.t_max - self.t_min) * (self.c_max - self.c_min))
    }

    /// Draws one valuation `t/c`.
    pub fn sample_value<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = rng.gen_range(self.t_min..self.t_max);
        let c = rng.gen_range(self.c_min..self.c_max);
        t / c
    }
}

/// One sample `v = (v_1, ..., v_N)` of miner private values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationProfile {
    values: Vec<f64>,
}

impl ValuationProfile {
    /// Requires at least one finite, non-negative value.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(AuctionError::Usage("valuation profile must be non-empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(AuctionError::Usage(format!(
                "valuations must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `n` i.i.d. draws of `t/c`.
pub fn sample_profile<R: Rng + ?Sized>(
    model: &ValuationModel,
    n: usize,
    rng: &mut R,
) -> Result<ValuationProfile> {
    if n == 0 {
        return Err(AuctionError::Usage("profile size n must be >= 1".into()));
    }
    ValuationProfile::new((0..n).map(|_| model.sample_value(rng)).collect())
}

/// A set of i.i.d. valuation profiles plus the seed that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    profiles: Vec<ValuationProfile>,
    seed: u64,
}

impl Dataset {
    /// All profiles must share one length; at least one profile.
    pub fn new(profiles: Vec<ValuationProfile>, seed: u64) -> Result<Self> {
        let n = match profiles.first() {
            Some(p) => p.len(),
            None => return Err(AuctionError::Usage("dataset must hold at least one profile".into())),
        };
        if profiles.iter().any(|p| p.len() != n) {
            return Err(AuctionError::Usage("all profiles in a dataset must share the same length".into()));
        }
        Ok(Self { profiles, seed })
    }

    pub fn profiles(&self) -> &[ValuationProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Bidder count shared by every profile.
    pub fn bidders(&self) -> usize {
        self.profiles[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Generates `s` profiles of `n` valuations each, deterministically from `seed`.
///
/// The draws come from [`stream_rng`] stream 0 so datasets reproduce bitwise
/// across runs and platforms.
pub fn generate_dataset(model: &ValuationModel, n: usize, s: usize, seed: u64) -> Result<Dataset> {
    generate_dataset_stream(model, n, s, seed, 0)
}

/// Like [`generate_dataset`] but on an explicit ChaCha stream, so a training
/// run can draw its train and held-out test sets from one seed without overlap.
pub fn generate_dataset_stream(
    model: &ValuationModel,
    n: usize,
    s: usize,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    if s == 0 {
        return Err(AuctionError::Usage("dataset size s must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, stream);
    let profiles = (0..s)
        .map(|_| sample_profile(model, n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(profiles, seed)
}

/// Writes a dataset as plain-text CSV: a sidecar comment line with the model
/// bounds and seed, a `v_1,...,v_N` header, then one profile per row. Floats
/// use the shortest representation that round-trips bit-exactly.
pub fn write_dataset(path: &Path, model: &ValuationModel, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    writeln!(
        out,
        "# model t_min={} t_max={} c_min={} c_max={} seed={}",
        model.t_min, model.t_max, model.c_min, model.c_max, dataset.seed
    )
    .expect("string write");
    let n = dataset.bidders();
    let header: Vec<String> = (1..=n).map(|i| format!("v_{i}")).collect();
    writeln!(out, "{}", header.join(",")).expect("string write");
    for profile in dataset.profiles() {
        let row: Vec<String> = profile.values().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(",")).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`], returning the model recorded
/// in the sidecar line alongside the profiles.
pub fn read_dataset(path: &Path) -> Result<(ValuationModel, Dataset)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let sidecar = lines
        .next()
        .ok_or_else(|| AuctionError::Format("empty dataset file".into()))?;
    let fields = parse_sidecar(sidecar)?;
    let get = |key: &str| -> Result<f64> {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| AuctionError::Format(format!("dataset sidecar missing `{key}`")))
    };
    let model = ValuationModel::new(get("t_min")?, get("t_max")?, get("c_min")?, get("c_max")?)?;
    let seed = get("seed")? as u64;

    let header = lines
        .next()
        .ok_or_else(|| AuctionError::Format("dataset file missing header row".into()))?;
    let n = header.split(',').count();
    let mut profiles = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    AuctionError::Format(format!("dataset row {}: bad float `{tok}`: {e}", row_idx + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != n {
            return Err(AuctionError::Format(format!(
                "dataset row {} has {} values, header names {n}",
                row_idx + 1,
                values.len()
            )));
        }
        profiles.push(ValuationProfile::new(values)?);
    }
    Ok((model, Dataset::new(profiles, seed)?))
}

fn parse_sidecar(line: &str) -> Result<Vec<(String, f64)>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| AuctionError::Format("dataset sidecar line must start with `#`".into()))?;
    body.split_whitespace()
        .filter(|tok| tok.contains('='))
        .map(|tok| {
            let (k, v) = tok.split_once('=').expect("filtered on '='");
            let v = v
                .parse::<f64>()
                .map_err(|e| AuctionError::Format(format!("sidecar field `{tok}`: {e}")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}
