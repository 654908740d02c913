//! Mapping between the system model and network inputs / outputs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::ModelOutput;
use crate::config::NetworkConfig;
use crate::dataset::{Dataset, NormStats};
use crate::error::{Error, Result};
use crate::nn::loss::Targets;
use crate::solver::AssignmentCatalog;
use crate::system::{Allocation, ChannelTensor};

/// Standardized log-gain matrix of shape `(N*K, sum U_n)`, flattened row-major:
/// entry `(n*K + k, u)` holds `(log10 h[n][u][k] - mean) / std`.
pub fn preprocess_input(h: &ChannelTensor, stats: &NormStats) -> Result<Vec<f64>> {
    if !(stats.std > 0.0 && stats.std.is_finite()) {
        return Err(Error::Preprocess(format!(
            "normalization std must be positive (got {})",
            stats.std
        )));
    }
    let (nb, nu, nk) = (h.n_bs, h.n_users, h.n_subchannels);
    let mut out = vec![0.0; nb * nk * nu];
    for n in 0..nb {
        for u in 0..nu {
            for k in 0..nk {
                out[(n * nk + k) * nu + u] = (h.get(n, u, k).log10() - stats.mean) / stats.std;
            }
        }
    }
    Ok(out)
}

/// Stacks preprocessed channels into a `(samples, N*K*U)` batch.
pub fn preprocess_batch<'a>(
    channels: impl Iterator<Item = &'a ChannelTensor>,
    stats: &NormStats,
) -> Result<Array2<f64>> {
    let mut rows = Vec::new();
    let mut width = 0;
    let mut count = 0;
    for h in channels {
        let row = preprocess_input(h, stats)?;
        width = row.len();
        rows.extend(row);
        count += 1;
    }
    Array2::from_shape_vec((count, width), rows).map_err(|e| Error::Shape(e.to_string()))
}

/// Input batch and targets for every sample of a dataset.
pub fn training_tensors(ds: &Dataset) -> Result<(Array2<f64>, Targets)> {
    let stats = ds
        .metadata
        .normalization
        .ok_or_else(|| Error::Contract("dataset has no normalization statistics (empty?)".into()))?;
    let cfg = ds.config();
    let inputs = preprocess_batch(ds.samples.iter().map(|s| &s.channel), &stats)?;
    let powers = cfg.n_bs() * cfg.n_subchannels;
    let flat: Vec<f64> = ds.samples.iter().flat_map(|s| s.normalized_power(cfg)).collect();
    let power = Array2::from_shape_vec((ds.len(), powers), flat).map_err(|e| Error::Shape(e.to_string()))?;
    let classes = ds.samples.iter().map(|s| s.assignment_class).collect();
    let targets = Targets::new(classes, power, AssignmentCatalog::new(cfg).len())?;
    Ok((inputs, targets))
}

/// Watts to per-BS normalized units (`p / P_max(n)`).
pub fn normalize_power(power_w: &[f64], cfg: &NetworkConfig) -> Vec<f64> {
    let k = cfg.n_subchannels;
    power_w.iter().enumerate().map(|(i, w)| w / cfg.p_max(i / k)).collect()
}

/// Normalized units to watts, clamping each entry to `[0, 1]` first.
pub fn denormalize_power(power_norm: &[f64], cfg: &NetworkConfig) -> Vec<f64> {
    let k = cfg.n_subchannels;
    power_norm
        .iter()
        .enumerate()
        .map(|(i, t)| clamp_unit(*t) * cfg.p_max(i / k))
        .collect()
}

fn clamp_unit(t: f64) -> f64 {
    // NaN maps to 0
    if t > 0.0 {
        t.min(1.0)
    } else {
        0.0
    }
}

/// How regressed powers are turned into watts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerDecoding {
    /// Clamp to `[0, 1]`, scale by `P_max(n)`, and rescale any BS whose sum
    /// exceeds its cap.
    Continuous,
    /// As `Continuous`, then round each BS's vector onto the `P_max / levels`
    /// grid the oracle searches, keeping the sum within the cap.
    Grid { levels: u32 },
}

/// Turns a network output into a feasible allocation: the most probable
/// catalog assignment plus projected powers.
pub fn decode_allocation(
    output: &ModelOutput,
    cfg: &NetworkConfig,
    catalog: &AssignmentCatalog,
    decoding: PowerDecoding,
) -> Allocation {
    assert_eq!(output.class_probs.len(), catalog.len(), "class head width");
    assert_eq!(
        output.power_norm.len(),
        cfg.n_bs() * cfg.n_subchannels,
        "power head width"
    );
    let class = output
        .class_probs
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &p)| if p > best.1 { (i, p) } else { best },
        )
        .0;
    let mut alloc = catalog.allocation(cfg, class);
    let watts = denormalize_power(&output.power_norm, cfg);
    let k = cfg.n_subchannels;
    for n in 0..cfg.n_bs() {
        let cap = cfg.p_max(n);
        let mut row = watts[n * k..(n + 1) * k].to_vec();
        let sum: f64 = row.iter().sum();
        if sum > cap {
            let scale = cap / sum;
            row.iter_mut().for_each(|w| *w *= scale);
        }
        if let PowerDecoding::Grid { levels } = decoding {
            row = snap_to_grid(&row, cap, levels);
        }
        for (kk, w) in row.into_iter().enumerate() {
            alloc.set_power(n, kk, w);
        }
    }
    alloc
}

/// Rounds each entry to the nearest multiple of `cap / levels`; if rounding up
/// pushed the level sum past `levels`, the entries rounded up the most are
/// lowered one step at a time (lowest index first on ties).
fn snap_to_grid(row: &[f64], cap: f64, levels: u32) -> Vec<f64> {
    let scaled: Vec<f64> = row.iter().map(|w| w / cap * levels as f64).collect();
    let mut lv: Vec<u32> = scaled
        .iter()
        .map(|x| x.round().clamp(0.0, levels as f64) as u32)
        .collect();
    while lv.iter().sum::<u32>() > levels {
        let (i, _) = lv
            .iter()
            .zip(&scaled)
            .enumerate()
            .filter(|(_, (&l, _))| l > 0)
            .map(|(i, (&l, &x))| (i, l as f64 - x))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, excess)| {
                if excess > best.1 {
                    (i, excess)
                } else {
                    best
                }
            });
        lv[i] -= 1;
    }
    lv.iter().map(|&l| cap * l as f64 / levels as f64).collect()
}
