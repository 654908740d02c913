//! Labeled datasets: channel realizations paired with the oracle's decision,
//! and their line-delimited file format.
//!
//! A dataset file holds one JSON object per line. Line 1 is the metadata
//! header; every following line is one [`LabeledSample`]. Floats are written
//! in shortest round-trip form, so a load reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, place_users};
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::solver::ExhaustiveSolver;
use crate::system::ChannelTensor;

pub const DATASET_FORMAT: &str = "hetnet-ee-dataset";
pub const DATASET_VERSION: u32 = 1;

/// Seed of sample `index`: output `index + 1` of a SplitMix64 stream started
/// at `master_seed`. Each sample's RNG depends only on this value, so samples
/// can be generated in any order.
pub fn sample_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws layout and channel for one seed.
pub fn realize_channel(cfg: &NetworkConfig, seed: u64) -> ChannelTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = place_users(cfg, &mut rng);
    draw_channel(cfg, &layout, seed, &mut rng)
}

/// Mean and population standard deviation of `log10` channel gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn from_channels<'a>(channels: impl Iterator<Item = &'a ChannelTensor> + Clone) -> Option<Self> {
        let mut count = 0usize;
        let mut sum = 0.0;
        for h in channels.clone() {
            for g in &h.gains {
                sum += g.log10();
                count += 1;
            }
        }
        if count == 0 {
            return None;
        }
        let mean = sum / count as f64;
        let var = channels
            .flat_map(|h| h.gains.iter())
            .map(|g| (g.log10() - mean).powi(2))
            .sum::<f64>()
            / count as f64;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleParams {
    pub grid_levels: u32,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            grid_levels: crate::solver::DEFAULT_GRID_LEVELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub seed: u64,
    pub channel: ChannelTensor,
    /// Joint index into the assignment catalog.
    pub assignment_class: usize,
    /// Oracle powers in watts, `[n][k]` row-major.
    pub power_w: Vec<f64>,
    pub ee_opt: f64,
}

impl LabeledSample {
    /// Oracle powers divided by each BS's cap, in `[0, 1]`.
    pub fn normalized_power(&self, cfg: &NetworkConfig) -> Vec<f64> {
        let k = cfg.n_subchannels;
        self.power_w
            .iter()
            .enumerate()
            .map(|(i, w)| w / cfg.p_max(i / k))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub format: String,
    pub version: u32,
    pub config: NetworkConfig,
    pub master_seed: u64,
    pub oracle: OracleParams,
    /// Realizations drawn, including skipped ones.
    pub requested: usize,
    /// Realizations dropped because no allocation met the SE target.
    pub skipped_infeasible: usize,
    pub sample_count: usize,
    pub normalization: Option<NormStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub metadata: DatasetMetadata,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.metadata.config
    }

    /// Fails with a version error unless the dataset was generated under `cfg`.
    pub fn ensure_config(&self, cfg: &NetworkConfig, path: &Path) -> Result<()> {
        if &self.metadata.config != cfg {
            return Err(Error::Version {
                path: path.to_owned(),
                what: "network configuration",
                found: serde_json::to_string(&self.metadata.config).unwrap_or_default(),
                expected: serde_json::to_string(cfg).unwrap_or_default(),
            });
        }
        Ok(())
    }

    /// Keeps the first `count` samples (and their statistics).
    pub fn truncated(&self, count: usize) -> Dataset {
        let samples: Vec<_> = self.samples.iter().take(count).cloned().collect();
        let mut metadata = self.metadata.clone();
        metadata.sample_count = samples.len();
        metadata.normalization = NormStats::from_channels(samples.iter().map(|s| &s.channel));
        Dataset { metadata, samples }
    }
}

/// Generates `count` realizations and labels each with the exhaustive oracle.
/// Realizations with no feasible allocation are skipped and counted.
pub fn generate_dataset(cfg: &NetworkConfig, count: usize, master_seed: u64, oracle: OracleParams) -> Result<Dataset> {
    generate_dataset_with_progress(cfg, count, master_seed, oracle, |_| {})
}

/// As [`generate_dataset`], calling `progress(done)` after each realization.
pub fn generate_dataset_with_progress<F>(
    cfg: &NetworkConfig,
    count: usize,
    master_seed: u64,
    oracle: OracleParams,
    progress: F,
) -> Result<Dataset>
where
    F: Fn(usize) + Sync,
{
    cfg.validate()?;
    if oracle.grid_levels < 1 {
        return Err(Error::Config("oracle grid needs at least one level".into()));
    }
    let solver = ExhaustiveSolver::new(cfg, oracle.grid_levels);
    let done = std::sync::atomic::AtomicUsize::new(0);
    let labeled: Vec<Option<LabeledSample>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = sample_seed(master_seed, i);
            let channel = realize_channel(cfg, seed);
            let sol = solver.solve_sequential(&channel);
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
            sol.feasible.then_some(LabeledSample {
                seed,
                channel,
                assignment_class: sol.assignment_index,
                power_w: sol.allocation.power_w,
                ee_opt: sol.ee,
            })
        })
        .collect();
    let skipped = labeled.iter().filter(|s| s.is_none()).count();
    let samples: Vec<LabeledSample> = labeled.into_iter().flatten().collect();
    Ok(Dataset {
        metadata: DatasetMetadata {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            config: cfg.clone(),
            master_seed,
            oracle,
            requested: count,
            skipped_infeasible: skipped,
            sample_count: samples.len(),
            normalization: NormStats::from_channels(samples.iter().map(|s| &s.channel)),
        },
        samples,
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &ds.metadata).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for sample in &ds.samples {
        serde_json::to_writer(&mut out, sample).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))??;

    let raw: serde_json::Value = serde_json::from_str(&header).map_err(|e| parse_err(1, e.to_string()))?;
    let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or_default();
    if format != DATASET_FORMAT {
        return Err(Error::Version {
            path: path.to_owned(),
            what: "file format",
            found: format.into(),
            expected: DATASET_FORMAT.into(),
        });
    }
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != DATASET_VERSION as u64 {
        return Err(Error::Version {
            path: path.to_owned(),
            what: "dataset version",
            found: version.to_string(),
            expected: DATASET_VERSION.to_string(),
        });
    }
    let metadata: DatasetMetadata = serde_json::from_value(raw).map_err(|e| parse_err(1, e.to_string()))?;

    let mut samples = Vec::with_capacity(metadata.sample_count);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: LabeledSample = serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        if !sample.channel.matches(&metadata.config) {
            return Err(parse_err(
                line_no,
                "channel shape does not match the header configuration".into(),
            ));
        }
        samples.push(sample);
    }
    if samples.len() != metadata.sample_count {
        return Err(parse_err(
            samples.len() + 2,
            format!(
                "truncated: header declares {} samples, found {}",
                metadata.sample_count,
                samples.len()
            ),
        ));
    }
    Ok(Dataset { metadata, samples })
}
