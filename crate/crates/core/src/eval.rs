//! Error rates, empirical CDFs, per-sample evaluation reports and the runtime
//! benchmark.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::NetworkConfig;
use crate::dataset::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::nn::{decode_allocation, preprocess_batch, preprocess_input, Model, PowerDecoding};
use crate::solver::{max_power, random_power, AssignmentCatalog, ExhaustiveSolver};
use crate::system::{check_feasible, energy_efficiency, Allocation};

/// Relative slack when checking that the oracle's EE bounds another method's.
pub const DOMINANCE_RTOL: f64 = 1e-9;

/// `|ee - ee_oracle| / ee_oracle`.
pub fn error_rate(ee: f64, ee_oracle: f64) -> Result<f64> {
    if ee_oracle == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok((ee - ee_oracle).abs() / ee_oracle)
}

/// Empirical CDF: values sorted ascending, the `i`-th (1-based) paired with `i / n`.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}

/// Linear-interpolated quantile of `values` (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn write_cdf(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut text = String::from("value,cumulative_fraction\n");
    for (v, f) in points {
        writeln!(text, "{v},{f}").expect("write to string");
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// The oracle's allocation stored with a sample.
pub fn oracle_allocation(sample: &LabeledSample, cfg: &NetworkConfig, catalog: &AssignmentCatalog) -> Allocation {
    let mut alloc = catalog.allocation(cfg, sample.assignment_class);
    alloc.power_w = sample.power_w.clone();
    alloc
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Seeds the RandomPower baseline.
    pub seed: u64,
    pub decoding: PowerDecoding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub sample_id: usize,
    pub seed: u64,
    /// EE per method, in [`EvalReport::methods`] order (oracle first).
    pub ee: Vec<f64>,
    /// Error rate per method; `None` where the oracle EE is zero.
    pub xi: Vec<Option<f64>>,
    pub feasible: Vec<bool>,
    /// The oracle's EE is at least every other method's (within [`DOMINANCE_RTOL`]).
    pub oracle_dominates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub methods: Vec<String>,
    pub rows: Vec<EvalRow>,
}

/// Scores the oracle labels, every model, RandomPower and MaxPower on each
/// sample of `data`.
pub fn evaluate(data: &Dataset, models: &[&Model], opts: EvalOptions) -> Result<EvalReport> {
    let cfg = data.config();
    let catalog = AssignmentCatalog::new(cfg);
    let mut methods = vec!["oracle".to_string()];
    for model in models {
        let mut name = model.arch.name().to_string();
        if methods.contains(&name) {
            name = format!("{name}{}", methods.len());
        }
        methods.push(name);
    }
    methods.push("random".into());
    methods.push("maxpower".into());

    let mut model_allocs: Vec<Vec<Allocation>> = Vec::with_capacity(models.len());
    for model in models {
        let stats = model
            .normalization
            .ok_or_else(|| Error::Contract(format!("{} model carries no input normalization", model.arch.name())))?;
        if model.dims.classes != catalog.len()
            || model.dims.input_len() != cfg.n_bs() * cfg.n_subchannels * cfg.n_users()
        {
            return Err(Error::Shape(format!(
                "{} model dimensions {:?} do not fit the dataset configuration",
                model.arch.name(),
                model.dims
            )));
        }
        let x = preprocess_batch(data.samples.iter().map(|s| &s.channel), &stats)?;
        let out = model.forward(&x)?;
        model_allocs.push(
            (0..data.len())
                .map(|i| decode_allocation(&out.row(i), cfg, &catalog, opts.decoding))
                .collect(),
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::with_capacity(data.len());
    for (i, sample) in data.samples.iter().enumerate() {
        let h = &sample.channel;
        let mut allocs = vec![oracle_allocation(sample, cfg, &catalog)];
        allocs.extend(model_allocs.iter().map(|m| m[i].clone()));
        allocs.push(random_power(cfg, &catalog, &mut rng));
        allocs.push(max_power(h, cfg, &catalog));

        let ee = allocs
            .iter()
            .map(|a| energy_efficiency(h, a, cfg))
            .collect::<Result<Vec<f64>>>()?;
        let feasible = allocs.iter().map(|a| check_feasible(a, cfg, h).is_ok()).collect();
        let xi = ee.iter().map(|&e| error_rate(e, ee[0]).ok()).collect();
        let oracle_dominates = ee[1..].iter().all(|&e| e <= ee[0] * (1.0 + DOMINANCE_RTOL));
        rows.push(EvalRow {
            sample_id: i,
            seed: sample.seed,
            ee,
            xi,
            feasible,
            oracle_dominates,
        });
    }
    Ok(EvalReport { methods, rows })
}

impl EvalReport {
    pub fn method_index(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    fn column(&self, method: &str) -> usize {
        self.method_index(method)
            .unwrap_or_else(|| panic!("no method {method:?} in report ({:?})", self.methods))
    }

    pub fn ee(&self, method: &str) -> Vec<f64> {
        let c = self.column(method);
        self.rows.iter().map(|r| r.ee[c]).collect()
    }

    /// Defined error rates of a method (undefined rows excluded).
    pub fn xi(&self, method: &str) -> Vec<f64> {
        let c = self.column(method);
        self.rows.iter().filter_map(|r| r.xi[c]).collect()
    }

    pub fn mean_ee(&self, method: &str) -> f64 {
        let v = self.ee(method);
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Fraction of rows with a defined error rate at most `threshold`.
    pub fn fraction_xi_at_most(&self, method: &str, threshold: f64) -> f64 {
        let v = self.xi(method);
        v.iter().filter(|&&x| x <= threshold).count() as f64 / v.len() as f64
    }

    pub fn all_oracle_dominates(&self) -> bool {
        self.rows.iter().all(|r| r.oracle_dominates)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,seed");
        for m in &self.methods {
            write!(out, ",ee_{m}").unwrap();
        }
        for m in &self.methods[1..] {
            write!(out, ",xi_{m}").unwrap();
        }
        for m in &self.methods {
            write!(out, ",feasible_{m}").unwrap();
        }
        out.push_str(",oracle_dominates\n");
        for r in &self.rows {
            write!(out, "{},{}", r.sample_id, r.seed).unwrap();
            for e in &r.ee {
                write!(out, ",{e}").unwrap();
            }
            for x in &r.xi[1..] {
                match x {
                    Some(x) => write!(out, ",{x}").unwrap(),
                    None => out.push(','),
                }
            }
            for f in &r.feasible {
                write!(out, ",{f}").unwrap();
            }
            writeln!(out, ",{}", r.oracle_dominates).unwrap();
        }
        out
    }

    /// Per-method aggregates for the sidecar metadata file.
    pub fn summary(&self) -> serde_json::Value {
        let methods: serde_json::Map<String, serde_json::Value> = self
            .methods
            .iter()
            .map(|m| {
                let xi = self.xi(m);
                let c = self.column(m);
                let value = serde_json::json!({
                    "mean_ee": self.mean_ee(m),
                    "median_ee": quantile(&self.ee(m), 0.5),
                    "xi_q10": quantile(&xi, 0.1),
                    "xi_median": quantile(&xi, 0.5),
                    "xi_q90": quantile(&xi, 0.9),
                    "fraction_xi_le_0.08": if xi.is_empty() { None } else { Some(self.fraction_xi_at_most(m, 0.08)) },
                    "fraction_xi_le_0.10": if xi.is_empty() { None } else { Some(self.fraction_xi_at_most(m, 0.10)) },
                    "undefined_xi_rows": self.rows.len() - xi.len(),
                    "feasible_rows": self.rows.iter().filter(|r| r.feasible[c]).count(),
                });
                (m.clone(), value)
            })
            .collect();
        serde_json::json!({
            "rows": self.rows.len(),
            "all_oracle_dominates": self.all_oracle_dominates(),
            "methods": methods,
        })
    }

    /// Writes the CSV report, `<path>.meta.json`, and two-column CDF files
    /// `<stem>.cdf_ee_<method>.csv` / `<stem>.cdf_xi_<method>.csv` beside it.
    pub fn write(&self, path: &Path, extra_meta: serde_json::Value) -> Result<Vec<std::path::PathBuf>> {
        std::fs::write(path, self.to_csv())?;
        let mut written = vec![path.to_owned()];
        let mut meta = self.summary();
        meta["run"] = extra_meta;
        let meta_path = path.with_extension("meta.json");
        std::fs::write(
            &meta_path,
            serde_json::to_string_pretty(&meta).map_err(std::io::Error::from)?,
        )?;
        written.push(meta_path);
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let dir = path.parent().unwrap_or(Path::new("."));
        for m in &self.methods {
            let ee_path = dir.join(format!("{stem}.cdf_ee_{m}.csv"));
            write_cdf(&cdf(&self.ee(m)), &ee_path)?;
            written.push(ee_path);
            if m != "oracle" {
                let xi_path = dir.join(format!("{stem}.cdf_xi_{m}.csv"));
                write_cdf(&cdf(&self.xi(m)), &xi_path)?;
                written.push(xi_path);
            }
        }
        Ok(written)
    }
}

/// A method timed by [`bench_runtime`].
pub enum BenchMethod<'a> {
    Oracle { levels: u32 },
    Model(&'a Model),
    Random,
    MaxPower,
}

impl BenchMethod<'_> {
    pub fn name(&self) -> String {
        match self {
            BenchMethod::Oracle { levels } => format!("oracle(L={levels})"),
            BenchMethod::Model(m) => m.arch.name().to_string(),
            BenchMethod::Random => "random".into(),
            BenchMethod::MaxPower => "maxpower".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeRow {
    pub method: String,
    pub samples: usize,
    pub total_s: f64,
    pub per_sample_s: f64,
    /// Per-sample time relative to the oracle's, in percent.
    pub percent_of_oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeTable {
    pub rows: Vec<RuntimeRow>,
}

impl RuntimeTable {
    pub fn row(&self, method: &str) -> Option<&RuntimeRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,samples,total_s,per_sample_s,percent_of_oracle\n");
        for r in &self.rows {
            let pct = r.percent_of_oracle.map(|p| p.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.method, r.samples, r.total_s, r.per_sample_s, pct
            )
            .unwrap();
        }
        out
    }
}

/// Wall-clock time of each method over every sample, one instance at a time
/// on the calling thread. Model timings cover preprocessing, inference and
/// decoding; oracle timings cover one exhaustive scan.
pub fn bench_runtime(methods: &[BenchMethod<'_>], data: &Dataset, decoding: PowerDecoding) -> Result<RuntimeTable> {
    if data.is_empty() {
        return Ok(RuntimeTable { rows: Vec::new() });
    }
    let cfg = data.config();
    let catalog = AssignmentCatalog::new(cfg);
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let start = Instant::now();
        let mut sink = 0.0;
        match method {
            BenchMethod::Oracle { levels } => {
                let solver = ExhaustiveSolver::new(cfg, *levels);
                for s in &data.samples {
                    sink += solver.solve_sequential(&s.channel).ee;
                }
            }
            BenchMethod::Model(model) => {
                let stats = model
                    .normalization
                    .ok_or_else(|| Error::Contract("model carries no input normalization".into()))?;
                for s in &data.samples {
                    let out = model.predict(&preprocess_input(&s.channel, &stats)?)?;
                    sink += decode_allocation(&out, cfg, &catalog, decoding).power_w[0];
                }
            }
            BenchMethod::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                for _ in &data.samples {
                    sink += random_power(cfg, &catalog, &mut rng).power_w[0];
                }
            }
            BenchMethod::MaxPower => {
                for s in &data.samples {
                    sink += max_power(&s.channel, cfg, &catalog).power_w[0];
                }
            }
        }
        std::hint::black_box(sink);
        let total_s = start.elapsed().as_secs_f64();
        rows.push(RuntimeRow {
            method: method.name(),
            samples: data.len(),
            total_s,
            per_sample_s: total_s / data.len() as f64,
            percent_of_oracle: None,
        });
    }
    if let Some(oracle) = methods
        .iter()
        .position(|m| matches!(m, BenchMethod::Oracle { .. }))
        .map(|i| rows[i].per_sample_s)
    {
        for r in &mut rows {
            r.percent_of_oracle = Some(100.0 * r.per_sample_s / oracle);
        }
    }
    Ok(RuntimeTable { rows })
}
