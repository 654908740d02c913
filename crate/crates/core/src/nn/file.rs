//! Model files: a JSON header line describing the architecture, followed by
//! one JSON array per parameter tensor (each layer's weights, then its bias;
//! trunk first, then class head, then power head).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::model::{Arch, Model, NetDims};
use crate::dataset::NormStats;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "hetnet-ee-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    arch: Arch,
    dims: NetDims,
    trunk: Vec<LayerSpec>,
    normalization: Option<NormStats>,
    param_count: usize,
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let header = Header {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        arch: model.arch,
        dims: model.dims,
        trunk: model.trunk.iter().map(|l| l.spec.clone()).collect(),
        normalization: model.normalization,
        param_count: model.count_params(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for tensor in model.tensors() {
        serde_json::to_writer(&mut out, tensor).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))??;
    let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or_default();
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if format != MODEL_FORMAT || version != MODEL_VERSION as u64 {
        return Err(Error::Version {
            path: path.to_owned(),
            what: "model format",
            found: format!("{format} v{version}"),
            expected: format!("{MODEL_FORMAT} v{MODEL_VERSION}"),
        });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| parse_err(1, e.to_string()))?;
    let mut model =
        Model::from_trunk(header.arch, header.dims, header.trunk).map_err(|e| parse_err(1, e.to_string()))?;
    model.normalization = header.normalization;
    if model.count_params() != header.param_count {
        return Err(parse_err(
            1,
            format!(
                "header declares {} parameters, layout has {}",
                header.param_count,
                model.count_params()
            ),
        ));
    }
    for (i, tensor) in model.tensors_mut().enumerate() {
        let line_no = i + 2;
        let line = lines
            .next()
            .ok_or_else(|| parse_err(line_no, "truncated: missing parameter tensor".into()))??;
        let values: Vec<f64> = serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        if values.len() != tensor.len() {
            return Err(parse_err(
                line_no,
                format!("tensor has {} values, expected {}", values.len(), tensor.len()),
            ));
        }
        tensor.copy_from_slice(&values);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;
    use crate::nn::model::build_cnn;
    use ndarray::Array2;

    fn model() -> Model {
        let mut m = build_cnn(NetDims::from_config(&NetworkConfig::reference_scenario()), 3);
        m.initialize(8);
        m.normalization = Some(NormStats { mean: -10.5, std: 1.25 });
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let x = Array2::from_shape_fn((2, 36), |(i, j)| (i as f64 - j as f64) * 0.1);
        assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
    }

    #[test]
    fn corrupted_file_is_a_parse_error() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replacen(',', ",x", 1);
        std::fs::write(&path, lines.join("\n")).unwrap();
        match load_model(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, lines[..5].join("\n")).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn foreign_format_is_a_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        std::fs::write(&path, "{\"format\":\"hetnet-ee-model\",\"version\":7}\n").unwrap();
        assert!(matches!(load_model(&path), Err(Error::Version { .. })));
    }
}
