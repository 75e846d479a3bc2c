//! JSON model checkpoints. Every real number is written with 17 significant
//! digits so parameters round-trip exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::mlp::Mlp;
use super::model::ModifiedFieldModel;
use crate::error::{Error, Result};
use crate::systems::VectorFieldSpec;

pub const FORMAT_VERSION: u64 = 1;

/// A float serialized as `{:.16e}`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("non-finite value {}", self.0)));
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize, Deserialize)]
struct NetDoc<N> {
    role: String,
    layer_sizes: Vec<usize>,
    /// Row-major `out x in` matrix per layer.
    weights: Vec<Vec<N>>,
    biases: Vec<Vec<N>>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc<N> {
    version: u64,
    system: String,
    system_params: Vec<N>,
    dim: usize,
    scheme: String,
    p: usize,
    n_terms: usize,
    nets: Vec<NetDoc<N>>,
}

fn net_doc(role: String, net: &Mlp) -> NetDoc<F17> {
    let layers = net.sizes().len() - 1;
    let (weights, biases) = (0..layers)
        .map(|l| {
            let (w, b) = net.layer(l);
            (w.iter().map(|&v| F17(v)).collect(), b.iter().map(|&v| F17(v)).collect())
        })
        .unzip();
    NetDoc {
        role,
        layer_sizes: net.sizes().to_vec(),
        weights,
        biases,
    }
}

/// The checkpoint document as a string.
pub fn model_to_json(model: &ModifiedFieldModel) -> Result<String> {
    let mut nets: Vec<NetDoc<F17>> = model
        .terms()
        .iter()
        .enumerate()
        .map(|(j, n)| net_doc(format!("term{}", j + 1), n))
        .collect();
    nets.push(net_doc("remainder".into(), model.remainder()));
    let doc = ModelDoc {
        version: FORMAT_VERSION,
        system: model.base().name().to_string(),
        system_params: model.base().parameters().into_iter().map(F17).collect(),
        dim: model.base().dim(),
        scheme: model.scheme().to_string(),
        p: model.p(),
        n_terms: model.n_terms(),
        nets,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidArgument(format!("cannot serialize model: {e}")))
}

pub fn save_model(model: &ModifiedFieldModel, path: &Path) -> Result<()> {
    let mut text = model_to_json(model)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Parses a checkpoint document; `path` is only used in error messages.
pub fn model_from_json(text: &str, path: &Path) -> Result<ModifiedFieldModel> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(format!("invalid JSON: {e}")))?;
    let version = value
        .get("version")
        .ok_or_else(|| corrupt("missing version field".into()))?
        .as_u64()
        .ok_or_else(|| corrupt("version is not an unsigned integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let doc: ModelDoc<f64> = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    let base = VectorFieldSpec::from_parts(&doc.system, &doc.system_params).map_err(|e| corrupt(e.to_string()))?;
    if doc.dim != base.dim() {
        return Err(Error::ShapeMismatch(format!(
            "file declares dimension {}, system '{}' has dimension {}",
            doc.dim,
            doc.system,
            base.dim()
        )));
    }
    if doc.n_terms == 0 || doc.nets.len() != doc.n_terms {
        return Err(Error::ShapeMismatch(format!(
            "n_terms = {} but the file holds {} networks",
            doc.n_terms,
            doc.nets.len()
        )));
    }
    let mut nets = doc
        .nets
        .iter()
        .map(|n| Mlp::from_layers(&n.layer_sizes, &n.weights, &n.biases))
        .collect::<Result<Vec<_>>>()?;
    if nets.iter().flat_map(|n| n.params()).any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite parameter".into()));
    }
    let remainder = nets.pop().unwrap();
    ModifiedFieldModel::from_nets(&base, &doc.scheme, doc.p, nets, remainder)
}

pub fn load_model(path: &Path) -> Result<ModifiedFieldModel> {
    let text = fs::read_to_string(path)?;
    model_from_json(&text, path)
}
