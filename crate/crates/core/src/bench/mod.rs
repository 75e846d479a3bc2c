//! Experiment drivers behind the `modfield` command line. Every command
//! writes plot-ready CSV files plus a `manifest.json` listing each output
//! with its SHA-256.

mod commands;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use commands::*;

use crate::error::{Error, Result};
use crate::field::{max_abs_diff, FieldLike};
use crate::integrators::Stepper;
use crate::modified_field::{truncated_field, ExactMidpointField};
use crate::neural::{load_model, ModifiedFieldModel};
use crate::systems::{reference_flow, VectorFieldSpec};
use crate::training::TrainConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a command did: its configuration, inputs, and checksummed outputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<Artifact>,
    pub seconds: f64,
}

/// Bookkeeping for one command invocation.
pub struct Run {
    command: String,
    seed: u64,
    out_dir: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    start: Instant,
}

impl Run {
    pub fn new(command: &str, seed: u64, out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Run {
            command: command.to_string(),
            seed,
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            start: Instant::now(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// The `# ` comment lines that open every CSV.
    pub fn comments(&self) -> Vec<String> {
        vec![
            format!("command: {}", self.command),
            format!("version: {VERSION}"),
            format!("seed: {}", self.seed),
        ]
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Records a file written elsewhere as an output.
    pub fn record(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Opens `name` inside the output directory and records it as an output.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir.join(name);
        self.outputs.push(path.clone());
        Ok(BufWriter::new(File::create(path)?))
    }

    /// Writes a CSV table with the comment block and the header row.
    pub fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let comments = self.comments();
        let mut w = self.create(name)?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "{}", header.join(","))?;
        for r in rows {
            writeln!(w, "{}", r.join(","))?;
        }
        w.flush()?;
        Ok(self.out_dir.join(name))
    }

    /// Checksums every output and writes `manifest.json`.
    pub fn finish(self, config: &str) -> Result<RunManifest> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p)?;
                Ok(Artifact {
                    path: p.clone(),
                    sha256: format!("{:x}", Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command,
            version: VERSION.to_string(),
            seed: self.seed,
            config: config.to_string(),
            inputs: self.inputs,
            outputs,
            seconds: self.start.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        std::fs::write(self.out_dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

/// 17 significant digits, or `nan`/`inf` for non-finite values.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string().to_lowercase()
    }
}

/// A field to integrate, chosen on the command line.
pub enum ModelChoice {
    /// The base field `f`.
    Bare,
    /// The analytic truncation `f~_h^k` (or the exact midpoint modified field).
    Exact(usize),
    Learned(Box<ModifiedFieldModel>),
}

impl ModelChoice {
    /// `bare`, `exact:K`, or the path of a model checkpoint.
    pub fn parse(arg: &str) -> Result<Self> {
        if arg == "bare" {
            return Ok(ModelChoice::Bare);
        }
        if let Some(k) = arg.strip_prefix("exact:") {
            let k = k
                .parse()
                .map_err(|_| Error::Config(format!("invalid truncation order in '{arg}'")))?;
            return Ok(ModelChoice::Exact(k));
        }
        Ok(ModelChoice::Learned(Box::new(load_model(Path::new(arg))?)))
    }

    pub fn label(&self) -> String {
        match self {
            ModelChoice::Bare => "bare".into(),
            ModelChoice::Exact(k) => format!("exact{k}"),
            ModelChoice::Learned(_) => "learned".into(),
        }
    }

    /// The field this choice stands for, on top of `base` for `scheme`.
    pub fn field(&self, base: &VectorFieldSpec, scheme: &str) -> Result<Box<dyn FieldLike>> {
        Ok(match self {
            ModelChoice::Bare => Box::new(base.clone()),
            ModelChoice::Exact(k) => exact_field(base, scheme, *k)?,
            ModelChoice::Learned(m) => Box::new((**m).clone()),
        })
    }
}

/// System and scheme for a command: taken from a learned model when one is
/// given, otherwise from the configuration.
pub fn setting(cfg: &TrainConfig, model: Option<&ModelChoice>) -> Result<(VectorFieldSpec, String, Stepper)> {
    if let Some(ModelChoice::Learned(m)) = model {
        let stepper = Stepper::by_name(m.scheme())?;
        return Ok((m.base().clone(), m.scheme().to_string(), stepper));
    }
    Ok((cfg.field()?, cfg.scheme.clone(), cfg.stepper()?))
}

/// `f~_h^k` for Euler and RK2; for the implicit midpoint rule the exact
/// modified field computed pointwise, whatever `k`.
pub fn exact_field(base: &VectorFieldSpec, scheme: &str, k: usize) -> Result<Box<dyn FieldLike>> {
    if scheme == "midpoint" {
        return Ok(Box::new(ExactMidpointField::new(base)));
    }
    Ok(Box::new(truncated_field(base, scheme, k)?))
}

/// Reference states at the given increasing times, stepping the reference
/// solver from one time to the next.
pub fn reference_states(field: &VectorFieldSpec, y0: &[f64], times: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    let mut y = y0.to_vec();
    for &t in times {
        if t > t_prev {
            y = reference_flow(field, &y, t - t_prev, tol)?;
            t_prev = t;
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Max-norm distance between matching states, maximized over the trajectory.
pub fn max_error(states: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    states
        .iter()
        .zip(reference)
        .map(|(a, b)| max_abs_diff(a, b))
        .fold(0.0, f64::max)
}

/// Default initial value of the trajectory experiments.
pub fn default_y0(system: &VectorFieldSpec) -> Vec<f64> {
    match system.name() {
        "rigid_body" => vec![1.1f64.cos(), 0.0, 1.1f64.sin()],
        _ => {
            let mut y = vec![0.0; system.dim()];
            y[0] = 1.5;
            y
        }
    }
}

/// Number of steps of size `h` that reach `t_end`; rejects horizons that
/// are not a whole number of steps.
pub fn steps_to(t_end: f64, h: f64) -> Result<usize> {
    let n = (t_end / h).round();
    if !(n >= 1.0) || ((n * h - t_end).abs() > 1e-9 * t_end.max(1.0)) {
        return Err(Error::InvalidArgument(format!("T = {t_end} is not a whole number of steps h = {h}")));
    }
    Ok(n as usize)
}
