use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::neural::fmt17;
use crate::systems::reference_flow;

/// One training sample: `y1 ≈ φ_h(y0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub y0: Vec<f64>,
    pub h: f64,
    pub y1: Vec<f64>,
}

/// Random streams reserved for shuffling; record `i` uses stream `i`.
pub(crate) const STREAM_SPLIT: u64 = 1 << 62;
pub(crate) const STREAM_EPOCH: u64 = 1 << 63;

const MAX_RESAMPLES: usize = 100;

/// Records plus the number of draws rejected because the reference solver failed.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub resampled: usize,
}

/// `cfg.k` records with `y0` uniform on the domain and `log h` uniform on
/// `[log h_min, log h_max]`. Record `i` draws from its own random stream,
/// so the result does not depend on the number of worker threads.
pub fn generate_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    cfg.validate_allow_empty()?;
    let field = cfg.field()?;
    let domain = cfg.domain()?;
    let (lo, hi) = (cfg.h_min.ln(), cfg.h_max.ln());
    let out = (0..cfg.k)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let mut failures = 0;
            loop {
                let y0 = domain.sample(&mut rng)?;
                let h = rng.gen_range(lo..hi).exp();
                match reference_flow(&field, &y0, h, cfg.ref_tol) {
                    Ok(y1) => return Ok((DatasetRecord { y0, h, y1 }, failures)),
                    Err(e) if failures < MAX_RESAMPLES => {
                        log::warn!("record {i}: reference flow failed ({e}); resampling");
                        failures += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let resampled = out.iter().map(|(_, f)| f).sum();
    Ok(Dataset {
        records: out.into_iter().map(|(r, _)| r).collect(),
        resampled,
    })
}

/// Deterministic shuffle, then the first `⌊fraction·K⌋` records train.
pub fn split_dataset(records: &[DatasetRecord], fraction: f64, seed: u64) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let n_train = ((fraction * records.len() as f64) * (1.0 + 1e-12)).floor() as usize;
    let mut idx: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SPLIT);
    idx.shuffle(&mut rng);
    let pick = |ids: &[usize]| ids.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..])))
}

/// Writes the dataset CSV. `comments` are extra `# ` lines placed before
/// the `# d=..,system=..,scheme=..,tol=..` line.
pub fn write_dataset<W: Write>(
    out: W,
    records: &[DatasetRecord],
    d: usize,
    system: &str,
    scheme: &str,
    tol: f64,
    comments: &[String],
) -> Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "# d={d},system={system},scheme={scheme},tol={tol:e}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=d).map(|i| format!("y0_{i}")).collect();
    header.push("h".into());
    header.extend((1..=d).map(|i| format!("y1_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        if r.y0.len() != d || r.y1.len() != d {
            return Err(Error::ShapeMismatch(format!("record has dimension {}, expected {d}", r.y0.len())));
        }
        let row = r.y0.iter().chain(std::iter::once(&r.h)).chain(&r.y1).map(|v| fmt17(*v));
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// Metadata from the `# d=..` line of a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub d: usize,
    pub system: String,
    pub scheme: String,
    pub tol: f64,
}

pub fn read_dataset<R: BufRead>(input: R, path: &std::path::Path) -> Result<(DatasetHeader, Vec<DatasetRecord>)> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut text = String::new();
    let mut header = None;
    for line in input.lines() {
        let line = line?;
        if let Some(c) = line.strip_prefix('#') {
            let c = c.trim();
            if c.starts_with("d=") {
                header = Some(parse_header(c).ok_or_else(|| corrupt(format!("bad header line '{c}'")))?);
            }
            continue;
        }
        text.push_str(&line);
        text.push('\n');
    }
    let header = header.ok_or_else(|| corrupt("missing '# d=...' header line".into()))?;
    let d = header.d;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let cols = rdr.headers().map_err(|e| corrupt(e.to_string()))?.len();
    if cols != 2 * d + 1 {
        return Err(Error::ShapeMismatch(format!("expected {} columns for d={d}, found {cols}", 2 * d + 1)));
    }
    let mut records = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| corrupt(e.to_string()))?;
        let vals = row
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| corrupt(format!("row {}: {e}", n + 1)))?;
        records.push(DatasetRecord {
            y0: vals[..d].to_vec(),
            h: vals[d],
            y1: vals[d + 1..].to_vec(),
        });
    }
    Ok((header, records))
}

fn parse_header(c: &str) -> Option<DatasetHeader> {
    let mut d = None;
    let mut system = None;
    let mut scheme = None;
    let mut tol = None;
    for part in c.split(',') {
        let (k, v) = part.split_once('=')?;
        match k.trim() {
            "d" => d = v.trim().parse().ok(),
            "system" => system = Some(v.trim().to_string()),
            "scheme" => scheme = Some(v.trim().to_string()),
            "tol" => tol = v.trim().parse().ok(),
            _ => {}
        }
    }
    Some(DatasetHeader {
        d: d?,
        system: system?,
        scheme: scheme?,
        tol: tol?,
    })
}
