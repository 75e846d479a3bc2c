use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::{default_y0, exact_field, max_error, num, reference_states, setting, steps_to, ModelChoice, Run, RunManifest};
use crate::error::{Error, Result};
use crate::field::{max_abs_diff, FieldLike};
use crate::integrators::{dopri5_integrate, integrate, order_estimate, Stepper};
use crate::neural::{save_model, ModifiedFieldModel};
use crate::training::{
    alt_steps, alt_train, generate_alt_samples, generate_dataset, learning_error_delta, log_spaced, read_dataset,
    split_dataset, train, write_dataset, Dataset, DatasetRecord, LossReport, TrainConfig,
};

pub struct TrainOutcome {
    pub model: ModifiedFieldModel,
    pub report: LossReport,
    pub manifest: RunManifest,
}

/// Splits `records`, initializes a model from `cfg` and trains it.
pub fn train_model(cfg: &TrainConfig, records: &[DatasetRecord]) -> Result<(ModifiedFieldModel, LossReport)> {
    cfg.validate()?;
    let (tr, te) = split_dataset(records, cfg.train_fraction, cfg.seed)?;
    let model = ModifiedFieldModel::new(&cfg.field()?, &cfg.scheme, cfg.p, cfg.n_terms, &cfg.hidden(), cfg.seed)?;
    train(model, &cfg.stepper()?, &tr, &te, cfg)
}

/// Writes `dataset.csv`.
pub fn cmd_generate(cfg: &TrainConfig, out: &Path) -> Result<(Dataset, RunManifest)> {
    let mut run = Run::new("generate", cfg.seed, out)?;
    let data = generate_dataset(cfg)?;
    if data.resampled > 0 {
        log::warn!("{} draws resampled after reference-flow failures", data.resampled);
    }
    let field = cfg.field()?;
    let comments = run.comments();
    let mut w = run.create("dataset.csv")?;
    write_dataset(&mut w, &data.records, field.dim(), &cfg.system, &cfg.scheme, cfg.ref_tol, &comments)?;
    w.flush()?;
    drop(w);
    let manifest = run.finish(&cfg.to_text())?;
    Ok((data, manifest))
}

/// Trains on `data` (or on freshly generated records) and writes
/// `model.json` and `loss.csv`.
pub fn cmd_train(cfg: &TrainConfig, data: Option<&Path>, out: &Path) -> Result<TrainOutcome> {
    let mut run = Run::new("train", cfg.seed, out)?;
    cfg.validate()?;
    let records = match data {
        Some(path) => {
            run.input(path);
            let file = std::fs::File::open(path)?;
            let (header, records) = read_dataset(std::io::BufReader::new(file), path)?;
            if header.system != cfg.system || header.d != cfg.field()?.dim() {
                return Err(Error::Config(format!(
                    "dataset is for system '{}' (d={}), config says '{}'",
                    header.system, header.d, cfg.system
                )));
            }
            records
        }
        None => generate_dataset(cfg)?.records,
    };
    let (model, report) = train_model(cfg, &records)?;
    let path = out.join("model.json");
    save_model(&model, &path)?;
    run.record(&path);
    let comments = run.comments();
    let mut w = run.create("loss.csv")?;
    report.write_csv(&mut w, &comments)?;
    w.flush()?;
    drop(w);
    let manifest = run.finish(&cfg.to_text())?;
    Ok(TrainOutcome { model, report, manifest })
}

pub struct AltOutcome {
    pub model: ModifiedFieldModel,
    /// One report per network, term networks first, remainder last.
    pub reports: Vec<LossReport>,
    pub manifest: RunManifest,
}

/// Alternative per-term training; writes `model.json`, `loss_term{m}.csv`
/// and `loss_remainder.csv`.
pub fn cmd_train_alt(cfg: &TrainConfig, out: &Path) -> Result<AltOutcome> {
    let mut run = Run::new("train-alt", cfg.seed, out)?;
    let samples = generate_alt_samples(cfg)?;
    let (model, reports) = alt_train(&samples, &alt_steps(cfg), cfg)?;
    let path = out.join("model.json");
    save_model(&model, &path)?;
    run.record(&path);
    let comments = run.comments();
    for (j, rep) in reports.iter().enumerate() {
        let name = if j + 1 < reports.len() {
            format!("loss_term{}.csv", j + 1)
        } else {
            "loss_remainder.csv".to_string()
        };
        let mut w = run.create(&name)?;
        rep.write_csv(&mut w, &comments)?;
        w.flush()?;
    }
    let manifest = run.finish(&cfg.to_text())?;
    Ok(AltOutcome {
        model,
        reports,
        manifest,
    })
}

#[derive(Clone, Debug)]
pub struct FieldErrorMapOptions {
    /// Truncation order of the analytic reference.
    pub k: usize,
    /// Step of the spatial map.
    pub h: f64,
    pub grid_n: usize,
    /// Number of log-spaced steps over `[h_min, h_max]` for the max-vs-h table.
    pub n_steps: usize,
}

pub struct FieldErrorMap {
    /// Grid point and `g` at the chosen step.
    pub grid: Vec<(Vec<f64>, f64)>,
    /// `(h, max_Ω g)`.
    pub max_by_step: Vec<(f64, f64)>,
    pub manifest: RunManifest,
}

fn scaled_gap(model: &dyn FieldLike, reference: &dyn FieldLike, y: &[f64], h: f64, p: usize) -> f64 {
    max_abs_diff(&reference.eval(y, h), &model.eval(y, h)) / h.powi(p as i32)
}

/// `g = |f~_h^k - model|_∞ / h^p` on a grid (`field_error_map.csv`) and
/// its maximum over the grid against `h` (`field_error_vs_h.csv`).
pub fn cmd_field_error_map(cfg: &TrainConfig, model: &ModelChoice, opts: &FieldErrorMapOptions, out: &Path) -> Result<FieldErrorMap> {
    let mut run = Run::new("field-error-map", cfg.seed, out)?;
    let (base, scheme, stepper) = setting(cfg, Some(model))?;
    let p = stepper.order();
    let reference = exact_field(&base, &scheme, opts.k)?;
    let model_field = model.field(&base, &scheme)?;
    if !(opts.h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {}", opts.h)));
    }
    let points = cfg.domain()?.grid(opts.grid_n);
    let grid: Vec<(Vec<f64>, f64)> = points
        .par_iter()
        .map(|y| (y.clone(), scaled_gap(&*model_field, &*reference, y, opts.h, p)))
        .collect();
    let steps = log_spaced(cfg.h_min, cfg.h_max, opts.n_steps);
    let max_by_step: Vec<(f64, f64)> = steps
        .iter()
        .map(|&h| {
            let g = points
                .par_iter()
                .map(|y| scaled_gap(&*model_field, &*reference, y, h, p))
                .reduce(|| 0.0, f64::max);
            (h, g)
        })
        .collect();

    let d = base.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("g".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = grid
        .iter()
        .map(|(y, g)| y.iter().chain(std::iter::once(g)).map(|v| num(*v)).collect())
        .collect();
    run.write_table("field_error_map.csv", &header, &rows)?;
    let rows: Vec<Vec<String>> = max_by_step.iter().map(|(h, g)| vec![num(*h), num(*g)]).collect();
    run.write_table("field_error_vs_h.csv", &["h", "max_g"], &rows)?;
    let manifest = run.finish(&format!("{}model={}\nk={}\nh={}\ngrid_n={}\n", cfg.to_text(), model.label(), opts.k, opts.h, opts.grid_n))?;
    Ok(FieldErrorMap {
        grid,
        max_by_step,
        manifest,
    })
}

#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    /// Initial value; `None` picks the system default.
    pub y0: Option<Vec<f64>>,
    pub t_end: f64,
    pub hs: Vec<f64>,
}

impl TrajectoryOptions {
    fn y0(&self, base: &crate::systems::VectorFieldSpec) -> Result<Vec<f64>> {
        let y0 = self.y0.clone().unwrap_or_else(|| default_y0(base));
        if y0.len() != base.dim() {
            return Err(Error::ShapeMismatch(format!("y0 has {} components, system has {}", y0.len(), base.dim())));
        }
        Ok(y0)
    }

    fn describe(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "y0={}\nt_end={}\nhs={}\n",
            self.y0.as_deref().map_or("default".into(), list),
            self.t_end,
            list(&self.hs)
        )
    }
}

/// Max-norm global error of `stepper` on `field` against the reference
/// flow of `base` at the step times.
pub fn global_error(
    stepper: &Stepper,
    field: &dyn FieldLike,
    base: &crate::systems::VectorFieldSpec,
    y0: &[f64],
    h: f64,
    t_end: f64,
    tol: f64,
) -> Result<f64> {
    let n = steps_to(t_end, h)?;
    let traj = integrate(stepper, field, y0, h, n)?;
    let reference = reference_states(base, y0, &traj.times, tol)?;
    Ok(max_error(&traj.states, &reference))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub err_f: f64,
    pub err_fapp: f64,
    /// `ok`, or the failure message of a run that did not finish.
    pub status: String,
}

pub struct Convergence {
    pub rows: Vec<ConvergenceRow>,
    /// Fitted slopes of `err_f` and `err_fapp` (needs two finite rows).
    pub slope_f: Option<f64>,
    pub slope_fapp: Option<f64>,
    pub manifest: RunManifest,
}

fn slope(rows: &[ConvergenceRow], pick: impl Fn(&ConvergenceRow) -> f64) -> Option<f64> {
    let (e, h): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| pick(r).is_finite() && pick(r) > 0.0)
        .map(|r| (pick(r), r.h))
        .unzip();
    if e.len() < 2 {
        return None;
    }
    order_estimate(&e, &h).ok()
}

/// Rows `h, err_f, err_fapp, status` with the bare scheme and the chosen
/// field. A failed run is recorded in its row.
pub fn cmd_convergence(cfg: &TrainConfig, model: &ModelChoice, opts: &TrajectoryOptions, out: &Path) -> Result<Convergence> {
    let mut run = Run::new("convergence", cfg.seed, out)?;
    let (base, scheme, stepper) = setting(cfg, Some(model))?;
    let model_field = model.field(&base, &scheme)?;
    let y0 = opts.y0(&base)?;
    for &h in &opts.hs {
        steps_to(opts.t_end, h)?;
    }
    let rows: Vec<ConvergenceRow> = opts
        .hs
        .par_iter()
        .map(|&h| {
            let mut status = Vec::new();
            let mut err = |field: &dyn FieldLike, what: &str| {
                global_error(&stepper, field, &base, &y0, h, opts.t_end, cfg.ref_tol).unwrap_or_else(|e| {
                    status.push(format!("{what}: {e}"));
                    f64::NAN
                })
            };
            let err_f = err(&base, "f");
            let err_fapp = err(&*model_field, "fapp");
            ConvergenceRow {
                h,
                err_f,
                err_fapp,
                status: if status.is_empty() {
                    "ok".into()
                } else {
                    status.join("; ").replace(',', ";")
                },
            }
        })
        .collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.h), num(r.err_f), num(r.err_fapp), r.status.clone()])
        .collect();
    run.write_table("convergence.csv", &["h", "err_f", "err_fapp", "status"], &table)?;
    let manifest = run.finish(&format!("{}model={}\n{}", cfg.to_text(), model.label(), opts.describe()))?;
    Ok(Convergence {
        slope_f: slope(&rows, |r| r.err_f),
        slope_fapp: slope(&rows, |r| r.err_fapp),
        rows,
        manifest,
    })
}

#[derive(Clone, Debug)]
pub struct EfficiencyOptions {
    pub trajectory: TrajectoryOptions,
    /// Tolerances for the adaptive reference method.
    pub tols: Vec<f64>,
    /// Timed runs per cell after one discarded warm-up run.
    pub repeats: usize,
    /// Truncation orders of the analytic modified fields to include.
    pub exact_orders: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyRow {
    pub method: String,
    pub h_or_tol: f64,
    pub seconds: f64,
    pub max_error: f64,
}

fn median_seconds<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut result = f()?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        result = f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let median = if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    };
    Ok((median, result))
}

/// Rows `method, h_or_tol, seconds, max_error` for the bare scheme, the
/// learned field (when given), analytic truncations, and the adaptive
/// Dormand–Prince solver. Timings are medians over `repeats` runs.
pub fn cmd_efficiency(cfg: &TrainConfig, model: Option<&ModelChoice>, opts: &EfficiencyOptions, out: &Path) -> Result<(Vec<EfficiencyRow>, RunManifest)> {
    if opts.repeats < 3 {
        return Err(Error::Config(format!("repeats must be >= 3, got {}", opts.repeats)));
    }
    let mut run = Run::new("efficiency", cfg.seed, out)?;
    let (base, scheme, stepper) = setting(cfg, model)?;
    let t = &opts.trajectory;
    let y0 = t.y0(&base)?;
    let mut fields: Vec<(String, Box<dyn FieldLike>)> = vec![(scheme.clone(), Box::new(base.clone()))];
    if let Some(m) = model {
        if !matches!(m, ModelChoice::Bare) {
            fields.push((format!("{scheme}+{}", m.label()), m.field(&base, &scheme)?));
        }
    }
    for &k in &opts.exact_orders {
        fields.push((format!("{scheme}+exact{k}"), exact_field(&base, &scheme, k)?));
    }
    let mut rows = Vec::new();
    for (name, field) in &fields {
        for &h in &t.hs {
            let n = steps_to(t.t_end, h)?;
            let (seconds, traj) = median_seconds(opts.repeats, || integrate(&stepper, &**field, &y0, h, n))?;
            let reference = reference_states(&base, &y0, &traj.times, cfg.ref_tol)?;
            rows.push(EfficiencyRow {
                method: name.clone(),
                h_or_tol: h,
                seconds,
                max_error: max_error(&traj.states, &reference),
            });
        }
    }
    for &tol in &opts.tols {
        let (seconds, traj) = median_seconds(opts.repeats, || dopri5_integrate(&base, &y0, t.t_end, tol, tol))?;
        let reference = reference_states(&base, &y0, &traj.times, cfg.ref_tol)?;
        rows.push(EfficiencyRow {
            method: "dopri5".into(),
            h_or_tol: tol,
            seconds,
            max_error: max_error(&traj.states, &reference),
        });
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.method.clone(), num(r.h_or_tol), format!("{:.6e}", r.seconds), num(r.max_error)])
        .collect();
    run.write_table("efficiency.csv", &["method", "h_or_tol", "seconds", "max_error"], &table)?;
    let label = model.map_or("none".into(), ModelChoice::label);
    let manifest = run.finish(&format!("{}model={label}\n{}repeats={}\n", cfg.to_text(), t.describe(), opts.repeats))?;
    Ok((rows, manifest))
}

pub struct InvariantDrift {
    pub times: Vec<f64>,
    /// `{trajectory}_{invariant}` column names, in table order.
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub manifest: RunManifest,
}

impl InvariantDrift {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i][..])
    }
}

/// `|I(y_n) - I(y0)|` for each declared invariant along the bare-field,
/// chosen-field and reference trajectories.
pub fn cmd_invariant_drift(cfg: &TrainConfig, model: &ModelChoice, y0: Option<Vec<f64>>, t_end: f64, h: f64, out: &Path) -> Result<InvariantDrift> {
    let mut run = Run::new("invariant-drift", cfg.seed, out)?;
    let (base, scheme, stepper) = setting(cfg, Some(model))?;
    let opts = TrajectoryOptions { y0, t_end, hs: vec![h] };
    let y0 = opts.y0(&base)?;
    let inv = base.invariant_names();
    if inv.is_empty() {
        return Err(Error::Config(format!("system '{}' declares no invariants", base.name())));
    }
    let n = steps_to(t_end, h)?;
    let bare = integrate(&stepper, &base, &y0, h, n)?;
    let learned = integrate(&stepper, &*model.field(&base, &scheme)?, &y0, h, n)?;
    let reference = reference_states(&base, &y0, &bare.times, cfg.ref_tol)?;
    let i0 = base.invariant_values(&y0);
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (label, states) in [("bare", &bare.states), (model.label().as_str(), &learned.states), ("reference", &reference)] {
        let values: Vec<Vec<f64>> = states.iter().map(|y| base.invariant_values(y)).collect();
        for (j, name) in inv.iter().enumerate() {
            names.push(format!("{label}_{name}"));
            columns.push(values.iter().map(|v| (v[j] - i0[j]).abs()).collect());
        }
    }
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = bare
        .times
        .iter()
        .enumerate()
        .map(|(i, t)| std::iter::once(num(*t)).chain(columns.iter().map(|c: &Vec<f64>| num(c[i]))).collect())
        .collect();
    run.write_table("invariant_drift.csv", &header, &rows)?;
    let manifest = run.finish(&format!("{}model={}\n{}", cfg.to_text(), model.label(), opts.describe()))?;
    Ok(InvariantDrift {
        times: bare.times,
        names,
        columns,
        manifest,
    })
}

#[derive(Clone, Debug)]
pub struct ParamStudyOptions {
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub data_sizes: Vec<usize>,
    /// Points per axis of the evaluation grid.
    pub grid_n: usize,
    /// Number of log-spaced evaluation steps over `[h_min, h_max]`.
    pub n_steps: usize,
}

impl Default for ParamStudyOptions {
    fn default() -> Self {
        ParamStudyOptions {
            widths: vec![10, 50],
            depths: vec![2],
            data_sizes: vec![100_000],
            grid_n: 41,
            n_steps: 15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStudyRow {
    pub width: usize,
    pub depth: usize,
    /// Weights of all networks, biases excluded.
    pub params_w: usize,
    pub data_k: usize,
    pub delta: f64,
}

/// Truncation order used for the learning error: 4 where available.
pub fn delta_order(scheme: &str) -> usize {
    if scheme.starts_with("rk2") {
        3
    } else {
        4
    }
}

/// Learning error of the configuration's model against the analytic field.
pub fn model_delta(cfg: &TrainConfig, model: &dyn FieldLike, grid_n: usize, n_steps: usize) -> Result<f64> {
    let base = cfg.field()?;
    let reference = exact_field(&base, &cfg.scheme, delta_order(&cfg.scheme))?;
    let hs = log_spaced(cfg.h_min, cfg.h_max, n_steps);
    learning_error_delta(model, &*reference, &cfg.domain()?, grid_n, &hs, cfg.p)
}

/// Trains one model per (width, depth, data size) and reports its learning
/// error, with `w^{1/2}` and `w^{-1/2}` reference columns.
pub fn cmd_param_study(cfg: &TrainConfig, opts: &ParamStudyOptions, out: &Path) -> Result<(Vec<ParamStudyRow>, RunManifest)> {
    let mut run = Run::new("param-study", cfg.seed, out)?;
    let k_max = opts.data_sizes.iter().copied().max().unwrap_or(0);
    let all = generate_dataset(&TrainConfig { k: k_max, ..cfg.clone() })?.records;
    let mut rows = Vec::new();
    for &data_k in &opts.data_sizes {
        for &depth in &opts.depths {
            for &width in &opts.widths {
                let c = TrainConfig {
                    k: data_k,
                    neurons: width,
                    hidden_layers: depth,
                    ..cfg.clone()
                };
                // Record i depends only on (seed, i), so a prefix is the smaller dataset.
                let (model, _) = train_model(&c, &all[..data_k])?;
                let params_w = model.nets().map(|n| n.sizes().windows(2).map(|w| w[0] * w[1]).sum::<usize>()).sum();
                rows.push(ParamStudyRow {
                    width,
                    depth,
                    params_w,
                    data_k,
                    delta: model_delta(&c, &model, opts.grid_n, opts.n_steps)?,
                });
            }
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let w = r.params_w as f64;
            vec![
                r.width.to_string(),
                r.depth.to_string(),
                r.params_w.to_string(),
                r.data_k.to_string(),
                num(r.delta),
                num(w.sqrt()),
                num(1.0 / w.sqrt()),
            ]
        })
        .collect();
    run.write_table(
        "param_study.csv",
        &["width", "depth", "params_w", "data_k", "delta", "w_pow_half", "w_pow_neg_half"],
        &table,
    )?;
    let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let manifest = run.finish(&format!(
        "{}widths={}\ndepths={}\ndata_sizes={}\ngrid_n={}\nn_steps={}\n",
        cfg.to_text(),
        list(&opts.widths),
        list(&opts.depths),
        list(&opts.data_sizes),
        opts.grid_n,
        opts.n_steps
    ))?;
    Ok((rows, manifest))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub h: f64,
    pub local_err_std: f64,
    pub local_err_alt: f64,
    pub global_err_std: f64,
    pub global_err_alt: f64,
    pub local_err_bare: f64,
    pub global_err_bare: f64,
}

/// Per-step defect `max_n |Φ_h(y(t_n)) - y(t_{n+1})|` along the exact
/// solution, and the global error, both in the max norm.
pub fn local_and_global_error(
    stepper: &Stepper,
    field: &dyn FieldLike,
    base: &crate::systems::VectorFieldSpec,
    y0: &[f64],
    h: f64,
    t_end: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let n = steps_to(t_end, h)?;
    let traj = integrate(stepper, field, y0, h, n)?;
    let exact = reference_states(base, y0, &traj.times, tol)?;
    let mut local: f64 = 0.0;
    for w in exact.windows(2) {
        local = local.max(max_abs_diff(&stepper.step(field, &w[0], h)?, &w[1]));
    }
    Ok((local, max_error(&traj.states, &exact)))
}

/// Local and global errors of two learned fields (and the bare scheme) over
/// a list of steps. Without explicit models both are trained from `cfg`
/// and saved as `model_std.json` and `model_alt.json`.
pub fn cmd_compare_alt(
    cfg: &TrainConfig,
    models: Option<(&ModelChoice, &ModelChoice)>,
    opts: &TrajectoryOptions,
    out: &Path,
) -> Result<(Vec<CompareRow>, RunManifest)> {
    let mut run = Run::new("compare-alt", cfg.seed, out)?;
    let (std_field, alt_field, base, stepper): (Box<dyn FieldLike>, Box<dyn FieldLike>, _, _) = match models {
        Some((a, b)) => {
            let (base, scheme, stepper) = setting(cfg, Some(a))?;
            let (_, scheme_b, _) = setting(cfg, Some(b))?;
            if scheme != scheme_b {
                return Err(Error::Config(format!("models use different schemes ('{scheme}' and '{scheme_b}')")));
            }
            (a.field(&base, &scheme)?, b.field(&base, &scheme)?, base, stepper)
        }
        None => {
            let std_cfg = TrainConfig {
                k: cfg.std_k.unwrap_or(cfg.k),
                ..cfg.clone()
            };
            let records = generate_dataset(&std_cfg)?.records;
            let (std_model, _) = train_model(&std_cfg, &records)?;
            let samples = generate_alt_samples(cfg)?;
            let (alt_model, _) = alt_train(&samples, &alt_steps(cfg), cfg)?;
            for (name, m) in [("model_std.json", &std_model), ("model_alt.json", &alt_model)] {
                let path = out.join(name);
                save_model(m, &path)?;
                run.record(&path);
            }
            (Box::new(std_model), Box::new(alt_model), cfg.field()?, cfg.stepper()?)
        }
    };
    let y0 = opts.y0(&base)?;
    let rows = opts
        .hs
        .par_iter()
        .map(|&h| {
            let e = |f: &dyn FieldLike| local_and_global_error(&stepper, f, &base, &y0, h, opts.t_end, cfg.ref_tol);
            let (local_err_std, global_err_std) = e(&*std_field)?;
            let (local_err_alt, global_err_alt) = e(&*alt_field)?;
            let (local_err_bare, global_err_bare) = e(&base)?;
            Ok(CompareRow {
                h,
                local_err_std,
                local_err_alt,
                global_err_std,
                global_err_alt,
                local_err_bare,
                global_err_bare,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            [r.h, r.local_err_std, r.local_err_alt, r.global_err_std, r.global_err_alt, r.local_err_bare, r.global_err_bare]
                .iter()
                .map(|v| num(*v))
                .collect()
        })
        .collect();
    run.write_table(
        "compare_alt.csv",
        &["h", "local_err_std", "local_err_alt", "global_err_std", "global_err_alt", "local_err_bare", "global_err_bare"],
        &table,
    )?;
    let manifest = run.finish(&format!("{}{}", cfg.to_text(), opts.describe()))?;
    Ok((rows, manifest))
}
