use std::path::Path;

use modfield::bench::*;
use modfield::modified_field::euler_term;
use modfield::neural::{load_model, save_model, ModifiedFieldModel};
use modfield::systems::VectorFieldSpec;
use modfield::training::TrainConfig;

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn zero_model(base: &VectorFieldSpec) -> ModifiedFieldModel {
    let mut m = ModifiedFieldModel::new(base, "euler", 1, 1, &[10, 10], 0).unwrap();
    m.zero_outputs();
    m
}

#[test]
fn generate_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        k: 0,
        ..TrainConfig::default()
    };
    let (data, manifest) = cmd_generate(&cfg, dir.path()).unwrap();
    assert!(data.records.is_empty());
    let rows = data_rows(&dir.path().join("dataset.csv"));
    assert_eq!(rows, vec!["y0_1,y0_2,h,y1_1,y1_2".to_string()]);
    assert_eq!(manifest.outputs.len(), 1);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn train_without_epochs_keeps_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        k: 50,
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = cmd_train(&cfg, None, dir.path()).unwrap();
    let init = ModifiedFieldModel::new(&cfg.field().unwrap(), "euler", 1, 1, &cfg.hidden(), cfg.seed).unwrap();
    let saved = load_model(&dir.path().join("model.json")).unwrap();
    assert_eq!(saved.flat_params(), init.flat_params());
    assert!(out.report.epochs.is_empty());
}

#[test]
fn loss_table_has_one_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        k: 500,
        batch_size: 100,
        ..TrainConfig::default()
    };
    cmd_generate(&cfg, dir.path()).unwrap();
    let data = dir.path().join("dataset.csv");
    let out = cmd_train(&cfg, Some(&data), &dir.path().join("t")).unwrap();
    assert_eq!(out.report.epochs.len(), 50);
    let rows = data_rows(&dir.path().join("t/loss.csv"));
    assert_eq!(rows[0], "epoch,loss_train,loss_test,seconds");
    // Epoch 0 holds the losses before training.
    assert_eq!(rows.len(), 1 + 1 + 50);
    assert_eq!(out.manifest.inputs, vec![data]);
}

#[test]
fn field_error_map_of_the_exact_field_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let opts = FieldErrorMapOptions {
        k: 4,
        h: 0.1,
        grid_n: 11,
        n_steps: 5,
    };
    let map = cmd_field_error_map(&TrainConfig::default(), &ModelChoice::Exact(4), &opts, dir.path()).unwrap();
    assert_eq!(map.grid.len(), 121);
    assert!(map.grid.iter().all(|(_, g)| *g <= 1e-12));
    assert!(map.max_by_step.iter().all(|(_, g)| *g <= 1e-12));
    assert_eq!(data_rows(&dir.path().join("field_error_map.csv"))[0], "x1,x2,g");
    assert_eq!(data_rows(&dir.path().join("field_error_vs_h.csv")).len(), 6);
}

#[test]
fn field_error_map_of_an_untrained_model_is_the_first_term() {
    let dir = tempfile::tempdir().unwrap();
    let base = VectorFieldSpec::pendulum();
    let path = dir.path().join("zero.json");
    save_model(&zero_model(&base), &path).unwrap();
    let opts = FieldErrorMapOptions {
        k: 2,
        h: 0.2,
        grid_n: 9,
        n_steps: 3,
    };
    let map = cmd_field_error_map(&TrainConfig::default(), &ModelChoice::parse(path.to_str().unwrap()).unwrap(), &opts, dir.path())
        .unwrap();
    let mut want = 0.0f64;
    for (x, g) in &map.grid {
        let f1 = euler_term(&base, 1, x).unwrap();
        let norm = f1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!((g - norm).abs() <= 1e-12);
        want = want.max(norm);
    }
    for (_, g) in &map.max_by_step {
        assert!((g - want).abs() <= 1e-12);
    }
}

#[test]
fn field_error_map_rejects_unsupported_orders() {
    let dir = tempfile::tempdir().unwrap();
    let opts = FieldErrorMapOptions {
        k: 4,
        h: 0.1,
        grid_n: 5,
        n_steps: 3,
    };
    let cfg = TrainConfig::preset("desk-pendulum-rk2").unwrap();
    assert!(cmd_field_error_map(&cfg, &ModelChoice::Bare, &opts, dir.path()).is_err());
}

#[test]
fn convergence_of_the_third_order_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrajectoryOptions {
        y0: None,
        t_end: 5.0,
        hs: vec![0.1, 0.05, 0.025, 0.0125],
    };
    let c = cmd_convergence(&TrainConfig::default(), &ModelChoice::Exact(3), &opts, dir.path()).unwrap();
    assert_eq!(c.rows.len(), 4);
    assert!(c.rows.iter().all(|r| r.status == "ok"));
    let (sf, sa) = (c.slope_f.unwrap(), c.slope_fapp.unwrap());
    assert!((sf - 1.0).abs() < 0.15, "bare slope {sf}");
    assert!((sa - 3.0).abs() < 0.2, "truncation slope {sa}");
}

#[test]
fn convergence_with_one_step_size() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrajectoryOptions {
        y0: None,
        t_end: 1.0,
        hs: vec![0.1],
    };
    let c = cmd_convergence(&TrainConfig::default(), &ModelChoice::Bare, &opts, dir.path()).unwrap();
    assert_eq!(c.rows.len(), 1);
    assert!(c.slope_f.is_none() && c.slope_fapp.is_none());
    assert_eq!(data_rows(&dir.path().join("convergence.csv")).len(), 2);
}

#[test]
fn efficiency_on_the_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let base = VectorFieldSpec::zero(2);
    let path = dir.path().join("zero.json");
    save_model(&zero_model(&base), &path).unwrap();
    let opts = EfficiencyOptions {
        trajectory: TrajectoryOptions {
            y0: Some(vec![0.3, -0.2]),
            t_end: 1.0,
            hs: vec![0.1, 0.05],
        },
        tols: vec![1e-6],
        repeats: 3,
        exact_orders: vec![2],
    };
    let model = ModelChoice::parse(path.to_str().unwrap()).unwrap();
    let (rows, _) = cmd_efficiency(&TrainConfig::default(), Some(&model), &opts, dir.path()).unwrap();
    assert_eq!(rows.len(), 3 * 2 + 1);
    assert!(rows.iter().all(|r| r.max_error == 0.0 && r.seconds >= 0.0));
    let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert!(methods.contains(&"euler+learned") && methods.contains(&"euler+exact2") && methods.contains(&"dopri5"));
}

#[test]
fn efficiency_needs_three_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let opts = EfficiencyOptions {
        trajectory: TrajectoryOptions {
            y0: None,
            t_end: 1.0,
            hs: vec![0.1],
        },
        tols: vec![],
        repeats: 2,
        exact_orders: vec![],
    };
    assert!(cmd_efficiency(&TrainConfig::default(), None, &opts, dir.path()).is_err());
}

#[test]
fn reference_invariants_are_conserved() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig::preset("desk-rigid-body-euler").unwrap();
    let d = cmd_invariant_drift(&cfg, &ModelChoice::Exact(3), None, 20.0, 0.5, dir.path()).unwrap();
    assert_eq!(d.times.len(), 41);
    for name in ["reference_C", "reference_H"] {
        let col = d.column(name).unwrap();
        assert!(col.iter().all(|v| *v <= 1e-8), "{name}");
    }
    assert!(d.column("bare_H").unwrap()[40] > 0.0);
}

#[test]
fn param_study_with_one_setting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 100,
        ..TrainConfig::default()
    };
    let opts = ParamStudyOptions {
        widths: vec![10],
        depths: vec![2],
        data_sizes: vec![1000],
        grid_n: 11,
        n_steps: 5,
    };
    let (rows, _) = cmd_param_study(&cfg, &opts, dir.path()).unwrap();
    assert_eq!(rows.len(), 1);
    // One correction term: only the remainder net, with input (y, h).
    assert_eq!(rows[0].params_w, 3 * 10 + 10 * 10 + 10 * 2);
    assert!(rows[0].delta.is_finite() && rows[0].delta > 0.0);
    let table = data_rows(&dir.path().join("param_study.csv"));
    assert_eq!(table[0], "width,depth,params_w,data_k,delta,w_pow_half,w_pow_neg_half");
    assert_eq!(table.len(), 2);
}

#[test]
fn compare_alt_with_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let base = VectorFieldSpec::pendulum();
    let m = ModifiedFieldModel::new(&base, "euler", 1, 2, &[10, 10], 4).unwrap();
    let path = dir.path().join("m.json");
    save_model(&m, &path).unwrap();
    let a = ModelChoice::parse(path.to_str().unwrap()).unwrap();
    let b = ModelChoice::parse(path.to_str().unwrap()).unwrap();
    let opts = TrajectoryOptions {
        y0: None,
        t_end: 1.0,
        hs: vec![0.01, 0.1, 0.5],
    };
    let (rows, _) = cmd_compare_alt(&TrainConfig::default(), Some((&a, &b)), &opts, dir.path()).unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r.local_err_std.to_bits(), r.local_err_alt.to_bits());
        assert_eq!(r.global_err_std.to_bits(), r.global_err_alt.to_bits());
    }
}

#[test]
fn every_table_opens_with_the_comment_block() {
    let dir = tempfile::tempdir().unwrap();
    let opts = TrajectoryOptions {
        y0: None,
        t_end: 1.0,
        hs: vec![0.1],
    };
    let cfg = TrainConfig {
        seed: 17,
        ..TrainConfig::default()
    };
    cmd_convergence(&cfg, &ModelChoice::Bare, &opts, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let head: Vec<&str> = text.lines().take(3).collect();
    assert_eq!(head, vec!["# command: convergence".to_string(), format!("# version: {VERSION}"), "# seed: 17".into()]);
}
