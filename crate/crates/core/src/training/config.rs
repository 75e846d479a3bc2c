use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrators::Stepper;
use crate::systems::{DomainBox, Shell, VectorFieldSpec};

/// Training and data-generation settings. The text form is one
/// `key=value` per line with keys equal to the field names; `#` starts a
/// comment. Vectors are comma separated; an absent shell is `none`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub system: String,
    pub scheme: String,
    pub p: usize,
    pub omega_lower: Vec<f64>,
    pub omega_upper: Vec<f64>,
    pub shell_r_min: Option<f64>,
    pub shell_r_max: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    /// Total number of records `K`.
    pub k: usize,
    pub train_fraction: f64,
    pub n_terms: usize,
    pub hidden_layers: usize,
    pub neurons: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub print_period: usize,
    pub seed: u64,
    pub ref_tol: f64,
    /// Step sizes per initial point in the alternative method.
    pub n_h: usize,
    /// Extra monomials in the alternative-method fit; `None` uses `n_h - n_terms`.
    pub alt_extra_monomials: Option<usize>,
    /// Records for the standard model in the method comparison; `None` uses `k`.
    pub std_k: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            system: "pendulum".into(),
            scheme: "euler".into(),
            p: 1,
            omega_lower: vec![-2.0, -2.0],
            omega_upper: vec![2.0, 2.0],
            shell_r_min: None,
            shell_r_max: None,
            h_min: 0.1,
            h_max: 2.5,
            k: 100_000,
            train_fraction: 0.8,
            n_terms: 1,
            hidden_layers: 2,
            neurons: 50,
            learning_rate: 2e-3,
            weight_decay: 1e-9,
            batch_size: 300,
            epochs: 50,
            print_period: 10,
            seed: 0,
            ref_tol: 1e-12,
            n_h: 5,
            alt_extra_monomials: None,
            std_k: None,
        }
    }
}

pub const PRESETS: &[&str] = &[
    "desk-pendulum-euler",
    "desk-rigid-body-euler",
    "desk-pendulum-rk2",
    "desk-pendulum-midpoint",
    "desk-compare-alt",
    "full-pendulum-euler",
    "full-rigid-body-euler",
    "full-pendulum-rk2",
    "full-pendulum-midpoint",
    "full-compare-alt",
];

const KEYS: &[&str] = &[
    "system",
    "scheme",
    "p",
    "omega_lower",
    "omega_upper",
    "shell_r_min",
    "shell_r_max",
    "h_min",
    "h_max",
    "k",
    "train_fraction",
    "n_terms",
    "hidden_layers",
    "neurons",
    "learning_rate",
    "weight_decay",
    "batch_size",
    "epochs",
    "print_period",
    "seed",
    "ref_tol",
    "n_h",
    "alt_extra_monomials",
    "std_k",
];

fn rigid(cfg: &mut TrainConfig) {
    cfg.system = "rigid_body".into();
    cfg.omega_lower = vec![-2.0; 3];
    cfg.omega_upper = vec![2.0; 3];
    cfg.shell_r_min = Some(0.98);
    cfg.shell_r_max = Some(1.02);
    cfg.h_min = 0.5;
    cfg.h_max = 2.5;
}

fn rk2(cfg: &mut TrainConfig) {
    cfg.scheme = "rk2_midpoint".into();
    cfg.p = 2;
}

fn midpoint(cfg: &mut TrainConfig) {
    cfg.scheme = "midpoint".into();
    cfg.p = 2;
    cfg.h_min = 0.05;
    cfg.h_max = 0.5;
}

fn compare_alt(cfg: &mut TrainConfig) {
    cfg.h_min = 0.01;
    cfg.h_max = 0.5;
    cfg.k = 50_000;
    cfg.n_terms = 3;
    cfg.neurons = 50;
    cfg.batch_size = 100;
    cfg.n_h = 5;
}

fn full_scale(cfg: &mut TrainConfig, k: usize, neurons: usize) {
    cfg.k = k;
    cfg.neurons = neurons;
    cfg.epochs = 200;
    cfg.print_period = 20;
}

impl TrainConfig {
    /// Named configuration. `desk-*` presets are sized for a workstation;
    /// `full-*` presets use the large data sets and networks of the original experiments.
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        match name {
            "desk-pendulum-euler" => {}
            "desk-rigid-body-euler" => rigid(&mut c),
            "desk-pendulum-rk2" => rk2(&mut c),
            "desk-pendulum-midpoint" => midpoint(&mut c),
            "desk-compare-alt" => {
                compare_alt(&mut c);
                c.epochs = 100;
                // Standard training time matched to the wall time of the parallel jobs.
                c.std_k = Some(16_000);
            }
            "full-pendulum-euler" => full_scale(&mut c, 25_000_000, 200),
            "full-rigid-body-euler" => {
                rigid(&mut c);
                full_scale(&mut c, 100_000_000, 250);
            }
            "full-pendulum-rk2" => {
                rk2(&mut c);
                full_scale(&mut c, 100_000_000, 250);
                c.learning_rate = 5e-4;
            }
            "full-pendulum-midpoint" => {
                midpoint(&mut c);
                full_scale(&mut c, 20_000_000, 200);
            }
            "full-compare-alt" => {
                compare_alt(&mut c);
                c.epochs = 200;
                c.print_period = 20;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (available: {})",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    /// Applies `key=value` lines on top of `self`.
    pub fn apply_text(mut self, text: &str) -> Result<Self> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(self)
    }

    /// Reads a config file on top of the given preset (or the default).
    pub fn load(path: &Path, preset: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = match preset {
            Some(p) => Self::preset(p)?,
            None => Self::default(),
        };
        base.apply_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value '{v}' for {key}"))
        }
        fn vec(key: &str, v: &str) -> std::result::Result<Vec<f64>, String> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        fn opt<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<Option<T>, String> {
            if v == "none" || v == "auto" {
                Ok(None)
            } else {
                num(key, v).map(Some)
            }
        }
        match key {
            "system" => self.system = value.to_string(),
            "scheme" => self.scheme = value.to_string(),
            "p" => self.p = num(key, value)?,
            "omega_lower" => self.omega_lower = vec(key, value)?,
            "omega_upper" => self.omega_upper = vec(key, value)?,
            "shell_r_min" => self.shell_r_min = opt(key, value)?,
            "shell_r_max" => self.shell_r_max = opt(key, value)?,
            "h_min" => self.h_min = num(key, value)?,
            "h_max" => self.h_max = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "n_terms" => self.n_terms = num(key, value)?,
            "hidden_layers" => self.hidden_layers = num(key, value)?,
            "neurons" => self.neurons = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "print_period" => self.print_period = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "ref_tol" => self.ref_tol = num(key, value)?,
            "n_h" => self.n_h = num(key, value)?,
            "alt_extra_monomials" => self.alt_extra_monomials = opt(key, value)?,
            "std_k" => self.std_k = opt(key, value)?,
            other => return Err(format!("unknown key '{other}' (known keys: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Text form accepted by [`Self::apply_text`].
    pub fn to_text(&self) -> String {
        fn list(v: &[f64]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        fn opt<T: ToString>(v: &Option<T>, none: &str) -> String {
            v.as_ref().map_or(none.to_string(), T::to_string)
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("system", self.system.clone());
        kv("scheme", self.scheme.clone());
        kv("p", self.p.to_string());
        kv("omega_lower", list(&self.omega_lower));
        kv("omega_upper", list(&self.omega_upper));
        kv("shell_r_min", opt(&self.shell_r_min, "none"));
        kv("shell_r_max", opt(&self.shell_r_max, "none"));
        kv("h_min", self.h_min.to_string());
        kv("h_max", self.h_max.to_string());
        kv("k", self.k.to_string());
        kv("train_fraction", self.train_fraction.to_string());
        kv("n_terms", self.n_terms.to_string());
        kv("hidden_layers", self.hidden_layers.to_string());
        kv("neurons", self.neurons.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("print_period", self.print_period.to_string());
        kv("seed", self.seed.to_string());
        kv("ref_tol", self.ref_tol.to_string());
        kv("n_h", self.n_h.to_string());
        kv("alt_extra_monomials", opt(&self.alt_extra_monomials, "auto"));
        kv("std_k", opt(&self.std_k, "none"));
        s
    }

    pub fn field(&self) -> Result<VectorFieldSpec> {
        VectorFieldSpec::by_name(&self.system).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn stepper(&self) -> Result<Stepper> {
        Stepper::by_name(&self.scheme).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn domain(&self) -> Result<DomainBox> {
        let shell = match (self.shell_r_min, self.shell_r_max) {
            (None, None) => None,
            (Some(r_min), Some(r_max)) => Some(Shell { r_min, r_max }),
            _ => return Err(Error::Config("shell_r_min and shell_r_max must be set together".into())),
        };
        DomainBox::new(self.omega_lower.clone(), self.omega_upper.clone(), shell).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hidden layer widths `[neurons; hidden_layers]`.
    pub fn hidden(&self) -> Vec<usize> {
        vec![self.neurons; self.hidden_layers]
    }

    pub fn extra_monomials(&self) -> usize {
        self.alt_extra_monomials.unwrap_or(self.n_h.saturating_sub(self.n_terms))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        self.validate_allow_empty()
    }

    /// [`Self::validate`] without the `k >= 1` requirement, for generating
    /// an empty dataset.
    pub fn validate_allow_empty(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let field = self.field()?;
        let stepper = self.stepper()?;
        if self.p != stepper.order() {
            return fail(format!("p = {} but scheme '{}' has order {}", self.p, self.scheme, stepper.order()));
        }
        if self.omega_lower.len() != field.dim() {
            return fail(format!("domain has dimension {}, system has {}", self.omega_lower.len(), field.dim()));
        }
        self.domain()?;
        if !(self.h_min > 0.0 && self.h_min < self.h_max && self.h_max.is_finite()) {
            return fail(format!("need 0 < h_min < h_max, got [{}, {}]", self.h_min, self.h_max));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.n_terms == 0 || self.neurons == 0 || self.hidden_layers == 0 || self.batch_size == 0 {
            return fail("n_terms, neurons, hidden_layers and batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || !(self.ref_tol > 0.0) {
            return fail("learning_rate and ref_tol must be positive, weight_decay nonnegative".into());
        }
        if self.n_h == 0 || self.n_terms - 1 + self.extra_monomials() > self.n_h {
            return fail(format!(
                "alternative method needs n_h >= n_terms - 1 + extra monomials (n_h={}, n_terms={}, extra={})",
                self.n_h,
                self.n_terms,
                self.extra_monomials()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for name in PRESETS {
            let c = TrainConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(TrainConfig::default().apply_text(&c.to_text()).unwrap(), c, "{name}");
        }
    }

    #[test]
    fn full_sizes() {
        let c = TrainConfig::preset("full-pendulum-euler").unwrap();
        assert_eq!((c.k as f64 * c.train_fraction).floor() as usize, 20_000_000);
        let m = TrainConfig::preset("full-pendulum-midpoint").unwrap();
        assert_eq!((m.h_min, m.h_max), (0.05, 0.5));
    }

    #[test]
    fn parse_and_reject() {
        let c = TrainConfig::default()
            .apply_text("# comment\nepochs = 3\nomega_lower=-1,-1 # trailing\nshell_r_min=none\n")
            .unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.omega_lower, vec![-1.0, -1.0]);
        assert!(TrainConfig::default().apply_text("activation=relu").is_err());
        assert!(TrainConfig::default().apply_text("epochs").is_err());
        assert!(TrainConfig::default().apply_text("epochs=x").is_err());
        assert!(TrainConfig::preset("nope").is_err());
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::default();
        c.train_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.p = 2;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.h_min = 3.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.shell_r_min = Some(0.5);
        assert!(c.validate().is_err());
    }
}
