//! Line-oriented `key = value` run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vipgan::eval::Metric;
use vipgan::model::{HyperParams, NetworkConfig};
use vipgan::renderer::{DatasetConfig, ShapeClass};
use vipgan::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    KnownTest,
    UnknownTest,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::KnownTest => "known-test",
            Mode::UnknownTest => "unknown-test",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known-test" | "known" => Ok(Mode::KnownTest),
            "unknown-test" | "unknown" => Ok(Mode::UnknownTest),
            _ => Err(Error::Param(format!("mode: expected known-test or unknown-test, got {s:?}"))),
        }
    }
}

/// Single-loss ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSet {
    Full,
    /// Only `L_R`.
    ROnly,
    /// Only `L_D2U`.
    DOnly,
    /// Only `L_U`.
    UOnly,
}

impl LossSet {
    pub fn name(self) -> &'static str {
        match self {
            LossSet::Full => "full",
            LossSet::ROnly => "r-only",
            LossSet::DOnly => "d-only",
            LossSet::UOnly => "u-only",
        }
    }
}

impl FromStr for LossSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LossSet::Full),
            "r-only" => Ok(LossSet::ROnly),
            "d-only" => Ok(LossSet::DOnly),
            "u-only" => Ok(LossSet::UOnly),
            _ => Err(Error::Param(format!("loss: expected full, r-only, d-only or u-only, got {s:?}"))),
        }
    }
}

/// Every setting a command can read. Unset paths are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
    pub loss: LossSet,
    pub lr: f64,
    pub memory_lr: f64,
    pub views: usize,
    pub neighbors: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub f_dim: usize,
    pub cgan: bool,
    pub bidirectional: bool,
    pub refined_generator: bool,
    pub freeze_memory_zero: bool,
    pub infer_iterations: usize,
    pub infer_lr: f64,
    pub metric: Metric,
    pub svm_c: f64,
    pub classes: Vec<ShapeClass>,
    pub instances_per_class: usize,
    pub split_fraction: f64,
    pub resolution: usize,
    pub report_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        Self {
            dataset: None,
            out: PathBuf::from("run"),
            seed: hp.seed,
            mode: Mode::KnownTest,
            alpha: hp.alpha,
            beta: hp.beta,
            loss: LossSet::Full,
            lr: hp.lr,
            memory_lr: hp.memory_lr,
            views: hp.views,
            neighbors: hp.neighbors,
            epochs: hp.epochs,
            batch_size: hp.batch_size,
            f_dim: NetworkConfig::desk().f_dim,
            cgan: false,
            bidirectional: false,
            refined_generator: false,
            freeze_memory_zero: false,
            infer_iterations: hp.infer_iterations,
            infer_lr: hp.infer_lr,
            metric: Metric::Cosine,
            svm_c: 1.0,
            classes: ShapeClass::ALL.to_vec(),
            instances_per_class: 20,
            split_fraction: 0.8,
            resolution: 32,
            report_samples: 6,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Param(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Param(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_classes(value: &str) -> Result<Vec<ShapeClass>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Param(format!("classes: unknown class {s:?}"))))
        .collect()
}

impl RunConfig {
    /// Sets one key; the error names the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "mode" => self.mode = v.parse()?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "loss" => self.loss = v.parse()?,
            "lr" => self.lr = parse(key, v)?,
            "memory_lr" => self.memory_lr = parse(key, v)?,
            "views" => self.views = parse(key, v)?,
            "neighbors" => self.neighbors = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" | "batch" => self.batch_size = parse(key, v)?,
            "f_dim" => self.f_dim = parse(key, v)?,
            "cgan" => self.cgan = parse_bool(key, v)?,
            "bidirectional" => self.bidirectional = parse_bool(key, v)?,
            "refined_generator" => self.refined_generator = parse_bool(key, v)?,
            "freeze_memory_zero" => self.freeze_memory_zero = parse_bool(key, v)?,
            "infer_iterations" => self.infer_iterations = parse(key, v)?,
            "infer_lr" => self.infer_lr = parse(key, v)?,
            "metric" => self.metric = v.parse()?,
            "svm_c" => self.svm_c = parse(key, v)?,
            "classes" => self.classes = parse_classes(v)?,
            "instances_per_class" => self.instances_per_class = parse(key, v)?,
            "split_fraction" => self.split_fraction = parse(key, v)?,
            "resolution" => self.resolution = parse(key, v)?,
            "report_samples" => self.report_samples = parse(key, v)?,
            other => return Err(Error::Param(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Param(format!("config line {}: expected key = value, got {line:?}", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Canonical text form; `from_text(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(d) = &self.dataset {
            let _ = writeln!(s, "dataset = {}", d.display());
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "mode = {}", self.mode.name());
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "loss = {}", self.loss.name());
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "memory_lr = {}", self.memory_lr);
        let _ = writeln!(s, "views = {}", self.views);
        let _ = writeln!(s, "neighbors = {}", self.neighbors);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "f_dim = {}", self.f_dim);
        let _ = writeln!(s, "cgan = {}", self.cgan);
        let _ = writeln!(s, "bidirectional = {}", self.bidirectional);
        let _ = writeln!(s, "refined_generator = {}", self.refined_generator);
        let _ = writeln!(s, "freeze_memory_zero = {}", self.freeze_memory_zero);
        let _ = writeln!(s, "infer_iterations = {}", self.infer_iterations);
        let _ = writeln!(s, "infer_lr = {}", self.infer_lr);
        let _ = writeln!(s, "metric = {}", self.metric);
        let _ = writeln!(s, "svm_c = {}", self.svm_c);
        let names: Vec<&str> = self.classes.iter().map(|c| c.name()).collect();
        let _ = writeln!(s, "classes = {}", names.join(","));
        let _ = writeln!(s, "instances_per_class = {}", self.instances_per_class);
        let _ = writeln!(s, "split_fraction = {}", self.split_fraction);
        let _ = writeln!(s, "resolution = {}", self.resolution);
        let _ = writeln!(s, "report_samples = {}", self.report_samples);
        s
    }

    /// Loss weights `(center_weight, alpha, beta)` after the loss-set override.
    pub fn loss_weights(&self) -> (f64, f64, f64) {
        match self.loss {
            LossSet::Full => (1.0, self.alpha, self.beta),
            LossSet::ROnly => (0.0, 1.0, 0.0),
            LossSet::DOnly => (0.0, 0.0, 1.0),
            LossSet::UOnly => (1.0, 0.0, 0.0),
        }
    }

    pub fn hyper_params(&self) -> HyperParams {
        let (center_weight, alpha, beta) = self.loss_weights();
        HyperParams {
            alpha,
            beta,
            center_weight,
            memory_lr: self.memory_lr,
            lr: self.lr,
            views: self.views,
            neighbors: self.neighbors,
            epochs: self.epochs,
            batch_size: self.batch_size,
            cgan: self.cgan,
            bidirectional: self.bidirectional,
            seed: self.seed,
            infer_iterations: self.infer_iterations,
            infer_lr: self.infer_lr,
        }
    }

    /// Network dimensions for views of side `view_resolution`.
    pub fn network(&self, view_resolution: usize) -> NetworkConfig {
        NetworkConfig::desk()
            .with_view_resolution(view_resolution)
            .with_f_dim(self.f_dim)
            .with_neighbors(self.neighbors)
            .with_conditional(self.cgan)
            .with_refined_generator(self.refined_generator)
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            classes: self.classes.clone(),
            instances_per_class: self.instances_per_class,
            split_fraction: self.split_fraction,
            views: self.views,
            resolution: self.resolution,
            seed: self.seed,
        }
    }

    /// Checks every training-related field; performs no I/O.
    pub fn validate_training(&self) -> Result<()> {
        if self.f_dim == 0 {
            return Err(Error::Param("f_dim must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Param("epochs must be positive".into()));
        }
        if !(self.svm_c > 0.0) {
            return Err(Error::Param("svm_c must be positive".into()));
        }
        self.hyper_params().validate()?;
        self.network(self.resolution).validate()
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset.as_deref().ok_or_else(|| Error::Param("dataset: no dataset path configured".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("alpha = 1.5 # comment\n\n# whole line\nclasses = cube, cone\ndataset = /tmp/x\ncgan = true\n")
            .unwrap();
        assert_eq!(c.alpha, 1.5);
        assert_eq!(c.classes, vec![ShapeClass::Cube, ShapeClass::Cone]);
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_key() {
        let err = RunConfig::from_text("alpha = x").unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
        let err = RunConfig::from_text("classes = cube,blob").unwrap_err().to_string();
        assert!(err.contains("blob"), "{err}");
        assert!(RunConfig::from_text("nonsense = 1").is_err());
        assert!(RunConfig::from_text("just words").is_err());
    }

    #[test]
    fn loss_sets() {
        let mut c = RunConfig::default();
        assert_eq!(c.loss_weights(), (1.0, 3.0, 0.05));
        c.loss = LossSet::ROnly;
        assert_eq!(c.loss_weights(), (0.0, 1.0, 0.0));
        c.loss = LossSet::DOnly;
        assert_eq!(c.loss_weights(), (0.0, 0.0, 1.0));
    }

    #[test]
    fn odd_neighbors_rejected() {
        let c = RunConfig { neighbors: 3, ..RunConfig::default() };
        assert!(matches!(c.validate_training(), Err(Error::Param(_))));
    }
}
