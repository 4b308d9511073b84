//! Pipeline hyperparameters and their flat `key=value` file format.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Scalar config values that can be written and parsed losslessly.
trait KvValue: Sized {
    fn render(&self) -> String;
    fn parse_kv(s: &str) -> Option<Self>;
}

impl KvValue for usize {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_kv(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl KvValue for u64 {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_kv(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl KvValue for bool {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_kv(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

// `Display` for f64 prints the shortest string that parses back to the same bits.
impl KvValue for f64 {
    fn render(&self) -> String {
        format!("{self}")
    }
    fn parse_kv(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl KvValue for Option<Vec<usize>> {
    fn render(&self) -> String {
        match self {
            None => "auto".to_string(),
            Some(ids) => ids
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(","),
        }
    }
    fn parse_kv(s: &str) -> Option<Self> {
        if s == "auto" {
            return Some(None);
        }
        s.split(',')
            .map(|t| t.trim().parse().ok())
            .collect::<Option<Vec<usize>>>()
            .map(Some)
    }
}

macro_rules! pipeline_config {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Every tunable of the pipeline. Defaults are the published settings
        /// for the signal stages; classifier knobs follow common boosted-tree practice.
        #[derive(Debug, Clone, PartialEq)]
        pub struct PipelineConfig {
            $( $(#[$doc])* pub $name: $ty, )*
        }

        impl Default for PipelineConfig {
            fn default() -> Self {
                PipelineConfig { $( $name: $default, )* }
            }
        }

        impl PipelineConfig {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($name), )*];

            /// Renders the config as `key=value` lines in declaration order.
            pub fn to_kv_string(&self) -> String {
                let mut out = String::new();
                $( let _ = writeln!(out, "{}={}", stringify!($name), KvValue::render(&self.$name)); )*
                out
            }

            pub fn set_kv(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $( stringify!($name) => {
                        self.$name = <$ty as KvValue>::parse_kv(value).ok_or_else(|| {
                            Error::Config(format!("bad value {value:?} for {key}"))
                        })?;
                    } )*
                    _ => return Err(Error::Config(format!("unknown key {key:?}"))),
                }
                Ok(())
            }
        }
    };
}

pipeline_config! {
    /// Savitzky-Golay window length (odd).
    sg_window: usize = 99,
    sg_order: usize = 3,
    n_noise: usize = 1000,
    l_noise: usize = 1000,
    n_cover: usize = 80,
    c_max: f64 = 15.0,
    /// Bin width of the noise-level histogram (magnitude).
    c_step: f64 = 0.5,
    /// Scan the noise histogram from `c_max` downwards.
    c_step_descending: bool = true,
    n_sort: usize = 20,
    n_top: usize = 100,
    n_mask: usize = 50,
    n_local: usize = 25,
    c_mag: f64 = 0.5,
    amplitude_cap: f64 = 50.0,
    n_sample: usize = 100,
    n_before: usize = 15,
    n_after: usize = 14,
    k_phase: usize = 6,
    k_all: usize = 15,
    kmeans_max_iter: usize = 300,
    kmeans_tol: f64 = 1e-6,
    kmeans_restarts: usize = 4,
    template_len: usize = 50,
    /// All-phase cluster ids the 8 templates are built from; `auto` selects
    /// them from the training labels.
    template_clusters: Option<Vec<usize>> = None,
    ensemble_seeds: usize = 25,
    folds: usize = 5,
    smote_alpha: f64 = 0.15,
    smote_neighbors: usize = 5,
    smote_svm_epochs: usize = 200,
    n_trees: usize = 500,
    learning_rate: f64 = 0.05,
    max_leaves: usize = 31,
    min_child_weight: f64 = 1e-3,
    min_data_in_leaf: usize = 5,
    lambda_l2: f64 = 1e-3,
    max_bins: usize = 255,
    early_stopping_rounds: usize = 50,
    feature_fraction: f64 = 1.0,
    /// Average member margins (true) or member probabilities (false).
    average_logits: bool = true,
    seed: u64 = 42,
}

/// Number of templates in the template bank.
pub const TEMPLATE_COUNT: usize = 8;

impl PipelineConfig {
    /// Parses a `key=value` document. Blank lines and `#` comments are ignored;
    /// keys not present keep their defaults.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set_kv(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    pub fn cluster_window_len(&self) -> usize {
        self.n_before + self.n_after + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("sg_window", self.sg_window),
            ("n_noise", self.n_noise),
            ("l_noise", self.l_noise),
            ("n_cover", self.n_cover),
            ("n_sort", self.n_sort),
            ("n_top", self.n_top),
            ("n_mask", self.n_mask),
            ("n_local", self.n_local),
            ("n_sample", self.n_sample),
            ("n_before", self.n_before),
            ("n_after", self.n_after),
            ("k_phase", self.k_phase),
            ("k_all", self.k_all),
            ("kmeans_max_iter", self.kmeans_max_iter),
            ("kmeans_restarts", self.kmeans_restarts),
            ("template_len", self.template_len),
            ("ensemble_seeds", self.ensemble_seeds),
            ("folds", self.folds),
            ("smote_neighbors", self.smote_neighbors),
            ("smote_svm_epochs", self.smote_svm_epochs),
            ("n_trees", self.n_trees),
            ("max_leaves", self.max_leaves),
            ("min_data_in_leaf", self.min_data_in_leaf),
            ("max_bins", self.max_bins),
            ("early_stopping_rounds", self.early_stopping_rounds),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let positive_reals = [
            ("c_max", self.c_max),
            ("c_step", self.c_step),
            ("c_mag", self.c_mag),
            ("amplitude_cap", self.amplitude_cap),
            ("kmeans_tol", self.kmeans_tol),
            ("learning_rate", self.learning_rate),
            ("min_child_weight", self.min_child_weight),
            ("feature_fraction", self.feature_fraction),
        ];
        for (name, v) in positive_reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda_l2.is_finite() && self.lambda_l2 >= 0.0) {
            return Err(Error::Config("lambda_l2 must be non-negative".into()));
        }
        if self.sg_window.is_multiple_of(2) || self.sg_order >= self.sg_window {
            return Err(Error::InvalidWindow {
                window: self.sg_window,
                order: self.sg_order,
            });
        }
        if self.cluster_window_len() != 30 {
            return Err(Error::Config(format!(
                "n_before + n_after + 1 must be 30, got {}",
                self.cluster_window_len()
            )));
        }
        if self.template_len <= self.n_before {
            return Err(Error::Config("template_len must exceed n_before".into()));
        }
        if !(self.smote_alpha > 0.0 && self.smote_alpha < 1.0) {
            return Err(Error::Config(format!(
                "smote_alpha must lie in (0, 1), got {}",
                self.smote_alpha
            )));
        }
        if self.feature_fraction > 1.0 {
            return Err(Error::Config("feature_fraction must be <= 1".into()));
        }
        if self.max_bins > 255 {
            return Err(Error::Config("max_bins must be <= 255".into()));
        }
        if let Some(ids) = &self.template_clusters {
            if ids.len() != TEMPLATE_COUNT {
                return Err(Error::Config(format!(
                    "template_clusters must list {TEMPLATE_COUNT} ids, got {}",
                    ids.len()
                )));
            }
            if let Some(bad) = ids.iter().find(|&&i| i >= self.k_all) {
                return Err(Error::Config(format!("template cluster {bad} >= k_all")));
            }
        }
        Ok(())
    }
}
