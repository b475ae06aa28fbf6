//! Experiment configuration in a flat `key = value` text format.
//!
//! Every key has a compiled-in default, so an empty file is a valid config.
//! Lines starting with `#` are comments. The canonical form lists every key
//! once, in declaration order, and is what the config hash is computed over.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::SimError;
use crate::quantum::Shots;
use crate::scheduler::{ModeKind, SchedulerConfig};
use crate::workload::{ConvergenceParams, SpsaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JitterDist {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub horizon: f64,
    pub num_qpus: usize,
    pub num_classical: usize,
    pub queue_mu: f64,
    pub queue_sigma: f64,
    pub lambda_bg: f64,
    pub bg_service_mean: f64,
    pub shots: Shots,
    pub t_qpu: f64,
    pub t_qpu_jitter: f64,
    pub t_qpu_jitter_dist: JitterDist,
    pub t_cpu: f64,
    pub t_net: f64,
    pub t_async: f64,
    pub tau_drift: f64,
    pub t_calib: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub pq_startup: f64,
    pub pq_warm: f64,
    pub max_iter: usize,
    pub epsilon_margin: f64,
    pub tau_decay: f64,
    pub cold_start_overhead: f64,
    pub convergence_window: usize,
    pub convergence_epsilon: f64,
    pub qdc_pool_normalized: bool,
    pub qdc_include_background: bool,
    pub spsa_a: f64,
    pub spsa_c: f64,
    pub spsa_big_a: f64,
    pub spsa_alpha: f64,
    pub spsa_gamma: f64,
    pub theta_init_scale: f64,
    pub field_min: f64,
    pub field_max: f64,
    pub suite_seed: u64,
    pub init_calib_age_max: f64,
    pub weight_session: f64,
    pub weight_background: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: 3000.0,
            num_qpus: 3,
            num_classical: 4,
            queue_mu: 3.5,
            queue_sigma: 0.8,
            lambda_bg: 0.05,
            bg_service_mean: 5.0,
            shots: Shots::Count(4096),
            t_qpu: 2.0,
            t_qpu_jitter: 0.3,
            t_qpu_jitter_dist: JitterDist::Uniform,
            t_cpu: 1.5,
            t_net: 0.5,
            t_async: 0.8,
            tau_drift: 300.0,
            t_calib: 30.0,
            alpha: 100.0,
            beta: 5.0,
            gamma: 1.0,
            pq_startup: 2.0,
            pq_warm: 0.5,
            max_iter: 1000,
            epsilon_margin: 5.0,
            tau_decay: 300.0,
            cold_start_overhead: 6.0,
            convergence_window: 10,
            convergence_epsilon: 0.01,
            qdc_pool_normalized: true,
            qdc_include_background: false,
            spsa_a: 0.2,
            spsa_c: 0.15,
            spsa_big_a: 10.0,
            spsa_alpha: 0.602,
            spsa_gamma: 0.101,
            theta_init_scale: std::f64::consts::PI,
            field_min: 0.5,
            field_max: 1.5,
            suite_seed: 0,
            init_calib_age_max: 300.0,
            weight_session: 1.0,
            weight_background: 1.0,
        }
    }
}

macro_rules! config_keys {
    ($m:ident) => {
        $m! {
            horizon: f64,
            num_qpus: usize,
            num_classical: usize,
            queue_mu: f64,
            queue_sigma: f64,
            lambda_bg: f64,
            bg_service_mean: f64,
            shots: shots,
            t_qpu: f64,
            t_qpu_jitter: f64,
            t_qpu_jitter_dist: jitter,
            t_cpu: f64,
            t_net: f64,
            t_async: f64,
            tau_drift: f64,
            t_calib: f64,
            alpha: f64,
            beta: f64,
            gamma: f64,
            pq_startup: f64,
            pq_warm: f64,
            max_iter: usize,
            epsilon_margin: f64,
            tau_decay: f64,
            cold_start_overhead: f64,
            convergence_window: usize,
            convergence_epsilon: f64,
            qdc_pool_normalized: bool,
            qdc_include_background: bool,
            spsa_a: f64,
            spsa_c: f64,
            spsa_big_a: f64,
            spsa_alpha: f64,
            spsa_gamma: f64,
            theta_init_scale: f64,
            field_min: f64,
            field_max: f64,
            suite_seed: u64,
            init_calib_age_max: f64,
            weight_session: f64,
            weight_background: f64,
        }
    };
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, String> {
    raw.parse::<T>()
        .map_err(|_| format!("{key}: cannot parse {raw:?}"))
}

fn parse_shots(key: &str, raw: &str) -> Result<Shots, String> {
    if raw == "exact" {
        Ok(Shots::Exact)
    } else {
        parse_value::<u32>(key, raw).map(Shots::Count)
    }
}

fn parse_jitter(key: &str, raw: &str) -> Result<JitterDist, String> {
    match raw {
        "uniform" => Ok(JitterDist::Uniform),
        "gaussian" => Ok(JitterDist::Gaussian),
        _ => Err(format!("{key}: expected uniform or gaussian, got {raw:?}")),
    }
}

fn fmt_shots(s: &Shots) -> String {
    match s {
        Shots::Exact => "exact".into(),
        Shots::Count(n) => n.to_string(),
    }
}

fn fmt_jitter(j: &JitterDist) -> String {
    match j {
        JitterDist::Uniform => "uniform".into(),
        JitterDist::Gaussian => "gaussian".into(),
    }
}

macro_rules! parse_field {
    (f64, $k:expr, $v:expr) => {
        parse_value::<f64>($k, $v)
    };
    (usize, $k:expr, $v:expr) => {
        parse_value::<usize>($k, $v)
    };
    (u64, $k:expr, $v:expr) => {
        parse_value::<u64>($k, $v)
    };
    (bool, $k:expr, $v:expr) => {
        parse_value::<bool>($k, $v)
    };
    (shots, $k:expr, $v:expr) => {
        parse_shots($k, $v)
    };
    (jitter, $k:expr, $v:expr) => {
        parse_jitter($k, $v)
    };
}

macro_rules! fmt_field {
    (shots, $v:expr) => {
        fmt_shots($v)
    };
    (jitter, $v:expr) => {
        fmt_jitter($v)
    };
    ($t:ident, $v:expr) => {
        $v.to_string()
    };
}

macro_rules! impl_kv {
    ($($name:ident: $ty:ident,)*) => {
        /// Every recognised key, in canonical order.
        pub const KEYS: &[&str] = &[$(stringify!($name),)*];

        impl ExperimentConfig {
            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
                match key {
                    $(stringify!($name) => { self.$name = parse_field!($ty, key, raw)?; Ok(()) })*
                    _ => Err(format!("unknown key {key:?}")),
                }
            }

            /// Textual value of one key.
            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $(stringify!($name) => Some(fmt_field!($ty, &self.$name)),)*
                    _ => None,
                }
            }

            pub fn to_canonical_string(&self) -> String {
                let mut out = String::new();
                $(let _ = writeln!(out, "{} = {}", stringify!($name), fmt_field!($ty, &self.$name));)*
                out
            }
        }
    };
}

config_keys!(impl_kv);

impl ExperimentConfig {
    /// Parses the flat format; all problems are reported together.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut cfg = Self::default();
        let mut errors = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key = value", lineno + 1));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                errors.push(format!("line {}: duplicate key {k:?}", lineno + 1));
                continue;
            }
            if let Err(e) = cfg.set(k, v) {
                errors.push(format!("line {}: {e}", lineno + 1));
            }
        }
        if !errors.is_empty() {
            return Err(SimError::Config(errors.join("; ")));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Field-level problems; empty when the config is usable.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut e = Vec::new();
        let mut nonneg = |name: &str, v: f64| {
            if !(v >= 0.0) || !v.is_finite() {
                e.push(format!("{name}: must be a finite value >= 0 (got {v})"));
            }
        };
        for (name, v) in [
            ("horizon", self.horizon),
            ("lambda_bg", self.lambda_bg),
            ("t_qpu_jitter", self.t_qpu_jitter),
            ("t_cpu", self.t_cpu),
            ("t_net", self.t_net),
            ("t_async", self.t_async),
            ("t_calib", self.t_calib),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("pq_startup", self.pq_startup),
            ("pq_warm", self.pq_warm),
            ("epsilon_margin", self.epsilon_margin),
            ("cold_start_overhead", self.cold_start_overhead),
            ("theta_init_scale", self.theta_init_scale),
            ("init_calib_age_max", self.init_calib_age_max),
            ("convergence_epsilon", self.convergence_epsilon),
        ] {
            nonneg(name, v);
        }
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0) || !v.is_finite() {
                e.push(format!("{name}: must be > 0 (got {v})"));
            }
        };
        for (name, v) in [
            ("horizon", self.horizon),
            ("queue_sigma", self.queue_sigma),
            ("bg_service_mean", self.bg_service_mean),
            ("t_qpu", self.t_qpu),
            ("tau_drift", self.tau_drift),
            ("tau_decay", self.tau_decay),
            ("weight_session", self.weight_session),
            ("weight_background", self.weight_background),
            ("spsa_a", self.spsa_a),
            ("spsa_c", self.spsa_c),
        ] {
            positive(name, v);
        }
        if self.t_qpu_jitter >= self.t_qpu {
            e.push(format!(
                "t_qpu_jitter: must be below t_qpu ({} >= {})",
                self.t_qpu_jitter, self.t_qpu
            ));
        }
        if self.num_qpus == 0 {
            e.push("num_qpus: must be >= 1".into());
        }
        if self.num_classical == 0 {
            e.push("num_classical: must be >= 1".into());
        }
        if self.max_iter == 0 {
            e.push("max_iter: must be >= 1".into());
        }
        if self.convergence_window < 2 {
            e.push("convergence_window: must be >= 2".into());
        }
        if let Shots::Count(0) = self.shots {
            e.push("shots: must be >= 1 or exact".into());
        }
        if !(self.field_min <= self.field_max) || !self.field_min.is_finite() || !self.field_max.is_finite() {
            e.push(format!(
                "field_min/field_max: need field_min <= field_max (got {} > {})",
                self.field_min, self.field_max
            ));
        }
        if !self.queue_mu.is_finite() {
            e.push("queue_mu: must be finite".into());
        }
        e
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(errs.join("; ")))
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn scheduler(&self, mode: ModeKind) -> SchedulerConfig {
        SchedulerConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            tau_drift: self.tau_drift,
            epsilon_margin: self.epsilon_margin,
            mode,
            queue_mu: self.queue_mu,
            queue_sigma: self.queue_sigma,
            cold_start_overhead: self.cold_start_overhead,
            pq_startup: self.pq_startup,
            pq_warm: self.pq_warm,
        }
    }

    pub fn spsa(&self) -> SpsaConfig {
        SpsaConfig {
            a: self.spsa_a,
            c: self.spsa_c,
            big_a: self.spsa_big_a,
            alpha_exp: self.spsa_alpha,
            gamma_exp: self.spsa_gamma,
            max_iter: self.max_iter,
        }
    }

    pub fn detector(&self) -> ConvergenceParams {
        ConvergenceParams {
            window: self.convergence_window,
            epsilon: self.convergence_epsilon,
        }
    }

    /// Applies `key=value` overrides in order.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self, SimError> {
        let mut c = self.clone();
        for (k, v) in overrides {
            c.set(k, v).map_err(SimError::Config)?;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate() {
        assert!(ExperimentConfig::default().validate().is_ok());
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "# comment\n\ntau_drift = 150\nshots = exact\n  alpha=0\nt_qpu_jitter_dist = gaussian\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.tau_drift, 150.0);
        assert_eq!(cfg.shots, Shots::Exact);
        assert_eq!(cfg.alpha, 0.0);
        let canon = cfg.to_canonical_string();
        let again = ExperimentConfig::parse(&canon).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_canonical_string(), canon);
        assert_eq!(canon.lines().count(), KEYS.len());
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::parse("horizon = abc\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("horizon"));
        assert!(err.contains("bogus"));
        let cfg = ExperimentConfig {
            queue_sigma: 0.0,
            t_cpu: -1.0,
            ..Default::default()
        };
        let errs = cfg.validation_errors();
        assert!(errs.iter().any(|e| e.starts_with("queue_sigma")));
        assert!(errs.iter().any(|e| e.starts_with("t_cpu")));
    }

    #[test]
    fn duplicate_keys_rejected() {
        assert!(ExperimentConfig::parse("alpha = 1\nalpha = 2\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.beta = 0.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    proptest! {
        #[test]
        fn any_float_value_round_trips(v in -1e9f64..1e9, idx in 0usize..KEYS.len()) {
            let key = KEYS[idx];
            let mut cfg = ExperimentConfig::default();
            let raw = v.to_string();
            if cfg.set(key, &raw).is_ok() {
                let back = ExperimentConfig::parse(&cfg.to_canonical_string()).unwrap();
                prop_assert_eq!(back.get(key), cfg.get(key));
                prop_assert_eq!(back, cfg);
            }
        }
    }
}
