//! Experiment configuration: defaults, named presets, a TOML file and
//! command-line overrides, applied in that order.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const PRESETS: [&str; 4] = [
    "paper-event-eta1",
    "paper-event-eta100",
    "paper-sampled",
    "paper-certificate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Event,
    Periodic,
    Jitter,
    OpenLoop,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "event" => Ok(Self::Event),
            "periodic" => Ok(Self::Periodic),
            "jitter" => Ok(Self::Jitter),
            "open-loop" => Ok(Self::OpenLoop),
            other => Err(CliError::Config(format!(
                "mode: unknown value {other:?} (expected event, periodic, jitter or open-loop)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Event => "event",
            Self::Periodic => "periodic",
            Self::Jitter => "jitter",
            Self::OpenLoop => "open-loop",
        })
    }
}

/// Fully resolved settings of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub epsilon: f64,
    pub lambda: f64,
    pub q: f64,
    pub intervals: usize,
    pub dt: f64,
    pub horizon: f64,
    pub mode: Mode,
    /// Sampling period (periodic) or diameter (jitter); `None` means `T*`.
    pub period: Option<f64>,
    pub seed: u64,
    pub snapshot_every: Option<usize>,
    pub u0: Vec<f64>,
    pub uhat0: Vec<f64>,
    pub eta: f64,
    pub gamma: f64,
    pub vartheta: f64,
    pub m0: f64,
    pub b: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub sigma: Option<f64>,
    pub modes: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: None,
            epsilon: 1.0,
            lambda: 10.0,
            q: 5.1,
            intervals: 161,
            dt: 1e-3,
            horizon: 1.0,
            mode: Mode::Event,
            period: None,
            seed: 0,
            snapshot_every: None,
            u0: vec![0.0, 0.0, 10.0, -20.0, 10.0],
            uhat0: vec![0.0, 0.0, 15.0, -45.0, 60.0, -45.0, 15.0],
            eta: 1.0,
            gamma: 1e5,
            vartheta: 0.1,
            m0: -0.5,
            b: 0.644,
            kappa1: 11.0,
            kappa2: 1e4,
            kappa3: 1e8,
            beta1: None,
            beta2: None,
            beta3: None,
            sigma: None,
            modes: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Optional values as they appear in a file or on the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub preset: Option<String>,
    #[serde(default)]
    pub plant: RawPlant,
    #[serde(default)]
    pub grid: RawGrid,
    #[serde(default)]
    pub sim: RawSim,
    #[serde(default)]
    pub trigger: RawTrigger,
    #[serde(default)]
    pub certificate: RawCertificate,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPlant {
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub intervals: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSim {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub mode: Option<String>,
    pub period: Option<f64>,
    pub seed: Option<u64>,
    pub snapshot_every: Option<usize>,
    pub u0: Option<Vec<f64>>,
    pub uhat0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTrigger {
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub vartheta: Option<f64>,
    pub m0: Option<f64>,
    #[serde(rename = "B", alias = "b")]
    pub b: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub kappa3: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCertificate {
    pub sigma: Option<f64>,
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}

fn set_opt<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
    if src.is_some() {
        *dst = src.clone();
    }
}

impl ExperimentConfig {
    /// Values of a named preset on top of the defaults.
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let mut c = Self {
            preset: Some(name.to_string()),
            sigma: Some(0.0266),
            modes: Some(9),
            ..Self::default()
        };
        match name {
            "paper-event-eta1" => {}
            "paper-event-eta100" => c.eta = 100.0,
            "paper-sampled" => c.mode = Mode::Periodic,
            "paper-certificate" => {}
            other => {
                return Err(CliError::Config(format!(
                    "preset: unknown name {other:?} (known: {})",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    /// Overwrites the fields present in `raw`.
    pub fn apply(&mut self, raw: &RawConfig) -> Result<(), CliError> {
        set(&mut self.epsilon, &raw.plant.epsilon);
        set(&mut self.lambda, &raw.plant.lambda);
        set(&mut self.q, &raw.plant.q);
        set(&mut self.intervals, &raw.grid.intervals);
        let s = &raw.sim;
        set(&mut self.dt, &s.dt);
        set(&mut self.horizon, &s.horizon);
        if let Some(m) = &s.mode {
            self.mode = Mode::parse(m)?;
        }
        set_opt(&mut self.period, &s.period);
        set(&mut self.seed, &s.seed);
        set_opt(&mut self.snapshot_every, &s.snapshot_every);
        set(&mut self.u0, &s.u0);
        set(&mut self.uhat0, &s.uhat0);
        let t = &raw.trigger;
        set(&mut self.eta, &t.eta);
        set(&mut self.gamma, &t.gamma);
        set(&mut self.vartheta, &t.vartheta);
        set(&mut self.m0, &t.m0);
        set(&mut self.b, &t.b);
        set(&mut self.kappa1, &t.kappa1);
        set(&mut self.kappa2, &t.kappa2);
        set(&mut self.kappa3, &t.kappa3);
        set_opt(&mut self.beta1, &t.beta1);
        set_opt(&mut self.beta2, &t.beta2);
        set_opt(&mut self.beta3, &t.beta3);
        set_opt(&mut self.sigma, &raw.certificate.sigma);
        set_opt(&mut self.modes, &raw.certificate.modes);
        set(&mut self.out_dir, &raw.output.dir);
        Ok(())
    }

    /// Defaults, then the preset (flag wins over file), then the file, then
    /// the flags.
    pub fn resolve(file: Option<&RawConfig>, flags: &RawConfig) -> Result<Self, CliError> {
        let preset = flags
            .preset
            .as_ref()
            .or_else(|| file.and_then(|f| f.preset.as_ref()));
        let mut c = match preset {
            Some(name) => Self::preset(name)?,
            None => Self::default(),
        };
        if let Some(f) = file {
            c.apply(f)?;
        }
        c.apply(flags)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::Config(format!("{key}: {why}")));
        for (key, v) in [
            ("plant.epsilon", self.epsilon),
            ("plant.lambda", self.lambda),
            ("plant.q", self.q),
            ("sim.dt", self.dt),
            ("sim.horizon", self.horizon),
            ("trigger.eta", self.eta),
            ("trigger.gamma", self.gamma),
            ("trigger.B", self.b),
            ("trigger.kappa1", self.kappa1),
            ("trigger.kappa2", self.kappa2),
            ("trigger.kappa3", self.kappa3),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, &format!("must be positive and finite, got {v}"));
            }
        }
        let threshold = self.lambda / (2.0 * self.epsilon);
        if !(self.q > threshold) {
            return bad(
                "plant.q",
                &format!(
                    "the observer-based controller requires q > lambda/(2 eps) = {threshold}, got {}",
                    self.q
                ),
            );
        }
        if self.intervals < 16 {
            return bad(
                "grid.intervals",
                &format!("must be at least 16, got {}", self.intervals),
            );
        }
        if self.horizon < self.dt {
            return bad("sim.horizon", "must be at least one time step");
        }
        if !(self.vartheta > 0.0 && self.vartheta < 1.0) {
            return bad(
                "trigger.vartheta",
                &format!("must lie in (0, 1), got {}", self.vartheta),
            );
        }
        if !(self.m0 < 0.0) {
            return bad("trigger.m0", &format!("must be negative, got {}", self.m0));
        }
        for (key, v) in [
            ("trigger.beta1", self.beta1),
            ("trigger.beta2", self.beta2),
            ("trigger.beta3", self.beta3),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(key, &format!("must be positive, got {v}"));
                }
            }
        }
        let given = [self.beta1, self.beta2, self.beta3]
            .iter()
            .filter(|b| b.is_some())
            .count();
        if given != 0 && given != 3 {
            return bad("trigger.beta1", "give all three betas or none");
        }
        if let Some(p) = self.period {
            if !(p > 0.0) || p > self.horizon {
                return bad("sim.period", &format!("must lie in (0, horizon], got {p}"));
            }
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0) {
                return bad(
                    "certificate.sigma",
                    &format!("must be non-negative, got {s}"),
                );
            }
        }
        if self.modes == Some(0) {
            return bad("certificate.modes", "must be at least 1");
        }
        if self.snapshot_every == Some(0) {
            return bad("sim.snapshot_every", "must be at least 1");
        }
        for (key, c) in [("sim.u0", &self.u0), ("sim.uhat0", &self.uhat0)] {
            if c.first().copied().unwrap_or(0.0) != 0.0 {
                return bad(
                    key,
                    "initial profile must vanish at x = 0 (constant coefficient 0)",
                );
            }
        }
        Ok(())
    }

    pub fn betas(&self) -> Option<[f64; 3]> {
        match (self.beta1, self.beta2, self.beta3) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        }
    }

    /// `key = value` lines of every resolved setting.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_encode_reference_values() {
        let c = ExperimentConfig::preset("paper-event-eta1").unwrap();
        assert_eq!((c.eta, c.gamma, c.vartheta, c.m0), (1.0, 1e5, 0.1, -0.5));
        assert_eq!((c.epsilon, c.lambda, c.q), (1.0, 10.0, 5.1));
        assert_eq!((c.kappa1, c.kappa2, c.kappa3, c.b), (11.0, 1e4, 1e8, 0.644));
        assert_eq!(
            ExperimentConfig::preset("paper-event-eta100").unwrap().eta,
            100.0
        );
        assert_eq!(
            ExperimentConfig::preset("paper-sampled").unwrap().mode,
            Mode::Periodic
        );
        let cert = ExperimentConfig::preset("paper-certificate").unwrap();
        assert_eq!((cert.sigma, cert.modes), (Some(0.0266), Some(9)));
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn empty_config_is_default() {
        let raw = RawConfig::from_toml("").unwrap();
        let c = ExperimentConfig::resolve(Some(&raw), &RawConfig::default()).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!(c.echo().contains("lambda = 10.0"));
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let err = RawConfig::from_toml("[plant]\nlambda = 10.0\nlamda = 3.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lamda"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(RawConfig::from_toml("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn robin_gain_threshold_is_named() {
        let raw = RawConfig::from_toml("[plant]\nq = 4.9\n").unwrap();
        let err = ExperimentConfig::resolve(Some(&raw), &RawConfig::default()).unwrap_err();
        assert!(err.to_string().contains("q > lambda/(2 eps)"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn flags_override_file_and_preset() {
        let file = RawConfig::from_toml(
            "preset = \"paper-event-eta100\"\n[trigger]\ngamma = 2e5\n[sim]\nmode = \"jitter\"\n",
        )
        .unwrap();
        let mut flags = RawConfig::default();
        flags.trigger.gamma = Some(3e5);
        let c = ExperimentConfig::resolve(Some(&file), &flags).unwrap();
        assert_eq!(c.eta, 100.0);
        assert_eq!(c.gamma, 3e5);
        assert_eq!(c.mode, Mode::Jitter);
        flags.preset = Some("paper-event-eta1".into());
        assert_eq!(
            ExperimentConfig::resolve(Some(&file), &flags).unwrap().eta,
            1.0
        );
    }

    #[test]
    fn partial_betas_rejected() {
        let raw = RawConfig::from_toml("[trigger]\nbeta1 = 0.015\n").unwrap();
        assert!(ExperimentConfig::resolve(Some(&raw), &RawConfig::default()).is_err());
        let raw = RawConfig::from_toml(
            "[trigger]\nbeta1 = 0.015\nbeta2 = 0.0022\nbeta3 = 0.1328\nB = 0.5\n",
        )
        .unwrap();
        let c = ExperimentConfig::resolve(Some(&raw), &RawConfig::default()).unwrap();
        assert_eq!(c.betas(), Some([0.015, 0.0022, 0.1328]));
        assert_eq!(c.b, 0.5);
    }
}
