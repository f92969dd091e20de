//! Experiment configuration: defaults per experiment kind, a line-oriented
//! `key = value` config file format, and validation with line-numbered
//! diagnostics.
//!
//! Precedence is defaults < command-line flags < config file; the runner
//! receives a fully resolved [`ExperimentConfig`].

use slitlab_core::coeff::CoeffField;
use slitlab_core::defaults::POINCARE_SLACK;
use std::fmt;
use std::path::PathBuf;

/// The seven experiment kinds, one per CLI subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Signorini,
    Degenerate,
    Frequency,
    Campanato,
    Harnack,
    Inequalities,
    Pipeline,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Option<ExperimentKind> {
        Some(match s {
            "signorini" => ExperimentKind::Signorini,
            "degenerate" => ExperimentKind::Degenerate,
            "frequency" => ExperimentKind::Frequency,
            "campanato" => ExperimentKind::Campanato,
            "harnack" => ExperimentKind::Harnack,
            "inequalities" => ExperimentKind::Inequalities,
            "pipeline" => ExperimentKind::Pipeline,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Signorini => "signorini",
            ExperimentKind::Degenerate => "degenerate",
            ExperimentKind::Frequency => "frequency",
            ExperimentKind::Campanato => "campanato",
            ExperimentKind::Harnack => "harnack",
            ExperimentKind::Inequalities => "inequalities",
            ExperimentKind::Pipeline => "pipeline",
        }
    }
}

/// Coefficient field selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoeffKind {
    /// The identity matrix.
    Constant,
    /// Seeded smooth perturbation of size `eps0`.
    Perturbation,
}

/// Config file parse or validation failure, tagged with the 1-based line
/// number and the offending key (line 0 for file-level problems).
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line, key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config error at line {}: {}", self.line, self.message)
        } else {
            write!(f, "config error at line {}: key `{}`: {}", self.line, self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Grid spacings accepted by the lab (h = 1 / denominator).
pub const H_DENOMINATORS: [u32; 5] = [32, 64, 128, 256, 512];

/// Fully resolved experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Tangential dimension + 1 of the slit; the ambient dimension is n + 1.
    pub n: usize,
    /// Grid spacing denominator: h = 1 / h_den.
    pub h_den: u32,
    /// Master seed: offsets corpus seeds and (by default) the coefficient
    /// perturbation seed.
    pub seed: u64,
    pub alpha: f64,
    pub coeff: CoeffKind,
    pub eps0: f64,
    /// Overrides the master seed for the coefficient perturbation.
    pub coeff_seed: Option<u64>,
    /// Radius ladder for frequency / Campanato / Harnack fits.
    pub radii: Vec<f64>,
    /// Corpus size for the inequalities experiment.
    pub seeds: usize,
    /// Frequency classification tolerance around 3/2.
    pub tau: f64,
    /// Relative Hopf floor for the pipeline.
    pub hopf_floor: f64,
    /// Discretization slack on the Poincare bound.
    pub poincare_slack: f64,
    /// Output directory for CSV and JSON artifacts.
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Kind-specific defaults; every field can be overridden by flags or a
    /// config file.
    pub fn default_for(kind: ExperimentKind) -> ExperimentConfig {
        let (n, h_den) = match kind {
            ExperimentKind::Pipeline => (2, 32),
            ExperimentKind::Campanato => (1, 512),
            ExperimentKind::Inequalities => (1, 128),
            _ => (1, 256),
        };
        let radii = match kind {
            ExperimentKind::Campanato => vec![0.4, 0.2, 0.1, 0.05],
            ExperimentKind::Harnack => vec![0.4, 0.2, 0.1],
            _ => vec![0.5, 0.4, 0.3, 0.2, 0.1],
        };
        let coeff = match kind {
            ExperimentKind::Pipeline => CoeffKind::Perturbation,
            _ => CoeffKind::Constant,
        };
        ExperimentConfig {
            kind,
            n,
            h_den,
            seed: 0,
            alpha: 0.25,
            coeff,
            eps0: 0.05,
            coeff_seed: None,
            radii,
            seeds: 100,
            tau: 0.1,
            hopf_floor: 0.5,
            poincare_slack: POINCARE_SLACK,
            out: PathBuf::from("out"),
        }
    }

    /// Grid spacing.
    pub fn h(&self) -> f64 {
        1.0 / self.h_den as f64
    }

    /// Cells per unit-length-2 axis (the `[-1, 1]` axes all use this count).
    pub fn cells(&self) -> usize {
        2 * self.h_den as usize
    }

    /// Materialize the coefficient field.
    pub fn coeff_field(&self) -> slitlab_core::Result<CoeffField> {
        match self.coeff {
            CoeffKind::Constant => Ok(CoeffField::identity(self.n)),
            CoeffKind::Perturbation => {
                let seed = self.coeff_seed.unwrap_or(self.seed);
                CoeffField::perturbed(self.n, self.eps0, self.alpha, seed)
            }
        }
    }

    /// Apply a config file on top of the current values. Unknown keys,
    /// malformed values and out-of-range settings are rejected with the
    /// offending line number.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((k, v)) = stripped.split_once('=') else {
                return Err(ConfigError::new(line, "", "expected `key = value`"));
            };
            let key = k.trim();
            let val = v.trim();
            if val.is_empty() {
                return Err(ConfigError::new(line, key, "empty value"));
            }
            self.apply_key(line, key, val)?;
        }
        Ok(())
    }

    fn apply_key(&mut self, line: usize, key: &str, val: &str) -> Result<(), ConfigError> {
        match key {
            "kind" => {
                self.kind = ExperimentKind::parse(val).ok_or_else(|| {
                    ConfigError::new(
                        line,
                        key,
                        format!(
                            "unknown kind `{val}` (expected signorini | degenerate | frequency \
                             | campanato | harnack | inequalities | pipeline)"
                        ),
                    )
                })?;
            }
            "n" => {
                let n: usize = parse_num(line, key, val)?;
                if n != 1 && n != 2 {
                    return Err(ConfigError::new(line, key, "n must be 1 or 2"));
                }
                self.n = n;
            }
            "h" => {
                self.h_den = parse_h(line, val)?;
            }
            "seed" => {
                self.seed = parse_num(line, key, val)?;
            }
            "coeff_seed" => {
                self.coeff_seed = Some(parse_num(line, key, val)?);
            }
            "alpha" => {
                let a: f64 = parse_num(line, key, val)?;
                if !(a > 0.0 && a < 0.5) {
                    return Err(ConfigError::new(line, key, "alpha must lie in (0, 1/2)"));
                }
                self.alpha = a;
            }
            "coeff" => {
                self.coeff = match val {
                    "constant" => CoeffKind::Constant,
                    "perturbation" => CoeffKind::Perturbation,
                    _ => {
                        return Err(ConfigError::new(
                            line,
                            key,
                            format!("unknown coefficient spec `{val}` (constant | perturbation)"),
                        ))
                    }
                };
            }
            "eps0" => {
                let e: f64 = parse_num(line, key, val)?;
                if !(0.0..=0.2).contains(&e) {
                    return Err(ConfigError::new(line, key, "eps0 must lie in [0, 0.2]"));
                }
                self.eps0 = e;
            }
            "radii" => {
                let mut radii = Vec::new();
                for part in val.split(',') {
                    let r: f64 = parse_num(line, key, part.trim())?;
                    if !(r > 0.0 && r <= 1.0) {
                        return Err(ConfigError::new(line, key, "radii must lie in (0, 1]"));
                    }
                    radii.push(r);
                }
                self.radii = radii;
            }
            "seeds" => {
                let s: usize = parse_num(line, key, val)?;
                if s == 0 {
                    return Err(ConfigError::new(line, key, "corpus needs at least one seed"));
                }
                self.seeds = s;
            }
            "tau" => {
                self.tau = parse_pos(line, key, val)?;
            }
            "hopf_floor" => {
                self.hopf_floor = parse_pos(line, key, val)?;
            }
            "poincare_slack" => {
                self.poincare_slack = parse_pos(line, key, val)?;
            }
            "out" => {
                self.out = PathBuf::from(val);
            }
            _ => {
                return Err(ConfigError::new(line, key, format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, val: &str) -> Result<T, ConfigError> {
    val.parse()
        .map_err(|_| ConfigError::new(line, key, format!("cannot parse `{val}`")))
}

fn parse_pos(line: usize, key: &str, val: &str) -> Result<f64, ConfigError> {
    let x: f64 = parse_num(line, key, val)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(ConfigError::new(line, key, "must be a positive number"));
    }
    Ok(x)
}

/// Parse a grid spacing, either `1/128` or its decimal value; restricted to
/// the supported dyadic ladder.
pub fn parse_h(line: usize, val: &str) -> Result<u32, ConfigError> {
    let den: Option<u32> = if let Some(rest) = val.strip_prefix("1/") {
        rest.trim().parse().ok()
    } else {
        let x: f64 = val
            .parse()
            .map_err(|_| ConfigError::new(line, "h", format!("cannot parse `{val}`")))?;
        H_DENOMINATORS.iter().copied().find(|&d| (x - 1.0 / d as f64).abs() < 1e-12)
    };
    match den {
        Some(d) if H_DENOMINATORS.contains(&d) => Ok(d),
        _ => Err(ConfigError::new(
            line,
            "h",
            format!("h must be one of 1/32, 1/64, 1/128, 1/256, 1/512 (got `{val}`)"),
        )),
    }
}
