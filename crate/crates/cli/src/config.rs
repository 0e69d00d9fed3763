//! Run configuration (TOML).
//!
//! Every section rejects unknown keys, and `schema_version` must match
//! [`SCHEMA_VERSION`]. Values can be overridden from the command line with
//! dotted keys (`grid.n=200`), which are applied to the parsed TOML tree
//! before it is turned into a [`RunConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toboggan_core::contour::ContourSpec;
use toboggan_core::discrete::{wall_half_width, GridSpec};
use toboggan_core::model::{rectify_model, BranchConvention, ModelFile, ModelSpec, RectifiedModel};
use toboggan_core::Complex64;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("override `{0}` is not of the form KEY=VALUE")]
    BadOverride(String),
    #[error("override `{key}`: {reason}")]
    OverridePath { key: String, reason: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("no command given (use --command or the `command` key)")]
    MissingCommand,
    #[error("output directory {path} is not writable: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_owned(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Metric,
    Shoot,
    Compare,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Path (relative to the config file) of a standalone model file; used
    /// instead of the `model` and `contour` sections.
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub contour: Option<ContourSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub shoot: ShootSection,
    #[serde(default)]
    pub metric: MetricSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub ell: f64,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub coeffs: Vec<(u32, f64, f64)>,
    #[serde(default)]
    pub convention: BranchConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSection {
    pub epsilon: f64,
    #[serde(default)]
    pub winding: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Half width `X`; chosen by the potential-wall rule when absent.
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default = "defaults::n")]
    pub n: usize,
    /// Largest energy of interest for the wall rule.
    #[serde(default = "defaults::wall_energy")]
    pub wall_energy: f64,
    /// Required ratio `|V(±X)| / wall_energy`.
    #[serde(default = "defaults::wall_factor")]
    pub wall_factor: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            half_width: None,
            n: defaults::n(),
            wall_energy: defaults::wall_energy(),
            wall_factor: defaults::wall_factor(),
        }
    }
}

/// Thresholds used by the solver and by `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub pairing: f64,
    pub filter_im: f64,
    pub residual: f64,
    pub gram: f64,
    pub completeness: f64,
    pub rebuild: f64,
    pub kappa: f64,
    pub ms: f64,
    pub metric: f64,
    pub physical: f64,
    pub collinearity: f64,
    pub pt: f64,
    pub degeneration: f64,
    pub compare: f64,
    pub epsilon_independence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pairing: 1e-10,
            filter_im: 1e-8,
            residual: 1e-8,
            gram: 1e-8,
            completeness: 1e-8,
            rebuild: 1e-8,
            kappa: 1e-12,
            ms: 1e-10,
            metric: 1e-8,
            physical: 1e-7,
            collinearity: 1e-6,
            pt: 1e-12,
            degeneration: 1e-10,
            compare: 1e-3,
            epsilon_independence: 1e-6,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 15] {
        [
            ("pairing", self.pairing),
            ("filter_im", self.filter_im),
            ("residual", self.residual),
            ("gram", self.gram),
            ("completeness", self.completeness),
            ("rebuild", self.rebuild),
            ("kappa", self.kappa),
            ("ms", self.ms),
            ("metric", self.metric),
            ("physical", self.physical),
            ("collinearity", self.collinearity),
            ("pt", self.pt),
            ("degeneration", self.degeneration),
            ("compare", self.compare),
            ("epsilon_independence", self.epsilon_independence),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShootSection {
    /// Real initial guesses; taken from the rectified spectrum when empty.
    pub guesses: Vec<f64>,
    pub gamma_max: Option<f64>,
    pub steps: Option<usize>,
    pub root_tol: f64,
    pub max_iter: usize,
    /// Number of low modes compared by `compare` and `validate`.
    pub modes: usize,
    /// Rectified modes below this energy are not used as low modes. Winding
    /// grids carry grid-scale modes at large negative energies where the
    /// weight turns negative near the branch point.
    pub min_energy: f64,
    /// Grid used for the rectified side of `compare` (and of the shooting
    /// checks in `validate`) when it should differ from `[grid]`, as
    /// `[half_width, n]`.
    pub compare_grid: Option<(f64, usize)>,
    pub scan_re: (f64, f64, usize),
    pub scan_im: (f64, f64, usize),
}

impl Default for ShootSection {
    fn default() -> Self {
        Self {
            guesses: Vec::new(),
            gamma_max: None,
            steps: None,
            root_tol: 1e-7,
            max_iter: 60,
            modes: 3,
            min_energy: 0.0,
            compare_grid: None,
            scan_re: (0.0, 10.0, 41),
            scan_im: (-1.0, 1.0, 5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaChoice {
    Ones,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSection {
    pub kappa: KappaChoice,
    /// Random κ draws used by `validate`.
    pub kappa_draws: usize,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self {
            kappa: KappaChoice::Ones,
            kappa_draws: 10,
        }
    }
}

mod defaults {
    pub fn n() -> usize {
        400
    }
    pub fn wall_energy() -> f64 {
        20.0
    }
    pub fn wall_factor() -> f64 {
        1e3
    }
}

/// Everything the pipeline needs, validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub model: ModelSpec,
    pub contour: ContourSpec,
    pub convention: BranchConvention,
    pub rectified: RectifiedModel,
    pub grid: GridSpec,
    pub compare_grid: GridSpec,
    pub tolerances: Tolerances,
    pub shoot: ShootSection,
    pub metric: MetricSection,
}

/// Reads a config file and applies `KEY=VALUE` overrides.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_with_overrides(&text, overrides)?;
    if let Some(mf) = &cfg.model_file {
        if mf.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.model_file = Some(dir.join(mf));
            }
        }
    }
    Ok(cfg)
}

pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut tree: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    toml::Value::Table(tree)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
}

fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_owned()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(spec.to_owned()));
    }
    // Parse the value as TOML; anything that does not parse is a string.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_owned()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = tree;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::OverridePath {
            key: key.to_owned(),
            reason: format!("`{part}` is not a table"),
        })?;
    }
    table.insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}

impl RunConfig {
    /// Validates and resolves the config. `command` and `out` from the
    /// command line take precedence over the file.
    pub fn resolve(&self, command: Option<Command>, out: Option<&Path>) -> Result<Resolved, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        let command = command.or(self.command).ok_or(ConfigError::MissingCommand)?;
        let output_dir = out
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));

        for (name, value) in self.tolerances.entries() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(&format!("tolerances.{name}"), format!("must be positive, got {value}")));
            }
        }

        let (model, contour, convention) = self.model_and_contour()?;
        let rectified = rectify_model(&model, contour.winding(), convention);

        let n = self.grid.n;
        if n < 3 {
            return Err(invalid("grid.n", format!("must be at least 3, got {n}")));
        }
        let half_width = match self.grid.half_width {
            Some(x) if x > 0.0 && x.is_finite() => x,
            Some(x) => return Err(invalid("grid.half_width", format!("must be positive, got {x}"))),
            None => wall_half_width(&rectified, contour.epsilon(), self.grid.wall_energy, self.grid.wall_factor)
                .map_err(|e| invalid("grid.half_width", e.to_string()))?,
        };
        let grid = GridSpec::new(half_width, n, contour.epsilon()).map_err(|e| invalid("grid", e.to_string()))?;

        let s = &self.shoot;
        if !(s.root_tol > 0.0) {
            return Err(invalid("shoot.root_tol", "must be positive"));
        }
        if let Some(g) = s.gamma_max {
            if !(g > 0.0 && g < std::f64::consts::FRAC_PI_2) {
                return Err(invalid("shoot.gamma_max", format!("must lie in (0, pi/2), got {g}")));
            }
        }
        if let Some(steps) = s.steps {
            if steps < 100 {
                return Err(invalid("shoot.steps", format!("must be at least 100, got {steps}")));
            }
        }
        if s.modes == 0 {
            return Err(invalid("shoot.modes", "must be at least 1"));
        }
        let compare_grid = match s.compare_grid {
            None => grid,
            Some((x, n)) => GridSpec::new(x, n, contour.epsilon()).map_err(|e| invalid("shoot.compare_grid", e.to_string()))?,
        };
        if s.scan_re.2 == 0 || s.scan_im.2 == 0 {
            return Err(invalid("shoot.scan_re/scan_im", "need at least one point per axis"));
        }

        Ok(Resolved {
            command,
            output_dir,
            seed: self.seed,
            model,
            contour,
            convention,
            rectified,
            grid,
            compare_grid,
            tolerances: self.tolerances.clone(),
            shoot: self.shoot.clone(),
            metric: self.metric.clone(),
        })
    }

    fn model_and_contour(&self) -> Result<(ModelSpec, ContourSpec, BranchConvention), ConfigError> {
        if let Some(path) = &self.model_file {
            if self.model.is_some() || self.contour.is_some() {
                return Err(invalid("model_file", "cannot be combined with [model] or [contour]"));
            }
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.clone(),
                source,
            })?;
            let file = ModelFile::parse(&text).map_err(|e| invalid("model_file", e.to_string()))?;
            if !(file.epsilon > 0.0 && file.epsilon.is_finite()) {
                return Err(invalid("epsilon", format!("must be positive, got {}", file.epsilon)));
            }
            let model = file.model().map_err(|e| invalid("model_file", e.to_string()))?;
            let contour = file.contour().map_err(|e| invalid("epsilon", e.to_string()))?;
            return Ok((model, contour, file.convention));
        }
        let m = self.model.as_ref().ok_or_else(|| invalid("model", "missing section"))?;
        let c = self.contour.as_ref().ok_or_else(|| invalid("contour", "missing section"))?;
        if !(c.epsilon > 0.0 && c.epsilon.is_finite()) {
            return Err(invalid("contour.epsilon", format!("must be positive, got {}", c.epsilon)));
        }
        let mut model = ModelSpec::new(m.ell).map_err(|e| invalid("model.ell", e.to_string()))?;
        for &(k, re, im) in &m.coeffs {
            model = model
                .with_term(k, Complex64::new(re, im))
                .map_err(|e| invalid("model.coeffs", e.to_string()))?;
        }
        if let Some(omega) = m.omega {
            model = model.with_omega(omega).map_err(|e| invalid("model.omega", e.to_string()))?;
        }
        let contour = ContourSpec::new(c.epsilon, c.winding).map_err(|e| invalid("contour.epsilon", e.to_string()))?;
        Ok((model, contour, m.convention))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
command = "spectrum"

[model]
omega = 1.0

[contour]
epsilon = 0.5

[grid]
half_width = 8.0
n = 100
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = parse_with_overrides(BASE, &[]).unwrap();
        let r = cfg.resolve(None, None).unwrap();
        assert_eq!(r.command, Command::Spectrum);
        assert_eq!(r.grid.n(), 100);
        assert_eq!(r.model.coeffs()[&2], Complex64::new(1.0, 0.0));
        assert_eq!(r.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn overrides_apply_before_validation() {
        let cfg = parse_with_overrides(BASE, &["grid.n=50".into(), "contour.winding = 1".into(), "command=metric".into()]).unwrap();
        assert_eq!(cfg.grid.n, 50);
        assert_eq!(cfg.contour.as_ref().unwrap().winding, 1);
        assert_eq!(cfg.command, Some(Command::Metric));
        assert!(matches!(parse_with_overrides(BASE, &["grid.n".into()]), Err(ConfigError::BadOverride(_))));
        assert!(matches!(
            parse_with_overrides(BASE, &["seed=3".into(), "seed.x=1".into()]),
            Err(ConfigError::OverridePath { .. })
        ));
    }

    #[test]
    fn negative_epsilon_names_the_field() {
        let cfg = parse_with_overrides(BASE, &["contour.epsilon=-0.5".into()]).unwrap();
        let err = cfg.resolve(None, None).unwrap_err();
        assert!(err.to_string().starts_with("contour.epsilon"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(parse_with_overrides(BASE, &["grid.bogus=1".into()]), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_with_overrides(BASE, &["typo=1".into()]), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn schema_and_tolerances_checked() {
        let cfg = parse_with_overrides(BASE, &["schema_version=2".into()]).unwrap();
        assert!(cfg.resolve(None, None).unwrap_err().to_string().starts_with("schema_version"));
        let cfg = parse_with_overrides(BASE, &["tolerances.gram=0".into()]).unwrap();
        assert!(cfg.resolve(None, None).unwrap_err().to_string().starts_with("tolerances.gram"));
    }

    #[test]
    fn wall_rule_fills_half_width() {
        let text = BASE.replace("half_width = 8.0\n", "");
        let r = parse_with_overrides(&text, &[]).unwrap().resolve(None, None).unwrap();
        assert!(r.grid.half_width() > 100.0);
    }
}
