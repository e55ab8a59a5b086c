//! `key = value` run configuration (TOML subset) and its resolution into
//! core types.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wbflux::entropy::CellEntropySuite;
use wbflux::experiments::{self, RowFilter, TestCaseId, TestCasePreset, REFERENCE_CELLS};
use wbflux::expr::Expr;
use wbflux::model::CustomModel;
use wbflux::{Discretization, Error, FluxModel, Problem, Profile, ScalarFn, SchemeKind, StepPolicy, TopographyProfile};

pub const DEFAULT_CELLS: usize = 40;
pub const DEFAULT_SAFETY: f64 = 0.9;
pub const DEFAULT_ENTROPY_TOL: f64 = 1e-10;

/// Every key accepted in a config file. Unset keys fall back to the preset
/// (if any) and then to the defaults above.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,

    // model
    pub model: Option<String>,
    pub velocity: Option<f64>,
    #[serde(default, deserialize_with = "expression")]
    pub flux: Option<String>,
    #[serde(default, deserialize_with = "expression")]
    pub flux_prime: Option<String>,
    #[serde(default, deserialize_with = "expression")]
    pub source_b: Option<String>,
    pub b_prime_sup: Option<f64>,
    #[serde(default, deserialize_with = "expression")]
    pub d_prime: Option<String>,
    #[serde(default, deserialize_with = "expression")]
    pub d: Option<String>,
    #[serde(default, deserialize_with = "expression")]
    pub d_inverse: Option<String>,
    pub d_prime_lower_bound: Option<f64>,

    // topography
    pub z: Option<String>,
    pub z_x: Option<Vec<f64>>,
    pub z_values: Option<Vec<f64>>,
    pub z_slope_bound: Option<f64>,

    // problem data
    pub x_left: Option<f64>,
    pub x_right: Option<f64>,
    pub t_final: Option<f64>,
    #[serde(default, deserialize_with = "expression")]
    pub initial: Option<String>,
    pub initial_breaks: Option<Vec<f64>>,
    pub initial_pieces: Option<Vec<String>>,
    #[serde(default, deserialize_with = "expression")]
    pub left_bc: Option<String>,
    #[serde(default, deserialize_with = "expression")]
    pub right_bc: Option<String>,

    // grid and stepping
    pub dx: Option<f64>,
    pub n_cells: Option<usize>,
    pub scheme: Option<String>,
    pub dt_mode: Option<String>,
    pub dt: Option<f64>,
    pub cfl: Option<f64>,
    pub safety: Option<f64>,
    pub dt_max: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,

    // output
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub history: Option<bool>,

    // entropy-check
    pub samples: Option<usize>,
    pub bound: Option<f64>,
    pub lambda_scale: Option<f64>,
    pub delta_min: Option<f64>,
    pub tolerance: Option<f64>,
    pub weak_tolerance: Option<f64>,

    // table, convergence and references
    pub rows: Option<String>,
    pub expensive: Option<bool>,
    pub reference_cells: Option<usize>,
    pub dx_list: Option<Vec<f64>>,
}

/// Expression keys also take bare numbers (`left_bc = 2`).
fn expression<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Int(i64),
        Float(f64),
    }
    Ok(Option::<Raw>::deserialize(d)?.map(|r| match r {
        Raw::Text(s) => s,
        Raw::Int(i) => i.to_string(),
        Raw::Float(f) => f.to_string(),
    }))
}

/// Failures that map to the config-error exit status.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<Error> for ConfigError {
    fn from(e: Error) -> Self {
        ConfigError(e.to_string())
    }
}

/// Reads `path` (if given) and overlays `overrides`, which win key by key.
pub fn load(path: Option<&Path>, overrides: toml::Table) -> Result<RunConfig, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read config file {}: {e}", p.display())))?;
            text.parse::<toml::Table>().map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        table.insert(k, v);
    }
    let where_ = path.map(|p| p.display().to_string()).unwrap_or_else(|| "command line".into());
    RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError(format!("{where_}: {}", e.message())))
}

/// Parses one `KEY=VALUE` override; the value is TOML, bare words are taken as strings.
pub fn parse_assignment(s: &str) -> Result<(String, toml::Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let (k, v) = (k.trim(), v.trim());
    let value = format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn expr_fn(src: &str, var: &str, key: &str) -> Result<ScalarFn, ConfigError> {
    Expr::parse(src, &[var]).map(Expr::into_fn).map_err(|e| ConfigError(format!("`{key}`: {e}")))
}

fn expr_profile(src: &str, var: &str, key: &str) -> Result<Profile, ConfigError> {
    let e = Expr::parse(src, &[var]).map_err(|e| ConfigError(format!("`{key}`: {e}")))?;
    Ok(match e.as_constant() {
        Some(c) => Profile::constant(c),
        None => {
            let f = e.into_fn();
            Profile::smooth(move |x| f(x))
        }
    })
}

/// The problem, exact solution and preset described by a config.
pub struct Resolved {
    pub preset: Option<TestCasePreset>,
    pub problem: Problem,
    /// Only kept when the config leaves the preset problem untouched.
    pub exact: Option<Profile>,
    pub uses_preset_problem: bool,
}

impl RunConfig {
    pub fn preset_id(&self) -> Result<Option<TestCaseId>, ConfigError> {
        Ok(self.preset.as_deref().map(TestCaseId::parse).transpose()?)
    }

    fn touches_problem(&self) -> bool {
        self.model.is_some()
            || self.velocity.is_some()
            || self.flux.is_some()
            || self.z.is_some()
            || self.x_left.is_some()
            || self.x_right.is_some()
            || self.initial.is_some()
            || self.initial_pieces.is_some()
            || self.left_bc.is_some()
            || self.right_bc.is_some()
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let preset = self.preset_id()?.map(experiments::preset);
        let base = preset.as_ref().map(|p| &p.problem);
        let need = |key: &str| ConfigError(format!("missing `{key}` (no preset supplies it)"));

        let model = match (self.model.as_deref(), base) {
            (Some(name), _) => self.build_model(name)?,
            (None, Some(p)) => p.model.clone(),
            (None, None) => FluxModel::burgers_hopf(),
        };
        let topography = match (self.z.as_deref(), base) {
            (Some(name), _) => self.build_topography(name)?,
            (None, Some(p)) => p.topography.clone(),
            (None, None) => TopographyProfile::zero(),
        };
        let x_left = self.x_left.or(base.map(|p| p.x_left)).ok_or_else(|| need("x_left"))?;
        let x_right = self.x_right.or(base.map(|p| p.x_right)).ok_or_else(|| need("x_right"))?;
        let t_final = self.t_final.or(base.map(|p| p.t_final)).ok_or_else(|| need("t_final"))?;
        let initial = match (&self.initial, &self.initial_pieces) {
            (Some(_), Some(_)) => return Err(ConfigError("set either `initial` or `initial_pieces`, not both".into())),
            (Some(src), None) => expr_profile(src, "x", "initial")?,
            (None, Some(pieces)) => {
                let fns = pieces.iter().map(|s| expr_fn(s, "x", "initial_pieces")).collect::<Result<_, _>>()?;
                Profile::piecewise(self.initial_breaks.clone().unwrap_or_default(), fns)?
            }
            (None, None) => base.map(|p| p.initial.clone()).ok_or_else(|| need("initial"))?,
        };
        let bc = |src: &Option<String>, key: &str, from: Option<Profile>| -> Result<Profile, ConfigError> {
            match src {
                Some(s) => expr_profile(s, "t", key),
                None => from.ok_or_else(|| need(key)),
            }
        };
        let left_bc = bc(&self.left_bc, "left_bc", base.map(|p| p.left_bc.clone()))?;
        let right_bc = bc(&self.right_bc, "right_bc", base.map(|p| p.right_bc.clone()))?;
        let problem = Problem::new(model, topography, (x_left, x_right), t_final, initial, left_bc, right_bc)?;

        let uses_preset_problem = preset.is_some() && !self.touches_problem();
        // tc1 and tc4 are steady, so their exact solution holds for any T.
        let exact = match &preset {
            Some(p) if uses_preset_problem => {
                let steady = matches!(p.id, TestCaseId::Tc1 | TestCaseId::Tc4);
                if steady || t_final == p.problem.t_final {
                    p.exact.clone()
                } else {
                    None
                }
            }
            _ => None,
        };
        Ok(Resolved { preset, problem, exact, uses_preset_problem })
    }

    fn build_model(&self, name: &str) -> Result<FluxModel, ConfigError> {
        Ok(match name {
            "burgers_hopf" | "burgers" => FluxModel::burgers_hopf(),
            "linear_advection" => {
                let v = self.velocity.ok_or_else(|| ConfigError("linear_advection needs `velocity`".into()))?;
                FluxModel::linear_advection(v)?
            }
            "custom" => {
                let u = |key: &str, src: &Option<String>| src.as_deref().map(|s| expr_fn(s, "u", key)).transpose();
                FluxModel::custom(CustomModel {
                    f: u("flux", &self.flux)?,
                    df: u("flux_prime", &self.flux_prime)?,
                    b: u("source_b", &self.source_b)?,
                    b_prime_sup: self.b_prime_sup,
                    d_prime: u("d_prime", &self.d_prime)?,
                    d_eval: u("d", &self.d)?,
                    d_inverse: u("d_inverse", &self.d_inverse)?,
                    d_prime_lower_bound: self.d_prime_lower_bound,
                })?
            }
            other => {
                return Err(ConfigError(format!(
                    "unknown model `{other}` (expected burgers_hopf, linear_advection or custom)"
                )))
            }
        })
    }

    fn build_topography(&self, name: &str) -> Result<TopographyProfile, ConfigError> {
        Ok(match name {
            "zero" => TopographyProfile::zero(),
            "cos_bump" => TopographyProfile::cos_bump(),
            "sin_jump" => TopographyProfile::sin_jump(self.z_slope_bound.unwrap_or(std::f64::consts::PI))?,
            "tabulated" => {
                let xs = self.z_x.as_deref().ok_or_else(|| ConfigError("tabulated z needs `z_x`".into()))?;
                let vs = self.z_values.as_deref().ok_or_else(|| ConfigError("tabulated z needs `z_values`".into()))?;
                TopographyProfile::tabulated(xs, vs)?
            }
            other => {
                return Err(ConfigError(format!(
                    "unknown topography `{other}` (expected zero, cos_bump, sin_jump or tabulated)"
                )))
            }
        })
    }

    pub fn discretization(&self, problem: &Problem) -> Result<Discretization, ConfigError> {
        Ok(match (self.dx, self.n_cells) {
            (Some(_), Some(_)) => return Err(ConfigError("set either `dx` or `n_cells`, not both".into())),
            (Some(dx), None) => Discretization::new(problem.x_left, problem.x_right, dx)?,
            (None, n) => Discretization::with_cells(problem.x_left, problem.x_right, n.unwrap_or(DEFAULT_CELLS))?,
        })
    }

    pub fn scheme_kind(&self) -> Result<SchemeKind, ConfigError> {
        Ok(SchemeKind::parse(self.scheme.as_deref().unwrap_or("well_balanced"))?)
    }

    /// Step policy; `None` when no `dt_mode` or `dt` is configured.
    pub fn explicit_policy(&self) -> Result<Option<StepPolicy>, ConfigError> {
        let mode = match (self.dt_mode.as_deref(), self.dt) {
            (None, None) => return Ok(None),
            (None, Some(_)) => "explicit",
            (Some(m), _) => m,
        };
        let mut policy = match mode {
            "explicit" => {
                StepPolicy::explicit(self.dt.ok_or_else(|| ConfigError("dt_mode = \"explicit\" needs `dt`".into()))?)
            }
            "paper_bound" | "envelope_bound" => StepPolicy::envelope_bound(),
            "adaptive" => StepPolicy::adaptive(self.safety.unwrap_or(DEFAULT_SAFETY)),
            other => {
                return Err(ConfigError(format!(
                    "unknown dt_mode `{other}` (expected explicit, paper_bound or adaptive)"
                )))
            }
        };
        if let Some(c) = self.cfl {
            policy.cfl_target = c;
        }
        policy.dt_max = self.dt_max;
        Ok(Some(policy))
    }

    pub fn policy(&self) -> Result<StepPolicy, ConfigError> {
        Ok(self.explicit_policy()?.unwrap_or_else(|| {
            let mut p = StepPolicy::adaptive(self.safety.unwrap_or(DEFAULT_SAFETY));
            if let Some(c) = self.cfl {
                p.cfl_target = c;
            }
            p.dt_max = self.dt_max;
            p
        }))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("wbflux_out"))
    }

    pub fn row_filter(&self) -> Result<RowFilter, ConfigError> {
        Ok(RowFilter {
            rows: self.rows.as_deref().map(RowFilter::parse_range).transpose()?,
            include_expensive: self.expensive.unwrap_or(false),
        })
    }

    pub fn reference_cells(&self) -> usize {
        self.reference_cells.unwrap_or(REFERENCE_CELLS)
    }

    pub fn entropy_suite(&self) -> CellEntropySuite {
        let d = CellEntropySuite::default();
        CellEntropySuite {
            samples: self.samples.unwrap_or(d.samples),
            bound: self.bound.unwrap_or(d.bound),
            lambda_scale: self.lambda_scale.unwrap_or(d.lambda_scale),
            delta_min: self.delta_min.unwrap_or(d.delta_min),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, text).unwrap();
        load(Some(&p), toml::Table::new())
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse("preset = \"tc1\"\nspeed = 3\n").unwrap_err();
        assert!(e.0.contains("speed"), "{e}");
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "preset = \"tc1\"\ndx = 0.1\n").unwrap();
        let mut o = toml::Table::new();
        o.insert("dx".into(), toml::Value::Float(0.01));
        let c = load(Some(&p), o).unwrap();
        assert_eq!(c.dx, Some(0.01));
        assert_eq!(c.preset.as_deref(), Some("tc1"));
    }

    #[test]
    fn numbers_as_expressions_and_floats() {
        let c = parse("left_bc = 2\nright_bc = 1.5\ndx = 1\n").unwrap();
        assert_eq!(c.left_bc.as_deref(), Some("2"));
        assert_eq!(c.right_bc.as_deref(), Some("1.5"));
        assert_eq!(c.dx, Some(1.0));
    }

    #[test]
    fn assignments() {
        assert_eq!(parse_assignment("dx=0.5").unwrap().1, toml::Value::Float(0.5));
        assert_eq!(parse_assignment("z = cos_bump").unwrap().1, toml::Value::String("cos_bump".into()));
        assert_eq!(
            parse_assignment("snapshot_times=[1.0, 2.0]").unwrap().1,
            toml::Value::Array(vec![toml::Value::Float(1.0), toml::Value::Float(2.0)])
        );
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn custom_problem_from_expressions() {
        let c = parse(
            r#"
model = "custom"
flux = "u + u^3"
flux_prime = "1 + 3*u^2"
source_b = "1"
d_prime_lower_bound = 1.0
z = "tabulated"
z_x = [0.0, 1.0]
z_values = [0.0, 0.5]
x_left = 0.0
x_right = 1.0
t_final = 0.1
initial = "1 - x/2"
left_bc = "1"
right_bc = "0.5"
"#,
        )
        .unwrap();
        let r = c.resolve().unwrap();
        assert!((r.problem.model.f(2.0) - 10.0).abs() < 1e-14);
        assert!((r.problem.initial.value(0.5) - 0.75).abs() < 1e-14);
        assert!(r.exact.is_none());
    }

    #[test]
    fn custom_model_reports_missing_key() {
        let e = parse("model = \"custom\"\nflux = \"u\"\nx_left = 0.0\n").unwrap().resolve().err().unwrap();
        assert!(e.0.contains("flux_prime"), "{e}");
    }

    #[test]
    fn preset_keeps_exact_solution() {
        let c = parse("preset = \"tc1\"\nt_final = 0.5\n").unwrap();
        let r = c.resolve().unwrap();
        assert!(r.exact.is_some());
        let c = parse("preset = \"tc1\"\ninitial = \"2\"\n").unwrap();
        assert!(c.resolve().unwrap().exact.is_none());
    }

    #[test]
    fn policies() {
        let c = RunConfig { dt: Some(1e-3), ..Default::default() };
        assert_eq!(c.policy().unwrap(), StepPolicy::explicit(1e-3));
        let c = RunConfig { dt_mode: Some("explicit".into()), ..Default::default() };
        assert!(c.policy().is_err());
        let c = RunConfig::default();
        assert_eq!(c.policy().unwrap(), StepPolicy::adaptive(DEFAULT_SAFETY));
    }
}
