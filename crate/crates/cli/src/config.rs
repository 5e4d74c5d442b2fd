//! TOML run configuration.

use std::path::{Path, PathBuf};

use bilateral_core::approx::Scheme;
use bilateral_core::bounds::GammaForm;
use bilateral_core::model::PolySystemModel;
use bilateral_core::odeint::IntegratorOptions;
use bilateral_core::polyfield::{Monomial, PolyVectorField};
use bilateral_core::presets::{preset, OscillatorParams, Preset};
use bilateral_core::region::{ClassifierParams, Method};
use bilateral_core::signals::TimeSignal;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PRESET: &str = "vanderpol-8.1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelSpec,
    #[serde(default)]
    pub approximation: ApproximationSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "ParamOverrides::is_empty")]
    pub overrides: ParamOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineModel>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_switch: Option<f64>,
}

impl ParamOverrides {
    pub fn is_empty(&self) -> bool {
        *self == ParamOverrides::default()
    }

    fn apply(&self, p: &mut OscillatorParams) {
        let pairs = [
            (self.omega0_sq, &mut p.omega0_sq),
            (self.alpha1, &mut p.alpha1),
            (self.alpha2, &mut p.alpha2),
            (self.a1, &mut p.a1),
            (self.a2, &mut p.a2),
            (self.r1, &mut p.r1),
            (self.r2, &mut p.r2),
            (self.a, &mut p.a),
            (self.omega2, &mut p.omega2),
            (self.pulse_level, &mut p.pulse_level),
            (self.pulse_switch, &mut p.pulse_switch),
        ];
        for (v, slot) in pairs {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
}

/// A model written out in full; signals use their text form, e.g. `sin(5, 21, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineModel {
    pub a: Vec<Vec<TimeSignal>>,
    /// One list of monomials per component.
    pub f: Vec<Vec<InlineMonomial>>,
    #[serde(default)]
    pub f0: f64,
    pub eta: Vec<TimeSignal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineMonomial {
    pub coeff: TimeSignal,
    pub exponents: Vec<u32>,
}

impl InlineModel {
    pub fn build(&self) -> CliResult<PolySystemModel> {
        let comps = self
            .f
            .iter()
            .map(|c| {
                c.iter()
                    .map(|m| Monomial::new(m.coeff.clone(), m.exponents.clone()))
                    .collect()
            })
            .collect();
        let f = PolyVectorField::new(self.a.len(), comps)?;
        Ok(PolySystemModel::new(self.a.clone(), f, self.f0, self.eta.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproximationSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub t0: f64,
    /// Defaults to the preset horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Defaults to the preset's interior state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    /// Rows in time-series outputs.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_scheme() -> Scheme {
    Scheme::A
}
fn default_m() -> usize {
    3
}
fn default_rel_tol() -> f64 {
    1e-9
}
fn default_abs_tol() -> f64 {
    1e-12
}
fn default_samples() -> usize {
    2001
}

impl Default for ApproximationSection {
    fn default() -> Self {
        ApproximationSection {
            scheme: default_scheme(),
            m: default_m(),
            t0: 0.0,
            horizon: None,
            x0: None,
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaChoice {
    Exact,
    Conservative,
}

impl From<GammaChoice> for GammaForm {
    fn from(g: GammaChoice) -> Self {
        match g {
            GammaChoice::Exact => GammaForm::Exact,
            GammaChoice::Conservative => GammaForm::Conservative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// Ball radius for the Lipschitz constants of the linear bound; defaults
    /// to the outer end of the preset bracket.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: GammaChoice,
}

fn default_gamma() -> GammaChoice {
    GammaChoice::Exact
}

impl Default for BoundsSection {
    fn default() -> Self {
        BoundsSection {
            radius: None,
            gamma: default_gamma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    /// Method names such as `reference`, `z2-A-m3`, `z3-A-m3`, `maxima-A-m3`.
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_directions")]
    pub n_directions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_hi: Option<f64>,
    /// Defaults to `1e-3·r_hi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub classifier: ClassifierParams,
}

fn default_methods() -> Vec<String> {
    ["reference", "z2-A-m1", "z2-A-m2", "z2-A-m3"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn default_directions() -> usize {
    64
}

impl Default for RegionSection {
    fn default() -> Self {
        RegionSection {
            methods: default_methods(),
            n_directions: default_directions(),
            r_lo: None,
            r_hi: None,
            tolerance: None,
            classifier: ClassifierParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_t0s")]
    pub t0s: Vec<f64>,
}

fn default_t0s() -> Vec<f64> {
    vec![0.0, std::f64::consts::FRAC_PI_2]
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { t0s: default_t0s() }
    }
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            output_dir: default_output_dir(),
            model: ModelSpec {
                preset: Some(name.to_string()),
                ..ModelSpec::default()
            },
            approximation: ApproximationSection::default(),
            bounds: BoundsSection::default(),
            region: RegionSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Checks everything that can be checked without integrating.
    pub fn resolve(&self) -> CliResult<Resolved> {
        let (model, preset) = match (&self.model.preset, &self.model.inline) {
            (Some(name), None) => {
                let mut p = preset(name)?;
                self.model.overrides.apply(&mut p.params);
                (p.params.model()?, Some(p))
            }
            (None, Some(inline)) => {
                if !self.model.overrides.is_empty() {
                    return Err(CliError::Usage("overrides apply only to presets".into()));
                }
                (inline.build()?, None)
            }
            _ => {
                return Err(CliError::Usage(
                    "model needs exactly one of `preset` or `inline`".into(),
                ))
            }
        };
        let ap = &self.approximation;
        let horizon = ap.horizon.or(preset.as_ref().map(|p| p.horizon)).unwrap_or(40.0);
        let x0 = match (&ap.x0, &preset) {
            (Some(x), _) => x.clone(),
            (None, Some(p)) => p.interior_x0.to_vec(),
            (None, None) => return Err(CliError::Usage("approximation.x0 is required for inline models".into())),
        };
        if x0.len() != model.dim() {
            return Err(CliError::Usage(format!(
                "x0 has {} entries, model has dimension {}",
                x0.len(),
                model.dim()
            )));
        }
        if ap.m == 0 {
            return Err(CliError::Usage("m must be at least 1".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite() && ap.t0.is_finite()) {
            return Err(CliError::Usage("horizon must be positive and t0 finite".into()));
        }
        if !(ap.rel_tol > 0.0 && ap.abs_tol > 0.0) {
            return Err(CliError::Usage("tolerances must be positive".into()));
        }
        if ap.samples < 2 {
            return Err(CliError::Usage("samples must be at least 2".into()));
        }
        model.check_forcing(ap.t0, ap.t0 + horizon, bilateral_core::model::ETA_TOLERANCE)?;
        let methods = self
            .region
            .methods
            .iter()
            .map(|m| m.parse::<Method>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?;
        let bracket = preset.as_ref().map(|p| p.bracket);
        let r_lo = self.region.r_lo.or(bracket.map(|b| b.0));
        let r_hi = self.region.r_hi.or(bracket.map(|b| b.1));
        let radius = self.bounds.radius.or(r_hi);
        Ok(Resolved {
            model,
            preset,
            t0: ap.t0,
            horizon,
            x0,
            methods,
            r_lo,
            r_hi,
            radius,
        })
    }
}

/// Configuration with defaults filled in from the preset.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: PolySystemModel,
    pub preset: Option<Preset>,
    pub t0: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub methods: Vec<Method>,
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
    pub radius: Option<f64>,
}

impl Resolved {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.horizon
    }
}

impl ApproximationSection {
    pub fn integrator_options(&self) -> IntegratorOptions {
        IntegratorOptions::with_tolerances(self.rel_tol, self.abs_tol)
    }
}
