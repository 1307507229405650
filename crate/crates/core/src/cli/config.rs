//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::mobility::{FrictionModel, ModelSpec};
use crate::scheme::{SchemeParams, DEFAULT_DELTA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    #[serde(default = "one")]
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub delta: f64,
    pub eps: f64,
    /// `lambda = lambda_frac * lambda_m`.
    pub lambda_frac: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub line_search_max_halvings: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            eps: 0.0,
            lambda_frac: 0.5,
            newton_tol: 1e-9,
            newton_max_iter: 25,
            line_search_max_halvings: 12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    PerturbedUniform,
    TanhInterface,
    CustomCsv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    /// Perturbation amplitude, or the background fraction shared by species
    /// `3..n` for the interface profile.
    #[serde(default)]
    pub amplitude: f64,
    /// Cosine modes `m` in `cos(m pi x / L)`.
    #[serde(default = "default_wavenumbers")]
    pub wavenumbers: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
    /// CSV with columns `x, c_1, ..., c_n` for `custom_csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Trace every `stride` steps.
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            stride: 1,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_wavenumbers() -> Vec<u32> {
    vec![1, 2, 3]
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(p) = cfg.initial.path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.model.n < 2 {
            return bad(format!("model.n must be at least 2, got {}", self.model.n));
        }
        Grid1D::new(self.grid.nx, self.grid.length).map_err(|e| Error::Config(e.to_string()))?;
        let t = self.time;
        if !(t.dt > 0.0) || !(t.t_end > 0.0) || !t.t_end.is_finite() {
            return bad(format!("time.dt and time.t_end must be positive, got {t:?}"));
        }
        let steps = t.t_end / t.dt;
        if steps.round() < 1.0 || (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return bad(format!("t_end {} is not a multiple of dt {}", t.t_end, t.dt));
        }
        let s = self.scheme;
        if !(s.delta > 0.0 && s.delta < 0.5) {
            return bad(format!("scheme.delta must lie in (0, 1/2), got {}", s.delta));
        }
        if !(s.eps >= 0.0) || !s.eps.is_finite() {
            return bad(format!("scheme.eps must be >= 0, got {}", s.eps));
        }
        if !(s.lambda_frac > 0.0 && s.lambda_frac < 1.0) {
            return bad(format!("scheme.lambda_frac must lie in (0, 1), got {}", s.lambda_frac));
        }
        if !(s.newton_tol > 0.0) || s.newton_max_iter == 0 {
            return bad("scheme.newton_tol and newton_max_iter must be positive".into());
        }
        if !self.initial.amplitude.is_finite() || self.initial.amplitude < 0.0 {
            return bad(format!("initial.amplitude must be >= 0, got {}", self.initial.amplitude));
        }
        if self.initial.kind == InitialKind::CustomCsv && self.initial.path.is_none() {
            return bad("initial.path is required for custom_csv".into());
        }
        if self.output.stride == 0 {
            return bad("output.stride must be positive".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.time.t_end / self.time.dt).round() as usize
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.nx, self.grid.length)
    }

    pub fn build_model(&self) -> Result<FrictionModel> {
        self.model.build()
    }

    pub fn scheme_params(&self, model: &FrictionModel) -> SchemeParams {
        let s = self.scheme;
        SchemeParams {
            tau: self.time.dt,
            delta: s.delta,
            eps: s.eps,
            lambda: s.lambda_frac * model.lambda_m(),
            newton_tol: s.newton_tol,
            newton_max_iter: s.newton_max_iter,
            line_search_max_halvings: s.line_search_max_halvings,
        }
    }
}
