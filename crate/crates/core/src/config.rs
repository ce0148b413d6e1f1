//! TOML run configuration.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::mesh_fem::CouplingForm;
use crate::scenarios::GaussianTruth;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub decomposition: DecompositionConfig,
    pub flow: FlowConfig,
    pub truth: GaussianTruth,
    pub uncertainty: UncertaintyConfig,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub origin: [f64; 2],
    pub size: [f64; 2],
    pub elements_per_subdomain: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionConfig {
    pub subdomains: [usize; 2],
    /// Relative interface error below which the Schwarz loop stops.
    #[serde(default = "default_tol")]
    pub schwarz_tol: f64,
    #[serde(default = "default_max_iter")]
    pub schwarz_max_iter: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    50
}
fn default_workers() -> usize {
    1
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig {
            subdomains: [1, 1],
            schwarz_tol: default_tol(),
            schwarz_max_iter: default_max_iter(),
            workers: default_workers(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub field: FlowField,
    pub epsilon: f64,
    #[serde(default)]
    pub coupling: CouplingForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    /// Variance scale of the initial error.
    pub q0: f64,
    /// Variance scale of the model error per unit time.
    pub q: f64,
    /// Inverse variance of the observation noise.
    pub r: f64,
    /// Length of the reinitialization window (localized mode); `None` runs one window.
    #[serde(default)]
    pub reinit_window: Option<f64>,
    /// Overrides the ellipsoid scaling derived from the horizon or window.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// 1-based ids of subdomains with sensors.
    pub observed: Vec<usize>,
    #[serde(default = "default_true")]
    pub pseudo_observations: bool,
    #[serde(default = "default_half_width")]
    pub noise_half_width: f64,
}

fn default_true() -> bool {
    true
}
fn default_half_width() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Localized,
    Global,
    Forward,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialEstimate {
    #[default]
    Zero,
    Truth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Filter modes only; forward runs always start from the analytic state.
    #[serde(default)]
    pub initial_estimate: InitialEstimate,
    /// Fail instead of warning when the Schwarz loop hits its iteration cap.
    #[serde(default)]
    pub strict: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Point whose estimate and bound are reported (snapped to the nearest node).
    #[serde(default)]
    pub probe: [f64; 2],
    /// Keep the stitched estimate every this many steps (0 disables snapshots).
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub norm: FieldNorm,
}

/// Norm of the error fields reported in `metrics.csv`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldNorm {
    /// Unweighted 2-norm of the nodal values on the stitched mesh.
    #[default]
    Nodal,
    /// `√(uᵀ M u)`, the discrete L² norm.
    Mass,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn horizon(&self) -> f64 {
        self.run.dt * self.run.steps as f64
    }

    pub fn subdomain_area(&self) -> f64 {
        let [sx, sy] = self.decomposition.subdomains;
        self.geometry.size[0] * self.geometry.size[1] / (sx * sy) as f64
    }

    /// Time steps per reinitialization window.
    pub fn steps_per_window(&self) -> Option<usize> {
        self.uncertainty
            .reinit_window
            .map(|w| (w / self.run.dt).round() as usize)
    }

    /// The same problem as one subdomain covering the whole domain at the same resolution.
    ///
    /// Sensor ids refer to the original subdomain grid and are dropped; this is meant for
    /// open-loop comparisons (global mode is the filtered mono-domain counterpart).
    pub fn mono_domain(&self) -> RunConfig {
        let mut c = self.clone();
        let [sx, sy] = self.decomposition.subdomains;
        let [ex, ey] = self.geometry.elements_per_subdomain;
        c.decomposition.subdomains = [1, 1];
        c.geometry.elements_per_subdomain = [sx * ex, sy * ey];
        c.uncertainty.observed.clear();
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let g = &self.geometry;
        if !(g.size[0] > 0.0 && g.size[1] > 0.0) || g.elements_per_subdomain.contains(&0) {
            return bad("geometry needs positive size and element counts".into());
        }
        let d = &self.decomposition;
        if d.subdomains.contains(&0) {
            return bad("decomposition needs at least one subdomain per axis".into());
        }
        if !(d.schwarz_tol > 0.0) || d.schwarz_max_iter == 0 || d.workers == 0 {
            return bad("schwarz_tol, schwarz_max_iter and workers must be positive".into());
        }
        if !(self.flow.epsilon >= 0.0 && self.flow.epsilon.is_finite()) {
            return bad(format!(
                "diffusion coefficient {} must be non-negative",
                self.flow.epsilon
            ));
        }
        let u = &self.uncertainty;
        if [u.q0, u.q, u.r, u.noise_half_width]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("q0, q, r and noise_half_width must be finite and non-negative".into());
        }
        if let Some(gm) = u.gamma {
            if !(gm > 0.0 && gm.is_finite()) {
                return bad(format!("gamma {gm} must be positive"));
            }
        }
        let n = d.subdomains[0] * d.subdomains[1];
        if let Some(&id) = u.observed.iter().find(|&&id| id == 0 || id > n) {
            return bad(format!("observed subdomain {id} outside 1..={n}"));
        }
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt.is_finite()) || r.steps == 0 {
            return bad("dt must be positive and steps non-zero".into());
        }
        if let Some(w) = u.reinit_window {
            let k = w / r.dt;
            if !(w > 0.0) || (k - k.round()).abs() > 1e-9 || k.round() < 1.0 {
                return bad(format!(
                    "reinit_window {w} must be a positive multiple of dt {}",
                    r.dt
                ));
            }
            if self.run.mode == Mode::Localized && self.subdomain_area() > 1.0 + 1e-12 {
                return bad("reinitialization assumes subdomains of measure at most 1".into());
            }
        }
        let s = &self.truth;
        if !(s.sigma0 > 0.0) || s.sigma_rate < 0.0 {
            return bad("truth needs sigma0 > 0 and sigma_rate >= 0".into());
        }
        Ok(())
    }
}
