//! Analytic ground truth, synthetic sensors and the canned experiment configurations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::config::{
    DecompositionConfig, FieldNorm, FlowConfig, GeometryConfig, InitialEstimate, Mode,
    OutputConfig, RunConfig, RunSection, UncertaintyConfig,
};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::mesh_fem::CouplingForm;

/// Centre displacement of the Gaussian plume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    /// `m(t) = v t`.
    Linear { velocity: [f64; 2] },
    /// `mx = A(1 + cos(wx t − π))`, `my = A cos(wy t − π/2)`.
    Harmonic { amplitude: f64, wx: f64, wy: f64 },
}

impl Drift {
    pub fn offset(&self, t: f64) -> [f64; 2] {
        match *self {
            Drift::Linear { velocity } => [velocity[0] * t, velocity[1] * t],
            Drift::Harmonic { amplitude, wx, wy } => [
                amplitude * (1.0 + (wx * t - PI).cos()),
                amplitude * (wy * t - FRAC_PI_2).cos(),
            ],
        }
    }
}

/// `u(t,x) = 1/(2πσ²) exp(−|x − x₀ − m(t)|²/(2σ²))` with `σ(t) = σ₀ + σ̇ t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianTruth {
    pub center: [f64; 2],
    pub sigma0: f64,
    pub sigma_rate: f64,
    pub drift: Drift,
}

impl GaussianTruth {
    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma0 + self.sigma_rate * t
    }

    pub fn value(&self, t: f64, p: [f64; 2]) -> f64 {
        let s = self.sigma(t);
        let m = self.drift.offset(t);
        let dx = (p[0] - self.center[0] - m[0]) / s;
        let dy = (p[1] - self.center[1] - m[1]) / s;
        (-0.5 * (dx * dx + dy * dy)).exp() / (2.0 * PI * s * s)
    }
}

/// Sensor noise for `(step, node)`: uniform on `[−w, w]`.
///
/// Counter-based: the value depends only on the seed, the step and the global node id, so
/// the same physical sensor reads the same value in every run mode and for any worker count.
pub fn sensor_noise(seed: u64, step: usize, node: usize, half_width: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng.set_word_pos(2 * node as u128);
    (rng.random::<f64>() - 0.5) * 2.0 * half_width
}

/// Exp. 1: a plume carried along a 20 × 1 channel of unit subdomains.
pub fn experiment1() -> RunConfig {
    RunConfig {
        geometry: GeometryConfig {
            origin: [0.0, 0.0],
            size: [20.0, 1.0],
            elements_per_subdomain: [15, 15],
        },
        decomposition: DecompositionConfig {
            subdomains: [20, 1],
            ..Default::default()
        },
        flow: FlowConfig {
            field: FlowField::Constant {
                velocity: [0.2, 0.0],
            },
            // σ(t) = 0.06 + 2εt with σ̇ = 0.02.
            epsilon: 0.01,
            coupling: CouplingForm::Normal,
        },
        truth: GaussianTruth {
            center: [0.25, 0.25],
            sigma0: 0.06,
            sigma_rate: 0.02,
            drift: Drift::Linear {
                velocity: [0.2, 0.0],
            },
        },
        uncertainty: UncertaintyConfig {
            q0: 0.1,
            q: 0.1,
            r: 12.0,
            reinit_window: Some(0.1),
            gamma: None,
            observed: (1..=4).chain(9..=12).chain(17..=20).collect(),
            pseudo_observations: true,
            noise_half_width: 0.5,
        },
        run: RunSection {
            mode: Mode::Localized,
            dt: 0.1,
            steps: 1000,
            seed: 2024,
            initial_estimate: InitialEstimate::Zero,
            strict: false,
        },
        output: OutputConfig {
            dir: None,
            probe: [10.0, 0.25],
            snapshot_every: 0,
            norm: FieldNorm::Nodal,
        },
    }
}

/// Reduced Exp. 1 for quick checks: 8 subdomains of 8 × 8 elements, 250 steps.
pub fn experiment1_desk() -> RunConfig {
    let mut c = experiment1();
    c.geometry.size = [8.0, 1.0];
    c.geometry.elements_per_subdomain = [8, 8];
    c.decomposition.subdomains = [8, 1];
    c.uncertainty.observed = vec![1, 2, 5, 6];
    c.run.steps = 250;
    c.output.probe = [4.0, 0.25];
    c
}

/// Exp. 2: a plume on a harmonic path over 3 × 3 unit subdomains, sensors in subdomains 3, 4.
pub fn experiment2() -> RunConfig {
    RunConfig {
        geometry: GeometryConfig {
            origin: [0.0, 0.0],
            size: [3.0, 3.0],
            elements_per_subdomain: [15, 15],
        },
        decomposition: DecompositionConfig {
            subdomains: [3, 3],
            ..Default::default()
        },
        flow: FlowConfig {
            field: FlowField::Harmonic {
                ax: 0.12,
                ay: 0.24,
                wx: 0.1,
                wy: 0.2,
            },
            // σ̇ = 2ε.
            epsilon: 0.005,
            coupling: CouplingForm::Normal,
        },
        truth: GaussianTruth {
            center: [0.25, 1.5],
            sigma0: 0.1,
            sigma_rate: 0.01,
            drift: Drift::Harmonic {
                amplitude: 1.2,
                wx: 0.1,
                wy: 0.2,
            },
        },
        uncertainty: UncertaintyConfig {
            q0: 1.4,
            q: 5.0,
            r: 12.0,
            reinit_window: Some(0.1),
            gamma: None,
            observed: vec![3, 4],
            pseudo_observations: true,
            noise_half_width: 0.5,
        },
        run: RunSection {
            mode: Mode::Localized,
            dt: 0.1,
            steps: 2000,
            seed: 2024,
            initial_estimate: InitialEstimate::Zero,
            strict: false,
        },
        output: OutputConfig {
            dir: None,
            probe: [1.4, 1.4],
            snapshot_every: 0,
            norm: FieldNorm::Nodal,
        },
    }
}

/// Reduced Exp. 2: 8 × 8 elements per subdomain.
pub fn experiment2_desk() -> RunConfig {
    let mut c = experiment2();
    c.geometry.elements_per_subdomain = [8, 8];
    c
}

pub fn experiment(id: u32, desk: bool) -> Result<RunConfig> {
    match (id, desk) {
        (1, false) => Ok(experiment1()),
        (1, true) => Ok(experiment1_desk()),
        (2, false) => Ok(experiment2()),
        (2, true) => Ok(experiment2_desk()),
        _ => Err(Error::Config(format!("unknown experiment {id}"))),
    }
}
