use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Spatially uniform, divergence-free velocity field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowField {
    Constant {
        velocity: [f64; 2],
    },
    /// `μx = ax·sin(π − wx·t)`, `μy = ay·sin(π/2 − wy·t)`.
    Harmonic {
        ax: f64,
        ay: f64,
        wx: f64,
        wy: f64,
    },
}

impl FlowField {
    pub fn velocity(&self, t: f64) -> [f64; 2] {
        match *self {
            FlowField::Constant { velocity } => velocity,
            FlowField::Harmonic { ax, ay, wx, wy } => {
                [ax * (PI - wx * t).sin(), ay * (FRAC_PI_2 - wy * t).sin()]
            }
        }
    }

    pub fn is_steady(&self) -> bool {
        matches!(self, FlowField::Constant { .. })
    }
}
