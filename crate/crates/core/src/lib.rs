//! Localized minimax state estimation for 2D advection-diffusion.
//!
//! The domain is split into rectangular subdomains coupled by a damped
//! Dirichlet/Neumann (d-ADN) interface scheme; each subdomain runs its own minimax filter
//! whose Riccati equation is integrated by the symplectic implicit midpoint rule.

pub mod config;
pub mod decomposition;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod mesh_fem;
pub mod minimax_filter;
pub mod orchestrator;
pub mod report;
pub mod scenarios;

pub use config::{FieldNorm, InitialEstimate, Mode, RunConfig};
pub use decomposition::{Decomposition, ExchangeMessage, Subdomain};
pub use error::{Error, Result};
pub use flow::FlowField;
pub use linalg::{BandedLu, Csr, RowMat};
pub use mesh_fem::{CouplingForm, Mesh, NodeClass, Side};
pub use minimax_filter::{ObsFrame, ObsWeights, StepSystem, Uncertainty};
pub use orchestrator::{run, run_forward, run_global, run_localized, RunOutput};
pub use report::{MetricsRow, Summary, TimingRow};
pub use scenarios::{Drift, GaussianTruth};

/// Use faer's sequential kernels; parallelism comes from the subdomain worker pool.
pub fn init_linalg() {
    faer::set_global_parallelism(faer::Par::Seq);
}
