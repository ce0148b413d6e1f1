//! Fixtures shared by the criterion benchmarks.

use std::sync::Arc;

use locfilter::mesh_fem::{assemble_blocks, assemble_mass, classify_nodes, side_roles};
use locfilter::{
    BandedLu, CouplingForm, Csr, FlowField, Mesh, ObsWeights, RowMat, StepSystem, Uncertainty,
};

/// One unit-square subdomain with `k × k` elements, all sides interfaces, fully observed
/// when `observed` is set, with the Exp. 2 uncertainty weights.
pub struct RiccatiFixture {
    pub sys: StepSystem,
    pub b: Csr,
    pub obs: ObsWeights,
    pub gamma: f64,
    pub p: RowMat,
}

impl RiccatiFixture {
    pub fn new(k: usize, size: f64, observed_fraction: f64) -> Self {
        locfilter::init_linalg();
        let mesh = Mesh::new([0.0, 0.0], [size, size], k, k);
        let flow = FlowField::Constant {
            velocity: [0.1, 0.2],
        };
        let roles = side_roles(&flow, 0.0, [true; 4]);
        let classes = classify_nodes(&mesh, &roles);
        let s = assemble_blocks(
            &mesh,
            &roles,
            &classes,
            1e-5,
            [0.1, 0.2],
            CouplingForm::Normal,
        )
        .total();
        let mass = assemble_mass(&mesh);
        let lu = BandedLu::factor(&mass).unwrap();
        let sys = StepSystem::new(Arc::new(mass), Arc::new(lu), s, 0.1, true).unwrap();
        let n = mesh.n_nodes();
        let unc = Uncertainty::scalar(n, 1.4, 5.0, 12.0, 1.1);
        let m = (observed_fraction * n as f64).round() as usize;
        let obs = ObsWeights::new(&sys.mass, &(0..m).collect::<Vec<_>>(), &unc.r);
        let b = unc.model_noise(&sys.mass);
        let p = unc.initial_covariance(&sys.mass);
        RiccatiFixture {
            sys,
            b,
            obs,
            gamma: unc.gamma,
            p,
        }
    }
}
