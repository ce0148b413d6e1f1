//! Structured bilinear-quad meshes and the d-ADN finite element blocks of one subdomain.
//!
//! Sign convention: the semi-discrete model is `M u̇ = S u + f`, matrix rows index the test
//! function and columns the trial function.

use serde::{Deserialize, Serialize};

use crate::flow::FlowField;
use crate::linalg::Csr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// How the inflow coupling weight is formed on an edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    /// `μ·n`, the upwind flux of the weak form.
    #[default]
    Normal,
    /// `μ₁ + μ₂`, as the boundary integrals are literally printed in the source paper.
    ComponentSum,
}

/// Uniform rectangular grid of `nx × ny` bilinear elements; node `(i, j)` has index `j·(nx+1)+i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub origin: [f64; 2],
    pub size: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub h: [f64; 2],
}

impl Mesh {
    pub fn new(origin: [f64; 2], size: [f64; 2], nx: usize, ny: usize) -> Self {
        assert!(nx > 0 && ny > 0 && size[0] > 0.0 && size[1] > 0.0);
        Mesh {
            origin,
            size,
            nx,
            ny,
            h: [size[0] / nx as f64, size[1] / ny as f64],
        }
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k % (self.nx + 1), k / (self.nx + 1));
        [
            self.origin[0] + i as f64 * self.h[0],
            self.origin[1] + j as f64 * self.h[1],
        ]
    }

    /// Counter-clockwise element nodes starting at the lower-left corner.
    pub fn element_nodes(&self, ex: usize, ey: usize) -> [usize; 4] {
        [
            self.node(ex, ey),
            self.node(ex + 1, ey),
            self.node(ex + 1, ey + 1),
            self.node(ex, ey + 1),
        ]
    }

    /// Nodes on a side, ordered by increasing coordinate along the side.
    pub fn side_nodes(&self, side: Side) -> Vec<usize> {
        match side {
            Side::Left => (0..=self.ny).map(|j| self.node(0, j)).collect(),
            Side::Right => (0..=self.ny).map(|j| self.node(self.nx, j)).collect(),
            Side::Bottom => (0..=self.nx).map(|i| self.node(i, 0)).collect(),
            Side::Top => (0..=self.nx).map(|i| self.node(i, self.ny)).collect(),
        }
    }

    /// Elements touching a side, with the position of the side along it.
    fn side_elements(&self, side: Side) -> Vec<(usize, usize)> {
        match side {
            Side::Left => (0..self.ny).map(|e| (0, e)).collect(),
            Side::Right => (0..self.ny).map(|e| (self.nx - 1, e)).collect(),
            Side::Bottom => (0..self.nx).map(|e| (e, 0)).collect(),
            Side::Top => (0..self.nx).map(|e| (e, self.ny - 1)).collect(),
        }
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        (0..2).all(|d| p[d] >= self.origin[d] - tol && p[d] <= self.origin[d] + self.size[d] + tol)
    }

    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let i = ((p[0] - self.origin[0]) / self.h[0])
            .round()
            .clamp(0.0, self.nx as f64) as usize;
        let j = ((p[1] - self.origin[1]) / self.h[1])
            .round()
            .clamp(0.0, self.ny as f64) as usize;
        self.node(i, j)
    }

    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| f(self.coords(k))).collect()
    }
}

const GAUSS: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

#[inline]
fn basis(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

/// Physical gradients of the four element basis functions.
#[inline]
fn basis_grad(xi: f64, eta: f64, h: [f64; 2]) -> [[f64; 2]; 4] {
    let dxi = [-(1.0 - eta), 1.0 - eta, eta, -eta];
    let deta = [-(1.0 - xi), -xi, xi, 1.0 - xi];
    std::array::from_fn(|a| [dxi[a] / h[0], deta[a] / h[1]])
}

/// Reference coordinates of side parameter `s ∈ [0,1]`, plus local node ids on that side.
fn side_param(side: Side, s: f64) -> ((f64, f64), [usize; 2]) {
    match side {
        Side::Left => ((0.0, s), [0, 3]),
        Side::Right => ((1.0, s), [1, 2]),
        Side::Bottom => ((s, 0.0), [0, 1]),
        Side::Top => ((s, 1.0), [3, 2]),
    }
}

fn side_length(mesh: &Mesh, side: Side) -> f64 {
    match side {
        Side::Left | Side::Right => mesh.h[1],
        Side::Bottom | Side::Top => mesh.h[0],
    }
}

/// Role of one subdomain side at a given time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideRole {
    pub side: Side,
    /// Shared with another subdomain (otherwise part of the external boundary).
    pub interface: bool,
    /// `μ·n < 0`; a zero normal flux counts as outflow.
    pub inflow: bool,
}

pub fn side_roles(flow: &FlowField, t: f64, interface: [bool; 4]) -> [SideRole; 4] {
    let mu = flow.velocity(t);
    Side::ALL.map(|side| {
        let n = side.normal();
        SideRole {
            side,
            interface: interface[side.index()],
            inflow: mu[0] * n[0] + mu[1] * n[1] < 0.0,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Interior,
    /// Off the interface but in an element touching an inflow interface.
    NeumannIn,
    DirichletIn,
    DirichletOut,
}

/// Classifies nodes against the interface roles; inflow wins at corners shared by two sides.
pub fn classify_nodes(mesh: &Mesh, roles: &[SideRole; 4]) -> Vec<NodeClass> {
    let mut class = vec![NodeClass::Interior; mesh.n_nodes()];
    for r in roles.iter().filter(|r| r.interface && !r.inflow) {
        for k in mesh.side_nodes(r.side) {
            class[k] = NodeClass::DirichletOut;
        }
    }
    for r in roles.iter().filter(|r| r.interface && r.inflow) {
        for k in mesh.side_nodes(r.side) {
            class[k] = NodeClass::DirichletIn;
        }
    }
    for r in roles.iter().filter(|r| r.interface && r.inflow) {
        for (ex, ey) in mesh.side_elements(r.side) {
            for k in mesh.element_nodes(ex, ey) {
                if class[k] == NodeClass::Interior {
                    class[k] = NodeClass::NeumannIn;
                }
            }
        }
    }
    class
}

/// Consistent mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> Csr {
    let mut t = Vec::with_capacity(16 * mesh.nx * mesh.ny);
    let jac = mesh.h[0] * mesh.h[1];
    for ey in 0..mesh.ny {
        for ex in 0..mesh.nx {
            let nodes = mesh.element_nodes(ex, ey);
            let mut loc = [[0.0; 4]; 4];
            for &(gx, wx) in &GAUSS {
                for &(gy, wy) in &GAUSS {
                    let phi = basis(gx, gy);
                    for a in 0..4 {
                        for b in 0..4 {
                            loc[a][b] += wx * wy * jac * phi[a] * phi[b];
                        }
                    }
                }
            }
            for a in 0..4 {
                for b in 0..4 {
                    t.push((nodes[a], nodes[b], loc[a][b]));
                }
            }
        }
    }
    Csr::from_triplets(mesh.n_nodes(), mesh.n_nodes(), &t)
}

/// `−ε∇φ_trial·∇φ_test + φ_trial μ·∇φ_test` summed over elements.
pub fn assemble_volume(mesh: &Mesh, eps: f64, mu: [f64; 2]) -> Csr {
    let mut t = Vec::with_capacity(16 * mesh.nx * mesh.ny);
    let jac = mesh.h[0] * mesh.h[1];
    for ey in 0..mesh.ny {
        for ex in 0..mesh.nx {
            let nodes = mesh.element_nodes(ex, ey);
            let mut loc = [[0.0; 4]; 4];
            for &(gx, wx) in &GAUSS {
                for &(gy, wy) in &GAUSS {
                    let phi = basis(gx, gy);
                    let g = basis_grad(gx, gy, mesh.h);
                    let w = wx * wy * jac;
                    for k in 0..4 {
                        let adv = mu[0] * g[k][0] + mu[1] * g[k][1];
                        for s in 0..4 {
                            let diff = g[s][0] * g[k][0] + g[s][1] * g[k][1];
                            loc[k][s] += w * (-eps * diff + phi[s] * adv);
                        }
                    }
                }
            }
            for k in 0..4 {
                for s in 0..4 {
                    t.push((nodes[k], nodes[s], loc[k][s]));
                }
            }
        }
    }
    Csr::from_triplets(mesh.n_nodes(), mesh.n_nodes(), &t)
}

fn flux_weight(mu: [f64; 2], n: [f64; 2], form: CouplingForm) -> f64 {
    match form {
        CouplingForm::Normal => mu[0] * n[0] + mu[1] * n[1],
        CouplingForm::ComponentSum => mu[0] + mu[1],
    }
}

/// Triplets of `∫_side w φ_trial φ_test` (edge-mass) on one side.
fn side_mass_triplets(mesh: &Mesh, side: Side, w: f64, out: &mut Vec<(usize, usize, f64)>) {
    let len = side_length(mesh, side);
    for (ex, ey) in mesh.side_elements(side) {
        let nodes = mesh.element_nodes(ex, ey);
        for &(s, ws) in &GAUSS {
            let ((xi, eta), loc) = side_param(side, s);
            let phi = basis(xi, eta);
            for &k in &loc {
                for &m in &loc {
                    out.push((nodes[k], nodes[m], w * ws * len * phi[k] * phi[m]));
                }
            }
        }
    }
}

/// Triplets of `∫_side ε ∂φ_trial/∂n φ_test`.
fn side_normal_derivative_triplets(
    mesh: &Mesh,
    side: Side,
    eps: f64,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let len = side_length(mesh, side);
    let n = side.normal();
    for (ex, ey) in mesh.side_elements(side) {
        let nodes = mesh.element_nodes(ex, ey);
        for &(s, ws) in &GAUSS {
            let ((xi, eta), loc) = side_param(side, s);
            let phi = basis(xi, eta);
            let g = basis_grad(xi, eta, mesh.h);
            for &k in &loc {
                for m in 0..4 {
                    let dn = g[m][0] * n[0] + g[m][1] * n[1];
                    out.push((nodes[k], nodes[m], eps * ws * len * dn * phi[k]));
                }
            }
        }
    }
}

/// The stiffness pieces of one subdomain at one time.
#[derive(Clone, Debug)]
pub struct FemBlocks {
    /// Volume terms, external-boundary normal-derivative term and external outflow term.
    pub omega: Csr,
    /// Normal-derivative term on inflow interfaces, restricted to `D_in ∪ N_in`.
    pub nin: Csr,
    /// `−∫(μ·n) φ φ` on whole outflow interfaces, corners included.
    ///
    /// A corner shared with an inflow interface is classified `D_in`, but dropping its rows
    /// here would leave the `½∫(μ·n)u²` part of the volume term uncompensated there, which
    /// makes four-subdomain corners a source of energy under oblique flow.
    pub dout: Csr,
}

impl FemBlocks {
    pub fn total(&self) -> Csr {
        let s = Csr::lin_comb(1.0, &self.omega, 1.0, &self.nin);
        Csr::lin_comb(1.0, &s, 1.0, &self.dout)
    }
}

pub fn assemble_blocks(
    mesh: &Mesh,
    roles: &[SideRole; 4],
    classes: &[NodeClass],
    eps: f64,
    mu: [f64; 2],
    form: CouplingForm,
) -> FemBlocks {
    let n = mesh.n_nodes();
    let mut omega = assemble_volume(mesh, eps, mu).triplets();
    let mut nin = Vec::new();
    let mut dout = Vec::new();
    for r in roles {
        let w = flux_weight(mu, r.side.normal(), form);
        if !r.interface {
            side_normal_derivative_triplets(mesh, r.side, eps, &mut omega);
            if !r.inflow {
                // The homogeneous Dirichlet data contributes nothing on inflow parts; on
                // outflow parts the trace of the solution itself is used, as on interfaces.
                side_mass_triplets(mesh, r.side, -w, &mut omega);
            }
        } else if r.inflow {
            side_normal_derivative_triplets(mesh, r.side, eps, &mut nin);
        } else {
            side_mass_triplets(mesh, r.side, -w, &mut dout);
        }
    }
    let in_set = |k: usize| matches!(classes[k], NodeClass::DirichletIn | NodeClass::NeumannIn);
    nin.retain(|&(i, j, _)| in_set(i) && in_set(j));
    FemBlocks {
        omega: Csr::from_triplets(n, n, &omega),
        nin: Csr::from_triplets(n, n, &nin),
        dout: Csr::from_triplets(n, n, &dout),
    }
}

/// Adds the inflow coupling `−∫(μ·n) u_j φ_test` of one inflow interface side to `out`.
///
/// `data` holds the neighbour's values at this side's nodes, in [`Mesh::side_nodes`] order.
pub fn add_coupling_source(
    mesh: &Mesh,
    side: Side,
    classes: &[NodeClass],
    data: &[f64],
    mu: [f64; 2],
    form: CouplingForm,
    out: &mut [f64],
) {
    let nodes = mesh.side_nodes(side);
    assert_eq!(data.len(), nodes.len());
    let mut g = vec![0.0; mesh.n_nodes()];
    for (&k, &v) in nodes.iter().zip(data) {
        if classes[k] == NodeClass::DirichletIn {
            g[k] = v;
        }
    }
    let mut t = Vec::new();
    side_mass_triplets(mesh, side, -flux_weight(mu, side.normal(), form), &mut t);
    for (i, j, v) in t {
        if classes[i] == NodeClass::DirichletIn {
            out[i] += v * g[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_mass_matches_closed_form() {
        // Single unit element: (1/36)[[4,2,1,2],[2,4,2,1],[1,2,4,2],[2,1,2,4]].
        let mesh = Mesh::new([0.0, 0.0], [1.0, 1.0], 1, 1);
        let m = assemble_mass(&mesh);
        let nodes = mesh.element_nodes(0, 0);
        let want = [
            [4.0, 2.0, 1.0, 2.0],
            [2.0, 4.0, 2.0, 1.0],
            [1.0, 2.0, 4.0, 2.0],
            [2.0, 1.0, 2.0, 4.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert!((m.get(nodes[a], nodes[b]) - want[a][b] / 36.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_integrates_area() {
        let mesh = Mesh::new([1.0, 2.0], [3.0, 0.5], 7, 5);
        let m = assemble_mass(&mesh);
        let total: f64 = m.data.iter().sum();
        assert!((total - 1.5).abs() < 1e-13);
    }

    #[test]
    fn pure_advection_volume_term_is_skew_up_to_boundary() {
        // (u, μ·∇v) + (v, μ·∇u) = ∫_∂ (μ·n) u v, so S + Sᵀ is an edge-mass on the boundary.
        let mesh = Mesh::new([0.0, 0.0], [1.0, 1.0], 4, 3);
        let mu = [0.3, -0.2];
        let s = assemble_volume(&mesh, 0.0, mu);
        let sym = Csr::lin_comb(1.0, &s, 1.0, &s.transpose());
        let mut t = Vec::new();
        for side in Side::ALL {
            let n = side.normal();
            side_mass_triplets(&mesh, side, mu[0] * n[0] + mu[1] * n[1], &mut t);
        }
        let b = Csr::from_triplets(mesh.n_nodes(), mesh.n_nodes(), &t);
        let diff = Csr::lin_comb(1.0, &sym, -1.0, &b);
        assert!(diff.data.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn corners_prefer_inflow() {
        let mesh = Mesh::new([0.0, 0.0], [1.0, 1.0], 3, 3);
        let roles = side_roles(
            &FlowField::Constant {
                velocity: [1.0, 1.0],
            },
            0.0,
            [true, true, true, true],
        );
        let c = classify_nodes(&mesh, &roles);
        // Bottom-right corner is on inflow Bottom and outflow Right.
        assert_eq!(c[mesh.node(3, 0)], NodeClass::DirichletIn);
        assert_eq!(c[mesh.node(3, 3)], NodeClass::DirichletOut);
        assert_eq!(c[mesh.node(1, 1)], NodeClass::NeumannIn);
        assert_eq!(c[mesh.node(2, 2)], NodeClass::Interior);
    }

    #[test]
    fn zero_normal_flux_is_outflow() {
        let roles = side_roles(
            &FlowField::Constant {
                velocity: [0.2, 0.0],
            },
            0.0,
            [true; 4],
        );
        assert!(roles[Side::Left.index()].inflow);
        assert!(!roles[Side::Right.index()].inflow);
        assert!(!roles[Side::Top.index()].inflow && !roles[Side::Bottom.index()].inflow);
    }
}
