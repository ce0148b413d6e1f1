//! Minimax filter on one (sub)domain: Riccati propagation by the symplectic midpoint rule,
//! the feedback estimate, reinitialization and pointwise bounds.
//!
//! Covariances are kept in projection coordinates `x = M u`, where the Riccati equation reads
//! `Ṗ = A P + P Aᵀ + B − P D P` with `A = S M⁻¹`, `B = γ Q^{½} M Q^{½}` and
//! `D = γ⁻¹ M⁻¹ W M⁻¹`, `W = Π R^{½} M R^{½} Π`. The estimate itself is nodal.
//!
//! One step maps `P` through the Möbius transform of the Hamiltonian flow:
//! `[U; V] = 2 (I − h/2 H)⁻¹ [P; I] − [P; I]`, `P⁺ = U V⁻¹`.

use std::sync::Arc;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Accum, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{dense_solve, gemm, BandedLu, Csr, RowMat};

/// Nodal uncertainty description: `q0`, `q` scale the initial and model error covariances,
/// `r` is the observation weight (inverse noise variance); `gamma` is the ellipsoid radius.
#[derive(Clone, Debug, PartialEq)]
pub struct Uncertainty {
    pub q0: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub gamma: f64,
}

impl Uncertainty {
    pub fn scalar(n: usize, q0: f64, q: f64, r: f64, gamma: f64) -> Self {
        Uncertainty {
            q0: vec![q0; n],
            q: vec![q; n],
            r: vec![r; n],
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if !ok(&self.q0)
            || !ok(&self.q)
            || !ok(&self.r)
            || !(self.gamma > 0.0 && self.gamma.is_finite())
        {
            return Err(Error::Config(
                "uncertainty weights must be finite and non-negative, gamma positive".into(),
            ));
        }
        Ok(())
    }

    /// `γ Q₀^{½} M Q₀^{½}`.
    pub fn initial_covariance(&self, mass: &Csr) -> RowMat {
        let sq: Vec<f64> = self.q0.iter().map(|v| v.sqrt()).collect();
        let mut p = mass.sym_scale(&sq).to_rowmat();
        p.scale(self.gamma);
        p
    }

    /// `γ Q^{½} M Q^{½}`.
    pub fn model_noise(&self, mass: &Csr) -> Csr {
        let sq: Vec<f64> = self.q.iter().map(|v| v.sqrt()).collect();
        mass.sym_scale(&sq).scale(self.gamma)
    }
}

/// Observation information `W` restricted to its support: `W = E_O w E_Oᵀ`.
#[derive(Clone, Debug)]
pub struct ObsWeights {
    pub nodes: Vec<usize>,
    pub w: Mat<f64>,
}

impl ObsWeights {
    pub fn empty() -> Self {
        ObsWeights {
            nodes: vec![],
            w: Mat::zeros(0, 0),
        }
    }

    /// `R^{½} M R^{½}` on the observed nodes; `r` is indexed by local node.
    pub fn new(mass: &Csr, nodes: &[usize], r: &[f64]) -> Self {
        let m = mass.principal(nodes);
        let w = Mat::from_fn(nodes.len(), nodes.len(), |a, b| {
            r[nodes[a]].sqrt() * m[(a, b)] * r[nodes[b]].sqrt()
        });
        ObsWeights {
            nodes: nodes.to_vec(),
            w,
        }
    }

    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn to_csr(&self, n: usize) -> Csr {
        let mut t = Vec::new();
        for (a, &i) in self.nodes.iter().enumerate() {
            for (b, &j) in self.nodes.iter().enumerate() {
                t.push((i, j, self.w[(a, b)]));
            }
        }
        Csr::from_triplets(n, n, &t)
    }
}

/// One batch of (pseudo-)observations averaged to the step midpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsFrame {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    pub pseudo: bool,
}

/// Factored matrices of one implicit-midpoint step, `K = M − h/2 S`, `J = M + h/2 S`.
#[derive(Clone, Debug)]
pub struct StepSystem {
    pub n: usize,
    pub h: f64,
    pub mass: Arc<Csr>,
    pub mass_lu: Arc<BandedLu>,
    pub stiffness: Csr,
    pub j: Csr,
    pub k_lu: BandedLu,
    /// `Kᵀ`, only needed by the Riccati step.
    pub kt_lu: Option<BandedLu>,
}

impl StepSystem {
    pub fn new(
        mass: Arc<Csr>,
        mass_lu: Arc<BandedLu>,
        stiffness: Csr,
        h: f64,
        with_riccati: bool,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("time step {h} must be positive")));
        }
        let a = 0.5 * h;
        let k = Csr::lin_comb(1.0, &mass, -a, &stiffness);
        let j = Csr::lin_comb(1.0, &mass, a, &stiffness);
        let k_lu = BandedLu::factor(&k)?;
        let kt_lu = if with_riccati {
            Some(BandedLu::factor(&k.transpose())?)
        } else {
            None
        };
        Ok(StepSystem {
            n: mass.nrows,
            h,
            mass,
            mass_lu,
            stiffness,
            j,
            k_lu,
            kt_lu,
        })
    }
}

/// Riccati step exploiting sparsity of `M`, `S`, `B` and the rank of `W`.
///
/// The midpoint (Cayley) step of the Hamiltonian flow, written so that only `K = M − h/2 S`
/// is ever inverted: with `s = h/2`, `E = K M⁻¹`, `F = J M⁻¹`,
///
/// `P⁺ = E⁻¹(F P + s B) N⁻¹ (Fᵀ − s² D E⁻¹ B) + s E⁻¹ B`,  `N = Eᵀ + s D E⁻¹ (2P + s B)`.
///
/// The textbook form `U V⁻¹` solves with `J` instead, which becomes singular whenever `h/2`
/// times an eigenvalue of `M⁻¹S` reaches `−1` — routine for resolved diffusion. `W` has rank
/// `m` and enters `N` through a Woodbury identity, so only banded solves, `n×m` products and
/// one `m×m` factorization are needed.
pub fn riccati_step(
    sys: &StepSystem,
    b: &Csr,
    obs: &ObsWeights,
    gamma: f64,
    p: &RowMat,
) -> Result<RowMat> {
    let n = sys.n;
    let kt_lu = sys
        .kt_lu
        .as_ref()
        .ok_or_else(|| Error::Numerical("step system was built without Riccati factors".into()))?;
    if p.rows != n || p.cols != n {
        return Err(Error::Dimension(format!(
            "P is {}x{}, expected {n}x{n}",
            p.rows, p.cols
        )));
    }
    let a = 0.5 * sys.h;
    let c = a / gamma;

    // Lf = K⁻¹ (J M⁻¹ P + a B)
    let mut t = p.clone();
    sys.mass_lu.solve_rows(&mut t);
    let mut lf = sys.j.mul_rows(&t);
    add_sparse(&mut lf, b, a);
    sys.k_lu.solve_rows(&mut lf);
    // Φ = Lf K⁻ᵀ, corrected below by the observation term of N⁻¹.
    let mut phi_t = lf.transpose();
    drop(lf);
    sys.k_lu.solve_rows(&mut phi_t);
    let mut phi = phi_t.transpose();
    drop(phi_t);
    let mut kb = b.to_rowmat();
    sys.k_lu.solve_rows(&mut kb);

    let m = obs.m();
    let cw = Mat::from_fn(m, m, |i, j| c * obs.w[(i, j)]);
    if m > 0 {
        // Zk = K⁻ᵀ E_O,  Qoᵀ = (2P + aB) Zk,  Ωᵀ = K⁻¹ Qoᵀ.
        let mut zk = RowMat::zeros(n, m);
        for (s, &o) in obs.nodes.iter().enumerate() {
            zk.set(o, s, 1.0);
        }
        kt_lu.solve_rows(&mut zk);
        let mut sym = p.clone();
        sym.scale(2.0);
        add_sparse(&mut sym, b, a);
        let mut qo_t = RowMat::zeros(n, m);
        gemm(
            qo_t.as_mut(),
            Accum::Replace,
            sym.as_ref(),
            zk.as_ref(),
            1.0,
        );
        drop(sym);
        let mut qz = Mat::<f64>::zeros(m, m);
        gemm(
            qz.as_mut(),
            Accum::Replace,
            qo_t.as_ref().transpose(),
            zk.as_ref(),
            1.0,
        );
        let mut small = Mat::<f64>::identity(m, m);
        gemm(small.as_mut(), Accum::Add, qz.as_ref(), cw.as_ref(), 1.0);
        let mut omega_t = qo_t;
        sys.k_lu.solve_rows(&mut omega_t);
        // Φ −= Φ_{:,O} (cw) S⁻¹ Ω
        let sol = dense_solve(small.as_ref(), &omega_t.transpose())?;
        let mut coef = RowMat::zeros(m, n);
        gemm(
            coef.as_mut(),
            Accum::Replace,
            cw.as_ref(),
            sol.as_ref(),
            1.0,
        );
        let phi_o = select_cols(&phi, &obs.nodes);
        gemm(
            phi.as_mut(),
            Accum::Add,
            phi_o.as_ref(),
            coef.as_ref(),
            -1.0,
        );
    }
    // Φ (Jᵀ − a c E_O w E_Oᵀ K⁻¹ B)
    let mut out = sys.j.mul_rows(&phi.transpose()).transpose();
    if m > 0 {
        let phi_o = select_cols(&phi, &obs.nodes);
        let mut wbo = RowMat::zeros(m, n);
        gemm(
            wbo.as_mut(),
            Accum::Replace,
            cw.as_ref(),
            kb.select_rows(&obs.nodes).as_ref(),
            1.0,
        );
        gemm(out.as_mut(), Accum::Add, phi_o.as_ref(), wbo.as_ref(), -a);
    }
    drop(phi);
    for (o, v) in out.data.iter_mut().zip(&kb.data) {
        *o += a * v;
    }
    let mut p1 = sys.mass.mul_rows(&out);
    p1.symmetrize();
    if !p1.is_finite() {
        return Err(Error::Numerical(
            "Riccati step produced non-finite entries".into(),
        ));
    }
    Ok(p1)
}

fn add_sparse(x: &mut RowMat, b: &Csr, alpha: f64) {
    for i in 0..b.nrows {
        for (j, v) in b.row(i) {
            x.data[i * x.cols + j] += alpha * v;
        }
    }
}

fn select_cols(x: &RowMat, idx: &[usize]) -> RowMat {
    RowMat::from_fn(x.rows, idx.len(), |i, j| x.get(i, idx[j]))
}

/// Dense reference for [`riccati_step`]: forms `A`, `B`, `D` explicitly and solves the
/// `2n × 2n` Hamiltonian system with one LU factorization.
pub fn riccati_step_dense(
    mass: &Csr,
    stiffness: &Csr,
    b: &Csr,
    obs: &ObsWeights,
    gamma: f64,
    h: f64,
    p: &RowMat,
) -> Result<RowMat> {
    let n = mass.nrows;
    let minv = mass.to_dense().partial_piv_lu().inverse();
    let a_mat = stiffness.to_dense() * &minv;
    let d = (&minv * obs.to_csr(n).to_dense() * &minv) * (1.0 / gamma);
    let p1 = midpoint_dre_step(
        a_mat.as_ref(),
        b.to_dense().as_ref(),
        d.as_ref(),
        p.to_mat().as_ref(),
        h,
    )?;
    Ok(RowMat::from_mat(p1.as_ref()))
}

/// One symplectic-midpoint (Möbius) step of `Ṗ = A P + P Aᵀ + B − P D P`, dense.
///
/// Equals `U V⁻¹` with `[U; V] = (I − sH)⁻¹(I + sH)[P; I]`, `H = [A B; D −Aᵀ]`, `s = h/2`,
/// evaluated without inverting `I + sAᵀ` (see [`riccati_step`]).
pub fn midpoint_dre_step(
    a: MatRef<'_, f64>,
    b: MatRef<'_, f64>,
    d: MatRef<'_, f64>,
    p: MatRef<'_, f64>,
    h: f64,
) -> Result<Mat<f64>> {
    let n = a.nrows();
    let s = 0.5 * h;
    let eye = Mat::<f64>::identity(n, n);
    let e = &eye - a * s;
    let f = &eye + a * s;
    let e_lu = e.partial_piv_lu();
    let left = e_lu.solve(&f * p + b * s);
    let eb = e_lu.solve(b);
    let q = e_lu.solve(p * 2.0 + b * s);
    let big_n = e.transpose() + d * &q * s;
    let right = f.transpose() - d * &eb * (s * s);
    let y = big_n.partial_piv_lu().solve(&right);
    let p1 = left * y + eb * s;
    let out = Mat::from_fn(n, n, |i, j| 0.5 * (p1[(i, j)] + p1[(j, i)]));
    if !out.as_ref().is_all_finite() {
        return Err(Error::Numerical("midpoint Riccati step is singular".into()));
    }
    Ok(out)
}

/// Feedback estimate by the implicit midpoint rule:
/// `M(u⁺ − u)/h = S ū + f + Ḡ(y − ū)`, `Ḡ = γ⁻¹ P̄ M⁻¹ W`, `P̄ = (P + P⁺)/2`, `ū = (u + u⁺)/2`.
///
/// `f_mid` is the source at the step midpoint in projection coordinates.
#[allow(clippy::too_many_arguments)]
pub fn filter_step(
    sys: &StepSystem,
    gamma: f64,
    p0: &RowMat,
    p1: &RowMat,
    u0: &[f64],
    f_mid: &[f64],
    frames: &[ObsFrame],
    r: &[f64],
) -> Result<Vec<f64>> {
    let n = sys.n;
    let a = 0.5 * sys.h;
    let mut rhs = sys.j.mul_vec(u0);
    for (v, f) in rhs.iter_mut().zip(f_mid) {
        *v += sys.h * f;
    }

    let mut union: Vec<usize> = frames
        .iter()
        .flat_map(|f| f.nodes.iter().copied())
        .collect();
    union.sort_unstable();
    union.dedup();
    if union.is_empty() {
        sys.k_lu.solve_vec(&mut rhs);
        return Ok(rhs);
    }
    let m = union.len();
    let pos = |k: usize| union.binary_search(&k).unwrap();
    // W on the union of supports, and W y.
    let mut w = Mat::<f64>::zeros(m, m);
    let mut wy = vec![0.0; m];
    for fr in frames {
        let ow = ObsWeights::new(&sys.mass, &fr.nodes, r);
        for (i, &ki) in fr.nodes.iter().enumerate() {
            for (j, &kj) in fr.nodes.iter().enumerate() {
                w[(pos(ki), pos(kj))] += ow.w[(i, j)];
                wy[pos(ki)] += ow.w[(i, j)] * fr.values[j];
            }
        }
    }
    let mut z = RowMat::zeros(n, m);
    for (s, &k) in union.iter().enumerate() {
        z.set(k, s, 1.0);
    }
    sys.mass_lu.solve_rows(&mut z);
    let mut pbar = p0.clone();
    for (pv, qv) in pbar.data.iter_mut().zip(&p1.data) {
        *pv = 0.5 * (*pv + qv);
    }
    // Pz = γ⁻¹ P̄ M⁻¹ E_O, so that Ḡ = Pz w E_Oᵀ.
    let mut pz = RowMat::zeros(n, m);
    gemm(
        pz.as_mut(),
        Accum::Replace,
        pbar.as_ref(),
        z.as_ref(),
        1.0 / gamma,
    );
    let u0o: Vec<f64> = union.iter().map(|&k| u0[k]).collect();
    let wu: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|j| w[(i, j)] * u0o[j]).sum())
        .collect();
    let coef: Vec<f64> = (0..m).map(|i| sys.h * wy[i] - a * wu[i]).collect();
    for (i, v) in rhs.iter_mut().enumerate() {
        *v += crate::linalg::dot(pz.row(i), &coef);
    }
    // (K + a Pz w E_Oᵀ) u⁺ = rhs by Woodbury.
    let mut hm = RowMat::zeros(n, m);
    gemm(hm.as_mut(), Accum::Replace, pz.as_ref(), w.as_ref(), a);
    sys.k_lu.solve_rows(&mut hm);
    sys.k_lu.solve_vec(&mut rhs);
    let small = Mat::from_fn(
        m,
        m,
        |i, j| if i == j { 1.0 } else { 0.0 } + hm.get(union[i], j),
    );
    let vo = RowMat {
        rows: m,
        cols: 1,
        data: union.iter().map(|&k| rhs[k]).collect(),
    };
    let t = dense_solve(small.as_ref(), &vo)?;
    for (i, v) in rhs.iter_mut().enumerate() {
        *v -= crate::linalg::dot(hm.row(i), &t.data);
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "filter step produced non-finite estimate".into(),
        ));
    }
    Ok(rhs)
}

/// Open-loop implicit midpoint step `K u⁺ = J u + h f`.
pub fn forward_step(sys: &StepSystem, u0: &[f64], f_mid: &[f64]) -> Vec<f64> {
    let mut rhs = sys.j.mul_vec(u0);
    for (v, f) in rhs.iter_mut().zip(f_mid) {
        *v += sys.h * f;
    }
    sys.k_lu.solve_vec(&mut rhs);
    rhs
}

/// Restart of the next window: `P ← (1 + ε) P`.
pub fn reinitialize(p: &mut RowMat, window: f64) {
    p.scale(1.0 + window);
}

/// `M⁻¹ e_s`, reused for every bound evaluation at node `s`.
pub fn bound_probe_vector(mass_lu: &BandedLu, s: usize) -> Vec<f64> {
    let mut z = vec![0.0; mass_lu.n()];
    z[s] = 1.0;
    mass_lu.solve_vec(&mut z);
    z
}

/// `(P M⁻¹)_{ss}` given `z = M⁻¹ e_s`.
pub fn riccati_diagonal_at(p: &RowMat, s: usize, z: &[f64]) -> f64 {
    crate::linalg::dot(p.row(s), z)
}

/// Pointwise worst-case error bound `√(P M⁻¹)_{ss}`; negative round-off is clamped to zero.
pub fn pointwise_bound(p: &RowMat, s: usize, z: &[f64]) -> f64 {
    riccati_diagonal_at(p, s, z).max(0.0).sqrt()
}

/// `diag(P M⁻¹)` for every node.
pub fn riccati_diagonal(p: &RowMat, mass_lu: &BandedLu) -> Vec<f64> {
    let mut minv = RowMat::identity(p.rows);
    mass_lu.solve_rows(&mut minv);
    (0..p.rows)
        .map(|s| crate::linalg::dot(p.row(s), minv.row(s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowField;
    use crate::mesh_fem::{
        assemble_blocks, assemble_mass, classify_nodes, side_roles, CouplingForm, Mesh,
    };

    fn system(nx: usize, h: f64, mu: [f64; 2], iface: [bool; 4]) -> (StepSystem, Mesh) {
        let mesh = Mesh::new([0.0, 0.0], [1.0, 1.0], nx, nx);
        let flow = FlowField::Constant { velocity: mu };
        let roles = side_roles(&flow, 0.0, iface);
        let classes = classify_nodes(&mesh, &roles);
        let s = assemble_blocks(&mesh, &roles, &classes, 1e-3, mu, CouplingForm::Normal).total();
        let mass = assemble_mass(&mesh);
        let lu = BandedLu::factor(&mass).unwrap();
        (
            StepSystem::new(Arc::new(mass), Arc::new(lu), s, h, true).unwrap(),
            mesh,
        )
    }

    fn rel_diff(a: &RowMat, b: &RowMat) -> f64 {
        let d = a
            .data
            .iter()
            .zip(&b.data)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        d / b.max_abs()
    }

    #[test]
    fn structured_step_matches_dense_reference() {
        let (sys, mesh) = system(6, 0.1, [0.2, -0.1], [true, false, false, true]);
        let n = mesh.n_nodes();
        let unc = Uncertainty::scalar(n, 1.4, 5.0, 12.0, 1.1);
        let b = unc.model_noise(&sys.mass);
        let nodes: Vec<usize> = (0..n).filter(|k| k % 3 != 1).collect();
        let obs = ObsWeights::new(&sys.mass, &nodes, &unc.r);
        let mut p = unc.initial_covariance(&sys.mass);
        let mut q = p.clone();
        for _ in 0..5 {
            p = riccati_step(&sys, &b, &obs, unc.gamma, &p).unwrap();
            q = riccati_step_dense(&sys.mass, &sys.stiffness, &b, &obs, unc.gamma, 0.1, &q)
                .unwrap();
        }
        assert!(rel_diff(&p, &q) < 1e-10, "{}", rel_diff(&p, &q));

        let none = ObsWeights::empty();
        let p2 = riccati_step(&sys, &b, &none, unc.gamma, &p).unwrap();
        let q2 =
            riccati_step_dense(&sys.mass, &sys.stiffness, &b, &none, unc.gamma, 0.1, &p).unwrap();
        assert!(rel_diff(&p2, &q2) < 1e-10);
    }

    #[test]
    fn initial_bound_is_sqrt_gamma_q0() {
        let (sys, mesh) = system(4, 0.1, [0.1, 0.0], [false; 4]);
        let unc = Uncertainty::scalar(mesh.n_nodes(), 1.4, 5.0, 12.0, 1.1);
        let p = unc.initial_covariance(&sys.mass);
        let z = bound_probe_vector(&sys.mass_lu, 7);
        assert!((pointwise_bound(&p, 7, &z) - (1.1f64 * 1.4).sqrt()).abs() < 1e-12);
        let diag = riccati_diagonal(&p, &sys.mass_lu);
        assert!(diag.iter().all(|d| (d - 1.54).abs() < 1e-12));
    }

    #[test]
    fn filter_without_observations_is_forward_model() {
        let (sys, mesh) = system(5, 0.1, [0.3, 0.1], [false; 4]);
        let n = mesh.n_nodes();
        let unc = Uncertainty::scalar(n, 1.0, 1.0, 1.0, 1.0);
        let p = unc.initial_covariance(&sys.mass);
        let u0 = mesh.interpolate(|x| (-(x[0] - 0.4).powi(2) * 20.0).exp());
        let f = vec![0.01; n];
        let a = filter_step(&sys, 1.0, &p, &p, &u0, &f, &[], &unc.r).unwrap();
        let b = forward_step(&sys, &u0, &f);
        assert_eq!(a, b);
    }

    #[test]
    fn filter_step_matches_dense_solve() {
        let (sys, mesh) = system(5, 0.1, [0.3, 0.1], [true; 4]);
        let n = mesh.n_nodes();
        let unc = Uncertainty::scalar(n, 1.4, 5.0, 12.0, 1.1);
        let p0 = unc.initial_covariance(&sys.mass);
        let b = unc.model_noise(&sys.mass);
        let frames = vec![
            ObsFrame {
                nodes: vec![0, 1, 2, 9],
                values: vec![1.0, 2.0, 0.5, -1.0],
                pseudo: false,
            },
            ObsFrame {
                nodes: vec![30, 31],
                values: vec![0.3, 0.2],
                pseudo: true,
            },
        ];
        let obs = ObsWeights::new(&sys.mass, &frames[0].nodes, &unc.r);
        let p1 = riccati_step(&sys, &b, &obs, unc.gamma, &p0).unwrap();
        let u0: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
        let f: Vec<f64> = (0..n).map(|k| 0.01 * (k % 5) as f64).collect();
        let got = filter_step(&sys, unc.gamma, &p0, &p1, &u0, &f, &frames, &unc.r).unwrap();

        // Dense: (M − aS + aḠ) u⁺ = (M + aS − aḠ) u + h f + h Ḡ y.
        let a = 0.05;
        let minv = sys.mass.to_dense().partial_piv_lu().inverse();
        let mut wt = vec![];
        let mut y = vec![0.0; n];
        for fr in &frames {
            let ow = ObsWeights::new(&sys.mass, &fr.nodes, &unc.r);
            wt.extend(ow.to_csr(n).triplets());
            for (&k, &v) in fr.nodes.iter().zip(&fr.values) {
                y[k] = v;
            }
        }
        let w = Csr::from_triplets(n, n, &wt).to_dense();
        let pbar = Mat::from_fn(n, n, |i, j| 0.5 * (p0.get(i, j) + p1.get(i, j)));
        let g = (&pbar * &minv * &w) * (1.0 / unc.gamma);
        let m = sys.mass.to_dense();
        let s = sys.stiffness.to_dense();
        let lhs = &m - &s * a + &g * a;
        let rmat = &m + &s * a - &g * a;
        let u0m = Mat::from_fn(n, 1, |i, _| u0[i]);
        let ym = Mat::from_fn(n, 1, |i, _| y[i]);
        let fm = Mat::from_fn(n, 1, |i, _| f[i]);
        let rhs = &rmat * &u0m + &fm * 0.1 + &g * &ym * 0.1;
        let want = lhs.partial_piv_lu().solve(&rhs);
        let err = (0..n).fold(0.0f64, |e, i| e.max((got[i] - want[(i, 0)]).abs()));
        assert!(err < 1e-10, "{err}");
    }
}
