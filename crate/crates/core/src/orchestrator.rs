//! Time stepping, Schwarz coupling of the subdomain filters and metric collection.
//!
//! Within a step, subdomains are processed in upstream-first levels (see
//! [`Decomposition::flow_levels`]); each subdomain reads the newest data of its inflow
//! neighbours, so for a uniform flow one sweep reaches the fixed point and the interface
//! check confirms it. Members of one level run concurrently on the worker pool. Nothing
//! depends on the worker count, which keeps results bit-identical across pool sizes.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{FieldNorm, InitialEstimate, Mode, RunConfig};
use crate::decomposition::{interface_error, Decomposition, ExchangeMessage};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, BandedLu, Csr, RowMat};
use crate::mesh_fem::{
    add_coupling_source, assemble_blocks, assemble_mass, classify_nodes, NodeClass, SideRole,
};
use crate::minimax_filter::{
    bound_probe_vector, filter_step, forward_step, pointwise_bound, reinitialize, riccati_step,
    ObsFrame, ObsWeights, StepSystem, Uncertainty,
};
use crate::report::{summarize, MetricsRow, Summary, TimingRow};
use crate::scenarios::sensor_noise;

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub timings: Vec<TimingRow>,
    pub summary: Summary,
    pub decomposition: Decomposition,
    /// Final per-subdomain estimates.
    pub final_fields: Vec<Vec<f64>>,
    /// Final stitched estimate on the global mesh.
    pub final_estimate: Vec<f64>,
    /// `(step, stitched estimate)` every `output.snapshot_every` steps, including step 0.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

struct SubCtx {
    mass: Arc<Csr>,
    mass_lu: Arc<BandedLu>,
    unc: Uncertainty,
    b: Csr,
    obs_nodes: Vec<usize>,
    weights: ObsWeights,
    sensorless: bool,
}

struct Assembled {
    roles: [SideRole; 4],
    classes: Vec<NodeClass>,
    sys: StepSystem,
}

pub fn run_localized(cfg: &RunConfig) -> Result<RunOutput> {
    let mut c = cfg.clone();
    c.run.mode = Mode::Localized;
    run(&c)
}

pub fn run_global(cfg: &RunConfig) -> Result<RunOutput> {
    let mut c = cfg.clone();
    c.run.mode = Mode::Global;
    run(&c)
}

/// Open-loop model integration from the analytic initial state, on `cfg`'s decomposition.
pub fn run_forward(cfg: &RunConfig) -> Result<RunOutput> {
    let mut c = cfg.clone();
    c.run.mode = Mode::Forward;
    run(&c)
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.decomposition.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| Engine::new(cfg)?.run())
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    mode: Mode,
    decomp: Decomposition,
    subs: Vec<SubCtx>,
    probe: (usize, usize, usize),
    /// Global mass matrix when errors are measured in the L² norm.
    norm_mass: Option<Csr>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        let mode = cfg.run.mode;
        let g = &cfg.geometry;
        let logical = Decomposition::new(
            g.origin,
            g.size,
            cfg.decomposition.subdomains,
            g.elements_per_subdomain,
        )?;
        let decomp = if mode == Mode::Global {
            let [sx, sy] = cfg.decomposition.subdomains;
            let [ex, ey] = g.elements_per_subdomain;
            Decomposition::new(g.origin, g.size, [1, 1], [sx * ex, sy * ey])?
        } else {
            logical.clone()
        };
        let mut sensor = vec![false; logical.global.n_nodes()];
        for &id in &cfg.uncertainty.observed {
            for &gn in &logical.subs[logical.index_of(id)?].global_nodes {
                sensor[gn] = true;
            }
        }
        let u = &cfg.uncertainty;
        let total_area = g.size[0] * g.size[1];
        let subs = decomp
            .subs
            .iter()
            .map(|s| {
                let n = s.mesh.n_nodes();
                let mass = assemble_mass(&s.mesh);
                let mass_lu = BandedLu::factor(&mass)?;
                let gamma = u.gamma.unwrap_or(match mode {
                    Mode::Global => (cfg.horizon() + 1.0) * total_area,
                    _ => (u.reinit_window.unwrap_or(cfg.horizon()) + 1.0) * s.area(),
                });
                let unc = Uncertainty::scalar(n, u.q0, u.q, u.r, gamma);
                unc.validate()?;
                let obs_nodes: Vec<usize> = match mode {
                    Mode::Forward => vec![],
                    Mode::Global => (0..n).filter(|&k| sensor[s.global_nodes[k]]).collect(),
                    Mode::Localized => {
                        if u.observed.contains(&s.id) {
                            (0..n).collect()
                        } else {
                            vec![]
                        }
                    }
                };
                let weights = ObsWeights::new(&mass, &obs_nodes, &unc.r);
                let b = unc.model_noise(&mass);
                Ok(SubCtx {
                    sensorless: obs_nodes.is_empty(),
                    mass: Arc::new(mass),
                    mass_lu: Arc::new(mass_lu),
                    unc,
                    b,
                    obs_nodes,
                    weights,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (ps, pl) = decomp.locate(cfg.output.probe)?;
        let pg = decomp.subs[ps].global_nodes[pl];
        let norm_mass = match cfg.output.norm {
            FieldNorm::Nodal => None,
            FieldNorm::Mass => Some(assemble_mass(&decomp.global)),
        };
        Ok(Engine {
            cfg,
            mode,
            decomp,
            subs,
            probe: (ps, pl, pg),
            norm_mass,
        })
    }

    fn filtering(&self) -> bool {
        self.mode != Mode::Forward
    }

    fn observe(&self, i: usize, step: usize) -> Vec<f64> {
        let t = step as f64 * self.cfg.run.dt;
        let s = &self.decomp.subs[i];
        let u = &self.cfg.uncertainty;
        self.subs[i]
            .obs_nodes
            .iter()
            .map(|&k| {
                let gn = s.global_nodes[k];
                self.cfg.truth.value(t, s.mesh.coords(k))
                    + sensor_noise(self.cfg.run.seed, step, gn, u.noise_half_width)
            })
            .collect()
    }

    fn norm(&self, v: &[f64]) -> f64 {
        match &self.norm_mass {
            None => norm2(v),
            Some(m) => dot(v, &m.mul_vec(v)).max(0.0).sqrt(),
        }
    }

    fn metrics(
        &self,
        step: usize,
        fields: &[Vec<f64>],
        p: &[RowMat],
        z: &[f64],
        iters: usize,
    ) -> MetricsRow {
        let t = step as f64 * self.cfg.run.dt;
        let est = self.decomp.stitch(fields);
        let truth = self
            .decomp
            .global
            .interpolate(|x| self.cfg.truth.value(t, x));
        let diff: Vec<f64> = est.iter().zip(&truth).map(|(a, b)| a - b).collect();
        let (ps, pl, pg) = self.probe;
        MetricsRow {
            step,
            time: t,
            spatial_norm: self.norm(&est),
            truth_norm: self.norm(&truth),
            spatial_error: self.norm(&diff),
            schwarz_iters: iters,
            probe_est: est[pg],
            probe_truth: truth[pg],
            probe_bound: if self.filtering() {
                pointwise_bound(&p[ps], pl, z)
            } else {
                f64::NAN
            },
        }
    }

    fn assemble(
        &self,
        i: usize,
        t: f64,
        cached: Option<&Arc<Assembled>>,
    ) -> Result<Arc<Assembled>> {
        let s = &self.decomp.subs[i];
        let flow = &self.cfg.flow;
        let roles = s.roles(&flow.field, t);
        if let Some(c) = cached {
            if flow.field.is_steady() && c.roles == roles {
                return Ok(c.clone());
            }
        }
        let classes = classify_nodes(&s.mesh, &roles);
        let mu = flow.field.velocity(t);
        let stiff =
            assemble_blocks(&s.mesh, &roles, &classes, flow.epsilon, mu, flow.coupling).total();
        let ctx = &self.subs[i];
        let sys = StepSystem::new(
            ctx.mass.clone(),
            ctx.mass_lu.clone(),
            stiff,
            self.cfg.run.dt,
            self.filtering(),
        )?;
        Ok(Arc::new(Assembled {
            roles,
            classes,
            sys,
        }))
    }

    /// Inflow data for subdomain `i`: neighbour values at the step midpoint.
    fn inflow_for(
        &self,
        i: usize,
        asm: &Assembled,
        u: &[Vec<f64>],
        next: &[Vec<f64>],
        step: usize,
        iter: usize,
    ) -> Vec<ExchangeMessage> {
        let s = &self.decomp.subs[i];
        asm.roles
            .iter()
            .filter(|r| r.interface && r.inflow)
            .filter_map(|r| s.neighbors[r.side.index()].map(|j| (r.side, j)))
            .map(|(side, j)| {
                let a = self.decomp.side_values(j, side, &u[j]);
                let b = self.decomp.side_values(j, side, &next[j]);
                ExchangeMessage {
                    step,
                    iteration: iter,
                    from: j,
                    to: i,
                    side,
                    values: a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect(),
                }
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_sub(
        &self,
        i: usize,
        tm: f64,
        asm: &Assembled,
        msgs: &[ExchangeMessage],
        u0: &[f64],
        p0: Option<&RowMat>,
        p1: Option<&RowMat>,
        y_mid: &[f64],
    ) -> Result<Vec<f64>> {
        let s = &self.decomp.subs[i];
        let ctx = &self.subs[i];
        let flow = &self.cfg.flow;
        let mu = flow.field.velocity(tm);
        let mut f = vec![0.0; u0.len()];
        for m in msgs {
            add_coupling_source(
                &s.mesh,
                m.side,
                &asm.classes,
                &m.values,
                mu,
                flow.coupling,
                &mut f,
            );
        }
        let (Some(p0), Some(p1)) = (p0, p1) else {
            return Ok(forward_step(&asm.sys, u0, &f));
        };
        let mut frames = Vec::new();
        if !ctx.obs_nodes.is_empty() {
            frames.push(ObsFrame {
                nodes: ctx.obs_nodes.clone(),
                values: y_mid.to_vec(),
                pseudo: false,
            });
        }
        if ctx.sensorless
            && self.cfg.uncertainty.pseudo_observations
            && self.mode == Mode::Localized
        {
            let mut pseudo = BTreeMap::new();
            for m in msgs {
                for (&k, &v) in s.mesh.side_nodes(m.side).iter().zip(&m.values) {
                    if asm.classes[k] == NodeClass::DirichletIn {
                        pseudo.entry(k).or_insert(v);
                    }
                }
            }
            if !pseudo.is_empty() {
                frames.push(ObsFrame {
                    nodes: pseudo.keys().copied().collect(),
                    values: pseudo.values().copied().collect(),
                    pseudo: true,
                });
            }
        }
        filter_step(&asm.sys, ctx.unc.gamma, p0, p1, u0, &f, &frames, &ctx.unc.r)
    }

    fn run(self) -> Result<RunOutput> {
        let start = Instant::now();
        let cfg = self.cfg;
        let nsub = self.decomp.len();
        let h = cfg.run.dt;
        let mut u: Vec<Vec<f64>> = self
            .decomp
            .subs
            .iter()
            .map(|s| match (self.mode, cfg.run.initial_estimate) {
                (Mode::Forward, _) | (_, InitialEstimate::Truth) => {
                    s.mesh.interpolate(|x| cfg.truth.value(0.0, x))
                }
                _ => vec![0.0; s.mesh.n_nodes()],
            })
            .collect();
        let mut p: Vec<RowMat> = if self.filtering() {
            self.subs
                .iter()
                .map(|c| c.unc.initial_covariance(&c.mass))
                .collect()
        } else {
            vec![]
        };
        let (ps, pl, _) = self.probe;
        let z = bound_probe_vector(&self.subs[ps].mass_lu, pl);
        let spw = if self.mode == Mode::Localized {
            cfg.steps_per_window()
        } else {
            None
        };

        let every = cfg.output.snapshot_every;
        let mut snapshots = Vec::new();
        if every > 0 {
            snapshots.push((0, self.decomp.stitch(&u)));
        }
        let mut metrics = vec![self.metrics(0, &u, &p, &z, 0)];
        let mut timings = vec![TimingRow {
            step: 0,
            assembly_ms: 0.0,
            riccati_ms: 0.0,
            filter_ms: 0.0,
            exchange_ms: 0.0,
        }];
        let mut cache: Vec<Option<Arc<Assembled>>> = vec![None; nsub];

        for k in 0..cfg.run.steps {
            let tm = (k as f64 + 0.5) * h;
            let t0 = Instant::now();
            let asm: Vec<Arc<Assembled>> = (0..nsub)
                .into_par_iter()
                .map(|i| self.assemble(i, tm, cache[i].as_ref()))
                .collect::<Result<_>>()?;
            cache = asm.iter().cloned().map(Some).collect();
            let assembly_ms = ms(t0);

            let t0 = Instant::now();
            let p_next: Vec<RowMat> = if self.filtering() {
                (0..nsub)
                    .into_par_iter()
                    .map(|i| {
                        riccati_step(
                            &asm[i].sys,
                            &self.subs[i].b,
                            &self.subs[i].weights,
                            self.subs[i].unc.gamma,
                            &p[i],
                        )
                    })
                    .collect::<Result<_>>()?
            } else {
                vec![]
            };
            let riccati_ms = ms(t0);

            let y_mid: Vec<Vec<f64>> = (0..nsub)
                .map(|i| {
                    let (a, b) = (self.observe(i, k), self.observe(i, k + 1));
                    a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect()
                })
                .collect();

            let levels = self.decomp.flow_levels(&cfg.flow.field, tm);
            let mut next = u.clone();
            let (mut filter_ms, mut exchange_ms) = (0.0, 0.0);
            let mut iters = 0;
            let rel_err = loop {
                iters += 1;
                let mut used = Vec::new();
                for level in &levels {
                    let t0 = Instant::now();
                    let inputs: Vec<(usize, Vec<ExchangeMessage>)> = level
                        .iter()
                        .map(|&i| (i, self.inflow_for(i, &asm[i], &u, &next, k, iters)))
                        .collect();
                    exchange_ms += ms(t0);
                    let t0 = Instant::now();
                    let out: Vec<Vec<f64>> = inputs
                        .par_iter()
                        .map(|(i, msgs)| {
                            self.solve_sub(
                                *i,
                                tm,
                                &asm[*i],
                                msgs,
                                &u[*i],
                                p.get(*i),
                                p_next.get(*i),
                                &y_mid[*i],
                            )
                        })
                        .collect::<Result<_>>()?;
                    filter_ms += ms(t0);
                    for ((i, msgs), v) in inputs.into_iter().zip(out) {
                        next[i] = v;
                        used.extend(msgs);
                    }
                }
                let t0 = Instant::now();
                let fresh: Vec<ExchangeMessage> = used
                    .iter()
                    .map(|m| {
                        let a = self.decomp.side_values(m.from, m.side, &u[m.from]);
                        let b = self.decomp.side_values(m.from, m.side, &next[m.from]);
                        let values = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                        ExchangeMessage {
                            iteration: iters,
                            values,
                            ..m.clone()
                        }
                    })
                    .collect();
                let abs = interface_error(&used, &fresh);
                let (sq, cnt) = next
                    .iter()
                    .flatten()
                    .fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
                let scale = (sq / cnt.max(1) as f64).sqrt();
                let rel = if scale > 0.0 { abs / scale } else { abs };
                exchange_ms += ms(t0);
                if rel <= cfg.decomposition.schwarz_tol
                    || iters >= cfg.decomposition.schwarz_max_iter
                {
                    break rel;
                }
            };
            if rel_err > cfg.decomposition.schwarz_tol {
                if cfg.run.strict {
                    return Err(Error::NonConvergence {
                        step: k + 1,
                        error: rel_err,
                    });
                }
                log::warn!(
                    "step {}: Schwarz stopped after {iters} iterations, error {rel_err:.3e}",
                    k + 1
                );
            }
            u = next;
            if self.filtering() {
                p = p_next;
                if let (Some(spw), Some(w)) = (spw, cfg.uncertainty.reinit_window) {
                    if (k + 1) % spw == 0 {
                        p.iter_mut().for_each(|pi| reinitialize(pi, w));
                    }
                }
            }
            metrics.push(self.metrics(k + 1, &u, &p, &z, iters));
            if every > 0 && (k + 1) % every == 0 {
                snapshots.push((k + 1, self.decomp.stitch(&u)));
            }
            timings.push(TimingRow {
                step: k + 1,
                assembly_ms,
                riccati_ms,
                filter_ms,
                exchange_ms,
            });
        }
        let summary = summarize(self.mode, nsub, &metrics, &timings, ms(start));
        let final_estimate = self.decomp.stitch(&u);
        Ok(RunOutput {
            metrics,
            timings,
            summary,
            decomposition: self.decomp,
            final_fields: u,
            final_estimate,
            snapshots,
        })
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
