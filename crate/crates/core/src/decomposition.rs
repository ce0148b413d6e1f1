//! Rectangular non-overlapping decomposition, interface bookkeeping and data exchange.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::mesh_fem::{side_roles, Mesh, Side, SideRole};

/// One rectangular subdomain. Ids are 1-based, row-major from the lower-left corner.
#[derive(Clone, Debug)]
pub struct Subdomain {
    pub id: usize,
    pub col: usize,
    pub row: usize,
    pub mesh: Mesh,
    /// Local node → global node.
    pub global_nodes: Vec<usize>,
    /// Neighbour (0-based index) across each side, in [`Side::ALL`] order.
    pub neighbors: [Option<usize>; 4],
}

impl Subdomain {
    pub fn interface_flags(&self) -> [bool; 4] {
        self.neighbors.map(|n| n.is_some())
    }

    pub fn roles(&self, flow: &FlowField, t: f64) -> [SideRole; 4] {
        side_roles(flow, t, self.interface_flags())
    }

    pub fn area(&self) -> f64 {
        self.mesh.size[0] * self.mesh.size[1]
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub global: Mesh,
    pub sx: usize,
    pub sy: usize,
    pub subs: Vec<Subdomain>,
    multiplicity: Vec<u32>,
}

/// Boundary data sent from subdomain `from` to the inflow side `side` of subdomain `to`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeMessage {
    pub step: usize,
    pub iteration: usize,
    pub from: usize,
    pub to: usize,
    pub side: Side,
    pub values: Vec<f64>,
}

impl Decomposition {
    /// `counts` subdomains per axis, `elements` elements per subdomain per axis.
    pub fn new(
        origin: [f64; 2],
        size: [f64; 2],
        counts: [usize; 2],
        elements: [usize; 2],
    ) -> Result<Self> {
        let [sx, sy] = counts;
        let [ex, ey] = elements;
        if sx == 0 || sy == 0 || ex == 0 || ey == 0 {
            return Err(Error::Config(
                "subdomain and element counts must be positive".into(),
            ));
        }
        if !(size[0] > 0.0 && size[1] > 0.0) {
            return Err(Error::Config(format!(
                "domain size {size:?} must be positive"
            )));
        }
        let global = Mesh::new(origin, size, sx * ex, sy * ey);
        let sub_size = [size[0] / sx as f64, size[1] / sy as f64];
        let mut subs = Vec::with_capacity(sx * sy);
        let mut multiplicity = vec![0u32; global.n_nodes()];
        for row in 0..sy {
            for col in 0..sx {
                let mesh = Mesh::new(
                    [
                        origin[0] + col as f64 * sub_size[0],
                        origin[1] + row as f64 * sub_size[1],
                    ],
                    sub_size,
                    ex,
                    ey,
                );
                let mut global_nodes = Vec::with_capacity(mesh.n_nodes());
                for j in 0..=ey {
                    for i in 0..=ex {
                        let g = global.node(col * ex + i, row * ey + j);
                        multiplicity[g] += 1;
                        global_nodes.push(g);
                    }
                }
                let idx = |c: usize, r: usize| r * sx + c;
                let neighbors = [
                    (col > 0).then(|| idx(col - 1, row)),
                    (col + 1 < sx).then(|| idx(col + 1, row)),
                    (row > 0).then(|| idx(col, row - 1)),
                    (row + 1 < sy).then(|| idx(col, row + 1)),
                ];
                subs.push(Subdomain {
                    id: row * sx + col + 1,
                    col,
                    row,
                    mesh,
                    global_nodes,
                    neighbors,
                });
            }
        }
        Ok(Decomposition {
            global,
            sx,
            sy,
            subs,
            multiplicity,
        })
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    /// 0-based index of the 1-based subdomain id.
    pub fn index_of(&self, id: usize) -> Result<usize> {
        if id == 0 || id > self.subs.len() {
            return Err(Error::Config(format!(
                "subdomain id {id} outside 1..={}",
                self.subs.len()
            )));
        }
        Ok(id - 1)
    }

    /// Global field with every shared node counted once (copies are averaged).
    pub fn stitch(&self, fields: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.global.n_nodes()];
        for (s, f) in self.subs.iter().zip(fields) {
            for (&g, &v) in s.global_nodes.iter().zip(f) {
                out[g] += v;
            }
        }
        for (o, &m) in out.iter_mut().zip(&self.multiplicity) {
            *o /= m as f64;
        }
        out
    }

    pub fn restrict(&self, global: &[f64]) -> Vec<Vec<f64>> {
        self.subs
            .iter()
            .map(|s| s.global_nodes.iter().map(|&g| global[g]).collect())
            .collect()
    }

    /// Lowest-index subdomain whose closure contains `p`, and the nearest local node there.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, usize)> {
        let tol = 1e-9 * (self.global.size[0] + self.global.size[1]);
        self.subs
            .iter()
            .position(|s| s.mesh.contains(p, tol))
            .map(|i| (i, self.subs[i].mesh.nearest_node(p)))
            .ok_or_else(|| Error::Config(format!("point {p:?} is outside the domain")))
    }

    /// Values of subdomain `from` on the side it shares with `to` (ordered as `to`'s side nodes).
    pub fn side_values(&self, from: usize, to_side: Side, field: &[f64]) -> Vec<f64> {
        self.subs[from]
            .mesh
            .side_nodes(to_side.opposite())
            .iter()
            .map(|&k| field[k])
            .collect()
    }

    /// Upstream-first processing levels: `j` precedes `i` when `i` takes inflow data from `j`.
    ///
    /// Members of one level never exchange data with each other, so they can be solved
    /// concurrently. Subdomains on a dependency cycle (only possible for non-uniform flows)
    /// are appended one per level in index order.
    pub fn flow_levels(&self, flow: &FlowField, t: f64) -> Vec<Vec<usize>> {
        let n = self.subs.len();
        let mut indeg = vec![0usize; n];
        let mut downstream: Vec<Vec<usize>> = vec![vec![]; n];
        for (i, s) in self.subs.iter().enumerate() {
            for r in s.roles(flow, t) {
                if let (true, Some(j)) = (r.inflow, s.neighbors[r.side.index()]) {
                    indeg[i] += 1;
                    downstream[j].push(i);
                }
            }
        }
        let mut done = vec![false; n];
        let mut levels = Vec::new();
        let mut frontier: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        loop {
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for &i in &frontier {
                    done[i] = true;
                    for &d in &downstream[i] {
                        indeg[d] -= 1;
                        if indeg[d] == 0 {
                            next.push(d);
                        }
                    }
                }
                next.sort_unstable();
                levels.push(std::mem::take(&mut frontier));
                frontier = next;
            }
            match (0..n).find(|&i| !done[i]) {
                None => break,
                Some(i) => {
                    indeg[i] = 0;
                    done[i] = true;
                    levels.push(vec![i]);
                    for &d in &downstream[i] {
                        if !done[d] {
                            indeg[d] = indeg[d].saturating_sub(1);
                            if indeg[d] == 0 {
                                frontier.push(d);
                            }
                        }
                    }
                }
            }
        }
        levels
    }

    /// Inflow messages every subdomain needs, built from the given per-subdomain fields.
    pub fn inflow_messages(
        &self,
        flow: &FlowField,
        t: f64,
        fields: &[Vec<f64>],
        step: usize,
        iteration: usize,
    ) -> Vec<ExchangeMessage> {
        let mut out = Vec::new();
        for (i, s) in self.subs.iter().enumerate() {
            for r in s.roles(flow, t) {
                if let (true, Some(j)) = (r.inflow, s.neighbors[r.side.index()]) {
                    out.push(ExchangeMessage {
                        step,
                        iteration,
                        from: j,
                        to: i,
                        side: r.side,
                        values: self.side_values(j, r.side, &fields[j]),
                    });
                }
            }
        }
        out
    }

    /// Largest RMS difference between the values on each interface as seen from its two sides.
    pub fn interface_jump(&self, fields: &[Vec<f64>]) -> f64 {
        let mut worst = 0.0f64;
        for (i, s) in self.subs.iter().enumerate() {
            for side in [Side::Right, Side::Top] {
                if let Some(j) = s.neighbors[side.index()] {
                    let mine: Vec<f64> = s
                        .mesh
                        .side_nodes(side)
                        .iter()
                        .map(|&k| fields[i][k])
                        .collect();
                    worst = worst.max(rms_diff(&mine, &self.side_values(j, side, &fields[j])));
                }
            }
        }
        worst
    }
}

pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Largest RMS difference between the boundary data a subdomain used and the data its
/// neighbour now holds for the same interface. Zero once the exchange is a fixed point.
pub fn interface_error(used: &[ExchangeMessage], fresh: &[ExchangeMessage]) -> f64 {
    let mut worst = 0.0f64;
    for u in used {
        let f = fresh
            .iter()
            .find(|f| f.to == u.to && f.side == u.side)
            .expect("fresh message for every used interface");
        worst = worst.max(rms_diff(&u.values, &f.values));
    }
    worst
}
