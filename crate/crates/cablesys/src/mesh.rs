//! Uniform 1-D refinement of every cable and the discrete Dirichlet form:
//! sparse stiffness operator, lumped mass, geodesic metric and metric balls.
//!
//! Node ordering is deterministic: graph vertices first (same ids as the
//! graph), then segment-interior nodes by (edge id, index). With k segments
//! per cable (h = 1/k), piecewise-linear finite elements give stiffness
//! entries +-1/h and the lumped mass m_x = h * (#incident segments) / 2, so
//! the generator mass^{-1} S is self-adjoint in the mass inner product and
//! k = 1 degenerates to the combinatorial graph Laplacian.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::CableGraph;
use crate::scalar::{sc, to_f64, Scalar};
use crate::sparse::CsrMatrix;

/// Where a mesh node sits on the cable system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSite {
    /// A vertex of the base graph (node id equals vertex id).
    Vertex(u32),
    /// Interior point of cable `edge` at arclength `index`/k from the
    /// lexicographically lower endpoint; 1 <= index <= k-1.
    Interior { edge: u32, index: u32 },
}

/// Refined discretization of a [`CableGraph`].
#[derive(Debug, Clone)]
pub struct Mesh<F> {
    pub graph: Arc<CableGraph>,
    /// segments per cable
    pub k: u32,
    /// segment length 1/k
    pub h: F,
    /// node pairs, one entry per segment, grouped by edge
    pub segments: Vec<(u32, u32)>,
    pub stiffness: CsrMatrix<F>,
    pub mass: Vec<F>,
    n_nodes: usize,
}

impl<F: Scalar> Mesh<F> {
    pub fn node_count(&self) -> usize {
        self.n_nodes
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn site(&self, node: usize) -> NodeSite {
        let nv = self.graph.vertex_count();
        if node < nv {
            NodeSite::Vertex(node as u32)
        } else {
            let off = (node - nv) as u32;
            let per = self.k - 1;
            NodeSite::Interior {
                edge: off / per,
                index: off % per + 1,
            }
        }
    }

    /// Node id of the interior point (edge, index); index 0 and k map to the
    /// edge's endpoints.
    pub fn node_on_edge(&self, edge: u32, index: u32) -> usize {
        let (a, b) = self.graph.edges[edge as usize];
        if index == 0 {
            a as usize
        } else if index == self.k {
            b as usize
        } else {
            self.graph.vertex_count() + (edge * (self.k - 1) + index - 1) as usize
        }
    }

    /// Total measure; equals the number of cables of the base graph.
    pub fn total_mass(&self) -> F {
        self.mass.iter().copied().sum()
    }

    /// Dirichlet energy u^T S u of nodal values.
    pub fn energy(&self, u: &[F]) -> F {
        self.stiffness.quadratic_form(u)
    }

    /// Per-segment slope (u_b - u_a)/h; its absolute value is
    /// orientation-invariant.
    pub fn segment_slopes(&self, u: &[F]) -> Vec<F> {
        self.segments
            .iter()
            .map(|&(a, b)| (u[b as usize] - u[a as usize]) / self.h)
            .collect()
    }

    /// Geodesic distances from `source` to every node, in units of h.
    /// Cables are unit length, so all distances are exact integers.
    pub fn distances_units(&self, source: usize) -> Vec<u32> {
        let adj = self.neighbors();
        let mut dist = vec![u32::MAX; self.n_nodes];
        let mut heap: BinaryHeap<Reverse<(u32, u32)>> = BinaryHeap::new();
        dist[source] = 0;
        heap.push(Reverse((0, source as u32)));
        while let Some(Reverse((d, v))) = heap.pop() {
            if d > dist[v as usize] {
                continue;
            }
            for &(w, _) in &adj[v as usize] {
                let nd = d + 1;
                if nd < dist[w as usize] {
                    dist[w as usize] = nd;
                    heap.push(Reverse((nd, w)));
                }
            }
        }
        dist
    }

    /// Geodesic distance between two nodes in cable-length units.
    pub fn geodesic_distance(&self, x: usize, y: usize) -> F {
        let d = self.distances_units(x)[y];
        assert!(d != u32::MAX, "mesh is connected");
        self.h * sc::<F>(d as f64)
    }

    fn neighbors(&self) -> Vec<Vec<(u32, u32)>> {
        let mut adj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.n_nodes];
        for (sid, &(a, b)) in self.segments.iter().enumerate() {
            adj[a as usize].push((b, sid as u32));
            adj[b as usize].push((a, sid as u32));
        }
        adj
    }

    /// Distance (in units of h) from every node to the truncation boundary.
    pub fn truncation_distance_units(&self) -> Vec<u32> {
        let mut best = vec![u32::MAX; self.n_nodes];
        for &t in self.graph.truncation_boundary() {
            let d = self.distances_units(t as usize);
            for i in 0..self.n_nodes {
                if d[i] < best[i] {
                    best[i] = d[i];
                }
            }
        }
        best
    }

    /// Open metric ball from precomputed distances.
    pub fn ball_from_distances(&self, center: usize, r: F, dist_units: &[u32]) -> Ball<F> {
        let mut nodes = Vec::new();
        let mut volume = F::zero();
        let r_units = to_f64(r / self.h);
        for (i, &du) in dist_units.iter().enumerate() {
            if du != u32::MAX && (du as f64) < r_units {
                nodes.push(i as u32);
                volume += self.mass[i];
            }
        }
        let trunc = self
            .graph
            .truncation_boundary()
            .iter()
            .map(|&t| dist_units[t as usize])
            .min()
            .unwrap_or(u32::MAX);
        let margin = if trunc == u32::MAX {
            F::infinity()
        } else {
            self.h * sc::<F>(trunc as f64) - sc::<F>(2.0) * r
        };
        Ball {
            center,
            radius: r,
            nodes,
            volume,
            margin,
        }
    }

    /// Open metric ball B(center, r) with lumped volume and safety margin.
    pub fn ball(&self, center: usize, r: F) -> Ball<F> {
        let dist = self.distances_units(center);
        self.ball_from_distances(center, r, &dist)
    }

    /// Nodal L^p norm (Sum m_x |u_x|^p)^{1/p}; p = infinity gives the max.
    pub fn lp_norm(&self, u: &[F], p: F) -> F {
        if p == F::infinity() {
            return u.iter().fold(F::zero(), |m, &v| m.max(v.abs()));
        }
        let s: F = u
            .iter()
            .zip(&self.mass)
            .map(|(&v, &m)| m * v.abs().powf(p))
            .sum();
        s.powf(F::one() / p)
    }

    /// L^p norm of a per-segment gradient field (each segment has measure h).
    pub fn gradient_lp_norm(&self, slopes: &[F], p: F) -> F {
        if p == F::infinity() {
            return slopes.iter().fold(F::zero(), |m, &v| m.max(v.abs()));
        }
        let s: F = slopes.iter().map(|&v| self.h * v.abs().powf(p)).sum();
        s.powf(F::one() / p)
    }

    /// Mass-weighted mean of |u| over a node set.
    pub fn mean_abs_over(&self, u: &[F], nodes: &[u32]) -> F {
        let mut num = F::zero();
        let mut den = F::zero();
        for &i in nodes {
            num += self.mass[i as usize] * u[i as usize].abs();
            den += self.mass[i as usize];
        }
        if den > F::zero() {
            num / den
        } else {
            F::zero()
        }
    }

    /// Mass-weighted mean of |u|^p over a node set, to the power 1/p.
    pub fn mean_abs_p_over(&self, u: &[F], nodes: &[u32], p: F) -> F {
        let mut num = F::zero();
        let mut den = F::zero();
        for &i in nodes {
            num += self.mass[i as usize] * u[i as usize].abs().powf(p);
            den += self.mass[i as usize];
        }
        if den > F::zero() {
            (num / den).powf(F::one() / p)
        } else {
            F::zero()
        }
    }

    /// Mass inner product <u, v>_m.
    pub fn mass_dot(&self, u: &[F], v: &[F]) -> F {
        u.iter()
            .zip(v)
            .zip(&self.mass)
            .map(|((&a, &b), &m)| a * b * m)
            .collect::<Vec<F>>()
            .into_iter()
            .sum()
    }

    /// Project to mean zero in the mass inner product.
    pub fn project_mean_zero(&self, u: &mut [F]) {
        let total = self.total_mass();
        let mean = self.mass_dot(u, &vec![F::one(); u.len()]) / total;
        for v in u.iter_mut() {
            *v -= mean;
        }
    }

    /// Stiffness and lumped mass of the submesh induced by `nodes` (only
    /// segments with both endpoints inside count); used for Neumann-type
    /// eigenvalue problems on balls. Returns (stiffness, mass, node map).
    pub fn induced_operator(&self, nodes: &[u32]) -> (CsrMatrix<F>, Vec<F>, Vec<u32>) {
        let mut pos = vec![u32::MAX; self.n_nodes];
        for (new, &old) in nodes.iter().enumerate() {
            pos[old as usize] = new as u32;
        }
        let inv_h = F::one() / self.h;
        let half_h = self.h / sc::<F>(2.0);
        let mut triplets = Vec::new();
        let mut mass = vec![F::zero(); nodes.len()];
        for &(a, b) in &self.segments {
            let (pa, pb) = (pos[a as usize], pos[b as usize]);
            if pa != u32::MAX && pb != u32::MAX {
                let (pa, pb) = (pa as usize, pb as usize);
                triplets.push((pa, pa, inv_h));
                triplets.push((pb, pb, inv_h));
                triplets.push((pa, pb, -inv_h));
                triplets.push((pb, pa, -inv_h));
                mass[pa] += half_h;
                mass[pb] += half_h;
            }
        }
        (
            CsrMatrix::from_triplets(nodes.len(), triplets),
            mass,
            nodes.to_vec(),
        )
    }

    /// COO text export of the stiffness operator, "i j value" per line.
    pub fn write_stiffness_coo<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.stiffness;
        for r in 0..s.n {
            for k in s.row_ptr[r]..s.row_ptr[r + 1] {
                writeln!(w, "{} {} {}", r, s.col_idx[k], to_f64(s.values[k]))?;
            }
        }
        Ok(())
    }
}

/// Open metric ball with lumped volume and truncation safety margin.
#[derive(Debug, Clone)]
pub struct Ball<F> {
    pub center: usize,
    pub radius: F,
    /// nodes with d(center, x) < r, ascending
    pub nodes: Vec<u32>,
    /// V(x, r) = sum of lumped masses over the node set
    pub volume: F,
    /// d(center, truncation boundary) - 2r; experiments require > 0
    pub margin: F,
}

impl<F: Scalar> Ball<F> {
    /// True if the doubled ball stays clear of the truncation boundary.
    pub fn respects_margin(&self) -> bool {
        self.margin > F::zero()
    }
}

/// Refine every cable of `g` into k segments.
pub fn refine<F: Scalar>(g: &Arc<CableGraph>, k: u32, node_budget: u64) -> Result<Mesh<F>> {
    if k < 1 {
        return Err(Error::invalid("refinement needs k >= 1"));
    }
    let nv = g.vertex_count();
    let ne = g.edge_count();
    let n_nodes = nv + (k as usize - 1) * ne;
    if n_nodes as u64 > node_budget {
        return Err(Error::Capacity {
            what: "mesh nodes",
            requested: n_nodes as u64,
            budget: node_budget,
        });
    }
    let h = F::one() / sc::<F>(k as f64);
    let inv_h = sc::<F>(k as f64);
    let half_h = h / sc::<F>(2.0);
    let mut segments = Vec::with_capacity(ne * k as usize);
    for (e, &(a, b)) in g.edges.iter().enumerate() {
        let e = e as u32;
        let mut prev = a;
        for idx in 1..k {
            let node = (nv + (e * (k - 1) + idx - 1) as usize) as u32;
            segments.push((prev, node));
            prev = node;
        }
        segments.push((prev, b));
    }
    let mut triplets = Vec::with_capacity(4 * segments.len());
    let mut mass = vec![F::zero(); n_nodes];
    for &(a, b) in &segments {
        let (a, b) = (a as usize, b as usize);
        triplets.push((a, a, inv_h));
        triplets.push((b, b, inv_h));
        triplets.push((a, b, -inv_h));
        triplets.push((b, a, -inv_h));
        mass[a] += half_h;
        mass[b] += half_h;
    }
    let stiffness = CsrMatrix::from_triplets(n_nodes, triplets);
    Ok(Mesh {
        graph: Arc::clone(g),
        k,
        h,
        segments,
        stiffness,
        mass,
        n_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_line, build_sierpinski};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sierpinski_mesh(n: u32, k: u32) -> Mesh<f64> {
        let g = Arc::new(build_sierpinski(n, 1 << 22).unwrap());
        refine(&g, k, 1 << 24).unwrap()
    }

    #[test]
    fn k1_is_graph_laplacian() {
        let m = sierpinski_mesh(1, 1);
        assert_eq!(m.node_count(), 6);
        // stiffness row sums vanish and diagonal equals degree
        let d = m.stiffness.diagonal();
        for v in 0..6usize {
            assert_eq!(d[v], m.graph.degree(v as u32) as f64);
        }
        let ones = vec![1.0; 6];
        let s1 = m.stiffness.mul_vec_alloc(&ones);
        assert!(s1.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn node_count_and_mass() {
        let m = sierpinski_mesh(1, 4);
        assert_eq!(m.node_count(), 6 + 3 * 9);
        assert!((m.total_mass() - 9.0).abs() < 1e-12);
        let m = sierpinski_mesh(3, 3);
        assert!((m.total_mass() - m.graph.edge_count() as f64).abs() < 1e-10);
    }

    #[test]
    fn energy_identity_and_positivity() {
        let m = sierpinski_mesh(2, 3);
        let mut rng = StdRng::seed_from_u64(7);
        let ones = vec![1.0; m.node_count()];
        for _ in 0..1000 {
            let u: Vec<f64> = (0..m.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e = m.energy(&u);
            assert!(e >= 0.0);
            // energy equals the segment-sum identity
            let direct: f64 = m
                .segments
                .iter()
                .map(|&(a, b)| {
                    let du = (u[b as usize] - u[a as usize]) / m.h;
                    du * du * m.h
                })
                .sum();
            assert!((e - direct).abs() <= 1e-9 * (1.0 + e));
            // divergence form: 1^T S u = 0
            let su = m.stiffness.mul_vec_alloc(&u);
            let total: f64 = su.iter().sum();
            assert!(total.abs() < 1e-9);
        }
        // equality iff constant (connected core)
        assert!(m.energy(&ones).abs() < 1e-12);
    }

    #[test]
    fn geodesics() {
        let m = sierpinski_mesh(2, 2);
        // corners of the generation are 2^n apart
        let a = m.graph.vertex_id(&crate::graph::LatticePoint(vec![0, 0])).unwrap() as usize;
        let b = m.graph.vertex_id(&crate::graph::LatticePoint(vec![4, 0])).unwrap() as usize;
        assert_eq!(m.geodesic_distance(a, b), 4.0);
        assert_eq!(m.geodesic_distance(a, a), 0.0);
        // adjacent graph vertices sit one cable apart
        let (x, y) = m.graph.edges[0];
        assert_eq!(m.geodesic_distance(x as usize, y as usize), 1.0);
        // symmetry and triangle inequality on a sample
        let da = m.distances_units(a);
        let db = m.distances_units(b);
        for w in 0..m.node_count() {
            assert_eq!(m.distances_units(w)[a], da[w]);
            assert!(da[w] + db[w] >= da[b]);
        }
    }

    #[test]
    fn balls() {
        let m = sierpinski_mesh(2, 4);
        // tiny ball at an interior node: the node alone, V = h
        let node = m.node_on_edge(0, 2);
        let b = m.ball(node, 0.2);
        assert_eq!(b.nodes, vec![node as u32]);
        assert!((b.volume - 0.25).abs() < 1e-12);
        // r slightly above 1 at a degree-4 vertex: the 4 incident cables
        // (continuum volume 4; the lumped sum also carries the boundary
        // vertices' full nodal masses, at most h*deg/2 = 1 each side)
        let deg4 = (0..m.graph.vertex_count() as u32)
            .find(|&v| m.graph.degree(v) == 4)
            .unwrap() as usize;
        let b = m.ball(deg4, 1.0 + 1e-9);
        assert!(b.volume >= 4.0 && b.volume <= 6.0, "V = {}", b.volume);
        // monotone in r
        let d = m.distances_units(deg4);
        let b1 = m.ball_from_distances(deg4, 1.5, &d);
        let b2 = m.ball_from_distances(deg4, 2.5, &d);
        assert!(b2.volume >= b1.volume);
        assert!(b2.nodes.len() >= b1.nodes.len());
    }

    #[test]
    fn line_mesh_and_margin() {
        let g = Arc::new(build_line(4, 1 << 16).unwrap());
        let m: Mesh<f64> = refine(&g, 8, 1 << 20).unwrap();
        assert_eq!(m.node_count(), 5 + 7 * 4);
        // center of the chain, margin = 2 - 2r
        let mid = 2usize;
        let b = m.ball(mid, 0.5);
        assert!((b.margin - 1.0).abs() < 1e-12);
        assert!(b.respects_margin());
        let b = m.ball(mid, 1.25);
        assert!(!b.respects_margin());
    }

    #[test]
    fn capacity() {
        let g = Arc::new(build_sierpinski(3, 1 << 20).unwrap());
        assert!(matches!(
            refine::<f64>(&g, 64, 100),
            Err(Error::Capacity { .. })
        ));
    }
}
