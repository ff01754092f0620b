//! Exact integer-lattice construction of the Vicsek and Sierpinski cable
//! system cores, plus skeleton enumeration.
//!
//! Vertices carry integer coordinates: for the N-dimensional Vicsek family
//! the coordinates are in units of 1/sqrt(N) (so the generation-n core spans
//! [0, 2*3^n]^N), for the Sierpinski family a pair (a, b) means
//! a*(1,0) + b*(1/2, sqrt(3)/2) and the generation-n core spans the triangle
//! a, b >= 0, a + b <= 2^n. Adjacency is exact: two vertices are joined by a
//! unit cable iff their coordinate difference is one of the family's unit
//! steps. Euclidean positions are derived on demand for output only.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which fractal family a graph belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// N-dimensional Vicsek cross, N >= 2.
    Vicsek { n_dim: u32 },
    Sierpinski,
    /// Straight chain of cables; the 1-D reference system used by tests and
    /// closed-form oracles. "Generation" n is the number of cables.
    Line,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Vicsek { .. } => "vicsek",
            Family::Sierpinski => "sierpinski",
            Family::Line => "line",
        }
    }

    /// Side length (in cable units) of the generation-k cell.
    pub fn cell_side(&self, k: u32) -> i64 {
        match self {
            Family::Vicsek { .. } => 2 * 3i64.pow(k),
            Family::Sierpinski => 2i64.pow(k),
            Family::Line => k as i64,
        }
    }

    /// Number of cables in a generation-k cell: 2^N (2^N+1)^k or 3^{k+1}.
    pub fn cell_edges(&self, k: u32) -> u64 {
        match self {
            Family::Vicsek { n_dim } => {
                let m = (1u64 << n_dim) + 1;
                (1u64 << n_dim) * m.pow(k)
            }
            Family::Sierpinski => 3u64.pow(k + 1),
            Family::Line => k as u64,
        }
    }

    /// Number of vertices of the generation-k cell.
    pub fn cell_vertices(&self, k: u32) -> u64 {
        match self {
            // the Vicsek cell is a tree
            Family::Vicsek { .. } => self.cell_edges(k) + 1,
            Family::Sierpinski => (3u64.pow(k + 1) + 3) / 2,
            Family::Line => k as u64 + 1,
        }
    }
}

/// Integer lattice coordinates of a vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn translated(&self, shift: &[i64]) -> LatticePoint {
        LatticePoint(self.0.iter().zip(shift).map(|(a, b)| a + b).collect())
    }

    /// Euclidean position in R^N (Vicsek) or R^2 (Sierpinski).
    pub fn position(&self, family: Family) -> Vec<f64> {
        match family {
            Family::Vicsek { n_dim } => {
                let s = 1.0 / (n_dim as f64).sqrt();
                self.0.iter().map(|&c| c as f64 * s).collect()
            }
            Family::Sierpinski => {
                let (a, b) = (self.0[0] as f64, self.0[1] as f64);
                vec![a + 0.5 * b, b * 3f64.sqrt() / 2.0]
            }
            Family::Line => vec![self.0[0] as f64],
        }
    }
}

/// Finite generation-n core of an unbounded cable system.
///
/// Immutable after construction; cables have unit length and unit measure.
#[derive(Debug, Clone)]
pub struct CableGraph {
    pub family: Family,
    pub generation: u32,
    /// lexicographically sorted, ids are positions in this vector
    pub vertices: Vec<LatticePoint>,
    /// unordered pairs (i, j) with i < j, sorted
    pub edges: Vec<(u32, u32)>,
    pub adjacency: Vec<Vec<u32>>,
    index: HashMap<LatticePoint, u32>,
    /// vertices whose neighborhood in the unbounded system extends beyond
    /// this core (the truncation boundary); everything else is natural
    truncation: Vec<u32>,
}

type EdgePair = (Vec<i64>, Vec<i64>);

fn ordered_pair(a: Vec<i64>, b: Vec<i64>) -> EdgePair {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Cables of the generation-n cell, anchored at the origin, built by the
/// iterated-translate recursion. The edge set is carried through the
/// recursion rather than rederived from unit distances on the vertex union:
/// in the Sierpinski lattice the three side midpoints of every hole are
/// pairwise at unit distance without sharing a cell, and those pairs are not
/// cables.
fn cell_edge_set(family: Family, n: u32) -> BTreeSet<EdgePair> {
    match family {
        Family::Vicsek { n_dim } => {
            let dim = n_dim as usize;
            let center = vec![1i64; dim];
            let mut base: BTreeSet<EdgePair> = (0..(1u32 << dim))
                .map(|mask| {
                    let corner: Vec<i64> =
                        (0..dim).map(|i| ((mask >> i & 1) as i64) * 2).collect();
                    ordered_pair(corner, center.clone())
                })
                .collect();
            for k in 0..n {
                // translates by 2*3^k * p_i with p_i a corner of [0,2]^N
                // (lattice entries 0 or 2) or the center (1,...,1)
                let t = 2 * 3i64.pow(k);
                let mut anchors: Vec<Vec<i64>> = (0..(1u32 << dim))
                    .map(|mask| (0..dim).map(|i| ((mask >> i & 1) as i64) * 2 * t).collect())
                    .collect();
                anchors.push(vec![t; dim]);
                let mut next = BTreeSet::new();
                for a in anchors {
                    for (p, q) in &base {
                        next.insert(ordered_pair(
                            p.iter().zip(&a).map(|(x, s)| x + s).collect(),
                            q.iter().zip(&a).map(|(x, s)| x + s).collect(),
                        ));
                    }
                }
                base = next;
            }
            base
        }
        Family::Sierpinski => {
            let mut base: BTreeSet<EdgePair> = [
                ordered_pair(vec![0, 0], vec![1, 0]),
                ordered_pair(vec![0, 0], vec![0, 1]),
                ordered_pair(vec![1, 0], vec![0, 1]),
            ]
            .into_iter()
            .collect();
            for k in 0..n {
                let s = 2i64.pow(k);
                let mut next = BTreeSet::new();
                for a in [vec![0, 0], vec![s, 0], vec![0, s]] {
                    for (p, q) in &base {
                        next.insert(ordered_pair(
                            vec![p[0] + a[0], p[1] + a[1]],
                            vec![q[0] + a[0], q[1] + a[1]],
                        ));
                    }
                }
                base = next;
            }
            base
        }
        Family::Line => (0..n as i64)
            .map(|i| (vec![i], vec![i + 1]))
            .collect(),
    }
}

/// Vertex set of the generation-n cell (endpoints of its cables).
fn cell_vertex_set(family: Family, n: u32) -> BTreeSet<Vec<i64>> {
    let mut vs = BTreeSet::new();
    for (p, q) in cell_edge_set(family, n) {
        vs.insert(p);
        vs.insert(q);
    }
    vs
}

fn assemble(family: Family, generation: u32, edge_set: BTreeSet<EdgePair>) -> CableGraph {
    let mut vertex_set = BTreeSet::new();
    for (p, q) in &edge_set {
        vertex_set.insert(p.clone());
        vertex_set.insert(q.clone());
    }
    let vertices: Vec<LatticePoint> = vertex_set.into_iter().map(LatticePoint).collect();
    let index: HashMap<LatticePoint, u32> = vertices
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i as u32))
        .collect();
    let mut edges: Vec<(u32, u32)> = edge_set
        .into_iter()
        .map(|(p, q)| {
            let i = index[&LatticePoint(p)];
            let j = index[&LatticePoint(q)];
            (i.min(j), i.max(j))
        })
        .collect();
    edges.sort_unstable();
    let mut adjacency = vec![Vec::new(); vertices.len()];
    for &(i, j) in &edges {
        adjacency[i as usize].push(j);
        adjacency[j as usize].push(i);
    }
    let truncation = truncation_vertices(family, generation, &index);
    CableGraph {
        family,
        generation,
        vertices,
        edges,
        adjacency,
        index,
        truncation,
    }
}

/// Vertices of the generation-n core that acquire further neighbors in the
/// unbounded lattice: the far diagonal corner for Vicsek, the two non-origin
/// corners for Sierpinski. All other extremities are genuine features of the
/// infinite system (Vicsek leaves stay leaves), so natural reflection there
/// is exact.
fn truncation_vertices(
    family: Family,
    generation: u32,
    index: &HashMap<LatticePoint, u32>,
) -> Vec<u32> {
    let side = family.cell_side(generation);
    let corners: Vec<Vec<i64>> = match family {
        Family::Vicsek { n_dim } => vec![vec![side; n_dim as usize]],
        Family::Sierpinski => vec![vec![side, 0], vec![0, side]],
        Family::Line => vec![vec![0], vec![side]],
    };
    corners
        .into_iter()
        .map(|c| *index.get(&LatticePoint(c)).expect("corner vertex present"))
        .collect()
}

/// Build the generation-n core of the N-dimensional Vicsek cable system.
pub fn build_vicsek(n_dim: u32, generation: u32, vertex_budget: u64) -> Result<CableGraph> {
    if n_dim < 2 {
        return Err(Error::invalid(format!("vicsek requires N >= 2, got {n_dim}")));
    }
    let family = Family::Vicsek { n_dim };
    let count = family.cell_vertices(generation);
    if count > vertex_budget {
        return Err(Error::Capacity {
            what: "vertices",
            requested: count,
            budget: vertex_budget,
        });
    }
    Ok(assemble(family, generation, cell_edge_set(family, generation)))
}

/// Build the generation-n core of the Sierpinski cable system.
pub fn build_sierpinski(generation: u32, vertex_budget: u64) -> Result<CableGraph> {
    let family = Family::Sierpinski;
    let count = family.cell_vertices(generation);
    if count > vertex_budget {
        return Err(Error::Capacity {
            what: "vertices",
            requested: count,
            budget: vertex_budget,
        });
    }
    Ok(assemble(family, generation, cell_edge_set(family, generation)))
}

/// Straight chain of `n_edges` unit cables; both ends are truncation points.
pub fn build_line(n_edges: u32, vertex_budget: u64) -> Result<CableGraph> {
    let family = Family::Line;
    let count = family.cell_vertices(n_edges);
    if count > vertex_budget {
        return Err(Error::Capacity {
            what: "vertices",
            requested: count,
            budget: vertex_budget,
        });
    }
    Ok(assemble(family, n_edges, cell_edge_set(family, n_edges)))
}

/// Build either family from a [`Family`] value.
pub fn build(family: Family, generation: u32, vertex_budget: u64) -> Result<CableGraph> {
    match family {
        Family::Vicsek { n_dim } => build_vicsek(n_dim, generation, vertex_budget),
        Family::Sierpinski => build_sierpinski(generation, vertex_budget),
        Family::Line => build_line(generation, vertex_budget),
    }
}

impl CableGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_id(&self, p: &LatticePoint) -> Option<u32> {
        self.index.get(p).copied()
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adjacency[v as usize].len()
    }

    /// Ids of the truncation-boundary vertices.
    pub fn truncation_boundary(&self) -> &[u32] {
        &self.truncation
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v as usize] {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.vertices.len()
    }

    /// All level-k skeletons contained in this core, by exhaustive
    /// translation search over the lattice.
    pub fn enumerate_skeletons(&self, k: u32) -> Vec<Skeleton> {
        if k > self.generation || self.family == Family::Line {
            return Vec::new();
        }
        let cell: Vec<Vec<i64>> = cell_vertex_set(self.family, k).into_iter().collect();
        let cell_edges: Vec<EdgePair> = cell_edge_set(self.family, k).into_iter().collect();
        let edge_set: HashSet<(u32, u32)> = self.edges.iter().copied().collect();
        let side = self.family.cell_side(k);
        let mut out = Vec::new();
        // the cell's lexicographic minimum is the origin, so every valid
        // translation maps the origin onto some core vertex
        'cand: for v in &self.vertices {
            let shift = &v.0;
            let mut members = Vec::with_capacity(cell.len());
            for c in &cell {
                let p = LatticePoint(c.iter().zip(shift).map(|(a, b)| a + b).collect());
                match self.index.get(&p) {
                    Some(&id) => members.push(id),
                    None => continue 'cand,
                }
            }
            // every cell cable must be a cable here (vertex coincidences
            // across holes are not enough)
            for (p, q) in &cell_edges {
                let a = self.index[&LatticePoint(
                    p.iter().zip(shift).map(|(x, s)| x + s).collect(),
                )];
                let b = self.index[&LatticePoint(
                    q.iter().zip(shift).map(|(x, s)| x + s).collect(),
                )];
                if !edge_set.contains(&(a.min(b), a.max(b))) {
                    continue 'cand;
                }
            }
            // reject translates whose convex hull catches extra core
            // vertices: the translated set would not be a hull intersection
            if self.hull_has_strangers(shift, side, &members) {
                continue;
            }
            out.push(self.make_skeleton(k, shift, members));
        }
        out
    }

    fn hull_has_strangers(&self, shift: &[i64], side: i64, members: &[u32]) -> bool {
        let member_set: HashSet<u32> = members.iter().copied().collect();
        let inside = |p: &LatticePoint| -> bool {
            match self.family {
                Family::Vicsek { .. } => p
                    .0
                    .iter()
                    .zip(shift)
                    .all(|(c, s)| (s..=&(s + side)).contains(&c)),
                Family::Sierpinski => {
                    let (a, b) = (p.0[0] - shift[0], p.0[1] - shift[1]);
                    a >= 0 && b >= 0 && a + b <= side
                }
                Family::Line => unreachable!("no skeletons on the line"),
            }
        };
        self.vertices
            .iter()
            .enumerate()
            .any(|(id, p)| inside(p) && !member_set.contains(&(id as u32)))
    }

    fn make_skeleton(&self, k: u32, shift: &[i64], members: Vec<u32>) -> Skeleton {
        let side = self.family.cell_side(k);
        let id_of = |coords: Vec<i64>| -> u32 {
            *self
                .index
                .get(&LatticePoint(coords.iter().zip(shift).map(|(a, b)| a + b).collect()))
                .expect("skeleton landmark present")
        };
        match self.family {
            Family::Vicsek { n_dim } => {
                let dim = n_dim as usize;
                let boundary: Vec<u32> = (0..(1u32 << dim))
                    .map(|mask| {
                        id_of((0..dim).map(|i| ((mask >> i & 1) as i64) * side).collect())
                    })
                    .collect();
                let center = id_of(vec![side / 2; dim]);
                Skeleton {
                    level: k,
                    origin: shift.to_vec(),
                    members,
                    boundary,
                    center: Some(center),
                    midpoints: None,
                }
            }
            Family::Sierpinski => {
                let boundary = vec![
                    id_of(vec![0, 0]),
                    id_of(vec![side, 0]),
                    id_of(vec![0, side]),
                ];
                let midpoints = if k >= 1 {
                    let m = side / 2;
                    // midpoints of [q1,q2], [q2,q3], [q3,q1]
                    Some([id_of(vec![m, 0]), id_of(vec![m, m]), id_of(vec![0, m])])
                } else {
                    None
                };
                Skeleton {
                    level: k,
                    origin: shift.to_vec(),
                    members,
                    boundary,
                    center: None,
                    midpoints,
                }
            }
            Family::Line => unreachable!("no skeletons on the line"),
        }
    }

    /// Number of cables with both endpoints in `set`.
    pub fn induced_edge_count(&self, set: &[u32]) -> usize {
        let s: HashSet<u32> = set.iter().copied().collect();
        self.edges
            .iter()
            .filter(|(i, j)| s.contains(i) && s.contains(j))
            .count()
    }

    /// JSON export: `{family, N, generation, vertices, edges}`.
    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            family: self.family.name().to_string(),
            n: match self.family {
                Family::Vicsek { n_dim } => Some(n_dim),
                Family::Sierpinski | Family::Line => None,
            },
            generation: self.generation,
            vertices: self.vertices.iter().map(|p| p.0.clone()).collect(),
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }

    /// Edge-list text format, one `i j` per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for &(i, j) in &self.edges {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

/// Serializable view of a [`CableGraph`].
#[derive(Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub family: String,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    pub generation: u32,
    pub vertices: Vec<Vec<i64>>,
    pub edges: Vec<[u32; 2]>,
}

/// A level-k skeleton: translated copy of the generation-k cell.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub level: u32,
    /// lattice translation applied to the canonical cell
    pub origin: Vec<i64>,
    /// member vertex ids
    pub members: Vec<u32>,
    /// 2^N cube corners (Vicsek) or 3 triangle corners (Sierpinski)
    pub boundary: Vec<u32>,
    /// cube center (Vicsek only)
    pub center: Option<u32>,
    /// q4, q5, q6: midpoints of [q1,q2], [q2,q3], [q3,q1] (Sierpinski, k >= 1)
    pub midpoints: Option<[u32; 3]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent brute-force construction by set recursion, mirroring the
    /// fixed-point definition directly.
    fn brute_force_vicsek2(n: u32) -> BTreeSet<Vec<i64>> {
        let mut v: BTreeSet<Vec<i64>> = [
            vec![0, 0],
            vec![2, 0],
            vec![0, 2],
            vec![2, 2],
            vec![1, 1],
        ]
        .into_iter()
        .collect();
        for k in 0..n {
            let s = 2 * 3i64.pow(k);
            let anchors = [vec![0, 0], vec![s * 2, 0], vec![0, s * 2], vec![s * 2, s * 2], vec![s, s]];
            // note: anchors are 2*3^k * p_i with p_i in {0,2}^2 or (1,1)
            let mut next = BTreeSet::new();
            for a in anchors {
                for p in &v {
                    next.insert(vec![p[0] + a[0], p[1] + a[1]]);
                }
            }
            v = next;
        }
        v
    }

    fn brute_force_sierpinski(n: u32) -> BTreeSet<Vec<i64>> {
        let mut v: BTreeSet<Vec<i64>> =
            [vec![0, 0], vec![1, 0], vec![0, 1]].into_iter().collect();
        for k in 0..n {
            let s = 2i64.pow(k);
            let mut next = BTreeSet::new();
            for a in [vec![0, 0], vec![s, 0], vec![0, s]] {
                for p in &v {
                    next.insert(vec![p[0] + a[0], p[1] + a[1]]);
                }
            }
            v = next;
        }
        v
    }

    #[test]
    fn vicsek_gen0_is_the_cross() {
        let g = build_vicsek(2, 0, 1 << 20).unwrap();
        assert_eq!(g.vertex_count(), 5);
        assert_eq!(g.edge_count(), 4);
        // center has degree 4, corners degree 1
        let center = g.vertex_id(&LatticePoint(vec![1, 1])).unwrap();
        assert_eq!(g.degree(center), 4);
    }

    #[test]
    fn vicsek_counts_match_brute_force() {
        for n in 0..=2 {
            let g = build_vicsek(2, n, 1 << 20).unwrap();
            let bf = brute_force_vicsek2(n);
            assert_eq!(g.vertex_count(), bf.len());
            let expected_vertices = [5, 21, 101][n as usize];
            let expected_edges = [4, 20, 100][n as usize];
            assert_eq!(g.vertex_count(), expected_vertices);
            assert_eq!(g.edge_count(), expected_edges);
            for p in &g.vertices {
                assert!(bf.contains(&p.0));
            }
        }
    }

    #[test]
    fn sierpinski_counts() {
        let expect = [(3, 3), (6, 9), (15, 27)];
        for n in 0..=2u32 {
            let g = build_sierpinski(n, 1 << 20).unwrap();
            let bf = brute_force_sierpinski(n);
            assert_eq!(g.vertex_count(), bf.len());
            assert_eq!(g.vertex_count(), expect[n as usize].0);
            assert_eq!(g.edge_count(), expect[n as usize].1);
        }
    }

    #[test]
    fn closed_form_edge_counts() {
        for n in 0..=6 {
            let g = build_sierpinski(n, 1 << 24).unwrap();
            assert_eq!(g.edge_count() as u64, 3u64.pow(n + 1));
            assert!(g.is_connected());
        }
        for n_dim in [2u32, 3] {
            for n in 0..=4u32.min(if n_dim == 3 { 3 } else { 4 }) {
                let g = build_vicsek(n_dim, n, 1 << 24).unwrap();
                let m = (1u64 << n_dim) + 1;
                assert_eq!(g.edge_count() as u64, (1u64 << n_dim) * m.pow(n));
                assert_eq!(g.vertex_count() as u64, g.edge_count() as u64 + 1);
                assert!(g.is_connected());
            }
        }
    }

    #[test]
    fn vicsek_is_a_tree_edge_removal() {
        for n in 0..=3u32 {
            let g = build_vicsek(2, n, 1 << 20).unwrap();
            assert_eq!(g.edge_count(), g.vertex_count() - 1);
            // removing any edge disconnects the graph
            for skip in 0..g.edge_count() {
                let mut seen = vec![false; g.vertex_count()];
                let mut stack = vec![0usize];
                seen[0] = true;
                let mut count = 1;
                while let Some(v) = stack.pop() {
                    for (e, &(a, b)) in g.edges.iter().enumerate() {
                        if e == skip {
                            continue;
                        }
                        let (a, b) = (a as usize, b as usize);
                        let w = if a == v {
                            b
                        } else if b == v {
                            a
                        } else {
                            continue;
                        };
                        if !seen[w] {
                            seen[w] = true;
                            count += 1;
                            stack.push(w);
                        }
                    }
                }
                assert!(count < g.vertex_count(), "edge {skip} removal keeps connected");
            }
        }
    }

    #[test]
    fn degree_profiles() {
        let g = build_vicsek(3, 2, 1 << 22).unwrap();
        let max_deg = (0..g.vertex_count() as u32).map(|v| g.degree(v)).max().unwrap();
        assert!(max_deg <= 1 << 3);
        let g = build_sierpinski(4, 1 << 20).unwrap();
        for v in 0..g.vertex_count() as u32 {
            let d = g.degree(v);
            assert!(d == 2 || d == 4, "sierpinski degree {d}");
        }
        // generation corners have degree 2
        let side = 2i64.pow(4);
        for c in [vec![0, 0], vec![side, 0], vec![0, side]] {
            let id = g.vertex_id(&LatticePoint(c)).unwrap();
            assert_eq!(g.degree(id), 2);
        }
    }

    #[test]
    fn deterministic_rebuild() {
        let a = build_sierpinski(3, 1 << 20).unwrap();
        let b = build_sierpinski(3, 1 << 20).unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.edges, b.edges);
        let ja = serde_json::to_string(&a.to_json()).unwrap();
        let jb = serde_json::to_string(&b.to_json()).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn capacity_error() {
        match build_vicsek(2, 10, 100) {
            Err(Error::Capacity { requested, .. }) => {
                assert_eq!(requested, 4 * 5u64.pow(10) + 1);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn skeleton_enumeration_whole_graph() {
        let g = build_vicsek(2, 2, 1 << 20).unwrap();
        let top = g.enumerate_skeletons(2);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].boundary.len(), 4);
        assert!(top[0].center.is_some());
        assert_eq!(g.induced_edge_count(&top[0].members), 100);
    }

    #[test]
    fn skeleton_enumeration_level1_vicsek() {
        let g = build_vicsek(2, 2, 1 << 20).unwrap();
        let sk = g.enumerate_skeletons(1);
        assert_eq!(sk.len(), 5);
        for s in &sk {
            assert_eq!(g.induced_edge_count(&s.members), 20);
        }
    }

    #[test]
    fn skeleton_enumeration_sierpinski() {
        for n in 1..=3u32 {
            let g = build_sierpinski(n, 1 << 20).unwrap();
            let sk = g.enumerate_skeletons(n - 1);
            assert_eq!(sk.len(), 3, "generation {n}");
            for s in &sk {
                assert_eq!(
                    g.induced_edge_count(&s.members) as u64,
                    3u64.pow(n),
                    "member edge count at level {}",
                    n - 1
                );
                if n - 1 >= 1 {
                    assert!(s.midpoints.is_some());
                }
            }
        }
        let g = build_sierpinski(2, 1 << 20).unwrap();
        assert!(g.enumerate_skeletons(3).is_empty());
    }

    #[test]
    fn truncation_boundary_matches_next_generation() {
        // a core vertex is truncated iff it has more neighbors in the
        // generation+1 core than in the core itself
        for (fam, n) in [
            (Family::Sierpinski, 3u32),
            (Family::Vicsek { n_dim: 2 }, 2),
        ] {
            let g = build(fam, n, 1 << 22).unwrap();
            let big = build(fam, n + 1, 1 << 22).unwrap();
            let mut expected = Vec::new();
            for (id, p) in g.vertices.iter().enumerate() {
                let big_id = big.vertex_id(p).unwrap();
                if big.degree(big_id) > g.degree(id as u32) {
                    expected.push(id as u32);
                }
            }
            let mut got = g.truncation_boundary().to_vec();
            got.sort_unstable();
            expected.sort_unstable();
            assert_eq!(got, expected, "{:?} gen {n}", fam.name());
        }
    }

    #[test]
    fn unit_distance_invariant() {
        let g = build_sierpinski(3, 1 << 20).unwrap();
        for &(i, j) in &g.edges {
            let a = g.vertices[i as usize].position(g.family);
            let b = g.vertices[j as usize].position(g.family);
            let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!((d2 - 1.0).abs() < 1e-12);
        }
        let g = build_vicsek(3, 1, 1 << 20).unwrap();
        for &(i, j) in &g.edges {
            let a = g.vertices[i as usize].position(g.family);
            let b = g.vertices[j as usize].position(g.family);
            let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!((d2 - 1.0).abs() < 1e-12);
        }
    }
}
