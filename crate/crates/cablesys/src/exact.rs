//! Exact rational harmonic extension on skeletons.
//!
//! Everything here runs on arbitrary-precision rationals: the 2/5-2/5-1/5
//! midpoint rule on Sierpinski skeletons, the mean-value/linear-diagonal
//! extension on Vicsek skeletons, oscillation, and the harmonic function on
//! the doubled ball that defeats the plain reverse Holder inequality on the
//! Sierpinski cable system. The quantities (3/5)^{n+1}, 7/9, 16/25 are
//! reproduced bit-exactly, not approximately.

use std::collections::HashMap;
use std::sync::Arc;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{FromPrimitive, Signed, Zero};

use crate::error::{Error, Result};
use crate::graph::{build_sierpinski, build_vicsek, CableGraph, Family, LatticePoint, Skeleton};

/// Exact rational scalar.
pub type Rat = BigRational;

/// Rational n/d from machine integers.
pub fn rat(n: i64, d: i64) -> Rat {
    BigRational::new(BigInt::from_i64(n).unwrap(), BigInt::from_i64(d).unwrap())
}

/// Serialize as the "num/den" wire form used in JSON reports.
pub fn rat_string(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Harmonic values on the vertices of one skeleton, exact.
#[derive(Debug, Clone)]
pub struct SkeletonHarmonic {
    pub graph: Arc<CableGraph>,
    pub skeleton: Skeleton,
    pub boundary_values: Vec<Rat>,
    /// vertex id -> value, defined on every skeleton vertex
    pub values: HashMap<u32, Rat>,
}

impl SkeletonHarmonic {
    pub fn value(&self, vertex: u32) -> &Rat {
        &self.values[&vertex]
    }

    pub fn value_at(&self, coords: &[i64]) -> Option<&Rat> {
        let id = self.graph.vertex_id(&LatticePoint(coords.to_vec()))?;
        self.values.get(&id)
    }

    /// max - min over the vertices of a sub-skeleton.
    pub fn oscillation(&self, cell: &Skeleton) -> Rat {
        let mut it = cell.members.iter().map(|id| &self.values[id]);
        let first = it.next().expect("cell has vertices");
        let (mut lo, mut hi) = (first.clone(), first.clone());
        for v in it {
            if v < &lo {
                lo = v.clone();
            }
            if v > &hi {
                hi = v.clone();
            }
        }
        hi - lo
    }

    pub fn min_value(&self) -> Rat {
        self.values.values().min().expect("nonempty").clone()
    }

    pub fn max_value(&self) -> Rat {
        self.values.values().max().expect("nonempty").clone()
    }

    /// Kirchhoff residual at a vertex: the sum of outgoing slopes over the
    /// incident cables of the skeleton, sum_q (u(q) - u(p)). Exactly zero at
    /// every interior vertex of a harmonic extension.
    pub fn kirchhoff_residual(&self, p: u32) -> Rat {
        let up = &self.values[&p];
        let mut acc = Rat::zero();
        for &q in &self.graph.adjacency[p as usize] {
            if let Some(uq) = self.values.get(&q) {
                acc += uq - up;
            }
        }
        acc
    }

    /// Largest |Kirchhoff residual| over interior vertices (must be 0/1).
    pub fn max_interior_kirchhoff(&self) -> Rat {
        let boundary: std::collections::HashSet<u32> =
            self.skeleton.boundary.iter().copied().collect();
        let mut worst = Rat::zero();
        for &p in &self.skeleton.members {
            if boundary.contains(&p) {
                continue;
            }
            // only vertices all of whose cables lie in the skeleton carry
            // the Kirchhoff condition
            if self.graph.adjacency[p as usize]
                .iter()
                .any(|q| !self.values.contains_key(q))
            {
                continue;
            }
            let r = self.kirchhoff_residual(p).abs();
            if r > worst {
                worst = r;
            }
        }
        worst
    }
}

/// Harmonic extension on a Sierpinski skeleton from its three corner values,
/// by recursive application of the 2/5-2/5-1/5 midpoint rule.
pub fn sg_extend_on(
    graph: &Arc<CableGraph>,
    skeleton: &Skeleton,
    corner_values: [Rat; 3],
) -> SkeletonHarmonic {
    assert!(matches!(graph.family, Family::Sierpinski));
    let side = graph.family.cell_side(skeleton.level);
    let ox = skeleton.origin[0];
    let oy = skeleton.origin[1];
    let mut values: HashMap<u32, Rat> = HashMap::new();
    let mut record = |g: &CableGraph, a: i64, b: i64, v: &Rat| {
        let id = g
            .vertex_id(&LatticePoint(vec![a, b]))
            .expect("skeleton vertex in graph");
        if let Some(old) = values.get(&id) {
            debug_assert_eq!(old, v, "overlapping cells disagree");
        } else {
            values.insert(id, v.clone());
        }
    };
    // stack of (corner1, corner2, corner3, side) with corners
    // (x,y), (x+s,y), (x,y+s)
    let mut stack = vec![(
        (ox, oy),
        corner_values[0].clone(),
        corner_values[1].clone(),
        corner_values[2].clone(),
        side,
    )];
    let fifth = rat(1, 5);
    while let Some(((x, y), a1, a2, a3, s)) = stack.pop() {
        if s == 1 {
            record(graph, x, y, &a1);
            record(graph, x + 1, y, &a2);
            record(graph, x, y + 1, &a3);
            continue;
        }
        let m = s / 2;
        let two = rat(2, 1);
        let u4 = (&two * &a1 + &two * &a2 + &a3) * &fifth; // midpoint of [q1,q2]
        let u5 = (&a1 + &two * &a2 + &two * &a3) * &fifth; // midpoint of [q2,q3]
        let u6 = (&two * &a1 + &a2 + &two * &a3) * &fifth; // midpoint of [q3,q1]
        stack.push(((x, y), a1, u4.clone(), u6.clone(), m));
        stack.push(((x + m, y), u4, a2, u5.clone(), m));
        stack.push(((x, y + m), u6, u5, a3, m));
    }
    SkeletonHarmonic {
        graph: Arc::clone(graph),
        skeleton: skeleton.clone(),
        boundary_values: corner_values.to_vec(),
        values,
    }
}

/// Convenience form on the canonical generation-`depth` core, which is its
/// own top-level skeleton.
pub fn sg_extend(a1: Rat, a2: Rat, a3: Rat, depth: u32) -> Result<SkeletonHarmonic> {
    let graph = Arc::new(build_sierpinski(depth, crate::DEFAULT_NODE_BUDGET)?);
    let skeleton = top_skeleton(&graph);
    Ok(sg_extend_on(&graph, &skeleton, [a1, a2, a3]))
}

/// The whole core viewed as its own top-level skeleton.
pub fn top_skeleton(graph: &CableGraph) -> Skeleton {
    let mut sk = graph.enumerate_skeletons(graph.generation);
    assert_eq!(sk.len(), 1, "whole core is the unique top-level skeleton");
    sk.remove(0)
}

/// Harmonic extension on a Vicsek skeleton from its 2^N corner values: the
/// center takes the corner mean, values are linear along each
/// corner-to-center diagonal, and every off-diagonal branch is constant with
/// the value of its attachment point on the diagonals.
pub fn vicsek_extend_on(
    graph: &Arc<CableGraph>,
    skeleton: &Skeleton,
    corner_values: Vec<Rat>,
) -> SkeletonHarmonic {
    let n_dim = match graph.family {
        Family::Vicsek { n_dim } => n_dim as usize,
        _ => panic!("vicsek_extend_on needs a Vicsek graph"),
    };
    assert_eq!(corner_values.len(), 1 << n_dim);
    let side = graph.family.cell_side(skeleton.level);
    let half = side / 2; // 3^level steps corner -> center
    let center_val = corner_values
        .iter()
        .fold(Rat::zero(), |acc, v| acc + v)
        / rat(1 << n_dim, 1);

    let mut values: HashMap<u32, Rat> = HashMap::new();
    let id_of = |coords: Vec<i64>| -> u32 {
        graph
            .vertex_id(&LatticePoint(coords))
            .expect("skeleton vertex in graph")
    };
    // diagonals: corner (mask) sits at origin + side*mask, direction toward
    // the center is +1 where the mask bit is 0 and -1 where it is 1
    let steps = Rat::from_integer(BigInt::from_i64(half).unwrap());
    for (mask, a) in corner_values.iter().enumerate() {
        let corner: Vec<i64> = (0..n_dim)
            .map(|i| skeleton.origin[i] + ((mask >> i & 1) as i64) * side)
            .collect();
        let dir: Vec<i64> = (0..n_dim)
            .map(|i| if mask >> i & 1 == 1 { -1 } else { 1 })
            .collect();
        for t in 0..=half {
            let coords: Vec<i64> = corner
                .iter()
                .zip(&dir)
                .map(|(c, d)| c + d * t)
                .collect();
            let frac = Rat::from_integer(BigInt::from_i64(t).unwrap()) / &steps;
            let v = a + &frac * (&center_val - a);
            let id = id_of(coords);
            values.entry(id).or_insert(v);
        }
    }
    // constant propagation into the off-diagonal branches (the core is a
    // tree, so each branch hangs off a unique diagonal vertex)
    let member_set: std::collections::HashSet<u32> = skeleton.members.iter().copied().collect();
    let mut queue: Vec<u32> = values.keys().copied().collect();
    while let Some(p) = queue.pop() {
        let vp = values[&p].clone();
        for &q in &graph.adjacency[p as usize] {
            if member_set.contains(&q) && !values.contains_key(&q) {
                values.insert(q, vp.clone());
                queue.push(q);
            }
        }
    }
    debug_assert_eq!(values.len(), skeleton.members.len());
    SkeletonHarmonic {
        graph: Arc::clone(graph),
        skeleton: skeleton.clone(),
        boundary_values: corner_values,
        values,
    }
}

/// Convenience form on the canonical generation-`depth` Vicsek core.
pub fn vicsek_extend(n_dim: u32, depth: u32, corner_values: Vec<Rat>) -> Result<SkeletonHarmonic> {
    let graph = Arc::new(build_vicsek(n_dim, depth, crate::DEFAULT_NODE_BUDGET)?);
    let skeleton = top_skeleton(&graph);
    Ok(vicsek_extend_on(&graph, &skeleton, corner_values))
}

/// Exact integral of |linear interpolant| over one unit cable with endpoint
/// values a, b; splits at the interior zero when the signs differ.
pub fn abs_integral_unit_cable(a: &Rat, b: &Rat) -> Rat {
    if a.is_negative() && b.is_positive() || a.is_positive() && b.is_negative() {
        // zero at s = |a|/(|a|+|b|): two triangles
        let (aa, ab) = (a.abs(), b.abs());
        let denom = &aa + &ab;
        (&aa * &aa + &ab * &ab) / (rat(2, 1) * denom)
    } else {
        (a.abs() + b.abs()) / rat(2, 1)
    }
}

/// The exact harmonic function on 2B = B(2^{n+1} p2, 2^{n+1}) of the
/// Sierpinski system with boundary data (-1,-1,+1,+1) at the four far
/// corners, via the midpoint rule cell by cell.
#[derive(Debug, Clone)]
pub struct RhCounterexample {
    pub n: u32,
    /// mid-cable gradient next to the center: (3/5)^{n+1}
    pub gradient: Rat,
    /// exact average of |u| over 2B (the paper only bounds it by 1)
    pub avg_abs_u: Rat,
    /// gradient * 2^n / avg |u|; grows like (6/5)^{n+1}
    pub rh_ratio: Rat,
}

/// Build the counterexample quantities for the reverse Holder inequality on
/// the Sierpinski cable system.
///
/// 2B is the union of two generation-(n+1) cells meeting at the center
/// c = 2^{n+1} p2, minus the two far sides (which sit at distance exactly
/// 2^{n+1} from c). By the reflection symmetry through c the two cells
/// contribute the same |u| integral, so everything is computed on one
/// canonical cell with corner data (0, 1, 1).
pub fn rh_counterexample(n: u32) -> Result<RhCounterexample> {
    if n > 12 {
        return Err(Error::Capacity {
            what: "counterexample generation",
            requested: n as u64,
            budget: 12,
        });
    }
    let h = sg_extend(rat(0, 1), rat(1, 1), rat(1, 1), n + 1)?;
    let side = 2i64.pow(n + 1);
    // gradient on the cable from the center (canonical corner q1) to its
    // neighbor (1, 0): |u(c + p2) - u(c)|
    let at_q1_neighbor = h.value_at(&[1, 0]).expect("corner-adjacent vertex").clone();
    let gradient = at_q1_neighbor.abs();

    // integral of |u| over the cell minus its far edge [q2, q3]
    // (the line a + b = side)
    let mut integral = Rat::zero();
    let graph = &h.graph;
    for &(i, j) in &graph.edges {
        let p = &graph.vertices[i as usize].0;
        let q = &graph.vertices[j as usize].0;
        if p[0] + p[1] == side && q[0] + q[1] == side {
            continue; // far side, outside the open ball
        }
        integral += abs_integral_unit_cable(h.value(i), h.value(j));
    }
    // both cells: measure 2*(3^{n+2} - 2^{n+1}), integral doubles
    let measure = rat(3i64.pow(n + 2) - 2i64.pow(n + 1), 1);
    let avg_abs_u = &integral / &measure;
    let radius = rat(2i64.pow(n), 1);
    let rh_ratio = &gradient * &radius / &avg_abs_u;
    Ok(RhCounterexample {
        n,
        gradient,
        avg_abs_u,
        rh_ratio,
    })
}
