use cablesys::experiment::*;
use cablesys::graph::Family;
use std::time::Instant;
fn main() {
    let budget = 1u64 << 26;
    for (fam, gens) in [(Family::Sierpinski, vec![4u32,5,6,7]), (Family::Vicsek{n_dim:2}, vec![3,4,5])] {
        for gen in gens {
            let t0 = Instant::now();
            let mesh = build_mesh(fam, gen, 2, budget).unwrap();
            let gap = cablesys::riesz::spectral_gap_floor(&mesh).unwrap();
            let laws = cablesys::laws::ScalingLaws::for_family(fam);
            let eps = cablesys::scalar::to_f64(laws.gradient_exponent()) / 2.0;
            let scans = cablesys::riesz::lp_norm_scan(&mesh, &laws, eps, &[1.5, 2.0, 4.0], 200, 2024,
                cablesys::heat::EvolutionAccuracy::production(), gap).unwrap();
            let p2 = scans.iter().find(|s| s.p == 2.0).unwrap();
            let p4 = scans.iter().find(|s| s.p == 4.0).unwrap();
            println!("{} gen{gen}: n={} [{:?}] local2={:.6} comb2={:.4} comb4={:.4}",
                fam.name(), mesh.node_count(), t0.elapsed(), p2.local, p2.combined, p4.combined);
        }
    }
}
