//! Command-line driver for cable-system experiments.
//!
//! Subcommands build graph/mesh artifacts, run the inequality verifiers,
//! scan quasi-Riesz operator norms across generations, and dump the exact
//! skeleton algebra. Reports are written as JSON (machine) and CSV (plot)
//! with the configuration hash embedded. Exit codes: 0 pass, 1 verification
//! fail, 2 input error, 3 capacity.

mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cablesys::exact::{rat, rat_string, rh_counterexample};
use cablesys::experiment as exp;
use cablesys::graph::Family;
use cablesys::laws::ScalingLaws;
use cablesys::report::{write_heat_csv, InequalityFit};
use cablesys::scalar::to_f64;
use cablesys::Real;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "cablesys", version, about = "Fractal cable-system laboratory")]
struct Cli {
    /// plain key=value config file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["vicsek", "sierpinski", "line"])]
    family: Option<String>,
    /// Vicsek dimension N >= 2
    #[arg(long = "N", global = true)]
    n_dim: Option<u32>,
    /// generation of the core
    #[arg(long = "gen", global = true)]
    generation: Option<u32>,
    /// segments per cable
    #[arg(long, global = true)]
    mesh_k: Option<u32>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// report directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// rayon worker threads (0 = automatic)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    budget_nodes: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the graph and mesh artifacts (JSON graph, edge list, COO operator)
    Build,
    /// Run one inequality verification scan
    Verify {
        #[arg(value_enum)]
        which: Which,
    },
    /// Quasi-Riesz operator norm trend across generations
    Riesz {
        /// generations to scan (defaults per family)
        #[arg(long, value_delimiter = ',')]
        generations: Option<Vec<u32>>,
        /// exponent of the part at infinity; default (1 - alpha/beta)/2
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Exact skeleton algebra: midpoint weights and the reverse-Holder
    /// counterexample table, in num/den form
    Exact {
        /// largest counterexample index n
        #[arg(long, default_value_t = 6)]
        max_n: u32,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Which {
    Vphi,
    Fk,
    Ls,
    Mv,
    Rh,
    Grh,
    Poisson,
    Ghk,
    Uhk,
    Davies,
    Pi,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        if let Err(e) = cfg.load_file(path) {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    }
    let flag_sets: Vec<(&str, Option<String>)> = vec![
        ("family", cli.family.clone()),
        ("N", cli.n_dim.map(|v| v.to_string())),
        ("gen", cli.generation.map(|v| v.to_string())),
        ("mesh_k", cli.mesh_k.map(|v| v.to_string())),
        ("seed", cli.seed.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(|v| v.display().to_string())),
        ("workers", cli.workers.map(|v| v.to_string())),
        ("budget_nodes", cli.budget_nodes.map(|v| v.to_string())),
    ];
    for (k, v) in flag_sets {
        if let Some(v) = v {
            if let Err(e) = cfg.set(k, &v) {
                eprintln!("flag error: {e:#}");
                return ExitCode::from(2);
            }
        }
    }
    if cfg.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global();
    }
    match run(&cli.command, &cfg) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<cablesys::Error>() {
                Some(cablesys::Error::Capacity { .. }) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

/// Envelope written around every JSON report.
#[derive(serde::Serialize)]
struct Envelope<T: serde::Serialize> {
    config: String,
    config_sha256: String,
    report: T,
}

fn write_report<T: serde::Serialize>(
    cfg: &ExperimentConfig,
    name: &str,
    report: &T,
) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("{name}.json"));
    let env = Envelope {
        config: cfg.canonical(),
        config_sha256: cfg.hash(),
        report,
    };
    let f = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(f, &env)?;
    Ok(path)
}

fn write_fit(cfg: &ExperimentConfig, name: &str, fit: &InequalityFit) -> anyhow::Result<()> {
    write_report(cfg, name, fit)?;
    fit.write_csv(&cfg.out.join(format!("{name}.csv")))?;
    Ok(())
}

fn run(cmd: &Command, cfg: &ExperimentConfig) -> anyhow::Result<bool> {
    match cmd {
        Command::Build => cmd_build(cfg),
        Command::Verify { which } => cmd_verify(cfg, *which),
        Command::Riesz {
            generations,
            epsilon,
        } => cmd_riesz(cfg, generations.clone(), *epsilon),
        Command::Exact { max_n } => cmd_exact(cfg, *max_n),
    }
}

fn cmd_build(cfg: &ExperimentConfig) -> anyhow::Result<bool> {
    let gen = cfg.generation_or_default();
    let graph = cablesys::build(cfg.family, gen, cfg.budget_nodes)?;
    std::fs::create_dir_all(&cfg.out)?;
    let base = format!("{}_{gen}", cfg.family.name());
    let gpath = cfg.out.join(format!("{base}.json"));
    serde_json::to_writer(BufWriter::new(File::create(&gpath)?), &graph.to_json())?;
    let mut epath = BufWriter::new(File::create(cfg.out.join(format!("{base}.edges")))?);
    graph.write_edge_list(&mut epath)?;
    let mesh: cablesys::Mesh<Real> =
        cablesys::refine(&std::sync::Arc::new(graph), cfg.mesh_k, cfg.budget_nodes)?;
    let mut cpath = BufWriter::new(File::create(
        cfg.out.join(format!("{base}_k{}.coo", cfg.mesh_k)),
    )?);
    mesh.write_stiffness_coo(&mut cpath)?;
    println!(
        "build {}: {} vertices, {} edges, mesh k={} with {} nodes -> {}",
        cfg.family.name(),
        mesh.graph.vertex_count(),
        mesh.graph.edge_count(),
        cfg.mesh_k,
        mesh.node_count(),
        cfg.out.display()
    );
    Ok(true)
}

fn dichotomy_preset(family: Family) -> (u32, Vec<f64>, usize) {
    match family {
        Family::Sierpinski => (8, exp::radius_grid(8.0, 64.0), 3),
        Family::Vicsek { .. } => (6, exp::radius_grid(8.0, 128.0), 4),
        Family::Line => (64, exp::radius_grid(2.0, 8.0), 2),
    }
}

fn envelope_preset(family: Family) -> (u32, u32, Vec<f64>) {
    match family {
        Family::Sierpinski => (5, 2, exp::decay_time_grid(family, 64.0, 7)),
        Family::Vicsek { .. } => (
            4,
            2,
            (0..7)
                .map(|i| 16.0 * (240.0f64 / 16.0).powf(i as f64 / 6.0))
                .collect(),
        ),
        Family::Line => (32, 2, exp::decay_time_grid(family, 64.0, 7)),
    }
}

fn cmd_verify(cfg: &ExperimentConfig, which: Which) -> anyhow::Result<bool> {
    let family = cfg.family;
    let laws: ScalingLaws<Real> = ScalingLaws::for_family(family);
    let budget = cfg.budget_nodes;
    match which {
        Which::Vphi => {
            let (gen, r_max) = match family {
                Family::Sierpinski => (cfg.generation.unwrap_or(8), 64.0),
                Family::Vicsek { .. } => (cfg.generation.unwrap_or(6), 150.0),
                Family::Line => (cfg.generation.unwrap_or(64), 16.0),
            };
            let fit = exp::volume_scan(family, gen, r_max, 4, budget)?;
            let slope = fit.trend_slope.unwrap_or(f64::NAN);
            let alpha = to_f64(laws.alpha);
            let pass = fit.fitted_constant.is_finite() && (slope / alpha - 1.0).abs() <= 0.10;
            write_fit(cfg, "vphi", &fit)?;
            println!(
                "V(Phi): C_R = {:.4}, volume exponent {:.4} (alpha = {alpha:.4}) -> {}",
                fit.fitted_constant,
                slope,
                verdict(pass)
            );
            Ok(pass)
        }
        Which::Fk => {
            let gen = cfg.generation.unwrap_or(4);
            let mesh = exp::build_mesh(family, gen, cfg.mesh_k, budget)?;
            let centers = exp::ring_rich_centers(&mesh, 2, 4.0);
            let balls: Vec<(usize, f64)> =
                centers.iter().flat_map(|&c| [(c, 2.0), (c, 4.0)]).collect();
            let fits = cablesys::elliptic::verify_faber_krahn(
                &mesh,
                &laws,
                &balls,
                &[0.5, 0.75, 1.0],
                &[0.5, 2.0 / 3.0, 0.75],
            )?;
            let best = fits
                .iter()
                .max_by(|a, b| a.fitted_constant.total_cmp(&b.fitted_constant))
                .unwrap();
            let pass = best.fitted_constant > 0.0;
            for fit in &fits {
                let nu = fit.exponents["nu"];
                write_fit(cfg, &format!("fk_nu{nu:.3}"), fit)?;
            }
            println!(
                "FK(Psi): best C_F = {:.4} at nu = {:.3} -> {}",
                best.fitted_constant,
                best.exponents["nu"],
                verdict(pass)
            );
            Ok(pass)
        }
        Which::Ls => {
            let gen = cfg.generation.unwrap_or(4);
            let mesh = exp::build_mesh(family, gen, cfg.mesh_k, budget)?;
            let centers = exp::ring_rich_centers(&mesh, 2, 4.0);
            let plan = cablesys::elliptic::BallPlan {
                balls: centers.iter().flat_map(|&c| [(c, 2.0), (c, 4.0)]).collect(),
                samples_per_ball: cfg.samples.min(60),
                seed: cfg.seed,
                dipole_samples: false,
            };
            let fit = cablesys::elliptic::verify_sobolev(&mesh, &laws, &plan, 4.0)?;
            let pass = fit.fitted_constant.is_finite() && fit.fitted_constant > 0.0;
            write_fit(cfg, "ls", &fit)?;
            println!(
                "LS(Psi,q=4): C_L = {:.4} over {} samples -> {}",
                fit.fitted_constant,
                fit.samples.len(),
                verdict(pass)
            );
            Ok(pass)
        }
        Which::Mv | Which::Rh | Which::Grh => {
            let (gen, radii, centers) = dichotomy_preset(family);
            let gen = cfg.generation.unwrap_or(gen);
            let scan =
                exp::rh_dichotomy(family, gen, &radii, centers, cfg.samples, cfg.seed, budget)?;
            let enough = scan.mean_value.samples.len() >= 10;
            match which {
                Which::Mv => {
                    let fit = scan.mean_value;
                    let pass = enough && fit.fitted_constant.is_finite();
                    write_fit(cfg, "mv", &fit)?;
                    println!(
                        "mean value: C = {:.4} over {} samples -> {}",
                        fit.fitted_constant,
                        fit.samples.len(),
                        verdict(pass)
                    );
                    Ok(pass)
                }
                Which::Rh => {
                    let fit = scan.reverse_holder;
                    let slope = fit.trend_slope.unwrap_or(f64::NAN);
                    write_fit(cfg, "rh", &fit)?;
                    match family {
                        Family::Sierpinski => {
                            // RH fails here: the fitted constant grows like
                            // r^{1-(beta-alpha)} = r^{log2(6/5)}
                            let target = 1.0 - (to_f64(laws.beta) - to_f64(laws.alpha));
                            let pass = enough && (slope - target).abs() <= 0.15;
                            println!(
                                "RH: FAIL-EXPECTED, fitted constant grows at exponent {slope:.3} \
                                 (predicted {target:.3}) -> {}",
                                verdict(pass)
                            );
                            Ok(pass)
                        }
                        _ => {
                            let pass = enough && slope.abs() <= 0.10;
                            println!(
                                "RH: bounded, trend slope {slope:.3} (|.| <= 0.1) -> {}",
                                verdict(pass)
                            );
                            Ok(pass)
                        }
                    }
                }
                _ => {
                    let fit = scan.generalized_reverse_holder;
                    let slope = fit.trend_slope.unwrap_or(f64::NAN);
                    let pass = enough && slope.abs() <= 0.10;
                    write_fit(cfg, "grh", &fit)?;
                    println!(
                        "GRH: C_H = {:.4}, trend slope {slope:.3} (|.| <= 0.1) -> {}",
                        fit.fitted_constant,
                        verdict(pass)
                    );
                    Ok(pass)
                }
            }
        }
        Which::Poisson => {
            let gen = cfg.generation.unwrap_or(5);
            let mesh = exp::build_mesh(family, gen, cfg.mesh_k, budget)?;
            let centers = exp::ring_rich_centers(&mesh, 2, 8.0);
            let plan = cablesys::elliptic::BallPlan {
                balls: centers.iter().flat_map(|&c| [(c, 4.0), (c, 8.0)]).collect(),
                samples_per_ball: cfg.samples.min(24),
                seed: cfg.seed,
                dipole_samples: false,
            };
            let mut pass = true;
            for (name, kind) in [
                ("one", cablesys::elliptic::SourceKind::One),
                (
                    "indicator",
                    cablesys::elliptic::SourceKind::Indicator { theta: 0.5 },
                ),
                ("random", cablesys::elliptic::SourceKind::Random),
            ] {
                let fp =
                    cablesys::elliptic::verify_poisson_pointwise(&mesh, &laws, &plan, 2.0, kind)?;
                let fg =
                    cablesys::elliptic::verify_poisson_gradient(&mesh, &laws, &plan, 2.0, kind)?;
                pass &= fp.fitted_constant.is_finite() && fg.fitted_constant.is_finite();
                write_fit(cfg, &format!("poisson_pointwise_{name}"), &fp)?;
                write_fit(cfg, &format!("poisson_gradient_{name}"), &fg)?;
                println!(
                    "poisson ({name}): pointwise C = {:.4}, gradient C = {:.4}",
                    fp.fitted_constant, fg.fitted_constant
                );
            }
            println!("poisson bounds -> {}", verdict(pass));
            Ok(pass)
        }
        Which::Pi => {
            let gen = cfg.generation.unwrap_or(4);
            let mesh = exp::build_mesh(family, gen, cfg.mesh_k, budget)?;
            let centers = exp::ring_rich_centers(&mesh, 2, 4.0);
            let balls: Vec<(usize, f64)> = centers
                .iter()
                .flat_map(|&c| [(c, 2.0), (c, 4.0)])
                .collect();
            let fit = cablesys::elliptic::verify_poincare(&mesh, &laws, &balls)?;
            let pass = fit.fitted_constant.is_finite() && !fit.samples.is_empty();
            write_fit(cfg, "pi", &fit)?;
            println!(
                "PI(Psi), same-ball variant: C_P = {:.4} -> {}",
                fit.fitted_constant,
                verdict(pass)
            );
            Ok(pass)
        }
        Which::Uhk | Which::Davies | Which::Ghk => {
            let (gen, k, times) = envelope_preset(family);
            let gen = cfg.generation.unwrap_or(gen);
            let env = exp::heat_envelopes(family, gen, k, 2, &times, None, budget)?;
            std::fs::create_dir_all(&cfg.out)?;
            write_heat_csv(&cfg.out.join("heat_samples.csv"), &env.rows)?;
            let (fit, name, pass) = match which {
                Which::Uhk => {
                    let ok = env.uhk.fitted_constant <= 1.0 + 1e-12
                        && env.nle.fitted_constant > 0.0
                        && env.uhk.samples.len() >= 10;
                    write_fit(cfg, "nle", &env.nle)?;
                    println!(
                        "NLE: near-diagonal lower constant c = {:.4}",
                        env.nle.fitted_constant
                    );
                    (env.uhk, "uhk", ok)
                }
                Which::Davies => {
                    let ok =
                        env.davies.fitted_constant.is_finite() && env.davies.samples.len() >= 10;
                    (env.davies, "davies", ok)
                }
                _ => {
                    let ok = env.ghk.fitted_constant.is_finite() && env.ghk.samples.len() >= 10;
                    (env.ghk, "ghk", ok)
                }
            };
            write_fit(cfg, name, &fit)?;
            println!(
                "{}: fitted constant {:.4} at C1 = {}, C2 = {} over {} samples -> {}",
                fit.name,
                fit.fitted_constant,
                env.constants.c1,
                env.constants.c2,
                fit.samples.len(),
                verdict(pass)
            );
            Ok(pass)
        }
    }
}

fn cmd_riesz(
    cfg: &ExperimentConfig,
    generations: Option<Vec<u32>>,
    epsilon: Option<f64>,
) -> anyhow::Result<bool> {
    let gens = generations.unwrap_or_else(|| match cfg.family {
        Family::Sierpinski => vec![4, 5, 6, 7],
        Family::Vicsek { .. } => vec![3, 4, 5],
        Family::Line => vec![16, 32, 64],
    });
    let epsilon = epsilon.or(cfg.epsilon);
    let trends = exp::riesz_trend(
        cfg.family,
        &gens,
        cfg.mesh_k,
        epsilon,
        &cfg.p_values,
        200,
        cfg.seed,
        cfg.budget_nodes,
    )?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut pass = true;
    for report in &trends.combined {
        report.write_csv(&cfg.out.join(format!("riesz_p{}.csv", report.p)))?;
        write_report(cfg, &format!("riesz_p{}", report.p), report)?;
        pass &= report.slope <= 0.05;
        println!(
            "quasi-Riesz {} eps={:.4} p={}: slope {:+.4} -> {}",
            cfg.family.name(),
            trends.epsilon,
            report.p,
            report.slope,
            report.verdict
        );
    }
    // the local part alone is an L^2 contraction
    for (g, scans) in &trends.per_generation {
        if let Some(p2) = scans.iter().find(|s| s.p == 2.0) {
            pass &= p2.local <= 1.0 + 1e-6;
            println!("  gen {g}: local Riesz p=2 norm {:.6}", p2.local);
        }
    }
    Ok(pass)
}

fn cmd_exact(cfg: &ExperimentConfig, max_n: u32) -> anyhow::Result<bool> {
    #[derive(serde::Serialize)]
    struct ExactReport {
        midpoints_depth1: Vec<String>,
        corner_weights_depth2: Vec<String>,
        counterexample: Vec<CounterRow>,
    }
    #[derive(serde::Serialize)]
    struct CounterRow {
        n: u32,
        gradient: String,
        avg_abs_u: String,
        rh_ratio: String,
    }
    let h = cablesys::exact::sg_extend(rat(1, 1), rat(0, 1), rat(0, 1), 1)?;
    let midpoints = [[1i64, 0], [1, 1], [0, 1]]
        .iter()
        .map(|c| rat_string(h.value_at(&c[..]).unwrap()))
        .collect();
    let basis: Vec<String> = (0..3)
        .map(|i| {
            let mut a = [rat(0, 1), rat(0, 1), rat(0, 1)];
            a[i] = rat(1, 1);
            let [a1, a2, a3] = a;
            let h = cablesys::exact::sg_extend(a1, a2, a3, 2).unwrap();
            rat_string(h.value_at(&[1, 0]).unwrap())
        })
        .collect();
    let mut rows = Vec::new();
    for n in 0..=max_n {
        let c = rh_counterexample(n)?;
        rows.push(CounterRow {
            n,
            gradient: rat_string(&c.gradient),
            avg_abs_u: rat_string(&c.avg_abs_u),
            rh_ratio: rat_string(&c.rh_ratio),
        });
    }
    let report = ExactReport {
        midpoints_depth1: midpoints,
        corner_weights_depth2: basis,
        counterexample: rows,
    };
    let path = write_report(cfg, "exact", &report)?;
    println!("exact algebra written to {}", path.display());
    Ok(true)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
