//! Command-line driver: configuration, parameter sweeps, deterministic
//! seeding, parallel path farms, and result emission (results.csv +
//! summary.json against the shipped schema).

pub mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use config::ExperimentConfig;
use splap::estimators::{aggregate, AggregateReport, FunctionalValues};
use splap::grid::Grid;
use splap::model::ModelSpec;
use splap::noise::{NoiseModel, NoiseOp};
use splap::solver::{build_initial, run_path, InitialData, PathRun, SolverConfig};
use splap::EstimatorConfig;

pub const SCHEMA_NAME: &str = "splap-summary";
pub const SCHEMA_VERSION: u32 = 1;
/// Worker-count override; degree of parallelism never affects results.
pub const WORKERS_ENV: &str = "SPLAP_WORKERS";

#[derive(Parser)]
#[command(name = "splap", version, about = "Stochastic p-Laplacian simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides outputs.directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Path count override.
    #[arg(long, value_name = "N")]
    paths: Option<u64>,
    /// Base seed override.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run at fixed parameters.
    Simulate(Common),
    /// Energy-triple uniformity across an epsilon sweep (p < 2).
    EpsStudy(Common),
    /// Functional stability across grid / tau / mode-count refinements.
    Convergence(Common),
    /// Exponent ladder, optionally evaluating the first rungs.
    Moser(Common),
    /// Certify the truncated potential family h_L.
    HlCheck(Common),
    /// Ellipticity and noise growth certification.
    BoundsCheck(Common),
}

pub fn run() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().with_context(|| format!("bad {}", WORKERS_ENV))?;
        if n >= 1 {
            splap::farm::configure_workers(n);
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(c) => cmd_simulate(&load(&c)?),
        Command::EpsStudy(c) => cmd_eps_study(&load(&c)?),
        Command::Convergence(c) => cmd_convergence(&load(&c)?),
        Command::Moser(c) => cmd_moser(&load(&c)?),
        Command::HlCheck(c) => cmd_hl_check(&load(&c)?),
        Command::BoundsCheck(c) => cmd_bounds_check(&load(&c)?),
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    out_dir: PathBuf,
}

fn load(common: &Common) -> Result<Loaded> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(p) = common.paths {
        cfg.mc.n_paths = p;
    }
    if let Some(s) = common.seed {
        cfg.mc.base_seed = s;
    }
    let out_dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.outputs.directory));
    cfg.validate()?;
    Ok(Loaded { cfg, out_dir })
}

struct StudyOutcome {
    per_path: Vec<Result<FunctionalValues, String>>,
    aggregate: AggregateReport,
    n_failed: u64,
}

/// One Monte Carlo study at fixed parameters. Deterministic in
/// (settings, base_seed): the reduction is over path-index order regardless
/// of scheduling.
fn run_study(
    model: &ModelSpec,
    grid: Grid,
    noise: &NoiseModel,
    solver: &SolverConfig,
    est: &EstimatorConfig,
    initial: &InitialData,
    n_paths: u64,
    base_seed: u64,
) -> Result<StudyOutcome> {
    let op = NoiseOp::new(noise.clone(), grid, model.target_dim);
    let u0 = build_initial(initial, grid, model.target_dim);
    let per_path = splap::farm::run_batch(n_paths, |path_index| {
        let run = PathRun {
            model,
            noise_op: &op,
            cfg: solver,
            estimators: est,
            seed: base_seed,
            path_index,
            store_trajectory: false,
            forcing: None,
        };
        run_path(&u0, &run).map(|o| o.functionals).map_err(|e| e.to_string())
    });
    let ok: Vec<FunctionalValues> = per_path.iter().filter_map(|r| r.clone().ok()).collect();
    if ok.is_empty() {
        bail!("all {} paths failed; first error: {}", n_paths, per_path[0].clone().unwrap_err());
    }
    let aggregate = aggregate(&ok)?;
    let n_failed = n_paths - ok.len() as u64;
    Ok(StudyOutcome { per_path, aggregate, n_failed })
}

fn write_results_csv(dir: &Path, per_path: &[Result<FunctionalValues, String>]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("results.csv"))?;
    writeln!(f, "path_index,functional_id,value")?;
    for (i, r) in per_path.iter().enumerate() {
        if let Ok(vals) = r {
            for (k, v) in vals {
                writeln!(f, "{},{},{:.17e}", i, k, v)?;
            }
        }
    }
    Ok(())
}

fn failed_list(per_path: &[Result<FunctionalValues, String>]) -> Vec<serde_json::Value> {
    per_path
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            r.as_ref().err().map(|e| json!({ "path_index": i, "error": e }))
        })
        .collect()
}

fn write_summary(
    dir: &Path,
    command: &str,
    base_seed: u64,
    params: serde_json::Value,
    results: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let doc = json!({
        "schema": SCHEMA_NAME,
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "base_seed": base_seed,
        "params": params,
        "results": results,
    });
    let mut f = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &doc)?;
    writeln!(f)?;
    Ok(())
}

fn params_json(
    model: &ModelSpec,
    n: usize,
    noise: &NoiseModel,
    solver: &SolverConfig,
    loaded: &Loaded,
) -> serde_json::Value {
    json!({
        "model": model,
        "grid": { "n": n, "margin": loaded.cfg.grid.margin, "weight_kind": loaded.cfg.grid.weight_kind },
        "noise": noise,
        "solver": solver,
        "initial": loaded.cfg.initial,
        "n_paths": loaded.cfg.mc.n_paths,
    })
}

fn check_failures(n_failed: u64, n_paths: u64) -> Result<()> {
    if n_failed * 100 > n_paths {
        bail!("{} of {} paths failed (> 1%)", n_failed, n_paths);
    }
    Ok(())
}

#[derive(Serialize)]
struct AggregateJson<'a> {
    n_paths: usize,
    n_failed: u64,
    stats: &'a std::collections::BTreeMap<String, splap::Stats>,
}

fn cmd_simulate(loaded: &Loaded) -> Result<()> {
    let cfg = &loaded.cfg;
    let model = cfg.model_spec(cfg.scalar_epsilon()?)?;
    let grid = Grid::new(model.d, cfg.scalar_n()?)?;
    let noise = cfg.noise_model(cfg.noise.k_modes);
    let solver = cfg.solver_config(cfg.scalar_tau()?)?;
    let est = cfg.estimator_config()?;
    let out = run_study(
        &model,
        grid,
        &noise,
        &solver,
        &est,
        &cfg.initial,
        cfg.mc.n_paths,
        cfg.mc.base_seed,
    )?;
    write_results_csv(&loaded.out_dir, &out.per_path)?;
    let results = json!({
        "aggregate": AggregateJson {
            n_paths: out.aggregate.n_paths,
            n_failed: out.n_failed,
            stats: &out.aggregate.stats,
        },
        "failed_paths": failed_list(&out.per_path),
    });
    write_summary(
        &loaded.out_dir,
        "simulate",
        cfg.mc.base_seed,
        params_json(&model, grid.n, &noise, &solver, loaded),
        results,
    )?;
    if cfg.outputs.dump_fields {
        dump_final_field(loaded, &model, grid, &noise, &solver)?;
    }
    for (k, s) in &out.aggregate.stats {
        println!("{}: mean {:.6e} se {:?}", k, s.mean, s.se);
    }
    check_failures(out.n_failed, cfg.mc.n_paths)
}

/// Re-run path 0 storing the trajectory and snapshot the final state.
fn dump_final_field(
    loaded: &Loaded,
    model: &ModelSpec,
    grid: Grid,
    noise: &NoiseModel,
    solver: &SolverConfig,
) -> Result<()> {
    let cfg = &loaded.cfg;
    let op = NoiseOp::new(noise.clone(), grid, model.target_dim);
    let u0 = build_initial(&cfg.initial, grid, model.target_dim);
    let run = PathRun {
        model,
        noise_op: &op,
        cfg: solver,
        estimators: &EstimatorConfig::none(),
        seed: cfg.mc.base_seed,
        path_index: 0,
        store_trajectory: true,
        forcing: None,
    };
    let traj = run_path(&u0, &run)
        .map_err(|e| anyhow::anyhow!("snapshot path failed: {}", e))?
        .trajectory
        .expect("trajectory requested");
    let dir = loaded.out_dir.join("fields");
    fs::create_dir_all(&dir)?;
    let mut f = fs::File::create(dir.join("final_path0.csv"))?;
    traj.states.last().expect("nonempty").write_csv(&mut f)?;
    Ok(())
}

fn energy_key_augment(per_path: &mut [Result<FunctionalValues, String>]) {
    for r in per_path.iter_mut().flatten() {
        let e = r.get("sup_u2").copied().unwrap_or(0.0)
            + r.get("int_gradp").copied().unwrap_or(0.0);
        r.insert("energy_sum".into(), e);
    }
}

fn cmd_eps_study(loaded: &Loaded) -> Result<()> {
    let cfg = &loaded.cfg;
    let sweep: Vec<f64> = match (&cfg.model.epsilon_sweep, cfg.model.epsilon) {
        (Some(s), _) => s.clone(),
        (None, Some(e)) => vec![e],
        (None, None) => bail!("eps-study needs model.epsilon_sweep (or model.epsilon)"),
    };
    if cfg.model.p >= 2.0 {
        eprintln!(
            "warning: p = {} >= 2; the regularization study is redundant there",
            cfg.model.p
        );
    }
    let grid = Grid::new(cfg.model.d, cfg.scalar_n()?)?;
    let noise = cfg.noise_model(cfg.noise.k_modes);
    let solver = cfg.solver_config(cfg.scalar_tau()?)?;
    let est = cfg.estimator_config()?;
    let mut rows = Vec::new();
    let mut energy_cis = Vec::new();
    let mut eps_terms = Vec::new();
    let mut total_failed = 0u64;
    for (i, &eps) in sweep.iter().enumerate() {
        let model = cfg.model_spec(eps)?;
        let mut out = run_study(
            &model,
            grid,
            &noise,
            &solver,
            &est,
            &cfg.initial,
            cfg.mc.n_paths,
            cfg.mc.base_seed,
        )?;
        energy_key_augment(&mut out.per_path);
        let ok: Vec<FunctionalValues> =
            out.per_path.iter().filter_map(|r| r.clone().ok()).collect();
        let agg = aggregate(&ok)?;
        total_failed += out.n_failed;
        write_results_csv(&loaded.out_dir.join(format!("eps_{}", i)), &out.per_path)?;
        let e = &agg.stats["energy_sum"];
        energy_cis.push((e.mean, e.ci_lo, e.ci_hi));
        eps_terms.push(agg.stats["eps_int_grad2"].mean);
        println!(
            "eps {:.3e}: energy {:.6e} [{:.6e}, {:.6e}]  eps_int_grad2 {:.6e}",
            eps,
            e.mean,
            e.ci_lo.unwrap_or(f64::NAN),
            e.ci_hi.unwrap_or(f64::NAN),
            agg.stats["eps_int_grad2"].mean
        );
        rows.push(json!({
            "epsilon": eps,
            "n_failed": out.n_failed,
            "stats": agg.stats,
        }));
    }
    let verdict = if sweep.len() >= 2 {
        let means: Vec<f64> = energy_cis.iter().map(|r| r.0).collect();
        let ratio = means.iter().cloned().fold(f64::MIN, f64::max)
            / means.iter().cloned().fold(f64::MAX, f64::min);
        let overlap = energy_cis.iter().all(|a| {
            energy_cis.iter().all(|b| {
                match (a.1, a.2, b.1, b.2) {
                    (Some(alo), Some(ahi), Some(blo), Some(bhi)) => alo <= bhi && blo <= ahi,
                    _ => false,
                }
            })
        });
        let monotone = eps_terms.windows(2).all(|w| w[1] < w[0]);
        println!(
            "verdict: energy ratio {:.4}, CIs overlap: {}, eps term decreasing: {}",
            ratio, overlap, monotone
        );
        json!({ "energy_ratio": ratio, "ci_overlap": overlap, "eps_term_decreasing": monotone })
    } else {
        serde_json::Value::Null
    };
    let model0 = cfg.model_spec(sweep[0])?;
    write_summary(
        &loaded.out_dir,
        "eps-study",
        cfg.mc.base_seed,
        params_json(&model0, grid.n, &noise, &solver, loaded),
        json!({ "epsilon_sweep": sweep, "rows": rows, "verdict": verdict }),
    )?;
    check_failures(total_failed, cfg.mc.n_paths * sweep.len() as u64)
}

fn cmd_convergence(loaded: &Loaded) -> Result<()> {
    let cfg = &loaded.cfg;
    let n_list = cfg.grid.n_sweep.clone().unwrap_or_else(|| vec![cfg.grid.n.expect("validated")]);
    let tau_list =
        cfg.solver.tau_sweep.clone().unwrap_or_else(|| vec![cfg.solver.tau.expect("validated")]);
    let k_list = cfg.noise.k_sweep.clone().unwrap_or_else(|| vec![cfg.noise.k_modes]);
    let axes_with_sweep =
        [n_list.len() >= 2, tau_list.len() >= 2, k_list.len() >= 2].iter().filter(|&&b| b).count();
    if axes_with_sweep == 0 {
        bail!("convergence needs >= 2 sweep points on at least one axis");
    }
    let eps = cfg.scalar_epsilon()?;
    let model = cfg.model_spec(eps)?;
    let est = cfg.estimator_config()?;
    let mut rows = Vec::new();
    let mut mean_rows: Vec<FunctionalValues> = Vec::new();
    let mut total_failed = 0u64;
    let mut total_paths = 0u64;
    let mut level = 0usize;
    for &n in &n_list {
        for &tau in &tau_list {
            for &k in &k_list {
                let grid = Grid::new(model.d, n)?;
                let noise = cfg.noise_model(k);
                let solver = cfg.solver_config(tau)?;
                let out = run_study(
                    &model,
                    grid,
                    &noise,
                    &solver,
                    &est,
                    &cfg.initial,
                    cfg.mc.n_paths,
                    cfg.mc.base_seed,
                )?;
                total_failed += out.n_failed;
                total_paths += cfg.mc.n_paths;
                write_results_csv(&loaded.out_dir.join(format!("level_{}", level)), &out.per_path)?;
                println!(
                    "level {} (n = {}, tau = {:.3e}, K = {}):",
                    level, n, tau, k
                );
                for (key, s) in &out.aggregate.stats {
                    println!("  {}: {:.6e}", key, s.mean);
                }
                mean_rows
                    .push(out.aggregate.stats.iter().map(|(k2, s)| (k2.clone(), s.mean)).collect());
                rows.push(json!({
                    "level": level,
                    "n": n,
                    "tau": tau,
                    "k_modes": k,
                    "n_failed": out.n_failed,
                    "stats": out.aggregate.stats,
                }));
                level += 1;
            }
        }
    }
    // successive-level mean ratios are meaningful when a single axis is swept
    let ratios: Vec<serde_json::Value> = if axes_with_sweep == 1 {
        mean_rows
            .windows(2)
            .map(|w| {
                let r: FunctionalValues = w[0]
                    .iter()
                    .filter_map(|(key, &a)| {
                        let b = w[1][key];
                        if a != 0.0 {
                            Some((key.clone(), b / a))
                        } else {
                            None
                        }
                    })
                    .collect();
                json!(r)
            })
            .collect()
    } else {
        Vec::new()
    };
    if !ratios.is_empty() {
        println!("successive ratios: {}", json!(ratios));
    }
    let noise = cfg.noise_model(k_list[0]);
    let solver = cfg.solver_config(tau_list[0])?;
    write_summary(
        &loaded.out_dir,
        "convergence",
        cfg.mc.base_seed,
        params_json(&model, n_list[0], &noise, &solver, loaded),
        json!({ "rows": rows, "successive_ratios": ratios }),
    )?;
    check_failures(total_failed, total_paths)
}

fn cmd_moser(loaded: &Loaded) -> Result<()> {
    let cfg = &loaded.cfg;
    let ladder = splap::moser_ladder(cfg.model.p, cfg.model.d, cfg.moser.k_max)?;
    println!("k  alpha_k  q_k = p + alpha_k");
    for (k, (a, q)) in ladder.alphas.iter().zip(&ladder.qs).enumerate() {
        println!("{}  {}  {}", k, a, q);
    }
    let mut results = json!({ "ladder": ladder });
    if cfg.moser.evaluate_rungs {
        let rungs: Vec<f64> =
            ladder.qs.iter().take(cfg.moser.rungs).copied().collect();
        let model = cfg.model_spec(cfg.scalar_epsilon()?)?;
        let grid = Grid::new(model.d, cfg.scalar_n()?)?;
        let noise = cfg.noise_model(cfg.noise.k_modes);
        let solver = cfg.solver_config(cfg.scalar_tau()?)?;
        let mut est = cfg.estimator_config()?;
        est.higher_integrability_q = rungs.clone();
        let out = run_study(
            &model,
            grid,
            &noise,
            &solver,
            &est,
            &cfg.initial,
            cfg.mc.n_paths,
            cfg.mc.base_seed,
        )?;
        write_results_csv(&loaded.out_dir, &out.per_path)?;
        for (k, s) in &out.aggregate.stats {
            if k.starts_with("higher_integrability") {
                println!("{}: mean {:.6e}", k, s.mean);
            }
        }
        results["rungs"] = json!({ "q": rungs, "stats": out.aggregate.stats });
        check_failures(out.n_failed, cfg.mc.n_paths)?;
    }
    write_summary(
        &loaded.out_dir,
        "moser",
        cfg.mc.base_seed,
        json!({ "p": cfg.model.p, "d": cfg.model.d, "k_max": cfg.moser.k_max }),
        results,
    )
}

fn cmd_hl_check(loaded: &Loaded) -> Result<()> {
    let cfg = &loaded.cfg;
    let mut families = Vec::new();
    let mut stability = Vec::new();
    let mut all_pass = true;
    for &alpha in &cfg.hl.alphas {
        let mut c_lo = f64::INFINITY;
        let mut c_hi = 0.0f64;
        for &l in &cfg.hl.ls {
            let fam = splap::HlFamily::new(alpha, l)?;
            let rep = splap::certify_lemma(&fam, cfg.hl.n_grid, cfg.mc.base_seed)?;
            println!(
                "alpha {} L {}: {}  (a {} b {} c {} d {}; C_c = {:.6})",
                alpha,
                l,
                if rep.pass { "PASS" } else { "FAIL" },
                rep.item_a.pass,
                rep.item_b.pass,
                rep.item_c.pass,
                rep.item_d.pass,
                rep.item_c.constant
            );
            all_pass &= rep.pass;
            c_lo = c_lo.min(rep.item_c.constant);
            c_hi = c_hi.max(rep.item_c.constant);
            families.push(rep);
        }
        let ratio = c_hi / c_lo;
        println!("alpha {}: item-c constant spread across L: {:.4}", alpha, ratio);
        stability.push(json!({ "alpha": alpha, "item_c_spread": ratio }));
    }
    write_summary(
        &loaded.out_dir,
        "hl-check",
        cfg.mc.base_seed,
        json!({ "alphas": cfg.hl.alphas, "ls": cfg.hl.ls, "n_grid": cfg.hl.n_grid }),
        json!({ "families": families, "stability": stability, "pass": all_pass }),
    )?;
    if !all_pass {
        bail!("h_L certification failed");
    }
    Ok(())
}

fn cmd_bounds_check(loaded: &Loaded) -> Result<()> {
    let cfg = &loaded.cfg;
    let eps = cfg.model.epsilon.unwrap_or(0.0);
    let model = ModelSpec {
        d: cfg.model.d,
        target_dim: cfg.model.target_dim,
        p: cfg.model.p,
        family: cfg.model.family,
        epsilon: eps,
        t_final: cfg.model.t_final,
    };
    let ell = splap::check_ellipticity(&model, cfg.bounds.n_samples, cfg.mc.base_seed)?;
    println!("ellipticity: lambda_hat {:.6}  Lambda_hat {:.6}", ell.lambda_hat, ell.lambda_hat_upper);
    let noise = cfg.noise_model(cfg.noise.k_modes);
    let growth = splap::verify_growth(
        &noise,
        cfg.model.d,
        cfg.model.target_dim,
        cfg.bounds.n_samples,
        &cfg.bounds.k_probe,
        cfg.mc.base_seed,
    )?;
    for c in &growth.conditions {
        println!("growth {}: {}", c.name, if c.pass { "PASS" } else { "FAIL" });
    }
    write_summary(
        &loaded.out_dir,
        "bounds-check",
        cfg.mc.base_seed,
        json!({ "model": model, "noise": noise, "n_samples": cfg.bounds.n_samples }),
        json!({ "ellipticity": ell, "growth": growth }),
    )?;
    if !growth.pass {
        bail!("noise growth certification failed");
    }
    Ok(())
}
