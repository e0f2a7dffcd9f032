use std::fs;
use std::io::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use boustro_core::baseline::{self, scale_for_auvs, BaselineConfig, CurvePoint};
use boustro_core::moce::{self, MoceConfig, RunSummary};
use boustro_core::objective::{evaluate, monte_carlo_nondetection, posterior_update, EffortMatrix, PathPlan};
use boustro_core::pareto::ArchiveEntry;
use boustro_core::scenario::{generate_random_scenario, load_scenario, save_scenario};
use boustro_core::units::seconds_to_hours;
use boustro_core::{Execution, GeneratorConfig, Scenario};
use clap::ValueEnum;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::report::{read_json, scenario_digest, wall_clock, write_json, PlanFile, PlanInput, RunReport};
use crate::svg::{self, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub fn generate(config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let config: GeneratorConfig = match config {
        Some(p) => read_json(p, "generator config")?,
        None => GeneratorConfig::reference(),
    };
    config.validate()?;
    let scenario = generate_random_scenario(&config, seed)?;
    save_scenario(&scenario, out)?;
    println!(
        "wrote {} ({} sources, {} tracklines, seed {seed})",
        out.display(),
        scenario.sources().len(),
        scenario.tracklines().len()
    );
    Ok(())
}

fn moce_config(path: Option<&Path>, seed: Option<u64>) -> Result<MoceConfig> {
    let mut config: MoceConfig = match path {
        Some(p) => read_json(p, "moce config")?,
        None => MoceConfig::default(),
    };
    if let Some(seed) = seed {
        config.rng_seed = seed;
    }
    config.validate().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(config)
}

fn optimize(scenario: &Scenario, config: &MoceConfig) -> Result<(Vec<ArchiveEntry<PathPlan>>, RunSummary)> {
    if scenario.tracklines().is_empty() || !EffortMatrix::build(scenario).has_coverage() {
        return Err(CliError::Infeasible(
            "no candidate trackline crosses any spill area, so no plan can reduce p_nd".into(),
        ));
    }
    let run = panic::catch_unwind(AssertUnwindSafe(|| {
        moce::run_with_progress(scenario, config, |p| {
            log::info!(
                "generation {}: archive {}, best p_nd {:.6}, {} evaluations, {:.1} s",
                p.generation,
                p.archive_size,
                p.best_p_nd,
                p.evaluations,
                p.elapsed.as_secs_f64()
            );
        })
    }));
    let (archive, summary) = run.map_err(|_| CliError::Solver("optimizer panicked".into()))?;
    if summary.evaluations > 0 && summary.discarded == summary.evaluations {
        return Err(CliError::Solver(format!(
            "all {} candidate evaluations failed in the speed solver",
            summary.evaluations
        )));
    }
    if summary.discarded > 0 {
        log::warn!("{} of {} candidates discarded", summary.discarded, summary.evaluations);
    }
    Ok((archive.into_entries(), summary))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_rows<T: Serialize>(dir: &Path, stem: &str, rows: &[T], format: Format) -> Result<PathBuf> {
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_json(&path, &rows)?;
            Ok(path)
        }
    }
}

#[derive(Serialize)]
struct FrontRow {
    p_nd: f64,
    duration_s: f64,
    plan_id: usize,
}

/// Shortest non-empty, middle and longest plan.
fn showcase(report: &RunReport) -> Vec<usize> {
    let ids: Vec<usize> = report.entries.iter().filter(|e| !e.plan.is_empty()).map(|e| e.id).collect();
    let mut pick: Vec<usize> = match ids.len() {
        0 => Vec::new(),
        n => vec![ids[0], ids[n / 2], ids[n - 1]],
    };
    pick.dedup();
    pick
}

/// Report, front table, plan files and figures for one optimized front.
fn export_front(dir: &Path, scenario: &Scenario, report: &RunReport, format: Format) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("report.json"), report)?;
    let rows: Vec<FrontRow> = report
        .entries
        .iter()
        .map(|e| FrontRow { p_nd: e.p_nd, duration_s: e.duration_s, plan_id: e.id })
        .collect();
    write_rows(dir, "pareto", &rows, format)?;

    let plans = dir.join("plans");
    create_dir(&plans)?;
    for e in &report.entries {
        let file = PlanFile::from((e, report.scenario_digest.as_str()));
        write_json(&plans.join(format!("plan-{:03}.json", e.id)), &file)?;
    }

    let points = report.entries.iter().map(|e| (seconds_to_hours(e.duration_s), e.p_nd)).collect();
    let front = Series { label: "Pareto set".into(), color: "black", dashed: false, step: false, points };
    write_text(
        &dir.join("pareto.svg"),
        &svg::chart("Pareto set", "path duration (h)", "probability of non-detection", &[front]),
    )?;
    for id in showcase(report) {
        let e = &report.entries[id];
        let title = format!("plan {id}: p_nd {:.4}, {:.2} h", e.p_nd, seconds_to_hours(e.duration_s));
        write_text(
            &dir.join(format!("trajectory-{id:03}.svg")),
            &svg::trajectory(scenario, &e.plan, &e.posteriors, &title),
        )?;
    }
    Ok(())
}

pub fn plan(
    scenario: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    format: Format,
) -> Result<()> {
    let scenario = load_scenario(scenario)?;
    let config = moce_config(config, seed)?;
    let (front, summary) = optimize(&scenario, &config)?;
    let report = RunReport::build(&scenario, &config, &front, &summary);
    export_front(out, &scenario, &report, format)?;
    let (lo, hi) = report
        .entries
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.p_nd), hi.max(e.p_nd)));
    println!(
        "front: {} plans, p_nd {lo:.6} to {hi:.6}; {} generations, {} evaluations in {:.1} s{}",
        report.entries.len(),
        summary.generations,
        summary.evaluations,
        summary.elapsed.as_secs_f64(),
        if summary.stagnated { " (stagnated)" } else { "" }
    );
    println!("wrote {}", out.display());
    Ok(())
}

/// A scenario file, or a run report carrying its scenario.
fn load_scenario_or_report(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    match serde_json::from_str::<RunReport>(&text) {
        Ok(report) => report.scenario(),
        Err(_) => Ok(Scenario::from_json(&text)?),
    }
}

#[derive(Serialize)]
struct SourceRow {
    source: u32,
    prior: f64,
    exponent: f64,
    posterior: f64,
}

#[derive(Serialize)]
struct MonteCarloOut {
    samples: u64,
    seed: u64,
    estimate: f64,
    std_error: f64,
    z_score: f64,
}

#[derive(Serialize)]
struct Evaluation {
    p_nd: f64,
    duration_s: f64,
    wall_clock_s: f64,
    stored_p_nd: Option<f64>,
    stored_duration_s: Option<f64>,
    sources: Vec<SourceRow>,
    monte_carlo: Option<MonteCarloOut>,
}

pub fn evaluate_plan(
    scenario: &Path,
    plan: &Path,
    monte_carlo: Option<u64>,
    seed: u64,
    format: Option<Format>,
) -> Result<()> {
    let scenario = load_scenario_or_report(scenario)?;
    let input: PlanInput = read_json(plan, "plan")?;
    let m = scenario.tracklines().len();
    input
        .plan()
        .validate(m, scenario.limits())
        .map_err(|e| CliError::Input(format!("plan does not fit the scenario ({m} tracklines): {e}")))?;
    let stored = match &input {
        PlanInput::Exported(f) => {
            if f.scenario_digest != scenario_digest(&scenario) {
                log::warn!("plan was exported for a different scenario (digest {})", f.scenario_digest);
            }
            Some((f.p_nd, f.duration_s))
        }
        PlanInput::Bare(_) => None,
    };
    let em = EffortMatrix::build(&scenario);
    let priors = scenario.priors();
    let eval = evaluate(input.plan(), &em, &priors, scenario.limits().tau);
    let posteriors = posterior_update(&priors, &eval);
    let sources = scenario
        .sources()
        .iter()
        .zip(eval.per_source_exponent.iter().zip(&posteriors))
        .map(|(s, (&exponent, &posterior))| SourceRow { source: s.id, prior: s.prior, exponent, posterior })
        .collect();
    let mc = monte_carlo.map(|n| {
        let est = monte_carlo_nondetection(input.plan(), &scenario, n, seed, Execution::Parallel);
        MonteCarloOut {
            samples: est.samples,
            seed,
            estimate: est.estimate,
            std_error: est.std_error,
            z_score: est.z_score(eval.p_nd),
        }
    });
    let out = Evaluation {
        p_nd: eval.p_nd,
        duration_s: eval.duration,
        wall_clock_s: wall_clock(&scenario, input.plan(), eval.duration),
        stored_p_nd: stored.map(|s| s.0),
        stored_duration_s: stored.map(|s| s.1),
        sources,
        monte_carlo: mc,
    };
    let stdout = std::io::stdout();
    match format {
        Some(Format::Json) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
        }
        Some(Format::Csv) => {
            let mut w = csv::Writer::from_writer(stdout.lock());
            for r in &out.sources {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| CliError::Input(e.to_string()))?;
        }
        None => print_evaluation(&mut stdout.lock(), &out).map_err(|e| CliError::Input(e.to_string()))?,
    }
    Ok(())
}

fn print_evaluation(w: &mut impl std::io::Write, e: &Evaluation) -> std::io::Result<()> {
    writeln!(w, "p_nd        {:.12}", e.p_nd)?;
    writeln!(w, "duration    {:.3} s ({:.3} h)", e.duration_s, seconds_to_hours(e.duration_s))?;
    writeln!(w, "wall-clock  {:.3} s incl. vertical legs at v_max (not optimized)", e.wall_clock_s)?;
    if let (Some(p), Some(d)) = (e.stored_p_nd, e.stored_duration_s) {
        writeln!(
            w,
            "stored      p_nd {p:.12} (diff {:.1e}), duration {d:.3} s (diff {:.1e})",
            e.p_nd - p,
            e.duration_s - d
        )?;
    }
    writeln!(w)?;
    writeln!(w, "{:>6}  {:>10}  {:>12}  {:>12}", "source", "prior", "exponent", "posterior")?;
    for s in &e.sources {
        writeln!(w, "{:>6}  {:>10.6}  {:>12.6}  {:>12.8}", s.source, s.prior, s.exponent, s.posterior)?;
    }
    if let Some(mc) = &e.monte_carlo {
        writeln!(w)?;
        writeln!(
            w,
            "monte-carlo {} samples (seed {}): {:.6} +/- {:.6}, z = {:.2}",
            mc.samples, mc.seed, mc.estimate, mc.std_error, mc.z_score
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct GapRow {
    auvs: usize,
    elapsed_s: f64,
    baseline_p_nd: f64,
    optimized_p_nd: f64,
    /// Detection probability gained by the optimized plan.
    gap: f64,
}

/// Best p_nd reachable within `elapsed` seconds.
fn attainment(curve: &[CurvePoint], elapsed: f64) -> Option<f64> {
    curve.iter().filter(|c| c.elapsed <= elapsed + 1e-6).map(|c| c.p_nd).reduce(f64::min)
}

fn staircase(curve: &[CurvePoint]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> =
        curve.iter().map(|c| (seconds_to_hours(c.elapsed), 1.0 - c.p_nd)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

#[allow(clippy::too_many_arguments)]
pub fn compare(
    scenario: &Path,
    config: Option<&Path>,
    baseline_config: Option<&Path>,
    auvs: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    format: Format,
) -> Result<()> {
    let scenario = load_scenario(scenario)?;
    let config = moce_config(config, seed)?;
    let mut base_cfg: BaselineConfig = match baseline_config {
        Some(p) => read_json(p, "baseline config")?,
        None => BaselineConfig::default(),
    };
    if let Some(n) = auvs {
        base_cfg.auv_count = n;
    }
    base_cfg.validate(&scenario).map_err(|e| CliError::Input(format!("invalid baseline config: {e}")))?;

    let (front, summary) = optimize(&scenario, &config)?;
    let report = RunReport::build(&scenario, &config, &front, &summary);
    export_front(out, &scenario, &report, format)?;

    let regular = baseline::baseline_front(&baseline::sweep(&scenario, &base_cfg, config.execution));
    let mut fleets = vec![1];
    if base_cfg.auv_count > 1 {
        fleets.push(base_cfg.auv_count);
    }
    const COLORS: [&str; 2] = ["#1f4e9c", "#c0392b"];
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (k, &n) in fleets.iter().enumerate() {
        let opt = scale_for_auvs(front.iter().map(|e| e.objectives), n);
        let reg = scale_for_auvs(regular.objectives(), n);
        for b in &reg {
            let o = attainment(&opt, b.elapsed).unwrap_or(scenario.total_prior());
            rows.push(GapRow {
                auvs: n,
                elapsed_s: b.elapsed,
                baseline_p_nd: b.p_nd,
                optimized_p_nd: o,
                gap: b.p_nd - o,
            });
        }
        let noun = if n == 1 { "AUV" } else { "AUVs" };
        series.push(Series {
            label: format!("optimized, {n} {noun}"),
            color: COLORS[k % 2],
            dashed: false,
            step: true,
            points: staircase(&opt),
        });
        series.push(Series {
            label: format!("regular, {n} {noun}"),
            color: COLORS[k % 2],
            dashed: true,
            step: true,
            points: staircase(&reg),
        });
    }
    let table = write_rows(out, "comparison", &rows, format)?;
    write_text(
        &out.join("comparison.svg"),
        &svg::chart(
            "Regularly spaced vs optimized paths",
            "path duration (h)",
            "detection probability (1 - p_nd)",
            &series,
        ),
    )?;
    let worst = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    println!(
        "compared {} regular points against {} optimized plans; smallest gain {worst:.3e}",
        rows.len(),
        report.entries.len()
    );
    println!("wrote {}", table.display());
    let _ = std::io::stdout().flush();
    Ok(())
}
