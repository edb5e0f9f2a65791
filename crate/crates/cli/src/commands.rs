//! The five subcommands. `run`, `sweep`, and `refine` share one execution
//! path so every artifact set has the same shape; `verify` and `report`
//! work purely from stored artifacts.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use krflow_core::lemmas::run_all;
use krflow_core::observables::{path_lengths, rate_fit, TraceQuantity};
use krflow_core::{evolve, Grid, LemmaReport, Trace, Verdict};

use crate::artifacts::{
    load_run_report, load_trace, read_json, write_json, write_trace_csv, RunReport, VerifyReport,
    ARTIFACT_SCHEMA_VERSION,
};
use crate::config::{load_config, ExperimentConfig, InitialData};

struct Executed {
    report: RunReport,
    trace: Trace,
}

/// Evolve, check, and persist one config into `dir`. Pure in the config:
/// nothing time- or host-dependent reaches the artifacts.
fn execute(config: &ExperimentConfig, sha256: &str, dir: &Path) -> Result<Executed> {
    let grid = Arc::new(Grid::new(config.n)?);
    let initial = config.initial_profile(grid)?;
    let trace = evolve(&initial, &config.policy, config.t_max, &config.companions)?;
    let lemmas = run_all(&trace, &config.verification)?;
    let lengths = path_lengths(&trace, None);
    let report = RunReport {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        config_sha256: sha256.into(),
        config: config.clone(),
        complete: trace.meta.complete,
        abort: trace.meta.abort.clone(),
        steps: trace.meta.steps,
        min_dt_used: trace.meta.min_dt_used,
        cross_check_max: trace.meta.cross_check_max,
        rows: trace.records.len(),
        final_record: trace.final_record()?.clone(),
        lengths,
        lemmas,
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_trace_csv(dir, &trace)?;
    write_json(dir, "trace.json", &trace)?;
    write_json(dir, "run.json", &report)?;
    Ok(Executed { report, trace })
}

pub fn cmd_run(path: &Path) -> Result<u8> {
    let loaded = load_config(path)?;
    let dir = loaded.config.run_dir(&loaded.stem);
    let started = Instant::now();
    let executed = execute(&loaded.config, &loaded.sha256, &dir)?;
    // Wall-clock goes to the console only; artifacts stay rerun-identical.
    eprintln!(
        "run finished in {:.2}s ({} steps)",
        started.elapsed().as_secs_f64(),
        executed.report.steps
    );
    println!(
        "{}: {} rows, final ‖R−n‖_C⁰ = {:.3e} → {}",
        loaded.stem,
        executed.report.rows,
        executed.report.final_record.c0_r_minus_n,
        dir.display()
    );
    if let Some(reason) = &executed.report.abort {
        eprintln!("aborted mid-run: {reason} (partial artifacts flagged in run.json)");
        return Ok(2);
    }
    Ok(0)
}

fn verdict_line(rep: &LemmaReport) -> String {
    let verdict = match (rep.verdict, rep.violation) {
        (Verdict::Pass, _) => "pass".into(),
        (Verdict::Fail, Some(kind)) => format!("FAIL ({kind:?})"),
        (Verdict::Fail, None) => "FAIL".into(),
        (Verdict::Inconclusive, _) => "inconclusive".into(),
    };
    let mut line = format!("{:<26} {verdict}", rep.id);
    if rep.verdict != Verdict::Pass {
        if let Some(note) = rep.notes.first() {
            line.push_str(&format!(" — {note}"));
        }
    }
    line
}

pub fn cmd_verify(dir: &Path) -> Result<u8> {
    let run = load_run_report(dir)?;
    let trace = load_trace(dir)?;
    let reports = run_all(&trace, &run.config.verification)?;
    let violations = reports
        .iter()
        .filter(|r| r.is_conclusion_violation())
        .count();
    let verify = VerifyReport {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        config_sha256: run.config_sha256.clone(),
        trace_complete: trace.meta.complete,
        conclusion_violations: violations,
        reports,
    };
    write_json(dir, "verify.json", &verify)?;
    for rep in &verify.reports {
        println!("{}", verdict_line(rep));
    }
    if !trace.meta.complete {
        eprintln!(
            "warning: trace is incomplete (abort: {})",
            trace.meta.abort.as_deref().unwrap_or("unknown")
        );
    }
    if violations > 0 {
        eprintln!("{violations} conclusion violation(s); see {}", dir.join("verify.json").display());
        return Ok(2);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Serialize)]
struct SweepRow {
    param: String,
    status: String,
    rows: String,
    final_c0_r_minus_n: String,
    rate_l2_u_tilde: String,
    mabuchi: String,
    calabi: String,
}

fn parse_grid(grid: &str) -> Result<(String, Vec<String>)> {
    let Some((key, values)) = grid.split_once('=') else {
        bail!("grid must look like key=v1,v2,... got '{grid}'");
    };
    let values: Vec<String> = values
        .split(',')
        .filter(|v| !v.is_empty())
        .map(str::to_owned)
        .collect();
    Ok((key.trim().to_owned(), values))
}

fn instantiate(template: &ExperimentConfig, key: &str, raw: &str) -> Result<ExperimentConfig> {
    let mut config = template.clone();
    match (key, &mut config.initial) {
        ("beta", InitialData::Beta { beta }) => {
            *beta = raw.parse().with_context(|| format!("grid value '{raw}'"))?
        }
        (
            "amplitude",
            InitialData::ChebyshevPerturbation {
                sampled: Some(s), ..
            },
        ) => s.amplitude = raw.parse().with_context(|| format!("grid value '{raw}'"))?,
        (
            "seed",
            InitialData::ChebyshevPerturbation {
                sampled: Some(s), ..
            },
        ) => s.seed = raw.parse().with_context(|| format!("grid value '{raw}'"))?,
        _ => bail!("grid key '{key}' does not apply to the template's initial-data family"),
    }
    config.validate()?;
    Ok(config)
}

fn sweep_row(param: &str, executed: Result<Executed>) -> SweepRow {
    match executed {
        Ok(ex) => {
            let rate = rate_fit(
                &ex.trace,
                TraceQuantity::L2UTilde,
                &ex.report.config.verification.fit_window,
            )
            .map(|f| f.rate.to_string())
            .unwrap_or_default();
            SweepRow {
                param: param.into(),
                status: match &ex.report.abort {
                    Some(reason) => format!("abort: {reason}"),
                    None => "ok".into(),
                },
                rows: ex.report.rows.to_string(),
                final_c0_r_minus_n: ex.report.final_record.c0_r_minus_n.to_string(),
                rate_l2_u_tilde: rate,
                mabuchi: ex.report.lengths.mabuchi.to_string(),
                calabi: ex.report.lengths.calabi.to_string(),
            }
        }
        Err(err) => SweepRow {
            param: param.into(),
            status: format!("error: {err:#}"),
            rows: String::new(),
            final_c0_r_minus_n: String::new(),
            rate_l2_u_tilde: String::new(),
            mabuchi: String::new(),
            calabi: String::new(),
        },
    }
}

pub fn cmd_sweep(template_path: &Path, grid: &str) -> Result<u8> {
    let loaded = load_config(template_path)?;
    let (key, values) = parse_grid(grid)?;
    // Fail on an inapplicable key before spending any compute.
    if let Some(first) = values.first() {
        instantiate(&loaded.config, &key, first)?;
    }
    let root = loaded
        .config
        .run_dir(&format!("{}-sweep", loaded.stem));
    fs::create_dir_all(&root)?;

    // Runs are independent and single-threaded internally; parallelism
    // lives only here, across runs. Row order follows the given grid.
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|value| {
            let dir = root.join(format!("{key}-{value}"));
            let run = instantiate(&loaded.config, &key, value)
                .and_then(|config| execute(&config, &loaded.sha256, &dir));
            sweep_row(value, run)
        })
        .collect();

    let path = root.join("summary.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    for row in &rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        // serde never saw a row, so emit the header explicitly.
        writer.write_record([
            "param",
            "status",
            "rows",
            "final_c0_r_minus_n",
            "rate_l2_u_tilde",
            "mabuchi",
            "calabi",
        ])?;
    }
    writer.flush()?;
    for row in &rows {
        println!("{key}={}: {}", row.param, row.status);
    }
    println!("{} rows → {}", rows.len(), path.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// refine

#[derive(Debug, Serialize, Deserialize)]
pub struct RefineLevel {
    pub n: usize,
    pub cadence: f64,
    pub checkpoint_cadence: f64,
    pub dir: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RefineReport {
    pub schema_version: u32,
    pub config_sha256: String,
    pub levels: Vec<RefineLevel>,
    /// Per-level values of every reported constant and residual,
    /// keyed `lemma_id/name` (residuals as `lemma_id/residual/name`).
    pub values: std::collections::BTreeMap<String, Vec<f64>>,
    /// Symmetric relative deltas between consecutive levels.
    pub deltas: std::collections::BTreeMap<String, Vec<f64>>,
    /// Fitted order in the record cadence, residual keys only.
    pub orders: std::collections::BTreeMap<String, f64>,
    /// Finest-level reports with their `refinement` maps filled.
    pub finest: Vec<LemmaReport>,
}

fn flatten(reports: &[LemmaReport]) -> std::collections::BTreeMap<String, f64> {
    let mut map = std::collections::BTreeMap::new();
    for rep in reports {
        for (k, v) in &rep.constants {
            map.insert(format!("{}/{k}", rep.id), *v);
        }
        for (k, v) in &rep.residuals {
            map.insert(format!("{}/residual/{k}", rep.id), *v);
        }
    }
    map
}

fn symmetric_rel_delta(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (b - a).abs() / scale
    }
}

pub fn cmd_refine(path: &Path, levels: &[usize]) -> Result<u8> {
    if levels.len() < 2 {
        bail!(
            "refine needs at least two levels (N and cadence are refined jointly), got {}",
            levels.len()
        );
    }
    let loaded = load_config(path)?;
    let root = loaded.config.run_dir(&format!("{}-refine", loaded.stem));

    let mut level_meta = Vec::new();
    let mut executed = Vec::new();
    for (i, &n) in levels.iter().enumerate() {
        let mut config = loaded.config.clone();
        config.n = n;
        let scale = 2f64.powi(i as i32);
        config.policy.cadence /= scale;
        config.policy.checkpoint_cadence /= scale;
        let dir = root.join(format!("level-{n}"));
        let ex = execute(&config, &loaded.sha256, &dir)
            .with_context(|| format!("level {i} (N = {n})"))?;
        level_meta.push(RefineLevel {
            n,
            cadence: config.policy.cadence,
            checkpoint_cadence: config.policy.checkpoint_cadence,
            dir: dir.display().to_string(),
        });
        executed.push(ex);
    }

    let flat: Vec<_> = executed.iter().map(|e| flatten(&e.report.lemmas)).collect();
    let mut values = std::collections::BTreeMap::new();
    let mut deltas = std::collections::BTreeMap::new();
    let mut orders = std::collections::BTreeMap::new();
    for key in flat[0].keys() {
        let Some(series) = flat
            .iter()
            .map(|m| m.get(key).copied())
            .collect::<Option<Vec<f64>>>()
        else {
            continue; // inconclusive level dropped the quantity
        };
        let dv: Vec<f64> = series
            .windows(2)
            .map(|w| symmetric_rel_delta(w[0], w[1]))
            .collect();
        // Cadence halves per level, so a positive residual series admits a
        // least-squares order in the cadence.
        if key.contains("/residual/") && series.iter().all(|&v| v > 0.0 && v.is_finite()) {
            let ys: Vec<f64> = series.iter().map(|v| v.ln()).collect();
            let xs: Vec<f64> = (0..series.len())
                .map(|i| (loaded.config.policy.cadence / 2f64.powi(i as i32)).ln())
                .collect();
            let mx = xs.iter().sum::<f64>() / xs.len() as f64;
            let my = ys.iter().sum::<f64>() / ys.len() as f64;
            let den = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
            if den > 0.0 {
                let slope = xs
                    .iter()
                    .zip(&ys)
                    .map(|(x, y)| (x - mx) * (y - my))
                    .sum::<f64>()
                    / den;
                orders.insert(key.clone(), slope);
            }
        }
        values.insert(key.clone(), series);
        deltas.insert(key.clone(), dv);
    }

    // The finest level carries the last-transition delta on each report.
    let mut finest = executed.last().unwrap().report.lemmas.clone();
    for rep in &mut finest {
        for (key, dv) in &deltas {
            if let Some(rest) = key.strip_prefix(&format!("{}/", rep.id)) {
                if let Some(&last) = dv.last() {
                    rep.refinement.insert(rest.replace("residual/", ""), last);
                }
            }
        }
    }

    let report = RefineReport {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        config_sha256: loaded.sha256.clone(),
        levels: level_meta,
        values,
        deltas,
        orders: orders.clone(),
        finest,
    };
    fs::create_dir_all(&root)?;
    write_json(&root, "refine.json", &report)?;

    println!(
        "{} levels, {} tracked quantities → {}",
        levels.len(),
        report.values.len(),
        root.join("refine.json").display()
    );
    for (key, order) in &orders {
        println!("  {key}: fitted order {order:.2}");
    }
    Ok(0)
}

pub fn cmd_report(dir: &Path) -> Result<u8> {
    let run = load_run_report(dir)?;
    println!("config     {} (sha256 {})", dir.display(), &run.config_sha256[..12]);
    println!(
        "grid       N = {}, t_max = {}, cadence = {}, checkpoints every {}",
        run.config.n, run.config.t_max, run.config.policy.cadence, run.config.policy.checkpoint_cadence
    );
    println!(
        "run        {} rows, {} steps, min dt {:.3e}, rhs cross-check {:.3e}, {}",
        run.rows,
        run.steps,
        run.min_dt_used,
        run.cross_check_max,
        if run.complete {
            "complete".into()
        } else {
            format!("ABORTED: {}", run.abort.as_deref().unwrap_or("unknown"))
        }
    );
    let f = &run.final_record;
    println!(
        "final      t = {}, ‖R−n‖_C⁰ = {:.6e}, ‖ũ‖_L² = {:.6e}, min R = {:.6}",
        f.t, f.c0_r_minus_n, f.l2_u_tilde, f.min_r
    );
    println!(
        "lengths    path = {:.6} (+{:.2e} tail), energy = {:.6} over [{}, {}]",
        run.lengths.mabuchi,
        run.lengths.mabuchi_tail,
        run.lengths.calabi,
        run.lengths.window.0,
        run.lengths.window.1
    );
    // Prefer the re-run verification if it exists.
    let reports = match read_json::<VerifyReport>(dir, "verify.json") {
        Ok(v) => {
            println!("checks     from verify.json");
            v.reports
        }
        Err(_) => {
            println!("checks     from run.json (run `verify` to refresh)");
            run.lemmas
        }
    };
    for rep in &reports {
        println!("  {}", verdict_line(rep));
    }
    Ok(0)
}
