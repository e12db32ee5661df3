//! Files written to the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::sweep::{QuantileRow, Skipped, SweepResults, VariantReport};
use crate::trace::write_trace;

pub const SUMMARY_SCHEMA: &str = "svo-sim/summary/v1";

#[derive(Serialize)]
struct IsiRow {
    run_id: String,
    baseline_run_id: String,
    seed: u64,
    p_cooperative: f64,
    n_sc: usize,
    density: f64,
    agent_id: usize,
    svo_theta: f64,
    v_max: f64,
    speed: f64,
    baseline_speed: f64,
    isi: Option<f64>,
}

#[derive(Serialize)]
struct PsiRow {
    run_id: String,
    baseline_run_id: String,
    seed: u64,
    p_cooperative: f64,
    n_sc: usize,
    density: f64,
    n_agents: usize,
    population_mean: f64,
    baseline_population_mean: f64,
    psi: f64,
    excluded_agents: usize,
}

#[derive(Serialize)]
struct RunSummary {
    run_id: String,
    seed: u64,
    p_cooperative: f64,
    n_sc: usize,
    density: f64,
    n_agents: usize,
    #[serde(flatten)]
    status: svo_core::world::RunStatus,
    steps: usize,
    collisions: usize,
    violation_flags: usize,
    population_mean: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'static str,
    runs: Vec<RunSummary>,
    comparisons: usize,
    skipped: &'a [Skipped],
    quantiles: &'a [QuantileRow],
    subgroups: &'a [VariantReport],
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| SimError::io(path, e))
}

pub fn write_isi_csv(path: &Path, results: &SweepResults) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for c in &results.comparisons {
        let (run, base) = (&c.paired.run, &c.paired.baseline);
        for (agent_id, isi) in c.paired.isi.iter().enumerate() {
            w.serialize(IsiRow {
                run_id: c.spec.run_id(),
                baseline_run_id: c.baseline_spec.run_id(),
                seed: run.seed,
                p_cooperative: run.p_cooperative,
                n_sc: c.spec.n_sc,
                density: c.spec.density,
                agent_id,
                svo_theta: run.thetas[agent_id],
                v_max: run.v_max[agent_id],
                speed: run.speeds[agent_id],
                baseline_speed: base.speeds[agent_id],
                isi: *isi,
            })?;
        }
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn write_psi_csv(path: &Path, results: &SweepResults) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for c in &results.comparisons {
        w.serialize(PsiRow {
            run_id: c.spec.run_id(),
            baseline_run_id: c.baseline_spec.run_id(),
            seed: c.spec.seed,
            p_cooperative: c.spec.p_cooperative,
            n_sc: c.spec.n_sc,
            density: c.spec.density,
            n_agents: c.spec.n_agents,
            population_mean: c.paired.run.population_mean,
            baseline_population_mean: c.paired.baseline.population_mean,
            psi: c.paired.psi,
            excluded_agents: c.paired.excluded.len(),
        })?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn write_quantiles_csv(path: &Path, results: &SweepResults) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in &results.quantiles {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn write_summary(path: &Path, results: &SweepResults) -> Result<()> {
    let runs = results
        .runs
        .iter()
        .map(|r| RunSummary {
            run_id: r.spec.run_id(),
            seed: r.spec.seed,
            p_cooperative: r.spec.p_cooperative,
            n_sc: r.spec.n_sc,
            density: r.spec.density,
            n_agents: r.spec.n_agents,
            status: r.trace.status.clone(),
            steps: r.trace.steps(),
            collisions: r.trace.collisions.len(),
            violation_flags: r.trace.violation_flags(),
            population_mean: r.metrics.as_ref().ok().map(|m| m.population_mean),
        })
        .collect();
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        runs,
        comparisons: results.comparisons.len(),
        skipped: &results.skipped,
        quantiles: &results.quantiles,
        subgroups: &results.reports,
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n").map_err(|e| SimError::io(path, e))?;
    w.flush().map_err(|e| SimError::io(path, e))
}

/// Writes traces, metrics tables, quantile table and summary under `out`.
pub fn write_outputs(out: &Path, results: &SweepResults) -> Result<()> {
    for r in &results.runs {
        let path = out.join("traces").join(format!("{}.jsonl", r.spec.run_id()));
        write_trace(create(&path)?, &r.spec.run_id(), &r.trace)?;
    }
    write_isi_csv(&out.join("metrics/isi.csv"), results)?;
    write_psi_csv(&out.join("metrics/psi.csv"), results)?;
    write_quantiles_csv(&out.join("data/quantiles_p.csv"), results)?;
    write_summary(&out.join("summary.json"), results)
}
