use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cadritz::network::count_parameters;
use cadritz::optimizer::{flatten, init_networks, train, EnergyObjective, Outcome, TrainOptions};
use cadritz::problems::{
    consistency_report, error_metrics, field_dump, interface_flux_check, line_scan,
    write_field_csv, write_line_scan_csv, Consistency, Potential,
};
use cadritz::sampling::SamplePlan;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{ProblemKind, Resolved, RunConfig};
use crate::CliError;

/// Sobol offset of the training points; evaluation starts after them.
const TRAIN_SKIP: u64 = 0;

fn training_plan(r: &Resolved) -> Result<SamplePlan, CliError> {
    Ok(r.problem.plan(&r.budgets, TRAIN_SKIP)?)
}

pub fn info(r: &Resolved, out: &mut dyn Write) -> Result<(), CliError> {
    let p = &r.problem;
    let d = &p.domain;
    writeln!(out, "problem: {} ({})", p.name, p.preset)?;
    writeln!(out, "patches: {}", d.patches.len())?;
    writeln!(out, "interfaces: {} (coupled: {})", d.interfaces.len(), p.interfaces.len())?;
    writeln!(out, "anti-periodic pairs: {}", d.mirrors.len())?;
    writeln!(out, "subdomains: {}", d.groups().join(", "))?;
    writeln!(out, "networks:")?;
    for n in &p.spec.networks {
        let c = n.config;
        writeln!(
            out,
            "  {:<20} {:>2} blocks x {:>2} neurons{}  |theta| = {}",
            n.label,
            c.blocks,
            c.neurons,
            if c.adaptive_activations { ", adaptive" } else { "" },
            count_parameters(&c)
        )?;
    }
    writeln!(out, "total |theta|: {}", p.spec.total_parameters())?;
    let b = &r.budgets;
    writeln!(
        out,
        "budgets: interior {}, dirichlet {}, neumann {}, interface {}, antiperiodic {}",
        b.interior, b.dirichlet, b.neumann, b.interface, b.antiperiodic
    )?;
    if let Some(groups) = &b.interior_groups {
        for (label, n) in groups {
            writeln!(out, "  interior {label}: {n}")?;
        }
    }
    let phases: Vec<String> = r
        .schedule
        .0
        .iter()
        .map(|ph| format!("{}@{}", ph.epochs, ph.lr))
        .collect();
    writeln!(
        out,
        "schedule: {} ({} epochs)",
        phases.join(", "),
        r.schedule.total_epochs()
    )?;
    writeln!(out, "terms: {}", p.spec.term_labels().join(", "))?;
    Ok(())
}

/// Writes the interior training samples to `<out>/samples.csv`.
pub fn sample(r: &Resolved) -> Result<PathBuf, CliError> {
    let plan = training_plan(r)?;
    std::fs::create_dir_all(&r.config.out)?;
    let path = r.config.out.join("samples.csv");
    plan.write_csv(BufWriter::new(File::create(&path)?))?;
    eprintln!(
        "{} interior, {} dirichlet, {} neumann, {} interface, {} anti-periodic samples",
        plan.interior_count(),
        plan.edge_count(cadritz::geometry::EdgeTag::Dirichlet),
        plan.edge_count(cadritz::geometry::EdgeTag::Neumann),
        plan.interface_count(),
        plan.mirror_count()
    );
    Ok(path)
}

/// Trains and writes `config.json`, `loss.csv` and `checkpoint.json` to the
/// output directory. Returns whether the run completed.
pub fn train_run(r: &Resolved) -> Result<bool, CliError> {
    let cfg = &r.config;
    let plan = training_plan(r)?;
    let objective = EnergyObjective::new(&r.problem.spec, &plan)?;
    let init = init_networks(&r.problem.spec, cfg.seed);
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;

    let labels: Vec<String> = r.problem.spec.networks.iter().map(|n| n.label.clone()).collect();
    let compiled = &objective.compiled;
    let total = r.schedule.total_epochs();
    let save = |epoch: usize, params: &[f64], path: &Path| -> Result<(), CliError> {
        let sets = compiled.split(params)?;
        Checkpoint::new(cfg.problem, cfg.preset, cfg.seed, epoch, &labels, &sets).save(path)
    };
    let options = TrainOptions {
        schedule: r.schedule.clone(),
        adam: cfg.adam,
    };
    let started = std::time::Instant::now();
    let result = train(&objective, flatten(&init), &options, |epoch, params| {
        if cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch == total) {
            eprintln!("epoch {epoch}/{total} ({:.1} s)", started.elapsed().as_secs_f64());
        }
        if let Some(every) = cfg.checkpoint_every.filter(|&n| n > 0) {
            if epoch % every == 0 && epoch < total {
                save(epoch, params, &cfg.out.join(format!("checkpoint_{epoch}.json")))
                    .map_err(|e| cadritz::Error::Config(e.to_string()))?;
            }
        }
        Ok(())
    })?;
    result
        .history
        .write_csv(BufWriter::new(File::create(cfg.out.join("loss.csv"))?))?;
    let epochs = result.history.rows.len();
    save(epochs, &result.params, &cfg.out.join("checkpoint.json"))?;
    match result.outcome {
        Outcome::Completed => {
            if let Some(l) = result.history.last_total() {
                eprintln!("final loss {l:e}");
            }
            Ok(true)
        }
        Outcome::Diverged { epoch, loss } => {
            eprintln!("diverged at epoch {epoch} (loss {loss})");
            Ok(false)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSummary {
    pub samples: usize,
    pub median: f64,
    pub max: f64,
    pub median_normalized: f64,
    pub max_normalized: f64,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub problem: ProblemKind,
    pub preset: String,
    pub seed: u64,
    pub parameters: usize,
    pub eval_points: usize,
    pub rel_l2: Option<f64>,
    pub max_abs: Option<f64>,
    pub mean_abs: Option<f64>,
    /// Coefficient-weighted normal-flux mismatch on material interfaces.
    pub flux: Option<FluxSummary>,
    pub consistency: Consistency,
}

pub enum Source<'a> {
    Checkpoint(&'a Path),
    Oracle,
}

/// Evaluates on points the training never saw. With `write`, the metrics
/// and CSV artifacts go to the output directory.
pub fn evaluate(r: &Resolved, source: Source<'_>, write: bool) -> Result<Report, CliError> {
    let cfg = &r.config;
    let p = &r.problem;
    let d = &p.domain;
    let owned;
    let u: &dyn Potential = match source {
        Source::Checkpoint(path) => {
            owned = Checkpoint::load(path)?.solution(p)?;
            &owned
        }
        Source::Oracle => p
            .reference
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{} has no closed-form solution", p.name)))?,
    };
    let reference = p.reference.as_ref().map(|r| r as &dyn Potential);

    let skip = training_plan(r)?.next_skip();
    let mut budgets = r.budgets.clone();
    if let Some(n) = cfg.eval_samples {
        budgets.interior = n;
        budgets.interior_groups = None;
    }
    let material: Vec<usize> = d
        .interfaces
        .iter()
        .enumerate()
        .filter(|(_, f)| d.patches[f.k].group() != d.patches[f.l].group())
        .map(|(i, _)| i)
        .collect();
    let plan = SamplePlan::build(d, &budgets, &material, skip)?;

    let metrics = reference.map(|re| error_metrics(u, re, &plan));
    let coefficients = &p.spec.coefficients;
    let jumps: Vec<usize> = d
        .interfaces
        .iter()
        .enumerate()
        .filter(|(_, f)| coefficients[f.k] != coefficients[f.l])
        .map(|(i, _)| i)
        .collect();
    let flux = if jumps.is_empty() {
        None
    } else {
        let per = (budgets.interface / jumps.len()).max(16);
        let f = interface_flux_check(u, d, coefficients, &jumps, per, skip)?;
        Some(FluxSummary {
            samples: f.residuals.len(),
            median: f.median,
            max: f.max,
            median_normalized: f.median_normalized,
            max_normalized: f.max_normalized,
        })
    };
    let report = Report {
        problem: cfg.problem,
        preset: p.preset.to_string(),
        seed: cfg.seed,
        parameters: p.spec.total_parameters(),
        eval_points: plan.interior_count(),
        rel_l2: metrics.map(|m| m.rel_l2),
        max_abs: metrics.map(|m| m.max_abs),
        mean_abs: metrics.map(|m| m.mean_abs),
        flux,
        consistency: consistency_report(u, d, &plan),
    };

    if write {
        std::fs::create_dir_all(&cfg.out)?;
        std::fs::write(cfg.out.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
        let rows = field_dump(u, reference, d, &plan);
        write_field_csv(&rows, BufWriter::new(File::create(cfg.out.join("field.csv"))?))?;
        if cfg.problem == ProblemKind::Cylinder {
            let rows = line_scan(u, reference, d, 0.1, -1.0, 1.0, cfg.line_points);
            write_line_scan_csv(&rows, BufWriter::new(File::create(cfg.out.join("line_scan.csv"))?))?;
        }
    }
    Ok(report)
}

/// Config of a run given either as a config file or as a training output
/// directory holding `config.json`.
pub fn run_config(path: &Path) -> Result<RunConfig, CliError> {
    if path.is_dir() {
        let mut c = RunConfig::load(&path.join("config.json"))?;
        c.out = path.to_path_buf();
        Ok(c)
    } else {
        RunConfig::load(path)
    }
}

pub struct CompareRow {
    pub run: String,
    pub report: Report,
}

pub fn compare(runs: &[PathBuf]) -> Result<Vec<CompareRow>, CliError> {
    runs.iter()
        .map(|path| {
            let r = run_config(path)?.resolve()?;
            let ckpt = r.config.out.join("checkpoint.json");
            if !ckpt.is_file() {
                return Err(CliError::Config(format!(
                    "run {} has no checkpoint at {}",
                    path.display(),
                    ckpt.display()
                )));
            }
            let report = evaluate(&r, Source::Checkpoint(&ckpt), false)?;
            Ok(CompareRow {
                run: path.display().to_string(),
                report,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4e}"))
}

pub fn write_compare_table(rows: &[CompareRow], out: &mut dyn Write) -> Result<(), CliError> {
    writeln!(
        out,
        "{:<24} {:<9} {:<9} {:>8} {:>11} {:>11} {:>11} {:>11} {:>11}",
        "run", "problem", "preset", "|theta|", "rel_l2", "max_abs", "mean_abs", "flux_med", "jump_med"
    )?;
    for row in rows {
        let r = &row.report;
        let c = &r.consistency;
        let jump = if c.range > 0.0 {
            Some(c.interface_jump_median / c.range)
        } else {
            None
        };
        writeln!(
            out,
            "{:<24} {:<9} {:<9} {:>8} {:>11} {:>11} {:>11} {:>11} {:>11}",
            row.run,
            format!("{:?}", r.problem).to_lowercase(),
            r.preset,
            r.parameters,
            opt(r.rel_l2),
            opt(r.max_abs),
            opt(r.mean_abs),
            opt(r.flux.as_ref().map(|f| f.median_normalized)),
            opt(jump)
        )?;
    }
    Ok(())
}

pub fn write_compare_csv(rows: &[CompareRow], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(cadritz::Error::from)?;
    let header = [
        "run", "problem", "preset", "parameters", "rel_l2", "max_abs", "mean_abs",
        "flux_median_normalized", "interface_jump_median", "range",
    ];
    w.write_record(header).map_err(cadritz::Error::from)?;
    let s = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for row in rows {
        let r = &row.report;
        w.write_record([
            row.run.clone(),
            format!("{:?}", r.problem).to_lowercase(),
            r.preset.clone(),
            r.parameters.to_string(),
            s(r.rel_l2),
            s(r.max_abs),
            s(r.mean_abs),
            s(r.flux.as_ref().map(|f| f.median_normalized)),
            r.consistency.interface_jump_median.to_string(),
            r.consistency.range.to_string(),
        ])
        .map_err(cadritz::Error::from)?;
    }
    w.flush()?;
    Ok(())
}
