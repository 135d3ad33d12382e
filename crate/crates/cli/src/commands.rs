use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sparseprop::data::Dataset;
use sparseprop::effort::{effort_ratio, effort_ratio_incl_forward};
use sparseprop::network::checkpoint;
use sparseprop::par;
use sparseprop::selector::trace;
use sparseprop::trainer::{train_observed, TrainOutcome};

use crate::config::{self, CheckSection, DatasetSpec, RunSpec};
use crate::error::{CliError, CliResult};
use crate::output::{self, ComparisonRow, SweepRun};

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out_dir: PathBuf,
    pub quiet: bool,
    pub seed_override: Option<u64>,
    pub check: bool,
}

impl Options {
    fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    fn ensure_out_dir(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

pub fn final_accuracy(outcome: &TrainOutcome) -> f64 {
    outcome.records.last().map_or(0.0, |r| r.test_accuracy)
}

/// Trains `run` on `data`, writing the per-sample trace to `trace_path` when
/// given. `prefix` locates the run in its config file for error messages.
pub fn execute(
    run: &RunSpec,
    data: &Split,
    trace_path: Option<&Path>,
    prefix: &str,
) -> CliResult<TrainOutcome> {
    let (train_set, test_set) = data;
    let cfg = run.train_config(run.architecture_for(train_set));
    let depth = cfg.architecture.len();
    let Some(path) = trace_path else {
        return train_observed(train_set, test_set, &cfg, |_, _| {})
            .map_err(|e| CliError::from_core(e, prefix));
    };
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut io_err = writeln!(w, "{}\n{}", output::CSV_SCHEMA, trace::header(depth)).err();
    let outcome = train_observed(train_set, test_set, &cfg, |i, g| {
        if io_err.is_none() {
            io_err = writeln!(w, "{}", trace::row(i, depth, g)).err();
        }
    })
    .map_err(|e| CliError::from_core(e, prefix))?;
    if let Some(e) = io_err.or_else(|| w.flush().err()) {
        return Err(CliError::io(path, e));
    }
    Ok(outcome)
}

fn write_run_files(opts: &Options, name: &str, outcome: &TrainOutcome) -> CliResult<()> {
    output::write_file(
        &opts.path(&format!("{name}.records.csv")),
        output::records_csv(&outcome.records),
    )?;
    output::write_file(
        &opts.path(&format!("{name}.ledger.json")),
        output::ledger_json(&outcome.ledger),
    )
}

fn trace_path(opts: &Options, run: &RunSpec) -> Option<PathBuf> {
    run.trace
        .then(|| opts.path(&format!("{}.trace.csv", run.name)))
}

fn finish_check(opts: &Options, failures: Vec<String>) -> CliResult<()> {
    if opts.check && !failures.is_empty() {
        return Err(CliError::Check(failures));
    }
    Ok(())
}

pub fn cmd_train(config_path: &Path, opts: &Options) -> CliResult<()> {
    let run = config::load_run(config_path, opts.seed_override)?;
    let data = run.dataset.load()?;
    opts.ensure_out_dir()?;
    let outcome = execute(&run, &data, trace_path(opts, &run).as_deref(), "")?;
    write_run_files(opts, &run.name, &outcome)?;
    let ckpt = opts.path(&format!("{}.sptn", run.name));
    checkpoint::save(&outcome.model, &ckpt).map_err(|e| CliError::io(&ckpt, e))?;

    for r in &outcome.records {
        opts.say(format!(
            "epoch {:>3}  loss {:.4}  accuracy {:.2}%  lr {:.5}  skipped {}",
            r.epoch,
            r.train_loss_mean,
            100.0 * r.test_accuracy,
            r.lr,
            r.samples_skipped
        ));
    }
    let acc = final_accuracy(&outcome);
    let mut failures = Vec::new();
    if let Some(min) = run.check.min_accuracy {
        if acc < min {
            failures.push(format!("{}: accuracy {acc} below {min}", run.name));
        }
    }
    finish_check(opts, failures)
}

type Split = (Dataset, Dataset);

/// Loads each distinct dataset once. Returns the datasets and, per run, the
/// index of its dataset.
fn load_shared(runs: &[&DatasetSpec]) -> CliResult<(Vec<Split>, Vec<usize>)> {
    let mut specs: Vec<&DatasetSpec> = Vec::new();
    let mut data = Vec::new();
    let mut index = Vec::with_capacity(runs.len());
    for spec in runs {
        match specs.iter().position(|s| s == spec) {
            Some(i) => index.push(i),
            None => {
                data.push(spec.load()?);
                specs.push(spec);
                index.push(specs.len() - 1);
            }
        }
    }
    Ok((data, index))
}

pub fn cmd_compare(config_path: &Path, opts: &Options) -> CliResult<Vec<ComparisonRow>> {
    let spec = config::load_compare(config_path, opts.seed_override)?;
    let (data, which) = load_shared(&spec.runs.iter().map(|r| &r.dataset).collect::<Vec<_>>())?;
    opts.ensure_out_dir()?;

    let outcomes = par::run_indexed(spec.runs.len(), spec.parallel, |i| {
        let run = &spec.runs[i];
        execute(
            run,
            &data[which[i]],
            trace_path(opts, run).as_deref(),
            &format!("runs[{i}]."),
        )
    });
    let outcomes = outcomes.into_iter().collect::<CliResult<Vec<_>>>()?;

    let baseline = &outcomes[spec.baseline].ledger;
    let mut rows = Vec::with_capacity(outcomes.len());
    for (run, outcome) in spec.runs.iter().zip(&outcomes) {
        write_run_files(opts, &run.name, outcome)?;
        rows.push(ComparisonRow {
            name: run.name.clone(),
            strategy: run.sparsity.strategy.name().to_string(),
            final_accuracy: final_accuracy(outcome),
            effort_ratio: effort_ratio(&outcome.ledger, baseline).map_err(runtime)?,
            effort_ratio_incl_forward: effort_ratio_incl_forward(&outcome.ledger, baseline)
                .map_err(runtime)?,
            samples_skipped: outcome.ledger.samples_skipped,
        });
    }
    output::write_file(&opts.path("comparison.csv"), output::comparison_csv(&rows))?;
    opts.say(output::comparison_table(&rows).trim_end());
    finish_check(opts, compare_failures(&spec.check, &rows, spec.baseline))?;
    Ok(rows)
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn compare_failures(
    check: &CheckSection,
    rows: &[ComparisonRow],
    baseline: usize,
) -> Vec<String> {
    let base = &rows[baseline];
    let mut failures = Vec::new();
    if let Some(min) = check.min_accuracy {
        if base.final_accuracy < min {
            failures.push(format!(
                "{}: baseline accuracy {} below {min}",
                base.name, base.final_accuracy
            ));
        }
    }
    for (i, row) in rows.iter().enumerate() {
        if i == baseline {
            continue;
        }
        if let Some(max) = check.max_accuracy_drop {
            let drop = base.final_accuracy - row.final_accuracy;
            if drop > max {
                failures.push(format!("{}: accuracy drop {drop} exceeds {max}", row.name));
            }
        }
        if let Some(max) = check.max_effort_ratio {
            if row.effort_ratio > max {
                failures.push(format!(
                    "{}: effort ratio {} exceeds {max}",
                    row.name, row.effort_ratio
                ));
            }
        }
    }
    failures
}

pub fn cmd_sweep(config_path: &Path, opts: &Options) -> CliResult<Vec<SweepRun>> {
    let spec = config::load_sweep(config_path, opts.seed_override)?;
    let data = spec.base.dataset.load()?;
    opts.ensure_out_dir()?;

    let jobs: Vec<(usize, u64)> = (0..spec.points.len())
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = par::run_indexed(jobs.len(), spec.parallel, |j| {
        let (config, seed) = jobs[j];
        let run = spec.run(config, seed);
        execute(&run, &data, None, "").map(|o| SweepRun {
            config,
            seed,
            final_accuracy: final_accuracy(&o),
            backward_macs: o.ledger.backward_macs,
            update_macs: o.ledger.update_macs,
            samples_skipped: o.ledger.samples_skipped,
        })
    });
    let runs = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let points: Vec<_> = spec
        .points
        .iter()
        .map(|p| (p.s_min, p.s_max, p.zeta, p.skip_threshold))
        .collect();
    output::write_file(&opts.path("sweep.csv"), output::sweep_csv(&points, &runs))?;
    opts.say(format!(
        "{} runs over {} grid points written to sweep.csv",
        runs.len(),
        points.len()
    ));

    let mut failures = Vec::new();
    if let Some(min) = spec.base.check.min_accuracy {
        for r in runs.iter().filter(|r| r.final_accuracy < min) {
            failures.push(format!(
                "config {} seed {}: accuracy {} below {min}",
                r.config, r.seed, r.final_accuracy
            ));
        }
    }
    finish_check(opts, failures)?;
    Ok(runs)
}
