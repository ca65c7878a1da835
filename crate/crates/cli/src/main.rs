use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use varlab_core::data::{fetch_dataset, DatasetSource};
use varlab_core::emit::{report_csv, report_json};
use varlab_core::experiment::{analyze_condition, DatasetCache, ResolvedCondition};
use varlab_core::plot::{onset_svg, trace_svg, OnsetSeries};
use varlab_core::protocol::{run_condition, RunContext};
use varlab_core::{Error, ExperimentFile, MetricsReport, RunStore};

/// Deterministic run-to-run variability experiments.
#[derive(Debug, Parser)]
#[command(name = "varlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment definition (JSON).
    #[arg(long, global = true)]
    experiment: Option<PathBuf>,

    /// Worker threads for `run`.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,

    /// Output directory; the run store lives in `<out>/store` unless
    /// VARLAB_STORE is set.
    #[arg(long, global = true, default_value = "varlab-out")]
    out: PathBuf,

    /// Remove partial run directories left by an interrupted `run` first.
    #[arg(long, global = true)]
    resume: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the resolved conditions.
    Plan,
    /// Train every run not already in the store.
    Run,
    /// Write one JSON report per condition.
    Analyze,
    /// Write the aggregate CSV and JSON tables.
    Report,
    /// Write SVG figures.
    Plot,
    /// Download dataset files listed in the experiment.
    Fetch,
}

struct Ctx {
    exp: ExperimentFile,
    conditions: Vec<ResolvedCondition>,
    out: PathBuf,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Self, Error> {
        let path = cli
            .experiment
            .as_ref()
            .ok_or_else(|| Error::Config("--experiment <file> is required".into()))?;
        let exp = ExperimentFile::load(path)?;
        let conditions = exp.conditions()?;
        Ok(Self {
            exp,
            conditions,
            out: cli.out.clone(),
        })
    }

    fn store(&self) -> Result<RunStore, Error> {
        RunStore::open(RunStore::resolve_root(&self.out.join("store")))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn file_stem(condition: &str) -> String {
    condition
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_@.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_plan(ctx: &Ctx) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(&ctx.conditions)?);
    Ok(())
}

fn cmd_run(ctx: &Ctx, parallel: usize, resume: bool) -> Result<(), Error> {
    let store = ctx.store()?;
    if resume {
        let removed = store.clean_stale()?;
        println!("{}", json!({ "stale_removed": removed }));
    }
    let mut cache = DatasetCache::default();
    let (mut new_runs, mut reused, mut failures) = (0, 0, Vec::new());
    for rc in &ctx.conditions {
        let data = cache.get(&ctx.exp, &rc.condition.dataset)?;
        let run_ctx = RunContext {
            model: &rc.model,
            config: &rc.config,
            data,
        };
        let outcome = run_condition(&rc.condition, run_ctx, parallel, &store)?;
        println!(
            "{}",
            json!({
                "condition": rc.condition.plan_name,
                "trained": outcome.trained,
                "reused": outcome.reused,
                "failed": outcome.failures.len(),
            })
        );
        new_runs += outcome.trained;
        reused += outcome.reused;
        failures.extend(outcome.failures);
    }
    println!(
        "{}",
        json!({ "new_runs": new_runs, "reused": reused, "failed": failures.len() })
    );
    match failures.into_iter().next() {
        Some(first) => Err(first),
        None => Ok(()),
    }
}

fn all_reports(ctx: &Ctx) -> Result<Vec<(String, Vec<MetricsReport>)>, Error> {
    let store = ctx.store()?;
    let mut cache = DatasetCache::default();
    ctx.conditions
        .iter()
        .map(|rc| {
            let data = cache.get(&ctx.exp, &rc.condition.dataset)?;
            let reports = analyze_condition(rc, data, &store, &ctx.exp.options)?;
            Ok((rc.condition.plan_name.clone(), reports))
        })
        .collect()
}

fn cmd_analyze(ctx: &Ctx) -> Result<(), Error> {
    let dir = ctx.out.join("reports");
    let mut flat = Vec::new();
    for (name, reports) in all_reports(ctx)? {
        let path = dir.join(format!("{}.json", file_stem(&name)));
        write_file(&path, &report_json(&reports)?)?;
        flat.extend(reports);
    }
    print!("{}", report_csv(&flat));
    Ok(())
}

fn cmd_report(ctx: &Ctx) -> Result<(), Error> {
    let flat: Vec<MetricsReport> = all_reports(ctx)?.into_iter().flat_map(|(_, r)| r).collect();
    let csv = report_csv(&flat);
    write_file(&ctx.out.join("report.csv"), &csv)?;
    write_file(&ctx.out.join("report.json"), &report_json(&flat)?)?;
    print!("{csv}");
    Ok(())
}

fn cmd_plot(ctx: &Ctx) -> Result<(), Error> {
    let store = ctx.store()?;
    let mut cache = DatasetCache::default();
    let dir = ctx.out.join("plots");
    let mut onset: BTreeMap<String, OnsetSeries> = BTreeMap::new();
    let mut written = Vec::new();
    for rc in &ctx.conditions {
        let data = cache.get(&ctx.exp, &rc.condition.dataset)?;
        let runs = varlab_core::experiment::load_condition(rc, data, &store)?;
        let histories: Vec<_> = runs.iter().map(|r| r.history.clone()).collect();
        let name = &rc.condition.plan_name;
        let path = dir.join(format!("trace_{}.svg", file_stem(name)));
        write_file(&path, &trace_svg(name, &histories))?;
        written.push(path);
        if let Some(e) = rc.condition.onset_epoch {
            let report = varlab_core::metrics::report_predictions(
                name,
                &runs.iter().map(|r| r.predictions.clone()).collect::<Vec<_>>(),
                data.test.labels(),
                None,
                &ctx.exp.options.report_options(),
            )?;
            onset
                .entry(rc.plan.clone())
                .or_insert_with(|| OnsetSeries {
                    label: format!("{} ({})", rc.plan, rc.condition.varied.label()),
                    points: Vec::new(),
                })
                .points
                .push((e, report.accuracy_sd));
        }
    }
    if !onset.is_empty() {
        let path = dir.join("onset.svg");
        write_file(&path, &onset_svg(&onset.into_values().collect::<Vec<_>>()))?;
        written.push(path);
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_fetch(ctx: &Ctx) -> Result<(), Error> {
    for (name, src) in &ctx.exp.datasets {
        let DatasetSource::Mnist { dir, files, .. } = src else {
            continue;
        };
        for (file, remote) in files {
            let dest = fetch_dataset(&remote.url, &remote.sha256, &dir.join(file))?;
            println!("{}", json!({ "dataset": name, "file": dest }));
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let ctx = Ctx::load(cli)?;
    match cli.command {
        Command::Plan => cmd_plan(&ctx),
        Command::Run => cmd_run(&ctx, cli.parallel, cli.resume),
        Command::Analyze => cmd_analyze(&ctx),
        Command::Report => cmd_report(&ctx),
        Command::Plot => cmd_plot(&ctx),
        Command::Fetch => cmd_fetch(&ctx),
    }
}

fn error_json(kind: &str, err: &dyn std::error::Error) -> String {
    let mut causes = Vec::new();
    let mut source = err.source();
    while let Some(s) = source {
        causes.push(s.to_string());
        source = s.source();
    }
    json!({ "error": kind, "message": err.to_string(), "causes": causes }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("usage", &e));
            return ExitCode::from(2);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e));
            ExitCode::FAILURE
        }
    }
}
