//! The `tabal` command. Every output lands under `--out`; diagnostics go to
//! stderr as one JSON object per error.

pub mod args;
pub mod config;
pub mod error;
pub mod svg;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use tabal_core::acquisition::AcquisitionKind;
use tabal_core::corpus::{generate_corpus_with, load_corpus, save_corpus, split, GeneratorConfig, WordPools};
use tabal_core::experiment::{
    full_training_ceiling, read_curves_csv, run_grid, write_curves_csv, CeilingReport, CurveRow, ExperimentConfig,
    ExperimentData,
};
use tabal_core::table::{corpus_stats, CorpusStats};

pub use args::{Cli, Command};
pub use config::CliConfig;
pub use error::{CliError, CliResult};

use args::{CorpusArgs, GenArgs, ReportArgs, ServeArgs, SimulateArgs, TrainFullArgs};

/// Parse arguments, run, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = CliConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Gen(a) => gen(&cli, &config, a),
        Command::Simulate(a) => simulate(&cli, &config, a),
        Command::TrainFull(a) => train_full(&cli, &config, a),
        Command::Report(a) => report(&cli, a),
        Command::Serve(a) => serve(&cli, &config, a),
    }
}

fn create_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such file", path.display())))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(tabal_core::Error::from)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// File-name form of an acquisition function.
pub fn slug(kind: AcquisitionKind) -> &'static str {
    match kind {
        AcquisitionKind::Rand => "rand",
        AcquisitionKind::Mnlp => "mnlp",
        AcquisitionKind::MnlpPlus => "mnlp-plus",
        AcquisitionKind::Badge => "badge",
    }
}

#[derive(Serialize)]
struct GenStats<'a> {
    generator: &'a GeneratorConfig,
    train: CorpusStats,
    test: CorpusStats,
}

fn gen(cli: &Cli, config: &CliConfig, a: &GenArgs) -> CliResult<()> {
    let pools = match &a.pools {
        Some(dir) if !dir.is_dir() => return Err(CliError::Usage(format!("{}: not a directory", dir.display()))),
        Some(dir) => WordPools::from_dir(dir)?,
        None => WordPools::builtin(),
    };
    let generator = config.generator(cli.seed, a);
    if generator.n_tables == 0 {
        return Err(CliError::Usage("--tables must be at least 1".into()));
    }
    create_out(&cli.out)?;
    // Pool and test tables come from one draw so they share a distribution.
    let total = GeneratorConfig {
        n_tables: generator.n_tables + a.test_tables,
        ..generator.clone()
    };
    let full = generate_corpus_with(&total, &pools)?;
    let (train, test) = if a.test_tables == 0 {
        (full, Default::default())
    } else {
        split(&full, a.test_tables as f64 / total.n_tables as f64, generator.rng_seed)?
    };
    save_corpus(&train, cli.out.join("train.jsonl"))?;
    save_corpus(&test, cli.out.join("test.jsonl"))?;
    let stats = GenStats {
        generator: &generator,
        train: corpus_stats(&train),
        test: corpus_stats(&test),
    };
    write_json(&cli.out.join("stats.json"), &stats)?;
    let s = &stats.train;
    println!(
        "train: {} tables, {} cells, {} labels, {:.3} labels/cell, {:.3} O-only cells",
        s.tables, s.cells, s.labels, s.labels_per_cell, s.o_only_fraction
    );
    println!(
        "spans: TAG {} EQ {} QUANT {} UoM {}",
        s.tag_spans, s.eq_spans, s.quant_spans, s.uom_spans
    );
    println!("test: {} tables, {} cells", stats.test.tables, stats.test.cells);
    Ok(())
}

fn corpus_paths(out: &Path, a: &CorpusArgs) -> CliResult<(PathBuf, PathBuf)> {
    let train = a.train.clone().unwrap_or_else(|| out.join("train.jsonl"));
    let test = a.test.clone().unwrap_or_else(|| out.join("test.jsonl"));
    require_file(&train)?;
    require_file(&test)?;
    Ok((train, test))
}

fn load_data(train: &Path, test: &Path, config: &ExperimentConfig) -> CliResult<ExperimentData> {
    let train = load_corpus(train)?;
    let test = load_corpus(test)?;
    if let Some(t) = test.tables().iter().find(|t| train.table(t.id()).is_some()) {
        return Err(tabal_core::Error::Validation(format!("table {} is in both train and test", t.id())).into());
    }
    Ok(ExperimentData::new(train, test, config.validation_fraction, config.rng_seed)?)
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

#[derive(Serialize)]
struct TimingRow {
    acquisition: AcquisitionKind,
    repeat: usize,
    iteration: usize,
    labels: usize,
    wall_clock_secs: f64,
}

fn simulate(cli: &Cli, config: &CliConfig, a: &SimulateArgs) -> CliResult<()> {
    let experiment = config.simulation(cli.seed, a);
    experiment.validate()?;
    let (train, test) = corpus_paths(&cli.out, &a.corpus)?;
    create_out(&cli.out)?;
    let data = load_data(&train, &test, &experiment)?;
    experiment.validate_for(&data.train)?;
    let start = Instant::now();
    let grid = run_grid(&experiment, &data, jobs(cli))?;
    let elapsed = start.elapsed().as_secs_f64();

    write_json(&cli.out.join("experiment.json"), &experiment)?;
    let csv_path = cli.out.join("curves.csv");
    let file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    write_curves_csv(&grid.curves, BufWriter::new(file))?;
    write_json(&cli.out.join("curves.json"), &grid.curves)?;

    let batches = cli.out.join("batches");
    create_out(&batches)?;
    for run in &grid.runs {
        let path = batches.join(format!("{}-r{}.json", slug(run.kind), run.repeat));
        write_json(&path, &run.batches)?;
    }
    let timings_path = cli.out.join("timings.csv");
    let mut w = csv::Writer::from_path(&timings_path).map_err(tabal_core::Error::from)?;
    for run in &grid.runs {
        for r in &run.records {
            w.serialize(TimingRow {
                acquisition: run.kind,
                repeat: run.repeat,
                iteration: r.iteration,
                labels: r.labels,
                wall_clock_secs: r.wall_clock_secs,
            })
            .map_err(tabal_core::Error::from)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&timings_path, e))?;

    println!(
        "{} acquisition functions x {} repeats x {} iterations in {elapsed:.1}s",
        experiment.acquisitions.len(),
        experiment.n_repeats,
        experiment.n_iterations
    );
    for c in &grid.curves {
        let last = c.summary.last();
        println!(
            "{:<6} labels {:>5}  final F1 {}  tables/batch {}{}",
            c.acquisition.to_string(),
            last.map_or(0, |s| s.labels),
            fmt_opt(last.and_then(|s| s.f1_mean), last.and_then(|s| s.f1_std)),
            c.mean_diversity_from(1).map_or("-".into(), |d| format!("{d:.1}")),
            if c.truncated { "  (truncated)" } else { "" }
        );
    }
    Ok(())
}

fn fmt_opt(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "-".into(),
    }
}

fn train_full(cli: &Cli, config: &CliConfig, a: &TrainFullArgs) -> CliResult<()> {
    let experiment = config.experiment(cli.seed, &a.corpus);
    experiment.validate()?;
    let (train, test) = corpus_paths(&cli.out, &a.corpus)?;
    create_out(&cli.out)?;
    let data = load_data(&train, &test, &experiment)?;
    let report = full_training_ceiling(&experiment, &data)?;
    write_json(&cli.out.join("ceiling.json"), &report)?;
    println!(
        "ceiling over {} repeats: F1 {}",
        report.repeats.len(),
        fmt_opt(report.f1_mean, report.f1_std)
    );
    Ok(())
}

/// Rows grouped by acquisition function, in order of first appearance.
fn group_rows(rows: Vec<CurveRow>) -> Vec<(AcquisitionKind, Vec<CurveRow>)> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<usize, Vec<CurveRow>> = BTreeMap::new();
    for row in rows {
        let i = match order.iter().position(|k| *k == row.acquisition) {
            Some(i) => i,
            None => {
                order.push(row.acquisition);
                order.len() - 1
            }
        };
        groups.entry(i).or_default().push(row);
    }
    order.into_iter().zip(groups.into_values()).collect()
}

fn report(cli: &Cli, a: &ReportArgs) -> CliResult<()> {
    let curves_path = a.curves.clone().unwrap_or_else(|| cli.out.join("curves.csv"));
    require_file(&curves_path)?;
    let ceiling_path = match &a.ceiling {
        Some(p) => {
            require_file(p)?;
            Some(p.clone())
        }
        None => Some(cli.out.join("ceiling.json")).filter(|p| p.is_file()),
    };
    create_out(&cli.out)?;
    let file = fs::File::open(&curves_path).map_err(|e| CliError::io(&curves_path, e))?;
    let rows = read_curves_csv(file)?;
    if rows.is_empty() {
        return Err(tabal_core::Error::Validation(format!("{}: no curve rows", curves_path.display())).into());
    }
    let ceiling: Option<CeilingReport> = match &ceiling_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Some(serde_json::from_str(&text).map_err(tabal_core::Error::from)?)
        }
        None => None,
    };
    let groups = group_rows(rows);
    let reference = ceiling.as_ref().and_then(|c| c.f1_mean).map(|f| ("ceiling".to_string(), f));

    let f1 = svg::Chart {
        title: "Test micro F1".into(),
        x_label: "labeled cells".into(),
        y_label: "micro F1".into(),
        series: groups
            .iter()
            .map(|(k, rows)| svg::Series {
                name: k.to_string(),
                points: rows
                    .iter()
                    .filter_map(|r| r.f1_mean.map(|m| (r.labels as f64, m, r.f1_std.unwrap_or(0.0))))
                    .collect(),
            })
            .collect(),
        reference: reference.clone(),
    };
    let tables = svg::Chart {
        title: "Tables per batch".into(),
        x_label: "labeled cells".into(),
        y_label: "distinct tables".into(),
        series: groups
            .iter()
            .map(|(k, rows)| svg::Series {
                name: k.to_string(),
                points: rows
                    .iter()
                    .filter_map(|r| r.tables_mean.map(|m| (r.labels as f64, m, r.tables_std.unwrap_or(0.0))))
                    .collect(),
            })
            .collect(),
        reference: None,
    };
    write_text(&cli.out.join("f1.svg"), &f1.render())?;
    write_text(&cli.out.join("tables.svg"), &tables.render())?;

    let mut md = String::from("# Learning curves\n\n");
    md.push_str("| acquisition | iterations | final labels | final F1 (mean ± std) | tables per batch (iterations ≥ 2) |\n");
    md.push_str("|---|---:|---:|---:|---:|\n");
    for (k, rows) in &groups {
        let last = rows.last().expect("groups are non-empty");
        let div: Vec<f64> = rows.iter().filter(|r| r.iteration >= 2).filter_map(|r| r.tables_mean).collect();
        let div = if div.is_empty() {
            "-".to_string()
        } else {
            format!("{:.2}", div.iter().sum::<f64>() / div.len() as f64)
        };
        md.push_str(&format!(
            "| {k} | {} | {} | {} | {div} |\n",
            rows.len(),
            last.labels,
            fmt_opt(last.f1_mean, last.f1_std)
        ));
    }
    if let Some(c) = &ceiling {
        md.push_str(&format!(
            "\nFull-pool ceiling over {} repeats: F1 {}\n",
            c.repeats.len(),
            fmt_opt(c.f1_mean, c.f1_std)
        ));
    }
    md.push_str("\n![F1](f1.svg)\n\n![Tables per batch](tables.svg)\n");
    write_text(&cli.out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn serve(cli: &Cli, config: &CliConfig, a: &ServeArgs) -> CliResult<()> {
    let serve = config.serve(&cli.out, a);
    let data_dir = serve.data_dir.expect("serve config resolves a data directory");
    let state = tabal_service::AppState::open(&data_dir).map_err(CliError::Service)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Service(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(serve.bind)
            .await
            .map_err(|e| CliError::Service(format!("cannot bind {}: {e}", serve.bind)))?;
        println!("serving on http://{} with data in {}", serve.bind, data_dir.display());
        tabal_service::serve(listener, state)
            .await
            .map_err(|e| CliError::Service(e.to_string()))
    })
}
