//! `sph`: fit, apply and evaluate the softmax-pooling hybrid on response
//! matrices stored as RSP-CSV files.
//!
//! Every failure ends the process with a nonzero status and exactly one line
//! on stderr, `error: <message>`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use sph_core::dataset::{load_responses, save_responses, split};
use sph_core::hybrid::{evaluate, fit, load_model, predict_all, save_model};
use sph_core::metrics::{emit_report, ReportInputs};
use sph_core::sweep::{run_sweep, select};
use sph_core::synth::{confusion_fixture, generate};
use sph_core::{
    CenterStatistic, EvalReport, GeneratorSpec, HyperParams, SelectionPolicy, SplitSpec, SweepGrid,
    SweepResult,
};

#[derive(Parser, Debug)]
#[command(name = "sph", version)]
#[command(about = "Softmax-pooling hybrid classifier over pre-softmax responses")]
#[command(after_help = "Examples:
  sph synth --fixture 10 --samples-per-class 500 --seed 2024 --out all.csv
  sph split --data all.csv --val-size 2500 --test-size 2500 --val val.csv --test test.csv
  sph sweep --val val.csv --test test.csv --grid grid.json --out sweep.json
  sph fit --val val.csv --params params.json --out model.json
  sph eval --model model.json --data test.csv --out eval.json
  sph report sweep.json eval.json --out report/")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model on a validation set
    Fit {
        #[arg(long)]
        val: PathBuf,
        /// Hyperparameter document (JSON); omitted fields take defaults
        #[arg(long)]
        params: Option<PathBuf>,
        /// Overrides the center statistic from the params document
        #[arg(long, value_enum)]
        center: Option<Center>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-sample predictions as CSV
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a model against labeled data
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Training-set size of the upstream network, carried into reports
        #[arg(long)]
        n_train: Option<u64>,
        /// Defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every point of a hyperparameter grid
    Sweep {
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::BestVal)]
        policy: Policy,
        /// Overrides the center statistic from the grid document
        #[arg(long, value_enum)]
        center: Option<Center>,
        /// Worker threads (default: all cores)
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-row table as CSV
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Generate labeled responses from a generator spec
    Synth {
        #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
        spec: Option<PathBuf>,
        /// Use the built-in confusion fixture with this many classes
        #[arg(long, requires = "samples_per_class")]
        fixture: Option<usize>,
        /// Samples per class for --fixture
        #[arg(long)]
        samples_per_class: Option<usize>,
        /// Overrides the seed in the generator document
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a dataset into disjoint validation and test files
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val_size: usize,
        #[arg(long)]
        test_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Turn eval and sweep outputs into summary.json plus CSV tables
    Report {
        /// Eval reports and at most one sweep result, in any order
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Center {
    Mean,
    Median,
}

impl From<Center> for CenterStatistic {
    fn from(c: Center) -> Self {
        match c {
            Center::Mean => CenterStatistic::Mean,
            Center::Median => CenterStatistic::Median,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Policy {
    BestVal,
    BestTest,
}

impl From<Policy> for SelectionPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::BestVal => SelectionPolicy::BestValidation,
            Policy::BestTest => SelectionPolicy::BestTest,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let summary: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| {
                    !l.is_empty()
                        && !l.starts_with("tip:")
                        && !l.starts_with("For more information")
                })
                .collect();
            eprintln!("error: {}", summary.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit {
            val,
            params,
            center,
            out,
        } => {
            let mut params: HyperParams = match params {
                Some(p) => read_json(&p)?,
                None => HyperParams::default(),
            };
            if let Some(c) = center {
                params.center = c.into();
            }
            let val = load_responses(&val)?;
            let model = fit(&val, &params)?;
            save_model(&model, &out)?;
        }
        Command::Predict { model, data, out } => {
            let model = load_model(&model)?;
            let data = load_responses(&data)?;
            let mut table = String::from("index,predicted,route,softmax_top\n");
            for (i, o) in predict_all(&data, &model)?.iter().enumerate() {
                table.push_str(&format!(
                    "{i},{},{},{}\n",
                    o.predicted,
                    o.route.as_str(),
                    o.softmax_top
                ));
            }
            emit(out.as_deref(), &table)?;
        }
        Command::Eval {
            model,
            data,
            n_train,
            out,
        } => {
            let model = load_model(&model)?;
            let data = load_responses(&data)?;
            let mut report = evaluate(&data, &model)?;
            report.n_train = n_train;
            emit(out.as_deref(), &to_pretty(&report)?)?;
        }
        Command::Sweep {
            val,
            test,
            grid,
            policy,
            center,
            threads,
            out,
            table,
        } => {
            let mut grid: SweepGrid = read_json(&grid)?;
            if let Some(c) = center {
                grid.center = c.into();
            }
            let val = load_responses(&val)?;
            let test = load_responses(&test)?;
            let mut result = run_sweep(&val, &test, &grid, threads)?;
            match select(&result, policy.into()) {
                Ok(sel) => result.selection = Some(sel),
                Err(e) => eprintln!("warning: no selection: {e}"),
            }
            write_file(&out, &result.to_json())?;
            if let Some(table) = table {
                write_file(&table, &result.to_table_csv())?;
            }
        }
        Command::Synth {
            spec,
            fixture,
            samples_per_class,
            seed,
            out,
        } => {
            let mut spec: GeneratorSpec = match (spec, fixture, samples_per_class) {
                (Some(path), _, _) => read_json(&path)?,
                (None, Some(k), Some(n)) => confusion_fixture(k, n, 0)?,
                _ => bail!("synth needs --spec or --fixture with --samples-per-class"),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            save_responses(&generate(&spec)?, &out)?;
        }
        Command::Split {
            data,
            val_size,
            test_size,
            seed,
            val,
            test,
        } => {
            let data = load_responses(&data)?;
            let (v, t) = split(
                &data,
                SplitSpec {
                    val_size,
                    test_size,
                    seed,
                },
            )?;
            save_responses(&v, &val)?;
            save_responses(&t, &test)?;
        }
        Command::Report { inputs, out } => {
            let mut report = ReportInputs::default();
            for path in &inputs {
                let value: serde_json::Value = read_json(path)?;
                if value.get("rows").is_some() {
                    if report.sweep.is_some() {
                        bail!("{}: only one sweep result may be reported", path.display());
                    }
                    report.sweep = Some(from_value::<SweepResult>(value, path)?);
                } else {
                    report.evals.push(from_value::<EvalReport>(value, path)?);
                }
            }
            emit_report(&report, &out)?;
        }
    }
    Ok(())
}

/// Joins the error chain, dropping causes already quoted by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg.replace('\n', " ")
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: invalid document", path.display()))
}

fn from_value<T: DeserializeOwned>(value: serde_json::Value, path: &Path) -> Result<T> {
    serde_json::from_value(value).with_context(|| format!("{}: invalid document", path.display()))
}

fn to_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, body),
        None => match std::io::stdout().lock().write_all(body.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}
