//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a data error, 2 on a usage error. Human
//! summaries go to stdout; machine-readable CSV/JSON files are written only
//! under the directory given by `--out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{self, format_2dp, IngestError};
use crate::regress::{
    default_warmup, evaluate, fit_ols, CoefficientStats, NowcastMode, RegressError,
};
use crate::report::{self, ModelScan, ReportError, Table};
use crate::select::{greedy_select, SelectConfig, SelectError};
use crate::stats::{SignificanceConfig, StatsError};
use crate::synth::{self, ScenarioConfig, SynthError};
use crate::timeseries::{QueryPanel, SeriesError, ShiftSpec, WeeklySeries};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("Io: {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: IngestError },
    #[error("UnknownQuery: `{0}` is not a column of the search panel")]
    UnknownQuery(String),
    #[error("NoQueries: none of the lexicon queries appear in the search panel")]
    NoQueries,
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Parser)]
#[command(
    name = "flunow",
    version,
    about = "Nowcast weekly case counts from search-volume series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-query correlation with cases, overall and per year
    Correlate(CorrelateArgs),
    /// Per-query correlation for every shift, overall and per year
    ShiftScan(ScanArgs),
    /// Greedy forward query selection across shifts
    Select(ScanArgs),
    /// Least-squares model with coefficient statistics
    Fit(FitArgs),
    /// Model estimates plus the model-by-shift table
    Nowcast(NowcastArgs),
    /// Generate a synthetic scenario as CSV fixtures
    Synth(SynthArgs),
    /// Long-format figure data for cases and search series
    ReportFig(FigArgs),
}

#[derive(Debug, Args)]
struct Inputs {
    /// Weekly case counts (`week,cases`)
    #[arg(long)]
    cases: PathBuf,
    /// Weekly search volumes (`week,<query>,...`)
    #[arg(long)]
    panel: PathBuf,
    /// Restrict the panel to queries listed in this lexicon
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Significance level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Directory for CSV/JSON outputs
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Shift in weeks; positive pairs search week t with case week t+k
    #[arg(long, default_value = "0", value_parser = parse_shift, allow_hyphen_values = true)]
    shift: ShiftSpec,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Inclusive shift range, e.g. `-2..2`
    #[arg(long, default_value = "-2..2", value_parser = parse_shifts, allow_hyphen_values = true)]
    shifts: ShiftList,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value = "0", value_parser = parse_shift, allow_hyphen_values = true)]
    shift: ShiftSpec,
    /// Comma-separated query labels (default: every panel query)
    #[arg(long, value_delimiter = ',')]
    queries: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Rolling,
}

#[derive(Debug, Args)]
struct NowcastArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Shift for the estimates (default: the shift chosen by selection)
    #[arg(long, value_parser = parse_shift, allow_hyphen_values = true)]
    shift: Option<ShiftSpec>,
    /// Shifts for selection and the model-by-shift table
    #[arg(long, default_value = "-2..2", value_parser = parse_shifts, allow_hyphen_values = true)]
    shifts: ShiftList,
    /// Comma-separated query labels (default: greedy selection)
    #[arg(long, value_delimiter = ',')]
    queries: Vec<String>,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    /// Weeks without estimates before rolling fits start
    #[arg(long)]
    warmup: Option<usize>,
    /// Replace negative estimates with zero
    #[arg(long)]
    clamp: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON scenario file; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    weeks: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    lead: Option<i32>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    signal_queries: Option<usize>,
    #[arg(long)]
    noise_queries: Option<usize>,
    /// Directory for cases.csv, panel.csv and scenario.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FigArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Comma-separated query labels (default: every panel query)
    #[arg(long, value_delimiter = ',')]
    queries: Vec<String>,
}

#[derive(Debug, Clone)]
struct ShiftList(Vec<ShiftSpec>);

fn parse_shift(text: &str) -> Result<ShiftSpec, String> {
    let k: i32 = text
        .parse()
        .map_err(|_| format!("`{text}` is not an integer"))?;
    ShiftSpec::new(k).map_err(|e| e.to_string())
}

fn parse_shifts(text: &str) -> Result<ShiftList, String> {
    let Some((lo, hi)) = text.split_once("..") else {
        return Ok(ShiftList(vec![parse_shift(text)?]));
    };
    let (lo, hi) = (parse_shift(lo)?, parse_shift(hi)?);
    if lo.weeks() > hi.weeks() {
        return Err(format!("empty range `{text}`"));
    }
    (lo.weeks()..=hi.weeks())
        .map(|k| ShiftSpec::new(k).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map(ShiftList)
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Correlate(a) => correlate(a, out),
        Command::ShiftScan(a) => shift_scan(a, out),
        Command::Select(a) => select(a, out),
        Command::Fit(a) => fit(a, out),
        Command::Nowcast(a) => nowcast(a, out),
        Command::Synth(a) => synth(a, out),
        Command::ReportFig(a) => report_fig(a, out),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let io = |path: &Path, e: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io(&path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io {
        path: PathBuf::from("<stdout>"),
        message: e.to_string(),
    })
}

struct Loaded {
    cases: WeeklySeries,
    panel: QueryPanel,
    cfg: SignificanceConfig,
}

fn load(inputs: &Inputs) -> Result<Loaded, CliError> {
    let input = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Input { path, source }
    };
    let cfg = SignificanceConfig::new(inputs.alpha)?;
    let cases = ingest::parse_cases_csv(&read(&inputs.cases)?).map_err(input(&inputs.cases))?;
    let mut panel =
        ingest::parse_trends_csv(&read(&inputs.panel)?).map_err(input(&inputs.panel))?;
    if let Some(path) = &inputs.lexicon {
        let lexicon = ingest::load_lexicon(&read(path)?).map_err(input(path))?;
        let keep: Vec<&str> = panel
            .labels()
            .filter(|l| lexicon.entries.iter().any(|e| e.query == *l))
            .collect();
        if keep.is_empty() {
            return Err(CliError::NoQueries);
        }
        panel = panel.subset(&keep)?;
    }
    Ok(Loaded { cases, panel, cfg })
}

fn pick(panel: &QueryPanel, queries: &[String]) -> Result<QueryPanel, CliError> {
    if queries.is_empty() {
        return Ok(panel.clone());
    }
    if let Some(q) = queries.iter().find(|q| panel.get(q).is_none()) {
        return Err(CliError::UnknownQuery(q.clone()));
    }
    Ok(panel.subset(queries)?)
}

fn write_table(dir: Option<&Path>, stem: &str, table: &Table) -> Result<(), CliError> {
    if let Some(dir) = dir {
        write_file(dir, &format!("{stem}.csv"), &table.to_csv())?;
        write_file(dir, &format!("{stem}.json"), &table.to_json())?;
    }
    Ok(())
}

fn correlate(a: CorrelateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let d = load(&a.inputs)?;
    let table = report::table_overall_annual(&d.panel, &d.cases, a.shift, &d.cfg);
    write_table(a.inputs.out.as_deref(), "correlation", &table)?;
    emit(
        out,
        &format!("shift {} ({})\n", a.shift, a.shift.describe()),
    )?;
    emit(out, &table.to_csv())
}

fn shift_scan(a: ScanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let d = load(&a.inputs)?;
    let table = report::table_shift_scan(&d.panel, &d.cases, &a.shifts.0, &d.cfg);
    write_table(a.inputs.out.as_deref(), "shift_scan", &table)?;
    emit(out, &table.to_csv())
}

fn select(a: ScanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let d = load(&a.inputs)?;
    let sel = greedy_select(
        &d.panel,
        &d.cases,
        &a.shifts.0,
        &SelectConfig::with_alpha(d.cfg),
    )?;
    if let Some(dir) = &a.inputs.out {
        let mut json = serde_json::to_string_pretty(&sel).expect("selection serializes");
        json.push('\n');
        write_file(dir, "selection.json", &json)?;
    }
    let mut text = format!(
        "best shift {} ({}), objective {}\n",
        sel.best_shift,
        sel.best_shift.describe(),
        format_2dp(sel.objective)
    );
    for step in &sel.trace {
        text.push_str(&format!(
            "{:>3}  {}  {}\n",
            step.step,
            format_2dp(step.objective_after),
            step.label_added
        ));
    }
    for s in &sel.per_shift {
        text.push_str(&format!(
            "shift {}: {} queries, objective {}\n",
            s.shift,
            s.chosen_labels.len(),
            format_2dp(s.objective)
        ));
    }
    emit(out, &text)
}

#[derive(Serialize)]
struct FitReport<'a> {
    shift: i32,
    alpha: f64,
    r_squared: f64,
    residual_dof: usize,
    rss: f64,
    intercept: &'a CoefficientStats,
    coefficients: Vec<NamedCoefficient<'a>>,
}

#[derive(Serialize)]
struct NamedCoefficient<'a> {
    query: &'a str,
    #[serde(flatten)]
    stats: &'a CoefficientStats,
}

fn coefficient_line(name: &str, c: &CoefficientStats) -> String {
    format!(
        "{name},{},{},{},{},{}\n",
        format_2dp(c.estimate),
        format_2dp(c.std_error),
        format_2dp(c.ci_low),
        format_2dp(c.ci_high),
        format_2dp(c.p_value)
    )
}

fn fit(a: FitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let d = load(&a.inputs)?;
    let panel = pick(&d.panel, &a.queries)?;
    let model = fit_ols(&panel, &d.cases, a.shift, d.cfg.alpha())?;
    let mut csv = String::from("term,estimate,std_error,ci_low,ci_high,p_value\n");
    csv.push_str(&coefficient_line("intercept", &model.intercept));
    for (label, c) in &model.coefficients {
        csv.push_str(&coefficient_line(label, c));
    }
    if let Some(dir) = &a.inputs.out {
        let rep = FitReport {
            shift: model.shift.weeks(),
            alpha: model.alpha,
            r_squared: model.r_squared,
            residual_dof: model.residual_dof,
            rss: model.rss,
            intercept: &model.intercept,
            coefficients: model
                .coefficients
                .iter()
                .map(|(query, stats)| NamedCoefficient { query, stats })
                .collect(),
        };
        let mut json = serde_json::to_string_pretty(&rep).expect("fit serializes");
        json.push('\n');
        write_file(dir, "fit.json", &json)?;
        write_file(dir, "coefficients.csv", &csv)?;
    }
    emit(
        out,
        &format!(
            "shift {} ({}), R^2 {}, residual dof {}\n{csv}",
            model.shift,
            model.shift.describe(),
            format_2dp(model.r_squared),
            model.residual_dof
        ),
    )
}

fn nowcast(a: NowcastArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let d = load(&a.inputs)?;
    let (panel, shift) = if a.queries.is_empty() {
        let sel = greedy_select(
            &d.panel,
            &d.cases,
            &a.shifts.0,
            &SelectConfig::with_alpha(d.cfg),
        )?;
        (
            d.panel.subset(&sel.chosen_labels)?,
            a.shift.unwrap_or(sel.best_shift),
        )
    } else {
        (
            pick(&d.panel, &a.queries)?,
            a.shift.unwrap_or(ShiftSpec::ZERO),
        )
    };
    let scan = ModelScan {
        mode: match a.mode {
            Mode::Full => NowcastMode::FullPeriod,
            Mode::Rolling => NowcastMode::RollingWeekly,
        },
        warmup: Some(
            a.warmup
                .unwrap_or_else(|| default_warmup(panel.n_queries())),
        ),
        clamp_nonnegative: a.clamp,
    };
    let est = report::model_estimates(&panel, &d.cases, shift, &scan, &d.cfg)?;
    let eval = evaluate(&est, &d.cases, &d.cfg);
    let labels: Vec<&str> = panel.labels().collect();
    let table =
        report::table_model_by_shift(&panel, &d.cases, &labels, &a.shifts.0, &scan, &d.cfg)?;

    if let Some(dir) = &a.inputs.out {
        let mut csv = String::from("week,actual,estimate\n");
        for (week, e) in est.iter() {
            let actual = d
                .cases
                .get(week)
                .map_or_else(|| "NA".to_string(), format_2dp);
            let e = e.map_or_else(|| "NA".to_string(), format_2dp);
            csv.push_str(&format!("{week},{actual},{e}\n"));
        }
        write_file(dir, "nowcast.csv", &csv)?;
        write_table(Some(dir), "model_by_shift", &table)?;
    }

    let mut text = format!(
        "mode {}, shift {} ({}), queries {}\n",
        est.mode.name(),
        shift,
        shift.describe(),
        labels.join(" ")
    );
    let cell = |c: report::Cell| c.render();
    text.push_str(&format!("overall r {}\n", cell(eval.overall.into())));
    for (year, c) in eval.per_year {
        text.push_str(&format!("{year} r {}\n", cell(c.into())));
    }
    text.push_str(&table.to_csv());
    emit(out, &text)
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_slice::<ScenarioConfig>(&read(path)?)
            .map_err(|e| SynthError::InvalidConfig(format!("{}: {e}", path.display())))?,
        None => ScenarioConfig::five_seasons(0),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.weeks {
        cfg.weeks = v;
    }
    if let Some(v) = a.lead {
        cfg.lead_weeks = v;
    }
    if let Some(v) = a.decay {
        cfg.attention_decay = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_sd = v;
    }
    if let Some(v) = a.signal_queries {
        cfg.n_signal_queries = v;
    }
    if let Some(v) = a.noise_queries {
        cfg.n_noise_queries = v;
    }
    let (cases, panel) = synth::generate(&cfg)?;
    write_file(&a.out, "cases.csv", &ingest::write_cases_csv(&cases)?)?;
    write_file(&a.out, "panel.csv", &ingest::write_trends_csv(&panel)?)?;
    let mut json = serde_json::to_string_pretty(&cfg).expect("scenario serializes");
    json.push('\n');
    write_file(&a.out, "scenario.json", &json)?;
    emit(
        out,
        &format!(
            "{} weeks from {} to {}, {} queries, seed {}\n",
            cases.len(),
            cases.start(),
            cases.end(),
            panel.n_queries(),
            cfg.seed
        ),
    )
}

fn report_fig(a: FigArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let d = load(&a.inputs)?;
    let panel = pick(&d.panel, &a.queries)?;
    let mut series = vec![d.cases];
    series.extend(panel.series().iter().cloned());
    let csv = report::figure_data(&series)?;
    match &a.inputs.out {
        Some(dir) => {
            write_file(dir, "figure.csv", &csv)?;
            emit(
                out,
                &format!(
                    "{} series, {} rows\n",
                    series.len(),
                    csv.lines().count() - 1
                ),
            )
        }
        None => emit(out, &csv),
    }
}
