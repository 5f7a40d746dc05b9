use std::path::PathBuf;
use std::str::FromStr;

use fracuc::inference::{corrected_output, estimate, select_p, EstimateOptions, FitResult};
use fracuc::reduced::{gph_estimate, gph_regression, GphEstimate};
use fracuc::simulate::{monte_carlo, simulate_stream, McSummary, GENERATOR};
use fracuc::ssmodel::{DMode, Deterministic, ModelSpec, Params};
use serde::Serialize;

use crate::coeffs::{coeff_map, ApproxArgs};
use crate::doc::{csv_writer, read_fit, read_params, sibling, write_json, Metadata};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest, DatasetInfo, IngestOptions, Transform};
use crate::period::{Frequency, Period};

/// Largest `|y - trend - cycle|` a decomposition may show.
pub const IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, clap::Args)]
pub struct InputArgs {
    /// CSV file with a header row, a date column and value columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Value column; optional when the file has exactly two columns.
    #[arg(long)]
    pub column: Option<String>,
    /// Date column; defaults to the first column.
    #[arg(long)]
    pub date_column: Option<String>,
    /// Sampling frequency; inferred from the dates when omitted.
    #[arg(long, value_enum)]
    pub frequency: Option<Frequency>,
    /// Take natural logarithms of the raw values.
    #[arg(long)]
    pub log: bool,
    /// Multiply the (logged) values by this factor.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

impl InputArgs {
    fn options(&self) -> IngestOptions {
        IngestOptions {
            column: self.column.clone(),
            date_column: self.date_column.clone(),
            frequency: self.frequency,
            transform: Transform {
                log: self.log,
                scale: self.scale,
            },
        }
    }
}

/// Cycle order: a fixed `p` or BIC selection over `0..=pmax`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Auto,
    Fixed(usize),
}

impl FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Order::Auto),
            _ => s
                .parse()
                .map(Order::Fixed)
                .map_err(|_| format!("'{s}' is neither 'auto' nor an order")),
        }
    }
}

/// Memory parameter: estimated, or `fixed=<value>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DChoice {
    Free,
    Fixed(f64),
}

impl FromStr for DChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "free" {
            return Ok(DChoice::Free);
        }
        s.strip_prefix("fixed=")
            .and_then(|v| v.parse().ok())
            .filter(|v: &f64| v.is_finite() && *v > 0.0)
            .map(DChoice::Fixed)
            .ok_or_else(|| format!("'{s}' is neither 'free' nor 'fixed=<positive value>'"))
    }
}

/// Model family: fractional trend and cycle, or the unit-root trend-cycle
/// model (`d = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Model {
    Ftfc,
    Tc,
}

fn resolve_d(model: Model, d: Option<DChoice>) -> CliResult<DMode> {
    match (model, d) {
        (Model::Ftfc, None | Some(DChoice::Free)) => Ok(DMode::Free),
        (Model::Ftfc, Some(DChoice::Fixed(v))) => Ok(DMode::Fixed(v)),
        (Model::Tc, None) => Ok(DMode::Fixed(1.0)),
        (Model::Tc, Some(DChoice::Fixed(1.0))) => Ok(DMode::Fixed(1.0)),
        (Model::Tc, Some(_)) => Err(CliError::Validation(
            "--model tc fixes d = 1 and cannot be combined with another --d".into(),
        )),
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Cycle order, or 'auto' for BIC selection up to --pmax.
    #[arg(long, default_value = "auto")]
    pub p: Order,
    #[arg(long, default_value_t = 4)]
    pub pmax: usize,
    /// 'free' or 'fixed=<value>'.
    #[arg(long)]
    pub d: Option<DChoice>,
    #[arg(long, value_enum, default_value = "ftfc")]
    pub model: Model,
    /// Period after which the trend slope changes (YYYYQn, or YYYY-MM for
    /// monthly data).
    #[arg(long = "break")]
    pub break_at: Option<String>,
    #[command(flatten)]
    pub approx: ApproxArgs,
    /// Random starting points of the screening stage.
    #[arg(long, default_value_t = 100)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct SelectionInfo {
    pmax: usize,
    /// BIC by order; `null` where the fit failed.
    bic: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
struct FitDoc<'a> {
    dataset: &'a DatasetInfo,
    break_period: Option<String>,
    fit: &'a FitResult,
    selection: Option<SelectionInfo>,
    metadata: Metadata,
}

fn estimate_options(starts: usize, seed: u64) -> CliResult<EstimateOptions> {
    if starts == 0 {
        return Err(CliError::Validation("--starts must be at least 1".into()));
    }
    Ok(EstimateOptions {
        starts,
        seed,
        ..EstimateOptions::default()
    })
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let data = ingest(&args.input.input, &args.input.options())?;
    let d_mode = resolve_d(args.model, args.d)?;
    let break_at = match &args.break_at {
        Some(label) => {
            let period =
                Period::parse_label(label, data.info.frequency).map_err(CliError::Validation)?;
            let t = data.position(period).ok_or_else(|| {
                CliError::Validation(format!(
                    "break {period} lies outside the sample {}..{}",
                    data.info.start, data.info.end
                ))
            })?;
            Some((t, period.to_string()))
        }
        None => None,
    };
    let n = data.n();
    let p0 = match args.p {
        Order::Fixed(p) => p,
        Order::Auto => 0,
    };
    let template = ModelSpec {
        p: p0,
        d_mode,
        deterministic: Deterministic {
            break_at: break_at.as_ref().map(|b| b.0),
        },
        v: args.approx.v,
        w: args.approx.w,
        l: args.approx.l.max(p0),
        n,
    };
    template.validate()?;
    let opts = estimate_options(args.starts, args.seed)?;
    let approximation = args.approx.approximation(n);
    let map = coeff_map(&approximation)?;

    let (fit, selection) = match args.p {
        Order::Fixed(_) => (estimate(&template, &data.values, &map, &opts)?, None),
        Order::Auto => {
            let s = select_p(&data.values, &template, args.pmax, &map, &opts)?;
            let info = SelectionInfo {
                pmax: args.pmax,
                bic: s.bic,
            };
            (s.fit, Some(info))
        }
    };
    let metadata = Metadata {
        seed: Some(args.seed),
        estimation: Some(opts),
        approximation: Some(approximation),
        ..Metadata::current()
    };
    write_json(
        &args.out,
        &FitDoc {
            dataset: &data.info,
            break_period: break_at.map(|b| b.1),
            fit: &fit,
            selection,
            metadata,
        },
    )?;
    eprintln!(
        "fit p = {}, log-likelihood {:.4}, BIC {:.4}: {}",
        fit.spec.p,
        fit.loglik,
        fit.bic,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, clap::Args)]
pub struct DecomposeArgs {
    /// Fit document written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// The CSV the fit was estimated on; its recorded column and transform
    /// are applied.
    #[arg(long)]
    pub input: PathBuf,
    /// Decomposition table. A tidy `<stem>_tidy.csv` for plotting and a
    /// `<stem>.json` summary are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct DecomposeDoc<'a> {
    dataset: &'a DatasetInfo,
    loglik: f64,
    max_identity_residual: f64,
    table: PathBuf,
    tidy: PathBuf,
    metadata: Metadata,
}

pub fn decompose(args: &DecomposeArgs) -> CliResult<()> {
    let doc = read_fit(&args.fit)?;
    let recorded = &doc.dataset;
    let opts = IngestOptions {
        column: Some(recorded.column.clone()),
        date_column: Some(recorded.date_column.clone()),
        frequency: Some(recorded.frequency),
        transform: recorded.transform,
    };
    let data = ingest(&args.input, &opts)?;
    if (&data.info.start, data.info.end.as_str()) != (&recorded.start, recorded.end.as_str()) {
        return Err(CliError::Validation(format!(
            "input covers {}..{} but the fit used {}..{}",
            data.info.start, data.info.end, recorded.start, recorded.end
        )));
    }
    let approximation = doc.metadata.approximation.ok_or_else(|| {
        CliError::Validation("fit document records no approximation settings".into())
    })?;
    let map = coeff_map(&approximation)?;
    let out = corrected_output(&doc.fit.params, &doc.fit.spec, &data.values, &map)?;

    let residual = data
        .values
        .iter()
        .zip(out.trend.iter().zip(&out.cycle))
        .map(|(y, (x, c))| (y - x - c).abs())
        .fold(0.0, f64::max);
    if !(residual <= IDENTITY_TOL) {
        return Err(CliError::Numerical(format!(
            "trend plus cycle misses the data by {residual:e}"
        )));
    }

    let tidy_path = sibling(&args.out, "_tidy.csv");
    let summary_path = sibling(&args.out, ".json");
    if summary_path == args.out {
        return Err(CliError::Validation(
            "--out must not be a .json file".into(),
        ));
    }
    let mut table = csv_writer(&args.out)?;
    let mut tidy = csv_writer(&tidy_path)?;
    table.write_record([
        "date",
        "y",
        "trend",
        "cycle",
        "correction_x",
        "correction_c",
    ])?;
    tidy.write_record(["date", "series", "value"])?;
    for t in 0..data.n() {
        let date = data.periods[t].start_date().to_string();
        let row = [
            data.values[t],
            out.trend[t],
            out.cycle[t],
            out.correction_x[t],
            out.correction_c[t],
        ];
        let mut record = vec![date.clone()];
        record.extend(row.iter().map(f64::to_string));
        table.write_record(&record)?;
        for (name, value) in ["y", "trend", "cycle", "correction_x", "correction_c"]
            .iter()
            .zip(row)
        {
            tidy.write_record([date.as_str(), name, &value.to_string()])?;
        }
    }
    table.flush().map_err(|e| CliError::io(&args.out, e))?;
    tidy.flush().map_err(|e| CliError::io(&tidy_path, e))?;
    let metadata = Metadata {
        seed: doc.metadata.seed,
        estimation: doc.metadata.estimation,
        approximation: Some(approximation),
        identity_tolerance: Some(IDENTITY_TOL),
        ..Metadata::current()
    };
    write_json(
        &summary_path,
        &DecomposeDoc {
            dataset: &data.info,
            loglik: out.loglik,
            max_identity_residual: residual,
            table: args.out.clone(),
            tidy: tidy_path,
            metadata,
        },
    )?;
    eprintln!(
        "decomposed {} observations: {}",
        data.n(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, clap::Args)]
pub struct SimulateArgs {
    /// Fit document, or JSON with `params` and `spec`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generator stream; replication `i` of `mc` uses stream `i`.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// First period (YYYYQn or YYYY-MM); defaults to the fitted sample's
    /// start, else 2000Q1.
    #[arg(long)]
    pub start: Option<String>,
    /// Defaults to the fitted sample's frequency, else quarterly.
    #[arg(long, value_enum)]
    pub frequency: Option<Frequency>,
    /// Path CSV with columns date, y, x, c, eta, eps. A `<stem>.json`
    /// document is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct SimulateDoc<'a> {
    params: &'a Params,
    spec: &'a ModelSpec,
    start: String,
    frequency: Frequency,
    n: usize,
    stream: u64,
    table: PathBuf,
    metadata: Metadata,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let src = read_params(&args.params)?;
    let freq = args
        .frequency
        .or(src.dataset.as_ref().map(|d| d.frequency))
        .unwrap_or(Frequency::Quarterly);
    let start_label = match (&args.start, &src.dataset) {
        (Some(s), _) => s.clone(),
        (None, Some(d)) if d.frequency == freq => d.start.clone(),
        _ => Period::new(freq, 2000, 0).to_string(),
    };
    let start = Period::parse_label(&start_label, freq).map_err(CliError::Validation)?;
    let path = simulate_stream(&src.params, &src.spec, args.n, args.seed, args.stream)?;

    let summary_path = sibling(&args.out, ".json");
    if summary_path == args.out {
        return Err(CliError::Validation(
            "--out must not be a .json file".into(),
        ));
    }
    let mut table = csv_writer(&args.out)?;
    table.write_record(["date", "y", "x", "c", "eta", "eps"])?;
    for t in 0..args.n {
        let mut record = vec![start.offset(t as i64).start_date().to_string()];
        record.extend(
            [path.y[t], path.x[t], path.c[t], path.eta[t], path.eps[t]]
                .iter()
                .map(f64::to_string),
        );
        table.write_record(&record)?;
    }
    table.flush().map_err(|e| CliError::io(&args.out, e))?;
    let metadata = Metadata {
        seed: Some(args.seed),
        generator: Some(GENERATOR.to_string()),
        ..Metadata::current()
    };
    write_json(
        &summary_path,
        &SimulateDoc {
            params: &path.params,
            spec: &path.spec,
            start: start.to_string(),
            frequency: freq,
            n: args.n,
            stream: args.stream,
            table: args.out.clone(),
            metadata,
        },
    )?;
    eprintln!("simulated {} observations: {}", args.n, args.out.display());
    Ok(())
}

/// Model fitted to each replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitModel {
    /// The simulated model's own structure.
    Same,
    Ftfc,
    Tc,
}

#[derive(Debug, Clone, clap::Args)]
pub struct McArgs {
    /// Fit document, or JSON with `params` and `spec`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub reps: usize,
    /// Replication `i` draws stream `i` of the generator seeded with this.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "same")]
    pub fit_model: FitModel,
    /// Cycle order of the fitted model; the simulated order by default.
    #[arg(long)]
    pub fit_p: Option<usize>,
    #[command(flatten)]
    pub approx: ApproxArgs,
    #[arg(long, default_value_t = 100)]
    pub starts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct McDoc<'a> {
    dgp_params: &'a Params,
    dgp_spec: &'a ModelSpec,
    fit_spec: &'a ModelSpec,
    summary: &'a McSummary,
    metadata: Metadata,
}

pub fn mc(args: &McArgs) -> CliResult<()> {
    let src = read_params(&args.params)?;
    let dgp = ModelSpec {
        n: args.n,
        ..src.spec.clone()
    };
    let p = args.fit_p.unwrap_or(dgp.p);
    let fit_spec = ModelSpec {
        p,
        d_mode: match args.fit_model {
            FitModel::Same => dgp.d_mode,
            FitModel::Ftfc => DMode::Free,
            FitModel::Tc => DMode::Fixed(1.0),
        },
        deterministic: dgp.deterministic,
        v: args.approx.v,
        w: args.approx.w,
        l: args.approx.l.max(p),
        n: args.n,
    };
    fit_spec.validate()?;
    let opts = estimate_options(args.starts, args.seed)?;
    let approximation = args.approx.approximation(args.n);
    let map = coeff_map(&approximation)?;
    let summary = monte_carlo(
        &src.params,
        &dgp,
        &fit_spec,
        args.n,
        args.reps,
        args.seed,
        &map,
        &opts,
    )?;
    let metadata = Metadata {
        seed: Some(args.seed),
        estimation: Some(opts),
        approximation: Some(approximation),
        generator: Some(GENERATOR.to_string()),
        ..Metadata::current()
    };
    write_json(
        &args.out,
        &McDoc {
            dgp_params: &src.params,
            dgp_spec: &dgp,
            fit_spec: &fit_spec,
            summary: &summary,
            metadata,
        },
    )?;
    eprintln!(
        "{} replications, {} failed: {}",
        summary.reps,
        summary.failures,
        args.out.display()
    );
    if summary.failures == summary.reps {
        return Err(CliError::Numerical(
            "every replication failed to fit".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, clap::Args)]
pub struct GphArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Bandwidth exponent: the lowest floor(n^alpha) frequencies are used.
    #[arg(long, default_value_t = 0.65)]
    pub alpha: f64,
    /// Regress on the series as given instead of on first differences plus
    /// one.
    #[arg(long)]
    pub levels: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct GphDoc<'a> {
    dataset: &'a DatasetInfo,
    differenced: bool,
    estimate: &'a GphEstimate,
    metadata: Metadata,
}

pub fn gph(args: &GphArgs) -> CliResult<()> {
    let data = ingest(&args.input.input, &args.input.options())?;
    let est = if args.levels {
        gph_regression(&data.values, args.alpha)?
    } else {
        gph_estimate(&data.values, args.alpha)?
    };
    write_json(
        &args.out,
        &GphDoc {
            dataset: &data.info,
            differenced: !args.levels,
            estimate: &est,
            metadata: Metadata::current(),
        },
    )?;
    eprintln!(
        "d = {:.4} (se {:.4}, {} frequencies): {}",
        est.d,
        est.se,
        est.bandwidth,
        args.out.display()
    );
    Ok(())
}
