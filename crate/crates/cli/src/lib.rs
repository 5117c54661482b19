//! Command implementations behind the `shrinkmean` binary.
//!
//! Every command is a pure function of its arguments and the files they name.
//! Failures split into configuration errors (exit 2) and runtime errors (exit 1).

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use shrinkmean::io::{self, Dataset, ReadOptions, Report, ReportFormat};
use shrinkmean::risk::{self, Design, McOptions, SweepFamily};
use shrinkmean::{CoefficientPolicy, EstimatorInput, QuadraticForm, Registry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad configuration, arguments or input data.
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<shrinkmean::Error> for CliError {
    fn from(e: shrinkmean::Error) -> Self {
        use shrinkmean::Error as E;
        match e {
            E::Config { .. } | E::UnknownEstimator(_) | E::Parse { .. } | E::Format(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn config_err(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("`{field}`: {msg}"))
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub family: SweepFamily,
    pub grid: Vec<f64>,
}

/// Contents of a `simulate` or `sweep` config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub design: Option<Design>,
    #[serde(default)]
    pub designs: Vec<Design>,
    pub estimators: Vec<String>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub policy: CoefficientPolicy,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    /// Parses a config, loading `{"kind": "custom", "path": ...}` blocks from
    /// CSV files resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> CliResult<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        inline_custom_files(&mut value, base, "")?;
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        if cfg.replications == 0 {
            return Err(config_err("replications", "must be at least 1"));
        }
        if cfg.design.is_none() && cfg.designs.is_empty() {
            return Err(config_err("design", "no design given"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn all_designs(&self) -> Vec<Design> {
        self.design.iter().chain(&self.designs).cloned().collect()
    }
}

fn inline_custom_files(value: &mut Value, base: &Path, at: &str) -> CliResult<()> {
    match value {
        Value::Object(map) => {
            if map.get("kind").and_then(Value::as_str) == Some("custom") {
                if let Some(Value::String(rel)) = map.remove("path") {
                    load_custom(map, &base.join(rel), at)?;
                }
            }
            for (k, v) in map.iter_mut() {
                let field = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                inline_custom_files(v, base, &field)?;
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                inline_custom_files(v, base, &format!("{at}[{i}]"))?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn load_custom(map: &mut Map<String, Value>, path: &Path, at: &str) -> CliResult<()> {
    let opts = ReadOptions {
        header: false,
        ..Default::default()
    };
    let ds = io::read_matrix_csv(path, &opts).map_err(|e| config_err(at, format!("{}: {e}", path.display())))?;
    let x = ds.matrix.values();
    if at.ends_with("sigma") {
        let rows: Vec<Vec<f64>> = (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect();
        map.insert("matrix".into(), serde_json::to_value(rows).expect("numbers serialize"));
    } else {
        let values: Vec<f64> = x.transpose().iter().copied().collect();
        map.insert("values".into(), serde_json::to_value(values).expect("numbers serialize"));
    }
    Ok(())
}

/// Flag-level overrides shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> CliResult<usize> {
    match flag.or(config) {
        Some(0) => Err(config_err("workers", "must be at least 1")),
        Some(w) => Ok(w),
        None => Ok(default_workers()),
    }
}

/// Writes to `path`, or stdout when no path is set.
fn emit(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
            }
            fs::write(p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

struct Prepared {
    cfg: RunConfig,
    opts: McOptions,
    out: Option<PathBuf>,
    format: ReportFormat,
    registry: Registry,
}

fn prepare(config: &Path, ov: &Overrides) -> CliResult<Prepared> {
    let cfg = RunConfig::load(config)?;
    let workers = resolve_workers(ov.workers, cfg.workers)?;
    let registry = Registry::standard();
    registry.resolve(&cfg.estimators)?;
    for (i, d) in cfg.all_designs().iter().enumerate() {
        d.validate().map_err(|e| match e {
            shrinkmean::Error::Config { field, message } => config_err(&format!("designs[{i}].{field}"), message),
            other => config_err(&format!("designs[{i}]"), other),
        })?;
    }
    let opts = McOptions::new(cfg.replications, ov.seed.unwrap_or(cfg.seed))
        .workers(workers)
        .policy(cfg.policy);
    Ok(Prepared {
        out: ov.out.clone().or_else(|| cfg.output.path.clone()),
        format: ov.format.unwrap_or(cfg.output.format),
        cfg,
        opts,
        registry,
    })
}

/// Runs every design in the config and writes one combined risk report.
pub fn cmd_simulate(config: &Path, ov: &Overrides) -> CliResult<()> {
    let p = prepare(config, ov)?;
    let reports = p
        .cfg
        .all_designs()
        .iter()
        .map(|d| risk::run_monte_carlo(d, &p.cfg.estimators, &p.registry, &p.opts))
        .collect::<Result<Vec<_>, _>>()?;
    let text = io::render_report(&Report::Risk(&reports), p.format)?;
    emit(&text, p.out.as_deref())
}

/// Runs the correlation sweep named by the config's `sweep` block.
pub fn cmd_sweep(config: &Path, ov: &Overrides) -> CliResult<()> {
    let p = prepare(config, ov)?;
    let sweep = p.cfg.sweep.as_ref().ok_or_else(|| config_err("sweep", "missing sweep block"))?;
    let designs = p.cfg.all_designs();
    let [base] = designs.as_slice() else {
        return Err(config_err("design", "a sweep takes exactly one base design"));
    };
    if sweep.grid.is_empty() {
        return Err(config_err("sweep.grid", "grid is empty"));
    }
    let (lo, hi) = sweep.family.documented_range();
    if let Some(bad) = sweep.grid.iter().find(|r| !(lo..=hi).contains(*r)) {
        return Err(config_err(
            "sweep.grid",
            format!("rho {bad} outside [{lo}, {hi}] for {}", sweep.family.label()),
        ));
    }
    let report = risk::rho_sweep(base, sweep.family, &sweep.grid, &p.cfg.estimators, &p.registry, &p.opts)?;
    let text = io::render_report(&Report::Sweep(&report), p.format)?;
    emit(&text, p.out.as_deref())
}

/// How `estimate` obtains its weighting matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum QArg {
    Identity,
    EstimatedDiag,
    Diagonal(PathBuf),
    Dense(PathBuf),
}

impl std::str::FromStr for QArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "identity" => Ok(QArg::Identity),
            None if s == "estimated_diag" => Ok(QArg::EstimatedDiag),
            Some(("diagonal", path)) => Ok(QArg::Diagonal(path.into())),
            Some(("dense", path)) => Ok(QArg::Dense(path.into())),
            _ => Err(format!(
                "unknown Q spec {s:?}; expected identity, estimated_diag, diagonal:<csv> or dense:<csv>"
            )),
        }
    }
}

impl QArg {
    fn build(&self, data: &Dataset) -> CliResult<QuadraticForm> {
        let p = data.matrix.p();
        let headerless = ReadOptions {
            header: false,
            ..Default::default()
        };
        let q = match self {
            QArg::Identity => QuadraticForm::identity(p),
            QArg::EstimatedDiag => QuadraticForm::estimate_from_sample(&data.matrix),
            QArg::Diagonal(path) => {
                let m = io::read_matrix_csv(path, &headerless)?.matrix;
                QuadraticForm::diagonal(m.values().transpose().iter().copied().collect())
            }
            QArg::Dense(path) => QuadraticForm::dense(io::read_matrix_csv(path, &headerless)?.matrix.into_values()),
        };
        let q = q.map_err(|e| config_err("q", e))?;
        if q.p() != p {
            return Err(config_err("q", format!("Q has dimension {}, data has {p} columns", q.p())));
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimateFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct EstimateArgs {
    pub data: PathBuf,
    pub read: ReadOptions,
    pub q: QArg,
    pub estimator: String,
    pub policy: CoefficientPolicy,
    pub seed: Option<u64>,
    pub format: EstimateFormat,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: String,
    pub source: String,
    pub seed: Option<u64>,
    pub columns: Vec<String>,
    pub estimate: Vec<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub degenerate: Option<bool>,
    pub y: Option<[f64; 4]>,
    pub diagnostics: Vec<(String, f64)>,
}

/// Applies one estimator to a data file.
pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let registry = Registry::standard();
    let est = registry.get(&args.estimator)?;
    let data = io::read_matrix_csv(&args.data, &args.read)?;
    let q = args.q.build(&data)?;
    let out = est.estimate(&EstimatorInput {
        data: &data.matrix,
        q: &q,
        policy: args.policy,
        truth: None,
    })?;
    let record = EstimateRecord {
        estimator: est.name().to_owned(),
        source: data.provenance.source.clone(),
        seed: args.seed,
        columns: data.column_labels.clone(),
        estimate: out.estimate.iter().copied().collect(),
        alpha: out.coefficients.map(|c| c.alpha),
        beta: out.coefficients.map(|c| c.beta),
        degenerate: out.coefficients.map(|c| c.degenerate),
        y: out.y.map(|y| [y.y1, y.y2, y.y3, y.y4]),
        diagnostics: out.diagnostics.clone(),
    };
    let text = match args.format {
        EstimateFormat::Json => serde_json::to_string_pretty(&record).expect("record serializes") + "\n",
        EstimateFormat::Csv => estimate_csv(&record),
    };
    emit(&text, args.out.as_deref())
}

fn estimate_csv(r: &EstimateRecord) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "# estimator={} source={}", r.estimator, r.source);
    if let Some(seed) = r.seed {
        let _ = writeln!(s, "# seed={seed}");
    }
    if let (Some(a), Some(b)) = (r.alpha, r.beta) {
        let _ = writeln!(s, "# alpha={a} beta={b} degenerate={}", r.degenerate.unwrap_or(false));
    }
    if let Some([y1, y2, y3, y4]) = r.y {
        let _ = writeln!(s, "# y1={y1} y2={y2} y3={y3} y4={y4}");
    }
    for (k, v) in &r.diagnostics {
        let _ = writeln!(s, "# {k}={v}");
    }
    s.push_str("column,estimate\n");
    for (c, v) in r.columns.iter().zip(&r.estimate) {
        let _ = writeln!(s, "{c},{v}");
    }
    s
}

#[derive(Debug, Clone)]
pub struct EprArgs {
    pub data: PathBuf,
    pub read: ReadOptions,
    pub train_sizes: Vec<usize>,
    pub genes: usize,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<String>,
    pub policy: CoefficientPolicy,
    pub workers: Option<usize>,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
}

/// Repeated train/test splits of a real (or synthetic) expression matrix.
pub fn cmd_epr(args: &EprArgs) -> CliResult<()> {
    let workers = resolve_workers(args.workers, None)?;
    let registry = Registry::standard();
    registry.resolve(&args.estimators)?;
    let data = io::read_matrix_csv(&args.data, &args.read)?;
    let opts = McOptions::new(args.reps, args.seed).workers(workers).policy(args.policy);
    let report = risk::run_epr(&data, &args.train_sizes, args.genes, &args.estimators, &registry, &opts)?;
    let text = io::render_report(&Report::Epr(&report), args.format)?;
    emit(&text, args.out.as_deref())
}
