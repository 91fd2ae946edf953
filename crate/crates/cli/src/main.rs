//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use failbench::aggregate::{aggregate_report, mean, write_aggregate_csv, Direction, ImputationPolicy, MeasureSpec};
use failbench::engine::{run_grid_with_sink, Method, NdjsonSink, RunConfig, RuntimeSubset};
use failbench::pipeline::expand_pipelines;
use failbench::report::{
    emit_failure_summary, emit_threefold, render_boxplot, sha256_hex, BoxSeries, FailureAnnotation, ReproStamp,
    DEFAULT_CHALLENGING_THRESHOLD,
};
use failbench::study_ci::{run_ci_study, write_ci_outputs, CiStudyConfig};
use failbench::study_or::{
    default_fallback_map, default_scenarios, pipeline_table, run_or_study, write_or_outputs, ContingencyTable2x2,
    OrEstimator, OrScenario, OrStudyConfig, DEFAULT_P0, DEFAULT_REPS, QUICK_REPS,
};
use failbench::{DatasetId, MethodId, ResultTable};

#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

fn cfg_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "failbench", version, about = "Failure-aware method comparison harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file whose keys mirror the long flag names; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run odds-ratio estimators over a CSV of 2x2 tables.
    Run(RunArgs),
    /// Aggregate a result table under every basis.
    Aggregate(AggregateArgs),
    /// Threefold report, failure summary and boxplot for a result table.
    Report(ReportArgs),
    /// Built-in replication studies.
    Study {
        #[command(subcommand)]
        study: Study,
    },
}

#[derive(Subcommand)]
enum Study {
    /// Odds-ratio estimators under sampling zeros.
    Or(OrArgs),
    /// Coverage of naive and corrected AUC intervals.
    Ci(CiArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with columns dataset,n11,n10,n01,n00.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Comma-separated estimator names (default: all).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    budget_ms: Option<u64>,
    /// method=NAME,fraction=F,seed=S (repeatable).
    #[arg(long)]
    runtime_subset: Vec<String>,
    /// Also evaluate the default fallback pipelines.
    #[arg(long)]
    pipelines: bool,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    common: Common,
    /// Result table (.json or .csv).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    measure: Option<String>,
    /// higher | lower-abs | lower | target:X
    #[arg(long)]
    direction: Option<String>,
    /// worst:X | method-mean | cross-mean | threshold:T:X
    #[arg(long)]
    impute: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    table: Option<PathBuf>,
    /// JSON list of failure annotations.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Share of methods that must fail for a data set to count as challenging.
    #[arg(long)]
    challenging: Option<f64>,
    /// Offset of failure markers above the boxplot range, as a share of it.
    #[arg(long)]
    failure_offset: Option<f64>,
}

#[derive(Args)]
struct OrArgs {
    #[command(flatten)]
    common: Common,
    /// TOML file with [[scenario]] entries (n_obs, true_or, p_x, p0, n_rep).
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    /// 10 000 replications per scenario.
    #[arg(long)]
    quick: bool,
    /// Rank by signed instead of absolute log-bias.
    #[arg(long)]
    signed_ranks: bool,
    #[arg(long)]
    max_fallbacks: Option<usize>,
}

#[derive(Args)]
struct CiArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Minimum impurity decrease for the stump to split.
    #[arg(long)]
    tau: Option<f64>,
    /// Population size per iteration.
    #[arg(long)]
    n: Option<usize>,
    /// Correction term of method C.
    #[arg(long)]
    c: Option<f64>,
}

/// Values from `--config`, looked up by flag name with `-` or `_`.
struct Settings {
    table: toml::Table,
    text: String,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self {
                table: toml::Table::new(),
                text: String::new(),
            });
        };
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let table = text.parse::<toml::Table>().map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Ok(Self { table, text })
    }

    fn raw(&self, key: &str) -> Option<&toml::Value> {
        self.table.get(key).or_else(|| self.table.get(&key.replace('-', "_")))
    }

    fn int(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(cfg_err(format!("`{key}` must be a non-negative integer, got {v}"))),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(cfg_err(format!("`{key}` must be a number, got {v}"))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(cfg_err(format!("`{key}` must be a string, got {v}"))),
        }
    }

    fn boolean(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(cfg_err(format!("`{key}` must be a boolean, got {v}"))),
        }
    }

    fn strings(&self, key: &str) -> Result<Vec<String>> {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(toml::Value::String(s)) => Ok(vec![s.clone()]),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| cfg_err(format!("`{key}` entries must be strings"))))
                .collect(),
            Some(v) => Err(cfg_err(format!("`{key}` must be a string or list of strings, got {v}"))),
        }
    }
}

struct Resolved {
    settings: Settings,
    seed: u64,
    out: PathBuf,
    workers: usize,
}

fn resolve(common: &Common, default_seed: u64) -> Result<Resolved> {
    let settings = Settings::load(common.config.as_deref())?;
    let seed = match common.seed {
        Some(s) => s,
        None => settings.int("seed")?.unwrap_or(default_seed),
    };
    let out = match &common.out {
        Some(p) => p.clone(),
        None => settings.string("out")?.map(PathBuf::from).unwrap_or_else(|| PathBuf::from("failbench-out")),
    };
    let workers = match common.workers {
        Some(w) => w,
        None => settings.int("workers")?.map(|w| w as usize).unwrap_or(1),
    };
    if workers == 0 {
        return Err(cfg_err("workers must be at least 1"));
    }
    Ok(Resolved {
        settings,
        seed,
        out,
        workers,
    })
}

fn pick<T>(flag: Option<T>, cfg: Option<T>) -> Option<T> {
    flag.or(cfg)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| data_err(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn parse_runtime_subset(s: &str) -> Result<(MethodId, RuntimeSubset)> {
    let mut method = None;
    let mut fraction = None;
    let mut seed = None;
    for part in s.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("runtime subset `{s}`: expected key=value pairs")))?;
        match k.trim() {
            "method" => method = Some(MethodId::new(v.trim()).map_err(cfg_err)?),
            "fraction" => fraction = Some(v.trim().parse::<f64>().map_err(|e| cfg_err(format!("fraction: {e}")))?),
            "seed" => seed = Some(v.trim().parse::<u64>().map_err(|e| cfg_err(format!("seed: {e}")))?),
            other => return Err(cfg_err(format!("runtime subset: unknown key `{other}`"))),
        }
    }
    let method = method.ok_or_else(|| cfg_err(format!("runtime subset `{s}`: missing method")))?;
    let fraction = fraction.ok_or_else(|| cfg_err(format!("runtime subset `{s}`: missing fraction")))?;
    Ok((
        method,
        RuntimeSubset {
            fraction,
            selection_seed: seed.unwrap_or(0),
        },
    ))
}

#[derive(Deserialize)]
struct TableRow {
    dataset: String,
    n11: u32,
    n10: u32,
    n01: u32,
    n00: u32,
}

fn read_2x2(path: &Path) -> Result<Vec<(DatasetId, ContingencyTable2x2)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<TableRow>() {
        let r = row.map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        out.push((
            DatasetId::new(r.dataset).map_err(data_err)?,
            ContingencyTable2x2::new(r.n11, r.n10, r.n01, r.n00),
        ));
    }
    if out.is_empty() {
        return Err(data_err(format!("{}: no tables", path.display())));
    }
    Ok(out)
}

fn read_table(path: &Path) -> Result<ResultTable> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let f = File::open(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        ResultTable::read_csv(f).map_err(|e| data_err(format!("{}: {e}", path.display())))
    } else {
        let s = std::fs::read_to_string(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        ResultTable::from_json(&s).map_err(|e| data_err(format!("{}: {e}", path.display())))
    }
}

fn write_table(table: &ResultTable, dir: &Path, stem: &str) -> Result<()> {
    write_file(&dir.join(format!("{stem}.json")), table.to_json())?;
    write_file(&dir.join(format!("{stem}.csv")), table.to_csv_string())
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let r = resolve(&a.common, 2024)?;
    let s = &r.settings;
    let tables = pick(a.tables.clone(), s.string("tables")?.map(PathBuf::from))
        .ok_or_else(|| cfg_err("run needs --tables"))?;
    let names = if a.methods.is_empty() { s.strings("methods")? } else { a.methods.clone() };
    let estimators: Vec<OrEstimator> = if names.is_empty() {
        OrEstimator::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| OrEstimator::parse(n.trim()).ok_or_else(|| cfg_err(format!("unknown estimator `{n}`"))))
            .collect::<Result<_>>()?
    };
    let budget = pick(a.budget_ms, s.int("budget-ms")?).map(Duration::from_millis);
    let mut subset_specs = a.runtime_subset.clone();
    if subset_specs.is_empty() {
        subset_specs = s.strings("runtime-subset")?;
    }
    let runtime_subsets = subset_specs
        .iter()
        .map(|x| parse_runtime_subset(x))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let config = RunConfig {
        master_seed: r.seed,
        budget,
        workers: r.workers,
        runtime_subsets,
    };
    config.validate().map_err(cfg_err)?;

    let datasets = read_2x2(&tables)?;
    create_out(&r.out)?;
    let log_path = r.out.join("cells.ndjson");
    let log = File::create(&log_path).map_err(|e| data_err(format!("{}: {e}", log_path.display())))?;
    let sink = NdjsonSink::new(BufWriter::new(log));
    let methods: Vec<&dyn Method<ContingencyTable2x2>> = estimators.iter().map(|e| e as &dyn Method<_>).collect();
    let table = run_grid_with_sink(&methods, &datasets, &config, Some(&sink)).map_err(cfg_err)?;
    sink.into_inner().flush().map_err(data_err)?;
    write_table(&table, &r.out, "results")?;
    if !table.runtime_subsets.is_empty() {
        let manifest = serde_json::to_string_pretty(&table.runtime_subsets).expect("manifest serializes");
        write_file(&r.out.join("runtime_subsets.json"), manifest)?;
    }
    if a.pipelines || s.boolean("pipelines")? {
        let bases: Vec<MethodId> = OrEstimator::COMPARED
            .iter()
            .filter(|e| estimators.contains(e))
            .map(|e| e.id())
            .collect();
        let present: Vec<MethodId> = estimators.iter().map(|e| e.id()).collect();
        let fb: BTreeMap<MethodId, Vec<MethodId>> = default_fallback_map()
            .into_iter()
            .filter(|(b, _)| present.contains(b))
            .map(|(b, f)| (b, f.into_iter().filter(|m| present.contains(m)).collect()))
            .collect();
        let pipelines = expand_pipelines(&bases, &fb, 1, false).map_err(cfg_err)?;
        let pipe = pipeline_table(&table, &pipelines).map_err(data_err)?;
        write_table(&pipe, &r.out, "pipelines")?;
    }
    let stamp = ReproStamp::new(r.seed, &s.text);
    write_file(&r.out.join("stamp.json"), serde_json::to_string_pretty(&stamp).expect("stamp"))?;
    println!(
        "ran {} estimators on {} tables; results in {}",
        estimators.len(),
        datasets.len(),
        r.out.display()
    );
    Ok(())
}

fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "higher" => Ok(Direction::HigherBetter),
        "lower-abs" => Ok(Direction::LowerAbsBetter),
        "lower" => Ok(Direction::LowerBetter),
        _ => match s.strip_prefix("target:") {
            Some(t) => t
                .parse::<f64>()
                .map(Direction::CloserToTarget)
                .map_err(|e| cfg_err(format!("direction `{s}`: {e}"))),
            None => Err(cfg_err(format!("unknown direction `{s}`"))),
        },
    }
}

fn parse_policy(s: &str) -> Result<ImputationPolicy> {
    let num = |x: &str| x.parse::<f64>().map_err(|e| cfg_err(format!("imputation `{s}`: {e}")));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["worst", x] => Ok(ImputationPolicy::WorstValue { worst: num(x)? }),
        ["method-mean"] => Ok(ImputationPolicy::MeanOfMethodRemaining),
        ["cross-mean"] => Ok(ImputationPolicy::CrossMethodMean),
        ["threshold", t, x] => Ok(ImputationPolicy::ThresholdRule {
            threshold: num(t)?,
            worst: num(x)?,
        }),
        _ => Err(cfg_err(format!("unknown imputation policy `{s}`"))),
    }
}

fn cmd_aggregate(a: &AggregateArgs) -> Result<()> {
    let r = resolve(&a.common, 0)?;
    let s = &r.settings;
    let path = pick(a.table.clone(), s.string("table")?.map(PathBuf::from))
        .ok_or_else(|| cfg_err("aggregate needs --table"))?;
    let direction = pick(a.direction.clone(), s.string("direction")?)
        .map(|d| parse_direction(&d))
        .transpose()?;
    let policy = pick(a.impute.clone(), s.string("impute")?)
        .map(|p| parse_policy(&p))
        .transpose()?;
    let name = pick(a.measure.clone(), s.string("measure")?);
    let table = read_table(&path)?;
    let measure = match (&table.measure, name, direction) {
        (_, Some(n), Some(d)) => MeasureSpec::new(n, d),
        (Some(m), n, d) => MeasureSpec::new(n.unwrap_or_else(|| m.name.clone()), d.unwrap_or(m.direction)),
        (None, n, d) => MeasureSpec::new(n.unwrap_or_else(|| "value".into()), d.unwrap_or(Direction::HigherBetter)),
    };
    let rows = aggregate_report(&table, &measure, mean, policy.as_ref()).map_err(data_err)?;
    create_out(&r.out)?;
    let mut buf = Vec::new();
    write_aggregate_csv(&rows, &mut buf).map_err(data_err)?;
    write_file(&r.out.join("aggregate.csv"), buf)?;
    let doc = serde_json::json!({
        "measure": measure,
        "imputation": policy.as_ref().map(ImputationPolicy::name),
        "rows": rows,
    });
    write_file(&r.out.join("aggregate.json"), serde_json::to_string_pretty(&doc).expect("json"))?;
    if let Some(p) = &policy {
        let t = failbench::aggregate::impute(&table, p).map_err(data_err)?;
        write_table(&t, &r.out, "imputed")?;
    }
    println!("{} aggregate rows written to {}", rows.len(), r.out.display());
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let r = resolve(&a.common, 0)?;
    let s = &r.settings;
    let path = pick(a.table.clone(), s.string("table")?.map(PathBuf::from))
        .ok_or_else(|| cfg_err("report needs --table"))?;
    let threshold = pick(a.challenging, s.float("challenging")?).unwrap_or(DEFAULT_CHALLENGING_THRESHOLD);
    let offset = pick(a.failure_offset, s.float("failure-offset")?).unwrap_or(0.05);
    if !(0.0..=1.0).contains(&threshold) || !(offset >= 0.0 && offset.is_finite()) {
        return Err(cfg_err("challenging must lie in [0, 1] and failure-offset must be >= 0"));
    }
    let table = read_table(&path)?;
    let annotations: Vec<FailureAnnotation> =
        match pick(a.annotations.clone(), s.string("annotations")?.map(PathBuf::from)) {
            None => Vec::new(),
            Some(p) => {
                let text =
                    std::fs::read_to_string(&p).map_err(|e| data_err(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| data_err(format!("{}: {e}", p.display())))?
            }
        };
    let digest_input = format!("{}\n{}", s.text, sha256_hex(table.without_timing().to_json_compact().as_bytes()));
    let stamp = ReproStamp::new(r.seed, &digest_input);
    let threefold = emit_threefold(&table, stamp.clone()).map_err(data_err)?;
    let summary = emit_failure_summary(&table, &annotations, threshold, stamp).map_err(data_err)?;
    create_out(&r.out)?;
    write_file(&r.out.join("threefold.csv"), threefold.to_csv_string())?;
    write_file(&r.out.join("threefold.json"), threefold.to_json())?;
    write_file(
        &r.out.join("failure_summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    let series: Vec<BoxSeries> = table
        .methods()
        .iter()
        .map(|m| BoxSeries::from_table(&table, m))
        .collect::<std::result::Result<_, _>>()
        .map_err(data_err)?;
    let title = table.measure.as_ref().map_or("value", |m| m.name.as_str());
    write_file(&r.out.join("boxplot.svg"), render_boxplot(title, &series, offset))?;
    println!("report written to {}", r.out.display());
    Ok(())
}

#[derive(Deserialize)]
struct ScenarioFile {
    scenario: Vec<OrScenario>,
}

fn cmd_study_or(a: &OrArgs) -> Result<()> {
    let r = resolve(&a.common, 2024)?;
    let s = &r.settings;
    let quick = a.quick || s.boolean("quick")?;
    let reps = pick(a.reps, s.int("reps")?.map(|v| v as usize)).unwrap_or(if quick { QUICK_REPS } else { DEFAULT_REPS });
    let p0 = pick(a.p0, s.float("p0")?).unwrap_or(DEFAULT_P0);
    let scenarios = match pick(a.scenarios.clone(), s.string("scenarios")?.map(PathBuf::from)) {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?;
            let file: ScenarioFile = toml::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?;
            file.scenario
        }
        None => default_scenarios(p0, reps),
    };
    let config = OrStudyConfig {
        scenarios,
        max_fallbacks: pick(a.max_fallbacks, s.int("max-fallbacks")?.map(|v| v as usize)).unwrap_or(1),
        seed: r.seed,
        workers: r.workers,
        signed_ranks: a.signed_ranks || s.boolean("signed-ranks")?,
        ..OrStudyConfig::default()
    };
    let out = run_or_study(&config).map_err(|e| match e {
        failbench::study_or::OrStudyError::Config(_) | failbench::study_or::OrStudyError::Pipeline(_) => cfg_err(e),
        other => data_err(other),
    })?;
    write_or_outputs(&out, &r.out).map_err(data_err)?;
    println!("scenario  p_x   OR  zero%   max rank shift");
    for sc in &out.scenarios {
        println!(
            "{:>8}  {:<4}  {:>2}  {:>5.2}  {}",
            sc.index + 1,
            sc.scenario.p_x,
            sc.scenario.true_or,
            100.0 * sc.zero_proportion,
            sc.divergence.max_shift
        );
    }
    println!("outputs in {}", r.out.display());
    Ok(())
}

fn cmd_study_ci(a: &CiArgs) -> Result<()> {
    let r = resolve(&a.common, 2024)?;
    let s = &r.settings;
    let mut config = CiStudyConfig {
        seed: r.seed,
        workers: r.workers,
        ..CiStudyConfig::default()
    };
    if let Some(v) = pick(a.iters, s.int("iters")?.map(|v| v as usize)) {
        config.n_iter = v;
    }
    if let Some(v) = pick(a.beta, s.float("beta")?) {
        config.dgm.beta = v;
    }
    if let Some(v) = pick(a.tau, s.float("tau")?) {
        config.tau = v;
    }
    if let Some(v) = pick(a.n, s.int("n")?.map(|v| v as usize)) {
        config.dgm.n_total = v;
    }
    if let Some(v) = pick(a.c, s.float("c")?) {
        config.c = v;
    }
    config.validate().map_err(cfg_err)?;
    let report = run_ci_study(&config).map_err(data_err)?;
    write_ci_outputs(&report, &r.out).map_err(data_err)?;
    println!("N failure proportion: {:.3} (c = {})", report.n_failure_proportion, report.c);
    println!("method  discarded(single)  discarded(all)  not-covering  zero-width");
    for row in &report.rows {
        println!(
            "{:<6}  {:>17.3}  {:>14.3}  {:>12.3}  {:>10.3}",
            row.method, row.discard_single, row.discard_all, row.count_as_noncover, row.zero_width
        );
    }
    println!("outputs in {}", r.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Report(a) => cmd_report(a),
        Command::Study { study: Study::Or(a) } => cmd_study_or(a),
        Command::Study { study: Study::Ci(a) } => cmd_study_ci(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("failbench: {e}");
            ExitCode::from(e.code())
        }
    }
}
