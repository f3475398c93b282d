//! `regimeclean`: command-line driver for the regime-clustering cleaning pipeline.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regimeclean::anomaly::{
    cluster_report, flag_anomalous_clusters, model_drift, DriftMode, DriftRecord, FlagRules,
};
use regimeclean::clustering::{elbow_sweep, fit_partition, select_k_knee, standardize, FitConfig};
use regimeclean::ingest::{
    generate_with_truth, read_csv, write_csv, CsvSchema, Dataset, IngestOutcome, ScenarioConfig,
};
use regimeclean::io::FORMAT_VERSION;
use regimeclean::model::{parse_timezone, Direction, TemporalGroup};
use regimeclean::regimes::{regime_series, smooth_series, SmoothingConfig};
use regimeclean::report;
use regimeclean::scoring::{score_all, ScoringConfig};
use regimeclean::traveltime::{
    agreement_table, disagreement_breakdown, ground_truth_from_truth, ml_clean, rule_clean,
    travel_times, AgreementFilter, DetectorLayout, PeakWindow, TravelTimeSeries,
    DEFAULT_LOOKBACK_MINUTES, WORKDAYS,
};
use regimeclean::ClusterModel;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] regimeclean::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model not found: {}", .0.display())]
    ModelNotFound(PathBuf),
    #[error("{0}")]
    Data(String),
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "regimeclean",
    version,
    about = "Cluster detector data into traffic regimes and clean it by Mahalanobis distance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset, its ground-truth travel times and a layout.
    Generate(GenerateArgs),
    /// Sweep k and write the elbow curve with the knee marked.
    Elbow(FitArgs),
    /// Fit a regime model and write it with its spider data.
    Fit(FitArgs),
    /// Score observations against a model.
    Score(ScoreArgs),
    /// Per-cluster membership, detector concentration and anomaly flags.
    Report(ScoreArgs),
    /// Drift between consecutive models.
    Drift(DriftArgs),
    /// Raw and smoothed regime time series per detector.
    Regimes(RegimesArgs),
    /// Travel times from rule-cleaned and distance-cleaned data.
    Traveltime(TravelTimeArgs),
    /// Agreement of two travel-time series with ground truth.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Output {
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

impl Output {
    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        std::fs::create_dir_all(&self.output_dir)?;
        Ok(BufWriter::new(File::create(self.output_dir.join(name))?))
    }
}

#[derive(Args)]
struct Selection {
    #[arg(long)]
    input: PathBuf,
    /// Highway name to keep.
    #[arg(long)]
    segment: Option<String>,
    /// NB or SB.
    #[arg(long)]
    direction: Option<Direction>,
    #[arg(long, default_value = "all")]
    day_group: TemporalGroup,
    #[arg(long, default_value = "America/Los_Angeles")]
    timezone: String,
}

struct Loaded {
    dataset: Dataset,
    rows_in: usize,
    rejections: usize,
}

impl Selection {
    fn load(&self) -> CliResult<Loaded> {
        let tz = parse_timezone(&self.timezone)?;
        let IngestOutcome {
            dataset,
            rejections,
        } = read_csv(&self.input, &CsvSchema::default())?;
        let rows_in = dataset.len() + rejections.len();
        let kept = dataset
            .observations()
            .iter()
            .filter(|o| {
                self.segment
                    .as_ref()
                    .map_or(true, |s| &o.segment.highway == s)
            })
            .filter(|o| self.direction.map_or(true, |d| o.segment.direction == d))
            .filter(|o| self.day_group.contains(o.timestamp, tz))
            .cloned()
            .collect();
        Ok(Loaded {
            dataset: Dataset::new(kept, dataset.provenance),
            rows_in,
            rejections: rejections.len(),
        })
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario TOML; without it a three-regime preset is used.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    detectors: usize,
    #[arg(long, default_value_t = 7)]
    days: u32,
    /// Layout for the ground truth; defaults to half a mile per detector.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    sel: Selection,
    /// Fixed cluster count; without it the knee of the elbow curve is used.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct Thresholds {
    #[arg(long, default_value_t = 2.5)]
    outlier_threshold: f64,
    /// Assign regimes by standardized Euclidean distance instead of Mahalanobis.
    #[arg(long)]
    euclidean_assignment: bool,
}

impl Thresholds {
    fn scoring(&self) -> CliResult<ScoringConfig> {
        let cfg = ScoringConfig {
            outlier_threshold: self.outlier_threshold,
            assignment: if self.euclidean_assignment {
                regimeclean::scoring::AssignmentMetric::Euclidean
            } else {
                regimeclean::scoring::AssignmentMetric::Mahalanobis
            },
            ..ScoringConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    sel: Selection,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    thresholds: Thresholds,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct DriftArgs {
    /// Models in period order; each is compared with the one before it.
    #[arg(long = "model", required = true, num_args = 1..)]
    models: Vec<PathBuf>,
    /// Report the larger of both directions.
    #[arg(long)]
    symmetric: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct RegimesArgs {
    #[command(flatten)]
    sel: Selection,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    window: u32,
    /// Center the smoothing window instead of trailing it.
    #[arg(long)]
    centered: bool,
    #[command(flatten)]
    thresholds: Thresholds,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct TravelTimeArgs {
    #[command(flatten)]
    sel: Selection,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    /// Minutes a speed may be carried into empty minutes.
    #[arg(long, default_value_t = DEFAULT_LOOKBACK_MINUTES)]
    lookback: i64,
    #[command(flatten)]
    thresholds: Thresholds,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct CompareArgs {
    /// Travel times from the rule-based cleaner.
    #[arg(long)]
    rule: PathBuf,
    /// Travel times from the distance-based cleaner.
    #[arg(long)]
    ml: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, default_value = "America/Los_Angeles")]
    timezone: String,
    #[arg(long, default_value = "16:00-18:00")]
    peak: PeakWindow,
    /// Label prefix for the tables, e.g. NB.
    #[arg(long)]
    direction: Option<Direction>,
    #[command(flatten)]
    out: Output,
}

fn load_model(path: &Path) -> CliResult<ClusterModel> {
    if !path.exists() {
        return Err(CliError::ModelNotFound(path.to_owned()));
    }
    Ok(ClusterModel::load(path)?)
}

fn fit_config(a: &FitArgs) -> CliResult<FitConfig> {
    if a.k == Some(0) || a.k_max == 0 || a.restarts == 0 {
        return Err(CliError::Data(
            "k, k-max and restarts must be at least 1".into(),
        ));
    }
    Ok(FitConfig {
        k: a.k,
        k_min: 1,
        k_max: a.k_max,
        seed: a.seed,
        restarts: a.restarts,
    })
}

fn summary(cmd: &str, rows_in: usize, rows_out: usize, rejections: usize, extra: &str) {
    println!("{cmd}: rows_in={rows_in} rows_out={rows_out} rejections={rejections}{extra}");
}

fn cmd_generate(a: &GenerateArgs) -> CliResult {
    let scenario = match &a.scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::three_regime(a.seed, a.detectors, a.days),
    };
    let data = generate_with_truth(&scenario)?;
    let layout = match &a.layout {
        Some(p) => DetectorLayout::load(p)?,
        None => DetectorLayout::uniform(data.dataset.detectors(), 0.5)?,
    };
    let obs = data.dataset.observations();
    write_csv(a.out.create("observations.csv")?, obs)?;
    let gt = ground_truth_from_truth(&layout, obs, &data.truth);
    gt.write_to(a.out.create("ground_truth.csv")?, "ground-truth")?;
    layout.write_to(a.out.create("layout.csv")?)?;
    a.out
        .create("scenario.toml")?
        .write_all(scenario.to_toml_string().as_bytes())?;
    summary(
        "generate",
        0,
        obs.len(),
        0,
        &format!(
            " ground_truth_minutes={} seed={}",
            gt.minutes.len(),
            scenario.seed
        ),
    );
    Ok(())
}

fn cmd_elbow(a: &FitArgs) -> CliResult {
    let cfg = fit_config(a)?;
    let loaded = a.sel.load()?;
    let data = standardize(loaded.dataset.observations())?;
    let curve = elbow_sweep(&data.points, 1, cfg.k_max, cfg.seed, cfg.restarts)?;
    let k = select_k_knee(&curve, a.k)?;
    let n = report::write_elbow(a.out.create("elbow.csv")?, &curve, k)?;
    summary(
        "elbow",
        loaded.rows_in,
        n,
        loaded.rejections,
        &format!(
            " trained_on={} excluded_missing={} knee_k={k}",
            data.points.len(),
            data.excluded_missing
        ),
    );
    Ok(())
}

fn single_segment(d: &Dataset) -> CliResult {
    if d.segments().len() > 1 {
        return Err(CliError::Data(
            "input holds several segments; choose one with --segment and --direction".into(),
        ));
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> CliResult {
    let cfg = fit_config(a)?;
    let loaded = a.sel.load()?;
    single_segment(&loaded.dataset)?;
    let out = fit_partition(loaded.dataset.observations(), a.sel.day_group, &cfg)?;
    let model = &out.model;
    model.save(a.out.output_dir.join("model.json"))?;
    report::write_spider(a.out.create("spider.csv")?, model)?;
    if let Some(curve) = &out.curve {
        report::write_elbow(a.out.create("elbow.csv")?, curve, model.k())?;
    }
    summary(
        "fit",
        loaded.rows_in,
        model.metadata.training_rows,
        loaded.rejections,
        &format!(
            " excluded_missing={} k={} ridge={:e} fingerprint={}",
            model.metadata.excluded_missing,
            model.k(),
            model.ridge,
            model.fingerprint
        ),
    );
    Ok(())
}

fn cmd_score(a: &ScoreArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let cfg = a.thresholds.scoring()?;
    let loaded = a.sel.load()?;
    let scored = score_all(loaded.dataset.observations(), &model, &cfg);
    let n = report::write_scored(a.out.create("scored.csv")?, &scored.rows)?;
    let outliers = scored
        .rows
        .iter()
        .filter(|r| r.score().is_some_and(|s| s.is_outlier))
        .count();
    summary(
        "score",
        loaded.rows_in,
        n,
        loaded.rejections,
        &format!(
            " unscoreable={} outliers={outliers}",
            n - scored.scored_count()
        ),
    );
    Ok(())
}

fn cmd_report(a: &ScoreArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let cfg = a.thresholds.scoring()?;
    let loaded = a.sel.load()?;
    let scored = score_all(loaded.dataset.observations(), &model, &cfg);
    let rep = flag_anomalous_clusters(cluster_report(&model, &scored)?, &FlagRules::default());
    let mut f = a.out.create("cluster_report.json")?;
    writeln!(f, "{}", rep.to_json())?;
    report::write_spider(a.out.create("spider.csv")?, &model)?;
    summary(
        "report",
        loaded.rows_in,
        rep.scored,
        loaded.rejections,
        &format!(
            " unscoreable={} clusters={} flagged={}",
            rep.unscoreable,
            rep.clusters.len(),
            rep.flagged().count()
        ),
    );
    Ok(())
}

fn cmd_drift(a: &DriftArgs) -> CliResult {
    if a.models.len() < 2 {
        return Err(CliError::Data(
            "drift needs at least two --model files".into(),
        ));
    }
    let models = a
        .models
        .iter()
        .map(|p| load_model(p))
        .collect::<CliResult<Vec<_>>>()?;
    let mode = if a.symmetric {
        DriftMode::Symmetric
    } else {
        DriftMode::Directional
    };
    let mut records = Vec::new();
    let mut results = Vec::new();
    for pair in models.windows(2) {
        let r = model_drift(&pair[0], &pair[1], mode)?;
        records.push(DriftRecord {
            period_a: pair[0].metadata.label(),
            period_b: pair[1].metadata.label(),
            value: r.value,
        });
        results.push(r);
    }
    let n = report::write_drift_history(a.out.create("drift.csv")?, &records)?;
    let mut f = a.out.create("drift.json")?;
    writeln!(
        f,
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "format_version": FORMAT_VERSION,
            "drift": results,
        }))
        .expect("drift serializes")
    )?;
    summary("drift", models.len(), n, 0, "");
    Ok(())
}

fn cmd_regimes(a: &RegimesArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let cfg = a.thresholds.scoring()?;
    let loaded = a.sel.load()?;
    let smoothing = SmoothingConfig {
        window: a.window as usize,
        centered: a.centered,
    };
    let scored = score_all(loaded.dataset.observations(), &model, &cfg);
    let mut pairs = Vec::new();
    let mut transitions = (0, 0);
    // Detector slices are contiguous and in dataset order, as are the scored rows.
    let mut first = 0;
    for (det, obs) in loaded.dataset.by_detector() {
        let raw = regime_series(&scored.rows[first..first + obs.len()], det);
        first += obs.len();
        let smooth = smooth_series(obs, det, &model, &cfg, &smoothing);
        transitions.0 += raw.transitions();
        transitions.1 += smooth.transitions();
        pairs.push((raw, smooth));
    }
    let n = report::write_regime_series(a.out.create("regimes.csv")?, &pairs)?;
    summary(
        "regimes",
        loaded.rows_in,
        n,
        loaded.rejections,
        &format!(
            " detectors={} transitions_raw={} transitions_smoothed={}",
            pairs.len(),
            transitions.0,
            transitions.1
        ),
    );
    Ok(())
}

fn cmd_traveltime(a: &TravelTimeArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let layout = DetectorLayout::load(&a.layout)?;
    let cfg = a.thresholds.scoring()?;
    let loaded = a.sel.load()?;
    let obs = loaded.dataset.observations();
    let by_rule = rule_clean(obs);
    let by_ml = ml_clean(&score_all(obs, &model, &cfg).rows, cfg.outlier_threshold);
    let tt_rule = travel_times(&layout, &by_rule, a.lookback);
    let tt_ml = travel_times(&layout, &by_ml, a.lookback);
    tt_rule.write_to(a.out.create("tt_rule.csv")?, "travel-time rule")?;
    tt_ml.write_to(a.out.create("tt_ml.csv")?, "travel-time ml")?;
    report::write_cleaning(a.out.create("cleaning_rule.csv")?, &by_rule)?;
    report::write_cleaning(a.out.create("cleaning_ml.csv")?, &by_ml)?;
    summary(
        "traveltime",
        loaded.rows_in,
        tt_rule.minutes.len().max(tt_ml.minutes.len()),
        loaded.rejections,
        &format!(
            " rule_kept={} rule_dropped={} ml_kept={} ml_dropped={} rule_minutes={} ml_minutes={}",
            by_rule.kept_count(),
            by_rule.dropped_count(),
            by_ml.kept_count(),
            by_ml.dropped_count(),
            tt_rule.present_count(),
            tt_ml.present_count()
        ),
    );
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> CliResult {
    let tz = parse_timezone(&a.timezone)?;
    let rule = TravelTimeSeries::load(&a.rule)?;
    let ml = TravelTimeSeries::load(&a.ml)?;
    let gt = TravelTimeSeries::load(&a.ground_truth)?;
    let prefix = a.direction.map(|d| format!("{d}/")).unwrap_or_default();
    let groups: [(&str, &'static [_]); 3] = [
        ("weekdays", WORKDAYS),
        ("mon-fri", TemporalGroup::MonFri.weekdays()),
        ("tue-wed-thu", TemporalGroup::TueWedThu.weekdays()),
    ];
    let filter = |days| AgreementFilter {
        timezone: tz,
        weekdays: Some(days),
        peak: Some(a.peak),
    };
    let tables: Vec<_> = groups
        .iter()
        .map(|(name, days)| {
            (
                format!("{prefix}{name}"),
                agreement_table(&rule, &ml, &gt, &filter(days)),
            )
        })
        .collect();
    let breakdown = disagreement_breakdown(&rule, &ml, &gt, &filter(WORKDAYS)).ok();
    let n = report::write_agreement(a.out.create("agreement.csv")?, &tables)?;
    let mut txt = a.out.create("agreement.txt")?;
    writeln!(txt, "# regimeclean-format: {FORMAT_VERSION} agreement-text")?;
    txt.write_all(report::format_agreement(&tables, breakdown.as_ref()).as_bytes())?;
    summary(
        "compare",
        gt.minutes.len(),
        n,
        0,
        &format!(" minutes_compared={} peak={}", tables[0].1.total, a.peak),
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Elbow(a) => cmd_elbow(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
        Command::Drift(a) => cmd_drift(a),
        Command::Regimes(a) => cmd_regimes(a),
        Command::Traveltime(a) => cmd_traveltime(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
