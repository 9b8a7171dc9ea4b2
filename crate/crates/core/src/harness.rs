//! Experiment orchestration: configuration files, run directories with
//! manifests and per-epoch CSVs, seed-sweep comparisons, resumable GA
//! campaigns, and plot-ready data.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{DdpgAgent, EpochStats, HyperParams, TrainConfig, Trainer};
use crate::envs::{make_env, EnvConfig};
use crate::error::{Error, Result};
use crate::ga::{CampaignState, FitnessRecord, GaConfig, GenerationStats, TrainingFitness};
use crate::seeding;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "HERTUNE_WORKERS";

pub const RUN_CSV: &str = "progress.csv";
pub const MANIFEST: &str = "manifest.json";
pub const AGENT_CHECKPOINT: &str = "agent.json";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_MEAN_CSV: &str = "comparison_mean.csv";
pub const COMPARISON_SUMMARY: &str = "comparison.json";
pub const CAMPAIGN_STATE: &str = "campaign.json";
pub const CAMPAIGN_CSV: &str = "campaign.csv";
pub const CAMPAIGN_REPORT: &str = "report.json";

/// Everything a run, comparison arm or campaign needs. Loaded from TOML;
/// absent keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub label: String,
    pub seed: u64,
    pub env: EnvConfig,
    pub params: HyperParams,
    pub train: TrainConfig,
    pub ga: GaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            label: "run".into(),
            seed: 0,
            env: EnvConfig::default(),
            params: HyperParams::ORIGINAL,
            train: TrainConfig::default(),
            ga: GaConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(vec![path.to_path_buf()]));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        self.ga.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub label: String,
    pub seed: u64,
    /// `(epoch, success_rate)` with epochs counting up from 1.
    pub points: Vec<(usize, f64)>,
}

impl LearningCurve {
    pub fn new(label: impl Into<String>, seed: u64) -> Self {
        LearningCurve { label: label.into(), seed, points: Vec::new() }
    }

    pub fn success_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|&(_, s)| s)
    }

    pub fn epochs_to_threshold(&self, threshold: f64) -> Option<usize> {
        self.points.iter().find(|&&(_, s)| s >= threshold).map(|&(e, _)| e)
    }

    pub fn final_success(&self) -> Option<f64> {
        self.points.last().map(|&(_, s)| s)
    }
}

/// The random seeds a run derives from its master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedTable {
    pub master: u64,
    pub env: u64,
    pub init: u64,
    pub explore: u64,
    pub her: u64,
    pub sample: u64,
    /// Evaluation after epoch `e` uses `derive(master, "eval", e)`, and its
    /// episode `i` resets with `derive(that, "episode", i)`.
    pub eval_rule: String,
}

impl SeedTable {
    pub fn for_master(master: u64) -> Self {
        let d = |tag| seeding::derive(master, tag, 0);
        SeedTable {
            master,
            env: d("env"),
            init: d("init"),
            explore: d("explore"),
            her: d("her"),
            sample: d("sample"),
            eval_rule: "derive(master, \"eval\", epoch)".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    /// Training hit a non-finite loss or gradient; the curve is truncated.
    Failed {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub seeds: SeedTable,
    pub status: RunStatus,
    pub epochs_completed: usize,
}

const MANIFEST_FORMAT: &str = "hertune-run";
const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOutcome {
    pub curve: LearningCurve,
    pub status: RunStatus,
    pub agent: DdpgAgent,
}

/// Trains in memory, calling `on_epoch` after every completed epoch.
/// Numerical failures end the run early and are reported in the status.
pub fn train_curve<F>(config: &RunConfig, on_epoch: F) -> Result<TrainingOutcome>
where
    F: FnMut(&EpochStats) -> Result<()>,
{
    config.validate()?;
    let trainer = Trainer::new(&config.env, config.params, &config.train, config.seed)?;
    drive(config, trainer, on_epoch)
}

fn drive<F>(config: &RunConfig, mut trainer: Trainer, mut on_epoch: F) -> Result<TrainingOutcome>
where
    F: FnMut(&EpochStats) -> Result<()>,
{
    let mut curve = LearningCurve::new(config.label.clone(), config.seed);
    let mut status = RunStatus::Completed;
    while curve.points.len() < config.train.max_epochs {
        let stats = match trainer.train_epoch() {
            Ok(stats) => stats,
            Err(e @ (Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. })) => {
                status = RunStatus::Failed { reason: e.to_string() };
                break;
            }
            Err(e) => return Err(e),
        };
        curve.points.push((stats.epoch, stats.success_rate));
        on_epoch(&stats)?;
        if config.train.early_stop && stats.success_rate >= config.train.success_threshold {
            break;
        }
    }
    Ok(TrainingOutcome { curve, status, agent: trainer.agent })
}

/// One training run persisted to `run_dir`: the manifest, a CSV row per
/// epoch flushed as it completes, and the final agent checkpoint.
pub fn run_training(config: &RunConfig, run_dir: &Path) -> Result<TrainingOutcome> {
    config.validate()?;
    let trainer = Trainer::new(&config.env, config.params, &config.train, config.seed)?;
    persist_run(config, trainer, run_dir)
}

fn persist_run(config: &RunConfig, trainer: Trainer, run_dir: &Path) -> Result<TrainingOutcome> {
    create_dir(run_dir)?;
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        config: config.clone(),
        seeds: SeedTable::for_master(config.seed),
        status: RunStatus::Running,
        epochs_completed: 0,
    };
    write_json_atomic(&run_dir.join(MANIFEST), &manifest)?;

    let csv_path = run_dir.join(RUN_CSV);
    let mut csv = CsvAppender::create(&csv_path, &["epoch", "success_rate"])?;
    let outcome = drive(config, trainer, |stats| csv.row(&[stats.epoch.to_string(), stats.success_rate.to_string()]))?;

    save_agent(&run_dir.join(AGENT_CHECKPOINT), &outcome.agent)?;
    manifest.status = outcome.status.clone();
    manifest.epochs_completed = outcome.curve.points.len();
    write_json_atomic(&run_dir.join(MANIFEST), &manifest)?;
    Ok(outcome)
}

pub fn read_manifest(run_dir: &Path) -> Result<Manifest> {
    read_json(&run_dir.join(MANIFEST))
}

#[derive(Serialize, Deserialize)]
struct AgentFile {
    format: String,
    version: u32,
    agent: DdpgAgent,
}

const AGENT_FORMAT: &str = "hertune-agent";

pub fn save_agent(path: &Path, agent: &DdpgAgent) -> Result<()> {
    write_json_atomic(path, &AgentFile { format: AGENT_FORMAT.into(), version: 1, agent: agent.clone() })
}

pub fn load_agent(path: &Path) -> Result<DdpgAgent> {
    let file: AgentFile = read_json(path)?;
    if file.format != AGENT_FORMAT || file.version != 1 {
        return Err(Error::Config(format!("{} is not a version 1 agent checkpoint", path.display())));
    }
    Ok(file.agent)
}

/// Evaluates a saved agent with `n_episodes` deterministic episodes. The
/// environment must match the one the agent was trained on.
pub fn evaluate_checkpoint(path: &Path, env_config: &EnvConfig, n_episodes: usize, seed: u64) -> Result<f64> {
    let agent = load_agent(path)?;
    let mut env = make_env(env_config)?;
    if env.spec() != &agent.env_spec {
        return Err(Error::Config(format!(
            "{} was trained on a different environment than {}",
            path.display(),
            env_config.name
        )));
    }
    crate::agent::evaluate(&agent, env.as_mut(), n_episodes, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub label: String,
    pub seeds: Vec<u64>,
    /// `None` entries never reached the threshold.
    pub epochs_to_threshold: Vec<Option<usize>>,
    /// `None` when the median run never reached the threshold.
    pub median_epochs_to_threshold: Option<f64>,
    pub final_success: Vec<f64>,
    pub median_final_success: f64,
    pub failed_runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub arms: Vec<ArmSummary>,
    pub curves: Vec<LearningCurve>,
    pub mean_curves: Vec<LearningCurve>,
}

/// Seeds shared by every arm of a comparison.
pub fn comparison_seeds(base_seed: u64, n_seeds: usize) -> Vec<u64> {
    (0..n_seeds as u64).map(|i| seeding::derive(base_seed, "compare", i)).collect()
}

/// Runs every arm on the same `n_seeds` seeds (in parallel on the current
/// rayon pool) and summarizes them. With `out_dir`, writes the per-seed CSV,
/// the mean-curve CSV and a JSON summary.
pub fn run_comparison(
    arms: &[RunConfig],
    n_seeds: usize,
    base_seed: u64,
    out_dir: Option<&Path>,
) -> Result<Comparison> {
    if arms.is_empty() || n_seeds == 0 {
        return Err(Error::Config("a comparison needs at least one arm and one seed".into()));
    }
    if arms.iter().any(|a| a.env.name != arms[0].env.name) {
        return Err(Error::Config("all comparison arms must use the same environment".into()));
    }
    for arm in arms {
        arm.validate()?;
    }
    let seeds = comparison_seeds(base_seed, n_seeds);
    let jobs: Vec<(usize, u64)> = (0..arms.len()).flat_map(|a| seeds.iter().map(move |&s| (a, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(a, seed)| {
            let config = RunConfig { seed, ..arms[a].clone() };
            train_curve(&config, |_| Ok(())).map(|o| (o.curve, o.status))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::new();
    let mut mean_curves = Vec::new();
    for (a, arm) in arms.iter().enumerate() {
        let runs = &results[a * n_seeds..(a + 1) * n_seeds];
        let threshold = arm.train.success_threshold;
        let epochs: Vec<Option<usize>> = runs.iter().map(|(c, _)| c.epochs_to_threshold(threshold)).collect();
        let finals: Vec<f64> = runs.iter().map(|(c, _)| c.final_success().unwrap_or(0.0)).collect();
        summaries.push(ArmSummary {
            label: arm.label.clone(),
            seeds: seeds.clone(),
            median_epochs_to_threshold: median_epochs(&epochs),
            epochs_to_threshold: epochs,
            median_final_success: median(&finals),
            final_success: finals,
            failed_runs: runs.iter().filter(|(_, s)| matches!(s, RunStatus::Failed { .. })).count(),
        });
        mean_curves.push(mean_curve(&arm.label, runs.iter().map(|(c, _)| c)));
    }
    let curves: Vec<LearningCurve> = results.into_iter().map(|(c, _)| c).collect();
    let comparison = Comparison { arms: summaries, curves, mean_curves };
    if let Some(dir) = out_dir {
        write_comparison(dir, &comparison)?;
    }
    Ok(comparison)
}

fn write_comparison(dir: &Path, comparison: &Comparison) -> Result<()> {
    create_dir(dir)?;
    let mut per_seed = CsvAppender::create(&dir.join(COMPARISON_CSV), &["label", "seed", "epoch", "success_rate"])?;
    for c in &comparison.curves {
        for &(e, s) in &c.points {
            per_seed.row(&[c.label.clone(), c.seed.to_string(), e.to_string(), s.to_string()])?;
        }
    }
    let mut means = CsvAppender::create(&dir.join(COMPARISON_MEAN_CSV), &["label", "epoch", "mean_success_rate"])?;
    for c in &comparison.mean_curves {
        for &(e, s) in &c.points {
            means.row(&[c.label.clone(), e.to_string(), s.to_string()])?;
        }
    }
    write_json_atomic(&dir.join(COMPARISON_SUMMARY), &comparison.arms)
}

/// Per-epoch mean over the curves that reached that epoch.
pub fn mean_curve<'a>(label: &str, curves: impl Iterator<Item = &'a LearningCurve>) -> LearningCurve {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for c in curves {
        for &(e, s) in &c.points {
            let entry = sums.entry(e).or_default();
            entry.0 += s;
            entry.1 += 1;
        }
    }
    LearningCurve {
        label: label.into(),
        seed: 0,
        points: sums.into_iter().map(|(e, (sum, n))| (e, sum / n as f64)).collect(),
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median where `None` (never reached) counts as larger than any epoch.
pub fn median_epochs(values: &[Option<usize>]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by_key(|e| e.unwrap_or(usize::MAX));
    let n = v.len();
    if n == 0 {
        return None;
    }
    if n % 2 == 1 {
        v[n / 2].map(|e| e as f64)
    } else {
        Some((v[n / 2 - 1]? + v[n / 2]?) as f64 / 2.0)
    }
}

/// Persisted campaign: the GA state plus the inner training setup it was
/// started with, so a resume can refuse mismatched settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignFile {
    pub format: String,
    pub version: u32,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub state: CampaignState,
}

const CAMPAIGN_FORMAT: &str = "hertune-campaign";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub finished: bool,
    pub generation: usize,
    pub best: FitnessRecord,
    pub history: Vec<GenerationStats>,
    pub population: Vec<FitnessRecord>,
}

/// Runs (or resumes) a GA campaign in `out_dir`, persisting state after the
/// initial population and after every generation. With `stop_after`, returns
/// once that many generations have been bred, leaving a resumable campaign.
pub fn run_tuning(config: &RunConfig, out_dir: &Path, stop_after: Option<usize>) -> Result<TuningReport> {
    config.validate()?;
    create_dir(out_dir)?;
    let fitness = TrainingFitness { env: config.env.clone(), train: config.train.clone() };
    let state_path = out_dir.join(CAMPAIGN_STATE);
    let csv_path = out_dir.join(CAMPAIGN_CSV);

    let mut state = if state_path.exists() {
        let file: CampaignFile = read_json(&state_path)?;
        if file.format != CAMPAIGN_FORMAT
            || file.env != config.env
            || file.train != config.train
            || file.state.config != config.ga
            || file.state.seed != config.seed
        {
            return Err(Error::Config(format!(
                "{} belongs to a campaign with different settings; use a fresh output directory",
                state_path.display()
            )));
        }
        file.state
    } else {
        let state = CampaignState::start(&config.ga, config.seed, &fitness)?;
        persist_campaign(&state_path, config, &state)?;
        state
    };

    // rebuild the CSV from history so a crash between the state and CSV
    // writes cannot leave duplicate or missing rows
    let mut csv = CsvAppender::create(&csv_path, &campaign_header())?;
    for stats in &state.history {
        csv.row(&campaign_row(stats))?;
    }
    while !state.is_finished() && stop_after.is_none_or(|g| state.generation < g) {
        state.advance(&fitness)?;
        persist_campaign(&state_path, config, &state)?;
        csv.row(&campaign_row(state.history.last().expect("history grows with each generation")))?;
    }

    let report = TuningReport {
        finished: state.is_finished(),
        generation: state.generation,
        best: state.best.clone(),
        history: state.history.clone(),
        population: state.population.clone(),
    };
    if report.finished {
        write_json_atomic(&out_dir.join(CAMPAIGN_REPORT), &report)?;
    }
    Ok(report)
}

fn persist_campaign(path: &Path, config: &RunConfig, state: &CampaignState) -> Result<()> {
    write_json_atomic(
        path,
        &CampaignFile {
            format: CAMPAIGN_FORMAT.into(),
            version: 1,
            env: config.env.clone(),
            train: config.train.clone(),
            state: state.clone(),
        },
    )
}

fn campaign_header() -> Vec<&'static str> {
    let mut h = vec!["generation", "best", "mean", "worst"];
    h.extend(HyperParams::FIELD_NAMES);
    h
}

fn campaign_row(stats: &GenerationStats) -> Vec<String> {
    let mut row =
        vec![stats.generation.to_string(), stats.best.to_string(), stats.mean.to_string(), stats.worst.to_string()];
    row.extend(stats.best_params.to_genes().iter().map(|p| format!("{p:.3}")));
    row
}

/// One tidy plot-data row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

/// Collects plot series from run directories or CSV files. Run CSVs become
/// one series (labelled from the manifest when present), comparison CSVs one
/// mean series per label, and campaign CSVs best/mean/worst series.
pub fn collect_plot_data(inputs: &[PathBuf]) -> Result<Vec<PlotPoint>> {
    let mut missing = Vec::new();
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let candidates = [RUN_CSV, COMPARISON_CSV, CAMPAIGN_CSV].map(|f| input.join(f));
            match candidates.iter().find(|p| p.is_file()) {
                Some(p) => files.push(p.clone()),
                None => missing.extend(candidates),
            }
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            missing.push(input.clone());
        }
    }
    if !missing.is_empty() || files.is_empty() {
        return Err(Error::MissingInput(missing));
    }
    let mut points = Vec::new();
    for file in files {
        points.extend(plot_series(&file)?);
    }
    Ok(points)
}

fn plot_series(path: &Path) -> Result<Vec<PlotPoint>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let num = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Config(format!("{}: non-numeric value {s:?}", path.display())))
    };
    match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["epoch", "success_rate"] => {
            let label = path
                .parent()
                .and_then(|d| read_manifest(d).ok())
                .map(|m| m.config.label)
                .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .unwrap_or_else(|| "run".into());
            rows.iter().map(|r| Ok(PlotPoint { series: label.clone(), x: num(&r[0])?, y: num(&r[1])? })).collect()
        }
        ["label", "seed", "epoch", "success_rate"] => {
            let mut sums: BTreeMap<(String, u64), (f64, usize)> = BTreeMap::new();
            let mut order: Vec<String> = Vec::new();
            for r in &rows {
                if !order.iter().any(|l| l == &r[0]) {
                    order.push(r[0].to_string());
                }
                let epoch = num(&r[2])? as u64;
                let entry = sums.entry((r[0].to_string(), epoch)).or_default();
                entry.0 += num(&r[3])?;
                entry.1 += 1;
            }
            Ok(order
                .iter()
                .flat_map(|label| {
                    sums.iter().filter(move |((l, _), _)| l == label).map(|((l, e), (sum, n))| PlotPoint {
                        series: l.clone(),
                        x: *e as f64,
                        y: sum / *n as f64,
                    })
                })
                .collect())
        }
        [g, b, m, w, ..] if [*g, *b, *m, *w] == ["generation", "best", "mean", "worst"] => {
            let mut points = Vec::new();
            for (col, name) in [(1, "best"), (2, "mean"), (3, "worst")] {
                for r in &rows {
                    points.push(PlotPoint { series: name.into(), x: num(&r[0])?, y: num(&r[col])? });
                }
            }
            Ok(points)
        }
        _ => Err(Error::Config(format!("{}: unrecognized CSV header {header:?}", path.display()))),
    }
}

/// Writes `series,x,y` rows to `out_csv` and, optionally, a line chart.
pub fn emit_plot_data(inputs: &[PathBuf], out_csv: &Path, svg: Option<&Path>) -> Result<Vec<PlotPoint>> {
    let points = collect_plot_data(inputs)?;
    if let Some(parent) = out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut csv = CsvAppender::create(out_csv, &["series", "x", "y"])?;
    for p in &points {
        csv.row(&[p.series.clone(), p.x.to_string(), p.y.to_string()])?;
    }
    if let Some(svg_path) = svg {
        fs::write(svg_path, render_svg(&points))
            .map_err(|e| Error::io(format!("writing {}", svg_path.display()), e))?;
    }
    Ok(points)
}

/// Minimal line chart, one polyline per series, axes from the data range.
pub fn render_svg(points: &[PlotPoint]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 1.0f64);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    if points.is_empty() {
        (x0, x1) = (0.0, 1.0);
    } else if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut names: Vec<&str> = Vec::new();
    for p in points {
        if !names.contains(&p.series.as_str()) {
            names.push(&p.series);
        }
    }
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{PAD}\" y=\"{t}\" font-size=\"11\">{x0}</text>\n\
         <text x=\"{r}\" y=\"{t}\" font-size=\"11\" text-anchor=\"end\">{x1}</text>\n\
         <text x=\"4\" y=\"{b}\" font-size=\"11\">{y0}</text>\n\
         <text x=\"4\" y=\"{PAD}\" font-size=\"11\">{y1}</text>\n",
        b = H - PAD,
        r = W - PAD,
        t = H - PAD + 16.0,
    );
    for (i, name) in names.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> =
            points.iter().filter(|p| p.series == *name).map(|p| format!("{:.1},{:.1}", sx(p.x), sy(p.y))).collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            coords.join(" "),
            W - PAD - 120.0,
            PAD + 14.0 * (i as f64 + 1.0),
            xml_escape(name),
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Worker count: the explicit value if given, else `HERTUNE_WORKERS`, else
/// the number of available cores.
pub fn worker_count(explicit: Option<usize>) -> Result<usize> {
    let n = match explicit {
        Some(n) => n,
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                v.trim().parse().map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a worker count")))?
            }
            Err(_) => std::thread::available_parallelism().map_or(1, usize::from),
        },
    };
    if n == 0 {
        return Err(Error::Config("worker count must be positive".into()));
    }
    Ok(n)
}

/// Runs `f` inside a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingInput(vec![path.to_path_buf()]));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(value)?;
    fs::write(&tmp, text + "\n").map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming {} into place", tmp.display()), e))
}

/// CSV file written row by row, flushed after each row so a crash leaves a
/// valid prefix.
struct CsvAppender {
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvAppender {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header)?;
        writer.flush().map_err(|e| Error::io("flushing CSV", e))?;
        Ok(CsvAppender { writer })
    }

    fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        self.writer.write_record(fields)?;
        self.writer.flush().map_err(|e| Error::io("flushing CSV", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;

    fn tiny(label: &str, epochs: usize) -> RunConfig {
        RunConfig {
            label: label.into(),
            seed: 3,
            train: TrainConfig {
                max_epochs: epochs,
                cycles_per_epoch: 2,
                optimize_steps_per_cycle: 4,
                batch_size: 16,
                eval_episodes: 4,
                hidden_sizes: vec![8],
                ..TrainConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn toml_round_trip_materializes_defaults() {
        let c = RunConfig::from_toml_str("label = \"a\"\n[env]\nname = \"push\"\n[params]\ngamma = 0.9\npolyak = 0.5\nlr_critic = 0.001\nlr_actor = 0.001\nrandom_eps = 0.3\nnoise_eps = 0.2\n").unwrap();
        assert_eq!(c.env.name, EnvKind::Push);
        assert_eq!(c.params.tau, 0.5);
        assert_eq!(c.train, TrainConfig::default());
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[env]\nname = \"door\"").is_err());
        assert!(RunConfig::from_toml_str("[train]\nsuccess_threshold = 1.5").is_err());
    }

    #[test]
    fn missing_config_file_is_reported() {
        let err = RunConfig::from_toml_file(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }

    #[test]
    fn zero_epochs_gives_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_training(&tiny("z", 0), dir.path()).unwrap();
        assert!(out.curve.points.is_empty());
        assert_eq!(fs::read_to_string(dir.path().join(RUN_CSV)).unwrap(), "epoch,success_rate\n");
        assert_eq!(read_manifest(dir.path()).unwrap().status, RunStatus::Completed);
    }

    #[test]
    fn run_directory_contents() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_training(&tiny("r", 2), dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join(RUN_CSV)).unwrap();
        assert_eq!(csv.lines().count(), 3);
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.epochs_completed, 2);
        assert_eq!(m.seeds, SeedTable::for_master(3));
        assert_eq!(m.config, tiny("r", 2));
        assert_eq!(load_agent(&dir.path().join(AGENT_CHECKPOINT)).unwrap(), out.agent);
        let rate = evaluate_checkpoint(&dir.path().join(AGENT_CHECKPOINT), &EnvConfig::default(), 4, 5).unwrap();
        assert!((0.0..=1.0).contains(&rate));
        let push = EnvConfig::new(EnvKind::Push);
        assert!(evaluate_checkpoint(&dir.path().join(AGENT_CHECKPOINT), &push, 4, 5).is_err());
    }

    #[test]
    fn numerical_failure_truncates_and_flags() {
        let c = tiny("f", 5);
        let mut trainer = Trainer::new(&c.env, c.params, &c.train, c.seed).unwrap();
        trainer.agent.critic.parameters_mut().0[0][[0, 0]] = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let out = persist_run(&c, trainer, dir.path()).unwrap();
        assert!(out.curve.points.is_empty());
        assert!(matches!(&out.status, RunStatus::Failed { reason } if reason.contains("non-finite")));
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.status, out.status);
        assert_eq!(m.epochs_completed, 0);
        assert_eq!(fs::read_to_string(dir.path().join(RUN_CSV)).unwrap(), "epoch,success_rate\n");
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert_eq!(median_epochs(&[Some(5), None, Some(3)]), Some(5.0));
        assert_eq!(median_epochs(&[None, None, Some(3)]), None);
        assert_eq!(median_epochs(&[Some(2), Some(4)]), Some(3.0));
        assert_eq!(median_epochs(&[Some(2), None]), None);
    }

    #[test]
    fn identical_arms_have_identical_means() {
        let a = tiny("a", 2);
        let b = RunConfig { label: "b".into(), ..a.clone() };
        let cmp = run_comparison(&[a, b], 2, 11, None).unwrap();
        assert_eq!(cmp.mean_curves[0].points, cmp.mean_curves[1].points);
        assert_eq!(cmp.curves.len(), 4);
    }

    #[test]
    fn single_seed_mean_equals_curve() {
        let cmp = run_comparison(&[tiny("a", 2)], 1, 11, None).unwrap();
        assert_eq!(cmp.mean_curves[0].points, cmp.curves[0].points);
    }

    #[test]
    fn comparison_rejects_mixed_envs() {
        let mut b = tiny("b", 1);
        b.env = EnvConfig::new(EnvKind::Push);
        assert!(run_comparison(&[tiny("a", 1), b], 1, 0, None).is_err());
    }

    #[test]
    fn tuning_with_zero_generations_reports_population() {
        let mut c = tiny("t", 1);
        c.ga = GaConfig { population_size: 4, generations: 0, ..GaConfig::default() };
        let dir = tempfile::tempdir().unwrap();
        let report = run_tuning(&c, dir.path(), None).unwrap();
        assert!(report.finished);
        assert_eq!(report.population.len(), 4);
        let csv = fs::read_to_string(dir.path().join(CAMPAIGN_CSV)).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "generation,best,mean,worst,polyak,gamma,lr_critic,lr_actor,random_eps,noise_eps"
        );
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn tuning_refuses_foreign_campaign() {
        let mut c = tiny("t", 1);
        c.ga = GaConfig { population_size: 2, generations: 0, ..GaConfig::default() };
        let dir = tempfile::tempdir().unwrap();
        run_tuning(&c, dir.path(), None).unwrap();
        c.seed += 1;
        assert!(matches!(run_tuning(&c, dir.path(), None), Err(Error::Config(_))));
    }

    #[test]
    fn plot_rows_per_input_kind() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run");
        run_training(&tiny("solo", 3), &run).unwrap();
        let pts = collect_plot_data(std::slice::from_ref(&run)).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| p.series == "solo"));

        let cmp_dir = dir.path().join("cmp");
        run_comparison(&[tiny("a", 2), RunConfig { label: "b".into(), ..tiny("a", 2) }], 2, 1, Some(&cmp_dir)).unwrap();
        let pts = collect_plot_data(std::slice::from_ref(&cmp_dir)).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts.iter().filter(|p| p.series == "a").count(), 2);

        let camp = dir.path().join("camp");
        let mut c = tiny("t", 1);
        c.ga = GaConfig { population_size: 2, generations: 2, ..GaConfig::default() };
        run_tuning(&c, &camp, None).unwrap();
        let pts = collect_plot_data(&[camp]).unwrap();
        assert_eq!(pts.len(), 3 * 3);

        let out = dir.path().join("plot.csv");
        let svg = dir.path().join("plot.svg");
        emit_plot_data(&[run, cmp_dir], &out, Some(&svg)).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 3 + 4);
        assert!(fs::read_to_string(&svg).unwrap().contains("<polyline"));
    }

    #[test]
    fn missing_plot_inputs_list_expectations() {
        let dir = tempfile::tempdir().unwrap();
        let err = collect_plot_data(&[dir.path().to_path_buf()]).unwrap_err();
        match err {
            Error::MissingInput(paths) => assert_eq!(paths.len(), 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn worker_count_prefers_explicit_value() {
        assert_eq!(worker_count(Some(3)).unwrap(), 3);
        assert!(worker_count(Some(0)).is_err());
        assert_eq!(with_workers(2, rayon::current_num_threads).unwrap(), 2);
    }
}
