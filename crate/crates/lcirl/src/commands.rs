//! The pipeline steps behind each subcommand, with options already resolved.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use lcirl_core::eval::{mee, mee_summed, report_row, state_bands, ReportRow, StateBands};
use lcirl_core::features::{FeatureConfig, NormalizationConstants, RewardModel, ThetaWeights, Variant};
use lcirl_core::ingest::{self, ExtractSettings, SkipRecord, SplitSpec};
use lcirl_core::irl::{self, Demonstration, FitSettings, SweepPoint, TrainingReport};
use lcirl_core::prediction::{
    scenario_unpredictability, series_from_trace, ConstantVelocity, UnpredictabilitySeries, DEFAULT_LOOKBACK,
};
use lcirl_core::scenario::{AdjacentRole, Scenario, Split, Trajectory};
use lcirl_core::synth::{
    make_expert, make_recording, make_scene, varied_spec, RecordingSpec, RecordingTruth, SceneSpec,
};
use lcirl_core::trajopt::{optimize, ConvergenceReport, OptimizerSettings};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SplitChoice;
use crate::error::{AppError, AppResult, Context};
use crate::formats::{file_stem, load_scenario_dir, read_json, read_model, read_scenario, write_json, write_scenario};
use crate::plot;
use crate::tables::{self, ColumnMap, Schema, Units};

/// Subdirectory for per-scenario reports, kept apart from scenario files.
pub const REPORTS_DIR: &str = "reports";

fn create_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn open(path: &Path) -> AppResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| AppError::io(path, e))
}

/// z for `scenario`: from `<trace_dir>/<id>.csv` when a directory is given,
/// otherwise from the constant-velocity predictor.
pub fn unpredictability_for(scenario: &Scenario, trace_dir: Option<&Path>) -> AppResult<UnpredictabilitySeries> {
    match trace_dir {
        Some(dir) => {
            let path = dir.join(format!("{}.csv", file_stem(&scenario.id)));
            let trace = tables::parse_trace(open(&path)?, scenario.horizon(), &path.display().to_string())?;
            series_from_trace(scenario, &trace, DEFAULT_LOOKBACK, true).context(path.display())
        }
        None => scenario_unpredictability(scenario, &ConstantVelocity, DEFAULT_LOOKBACK).context(&scenario.id),
    }
}

fn demonstrations(
    scenarios: Vec<Scenario>,
    variant: Variant,
    trace_dir: Option<&Path>,
) -> AppResult<Vec<Demonstration>> {
    scenarios
        .into_par_iter()
        .map(|scenario| {
            let z =
                if variant.needs_unpredictability() { Some(unpredictability_for(&scenario, trace_dir)?) } else { None };
            Ok(Demonstration { scenario, z })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub inputs: Vec<PathBuf>,
    pub units: Units,
    pub columns: ColumnMap,
    pub out_dir: PathBuf,
    /// Scenario id prefix; defaults to each input's file stem.
    pub source: Option<String>,
    pub settings: ExtractSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputLog {
    pub path: String,
    pub source: String,
    pub tracks: usize,
    pub scenarios: Vec<String>,
    pub replay_errors: Vec<f64>,
    pub skipped: Vec<SkipRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestLog {
    pub settings: ExtractSettings,
    pub inputs: Vec<InputLog>,
}

pub fn ingest(o: &IngestOptions) -> AppResult<IngestLog> {
    if o.inputs.is_empty() {
        return Err(AppError::Input("ingest needs at least one input file".into()));
    }
    let results = o
        .inputs
        .par_iter()
        .map(|path| {
            let name = path.display().to_string();
            let raw = tables::parse_tracks(open(path)?, &o.columns, o.units, &name)?;
            let processed: Vec<_> = raw
                .par_iter()
                .map(|t| ingest::process_track(t, o.settings.dt, &o.settings.smoothing))
                .collect::<lcirl_core::Result<Vec<_>>>()
                .context(&name)?
                .into_iter()
                .flatten()
                .collect();
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let source = match (&o.source, o.inputs.len()) {
                (Some(s), 1) => s.clone(),
                (Some(s), _) => format!("{s}-{stem}"),
                (None, _) => stem,
            };
            let out = ingest::extract_lane_changes(&processed, &source, &o.settings);
            Ok((name, source, raw.len(), out))
        })
        .collect::<AppResult<Vec<_>>>()?;

    create_dir(&o.out_dir)?;
    let mut seen = BTreeMap::new();
    let mut log = IngestLog { settings: o.settings, inputs: Vec::new() };
    for (path, source, tracks, out) in results {
        for skip in &out.skipped {
            warn!("{path}: vehicle {} at frame {} skipped: {}", skip.vehicle_id, skip.frame, skip.reason);
        }
        for s in &out.scenarios {
            if seen.insert(s.id.clone(), path.clone()).is_some() {
                return Err(AppError::Input(format!("scenario id {} produced by two inputs", s.id)));
            }
            write_scenario(&o.out_dir, s)?;
        }
        info!("{path}: {tracks} tracks, {} scenarios, {} skipped", out.scenarios.len(), out.skipped.len());
        log.inputs.push(InputLog {
            path,
            source,
            tracks,
            scenarios: out.scenarios.iter().map(|s| s.id.clone()).collect(),
            replay_errors: out.replay_errors,
            skipped: out.skipped,
        });
    }
    write_json(&o.out_dir.join(REPORTS_DIR).join("extraction_log.json"), &log)?;
    Ok(log)
}

/// Axes of a hyperparameter grid; missing axes keep the base config value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub c: Vec<f64>,
    pub t_p: Vec<f64>,
    pub t_f: Vec<f64>,
    pub c_p: Vec<f64>,
    pub c_f: Vec<f64>,
}

impl SweepGrid {
    /// Cartesian product in the order `c, t_p, t_f, c_p, c_f`, last axis fastest.
    pub fn expand(&self, base: &FeatureConfig) -> Vec<FeatureConfig> {
        let axis = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let mut out = Vec::new();
        for &c in &axis(&self.c, base.c) {
            for &t_p in &axis(&self.t_p, base.t_p) {
                for &t_f in &axis(&self.t_f, base.t_f) {
                    for &c_p in &axis(&self.c_p, base.c_p) {
                        for &c_f in &axis(&self.c_f, base.c_f) {
                            out.push(FeatureConfig { c, t_p, t_f, c_p, c_f, ..*base });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Reads a TOML or (by extension) JSON file.
pub fn read_structured<T: serde::de::DeserializeOwned>(path: &Path) -> AppResult<T> {
    if path.extension().is_some_and(|e| e == "json") {
        return read_json(path);
    }
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    toml::from_str(&text).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub data_dir: PathBuf,
    pub split_spec: Option<PathBuf>,
    pub split: SplitChoice,
    pub variant: Variant,
    pub sweep_grid: Option<PathBuf>,
    pub seed: u64,
    pub out_model: PathBuf,
    pub report: PathBuf,
    pub trace_dir: Option<PathBuf>,
    pub features: FeatureConfig,
    pub fit: FitSettings,
    pub optimizer: OptimizerSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutput {
    pub variant: Variant,
    pub seed: u64,
    pub split: SplitChoice,
    pub scenarios: Vec<String>,
    pub split_warnings: Vec<String>,
    pub training: TrainingReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_best: Option<usize>,
}

pub fn train(o: &TrainOptions) -> AppResult<(RewardModel, TrainOutput)> {
    let all = load_scenario_dir(&o.data_dir)?;
    let source = o.data_dir.display().to_string();
    let (chosen, warnings) = if o.split == SplitChoice::All {
        (all, Vec::new())
    } else {
        let spec: Option<SplitSpec> = o.split_spec.as_deref().map(read_structured).transpose()?;
        let outcome = ingest::split(all, spec.as_ref(), o.seed, &source).context(&source)?;
        let which = match o.split {
            SplitChoice::Train => Split::Train,
            SplitChoice::Validation => Split::Validation,
            _ => Split::Test,
        };
        let [train, validation, test] = outcome.datasets;
        let d = match which {
            Split::Train => train,
            Split::Validation => validation,
            Split::Test => test,
        };
        (d.scenarios, outcome.warnings)
    };
    for w in &warnings {
        warn!("{w}");
    }
    if chosen.is_empty() {
        return Err(AppError::Input(format!("{source}: no scenarios in the {:?} split", o.split)));
    }
    info!("training {} on {} scenarios", o.variant.name(), chosen.len());
    let ids = chosen.iter().map(|s| s.id.clone()).collect();
    let demos = demonstrations(chosen, o.variant, o.trace_dir.as_deref())?;
    let fit_settings = FitSettings { seed: o.seed, ..o.fit };
    let (model, training, sweep, best) = match &o.sweep_grid {
        Some(path) => {
            let grid: SweepGrid = read_structured(path)?;
            let points = grid.expand(&o.features);
            let r =
                irl::hyperparameter_sweep(&demos, o.variant, &points, &fit_settings, &o.optimizer).context("sweep")?;
            info!("sweep picked {}", irl::describe(&r.model.config));
            (r.model, r.report, Some(r.points), Some(r.best))
        }
        None => {
            let f = irl::fit(&demos, o.variant, &o.features, &fit_settings).context("fit")?;
            (f.model, f.report, None, None)
        }
    };
    let out = TrainOutput {
        variant: o.variant,
        seed: o.seed,
        split: o.split,
        scenarios: ids,
        split_warnings: warnings,
        training,
        sweep,
        sweep_best: best,
    };
    write_json(&o.out_model, &model)?;
    write_json(&o.report, &out)?;
    Ok((model, out))
}

#[derive(Debug, Clone)]
pub enum ScenarioSource {
    File(PathBuf),
    Dir(PathBuf),
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub model: PathBuf,
    pub input: ScenarioSource,
    pub out_dir: PathBuf,
    pub trace_dir: Option<PathBuf>,
    pub optimizer: OptimizerSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub scenario: String,
    pub report: ConvergenceReport,
}

pub fn generate(o: &GenerateOptions) -> AppResult<Vec<GenerationRecord>> {
    let model = read_model(&o.model)?;
    o.optimizer.validate().context("optimizer settings")?;
    let scenarios = match &o.input {
        ScenarioSource::File(p) => vec![read_scenario(p)?],
        ScenarioSource::Dir(d) => load_scenario_dir(d)?,
    };
    let results = scenarios
        .par_iter()
        .map(|s| {
            let z = if model.variant.needs_unpredictability() {
                Some(unpredictability_for(s, o.trace_dir.as_deref())?)
            } else {
                None
            };
            let out = optimize(s, &model, z.as_ref(), &o.optimizer).context(&s.id)?;
            Ok((s.with_ego(out.trajectory), out.report))
        })
        .collect::<AppResult<Vec<_>>>()?;
    create_dir(&o.out_dir)?;
    let mut records = Vec::with_capacity(results.len());
    for (s, report) in results {
        write_scenario(&o.out_dir, &s)?;
        let record = GenerationRecord { scenario: s.id.clone(), report };
        write_json(&o.out_dir.join(REPORTS_DIR).join(format!("{}.json", file_stem(&s.id))), &record)?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub expert_dir: PathBuf,
    pub gen_dir_a: PathBuf,
    pub gen_dir_b: PathBuf,
    pub out: PathBuf,
    pub dataset: String,
    pub labels: [String; 2],
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub row: ReportRow,
    pub text: String,
}

fn matched(experts: &[Scenario], dir: &Path) -> AppResult<Vec<Trajectory>> {
    let mut by_id: BTreeMap<String, Scenario> =
        load_scenario_dir(dir)?.into_iter().map(|s| (s.id.clone(), s)).collect();
    experts
        .iter()
        .map(|e| {
            by_id
                .remove(&e.id)
                .map(|s| s.ego)
                .ok_or_else(|| AppError::Input(format!("{}: no generated trajectory for {}", dir.display(), e.id)))
        })
        .collect()
}

fn pm(m: &lcirl_core::eval::MeanStd) -> String {
    format!("{:.3} ± {:.3}", m.mean, m.std)
}

fn band_rows(label: &str, bands: &StateBands, dt: f64) -> Vec<Vec<String>> {
    (0..bands.mean.len())
        .map(|k| {
            let mut r = vec![label.to_string(), k.to_string(), format!("{}", k as f64 * dt)];
            for q in 0..5 {
                r.push(bands.mean[k][q].to_string());
                r.push(bands.lower[k][q].to_string());
                r.push(bands.upper[k][q].to_string());
            }
            r
        })
        .collect()
}

pub fn eval(o: &EvalOptions) -> AppResult<EvalOutput> {
    let experts = load_scenario_dir(&o.expert_dir)?;
    if experts.is_empty() {
        return Err(AppError::Input(format!("{}: no expert scenarios", o.expert_dir.display())));
    }
    let gen_a = matched(&experts, &o.gen_dir_a)?;
    let gen_b = matched(&experts, &o.gen_dir_b)?;
    let expert_trajs: Vec<Trajectory> = experts.iter().map(|s| s.ego.clone()).collect();
    let row = report_row(o.dataset.clone(), &expert_trajs, &gen_a, &gen_b).context("report")?;

    let [la, lb] = &o.labels;
    let header = ["dataset", "# traj", &format!("MEE {la} (m)"), &format!("MEE {lb} (m)"), "% imp"];
    let cells = vec![vec![
        row.dataset.clone(),
        row.trajectories.to_string(),
        pm(&row.mee_a),
        pm(&row.mee_b),
        format!("{:.2}", row.improvement),
    ]];
    let text = tables::aligned(&header, &cells);

    create_dir(&o.out)?;
    fs::write(o.out.join("report.txt"), &text).map_err(|e| AppError::io(o.out.join("report.txt"), e))?;
    let csv_header = [
        "dataset",
        "trajectories",
        "label_a",
        "label_b",
        "mee_a_mean",
        "mee_a_std",
        "mee_b_mean",
        "mee_b_std",
        "summed_a_mean",
        "summed_a_std",
        "summed_b_mean",
        "summed_b_std",
        "improvement_percent",
    ];
    let csv_row = vec![vec![
        row.dataset.clone(),
        row.trajectories.to_string(),
        la.clone(),
        lb.clone(),
        row.mee_a.mean.to_string(),
        row.mee_a.std.to_string(),
        row.mee_b.mean.to_string(),
        row.mee_b.std.to_string(),
        row.summed_a.mean.to_string(),
        row.summed_a.std.to_string(),
        row.summed_b.mean.to_string(),
        row.summed_b.std.to_string(),
        row.improvement.to_string(),
    ]];
    write_csv(&o.out.join("report.csv"), &csv_header, &csv_row)?;

    let mut per = Vec::new();
    for ((e, a), b) in expert_trajs.iter().zip(&gen_a).zip(&gen_b) {
        per.push((
            mee(a, e).context("mee")?,
            mee(b, e).context("mee")?,
            mee_summed(a, e).context("mee")?,
            mee_summed(b, e).context("mee")?,
        ));
    }
    let per_rows: Vec<Vec<String>> = experts
        .iter()
        .zip(&per)
        .map(|(s, p)| vec![s.id.clone(), p.0.to_string(), p.1.to_string(), p.2.to_string(), p.3.to_string()])
        .collect();
    write_csv(&o.out.join("scenarios.csv"), &["scenario", "mee_a", "mee_b", "summed_a", "summed_b"], &per_rows)?;

    let dt = experts[0].dt();
    let mut bands = Vec::new();
    for (label, set) in [("expert", &expert_trajs), (la.as_str(), &gen_a), (lb.as_str(), &gen_b)] {
        bands.extend(band_rows(label, &state_bands(set).context("bands")?, dt));
    }
    let mut band_header = vec!["set".to_string(), "step".into(), "time".into()];
    for q in ["x", "y", "psi", "v", "omega"] {
        for s in ["mean", "lower", "upper"] {
            band_header.push(format!("{q}_{s}"));
        }
    }
    let band_header: Vec<&str> = band_header.iter().map(String::as_str).collect();
    write_csv(&o.out.join("bands.csv"), &band_header, &bands)?;
    Ok(EvalOutput { row, text })
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> AppResult<()> {
    let f = File::create(path).map_err(|e| AppError::io(path, e))?;
    tables::write_table(f, header, rows)
}

/// Scene and recording description for `synth`. The default scene jitters
/// gaps and speeds so that `--n` scenes differ.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub scene: SceneSpec,
    /// Roles left empty in every scene (TOML has no null for `cars`).
    pub absent: Vec<AdjacentRole>,
    pub recording: RecordingSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let scene = varied_spec(0);
        Self {
            scene: SceneSpec { id: SceneSpec::default().id, ..scene },
            absent: Vec::new(),
            recording: RecordingSpec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub spec: SynthSpec,
    pub theta_star: Option<Vec<f64>>,
    pub n: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub fixture_format: Option<Schema>,
    pub noise: f64,
    pub optimizer: OptimizerSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthRecord {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ConvergenceReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub ego_id: u64,
    pub change_frame: i64,
    /// Vehicle id per role name.
    pub neighbors: BTreeMap<String, u64>,
}

impl From<&RecordingTruth> for FixtureTruth {
    fn from(t: &RecordingTruth) -> Self {
        let neighbors = AdjacentRole::ALL
            .iter()
            .filter_map(|r| t.neighbors[r.index()].map(|id| (r.name().to_string(), id)))
            .collect();
        Self { ego_id: t.ego_id, change_frame: t.change_frame, neighbors }
    }
}

pub fn variant_for(theta: &[f64]) -> AppResult<Variant> {
    match theta.len() {
        5 => Ok(Variant::Baseline),
        7 => Ok(Variant::Unpred),
        n => Err(AppError::Input(format!("theta-star has {n} entries; expected 5 (baseline) or 7 (unpred)"))),
    }
}

pub fn synth(o: &SynthOptions) -> AppResult<Vec<SynthRecord>> {
    let mut scene_spec = o.spec.scene.clone();
    for role in &o.spec.absent {
        scene_spec.cars[role.index()] = None;
    }
    scene_spec.validate().context("scene spec")?;
    let model = match &o.theta_star {
        Some(theta) => {
            let variant = variant_for(theta)?;
            let model = RewardModel {
                variant,
                theta: ThetaWeights::new(variant, theta.clone()).context("theta-star")?,
                config: FeatureConfig::default(),
                normalization: NormalizationConstants::identity(variant.len()),
            };
            model.validate().context("theta-star")?;
            Some(model)
        }
        None => None,
    };
    let results = (0..o.n)
        .into_par_iter()
        .map(|i| {
            let spec = SceneSpec { id: format!("{}-{i:03}", scene_spec.id), ..scene_spec.clone() };
            let seed = o.seed.wrapping_add(i as u64);
            let scene = make_scene(&spec, seed).context(&spec.id)?;
            match &model {
                Some(m) => {
                    let z = if m.variant.needs_unpredictability() {
                        Some(scenario_unpredictability(&scene, &ConstantVelocity, DEFAULT_LOOKBACK).context(&spec.id)?)
                    } else {
                        None
                    };
                    let (expert, report) =
                        make_expert(&scene, m, z.as_ref(), &o.optimizer, o.noise, seed).context(&spec.id)?;
                    Ok((expert, Some(report)))
                }
                None => Ok((scene, None)),
            }
        })
        .collect::<AppResult<Vec<_>>>()?;
    create_dir(&o.out_dir)?;
    let mut records = Vec::new();
    for (s, report) in results {
        write_scenario(&o.out_dir, &s)?;
        records.push(SynthRecord { scenario: s.id, report });
    }
    write_json(&o.out_dir.join(REPORTS_DIR).join("synth.json"), &records)?;
    if let Some(schema) = o.fixture_format {
        let (tracks, truth) = make_recording(&o.spec.recording, o.seed).context("recording")?;
        let dir = o.out_dir.join("fixtures");
        create_dir(&dir)?;
        let path = dir.join("recording.csv");
        let f = File::create(&path).map_err(|e| AppError::io(&path, e))?;
        tables::write_tracks(f, &tracks, &schema.columns(), schema.default_units())?;
        write_json(&dir.join("recording_truth.json"), &FixtureTruth::from(&truth))?;
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct PlotOptions {
    pub scenario: PathBuf,
    pub gens: Vec<PathBuf>,
    pub time: f64,
    /// Output prefix; `.svg` and `.csv` are appended.
    pub out: PathBuf,
}

pub fn plot(o: &PlotOptions) -> AppResult<(PathBuf, PathBuf)> {
    let scenario = read_scenario(&o.scenario)?;
    let mut gens = Vec::new();
    for p in &o.gens {
        let g = read_scenario(p)?;
        if g.horizon() != scenario.horizon() {
            return Err(AppError::Input(format!("{}: horizon differs from the scenario", p.display())));
        }
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| g.id.clone());
        let parent = p.parent().and_then(|d| d.file_name()).map(|d| d.to_string_lossy().into_owned());
        gens.push((parent.map_or(label.clone(), |d| format!("{d}/{label}")), g.ego));
    }
    if !(o.time >= 0.0) {
        return Err(AppError::Input(format!("plot time must be nonnegative, got {}", o.time)));
    }
    let k = ((o.time / scenario.dt()).round() as usize).min(scenario.horizon() - 1);
    let svg = plot::snapshot_svg(&scenario, &gens, k);
    let (header, rows) = plot::time_series(&scenario, &gens);
    let with_ext = |ext: &str| {
        let mut s = o.out.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    let svg_path = with_ext(".svg");
    let csv_path = with_ext(".csv");
    if let Some(dir) = svg_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(&svg_path, svg).map_err(|e| AppError::io(&svg_path, e))?;
    write_csv(&csv_path, &header, &rows)?;
    Ok((svg_path, csv_path))
}
