use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use metricmap_core::cot::parse_response;
use metricmap_core::geometry::{Box2, LayoutMap};
use metricmap_core::map_eval::{default_extent, evaluate_map, rasterize, MapAccuracyReport};
use metricmap_core::oracle::{initial_observer, observer_map, oracle_response};
use metricmap_core::qa::{QAPair, QaGenerator, TaskType};
use metricmap_core::report::{
    report_from_scored, score_all, BenchReport, ResponseLine, ScoredRecord,
};
use metricmap_core::reward::{
    clipped_objective, group_advantages, score_response, ResponseRecord, RewardConfig,
};
use metricmap_core::scene::{load_scene, SceneRecord, SequenceSampler, DEFAULT_MIN_AREA_FRACTION};
use metricmap_core::synth::{synth_scene, SynthConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::{self, ClientConfig, QueryStatus, RetryPolicy, Secret};
use crate::io::{
    collect_scene_files, map_from_value, map_to_value, read_jsonl, write_file, write_jsonl,
};

#[derive(Debug, Parser)]
#[command(name = "metricmap", version, about = "Metric-map spatial QA toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate scene files and write them, resampled, to a scene store.
    Ingest(IngestArgs),
    /// Generate spatial QA pairs from scenes.
    GenQa(GenQaArgs),
    /// Score model responses against a QA set.
    Score(ScoreArgs),
    /// Compare predicted maps with ground-truth maps.
    EvalMap(EvalMapArgs),
    /// Rasterize maps onto an M×M grid of object centers.
    Rasterize(RasterizeArgs),
    /// Group-normalized advantages and clipped objective for response groups.
    Advantage(AdvantageArgs),
    /// Send QA prompts to a chat-completions endpoint.
    Query(QueryArgs),
    /// Render accuracy tables from scored records.
    Report(ReportArgs),
    /// Write ground-truth structured responses for a QA set.
    OracleAnswer(OracleArgs),
    /// Write seeded synthetic scenes.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    /// Weight of the format reward in the combined reward.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Comma-separated confidence thresholds of the numerical reward.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

impl RewardArgs {
    pub fn config(&self) -> Result<RewardConfig> {
        let mut cfg = RewardConfig {
            alpha: self.alpha,
            ..RewardConfig::default()
        };
        if let Some(t) = &self.thresholds {
            cfg.thresholds = t.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Scene JSON files or directories of them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Target frame rate of the stored trajectories.
    #[arg(long, default_value_t = 20.0)]
    pub fps: f64,
    /// Store directory; when omitted the scenes are only validated.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenQaArgs {
    #[arg(required = true)]
    pub scenes: Vec<PathBuf>,
    /// Items per scene for a task, e.g. `object_count=5` or `md=3`. Repeatable.
    #[arg(long = "quota", value_parser = parse_quota, required = true)]
    pub quotas: Vec<(TaskType, usize)>,
    #[arg(long, value_delimiter = ',', default_value = "1,4,8,12,16")]
    pub lengths: Vec<usize>,
    /// Sampled windows per length and scene.
    #[arg(long, default_value_t = 4)]
    pub per_length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_AREA_FRACTION)]
    pub min_area: f64,
    /// Skip scenes that cannot meet the quota instead of failing.
    #[arg(long)]
    pub skip_infeasible: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_quota(s: &str) -> Result<(TaskType, usize), String> {
    let (task, n) = s
        .split_once('=')
        .ok_or_else(|| format!("expected task=N, got {s:?}"))?;
    let task: TaskType = task.trim().parse().map_err(|e| format!("{e}"))?;
    let n = n
        .trim()
        .parse()
        .map_err(|e| format!("bad count {n:?}: {e}"))?;
    Ok((task, n))
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub qa: PathBuf,
    /// JSONL of `{"qa_id", "raw"}`.
    #[arg(long)]
    pub responses: PathBuf,
    /// Scored JSONL output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the task × length table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub reward: RewardArgs,
}

#[derive(Debug, Args)]
pub struct EvalMapArgs {
    /// JSONL of `{"qa_id", "map"}` or responses `{"qa_id", "raw"}`.
    #[arg(long)]
    pub pred: PathBuf,
    /// JSONL of `{"qa_id", "map"}`.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub reward: RewardArgs,
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    /// JSONL of `{"qa_id", "map"}`.
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long = "grid-m", default_value_t = 10)]
    pub grid_m: usize,
    /// Fixed world window `xmin,ymin,xmax,ymax`; defaults to each map's padded bounds.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub extent: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdvantageArgs {
    /// JSONL of groups: `{"query_id", "rewards": [...]}` or
    /// `{"query_id", "responses": [{"raw", "ratio"?}]}` (needs --qa).
    #[arg(long)]
    pub groups: PathBuf,
    #[arg(long)]
    pub qa: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub reward: RewardArgs,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub qa: PathBuf,
    /// Output JSONL; existing records are kept and skipped.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = client::BASE_URL_ENV, default_value = "")]
    pub base_url: String,
    #[arg(long, env = "METRICMAP_MODEL", default_value = "default")]
    pub model: String,
    #[arg(long, default_value_t = 0.01)]
    pub temperature: f64,
    #[arg(long, default_value_t = 2048)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 4)]
    pub max_parallel: usize,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    /// Delay before the first retry, doubled for each later one.
    #[arg(long, default_value_t = 1000)]
    pub backoff_ms: u64,
    #[arg(long, default_value_t = 300)]
    pub timeout_secs: u64,
    /// Prompt template file; `{question}` is replaced by the question and options.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Image path or URL pattern with `{scene_id}` and `{frame}` / `{frame:05}`.
    #[arg(long)]
    pub images: Option<String>,
    /// Answer with canned responses instead of calling the endpoint.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub qa: PathBuf,
    /// Scored JSONL written by `score`.
    #[arg(long)]
    pub scored: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub qa: PathBuf,
    /// Scene files or directories.
    #[arg(long, required = true, num_args = 1..)]
    pub scenes: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ground-truth map of each item as `{"qa_id", "map"}`.
    #[arg(long)]
    pub maps_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub count: u64,
    /// Seed of the first scene; later scenes use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 160)]
    pub poses: usize,
    #[arg(long, default_value_t = 40.0)]
    pub fps: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::GenQa(a) => gen_qa(a),
        Command::Score(a) => score(a),
        Command::EvalMap(a) => eval_map(a),
        Command::Rasterize(a) => rasterize_cmd(a),
        Command::Advantage(a) => advantage(a),
        Command::Query(a) => query(a),
        Command::Report(a) => report(a),
        Command::OracleAnswer(a) => oracle_answer(a),
        Command::Synth(a) => synth(a),
    }
}

fn read_scene(path: &std::path::Path) -> Result<SceneRecord> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_scene(std::io::BufReader::new(f))
        .with_context(|| format!("invalid scene {}", path.display()))
}

fn load_scenes(inputs: &[PathBuf]) -> Result<BTreeMap<String, SceneRecord>> {
    let mut scenes = BTreeMap::new();
    for path in collect_scene_files(inputs)? {
        let s = read_scene(&path)?;
        if scenes.insert(s.scene_id.clone(), s).is_some() {
            bail!("duplicate scene_id in {}", path.display());
        }
    }
    Ok(scenes)
}

fn ingest(a: IngestArgs) -> Result<()> {
    if !(a.fps > 0.0) {
        bail!("--fps must be positive");
    }
    let files = collect_scene_files(&a.inputs)?;
    let mut ok = Vec::new();
    let mut bad = 0;
    for path in &files {
        match read_scene(path) {
            Ok(s) => ok.push(s),
            Err(e) => {
                eprintln!("error: {e:#}");
                bad += 1;
            }
        }
    }
    if bad > 0 {
        bail!("{bad} of {} scene files failed validation", files.len());
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for s in &ok {
            let r = s.resampled(a.fps);
            write_file(
                &dir.join(format!("{}.json", s.scene_id)),
                r.to_json_string().as_bytes(),
            )?;
        }
    }
    println!("{} scenes valid", ok.len());
    Ok(())
}

/// Per-scene seed derived from the run seed.
fn scene_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn gen_qa(a: GenQaArgs) -> Result<()> {
    let quota: BTreeMap<TaskType, usize> = a.quotas.iter().copied().collect();
    let sampler = SequenceSampler {
        min_area_fraction: a.min_area,
        ..SequenceSampler::default()
    };
    let mut generator = QaGenerator {
        min_area_fraction: a.min_area,
        ..QaGenerator::default()
    };
    let mut all: Vec<QAPair> = Vec::new();
    let mut skipped = 0;
    for (i, path) in collect_scene_files(&a.scenes)?.iter().enumerate() {
        let scene = read_scene(path)?;
        let seed = scene_seed(a.seed, i);
        let result = sampler
            .sample(&scene, &a.lengths, a.per_length, seed)
            .map_err(anyhow::Error::from)
            .and_then(|seqs| {
                let n_lengths = seqs
                    .iter()
                    .map(|s| s.len())
                    .collect::<std::collections::BTreeSet<_>>()
                    .len();
                let qas = generator.generate(&scene, &seqs, &quota, seed)?;
                Ok((qas, n_lengths))
            });
        match result {
            Ok((qas, n_lengths)) => {
                for (task, q) in &quota {
                    let off = generator.remainder_offset.entry(*task).or_default();
                    *off = (*off + q % n_lengths.max(1)) % n_lengths.max(1);
                }
                all.extend(qas);
            }
            Err(e) if a.skip_infeasible => {
                eprintln!("skipping {}: {e:#}", path.display());
                skipped += 1;
            }
            Err(e) => return Err(e.context(format!("scene {}", path.display()))),
        }
    }
    write_jsonl(&a.out, &all)?;
    eprint!("{}", histogram(&all));
    eprintln!(
        "{} items written to {} ({skipped} scenes skipped)",
        all.len(),
        a.out.display()
    );
    Ok(())
}

/// Item counts per task and frame count.
pub fn histogram(qas: &[QAPair]) -> String {
    let mut counts: BTreeMap<(TaskType, usize), usize> = BTreeMap::new();
    let mut lengths: Vec<usize> = Vec::new();
    for q in qas {
        *counts.entry((q.task, q.frames.len())).or_default() += 1;
        if !lengths.contains(&q.frames.len()) {
            lengths.push(q.frames.len());
        }
    }
    lengths.sort_unstable();
    let mut out = format!("{:<22}", "task");
    for l in &lengths {
        out += &format!("{l:>6}");
    }
    out.push('\n');
    for t in TaskType::ALL {
        if !counts.keys().any(|(task, _)| *task == t) {
            continue;
        }
        out += &format!("{:<22}", t.as_str());
        for l in &lengths {
            out += &format!("{:>6}", counts.get(&(t, *l)).copied().unwrap_or(0));
        }
        out.push('\n');
    }
    out
}

fn score(a: ScoreArgs) -> Result<()> {
    let cfg = a.reward.config()?;
    let qas: Vec<QAPair> = read_jsonl(&a.qa)?;
    let responses: Vec<ResponseLine> = read_jsonl(&a.responses)?;
    let (scored, report) = score_all(&qas, &responses, &cfg)?;
    write_jsonl(&a.out, &scored)?;
    emit_report(&report, a.csv.as_ref())
}

fn emit_report(report: &BenchReport, csv: Option<&PathBuf>) -> Result<()> {
    print!("{}", report.to_text());
    if let Some(p) = csv {
        write_file(p, report.to_csv().as_bytes())?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let qas: Vec<QAPair> = read_jsonl(&a.qa)?;
    let scored: Vec<ScoredRecord> = read_jsonl(&a.scored)?;
    let report = report_from_scored(&qas, &scored)?;
    emit_report(&report, a.csv.as_ref())
}

#[derive(Debug, Deserialize)]
struct MapLine {
    qa_id: String,
    #[serde(default)]
    map: Option<Value>,
    #[serde(default)]
    raw: Option<String>,
}

impl MapLine {
    fn layout(&self) -> Result<LayoutMap> {
        match (&self.map, &self.raw) {
            (Some(m), _) => map_from_value(m).with_context(|| format!("map of {}", self.qa_id)),
            (None, Some(raw)) => Ok(parse_response(raw)
                .with_context(|| format!("response of {}", self.qa_id))?
                .map
                .unwrap_or_default()),
            (None, None) => bail!("{}: line has neither map nor raw", self.qa_id),
        }
    }
}

#[derive(Debug, Serialize)]
struct MapReportLine {
    qa_id: String,
    #[serde(flatten)]
    report: MapAccuracyReport,
}

fn eval_map(a: EvalMapArgs) -> Result<()> {
    let cfg = a.reward.config()?;
    let gt: Vec<MapLine> = read_jsonl(&a.gt)?;
    let pred: Vec<MapLine> = read_jsonl(&a.pred)?;
    let gt_maps: BTreeMap<&str, LayoutMap> = gt
        .iter()
        .map(|l| Ok((l.qa_id.as_str(), l.layout()?)))
        .collect::<Result<_>>()?;
    let mut lines = Vec::new();
    for p in &pred {
        let g = gt_maps
            .get(p.qa_id.as_str())
            .ok_or_else(|| anyhow!("no ground-truth map for {}", p.qa_id))?;
        // an unparseable prediction counts as an empty map
        let pm = p.layout().unwrap_or_else(|e| {
            eprintln!("warning: {e:#}");
            LayoutMap::default()
        });
        lines.push(MapReportLine {
            qa_id: p.qa_id.clone(),
            report: evaluate_map(&pm, g, &cfg),
        });
    }
    if lines.is_empty() {
        bail!("no predicted maps");
    }
    let n = lines.len() as f64;
    let mean =
        |f: fn(&MapAccuracyReport) -> f64| lines.iter().map(|l| f(&l.report)).sum::<f64>() / n;
    println!(
        "maps {}  size {:.4}  distance {:.4}  angle {:.4}  overall {:.4}",
        lines.len(),
        mean(|r| r.size_acc),
        mean(|r| r.distance_acc),
        mean(|r| r.angle_acc),
        mean(|r| r.overall)
    );
    if let Some(out) = &a.out {
        write_jsonl(out, &lines)?;
    }
    Ok(())
}

fn rasterize_cmd(a: RasterizeArgs) -> Result<()> {
    if a.grid_m == 0 {
        bail!("--grid-m must be at least 1");
    }
    let fixed = match &a.extent {
        Some(v) => Some(Box2::from_array([v[0], v[1], v[2], v[3]])?),
        None => None,
    };
    let maps: Vec<MapLine> = read_jsonl(&a.maps)?;
    let (mut out, mut objects, mut cells) = (Vec::new(), 0, 0);
    for l in &maps {
        let map = l.layout()?;
        let extent = match fixed {
            Some(e) => e,
            None => default_extent(&map).with_context(|| l.qa_id.clone())?,
        };
        let grid = rasterize(&map, a.grid_m, extent).with_context(|| l.qa_id.clone())?;
        objects += map.len();
        cells += grid.occupied();
        out.push(json!({"qa_id": l.qa_id, "grid": grid}));
    }
    println!(
        "{} maps, {objects} objects in {cells} occupied cells",
        out.len()
    );
    write_jsonl(&a.out, &out)
}

#[derive(Debug, Deserialize)]
struct GroupLine {
    query_id: String,
    #[serde(default)]
    rewards: Option<Vec<f64>>,
    #[serde(default)]
    responses: Vec<ResponseRecord>,
    #[serde(default)]
    ratios: Option<Vec<f64>>,
}

fn advantage(a: AdvantageArgs) -> Result<()> {
    let cfg = a.reward.config()?;
    let qas: BTreeMap<String, QAPair> = match &a.qa {
        Some(p) => read_jsonl::<QAPair>(p)?
            .into_iter()
            .map(|q| (q.qa_id.clone(), q))
            .collect(),
        None => BTreeMap::new(),
    };
    let groups: Vec<GroupLine> = read_jsonl(&a.groups)?;
    let mut out = Vec::new();
    for g in groups {
        let rewards = match &g.rewards {
            Some(r) => r.clone(),
            None => {
                let qa = qas.get(&g.query_id).ok_or_else(|| {
                    anyhow!("{}: no rewards and no QA item to score against", g.query_id)
                })?;
                g.responses
                    .iter()
                    .map(|r| score_response(qa, &r.raw, &cfg).r_total)
                    .collect()
            }
        };
        let advantages = group_advantages(&rewards, &cfg).with_context(|| g.query_id.clone())?;
        let ratios = g.ratios.clone().or_else(|| {
            g.responses
                .iter()
                .map(|r| r.ratio)
                .collect::<Option<Vec<_>>>()
                .filter(|v| !v.is_empty())
        });
        let objective = match &ratios {
            Some(r) => {
                Some(clipped_objective(r, &advantages, &cfg).with_context(|| g.query_id.clone())?)
            }
            None => None,
        };
        out.push(json!({
            "query_id": g.query_id,
            "rewards": rewards,
            "advantages": advantages,
            "objective": objective,
        }));
    }
    write_jsonl(&a.out, &out)?;
    eprintln!("{} groups written to {}", out.len(), a.out.display());
    Ok(())
}

fn query(a: QueryArgs) -> Result<()> {
    let qas: Vec<QAPair> = read_jsonl(&a.qa)?;
    let template = match &a.template {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => client::DEFAULT_PROMPT_TEMPLATE.to_string(),
    };
    let cfg = ClientConfig {
        base_url: a.base_url,
        api_key: Secret::new(std::env::var(client::API_KEY_ENV).unwrap_or_default()),
        model_name: a.model,
        temperature: a.temperature,
        max_output_tokens: a.max_tokens,
        max_parallel: a.max_parallel,
        retry: RetryPolicy {
            max_attempts: a.max_attempts,
            backoff_base: Duration::from_millis(a.backoff_ms),
        },
        request_timeout: Duration::from_secs(a.timeout_secs),
        dry_run: a.dry_run,
    };
    let jobs = client::build_jobs(&qas, &template, a.images.as_deref());
    let records = client::run_batch(&jobs, &cfg, &a.out)?;
    let failed = records
        .iter()
        .filter(|r| matches!(r.status, QueryStatus::Failed(_)))
        .count();
    println!("{} records, {failed} failed", records.len());
    Ok(())
}

fn oracle_answer(a: OracleArgs) -> Result<()> {
    let scenes = load_scenes(&a.scenes)?;
    let qas: Vec<QAPair> = read_jsonl(&a.qa)?;
    let mut responses = Vec::with_capacity(qas.len());
    let mut maps = Vec::new();
    for qa in &qas {
        let scene = scenes
            .get(&qa.scene_id)
            .ok_or_else(|| anyhow!("scene {} of {} not found", qa.scene_id, qa.qa_id))?;
        let raw = oracle_response(scene, qa).with_context(|| qa.qa_id.clone())?;
        responses.push(ResponseLine {
            qa_id: qa.qa_id.clone(),
            raw,
        });
        if a.maps_out.is_some() {
            let observer = initial_observer(scene, &qa.frames)?;
            let objects = qa.refs.iter().filter_map(|id| scene.object(id));
            maps.push(
                json!({"qa_id": qa.qa_id, "map": map_to_value(&observer_map(&observer, objects))}),
            );
        }
    }
    write_jsonl(&a.out, &responses)?;
    if let Some(p) = &a.maps_out {
        write_jsonl(p, &maps)?;
    }
    eprintln!(
        "{} responses written to {}",
        responses.len(),
        a.out.display()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        poses: a.poses,
        fps: a.fps,
        ..SynthConfig::default()
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for seed in a.seed..a.seed + a.count {
        let s = synth_scene(seed, &cfg);
        write_file(
            &a.out.join(format!("{}.json", s.scene_id)),
            s.to_json_string().as_bytes(),
        )?;
    }
    println!("{} scenes written to {}", a.count, a.out.display());
    Ok(())
}
