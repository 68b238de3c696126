//! End-to-end commands behind the `samp` binary: corpus generation,
//! training, headless synthesis, evaluation and serving. Each command takes
//! a [`RunConfig`] and returns the JSON summary the binary prints.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::objects::{random_object, read_labeled_objects, write_labeled_objects, ObjectFamily};
use crate::dataset::{generate_corpus, read_clip, write_clip, write_dataset, CorpusPlan, DatasetManifest, MotionClip};
use crate::error::{Error, Result};
use crate::goal_net::{goal_examples, goal_stats, reconstruction_error, GoalModel, GoalNetConfig, GoalNetParams, GoalTrainer};
use crate::kinematics::{RootTransform, Skeleton};
use crate::metrics::{apd, execution_time, fd_feature, frechet_distance, penetration_pct, pose_feature, precision, reports_to_csv, EvalReport};
use crate::motion_net::{MotionModel, MotionNetConfig, MotionNetParams, MotionTrainer, ScheduleConfig};
use crate::runtime::{blocked_corridor_scene, corridor_start, GoalSource, MotionPolicy, ScriptedWalker, Session, SessionOptions};
use crate::server::{Server, ServiceConfig};
use crate::state::{Action, StateConfig};
use crate::voxel::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Tiny,
    Full,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "full" => Ok(Preset::Full),
            _ => Err(Error::Config(format!("unknown preset `{s}` (expected tiny or full)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// The trained motion network.
    #[default]
    Model,
    /// The hand-written walker (no checkpoint needed).
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalKind {
    /// The goal network if its checkpoint exists, labeled goals otherwise.
    #[default]
    Auto,
    Net,
    Labeled,
}

/// Everything a command needs. Unset optional fields fall back to the
/// preset defaults; paths default to locations under `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
    /// Overrides the epoch count of whichever network is trained.
    pub epochs: Option<usize>,
    pub corpus: Option<CorpusPlan>,
    pub motion: Option<MotionNetConfig>,
    pub schedule: Option<ScheduleConfig>,
    pub goal: Option<GoalNetConfig>,
    /// Labeled objects generated for goal training.
    pub goal_objects: Option<usize>,
    /// Scene file; the built-in blocked-corridor scene when unset.
    pub scene: Option<PathBuf>,
    pub object: String,
    pub action: String,
    pub start: Option<RootTransform>,
    pub policy: PolicyKind,
    pub goals: GoalKind,
    pub planner: bool,
    pub inflation: f64,
    /// Frame limit of one synthesized run.
    pub max_frames: usize,
    /// Runs per evaluated experiment.
    pub runs: usize,
    pub bind: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Tiny,
            seed: 0,
            out: PathBuf::from("runs/samp"),
            dataset: None,
            checkpoints: None,
            epochs: None,
            corpus: None,
            motion: None,
            schedule: None,
            goal: None,
            goal_objects: None,
            scene: None,
            object: "sofa".into(),
            action: "sit".into(),
            start: None,
            policy: PolicyKind::Model,
            goals: GoalKind::Auto,
            planner: true,
            inflation: crate::planner::DEFAULT_INFLATION,
            max_frames: 900,
            runs: 10,
            bind: "127.0.0.1:7878".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("dataset"))
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoints.clone().unwrap_or_else(|| self.out.join("checkpoints"))
    }

    pub fn motion_stem(&self) -> PathBuf {
        self.checkpoint_dir().join("motion")
    }

    pub fn goal_stem(&self) -> PathBuf {
        self.checkpoint_dir().join("goal")
    }

    pub fn motion_config(&self) -> MotionNetConfig {
        self.motion.clone().unwrap_or_else(|| match self.preset {
            Preset::Tiny => MotionNetConfig::tiny(),
            Preset::Full => MotionNetConfig::full(),
        })
    }

    pub fn state_config(&self) -> StateConfig {
        self.motion_config().state
    }

    pub fn schedule(&self) -> ScheduleConfig {
        let mut s = self.schedule.clone().unwrap_or_else(|| match self.preset {
            Preset::Tiny => ScheduleConfig::tiny(),
            Preset::Full => ScheduleConfig::default(),
        });
        if let Some(e) = self.epochs {
            s.epochs = e;
        }
        s
    }

    pub fn goal_config(&self) -> GoalNetConfig {
        let mut g = self.goal.clone().unwrap_or_else(|| match self.preset {
            Preset::Tiny => GoalNetConfig::tiny(),
            Preset::Full => GoalNetConfig::full(),
        });
        if let Some(e) = self.epochs {
            g.epochs = e;
        }
        g
    }

    pub fn corpus_plan(&self) -> CorpusPlan {
        self.corpus.clone().unwrap_or_else(|| match self.preset {
            Preset::Tiny => CorpusPlan::tiny(),
            Preset::Full => CorpusPlan::full(),
        })
    }

    pub fn action(&self) -> Result<Action> {
        Action::parse(&self.action).ok_or_else(|| Error::Config(format!("unknown action `{}`", self.action)))
    }

    pub fn validate(&self) -> Result<()> {
        self.motion_config().validate()?;
        self.state_config().validate()?;
        self.schedule().validate()?;
        self.goal_config().validate()?;
        if self.epochs == Some(0) {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.inflation >= 0.0) {
            return Err(Error::Config("inflation must be >= 0".into()));
        }
        if self.runs < 2 {
            return Err(Error::Config("evaluation needs at least 2 runs".into()));
        }
        self.action()?;
        Ok(())
    }

    pub fn load_scene(&self) -> Result<Scene> {
        match &self.scene {
            Some(p) => Scene::load(p),
            None => Ok(blocked_corridor_scene()),
        }
    }

    fn start_pose(&self) -> RootTransform {
        self.start.unwrap_or_else(corridor_start)
    }

    fn session_options(&self, planner: bool) -> SessionOptions {
        SessionOptions {
            start: self.start_pose(),
            use_planner: planner,
            inflation: self.inflation,
            max_frames: self.max_frames,
            ..SessionOptions::default()
        }
    }

    pub fn load_policy(&self) -> Result<Arc<dyn MotionPolicy>> {
        Ok(match self.policy {
            PolicyKind::Model => Arc::new(MotionModel::load(&self.motion_stem())?),
            PolicyKind::Scripted => Arc::new(ScriptedWalker::new(self.state_config())),
        })
    }

    pub fn load_goal_source(&self) -> Result<GoalSource> {
        let stem = self.goal_stem();
        let exists = stem.with_extension("json").exists();
        Ok(match (self.goals, exists) {
            (GoalKind::Labeled, _) | (GoalKind::Auto, false) => GoalSource::Labeled,
            (GoalKind::Net, _) | (GoalKind::Auto, true) => GoalSource::Net(Arc::new(GoalModel::load(&stem)?)),
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Labeled objects for goal training: every family, randomly scaled.
pub fn labeled_objects(n: usize, seed: u64) -> Vec<crate::voxel::SceneObject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let family = ObjectFamily::ALL[i % ObjectFamily::ALL.len()];
            random_object(family, format!("{}_{i}", family.name()), 0.2, &mut rng)
        })
        .collect()
}

/// Writes a synthetic corpus, its statistics and a set of labeled objects.
pub fn datagen(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let state = cfg.state_config();
    let skeleton = Skeleton::for_joint_count(state.joints)?;
    let clips = generate_corpus(&cfg.corpus_plan(), cfg.seed, &state, &skeleton)?;
    let dir = cfg.dataset_dir();
    let manifest = write_dataset(&dir, &clips, cfg.seed)?;
    let n_objects = cfg.goal_objects.unwrap_or(match cfg.preset {
        Preset::Tiny => 200,
        Preset::Full => 1000,
    });
    let objects_path = dir.join("objects.json");
    write_labeled_objects(&objects_path, &labeled_objects(n_objects, cfg.seed))?;
    Ok(json!({
        "command": "datagen",
        "clips": clips.len(),
        "frames": clips.iter().map(MotionClip::len).sum::<usize>(),
        "stateDim": state.state_dim(),
        "manifest": path_str(&manifest),
        "objects": n_objects,
    }))
}

fn load_dataset(cfg: &RunConfig) -> Result<(DatasetManifest, Vec<MotionClip>)> {
    let dir = cfg.dataset_dir();
    let manifest = DatasetManifest::load(dir.join("manifest.json"))?;
    let clips = manifest.load_clips(&dir)?;
    if clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((manifest, clips))
}

/// Scheduled-sampling training with a checkpoint after every epoch.
pub fn train_motion(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let (manifest, clips) = load_dataset(cfg)?;
    let net = cfg.motion_config();
    if manifest.config != net.state {
        return Err(Error::Config("dataset state layout differs from the motion network's".into()));
    }
    let schedule = cfg.schedule();
    let mut windows = Vec::new();
    for c in &clips {
        windows.extend(c.training_windows(schedule.rollout_length, schedule.rollout_length, &manifest.stats)?);
    }
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = MotionNetParams::new(net, &mut rng)?;
    let mut trainer = MotionTrainer::new(params, manifest.stats.clone(), schedule.clone());
    let dir = cfg.checkpoint_dir();
    let mut losses = Vec::with_capacity(schedule.epochs);
    for epoch in 1..=schedule.epochs {
        windows.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for batch in windows.chunks(schedule.batch_clips.max(1)) {
            total += trainer.train_rollout(batch, epoch, &mut rng)?.loss;
            steps += 1;
        }
        losses.push(total / steps as f64);
        trainer.model().save(&dir.join(format!("motion-epoch-{epoch:03}")), cfg.seed)?;
    }
    let model = trainer.into_model();
    model.save(&cfg.motion_stem(), cfg.seed)?;
    Ok(json!({
        "command": "train-motion",
        "epochs": schedule.epochs,
        "windows": windows.len(),
        "epochLoss": losses,
        "checkpoint": path_str(&cfg.motion_stem()),
    }))
}

/// Splits labeled objects into training and held-out sets (last tenth).
pub fn split_objects(objects: &[crate::voxel::SceneObject]) -> (&[crate::voxel::SceneObject], &[crate::voxel::SceneObject]) {
    let held = (objects.len() / 10).max(1).min(objects.len().saturating_sub(1));
    objects.split_at(objects.len() - held)
}

pub fn train_goal(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let path = cfg.dataset_dir().join("objects.json");
    let objects = read_labeled_objects(&path)?;
    let (train, held) = split_objects(&objects);
    let train = goal_examples(train)?;
    let held = goal_examples(held)?;
    let config = cfg.goal_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = GoalNetParams::new(config.clone(), &mut rng)?;
    let mut trainer = GoalTrainer::new(params, goal_stats(&train)?)?;
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        losses.push(trainer.train_epoch(&train, epoch, &mut rng)?);
    }
    let model = trainer.into_model();
    model.save(&cfg.goal_stem(), cfg.seed)?;
    let (pe, re) = reconstruction_error(&model, &held)?;
    Ok(json!({
        "command": "train-goal",
        "epochs": config.epochs,
        "examples": train.len(),
        "heldOut": held.len(),
        "epochLoss": losses,
        "heldOutPositionError": pe,
        "heldOutDirectionErrorDeg": re,
        "checkpoint": path_str(&cfg.goal_stem()),
    }))
}

/// A finished (or cut-off) headless run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub session: Session,
    pub clip: MotionClip,
    pub joints: Vec<Vec<crate::kinematics::Vec3>>,
}

/// Steps a session to completion or `max_frames`, recording every state.
pub fn record_run(mut session: Session, max_frames: usize) -> Result<RunRecord> {
    let cfg = *session.policy().state_config();
    let mut states = vec![session.state.clone()];
    let mut roots = vec![session.root];
    let mut joints = vec![session.world_joints()];
    while session.status.is_active() && states.len() <= max_frames {
        let ev = session.step()?;
        states.push(session.state.clone());
        roots.push(session.root);
        joints.push(ev.joints);
    }
    let actions = states
        .iter()
        .map(|s| Action::from_index(crate::state::argmax(s.current_action())).unwrap_or(Action::Idle))
        .collect();
    let object = session.scene.object(&session.object_id).ok().cloned();
    let clip = MotionClip {
        config: cfg,
        fps: cfg.fps,
        kind: session.action,
        style_seed: session.seed,
        object,
        actions,
        roots,
        states,
    };
    Ok(RunRecord { session, clip, joints })
}

fn run_metrics(report: &mut EvalReport, runs: &[RunRecord], scene: &Scene, target: &str) -> Result<()> {
    let pooled: Vec<Vec<f64>> = runs.iter().flat_map(|r| r.clip.states.iter().map(pose_feature)).collect();
    report.insert("apd", apd(&pooled)?);
    let mut exec = Vec::new();
    let (mut pe, mut re, mut executed) = (0.0, 0.0, 0usize);
    for r in runs {
        let hist: Vec<Vec<f64>> = r.clip.states.iter().map(|s| s.current_action().to_vec()).collect();
        let t = execution_time(&hist, r.session.action.index(), r.clip.fps);
        exec.push(t);
        if let Ok((p, a)) = precision(&r.session.root, &r.session.goal, t) {
            pe += p;
            re += a;
            executed += 1;
        }
    }
    let finite: Vec<f64> = exec.iter().copied().filter(|t| t.is_finite()).collect();
    report.insert(
        "executionTime",
        if finite.len() == exec.len() {
            finite.iter().sum::<f64>() / finite.len() as f64
        } else {
            f64::INFINITY
        },
    );
    report.insert("executedFraction", finite.len() as f64 / exec.len() as f64);
    if executed > 0 {
        report.insert("positionError", pe / executed as f64);
        report.insert("rotationErrorDeg", re / executed as f64);
    }
    let frames: Vec<Vec<crate::kinematics::Vec3>> = runs.iter().flat_map(|r| r.joints.iter().cloned()).collect();
    report.insert("penetrationPct", penetration_pct(&frames, scene, Some(target)));
    Ok(())
}

/// One session run headless; writes the clip, the frame stream and a report.
pub fn synth(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let scene = cfg.load_scene()?;
    let session = Session::start(
        scene.clone(),
        &cfg.object,
        cfg.action()?,
        cfg.seed,
        cfg.load_policy()?,
        cfg.load_goal_source()?,
        cfg.session_options(cfg.planner),
    )?;
    let path = session.path().to_json();
    let run = record_run(session, cfg.max_frames)?;
    let dir = cfg.out.join("synth");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_clip(dir.join("run.clip"), &run.clip)?;
    let mut report = EvalReport::new("synth");
    run_metrics(&mut report, std::slice::from_ref(&run), &scene, &cfg.object)?;
    let summary = json!({
        "command": "synth",
        "status": run.session.status,
        "frames": run.session.frame,
        "goal": run.session.goal,
        "path": path,
        "metrics": report.to_json()["metrics"],
        "clip": path_str(&dir.join("run.clip")),
    });
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Same start and goal, `runs` latent streams; with and without planning.
pub fn eval(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let scene = cfg.load_scene()?;
    let policy = cfg.load_policy()?;
    let goals = cfg.load_goal_source()?;
    let action = cfg.action()?;
    let reference: Option<Vec<Vec<f64>>> = load_dataset(cfg).ok().map(|(_, clips)| {
        clips
            .iter()
            .filter(|c| c.kind == action)
            .flat_map(|c| c.states.iter().map(fd_feature))
            .collect()
    });
    let mut reports = Vec::new();
    for (name, planner) in [("samp", true), ("samp-no-planner", false)] {
        let mut runs = Vec::with_capacity(cfg.runs);
        for i in 0..cfg.runs {
            let mut s = Session::start(
                scene.clone(),
                &cfg.object,
                action,
                cfg.seed,
                policy.clone(),
                goals.clone(),
                cfg.session_options(planner),
            )?;
            s.resample_style(cfg.seed.wrapping_add(1 + i as u64), false)?;
            runs.push(record_run(s, cfg.max_frames)?);
        }
        let mut report = EvalReport::new(name);
        run_metrics(&mut report, &runs, &scene, &cfg.object)?;
        if let Some(reference) = reference.as_ref().filter(|r| r.len() >= 2) {
            let generated: Vec<Vec<f64>> = runs.iter().flat_map(|r| r.clip.states.iter().map(fd_feature)).collect();
            report.insert("fd", frechet_distance(&generated, reference)?);
        }
        reports.push(report);
    }
    let dir = cfg.out.join("eval");
    let reports_json: Vec<Value> = reports.iter().map(EvalReport::to_json).collect();
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&reports_json)?)?;
    write_text(&dir.join("report.csv"), &reports_to_csv(&reports))?;
    Ok(json!({
        "command": "eval",
        "runs": cfg.runs,
        "reports": reports_json,
        "csv": path_str(&dir.join("report.csv")),
    }))
}

/// Binds the session service and calls `ready` with the bound address
/// before serving forever.
pub fn serve(cfg: &RunConfig, ready: impl FnOnce(std::net::SocketAddr)) -> Result<()> {
    cfg.validate()?;
    let config = ServiceConfig {
        scene: cfg.load_scene()?,
        policy: cfg.load_policy()?,
        goals: cfg.load_goal_source()?,
        options: cfg.session_options(cfg.planner),
    };
    let server = Server::bind(cfg.bind.as_str(), config)?;
    ready(server.local_addr()?);
    server.serve()
}

/// Reads a clip written by `synth`; used by tests and tooling.
pub fn read_synth_clip(cfg: &RunConfig) -> Result<MotionClip> {
    read_clip(cfg.out.join("synth").join("run.clip"))
}
