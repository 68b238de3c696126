//! Clips, their on-disk format, feature statistics and the synthetic corpus.
//!
//! A clip file is one line of JSON header followed by the flattened states
//! of every frame as little-endian f32, frames contiguous.

pub mod generate;
pub mod objects;

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{RootTransform, Skeleton, Vec2};
use crate::motion_net::TrainingWindow;
use crate::nn::Parameters;
use crate::state::{Action, CharacterState, StateConfig};
use crate::voxel::{ObjectVoxels, Pose, SceneObject, VoxelGrid};

pub use generate::{generate_clip, GenerateOptions, Style};
pub use objects::{base_object, random_object, ObjectFamily};

pub const CLIP_FORMAT: &str = "samp-clip-v1";
pub const MANIFEST_FORMAT: &str = "samp-dataset-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub config: StateConfig,
    pub fps: u32,
    pub kind: Action,
    pub style_seed: u64,
    pub object: Option<SceneObject>,
    /// Dominant action label of every frame.
    pub actions: Vec<Action>,
    /// World root of every frame.
    pub roots: Vec<RootTransform>,
    pub states: Vec<CharacterState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClipHeader {
    format: String,
    config: StateConfig,
    fps: u32,
    kind: Action,
    style_seed: u64,
    object: Option<SceneObject>,
    actions: Vec<Action>,
    roots: Vec<RootTransform>,
    frame_count: usize,
    state_dim: usize,
}

impl MotionClip {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn flat_states(&self) -> Result<Vec<Vec<f64>>> {
        self.states.iter().map(|s| s.flatten(&self.config)).collect()
    }

    /// Voxel input of every frame: the clip object in that frame's root.
    pub fn voxel_inputs(&self) -> Result<Vec<Vec<f64>>> {
        match &self.object {
            Some(obj) => {
                let vox = ObjectVoxels::new(obj)?;
                Ok(self.roots.iter().map(|r| vox.in_root_frame(r).flatten()).collect())
            }
            None => {
                let empty = VoxelGrid::empty().flatten();
                Ok(vec![empty; self.len()])
            }
        }
    }

    /// Normalized windows of `length` frames starting every `stride` frames.
    pub fn training_windows(&self, length: usize, stride: usize, stats: &FeatureStats) -> Result<Vec<TrainingWindow>> {
        let flats = self.flat_states()?;
        let vox = self.voxel_inputs()?;
        let mut out = Vec::new();
        let mut start = 0;
        while start + length <= flats.len() {
            out.push(TrainingWindow {
                states: flats[start..start + length].iter().map(|f| stats.normalize(f)).collect(),
                voxels: vox[start..start + length].to_vec(),
            });
            start += stride.max(1);
        }
        Ok(out)
    }
}

pub fn write_clip(path: impl AsRef<Path>, clip: &MotionClip) -> Result<()> {
    let path = path.as_ref();
    let header = ClipHeader {
        format: CLIP_FORMAT.into(),
        config: clip.config,
        fps: clip.fps,
        kind: clip.kind,
        style_seed: clip.style_seed,
        object: clip.object.clone(),
        actions: clip.actions.clone(),
        roots: clip.roots.clone(),
        frame_count: clip.states.len(),
        state_dim: clip.config.state_dim(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for s in &clip.states {
        for x in s.flatten(&clip.config)? {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_clip(path: impl AsRef<Path>) -> Result<MotionClip> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io(path, e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::CorruptHeader("missing header terminator".into()));
    }
    let header: ClipHeader =
        serde_json::from_slice(&line).map_err(|e| Error::CorruptHeader(e.to_string()))?;
    if header.format != CLIP_FORMAT {
        return Err(Error::CorruptHeader(format!("unknown format `{}`", header.format)));
    }
    header
        .config
        .validate()
        .map_err(|e| Error::CorruptHeader(e.to_string()))?;
    let dim = header.config.state_dim();
    if header.state_dim != dim
        || header.fps != header.config.fps
        || header.actions.len() != header.frame_count
        || header.roots.len() != header.frame_count
    {
        return Err(Error::CorruptHeader("inconsistent header fields".into()));
    }
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(path, e))?;
    let expected = header.frame_count * dim * 4;
    if payload.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: payload.len(),
        });
    }
    let floats: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let states = floats
        .chunks_exact(dim.max(1))
        .take(header.frame_count)
        .map(|v| CharacterState::unflatten(v, &header.config))
        .collect::<Result<Vec<_>>>()?;
    Ok(MotionClip {
        config: header.config,
        fps: header.fps,
        kind: header.kind,
        style_seed: header.style_seed,
        object: header.object,
        actions: header.actions,
        roots: header.roots,
        states,
    })
}

/// Per-feature standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| x * s + m)
            .collect()
    }
}

impl FeatureStats {
    /// Population mean and standard deviation per column; constant columns
    /// get a unit deviation so they pass through unscaled.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((acc, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *acc += (x - m) * (x - m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < CONSTANT_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(FeatureStats { mean, std })
    }
}

impl Parameters for FeatureStats {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        vec![
            ("mean".into(), vec![self.mean.len()], &self.mean[..]),
            ("std".into(), vec![self.std.len()], &self.std[..]),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.mean[..], &mut self.std[..]]
    }
}

/// Features whose population spread is below this are treated as constant.
const CONSTANT_STD: f64 = 1e-9;

/// Population mean and standard deviation over every frame of every clip.
pub fn compute_stats(clips: &[MotionClip]) -> Result<FeatureStats> {
    let first = clips.first().ok_or(Error::EmptyDataset)?;
    let mut rows = Vec::new();
    for clip in clips {
        if clip.config != first.config {
            return Err(Error::Config("clips use different state configurations".into()));
        }
        rows.extend(clip.flat_states()?);
    }
    FeatureStats::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub config: StateConfig,
    pub seed: u64,
    pub clips: Vec<String>,
    pub actions: Vec<String>,
    pub stats: FeatureStats,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!("unknown dataset format `{}`", m.format)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Reads every clip listed, resolving names against `dir`.
    pub fn load_clips(&self, dir: &Path) -> Result<Vec<MotionClip>> {
        self.clips.iter().map(|c| read_clip(dir.join(c))).collect()
    }
}

/// How many clips of each kind a corpus holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPlan {
    pub idle: usize,
    pub walk: usize,
    pub run: usize,
    pub sit: usize,
    pub liedown: usize,
    /// Extra scaled copies of each interaction clip.
    pub augmented: usize,
}

impl CorpusPlan {
    pub fn tiny() -> Self {
        Self {
            idle: 1,
            walk: 3,
            run: 1,
            sit: 3,
            liedown: 1,
            augmented: 1,
        }
    }

    pub fn full() -> Self {
        Self {
            idle: 4,
            walk: 24,
            run: 8,
            sit: 16,
            liedown: 6,
            augmented: 2,
        }
    }
}

/// Generates a corpus: a walk-heavy mix of locomotion plus sit and lie-down
/// approaches to randomly scaled furniture, with augmented copies.
pub fn generate_corpus(
    plan: &CorpusPlan,
    seed: u64,
    cfg: &StateConfig,
    skeleton: &Skeleton,
) -> Result<Vec<MotionClip>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips = Vec::new();
    let start = |rng: &mut ChaCha8Rng| {
        let yaw: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        RootTransform::from_yaw(Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)), yaw)
    };
    for (kind, n) in [(Action::Idle, plan.idle), (Action::Walk, plan.walk), (Action::Run, plan.run)] {
        for _ in 0..n {
            let opts = GenerateOptions {
                start: Some(start(&mut rng)),
                duration: Some(if kind == Action::Idle { 3.0 } else { rng.random_range(3.0..6.0) }),
                ..GenerateOptions::default()
            };
            clips.push(generate_clip(kind, rng.random(), None, &opts, cfg, skeleton)?);
        }
    }
    let sit_families = [ObjectFamily::Chair, ObjectFamily::Sofa, ObjectFamily::LSofa, ObjectFamily::Table];
    for (kind, n) in [(Action::Sit, plan.sit), (Action::LieDown, plan.liedown)] {
        for i in 0..n {
            let family = if kind == Action::Sit {
                sit_families[i % sit_families.len()]
            } else {
                ObjectFamily::Bed
            };
            let mut obj = random_object(family, format!("{}_{i}", family.name()), 0.15, &mut rng);
            obj.pose = Pose {
                position: crate::kinematics::Vec3::new(rng.random_range(-1.0..1.0), 0.0, rng.random_range(-1.0..1.0)),
                yaw: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            };
            let clip = generate_clip(kind, rng.random(), Some(&obj), &GenerateOptions::default(), cfg, skeleton)?;
            for _ in 0..plan.augmented {
                let edit = crate::augment::Edit::random_scale(&mut rng, 0.15);
                clips.push(crate::augment::augment_clip(&clip, &edit, skeleton)?.clip);
            }
            clips.push(clip);
        }
    }
    Ok(clips)
}

/// Writes clips and a manifest into `dir`; returns the manifest path.
pub fn write_dataset(dir: &Path, clips: &[MotionClip], seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let first = clips.first().ok_or(Error::EmptyDataset)?;
    let mut names = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let name = format!("clip_{i:04}_{}.clip", clip.kind.name());
        write_clip(dir.join(&name), clip)?;
        names.push(name);
    }
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        config: first.config,
        seed,
        clips: names,
        actions: Action::ALL.iter().map(|a| a.name().to_string()).collect(),
        stats: compute_stats(clips)?,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Vec3;
    use crate::metrics::apd;
    use crate::state::NUM_CONTACTS;

    fn tiny() -> (StateConfig, Skeleton) {
        (StateConfig::tiny(), Skeleton::tiny())
    }

    fn chair() -> SceneObject {
        let mut c = base_object(ObjectFamily::Chair);
        c.pose = Pose {
            position: Vec3::new(1.0, 0.0, 2.0),
            yaw: 0.7,
        };
        c
    }

    #[test]
    fn idle_clip_has_no_root_motion() {
        let (cfg, sk) = tiny();
        let clip = generate_clip(Action::Idle, 3, None, &GenerateOptions::default(), &cfg, &sk).unwrap();
        assert!(clip.len() > 60);
        for s in &clip.states {
            let c = s.center();
            assert!(s.tp[c].norm() < 1e-6);
        }
        assert!(clip.roots.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn straight_walk_covers_speed_times_duration() {
        let (cfg, sk) = tiny();
        let opts = GenerateOptions {
            speed: Some(1.0),
            duration: Some(5.0),
            turn: Some(0.0),
            ..GenerateOptions::default()
        };
        let clip = generate_clip(Action::Walk, 9, None, &opts, &cfg, &sk).unwrap();
        let first = clip.roots.first().unwrap().position;
        let last = clip.roots.last().unwrap().position;
        assert!(((last - first).norm() - 5.0).abs() < 1e-3);
        // the same path with a curve still travels 5 m of arc
        let curved = GenerateOptions {
            turn: Some(1.0),
            ..opts
        };
        let clip = generate_clip(Action::Walk, 9, None, &curved, &cfg, &sk).unwrap();
        let arc: f64 = clip.roots.windows(2).map(|w| (w[1].position - w[0].position).norm()).sum();
        assert!((arc - 5.0).abs() < 1e-2, "arc {arc}");
    }

    #[test]
    fn generated_frames_satisfy_invariants() {
        let (cfg, sk) = tiny();
        let bed = base_object(ObjectFamily::Bed);
        let cases = [
            (Action::Walk, None),
            (Action::Run, None),
            (Action::Sit, Some(chair())),
            (Action::LieDown, Some(bed)),
        ];
        for (kind, obj) in cases {
            let clip = generate_clip(kind, 5, obj.as_ref(), &GenerateOptions::default(), &cfg, &sk).unwrap();
            for s in &clip.states {
                s.check_invariants().unwrap();
            }
            assert!(clip.actions.contains(&kind), "{kind:?} never dominates");
        }
    }

    #[test]
    fn sitting_reaches_the_seat_with_pelvis_contact() {
        let (cfg, sk) = tiny();
        let obj = chair();
        let clip = generate_clip(Action::Sit, 11, Some(&obj), &GenerateOptions::default(), &cfg, &sk).unwrap();
        let last = clip.states.last().unwrap();
        assert_eq!(last.contacts[0], 1.0);
        let goal = obj.goal_to_world(&obj.goals[0]);
        let root = clip.roots.last().unwrap();
        assert!((root.position - Vec2::new(goal.position.x, goal.position.z)).norm() < 1e-6);
        let pelvis = root.to_world(&last.jp[0]);
        assert!((pelvis.y - goal.position.y - generate::SEAT_CLEARANCE).abs() < 1e-5);
        // the goal fields point at the seat in the root frame
        let gp = last.gp[last.center()];
        assert!((gp - root.to_local(&goal.position)).norm() < 1e-5);
        assert_eq!(clip.actions.last(), Some(&Action::Sit));
        assert!(last.contacts.iter().all(|c| (0.0..=1.0).contains(c)));
        assert_eq!(last.contacts.len(), NUM_CONTACTS);
    }

    #[test]
    fn generation_is_deterministic_and_styles_differ() {
        let (cfg, sk) = tiny();
        let obj = chair();
        let a = generate_clip(Action::Sit, 1, Some(&obj), &GenerateOptions::default(), &cfg, &sk).unwrap();
        let b = generate_clip(Action::Sit, 1, Some(&obj), &GenerateOptions::default(), &cfg, &sk).unwrap();
        assert_eq!(a, b);
        let c = generate_clip(Action::Sit, 2, Some(&obj), &GenerateOptions::default(), &cfg, &sk).unwrap();
        let mut pooled: Vec<Vec<f64>> = a.states.iter().map(crate::metrics::pose_feature).collect();
        pooled.extend(c.states.iter().map(crate::metrics::pose_feature));
        assert!(apd(&pooled).unwrap() > 0.0);
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn missing_goal_is_reported() {
        let (cfg, sk) = tiny();
        let err = generate_clip(Action::Sit, 1, None, &GenerateOptions::default(), &cfg, &sk);
        assert!(matches!(err, Err(Error::NoGoal)));
        let bed = base_object(ObjectFamily::Chair);
        let err = generate_clip(Action::LieDown, 1, Some(&bed), &GenerateOptions::default(), &cfg, &sk);
        assert!(matches!(err, Err(Error::NoGoal)));
    }

    #[test]
    fn clip_file_round_trip_is_exact() {
        let (cfg, sk) = tiny();
        let obj = chair();
        let clip = generate_clip(Action::Sit, 4, Some(&obj), &GenerateOptions::default(), &cfg, &sk).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.clip");
        write_clip(&path, &clip).unwrap();
        assert_eq!(read_clip(&path).unwrap(), clip);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_clip(&path), Err(Error::LengthMismatch { .. })));
        std::fs::write(&path, b"{not json\n").unwrap();
        assert!(matches!(read_clip(&path), Err(Error::CorruptHeader(_))));
    }

    #[test]
    fn header_with_matching_payload_parses() {
        let cfg = StateConfig::tiny();
        let dim = cfg.state_dim();
        let clip = MotionClip {
            config: cfg,
            fps: 30,
            kind: Action::Idle,
            style_seed: 0,
            object: None,
            actions: vec![Action::Idle; 10],
            roots: vec![RootTransform::new(Vec2::zeros(), Vec2::new(0.0, 1.0)); 10],
            states: vec![CharacterState::zeros(&cfg); 10],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.clip");
        write_clip(&path, &clip).unwrap();
        let len = std::fs::metadata(&path).unwrap().len() as usize;
        let header_len = std::fs::read(&path).unwrap().iter().position(|b| *b == b'\n').unwrap() + 1;
        assert_eq!(len - header_len, 10 * dim * 4);
        assert_eq!(read_clip(&path).unwrap().len(), 10);
    }

    #[test]
    fn stats_examples() {
        let cfg = StateConfig::tiny();
        let zero = MotionClip {
            config: cfg,
            fps: 30,
            kind: Action::Idle,
            style_seed: 0,
            object: None,
            actions: vec![Action::Idle; 2],
            roots: vec![RootTransform::new(Vec2::zeros(), Vec2::new(0.0, 1.0)); 2],
            states: vec![CharacterState::zeros(&cfg); 2],
        };
        let s = compute_stats(std::slice::from_ref(&zero)).unwrap();
        assert_eq!(s.len(), cfg.state_dim());
        assert!(s.mean.iter().all(|m| *m == 0.0));
        assert!(s.std.iter().all(|v| *v == 1.0));

        let mut two = zero.clone();
        two.states[1].contacts[0] = 2.0;
        let s = compute_stats(&[two]).unwrap();
        let slot = cfg.layout().contacts.start;
        assert_eq!(s.mean[slot], 1.0);
        assert_eq!(s.std[slot], 1.0);
        assert!(matches!(compute_stats(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn normalization_round_trips() {
        let (cfg, sk) = tiny();
        let clip = generate_clip(Action::Walk, 2, None, &GenerateOptions::default(), &cfg, &sk).unwrap();
        let stats = compute_stats(std::slice::from_ref(&clip)).unwrap();
        assert!(stats.std.iter().all(|s| *s > 0.0));
        for v in clip.flat_states().unwrap() {
            let back = stats.denormalize(&stats.normalize(&v));
            for (a, b) in back.iter().zip(&v) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn tiny_corpus_and_manifest() {
        let (cfg, sk) = tiny();
        let clips = generate_corpus(&CorpusPlan::tiny(), 7, &cfg, &sk).unwrap();
        assert!(clips.len() >= 5);
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(dir.path(), &clips, 7).unwrap();
        let m = DatasetManifest::load(&path).unwrap();
        assert_eq!(m.clips.len(), clips.len());
        assert_eq!(m.actions, vec!["idle", "walk", "run", "sit", "liedown"]);
        assert_eq!(m.load_clips(dir.path()).unwrap(), clips);
        let windows = clips[0].training_windows(10, 5, &m.stats).unwrap();
        assert!(!windows.is_empty());
        assert_eq!(windows[0].states.len(), 10);
        assert_eq!(windows[0].voxels[0].len(), crate::voxel::GRID_FLAT_LEN);
    }
}
