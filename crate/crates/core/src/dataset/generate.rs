//! Procedural motion: a choreography of root placements and pose
//! parameters per frame, turned into world-space frames by forward
//! kinematics and then into states.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MotionClip;
use crate::augment::{detect_contacts, ContactThresholds};
use crate::error::{Error, Result};
use crate::kinematics::{axis_angle, forward_to_yaw, yaw_to_forward, KeyJoint, Mat3, RootTransform, Skeleton, Vec2, Vec3};
use crate::state::{argmax, build_state, window_indices, Action, Goal, StateConfig, WorldFrame, NUM_CONTACTS};
use crate::voxel::SceneObject;

/// Height of the pelvis above a seat or mattress in the settled pose; inside
/// the contact distance.
pub const SEAT_CLEARANCE: f64 = 0.04;
/// Distance in front of a seat goal where the approach ends.
pub const SIT_APPROACH: f64 = 0.45;
const CROSSFADE_SECONDS: f64 = 0.5;
const RAMP_SECONDS: f64 = 0.5;

/// Per-seed motion style: gait amplitudes, speeds, posture.
#[derive(Debug, Clone, PartialEq)]
pub struct Style {
    pub hip_amp: f64,
    pub knee_amp: f64,
    pub arm_amp: f64,
    pub lean: f64,
    pub walk_speed: f64,
    pub run_speed: f64,
    pub walk_stride: f64,
    pub run_stride: f64,
    pub sit_lean: f64,
    pub spread: f64,
    pub arm_rest: f64,
    pub sway: f64,
    pub phase0: f64,
    pub idle_seconds: f64,
    pub hold_seconds: f64,
    pub settle_seconds: f64,
    pub approach_angle: f64,
    pub approach_distance: f64,
    pub turn: f64,
    pub side: f64,
}

impl Style {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a17_e5ee_d000_0001);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..=hi);
        Style {
            hip_amp: u(0.3, 0.55),
            knee_amp: u(0.5, 0.9),
            arm_amp: u(0.15, 0.5),
            lean: u(0.0, 0.12),
            walk_speed: u(1.0, 1.4),
            run_speed: u(2.6, 3.4),
            walk_stride: u(1.2, 1.5),
            run_stride: u(2.0, 2.6),
            sit_lean: u(-0.15, 0.3),
            spread: u(0.0, 0.25),
            arm_rest: u(0.0, 0.35),
            sway: u(0.01, 0.06),
            phase0: u(0.0, TAU),
            idle_seconds: u(0.5, 1.0),
            hold_seconds: u(1.5, 2.5),
            settle_seconds: u(1.0, 1.6),
            approach_angle: u(-1.0, 1.0),
            approach_distance: u(2.0, 3.5),
            turn: u(-FRAC_PI_2, FRAC_PI_2),
            side: if u(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 },
        }
    }
}

/// Free parameters of one generated clip; `None` fields come from the style.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerateOptions {
    pub start: Option<RootTransform>,
    /// Locomotion duration at cruise speed (walk, run) or total length (idle).
    pub duration: Option<f64>,
    pub speed: Option<f64>,
    /// Total heading change of a walk or run path.
    pub turn: Option<f64>,
    /// Which labeled goal of the object to use.
    pub goal_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PoseParams {
    phase: f64,
    gait: f64,
    run: f64,
    sit: f64,
    lie: f64,
    pelvis_y: f64,
    knee_sit: f64,
    t: f64,
}

#[derive(Debug, Clone)]
struct FrameSpec {
    root: RootTransform,
    pose: PoseParams,
    label: Action,
    goal: Goal,
}

/// Joint roles resolved once per skeleton by name.
struct Rig {
    spine: Vec<usize>,
    hips: [Option<usize>; 2],
    knees: [Option<usize>; 2],
    shoulders: [Option<usize>; 2],
    elbows: [Option<usize>; 2],
    standing_pelvis: f64,
    hip_drop: f64,
    shin_drop: f64,
}

impl Rig {
    fn new(sk: &Skeleton) -> Self {
        let find = |n: &str| sk.index_of(n);
        let spine = sk
            .joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.name.starts_with("spine"))
            .map(|(i, _)| i)
            .collect();
        let hip = find("left_hip");
        let knee = find("left_knee");
        let foot = sk.key_joint(KeyJoint::LeftFoot);
        let hip_drop = hip.map_or(0.0, |h| -sk.offset(h).y);
        let shin_drop = knee
            .and_then(|k| sk.chain(k, foot))
            .map_or(0.45, |c| c[1..].iter().map(|&i| -sk.offset(i).y).sum());
        Rig {
            spine,
            hips: [hip, find("right_hip")],
            knees: [knee, find("right_knee")],
            shoulders: [find("left_shoulder"), find("right_shoulder")],
            elbows: [find("left_elbow"), find("right_elbow")],
            standing_pelvis: sk.offset(0).y,
            hip_drop,
            shin_drop,
        }
    }

    /// Knee flexion that puts the feet near the floor with thighs level.
    fn knee_for_seat(&self, pelvis_y: f64) -> f64 {
        let d = pelvis_y - self.hip_drop;
        FRAC_PI_2 + (d / self.shin_drop).clamp(-1.0, 1.0).acos()
    }

    fn local_rotations(&self, n: usize, p: &PoseParams, style: &Style) -> Vec<Mat3> {
        let rx = |a: f64| axis_angle(&Vec3::x(), a);
        let rz = |a: f64| axis_angle(&Vec3::z(), a);
        let ry = |a: f64| axis_angle(&Vec3::y(), a);
        let mut local = vec![Mat3::identity(); n];
        let upright = 1.0 - p.lie;
        let locomote = p.gait * (1.0 - p.sit) * upright;
        let idle_sway = style.sway * (0.9 * p.t).sin();

        local[0] = rx(-FRAC_PI_2 * p.lie) * ry(0.5 * idle_sway);
        if !self.spine.is_empty() {
            let lean = style.lean * locomote + 0.15 * p.run + style.sit_lean * p.sit * upright + idle_sway;
            let per = lean / self.spine.len() as f64;
            for &s in &self.spine {
                local[s] = rx(per);
            }
        }
        for side in 0..2 {
            let sign = if side == 0 { 1.0 } else { -1.0 };
            let phase = p.phase + side as f64 * PI;
            if let Some(h) = self.hips[side] {
                let swing = locomote * style.hip_amp * (1.0 + 0.4 * p.run) * phase.sin();
                let flex = swing + p.sit * FRAC_PI_2;
                local[h] = rx(-flex) * rz(sign * style.spread * p.sit);
            }
            if let Some(k) = self.knees[side] {
                let lift = (phase - 1.0).sin().max(0.0);
                let bend = locomote * style.knee_amp * (1.0 + 0.6 * p.run) * lift * lift;
                local[k] = rx(bend + p.sit * p.knee_sit);
            }
            if let Some(s) = self.shoulders[side] {
                let swing = locomote * style.arm_amp * (1.0 + 0.5 * p.run) * (phase + PI).sin();
                local[s] = rx(-swing) * rz(sign * (0.15 + style.arm_rest) * (1.0 - locomote));
            }
            if let Some(e) = self.elbows[side] {
                local[e] = rx(-(0.15 + 1.0 * p.run + 0.5 * p.sit));
            }
        }
        local
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

fn ground(v: &Vec3) -> Vec2 {
    let g = Vec2::new(v.x, v.z);
    let n = g.norm();
    if n > 1e-9 {
        g / n
    } else {
        Vec2::new(0.0, 1.0)
    }
}

fn rot2(v: &Vec2, angle: f64) -> Vec2 {
    // positive angles turn toward +x, matching yaw about +y
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
}

/// Arc-length parameterized planar curve, stored as a dense polyline.
struct Path {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Path {
    fn straight(a: Vec2, b: Vec2) -> Self {
        Path {
            points: vec![a, b],
            cumulative: vec![0.0, (b - a).norm()],
        }
    }

    /// Cubic Bezier from `start` leaving along `heading`, turning by `turn`,
    /// scaled so its arc length is exactly `length` (up to the polyline).
    fn curve(start: Vec2, heading: Vec2, turn: f64, length: f64) -> Self {
        if turn.abs() < 1e-9 {
            return Self::straight(start, start + heading * length);
        }
        let end_heading = rot2(&heading, turn);
        let chord = rot2(&heading, turn / 2.0);
        let shape = |scale: f64| -> Vec<Vec2> {
            let p0 = Vec2::zeros();
            let p3 = chord * scale;
            let p1 = p0 + heading * (scale / 3.0);
            let p2 = p3 - end_heading * (scale / 3.0);
            (0..=2048)
                .map(|i| {
                    let u = i as f64 / 2048.0;
                    let v = 1.0 - u;
                    p0 * (v * v * v) + p1 * (3.0 * v * v * u) + p2 * (3.0 * v * u * u) + p3 * (u * u * u)
                })
                .collect()
        };
        let unit = shape(1.0);
        let unit_len: f64 = unit.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let points: Vec<Vec2> = shape(length / unit_len).into_iter().map(|p| p + start).collect();
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().expect("nonempty");
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        Path { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().expect("nonempty")
    }

    /// Position and unit tangent at arc length `s`.
    fn at(&self, s: f64) -> (Vec2, Vec2) {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let u = if seg > 0.0 { (s - self.cumulative[i]) / seg } else { 0.0 };
        let d = self.points[i + 1] - self.points[i];
        let n = d.norm();
        let tangent = if n > 0.0 { d / n } else { Vec2::new(0.0, 1.0) };
        (self.points[i] + d * u, tangent)
    }
}

struct Builder<'a> {
    fps: f64,
    style: &'a Style,
    rig: &'a Rig,
    frames: Vec<FrameSpec>,
    phase: f64,
}

impl<'a> Builder<'a> {
    fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    fn frames_for(&self, seconds: f64) -> usize {
        (seconds * self.fps).round().max(1.0) as usize
    }

    fn time(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    fn standing(&self) -> PoseParams {
        PoseParams {
            phase: self.phase,
            pelvis_y: self.rig.standing_pelvis,
            t: self.time(),
            ..PoseParams::default()
        }
    }

    fn push(&mut self, root: RootTransform, pose: PoseParams, label: Action, goal: Goal) {
        self.frames.push(FrameSpec {
            root,
            pose: PoseParams { t: self.time(), ..pose },
            label,
            goal,
        });
    }

    fn idle(&mut self, seconds: f64, root: RootTransform, goal: Goal) {
        for _ in 0..self.frames_for(seconds) {
            let pose = self.standing();
            self.push(root, pose, Action::Idle, goal);
        }
    }

    /// Accelerate, cruise and decelerate along `path`.
    fn locomote(&mut self, path: &Path, speed: f64, run: bool, label: Action, goal: Goal) {
        let length = path.length();
        if length < 1e-9 {
            return;
        }
        let v = speed.min(length / RAMP_SECONDS);
        let cruise = (length - RAMP_SECONDS * v) / v;
        let total = 2.0 * RAMP_SECONDS + cruise;
        let s_of = |t: f64| -> f64 {
            let a = v / RAMP_SECONDS;
            if t <= RAMP_SECONDS {
                0.5 * a * t * t
            } else if t <= RAMP_SECONDS + cruise {
                0.5 * a * RAMP_SECONDS * RAMP_SECONDS + v * (t - RAMP_SECONDS)
            } else {
                let r = (total - t).max(0.0);
                length - 0.5 * a * r * r
            }
        };
        let stride = if run { self.style.run_stride } else { self.style.walk_stride };
        let nominal = if run { self.style.run_speed } else { self.style.walk_speed };
        let steps = (total * self.fps).ceil() as usize;
        let mut prev_s = 0.0;
        for k in 1..=steps {
            let t = (k as f64 * self.dt()).min(total);
            let s = if k == steps { length } else { s_of(t) };
            let (p, tangent) = path.at(s);
            let ds = s - prev_s;
            prev_s = s;
            self.phase += TAU * ds / stride;
            let speed_now = ds * self.fps;
            let gait = (speed_now / nominal.min(self.style.walk_speed)).clamp(0.0, 1.0);
            let pose = PoseParams {
                phase: self.phase,
                gait,
                run: if run { (speed_now / nominal).clamp(0.0, 1.0) } else { 0.0 },
                pelvis_y: self.rig.standing_pelvis - 0.03 * gait,
                ..self.standing()
            };
            self.push(RootTransform::new(p, tangent), pose, label, goal);
        }
    }

    /// Turn in place with small steps.
    fn turn(&mut self, at: Vec2, from: Vec2, to: Vec2, label: Action, goal: Goal) {
        let y0 = forward_to_yaw(&from);
        let delta = wrap_angle(forward_to_yaw(&to) - y0);
        let seconds = 0.4 + 0.8 * delta.abs() / PI;
        let n = self.frames_for(seconds);
        for k in 1..=n {
            let u = smoothstep(k as f64 / n as f64);
            self.phase += TAU * 1.5 * self.dt();
            let pose = PoseParams {
                phase: self.phase,
                gait: 0.3,
                ..self.standing()
            };
            let root = RootTransform::from_yaw(at, y0 + delta * u);
            self.push(root, pose, label, goal);
        }
    }

    /// Blend from standing at `from` into the settled pose at the goal.
    fn settle(&mut self, from: Vec2, goal: Goal, lie: bool) {
        let to = Vec2::new(goal.position.x, goal.position.z);
        let forward = ground(&goal.direction);
        let target_y = goal.position.y + SEAT_CLEARANCE;
        let knee = self.rig.knee_for_seat(target_y);
        let n = self.frames_for(self.style.settle_seconds);
        for k in 1..=n {
            let u = smoothstep(k as f64 / n as f64);
            let pose = PoseParams {
                sit: if lie { 0.0 } else { u },
                lie: if lie { u } else { 0.0 },
                pelvis_y: self.rig.standing_pelvis + (target_y - self.rig.standing_pelvis) * u,
                knee_sit: knee,
                ..self.standing()
            };
            let root = RootTransform::new(from + (to - from) * u, forward);
            self.push(root, pose, goal.action, goal);
        }
        let hold = self.frames_for(self.style.hold_seconds);
        for _ in 0..hold {
            let pose = PoseParams {
                sit: if lie { 0.0 } else { 1.0 },
                lie: if lie { 1.0 } else { 0.0 },
                pelvis_y: target_y,
                knee_sit: knee,
                ..self.standing()
            };
            self.push(RootTransform::new(to, forward), pose, goal.action, goal);
        }
    }
}

/// Moving average of the one-hot label sequence: isolated label changes
/// become linear cross-fades of `CROSSFADE_SECONDS`.
fn crossfade(labels: &[Action], actions: usize, fps: f64) -> Vec<Vec<f64>> {
    let w = (CROSSFADE_SECONDS * fps).round().max(1.0) as i64;
    let n = labels.len() as i64;
    let lo = -(w / 2);
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; actions];
            for k in lo..lo + w {
                let j = (i + k).clamp(0, n - 1) as usize;
                row[labels[j].index().min(actions - 1)] += 1.0 / w as f64;
            }
            row
        })
        .collect()
}

/// Builds a synthetic clip of the given kind. Sit and lie-down clips need an
/// object carrying a labeled goal for that action.
pub fn generate_clip(
    kind: Action,
    style_seed: u64,
    object: Option<&SceneObject>,
    options: &GenerateOptions,
    cfg: &StateConfig,
    skeleton: &Skeleton,
) -> Result<MotionClip> {
    cfg.validate()?;
    if skeleton.len() != cfg.joints {
        return Err(Error::DimMismatch {
            context: "skeleton joints",
            expected: cfg.joints,
            actual: skeleton.len(),
        });
    }
    let style = Style::from_seed(style_seed);
    let rig = Rig::new(skeleton);
    let fps = f64::from(cfg.fps);
    let mut b = Builder {
        fps,
        style: &style,
        rig: &rig,
        frames: Vec::new(),
        phase: style.phase0,
    };
    let history = window_indices(cfg)?
        .iter()
        .map(|o| (-o).max(0) as usize)
        .max()
        .unwrap_or(0)
        .max(1);
    let preroll = history as f64 / fps;
    let start = options
        .start
        .unwrap_or_else(|| RootTransform::new(Vec2::zeros(), Vec2::new(0.0, 1.0)));

    match kind {
        Action::Idle => {
            let goal = Goal::new(start.position3(), Vec3::new(start.forward.x, 0.0, start.forward.y), Action::Idle);
            b.idle(preroll + options.duration.unwrap_or(3.0), start, goal);
        }
        Action::Walk | Action::Run => {
            let run = kind == Action::Run;
            let speed = options
                .speed
                .unwrap_or(if run { style.run_speed } else { style.walk_speed });
            let length = speed * options.duration.unwrap_or(5.0);
            let path = Path::curve(start.position, start.forward, options.turn.unwrap_or(style.turn), length);
            let (end, end_dir) = path.at(path.length());
            let goal = Goal::new(Vec3::new(end.x, 0.0, end.y), Vec3::new(end_dir.x, 0.0, end_dir.y), kind);
            b.idle(preroll + style.idle_seconds, start, goal);
            b.locomote(&path, speed, run, kind, goal);
            let root = RootTransform::new(end, end_dir);
            b.idle(style.idle_seconds, root, goal);
        }
        Action::Sit | Action::LieDown => {
            let obj = object.ok_or(Error::NoGoal)?;
            let candidates: Vec<Goal> = obj
                .goals
                .iter()
                .filter(|g| g.action == kind)
                .map(|g| obj.goal_to_world(g))
                .collect();
            if candidates.is_empty() {
                return Err(Error::NoGoal);
            }
            let goal = match options.goal_index {
                Some(i) => {
                    let g = obj.goals.get(i).ok_or(Error::NoGoal)?;
                    if g.action != kind {
                        return Err(Error::NoGoal);
                    }
                    obj.goal_to_world(g)
                }
                None => candidates[(style_seed % candidates.len() as u64) as usize],
            };
            let facing = ground(&goal.direction);
            let seat = Vec2::new(goal.position.x, goal.position.z);
            let approach = if kind == Action::Sit {
                seat + facing * SIT_APPROACH
            } else {
                let lateral = rot2(&facing, FRAC_PI_2) * style.side;
                let reach = obj
                    .world_bounds()
                    .map(|bb| 0.5 * bb.extent().x.min(bb.extent().z))
                    .unwrap_or(0.5);
                seat + lateral * (reach + 0.35)
            };
            let start = options.start.unwrap_or_else(|| {
                let away = rot2(
                    &if kind == Action::Sit { facing } else { (approach - seat).normalize() },
                    style.approach_angle,
                );
                let p = approach + away * style.approach_distance;
                RootTransform::new(p, approach - p)
            });
            let walk_dir = {
                let d = approach - start.position;
                if d.norm() > 1e-6 {
                    d.normalize()
                } else {
                    start.forward
                }
            };
            let begin = RootTransform::new(start.position, start.forward);
            b.idle(preroll + style.idle_seconds, begin, goal);
            b.turn(start.position, start.forward, walk_dir, Action::Idle, goal);
            let path = Path::straight(start.position, approach);
            b.locomote(&path, style.walk_speed, false, Action::Walk, goal);
            b.turn(approach, walk_dir, facing, Action::Walk, goal);
            b.settle(approach, goal, kind == Action::LieDown);
        }
    }
    assemble(kind, style_seed, object, &b.frames, &style, &rig, cfg, skeleton)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    kind: Action,
    style_seed: u64,
    object: Option<&SceneObject>,
    specs: &[FrameSpec],
    style: &Style,
    rig: &Rig,
    cfg: &StateConfig,
    skeleton: &Skeleton,
) -> Result<MotionClip> {
    let fps = f64::from(cfg.fps);
    let labels: Vec<Action> = specs.iter().map(|f| f.label).collect();
    let ta = crossfade(&labels, cfg.actions, fps);
    let posed: Vec<(Vec<Vec3>, Vec<Mat3>)> = specs
        .iter()
        .map(|f| {
            let local = rig.local_rotations(skeleton.len(), &f.pose, style);
            skeleton.forward_kinematics(&f.root, f.pose.pelvis_y - rig.standing_pelvis, &local)
        })
        .collect();
    let keys: Vec<usize> = KeyJoint::ALL.iter().map(|k| skeleton.key_joint(*k)).collect();
    let n = specs.len();
    let thresholds = ContactThresholds::default();
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, scale) = if i == 0 {
            (0, 1.min(n - 1), fps)
        } else if i + 1 < n {
            (i - 1, i + 1, fps / 2.0)
        } else {
            (i - 1, i, fps)
        };
        let mut contacts = [0.0; NUM_CONTACTS];
        if let Some(obj) = object {
            let pos: [Vec3; NUM_CONTACTS] = std::array::from_fn(|k| posed[i].0[keys[k]]);
            let speed: [f64; NUM_CONTACTS] =
                std::array::from_fn(|k| (posed[b].0[keys[k]] - posed[a].0[keys[k]]).norm() * scale);
            let frame = detect_contacts(&pos, &speed, obj, &thresholds);
            for (c, k) in contacts.iter_mut().zip(&frame.joints) {
                *c = if k.in_contact { 1.0 } else { 0.0 };
            }
        }
        frames.push(WorldFrame {
            root: specs[i].root,
            joints: posed[i].0.clone(),
            rotations: posed[i].1.clone(),
            actions: ta[i].clone(),
            contacts,
            goal: specs[i].goal,
        });
    }
    MotionClip::from_world_frames(kind, style_seed, object.cloned(), &frames, cfg)
}

impl MotionClip {
    /// States for every frame with enough history, rounded to f32 so the
    /// clip survives a file round trip unchanged.
    pub fn from_world_frames(
        kind: Action,
        style_seed: u64,
        object: Option<SceneObject>,
        frames: &[WorldFrame],
        cfg: &StateConfig,
    ) -> Result<MotionClip> {
        let history = window_indices(cfg)?
            .iter()
            .map(|o| (-o).max(0) as usize)
            .max()
            .unwrap_or(0)
            .max(1);
        if frames.len() <= history {
            return Err(Error::InsufficientHistory {
                index: frames.len(),
                needed: history + 1,
            });
        }
        let mut states = Vec::with_capacity(frames.len() - history);
        let mut actions = Vec::with_capacity(states.capacity());
        let mut roots = Vec::with_capacity(states.capacity());
        for i in history..frames.len() {
            let s = build_state(frames, i, cfg)?;
            let flat: Vec<f64> = s
                .flatten(cfg)?
                .into_iter()
                .map(|x| f64::from(x as f32))
                .collect();
            let s = crate::state::CharacterState::unflatten(&flat, cfg)?;
            actions.push(Action::from_index(argmax(s.current_action())).unwrap_or(Action::Idle));
            states.push(s);
            roots.push(frames[i].root);
        }
        Ok(MotionClip {
            config: *cfg,
            fps: cfg.fps,
            kind,
            style_seed,
            object,
            actions,
            roots,
            states,
        })
    }
}

/// Straight-line heading helper used by callers placing starts.
pub fn facing_toward(from: Vec2, to: Vec2) -> RootTransform {
    let d = to - from;
    let yaw = if d.norm() > 1e-9 { forward_to_yaw(&d) } else { 0.0 };
    RootTransform::new(from, yaw_to_forward(yaw))
}
