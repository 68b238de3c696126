//! Per-frame character state, its fixed-width flat encoding and the
//! construction of states from world-space motion.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Mat3, RootTransform, Rotation6D, Vec2, Vec3};

pub const NUM_CONTACTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Idle,
    Walk,
    Run,
    Sit,
    #[serde(alias = "lie_down", alias = "lie down")]
    LieDown,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Idle,
        Action::Walk,
        Action::Run,
        Action::Sit,
        Action::LieDown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Idle => "idle",
            Action::Walk => "walk",
            Action::Run => "run",
            Action::Sit => "sit",
            Action::LieDown => "liedown",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        match s.to_ascii_lowercase().replace(['_', ' ', '-'], "").as_str() {
            "idle" => Some(Action::Idle),
            "walk" => Some(Action::Walk),
            "run" => Some(Action::Run),
            "sit" => Some(Action::Sit),
            "liedown" => Some(Action::LieDown),
            _ => None,
        }
    }

    pub fn one_hot(self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        if self.index() < n {
            v[self.index()] = 1.0;
        }
        v
    }

    pub fn is_interaction(self) -> bool {
        matches!(self, Action::Sit | Action::LieDown)
    }
}

/// A target pose: position, unit facing direction and the action to perform.
/// The coordinate frame depends on context (world, root or object center).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub position: Vec3,
    pub direction: Vec3,
    pub action: Action,
}

impl Goal {
    pub fn new(position: Vec3, direction: Vec3, action: Action) -> Self {
        let n = direction.norm();
        let direction = if n > 1e-12 {
            direction / n
        } else {
            Vec3::z()
        };
        Self {
            position,
            direction,
            action,
        }
    }

    /// Ground-plane frame at the goal, facing the goal direction.
    pub fn ground_frame(&self) -> RootTransform {
        let f = Vec2::new(self.direction.x, self.direction.z);
        RootTransform::new(Vec2::new(self.position.x, self.position.z), f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateConfig {
    pub joints: usize,
    pub traj_samples: usize,
    pub actions: usize,
    pub window_seconds: f64,
    pub fps: u32,
}

impl StateConfig {
    pub fn full() -> Self {
        Self {
            joints: 22,
            traj_samples: 13,
            actions: 5,
            window_seconds: 1.0,
            fps: 30,
        }
    }

    pub fn tiny() -> Self {
        Self {
            joints: 14,
            traj_samples: 3,
            actions: 5,
            window_seconds: 1.0,
            fps: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 {
            return Err(Error::Config("joint count must be >= 1".into()));
        }
        if self.traj_samples == 0 || self.traj_samples.is_multiple_of(2) {
            return Err(Error::Config(
                "trajectory sample count must be odd and >= 1".into(),
            ));
        }
        if self.actions == 0 {
            return Err(Error::Config("action count must be >= 1".into()));
        }
        if self.fps == 0 || !(self.window_seconds >= 0.0) {
            return Err(Error::Config("fps and window must be positive".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self)
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self)
    }
}

pub fn state_dim(cfg: &StateConfig) -> usize {
    15 * cfg.joints + (14 + 2 * cfg.actions) * cfg.traj_samples + NUM_CONTACTS
}

/// Offsets of every field inside a flat state vector, in storage order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    pub jp: Range<usize>,
    pub jr: Range<usize>,
    pub jv: Range<usize>,
    pub jp_future: Range<usize>,
    pub tp: Range<usize>,
    pub td: Range<usize>,
    pub tp_goal: Range<usize>,
    pub td_goal: Range<usize>,
    pub ta: Range<usize>,
    pub gp: Range<usize>,
    pub gd: Range<usize>,
    pub ga: Range<usize>,
    pub contacts: Range<usize>,
}

impl StateLayout {
    fn new(cfg: &StateConfig) -> Self {
        let (j, t, na) = (cfg.joints, cfg.traj_samples, cfg.actions);
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        StateLayout {
            jp: take(3 * j),
            jr: take(6 * j),
            jv: take(3 * j),
            jp_future: take(3 * j),
            tp: take(2 * t),
            td: take(2 * t),
            tp_goal: take(2 * t),
            td_goal: take(2 * t),
            ta: take(na * t),
            gp: take(3 * t),
            gd: take(3 * t),
            ga: take(na * t),
            contacts: take(NUM_CONTACTS),
        }
    }

    pub fn len(&self) -> usize {
        self.contacts.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacterState {
    pub jp: Vec<Vec3>,
    pub jr: Vec<Rotation6D>,
    pub jv: Vec<Vec3>,
    pub jp_future: Vec<Vec3>,
    pub tp: Vec<Vec2>,
    pub td: Vec<Vec2>,
    pub tp_goal: Vec<Vec2>,
    pub td_goal: Vec<Vec2>,
    pub ta: Vec<Vec<f64>>,
    pub gp: Vec<Vec3>,
    pub gd: Vec<Vec3>,
    pub ga: Vec<Vec<f64>>,
    pub contacts: [f64; NUM_CONTACTS],
}

fn push3(out: &mut Vec<f64>, v: &[Vec3]) {
    for p in v {
        out.extend_from_slice(&[p.x, p.y, p.z]);
    }
}

fn push2(out: &mut Vec<f64>, v: &[Vec2]) {
    for p in v {
        out.extend_from_slice(&[p.x, p.y]);
    }
}

fn read3(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn read2(v: &[f64]) -> Vec<Vec2> {
    v.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

impl CharacterState {
    pub fn zeros(cfg: &StateConfig) -> Self {
        let (j, t, na) = (cfg.joints, cfg.traj_samples, cfg.actions);
        CharacterState {
            jp: vec![Vec3::zeros(); j],
            jr: vec![Rotation6D([0.0; 6]); j],
            jv: vec![Vec3::zeros(); j],
            jp_future: vec![Vec3::zeros(); j],
            tp: vec![Vec2::zeros(); t],
            td: vec![Vec2::zeros(); t],
            tp_goal: vec![Vec2::zeros(); t],
            td_goal: vec![Vec2::zeros(); t],
            ta: vec![vec![0.0; na]; t],
            gp: vec![Vec3::zeros(); t],
            gd: vec![Vec3::zeros(); t],
            ga: vec![vec![0.0; na]; t],
            contacts: [0.0; NUM_CONTACTS],
        }
    }

    pub fn conforms(&self, cfg: &StateConfig) -> bool {
        let (j, t, na) = (cfg.joints, cfg.traj_samples, cfg.actions);
        self.jp.len() == j
            && self.jr.len() == j
            && self.jv.len() == j
            && self.jp_future.len() == j
            && self.tp.len() == t
            && self.td.len() == t
            && self.tp_goal.len() == t
            && self.td_goal.len() == t
            && self.ta.len() == t
            && self.ta.iter().all(|r| r.len() == na)
            && self.gp.len() == t
            && self.gd.len() == t
            && self.ga.len() == t
            && self.ga.iter().all(|r| r.len() == na)
    }

    pub fn flatten(&self, cfg: &StateConfig) -> Result<Vec<f64>> {
        if !self.conforms(cfg) {
            return Err(Error::LengthMismatch {
                expected: state_dim(cfg),
                actual: self.raw_len(),
            });
        }
        let mut out = Vec::with_capacity(state_dim(cfg));
        push3(&mut out, &self.jp);
        for r in &self.jr {
            out.extend_from_slice(&r.0);
        }
        push3(&mut out, &self.jv);
        push3(&mut out, &self.jp_future);
        push2(&mut out, &self.tp);
        push2(&mut out, &self.td);
        push2(&mut out, &self.tp_goal);
        push2(&mut out, &self.td_goal);
        for row in &self.ta {
            out.extend_from_slice(row);
        }
        push3(&mut out, &self.gp);
        push3(&mut out, &self.gd);
        for row in &self.ga {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.contacts);
        debug_assert_eq!(out.len(), state_dim(cfg));
        Ok(out)
    }

    fn raw_len(&self) -> usize {
        15 * self.jp.len()
            + 8 * self.tp.len()
            + 6 * self.gp.len()
            + self.ta.iter().map(Vec::len).sum::<usize>()
            + self.ga.iter().map(Vec::len).sum::<usize>()
            + NUM_CONTACTS
    }

    pub fn unflatten(v: &[f64], cfg: &StateConfig) -> Result<Self> {
        let l = cfg.layout();
        if v.len() != l.len() {
            return Err(Error::LengthMismatch {
                expected: l.len(),
                actual: v.len(),
            });
        }
        let na = cfg.actions;
        let rows = |r: Range<usize>| v[r].chunks_exact(na).map(<[f64]>::to_vec).collect();
        let mut contacts = [0.0; NUM_CONTACTS];
        contacts.copy_from_slice(&v[l.contacts.clone()]);
        Ok(CharacterState {
            jp: read3(&v[l.jp]),
            jr: v[l.jr]
                .chunks_exact(6)
                .map(|c| Rotation6D([c[0], c[1], c[2], c[3], c[4], c[5]]))
                .collect(),
            jv: read3(&v[l.jv]),
            jp_future: read3(&v[l.jp_future]),
            tp: read2(&v[l.tp]),
            td: read2(&v[l.td]),
            tp_goal: read2(&v[l.tp_goal]),
            td_goal: read2(&v[l.td_goal]),
            ta: rows(l.ta),
            gp: read3(&v[l.gp]),
            gd: read3(&v[l.gd]),
            ga: rows(l.ga),
            contacts,
        })
    }

    /// Checks the per-frame invariants: unit goal directions, one-hot goal
    /// actions and contacts within [0, 1].
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (k, d) in self.gd.iter().enumerate() {
            if (d.norm() - 1.0).abs() > 1e-4 {
                return Err(format!("gd[{k}] has norm {}", d.norm()));
            }
        }
        for (k, row) in self.ga.iter().enumerate() {
            let ones = row.iter().filter(|&&x| x == 1.0).count();
            let sum: f64 = row.iter().sum();
            if ones != 1 || (sum - 1.0).abs() > 1e-9 {
                return Err(format!("ga[{k}] is not one-hot: {row:?}"));
            }
        }
        if self.contacts.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(format!("contacts out of range: {:?}", self.contacts));
        }
        Ok(())
    }

    /// Projects a raw network prediction back onto the valid state set:
    /// unit directions, one-hot goal actions and clamped contacts.
    pub fn sanitize(&mut self) {
        for d in self.td.iter_mut().chain(self.td_goal.iter_mut()) {
            let n = d.norm();
            *d = if n > 1e-8 { *d / n } else { Vec2::new(0.0, 1.0) };
        }
        for d in &mut self.gd {
            let n = d.norm();
            *d = if n > 1e-8 { *d / n } else { Vec3::z() };
        }
        for row in &mut self.ga {
            let best = argmax(row);
            row.iter_mut().enumerate().for_each(|(i, x)| {
                *x = if i == best { 1.0 } else { 0.0 };
            });
        }
        for c in &mut self.contacts {
            *c = c.clamp(0.0, 1.0);
        }
    }

    /// Index of the window sample at offset zero.
    pub fn center(&self) -> usize {
        self.tp.len() / 2
    }

    /// Root of this frame relative to the root of the previous frame.
    pub fn root_delta(&self) -> (Vec2, Vec2) {
        let c = self.center();
        let f = self.td[c];
        let n = f.norm();
        (
            self.tp[c],
            if n > 1e-8 { f / n } else { Vec2::new(0.0, 1.0) },
        )
    }

    pub fn current_action(&self) -> &[f64] {
        &self.ta[self.center()]
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Frame offsets of the trajectory samples, uniformly spaced across
/// `[-window, +window]` seconds.
pub fn window_indices(cfg: &StateConfig) -> Result<Vec<i64>> {
    let half = cfg.window_seconds * f64::from(cfg.fps);
    if (half - half.round()).abs() > 1e-9 {
        return Err(Error::NonIntegerStride {
            span: (2.0 * half).round() as usize,
            intervals: cfg.traj_samples.saturating_sub(1),
        });
    }
    let half = half.round() as i64;
    if cfg.traj_samples <= 1 {
        return Ok(vec![0]);
    }
    let span = 2 * half;
    let intervals = (cfg.traj_samples - 1) as i64;
    if span % intervals != 0 {
        return Err(Error::NonIntegerStride {
            span: span as usize,
            intervals: intervals as usize,
        });
    }
    let stride = span / intervals;
    Ok((0..cfg.traj_samples as i64)
        .map(|k| -half + k * stride)
        .collect())
}

/// One frame of world-space motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFrame {
    pub root: RootTransform,
    pub joints: Vec<Vec3>,
    pub rotations: Vec<Mat3>,
    /// Continuous action label (length = action count).
    pub actions: Vec<f64>,
    pub contacts: [f64; NUM_CONTACTS],
    /// Active goal in world coordinates.
    pub goal: Goal,
}

fn clamp_index(i: usize, off: i64, n: usize) -> usize {
    (i as i64 + off).clamp(0, n as i64 - 1) as usize
}

/// Assembles the state of frame `index` from world-space frames. The past
/// half of the window must lie inside the clip; the future half repeats the
/// last frame past the end.
pub fn build_state(frames: &[WorldFrame], index: usize, cfg: &StateConfig) -> Result<CharacterState> {
    let offsets = window_indices(cfg)?;
    let needed = offsets
        .iter()
        .map(|o| (-o).max(0) as usize)
        .max()
        .unwrap_or(0)
        .max(1);
    if index < needed || index >= frames.len() {
        return Err(Error::InsufficientHistory { index, needed });
    }
    let n = frames.len();
    let cur = &frames[index];
    if cur.joints.len() != cfg.joints || cur.rotations.len() != cfg.joints {
        return Err(Error::DimMismatch {
            context: "world frame joints",
            expected: cfg.joints,
            actual: cur.joints.len(),
        });
    }
    let root = cur.root;
    let prev = &frames[index - 1];
    let goal_frame = prev.goal.ground_frame();
    let fps = f64::from(cfg.fps);

    let jp = cur.joints.iter().map(|p| root.to_local(p)).collect();
    let root_rot_t = root.rotation().transpose();
    let jr = cur
        .rotations
        .iter()
        .map(|r| Rotation6D::from_matrix_unchecked(&(root_rot_t * r)))
        .collect();

    let (a, b, scale) = if index + 1 < n {
        (index - 1, index + 1, fps / 2.0)
    } else {
        (index - 1, index, fps)
    };
    let jv = (0..cfg.joints)
        .map(|k| root.dir_to_local(&((frames[b].joints[k] - frames[a].joints[k]) * scale)))
        .collect();

    let future_root = frames[clamp_index(index, i64::from(cfg.fps), n)].root;
    let jp_future = cur.joints.iter().map(|p| future_root.to_local(p)).collect();

    let mut s = CharacterState {
        jp,
        jr,
        jv,
        jp_future,
        tp: Vec::with_capacity(offsets.len()),
        td: Vec::with_capacity(offsets.len()),
        tp_goal: Vec::with_capacity(offsets.len()),
        td_goal: Vec::with_capacity(offsets.len()),
        ta: Vec::with_capacity(offsets.len()),
        gp: Vec::with_capacity(offsets.len()),
        gd: Vec::with_capacity(offsets.len()),
        ga: Vec::with_capacity(offsets.len()),
        contacts: cur.contacts,
    };
    for &off in &offsets {
        let f = &frames[clamp_index(index, off, n)];
        let (p, d) = prev.root.delta_to(&f.root);
        s.tp.push(p);
        s.td.push(d);
        let (p, d) = goal_frame.delta_to(&f.root);
        s.tp_goal.push(p);
        s.td_goal.push(d);
        s.ta.push(f.actions.clone());
        s.gp.push(root.to_local(&f.goal.position));
        s.gd.push(root.dir_to_local(&f.goal.direction));
        s.ga.push(f.goal.action.one_hot(cfg.actions));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Field sizes summed one by one, independent of the closed form.
    fn field_sum(j: usize, t: usize, na: usize) -> usize {
        let fields = [
            3 * j,
            6 * j,
            3 * j,
            3 * j,
            2 * t,
            2 * t,
            2 * t,
            2 * t,
            na * t,
            3 * t,
            3 * t,
            na * t,
            5,
        ];
        fields.iter().sum()
    }

    fn cfg(j: usize, t: usize, na: usize) -> StateConfig {
        StateConfig {
            joints: j,
            traj_samples: t,
            actions: na,
            window_seconds: 1.0,
            fps: 30,
        }
    }

    #[test]
    fn state_dim_examples() {
        assert_eq!(state_dim(&cfg(22, 13, 5)), 647);
        assert_eq!(state_dim(&cfg(1, 1, 1)), 36);
        assert_eq!(state_dim(&cfg(2, 3, 2)), 89);
    }

    #[test]
    fn state_dim_matches_field_sum_exhaustively() {
        for j in 1..=32 {
            for t in (1..=15).step_by(2) {
                for na in 1..=8 {
                    let c = cfg(j, t, na);
                    assert_eq!(state_dim(&c), field_sum(j, t, na));
                    assert_eq!(c.layout().len(), state_dim(&c));
                }
            }
        }
    }

    #[test]
    fn zero_state_flattens_to_zeros() {
        let c = cfg(3, 3, 5);
        let v = CharacterState::zeros(&c).flatten(&c).unwrap();
        assert_eq!(v.len(), state_dim(&c));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn first_contact_slot_is_pelvis() {
        let c = cfg(4, 5, 3);
        let mut v = vec![0.0; state_dim(&c)];
        let idx = 15 * 4 + (14 + 2 * 3) * 5;
        v[idx] = 1.0;
        let s = CharacterState::unflatten(&v, &c).unwrap();
        assert_eq!(s.contacts[0], 1.0);
        assert_eq!(c.layout().contacts.start, idx);
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let c = cfg(2, 3, 2);
        assert!(matches!(
            CharacterState::unflatten(&[0.0; 10], &c),
            Err(Error::LengthMismatch { expected: 89, actual: 10 })
        ));
        let mut bad = CharacterState::zeros(&c);
        bad.jp.pop();
        assert!(matches!(bad.flatten(&c), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn window_examples() {
        let w = window_indices(&cfg(1, 13, 1)).unwrap();
        let expected: Vec<i64> = (-6..=6).map(|k| 5 * k).collect();
        assert_eq!(w, expected);
        assert_eq!(window_indices(&cfg(1, 3, 1)).unwrap(), vec![-30, 0, 30]);
        let mut c = cfg(1, 4, 1);
        c.fps = 10;
        assert!(matches!(
            window_indices(&c),
            Err(Error::NonIntegerStride { span: 20, intervals: 3 })
        ));
    }

    #[test]
    fn window_is_symmetric_and_increasing() {
        for t in (1..=15).step_by(2) {
            let Ok(w) = window_indices(&cfg(1, t, 1)) else { continue };
            assert!(w.windows(2).all(|p| p[0] < p[1]));
            let rev: Vec<i64> = w.iter().rev().map(|x| -x).collect();
            assert_eq!(w, rev);
        }
    }

    fn line_clip(c: &StateConfig, speed: f64, frames: usize) -> Vec<WorldFrame> {
        let fps = f64::from(c.fps);
        (0..frames)
            .map(|f| {
                let root = RootTransform::new(Vec2::new(0.0, speed * f as f64 / fps), Vec2::new(0.0, 1.0));
                WorldFrame {
                    root,
                    joints: (0..c.joints).map(|k| root.to_world(&Vec3::new(0.1 * k as f64, 1.0, 0.0))).collect(),
                    rotations: vec![Mat3::identity(); c.joints],
                    actions: Action::Walk.one_hot(c.actions),
                    contacts: [0.0; 5],
                    goal: Goal::new(Vec3::new(0.0, 0.0, 0.0), Vec3::z(), Action::Walk),
                }
            })
            .collect()
    }

    #[test]
    fn stationary_clip_with_goal_at_root() {
        let c = cfg(2, 3, 5);
        let frames = line_clip(&c, 0.0, 80);
        let s = build_state(&frames, 40, &c).unwrap();
        assert!(s.tp.iter().all(|p| p.norm() < 1e-12));
        assert!(s.td_goal.iter().all(|d| (d - Vec2::new(0.0, 1.0)).norm() < 1e-12));
        assert!(s.jv.iter().all(|v| v.norm() < 1e-12));
        s.check_invariants().unwrap();
    }

    #[test]
    fn constant_velocity_trajectory_spacing() {
        let c = cfg(2, 13, 5);
        let frames = line_clip(&c, 1.0, 120);
        let s = build_state(&frames, 50, &c).unwrap();
        let stride_m = 5.0 / 30.0;
        for w in s.tp.windows(2) {
            assert!((w[1].y - w[0].y - stride_m).abs() < 1e-12);
            assert!(w[1].x.abs() < 1e-12);
        }
        // relative to the previous root, the centre sample is one frame ahead
        assert!((s.tp[6].y - 1.0 / 30.0).abs() < 1e-12);
        // velocities in the root frame
        assert!((s.jv[0].z - 1.0).abs() < 1e-9);
    }

    #[test]
    fn insufficient_history() {
        let c = cfg(2, 3, 5);
        let frames = line_clip(&c, 1.0, 60);
        assert!(matches!(
            build_state(&frames, 0, &c),
            Err(Error::InsufficientHistory { index: 0, needed: 30 })
        ));
        assert!(build_state(&frames, 29, &c).is_err());
        assert!(build_state(&frames, 30, &c).is_ok());
        // the future half is clamped at the end
        assert!(build_state(&frames, 59, &c).is_ok());
    }

    #[test]
    fn random_state_round_trips_bit_exactly() {
        let c = cfg(5, 7, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..state_dim(&c)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = CharacterState::unflatten(&v, &c).unwrap();
        let back = s.flatten(&c).unwrap();
        assert_eq!(v, back);
        assert_eq!(CharacterState::unflatten(&back, &c).unwrap(), s);
    }

    proptest! {
        #[test]
        fn flatten_round_trip(j in 1usize..6, th in 0usize..4, na in 1usize..6, seed in any::<u64>()) {
            let c = cfg(j, 2 * th + 1, na);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..state_dim(&c)).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let s = CharacterState::unflatten(&v, &c).unwrap();
            prop_assert_eq!(s.flatten(&c).unwrap(), v);
        }
    }
}
