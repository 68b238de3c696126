//! The live control loop: pick a goal on the target object, plan an
//! approach, then drive a motion policy frame by frame through the
//! sub-goals until the requested action is executed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::generate::{generate_clip, GenerateOptions};
use crate::error::{Error, Result};
use crate::goal_net::GoalModel;
use crate::kinematics::{forward_to_yaw, RootTransform, Skeleton, Vec2, Vec3};
use crate::metrics::{execution_time, EXECUTION_CAP_SECONDS};
use crate::motion_net::MotionModel;
use crate::planner::{self, NavPath, SubgoalTracker};
use crate::state::{Action, CharacterState, Goal, StateConfig};
use crate::voxel::{ObjectVoxels, Scene, SceneObject, VoxelGrid};

/// Distance to the final waypoint at which the action label starts blending.
pub const TRANSITION_DISTANCE: f64 = 1.5;
pub const TRANSITION_SECONDS: f64 = 1.0;

/// Anything that can produce the next character state.
pub trait MotionPolicy: Send + Sync {
    fn state_config(&self) -> &StateConfig;
    fn next_state(&self, input: &CharacterState, voxels: &VoxelGrid, rng: &mut ChaCha8Rng) -> Result<CharacterState>;
}

impl MotionPolicy for MotionModel {
    fn state_config(&self) -> &StateConfig {
        MotionModel::state_config(self)
    }

    fn next_state(&self, input: &CharacterState, voxels: &VoxelGrid, rng: &mut ChaCha8Rng) -> Result<CharacterState> {
        self.predict_next(input, voxels, rng)
    }
}

/// The trained model with its latent pinned to zero: the deterministic
/// ablation used to show that sampling `Z` is what creates variety.
#[derive(Debug, Clone)]
pub struct ZeroLatent(pub Arc<MotionModel>);

impl MotionPolicy for ZeroLatent {
    fn state_config(&self) -> &StateConfig {
        self.0.state_config()
    }

    fn next_state(&self, input: &CharacterState, voxels: &VoxelGrid, _rng: &mut ChaCha8Rng) -> Result<CharacterState> {
        let z = vec![0.0; self.0.config().latent];
        self.0.predict_with_latent(input, voxels, &z)
    }
}

/// A hand-written policy that walks the root straight at the active
/// sub-goal and keeps the body pose fixed. It makes planner behavior
/// observable without a trained network.
#[derive(Debug, Clone)]
pub struct ScriptedWalker {
    pub config: StateConfig,
    /// m/s
    pub speed: f64,
    /// rad/s
    pub turn_rate: f64,
    /// Positional noise per frame (m), drawn from the session RNG.
    pub jitter: f64,
}

impl ScriptedWalker {
    pub fn new(config: StateConfig) -> Self {
        Self {
            config,
            speed: 1.2,
            turn_rate: 4.0,
            jitter: 0.0,
        }
    }
}

fn rotate_toward(from: Vec2, to: Vec2, max_angle: f64) -> Vec2 {
    let a = from.y.atan2(from.x);
    let b = to.y.atan2(to.x);
    let mut d = b - a;
    while d > std::f64::consts::PI {
        d -= std::f64::consts::TAU;
    }
    while d < -std::f64::consts::PI {
        d += std::f64::consts::TAU;
    }
    let a = a + d.clamp(-max_angle, max_angle);
    Vec2::new(a.cos(), a.sin())
}

impl MotionPolicy for ScriptedWalker {
    fn state_config(&self) -> &StateConfig {
        &self.config
    }

    fn next_state(&self, input: &CharacterState, _voxels: &VoxelGrid, rng: &mut ChaCha8Rng) -> Result<CharacterState> {
        let fps = f64::from(self.config.fps);
        let c = input.center();
        let goal = Vec2::new(input.gp[c].x, input.gp[c].z);
        let goal_dir = Vec2::new(input.gd[c].x, input.gd[c].z);
        let goal_action = crate::state::argmax(&input.ga[c]);
        let dist = goal.norm();
        let step_len = (self.speed / fps).min(dist);
        let mut step = if dist > 1e-9 { goal / dist * step_len } else { Vec2::zeros() };
        if self.jitter > 0.0 {
            step += Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * self.jitter;
        }
        let arrived = dist < 0.05;
        let want = if arrived || dist < 1e-9 { goal_dir } else { goal };
        let forward = rotate_toward(Vec2::new(0.0, 1.0), want, self.turn_rate / fps);
        let label = if arrived {
            goal_action
        } else {
            Action::Walk.index().min(self.config.actions - 1)
        };
        let mut one_hot = vec![0.0; self.config.actions];
        one_hot[label] = 1.0;

        let mut s = input.clone();
        for (k, (tp, td)) in s.tp.iter_mut().zip(s.td.iter_mut()).enumerate() {
            let off = k as f64 - c as f64 + 1.0;
            *tp = step * off;
            *td = forward;
        }
        for a in &mut s.ta {
            a.clone_from(&one_hot);
        }
        Ok(s)
    }
}

/// Where interaction goals come from.
#[derive(Debug, Clone)]
pub enum GoalSource {
    /// Sample from a trained goal network.
    Net(Arc<GoalModel>),
    /// Pick one of the object's labeled goals at random.
    Labeled,
}

impl GoalSource {
    fn sample(&self, obj: &SceneObject, action: Action, rng: &mut ChaCha8Rng) -> Result<Goal> {
        match self {
            GoalSource::Net(model) => model
                .sample_world_goals(obj, action, 1, rng)?
                .pop()
                .ok_or(Error::NoGoal),
            GoalSource::Labeled => {
                let goals = crate::dataset::objects::goals_for(obj, action);
                if goals.is_empty() {
                    return Err(Error::NoGoal);
                }
                Ok(obj.goal_to_world(&goals[rng.random_range(0..goals.len())].1))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionOptions {
    /// Where the character starts.
    pub start: RootTransform,
    /// Plan around obstacles; `false` heads straight for the goal.
    pub use_planner: bool,
    pub cell_size: f64,
    pub inflation: f64,
    /// Hard stop (frames); defaults to the three-minute execution cap.
    pub max_frames: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            start: RootTransform::default(),
            use_planner: true,
            cell_size: planner::DEFAULT_CELL_SIZE,
            inflation: planner::DEFAULT_INFLATION,
            max_frames: (EXECUTION_CAP_SECONDS * 30.0) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Navigating,
    Transitioning,
    Executing,
    Done,
    Failed,
}

impl SessionStatus {
    pub fn is_active(self) -> bool {
        !matches!(self, SessionStatus::Done | SessionStatus::Failed)
    }
}

/// One streamed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEvent {
    pub frame: usize,
    /// World joint positions.
    pub joints: Vec<Vec3>,
    pub root: RootTransform,
    pub contacts: [f64; 5],
    /// Action distribution of the current frame, in `Action` index order.
    pub actions: Vec<f64>,
    pub subgoal: Goal,
    pub status: SessionStatus,
}

#[derive(Clone)]
pub struct Session {
    pub scene: Scene,
    pub object_id: String,
    pub action: Action,
    pub seed: u64,
    pub goal: Goal,
    pub tracker: SubgoalTracker,
    pub state: CharacterState,
    pub root: RootTransform,
    prev_root: RootTransform,
    pub frame: usize,
    pub status: SessionStatus,
    /// Frames spent blending toward the target action.
    ramp_frames: usize,
    /// Predicted action distribution of every frame so far.
    pub action_history: Vec<Vec<f64>>,
    policy: Arc<dyn MotionPolicy>,
    goals: GoalSource,
    voxels: ObjectVoxels,
    options: SessionOptions,
    rng: ChaCha8Rng,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("object_id", &self.object_id)
            .field("action", &self.action)
            .field("seed", &self.seed)
            .field("frame", &self.frame)
            .field("status", &self.status)
            .finish_non_exhaustive()
    }
}

/// The canonical start: the last frame of a generated idle clip.
pub fn idle_start_state(cfg: &StateConfig, start: RootTransform) -> Result<CharacterState> {
    let skeleton = Skeleton::for_joint_count(cfg.joints)?;
    let options = GenerateOptions {
        start: Some(start),
        duration: Some(0.2),
        ..Default::default()
    };
    let clip = generate_clip(Action::Idle, 0, None, &options, cfg, &skeleton)?;
    clip.states.last().cloned().ok_or(Error::EmptyDataset)
}

impl Session {
    pub fn start(
        scene: Scene,
        object_id: &str,
        action: Action,
        seed: u64,
        policy: Arc<dyn MotionPolicy>,
        goals: GoalSource,
        options: SessionOptions,
    ) -> Result<Session> {
        if !action.is_interaction() {
            return Err(Error::UnsupportedAction(action.name().to_string()));
        }
        let obj = scene.object(object_id)?.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal = goals.sample(&obj, action, &mut rng)?;
        let path = plan_path(&scene, &options, &options.start.position, &goal)?;
        let state = idle_start_state(policy.state_config(), options.start)?;
        let tracker = SubgoalTracker::new(path, goal);
        let mut s = Session {
            voxels: ObjectVoxels::new(&obj)?,
            scene,
            object_id: object_id.to_string(),
            action,
            seed,
            goal,
            tracker,
            state,
            root: options.start,
            prev_root: options.start,
            frame: 0,
            status: SessionStatus::Navigating,
            ramp_frames: 0,
            action_history: Vec::new(),
            policy,
            goals,
            options,
            rng,
        };
        let (p, d) = s.state.root_delta();
        s.prev_root = previous_root(&s.root, &p, &d);
        if s.tracker.distance_to_final(&s.root) < TRANSITION_DISTANCE && s.tracker.on_final_leg() {
            s.status = SessionStatus::Transitioning;
        }
        Ok(s)
    }

    pub fn path(&self) -> &NavPath {
        &self.tracker.path
    }

    pub fn policy(&self) -> &Arc<dyn MotionPolicy> {
        &self.policy
    }

    /// Swaps the latent random stream; optionally draws a new goal and
    /// replans from the current position.
    pub fn resample_style(&mut self, seed: u64, resample_goal: bool) -> Result<()> {
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        if resample_goal && self.status.is_active() {
            let obj = self.scene.object(&self.object_id)?.clone();
            let goal = self.goals.sample(&obj, self.action, &mut self.rng)?;
            let path = plan_path(&self.scene, &self.options, &self.root.position, &goal)?;
            self.goal = goal;
            self.tracker = SubgoalTracker::new(path, goal);
            self.status = SessionStatus::Navigating;
            self.ramp_frames = 0;
        }
        Ok(())
    }

    fn target_label(&self) -> Vec<f64> {
        let n = self.policy.state_config().actions;
        let walk = Action::Walk.one_hot(n);
        let target = self.action.one_hot(n);
        let alpha = match self.status {
            SessionStatus::Navigating => 0.0,
            _ => {
                let fps = f64::from(self.policy.state_config().fps);
                (self.ramp_frames as f64 / (TRANSITION_SECONDS * fps)).min(1.0)
            }
        };
        walk.iter().zip(&target).map(|(w, t)| (1.0 - alpha) * w + alpha * t).collect()
    }

    /// Writes the control fields of the network input: goal samples, the
    /// trajectory relative to the active sub-goal, and the action label.
    fn control_input(&self, subgoal: &Goal, subgoal_action: Action) -> CharacterState {
        let cfg = self.policy.state_config();
        let mut input = self.state.clone();
        let gp = self.root.to_local(&subgoal.position);
        let gd = self.root.dir_to_local(&subgoal.direction);
        let ga = subgoal_action.one_hot(cfg.actions);
        let goal_frame = subgoal.ground_frame();
        let label = self.target_label();
        let c = input.center();
        for k in 0..input.tp.len() {
            input.gp[k] = gp;
            input.gd[k] = gd;
            input.ga[k].clone_from(&ga);
            let sample = self.prev_root.compose(&input.tp[k], &input.td[k]);
            let (p, d) = goal_frame.delta_to(&sample);
            input.tp_goal[k] = p;
            input.td_goal[k] = d;
            if k >= c {
                input.ta[k].clone_from(&label);
            }
        }
        input
    }

    /// Advances one frame.
    pub fn step(&mut self) -> Result<FrameEvent> {
        if !self.status.is_active() {
            return Err(Error::Config(format!("session is {:?}", self.status)));
        }
        let (subgoal, subgoal_action) = self.tracker.next_subgoal(&self.root);
        let input = self.control_input(&subgoal, subgoal_action);
        let grid = self.voxels.in_root_frame(&self.root);
        let next = match self.policy.next_state(&input, &grid, &mut self.rng) {
            Ok(s) => s,
            Err(e) => {
                self.status = SessionStatus::Failed;
                return Err(e);
            }
        };
        let (p, d) = next.root_delta();
        let new_root = self.root.compose(&p, &d);
        if !(new_root.position.iter().all(|v| v.is_finite())) {
            self.status = SessionStatus::Failed;
            return Err(Error::NonFiniteOutput);
        }
        self.prev_root = self.root;
        self.root = new_root;
        self.state = next;
        self.frame += 1;
        self.action_history.push(self.state.current_action().to_vec());
        self.advance_status();
        Ok(self.frame_event(subgoal))
    }

    fn advance_status(&mut self) {
        let fps = self.policy.state_config().fps;
        if self.status == SessionStatus::Navigating
            && self.tracker.on_final_leg()
            && self.tracker.distance_to_final(&self.root) < TRANSITION_DISTANCE
        {
            self.status = SessionStatus::Transitioning;
        }
        if matches!(self.status, SessionStatus::Transitioning | SessionStatus::Executing) {
            self.ramp_frames += 1;
            if self.ramp_frames as f64 >= TRANSITION_SECONDS * f64::from(fps) {
                self.status = SessionStatus::Executing;
            }
        }
        if self.status == SessionStatus::Executing
            && execution_time(&self.action_history, self.action.index(), fps).is_finite()
        {
            self.status = SessionStatus::Done;
        }
        if self.status.is_active() && self.frame >= self.options.max_frames {
            self.status = SessionStatus::Failed;
        }
    }

    pub fn world_joints(&self) -> Vec<Vec3> {
        self.state.jp.iter().map(|p| self.root.to_world(p)).collect()
    }

    fn frame_event(&self, subgoal: Goal) -> FrameEvent {
        FrameEvent {
            frame: self.frame,
            joints: self.world_joints(),
            root: self.root,
            contacts: self.state.contacts,
            actions: self.state.current_action().to_vec(),
            subgoal,
            status: self.status,
        }
    }

    /// Steps until the session finishes or `limit` frames have been produced.
    pub fn run(&mut self, limit: usize) -> Result<Vec<FrameEvent>> {
        let mut out = Vec::new();
        while self.status.is_active() && out.len() < limit {
            out.push(self.step()?);
        }
        Ok(out)
    }

    /// Seconds until execution, or infinity.
    pub fn execution_time(&self) -> f64 {
        execution_time(&self.action_history, self.action.index(), self.policy.state_config().fps)
    }
}

fn plan_path(scene: &Scene, options: &SessionOptions, start: &Vec2, goal: &Goal) -> Result<NavPath> {
    let target = Vec2::new(goal.position.x, goal.position.z);
    if !options.use_planner {
        return Ok(planner::direct_path(start, &target));
    }
    let grid = planner::build_nav_grid(scene, options.cell_size, options.inflation)?;
    let (sc, sr) = grid.cell_of(start);
    if grid.is_blocked(sc, sr) {
        return Err(Error::BlockedStart);
    }
    planner::plan(&grid, start, &target)
}

/// The root one frame earlier, given this frame's delta relative to it.
fn previous_root(root: &RootTransform, p: &Vec2, d: &Vec2) -> RootTransform {
    let prev = RootTransform::from_yaw(Vec2::zeros(), root.yaw() - forward_to_yaw(d));
    RootTransform::new(root.position - prev.dir2_to_world(p), prev.forward)
}

/// A small room split by a wall with a gap on one side, and a sofa behind
/// the wall facing the start. Walking straight at the sofa hits the wall.
pub fn blocked_corridor_scene() -> Scene {
    use crate::dataset::objects::{base_object, ObjectFamily};
    use crate::voxel::{FloorRect, OrientedBox, Pose};
    let mut sofa = base_object(ObjectFamily::Sofa);
    sofa.id = "sofa".into();
    sofa.pose = Pose {
        position: Vec3::new(3.0, 0.0, 7.0),
        yaw: std::f64::consts::PI,
    };
    let wall = SceneObject {
        id: "wall".into(),
        category: "wall".into(),
        pose: Pose {
            position: Vec3::new(2.2, 0.0, 3.5),
            yaw: 0.0,
        },
        boxes: vec![OrientedBox::new(Vec3::new(0.0, 1.0, 0.0), Vec3::new(2.2, 1.0, 0.1))],
        goals: vec![],
    };
    Scene {
        floor: FloorRect {
            min: Vec2::zeros(),
            max: Vec2::new(6.0, 8.0),
        },
        objects: vec![wall, sofa],
    }
}

/// Start pose used with [`blocked_corridor_scene`].
pub fn corridor_start() -> RootTransform {
    RootTransform::new(Vec2::new(3.0, 0.5), Vec2::new(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::penetration_pct;

    fn walker_session(use_planner: bool, seed: u64) -> Session {
        let options = SessionOptions {
            start: corridor_start(),
            use_planner,
            inflation: 0.5,
            ..Default::default()
        };
        Session::start(
            blocked_corridor_scene(),
            "sofa",
            Action::Sit,
            seed,
            Arc::new(ScriptedWalker::new(StateConfig::tiny())),
            GoalSource::Labeled,
            options,
        )
        .unwrap()
    }

    #[test]
    fn planned_walk_avoids_the_wall_and_straight_walk_does_not() {
        let scene = blocked_corridor_scene();
        let mut planned = walker_session(true, 1);
        let frames = planned.run(2000).unwrap();
        assert_eq!(planned.status, SessionStatus::Done);
        let joints: Vec<Vec<Vec3>> = frames.iter().map(|f| f.joints.clone()).collect();
        assert_eq!(penetration_pct(&joints, &scene, Some("sofa")), 0.0);
        // the path goes around the wall through the gap on the +x side
        assert!(planned.path().waypoints.iter().any(|w| w.x > 4.4));

        let mut straight = walker_session(false, 1);
        let frames = straight.run(2000).unwrap();
        let joints: Vec<Vec<Vec3>> = frames.iter().map(|f| f.joints.clone()).collect();
        assert!(penetration_pct(&joints, &scene, Some("sofa")) > 0.0);
    }

    #[test]
    fn status_moves_forward_through_every_phase() {
        let mut s = walker_session(true, 4);
        let mut seen = vec![s.status];
        while s.status.is_active() {
            let ev = s.step().unwrap();
            if *seen.last().unwrap() != ev.status {
                seen.push(ev.status);
            }
        }
        use SessionStatus::*;
        assert_eq!(seen, vec![Navigating, Transitioning, Executing, Done]);
        assert!(s.execution_time().is_finite());
        assert!(s.step().is_err());
    }

    #[test]
    fn same_seed_same_frames() {
        let mut a = walker_session(true, 9);
        let mut b = walker_session(true, 9);
        assert_eq!(a.goal, b.goal);
        assert_eq!(a.path(), b.path());
        assert_eq!(a.run(50).unwrap(), b.run(50).unwrap());
    }

    #[test]
    fn frame_cap_fails_the_session() {
        let mut s = walker_session(true, 2);
        s.options.max_frames = 10;
        s.run(100).unwrap();
        assert_eq!(s.status, SessionStatus::Failed);
        assert_eq!(s.frame, 10);
    }

    #[test]
    fn start_validation() {
        let policy: Arc<dyn MotionPolicy> = Arc::new(ScriptedWalker::new(StateConfig::tiny()));
        let start = |id: &str, action| {
            Session::start(
                blocked_corridor_scene(),
                id,
                action,
                0,
                policy.clone(),
                GoalSource::Labeled,
                SessionOptions {
                    start: corridor_start(),
                    ..Default::default()
                },
            )
        };
        assert!(matches!(start("sofa", Action::Walk), Err(Error::UnsupportedAction(_))));
        assert!(matches!(start("piano", Action::Sit), Err(Error::UnknownObject(_))));
        assert!(matches!(start("wall", Action::Sit), Err(Error::NoGoal)));
        assert!(matches!(start("sofa", Action::LieDown), Err(Error::NoGoal)));
    }

    #[test]
    fn resampling_changes_only_what_it_should() {
        let mut walker = ScriptedWalker::new(StateConfig::tiny());
        walker.jitter = 0.002;
        let policy: Arc<dyn MotionPolicy> = Arc::new(walker);
        let mut s = Session::start(
            blocked_corridor_scene(),
            "sofa",
            Action::Sit,
            5,
            policy,
            GoalSource::Labeled,
            SessionOptions {
                start: corridor_start(),
                ..Default::default()
            },
        )
        .unwrap();
        s.run(20).unwrap();
        let mut a = s.clone();
        let mut b = s.clone();
        let mut c = s.clone();
        a.resample_style(100, false).unwrap();
        b.resample_style(100, false).unwrap();
        c.resample_style(200, false).unwrap();
        let (fa, fb, fc) = (a.run(30).unwrap(), b.run(30).unwrap(), c.run(30).unwrap());
        assert_eq!(fa, fb);
        assert_ne!(fa, fc);
        assert_eq!(a.goal, s.goal);
    }

    #[test]
    fn previous_root_inverts_compose() {
        let root = RootTransform::from_yaw(Vec2::new(1.0, -2.0), 0.7);
        let (p, d) = (Vec2::new(0.03, 0.04), Vec2::new(0.1, 0.99).normalize());
        let prev = previous_root(&root, &p, &d);
        let back = prev.compose(&p, &d);
        assert!((back.position - root.position).norm() < 1e-12);
        assert!((back.forward - root.forward).norm() < 1e-12);
    }
}
