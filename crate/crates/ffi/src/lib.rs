//! C ABI over `samp-core`.
//!
//! Every fallible function returns a [`SampCode`]; on failure the message is
//! kept per thread and read back with [`samp_last_error`]. Objects cross the
//! boundary as opaque handles created by the `*_load`, `*_corridor`,
//! `*_scripted` and `*_start` functions and released by the matching
//! `*_free`. Handles are not thread-safe: use one session from one thread at
//! a time.
//!
//! Panics never unwind into C; they are reported as [`SampCode::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use samp_core::kinematics::{RootTransform, Vec2};
use samp_core::motion_net::MotionModel;
use samp_core::goal_net::GoalModel;
use samp_core::runtime::{
    blocked_corridor_scene, corridor_start, FrameEvent, GoalSource, MotionPolicy, ScriptedWalker, Session,
    SessionOptions, SessionStatus,
};
use samp_core::state::{Action, StateConfig};
use samp_core::voxel::Scene;
use samp_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampCode {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was out of range or inconsistent.
    InvalidArgument = 3,
    /// Reading or writing a file failed.
    Io = 4,
    /// Malformed JSON or a checkpoint that does not parse.
    Parse = 5,
    /// Unknown object or unsupported action.
    UnknownTarget = 6,
    /// No collision-free path to the goal exists.
    Unreachable = 7,
    /// The model or session failed while running.
    Runtime = 8,
    /// The caller's buffer is too small; the required length was written.
    BufferTooSmall = 9,
    /// A Rust panic was caught at the boundary.
    Panic = 10,
}

/// Mirrors the session status machine.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampSessionStatus {
    Navigating = 0,
    Transitioning = 1,
    Executing = 2,
    Done = 3,
    Failed = 4,
}

impl From<SessionStatus> for SampSessionStatus {
    fn from(s: SessionStatus) -> Self {
        match s {
            SessionStatus::Navigating => Self::Navigating,
            SessionStatus::Transitioning => Self::Transitioning,
            SessionStatus::Executing => Self::Executing,
            SessionStatus::Done => Self::Done,
            SessionStatus::Failed => Self::Failed,
        }
    }
}

/// Session start parameters. Obtain defaults from
/// [`samp_session_options_default`] and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SampSessionOptions {
    pub start_x: f64,
    pub start_z: f64,
    /// Heading about +y; 0 faces +z.
    pub start_yaw: f64,
    pub use_planner: bool,
    pub cell_size: f64,
    pub inflation: f64,
    pub max_frames: usize,
}

/// A scene of objects on a floor.
pub struct SampScene(Scene);

/// A motion policy: a trained motion network or the scripted walker.
pub struct SampPolicy(Arc<dyn MotionPolicy>);

/// A trained goal network.
pub struct SampGoalModel(Arc<GoalModel>);

/// A running interaction session.
pub struct SampSession {
    session: Session,
    last: Option<FrameEvent>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(SampCode, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => SampCode::Io,
            Error::Json(_) | Error::CorruptHeader(_) => SampCode::Parse,
            Error::UnknownObject(_) | Error::UnsupportedAction(_) | Error::NoGoal => SampCode::UnknownTarget,
            Error::Unreachable | Error::BlockedStart => SampCode::Unreachable,
            Error::Config(_) | Error::DegenerateScene | Error::EmptyObject => SampCode::InvalidArgument,
            _ => SampCode::Runtime,
        };
        Failure(code, e.to_string())
    }
}

fn fail(code: SampCode, msg: impl Into<String>) -> Failure {
    Failure(code, msg.into())
}

/// Runs `f`, records any error or panic and converts it to a code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SampCode {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SampCode::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SampCode::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(SampCode::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SampCode::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(SampCode::NullArgument, format!("`{name}` is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(SampCode::NullArgument, format!("`{name}` is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(SampCode::NullArgument, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn samp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn samp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Width of one flattened character state for the given sizes.
#[no_mangle]
pub extern "C" fn samp_state_dim(joints: usize, traj_samples: usize, actions: usize) -> usize {
    StateConfig {
        joints,
        traj_samples,
        actions,
        ..StateConfig::full()
    }
    .state_dim()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn samp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in scene: a corridor blocked by a wall with a sofa behind it.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn samp_scene_corridor(out: *mut *mut SampScene) -> SampCode {
    guard(|| put(out, SampScene(blocked_corridor_scene())))
}

/// Parses and validates a scene from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samp_scene_from_json(json: *const c_char, out: *mut *mut SampScene) -> SampCode {
    guard(|| {
        let text = str_arg(json, "json")?;
        let scene: Scene = serde_json::from_str(text).map_err(|e| fail(SampCode::Parse, e.to_string()))?;
        scene.validate()?;
        put(out, SampScene(scene))
    })
}

/// Reads and validates a scene JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samp_scene_load(path: *const c_char, out: *mut *mut SampScene) -> SampCode {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, SampScene(Scene::load(path)?))
    })
}

/// Serializes a scene to JSON; release with [`samp_string_free`].
///
/// # Safety
/// `scene` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samp_scene_to_json(scene: *const SampScene, out: *mut *mut c_char) -> SampCode {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        json_out(&scene.0, out)
    })
}

/// # Safety
/// `scene` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn samp_scene_free(scene: *mut SampScene) {
    free(scene);
}

/// Loads a trained motion network from its checkpoint stem (the path
/// without extension, as written by `samp train-motion`).
///
/// # Safety
/// `stem` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samp_policy_load(stem: *const c_char, out: *mut *mut SampPolicy) -> SampCode {
    guard(|| {
        let stem = PathBuf::from(str_arg(stem, "stem")?);
        let model: Arc<dyn MotionPolicy> = Arc::new(MotionModel::load(&stem)?);
        put(out, SampPolicy(model))
    })
}

/// A scripted walker on the small skeleton: steers at each sub-goal with a
/// fixed body pose. Useful for driving sessions without a trained model.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samp_policy_scripted(out: *mut *mut SampPolicy) -> SampCode {
    guard(|| put(out, SampPolicy(Arc::new(ScriptedWalker::new(StateConfig::tiny())))))
}

/// State width the policy consumes and produces, or 0 for a null handle.
///
/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn samp_policy_state_dim(policy: *const SampPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.0.state_config().state_dim())
}

/// Joint count of the policy's skeleton, or 0 for a null handle.
///
/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn samp_policy_joint_count(policy: *const SampPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.0.state_config().joints)
}

/// # Safety
/// `policy` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn samp_policy_free(policy: *mut SampPolicy) {
    free(policy);
}

/// Loads a trained goal network from its checkpoint stem.
///
/// # Safety
/// `stem` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samp_goal_model_load(stem: *const c_char, out: *mut *mut SampGoalModel) -> SampCode {
    guard(|| {
        let stem = PathBuf::from(str_arg(stem, "stem")?);
        put(out, SampGoalModel(Arc::new(GoalModel::load(&stem)?)))
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn samp_goal_model_free(model: *mut SampGoalModel) {
    free(model);
}

/// Defaults: start in front of the corridor facing +z, planner on.
#[no_mangle]
pub extern "C" fn samp_session_options_default() -> SampSessionOptions {
    let d = SessionOptions::default();
    let start = corridor_start();
    SampSessionOptions {
        start_x: start.position.x,
        start_z: start.position.y,
        start_yaw: start.yaw(),
        use_planner: d.use_planner,
        cell_size: d.cell_size,
        inflation: d.inflation,
        max_frames: d.max_frames,
    }
}

impl SampSessionOptions {
    fn to_core(self) -> Result<SessionOptions, Failure> {
        let finite = [self.start_x, self.start_z, self.start_yaw, self.cell_size, self.inflation]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.cell_size <= 0.0 || self.inflation < 0.0 || self.max_frames == 0 {
            return Err(fail(SampCode::InvalidArgument, "session options out of range"));
        }
        Ok(SessionOptions {
            start: RootTransform::from_yaw(Vec2::new(self.start_x, self.start_z), self.start_yaw),
            use_planner: self.use_planner,
            cell_size: self.cell_size,
            inflation: self.inflation,
            max_frames: self.max_frames,
        })
    }
}

/// Starts a session that walks to `object_id` and performs `action`
/// (`"sit"` or `"liedown"`). Goals come from `goals` when given, otherwise
/// from the object's labeled goals. `options` may be null for defaults.
///
/// # Safety
/// `scene` and `policy` must be live handles, `goals` null or live, strings
/// NUL-terminated, `options` null or valid, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samp_session_start(
    scene: *const SampScene,
    policy: *const SampPolicy,
    goals: *const SampGoalModel,
    object_id: *const c_char,
    action: *const c_char,
    seed: u64,
    options: *const SampSessionOptions,
    out: *mut *mut SampSession,
) -> SampCode {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        let policy = ref_arg(policy, "policy")?;
        let object_id = str_arg(object_id, "object_id")?;
        let action_name = str_arg(action, "action")?;
        let action = Action::parse(action_name).ok_or_else(|| Error::UnsupportedAction(action_name.into()))?;
        let goals = match goals.as_ref() {
            Some(g) => GoalSource::Net(g.0.clone()),
            None => GoalSource::Labeled,
        };
        let options = match options.as_ref() {
            Some(o) => o.to_core()?,
            None => samp_session_options_default().to_core()?,
        };
        let session = Session::start(scene.0.clone(), object_id, action, seed, policy.0.clone(), goals, options)?;
        put(out, SampSession { session, last: None })
    })
}

/// Advances one frame. `status` (optional) receives the status afterwards.
/// Stepping a finished session fails with [`SampCode::InvalidArgument`].
///
/// # Safety
/// `session` must be a live handle; `status` null or valid.
#[no_mangle]
pub unsafe extern "C" fn samp_session_step(session: *mut SampSession, status: *mut SampSessionStatus) -> SampCode {
    guard(|| {
        let s = mut_arg(session, "session")?;
        if !s.session.status.is_active() {
            return Err(fail(SampCode::InvalidArgument, "session has finished"));
        }
        let ev = s.session.step()?;
        if let Some(out) = status.as_mut() {
            *out = ev.status.into();
        }
        s.last = Some(ev);
        Ok(())
    })
}

/// Current status; a null handle reads as failed.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn samp_session_status(session: *const SampSession) -> SampSessionStatus {
    session.as_ref().map_or(SampSessionStatus::Failed, |s| s.session.status.into())
}

/// Frames produced so far.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn samp_session_frame(session: *const SampSession) -> usize {
    session.as_ref().map_or(0, |s| s.session.frame)
}

/// Seconds from start until the action began; infinity if it never did.
/// A null handle reads as NaN.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn samp_session_execution_time(session: *const SampSession) -> f64 {
    session.as_ref().map_or(f64::NAN, |s| s.session.execution_time())
}

/// Writes world joint positions as `x, y, z` triples. `len` is the buffer
/// length in doubles; `written` (optional) receives the number required.
///
/// # Safety
/// `session` must be a live handle, `out` valid for `len` doubles (or null
/// with `len == 0` to query the size), `written` null or valid.
#[no_mangle]
pub unsafe extern "C" fn samp_session_joints(
    session: *const SampSession,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> SampCode {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let joints = s.session.world_joints();
        let need = joints.len() * 3;
        if let Some(w) = written.as_mut() {
            *w = need;
        }
        if len < need {
            return Err(fail(
                SampCode::BufferTooSmall,
                format!("joint buffer holds {len} doubles, need {need}"),
            ));
        }
        if out.is_null() {
            return Err(fail(SampCode::NullArgument, "`out` is null"));
        }
        let buf = std::slice::from_raw_parts_mut(out, need);
        for (dst, j) in buf.chunks_exact_mut(3).zip(&joints) {
            dst.copy_from_slice(j.as_slice());
        }
        Ok(())
    })
}

/// The last produced frame as JSON (the same object the TCP service
/// streams); release with [`samp_string_free`]. Fails before the first step.
///
/// # Safety
/// `session` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samp_session_frame_json(session: *const SampSession, out: *mut *mut c_char) -> SampCode {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let ev = s
            .last
            .as_ref()
            .ok_or_else(|| fail(SampCode::InvalidArgument, "no frame has been produced yet"))?;
        json_out(ev, out)
    })
}

/// Redraws the motion style from `seed`; with `resample_goal` also draws a
/// new goal and replans.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn samp_session_resample(session: *mut SampSession, seed: u64, resample_goal: bool) -> SampCode {
    guard(|| {
        let s = mut_arg(session, "session")?;
        s.session.resample_style(seed, resample_goal)?;
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn samp_session_free(session: *mut SampSession) {
    free(session);
}

unsafe fn json_out<T: serde::Serialize + ?Sized>(value: &T, out: *mut *mut c_char) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(SampCode::NullArgument, "output pointer is null"));
    }
    let text = serde_json::to_string(value).map_err(|e| fail(SampCode::Runtime, e.to_string()))?;
    let c = CString::new(text).map_err(|e| fail(SampCode::Runtime, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}
