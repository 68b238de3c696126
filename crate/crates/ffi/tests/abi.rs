use std::ffi::{CStr, CString};
use std::ptr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use samp_core::dataset::FeatureStats;
use samp_core::motion_net::{MotionModel, MotionNetConfig, MotionNetParams};
use samp_ffi::*;

fn last_error() -> String {
    let p = samp_last_error();
    assert!(!p.is_null(), "a failed call must leave a message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

struct Fixture {
    scene: *mut SampScene,
    policy: *mut SampPolicy,
}

impl Fixture {
    fn new() -> Self {
        let mut scene = ptr::null_mut();
        let mut policy = ptr::null_mut();
        unsafe {
            assert_eq!(samp_scene_corridor(&mut scene), SampCode::Ok);
            assert_eq!(samp_policy_scripted(&mut policy), SampCode::Ok);
        }
        Fixture { scene, policy }
    }

    fn start(&self, object: &str, action: &str, options: Option<&SampSessionOptions>) -> (SampCode, *mut SampSession) {
        let mut out = ptr::null_mut();
        let (o, a) = (c(object), c(action));
        let opts = options.map_or(ptr::null(), |o| o as *const _);
        let code = unsafe { samp_session_start(self.scene, self.policy, ptr::null(), o.as_ptr(), a.as_ptr(), 5, opts, &mut out) };
        (code, out)
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            samp_scene_free(self.scene);
            samp_policy_free(self.policy);
        }
    }
}

#[test]
fn version_and_dimensions() {
    let v = unsafe { CStr::from_ptr(samp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    assert_eq!(samp_state_dim(22, 13, 5), 647);
    let f = Fixture::new();
    unsafe {
        assert_eq!(samp_policy_state_dim(f.policy), samp_state_dim(14, 3, 5));
        assert_eq!(samp_policy_joint_count(f.policy), 14);
        assert_eq!(samp_policy_state_dim(ptr::null()), 0);
    }
}

#[test]
fn scripted_session_runs_to_completion() {
    let f = Fixture::new();
    let (code, s) = f.start("sofa", "sit", None);
    assert_eq!(code, SampCode::Ok);
    unsafe {
        assert_eq!(samp_session_status(s), SampSessionStatus::Navigating);

        let mut json = ptr::null_mut();
        assert_eq!(samp_session_frame_json(s, &mut json), SampCode::InvalidArgument);

        let mut status = SampSessionStatus::Failed;
        let mut seen_executing = false;
        while samp_session_status(s) != SampSessionStatus::Done {
            assert_eq!(samp_session_step(s, &mut status), SampCode::Ok, "{}", last_error());
            seen_executing |= status == SampSessionStatus::Executing;
            assert!(samp_session_frame(s) < 5400);
        }
        assert!(seen_executing);
        assert!(samp_session_execution_time(s).is_finite());
        assert_eq!(samp_session_step(s, ptr::null_mut()), SampCode::InvalidArgument);

        let mut need = 0;
        assert_eq!(samp_session_joints(s, ptr::null_mut(), 0, &mut need), SampCode::BufferTooSmall);
        assert_eq!(need, 14 * 3);
        let mut buf = vec![f64::NAN; need];
        assert_eq!(samp_session_joints(s, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), SampCode::Ok);
        assert!(buf.iter().all(|v| v.is_finite()));

        assert_eq!(samp_session_frame_json(s, &mut json), SampCode::Ok);
        let frame: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        samp_string_free(json);
        assert_eq!(frame["status"], "done");
        assert_eq!(frame["joints"].as_array().unwrap().len(), 14);
        assert_eq!(frame["frame"].as_u64().unwrap() as usize, samp_session_frame(s));
        samp_session_free(s);
    }
}

#[test]
fn resample_keeps_session_running() {
    let f = Fixture::new();
    let (code, s) = f.start("sofa", "sit", None);
    assert_eq!(code, SampCode::Ok);
    unsafe {
        for _ in 0..10 {
            assert_eq!(samp_session_step(s, ptr::null_mut()), SampCode::Ok);
        }
        assert_eq!(samp_session_resample(s, 99, true), SampCode::Ok);
        assert_eq!(samp_session_step(s, ptr::null_mut()), SampCode::Ok);
        assert_eq!(samp_session_frame(s), 11);
        samp_session_free(s);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let f = Fixture::new();
    let (code, s) = f.start("lamp", "sit", None);
    assert_eq!((code, s.is_null()), (SampCode::UnknownTarget, true));
    assert!(last_error().contains("lamp"));

    // the sofa carries sit goals only
    assert_eq!(f.start("sofa", "liedown", None).0, SampCode::UnknownTarget);

    let (code, _) = f.start("sofa", "carry", None);
    assert_eq!(code, SampCode::UnknownTarget);
    assert!(last_error().contains("carry"));

    // inside the wall
    let mut opts = samp_session_options_default();
    opts.start_x = 2.2;
    opts.start_z = 3.5;
    assert_eq!(f.start("sofa", "sit", Some(&opts)).0, SampCode::Unreachable);

    opts = samp_session_options_default();
    opts.cell_size = 0.0;
    assert_eq!(f.start("sofa", "sit", Some(&opts)).0, SampCode::InvalidArgument);

    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(samp_scene_from_json(ptr::null(), &mut out), SampCode::NullArgument);
        assert!(last_error().contains("json"));
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(samp_scene_from_json(bad.as_ptr().cast(), &mut out), SampCode::InvalidUtf8);
        assert_eq!(samp_scene_from_json(c("{\"floor\":").as_ptr(), &mut out), SampCode::Parse);
        assert_eq!(samp_scene_load(c("/nonexistent/scene.json").as_ptr(), &mut out), SampCode::Io);
        assert!(out.is_null());
        assert_eq!(samp_scene_corridor(ptr::null_mut()), SampCode::NullArgument);
        assert_eq!(samp_session_step(ptr::null_mut(), ptr::null_mut()), SampCode::NullArgument);
        assert_eq!(samp_session_status(ptr::null()), SampSessionStatus::Failed);

        // success clears the message
        assert_eq!(samp_scene_corridor(&mut out), SampCode::Ok);
        assert!(samp_last_error().is_null());
        samp_scene_free(out);

        let mut g = ptr::null_mut();
        assert_eq!(samp_goal_model_load(c("/nonexistent/goal").as_ptr(), &mut g), SampCode::Io);
        samp_goal_model_free(g);
        samp_session_free(ptr::null_mut());
    }
}

#[test]
fn scene_json_round_trip() {
    let f = Fixture::new();
    unsafe {
        let mut json = ptr::null_mut();
        assert_eq!(samp_scene_to_json(f.scene, &mut json), SampCode::Ok);
        let mut copy = ptr::null_mut();
        assert_eq!(samp_scene_from_json(json, &mut copy), SampCode::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(samp_scene_to_json(copy, &mut again), SampCode::Ok);
        assert_eq!(CStr::from_ptr(json), CStr::from_ptr(again));
        samp_string_free(json);
        samp_string_free(again);
        samp_scene_free(copy);
    }
}

#[test]
fn checkpoint_policy_drives_a_session() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("motion");
    let config = MotionNetConfig::tiny();
    let params = MotionNetParams::new(config.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let model = MotionModel {
        stats: FeatureStats::identity(config.state_dim()),
        params,
    };
    model.save(&stem, 1).unwrap();

    let f = Fixture::new();
    unsafe {
        let mut policy = ptr::null_mut();
        let path = c(stem.to_str().unwrap());
        assert_eq!(samp_policy_load(path.as_ptr(), &mut policy), SampCode::Ok, "{}", last_error());
        assert_eq!(samp_policy_state_dim(policy), config.state_dim());

        let mut s = ptr::null_mut();
        let mut opts = samp_session_options_default();
        opts.max_frames = 5;
        let code = samp_session_start(f.scene, policy, ptr::null(), c("sofa").as_ptr(), c("sit").as_ptr(), 3, &opts, &mut s);
        assert_eq!(code, SampCode::Ok, "{}", last_error());
        for _ in 0..5 {
            assert_eq!(samp_session_step(s, ptr::null_mut()), SampCode::Ok, "{}", last_error());
        }
        // an untrained network cannot reach the sofa in five frames
        assert_eq!(samp_session_status(s), SampSessionStatus::Failed);
        samp_session_free(s);
        samp_policy_free(policy);
    }
}
