//! Object edits with contact preservation: detect key-joint contacts,
//! project them onto a scaled or switched object, re-solve limbs with CCD
//! and ease the edit in and out around contact spans.

use nalgebra::{Rotation3, UnitQuaternion};
use rand::Rng;

use crate::dataset::MotionClip;
use crate::error::{Error, Result};
use crate::kinematics::{axis_angle, KeyJoint, Mat3, RootTransform, Rotation6D, Skeleton, Vec2, Vec3};
use crate::state::{Goal, NUM_CONTACTS};
use crate::voxel::SceneObject;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactThresholds {
    /// Maximum joint-to-surface distance (m).
    pub distance: f64,
    /// Maximum joint speed (m/s).
    pub speed: f64,
}

impl Default for ContactThresholds {
    fn default() -> Self {
        Self {
            distance: 0.05,
            speed: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyContact {
    pub in_contact: bool,
    /// Nearest surface point in the object frame.
    pub point: Vec3,
}

/// Contacts of the key joints in `KeyJoint::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactFrame {
    pub joints: [KeyContact; NUM_CONTACTS],
}

fn local_surface_point(obj: &SceneObject, p_local: &Vec3) -> Option<Vec3> {
    obj.boxes
        .iter()
        .map(|b| b.nearest_surface_point(p_local))
        .min_by(|a, b| (a - p_local).norm().total_cmp(&(b - p_local).norm()))
}

/// A key joint is in contact when it is close to the surface and slow.
pub fn detect_contacts(
    positions: &[Vec3; NUM_CONTACTS],
    speeds: &[f64; NUM_CONTACTS],
    obj: &SceneObject,
    thresholds: &ContactThresholds,
) -> ContactFrame {
    let to_obj = obj.pose.transform().inverse();
    let joints = std::array::from_fn(|k| {
        let local = to_obj.apply(&positions[k]);
        match local_surface_point(obj, &local) {
            Some(point) => KeyContact {
                in_contact: (point - local).norm() < thresholds.distance && speeds[k] < thresholds.speed,
                point,
            },
            None => KeyContact {
                in_contact: false,
                point: local,
            },
        }
    });
    ContactFrame { joints }
}

/// Moves every contact point to the nearest surface point of `new_obj`.
pub fn project_contacts(contacts: &ContactFrame, new_obj: &SceneObject) -> Result<ContactFrame> {
    if new_obj.boxes.is_empty() {
        return Err(Error::EmptyObject);
    }
    let joints = contacts.joints.map(|c| KeyContact {
        in_contact: c.in_contact,
        point: local_surface_point(new_obj, &c.point).expect("nonempty"),
    });
    Ok(ContactFrame { joints })
}

/// A serial chain from a base joint to an end effector, in world space.
#[derive(Debug, Clone, PartialEq)]
pub struct IkChain {
    /// Joint positions, base first, effector last.
    pub positions: Vec<Vec3>,
    /// World rotation of each chain joint.
    pub rotations: Vec<Mat3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub distance: f64,
}

pub const IK_MAX_STEP: f64 = 0.2;

impl IkChain {
    pub fn new(positions: Vec<Vec3>) -> Self {
        let n = positions.len();
        Self {
            positions,
            rotations: vec![Mat3::identity(); n],
        }
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }

    pub fn reach(&self) -> f64 {
        self.lengths().iter().sum()
    }

    pub fn effector(&self) -> Vec3 {
        *self.positions.last().expect("chain has joints")
    }

    /// Rotates everything after `pivot` by `q` about the pivot.
    fn rotate_after(&mut self, pivot: usize, q: &Mat3) {
        let origin = self.positions[pivot];
        for p in &mut self.positions[pivot + 1..] {
            *p = origin + q * (*p - origin);
        }
        for r in &mut self.rotations[pivot..] {
            *r = q * *r;
        }
    }

    fn straighten_toward(&mut self, target: &Vec3) {
        let base = self.positions[0];
        let dir = match (target - base).try_normalize(1e-12) {
            Some(d) => d,
            None => return,
        };
        for k in 0..self.positions.len() - 1 {
            let bone = self.positions[k + 1] - self.positions[k];
            let q = align(&bone, &dir, f64::INFINITY);
            self.rotate_after(k, &q);
        }
    }
}

/// Rotation turning `from` toward `to`, by at most `max_angle`.
fn align(from: &Vec3, to: &Vec3, max_angle: f64) -> Mat3 {
    let (a, b) = match (from.try_normalize(1e-12), to.try_normalize(1e-12)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Mat3::identity(),
    };
    let mut axis = a.cross(&b);
    // atan2 stays accurate for nearly parallel vectors, where acos does not
    let angle = axis.norm().atan2(a.dot(&b));
    if angle < 1e-15 {
        return Mat3::identity();
    }
    if axis.norm() < 1e-12 && a.dot(&b) < 0.0 {
        // antiparallel: any perpendicular axis
        axis = if a.x.abs() < 0.9 { a.cross(&Vec3::x()) } else { a.cross(&Vec3::y()) };
    }
    axis_angle(&axis, angle.min(max_angle))
}

/// Cyclic coordinate descent: sweep joints from the effector back to the
/// base, each turning the effector toward the target by at most
/// [`IK_MAX_STEP`] radians. Targets beyond the chain's reach straighten
/// the chain toward them and report non-convergence.
pub fn ccd_ik(chain: &mut IkChain, target: &Vec3, max_iters: usize, tol: f64) -> IkOutcome {
    let n = chain.positions.len();
    let dist = |c: &IkChain| (c.effector() - target).norm();
    if n < 2 || dist(chain) < tol {
        return IkOutcome {
            converged: n >= 1 && dist(chain) < tol,
            iterations: 0,
            distance: dist(chain),
        };
    }
    if (target - chain.positions[0]).norm() >= chain.reach() {
        chain.straighten_toward(target);
        return IkOutcome {
            converged: false,
            iterations: 0,
            distance: dist(chain),
        };
    }
    let mut last = dist(chain);
    for it in 1..=max_iters {
        if it > 1 && n > 2 {
            let d = dist(chain);
            if last - d < 1e-12 {
                // a straight chain pointing at the target cannot shorten by
                // rotations alone; bend the last hinge about its local x
                let k = n - 2;
                let axis = chain.rotations[k].column(0).into_owned();
                chain.rotate_after(k, &axis_angle(&axis, IK_MAX_STEP));
            }
            last = d;
        }
        for k in (0..n - 1).rev() {
            let pivot = chain.positions[k];
            let q = align(&(chain.effector() - pivot), &(target - pivot), IK_MAX_STEP);
            chain.rotate_after(k, &q);
        }
        let d = dist(chain);
        if d < tol {
            return IkOutcome {
                converged: true,
                iterations: it,
                distance: d,
            };
        }
    }
    IkOutcome {
        converged: false,
        iterations: max_iters,
        distance: dist(chain),
    }
}

/// Limb chain for a key joint: hip to foot, shoulder to hand. `None` for
/// the pelvis, which is handled by translating the body.
pub fn limb_chain(skeleton: &Skeleton, key: KeyJoint) -> Option<Vec<usize>> {
    let tip = skeleton.key_joint(key);
    let base_names: &[&str] = match key {
        KeyJoint::Pelvis => return None,
        KeyJoint::LeftFoot => &["left_hip"],
        KeyJoint::RightFoot => &["right_hip"],
        KeyJoint::LeftHand => &["left_shoulder", "left_collar"],
        KeyJoint::RightHand => &["right_shoulder", "right_collar"],
    };
    let base = base_names
        .iter()
        .find_map(|n| skeleton.index_of(n))
        .or_else(|| {
            // nearest ancestor at least two bones up, excluding the root
            let p = skeleton.parent(tip)?;
            skeleton.parent(p).filter(|g| skeleton.parent(*g).is_some()).or(Some(p))
        })?;
    skeleton.chain(base, tip)
}

/// One object edit applied to a whole clip.
#[derive(Debug, Clone, PartialEq)]
pub enum Edit {
    /// Per-axis scale about the object's floor center.
    Scale(Vec3),
    /// Replace the object, keeping its placement.
    Switch(SceneObject),
}

impl Edit {
    pub fn identity() -> Self {
        Edit::Scale(Vec3::new(1.0, 1.0, 1.0))
    }

    pub fn random_scale<R: Rng + ?Sized>(rng: &mut R, spread: f64) -> Self {
        let mut s = || 1.0 + rng.random_range(-spread..=spread);
        Edit::Scale(Vec3::new(s(), s(), s()))
    }

    /// Where an object-frame surface point of `obj` moves under the edit,
    /// before projection onto the edited surface.
    pub fn map_point(&self, obj: &SceneObject, p: &Vec3) -> Vec3 {
        match self {
            Edit::Scale(s) => obj.scale_point(s, p),
            Edit::Switch(_) => *p,
        }
    }

    /// The edited object; switching requires a bounding diagonal within 20%.
    pub fn apply(&self, obj: &SceneObject) -> Result<SceneObject> {
        match self {
            Edit::Scale(s) => Ok(obj.scaled(s)),
            Edit::Switch(other) => {
                let ratio = other.local_bounds()?.diagonal() / obj.local_bounds()?.diagonal();
                if !(0.8..=1.2).contains(&ratio) {
                    return Err(Error::DissimilarObject(ratio));
                }
                let mut out = other.clone();
                out.pose = obj.pose;
                out.id = obj.id.clone();
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub clip: MotionClip,
    /// Largest deviation of a contacted joint from its projected contact
    /// (offset-preserving) over all contacted frames, in meters.
    pub max_contact_error: f64,
    /// IK solves that did not converge.
    pub unconverged: usize,
}

pub const IK_TOLERANCE: f64 = 1e-3;
pub const IK_ITERATIONS: usize = 100;
const EASE_SECONDS: f64 = 0.25;

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Root of the previous frame, recovered from a state's own root delta.
fn previous_root(cur: &RootTransform, rel_pos: &Vec2, rel_fwd: &Vec2) -> RootTransform {
    let yaw = cur.yaw() - crate::kinematics::forward_to_yaw(rel_fwd);
    let prev = RootTransform::from_yaw(Vec2::zeros(), yaw);
    let offset = prev.point2_to_world(rel_pos);
    RootTransform::new(cur.position - offset, prev.forward)
}

fn remap_goal(g: &Goal, old: &SceneObject, new: &SceneObject) -> Goal {
    // goals are expressed in the world; find the labeled goal it came from
    let to_obj = old.pose.transform().inverse();
    let local = to_obj.apply(&g.position);
    let nearest = |o: &SceneObject| {
        o.goals
            .iter()
            .enumerate()
            .filter(|(_, lg)| lg.action == g.action)
            .min_by(|a, b| (a.1.position - local).norm().total_cmp(&(b.1.position - local).norm()))
            .map(|(i, lg)| (i, *lg))
    };
    match (nearest(old), old.goals.len() == new.goals.len()) {
        (Some((i, lg)), true) if (lg.position - local).norm() < 1e-4 => new.goal_to_world(&new.goals[i]),
        (Some((_, lg)), false) if (lg.position - local).norm() < 1e-4 => match nearest(new) {
            Some((_, ng)) => new.goal_to_world(&ng),
            None => *g,
        },
        _ => *g,
    }
}

/// Applies `edit` to the clip's object and re-solves the pose so that every
/// key joint in contact keeps its offset to the projected contact point.
pub fn augment_clip(clip: &MotionClip, edit: &Edit, skeleton: &Skeleton) -> Result<AugmentOutcome> {
    let old = clip.object.as_ref().ok_or(Error::NoGoal)?;
    let new = edit.apply(old)?;
    let cfg = &clip.config;
    let n = clip.len();
    if skeleton.len() != cfg.joints {
        return Err(Error::DimMismatch {
            context: "skeleton joints",
            expected: cfg.joints,
            actual: skeleton.len(),
        });
    }
    let keys: Vec<usize> = KeyJoint::ALL.iter().map(|k| skeleton.key_joint(*k)).collect();
    let chains: Vec<Option<Vec<usize>>> = KeyJoint::ALL.iter().map(|k| limb_chain(skeleton, *k)).collect();
    let to_obj = old.pose.transform().inverse();
    let from_obj = new.pose.transform();

    // world pose of every frame
    let world: Vec<(Vec<Vec3>, Vec<Mat3>)> = clip
        .states
        .iter()
        .zip(&clip.roots)
        .map(|(s, r)| {
            let rot = r.rotation();
            let pos = s.jp.iter().map(|p| r.to_world(p)).collect();
            let rots = s
                .jr
                .iter()
                .map(|q| rot * q.to_matrix().unwrap_or_else(|_| Mat3::identity()))
                .collect();
            (pos, rots)
        })
        .collect();

    let mut disp: Vec<Option<Vec<Vec3>>> = vec![None; n];
    let mut drot: Vec<Option<Vec<Mat3>>> = vec![None; n];
    let mut max_err: f64 = 0.0;
    let mut unconverged = 0;
    for i in 0..n {
        let flags: Vec<bool> = clip.states[i].contacts.iter().map(|c| *c > 0.5).collect();
        if !flags.iter().any(|f| *f) {
            continue;
        }
        let (pos, rots) = &world[i];
        let mut targets: [Option<Vec3>; NUM_CONTACTS] = [None; NUM_CONTACTS];
        for k in 0..NUM_CONTACTS {
            if flags[k] {
                let p = pos[keys[k]];
                let local = to_obj.apply(&p);
                let old_point = local_surface_point(old, &local).ok_or(Error::EmptyObject)?;
                let new_point = local_surface_point(&new, &edit.map_point(old, &old_point)).ok_or(Error::EmptyObject)?;
                targets[k] = Some(from_obj.apply(&(new_point + (local - old_point))));
            }
        }
        let mut p2 = pos.clone();
        let mut r2 = rots.clone();
        let shift = targets[0].map_or(Vec3::zeros(), |t| t - pos[keys[0]]);
        if shift.norm() > 0.0 {
            p2.iter_mut().for_each(|p| *p += shift);
        }
        for k in 1..NUM_CONTACTS {
            let target = match targets[k] {
                Some(t) => t,
                // feet keep their ground placement when the body moves
                None if shift.norm() > 0.0 && matches!(KeyJoint::ALL[k], KeyJoint::LeftFoot | KeyJoint::RightFoot) => {
                    pos[keys[k]]
                }
                None => continue,
            };
            let Some(chain) = &chains[k] else { continue };
            let mut ik = IkChain {
                positions: chain.iter().map(|&j| p2[j]).collect(),
                rotations: chain.iter().map(|&j| r2[j]).collect(),
            };
            let outcome = ccd_ik(&mut ik, &target, IK_ITERATIONS, IK_TOLERANCE * 0.5);
            if !outcome.converged {
                unconverged += 1;
            }
            // joints hanging off the chain follow their deepest chain ancestor
            for j in 0..skeleton.len() {
                if chain.contains(&j) {
                    continue;
                }
                if let Some(m) = chain.iter().rposition(|&c| skeleton.is_descendant(j, c)) {
                    let delta = ik.rotations[m] * r2[chain[m]].transpose();
                    p2[j] = ik.positions[m] + delta * (p2[j] - p2[chain[m]]);
                    r2[j] = delta * r2[j];
                }
            }
            for (c, &j) in chain.iter().enumerate() {
                p2[j] = ik.positions[c];
                r2[j] = ik.rotations[c];
            }
        }
        for k in 0..NUM_CONTACTS {
            if let Some(t) = targets[k] {
                max_err = max_err.max((p2[keys[k]] - t).norm());
            }
        }
        disp[i] = Some(p2.iter().zip(pos).map(|(a, b)| a - b).collect());
        drot[i] = Some(r2.iter().zip(rots).map(|(a, b)| a * b.transpose()).collect());
    }

    // ease edits in and out of contact spans
    let ease = (EASE_SECONDS * f64::from(cfg.fps)).round() as i64;
    let edited: Vec<usize> = (0..n).filter(|i| disp[*i].is_some()).collect();
    let mut full_disp = vec![vec![Vec3::zeros(); cfg.joints]; n];
    let mut full_rot = vec![vec![Mat3::identity(); cfg.joints]; n];
    for i in 0..n {
        if let (Some(d), Some(r)) = (&disp[i], &drot[i]) {
            full_disp[i] = d.clone();
            full_rot[i] = r.clone();
            continue;
        }
        let nearest = edited
            .iter()
            .min_by_key(|&&e| (e as i64 - i as i64).abs())
            .copied();
        if let Some(e) = nearest {
            let gap = (e as i64 - i as i64).abs();
            if gap <= ease {
                let w = smoothstep(1.0 - gap as f64 / (ease + 1) as f64);
                let d = disp[e].as_ref().expect("edited");
                let r = drot[e].as_ref().expect("edited");
                full_disp[i] = d.iter().map(|v| v * w).collect();
                full_rot[i] = r
                    .iter()
                    .map(|m| {
                        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
                        UnitQuaternion::identity()
                            .slerp(&q, w)
                            .to_rotation_matrix()
                            .into_inner()
                    })
                    .collect();
            }
        }
    }

    let fps = f64::from(cfg.fps);
    let mut states = clip.states.clone();
    for i in 0..n {
        let root = clip.roots[i];
        let s = &mut states[i];
        let moved = full_disp[i].iter().any(|d| d.norm() > 0.0) || full_rot[i].iter().any(|r| *r != Mat3::identity());
        if moved {
            let rot_t = root.rotation().transpose();
            for j in 0..cfg.joints {
                let (p, r) = (&world[i].0[j], &world[i].1[j]);
                s.jp[j] = root.to_local(&(p + full_disp[i][j]));
                s.jr[j] = Rotation6D::from_matrix_unchecked(&(rot_t * full_rot[i][j] * r));
            }
            let future = clip.roots[(i + cfg.fps as usize).min(n - 1)];
            for j in 0..cfg.joints {
                s.jp_future[j] += future.dir_to_local(&full_disp[i][j]);
            }
        }
        let (a, b, scale) = if i == 0 {
            (0, 0, 0.0)
        } else if i + 1 < n {
            (i - 1, i + 1, fps / 2.0)
        } else {
            (i - 1, i, fps)
        };
        if scale > 0.0 {
            for j in 0..cfg.joints {
                let dv = (full_disp[b][j] - full_disp[a][j]) * scale;
                if dv.norm() > 0.0 {
                    s.jv[j] += root.dir_to_local(&dv);
                }
            }
        }
        // goal fields follow the edited object's labeled goals
        let c = s.center();
        let prev_root = previous_root(&root, &s.tp[c], &s.td[c]);
        let goal_world = Goal::new(root.to_world(&s.gp[c]), root.dir_to_world(&s.gd[c]), crate::state::Action::from_index(crate::state::argmax(&s.ga[c])).unwrap_or(crate::state::Action::Idle));
        let new_goal = remap_goal(&goal_world, old, &new);
        if (new_goal.position - goal_world.position).norm() > 0.0 || (new_goal.direction - goal_world.direction).norm() > 0.0 {
            for k in 0..s.gp.len() {
                s.gp[k] = root.to_local(&new_goal.position);
                s.gd[k] = root.dir_to_local(&new_goal.direction);
            }
            let gf = new_goal.ground_frame();
            for k in 0..s.tp.len() {
                let sample = prev_root.compose(&s.tp[k], &s.td[k]);
                let (p, d) = gf.delta_to(&sample);
                s.tp_goal[k] = p;
                s.td_goal[k] = d;
            }
        }
        let flat: Vec<f64> = s.flatten(cfg)?.into_iter().map(|x| f64::from(x as f32)).collect();
        *s = crate::state::CharacterState::unflatten(&flat, cfg)?;
    }
    let mut out = clip.clone();
    out.states = states;
    out.object = Some(new);
    Ok(AugmentOutcome {
        clip: out,
        max_contact_error: max_err,
        unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{base_object, generate_clip, GenerateOptions, ObjectFamily};
    use crate::state::StateConfig;
    use crate::voxel::{OrientedBox, Pose};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seat() -> SceneObject {
        SceneObject {
            id: "seat".into(),
            category: "box".into(),
            pose: Pose::default(),
            boxes: vec![OrientedBox::new(Vec3::new(0.0, 0.225, 0.0), Vec3::new(0.25, 0.225, 0.25))],
            goals: vec![],
        }
    }

    #[test]
    fn contact_detection_examples() {
        let obj = seat();
        let far = [Vec3::new(0.0, 1.45, 0.0); NUM_CONTACTS];
        let f = detect_contacts(&far, &[0.0; NUM_CONTACTS], &obj, &ContactThresholds::default());
        assert!(f.joints.iter().all(|c| !c.in_contact));

        let near = [Vec3::new(0.1, 0.47, 0.05); NUM_CONTACTS];
        let f = detect_contacts(&near, &[0.0; NUM_CONTACTS], &obj, &ContactThresholds::default());
        assert!(f.joints[0].in_contact);
        assert!((f.joints[0].point - Vec3::new(0.1, 0.45, 0.05)).norm() < 1e-12);

        let f = detect_contacts(&near, &[1.0; NUM_CONTACTS], &obj, &ContactThresholds::default());
        assert!(f.joints.iter().all(|c| !c.in_contact));

        let everything = ContactThresholds {
            distance: f64::INFINITY,
            speed: f64::INFINITY,
        };
        let f = detect_contacts(&far, &[5.0; NUM_CONTACTS], &obj, &everything);
        assert!(f.joints.iter().all(|c| c.in_contact));
    }

    #[test]
    fn projection_examples() {
        let obj = seat();
        let on = ContactFrame {
            joints: [KeyContact {
                in_contact: true,
                point: Vec3::new(0.1, 0.45, 0.0),
            }; NUM_CONTACTS],
        };
        assert_eq!(project_contacts(&on, &obj).unwrap(), on);

        let taller = obj.scaled(&Vec3::new(1.0, 0.55 / 0.45, 1.0));
        let up = project_contacts(&on, &taller).unwrap();
        assert!((up.joints[0].point - Vec3::new(0.1, 0.55, 0.0)).norm() < 1e-12);

        let doubled = obj.scaled(&Vec3::new(2.0, 1.2, 2.0));
        let corner = ContactFrame {
            joints: [KeyContact {
                in_contact: true,
                point: Vec3::new(0.1, 0.45, 0.1),
            }; NUM_CONTACTS],
        };
        let p = project_contacts(&corner, &doubled).unwrap();
        // the old point is now inside; the nearest face is the top at 0.54
        assert!((p.joints[0].point - Vec3::new(0.1, 0.54, 0.1)).norm() < 1e-12);

        let empty = SceneObject {
            boxes: vec![],
            ..obj
        };
        assert!(matches!(project_contacts(&on, &empty), Err(Error::EmptyObject)));
    }

    fn planar(l1: f64, l2: f64) -> IkChain {
        IkChain::new(vec![Vec3::zeros(), Vec3::new(l1, 0.0, 0.0), Vec3::new(l1 + l2, 0.0, 0.0)])
    }

    #[test]
    fn ccd_trivial_and_unreachable() {
        let mut c = planar(1.0, 1.0);
        let out = ccd_ik(&mut c, &Vec3::new(2.0, 0.0, 0.0), 100, 1e-3);
        assert!(out.converged);
        assert_eq!(out.iterations, 0);

        let mut c = IkChain::new(vec![Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0)]);
        let out = ccd_ik(&mut c, &Vec3::new(3.0, 0.0, 0.0), 100, 1e-3);
        assert!(!out.converged);
        assert!((c.effector().norm() - 2.0).abs() < 1e-6);
        assert!((c.positions[1] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn ccd_matches_two_link_law_of_cosines() {
        let mut c = IkChain::new(vec![Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 2.0, 0.0)]);
        // bend slightly so the solver starts off the singular straight pose
        let q = axis_angle(&Vec3::z(), 0.3);
        c.rotate_after(1, &q);
        let target = Vec3::new(1.2, 0.5, 0.0);
        let out = ccd_ik(&mut c, &target, 100, 1e-3);
        assert!(out.converged, "{out:?}");
        assert!((c.effector() - target).norm() < 1e-3);

        // oracle: elbow angle from the law of cosines, shoulder from atan2
        let (x, y) = (target.x, target.y);
        let d2 = x * x + y * y;
        let elbow = ((d2 - 2.0) / 2.0).clamp(-1.0, 1.0).acos();
        let shoulder = |e: f64| y.atan2(x) - (e.sin()).atan2(1.0 + e.cos());
        let upper = c.positions[1] - c.positions[0];
        let lower = c.positions[2] - c.positions[1];
        let got_shoulder = upper.y.atan2(upper.x);
        let got_elbow = (upper.x * lower.y - upper.y * lower.x).atan2(upper.dot(&lower));
        let ok = [elbow, -elbow].iter().any(|&e| {
            (got_elbow - e).abs() < 1e-2 && (got_shoulder - shoulder(e)).abs() < 1e-2
        });
        assert!(ok, "shoulder {got_shoulder} elbow {got_elbow} vs {elbow}");
    }

    #[test]
    fn ccd_never_moves_away_from_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let mut c = IkChain::new(vec![
                Vec3::zeros(),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 1.8, 0.0),
                Vec3::new(0.0, 2.4, 0.1),
            ]);
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let target = dir.normalize() * rng.random_range(0.3..2.0);
            let mut last = (c.effector() - target).norm();
            for _ in 0..50 {
                ccd_ik(&mut c, &target, 1, 0.0);
                let d = (c.effector() - target).norm();
                assert!(d <= last + 1e-12, "{d} > {last} target {target:?}");
                last = d;
            }
        }
    }

    #[test]
    fn limb_chains_follow_the_skeleton() {
        let b = Skeleton::body22();
        assert_eq!(limb_chain(&b, KeyJoint::LeftHand), Some(vec![16, 18, 20]));
        assert_eq!(limb_chain(&b, KeyJoint::RightFoot), Some(vec![2, 5, 8, 11]));
        assert_eq!(limb_chain(&b, KeyJoint::Pelvis), None);
        let t = Skeleton::tiny();
        assert_eq!(limb_chain(&t, KeyJoint::LeftFoot), Some(vec![2, 3, 4]));
    }

    fn sit_clip() -> (MotionClip, Skeleton) {
        let cfg = StateConfig::tiny();
        let sk = Skeleton::tiny();
        let obj = base_object(ObjectFamily::Chair);
        (generate_clip(crate::state::Action::Sit, 3, Some(&obj), &GenerateOptions::default(), &cfg, &sk).unwrap(), sk)
    }

    #[test]
    fn identity_edit_is_a_no_op() {
        let (clip, sk) = sit_clip();
        let out = augment_clip(&clip, &Edit::identity(), &sk).unwrap();
        for (a, b) in out.clip.states.iter().zip(&clip.states) {
            let (fa, fb) = (a.flatten(&clip.config).unwrap(), b.flatten(&clip.config).unwrap());
            for (x, y) in fa.iter().zip(&fb) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn raising_the_seat_lifts_the_pelvis() {
        let (clip, sk) = sit_clip();
        let edit = Edit::Scale(Vec3::new(1.0, 0.55 / 0.45, 1.0));
        let out = augment_clip(&clip, &edit, &sk).unwrap();
        let mut checked = 0;
        for (i, (a, b)) in out.clip.states.iter().zip(&clip.states).enumerate() {
            if b.contacts[0] > 0.5 {
                let rise = a.jp[0].y - b.jp[0].y;
                assert!((rise - 0.10).abs() < 1e-5, "frame {i} rose {rise}");
                checked += 1;
            }
        }
        assert!(checked > 10);
        assert!(out.max_contact_error < IK_TOLERANCE, "{} {:?}", out.max_contact_error, out.unconverged);
        // the goal moved with the seat
        let last = out.clip.states.last().unwrap();
        assert!((last.gp[0].y - 0.55).abs() < 1e-5);
    }

    #[test]
    fn switching_to_a_similar_object_keeps_contacts() {
        let (clip, sk) = sit_clip();
        let mut other = base_object(ObjectFamily::Chair).scaled(&Vec3::new(1.1, 0.9, 1.05));
        other.id = "other".into();
        let out = augment_clip(&clip, &Edit::Switch(other), &sk).unwrap();
        assert!(out.max_contact_error < IK_TOLERANCE);
        for s in &out.clip.states {
            s.check_invariants().unwrap();
        }
        let bed = base_object(ObjectFamily::Bed);
        assert!(matches!(
            augment_clip(&clip, &Edit::Switch(bed), &sk),
            Err(Error::DissimilarObject(_))
        ));
    }
}
