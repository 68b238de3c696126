//! Rotation representations, ground-plane root transforms and skeletons.
//!
//! The world is y-up. The character walks on the x/z plane and its root
//! frame has +z pointing forward and +x pointing to the character's left.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// First two columns of a rotation matrix, stored column-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub const IDENTITY: Rotation6D = Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    /// Gram-Schmidt decoding. The first column is normalized, the second is
    /// orthogonalized against it and the third is their cross product.
    pub fn to_matrix(&self) -> Result<Mat3> {
        let a = Vec3::new(self.0[0], self.0[1], self.0[2]);
        let b = Vec3::new(self.0[3], self.0[4], self.0[5]);
        let na = a.norm();
        if na <= 1e-8 || b.norm() <= 1e-8 {
            return Err(Error::DegenerateRotation);
        }
        let c0 = a / na;
        let ortho = b - c0 * c0.dot(&b);
        let no = ortho.norm();
        if no <= 1e-8 * b.norm().max(1.0) {
            return Err(Error::DegenerateRotation);
        }
        let c1 = ortho / no;
        let c2 = c0.cross(&c1);
        Ok(Mat3::from_columns(&[c0, c1, c2]))
    }

    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        let err = (m.transpose() * m - Mat3::identity()).abs().max();
        let det = m.determinant();
        if err > 1e-4 || (det - 1.0).abs() > 1e-4 {
            return Err(Error::NotARotation(err.max((det - 1.0).abs())));
        }
        Ok(Self::from_matrix_unchecked(m))
    }

    pub(crate) fn from_matrix_unchecked(m: &Mat3) -> Self {
        Rotation6D([
            m[(0, 0)],
            m[(1, 0)],
            m[(2, 0)],
            m[(0, 1)],
            m[(1, 1)],
            m[(2, 1)],
        ])
    }
}

/// Yaw rotation about +y that maps +z onto `forward` (x/z components).
pub fn yaw_matrix(forward: &Vec2) -> Mat3 {
    let (fx, fz) = (forward.x, forward.y);
    Mat3::new(fz, 0.0, fx, 0.0, 1.0, 0.0, -fx, 0.0, fz)
}

pub fn yaw_to_forward(yaw: f64) -> Vec2 {
    Vec2::new(yaw.sin(), yaw.cos())
}

pub fn forward_to_yaw(forward: &Vec2) -> f64 {
    forward.x.atan2(forward.y)
}

/// Character root on the ground plane. `position` holds (x, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootTransform {
    pub position: Vec2,
    pub forward: Vec2,
}

impl Default for RootTransform {
    fn default() -> Self {
        Self {
            position: Vec2::zeros(),
            forward: Vec2::new(0.0, 1.0),
        }
    }
}

impl RootTransform {
    pub fn new(position: Vec2, forward: Vec2) -> Self {
        let n = forward.norm();
        let forward = if n > 1e-12 {
            forward / n
        } else {
            Vec2::new(0.0, 1.0)
        };
        Self { position, forward }
    }

    pub fn from_yaw(position: Vec2, yaw: f64) -> Self {
        Self::new(position, yaw_to_forward(yaw))
    }

    pub fn yaw(&self) -> f64 {
        forward_to_yaw(&self.forward)
    }

    pub fn rotation(&self) -> Mat3 {
        yaw_matrix(&self.forward)
    }

    pub fn position3(&self) -> Vec3 {
        Vec3::new(self.position.x, 0.0, self.position.y)
    }

    /// Express a world point in this root's frame.
    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        let d = world - self.position3();
        let (fx, fz) = (self.forward.x, self.forward.y);
        Vec3::new(fz * d.x - fx * d.z, d.y, fx * d.x + fz * d.z)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local + self.position3()
    }

    pub fn dir_to_local(&self, world: &Vec3) -> Vec3 {
        let (fx, fz) = (self.forward.x, self.forward.y);
        Vec3::new(fz * world.x - fx * world.z, world.y, fx * world.x + fz * world.z)
    }

    pub fn dir_to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local
    }

    pub fn point2_to_local(&self, p: &Vec2) -> Vec2 {
        let l = self.to_local(&Vec3::new(p.x, 0.0, p.y));
        Vec2::new(l.x, l.z)
    }

    pub fn point2_to_world(&self, p: &Vec2) -> Vec2 {
        let w = self.to_world(&Vec3::new(p.x, 0.0, p.y));
        Vec2::new(w.x, w.z)
    }

    pub fn dir2_to_local(&self, d: &Vec2) -> Vec2 {
        let l = self.dir_to_local(&Vec3::new(d.x, 0.0, d.y));
        Vec2::new(l.x, l.z)
    }

    pub fn dir2_to_world(&self, d: &Vec2) -> Vec2 {
        let w = self.dir_to_world(&Vec3::new(d.x, 0.0, d.y));
        Vec2::new(w.x, w.z)
    }

    /// `cur` expressed in this frame: (relative position, relative forward).
    pub fn delta_to(&self, cur: &RootTransform) -> (Vec2, Vec2) {
        (
            self.point2_to_local(&cur.position),
            self.dir2_to_local(&cur.forward),
        )
    }

    /// Inverse of [`RootTransform::delta_to`].
    pub fn compose(&self, rel_position: &Vec2, rel_forward: &Vec2) -> RootTransform {
        RootTransform::new(
            self.point2_to_world(rel_position),
            self.dir2_to_world(rel_forward),
        )
    }
}

pub fn to_root_relative(world: &Vec3, root: &RootTransform) -> Vec3 {
    root.to_local(world)
}

pub fn root_delta(prev: &RootTransform, cur: &RootTransform) -> (Vec2, Vec2) {
    prev.delta_to(cur)
}

/// Rotation about `axis` by `angle` radians.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    match nalgebra::Unit::try_new(*axis, 1e-12) {
        Some(unit) => Rotation3::from_axis_angle(&unit, angle).into_inner(),
        None => Mat3::identity(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Offset from the parent joint in the parent's rest frame (meters).
    pub offset: [f64; 3],
}

/// Five joints tracked for contacts, in contact-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyJoint {
    Pelvis,
    LeftFoot,
    RightFoot,
    LeftHand,
    RightHand,
}

impl KeyJoint {
    pub const ALL: [KeyJoint; 5] = [
        KeyJoint::Pelvis,
        KeyJoint::LeftFoot,
        KeyJoint::RightFoot,
        KeyJoint::LeftHand,
        KeyJoint::RightHand,
    ];

    pub fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        let sk = Skeleton { joints };
        sk.validate()?;
        Ok(sk)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::Config("skeleton has no joints".into()));
        }
        if self.joints[0].parent.is_some() {
            return Err(Error::Config("joint 0 must be the root".into()));
        }
        for (i, j) in self.joints.iter().enumerate().skip(1) {
            match j.parent {
                Some(p) if p < i => {}
                _ => {
                    return Err(Error::Config(format!(
                        "joint {i} ({}) must have a parent listed before it",
                        j.name
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.joints[i].parent
    }

    pub fn offset(&self, i: usize) -> Vec3 {
        Vec3::from(self.joints[i].offset)
    }

    pub fn key_joint(&self, key: KeyJoint) -> usize {
        let names: &[&str] = match key {
            KeyJoint::Pelvis => &["pelvis"],
            KeyJoint::LeftFoot => &["left_foot"],
            KeyJoint::RightFoot => &["right_foot"],
            KeyJoint::LeftHand => &["left_wrist", "left_hand"],
            KeyJoint::RightHand => &["right_wrist", "right_hand"],
        };
        names
            .iter()
            .find_map(|n| self.index_of(n))
            .unwrap_or(0)
    }

    /// Joint indices from `base` down to `tip` (inclusive), or `None` when
    /// `base` is not an ancestor of `tip`.
    pub fn chain(&self, base: usize, tip: usize) -> Option<Vec<usize>> {
        let mut out = vec![tip];
        let mut cur = tip;
        while cur != base {
            cur = self.parent(cur)?;
            out.push(cur);
        }
        out.reverse();
        Some(out)
    }

    pub fn is_descendant(&self, node: usize, ancestor: usize) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.parent(c);
        }
        false
    }

    /// Forward kinematics. Local rotations are relative to the parent frame;
    /// the root joint is placed at `root` (ground) plus its own rest offset.
    pub fn forward_kinematics(
        &self,
        root: &RootTransform,
        root_height_offset: f64,
        local: &[Mat3],
    ) -> (Vec<Vec3>, Vec<Mat3>) {
        let n = self.len();
        let mut pos = Vec::with_capacity(n);
        let mut rot = Vec::with_capacity(n);
        for i in 0..n {
            match self.parent(i) {
                None => {
                    let r = root.rotation() * local[i];
                    let mut p = root.position3() + root.rotation() * self.offset(i);
                    p.y += root_height_offset;
                    pos.push(p);
                    rot.push(r);
                }
                Some(p) => {
                    let pr: Mat3 = rot[p];
                    pos.push(pos[p] + pr * self.offset(i));
                    rot.push(pr * local[i]);
                }
            }
        }
        (pos, rot)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sk: Skeleton = serde_json::from_str(&text)?;
        sk.validate()?;
        Ok(sk)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// 22-joint body skeleton (SMPL-style topology).
    pub fn body22() -> Self {
        let spec: [(&str, i32, [f64; 3]); 22] = [
            ("pelvis", -1, [0.0, 0.93, 0.0]),
            ("left_hip", 0, [0.09, -0.07, 0.0]),
            ("right_hip", 0, [-0.09, -0.07, 0.0]),
            ("spine1", 0, [0.0, 0.11, -0.01]),
            ("left_knee", 1, [0.0, -0.41, 0.0]),
            ("right_knee", 2, [0.0, -0.41, 0.0]),
            ("spine2", 3, [0.0, 0.13, 0.0]),
            ("left_ankle", 4, [0.0, -0.40, -0.02]),
            ("right_ankle", 5, [0.0, -0.40, -0.02]),
            ("spine3", 6, [0.0, 0.06, 0.02]),
            ("left_foot", 7, [0.0, -0.05, 0.12]),
            ("right_foot", 8, [0.0, -0.05, 0.12]),
            ("neck", 9, [0.0, 0.21, -0.02]),
            ("left_collar", 9, [0.08, 0.12, -0.01]),
            ("right_collar", 9, [-0.08, 0.12, -0.01]),
            ("head", 12, [0.0, 0.09, 0.05]),
            ("left_shoulder", 13, [0.11, 0.03, -0.01]),
            ("right_shoulder", 14, [-0.11, 0.03, -0.01]),
            ("left_elbow", 16, [0.05, -0.25, 0.0]),
            ("right_elbow", 17, [-0.05, -0.25, 0.0]),
            ("left_wrist", 18, [0.02, -0.24, 0.01]),
            ("right_wrist", 19, [-0.02, -0.24, 0.01]),
        ];
        Self::from_table(&spec)
    }

    /// 14-joint stick figure for fast tests: hinged legs and arms, no
    /// fingers, neck or head.
    pub fn tiny() -> Self {
        let spec: [(&str, i32, [f64; 3]); 14] = [
            ("pelvis", -1, [0.0, 0.93, 0.0]),
            ("spine", 0, [0.0, 0.30, 0.0]),
            ("left_hip", 0, [0.09, -0.05, 0.0]),
            ("left_knee", 2, [0.0, -0.43, 0.0]),
            ("left_foot", 3, [0.0, -0.45, 0.08]),
            ("right_hip", 0, [-0.09, -0.05, 0.0]),
            ("right_knee", 5, [0.0, -0.43, 0.0]),
            ("right_foot", 6, [0.0, -0.45, 0.08]),
            ("left_shoulder", 1, [0.17, 0.15, 0.0]),
            ("left_elbow", 8, [0.0, -0.28, 0.0]),
            ("left_hand", 9, [0.0, -0.26, 0.0]),
            ("right_shoulder", 1, [-0.17, 0.15, 0.0]),
            ("right_elbow", 11, [0.0, -0.28, 0.0]),
            ("right_hand", 12, [0.0, -0.26, 0.0]),
        ];
        Self::from_table(&spec)
    }

    /// The preset skeleton with `joints` joints.
    pub fn for_joint_count(joints: usize) -> Result<Self> {
        match joints {
            22 => Ok(Self::body22()),
            14 => Ok(Self::tiny()),
            n => Err(Error::Config(format!("no preset skeleton with {n} joints"))),
        }
    }

    fn from_table(spec: &[(&str, i32, [f64; 3])]) -> Self {
        Skeleton {
            joints: spec
                .iter()
                .map(|(name, parent, offset)| Joint {
                    name: (*name).to_string(),
                    parent: usize::try_from(*parent).ok(),
                    offset: *offset,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (a - b).abs().max() < tol
    }

    #[test]
    fn rot6d_identity_and_scale() {
        let m = Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).to_matrix().unwrap();
        assert!(close(&m, &Mat3::identity(), 1e-12));
        let m = Rotation6D([2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).to_matrix().unwrap();
        assert!(close(&m, &Mat3::identity(), 1e-12));
    }

    #[test]
    fn rot6d_permuted_axes() {
        let m = Rotation6D([0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).to_matrix().unwrap();
        let expected = Mat3::from_columns(&[
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
        ]);
        assert!(close(&m, &expected, 1e-12));
    }

    #[test]
    fn rot6d_degenerate() {
        assert!(matches!(
            Rotation6D([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).to_matrix(),
            Err(Error::DegenerateRotation)
        ));
        assert!(matches!(
            Rotation6D([0.0; 6]).to_matrix(),
            Err(Error::DegenerateRotation)
        ));
    }

    #[test]
    fn matrix_to_rot6d_reads_columns() {
        assert_eq!(
            Rotation6D::from_matrix(&Mat3::identity()).unwrap(),
            Rotation6D::IDENTITY
        );
        let yaw = axis_angle(&Vec3::y(), std::f64::consts::FRAC_PI_2);
        let r = Rotation6D::from_matrix(&yaw).unwrap();
        assert_eq!(r.0[0], yaw[(0, 0)]);
        assert_eq!(r.0[5], yaw[(2, 1)]);
        let mut bad = Mat3::identity();
        bad[(0, 0)] = 1.1;
        assert!(matches!(
            Rotation6D::from_matrix(&bad),
            Err(Error::NotARotation(_))
        ));
    }

    #[test]
    fn root_relative_examples() {
        let root = RootTransform::default();
        let p = Vec3::new(1.0, 1.0, 1.0);
        assert_eq!(to_root_relative(&p, &root), p);

        let root = RootTransform::new(Vec2::new(2.0, 0.0), Vec2::new(0.0, 1.0));
        let l = to_root_relative(&Vec3::new(2.0, 0.0, 5.0), &root);
        assert!((l - Vec3::new(0.0, 0.0, 5.0)).norm() < 1e-12);

        let root = RootTransform::new(Vec2::zeros(), Vec2::new(1.0, 0.0));
        let l = to_root_relative(&Vec3::new(1.0, 0.0, 0.0), &root);
        assert!((l - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn root_delta_examples() {
        let a = RootTransform::new(Vec2::new(0.3, -1.0), Vec2::new(0.6, 0.8));
        let (p, d) = root_delta(&a, &a);
        assert!(p.norm() < 1e-12);
        assert!((d - Vec2::new(0.0, 1.0)).norm() < 1e-12);

        let ahead = RootTransform::new(a.position + a.forward, a.forward);
        let (p, d) = root_delta(&a, &ahead);
        assert!((p - Vec2::new(0.0, 1.0)).norm() < 1e-12);
        assert!((d - Vec2::new(0.0, 1.0)).norm() < 1e-12);

        let prev = RootTransform::default();
        let cur = RootTransform::new(Vec2::zeros(), Vec2::new(1.0, 0.0));
        let (p, d) = root_delta(&prev, &cur);
        assert!(p.norm() < 1e-12);
        assert!((d - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn skeleton_presets_are_valid_trees() {
        let b = Skeleton::body22();
        b.validate().unwrap();
        assert_eq!(b.len(), 22);
        assert_eq!(b.key_joint(KeyJoint::LeftHand), 20);
        let t = Skeleton::tiny();
        t.validate().unwrap();
        assert_eq!(t.key_joint(KeyJoint::RightFoot), 7);
        assert_eq!(t.chain(5, 7), Some(vec![5, 6, 7]));
        assert_eq!(b.chain(16, 20), Some(vec![16, 18, 20]));
        assert_eq!(b.chain(20, 16), None);
    }

    #[test]
    fn skeleton_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sk.json");
        let sk = Skeleton::body22();
        sk.save(&path).unwrap();
        assert_eq!(Skeleton::load(&path).unwrap(), sk);
    }

    fn arb_rotation() -> impl Strategy<Value = Mat3> {
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -std::f64::consts::PI..std::f64::consts::PI,
        )
            .prop_filter("axis", |(x, y, z, _)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z, a)| axis_angle(&Vec3::new(x, y, z), a))
    }

    proptest! {
        #[test]
        fn rot6d_decoding_is_orthonormal(v in prop::array::uniform6(-5.0f64..5.0)) {
            if let Ok(m) = Rotation6D(v).to_matrix() {
                prop_assert!(close(&(m.transpose() * m), &Mat3::identity(), 1e-6));
                prop_assert!((m.determinant() - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn rot6d_round_trip(r in arb_rotation()) {
            let six = Rotation6D::from_matrix(&r).unwrap();
            let back = six.to_matrix().unwrap();
            prop_assert!(close(&back, &r, 1e-6));
            let again = Rotation6D::from_matrix(&back).unwrap();
            for k in 0..6 {
                prop_assert!((again.0[k] - six.0[k]).abs() < 1e-6);
            }
        }

        #[test]
        fn root_relative_inverts(px in -5.0f64..5.0, pz in -5.0f64..5.0, yaw in -3.2f64..3.2,
                                 x in -10.0f64..10.0, y in -2.0f64..2.0, z in -10.0f64..10.0) {
            let root = RootTransform::from_yaw(Vec2::new(px, pz), yaw);
            let p = Vec3::new(x, y, z);
            let back = root.to_world(&root.to_local(&p));
            prop_assert!((back - p).norm() < 1e-9);
            let (dp, dd) = root_delta(&root, &root);
            prop_assert!(dp.norm() < 1e-9);
            prop_assert!((dd - Vec2::new(0.0, 1.0)).norm() < 1e-9);
        }

        #[test]
        fn delta_compose_recovers(yaw_a in -3.2f64..3.2, yaw_b in -3.2f64..3.2,
                                  x in -4.0f64..4.0, z in -4.0f64..4.0) {
            let a = RootTransform::from_yaw(Vec2::new(1.0, -2.0), yaw_a);
            let b = RootTransform::from_yaw(Vec2::new(x, z), yaw_b);
            let (p, d) = a.delta_to(&b);
            let c = a.compose(&p, &d);
            prop_assert!((c.position - b.position).norm() < 1e-9);
            prop_assert!((c.forward - b.forward).norm() < 1e-9);
        }
    }
}
