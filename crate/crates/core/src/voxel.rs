//! Scene objects built from oriented boxes and their 8x8x8 occupancy
//! encoding.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{axis_angle, Mat3, RootTransform, Vec2, Vec3};
use crate::state::Goal;

pub const GRID_RES: usize = 8;
pub const GRID_CELLS: usize = GRID_RES * GRID_RES * GRID_RES;
pub const GRID_FLAT_LEN: usize = GRID_CELLS * 4;
const SUBSAMPLES: usize = 4;
const BOUNDS_MARGIN: f64 = 0.05;

fn yaw_rot(yaw: f64) -> Mat3 {
    axis_angle(&Vec3::y(), yaw)
}

/// Rigid transform `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn then(&self, next: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: next.rotation * self.rotation,
            translation: next.rotation * self.translation + next.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// World-to-root transform.
    pub fn from_root_inverse(root: &RootTransform) -> Self {
        let r = root.rotation().transpose();
        RigidTransform {
            rotation: r,
            translation: -(r * root.position3()),
        }
    }
}

/// Object placement in the world: translation plus yaw about +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pose {
    pub position: Vec3,
    #[serde(default)]
    pub yaw: f64,
}

impl Pose {
    pub fn transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: yaw_rot(self.yaw),
            translation: self.position,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    pub half_extents: Vec3,
    #[serde(default)]
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(center: Vec3, half_extents: Vec3) -> Self {
        Self {
            center,
            half_extents,
            yaw: 0.0,
        }
    }

    fn to_box_frame(&self, p: &Vec3) -> Vec3 {
        yaw_rot(-self.yaw) * (p - self.center)
    }

    fn from_box_frame(&self, p: &Vec3) -> Vec3 {
        yaw_rot(self.yaw) * p + self.center
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let l = self.to_box_frame(p);
        let h = &self.half_extents;
        l.x.abs() <= h.x && l.y.abs() <= h.y && l.z.abs() <= h.z
    }

    /// Closest point of the box volume (equals `p` when inside).
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let l = self.to_box_frame(p);
        let h = &self.half_extents;
        let c = Vec3::new(
            l.x.clamp(-h.x, h.x),
            l.y.clamp(-h.y, h.y),
            l.z.clamp(-h.z, h.z),
        );
        self.from_box_frame(&c)
    }

    /// Closest point on the box boundary, for points inside or outside.
    pub fn nearest_surface_point(&self, p: &Vec3) -> Vec3 {
        let l = self.to_box_frame(p);
        let h = &self.half_extents;
        let inside = l.x.abs() <= h.x && l.y.abs() <= h.y && l.z.abs() <= h.z;
        if !inside {
            return self.closest_point(p);
        }
        let gaps = [h.x - l.x.abs(), h.y - l.y.abs(), h.z - l.z.abs()];
        let axis = (0..3)
            .min_by(|&a, &b| gaps[a].total_cmp(&gaps[b]))
            .unwrap_or(0);
        let mut q = l;
        q[axis] = if l[axis] >= 0.0 { h[axis] } else { -h[axis] };
        self.from_box_frame(&q)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            *c = self.from_box_frame(&s);
        }
        out
    }

    pub fn transformed(&self, pose: &Pose) -> OrientedBox {
        OrientedBox {
            center: pose.transform().apply(&self.center),
            half_extents: self.half_extents,
            yaw: self.yaw + pose.yaw,
        }
    }

    /// Does a sphere overlap the box volume?
    pub fn overlaps_sphere(&self, center: &Vec3, radius: f64) -> bool {
        (self.closest_point(center) - center).norm() < radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) / 2.0
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = pts.into_iter();
        let first = *it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min = min.inf(p);
            max = max.sup(p);
        }
        Some(Aabb { min, max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub pose: Pose,
    /// Boxes in the object frame.
    pub boxes: Vec<OrientedBox>,
    /// Labeled goals in the object frame.
    #[serde(default)]
    pub goals: Vec<Goal>,
}

impl SceneObject {
    pub fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() {
            return Err(Error::EmptyObject);
        }
        if self
            .boxes
            .iter()
            .any(|b| b.half_extents.iter().any(|h| !(*h > 0.0)))
        {
            return Err(Error::Config(format!(
                "object `{}` has a box with non-positive extent",
                self.id
            )));
        }
        Ok(())
    }

    /// Tight bounds in the object frame.
    pub fn local_bounds(&self) -> Result<Aabb> {
        let corners: Vec<Vec3> = self.boxes.iter().flat_map(|b| b.corners()).collect();
        Aabb::from_points(&corners).ok_or(Error::EmptyObject)
    }

    /// Center of the tight bounds, object frame.
    pub fn local_center(&self) -> Result<Vec3> {
        Ok(self.local_bounds()?.center())
    }

    pub fn world_boxes(&self) -> Vec<OrientedBox> {
        self.boxes.iter().map(|b| b.transformed(&self.pose)).collect()
    }

    pub fn world_bounds(&self) -> Result<Aabb> {
        let corners: Vec<Vec3> = self.world_boxes().iter().flat_map(|b| b.corners()).collect();
        Aabb::from_points(&corners).ok_or(Error::EmptyObject)
    }

    /// Object-center frame to world.
    pub fn center_to_world(&self) -> Result<RigidTransform> {
        let c = self.local_center()?;
        let shift = RigidTransform {
            rotation: Mat3::identity(),
            translation: c,
        };
        Ok(shift.then(&self.pose.transform()))
    }

    /// Object-center frame to the given root frame.
    pub fn center_to_root(&self, root: &RootTransform) -> Result<RigidTransform> {
        Ok(self
            .center_to_world()?
            .then(&RigidTransform::from_root_inverse(root)))
    }

    pub fn local_to_world(&self, p: &Vec3) -> Vec3 {
        self.pose.transform().apply(p)
    }

    pub fn goal_to_world(&self, g: &Goal) -> Goal {
        let t = self.pose.transform();
        Goal::new(t.apply(&g.position), t.rotation * g.direction, g.action)
    }

    pub fn contains_world(&self, p: &Vec3) -> bool {
        self.world_boxes().iter().any(|b| b.contains(p))
    }

    /// Nearest point on any box boundary and its distance.
    pub fn nearest_surface_point(&self, p: &Vec3) -> Option<(Vec3, f64)> {
        self.world_boxes()
            .iter()
            .map(|b| {
                let q = b.nearest_surface_point(p);
                (q, (q - p).norm())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Scale the object about its floor-level center (keeps it on the floor).
    /// Where an object-frame point lands when the object is scaled about
    /// the center of its footprint on the floor.
    pub fn scale_point(&self, scale: &Vec3, p: &Vec3) -> Vec3 {
        let anchor = match self.local_bounds() {
            Ok(b) => Vec3::new(b.center().x, b.min.y, b.center().z),
            Err(_) => Vec3::zeros(),
        };
        anchor + (p - anchor).component_mul(scale)
    }

    pub fn scaled(&self, scale: &Vec3) -> SceneObject {
        let sp = |p: &Vec3| self.scale_point(scale, p);
        let mut out = self.clone();
        for b in &mut out.boxes {
            // oriented boxes keep their yaw; scale along their own axes
            let r = yaw_rot(b.yaw);
            let local_scale = (r.transpose() * scale).abs();
            b.center = sp(&b.center);
            b.half_extents = b.half_extents.component_mul(&local_scale);
        }
        for g in &mut out.goals {
            g.position = sp(&g.position);
        }
        out
    }

    pub fn footprint_corners(&self) -> Vec<Vec2> {
        self.world_boxes()
            .iter()
            .flat_map(|b| b.corners())
            .map(|c| Vec2::new(c.x, c.z))
            .collect()
    }
}

/// 8x8x8 grid of (cell center, occupancy). Cells are stored with x varying
/// fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub centers: Vec<Vec3>,
    pub occupancy: Vec<f64>,
    /// Expanded bounds relative to the object center.
    pub bounds: Aabb,
}

pub fn cell_index(x: usize, y: usize, z: usize) -> usize {
    x + GRID_RES * (y + GRID_RES * z)
}

impl VoxelGrid {
    /// All-zero grid, used when a clip has no interaction object.
    pub fn empty() -> Self {
        VoxelGrid {
            centers: vec![Vec3::zeros(); GRID_CELLS],
            occupancy: vec![0.0; GRID_CELLS],
            bounds: Aabb {
                min: Vec3::zeros(),
                max: Vec3::zeros(),
            },
        }
    }

    pub fn encode_relative(&self, frame: &RigidTransform) -> VoxelGrid {
        VoxelGrid {
            centers: self.centers.iter().map(|c| frame.apply(c)).collect(),
            occupancy: self.occupancy.clone(),
            bounds: self.bounds,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(GRID_FLAT_LEN);
        self.flatten_into(&mut out);
        out
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (c, o) in self.centers.iter().zip(&self.occupancy) {
            out.extend_from_slice(&[c.x, c.y, c.z, *o]);
        }
    }
}

pub fn flatten_grid(grid: &VoxelGrid) -> Vec<f64> {
    grid.flatten()
}

/// Occupancy grid of an object in its center-relative frame. Bounds are
/// the tight box expanded by 5%; each cell's occupancy is the fraction of a
/// 4x4x4 sub-lattice inside any box.
pub fn voxelize_object(obj: &SceneObject) -> Result<VoxelGrid> {
    obj.validate()?;
    let tight = obj.local_bounds()?;
    let center = tight.center();
    let half = tight.extent() * (0.5 * (1.0 + BOUNDS_MARGIN));
    let min = center - half;
    let cell = half * (2.0 / GRID_RES as f64);
    let mut centers = Vec::with_capacity(GRID_CELLS);
    let mut occupancy = Vec::with_capacity(GRID_CELLS);
    let total = (SUBSAMPLES * SUBSAMPLES * SUBSAMPLES) as f64;
    for z in 0..GRID_RES {
        for y in 0..GRID_RES {
            for x in 0..GRID_RES {
                let corner = min + Vec3::new(x as f64, y as f64, z as f64).component_mul(&cell);
                let mut inside = 0usize;
                for sz in 0..SUBSAMPLES {
                    for sy in 0..SUBSAMPLES {
                        for sx in 0..SUBSAMPLES {
                            let frac = Vec3::new(sx as f64 + 0.5, sy as f64 + 0.5, sz as f64 + 0.5)
                                / SUBSAMPLES as f64;
                            let p = corner + frac.component_mul(&cell);
                            if obj.boxes.iter().any(|b| b.contains(&p)) {
                                inside += 1;
                            }
                        }
                    }
                }
                centers.push(corner + cell * 0.5 - center);
                occupancy.push(inside as f64 / total);
            }
        }
    }
    Ok(VoxelGrid {
        centers,
        occupancy,
        bounds: Aabb {
            min: -half,
            max: half,
        },
    })
}

/// A voxelized object, cached once and re-expressed per frame.
#[derive(Debug, Clone)]
pub struct ObjectVoxels {
    pub grid: VoxelGrid,
    center_to_world: RigidTransform,
}

impl ObjectVoxels {
    pub fn new(obj: &SceneObject) -> Result<Self> {
        Ok(Self {
            grid: voxelize_object(obj)?,
            center_to_world: obj.center_to_world()?,
        })
    }

    pub fn in_root_frame(&self, root: &RootTransform) -> VoxelGrid {
        let t = self
            .center_to_world
            .then(&RigidTransform::from_root_inverse(root));
        self.grid.encode_relative(&t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorRect {
    /// (x, z) lower corner.
    pub min: Vec2,
    /// (x, z) upper corner.
    pub max: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub floor: FloorRect,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn object(&self, id: &str) -> Result<&SceneObject> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| Error::UnknownObject(id.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for o in &self.objects {
            o.validate()?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: Scene = serde_json::from_str(&text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box_object() -> SceneObject {
        SceneObject {
            id: "box".into(),
            category: "box".into(),
            pose: Pose::default(),
            boxes: vec![OrientedBox::new(Vec3::zeros(), Vec3::new(0.5, 0.5, 0.5))],
            goals: vec![],
        }
    }

    #[test]
    fn empty_object_is_rejected() {
        let mut o = unit_box_object();
        o.boxes.clear();
        assert!(matches!(voxelize_object(&o), Err(Error::EmptyObject)));
    }

    #[test]
    fn fully_covered_interior_cells() {
        let g = voxelize_object(&unit_box_object()).unwrap();
        for z in 1..7 {
            for y in 1..7 {
                for x in 1..7 {
                    assert_eq!(g.occupancy[cell_index(x, y, z)], 1.0);
                }
            }
        }
        assert!(g.occupancy.iter().all(|o| (0.0..=1.0).contains(o)));
    }

    /// Dense 32^3 sampling per cell, independent of the 4^3 lattice.
    fn dense_occupancy(obj: &SceneObject, g: &VoxelGrid, idx: usize) -> f64 {
        let cell = g.bounds.extent() / GRID_RES as f64;
        let center = obj.local_center().unwrap();
        let lo = g.centers[idx] + center - cell / 2.0;
        let n = 32;
        let mut inside = 0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let f = Vec3::new(a as f64 + 0.5, b as f64 + 0.5, c as f64 + 0.5) / n as f64;
                    if obj.boxes.iter().any(|bx| bx.contains(&(lo + f.component_mul(&cell)))) {
                        inside += 1;
                    }
                }
            }
        }
        inside as f64 / (n * n * n) as f64
    }

    #[test]
    fn half_covered_cells_match_dense_oracle() {
        // A thin wide anchor box fixes the bounds; the probe box then ends
        // in the middle of a column of cells along x.
        let base = unit_box_object();
        let g0 = voxelize_object(&base).unwrap();
        let cell_x = g0.bounds.extent().x / 8.0;
        let x_cut = g0.bounds.min.x + 3.5 * cell_x;
        let mut obj = base.clone();
        obj.boxes = vec![
            OrientedBox::new(Vec3::new(0.0, -0.5 + 0.001, 0.0), Vec3::new(0.5, 0.001, 0.5)),
            OrientedBox::new(Vec3::new(0.0, 0.5 - 0.001, 0.0), Vec3::new(0.5, 0.001, 0.5)),
            OrientedBox::new(
                Vec3::new((x_cut - 0.5) / 2.0, 0.0, 0.0),
                Vec3::new((x_cut + 0.5) / 2.0, 0.499, 0.499),
            ),
        ];
        let g = voxelize_object(&obj).unwrap();
        for z in 2..6 {
            for y in 2..6 {
                let idx = cell_index(3, y, z);
                let dense = dense_occupancy(&obj, &g, idx);
                assert!((dense - 0.5).abs() < 0.02, "dense {dense}");
                assert!((g.occupancy[idx] - 0.5).abs() <= 0.13);
                assert!((g.occupancy[idx] - dense).abs() <= 1.0 / 64.0 + 0.02);
            }
        }
    }

    #[test]
    fn encode_relative_examples() {
        let obj = unit_box_object();
        let g = voxelize_object(&obj).unwrap();
        assert_eq!(g.encode_relative(&RigidTransform::identity()), g);

        let root = RootTransform::new(Vec2::new(0.0, -1.0), Vec2::new(0.0, 1.0));
        let rel = g.encode_relative(&obj.center_to_root(&root).unwrap());
        for (a, b) in rel.centers.iter().zip(&g.centers) {
            assert!((a - b - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        }

        let root = RootTransform::new(Vec2::zeros(), Vec2::new(1.0, 0.0));
        let t = obj.center_to_root(&root).unwrap();
        let rel = g.encode_relative(&t);
        assert_eq!(rel.occupancy, g.occupancy);
        for (a, b) in rel.centers.iter().zip(&g.centers) {
            let expect = crate::kinematics::to_root_relative(b, &root);
            assert!((a - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn flatten_layout() {
        let g = VoxelGrid::empty();
        let v = g.flatten();
        assert_eq!(v.len(), GRID_FLAT_LEN);
        assert!(v.iter().skip(3).step_by(4).all(|&o| o == 0.0));
        let g = voxelize_object(&unit_box_object()).unwrap();
        let v = flatten_grid(&g);
        assert_eq!(v.len(), 2048);
        let c = g.centers[0];
        assert_eq!(&v[0..4], &[c.x, c.y, c.z, g.occupancy[0]]);
        let c = g.centers[cell_index(1, 0, 0)];
        assert_eq!(v[4], c.x);
    }

    #[test]
    fn voxelize_is_deterministic() {
        let o = unit_box_object();
        assert_eq!(voxelize_object(&o).unwrap(), voxelize_object(&o).unwrap());
    }

    #[test]
    fn surface_points() {
        let b = OrientedBox::new(Vec3::new(0.0, 0.2, 0.0), Vec3::new(0.3, 0.2, 0.3));
        // above the top face
        let q = b.nearest_surface_point(&Vec3::new(0.1, 0.42, 0.0));
        assert!((q - Vec3::new(0.1, 0.4, 0.0)).norm() < 1e-12);
        // inside, closest to the top face
        let q = b.nearest_surface_point(&Vec3::new(0.0, 0.35, 0.0));
        assert!((q - Vec3::new(0.0, 0.4, 0.0)).norm() < 1e-12);
        let rotated = OrientedBox { yaw: 0.7, ..b };
        let p = Vec3::new(0.05, 0.5, -0.02);
        let q = rotated.nearest_surface_point(&p);
        assert!((q.y - 0.4).abs() < 1e-12 && (q.x - p.x).abs() < 1e-12);
    }

    #[test]
    fn scene_json_round_trip() {
        let scene = Scene {
            floor: FloorRect {
                min: Vec2::new(-3.0, -3.0),
                max: Vec2::new(3.0, 3.0),
            },
            objects: vec![unit_box_object()],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scene.json");
        scene.save(&p).unwrap();
        assert_eq!(Scene::load(&p).unwrap(), scene);
    }

    proptest! {
        #[test]
        fn occupancy_is_monotone_in_box_size(hx in 0.1f64..0.6, grow in 0.0f64..0.3, yaw in 0.0f64..1.5) {
            // a fixed frame box pins the bounds so the grids are comparable
            let thin = |h: f64| OrientedBox { center: Vec3::zeros(), half_extents: Vec3::new(h, 0.3, 0.2), yaw };
            let mk = |h: f64| SceneObject {
                id: "p".into(), category: String::new(), pose: Pose::default(),
                boxes: vec![OrientedBox { half_extents: Vec3::new(1.0, 1.0, 1.0) * 1e-3, center: Vec3::new(0.999, 0.999, 0.999), yaw: 0.0 },
                            OrientedBox { half_extents: Vec3::new(1.0, 1.0, 1.0) * 1e-3, center: Vec3::new(-0.999, -0.999, -0.999), yaw: 0.0 },
                            thin(h)],
                goals: vec![],
            };
            let a = voxelize_object(&mk(hx)).unwrap();
            let b = voxelize_object(&mk(hx + grow)).unwrap();
            prop_assert_eq!(a.bounds, b.bounds);
            for (x, y) in a.occupancy.iter().zip(&b.occupancy) {
                prop_assert!(y >= x);
            }
        }

        #[test]
        fn encode_relative_is_rigid(px in -3.0f64..3.0, pz in -3.0f64..3.0, yaw in -3.2f64..3.2, oyaw in -3.2f64..3.2) {
            let mut obj = unit_box_object();
            obj.pose = Pose { position: Vec3::new(1.0, 0.0, 2.0), yaw: oyaw };
            let g = voxelize_object(&obj).unwrap();
            let root = RootTransform::from_yaw(Vec2::new(px, pz), yaw);
            let rel = g.encode_relative(&obj.center_to_root(&root).unwrap());
            for (i, j) in [(0usize, 511usize), (7, 100), (63, 300), (5, 6)] {
                let d0 = (g.centers[i] - g.centers[j]).norm();
                let d1 = (rel.centers[i] - rel.centers[j]).norm();
                prop_assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }
}
