//! Parametric furniture with labeled interaction goals. Every family is
//! built in its object frame: floor at y = 0, front facing +z.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Vec3;
use crate::state::{Action, Goal};
use crate::voxel::{OrientedBox, Pose, SceneObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectFamily {
    Chair,
    Sofa,
    LSofa,
    Table,
    Bed,
}

impl ObjectFamily {
    pub const ALL: [ObjectFamily; 5] = [
        ObjectFamily::Chair,
        ObjectFamily::Sofa,
        ObjectFamily::LSofa,
        ObjectFamily::Table,
        ObjectFamily::Bed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectFamily::Chair => "chair",
            ObjectFamily::Sofa => "sofa",
            ObjectFamily::LSofa => "l_sofa",
            ObjectFamily::Table => "table",
            ObjectFamily::Bed => "bed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

fn b(center: [f64; 3], half: [f64; 3]) -> OrientedBox {
    OrientedBox::new(Vec3::from(center), Vec3::from(half))
}

fn g(position: [f64; 3], direction: [f64; 3], action: Action) -> Goal {
    Goal::new(Vec3::from(position), Vec3::from(direction), action)
}

/// The unscaled member of a family.
pub fn base_object(family: ObjectFamily) -> SceneObject {
    use Action::{LieDown, Sit};
    let (boxes, goals) = match family {
        ObjectFamily::Chair => (
            vec![
                b([0.0, 0.225, 0.0], [0.25, 0.225, 0.25]),
                b([0.0, 0.675, -0.22], [0.25, 0.225, 0.03]),
            ],
            vec![g([0.0, 0.45, 0.03], [0.0, 0.0, 1.0], Sit)],
        ),
        ObjectFamily::Sofa => (
            vec![
                b([0.0, 0.21, 0.0], [0.95, 0.21, 0.4]),
                b([0.0, 0.62, -0.34], [0.95, 0.2, 0.06]),
                b([0.9, 0.32, 0.0], [0.05, 0.11, 0.4]),
                b([-0.9, 0.32, 0.0], [0.05, 0.11, 0.4]),
            ],
            vec![
                g([0.42, 0.42, 0.02], [0.0, 0.0, 1.0], Sit),
                g([-0.42, 0.42, 0.02], [0.0, 0.0, 1.0], Sit),
            ],
        ),
        ObjectFamily::LSofa => (
            vec![
                b([0.2, 0.21, 0.0], [0.8, 0.21, 0.4]),
                b([0.2, 0.62, -0.34], [0.8, 0.2, 0.06]),
                b([-1.0, 0.21, 0.4], [0.4, 0.21, 0.8]),
                b([-1.34, 0.62, 0.4], [0.06, 0.2, 0.8]),
            ],
            vec![
                g([0.5, 0.42, 0.02], [0.0, 0.0, 1.0], Sit),
                g([-0.15, 0.42, 0.02], [0.0, 0.0, 1.0], Sit),
                g([-1.02, 0.42, 0.7], [1.0, 0.0, 0.0], Sit),
            ],
        ),
        ObjectFamily::Table => (
            vec![
                b([0.0, 0.72, 0.0], [0.6, 0.03, 0.4]),
                b([0.55, 0.345, 0.35], [0.03, 0.345, 0.03]),
                b([-0.55, 0.345, 0.35], [0.03, 0.345, 0.03]),
                b([0.55, 0.345, -0.35], [0.03, 0.345, 0.03]),
                b([-0.55, 0.345, -0.35], [0.03, 0.345, 0.03]),
            ],
            vec![
                g([0.0, 0.75, 0.3], [0.0, 0.0, 1.0], Sit),
                g([0.0, 0.75, -0.3], [0.0, 0.0, -1.0], Sit),
                g([0.5, 0.75, 0.0], [1.0, 0.0, 0.0], Sit),
                g([-0.5, 0.75, 0.0], [-1.0, 0.0, 0.0], Sit),
            ],
        ),
        ObjectFamily::Bed => (
            vec![
                b([0.0, 0.25, 0.0], [0.7, 0.25, 1.0]),
                b([0.0, 0.55, -1.03], [0.7, 0.3, 0.03]),
            ],
            vec![
                g([0.0, 0.5, -0.25], [0.0, 0.0, 1.0], LieDown),
                g([0.58, 0.5, 0.3], [1.0, 0.0, 0.0], Sit),
                g([-0.58, 0.5, 0.3], [-1.0, 0.0, 0.0], Sit),
            ],
        ),
    };
    SceneObject {
        id: family.name().to_string(),
        category: family.name().to_string(),
        pose: Pose::default(),
        boxes,
        goals,
    }
}

/// A family member with independent per-axis scales drawn from
/// `[1 - spread, 1 + spread]`.
pub fn random_object<R: Rng + ?Sized>(
    family: ObjectFamily,
    id: impl Into<String>,
    spread: f64,
    rng: &mut R,
) -> SceneObject {
    let mut s = || 1.0 + rng.random_range(-spread..=spread);
    let scale = Vec3::new(s(), s(), s());
    let mut obj = base_object(family).scaled(&scale);
    obj.id = id.into();
    obj
}

/// Labeled goals of an object that request `action`.
pub fn goals_for(obj: &SceneObject, action: Action) -> Vec<(usize, Goal)> {
    obj.goals
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, g)| g.action == action)
        .collect()
}

pub fn write_labeled_objects(path: impl AsRef<std::path::Path>, objects: &[SceneObject]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string_pretty(objects)?).map_err(|e| Error::io(path, e))
}

pub fn read_labeled_objects(path: impl AsRef<std::path::Path>) -> Result<Vec<SceneObject>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let objects: Vec<SceneObject> = serde_json::from_str(&text)?;
    for o in &objects {
        o.validate()?;
    }
    Ok(objects)
}
