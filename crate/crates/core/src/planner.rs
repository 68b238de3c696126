//! Obstacle-free approach paths: an occupancy grid over the floor, A* over
//! 8-connected cells, string-pulling into waypoints, and the rule that turns
//! waypoints into a sequence of sub-goals.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{RootTransform, Vec2, Vec3};
use crate::state::{Action, Goal};
use crate::voxel::Scene;

pub const DEFAULT_CELL_SIZE: f64 = 0.25;
pub const DEFAULT_INFLATION: f64 = 0.3;
/// A waypoint counts as reached when the root is this close (m).
pub const WAYPOINT_RADIUS: f64 = 0.4;

/// Exact path cost `straight + diagonal * sqrt(2)` in cell units. Keeping
/// the two counts separate makes comparisons exact, so costs from different
/// searches can be compared with `==`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Cost {
    pub straight: u32,
    pub diagonal: u32,
}

impl Cost {
    pub const STRAIGHT: Cost = Cost { straight: 1, diagonal: 0 };
    pub const DIAGONAL: Cost = Cost { straight: 0, diagonal: 1 };

    pub fn value(self) -> f64 {
        f64::from(self.straight) + f64::from(self.diagonal) * std::f64::consts::SQRT_2
    }

    /// Octile distance between two cells.
    pub fn octile(a: (usize, usize), b: (usize, usize)) -> Cost {
        let dx = a.0.abs_diff(b.0) as u32;
        let dy = a.1.abs_diff(b.1) as u32;
        Cost {
            straight: dx.max(dy) - dx.min(dy),
            diagonal: dx.min(dy),
        }
    }
}

impl std::ops::Add for Cost {
    type Output = Cost;
    fn add(self, o: Cost) -> Cost {
        Cost {
            straight: self.straight + o.straight,
            diagonal: self.diagonal + o.diagonal,
        }
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        // compare s1 - s2 against (d2 - d1) * sqrt(2) without rounding
        let ds = i64::from(self.straight) - i64::from(other.straight);
        let dd = i64::from(other.diagonal) - i64::from(self.diagonal);
        match (ds.signum(), dd.signum()) {
            (0, 0) => Ordering::Equal,
            (a, b) if a >= 0 && b <= 0 => Ordering::Greater,
            (a, b) if a <= 0 && b >= 0 => Ordering::Less,
            (1, 1) => (ds * ds).cmp(&(2 * dd * dd)),
            _ => (2 * dd * dd).cmp(&(ds * ds)),
        }
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavGrid {
    pub cell_size: f64,
    /// World (x, z) of the lower corner of cell (0, 0).
    pub origin: Vec2,
    pub width: usize,
    pub height: usize,
    pub inflation: f64,
    /// Row-major: index = row * width + col, rows along +z.
    pub blocked: Vec<bool>,
}

impl NavGrid {
    /// Unobstructed grid, mostly for tests.
    pub fn open(width: usize, height: usize, cell_size: f64) -> Self {
        Self {
            cell_size,
            origin: Vec2::zeros(),
            width,
            height,
            inflation: 0.0,
            blocked: vec![false; width * height],
        }
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn is_blocked(&self, col: usize, row: usize) -> bool {
        self.blocked[self.index(col, row)]
    }

    pub fn set_blocked(&mut self, col: usize, row: usize, b: bool) {
        let i = self.index(col, row);
        self.blocked[i] = b;
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        self.origin + Vec2::new(col as f64 + 0.5, row as f64 + 0.5) * self.cell_size
    }

    /// Cell containing a world (x, z) point, clamped to the grid.
    pub fn cell_of(&self, p: &Vec2) -> (usize, usize) {
        let rel = (p - self.origin) / self.cell_size;
        let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        (clamp(rel.x, self.width), clamp(rel.y, self.height))
    }

    fn cell_rect(&self, col: usize, row: usize) -> [Vec2; 4] {
        let lo = self.origin + Vec2::new(col as f64, row as f64) * self.cell_size;
        let s = self.cell_size;
        [lo, lo + Vec2::new(s, 0.0), lo + Vec2::new(s, s), lo + Vec2::new(0.0, s)]
    }

    /// Free cell nearest to `p` (by distance to the cell center; ties go to
    /// the smaller index).
    pub fn nearest_free(&self, p: &Vec2) -> Option<(usize, usize)> {
        (0..self.blocked.len())
            .filter(|i| !self.blocked[*i])
            .map(|i| {
                let (c, r) = self.coords(i);
                ((self.cell_center(c, r) - p).norm_squared(), i)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, i)| self.coords(i))
    }

    /// True when no blocked cell touches the segment (closed cells, so
    /// grazing a blocked corner counts as touching).
    pub fn line_of_sight(&self, a: &Vec2, b: &Vec2) -> bool {
        let (c0, r0) = self.cell_of(&a.inf(b));
        let (c1, r1) = self.cell_of(&a.sup(b));
        for row in r0.saturating_sub(1)..=(r1 + 1).min(self.height - 1) {
            for col in c0.saturating_sub(1)..=(c1 + 1).min(self.width - 1) {
                if self.is_blocked(col, row) {
                    let [lo, _, hi, _] = self.cell_rect(col, row);
                    if segment_hits_rect(a, b, &lo, &hi) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = (usize, Cost)> + '_ {
        let (c, r) = self.coords(idx);
        const STEPS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        STEPS.iter().filter_map(move |&(dc, dr)| {
            let nc = c as i64 + dc;
            let nr = r as i64 + dr;
            if nc < 0 || nr < 0 || nc >= self.width as i64 || nr >= self.height as i64 {
                return None;
            }
            let (nc, nr) = (nc as usize, nr as usize);
            if self.is_blocked(nc, nr) {
                return None;
            }
            if dc != 0 && dr != 0 {
                // no squeezing diagonally between two blocked cells' corners
                if self.is_blocked(nc, r) || self.is_blocked(c, nr) {
                    return None;
                }
                Some((self.index(nc, nr), Cost::DIAGONAL))
            } else {
                Some((self.index(nc, nr), Cost::STRAIGHT))
            }
        })
    }
}

fn segment_hits_rect(a: &Vec2, b: &Vec2, lo: &Vec2, hi: &Vec2) -> bool {
    // Liang-Barsky clipping on a closed rectangle
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        if d[k].abs() < 1e-15 {
            if a[k] < lo[k] || a[k] > hi[k] {
                return false;
            }
        } else {
            let mut ta = (lo[k] - a[k]) / d[k];
            let mut tb = (hi[k] - a[k]) / d[k];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

fn segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (a + ab * t - p).norm()
}

fn convex_overlap(a: &[Vec2], b: &[Vec2]) -> bool {
    // separating axis test over both polygons' edge normals
    for poly in [a, b] {
        for i in 0..poly.len() {
            let e = poly[(i + 1) % poly.len()] - poly[i];
            let n = Vec2::new(-e.y, e.x);
            let proj = |pts: &[Vec2]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let v = n.dot(p);
                    (lo.min(v), hi.max(v))
                })
            };
            let (a0, a1) = proj(a);
            let (b0, b1) = proj(b);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
    }
    true
}

/// Distance between two convex polygons (0 when they overlap).
fn convex_distance(a: &[Vec2], b: &[Vec2]) -> f64 {
    if convex_overlap(a, b) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        for v in p {
            for i in 0..q.len() {
                best = best.min(segment_distance(v, &q[i], &q[(i + 1) % q.len()]));
            }
        }
    }
    best
}

/// Blocks every cell within `inflation` of an object footprint.
pub fn build_nav_grid(scene: &Scene, cell_size: f64, inflation: f64) -> Result<NavGrid> {
    let extent = scene.floor.max - scene.floor.min;
    if !(extent.x > 0.0 && extent.y > 0.0) || !(cell_size > 0.0) {
        return Err(Error::DegenerateScene);
    }
    if !(inflation >= 0.0) {
        return Err(Error::Config(format!("inflation radius {inflation} must be >= 0")));
    }
    let width = (extent.x / cell_size - 1e-9).ceil().max(1.0) as usize;
    let height = (extent.y / cell_size - 1e-9).ceil().max(1.0) as usize;
    let mut grid = NavGrid {
        cell_size,
        origin: scene.floor.min,
        width,
        height,
        inflation,
        blocked: vec![false; width * height],
    };
    let footprints: Vec<[Vec2; 4]> = scene
        .objects
        .iter()
        .flat_map(|o| o.world_boxes())
        .map(|b| {
            let (s, c) = b.yaw.sin_cos();
            let ax = Vec2::new(c, -s) * b.half_extents.x;
            let az = Vec2::new(s, c) * b.half_extents.z;
            let ctr = Vec2::new(b.center.x, b.center.z);
            [ctr - ax - az, ctr + ax - az, ctr + ax + az, ctr - ax + az]
        })
        .collect();
    for row in 0..height {
        for col in 0..width {
            let rect = grid.cell_rect(col, row);
            if footprints.iter().any(|f| convex_distance(&rect, f) < inflation || convex_overlap(&rect, f)) {
                grid.set_blocked(col, row, true);
            }
        }
    }
    Ok(grid)
}

/// A* result: cells from start to goal and the exact path cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPath {
    pub cells: Vec<(usize, usize)>,
    pub cost: Cost,
}

pub fn a_star(grid: &NavGrid, start: (usize, usize), goal: (usize, usize)) -> Result<CellPath> {
    a_star_observed(grid, start, goal, |_, _, _| {})
}

/// A* that reports every expanded cell with its cost-so-far and heuristic,
/// so callers can check admissibility against an oracle.
pub fn a_star_observed(
    grid: &NavGrid,
    start: (usize, usize),
    goal: (usize, usize),
    mut on_expand: impl FnMut((usize, usize), Cost, Cost),
) -> Result<CellPath> {
    if start.0 >= grid.width || start.1 >= grid.height || goal.0 >= grid.width || goal.1 >= grid.height {
        return Err(Error::Config("cell outside the grid".into()));
    }
    if grid.is_blocked(start.0, start.1) {
        return Err(Error::BlockedStart);
    }
    if grid.is_blocked(goal.0, goal.1) {
        return Err(Error::Unreachable);
    }
    let n = grid.blocked.len();
    let (s, t) = (grid.index(start.0, start.1), grid.index(goal.0, goal.1));
    let mut g: Vec<Option<Cost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[s] = Some(Cost::default());
    open.push(Reverse((Cost::octile(start, goal), Cost::default(), s)));
    while let Some(Reverse((_, gc, idx))) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        on_expand(grid.coords(idx), gc, Cost::octile(grid.coords(idx), goal));
        if idx == t {
            let mut cells = vec![grid.coords(t)];
            let mut cur = t;
            while cur != s {
                cur = parent[cur];
                cells.push(grid.coords(cur));
            }
            cells.reverse();
            return Ok(CellPath { cells, cost: gc });
        }
        for (nb, step) in grid.neighbors(idx) {
            if closed[nb] {
                continue;
            }
            let cand = gc + step;
            if g[nb].is_none_or(|old| cand < old) {
                g[nb] = Some(cand);
                parent[nb] = idx;
                open.push(Reverse((cand + Cost::octile(grid.coords(nb), goal), cand, nb)));
            }
        }
    }
    Err(Error::Unreachable)
}

/// Ordered waypoints in world (x, z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavPath {
    pub waypoints: Vec<Vec2>,
    /// A* cost in meters.
    pub cost: f64,
}

impl NavPath {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// `{waypoints: [[x, z], ...], cost}` for viewers and reports.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "waypoints": self.waypoints.iter().map(|w| [w.x, w.y]).collect::<Vec<_>>(),
            "cost": self.cost,
        })
    }
}

/// Greedy string pulling: from each kept point jump to the farthest later
/// point still in line of sight.
pub fn simplify(points: &[Vec2], grid: &NavGrid) -> Vec<Vec2> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut i = 0;
    while i < points.len() - 1 {
        let mut j = points.len() - 1;
        while j > i + 1 && !grid.line_of_sight(&points[i], &points[j]) {
            j -= 1;
        }
        out.push(points[j]);
        i = j;
    }
    out
}

/// Plans from a world start to the free cell nearest a world goal.
pub fn plan(grid: &NavGrid, start: &Vec2, goal: &Vec2) -> Result<NavPath> {
    let sc = grid.cell_of(start);
    let gc = grid.nearest_free(goal).ok_or(Error::Unreachable)?;
    let path = a_star(grid, sc, gc)?;
    let mut points: Vec<Vec2> = path.cells.iter().map(|&(c, r)| grid.cell_center(c, r)).collect();
    points[0] = *start;
    if points.len() == 1 {
        points.push(grid.cell_center(gc.0, gc.1));
    }
    Ok(NavPath {
        waypoints: simplify(&points, grid),
        cost: path.cost.value() * grid.cell_size,
    })
}

/// A path whose only waypoints are the start and the goal.
pub fn direct_path(start: &Vec2, goal: &Vec2) -> NavPath {
    NavPath {
        waypoints: vec![*start, *goal],
        cost: (goal - start).norm(),
    }
}

/// Walks a path waypoint by waypoint, ending at the interaction goal.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgoalTracker {
    pub path: NavPath,
    /// Index of the waypoint currently being approached.
    pub cursor: usize,
    pub target: Goal,
}

impl SubgoalTracker {
    pub fn new(path: NavPath, target: Goal) -> Self {
        Self {
            cursor: 1.min(path.waypoints.len().saturating_sub(1)),
            path,
            target,
        }
    }

    fn last(&self) -> usize {
        self.path.waypoints.len().saturating_sub(1)
    }

    pub fn on_final_leg(&self) -> bool {
        self.cursor >= self.last()
    }

    /// Distance from the root to the final waypoint (m).
    pub fn distance_to_final(&self, root: &RootTransform) -> f64 {
        match self.path.waypoints.last() {
            Some(w) => (root.position - w).norm(),
            None => 0.0,
        }
    }

    /// Consumes reached waypoints and returns the active sub-goal: walk
    /// toward intermediate waypoints, the target goal on the final leg.
    pub fn next_subgoal(&mut self, root: &RootTransform) -> (Goal, Action) {
        while self.cursor < self.last() && (root.position - self.path.waypoints[self.cursor]).norm() < WAYPOINT_RADIUS {
            self.cursor += 1;
        }
        if self.on_final_leg() {
            return (self.target, self.target.action);
        }
        let w = self.path.waypoints[self.cursor];
        let from = self.path.waypoints[self.cursor - 1];
        let d = (w - from).try_normalize(1e-12).unwrap_or(root.forward);
        let goal = Goal::new(Vec3::new(w.x, 0.0, w.y), Vec3::new(d.x, 0.0, d.y), Action::Walk);
        (goal, Action::Walk)
    }
}
