//! Per-timestep directed social graph built from view cones, and the pairwise
//! relationship encodings fed to the edge embedding.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Cone membership is inclusive; this absorbs rounding of the boundary angle.
const CONE_BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    /// meters
    pub position: Point,
    /// meters per frame step
    pub velocity: Point,
}

impl AgentState {
    pub fn new(position: Point, velocity: Point) -> Self {
        Self { position, velocity }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.velocity).all(|v| v.is_finite())
    }
}

/// Agents at one time step. Index in `agents` is the pedestrian identity and
/// stays fixed for every frame of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub agents: Vec<AgentState>,
    pub time_index: i64,
}

impl SceneFrame {
    pub fn new(agents: Vec<AgentState>, time_index: i64) -> Self {
        Self { agents, time_index }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoordMode {
    Cartesian,
    #[default]
    Polar,
}

impl std::str::FromStr for CoordMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cartesian" => Ok(CoordMode::Cartesian),
            "polar" => Ok(CoordMode::Polar),
            other => Err(Error::Config(format!("unknown coord_mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for CoordMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CoordMode::Cartesian => "cartesian",
            CoordMode::Polar => "polar",
        })
    }
}

/// Directed adjacency. `has_edge(i, j)` means i lies in j's view and messages
/// flow from i into j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    n: usize,
    adjacency: Vec<bool>,
}

impl SocialGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![false; n * n],
        }
    }

    /// Every ordered pair except self loops.
    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.adjacency[i * n + j] = true;
                }
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            assert!(i != j && i < n && j < n, "invalid edge {i}->{j}");
            g.adjacency[i * n + j] = true;
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn in_degree(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| self.has_edge(i, j)).count()
    }

    /// Edges `(src, dst)` grouped by destination, sources ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|j| (0..self.n).filter(move |&i| self.has_edge(i, j)).map(move |i| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a).count()
    }
}

fn norm(v: Point) -> f64 {
    v[0].hypot(v[1])
}

/// Whether `other` falls inside the view cone of `observer`.
fn in_view(observer: &AgentState, other: &AgentState, half_angle: f64) -> bool {
    let d = pairwise_cartesian(other.position, observer.position);
    let (nd, nv) = (norm(d), norm(observer.velocity));
    if nd == 0.0 || nv == 0.0 {
        return true;
    }
    let cos = (d[0] * observer.velocity[0] + d[1] * observer.velocity[1]) / (nd * nv);
    cos.clamp(-1.0, 1.0).acos() <= half_angle + CONE_BOUNDARY_TOL
}

/// Edge i→j iff i ≠ j and either j is standing still or i is inside the cone
/// of half-width `view_angle_deg / 2` around j's heading.
pub fn build_graph(frame: &SceneFrame, view_angle_deg: f64, still_speed_eps: f64) -> SocialGraph {
    let n = frame.len();
    let half = view_angle_deg.to_radians() / 2.0;
    let mut g = SocialGraph::empty(n);
    for (j, observer) in frame.agents.iter().enumerate() {
        let still = norm(observer.velocity) < still_speed_eps;
        for (i, other) in frame.agents.iter().enumerate() {
            if i != j && (still || in_view(observer, other, half)) {
                g.adjacency[i * n + j] = true;
            }
        }
    }
    g
}

/// `p_i - p_j`.
pub fn pairwise_cartesian(p_i: Point, p_j: Point) -> Point {
    [p_i[0] - p_j[0], p_i[1] - p_j[1]]
}

/// Position of `p_j` in polar coordinates centred on `p_i`: `(r, θ)` with
/// θ in (−π, π]. Coincident points give `(0, 0)`.
pub fn pairwise_polar(p_i: Point, p_j: Point) -> Point {
    let d = [p_j[0] - p_i[0], p_j[1] - p_i[1]];
    let r = norm(d);
    if r == 0.0 {
        return [0.0, 0.0];
    }
    [r, heading(d)]
}

fn heading(v: Point) -> f64 {
    if v[0] == 0.0 && v[1] == 0.0 {
        return 0.0;
    }
    wrap_angle(v[1].atan2(v[0]))
}

/// Maps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Four-wide input of the pairwise relationship layer for edge i→j: the
/// positional relationship followed by the relative velocity `v_i − v_j`, both
/// in the chosen coordinate system. Polar velocity is the speed difference
/// and the heading difference.
pub fn pair_features(a_i: &AgentState, a_j: &AgentState, mode: CoordMode) -> [f64; 4] {
    match mode {
        CoordMode::Cartesian => {
            let p = pairwise_cartesian(a_i.position, a_j.position);
            let v = pairwise_cartesian(a_i.velocity, a_j.velocity);
            [p[0], p[1], v[0], v[1]]
        }
        CoordMode::Polar => {
            let p = pairwise_polar(a_i.position, a_j.position);
            let speed = norm(a_i.velocity) - norm(a_j.velocity);
            let turn = wrap_angle(heading(a_i.velocity) - heading(a_j.velocity));
            [p[0], p[1], speed, turn]
        }
    }
}

/// Per-frame displacement; the first frame copies the second.
pub fn velocity_from_positions(positions: &[Point]) -> Result<Vec<Point>> {
    if positions.len() < 2 {
        return Err(Error::Contract(format!(
            "velocity needs at least 2 frames, got {}",
            positions.len()
        )));
    }
    let mut v: Vec<Point> = Vec::with_capacity(positions.len());
    v.push([0.0, 0.0]);
    for w in positions.windows(2) {
        v.push(pairwise_cartesian(w[1], w[0]));
    }
    v[0] = v[1];
    Ok(v)
}
