//! Social-force crowd simulator used as a synthetic data source.
//!
//! Each agent relaxes toward its preferred velocity with time constant `tau`
//! and is pushed away from every other agent by an exponential repulsion
//! `a · exp((2r − d) / b)`. The state is integrated with semi-implicit Euler
//! substeps and recorded once per output frame.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::io::RawTrack;
use crate::error::{Error, Result};
use crate::graph::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Crossing,
    Group,
    Following,
    StillPerson,
    Merge,
    Avoidance,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Crossing,
        ScenarioKind::Group,
        ScenarioKind::Following,
        ScenarioKind::StillPerson,
        ScenarioKind::Merge,
        ScenarioKind::Avoidance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Crossing => "crossing",
            ScenarioKind::Group => "group",
            ScenarioKind::Following => "following",
            ScenarioKind::StillPerson => "still_person",
            ScenarioKind::Merge => "merge",
            ScenarioKind::Avoidance => "avoidance",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown scenario kind {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocialForceParams {
    /// Output frame interval, seconds.
    pub dt: f64,
    /// Integration substeps per output frame.
    pub substeps: usize,
    pub tau: f64,
    /// Repulsion strength, m/s².
    pub a: f64,
    /// Repulsion range, m.
    pub b: f64,
    /// Body radius, m.
    pub radius: f64,
    /// m/s
    pub preferred_speed: f64,
    /// Speeds are capped at this multiple of `preferred_speed`.
    pub max_speed_factor: f64,
    /// Relative spread of per-agent preferred speeds.
    pub speed_jitter: f64,
    /// Native frame ids per output frame.
    pub frame_step: i64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        Self {
            dt: 0.4,
            substeps: 20,
            tau: 0.5,
            a: 2.0,
            b: 0.3,
            radius: 0.3,
            preferred_speed: 1.3,
            max_speed_factor: 1.3,
            speed_jitter: 0.1,
            frame_step: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub kind: ScenarioKind,
    pub starts: Vec<Point>,
    pub goals: Vec<Point>,
    pub initial_velocities: Vec<Point>,
    /// m/s; zero for an agent that stays put.
    pub preferred_speeds: Vec<f64>,
    pub params: SocialForceParams,
}

fn unit(v: Point) -> Point {
    let n = v[0].hypot(v[1]);
    if n == 0.0 {
        [0.0, 0.0]
    } else {
        [v[0] / n, v[1] / n]
    }
}

fn rotate(p: Point, theta: f64) -> Point {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

impl SyntheticScenario {
    /// Lays out starts and goals for `kind`; the layout is randomly rotated
    /// and shifted, and positions jittered, from `seed`.
    pub fn new(kind: ScenarioKind, n_agents: usize, seed: u64) -> Result<Self> {
        Self::with_params(kind, n_agents, seed, SocialForceParams::default())
    }

    pub fn with_params(
        kind: ScenarioKind,
        n_agents: usize,
        seed: u64,
        params: SocialForceParams,
    ) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::Contract("scenario needs at least one agent".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |scale: f64| scale * rng.random_range(-1.0..=1.0);
        // distance to reach the meeting point after about 4 seconds
        let meet = 4.0 * params.preferred_speed;
        let far = 200.0;
        let mut starts = Vec::with_capacity(n_agents);
        let mut dirs = Vec::with_capacity(n_agents);
        let mut still = vec![false; n_agents];
        for k in 0..n_agents {
            let rank = (k / 2) as f64;
            let (start, dir): (Point, Point) = match kind {
                ScenarioKind::Crossing => {
                    if k % 2 == 0 {
                        ([-meet - 1.2 * rank, jitter(0.4)], [1.0, 0.0])
                    } else {
                        ([jitter(0.4), -meet - 1.2 * rank], [0.0, 1.0])
                    }
                }
                ScenarioKind::Group => {
                    let lateral = 0.8 * (k as f64 - (n_agents as f64 - 1.0) / 2.0);
                    ([jitter(0.1), lateral + jitter(0.05)], [1.0, 0.0])
                }
                ScenarioKind::Following => ([-1.5 * k as f64 + jitter(0.15), jitter(0.1)], [1.0, 0.0]),
                ScenarioKind::StillPerson => {
                    if k == 0 {
                        still[0] = true;
                        ([0.0, 0.0], [1.0, 0.0])
                    } else {
                        let lane = 0.9 * (k as f64 - 1.0) - 0.4 * (n_agents as f64 - 2.0) + jitter(0.2);
                        ([-meet - jitter(0.5).abs(), lane + 0.5], [1.0, 0.0])
                    }
                }
                ScenarioKind::Merge => {
                    let side = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let angle = side * PI / 6.0;
                    let back = meet + 1.2 * rank + jitter(0.2);
                    ([-back * angle.cos(), -back * angle.sin()], [1.0, 0.0])
                }
                ScenarioKind::Avoidance => {
                    let offset = 0.1 + 0.2 * jitter(1.0).abs();
                    if k % 2 == 0 {
                        ([-meet - 1.2 * rank, 0.6 * rank + offset], [1.0, 0.0])
                    } else {
                        ([meet + 1.2 * rank, 0.6 * rank - offset], [-1.0, 0.0])
                    }
                }
            };
            starts.push(start);
            dirs.push(dir);
        }
        let theta = jitter(PI);
        let shift = [jitter(2.0), jitter(2.0)];
        let speeds: Vec<f64> = still
            .iter()
            .map(|&s| {
                if s {
                    0.0
                } else {
                    params.preferred_speed * (1.0 + jitter(params.speed_jitter))
                }
            })
            .collect();

        let place = |p: Point| {
            let r = rotate(p, theta);
            [r[0] + shift[0], r[1] + shift[1]]
        };
        let mut goals = Vec::with_capacity(n_agents);
        let mut initial_velocities = Vec::with_capacity(n_agents);
        for k in 0..n_agents {
            let dir = rotate(dirs[k], theta);
            let start = place(starts[k]);
            let goal = if still[k] {
                start
            } else if kind == ScenarioKind::Merge {
                // both branches head for the same far point on the merged lane
                place([far, 0.0])
            } else {
                [start[0] + far * dir[0], start[1] + far * dir[1]]
            };
            let heading = unit([goal[0] - start[0], goal[1] - start[1]]);
            initial_velocities.push([speeds[k] * heading[0], speeds[k] * heading[1]]);
            starts[k] = start;
            goals.push(goal);
        }
        Ok(Self {
            kind,
            starts,
            goals,
            initial_velocities,
            preferred_speeds: speeds,
            params,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.starts.len()
    }

    /// Integrates the dynamics and records `n_frames` frames per agent.
    pub fn simulate(&self, n_frames: usize) -> Vec<RawTrack> {
        let prm = &self.params;
        let n = self.n_agents();
        let h = prm.dt / prm.substeps as f64;
        let v_max = prm.max_speed_factor * prm.preferred_speed;
        let mut pos = self.starts.clone();
        let mut vel = self.initial_velocities.clone();
        let mut tracks: Vec<RawTrack> = (0..n)
            .map(|k| RawTrack {
                ped_id: k as i64 + 1,
                samples: Vec::with_capacity(n_frames),
            })
            .collect();
        for frame in 0..n_frames {
            for (t, p) in tracks.iter_mut().zip(&pos) {
                t.samples.push((frame as i64 * prm.frame_step, p[0], p[1]));
            }
            if frame + 1 == n_frames {
                break;
            }
            for _ in 0..prm.substeps {
                let acc: Vec<Point> = (0..n).map(|j| self.acceleration(j, &pos, &vel)).collect();
                for j in 0..n {
                    let mut v = [vel[j][0] + h * acc[j][0], vel[j][1] + h * acc[j][1]];
                    let speed = v[0].hypot(v[1]);
                    if speed > v_max {
                        v = [v[0] * v_max / speed, v[1] * v_max / speed];
                    }
                    vel[j] = v;
                    pos[j] = [pos[j][0] + h * v[0], pos[j][1] + h * v[1]];
                }
            }
        }
        tracks
    }

    fn acceleration(&self, j: usize, pos: &[Point], vel: &[Point]) -> Point {
        let prm = &self.params;
        let to_goal = [self.goals[j][0] - pos[j][0], self.goals[j][1] - pos[j][1]];
        let heading = unit(to_goal);
        // slow down inside the last meter so agents settle on their goal
        let speed = self.preferred_speeds[j] * to_goal[0].hypot(to_goal[1]).min(1.0);
        let mut acc = [
            (speed * heading[0] - vel[j][0]) / prm.tau,
            (speed * heading[1] - vel[j][1]) / prm.tau,
        ];
        for (i, other) in pos.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = [pos[j][0] - other[0], pos[j][1] - other[1]];
            let dist = d[0].hypot(d[1]);
            let away = if dist > 0.0 {
                [d[0] / dist, d[1] / dist]
            } else {
                // coincident agents separate along a fixed, index-dependent axis
                rotate([1.0, 0.0], (i as f64 - j as f64).signum() * PI / 2.0)
            };
            let push = prm.a * ((2.0 * prm.radius - dist) / prm.b).exp();
            acc[0] += push * away[0];
            acc[1] += push * away[1];
        }
        acc
    }
}

/// Social-force trajectories for `kind` with `n_agents` agents over `n_frames` frames.
pub fn gen_synthetic(kind: ScenarioKind, n_agents: usize, n_frames: usize, seed: u64) -> Result<Vec<RawTrack>> {
    Ok(SyntheticScenario::new(kind, n_agents, seed)?.simulate(n_frames))
}

/// Non-interacting agents at constant velocity with i.i.d. Gaussian position
/// noise of standard deviation `noise_std` meters.
pub fn constant_velocity_tracks(
    n_agents: usize,
    n_frames: usize,
    noise_std: f64,
    seed: u64,
) -> Vec<RawTrack> {
    let prm = SocialForceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_agents)
        .map(|k| {
            let heading = rng.random_range(-PI..PI);
            let speed = rng.random_range(0.8..1.6) * prm.dt;
            let start = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let samples = (0..n_frames)
                .map(|f| {
                    let t = f as f64;
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    (
                        f as i64 * prm.frame_step,
                        start[0] + t * speed * heading.cos() + noise_std * nx,
                        start[1] + t * speed * heading.sin() + noise_std * ny,
                    )
                })
                .collect();
            RawTrack {
                ped_id: k as i64 + 1,
                samples,
            }
        })
        .collect()
}

/// Smallest distance between two agents sharing a frame, if any pair exists.
pub fn min_pairwise_distance(tracks: &[RawTrack]) -> Option<f64> {
    use std::collections::BTreeMap;
    let mut frames: BTreeMap<i64, Vec<Point>> = BTreeMap::new();
    for t in tracks {
        for &(f, x, y) in &t.samples {
            frames.entry(f).or_default().push([x, y]);
        }
    }
    let mut best: Option<f64> = None;
    for pts in frames.values() {
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                let d = (a[0] - b[0]).hypot(a[1] - b[1]);
                best = Some(best.map_or(d, |m: f64| m.min(d)));
            }
        }
    }
    best
}
