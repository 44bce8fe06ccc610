use std::collections::BTreeMap;

use super::io::RawTrack;
use crate::error::{Error, Result};
use crate::graph::{velocity_from_positions, AgentState, Point, SceneFrame};

/// The five scenes of the leave-one-out protocol.
pub const SCENES: [&str; 5] = ["ETH", "Hotel", "Zara01", "Zara02", "Univ"];

/// Canonical spelling of a protocol scene name, matched case-insensitively.
pub fn canonical_scene(name: &str) -> Option<&'static str> {
    SCENES.iter().copied().find(|s| s.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub t_obs: usize,
    pub t_pred: usize,
    /// Window start advance, in grid frames.
    pub stride: usize,
    /// Native frame ids between consecutive grid frames.
    pub frame_step: i64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            t_obs: 8,
            t_pred: 12,
            stride: 1,
            frame_step: 10,
        }
    }
}

impl WindowSpec {
    pub fn len(&self) -> usize {
        self.t_obs + self.t_pred
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed-length multi-agent slice; every agent is present in every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub scene: String,
    pub start_frame: i64,
    pub t_obs: usize,
    pub t_pred: usize,
    pub ped_ids: Vec<i64>,
    pub frames: Vec<SceneFrame>,
}

impl TrajectoryWindow {
    pub fn n_agents(&self) -> usize {
        self.ped_ids.len()
    }

    pub fn observed(&self) -> &[SceneFrame] {
        &self.frames[..self.t_obs]
    }

    pub fn future(&self) -> &[SceneFrame] {
        &self.frames[self.t_obs..]
    }

    /// Ground-truth future positions, `[step][agent]`.
    pub fn future_positions(&self) -> Vec<Vec<Point>> {
        self.future()
            .iter()
            .map(|f| f.agents.iter().map(|a| a.position).collect())
            .collect()
    }

    pub fn last_observed_positions(&self) -> Vec<Point> {
        self.frames[self.t_obs - 1]
            .agents
            .iter()
            .map(|a| a.position)
            .collect()
    }
}

/// Linear interpolation of a track onto frames that are multiples of
/// `frame_step` inside its span.
pub fn resample(track: &RawTrack, frame_step: i64) -> RawTrack {
    let s = &track.samples;
    let mut samples = Vec::new();
    if let (Some(first), Some(last)) = (track.first_frame(), track.last_frame()) {
        let mut f = first.div_euclid(frame_step) * frame_step;
        if f < first {
            f += frame_step;
        }
        let mut k = 0;
        while f <= last {
            while s[k + 1..].first().is_some_and(|n| n.0 <= f) {
                k += 1;
            }
            let (f0, x0, y0) = s[k];
            if f0 == f || k + 1 == s.len() {
                samples.push((f, x0, y0));
            } else {
                let (f1, x1, y1) = s[k + 1];
                let w = (f - f0) as f64 / (f1 - f0) as f64;
                samples.push((f, x0 + w * (x1 - x0), y0 + w * (y1 - y0)));
            }
            f += frame_step;
        }
    }
    RawTrack {
        ped_id: track.ped_id,
        samples,
    }
}

/// Sliding windows over tracks sampled on the `frame_step` grid. A window
/// holds exactly the pedestrians present at all of its frames; windows with
/// nobody fully present are dropped.
pub fn make_windows(tracks: &[RawTrack], spec: WindowSpec, scene: &str) -> Result<Vec<TrajectoryWindow>> {
    if spec.t_obs < 2 || spec.t_pred < 1 || spec.stride < 1 || spec.frame_step < 1 {
        return Err(Error::Contract(format!(
            "invalid window spec {spec:?}: need t_obs >= 2, t_pred >= 1, stride >= 1"
        )));
    }
    let lookup: Vec<(i64, BTreeMap<i64, Point>)> = tracks
        .iter()
        .map(|t| (t.ped_id, t.samples.iter().map(|&(f, x, y)| (f, [x, y])).collect()))
        .collect();
    let (Some(lo), Some(hi)) = (
        tracks.iter().filter_map(RawTrack::first_frame).min(),
        tracks.iter().filter_map(RawTrack::last_frame).max(),
    ) else {
        return Ok(Vec::new());
    };

    let len = spec.len() as i64;
    let mut windows = Vec::new();
    let mut start = lo;
    while start + (len - 1) * spec.frame_step <= hi {
        let grid: Vec<i64> = (0..len).map(|k| start + k * spec.frame_step).collect();
        let mut ped_ids = Vec::new();
        let mut paths = Vec::new();
        for (ped, samples) in &lookup {
            let path: Option<Vec<Point>> = grid.iter().map(|f| samples.get(f).copied()).collect();
            if let Some(path) = path {
                ped_ids.push(*ped);
                paths.push(path);
            }
        }
        if !ped_ids.is_empty() {
            let velocities = paths
                .iter()
                .map(|p| velocity_from_positions(p))
                .collect::<Result<Vec<_>>>()?;
            let frames = grid
                .iter()
                .enumerate()
                .map(|(t, &f)| {
                    let agents = paths
                        .iter()
                        .zip(&velocities)
                        .map(|(p, v)| AgentState::new(p[t], v[t]))
                        .collect();
                    SceneFrame::new(agents, f)
                })
                .collect();
            windows.push(TrajectoryWindow {
                scene: scene.to_string(),
                start_frame: start,
                t_obs: spec.t_obs,
                t_pred: spec.t_pred,
                ped_ids,
                frames,
            });
        }
        start += spec.stride as i64 * spec.frame_step;
    }
    Ok(windows)
}

/// Translation applied to a window; metrics are computed in original meters
/// by undoing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub offset: Point,
}

impl Transform {
    pub fn apply(&self, p: Point) -> Point {
        [p[0] - self.offset[0], p[1] - self.offset[1]]
    }

    pub fn invert(&self, p: Point) -> Point {
        [p[0] + self.offset[0], p[1] + self.offset[1]]
    }
}

/// Centres every window on the centroid of its last observed positions.
pub fn normalize(windows: &[TrajectoryWindow]) -> Result<(Vec<TrajectoryWindow>, Vec<Transform>)> {
    if windows.is_empty() {
        return Err(Error::Contract("normalize needs at least one window".into()));
    }
    let mut out = Vec::with_capacity(windows.len());
    let mut transforms = Vec::with_capacity(windows.len());
    for w in windows {
        let last = w.last_observed_positions();
        let n = last.len() as f64;
        let cx = last.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = last.iter().map(|p| p[1]).sum::<f64>() / n;
        let t = Transform { offset: [cx, cy] };
        let mut w = w.clone();
        for frame in &mut w.frames {
            for a in &mut frame.agents {
                a.position = t.apply(a.position);
            }
        }
        out.push(w);
        transforms.push(t);
    }
    Ok((out, transforms))
}

/// Splits per-scene windows into (train, test) with `held_out` as the test scene.
pub fn leave_one_out(
    scenes: &[(String, Vec<TrajectoryWindow>)],
    held_out: &str,
) -> Result<(Vec<TrajectoryWindow>, Vec<TrajectoryWindow>)> {
    let held = canonical_scene(held_out).ok_or_else(|| {
        Error::Config(format!(
            "unknown scene {held_out:?}; expected one of {}",
            SCENES.join(", ")
        ))
    })?;
    for required in SCENES {
        if !scenes.iter().any(|(name, _)| name.eq_ignore_ascii_case(required)) {
            return Err(Error::Config(format!("scene {required} missing from data set")));
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (name, windows) in scenes {
        if name.eq_ignore_ascii_case(held) {
            test.extend(windows.iter().cloned());
        } else {
            train.extend(windows.iter().cloned());
        }
    }
    Ok((train, test))
}
