//! Trajectory ingestion, windowing, the leave-one-out split and synthetic data.

mod io;
mod synth;
mod windows;

pub use io::{format_tracks, load_scene, parse_scene, write_tracks, RawTrack};
pub use synth::{
    constant_velocity_tracks, gen_synthetic, min_pairwise_distance, ScenarioKind,
    SocialForceParams, SyntheticScenario,
};
pub use windows::{
    canonical_scene, leave_one_out, make_windows, normalize, resample, Transform,
    TrajectoryWindow, WindowSpec, SCENES,
};

use std::path::Path;

use crate::error::Result;

/// Scene label of a data file: the protocol spelling of its stem when it
/// names one of the five scenes, otherwise the stem itself.
pub fn scene_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    canonical_scene(&stem).map_or(stem, str::to_string)
}

/// Loads a scene file, resamples it onto the frame grid and cuts windows.
pub fn load_windows(path: impl AsRef<Path>, spec: WindowSpec) -> Result<(String, Vec<TrajectoryWindow>)> {
    let path = path.as_ref();
    let tracks: Vec<RawTrack> = load_scene(path)?.iter().map(|t| resample(t, spec.frame_step)).collect();
    let scene = scene_name(path);
    let windows = make_windows(&tracks, spec, &scene)?;
    Ok((scene, windows))
}
