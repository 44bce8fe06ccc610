use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One pedestrian's samples `(frame, x, y)`, frames strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrack {
    pub ped_id: i64,
    pub samples: Vec<(i64, f64, f64)>,
}

impl RawTrack {
    pub fn first_frame(&self) -> Option<i64> {
        self.samples.first().map(|s| s.0)
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.samples.last().map(|s| s.0)
    }
}

fn integral(v: f64) -> Option<i64> {
    (v.is_finite() && v.fract() == 0.0).then_some(v as i64)
}

/// Parses `frame ped x y` lines. `source` names the input in errors.
pub fn parse_scene(text: &str, source: &str) -> Result<Vec<RawTrack>> {
    let mut by_ped: BTreeMap<i64, Vec<(i64, f64, f64, usize)>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: source.to_string(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!(
                "expected 4 fields (frame ped x y), found {}",
                fields.len()
            )));
        }
        let nums = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| err(format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let frame = integral(nums[0]).ok_or_else(|| err(format!("non-integral frame {}", nums[0])))?;
        let ped = integral(nums[1]).ok_or_else(|| err(format!("non-integral pedestrian id {}", nums[1])))?;
        if !nums[2].is_finite() || !nums[3].is_finite() {
            return Err(err("non-finite coordinate".into()));
        }
        by_ped.entry(ped).or_default().push((frame, nums[2], nums[3], lineno));
    }

    by_ped
        .into_iter()
        .map(|(ped_id, mut rows)| {
            rows.sort_by_key(|r| r.0);
            if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: w[1].3.max(w[0].3),
                    msg: format!("pedestrian {ped_id} has frame {} twice", w[0].0),
                });
            }
            Ok(RawTrack {
                ped_id,
                samples: rows.into_iter().map(|(f, x, y, _)| (f, x, y)).collect(),
            })
        })
        .collect()
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Vec<RawTrack>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, &path.display().to_string())
}

/// Serializes tracks in the loader's format, ordered by frame then pedestrian.
pub fn format_tracks(tracks: &[RawTrack]) -> String {
    let mut rows: Vec<(i64, i64, f64, f64)> = tracks
        .iter()
        .flat_map(|t| t.samples.iter().map(move |&(f, x, y)| (f, t.ped_id, x, y)))
        .collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out = String::with_capacity(rows.len() * 32);
    for (f, p, x, y) in rows {
        writeln!(out, "{f} {p} {x:?} {y:?}").expect("write to string");
    }
    out
}

pub fn write_tracks(path: impl AsRef<Path>, tracks: &[RawTrack]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_tracks(tracks)).map_err(|e| Error::io(path, e))
}
