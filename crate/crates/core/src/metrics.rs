//! Displacement errors in meters. Trajectories are `[step][agent]`.

use crate::error::{Error, Result};
use crate::graph::Point;

fn check(pred: &[Vec<Point>], truth: &[Vec<Point>]) -> Result<()> {
    let shape = |t: &[Vec<Point>]| vec![t.len(), t.first().map_or(0, Vec::len)];
    let ragged = |t: &[Vec<Point>]| t.iter().any(|s| s.len() != t[0].len());
    if pred.is_empty() || pred.len() != truth.len() || ragged(pred) || ragged(truth) || pred[0].len() != truth[0].len() || pred[0].is_empty() {
        return Err(Error::Contract(format!(
            "trajectory shapes differ or are empty: {:?} vs {:?}",
            shape(pred),
            shape(truth)
        )));
    }
    Ok(())
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Per-agent mean distance over all steps.
pub fn ade_per_agent(pred: &[Vec<Point>], truth: &[Vec<Point>]) -> Result<Vec<f64>> {
    check(pred, truth)?;
    let steps = pred.len() as f64;
    Ok((0..pred[0].len())
        .map(|j| pred.iter().zip(truth).map(|(p, t)| dist(p[j], t[j])).sum::<f64>() / steps)
        .collect())
}

/// Per-agent distance at the last step.
pub fn fde_per_agent(pred: &[Vec<Point>], truth: &[Vec<Point>]) -> Result<Vec<f64>> {
    check(pred, truth)?;
    let (p, t) = (pred.last().unwrap(), truth.last().unwrap());
    Ok(p.iter().zip(t).map(|(&a, &b)| dist(a, b)).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean over agents and steps of the Euclidean error.
pub fn ade(pred: &[Vec<Point>], truth: &[Vec<Point>]) -> Result<f64> {
    Ok(mean(&ade_per_agent(pred, truth)?))
}

/// Mean over agents of the final-step Euclidean error.
pub fn fde(pred: &[Vec<Point>], truth: &[Vec<Point>]) -> Result<f64> {
    Ok(mean(&fde_per_agent(pred, truth)?))
}
