//! Graph construction properties checked on one scene at a time.

use rand::seq::SliceRandom;
use rand::Rng;
use socstoch::graph::{build_graph, AgentState, SceneFrame};

use super::oracle;

pub const VIEW: f64 = 240.0;
pub const STILL: f64 = 1e-2;

fn rotate(v: [f64; 2], a: f64) -> [f64; 2] {
    [v[0] * a.cos() - v[1] * a.sin(), v[0] * a.sin() + v[1] * a.cos()]
}

fn near_boundary(frame: &SceneFrame, i: usize, j: usize) -> bool {
    let (a, b) = (&frame.agents[i], &frame.agents[j]);
    let d = [a.position[0] - b.position[0], a.position[1] - b.position[1]];
    let v = b.velocity;
    let raw = d[1].atan2(d[0]) - v[1].atan2(v[0]);
    let ang = raw.sin().atan2(raw.cos());
    (ang.abs() - VIEW.to_radians() / 2.0).abs() < 1e-6
}

/// Checks every property on `frame`; returns the number of asymmetric pairs.
pub fn check_scene(frame: &SceneFrame, rng: &mut impl Rng) -> Result<usize, String> {
    let n = frame.len();
    let g = build_graph(frame, VIEW, STILL);

    let reference = oracle::graph(frame, VIEW, STILL);
    for i in 0..n {
        if g.has_edge(i, i) {
            return Err(format!("self loop at {i}"));
        }
        for j in 0..n {
            if i != j && !near_boundary(frame, i, j) && g.has_edge(i, j) != reference[i][j] {
                return Err(format!("edge {i}->{j} disagrees with the reference cone test"));
            }
        }
    }

    for j in 0..n {
        let v = frame.agents[j].velocity;
        let speed = v[0].hypot(v[1]);
        if speed < STILL {
            if g.in_degree(j) != n - 1 {
                return Err(format!("still agent {j} has in-degree {} of {}", g.in_degree(j), n - 1));
            }
            continue;
        }
        let unit = [v[0] / speed, v[1] / speed];
        for (ahead, lo, hi) in [(true, 0.0_f64, 110.0_f64), (false, 130.0, 180.0)] {
            let phi = rng.random_range(lo..hi).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let r = rng.random_range(0.5..3.0);
            let off = rotate(unit, phi);
            let p = frame.agents[j].position;
            let mut probe = frame.clone();
            probe.agents.push(AgentState::new([p[0] + r * off[0], p[1] + r * off[1]], [0.1, 0.0]));
            let pg = build_graph(&probe, VIEW, STILL);
            if pg.has_edge(n, j) != ahead {
                return Err(format!(
                    "agent at {:.1} deg from agent {j}'s heading: edge={} expected {ahead}",
                    phi.to_degrees(),
                    pg.has_edge(n, j)
                ));
            }
        }
    }

    let mut still = frame.clone();
    let j = rng.random_range(0..n);
    still.agents[j].velocity = [0.0, 0.0];
    let sg = build_graph(&still, VIEW, STILL);
    if sg.in_degree(j) != n - 1 {
        return Err(format!("agent {j} made still has in-degree {}", sg.in_degree(j)));
    }

    let full = build_graph(frame, 360.0, STILL);
    if full.edge_count() != n * (n - 1) {
        return Err(format!("360 degree view gave {} of {} edges", full.edge_count(), n * (n - 1)));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let permuted = SceneFrame::new(perm.iter().map(|&k| frame.agents[k]).collect(), frame.time_index);
    let pg = build_graph(&permuted, VIEW, STILL);
    for a in 0..n {
        for b in 0..n {
            if pg.has_edge(a, b) != g.has_edge(perm[a], perm[b]) {
                return Err(format!("permutation changed edge {}->{}", perm[a], perm[b]));
            }
        }
    }

    let mut asym = 0;
    for i in 0..n {
        for j in i + 1..n {
            if g.has_edge(i, j) != g.has_edge(j, i) {
                asym += 1;
            }
        }
    }
    Ok(asym)
}

/// A follows B: B is in A's view, A is behind B.
pub fn following_is_asymmetric() -> Result<(), String> {
    let f = SceneFrame::new(
        vec![AgentState::new([0.0, 0.0], [0.4, 0.0]), AgentState::new([1.0, 0.0], [0.4, 0.0])],
        0,
    );
    let g = build_graph(&f, VIEW, STILL);
    if g.has_edge(1, 0) && !g.has_edge(0, 1) {
        Ok(())
    } else {
        Err("follower/leader pair is not asymmetric".into())
    }
}

