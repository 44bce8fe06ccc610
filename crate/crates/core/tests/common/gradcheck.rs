//! Central finite-difference checks of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socstoch::autodiff::{numeric_gradient, relative_error, Tape, Tensor, Var};
use socstoch::graph::SceneFrame;
use socstoch::model::Model;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Relative errors use `max(|analytic|, |numeric|, FLOOR)` as the denominator;
/// below the floor the comparison is absolute at `TOL * FLOOR`, about ten times
/// the rounding error of a central difference of an O(1) loss at this `H`.
pub const FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: String,
    pub checked: usize,
    pub max_rel: f64,
}

impl GradReport {
    pub fn ok(&self) -> bool {
        self.max_rel < TOL && self.checked > 0
    }
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Checks `sum(op(inputs) ⊙ R)` for a fixed random `R`.
pub fn check_op(name: &str, inputs: &[Tensor], op: impl Fn(&mut Tape, &[Var]) -> Var) -> GradReport {
    let weights = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = op(&mut tape, &vars);
        let shape = tape.shape(out).to_vec();
        random(&mut ChaCha8Rng::seed_from_u64(99), &shape, -1.0, 1.0)
    };
    let eval = |tape: &mut Tape, vars: &[Var]| {
        let out = op(tape, vars);
        let r = tape.constant(weights.clone());
        let prod = tape.mul(out, r).unwrap();
        tape.sum(prod)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_requires_grad(true))).collect();
    let loss = eval(&mut tape, &vars);
    tape.backward(loss).unwrap();

    let mut checked = 0;
    let mut max_rel: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).map_or_else(|| vec![0.0; input.numel()], <[f64]>::to_vec);
        let numeric = numeric_gradient(input.data(), H, |x| {
            let mut t = Tape::new();
            let vs: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(m, orig)| {
                    let v = if m == k { Tensor::new(orig.shape().to_vec(), x.to_vec()).unwrap() } else { orig.clone() };
                    t.constant(v)
                })
                .collect();
            let l = eval(&mut t, &vs);
            t.value(l).item()
        });
        for (a, n) in analytic.iter().zip(&numeric) {
            max_rel = max_rel.max(relative_error(*a, *n, FLOOR));
            checked += 1;
        }
    }
    GradReport {
        name: name.to_string(),
        checked,
        max_rel,
    }
}

/// Every tape operation at the shapes the model uses (n = 3 agents, d = 32).
pub fn op_suite() -> Vec<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    let (n, d) = (3, 32);
    let x = random(&mut rng, &[n, 2 * d], -1.0, 1.0);
    let w = random(&mut rng, &[2 * d, 4 * d], -0.3, 0.3);
    out.push(check_op("matmul", &[x, w], |t, v| t.matmul(v[0], v[1]).unwrap()));
    for (name, f) in [
        ("add", Tape::add as fn(&mut Tape, Var, Var) -> _),
        ("sub", Tape::sub),
        ("mul", Tape::mul),
    ] {
        let a = random(&mut rng, &[n, d], -1.0, 1.0);
        let b = random(&mut rng, &[n, d], -1.0, 1.0);
        out.push(check_op(name, &[a.clone(), b], |t, v| f(t, v[0], v[1]).unwrap()));
        let s = random(&mut rng, &[1], -1.0, 1.0);
        out.push(check_op(&format!("{name} (scalar rhs)"), &[a.clone(), s.clone()], |t, v| f(t, v[0], v[1]).unwrap()));
        out.push(check_op(&format!("{name} (scalar lhs)"), &[s, a], |t, v| f(t, v[0], v[1]).unwrap()));
    }
    let kinked = away_from_zero(&mut rng, &[n, d]);
    out.push(check_op("relu", &[kinked.clone()], |t, v| t.relu(v[0])));
    out.push(check_op("leaky_relu", &[kinked], |t, v| t.leaky_relu(v[0], 0.2)));
    let smooth = random(&mut rng, &[n, d], -3.0, 3.0);
    out.push(check_op("sigmoid", &[smooth.clone()], |t, v| t.sigmoid(v[0])));
    out.push(check_op("tanh", &[smooth.clone()], |t, v| t.tanh(v[0])));
    out.push(check_op("exp", &[smooth.clone()], |t, v| t.exp(v[0])));
    out.push(check_op("scale", &[smooth], |t, v| t.scale(v[0], -0.5)));
    let a = random(&mut rng, &[n, 4 * d], -1.0, 1.0);
    let b = random(&mut rng, &[1, 4 * d], -1.0, 1.0);
    out.push(check_op("add_row", &[a, b], |t, v| t.add_row(v[0], v[1]).unwrap()));
    let e = 5;
    let a = random(&mut rng, &[e, d], -1.0, 1.0);
    let c = random(&mut rng, &[e, 1], -1.0, 1.0);
    out.push(check_op("mul_col", &[a, c], |t, v| t.mul_col(v[0], v[1]).unwrap()));
    let parts = [random(&mut rng, &[n, d], -1.0, 1.0), random(&mut rng, &[n, d], -1.0, 1.0), random(&mut rng, &[n, 4], -1.0, 1.0)];
    out.push(check_op("concat (axis 1)", &parts, |t, v| t.concat(v, 1).unwrap()));
    let rows = [random(&mut rng, &[n, d], -1.0, 1.0), random(&mut rng, &[2, d], -1.0, 1.0)];
    out.push(check_op("concat (axis 0)", &rows, |t, v| t.concat(v, 0).unwrap()));
    let pre = random(&mut rng, &[n, 4 * d], -1.0, 1.0);
    out.push(check_op("slice_cols", &[pre], |t, v| t.slice_cols(v[0], d, d).unwrap()));
    let emb = random(&mut rng, &[n, d], -1.0, 1.0);
    out.push(check_op("gather_rows", &[emb], |t, v| t.gather_rows(v[0], &[0, 2, 2, 1, 0, 2]).unwrap()));
    let msg = random(&mut rng, &[6, d], -1.0, 1.0);
    out.push(check_op("segment_sum", &[msg], |t, v| t.segment_sum(v[0], &[1, 0, 1, 2, 0, 1], n).unwrap()));
    let logits = random(&mut rng, &[6, 1], -2.0, 2.0);
    let seg = [Some(1), Some(0), Some(1), None, Some(0), Some(1)];
    out.push(check_op("segment_softmax", &[logits.clone()], |t, v| t.segment_softmax(v[0], &seg).unwrap()));
    let mask = [true, false, true, true, false, true];
    out.push(check_op("masked_softmax", &[logits], |t, v| t.masked_softmax(v[0], &mask).unwrap()));
    let s = random(&mut rng, &[n, d], -1.0, 1.0);
    out.push(check_op("sum", &[s], |t, v| t.sum(v[0])));
    out
}

/// Model loss gradient against finite differences for the parameters
/// selected by `pick(name, numel) -> indices`.
pub fn check_loss(
    label: &str,
    model: &Model,
    frames: &[SceneFrame],
    beta: f64,
    noise: &[Tensor],
    mut pick: impl FnMut(&str, usize) -> Vec<usize>,
) -> GradReport {
    let (_, grads) = model.loss_and_grads(frames, beta, noise).unwrap();
    let mut probe = model.clone();
    let mut checked = 0;
    let mut max_rel: f64 = 0.0;
    let names: Vec<(String, usize)> = model.params.iter().map(|(n, t)| (n.to_string(), t.numel())).collect();
    for (k, (name, numel)) in names.iter().enumerate() {
        for idx in pick(name, *numel) {
            let orig = model.params.get(name).unwrap().data()[idx];
            let mut at = |v: f64| {
                probe.params.get_mut(name).unwrap().data_mut()[idx] = v;
                probe.loss(frames, beta, noise).unwrap().total
            };
            let numeric = (at(orig + H) - at(orig - H)) / (2.0 * H);
            at(orig);
            max_rel = max_rel.max(relative_error(grads[k][idx], numeric, FLOOR));
            checked += 1;
        }
    }
    GradReport {
        name: label.to_string(),
        checked,
        max_rel,
    }
}
