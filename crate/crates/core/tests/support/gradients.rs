//! Central-difference gradient checks shared by the tensorad tests and the
//! acceptance suite. Every check returns the worst mismatch per case.
#![allow(dead_code)]

use mgnets::tensorad::{BnMode, RunningStats, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-5;

pub fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

pub fn onehot(n: usize, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = Tensor::zeros(&[n, c, h, w]);
    for ni in 0..n {
        for j in 0..h * w {
            let k = rng.gen_range(0..c);
            t.data_mut()[(ni * c + k) * h * w + j] = 1.0;
        }
    }
    t
}

/// Worst relative disagreement between reverse-mode gradients and central
/// differences, with where it happened.
#[derive(Debug, Default, Clone, Copy)]
pub struct Mismatch {
    pub rel: f64,
    pub input: usize,
    pub index: usize,
    pub ad: f64,
    pub fd: f64,
}

impl PartialEq<f64> for Mismatch {
    fn eq(&self, other: &f64) -> bool {
        self.rel == *other
    }
}

impl PartialOrd<f64> for Mismatch {
    fn partial_cmp(&self, other: &f64) -> Option<std::cmp::Ordering> {
        self.rel.partial_cmp(other)
    }
}

/// One checked (operation, shape) pair.
#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub worst: Mismatch,
}

pub fn grad_check(inputs: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> Mismatch {
    let eval = |vals: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        (tape.value(out).data()[0], tape, vars, out)
    };
    let (_, tape, vars, out) = eval(inputs);
    let grads = tape.backward(out).unwrap();
    let mut worst = Mismatch::default();
    for (i, input) in inputs.iter().enumerate() {
        let g = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= STEP;
            let (lp, lm) = (eval(&plus).0, eval(&minus).0);
            let fd = (lp - lm) / (2.0 * STEP);
            // Rounding in the two loss evaluations bounds what the central
            // difference can resolve.
            let resolution = 4.0 * f64::EPSILON * lp.abs().max(lm.abs()) / (2.0 * STEP);
            let ad = g.data()[j];
            let denom = ad.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
            let rel = ((ad - fd).abs() - resolution).max(0.0) / denom;
            if rel > worst.rel {
                worst = Mismatch { rel, input: i, index: j, ad, fd };
            }
        }
    }
    worst
}

/// Projects a tensor output onto a fixed random direction so it can be checked
/// as a scalar.
pub fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rand_tensor(tape.value(y).shape(), &mut rng);
    let r = tape.constant(r);
    tape.dot(y, r).unwrap()
}

pub const SHAPES: [(usize, usize, usize, usize); 3] = [(1, 1, 4, 4), (2, 3, 4, 6), (3, 2, 6, 2)];

fn check(label: String, worst: Mismatch) -> Check {
    Check { label, worst }
}

pub fn conv2d() -> Vec<Check> {
    let mut out = Vec::new();
    for (s, &(n, c, h, w)) in SHAPES.iter().enumerate() {
        for k in [1, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + s as u64);
            let o = 2 + s;
            let inputs = [
                rand_tensor(&[n, c, h, w], &mut rng),
                rand_tensor(&[o, c, k, k], &mut rng),
                rand_tensor(&[o], &mut rng),
            ];
            let err = grad_check(&inputs, |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2])).unwrap();
                project(t, y, 7)
            });
            out.push(check(format!("conv2d k{k} shape {s}"), err));
        }
    }
    out
}

pub fn conv2d_transpose() -> Vec<Check> {
    let mut out = Vec::new();
    for (s, &(n, c, h, w)) in SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + s as u64);
        let o = 1 + s;
        let inputs = [
            rand_tensor(&[n, c, h / 2, w / 2], &mut rng),
            rand_tensor(&[c, o, 2, 2], &mut rng),
            rand_tensor(&[o], &mut rng),
        ];
        let err = grad_check(&inputs, |t, v| {
            let y = t.conv2d_transpose(v[0], v[1], Some(v[2])).unwrap();
            project(t, y, 8)
        });
        out.push(check(format!("conv2d_transpose shape {s}"), err));
    }
    out
}

pub fn maxpool() -> Vec<Check> {
    let mut out = Vec::new();
    for (s, &(n, c, h, w)) in SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + s as u64);
        let inputs = [rand_tensor(&[n, c, h, w], &mut rng)];
        let err = grad_check(&inputs, |t, v| {
            let y = t.maxpool2(v[0]).unwrap();
            project(t, y, 9)
        });
        out.push(check(format!("maxpool2 shape {s}"), err));
    }
    out
}

pub fn batchnorm() -> Vec<Check> {
    let mut out = Vec::new();
    for (s, &(n, c, h, w)) in SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + s as u64);
        let inputs = [
            rand_tensor(&[n, c, h, w], &mut rng),
            rand_tensor(&[c], &mut rng),
            rand_tensor(&[c], &mut rng),
        ];
        for mode in [BnMode::Train, BnMode::BatchStats, BnMode::Eval] {
            let mut warm = RunningStats::new(c);
            {
                let mut t = Tape::new();
                let x = t.constant(rand_tensor(&[4, c, 2, 2], &mut rng));
                let g = t.constant(Tensor::full(&[c], 1.0));
                let b = t.constant(Tensor::zeros(&[c]));
                t.batchnorm(x, g, b, &mut warm, BnMode::Train).unwrap();
            }
            let err = grad_check(&inputs, |t, v| {
                let mut stats = warm.clone();
                let y = t.batchnorm(v[0], v[1], v[2], &mut stats, mode).unwrap();
                project(t, y, 10)
            });
            out.push(check(format!("batchnorm {mode:?} shape {s}"), err));
        }
    }
    out
}

pub fn relu() -> Vec<Check> {
    let mut out = Vec::new();
    for (s, &(n, c, h, w)) in SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + s as u64);
        // Keep entries away from the kink.
        let x = Tensor::from_fn(&[n, c, h, w], |_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) { v } else { -v }
        });
        let err = grad_check(&[x], |t, v| {
            let y = t.relu(v[0]);
            project(t, y, 11)
        });
        out.push(check(format!("relu shape {s}"), err));
    }
    out
}

pub fn concat() -> Vec<Check> {
    let mut out = Vec::new();
    for (s, &(n, c, h, w)) in SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + s as u64);
        let inputs = [
            rand_tensor(&[n, c, h, w], &mut rng),
            rand_tensor(&[n, 1, h, w], &mut rng),
            rand_tensor(&[n, c + 1, h, w], &mut rng),
        ];
        let err = grad_check(&inputs, |t, v| {
            let y = t.concat_channels(v).unwrap();
            project(t, y, 12)
        });
        out.push(check(format!("concat shape {s}"), err));
    }
    out
}

pub fn softmax_and_losses() -> Vec<Check> {
    let mut out = Vec::new();
    for (s, &(n, _, h, w)) in SHAPES.iter().enumerate() {
        let c = 3 + s;
        let mut rng = ChaCha8Rng::seed_from_u64(700 + s as u64);
        let logits = rand_tensor(&[n, c, h, w], &mut rng);
        let target = onehot(n, c, h, w, &mut rng);

        let err = grad_check(std::slice::from_ref(&logits), |t, v| {
            let y = t.softmax(v[0]).unwrap();
            project(t, y, 13)
        });
        out.push(check(format!("softmax shape {s}"), err));

        let err = grad_check(std::slice::from_ref(&logits), |t, v| {
            let y = t.constant(target.clone());
            t.softmax_cross_entropy(v[0], y).unwrap()
        });
        out.push(check(format!("cross-entropy shape {s}"), err));

        let err = grad_check(std::slice::from_ref(&logits), |t, v| {
            let p = t.softmax(v[0]).unwrap();
            let y = t.constant(target.clone());
            t.dice_loss(p, y, 1e-6).unwrap()
        });
        out.push(check(format!("dice shape {s}"), err));
    }
    out
}

pub fn add_and_dot() -> Vec<Check> {
    let mut out = Vec::new();
    for (s, &(n, c, h, w)) in SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + s as u64);
        let inputs = [rand_tensor(&[n, c, h, w], &mut rng), rand_tensor(&[n, c, h, w], &mut rng)];
        let err = grad_check(&inputs, |t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            let z = t.dot(y, v[0]).unwrap();
            let q = t.dot(v[1], v[1]).unwrap();
            t.add(z, q).unwrap()
        });
        out.push(check(format!("add/dot shape {s}"), err));
    }
    out
}

/// Two conv blocks, pooling, upsampling, a skip concat, a 1×1 head and the
/// Dice + cross-entropy loss.
fn two_block_net(t: &mut Tape<f64>, v: &[Var], x: &Tensor<f64>, y: &Tensor<f64>) -> Var {
    let x = t.constant(x.clone());
    let target = t.constant(y.clone());
    let mut stats = [RunningStats::new(3), RunningStats::new(3), RunningStats::new(3), RunningStats::new(3)];
    let mut h = x;
    for (u, st) in stats.iter_mut().take(2).enumerate() {
        let b = 4 * u;
        h = t.conv2d(h, v[b], Some(v[b + 1])).unwrap();
        h = t.batchnorm(h, v[b + 2], v[b + 3], st, BnMode::Train).unwrap();
        h = t.relu(h);
    }
    let skip = h;
    let down = t.maxpool2(h).unwrap();
    let mut g = down;
    for (u, st) in stats.iter_mut().skip(2).enumerate() {
        let b = 8 + 4 * u;
        g = t.conv2d(g, v[b], Some(v[b + 1])).unwrap();
        g = t.batchnorm(g, v[b + 2], v[b + 3], st, BnMode::Train).unwrap();
        g = t.relu(g);
    }
    let up = t.conv2d_transpose(g, v[16], Some(v[17])).unwrap();
    let cat = t.concat_channels(&[up, skip]).unwrap();
    let logits = t.conv2d(cat, v[18], Some(v[19])).unwrap();
    let probs = t.softmax(logits).unwrap();
    let dice = t.dice_loss(probs, target, 1e-6).unwrap();
    let ce = t.softmax_cross_entropy(logits, target).unwrap();
    t.add(dice, ce).unwrap()
}

pub fn composed_network() -> Vec<Check> {
    let mut out = Vec::new();
    for (seed, (n, h, w)) in [(1u64, (2, 4, 4)), (2, (3, 4, 6)), (3, (2, 6, 4))] {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let x = rand_tensor(&[n, 2, h, w], &mut rng);
        let y = onehot(n, 4, h, w, &mut rng);
        let mut params = Vec::new();
        for (ci, co) in [(2, 3), (3, 3), (3, 3), (3, 3)] {
            params.push(rand_tensor(&[co, ci, 3, 3], &mut rng));
            params.push(rand_tensor(&[co], &mut rng));
            params.push(Tensor::from_fn(&[co], |_| rng.gen_range(0.5..1.5)));
            params.push(rand_tensor(&[co], &mut rng));
        }
        params.push(rand_tensor(&[3, 3, 2, 2], &mut rng));
        params.push(rand_tensor(&[3], &mut rng));
        params.push(rand_tensor(&[4, 6, 1, 1], &mut rng));
        params.push(rand_tensor(&[4], &mut rng));
        let err = grad_check(&params, |t, v| two_block_net(t, v, &x, &y));
        out.push(check(format!("two-block network seed {seed}"), err));
    }
    out
}

/// Every operation check followed by the composed network.
pub fn all() -> Vec<Check> {
    [
        conv2d(),
        conv2d_transpose(),
        maxpool(),
        batchnorm(),
        relu(),
        concat(),
        softmax_and_losses(),
        add_and_dot(),
        composed_network(),
    ]
    .concat()
}

pub fn assert_within_tolerance(checks: &[Check]) {
    assert!(!checks.is_empty());
    for c in checks {
        assert!(c.worst < TOL, "{}: {:?}", c.label, c.worst);
    }
}
