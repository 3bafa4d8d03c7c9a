//! Brute-force surface distances and random masks for checking the metric
//! implementation.
#![allow(dead_code)]

use mgnets::segmetrics::{asd, hd95, BinaryMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Boundary voxels by explicit neighbour lookup, as physical coordinates.
pub fn oracle_surface(m: &BinaryMask, spacing: &[f64]) -> Vec<Vec<f64>> {
    let shape = m.shape();
    let dim = shape.len();
    let mut pts = Vec::new();
    let total: usize = shape.iter().product();
    for flat in 0..total {
        let mut idx = vec![0usize; dim];
        let mut r = flat;
        for a in (0..dim).rev() {
            idx[a] = r % shape[a];
            r /= shape[a];
        }
        let fg = |i: &[isize]| -> bool {
            if i.iter().zip(shape).any(|(&v, &n)| v < 0 || v >= n as isize) {
                return false;
            }
            let u: Vec<usize> = i.iter().map(|&v| v as usize).collect();
            m.data()[m.flat_index(&u).unwrap()]
        };
        let here: Vec<isize> = idx.iter().map(|&v| v as isize).collect();
        if !fg(&here) {
            continue;
        }
        let mut boundary = false;
        for a in 0..dim {
            for s in [-1, 1] {
                let mut nb = here.clone();
                nb[a] += s;
                boundary |= !fg(&nb);
            }
        }
        if boundary {
            pts.push(idx.iter().zip(spacing).map(|(&i, s)| i as f64 * s).collect());
        }
    }
    pts
}

pub fn nearest(p: &[f64], set: &[Vec<f64>]) -> f64 {
    set.iter()
        .map(|q| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

pub fn oracle_metrics(a: &BinaryMask, b: &BinaryMask, spacing: &[f64]) -> Option<(f64, f64)> {
    let (sa, sb) = (oracle_surface(a, spacing), oracle_surface(b, spacing));
    if sa.is_empty() || sb.is_empty() {
        return None;
    }
    let ab: Vec<f64> = sa.iter().map(|p| nearest(p, &sb)).collect();
    let ba: Vec<f64> = sb.iter().map(|p| nearest(p, &sa)).collect();
    let p95 = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let rank = (0.95 * s.len() as f64).ceil() as usize;
        s[rank.max(1) - 1]
    };
    let mean = (ab.iter().sum::<f64>() + ba.iter().sum::<f64>()) / (ab.len() + ba.len()) as f64;
    Some((p95(&ab).max(p95(&ba)), mean))
}

/// A random blob mask: a few axis-aligned boxes plus salt noise.
pub fn random_mask(shape: &[usize], rng: &mut ChaCha8Rng) -> BinaryMask {
    let total: usize = shape.iter().product();
    let mut data = vec![false; total];
    let boxes = rng.gen_range(1..4);
    let salt = rng.gen_range(0.0..0.05);
    for _ in 0..boxes {
        let lo: Vec<usize> = shape.iter().map(|&n| rng.gen_range(0..n)).collect();
        let hi: Vec<usize> = lo.iter().zip(shape).map(|(&l, &n)| rng.gen_range(l..n) + 1).collect();
        for (flat, d) in data.iter_mut().enumerate() {
            let mut r = flat;
            let mut inside = true;
            for a in (0..shape.len()).rev() {
                let i = r % shape[a];
                r /= shape[a];
                inside &= i >= lo[a] && i < hi[a];
            }
            *d |= inside;
        }
    }
    for d in data.iter_mut() {
        if rng.gen_bool(salt) {
            *d = !*d;
        }
    }
    BinaryMask::new(shape, data).unwrap()
}

/// Largest deviation of the library's HD95 and ASD from the oracle over
/// `cases` seeded pairs of 2D and 3D masks up to 16 voxels per side, plus
/// the number of pairs where only one side reported an undefined distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleComparison {
    pub cases: usize,
    pub max_hd95_error: f64,
    pub max_asd_error: f64,
    pub definedness_mismatches: usize,
}

pub fn compare_with_oracle(cases: usize, seed: u64) -> OracleComparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = OracleComparison { cases, ..Default::default() };
    for case in 0..cases {
        let dim = if case % 2 == 0 { 2 } else { 3 };
        let shape: Vec<usize> = (0..dim).map(|_| rng.gen_range(1..=16)).collect();
        let spacing: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
        let a = random_mask(&shape, &mut rng);
        let b = random_mask(&shape, &mut rng);
        let got_h = hd95(&a, &b, &spacing).unwrap();
        let got_a = asd(&a, &b, &spacing).unwrap();
        match (oracle_metrics(&a, &b, &spacing), got_h, got_a) {
            (None, None, None) => {}
            (Some((h, m)), Some(gh), Some(ga)) => {
                out.max_hd95_error = out.max_hd95_error.max((gh - h).abs());
                out.max_asd_error = out.max_asd_error.max((ga - m).abs());
            }
            _ => out.definedness_mismatches += 1,
        }
    }
    out
}
