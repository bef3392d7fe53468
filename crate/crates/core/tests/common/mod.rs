//! Shared generators and brute-force reference implementations.

#![allow(dead_code)]

use itsmlab::trainer::Gradients;
use itsmlab::{contrastive_loss, loss_gradients, Batch, Matrix, ProjectionPair};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in `[-1, 1)`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(p)).collect()
}

pub fn project(row: &[f64], p: &Matrix) -> Vec<f64> {
    (0..p.cols())
        .map(|j| (0..p.rows()).map(|i| row[i] * p.get(i, j)).sum())
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Tent-kernel form of half-pixel bilinear sampling with edge clamping.
pub fn bilinear_oracle(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let coord =
        |d: usize, s: usize, dl: usize| ((d as f64 + 0.5) * s as f64 / dl as f64 - 0.5).clamp(0.0, (s - 1) as f64);
    let mut out = Vec::new();
    for y in 0..dh {
        let sy = coord(y, sh, dh);
        for x in 0..dw {
            let sx = coord(x, sw, dw);
            let mut acc = 0.0;
            for i in 0..sh {
                for j in 0..sw {
                    let wy = (1.0 - (sy - i as f64).abs()).max(0.0);
                    let wx = (1.0 - (sx - j as f64).abs()).max(0.0);
                    acc += wy * wx * src[i * sw + j];
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Every threshold `k / 100` tried with a plain comparison; ties keep the
/// first (smallest) threshold.
pub fn iou_oracle(slice: &[f32], gt: &[bool], ignore: &[bool]) -> (f64, f64) {
    let mut best = (-1.0, 0.0);
    for k in 0..=100 {
        let t = k as f64 / 100.0;
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for i in 0..slice.len() {
            if ignore[i] {
                continue;
            }
            let pred = slice[i] as f64 >= t;
            match (pred, gt[i]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let iou = tp as f64 / (tp + fp + fn_) as f64;
        if iou > best.0 {
            best = (iou, t);
        }
    }
    best
}

/// Interpolated AP: each positive hit contributes `1/P` times the best
/// precision at any rank at or below it.
pub fn ap_oracle(scores: &[f64], positive: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let total = positive.iter().filter(|&&p| p).count() as f64;
    let mut precision = Vec::new();
    let mut tp = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            tp += 1.0;
        }
        precision.push(tp / (rank + 1) as f64);
    }
    let mut ap = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            let best = precision[rank..].iter().cloned().fold(0.0, f64::max);
            ap += best / total;
        }
    }
    ap
}

/// Finite-difference step for [`gradient_error`].
pub const STEP: f64 = 1e-3;

fn loss(batch: &Batch, image: &Matrix, text: &Matrix, log_t: f64) -> f64 {
    let pair = ProjectionPair::new(image.clone(), text.clone(), log_t).unwrap();
    contrastive_loss(batch, &pair).unwrap().loss
}

fn numeric_matrix(batch: &Batch, pair: &ProjectionPair, which: usize) -> Vec<f64> {
    let base = if which == 0 { &pair.image } else { &pair.text };
    (0..base.as_slice().len())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus.as_mut_slice()[i] += STEP;
            minus.as_mut_slice()[i] -= STEP;
            let (lp, lm) = if which == 0 {
                (
                    loss(batch, &plus, &pair.text, pair.log_temperature),
                    loss(batch, &minus, &pair.text, pair.log_temperature),
                )
            } else {
                (
                    loss(batch, &pair.image, &plus, pair.log_temperature),
                    loss(batch, &pair.image, &minus, pair.log_temperature),
                )
            };
            (lp - lm) / (2.0 * STEP)
        })
        .collect()
}

/// `||a - n|| / max(||a|| + ||n||, tiny)` over a whole parameter group.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// Worst relative error across the image matrix, text matrix and temperature.
pub fn gradient_error(batch: &Batch, pair: &ProjectionPair) -> f64 {
    let (
        _,
        Gradients {
            image,
            text,
            log_temperature,
        },
    ) = loss_gradients(batch, pair).unwrap();
    let gi = relative_error(image.as_slice(), &numeric_matrix(batch, pair, 0));
    let gt = relative_error(text.as_slice(), &numeric_matrix(batch, pair, 1));
    let lt = pair.log_temperature;
    let nl = (loss(batch, &pair.image, &pair.text, lt + STEP) - loss(batch, &pair.image, &pair.text, lt - STEP))
        / (2.0 * STEP);
    let gl = relative_error(&[log_temperature], &[nl]);
    gi.max(gt).max(gl)
}
