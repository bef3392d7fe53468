//! Library routines against independent brute-force reimplementations.

mod common;

use approx::assert_abs_diff_eq;
use common::{ap_oracle, bilinear_oracle, cosine, iou_oracle, project, random_mask, random_matrix, rng};
use itsmlab::itsm::resize_bilinear;
use itsmlab::metrics::average_precision;
use itsmlab::{
    best_threshold_iou, finalize_itsm, itsm_raw, masked_max_pool, max_pool, prepare_attention, MapSource, Matrix,
    Projection, ThresholdGrid,
};
use rand::Rng;

#[test]
fn itsm_raw_matches_cosine_oracle() {
    let mut r = rng(11);
    for _ in 0..50 {
        let ni = r.random_range(1..=64);
        let nt = r.random_range(1..=8);
        let c = r.random_range(1..=32);
        let ct = r.random_range(1..=32);
        let d = r.random_range(1..=32);
        let tokens = random_matrix(&mut r, ni, c);
        let text = random_matrix(&mut r, nt, ct);
        let pi = random_matrix(&mut r, c, d);
        let pt = random_matrix(&mut r, ct, d);
        let got = itsm_raw(
            &tokens,
            &text,
            &Projection::new(pi.clone()).unwrap(),
            &Projection::new(pt.clone()).unwrap(),
        )
        .unwrap();
        assert_eq!((got.rows(), got.cols()), (ni, nt));
        for p in 0..ni {
            let u = project(tokens.row(p), &pi);
            for k in 0..nt {
                let v = project(text.row(k), &pt);
                assert_abs_diff_eq!(got.get(p, k), cosine(&u, &v), epsilon = 1e-6);
            }
        }
    }
}

#[test]
fn bilinear_matches_tent_oracle() {
    let mut r = rng(12);
    for _ in 0..50 {
        let (sh, sw) = (r.random_range(1..=9), r.random_range(1..=9));
        let (dh, dw) = (r.random_range(1..=40), r.random_range(1..=40));
        let src: Vec<f64> = (0..sh * sw).map(|_| r.random_range(-2.0..2.0)).collect();
        let got = resize_bilinear(&src, sh, sw, dh, dw);
        for (a, b) in got.iter().zip(bilinear_oracle(&src, sh, sw, dh, dw)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }
}

#[test]
fn bilinear_two_by_two_upsample() {
    // source coordinates per axis: -0.25, 0.25, 0.75, 1.25 clamped to 0, .25, .75, 1
    let out = resize_bilinear(&[0.0, 1.0, 2.0, 3.0], 2, 2, 4, 4);
    let t = [0.0, 0.25, 0.75, 1.0];
    for y in 0..4 {
        for x in 0..4 {
            assert_abs_diff_eq!(out[y * 4 + x], 2.0 * t[y] + t[x], epsilon = 1e-15);
        }
    }
}

#[test]
fn finalize_matches_oracle_pipeline() {
    let mut r = rng(13);
    for _ in 0..20 {
        let (h, w) = (r.random_range(2..=6), r.random_range(2..=6));
        let (hh, ww) = (r.random_range(h..=24), r.random_range(w..=24));
        let nt = r.random_range(1..=4);
        let raw = random_matrix(&mut r, h * w, nt);
        let map = finalize_itsm(&raw, (h, w), (hh, ww), (0..nt).collect(), MapSource::Clip).unwrap();
        for k in 0..nt {
            let plane: Vec<f64> = (0..h * w).map(|p| raw.get(p, k)).collect();
            let up = bilinear_oracle(&plane, h, w, hh, ww);
            let lo = up.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = up.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (got, v) in map.slice(k).iter().zip(&up) {
                assert_abs_diff_eq!(*got as f64, (v - lo) / (hi - lo), epsilon = 1e-6);
            }
        }
    }
}

#[test]
fn grid_search_iou_matches_exhaustive_thresholds() {
    let mut r = rng(14);
    for case in 0..50 {
        let n = 16 * 16;
        // half the cases snap values onto the grid to exercise boundaries
        let slice: Vec<f32> = (0..n)
            .map(|_| {
                if case % 2 == 0 {
                    r.random_range(0..=100) as f32 / 100.0
                } else {
                    r.random_range(0.0f32..=1.0)
                }
            })
            .collect();
        let mut gt = random_mask(&mut r, n, 0.4);
        gt[0] = true;
        let mut ignore = random_mask(&mut r, n, 0.1);
        ignore[0] = false;
        let got = best_threshold_iou(&slice, &gt, &ignore, ThresholdGrid::default()).unwrap();
        assert_eq!(got, iou_oracle(&slice, &gt, &ignore), "case {case}");
    }
}

#[test]
fn average_precision_matches_oracle() {
    let mut r = rng(15);
    for _ in 0..100 {
        let n = r.random_range(1..=30);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..10) as f64 / 10.0).collect();
        let mut positive = random_mask(&mut r, n, 0.3);
        positive[r.random_range(0..n)] = true;
        let got = average_precision(&scores, &positive).unwrap();
        assert_abs_diff_eq!(got, ap_oracle(&scores, &positive), epsilon = 1e-12);
    }
    assert_eq!(average_precision(&[0.9, 0.1], &[true, false]), Some(1.0));
    assert_eq!(average_precision(&[0.9, 0.1], &[false, false]), None);
}

#[test]
fn attention_reduction_and_masked_max_match_oracle() {
    let mut r = rng(16);
    for _ in 0..50 {
        let (heads, n, c) = (r.random_range(1..=6), r.random_range(1..=30), r.random_range(1..=16));
        let raw = Matrix::from_vec(heads, n, (0..heads * n).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let tokens = random_matrix(&mut r, n, c);
        let mask = prepare_attention(&raw, c).unwrap();
        for p in 0..n {
            let mean = (0..heads).map(|h| raw.get(h, p)).sum::<f64>() / heads as f64;
            assert_abs_diff_eq!(mask.reduced()[p], mean, epsilon = 1e-15);
            assert!(mask.expanded().row(p).iter().all(|&v| v == mask.reduced()[p]));
        }
        let pooled = masked_max_pool(&tokens, &mask).unwrap();
        for ch in 0..c {
            let want = (0..n)
                .map(|p| tokens.get(p, ch) * mask.reduced()[p])
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(pooled.vector[ch], want);
        }
    }
}

#[test]
fn all_ones_mask_equals_max_pool() {
    let mut r = rng(17);
    for _ in 0..50 {
        let (heads, n, c) = (r.random_range(1..=4), r.random_range(1..=30), r.random_range(1..=16));
        let tokens = random_matrix(&mut r, n, c);
        let ones = Matrix::from_vec(heads, n, vec![1.0; heads * n]).unwrap();
        let mask = prepare_attention(&ones, c).unwrap();
        let mmp = masked_max_pool(&tokens, &mask).unwrap();
        let max = max_pool(&tokens).unwrap();
        assert_eq!(mmp.vector, max.vector);
        assert_eq!(mmp.argmax, max.argmax);
    }
}
