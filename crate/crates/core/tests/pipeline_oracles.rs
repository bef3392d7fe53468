//! Dataset-level scores against a from-scratch evaluation of the same inputs.

mod common;

use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use common::{ap_oracle, bilinear_oracle, cosine, iou_oracle, project, random_matrix, rng};
use itsmlab::metrics::EvalSample;
use itsmlab::shift::{ChannelPoint, Foreground};
use itsmlab::synth::{Fixture, FixtureSpec};
use itsmlab::{
    classify_shift, mean_ap, miou, msc, point_map, LabelGrid, MapPipeline, MapSource, PointMap, PoolMethod, Projection,
    ThresholdGrid,
};
use rand::Rng;

/// Per-class mean of per-sample values, then the mean over classes.
fn two_level_mean(values: &[(usize, f64)]) -> f64 {
    let classes: BTreeSet<usize> = values.iter().map(|v| v.0).collect();
    let per_class: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let v: Vec<f64> = values.iter().filter(|v| v.0 == c).map(|v| v.1).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

#[test]
fn five_sample_evaluation_matches_oracle() {
    let fx = Fixture::new(FixtureSpec {
        classes: 3,
        channels: 12,
        grid: (4, 5),
        random_projections: Some(6),
        ..FixtureSpec::default()
    })
    .unwrap();
    let (pi, pt) = fx.projections.clone().unwrap();
    let samples = fx.samples(5, 8).unwrap();
    let pipeline = MapPipeline::new(
        MapSource::Clip,
        fx.text.clone(),
        (
            Projection::new(pi.clone()).unwrap(),
            Projection::new(pt.clone()).unwrap(),
        ),
        None,
    )
    .unwrap();

    let mut ious = Vec::new();
    let mut scs = Vec::new();
    for s in &samples {
        let tokens = s.image_tokens.to_matrix().unwrap();
        let (h, w) = s.grid_size;
        let (hh, ww) = s.image_size;
        let ignore = s.gt_mask.ignore_mask();
        for &class in &s.present_classes {
            let t = project(fx.text.row(class), &pt);
            let plane: Vec<f64> = (0..h * w).map(|p| cosine(&project(tokens.row(p), &pi), &t)).collect();
            let up = bilinear_oracle(&plane, h, w, hh, ww);
            let lo = up.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = up.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let slice: Vec<f32> = up.iter().map(|v| ((v - lo) / (hi - lo)) as f32).collect();
            let fg = s.gt_mask.class_mask(class);
            ious.push((class, iou_oracle(&slice, &fg, &ignore).0));
            let (mut fs, mut fnn, mut bs, mut bn) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..slice.len() {
                if ignore[i] {
                    continue;
                }
                if fg[i] {
                    fs += slice[i] as f64;
                    fnn += 1.0;
                } else {
                    bs += slice[i] as f64;
                    bn += 1.0;
                }
            }
            scs.push((class, 100.0 * (fs / fnn - bs / bn)));
        }
    }

    let maps: Vec<_> = samples.iter().map(|s| pipeline.map(s).unwrap()).collect();
    let mut eval: Vec<_> = samples
        .iter()
        .zip(&maps)
        .map(|(s, m)| EvalSample {
            map: m,
            gt: &s.gt_mask,
            present: &s.present_classes,
        })
        .collect();
    let classes = [1, 2, 3];
    let (_, mi) = miou(&eval, &classes, &fx.class_names, ThresholdGrid::default()).unwrap();
    let (_, ms) = msc(&eval, &classes, &fx.class_names).unwrap();
    assert_abs_diff_eq!(mi.unwrap(), 100.0 * two_level_mean(&ious), epsilon = 1e-6);
    assert_abs_diff_eq!(ms.unwrap(), two_level_mean(&scs), epsilon = 1e-6);

    // sample and class order do not matter
    eval.reverse();
    let (_, mi2) = miou(&eval, &[3, 1, 2], &fx.class_names, ThresholdGrid::default()).unwrap();
    assert_abs_diff_eq!(mi.unwrap(), mi2.unwrap(), epsilon = 1e-12);
}

#[test]
fn avg_point_map_matches_exhaustive_argmin() {
    let mut r = rng(31);
    for _ in 0..20 {
        let maps = random_matrix(&mut r, 16, 8);
        let pooled: Vec<f64> = (0..8)
            .map(|c| (0..16).map(|p| maps.get(p, c)).sum::<f64>() / 16.0)
            .collect();
        let pm = point_map(&maps, (4, 4), &pooled, PoolMethod::Avg).unwrap();
        for (c, &mean) in pooled.iter().enumerate() {
            let mut best = 0;
            for p in 1..16 {
                if (maps.get(p, c) - mean).abs() < (maps.get(best, c) - mean).abs() {
                    best = p;
                }
            }
            assert_eq!(pm.points[c].index, best);
            assert_eq!(pm.points[c].value, mean);
        }
    }
}

#[test]
fn hand_placed_points_on_a_two_by_two_grid() {
    // cells 0 and 3 foreground
    let fg = Foreground {
        grid: vec![true, false, false, true],
        grid_size: (2, 2),
        ratio: 0.5,
    };
    let pm = |idx: [usize; 3]| PointMap {
        points: idx
            .iter()
            .map(|&index| ChannelPoint {
                index,
                value: 0.0,
                distance: 0.0,
            })
            .collect(),
        method: PoolMethod::Max,
        grid: (2, 2),
    };
    // channel 0: bg -> fg, channel 1: fg -> bg, channel 2: fg -> fg
    let report = classify_shift(&pm([1, 0, 3]), &pm([3, 2, 0]), &fg).unwrap();
    assert_eq!((report.b2f, report.f2b, report.unshifted), (1, 1, 1));
    let same = classify_shift(&pm([1, 0, 3]), &pm([1, 0, 3]), &fg).unwrap();
    assert_eq!((same.b2f, same.f2b, same.unshifted), (0, 0, 3));
}

#[test]
fn majority_vote_ties_count_as_background() {
    // 2x4 mask onto a 1x2 grid: left cell 2 of 4 foreground, right cell 3 of 4
    let gt = LabelGrid::new(2, 4, vec![1, 0, 1, 1, 1, 0, 0, 1]).unwrap();
    let fg = Foreground::from_labels(&gt, &BTreeSet::from([1]), (1, 2)).unwrap();
    assert_eq!(fg.grid, vec![false, true]);
    assert_abs_diff_eq!(fg.ratio, 5.0 / 8.0);
}

#[test]
fn mean_ap_matches_oracle_and_ignores_monotone_transforms() {
    let mut r = rng(32);
    let n = 20;
    let scores: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| {
            let mut s: BTreeSet<usize> = (1..4).filter(|_| r.random_bool(0.4)).collect();
            s.insert(1 + i % 3);
            s
        })
        .collect();
    let names: Vec<String> = (0..4).map(|c| format!("c{c}")).collect();
    let (table, m) = mean_ap(&scores, &labels, &[1, 2, 3], &names).unwrap();
    let mut want = 0.0;
    for c in 1..4 {
        let s: Vec<f64> = scores.iter().map(|v| v[c]).collect();
        let p: Vec<bool> = labels.iter().map(|l| l.contains(&c)).collect();
        let ap = ap_oracle(&s, &p);
        assert_abs_diff_eq!(table[c - 1].value, 100.0 * ap, epsilon = 1e-9);
        want += 100.0 * ap / 3.0;
    }
    assert_abs_diff_eq!(m.unwrap(), want, epsilon = 1e-9);

    let squashed: Vec<Vec<f64>> = scores
        .iter()
        .map(|v| v.iter().map(|x| (3.0 * x).exp()).collect())
        .collect();
    let (_, m2) = mean_ap(&squashed, &labels, &[1, 2, 3], &names).unwrap();
    assert_abs_diff_eq!(m.unwrap(), m2.unwrap(), epsilon = 1e-12);
}
