//! Explainability and recognition metrics.
//!
//! * grid-search IoU: per image and class, the best IoU of `slice >= t`
//!   over the threshold grid `t = 0, step, 2 * step, ..., 1`;
//! * score contrast: mean map value on the class minus mean value on all
//!   other non-ignore pixels;
//! * interpolated average precision over per-image confidence scores.
//!
//! Ignore pixels never enter any metric. Per-class values are averaged over
//! the images that contain the class, then averaged over classes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::LabelGrid;
use crate::error::{Error, Result};
use crate::itsm::Itsm;

/// Thresholds `k / n` for `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdGrid {
    divisions: usize,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self { divisions: 100 }
    }
}

impl ThresholdGrid {
    /// `step` must divide 1 evenly (0.01, 0.05, 0.1, ...).
    pub fn from_step(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidConfig(format!("threshold step {step} not in (0, 1]")));
        }
        let n = (1.0 / step).round();
        if (n * step - 1.0).abs() > 1e-9 || n > 1e6 {
            return Err(Error::InvalidConfig(format!("threshold step {step} does not divide 1")));
        }
        Ok(Self { divisions: n as usize })
    }

    pub fn divisions(&self) -> usize {
        self.divisions
    }

    pub fn len(&self) -> usize {
        self.divisions + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn threshold(&self, k: usize) -> f64 {
        k as f64 / self.divisions as f64
    }

    /// Largest `k` with `v >= k / n`, or `None` when `v < 0`.
    fn bin(&self, v: f64) -> Option<usize> {
        let n = self.divisions;
        if !(v >= 0.0) {
            return None;
        }
        let mut k = ((v * n as f64).floor() as usize).min(n);
        while k > 0 && v < self.threshold(k) {
            k -= 1;
        }
        while k < n && v >= self.threshold(k + 1) {
            k += 1;
        }
        Some(k)
    }
}

/// Best IoU over the threshold grid and the smallest threshold achieving it.
pub fn best_threshold_iou(slice: &[f32], gt: &[bool], ignore: &[bool], grid: ThresholdGrid) -> Result<(f64, f64)> {
    if slice.len() != gt.len() || gt.len() != ignore.len() {
        return Err(Error::ShapeMismatch(format!(
            "slice {}, gt {}, ignore {} pixels",
            slice.len(),
            gt.len(),
            ignore.len()
        )));
    }
    let n = grid.divisions();
    let mut fg_hist = vec![0u64; n + 1];
    let mut bg_hist = vec![0u64; n + 1];
    let mut gt_total = 0u64;
    for ((&v, &g), &ig) in slice.iter().zip(gt).zip(ignore) {
        if ig {
            continue;
        }
        if g {
            gt_total += 1;
        }
        if let Some(b) = grid.bin(v as f64) {
            if g {
                fg_hist[b] += 1;
            } else {
                bg_hist[b] += 1;
            }
        }
    }
    if gt_total == 0 {
        return Err(Error::EmptyForeground);
    }
    // suffix sums: predicted set at threshold k is every bin >= k
    let mut ious = vec![0.0; n + 1];
    let (mut tp, mut fp) = (0u64, 0u64);
    for k in (0..=n).rev() {
        tp += fg_hist[k];
        fp += bg_hist[k];
        ious[k] = tp as f64 / (gt_total + fp) as f64;
    }
    let mut best = 0;
    for k in 1..=n {
        if ious[k] > ious[best] {
            best = k;
        }
    }
    Ok((ious[best], grid.threshold(best)))
}

/// Score contrast in percent, or `None` when the class has no foreground or
/// no background pixels.
pub fn score_contrast(slice: &[f32], gt: &[bool], ignore: &[bool]) -> Result<Option<f64>> {
    if slice.len() != gt.len() || gt.len() != ignore.len() {
        return Err(Error::ShapeMismatch("slice, gt and ignore differ in size".into()));
    }
    let (mut fg_sum, mut fg_n, mut bg_sum, mut bg_n) = (0.0f64, 0usize, 0.0f64, 0usize);
    for ((&v, &g), &ig) in slice.iter().zip(gt).zip(ignore) {
        if ig {
            continue;
        }
        if g {
            fg_sum += v as f64;
            fg_n += 1;
        } else {
            bg_sum += v as f64;
            bg_n += 1;
        }
    }
    if fg_n == 0 || bg_n == 0 {
        return Ok(None);
    }
    Ok(Some(100.0 * (fg_sum / fg_n as f64 - bg_sum / bg_n as f64)))
}

/// Per-image metric terms, one entry per evaluated present class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTerms {
    pub iou: Vec<(usize, f64)>,
    pub sc: Vec<(usize, f64)>,
}

/// Computes the IoU and score-contrast terms of one image for every class
/// that is both present and in `classes`.
pub fn sample_terms(
    map: &Itsm,
    gt: &LabelGrid,
    present: &BTreeSet<usize>,
    classes: &[usize],
    grid: ThresholdGrid,
) -> Result<SampleTerms> {
    if (map.height(), map.width()) != (gt.height(), gt.width()) {
        return Err(Error::ShapeMismatch(format!(
            "map is {}x{}, mask is {}x{}",
            map.height(),
            map.width(),
            gt.height(),
            gt.width()
        )));
    }
    let ignore = gt.ignore_mask();
    let mut terms = SampleTerms::default();
    for &class in classes.iter().filter(|c| present.contains(c)) {
        let slice = map
            .slice_for_class(class)
            .ok_or_else(|| Error::ShapeMismatch(format!("map has no slice for class {class}")))?;
        let fg = gt.class_mask(class);
        let (iou, _) = best_threshold_iou(slice, &fg, &ignore, grid)?;
        terms.iou.push((class, iou));
        match score_contrast(slice, &fg, &ignore)? {
            Some(sc) => terms.sc.push((class, sc)),
            None => log::info!("class {class}: no background pixels, skipped in score contrast"),
        }
    }
    Ok(terms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: usize,
    pub name: String,
    pub value: f64,
    pub samples: usize,
}

/// Mean of per-sample values within each class (class order of `classes`),
/// then unweighted mean across classes that have at least one value.
pub fn class_means<'a>(
    values: impl IntoIterator<Item = &'a (usize, f64)>,
    classes: &[usize],
    names: &[String],
    scale: f64,
) -> (Vec<ClassScore>, Option<f64>) {
    let mut sums = vec![(0.0f64, 0usize); classes.len()];
    for &(class, v) in values {
        if let Some(i) = classes.iter().position(|&c| c == class) {
            sums[i].0 += v;
            sums[i].1 += 1;
        }
    }
    let table: Vec<ClassScore> = classes
        .iter()
        .zip(&sums)
        .filter(|(_, s)| s.1 > 0)
        .map(|(&class, &(sum, n))| ClassScore {
            class,
            name: names.get(class).cloned().unwrap_or_else(|| class.to_string()),
            value: scale * sum / n as f64,
            samples: n,
        })
        .collect();
    let mean = (!table.is_empty()).then(|| table.iter().map(|c| c.value).sum::<f64>() / table.len() as f64);
    (table, mean)
}

/// One evaluated image: its map, mask and present classes.
#[derive(Debug, Clone, Copy)]
pub struct EvalSample<'a> {
    pub map: &'a Itsm,
    pub gt: &'a LabelGrid,
    pub present: &'a BTreeSet<usize>,
}

/// Grid-search mIoU in percent; `None` when no class was evaluated.
pub fn miou(
    samples: &[EvalSample<'_>],
    classes: &[usize],
    names: &[String],
    grid: ThresholdGrid,
) -> Result<(Vec<ClassScore>, Option<f64>)> {
    let terms = samples
        .iter()
        .map(|s| sample_terms(s.map, s.gt, s.present, classes, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(class_means(terms.iter().flat_map(|t| &t.iou), classes, names, 100.0))
}

/// Mean score contrast in percent, within `[-100, 100]`.
pub fn msc(samples: &[EvalSample<'_>], classes: &[usize], names: &[String]) -> Result<(Vec<ClassScore>, Option<f64>)> {
    let mut values = Vec::new();
    for s in samples {
        if (s.map.height(), s.map.width()) != (s.gt.height(), s.gt.width()) {
            return Err(Error::ShapeMismatch("map and mask differ in size".into()));
        }
        let ignore = s.gt.ignore_mask();
        for &class in classes.iter().filter(|c| s.present.contains(c)) {
            let slice = s
                .map
                .slice_for_class(class)
                .ok_or_else(|| Error::ShapeMismatch(format!("map has no slice for class {class}")))?;
            match score_contrast(slice, &s.gt.class_mask(class), &ignore)? {
                Some(sc) => values.push((class, sc)),
                None => log::info!("class {class}: no foreground or background pixels, skipped"),
            }
        }
    }
    Ok(class_means(&values, classes, names, 1.0))
}

/// Interpolated average precision of one ranking, as a fraction.
/// Samples are ranked by descending score, ties kept in input order.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut recall = Vec::with_capacity(order.len() + 2);
    let mut precision = Vec::with_capacity(order.len() + 2);
    recall.push(0.0);
    precision.push(0.0);
    let mut tp = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            tp += 1;
        }
        recall.push(tp as f64 / total_pos as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    for i in 1..recall.len() {
        if recall[i] != recall[i - 1] {
            ap += (recall[i] - recall[i - 1]) * precision[i];
        }
    }
    Some(ap)
}

/// mAP in percent over `classes`. Classes without positives are excluded.
pub fn mean_ap(
    scores: &[Vec<f64>],
    labels: &[BTreeSet<usize>],
    classes: &[usize],
    names: &[String],
) -> Result<(Vec<ClassScore>, Option<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} score vectors for {} label sets",
            scores.len(),
            labels.len()
        )));
    }
    let mut values = Vec::new();
    for &class in classes {
        let column = scores
            .iter()
            .map(|s| {
                s.get(class)
                    .copied()
                    .ok_or_else(|| Error::ShapeMismatch(format!("no score for class {class}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let positive: Vec<bool> = labels.iter().map(|l| l.contains(&class)).collect();
        match average_precision(&column, &positive) {
            Some(ap) => values.push((class, ap)),
            None => log::warn!("class {class} has no positives; excluded from mAP"),
        }
    }
    Ok(class_means(&values, classes, names, 100.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_iou: Vec<ClassScore>,
    pub miou: Option<f64>,
    pub per_class_sc: Vec<ClassScore>,
    pub msc: Option<f64>,
    pub per_class_ap: Vec<ClassScore>,
    pub map: Option<f64>,
    pub sample_count: usize,
}
