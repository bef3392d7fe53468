//! Semantic-shift diagnostic.
//!
//! For every projected channel we locate the grid cell whose value is
//! closest to the pooled value of that channel. Comparing the locations
//! chosen under max pooling (the reference) with those under average
//! pooling tells which channels moved between foreground and background.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabelGrid, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::itsm::Projection;
use crate::linalg::Matrix;
use crate::pooling::{avg_pool, max_pool, PoolMethod};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPoint {
    /// Row-major grid index.
    pub index: usize,
    pub value: f64,
    /// `|map[index, c] - value|`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMap {
    pub points: Vec<ChannelPoint>,
    pub method: PoolMethod,
    pub grid: (usize, usize),
}

impl PointMap {
    pub fn channels(&self) -> usize {
        self.points.len()
    }
}

/// For each channel, the grid cell closest to the pooled value (ties to the
/// lowest row-major index).
pub fn point_map(maps: &Matrix, grid: (usize, usize), pooled: &[f64], method: PoolMethod) -> Result<PointMap> {
    let (h, w) = grid;
    if h * w != maps.rows() || maps.rows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "grid {h}x{w} does not hold {} positions",
            maps.rows()
        )));
    }
    if pooled.len() != maps.cols() {
        return Err(Error::ShapeMismatch(format!(
            "pooled vector has {} channels, maps have {}",
            pooled.len(),
            maps.cols()
        )));
    }
    let points = pooled
        .iter()
        .enumerate()
        .map(|(c, &value)| {
            let mut best = ChannelPoint {
                index: 0,
                value,
                distance: f64::INFINITY,
            };
            for p in 0..maps.rows() {
                let d = (maps.get(p, c) - value).abs();
                if d < best.distance {
                    best.index = p;
                    best.distance = d;
                }
            }
            best
        })
        .collect();
    Ok(PointMap { points, method, grid })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeBucket {
    #[serde(rename = "(0,0.25]")]
    Small,
    #[serde(rename = "(0.25,0.75]")]
    Medium,
    #[serde(rename = "(0.75,1]")]
    Large,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 3] = [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large];

    pub fn of(ratio: f64) -> Self {
        if ratio <= 0.25 {
            SizeBucket::Small
        } else if ratio <= 0.75 {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SizeBucket::Small => "(0,0.25]",
            SizeBucket::Medium => "(0.25,0.75]",
            SizeBucket::Large => "(0.75,1]",
        }
    }
}

/// Foreground of one image at pixel and token resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Foreground {
    pub grid: Vec<bool>,
    pub grid_size: (usize, usize),
    /// Foreground pixels over non-ignore pixels, at full resolution.
    pub ratio: f64,
}

impl Foreground {
    /// Union of `classes` as foreground, downsampled to the token grid by
    /// majority vote over non-ignore pixels; exact ties count as background.
    pub fn from_labels(gt: &LabelGrid, classes: &BTreeSet<usize>, grid_size: (usize, usize)) -> Result<Self> {
        let (h, w) = grid_size;
        let (hh, ww) = (gt.height(), gt.width());
        if h == 0 || w == 0 || h > hh || w > ww {
            return Err(Error::GridMismatch(format!(
                "cannot downsample a {hh}x{ww} mask to a {h}x{w} grid"
            )));
        }
        let mut fg_votes = vec![0usize; h * w];
        let mut valid_votes = vec![0usize; h * w];
        let (mut fg, mut valid) = (0usize, 0usize);
        for y in 0..hh {
            let r = y * h / hh;
            for x in 0..ww {
                let label = gt.labels()[y * ww + x];
                if label == IGNORE_LABEL {
                    continue;
                }
                let cell = r * w + x * w / ww;
                valid += 1;
                valid_votes[cell] += 1;
                if classes.contains(&(label as usize)) {
                    fg += 1;
                    fg_votes[cell] += 1;
                }
            }
        }
        if fg == 0 {
            return Err(Error::EmptyForeground);
        }
        let grid = fg_votes.iter().zip(&valid_votes).map(|(&f, &v)| 2 * f > v).collect();
        Ok(Self {
            grid,
            grid_size,
            ratio: fg as f64 / valid as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftKind {
    BackgroundToForeground,
    ForegroundToBackground,
    Unshifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub b2f: usize,
    pub f2b: usize,
    pub unshifted: usize,
    pub fg_ratio: f64,
    pub bucket: SizeBucket,
    /// Per-channel classification, in channel order.
    #[serde(skip)]
    pub kinds: Vec<ShiftKind>,
}

impl ShiftReport {
    pub fn channels(&self) -> usize {
        self.b2f + self.f2b + self.unshifted
    }
}

pub fn classify_shift(reference: &PointMap, candidate: &PointMap, fg: &Foreground) -> Result<ShiftReport> {
    if reference.grid != candidate.grid || reference.grid != fg.grid_size {
        return Err(Error::GridMismatch(format!(
            "reference {:?}, candidate {:?}, foreground {:?}",
            reference.grid, candidate.grid, fg.grid_size
        )));
    }
    if reference.channels() != candidate.channels() {
        return Err(Error::GridMismatch(format!(
            "reference has {} channels, candidate {}",
            reference.channels(),
            candidate.channels()
        )));
    }
    let kinds: Vec<ShiftKind> = reference
        .points
        .iter()
        .zip(&candidate.points)
        .map(|(r, c)| match (fg.grid[r.index], fg.grid[c.index]) {
            (false, true) => ShiftKind::BackgroundToForeground,
            (true, false) => ShiftKind::ForegroundToBackground,
            _ => ShiftKind::Unshifted,
        })
        .collect();
    let count = |k: ShiftKind| kinds.iter().filter(|&&x| x == k).count();
    Ok(ShiftReport {
        b2f: count(ShiftKind::BackgroundToForeground),
        f2b: count(ShiftKind::ForegroundToBackground),
        unshifted: count(ShiftKind::Unshifted),
        fg_ratio: fg.ratio,
        bucket: SizeBucket::of(fg.ratio),
        kinds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    /// Bucket label, or `"(0,1]"` for the overall row.
    pub bucket: String,
    pub samples: usize,
    pub b2f: f64,
    pub f2b: f64,
    pub unshifted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTable {
    pub rows: Vec<ShiftRow>,
}

impl ShiftTable {
    pub fn bucket(&self, label: &str) -> Option<&ShiftRow> {
        self.rows.iter().find(|r| r.bucket == label)
    }
}

pub const OVERALL_BUCKET: &str = "(0,1]";

/// Mean counts per foreground-size bucket (buckets without samples are
/// omitted) followed by the overall row.
pub fn aggregate_shift(reports: &[ShiftReport]) -> Result<ShiftTable> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no shift reports to aggregate".into()));
    }
    let row = |label: &str, it: &mut dyn Iterator<Item = &ShiftReport>| -> Option<ShiftRow> {
        let (mut n, mut b2f, mut f2b, mut un) = (0usize, 0u64, 0u64, 0u64);
        for r in it {
            n += 1;
            b2f += r.b2f as u64;
            f2b += r.f2b as u64;
            un += r.unshifted as u64;
        }
        (n > 0).then(|| ShiftRow {
            bucket: label.to_string(),
            samples: n,
            b2f: b2f as f64 / n as f64,
            f2b: f2b as f64 / n as f64,
            unshifted: un as f64 / n as f64,
        })
    };
    let mut rows: Vec<ShiftRow> = SizeBucket::ALL
        .iter()
        .filter_map(|&b| row(b.label(), &mut reports.iter().filter(|r| r.bucket == b)))
        .collect();
    rows.extend(row(OVERALL_BUCKET, &mut reports.iter()));
    Ok(ShiftTable { rows })
}

/// Everything the diagnostic computes for one image.
#[derive(Debug, Clone)]
pub struct SampleShift {
    pub reference: PointMap,
    pub candidate: PointMap,
    pub report: ShiftReport,
}

/// Max-pool reference vs avg-pool candidate in projected space.
///
/// The reference pools the projected channel maps directly, so each of its
/// points sits exactly on its pooled value. The candidate averages tokens
/// before projection; by linearity this equals averaging the projected maps.
pub fn diagnose_tokens(
    tokens: &Matrix,
    grid: (usize, usize),
    proj: &Projection,
    fg: &Foreground,
) -> Result<SampleShift> {
    let maps = proj.apply(tokens)?;
    let max = max_pool(&maps)?;
    let reference = point_map(&maps, grid, &max.vector, PoolMethod::Max)?;
    let avg = proj.apply(&avg_pool(tokens)?.as_row())?;
    let candidate = point_map(&maps, grid, avg.row(0), PoolMethod::Avg)?;
    let report = classify_shift(&reference, &candidate, fg)?;
    Ok(SampleShift {
        reference,
        candidate,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(indices: &[usize], grid: (usize, usize)) -> PointMap {
        PointMap {
            points: indices
                .iter()
                .map(|&index| ChannelPoint {
                    index,
                    value: 0.0,
                    distance: 0.0,
                })
                .collect(),
            method: PoolMethod::Max,
            grid,
        }
    }

    fn fg(cells: &[bool], grid: (usize, usize), ratio: f64) -> Foreground {
        Foreground {
            grid: cells.to_vec(),
            grid_size: grid,
            ratio,
        }
    }

    #[test]
    fn constant_channel_picks_first_cell() {
        let maps = Matrix::from_vec(4, 1, vec![2.0; 4]).unwrap();
        let p = point_map(&maps, (2, 2), &[5.0], PoolMethod::Avg).unwrap();
        assert_eq!(p.points[0].index, 0);
        assert_eq!(p.points[0].distance, 3.0);
    }

    #[test]
    fn max_points_sit_on_argmax() {
        let maps = Matrix::from_vec(3, 2, vec![0.1, 5.0, 0.7, -1.0, 0.3, 5.0]).unwrap();
        let pooled = max_pool(&maps).unwrap();
        let p = point_map(&maps, (1, 3), &pooled.vector, PoolMethod::Max).unwrap();
        let idx: Vec<usize> = p.points.iter().map(|c| c.index).collect();
        assert_eq!(idx, pooled.argmax.unwrap());
        assert!(p.points.iter().all(|c| c.distance == 0.0));
    }

    #[test]
    fn hand_enumerated_2x2() {
        // cells 0,1 background; 2,3 foreground
        let f = fg(&[false, false, true, true], (2, 2), 0.5);
        let reference = pm(&[0, 2, 1], (2, 2));
        let candidate = pm(&[3, 1, 0], (2, 2));
        let r = classify_shift(&reference, &candidate, &f).unwrap();
        assert_eq!((r.b2f, r.f2b, r.unshifted), (1, 1, 1));
        assert_eq!(r.bucket, SizeBucket::Medium);

        let same = classify_shift(&reference, &reference, &f).unwrap();
        assert_eq!((same.b2f, same.f2b, same.unshifted), (0, 0, 3));
    }

    #[test]
    fn all_foreground_has_no_shift() {
        let f = fg(&[true; 4], (2, 2), 1.0);
        let r = classify_shift(&pm(&[0, 1, 2], (2, 2)), &pm(&[3, 3, 0], (2, 2)), &f).unwrap();
        assert_eq!((r.b2f, r.f2b, r.unshifted), (0, 0, 3));
        assert_eq!(r.bucket, SizeBucket::Large);
    }

    #[test]
    fn grid_mismatch() {
        let f = fg(&[true; 4], (2, 2), 1.0);
        assert!(matches!(
            classify_shift(&pm(&[0], (2, 2)), &pm(&[0], (1, 4)), &f),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn majority_downsampling() {
        // 2x4 mask onto a 1x2 grid: left cell 3/4 fg, right cell 2/4 fg (tie -> bg)
        let gt = LabelGrid::new(2, 4, vec![1, 1, 1, 0, 1, 0, 0, 1]).unwrap();
        let classes: BTreeSet<usize> = [1].into();
        let f = Foreground::from_labels(&gt, &classes, (1, 2)).unwrap();
        assert_eq!(f.grid, vec![true, false]);
        assert_eq!(f.ratio, 5.0 / 8.0);

        let empty = LabelGrid::new(1, 2, vec![0, 255]).unwrap();
        assert!(matches!(
            Foreground::from_labels(&empty, &classes, (1, 1)),
            Err(Error::EmptyForeground)
        ));
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(SizeBucket::of(0.25), SizeBucket::Small);
        assert_eq!(SizeBucket::of(0.2500001), SizeBucket::Medium);
        assert_eq!(SizeBucket::of(0.75), SizeBucket::Medium);
        assert_eq!(SizeBucket::of(1.0), SizeBucket::Large);
    }

    fn report(b2f: usize, f2b: usize, bucket: SizeBucket) -> ShiftReport {
        ShiftReport {
            b2f,
            f2b,
            unshifted: 100 - b2f - f2b,
            fg_ratio: 0.5,
            bucket,
            kinds: vec![],
        }
    }

    #[test]
    fn aggregate_means() {
        let t = aggregate_shift(&[report(10, 4, SizeBucket::Medium), report(20, 6, SizeBucket::Medium)]).unwrap();
        let m = t.bucket("(0.25,0.75]").unwrap();
        assert_eq!((m.samples, m.b2f, m.f2b, m.unshifted), (2, 15.0, 5.0, 80.0));
        assert!(t.bucket("(0,0.25]").is_none());
        assert_eq!(t.bucket(OVERALL_BUCKET).unwrap().b2f, 15.0);

        let single = aggregate_shift(&[report(3, 7, SizeBucket::Small)]).unwrap();
        let row = single.bucket("(0,0.25]").unwrap();
        assert_eq!((row.b2f, row.f2b, row.unshifted), (3.0, 7.0, 90.0));
        assert!(aggregate_shift(&[]).is_err());
    }
}
