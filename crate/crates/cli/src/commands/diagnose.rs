//! `diagnose`: max vs average pooling point maps per sample.
//!
//! Channels are those of the image projection: the original one, or the
//! trained one with `--method eclip`. Writes `shift.json`, `shift.csv` and
//! `points/<id>.png` (candidate points colored by shift kind).

use itsmlab::render::{render_points, shift_color, DrawPoint, RgbImage};
use itsmlab::shift::{diagnose_tokens, Foreground, SizeBucket};
use itsmlab::{aggregate_shift, load_manifest, Error, MapSource, Projection, ShiftTable};
use serde::Serialize;

use crate::args::DiagnoseArgs;
use crate::error::CliResult;
use crate::util::{
    create_dir, file_stem, for_each_ordered, resolve_classes, restrict, thread_pool, trained_pair, write_csv,
    write_json,
};

#[derive(Debug, Clone, Serialize)]
pub struct SampleShiftRow {
    pub id: String,
    pub b2f: usize,
    pub f2b: usize,
    pub unshifted: usize,
    pub fg_ratio: f64,
    pub bucket: SizeBucket,
}

#[derive(Debug, Serialize)]
pub struct ShiftOutput {
    pub projection: &'static str,
    pub channels: usize,
    pub table: ShiftTable,
    pub samples: Vec<SampleShiftRow>,
}

pub fn run(args: &DiagnoseArgs) -> CliResult<ShiftOutput> {
    let ds = load_manifest(&args.common.manifest)?;
    let classes = resolve_classes(ds.classes(), args.common.classes.as_deref())?;
    let trained = trained_pair(&args.map)?;
    let (proj, label): (Projection, &'static str) = match (&trained, MapSource::from(args.map.method)) {
        (Some(pair), MapSource::Eclip) => (pair.projections()?.0, "trained"),
        _ => (ds.original_projections().0, "original"),
    };
    let out = &args.common.out;
    create_dir(out)?;
    if !args.no_points {
        create_dir(&out.join("points"))?;
    }
    let pool = thread_pool(args.common.jobs)?;

    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for_each_ordered(
        &pool,
        ds.len(),
        |i| {
            let s = ds.load_sample(i)?;
            let fg_classes = restrict(&s.present_classes, &classes);
            if fg_classes.is_empty() {
                log::info!("sample {}: no evaluated class present; skipped", s.id);
                return Ok(None);
            }
            let fg = match Foreground::from_labels(&s.gt_mask, &fg_classes, s.grid_size) {
                Ok(fg) => fg,
                Err(Error::EmptyForeground) => {
                    log::warn!("sample {}: foreground is empty after ignore; skipped", s.id);
                    return Ok(None);
                }
                Err(e) => return Err(e.into()),
            };
            let tokens = s.image_tokens.to_matrix()?;
            let shift = diagnose_tokens(&tokens, s.grid_size, &proj, &fg)?;
            let image = if args.no_points {
                None
            } else {
                let base = s.image_path.as_deref().map(RgbImage::read_png).transpose()?;
                let points: Vec<DrawPoint> = shift
                    .candidate
                    .points
                    .iter()
                    .zip(&shift.report.kinds)
                    .map(|(p, &k)| DrawPoint {
                        grid_index: p.index,
                        value: p.value,
                        color: shift_color(k),
                    })
                    .collect();
                Some(render_points(
                    &points,
                    s.grid_size,
                    s.image_size,
                    base.as_ref(),
                    Some(&fg.grid),
                )?)
            };
            Ok(Some((s.id, shift.report, image)))
        },
        |item| {
            if let Some((id, report, image)) = item {
                if let Some(img) = image {
                    img.write_png(&out.join("points").join(format!("{}.png", file_stem(&id))))?;
                }
                rows.push(SampleShiftRow {
                    id,
                    b2f: report.b2f,
                    f2b: report.f2b,
                    unshifted: report.unshifted,
                    fg_ratio: report.fg_ratio,
                    bucket: report.bucket,
                });
                reports.push(report);
            }
            Ok(())
        },
    )?;

    let table = aggregate_shift(&reports)?;
    let output = ShiftOutput {
        projection: label,
        channels: proj.output_dim(),
        table,
        samples: rows,
    };
    write_json(&out.join("shift.json"), &output)?;
    write_csv(&out.join("shift.csv"), &output.samples)?;
    for r in &output.table.rows {
        println!(
            "{:<12} n={:<5} b2f={:.1} f2b={:.1} unshifted={:.1}",
            r.bucket, r.samples, r.b2f, r.f2b, r.unshifted
        );
    }
    Ok(output)
}
