//! `evaluate`: maps for every sample, scored against the masks.
//!
//! Writes `metrics.json`, `per_class.csv`, `per_sample.csv` and, with
//! `--emit-itsm`, one `itsm/<id>.ften` tensor (H x W x classes) per sample.

use std::collections::BTreeSet;

use itsmlab::metrics::{class_means, sample_terms, SampleTerms};
use itsmlab::pipeline::recognition_scores;
use itsmlab::{load_manifest, mean_ap, write_tensor, Itsm, MapPipeline, MapSource, MetricsReport, ThresholdGrid};
use serde::Serialize;

use crate::args::EvaluateArgs;
use crate::error::CliResult;
use crate::util::{
    create_dir, file_stem, for_each_ordered, resolve_classes, thread_pool, trained_pair, write_csv, write_json,
};

#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub method: MapSource,
    pub step: f64,
    pub classes: Vec<String>,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Serialize)]
struct ClassRow {
    class_id: usize,
    class: String,
    iou: Option<f64>,
    iou_samples: usize,
    sc: Option<f64>,
    sc_samples: usize,
    ap: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SampleRow {
    id: String,
    class_id: usize,
    class: String,
    iou: f64,
    sc: Option<f64>,
}

struct Outcome {
    id: String,
    present: BTreeSet<usize>,
    terms: SampleTerms,
    scores: Vec<f64>,
    map: Option<Itsm>,
}

pub fn run(args: &EvaluateArgs) -> CliResult<EvaluationReport> {
    let ds = load_manifest(&args.common.manifest)?;
    let names = ds.classes().to_vec();
    let classes = resolve_classes(&names, args.common.classes.as_deref())?;
    let grid = ThresholdGrid::from_step(args.step)?;
    let source: MapSource = args.map.method.into();
    let trained = trained_pair(&args.map)?;
    let text = ds.text_bank().embeddings.to_matrix()?;
    let original = ds.original_projections();
    let pipeline = MapPipeline::new(source, text.clone(), original.clone(), trained.as_ref())?;

    let out = &args.common.out;
    create_dir(out)?;
    if args.emit_itsm {
        create_dir(&out.join("itsm"))?;
    }
    let pool = thread_pool(args.common.jobs)?;

    let mut iou_terms = Vec::new();
    let mut sc_terms = Vec::new();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut sample_rows = Vec::new();
    for_each_ordered(
        &pool,
        ds.len(),
        |i| {
            let s = ds.load_sample(i)?;
            let map = pipeline.map(&s)?;
            let terms = sample_terms(&map, &s.gt_mask, &s.present_classes, &classes, grid)?;
            let scores = recognition_scores(&s, &text, &original.0, &original.1)?;
            Ok(Outcome {
                id: s.id,
                present: s.present_classes,
                terms,
                scores,
                map: args.emit_itsm.then_some(map),
            })
        },
        |o| {
            if let Some(map) = &o.map {
                write_tensor(
                    &map.to_tensor()?,
                    out.join("itsm").join(format!("{}.ften", file_stem(&o.id))),
                )?;
            }
            for &(class, iou) in &o.terms.iou {
                let sc = o.terms.sc.iter().find(|t| t.0 == class).map(|t| t.1);
                sample_rows.push(SampleRow {
                    id: o.id.clone(),
                    class_id: class,
                    class: names[class].clone(),
                    iou: 100.0 * iou,
                    sc,
                });
            }
            iou_terms.extend(o.terms.iou);
            sc_terms.extend(o.terms.sc);
            scores.push(o.scores);
            labels.push(o.present);
            Ok(())
        },
    )?;

    let (per_class_iou, miou) = class_means(&iou_terms, &classes, &names, 100.0);
    let (per_class_sc, msc) = class_means(&sc_terms, &classes, &names, 1.0);
    let (per_class_ap, map) = mean_ap(&scores, &labels, &classes, &names)?;
    let class_rows: Vec<ClassRow> = classes
        .iter()
        .map(|&c| {
            let iou = per_class_iou.iter().find(|s| s.class == c);
            let sc = per_class_sc.iter().find(|s| s.class == c);
            ClassRow {
                class_id: c,
                class: names[c].clone(),
                iou: iou.map(|s| s.value),
                iou_samples: iou.map_or(0, |s| s.samples),
                sc: sc.map(|s| s.value),
                sc_samples: sc.map_or(0, |s| s.samples),
                ap: per_class_ap.iter().find(|s| s.class == c).map(|s| s.value),
            }
        })
        .collect();
    let report = EvaluationReport {
        method: source,
        step: args.step,
        classes: classes.iter().map(|&c| names[c].clone()).collect(),
        metrics: MetricsReport {
            per_class_iou,
            miou,
            per_class_sc,
            msc,
            per_class_ap,
            map,
            sample_count: labels.len(),
        },
    };
    write_json(&out.join("metrics.json"), &report)?;
    write_csv(&out.join("per_class.csv"), &class_rows)?;
    write_csv(&out.join("per_sample.csv"), &sample_rows)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
    println!(
        "{source}: {} samples, mIoU {} mSC {} mAP {}",
        report.metrics.sample_count,
        fmt(report.metrics.miou),
        fmt(report.metrics.msc),
        fmt(report.metrics.map)
    );
    Ok(report)
}
