//! `render`: one overlay PNG per (sample, evaluated present class), named
//! `<id>_<class>.png`.

use itsmlab::render::{overlay, RgbImage};
use itsmlab::{load_manifest, Error, MapPipeline, MapSource};

use crate::args::RenderArgs;
use crate::error::{CliError, CliResult};
use crate::util::{create_dir, file_stem, for_each_ordered, resolve_classes, restrict, thread_pool, trained_pair};

pub fn run(args: &RenderArgs) -> CliResult<usize> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError::Usage(format!(
            "--alpha must lie in [0, 1], got {}",
            args.alpha
        )));
    }
    let ds = load_manifest(&args.common.manifest)?;
    let names = ds.classes().to_vec();
    let classes = resolve_classes(&names, args.common.classes.as_deref())?;
    let indices: Vec<usize> = match &args.samples {
        Some(ids) => ids
            .iter()
            .map(|id| ds.position(id).ok_or_else(|| Error::MissingSample(id.clone())))
            .collect::<Result<_, _>>()?,
        None => (0..ds.len()).collect(),
    };
    let source: MapSource = args.map.method.into();
    let trained = trained_pair(&args.map)?;
    let text = ds.text_bank().embeddings.to_matrix()?;
    let pipeline = MapPipeline::new(source, text, ds.original_projections(), trained.as_ref())?;
    let out = &args.common.out;
    create_dir(out)?;
    let pool = thread_pool(args.common.jobs)?;

    let mut written = 0;
    for_each_ordered(
        &pool,
        indices.len(),
        |k| {
            let s = ds.load_sample(indices[k])?;
            let map = pipeline.map(&s)?;
            let base = s.image_path.as_deref().map(RgbImage::read_png).transpose()?;
            let mut images = Vec::new();
            for c in restrict(&s.present_classes, &classes) {
                let slice = map
                    .slice_for_class(c)
                    .ok_or_else(|| Error::ShapeMismatch(format!("map has no slice for class {c}")))?;
                let img = overlay(slice, map.height(), map.width(), base.as_ref(), args.alpha)?;
                images.push((format!("{}_{}.png", file_stem(&s.id), file_stem(&names[c])), img));
            }
            if images.is_empty() {
                log::warn!("sample {}: no evaluated class present; nothing rendered", s.id);
            }
            Ok(images)
        },
        |images| {
            for (name, img) in images {
                img.write_png(&out.join(name))?;
                written += 1;
            }
            Ok(())
        },
    )?;
    println!("wrote {written} overlays to {}", out.display());
    Ok(written)
}
