//! `train`: fits the projection pair and writes `checkpoint/` and `loss.csv`.

use itsmlab::trainer::{save_checkpoint, CheckpointMeta, TrainOutcome};
use itsmlab::{load_manifest, train, TrainConfig};
use serde::Serialize;

use crate::args::TrainArgs;
use crate::error::CliResult;
use crate::util::{for_each_ordered, resolve_classes, restrict, thread_pool, write_csv};

#[derive(Serialize)]
struct LossRow {
    step: usize,
    epoch: usize,
    loss: f64,
}

pub fn run(args: &TrainArgs) -> CliResult<TrainOutcome> {
    let config = TrainConfig {
        learning_rate: args.lr,
        weight_decay: args.weight_decay,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.common.seed,
        max_steps: args.max_steps,
        proj_dim: args.dim,
        schedule: args.schedule.into(),
        ..TrainConfig::default()
    };
    config.validate()?;
    let ds = load_manifest(&args.common.manifest)?;
    let classes = resolve_classes(ds.classes(), args.common.classes.as_deref())?;
    let text = ds.text_bank().embeddings.to_matrix()?;
    let pool = thread_pool(args.common.jobs)?;

    let mut samples = Vec::with_capacity(ds.len());
    for_each_ordered(
        &pool,
        ds.len(),
        |i| ds.load_sample(i).map_err(Into::into),
        |mut s| {
            s.present_classes = restrict(&s.present_classes, &classes);
            if !s.present_classes.is_empty() {
                samples.push(s);
            }
            Ok(())
        },
    )?;
    log::info!("training on {} of {} samples", samples.len(), ds.len());

    let outcome = pool.install(|| train(&samples, &text, &config))?;
    let out = &args.common.out;
    let meta = CheckpointMeta {
        config,
        steps: outcome.steps,
        seed: args.common.seed,
        samples: samples.len(),
    };
    save_checkpoint(out.join("checkpoint"), &outcome.pair, &meta)?;
    let rows: Vec<LossRow> = outcome
        .curve
        .iter()
        .map(|p| LossRow {
            step: p.step,
            epoch: p.epoch,
            loss: p.loss,
        })
        .collect();
    write_csv(&out.join("loss.csv"), &rows)?;
    if let (Some(first), Some(last)) = (outcome.curve.first(), outcome.curve.last()) {
        println!(
            "trained {} steps, loss {:.4} -> {:.4}",
            outcome.steps, first.loss, last.loss
        );
    }
    Ok(outcome)
}
