//! `synth`: writes a generated dataset (tensors, masks, manifest).

use std::path::PathBuf;

use itsmlab::synth::{Fixture, FixtureKind, FixtureSpec};

use crate::args::{FixtureArg, SynthArgs};
use crate::error::CliResult;
use crate::util::create_dir;

pub fn run(args: &SynthArgs) -> CliResult<PathBuf> {
    let spec = FixtureSpec {
        kind: match args.kind {
            FixtureArg::Aligned => FixtureKind::Aligned,
            FixtureArg::AntiCorrelated => FixtureKind::AntiCorrelated,
        },
        classes: args.num_classes,
        channels: args.channels,
        grid: (args.grid, args.grid),
        random_projections: args.projection_dim,
        seed: args.seed,
        ..FixtureSpec::default()
    };
    let fx = Fixture::new(spec)?;
    let samples = fx.samples(args.samples, args.sample_seed)?;
    create_dir(&args.out)?;
    let path = fx.write_dataset(&args.out, &samples, &args.split)?;
    println!("{}", path.display());
    Ok(path)
}
