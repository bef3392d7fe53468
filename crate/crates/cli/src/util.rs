//! Plumbing shared by the subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use itsmlab::trainer::load_checkpoint;
use itsmlab::{Error, MapSource, ProjectionPair};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::MapArgs;
use crate::error::{CliError, CliResult};

pub fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))
}

/// Runs `compute` for `0..n` on the pool and hands results to `consume`
/// strictly in index order. Work proceeds in bounded chunks so large
/// outputs never pile up in memory.
pub fn for_each_ordered<T, F, G>(pool: &rayon::ThreadPool, n: usize, compute: F, mut consume: G) -> CliResult<()>
where
    T: Send,
    F: Fn(usize) -> CliResult<T> + Sync,
    G: FnMut(T) -> CliResult<()>,
{
    let chunk = 8 * pool.current_num_threads().max(1);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let results: Vec<CliResult<T>> = pool.install(|| (start..end).into_par_iter().map(&compute).collect());
        for r in results {
            consume(r?)?;
        }
        start = end;
    }
    Ok(())
}

/// Resolves `--classes` against the manifest. Without a filter every class
/// except one named `background` is evaluated.
pub fn resolve_classes(names: &[String], filter: Option<&[String]>) -> CliResult<Vec<usize>> {
    let classes: Vec<usize> = match filter {
        None => (0..names.len())
            .filter(|&i| !names[i].eq_ignore_ascii_case("background"))
            .collect(),
        Some(items) => {
            let mut picked = BTreeSet::new();
            for item in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
                if let Some(i) = names.iter().position(|n| n == item) {
                    picked.insert(i);
                } else if let Some(i) = item.parse::<usize>().ok().filter(|&i| i < names.len()) {
                    picked.insert(i);
                } else {
                    log::warn!("class filter entry {item:?} matches no class");
                }
            }
            picked.into_iter().collect()
        }
    };
    if classes.is_empty() {
        return Err(CliError::Usage("no classes to evaluate".into()));
    }
    Ok(classes)
}

pub fn restrict(present: &BTreeSet<usize>, classes: &[usize]) -> BTreeSet<usize> {
    present.iter().copied().filter(|c| classes.contains(c)).collect()
}

/// The trained pair when the method needs one.
pub fn trained_pair(map: &MapArgs) -> CliResult<Option<ProjectionPair>> {
    let source: MapSource = map.method.into();
    match (&map.checkpoint, source) {
        (Some(dir), MapSource::Eclip) => Ok(Some(load_checkpoint(dir)?.0)),
        (None, MapSource::Eclip) => Err(CliError::Usage("method eclip requires --checkpoint".into())),
        (Some(_), _) => {
            log::warn!("--checkpoint is only used by --method eclip; ignored");
            Ok(None)
        }
        (None, _) => Ok(None),
    }
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| {
        CliError::Core(Error::IoFailure {
            path: path.to_path_buf(),
            source,
        })
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| {
        CliError::Core(Error::IoFailure {
            path: path.to_path_buf(),
            source,
        })
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| {
        CliError::Core(Error::IoFailure {
            path: path.to_path_buf(),
            source,
        })
    })
}

/// File-name-safe form of a sample id or class name.
pub fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}
