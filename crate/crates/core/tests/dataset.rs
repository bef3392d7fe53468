use std::fs;

use itsmlab::dataset::IGNORE_LABEL;
use itsmlab::synth::{Fixture, FixtureSpec};
use itsmlab::{load_manifest, Error, LabelGrid, Manifest};

fn small_fixture() -> Fixture {
    Fixture::new(FixtureSpec {
        classes: 4,
        channels: 8,
        grid: (4, 4),
        ..FixtureSpec::default()
    })
    .unwrap()
}

#[test]
fn loads_what_the_fixture_wrote_in_manifest_order() {
    let dir = tempfile::tempdir().unwrap();
    let fx = small_fixture();
    let samples = fx.samples(7, 2).unwrap();
    let path = fx.write_dataset(dir.path(), &samples, "val").unwrap();
    let ds = load_manifest(&path).unwrap();
    assert_eq!(ds.len(), 7);
    assert_eq!(ds.classes(), &fx.class_names[..]);
    assert_eq!(ds.manifest().split.as_deref(), Some("val"));
    let loaded: Vec<_> = ds.samples().collect::<Result<_, _>>().unwrap();
    for (a, b) in loaded.iter().zip(&samples) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.image_tokens, b.image_tokens);
        assert_eq!(a.attention, b.attention);
        assert_eq!(a.gt_mask, b.gt_mask);
        assert_eq!(a.present_classes, b.present_classes);
    }
    assert_eq!(ds.position("s00003"), Some(3));
    let (pi, pt) = ds.original_projections();
    assert_eq!((pi.input_dim(), pt.output_dim()), (8, 8));
}

#[test]
fn missing_tensor_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let fx = small_fixture();
    let path = fx.write_dataset(dir.path(), &fx.samples(3, 2).unwrap(), "val").unwrap();
    let gone = dir.path().join("samples/s00001_tokens.ften");
    fs::remove_file(&gone).unwrap();
    match load_manifest(&path) {
        Err(Error::MissingFile { path }) => assert_eq!(path, gone),
        other => panic!("expected MissingFile, got {other:?}"),
    }
    assert!(matches!(
        load_manifest(dir.path().join("nope.json")),
        Err(Error::MissingFile { .. })
    ));
}

#[test]
fn schema_violations_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let fx = small_fixture();
    let path = fx.write_dataset(dir.path(), &fx.samples(3, 2).unwrap(), "val").unwrap();
    let good: Manifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();

    let mut m = good.clone();
    m.version = 2;
    m.write(&path).unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::SchemaError(_))));

    let mut m = good.clone();
    m.samples[1].id = m.samples[0].id.clone();
    m.write(&path).unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::SchemaError(_))));

    let mut m = good.clone();
    m.samples[0].labels = vec![99];
    m.write(&path).unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::InconsistentClassList(_))));

    let mut m = good.clone();
    m.classes[2] = m.classes[1].clone();
    m.write(&path).unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::InconsistentClassList(_))));

    let mut m = good;
    m.samples[0].grid_size = [3, 3];
    m.write(&path).unwrap();
    let ds = load_manifest(&path).unwrap();
    assert!(matches!(ds.load_sample(0), Err(Error::InvalidSample { .. })));

    fs::write(&path, "{\"version\": 1").unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::SchemaError(_))));
}

#[test]
fn ignore_sentinel_survives_png_and_is_not_a_class() {
    let dir = tempfile::tempdir().unwrap();
    let labels = vec![0, 3, IGNORE_LABEL, 3, 0, IGNORE_LABEL];
    let grid = LabelGrid::new(2, 3, labels).unwrap();
    let path = dir.path().join("m.png");
    grid.write_png(&path).unwrap();
    let back = LabelGrid::read_png(&path).unwrap();
    assert_eq!(back, grid);
    assert_eq!(back.classes_present().into_iter().collect::<Vec<_>>(), vec![0, 3]);
    assert_eq!(back.ignore_mask(), vec![false, false, true, false, false, true]);
}
