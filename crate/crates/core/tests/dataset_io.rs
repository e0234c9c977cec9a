use slotrack::synthdata::{generate_dataset, read_dataset, write_dataset, DatasetConfig, SplitSpec};
use slotrack::Error;

fn small_config() -> DatasetConfig {
    DatasetConfig {
        train: SplitSpec {
            videos: 3,
            ..DatasetConfig::default().train
        },
        eval: SplitSpec {
            videos: 2,
            ..DatasetConfig::default().eval
        },
        stills: 4,
        ..DatasetConfig::default()
    }
}

#[test]
fn written_dataset_reads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut original = generate_dataset(&small_config(), 17).unwrap();
    write_dataset(dir.path(), &original).unwrap();
    let mut loaded = read_dataset(dir.path()).unwrap();
    original.videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    loaded.videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    assert_eq!(loaded, original);
    assert_eq!(loaded.split("train").count(), 3);
    assert_eq!(loaded.split("eval").count(), 2);
    assert_eq!(loaded.split("stills").count(), 4);
}

#[test]
fn same_seed_same_dataset() {
    let a = generate_dataset(&small_config(), 3).unwrap();
    let b = generate_dataset(&small_config(), 3).unwrap();
    let c = generate_dataset(&small_config(), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn corrupt_video_reports_its_file() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &generate_dataset(&small_config(), 1).unwrap()).unwrap();
    let victim = std::fs::read_dir(dir.path().join("videos")).unwrap().next().unwrap().unwrap().path();
    std::fs::write(&victim, "{\"version\": 1, \"frames\": [").unwrap();
    match read_dataset(dir.path()) {
        Err(Error::Parse { message, .. }) => assert!(message.contains(victim.file_name().unwrap().to_str().unwrap()), "{message}"),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn missing_catalog_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().contains("catalog.json"), "{err}");
}
