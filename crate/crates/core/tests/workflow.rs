use std::path::Path;

use featcraft::pipeline::verify_lineage;
use featcraft::*;

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn trained() -> Trm {
    let corpus = synth::training_corpus(synth::CORPUS_SEED).unwrap();
    train_trm(&corpus, &TrmConfig::default()).unwrap()
}

#[test]
fn bundled_files_match_generators() {
    for generated in synth::bundled().unwrap() {
        let loaded = load_csv(data(&format!("{}.csv", generated.name())), "class").unwrap();
        assert_eq!(loaded.features(), generated.features());
        assert_eq!(loaded.labels(), generated.labels());
        assert_eq!(loaded.class_names(), generated.class_names());
    }
    for generated in synth::training_corpus(synth::CORPUS_SEED).unwrap() {
        let loaded = load_csv(data(&format!("corpus/{}.csv", generated.name())), "class").unwrap();
        assert_eq!(loaded.features(), generated.features());
    }
}

#[test]
fn saved_matrix_gives_identical_transformations() {
    let trm = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.trm");
    save_trm(&trm, &path).unwrap();
    let loaded = load_trm(&path).unwrap();
    let d = load_csv(data("log_product.csv"), "class").unwrap();
    let cfg = PipelineConfig::default();
    let a = transform_dataset(&d, &trm, &cfg).unwrap();
    let b = transform_dataset(&d, &loaded, &cfg).unwrap();
    assert_eq!(a.output, b.output);
    assert_eq!(a.lineage.to_json(), b.lineage.to_json());
    assert!(verify_lineage(&a).unwrap());
}

#[test]
fn plan_replays_training_rows_exactly() {
    let trm = trained();
    let d = load_csv(data("sign_product.csv"), "class").unwrap();
    let e = transform_dataset(&d, &trm, &PipelineConfig::default()).unwrap();
    assert!(!e.generated.is_empty());
    let replayed = e.plan().apply(&d).unwrap();
    assert_eq!(replayed.features(), e.output.features());
}

#[test]
fn engineered_csv_round_trips() {
    let trm = trained();
    let d = preprocess(&load_csv(data("wine.csv"), "cultivar").unwrap()).unwrap();
    let e = transform_dataset(&d, &trm, &PipelineConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wine_engineered.csv");
    write_csv(&e.output, &path).unwrap();
    let back = load_csv(&path, "cultivar").unwrap();
    assert_eq!(back.features(), e.output.features());
    assert_eq!(back.labels(), e.output.labels());
    assert_eq!(back.n_features(), e.base.n_features() + e.generated.len());
}
