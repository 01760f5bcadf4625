use std::fs;

use epigate_core::data::{builtin_schema, load_from_dir, BUILTIN_DATASETS};
use epigate_core::Error;

#[test]
fn builtin_schemas_parse() {
    let expect = [("wine", 11, 2), ("bean", 16, 7), ("rice", 7, 2), ("ecoli", 7, 8)];
    assert_eq!(BUILTIN_DATASETS.len(), expect.len());
    for (name, d, k) in expect {
        let s = builtin_schema(name).unwrap();
        assert_eq!(s.n_features(), d, "{name}");
        assert_eq!(s.n_classes, k, "{name}");
        assert!(!s.files.is_empty());
    }
    assert!(matches!(builtin_schema("iris"), Err(Error::Config(_))));
}

#[test]
fn wine_files_concatenate_and_binarize() {
    let dir = tempfile::tempdir().unwrap();
    let header = "\"fixed acidity\";\"volatile acidity\";\"citric acid\";\"residual sugar\";\"chlorides\";\
\"free sulfur dioxide\";\"total sulfur dioxide\";\"density\";\"pH\";\"sulphates\";\"alcohol\";\"quality\"";
    let row = |q: u32| format!("7.4;0.7;0;1.9;0.076;11;34;0.9978;3.51;0.56;9.4;{q}");
    fs::write(dir.path().join("winequality-red.csv"), format!("{header}\n{}\n{}\n", row(5), row(6))).unwrap();
    fs::write(
        dir.path().join("winequality-white.csv"),
        format!("{header}\n{}\n7.0;bad;0;1;0;1;1;1;1;1;1;7\n", row(8)),
    )
    .unwrap();
    let loaded = load_from_dir(dir.path(), &builtin_schema("wine").unwrap()).unwrap();
    assert_eq!(loaded.dataset.labels, vec![0, 1, 1]);
    assert_eq!(loaded.rejected_rows, 1);
    assert_eq!(loaded.dataset.features[[2, 10]], 9.4);
}

#[test]
fn ecoli_drops_identifier_and_maps_names() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("ecoli.csv"),
        "sequence_name,mcg,gvh,lip,chg,aac,alm1,alm2,class\nAAT_ECOLI,0.49,0.29,0.48,0.5,0.56,0.24,0.35,cp\n\
ACEA_ECOLI,0.07,0.4,0.48,0.5,0.54,0.35,0.44,imS\n",
    )
    .unwrap();
    let loaded = load_from_dir(dir.path(), &builtin_schema("ecoli").unwrap()).unwrap();
    assert_eq!(loaded.dataset.labels, vec![0, 7]);
    assert_eq!(loaded.dataset.n_features(), 7);
}

#[test]
fn missing_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let rice = builtin_schema("rice").unwrap();
    assert!(matches!(load_from_dir(dir.path(), &rice), Err(Error::MissingFile(_))));
    fs::write(dir.path().join("Rice_Cammeo_Osmancik.csv"), "a,b,Class\n1,2,Cammeo\n").unwrap();
    assert!(matches!(
        load_from_dir(dir.path(), &rice),
        Err(Error::ColumnMismatch { expected: 8, found: 3 })
    ));
}
