use epmclimb_core::{Error, ExperimentConfig};

#[test]
fn empty_file_is_the_default() {
    assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
}

#[test]
fn toml_round_trip() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 42;
    cfg.curriculum.scale = 0.01;
    cfg.ppo.learning_rate = 1e-3;
    cfg.train.iterations = Some(7);
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn partial_sections_keep_other_defaults() {
    let cfg = ExperimentConfig::from_toml_str("seed = 3\n[ppo]\nclip = 0.1\n").unwrap();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.ppo.clip, 0.1);
    assert_eq!(cfg.ppo.gamma, 0.99);
    assert_eq!(cfg.curriculum, ExperimentConfig::default().curriculum);
}

#[test]
fn unknown_fields_are_parse_errors() {
    let err = ExperimentConfig::from_toml_str("[ppo]\nclipp = 0.1\n").unwrap_err();
    assert!(matches!(err, Error::ConfigParse(_)), "{err}");
    assert!(matches!(ExperimentConfig::from_toml_str("seed = [").unwrap_err(), Error::ConfigParse(_)));
}

#[test]
fn out_of_range_values_name_the_field() {
    for (text, field) in [
        ("[curriculum]\nscale = 0.0\n", "curriculum.scale"),
        ("[ppo]\nclip = 1.5\n", "ppo.clip"),
        ("[eval]\nepisodes = 0\n", "eval.episodes"),
        ("[adhesion]\nmax_force = -1.0\n", "adhesion.max_force"),
    ] {
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        match err {
            Error::InvalidConfig { field: ref f, .. } => assert_eq!(f, field),
            other => panic!("{text}: {other}"),
        }
    }
}

#[test]
fn hash_tracks_content() {
    let a = ExperimentConfig::default();
    let mut b = a.clone();
    b.seed = 1;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 16);
    assert!(a.header().starts_with("# epmclimb "));
    assert!(a.header().ends_with(&a.hash()));
}

#[test]
fn load_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "seed = 9\n").unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap().seed, 9);
    assert!(ExperimentConfig::load(&dir.path().join("missing.toml")).is_err());
}
