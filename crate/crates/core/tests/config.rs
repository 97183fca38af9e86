use mandet::Config;

#[test]
fn default_round_trips_through_toml_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Config::default();
    let toml_path = dir.path().join("cfg.toml");
    std::fs::write(&toml_path, cfg.to_toml().unwrap()).unwrap();
    assert_eq!(Config::load(&toml_path).unwrap(), cfg);
    let json_path = dir.path().join("cfg.json");
    std::fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(Config::load(&json_path).unwrap(), cfg);
}

#[test]
fn partial_file_keeps_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "seed = 7\n[alg1]\nparticles = 500\n").unwrap();
    let cfg = Config::load(&path).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.alg1.particles, 500);
    assert_eq!(cfg.alg2, Config::default().alg2);
}

#[test]
fn malformed_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, "{ seed: ").unwrap();
    assert!(Config::load(&path).is_err());
    assert!(Config::load(&dir.path().join("missing.toml")).is_err());
}
