use std::path::Path;

use arena::config::ArenaConfig;
use arena::sim::ExperimentSpec;

fn path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

#[test]
fn example_server_config_parses() {
    let cfg = ArenaConfig::load(&path("server.toml")).unwrap();
    assert_eq!(cfg.backends.len(), 4);
    assert_eq!(cfg.backends.iter().filter(|b| b.active).count(), 3);
    assert_eq!(cfg.backends[3].model_name(), "llama-eu-8b-instruct");
}

#[test]
fn example_experiment_spec_parses() {
    let spec = ExperimentSpec::load(&path("small-experiment.toml")).unwrap();
    assert_eq!(spec.n_models, 8);
    assert_eq!(spec.n_battles, 1500);
    assert_eq!(spec.annotator.second_turn_rate, ExperimentSpec::standard().annotator.second_turn_rate);
}
