//! The example configs shipped in `configs/` parse and validate.

use ntae::experiments::{
    load_config, ClusterConfig, CompressConfig, ParamSweepConfig, PermutationStudyConfig, SynthBenchmarkConfig,
    TrainCommandConfig,
};
use std::path::PathBuf;

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn bundled_configs_load() {
    let s: SynthBenchmarkConfig = load_config(path("synth_benchmark.toml")).unwrap();
    assert_eq!(s.data.orders, vec![3, 4]);
    assert_eq!(s.repeats, 5);
    let p: PermutationStudyConfig = load_config(path("permutation_study.toml")).unwrap();
    assert_eq!(p.fractions, vec![0.0, 0.1, 0.2, 0.3]);
    let _: ParamSweepConfig = load_config(path("param_sweep.toml")).unwrap();
    let _: CompressConfig = load_config(path("compress.toml")).unwrap();
    let _: ClusterConfig = load_config(path("cluster.toml")).unwrap();
    let _: TrainCommandConfig = load_config(path("train.toml")).unwrap();
}
