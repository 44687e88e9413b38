use cape_core::datagen::generate_dataset;
use cape_core::harness::{
    cape_epsilon_for, maps_for_record, mean_correlation, run_once, Algorithm, ExperimentConfig, RunSpec,
};

fn spec(algorithm: Algorithm, subjects: usize, seed: u64, baseline_epsilon: Option<f64>) -> RunSpec {
    RunSpec {
        algorithm,
        subjects,
        epsilon_i: 2.0,
        seed,
        baseline_epsilon,
    }
}

fn correlation(cfg: &ExperimentConfig, spec: &RunSpec) -> (f64, Vec<f64>) {
    let rec = run_once(cfg, spec).unwrap();
    let ds = generate_dataset(&rec.dataset, rec.seed).unwrap();
    let maps = maps_for_record(&rec, &ds).unwrap();
    (mean_correlation(&maps), maps.iter().map(|m| m.correlation).collect())
}

#[test]
fn noise_free_run_recovers_every_map() {
    let cfg = ExperimentConfig::default();
    let (_, each) = correlation(&cfg, &spec(Algorithm::Djica, 256, 0, None));
    assert!(each.iter().all(|&c| c >= 0.95), "{each:?}");
}

#[test]
fn cape_maps_beat_baseline_at_matched_epsilon() {
    let cfg = ExperimentConfig::default();
    let j = cfg.ica.max_iter;
    let matched = cape_epsilon_for(&cfg, 2.0, j).unwrap() / j as f64;
    let seeds = 0..5u64;
    let cape: f64 = seeds
        .clone()
        .map(|s| correlation(&cfg, &spec(Algorithm::CapeDjica, 64, s, None)).0)
        .sum::<f64>()
        / 5.0;
    let base: f64 = seeds
        .map(|s| correlation(&cfg, &spec(Algorithm::DpDjica, 64, s, Some(matched))).0)
        .sum::<f64>()
        / 5.0;
    assert!(cape > base, "cape {cape:.3} vs baseline {base:.3}");
}
