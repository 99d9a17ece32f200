// Kept in its own binary: the test mutates the process environment.
use sns_xlmimo::experiments::{emit_results, run_sweep, Algorithm, SweepConfig, THREADS_ENV};

fn bytes_with_threads(config: &SweepConfig, threads: &str) -> Vec<Vec<u8>> {
    std::env::set_var(THREADS_ENV, threads);
    let result = run_sweep(config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&result, dir.path())
        .unwrap()
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

#[test]
fn output_is_independent_of_the_thread_count() {
    let mut config = SweepConfig::from_json_str(
        r#"{
            "geometry": {"num_antennas": 64},
            "observation": {"pilot_slots": [8, 12], "snr_db": [0, 10]},
            "psi": [0.25, 0.75],
            "trials": 6,
            "seed": 99
        }"#,
    )
    .unwrap();
    config.algorithms = Algorithm::ALL.to_vec();
    let one = bytes_with_threads(&config, "1");
    let three = bytes_with_threads(&config, "3");
    let unset = bytes_with_threads(&config, "not a number");
    assert_eq!(one, three);
    assert_eq!(one, unset);
    assert_eq!(one.len(), 3);
    assert!(one.iter().all(|csv| csv.iter().filter(|&&b| b == b'\n').count() > 1));
}
