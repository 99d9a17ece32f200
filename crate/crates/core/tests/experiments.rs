use sns_xlmimo::experiments::{
    emit_results, grid_points, render_csv, run_sweep, run_trial, sample_instance, Algorithm, Axis, Metric,
    SweepConfig, SweepResult, SweepSummary, View, VrSpec,
};
use sns_xlmimo::metrics::TrialRecord;

fn small(algorithms: &[Algorithm]) -> SweepConfig {
    let mut config = SweepConfig::from_json_str(
        r#"{
            "name": "small",
            "geometry": {"num_antennas": 64},
            "observation": {"pilot_slots": [8], "rf_chains": 4, "snr_db": [0, 10]},
            "psi": [0.25, 0.5],
            "trials": 3,
            "seed": 11
        }"#,
    )
    .unwrap();
    config.algorithms = algorithms.to_vec();
    config
}

fn without_runtime(records: &[TrialRecord]) -> Vec<TrialRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            r.runtime = 0.0;
            r
        })
        .collect()
}

#[test]
fn empty_object_is_the_default_config() {
    let config = SweepConfig::from_json_str("{}").unwrap();
    assert_eq!(config, SweepConfig::default());
    assert_eq!(config.geometry.num_antennas, 256);
    assert_eq!(config.codebook.oversampling, 2);
    assert_eq!(config.observation.rf_chains, 4);
    assert_eq!(config.trials, 500);
}

#[test]
fn bad_configs_are_config_errors() {
    for text in [
        r#"{"bogus": 1}"#,
        r#"{"trials": 0}"#,
        r#"{"psi": [0.0]}"#,
        r#"{"psi": []}"#,
        r#"{"observation": {"pilot_slots": [65]}}"#,
        r#"{"algorithms": []}"#,
        r#"{"algorithms": ["magic"]}"#,
        r#"{"vr": {"kind": "fixed", "blocks": [[0, 10]]}}"#,
        r#"{"vr": {"kind": "markov", "p10": 0.9}, "psi": [0.6]}"#,
        r#"{"detector": {"damping": 0}}"#,
        r#"{"output": {"views": [{"name": "b", "metric": "belief", "x": "antenna"}]}}"#,
        r#"{"output": {"views": [{"name": "n", "metric": "nmse", "x": "antenna"}]}}"#,
        "not json",
    ] {
        let err = SweepConfig::from_json_str(text).unwrap_err();
        assert!(err.is_config_error(), "{text}: {err}");
    }
    let missing = std::path::Path::new("/definitely/not/here.json");
    assert!(SweepConfig::from_path(missing).unwrap_err().is_config_error());
}

#[test]
fn fixed_blocks_set_the_psi_axis() {
    let config = SweepConfig::from_json_str(
        r#"{"vr": {"kind": "fixed", "blocks": [[17, 48], [65, 96]]}, "psi": [0.9]}"#,
    )
    .unwrap();
    assert_eq!(config.psi_values().unwrap(), vec![0.25]);
    let region = config.vr.fixed_region(256).unwrap().unwrap();
    assert_eq!(region.num_visible(), 64);
    assert!(region.is_visible(16) && region.is_visible(47) && !region.is_visible(48));
    assert!(matches!(config.vr, VrSpec::Fixed { .. }));

    let inst = sample_instance(&config, 0, 3).unwrap();
    assert_eq!(inst.truth, region);
}

#[test]
fn grid_is_psi_major() {
    let config = SweepConfig::from_json_str(
        r#"{"psi": [0.25, 0.5], "observation": {"pilot_slots": [36, 44], "snr_db": [0, 5, 10]}}"#,
    )
    .unwrap();
    let points = grid_points(&config).unwrap();
    assert_eq!(points.len(), 12);
    assert_eq!((points[0].psi, points[0].pilot_slots, points[0].snr_db), (0.25, 36, 0.0));
    assert_eq!((points[1].psi, points[1].pilot_slots, points[1].snr_db), (0.25, 36, 5.0));
    assert_eq!((points[3].psi, points[3].pilot_slots, points[3].snr_db), (0.25, 44, 0.0));
    assert_eq!((points[6].psi, points[6].pilot_slots, points[6].snr_db), (0.5, 36, 0.0));
    assert!(points.iter().enumerate().all(|(i, p)| p.index == i));
}

#[test]
fn single_ls_trial_is_reproducible() {
    let mut config = small(&[Algorithm::Ls]);
    config.trials = 1;
    config.psi = vec![0.25];
    config.observation.snr_db = vec![5.0];
    let a = run_sweep(&config).unwrap();
    let b = run_sweep(&config).unwrap();
    assert_eq!(a.records.len(), 1);
    assert_eq!(without_runtime(&a.records), without_runtime(&b.records));
    let rec = &a.records[0];
    assert!(rec.succeeded());
    assert!(rec.nmse.unwrap() > 0.0 && rec.se.unwrap() > 0.0);
    assert_eq!(rec.vrer, None);
}

#[test]
fn trials_do_not_depend_on_batch() {
    let all = [Algorithm::Vrdomp, Algorithm::Rfeb, Algorithm::BbompSoft, Algorithm::Genie];
    let config = small(&all);
    let result = run_sweep(&config).unwrap();
    assert_eq!(result.records.len(), 4 * 3 * all.len());
    for g in 0..4 {
        for t in 0..3 {
            let single = run_trial(&config, g, t).unwrap();
            let start = (g * 3 + t) * all.len();
            assert_eq!(
                without_runtime(&single),
                without_runtime(&result.records[start..start + all.len()])
            );
        }
    }
    let mut longer = config.clone();
    longer.trials = 5;
    let bigger = run_sweep(&longer).unwrap();
    let prefix: Vec<_> = bigger.records_for(2, Algorithm::Genie).take(3).cloned().collect();
    let original: Vec<_> = result.records_for(2, Algorithm::Genie).cloned().collect();
    assert_eq!(without_runtime(&prefix), without_runtime(&original));
}

#[test]
fn records_carry_the_metrics_of_their_algorithm() {
    let config = small(&Algorithm::ALL);
    let result = run_sweep(&config).unwrap();
    for rec in &result.records {
        assert!(rec.succeeded(), "{rec:?}");
        let alg = Algorithm::from_name(&rec.algorithm).unwrap();
        assert_eq!(rec.vrer.is_some(), alg.detects());
        assert_eq!(rec.nmse.is_some(), alg.estimates());
        if let Some(v) = rec.vrer {
            assert!((0.0..=1.0).contains(&v));
        }
        if alg == Algorithm::PerfectCsi {
            assert_eq!(rec.nmse, Some(0.0));
        }
    }
    for point in &result.points {
        for s in &point.algorithms {
            assert_eq!(s.trials, 3);
            assert_eq!(s.failures, 0);
        }
        let perfect = point.algorithms.iter().find(|s| s.algorithm == Algorithm::PerfectCsi).unwrap();
        for s in &point.algorithms {
            if let (Some(a), Some(b)) = (s.se, perfect.se) {
                // Up to the (rare) estimate that exceeds ‖x‖ in norm.
                assert!(a.mean <= b.mean * 1.5);
            }
        }
    }
}

fn empty_result() -> SweepResult {
    let config = small(&[Algorithm::Ls, Algorithm::Genie]);
    SweepResult {
        config,
        records: Vec::new(),
        points: Vec::new(),
        wall_clock_s: 0.0,
    }
}

#[test]
fn empty_result_gives_header_only_csv() {
    let view = View {
        name: "v".into(),
        metric: Metric::Nmse,
        x: Axis::SnrDb,
    };
    let text = render_csv(&empty_result(), &view).unwrap();
    assert_eq!(text, "sweep_var,ls_mean,ls_stderr,genie_mean,genie_stderr\n");
}

#[test]
fn csv_schema_and_json_round_trip() {
    let config = small(&[Algorithm::Vrdomp, Algorithm::Ls, Algorithm::BbompHard]);
    let result = run_sweep(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_results(&result, dir.path()).unwrap();
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        ["small_correct_detection.csv", "small_nmse.csv", "small_se.csv", "small_summary.json"]
    );

    let text = std::fs::read_to_string(&paths[1]).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().len(), 1 + 2 * 3);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), grid_points(&config).unwrap().len());
    for row in &rows {
        assert_eq!(row.len(), 7);
        // VRDO-MP does not estimate, so its NMSE cells are empty.
        assert!(row[1].is_empty() && row[2].is_empty());
        assert!(row[3].parse::<f64>().unwrap() > 0.0);
    }
    assert_eq!(&rows[0][0], "0");
    assert_eq!(&rows[1][0], "10");

    let summary: SweepSummary = serde_json::from_str(&std::fs::read_to_string(&paths[3]).unwrap()).unwrap();
    assert_eq!(summary.points, result.points);
    assert_eq!(summary.config, config);
    assert_eq!(summary.seed, 11);
    assert!(!summary.version.is_empty());
}

#[test]
fn plots_are_written_on_request() {
    let mut config = small(&[Algorithm::Ls, Algorithm::Womp]);
    config.output.plots = true;
    config.output.views = vec![View {
        name: "nmse_vs_snr".into(),
        metric: Metric::Nmse,
        x: Axis::SnrDb,
    }];
    let result = run_sweep(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_results(&result, dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("nmse_vs_snr.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.contains("polyline"));
    assert_eq!(paths.len(), 3);
}

#[test]
fn belief_profile_view() {
    let config = SweepConfig::from_json_str(
        r#"{
            "name": "profile",
            "geometry": {"num_antennas": 64},
            "vr": {"kind": "fixed", "blocks": [[9, 24]]},
            "observation": {"pilot_slots": [10], "snr_db": [10]},
            "algorithms": ["vrdomp"],
            "record_beliefs": true,
            "trials": 4,
            "output": {"views": [{"name": "profile", "metric": "belief", "x": "antenna"}]}
        }"#,
    )
    .unwrap();
    let result = run_sweep(&config).unwrap();
    let profile = result.point(0).belief_profile.as_ref().unwrap();
    assert_eq!(profile.trials, 4);
    assert_eq!(profile.visible[8], 1.0);
    assert_eq!(profile.visible[7], 0.0);
    let text = render_csv(&result, &config.output.views[0]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sweep_var,vrdomp_mean,vrdomp_stderr,visible");
    assert_eq!(lines.len(), 65);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn nmse_falls_with_snr() {
    let mut config = SweepConfig {
        algorithms: vec![Algorithm::BbompSoft],
        trials: 200,
        ..SweepConfig::default()
    };
    config.observation.snr_db = vec![0.0, 10.0];
    let result = run_sweep(&config).unwrap();
    let low = result.summary(0, Algorithm::BbompSoft).unwrap().nmse.unwrap();
    let high = result.summary(1, Algorithm::BbompSoft).unwrap().nmse.unwrap();
    assert!(high.mean < low.mean, "{} vs {}", high.mean, low.mean);
}
