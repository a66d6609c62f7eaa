//! Forcing files through the experiment harness.

use npzd_core::harness::forcing::{derive_psi, write_forcing};
use npzd_core::harness::{self, load_forcing, synth_climatology, Experiment, ExperimentConfig, Span};

#[test]
fn written_forcing_reloads_and_drives_the_same_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let series = synth_climatology(90, &Default::default());
    let path = dir.path().join("forcing.csv");
    write_forcing(std::fs::File::create(&path).unwrap(), &series).unwrap();
    let back = load_forcing(&path).unwrap();
    assert_eq!(back.records, series.records);
    assert_eq!(back.start_date, series.start_date);

    let base = ExperimentConfig {
        climatology_days: 90,
        hindcast: Some(Span { start: 10, end: 69 }),
        ensemble_size: 8,
        ..ExperimentConfig::default()
    };
    let from_file = ExperimentConfig {
        forcing_path: Some(path),
        ..base.clone()
    };
    let a = harness::run_prior_ensemble(&Experiment::load(base).unwrap(), Span { start: 10, end: 69 }).unwrap();
    let b = harness::run_prior_ensemble(&Experiment::load(from_file).unwrap(), Span { start: 10, end: 69 }).unwrap();
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.summary.days().first(), Some(&10));
    a.summary.check_ordering().unwrap();
}

#[test]
fn psi_is_derived_when_the_column_is_absent() {
    let series = synth_climatology(365, &Default::default());
    let mut csv = String::from("date,mld_m,temp_c,par,bcn\n");
    for (d, r) in series.records.iter().enumerate() {
        csv.push_str(&format!("{},{},{},{},{}\n", series.date(d), r.mld, r.temp, r.par, r.bcn));
    }
    let parsed = harness::parse_forcing(csv.as_bytes(), "mem").unwrap();
    let mld: Vec<f64> = series.records.iter().map(|r| r.mld).collect();
    let derived = derive_psi(&mld);
    for (p, d) in parsed.records.iter().zip(&derived) {
        assert_eq!(p.psi, *d);
    }
    // Centered differences track the analytic rate of change of the climatology.
    let worst = parsed.records[1..364]
        .iter()
        .zip(&series.records[1..364])
        .map(|(p, s)| (p.psi - s.psi).abs())
        .fold(0.0f64, f64::max);
    assert!(worst < 0.05, "worst psi error {worst}");
}
