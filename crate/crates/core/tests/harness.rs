use mandet::harness::*;
use mandet::Config;
use proptest::prelude::*;

fn short_config() -> Config {
    let mut cfg = Config::default();
    cfg.harness.span_days = 2.0;
    cfg
}

#[test]
fn no_manoeuvre_spec_labels_every_segment_negative() {
    let cfg = short_config();
    let (sc, meta) = generate_scenario(&cfg.harness.base_spec(7), &cfg.dynamics).unwrap();
    assert!(!sc.segments.is_empty());
    assert!(sc.segments.iter().all(|s| !s.truth_label));
    assert_eq!(meta.n_positive, 0);
    assert_eq!(meta.delta_v, 0.0);
}

#[test]
fn medium_grid_spec_records_three_centimetres_per_second() {
    let cfg = Config::default();
    let mut h = cfg.harness.clone();
    h.intensities = vec![Intensity::Medium];
    h.offsets_hours = vec![6.0];
    h.directions = vec![Direction::Tangential];
    h.repetitions = 1;
    let grid = grid_specs(&h, &cfg.dynamics, cfg.seed).unwrap();
    assert_eq!(grid.specs.len(), 1);
    let (sc, meta) = generate_scenario(&grid.specs[0], &cfg.dynamics).unwrap();
    assert!((meta.delta_v - 0.03).abs() < 1e-12);
    // exactly one segment holds the burn, and it closes on the target track
    let positive: Vec<_> = sc.segments.iter().filter(|s| s.truth_label).collect();
    assert_eq!(positive.len(), 1);
    assert!(sc.tracks[positive[0].to_track].first_epoch() >= grid.target_epoch - 60.0);
}

#[test]
fn full_grid_has_27_cases_per_repetition() {
    let cfg = Config::default();
    let mut h = cfg.harness.clone();
    h.repetitions = 2;
    let grid = grid_specs(&h, &cfg.dynamics, 1).unwrap();
    assert_eq!(grid.specs.len(), 54);
    assert_eq!(grid.controls.len(), 2);
    let mut ids: Vec<_> = grid.specs.iter().map(|s| s.id.clone()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 54);
}

#[test]
fn same_seed_gives_identical_tracks() {
    let cfg = short_config();
    let spec = cfg.harness.base_spec(42);
    let (a, _) = generate_scenario(&spec, &cfg.dynamics).unwrap();
    let (b, _) = generate_scenario(&spec, &cfg.dynamics).unwrap();
    assert_eq!(a.tracks, b.tracks);
    let (c, _) = generate_scenario(&cfg.harness.base_spec(43), &cfg.dynamics).unwrap();
    assert_ne!(a.tracks, c.tracks);
}

#[test]
fn truth_label_uses_half_open_interval() {
    let cfg = short_config();
    let (sc, _) = generate_scenario(&cfg.harness.base_spec(3), &cfg.dynamics).unwrap();
    let seg = sc.segments[1];
    let burn = |start: f64| mandet::dynamics::ManoeuvreSpec { start_epoch: start, duration: 10.0, accel_lvlh: nalgebra::Vector3::new(0.0, 1e-3, 0.0) };
    let label = |start: f64| delimit_segments(&sc.tracks, &[burn(start)])[1].truth_label;
    assert!(label(0.5 * (seg.start_epoch + seg.end_epoch)));
    assert!(!label(seg.end_epoch + 1.0));
    assert!(!label(seg.start_epoch - 20.0));
    assert!(label(seg.end_epoch - 5.0));
}

#[test]
fn empty_detector_list_gives_labels_only() {
    let cfg = short_config();
    let report = run_campaign(&[cfg.harness.base_spec(5)], &[], &cfg);
    assert!(!report.rows.is_empty());
    assert!(report.detectors().is_empty());
    for r in &report.rows {
        assert!(r.error.is_none());
        assert!(Detector::ALL.iter().all(|&d| r.decision(d).is_none()));
        assert!(!r.truth_label);
    }
}

#[test]
fn campaign_records_failed_scenarios() {
    let cfg = short_config();
    let mut spec = cfg.harness.base_spec(5);
    spec.t_end = spec.t_start + 60.0;
    let report = run_campaign(&[spec], &[Detector::Ukf], &cfg);
    assert_eq!(report.rows.len(), 1);
    assert!(report.rows[0].error.as_deref().unwrap().starts_with("scenario"));
}

#[test]
fn warm_up_covariance_is_positive_definite() {
    let cfg = short_config();
    let seed = nalgebra::Matrix6::from_diagonal(&nalgebra::Vector6::new(1e4, 1e4, 1e4, 1e-2, 1e-2, 1e-2));
    let p = warm_up_covariance(&cfg, &seed).unwrap();
    assert_eq!(p, p.transpose());
    assert!(p.cholesky().is_some());
    assert!(p.trace() < seed.trace());
}

#[test]
fn default_filter_covariance_is_positive_definite() {
    let p = HarnessConfig::default().filter_covariance_lvlh();
    assert_eq!(p, p.transpose());
    assert!(p.cholesky().is_some());
}

fn labelled_row(id: usize, tags: Option<GridTags>, truth: bool, alg1: Option<bool>, mdf: Option<bool>) -> SegmentRow {
    let base = DetectionReport::from_jsonl(&format!(
        r#"{{"scenario_id":"s","segment_id":{id},"intensity":null,"offset_hours":null,"direction":null,"repetition":0,"start_epoch":0.0,"end_epoch":1.0,"truth_label":{truth},"error":null,"alg1_md":null,"alg1_pr":null,"alg1_dropped":null,"alg1_valid":null,"alg1_decision":null,"J_median":null,"P1M":null,"P5M":null,"P8M":null,"P1D":null,"P5D":null,"P8D":null,"alg2_valid":null,"alg2_decision":null,"ukf_psi_first":null,"ukf_psi_max":null,"ukf_psi_aggregate":null,"ukf_probability":null,"ukf_decision":null,"mdf_p":null,"mdf_inflations":null,"mdf_saturated":null,"mdf_decision":null}}"#
    ))
    .unwrap();
    let mut r = base.rows.into_iter().next().unwrap();
    r.intensity = tags.map(|t| t.intensity);
    r.offset_hours = tags.map(|t| t.offset_hours);
    r.direction = tags.map(|t| t.direction);
    r.alg1_decision = alg1;
    r.alg1_valid = alg1.map(|_| true);
    r.alg1_pr = alg1.map(|d| if d { 0.93 } else { 0.1 / 3.0 });
    r.mdf_decision = mdf;
    r
}

#[test]
fn single_segment_report_has_one_row_and_a_total() {
    let tags = GridTags { intensity: Intensity::High, offset_hours: 6.0, direction: Direction::Tangential };
    let report = DetectionReport { rows: vec![labelled_row(0, Some(tags), true, Some(true), None)] };
    let table = SummaryTable::from_report(&report, &report.detectors());
    assert_eq!(table.detectors, vec![Detector::Alg1]);
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].case, "high-6h-T");
    assert_eq!(table.total.case, TOTAL_CASE);
    let csv = table.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(table.to_markdown().lines().count(), 4);
    assert_eq!(table.total.counts[0].detection_rate(), Some(1.0));
}

#[test]
fn render_report_writes_files_and_rejects_empty() {
    let dir = tempfile::tempdir().unwrap();
    let report = DetectionReport { rows: vec![labelled_row(0, None, false, Some(false), Some(true))] };
    let files = render_report(&report, ReportFormat::Both, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let back = DetectionReport::from_csv(&std::fs::read_to_string(dir.path().join("segments.csv")).unwrap()).unwrap();
    assert_eq!(back, report);
    let md = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
    assert!(md.contains("| **total** | 1 | 0 |"));
    assert!(render_report(&DetectionReport::default(), ReportFormat::Csv, dir.path()).is_err());
}

fn arb_tags() -> impl Strategy<Value = Option<GridTags>> {
    prop::option::of((0..3usize, prop::sample::select(vec![2.0, 6.0, 12.0]), 0..3usize).prop_map(|(i, o, d)| GridTags {
        intensity: Intensity::ALL[i],
        offset_hours: o,
        direction: Direction::ALL[d],
    }))
}

fn arb_report() -> impl Strategy<Value = DetectionReport> {
    prop::collection::vec((arb_tags(), any::<bool>(), prop::option::of(any::<bool>()), prop::option::of(any::<bool>())), 1..40).prop_map(|v| DetectionReport {
        rows: v.into_iter().enumerate().map(|(k, (t, truth, a, m))| labelled_row(k, t, truth, a, m)).collect(),
    })
}

proptest! {
    #[test]
    fn totals_equal_recomputed_aggregates(report in arb_report()) {
        let table = SummaryTable::from_report(&report, &Detector::ALL);
        prop_assert_eq!(table.total.segments, report.rows.len());
        prop_assert_eq!(table.rows.iter().map(|r| r.segments).sum::<usize>(), report.rows.len());
        for (k, &d) in table.detectors.iter().enumerate() {
            let c = report.counts(d);
            prop_assert_eq!(table.total.counts[k], c);
            let tp: usize = table.rows.iter().map(|r| r.counts[k].true_positives).sum();
            let fp: usize = table.rows.iter().map(|r| r.counts[k].false_positives).sum();
            prop_assert_eq!((tp, fp), (c.true_positives, c.false_positives));
            if let (Some(dr), Some(fnr)) = (c.detection_rate(), c.false_negative_rate()) {
                prop_assert!((dr + fnr - 1.0).abs() < 1e-15);
            }
            for r in [c.detection_rate(), c.false_positive_rate()].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn rendered_csv_parses_back(report in arb_report()) {
        let table = SummaryTable::from_report(&report, &report.detectors());
        prop_assert_eq!(&SummaryTable::from_csv(&table.to_csv().unwrap()).unwrap(), &table);
        prop_assert_eq!(&DetectionReport::from_csv(&report.to_csv().unwrap()).unwrap(), &report);
        prop_assert_eq!(&DetectionReport::from_jsonl(&report.to_jsonl().unwrap()).unwrap(), &report);
    }
}

#[test]
fn external_tracks_and_ephemeris_reproduce_segment_layout() {
    let cfg = short_config();
    let (sc, _) = generate_scenario(&cfg.harness.base_spec(11), &cfg.dynamics).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (k, t) in sc.tracks.iter().enumerate() {
        mandet::radar::write_track_csv(t, &dir.path().join(format!("track{k:03}.csv"))).unwrap();
    }
    let eph: Vec<_> = (0..=(sc.spec.t_end / 600.0) as usize).map(|k| sc.truth.state_at(k as f64 * 600.0).unwrap()).collect();
    let eph_path = dir.path().join("ephemeris.txt");
    write_ephemeris_csv(&eph, &eph_path).unwrap();
    let eph_back = read_ephemeris_csv(&eph_path).unwrap();
    assert_eq!(eph_back.len(), eph.len());
    assert!((eph_back[3].r - eph[3].r).norm() < 1e-6);

    let tracks = read_track_dir(dir.path(), &sc.spec.station.name).unwrap();
    assert_eq!(tracks.len(), sc.tracks.len());
    let mut c = cfg.clone();
    c.alg1.particles = 200;
    let rows = run_external("ext", &tracks, &eph_back, &[], &sc.spec.station, &sc.spec.model_params, &[Detector::Alg1, Detector::Ukf], &c).unwrap();
    assert_eq!(rows.len(), sc.segments.len());
    for r in &rows {
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(r.alg1_decision.is_some() && r.ukf_decision.is_some());
    }
}

#[test]
fn state_record_round_trips() {
    let p = nalgebra::DMatrix::from_fn(6, 6, |i, j| if i == j { 2.0 } else { 0.1 * (i + j) as f64 });
    let est = mandet::ukf::StateEstimate::new(3600.5, nalgebra::DVector::from_vec(vec![7e6, 1.0, 2.0, 3.0, 7.5e3, 4.0]), p);
    let rec = StateRecord::from(&est);
    let back = mandet::ukf::StateEstimate::try_from(&rec).unwrap();
    assert_eq!(back.x, est.x);
    assert_eq!(back.p, est.p);
    assert!((back.epoch - est.epoch).abs() < 1e-6);
}
