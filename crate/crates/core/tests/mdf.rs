mod common;

use common::*;
use mandet::harness::*;
use mandet::mdf::{self, long_smooth, Mdf, MdfConfig};
use mandet::ukf::orbit::position_error;
use mandet::ukf::{rts_smooth, FilterStep};
use mandet::{Config, Error};

fn short_config() -> Config {
    let mut cfg = Config::default();
    cfg.harness.span_days = 2.0;
    cfg
}

fn high_case(cfg: &Config) -> (Scenario, usize) {
    let grid = tangential_grid(cfg, &[Intensity::High], &[6.0], 1);
    let sc = scenario(&grid.specs[0], cfg);
    let k0 = sc.segments.iter().find(|s| s.truth_label).unwrap().to_track;
    (sc, k0)
}

#[test]
fn no_cap_and_no_smoothing_reproduce_plain_filter_bitwise() {
    let cfg = Config { mdf: MdfConfig { inflation_cap: 0, long_smoothing: false, ..MdfConfig::default() }, ..Config::default() };
    let (sc, _) = high_case(&cfg);
    let u = run_ukf(&sc, &cfg).unwrap();
    let m = run_mdf(&sc, &cfg).unwrap();
    assert_eq!(u.steps.len(), m.steps.len());
    for (a, b) in u.steps.iter().zip(&m.steps) {
        assert_eq!(a.filtered, b.filtered);
        assert_eq!(a.predicted, b.predicted);
    }
    assert!(m.outcomes.iter().all(|o| o.inflation.doublings == 0 && !o.smoothed));
}

#[test]
fn inflation_after_high_manoeuvre() {
    let cfg = Config::default();
    let (sc, k0) = high_case(&cfg);
    let run = run_mdf(&sc, &cfg).unwrap();
    let o = &run.outcomes[k0];
    assert!(o.manoeuvre && o.inflation.probabilities[0] >= 0.5);
    assert!(o.inflation.doublings >= 1 && !o.inflation.saturated);
    assert!(*o.inflation.probabilities.last().unwrap() < 0.5);
    assert!(!o.smoothed);
    for out in &run.outcomes {
        let log = &out.inflation;
        for w in log.determinants.windows(2) {
            assert!((w[1] / w[0] / 64.0 - 1.0).abs() < 1e-9);
        }
        assert!(log.probabilities.windows(2).all(|w| w[1] <= w[0]), "track {}: {:?}", out.track, log.probabilities);
        assert!(log.doublings <= cfg.mdf.inflation_cap);
        assert!((0.0..=1.0).contains(&out.p_manoeuvre));
    }
}

#[test]
fn quiet_scenario_smooths_without_inflating() {
    let cfg = short_config();
    let sc = scenario(&cfg.harness.base_spec(8), &cfg);
    let run = run_mdf(&sc, &cfg).unwrap();
    for o in &run.outcomes[1..] {
        assert!(o.p_manoeuvre < 0.5 && o.inflation.doublings == 0, "track {}: p {}", o.track, o.p_manoeuvre);
        assert!(o.smoothed);
    }
    assert!(!run.outcomes[0].smoothed);
}

#[test]
fn attributable_check_leaves_prior_mean_untouched() {
    let cfg = Config::default();
    let (sc, k0) = high_case(&cfg);
    let init = filter_initial_estimate(&sc, &cfg).unwrap();
    let (ukf, model) = filter_models(&sc, &cfg);
    let m = Mdf { ukf: &ukf, model: &model, filter: cfg.filter, cfg: cfg.mdf, attributable: cfg.attributable };
    for smoothing in [false, true] {
        let c = MdfConfig { long_smoothing: smoothing, ..cfg.mdf };
        let m = Mdf { cfg: c, ..m };
        let run = mdf::run(&m, &init, &sc.tracks).unwrap();
        assert_eq!(run.outcomes[0].prior_mean, init.x);
        for k in 1..sc.tracks.len() {
            let prev = &run.outcomes[k - 1].estimate;
            assert_eq!(run.outcomes[k].prior_mean, prev.x);
            if run.outcomes[k].smoothed {
                continue;
            }
            // the first plot's prediction starts from that mean, only the covariance inflated
            let first = run.track_of_step.iter().position(|&t| t == k).unwrap();
            let plain = ukf.predict(prev, sc.tracks[k].plots[0].epoch, cfg.filter.process_noise).unwrap();
            assert_eq!(run.steps[first].predicted.x, plain.est.x);
            let scale = 2f64.powi(run.outcomes[k].inflation.doublings as i32);
            assert_eq!(run.steps[first].predicted.p, plain.est.p * scale);
        }
        assert!(run.outcomes[k0].inflation.doublings > 0 && !run.outcomes[k0].smoothed);
    }
}

#[test]
fn smoothing_is_refused_after_a_declared_manoeuvre() {
    let cfg = short_config();
    let sc = scenario(&cfg.harness.base_spec(8), &cfg);
    let run = run_ukf(&sc, &cfg).unwrap();
    assert!(matches!(long_smooth(&run.steps[..3], true), Err(Error::SmoothingRefused)));
    // single-track history: plain intra-track smoothing
    let n0 = sc.tracks[0].len();
    let within = long_smooth(&run.steps[..n0], false).unwrap();
    assert_eq!(within, rts_smooth(&run.steps[..n0]).unwrap()[0]);
}

fn mid_gap_errors(seed: u64, cfg: &Config) -> (f64, f64) {
    let sc = scenario(&cfg.harness.base_spec(seed), cfg);
    let (ukf, model) = filter_models(&sc, cfg);
    let c = MdfConfig { long_smoothing: false, gap_waypoints: 1, ..cfg.mdf };
    let m = Mdf { ukf: &ukf, model: &model, filter: cfg.filter, cfg: c, attributable: cfg.attributable };
    let run = mdf::run(&m, &filter_initial_estimate(&sc, cfg).unwrap(), &sc.tracks).unwrap();
    // window: last plot of track 1, the mid-gap waypoint, track 2
    let last1 = run.track_of_step.iter().rposition(|&t| t == 1).unwrap();
    let window: Vec<FilterStep> = run.steps[last1..].iter().zip(&run.track_of_step[last1..]).filter(|(_, &t)| t <= 2).map(|(s, _)| s.clone()).collect();
    assert!(window[1].residual.is_none());
    let smoothed = rts_smooth(&window).unwrap();
    (position_error(&smoothed[1], &sc.truth).unwrap(), position_error(&window[1].filtered, &sc.truth).unwrap())
}

#[test]
fn smoothing_improves_mid_gap_error_in_most_runs() {
    // Drag mismatch large enough that the mid-gap error is driven by the
    // dynamics rather than sitting well inside the process-noise envelope.
    let mut cfg = short_config();
    cfg.harness.truth_params.drag_area = 20.0;
    let runs = 50;
    let better = (0..runs).filter(|&s| {
        let (smoothed, filtered) = mid_gap_errors(mix_seed(77, s), &cfg);
        smoothed <= filtered
    });
    let n = better.count();
    assert!(n * 10 >= runs as usize * 9, "{n}/{runs}");
}
