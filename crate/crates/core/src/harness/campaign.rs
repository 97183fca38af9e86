//! Detector orchestration over scenarios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{initial_estimate, mix_seed, Direction, GridTags, Intensity, Scenario, ScenarioSpec, Segment};
use crate::attributable::{self, Attributable};
use crate::config::Config;
use crate::dynamics::{Propagator, SpacecraftParams};
use crate::error::Result;
use crate::mdf::{self, Mdf, MdfRun};
use crate::radar::{RadarStation, RadarTrack};
use crate::ukf::orbit::{run_tracks, FilterRun, OrbitProcess, RadarMeasurementModel};
use crate::ukf::{StateEstimate, Ukf};
use crate::{alg1, alg2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Alg1,
    Alg2,
    Ukf,
    Mdf,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::Alg1, Detector::Alg2, Detector::Ukf, Detector::Mdf];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Alg1 => "alg1",
            Detector::Alg2 => "alg2",
            Detector::Ukf => "ukf",
            Detector::Mdf => "mdf",
        }
    }
}

/// One segment of one scenario with every detector's metrics. Unrun detectors
/// leave their columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub scenario_id: String,
    pub segment_id: usize,
    pub intensity: Option<Intensity>,
    pub offset_hours: Option<f64>,
    pub direction: Option<Direction>,
    pub repetition: u32,
    pub start_epoch: f64,
    pub end_epoch: f64,
    pub truth_label: bool,
    pub error: Option<String>,
    pub alg1_md: Option<f64>,
    pub alg1_pr: Option<f64>,
    pub alg1_dropped: Option<usize>,
    pub alg1_valid: Option<bool>,
    pub alg1_decision: Option<bool>,
    #[serde(rename = "J_median")]
    pub j_median: Option<f64>,
    #[serde(rename = "P1M")]
    pub p1m: Option<f64>,
    #[serde(rename = "P5M")]
    pub p5m: Option<f64>,
    #[serde(rename = "P8M")]
    pub p8m: Option<f64>,
    #[serde(rename = "P1D")]
    pub p1d: Option<f64>,
    #[serde(rename = "P5D")]
    pub p5d: Option<f64>,
    #[serde(rename = "P8D")]
    pub p8d: Option<f64>,
    pub alg2_valid: Option<bool>,
    pub alg2_decision: Option<bool>,
    pub ukf_psi_first: Option<f64>,
    pub ukf_psi_max: Option<f64>,
    pub ukf_psi_aggregate: Option<f64>,
    pub ukf_probability: Option<f64>,
    pub ukf_decision: Option<bool>,
    pub mdf_p: Option<f64>,
    pub mdf_inflations: Option<u32>,
    pub mdf_saturated: Option<bool>,
    pub mdf_decision: Option<bool>,
}

impl SegmentRow {
    fn new(inputs: &SegmentInputs<'_>, seg: &Segment) -> Self {
        let tags = inputs.tags;
        Self {
            scenario_id: inputs.scenario_id.to_string(),
            segment_id: seg.id,
            intensity: tags.map(|t| t.intensity),
            offset_hours: tags.map(|t| t.offset_hours),
            direction: tags.map(|t| t.direction),
            repetition: inputs.repetition,
            start_epoch: seg.start_epoch,
            end_epoch: seg.end_epoch,
            truth_label: seg.truth_label,
            ..Self::new_empty()
        }
    }

    /// Row with only the identifiers set.
    pub fn blank(scenario_id: &str, segment_id: usize) -> Self {
        Self { scenario_id: scenario_id.to_string(), segment_id, ..Self::new_empty() }
    }

    pub fn record_alg1(&mut self, o: &alg1::Alg1Outcome) {
        self.alg1_md = Some(o.md);
        self.alg1_pr = Some(o.probability);
        self.alg1_dropped = Some(o.dropped);
        self.alg1_valid = Some(o.valid);
        self.alg1_decision = Some(o.manoeuvre);
    }

    pub fn record_alg2(&mut self, o: &alg2::Alg2Outcome) {
        self.j_median = Some(o.j_median);
        let m = o.metrics;
        (self.p1m, self.p5m, self.p8m) = (Some(m.p1m), Some(m.p5m), Some(m.p8m));
        (self.p1d, self.p5d, self.p8d) = (Some(m.p1d), Some(m.p5d), Some(m.p8d));
        self.alg2_valid = Some(o.valid);
        self.alg2_decision = Some(o.manoeuvre);
    }

    pub fn push_error(&mut self, who: &str, e: impl std::fmt::Display) {
        let msg = format!("{who}: {e}");
        self.error = Some(match self.error.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }

    /// Decision of `d`, or `None` when it did not run or its result is invalid.
    pub fn decision(&self, d: Detector) -> Option<bool> {
        match d {
            Detector::Alg1 => self.alg1_decision.filter(|_| self.alg1_valid != Some(false)),
            Detector::Alg2 => self.alg2_decision.filter(|_| self.alg2_valid != Some(false)),
            Detector::Ukf => self.ukf_decision,
            Detector::Mdf => self.mdf_decision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionReport {
    pub rows: Vec<SegmentRow>,
}

/// Confusion counts of one detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub positives: usize,
    pub negatives: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    /// Segments without a valid decision.
    pub undecided: usize,
}

impl Counts {
    pub fn false_negatives(&self) -> usize {
        self.positives - self.true_positives
    }

    fn ratio(a: usize, b: usize) -> Option<f64> {
        (b > 0).then(|| a as f64 / b as f64)
    }

    pub fn detection_rate(&self) -> Option<f64> {
        Self::ratio(self.true_positives, self.positives)
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        Self::ratio(self.false_positives, self.negatives)
    }

    pub fn false_negative_rate(&self) -> Option<f64> {
        Self::ratio(self.false_negatives(), self.positives)
    }
}

impl DetectionReport {
    pub fn counts_where(&self, d: Detector, keep: impl Fn(&SegmentRow) -> bool) -> Counts {
        let mut c = Counts::default();
        for r in self.rows.iter().filter(|r| keep(r)) {
            match (r.decision(d), r.truth_label) {
                (None, _) => c.undecided += 1,
                (Some(dec), true) => {
                    c.positives += 1;
                    c.true_positives += dec as usize;
                }
                (Some(dec), false) => {
                    c.negatives += 1;
                    c.false_positives += dec as usize;
                }
            }
        }
        c
    }

    pub fn counts(&self, d: Detector) -> Counts {
        self.counts_where(d, |_| true)
    }

    /// Detectors with at least one recorded decision.
    pub fn detectors(&self) -> Vec<Detector> {
        Detector::ALL.into_iter().filter(|&d| self.rows.iter().any(|r| r.decision(d).is_some())).collect()
    }

    /// One JSON object per line, rows in report order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let rows = text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<std::result::Result<_, _>>()?;
        Ok(Self { rows })
    }
}

/// Everything the detectors need about one tracked object, independent of
/// where the tracks and reference states come from.
pub struct SegmentInputs<'a> {
    pub scenario_id: &'a str,
    pub tags: Option<GridTags>,
    pub repetition: u32,
    pub seed: u64,
    pub station: &'a RadarStation,
    pub model_params: SpacecraftParams,
    pub tracks: &'a [RadarTrack],
    pub segments: &'a [Segment],
}

impl SegmentInputs<'_> {
    fn propagator(&self, cfg: &Config) -> Propagator {
        Propagator::new(&cfg.dynamics, &self.model_params)
    }
}

pub fn filter_models_for(station: &RadarStation, params: &SpacecraftParams, cfg: &Config) -> (Ukf<OrbitProcess>, RadarMeasurementModel) {
    let ukf = Ukf::new(OrbitProcess::new(Propagator::new(&cfg.dynamics, params), &cfg.filter), cfg.filter.ukf());
    let model = RadarMeasurementModel { station: station.clone(), dynamics: cfg.dynamics, subset: cfg.filter.subset };
    (ukf, model)
}

/// Filter start: truth at the scenario start, perturbed by the configured covariance.
pub fn filter_initial_estimate(scenario: &Scenario, cfg: &Config) -> Result<crate::ukf::StateEstimate> {
    let x = scenario.truth.state_at(scenario.spec.t_start)?;
    initial_estimate(&x, &cfg.harness.filter_covariance_lvlh(), true, mix_seed(scenario.spec.seed, 0xF11))
}

pub fn filter_models(scenario: &Scenario, cfg: &Config) -> (Ukf<OrbitProcess>, RadarMeasurementModel) {
    filter_models_for(&scenario.spec.station, &scenario.spec.model_params, cfg)
}

pub fn run_ukf(scenario: &Scenario, cfg: &Config) -> Result<FilterRun> {
    let (ukf, model) = filter_models(scenario, cfg);
    run_tracks(&ukf, &model, &filter_initial_estimate(scenario, cfg)?, &scenario.tracks, &cfg.filter)
}

pub fn run_mdf(scenario: &Scenario, cfg: &Config) -> Result<MdfRun> {
    mdf_from(&scenario.spec.station, &scenario.spec.model_params, &filter_initial_estimate(scenario, cfg)?, &scenario.tracks, cfg)
}

fn mdf_from(station: &RadarStation, params: &SpacecraftParams, init: &StateEstimate, tracks: &[RadarTrack], cfg: &Config) -> Result<MdfRun> {
    let (ukf, model) = filter_models_for(station, params, cfg);
    let m = Mdf { ukf: &ukf, model: &model, filter: cfg.filter, cfg: cfg.mdf, attributable: cfg.attributable };
    mdf::run(&m, init, tracks)
}

/// Every segment of one scenario through the selected detectors.
pub fn run_scenario(scenario: &Scenario, detectors: &[Detector], cfg: &Config) -> Vec<SegmentRow> {
    let inputs = SegmentInputs {
        scenario_id: &scenario.spec.id,
        tags: scenario.spec.tags,
        repetition: scenario.spec.repetition,
        seed: scenario.spec.seed,
        station: &scenario.spec.station,
        model_params: scenario.spec.model_params,
        tracks: &scenario.tracks,
        segments: &scenario.segments,
    };
    let p0 = cfg.harness.detector_covariance_lvlh();
    let segment_start = |seg: &Segment| {
        let x = scenario.truth.state_at(seg.start_epoch)?;
        initial_estimate(&x, &p0, cfg.harness.perturb_initial_mean, mix_seed(scenario.spec.seed, ((seg.id as u64) << 8) | 1))
    };
    run_segments(&inputs, detectors, cfg, segment_start, || filter_initial_estimate(scenario, cfg))
}

/// Runs the selected detectors over `inputs`. `segment_start` gives the
/// reachability detectors' initial estimate of a segment, `filter_start` the
/// state the sequential filters start from.
pub fn run_segments(
    inputs: &SegmentInputs<'_>,
    detectors: &[Detector],
    cfg: &Config,
    segment_start: impl Fn(&Segment) -> Result<StateEstimate>,
    filter_start: impl Fn() -> Result<StateEstimate>,
) -> Vec<SegmentRow> {
    let mut rows: Vec<SegmentRow> = inputs.segments.iter().map(|s| SegmentRow::new(inputs, s)).collect();
    let seed = inputs.seed;
    if detectors.iter().any(|d| matches!(d, Detector::Alg1 | Detector::Alg2)) {
        let atts: Vec<Result<Attributable>> = inputs.tracks.iter().map(|t| attributable::compute(t, &cfg.attributable)).collect();
        let prop = inputs.propagator(cfg);
        for (row, seg) in rows.iter_mut().zip(inputs.segments) {
            let att = match &atts[seg.to_track] {
                Ok(a) => a,
                Err(e) => {
                    row.push_error("attributable", e);
                    continue;
                }
            };
            let est = match segment_start(seg) {
                Ok(e) => e,
                Err(e) => {
                    row.push_error("initial state", e);
                    continue;
                }
            };
            let salt = (seg.id as u64) << 8;
            if detectors.contains(&Detector::Alg1) {
                match alg1::detect(&est, att, inputs.station, &cfg.dynamics, &prop, &cfg.alg1, mix_seed(seed, salt | 2)) {
                    Ok(o) => row.record_alg1(&o),
                    Err(e) => row.push_error("alg1", e),
                }
            }
            if detectors.contains(&Detector::Alg2) {
                match alg2::detect(&est, att, inputs.station, &cfg.dynamics, &prop, &cfg.alg2, mix_seed(seed, salt | 3)) {
                    Ok(o) => row.record_alg2(&o),
                    Err(e) => row.push_error("alg2", e),
                }
            }
        }
    }
    if !detectors.iter().any(|d| matches!(d, Detector::Ukf | Detector::Mdf)) {
        return rows;
    }
    let init = match filter_start() {
        Ok(i) => i,
        Err(e) => {
            rows.iter_mut().for_each(|r| r.push_error("filter start", &e));
            return rows;
        }
    };
    if detectors.contains(&Detector::Ukf) {
        let (ukf, model) = filter_models_for(inputs.station, &inputs.model_params, cfg);
        match run_tracks(&ukf, &model, &init, inputs.tracks, &cfg.filter) {
            Ok(run) => {
                for (row, seg) in rows.iter_mut().zip(inputs.segments) {
                    let m = run.metrics[seg.to_track];
                    row.ukf_psi_first = Some(m.psi_first);
                    row.ukf_psi_max = Some(m.psi_max);
                    row.ukf_psi_aggregate = Some(m.psi_aggregate);
                    row.ukf_probability = Some(m.probability);
                    row.ukf_decision = Some(m.probability >= cfg.filter.detection_threshold);
                }
            }
            Err(e) => rows.iter_mut().for_each(|r| r.push_error("ukf", &e)),
        }
    }
    if detectors.contains(&Detector::Mdf) {
        match mdf_from(inputs.station, &inputs.model_params, &init, inputs.tracks, cfg) {
            Ok(run) => {
                for (row, seg) in rows.iter_mut().zip(inputs.segments) {
                    let o = &run.outcomes[seg.to_track];
                    row.mdf_p = Some(o.p_manoeuvre);
                    row.mdf_inflations = Some(o.inflation.doublings);
                    row.mdf_saturated = Some(o.inflation.saturated);
                    row.mdf_decision = Some(o.manoeuvre);
                }
            }
            Err(e) => rows.iter_mut().for_each(|r| r.push_error("mdf", &e)),
        }
    }
    rows
}

/// Scenario failures become a single error row so that they stay visible.
fn failed_scenario(spec: &ScenarioSpec, e: impl std::fmt::Display) -> SegmentRow {
    let mut row = SegmentRow {
        scenario_id: spec.id.clone(),
        segment_id: 0,
        intensity: spec.tags.map(|t| t.intensity),
        offset_hours: spec.tags.map(|t| t.offset_hours),
        direction: spec.tags.map(|t| t.direction),
        repetition: spec.repetition,
        start_epoch: spec.t_start,
        end_epoch: spec.t_end,
        truth_label: !spec.manoeuvres.is_empty(),
        ..SegmentRow::new_empty()
    };
    row.push_error("scenario", e);
    row
}

impl SegmentRow {
    fn new_empty() -> Self {
        Self {
            scenario_id: String::new(),
            segment_id: 0,
            intensity: None,
            offset_hours: None,
            direction: None,
            repetition: 0,
            start_epoch: 0.0,
            end_epoch: 0.0,
            truth_label: false,
            error: None,
            alg1_md: None,
            alg1_pr: None,
            alg1_dropped: None,
            alg1_valid: None,
            alg1_decision: None,
            j_median: None,
            p1m: None,
            p5m: None,
            p8m: None,
            p1d: None,
            p5d: None,
            p8d: None,
            alg2_valid: None,
            alg2_decision: None,
            ukf_psi_first: None,
            ukf_psi_max: None,
            ukf_psi_aggregate: None,
            ukf_probability: None,
            ukf_decision: None,
            mdf_p: None,
            mdf_inflations: None,
            mdf_saturated: None,
            mdf_decision: None,
        }
    }
}

/// Runs all specs (in parallel) and merges rows sorted by scenario id and segment.
pub fn run_campaign(specs: &[ScenarioSpec], detectors: &[Detector], cfg: &Config) -> DetectionReport {
    run_campaign_filtered(specs, detectors, cfg, |_| true)
}

/// As [`run_campaign`], keeping only segments accepted by `keep`.
pub fn run_campaign_filtered(specs: &[ScenarioSpec], detectors: &[Detector], cfg: &Config, keep: impl Fn(&Segment) -> bool + Sync) -> DetectionReport {
    let mut rows: Vec<SegmentRow> = specs
        .par_iter()
        .flat_map_iter(|spec| match super::generate_scenario(spec, &cfg.dynamics) {
            Ok((mut sc, _)) => {
                if !detectors.iter().any(|d| matches!(d, Detector::Ukf | Detector::Mdf)) {
                    sc.segments.retain(|s| keep(s));
                }
                let mut rows = run_scenario(&sc, detectors, cfg);
                rows.retain(|r| sc.segments.iter().any(|s| s.id == r.segment_id && keep(s)));
                rows
            }
            Err(e) => vec![failed_scenario(spec, e)],
        })
        .collect();
    rows.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id).then(a.segment_id.cmp(&b.segment_id)));
    DetectionReport { rows }
}
