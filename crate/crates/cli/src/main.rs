use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mandet::attributable::{self, AttributableRecord};
use mandet::dynamics::{InertialState, Propagator};
use mandet::harness::{
    self, cdf_rows, filter_models_for, generate_scenario, grid_specs, initial_estimate, last_at_or_before, read_ephemeris_csv, read_track_dir, render_report,
    run_campaign, run_external, run_scenario, write_ephemeris_csv, DetectionReport, Detector, ReportFormat, Scenario, ScenarioSpec, SegmentRow, StateRecord,
};
use mandet::mdf::{self, Mdf};
use mandet::radar::{read_track_csv, write_track_csv, RadarTrack};
use mandet::ukf::orbit::{self, run_tracks, write_csv};
use mandet::ukf::StateEstimate;
use mandet::{alg1, alg2, Config};

#[derive(Parser)]
#[command(name = "mandet", version, about = "Manoeuvre detection from sparse radar tracks")]
struct Cli {
    /// Configuration file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scenario spec to truth ephemeris and track CSVs.
    Simulate {
        /// Scenario spec JSON; the configured nominal scenario when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Track CSV to attributable JSON.
    Fit {
        #[arg(long)]
        track: PathBuf,
    },
    /// Plain filter run log.
    Ukf(Source),
    /// Manoeuvre detection filter run log.
    Mdf(Source),
    /// Particle-cloud detector; appends to report.jsonl.
    DetectAlg1(Detect),
    /// Minimum-energy detector; appends to report.jsonl.
    DetectAlg2(Detect),
    /// Every detector over a set of scenarios.
    Campaign {
        /// Directory of scenario spec JSON files; the configured grid when omitted.
        #[arg(long)]
        specs: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [DetectorArg::Alg1, DetectorArg::Alg2, DetectorArg::Ukf, DetectorArg::Mdf])]
        detectors: Vec<DetectorArg>,
        #[arg(long, value_enum, default_value_t = FormatArg::Both)]
        format: FormatArg,
    },
    /// Report JSONL to CSV and Markdown tables.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Both)]
        format: FormatArg,
    },
}

/// Simulated scenario, or recorded tracks with a reference ephemeris.
#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with_all = ["tracks", "ephemeris"])]
    spec: Option<PathBuf>,
    /// Directory of track CSVs.
    #[arg(long, requires = "ephemeris")]
    tracks: Option<PathBuf>,
    #[arg(long, requires = "tracks")]
    ephemeris: Option<PathBuf>,
}

#[derive(Args)]
struct Detect {
    #[command(flatten)]
    source: Source,
    /// Segment start estimate (StateRecord JSON); use with --track.
    #[arg(long, requires = "track", conflicts_with_all = ["spec", "tracks"])]
    state: Option<PathBuf>,
    /// Track closing the segment.
    #[arg(long, requires = "state")]
    track: Option<PathBuf>,
    /// Segment identifier written to the report.
    #[arg(long, default_value_t = 0)]
    segment_id: usize,
    /// Whether a manoeuvre is known to lie in the segment.
    #[arg(long)]
    truth_label: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Alg1,
    Alg2,
    Ukf,
    Mdf,
}

impl From<DetectorArg> for Detector {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::Alg1 => Detector::Alg1,
            DetectorArg::Alg2 => Detector::Alg2,
            DetectorArg::Ukf => Detector::Ukf,
            DetectorArg::Mdf => Detector::Mdf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    Both,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Both => ReportFormat::Both,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match cli.cmd {
        Cmd::Simulate { spec } => simulate(spec.as_deref(), cli.seed, &cfg, out),
        Cmd::Fit { track } => fit(&track, &cfg, out),
        Cmd::Ukf(src) => filter_log(&src, false, cli.seed, &cfg, out),
        Cmd::Mdf(src) => filter_log(&src, true, cli.seed, &cfg, out),
        Cmd::DetectAlg1(d) => detect(&d, Detector::Alg1, cli.seed, &cfg, out),
        Cmd::DetectAlg2(d) => detect(&d, Detector::Alg2, cli.seed, &cfg, out),
        Cmd::Campaign { specs, detectors, format } => campaign(specs.as_deref(), &detectors, format.into(), &cfg, out),
        Cmd::Report { input, format } => {
            let report = read_report(&input)?;
            for p in render_report(&report, format.into(), out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn load_spec(path: Option<&Path>, seed: Option<u64>, cfg: &Config) -> Result<ScenarioSpec> {
    let mut spec = match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => cfg.harness.base_spec(cfg.seed),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn build_scenario(spec: &ScenarioSpec, cfg: &Config) -> Result<Scenario> {
    Ok(generate_scenario(spec, &cfg.dynamics).with_context(|| format!("scenario {}", spec.id))?.0)
}

fn simulate(spec: Option<&Path>, seed: Option<u64>, cfg: &Config, out: &Path) -> Result<()> {
    let spec = load_spec(spec, seed, cfg)?;
    let (sc, meta) = generate_scenario(&spec, &cfg.dynamics)?;
    let dir = out.join("tracks");
    fs::create_dir_all(&dir)?;
    for (k, t) in sc.tracks.iter().enumerate() {
        write_track_csv(t, &dir.join(format!("track_{k:03}.csv")))?;
    }
    write_ephemeris_csv(sc.truth.nodes(), &out.join("truth.csv"))?;
    fs::write(out.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
    fs::write(out.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    println!("{} tracks, {} segments ({} manoeuvred)", meta.n_tracks, meta.n_segments, meta.n_positive);
    Ok(())
}

fn fit(track: &Path, cfg: &Config, out: &Path) -> Result<()> {
    let t = read_track_csv(track, &cfg.radar.name)?;
    let att = attributable::compute(&t, &cfg.attributable)?;
    let stem = track.file_stem().and_then(|s| s.to_str()).unwrap_or("track");
    let path = out.join(format!("{stem}.attributable.json"));
    fs::write(&path, serde_json::to_string_pretty(&AttributableRecord::from(&att))?)?;
    println!("{}", path.display());
    Ok(())
}

struct Recorded {
    tracks: Vec<RadarTrack>,
    ephemeris: Vec<InertialState>,
}

fn recorded(src: &Source, cfg: &Config) -> Result<Option<Recorded>> {
    let (Some(dir), Some(eph)) = (&src.tracks, &src.ephemeris) else { return Ok(None) };
    let tracks = read_track_dir(dir, &cfg.radar.name)?;
    let ephemeris = read_ephemeris_csv(eph)?;
    Ok(Some(Recorded { tracks, ephemeris }))
}

fn filter_log(src: &Source, with_mdf: bool, seed: Option<u64>, cfg: &Config, out: &Path) -> Result<()> {
    let (station, params, init, tracks, truth) = match recorded(src, cfg)? {
        Some(rec) => {
            let first = rec.tracks.first().context("no tracks")?.first_epoch();
            let x = last_at_or_before(&rec.ephemeris, first).context("ephemeris starts after the first track")?;
            let init = initial_estimate(x, &cfg.harness.filter_covariance_lvlh(), false, 0)?;
            (cfg.radar.clone(), cfg.harness.model_params, init, rec.tracks, None)
        }
        None => {
            let sc = build_scenario(&load_spec(src.spec.as_deref(), seed, cfg)?, cfg)?;
            let init = harness::filter_initial_estimate(&sc, cfg)?;
            (sc.spec.station.clone(), sc.spec.model_params, init, sc.tracks, Some(sc.truth))
        }
    };
    let (ukf, model) = filter_models_for(&station, &params, cfg);
    let path = if with_mdf {
        let m = Mdf { ukf: &ukf, model: &model, filter: cfg.filter, cfg: cfg.mdf, attributable: cfg.attributable };
        let run = mdf::run(&m, &init, &tracks)?;
        let path = out.join("mdf_log.csv");
        write_csv(&mdf::run_log(&run, truth.as_ref())?, &path)?;
        path
    } else {
        let run = run_tracks(&ukf, &model, &init, &tracks, &cfg.filter)?;
        let path = out.join("ukf_log.csv");
        write_csv(&orbit::run_log(&run, truth.as_ref())?, &path)?;
        path
    };
    println!("{}", path.display());
    Ok(())
}

fn detect(d: &Detect, which: Detector, seed: Option<u64>, cfg: &Config, out: &Path) -> Result<()> {
    let rows = if let (Some(state), Some(track)) = (&d.state, &d.track) {
        let rec: StateRecord = serde_json::from_str(&fs::read_to_string(state)?).with_context(|| format!("parsing {}", state.display()))?;
        let est = StateEstimate::try_from(&rec)?;
        let t = read_track_csv(track, &cfg.radar.name)?;
        let att = attributable::compute(&t, &cfg.attributable)?;
        let prop = Propagator::new(&cfg.dynamics, &cfg.harness.model_params);
        let id = track.file_stem().and_then(|s| s.to_str()).unwrap_or("segment");
        let mut row = SegmentRow::blank(id, d.segment_id);
        (row.start_epoch, row.end_epoch, row.truth_label) = (est.epoch, t.mid_epoch(), d.truth_label);
        if which == Detector::Alg1 {
            row.record_alg1(&alg1::detect(&est, &att, &cfg.radar, &cfg.dynamics, &prop, &cfg.alg1, cfg.seed)?);
        } else {
            let o = alg2::detect(&est, &att, &cfg.radar, &cfg.dynamics, &prop, &cfg.alg2, cfg.seed)?;
            write_csv(&cdf_rows(&o), &out.join(format!("{id}.cdf.csv")))?;
            row.record_alg2(&o);
        }
        vec![row]
    } else if let Some(rec) = recorded(&d.source, cfg)? {
        let id = d.source.tracks.as_deref().and_then(|p| p.file_name()).and_then(|s| s.to_str()).unwrap_or("external");
        run_external(id, &rec.tracks, &rec.ephemeris, &[], &cfg.radar, &cfg.harness.model_params, &[which], cfg)?
    } else {
        let sc = build_scenario(&load_spec(d.source.spec.as_deref(), seed, cfg)?, cfg)?;
        run_scenario(&sc, &[which], cfg)
    };
    let report = DetectionReport { rows };
    let path = out.join("report.jsonl");
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&path)?;
    f.write_all(report.to_jsonl()?.as_bytes())?;
    for r in &report.rows {
        if let Some(e) = &r.error {
            eprintln!("{} segment {}: {e}", r.scenario_id, r.segment_id);
        }
    }
    println!("{} rows appended to {}", report.rows.len(), path.display());
    Ok(())
}

fn campaign(specs: Option<&Path>, detectors: &[DetectorArg], format: ReportFormat, cfg: &Config, out: &Path) -> Result<()> {
    let specs = match specs {
        Some(dir) => read_specs(dir)?,
        None => {
            let grid = grid_specs(&cfg.harness, &cfg.dynamics, cfg.seed)?;
            grid.controls.into_iter().chain(grid.specs).collect()
        }
    };
    if specs.is_empty() {
        bail!("no scenario specs");
    }
    let detectors: Vec<Detector> = detectors.iter().map(|&d| d.into()).collect();
    let report = run_campaign(&specs, &detectors, cfg);
    fs::write(out.join("report.jsonl"), report.to_jsonl()?)?;
    render_report(&report, format, out)?;
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} scenarios, {} segments, {} with errors", specs.len(), report.rows.len(), failed);
    Ok(())
}

fn read_specs(dir: &Path) -> Result<Vec<ScenarioSpec>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .iter()
        .map(|p| serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display())))
        .collect()
}

fn read_report(path: &Path) -> Result<DetectionReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(DetectionReport::from_jsonl(&text)?)
}
