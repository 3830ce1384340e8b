use std::path::{Path, PathBuf};

use clap::Args;

use crowdtest::analysis::{analyse, read_sheets};
use crowdtest::arena::ArenaGeometry;
use crowdtest::calibration::{extract_entry_times, extract_route_choices, playback_scale, speed_stats};
use crowdtest::metrics::{clip_metrics, frame_metrics, sweep as sweep_clips, sweep_table, ClipMetrics};
use crowdtest::noise::apply_flicks;
use crowdtest::render::{compose_trial, read_answer_key, render_clip, render_opening, write_trial, AnswerKey, PairInput};
use crowdtest::sim::{integrate, ScenarioFile};
use crowdtest::trajectory::io::FRAME_HEADER;
use crowdtest::trajectory::{
    extract_clips as search_clips, fill_all_gaps, ingest_tracks, read_clip, read_footage, resample, write_clip,
    write_footage, Clip, ClipSearch, Footage,
};
use crowdtest::Error;

use crate::config::Loaded;
use crate::{CliError, Common};

type CmdResult = Result<(), CliError>;

fn read(path: &Path) -> Result<String, CliError> {
    Ok(std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn write(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn mkdir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn out_path(common: &Common, loaded: &Loaded, what: &str) -> Result<PathBuf, CliError> {
    common
        .out
        .clone()
        .or_else(|| loaded.config.paths.out.as_ref().map(|p| loaded.resolve(p)))
        .ok_or_else(|| CliError::Usage(format!("--out is required for {what}")))
}

fn hash_meta(loaded: &Loaded) -> (&'static str, String) {
    ("config_hash", loaded.hash())
}

/// Reads a clip file, or a frame file, into display footage at `rate`.
fn load_footage(path: &Path, arena: &ArenaGeometry, rate: f64) -> Result<Footage, CliError> {
    let text = read(path)?;
    if text.lines().any(|l| l.trim() == FRAME_HEADER) {
        let file = read_footage(&text, Some(arena))?;
        if (file.footage.rate - rate).abs() > 1e-9 {
            return Err(Error::RateMismatch {
                expected: rate,
                found: file.footage.rate,
            }
            .into());
        }
        return Ok(file.footage);
    }
    let clip = read_clip(&text, Some(arena))?.clip;
    Ok(Footage::from_clip(&resample(&clip, rate)?))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// Raw track file `track_id,frame_index,x,y` in source units.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Longest run of missing samples to interpolate across.
    #[arg(long)]
    max_gap: Option<usize>,
}

pub fn ingest(args: IngestArgs) -> CmdResult {
    let mut loaded = Loaded::load(args.common.config.as_deref())?;
    if let Some(g) = args.max_gap {
        loaded.config.ingest.max_gap = g;
    }
    let arena = loaded.arena()?;
    let scale = &mut loaded.config.ingest.scale;
    scale.arena_width = arena.width;
    scale.arena_height = arena.height;
    let input = match (&args.input, &loaded.config.paths.dataset) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => loaded.resolve(p),
        (None, None) => return Err(CliError::Usage("ingest needs --input or paths.dataset".into())),
    };
    let out = out_path(&args.common, &loaded, "ingest")?;

    let report = ingest_tracks(&read(&input)?, &loaded.config.ingest.scale)?;
    let rate = loaded.config.ingest.scale.native_rate;
    let (tracks, gaps) = fill_all_gaps(&report.tracks, loaded.config.ingest.max_gap);
    let first = tracks.iter().filter_map(|t| t.first_time()).fold(f64::INFINITY, f64::min);
    let last = tracks.iter().filter_map(|t| t.last_time()).fold(f64::NEG_INFINITY, f64::max);
    if !first.is_finite() {
        return Err(Error::invalid("no track survived ingestion").into());
    }
    let dataset = Clip {
        start: first,
        duration: last - first + 1.0 / rate,
        tracks,
        rate,
        arena,
    };
    let meta = [
        hash_meta(&loaded),
        ("rejected_tracks", report.rejected.len().to_string()),
        ("interpolated_samples", gaps.interpolated.to_string()),
        ("gap_splits", gaps.splits.to_string()),
    ];
    write(&out, &write_clip(&dataset, &meta))?;
    println!(
        "ingested {} tracks ({} rejected, {} samples interpolated, {} splits) -> {}",
        dataset.tracks.len(),
        report.rejected.len(),
        gaps.interpolated,
        gaps.splits,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    common: Common,
    /// Ingested dataset file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    /// Clip length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    min_population: Option<usize>,
    #[arg(long)]
    max_population: Option<usize>,
}

pub fn extract_clips(args: ExtractArgs) -> CmdResult {
    let mut loaded = Loaded::load(args.common.config.as_deref())?;
    let e = &mut loaded.config.extract;
    e.seed = args.common.seed.unwrap_or(e.seed);
    e.count = args.count.unwrap_or(e.count);
    e.duration = args.duration.unwrap_or(e.duration);
    e.min_population = args.min_population.unwrap_or(e.min_population);
    e.max_population = args.max_population.unwrap_or(e.max_population);
    if e.min_population > e.max_population {
        return Err(CliError::Usage("--min-population exceeds --max-population".into()));
    }
    let e = e.clone();
    let out = out_path(&args.common, &loaded, "extract-clips")?;
    let arena = loaded.arena()?;
    let dataset = read_clip(&read(&args.input)?, Some(&arena))?.clip;
    let search = ClipSearch::new(e.duration, e.min_population..=e.max_population, e.count, e.seed);
    let clips = search_clips(&dataset.tracks, &search, &arena)?;
    mkdir(&out)?;
    for (i, clip) in clips.iter().enumerate() {
        let path = out.join(format!("clip_{:02}.csv", i + 1));
        let meta = [hash_meta(&loaded), ("seed", e.seed.to_string())];
        write(&path, &write_clip(clip, &meta))?;
        println!("{}: start {} s, {} pedestrians", path.display(), clip.start, clip.population());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// Real clip file.
    #[arg(long)]
    input: PathBuf,
    /// Walking speed the playback factor normalises to (m/s).
    #[arg(long)]
    reference_speed: Option<f64>,
}

pub fn calibrate(args: CalibrateArgs) -> CmdResult {
    let mut loaded = Loaded::load(args.common.config.as_deref())?;
    if let Some(r) = args.reference_speed {
        loaded.config.calibrate.reference_speed = r;
    }
    if let Some(s) = args.common.seed {
        loaded.config.simulate.seed = s;
    }
    let out = out_path(&args.common, &loaded, "calibrate")?;
    let arena = loaded.arena()?;
    let cal = loaded.config.calibrate.clone();
    let clip = read_clip(&read(&args.input)?, Some(&arena))?.clip;

    let routes = extract_route_choices(&clip, &arena, cal.portal_threshold)?;
    let entries = extract_entry_times(&clip, &arena, cal.portal_threshold);
    let speeds = speed_stats([&clip], cal.bin_width)?;
    let scale = playback_scale(speeds.mean, cal.reference_speed)?;
    let hash = loaded.hash();
    let stamp = format!("# config_hash={hash}\n");

    mkdir(&out)?;
    write(&out.join("routes.csv"), &(stamp.clone() + &routes.distribution.to_table()))?;
    write(&out.join("entries.csv"), &(stamp.clone() + &entries.to_table()))?;
    write(&out.join("speeds.csv"), &(stamp + &speeds.histogram_table()))?;
    let summary = format!(
        "config_hash = \"{hash}\"\npopulation = {}\nmean_speed = {}\nreference_speed = {}\nplayback_factor = {}\ninterior_tracks = {}\n",
        clip.population(),
        speeds.mean,
        cal.reference_speed,
        scale.factor,
        routes.interior.len(),
    );
    write(&out.join("calibration.toml"), &summary)?;

    let arena_spec = if loaded.config.arena.0 == "forum" {
        "forum".to_string()
    } else {
        let p = loaded.resolve(Path::new(&loaded.config.arena.0));
        std::fs::canonicalize(&p).unwrap_or(p).display().to_string()
    };
    let sim = &loaded.config.simulate;
    let scenario = ScenarioFile {
        seed: sim.seed,
        duration: clip.duration,
        output_rate: sim.output_rate,
        arena: arena_spec,
        routes: "routes.csv".into(),
        entries: "entries.csv".into(),
        resample_entries: sim.resample_entries,
        params: sim.params,
        model: sim.model,
        noise: Some(loaded.config.noise),
    };
    write(&out.join("scenario.toml"), &scenario.to_toml())?;
    println!(
        "{} pedestrians, mean speed {:.3} m/s, playback factor {:.4}",
        clip.population(),
        speeds.mean,
        scale.factor
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Scenario file written by `calibrate` (or by hand).
    #[arg(long)]
    scenario: PathBuf,
}

pub fn simulate(args: SimulateArgs) -> CmdResult {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let mut file = ScenarioFile::from_toml(&read(&args.scenario)?)?;
    if let Some(s) = args.common.seed {
        file.seed = s;
    }
    let out = out_path(&args.common, &loaded, "simulate")?;
    let base = args.scenario.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    let scenario = file.resolve(&base)?;
    let output = integrate(&scenario)?;
    for w in &output.warnings {
        log::warn!("{w}");
    }
    let scenario_hash = {
        use sha2::Digest;
        hex::encode(sha2::Sha256::digest(file.to_toml().as_bytes()))
    };
    let realized = output.realized_mean_speed();
    let meta = [
        hash_meta(&loaded),
        ("scenario_hash", scenario_hash),
        ("seed", file.seed.to_string()),
        ("realized_mean_speed", realized.map(|v| v.to_string()).unwrap_or_default()),
        ("min_separation", output.min_separation.to_string()),
        ("peak_speed", output.peak_speed.to_string()),
        ("exits", output.exits().to_string()),
    ];
    write(&out, &write_clip(&output.to_clip(), &meta))?;
    println!(
        "{} pedestrians, {} exited, realized mean speed {}, min separation {:.3} m",
        output.tracks.len(),
        output.exits(),
        realized.map(|v| format!("{v:.3} m/s")).unwrap_or_else(|| "n/a".into()),
        output.min_separation
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    common: Common,
    /// Simulated clip file.
    #[arg(long)]
    input: PathBuf,
    /// Chance per agent per frame of a heading flick.
    #[arg(long)]
    probability: Option<f64>,
    /// Largest flick, radians.
    #[arg(long)]
    max_flick: Option<f64>,
}

pub fn add_noise(args: NoiseArgs) -> CmdResult {
    let mut loaded = Loaded::load(args.common.config.as_deref())?;
    let n = &mut loaded.config.noise;
    n.seed = args.common.seed.unwrap_or(n.seed);
    n.flick_probability = args.probability.unwrap_or(n.flick_probability);
    n.max_flick = args.max_flick.unwrap_or(n.max_flick);
    let noise = *n;
    let out = out_path(&args.common, &loaded, "add-noise")?;
    let arena = loaded.arena()?;
    let file = read_clip(&read(&args.input)?, Some(&arena))?;
    let clip = resample(&file.clip, loaded.config.render.frame_rate)?;
    let mut footage = Footage::from_clip(&clip);
    footage.frames = apply_flicks(&footage.frames, &noise)?;
    let mut meta = vec![hash_meta(&loaded), ("noise_seed", noise.seed.to_string())];
    if let Some(s) = file.metadata.get("seed") {
        meta.push(("sim_seed", s.clone()));
    }
    write(&out, &write_footage(&footage, &meta))?;
    println!("{} frames at {} Hz -> {}", footage.frames.len(), footage.rate, out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    common: Common,
    /// Clip or frame file.
    #[arg(long)]
    input: PathBuf,
}

fn metrics_of(path: &Path, arena: &ArenaGeometry) -> Result<ClipMetrics, CliError> {
    let text = read(path)?;
    if text.lines().any(|l| l.trim() == FRAME_HEADER) {
        let f = read_footage(&text, Some(arena))?.footage;
        Ok(frame_metrics(&f.frames, f.population())?)
    } else {
        Ok(clip_metrics(&read_clip(&text, Some(arena))?.clip)?)
    }
}

pub fn metrics(args: MetricsArgs) -> CmdResult {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let out = out_path(&args.common, &loaded, "metrics")?;
    let m = metrics_of(&args.input, &loaded.arena()?)?;
    let stamp = format!("# config_hash={}\n", loaded.hash());
    mkdir(&out)?;
    write(&out.join("polarization.csv"), &(stamp.clone() + &m.polarization.to_table()))?;
    write(&out.join("nnd.csv"), &(stamp + &m.nnd.to_table()))?;
    let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "nan".into());
    let summary = format!(
        "config_hash = \"{}\"\npopulation = {}\nmean_polarization = {}\nmean_nnd = {}\nskipped_nnd_frames = {}\n",
        loaded.hash(),
        m.polarization.population,
        fmt(m.polarization.mean),
        fmt(m.nnd.mean),
        m.nnd.skipped
    );
    write(&out.join("summary.toml"), &summary)?;
    print!("{summary}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Clip files; each becomes one row labelled by its file stem.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
}

pub fn sweep(args: SweepArgs) -> CmdResult {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let out = out_path(&args.common, &loaded, "sweep")?;
    let arena = loaded.arena()?;
    let mut clips = Vec::new();
    for p in &args.input {
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        clips.push((label, read_clip(&read(p)?, Some(&arena))?.clip));
    }
    let refs: Vec<(&str, &Clip)> = clips.iter().map(|(l, c)| (l.as_str(), c)).collect();
    let points = sweep_clips(&refs)?;
    let table = format!("# config_hash={}\n{}", loaded.hash(), sweep_table(&points));
    write(&out, &table)?;
    print!("{}", sweep_table(&points));
    Ok(())
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    common: Common,
    /// Clip or frame file.
    #[arg(long)]
    input: PathBuf,
    /// Playback speed multiplier.
    #[arg(long, default_value_t = 1.0)]
    factor: f64,
    /// Render only the first this-many seconds of display time.
    #[arg(long)]
    seconds: Option<f64>,
}

pub fn render(args: RenderArgs) -> CmdResult {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let out = out_path(&args.common, &loaded, "render")?;
    let style = &loaded.config.render;
    let footage = load_footage(&args.input, &loaded.arena()?, style.frame_rate)?;
    let segment = match args.seconds {
        Some(s) => render_opening(&footage, style, args.factor, s)?,
        None => render_clip(&footage, style, args.factor)?,
    };
    let n = segment.write_frames(style, &out)?;
    write(
        &out.join("render.toml"),
        &format!(
            "config_hash = \"{}\"\nframes = {n}\nfactor = {}\nframe_rate = {}\n",
            loaded.hash(),
            args.factor,
            style.frame_rate
        ),
    )?;
    println!("{n} frames -> {}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrialBuildArgs {
    #[command(flatten)]
    common: Common,
    /// `REAL,SIMULATED` file pair; give six, in presentation order.
    #[arg(long = "pair", value_name = "REAL,SIM")]
    pairs: Vec<String>,
    /// Where to write the answer key; must be outside the bundle.
    #[arg(long)]
    key: PathBuf,
    /// Also write full side-by-side frames.
    #[arg(long)]
    composite: bool,
    /// Play real clips at recorded speed instead of normalising.
    #[arg(long)]
    no_playback_scale: bool,
}

pub fn trial_build(args: TrialBuildArgs) -> CmdResult {
    let mut loaded = Loaded::load(args.common.config.as_deref())?;
    let t = &mut loaded.config.trial;
    t.seed = args.common.seed.unwrap_or(t.seed);
    t.composite |= args.composite;
    t.scale_playback &= !args.no_playback_scale;
    if !args.pairs.is_empty() {
        t.pairs = args
            .pairs
            .iter()
            .map(|s| match s.split_once(',') {
                Some((r, m)) => Ok([PathBuf::from(r.trim()), PathBuf::from(m.trim())]),
                None => Err(CliError::Usage(format!("--pair `{s}` must be REAL,SIM"))),
            })
            .collect::<Result<_, _>>()?;
    }
    let trial_cfg = loaded.config.trial.clone();
    if trial_cfg.pairs.len() != crowdtest::render::PAIR_COUNT {
        return Err(CliError::Usage(format!(
            "a trial needs {} pairs, got {}",
            crowdtest::render::PAIR_COUNT,
            trial_cfg.pairs.len()
        )));
    }
    let bundle = out_path(&args.common, &loaded, "trial-build")?;
    let arena = loaded.arena()?;
    let style = loaded.config.render.clone();
    let reference = loaded.config.calibrate.reference_speed;

    let mut real = Vec::new();
    let mut sims = Vec::new();
    let mut factors = Vec::new();
    for [r, s] in &trial_cfg.pairs {
        let (r, s) = (loaded.resolve(r), loaded.resolve(s));
        let clip = read_clip(&read(&r)?, Some(&arena))?.clip;
        let factor = if trial_cfg.scale_playback {
            playback_scale(speed_stats([&clip], loaded.config.calibrate.bin_width)?.mean, reference)?.factor
        } else {
            1.0
        };
        factors.push(factor);
        real.push(Footage::from_clip(&resample(&clip, style.frame_rate)?));
        sims.push(load_footage(&s, &arena, style.frame_rate)?);
    }
    let inputs: Vec<PairInput> = real
        .iter()
        .zip(&sims)
        .zip(&factors)
        .map(|((r, s), &f)| PairInput {
            real: r,
            simulated: s,
            real_playback: f,
        })
        .collect();
    let trial = compose_trial(&inputs, trial_cfg.seed, &style)?;
    let written = write_trial(&trial, &bundle, &args.key, trial_cfg.composite, Some(loaded.hash()))?;
    println!(
        "{} s trial, {} frames, {} images -> {}; key -> {}",
        trial.total_seconds(),
        trial.total_frames(),
        written.images,
        bundle.display(),
        written.key_path.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrialScoreArgs {
    #[command(flatten)]
    common: Common,
    /// Answer sheet file.
    #[arg(long)]
    sheets: PathBuf,
    /// Answer key file written by `trial-build`.
    #[arg(long, conflicts_with = "key_string")]
    key: Option<PathBuf>,
    /// Key given inline, e.g. AABABB.
    #[arg(long)]
    key_string: Option<String>,
}

pub fn trial_score(args: TrialScoreArgs) -> CmdResult {
    let loaded = Loaded::load(args.common.config.as_deref())?;
    let key: AnswerKey = match (&args.key, &args.key_string) {
        (Some(p), _) => read_answer_key(&read(p)?)?.answer_key()?,
        (None, Some(s)) => s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?,
        (None, None) => return Err(CliError::Usage("trial-score needs --key or --key-string".into())),
    };
    let file = read_sheets(&read(&args.sheets)?)?;
    let report = analyse(&file, &key)?;
    let summary = format!("config_hash: {}\n{}", loaded.hash(), report.summary());
    if let Some(out) = &args.common.out {
        let stamp = format!("# config_hash={}\n", loaded.hash());
        mkdir(out)?;
        write(&out.join("report.txt"), &summary)?;
        write(&out.join("scores.csv"), &(stamp.clone() + &report.score_table()))?;
        write(&out.join("pairs.csv"), &(stamp.clone() + &report.pair_table()))?;
        write(&out.join("groups.csv"), &(stamp + &report.group_table()))?;
    }
    print!("{summary}");
    Ok(())
}
