use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facectl::animation::{load_clip, load_clip_dir, make_synthetic_clips, sample_clip, save_clip, SampledSequence};
use facectl::dataset::{self, BuildConfig, ClipOutput, DatasetManifest, Split, SplitLevel};
use facectl::eval::{self, LookupPredictor, NearestNeighbor, Predictor, RandomControls, RandomTraining};
use facectl::exec::{self, Exec};
use facectl::render::{FaceGeometry, Frame, Renderer};
use facectl::similarity::{Deduper, Window};
use facectl::{plot, ControlRegistry, ControlVector};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "facectl",
    version,
    about = "Keyframe face animation to image/control dataset pipeline"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random choice (synthetic clips, split, RC/RT).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with build settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sampling timestep in seconds.
    #[arg(long, global = true)]
    timestep: Option<f64>,
    /// Dedup threshold: frames with SSIM above this are dropped.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// SSIM window: `global` or `sliding:SIZE[:STRIDE]`.
    #[arg(long, global = true)]
    window: Option<Window>,
    /// Fraction of records (or clips) assigned to train.
    #[arg(long, global = true)]
    split: Option<f64>,
    /// Split granularity: `record` or `clip`.
    #[arg(long, global = true, value_parser = parse_split_level)]
    split_level: Option<SplitLevel>,
    /// Square image size in pixels.
    #[arg(long, global = true)]
    resolution: Option<u32>,
    /// Renderer geometry JSON (default: built-in).
    #[arg(long, global = true)]
    geometry: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct RootArg {
    /// Dataset root directory.
    #[arg(long, env = "FACECTL_DATASET_ROOT")]
    root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded synthetic animation clips as JSON files.
    GenClips {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 1: sample every clip in a directory at the fixed timestep.
    Sample {
        #[arg(long)]
        clips: PathBuf,
        /// Staging directory shared by sample, render, dedup and build.
        #[arg(long)]
        work: PathBuf,
    },
    /// Stage 2: render the staged samples, or render one vector to a PNG.
    Render {
        #[arg(long, conflicts_with_all = ["values", "neutral"])]
        work: Option<PathBuf>,
        /// JSON array of 30 control values.
        #[arg(long, requires = "out")]
        values: Option<String>,
        /// Render the neutral expression.
        #[arg(long, requires = "out")]
        neutral: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage 3: near-duplicate removal over the staged frames.
    Dedup {
        #[arg(long)]
        work: PathBuf,
    },
    /// Build a dataset, fused or from a staging directory.
    Build {
        #[arg(long, group = "source")]
        clips: Option<PathBuf>,
        /// Generate this many synthetic clips as the source.
        #[arg(long, group = "source")]
        synthetic: Option<usize>,
        /// Assemble from the outputs of sample, render and dedup.
        #[arg(long, group = "source")]
        from_work: Option<PathBuf>,
        #[command(flatten)]
        root: RootArg,
    },
    /// Per-channel mean, standard deviation, min and max.
    Stats {
        #[command(flatten)]
        root: RootArg,
        #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-channel histograms over each channel's range.
    Hist {
        #[command(flatten)]
        root: RootArg,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG summary of the channel distributions.
    Plot {
        #[command(flatten)]
        root: RootArg,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictors on the test split.
    Eval {
        #[command(flatten)]
        root: RootArg,
        /// Comma-separated: rc, rt, nn, perfect, file:PATH (prediction JSONL).
        #[arg(long, default_value = "rc,rt,nn", value_delimiter = ',')]
        predictors: Vec<String>,
        /// Also write the report table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write the reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Re-derive every record from its clip and re-render its image.
    Verify {
        #[command(flatten)]
        root: RootArg,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn parse_split_level(s: &str) -> Result<SplitLevel, String> {
    match s {
        "record" => Ok(SplitLevel::Record),
        "clip" => Ok(SplitLevel::Clip),
        _ => Err(format!("expected `record` or `clip`, got `{s}`")),
    }
}

// ---- errors ---------------------------------------------------------------

struct CliError {
    kind: &'static str,
    message: String,
}

impl From<facectl::Error> for CliError {
    fn from(e: facectl::Error) -> Self {
        CliError {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        kind: "usage",
        message: message.into(),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T = ()> = Result<T, CliError>;

// ---- configuration --------------------------------------------------------

/// Config file: BuildConfig fields, all optional, plus paths.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    timestep: Option<f64>,
    theta: Option<f64>,
    window: Option<Window>,
    split_fraction: Option<f64>,
    split_level: Option<SplitLevel>,
    seed: Option<u64>,
    resolution: Option<u32>,
    geometry_version: Option<String>,
    /// Dataset root; relative paths resolve against the config file.
    output: Option<PathBuf>,
    geometry: Option<PathBuf>,
}

struct Resolved {
    cfg: BuildConfig,
    geometry: FaceGeometry,
    registry: ControlRegistry,
    default_root: Option<PathBuf>,
    exec: Exec,
}

fn resolve(g: &Global) -> CliResult<Resolved> {
    let (file, base) = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let file: ConfigFile = serde_json::from_str(&text).map_err(|e| CliError {
                kind: "parse",
                message: format!("{}: {e}", path.display()),
            })?;
            (file, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (ConfigFile::default(), PathBuf::new()),
    };
    let d = BuildConfig::default();
    let geometry = match g
        .geometry
        .clone()
        .or_else(|| file.geometry.as_ref().map(|p| base.join(p)))
    {
        Some(path) => FaceGeometry::load(&path)?,
        None => FaceGeometry::default(),
    };
    let cfg = BuildConfig {
        timestep: g.timestep.or(file.timestep).unwrap_or(d.timestep),
        theta: g.theta.or(file.theta).unwrap_or(d.theta),
        window: g.window.or(file.window).unwrap_or(d.window),
        split_fraction: g.split.or(file.split_fraction).unwrap_or(d.split_fraction),
        split_level: g.split_level.or(file.split_level).unwrap_or(d.split_level),
        seed: g.seed.or(file.seed).unwrap_or(d.seed),
        resolution: g.resolution.or(file.resolution).unwrap_or(d.resolution),
        geometry_version: file.geometry_version.unwrap_or_else(|| geometry.version.clone()),
    };
    cfg.validate()?;
    Ok(Resolved {
        cfg,
        geometry,
        registry: ControlRegistry::standard(),
        default_root: file.output.map(|p| base.join(p)),
        exec: if g.sequential { Exec::Sequential } else { Exec::Parallel },
    })
}

impl Resolved {
    fn root(&self, arg: &RootArg) -> CliResult<PathBuf> {
        arg.root
            .clone()
            .or_else(|| self.default_root.clone())
            .ok_or_else(|| usage("no dataset root: pass --root, set FACECTL_DATASET_ROOT, or set `output` in --config"))
    }

    fn renderer(&self) -> CliResult<Renderer> {
        Ok(Renderer::new(self.geometry.clone(), self.registry.clone(), self.cfg.resolution)?.with_exec(self.exec))
    }
}

// ---- staging directory ----------------------------------------------------

const STAGE_FILE: &str = "stage.json";

/// Settings each stage used, checked by `build --from-work`.
#[derive(Default, Serialize, Deserialize)]
struct Stage {
    timestep: Option<f64>,
    resolution: Option<u32>,
    geometry_version: Option<String>,
    theta: Option<f64>,
    window: Option<Window>,
}

fn read_stage(work: &Path) -> CliResult<Stage> {
    let path = work.join(STAGE_FILE);
    if !path.exists() {
        return Ok(Stage::default());
    }
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError {
        kind: "parse",
        message: format!("{}: {e}", path.display()),
    })
}

fn write_stage(work: &Path, stage: &Stage) -> CliResult {
    let path = work.join(STAGE_FILE);
    let text = serde_json::to_string_pretty(stage).expect("stage serializes");
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
}

fn mkdir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError {
        kind: "parse",
        message: format!("{}: {e}", path.display()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Staged sample files, sorted by clip name.
fn staged_samples(work: &Path) -> CliResult<Vec<SampledSequence>> {
    let dir = work.join("samples");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| io_err(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut seqs = paths
        .iter()
        .map(|p| read_json(p))
        .collect::<CliResult<Vec<SampledSequence>>>()?;
    seqs.sort_by(|a, b| a.clip_name.cmp(&b.clip_name));
    Ok(seqs)
}

fn frame_path(work: &Path, clip: &str, k: usize) -> PathBuf {
    work.join("frames").join(format!("{}.png", dataset::record_id(clip, k)))
}

fn mismatch<T: PartialEq + std::fmt::Debug>(what: &str, staged: Option<T>, now: T) -> CliResult {
    match staged {
        Some(s) if s != now => Err(CliError {
            kind: "contract",
            message: format!("staged {what} {s:?} differs from the current setting {now:?}"),
        }),
        None => Err(CliError {
            kind: "contract",
            message: format!("staging directory has no {what}; run the earlier stages first"),
        }),
        _ => Ok(()),
    }
}

// ---- commands -------------------------------------------------------------

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.global.threads {
        exec::set_threads(n)?;
    }
    let r = resolve(&cli.global)?;
    match cli.command {
        Command::GenClips { count, out } => {
            mkdir(&out)?;
            for clip in make_synthetic_clips(count, r.cfg.seed, &r.registry) {
                save_clip(&clip, &out.join(format!("{}.json", clip.name())), &r.registry)?;
            }
            println!("wrote {count} clips to {}", out.display());
        }
        Command::Sample { clips, work } => {
            let clips = load_clip_dir(&clips, &r.registry)?;
            for sub in ["clips", "samples"] {
                mkdir(&work.join(sub))?;
            }
            let mut total = 0;
            for clip in &clips {
                save_clip(
                    clip,
                    &work.join("clips").join(format!("{}.json", clip.name())),
                    &r.registry,
                )?;
                let seq = sample_clip(clip, r.cfg.timestep, &r.registry)?;
                total += seq.samples.len();
                write_json(&work.join("samples").join(format!("{}.json", clip.name())), &seq)?;
            }
            let mut stage = read_stage(&work)?;
            stage.timestep = Some(r.cfg.timestep);
            write_stage(&work, &stage)?;
            println!("sampled {} clips into {total} samples", clips.len());
        }
        Command::Render {
            work,
            values,
            neutral,
            out,
        } => {
            let renderer = r.renderer()?;
            if let Some(work) = work {
                mkdir(&work.join("frames"))?;
                let mut total = 0;
                for seq in staged_samples(&work)? {
                    let frames = renderer.render_batch(&seq)?;
                    for (k, f) in frames.iter().enumerate() {
                        f.save_png(&frame_path(&work, &seq.clip_name, k))?;
                    }
                    total += frames.len();
                }
                let mut stage = read_stage(&work)?;
                stage.resolution = Some(r.cfg.resolution);
                stage.geometry_version = Some(r.geometry.version.clone());
                write_stage(&work, &stage)?;
                println!("rendered {total} frames");
            } else {
                let out = out.ok_or_else(|| usage("--out is required"))?;
                let v = match values {
                    Some(text) => {
                        let xs: Vec<f64> = serde_json::from_str(&text)
                            .map_err(|e| usage(format!("--values must be a JSON array: {e}")))?;
                        ControlVector::from_slice(&xs)?
                    }
                    None if neutral => r.registry.neutral_vector(),
                    None => return Err(usage("pass --work, --values or --neutral")),
                };
                renderer.render(&v)?.save_png(&out)?;
                println!("wrote {}", out.display());
            }
        }
        Command::Dedup { work } => {
            mkdir(&work.join("dedup"))?;
            let params = r.cfg.ssim_params();
            let seqs = staged_samples(&work)?;
            let reports = r.exec.map(&seqs, |seq| -> facectl::Result<_> {
                let mut d = Deduper::new(r.cfg.theta, params)?;
                for k in 0..seq.samples.len() {
                    d.push(&Frame::load_png(&frame_path(&work, &seq.clip_name, k))?)?;
                }
                Ok(d.finish())
            });
            let (mut kept, mut total) = (0, 0);
            for (seq, report) in seqs.iter().zip(reports) {
                let report = report?;
                kept += report.kept_indices.len();
                total += seq.samples.len();
                write_json(&work.join("dedup").join(format!("{}.json", seq.clip_name)), &report)?;
            }
            let mut stage = read_stage(&work)?;
            stage.theta = Some(r.cfg.theta);
            stage.window = Some(r.cfg.window);
            write_stage(&work, &stage)?;
            println!("kept {kept} of {total} frames");
        }
        Command::Build {
            clips,
            synthetic,
            from_work,
            root,
        } => {
            let root = r.root(&root)?;
            let m = if let Some(work) = from_work {
                build_from_work(&r, &work, &root)?
            } else {
                let clips = match (clips, synthetic) {
                    (Some(dir), None) => load_clip_dir(&dir, &r.registry)?,
                    (None, Some(n)) => make_synthetic_clips(n, r.cfg.seed, &r.registry),
                    _ => return Err(usage("pass one of --clips, --synthetic or --from-work")),
                };
                dataset::build(&clips, &r.cfg, &r.geometry, &r.registry, &root, r.exec)?
            };
            let c = &m.counts;
            println!(
                "{} records ({} train, {} test) from {} clips; {} of {} sampled frames removed as near-duplicates",
                c.records, c.train, c.test, c.clips, c.removed, c.sampled
            );
        }
        Command::Stats { root, format, out } => {
            let m = DatasetManifest::load(&r.root(&root)?)?;
            let stats = dataset::stats(&m)?;
            let mut buf = Vec::new();
            if format == "json" {
                buf = serde_json::to_vec_pretty(&stats).expect("stats serialize");
                buf.push(b'\n');
            } else {
                dataset::write_stats_csv(&stats, &mut buf)?;
            }
            emit(out.as_deref(), &buf)?;
        }
        Command::Hist {
            root,
            bins,
            format,
            out,
        } => {
            let m = DatasetManifest::load(&r.root(&root)?)?;
            let hists = dataset::histograms(&m, bins)?;
            let mut buf = Vec::new();
            if format == "json" {
                buf = serde_json::to_vec_pretty(&hists).expect("histograms serialize");
                buf.push(b'\n');
            } else {
                dataset::write_histograms_csv(&hists, &mut buf)?;
            }
            emit(out.as_deref(), &buf)?;
        }
        Command::Plot { root, bins, out } => {
            let root = r.root(&root)?;
            let m = DatasetManifest::load(&root)?;
            let title = format!("Control value distributions ({} records)", m.records.len());
            let svg = plot::distribution_svg(&title, &dataset::stats(&m)?, &dataset::histograms(&m, bins)?)?;
            fs::write(&out, svg).map_err(|e| io_err(&out, e))?;
            println!("wrote {}", out.display());
        }
        Command::Eval {
            root,
            predictors,
            csv,
            json,
        } => {
            let root = r.root(&root)?;
            let m = DatasetManifest::load(&root)?;
            let test = eval::load_cases(&root, &m, Split::Test, r.exec)?;
            let mut owned: Vec<Box<dyn Predictor>> = Vec::new();
            let mut train = None;
            for spec in &predictors {
                let p: Box<dyn Predictor> = match spec.as_str() {
                    "rc" => Box::new(RandomControls::new(m.registry.clone(), r.cfg.seed)),
                    "rt" => Box::new(RandomTraining::new(
                        m.split(Split::Train).iter().map(|rec| rec.values).collect(),
                        r.cfg.seed,
                    )?),
                    "nn" => {
                        if train.is_none() {
                            train = Some(eval::load_cases(&root, &m, Split::Train, r.exec)?);
                        }
                        Box::new(NearestNeighbor::new(train.clone().unwrap_or_default())?)
                    }
                    "perfect" => Box::new(LookupPredictor::perfect(&test)),
                    other => match other.strip_prefix("file:") {
                        Some(path) => {
                            let path = Path::new(path);
                            let name = path
                                .file_stem()
                                .map_or("file".into(), |s| s.to_string_lossy().into_owned());
                            let p = LookupPredictor::from_jsonl(name, path)?;
                            p.check_coverage(&test)?;
                            Box::new(p)
                        }
                        None => return Err(usage(format!("unknown predictor `{other}`"))),
                    },
                };
                owned.push(p);
            }
            let refs: Vec<&dyn Predictor> = owned.iter().map(|b| b.as_ref()).collect();
            let reports = eval::compare(&refs, &test, &m.registry, r.exec)?;
            print!("{}", eval::format_table(&reports));
            if let Some(path) = csv {
                let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                eval::write_reports_csv(&reports, f)?;
            }
            if let Some(path) = json {
                write_json(&path, &reports)?;
            }
        }
        Command::Verify { root, report } => {
            let rep = dataset::verify(&r.root(&root)?, r.exec)?;
            if let Some(path) = report {
                write_json(&path, &rep)?;
            }
            println!("records checked: {}", rep.records);
            println!("alignment violations: {}", rep.violations());
            if !rep.is_clean() {
                for (what, ids) in [
                    ("vector mismatch", &rep.vector_mismatches),
                    ("timestamp mismatch", &rep.timestamp_mismatches),
                    ("image mismatch", &rep.image_mismatches),
                    ("unreadable image", &rep.unreadable_images),
                    ("illegal vector", &rep.illegal_vectors),
                    ("duplicate id", &rep.duplicate_ids),
                    ("missing clip", &rep.missing_clips),
                    ("split", &rep.split_problems),
                ] {
                    for id in ids.iter().take(20) {
                        println!("  {what}: {id}");
                    }
                }
                return Err(CliError {
                    kind: "verify",
                    message: format!("{} alignment violations", rep.violations()),
                });
            }
        }
    }
    Ok(())
}

fn build_from_work(r: &Resolved, work: &Path, root: &Path) -> CliResult<DatasetManifest> {
    let stage = read_stage(work)?;
    mismatch("timestep", stage.timestep, r.cfg.timestep)?;
    mismatch("resolution", stage.resolution, r.cfg.resolution)?;
    mismatch(
        "geometry version",
        stage.geometry_version,
        r.cfg.geometry_version.clone(),
    )?;
    mismatch("theta", stage.theta, r.cfg.theta)?;
    mismatch("window", stage.window, r.cfg.window)?;

    let seqs = staged_samples(work)?;
    let mut clips = Vec::with_capacity(seqs.len());
    let mut outputs = Vec::with_capacity(seqs.len());
    for seq in &seqs {
        clips.push(load_clip(
            &work.join("clips").join(format!("{}.json", seq.clip_name)),
            &r.registry,
        )?);
        let report = read_json(&work.join("dedup").join(format!("{}.json", seq.clip_name)))?;
        outputs.push(ClipOutput::from_stages(seq, report)?);
    }
    dataset::prepare_root(root)?;
    for out in &outputs {
        for &(k, _, _) in &out.kept {
            let from = frame_path(work, &out.clip, k);
            let to = root
                .join(dataset::IMAGES_DIR)
                .join(format!("{}.png", dataset::record_id(&out.clip, k)));
            fs::copy(&from, &to).map_err(|e| io_err(&from, e))?;
        }
    }
    Ok(dataset::write_dataset(
        root,
        &clips,
        &outputs,
        &r.cfg,
        &r.geometry,
        &r.registry,
    )?)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| io_err(path, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", e.render());
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind, e.message);
            ExitCode::FAILURE
        }
    }
}
