//! Dataset assembly: sample → render → dedup per clip, seeded train/test
//! split, JSONL manifest, alignment audit, and per-channel statistics.
//!
//! On-disk layout under a dataset root:
//!
//! ```text
//! manifest.jsonl   one Record per line, ordered by (clip, timestamp)
//! dataset.json     schema version, resolved build config, counts
//! registry.json    the control registry snapshot
//! geometry.json    renderer geometry used for every image
//! clips/*.json     the source clips (re-sampled by `verify`)
//! dedup/*.json     per-clip DedupReport
//! images/*.png     8-bit grayscale frames
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::animation::{load_clip, sample_clip, save_clip, timestamp, AnimationClip, DEFAULT_TIMESTEP};
use crate::control_space::{ControlRegistry, ControlVector, NUM_CONTROLS};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::render::{FaceGeometry, Frame, Renderer, DEFAULT_RESOLUTION};
use crate::similarity::{DedupReport, Deduper, SsimParams, Window, DEFAULT_THRESHOLD};

pub const MANIFEST_SCHEMA: &str = "facectl.dataset/1";
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.8;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DATASET_FILE: &str = "dataset.json";
pub const REGISTRY_FILE: &str = "registry.json";
pub const GEOMETRY_FILE: &str = "geometry.json";
pub const CLIPS_DIR: &str = "clips";
pub const IMAGES_DIR: &str = "images";
pub const DEDUP_DIR: &str = "dedup";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLevel {
    /// Shuffle individual records.
    #[default]
    Record,
    /// Keep every record of a clip on the same side (no near-frame leakage).
    Clip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub timestep: f64,
    pub theta: f64,
    pub window: Window,
    pub split_fraction: f64,
    pub split_level: SplitLevel,
    pub seed: u64,
    pub resolution: u32,
    pub geometry_version: String,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            timestep: DEFAULT_TIMESTEP,
            theta: DEFAULT_THRESHOLD,
            window: Window::default(),
            split_fraction: DEFAULT_SPLIT_FRACTION,
            split_level: SplitLevel::Record,
            seed: 0,
            resolution: DEFAULT_RESOLUTION,
            geometry_version: crate::render::GEOMETRY_VERSION.to_string(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timestep.is_finite() && self.timestep > 0.0) {
            return Err(Error::Parameter(format!("timestep {} must be positive", self.timestep)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Parameter(format!("theta {} outside (0, 1]", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.split_fraction) {
            return Err(Error::Parameter(format!(
                "split fraction {} outside [0, 1]",
                self.split_fraction
            )));
        }
        Ok(())
    }

    pub fn ssim_params(&self) -> SsimParams {
        SsimParams::with_window(self.window)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    /// Path relative to the dataset root.
    pub image: String,
    pub clip: String,
    pub t: f64,
    pub split: Split,
    pub values: ControlVector,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildCounts {
    pub clips: usize,
    pub sampled: usize,
    pub removed: usize,
    pub records: usize,
    pub train: usize,
    pub test: usize,
    pub clamped_values: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DatasetHeader {
    schema: String,
    build_config: BuildConfig,
    counts: BuildCounts,
}

/// A dataset index held in memory.
#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
    pub registry: ControlRegistry,
    pub config: BuildConfig,
    pub geometry: FaceGeometry,
    pub counts: BuildCounts,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> Vec<&Record> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn load(root: &Path) -> Result<Self> {
        let header_path = root.join(DATASET_FILE);
        let header: DatasetHeader = read_json(&header_path)?;
        if header.schema != MANIFEST_SCHEMA {
            return Err(Error::parse(
                header_path.display().to_string(),
                format!("unsupported schema `{}`", header.schema),
            ));
        }
        let registry_path = root.join(REGISTRY_FILE);
        let registry_text = fs::read_to_string(&registry_path).map_err(|e| Error::io(&registry_path, e))?;
        let registry = ControlRegistry::from_json(&registry_text)?;
        let geometry = FaceGeometry::load(&root.join(GEOMETRY_FILE))?;
        let records = read_manifest(&root.join(MANIFEST_FILE))?;
        Ok(DatasetManifest {
            records,
            registry,
            config: header.build_config,
            geometry,
            counts: header.counts,
        })
    }

    pub fn load_frame(&self, root: &Path, record: &Record) -> Result<Frame> {
        let mut f = Frame::load_png(&root.join(&record.image))?;
        f.source_timestamp = record.t;
        Ok(f)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<Record>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), n + 1), e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[Record]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---- build ----------------------------------------------------------------

pub fn record_id(clip: &str, sample_index: usize) -> String {
    format!("{clip}_{sample_index:05}")
}

fn image_rel_path(id: &str) -> String {
    format!("{IMAGES_DIR}/{id}.png")
}

/// Output of one clip's sample → render → dedup pass.
#[derive(Clone, Debug)]
pub struct ClipOutput {
    pub clip: String,
    /// `(sample index, timestamp, vector)` for every kept frame.
    pub kept: Vec<(usize, f64, ControlVector)>,
    /// Kept frames when building in memory; empty for disk builds.
    pub frames: Vec<Frame>,
    pub report: DedupReport,
    pub sampled: usize,
    pub clamped: usize,
}

fn process_clip(
    clip: &AnimationClip,
    cfg: &BuildConfig,
    renderer: &Renderer,
    image_dir: Option<&Path>,
) -> Result<ClipOutput> {
    let seq = sample_clip(clip, cfg.timestep, renderer.registry())?;
    let mut dedup = Deduper::new(cfg.theta, cfg.ssim_params())?;
    let mut kept = Vec::new();
    let mut frames = Vec::new();
    for (k, s) in seq.samples.iter().enumerate() {
        // one clock: the sample's timestamp stamps both the frame and the record
        let frame = renderer.render_at(&s.vector, s.t)?;
        if dedup.push(&frame)? {
            kept.push((k, s.t, s.vector));
            match image_dir {
                Some(dir) => {
                    let id = record_id(clip.name(), k);
                    frame.save_png(&dir.join(format!("{id}.png")))?;
                }
                None => frames.push(frame),
            }
        }
    }
    Ok(ClipOutput {
        clip: clip.name().to_string(),
        kept,
        frames,
        report: dedup.finish(),
        sampled: seq.samples.len(),
        clamped: seq.clamped,
    })
}

fn check_unique_names(clips: &[AnimationClip]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in clips {
        if !seen.insert(c.name()) {
            return Err(Error::DuplicateId(c.name().to_string()));
        }
    }
    Ok(())
}

/// Runs every clip through the pipeline, ordered by clip name.
pub fn process_clips(
    clips: &[AnimationClip],
    cfg: &BuildConfig,
    geometry: &FaceGeometry,
    registry: &ControlRegistry,
    exec: Exec,
    image_dir: Option<&Path>,
) -> Result<Vec<ClipOutput>> {
    cfg.validate()?;
    check_unique_names(clips)?;
    let mut ordered: Vec<&AnimationClip> = clips.iter().collect();
    ordered.sort_by(|a, b| a.name().cmp(b.name()));
    let renderer = Renderer::new(geometry.clone(), registry.clone(), cfg.resolution)?.with_exec(Exec::Sequential);
    exec.map(&ordered, |c| process_clip(c, cfg, &renderer, image_dir))
        .into_iter()
        .collect()
}

/// Seeded split assignment over `records` (already in canonical order).
pub fn assign_splits(records: &mut [Record], fraction: f64, level: SplitLevel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_train = (fraction * records.len() as f64).round() as usize;
    match level {
        SplitLevel::Record => {
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.shuffle(&mut rng);
            for (rank, &i) in order.iter().enumerate() {
                records[i].split = if rank < n_train { Split::Train } else { Split::Test };
            }
        }
        SplitLevel::Clip => {
            let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
            for r in records.iter() {
                *sizes.entry(r.clip.as_str()).or_default() += 1;
            }
            let mut names: Vec<(String, usize)> = sizes.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            names.shuffle(&mut rng);
            let mut train = HashSet::new();
            let mut taken = 0;
            for (name, size) in names {
                if taken >= n_train {
                    break;
                }
                taken += size;
                train.insert(name);
            }
            for r in records.iter_mut() {
                r.split = if train.contains(&r.clip) {
                    Split::Train
                } else {
                    Split::Test
                };
            }
        }
    }
}

fn assemble(outputs: &[ClipOutput], cfg: &BuildConfig) -> (Vec<Record>, BuildCounts) {
    let mut records = Vec::new();
    let mut counts = BuildCounts {
        clips: outputs.len(),
        ..Default::default()
    };
    for out in outputs {
        counts.sampled += out.sampled;
        counts.removed += out.report.removed_indices.len();
        counts.clamped_values += out.clamped;
        for &(k, t, values) in &out.kept {
            let id = record_id(&out.clip, k);
            records.push(Record {
                image: image_rel_path(&id),
                id,
                clip: out.clip.clone(),
                t,
                split: Split::Train,
                values,
            });
        }
    }
    assign_splits(&mut records, cfg.split_fraction, cfg.split_level, cfg.seed);
    counts.records = records.len();
    counts.train = records.iter().filter(|r| r.split == Split::Train).count();
    counts.test = counts.records - counts.train;
    (records, counts)
}

/// Records and kept frames of a build that never touches the disk.
#[derive(Clone, Debug)]
pub struct InMemoryDataset {
    pub records: Vec<Record>,
    pub frames: Vec<Frame>,
    pub counts: BuildCounts,
}

pub fn build_in_memory(
    clips: &[AnimationClip],
    cfg: &BuildConfig,
    geometry: &FaceGeometry,
    registry: &ControlRegistry,
    exec: Exec,
) -> Result<InMemoryDataset> {
    let outputs = process_clips(clips, cfg, geometry, registry, exec, None)?;
    let (records, counts) = assemble(&outputs, cfg);
    let frames = outputs.into_iter().flat_map(|o| o.frames).collect();
    Ok(InMemoryDataset {
        records,
        frames,
        counts,
    })
}

/// Creates `root` (or clears the generated parts of an existing dataset
/// root). Refuses non-empty directories that are not dataset roots.
pub fn prepare_root(root: &Path) -> Result<()> {
    if root.exists() {
        let non_empty = fs::read_dir(root).map_err(|e| Error::io(root, e))?.next().is_some();
        if non_empty && !root.join(DATASET_FILE).exists() {
            return Err(Error::Structure(format!(
                "{} is not empty and is not a dataset root",
                root.display()
            )));
        }
        for sub in [IMAGES_DIR, CLIPS_DIR, DEDUP_DIR] {
            let p = root.join(sub);
            if p.exists() {
                fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    for sub in [IMAGES_DIR, CLIPS_DIR, DEDUP_DIR] {
        let p = root.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_geometry(cfg: &BuildConfig, geometry: &FaceGeometry) -> Result<()> {
    if geometry.version != cfg.geometry_version {
        return Err(Error::Parameter(format!(
            "geometry version `{}` does not match config `{}`",
            geometry.version, cfg.geometry_version
        )));
    }
    Ok(())
}

impl ClipOutput {
    /// Reassembles a clip's output from separately run sample and dedup
    /// stages.
    pub fn from_stages(seq: &crate::animation::SampledSequence, report: DedupReport) -> Result<Self> {
        let kept = report
            .kept_indices
            .iter()
            .map(|&k| {
                seq.samples.get(k).map(|s| (k, s.t, s.vector)).ok_or_else(|| {
                    Error::Contract(format!(
                        "dedup keeps sample {k} of `{}` which has {} samples",
                        seq.clip_name,
                        seq.samples.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if report.kept_indices.len() + report.removed_indices.len() != seq.samples.len() {
            return Err(Error::Contract(format!(
                "dedup report for `{}` does not cover its samples",
                seq.clip_name
            )));
        }
        Ok(ClipOutput {
            clip: seq.clip_name.clone(),
            kept,
            frames: Vec::new(),
            report,
            sampled: seq.samples.len(),
            clamped: seq.clamped,
        })
    }
}

/// Writes everything except the images: manifest, header, registry,
/// geometry, clips and dedup reports. `outputs` must be ordered by clip
/// name and `root` prepared with [`prepare_root`].
pub fn write_dataset(
    root: &Path,
    clips: &[AnimationClip],
    outputs: &[ClipOutput],
    cfg: &BuildConfig,
    geometry: &FaceGeometry,
    registry: &ControlRegistry,
) -> Result<DatasetManifest> {
    check_geometry(cfg, geometry)?;
    let (records, counts) = assemble(outputs, cfg);
    for clip in clips {
        save_clip(
            clip,
            &root.join(CLIPS_DIR).join(format!("{}.json", clip.name())),
            registry,
        )?;
    }
    for out in outputs {
        write_pretty(&root.join(DEDUP_DIR).join(format!("{}.json", out.clip)), &out.report)?;
    }
    write_manifest(&root.join(MANIFEST_FILE), &records)?;
    registry.save(&root.join(REGISTRY_FILE))?;
    let geo_path = root.join(GEOMETRY_FILE);
    fs::write(&geo_path, geometry.to_json()).map_err(|e| Error::io(&geo_path, e))?;
    write_pretty(
        &root.join(DATASET_FILE),
        &DatasetHeader {
            schema: MANIFEST_SCHEMA.to_string(),
            build_config: cfg.clone(),
            counts: counts.clone(),
        },
    )?;
    if counts.clamped_values > 0 {
        log::warn!(
            "{} sampled channel values were clamped into range",
            counts.clamped_values
        );
    }
    log::info!(
        "built {} records from {} clips ({} sampled, {} removed as near-duplicates)",
        counts.records,
        counts.clips,
        counts.sampled,
        counts.removed
    );
    Ok(DatasetManifest {
        records,
        registry: registry.clone(),
        config: cfg.clone(),
        geometry: geometry.clone(),
        counts,
    })
}

/// Builds a dataset under `root` and returns its manifest.
pub fn build(
    clips: &[AnimationClip],
    cfg: &BuildConfig,
    geometry: &FaceGeometry,
    registry: &ControlRegistry,
    root: &Path,
    exec: Exec,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    check_unique_names(clips)?;
    check_geometry(cfg, geometry)?;
    prepare_root(root)?;
    let outputs = process_clips(clips, cfg, geometry, registry, exec, Some(&root.join(IMAGES_DIR)))?;
    write_dataset(root, clips, &outputs, cfg, geometry, registry)
}

// ---- verify ---------------------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub records: usize,
    /// Stored vector differs from re-sampling the clip at the stored time.
    pub vector_mismatches: Vec<String>,
    /// Stored timestamp is not exactly `k * timestep`.
    pub timestamp_mismatches: Vec<String>,
    /// Re-rendered image differs from the stored PNG.
    pub image_mismatches: Vec<String>,
    /// Missing/unreadable images or images with the wrong size.
    pub unreadable_images: Vec<String>,
    pub illegal_vectors: Vec<String>,
    pub duplicate_ids: Vec<String>,
    pub missing_clips: Vec<String>,
    pub split_problems: Vec<String>,
}

impl VerifyReport {
    pub fn violations(&self) -> usize {
        self.vector_mismatches.len()
            + self.timestamp_mismatches.len()
            + self.image_mismatches.len()
            + self.unreadable_images.len()
            + self.illegal_vectors.len()
            + self.duplicate_ids.len()
            + self.missing_clips.len()
            + self.split_problems.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }
}

enum RecordCheck {
    Ok,
    Vector,
    Timestamp,
    Image,
    Unreadable,
    Illegal,
    MissingClip,
}

/// Re-derives every record from its clip and re-renders its image.
pub fn verify(root: &Path, exec: Exec) -> Result<VerifyReport> {
    let m = DatasetManifest::load(root)?;
    let cfg = &m.config;
    let mut report = VerifyReport {
        records: m.records.len(),
        ..Default::default()
    };

    let mut seen = HashSet::new();
    for r in &m.records {
        if !seen.insert(r.id.as_str()) {
            report.duplicate_ids.push(r.id.clone());
        }
    }

    let mut clips: HashMap<String, Option<AnimationClip>> = HashMap::new();
    for r in &m.records {
        clips
            .entry(r.clip.clone())
            .or_insert_with(|| load_clip(&root.join(CLIPS_DIR).join(format!("{}.json", r.clip)), &m.registry).ok());
    }

    let renderer = Renderer::new(m.geometry.clone(), m.registry.clone(), cfg.resolution)?.with_exec(Exec::Sequential);
    let checks = exec.map(&m.records, |r| {
        let Some(clip) = clips.get(&r.clip).and_then(Option::as_ref) else {
            return RecordCheck::MissingClip;
        };
        if m.registry.validate(&r.values).is_err() {
            return RecordCheck::Illegal;
        }
        let k = (r.t / cfg.timestep).round() as usize;
        if timestamp(k, cfg.timestep) != r.t {
            return RecordCheck::Timestamp;
        }
        let (resampled, _) = clip.sample_at(r.t, &m.registry);
        if resampled != r.values {
            return RecordCheck::Vector;
        }
        let Ok(stored) = Frame::load_png(&root.join(&r.image)) else {
            return RecordCheck::Unreadable;
        };
        if stored.width != cfg.resolution || stored.height != cfg.resolution {
            return RecordCheck::Unreadable;
        }
        match renderer.render(&r.values) {
            Ok(f) if f.pixels == stored.pixels => RecordCheck::Ok,
            _ => RecordCheck::Image,
        }
    });
    for (r, c) in m.records.iter().zip(checks) {
        let bucket = match c {
            RecordCheck::Ok => continue,
            RecordCheck::Vector => &mut report.vector_mismatches,
            RecordCheck::Timestamp => &mut report.timestamp_mismatches,
            RecordCheck::Image => &mut report.image_mismatches,
            RecordCheck::Unreadable => &mut report.unreadable_images,
            RecordCheck::Illegal => &mut report.illegal_vectors,
            RecordCheck::MissingClip => &mut report.missing_clips,
        };
        bucket.push(r.id.clone());
    }

    if cfg.split_level == SplitLevel::Record {
        let n = m.records.len() as f64;
        let train = m.records.iter().filter(|r| r.split == Split::Train).count() as f64;
        if (train - cfg.split_fraction * n).abs() > 1.0 {
            report.split_problems.push(format!(
                "{train} train records, expected {} of {n}",
                cfg.split_fraction * n
            ));
        }
    }
    Ok(report)
}

// ---- statistics -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub channel: String,
    pub abbrev: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub neutral: f64,
}

/// Per-channel population statistics over `vectors`, in registry order.
pub fn channel_stats<'a, I>(vectors: I, registry: &ControlRegistry) -> Result<Vec<ChannelStats>>
where
    I: IntoIterator<Item = &'a ControlVector>,
{
    let vectors: Vec<&ControlVector> = vectors.into_iter().collect();
    let Some(first) = vectors.first() else {
        return Err(Error::Empty("statistics of an empty dataset".into()));
    };
    let n = vectors.len() as f64;
    Ok((0..NUM_CONTROLS)
        .map(|i| {
            // shift by the first value: constant columns give an exact mean
            let shift = first[i];
            let (mut min, mut max, mut acc) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for v in &vectors {
                min = min.min(v[i]);
                max = max.max(v[i]);
                acc += v[i] - shift;
            }
            let mean = (shift + acc / n).clamp(min, max);
            let var = vectors.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / n;
            let ch = registry.channel(i);
            ChannelStats {
                channel: ch.name.clone(),
                abbrev: ch.abbrev.clone(),
                mean,
                std: var.sqrt(),
                max,
                min,
                neutral: ch.neutral,
            }
        })
        .collect())
}

pub fn stats(m: &DatasetManifest) -> Result<Vec<ChannelStats>> {
    channel_stats(m.records.iter().map(|r| &r.values), &m.registry)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub channel: String,
    pub abbrev: String,
    pub min: f64,
    pub max: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let w = (self.max - self.min) / self.counts.len() as f64;
        (self.min + w * bin as f64, self.min + w * (bin + 1) as f64)
    }
}

/// Equal-width histograms over each channel's legal range.
pub fn channel_histograms<'a, I>(vectors: I, registry: &ControlRegistry, bins: usize) -> Result<Vec<Histogram>>
where
    I: IntoIterator<Item = &'a ControlVector>,
{
    if bins < 2 {
        return Err(Error::Parameter(format!("need at least 2 bins, got {bins}")));
    }
    let mut hists: Vec<Histogram> = registry
        .channels()
        .iter()
        .map(|ch| Histogram {
            channel: ch.name.clone(),
            abbrev: ch.abbrev.clone(),
            min: ch.min,
            max: ch.max,
            counts: vec![0; bins],
        })
        .collect();
    for v in vectors {
        for (i, h) in hists.iter_mut().enumerate() {
            let frac = (v[i] - h.min) / (h.max - h.min);
            let bin = ((frac * bins as f64).floor().max(0.0) as usize).min(bins - 1);
            h.counts[bin] += 1;
        }
    }
    Ok(hists)
}

pub fn histograms(m: &DatasetManifest, bins: usize) -> Result<Vec<Histogram>> {
    channel_histograms(m.records.iter().map(|r| &r.values), &m.registry, bins)
}

pub fn write_stats_csv<W: Write>(stats: &[ChannelStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_histograms_csv<W: Write>(hists: &[Histogram], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["abbrev", "bin", "lo", "hi", "count"])?;
    for h in hists {
        for (b, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(b);
            w.write_record([
                h.abbrev.clone(),
                b.to_string(),
                lo.to_string(),
                hi.to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_space::idx;

    fn fixture() -> (ControlRegistry, Vec<ControlVector>) {
        let r = ControlRegistry::standard();
        let vs = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&jp| {
                let mut v = r.neutral_vector();
                v.set(idx::JP, jp);
                v
            })
            .collect();
        (r, vs)
    }

    #[test]
    fn stats_hand_fixture() {
        let (r, vs) = fixture();
        let s = channel_stats(&vs, &r).unwrap();
        assert_eq!(s.len(), 30);
        let jp = &s[idx::JP];
        assert_eq!((jp.mean, jp.min, jp.max), (0.5, 0.0, 1.0));
        assert_eq!(jp.std, 0.125f64.sqrt());
        for (i, st) in s.iter().enumerate().skip(1) {
            assert_eq!(st.mean, r.channel(i).neutral);
            assert_eq!(st.std, 0.0);
        }
    }

    #[test]
    fn stats_empty_is_error() {
        let r = ControlRegistry::standard();
        assert!(matches!(channel_stats(&[], &r), Err(Error::Empty(_))));
    }

    #[test]
    fn histogram_conservation_and_point_mass() {
        let (r, vs) = fixture();
        let hs = channel_histograms(&vs, &r, 4).unwrap();
        for h in &hs {
            assert_eq!(h.counts.iter().sum::<u64>(), 5);
        }
        assert_eq!(hs[idx::JP].counts, vec![1, 1, 1, 2]);
        assert_eq!(hs[idx::NW].counts.iter().filter(|&&c| c > 0).count(), 1);
        assert!(channel_histograms(&vs, &r, 1).is_err());
    }

    #[test]
    fn split_counts() {
        let mk = |n: usize| -> Vec<Record> {
            (0..n)
                .map(|i| Record {
                    id: format!("r{i:03}"),
                    image: String::new(),
                    clip: format!("c{}", i / 10),
                    t: 0.0,
                    split: Split::Train,
                    values: ControlRegistry::standard().neutral_vector(),
                })
                .collect()
        };
        let mut rs = mk(100);
        assign_splits(&mut rs, 0.8, SplitLevel::Record, 5);
        assert_eq!(rs.iter().filter(|r| r.split == Split::Train).count(), 80);
        let mut again = mk(100);
        assign_splits(&mut again, 0.8, SplitLevel::Record, 5);
        assert_eq!(rs, again);

        let mut by_clip = mk(100);
        assign_splits(&mut by_clip, 0.8, SplitLevel::Clip, 5);
        assert_eq!(by_clip.iter().filter(|r| r.split == Split::Train).count(), 80);
        for c in 0..10 {
            let sides: HashSet<Split> = by_clip
                .iter()
                .filter(|r| r.clip == format!("c{c}"))
                .map(|r| r.split)
                .collect();
            assert_eq!(sides.len(), 1);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = BuildConfig::default();
        assert!(c.validate().is_ok());
        c.theta = 0.0;
        assert!(c.validate().is_err());
        let c = BuildConfig {
            timestep: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
