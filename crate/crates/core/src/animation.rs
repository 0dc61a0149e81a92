//! Multi-channel animation clips, their JSON file format, and fixed-step
//! sampling into (timestamp, control vector) sequences.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control_space::{ControlRegistry, ControlVector, NUM_CONTROLS};
use crate::curve::{Interp, Keyframe, Point, Track};
use crate::error::{Error, Result};

pub const DEFAULT_TIMESTEP: f64 = 0.02;
pub const MIN_TYPICAL_DURATION: f64 = 1.0;
pub const MAX_TYPICAL_DURATION: f64 = 15.0;

// Absorbs representation error in duration / timestep (0.3 / 0.1 < 3).
const COUNT_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct AnimationClip {
    name: String,
    duration: f64,
    tracks: Vec<Track>,
    metadata: BTreeMap<String, String>,
}

impl AnimationClip {
    pub fn new(
        name: impl Into<String>,
        duration: f64,
        mut tracks: Vec<Track>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Structure("clip name is empty".into()));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Structure(format!(
                "clip `{name}` has invalid duration {duration}"
            )));
        }
        if !(MIN_TYPICAL_DURATION..=MAX_TYPICAL_DURATION).contains(&duration) {
            log::warn!("clip `{name}` duration {duration}s outside the usual 1-15 s");
        }
        let mut seen = HashSet::new();
        for tr in &tracks {
            if tr.channel() >= NUM_CONTROLS {
                return Err(Error::Structure(format!("track channel {} out of range", tr.channel())));
            }
            if !seen.insert(tr.channel()) {
                return Err(Error::Structure(format!(
                    "clip `{name}` has two tracks for channel {}",
                    tr.channel()
                )));
            }
            if tr.end_time() > duration {
                return Err(Error::Structure(format!(
                    "clip `{name}` channel {} has a key at {} past duration {duration}",
                    tr.channel(),
                    tr.end_time()
                )));
            }
        }
        tracks.sort_by_key(Track::channel);
        Ok(AnimationClip {
            name,
            duration,
            tracks,
            metadata,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn track(&self, channel: usize) -> Option<&Track> {
        self.tracks.iter().find(|t| t.channel() == channel)
    }

    /// Raw (unclamped) channel values at `t`; untracked channels hold neutral.
    pub fn eval_raw(&self, t: f64, registry: &ControlRegistry) -> ControlVector {
        let mut v = registry.neutral_vector();
        for tr in &self.tracks {
            v.set(tr.channel(), tr.eval(t));
        }
        v
    }

    /// Clamped control vector at `t`, plus the number of entries clamped.
    pub fn sample_at(&self, t: f64, registry: &ControlRegistry) -> (ControlVector, usize) {
        registry.clamp_counting(&self.eval_raw(t, registry))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub vector: ControlVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSequence {
    pub clip_name: String,
    pub timestep: f64,
    pub samples: Vec<Sample>,
    /// Channel values that had to be clamped into range while sampling.
    pub clamped: usize,
}

/// `floor(duration / step) + 1`.
pub fn sample_count(duration: f64, step: f64) -> usize {
    (duration / step + COUNT_SLACK).floor() as usize + 1
}

/// The timestamp of sample `k`. Every stage derives timestamps from here.
#[inline]
pub fn timestamp(k: usize, step: f64) -> f64 {
    k as f64 * step
}

pub fn sample_clip(clip: &AnimationClip, step: f64, registry: &ControlRegistry) -> Result<SampledSequence> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Parameter(format!("timestep must be positive, got {step}")));
    }
    let n = sample_count(clip.duration, step);
    let mut clamped = 0;
    let samples = (0..n)
        .map(|k| {
            let t = timestamp(k, step);
            let (vector, moved) = clip.sample_at(t, registry);
            clamped += moved;
            Sample { t, vector }
        })
        .collect();
    if clamped > 0 {
        log::info!("clip `{}`: {clamped} sampled values clamped into range", clip.name);
    }
    Ok(SampledSequence {
        clip_name: clip.name.clone(),
        timestep: step,
        samples,
        clamped,
    })
}

// ---- file format ----------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipFile {
    name: String,
    duration_s: f64,
    tracks: Vec<TrackFile>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackFile {
    channel: String,
    keys: Vec<KeyFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    t: f64,
    v: f64,
    mode: Interp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_handle: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_handle: Option<[f64; 2]>,
}

impl AnimationClip {
    pub fn from_json(text: &str, registry: &ControlRegistry) -> Result<Self> {
        let file: ClipFile = serde_json::from_str(text).map_err(|e| Error::parse("$", e.to_string()))?;
        let mut tracks = Vec::with_capacity(file.tracks.len());
        for (ti, tf) in file.tracks.into_iter().enumerate() {
            let at = format!("$.tracks[{ti}]");
            let channel = registry
                .index_of(&tf.channel)
                .ok_or_else(|| Error::parse(format!("{at}.channel"), format!("unknown channel `{}`", tf.channel)))?;
            let keys = tf
                .keys
                .into_iter()
                .map(|k| Keyframe {
                    time: k.t,
                    value: k.v,
                    mode: k.mode,
                    out_handle: k.out_handle.map(|[t, v]| Point::new(t, v)),
                    in_handle: k.in_handle.map(|[t, v]| Point::new(t, v)),
                })
                .collect();
            let (track, _) =
                Track::new(channel, keys).map_err(|e| Error::parse(format!("{at}.keys"), e.to_string()))?;
            tracks.push(track);
        }
        AnimationClip::new(file.name, file.duration_s, tracks, file.metadata)
            .map_err(|e| Error::parse("$", e.to_string()))
    }

    pub fn to_json(&self, registry: &ControlRegistry) -> String {
        let file = ClipFile {
            name: self.name.clone(),
            duration_s: self.duration,
            tracks: self
                .tracks
                .iter()
                .map(|tr| TrackFile {
                    channel: registry.channel(tr.channel()).name.clone(),
                    keys: tr
                        .keys()
                        .iter()
                        .map(|k| KeyFile {
                            t: k.time,
                            v: k.value,
                            mode: k.mode,
                            out_handle: k.out_handle.map(|p| [p.t, p.v]),
                            in_handle: k.in_handle.map(|p| [p.t, p.v]),
                        })
                        .collect(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_string_pretty(&file).expect("clip serializes")
    }
}

pub fn load_clip(path: &Path, registry: &ControlRegistry) -> Result<AnimationClip> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AnimationClip::from_json(&text, registry).map_err(|e| match e {
        Error::Parse { path: at, message } => Error::Parse {
            path: format!("{}:{at}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_clip(clip: &AnimationClip, path: &Path, registry: &ControlRegistry) -> Result<()> {
    std::fs::write(path, clip.to_json(registry)).map_err(|e| Error::io(path, e))
}

/// Loads every `*.json` clip in `dir`, sorted by clip name.
pub fn load_clip_dir(dir: &Path, registry: &ControlRegistry) -> Result<Vec<AnimationClip>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut clips = paths
        .iter()
        .map(|p| load_clip(p, registry))
        .collect::<Result<Vec<_>>>()?;
    clips.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(clips)
}

// ---- synthetic clips ------------------------------------------------------

const TRACK_PROBABILITY: f64 = 0.8;
const EXTREME_PROBABILITY: f64 = 0.2;

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

/// Seeded stand-in for hand-authored animations: 1-15 s clips whose
/// tracks carry 2-8 keys with random modes, values sweeping each
/// channel's full range (endpoints included) independently per side.
pub fn make_synthetic_clips(n: usize, seed: u64, registry: &ControlRegistry) -> Vec<AnimationClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| synthetic_clip(&mut rng, i, seed, registry)).collect()
}

fn synthetic_clip(rng: &mut ChaCha8Rng, index: usize, seed: u64, registry: &ControlRegistry) -> AnimationClip {
    let duration = round_to(rng.gen_range(MIN_TYPICAL_DURATION..=MAX_TYPICAL_DURATION), 0.01)
        .clamp(MIN_TYPICAL_DURATION, MAX_TYPICAL_DURATION);
    let mut tracks = Vec::new();
    for channel in 0..NUM_CONTROLS {
        if !rng.gen_bool(TRACK_PROBABILITY) {
            continue;
        }
        let ch = registry.channel(channel);
        let n_keys = rng.gen_range(2..=8usize);
        let mut times: Vec<f64> = (0..n_keys)
            .map(|j| match j {
                0 => 0.0,
                _ => round_to(rng.gen_range(0.0..=duration), 0.01).min(duration),
            })
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        if times.len() < 2 {
            times.push(duration);
        }

        let draw_value = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(EXTREME_PROBABILITY) {
                if rng.gen_bool(0.5) {
                    ch.min
                } else {
                    ch.max
                }
            } else {
                round_to(rng.gen_range(ch.min..=ch.max), 0.001).clamp(ch.min, ch.max)
            }
        };
        let values: Vec<f64> = times.iter().map(|_| draw_value(rng)).collect();
        let mut keys = Vec::with_capacity(times.len());
        for j in 0..times.len() {
            let mode = match rng.gen_range(0..10) {
                0..=4 => Interp::CubicBezier,
                5..=7 => Interp::Linear,
                _ => Interp::Step,
            };
            let mut key = Keyframe::new(times[j], values[j], mode);
            if mode == Interp::CubicBezier {
                if let Some(&next_t) = times.get(j + 1) {
                    let (t0, v0, v1) = (times[j], values[j], values[j + 1]);
                    let dt = next_t - t0;
                    let dv = v1 - v0;
                    key.out_handle = Some(Point::new(
                        t0 + rng.gen_range(0.05..=0.6) * dt,
                        v0 + rng.gen_range(-0.2..=0.6) * dv,
                    ));
                    key.in_handle = Some(Point::new(
                        next_t - rng.gen_range(0.05..=0.6) * dt,
                        v1 - rng.gen_range(-0.2..=0.6) * dv,
                    ));
                } else {
                    key.mode = Interp::Linear;
                }
            }
            keys.push(key);
        }
        let (track, _) = Track::new(channel, keys).expect("generated keys are sorted and complete");
        tracks.push(track);
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("author".to_string(), "synthetic".to_string());
    metadata.insert("seed".to_string(), seed.to_string());
    AnimationClip::new(format!("synth_{index:04}"), duration, tracks, metadata)
        .expect("generated clip satisfies invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_space::idx;

    fn reg() -> ControlRegistry {
        ControlRegistry::standard()
    }

    #[test]
    fn count_law() {
        assert_eq!(sample_count(2.0, 0.02), 101);
        assert_eq!(sample_count(0.3, 0.1), 4);
        assert_eq!(sample_count(1.0, 0.3), 4);
        assert_eq!(sample_count(2.01, 0.02), 101);
        let clip = AnimationClip::new("c", 2.0, vec![], BTreeMap::new()).unwrap();
        let seq = sample_clip(&clip, 0.02, &reg()).unwrap();
        assert_eq!(seq.samples.len(), 101);
        assert_eq!(seq.samples[0].t, 0.0);
        assert!((seq.samples[100].t - 2.0).abs() < 1e-12);
        for s in &seq.samples {
            assert_eq!(s.vector, reg().neutral_vector());
        }
    }

    #[test]
    fn step_hold_channel() {
        let (tr, _) = Track::new(idx::BIL, vec![Keyframe::new(0.0, 0.7, Interp::Step)]).unwrap();
        let clip = AnimationClip::new("c", 1.5, vec![tr], BTreeMap::new()).unwrap();
        let seq = sample_clip(&clip, 0.02, &reg()).unwrap();
        assert!(seq.samples.iter().all(|s| s.vector[idx::BIL] == 0.7));
    }

    #[test]
    fn clip_invariants() {
        let (a, _) = Track::new(0, vec![Keyframe::new(0.0, 0.7, Interp::Step)]).unwrap();
        let b = a.clone();
        assert!(AnimationClip::new("c", 2.0, vec![a.clone(), b], BTreeMap::new()).is_err());
        let (late, _) = Track::new(1, vec![Keyframe::new(3.0, 0.7, Interp::Step)]).unwrap();
        assert!(AnimationClip::new("c", 2.0, vec![late], BTreeMap::new()).is_err());
        assert!(AnimationClip::new("c", 0.0, vec![], BTreeMap::new()).is_err());
        // outside the usual regime only warns
        assert!(AnimationClip::new("c", 20.0, vec![a], BTreeMap::new()).is_ok());
        let clip = AnimationClip::new("c", 2.0, vec![], BTreeMap::new()).unwrap();
        assert!(matches!(sample_clip(&clip, 0.0, &reg()), Err(Error::Parameter(_))));
    }

    #[test]
    fn parse_errors_name_the_location() {
        let r = reg();
        let missing = r#"{"name":"x","duration_s":2.0,"tracks":[{"channel":"Jaw Pitch","keys":[
            {"t":0.0,"v":0.1,"mode":"cubic_bezier"},{"t":1.0,"v":0.5,"mode":"linear"}]}]}"#;
        let err = AnimationClip::from_json(missing, &r).unwrap_err();
        assert!(
            matches!(&err, Error::Parse { path, .. } if path == "$.tracks[0].keys"),
            "{err}"
        );

        let dup = r#"{"name":"x","duration_s":2.0,"tracks":[{"channel":"Jaw Pitch","keys":[
            {"t":1.0,"v":0.1,"mode":"linear"},{"t":1.0,"v":0.5,"mode":"linear"}]}]}"#;
        assert!(matches!(AnimationClip::from_json(dup, &r), Err(Error::Parse { .. })));

        let unknown = r#"{"name":"x","duration_s":2.0,"tracks":[{"channel":"Ear Wiggle","keys":[
            {"t":0.0,"v":0.1,"mode":"linear"}]}]}"#;
        let err = AnimationClip::from_json(unknown, &r).unwrap_err();
        assert!(matches!(&err, Error::Parse { path, .. } if path == "$.tracks[0].channel"));

        let bad_mode = r#"{"name":"x","duration_s":2.0,"tracks":[{"channel":"Jaw Pitch","keys":[
            {"t":0.0,"v":0.1,"mode":"ease_in"}]}]}"#;
        assert!(matches!(
            AnimationClip::from_json(bad_mode, &r),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let r = reg();
        for clip in make_synthetic_clips(5, 3, &r) {
            let back = AnimationClip::from_json(&clip.to_json(&r), &r).unwrap();
            assert_eq!(back, clip);
        }
    }

    #[test]
    fn synthetic_clips_are_deterministic_and_in_regime() {
        let r = reg();
        let a = make_synthetic_clips(20, 11, &r);
        let b = make_synthetic_clips(20, 11, &r);
        assert_eq!(a, b);
        for c in &a {
            assert!((1.0..=15.0).contains(&c.duration()));
            for tr in c.tracks() {
                assert!((2..=8).contains(&tr.keys().len()));
            }
        }
        assert_ne!(a, make_synthetic_clips(20, 12, &r));
    }
}
