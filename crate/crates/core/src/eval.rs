//! Predictor scoring (MAE, SD, SEM, 95% CI) and reference predictors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control_space::{ControlRegistry, ControlVector, NUM_CONTROLS};
use crate::dataset::{DatasetManifest, Record, Split};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::render::Frame;

pub const Z_95: f64 = 1.96;

/// One query handed to a predictor. `index` is the position in the test
/// set and is what seeded predictors key their streams on.
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub id: &'a str,
    pub index: usize,
    pub frame: &'a Frame,
}

/// Must be stateless per call (or internally synchronized): the harness
/// may call `predict` from several threads.
pub trait Predictor: Sync {
    fn name(&self) -> &str;
    fn predict(&self, q: &Query<'_>) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug)]
pub struct TestCase {
    pub id: String,
    pub frame: Frame,
    pub truth: ControlVector,
}

impl TestCase {
    pub fn new(id: impl Into<String>, frame: Frame, truth: ControlVector) -> Self {
        TestCase {
            id: id.into(),
            frame,
            truth,
        }
    }
}

/// Loads the frames of every record in `split`, in manifest order.
pub fn load_cases(root: &Path, m: &DatasetManifest, split: Split, exec: Exec) -> Result<Vec<TestCase>> {
    let records: Vec<&Record> = m.split(split);
    exec.map(&records, |r| {
        Ok(TestCase::new(r.id.clone(), m.load_frame(root, r)?, r.values))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub predictor: String,
    /// Number of pooled absolute errors (30 per test record).
    pub n: usize,
    pub mae: f64,
    /// Sample standard deviation (n - 1); 0 when n = 1.
    pub sd: f64,
    pub sem: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

pub fn ci95(mae: f64, sem: f64) -> (f64, f64) {
    (mae - Z_95 * sem, mae + Z_95 * sem)
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

impl EvalReport {
    /// Summary statistics of a pooled error sample. The sample is sorted
    /// first, so the result does not depend on the order errors arrive in.
    pub fn from_errors(predictor: impl Into<String>, errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Empty("no errors to score".into()));
        }
        if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
            return Err(Error::Numeric(format!("non-finite error {bad}")));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mae = pairwise_sum(&sorted) / n as f64;
        let sd = if n > 1 {
            let sq: Vec<f64> = sorted.iter().map(|e| (e - mae) * (e - mae)).collect();
            (pairwise_sum(&sq) / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let sem = sd / (n as f64).sqrt();
        let (lo, hi) = ci95(mae, sem);
        Ok(EvalReport {
            predictor: predictor.into(),
            n,
            mae,
            sd,
            sem,
            ci95_lo: lo,
            ci95_hi: hi,
        })
    }
}

/// Scores `p` on `cases`. Predictions are clamped into the registry
/// ranges before comparison.
pub fn score(p: &dyn Predictor, cases: &[TestCase], registry: &ControlRegistry, exec: Exec) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(Error::Empty("test split is empty".into()));
    }
    let indexed: Vec<(usize, &TestCase)> = cases.iter().enumerate().collect();
    let per_case = exec.map(&indexed, |&(index, c)| -> Result<[f64; NUM_CONTROLS]> {
        let raw = p.predict(&Query {
            id: &c.id,
            index,
            frame: &c.frame,
        })?;
        if raw.len() != NUM_CONTROLS {
            return Err(Error::Contract(format!(
                "predictor `{}` returned {} values for `{}`, expected {NUM_CONTROLS}",
                p.name(),
                raw.len(),
                c.id
            )));
        }
        let pred = registry.clamp_slice(&raw)?;
        let mut err = [0.0; NUM_CONTROLS];
        for (i, e) in err.iter_mut().enumerate() {
            *e = (pred[i] - c.truth[i]).abs();
        }
        Ok(err)
    });
    let mut errors = Vec::with_capacity(cases.len() * NUM_CONTROLS);
    for e in per_case {
        errors.extend_from_slice(&e?);
    }
    EvalReport::from_errors(p.name(), &errors)
}

/// One report per predictor, in the order given.
pub fn compare(
    predictors: &[&dyn Predictor],
    cases: &[TestCase],
    registry: &ControlRegistry,
    exec: Exec,
) -> Result<Vec<EvalReport>> {
    predictors.iter().map(|p| score(*p, cases, registry, exec)).collect()
}

pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.predictor.len())
        .max()
        .unwrap_or(0)
        .max("predictor".len());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>19}",
        "predictor", "n", "MAE", "SD", "SEM", "95% CI"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>8.4}  {:>8.4}  {:>8.4}  [{:>8.4}, {:>8.4}]",
            r.predictor, r.n, r.mae, r.sd, r.sem, r.ci95_lo, r.ci95_hi
        );
    }
    s
}

pub fn write_reports_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

// ---- reference predictors -------------------------------------------------

fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Uniform draw within each channel's range (RC).
pub struct RandomControls {
    registry: ControlRegistry,
    seed: u64,
}

impl RandomControls {
    pub fn new(registry: ControlRegistry, seed: u64) -> Self {
        RandomControls { registry, seed }
    }

    pub fn draw(&self, index: usize) -> ControlVector {
        let mut rng = stream_rng(self.seed, index);
        let mut v = ControlVector([0.0; NUM_CONTROLS]);
        for (i, ch) in self.registry.channels().iter().enumerate() {
            v.set(i, rng.gen_range(ch.min..=ch.max));
        }
        v
    }
}

impl Predictor for RandomControls {
    fn name(&self) -> &str {
        "RC"
    }

    fn predict(&self, q: &Query<'_>) -> Result<Vec<f64>> {
        Ok(self.draw(q.index).values().to_vec())
    }
}

/// Uniformly chosen training-set ground truth (RT).
pub struct RandomTraining {
    vectors: Vec<ControlVector>,
    seed: u64,
}

impl RandomTraining {
    pub fn new(vectors: Vec<ControlVector>, seed: u64) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Empty("RT predictor needs a non-empty training set".into()));
        }
        Ok(RandomTraining { vectors, seed })
    }

    pub fn draw(&self, index: usize) -> &ControlVector {
        let mut rng = stream_rng(self.seed, index);
        &self.vectors[rng.gen_range(0..self.vectors.len())]
    }
}

impl Predictor for RandomTraining {
    fn name(&self) -> &str {
        "RT"
    }

    fn predict(&self, q: &Query<'_>) -> Result<Vec<f64>> {
        Ok(self.draw(q.index).values().to_vec())
    }
}

/// Ground truth of the training image closest in pixel L2 distance.
pub struct NearestNeighbor {
    /// Sorted by id so the first minimum found is the lowest id.
    train: Vec<TestCase>,
}

impl NearestNeighbor {
    pub fn new(mut train: Vec<TestCase>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("NN predictor needs a non-empty training set".into()));
        }
        train.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(NearestNeighbor { train })
    }

    /// Index into the id-sorted training set of the nearest image.
    fn nearest(&self, frame: &Frame) -> Result<&TestCase> {
        let mut best: Option<(u64, usize)> = None;
        for (i, c) in self.train.iter().enumerate() {
            if c.frame.width != frame.width || c.frame.height != frame.height {
                return Err(Error::Dimension {
                    expected: c.frame.pixels.len(),
                    actual: frame.pixels.len(),
                });
            }
            let bound = best.map_or(u64::MAX, |(d, _)| d);
            if let Some(d) = bounded_sq_distance(&c.frame.pixels, &frame.pixels, bound) {
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
        }
        Ok(&self.train[best.expect("training set is non-empty").1])
    }
}

/// Squared L2 distance, or `None` once it reaches `bound`.
fn bounded_sq_distance(a: &[u8], b: &[u8], bound: u64) -> Option<u64> {
    let mut acc = 0u64;
    for (ca, cb) in a.chunks(4096).zip(b.chunks(4096)) {
        acc += ca
            .iter()
            .zip(cb)
            .map(|(&x, &y)| {
                let d = x as i32 - y as i32;
                (d * d) as u64
            })
            .sum::<u64>();
        if acc >= bound {
            return None;
        }
    }
    Some(acc)
}

impl Predictor for NearestNeighbor {
    fn name(&self) -> &str {
        "NN"
    }

    fn predict(&self, q: &Query<'_>) -> Result<Vec<f64>> {
        Ok(self.nearest(q.frame)?.truth.values().to_vec())
    }
}

/// Looks predictions up by record id.
pub struct LookupPredictor {
    name: String,
    table: HashMap<String, Vec<f64>>,
}

impl LookupPredictor {
    pub fn new(name: impl Into<String>, table: HashMap<String, Vec<f64>>) -> Self {
        LookupPredictor {
            name: name.into(),
            table,
        }
    }

    /// Returns the ground truth of every case.
    pub fn perfect(cases: &[TestCase]) -> Self {
        let table = cases
            .iter()
            .map(|c| (c.id.clone(), c.truth.values().to_vec()))
            .collect();
        LookupPredictor::new("perfect", table)
    }

    /// Reads `{"id": ..., "values": [...]}` lines.
    pub fn from_jsonl(name: impl Into<String>, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Line {
            id: String,
            values: Vec<f64>,
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = HashMap::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let at = || format!("{}:{}", path.display(), n + 1);
            let l: Line = serde_json::from_str(&line).map_err(|e| Error::parse(at(), e.to_string()))?;
            if table.insert(l.id.clone(), l.values).is_some() {
                return Err(Error::DuplicateId(l.id));
            }
        }
        Ok(LookupPredictor::new(name, table))
    }

    /// Errors with the list of case ids that have no prediction.
    pub fn check_coverage(&self, cases: &[TestCase]) -> Result<()> {
        let missing: Vec<&str> = cases
            .iter()
            .filter(|c| !self.table.contains_key(&c.id))
            .map(|c| c.id.as_str())
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        Err(Error::Contract(format!(
            "{} test records have no prediction: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )))
    }
}

impl Predictor for LookupPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, q: &Query<'_>) -> Result<Vec<f64>> {
        self.table
            .get(q.id)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("no prediction for `{}`", q.id)))
    }
}

/// Writes `{"id", "values"}` prediction lines for `p` on `cases`.
pub fn write_predictions<W: Write>(p: &dyn Predictor, cases: &[TestCase], mut out: W) -> Result<()> {
    for (index, c) in cases.iter().enumerate() {
        let values = p.predict(&Query {
            id: &c.id,
            index,
            frame: &c.frame,
        })?;
        let line = serde_json::json!({ "id": c.id, "values": values });
        writeln!(out, "{line}").map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}
