//! Sliding-window rank scans over grayscale frame sequences.
//!
//! Frames are loaded from PGM (P2/P5) or CSV files, a background reference
//! is subtracted, and every window of `w` consecutive frames is treated as
//! one sample set for sequential rank estimation. A rank of 0 means nothing
//! but background; each additional object adds to the rank.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::io::read_csv;
use crate::linalg::Matrix;
use crate::rank::{estimate_rank, Method, RankOptions, RankScanRecord};

/// Ordered frames of a common shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Matrix<f64>>,
}

impl FrameSequence {
    pub fn new(frames: Vec<Matrix<f64>>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Format("frame sequence is empty".into()))?;
        let shape = first.shape();
        for f in &frames {
            if f.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    found: f.shape(),
                });
            }
            f.check_finite()?;
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Matrix<f64>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.frames[0].shape()
    }

    pub fn into_frames(self) -> Vec<Matrix<f64>> {
        self.frames
    }
}

// ---- PGM -------------------------------------------------------------------

/// Parses a P2 or P5 graymap with `maxval ≤ 255`; values are divided by
/// `maxval`.
pub fn parse_pgm(bytes: &[u8]) -> Result<Matrix<f64>> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let binary = match magic.as_str() {
        "P2" => false,
        "P5" => true,
        other => return Err(Error::Format(format!("unsupported PGM magic '{other}'"))),
    };
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format("PGM has zero width or height".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PGM maxval {maxval} not in 1..=255")));
    }
    let count = width * height;
    let maxval_f = maxval as f64;
    let mut data = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes
            .get(pos..pos + count)
            .ok_or_else(|| Error::Format("PGM raster is truncated".into()))?;
        for &b in raster {
            if b as usize > maxval {
                return Err(Error::Format(format!("PGM value {b} exceeds maxval {maxval}")));
            }
            data.push(b as f64 / maxval_f);
        }
    } else {
        for _ in 0..count {
            let v = header_number(bytes, &mut pos, "pixel")?;
            if v > maxval {
                return Err(Error::Format(format!("PGM value {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / maxval_f);
        }
    }
    Ok(Matrix::from_vec(height, width, data))
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of PGM data".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::Format(format!("bad PGM {what} '{tok}'")))
}

/// Encodes a frame with values in `[0, 1]` as an 8-bit graymap. Values are
/// clamped and rounded to the nearest level.
pub fn encode_pgm(frame: &Matrix<f64>, binary: bool) -> Vec<u8> {
    let (h, w) = frame.shape();
    let level = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut out = format!("{}\n{w} {h}\n255\n", if binary { "P5" } else { "P2" }).into_bytes();
    if binary {
        out.extend(frame.as_slice().iter().map(|&v| level(v)));
    } else {
        for i in 0..h {
            let row: Vec<String> = frame.row(i).iter().map(|&v| level(v).to_string()).collect();
            out.extend_from_slice(row.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Matrix<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_pgm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_pgm(path: impl AsRef<Path>, frame: &Matrix<f64>, binary: bool) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_pgm(frame, binary))?;
    Ok(())
}

// ---- loading ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Pgm,
    Csv,
}

impl FrameFormat {
    fn extension(self) -> &'static str {
        match self {
            FrameFormat::Pgm => "pgm",
            FrameFormat::Csv => "csv",
        }
    }
}

impl FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(FrameFormat::Pgm),
            "csv" => Ok(FrameFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown frame format '{other}'"))),
        }
    }
}

/// Input files at `path`: a directory yields the files with the given
/// extension sorted by file name; any other path is a list file naming one
/// file per line, relative to the list file. Blank and `#` lines are skipped.
pub fn list_inputs(path: impl AsRef<Path>, extension: &str) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| {
            p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(extension))
        });
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        files
    } else {
        let base = path.parent().unwrap_or(Path::new("."));
        fs::read_to_string(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect()
    };
    if files.is_empty() {
        return Err(Error::Format(format!("no .{extension} inputs found at {}", path.display())));
    }
    Ok(files)
}

/// Loads a sample set of equally shaped CSV matrices (any finite values).
pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<Matrix<f64>>> {
    let samples = list_inputs(path, "csv")?
        .iter()
        .map(read_csv)
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSequence::new(samples)?.into_frames())
}

/// Loads frames from a directory or list file (see [`list_inputs`]). CSV
/// frames must already lie in `[0, 1]`.
pub fn load_frames(path: impl AsRef<Path>, format: FrameFormat) -> Result<FrameSequence> {
    let files = list_inputs(path, format.extension())?;
    let frames = files
        .iter()
        .map(|f| match format {
            FrameFormat::Pgm => read_pgm(f),
            FrameFormat::Csv => {
                let m = read_csv(f)?;
                if m.as_slice().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::Format(format!(
                        "{}: frame values must lie in [0, 1]",
                        f.display()
                    )));
                }
                Ok(m)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames)
}

// ---- windows and background ------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPlan {
    pub window: usize,
    pub stride: usize,
}

impl WindowPlan {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window < 4 {
            return Err(Error::InvalidParameter(format!(
                "window must hold at least 4 frames, got {window}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be positive".into()));
        }
        Ok(Self { window, stride })
    }

    pub fn count(&self, frames: usize) -> usize {
        if frames < self.window {
            0
        } else {
            (frames - self.window) / self.stride + 1
        }
    }
}

/// Half-open `[start, end)` frame ranges of every window.
pub fn plan_windows(frames: usize, plan: WindowPlan) -> Result<Vec<(usize, usize)>> {
    if frames < plan.window {
        return Err(Error::TooFewSamples {
            needed: plan.window,
            got: frames,
        });
    }
    Ok((0..plan.count(frames))
        .map(|w| {
            let start = w * plan.stride;
            (start, start + plan.window)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    /// Pixelwise median of the first `k` frames.
    FirstKMedian(usize),
    Supplied(Matrix<f64>),
}

/// Pixelwise median; even counts average the two middle values.
pub fn pixel_median(frames: &[Matrix<f64>]) -> Result<Matrix<f64>> {
    let first = frames
        .first()
        .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let (q, p) = first.shape();
    let k = frames.len();
    let mut buf = vec![0.0; k];
    let mut out = Matrix::zeros(q, p);
    for i in 0..q {
        for j in 0..p {
            for (b, f) in buf.iter_mut().zip(frames) {
                *b = f[(i, j)];
            }
            buf.sort_by(f64::total_cmp);
            out[(i, j)] = if k % 2 == 1 {
                buf[k / 2]
            } else {
                0.5 * (buf[k / 2 - 1] + buf[k / 2])
            };
        }
    }
    Ok(out)
}

/// Replaces every frame by `frame − reference`.
pub fn subtract_background(seq: &FrameSequence, reference: &Background) -> Result<FrameSequence> {
    let reference = match reference {
        Background::FirstKMedian(k) => {
            if *k == 0 || *k > seq.len() {
                return Err(Error::InvalidParameter(format!(
                    "median reference needs 1..={} frames, got {k}",
                    seq.len()
                )));
            }
            pixel_median(&seq.frames()[..*k])?
        }
        Background::Supplied(m) => {
            if m.shape() != seq.shape() {
                return Err(Error::ShapeMismatch {
                    expected: seq.shape(),
                    found: m.shape(),
                });
            }
            m.check_finite()?;
            m.clone()
        }
    };
    FrameSequence::new(seq.frames().iter().map(|f| f.sub(&reference)).collect())
}

// ---- scanning --------------------------------------------------------------

/// Result for one window; `record` holds the error text if the window failed.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub window_index: usize,
    pub start_frame: usize,
    pub record: std::result::Result<RankScanRecord, String>,
    /// The failure was a degenerate variance estimate.
    pub degenerate: bool,
}

impl WindowRecord {
    pub fn rank(&self) -> Option<usize> {
        self.record.as_ref().ok().map(|r| r.estimated_rank)
    }
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub plan: WindowPlan,
    pub alpha: f64,
    pub k_max: usize,
    pub method: Method<f64>,
    pub options: RankOptions<f64>,
}

/// Estimates the rank of every window. Windows run in parallel and each is
/// a pure function of its frames, so the output does not depend on order or
/// thread count. A failing window is recorded and the scan continues.
pub fn scan(seq: &FrameSequence, config: &ScanConfig) -> Result<Vec<WindowRecord>> {
    let windows = plan_windows(seq.len(), config.plan)?;
    Ok(windows
        .par_iter()
        .enumerate()
        .map(|(idx, &(start, end))| scan_window(seq, config, idx, start, end))
        .collect())
}

/// Rank estimate for the single window `[start, end)`.
pub fn scan_window(
    seq: &FrameSequence,
    config: &ScanConfig,
    window_index: usize,
    start: usize,
    end: usize,
) -> WindowRecord {
    let result = estimate_rank(
        &seq.frames()[start..end],
        config.alpha,
        config.k_max,
        &config.method,
        &config.options,
    );
    let degenerate = matches!(&result, Err(e) if e.is_degenerate());
    WindowRecord {
        window_index,
        start_frame: start,
        record: result.map_err(|e| e.to_string()),
        degenerate,
    }
}

/// Writes `window_index,start_frame,estimated_rank,truncated,pvalue_K0,…,
/// pvalue_K{k_max},error`. Untested `K` and failed windows leave cells empty.
pub fn write_rank_trace<W: Write>(out: W, records: &[WindowRecord], k_max: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "window_index".to_string(),
        "start_frame".to_string(),
        "estimated_rank".to_string(),
        "truncated".to_string(),
    ];
    header.extend((0..=k_max).map(|k| format!("pvalue_K{k}")));
    header.push("error".to_string());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.window_index.to_string(), r.start_frame.to_string()];
        match &r.record {
            Ok(rec) => {
                row.push(rec.estimated_rank.to_string());
                row.push(rec.truncated.to_string());
                for k in 0..=k_max {
                    let p = rec.pvalues.iter().find(|&&(kk, _)| kk == k);
                    row.push(p.map_or(String::new(), |&(_, p)| format!("{p:?}")));
                }
                row.push(String::new());
            }
            Err(msg) => {
                row.push(String::new());
                row.push(String::new());
                row.extend((0..=k_max).map(|_| String::new()));
                row.push(msg.clone());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a rank trace read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub window_index: usize,
    pub start_frame: usize,
    pub estimated_rank: Option<usize>,
    pub truncated: Option<bool>,
    pub pvalues: Vec<Option<f64>>,
    pub error: String,
}

pub fn read_rank_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let n_p = headers.iter().filter(|h| h.starts_with("pvalue_K")).count();
    let bad = |what: &str| Error::Format(format!("bad rank trace field {what}"));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 5 + n_p {
            return Err(bad("count"));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad(s));
        rows.push(TraceRow {
            window_index: parse_usize(&rec[0])?,
            start_frame: parse_usize(&rec[1])?,
            estimated_rank: opt(&rec[2]).map(parse_usize).transpose()?,
            truncated: opt(&rec[3])
                .map(|s| s.parse::<bool>().map_err(|_| bad(s)))
                .transpose()?,
            pvalues: (0..n_p)
                .map(|k| {
                    opt(&rec[4 + k])
                        .map(|s| s.parse::<f64>().map_err(|_| bad(s)))
                        .transpose()
                })
                .collect::<Result<_>>()?,
            error: rec[4 + n_p].to_string(),
        });
    }
    Ok(rows)
}

fn opt(s: &str) -> Option<&str> {
    (!s.is_empty()).then_some(s)
}

// ---- evaluation ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    /// Windows without an estimate (failed tests).
    pub skipped: usize,
}

/// Compares estimated ranks with per-window labels (object counts; any
/// positive value means occupied). Rates are taken over all empty (resp.
/// occupied) windows, so a failed window counts in the denominator but never
/// as an error. A rate with an empty denominator is 0.
pub fn evaluate(ranks: &[Option<usize>], labels: &[usize]) -> Result<DetectionMetrics> {
    if ranks.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: (labels.len(), 1),
            found: (ranks.len(), 1),
        });
    }
    let mut m = DetectionMetrics {
        false_positive_rate: 0.0,
        false_negative_rate: 0.0,
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
        skipped: 0,
    };
    for (r, &l) in ranks.iter().zip(labels) {
        match (r, l > 0) {
            (None, _) => m.skipped += 1,
            (Some(0), false) => m.true_negative += 1,
            (Some(_), false) => m.false_positive += 1,
            (Some(0), true) => m.false_negative += 1,
            (Some(_), true) => m.true_positive += 1,
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let empty = labels.iter().filter(|&&l| l == 0).count();
    m.false_positive_rate = rate(m.false_positive, empty);
    m.false_negative_rate = rate(m.false_negative, labels.len() - empty);
    Ok(m)
}

pub fn write_metrics<W: Write>(out: W, m: &DetectionMetrics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "false_positive_rate",
        "false_negative_rate",
        "true_positive",
        "false_positive",
        "true_negative",
        "false_negative",
        "skipped",
    ])?;
    w.write_record([
        format!("{:?}", m.false_positive_rate),
        format!("{:?}", m.false_negative_rate),
        m.true_positive.to_string(),
        m.false_positive.to_string(),
        m.true_negative.to_string(),
        m.false_negative.to_string(),
        m.skipped.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Reads `window_index,label` rows (header optional) and returns labels in
/// window order.
pub fn read_labels<R: Read>(input: R) -> Result<Vec<usize>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut pairs = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Format(format!("labels line {}: expected 2 fields", line + 1)));
        }
        match (rec[0].parse::<usize>(), rec[1].parse::<usize>()) {
            (Ok(i), Ok(l)) => pairs.push((i, l)),
            _ if line == 0 => continue,
            _ => return Err(Error::Format(format!("labels line {}: not integers", line + 1))),
        }
    }
    pairs.sort_unstable();
    for (expected, &(i, _)) in pairs.iter().enumerate() {
        if i != expected {
            return Err(Error::Format(format!("labels skip or repeat window {expected}")));
        }
    }
    Ok(pairs.into_iter().map(|(_, l)| l).collect())
}

pub fn write_labels<W: Write>(out: W, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_index", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Collapses a rank trace into its sequence of levels, ignoring runs shorter
/// than `min_run` windows and merging equal neighbours. Failed windows are
/// dropped.
pub fn rank_steps(ranks: &[Option<usize>], min_run: usize) -> Vec<usize> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for r in ranks.iter().flatten() {
        match runs.last_mut() {
            Some((level, len)) if level == r => *len += 1,
            _ => runs.push((*r, 1)),
        }
    }
    let mut steps: Vec<usize> = Vec::new();
    for (level, len) in runs {
        if len >= min_run.max(1) && steps.last() != Some(&level) {
            steps.push(level);
        }
    }
    steps
}

// ---- synthetic footage -----------------------------------------------------

/// A bright rectangle visible in frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub intensity: f64,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
    pub noise_sd: f64,
    /// Background levels are drawn uniformly from this range.
    pub background: (f64, f64),
    pub objects: Vec<ObjectSpec>,
}

impl Default for FixtureConfig {
    /// 61×95 frames, 600 of them; one 8×8 object in `[100, 450)` and a
    /// second, disjoint one in `[220, 340)`.
    fn default() -> Self {
        let block = |top, left, start, end| ObjectSpec {
            top,
            left,
            height: 8,
            width: 8,
            intensity: 0.5,
            start,
            end,
        };
        Self {
            rows: 61,
            cols: 95,
            frames: 600,
            noise_sd: 0.03,
            background: (0.15, 0.35),
            objects: vec![block(10, 15, 100, 450), block(35, 60, 220, 340)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: FixtureConfig,
    pub background: Matrix<f64>,
    pub frames: FrameSequence,
}

impl FixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.frames == 0 {
            return Err(Error::InvalidParameter("fixture dimensions must be positive".into()));
        }
        let (lo, hi) = self.background;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) || !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidParameter("bad fixture intensity settings".into()));
        }
        for o in &self.objects {
            if o.top + o.height > self.rows || o.left + o.width > self.cols || o.start > o.end {
                return Err(Error::InvalidParameter(format!("object {o:?} is out of bounds")));
            }
        }
        Ok(())
    }

    /// Number of objects visible at some point in `[start, end)`.
    pub fn objects_in(&self, start: usize, end: usize) -> usize {
        self.objects
            .iter()
            .filter(|o| o.start < end && start < o.end)
            .count()
    }

    /// Ground-truth object counts for every window of `plan`.
    pub fn window_labels(&self, plan: WindowPlan) -> Result<Vec<usize>> {
        Ok(plan_windows(self.frames, plan)?
            .into_iter()
            .map(|(s, e)| self.objects_in(s, e))
            .collect())
    }

    /// Ground-truth rank steps: counts per window, runs merged.
    pub fn expected_steps(&self, plan: WindowPlan) -> Result<Vec<usize>> {
        let labels: Vec<Option<usize>> = self.window_labels(plan)?.into_iter().map(Some).collect();
        Ok(rank_steps(&labels, 1))
    }

    /// Background plus objects plus i.i.d. Gaussian noise, clamped to
    /// `[0, 1]`.
    pub fn generate(&self, seed: u64) -> Result<Fixture> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.background;
        let background = Matrix::from_fn(self.rows, self.cols, |_, _| lo + (hi - lo) * rng.gen::<f64>());
        let mut frames = Vec::with_capacity(self.frames);
        for t in 0..self.frames {
            let mut f = background.clone();
            for o in self.objects.iter().filter(|o| o.start <= t && t < o.end) {
                for i in o.top..o.top + o.height {
                    for j in o.left..o.left + o.width {
                        f[(i, j)] += o.intensity;
                    }
                }
            }
            for v in f.as_mut_slice() {
                *v = (*v + self.noise_sd * standard_normal(&mut rng)).clamp(0.0, 1.0);
            }
            frames.push(f);
        }
        Ok(Fixture {
            config: self.clone(),
            background,
            frames: FrameSequence::new(frames)?,
        })
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
