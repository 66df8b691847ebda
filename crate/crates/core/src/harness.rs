//! Cross-validation folds, evaluation, latency benchmarks and synthetic
//! fixtures.
//!
//! Fold rounds: in round `r` bin `r` is the test bin, bin `(r + 1) mod k` the
//! validation bin, and the rest train. Items without a detection score IoU 0.
//! Detection is always evaluated on the clean (unaugmented) images.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::hint::black_box;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{augment_sample, canvas_fit, AugmentConfig, Sample};
use crate::dataset_io::{
    grid_to_json, load_entities, load_grid, load_prediction, write_atomic, write_manifest, AggregateRow,
    DatasetManifest, EvalReport, ItemRow, ManifestItem, Partition, Scope,
};
use crate::detect::{detect, encode_target, DecodeConfig, DetectionGrid, DEFAULT_ALPHA, DEFAULT_STRIDE};
use crate::error::{Error, Result};
use crate::geometry::{quad_iou, rotation_homography, Homography, Point2, Quad, RotationAngles};
use crate::ocr_metric::{align, ocr_score, AlignMode, AlignedTexts, BoxRect, Entity, EntitySet, NormalizeConfig};
use crate::raster::{encode_png, ImageBuffer, Rgb};
use crate::rectify::{rectify_document, RectifyConfig};
use crate::rng::{Draws, SeededRng};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRound {
    pub round: usize,
    pub test_bin: usize,
    pub val_bin: usize,
    pub train_bins: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub rounds: Vec<FoldRound>,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn bin_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn partition_of(&self, bin: usize, round: usize) -> Partition {
        let r = &self.rounds[round];
        if bin == r.test_bin {
            Partition::Test
        } else if bin == r.val_bin {
            Partition::Validation
        } else {
            Partition::Train
        }
    }

    pub fn bin_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &b in self.assignment.values() {
            sizes[b] += 1;
        }
        sizes
    }
}

/// Shuffles the ids with a seeded Fisher–Yates pass and slices them into `k`
/// contiguous bins, the first `n mod k` of which hold one extra item.
pub fn make_folds<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::TooFewItems { n: ids.len(), k });
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_ref()) {
            return Err(Error::DuplicateId(id.as_ref().to_owned()));
        }
    }

    let mut order: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    let mut rng = SeededRng::new(seed);
    for i in (1..order.len()).rev() {
        let j = rng.index(i + 1);
        order.swap(i, j);
    }

    let (base, extra) = (order.len() / k, order.len() % k);
    let mut assignment = BTreeMap::new();
    let mut start = 0;
    for bin in 0..k {
        let len = base + usize::from(bin < extra);
        for id in &order[start..start + len] {
            assignment.insert((*id).to_owned(), bin);
        }
        start += len;
    }

    let rounds = (0..k)
        .map(|r| {
            let val_bin = (r + 1) % k;
            FoldRound {
                round: r,
                test_bin: r,
                val_bin,
                train_bins: (0..k).filter(|&b| b != r && b != val_bin).collect(),
            }
        })
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        rounds,
        assignment,
    })
}

/// Where predicted quads come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictionSource {
    /// Decode each item's grid file, then NMS and top-1.
    Grids(DecodeConfig),
    /// Use each item's `pred_quad` directly.
    PredQuads,
}

/// Runs `f` over `items` on scoped worker threads; results keep input order.
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn predicted_quad(item: &ManifestItem, source: &PredictionSource) -> Result<Option<Quad<f64>>> {
    match source {
        PredictionSource::PredQuads => item
            .pred_quad
            .map(Some)
            .ok_or_else(|| Error::MissingPrediction(item.id.clone())),
        PredictionSource::Grids(cfg) => {
            let path = item
                .grid_path
                .as_ref()
                .ok_or_else(|| Error::MissingPrediction(item.id.clone()))?;
            let grid = load_grid(path)?.cast::<f64>();
            Ok(detect(&grid, cfg).map(|d| d.quad))
        }
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    let (n, sum) = values.into_iter().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| (n, sum / n as f64))
}

/// Scores every manifest item against the ground truth and aggregates per
/// round and partition; the overall partition means are means of the round
/// means. IoUs are on the `[0, 1]` scale.
pub fn evaluate_detection(
    manifest: &DatasetManifest,
    plan: &FoldPlan,
    source: &PredictionSource,
) -> Result<EvalReport> {
    if let PredictionSource::Grids(cfg) = source {
        cfg.validate()?;
    }
    let mut bins = Vec::with_capacity(manifest.items.len());
    for item in &manifest.items {
        bins.push(plan.bin_of(&item.id).ok_or_else(|| Error::UnknownItem(item.id.clone()))?);
    }
    let ious = par_map(&manifest.items, |item| {
        predicted_quad(item, source).map(|q| q.map_or(0.0, |q| quad_iou(&q, &item.quad)))
    });

    let mut items = Vec::with_capacity(ious.len());
    for ((item, iou), &bin) in manifest.items.iter().zip(ious).zip(&bins) {
        items.push(ItemRow {
            id: item.id.clone(),
            bin: Some(bin),
            iou: Some(iou?),
            ocr_score: None,
            latency_ms: None,
        });
    }

    let partitions = [Partition::Train, Partition::Validation, Partition::Test];
    let mut aggregates = Vec::new();
    let mut round_means: BTreeMap<Partition, Vec<f64>> = BTreeMap::new();
    for round in &plan.rounds {
        for &part in &partitions {
            let members = items
                .iter()
                .filter(|r| plan.partition_of(r.bin.unwrap(), round.round) == part)
                .map(|r| r.iou.unwrap());
            let (n, m) = mean(members).map_or((0, None), |(n, m)| (n, Some(m)));
            if let Some(m) = m {
                round_means.entry(part).or_default().push(m);
            }
            aggregates.push(AggregateRow {
                scope: Scope::Round,
                round: Some(round.round),
                partition: part,
                n,
                mean_iou: m,
                mean_score: None,
            });
        }
    }
    for &part in &partitions {
        let means = round_means.remove(&part).unwrap_or_default();
        aggregates.push(AggregateRow {
            scope: Scope::Overall,
            round: None,
            partition: part,
            n: means.len(),
            mean_iou: mean(means).map(|(_, m)| m),
            mean_score: None,
        });
    }
    aggregates.push(AggregateRow {
        scope: Scope::Overall,
        round: None,
        partition: Partition::All,
        n: items.len(),
        mean_iou: mean(items.iter().map(|r| r.iou.unwrap())).map(|(_, m)| m),
        mean_score: None,
    });
    Ok(EvalReport { items, aggregates })
}

/// Per-item OCR score of the aligned predictions and the dataset mean.
/// Every manifest item needs an entities file and an alignment.
pub fn evaluate_ocr(
    manifest: &DatasetManifest,
    alignments: &BTreeMap<String, AlignedTexts>,
    norm: &NormalizeConfig,
) -> Result<EvalReport> {
    let scores = par_map(&manifest.items, |item| -> Result<f64> {
        let path = item
            .entities_path
            .as_ref()
            .ok_or_else(|| Error::Alignment(format!("item `{}` has no entities file", item.id)))?;
        let gt = load_entities(path)?;
        let pd = alignments
            .get(&item.id)
            .ok_or_else(|| Error::MissingPrediction(item.id.clone()))?;
        ocr_score(&gt, pd, norm).map_err(|e| Error::Alignment(format!("item `{}`: {e}", item.id)))
    });
    let mut items = Vec::with_capacity(scores.len());
    for (item, score) in manifest.items.iter().zip(scores) {
        items.push(ItemRow {
            id: item.id.clone(),
            bin: None,
            iou: None,
            ocr_score: Some(score?),
            latency_ms: None,
        });
    }
    let summary = mean(items.iter().map(|r| r.ocr_score.unwrap()));
    Ok(EvalReport {
        aggregates: vec![AggregateRow {
            scope: Scope::Overall,
            round: None,
            partition: Partition::All,
            n: items.len(),
            mean_iou: None,
            mean_score: summary.map(|(_, m)| m),
        }],
        items,
    })
}

/// Reads `<pred_dir>/<id>.json` for every item and aligns it to the item's
/// ground-truth entities. With a `mode`, predictions of the other shape are
/// rejected.
pub fn load_alignments(
    manifest: &DatasetManifest,
    pred_dir: &Path,
    mode: Option<AlignMode>,
) -> Result<BTreeMap<String, AlignedTexts>> {
    let mut out = BTreeMap::new();
    for item in &manifest.items {
        let path = item
            .entities_path
            .as_ref()
            .ok_or_else(|| Error::Alignment(format!("item `{}` has no entities file", item.id)))?;
        let gt = load_entities(path)?;
        let pred_path = pred_dir.join(format!("{}.json", item.id));
        if !pred_path.is_file() {
            return Err(Error::MissingPrediction(item.id.clone()));
        }
        let pred = load_prediction(&pred_path)?;
        if let Some(mode) = mode {
            mode.check(&pred)
                .map_err(|e| Error::Alignment(format!("item `{}`: {e}", item.id)))?;
        }
        out.insert(item.id.clone(), align(&gt, &pred));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub n: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl BenchStats {
    /// Nearest-rank statistics of the given durations.
    pub fn from_samples(samples_ms: &[f64]) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::InvalidParameter("no timing samples".into()));
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let rank = |p: f64| s[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Ok(Self {
            n,
            mean_ms: s.iter().sum::<f64>() / n as f64,
            p50_ms: rank(0.50),
            p95_ms: rank(0.95),
            min_ms: s[0],
            max_ms: s[n - 1],
        })
    }
}

/// Runs `f` `warmup` times untimed, then times `iterations` single calls.
pub fn bench_fn<R>(iterations: usize, warmup: usize, mut f: impl FnMut(usize) -> R) -> Result<BenchStats> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    for i in 0..warmup {
        black_box(f(i));
    }
    let mut samples = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let t = Instant::now();
        black_box(f(warmup + i));
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    BenchStats::from_samples(&samples)
}

pub const BENCH_OPS: [&str; 5] = ["decode", "rectify", "augment", "score", "pipeline"];

/// Inputs shared by the benchmark operations.
#[derive(Debug, Clone)]
pub struct BenchPayload {
    pub image: ImageBuffer,
    pub quad: Quad<f64>,
    pub grid: DetectionGrid<f32>,
    pub entities: EntitySet,
    pub decode: DecodeConfig,
    pub rectify: RectifyConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl BenchPayload {
    /// A 1000×700 scene, its 40×64 grid (stride 16 over a 1024×640 input),
    /// 600×400 rectification and 512×512 augmentation output.
    pub fn standard(seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let image = ImageBuffer::from_fn(1000, 700, |x, y| {
            [(x % 251) as u8, (y % 241) as u8, ((x ^ y) % 239) as u8]
        })?;
        let quad = Quad::from_xy([[180.0, 120.0], [820.0, 150.0], [860.0, 580.0], [150.0, 560.0]]);
        let grid = encode_target(&quad.cast::<f32>(), 40, 64, DEFAULT_STRIDE, DEFAULT_ALPHA as f32)?;
        let entities = EntitySet::new(
            (0..6)
                .map(|i| Entity {
                    name: format!("field{i}"),
                    text: synthetic_text(&mut rng, i),
                    bbox: BoxRect::new(100.0, 40.0 * i as f64, 400.0, 40.0 * i as f64 + 30.0),
                })
                .collect(),
        );
        Ok(Self {
            image,
            quad,
            grid,
            entities,
            decode: DecodeConfig::default(),
            rectify: RectifyConfig {
                aspect: 1.5,
                target_width: 600,
            },
            augment: AugmentConfig::new(55.0, true, 512, 512),
            seed,
        })
    }
}

/// Times one single-item operation by name.
pub fn bench(op_name: &str, payload: &BenchPayload, iterations: usize, warmup: usize) -> Result<BenchStats> {
    let p = payload;
    let norm = NormalizeConfig::default();
    let perfect = AlignedTexts::perfect(&p.entities);
    match op_name {
        "decode" => bench_fn(iterations, warmup, |_| detect(&p.grid, &p.decode)),
        "rectify" => bench_fn(iterations, warmup, |_| rectify_document(&p.image, &p.quad, &p.rectify)),
        "augment" => {
            let sample = Sample {
                image: p.image.clone(),
                quad: p.quad,
            };
            bench_fn(iterations, warmup, |i| {
                augment_sample(&sample, &mut SeededRng::for_item(p.seed, i as u64), &p.augment)
            })
        }
        "score" => bench_fn(iterations, warmup, |_| ocr_score(&p.entities, &perfect, &norm)),
        "pipeline" => bench_fn(iterations, warmup, |_| -> Result<f64> {
            let Some(det) = detect(&p.grid, &p.decode) else {
                return Ok(0.0);
            };
            let page = rectify_document(&p.image, &det.quad.cast(), &p.rectify)?;
            black_box(page);
            ocr_score(&p.entities, &perfect, &norm)
        }),
        other => Err(Error::UnknownOp(other.to_owned())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarpKind {
    Identity,
    /// Rotation, anisotropic scale and shear: parallelograms stay parallelograms.
    Affine,
    Perspective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub width: u32,
    pub height: u32,
    pub doc_width: f64,
    pub doc_height: f64,
    /// Fixed warp kind, or a draw among all three when unset.
    pub warp: Option<WarpKind>,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            doc_width: 300.0,
            doc_height: 200.0,
            warp: None,
        }
    }
}

impl FixtureConfig {
    pub fn aspect(&self) -> f64 {
        self.doc_width / self.doc_height
    }

    /// Where the document sits before warping: centered in the image.
    pub fn placement(&self) -> Quad<f64> {
        let x0 = 0.5 * (self.width as f64 - self.doc_width);
        let y0 = 0.5 * (self.height as f64 - self.doc_height);
        Quad::rect(x0, y0, x0 + self.doc_width, y0 + self.doc_height)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.doc_width >= 60.0
            && self.doc_height >= 60.0
            && self.doc_width + 4.0 <= self.width as f64
            && self.doc_height + 4.0 <= self.height as f64;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "document {}x{} does not fit a {}x{} fixture",
                self.doc_width, self.doc_height, self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureScene {
    pub image: ImageBuffer,
    pub quad: Quad<f64>,
    pub entities: EntitySet,
    /// Maps the canonical placement (see [`FixtureConfig::placement`]) onto the image.
    pub applied_homography: Homography<f64>,
    pub warp: WarpKind,
}

/// Corner patch colors, TL, TR, BR, BL.
pub const CORNER_COLORS: [Rgb; 4] = [[220, 30, 30], [30, 200, 40], [40, 60, 220], [240, 210, 20]];
const CARD: Rgb = [236, 232, 224];
const INK: Rgb = [25, 25, 60];
/// Corner patch side as a fraction of the shorter document side.
pub const CORNER_PATCH: f64 = 0.2;

const FIELD_NAMES: [&str; 6] = ["name", "document_number", "birth_date", "issue_date", "father", "mother"];
const WORDS: [&str; 12] = [
    "MARIA", "JOSÉ", "SILVA", "SOUZA", "ANA", "JOÃO", "COSTA", "PEREIRA", "LUÍS", "ALVES", "RIBEIRO", "LIMA",
];

fn synthetic_text(rng: &mut impl Draws, field: usize) -> String {
    match FIELD_NAMES[field % FIELD_NAMES.len()] {
        "document_number" => (0..9).map(|_| char::from(b'0' + rng.index(10) as u8)).collect(),
        "birth_date" | "issue_date" => format!(
            "{:02}/{:02}/{}",
            1 + rng.index(28),
            1 + rng.index(12),
            1950 + rng.index(70)
        ),
        _ => (0..2 + rng.index(2))
            .map(|_| WORDS[rng.index(WORDS.len())])
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn draw_warp(rng: &mut impl Draws, kind: WarpKind, cfg: &FixtureConfig) -> Result<Homography<f64>> {
    if kind == WarpKind::Identity {
        return Ok(Homography::identity());
    }
    let c = Point2::new(0.5 * cfg.width as f64, 0.5 * cfg.height as f64);
    let theta = rng.uniform(-20.0, 20.0).to_radians();
    let (sx, sy) = (rng.uniform(0.85, 1.2), rng.uniform(0.85, 1.2));
    let shear = rng.uniform(-0.15, 0.15);
    let (tx, ty) = (rng.uniform(-40.0, 40.0), rng.uniform(-30.0, 30.0));
    let (s, co) = theta.sin_cos();
    // R · Shear · Scale about the image center, then a translation.
    let (a, b) = (co * sx, (co * shear - s) * sy);
    let (d, e) = (s * sx, (s * shear + co) * sy);
    let affine = Homography::from_rows([
        [a, b, c.x - a * c.x - b * c.y + tx],
        [d, e, c.y - d * c.x - e * c.y + ty],
        [0.0, 0.0, 1.0],
    ]);
    let mut h = affine;
    if kind == WarpKind::Perspective {
        let angles = RotationAngles::new(0.0, rng.uniform(-25.0, 25.0), rng.uniform(-25.0, 25.0));
        let focal = cfg.width.max(cfg.height) as f64;
        h = h.then(&rotation_homography(angles, c, focal)?);
    }
    let q = cfg.placement().try_map(|p| h.apply(p))?;
    Ok(h.then(&canvas_fit(&q, cfg.width, cfg.height)))
}

/// Renders a synthetic document card (corner color patches, entity bars) on a
/// textured background under a random homography.
pub fn generate_fixture(rng: &mut impl Draws, cfg: &FixtureConfig) -> Result<FixtureScene> {
    cfg.validate()?;
    let warp = cfg.warp.unwrap_or_else(|| {
        [WarpKind::Identity, WarpKind::Affine, WarpKind::Perspective][rng.index(3)]
    });
    let h = draw_warp(rng, warp, cfg)?;
    let inv = h.inverse()?;
    let placement = cfg.placement();
    let origin = placement.vertices[0];
    let (dw, dh) = (cfg.doc_width, cfg.doc_height);
    let patch = CORNER_PATCH * dw.min(dh);

    let n_fields = 3 + rng.index(4);
    let band = 0.8 * dh / n_fields as f64;
    let mut doc_boxes = Vec::with_capacity(n_fields);
    let mut entities = Vec::with_capacity(n_fields);
    for i in 0..n_fields {
        let y0 = 0.1 * dh + band * i as f64 + 0.2 * band;
        let y1 = y0 + 0.6 * band;
        let x1 = rng.uniform(0.55, 0.75) * dw;
        let doc_box = BoxRect::new(0.27 * dw, y0, x1, y1);
        let img_box = Quad::rect(doc_box.x0, doc_box.y0, doc_box.x1, doc_box.y1)
            .try_map(|p| h.apply(p + origin))?;
        let (lo, hi) = img_box.bounds();
        doc_boxes.push(doc_box);
        entities.push(Entity {
            name: FIELD_NAMES[i].to_owned(),
            text: synthetic_text(rng, i),
            bbox: BoxRect::new(lo.x, lo.y, hi.x, hi.y),
        });
    }

    let tint = [rng.index(60) as u8, rng.index(60) as u8, rng.index(60) as u8];
    let doc_color = |u: f64, v: f64| -> Option<Rgb> {
        if !(0.0..dw).contains(&u) || !(0.0..dh).contains(&v) {
            return None;
        }
        let (left, top) = (u < patch, v < patch);
        let (right, bottom) = (u >= dw - patch, v >= dh - patch);
        let corner = match (left, right, top, bottom) {
            (true, _, true, _) => Some(0),
            (_, true, true, _) => Some(1),
            (_, true, _, true) => Some(2),
            (true, _, _, true) => Some(3),
            _ => None,
        };
        if let Some(c) = corner {
            return Some(CORNER_COLORS[c]);
        }
        let ink = doc_boxes
            .iter()
            .any(|b| u >= b.x0 && u < b.x1 && v >= b.y0 && v < b.y1);
        Some(if ink { INK } else { CARD })
    };
    let background = |x: u32, y: u32| -> Rgb {
        let check = ((x / 12 + y / 12) % 2) as u8 * 30;
        let ripple = ((x * 7 + y * 13) % 17) as u8;
        [60 + tint[0] + check + ripple, 70 + tint[1] + check, 50 + tint[2] + check + ripple / 2]
    };
    let m = inv.m;
    let image = ImageBuffer::from_fn(cfg.width, cfg.height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let w = m[2][0] * xf + m[2][1] * yf + m[2][2];
        if w.abs() > 1e-12 {
            let u = (m[0][0] * xf + m[0][1] * yf + m[0][2]) / w - origin.x;
            let v = (m[1][0] * xf + m[1][1] * yf + m[1][2]) / w - origin.y;
            if let Some(c) = doc_color(u, v) {
                return c;
            }
        }
        background(x, y)
    })?;

    let quad = placement.try_map(|p| h.apply(p))?;
    Ok(FixtureScene {
        image,
        quad,
        entities: EntitySet::new(entities),
        applied_homography: h,
        warp,
    })
}

/// Grid shape covering a `width × height` image at `stride`.
pub fn grid_shape(width: u32, height: u32, stride: u32) -> (usize, usize) {
    (height.div_ceil(stride) as usize, width.div_ceil(stride) as usize)
}

/// Ground-truth grid for a fixture at the default stride and alpha.
pub fn fixture_grid(scene: &FixtureScene) -> Result<DetectionGrid<f64>> {
    let (rows, cols) = grid_shape(scene.image.width(), scene.image.height(), DEFAULT_STRIDE);
    encode_target(&scene.quad, rows, cols, DEFAULT_STRIDE, DEFAULT_ALPHA)
}

/// Writes `count` fixtures under `dir`: `images/`, `entities/`, `grids/` and
/// `manifest.json`. Fixture `i` draws from stream `i` of `seed`.
pub fn write_fixture_set(dir: &Path, count: usize, seed: u64, cfg: &FixtureConfig) -> Result<Vec<ManifestItem>> {
    for sub in ["images", "entities", "grids"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut items = Vec::with_capacity(count);
    for i in 0..count {
        let scene = generate_fixture(&mut SeededRng::for_item(seed, i as u64), cfg)?;
        let id = format!("fx{i:04}");
        let image_rel = PathBuf::from("images").join(format!("{id}.png"));
        let ent_rel = PathBuf::from("entities").join(format!("{id}.json"));
        let grid_rel = PathBuf::from("grids").join(format!("{id}.json"));
        write_atomic(dir.join(&image_rel), &encode_png(&scene.image)?)?;
        let ent = serde_json::to_vec_pretty(&scene.entities).expect("entities serialize");
        write_atomic(dir.join(&ent_rel), &ent)?;
        write_atomic(dir.join(&grid_rel), &grid_to_json(&fixture_grid(&scene)?))?;
        items.push(ManifestItem {
            entities_path: Some(ent_rel),
            grid_path: Some(grid_rel),
            pred_quad: None,
            ..ManifestItem::new(id, image_rel, scene.quad)
        });
    }
    write_manifest(&items, dir.join("manifest.json"))?;
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i}")).collect()
    }

    #[test]
    fn ten_items_ten_bins() {
        let plan = make_folds(&ids(10), 10, 5).unwrap();
        assert!(plan.bin_sizes().iter().all(|&s| s == 1));
        let in_bin0 = plan.assignment.iter().find(|(_, &b)| b == 0).unwrap().0.clone();
        assert_eq!(plan.partition_of(plan.bin_of(&in_bin0).unwrap(), 0), Partition::Test);
        assert_eq!(plan.partition_of(plan.bin_of(&in_bin0).unwrap(), 9), Partition::Validation);
    }

    #[test]
    fn fold_errors() {
        assert!(matches!(make_folds(&ids(3), 4, 0), Err(Error::TooFewItems { n: 3, k: 4 })));
        assert!(make_folds(&ids(3), 1, 0).is_err());
        assert!(matches!(make_folds(&["a", "b", "a"], 2, 0), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn stats_nearest_rank() {
        let s = BenchStats::from_samples(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((s.min_ms, s.p50_ms, s.p95_ms, s.max_ms), (1.0, 3.0, 5.0, 5.0));
        assert_eq!(s.mean_ms, 3.0);
        let one = BenchStats::from_samples(&[7.0]).unwrap();
        assert_eq!((one.mean_ms, one.min_ms, one.max_ms), (7.0, 7.0, 7.0));
    }

    #[test]
    fn bench_counts_invocations() {
        let mut calls = 0;
        let s = bench_fn(7, 3, |_| calls += 1).unwrap();
        assert_eq!((s.n, calls), (7, 10));
        assert!(bench_fn(0, 0, |_| ()).is_err());
    }

    #[test]
    fn unknown_op() {
        let payload = BenchPayload::standard(1).unwrap();
        assert!(matches!(bench("train", &payload, 1, 0), Err(Error::UnknownOp(_))));
    }

    #[test]
    fn identity_fixture_matches_placement() {
        let cfg = FixtureConfig {
            warp: Some(WarpKind::Identity),
            ..FixtureConfig::default()
        };
        let scene = generate_fixture(&mut SeededRng::new(4), &cfg).unwrap();
        assert_eq!(scene.quad, cfg.placement());
        let (lo, hi) = scene.quad.bounds();
        for e in &scene.entities.entities {
            assert!(e.bbox.x0 >= lo.x && e.bbox.x1 <= hi.x && e.bbox.y0 >= lo.y && e.bbox.y1 <= hi.y);
        }
        // TL patch color just inside the TL corner.
        let p = scene.quad.vertices[0];
        assert_eq!(scene.image.get(p.x as u32 + 3, p.y as u32 + 3), CORNER_COLORS[0]);
    }

    #[test]
    fn fixtures_stay_in_frame() {
        for i in 0..20 {
            let scene = generate_fixture(&mut SeededRng::for_item(8, i), &FixtureConfig::default()).unwrap();
            assert!(scene.quad.validate().is_ok());
            let (lo, hi) = scene.quad.bounds();
            assert!(lo.x >= 0.0 && lo.y >= 0.0 && hi.x <= 639.0 && hi.y <= 479.0, "{:?}", scene.quad);
            let n = scene.entities.len();
            assert!((3..=6).contains(&n));
        }
    }
}
