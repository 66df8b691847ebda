//! Manifests, grids, entity and prediction files, and evaluation reports.
//!
//! Manifest format (`"schema": 1`):
//!
//! ```json
//! {
//!   "schema": 1,
//!   "items": [
//!     {"id": "doc-001", "image_path": "img/001.png",
//!      "quad": [[x,y],[x,y],[x,y],[x,y]],
//!      "entities_path": "ent/001.json", "grid_path": "grid/001.bin",
//!      "pred_quad": [[x,y],[x,y],[x,y],[x,y]]}
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Every referenced
//! file must exist when the manifest is loaded.
//!
//! Report CSV header: `kind,id,round,partition,n,iou,ocr_score,latency_ms`.
//! Item rows have `kind=item`; aggregate rows have `kind=round` or
//! `kind=overall`. Empty fields are left blank.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::{DetectionGrid, CHANNELS};
use crate::error::{Error, Result};
use crate::geometry::Quad;
use crate::ocr_metric::{EntitySet, OcrPrediction};

pub const MANIFEST_SCHEMA: u64 = 1;

pub const REPORT_CSV_HEADER: [&str; 8] = ["kind", "id", "round", "partition", "n", "iou", "ocr_score", "latency_ms"];

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    pub image_path: PathBuf,
    pub quad: Quad<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_quad: Option<Quad<f64>>,
}

impl ManifestItem {
    pub fn new(id: impl Into<String>, image_path: impl Into<PathBuf>, quad: Quad<f64>) -> Self {
        Self {
            id: id.into(),
            image_path: image_path.into(),
            quad,
            entities_path: None,
            grid_path: None,
            pred_quad: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestFile {
    schema: u64,
    #[serde(default)]
    items: Vec<ManifestItem>,
}

/// A loaded manifest. Item paths are resolved (joined onto `root`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub items: Vec<ManifestItem>,
}

impl DatasetManifest {
    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|it| it.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestItem> {
        self.items.iter().find(|it| it.id == id)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file: ManifestFile = read_json(path)?;
    if file.schema != MANIFEST_SCHEMA {
        return Err(Error::UnsupportedSchema(file.schema));
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(file.items.len());
    for mut item in file.items {
        if !seen.insert(item.id.clone()) {
            return Err(Error::DuplicateId(item.id));
        }
        let bad_quad = |e: crate::geometry::GeometryError| Error::Format {
            path: path.to_path_buf(),
            message: format!("item `{}`: {e}", item.id),
        };
        item.quad = Quad::canonicalize(item.quad.vertices).map_err(bad_quad)?;
        item.pred_quad = match item.pred_quad {
            Some(q) => Some(Quad::canonicalize(q.vertices).map_err(bad_quad)?),
            None => None,
        };
        item.image_path = root.join(&item.image_path);
        item.entities_path = item.entities_path.map(|p| root.join(p));
        item.grid_path = item.grid_path.map(|p| root.join(p));
        for p in [Some(&item.image_path), item.entities_path.as_ref(), item.grid_path.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(Error::DanglingPath {
                    id: item.id.clone(),
                    path: p.clone(),
                });
            }
        }
        items.push(item);
    }
    Ok(DatasetManifest { root, items })
}

/// Serializes items as given; paths should already be relative to the
/// manifest's directory.
pub fn write_manifest(items: &[ManifestItem], path: impl AsRef<Path>) -> Result<()> {
    let file = ManifestFile {
        schema: MANIFEST_SCHEMA,
        items: items.to_vec(),
    };
    let bytes = serde_json::to_vec_pretty(&file).expect("manifest serializes");
    write_atomic(path, &bytes)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridJson {
    rows: usize,
    cols: usize,
    stride: u32,
    alpha: f64,
    data: Vec<f64>,
}

const GRID_HEADER_BYTES: usize = 16;

/// Loads a grid in JSON or binary form. `.json` and `.bin` extensions select
/// the form; otherwise a leading `{` means JSON.
pub fn load_grid(path: impl AsRef<Path>) -> Result<DetectionGrid<f32>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let is_json = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => true,
        Some(e) if e.eq_ignore_ascii_case("bin") => false,
        _ => bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{'),
    };
    if is_json {
        parse_grid_json(&bytes, path)
    } else {
        parse_grid_bin(&bytes, path)
    }
}

pub fn parse_grid_json(bytes: &[u8], path: &Path) -> Result<DetectionGrid<f32>> {
    let g: GridJson = serde_json::from_slice(bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let cells = g.data.iter().map(|&v| v as f32).collect();
    DetectionGrid::new(g.rows, g.cols, g.stride, g.alpha as f32, cells)
}

pub fn parse_grid_bin(bytes: &[u8], path: &Path) -> Result<DetectionGrid<f32>> {
    if bytes.len() < GRID_HEADER_BYTES {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("binary grid needs a {GRID_HEADER_BYTES}-byte header, file has {} bytes", bytes.len()),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let (rows, cols, stride, alpha_milli) = (word(0) as usize, word(1) as usize, word(2), word(3));
    let body = &bytes[GRID_HEADER_BYTES..];
    if body.len() % 4 != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("binary grid body of {} bytes is not a whole number of f32 values", body.len()),
        });
    }
    let want = rows.checked_mul(cols).and_then(|n| n.checked_mul(CHANNELS));
    if want != Some(body.len() / 4) {
        return Err(Error::ShapeMismatch(format!(
            "{rows}x{cols}x{CHANNELS} grid needs {} values, got {}",
            want.map_or_else(|| "overflowing".to_string(), |n| n.to_string()),
            body.len() / 4
        )));
    }
    let cells = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DetectionGrid::new(rows, cols, stride, alpha_milli as f32 / 1000.0, cells)
}

pub fn grid_to_json<T: crate::scalar::Scalar>(grid: &DetectionGrid<T>) -> Vec<u8> {
    let g = GridJson {
        rows: grid.rows(),
        cols: grid.cols(),
        stride: grid.stride(),
        alpha: grid.alpha().as_f64(),
        data: grid.cells().iter().map(|v| v.as_f64()).collect(),
    };
    serde_json::to_vec(&g).expect("grid serializes")
}

/// Binary form. Alpha is stored in thousandths, so it is rounded to 1e-3.
pub fn grid_to_bin<T: crate::scalar::Scalar>(grid: &DetectionGrid<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(GRID_HEADER_BYTES + 4 * grid.cells().len());
    let alpha_milli = (grid.alpha().as_f64() * 1000.0).round() as u32;
    for w in [grid.rows() as u32, grid.cols() as u32, grid.stride(), alpha_milli] {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for v in grid.cells() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn write_grid_json<T: crate::scalar::Scalar>(grid: &DetectionGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &grid_to_json(grid))
}

pub fn write_grid_bin<T: crate::scalar::Scalar>(grid: &DetectionGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &grid_to_bin(grid))
}

pub fn load_entities(path: impl AsRef<Path>) -> Result<EntitySet> {
    let path = path.as_ref();
    let set: EntitySet = read_json(path)?;
    set.validate().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(set)
}

pub fn load_prediction(path: impl AsRef<Path>) -> Result<OcrPrediction> {
    read_json(path.as_ref())
}

pub fn load_quad(path: impl AsRef<Path>) -> Result<Quad<f64>> {
    read_json(path.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
    All,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
            Partition::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Round,
    Overall,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Round => "round",
            Scope::Overall => "overall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub id: String,
    /// Fold bin the item was assigned to, when evaluated under a fold plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scope: Scope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
    pub partition: Partition,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: Vec<ItemRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl EvalReport {
    pub fn aggregate(&self, scope: Scope, round: Option<usize>, partition: Partition) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.scope == scope && a.round == round && a.partition == partition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` selects CSV; anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

pub fn report_to_json(report: &EvalReport) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(report).expect("report serializes");
    v.push(b'\n');
    v
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_to_csv(report: &EvalReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_CSV_HEADER).expect("in-memory write");
    for r in &report.items {
        w.write_record([
            "item".to_string(),
            r.id.clone(),
            String::new(),
            String::new(),
            String::new(),
            opt(r.iou),
            opt(r.ocr_score),
            opt(r.latency_ms),
        ])
        .expect("in-memory write");
    }
    for a in &report.aggregates {
        w.write_record([
            a.scope.as_str().to_string(),
            String::new(),
            opt(a.round),
            a.partition.as_str().to_string(),
            a.n.to_string(),
            opt(a.mean_iou),
            opt(a.mean_score),
            String::new(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let bytes = match format {
        ReportFormat::Json => report_to_json(report),
        ReportFormat::Csv => report_to_csv(report),
    };
    write_atomic(path, &bytes)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    read_json(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryError;

    fn touch(dir: &Path, name: &str) {
        fs::write(dir.join(name), b"x").unwrap();
    }

    fn manifest_json(items: &str) -> String {
        format!(r#"{{"schema": 1, "items": [{items}]}}"#)
    }

    #[test]
    fn empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        fs::write(&p, manifest_json("")).unwrap();
        assert!(load_manifest(&p).unwrap().items.is_empty());
    }

    #[test]
    fn manifest_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.png");
        let p = dir.path().join("m.json");
        let item = |id: &str, img: &str| {
            format!(r#"{{"id": "{id}", "image_path": "{img}", "quad": [[0,0],[4,0],[4,4],[0,4]]}}"#)
        };

        fs::write(&p, manifest_json(&format!("{},{}", item("x", "a.png"), item("x", "a.png")))).unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::DuplicateId(id)) if id == "x"));

        fs::write(&p, manifest_json(&item("y", "missing.png"))).unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::DanglingPath { id, .. }) if id == "y"));

        fs::write(&p, "{not json").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Json { .. })));

        fs::write(&p, r#"{"schema": 2, "items": []}"#).unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::UnsupportedSchema(2))));

        let err = load_manifest(dir.path().join("nope.json")).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn reversed_quad_is_canonicalized() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.png");
        let p = dir.path().join("m.json");
        fs::write(
            &p,
            manifest_json(r#"{"id": "r", "image_path": "a.png", "quad": [[0,0],[0,4],[4,4],[4,0]]}"#),
        )
        .unwrap();
        let m = load_manifest(&p).unwrap();
        assert!(m.items[0].quad.signed_area() > 0.0);
        assert_eq!(m.items[0].image_path, dir.path().join("a.png"));
    }

    fn sample_grid() -> DetectionGrid<f32> {
        let cells: Vec<f32> = (0..2 * 3 * CHANNELS)
            .map(|k| if k % CHANNELS == 0 { (k as f32 / 50.0).min(1.0) } else { k as f32 * 0.37 - 3.1 })
            .collect();
        DetectionGrid::new(2, 3, 16, 4.0, cells).unwrap()
    }

    #[test]
    fn grid_formats_agree() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample_grid();
        write_grid_json(&g, dir.path().join("g.json")).unwrap();
        write_grid_bin(&g, dir.path().join("g.bin")).unwrap();
        let a = load_grid(dir.path().join("g.json")).unwrap();
        let b = load_grid(dir.path().join("g.bin")).unwrap();
        assert_eq!((a.rows(), a.cols(), a.stride()), (b.rows(), b.cols(), b.stride()));
        assert_eq!(a.alpha(), b.alpha());
        for (x, y) in a.cells().iter().zip(b.cells()) {
            assert!((x - y).abs() <= 1e-6);
        }
        assert_eq!(a, g);
    }

    #[test]
    fn grid_shape_and_range_errors() {
        let path = Path::new("g.json");
        let mut data = vec![0.0; 7];
        data.push(0.0);
        let j = serde_json::json!({"rows": 1, "cols": 1, "stride": 16, "alpha": 4.0, "data": data});
        let err = parse_grid_json(j.to_string().as_bytes(), path).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));

        let j = serde_json::json!({"rows": 1, "cols": 1, "stride": 16, "alpha": 4.0, "data": [1.5, 0, 0, 0, 0, 0, 0]});
        assert!(matches!(parse_grid_json(j.to_string().as_bytes(), path), Err(Error::OutOfRange(_))));

        let mut bin = grid_to_bin(&sample_grid());
        bin.truncate(bin.len() - 4);
        assert!(matches!(parse_grid_bin(&bin, path), Err(Error::ShapeMismatch(_))));
        assert!(matches!(parse_grid_bin(&bin[..10], path), Err(Error::Format { .. })));
        assert!(matches!(parse_grid_bin(&bin[..17], path), Err(Error::Format { .. })));
    }

    #[test]
    fn loaders_survive_garbage() {
        let path = Path::new("g");
        let mut state = 0x9e37_79b9_u32;
        for len in 0..200 {
            let bytes: Vec<u8> = (0..len)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 17;
                    state ^= state << 5;
                    state as u8
                })
                .collect();
            let _ = parse_grid_bin(&bytes, path);
            let _ = parse_grid_json(&bytes, path);
        }
    }

    fn sample_report() -> EvalReport {
        EvalReport {
            items: vec![
                ItemRow {
                    id: "a".into(),
                    bin: Some(0),
                    iou: Some(1.0),
                    ocr_score: None,
                    latency_ms: Some(2.5),
                },
                ItemRow {
                    id: "b,\"q\"".into(),
                    bin: Some(1),
                    iou: Some(0.5),
                    ocr_score: Some(0.75),
                    latency_ms: None,
                },
            ],
            aggregates: vec![AggregateRow {
                scope: Scope::Overall,
                round: None,
                partition: Partition::All,
                n: 2,
                mean_iou: Some(0.75),
                mean_score: None,
            }],
        }
    }

    #[test]
    fn empty_report_csv_is_header_only() {
        let csv = String::from_utf8(report_to_csv(&EvalReport::default())).unwrap();
        assert_eq!(csv, "kind,id,round,partition,n,iou,ocr_score,latency_ms\n");
    }

    #[test]
    fn report_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let r = sample_report();
        write_report(&r, &p, ReportFormat::Json).unwrap();
        let back = load_report(&p).unwrap();
        assert_eq!(back, r);
        let agg = back.aggregate(Scope::Overall, None, Partition::All).unwrap();
        let mean = back.items.iter().filter_map(|i| i.iou).sum::<f64>() / back.items.len() as f64;
        assert!((agg.mean_iou.unwrap() - mean).abs() < 1e-9);
    }

    #[test]
    fn report_csv_rows() {
        let csv = String::from_utf8(report_to_csv(&sample_report())).unwrap();
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(&rows[1][1], "b,\"q\"");
        assert_eq!(&rows[2][0], "overall");
        assert_eq!(&rows[2][5], "0.75");
    }

    #[test]
    fn atomic_write_to_missing_dir_is_io() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_atomic(dir.path().join("no/such/file"), b"x").unwrap_err();
        assert!(err.is_io());
        assert!(!matches!(err, Error::Geometry(GeometryError::NonFinite)));
    }
}
