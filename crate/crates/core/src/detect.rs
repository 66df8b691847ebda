//! Detection-grid semantics.
//!
//! A fully convolutional detector emits one 7-channel cell per `stride × stride`
//! patch: channel 0 is the object probability, channels 1–6 are the affine
//! parameters `a1..a6` mapping the canonical square (side 1, centered at the
//! origin) into the object, in units of `alpha` cells relative to the cell
//! center. Decoding a cell `(i, j)` gives, for each canonical vertex `q`,
//!
//! ```text
//! x = stride · (alpha · (max(a1,0)·qx + a2·qy + a3) + j + 0.5)
//! y = stride · (alpha · (a4·qx + max(a5,0)·qy + a6) + i + 0.5)
//! ```
//!
//! [`encode_target`] is the inverse used for training targets and round-trip
//! tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonical_square, fit_affine, point_in_polygon, quad_iou, Point2, Quad};
use crate::scalar::Scalar;

pub const CHANNELS: usize = 7;
pub const DEFAULT_STRIDE: u32 = 16;
pub const DEFAULT_ALPHA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionGrid<T> {
    rows: usize,
    cols: usize,
    stride: u32,
    alpha: T,
    cells: Vec<T>,
}

impl<T: Scalar> DetectionGrid<T> {
    /// Validates shape, geometry parameters and probability range.
    pub fn new(rows: usize, cols: usize, stride: u32, alpha: T, cells: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch(format!(
                "grid dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidParameter("grid stride must be at least 1".into()));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("grid alpha must be positive, got {alpha}")));
        }
        let want = rows * cols * CHANNELS;
        if cells.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols}x{CHANNELS} grid needs {want} values, got {}",
                cells.len()
            )));
        }
        for (k, cell) in cells.chunks_exact(CHANNELS).enumerate() {
            if let Some(v) = cell.iter().find(|v| !v.is_finite()) {
                return Err(Error::OutOfRange(format!(
                    "cell ({}, {}) holds non-finite value {v}",
                    k / cols,
                    k % cols
                )));
            }
            let p = cell[0];
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::OutOfRange(format!(
                    "cell ({}, {}) probability {p} outside [0, 1]",
                    k / cols,
                    k % cols
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            stride,
            alpha,
            cells,
        })
    }

    pub fn zeros(rows: usize, cols: usize, stride: u32, alpha: T) -> Result<Self> {
        Self::new(rows, cols, stride, alpha, vec![T::zero(); rows * cols * CHANNELS])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Row-major `rows × cols × 7` values.
    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    fn check_index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::InvalidCell {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok((row * self.cols + col) * CHANNELS)
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<&[T]> {
        let o = self.check_index(row, col)?;
        Ok(&self.cells[o..o + CHANNELS])
    }

    /// Overwrites one cell; the probability must lie in `[0, 1]`.
    pub fn set_cell(&mut self, row: usize, col: usize, values: [T; CHANNELS]) -> Result<()> {
        let o = self.check_index(row, col)?;
        if !(values[0] >= T::zero() && values[0] <= T::one()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "cell ({row}, {col}) values {values:?} invalid"
            )));
        }
        self.cells[o..o + CHANNELS].copy_from_slice(&values);
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> DetectionGrid<U> {
        DetectionGrid {
            rows: self.rows,
            cols: self.cols,
            stride: self.stride,
            alpha: U::lit(self.alpha.as_f64()),
            cells: self.cells.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub quad: Quad<T>,
    pub confidence: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub conf_threshold: f64,
    pub nms_iou: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.35,
            nms_iou: 0.3,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("conf_threshold", self.conf_threshold), ("nms_iou", self.nms_iou)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Decodes one cell into a quad in image pixels. Coordinates are not clipped
/// to the image.
pub fn decode_cell<T: Scalar>(grid: &DetectionGrid<T>, row: usize, col: usize) -> Result<Detection<T>> {
    let c = grid.cell(row, col)?;
    let a1 = c[1].max(T::zero());
    let a5 = c[5].max(T::zero());
    let (a2, a3, a4, a6) = (c[2], c[3], c[4], c[6]);
    let stride = T::lit(grid.stride as f64);
    let half = T::lit(0.5);
    let cx = T::lit(col as f64) + half;
    let cy = T::lit(row as f64) + half;
    let alpha = grid.alpha;
    let quad = Quad::new(canonical_square::<T>().map(|q| {
        Point2::new(
            stride * (alpha * (a1 * q.x + a2 * q.y + a3) + cx),
            stride * (alpha * (a4 * q.x + a5 * q.y + a6) + cy),
        )
    }));
    Ok(Detection {
        quad,
        confidence: c[0],
    })
}

/// All cells at or above the confidence threshold, by descending confidence;
/// ties keep row-major order.
pub fn decode_grid<T: Scalar>(grid: &DetectionGrid<T>, cfg: &DecodeConfig) -> Vec<Detection<T>> {
    let threshold = T::lit(cfg.conf_threshold);
    let mut out = Vec::new();
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let o = (row * grid.cols + col) * CHANNELS;
            if grid.cells[o] >= threshold {
                out.push(decode_cell(grid, row, col).expect("index in range"));
            }
        }
    }
    sort_by_confidence(&mut out);
    out
}

fn sort_by_confidence<T: Scalar>(dets: &mut [Detection<T>]) {
    dets.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap_or(std::cmp::Ordering::Equal));
}

/// Greedy non-maximum suppression: a candidate survives iff its IoU with every
/// previously kept detection is below `iou_thresh`.
pub fn nms<T: Scalar>(cands: &[Detection<T>], iou_thresh: f64) -> Vec<Detection<T>> {
    let thresh = T::lit(iou_thresh);
    let mut sorted = cands.to_vec();
    sort_by_confidence(&mut sorted);
    let mut kept: Vec<Detection<T>> = Vec::new();
    for d in sorted {
        if kept.iter().all(|k| quad_iou(&k.quad, &d.quad) < thresh) {
            kept.push(d);
        }
    }
    kept
}

/// Highest-confidence detection; the earliest wins ties.
pub fn select_top<T: Scalar>(cands: &[Detection<T>]) -> Option<Detection<T>> {
    let mut best: Option<&Detection<T>> = None;
    for d in cands {
        if best.is_none_or(|b| d.confidence > b.confidence) {
            best = Some(d);
        }
    }
    best.copied()
}

/// decode → NMS → top-1.
pub fn detect<T: Scalar>(grid: &DetectionGrid<T>, cfg: &DecodeConfig) -> Option<Detection<T>> {
    select_top(&nms(&decode_grid(grid, cfg), cfg.nms_iou))
}

/// Ground-truth grid for `quad`: every cell whose center lies inside the quad
/// gets probability 1 and the least-squares affine parameters of the quad in
/// that cell's normalized frame; all other cells are zero.
pub fn encode_target<T: Scalar>(
    quad: &Quad<T>,
    rows: usize,
    cols: usize,
    stride: u32,
    alpha: T,
) -> Result<DetectionGrid<T>> {
    let mut grid = DetectionGrid::zeros(rows, cols, stride, alpha)?;
    if !quad.is_finite() {
        return Err(crate::geometry::GeometryError::NonFinite.into());
    }
    let s = T::lit(stride as f64);
    let half = T::lit(0.5);
    let canonical = canonical_square::<T>();
    for row in 0..rows {
        let cy = T::lit(row as f64) + half;
        for col in 0..cols {
            let cx = T::lit(col as f64) + half;
            if !point_in_polygon(Point2::new(cx * s, cy * s), &quad.vertices) {
                continue;
            }
            let local = quad.vertices.map(|p| Point2::new((p.x / s - cx) / alpha, (p.y / s - cy) / alpha));
            let a = fit_affine(&canonical, &local)?;
            let [a1, a2, a3, a4, a5, a6] = a.0;
            grid.set_cell(row, col, [T::one(), a1, a2, a3, a4, a5, a6])?;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_with(rows: usize, cols: usize, stride: u32, alpha: f64, cells: &[(usize, usize, [f64; 7])]) -> DetectionGrid<f64> {
        let mut g = DetectionGrid::zeros(rows, cols, stride, alpha).unwrap();
        for &(r, c, v) in cells {
            g.set_cell(r, c, v).unwrap();
        }
        g
    }

    const UNIT: [f64; 7] = [1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

    #[test]
    fn decode_reference_cell() {
        let g = grid_with(1, 1, 16, 4.0, &[(0, 0, UNIT)]);
        let d = decode_cell(&g, 0, 0).unwrap();
        assert_eq!(d.confidence, 1.0);
        assert_eq!(d.quad, Quad::from_xy([[-24.0, -24.0], [40.0, -24.0], [40.0, 40.0], [-24.0, 40.0]]));
        assert_eq!(d.quad.centroid(), Point2::new(8.0, 8.0));
    }

    #[test]
    fn unit_alpha_gives_stride_square() {
        let g = grid_with(3, 4, 16, 1.0, &[(1, 2, UNIT)]);
        let d = decode_cell(&g, 1, 2).unwrap();
        assert_eq!(d.quad, Quad::rect(32.0, 16.0, 48.0, 32.0));
    }

    #[test]
    fn negative_diagonal_is_clamped() {
        let mut neg = UNIT;
        neg[1] = -2.0;
        let mut zero = UNIT;
        zero[1] = 0.0;
        let a = decode_cell(&grid_with(1, 1, 16, 4.0, &[(0, 0, neg)]), 0, 0).unwrap();
        let b = decode_cell(&grid_with(1, 1, 16, 4.0, &[(0, 0, zero)]), 0, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.quad.vertices[0].x, a.quad.vertices[1].x);
    }

    #[test]
    fn decode_out_of_range() {
        let g = grid_with(2, 2, 16, 4.0, &[]);
        assert!(matches!(decode_cell(&g, 2, 0), Err(Error::InvalidCell { .. })));
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(
            DetectionGrid::new(1, 1, 16, 4.0, vec![0.0; 6]),
            Err(Error::ShapeMismatch(_))
        ));
        let mut v = vec![0.0; 7];
        v[0] = 1.5;
        assert!(matches!(DetectionGrid::new(1, 1, 16, 4.0, v), Err(Error::OutOfRange(_))));
        assert!(DetectionGrid::new(1, 1, 0, 4.0, vec![0.0; 7]).is_err());
        assert!(DetectionGrid::new(1, 1, 16, 0.0, vec![0.0; 7]).is_err());
    }

    #[test]
    fn decode_grid_filters_and_orders() {
        let empty = grid_with(4, 4, 16, 4.0, &[]);
        assert!(decode_grid(&empty, &DecodeConfig::default()).is_empty());

        let mut low = UNIT;
        low[0] = 0.2;
        let mut mid = UNIT;
        mid[0] = 0.6;
        let g = grid_with(4, 4, 16, 4.0, &[(0, 0, low), (2, 1, mid), (1, 3, mid), (3, 3, UNIT)]);
        let single = grid_with(4, 4, 16, 4.0, &[(0, 0, low), (3, 3, UNIT)]);
        let one = decode_grid(&single, &DecodeConfig::default());
        assert_eq!(one, vec![decode_cell(&single, 3, 3).unwrap()]);

        let all = decode_grid(&g, &DecodeConfig::default());
        let order: Vec<Point2<f64>> = all.iter().map(|d| d.quad.centroid()).collect();
        assert_eq!(
            order,
            vec![
                Point2::new(56.0, 56.0),
                Point2::new(56.0, 24.0),
                Point2::new(24.0, 40.0)
            ]
        );
    }

    #[test]
    fn nms_examples() {
        let d = Detection {
            quad: Quad::rect(0.0, 0.0, 10.0, 10.0),
            confidence: 0.8,
        };
        assert_eq!(nms(&[d], 0.3), vec![d]);
        let better = Detection { confidence: 0.9, ..d };
        let kept = nms(&[d, better], 0.3);
        assert_eq!(kept, vec![better]);
        let far = Detection {
            quad: Quad::rect(100.0, 0.0, 110.0, 10.0),
            confidence: 0.1,
        };
        assert_eq!(nms(&[far, d, better], 0.3), vec![better, far]);
    }

    #[test]
    fn select_top_examples() {
        assert_eq!(select_top::<f64>(&[]), None);
        let mk = |c: f64, x: f64| Detection {
            quad: Quad::rect(x, 0.0, x + 1.0, 1.0),
            confidence: c,
        };
        let cands = [mk(0.2, 0.0), mk(0.9, 1.0), mk(0.5, 2.0)];
        assert_eq!(select_top(&cands), Some(cands[1]));
        let tied = [mk(0.9, 0.0), mk(0.9, 1.0)];
        assert_eq!(select_top(&tied), Some(tied[0]));
    }

    #[test]
    fn encode_empty_and_identity() {
        let far = Quad::rect(1000.0, 1000.0, 1010.0, 1010.0);
        let g = encode_target(&far, 4, 4, 16, 4.0).unwrap();
        assert!(g.cells().iter().all(|&v| v == 0.0));

        // Side alpha*stride = 64 centered on the center of cell (2, 3): (56, 40).
        let q = Quad::rect(24.0, 8.0, 88.0, 72.0);
        let g = encode_target(&q, 6, 8, 16, 4.0).unwrap();
        let c = g.cell(2, 3).unwrap();
        for (got, want) in c.iter().zip(UNIT) {
            assert!((got - want).abs() < 1e-9, "{c:?}");
        }
        let d = decode_cell(&g, 2, 3).unwrap();
        assert!(quad_iou(&d.quad, &q) > 1.0 - 1e-9);
    }

    #[test]
    fn decode_is_linear_when_clamps_inactive() {
        let p = [0.7, 1.2, 0.1, -0.3, 0.2, 0.9, 0.4];
        let q = [0.7, 0.8, -0.2, 0.5, -0.1, 1.4, -0.6];
        let avg: [f64; 7] = std::array::from_fn(|k| 0.5 * (p[k] + q[k]));
        let dp = decode_cell(&grid_with(3, 3, 8, 2.5, &[(1, 1, p)]), 1, 1).unwrap();
        let dq = decode_cell(&grid_with(3, 3, 8, 2.5, &[(1, 1, q)]), 1, 1).unwrap();
        let da = decode_cell(&grid_with(3, 3, 8, 2.5, &[(1, 1, avg)]), 1, 1).unwrap();
        for k in 0..4 {
            let mid = (dp.quad.vertices[k] + dq.quad.vertices[k]) * 0.5;
            assert!((mid - da.quad.vertices[k]).norm() < 1e-9);
        }
    }
}
