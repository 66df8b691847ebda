//! Projects a document quad onto an upright rectangle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{homography_from_quads, Homography, Point2, Quad};
use crate::raster::{warp_perspective, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RectifyConfig {
    /// Width over height of the canonical document.
    pub aspect: f64,
    pub target_width: u32,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        Self {
            aspect: 1.5,
            target_width: 600,
        }
    }
}

impl RectifyConfig {
    /// `(target_width, round(target_width / aspect))`.
    pub fn output_dims(&self) -> Result<(u32, u32)> {
        if !(self.aspect > 0.0) || !self.aspect.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "aspect must be positive, got {}",
                self.aspect
            )));
        }
        if self.target_width < 8 {
            return Err(Error::InvalidParameter(format!(
                "target width must be at least 8, got {}",
                self.target_width
            )));
        }
        let h = (self.target_width as f64 / self.aspect).round().max(1.0) as u32;
        Ok((self.target_width, h))
    }
}

/// Homography taking the quad's TL, TR, BR, BL onto the output corners
/// `(0,0), (W−1,0), (W−1,H−1), (0,H−1)`.
pub fn rectify_homography(quad: &Quad<f64>, cfg: &RectifyConfig) -> Result<Homography<f64>> {
    let (w, h) = cfg.output_dims()?;
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    let corners = [
        Point2::new(0.0, 0.0),
        Point2::new(wf, 0.0),
        Point2::new(wf, hf),
        Point2::new(0.0, hf),
    ];
    Ok(homography_from_quads(&quad.vertices, &corners)?)
}

pub fn rectify_document(img: &ImageBuffer, quad: &Quad<f64>, cfg: &RectifyConfig) -> Result<ImageBuffer> {
    let (w, h) = cfg.output_dims()?;
    let hom = rectify_homography(quad, cfg)?;
    warp_perspective(img, &hom, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryError;

    #[test]
    fn dims_depend_only_on_config() {
        let cfg = RectifyConfig::default();
        assert_eq!(cfg.output_dims().unwrap(), (600, 400));
        let odd = RectifyConfig {
            aspect: 1.58,
            target_width: 100,
        };
        assert_eq!(odd.output_dims().unwrap(), (100, 63));
        assert!(RectifyConfig { aspect: 0.0, ..cfg }.output_dims().is_err());
        assert!(RectifyConfig { target_width: 7, ..cfg }.output_dims().is_err());
    }

    #[test]
    fn aligned_rectangle_is_identity_copy() {
        let cfg = RectifyConfig {
            aspect: 1.5,
            target_width: 48,
        };
        let img = ImageBuffer::from_fn(48, 32, |x, y| [(x * 5) as u8, (y * 7) as u8, ((x * y) % 251) as u8]).unwrap();
        let quad = Quad::rect(0.0, 0.0, 47.0, 31.0);
        let out = rectify_document(&img, &quad, &cfg).unwrap();
        for (a, b) in img.pixels().iter().zip(out.pixels()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn collinear_quad_is_degenerate() {
        let img = ImageBuffer::filled(10, 10, [0; 3]).unwrap();
        let quad = Quad::from_xy([[0.0, 0.0], [5.0, 0.0], [9.0, 0.0], [0.0, 9.0]]);
        let err = rectify_document(&img, &quad, &RectifyConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Geometry(GeometryError::DegenerateQuad(_))));
    }
}
