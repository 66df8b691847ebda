//! Online augmentation: random crop containing the object, random 3D
//! rotation, photometric perturbation, applied in that order.
//!
//! Every geometric stage builds a single homography that is applied to both
//! the image and the quad, so the annotation always tracks the pixels. After
//! each stage all quad vertices lie at least [`MARGIN`] pixels inside the
//! lattice `[0, w−1] × [0, h−1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_homography, Homography, Point2, Quad, RotationAngles};
use crate::raster::{gaussian_blur, hsv_adjust, negate, warp_perspective_with_fill, ImageBuffer, Rgb, BLACK};
use crate::rng::Draws;

/// Distance kept between quad vertices and the outermost pixel centers.
pub const MARGIN: f64 = 1.0;

/// Roll never exceeds this, whatever the pitch/yaw bound.
pub const ROLL_CAP: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Maximum |pitch| and |yaw| in degrees.
    pub sigma: f64,
    /// Maximum |roll| in degrees; always `min(sigma, 45)`.
    pub roll_max: f64,
    pub photometric_enabled: bool,
    pub p_negative: f64,
    pub p_blur: f64,
    pub p_hsv: f64,
    pub hue_shift_max: f64,
    pub sat_scale_range: (f64, f64),
    pub val_scale_range: (f64, f64),
    pub blur_sigma_range: (f64, f64),
    pub out_w: u32,
    pub out_h: u32,
    /// Fraction of the output width spanned by the object after cropping.
    pub object_fill_range: (f64, f64),
    /// Pinhole focal length for the 3D rotation; `max(out_w, out_h)` when unset.
    pub focal: Option<f64>,
    /// Color of regions exposed by the warps.
    pub fill: Rgb,
}

impl AugmentConfig {
    pub fn new(sigma: f64, photometric_enabled: bool, out_w: u32, out_h: u32) -> Self {
        Self {
            sigma,
            roll_max: sigma.min(ROLL_CAP),
            photometric_enabled,
            p_negative: 0.05,
            p_blur: 0.15,
            p_hsv: 1.0,
            hue_shift_max: 36.0,
            sat_scale_range: (0.7, 1.3),
            val_scale_range: (0.7, 1.3),
            blur_sigma_range: (0.5, 2.0),
            out_w,
            out_h,
            object_fill_range: (0.4, 0.85),
            focal: None,
            fill: BLACK,
        }
    }

    /// Same configuration with a new pitch/yaw bound and the matching roll clamp.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self.roll_max = sigma.min(ROLL_CAP);
        self
    }

    pub fn focal_length(&self) -> f64 {
        self.focal.unwrap_or(self.out_w.max(self.out_h) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(0.0..90.0).contains(&self.sigma) {
            return bad(format!("sigma must lie in [0, 90), got {}", self.sigma));
        }
        if self.roll_max != self.sigma.min(ROLL_CAP) {
            return bad(format!(
                "roll_max must equal min(sigma, {ROLL_CAP}) = {}, got {}",
                self.sigma.min(ROLL_CAP),
                self.roll_max
            ));
        }
        for (name, p) in [("p_negative", self.p_negative), ("p_blur", self.p_blur), ("p_hsv", self.p_hsv)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.hue_shift_max >= 0.0) {
            return bad(format!("hue_shift_max must be nonnegative, got {}", self.hue_shift_max));
        }
        for (name, (lo, hi), min) in [
            ("sat_scale_range", self.sat_scale_range, 0.0),
            ("val_scale_range", self.val_scale_range, 0.0),
            ("blur_sigma_range", self.blur_sigma_range, f64::MIN_POSITIVE),
            ("object_fill_range", self.object_fill_range, f64::MIN_POSITIVE),
        ] {
            if !(lo >= min && hi >= lo && hi.is_finite()) {
                return bad(format!("{name} must be an ordered range, got ({lo}, {hi})"));
            }
        }
        if self.object_fill_range.1 > 1.0 {
            return bad("object_fill_range cannot exceed 1".into());
        }
        if (self.out_w as f64) < 2.0 * MARGIN + 2.0 || (self.out_h as f64) < 2.0 * MARGIN + 2.0 {
            return bad(format!("output {}x{} too small", self.out_w, self.out_h));
        }
        if let Some(f) = self.focal {
            if !(f > 0.0) || !f.is_finite() {
                return bad(format!("focal length must be positive, got {f}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ImageBuffer,
    pub quad: Quad<f64>,
}

impl Sample {
    /// All vertices at least `margin` pixels inside the pixel-center lattice.
    pub fn quad_inside(&self, margin: f64) -> bool {
        quad_inside(&self.quad, self.image.width(), self.image.height(), margin)
    }
}

fn quad_inside(q: &Quad<f64>, w: u32, h: u32, margin: f64) -> bool {
    let (max_x, max_y) = ((w - 1) as f64 - margin, (h - 1) as f64 - margin);
    q.vertices
        .iter()
        .all(|p| p.x >= margin && p.x <= max_x && p.y >= margin && p.y <= max_y)
}

/// Scales the object so its bounding box spans a drawn fraction of the output
/// width, then drops it at a random offset inside the output canvas.
pub fn random_crop(s: &Sample, rng: &mut impl Draws, cfg: &AugmentConfig) -> Result<Sample> {
    random_crop_traced(s, rng, cfg).map(|(s, _)| s)
}

/// [`random_crop`] together with the similarity applied.
pub fn random_crop_traced(
    s: &Sample,
    rng: &mut impl Draws,
    cfg: &AugmentConfig,
) -> Result<(Sample, Homography<f64>)> {
    cfg.validate()?;
    s.quad.validate()?;
    let (lo, hi) = s.quad.bounds();
    let (bw, bh) = (hi.x - lo.x, hi.y - lo.y);
    let (out_w, out_h) = (cfg.out_w as f64, cfg.out_h as f64);
    let avail_w = out_w - 1.0 - 2.0 * MARGIN;
    let avail_h = out_h - 1.0 - 2.0 * MARGIN;

    let fill_cap = (avail_w / out_w).min(avail_h * bw / (bh * out_w));
    let (fill_lo, fill_hi) = cfg.object_fill_range;
    if fill_cap < fill_lo {
        return Err(Error::ObjectTooLarge);
    }
    let fill = rng.uniform(fill_lo, fill_hi.min(fill_cap));
    let scale = fill * out_w / bw;
    let x0 = rng.uniform(MARGIN, MARGIN + (avail_w - scale * bw).max(0.0));
    let y0 = rng.uniform(MARGIN, MARGIN + (avail_h - scale * bh).max(0.0));

    let h = Homography::from_rows([
        [scale, 0.0, x0 - scale * lo.x],
        [0.0, scale, y0 - scale * lo.y],
        [0.0, 0.0, 1.0],
    ]);
    let quad = s.quad.try_map(|p| h.apply(p))?;
    let image = warp_perspective_with_fill(&s.image, &h, cfg.out_w, cfg.out_h, cfg.fill)?;
    Ok((Sample { image, quad }, h))
}

/// Roll from `U(−roll_max, roll_max)`, then pitch and yaw from `U(−σ, σ)`.
pub fn draw_rotation(rng: &mut impl Draws, cfg: &AugmentConfig) -> RotationAngles<f64> {
    let roll = rng.uniform(-cfg.roll_max, cfg.roll_max);
    let pitch = rng.uniform(-cfg.sigma, cfg.sigma);
    let yaw = rng.uniform(-cfg.sigma, cfg.sigma);
    RotationAngles::new(roll, pitch, yaw)
}

pub fn random_3d_rotation(s: &Sample, rng: &mut impl Draws, cfg: &AugmentConfig) -> Result<Sample> {
    random_3d_rotation_traced(s, rng, cfg).map(|(s, _, _)| s)
}

/// [`random_3d_rotation`] together with the composed homography (rotation,
/// then canvas fit) and the drawn angles.
pub fn random_3d_rotation_traced(
    s: &Sample,
    rng: &mut impl Draws,
    cfg: &AugmentConfig,
) -> Result<(Sample, Homography<f64>, RotationAngles<f64>)> {
    cfg.validate()?;
    let (w, h) = (s.image.width(), s.image.height());
    let angles = draw_rotation(rng, cfg);
    let center = Point2::new((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let focal = cfg.focal.unwrap_or(w.max(h) as f64);
    let rot = rotation_homography(angles, center, focal)?;

    let rotated = s.quad.try_map(|p| rot.apply(p))?;
    let hom = rot.then(&canvas_fit(&rotated, w, h));
    let quad = s.quad.try_map(|p| hom.apply(p))?;
    let image = if hom == Homography::identity() {
        s.image.clone()
    } else {
        warp_perspective_with_fill(&s.image, &hom, w, h, cfg.fill)?
    };
    Ok((Sample { image, quad }, hom, angles))
}

/// Similarity that brings the quad's bounding box inside the margins of a
/// `w × h` canvas, shrinking about the box center only when it is too large.
/// Identity when the quad already fits.
pub fn canvas_fit(q: &Quad<f64>, w: u32, h: u32) -> Homography<f64> {
    if quad_inside(q, w, h, MARGIN) {
        return Homography::identity();
    }
    let (lo, hi) = q.bounds();
    let (bw, bh) = (hi.x - lo.x, hi.y - lo.y);
    let (max_x, max_y) = ((w - 1) as f64 - MARGIN, (h - 1) as f64 - MARGIN);
    // A little slack so rounding in the composed map cannot push a vertex out.
    let slack = 1e-6;
    let s = 1.0_f64
        .min((max_x - MARGIN - 2.0 * slack) / bw)
        .min((max_y - MARGIN - 2.0 * slack) / bh);
    let c = Point2::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y));
    let shift = |center: f64, half: f64, lo_lim: f64, hi_lim: f64| {
        let (a, b) = (center - half, center + half);
        (lo_lim + slack - a).max(0.0) - (b - (hi_lim - slack)).max(0.0)
    };
    let dx = shift(c.x, 0.5 * s * bw, MARGIN, max_x);
    let dy = shift(c.y, 0.5 * s * bh, MARGIN, max_y);
    Homography::from_rows([
        [s, 0.0, c.x - s * c.x + dx],
        [0.0, s, c.y - s * c.y + dy],
        [0.0, 0.0, 1.0],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvParams {
    pub hue_shift: f64,
    pub sat_scale: f64,
    pub val_scale: f64,
}

/// Which photometric operations fire, with their parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhotometricPlan {
    pub negate: bool,
    pub blur_sigma: Option<f64>,
    pub hsv: Option<HsvParams>,
}

/// Independent Bernoulli draws for negative, blur and HSV, each followed by
/// its parameter draws when it fires.
pub fn draw_photometric(rng: &mut impl Draws, cfg: &AugmentConfig) -> PhotometricPlan {
    let negate = rng.chance(cfg.p_negative);
    let blur_sigma = rng
        .chance(cfg.p_blur)
        .then(|| rng.uniform(cfg.blur_sigma_range.0, cfg.blur_sigma_range.1));
    let hsv = rng.chance(cfg.p_hsv).then(|| HsvParams {
        hue_shift: rng.uniform(-cfg.hue_shift_max, cfg.hue_shift_max),
        sat_scale: rng.uniform(cfg.sat_scale_range.0, cfg.sat_scale_range.1),
        val_scale: rng.uniform(cfg.val_scale_range.0, cfg.val_scale_range.1),
    });
    PhotometricPlan {
        negate,
        blur_sigma,
        hsv,
    }
}

/// Applies negate, blur, HSV in that fixed order.
pub fn apply_photometric(img: &ImageBuffer, plan: &PhotometricPlan) -> Result<ImageBuffer> {
    let mut out = if plan.negate { negate(img) } else { img.clone() };
    if let Some(sigma) = plan.blur_sigma {
        out = gaussian_blur(&out, sigma)?;
    }
    if let Some(p) = plan.hsv {
        out = hsv_adjust(&out, p.hue_shift, p.sat_scale, p.val_scale)?;
    }
    Ok(out)
}

/// Draws and applies a photometric plan. Returns the input unchanged (and
/// draws nothing) when photometric augmentation is disabled.
pub fn photometric(img: &ImageBuffer, rng: &mut impl Draws, cfg: &AugmentConfig) -> Result<ImageBuffer> {
    if !cfg.photometric_enabled {
        return Ok(img.clone());
    }
    cfg.validate()?;
    apply_photometric(img, &draw_photometric(rng, cfg))
}

/// Everything one augmentation pass did.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentTrace {
    pub sample: Sample,
    /// Input coordinates to output coordinates (crop, then rotation).
    pub homography: Homography<f64>,
    pub angles: RotationAngles<f64>,
    pub photometric: Option<PhotometricPlan>,
}

pub fn augment_sample(s: &Sample, rng: &mut impl Draws, cfg: &AugmentConfig) -> Result<Sample> {
    augment_sample_traced(s, rng, cfg).map(|t| t.sample)
}

pub fn augment_sample_traced(s: &Sample, rng: &mut impl Draws, cfg: &AugmentConfig) -> Result<AugmentTrace> {
    let (cropped, crop_h) = random_crop_traced(s, rng, cfg)?;
    let (rotated, rot_h, angles) = random_3d_rotation_traced(&cropped, rng, cfg)?;
    let (image, plan) = if cfg.photometric_enabled {
        let plan = draw_photometric(rng, cfg);
        (apply_photometric(&rotated.image, &plan)?, Some(plan))
    } else {
        (rotated.image, None)
    };
    Ok(AugmentTrace {
        sample: Sample {
            image,
            quad: rotated.quad,
        },
        homography: crop_h.then(&rot_h),
        angles,
        photometric: plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Centered, SeededRng};

    fn doc_sample() -> Sample {
        let image = ImageBuffer::from_fn(120, 80, |x, y| [(x * 2) as u8, (y * 3) as u8, 90]).unwrap();
        Sample {
            image,
            quad: Quad::rect(20.0, 15.0, 100.0, 65.0),
        }
    }

    #[test]
    fn roll_is_clamped() {
        assert_eq!(AugmentConfig::new(30.0, false, 64, 64).roll_max, 30.0);
        assert_eq!(AugmentConfig::new(75.0, false, 64, 64).roll_max, 45.0);
        assert_eq!(AugmentConfig::new(15.0, false, 64, 64).with_sigma(55.0).roll_max, 45.0);
    }

    #[test]
    fn config_validation() {
        let ok = AugmentConfig::new(30.0, true, 64, 48);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.p_blur = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.roll_max = 60.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.object_fill_range = (0.8, 0.4);
        assert!(bad.validate().is_err());
        assert!(ok.clone().with_sigma(-1.0).validate().is_err());
    }

    #[test]
    fn centered_crop_is_centered() {
        let mut cfg = AugmentConfig::new(0.0, false, 200, 150);
        cfg.object_fill_range = (0.5, 0.5);
        let out = random_crop(&doc_sample(), &mut Centered, &cfg).unwrap();
        let c = out.quad.centroid();
        assert!((c.x - 99.5).abs() < 0.5 && (c.y - 74.5).abs() < 0.5, "{c:?}");
        let (lo, hi) = out.quad.bounds();
        assert!(((hi.x - lo.x) / 200.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crop_rejects_tall_objects() {
        let mut cfg = AugmentConfig::new(0.0, false, 400, 40);
        cfg.object_fill_range = (0.5, 0.8);
        let tall = Sample {
            quad: Quad::rect(50.0, 2.0, 60.0, 78.0),
            ..doc_sample()
        };
        assert!(matches!(random_crop(&tall, &mut SeededRng::new(1), &cfg), Err(Error::ObjectTooLarge)));
    }

    #[test]
    fn zero_sigma_rotation_is_identity() {
        let cfg = AugmentConfig::new(0.0, false, 120, 80);
        let s = doc_sample();
        let (out, h, angles) = random_3d_rotation_traced(&s, &mut SeededRng::new(3), &cfg).unwrap();
        assert_eq!(h, Homography::identity());
        assert_eq!(angles.roll, 0.0);
        assert_eq!(out, s);
    }

    #[test]
    fn canvas_fit_contains_oversized_quads() {
        let big = Quad::from_xy([[-40.0, 10.0], [130.0, -5.0], [150.0, 90.0], [-10.0, 70.0]]);
        let fit = canvas_fit(&big, 120, 80);
        let q = big.map(|p| fit.apply(p).unwrap());
        assert!(quad_inside(&q, 120, 80, MARGIN));
        let shifted = Quad::rect(-10.0, 10.0, 30.0, 30.0);
        let fit = canvas_fit(&shifted, 120, 80);
        assert_eq!(fit.m[0][0], 1.0, "small quads are only translated");
        assert!(quad_inside(&shifted.map(|p| fit.apply(p).unwrap()), 120, 80, MARGIN));
    }

    #[test]
    fn photometric_forced_branches() {
        let s = doc_sample();
        let mut cfg = AugmentConfig::new(0.0, true, 120, 80);
        cfg.p_negative = 0.0;
        cfg.p_blur = 0.0;
        cfg.p_hsv = 0.0;
        let mut rng = SeededRng::new(9);
        assert_eq!(photometric(&s.image, &mut rng, &cfg).unwrap(), s.image);
        cfg.p_negative = 1.0;
        assert_eq!(photometric(&s.image, &mut rng, &cfg).unwrap(), negate(&s.image));
    }

    #[test]
    fn photometric_disabled_is_identity() {
        let s = doc_sample();
        let cfg = AugmentConfig::new(0.0, false, 120, 80);
        assert_eq!(photometric(&s.image, &mut SeededRng::new(2), &cfg).unwrap(), s.image);
    }
}
