//! 8-bit interleaved RGB images: bilinear sampling, inverse-mapped
//! perspective warps and the photometric primitives (negative, Gaussian blur,
//! HSV adjustment).

use std::fmt;
use std::path::Path;

use crate::dataset_io::write_atomic;
use crate::error::{Error, Result};
use crate::geometry::{GeometryError, Homography};

pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];

#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    pub fn filled(width: u32, height: u32, color: Rgb) -> Result<Self> {
        check_dims(width, height)?;
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        let want = width as usize * height as usize * 3;
        if pixels.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} RGB image needs {want} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgb) -> Result<Self> {
        check_dims(width, height)?;
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    /// Panics when `(x, y)` is outside the image.
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, c: Rgb) {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&c);
    }

    pub fn map_pixels(&self, mut f: impl FnMut(Rgb) -> Rgb) -> Self {
        let mut out = self.clone();
        for px in out.pixels.chunks_exact_mut(3) {
            let c = f([px[0], px[1], px[2]]);
            px.copy_from_slice(&c);
        }
        out
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "image dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear interpolation of the four lattice neighbors of `(x, y)`.
///
/// Coordinates outside `[0, w−1] × [0, h−1]` (or NaN) return `fill`.
pub fn bilinear_sample(img: &ImageBuffer, x: f64, y: f64, fill: Rgb) -> [f64; 3] {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    if !(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y) {
        return fill.map(f64::from);
    }
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;

    let p = &img.pixels;
    let o00 = img.offset(x0, y0);
    let o10 = img.offset(x1, y0);
    let o01 = img.offset(x0, y1);
    let o11 = img.offset(x1, y1);
    let mut out = [0.0; 3];
    for (c, v) in out.iter_mut().enumerate() {
        let top = p[o00 + c] as f64 * (1.0 - fx) + p[o10 + c] as f64 * fx;
        let bottom = p[o01 + c] as f64 * (1.0 - fx) + p[o11 + c] as f64 * fx;
        *v = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Warps `img` into an `out_w × out_h` canvas. `h` maps source coordinates to
/// output coordinates; every output pixel samples the source at `h⁻¹(u, v)`.
/// Exposed regions are black.
pub fn warp_perspective(
    img: &ImageBuffer,
    h: &Homography<f64>,
    out_w: u32,
    out_h: u32,
) -> Result<ImageBuffer> {
    warp_perspective_with_fill(img, h, out_w, out_h, BLACK)
}

pub fn warp_perspective_with_fill(
    img: &ImageBuffer,
    h: &Homography<f64>,
    out_w: u32,
    out_h: u32,
    fill: Rgb,
) -> Result<ImageBuffer> {
    check_dims(out_w, out_h)?;
    if !h.is_finite() {
        return Err(GeometryError::NonFinite.into());
    }
    let inv = h.inverse()?.m;
    let mut pixels = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for v in 0..out_h {
        let vf = v as f64;
        // Numerators and denominator are affine in u along a row.
        let bx = inv[0][1] * vf + inv[0][2];
        let by = inv[1][1] * vf + inv[1][2];
        let bw = inv[2][1] * vf + inv[2][2];
        for u in 0..out_w {
            let uf = u as f64;
            let w = inv[2][0] * uf + bw;
            let px = if w.abs() > 1e-12 {
                let x = (inv[0][0] * uf + bx) / w;
                let y = (inv[1][0] * uf + by) / w;
                bilinear_sample(img, x, y, fill).map(to_u8)
            } else {
                fill
            };
            pixels.extend_from_slice(&px);
        }
    }
    ImageBuffer::from_raw(out_w, out_h, pixels)
}

pub fn negate(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for v in &mut out.pixels {
        *v = 255 - *v;
    }
    out
}

/// Normalized 1-D Gaussian taps for offsets `−r..=r`, `r = ⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    Ok(k)
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    let k = gaussian_kernel(sigma)?;
    let r = (k.len() / 2) as i64;
    let (w, h) = (img.width as i64, img.height as i64);
    let src = &img.pixels;

    let mut tmp = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (t, &kv) in k.iter().enumerate() {
                let sx = (x + t as i64 - r).clamp(0, w - 1);
                let o = ((y * w + sx) * 3) as usize;
                for c in 0..3 {
                    acc[c] += kv * src[o + c] as f64;
                }
            }
            let o = ((y * w + x) * 3) as usize;
            for c in 0..3 {
                tmp[o + c] = acc[c] as f32;
            }
        }
    }

    let mut pixels = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (t, &kv) in k.iter().enumerate() {
                let sy = (y + t as i64 - r).clamp(0, h - 1);
                let o = ((sy * w + x) * 3) as usize;
                for c in 0..3 {
                    acc[c] += kv * tmp[o + c] as f64;
                }
            }
            let o = ((y * w + x) * 3) as usize;
            for c in 0..3 {
                pixels[o + c] = to_u8(acc[c]);
            }
        }
    }
    ImageBuffer::from_raw(img.width, img.height, pixels)
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvPixel {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

pub fn rgb_to_hsv(c: Rgb) -> HsvPixel {
    let [r, g, b] = c.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    HsvPixel {
        h: h.rem_euclid(360.0),
        s,
        v: max,
    }
}

pub fn hsv_to_rgb(p: HsvPixel) -> Rgb {
    let c = p.v * p.s;
    let hp = p.h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = p.v - c;
    [r, g, b].map(|v| to_u8((v + m) * 255.0))
}

/// Rotates hue by `hue_shift` degrees and scales saturation and value,
/// clamping both to `[0, 1]`.
pub fn hsv_adjust(img: &ImageBuffer, hue_shift: f64, sat_scale: f64, val_scale: f64) -> Result<ImageBuffer> {
    if !(sat_scale >= 0.0 && val_scale >= 0.0) || !hue_shift.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "hsv_adjust needs finite hue shift and nonnegative scales, got ({hue_shift}, {sat_scale}, {val_scale})"
        )));
    }
    Ok(img.map_pixels(|c| {
        let p = rgb_to_hsv(c);
        hsv_to_rgb(HsvPixel {
            h: (p.h + hue_shift).rem_euclid(360.0),
            s: (p.s * sat_scale).clamp(0.0, 1.0),
            v: (p.v * val_scale).clamp(0.0, 1.0),
        })
    }))
}

/// Decodes any supported container (PNG, JPEG) into 8-bit RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageBuffer::from_raw(w, h, rgb.into_raw())
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut out);
    image::ImageEncoder::write_image(
        encoder,
        &img.pixels,
        img.width,
        img.height,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::InvalidParameter(format!("PNG encoding failed: {e}")))?;
    Ok(out)
}

/// Writes a PNG atomically (temporary file, then rename).
pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_png(img)?)
}
