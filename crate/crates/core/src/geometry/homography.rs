use std::ops::Mul;

use serde::{Deserialize, Serialize};

use super::linalg::{mat3_inverse, mat3_mul, solve};
use super::{GeometryError, Point2};
use crate::scalar::Scalar;

/// Denominators at or below this magnitude send a point to infinity.
const W_EPS: f64 = 1e-12;
/// Sine of the smallest angle accepted between two edges of a point triple.
const COLLINEAR_SIN_EPS: f64 = 1e-10;

/// 3×3 projective transform, row-major, acting on column vectors `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Scalar> Homography<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn scale(sx: T, sy: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[sx, z, z], [z, sy, z], [z, z, o]],
        }
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, tx], [z, o, ty], [z, z, o]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn apply(&self, p: Point2<T>) -> Result<Point2<T>, GeometryError> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if !(w.abs() > T::lit(W_EPS)) {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    /// Inverse, normalized so that `h33 = 1` when possible.
    pub fn inverse(&self) -> Result<Self, GeometryError> {
        mat3_inverse(&self.m)
            .map(|m| Self { m }.normalized())
            .ok_or(GeometryError::DegenerateQuad("singular homography"))
    }

    /// `self` applied first, then `next`.
    pub fn then(&self, next: &Self) -> Self {
        *next * *self
    }

    /// Scales the matrix so that `h33 = 1`; falls back to unit max-norm when
    /// `h33` vanishes.
    pub fn normalized(&self) -> Self {
        let h33 = self.m[2][2];
        let k = if h33.abs() > T::epsilon() {
            h33
        } else {
            self.m
                .iter()
                .flatten()
                .fold(T::zero(), |acc, v| acc.max(v.abs()))
        };
        if k == T::zero() {
            return *self;
        }
        Self {
            m: self.m.map(|row| row.map(|v| v / k)),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Homography<U> {
        Homography {
            m: self.m.map(|row| row.map(|v| U::lit(v.as_f64()))),
        }
    }
}

impl<T: Scalar> Mul for Homography<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self {
            m: mat3_mul(&self.m, &rhs.m),
        }
    }
}

/// Exact projective map taking the four `src` points onto the four `dst`
/// points, with `h33 = 1`.
///
/// Both point sets are first normalized (centroid at the origin, mean distance
/// √2) so the 8×8 system stays well conditioned at pixel scale.
pub fn homography_from_quads<T: Scalar>(
    src: &[Point2<T>; 4],
    dst: &[Point2<T>; 4],
) -> Result<Homography<T>, GeometryError> {
    if !src.iter().chain(dst).all(Point2::is_finite) {
        return Err(GeometryError::NonFinite);
    }
    if has_collinear_triple(src) || has_collinear_triple(dst) {
        return Err(GeometryError::DegenerateQuad("three collinear vertices"));
    }
    let (ts, ns) = normalize(src)?;
    let (td, nd) = normalize(dst)?;

    let mut a = [[T::zero(); 8]; 8];
    let mut b = [T::zero(); 8];
    for (i, (s, d)) in ns.iter().zip(&nd).enumerate() {
        let (o, z) = (T::one(), T::zero());
        a[2 * i] = [s.x, s.y, o, z, z, z, -d.x * s.x, -d.x * s.y];
        b[2 * i] = d.x;
        a[2 * i + 1] = [z, z, z, s.x, s.y, o, -d.y * s.x, -d.y * s.y];
        b[2 * i + 1] = d.y;
    }
    let h = solve(a, b).ok_or(GeometryError::DegenerateQuad("singular DLT system"))?;
    let hn = Homography::from_rows([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], T::one()]]);

    let td_inv = td.inverse()?;
    let full = td_inv * hn * ts;
    if !(full.m[2][2].abs() > T::lit(W_EPS)) {
        return Err(GeometryError::DegenerateQuad("h33 vanishes"));
    }
    Ok(full.normalized())
}

fn has_collinear_triple<T: Scalar>(p: &[Point2<T>; 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().any(|&[i, j, k]| {
        let u = p[j] - p[i];
        let v = p[k] - p[i];
        let scale = u.norm() * v.norm();
        !(u.cross(v).abs() > T::lit(COLLINEAR_SIN_EPS) * scale) || scale == T::zero()
    })
}

fn normalize<T: Scalar>(
    p: &[Point2<T>; 4],
) -> Result<(Homography<T>, [Point2<T>; 4]), GeometryError> {
    let quarter = T::lit(0.25);
    let c = p.iter().fold(Point2::new(T::zero(), T::zero()), |acc, &q| acc + q) * quarter;
    let mean_dist = p.iter().fold(T::zero(), |acc, &q| acc + (q - c).norm()) * quarter;
    if !(mean_dist > T::zero()) {
        return Err(GeometryError::DegenerateQuad("coincident vertices"));
    }
    let s = T::SQRT_2() / mean_dist;
    let t = Homography::from_rows([
        [s, T::zero(), -s * c.x],
        [T::zero(), s, -s * c.y],
        [T::zero(), T::zero(), T::one()],
    ]);
    Ok((t, p.map(|q| (q - c) * s)))
}

/// Roll, pitch and yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotationAngles<T> {
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Scalar> RotationAngles<T> {
    pub fn new(roll: T, pitch: T, yaw: T) -> Self {
        Self { roll, pitch, yaw }
    }
}

/// Homography of a planar object rotated about its own `center` and viewed
/// by a pinhole camera with focal length `focal` (pixels).
///
/// The plane point `(x − cx, y − cy, 0)` is rotated by `R = Rz(roll)·Rx(pitch)·Ry(yaw)`,
/// pushed to depth `focal`, and projected back with `K = [[f,0,cx],[0,f,cy],[0,0,1]]`.
/// Zero angles give the identity; pure roll is an in-plane rotation about
/// `center`; `center` is always a fixed point.
pub fn rotation_homography<T: Scalar>(
    angles: RotationAngles<T>,
    center: Point2<T>,
    focal: T,
) -> Result<Homography<T>, GeometryError> {
    if !(focal > T::zero()) || !focal.is_finite() {
        return Err(GeometryError::InvalidParameter("focal length must be positive"));
    }
    if !center.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let r = rotation_matrix(angles);
    let (o, z) = (T::one(), T::zero());
    let k = [[focal, z, center.x], [z, focal, center.y], [z, z, o]];
    // Columns: rotated plane axes and the depth offset.
    let plane = [[r[0][0], r[0][1], z], [r[1][0], r[1][1], z], [r[2][0], r[2][1], focal]];
    let recenter = [[o, z, -center.x], [z, o, -center.y], [z, z, o]];
    let h = Homography::from_rows(mat3_mul(&mat3_mul(&k, &plane), &recenter));
    Ok(h.normalized())
}

fn rotation_matrix<T: Scalar>(a: RotationAngles<T>) -> [[T; 3]; 3] {
    let (o, z) = (T::one(), T::zero());
    let (sr, cr) = a.roll.to_radians().sin_cos();
    let (sp, cp) = a.pitch.to_radians().sin_cos();
    let (sy, cy) = a.yaw.to_radians().sin_cos();
    let rz = [[cr, -sr, z], [sr, cr, z], [z, z, o]];
    let rx = [[o, z, z], [z, cp, -sp], [z, sp, cp]];
    let ry = [[cy, z, sy], [z, o, z], [-sy, z, cy]];
    mat3_mul(&mat3_mul(&rz, &rx), &ry)
}
