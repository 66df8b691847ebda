//! Planar geometry: points, quadrilaterals, polygon clipping and IoU, affine
//! fitting to the canonical square, 4-point homographies and the homographies
//! induced by rotating a planar object in 3D.
//!
//! Everything here is generic over [`Scalar`] (`f32`/`f64`).
//!
//! Coordinates are image coordinates (x right, y down). Quads are stored in
//! TL, TR, BR, BL order, which gives a positive shoelace signed area.

mod affine;
mod homography;
mod linalg;
mod polygon;

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::Scalar;

pub use affine::{canonical_square, fit_affine, AffineParams};
pub use homography::{homography_from_quads, rotation_homography, Homography, RotationAngles};
pub use polygon::{convex_clip, is_convex, point_in_polygon, polygon_area, quad_iou, signed_area};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    InvalidPolygon(usize),
    #[error("clip polygon is not convex")]
    InvalidClipRegion,
    #[error("affine fit is rank deficient")]
    DegenerateFit,
    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(&'static str),
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// z component of the 3D cross product.
    #[inline]
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn cast<U: Scalar>(self) -> Point2<U> {
        Point2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<T: Serialize> Serialize for Point2<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.x, &self.y).serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Point2<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (x, y) = <(T, T)>::deserialize(d)?;
        Ok(Point2 { x, y })
    }
}

/// Four-vertex polygon in TL, TR, BR, BL order.
///
/// Construction through [`Quad::new`] does not validate, because decoded
/// detections can legitimately be degenerate (zero area or mirrored). Use
/// [`Quad::try_new`] for the strict invariant or [`Quad::canonicalize`] for
/// annotations whose winding is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quad<T> {
    pub vertices: [Point2<T>; 4],
}

impl<T: Scalar> Quad<T> {
    pub fn new(vertices: [Point2<T>; 4]) -> Self {
        Self { vertices }
    }

    pub fn from_xy(xy: [[T; 2]; 4]) -> Self {
        Self::new(xy.map(|[x, y]| Point2::new(x, y)))
    }

    /// Axis-aligned rectangle from its top-left corner to its bottom-right corner.
    pub fn rect(x0: T, y0: T, x1: T, y1: T) -> Self {
        Self::from_xy([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Validates finiteness, simplicity and positive signed area.
    pub fn try_new(vertices: [Point2<T>; 4]) -> Result<Self, GeometryError> {
        let q = Self::new(vertices);
        q.validate()?;
        Ok(q)
    }

    /// Reverses the winding when the signed area is negative (keeping the
    /// first vertex in place), then validates.
    pub fn canonicalize(vertices: [Point2<T>; 4]) -> Result<Self, GeometryError> {
        let q = Self::new(vertices).with_positive_winding();
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if !self.is_simple() {
            return Err(GeometryError::DegenerateQuad("self-intersecting"));
        }
        if self.signed_area() <= T::zero() {
            return Err(GeometryError::DegenerateQuad("non-positive signed area"));
        }
        Ok(())
    }

    pub fn with_positive_winding(self) -> Self {
        if self.signed_area() < T::zero() {
            let [a, b, c, d] = self.vertices;
            Self::new([a, d, c, b])
        } else {
            self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.vertices.iter().all(Point2::is_finite)
    }

    pub fn signed_area(&self) -> T {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> T {
        self.signed_area().abs()
    }

    pub fn is_convex(&self) -> bool {
        is_convex(&self.vertices)
    }

    /// No two opposite edges properly cross.
    pub fn is_simple(&self) -> bool {
        let v = &self.vertices;
        !segments_cross(v[0], v[1], v[2], v[3]) && !segments_cross(v[1], v[2], v[3], v[0])
    }

    pub fn centroid(&self) -> Point2<T> {
        let quarter = T::lit(0.25);
        self.vertices.iter().fold(Point2::new(T::zero(), T::zero()), |acc, &p| acc + p) * quarter
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> (Point2<T>, Point2<T>) {
        let v = &self.vertices;
        let mut lo = v[0];
        let mut hi = v[0];
        for p in &v[1..] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn map(&self, f: impl FnMut(Point2<T>) -> Point2<T>) -> Self {
        Self::new(self.vertices.map(f))
    }

    pub fn try_map<E>(
        &self,
        mut f: impl FnMut(Point2<T>) -> Result<Point2<T>, E>,
    ) -> Result<Self, E> {
        let v = &self.vertices;
        Ok(Self::new([f(v[0])?, f(v[1])?, f(v[2])?, f(v[3])?]))
    }

    pub fn cast<U: Scalar>(&self) -> Quad<U> {
        Quad::new(self.vertices.map(Point2::cast))
    }
}

impl<T: Serialize> Serialize for Quad<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.vertices.serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Quad<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let vertices = <[Point2<T>; 4]>::deserialize(d)?;
        Ok(Quad { vertices })
    }
}

fn orient<T: Scalar>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    (b - a).cross(c - a)
}

/// Proper crossing of segments `ab` and `cd` (touching endpoints do not count).
fn segments_cross<T: Scalar>(a: Point2<T>, b: Point2<T>, c: Point2<T>, d: Point2<T>) -> bool {
    let zero = T::zero();
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > zero && d2 < zero) || (d1 < zero && d2 > zero))
        && ((d3 > zero && d4 < zero) || (d3 < zero && d4 > zero))
}
