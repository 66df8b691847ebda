use super::{GeometryError, Point2, Quad};
use crate::scalar::Scalar;

/// Shoelace signed area. Positive for TL, TR, BR, BL order in image coordinates.
pub fn signed_area<T: Scalar>(poly: &[Point2<T>]) -> T {
    let n = poly.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        acc = acc + poly[i].cross(poly[(i + 1) % n]);
    }
    acc * T::lit(0.5)
}

pub fn polygon_area<T: Scalar>(poly: &[Point2<T>]) -> Result<T, GeometryError> {
    if poly.len() < 3 {
        return Err(GeometryError::InvalidPolygon(poly.len()));
    }
    if !poly.iter().all(Point2::is_finite) {
        return Err(GeometryError::NonFinite);
    }
    Ok(signed_area(poly).abs())
}

/// Turns of consecutive edges must all share one sign (collinear runs are
/// allowed) and the boundary must wind exactly once.
pub fn is_convex<T: Scalar>(poly: &[Point2<T>]) -> bool {
    let n = poly.len();
    if n < 3 || !poly.iter().all(Point2::is_finite) {
        return false;
    }
    let tol = T::epsilon() * T::lit(64.0);
    let mut sign = 0i8;
    let mut turning = T::zero();
    for i in 0..n {
        let e0 = poly[(i + 1) % n] - poly[i];
        let e1 = poly[(i + 2) % n] - poly[(i + 1) % n];
        let cross = e0.cross(e1);
        turning = turning + cross.atan2(e0.dot(e1));
        if cross.abs() <= tol * e0.norm() * e1.norm() {
            continue;
        }
        let s = if cross > T::zero() { 1 } else { -1 };
        if sign == 0 {
            sign = s;
        } else if sign != s {
            return false;
        }
    }
    sign != 0 && (turning.abs() - T::TAU()).abs() < T::lit(1e-3)
}

/// Sutherland–Hodgman clipping of `subject` against a convex `clip` polygon of
/// either winding. The result is empty when the regions do not overlap.
pub fn convex_clip<T: Scalar>(
    subject: &[Point2<T>],
    clip: &[Point2<T>],
) -> Result<Vec<Point2<T>>, GeometryError> {
    if subject.len() < 3 {
        return Err(GeometryError::InvalidPolygon(subject.len()));
    }
    if clip.len() < 3 {
        return Err(GeometryError::InvalidPolygon(clip.len()));
    }
    if !subject.iter().all(Point2::is_finite) {
        return Err(GeometryError::NonFinite);
    }
    if !is_convex(clip) {
        return Err(GeometryError::InvalidClipRegion);
    }
    let orientation = if signed_area(clip) >= T::zero() {
        T::one()
    } else {
        -T::one()
    };

    let mut output = subject.to_vec();
    let m = clip.len();
    for k in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[k];
        let b = clip[(k + 1) % m];
        let edge = b - a;
        let inside = |p: Point2<T>| orientation * edge.cross(p - a) >= T::zero();

        let input = std::mem::take(&mut output);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let (cur_in, prev_in) = (inside(cur), inside(prev));
            if cur_in {
                if !prev_in {
                    output.push(edge_crossing(prev, cur, a, edge));
                }
                output.push(cur);
            } else if prev_in {
                output.push(edge_crossing(prev, cur, a, edge));
            }
        }
        output.dedup();
        while output.len() > 1 && output.first() == output.last() {
            output.pop();
        }
    }
    if output.len() < 3 {
        output.clear();
    }
    Ok(output)
}

fn edge_crossing<T: Scalar>(p: Point2<T>, q: Point2<T>, a: Point2<T>, edge: Point2<T>) -> Point2<T> {
    let d = q - p;
    let denom = edge.cross(d);
    if denom == T::zero() {
        return q;
    }
    let t = edge.cross(a - p) / denom;
    p + d * t
}

/// Even–odd rule; points exactly on the boundary may fall on either side.
pub fn point_in_polygon<T: Scalar>(p: Point2<T>, poly: &[Point2<T>]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Intersection over union of two quads. Degenerate (zero area) or
/// self-intersecting quads give 0. Non-convex quads are supported by splitting
/// the clip side into two triangles.
pub fn quad_iou<T: Scalar>(a: &Quad<T>, b: &Quad<T>) -> T {
    if !a.is_finite() || !b.is_finite() || !a.is_simple() || !b.is_simple() {
        return T::zero();
    }
    let area_a = a.area();
    let area_b = b.area();
    if is_negligible(a, area_a) || is_negligible(b, area_b) {
        return T::zero();
    }
    if a.vertices == b.vertices {
        return T::one();
    }

    let a = a.with_positive_winding();
    let b = b.with_positive_winding();
    let inter = match intersection_area(&a, &b) {
        Some(v) => v,
        None => return T::zero(),
    };
    let union = area_a + area_b - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}

fn is_negligible<T: Scalar>(q: &Quad<T>, area: T) -> bool {
    let (lo, hi) = q.bounds();
    let diag2 = (hi - lo).dot(hi - lo);
    area <= diag2 * T::epsilon() * T::lit(16.0)
}

fn intersection_area<T: Scalar>(subject: &Quad<T>, clip: &Quad<T>) -> Option<T> {
    let area_of = |region: &[Point2<T>]| -> Option<T> {
        let poly = convex_clip(&subject.vertices, region).ok()?;
        Some(if poly.is_empty() {
            T::zero()
        } else {
            signed_area(&poly).abs()
        })
    };
    if clip.is_convex() {
        return area_of(&clip.vertices);
    }
    // A simple non-convex quad has exactly one reflex vertex; the diagonal from
    // it splits the quad into two convex triangles.
    let v = &clip.vertices;
    let reflex = (0..4).find(|&i| {
        let prev = v[(i + 3) % 4];
        let next = v[(i + 1) % 4];
        (v[i] - prev).cross(next - v[i]) < T::zero()
    })?;
    let r = v[reflex];
    let t1 = [r, v[(reflex + 1) % 4], v[(reflex + 2) % 4]];
    let t2 = [r, v[(reflex + 2) % 4], v[(reflex + 3) % 4]];
    Some(area_of(&t1)? + area_of(&t2)?)
}
