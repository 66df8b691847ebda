use serde::{Deserialize, Serialize};

use super::linalg::solve;
use super::{GeometryError, Point2};
use crate::scalar::Scalar;

/// Six affine parameters `a1..a6`: linear part `[a1 a2; a4 a5]` and
/// translation `(a3, a6)`, stored in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams<T>(pub [T; 6]);

impl<T: Scalar> AffineParams<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self([o, z, z, z, o, z])
    }

    #[inline]
    pub fn apply(&self, p: Point2<T>) -> Point2<T> {
        let a = &self.0;
        Point2::new(a[0] * p.x + a[1] * p.y + a[2], a[3] * p.x + a[4] * p.y + a[5])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Corners of the unit canonical square centered at the origin, TL, TR, BR, BL.
pub fn canonical_square<T: Scalar>() -> [Point2<T>; 4] {
    let h = T::lit(0.5);
    [
        Point2::new(-h, -h),
        Point2::new(h, -h),
        Point2::new(h, h),
        Point2::new(-h, h),
    ]
}

/// Least-squares affine map taking `src` onto `dst`.
///
/// The x and y rows decouple into two 3-parameter problems sharing the design
/// matrix `[x y 1]`, solved through their normal equations. Exact whenever
/// `dst` is an affine image of `src`.
pub fn fit_affine<T: Scalar>(
    src: &[Point2<T>; 4],
    dst: &[Point2<T>; 4],
) -> Result<AffineParams<T>, GeometryError> {
    if !src.iter().chain(dst).all(Point2::is_finite) {
        return Err(GeometryError::NonFinite);
    }
    // Centering the source keeps the normal matrix well conditioned for pixel
    // coordinates; the translation is restored afterwards.
    let quarter = T::lit(0.25);
    let c = src.iter().fold(Point2::new(T::zero(), T::zero()), |acc, &p| acc + p) * quarter;

    let mut ata = [[T::zero(); 3]; 3];
    let mut atx = [T::zero(); 3];
    let mut aty = [T::zero(); 3];
    for (s, d) in src.iter().zip(dst) {
        let row = [s.x - c.x, s.y - c.y, T::one()];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] = ata[i][j] + row[i] * row[j];
            }
            atx[i] = atx[i] + row[i] * d.x;
            aty[i] = aty[i] + row[i] * d.y;
        }
    }
    let px = solve(ata, atx).ok_or(GeometryError::DegenerateFit)?;
    let py = solve(ata, aty).ok_or(GeometryError::DegenerateFit)?;

    let a3 = px[2] - px[0] * c.x - px[1] * c.y;
    let a6 = py[2] - py[0] * c.x - py[1] * c.y;
    Ok(AffineParams([px[0], px[1], a3, py[0], py[1], a6]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sse(params: &AffineParams<f64>, src: &[Point2<f64>; 4], dst: &[Point2<f64>; 4]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(&s, &d)| {
                let m = params.apply(s) - d;
                m.dot(m)
            })
            .sum()
    }

    #[test]
    fn canonical_to_itself_is_identity() {
        let sq = canonical_square::<f64>();
        let p = fit_affine(&sq, &sq).unwrap();
        for (got, want) in p.0.iter().zip(AffineParams::<f64>::identity().0) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn similarity_case() {
        let sq = canonical_square::<f64>();
        let dst = sq.map(|p| Point2::new(2.0 * p.x + 5.0, 2.0 * p.y + 5.0));
        let p = fit_affine(&sq, &dst).unwrap();
        for (got, want) in p.0.iter().zip([2.0, 0.0, 5.0, 0.0, 2.0, 5.0]) {
            assert!((got - want).abs() < 1e-12, "{:?}", p);
        }
    }

    #[test]
    fn general_quad_is_locally_optimal() {
        let sq = canonical_square::<f64>();
        let dst = [
            Point2::new(10.0, 12.0),
            Point2::new(55.0, 8.0),
            Point2::new(61.0, 47.0),
            Point2::new(4.0, 40.0),
        ];
        let p = fit_affine(&sq, &dst).unwrap();
        let base = sse(&p, &sq, &dst);
        assert!(base > 1.0, "non-parallelogram must leave a residual");
        for k in 0..6 {
            for delta in [-1e-3, 1e-3] {
                let mut q = p;
                q.0[k] += delta;
                assert!(sse(&q, &sq, &dst) >= base);
            }
        }
    }

    #[test]
    fn coincident_source_is_degenerate() {
        let src = [Point2::new(1.0, 1.0); 4];
        let dst = canonical_square::<f64>();
        assert_eq!(fit_affine(&src, &dst), Err(GeometryError::DegenerateFit));
    }

    #[test]
    fn collinear_source_is_degenerate() {
        let src = [0.0, 1.0, 2.0, 3.0].map(|t| Point2::new(t, 2.0 * t));
        let dst = canonical_square::<f64>();
        assert_eq!(fit_affine(&src, &dst), Err(GeometryError::DegenerateFit));
    }
}
