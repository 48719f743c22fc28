//! Domains, cells and exact piecewise-constant integration helpers.

use crate::error::{Error, Result};
use crate::real::Real;

/// Physical domain `D`: an interval `[0, a]` or the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { length: f64 },
    UnitSquare,
}

impl Domain {
    pub fn interval(length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(crate::error::invalid("domain length", format!("{length} must be positive")));
        }
        Ok(Domain::Interval { length })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::UnitSquare => 2,
        }
    }

    /// Side length along each axis.
    pub fn extent(&self) -> f64 {
        match *self {
            Domain::Interval { length } => length,
            Domain::UnitSquare => 1.0,
        }
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { length } => length,
            Domain::UnitSquare => 1.0,
        }
    }

    pub fn contains<T: Real>(&self, x: &[T]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let ext = T::lit(self.extent());
        x.iter().all(|&c| c >= T::zero() && c <= ext)
    }

    pub fn check_point<T: Real>(&self, x: &[T]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::PointOutsideDomain {
                point: x.iter().map(|v| v.to_f64_lossy()).collect(),
            })
        }
    }
}

/// A simplex of a mesh, by vertex coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<T> {
    Interval { x0: T, x1: T },
    Triangle { v: [[T; 2]; 3] },
}

impl<T: Real> Cell<T> {
    pub fn measure(&self) -> T {
        match *self {
            Cell::Interval { x0, x1 } => x1 - x0,
            Cell::Triangle { v } => triangle_area(&v),
        }
    }

    /// Maps barycentric coordinates to a physical point (second entry unused in 1D).
    pub fn map(&self, bary: &[T; 3]) -> [T; 2] {
        match *self {
            Cell::Interval { x0, x1 } => [bary[0] * x0 + bary[1] * x1, T::zero()],
            Cell::Triangle { v } => [
                bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
                bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
            ],
        }
    }

    /// Axis-aligned bounding box `(min, max)`; 1D cells use the first coordinate only.
    pub fn bounding_box(&self) -> ([T; 2], [T; 2]) {
        match *self {
            Cell::Interval { x0, x1 } => ([x0, T::zero()], [x1, T::zero()]),
            Cell::Triangle { v } => {
                let mut lo = v[0];
                let mut hi = v[0];
                for p in &v[1..] {
                    for d in 0..2 {
                        lo[d] = lo[d].min(p[d]);
                        hi[d] = hi[d].max(p[d]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Exact measure of the intersection with the box `[lo, hi)`.
    pub fn overlap_with_box(&self, lo: [T; 2], hi: [T; 2]) -> T {
        match *self {
            Cell::Interval { x0, x1 } => interval_overlap(x0, x1, lo[0], hi[0]),
            Cell::Triangle { v } => rect_triangle_overlap(lo, hi, &v),
        }
    }
}

pub fn triangle_area<T: Real>(v: &[[T; 2]; 3]) -> T {
    let cross = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    cross.abs() * T::half()
}

/// Length of `[a0, a1] ∩ [b0, b1]`.
#[inline]
pub fn interval_overlap<T: Real>(a0: T, a1: T, b0: T, b1: T) -> T {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if hi > lo {
        hi - lo
    } else {
        T::zero()
    }
}

/// Area of an axis-aligned rectangle intersected with a triangle, by
/// Sutherland–Hodgman clipping of the triangle against the four half-planes.
pub fn rect_triangle_overlap<T: Real>(lo: [T; 2], hi: [T; 2], tri: &[[T; 2]; 3]) -> T {
    let mut poly: Vec<[T; 2]> = tri.to_vec();
    for (axis, bound, keep_above) in [(0, lo[0], true), (0, hi[0], false), (1, lo[1], true), (1, hi[1], false)] {
        poly = clip(&poly, axis, bound, keep_above);
        if poly.len() < 3 {
            return T::zero();
        }
    }
    polygon_area(&poly)
}

fn clip<T: Real>(poly: &[[T; 2]], axis: usize, bound: T, keep_above: bool) -> Vec<[T; 2]> {
    let inside = |p: &[T; 2]| if keep_above { p[axis] >= bound } else { p[axis] <= bound };
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let prev = poly[(i + poly.len() - 1) % poly.len()];
        let (ci, pi) = (inside(&cur), inside(&prev));
        if ci != pi {
            let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
            let mut q = [prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])];
            q[axis] = bound;
            out.push(q);
        }
        if ci {
            out.push(cur);
        }
    }
    out
}

fn polygon_area<T: Real>(poly: &[[T; 2]]) -> T {
    let mut acc = T::zero();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc = acc + a[0] * b[1] - b[0] * a[1];
    }
    acc.abs() * T::half()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_of_unit_square_with_lower_triangle() {
        let tri = [[0.0f64, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let a = rect_triangle_overlap([0.0, 0.0], [1.0, 1.0], &tri);
        assert!((a - 0.5).abs() < 1e-15);
        // left half of the square cuts a quarter of the lower triangle
        let a = rect_triangle_overlap([0.0, 0.0], [0.5, 1.0], &tri);
        assert!((a - 0.125).abs() < 1e-15);
        let a = rect_triangle_overlap([2.0, 2.0], [3.0, 3.0], &tri);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn domain_membership() {
        let d = Domain::interval(2.0).unwrap();
        assert!(d.contains(&[0.5_f64]));
        assert!(!d.contains(&[2.5_f64]));
        assert!(!d.contains(&[0.5_f64, 0.5]));
        assert!(Domain::UnitSquare.contains(&[1.0_f64, 0.0]));
        assert!(Domain::interval(0.0).is_err());
    }
}
