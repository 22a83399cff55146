use nalgebra::DVector;

use crate::error::{check_dim, Result};

/// Closed line segment between two points of equal dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
}

impl Segment {
    pub fn new(a: DVector<f64>, b: DVector<f64>) -> Self {
        Self { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn length(&self) -> f64 {
        (&self.b - &self.a).norm()
    }
}

/// Minimum Euclidean distance between two closed segments.
pub fn segment_distance(s1: &Segment, s2: &Segment) -> Result<f64> {
    check_dim(s1.a.len(), s1.b.len())?;
    check_dim(s1.a.len(), s2.a.len())?;
    check_dim(s1.a.len(), s2.b.len())?;
    Ok(segment_distance_raw(
        s1.a.as_slice(),
        s1.b.as_slice(),
        s2.a.as_slice(),
        s2.b.as_slice(),
    ))
}

const DEGENERATE: f64 = 1e-30;

/// Slice form of [`segment_distance`]; all four slices must share a length.
///
/// Lumelsky's clamped-parameter scheme: solve for the closest pair on the
/// supporting lines, clamp the first parameter to `[0, 1]`, project onto the
/// second segment, and re-project onto the first whenever the second
/// parameter had to be clamped. Parallel segments take the first parameter
/// at 0.
#[inline]
pub fn segment_distance_raw(p1: &[f64], q1: &[f64], p2: &[f64], q2: &[f64]) -> f64 {
    let (mut a, mut e, mut b, mut c, mut f) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..p1.len() {
        let d1 = q1[i] - p1[i];
        let d2 = q2[i] - p2[i];
        let r = p1[i] - p2[i];
        a += d1 * d1;
        e += d2 * d2;
        b += d1 * d2;
        c += d1 * r;
        f += d2 * r;
    }

    let (s, t) = if a <= DEGENERATE && e <= DEGENERATE {
        (0.0, 0.0)
    } else if a <= DEGENERATE {
        (0.0, clamp01(f / e))
    } else if e <= DEGENERATE {
        (clamp01(-c / a), 0.0)
    } else {
        let denom = a * e - b * b;
        let s = if denom > 1e-14 * a * e {
            clamp01((b * f - c * e) / denom)
        } else {
            0.0
        };
        let t = (b * s + f) / e;
        if t < 0.0 {
            (clamp01(-c / a), 0.0)
        } else if t > 1.0 {
            (clamp01((b - c) / a), 1.0)
        } else {
            (s, t)
        }
    };

    let mut sq = 0.0;
    for i in 0..p1.len() {
        let x1 = p1[i] + s * (q1[i] - p1[i]);
        let x2 = p2[i] + t * (q2[i] - p2[i]);
        sq += (x1 - x2) * (x1 - x2);
    }
    sq.sqrt()
}

#[inline]
fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(a: &[f64], b: &[f64]) -> Segment {
        Segment::new(DVector::from_column_slice(a), DVector::from_column_slice(b))
    }

    fn point_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    fn point_on(s: &Segment, t: f64) -> DVector<f64> {
        &s.a + (&s.b - &s.a) * t
    }

    /// Nested golden-section search; the squared distance is jointly convex in
    /// the two segment parameters so the inner minimum is convex in the outer.
    fn convex_search_oracle(s1: &Segment, s2: &Segment) -> f64 {
        fn golden(f: impl Fn(f64) -> f64) -> f64 {
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..120 {
                let m1 = hi - g * (hi - lo);
                let m2 = lo + g * (hi - lo);
                if f(m1) <= f(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let mid = 0.5 * (lo + hi);
            f(mid).min(f(0.0)).min(f(1.0))
        }
        golden(|s| golden(|t| (point_on(s1, s) - point_on(s2, t)).norm()))
    }

    #[test]
    fn identical_segments() {
        let s = seg(&[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(segment_distance(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn parallel_unit_offset() {
        let d = segment_distance(&seg(&[0.0, 0.0], &[1.0, 0.0]), &seg(&[0.0, 1.0], &[1.0, 1.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn crossing_segments() {
        let d = segment_distance(&seg(&[0.0, 0.0], &[1.0, 1.0]), &seg(&[1.0, 0.0], &[0.0, 1.0])).unwrap();
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn offset_collinear_matches_dense_sampling() {
        let s1 = seg(&[0.0, 0.0], &[1.0, 0.0]);
        let s2 = seg(&[2.0, 1.0], &[3.0, 1.0]);
        let n = 1000;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let p = point_on(&s1, i as f64 / (n - 1) as f64);
            for j in 0..n {
                let q = point_on(&s2, j as f64 / (n - 1) as f64);
                best = best.min((&p - q).norm());
            }
        }
        let d = segment_distance(&s1, &s2).unwrap();
        assert!((d - best).abs() < 1e-6);
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s1 = seg(&[0.0, 0.0], &[1.0, 0.0]);
        let s2 = seg(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        assert!(segment_distance(&s1, &s2).is_err());
    }

    #[test]
    fn collinear_overlapping_is_zero() {
        let d = segment_distance(&seg(&[0.0, 0.0], &[2.0, 0.0]), &seg(&[1.0, 0.0], &[3.0, 0.0])).unwrap();
        assert_eq!(d, 0.0);
    }

    fn arb_seg(dim: usize) -> impl Strategy<Value = Segment> {
        (
            proptest::collection::vec(-3.0..3.0f64, dim),
            proptest::collection::vec(-3.0..3.0f64, dim),
        )
            .prop_map(|(a, b)| Segment::new(DVector::from_vec(a), DVector::from_vec(b)))
    }

    fn arb_pair() -> impl Strategy<Value = (Segment, Segment, Segment)> {
        (2usize..6).prop_flat_map(|d| (arb_seg(d), arb_seg(d), arb_seg(d)))
    }

    proptest! {
        #[test]
        fn symmetric((s1, s2, _) in arb_pair()) {
            let d12 = segment_distance(&s1, &s2).unwrap();
            let d21 = segment_distance(&s2, &s1).unwrap();
            prop_assert!((d12 - d21).abs() < 1e-12);
        }

        #[test]
        fn bounded_by_endpoint_distances((s1, s2, _) in arb_pair()) {
            let d = segment_distance(&s1, &s2).unwrap();
            let ends = [(&s1.a, &s2.a), (&s1.a, &s2.b), (&s1.b, &s2.a), (&s1.b, &s2.b)]
                .iter()
                .map(|(p, q)| (*p - *q).norm())
                .fold(f64::INFINITY, f64::min);
            prop_assert!(d <= ends + 1e-12);
        }

        #[test]
        fn degenerate_is_point_distance(a in proptest::collection::vec(-3.0..3.0f64, 3), b in proptest::collection::vec(-3.0..3.0f64, 3)) {
            let s1 = seg(&a, &a);
            let s2 = seg(&b, &b);
            let d = segment_distance(&s1, &s2).unwrap();
            prop_assert!((d - point_dist(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn triangle_like((s1, s2, s3) in arb_pair()) {
            let d13 = segment_distance(&s1, &s3).unwrap();
            let bound = segment_distance(&s1, &s2).unwrap() + s2.length() + segment_distance(&s2, &s3).unwrap();
            prop_assert!(d13 <= bound + 1e-12);
        }

        #[test]
        fn matches_convex_search((s1, s2, _) in arb_pair()) {
            let d = segment_distance(&s1, &s2).unwrap();
            let oracle = convex_search_oracle(&s1, &s2);
            prop_assert!(d <= oracle + 1e-9, "closed form {} above oracle {}", d, oracle);
            prop_assert!((d - oracle).abs() < 1e-6, "closed form {} vs oracle {}", d, oracle);
        }
    }
}
