//! Basis function families for the daily covariates and the time-of-day index.
//!
//! Two spline families (clamped cubic B-spline and cyclic cubic B-spline on a
//! circular domain) plus cubic polynomial variants for covariates with few
//! observations. Spline evaluation is by the Cox–de Boor recursion.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

const DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    CubicBSpline,
    CyclicCubicBSpline,
    CubicPolynomial,
    NegatedCubicPolynomial,
}

/// Declarative description of one basis family: kind, number of functions,
/// domain, and the derived (equally spaced) knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub count: usize,
    pub domain_lo: f64,
    pub domain_hi: f64,
    /// Full knot vector for `CubicBSpline` (boundary knots replicated),
    /// base circular knots for `CyclicCubicBSpline`, empty for polynomials.
    pub knots: Vec<f64>,
}

/// Evaluated basis values at a set of points (rows) for one spec (columns).
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub spec: BasisSpec,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisError {
    NonFiniteBound { lo: f64, hi: f64 },
    EmptyDomain { lo: f64, hi: f64 },
    CountBelowMinimum { kind: BasisKind, count: usize, min: usize },
    PolynomialCountNotThree { count: usize },
    NonFinitePoint,
    IntervalOutOfRange { j: usize, j_max: usize },
    KindMismatch,
}

impl fmt::Display for BasisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisError::NonFiniteBound { lo, hi } => {
                write!(f, "basis domain bounds must be finite, got [{lo}, {hi}]")
            }
            BasisError::EmptyDomain { lo, hi } => {
                write!(f, "basis domain is empty: lo={lo} must be < hi={hi}")
            }
            BasisError::CountBelowMinimum { kind, count, min } => {
                write!(f, "{kind:?} needs at least {min} basis functions, got {count}")
            }
            BasisError::PolynomialCountNotThree { count } => {
                write!(f, "polynomial bases have exactly 3 terms (degrees 1..3), got {count}")
            }
            BasisError::NonFinitePoint => write!(f, "basis evaluation point is not finite"),
            BasisError::IntervalOutOfRange { j, j_max } => {
                write!(f, "interval index {j} outside 1..={j_max}")
            }
            BasisError::KindMismatch => write!(f, "operation not defined for this basis kind"),
        }
    }
}

impl core::error::Error for BasisError {}

/// Builds a clamped cubic B-spline spec with equally spaced interior knots
/// over `[lo, hi]` spanning exactly `count` basis functions.
pub fn make_bspline_knots(lo: f64, hi: f64, count: usize) -> Result<BasisSpec, BasisError> {
    check_domain(lo, hi)?;
    if count < 4 {
        return Err(BasisError::CountBelowMinimum { kind: BasisKind::CubicBSpline, count, min: 4 });
    }
    // count + 4 knots: boundaries with multiplicity 4, count - 4 interior.
    let segments = (count - 3) as f64;
    let mut knots = Vec::with_capacity(count + 4);
    for _ in 0..4 {
        knots.push(lo);
    }
    for i in 1..=(count - 4) {
        knots.push(lo + (i as f64) * (hi - lo) / segments);
    }
    for _ in 0..4 {
        knots.push(hi);
    }
    Ok(BasisSpec { kind: BasisKind::CubicBSpline, count, domain_lo: lo, domain_hi: hi, knots })
}

/// Builds a cyclic cubic B-spline spec on the circular domain `[lo, hi)`.
/// The stored knots are the `count + 1` equally spaced circular knots; the
/// first and last are identified.
pub fn make_cyclic_knots(lo: f64, hi: f64, count: usize) -> Result<BasisSpec, BasisError> {
    check_domain(lo, hi)?;
    if count < 3 {
        return Err(BasisError::CountBelowMinimum {
            kind: BasisKind::CyclicCubicBSpline,
            count,
            min: 3,
        });
    }
    let knots = (0..=count).map(|i| lo + (i as f64) * (hi - lo) / (count as f64)).collect();
    Ok(BasisSpec { kind: BasisKind::CyclicCubicBSpline, count, domain_lo: lo, domain_hi: hi, knots })
}

/// Builds a polynomial spec (degrees 1..3, no intercept).
pub fn make_polynomial(kind: BasisKind, count: usize) -> Result<BasisSpec, BasisError> {
    match kind {
        BasisKind::CubicPolynomial | BasisKind::NegatedCubicPolynomial => {}
        _ => return Err(BasisError::KindMismatch),
    }
    if count != 3 {
        return Err(BasisError::PolynomialCountNotThree { count });
    }
    Ok(BasisSpec {
        kind,
        count: 3,
        domain_lo: f64::NEG_INFINITY,
        domain_hi: f64::INFINITY,
        knots: Vec::new(),
    })
}

fn check_domain(lo: f64, hi: f64) -> Result<(), BasisError> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(BasisError::NonFiniteBound { lo, hi });
    }
    if lo >= hi {
        return Err(BasisError::EmptyDomain { lo, hi });
    }
    Ok(())
}

/// Evaluates all basis functions of `spec` at `x`.
///
/// B-spline kinds clamp `x` to the domain; polynomial kinds accept any
/// finite `x`. The cyclic kind wraps `x` into its period.
pub fn eval_basis(spec: &BasisSpec, x: f64) -> Result<Vec<f64>, BasisError> {
    if !x.is_finite() {
        return Err(BasisError::NonFinitePoint);
    }
    match spec.kind {
        BasisKind::CubicBSpline => {
            let xc = x.clamp(spec.domain_lo, spec.domain_hi);
            Ok(bspline_all(&spec.knots, spec.count, xc))
        }
        BasisKind::CyclicCubicBSpline => Ok(eval_cyclic_at(spec, x)),
        BasisKind::CubicPolynomial => Ok(vec![x, x * x, x * x * x]),
        BasisKind::NegatedCubicPolynomial => {
            let z = -x;
            Ok(vec![z, z * z, z * z * z])
        }
    }
}

/// Evaluates the cyclic basis at integer interval index `j` in `1..=J`,
/// where `J` is the circular period length of the spec's domain.
pub fn eval_cyclic_basis(spec: &BasisSpec, j: usize) -> Result<Vec<f64>, BasisError> {
    if spec.kind != BasisKind::CyclicCubicBSpline {
        return Err(BasisError::KindMismatch);
    }
    let j_max = (spec.domain_hi - spec.domain_lo) as usize;
    if j < 1 || j > j_max {
        return Err(BasisError::IntervalOutOfRange { j, j_max });
    }
    Ok(eval_cyclic_at(spec, j as f64))
}

/// Cyclic evaluation at an arbitrary real position; the position is wrapped
/// into the circular domain first.
pub fn eval_cyclic_at(spec: &BasisSpec, x: f64) -> Vec<f64> {
    let k = spec.count;
    let lo = spec.domain_lo;
    let period = spec.domain_hi - spec.domain_lo;
    let mut xw = (x - lo) % period;
    if xw < 0.0 {
        xw += period;
    }
    let xw = lo + xw;

    // Unwrap the circular knots by three spans on each side and evaluate
    // ordinary B-splines, then fold wrapped indices back mod `k`.
    let d = period / (k as f64);
    let n_ext = k + 7;
    let mut ext = Vec::with_capacity(n_ext);
    for i in 0..n_ext {
        ext.push(lo + (i as f64 - 3.0) * d);
    }
    let raw = bspline_all(&ext, k + 3, xw);
    let mut out = vec![0.0; k];
    for (i, v) in raw.into_iter().enumerate() {
        out[i % k] += v;
    }
    out
}

/// All `count` cubic B-spline values at `x` for the given knot vector
/// (length `count + 4`). Cox–de Boor via the knot-span triangular scheme.
fn bspline_all(knots: &[f64], count: usize, x: f64) -> Vec<f64> {
    debug_assert_eq!(knots.len(), count + 4);
    let mut out = vec![0.0; count];

    // Knot span: largest i with knots[i] <= x < knots[i+1]; the final
    // nonempty span is treated as closed so x == domain_hi is valid.
    let last = count; // index of the last distinct upper boundary start
    let mut span = DEGREE;
    while span < last - 1 && x >= knots[span + 1] {
        span += 1;
    }

    let mut vals = [0.0_f64; DEGREE + 1];
    vals[0] = 1.0;
    let mut left = [0.0_f64; DEGREE + 1];
    let mut right = [0.0_f64; DEGREE + 1];
    for r in 1..=DEGREE {
        left[r] = x - knots[span + 1 - r];
        right[r] = knots[span + r] - x;
        let mut saved = 0.0;
        for c in 0..r {
            let denom = right[c + 1] + left[r - c];
            let term = if denom != 0.0 { vals[c] / denom } else { 0.0 };
            vals[c] = saved + right[c + 1] * term;
            saved = left[r - c] * term;
        }
        vals[r] = saved;
    }

    for (c, &v) in vals.iter().enumerate() {
        let idx = span - DEGREE + c;
        if idx < count {
            out[idx] = v;
        }
    }
    out
}

/// Evaluates a spec over many points, caching the result.
pub fn eval_basis_set(spec: &BasisSpec, points: &[f64]) -> Result<BasisSet, BasisError> {
    let mut values = Vec::with_capacity(points.len());
    for &x in points {
        values.push(eval_basis(spec, x)?);
    }
    Ok(BasisSet { spec: spec.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum(v: &[f64]) -> f64 {
        v.iter().sum()
    }

    #[test]
    fn knots_equally_spaced_count_five() {
        let s = make_bspline_knots(0.0, 1.0, 5).unwrap();
        assert_eq!(s.knots.len(), 9);
        assert_eq!(s.knots[4], 0.5);
        assert_eq!(s.knots[0], 0.0);
        assert_eq!(s.knots[8], 1.0);

        let t = make_bspline_knots(0.0, 40.0, 5).unwrap();
        assert_eq!(t.knots[4], 20.0);
    }

    #[test]
    fn empty_domain_rejected() {
        assert!(matches!(make_bspline_knots(1.0, 1.0, 5), Err(BasisError::EmptyDomain { .. })));
        assert!(matches!(make_bspline_knots(2.0, 1.0, 5), Err(BasisError::EmptyDomain { .. })));
    }

    #[test]
    fn count_minimums() {
        assert!(make_bspline_knots(0.0, 1.0, 3).is_err());
        assert!(make_cyclic_knots(0.0, 1.0, 2).is_err());
        assert!(make_polynomial(BasisKind::CubicPolynomial, 4).is_err());
        assert!(make_polynomial(BasisKind::CubicBSpline, 3).is_err());
    }

    #[test]
    fn partition_of_unity_clamped() {
        let s = make_bspline_knots(-2.0, 7.0, 8).unwrap();
        for i in 0..=100 {
            let x = -2.0 + 9.0 * (i as f64) / 100.0;
            let v = eval_basis(&s, x).unwrap();
            assert!((sum(&v) - 1.0).abs() < 1e-12, "x={x} sum={}", sum(&v));
            assert!(v.iter().all(|&b| b >= 0.0 && b <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn uniform_interior_knot_values() {
        // At an interior knot with three uniform spans either side, the
        // active cubic values are (1/6, 4/6, 1/6).
        let s = make_bspline_knots(0.0, 8.0, 12).unwrap();
        // interior knots at 0.888..*k; pick the middle one
        let x = s.knots[8]; // well inside
        let v = eval_basis(&s, x).unwrap();
        let nz: Vec<f64> = v.iter().copied().filter(|&b| b > 1e-14).collect();
        assert_eq!(nz.len(), 3);
        assert!((nz[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((nz[1] - 4.0 / 6.0).abs() < 1e-12);
        assert!((nz[2] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cyclic_partition_of_unity_and_wrap() {
        let s = make_cyclic_knots(1.0, 25.0, 7).unwrap(); // J = 24
        for j in 1..=24 {
            let v = eval_cyclic_basis(&s, j).unwrap();
            assert!((sum(&v) - 1.0).abs() < 1e-12, "j={j}");
            assert!(v.iter().all(|&b| b >= -1e-15));
            let w = eval_cyclic_at(&s, (j + 24) as f64);
            for (a, b) in v.iter().zip(&w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(eval_cyclic_basis(&s, 0).is_err());
        assert!(eval_cyclic_basis(&s, 25).is_err());
    }

    #[test]
    fn cyclic_seam_smoothness() {
        // Second differences of each basis function on a dense grid across
        // the seam should match the interior magnitude (C2 continuity).
        let s = make_cyclic_knots(1.0, 25.0, 6).unwrap();
        let step = 0.01;
        let grid: Vec<f64> = (0..4800).map(|i| 1.0 + (i as f64) * step).collect();
        let vals: Vec<Vec<f64>> = grid.iter().map(|&x| eval_cyclic_at(&s, x)).collect();
        let mut max_interior: f64 = 0.0;
        let mut max_seam: f64 = 0.0;
        for i in 1..grid.len() - 1 {
            for q in 0..6 {
                let d2 = (vals[i - 1][q] - 2.0 * vals[i][q] + vals[i + 1][q]).abs();
                // seam at x = 25 == 1 (wrapped): grid index near 2400
                if (grid[i] - 25.0).abs() < 2.0 * step || (grid[i] - 1.0).abs() < 2.0 * step {
                    max_seam = max_seam.max(d2);
                } else {
                    max_interior = max_interior.max(d2);
                }
            }
        }
        assert!(max_seam <= max_interior * 1.5 + 1e-12, "seam {max_seam} interior {max_interior}");
    }

    #[test]
    fn local_support() {
        let s = make_bspline_knots(0.0, 10.0, 10).unwrap();
        // each basis function is nonzero on at most 4 adjacent knot spans
        for m in 0..10 {
            let mut active_spans = 0;
            for span in 3..=(10 - 1) {
                let a = s.knots[span];
                let b = s.knots[span + 1];
                if b <= a {
                    continue;
                }
                let mid = 0.5 * (a + b);
                if eval_basis(&s, mid).unwrap()[m] > 1e-14 {
                    active_spans += 1;
                }
            }
            assert!(active_spans <= 4, "basis {m} active on {active_spans} spans");
        }
    }

    #[test]
    fn negated_polynomial_values() {
        let s = make_polynomial(BasisKind::NegatedCubicPolynomial, 3).unwrap();
        let v = eval_basis(&s, 2.0).unwrap();
        assert_eq!(v, vec![-2.0, 4.0, -8.0]);
        let p = make_polynomial(BasisKind::CubicPolynomial, 3).unwrap();
        assert_eq!(eval_basis(&p, 2.0).unwrap(), vec![2.0, 4.0, 8.0]);
    }

    #[test]
    fn clamping_out_of_range() {
        let s = make_bspline_knots(0.0, 1.0, 5).unwrap();
        assert_eq!(eval_basis(&s, 2.0).unwrap(), eval_basis(&s, 1.0).unwrap());
        assert_eq!(eval_basis(&s, -3.0).unwrap(), eval_basis(&s, 0.0).unwrap());
        assert!(eval_basis(&s, f64::NAN).is_err());
    }
}
