//! Standard normal distribution function and its inverse.
//!
//! For |x| < 3 the CDF uses Marsaglia's series
//! `Φ(x) = 1/2 + φ(x) · (x + x³/3 + x⁵/(3·5) + …)`. Further out the sum
//! cancels against 1/2, so the tail mass is taken from the continued fraction
//! `Q(x) = φ(x) / (x + 1/(x + 2/(x + 3/(x + …))))`, which keeps relative
//! accuracy down to underflow.
//!
//! The inverse starts from Acklam's rational approximation (relative error
//! 1.15e-9) and applies two Halley steps against the CDF above.

use crate::scalar::Scalar;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const SERIES_LIMIT: f64 = 3.0;
const FRACTION_TERMS: usize = 120;

pub fn normal_pdf<T: Scalar>(x: T) -> T {
    (-(x * x) / T::of(2.0) - T::of(LN_SQRT_2PI)).exp()
}

/// Upper tail `1 − Φ(x)` for `x ≥ 3`, evaluated from the innermost term out.
fn upper_tail<T: Scalar>(x: T) -> T {
    let mut acc = x;
    for k in (1..=FRACTION_TERMS).rev() {
        acc = x + T::of_count(k) / acc;
    }
    normal_pdf(x) / acc
}

pub fn normal_cdf<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x >= T::of(SERIES_LIMIT) {
        return T::one() - upper_tail(x);
    }
    if x <= T::of(-SERIES_LIMIT) {
        return upper_tail(-x);
    }
    let (mut sum, mut term) = (x, x);
    let sq = x * x;
    let mut k = T::one();
    loop {
        k = k + T::of(2.0);
        term = term * sq / k;
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    let v = T::of(0.5) + sum * normal_pdf(x);
    v.max(T::zero()).min(T::one())
}

const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_671_010_422_433,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn acklam(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// Quantile function of the standard normal. `p = 0` and `p = 1` map to
/// `∓∞`; values outside `[0, 1]` give NaN.
pub fn normal_inv_cdf<T: Scalar>(p: T) -> T {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return T::nan();
    }
    if p == T::zero() {
        return T::neg_infinity();
    }
    if p == T::one() {
        return T::infinity();
    }
    let mut x = T::of(acklam(p.as_f64()));
    for _ in 0..2 {
        // work on the smaller tail so the error is not lost against 1
        let e = if x > T::zero() {
            (T::one() - p) - normal_cdf(-x)
        } else {
            normal_cdf(x) - p
        };
        let u = e / normal_pdf(x);
        x = x - u / (T::one() + x * u / T::of(2.0));
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values from a 40-digit arbitrary-precision evaluation
    const CDF: [(f64, f64); 11] = [
        (0.0, 0.5),
        (0.5, 0.691_462_461_274_013_1),
        (-1.3, 0.096_800_484_585_610_33),
        (2.7, 0.996_533_026_196_959_3),
        (-5.0, 2.866_515_718_791_939e-7),
        (6.5, 0.999_999_999_959_84),
        (1e-3, 0.500_398_942_213_911_1),
        (-8.2, 1.201_935_154_273_585_8e-16),
        (-20.0, 2.753_624_118_606_233_7e-89),
        (-3.0, 1.349_898_031_630_094_5e-3),
        (3.5, 0.999_767_370_920_964_5),
    ];
    const INV: [(f64, f64); 6] = [
        (0.975, 1.959_963_984_540_054),
        (0.01, -2.326_347_874_040_841),
        (1e-10, -6.361_340_902_404_056),
        (0.9999, 3.719_016_485_455_681),
        (0.632_120_558_828_557_7, 0.337_474_963_764_202_5),
        (0.3, -0.524_400_512_708_040_8),
    ];

    #[test]
    fn cdf_matches_reference() {
        for (x, want) in CDF {
            let got = normal_cdf(x);
            let tol = if x < -3.0 { 1e-14 * want } else { 1e-15 };
            assert!((got - want).abs() < tol, "Φ({x}) = {got}, want {want}");
        }
        assert_eq!(normal_cdf(0.0f64), 0.5);
    }

    #[test]
    fn inverse_matches_reference() {
        assert_eq!(normal_inv_cdf(0.5f64), 0.0);
        for (p, want) in INV {
            let got = normal_inv_cdf(p);
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "Φ⁻¹({p}) = {got}, want {want}");
        }
        assert_eq!(normal_inv_cdf(0.0f64), f64::NEG_INFINITY);
        assert_eq!(normal_inv_cdf(1.0f64), f64::INFINITY);
        assert!(normal_inv_cdf(1.5f64).is_nan());
    }

    #[test]
    fn symmetry_and_single_precision() {
        for i in -40..=40 {
            let x = i as f64 * 0.2;
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-15);
        }
        assert!((normal_cdf(1.0f32) - 0.841_344_7).abs() < 1e-6);
        assert!((normal_inv_cdf(0.975f32) - 1.959_964).abs() < 1e-5);
    }
}
