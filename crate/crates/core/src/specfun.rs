//! Scalar special functions: generalized Marcum Q, upper regularized incomplete
//! gamma for integer order, the Gaussian tail `Q(x)` and its inverse.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// Remainder bound at which the Marcum series is truncated.
const TAIL_BOUND: f64 = 1e-13;
const MAX_TERMS: usize = 100_000;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(p: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&p) {
            Ok(Self(p))
        } else {
            Err(Error::DomainError(format!("probability {p} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

fn ln_poisson_pmf(k: u64, x: f64) -> f64 {
    if x == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -x + k as f64 * x.ln() - ln_gamma(k as f64 + 1.0)
}

fn poisson_pmf(k: u64, x: f64) -> f64 {
    ln_poisson_pmf(k, x).exp()
}

/// `(P[K ≤ m − 1], P[K ≥ m])` for `K ~ Poisson(x)`; the tail away from the mode
/// is summed directly and the other side is its complement.
fn poisson_split(m: u64, x: f64) -> (f64, f64) {
    if m == 0 {
        return (0.0, 1.0);
    }
    if x == 0.0 {
        return (1.0, 0.0);
    }
    if x < m as f64 {
        // upper tail from k = m, terms decrease with ratio x/(k+1) < 1
        let mut k = m;
        let mut term = poisson_pmf(k, x);
        let mut sum = 0.0;
        while term > 0.0 {
            sum += term;
            k += 1;
            let ratio = x / k as f64;
            term *= ratio;
            if term < 1e-17 * sum {
                sum += term * ratio / (1.0 - ratio);
                break;
            }
        }
        let upper = sum.min(1.0);
        (1.0 - upper, upper)
    } else {
        // lower tail from k = m - 1 downwards, ratio k/x < 1
        let mut k = m - 1;
        let mut term = poisson_pmf(k, x);
        let mut sum = 0.0;
        loop {
            sum += term;
            if k == 0 || term == 0.0 {
                break;
            }
            term *= k as f64 / x;
            k -= 1;
            if term < 1e-17 * sum {
                sum += term * k as f64 / (x - k as f64);
                break;
            }
        }
        let lower = sum.min(1.0);
        (lower, 1.0 - lower)
    }
}

/// Upper regularized incomplete gamma `Q(M, x) = e^{−x} Σ_{k<M} x^k / k!` for integer `M ≥ 1`.
pub fn inc_gamma_upper_reg(m: u32, x: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::DomainError("incomplete gamma order must be >= 1".into()));
    }
    if !(x >= 0.0) {
        return Err(Error::DomainError(format!("incomplete gamma argument {x} < 0")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(poisson_split(m as u64, x).0)
}

/// Lower regularized incomplete gamma `P(M, x) = 1 − Q(M, x)`, accurate in its small tail.
pub fn inc_gamma_lower_reg(m: u32, x: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::DomainError("incomplete gamma order must be >= 1".into()));
    }
    if !(x >= 0.0) {
        return Err(Error::DomainError(format!("incomplete gamma argument {x} < 0")));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(poisson_split(m as u64, x).1)
}

/// Generalized Marcum Q-function `Q_M(a, b)`.
///
/// Evaluated as the Poisson mixture `Σ_k e^{−a²/2} (a²/2)^k / k! · Q(M + k, b²/2)`,
/// summed outwards from the Poisson mode. The incomplete-gamma values follow
/// from one direct evaluation by the recurrence `Q(n+1, x) = Q(n, x) + x^n e^{−x}/n!`.
pub fn marcum_q(m: u32, a: f64, b: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::DomainError("Marcum Q order must be >= 1".into()));
    }
    if !(a >= 0.0) || !(b >= 0.0) || !a.is_finite() {
        return Err(Error::DomainError(format!("Marcum Q arguments must be >= 0, got a={a}, b={b}")));
    }
    if b == 0.0 {
        return Ok(1.0);
    }
    if b.is_infinite() {
        return Ok(0.0);
    }
    let lambda = 0.5 * a * a;
    let x = 0.5 * b * b;
    if lambda == 0.0 {
        return inc_gamma_upper_reg(m, x);
    }

    let m = m as u64;
    let k0 = lambda.floor() as u64;
    let w0 = poisson_pmf(k0, lambda);
    let q0 = poisson_split(m + k0, x).0;
    let mut total = w0 * q0;
    // Rounding in `w0` is shared by every weight; dividing by the weight sum cancels it.
    let mut wsum = w0;
    let mut terms = 1usize;

    // upwards
    let (mut k, mut w, mut q) = (k0, w0, q0);
    loop {
        q = (q + poisson_pmf(m + k, x)).min(1.0);
        k += 1;
        w *= lambda / k as f64;
        total += w * q;
        wsum += w;
        terms += 1;
        let r = lambda / (k + 1) as f64;
        if (r < 1.0 && w * r / (1.0 - r) < TAIL_BOUND) || w == 0.0 {
            break;
        }
        if terms > MAX_TERMS {
            return Err(Error::SeriesNonConvergence { terms });
        }
    }

    // downwards
    let (mut k, mut w, mut q) = (k0, w0, q0);
    while k > 0 {
        w *= k as f64 / lambda;
        k -= 1;
        q = (q - poisson_pmf(m + k, x)).max(0.0);
        total += w * q;
        wsum += w;
        terms += 1;
        let r = k as f64 / lambda;
        if k == 0 || w == 0.0 || (r < 1.0 && w * r / (1.0 - r) < TAIL_BOUND) {
            break;
        }
        if terms > MAX_TERMS {
            return Err(Error::SeriesNonConvergence { terms });
        }
    }
    Ok((total / wsum).clamp(0.0, 1.0))
}

/// Smallest `b` with `Q_M(a, b) = q`, by bracketing and bisection on `b²`.
pub fn marcum_q_inv_b(m: u32, a: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::DomainError(format!("Marcum Q inversion target {q} outside (0, 1)")));
    }
    let mut lo = 0.0f64;
    let mut hi = {
        let b = a + (2.0 * m as f64).sqrt() + 1.0;
        b * b
    };
    while marcum_q(m, a, hi.sqrt())? > q {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::DomainError("Marcum Q inversion bracket diverged".into()));
        }
    }
    for _ in 0..400 {
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if marcum_q(m, a, mid.sqrt())? > q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).sqrt())
}

/// Standard Gaussian tail `Q(x) = P[Z > x]`.
pub fn gauss_q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation of the normal quantile Φ⁻¹(p).
fn normal_quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;
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
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Inverse Gaussian tail: the `x` with `Q(x) = p`, for `p ∈ (0, 1)`.
pub fn gauss_q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("inverse Q-function argument {p} outside (0, 1)")));
    }
    let mut x = -normal_quantile_guess(p);
    // Halley refinement on Q(x) - p
    for _ in 0..3 {
        let pdf = std_normal_pdf(x);
        if pdf == 0.0 {
            break;
        }
        let u = (gauss_q(x) - p) / pdf;
        x += u / (1.0 - 0.5 * x * u);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marcum_boundary_values() {
        for m in 1..5 {
            for a in [0.0, 0.5, 3.0] {
                assert_eq!(marcum_q(m, a, 0.0).unwrap(), 1.0);
            }
        }
        assert!((marcum_q(1, 0.0, 2.0).unwrap() - (-2f64).exp()).abs() < 1e-15);
        assert!(marcum_q(1, -1.0, 1.0).is_err());
        assert!(marcum_q(1, 1.0, -1.0).is_err());
    }

    #[test]
    fn marcum_matches_central_gamma() {
        for m in [1, 3, 10, 40] {
            for x in [0.01f64, 1.0, 7.5, 60.0] {
                let via_marcum = marcum_q(m, 0.0, (2.0 * x).sqrt()).unwrap();
                assert!((via_marcum - inc_gamma_upper_reg(m, x).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn marcum_small_noncentrality_limit_is_continuous() {
        let central = marcum_q(4, 0.0, 3.0).unwrap();
        let tiny = marcum_q(4, 1e-6, 3.0).unwrap();
        assert!((central - tiny).abs() < 1e-10);
    }

    #[test]
    fn marcum_large_noncentrality() {
        // mean of the squared norm is 2M + a², so b² well above it gives a small tail
        let q = marcum_q(100, 40.0, 60.0).unwrap();
        assert!(q > 0.0 && q < 1e-3);
        let q = marcum_q(100, 40.0, 20.0).unwrap();
        assert!(q > 1.0 - 1e-6);
    }

    #[test]
    fn inc_gamma_closed_forms() {
        assert_eq!(inc_gamma_upper_reg(5, 0.0).unwrap(), 1.0);
        assert!((inc_gamma_upper_reg(1, 0.0513).unwrap() - (-0.0513f64).exp()).abs() < 1e-15);
        assert!((inc_gamma_upper_reg(1, 0.0513).unwrap() - 0.95).abs() < 1e-4);
        assert!((inc_gamma_upper_reg(3, 2.0).unwrap() - 5.0 * (-2f64).exp()).abs() < 1e-15);
        assert!(inc_gamma_upper_reg(3, -1.0).is_err());
        let (q, p) = (inc_gamma_upper_reg(7, 3.3).unwrap(), inc_gamma_lower_reg(7, 3.3).unwrap());
        assert!((q + p - 1.0).abs() < 1e-15);
        // deep tails keep relative accuracy
        let tail = inc_gamma_upper_reg(2, 600.0).unwrap();
        let exact = (-600.0f64 + (601.0f64).ln()).exp();
        assert!(((tail - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn gauss_q_symmetry_and_inverse() {
        assert_eq!(gauss_q(0.0), 0.5);
        assert!(gauss_q_inv(0.5).unwrap().abs() < 1e-15);
        for x in [0.1, 1.3, 4.0] {
            assert!((gauss_q(-x) - (1.0 - gauss_q(x))).abs() < 1e-15);
        }
        assert!(gauss_q_inv(0.0).is_err());
        assert!(gauss_q_inv(1.0).is_err());
        for x in [-5.0, -3.0, -0.2, 0.0, 1.0, 5.5, 8.0] {
            assert!((gauss_q_inv(gauss_q(x)).unwrap() - x).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn gauss_q_inv_matches_bisection() {
        let (mut lo, mut hi) = (0.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gauss_q(mid) > 0.05 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = gauss_q_inv(0.05).unwrap();
        assert!((x - lo).abs() < 1e-12);
        assert!((x - 1.6449).abs() < 1e-4);
    }

    #[test]
    fn marcum_inverse_round_trip() {
        for (m, a, q) in [(1, 0.0, 0.05), (2, 1.5, 0.3), (10, 4.0, 0.95), (40, 0.0, 0.5)] {
            let b = marcum_q_inv_b(m, a, q).unwrap();
            assert!((marcum_q(m, a, b).unwrap() - q).abs() < 1e-9);
        }
        assert!(marcum_q_inv_b(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn probability_newtype_validates() {
        assert!(Probability::new(0.05).is_ok());
        assert!(Probability::new(1.5).is_err());
        assert!(Probability::new(f64::NAN).is_err());
    }
}
