//! Shared statistical primitives: logistic link, stable log-sum helpers, and
//! normal tail probabilities.

use crate::num::Real;

/// Numerically stable logistic function `1 / (1 + exp(-x))`.
#[inline]
pub fn logistic<F: Real>(x: F) -> F {
    if x >= F::zero() {
        let e = (-x).exp();
        F::one() / (F::one() + e)
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Inverse of [`logistic`]; requires `p` strictly inside (0, 1).
#[inline]
pub fn logit<F: Real>(p: F) -> F {
    (p / (F::one() - p)).ln()
}

/// Stable `log(1 + exp(x))`.
#[inline]
pub fn log1p_exp<F: Real>(x: F) -> F {
    if x > F::of(33.0) {
        // exp(-x) underflows the correction term entirely
        x
    } else if x < F::of(-33.0) {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Upper-tail probability of the standard normal distribution.
///
/// Evaluated through `erfc` in double precision regardless of the scalar
/// type; the result is cast back to `F`.
#[inline]
pub fn normal_sf<F: Real>(z: F) -> F {
    let z64 = z.to_f64().unwrap_or(f64::NAN);
    F::of(0.5 * libm::erfc(z64 / std::f64::consts::SQRT_2))
}

/// Two-sided normal tail probability of `|z|`.
#[inline]
pub fn two_sided_p<F: Real>(z: F) -> F {
    let p = normal_sf(z.abs()) * F::of(2.0);
    if p > F::one() {
        F::one()
    } else {
        p
    }
}
