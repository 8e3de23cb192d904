//! Standard normal density, tail probabilities, Mills ratios and quantiles,
//! written to stay accurate far into the tails.

use crate::linalg;
use crate::Scalar;

/// Beyond this many standard deviations the tail ratio switches from the
/// complementary error function to its continued-fraction expansion.
pub const ASYMPTOTIC_SWITCH: f64 = 2.0;

const CF_DEPTH: usize = 120;

#[inline]
pub fn pdf<F: Scalar>(x: F) -> F {
    if x.is_infinite() {
        return F::zero();
    }
    (-(x * x) * F::lit(0.5)).exp() * F::lit(0.398_942_280_401_432_7)
}

#[inline]
pub fn ln_pdf<F: Scalar>(x: F) -> F {
    -(x * x) * F::lit(0.5) - F::lit(0.918_938_533_204_672_8)
}

/// Lower-tail probability `P(Z <= x)`.
#[inline]
pub fn cdf<F: Scalar>(x: F) -> F {
    F::lit(0.5) * (-x * F::FRAC_1_SQRT_2()).erfc()
}

/// Upper-tail probability `P(Z > x)`.
#[inline]
pub fn sf<F: Scalar>(x: F) -> F {
    F::lit(0.5) * (x * F::FRAC_1_SQRT_2()).erfc()
}

/// Tail ratio `R(x) = P(Z > x) / phi(x)` for `x >= 0` (the reciprocal of the
/// hazard). Returns 0 at `+inf`.
pub fn tail_ratio<F: Scalar>(x: F) -> F {
    debug_assert!(x >= F::zero() || x.is_nan());
    if x == F::infinity() {
        return F::zero();
    }
    if x < F::lit(ASYMPTOTIC_SWITCH) {
        let sqrt_2pi = F::lit(2.506_628_274_631_000_5);
        F::lit(0.5) * (x * F::FRAC_1_SQRT_2()).erfc() * sqrt_2pi * (x * x * F::lit(0.5)).exp()
    } else {
        // R(x) = 1 / (x + 1 / (x + 2 / (x + 3 / (x + ...))))
        let mut t = x;
        for k in (1..=CF_DEPTH).rev() {
            t = x + F::from_count(k) / t;
        }
        F::one() / t
    }
}

/// `ln P(Z > x)`, finite for every finite `x`.
pub fn ln_sf<F: Scalar>(x: F) -> F {
    if x == F::infinity() {
        return F::neg_infinity();
    }
    if x <= F::zero() {
        sf(x).ln()
    } else {
        ln_pdf(x) + tail_ratio(x).ln()
    }
}

/// `ln P(Z <= x)`.
#[inline]
pub fn ln_cdf<F: Scalar>(x: F) -> F {
    ln_sf(-x)
}

/// `ln P(a < Z < b)` for `a < b`, stable when both edges sit in the same tail.
pub fn ln_interval_prob<F: Scalar>(a: F, b: F) -> F {
    if a >= F::zero() {
        let (ratio, ln_scale) = same_tail_mass(a, b);
        ratio.ln() + ln_scale
    } else if b <= F::zero() {
        ln_interval_prob(-b, -a)
    } else {
        central_mass(a, b).ln()
    }
}

/// Mass of `(a, b)` with `a >= 0`, returned as `(D, ln phi(a))` where the
/// probability equals `D * phi(a)`.
fn same_tail_mass<F: Scalar>(a: F, b: F) -> (F, F) {
    let d = if b == F::infinity() {
        tail_ratio(a)
    } else {
        let shrink = (-(b - a) * (b + a) * F::lit(0.5)).exp();
        tail_ratio(a) - shrink * tail_ratio(b)
    };
    (d, ln_pdf(a))
}

fn central_mass<F: Scalar>(a: F, b: F) -> F {
    let s = F::FRAC_1_SQRT_2();
    F::lit(0.5) * ((b * s).erf() - (a * s).erf())
}

/// `1 / R(x) - x` for `x >= 0`: the mean excess of the tail beyond `x`.
pub fn tail_excess<F: Scalar>(x: F) -> F {
    if x == F::infinity() {
        return F::zero();
    }
    if x < F::lit(ASYMPTOTIC_SWITCH) {
        F::one() / tail_ratio(x) - x
    } else {
        // 1 / (x + 2 / (x + 3 / (x + ...)))
        let mut t = x;
        for k in (2..=CF_DEPTH).rev() {
            t = x + F::from_count(k) / t;
        }
        F::one() / t
    }
}

/// Mean and variance of the standard normal truncated to `(a, b)`.
///
/// Returns `None` when the region carries no representable mass.
pub fn standard_truncated<F: Scalar>(a: F, b: F) -> Option<(F, F)> {
    if (b - a) * a.abs().max(b.abs()).max(F::one()) <= F::one() {
        return Some(short_interval(a, b));
    }
    if a >= F::zero() {
        // work with the excess e = mean - a to avoid cancelling O(a^2) terms
        let ra = tail_ratio(a);
        let (d, e, width_term) = if b == F::infinity() {
            (ra, tail_excess(a), F::zero())
        } else {
            let shrink = (-(b - a) * (b + a) * F::lit(0.5)).exp();
            let rb = tail_ratio(b);
            let d = ra - shrink * rb;
            let e = (ra * tail_excess(a) - shrink * rb * (tail_excess(b) + (b - a))) / d;
            (d, e, (b - a) * shrink / d)
        };
        if !(d > F::zero()) || !d.is_finite() {
            return None;
        }
        let mean = a + e;
        let var = F::one() - width_term - e * mean;
        Some((mean, var.max(F::zero())))
    } else if b <= F::zero() {
        standard_truncated(-b, -a).map(|(m, v)| (-m, v))
    } else {
        let z = central_mass(a, b);
        if !(z > F::zero()) {
            return None;
        }
        let la = pdf(a) / z;
        let lb = pdf(b) / z;
        Some(moments_from_ratios(a, b, la, lb))
    }
}

/// Quadrature in `t` with `z = c + h t`; the density varies by at most a
/// factor `e` over the interval, so 20 nodes are exact to rounding.
fn short_interval<F: Scalar>(a: F, b: F) -> (F, F) {
    let (nodes, weights) = linalg::gauss_legendre_20();
    let c = (a + b) * F::lit(0.5);
    let h = (b - a) * F::lit(0.5);
    let g: Vec<F> = nodes
        .iter()
        .zip(weights)
        .map(|(&t, &w)| {
            let t = F::lit(t);
            F::lit(w) * (-(h * c * t) - h * h * t * t * F::lit(0.5)).exp()
        })
        .collect();
    let mass: F = g.iter().copied().sum();
    let tbar = nodes.iter().zip(&g).map(|(&t, &w)| w * F::lit(t)).sum::<F>() / mass;
    let var = nodes
        .iter()
        .zip(&g)
        .map(|(&t, &w)| {
            let d = F::lit(t) - tbar;
            w * d * d
        })
        .sum::<F>()
        / mass;
    (c + h * tbar, h * h * var)
}

fn moments_from_ratios<F: Scalar>(a: F, b: F, la: F, lb: F) -> (F, F) {
    let mean = la - lb;
    let ta = if a.is_infinite() { F::zero() } else { a * la };
    let tb = if b.is_infinite() { F::zero() } else { b * lb };
    let var = F::one() + ta - tb - mean * mean;
    (mean, var.max(F::zero()))
}

/// `x` such that `P(Z > x) = p`, for `p` in `(0, 1)`.
pub fn upper_quantile<F: Scalar>(p: F) -> F {
    if !(p > F::zero() && p < F::one()) {
        return if p <= F::zero() {
            F::infinity()
        } else {
            F::neg_infinity()
        };
    }
    if p > F::lit(0.5) {
        return -upper_quantile(F::one() - p);
    }
    if p == F::lit(0.5) {
        return F::zero();
    }
    // rational starting point, then Newton on ln P(Z > x)
    let t = (-F::lit(2.0) * p.ln()).sqrt();
    let num = F::lit(2.515_517) + F::lit(0.802_853) * t + F::lit(0.010_328) * t * t;
    let den = F::one()
        + F::lit(1.432_788) * t
        + F::lit(0.189_269) * t * t
        + F::lit(0.001_308) * t * t * t;
    let mut x = t - num / den;
    let target = p.ln();
    for _ in 0..50 {
        let f = ln_sf(x) - target;
        let hazard = if x >= F::zero() {
            F::one() / tail_ratio(x)
        } else {
            pdf(x) / sf(x)
        };
        let step = f / hazard;
        x += step;
        if step.abs() <= F::epsilon() * (F::one() + x.abs()) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tail_ratio_is_continuous_at_the_switch() {
        let below: f64 = tail_ratio(ASYMPTOTIC_SWITCH - 1e-13);
        let above: f64 = tail_ratio(ASYMPTOTIC_SWITCH);
        assert_relative_eq!(below, above, max_relative = 1e-12);
    }

    #[test]
    fn deep_tail_log_probability() {
        // ln P(Z > 40) from the asymptotic series
        let x = 40.0f64;
        let series = -x * x / 2.0 - (x * (2.0 * std::f64::consts::PI).sqrt()).ln()
            + (1.0 - 1.0 / (x * x) + 3.0 / x.powi(4) - 15.0 / x.powi(6) + 105.0 / x.powi(8)
                - 945.0 / x.powi(10))
                .ln();
        assert_relative_eq!(ln_sf(x), series, max_relative = 1e-14);
    }

    #[test]
    fn quantiles() {
        assert_relative_eq!(upper_quantile(0.4f64), 0.253_347_103_135_799_7, max_relative = 1e-13);
        assert_relative_eq!(upper_quantile(1e-6f64), 4.753_424_308_822_899, max_relative = 1e-13);
        assert_relative_eq!(upper_quantile(0.975f64), -1.959_963_984_540_054, max_relative = 1e-13);
    }

    #[test]
    fn interval_probability_in_the_tail() {
        let lp: f64 = ln_interval_prob(8.0, 9.0);
        let direct = (sf(8.0f64) - sf(9.0f64)).ln();
        assert_relative_eq!(lp, direct, max_relative = 1e-10);
        let mirrored: f64 = ln_interval_prob(-9.0, -8.0);
        assert_relative_eq!(lp, mirrored, max_relative = 1e-14);
    }
}
