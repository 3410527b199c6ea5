//! Small numeric helpers used by the metrics and experiment code.

// Published coefficients are kept digit-for-digit.
#![allow(clippy::excessive_precision)]

/// Arithmetic mean, `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Bessel-corrected sample variance, `None` below two values.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some(ss / (values.len() - 1) as f64)
}

/// Standard error of the mean, `s / sqrt(n)`.
pub fn standard_error(values: &[f64]) -> Option<f64> {
    sample_variance(values).map(|v| (v / values.len() as f64).sqrt())
}

/// Quantile function of the standard normal distribution.
///
/// Acklam's rational approximation (relative error below 1.15e-9) followed by
/// one Halley refinement step against `erfc`. Returns `NaN` outside (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
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
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    let x = if p < P_LOW {
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
    };

    // Halley step on Phi(x) - p.
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Two-sided critical value `z_{1 - alpha/2}`.
pub fn two_sided_z(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0)
}

/// Complementary error function (W. J. Cody's rational approximations).
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    let r = if ax <= 0.46875 {
        return 1.0 - erf_small(x);
    } else if ax <= 4.0 {
        const P: [f64; 9] = [
            5.64188496988670089e-1,
            8.88314979438837594e+0,
            6.61191906371416295e+1,
            2.98635138197400131e+2,
            8.81952221241769090e+2,
            1.71204761263407058e+3,
            2.05107837782607147e+3,
            1.23033935479799725e+3,
            2.15311535474403846e-8,
        ];
        const Q: [f64; 8] = [
            1.57449261107098347e+1,
            1.17693950891312499e+2,
            5.37181101862009858e+2,
            1.62138957456669019e+3,
            3.29079923573345963e+3,
            4.36261909014324716e+3,
            3.43936767414372164e+3,
            1.23033935480374942e+3,
        ];
        let mut num = P[8] * ax;
        let mut den = ax;
        for i in 0..7 {
            num = (num + P[i]) * ax;
            den = (den + Q[i]) * ax;
        }
        let ratio = (num + P[7]) / (den + Q[7]);
        scaled_exp(ax) * ratio
    } else {
        const P: [f64; 6] = [
            3.05326634961232344e-1,
            3.60344899949804439e-1,
            1.25781726111229246e-1,
            1.60837851487422766e-2,
            6.58749161529837803e-4,
            1.63153871373020978e-2,
        ];
        const Q: [f64; 5] = [
            2.56852019228982242e+0,
            1.87295284992346725e+0,
            5.27905102951428412e-1,
            6.05183413124413191e-2,
            2.33520497626869185e-3,
        ];
        let z = 1.0 / (ax * ax);
        let mut num = P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + P[i]) * z;
            den = (den + Q[i]) * z;
        }
        let mut ratio = z * (num + P[4]) / (den + Q[4]);
        ratio = (1.0 / std::f64::consts::PI.sqrt() - ratio) / ax;
        scaled_exp(ax) * ratio
    };
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e+0,
        1.13864154151050156e+2,
        3.77485237685302021e+2,
        3.20937758913846947e+3,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e+1,
        2.44024637934444173e+2,
        1.28261652607737228e+3,
        2.84423683343917062e+3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

/// `exp(-x^2)` evaluated in two parts to limit cancellation.
fn scaled_exp(x: f64) -> f64 {
    let xs = (x * 16.0).trunc() / 16.0;
    let del = (x - xs) * (x + xs);
    (-xs * xs).exp() * (-del).exp()
}

/// Pearson correlation; `None` when either coordinate has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| *v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = mean(&lx)?;
    let my = mean(&ly)?;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn known_quantiles() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_quantile(0.995) - 2.5758293035489004).abs() < 1e-12);
        assert!((normal_quantile(0.01) + 2.3263478740408408).abs() < 1e-12);
        assert!(normal_quantile(0.0).is_nan());
        assert!(normal_quantile(1.0).is_nan());
    }

    proptest! {
        #[test]
        fn quantile_matches_reference(p in 1e-10f64..(1.0 - 1e-10)) {
            let reference = Normal::standard().inverse_cdf(p);
            prop_assert!((normal_quantile(p) - reference).abs() <= 1e-8 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn erfc_spot_values() {
        // Reference values from a correctly rounded libm erfc.
        for (x, expected) in [
            (-5.5, 1.9999999999999927),
            (-3.1, 1.9999883513426329),
            (-1.7, 1.9837904585907746),
            (-0.9, 1.7969082124228322),
            (-0.3, 1.3286267594591274),
            (-0.01, 1.0112834155558497),
            (0.05, 0.9436280222029834),
            (0.2, 0.7772974107895215),
            (0.4, 0.5716076449533315),
            (0.46875, 0.507386526782062),
            (0.5074, 0.4730212509713268),
            (0.8, 0.2578990352923395),
            (1.3, 0.06599205505934755),
            (2.0, 0.004677734981047265),
            (2.9, 4.109787809945886e-05),
            (3.7, 1.6715105790914596e-07),
            (4.0, 1.541725790028002e-08),
            (4.2962, 1.2341392750082902e-09),
            (5.1, 5.493820217555321e-13),
            (6.0, 2.1519736712498916e-17),
        ] {
            assert!((erfc(x) - expected).abs() <= 4.0 * f64::EPSILON * expected, "erfc({x})");
        }
    }

    #[test]
    fn variance_and_mean() {
        let v = [0.8, 0.6, 1.0, 0.6];
        assert!((mean(&v).unwrap() - 0.75).abs() < 1e-15);
        assert!((sample_variance(&v).unwrap() - 0.11 / 3.0).abs() < 1e-15);
        assert_eq!(sample_variance(&[1.0]), None);
        assert_eq!(mean(&[]), None);
    }

    #[test]
    fn correlation_edges() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn slopes() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x * x).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&[5.0], &[1.0]), None);
    }
}
