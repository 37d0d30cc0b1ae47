//! Imaginary error function, its inverse, and the Kolmogorov tail.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{precondition, Error, Result};

/// `erfi` is supported on `[-ERFI_MAX_ARG, ERFI_MAX_ARG]`.
pub const ERFI_MAX_ARG: f64 = 6.0;

/// Below this the Maclaurin series is used; beyond it quadrature.
const SERIES_LIMIT: f64 = 3.0;

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

fn erfi_series(z: f64) -> f64 {
    // erfi(z) = 2/sqrt(pi) * sum_k z^(2k+1) / (k! (2k+1)); all terms share a sign
    let z2 = z * z;
    let mut power = z;
    let mut sum = z;
    let mut k = 0.0;
    loop {
        k += 1.0;
        power *= z2 / k;
        let term = power / (2.0 * k + 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    TWO_OVER_SQRT_PI * sum
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One G7/K15 panel: (kronrod estimate, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if err <= rel_tol * k.abs() || depth == 0 {
        return k;
    }
    let mid = 0.5 * (a + b);
    adaptive_gk(f, a, mid, rel_tol, depth - 1) + adaptive_gk(f, mid, b, rel_tol, depth - 1)
}

/// The imaginary error function `erfi(z) = 2/sqrt(pi) * int_0^z exp(t^2) dt`
/// on `|z| <= 6`.
pub fn erfi(z: f64) -> Result<f64> {
    if !(z.abs() <= ERFI_MAX_ARG) {
        return Err(Error::Domain { what: "erfi", value: z });
    }
    let a = z.abs();
    let value = if a <= SERIES_LIMIT {
        erfi_series(a)
    } else {
        let tail = adaptive_gk(&|t: f64| (t * t).exp(), SERIES_LIMIT, a, 1e-15, 30);
        erfi_series(SERIES_LIMIT) + TWO_OVER_SQRT_PI * tail
    };
    Ok(value.copysign(z))
}

fn erfi_max() -> f64 {
    static MAX: OnceLock<f64> = OnceLock::new();
    *MAX.get_or_init(|| erfi(ERFI_MAX_ARG).expect("in range"))
}

/// Inverse of [`erfi`]: Newton's method from a cubic seed, safeguarded by a
/// shrinking bisection bracket.
pub fn erfi_inv(y: f64) -> Result<f64> {
    if !(y.abs() <= erfi_max()) {
        return Err(Error::Domain { what: "erfi_inv", value: y });
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let target = y.abs();
    let (mut lo, mut hi) = (0.0, ERFI_MAX_ARG);
    let w = 0.5 * PI.sqrt() * target;
    let mut z = w - w * w * w / 3.0;
    if !(z > lo && z < hi) {
        z = 0.5 * (lo + hi);
    }
    const MAX_ITER: usize = 200;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        residual = erfi(z)? - target;
        if residual == 0.0 {
            return Ok(z.copysign(y));
        }
        if residual > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let slope = TWO_OVER_SQRT_PI * (z * z).exp();
        let mut next = z - residual / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 4.0 * f64::EPSILON * z.max(1e-300) {
            return Ok(next.copysign(y));
        }
        z = next;
    }
    Err(Error::NoConvergence {
        what: "erfi_inv",
        iterations: MAX_ITER,
        residual,
    })
}

/// Kolmogorov survival function `Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)`.
///
/// For small `lambda` the alternating series converges slowly, so the
/// equivalent theta-function form is summed instead.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    const TERM_TOL: f64 = 1e-12;
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Q = 1 - sqrt(2 pi)/lambda * sum_k exp(-(2k-1)^2 pi^2 / (8 lambda^2))
        let c = -PI * PI / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        let mut k = 1.0_f64;
        loop {
            let odd = 2.0 * k - 1.0;
            let term = (c * odd * odd).exp();
            sum += term;
            if term < TERM_TOL {
                break;
            }
            k += 1.0;
        }
        return (1.0 - (2.0 * PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut k = 1.0_f64;
    loop {
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += sign * term;
        if term < TERM_TOL {
            break;
        }
        sign = -sign;
        k += 1.0;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a one-sample Kolmogorov-Smirnov statistic.
pub fn ks_asymptotic_pvalue(statistic: f64, n_samples: usize) -> Result<f64> {
    if n_samples < 35 {
        return Err(Error::Unsupported(format!(
            "asymptotic KS p-value needs at least 35 samples, got {n_samples}"
        )));
    }
    precondition((0.0..=1.0).contains(&statistic), || {
        format!("KS statistic {statistic} outside [0, 1]")
    })?;
    Ok(kolmogorov_q((n_samples as f64).sqrt() * statistic))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: adaptive Simpson with Richardson correction.
    fn simpson_oracle(z: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let f = |t: f64| (t * t).exp();
        let (a, b) = (0.0, z);
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let scale = f(z).max(1.0);
        TWO_OVER_SQRT_PI * rec(&f, a, b, fa, fm, fb, whole, 1e-15 * scale, 50)
    }

    #[test]
    fn erfi_at_zero_and_odd() {
        assert_eq!(erfi(0.0).unwrap(), 0.0);
        assert_eq!(erfi(-0.7).unwrap(), -erfi(0.7).unwrap());
    }

    #[test]
    fn erfi_at_one() {
        let oracle = simpson_oracle(1.0);
        assert!((oracle - 1.650_425_758_797_542_8).abs() < 1e-12);
        assert!((erfi(1.0).unwrap() - oracle).abs() <= 1e-12);
    }

    #[test]
    fn erfi_matches_quadrature_oracle_on_range() {
        let mut z = -6.0;
        while z <= 6.0 {
            let got = erfi(z).unwrap();
            let want = simpson_oracle(z.abs()).copysign(z);
            // absolute 1e-12 where f64 can represent it, relative beyond
            let tol = 1e-12 * want.abs().max(1.0);
            assert!((got - want).abs() <= tol, "z={z}: {got} vs {want}");
            z += 0.05;
        }
    }

    #[test]
    fn erfi_continuous_across_series_switch() {
        let below = erfi(3.0).unwrap();
        let above = erfi(3.0 + 1e-12).unwrap();
        assert!(above > below);
        assert!((above - below) / below < 1e-11);
    }

    #[test]
    fn erfi_strictly_increasing() {
        let mut prev = erfi(-6.0).unwrap();
        let mut z: f64 = -6.0;
        for _ in 0..12_000 {
            z += 1e-3;
            let v = erfi(z.min(6.0)).unwrap();
            assert!(v > prev, "not increasing at {z}");
            prev = v;
        }
    }

    #[test]
    fn erfi_domain() {
        assert!(matches!(erfi(6.5), Err(Error::Domain { .. })));
        assert!(erfi(f64::NAN).is_err());
        assert!(erfi_inv(1e20).is_err());
        assert!(erfi_inv(f64::INFINITY).is_err());
    }

    #[test]
    fn erfi_inv_examples() {
        assert_eq!(erfi_inv(0.0).unwrap(), 0.0);
        let x = erfi_inv(erfi(1.3).unwrap()).unwrap();
        assert!((x - 1.3).abs() <= 1e-10);
        let one = erfi_inv(simpson_oracle(1.0)).unwrap();
        assert!((one - 1.0).abs() < 1e-10);
        assert!((erfi_inv(1.0).unwrap() - 0.731_697_153_468_492_4).abs() < 1e-12);
    }

    #[test]
    fn erfi_inv_round_trip() {
        let mut y = -5.0;
        while y <= 5.0 {
            let z = erfi_inv(y).unwrap();
            assert!((erfi(z).unwrap() - y).abs() <= 1e-10, "y={y}");
            y += 1e-3;
        }
        for y in [1e3, 1e6, 1e10, 1e14, -2e14] {
            let z = erfi_inv(y).unwrap();
            assert!(((erfi(z).unwrap() - y) / y).abs() <= 1e-12, "y={y}");
        }
    }

    #[test]
    fn kolmogorov_series_values() {
        assert_eq!(kolmogorov_q(0.0), 1.0);
        assert_eq!(ks_asymptotic_pvalue(0.0, 100).unwrap(), 1.0);
        // direct summation of the alternating series at lambda = 1
        let direct: f64 = 2.0 * (1..50).map(|k| {
            let k = k as f64;
            (-1f64).powf(k - 1.0) * (-2.0 * k * k).exp()
        }).sum::<f64>();
        assert!((direct - 0.269_999_671).abs() < 1e-8);
        assert!((kolmogorov_q(1.0) - direct).abs() < 1e-12);
        assert!(kolmogorov_q(5.0) < 1e-10);
        // the two branches agree where they meet
        let a = kolmogorov_q(1.18 - 1e-12);
        let b = kolmogorov_q(1.18 + 1e-12);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ks_pvalue_regime() {
        assert!(matches!(ks_asymptotic_pvalue(0.1, 34), Err(Error::Unsupported(_))));
        assert!(ks_asymptotic_pvalue(1.5, 100).is_err());
        let p = ks_asymptotic_pvalue(0.5, 100).unwrap();
        assert!(p < 1e-10);
    }

    #[test]
    fn kolmogorov_monotone() {
        let mut prev = 1.0;
        for i in 1..400 {
            let q = kolmogorov_q(i as f64 * 0.01);
            assert!(q <= prev);
            prev = q;
        }
    }
}
