//! Scalar special functions: gamma and the Hurwitz/Riemann zeta.
//!
//! Only the real ranges this crate actually touches are supported:
//! `gamma` on the real line away from the poles, `hurwitz_zeta(s, q)` for
//! real `s != 1` and `q > 0`. Accuracy is ~1e-15 relative, enough to keep
//! every downstream tolerance dominated by method error, not by these
//! kernels.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function on the real line (Lanczos, reflection for x < 1/2).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection; blows up at non-positive integers, which is the
        // correct behaviour for a pole.
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

// B_{2j} / (2j)! for j = 1..=8.
const BERN_OVER_FACT: [f64; 8] = [
    8.333_333_333_333_333e-2,
    -1.388_888_888_888_889e-3,
    3.306_878_306_878_307e-5,
    -8.267_195_767_195_768e-7,
    2.087_675_698_786_810e-8,
    -5.284_190_138_687_493e-10,
    1.338_253_653_068_468e-11,
    -3.389_680_296_322_583e-13,
];

/// Hurwitz zeta `sum_{k>=0} (q + k)^{-s}` by Euler-Maclaurin, continued
/// to all real `s != 1`.
pub fn hurwitz_zeta(s: f64, q: f64) -> Result<f64> {
    if s == 1.0 {
        return Err(Error::OutOfRange("hurwitz_zeta: s = 1 is a pole".into()));
    }
    if q <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "hurwitz_zeta: q must be positive, got {q}"
        )));
    }
    // Push the expansion point out far enough that eight Bernoulli terms
    // leave a negligible remainder. For s < 1 the head terms grow, so a
    // distant expansion point would cost absolute accuracy through
    // cancellation; stay close instead (the remainder is still ~1e-16
    // for |s| <= 2 once q + K >= 7).
    let threshold = if s < 1.0 { 7.0 + s.abs() } else { 18.0 + s };
    let shift = if q >= threshold {
        0
    } else {
        (threshold - q).ceil() as usize
    };
    let mut head = 0.0f64;
    for k in 0..shift {
        head += (q + k as f64).powf(-s);
    }
    let a = q + shift as f64;
    let mut tail = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // Correction terms B_{2j}/(2j)! * s(s+1)...(s+2j-2) * a^{-s-2j+1};
    // the rising factorial gains the factors (s+2j-3)(s+2j-2) per step.
    let mut poch = s;
    let mut apow = a.powf(-s - 1.0);
    for (j, bf) in BERN_OVER_FACT.iter().enumerate() {
        if j > 0 {
            let m = 2.0 * (j as f64);
            poch *= (s + m - 1.0) * (s + m);
            apow /= a * a;
        }
        tail += bf * poch * apow;
    }
    Ok(head + tail)
}

/// Riemann zeta for real `s != 1`.
pub fn zeta(s: f64) -> Result<f64> {
    hurwitz_zeta(s, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_reference_points() {
        assert_relative_eq!(gamma(0.5), std::f64::consts::PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(1.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-14);
        assert_relative_eq!(gamma(1.5), 0.5 * std::f64::consts::PI.sqrt(), max_relative = 1e-14);
        // Reflection side.
        assert_relative_eq!(
            gamma(-0.5),
            -2.0 * std::f64::consts::PI.sqrt(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn zeta_reference_points() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(zeta(2.0).unwrap(), pi * pi / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(3.0).unwrap(), 1.202_056_903_159_594_3, max_relative = 1e-14);
        assert_relative_eq!(zeta(1.5).unwrap(), 2.612_375_348_685_488_3, max_relative = 1e-14);
        assert_relative_eq!(zeta(-0.5).unwrap(), -0.207_886_224_977_354_57, max_relative = 1e-13);
    }

    #[test]
    fn hurwitz_reference_points() {
        let pi = std::f64::consts::PI;
        // sum over odd half-integers: (1/2)^-2 + (3/2)^-2 + ... = pi^2/2
        assert_relative_eq!(hurwitz_zeta(2.0, 0.5).unwrap(), pi * pi / 2.0, max_relative = 1e-14);
        assert_relative_eq!(
            hurwitz_zeta(2.0, 1.5).unwrap(),
            pi * pi / 2.0 - 4.0,
            max_relative = 1e-13
        );
        // Large offset regime used by tail corrections.
        let direct: f64 = (0..200_000).map(|k| (4097.0 + k as f64).powf(-1.5)).sum::<f64>()
            + 2.0 * (4097.0_f64 + 200_000.0 - 0.5).powf(-0.5);
        assert_relative_eq!(hurwitz_zeta(1.5, 4097.0).unwrap(), direct, max_relative = 1e-6);
    }

    #[test]
    fn hurwitz_shift_identity() {
        for &(s, q) in &[(1.7, 0.3), (-0.7, 0.25), (2.4, 0.9), (-1.3, 0.6), (0.3, 0.4)] {
            let lhs = hurwitz_zeta(s, q).unwrap();
            let rhs = q.powf(-s) + hurwitz_zeta(s, q + 1.0).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn zeta_functional_equation() {
        // zeta(-a) = 2^-a pi^(-1-a) sin(-pi a / 2) Gamma(1 + a) zeta(1 + a).
        // Tolerance reflects the cancellation floor of the continuation at
        // negative arguments, not the remainder of the expansion.
        let pi = std::f64::consts::PI;
        for &a in &[0.3, 0.7, 1.2, 1.8] {
            let lhs = zeta(-a).unwrap();
            let rhs = 2f64.powf(-a)
                * pi.powf(-1.0 - a)
                * (-pi * a / 2.0).sin()
                * gamma(1.0 + a)
                * zeta(1.0 + a).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-13);
        }
    }
}
