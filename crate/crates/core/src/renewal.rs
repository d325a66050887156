//! The discrete renewal relation between the occupation sequence
//! `u_n = P{S_n = 0}` and the first-return distribution `p_n = P{tau = n}`:
//!
//! `u_0 = 1`, `u_n = sum_{k=1..n} p_k u_{n-k}`,
//!
//! its inversion, the escape-probability map `p = U / (1 + U)`, and the
//! alternating convolution series valid when the total occupation mass is
//! below one.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::occupation::{MethodTag, OccupationSeq, OccupationTotal};
use crate::parallel::{self, Neumaier};
use crate::rational::{rat_to_f64, Rat};

/// A (defective) first-return distribution on `1..=n_max`. Index 0 is kept
/// for alignment and is always zero.
#[derive(Debug, Clone)]
pub struct ReturnDist {
    values: Vec<f64>,
    errors: Vec<f64>,
    exact: Option<Vec<Rat>>,
    law_fingerprint: String,
}

impl ReturnDist {
    pub fn from_values(values: Vec<f64>, law_fingerprint: &str) -> Self {
        assert!(!values.is_empty() && values[0] == 0.0);
        let errors = vec![0.0; values.len()];
        ReturnDist {
            values,
            errors,
            exact: None,
            law_fingerprint: law_fingerprint.to_string(),
        }
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `p_n`; zero outside the computed horizon.
    pub fn value(&self, n: usize) -> f64 {
        self.values.get(n).copied().unwrap_or(0.0)
    }

    pub fn error(&self, n: usize) -> f64 {
        self.errors.get(n).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exact(&self) -> Option<&[Rat]> {
        self.exact.as_deref()
    }

    pub fn law_fingerprint(&self) -> &str {
        &self.law_fingerprint
    }

    /// Partial mass `P_N = sum_{n<=N} p_n`.
    pub fn partial_mass(&self) -> f64 {
        let mut acc = Neumaier::new();
        for &v in &self.values {
            acc.add(v);
        }
        acc.total()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = Neumaier::new();
        for &v in &self.values {
            acc.add(v);
            out.push(acc.total());
        }
        out
    }
}

fn forward_kernel<T>(p: &[T], n_max: usize) -> Vec<T>
where
    T: Clone + Zero + One,
    for<'a> &'a T: std::ops::Mul<&'a T, Output = T>,
{
    let mut u: Vec<T> = Vec::with_capacity(n_max + 1);
    u.push(T::one());
    for n in 1..=n_max {
        let mut acc = T::zero();
        for k in 1..=n.min(p.len() - 1) {
            acc = acc + &p[k] * &u[n - k];
        }
        u.push(acc);
    }
    u
}

fn invert_kernel<T>(u: &[T]) -> Vec<T>
where
    T: Clone + Zero,
    for<'a> &'a T: std::ops::Mul<&'a T, Output = T> + std::ops::Sub<&'a T, Output = T>,
{
    let n_max = u.len() - 1;
    let mut p: Vec<T> = Vec::with_capacity(n_max + 1);
    p.push(T::zero());
    for n in 1..=n_max {
        let mut acc = T::zero();
        for k in 1..n {
            acc = acc + &p[k] * &u[n - k];
        }
        p.push(&u[n] - &acc);
    }
    p
}

/// Build the occupation sequence generated by a first-return distribution.
pub fn forward_renewal(p: &ReturnDist, n_max: usize) -> Result<OccupationSeq> {
    if p.values.iter().any(|&x| x < 0.0) {
        return Err(Error::OutOfRange("return distribution has negative mass".into()));
    }
    let mass = p.partial_mass();
    if mass > 1.0 + 1e-12 {
        return Err(Error::OutOfRange(format!(
            "return distribution has total mass {mass} > 1"
        )));
    }
    let exact = p
        .exact
        .as_ref()
        .map(|pe| forward_kernel(pe, n_max));
    let values = match &exact {
        Some(ue) => ue.iter().map(rat_to_f64).collect(),
        None => forward_kernel(&p.values, n_max),
    };
    Ok(OccupationSeq::from_parts(
        values,
        None,
        exact,
        MethodTag::Convolution,
        p.law_fingerprint.clone(),
    ))
}

/// Invert the renewal relation: recover `p_n` from `u_n`.
///
/// Exact in rational mode. In float mode a first-order error estimate is
/// propagated from the per-entry bounds of `u`; values below `-neg_tol`
/// signal an input that is not a genuine occupation sequence.
pub fn invert_renewal(u: &OccupationSeq, neg_tol: f64) -> Result<ReturnDist> {
    if u.value(0) != 1.0 {
        return Err(Error::BadLeadingTerm(u.value(0)));
    }
    if let Some(ue) = u.exact() {
        if !ue[0].is_one() {
            return Err(Error::BadLeadingTerm(rat_to_f64(&ue[0])));
        }
        let pe = invert_kernel(ue);
        for (n, v) in pe.iter().enumerate() {
            if v.is_negative() {
                return Err(Error::InconsistentSequence {
                    n,
                    value: rat_to_f64(v),
                });
            }
        }
        let values = pe.iter().map(rat_to_f64).collect();
        let errors = vec![0.0; pe.len()];
        return Ok(ReturnDist {
            values,
            errors,
            exact: Some(pe),
            law_fingerprint: u.law_fingerprint().to_string(),
        });
    }

    let n_max = u.n_max();
    let mut p = vec![0.0f64; n_max + 1];
    let mut perr = vec![0.0f64; n_max + 1];
    for n in 1..=n_max {
        let mut acc = Neumaier::new();
        let mut eacc = u.error(n);
        for k in 1..n {
            acc.add(p[k] * u.value(n - k));
            eacc += perr[k] * u.value(n - k) + p[k] * u.error(n - k);
        }
        let v = u.value(n) - acc.total();
        if v < -neg_tol - eacc {
            return Err(Error::InconsistentSequence { n, value: v });
        }
        p[n] = v.max(0.0);
        perr[n] = eacc;
    }
    Ok(ReturnDist {
        values: p,
        errors: perr,
        exact: None,
        law_fingerprint: u.law_fingerprint().to_string(),
    })
}

/// Escape-probability estimate `p = U / (1 + U)` with the bracket of `U`
/// pushed through the monotone map.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PEstimate {
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn estimate_return_prob(total: &OccupationTotal) -> PEstimate {
    let map = |u: f64| {
        let u = u.max(0.0);
        u / (1.0 + u)
    };
    PEstimate {
        p: map(total.total),
        lo: map(total.total - total.bound),
        hi: map(total.total + total.bound),
    }
}

/// `k`-fold self-convolution of the shifted sequence `(u_1, u_2, ...)`,
/// truncated to the horizon of `u`. Index `n` of the result is
/// `u^{*(k)}_n`; it vanishes for `n < k`.
pub fn self_convolution_power(u: &OccupationSeq, k: usize) -> Vec<f64> {
    assert!(k >= 1, "convolution power needs k >= 1");
    let n_max = u.n_max();
    let base: Vec<f64> = (0..=n_max).map(|n| if n == 0 { 0.0 } else { u.value(n) }).collect();
    let mut acc = base.clone();
    for _ in 1..k {
        acc = convolve_truncated(&acc, &base);
    }
    acc
}

/// Truncated convolution of two sequences indexed from 0; entry 0 of both
/// inputs is zero here, so the output is too.
fn convolve_truncated(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n_max = a.len() - 1;
    let chunks = parallel::map_chunks(n_max + 1, 512, |_, range| {
        range
            .map(|n| {
                let mut acc = Neumaier::new();
                for k in 1..n {
                    acc.add(a[k] * b[n - k]);
                }
                acc.total()
            })
            .collect::<Vec<f64>>()
    });
    chunks.into_iter().flatten().collect()
}

/// Result of the alternating convolution series
/// `p_n = sum_{k=1..n} (-1)^{k+1} u^{*(k)}_n`.
#[derive(Debug, Clone)]
pub struct AlternatingSeries {
    /// Truncated series value.
    pub value: f64,
    /// Whether the expansion converges at all horizons
    /// (total occupation mass below one, i.e. `p < 1/2`).
    pub applicable: bool,
    /// Partial sums after each term, for diagnostic display.
    pub partial_sums: Vec<f64>,
    /// Rigorous bound on the truncation remainder when `applicable`
    /// (zero when the series was evaluated exactly, `k_max >= n`).
    pub truncation_bound: f64,
}

/// Evaluate the alternating series for `p_n` with at most `k_max` terms.
///
/// `u_total` is the (tail-corrected) total occupation mass `U`; the series
/// converges exactly when `U < 1`. With `k_max >= n` the finite sum is the
/// exact coefficient identity regardless of `U`; partial sums are still
/// reported when not applicable, for display only.
pub fn alternating_series(u: &OccupationSeq, n: usize, k_max: usize, u_total: f64) -> Result<AlternatingSeries> {
    if n > u.n_max() {
        return Err(Error::HorizonTooShort(format!(
            "series index {n} beyond computed horizon {}",
            u.n_max()
        )));
    }
    let applicable = u_total < 1.0;
    let terms = k_max.min(n).max(1);
    let base: Vec<f64> = (0..=n).map(|m| if m == 0 { 0.0 } else { u.value(m) }).collect();
    let mut conv = base.clone();
    let mut value = conv[n];
    let mut partial_sums = vec![value];
    for k in 2..=terms {
        conv = convolve_truncated(&conv, &base);
        if k % 2 == 0 {
            value -= conv[n];
        } else {
            value += conv[n];
        }
        partial_sums.push(value);
    }
    let truncation_bound = if terms >= n {
        0.0
    } else if applicable {
        // sum_{k > K} u^{*(k)}_n <= sum_{k > K} U^k = U^{K+1} / (1 - U)
        u_total.powi(terms as i32 + 1) / (1.0 - u_total)
    } else {
        f64::INFINITY
    };
    Ok(AlternatingSeries {
        value,
        applicable,
        partial_sums,
        truncation_bound,
    })
}

/// Exact rational forward kernel, exposed for oracle-grade round trips.
pub fn forward_kernel_exact(p: &[Rat], n_max: usize) -> Vec<Rat> {
    forward_kernel(p, n_max)
}

/// Exact rational inversion kernel.
pub fn invert_kernel_exact(u: &[Rat]) -> Vec<Rat> {
    invert_kernel(u)
}

/// Build an exact ReturnDist from rationals (test/oracle helper).
pub fn return_dist_exact(values: Vec<BigRational>, law_fingerprint: &str) -> ReturnDist {
    let floats = values.iter().map(rat_to_f64).collect();
    ReturnDist {
        values: floats,
        errors: vec![0.0; values.len()],
        exact: Some(values),
        law_fingerprint: law_fingerprint.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;

    fn useq(values: Vec<f64>) -> OccupationSeq {
        OccupationSeq::from_parts(values, None, None, MethodTag::Convolution, "test".into())
    }

    #[test]
    fn forward_example_by_hand() {
        // p = (1/2, 1/24) gives u_1 = 1/2, u_2 = 1/24 + 1/4 = 7/24.
        let p = ReturnDist::from_values(vec![0.0, 0.5, 1.0 / 24.0], "test");
        let u = forward_renewal(&p, 4).unwrap();
        assert!((u.value(1) - 0.5).abs() < 1e-15);
        assert!((u.value(2) - 7.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn forward_of_zero_mass() {
        let p = ReturnDist::from_values(vec![0.0, 0.0, 0.0], "test");
        let u = forward_renewal(&p, 6).unwrap();
        assert_eq!(u.value(0), 1.0);
        for n in 1..=6 {
            assert_eq!(u.value(n), 0.0);
        }
        let p0 = invert_renewal(&u, 1e-12).unwrap();
        assert!(p0.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_float() {
        let p_in = vec![0.0, 0.3, 0.05, 0.2, 0.0, 0.1, 0.15];
        let p = ReturnDist::from_values(p_in.clone(), "test");
        let u = forward_renewal(&p, p_in.len() - 1).unwrap();
        let back = invert_renewal(&u, 1e-12).unwrap();
        for n in 0..p_in.len() {
            assert!((back.value(n) - p_in[n]).abs() < 1e-14);
        }
    }

    #[test]
    fn round_trip_exact() {
        let vals: Vec<Rat> = ["0/1", "1/3", "1/7", "0/1", "5/21"]
            .iter()
            .map(|s| parse_rational(s).unwrap())
            .collect();
        let p = return_dist_exact(vals.clone(), "test");
        let u = forward_renewal(&p, 4).unwrap();
        let back = invert_renewal(&u, 0.0).unwrap();
        assert_eq!(back.exact().unwrap(), &vals[..]);
    }

    #[test]
    #[should_panic(expected = "u_0 must be exactly 1")]
    fn occupation_seq_rejects_bad_leading_term() {
        let _ = useq(vec![0.9, 0.1]);
    }

    #[test]
    fn inversion_flags_inconsistent_sequences() {
        // u_2 far below u_1^2 forces p_2 < 0.
        let u = useq(vec![1.0, 0.9, 0.1]);
        assert!(matches!(
            invert_renewal(&u, 1e-9),
            Err(Error::InconsistentSequence { n: 2, .. })
        ));
    }

    #[test]
    fn drifted_walk_binomial_values() {
        // P{+1} = 0.8, P{-1} = 0.2: u_{2m} = C(2m, m) 0.16^m.
        let mut u_vals = vec![0.0; 9];
        u_vals[0] = 1.0;
        u_vals[2] = 2.0 * 0.16;
        u_vals[4] = 6.0 * 0.16f64.powi(2);
        u_vals[6] = 20.0 * 0.16f64.powi(3);
        u_vals[8] = 70.0 * 0.16f64.powi(4);
        let u = useq(u_vals);
        let p = invert_renewal(&u, 1e-12).unwrap();
        assert!((p.value(2) - 0.32).abs() < 1e-15);
        assert!((p.value(4) - 0.0512).abs() < 1e-15);

        // Alternating series at n = 4 matches (U = 2/3 < 1).
        let s = alternating_series(&u, 4, 64, 2.0 / 3.0).unwrap();
        assert!(s.applicable);
        assert!((s.value - 0.0512).abs() < 1e-15);
        assert_eq!(s.truncation_bound, 0.0);
    }

    #[test]
    fn self_convolution_examples() {
        let u = useq(vec![1.0, 0.5, 0.0, 0.0]);
        let c1 = self_convolution_power(&u, 1);
        assert_eq!(&c1[1..], &[0.5, 0.0, 0.0]);
        let c2 = self_convolution_power(&u, 2);
        assert!((c2[2] - 0.25).abs() < 1e-15);
        assert_eq!(c2[1], 0.0);
    }

    #[test]
    fn alternating_series_single_term() {
        let u = useq(vec![1.0, 0.37, 0.2]);
        let s = alternating_series(&u, 1, 10, 0.8).unwrap();
        assert_eq!(s.value, 0.37);
    }

    #[test]
    fn truncation_bound_is_rigorous() {
        // Geometric occupation: u_n = q^n with q = 0.45, U = 0.45/(1-0.45) < 1.
        let q: f64 = 0.45;
        let n_max = 24;
        let vals: Vec<f64> = (0..=n_max).map(|n| if n == 0 { 1.0 } else { q.powi(n as i32) }).collect();
        let u = useq(vals);
        let u_total = q / (1.0 - q);
        let p = invert_renewal(&u, 1e-12).unwrap();
        for k_max in [2usize, 4, 8] {
            let s = alternating_series(&u, 16, k_max, u_total).unwrap();
            assert!((s.value - p.value(16)).abs() <= s.truncation_bound + 1e-15);
        }
    }

    #[test]
    fn estimate_maps_bracket_monotonically() {
        let total = OccupationTotal {
            partial: 0.6,
            tail: 0.0666,
            total: 0.6666,
            bound: 0.01,
            g0_used: 0.0,
            horizon: 100,
        };
        let est = estimate_return_prob(&total);
        assert!(est.lo <= est.p && est.p <= est.hi);
        assert!((est.p - 0.6666 / 1.6666).abs() < 1e-12);
    }
}
