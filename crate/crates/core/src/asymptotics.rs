//! Norming plans, limit-density constants and convergence diagnostics.
//!
//! For a drift-free walk with componentwise norming `c_{nr} = n^{1/alpha_r}`
//! the product norming is `C_n = n^eta`, `eta = sum_r 1/alpha_r`, and the
//! occupation sequence satisfies `u_n ~ index * g(0) / C_n` on the live
//! residue class, where `index` is the lattice multiplicity and `g` the
//! limit density. The first-return mass obeys
//! `p_n ~ (1-p)^2 u_n`; this module tabulates the ratio ladders, runs the
//! Aitken acceleration and reports the relative gaps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Family, StepLaw, WalkClass};
use crate::occupation::OccupationSeq;
use crate::renewal::{PEstimate, ReturnDist};
use crate::special::{gamma, zeta};

/// Componentwise pure-power norming. The scale of the limit law is kept
/// separate (`scales`) and enters through the density constants, not the
/// norming itself, so `C_n = n^eta` exactly.
#[derive(Debug, Clone, Serialize)]
pub struct NormingPlan {
    alphas: Vec<f64>,
    scales: Vec<f64>,
    eta: f64,
}

impl NormingPlan {
    pub fn new(alphas: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || alphas.len() != scales.len() {
            return Err(Error::PlanMismatch(
                "norming plan needs one index and one scale per component".into(),
            ));
        }
        if alphas.iter().any(|&a| !(a > 0.0 && a <= 2.0)) {
            return Err(Error::OutOfRange(format!(
                "stable indices must lie in (0, 2], got {alphas:?}"
            )));
        }
        if scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::OutOfRange("scales must be positive".into()));
        }
        let eta = alphas.iter().map(|a| 1.0 / a).sum();
        Ok(NormingPlan { alphas, scales, eta })
    }

    /// All-components-Gaussian plan (`alpha_r = 2`, `C_n = n^{d/2}`).
    pub fn finite_variance(dim: usize) -> Self {
        NormingPlan {
            alphas: vec![2.0; dim],
            scales: vec![1.0; dim],
            eta: dim as f64 / 2.0,
        }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `c_{nr} = n^{1/alpha_r}`.
    pub fn component_norming(&self, r: usize, n: usize) -> f64 {
        (n as f64).powf(1.0 / self.alphas[r])
    }

    /// `C_n = prod_r c_{nr} = n^eta`.
    pub fn product_norming(&self, n: usize) -> f64 {
        (n as f64).powf(self.eta)
    }
}

/// Scale of the symmetric stable limit for the power-tail family, with
/// the convention `c_n = n^{1/alpha}` and limit char fn
/// `exp(-(sigma |t|)^alpha)`.
#[derive(Debug, Clone, Serialize)]
pub struct StableScale {
    pub sigma: f64,
    /// Human-readable record of the convention used.
    pub formula: String,
}

/// Tail-to-scale constant: from
/// `1 - phi(t) ~ 2 c I_alpha |t|^alpha`, `I_alpha = integral (1-cos y) y^{-1-alpha} dy
/// = pi / (2 alpha sin(pi alpha / 2) Gamma(alpha))` and `2c = 1/zeta(1+alpha)`,
/// so `sigma^alpha = I_alpha / zeta(1+alpha)`.
pub fn stable_scale_from_tail(alpha: f64) -> Result<StableScale> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::OutOfRange(format!(
            "stable scale defined for alpha in (0, 2), got {alpha}"
        )));
    }
    let i_alpha = std::f64::consts::PI
        / (2.0 * alpha * (std::f64::consts::PI * alpha / 2.0).sin() * gamma(alpha));
    let sigma = (i_alpha / zeta(1.0 + alpha)?).powf(1.0 / alpha);
    Ok(StableScale {
        sigma,
        formula: "sigma = (pi / (2 alpha sin(pi alpha/2) Gamma(alpha) zeta(1+alpha)))^(1/alpha); \
                  limit char fn exp(-(sigma |t|)^alpha) with norming c_n = n^(1/alpha)"
            .into(),
    })
}

/// Build the norming plan for a drift-free law in an implemented family.
pub fn make_norming(law: &StepLaw, cls: &WalkClass) -> Result<NormingPlan> {
    if !cls.drift_free {
        return Err(Error::DriftedLaw {
            mean: cls.mean.clone().unwrap_or_default(),
        });
    }
    match law.family() {
        Family::FiniteAtoms => Ok(NormingPlan::finite_variance(law.dim())),
        Family::SymmetricPowerTail { alpha } => {
            let scale = stable_scale_from_tail(*alpha)?;
            NormingPlan::new(vec![*alpha], vec![scale.sigma])
        }
    }
}

/// Gaussian limit density at the origin: `(2 pi)^{-d/2} (det B)^{-1/2}`.
pub fn gaussian_density_at_origin(b: &[Vec<f64>]) -> Result<f64> {
    let d = b.len();
    if d == 0 || b.iter().any(|row| row.len() != d) {
        return Err(Error::OutOfRange("covariance matrix must be square".into()));
    }
    let scale = b
        .iter()
        .flat_map(|r| r.iter().map(|x| x.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    for i in 0..d {
        for j in 0..i {
            if (b[i][j] - b[j][i]).abs() > 1e-9 * scale {
                return Err(Error::OutOfRange("covariance matrix must be symmetric".into()));
            }
        }
    }
    // Cholesky; any non-positive pivot means the matrix is not positive
    // definite (det B = 0 included).
    let mut l = vec![vec![0.0f64; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let mut acc = b[i][j];
            for k in 0..j {
                acc -= l[i][k] * l[j][k];
            }
            if i == j {
                if acc <= 1e-14 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i][i] = acc.sqrt();
            } else {
                l[i][j] = acc / l[j][j];
            }
        }
    }
    let sqrt_det: f64 = (0..d).map(|i| l[i][i]).product();
    Ok((2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) / sqrt_det)
}

/// Symmetric stable marginal density at zero for char fn
/// `exp(-(sigma |t|)^alpha)`: `Gamma(1 + 1/alpha) / (pi sigma)`. For
/// independent components the joint value is the product of marginals.
/// `alpha = 2` is admitted as the Gaussian consistency point.
pub fn stable_density_at_origin(alpha: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::OutOfRange(format!(
            "stable index must lie in (0, 2], got {alpha}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::OutOfRange("scale must be positive".into()));
    }
    Ok(gamma(1.0 + 1.0 / alpha) / (std::f64::consts::PI * sigma))
}

/// Theorem-2 asymptote: `(1-p)^2 g0 / C_n`.
pub fn predicted_return_mass(p: f64, g0: f64, plan: &NormingPlan, n: usize) -> f64 {
    let defect = 1.0 - p;
    defect * defect * g0 / plan.product_norming(n)
}

/// Aitken delta-squared acceleration of consecutive triples.
/// Returns one value per triple (two fewer than the input).
pub fn aitken(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in xs.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let denom = (c - b) - (b - a);
        if denom.abs() <= 1e-300 + 1e-12 * (c - b).abs().max((b - a).abs()) {
            out.push(c);
        } else {
            out.push(c - (c - b) * (c - b) / denom);
        }
    }
    out
}

/// Accelerated limit with a plausibility guard.
///
/// On a halving ladder a clean geometric error of ratio `r <= 0.78` moves
/// the extrapolated limit at most `r/(1-r) ~ 3.5` last increments beyond
/// the final point. A far larger move means the increments have dropped
/// to the data's contamination floor (aliasing, roundoff) and the
/// extrapolation is amplifying noise; in that case fall back to the
/// deepest triple that is still plausible, or to the last raw value.
pub fn aitken_limit(xs: &[f64]) -> f64 {
    let acc = aitken(xs);
    for (i, &a) in acc.iter().enumerate().rev() {
        let last = xs[i + 2];
        let step = (xs[i + 2] - xs[i + 1]).abs();
        if (a - last).abs() <= 5.0 * step + 1e-13 * last.abs() {
            return a;
        }
    }
    *xs.last().unwrap()
}

/// Geometric index ladder `..., top/4, top/2, top`, snapped down to the
/// live residue class (`period | n`) and cut off below `min_n`.
pub fn halving_ladder(top: usize, min_n: usize, period: u64) -> Vec<usize> {
    let rho = period.max(1) as usize;
    let floor = min_n.max(rho);
    let mut ns = Vec::new();
    let mut n = top - top % rho;
    while n >= floor {
        ns.push(n);
        let half = n / 2 - (n / 2) % rho;
        if half >= n {
            break;
        }
        n = half;
    }
    ns.reverse();
    ns
}

/// Empirical limit of `C_n u_n` over a ladder, divided by the lattice
/// multiplicity so the estimate targets `g(0)` itself.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub ladder: Vec<usize>,
    pub raw: Vec<f64>,
    pub accelerated: Vec<f64>,
    pub degenerate: bool,
    pub multiplicity: u64,
}

pub fn empirical_density_at_origin(
    u: &OccupationSeq,
    plan: &NormingPlan,
    multiplicity: u128,
    ladder: &[usize],
) -> Result<DensityEstimate> {
    let live: Vec<usize> = ladder
        .iter()
        .copied()
        .filter(|&n| n >= 1 && n <= u.n_max() && u.value(n) > 0.0)
        .collect();
    let mult = multiplicity.max(1) as f64;
    if live.len() < 3 {
        // A fully dead ladder is the degenerate (never-returning) case;
        // anything else is a horizon problem.
        if ladder.iter().all(|&n| u.value(n) == 0.0) && !ladder.is_empty() {
            return Ok(DensityEstimate {
                value: 0.0,
                ladder: ladder.to_vec(),
                raw: vec![0.0; ladder.len()],
                accelerated: Vec::new(),
                degenerate: true,
                multiplicity: multiplicity.max(1) as u64,
            });
        }
        return Err(Error::HorizonTooShort(format!(
            "need at least 3 live ladder points, got {}",
            live.len()
        )));
    }
    let raw: Vec<f64> = live.iter().map(|&n| plan.product_norming(n) * u.value(n)).collect();
    let accelerated = aitken(&raw);
    let limit = aitken_limit(&raw);
    let degenerate = raw.iter().all(|&x| x.abs() < 1e-250);
    Ok(DensityEstimate {
        value: if degenerate { 0.0 } else { limit / mult },
        ladder: live,
        raw,
        accelerated,
        degenerate,
        multiplicity: multiplicity.max(1) as u64,
    })
}

/// Largest deviation of `p_{n+1}/p_n` from 1 over a tail window.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothnessReport {
    pub window: (usize, usize),
    pub max_deviation: Option<f64>,
    pub checked: usize,
    pub skipped: usize,
}

pub fn smoothness_check(p: &ReturnDist, window: (usize, usize)) -> SmoothnessReport {
    let (lo, hi) = window;
    let mut max_dev: Option<f64> = None;
    let mut checked = 0;
    let mut skipped = 0;
    for n in lo..hi.min(p.n_max()) {
        let a = p.value(n);
        let b = p.value(n + 1);
        if a > 0.0 && b > 0.0 {
            let dev = (b / a - 1.0).abs();
            max_dev = Some(max_dev.map_or(dev, |m: f64| m.max(dev)));
            checked += 1;
        } else {
            skipped += 1;
        }
    }
    SmoothnessReport {
        window,
        max_deviation: max_dev,
        checked,
        skipped,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Verdicts {
    pub aperiodic: bool,
    pub transient: bool,
    pub drift_free: bool,
}

impl Verdicts {
    pub fn from_class(cls: &WalkClass) -> Self {
        Verdicts {
            aperiodic: cls.aperiodic,
            transient: cls.transient,
            drift_free: cls.drift_free,
        }
    }

    /// Every failed hypothesis, joined; `None` when all hold.
    pub fn failed_hypothesis(&self, eta: f64) -> Option<String> {
        let mut failed = Vec::new();
        if !self.aperiodic {
            failed.push("not aperiodic (support differences do not generate the full lattice)".to_string());
        }
        if !self.drift_free {
            failed.push("nonzero drift".to_string());
        }
        if !self.transient {
            failed.push(format!("recurrent (eta = {eta} <= 1)"));
        }
        if failed.is_empty() {
            None
        } else {
            Some(failed.join("; "))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderRow {
    pub n: usize,
    pub u: f64,
    pub p: f64,
    pub cn_un: f64,
    pub ratio: f64,
    pub predicted_p: f64,
}

/// Full diagnostics for the main asymptotic: ratio ladder, accelerated
/// limit, empirical and model constants, relative gaps.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub verdicts: Verdicts,
    pub p_estimate: PEstimate,
    pub target_ratio: f64,
    pub multiplicity: u64,
    pub ladder: Vec<LadderRow>,
    pub ratio_accelerated: Vec<f64>,
    pub ratio_limit: f64,
    pub ratio_gap: f64,
    pub constant_accelerated: Vec<f64>,
    pub g0_empirical: f64,
    pub g0_model: Option<f64>,
    pub g0_gap: Option<f64>,
    pub sup_cn_un: f64,
    pub notes: Vec<String>,
}

/// Tabulate `rho_n = p_n / u_n` and `C_n u_n` on a ladder and accelerate
/// both. `g0_model` is the analytic constant when available (Gaussian or
/// stable); the prediction rows use it, falling back to the empirical
/// value.
#[allow(clippy::too_many_arguments)]
pub fn theorem_report(
    p_seq: &ReturnDist,
    u: &OccupationSeq,
    p_est: &PEstimate,
    plan: &NormingPlan,
    cls: &WalkClass,
    g0_model: Option<f64>,
    ladder: &[usize],
    notes: Vec<String>,
) -> Result<TheoremReport> {
    let live: Vec<usize> = ladder
        .iter()
        .copied()
        .filter(|&n| n >= 1 && n <= u.n_max().min(p_seq.n_max()) && u.value(n) > 0.0)
        .collect();
    if live.len() < 3 {
        return Err(Error::HorizonTooShort(format!(
            "ratio ladder has {} live points, need at least 3",
            live.len()
        )));
    }
    let multiplicity = cls.lattice_index.unwrap_or(1);
    let density = empirical_density_at_origin(u, plan, multiplicity, &live)?;
    let target = (1.0 - p_est.p) * (1.0 - p_est.p);
    let g0_for_prediction = g0_model.unwrap_or(density.value);
    let rows: Vec<LadderRow> = live
        .iter()
        .map(|&n| {
            let un = u.value(n);
            let pn = p_seq.value(n);
            LadderRow {
                n,
                u: un,
                p: pn,
                cn_un: plan.product_norming(n) * un,
                ratio: pn / un,
                predicted_p: multiplicity as f64
                    * predicted_return_mass(p_est.p, g0_for_prediction, plan, n),
            }
        })
        .collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let ratio_accelerated = aitken(&ratios);
    let ratio_limit = aitken_limit(&ratios);
    let ratio_gap = (ratio_limit - target).abs() / target;
    let g0_gap = g0_model.map(|m| (density.value - m).abs() / m);
    let mut sup_cn_un = 0.0f64;
    for n in 1..=u.n_max() {
        let x = plan.product_norming(n) * u.value(n);
        if x > sup_cn_un {
            sup_cn_un = x;
        }
    }
    Ok(TheoremReport {
        verdicts: Verdicts::from_class(cls),
        p_estimate: *p_est,
        target_ratio: target,
        multiplicity: multiplicity.min(u64::MAX as u128) as u64,
        ladder: rows,
        ratio_accelerated,
        ratio_limit,
        ratio_gap,
        constant_accelerated: density.accelerated.clone(),
        g0_empirical: density.value,
        g0_model,
        g0_gap,
        sup_cn_un,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupation::MethodTag;
    use approx::assert_relative_eq;

    #[test]
    fn norming_examples() {
        let plan = NormingPlan::finite_variance(3);
        assert_eq!(plan.eta(), 1.5);
        assert_relative_eq!(plan.product_norming(4), 8.0);
        let pt = NormingPlan::new(vec![0.7], vec![1.0]).unwrap();
        assert_relative_eq!(pt.eta(), 10.0 / 7.0, max_relative = 1e-15);
        assert!(NormingPlan::new(vec![2.5], vec![1.0]).is_err());
    }

    #[test]
    fn gaussian_density_examples() {
        let b1 = vec![vec![1.0]];
        assert_relative_eq!(
            gaussian_density_at_origin(&b1).unwrap(),
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-14
        );
        let b = vec![
            vec![1.0 / 6.0, 0.0, 0.0],
            vec![0.0, 1.0 / 6.0, 0.0],
            vec![0.0, 0.0, 1.0 / 6.0],
        ];
        let g0 = gaussian_density_at_origin(&b).unwrap();
        assert_relative_eq!(g0, 0.933162, max_relative = 2e-6);
        let singular = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(
            gaussian_density_at_origin(&singular),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn gaussian_density_rotation_invariant() {
        // Gram-Schmidt a fixed matrix into Q, conjugate a diagonal B.
        let raw = [
            [0.8, -0.3, 0.5],
            [0.2, 0.9, -0.4],
            [-0.5, 0.1, 0.7],
        ];
        let mut q: Vec<Vec<f64>> = Vec::new();
        for row in raw {
            let mut v = row.to_vec();
            for prev in &q {
                let dot: f64 = v.iter().zip(prev.iter()).map(|(a, b)| a * b).sum();
                for (x, p) in v.iter_mut().zip(prev.iter()) {
                    *x -= dot * p;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
            q.push(v);
        }
        let diag = [0.5, 1.25, 2.0];
        let mut b = vec![vec![0.0; 3]; 3];
        let mut bq = vec![vec![0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = if i == j { diag[i] } else { 0.0 };
                for k in 0..3 {
                    bq[i][j] += q[i][k] * diag[k] * q[j][k];
                }
            }
        }
        assert_relative_eq!(
            gaussian_density_at_origin(&b).unwrap(),
            gaussian_density_at_origin(&bq).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn stable_density_examples() {
        assert_relative_eq!(
            stable_density_at_origin(1.0, 1.0).unwrap(),
            1.0 / std::f64::consts::PI,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            stable_density_at_origin(2.0, 1.0).unwrap(),
            0.5 / std::f64::consts::PI.sqrt(),
            max_relative = 1e-14
        );
        // Quadrature of the inversion integral (1/pi) int exp(-t^a) dt.
        let a = 0.7f64;
        let h = 1e-4;
        let mut acc = 0.0;
        let mut t = 0.0;
        while t < 80.0 {
            let f0 = (-(t as f64).powf(a)).exp();
            let f1 = (-((t + h) as f64).powf(a)).exp();
            acc += 0.5 * (f0 + f1) * h;
            t += h;
        }
        assert_relative_eq!(
            stable_density_at_origin(a, 1.0).unwrap(),
            acc / std::f64::consts::PI,
            max_relative = 1e-6
        );
    }

    #[test]
    fn stable_scale_closed_form_at_cauchy() {
        let s = stable_scale_from_tail(1.0).unwrap();
        assert_relative_eq!(s.sigma, 3.0 / std::f64::consts::PI, max_relative = 1e-13);
        assert!(s.formula.contains("zeta"));
    }

    #[test]
    fn aitken_kills_geometric_error() {
        let xs: Vec<f64> = (0..8).map(|i| 2.5 + 3.0 * 0.61f64.powi(i)).collect();
        let acc = aitken(&xs);
        for v in acc {
            assert_relative_eq!(v, 2.5, max_relative = 1e-10);
        }
    }

    #[test]
    fn ladder_respects_period_and_floor() {
        assert_eq!(halving_ladder(512, 8, 1), vec![8, 16, 32, 64, 128, 256, 512]);
        assert_eq!(halving_ladder(500, 8, 2), vec![14, 30, 62, 124, 250, 500]);
        assert!(halving_ladder(500, 8, 2).iter().all(|n| n % 2 == 0));
        assert!(halving_ladder(6, 8, 1).is_empty());
    }

    #[test]
    fn prediction_is_homogeneous_in_g0() {
        let plan = NormingPlan::finite_variance(3);
        let a = predicted_return_mass(0.3, 1.0, &plan, 37);
        let b = predicted_return_mass(0.3, 2.0, &plan, 37);
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-15);
        // (1-p)^2 factor is exact
        let c = predicted_return_mass(0.0, 1.0, &plan, 37);
        assert_relative_eq!(a, 0.49 * c, max_relative = 1e-15);
    }

    #[test]
    fn fixed_point_ratio_has_zero_gap() {
        // Synthetic p with p_n = (1-q)^2 u_n exactly: the diagnostic must
        // report the target with no bias of its own.
        let q = 0.3f64;
        let law = crate::lattice::StepLaw::from_atoms_rational(
            1,
            vec![
                (vec![0], crate::rational::parse_rational("1/2").unwrap()),
                (vec![1], crate::rational::parse_rational("1/4").unwrap()),
                (vec![-1], crate::rational::parse_rational("1/4").unwrap()),
            ],
        )
        .unwrap();
        let caps = crate::occupation::Caps::default();
        let u = crate::occupation::occupation_exact(&law.to_float(), 64, &caps).unwrap();
        let factor = (1.0 - q) * (1.0 - q);
        let p_vals: Vec<f64> = (0..=64).map(|n| if n == 0 { 0.0 } else { factor * u.value(n) }).collect();
        let p_seq = ReturnDist::from_values(p_vals, u.law_fingerprint());
        let plan = NormingPlan::finite_variance(1);
        let cls = crate::lattice::classify(&law, &plan).unwrap();
        let est = PEstimate { p: q, lo: q, hi: q };
        let ladder = halving_ladder(64, 4, 1);
        let report = theorem_report(&p_seq, &u, &est, &plan, &cls, None, &ladder, vec![]).unwrap();
        assert!(report.ratio_gap < 1e-13, "gap = {}", report.ratio_gap);
        assert_relative_eq!(report.ratio_limit, factor, max_relative = 1e-13);
    }

    #[test]
    fn density_estimate_flags_degenerate() {
        let u = OccupationSeq::from_parts(
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            None,
            None,
            MethodTag::Convolution,
            "t".into(),
        );
        let plan = NormingPlan::finite_variance(1);
        let d = empirical_density_at_origin(&u, &plan, 1, &[1, 2, 3, 4]).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn smoothness_on_geometric_sequence() {
        let r = 0.9f64;
        let vals: Vec<f64> = (0..40).map(|n| if n == 0 { 0.0 } else { 0.1 * r.powi(n) }).collect();
        let p = ReturnDist::from_values(vals, "t");
        let rep = smoothness_check(&p, (10, 30));
        assert_relative_eq!(rep.max_deviation.unwrap(), 0.1, max_relative = 1e-12);
        assert_eq!(rep.skipped, 0);
        // zeros inside the window are skipped, not interpolated
        let mut vals2 = vec![0.0; 40];
        vals2[10] = 0.5;
        vals2[12] = 0.5;
        let p2 = ReturnDist::from_values(vals2, "t");
        let rep2 = smoothness_check(&p2, (9, 14));
        assert!(rep2.skipped > 0);
    }
}
