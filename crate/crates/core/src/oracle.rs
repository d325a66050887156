//! Independent ground truth for the rest of the crate.
//!
//! * `taboo_dp` — the origin-avoiding dynamic program
//!   `f_m(x) = P{S_m = x, tau > m}`, exact rationals in rational mode;
//!   the first-return masses `p_m` fall out of the final gather.
//! * `exact_enumeration` — direct sum over `support^n` paths with early
//!   pruning; a third route, independent of both the DP and the renewal
//!   chain.
//! * `simulate_walks` — seeded Monte Carlo with fixed trial partitioning
//!   and counter-based substreams, bit-reproducible whatever the worker
//!   count, with Wilson confidence intervals.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::weighted_alias::WeightedAliasIndex;

use crate::error::{Error, Result};
use crate::lattice::{Family, LatticeBox, StepLaw};
use crate::occupation::{conv_evolution_f64, Caps};
use crate::parallel;
use crate::rational::{rat_to_f64, Prob, Rat};
use crate::renewal::{return_dist_exact, ReturnDist};

/// Two-sided 99% normal quantile used for Wilson intervals.
pub const Z99: f64 = 2.575829303548901;

// ---------------------------------------------------------------------
// Taboo dynamic program
// ---------------------------------------------------------------------

/// `P{S_m = x, tau > m}` on the exactly-reachable box, plus the derived
/// first-return masses and survival probabilities.
#[derive(Debug, Clone)]
pub struct TabooTable {
    pub horizon: usize,
    pub bbox: LatticeBox,
    /// Final layer `f_n(x)` as floats.
    pub taboo_final: Vec<f64>,
    taboo_final_exact: Option<Vec<Rat>>,
    /// First-return distribution `p_1..p_n` extracted layer by layer.
    pub return_mass: ReturnDist,
    /// `P{tau > m}` for `m = 0..=n`; nonincreasing.
    pub survival: Vec<f64>,
}

impl TabooTable {
    pub fn taboo_exact(&self) -> Option<&[Rat]> {
        self.taboo_final_exact.as_deref()
    }
}

/// Run the taboo DP to horizon `n`. Single-threaded by design: layers are
/// sequential and the table is oracle-grade code.
pub fn taboo_dp(law: &StepLaw, n: usize, caps: &Caps) -> Result<TabooTable> {
    let radii_base = law.support_radius().ok_or_else(|| {
        Error::UnsupportedFamily("taboo dynamic program needs a finite-support law".into())
    })?;
    let radii: Vec<i64> = radii_base.iter().map(|&a| a * n as i64).collect();
    let bbox = LatticeBox::new(radii);
    let dim = law.dim();
    let origin = vec![0i64; dim];
    if law.is_rational() {
        let atoms: Vec<(Vec<i64>, Rat)> = law
            .atoms_exact()
            .unwrap()
            .into_iter()
            .map(|(p, w)| (p.to_vec(), w.clone()))
            .collect();
        let cost = crate::occupation::rational_cost_units(
            bbox.len() as u128,
            n,
            atoms.len(),
            law.denominator_bits().unwrap_or(1),
        );
        if cost > caps.rational_cost {
            return Err(Error::CostCap {
                needed: cost,
                cap: caps.rational_cost,
                hint: " (rational taboo table; reduce the horizon or use float mode)".into(),
            });
        }
        let one = Rat::new(1.into(), 1.into());
        let mut layer = vec![Rat::zero(); bbox.len()];
        layer[bbox.index(&origin)] = one.clone();
        let mut p_exact = vec![Rat::zero()];
        let mut survival_exact = vec![one.clone()];
        for m in 1..=n {
            let sub = LatticeBox::new(radii_base.iter().map(|&a| a * m as i64).collect());
            let mut next = vec![Rat::zero(); bbox.len()];
            let mut p_m = Rat::zero();
            for s_idx in 0..sub.len() {
                let x = sub.decode(s_idx);
                let mut acc = Rat::zero();
                for (s, w) in &atoms {
                    let back: Vec<i64> = x.iter().zip(s).map(|(&a, &b)| a - b).collect();
                    if bbox.contains(&back) {
                        let v = &layer[bbox.index(&back)];
                        if !v.is_zero() {
                            acc = acc + w * v;
                        }
                    }
                }
                if x == origin {
                    p_m = acc; // the mass arriving at 0 is a first return
                } else {
                    next[bbox.index(&x)] = acc;
                }
            }
            survival_exact.push(survival_exact.last().unwrap() - &p_m);
            p_exact.push(p_m);
            layer = next;
        }
        let survival = survival_exact.iter().map(rat_to_f64).collect();
        let taboo_final = layer.iter().map(rat_to_f64).collect();
        Ok(TabooTable {
            horizon: n,
            bbox,
            taboo_final,
            taboo_final_exact: Some(layer),
            return_mass: return_dist_exact(p_exact, law.fingerprint()),
            survival,
        })
    } else {
        caps.check_memory(bbox.len() as u64 * 8 * 2, "taboo table")?;
        let atoms: Vec<(Vec<i64>, f64)> = law
            .atoms_f64()
            .into_iter()
            .map(|(p, w)| (p.to_vec(), w))
            .collect();
        let mut layer = vec![0.0f64; bbox.len()];
        layer[bbox.index(&origin)] = 1.0;
        let mut p_vals = vec![0.0f64];
        let mut survival = vec![1.0f64];
        for m in 1..=n {
            let sub = LatticeBox::new(radii_base.iter().map(|&a| a * m as i64).collect());
            let mut next = vec![0.0f64; bbox.len()];
            let mut p_m = 0.0;
            for s_idx in 0..sub.len() {
                let x = sub.decode(s_idx);
                let mut acc = 0.0;
                for (s, w) in &atoms {
                    let back: Vec<i64> = x.iter().zip(s).map(|(&a, &b)| a - b).collect();
                    if bbox.contains(&back) {
                        acc += w * layer[bbox.index(&back)];
                    }
                }
                if x == origin {
                    p_m = acc;
                } else {
                    next[bbox.index(&x)] = acc;
                }
            }
            survival.push(survival.last().unwrap() - p_m);
            p_vals.push(p_m);
            layer = next;
        }
        Ok(TabooTable {
            horizon: n,
            bbox,
            taboo_final: layer,
            taboo_final_exact: None,
            return_mass: ReturnDist::from_values(p_vals, law.fingerprint()),
            survival,
        })
    }
}

/// Unconstrained position law `P{S_n = x}` on the same box layout as the
/// taboo table (the comparison side of the taboo check).
#[derive(Debug, Clone)]
pub struct PmfTable {
    pub horizon: usize,
    pub bbox: LatticeBox,
    pub values: Vec<f64>,
}

pub fn free_pmf(law: &StepLaw, n: usize, caps: &Caps) -> Result<PmfTable> {
    let evo = conv_evolution_f64(law, n, caps)?;
    Ok(PmfTable {
        horizon: n,
        bbox: evo.bbox,
        values: evo.final_layer,
    })
}

/// Deviation table for the taboo identity on a sup-norm band: how far
/// `f_n(x) / P{S_n = x}` sits from `1 - p`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TabooBandReport {
    pub band: (i64, i64),
    pub checked: usize,
    pub max_rel_deviation: f64,
    pub mean_rel_deviation: f64,
}

pub fn taboo_band_check(
    taboo: &TabooTable,
    free: &PmfTable,
    p: f64,
    band: (i64, i64),
) -> Result<TabooBandReport> {
    if taboo.horizon != free.horizon {
        return Err(Error::OutOfRange(format!(
            "taboo horizon {} and pmf horizon {} differ",
            taboo.horizon, free.horizon
        )));
    }
    if taboo.bbox.radii() != free.bbox.radii() {
        return Err(Error::OutOfRange("taboo and pmf boxes differ".into()));
    }
    let (lo, hi) = band;
    if lo > hi || lo < 0 {
        return Err(Error::OutOfRange(format!("bad band [{lo}, {hi}]")));
    }
    let escape = 1.0 - p;
    let mut max_dev = 0.0f64;
    let mut sum_dev = 0.0f64;
    let mut checked = 0usize;
    for idx in 0..taboo.bbox.len() {
        let fx = free.values[idx];
        if fx <= 1e-280 {
            continue;
        }
        let x = taboo.bbox.decode(idx);
        let norm = x.iter().map(|v| v.abs()).max().unwrap_or(0);
        if norm < lo || norm > hi {
            continue;
        }
        let ratio = taboo.taboo_final[idx] / fx;
        let dev = (ratio / escape - 1.0).abs();
        max_dev = max_dev.max(dev);
        sum_dev += dev;
        checked += 1;
    }
    if checked == 0 {
        return Err(Error::OutOfRange(format!(
            "band [{lo}, {hi}] contains no reachable points at horizon {}",
            taboo.horizon
        )));
    }
    Ok(TabooBandReport {
        band,
        checked,
        max_rel_deviation: max_dev,
        mean_rel_deviation: sum_dev / checked as f64,
    })
}

// ---------------------------------------------------------------------
// Exact path enumeration
// ---------------------------------------------------------------------

/// Direct sum over `support^n`: exact `(u_n, p_n)` for small horizons,
/// fully independent of the DP and the renewal chain.
pub fn exact_enumeration(law: &StepLaw, n: usize, caps: &Caps) -> Result<(Prob, Prob)> {
    let radii = law.support_radius().ok_or_else(|| {
        Error::UnsupportedFamily("path enumeration needs a finite-support law".into())
    })?;
    if n == 0 {
        return Err(Error::OutOfRange("enumeration horizon must be >= 1".into()));
    }
    let atoms_f = law.atoms_f64();
    let k = atoms_f.len() as u128;
    let cost = k.checked_pow(n as u32).unwrap_or(u128::MAX);
    if cost > caps.enum_cost {
        return Err(Error::CostCap {
            needed: cost,
            cap: caps.enum_cost,
            hint: format!(" (|support|^n = {k}^{n}; lower the horizon)"),
        });
    }

    if let Some(atoms) = law.atoms_exact() {
        // Common-denominator integer arithmetic when it fits into u128.
        let mut den = BigInt::one();
        for (_, w) in &atoms {
            den = den.lcm(w.denom());
        }
        let den_pow_n = num_traits::pow::pow(den.clone(), n);
        if let (Some(_), true) = (den.to_u128(), den_pow_n.bits() <= 120) {
            let numers: Vec<u128> = atoms
                .iter()
                .map(|(_, w)| {
                    let scaled = w.numer() * (&den / w.denom());
                    scaled.to_u128().unwrap()
                })
                .collect();
            let steps: Vec<Vec<i64>> = atoms.iter().map(|(p, _)| p.to_vec()).collect();
            let mut acc = EnumAccum {
                u: 0u128,
                p: 0u128,
            };
            let mut pos = vec![0i64; law.dim()];
            enum_dfs_u128(&steps, &numers, &radii, n, 0, 1, false, &mut pos, &mut acc);
            let denom: BigInt = den_pow_n;
            let u = Rat::new(BigInt::from(acc.u), denom.clone());
            let p = Rat::new(BigInt::from(acc.p), denom);
            return Ok((Prob::Exact(u), Prob::Exact(p)));
        }
        // Fall through to exact big-integer arithmetic.
        let numers: Vec<BigInt> = atoms
            .iter()
            .map(|(_, w)| w.numer() * (&den / w.denom()))
            .collect();
        let steps: Vec<Vec<i64>> = atoms.iter().map(|(p, _)| p.to_vec()).collect();
        let mut u_acc = BigInt::zero();
        let mut p_acc = BigInt::zero();
        let mut pos = vec![0i64; law.dim()];
        enum_dfs_big(
            &steps, &numers, &radii, n, 0, BigInt::one(), false, &mut pos, &mut u_acc, &mut p_acc,
        );
        let denom = num_traits::pow::pow(den, n);
        return Ok((
            Prob::Exact(Rat::new(u_acc, denom.clone())),
            Prob::Exact(Rat::new(p_acc, denom)),
        ));
    }

    let steps: Vec<Vec<i64>> = atoms_f.iter().map(|(p, _)| p.to_vec()).collect();
    let weights: Vec<f64> = atoms_f.iter().map(|(_, w)| *w).collect();
    let mut u_acc = 0.0f64;
    let mut p_acc = 0.0f64;
    let mut pos = vec![0i64; law.dim()];
    enum_dfs_f64(&steps, &weights, &radii, n, 0, 1.0, false, &mut pos, &mut u_acc, &mut p_acc);
    Ok((Prob::Float(u_acc), Prob::Float(p_acc)))
}

struct EnumAccum {
    u: u128,
    p: u128,
}

fn reachable(pos: &[i64], radii: &[i64], steps_left: usize) -> bool {
    pos.iter()
        .zip(radii)
        .all(|(&x, &a)| x.abs() <= a * steps_left as i64)
}

#[allow(clippy::too_many_arguments)]
fn enum_dfs_u128(
    steps: &[Vec<i64>],
    numers: &[u128],
    radii: &[i64],
    n: usize,
    depth: usize,
    prod: u128,
    hit_zero: bool,
    pos: &mut Vec<i64>,
    acc: &mut EnumAccum,
) {
    if depth == n {
        if pos.iter().all(|&x| x == 0) {
            acc.u += prod;
            if !hit_zero {
                acc.p += prod;
            }
        }
        return;
    }
    for (s, &w) in steps.iter().zip(numers) {
        for (x, &d) in pos.iter_mut().zip(s) {
            *x += d;
        }
        if reachable(pos, radii, n - depth - 1) {
            let at_zero = pos.iter().all(|&x| x == 0);
            enum_dfs_u128(
                steps,
                numers,
                radii,
                n,
                depth + 1,
                prod * w,
                hit_zero || (at_zero && depth + 1 < n),
                pos,
                acc,
            );
        }
        for (x, &d) in pos.iter_mut().zip(s) {
            *x -= d;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn enum_dfs_big(
    steps: &[Vec<i64>],
    numers: &[BigInt],
    radii: &[i64],
    n: usize,
    depth: usize,
    prod: BigInt,
    hit_zero: bool,
    pos: &mut Vec<i64>,
    u_acc: &mut BigInt,
    p_acc: &mut BigInt,
) {
    if depth == n {
        if pos.iter().all(|&x| x == 0) {
            *u_acc += &prod;
            if !hit_zero {
                *p_acc += &prod;
            }
        }
        return;
    }
    for (s, w) in steps.iter().zip(numers) {
        for (x, &d) in pos.iter_mut().zip(s) {
            *x += d;
        }
        if reachable(pos, radii, n - depth - 1) {
            let at_zero = pos.iter().all(|&x| x == 0);
            enum_dfs_big(
                steps,
                numers,
                radii,
                n,
                depth + 1,
                &prod * w,
                hit_zero || (at_zero && depth + 1 < n),
                pos,
                u_acc,
                p_acc,
            );
        }
        for (x, &d) in pos.iter_mut().zip(s) {
            *x -= d;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn enum_dfs_f64(
    steps: &[Vec<i64>],
    weights: &[f64],
    radii: &[i64],
    n: usize,
    depth: usize,
    prod: f64,
    hit_zero: bool,
    pos: &mut Vec<i64>,
    u_acc: &mut f64,
    p_acc: &mut f64,
) {
    if depth == n {
        if pos.iter().all(|&x| x == 0) {
            *u_acc += prod;
            if !hit_zero {
                *p_acc += prod;
            }
        }
        return;
    }
    for (s, &w) in steps.iter().zip(weights) {
        for (x, &d) in pos.iter_mut().zip(s) {
            *x += d;
        }
        if reachable(pos, radii, n - depth - 1) {
            let at_zero = pos.iter().all(|&x| x == 0);
            enum_dfs_f64(
                steps,
                weights,
                radii,
                n,
                depth + 1,
                prod * w,
                hit_zero || (at_zero && depth + 1 < n),
                pos,
                u_acc,
                p_acc,
            );
        }
        for (x, &d) in pos.iter_mut().zip(s) {
            *x -= d;
        }
    }
}

// ---------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------

/// Per-`n` counts of zero hits and first returns over seeded trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McEstimate {
    pub n_max: usize,
    pub trials: u64,
    pub seed: u64,
    /// `#{trials with S_n = 0}` for n = 1..=n_max (index 0 unused).
    pub zero_hits: Vec<u64>,
    /// `#{trials with tau = n}`.
    pub first_returns: Vec<u64>,
}

impl McEstimate {
    pub fn u_hat(&self, n: usize) -> f64 {
        self.zero_hits[n] as f64 / self.trials as f64
    }

    pub fn p_hat(&self, n: usize) -> f64 {
        self.first_returns[n] as f64 / self.trials as f64
    }

    pub fn u_interval(&self, n: usize) -> (f64, f64) {
        wilson_interval(self.zero_hits[n], self.trials, Z99)
    }

    pub fn p_interval(&self, n: usize) -> (f64, f64) {
        wilson_interval(self.first_returns[n], self.trials, Z99)
    }
}

/// Wilson score interval for a binomial proportion; stays honest at very
/// small proportions, which deep-`n` occupation values are.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

enum StepSampler {
    Atoms {
        table: WeightedAliasIndex<f64>,
        steps: Vec<Vec<i64>>,
    },
    PowerTail(PowerTailSampler),
}

struct PowerTailSampler {
    alpha: f64,
    /// Cumulative mass of `|X| <= k` for k = 1..=k0.
    cdf: Vec<f64>,
    k0: f64,
}

impl PowerTailSampler {
    fn new(alpha: f64) -> Result<Self> {
        let kernel = crate::lattice::PowerTailKernel::new(alpha)?;
        let two_c = 2.0 * kernel.mass_const;
        let k0 = 1024usize;
        let mut cdf = Vec::with_capacity(k0);
        let mut acc = 0.0;
        for k in 1..=k0 {
            acc += two_c * (k as f64).powf(-1.0 - alpha);
            cdf.push(acc);
        }
        Ok(PowerTailSampler {
            alpha,
            cdf,
            k0: k0 as f64,
        })
    }

    /// Sample `|X|`. Inverse CDF through the table, then a discrete-Pareto
    /// rejection sampler for the tail: propose `k = round(L V^{-1/a})`
    /// (a proper pmf by telescoping) and accept with
    /// `a k^(-1-a) / ((k-1/2)^-a - (k+1/2)^-a)`, which the envelope
    /// inequality keeps <= 1, so the scheme is exact (up to an
    /// astronomically-far jump cap of conditional mass ~1e-13^large).
    fn sample_magnitude<R: Rng>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.gen();
        let total = *self.cdf.last().unwrap();
        if u < total {
            let idx = self.cdf.partition_point(|&c| c <= u);
            return idx as i64 + 1;
        }
        let a = self.alpha;
        let l = self.k0 + 0.5;
        loop {
            let v: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let x = l * v.powf(-1.0 / a);
            if !(x < 9.0e17) {
                continue; // cap; conditional mass beyond is ~zero
            }
            let k = (x + 0.5).floor();
            let diff = (k - 0.5).powf(-a) - (k + 0.5).powf(-a);
            let accept = a * k.powf(-1.0 - a) / diff;
            if rng.gen::<f64>() < accept {
                return k as i64;
            }
        }
    }
}

fn build_sampler(law: &StepLaw) -> Result<StepSampler> {
    match law.family() {
        Family::FiniteAtoms => {
            let atoms = law.atoms_f64();
            let steps: Vec<Vec<i64>> = atoms.iter().map(|(p, _)| p.to_vec()).collect();
            let weights: Vec<f64> = atoms.iter().map(|(_, w)| *w).collect();
            let table = WeightedAliasIndex::new(weights)
                .map_err(|e| Error::InvalidLaw(format!("alias table: {e}")))?;
            Ok(StepSampler::Atoms { table, steps })
        }
        Family::SymmetricPowerTail { alpha } => {
            Ok(StepSampler::PowerTail(PowerTailSampler::new(*alpha)?))
        }
    }
}

const MC_BLOCK: u64 = 8192;

fn run_block(
    sampler: &StepSampler,
    dim: usize,
    n_max: usize,
    trials: u64,
    seed: u64,
    block: u64,
) -> (Vec<u64>, Vec<u64>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(block + 1);
    let mut zero_hits = vec![0u64; n_max + 1];
    let mut first_returns = vec![0u64; n_max + 1];
    let mut pos = vec![0i128; dim];
    for _ in 0..trials {
        pos.iter_mut().for_each(|x| *x = 0);
        let mut returned = false;
        for n in 1..=n_max {
            match sampler {
                StepSampler::Atoms { table, steps } => {
                    let s = &steps[table.sample(&mut rng)];
                    for (x, &d) in pos.iter_mut().zip(s) {
                        *x += d as i128;
                    }
                }
                StepSampler::PowerTail(pt) => {
                    let mag = pt.sample_magnitude(&mut rng);
                    let sign = if rng.gen::<bool>() { 1 } else { -1 };
                    pos[0] += (sign * mag) as i128;
                }
            }
            if pos.iter().all(|&x| x == 0) {
                zero_hits[n] += 1;
                if !returned {
                    first_returns[n] += 1;
                    returned = true;
                }
            }
        }
    }
    (zero_hits, first_returns)
}

fn combine_blocks(
    n_max: usize,
    trials: u64,
    seed: u64,
    blocks: Vec<(Vec<u64>, Vec<u64>)>,
) -> McEstimate {
    let mut zero_hits = vec![0u64; n_max + 1];
    let mut first_returns = vec![0u64; n_max + 1];
    for (z, f) in blocks {
        for n in 0..=n_max {
            zero_hits[n] += z[n];
            first_returns[n] += f[n];
        }
    }
    McEstimate {
        n_max,
        trials,
        seed,
        zero_hits,
        first_returns,
    }
}

/// Simulate `trials` walks to `n_max` steps. Trials are partitioned into
/// fixed blocks; block `b` draws from substream `b+1` of the master seed,
/// so results do not depend on scheduling.
pub fn simulate_walks(law: &StepLaw, n_max: usize, trials: u64, seed: u64) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::OutOfRange("need at least one trial".into()));
    }
    let sampler = build_sampler(law)?;
    let dim = law.dim();
    let n_blocks = trials.div_ceil(MC_BLOCK) as usize;
    let blocks = parallel::map_chunks(n_blocks, 1, |b, _| {
        let b = b as u64;
        let lo = b * MC_BLOCK;
        let hi = ((b + 1) * MC_BLOCK).min(trials);
        run_block(&sampler, dim, n_max, hi - lo, seed, b)
    });
    Ok(combine_blocks(n_max, trials, seed, blocks))
}

/// Sequential twin of [`simulate_walks`]; identical output.
pub fn simulate_walks_serial(law: &StepLaw, n_max: usize, trials: u64, seed: u64) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::OutOfRange("need at least one trial".into()));
    }
    let sampler = build_sampler(law)?;
    let dim = law.dim();
    let n_blocks = trials.div_ceil(MC_BLOCK) as usize;
    let blocks = parallel::map_chunks_serial(n_blocks, 1, |b, _| {
        let b = b as u64;
        let lo = b * MC_BLOCK;
        let hi = ((b + 1) * MC_BLOCK).min(trials);
        run_block(&sampler, dim, n_max, hi - lo, seed, b)
    });
    Ok(combine_blocks(n_max, trials, seed, blocks))
}
