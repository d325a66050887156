//! The occupation sequence `u_n = P{S_n = 0}`.
//!
//! Three computation routes:
//!
//! * `occupation_exact` — iterated convolution of the step mass function
//!   on the exactly-reachable box; exact rationals when the law is exact.
//! * `occupation_exact_dft` — averaging `phi(lambda)^n` over a uniform
//!   torus grid with at least `2 N a + 1` points per dimension. The
//!   integrand is a trigonometric polynomial of degree `<= N a`, so the
//!   grid average equals the Fourier coefficient with zero aliasing.
//! * `occupation_aliased` — the same grid average on a coarser grid;
//!   the result is `sum_{x = 0 mod M} P{S_n = x} >= u_n`, an upper bound
//!   whose excess carries a certified error bound.
//!
//! Grid sweeps run a fixed-order chunked reduction (see [`crate::parallel`])
//! so parallel and sequential builds agree bit for bit.

use num_complex::Complex64;

use crate::asymptotics::NormingPlan;
use crate::error::{Error, Result};
use crate::lattice::{Family, LatticeBox, StepLaw, WalkClass};
use crate::parallel::{self, Neumaier, CHUNK};
use crate::rational::{rat_to_f64, Rat};
use crate::special::hurwitz_zeta;

/// How an occupation sequence was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum MethodTag {
    #[serde(rename = "exact-dft")]
    ExactDft,
    #[serde(rename = "aliased-dft")]
    AliasedDft,
    #[serde(rename = "convolution")]
    Convolution,
    #[serde(rename = "rational-dp")]
    RationalDp,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::ExactDft => "exact-dft",
            MethodTag::AliasedDft => "aliased-dft",
            MethodTag::Convolution => "convolution",
            MethodTag::RationalDp => "rational-dp",
        }
    }
}

/// `u_0..u_N` with per-entry absolute error bounds.
#[derive(Debug, Clone)]
pub struct OccupationSeq {
    values: Vec<f64>,
    errors: Vec<f64>,
    exact: Option<Vec<Rat>>,
    method: MethodTag,
    law_fingerprint: String,
}

impl OccupationSeq {
    pub fn from_parts(
        values: Vec<f64>,
        errors: Option<Vec<f64>>,
        exact: Option<Vec<Rat>>,
        method: MethodTag,
        law_fingerprint: String,
    ) -> Self {
        assert!(!values.is_empty(), "occupation sequence needs u_0");
        assert!(values[0] == 1.0, "u_0 must be exactly 1");
        let errors = errors.unwrap_or_else(|| vec![0.0; values.len()]);
        assert_eq!(errors.len(), values.len());
        OccupationSeq {
            values,
            errors,
            exact,
            method,
            law_fingerprint,
        }
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value(&self, n: usize) -> f64 {
        self.values.get(n).copied().unwrap_or(0.0)
    }

    pub fn error(&self, n: usize) -> f64 {
        self.errors.get(n).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn exact(&self) -> Option<&[Rat]> {
        self.exact.as_deref()
    }

    pub fn method(&self) -> MethodTag {
        self.method
    }

    pub fn law_fingerprint(&self) -> &str {
        &self.law_fingerprint
    }
}

/// Per-dimension grid sizes for torus averaging.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct GridSpec {
    dims: Vec<usize>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&m| m < 3) {
            return Err(Error::OutOfRange(format!(
                "grid sizes must all be >= 3, got {dims:?}"
            )));
        }
        Ok(GridSpec { dims })
    }

    pub fn uniform(dim: usize, m: usize) -> Result<Self> {
        Self::new(vec![m; dim])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn points(&self) -> usize {
        self.dims.iter().product()
    }

    /// Grid with every dimension doubled (halves the alias lattice).
    pub fn doubled(&self) -> GridSpec {
        GridSpec {
            dims: self.dims.iter().map(|&m| m * 2).collect(),
        }
    }

    pub fn halved(&self) -> Result<GridSpec> {
        Self::new(self.dims.iter().map(|&m| (m / 2).max(3)).collect())
    }
}

/// Resource limits. The memory cap is configurable through the
/// `FIRSTRET_MEMORY_CAP_MB` environment variable.
#[derive(Debug, Clone, Copy)]
pub struct Caps {
    pub memory_bytes: u64,
    /// site x step x atom budget for exact-rational kernels
    pub rational_cost: u128,
    /// |support|^n budget for path enumeration
    pub enum_cost: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            memory_bytes: 3 * 1024 * 1024 * 1024,
            rational_cost: 60_000_000,
            enum_cost: 12_000_000,
        }
    }
}

/// Work units for an exact-rational kernel over `box_len` sites and
/// `n` steps with `atoms` transitions: entry digits grow linearly with
/// the step count, so the per-operation cost scales with the word count
/// of `n * den_bits`.
pub fn rational_cost_units(box_len: u128, n: usize, atoms: usize, den_bits: u64) -> u128 {
    let words = ((n as u128 * den_bits as u128) + 63) / 64;
    box_len * n as u128 * atoms as u128 * words.max(1)
}

/// Exact-rational convolution cost for `law` to horizon `n`; `None` for
/// float-mode laws.
pub fn rational_conv_cost(law: &StepLaw, n: usize) -> Option<u128> {
    let radii = law.support_radius()?;
    let den_bits = law.denominator_bits()?;
    let box_len: u128 = radii
        .iter()
        .map(|&a| 2 * (a.max(1) as u128) * n as u128 + 1)
        .product();
    Some(rational_cost_units(
        box_len,
        n,
        law.atoms_f64().len(),
        den_bits,
    ))
}

impl Caps {
    pub fn from_env() -> Self {
        let mut caps = Caps::default();
        if let Ok(v) = std::env::var("FIRSTRET_MEMORY_CAP_MB") {
            if let Ok(mb) = v.trim().parse::<u64>() {
                caps.memory_bytes = mb * 1024 * 1024;
            }
        }
        caps
    }

    pub fn check_memory(&self, needed: u64, hint: &str) -> Result<()> {
        if needed > self.memory_bytes {
            return Err(Error::MemoryCap {
                needed_mb: needed / (1024 * 1024) + 1,
                cap_mb: self.memory_bytes / (1024 * 1024),
                hint: if hint.is_empty() {
                    String::new()
                } else {
                    format!(" ({hint})")
                },
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// Convolution route
// ---------------------------------------------------------------------

pub(crate) struct ConvEvolution<T> {
    pub bbox: LatticeBox,
    pub final_layer: Vec<T>,
    pub origin_values: Vec<T>,
}

fn finite_support_radii(law: &StepLaw) -> Result<Vec<i64>> {
    law.support_radius().ok_or_else(|| {
        Error::UnsupportedFamily("operation requires a finite-support law".into())
    })
}

pub(crate) fn conv_evolution_f64(law: &StepLaw, n_max: usize, caps: &Caps) -> Result<ConvEvolution<f64>> {
    let radii: Vec<i64> = finite_support_radii(law)?
        .iter()
        .map(|&a| a * n_max as i64)
        .collect();
    let bbox = LatticeBox::new(radii);
    caps.check_memory(bbox.len() as u64 * 8 * 2, "convolution layers")?;
    let atoms: Vec<(Vec<i64>, f64)> = law
        .atoms_f64()
        .into_iter()
        .map(|(p, w)| (p.to_vec(), w))
        .collect();
    let mut layer = vec![0.0f64; bbox.len()];
    let origin_idx = bbox.index(&vec![0i64; law.dim()]);
    layer[origin_idx] = 1.0;
    let mut origin_values = Vec::with_capacity(n_max + 1);
    origin_values.push(1.0);
    for _ in 1..=n_max {
        let prev = &layer;
        let chunks = parallel::map_chunks(bbox.len(), CHUNK, |_, range| {
            let mut out = Vec::with_capacity(range.len());
            for idx in range {
                let x = bbox.decode(idx);
                let mut acc = 0.0;
                for (s, w) in &atoms {
                    // position before the step: x - s
                    let back: Vec<i64> = x.iter().zip(s).map(|(&a, &b)| a - b).collect();
                    if bbox.contains(&back) {
                        acc += w * prev[bbox.index(&back)];
                    }
                }
                out.push(acc);
            }
            out
        });
        layer = chunks.into_iter().flatten().collect();
        origin_values.push(layer[origin_idx]);
    }
    Ok(ConvEvolution {
        bbox,
        final_layer: layer,
        origin_values,
    })
}

pub(crate) fn conv_evolution_exact(law: &StepLaw, n_max: usize, caps: &Caps) -> Result<ConvEvolution<Rat>> {
    use num_traits::Zero;
    let base_radii = finite_support_radii(law)?;
    let radii: Vec<i64> = base_radii.iter().map(|&a| a * n_max as i64).collect();
    let bbox = LatticeBox::new(radii);
    let atoms: Vec<(Vec<i64>, Rat)> = law
        .atoms_exact()
        .ok_or_else(|| Error::UnsupportedFamily("exact kernel needs a rational-mode law".into()))?
        .into_iter()
        .map(|(p, w)| (p.to_vec(), w.clone()))
        .collect();
    let cost = rational_cost_units(
        bbox.len() as u128,
        n_max,
        atoms.len(),
        law.denominator_bits().unwrap_or(1),
    );
    if cost > caps.rational_cost {
        return Err(Error::CostCap {
            needed: cost,
            cap: caps.rational_cost,
            hint: " (exact-rational convolution; reduce the horizon or switch to float mode)".into(),
        });
    }
    let mut layer = vec![Rat::zero(); bbox.len()];
    let origin_idx = bbox.index(&vec![0i64; law.dim()]);
    layer[origin_idx] = Rat::new(1.into(), 1.into());
    let mut origin_values = Vec::with_capacity(n_max + 1);
    origin_values.push(layer[origin_idx].clone());
    for m in 1..=n_max {
        // reachable sub-box at step m
        let sub = LatticeBox::new(base_radii.iter().map(|&a| a * m as i64).collect());
        let mut next = vec![Rat::zero(); bbox.len()];
        for sub_idx in 0..sub.len() {
            let x = sub.decode(sub_idx);
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
            next[bbox.index(&x)] = acc;
        }
        layer = next;
        origin_values.push(layer[origin_idx].clone());
    }
    Ok(ConvEvolution {
        bbox,
        final_layer: layer,
        origin_values,
    })
}

/// Occupation sequence by iterated convolution; exact when the law is in
/// rational mode.
pub fn occupation_exact(law: &StepLaw, n_max: usize, caps: &Caps) -> Result<OccupationSeq> {
    if law.is_rational() {
        let evo = conv_evolution_exact(law, n_max, caps)?;
        let values: Vec<f64> = evo.origin_values.iter().map(rat_to_f64).collect();
        Ok(OccupationSeq::from_parts(
            values,
            None,
            Some(evo.origin_values),
            MethodTag::RationalDp,
            law.fingerprint().to_string(),
        ))
    } else {
        let evo = conv_evolution_f64(law, n_max, caps)?;
        Ok(OccupationSeq::from_parts(
            evo.origin_values,
            None,
            None,
            MethodTag::Convolution,
            law.fingerprint().to_string(),
        ))
    }
}

// ---------------------------------------------------------------------
// Grid route
// ---------------------------------------------------------------------

enum PhiGrid {
    /// Axis-symmetric laws: real char fn on the folded grid with
    /// per-point multiplicities.
    Real {
        values: Vec<f64>,
        weights: Vec<f64>,
        total_weight: f64,
    },
    /// General laws: complex char fn over the full grid.
    Complex { values: Vec<Complex64> },
}

struct FoldedGrid {
    dims: Vec<usize>,
    halves: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl FoldedGrid {
    fn new(dims: &[usize]) -> Self {
        let halves: Vec<usize> = dims.iter().map(|&m| m / 2 + 1).collect();
        let mut strides = vec![0usize; dims.len()];
        let mut len = 1usize;
        for (r, &h) in halves.iter().enumerate().rev() {
            strides[r] = len;
            len *= h;
        }
        FoldedGrid {
            dims: dims.to_vec(),
            halves,
            strides,
            len,
        }
    }

    #[inline]
    fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut j = vec![0usize; self.halves.len()];
        for r in 0..self.halves.len() {
            j[r] = idx / self.strides[r];
            idx %= self.strides[r];
        }
        j
    }

    /// Number of full-grid points folded onto this one.
    fn weight(&self, j: &[usize]) -> f64 {
        let mut w = 1.0;
        for (r, &jr) in j.iter().enumerate() {
            let m = self.dims[r];
            let self_paired = jr == 0 || (m % 2 == 0 && jr == m / 2);
            if !self_paired {
                w *= 2.0;
            }
        }
        w
    }
}

fn full_grid_decode(dims: &[usize], mut idx: usize) -> Vec<usize> {
    let mut j = vec![0usize; dims.len()];
    for r in (0..dims.len()).rev() {
        j[r] = idx % dims[r];
        idx /= dims[r];
    }
    j
}

fn build_phi_grid(law: &StepLaw, grid: &GridSpec, caps: &Caps) -> Result<PhiGrid> {
    let two_pi = 2.0 * std::f64::consts::PI;
    if law.is_axis_symmetric() {
        match law.family() {
            Family::SymmetricPowerTail { alpha } => {
                let kernel = crate::lattice::PowerTailKernel::new(*alpha)?;
                let m = grid.dims()[0];
                let folded = FoldedGrid::new(grid.dims());
                caps.check_memory(folded.len as u64 * 8 * 3, "power-tail grid")?;
                let chunks = parallel::map_chunks(folded.len, CHUNK, |_, range| {
                    let mut vals = Vec::with_capacity(range.len());
                    for j in range {
                        if j == 0 {
                            vals.push(1.0);
                        } else {
                            let x = j as f64 / m as f64;
                            vals.push(kernel.char_fn(two_pi * x).unwrap_or(f64::NAN));
                        }
                    }
                    vals
                });
                let values: Vec<f64> = chunks.into_iter().flatten().collect();
                if values.iter().any(|v| v.is_nan()) {
                    return Err(Error::PrecisionFailure(
                        "power-tail characteristic function evaluation failed".into(),
                    ));
                }
                let weights: Vec<f64> = (0..folded.len).map(|i| folded.weight(&folded.decode(i))).collect();
                let total_weight = grid.points() as f64;
                Ok(PhiGrid::Real {
                    values,
                    weights,
                    total_weight,
                })
            }
            Family::FiniteAtoms => {
                let folded = FoldedGrid::new(grid.dims());
                caps.check_memory(folded.len as u64 * 8 * 3, "grid sweep")?;
                let atoms: Vec<(Vec<i64>, f64)> = law
                    .atoms_f64()
                    .into_iter()
                    .map(|(p, w)| (p.to_vec(), w))
                    .collect();
                let dims: Vec<f64> = grid.dims().iter().map(|&m| m as f64).collect();
                let chunks = parallel::map_chunks(folded.len, CHUNK, |_, range| {
                    let mut out = Vec::with_capacity(range.len() * 2);
                    for idx in range {
                        let j = folded.decode(idx);
                        let lambda: Vec<f64> = j
                            .iter()
                            .zip(&dims)
                            .map(|(&jr, &m)| two_pi * jr as f64 / m)
                            .collect();
                        let mut phi = 0.0;
                        for (p, w) in &atoms {
                            let dot: f64 = p.iter().zip(&lambda).map(|(&x, &l)| x as f64 * l).sum();
                            phi += w * dot.cos();
                        }
                        out.push(phi);
                        out.push(folded.weight(&j));
                    }
                    out
                });
                let mut values = Vec::with_capacity(folded.len);
                let mut weights = Vec::with_capacity(folded.len);
                for pair in chunks.into_iter().flatten().collect::<Vec<f64>>().chunks(2) {
                    values.push(pair[0]);
                    weights.push(pair[1]);
                }
                Ok(PhiGrid::Real {
                    values,
                    weights,
                    total_weight: grid.points() as f64,
                })
            }
        }
    } else {
        match law.family() {
            Family::FiniteAtoms => {
                let points = grid.points();
                caps.check_memory(points as u64 * 16 * 2, "complex grid sweep")?;
                let atoms: Vec<(Vec<i64>, f64)> = law
                    .atoms_f64()
                    .into_iter()
                    .map(|(p, w)| (p.to_vec(), w))
                    .collect();
                let dims = grid.dims().to_vec();
                let chunks = parallel::map_chunks(points, CHUNK, |_, range| {
                    let mut out = Vec::with_capacity(range.len());
                    for idx in range {
                        let j = full_grid_decode(&dims, idx);
                        let lambda: Vec<f64> = j
                            .iter()
                            .zip(&dims)
                            .map(|(&jr, &m)| two_pi * jr as f64 / m as f64)
                            .collect();
                        let mut phi = Complex64::new(0.0, 0.0);
                        for (p, w) in &atoms {
                            let dot: f64 = p.iter().zip(&lambda).map(|(&x, &l)| x as f64 * l).sum();
                            phi += Complex64::from_polar(*w, dot);
                        }
                        out.push(phi);
                    }
                    out
                });
                Ok(PhiGrid::Complex {
                    values: chunks.into_iter().flatten().collect(),
                })
            }
            Family::SymmetricPowerTail { .. } => unreachable!("power tail is axis-symmetric"),
        }
    }
}

/// One chunk's compensated partial sums, per power `n`.
fn combine_chunk_sums(partials: Vec<Vec<f64>>, n_max: usize, scale: f64) -> Vec<f64> {
    let mut u = vec![0.0f64; n_max + 1];
    u[0] = 1.0;
    for n in 1..=n_max {
        let mut acc = Neumaier::new();
        for part in &partials {
            acc.add(part[n]);
        }
        u[n] = (acc.total() / scale).clamp(0.0, 1.0);
    }
    u
}

fn real_chunk_sweep(phi: &[f64], weights: &[f64], range: std::ops::Range<usize>, n_max: usize) -> Vec<f64> {
    let phi0 = &phi[range.clone()];
    let w = &weights[range];
    let mut prod: Vec<f64> = phi0.to_vec();
    let mut out = vec![0.0f64; n_max + 1];
    for n in 1..=n_max {
        if n > 1 {
            for (pr, &ph) in prod.iter_mut().zip(phi0) {
                *pr *= ph;
            }
        }
        let mut acc = Neumaier::new();
        for (&pr, &wi) in prod.iter().zip(w) {
            acc.add(wi * pr);
        }
        out[n] = acc.total();
    }
    out
}

fn complex_chunk_sweep(phi: &[Complex64], range: std::ops::Range<usize>, n_max: usize) -> Vec<f64> {
    let phi0 = &phi[range];
    let mut prod: Vec<Complex64> = phi0.to_vec();
    let mut out = vec![0.0f64; n_max + 1];
    for n in 1..=n_max {
        if n > 1 {
            for (pr, &ph) in prod.iter_mut().zip(phi0) {
                *pr *= ph;
            }
        }
        let mut acc = Neumaier::new();
        for pr in &prod {
            acc.add(pr.re);
        }
        out[n] = acc.total();
    }
    out
}

/// Average `phi^n` over a folded real grid for `n = 1..=n_max`.
/// Deterministic chunked reduction; used directly by the benchmarks.
pub fn sweep_powers_real(phi: &[f64], weights: &[f64], total_weight: f64, n_max: usize) -> Vec<f64> {
    let partials = parallel::map_chunks(phi.len(), CHUNK, |_, range| {
        real_chunk_sweep(phi, weights, range, n_max)
    });
    combine_chunk_sums(partials, n_max, total_weight)
}

/// Sequential twin of [`sweep_powers_real`]; bit-identical output.
pub fn sweep_powers_real_serial(phi: &[f64], weights: &[f64], total_weight: f64, n_max: usize) -> Vec<f64> {
    let partials = parallel::map_chunks_serial(phi.len(), CHUNK, |_, range| {
        real_chunk_sweep(phi, weights, range, n_max)
    });
    combine_chunk_sums(partials, n_max, total_weight)
}

/// Average `Re phi^n` over the full complex grid for `n = 1..=n_max`.
pub fn sweep_powers_complex(phi: &[Complex64], n_max: usize) -> Vec<f64> {
    let partials = parallel::map_chunks(phi.len(), CHUNK, |_, range| {
        complex_chunk_sweep(phi, range, n_max)
    });
    combine_chunk_sums(partials, n_max, phi.len() as f64)
}

/// Sequential twin of [`sweep_powers_complex`].
pub fn sweep_powers_complex_serial(phi: &[Complex64], n_max: usize) -> Vec<f64> {
    let partials = parallel::map_chunks_serial(phi.len(), CHUNK, |_, range| {
        complex_chunk_sweep(phi, range, n_max)
    });
    combine_chunk_sums(partials, n_max, phi.len() as f64)
}

/// Zero-aliasing grid route: `M_r = 2 N a_r + 1` points per dimension.
pub fn occupation_exact_dft(law: &StepLaw, n_max: usize, caps: &Caps) -> Result<OccupationSeq> {
    let radii = finite_support_radii(law)?;
    let dims: Vec<usize> = radii
        .iter()
        .map(|&a| (2 * (a.max(1)) as usize * n_max + 1).max(3))
        .collect();
    let grid = GridSpec::new(dims)?;
    let values = match build_phi_grid(law, &grid, caps)? {
        PhiGrid::Real {
            values,
            weights,
            total_weight,
        } => sweep_powers_real(&values, &weights, total_weight, n_max),
        PhiGrid::Complex { values } => sweep_powers_complex(&values, n_max),
    };
    Ok(OccupationSeq::from_parts(
        values,
        None,
        None,
        MethodTag::ExactDft,
        law.fingerprint().to_string(),
    ))
}

/// Aliased grid route on an arbitrary grid. The values dominate `u_n`
/// (`u_n^{(M)} = sum_{x = 0 mod M} P{S_n = x}`) and carry the certified
/// alias bound per entry. With `target` set, the grid must certify at
/// least that bound at the final horizon.
pub fn occupation_aliased(
    law: &StepLaw,
    n_max: usize,
    grid: &GridSpec,
    caps: &Caps,
    target: Option<f64>,
) -> Result<OccupationSeq> {
    if grid.dims().len() != law.dim() {
        return Err(Error::OutOfRange(format!(
            "grid has {} dimensions, law has {}",
            grid.dims().len(),
            law.dim()
        )));
    }
    let errors: Vec<f64> = (0..=n_max).map(|n| alias_error_bound(law, n, grid)).collect();
    if let Some(t) = target {
        let achieved = errors[n_max];
        if achieved > t {
            return Err(Error::GridTooSmall {
                dims: grid.dims().to_vec(),
                n: n_max,
                target: t,
                achievable: achieved,
            });
        }
    }
    let values = match build_phi_grid(law, grid, caps)? {
        PhiGrid::Real {
            values,
            weights,
            total_weight,
        } => sweep_powers_real(&values, &weights, total_weight, n_max),
        PhiGrid::Complex { values } => sweep_powers_complex(&values, n_max),
    };
    Ok(OccupationSeq::from_parts(
        values,
        Some(errors),
        None,
        MethodTag::AliasedDft,
        law.fingerprint().to_string(),
    ))
}

/// Certified upper bound on the aliasing excess
/// `u_n^{(M)} - u_n <= P{S_n outside (-M_r/2, M_r/2]^d for some r}`.
///
/// Bounded support uses a per-coordinate Hoeffding bound around the
/// drift; the power tail takes the best of a family of big-step union
/// bounds plus a truncated-variance Chebyshev term.
pub fn alias_error_bound(law: &StepLaw, n: usize, grid: &GridSpec) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    match law.family() {
        Family::FiniteAtoms => {
            let atoms = law.atoms_f64();
            let mu = law.mean().unwrap_or_else(|| vec![0.0; law.dim()]);
            let mut total = 0.0;
            for r in 0..law.dim() {
                let min = atoms.iter().map(|(p, _)| p[r]).min().unwrap() as f64;
                let max = atoms.iter().map(|(p, _)| p[r]).max().unwrap() as f64;
                let width = max - min;
                let half = grid.dims()[r] as f64 / 2.0;
                for t in [half - nf * mu[r], half + nf * mu[r]] {
                    if t <= 0.0 {
                        total += 1.0;
                    } else if width > 0.0 {
                        total += (-2.0 * t * t / (nf * width * width)).exp();
                    }
                }
            }
            total.min(1.0)
        }
        Family::SymmetricPowerTail { alpha } => {
            let a = *alpha;
            let m = grid.dims()[0] as f64;
            let two_c = crate::lattice::PowerTailKernel::new(a)
                .map(|k| 2.0 * k.mass_const)
                .unwrap_or(f64::NAN);
            let tail_mass = |b: f64| -> f64 {
                // P{|X| > b} = 2c sum_{k > b} k^(-1-a)
                hurwitz_zeta(1.0 + a, b.floor() + 1.0)
                    .map(|z| two_c * z)
                    .unwrap_or(f64::INFINITY)
            };
            let trunc_second_moment = |b: f64| -> f64 {
                // 2c sum_{k <= b} k^(1-a)
                let head = hurwitz_zeta(a - 1.0, 1.0).unwrap_or(f64::NAN)
                    - hurwitz_zeta(a - 1.0, b.floor() + 1.0).unwrap_or(f64::NAN);
                two_c * head
            };
            let mut best = 1.0f64;
            let mut b = (m / (4.0 * nf)).floor().max(1.0);
            while b <= 4.0 * m {
                let union = nf * tail_mass(b);
                let cheb = if nf * b < m / 2.0 {
                    0.0
                } else {
                    nf * trunc_second_moment(b) / (m / 2.0 * (m / 2.0))
                };
                let bound = union + cheb;
                if bound.is_finite() {
                    best = best.min(bound);
                }
                b *= 2.0;
            }
            best.min(1.0)
        }
    }
}

/// Smallest uniform odd grid meeting `target` at horizon `n_max`.
pub fn auto_grid(law: &StepLaw, n_max: usize, target: f64, caps: &Caps) -> Result<GridSpec> {
    match law.family() {
        Family::FiniteAtoms => {
            let d = law.dim();
            let mut m = 5usize;
            loop {
                let grid = GridSpec::uniform(d, m)?;
                if alias_error_bound(law, n_max, &grid) <= target {
                    let folded_points: usize = grid.dims().iter().map(|&mm| mm / 2 + 1).product();
                    let bytes = if law.is_axis_symmetric() {
                        folded_points as u64 * 8 * 3
                    } else {
                        grid.points() as u64 * 16 * 2
                    };
                    caps.check_memory(bytes, "auto-selected grid")?;
                    return Ok(grid);
                }
                let next = ((m as f64 * 1.25) as usize) | 1;
                m = next.max(m + 2);
                if m > 1 << 22 {
                    return Err(Error::GridTooSmall {
                        dims: vec![m; d],
                        n: n_max,
                        target,
                        achievable: alias_error_bound(law, n_max, &GridSpec::uniform(d, m)?),
                    });
                }
            }
        }
        Family::SymmetricPowerTail { .. } => {
            let mut m = 1024usize;
            while m <= 1 << 26 {
                let grid = GridSpec::uniform(1, m)?;
                if alias_error_bound(law, n_max, &grid) <= target {
                    caps.check_memory(m as u64 / 2 * 8 * 3, "auto-selected grid")?;
                    return Ok(grid);
                }
                m *= 2;
            }
            let grid = GridSpec::uniform(1, 1 << 26)?;
            Err(Error::GridTooSmall {
                dims: vec![1 << 26],
                n: n_max,
                target,
                achievable: alias_error_bound(law, n_max, &grid),
            })
        }
    }
}

// ---------------------------------------------------------------------
// Total occupation mass with tail correction
// ---------------------------------------------------------------------

/// `U = sum_{n>=1} u_n` split into computed mass and modelled tail.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct OccupationTotal {
    pub partial: f64,
    pub tail: f64,
    pub total: f64,
    /// Bracketing half-width: certified entry bounds plus a reported
    /// (heuristic) margin on the tail model.
    pub bound: f64,
    pub g0_used: f64,
    pub horizon: usize,
}

/// Sum the occupation sequence and close it with a regularly-varying
/// tail `index * g0 / n^eta` on the live residue class, or a geometric
/// extrapolation for drifted (defective-by-drift) walks.
pub fn occupation_total(
    u: &OccupationSeq,
    plan: Option<&NormingPlan>,
    g0: Option<f64>,
    cls: &WalkClass,
) -> Result<OccupationTotal> {
    if !cls.transient {
        return Err(Error::RecurrentPlan { eta: cls.eta });
    }
    let n_max = u.n_max();
    let mut acc = Neumaier::new();
    let mut cert = 0.0;
    for n in 1..=n_max {
        acc.add(u.value(n));
        cert += u.error(n);
    }
    let partial = acc.total();

    let rho = match cls.return_period {
        Some(r) => r.max(1) as usize,
        None => {
            // The walk never returns; every u_n is structurally zero.
            return Ok(OccupationTotal {
                partial,
                tail: 0.0,
                total: partial,
                bound: cert,
                g0_used: 0.0,
                horizon: n_max,
            });
        }
    };

    if cls.drift_free {
        let plan = plan.ok_or_else(|| {
            Error::PlanMismatch("tail correction for a drift-free walk needs a norming plan".into())
        })?;
        let eta = plan.eta();
        if eta <= 1.0 {
            return Err(Error::RecurrentPlan { eta });
        }
        let index = cls.lattice_index.unwrap_or(1) as f64;
        let g0v = match g0 {
            Some(v) => v,
            None => {
                let ladder = crate::asymptotics::halving_ladder(n_max, 8, rho as u64);
                crate::asymptotics::empirical_density_at_origin(
                    u,
                    plan,
                    cls.lattice_index.unwrap_or(1),
                    &ladder,
                )?
                .value
            }
        };
        let start = (n_max / rho) as f64 + 1.0;
        let tail = index * g0v * (rho as f64).powf(-eta) * hurwitz_zeta(eta, start)?;
        Ok(OccupationTotal {
            partial,
            tail,
            total: partial + tail,
            bound: cert + 0.25 * tail,
            g0_used: g0v,
            horizon: n_max,
        })
    } else {
        // Transient by drift: u_n decays at least geometrically; close the
        // sum with a geometric extrapolation of the last live ratio.
        let live: Vec<usize> = (1..=n_max).rev().filter(|&n| u.value(n) > 0.0).take(2).collect();
        let tail = if live.len() == 2 {
            let (n1, n0) = (live[0], live[1]);
            let r = u.value(n1) / u.value(n0);
            if r > 0.0 && r < 1.0 {
                u.value(n1) * r / (1.0 - r)
            } else {
                0.0
            }
        } else {
            0.0
        };
        Ok(OccupationTotal {
            partial,
            tail,
            total: partial + tail,
            bound: cert + tail,
            g0_used: 0.0,
            horizon: n_max,
        })
    }
}

/// Largest horizon whose entry is clean enough for extrapolation:
/// relative certified bound within `guard`, or — when the certificate is
/// uninformative, as for heavy tails — an empirical alias gap against a
/// half-resolution companion run within `guard`. Scans top-down, because
/// alias contamination grows with `n` while structural near-zeros at
/// small `n` (whose aliased values are pure alias mass) would otherwise
/// poison a prefix rule.
pub fn clean_horizon(u: &OccupationSeq, companion: Option<&OccupationSeq>, guard: f64) -> usize {
    for n in (1..=u.n_max()).rev() {
        let v = u.value(n);
        if v <= 0.0 {
            continue;
        }
        let mut rel = u.error(n) / v;
        if let Some(c) = companion {
            let gap = (c.value(n) - v).max(0.0);
            rel = rel.min(gap / v);
        }
        if rel <= guard {
            return n;
        }
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;

    fn lazy_srw_z3() -> StepLaw {
        let mut atoms = vec![(vec![0i64, 0, 0], parse_rational("1/2").unwrap())];
        for r in 0..3 {
            for s in [1i64, -1] {
                let mut p = vec![0i64; 3];
                p[r] = s;
                atoms.push((p, parse_rational("1/12").unwrap()));
            }
        }
        StepLaw::from_atoms_rational(3, atoms).unwrap()
    }

    fn drifted() -> StepLaw {
        StepLaw::from_atoms_rational(
            1,
            vec![
                (vec![1], parse_rational("4/5").unwrap()),
                (vec![-1], parse_rational("1/5").unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn exact_conv_hand_values() {
        let caps = Caps::default();
        let u = occupation_exact(&lazy_srw_z3(), 4, &caps).unwrap();
        let exact = u.exact().unwrap();
        assert_eq!(exact[1], parse_rational("1/2").unwrap());
        assert_eq!(exact[2], parse_rational("7/24").unwrap());
        assert_eq!(u.method(), MethodTag::RationalDp);
    }

    #[test]
    fn deterministic_law_never_returns() {
        let caps = Caps::default();
        let det = StepLaw::from_atoms_rational(1, vec![(vec![1], parse_rational("1/1").unwrap())]).unwrap();
        let u = occupation_exact(&det, 6, &caps).unwrap();
        for n in 1..=6 {
            assert_eq!(u.value(n), 0.0);
        }
        let dft = occupation_exact_dft(&det.to_float(), 6, &caps).unwrap();
        for n in 1..=6 {
            assert!(dft.value(n).abs() < 1e-12);
        }
    }

    #[test]
    fn dft_and_conv_agree() {
        let caps = Caps::default();
        let law = lazy_srw_z3().to_float();
        let a = occupation_exact(&law, 16, &caps).unwrap();
        let b = occupation_exact_dft(&law, 16, &caps).unwrap();
        for n in 0..=16 {
            assert!((a.value(n) - b.value(n)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn aliased_dominates_and_tightens() {
        let caps = Caps::default();
        let law = lazy_srw_z3();
        let exact = occupation_exact(&law.to_float(), 20, &caps).unwrap();
        let g1 = GridSpec::uniform(3, 21).unwrap();
        let g2 = g1.doubled();
        let a1 = occupation_aliased(&law, 20, &g1, &caps, None).unwrap();
        let a2 = occupation_aliased(&law, 20, &g2, &caps, None).unwrap();
        for n in 1..=20 {
            assert!(a1.value(n) >= exact.value(n) - 1e-13);
            assert!(a2.value(n) <= a1.value(n) + 1e-13);
            assert!(a1.value(n) - exact.value(n) <= a1.error(n) + 1e-13);
        }
        assert_eq!(a1.value(0), 1.0);
    }

    #[test]
    fn alias_bound_examples() {
        let law = lazy_srw_z3();
        let grid = GridSpec::uniform(3, 260).unwrap();
        assert_eq!(alias_error_bound(&law, 0, &grid), 0.0);
        // width 2 per coordinate: bound = 2d exp(-M^2 / (8n))
        let b = alias_error_bound(&law, 64, &grid);
        let expect = 6.0 * (-(260.0f64 * 260.0) / (8.0 * 64.0)).exp();
        assert!((b - expect).abs() <= 1e-12 * expect);
        // monotone to zero in M
        let mut prev = f64::INFINITY;
        for m in [65usize, 130, 260, 520] {
            let g = GridSpec::uniform(3, m).unwrap();
            let b = alias_error_bound(&law, 64, &g);
            assert!(b <= prev);
            prev = b;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn real_path_matches_direct_average() {
        let caps = Caps::default();
        let law = StepLaw::from_atoms_float(1, vec![(vec![1], 0.5), (vec![-1], 0.5)]).unwrap();
        let grid = GridSpec::uniform(1, 17).unwrap();
        let real = occupation_aliased(&law, 12, &grid, &caps, None).unwrap();
        let mut direct = vec![0.0f64; 13];
        direct[0] = 1.0;
        for n in 1..=12 {
            let mut acc = 0.0;
            for j in 0..17 {
                let lam = 2.0 * std::f64::consts::PI * j as f64 / 17.0;
                acc += lam.cos().powi(n as i32);
            }
            direct[n] = acc / 17.0;
        }
        for n in 0..=12 {
            assert!((real.value(n) - direct[n].clamp(0.0, 1.0)).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn drifted_total_closes_geometrically() {
        let caps = Caps::default();
        let law = drifted().to_float();
        let u = occupation_exact(&law, 400, &caps).unwrap();
        let plan = NormingPlan::finite_variance(1);
        let cls = crate::lattice::classify(&law, &plan).unwrap();
        assert!(cls.transient && !cls.drift_free);
        let total = occupation_total(&u, None, None, &cls).unwrap();
        assert!((total.total - 2.0 / 3.0).abs() < 1e-9, "{}", total.total);
    }

    #[test]
    fn power_tail_grid_matches_direct_series() {
        let caps = Caps::default();
        let law = StepLaw::power_tail(0.7).unwrap();
        let grid = GridSpec::uniform(1, 64).unwrap();
        let u = occupation_aliased(&law, 8, &grid, &caps, None).unwrap();
        // Direct (slow) evaluation of phi on the grid by series truncation.
        let kernel = crate::lattice::PowerTailKernel::new(0.7).unwrap();
        let two_c = 2.0 * kernel.mass_const;
        let mut phis = Vec::new();
        for j in 0..64usize {
            let lam = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
            let mut s = 0.0;
            for k in 1..400_000u64 {
                s += (k as f64).powf(-1.7) * (lam * k as f64).cos();
            }
            phis.push(if j == 0 { 1.0 } else { two_c * s });
        }
        for n in 1..=8usize {
            let direct: f64 = phis.iter().map(|p| p.powi(n as i32)).sum::<f64>() / 64.0;
            assert!((u.value(n) - direct).abs() < 1e-6, "n = {n}: {} vs {direct}", u.value(n));
        }
    }

    #[test]
    fn clean_horizon_uses_certificates_then_companion() {
        let mk = |values: Vec<f64>, errors: Vec<f64>| {
            OccupationSeq::from_parts(values, Some(errors), None, MethodTag::AliasedDft, "t".into())
        };
        let u = mk(vec![1.0, 0.5, 0.25, 0.125], vec![0.0, 1e-16, 1e-16, 0.2]);
        assert_eq!(clean_horizon(&u, None, 0.01), 2);
        let comp = mk(vec![1.0, 0.5, 0.25, 0.125 + 0.001], vec![0.0; 4]);
        // companion gap rescues n = 3: 0.001/0.125 = 0.8% <= 1%
        assert_eq!(clean_horizon(&u, Some(&comp), 0.01), 3);
        // a dirty small-n entry (pure alias mass) must not hide a clean top
        let u2 = mk(vec![1.0, 1e-10, 0.25, 0.125], vec![0.0, 1.0, 1e-16, 1e-16]);
        let comp2 = mk(vec![1.0, 3e-10, 0.25, 0.125], vec![0.0; 4]);
        assert_eq!(clean_horizon(&u2, Some(&comp2), 0.01), 3);
    }
}
