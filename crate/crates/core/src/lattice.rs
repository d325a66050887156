//! Step distributions on `Z^d` and walk classification.
//!
//! Two families are supported: finitely many atoms in any dimension, and
//! the one-dimensional symmetric power tail `P{X = +-k} = c k^(-1-alpha)`
//! with `c = 1 / (2 zeta(1+alpha))` so the mass is exactly 1.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rational::{format_rational, parse_rational, rat_to_f64, Prob, Rat};
use crate::special::{gamma, zeta};

/// Which analytic family a law belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    FiniteAtoms,
    /// `d = 1`, `P{X = +-k} = c k^(-1-alpha)`, `alpha` in (0, 2).
    SymmetricPowerTail { alpha: f64 },
}

/// Atom masses in the law's exactness mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Exact(Vec<Rat>),
    Float(Vec<f64>),
}

/// A validated step distribution on `Z^d`.
#[derive(Debug, Clone)]
pub struct StepLaw {
    dim: usize,
    family: Family,
    points: Vec<Vec<i64>>,
    weights: Weights,
    fingerprint: String,
}

/// Float-mode normalization tolerance.
pub const MASS_TOL: f64 = 1e-15;

impl StepLaw {
    /// Validate and canonicalize a finite-atoms law with exact masses.
    pub fn from_atoms_rational(dim: usize, atoms: Vec<(Vec<i64>, Rat)>) -> Result<Self> {
        let merged = Self::merge_atoms(dim, atoms, Rat::zero(), |r| r.is_negative(), |r| r.is_zero())?;
        let sum: Rat = merged.iter().map(|(_, w)| w.clone()).sum();
        if sum != Rat::new(1.into(), 1.into()) {
            return Err(Error::NotNormalized {
                sum: format_rational(&sum),
                tol: 0.0,
            });
        }
        let (points, weights): (Vec<_>, Vec<_>) = merged.into_iter().unzip();
        Ok(Self::finalize(dim, Family::FiniteAtoms, points, Weights::Exact(weights)))
    }

    /// Validate and canonicalize a finite-atoms law with float masses.
    pub fn from_atoms_float(dim: usize, atoms: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        let merged = Self::merge_atoms(dim, atoms, 0.0, |w| *w < 0.0, |w| *w == 0.0)?;
        let sum: f64 = merged.iter().map(|(_, w)| *w).sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized {
                sum: format!("{sum}"),
                tol: MASS_TOL,
            });
        }
        let (points, weights): (Vec<_>, Vec<_>) = merged.into_iter().unzip();
        Ok(Self::finalize(dim, Family::FiniteAtoms, points, Weights::Float(weights)))
    }

    /// The symmetric power-tail law on `Z`.
    pub fn power_tail(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::OutOfRange(format!(
                "power-tail index must lie in (0, 2), got {alpha}"
            )));
        }
        Ok(Self::finalize(
            1,
            Family::SymmetricPowerTail { alpha },
            Vec::new(),
            Weights::Float(Vec::new()),
        ))
    }

    fn merge_atoms<W: Clone + std::ops::Add<Output = W>>(
        dim: usize,
        atoms: Vec<(Vec<i64>, W)>,
        zero: W,
        is_neg: impl Fn(&W) -> bool,
        is_zero: impl Fn(&W) -> bool,
    ) -> Result<Vec<(Vec<i64>, W)>> {
        if dim == 0 {
            return Err(Error::InvalidLaw("dimension must be >= 1".into()));
        }
        let mut map: BTreeMap<Vec<i64>, W> = BTreeMap::new();
        for (point, w) in atoms {
            if point.len() != dim {
                return Err(Error::InvalidLaw(format!(
                    "atom {point:?} has {} coordinates, expected {dim}",
                    point.len()
                )));
            }
            if is_neg(&w) {
                return Err(Error::NegativeProbability { point });
            }
            let slot = map.entry(point).or_insert_with(|| zero.clone());
            *slot = slot.clone() + w;
        }
        let merged: Vec<_> = map.into_iter().filter(|(_, w)| !is_zero(w)).collect();
        if merged.is_empty() {
            return Err(Error::EmptySupport);
        }
        Ok(merged)
    }

    fn finalize(dim: usize, family: Family, points: Vec<Vec<i64>>, weights: Weights) -> Self {
        let mut law = StepLaw {
            dim,
            family,
            points,
            weights,
            fingerprint: String::new(),
        };
        let canon = law.to_json_string();
        let digest = Sha256::digest(canon.as_bytes());
        law.fingerprint = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        law
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn is_rational(&self) -> bool {
        matches!(self.weights, Weights::Exact(_))
    }

    /// Atom list as floats (empty for the power-tail family).
    pub fn atoms_f64(&self) -> Vec<(&[i64], f64)> {
        match &self.weights {
            Weights::Exact(ws) => self
                .points
                .iter()
                .zip(ws)
                .map(|(p, w)| (p.as_slice(), rat_to_f64(w)))
                .collect(),
            Weights::Float(ws) => self
                .points
                .iter()
                .zip(ws)
                .map(|(p, w)| (p.as_slice(), *w))
                .collect(),
        }
    }

    /// Atom list with exact masses; `None` in float mode.
    pub fn atoms_exact(&self) -> Option<Vec<(&[i64], &Rat)>> {
        match &self.weights {
            Weights::Exact(ws) => Some(self.points.iter().zip(ws).map(|(p, w)| (p.as_slice(), w)).collect()),
            Weights::Float(_) => None,
        }
    }

    /// Bit length of the common denominator of the atom masses; `None`
    /// in float mode. Rational kernels grow digits roughly linearly in
    /// the step count, and cost models scale with this.
    pub fn denominator_bits(&self) -> Option<u64> {
        match &self.weights {
            Weights::Float(_) => None,
            Weights::Exact(ws) => {
                let mut den = num_bigint::BigInt::from(1);
                for w in ws {
                    den = den.lcm(w.denom());
                }
                Some(den.bits())
            }
        }
    }

    /// Forget exactness; used by the CLI `--mode float` override.
    pub fn to_float(&self) -> StepLaw {
        match &self.weights {
            Weights::Float(_) => self.clone(),
            Weights::Exact(ws) => Self::finalize(
                self.dim,
                self.family.clone(),
                self.points.clone(),
                Weights::Float(ws.iter().map(rat_to_f64).collect()),
            ),
        }
    }

    /// Per-dimension support radius `max |x_r|`; `None` when the support
    /// is infinite.
    pub fn support_radius(&self) -> Option<Vec<i64>> {
        match self.family {
            Family::FiniteAtoms => {
                let mut radii = vec![0i64; self.dim];
                for p in &self.points {
                    for (r, &x) in p.iter().enumerate() {
                        radii[r] = radii[r].max(x.abs());
                    }
                }
                Some(radii)
            }
            Family::SymmetricPowerTail { .. } => None,
        }
    }

    /// True when the mass function is invariant under flipping the sign of
    /// each coordinate independently. Such laws have a real characteristic
    /// function on every axis-folded grid point.
    pub fn is_axis_symmetric(&self) -> bool {
        match self.family {
            Family::SymmetricPowerTail { .. } => true,
            Family::FiniteAtoms => {
                let atoms = self.atoms_f64();
                let lookup: BTreeMap<&[i64], f64> = atoms.iter().map(|(p, w)| (*p, *w)).collect();
                for (p, w) in &atoms {
                    for mask in 1..(1u32 << self.dim) {
                        let flipped: Vec<i64> = p
                            .iter()
                            .enumerate()
                            .map(|(r, &x)| if mask >> r & 1 == 1 { -x } else { x })
                            .collect();
                        match lookup.get(flipped.as_slice()) {
                            Some(wf) if wf == w => {}
                            _ => return false,
                        }
                    }
                }
                true
            }
        }
    }

    /// Characteristic function `E exp(i <lambda, X>)`.
    ///
    /// Finite atoms evaluate the trigonometric sum directly. The power
    /// tail goes through the Hurwitz-zeta representation of the cosine
    /// series, accurate to ~1e-14 absolute over the whole torus.
    pub fn char_fn(&self, lambda: &[f64]) -> Result<Complex64> {
        if lambda.len() != self.dim {
            return Err(Error::OutOfRange(format!(
                "lambda has {} coordinates, expected {}",
                lambda.len(),
                self.dim
            )));
        }
        match &self.family {
            Family::FiniteAtoms => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (p, w) in self.atoms_f64() {
                    let dot: f64 = p.iter().zip(lambda).map(|(&x, &l)| x as f64 * l).sum();
                    acc += Complex64::from_polar(w, dot);
                }
                Ok(acc)
            }
            Family::SymmetricPowerTail { alpha } => {
                let consts = PowerTailKernel::new(*alpha)?;
                Ok(Complex64::new(consts.char_fn(lambda[0])?, 0.0))
            }
        }
    }

    /// Echelon basis (over Z) of the lattice generated by support
    /// differences, as i128 rows.
    fn difference_basis(&self) -> Vec<Vec<i128>> {
        let mut basis: Vec<Vec<i128>> = Vec::new();
        if self.points.is_empty() {
            return basis;
        }
        let base = &self.points[0];
        for p in &self.points[1..] {
            let gen: Vec<i128> = p.iter().zip(base).map(|(&a, &b)| (a - b) as i128).collect();
            insert_into_echelon(&mut basis, gen);
        }
        basis
    }

    /// Index of the difference lattice in `Z^d`; `None` when the lattice
    /// is rank-deficient (index infinite).
    pub fn lattice_index(&self) -> Option<u128> {
        match self.family {
            Family::SymmetricPowerTail { .. } => Some(1),
            Family::FiniteAtoms => {
                let basis = self.difference_basis();
                if basis.len() < self.dim {
                    return None;
                }
                let det: i128 = basis.iter().enumerate().map(|(i, row)| row_pivot(row, i)).product();
                Some(det.unsigned_abs())
            }
        }
    }

    /// True when `Z^d` is the minimal lattice of the walk: the group
    /// generated by support differences is all of `Z^d`.
    pub fn is_aperiodic(&self) -> bool {
        self.lattice_index() == Some(1)
    }

    /// Smallest `rho >= 1` with `P{S_rho = 0} > 0`; returns to the origin
    /// can only happen at multiples of `rho`. `None` means the walk never
    /// returns (e.g. a deterministic drift).
    pub fn return_period(&self) -> Option<u64> {
        match self.family {
            Family::SymmetricPowerTail { .. } => Some(1),
            Family::FiniteAtoms => {
                let basis = self.difference_basis();
                let x0: Vec<BigRational> = self.points[0]
                    .iter()
                    .map(|&v| BigRational::from_integer(v.into()))
                    .collect();
                // Solve x0 = sum q_i b_i over Q; the smallest multiple of
                // x0 inside the lattice is the lcm of the q denominators.
                let coords = solve_in_span(&basis, &x0)?;
                let mut rho: num_bigint::BigInt = 1.into();
                for q in &coords {
                    rho = rho.lcm(q.denom());
                }
                rho.to_u64()
            }
        }
    }

    /// Mix a hold-in-place atom of mass `hold` into the law, scaling the
    /// rest by `1 - hold`. The result is aperiodic whenever the original
    /// support differences plus the support itself generate `Z^d`.
    pub fn lazify(&self, hold: &Prob) -> Result<StepLaw> {
        let h = hold.to_f64();
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::OutOfRange(format!(
                "hold probability must lie strictly inside (0, 1), got {h}"
            )));
        }
        if !matches!(self.family, Family::FiniteAtoms) {
            return Err(Error::UnsupportedFamily(
                "lazify is defined for finite-atoms laws".into(),
            ));
        }
        let zero = vec![0i64; self.dim];
        match (&self.weights, hold) {
            (Weights::Exact(ws), Prob::Exact(hr)) => {
                if hr.is_negative() || hr >= &Rat::new(1.into(), 1.into()) || hr.is_zero() {
                    return Err(Error::OutOfRange("hold probability outside (0, 1)".into()));
                }
                let keep = Rat::new(1.into(), 1.into()) - hr.clone();
                let mut atoms: Vec<(Vec<i64>, Rat)> = self
                    .points
                    .iter()
                    .zip(ws)
                    .map(|(p, w)| (p.clone(), w * &keep))
                    .collect();
                atoms.push((zero, hr.clone()));
                StepLaw::from_atoms_rational(self.dim, atoms)
            }
            _ => {
                let keep = 1.0 - h;
                let mut atoms: Vec<(Vec<i64>, f64)> = self
                    .atoms_f64()
                    .into_iter()
                    .map(|(p, w)| (p.to_vec(), w * keep))
                    .collect();
                atoms.push((zero, h));
                StepLaw::from_atoms_float(self.dim, atoms)
            }
        }
    }

    /// Mean vector. `None` when undefined (power tail with `alpha <= 1`).
    pub fn mean(&self) -> Option<Vec<f64>> {
        match &self.family {
            Family::FiniteAtoms => {
                let mut mu = vec![0.0; self.dim];
                for (p, w) in self.atoms_f64() {
                    for (r, &x) in p.iter().enumerate() {
                        mu[r] += w * x as f64;
                    }
                }
                Some(mu)
            }
            Family::SymmetricPowerTail { alpha } => {
                if *alpha > 1.0 {
                    Some(vec![0.0])
                } else {
                    None
                }
            }
        }
    }

    /// Exact drift check: rational laws decide mean-zero exactly, float
    /// laws within 1e-12. The power tail is symmetric, hence drift-free.
    pub fn is_drift_free(&self) -> bool {
        match &self.family {
            Family::SymmetricPowerTail { .. } => true,
            Family::FiniteAtoms => match &self.weights {
                Weights::Exact(ws) => {
                    for r in 0..self.dim {
                        let m: Rat = self
                            .points
                            .iter()
                            .zip(ws)
                            .map(|(p, w)| w * Rat::from_integer(p[r].into()))
                            .sum();
                        if !m.is_zero() {
                            return false;
                        }
                    }
                    true
                }
                Weights::Float(_) => self
                    .mean()
                    .map(|mu| mu.iter().all(|m| m.abs() <= 1e-12))
                    .unwrap_or(false),
            },
        }
    }

    /// Covariance matrix of one step; `None` when second moments are
    /// infinite (power tail).
    pub fn covariance(&self) -> Option<Vec<Vec<f64>>> {
        match self.family {
            Family::SymmetricPowerTail { .. } => None,
            Family::FiniteAtoms => {
                let mu = self.mean()?;
                let mut b = vec![vec![0.0; self.dim]; self.dim];
                for (p, w) in self.atoms_f64() {
                    for i in 0..self.dim {
                        for j in 0..self.dim {
                            b[i][j] += w * p[i] as f64 * p[j] as f64;
                        }
                    }
                }
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        b[i][j] -= mu[i] * mu[j];
                    }
                }
                Some(b)
            }
        }
    }
}

fn row_pivot(row: &[i128], hint: usize) -> i128 {
    row.iter()
        .skip(hint)
        .copied()
        .find(|&v| v != 0)
        .unwrap_or_else(|| row.iter().copied().find(|&v| v != 0).unwrap_or(0))
}

/// Insert a vector into an integer row-echelon basis, keeping the span.
fn insert_into_echelon(basis: &mut Vec<Vec<i128>>, mut v: Vec<i128>) {
    let d = v.len();
    let mut row_idx = 0;
    for col in 0..d {
        if row_idx < basis.len() {
            let pivot_col = basis[row_idx].iter().position(|&x| x != 0).unwrap();
            if pivot_col == col {
                if v[col] != 0 {
                    // gcd-combine so the basis row keeps the pivot and v
                    // is cleared at this column.
                    let (a, b) = (basis[row_idx][col], v[col]);
                    let (g, x, y) = ext_gcd(a, b);
                    let new_row: Vec<i128> = (0..d).map(|k| x * basis[row_idx][k] + y * v[k]).collect();
                    let new_v: Vec<i128> = (0..d).map(|k| (a / g) * v[k] - (b / g) * basis[row_idx][k]).collect();
                    basis[row_idx] = new_row;
                    v = new_v;
                }
                row_idx += 1;
                continue;
            }
        }
        if v[col] != 0 {
            // New pivot column; put v here (sign-normalized).
            if v[col] < 0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
            basis.insert(row_idx, v);
            return;
        }
    }
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - (a.div_euclid(b)) * y)
    }
}

/// Express `target` in the rational span of the echelon rows. `None` when
/// the system is inconsistent.
fn solve_in_span(basis: &[Vec<i128>], target: &[BigRational]) -> Option<Vec<BigRational>> {
    let mut residual: Vec<BigRational> = target.to_vec();
    let mut coords = Vec::with_capacity(basis.len());
    for row in basis {
        let pivot_col = row.iter().position(|&x| x != 0)?;
        let pivot = BigRational::from_integer(row[pivot_col].into());
        let q = residual[pivot_col].clone() / pivot;
        for (k, &val) in row.iter().enumerate() {
            if val != 0 {
                residual[k] = residual[k].clone() - q.clone() * BigRational::from_integer(val.into());
            }
        }
        coords.push(q);
    }
    if residual.iter().all(|r| r.is_zero()) {
        Some(coords)
    } else {
        None
    }
}

/// Shared constants for power-tail characteristic-function evaluation.
pub(crate) struct PowerTailKernel {
    pub alpha: f64,
    /// Normalizing constant `c = 1/(2 zeta(1+alpha))`.
    pub mass_const: f64,
    /// Prefactor of the Hurwitz-zeta representation.
    jonquiere: f64,
}

impl PowerTailKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::OutOfRange(format!("alpha {alpha} outside (0, 2)")));
        }
        let z = zeta(1.0 + alpha)?;
        let mass_const = 0.5 / z;
        let two_pi = 2.0 * std::f64::consts::PI;
        // Re Li_{1+a}(e^{2 pi i x}) =
        //   -(2 pi)^{1+a} [zeta(-a, x) + zeta(-a, 1-x)] / (4 Gamma(1+a) sin(pi a / 2))
        let jonquiere = -two_pi.powf(1.0 + alpha)
            / (4.0 * gamma(1.0 + alpha) * (std::f64::consts::PI * alpha / 2.0).sin());
        Ok(Self {
            alpha,
            mass_const,
            jonquiere,
        })
    }

    /// Cosine-series value at torus fraction `x = lambda / 2pi` in (0, 1).
    pub fn series_at_fraction(&self, x: f64) -> Result<f64> {
        let a = self.alpha;
        let t = crate::special::hurwitz_zeta(-a, x)? + crate::special::hurwitz_zeta(-a, 1.0 - x)?;
        Ok(self.jonquiere * t)
    }

    /// Characteristic function at angle `lambda` (any real).
    pub fn char_fn(&self, lambda: f64) -> Result<f64> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut x = (lambda / two_pi).rem_euclid(1.0);
        if x == 0.0 {
            return Ok(1.0);
        }
        if x > 0.5 {
            x = 1.0 - x; // cosine series is even
        }
        let series = self.series_at_fraction(x)?;
        Ok((2.0 * self.mass_const * series).clamp(-1.0, 1.0))
    }
}

/// Classification verdicts for a validated law under a norming plan.
#[derive(Debug, Clone)]
pub struct WalkClass {
    pub aperiodic: bool,
    pub drift_free: bool,
    pub transient: bool,
    pub mean: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub alphas: Vec<f64>,
    pub eta: f64,
    pub lattice_index: Option<u128>,
    pub return_period: Option<u64>,
}

/// Fill moments and verdicts for `law` under `plan`.
///
/// Transience: any walk with drift is transient; drift-free walks are
/// transient exactly when `d >= 3` or `eta > 1`.
pub fn classify(law: &StepLaw, plan: &crate::asymptotics::NormingPlan) -> Result<WalkClass> {
    if plan.alphas().len() != law.dim() {
        return Err(Error::PlanMismatch(format!(
            "plan has {} components, law dimension is {}",
            plan.alphas().len(),
            law.dim()
        )));
    }
    match law.family() {
        Family::SymmetricPowerTail { alpha } => {
            if plan.alphas().len() != 1 || (plan.alphas()[0] - alpha).abs() > 1e-12 {
                return Err(Error::PlanMismatch(format!(
                    "power-tail law has alpha = {alpha}, plan says {:?}",
                    plan.alphas()
                )));
            }
        }
        Family::FiniteAtoms => {
            if plan.alphas().iter().any(|&a| (a - 2.0).abs() > 1e-12) {
                return Err(Error::PlanMismatch(
                    "finite-atoms laws have finite variance; plan indices must all be 2".into(),
                ));
            }
        }
    }
    let drift_free = law.is_drift_free();
    let eta = plan.eta();
    let transient = if !drift_free {
        true
    } else {
        law.dim() >= 3 || eta > 1.0
    };
    Ok(WalkClass {
        aperiodic: law.is_aperiodic(),
        drift_free,
        transient,
        mean: law.mean(),
        covariance: law.covariance(),
        alphas: plan.alphas().to_vec(),
        eta,
        lattice_index: law.lattice_index(),
        return_period: law.return_period(),
    })
}

// ---------------------------------------------------------------------
// Model file (JSON) round trip
// ---------------------------------------------------------------------

impl StepLaw {
    /// Parse the model document. Probabilities given as strings are exact
    /// rationals; any numeric probability switches the law to float mode.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::ModelFile(format!("invalid JSON: {e}")))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::ModelFile("top level must be an object".into()))?;
        let dim = obj
            .get("dim")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::ModelFile("field 'dim': missing or not a positive integer".into()))?
            as usize;
        let family = obj
            .get("family")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::ModelFile("field 'family': missing or not a string".into()))?;
        match family {
            "finite-atoms" => {
                let atoms = obj
                    .get("atoms")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| Error::ModelFile("field 'atoms': missing or not an array".into()))?;
                let mut exact: Vec<(Vec<i64>, Rat)> = Vec::new();
                let mut float: Vec<(Vec<i64>, f64)> = Vec::new();
                let mut all_exact = true;
                for (i, entry) in atoms.iter().enumerate() {
                    let row = entry.as_array().ok_or_else(|| {
                        Error::ModelFile(format!("field 'atoms[{i}]': expected an array"))
                    })?;
                    if row.len() != dim + 1 {
                        return Err(Error::ModelFile(format!(
                            "field 'atoms[{i}]': expected {dim} coordinates plus a probability"
                        )));
                    }
                    let mut point = Vec::with_capacity(dim);
                    for (r, coord) in row[..dim].iter().enumerate() {
                        let x = coord.as_i64().ok_or_else(|| {
                            Error::ModelFile(format!("field 'atoms[{i}][{r}]': expected an integer"))
                        })?;
                        point.push(x);
                    }
                    match &row[dim] {
                        serde_json::Value::String(s) => {
                            let r = parse_rational(s)
                                .map_err(|e| Error::ModelFile(format!("field 'atoms[{i}]': {e}")))?;
                            float.push((point.clone(), rat_to_f64(&r)));
                            exact.push((point, r));
                        }
                        serde_json::Value::Number(n) => {
                            let x = n.as_f64().ok_or_else(|| {
                                Error::ModelFile(format!("field 'atoms[{i}]': bad number"))
                            })?;
                            all_exact = false;
                            float.push((point, x));
                        }
                        _ => {
                            return Err(Error::ModelFile(format!(
                                "field 'atoms[{i}]': probability must be a rational string or a number"
                            )))
                        }
                    }
                }
                if all_exact {
                    StepLaw::from_atoms_rational(dim, exact)
                } else {
                    StepLaw::from_atoms_float(dim, float)
                }
            }
            "symmetric-power-tail" => {
                if dim != 1 {
                    return Err(Error::ModelFile(
                        "field 'dim': symmetric-power-tail requires dim = 1".into(),
                    ));
                }
                let alpha = obj
                    .get("alpha")
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| Error::ModelFile("field 'alpha': missing or not a number".into()))?;
                StepLaw::power_tail(alpha)
            }
            other => Err(Error::ModelFile(format!(
                "field 'family': unknown family '{other}'"
            ))),
        }
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Canonical model document; rational mode round-trips exactly.
    pub fn to_json_string(&self) -> String {
        match &self.family {
            Family::SymmetricPowerTail { alpha } => {
                format!(
                    "{{\"dim\": 1, \"family\": \"symmetric-power-tail\", \"alpha\": {}}}",
                    serde_json::Number::from_f64(*alpha).unwrap()
                )
            }
            Family::FiniteAtoms => {
                let mut rows = Vec::with_capacity(self.points.len());
                match &self.weights {
                    Weights::Exact(ws) => {
                        for (p, w) in self.points.iter().zip(ws) {
                            let coords: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                            rows.push(format!(
                                "[{}, \"{}\"]",
                                coords.join(", "),
                                format_rational(w)
                            ));
                        }
                    }
                    Weights::Float(ws) => {
                        for (p, w) in self.points.iter().zip(ws) {
                            let coords: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                            rows.push(format!(
                                "[{}, {}]",
                                coords.join(", "),
                                serde_json::Number::from_f64(*w).unwrap()
                            ));
                        }
                    }
                }
                format!(
                    "{{\"dim\": {}, \"family\": \"finite-atoms\", \"atoms\": [{}]}}",
                    self.dim,
                    rows.join(", ")
                )
            }
        }
    }
}

// ---------------------------------------------------------------------
// Dense boxes over [-R_1, R_1] x ... x [-R_d, R_d]
// ---------------------------------------------------------------------

/// Row-major index space over a centered lattice box.
#[derive(Debug, Clone)]
pub struct LatticeBox {
    radii: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl LatticeBox {
    pub fn new(radii: Vec<i64>) -> Self {
        let mut strides = vec![0usize; radii.len()];
        let mut len = 1usize;
        for (r, &rad) in radii.iter().enumerate().rev() {
            strides[r] = len;
            len *= (2 * rad + 1) as usize;
        }
        LatticeBox { radii, strides, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn radii(&self) -> &[i64] {
        &self.radii
    }

    #[inline]
    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter().zip(&self.radii).all(|(&v, &r)| v.abs() <= r)
    }

    #[inline]
    pub fn index(&self, x: &[i64]) -> usize {
        let mut idx = 0usize;
        for (r, &v) in x.iter().enumerate() {
            idx += (v + self.radii[r]) as usize * self.strides[r];
        }
        idx
    }

    pub fn decode(&self, mut idx: usize) -> Vec<i64> {
        let mut x = vec![0i64; self.radii.len()];
        for r in 0..self.radii.len() {
            x[r] = (idx / self.strides[r]) as i64 - self.radii[r];
            idx %= self.strides[r];
        }
        x
    }

    /// Shift `idx` by the integer vector `step`, if the result stays in
    /// the box. Cheap inner-loop helper for convolution kernels.
    #[inline]
    pub fn offset(&self, x: &[i64], step: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for r in 0..x.len() {
            let v = x[r] + step[r];
            if v.abs() > self.radii[r] {
                return None;
            }
            idx += (v + self.radii[r]) as usize * self.strides[r];
        }
        Some(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;

    pub fn lazy_srw_z3() -> StepLaw {
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

    pub fn srw_z3() -> StepLaw {
        let mut atoms = Vec::new();
        for r in 0..3 {
            for s in [1i64, -1] {
                let mut p = vec![0i64; 3];
                p[r] = s;
                atoms.push((p, parse_rational("1/6").unwrap()));
            }
        }
        StepLaw::from_atoms_rational(3, atoms).unwrap()
    }

    #[test]
    fn validation_examples() {
        assert!(lazy_srw_z3().is_rational());
        let drift = StepLaw::from_atoms_float(1, vec![(vec![1], 0.8), (vec![-1], 0.2)]).unwrap();
        assert!(!drift.is_rational());
        let bad = StepLaw::from_atoms_float(1, vec![(vec![1], 0.8), (vec![-1], 0.3)]);
        assert!(matches!(bad, Err(Error::NotNormalized { .. })));
        let neg = StepLaw::from_atoms_float(1, vec![(vec![1], 1.2), (vec![-1], -0.2)]);
        assert!(matches!(neg, Err(Error::NegativeProbability { .. })));
    }

    #[test]
    fn char_fn_examples() {
        let lazy = lazy_srw_z3();
        let one = lazy.char_fn(&[0.0, 0.0, 0.0]).unwrap();
        assert!((one.re - 1.0).abs() < 1e-15 && one.im.abs() < 1e-15);
        let pi = std::f64::consts::PI;
        // 1/2 + (1/6)(cos pi * 3) = 0
        let v = lazy.char_fn(&[pi, pi, pi]).unwrap();
        assert!(v.norm() < 1e-14, "{v}");
        let pm = StepLaw::from_atoms_rational(
            1,
            vec![
                (vec![1], parse_rational("1/2").unwrap()),
                (vec![-1], parse_rational("1/2").unwrap()),
            ],
        )
        .unwrap();
        assert!((pm.char_fn(&[pi]).unwrap().re + 1.0).abs() < 1e-14);
    }

    #[test]
    fn char_fn_bounded_on_grid() {
        let lazy = lazy_srw_z3();
        for i in 0..7 {
            for j in 0..7 {
                for k in 0..7 {
                    let l = [
                        -3.0 + i as f64,
                        -3.0 + j as f64,
                        -3.0 + k as f64,
                    ];
                    let v = lazy.char_fn(&l).unwrap();
                    assert!(v.norm() <= 1.0 + 1e-12);
                    assert!(v.im.abs() < 1e-13, "symmetric law has a real char fn");
                }
            }
        }
    }

    #[test]
    fn aperiodicity_examples() {
        assert!(!srw_z3().is_aperiodic());
        assert_eq!(srw_z3().lattice_index(), Some(2));
        assert_eq!(srw_z3().return_period(), Some(2));
        assert!(lazy_srw_z3().is_aperiodic());
        assert_eq!(lazy_srw_z3().return_period(), Some(1));
        let even = StepLaw::from_atoms_float(1, vec![(vec![2], 0.5), (vec![-2], 0.5)]).unwrap();
        assert!(!even.is_aperiodic());
        assert_eq!(even.return_period(), Some(2));
        let det = StepLaw::from_atoms_float(1, vec![(vec![1], 1.0)]).unwrap();
        assert!(!det.is_aperiodic());
        assert_eq!(det.return_period(), None);
    }

    #[test]
    fn lazify_examples() {
        let lazy = srw_z3().lazify(&Prob::Exact(parse_rational("1/2").unwrap())).unwrap();
        assert!(lazy.is_aperiodic());
        assert!(lazy.is_rational());
        let expect = lazy_srw_z3();
        assert_eq!(lazy.to_json_string(), expect.to_json_string());
        assert!(srw_z3().lazify(&Prob::Float(0.0)).is_err());
        assert!(srw_z3().lazify(&Prob::Float(1.0)).is_err());
    }

    #[test]
    fn moments() {
        let lazy = lazy_srw_z3();
        assert!(lazy.is_drift_free());
        let b = lazy.covariance().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 / 6.0 } else { 0.0 };
                assert!((b[i][j] - expect).abs() < 1e-15);
            }
        }
        let drift = StepLaw::from_atoms_float(1, vec![(vec![1], 0.8), (vec![-1], 0.2)]).unwrap();
        assert!(!drift.is_drift_free());
        assert!((drift.mean().unwrap()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn model_json_round_trip_exact() {
        let lazy = lazy_srw_z3();
        let text = lazy.to_json_string();
        let back = StepLaw::from_json_str(&text).unwrap();
        assert!(back.is_rational());
        assert_eq!(back.to_json_string(), text);
        assert_eq!(back.fingerprint(), lazy.fingerprint());

        let pt = StepLaw::power_tail(0.7).unwrap();
        let back = StepLaw::from_json_str(&pt.to_json_string()).unwrap();
        assert_eq!(back.to_json_string(), pt.to_json_string());
    }

    #[test]
    fn model_json_errors_name_fields() {
        let e = StepLaw::from_json_str("{\"family\": \"finite-atoms\"}").unwrap_err();
        assert!(e.to_string().contains("'dim'"), "{e}");
        let e = StepLaw::from_json_str(
            "{\"dim\": 1, \"family\": \"finite-atoms\", \"atoms\": [[1, \"1/2\"], [0, 7]]}",
        );
        assert!(e.is_err());
        let e = StepLaw::from_json_str(
            "{\"dim\": 1, \"family\": \"finite-atoms\", \"atoms\": [[1, true]]}",
        )
        .unwrap_err();
        assert!(e.to_string().contains("atoms[0]"), "{e}");
    }

    #[test]
    fn axis_symmetry() {
        assert!(lazy_srw_z3().is_axis_symmetric());
        let skew = StepLaw::from_atoms_float(2, vec![(vec![1, 1], 0.5), (vec![-1, -1], 0.5)]).unwrap();
        assert!(!skew.is_axis_symmetric());
        assert!(StepLaw::power_tail(0.7).unwrap().is_axis_symmetric());
    }

    #[test]
    fn lattice_box_round_trip() {
        let b = LatticeBox::new(vec![2, 3]);
        assert_eq!(b.len(), 5 * 7);
        for idx in 0..b.len() {
            let x = b.decode(idx);
            assert_eq!(b.index(&x), idx);
            assert!(b.contains(&x));
        }
        assert_eq!(b.offset(&[2, 3], &[1, 0]), None);
        assert_eq!(b.offset(&[1, 3], &[1, -1]), Some(b.index(&[2, 2])));
    }
}
