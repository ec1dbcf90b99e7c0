//! OAM state constructors: eigenstates, superpositions, coherent/cat/squeezed
//! analogues, classical mixtures, and seeded random density matrices.

use num_complex::Complex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Real;
use crate::linalg;
use crate::modes::ModeIndex;

/// Unit-norm coefficient vector over |l⟩, l = 0..d−1.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState<T> {
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> PureState<T> {
    /// Normalize an arbitrary coefficient vector.
    pub fn new(coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("state dimension must be >= 1".into()));
        }
        let norm2: T = coeffs.iter().map(|c| c.norm_sqr()).sum();
        if norm2 <= T::zero() || !norm2.is_finite() {
            return Err(Error::AllZeroCoefficients);
        }
        let inv = T::one() / norm2.sqrt();
        Ok(Self { coeffs: coeffs.into_iter().map(|c| c * inv).collect() })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn norm_sqr(&self) -> T {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// ⟨self|other⟩.
    pub fn overlap(&self, other: &Self) -> Complex<T> {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * *b)
    }
}

/// |l⟩ in dimension d.
pub fn eigenstate<T: Real>(l: ModeIndex, d: usize) -> Result<PureState<T>> {
    if l.0 as usize >= d {
        return Err(Error::InvalidParameter(format!("eigenstate index {l} outside dim {d}")));
    }
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); d];
    coeffs[l.0 as usize] = Complex::new(T::one(), T::zero());
    PureState::new(coeffs)
}

/// Normalized superposition from an explicit coefficient list.
pub fn superposition<T: Real>(coeffs: Vec<Complex<T>>) -> Result<PureState<T>> {
    PureState::new(coeffs)
}

/// (|0⟩ − i|12⟩)/√2, the Gauss–vortex superposition; requires d ≥ 13.
pub fn psi_g<T: Real>(d: usize) -> Result<PureState<T>> {
    if d < 13 {
        return Err(Error::InvalidParameter(format!("psi_g needs dim >= 13, got {d}")));
    }
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); d];
    coeffs[0] = Complex::new(T::one(), T::zero());
    coeffs[12] = Complex::new(T::zero(), -T::one());
    PureState::new(coeffs)
}

/// Truncated even cat: c_{2l} ∝ α^{2l}/√((2l)!), odd coefficients zero,
/// renormalized over the kept terms.
pub fn even_cat<T: Real>(alpha: T, d: usize) -> Result<PureState<T>> {
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); d];
    for idx in (0..d).step_by(2) {
        // α^{2l} is nonnegative for real α, so only the magnitude matters.
        let mag = if idx == 0 {
            T::one()
        } else if alpha == T::zero() {
            T::zero()
        } else {
            (T::of(idx as f64) * alpha.abs().ln()
                - T::of(0.5) * crate::specfun::log_factorial::<T>(idx as u32))
            .exp()
        };
        coeffs[idx] = Complex::new(mag, T::zero());
    }
    PureState::new(coeffs)
}

/// Truncated squeezed vacuum: c_{2l} ∝ (−tanh γ)^l √((2l)!)/(2^l l!),
/// renormalized over the kept terms.
pub fn squeezed_vacuum<T: Real>(gamma: T, d: usize) -> Result<PureState<T>> {
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); d];
    let th = gamma.tanh();
    for (half_l, idx) in (0..d).step_by(2).enumerate() {
        let l = half_l as u32;
        let mag = (T::of(0.5) * crate::specfun::log_factorial::<T>(2 * l)
            - crate::specfun::log_factorial::<T>(l)
            - T::of(l as f64) * T::of(2.0).ln())
        .exp();
        let signed = (-th).powi(l as i32) * mag;
        coeffs[idx] = Complex::new(signed, T::zero());
    }
    PureState::new(coeffs)
}

/// Truncated, renormalized OAM coherent state |α⟩ ∝ Σ α^l/√(l!) |l⟩.
pub fn coherent_state<T: Real>(alpha: Complex<T>, d: usize) -> Result<PureState<T>> {
    if d == 0 {
        return Err(Error::InvalidParameter("state dimension must be >= 1".into()));
    }
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); d];
    let mut term = Complex::new(T::one(), T::zero());
    coeffs[0] = term;
    for (l, slot) in coeffs.iter_mut().enumerate().skip(1) {
        term = term * alpha / Complex::new(T::of(l as f64).sqrt(), T::zero());
        *slot = term;
    }
    PureState::new(coeffs)
}

/// Three-component cat |α⟩ + e^{i0.6π}|e^{i2π/3}α⟩ + e^{−i0.3π}|e^{i4π/3}α⟩,
/// truncated at d−1 and renormalized.
pub fn cat3<T: Real>(alpha: Complex<T>, d: usize) -> Result<PureState<T>> {
    let rot = |turns: f64| Complex::from_polar(T::one(), T::of(turns * std::f64::consts::PI));
    let parts = [
        (Complex::new(T::one(), T::zero()), alpha),
        (rot(0.6), alpha * rot(2.0 / 3.0)),
        (rot(-0.3), alpha * rot(4.0 / 3.0)),
    ];
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); d];
    for (phase, a) in parts {
        let comp = coherent_state(a, d)?;
        for (c, p) in coeffs.iter_mut().zip(comp.coeffs().iter()) {
            *c += phase * *p;
        }
    }
    PureState::new(coeffs)
}

/// Raw vs validated physicality of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Physicality {
    Raw,
    Physical,
}

/// d×d complex density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    dim: usize,
    entries: Vec<Complex<T>>,
    physicality: Physicality,
}

impl<T: Real> DensityMatrix<T> {
    pub fn from_entries(dim: usize, entries: Vec<Complex<T>>, physicality: Physicality) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{} entries, got {}",
                dim,
                dim,
                entries.len()
            )));
        }
        Ok(Self { dim, entries, physicality })
    }

    /// Rank-1 projector |ψ⟩⟨ψ|.
    pub fn from_pure(psi: &PureState<T>) -> Self {
        let d = psi.dim();
        let mut entries = vec![Complex::new(T::zero(), T::zero()); d * d];
        for i in 0..d {
            for j in 0..d {
                entries[i * d + j] = psi.coeffs()[i] * psi.coeffs()[j].conj();
            }
        }
        Self { dim: d, entries, physicality: Physicality::Physical }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex<T>] {
        &self.entries
    }

    pub fn physicality(&self) -> Physicality {
        self.physicality
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        self.entries[i * self.dim + j]
    }

    pub fn trace(&self) -> Complex<T> {
        linalg::trace(&self.entries, self.dim)
    }

    /// tr(ρ²) for Hermitian ρ.
    pub fn purity(&self) -> T {
        let sq = linalg::matmul(&self.entries, &self.entries, self.dim);
        linalg::trace(&sq, self.dim).re
    }

    pub fn hermiticity_defect(&self) -> T {
        linalg::hermiticity_defect(&self.entries, self.dim)
    }

    pub fn min_eigenvalue(&self) -> T {
        let (vals, _) = linalg::hermitian_eigen(&self.entries, self.dim);
        vals[0]
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        linalg::hermitian_eigen(&self.entries, self.dim).0
    }

    /// Hermitian within 1e−10, trace 1 within 1e−10, min eigenvalue ≥ −1e−9.
    /// The bounds widen to a multiple of the scalar epsilon so the f32
    /// instantiation is judged at its own precision.
    pub fn is_physical(&self) -> bool {
        let tol = T::of(1e-10).max(T::epsilon() * T::of(64.0));
        let eig_tol = T::of(1e-9).max(T::epsilon() * T::of(1024.0));
        self.hermiticity_defect() <= tol
            && (self.trace().re - T::one()).abs() <= tol
            && self.trace().im.abs() <= tol
            && self.min_eigenvalue() >= -eig_tol
    }

    /// Conjugation by the diagonal unitary e^{iθl}.
    pub fn rotated(&self, theta: T) -> Self {
        let d = self.dim;
        let mut entries = self.entries.clone();
        for i in 0..d {
            for j in 0..d {
                let phase =
                    Complex::from_polar(T::one(), theta * (T::of(i as f64) - T::of(j as f64)));
                entries[i * d + j] *= phase;
            }
        }
        Self { dim: d, entries, physicality: self.physicality }
    }
}

/// Classical mixture Σ w_k |ψ_k⟩⟨ψ_k| / Σ w_k.
pub fn mix<T: Real>(components: &[(T, PureState<T>)]) -> Result<DensityMatrix<T>> {
    if components.is_empty() {
        return Err(Error::InvalidParameter("mixture needs at least one component".into()));
    }
    let d = components[0].1.dim();
    for (w, psi) in components {
        if psi.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "mixture component dims differ: {} vs {d}",
                psi.dim()
            )));
        }
        if *w < T::zero() || !w.is_finite() {
            return Err(Error::InvalidParameter(format!("mixture weight must be >= 0, got {w}")));
        }
    }
    let total: T = components.iter().map(|(w, _)| *w).sum();
    if total <= T::zero() {
        return Err(Error::InvalidParameter("mixture weights sum to zero".into()));
    }
    let mut entries = vec![Complex::new(T::zero(), T::zero()); d * d];
    for (w, psi) in components {
        let scale = *w / total;
        for i in 0..d {
            for j in 0..d {
                entries[i * d + j] += psi.coeffs()[i] * psi.coeffs()[j].conj() * scale;
            }
        }
    }
    Ok(DensityMatrix { dim: d, entries, physicality: Physicality::Physical })
}

/// Reproducible Haar-like random density matrix of the given rank:
/// ρ = GG†/tr(GG†) with G a d×rank complex Ginibre matrix.
pub fn random_density<T: Real>(d: usize, rank: usize, seed: u64) -> Result<DensityMatrix<T>> {
    if rank == 0 || rank > d {
        return Err(Error::InvalidParameter(format!("rank {rank} outside 1..={d}")));
    }
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut g = vec![Complex::new(T::zero(), T::zero()); d * rank];
    for v in g.iter_mut() {
        // Sampling fixed in f64 so the matrix is identical across scalar types.
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v = Complex::new(T::of(re), T::of(im));
    }
    let mut entries = vec![Complex::new(T::zero(), T::zero()); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..rank {
                acc += g[i * rank + k] * g[j * rank + k].conj();
            }
            entries[i * d + j] = acc;
        }
    }
    let tr = linalg::trace(&entries, d).re;
    for v in entries.iter_mut() {
        *v /= tr;
    }
    Ok(DensityMatrix { dim: d, entries, physicality: Physicality::Physical })
}

/// The benchmark mixture ρ_m1 = ½|0⟩⟨0| + ½|12⟩⟨12|.
pub fn rho_m1<T: Real>(d: usize) -> Result<DensityMatrix<T>> {
    let half = T::of(0.5);
    mix(&[(half, eigenstate(ModeIndex(0), d)?), (half, eigenstate(ModeIndex(12), d)?)])
}

/// The benchmark mixture ρ_m2 = ¼(|0⟩+e^{i4π/3}|12⟩)(h.c.) + ½|6⟩⟨6|.
pub fn rho_m2<T: Real>(d: usize) -> Result<DensityMatrix<T>> {
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); d];
    coeffs[0] = Complex::new(T::one(), T::zero());
    coeffs[12] = Complex::from_polar(T::one(), T::of(4.0 * std::f64::consts::PI / 3.0));
    let sup = PureState::new(coeffs)?;
    let half = T::of(0.5);
    mix(&[(half, sup), (half, eigenstate(ModeIndex(6), d)?)])
}

/// JSON state specification consumed by the CLI. Complex numbers are
/// `[re, im]` pairs. Parsing is strict: unknown keys are rejected.
#[derive(Debug, Clone, Serialize)]
pub struct StateSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: StateKind,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StateKind {
    Eigen { l: u32 },
    Superposition { coeffs: Vec<[f64; 2]> },
    Coherent { alpha: [f64; 2] },
    Cat3 { alpha: [f64; 2] },
    Squeezed { gamma: f64 },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, Serialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub state: Box<StateKind>,
}

// serde's deny_unknown_fields does not compose with flatten/tagged enums, so
// the strict parse is written out against serde_json::Value.
mod spec_parse {
    use super::*;
    use serde_json::{Map, Value};

    fn bad(msg: impl Into<String>) -> Error {
        Error::Format(msg.into())
    }

    fn check_keys(obj: &Map<String, Value>, allowed: &[&str]) -> Result<()> {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(bad(format!("unknown key `{key}` in state spec")));
            }
        }
        Ok(())
    }

    fn number(v: &Value, what: &str) -> Result<f64> {
        v.as_f64().ok_or_else(|| bad(format!("{what} must be a number")))
    }

    fn complex_pair(v: &Value, what: &str) -> Result<[f64; 2]> {
        let arr = v.as_array().ok_or_else(|| bad(format!("{what} must be a [re, im] pair")))?;
        if arr.len() != 2 {
            return Err(bad(format!("{what} must have exactly two entries")));
        }
        Ok([number(&arr[0], what)?, number(&arr[1], what)?])
    }

    pub(super) fn parse_kind(obj: &Map<String, Value>) -> Result<StateKind> {
        let ty = obj
            .get("type")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("state spec needs a string `type` field"))?;
        match ty {
            "eigen" => {
                check_keys(obj, &["type", "l", "dim"])?;
                let l = number(obj.get("l").ok_or_else(|| bad("eigen needs `l`"))?, "l")?;
                if l < 0.0 || l.fract() != 0.0 {
                    return Err(bad("`l` must be a nonnegative integer"));
                }
                Ok(StateKind::Eigen { l: l as u32 })
            }
            "superposition" => {
                check_keys(obj, &["type", "coeffs", "dim"])?;
                let raw = obj
                    .get("coeffs")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| bad("superposition needs a `coeffs` array"))?;
                let mut coeffs = Vec::with_capacity(raw.len());
                for c in raw {
                    coeffs.push(complex_pair(c, "coefficient")?);
                }
                Ok(StateKind::Superposition { coeffs })
            }
            "coherent" | "cat3" => {
                check_keys(obj, &["type", "alpha", "dim"])?;
                let alpha = complex_pair(
                    obj.get("alpha").ok_or_else(|| bad(format!("{ty} needs `alpha`")))?,
                    "alpha",
                )?;
                Ok(if ty == "coherent" {
                    StateKind::Coherent { alpha }
                } else {
                    StateKind::Cat3 { alpha }
                })
            }
            "squeezed" => {
                check_keys(obj, &["type", "gamma", "dim"])?;
                let gamma =
                    number(obj.get("gamma").ok_or_else(|| bad("squeezed needs `gamma`"))?, "gamma")?;
                Ok(StateKind::Squeezed { gamma })
            }
            "mixture" => {
                check_keys(obj, &["type", "components", "dim"])?;
                let raw = obj
                    .get("components")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| bad("mixture needs a `components` array"))?;
                let mut components = Vec::with_capacity(raw.len());
                for comp in raw {
                    let cobj =
                        comp.as_object().ok_or_else(|| bad("mixture component must be an object"))?;
                    check_keys(cobj, &["weight", "state"])?;
                    let weight = number(
                        cobj.get("weight").ok_or_else(|| bad("component needs `weight`"))?,
                        "weight",
                    )?;
                    let sobj = cobj
                        .get("state")
                        .and_then(|v| v.as_object())
                        .ok_or_else(|| bad("component needs a `state` object"))?;
                    let kind = parse_kind(sobj)?;
                    if matches!(kind, StateKind::Mixture { .. }) {
                        return Err(bad("mixture cannot nest inside a mixture"));
                    }
                    components.push(MixtureComponent { weight, state: Box::new(kind) });
                }
                Ok(StateKind::Mixture { components })
            }
            other => Err(bad(format!("unknown state type `{other}`"))),
        }
    }
}

impl StateSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Format("state spec must be a JSON object".into()))?;
        let dim = obj
            .get("dim")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Format("state spec needs an integer `dim`".into()))?
            as usize;
        if dim == 0 {
            return Err(Error::InvalidParameter("state dim must be >= 1".into()));
        }
        let kind = spec_parse::parse_kind(obj)?;
        Ok(StateSpec { dim, kind })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state spec serializes")
    }

    pub fn build<T: Real>(&self) -> Result<DensityMatrix<T>> {
        build_kind(&self.kind, self.dim)
    }
}

fn build_pure<T: Real>(kind: &StateKind, d: usize) -> Result<PureState<T>> {
    let cx = |p: &[f64; 2]| Complex::new(T::of(p[0]), T::of(p[1]));
    match kind {
        StateKind::Eigen { l } => eigenstate(ModeIndex(*l), d),
        StateKind::Superposition { coeffs } => {
            if coeffs.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "superposition has {} coefficients for dim {d}",
                    coeffs.len()
                )));
            }
            superposition(coeffs.iter().map(cx).collect())
        }
        StateKind::Coherent { alpha } => coherent_state(cx(alpha), d),
        StateKind::Cat3 { alpha } => cat3(cx(alpha), d),
        StateKind::Squeezed { gamma } => squeezed_vacuum(T::of(*gamma), d),
        StateKind::Mixture { .. } => {
            Err(Error::InvalidParameter("mixture cannot nest inside a mixture".into()))
        }
    }
}

fn build_kind<T: Real>(kind: &StateKind, d: usize) -> Result<DensityMatrix<T>> {
    match kind {
        StateKind::Mixture { components } => {
            let mut parts = Vec::with_capacity(components.len());
            for comp in components {
                parts.push((T::of(comp.weight), build_pure::<T>(&comp.state, d)?));
            }
            mix(&parts)
        }
        pure => Ok(DensityMatrix::from_pure(&build_pure::<T>(pure, d)?)),
    }
}
