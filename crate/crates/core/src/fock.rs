//! Truncated Fock space: ladder operators, special matrix elements and
//! superoperator vectorization.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, c, dagger, kron, Mat, Vector, C64, I, ONE, ZERO};
use crate::special::{laguerre_normalized_seq, ln_factorial};

/// Fock states `|0⟩ … |cutoff−1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    cutoff: usize,
}

impl FockSpace {
    pub fn new(cutoff: usize) -> Result<FockSpace> {
        if cutoff == 0 {
            return invalid("Fock cutoff must be at least 1");
        }
        Ok(FockSpace { cutoff })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff
    }
}

/// Which Hilbert space an operator acts on; composite spaces list the left
/// tensor factor first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceTag {
    Mode(usize),
    SpinMode(usize),
    ModeMode(usize, usize),
    Vectorized(usize),
}

impl SpaceTag {
    /// Matrix dimension implied by the tag.
    pub fn dim(&self) -> usize {
        match *self {
            SpaceTag::Mode(n) => n,
            SpaceTag::SpinMode(n) => 2 * n,
            SpaceTag::ModeMode(a, b) => a * b,
            SpaceTag::Vectorized(n) => n * n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    pub mat: Mat,
    pub tag: SpaceTag,
    pub hermitian: bool,
}

impl ComplexOperator {
    pub fn new(mat: Mat, tag: SpaceTag) -> Result<ComplexOperator> {
        let d = tag.dim();
        if mat.dim() != (d, d) {
            return Err(Error::Dimension(format!("{:?} needs {d}x{d}, got {:?}", tag, mat.dim())));
        }
        Ok(ComplexOperator { mat, tag, hermitian: false })
    }

    /// Constructor that verifies Hermiticity to 1e-12.
    pub fn hermitian(mat: Mat, tag: SpaceTag) -> Result<ComplexOperator> {
        let mut op = ComplexOperator::new(mat, tag)?;
        let defect = linalg::hermiticity_defect(&op.mat);
        if defect > 1e-12 {
            return invalid(format!("operator flagged Hermitian has defect {defect:.3e}"));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn dagger(&self) -> ComplexOperator {
        ComplexOperator { mat: dagger(&self.mat), tag: self.tag, hermitian: self.hermitian }
    }
}

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    mat: Mat,
}

impl DensityOperator {
    pub fn new(mat: Mat) -> Result<DensityOperator> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let tr = linalg::trace(&mat);
        if (tr - ONE).norm() > 1e-9 {
            return invalid(format!("trace {tr} differs from 1"));
        }
        if linalg::hermiticity_defect(&mat) > 1e-9 {
            return invalid("density matrix is not Hermitian");
        }
        let lo = linalg::min_eigenvalue(&mat)?;
        if lo < -1e-9 {
            return invalid(format!("density matrix has eigenvalue {lo:.3e}"));
        }
        Ok(DensityOperator { mat })
    }

    /// `|ψ⟩⟨ψ|` for a state that is normalised here.
    pub fn pure(psi: &Vector) -> Result<DensityOperator> {
        let nrm = linalg::vec_norm(psi);
        if nrm == 0.0 {
            return invalid("zero state vector");
        }
        let v = psi.mapv(|z| z / nrm);
        Ok(DensityOperator { mat: linalg::outer(&v, &v) })
    }

    /// Skip validation; used by integrators for states they produced.
    pub fn from_trusted(mat: Mat) -> DensityOperator {
        DensityOperator { mat }
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }
}

/// Lowering and raising operators: `lower[k−1, k] = √k`.
pub fn make_ladder(space: FockSpace) -> (ComplexOperator, ComplexOperator) {
    let a = lowering(space.cutoff());
    let tag = SpaceTag::Mode(space.cutoff());
    let ad = dagger(&a);
    (ComplexOperator { mat: a, tag, hermitian: false }, ComplexOperator { mat: ad, tag, hermitian: false })
}

/// Plain matrix of `â` on `n` levels.
pub fn lowering(n: usize) -> Mat {
    let mut a = Mat::zeros((n, n));
    for k in 1..n {
        a[[k - 1, k]] = c((k as f64).sqrt());
    }
    a
}

pub fn number(n: usize) -> Mat {
    Mat::from_diag(&Vector::from_shape_fn(n, |k| c(k as f64)))
}

/// `q̂ = (â + â†)/√2`.
pub fn position(n: usize) -> Mat {
    let a = lowering(n);
    (&a + &dagger(&a)).mapv(|z| z / 2f64.sqrt())
}

/// `p̂ = i(â† − â)/√2`.
pub fn momentum(n: usize) -> Mat {
    let a = lowering(n);
    (&dagger(&a) - &a).mapv(|z| z * I / 2f64.sqrt())
}

/// `P̂ = exp(i2πn̂/d)`.
pub fn rotation(n: usize, d: usize) -> Mat {
    Mat::from_diag(&Vector::from_shape_fn(n, |k| C64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64)))
}

pub fn fock_state(n: usize, k: usize) -> Vector {
    let mut v = Vector::zeros(n);
    v[k] = ONE;
    v
}

/// Truncated coherent amplitudes `e^{−|α|²/2} αᵏ/√k!`, not renormalised.
pub fn coherent_state(n: usize, alpha: C64) -> Vector {
    let x = alpha.norm_sqr();
    Vector::from_shape_fn(n, |k| {
        if alpha == ZERO {
            return if k == 0 { ONE } else { ZERO };
        }
        let lg = -0.5 * x + k as f64 * alpha.norm().ln() - 0.5 * ln_factorial(k);
        C64::from_polar(lg.exp(), k as f64 * alpha.arg())
    })
}

pub fn normalize(v: &Vector) -> Vector {
    let nrm = linalg::vec_norm(v);
    v.mapv(|z| z / nrm)
}

// Spin convention: |g⟩ = index 0, |e⟩ = index 1.

/// `σ̂₋ = |g⟩⟨e|`.
pub fn sigma_minus() -> Mat {
    let mut s = Mat::zeros((2, 2));
    s[[0, 1]] = ONE;
    s
}

pub fn sigma_plus() -> Mat {
    dagger(&sigma_minus())
}

/// `σ̂_z = |e⟩⟨e| − |g⟩⟨g|`.
pub fn sigma_z() -> Mat {
    let mut s = Mat::zeros((2, 2));
    s[[0, 0]] = c(-1.0);
    s[[1, 1]] = ONE;
    s
}

/// Kronecker product, left factor first.
pub fn tensor(a: &ComplexOperator, b: &ComplexOperator) -> Result<ComplexOperator> {
    let tag = match (a.tag, b.tag) {
        (SpaceTag::Mode(2), SpaceTag::Mode(n)) => SpaceTag::SpinMode(n),
        (SpaceTag::Mode(m), SpaceTag::Mode(n)) => SpaceTag::ModeMode(m, n),
        (x, y) => return Err(Error::Dimension(format!("tensor of {x:?} and {y:?} unsupported"))),
    };
    Ok(ComplexOperator { mat: kron(&a.mat, &b.mat), tag, hermitian: a.hermitian && b.hermitian })
}

/// `√(k!/(k+r)!) e^{−λ²/2} λʳ L_k^{(r)}(λ²)`, the displacement matrix element
/// `⟨k+r|D(λ)|k⟩` for real λ.
pub fn displacement_element(k: usize, r: i64, lambda: f64) -> Result<f64> {
    if r < 0 {
        return invalid("displacement_element takes r >= 0; mirror negative orders by symmetry");
    }
    Ok(laguerre_normalized_seq(k + 1, r as usize, lambda)[k])
}

/// Full matrix `⟨m|D(β)|n⟩` on `n` levels from the closed Laguerre form.
pub fn displacement_matrix(n: usize, beta: C64) -> Mat {
    let mut out = Mat::zeros((n, n));
    let mag = beta.norm();
    let ph = beta.arg();
    for r in 0..n {
        let seq = laguerre_normalized_seq(n - r, r, mag);
        let up = C64::from_polar(1.0, r as f64 * ph);
        let down = C64::from_polar(if r % 2 == 0 { 1.0 } else { -1.0 }, -(r as f64) * ph);
        for (k, &v) in seq.iter().enumerate() {
            out[[k + r, k]] = up * v;
            if r > 0 {
                out[[k, k + r]] = down * v;
            }
        }
    }
    out
}

/// `exp(β â† − β* â)` evaluated as a matrix exponential at the cutoff.
pub fn displacement_expm(n: usize, beta: C64) -> Result<Mat> {
    let a = lowering(n);
    let gen = dagger(&a).mapv(|z| z * beta) - a.mapv(|z| z * beta.conj());
    linalg::expm(&gen)
}

/// Squeezing element `⟨k|S(ζ)|k′⟩` with `S(ζ) = exp((ζ* â² − ζ â†²)/2)`.
///
/// Uses `√cos θ · X_n^m(θ, φ)` with `cos θ = 1/cosh|ζ|`, `n = (k+k′)/2`,
/// `m = (k−k′)/2`, φ = arg ζ, and Schmidt semi-normalised associated Legendre
/// functions (Condon–Shortley phase included) evaluated by recurrence in n.
pub fn squeeze_element(k: usize, kp: usize, zeta: C64) -> C64 {
    if (k + kp) % 2 == 1 {
        return ZERO;
    }
    let r = zeta.norm();
    if r == 0.0 {
        return if k == kp { ONE } else { ZERO };
    }
    let n = (k + kp) / 2;
    let m = (k as i64 - kp as i64) / 2;
    let ma = m.unsigned_abs() as usize;
    let cos_t = 1.0 / r.cosh();
    let sin_t = r.tanh();
    let x = legendre_semi(n, ma, cos_t, sin_t);
    let phi = zeta.arg();
    let val = cos_t.sqrt() * x;
    if m >= 0 {
        C64::from_polar(val, ma as f64 * phi)
    } else {
        let s = if ma % 2 == 0 { 1.0 } else { -1.0 };
        C64::from_polar(s * val, -(ma as f64) * phi)
    }
}

/// Real part `x_n^m(θ)` of the semi-normalised associated Legendre function.
fn legendre_semi(n: usize, m: usize, cos_t: f64, sin_t: f64) -> f64 {
    if n < m {
        return 0.0;
    }
    // X_m^m = (−1)^m √((2m)!)/(2^m m!) sin^m θ, in logs.
    let lg = 0.5 * ln_factorial(2 * m) - m as f64 * 2f64.ln() - ln_factorial(m)
        + if m > 0 { m as f64 * sin_t.ln() } else { 0.0 };
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let mut prev = sign * lg.exp();
    if n == m {
        return prev;
    }
    let mut cur = cos_t * ((2 * m + 1) as f64).sqrt() * prev;
    let mf = m as f64;
    for nn in (m + 2)..=n {
        let nf = nn as f64;
        let next = ((2.0 * nf - 1.0) * cos_t * cur - ((nf - 1.0).powi(2) - mf * mf).sqrt() * prev)
            / (nf * nf - mf * mf).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Matrix of `S(ζ)` on `n` levels from closed-form elements.
pub fn squeeze_matrix(n: usize, zeta: C64) -> Mat {
    Mat::from_shape_fn((n, n), |(k, kp)| squeeze_element(k, kp, zeta))
}

/// Hermite functions `ψ_k(q) = π^{−1/4}(2ᵏk!)^{−1/2}e^{−q²/2}H_k(q)` for
/// `k < n`, by the normalised recurrence.
pub fn hermite_functions(n: usize, q: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * q * q).exp();
    if n > 1 {
        out[1] = 2f64.sqrt() * q * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * q * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
    out
}

/// `T[q, k] = ψ_k(q)` on the given grid.
pub fn position_transform(space: FockSpace, grid: &[f64]) -> Result<Mat> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("position grid must be strictly increasing");
    }
    let n = space.cutoff();
    let mut t = Array2::<f64>::zeros((grid.len(), n));
    for (i, &q) in grid.iter().enumerate() {
        for (k, v) in hermite_functions(n, q).into_iter().enumerate() {
            t[[i, k]] = v;
        }
    }
    Ok(linalg::to_complex(&t))
}

/// Superoperator of `D[L]ρ = LρL† − ½{L†L, ρ}` in column-stacking convention.
pub fn vectorize_dissipator(l: &Mat) -> Result<Mat> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::Dimension("dissipator needs a square jump operator".into()));
    }
    let id = linalg::eye(n);
    let ldl = dagger(l).dot(l);
    let mut s = kron(&l.mapv(|z| z.conj()), l);
    s.scaled_add(c(-0.5), &kron(&id, &ldl));
    s.scaled_add(c(-0.5), &kron(&ldl.t().to_owned(), &id));
    Ok(s)
}

/// Superoperator of `−i[H, ρ]`.
pub fn hamiltonian_superop(h: &Mat) -> Mat {
    let n = h.nrows();
    let id = linalg::eye(n);
    (kron(&id, h) - kron(&h.t().to_owned(), &id)).mapv(|z| z * (-I))
}

/// Direct `D[L]ρ`, the operator-form oracle for [`vectorize_dissipator`].
pub fn apply_dissipator(l: &Mat, rho: &Mat) -> Mat {
    let ld = dagger(l);
    let ldl = ld.dot(l);
    l.dot(rho).dot(&ld) - (ldl.dot(rho) + rho.dot(&ldl)).mapv(|z| z * 0.5)
}
