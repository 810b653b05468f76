//! Jump operator `K`, Lindblad models, vectorized Liouvillians and their
//! spectra near zero.

use std::fmt::Debug;
use std::sync::Arc;

use ndarray::Array1;
use ndarray_linalg::{Eig, EigVals, Factorize, Solve};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{hamiltonian_superop, vectorize_dissipator, ComplexOperator, FockSpace, SpaceTag};
use crate::linalg::{self, dagger, Mat, Vector, C64, I, ZERO};
use crate::rabi::NLREScheme;
use crate::sparse::Csr;

/// Banded `K = a†ʳ f(n) − g(n) aˡ` in sparse form.
pub fn build_k_sparse(scheme: &NLREScheme, space: FockSpace) -> Csr {
    let n = space.cutoff();
    let mut trip = Vec::with_capacity(2 * n);
    let ef = C64::from_polar(1.0, scheme.phase_f);
    let eg = C64::from_polar(1.0, scheme.phase_g);
    for k in 0..n {
        if k + scheme.r < n {
            let f = scheme.f(k);
            if f != 0.0 {
                trip.push((k + scheme.r, k, ef * f));
            }
        }
        if k + scheme.l < n {
            let g = scheme.g(k);
            if g != 0.0 {
                trip.push((k, k + scheme.l, -eg * g));
            }
        }
    }
    Csr::from_triplets(n, n, trip)
}

/// Dense `K` with entries `f̃(k)e^{iφ_f}` at `(k+r, k)` and `−g̃(k)e^{iφ_g}` at `(k, k+l)`.
pub fn build_k(scheme: &NLREScheme, space: FockSpace) -> ComplexOperator {
    ComplexOperator {
        mat: build_k_sparse(scheme, space).to_dense(),
        tag: SpaceTag::Mode(space.cutoff()),
        hermitian: false,
    }
}

/// `‖K ψ‖ / ‖ψ‖`.
pub fn dark_residual(k: &ComplexOperator, psi: &Vector) -> f64 {
    linalg::vec_norm(&k.mat.dot(psi)) / linalg::vec_norm(psi)
}

/// Superoperator term beyond Hamiltonian and jump structure.
pub trait SuperTerm: Debug + Send + Sync {
    /// Hilbert-space dimension the term acts on.
    fn dim(&self) -> usize;
    /// The map applied to an operator.
    fn apply(&self, rho: &Mat) -> Mat;
    /// Column-stacked matrix representation.
    fn to_matrix(&self) -> Mat {
        let n = self.dim();
        let mut out = Mat::zeros((n * n, n * n));
        for j in 0..n {
            for i in 0..n {
                let mut e = Mat::zeros((n, n));
                e[[i, j]] = C64::new(1.0, 0.0);
                let col = linalg::vectorize(&self.apply(&e));
                out.column_mut(i + n * j).assign(&col);
            }
        }
        out
    }
}

/// A raw vectorized superoperator.
#[derive(Debug, Clone)]
pub struct RawSuperop {
    pub n: usize,
    pub mat: Mat,
}

impl SuperTerm for RawSuperop {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, rho: &Mat) -> Mat {
        linalg::unvectorize(&self.mat.dot(&linalg::vectorize(rho)), self.n)
    }

    fn to_matrix(&self) -> Mat {
        self.mat.clone()
    }
}

/// `dρ/dt = −i[H, ρ] + Σ γ_j D[L_j]ρ + Σ extra(ρ)`.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub hamiltonian: ComplexOperator,
    pub jumps: Vec<(ComplexOperator, f64)>,
    pub extra_superops: Vec<Arc<dyn SuperTerm>>,
}

impl LindbladModel {
    pub fn new(tag: SpaceTag) -> LindbladModel {
        let n = tag.dim();
        LindbladModel {
            hamiltonian: ComplexOperator { mat: Mat::zeros((n, n)), tag, hermitian: true },
            jumps: Vec::new(),
            extra_superops: Vec::new(),
        }
    }

    /// Pure-dissipative model `κ_eff D[K]`.
    pub fn from_scheme(scheme: &NLREScheme, space: FockSpace) -> LindbladModel {
        let mut m = LindbladModel::new(SpaceTag::Mode(space.cutoff()));
        m.jumps.push((build_k(scheme, space), scheme.kappa_eff));
        m
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.tag.dim()
    }

    pub fn with_hamiltonian(mut self, h: ComplexOperator) -> Result<LindbladModel> {
        if h.tag != self.hamiltonian.tag {
            return Err(Error::Dimension(format!("{:?} vs {:?}", h.tag, self.hamiltonian.tag)));
        }
        self.hamiltonian = h;
        Ok(self)
    }

    pub fn add_jump(&mut self, op: ComplexOperator, rate: f64) -> Result<()> {
        if op.tag != self.hamiltonian.tag {
            return Err(Error::Dimension(format!("{:?} vs {:?}", op.tag, self.hamiltonian.tag)));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return crate::error::invalid(format!("jump rate {rate} must be finite and nonnegative"));
        }
        self.jumps.push((op, rate));
        Ok(())
    }

    pub fn add_extra(&mut self, term: Arc<dyn SuperTerm>) -> Result<()> {
        if term.dim() != self.dim() {
            return Err(Error::Dimension(format!("extra term dim {} vs {}", term.dim(), self.dim())));
        }
        self.extra_superops.push(term);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.hamiltonian.mat.dim() != (n, n) {
            return Err(Error::Dimension("Hamiltonian shape".into()));
        }
        for (op, rate) in &self.jumps {
            if op.tag != self.hamiltonian.tag || op.mat.dim() != (n, n) {
                return Err(Error::Dimension("jump operator space mismatch".into()));
            }
            if !(*rate >= 0.0) {
                return crate::error::invalid("negative jump rate");
            }
        }
        if self.extra_superops.iter().any(|t| t.dim() != n) {
            return Err(Error::Dimension("extra superoperator dimension mismatch".into()));
        }
        Ok(())
    }

    /// Largest jump rate, the natural unit for spectral thresholds.
    pub fn max_rate(&self) -> f64 {
        self.jumps.iter().map(|j| j.1).fold(0.0, f64::max)
    }

    /// `H_eff = −iH − ½ Σ γ L†L`.
    pub fn effective_generator(&self) -> Mat {
        let mut heff = self.hamiltonian.mat.mapv(|z| -I * z);
        for (op, rate) in &self.jumps {
            let ldl = dagger(&op.mat).dot(&op.mat);
            heff.scaled_add(C64::new(-0.5 * rate, 0.0), &ldl);
        }
        heff
    }

    /// Precomputed operator-form right-hand side.
    pub fn operator_form(&self) -> Result<OperatorForm> {
        self.validate()?;
        let heff = self.effective_generator();
        let jumps = self
            .jumps
            .iter()
            .filter(|(_, r)| *r > 0.0)
            .map(|(op, rate)| {
                let j = Csr::from_dense(&op.mat.mapv(|z| z * rate.sqrt()));
                let jd = j.dagger();
                (j, jd)
            })
            .collect();
        Ok(OperatorForm { heff: MaybeSparse::new(heff), jumps, extra: self.extra_superops.clone() })
    }
}

#[derive(Debug, Clone)]
enum MaybeSparse {
    Dense(Mat),
    Sparse(Csr),
}

impl MaybeSparse {
    fn new(m: Mat) -> MaybeSparse {
        let s = Csr::from_dense(&m);
        if s.nnz() * 4 < m.len() {
            MaybeSparse::Sparse(s)
        } else {
            MaybeSparse::Dense(m)
        }
    }

    fn mul(&self, b: &Mat) -> Mat {
        match self {
            MaybeSparse::Dense(m) => m.dot(b),
            MaybeSparse::Sparse(s) => s.mul_dense(b),
        }
    }
}

/// `ρ ↦ H_eff ρ + ρ H_eff† + Σ J ρ J† + extras` for Hermitian `ρ`.
#[derive(Debug, Clone)]
pub struct OperatorForm {
    heff: MaybeSparse,
    jumps: Vec<(Csr, Csr)>,
    extra: Vec<Arc<dyn SuperTerm>>,
}

impl OperatorForm {
    pub fn apply(&self, rho: &Mat) -> Mat {
        let x = self.heff.mul(rho);
        let mut out = &x + &dagger(&x);
        for (j, jd) in &self.jumps {
            let y = j.mul_dense(rho);
            out += &jd.left_mul_dense(&y);
        }
        for t in &self.extra {
            out += &t.apply(rho);
        }
        out
    }
}

/// Full column-stacked Liouvillian.
pub fn build_liouvillian(model: &LindbladModel) -> Result<ComplexOperator> {
    model.validate()?;
    let n = model.dim();
    let mut l = hamiltonian_superop(&model.hamiltonian.mat);
    for (op, rate) in &model.jumps {
        l.scaled_add(C64::new(*rate, 0.0), &vectorize_dissipator(&op.mat)?);
    }
    for t in &model.extra_superops {
        l += &t.to_matrix();
    }
    Ok(ComplexOperator { mat: l, tag: SpaceTag::Vectorized(n), hermitian: false })
}

/// Matrix units `|i⟩⟨j|` with `(i − j) ≡ s (mod d)`, in column-stacking order.
pub fn sector_indices(n: usize, d: usize, s: usize) -> Vec<(usize, usize)> {
    let mut idx = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if (i as i64 - j as i64).rem_euclid(d as i64) as usize == s % d {
                idx.push((i, j));
            }
        }
    }
    idx
}

/// Block of the Liouvillian on the coherence sector `(i − j) ≡ s (mod d)`.
///
/// The model must commute with `exp(i2πn/d)` up to phases; any amplitude
/// leaving the sector is reported as an error.
pub fn build_sector_liouvillian(model: &LindbladModel, d: usize, s: usize) -> Result<(Mat, Vec<(usize, usize)>)> {
    model.validate()?;
    let n = model.dim();
    let idx = sector_indices(n, d, s);
    let mut pos = vec![usize::MAX; n * n];
    for (p, &(i, j)) in idx.iter().enumerate() {
        pos[i + n * j] = p;
    }
    let heff = model.effective_generator();
    let jumps: Vec<Csr> = model
        .jumps
        .iter()
        .filter(|j| j.1 > 0.0)
        .map(|(op, rate)| Csr::from_dense(&op.mat.mapv(|z| z * rate.sqrt())))
        .collect();
    let jcols: Vec<Vec<Vec<(usize, C64)>>> = jumps
        .iter()
        .map(|j| {
            let mut cols = vec![Vec::new(); n];
            for a in 0..n {
                for (i, v) in j.row(a) {
                    cols[i].push((a, v));
                }
            }
            cols
        })
        .collect();
    let dim = idx.len();
    let mut l = Mat::zeros((dim, dim));
    let leak = std::cell::Cell::new(0.0f64);
    let put = |a: usize, b: usize, col: usize, v: C64, l: &mut Mat| {
        let p = pos[a + n * b];
        if p == usize::MAX {
            leak.set(leak.get().max(v.norm()));
        } else {
            l[[p, col]] += v;
        }
    };
    for (col, &(i, j)) in idx.iter().enumerate() {
        for a in 0..n {
            let v = heff[[a, i]];
            if v != ZERO {
                put(a, j, col, v, &mut l);
            }
            let w = heff[[a, j]].conj();
            if w != ZERO {
                put(i, a, col, w, &mut l);
            }
        }
        for cols in &jcols {
            for &(a, va) in &cols[i] {
                for &(b, vb) in &cols[j] {
                    put(a, b, col, va * vb.conj(), &mut l);
                }
            }
        }
    }
    if leak.get() > 1e-12 {
        return Err(Error::Invalid(format!("model mixes coherence sectors of Z_{d} (amplitude {:.3e})", leak.get())));
    }
    if !model.extra_superops.is_empty() {
        for (col, &(i, j)) in idx.iter().enumerate() {
            let mut e = Mat::zeros((n, n));
            e[[i, j]] = C64::new(1.0, 0.0);
            for t in &model.extra_superops {
                let out = t.apply(&e);
                for ((a, b), &v) in out.indexed_iter() {
                    if v != ZERO {
                        put(a, b, col, v, &mut l);
                    }
                }
            }
        }
        if leak.get() > 1e-12 {
            return Err(Error::Invalid("extra term mixes coherence sectors".into()));
        }
    }
    Ok((l, idx))
}

/// Default vectorized dimension above which the spectrum switches to
/// shift-invert iteration.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenCluster {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Sorted by `(|Re Λ|, Im Λ)`.
    pub eigenvalues: Vec<Eigenvalue>,
    pub clusters: Vec<EigenCluster>,
    pub n_exact_zero: usize,
    pub n_near_zero: usize,
    /// `−Re Λ` for the near-zero modes.
    pub leakage_rates: Vec<f64>,
    pub zero_threshold: f64,
    pub near_zero_threshold: f64,
    pub method: String,
    /// Ritz residuals for the iterative path.
    pub residuals: Vec<f64>,
}

impl SpectrumReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectrum report serializes")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    pub dense_limit: usize,
    /// Exact-zero threshold in units of `κ_eff`.
    pub zero_factor: f64,
    /// Near-zero threshold in units of `κ_eff`.
    pub near_factor: f64,
}

impl Default for SpectrumOptions {
    fn default() -> SpectrumOptions {
        SpectrumOptions { dense_limit: DENSE_LIMIT, zero_factor: 1e-9, near_factor: 1e-2 }
    }
}

/// The `count` eigenvalues of smallest `|Re Λ|`.
pub fn spectrum_near_zero(l: &Mat, count: usize, kappa_eff: f64) -> Result<SpectrumReport> {
    spectrum_near_zero_with(l, count, kappa_eff, SpectrumOptions::default())
}

pub fn spectrum_near_zero_with(l: &Mat, count: usize, kappa_eff: f64, opts: SpectrumOptions) -> Result<SpectrumReport> {
    if count == 0 || count > 30 {
        return crate::error::invalid(format!("count {count} outside 1..=30"));
    }
    let dim = l.nrows();
    if l.ncols() != dim {
        return Err(Error::Dimension("Liouvillian must be square".into()));
    }
    let count = count.min(dim);
    let (mut eigs, residuals, method) = if dim <= opts.dense_limit {
        let w = l.eigvals()?;
        (w.to_vec(), Vec::new(), "dense".to_string())
    } else {
        let (w, res) = shift_invert(l, count, kappa_eff)?;
        (w, res, "shift_invert".to_string())
    };
    sort_eigs(&mut eigs);
    eigs.truncate(count);
    let zero = opts.zero_factor * kappa_eff;
    let near = opts.near_factor * kappa_eff;
    let n_exact_zero = eigs.iter().filter(|z| z.re.abs() < zero).count();
    let near_modes: Vec<&C64> = eigs.iter().filter(|z| z.re.abs() < near).collect();
    let eigenvalues: Vec<Eigenvalue> = eigs.iter().map(|z| Eigenvalue { re: z.re, im: z.im }).collect();
    Ok(SpectrumReport {
        clusters: cluster(&eigs, 1e-8 * kappa_eff.max(1e-300)),
        n_exact_zero,
        n_near_zero: near_modes.len(),
        leakage_rates: near_modes.iter().map(|z| -z.re).collect(),
        eigenvalues,
        zero_threshold: zero,
        near_zero_threshold: near,
        method,
        residuals,
    })
}

fn sort_eigs(e: &mut [C64]) {
    e.sort_by(|a, b| a.re.abs().total_cmp(&b.re.abs()).then(a.im.total_cmp(&b.im)));
}

fn cluster(eigs: &[C64], tol: f64) -> Vec<EigenCluster> {
    let mut out: Vec<(C64, usize)> = Vec::new();
    for &z in eigs {
        match out.iter_mut().find(|(c, _)| (c - z).norm() < tol) {
            Some((_, m)) => *m += 1,
            None => out.push((z, 1)),
        }
    }
    out.into_iter().map(|(z, m)| EigenCluster { re: z.re, im: z.im, multiplicity: m }).collect()
}

/// Block Krylov Rayleigh–Ritz on `(L − σ)⁻¹` with a dense LU factorization.
fn shift_invert(l: &Mat, count: usize, kappa_eff: f64) -> Result<(Vec<C64>, Vec<f64>)> {
    let dim = l.nrows();
    let sigma = C64::new(1e-3 * kappa_eff.max(1e-12), 0.0);
    let mut shifted = l.clone();
    for i in 0..dim {
        shifted[[i, i]] -= sigma;
    }
    let lu = shifted.factorize()?;
    let block = (count + 2).min(dim);
    let max_basis = dim.min((12 * block).max(120));
    let mut basis: Vec<Vector> = Vec::new();
    let mut images: Vec<Vector> = Vec::new();
    let mut frontier: Vec<Vector> = (0..block)
        .map(|b| {
            Vector::from_shape_fn(dim, |i| {
                let t = (i * (b + 1)) as f64;
                C64::new(1.0 + 0.5 * (0.7 * t + b as f64).sin(), 0.3 * (1.3 * t).cos())
            })
        })
        .collect();
    let mut last_res;
    loop {
        let mut next = Vec::new();
        for v in frontier.drain(..) {
            if let Some(q) = orthonormalize(&basis, v) {
                let aq = lu.solve(&q)?;
                basis.push(q);
                next.push(aq.clone());
                images.push(aq);
            }
            if basis.len() >= max_basis {
                break;
            }
        }
        let m = basis.len();
        let mut h = Mat::zeros((m, m));
        for (j, aq) in images.iter().enumerate() {
            for (i, q) in basis.iter().enumerate() {
                h[[i, j]] = linalg::inner(q, aq);
            }
        }
        let (theta, y) = h.eig()?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| theta[b].norm().total_cmp(&theta[a].norm()));
        let mut vals = Vec::new();
        let mut res = Vec::new();
        for &p in order.iter().take(count) {
            let yc = y.column(p);
            let mut r = Vector::zeros(dim);
            let mut x = Vector::zeros(dim);
            for k in 0..m {
                r.scaled_add(yc[k], &images[k]);
                x.scaled_add(yc[k], &basis[k]);
            }
            r.scaled_add(-theta[p], &x);
            res.push(linalg::vec_norm(&r) / theta[p].norm());
            vals.push(sigma + C64::new(1.0, 0.0) / theta[p]);
        }
        let worst = res.iter().cloned().fold(0.0, f64::max);
        last_res = res.clone();
        if worst < 1e-10 {
            return Ok((vals, res));
        }
        if m >= max_basis || next.is_empty() {
            break;
        }
        frontier = next;
    }
    Err(Error::Convergence(format!("shift-invert did not converge; residuals {last_res:?}")))
}

fn orthonormalize(basis: &[Vector], mut v: Vector) -> Option<Vector> {
    let start = linalg::vec_norm(&v);
    for _ in 0..2 {
        for q in basis {
            let ov = linalg::inner(q, &v);
            v.scaled_add(-ov, q);
        }
    }
    let nv = linalg::vec_norm(&v);
    if nv < 1e-10 * start {
        return None;
    }
    Some(v.mapv(|z| z / nv))
}

/// Real parts of all eigenvalues, for growth checks.
pub fn max_real_eigenvalue(l: &Mat) -> Result<f64> {
    let w: Array1<C64> = l.eigvals()?;
    Ok(w.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Extract the sector sub-block of a full column-stacked matrix.
pub fn restrict_to_sector(full: &Mat, n: usize, idx: &[(usize, usize)]) -> Mat {
    let flat: Vec<usize> = idx.iter().map(|&(i, j)| i + n * j).collect();
    Mat::from_shape_fn((flat.len(), flat.len()), |(a, b)| full[[flat[a], flat[b]]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darkstate::{solve_recurrence, Truth};
    use crate::fock::lowering;
    use crate::rabi::RabiProfileSpec;
    use ndarray_linalg::SVD;
    use proptest::prelude::*;

    fn decay_model(n: usize, rate: f64) -> LindbladModel {
        let mut m = LindbladModel::new(SpaceTag::Mode(n));
        m.add_jump(ComplexOperator::new(lowering(n), SpaceTag::Mode(n)).unwrap(), rate).unwrap();
        m
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        sort_eigs(&mut v);
        v
    }

    #[test]
    fn k_examples() {
        let alpha: f64 = 1.7;
        let n = 12;
        let k = build_k(&NLREScheme::standard_cat(2, alpha, 1.0).unwrap(), FockSpace::new(n).unwrap());
        let a = lowering(n);
        let target = a.dot(&a) - linalg::eye(n).mapv(|z| z * alpha * alpha);
        assert!(linalg::max_abs(&(&k.mat + &target)) < 1e-12);
        let up = NLREScheme::new(
            1,
            0,
            RabiProfileSpec::Constant { value: 1.0 },
            RabiProfileSpec::Constant { value: 0.0 },
            1.0,
        )
        .unwrap();
        let k = build_k(&up, FockSpace::new(n).unwrap());
        let mut adag = Mat::zeros((n, n));
        for j in 0..n - 1 {
            adag[[j + 1, j]] = C64::new(1.0, 0.0);
        }
        assert_eq!(k.mat, adag);
    }

    #[test]
    fn three_two_scheme_has_five_small_singular_values() {
        let s = NLREScheme::linear(3, 2, 20.0, 20.0, 1.0, 1.0, 1.0).unwrap();
        let n = 50;
        let k = build_k(&s, FockSpace::new(n).unwrap());
        let (_, sv, _) = k.mat.svd(false, false).unwrap();
        assert_eq!(sv.iter().filter(|&&x| x < 1e-10).count(), 5);
    }

    #[test]
    fn two_level_decay_spectrum() {
        let l = build_liouvillian(&decay_model(2, 1.0)).unwrap();
        let w = sorted(l.mat.eigvals().unwrap().to_vec());
        let expect = [0.0, -0.5, -0.5, -1.0];
        for (z, e) in w.iter().zip(expect) {
            assert!((z.re - e).abs() < 1e-12 && z.im.abs() < 1e-12, "{z}");
        }
        let zero = build_liouvillian(&LindbladModel::new(SpaceTag::Mode(3))).unwrap();
        assert_eq!(linalg::max_abs(&zero.mat), 0.0);
    }

    #[test]
    fn damped_oscillator_gap() {
        let rate = 0.7;
        let l = build_liouvillian(&decay_model(6, rate)).unwrap();
        let rep = spectrum_near_zero(&l.mat, 3, rate).unwrap();
        assert_eq!(rep.n_exact_zero, 1);
        assert!((rep.eigenvalues[1].re + rate / 2.0).abs() < 1e-10);
        let json = rep.to_json();
        assert!(json.contains("n_exact_zero"));
    }

    #[test]
    fn dissipators_add() {
        let n = 4;
        let mut m = decay_model(n, 0.3);
        let l1 = build_liouvillian(&m).unwrap().mat;
        let num = ComplexOperator::new(crate::fock::number(n), SpaceTag::Mode(n)).unwrap();
        m.add_jump(num.clone(), 0.2).unwrap();
        let l2 = build_liouvillian(&m).unwrap().mat;
        let d = vectorize_dissipator(&num.mat).unwrap().mapv(|z| z * 0.2);
        assert!(linalg::max_abs(&(l2 - l1 - d)) < 1e-14);
    }

    #[test]
    fn zero_modes_count_true_dark_states() {
        for (r, l) in [(0usize, 2usize), (1, 1), (0, 3)] {
            let s = NLREScheme::linear(r, l, 5.0, 4.0, 1.5, 1.5, 1.0).unwrap();
            let space = FockSpace::new(16).unwrap();
            let states = solve_recurrence(&s, space).unwrap();
            let n_true = states.iter().filter(|s| s.truth == Truth::TrueDark).count();
            let lv = build_liouvillian(&LindbladModel::from_scheme(&s, space)).unwrap();
            let w = lv.mat.eigvals().unwrap();
            let zeros = w.iter().filter(|z| z.norm() < 1e-9).count();
            assert!(zeros >= n_true * n_true, "({r},{l}): {zeros} zero modes");
            assert!(w.iter().all(|z| z.re <= 1e-9));
        }
    }

    #[test]
    fn sector_block_matches_full() {
        let s = NLREScheme::linear(1, 2, 5.0, 5.0, 0.8, 1.1, 1.0).unwrap();
        let space = FockSpace::new(10).unwrap();
        let mut model = LindbladModel::from_scheme(&s, space);
        model.add_jump(ComplexOperator::new(crate::fock::number(10), SpaceTag::Mode(10)).unwrap(), 0.05).unwrap();
        let full = build_liouvillian(&model).unwrap().mat;
        for sec in 0..3 {
            let (blk, idx) = build_sector_liouvillian(&model, 3, sec).unwrap();
            let sub = restrict_to_sector(&full, 10, &idx);
            assert!(linalg::max_abs(&(blk - sub)) < 1e-13);
        }
        let mut broken = model.clone();
        broken.add_jump(ComplexOperator::new(crate::fock::momentum(10), SpaceTag::Mode(10)).unwrap(), 0.1).unwrap();
        assert!(build_sector_liouvillian(&broken, 3, 0).is_err());
    }

    #[test]
    fn operator_form_matches_superoperator() {
        let s = NLREScheme::linear(0, 2, 4.0, 3.0, 1.0, 1.0, 1.3).unwrap();
        let space = FockSpace::new(8).unwrap();
        let mut model = LindbladModel::from_scheme(&s, space);
        let h = crate::fock::number(8).mapv(|z| z * 0.4);
        model = model.with_hamiltonian(ComplexOperator::hermitian(h, SpaceTag::Mode(8)).unwrap()).unwrap();
        model.add_extra(Arc::new(RawSuperop { n: 8, mat: vectorize_dissipator(&lowering(8)).unwrap() })).unwrap();
        let l = build_liouvillian(&model).unwrap().mat;
        let psi = crate::fock::normalize(&Vector::from_shape_fn(8, |k| C64::new(1.0 / (k + 1) as f64, 0.1 * k as f64)));
        let rho = linalg::outer(&psi, &psi);
        let a = model.operator_form().unwrap().apply(&rho);
        let b = linalg::unvectorize(&l.dot(&linalg::vectorize(&rho)), 8);
        assert!(linalg::max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn shift_invert_agrees_with_dense() {
        let s = NLREScheme::linear(0, 2, 5.0, 4.0, 0.7, 1.2, 1.0).unwrap();
        let space = FockSpace::new(10).unwrap();
        let mut model = LindbladModel::from_scheme(&s, space);
        model.add_jump(ComplexOperator::new(crate::fock::number(10), SpaceTag::Mode(10)).unwrap(), 0.02).unwrap();
        let l = build_liouvillian(&model).unwrap().mat;
        let dense = spectrum_near_zero(&l, 6, 1.0).unwrap();
        let opts = SpectrumOptions { dense_limit: 10, ..Default::default() };
        let iter = spectrum_near_zero_with(&l, 6, 1.0, opts).unwrap();
        assert_eq!(iter.method, "shift_invert");
        for (a, b) in dense.eigenvalues.iter().zip(&iter.eigenvalues) {
            assert!((a.re - b.re).abs() < 1e-8 && (a.im - b.im).abs() < 1e-8, "{a:?} {b:?}");
        }
    }

    #[test]
    fn dark_residual_examples() {
        let s = NLREScheme::linear(1, 1, 10.0, 10.0, 1.0, 1.0, 1.0).unwrap();
        let space = FockSpace::new(40).unwrap();
        let k = build_k(&s, space);
        let states = solve_recurrence(&s, space).unwrap();
        assert!(dark_residual(&k, &states[0].xi) < 1e-9);
        let rnd = Vector::from_shape_fn(40, |i| C64::new((i as f64).sin(), 0.0));
        assert!(dark_residual(&k, &rnd) > 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn spectrum_never_grows(k_star in 2.0f64..6.0, h in 1.0f64..5.0, sf in 0.3f64..2.0, sg in 0.3f64..2.0,
                                 r in 0usize..3, l in 0usize..3, deph in 0.0f64..0.2) {
            prop_assume!(r + l > 0);
            let s = NLREScheme::linear(r, l, k_star, h, sf, sg, 1.0).unwrap();
            let space = FockSpace::new(7).unwrap();
            let mut model = LindbladModel::from_scheme(&s, space);
            model.add_jump(ComplexOperator::new(crate::fock::number(7), SpaceTag::Mode(7)).unwrap(), deph).unwrap();
            let lv = build_liouvillian(&model).unwrap();
            prop_assert!(max_real_eigenvalue(&lv.mat).unwrap() <= 1e-9);
        }
    }
}
