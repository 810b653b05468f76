//! Phase-space pictures: Wigner and Husimi functions of a density matrix and
//! the semiclassical vector field of a scheme with its critical points.
//!
//! Quasiprobabilities use `q̂ = (â + â†)/√2`, `p̂ = i(â† − â)/√2`, so the
//! vacuum has `W(0, 0) = 1/π`. The classical field uses `⟨q⟩ = Re α`,
//! `⟨p⟩ = Im α` of the coherent state `|α⟩`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{coherent_state, displacement_matrix, DensityOperator, FockSpace};
use crate::linalg::{Mat, C64, ZERO};
use crate::liouvillian::build_k_sparse;
use crate::rabi::NLREScheme;
use crate::sparse::Csr;

const PI: f64 = std::f64::consts::PI;

/// Rectangular grid over `(q, p)`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nq: usize,
    pub np: usize,
}

impl PhaseGrid {
    pub fn new(q: (f64, f64), p: (f64, f64), nq: usize, np: usize) -> Result<PhaseGrid> {
        let g = PhaseGrid { q_min: q.0, q_max: q.1, p_min: p.0, p_max: p.1, nq, np };
        g.validate()?;
        Ok(g)
    }

    /// Square grid over `±(√(2N) + 2)`.
    pub fn for_cutoff(cutoff: usize, points: usize) -> Result<PhaseGrid> {
        let h = half_width(cutoff);
        PhaseGrid::new((-h, h), (-h, h), points, points)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.q_min, self.q_max, self.p_min, self.p_max].iter().all(|v| v.is_finite());
        if !finite || !(self.q_max > self.q_min) || !(self.p_max > self.p_min) {
            return invalid("phase grid needs finite, increasing ranges");
        }
        if self.nq < 2 || self.np < 2 {
            return invalid("phase grid needs at least two points per axis");
        }
        Ok(())
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_min + (self.q_max - self.q_min) * i as f64 / (self.nq - 1) as f64
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + (self.p_max - self.p_min) * j as f64 / (self.np - 1) as f64
    }

    pub fn spacing(&self) -> (f64, f64) {
        ((self.q_max - self.q_min) / (self.nq - 1) as f64, (self.p_max - self.p_min) / (self.np - 1) as f64)
    }

    /// True when both ranges contain `±(√(2N) + 2)`.
    pub fn covers(&self, cutoff: usize) -> bool {
        let h = half_width(cutoff);
        self.q_min <= -h && self.q_max >= h && self.p_min <= -h && self.p_max >= h
    }

    pub fn contains(&self, q: f64, p: f64) -> bool {
        q >= self.q_min && q <= self.q_max && p >= self.p_min && p <= self.p_max
    }

    /// Largest `|q + ip|` on the grid.
    fn max_radius(&self) -> f64 {
        let q = self.q_min.abs().max(self.q_max.abs());
        let p = self.p_min.abs().max(self.p_max.abs());
        q.hypot(p)
    }

    fn evaluate(&self, f: impl Fn(f64, f64) -> f64 + Sync) -> Array2<f64> {
        let vals: Vec<f64> =
            (0..self.nq * self.np).into_par_iter().map(|idx| f(self.q(idx / self.np), self.p(idx % self.np))).collect();
        Array2::from_shape_vec((self.nq, self.np), vals).expect("grid shape")
    }
}

fn half_width(cutoff: usize) -> f64 {
    (2.0 * cutoff as f64).sqrt() + 2.0
}

/// Real field sampled on a grid, `values[[i, j]]` at `(q(i), p(j))`.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: PhaseGrid,
    pub values: Array2<f64>,
    pub label: String,
}

impl ScalarField {
    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        let (dq, dp) = self.grid.spacing();
        let (nq, np) = (self.grid.nq, self.grid.np);
        let mut acc = 0.0;
        for i in 0..nq {
            let wi = if i == 0 || i == nq - 1 { 0.5 } else { 1.0 };
            for j in 0..np {
                let wj = if j == 0 || j == np - 1 { 0.5 } else { 1.0 };
                acc += wi * wj * self.values[[i, j]];
            }
        }
        acc * dq * dp
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# field: {}\n# grid: {}\nq,p,value\n", self.label, grid_json(&self.grid));
        for i in 0..self.grid.nq {
            for j in 0..self.grid.np {
                out.push_str(&format!(
                    "{:.12e},{:.12e},{:.12e}\n",
                    self.grid.q(i),
                    self.grid.p(j),
                    self.values[[i, j]]
                ));
            }
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        serde_json::json!({ "field": self.label, "grid": self.grid, "integral": self.integral() }).to_string()
    }
}

fn grid_json(g: &PhaseGrid) -> String {
    serde_json::to_string(g).expect("grid serializes")
}

/// `W(q, p) = Tr[ρ D(2β) Π]/π` with `β = (q + ip)/√2` and parity `Π`, from
/// exact displacement elements at the density-matrix cutoff.
pub fn wigner_at(rho: &Mat, q: f64, p: f64) -> f64 {
    let n = rho.nrows();
    let beta = C64::new(q, p) * std::f64::consts::SQRT_2;
    let d = displacement_matrix(n, beta);
    let mut acc = ZERO;
    for m in 0..n {
        for k in 0..n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += rho[[k, m]] * d[[m, k]] * sign;
        }
    }
    acc.re / PI
}

/// Wigner function on `grid`; the grid must cover the state's cutoff.
pub fn wigner(rho: &DensityOperator, grid: &PhaseGrid) -> Result<ScalarField> {
    grid.validate()?;
    if !grid.covers(rho.dim()) {
        return Err(Error::Truncation(format!("grid does not cover ±(√(2N)+2) for cutoff {}", rho.dim())));
    }
    let m = rho.mat();
    Ok(ScalarField { grid: *grid, values: grid.evaluate(|q, p| wigner_at(m, q, p)), label: "wigner".into() })
}

/// `Q(q, p) = ⟨β|ρ|β⟩/(2π)` with `β = (q + ip)/√2`.
pub fn husimi(rho: &DensityOperator, grid: &PhaseGrid) -> Result<ScalarField> {
    grid.validate()?;
    if !grid.covers(rho.dim()) {
        return Err(Error::Truncation(format!("grid does not cover ±(√(2N)+2) for cutoff {}", rho.dim())));
    }
    let m = rho.mat();
    let n = rho.dim();
    let values = grid.evaluate(|q, p| {
        let v = coherent_state(n, C64::new(q, p) / std::f64::consts::SQRT_2);
        let mv = m.dot(&v);
        v.iter().zip(mv.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re / (2.0 * PI)
    });
    Ok(ScalarField { grid: *grid, values, label: "husimi".into() })
}

/// `D†[L](â) = L†âL − ½{L†L, â}` for `L = √κ K`, in sparse form on a cutoff
/// large enough for every coherent state the field is evaluated on.
#[derive(Debug, Clone)]
pub struct ClassicalModel {
    op: Csr,
    cutoff: usize,
}

/// Largest working cutoff for the classical field.
const MAX_CLASSICAL_CUTOFF: usize = 6000;

impl ClassicalModel {
    pub fn new(scheme: &NLREScheme, max_radius: f64) -> Result<ClassicalModel> {
        scheme.validate()?;
        if !(max_radius > 0.0) || !max_radius.is_finite() {
            return invalid("classical model needs a positive radius");
        }
        let margin = 4 * scheme.d() + 4;
        let mut n = ((max_radius + 10.0).powi(2)).ceil() as usize + margin;
        loop {
            if n > MAX_CLASSICAL_CUTOFF {
                return Err(Error::Truncation(format!(
                    "classical field at radius {max_radius} needs over {MAX_CLASSICAL_CUTOFF} levels"
                )));
            }
            let v = coherent_state(n, C64::new(max_radius, 0.0));
            let top: f64 = v.iter().skip(n - margin).map(|z| z.norm_sqr()).sum();
            if top < 1e-28 {
                break;
            }
            n += n / 4;
        }
        let l = build_k_sparse(scheme, FockSpace::new(n)?).scale(C64::new(scheme.kappa_eff.sqrt(), 0.0));
        let ld = l.dagger();
        let a = Csr::from_triplets(n, n, (1..n).map(|k| (k - 1, k, C64::new((k as f64).sqrt(), 0.0))).collect());
        let ldl = ld.mul_csr(&l);
        let half = C64::new(-0.5, 0.0);
        let op = ld.mul_csr(&a).mul_csr(&l).add(&ldl.mul_csr(&a).scale(half)).add(&a.mul_csr(&ldl).scale(half));
        Ok(ClassicalModel { op, cutoff: n })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `(Q̇, Ṗ) = (Re, Im) ⟨α|D†[L](â)|α⟩/π` at `α = q + ip`.
    pub fn eval(&self, q: f64, p: f64) -> (f64, f64) {
        let v = coherent_state(self.cutoff, C64::new(q, p));
        let mut acc = ZERO;
        for (i, vi) in v.iter().enumerate() {
            if vi.norm_sqr() < 1e-300 {
                continue;
            }
            let mut row = ZERO;
            for (j, w) in self.op.row(i) {
                row += w * v[j];
            }
            acc += vi.conj() * row;
        }
        (acc.re / PI, acc.im / PI)
    }
}

/// Sampled semiclassical field with the model that produced it.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: PhaseGrid,
    pub dq: Array2<f64>,
    pub dp: Array2<f64>,
    pub model: ClassicalModel,
}

impl VectorField {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# field: classical\n# grid: {}\nq,p,dq,dp\n", grid_json(&self.grid));
        for i in 0..self.grid.nq {
            for j in 0..self.grid.np {
                out.push_str(&format!(
                    "{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    self.grid.q(i),
                    self.grid.p(j),
                    self.dq[[i, j]],
                    self.dp[[i, j]]
                ));
            }
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        serde_json::json!({ "field": "classical", "grid": self.grid, "working_cutoff": self.model.cutoff }).to_string()
    }
}

/// Semiclassical field of `scheme` on `grid`, with `⟨q⟩ = Re α`.
pub fn classical_field(scheme: &NLREScheme, grid: &PhaseGrid) -> Result<VectorField> {
    grid.validate()?;
    let model = ClassicalModel::new(scheme, grid.max_radius())?;
    let both: Vec<(f64, f64)> = (0..grid.nq * grid.np)
        .into_par_iter()
        .map(|idx| model.eval(grid.q(idx / grid.np), grid.p(idx % grid.np)))
        .collect();
    let dq = Array2::from_shape_fn((grid.nq, grid.np), |(i, j)| both[i * grid.np + j].0);
    let dp = Array2::from_shape_fn((grid.nq, grid.np), |(i, j)| both[i * grid.np + j].1);
    Ok(VectorField { grid: *grid, dq, dp, model })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Stable,
    Saddle,
    Unstable,
    /// A Jacobian eigenvalue with vanishing real part.
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub q: f64,
    pub p: f64,
    pub class: PointClass,
    /// Real parts of the Jacobian eigenvalues, ascending.
    pub growth: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoints {
    pub points: Vec<CriticalPoint>,
    /// Seeds whose Newton iteration did not converge inside the grid.
    pub dropped_seeds: usize,
}

impl CriticalPoints {
    pub fn count(&self, class: PointClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("critical points serialize")
    }
}

/// Relative size below which a Jacobian real part counts as zero.
const BORDERLINE: f64 = 1e-6;

/// Zeros of the field by Newton iteration from every cell where both
/// components change sign, classified by the finite-difference Jacobian.
/// Points closer than twice the grid spacing are merged.
pub fn find_critical_points(field: &VectorField) -> CriticalPoints {
    let g = &field.grid;
    let (sq, sp) = g.spacing();
    let h = sq.min(sp) / 10.0;
    let model = &field.model;
    let changes = |a: &Array2<f64>, i: usize, j: usize| {
        let c = [a[[i, j]], a[[i + 1, j]], a[[i, j + 1]], a[[i + 1, j + 1]]];
        c.iter().any(|&x| x <= 0.0) && c.iter().any(|&x| x >= 0.0)
    };
    let seeds: Vec<(f64, f64)> = (0..g.nq - 1)
        .flat_map(|i| (0..g.np - 1).map(move |j| (i, j)))
        .filter(|&(i, j)| changes(&field.dq, i, j) && changes(&field.dp, i, j))
        .map(|(i, j)| (0.5 * (g.q(i) + g.q(i + 1)), 0.5 * (g.p(j) + g.p(j + 1))))
        .collect();
    let scale = field.dq.iter().chain(field.dp.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let jacobian = |q: f64, p: f64| {
        let (a1, b1) = model.eval(q + h, p);
        let (a0, b0) = model.eval(q - h, p);
        let (a3, b3) = model.eval(q, p + h);
        let (a2, b2) = model.eval(q, p - h);
        [[(a1 - a0) / (2.0 * h), (a3 - a2) / (2.0 * h)], [(b1 - b0) / (2.0 * h), (b3 - b2) / (2.0 * h)]]
    };
    let results: Vec<Option<(f64, f64)>> = seeds
        .par_iter()
        .map(|&(q0, p0)| {
            let (mut q, mut p) = (q0, p0);
            for _ in 0..80 {
                let (fq, fp) = model.eval(q, p);
                let j = jacobian(q, p);
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det == 0.0 || !det.is_finite() {
                    return None;
                }
                let dq = (j[1][1] * fq - j[0][1] * fp) / det;
                let dp = (-j[1][0] * fq + j[0][0] * fp) / det;
                q -= dq;
                p -= dp;
                if !g.contains(q, p) {
                    return None;
                }
                if dq.hypot(dp) < 1e-10 * (1.0 + q.hypot(p)) {
                    let (fq, fp) = model.eval(q, p);
                    return (fq.hypot(fp) < 1e-8 * scale).then_some((q, p));
                }
            }
            None
        })
        .collect();
    let radius = 2.0 * sq.max(sp);
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut dropped = 0;
    for r in results {
        let Some((q, p)) = r else {
            dropped += 1;
            continue;
        };
        if points.iter().any(|c| (c.q - q).hypot(c.p - p) < radius) {
            continue;
        }
        let (class, growth) = classify(jacobian(q, p));
        points.push(CriticalPoint { q, p, class, growth });
    }
    CriticalPoints { points, dropped_seeds: dropped }
}

fn classify(j: [[f64; 2]; 2]) -> (PointClass, [f64; 2]) {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    let (re, mag) = if disc >= 0.0 {
        let s = disc.sqrt();
        ([(tr - s) / 2.0, (tr + s) / 2.0], ((tr.abs() + s) / 2.0))
    } else {
        ([tr / 2.0, tr / 2.0], det.abs().sqrt())
    };
    let tol = BORDERLINE * mag;
    let class = if mag == 0.0 || re.iter().any(|x| x.abs() <= tol) {
        PointClass::Unclassified
    } else if re[1] < 0.0 {
        PointClass::Stable
    } else if re[0] > 0.0 {
        PointClass::Unstable
    } else {
        PointClass::Saddle
    };
    (class, re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darkstate::{certified_cutoff, solve_recurrence};
    use crate::fock::{fock_state, normalize};
    use crate::rabi::RabiProfileSpec;

    fn pure(v: &crate::linalg::Vector) -> DensityOperator {
        DensityOperator::pure(v).unwrap()
    }

    #[test]
    fn wigner_reference_values() {
        let n = 20;
        let vac = pure(&fock_state(n, 0));
        assert!((wigner_at(vac.mat(), 0.0, 0.0) - 1.0 / PI).abs() < 1e-14);
        // Vacuum Gaussian e^{−q²−p²}/π.
        assert!((wigner_at(vac.mat(), 0.7, -0.4) - (-(0.49 + 0.16f64)).exp() / PI).abs() < 1e-13);
        let one = pure(&fock_state(n, 1));
        assert!((wigner_at(one.mat(), 0.0, 0.0) + 1.0 / PI).abs() < 1e-14);
        let a = C64::new(2.0, 0.0);
        let odd = normalize(&(coherent_state(n, a) - coherent_state(n, -a)));
        assert!(wigner_at(pure(&odd).mat(), 0.0, 0.0) < -0.3);
    }

    #[test]
    fn wigner_integrates_to_one() {
        let n = 24;
        let a = C64::new(1.5, 0.5);
        let cat = normalize(&(coherent_state(n, a) + coherent_state(n, -a)));
        let grid = PhaseGrid::for_cutoff(n, 121).unwrap();
        for rho in [pure(&cat), pure(&fock_state(n, 3))] {
            let w = wigner(&rho, &grid).unwrap();
            assert!((w.integral() - 1.0).abs() < 1e-3, "{}", w.integral());
            let q = husimi(&rho, &grid).unwrap();
            assert!((q.integral() - 1.0).abs() < 1e-3);
        }
        let small = PhaseGrid::new((-2.0, 2.0), (-2.0, 2.0), 11, 11).unwrap();
        assert!(matches!(wigner(&pure(&cat), &small), Err(Error::Truncation(_))));
    }

    #[test]
    fn dark_state_wigner_has_rotational_symmetry() {
        for (r, l) in [(0usize, 3usize), (1, 2), (2, 2)] {
            let base = NLREScheme::linear(r, l, 9.0, 12.0, 1.0, 1.0, 1.0).unwrap();
            let n = certified_cutoff(&base, 8, 200, 1e-14).unwrap();
            let d = base.d();
            for st in solve_recurrence(&base, FockSpace::new(n).unwrap()).unwrap() {
                let rho = pure(&st.xi);
                for (q, p) in [(1.3, 0.4), (-2.2, 3.1), (0.5, -4.0)] {
                    let w0 = wigner_at(rho.mat(), q, p);
                    let th = 2.0 * PI / d as f64;
                    let (qr, pr) = (q * th.cos() - p * th.sin(), q * th.sin() + p * th.cos());
                    assert!((wigner_at(rho.mat(), qr, pr) - w0).abs() < 1e-6, "({r},{l}) mu {}", st.mu);
                }
            }
        }
    }

    #[test]
    fn damped_oscillator_field_is_radial() {
        let s = NLREScheme::new(
            0,
            1,
            RabiProfileSpec::Constant { value: 0.0 },
            RabiProfileSpec::Ladder { order: 1, scale: 1.0 },
            1.0,
        )
        .unwrap();
        let grid = PhaseGrid::new((-3.0, 3.0), (-3.0, 3.0), 13, 13).unwrap();
        let field = classical_field(&s, &grid).unwrap();
        // D†[â](â) = −â/2.
        for (q, p) in [(1.0, 0.5), (-2.0, 1.5)] {
            let (fq, fp) = field.model.eval(q, p);
            assert!((fq + q / (2.0 * PI)).abs() < 1e-12 && (fp + p / (2.0 * PI)).abs() < 1e-12);
        }
        let cps = find_critical_points(&field);
        assert_eq!(cps.points.len(), 1);
        let c = cps.points[0];
        assert_eq!(c.class, PointClass::Stable);
        assert!(c.q.abs() < 1e-9 && c.p.abs() < 1e-9);
    }

    #[test]
    fn standard_cat_field_matches_analytic_form() {
        // D†[â² − α²](â) = â†(α² − â²), so the coherent expectation is ᾱ(α₀² − α²).
        let s = NLREScheme::standard_cat(2, 2.0, 1.0).unwrap();
        let grid = PhaseGrid::new((-4.0, 4.0), (-4.0, 4.0), 41, 41).unwrap();
        let field = classical_field(&s, &grid).unwrap();
        for (q, p) in [(0.3, 0.2), (2.5, -1.0), (-3.0, 3.5)] {
            let al = C64::new(q, p);
            let want = al.conj() * (C64::new(4.0, 0.0) - al * al) / PI;
            let (fq, fp) = field.model.eval(q, p);
            // K carries a global sign relative to â² − α², which the dissipator ignores.
            assert!((fq - want.re).abs() < 1e-9 * (1.0 + want.norm()), "{fq} vs {}", want.re);
            assert!((fp - want.im).abs() < 1e-9 * (1.0 + want.norm()));
        }
        let cps = find_critical_points(&field);
        let stable: Vec<_> = cps.points.iter().filter(|c| c.class == PointClass::Stable).collect();
        assert_eq!(stable.len(), 2);
        for c in stable {
            assert!((c.q.abs() - 2.0).abs() < 1e-8 && c.p.abs() < 1e-8);
        }
        let origin = cps.points.iter().find(|c| c.q.hypot(c.p) < 1e-8).expect("origin");
        assert_eq!(origin.class, PointClass::Saddle);
    }

    #[test]
    fn classical_field_is_equivariant() {
        let mut s = NLREScheme::linear(1, 2, 9.0, 12.0, 1.0, 1.0, 1.0).unwrap();
        let grid = PhaseGrid::new((-5.0, 5.0), (-5.0, 5.0), 5, 5).unwrap();
        let base = ClassicalModel::new(&s, grid.max_radius()).unwrap();
        let phi = 0.9;
        s.phase_f += phi;
        let rotated = ClassicalModel::new(&s, grid.max_radius()).unwrap();
        let th = phi / s.d() as f64;
        let rot = C64::from_polar(1.0, th);
        for (q, p) in [(1.0, 2.0), (-2.5, 0.7), (3.0, -1.0)] {
            let al = C64::new(q, p);
            let back = al / rot;
            let (a, b) = base.eval(back.re, back.im);
            let want = rot * C64::new(a, b);
            let (c, d) = rotated.eval(q, p);
            assert!((C64::new(c, d) - want).norm() < 1e-9 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn stable_points_count_d() {
        for (r, l) in fig1_cases() {
            let s = NLREScheme::linear(r, l, 9.0, 12.0, 1.0, 1.0, 1.0).unwrap();
            let grid = PhaseGrid::for_cutoff(30, 121).unwrap();
            let field = classical_field(&s, &grid).unwrap();
            let cps = find_critical_points(&field);
            assert_eq!(cps.count(PointClass::Stable), s.d(), "({r},{l}): {:?}", cps.points);
        }
    }

    fn fig1_cases() -> [(usize, usize); 4] {
        [(0, 2), (1, 2), (2, 2), (1, 3)]
    }

    #[test]
    fn exports_carry_headers() {
        let grid = PhaseGrid::new((-4.0, 4.0), (-4.0, 4.0), 5, 5).unwrap();
        let rho = pure(&fock_state(2, 0));
        let w = wigner(&rho, &grid).unwrap();
        let csv = w.to_csv();
        assert!(csv.starts_with("# field: wigner"));
        assert!(csv.lines().any(|l| l == "q,p,value"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 26);
        let meta: serde_json::Value = serde_json::from_str(&w.metadata_json()).unwrap();
        assert_eq!(meta["grid"]["nq"], 5);
    }
}
