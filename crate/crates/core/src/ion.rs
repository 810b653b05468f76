//! Trapped-ion realization: sideband Rabi frequencies, photon recoil and the
//! spin⊗motion stabilization scenario.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::darkstate::{certified_cutoff, solve_recurrence, BosonDistribution};
use crate::dynamics::{evolve_with, uniform_times, EvolveOptions, NoiseKind, Observable, RateFit, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::fock::{
    displacement_element, fock_state, lowering, number, position_transform, sigma_minus, sigma_plus, ComplexOperator,
    DensityOperator, FockSpace, SpaceTag,
};
use crate::linalg::{self, dagger, kron, Mat, Vector, C64};
use crate::liouvillian::{build_k, LindbladModel, SuperTerm};
use crate::rabi::{stabilizing_crossing, NLREScheme, RabiProfileSpec};
use crate::special::{bessel_j, ln_factorial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RabiMode {
    Exact,
    Bessel,
}

/// Sideband Rabi frequency relative to the bare coupling.
pub fn ion_rabi(k: usize, k_sb: i64, eta: f64, mode: RabiMode) -> f64 {
    let o = k_sb.unsigned_abs();
    match mode {
        RabiMode::Exact => displacement_element(k, o as i64, eta).unwrap_or(0.0),
        RabiMode::Bessel => bessel_j(o as u32, 2.0 * eta * (k as f64 + (o as f64 + 1.0) / 2.0).sqrt()),
    }
}

/// Parameters of the ion platform. Frequencies are angular (rad/s), times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonConfig {
    pub omega_m: f64,
    pub eta_r: f64,
    pub eta_l: f64,
    pub r: usize,
    pub l: usize,
    /// Red-sideband coupling `Ω_l`.
    pub omega_l: f64,
    /// `R = Ω_r/Ω_l`.
    pub ratio: f64,
    pub gamma: f64,
    pub kappa_phi: f64,
    pub kappa_h: f64,
    pub kappa_s: f64,
    pub recoil: bool,
    pub cutoff: usize,
    #[serde(default = "default_rabi_mode")]
    pub rabi_mode: RabiMode,
    /// Simulated duration in s.
    pub horizon: f64,
    /// When false, `omega_m` and `omega_l` are read in Hz. Decay rates are
    /// always in 1/s.
    #[serde(default = "default_true")]
    pub angular: bool,
}

fn default_true() -> bool {
    true
}

fn default_rabi_mode() -> RabiMode {
    RabiMode::Exact
}

impl IonConfig {
    /// Beryllium parameters of the four-cat stabilization example.
    pub fn beryllium(eta: f64) -> IonConfig {
        let tau = 2.0 * std::f64::consts::PI;
        IonConfig {
            omega_m: tau * 2.5e6,
            eta_r: eta,
            eta_l: eta,
            r: 0,
            l: 4,
            omega_l: tau * 50e3,
            ratio: 0.2,
            gamma: 1.0 / 7e-6,
            kappa_phi: 1.0 / 66e-3,
            kappa_h: 1.0 / 10.0,
            kappa_s: 1.0 / 1.12e-3,
            recoil: true,
            cutoff: 48,
            rabi_mode: RabiMode::Exact,
            horizon: 3e-3,
            angular: true,
        }
    }

    /// Copy with `omega_m` and `omega_l` in rad/s.
    pub fn to_angular(&self) -> IonConfig {
        if self.angular {
            return self.clone();
        }
        let tau = 2.0 * std::f64::consts::PI;
        IonConfig { omega_m: self.omega_m * tau, omega_l: self.omega_l * tau, angular: true, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_r", self.eta_r), ("eta_l", self.eta_l)] {
            if !(v > 0.0 && v < 1.0) {
                return invalid(format!("{name} = {v} outside (0, 1)"));
            }
        }
        for (name, v) in [
            ("omega_l", self.omega_l),
            ("ratio", self.ratio),
            ("gamma", self.gamma),
            ("kappa_phi", self.kappa_phi),
            ("kappa_h", self.kappa_h),
            ("kappa_s", self.kappa_s),
            ("omega_m", self.omega_m),
            ("horizon", self.horizon),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return invalid(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        if self.r == self.l {
            return invalid("sideband orders r and l must differ");
        }
        if self.gamma == 0.0 {
            return invalid("engineered decay gamma must be positive");
        }
        FockSpace::new(self.cutoff)?;
        Ok(())
    }

    /// `κ_eff = 4Ω_l²/γ` from adiabatic elimination of the spin.
    pub fn kappa_eff(&self) -> f64 {
        let omega_l = self.to_angular().omega_l;
        4.0 * omega_l * omega_l / self.gamma
    }
}

/// Single-mode scheme with `f̃ = R·(r-th sideband)` and `g̃ = l-th sideband`.
pub fn build_ion_scheme(config: &IonConfig) -> Result<NLREScheme> {
    let config = &config.to_angular();
    config.validate()?;
    let profile = |order: usize, eta: f64, strength: f64| match config.rabi_mode {
        RabiMode::Exact => RabiProfileSpec::IonLaguerre { order: order as i64, eta, strength },
        RabiMode::Bessel => RabiProfileSpec::IonBessel { order: order as i64, eta, strength },
    };
    let scheme = NLREScheme::new(
        config.r,
        config.l,
        profile(config.r, config.eta_r, config.ratio),
        profile(config.l, config.eta_l, 1.0),
        config.kappa_eff(),
    )?;
    stabilizing_crossing(&scheme, 0, config.cutoff.max(200))?;
    Ok(scheme)
}

/// `3[sin u/u + cos u/u² − sin u/u³]`, the Fourier transform of the dipole
/// emission pattern `¾(1 + x²)` on `[−1, 1]`.
pub fn recoil_kernel(u: f64) -> f64 {
    let a = u.abs();
    if a < 0.1 {
        return recoil_kernel_series(a);
    }
    3.0 * (a.sin() / a + a.cos() / (a * a) - a.sin() / (a * a * a))
}

/// `Σ_k (−1)ᵏ u²ᵏ/(2k)! · 3(2k+2)/((2k+1)(2k+3))`.
pub fn recoil_kernel_series(u: f64) -> f64 {
    let u2 = u * u;
    let mut pow = 1.0;
    let mut sum = 0.0;
    for k in 0..10 {
        let kf = k as f64;
        sum += pow * 3.0 * (2.0 * kf + 2.0) / ((2.0 * kf + 1.0) * (2.0 * kf + 3.0));
        pow *= -u2 / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
    }
    sum
}

/// Position grid `±(√(2N) + 4)` at 16 points per unit.
pub fn recoil_grid(cutoff: usize) -> Vec<f64> {
    let half = (2.0 * cutoff as f64).sqrt() + 4.0;
    let pts = (2.0 * half * 16.0).ceil() as usize + 1;
    (0..pts).map(|i| -half + 2.0 * half * i as f64 / (pts - 1) as f64).collect()
}

/// Spontaneous emission `σ₋` dressed by the photon recoil along the trap axis:
/// `γ σ₋ [∫ ½W e^{iηx√2q̂} ρ e^{−iηx√2q̂}] σ₊ − (γ/2){σ₊σ₋, ρ}`.
#[derive(Debug, Clone)]
pub struct RecoilTerm {
    pub n: usize,
    pub gamma: f64,
    pub eta: f64,
    /// Column-stacked map from `ρ_ee` to the `ρ_gg` feed.
    pub block: Array2<f64>,
}

impl RecoilTerm {
    pub fn new(eta: f64, gamma: f64, space: FockSpace, grid: &[f64]) -> Result<RecoilTerm> {
        let n = space.cutoff();
        if grid.len() < 3 {
            return invalid("recoil grid needs at least three points");
        }
        let half = (2.0 * n as f64).sqrt() + 4.0;
        let dq = grid[1] - grid[0];
        let uniform = grid.windows(2).all(|w| ((w[1] - w[0]) - dq).abs() < 1e-9 * dq);
        if !uniform || grid[0] > -half + 1e-9 || grid[grid.len() - 1] < half - 1e-9 || dq > 1.0 / 8.0 + 1e-12 {
            return Err(Error::Convergence(format!(
                "recoil grid must be uniform, span ±{half:.2} and have at least 8 points per unit"
            )));
        }
        let t = linalg::real_part(&position_transform(space, grid)?).mapv(|v| v * dq.sqrt());
        let ortho = t.t().dot(&t) - Array2::<f64>::eye(n);
        let defect = ortho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if defect > 1e-10 {
            return Err(Error::Convergence(format!("position transform orthonormality defect {defect:.3e}")));
        }
        let g = grid.len();
        let m = Array2::from_shape_fn((g, g), |(p, q)| 0.5 * recoil_kernel(eta * 2f64.sqrt() * (grid[p] - grid[q])));
        // U[p, a + n i] = T[p, a] T[p, i]; W = Uᵀ M U.
        let u = Array2::from_shape_fn((g, n * n), |(p, ai)| t[[p, ai % n]] * t[[p, ai / n]]);
        let w = u.t().dot(&m.dot(&u));
        // out[a, b] = Σ_ij W[(a, i), (b, j)] ρ[i, j], stored column-stacked.
        let block = Array2::from_shape_fn((n * n, n * n), |(ab, ij)| {
            let (a, b) = (ab % n, ab / n);
            let (i, j) = (ij % n, ij / n);
            w[[a + n * i, b + n * j]]
        });
        Ok(RecoilTerm { n, gamma, eta, block })
    }

    /// Jump part `ρ_ee ↦ ρ_gg` on the motional block.
    pub fn feed(&self, rho_ee: &Mat) -> Mat {
        let n = self.n;
        let v = linalg::vectorize(rho_ee);
        let re = self.block.dot(&v.mapv(|z| z.re));
        let im = self.block.dot(&v.mapv(|z| z.im));
        let out = Vector::from_shape_fn(n * n, |i| C64::new(re[i], im[i]) * self.gamma);
        linalg::unvectorize(&out, n)
    }
}

impl SuperTerm for RecoilTerm {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn apply(&self, rho: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros((2 * n, 2 * n));
        let ee = rho.slice(ndarray::s![n.., n..]).to_owned();
        out.slice_mut(ndarray::s![..n, ..n]).assign(&self.feed(&ee));
        let h = C64::new(-0.5 * self.gamma, 0.0);
        // −(γ/2){P_e, ρ} with P_e the excited-spin projector.
        for i in 0..2 * n {
            for j in 0..2 * n {
                let c = (i >= n) as u8 + (j >= n) as u8;
                if c > 0 {
                    out[[i, j]] += h * f64::from(c) * rho[[i, j]];
                }
            }
        }
        out
    }
}

/// Full column-stacked recoil superoperator on spin⊗motion.
pub fn recoil_superoperator(eta: f64, gamma: f64, space: FockSpace, grid: &[f64]) -> Result<ComplexOperator> {
    if space.cutoff() > 24 {
        return invalid("full recoil superoperator is limited to cutoff <= 24; use RecoilTerm");
    }
    let term = RecoilTerm::new(eta, gamma, space, grid)?;
    Ok(ComplexOperator { mat: term.to_matrix(), tag: SpaceTag::Vectorized(2 * space.cutoff()), hermitian: false })
}

/// Choi matrix of the recoil jump map `ρ_ee ↦ ρ_gg`.
pub fn recoil_choi(term: &RecoilTerm) -> Mat {
    let n = term.n;
    let mut choi = Mat::zeros((n * n, n * n));
    for i in 0..n {
        for j in 0..n {
            let mut e = Mat::zeros((n, n));
            e[[i, j]] = C64::new(1.0, 0.0);
            let img = term.feed(&e);
            for a in 0..n {
                for b in 0..n {
                    choi[[i * n + a, j * n + b]] = img[[a, b]];
                }
            }
        }
    }
    choi
}

/// Initial motional state of the ion scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IonInitial {
    /// Four-component cat (Poisson on `k ≡ 0 mod d`) with the mean of `|Ξ₀⟩`.
    FourCatMatched,
    Fock {
        mu: usize,
    },
}

#[derive(Debug, Clone)]
pub struct IonOutcome {
    pub trajectory: Trajectory,
    /// Decay of the stabilized fidelity after its peak.
    pub fit: RateFit,
    pub peak_fidelity: f64,
    pub peak_time: f64,
    pub cutoff: usize,
    pub initial_overlap: f64,
}

/// Parity-class coherent state `∝ Σ_{k≡mu (d)} αᵏ/√k! |k⟩` with real α.
pub fn class_cat(n: usize, d: usize, mu: usize, alpha2: f64) -> Vector {
    let logs: Vec<f64> = (0..n)
        .map(|k| if k % d == mu { 0.5 * (k as f64 * alpha2.ln() - ln_factorial(k)) } else { f64::NEG_INFINITY })
        .collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    crate::fock::normalize(&Vector::from_iter(logs.iter().map(|&l| C64::new((l - peak).exp(), 0.0))))
}

/// Class cat whose mean photon number equals `target_mean`, by bisection in α².
pub fn matched_class_cat(n: usize, d: usize, mu: usize, target_mean: f64) -> Result<Vector> {
    let mean = |a2: f64| BosonDistribution::from_amplitudes(&class_cat(n, d, mu, a2)).mean();
    let (mut lo, mut hi) = (1e-6, n as f64);
    if !(mean(lo) <= target_mean && mean(hi) >= target_mean) {
        return invalid(format!("mean {target_mean} not reachable in class {mu} of Z_{d}"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(class_cat(n, d, mu, 0.5 * (lo + hi)))
}

/// Spin⊗motion model: `H = Ω_l(σ₊⊗K + σ₋⊗K†)`, engineered decay (recoil
/// dressed if enabled), motional dephasing, heating/cooling, spin dephasing.
pub fn ion_full_model(config: &IonConfig, scheme: &NLREScheme, noise: bool) -> Result<LindbladModel> {
    let config = &config.to_angular();
    let n = config.cutoff;
    let space = FockSpace::new(n)?;
    let tag = SpaceTag::SpinMode(n);
    let k = build_k(scheme, space).mat;
    let h = (kron(&sigma_plus(), &k) + kron(&sigma_minus(), &dagger(&k))).mapv(|z| z * config.omega_l);
    let mut model =
        LindbladModel::new(tag).with_hamiltonian(ComplexOperator::hermitian(linalg::hermitize(&h), tag)?)?;
    if config.recoil {
        model.add_extra(Arc::new(RecoilTerm::new(config.eta_l, config.gamma, space, &recoil_grid(n))?))?;
    } else {
        model.add_jump(ComplexOperator::new(kron(&sigma_minus(), &linalg::eye(n)), tag)?, config.gamma)?;
    }
    if noise {
        add_ion_noise(&mut model, config)?;
    }
    Ok(model)
}

fn add_ion_noise(model: &mut LindbladModel, config: &IonConfig) -> Result<()> {
    let tag = model.hamiltonian.tag;
    for (kind, rate) in [
        (NoiseKind::Dephasing, config.kappa_phi),
        (NoiseKind::Loss, config.kappa_h),
        (NoiseKind::Gain, config.kappa_h),
        (NoiseKind::SpinDephasing, config.kappa_s),
    ] {
        if rate > 0.0 {
            let (op, r) = crate::dynamics::noise_channel(kind, rate, tag)?;
            model.add_jump(op, r)?;
        }
    }
    Ok(())
}

fn spin_mode_projector(psi: &Vector) -> Mat {
    kron(&linalg::eye(2), &linalg::outer(psi, psi))
}

/// Four-cat stabilization on the full spin⊗motion model. Fidelity is
/// `⟨Ξ₀|Tr_spin ρ|Ξ₀⟩`; the excited-spin population is tracked separately.
pub fn run_ion_scenario(config: &IonConfig, initial: IonInitial, samples: usize) -> Result<IonOutcome> {
    let config = &config.to_angular();
    let scheme = build_ion_scheme(config)?;
    let n = config.cutoff;
    let certified = certified_cutoff(&scheme, 8, n, 1e-9)?;
    if certified > n {
        return Err(Error::Truncation(format!("cutoff {n} below certified {certified}")));
    }
    let space = FockSpace::new(n)?;
    let states = solve_recurrence(&scheme, space)?;
    let xi0 = states[0].xi.clone();
    let d = scheme.d();
    let motion = match initial {
        IonInitial::FourCatMatched => matched_class_cat(n, d, 0, states[0].distribution().mean())?,
        IonInitial::Fock { mu } => fock_state(n, mu),
    };
    let initial_overlap = linalg::inner(&xi0, &motion).norm_sqr();
    let psi = spin_mode_state(0, &motion);
    let model = ion_full_model(config, &scheme, true)?;
    let excited = kron(&Mat::from_diag(&Vector::from(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)])), &linalg::eye(n));
    let mut opts = EvolveOptions::default()
        .observe("fidelity", Observable::Operator(spin_mode_projector(&xi0)))
        .observe("spin_excited", Observable::Operator(excited))
        .observe("n", Observable::Operator(kron(&linalg::eye(2), &number(n))));
    opts.population_alarm = Some(1e-6);
    let times = uniform_times(config.horizon, samples);
    let traj = evolve_with(&model, &DensityOperator::pure(&psi)?, &times, &opts)?;
    let fid = traj.get("fidelity").unwrap();
    let (ip, &peak) = fid.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let peak_time = times[ip];
    let fit = RateFit::fit(&times, fid, [peak_time.max(times[1]), config.horizon])
        .or_else(|_| RateFit::fit(&times, fid, [times[times.len() / 2], config.horizon]))?;
    Ok(IonOutcome { trajectory: traj, fit, peak_fidelity: peak, peak_time, cutoff: n, initial_overlap })
}

/// Decay of the matched four-cat under the same noise without stabilization
/// (no drive, no engineered decay).
pub fn unstabilized_cat_decay(config: &IonConfig, samples: usize) -> Result<(Trajectory, RateFit)> {
    let config = &config.to_angular();
    let scheme = build_ion_scheme(config)?;
    let n = config.cutoff;
    let space = FockSpace::new(n)?;
    let states = solve_recurrence(&scheme, space)?;
    let cat = matched_class_cat(n, scheme.d(), 0, states[0].distribution().mean())?;
    let tag = SpaceTag::SpinMode(n);
    let mut model = LindbladModel::new(tag);
    add_ion_noise(&mut model, config)?;
    let psi = spin_mode_state(0, &cat);
    let opts = EvolveOptions::default().observe("fidelity", Observable::Operator(spin_mode_projector(&cat)));
    let times = uniform_times(config.horizon, samples);
    let traj = evolve_with(&model, &DensityOperator::pure(&psi)?, &times, &opts)?;
    let fit = RateFit::fit(&times, traj.get("fidelity").unwrap(), [0.0, config.horizon])?;
    Ok((traj, fit))
}

/// Effective single-mode model `κ_eff D[K]` with the same motional noise.
pub fn ion_effective_model(config: &IonConfig, scheme: &NLREScheme) -> Result<LindbladModel> {
    let config = &config.to_angular();
    let space = FockSpace::new(config.cutoff)?;
    let mut model = LindbladModel::from_scheme(scheme, space);
    let tag = SpaceTag::Mode(config.cutoff);
    for (op, rate) in [(number(config.cutoff), config.kappa_phi), (lowering(config.cutoff), config.kappa_h)] {
        if rate > 0.0 {
            model.add_jump(ComplexOperator::new(op, tag)?, rate)?;
        }
    }
    if config.kappa_h > 0.0 {
        model.add_jump(ComplexOperator::new(dagger(&lowering(config.cutoff)), tag)?, config.kappa_h)?;
    }
    Ok(model)
}

/// `|s⟩ ⊗ |ψ⟩` with spin index 0 = ground.
pub fn spin_mode_state(spin: usize, motion: &Vector) -> Vector {
    let n = motion.len();
    let mut out = Vector::zeros(2 * n);
    out.slice_mut(ndarray::s![spin * n..(spin + 1) * n]).assign(motion);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::vectorize_dissipator;
    use crate::special::ln_gamma;

    fn laguerre_series(k: usize, r: usize, x: f64) -> f64 {
        (0..=k)
            .map(|j| {
                let sgn = if j % 2 == 0 { 1.0 } else { -1.0 };
                let lc = ln_gamma((k + r + 1) as f64)
                    - ln_gamma((k - j + 1) as f64)
                    - ln_gamma((r + j + 1) as f64)
                    - ln_gamma((j + 1) as f64);
                sgn * (lc + j as f64 * x.ln()).exp()
            })
            .sum()
    }

    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        let left = (m - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + m)) + f(m));
        let right = (b - m) / 6.0 * (f(m) + 4.0 * f(0.5 * (m + b)) + f(b));
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        simpson(f, a, m, tol / 2.0, depth - 1) + simpson(f, m, b, tol / 2.0, depth - 1)
    }

    #[test]
    fn rabi_examples() {
        assert!((ion_rabi(0, 0, 0.0, RabiMode::Exact) - 1.0).abs() < 1e-15);
        let (k, r, eta) = (10usize, 2usize, 0.3f64);
        let oracle = (0.5 * (ln_gamma(k as f64 + 1.0) - ln_gamma((k + r) as f64 + 1.0))).exp()
            * (-eta * eta / 2.0).exp()
            * eta.powi(r as i32)
            * laguerre_series(k, r, eta * eta);
        assert!((ion_rabi(k, 2, eta, RabiMode::Exact) - oracle).abs() < 1e-12);
        assert_eq!(ion_rabi(k, -2, eta, RabiMode::Exact), ion_rabi(k, 2, eta, RabiMode::Exact));
        for k in 0..=60 {
            for o in 0..=4 {
                for eta in [0.1, 0.3, 0.5] {
                    let d = ion_rabi(k, o, eta, RabiMode::Exact) - ion_rabi(k, o, eta, RabiMode::Bessel);
                    assert!(d.abs() < 0.01, "k={k} o={o} eta={eta}: {d}");
                }
            }
        }
        for k in 0..=200 {
            let v = ion_rabi(k, 3, 0.95, RabiMode::Exact);
            assert!(v.is_finite() && v.abs() <= 1.0);
        }
    }

    #[test]
    fn ion_scheme_examples() {
        let cfg = IonConfig::beryllium(0.3);
        let s = build_ion_scheme(&cfg).unwrap();
        let c = stabilizing_crossing(&s, 0, 200).unwrap();
        assert!(c.gain_switch);
        let states = solve_recurrence(&s, FockSpace::new(48).unwrap()).unwrap();
        assert_eq!(states.len(), 4);
        let mut zero = cfg.clone();
        zero.ratio = 0.0;
        assert!(build_ion_scheme(&zero).is_err());
        let mut last = f64::INFINITY;
        for ratio in [0.3, 0.2, 0.1] {
            let mut c = cfg.clone();
            c.ratio = ratio;
            let k = stabilizing_crossing(&build_ion_scheme(&c).unwrap(), 0, 200).unwrap().k_star;
            assert!(k < last);
            last = k;
        }
    }

    #[test]
    fn kernel_limits_and_quadrature() {
        assert_eq!(recoil_kernel(0.0), 2.0);
        for u in [0.05, 0.099, 0.1, 0.2] {
            assert!(
                (recoil_kernel_series(u) - 3.0 * (u.sin() / u + u.cos() / (u * u) - u.sin() / u.powi(3))).abs() < 1e-9
            );
        }
        let eta = 0.3;
        for (q1, q2) in [(0.3, -1.2), (2.5, 2.4), (-3.0, 4.1), (0.0, 0.7), (5.5, -5.5)] {
            let u = eta * 2f64.sqrt() * (q1 - q2);
            let integrand = |x: f64| 0.75 * (1.0 + x * x) * (u * x).cos();
            let quad = simpson(&integrand, -1.0, 1.0, 1e-13, 40);
            assert!((recoil_kernel(u) - quad).abs() < 1e-8, "{u}");
        }
    }

    #[test]
    fn recoil_generator_properties() {
        let n = 20;
        let space = FockSpace::new(n).unwrap();
        let grid = recoil_grid(n);
        let term = RecoilTerm::new(0.3, 1.7, space, &grid).unwrap();
        // Kicks from the top levels leave the truncated space, so the state sits well inside it.
        let psi = crate::fock::normalize(&Vector::from_shape_fn(2 * n, |i| {
            if i % n > 5 {
                return C64::new(0.0, 0.0);
            }
            C64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos())
        }));
        let rho = linalg::outer(&psi, &psi);
        assert!(linalg::trace(&term.apply(&rho)).norm() < 1e-8);
        let (w, _) = linalg::eigh(&recoil_choi(&term)).unwrap();
        assert!(w.iter().all(|&v| v > -1e-8));
        let small = FockSpace::new(8).unwrap();
        let tiny = recoil_superoperator(1e-9, 1.7, small, &recoil_grid(8)).unwrap();
        let plain = vectorize_dissipator(&kron(&sigma_minus(), &linalg::eye(8))).unwrap().mapv(|z| z * 1.7);
        assert!(linalg::max_abs(&(tiny.mat - plain)) < 1e-8);
        assert!(RecoilTerm::new(0.3, 1.0, space, &[-1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn hz_config_converts() {
        let ang = IonConfig::beryllium(0.3);
        let tau = 2.0 * std::f64::consts::PI;
        let hz = IonConfig { omega_m: ang.omega_m / tau, omega_l: ang.omega_l / tau, angular: false, ..ang.clone() };
        assert!((hz.kappa_eff() / ang.kappa_eff() - 1.0).abs() < 1e-12);
        assert_eq!(build_ion_scheme(&hz).unwrap(), build_ion_scheme(&ang).unwrap());
    }

    #[test]
    fn noiseless_dark_state_holds() {
        let mut cfg = IonConfig::beryllium(0.3);
        cfg.cutoff = 24;
        cfg.recoil = false;
        let s = build_ion_scheme(&cfg).unwrap();
        let xi = solve_recurrence(&s, FockSpace::new(24).unwrap()).unwrap()[0].xi.clone();
        let model = ion_full_model(&cfg, &s, false).unwrap();
        let psi = spin_mode_state(0, &xi);
        let opts = EvolveOptions::default().observe("fidelity", Observable::Operator(spin_mode_projector(&xi)));
        let tr = evolve_with(&model, &DensityOperator::pure(&psi).unwrap(), &uniform_times(1e-3, 5), &opts).unwrap();
        assert!(tr.get("fidelity").unwrap().iter().all(|f| *f >= 1.0 - 1e-6));
    }

    #[test]
    fn adiabatic_elimination_matches_full_model() {
        let n = 28;
        let mut cfg = IonConfig::beryllium(0.3);
        cfg.cutoff = n;
        cfg.recoil = false;
        cfg.omega_l = cfg.gamma / 20.0;
        let s = build_ion_scheme(&cfg).unwrap();
        let full = ion_full_model(&cfg, &s, false).unwrap();
        let eff = LindbladModel::from_scheme(&s, FockSpace::new(n).unwrap());
        let horizon = 2.0 / cfg.kappa_eff();
        let times = uniform_times(horizon, 11);
        let o_full = EvolveOptions::default().observe("n", Observable::Operator(kron(&linalg::eye(2), &number(n))));
        let o_eff = EvolveOptions::default().observe("n", Observable::Operator(number(n)));
        let start = fock_state(n, 20);
        let a =
            evolve_with(&full, &DensityOperator::pure(&spin_mode_state(0, &start)).unwrap(), &times, &o_full).unwrap();
        let b = evolve_with(&eff, &DensityOperator::pure(&start).unwrap(), &times, &o_eff).unwrap();
        let (na, nb) = (a.get("n").unwrap(), b.get("n").unwrap());
        let scale = nb.iter().cloned().fold(0.0, f64::max);
        assert!(scale > 1.0);
        for (x, y) in na.iter().zip(nb) {
            assert!((x - y).abs() < 0.05 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn matched_cat_has_target_mean() {
        let c = matched_class_cat(40, 4, 0, 7.3).unwrap();
        assert!((BosonDistribution::from_amplitudes(&c).mean() - 7.3).abs() < 1e-9);
    }
}
