//! Voltage-biased ATS circuit-QED realization: Rabi profiles, resonance
//! planning in exact rational arithmetic, RWA validation by numerical time
//! averaging and the effective single-mode stabilization scenario.

use std::f64::consts::PI;

use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::darkstate::{certified_cutoff, solve_recurrence};
use crate::dynamics::{EvolveOptions, Observable, Propagator, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::fock::{displacement_element, displacement_matrix, fock_state, DensityOperator, FockSpace, SpaceTag};
use crate::linalg::{outer, Mat, C64};
use crate::liouvillian::LindbladModel;
use crate::rabi::{ats_strength, stabilizing_crossing, NLREScheme, RabiProfileSpec};

/// Circuit parameters. Frequencies are angular (rad/s) unless `angular` is
/// false, in which case they are read in Hz and converted on use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqedConfig {
    pub e_j: f64,
    pub omega_a: f64,
    pub omega_c: f64,
    pub phi_a: f64,
    pub phi_c: f64,
    pub eps_r: f64,
    pub eps_l: f64,
    /// Reservoir decay rate.
    pub gamma: f64,
    pub r: usize,
    pub l: usize,
    /// Bias frequency as coefficients of `(ω_a, ω_c)`; searched when absent.
    #[serde(default)]
    pub bias: Option<[f64; 2]>,
    /// Upper bound on `ω_V` (superconducting gap); 2e·0.1 mV/ħ when absent.
    #[serde(default)]
    pub gap_bound: Option<f64>,
    pub storage_cutoff: usize,
    #[serde(default = "default_reservoir_cutoff")]
    pub reservoir_cutoff: usize,
    #[serde(default = "default_true")]
    pub angular: bool,
}

fn default_gap_bound() -> f64 {
    // 2eV/ħ at V = 0.1 mV.
    2.0 * PI * 48.36e9
}

fn default_reservoir_cutoff() -> usize {
    3
}

fn default_true() -> bool {
    true
}

impl CqedConfig {
    /// The (0,4) four-cat configuration with `ω_V = 3.25ω_a − 3.25ω_c`.
    pub fn ats_example() -> CqedConfig {
        let tau = 2.0 * PI;
        CqedConfig {
            e_j: tau * 45e9,
            omega_a: tau * 7.9e9,
            omega_c: tau * 5.5e9,
            phi_a: 0.3,
            phi_c: 0.8,
            eps_r: 0.005,
            eps_l: 0.04,
            gamma: tau * 15e6,
            r: 0,
            l: 4,
            bias: Some([3.25, -3.25]),
            gap_bound: None,
            storage_cutoff: 28,
            reservoir_cutoff: 3,
            angular: true,
        }
    }

    /// Copy with every frequency converted to rad/s.
    pub fn to_angular(&self) -> CqedConfig {
        if self.angular {
            return self.clone();
        }
        let tau = 2.0 * PI;
        CqedConfig {
            e_j: self.e_j * tau,
            omega_a: self.omega_a * tau,
            omega_c: self.omega_c * tau,
            gamma: self.gamma * tau,
            gap_bound: self.gap_bound.map(|g| g * tau),
            angular: true,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("e_j", self.e_j), ("omega_a", self.omega_a), ("omega_c", self.omega_c), ("gamma", self.gamma)]
        {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} = {v} must be positive and finite"));
            }
        }
        for (name, v) in [("phi_a", self.phi_a), ("phi_c", self.phi_c)] {
            if !(v > 0.0 && v < 3.0) {
                return invalid(format!("{name} = {v} outside (0, 3)"));
            }
        }
        for (name, v) in [("eps_r", self.eps_r), ("eps_l", self.eps_l)] {
            if !(v >= 0.0 && v < 0.2) {
                return invalid(format!("{name} = {v} outside the small-angle range [0, 0.2)"));
            }
        }
        if self.r == self.l {
            return invalid("drive orders r and l must differ");
        }
        if self.reservoir_cutoff < 3 {
            return invalid("reservoir cutoff must be at least 3");
        }
        FockSpace::new(self.storage_cutoff)?;
        Ok(())
    }

    pub fn omega_r(&self) -> f64 {
        let c = self.to_angular();
        ats_strength(c.e_j, c.phi_c, c.eps_r)
    }

    pub fn omega_l(&self) -> f64 {
        let c = self.to_angular();
        ats_strength(c.e_j, c.phi_c, c.eps_l)
    }
}

/// Frequency as exact coefficients of `(ω_a, ω_c)`.
pub type LatticeFreq = (Rational64, Rational64);

fn lattice_value(f: LatticeFreq, omega_a: f64, omega_c: f64) -> f64 {
    let v = |q: Rational64| *q.numer() as f64 / *q.denom() as f64;
    v(f.0) * omega_a + v(f.1) * omega_c
}

/// One flux drive: its resonance target and the off-resonance certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivePlan {
    /// `(k_a⁺, k_c⁺)` with `ω_V + ω_p = k_a⁺ω_a + k_c⁺ω_c`.
    pub target: (i64, i64),
    pub freq: LatticeFreq,
    /// `(k_a⁻, k_c⁻)` with `ω_p − ω_V = ½(k_a⁻ω_a + k_c⁻ω_c)`; at least one odd.
    pub off_resonant: (i64, i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonancePlan {
    pub bias: LatticeFreq,
    pub drive_r: DrivePlan,
    pub drive_l: DrivePlan,
    /// Smallest `|ω_p − ω_V − (k_aω_a + k_cω_c)|` over the checked order box.
    pub min_detuning: f64,
}

impl ResonancePlan {
    pub fn omega_v(&self, omega_a: f64, omega_c: f64) -> f64 {
        lattice_value(self.bias, omega_a, omega_c)
    }

    pub fn drive_freqs(&self, omega_a: f64, omega_c: f64) -> (f64, f64) {
        (lattice_value(self.drive_r.freq, omega_a, omega_c), lattice_value(self.drive_l.freq, omega_a, omega_c))
    }

    /// Re-substitutes the plan into both resonance identities in exact arithmetic.
    pub fn verify(&self) -> bool {
        [&self.drive_r, &self.drive_l].iter().all(|p| {
            let sum = (self.bias.0 + p.freq.0, self.bias.1 + p.freq.1);
            let diff = (p.freq.0 - self.bias.0, p.freq.1 - self.bias.1);
            let two = Rational64::from_integer(2);
            sum == (Rational64::from_integer(p.target.0), Rational64::from_integer(p.target.1))
                && diff.0 * two == Rational64::from_integer(p.off_resonant.0)
                && diff.1 * two == Rational64::from_integer(p.off_resonant.1)
                && (p.off_resonant.0 % 2 != 0 || p.off_resonant.1 % 2 != 0)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceConstraints {
    /// Fixed bias; the lattice is searched when `None`.
    pub bias: Option<LatticeFreq>,
    /// Lattice spacing is `1/denominator` in each coefficient.
    pub denominator: i64,
    /// Largest coefficient magnitude searched.
    pub max_coefficient: i64,
    pub gap_bound: f64,
    /// Required detuning of every unwanted process in the order box.
    pub min_detuning: f64,
    /// Order box `|k_a| ≤ .0`, `|k_c| ≤ .1` for the detuning check.
    pub order_box: (i64, i64),
}

impl Default for ResonanceConstraints {
    fn default() -> ResonanceConstraints {
        ResonanceConstraints {
            bias: None,
            denominator: 4,
            max_coefficient: 8,
            gap_bound: default_gap_bound(),
            min_detuning: 0.0,
            order_box: (40, 4),
        }
    }
}

/// Resonance targets for a `(r, l)` scheme: `â^r ĉ` and `â†^l ĉ`, whose
/// conjugates `â†^r ĉ†` and `âˡ ĉ†` are the engineered processes.
pub fn resonance_targets(r: usize, l: usize) -> ((i64, i64), (i64, i64)) {
    ((-(r as i64), -1), (l as i64, -1))
}

fn drive_plan(bias: LatticeFreq, target: (i64, i64)) -> Option<DrivePlan> {
    let freq = (Rational64::from_integer(target.0) - bias.0, Rational64::from_integer(target.1) - bias.1);
    let two = Rational64::from_integer(2);
    let off = ((freq.0 - bias.0) * two, (freq.1 - bias.1) * two);
    if !off.0.is_integer() || !off.1.is_integer() {
        return None;
    }
    let off = (off.0.to_integer(), off.1.to_integer());
    if off.0 % 2 == 0 && off.1 % 2 == 0 {
        return None;
    }
    Some(DrivePlan { target, freq, off_resonant: off })
}

fn min_detuning(plans: [&DrivePlan; 2], omega_a: f64, omega_c: f64, order_box: (i64, i64)) -> f64 {
    let mut best = f64::INFINITY;
    for p in plans {
        let half = 0.5 * (p.off_resonant.0 as f64 * omega_a + p.off_resonant.1 as f64 * omega_c);
        for ka in -order_box.0..=order_box.0 {
            for kc in -order_box.1..=order_box.1 {
                best = best.min((half - ka as f64 * omega_a - kc as f64 * omega_c).abs());
            }
        }
    }
    best
}

/// Bias and drive frequencies making the `r` and `l` processes resonant while
/// every `ω_p − ω_V` branch sits on the half-integer lattice.
pub fn solve_resonance(
    r: usize,
    l: usize,
    omega_a: f64,
    omega_c: f64,
    constraints: &ResonanceConstraints,
) -> Result<ResonancePlan> {
    if r == l {
        return invalid("degenerate drives: r == l");
    }
    if !(omega_a > 0.0 && omega_c > 0.0) {
        return invalid("mode frequencies must be positive");
    }
    if constraints.denominator < 1 || constraints.max_coefficient < 1 {
        return invalid("lattice needs denominator >= 1 and max_coefficient >= 1");
    }
    let (tr, tl) = resonance_targets(r, l);
    let attempt = |bias: LatticeFreq| -> Option<ResonancePlan> {
        let pr = drive_plan(bias, tr)?;
        let pl = drive_plan(bias, tl)?;
        let det = min_detuning([&pr, &pl], omega_a, omega_c, constraints.order_box);
        let wv = lattice_value(bias, omega_a, omega_c);
        if !(wv > 0.0 && wv <= constraints.gap_bound) || det < constraints.min_detuning {
            return None;
        }
        Some(ResonancePlan { bias, drive_r: pr, drive_l: pl, min_detuning: det })
    };
    if let Some(bias) = constraints.bias {
        return attempt(bias).ok_or_else(|| {
            Error::Invalid(format!(
                "bias ({}, {}) violates the off-resonance, gap or detuning constraints",
                bias.0, bias.1
            ))
        });
    }
    let den = constraints.denominator;
    let span = constraints.max_coefficient * den;
    let mut candidates = Vec::new();
    for a in -span..=span {
        for c in -span..=span {
            let bias = (Rational64::new(a, den), Rational64::new(c, den));
            let wv = lattice_value(bias, omega_a, omega_c);
            if wv > 0.0 && wv <= constraints.gap_bound {
                candidates.push((wv, a, c, bias));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    candidates
        .into_iter()
        .find_map(|(_, _, _, b)| attempt(b))
        .ok_or_else(|| Error::Invalid("no bias on the lattice satisfies the constraint set".into()))
}

fn config_bias(config: &CqedConfig) -> Result<Option<LatticeFreq>> {
    let Some([a, c]) = config.bias else { return Ok(None) };
    let to_rational = |v: f64| -> Result<Rational64> {
        let q = (v * 4.0).round();
        if (q - v * 4.0).abs() > 1e-9 {
            return invalid(format!("bias coefficient {v} is not on the quarter lattice"));
        }
        Ok(Rational64::new(q as i64, 4))
    };
    Ok(Some((to_rational(a)?, to_rational(c)?)))
}

/// Resonance plan for a configuration, honouring its fixed bias if present.
pub fn plan_for(config: &CqedConfig) -> Result<ResonancePlan> {
    let c = config.to_angular();
    c.validate()?;
    let constraints = ResonanceConstraints {
        bias: config_bias(&c)?,
        gap_bound: c.gap_bound.unwrap_or_else(default_gap_bound),
        ..Default::default()
    };
    solve_resonance(c.r, c.l, c.omega_a, c.omega_c, &constraints)
}

/// `f̃ = Ω_r·⟨k+r|D(φ_a)|k⟩`, `g̃ = Ω_l·⟨k+l|D(φ_a)|k⟩` with `κ_eff = 4/γ` from
/// adiabatic elimination of the reservoir.
pub fn ats_scheme(config: &CqedConfig) -> Result<NLREScheme> {
    let c = config.to_angular();
    plan_for(&c)?;
    let profile = |order: usize, epsilon: f64| RabiProfileSpec::Ats {
        order: order as i64,
        phi_a: c.phi_a,
        e_j: c.e_j,
        phi_c: c.phi_c,
        epsilon,
    };
    let scheme = NLREScheme::new(c.r, c.l, profile(c.r, c.eps_r), profile(c.l, c.eps_l), 4.0 / c.gamma)?;
    stabilizing_crossing(&scheme, 0, 200)?;
    Ok(scheme)
}

/// Crossing of the two transition-indexed Rabi curves, each evaluated at the
/// initial Fock state of its transition: `f̃(k)` (from `|k⟩` up by r) against
/// `g̃(k − l)` (from `|k⟩` down by l).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionCrossing {
    pub k_star: f64,
    pub h_star: f64,
}

pub fn transition_crossing(scheme: &NLREScheme, k_max: usize) -> Result<TransitionCrossing> {
    let l = scheme.l as f64;
    let diff = |x: f64| scheme.f_profile.eval_continuous(x) - scheme.g_profile.eval_continuous(x - l);
    for k in scheme.l..k_max {
        let (a, b) = (diff(k as f64), diff(k as f64 + 1.0));
        if a > 0.0 && b <= 0.0 {
            let (mut lo, mut hi) = (k as f64, k as f64 + 1.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if diff(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let x = 0.5 * (lo + hi);
            return Ok(TransitionCrossing { k_star: x, h_star: scheme.f_profile.eval_continuous(x) });
        }
    }
    Err(Error::NoCrossing(format!("transition-indexed profiles do not cross below k = {k_max}")))
}

/// Matrix element `|⟨k+k_a, k_c|H_avg|k, 0⟩|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwaElement {
    pub k: usize,
    pub k_a: i64,
    pub k_c: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonantCheck {
    pub drive: String,
    pub k_a: i64,
    pub k_c: i64,
    /// `(k, numerical, analytic)` over the compared range.
    pub samples: Vec<(usize, f64, f64)>,
    /// Largest `|numerical − analytic| / max(analytic, 0.1 h*)`.
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwaReport {
    pub averaging_time: f64,
    pub integration_step: f64,
    /// `ν_max · dt / π`; must stay below 1.
    pub nyquist_ratio: f64,
    pub h_star: f64,
    pub resonant: Vec<ResonantCheck>,
    pub max_unwanted: RwaElement,
    pub elements: Vec<RwaElement>,
}

impl RwaReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn max_resonant_error(&self) -> f64 {
        self.resonant.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }
}

const RWA_CHUNK: usize = 512;

/// Time average of `ε(t)e^{iνt}` for each `ν` by the trapezoid rule, chunked
/// over time in parallel and reduced in chunk order.
fn averaged_weights(nus: &[f64], drives: &[(f64, f64)], t_total: f64, steps: usize) -> Vec<C64> {
    let dt = t_total / steps as f64;
    let chunks: Vec<(usize, usize)> =
        (0..=steps).step_by(RWA_CHUNK).map(|s| (s, (s + RWA_CHUNK).min(steps + 1))).collect();
    let partial: Vec<Vec<C64>> = chunks
        .par_iter()
        .map(|&(s, e)| {
            let mut acc = vec![C64::new(0.0, 0.0); nus.len()];
            for j in s..e {
                let t = j as f64 * dt;
                let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
                let eps: f64 = drives.iter().map(|&(amp, om)| amp * (om * t).cos()).sum();
                let scale = w * eps;
                for (a, &nu) in acc.iter_mut().zip(nus) {
                    *a += C64::from_polar(scale, nu * t);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![C64::new(0.0, 0.0); nus.len()];
    for p in partial {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total.into_iter().map(|z| z / steps as f64).collect()
}

/// Time-averaged `H(t) = −2E_J ε(t) sin(φ̂(t) + ω_V t)` in the two-mode
/// rotating frame, as a dense matrix on `storage ⊗ reservoir`.
pub fn averaged_hamiltonian(
    config: &CqedConfig,
    plan: &ResonancePlan,
    averaging_time: f64,
    step: f64,
) -> Result<(Mat, f64)> {
    let c = config.to_angular();
    c.validate()?;
    if !(averaging_time > 0.0 && step > 0.0 && step < averaging_time) {
        return invalid("averaging needs 0 < step < averaging_time");
    }
    let (ns, nc) = (c.storage_cutoff, c.reservoir_cutoff);
    let wv = plan.omega_v(c.omega_a, c.omega_c);
    let (wr, wl) = plan.drive_freqs(c.omega_a, c.omega_c);
    let nu_max = (ns - 1) as f64 * c.omega_a + (nc - 1) as f64 * c.omega_c + wv.abs() + wr.abs().max(wl.abs());
    let nyquist = nu_max * step / PI;
    if nyquist >= 1.0 {
        return invalid(format!("integration step {step:e} too coarse: highest frequency {nu_max:e} rad/s aliases"));
    }
    let steps = (averaging_time / step).round() as usize;
    let da = displacement_matrix(ns, C64::new(0.0, c.phi_a));
    let dc = displacement_matrix(nc, C64::new(0.0, c.phi_c));
    let (sa, sc) = (2 * ns - 1, 2 * nc - 1);
    let key = |dka: i64, dkc: i64| ((dka + ns as i64 - 1) as usize) * sc + (dkc + nc as i64 - 1) as usize;
    let mut nus = Vec::with_capacity(2 * sa * sc);
    for sign in [1.0, -1.0] {
        for dka in -(ns as i64 - 1)..=(ns as i64 - 1) {
            for dkc in -(nc as i64 - 1)..=(nc as i64 - 1) {
                nus.push(dka as f64 * c.omega_a + dkc as f64 * c.omega_c + sign * wv);
            }
        }
    }
    let w = averaged_weights(&nus, &[(c.eps_r, wr), (c.eps_l, wl)], steps as f64 * step, steps);
    let (w_plus, w_minus) = w.split_at(sa * sc);
    let dim = ns * nc;
    let mut h = Mat::zeros((dim, dim));
    let pref = C64::new(0.0, c.e_j);
    for m in 0..ns {
        for n in 0..ns {
            for mc in 0..nc {
                for nc_ in 0..nc {
                    let kk = key(m as i64 - n as i64, mc as i64 - nc_ as i64);
                    let e = da[[m, n]] * dc[[mc, nc_]];
                    let ed = (da[[n, m]] * dc[[nc_, mc]]).conj();
                    h[[m * nc + mc, n * nc + nc_]] = pref * (e * w_plus[kk] - ed * w_minus[kk]);
                }
            }
        }
    }
    Ok((h, nyquist))
}

/// Numerically averaged Hamiltonian compared against the analytic profiles.
pub fn rwa_validate(config: &CqedConfig, averaging_time: f64, integration_step: f64) -> Result<RwaReport> {
    let c = config.to_angular();
    let plan = plan_for(&c)?;
    let (h, nyquist) = averaged_hamiltonian(&c, &plan, averaging_time, integration_step)?;
    let (ns, nc) = (c.storage_cutoff, c.reservoir_cutoff);
    let scheme = NLREScheme::new(
        c.r,
        c.l,
        RabiProfileSpec::Ats { order: c.r as i64, phi_a: c.phi_a, e_j: c.e_j, phi_c: c.phi_c, epsilon: c.eps_r },
        RabiProfileSpec::Ats { order: c.l as i64, phi_a: c.phi_a, e_j: c.e_j, phi_c: c.phi_c, epsilon: c.eps_l },
        4.0 / c.gamma,
    )?;
    let h_star = transition_crossing(&scheme, 200).map(|x| x.h_star).unwrap_or(0.0);
    let mut elements = Vec::new();
    for k in 0..ns {
        for kc in 0..nc as i64 {
            for ka in -(k as i64)..(ns - k) as i64 {
                if ka == 0 && kc == 0 {
                    continue;
                }
                let row = (k as i64 + ka) as usize * nc + kc as usize;
                elements.push(RwaElement { k, k_a: ka, k_c: kc, value: h[[row, k * nc]].norm() });
            }
        }
    }
    let (r, l) = (c.r as i64, c.l as i64);
    let resonant_keys = [("r", r, 1i64), ("l", -l, 1i64)];
    let floor = 0.1 * h_star;
    let mut resonant = Vec::new();
    for (drive, ka, kc) in resonant_keys {
        // Compared away from the truncation edge.
        let samples: Vec<(usize, f64, f64)> = elements
            .iter()
            .filter(|e| e.k_a == ka && e.k_c == kc && (e.k as i64 + ka.max(0)) + 4 < ns as i64)
            .map(|e| {
                let analytic = if drive == "r" {
                    scheme.f_profile.raw(e.k).abs()
                } else {
                    scheme.g_profile.raw(e.k - l as usize).abs()
                };
                (e.k, e.value, analytic)
            })
            .collect();
        let max_rel_error = samples.iter().map(|&(_, num, ana)| (num - ana).abs() / ana.max(floor)).fold(0.0, f64::max);
        resonant.push(ResonantCheck { drive: drive.to_string(), k_a: ka, k_c: kc, samples, max_rel_error });
    }
    let max_unwanted = elements
        .iter()
        .filter(|e| !resonant_keys.iter().any(|&(_, ka, kc)| e.k_a == ka && e.k_c == kc))
        .filter(|e| e.k + e.k_a.max(0) as usize + 4 < ns)
        .copied()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .unwrap_or(RwaElement { k: 0, k_a: 0, k_c: 0, value: 0.0 });
    Ok(RwaReport { averaging_time, integration_step, nyquist_ratio: nyquist, h_star, resonant, max_unwanted, elements })
}

#[derive(Debug, Clone)]
pub struct CqedOutcome {
    pub trajectory: Trajectory,
    /// First sample time with manifold projection above 0.99.
    pub t99: Option<f64>,
    pub cutoff: usize,
}

/// Effective single-mode model started from `|μ⟩`, sampled every `dt` up to
/// `horizon`; records the projection onto the dark manifold ("manifold") and
/// onto `|Ξ_μ⟩` ("class").
pub fn run_cqed_scenario(config: &CqedConfig, mu: usize, horizon: f64, dt: f64) -> Result<CqedOutcome> {
    let c = config.to_angular();
    let scheme = ats_scheme(&c)?;
    if !(dt > 0.0 && horizon >= dt) {
        return invalid("scenario needs 0 < dt <= horizon");
    }
    let n = certified_cutoff(&scheme, 16, 120, 1e-12)?.max(c.storage_cutoff);
    if mu >= n {
        return invalid(format!("initial Fock state {mu} outside cutoff {n}"));
    }
    let space = FockSpace::new(n)?;
    let states = solve_recurrence(&scheme, space)?;
    let d = scheme.d();
    let mut manifold = Mat::zeros((n, n));
    for s in &states {
        manifold = manifold + outer(&s.xi, &s.xi);
    }
    let class = states
        .iter()
        .find(|s| s.mu == mu % d)
        .ok_or_else(|| Error::Invalid(format!("no dark state in class {}", mu % d)))?;
    let model = LindbladModel::from_scheme(&scheme, space);
    let prop = Propagator::sector(&model, d, 0, dt)?;
    let opts = EvolveOptions { population_alarm: Some(1e-6), ..Default::default() }
        .observe("manifold", Observable::Operator(manifold))
        .observe("class", Observable::Pure(class.xi.clone()));
    let rho0 = DensityOperator::pure(&fock_state(n, mu))?;
    let steps = (horizon / dt).round() as usize;
    let trajectory = prop.run(&rho0, steps, &opts, SpaceTag::Mode(n))?;
    let proj = trajectory.get("manifold").expect("recorded");
    let t99 = trajectory.times.iter().zip(proj).find(|(_, &p)| p > 0.99).map(|(&t, _)| t);
    Ok(CqedOutcome { trajectory, t99, cutoff: n })
}

/// Nonlinear element used for the alternative profile formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CircuitElement {
    /// Single microwave-driven junction.
    Junction,
    /// Flux-driven ATS without bias.
    Ats,
    /// Kinetic interference cotunneling element with `cooper_pairs` pairs.
    Kite { cooper_pairs: u32 },
}

/// Profile of the `â†^{p_a} ĉ†^{p_c}` process and the diagonal always-on
/// energies `E_J ⟨k|f(n̂,0,φ_a)|k⟩⟨0|f(n̂_c,0,φ_c)|0⟩` (empty when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeProfile {
    pub profile: RabiProfileSpec,
    pub always_on: Vec<f64>,
}

/// `drive` is `φ_c|ξ_p|` for a junction or KITE and `ε_p` for the ATS.
/// Odd `p_a + p_c` is required for junction and KITE, even for the ATS.
pub fn alternative_profile(
    element: CircuitElement,
    e_j: f64,
    phi_a: f64,
    phi_c: f64,
    drive: f64,
    p_a: i64,
    p_c: i64,
    len: usize,
) -> Result<AlternativeProfile> {
    let odd = (p_a + p_c).rem_euclid(2) == 1;
    let (scale, parity_ok, diag) = match element {
        CircuitElement::Junction => (1.0, odd, true),
        CircuitElement::Ats => (1.0, !odd, false),
        CircuitElement::Kite { cooper_pairs } => {
            if cooper_pairs == 0 {
                return invalid("KITE needs at least one Cooper pair");
            }
            (cooper_pairs as f64, odd, true)
        }
    };
    if !parity_ok {
        return invalid(format!("orders (p_a, p_c) = ({p_a}, {p_c}) violate the parity rule of {element:?}"));
    }
    let (pa, pc) = (phi_a * scale, phi_c * scale);
    let reservoir = displacement_element(0, p_c.abs(), pc)?.abs();
    let profile = RabiProfileSpec::IonLaguerre { order: p_a, eta: pa, strength: e_j * drive * reservoir };
    let always_on = if diag {
        let c0 = displacement_element(0, 0, pc)?;
        (0..len).map(|k| e_j * displacement_element(k, 0, pa).unwrap_or(0.0) * c0).collect()
    } else {
        Vec::new()
    };
    Ok(AlternativeProfile { profile, always_on })
}
