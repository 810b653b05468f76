//! Master-equation integration, confinement-rate measurement and
//! error-correction experiments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::darkstate::{certified_cutoff, predicted_confinement_rate, solve_recurrence, ConfinementPrediction};
use crate::error::{invalid, Error, Result};
use crate::fock::{
    displacement_expm, lowering, momentum, number, sigma_z, ComplexOperator, DensityOperator, FockSpace, SpaceTag,
};
use crate::linalg::{self, dagger, Mat, Vector, C64};
use crate::liouvillian::{build_sector_liouvillian, LindbladModel};
use crate::rabi::NLREScheme;

/// Sampled observables of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub observables: BTreeMap<String, Vec<f64>>,
    pub checkpoints: Vec<(f64, Mat)>,
    pub final_state: Mat,
}

impl Trajectory {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(|v| v.as_slice())
    }

    /// Header and rows for tabular export, time first.
    pub fn table(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut header = vec!["t".to_string()];
        header.extend(self.observables.keys().cloned());
        let rows = (0..self.times.len())
            .map(|i| {
                let mut row = vec![self.times[i]];
                row.extend(self.observables.values().map(|v| v[i]));
                row
            })
            .collect();
        (header, rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub fit_window: [f64; 2],
    pub residual_rms: f64,
    pub accepted: bool,
}

impl RateFit {
    pub const MAX_RESIDUAL: f64 = 0.05;

    /// Least-squares line through `(t, ln y)` for samples inside the window
    /// with `y > 0`; the rate is minus the slope.
    pub fn fit(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<RateFit> {
        let pts: Vec<(f64, f64)> = times
            .iter()
            .zip(values)
            .filter(|(t, y)| **t >= window[0] - 1e-12 && **t <= window[1] + 1e-12 && **y > 0.0)
            .map(|(t, y)| (*t, y.ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Convergence(format!("only {} positive samples in fit window", pts.len())));
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mt;
        let rms = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
        Ok(RateFit {
            rate: -slope,
            intercept,
            fit_window: window,
            residual_rms: rms,
            accepted: rms < RateFit::MAX_RESIDUAL,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rate fit serializes")
    }
}

/// Quantity recorded at each sample.
#[derive(Debug, Clone)]
pub enum Observable {
    /// `⟨ψ|ρ|ψ⟩`.
    Pure(Vector),
    /// `Re tr(Aρ)`.
    Operator(Mat),
}

impl Observable {
    fn eval(&self, rho: &Mat) -> f64 {
        match self {
            Observable::Pure(psi) => linalg::inner(psi, &rho.dot(psi)).re,
            Observable::Operator(a) => linalg::trace(&a.dot(rho)).re,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub observables: Vec<(String, Observable)>,
    /// Times at which the full state is stored.
    pub checkpoints: Vec<f64>,
    /// Maximum population allowed in the five highest Fock levels.
    pub population_alarm: Option<f64>,
    pub max_trace_defect: f64,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> EvolveOptions {
        EvolveOptions {
            rtol: 1e-8,
            atol: 1e-10,
            observables: Vec::new(),
            checkpoints: Vec::new(),
            population_alarm: Some(1e-6),
            max_trace_defect: 1e-7,
            max_steps: 5_000_000,
        }
    }
}

impl EvolveOptions {
    pub fn observe(mut self, name: &str, obs: Observable) -> EvolveOptions {
        self.observables.push((name.to_string(), obs));
        self
    }
}

/// `⟨n̂⟩` and parity observables for the oscillator part of `tag`.
pub fn standard_observables(tag: SpaceTag) -> Vec<(String, Observable)> {
    let mode = |n: usize| {
        let parity = Mat::from_diag(&Vector::from_shape_fn(n, |k| C64::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0)));
        (number(n), parity)
    };
    let (nop, par) = match tag {
        SpaceTag::Mode(n) => mode(n),
        SpaceTag::SpinMode(n) => {
            let (a, b) = mode(n);
            let id = linalg::eye(2);
            (linalg::kron(&id, &a), linalg::kron(&id, &b))
        }
        _ => return Vec::new(),
    };
    vec![("n".to_string(), Observable::Operator(nop)), ("parity".to_string(), Observable::Operator(par))]
}

fn top_population(tag: SpaceTag, rho: &Mat) -> f64 {
    let top = |n: usize, offset: usize| (n.saturating_sub(5)..n).map(|k| rho[[offset + k, offset + k]].re).sum::<f64>();
    match tag {
        SpaceTag::Mode(n) => top(n, 0),
        SpaceTag::SpinMode(n) => top(n, 0) + top(n, n),
        SpaceTag::ModeMode(a, b) => {
            let mut s = 0.0;
            for i in 0..a {
                for j in 0..b {
                    if i + 5 >= a || j + 5 >= b {
                        s += rho[[i * b + j, i * b + j]].re;
                    }
                }
            }
            s
        }
        SpaceTag::Vectorized(_) => 0.0,
    }
}

struct Recorder<'a> {
    opts: &'a EvolveOptions,
    tag: SpaceTag,
    traj: Trajectory,
}

impl<'a> Recorder<'a> {
    fn new(opts: &'a EvolveOptions, tag: SpaceTag) -> Recorder<'a> {
        let mut observables = BTreeMap::new();
        for (name, _) in &opts.observables {
            observables.insert(name.clone(), Vec::new());
        }
        observables.insert("trace_defect".to_string(), Vec::new());
        Recorder {
            opts,
            tag,
            traj: Trajectory {
                times: Vec::new(),
                observables,
                checkpoints: Vec::new(),
                final_state: Mat::zeros((0, 0)),
            },
        }
    }

    fn record(&mut self, t: f64, rho: &Mat) -> Result<()> {
        let defect = (linalg::trace(rho) - C64::new(1.0, 0.0)).norm();
        if defect > self.opts.max_trace_defect {
            return Err(Error::Convergence(format!("trace defect {defect:.3e} at t = {t}")));
        }
        if let Some(limit) = self.opts.population_alarm {
            let top = top_population(self.tag, rho);
            if top > limit {
                return Err(Error::Truncation(format!("population {top:.3e} in the five highest levels at t = {t}")));
            }
        }
        self.traj.times.push(t);
        self.traj.observables.get_mut("trace_defect").unwrap().push(defect);
        for (name, obs) in &self.opts.observables {
            let v = obs.eval(rho);
            self.traj.observables.get_mut(name).unwrap().push(v);
        }
        if self.opts.checkpoints.iter().any(|&c| (c - t).abs() <= 1e-12 * t.abs().max(1.0)) {
            self.traj.checkpoints.push((t, rho.clone()));
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] < 0.0 {
        return invalid("times must be nonempty and start at t >= 0");
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("times must be strictly increasing");
    }
    Ok(())
}

/// Uniform grid of `samples` points on `[0, horizon]`.
pub fn uniform_times(horizon: f64, samples: usize) -> Vec<f64> {
    (0..samples).map(|i| horizon * i as f64 / (samples - 1) as f64).collect()
}

pub fn evolve(model: &LindbladModel, rho0: &DensityOperator, times: &[f64]) -> Result<Trajectory> {
    evolve_with(model, rho0, times, &EvolveOptions::default())
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Adaptive Dormand–Prince integration in operator form.
pub fn evolve_with(
    model: &LindbladModel,
    rho0: &DensityOperator,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    check_times(times)?;
    if rho0.dim() != model.dim() {
        return Err(Error::Dimension(format!("state dim {} vs model {}", rho0.dim(), model.dim())));
    }
    let rhs = model.operator_form()?;
    let tag = model.hamiltonian.tag;
    let mut rec = Recorder::new(opts, tag);
    let mut rho = rho0.mat().clone();
    let mut t = times[0];
    rec.record(t, &rho)?;
    let err_norm = |err: &Mat, y0: &Mat, y1: &Mat| -> f64 {
        let mut s = 0.0;
        for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            s += (e.norm() / sc).powi(2);
        }
        (s / err.len() as f64).sqrt()
    };
    let mut k1 = rhs.apply(&rho);
    let mut h = {
        let scale = |m: &Mat| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let d0 = scale(&rho);
        let d1 = scale(&k1);
        let span = times[times.len() - 1] - times[0];
        if d1 < 1e-14 {
            span.max(1e-6)
        } else {
            (0.01 * d0 / d1).min(span.max(1e-12))
        }
    };
    let mut steps = 0usize;
    for &target in &times[1..] {
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Convergence(format!("step limit reached at t = {t}")));
            }
            let last = t + h >= target;
            let hs = if last { target - t } else { h };
            let mut ks: Vec<Mat> = Vec::with_capacity(7);
            ks.push(k1.clone());
            for st in 1..7 {
                let mut y = rho.clone();
                for (j, kj) in ks.iter().enumerate() {
                    let a = A[st][j];
                    if a != 0.0 {
                        y.scaled_add(C64::new(hs * a, 0.0), kj);
                    }
                }
                if st == 6 {
                    let k7 = rhs.apply(&y);
                    let mut err = Mat::zeros(rho.dim());
                    for (j, kj) in ks.iter().chain(std::iter::once(&k7)).enumerate() {
                        if E[j] != 0.0 {
                            err.scaled_add(C64::new(hs * E[j], 0.0), kj);
                        }
                    }
                    let en = err_norm(&err, &rho, &y);
                    if !en.is_finite() {
                        return Err(Error::Convergence(format!("non-finite error estimate at t = {t}")));
                    }
                    if en <= 1.0 {
                        t = if last { target } else { t + hs };
                        rho = linalg::hermitize(&y);
                        k1 = k7;
                        let fac = if en == 0.0 { 10.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 10.0) };
                        if !last || fac < 1.0 {
                            h = hs * fac;
                        }
                    } else {
                        h = hs * (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
                        if h < 1e-14 * t.abs().max(1.0) {
                            return Err(Error::Convergence(format!("step size underflow at t = {t}")));
                        }
                    }
                    break;
                }
                ks.push(rhs.apply(&y));
            }
        }
        rec.record(t, &rho)?;
    }
    rec.traj.final_state = rho;
    Ok(rec.traj)
}

/// Exact propagation with `exp(L Δt)` on one coherence sector of `Z_d`.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub n: usize,
    pub dt: f64,
    pub idx: Vec<(usize, usize)>,
    pub step: Mat,
}

impl Propagator {
    pub fn sector(model: &LindbladModel, d: usize, s: usize, dt: f64) -> Result<Propagator> {
        let (l, idx) = build_sector_liouvillian(model, d, s)?;
        let step = linalg::expm(&l.mapv(|z| z * dt))?;
        Ok(Propagator { n: model.dim(), dt, idx, step })
    }

    fn pack(&self, rho: &Mat) -> Result<Vector> {
        let inside: f64 = self.idx.iter().map(|&(i, j)| rho[[i, j]].norm_sqr()).sum();
        let total: f64 = rho.iter().map(|z| z.norm_sqr()).sum();
        if total - inside > 1e-20 * total.max(1.0) {
            return invalid("initial state has weight outside the propagated sector");
        }
        Ok(Vector::from_iter(self.idx.iter().map(|&(i, j)| rho[[i, j]])))
    }

    fn unpack(&self, v: &Vector) -> Mat {
        let mut rho = Mat::zeros((self.n, self.n));
        for (p, &(i, j)) in self.idx.iter().enumerate() {
            rho[[i, j]] = v[p];
        }
        rho
    }

    /// Samples at `t = k·dt`, `k = 0..=steps`.
    pub fn run(&self, rho0: &DensityOperator, steps: usize, opts: &EvolveOptions, tag: SpaceTag) -> Result<Trajectory> {
        let mut rec = Recorder::new(opts, tag);
        let mut v = self.pack(rho0.mat())?;
        let mut rho = rho0.mat().clone();
        rec.record(0.0, &rho)?;
        for k in 1..=steps {
            v = self.step.dot(&v);
            rho = self.unpack(&v);
            rec.record(k as f64 * self.dt, &rho)?;
        }
        rec.traj.final_state = rho;
        Ok(rec.traj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Dephasing,
    Loss,
    Gain,
    Momentum,
    SpinDephasing,
}

/// Jump operator for a noise process: `n̂`, `â`, `â†`, `p̂ = i(â†−â)/√2` or `σ_z`,
/// embedded in `tag`, paired with its rate.
pub fn noise_channel(kind: NoiseKind, rate: f64, tag: SpaceTag) -> Result<(ComplexOperator, f64)> {
    if !(rate >= 0.0) {
        return invalid(format!("noise rate {rate} must be nonnegative"));
    }
    let n = match tag {
        SpaceTag::Mode(n) | SpaceTag::SpinMode(n) => n,
        _ => return Err(Error::Dimension(format!("noise channels need a mode space, got {tag:?}"))),
    };
    let mode_op = match kind {
        NoiseKind::Dephasing => Some(number(n)),
        NoiseKind::Loss => Some(lowering(n)),
        NoiseKind::Gain => Some(dagger(&lowering(n))),
        NoiseKind::Momentum => Some(momentum(n)),
        NoiseKind::SpinDephasing => None,
    };
    let mat = match (tag, mode_op) {
        (SpaceTag::Mode(_), Some(m)) => m,
        (SpaceTag::SpinMode(_), Some(m)) => linalg::kron(&linalg::eye(2), &m),
        (SpaceTag::SpinMode(_), None) => linalg::kron(&sigma_z(), &linalg::eye(n)),
        (_, None) => return Err(Error::Dimension("spin dephasing needs a spin-mode space".into())),
        _ => unreachable!(),
    };
    Ok((ComplexOperator::new(mat, tag)?, rate))
}

#[derive(Debug, Clone)]
pub struct ConfinementMeasurement {
    pub fit: RateFit,
    pub prediction: ConfinementPrediction,
    pub cutoff: usize,
    pub trajectory: Trajectory,
}

/// Return rate to the dark manifold after displacing `(|Ξ₀⟩+|Ξ₁⟩)/√2` by
/// `δx` along `q̂`. Fits `1 − tr(Πρ)` on `[1/κ_pred, 6/κ_pred]`, shifting the
/// window start past `0.5/κ_eff` (or doubling it) while the log-residual
/// exceeds the acceptance bound.
///
/// The fitted signal is the mean leakage of the `±δx` kicks minus that of an
/// undisplaced reference run: intrinsic decay of exponentially-good states
/// and terms odd in `δx` cancel, leaving the quadratic response.
pub fn measure_confinement(scheme: &NLREScheme, delta_x: f64) -> Result<RateFit> {
    measure_confinement_full(scheme, delta_x).map(|m| m.fit)
}

pub fn measure_confinement_full(scheme: &NLREScheme, delta_x: f64) -> Result<ConfinementMeasurement> {
    if !(delta_x.abs() > 0.0 && delta_x.abs() <= 0.01) {
        return invalid(format!("delta_x {delta_x} must be in (0, 0.01]"));
    }
    if scheme.d() < 2 {
        return invalid("confinement needs at least two dark states");
    }
    // Margin above the certified cutoff for the transient spread of the kick.
    let n = certified_cutoff(scheme, 16, 400, 1e-12)? + 8;
    let space = FockSpace::new(n)?;
    let states = solve_recurrence(scheme, space)?;
    let prediction = predicted_confinement_rate(scheme, space)?;
    let (x0, x1) = (&states[0].xi, &states[1].xi);
    let psi0 = crate::fock::normalize(&(x0 + x1));
    let kick = |dx: f64| -> Result<Vector> { Ok(displacement_expm(n, C64::new(dx / 2f64.sqrt(), 0.0))?.dot(&psi0)) };
    let proj = linalg::outer(x0, x0) + linalg::outer(x1, x1);
    let leak_op = linalg::eye(n) - proj;
    let model = LindbladModel::from_scheme(scheme, space);
    let pred = prediction.rate;
    let horizon = 6.0 / pred;
    let times = uniform_times(horizon, 61);
    let opts =
        EvolveOptions { rtol: 1e-10, atol: 1e-14, ..Default::default() }.observe("leak", Observable::Operator(leak_op));
    let run = |psi: &Vector| evolve_with(&model, &DensityOperator::pure(psi)?, &times, &opts);
    let mut traj = run(&kick(delta_x)?)?;
    let mirrored = run(&kick(-delta_x)?)?;
    let reference = run(&psi0)?;
    let leak: Vec<f64> = (0..times.len())
        .map(|i| {
            let l = |t: &Trajectory| t.get("leak").unwrap()[i];
            0.5 * (l(&traj) + l(&mirrored)) - l(&reference)
        })
        .collect();
    traj.observables.insert("leak_reference".into(), reference.get("leak").unwrap().to_vec());
    traj.observables.insert("leak_response".into(), leak.clone());
    let mut t0 = 1.0 / pred;
    let mut fit = RateFit::fit(&times, &leak, [t0, horizon])?;
    for _ in 0..3 {
        if fit.accepted {
            break;
        }
        let shifted = 0.5 / scheme.kappa_eff;
        t0 = if shifted > t0 && shifted < 0.7 * horizon { shifted } else { (2.0 * t0).min(0.7 * horizon) };
        fit = RateFit::fit(&times, &leak, [t0, horizon])?;
    }
    Ok(ConfinementMeasurement { fit, prediction, cutoff: n, trajectory: traj })
}

#[derive(Debug, Clone)]
pub struct QecOutcome {
    pub trajectory: Trajectory,
    /// Fit of `2F − 1` over the second half of the run.
    pub fit: RateFit,
    pub steady_infidelity: f64,
}

/// Number of samples per error-correction run.
pub const QEC_SAMPLES: usize = 200;

/// Evolves `rho0` under `κ_eff D[K]` plus noise and records the fidelity with
/// the dominant eigenvector of `rho0` and the dark-manifold population.
pub fn run_qec_experiment(
    scheme: &NLREScheme,
    space: FockSpace,
    noise: &[(NoiseKind, f64)],
    rho0: &DensityOperator,
    horizon: f64,
) -> Result<QecOutcome> {
    let mut model = LindbladModel::from_scheme(scheme, space);
    for &(kind, rate) in noise {
        let (op, r) = noise_channel(kind, rate, model.hamiltonian.tag)?;
        model.add_jump(op, r)?;
    }
    let (w, v) = linalg::eigh(rho0.mat())?;
    let top = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
    let target = v.column(top).to_owned();
    let states = solve_recurrence(scheme, space)?;
    let mut proj = Mat::zeros((space.cutoff(), space.cutoff()));
    for s in &states {
        proj += &linalg::outer(&s.xi, &s.xi);
    }
    let mut opts = EvolveOptions::default()
        .observe("fidelity", Observable::Pure(target))
        .observe("manifold", Observable::Operator(proj));
    opts.observables.extend(standard_observables(model.hamiltonian.tag));
    let times = uniform_times(horizon, QEC_SAMPLES);
    let traj = evolve_with(&model, rho0, &times, &opts)?;
    let fid = traj.get("fidelity").unwrap();
    let contrast: Vec<f64> = fid.iter().map(|f| 2.0 * f - 1.0).collect();
    let fit = RateFit::fit(&times, &contrast, [horizon / 2.0, horizon]).unwrap_or(RateFit {
        rate: f64::NAN,
        intercept: f64::NAN,
        fit_window: [horizon / 2.0, horizon],
        residual_rms: f64::NAN,
        accepted: false,
    });
    let steady_infidelity = 1.0 - fid[fid.len() - 1];
    Ok(QecOutcome { trajectory: traj, fit, steady_infidelity })
}
