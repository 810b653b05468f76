//! Dispatch from a validated config to the core analyses.

use std::collections::BTreeMap;

use nlre_core::cqed::{run_cqed_scenario, rwa_validate};
use nlre_core::darkstate::{certified_cutoff, solve_recurrence, DarkState};
use nlre_core::dynamics::{
    evolve_with, measure_confinement_full, noise_channel, run_qec_experiment, standard_observables, uniform_times,
    EvolveOptions, NoiseKind, Observable, Trajectory,
};
use nlre_core::fock::{coherent_state, fock_state, DensityOperator, FockSpace};
use nlre_core::ion::{run_ion_scenario, unstabilized_cat_decay};
use nlre_core::linalg::{self, Mat, C64};
use nlre_core::liouvillian::{
    build_k, build_liouvillian, build_sector_liouvillian, dark_residual, spectrum_near_zero, LindbladModel,
};
use nlre_core::phasespace::{classical_field, find_critical_points, husimi, wigner, PhaseGrid, PointClass};
use nlre_core::rabi::{stabilizing_crossing, NLREScheme};
use nlre_core::transforms::{generalized_rabi, kernel_dimension, squeezed_dark_states, transform_k, SqueezedScheme};
use serde_json::{json, Value};

use crate::config::{
    AnalysisKind, CutoffPolicy, InitialState, IonRunSpec, PhaseQuantity, RwaSpec, ScenarioConfig, SpectrumSpec,
};
use crate::error::{CliError, CliResult};
use crate::output::{num, numeric_csv, Artifact};

/// Largest Fock index searched when locating crossings and probing cutoffs.
const PROBE_MAX: usize = 4000;
/// Mass allowed in the five highest levels of every dark state.
pub const CERT_TOP_MASS: f64 = 1e-12;

/// Artifacts, scalar metrics and cutoff certifications of one run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub metrics: BTreeMap<String, f64>,
    pub certifications: Vec<Value>,
}

impl Outcome {
    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }
}

pub fn run_analysis(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    let mut out = Outcome::default();
    match cfg.analysis {
        AnalysisKind::Darkstate => darkstate(cfg, &mut out)?,
        AnalysisKind::Spectrum => spectrum(cfg, &mut out)?,
        AnalysisKind::Evolve => evolve(cfg, &mut out)?,
        AnalysisKind::Confinement => confinement(cfg, &mut out)?,
        AnalysisKind::Qec => qec(cfg, &mut out)?,
        AnalysisKind::Ion => ion(cfg, &mut out)?,
        AnalysisKind::Cqed => cqed(cfg, &mut out)?,
        AnalysisKind::Transform => transform(cfg, &mut out)?,
        AnalysisKind::Phasespace => phasespace(cfg, &mut out)?,
        AnalysisKind::RwaValidate => rwa(cfg, &mut out)?,
    }
    Ok(out)
}

fn scheme(cfg: &ScenarioConfig) -> CliResult<NLREScheme> {
    let spec = cfg.scheme.as_ref().ok_or_else(|| CliError::Validation("missing [scheme]".into()))?;
    Ok(spec.build()?)
}

fn top_mass(states: &[DarkState]) -> f64 {
    states.iter().map(|s| s.xi.iter().rev().take(5).map(|z| z.norm_sqr()).sum::<f64>()).fold(0.0, f64::max)
}

/// Applies the cutoff policy and certifies the result.
///
/// Auto starts from `ceil(k* + 8√Var + 10)`, with `Var` from a probe solve,
/// and grows by 25 % until the top-level mass passes; an explicit cutoff
/// that fails is a certification error.
pub fn resolve_cutoff(scheme: &NLREScheme, policy: CutoffPolicy) -> CliResult<(usize, Vec<DarkState>, Value)> {
    let crossing = stabilizing_crossing(scheme, 0, PROBE_MAX)?;
    let (mut n, variance) = match policy {
        CutoffPolicy::Explicit(n) => (n, None),
        CutoffPolicy::Auto => {
            let probe = certified_cutoff(scheme, 16, PROBE_MAX, 1e-16)?;
            let var = solve_recurrence(scheme, FockSpace::new(probe)?)?[0].distribution().variance();
            ((crossing.k_star + 8.0 * var.sqrt() + 10.0).ceil().max(8.0) as usize, Some(var))
        }
    };
    let formula = n;
    loop {
        let states = solve_recurrence(scheme, FockSpace::new(n)?)?;
        let mass = top_mass(&states);
        let passed = mass < CERT_TOP_MASS;
        let cert = json!({
            "target": "dark_states",
            "policy": if variance.is_some() { "auto" } else { "explicit" },
            "formula_cutoff": formula,
            "cutoff": n,
            "k_star": crossing.k_star,
            "variance": variance,
            "top_mass": mass,
            "threshold": CERT_TOP_MASS,
            "passed": passed,
        });
        if passed {
            return Ok((n, states, cert));
        }
        if variance.is_none() || n >= PROBE_MAX {
            return Err(CliError::Certification(format!(
                "cutoff {n}: top-level mass {mass:.3e} exceeds {CERT_TOP_MASS:.0e}"
            )));
        }
        n = ((n as f64 * 1.25).ceil() as usize).min(PROBE_MAX);
    }
}

fn trajectory_csv(name: &str, label: &str, traj: &Trajectory) -> Artifact {
    let (header, rows) = traj.table();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    Artifact::new(name, numeric_csv(&[("trajectory", label.to_string())], &header, &rows))
}

fn distribution_rows(states: &[DarkState], n: usize) -> Vec<Vec<f64>> {
    let dists: Vec<_> = states.iter().map(|s| s.distribution()).collect();
    (0..n)
        .map(|k| {
            let mut row = vec![k as f64];
            row.extend(dists.iter().map(|d| d.get(k)));
            row
        })
        .collect()
}

fn class_header(states: &[DarkState]) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend(states.iter().map(|s| format!("p_mu{}", s.mu)));
    h
}

fn darkstate(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let s = scheme(cfg)?;
    let (n, states, cert) = resolve_cutoff(&s, cfg.cutoff)?;
    out.certifications.push(cert);
    let crossing = stabilizing_crossing(&s, 0, PROBE_MAX)?;
    let meta = [("analysis", "darkstate".to_string()), ("cutoff", n.to_string())];
    let profile_rows: Vec<Vec<f64>> = (0..n).map(|k| vec![k as f64, s.f(k), s.g(k)]).collect();
    out.artifacts.push(Artifact::new("profiles.csv", numeric_csv(&meta, &["k", "f", "g"], &profile_rows)));
    let header = class_header(&states);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.artifacts.push(Artifact::new("distribution.csv", numeric_csv(&meta, &header, &distribution_rows(&states, n))));
    let k = build_k(&s, FockSpace::new(n)?);
    let mut records = Vec::new();
    for st in &states {
        let d = st.distribution();
        records.push(json!({
            "mu": st.mu,
            "truth": st.truth,
            "mean": d.mean(),
            "variance": d.variance(),
            "mandel_q": d.mandel_q(),
            "skewness": d.skewness(),
            "norm_defect": st.norm_defect,
            "residual": dark_residual(&k, &st.xi),
        }));
        out.metric(&format!("mean_mu{}", st.mu), d.mean());
        out.metric(&format!("variance_mu{}", st.mu), d.variance());
        out.metric(&format!("mandel_q_mu{}", st.mu), d.mandel_q());
    }
    out.metric("k_star", crossing.k_star);
    out.metric("h_star", crossing.h_star);
    out.artifacts.push(Artifact::json("states.json", &json!({ "crossing": crossing, "states": records })));
    Ok(())
}

fn spectrum(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let s = scheme(cfg)?;
    let spec = cfg.spectrum.clone().unwrap_or_else(SpectrumSpec::default);
    let (n, states, cert) = resolve_cutoff(&s, cfg.cutoff)?;
    out.certifications.push(cert);
    let model = noisy_model(&s, FockSpace::new(n)?, cfg)?;
    let lv: Mat = match spec.sector {
        Some(sec) => build_sector_liouvillian(&model, s.d(), sec)?.0,
        None => build_liouvillian(&model)?.mat,
    };
    let rep = spectrum_near_zero(&lv, spec.count, s.kappa_eff)?;
    let rows: Vec<Vec<f64>> = rep.eigenvalues.iter().enumerate().map(|(i, e)| vec![i as f64, e.re, e.im]).collect();
    let meta = [
        ("analysis", "spectrum".to_string()),
        ("cutoff", n.to_string()),
        ("sector", spec.sector.map_or("full".to_string(), |x| x.to_string())),
    ];
    out.artifacts.push(Artifact::new("eigenvalues.csv", numeric_csv(&meta, &["index", "re", "im"], &rows)));
    let report: Value = serde_json::from_str(&rep.to_json()).expect("report is json");
    out.artifacts.push(Artifact::json("spectrum.json", &report));
    out.metric("n_exact_zero", rep.n_exact_zero as f64);
    out.metric("n_near_zero", rep.n_near_zero as f64);
    out.metric("variance_mu0", states[0].distribution().variance());
    for (i, e) in rep.eigenvalues.iter().enumerate() {
        out.metric(&format!("eig{i}_re"), e.re);
        out.metric(&format!("eig{i}_im"), e.im);
    }
    Ok(())
}

fn noisy_model(s: &NLREScheme, space: FockSpace, cfg: &ScenarioConfig) -> CliResult<LindbladModel> {
    let mut model = LindbladModel::from_scheme(s, space);
    for n in &cfg.noise {
        let (op, rate) = noise_channel(n.kind, n.rate, model.hamiltonian.tag)?;
        model.add_jump(op, rate)?;
    }
    Ok(model)
}

fn noise_list(cfg: &ScenarioConfig) -> Vec<(NoiseKind, f64)> {
    cfg.noise.iter().map(|n| (n.kind, n.rate)).collect()
}

fn dark_projector(states: &[DarkState], n: usize) -> Mat {
    let mut p = Mat::zeros((n, n));
    for st in states {
        p = p + linalg::outer(&st.xi, &st.xi);
    }
    p
}

fn evolve(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let s = scheme(cfg)?;
    let spec = cfg.evolve.clone().expect("validated");
    if spec.samples < 2 || !(spec.horizon > 0.0) {
        return Err(CliError::Validation("evolve needs samples >= 2 and horizon > 0".into()));
    }
    let (n, states, cert) = resolve_cutoff(&s, cfg.cutoff)?;
    out.certifications.push(cert);
    let space = FockSpace::new(n)?;
    let model = noisy_model(&s, space, cfg)?;
    let psi = match spec.initial {
        InitialState::Fock { k } if k < n => fock_state(n, k),
        InitialState::Fock { k } => return Err(CliError::Validation(format!("Fock state {k} outside cutoff {n}"))),
        InitialState::Coherent { re, im } => coherent_state(n, C64::new(re, im)),
        InitialState::Dark { mu } => {
            states.get(mu).ok_or_else(|| CliError::Validation(format!("no dark state mu = {mu}")))?.xi.clone()
        }
    };
    let rho0 = DensityOperator::pure(&psi)?;
    let mut opts = EvolveOptions { observables: standard_observables(model.hamiltonian.tag), ..Default::default() };
    opts = opts
        .observe("initial_overlap", Observable::Pure(psi))
        .observe("dark_population", Observable::Operator(dark_projector(&states, n)));
    let times = uniform_times(spec.horizon, spec.samples);
    let traj = evolve_with(&model, &rho0, &times, &opts)?;
    for name in ["n", "dark_population", "initial_overlap"] {
        if let Some(v) = traj.get(name) {
            out.metric(&format!("final_{name}"), *v.last().expect("nonempty trajectory"));
        }
    }
    out.artifacts.push(trajectory_csv("trajectory.csv", "evolve", &traj));
    Ok(())
}

fn confinement(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let s = scheme(cfg)?;
    let spec = cfg.confinement.clone().unwrap_or_default();
    let m = measure_confinement_full(&s, spec.delta_x)?;
    out.certifications.push(json!({
        "target": "confinement",
        "policy": "certified_cutoff_plus_8",
        "cutoff": m.cutoff,
        "threshold": CERT_TOP_MASS,
        "passed": true,
    }));
    out.metric("measured_rate", m.fit.rate);
    out.metric("predicted_rate", m.prediction.rate);
    out.metric("uncorrected_rate", m.prediction.uncorrected);
    out.metric("skewness", m.prediction.skewness);
    out.metric("variance", m.prediction.variance);
    out.metric("fit_residual", m.fit.residual_rms);
    out.artifacts.push(trajectory_csv("trajectory.csv", "confinement", &m.trajectory));
    out.artifacts.push(Artifact::json("confinement.json", &json!({ "fit": m.fit, "prediction": m.prediction })));
    Ok(())
}

fn qec(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let s = scheme(cfg)?;
    let spec = cfg.qec.clone().expect("validated");
    let (n, states, cert) = resolve_cutoff(&s, cfg.cutoff)?;
    out.certifications.push(cert);
    let st = states.get(spec.mu).ok_or_else(|| CliError::Validation(format!("no dark state mu = {}", spec.mu)))?;
    let rho0 = DensityOperator::pure(&st.xi)?;
    let res = run_qec_experiment(&s, FockSpace::new(n)?, &noise_list(cfg), &rho0, spec.horizon)?;
    out.metric("steady_infidelity", res.steady_infidelity);
    out.metric("logical_rate", res.fit.rate);
    out.metric("mandel_q", st.distribution().mandel_q());
    out.artifacts.push(trajectory_csv("trajectory.csv", "qec", &res.trajectory));
    out.artifacts.push(Artifact::json("fit.json", &json!(res.fit)));
    Ok(())
}

fn ion(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let ic = cfg.ion.clone().expect("validated");
    let run: IonRunSpec = cfg.ion_run.clone().unwrap_or_default();
    let res = run_ion_scenario(&ic, run.initial, run.samples)?;
    out.certifications
        .push(json!({ "target": "ion_motion", "policy": "config", "cutoff": res.cutoff, "passed": true }));
    out.metric("peak_fidelity", res.peak_fidelity);
    out.metric("peak_time", res.peak_time);
    out.metric("logical_rate", res.fit.rate);
    out.metric("initial_overlap", res.initial_overlap);
    out.artifacts.push(trajectory_csv("trajectory.csv", "ion", &res.trajectory));
    let mut fits = json!({ "stabilized": res.fit });
    if run.compare_unstabilized {
        let (traj, fit) = unstabilized_cat_decay(&ic, run.samples)?;
        out.metric("unstabilized_rate", fit.rate);
        out.artifacts.push(trajectory_csv("unstabilized.csv", "ion_unstabilized", &traj));
        fits["unstabilized"] = json!(fit);
    }
    out.artifacts.push(Artifact::json("fit.json", &fits));
    Ok(())
}

fn cqed(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let c = cfg.cqed.clone().expect("validated");
    let run = cfg.cqed_run.clone().expect("validated");
    let res = run_cqed_scenario(&c, run.mu, run.horizon, run.dt)?;
    out.certifications
        .push(json!({ "target": "storage_mode", "policy": "config", "cutoff": res.cutoff, "passed": true }));
    if let Some(t) = res.t99 {
        out.metric("t99", t);
    }
    if let Some(v) = res.trajectory.get("manifold") {
        out.metric("final_manifold", *v.last().expect("nonempty trajectory"));
    }
    out.artifacts.push(trajectory_csv("trajectory.csv", "cqed", &res.trajectory));
    Ok(())
}

fn rwa(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let c = cfg.cqed.clone().expect("validated");
    let spec = cfg.rwa.clone().unwrap_or_else(RwaSpec::default);
    let rep = rwa_validate(&c, spec.averaging_time, spec.integration_step)?;
    out.metric("max_resonant_error", rep.max_resonant_error());
    out.metric("max_unwanted_over_h_star", rep.max_unwanted.value / rep.h_star);
    out.metric("nyquist_ratio", rep.nyquist_ratio);
    out.metric("h_star", rep.h_star);
    let rows: Vec<Vec<f64>> =
        rep.elements.iter().map(|e| vec![e.k as f64, e.k_a as f64, e.k_c as f64, e.value]).collect();
    out.artifacts.push(Artifact::new(
        "elements.csv",
        numeric_csv(&[("analysis", "rwa-validate".to_string())], &["k", "k_a", "k_c", "value"], &rows),
    ));
    let report: Value = serde_json::from_str(&rep.to_json()).expect("report is json");
    out.artifacts.push(Artifact::json("rwa.json", &report));
    Ok(())
}

fn transform(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let base = scheme(cfg)?;
    let spec = cfg.transform.clone().expect("validated");
    let sq = SqueezedScheme::new(base, C64::new(spec.zeta_re, spec.zeta_im))?;
    let n = match cfg.cutoff {
        CutoffPolicy::Explicit(n) => n,
        CutoffPolicy::Auto => sq.certified_cutoff(CERT_TOP_MASS)?,
    };
    let space = FockSpace::new(n)?;
    let states = squeezed_dark_states(&sq, space)?;
    let kt = transform_k(&sq, space)?;
    let worst_defect = states.iter().map(|s| s.2).fold(0.0, f64::max);
    let top: f64 =
        states.iter().map(|(_, v, _)| v.iter().rev().take(5).map(|z| z.norm_sqr()).sum::<f64>()).fold(0.0, f64::max);
    let passed = top < CERT_TOP_MASS;
    out.certifications.push(json!({
        "target": "squeezed_dark_states",
        "policy": if cfg.cutoff == CutoffPolicy::Auto { "auto" } else { "explicit" },
        "cutoff": n,
        "top_mass": top,
        "threshold": CERT_TOP_MASS,
        "passed": passed,
    }));
    if !passed {
        return Err(CliError::Certification(format!("cutoff {n}: squeezed top-level mass {top:.3e}")));
    }
    let mut residual: f64 = 0.0;
    for (_, v, _) in &states {
        residual = residual.max(dark_residual(&kt, v));
    }
    out.metric("kernel_dimension", kernel_dimension(&kt.mat, 1e-9)? as f64);
    out.metric("max_residual", residual);
    out.metric("max_norm_defect", worst_defect);
    let mut rows = Vec::new();
    for j in 0..=spec.max_order {
        for k in 0..spec.rabi_len {
            let (f, g) = generalized_rabi(&sq, j, k);
            rows.push(vec![j as f64, k as f64, f.re, f.im, g.re, g.im]);
        }
    }
    let meta =
        [("analysis", "transform".to_string()), ("zeta", format!("{} {}", num(spec.zeta_re), num(spec.zeta_im)))];
    out.artifacts
        .push(Artifact::new("rabi.csv", numeric_csv(&meta, &["j", "k", "f_re", "f_im", "g_re", "g_im"], &rows)));
    let mut header = vec!["k".to_string()];
    header.extend(states.iter().map(|s| format!("p_mu{}", s.0)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let dist_rows: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut row = vec![k as f64];
            row.extend(states.iter().map(|s| s.1[k].norm_sqr()));
            row
        })
        .collect();
    out.artifacts.push(Artifact::new("distribution.csv", numeric_csv(&meta, &header, &dist_rows)));
    Ok(())
}

fn phasespace(cfg: &ScenarioConfig, out: &mut Outcome) -> CliResult<()> {
    let s = scheme(cfg)?;
    let spec = cfg.phasespace.clone().expect("validated");
    let (n, states, cert) = resolve_cutoff(&s, cfg.cutoff)?;
    out.certifications.push(cert);
    let grid = PhaseGrid::for_cutoff(n, spec.points)?;
    match spec.quantity {
        PhaseQuantity::Wigner | PhaseQuantity::Husimi => {
            let st =
                states.get(spec.mu).ok_or_else(|| CliError::Validation(format!("no dark state mu = {}", spec.mu)))?;
            let rho = DensityOperator::pure(&st.xi)?;
            let field =
                if spec.quantity == PhaseQuantity::Wigner { wigner(&rho, &grid)? } else { husimi(&rho, &grid)? };
            out.metric("integral", field.integral());
            out.artifacts.push(Artifact::new("field.csv", field.to_csv()));
            let meta: Value = serde_json::from_str(&field.metadata_json()).expect("metadata is json");
            out.artifacts.push(Artifact::json("field.json", &meta));
        }
        PhaseQuantity::Field => {
            let field = classical_field(&s, &grid)?;
            let cps = find_critical_points(&field);
            for (name, class) in [
                ("stable", PointClass::Stable),
                ("saddle", PointClass::Saddle),
                ("unstable", PointClass::Unstable),
                ("unclassified", PointClass::Unclassified),
            ] {
                out.metric(&format!("{name}_points"), cps.count(class) as f64);
            }
            out.artifacts.push(Artifact::new("field.csv", field.to_csv()));
            let meta: Value = serde_json::from_str(&field.metadata_json()).expect("metadata is json");
            out.artifacts.push(Artifact::json("field.json", &meta));
            let cp: Value = serde_json::from_str(&cps.to_json()).expect("critical points are json");
            out.artifacts.push(Artifact::json("critical_points.json", &cp));
        }
    }
    Ok(())
}
