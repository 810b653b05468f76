//! Dark-state manifold from the recurrence, truth classification, and the
//! CMB/CMP statistics of linear crossings.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{displacement_matrix, FockSpace};
use crate::linalg::{self, Mat, Vector, C64, ZERO};
use crate::rabi::{check_convergence, stabilizing_crossing, Convergence, Direction, NLREScheme, RabiProfileSpec};
use crate::special::{hyp2f1, hyp3f2, ln_factorial, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    TrueDark,
    ExponentiallyGood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarkState {
    pub mu: usize,
    /// Amplitudes `ξ_k` for `k < cutoff`, unit norm.
    pub xi: Vector,
    pub truth: Truth,
    /// Mass of the untruncated recurrence solution at `k ≥ cutoff`.
    pub norm_defect: f64,
}

impl DarkState {
    pub fn distribution(&self) -> BosonDistribution {
        BosonDistribution::from_amplitudes(&self.xi)
    }
}

/// Probabilities over the Fock index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BosonDistribution {
    pub probs: Vec<f64>,
}

impl BosonDistribution {
    pub fn new(probs: Vec<f64>) -> Result<BosonDistribution> {
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return invalid("probabilities must be finite and nonnegative");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("probabilities sum to {total}"));
        }
        Ok(BosonDistribution { probs })
    }

    /// Renormalises the given nonnegative weights.
    pub fn from_weights(w: Vec<f64>) -> Result<BosonDistribution> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return invalid("weights must have positive finite sum");
        }
        BosonDistribution::new(w.into_iter().map(|v| v / total).collect())
    }

    pub fn from_amplitudes(xi: &Vector) -> BosonDistribution {
        let w: Vec<f64> = xi.iter().map(|z| z.norm_sqr()).collect();
        let total: f64 = w.iter().sum();
        BosonDistribution { probs: w.into_iter().map(|v| v / total).collect() }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    fn central(&self, p: i32) -> f64 {
        let m = self.mean();
        self.probs.iter().enumerate().map(|(k, &w)| w * (k as f64 - m).powi(p)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, &w)| w * k as f64).sum()
    }

    pub fn variance(&self) -> f64 {
        self.central(2)
    }

    /// `Q = Var/⟨n⟩ − 1`.
    pub fn mandel_q(&self) -> f64 {
        self.variance() / self.mean() - 1.0
    }

    pub fn skewness(&self) -> f64 {
        self.central(3) / self.variance().powf(1.5)
    }

    pub fn total_variation(&self, other: &BosonDistribution) -> f64 {
        let n = self.len().max(other.len());
        0.5 * (0..n).map(|k| (self.get(k) - other.get(k)).abs()).sum::<f64>()
    }

    /// Restriction to `k ≡ mu (mod d)`, renormalised.
    pub fn residue_class(&self, mu: usize, d: usize) -> Result<BosonDistribution> {
        let w = self.probs.iter().enumerate().map(|(k, &p)| if k % d == mu { p } else { 0.0 }).collect();
        BosonDistribution::from_weights(w)
    }
}

/// Poisson(λ) on `0..len`, not renormalised.
pub fn poisson(lambda: f64, len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| {
            if lambda == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            (-lambda + k as f64 * lambda.ln() - ln_factorial(k)).exp()
        })
        .collect()
}

/// One dark state per residue class `μ ∈ [0, d)` from
/// `ξ_{k+d} g̃(k+r) e^{iφ_g} = ξ_k f̃(k) e^{iφ_f}`.
///
/// Each chain starts at `ξ_μ = 1`; where `g̃(k+r) = 0` but `f̃(k) ≠ 0` the
/// chain restarts at `k+d`, where `f̃(k) = 0` it terminates. Magnitudes are
/// accumulated in logs and the tail beyond the cutoff is summed to certify
/// the truncation.
pub fn solve_recurrence(scheme: &NLREScheme, space: FockSpace) -> Result<Vec<DarkState>> {
    scheme.validate()?;
    let n = space.cutoff();
    let d = scheme.d();
    let ext = (4 * n).max(n + 400);
    if check_convergence(scheme, ext) != Convergence::Converges {
        return Err(Error::NoCrossing(format!("profile ratio does not settle below 1 by k = {ext}")));
    }
    let dphase = scheme.phase_f - scheme.phase_g;
    let mut out = Vec::with_capacity(d);
    for mu in 0..d.min(n) {
        let mut logmag = vec![f64::NEG_INFINITY; ext];
        let mut steps = vec![0usize; ext];
        logmag[mu] = 0.0;
        let mut start = mu;
        let mut k = mu;
        let mut peak = 0.0f64;
        while k + d < ext {
            let f = scheme.f(k);
            let g = scheme.g(k + scheme.r);
            if f == 0.0 {
                break;
            }
            if g == 0.0 {
                for j in (start..=k).step_by(d) {
                    logmag[j] = f64::NEG_INFINITY;
                }
                start = k + d;
                logmag[k + d] = 0.0;
                steps[k + d] = 0;
                peak = 0.0;
            } else {
                logmag[k + d] = logmag[k] + (f / g).ln();
                steps[k + d] = steps[k] + 1;
                peak = peak.max(logmag[k + d]);
                if k + d >= n && logmag[k + d] < peak - 200.0 {
                    break;
                }
            }
            k += d;
        }
        let peak = logmag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logmag.iter().map(|&lm| (2.0 * (lm - peak)).exp()).collect();
        let total: f64 = weights.iter().sum();
        let tail: f64 = weights[n.min(ext)..].iter().sum();
        let norm_defect = tail / total;
        if norm_defect > 1e-8 {
            return Err(Error::Truncation(format!("residue {mu}: mass {norm_defect:.3e} above cutoff {n}")));
        }
        let inside: f64 = weights[..n].iter().sum();
        let xi = Vector::from_shape_fn(n, |k| {
            if logmag[k] == f64::NEG_INFINITY {
                ZERO
            } else {
                let mag = (weights[k] / inside).sqrt();
                C64::from_polar(mag, steps[k] as f64 * dphase)
            }
        });
        out.push(DarkState { mu, xi, truth: Truth::TrueDark, norm_defect });
    }
    let (states, _) = classify_states(scheme, out);
    Ok(states)
}

/// Smallest cutoff from `start` (in steps of `step`, up to `max`) at which the
/// recurrence certifies and every dark state keeps less than `top_mass` in
/// its five highest levels.
pub fn certified_cutoff(scheme: &NLREScheme, start: usize, max: usize, top_mass: f64) -> Result<usize> {
    let mut n = start.max(8);
    let mut last = None;
    while n <= max {
        match solve_recurrence(scheme, FockSpace::new(n)?) {
            Ok(states) => {
                let ok = states.iter().all(|s| s.xi.iter().skip(n - 5).map(|z| z.norm_sqr()).sum::<f64>() < top_mass);
                if ok {
                    return Ok(n);
                }
            }
            Err(e @ Error::Truncation(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
        n += 4;
    }
    Err(last.unwrap_or_else(|| Error::Truncation(format!("no certified cutoff up to {max}"))))
}

/// Labels each state: true dark when the constraint `ξ_{m+l} g̃(m) = 0`
/// holds exactly for every `m < r`, exponentially good otherwise. Also returns
/// the constraint violation `max_{m<r} |ξ_{m+l}| g̃(m)` per state.
pub fn classify_states(scheme: &NLREScheme, states: Vec<DarkState>) -> (Vec<DarkState>, Vec<f64>) {
    let mut proxies = Vec::with_capacity(states.len());
    let out = states
        .into_iter()
        .map(|mut s| {
            let mut viol: f64 = 0.0;
            for m in 0..scheme.r {
                let idx = m + scheme.l;
                let amp = s.xi.get(idx).map(|z| z.norm()).unwrap_or(0.0);
                viol = viol.max(amp * scheme.g(m));
            }
            s.truth = if viol == 0.0 { Truth::TrueDark } else { Truth::ExponentiallyGood };
            proxies.push(viol);
            s
        })
        .collect();
    (out, proxies)
}

/// Parameters of the linearly transformed CMB law `P[X = x(k) | m, θ, 2]`
/// with `k = d·x + k_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CMBParams {
    pub m: f64,
    pub theta: f64,
    pub d: usize,
    pub k_offset: f64,
}

impl CMBParams {
    /// `m = (h*/s_f + h*/s_g)/d − 1`, `θ = (s_f/s_g)²`, `k_offset = k* − h*/s_g + d`.
    pub fn from_crossing(k_star: f64, h_star: f64, s_f: f64, s_g: f64, d: usize) -> Result<CMBParams> {
        if !(s_f > 0.0 && s_g > 0.0 && h_star > 0.0) {
            return invalid("CMB parameters need positive slopes and height");
        }
        let df = d as f64;
        Ok(CMBParams {
            m: (h_star / s_f + h_star / s_g) / df - 1.0,
            theta: (s_f / s_g).powi(2),
            d,
            k_offset: k_star - h_star / s_g + df,
        })
    }

    /// Parameters of a scheme built from two linear profiles.
    pub fn from_linear_scheme(scheme: &NLREScheme) -> Result<CMBParams> {
        match (&scheme.f_profile, &scheme.g_profile) {
            (
                RabiProfileSpec::LinearCrossing { k_star, h_star, slope: s_f, direction: Direction::Falling },
                RabiProfileSpec::LinearCrossing { k_star: kg, h_star: hg, slope: s_g, direction: Direction::Rising },
            ) if (kg - k_star - scheme.r as f64).abs() < 1e-12 && (hg - h_star).abs() < 1e-12 => {
                CMBParams::from_crossing(*k_star, *h_star, *s_f, *s_g, scheme.d())
            }
            _ => invalid("CMB parameters need falling f and rising g crossing at (k*, h*)"),
        }
    }

    pub fn x_of_k(&self, k: usize) -> f64 {
        (k as f64 - self.k_offset) / self.d as f64
    }

    /// Unnormalised `ln[θˣ / (Γ(x+1)Γ(m−x+1))²]`, or `None` outside the
    /// support where every Gamma argument is positive.
    pub fn log_weight(&self, x: f64) -> Option<f64> {
        if x + 1.0 <= 0.0 || self.m - x + 1.0 <= 0.0 {
            return None;
        }
        Some(x * self.theta.ln() - 2.0 * (ln_gamma(x + 1.0) + ln_gamma(self.m - x + 1.0)))
    }

    /// Largest Fock index that can carry weight.
    fn k_limit(&self) -> usize {
        let kmax = self.d as f64 * (self.m + 1.0) + self.k_offset;
        kmax.max(0.0).ceil() as usize + self.d
    }
}

/// Fock-space distribution of residue class `mu` under the CMB law.
pub fn cmb_class_distribution(params: &CMBParams, mu: usize, len: usize) -> Result<BosonDistribution> {
    let len = len.max(params.k_limit() + 1);
    let logs: Vec<Option<f64>> =
        (0..len).map(|k| if k % params.d == mu { params.log_weight(params.x_of_k(k)) } else { None }).collect();
    let peak = logs.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(Error::Support(format!("residue class {mu} has empty CMB support")));
    }
    BosonDistribution::from_weights(logs.into_iter().map(|l| l.map(|v| (v - peak).exp()).unwrap_or(0.0)).collect())
}

/// CMB probability of Fock index `k`, normalised over the residue class of `k`.
pub fn cmb_pdf(params: &CMBParams, k: usize) -> Result<f64> {
    let dist = cmb_class_distribution(params, k % params.d, k + 1)?;
    Ok(dist.get(k))
}

/// Mean and variance of `X ~ CMB(m, θ, 2)` on `x ∈ ℕ`.
///
/// Uses `E[X] = θm² ₂F₁(1−m,1−m;2;θ)/₂F₁(−m,−m;1;θ)` and
/// `E[X(X−1)] = θ²m²(m−1)²/2 · ₂F₁(2−m,2−m;3;θ)/₂F₁(−m,−m;1;θ)` where the series
/// converge (integer m, or θ < 1); otherwise sums the clipped support.
pub fn cmb_moments(params: &CMBParams) -> Result<(f64, f64)> {
    let m = params.m;
    let t = params.theta;
    let valid = m.fract() == 0.0 || t < 1.0;
    if valid {
        if let (Some(f0), Some(f1), Some(f2)) =
            (hyp2f1(-m, -m, 1.0, t), hyp2f1(1.0 - m, 1.0 - m, 2.0, t), hyp2f1(2.0 - m, 2.0 - m, 3.0, t))
        {
            let mean = t * m * m * f1 / f0;
            let fact2 = t * t * m * m * (m - 1.0) * (m - 1.0) / 2.0 * f2 / f0;
            return Ok((mean, fact2 + mean - mean * mean));
        }
    }
    cmb_moments_summed(params)
}

/// Direct summation over the clipped support `x ∈ {0, 1, …}, x < m + 1`.
pub fn cmb_moments_summed(params: &CMBParams) -> Result<(f64, f64)> {
    let xmax = (params.m + 1.0).ceil().max(1.0) as usize;
    let logs: Vec<(f64, f64)> = (0..=xmax).filter_map(|x| params.log_weight(x as f64).map(|w| (x as f64, w))).collect();
    if logs.is_empty() {
        return Err(Error::Support("empty CMB support".into()));
    }
    Ok(moments_from_logs(&logs))
}

/// Summation of the unclipped series `Σ_{x∈ℕ} θˣ/(Γ(x+1)Γ(m−x+1))²`, which is
/// what the ₂F₁ forms represent for non-integer m (reciprocal Gamma is entire).
pub fn cmb_moments_unclipped(params: &CMBParams, terms: usize) -> (f64, f64) {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let logs: Vec<(f64, f64)> = (0..terms)
        .filter_map(|x| {
            let xf = x as f64;
            let lr = ln_abs_recip_gamma(params.m - xf + 1.0)?;
            Some((xf, xf * params.theta.ln() - 2.0 * ln_gamma(xf + 1.0) + 2.0 * lr))
        })
        .collect();
    let peak = logs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    for &(xf, lw) in &logs {
        let w = (lw - peak).exp();
        s0 += w;
        s1 += w * xf;
        s2 += w * xf * xf;
    }
    let mean = s1 / s0;
    (mean, s2 / s0 - mean * mean)
}

/// `ln |1/Γ(x)|`, `None` at the poles.
fn ln_abs_recip_gamma(x: f64) -> Option<f64> {
    if x <= 0.0 && x.fract() == 0.0 {
        return None;
    }
    if x > 0.0 {
        return Some(-ln_gamma(x));
    }
    let s = (std::f64::consts::PI * x).sin().abs();
    Some(ln_gamma(1.0 - x) + s.ln() - std::f64::consts::PI.ln())
}

fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        return 0.0;
    }
    if x > 0.0 {
        return (-ln_gamma(x)).exp();
    }
    // Reflection: 1/Γ(x) = Γ(1−x) sin(πx)/π.
    let s = (std::f64::consts::PI * x).sin();
    ln_gamma(1.0 - x).exp() * s / std::f64::consts::PI
}

fn moments_from_logs(logs: &[(f64, f64)]) -> (f64, f64) {
    let peak = logs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &(x, lw) in logs {
        let w = (lw - peak).exp();
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    let mean = s1 / s0;
    (mean, s2 / s0 - mean * mean)
}

/// Fock-space mean and variance: `⟨n̂⟩ = d E[X] + k* − h*/s_g + d`, `Var = d² Var(X)`.
pub fn cmb_fock_moments(params: &CMBParams) -> Result<(f64, f64)> {
    let (e, v) = cmb_moments(params)?;
    let d = params.d as f64;
    Ok((d * e + params.k_offset, d * d * v))
}

/// Normaliser `Σ_{x = y₀, y₀+1, …} θˣ/(Γ(x+1)Γ(m−x+1))²` in closed form:
/// `θ^{y₀}/(Γ(y₀+1)Γ(m−y₀+1))² · ₃F₂(1, y₀−m, y₀−m; 1+y₀, 1+y₀; θ)`.
/// Cross-check only; summation is authoritative.
pub fn cmb_normalizer_3f2(m: f64, theta: f64, y0: f64) -> Option<f64> {
    let pref = theta.powf(y0) * (recip_gamma(y0 + 1.0) * recip_gamma(m - y0 + 1.0)).powi(2);
    hyp3f2([1.0, y0 - m, y0 - m], [1.0 + y0, 1.0 + y0], theta).map(|v| pref * v)
}

/// Conway–Maxwell–Poisson law `∝ λˣ/(x!)²` on `0..len`, normalised by summation.
pub fn cmp_distribution(lambda: f64, len: usize) -> Result<BosonDistribution> {
    if !(lambda > 0.0) {
        return invalid("CMP needs lambda > 0");
    }
    let logs: Vec<f64> = (0..len).map(|x| x as f64 * lambda.ln() - 2.0 * ln_factorial(x)).collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    BosonDistribution::from_weights(logs.into_iter().map(|l| (l - peak).exp()).collect())
}

/// `P[X = x | λ, 2]` with enough terms that the omitted tail is below 1e-16.
pub fn cmp_pdf(lambda: f64, x: usize) -> Result<f64> {
    let len = (x + 1).max((4.0 * lambda.sqrt() + 40.0) as usize);
    Ok(cmp_distribution(lambda, len)?.get(x))
}

/// The reciprocal companion `∝ (y!)²/λʸ`, which diverges without a support
/// bound; `support` is mandatory.
pub fn cmp_reciprocal_distribution(lambda: f64, support: Option<usize>) -> Result<BosonDistribution> {
    let len = match support {
        Some(n) if n > 0 => n,
        _ => return invalid("reciprocal CMP law needs a finite support bound"),
    };
    if !(lambda > 0.0) {
        return invalid("reciprocal CMP needs lambda > 0");
    }
    let logs: Vec<f64> = (0..len).map(|y| 2.0 * ln_factorial(y) - y as f64 * lambda.ln()).collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    BosonDistribution::from_weights(logs.into_iter().map(|l| (l - peak).exp()).collect())
}

/// CMP approximation of residue class `mu` for a crossing with flat `f̃`:
/// weights `λˣ/Γ(x+1)²` with `λ = (h*/(d·s_g))²` and
/// `x = (k − k* + h*/s_g)/d − 1`, kept where `x > −1`.
pub fn flat_crossing_cmp_class(scheme: &NLREScheme, mu: usize, len: usize) -> Result<BosonDistribution> {
    let d = scheme.d();
    if mu >= d {
        return invalid("residue class out of range");
    }
    let c = stabilizing_crossing(scheme, 0, len.saturating_sub(scheme.r + 1))?;
    if !(c.slope_g > 0.0) {
        return invalid("CMP approximation needs a rising g profile");
    }
    let df = d as f64;
    let shift = c.h_star / c.slope_g;
    let lambda = (c.h_star / (df * c.slope_g)).powi(2);
    let logs: Vec<Option<f64>> = (0..len)
        .map(|k| {
            let x = (k as f64 - c.k_star + shift) / df - 1.0;
            (k % d == mu && x > -1.0).then(|| x * lambda.ln() - 2.0 * ln_gamma(x + 1.0))
        })
        .collect();
    let peak = logs.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(Error::Support(format!("residue class {mu} has empty CMP support")));
    }
    BosonDistribution::from_weights(logs.into_iter().map(|l| l.map(|v| (v - peak).exp()).unwrap_or(0.0)).collect())
}

const SUPPORT_FLOOR: f64 = 1e-300;

/// Kullback–Leibler divergence `Σ p ln(p/q)`.
pub fn relative_entropy(p: &BosonDistribution, q: &BosonDistribution) -> Result<f64> {
    let n = p.len().max(q.len());
    let mut s = 0.0;
    for k in 0..n {
        let pk = p.get(k);
        if pk <= 0.0 {
            continue;
        }
        let qk = q.get(k);
        if qk < SUPPORT_FLOOR {
            if pk < SUPPORT_FLOOR {
                continue;
            }
            return Err(Error::Support(format!("p({k}) = {pk:.3e} where q vanishes")));
        }
        s += pk * (pk / qk).ln();
    }
    Ok(s.max(0.0))
}

/// Quantum relative entropy `Tr ρ(log ρ − log σ)`.
pub fn relative_entropy_quantum(rho: &Mat, sigma: &Mat) -> Result<f64> {
    let (wr, vr) = linalg::eigh(rho)?;
    let (ws, vs) = linalg::eigh(sigma)?;
    let mut s = 0.0;
    for (i, &p) in wr.iter().enumerate() {
        if p > SUPPORT_FLOOR {
            s += p * p.ln();
        }
        if p <= 1e-14 {
            continue;
        }
        let vi = vr.column(i);
        for (j, &q) in ws.iter().enumerate() {
            let ov = vs.column(j).iter().zip(vi.iter()).map(|(a, b)| a.conj() * b).sum::<C64>();
            let w = ov.norm_sqr();
            if w < 1e-14 {
                continue;
            }
            if q < SUPPORT_FLOOR {
                return Err(Error::Support("rho has weight outside the support of sigma".into()));
            }
            s -= p * w * q.ln();
        }
    }
    Ok(s.max(0.0))
}

/// Nonlinear shifted Fock states `|φ_{k,±}⟩ = R(n̂)(D(α) ± (−1)ᵏD(−α))|k⟩ / N_{k,±}`.
#[derive(Debug, Clone)]
pub struct ShiftedFockBasis {
    pub alpha: f64,
    /// `(k, +state, −state)`.
    pub states: Vec<(usize, Vector, Vector)>,
    pub norms_plus: Vec<f64>,
    pub norms_minus: Vec<f64>,
    /// Target mass dropped where the Poisson weight underflows.
    pub mask_defect: f64,
}

impl ShiftedFockBasis {
    /// `F_l(k) = N_k/N_{k−l}` on the `+` branch.
    pub fn ratio(&self, l: usize, k: usize) -> Option<f64> {
        if k < l || k >= self.norms_plus.len() {
            return None;
        }
        Some(self.norms_plus[k] / self.norms_plus[k - l])
    }

    /// Gram–Schmidt within each parity branch, in order of increasing k.
    pub fn orthonormalized(&self) -> Vec<(usize, Vector, Vector)> {
        let mut plus: Vec<Vector> = Vec::new();
        let mut minus: Vec<Vector> = Vec::new();
        let gs = |basis: &mut Vec<Vector>, v: &Vector| {
            let mut w = v.clone();
            for b in basis.iter() {
                let ov = linalg::inner(b, &w);
                w = &w - &b.mapv(|z| z * ov);
            }
            let w = crate::fock::normalize(&w);
            basis.push(w.clone());
            w
        };
        self.states.iter().map(|(k, p, m)| (*k, gs(&mut plus, p), gs(&mut minus, m))).collect()
    }
}

/// Builds `|φ_{k,±}⟩` for `k ≤ k_max` with `R(n̂) = √(P[K=n̂]/Poisson(n̂|α²))`.
pub fn shifted_fock_basis(
    dist: &BosonDistribution,
    alpha: f64,
    k_max: usize,
    space: FockSpace,
) -> Result<ShiftedFockBasis> {
    let n = space.cutoff();
    if k_max >= n {
        return invalid("k_max must be below the cutoff");
    }
    let pois = poisson(alpha * alpha, n);
    let mut mask_defect = 0.0;
    let reshape: Vec<f64> = (0..n)
        .map(|k| {
            let p = dist.get(k);
            if pois[k] < SUPPORT_FLOOR {
                mask_defect += p;
                0.0
            } else {
                (p / pois[k]).sqrt()
            }
        })
        .collect();
    let dp = displacement_matrix(n, C64::new(alpha, 0.0));
    let dm = displacement_matrix(n, C64::new(-alpha, 0.0));
    let mut states = Vec::new();
    let mut norms_plus = Vec::new();
    let mut norms_minus = Vec::new();
    for k in 0..=k_max {
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        let build =
            |s: f64| -> Vector { Vector::from_shape_fn(n, |j| (dp[[j, k]] + dm[[j, k]] * (s * sgn)) * reshape[j]) };
        let vp = build(1.0);
        let vm = build(-1.0);
        let np_ = linalg::vec_norm(&vp);
        let nm = linalg::vec_norm(&vm);
        norms_plus.push(np_);
        norms_minus.push(nm);
        let norm_or_zero = |v: Vector, nr: f64| if nr > 0.0 { v.mapv(|z| z / nr) } else { v };
        states.push((k, norm_or_zero(vp, np_), norm_or_zero(vm, nm)));
    }
    Ok(ShiftedFockBasis { alpha, states, norms_plus, norms_minus, mask_defect })
}

/// `κ_conf ≈ 4 κ_eff f̃(⟨n̂⟩)² / ⟨(Δn̂)²⟩`, with the `√(1 − Skew)` factor when
/// `s_f < s_g`. Moments come from the residue-0 dark state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfinementPrediction {
    pub rate: f64,
    pub uncorrected: f64,
    pub skewness: f64,
    pub skew_corrected: bool,
    pub mean: f64,
    pub variance: f64,
}

pub fn predicted_confinement_rate(scheme: &NLREScheme, space: FockSpace) -> Result<ConfinementPrediction> {
    let states = solve_recurrence(scheme, space)?;
    let dist = states[0].distribution();
    let mean = dist.mean();
    let var = dist.variance();
    let skew = dist.skewness();
    let f_mean = scheme.f_profile.eval_continuous(mean);
    let base = 4.0 * scheme.kappa_eff * f_mean * f_mean / var;
    let crossing = crate::rabi::stabilizing_crossing(scheme, 0, space.cutoff())?;
    let asymmetric = crossing.slope_f.abs() < crossing.slope_g.abs();
    let (rate, corrected) = if asymmetric {
        if skew >= 1.0 {
            log::warn!("skewness {skew:.3} >= 1, correction skipped");
            (base, false)
        } else {
            (base * (1.0 - skew).sqrt(), true)
        }
    } else {
        (base, false)
    };
    Ok(ConfinementPrediction {
        rate,
        uncorrected: base,
        skewness: skew,
        skew_corrected: corrected,
        mean,
        variance: var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{lowering, rotation};
    use ndarray_linalg::SVD;
    use proptest::prelude::*;

    fn k_matrix(s: &NLREScheme, n: usize) -> Mat {
        let mut k = Mat::zeros((n, n));
        for j in 0..n {
            if j + s.r < n {
                k[[j + s.r, j]] += C64::from_polar(s.f(j), s.phase_f);
            }
            if j + s.l < n {
                k[[j, j + s.l]] -= C64::from_polar(s.g(j), s.phase_g);
            }
        }
        k
    }

    #[test]
    fn two_photon_cat_is_parity_projected_poisson() {
        let alpha: f64 = 3.5;
        let s = NLREScheme::standard_cat(2, alpha, 1.0).unwrap();
        let states = solve_recurrence(&s, FockSpace::new(80).unwrap()).unwrap();
        let pois = poisson(alpha * alpha, 80);
        for st in &states {
            let target = BosonDistribution::from_weights(
                pois.iter().enumerate().map(|(k, &p)| if k % 2 == st.mu { p } else { 0.0 }).collect(),
            )
            .unwrap();
            let dist = st.distribution();
            for k in 0..80 {
                assert!((dist.get(k) - target.get(k)).abs() < 1e-10);
            }
            assert_eq!(st.truth, Truth::TrueDark);
        }
    }

    #[test]
    fn pure_decay_has_vacuum_dark_state() {
        let s = NLREScheme::new(
            0,
            1,
            RabiProfileSpec::Constant { value: 0.0 },
            RabiProfileSpec::Constant { value: 1.0 },
            1.0,
        )
        .unwrap();
        let states = solve_recurrence(&s, FockSpace::new(10).unwrap()).unwrap();
        assert_eq!(states.len(), 1);
        assert!((states[0].xi[0].norm() - 1.0).abs() < 1e-15);
        assert!(states[0].xi.iter().skip(1).all(|z| *z == ZERO));
    }

    #[test]
    fn linear_scheme_matches_svd_null_space() {
        let s = NLREScheme::linear(0, 2, 10.0, 20.0, 1.0, 1.0, 1.0).unwrap();
        let n = 50;
        let states = solve_recurrence(&s, FockSpace::new(n).unwrap()).unwrap();
        let k = k_matrix(&s, n);
        let (_, sv, vt) = k.svd(false, true).unwrap();
        let vt = vt.unwrap();
        let null: Vec<usize> = (0..n).filter(|&i| sv[i] < 1e-10).collect();
        assert_eq!(null.len(), 2);
        for st in &states {
            let mut proj = 0.0;
            for &i in &null {
                let v = vt.row(i).mapv(|z| z.conj());
                proj += linalg::inner(&v, &st.xi).norm_sqr();
            }
            assert!(proj > 1.0 - 1e-9, "overlap {proj}");
        }
    }

    #[test]
    fn classification_counts() {
        for (r, l) in [(0usize, 2usize), (3, 2), (1, 1), (2, 0), (1, 3)] {
            let s = NLREScheme::linear(r, l, 12.0, 20.0, 1.0, 1.0, 1.0).unwrap();
            let states = solve_recurrence(&s, FockSpace::new(60).unwrap()).unwrap();
            let n_true = states.iter().filter(|s| s.truth == Truth::TrueDark).count();
            assert_eq!(n_true, l, "({r},{l})");
            for st in &states {
                assert_eq!(st.truth == Truth::TrueDark, st.mu < l);
            }
        }
    }

    #[test]
    fn dark_states_annihilated_and_rotation_eigenstates() {
        for (r, l) in [(0usize, 2usize), (1, 1), (1, 3), (0, 3)] {
            let mut s = NLREScheme::linear(r, l, 15.0, 20.0, 0.9, 1.2, 1.0).unwrap();
            s.phase_f = 0.4;
            s.phase_g = -0.3;
            let n = 70;
            let states = solve_recurrence(&s, FockSpace::new(n).unwrap()).unwrap();
            let k = k_matrix(&s, n);
            let p = rotation(n, s.d());
            for st in &states {
                if st.truth == Truth::TrueDark {
                    assert!(linalg::vec_norm(&k.dot(&st.xi)) < 1e-9);
                }
                let phase = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * st.mu as f64 / s.d() as f64);
                let diff = p.dot(&st.xi) - st.xi.mapv(|z| z * phase);
                assert!(linalg::vec_norm(&diff) < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_is_reported() {
        let s = NLREScheme::standard_cat(2, 5.0, 1.0).unwrap();
        let err = solve_recurrence(&s, FockSpace::new(20).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Truncation(_)));
    }

    #[test]
    fn cmb_moments_examples() {
        // θ = 1, integer m: symmetric about m/2.
        let p = CMBParams { m: 8.0, theta: 1.0, d: 2, k_offset: 0.0 };
        let (e, _) = cmb_moments(&p).unwrap();
        assert!((e - 4.0).abs() < 1e-12);
        // m = 9.5, θ = 0.64 against the unclipped summation.
        let p = CMBParams { m: 9.5, theta: 0.64, d: 2, k_offset: 0.0 };
        let (e, v) = cmb_moments(&p).unwrap();
        let (e2, v2) = cmb_moments_unclipped(&p, 400);
        assert!(((e - e2) / e2).abs() < 1e-8);
        assert!(((v - v2) / v2).abs() < 1e-8);
        // m = 2, θ = 1: C(2,x)² = 1, 4, 1 → variance 1/3.
        let p = CMBParams { m: 2.0, theta: 1.0, d: 1, k_offset: 0.0 };
        let (_, v) = cmb_moments(&p).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn recurrence_matches_cmb_per_class() {
        let s = NLREScheme::linear(1, 2, 14.0, 20.0, 0.7, 1.6, 1.0).unwrap();
        let params = CMBParams::from_linear_scheme(&s).unwrap();
        let n = 90;
        let states = solve_recurrence(&s, FockSpace::new(n).unwrap()).unwrap();
        for st in &states {
            let cmb = cmb_class_distribution(&params, st.mu, n).unwrap();
            assert!(st.distribution().total_variation(&cmb) < 1e-9);
        }
    }

    #[test]
    fn mandel_q_from_moments_matches_recurrence() {
        let tg = std::f64::consts::PI / 8.0;
        let s = NLREScheme::linear_from_angles(0, 2, 10.0, 20.0, 3.0 * tg, tg, 1.0).unwrap();
        let params = CMBParams::from_linear_scheme(&s).unwrap();
        let (mean, var) = cmb_fock_moments(&params).unwrap();
        let q_formula = var / mean - 1.0;
        let st = solve_recurrence(&s, FockSpace::new(80).unwrap()).unwrap();
        let q_num = st[0].distribution().mandel_q();
        assert!(((q_formula - q_num) / q_num).abs() < 0.05, "{q_formula} vs {q_num}");
    }

    #[test]
    fn three_f_two_normaliser() {
        let (m, theta, y0): (f64, f64, f64) = (12.0, 0.8, 3.0);
        let direct: f64 = (3..=12)
            .map(|x| {
                let x = x as f64;
                theta.powf(x) * (recip_gamma(x + 1.0) * recip_gamma(m - x + 1.0)).powi(2)
            })
            .sum();
        let closed = cmb_normalizer_3f2(m, theta, y0).unwrap();
        assert!(((closed - direct) / direct).abs() < 1e-12);
    }

    #[test]
    fn cmp_examples() {
        let d = cmp_distribution(1e-12, 20).unwrap();
        assert!(d.get(0) > 1.0 - 1e-11);
        assert!(cmp_reciprocal_distribution(2.0, None).is_err());
        assert!(cmp_reciprocal_distribution(2.0, Some(10)).is_ok());
        // Large-m limit of CMB towards CMP(λ = m²θ).
        let (m, theta) = (1e5, 1.6e-9);
        let cmb = CMBParams { m, theta, d: 1, k_offset: 0.0 };
        let cmb_dist = cmb_class_distribution(&cmb, 0, 220).unwrap();
        let cmp = cmp_distribution(m * m * theta, 220).unwrap();
        assert!(cmb_dist.total_variation(&cmp) < 1e-3);
    }

    #[test]
    fn flat_f_linear_scheme_approaches_cmp() {
        let (k_star, h_star, s_f, s_g) = (20.0, 20.0, 1e-3, 1.0);
        let s = NLREScheme::linear(0, 2, k_star, h_star, s_f, s_g, 1.0).unwrap();
        let params = CMBParams::from_linear_scheme(&s).unwrap();
        let p = params.theta / (1.0 + params.theta);
        let lambda = params.m * params.m * p;
        let st = solve_recurrence(&s, FockSpace::new(120).unwrap()).unwrap();
        let dist = st[0].distribution();
        let w: Vec<f64> = (0..120)
            .map(|k| {
                if k % 2 != 0 {
                    return 0.0;
                }
                let x = params.x_of_k(k);
                if x + 1.0 <= 0.0 {
                    return 0.0;
                }
                (x * lambda.ln() - 2.0 * ln_gamma(x + 1.0)).exp()
            })
            .collect();
        let cmp = BosonDistribution::from_weights(w).unwrap();
        assert!(dist.total_variation(&cmp) < 1e-2);
    }

    #[test]
    fn standard_cat_cmp_entropy_shrinks_with_alpha() {
        for d in [2usize, 3, 4, 6] {
            let mut last = f64::INFINITY;
            for alpha in [2.0, 3.5, 5.0] {
                let s = NLREScheme::standard_cat(d, alpha, 1.0).unwrap();
                let n = 120;
                let cmp = flat_crossing_cmp_class(&s, 0, n).unwrap();
                let pois =
                    BosonDistribution::from_weights(poisson(alpha * alpha, n)).unwrap().residue_class(0, d).unwrap();
                let re = relative_entropy(&cmp, &pois).unwrap();
                assert!(re < 0.1 && re < last, "d={d} alpha={alpha}: {re}");
                last = re;
            }
        }
        let s = NLREScheme::standard_cat(2, 2.0, 1.0).unwrap();
        assert!(flat_crossing_cmp_class(&s, 2, 40).is_err());
    }

    #[test]
    fn relative_entropy_examples() {
        let p = BosonDistribution::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        let a = BosonDistribution::new(vec![1.0, 0.0]).unwrap();
        let b = BosonDistribution::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(relative_entropy(&a, &b), Err(Error::Support(_))));
        let rho = Mat::from_diag(&Vector::from(vec![C64::new(0.25, 0.0), C64::new(0.75, 0.0)]));
        assert!(relative_entropy_quantum(&rho, &rho).unwrap() < 1e-12);
    }

    #[test]
    fn shifted_fock_examples() {
        let alpha: f64 = 3.5;
        let n = 70;
        let space = FockSpace::new(n).unwrap();
        // R ≡ 1 gives cat states, N₀ = √2 for α² ≥ 10.
        let pois = BosonDistribution::from_weights(poisson(alpha * alpha, n)).unwrap();
        let b = shifted_fock_basis(&pois, alpha, 3, space).unwrap();
        assert!((b.norms_plus[0] - 2f64.sqrt()).abs() < 1e-5);
        let coh = crate::fock::coherent_state(n, C64::new(alpha, 0.0));
        let cohm = crate::fock::coherent_state(n, C64::new(-alpha, 0.0));
        let cat = crate::fock::normalize(&(&coh + &cohm));
        assert!(linalg::inner(&cat, &b.states[0].1).norm() > 1.0 - 1e-10);
        // Recurrence distribution reshapes to Ξ₀, Ξ₁.
        let s = NLREScheme::linear(0, 2, 12.0, 10.0, 0.6, 0.6, 1.0).unwrap();
        let st = solve_recurrence(&s, space).unwrap();
        let mix: Vec<f64> = (0..n).map(|k| 0.5 * (st[0].xi[k].norm_sqr() + st[1].xi[k].norm_sqr())).collect();
        let dist = BosonDistribution::from_weights(mix).unwrap();
        let alpha = dist.mean().sqrt();
        let b = shifted_fock_basis(&dist, alpha, 2, space).unwrap();
        assert!(linalg::inner(&b.states[0].1, &st[0].xi).norm() > 1.0 - 1e-6);
        assert!(linalg::inner(&b.states[0].2, &st[1].xi).norm() > 1.0 - 1e-6);
        let on = b.orthonormalized();
        assert!(linalg::inner(&on[0].1, &on[1].1).norm() < 1e-12 || on[1].0 % 2 == 1);
    }

    #[test]
    fn confinement_prediction_examples() {
        let space = FockSpace::new(60).unwrap();
        let cat = NLREScheme::standard_cat(2, 10f64.sqrt(), 1.0).unwrap();
        let pr = predicted_confinement_rate(&cat, space).unwrap();
        assert!((pr.uncorrected / 40.0 - 1.0).abs() < 1e-6, "{}", pr.uncorrected);
        assert!(pr.skew_corrected);
        let sym = NLREScheme::linear(0, 2, 20.0, 20.0, 0.6, 0.6, 1.0).unwrap();
        let pr = predicted_confinement_rate(&sym, FockSpace::new(90).unwrap()).unwrap();
        assert!(!pr.skew_corrected);
        let skewed = NLREScheme::linear(0, 2, 20.0, 20.0, 0.3, 1.0, 1.0).unwrap();
        let pr = predicted_confinement_rate(&skewed, FockSpace::new(110).unwrap()).unwrap();
        assert!(pr.skew_corrected);
        assert!(pr.rate < pr.uncorrected);
    }

    #[test]
    fn a_squared_scheme_matrix_matches_operator() {
        let n = 30;
        let alpha: f64 = 2.0;
        let s = NLREScheme::standard_cat(2, alpha, 1.0).unwrap();
        let a = lowering(n);
        let target = a.dot(&a) - Mat::eye(n).mapv(|z| z * alpha * alpha);
        let k = k_matrix(&s, n);
        assert!(linalg::max_abs(&(k + target)) < 1e-11);
    }

    proptest! {
        #[test]
        fn cmb_2f1_matches_summation_integer_m(m in 2u32..=50, theta in 0.05f64..20.0) {
            let p = CMBParams { m: m as f64, theta, d: 2, k_offset: 0.0 };
            let (e, v) = cmb_moments(&p).unwrap();
            let (e2, v2) = cmb_moments_summed(&p).unwrap();
            prop_assert!(((e - e2) / e2).abs() < 1e-8);
            prop_assert!(((v - v2) / v2).abs() < 1e-8);
        }

        #[test]
        fn cmb_2f1_matches_unclipped_noninteger(m in 2.0f64..50.0, theta in 0.05f64..0.95) {
            let p = CMBParams { m, theta, d: 2, k_offset: 0.0 };
            let (e, v) = cmb_moments(&p).unwrap();
            let (e2, v2) = cmb_moments_unclipped(&p, 3000);
            prop_assert!(((e - e2) / e2).abs() < 1e-8);
            prop_assert!(((v - v2) / v2).abs() < 1e-8);
        }

        #[test]
        fn mandel_q_increases_with_height(h in 6.0f64..30.0, tf in 0.3f64..1.3, tg in 0.3f64..1.3) {
            let a = NLREScheme::linear_from_angles(0, 2, 20.0, h, tf, tg, 1.0).unwrap();
            let b = NLREScheme::linear_from_angles(0, 2, 20.0, h * 1.2, tf, tg, 1.0).unwrap();
            let qa = cmb_fock_moments(&CMBParams::from_linear_scheme(&a).unwrap()).map(|(m, v)| v / m - 1.0).unwrap();
            let qb = cmb_fock_moments(&CMBParams::from_linear_scheme(&b).unwrap()).map(|(m, v)| v / m - 1.0).unwrap();
            prop_assert!(qb > qa);
        }
    }
}
