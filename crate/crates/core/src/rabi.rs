//! Rabi-frequency profiles `f̃(k)`, `g̃(k)`, their crossings and the tail
//! convergence test.
//!
//! A scheme's jump operator is `K = â†ʳ f(n̂) − g(n̂) âˡ`; the profiles are the
//! magnitudes `f̃(k) = |⟨k+r|K|k⟩|` and `g̃(k) = |⟨k|K|k+l⟩|`. Population
//! accumulates where `|f̃(k)|` and `|g̃(k+r)|` cross.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fock::displacement_element;
use crate::special::{bessel_j, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Rising,
    Falling,
}

/// Parameterised family of scalar profiles over the Fock index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RabiProfileSpec {
    Constant {
        value: f64,
    },
    /// `max(0, h* ± s (k − k*))`.
    LinearCrossing {
        k_star: f64,
        h_star: f64,
        slope: f64,
        direction: Direction,
    },
    /// `Ω · ⟨k+|o||D(η)|k⟩`, exact sideband element.
    IonLaguerre {
        order: i64,
        eta: f64,
        strength: f64,
    },
    /// `Ω · J_{|o|}(2η√(k + (|o|+1)/2))`.
    IonBessel {
        order: i64,
        eta: f64,
        strength: f64,
    },
    /// `Ω · ⟨k+|o||D(φ_a)|k⟩` with `Ω = ½E_J φ_c e^{−φ_c²/2} ε`.
    Ats {
        order: i64,
        phi_a: f64,
        e_j: f64,
        phi_c: f64,
        epsilon: f64,
    },
    /// `scale · √((k+1)(k+2)…(k+order))`, the profile of `scale · â^order`.
    Ladder {
        order: u32,
        scale: f64,
    },
    Tabulated {
        values: Vec<f64>,
    },
}

impl RabiProfileSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RabiProfileSpec::Constant { value } if !value.is_finite() => invalid("constant profile must be finite"),
            RabiProfileSpec::LinearCrossing { h_star, slope, k_star, .. } => {
                if !(*h_star > 0.0) || !(*slope >= 0.0) || !k_star.is_finite() {
                    invalid("linear profile needs h* > 0, s >= 0 and finite k*")
                } else {
                    Ok(())
                }
            }
            RabiProfileSpec::IonLaguerre { eta, strength, .. } | RabiProfileSpec::IonBessel { eta, strength, .. } => {
                if !(*eta > 0.0) || !strength.is_finite() {
                    invalid("ion profiles need eta > 0 and finite strength")
                } else {
                    Ok(())
                }
            }
            RabiProfileSpec::Ats { phi_a, e_j, phi_c, epsilon, .. } => {
                if !(*phi_a > 0.0) || ![e_j, phi_c, epsilon].iter().all(|v| v.is_finite()) {
                    invalid("ATS profile needs phi_a > 0 and finite parameters")
                } else {
                    Ok(())
                }
            }
            RabiProfileSpec::Ladder { scale, .. } if !scale.is_finite() => invalid("ladder scale must be finite"),
            RabiProfileSpec::Tabulated { values } if values.iter().any(|v| !v.is_finite()) => {
                invalid("tabulated profile values must be finite")
            }
            _ => Ok(()),
        }
    }

    /// Unclamped value at integer k (may be negative past a Bessel or
    /// Laguerre zero).
    pub fn raw(&self, k: usize) -> f64 {
        match self {
            RabiProfileSpec::Constant { value } => *value,
            RabiProfileSpec::LinearCrossing { .. }
            | RabiProfileSpec::IonBessel { .. }
            | RabiProfileSpec::Ladder { .. } => self.raw_continuous(k as f64),
            RabiProfileSpec::IonLaguerre { order, eta, strength } => {
                strength * displacement_element(k, order.abs(), *eta).unwrap_or(0.0)
            }
            RabiProfileSpec::Ats { order, phi_a, e_j, phi_c, epsilon } => {
                ats_strength(*e_j, *phi_c, *epsilon) * displacement_element(k, order.abs(), *phi_a).unwrap_or(0.0)
            }
            RabiProfileSpec::Tabulated { values } => values.get(k).copied().unwrap_or(0.0),
        }
    }

    /// Profile magnitude at integer k, clamped at zero.
    pub fn eval(&self, k: usize) -> f64 {
        self.raw(k).max(0.0)
    }

    fn has_closed_continuous_form(&self) -> bool {
        matches!(
            self,
            RabiProfileSpec::Constant { .. }
                | RabiProfileSpec::LinearCrossing { .. }
                | RabiProfileSpec::IonBessel { .. }
                | RabiProfileSpec::Ladder { .. }
        )
    }

    fn raw_continuous(&self, x: f64) -> f64 {
        match self {
            RabiProfileSpec::Constant { value } => *value,
            RabiProfileSpec::LinearCrossing { k_star, h_star, slope, direction } => {
                let sgn = match direction {
                    Direction::Rising => 1.0,
                    Direction::Falling => -1.0,
                };
                h_star + sgn * slope * (x - k_star)
            }
            RabiProfileSpec::IonBessel { order, eta, strength } => {
                let o = order.unsigned_abs() as u32;
                strength * bessel_j(o, 2.0 * eta * (x + (o as f64 + 1.0) / 2.0).max(0.0).sqrt())
            }
            RabiProfileSpec::Ladder { order, scale } => {
                if *order == 0 {
                    *scale
                } else {
                    scale * (0.5 * (ln_gamma(x + 1.0 + *order as f64) - ln_gamma(x + 1.0))).exp()
                }
            }
            RabiProfileSpec::Tabulated { values } => {
                if x <= 0.0 {
                    return values.first().copied().unwrap_or(0.0);
                }
                let i = x.floor() as usize;
                let t = x - i as f64;
                let a = values.get(i).copied().unwrap_or(0.0);
                let b = values.get(i + 1).copied().unwrap_or(0.0);
                a + t * (b - a)
            }
            _ => pchip(|k| self.raw(k), x),
        }
    }

    /// Continuous interpolant used for crossing refinement: the closed form
    /// where one exists, a monotone cubic through the exact integer samples
    /// for the Laguerre families, piecewise linear for tabulated data.
    pub fn eval_continuous(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        if self.has_closed_continuous_form() || matches!(self, RabiProfileSpec::Tabulated { .. }) {
            self.raw_continuous(x).max(0.0)
        } else {
            pchip(|k| self.raw(k), x).max(0.0)
        }
    }

    /// Analytic derivative where the variant has one.
    fn analytic_slope(&self, x: f64) -> Option<f64> {
        match self {
            RabiProfileSpec::Constant { .. } => Some(0.0),
            RabiProfileSpec::LinearCrossing { slope, direction, .. } => {
                if self.raw_continuous(x) <= 0.0 {
                    Some(0.0)
                } else {
                    Some(match direction {
                        Direction::Rising => *slope,
                        Direction::Falling => -*slope,
                    })
                }
            }
            _ => None,
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.analytic_slope(x).unwrap_or_else(|| (self.eval_continuous(x + 1.0) - self.eval_continuous(x - 1.0)) / 2.0)
    }
}

/// `Ω = ½ E_J φ_c e^{−φ_c²/2} ε`.
pub fn ats_strength(e_j: f64, phi_c: f64, epsilon: f64) -> f64 {
    0.5 * e_j * phi_c * (-phi_c * phi_c / 2.0).exp() * epsilon
}

/// Fritsch–Carlson monotone cubic through integer samples of `f`.
fn pchip(f: impl Fn(usize) -> f64, x: f64) -> f64 {
    let i = x.floor().max(0.0) as usize;
    let t = x - i as f64;
    if t == 0.0 {
        return f(i);
    }
    let y0 = f(i);
    let y1 = f(i + 1);
    let d = y1 - y0;
    let slope_at = |j: usize, left: Option<f64>, right: f64| -> f64 {
        let _ = j;
        match left {
            None => right,
            Some(l) => {
                if l * right <= 0.0 {
                    0.0
                } else {
                    2.0 / (1.0 / l + 1.0 / right)
                }
            }
        }
    };
    let dl = if i > 0 { Some(y0 - f(i - 1)) } else { None };
    let dr = f(i + 2) - y1;
    let m0 = slope_at(i, dl, d);
    let m1 = slope_at(i + 1, Some(d), dr);
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1
}

/// Orders, profiles and rate of `K = â†ʳ f(n̂) − g(n̂) âˡ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NLREScheme {
    pub r: usize,
    pub l: usize,
    pub f_profile: RabiProfileSpec,
    pub g_profile: RabiProfileSpec,
    pub kappa_eff: f64,
    #[serde(default)]
    pub phase_f: f64,
    #[serde(default)]
    pub phase_g: f64,
}

impl NLREScheme {
    pub fn new(
        r: usize,
        l: usize,
        f_profile: RabiProfileSpec,
        g_profile: RabiProfileSpec,
        kappa_eff: f64,
    ) -> Result<NLREScheme> {
        let s = NLREScheme { r, l, f_profile, g_profile, kappa_eff, phase_f: 0.0, phase_g: 0.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r + self.l == 0 {
            return invalid("scheme needs r + l >= 1");
        }
        if !(self.kappa_eff > 0.0) {
            return invalid("kappa_eff must be positive");
        }
        if !self.phase_f.is_finite() || !self.phase_g.is_finite() {
            return invalid("profile phases must be finite");
        }
        self.f_profile.validate()?;
        self.g_profile.validate()
    }

    pub fn d(&self) -> usize {
        self.r + self.l
    }

    pub fn f(&self, k: usize) -> f64 {
        self.f_profile.eval(k)
    }

    pub fn g(&self, k: usize) -> f64 {
        self.g_profile.eval(k)
    }

    /// `K = â^d − α^d` (up to a global sign): `f̃ = α^d`, `g̃ = √((k+1)…(k+d))`.
    pub fn standard_cat(d: usize, alpha: f64, kappa_eff: f64) -> Result<NLREScheme> {
        NLREScheme::new(
            0,
            d,
            RabiProfileSpec::Constant { value: alpha.powi(d as i32) },
            RabiProfileSpec::Ladder { order: d as u32, scale: 1.0 },
            kappa_eff,
        )
    }

    /// Linear profiles crossing at `(k*, h*)`: `f̃` falls with slope `s_f`
    /// from `k*`, `g̃` rises with slope `s_g` anchored at `k* + r` so that
    /// `f̃(k*) = g̃(k*+r) = h*`.
    pub fn linear(
        r: usize,
        l: usize,
        k_star: f64,
        h_star: f64,
        s_f: f64,
        s_g: f64,
        kappa_eff: f64,
    ) -> Result<NLREScheme> {
        NLREScheme::new(
            r,
            l,
            RabiProfileSpec::LinearCrossing { k_star, h_star, slope: s_f, direction: Direction::Falling },
            RabiProfileSpec::LinearCrossing {
                k_star: k_star + r as f64,
                h_star,
                slope: s_g,
                direction: Direction::Rising,
            },
            kappa_eff,
        )
    }

    /// Linear scheme from the angles between each profile and the vertical.
    pub fn linear_from_angles(
        r: usize,
        l: usize,
        k_star: f64,
        h_star: f64,
        theta_f: f64,
        theta_g: f64,
        kappa_eff: f64,
    ) -> Result<NLREScheme> {
        let f = linear_profile_from_angles(k_star, h_star, theta_f, Direction::Falling)?;
        let g = linear_profile_from_angles(k_star + r as f64, h_star, theta_g, Direction::Rising)?;
        NLREScheme::new(r, l, f, g, kappa_eff)
    }
}

/// Crossing of `|f̃(k)|` with `|g̃(k+r)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub k_star: f64,
    pub h_star: f64,
    pub slope_f: f64,
    pub slope_g: f64,
    /// True when `|f̃(k)|/|g̃(k+r)|` passes from above 1 to below 1.
    pub gain_switch: bool,
}

/// Profile value at integer k.
pub fn eval_profile(spec: &RabiProfileSpec, k: usize) -> f64 {
    spec.eval(k)
}

/// All sign changes of `|f̃(k)| − |g̃(k+r)|` in `[k_min, k_max]`, refined by
/// bisection on the continuous interpolant.
pub fn find_crossing(scheme: &NLREScheme, k_min: usize, k_max: usize) -> Result<Vec<Crossing>> {
    if k_max <= k_min {
        return invalid("find_crossing needs k_max > k_min");
    }
    let r = scheme.r as f64;
    let diff = |x: f64| scheme.f_profile.eval_continuous(x) - scheme.g_profile.eval_continuous(x + r);
    // Linear profiles are defined with the clamp; only oscillating ones warn.
    let sign_flip =
        |p: &RabiProfileSpec, k: usize| !matches!(p, RabiProfileSpec::LinearCrossing { .. }) && p.raw(k) < 0.0;
    let clamped =
        (k_min..=k_max).any(|k| sign_flip(&scheme.f_profile, k) || sign_flip(&scheme.g_profile, k + scheme.r));
    if clamped {
        log::warn!("negative profile values clamped to zero in [{k_min}, {k_max}]");
    }
    let samples: Vec<(usize, f64)> = (k_min..=k_max).map(|k| (k, diff(k as f64))).filter(|&(_, v)| v != 0.0).collect();
    let mut out = Vec::new();
    // Exact zeros at integer points between opposite-signed neighbours.
    for w in samples.windows(2) {
        let (ka, va) = w[0];
        let (kb, vb) = w[1];
        if va.signum() == vb.signum() {
            continue;
        }
        let (mut lo, mut hi) = (ka as f64, kb as f64);
        let mut vlo = va;
        for _ in 0..200 {
            if hi - lo < 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let vm = diff(mid);
            if vm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if vm.signum() == vlo.signum() {
                lo = mid;
                vlo = vm;
            } else {
                hi = mid;
            }
        }
        let k = 0.5 * (lo + hi);
        let h = scheme.f_profile.eval_continuous(k);
        if h <= 0.0 {
            continue;
        }
        out.push(Crossing {
            k_star: k,
            h_star: h,
            slope_f: scheme.f_profile.slope(k),
            slope_g: scheme.g_profile.slope(k + r),
            gain_switch: va > 0.0 && vb < 0.0,
        });
    }
    Ok(out)
}

/// First stabilizing crossing in range, or a no-crossing error.
pub fn stabilizing_crossing(scheme: &NLREScheme, k_min: usize, k_max: usize) -> Result<Crossing> {
    find_crossing(scheme, k_min, k_max)?
        .into_iter()
        .find(|c| c.gain_switch)
        .ok_or_else(|| crate::Error::NoCrossing(format!("no gain-switch crossing in [{k_min}, {k_max}]")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converges,
    Diverges,
    Undetermined,
}

/// Tail test of `|f̃(k)/g̃(k+r)|` over `[horizon−20, horizon]`.
pub fn check_convergence(scheme: &NLREScheme, horizon: usize) -> Convergence {
    let lo = horizon.saturating_sub(20);
    let mut ratios = Vec::with_capacity(21);
    for k in lo..=horizon {
        let f = scheme.f(k).abs();
        let g = scheme.g(k + scheme.r).abs();
        if g == 0.0 {
            if f == 0.0 {
                // Chain already terminated here.
                ratios.push(0.0);
                continue;
            }
            return Convergence::Undetermined;
        }
        ratios.push(f / g);
    }
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    if max < 1.0 - 1e-6 {
        Convergence::Converges
    } else if min > 1.0 + 1e-6 {
        Convergence::Diverges
    } else {
        Convergence::Undetermined
    }
}

/// Linear profile through `(k*, h*)` with slope `s = cot θ`, θ measured from
/// the vertical axis.
pub fn linear_profile_from_angles(
    k_star: f64,
    h_star: f64,
    theta: f64,
    direction: Direction,
) -> Result<RabiProfileSpec> {
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return invalid(format!("angle {theta} outside (0, pi/2)"));
    }
    let spec = RabiProfileSpec::LinearCrossing { k_star, h_star, slope: 1.0 / theta.tan(), direction };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::bessel_j_series;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn eval_examples() {
        let alpha: f64 = 3.5;
        let c = RabiProfileSpec::Constant { value: alpha.powi(3) };
        assert_eq!(c.eval(0), alpha.powi(3));
        assert_eq!(c.eval(77), alpha.powi(3));
        let lin =
            RabiProfileSpec::LinearCrossing { k_star: 10.0, h_star: 20.0, slope: 0.7, direction: Direction::Falling };
        assert_eq!(lin.eval(10), 20.0);
        assert_eq!(lin.eval(200), 0.0);
        let b = RabiProfileSpec::IonBessel { order: 1, eta: 0.3, strength: 1.0 };
        let oracle = bessel_j_series(1, 2.0 * 0.3 * 6f64.sqrt(), 50);
        assert!((b.eval(5) - oracle).abs() < 1e-12);
    }

    #[test]
    fn standard_cat_crossing_matches_scalar_root() {
        let alpha: f64 = 3.5;
        let s = NLREScheme::standard_cat(3, alpha, 1.0).unwrap();
        let cr = find_crossing(&s, 0, 60).unwrap();
        assert_eq!(cr.len(), 1);
        assert!(cr[0].gain_switch);
        // Oracle: bisection on (x+1)(x+2)(x+3) = α⁶.
        let target = alpha.powi(6);
        let (mut lo, mut hi) = (0.0f64, 60.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (mid + 1.0) * (mid + 2.0) * (mid + 3.0) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((cr[0].k_star - lo).abs() < 1e-6);
        assert!((cr[0].h_star - alpha.powi(3)).abs() < 1e-9);
    }

    #[test]
    fn constructed_linear_crossing_is_recovered() {
        for (r, l) in [(0, 2), (1, 1), (3, 2), (2, 0)] {
            let s = NLREScheme::linear(r, l, 10.0, 20.0, 0.8, 1.3, 1.0).unwrap();
            let cr = find_crossing(&s, 0, 60).unwrap();
            assert_eq!(cr.len(), 1);
            assert!((cr[0].k_star - 10.0).abs() < 1e-6);
            assert!((cr[0].h_star - 20.0).abs() < 1e-9);
            assert_eq!(cr[0].slope_f, -0.8);
            assert_eq!(cr[0].slope_g, 1.3);
            assert!(cr[0].gain_switch);
        }
    }

    #[test]
    fn convergence_examples() {
        let cat = NLREScheme::standard_cat(2, 2.0, 1.0).unwrap();
        assert_eq!(check_convergence(&cat, 100), Convergence::Converges);
        let same = NLREScheme::new(
            0,
            2,
            RabiProfileSpec::Ladder { order: 2, scale: 1.0 },
            RabiProfileSpec::Ladder { order: 2, scale: 1.0 },
            1.0,
        )
        .unwrap();
        assert_eq!(check_convergence(&same, 100), Convergence::Undetermined);
        let flipped = NLREScheme::new(
            0,
            2,
            RabiProfileSpec::Ladder { order: 2, scale: 1.0 },
            RabiProfileSpec::Constant { value: 4.0 },
            1.0,
        )
        .unwrap();
        assert_eq!(check_convergence(&flipped, 100), Convergence::Diverges);
        // Two Bessel profiles: the tail passes through zeros of g.
        let bes = NLREScheme::new(
            0,
            2,
            RabiProfileSpec::IonBessel { order: 0, eta: 0.3, strength: 0.2 },
            RabiProfileSpec::IonBessel { order: 2, eta: 0.3, strength: 1.0 },
            1.0,
        )
        .unwrap();
        assert_eq!(check_convergence(&bes, 120), Convergence::Undetermined);
    }

    #[test]
    fn ion_scheme_has_gain_switch() {
        let s = NLREScheme::new(
            0,
            4,
            RabiProfileSpec::IonLaguerre { order: 0, eta: 0.3, strength: 0.2 },
            RabiProfileSpec::IonLaguerre { order: 4, eta: 0.3, strength: 1.0 },
            1.0,
        )
        .unwrap();
        let cr = find_crossing(&s, 0, 40).unwrap();
        assert!(cr.iter().any(|c| c.gain_switch));
    }

    #[test]
    fn angle_conventions() {
        let s = match linear_profile_from_angles(0.0, 1.0, PI / 4.0, Direction::Rising).unwrap() {
            RabiProfileSpec::LinearCrossing { slope, .. } => slope,
            _ => unreachable!(),
        };
        assert!((s - 1.0).abs() < 1e-15);
        let flat = match linear_profile_from_angles(0.0, 1.0, PI / 2.0 - 1e-9, Direction::Rising).unwrap() {
            RabiProfileSpec::LinearCrossing { slope, .. } => slope,
            _ => unreachable!(),
        };
        assert!(flat < 1e-8);
        assert!(linear_profile_from_angles(0.0, 1.0, PI / 2.0, Direction::Rising).is_err());
        assert!(linear_profile_from_angles(0.0, 1.0, 0.0, Direction::Rising).is_err());
        let s = NLREScheme::linear_from_angles(0, 2, 20.0, 20.0, PI / 3.0, PI / 3.0, 1.0).unwrap();
        let cr = find_crossing(&s, 0, 80).unwrap();
        assert!((cr[0].k_star - 20.0).abs() < 1e-6);
    }

    #[test]
    fn profile_serde_round_trip() {
        let specs = vec![
            RabiProfileSpec::Constant { value: 2.0 },
            RabiProfileSpec::LinearCrossing { k_star: 1.0, h_star: 2.0, slope: 0.5, direction: Direction::Rising },
            RabiProfileSpec::IonLaguerre { order: -4, eta: 0.3, strength: 1.0 },
            RabiProfileSpec::Tabulated { values: vec![1.0, 2.5] },
        ];
        for s in specs {
            let txt = serde_json::to_string(&s).unwrap();
            let back: RabiProfileSpec = serde_json::from_str(&txt).unwrap();
            assert_eq!(back, s);
        }
    }

    proptest! {
        #[test]
        fn angle_built_crossings_are_exact(
            k_star in 3.0f64..40.0, h_star in 1.0f64..50.0,
            tf in 0.2f64..1.4, tg in 0.2f64..1.4, r in 0usize..4, l in 1usize..4,
        ) {
            let s = NLREScheme::linear_from_angles(r, l, k_star, h_star, tf, tg, 1.0).unwrap();
            let cr = find_crossing(&s, 0, 200).unwrap();
            let c = cr.iter().find(|c| c.gain_switch).unwrap();
            prop_assert!((c.k_star - k_star).abs() < 1e-6);
            prop_assert!((c.h_star - h_star).abs() < 1e-9);
        }

        #[test]
        fn bessel_and_laguerre_agree_small_eta(k in 0usize..=60, o in 0i64..=4, eta in 0.001f64..=0.5) {
            let a = RabiProfileSpec::IonLaguerre { order: o, eta, strength: 1.0 }.raw(k);
            let b = RabiProfileSpec::IonBessel { order: o, eta, strength: 1.0 }.raw(k);
            prop_assert!((a - b).abs() < 0.01);
        }

        #[test]
        fn crossing_invariant_under_joint_rescaling(c in 0.01f64..100.0, alpha in 1.5f64..5.0) {
            let base = NLREScheme::standard_cat(2, alpha, 1.0).unwrap();
            let mut scaled = base.clone();
            scaled.f_profile = RabiProfileSpec::Constant { value: c * alpha * alpha };
            scaled.g_profile = RabiProfileSpec::Ladder { order: 2, scale: c };
            let a = find_crossing(&base, 0, 100).unwrap()[0];
            let b = find_crossing(&scaled, 0, 100).unwrap()[0];
            prop_assert!((a.k_star - b.k_star).abs() < 1e-9);
            prop_assert!((b.h_star / a.h_star - c).abs() < 1e-9 * c.max(1.0));
        }
    }
}
