//! Special functions evaluated in the log domain or by stable recurrences.

use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs_ln_gamma(x)
}

/// `ln n!`.
pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        statrs_ln_gamma(n as f64 + 1.0)
    }
}

/// Bessel function of the first kind `J_n(x)` for integer order.
///
/// Miller's backward recurrence normalised with `J₀ + 2ΣJ₂ₖ = 1`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 1 { -v } else { v };
    }
    let big = n.max(x.ceil() as u32) as f64;
    let mut m = (big + 30.0 + (60.0 * big).sqrt()) as usize;
    m += m % 2;
    let tox = 2.0 / x;
    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut ans = 0.0;
    let mut sum = 0.0;
    for k in (1..=m).rev() {
        let jm1 = k as f64 * tox * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            ans *= 1e-250;
            sum *= 1e-250;
        }
        // j now holds J_{k-1}
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            sum += j;
        }
        if (k - 1) as u32 == n {
            ans = j;
        }
    }
    let norm = 2.0 * sum + j;
    ans / norm
}

/// Power series of `J_n(x)` summed term by term; oracle for small arguments.
pub fn bessel_j_series(n: u32, x: f64, terms: usize) -> f64 {
    let half = x / 2.0;
    let mut total = 0.0;
    for m in 0..terms {
        let lg = (2 * m + n as usize) as f64 * half.abs().ln() - ln_factorial(m) - ln_factorial(m + n as usize);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let sx = if half < 0.0 && (2 * m + n as usize) % 2 == 1 { -1.0 } else { 1.0 };
        total += sign * sx * lg.exp();
    }
    total
}

/// Gauss hypergeometric series `₂F₁(a, b; c; z)`.
///
/// Summed until the terms stop contributing; terminates exactly when `a` or
/// `b` is a non-positive integer. Returns `None` when the series does not
/// converge within the term budget.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Option<f64> {
    pfq(&[a, b], &[c], z)
}

/// Generalised hypergeometric series `₃F₂(a₁, a₂, a₃; b₁, b₂; z)`.
pub fn hyp3f2(a: [f64; 3], b: [f64; 2], z: f64) -> Option<f64> {
    pfq(&a, &b, z)
}

fn pfq(a: &[f64], b: &[f64], z: f64) -> Option<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let terminating = a.iter().any(|&x| x <= 0.0 && x.fract() == 0.0);
    for n in 0..20000 {
        let nf = n as f64;
        let num: f64 = a.iter().map(|&x| x + nf).product();
        let den: f64 = b.iter().map(|&x| x + nf).product::<f64>() * (nf + 1.0);
        if num == 0.0 {
            return Some(sum);
        }
        if den == 0.0 {
            return None;
        }
        term *= num / den * z;
        sum += term;
        if !term.is_finite() || !sum.is_finite() {
            return None;
        }
        if !terminating && n > 5 && term.abs() <= 1e-17 * sum.abs() {
            return Some(sum);
        }
    }
    if terminating {
        Some(sum)
    } else {
        None
    }
}

/// Normalised associated Laguerre sequence.
///
/// Returns `u_k = √(k!/(k+r)!) · e^{−λ²/2} · λʳ · L_k^{(r)}(λ²)` for
/// `k = 0..len`, computed by the three-term recurrence on the normalised
/// functions with running rescaling, so no factorial is ever formed.
pub fn laguerre_normalized_seq(len: usize, r: usize, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    if lambda == 0.0 {
        if r == 0 {
            out.iter_mut().for_each(|v| *v = 1.0);
        }
        return out;
    }
    let x = lambda * lambda;
    let rf = r as f64;
    let sign = if lambda < 0.0 && r % 2 == 1 { -1.0 } else { 1.0 };
    // Recurrence runs on u_k / exp(log_scale); u_0 carries the λʳe^{−x/2}/√(r!) prefactor.
    let mut log_scale = rf * lambda.abs().ln() - 0.5 * x - 0.5 * ln_factorial(r);
    let mut prev = 0.0;
    let mut cur = 1.0;
    out[0] = sign * log_scale.exp();
    for k in 0..len - 1 {
        let kf = k as f64;
        let next =
            ((2.0 * kf + 1.0 + rf - x) * cur - (kf * (kf + rf)).sqrt() * prev) / ((kf + 1.0) * (kf + 1.0 + rf)).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > 1e150 {
            prev *= 1e-150;
            cur *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
        out[k + 1] = if cur == 0.0 { 0.0 } else { sign * cur.signum() * (log_scale + cur.abs().ln()).exp() };
    }
    out
}

/// `J₀(x)`, convenience.
pub fn bessel_j0(x: f64) -> f64 {
    bessel_j(0, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bessel_reference_values() {
        // Abramowitz & Stegun tables.
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j(2, 5.0) - 0.046_565_116_277_752_2).abs() < 1e-14);
        assert!((bessel_j(0, 2.404_825_557_695_773)).abs() < 1e-14);
        // scipy.special.jv reference values at larger arguments.
        assert!((bessel_j(2, 7.370_373_046_275_636_5) + 0.254_117_658_705_436_2).abs() < 1e-14);
        assert!((bessel_j(0, 30.0) + 0.086_367_983_581_040_21).abs() < 1e-14);
        assert!((bessel_j(3, 45.5) + 0.087_257_122_226_187_03).abs() < 1e-14);
    }

    #[test]
    fn hyp2f1_closed_forms() {
        // ₂F₁(1,1;2;z) = −ln(1−z)/z
        let z = 0.3;
        assert!((hyp2f1(1.0, 1.0, 2.0, z).unwrap() + (1.0 - z).ln() / z).abs() < 1e-14);
        // Terminating: ₂F₁(−2, b; c; z) polynomial.
        let v = hyp2f1(-2.0, 3.0, 4.0, 2.0).unwrap();
        let expect = 1.0 - 2.0 * 3.0 / 4.0 * 2.0 + 3.0 * 4.0 / (4.0 * 5.0) * 4.0;
        assert!((v - expect).abs() < 1e-13);
        assert!(hyp2f1(0.5, 0.5, 1.0, 1.5).is_none());
    }

    #[test]
    fn laguerre_matches_explicit_polynomial() {
        let lambda: f64 = 0.8;
        let x = lambda * lambda;
        let seq = laguerre_normalized_seq(4, 2, lambda);
        // L_2^{(2)}(x) = (x² − 8x + 12)/2
        let l22 = (x * x - 8.0 * x + 12.0) / 2.0;
        let expect = (2.0f64 / 24.0).sqrt() * (-x / 2.0).exp() * lambda.powi(2) * l22;
        assert!((seq[2] - expect).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bessel_matches_series(n in 0u32..6, x in 0.01f64..5.0) {
            let a = bessel_j(n, x);
            let b = bessel_j_series(n, x, 80);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn laguerre_sequence_stays_finite(r in 0usize..6, lambda in 0.0f64..12.0) {
            let seq = laguerre_normalized_seq(201, r, lambda);
            prop_assert!(seq.iter().all(|v| v.is_finite() && v.abs() <= 1.0 + 1e-9));
        }
    }
}
