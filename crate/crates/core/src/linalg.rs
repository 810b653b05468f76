//! Dense complex linear algebra helpers shared by every module.
//!
//! Vectorization is column-stacking throughout the crate: `vec(ρ)[i + n·j] =
//! ρ[i, j]`, so that `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use ndarray::{s, Array1, Array2, ArrayView2, Zip};
use ndarray_linalg::{Eigh, Inverse, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat = Array2<C64>;
pub type Vector = Array1<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(n: usize) -> Mat {
    Mat::eye(n)
}

pub fn zeros(n: usize, m: usize) -> Mat {
    Mat::zeros((n, m))
}

/// Conjugate transpose.
pub fn dagger(a: &Mat) -> Mat {
    a.t().mapv(|z| z.conj())
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Mat::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            let mut block = out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            Zip::from(&mut block).and(b).for_each(|o, &bv| *o = aij * bv);
        }
    }
    out
}

pub fn trace(a: &Mat) -> C64 {
    a.diag().sum()
}

pub fn fro_norm(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &Vector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximum absolute column sum.
pub fn norm1(a: &Mat) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(a: &Mat) -> f64 {
    max_abs(&(a - &dagger(a)))
}

/// `(A + A†)/2`.
pub fn hermitize(a: &Mat) -> Mat {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a.dot(b) - b.dot(a)
}

pub fn outer(u: &Vector, v: &Vector) -> Mat {
    let n = u.len();
    let m = v.len();
    Mat::from_shape_fn((n, m), |(i, j)| u[i] * v[j].conj())
}

pub fn inner(u: &Vector, v: &Vector) -> C64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// `⟨ψ|A|ψ⟩`.
pub fn expect(a: &Mat, psi: &Vector) -> C64 {
    inner(psi, &a.dot(psi))
}

/// Column-stacking vectorization.
pub fn vectorize(a: &Mat) -> Vector {
    let (n, m) = a.dim();
    let mut v = Vector::zeros(n * m);
    for j in 0..m {
        for i in 0..n {
            v[i + n * j] = a[[i, j]];
        }
    }
    v
}

pub fn unvectorize(v: &Vector, n: usize) -> Mat {
    let m = v.len() / n;
    Mat::from_shape_fn((n, m), |(i, j)| v[i + n * j])
}

pub fn to_complex(a: &Array2<f64>) -> Mat {
    a.mapv(c)
}

pub fn real_part(a: &Mat) -> Array2<f64> {
    a.mapv(|z| z.re)
}

/// Eigen-decomposition of a Hermitian matrix (ascending eigenvalues).
pub fn eigh(a: &Mat) -> Result<(Array1<f64>, Mat)> {
    let h = hermitize(a);
    let (w, v) = h.eigh(UPLO::Upper)?;
    Ok((w, v))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &Mat) -> Result<f64> {
    let (w, _) = eigh(a)?;
    Ok(w.iter().cloned().fold(f64::INFINITY, f64::min))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    a.inv().map_err(Error::from)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé
/// approximant.
pub fn expm(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension("expm of non-square matrix".into()));
    }
    let nrm = norm1(a);
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a = a.mapv(|z| z * scale);
    let b = PADE13;
    let id = eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let lin = |x: &Mat, y: &Mat, z: &Mat, cx: f64, cy: f64, cz: f64| -> Mat {
        let mut out = x.mapv(|v| v * cx);
        out.scaled_add(c(cy), y);
        out.scaled_add(c(cz), z);
        out
    };
    let u_inner = a6.dot(&lin(&a6, &a4, &a2, b[13], b[11], b[9]));
    let mut u_sum = u_inner + lin(&a6, &a4, &a2, b[7], b[5], b[3]);
    u_sum.scaled_add(c(b[1]), &id);
    let u = a.dot(&u_sum);
    let v_inner = a6.dot(&lin(&a6, &a4, &a2, b[12], b[10], b[8]));
    let mut v = v_inner + lin(&a6, &a4, &a2, b[6], b[4], b[2]);
    v.scaled_add(c(b[0]), &id);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = inverse(&q)?.dot(&p);
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

/// `A·B·C` without forming the transpose copies twice.
pub fn sandwich(a: &Mat, b: &Mat, c_: &Mat) -> Mat {
    a.dot(&b.dot(c_))
}

pub fn view_dagger(a: ArrayView2<C64>) -> Mat {
    a.t().mapv(|z| z.conj())
}
