//! Compressed sparse row storage for banded Fock operators and large
//! superoperators.

use crate::linalg::{Mat, Vector, C64, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<C64>,
}

impl Csr {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut trip: Vec<(usize, usize, C64)>) -> Csr {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut data: Vec<C64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, cidx, v) in trip {
            if last == Some((r, cidx)) {
                *data.last_mut().unwrap() += v;
                continue;
            }
            indices.push(cidx);
            data.push(v);
            indptr[r + 1] += 1;
            last = Some((r, cidx));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Csr { rows, cols, indptr, indices, data }
    }

    pub fn from_dense(a: &Mat) -> Csr {
        let mut trip = Vec::new();
        for ((i, j), &v) in a.indexed_iter() {
            if v != ZERO {
                trip.push((i, j, v));
            }
        }
        Csr::from_triplets(a.nrows(), a.ncols(), trip)
    }

    pub fn to_dense(&self) -> Mat {
        let mut out = Mat::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out[[i, self.indices[p]]] += self.data[p];
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |p| (self.indices[p], self.data[p]))
    }

    pub fn dagger(&self) -> Csr {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v.conj()));
            }
        }
        Csr::from_triplets(self.cols, self.rows, trip)
    }

    pub fn matvec(&self, x: &Vector) -> Vector {
        let mut y = Vector::zeros(self.rows);
        for i in 0..self.rows {
            let mut acc = ZERO;
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[p] * x[self.indices[p]];
            }
            y[i] = acc;
        }
        y
    }

    /// `self · B` for dense `B`.
    pub fn mul_dense(&self, b: &Mat) -> Mat {
        let m = b.ncols();
        let mut out = Mat::zeros((self.rows, m));
        for i in 0..self.rows {
            let mut orow = out.row_mut(i);
            for p in self.indptr[i]..self.indptr[i + 1] {
                let v = self.data[p];
                let brow = b.row(self.indices[p]);
                orow.zip_mut_with(&brow, |o, &x| *o += v * x);
            }
        }
        out
    }

    /// `A · self` for dense `A`.
    pub fn left_mul_dense(&self, a: &Mat) -> Mat {
        let n = a.nrows();
        let mut out = Mat::zeros((n, self.cols));
        for k in 0..self.rows {
            for p in self.indptr[k]..self.indptr[k + 1] {
                let v = self.data[p];
                let j = self.indices[p];
                let acol = a.column(k);
                let mut ocol = out.column_mut(j);
                ocol.zip_mut_with(&acol, |o, &x| *o += x * v);
            }
        }
        out
    }

    pub fn mul_csr(&self, b: &Csr) -> Csr {
        let mut trip = Vec::new();
        for i in 0..self.rows {
            for (k, v) in self.row(i) {
                for (j, w) in b.row(k) {
                    trip.push((i, j, v * w));
                }
            }
        }
        Csr::from_triplets(self.rows, b.cols, trip)
    }

    pub fn scale(&self, s: C64) -> Csr {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, b: &Csr) -> Csr {
        let mut trip = Vec::with_capacity(self.nnz() + b.nnz());
        for i in 0..self.rows {
            trip.extend(self.row(i).map(|(j, v)| (i, j, v)));
            trip.extend(b.row(i).map(|(j, v)| (i, j, v)));
        }
        Csr::from_triplets(self.rows, self.cols, trip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn sample(n: usize, seed: u64) -> Mat {
        let mut s = seed;
        Mat::from_shape_fn((n, n), |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let v = ((s >> 33) as f64) / (1u64 << 31) as f64 - 0.5;
            if v.abs() < 0.25 {
                ZERO
            } else {
                C64::new(v, 0.5 * v * v)
            }
        })
    }

    #[test]
    fn products_match_dense() {
        let a = sample(7, 3);
        let b = sample(7, 11);
        let sa = Csr::from_dense(&a);
        assert_eq!(sa.to_dense(), a);
        let d1 = sa.mul_dense(&b) - a.dot(&b);
        let d2 = sa.left_mul_dense(&b) - b.dot(&a);
        let d3 = sa.mul_csr(&Csr::from_dense(&b)).to_dense() - a.dot(&b);
        for d in [d1, d2, d3] {
            assert!(d.iter().all(|z| z.norm() < 1e-14));
        }
        assert_eq!(sa.dagger().to_dense(), a.t().mapv(|z| z.conj()));
        let x = Vector::from_shape_fn(7, |i| c(i as f64));
        assert!((sa.matvec(&x) - a.dot(&x)).iter().all(|z| z.norm() < 1e-14));
    }
}
