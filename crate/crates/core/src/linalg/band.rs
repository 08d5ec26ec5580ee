//! Hermitian band matrices and their `LDLᴴ` factorization.
//!
//! The factorization is unpivoted. Its diagonal `D` gives the inertia of
//! `A - σI` (Sylvester), which is what the spectrum slicer counts with; the
//! same factor doubles as the solver for shifted inverse iteration.

use super::Field;

/// Lower band storage: entry `(row, col)` with `0 <= row - col <= kd` lives
/// at `data[col * (kd + 1) + (row - col)]`.
#[derive(Debug, Clone)]
pub struct HermitianBand<T> {
    n: usize,
    kd: usize,
    data: Vec<T>,
}

impl<T: Field> HermitianBand<T> {
    pub fn zeros(n: usize, kd: usize) -> Self {
        HermitianBand {
            n,
            kd,
            data: vec![T::from_real(0.0); n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        col * (self.kd + 1) + (row - col)
    }

    /// Entry `(i, j)` of the full Hermitian matrix.
    pub fn get(&self, i: usize, j: usize) -> T {
        if i >= j {
            if i - j > self.kd {
                T::from_real(0.0)
            } else {
                self.data[self.idx(i, j)]
            }
        } else {
            self.get(j, i).conjugate()
        }
    }

    /// Adds `v` at `(i, j)` and, implicitly, `conj(v)` at `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (row, col, val) = if i >= j { (i, j, v) } else { (j, i, v.conjugate()) };
        assert!(row - col <= self.kd, "entry ({i}, {j}) outside the band");
        let k = self.idx(row, col);
        self.data[k] += val;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.n;
        let w = self.kd + 1;
        let mut y = vec![T::from_real(0.0); n];
        for col in 0..n {
            let base = col * w;
            let xc = x[col];
            y[col] += self.data[base] * xc;
            let m = self.kd.min(n - 1 - col);
            let mut acc = T::from_real(0.0);
            for d in 1..=m {
                let a = self.data[base + d];
                y[col + d] += a * xc;
                acc += a.conjugate() * x[col + d];
            }
            y[col] += acc;
        }
        y
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.n;
        let mut radius = vec![0.0_f64; n];
        for col in 0..n {
            let m = self.kd.min(n - 1 - col);
            for d in 1..=m {
                let a = self.data[self.idx(col + d, col)].modulus();
                radius[col] += a;
                radius[col + d] += a;
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, r) in radius.iter().enumerate() {
            let d = self.data[self.idx(i, i)].real();
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// `LDLᴴ` factorization of `A - shift·I`.
    pub fn factor(&self, shift: f64) -> BandLdl<T> {
        let n = self.n;
        let kd = self.kd;
        let w = kd + 1;
        let mut a = self.data.clone();
        for i in 0..n {
            a[i * w] -= T::from_real(shift);
        }
        let pivmin = f64::EPSILON * self.norm_bound().max(f64::MIN_POSITIVE) * 1e-4;
        let mut d = vec![0.0; n];
        for k in 0..n {
            let mut dk = a[k * w].real();
            if dk.abs() < pivmin {
                dk = -pivmin;
            }
            d[k] = dk;
            let m = kd.min(n - 1 - k);
            let inv = 1.0 / dk;
            for i in 1..=m {
                a[k * w + i] = a[k * w + i].scale(inv);
            }
            for j in 1..=m {
                let ljc = a[k * w + j].conjugate().scale(dk);
                let col = (k + j) * w;
                for i in j..=m {
                    let lik = a[k * w + i];
                    a[col + (i - j)] -= lik * ljc;
                }
            }
        }
        BandLdl { n, kd, l: a, d }
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        self.factor(x).negative_pivots()
    }
}

/// Unit lower triangular band factor `L` (strict part stored) and diagonal `D`.
pub struct BandLdl<T> {
    n: usize,
    kd: usize,
    l: Vec<T>,
    d: Vec<f64>,
}

impl<T: Field> BandLdl<T> {
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    /// Solves `(A - σI) x = b` in place.
    pub fn solve(&self, b: &mut [T]) {
        let n = self.n;
        let w = self.kd + 1;
        for k in 0..n {
            let m = self.kd.min(n - 1 - k);
            let bk = b[k];
            for i in 1..=m {
                b[k + i] -= self.l[k * w + i] * bk;
            }
        }
        for k in 0..n {
            b[k] = b[k].scale(1.0 / self.d[k]);
        }
        for k in (0..n).rev() {
            let m = self.kd.min(n - 1 - k);
            let mut acc = b[k];
            for i in 1..=m {
                acc -= self.l[k * w + i].conjugate() * b[k + i];
            }
            b[k] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn sample_complex(n: usize, kd: usize) -> HermitianBand<Complex64> {
        let mut a = HermitianBand::zeros(n, kd);
        for i in 0..n {
            a.add(i, i, Complex64::new(((i * 37) % 11) as f64 - 5.0, 0.0));
            for d in 1..=kd.min(n - 1 - i) {
                let re = (((i + 3 * d) * 17) % 7) as f64 * 0.3 - 1.0;
                let im = (((i * d) * 13) % 5) as f64 * 0.2 - 0.4;
                a.add(i + d, i, Complex64::new(re, im));
            }
        }
        a
    }

    fn dense(a: &HermitianBand<Complex64>) -> DMatrix<Complex64> {
        DMatrix::from_fn(a.dim(), a.dim(), |i, j| a.get(i, j))
    }

    #[test]
    fn inertia_matches_dense_spectrum() {
        let a = sample_complex(30, 4);
        let eig = dense(&a).symmetric_eigen();
        for x in [-6.0, -2.5, 0.0, 1.3, 4.0, 9.0] {
            let want = eig.eigenvalues.iter().filter(|&&l| l < x).count();
            assert_eq!(a.count_below(x), want, "x = {x}");
        }
    }

    #[test]
    fn ldl_solve_inverts_shifted_matrix() {
        let a = sample_complex(25, 3);
        let shift = 0.37;
        let f = a.factor(shift);
        let b: Vec<Complex64> = (0..25).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut x = b.clone();
        f.solve(&mut x);
        let ax = a.matvec(&x);
        for i in 0..25 {
            let r = ax[i] - x[i] * shift - b[i];
            assert!(r.norm() < 1e-9, "row {i}: {r}");
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample_complex(12, 5);
        let x: Vec<Complex64> = (0..12).map(|i| Complex64::new(1.0 / (i + 1) as f64, -(i as f64))).collect();
        let y = a.matvec(&x);
        let yd = dense(&a) * nalgebra::DVector::from_vec(x);
        for i in 0..12 {
            assert!((y[i] - yd[i]).norm() < 1e-12);
        }
    }
}
