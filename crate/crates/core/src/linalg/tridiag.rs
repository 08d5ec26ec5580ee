//! Real symmetric tridiagonal eigenproblems.
//!
//! Eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
//! iteration on a partially pivoted LU factorization of `T - σI`. Only the
//! eigenpairs that are asked for are ever computed, which is what makes
//! channel-by-channel spectra on fine grids cheap.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix with diagonal `d` and off-diagonal `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl SymTridiag {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Self {
        assert!(
            d.len() == e.len() + 1 || (d.is_empty() && e.is_empty()),
            "off-diagonal must have length n - 1"
        );
        SymTridiag { d, e }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut rad = 0.0;
            if i > 0 {
                rad += self.e[i - 1].abs();
            }
            if i + 1 < n {
                rad += self.e[i].abs();
            }
            lo = lo.min(self.d[i] - rad);
            hi = hi.max(self.d[i] + rad);
        }
        (lo, hi)
    }

    /// Infinity norm, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    fn pivmin(&self) -> f64 {
        let emax = self.e.iter().fold(1.0_f64, |m, &x| m.max(x * x));
        f64::MIN_POSITIVE * emax / f64::EPSILON
    }

    /// Number of eigenvalues strictly below `x` (Sturm count).
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = self.pivmin();
        let mut count = 0;
        let mut q = self.d[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            q = self.d[i] - x - self.e[i - 1] * self.e[i - 1] / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn kth_eigenvalue(&self, k: usize) -> f64 {
        if self.len() == 1 {
            return self.d[0];
        }
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        lo -= 2.0 * f64::EPSILON * scale;
        hi += 2.0 * f64::EPSILON * scale;
        let tol = 4.0 * f64::EPSILON * scale + self.pivmin();
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvalues lying in the closed interval `[lo, hi]`, ascending.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let (first, last) = self.index_range(lo, hi);
        (first..last).map(|k| self.kth_eigenvalue(k)).collect()
    }

    /// Half-open index range `[first, last)` of the eigenvalues in `[lo, hi]`.
    pub fn index_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        if self.is_empty() || hi < lo {
            return (0, 0);
        }
        let scale = self.norm_inf().max(lo.abs()).max(hi.abs());
        let tie = 8.0 * f64::EPSILON * scale;
        let first = self.count_below(lo - tie);
        let last = self.count_below(hi + tie);
        (first, last.max(first))
    }

    /// Lowest `k` eigenvalues.
    pub fn lowest(&self, k: usize) -> Vec<f64> {
        (0..k.min(self.len())).map(|i| self.kth_eigenvalue(i)).collect()
    }

    /// Eigenpairs with eigenvalue in `[lo, hi]`. Vectors are unit length in
    /// the Euclidean norm, with the sign fixed so the largest-magnitude
    /// component is positive.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (first, last) = self.index_range(lo, hi);
        self.eigenpairs_by_index(first, last)
    }

    /// Eigenpairs for indices `[first, last)`.
    pub fn eigenpairs_by_index(
        &self,
        first: usize,
        last: usize,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let values: Vec<f64> = (first..last).map(|k| self.kth_eigenvalue(k)).collect();
        let norm = self.norm_inf().max(f64::MIN_POSITIVE);
        let close = 1e-3 * norm;
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(values.len());
        let mut cluster_start = 0;
        for (idx, &lambda) in values.iter().enumerate() {
            if idx > 0 && (lambda - values[idx - 1]).abs() > close {
                cluster_start = idx;
            }
            let v = self.inverse_iteration(lambda, &vectors[cluster_start..], idx as u64)?;
            vectors.push(v);
        }
        Ok((values, vectors))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.d[i] * x[i];
            if i > 0 {
                acc += self.e[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.e[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Eigenvector for an accurately known eigenvalue. `against` holds
    /// previously computed vectors of nearby eigenvalues to orthogonalize
    /// against.
    pub fn inverse_iteration(&self, lambda: f64, against: &[Vec<f64>], salt: u64) -> Result<Vec<f64>> {
        let n = self.len();
        let norm = self.norm_inf().max(f64::MIN_POSITIVE);
        let lu = TridiagLu::factor(self, lambda, norm);
        // deterministic, non-degenerate start vector
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let x = ((i as u64 + 1).wrapping_mul(2654435761).wrapping_add(salt * 97) % 1000) as f64;
                1.0 + 1e-3 * x
            })
            .collect();
        normalize(&mut v);
        let target = 1e-12 * norm;
        let mut best_resid = f64::INFINITY;
        for _ in 0..8 {
            lu.solve(&mut v);
            for u in against {
                let p = dot(u, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= p * ui;
                }
            }
            let nrm = normalize(&mut v);
            if !nrm.is_finite() || nrm == 0.0 {
                return Err(Error::NoConvergence(format!(
                    "inverse iteration collapsed at eigenvalue {lambda}"
                )));
            }
            let tv = self.matvec(&v);
            let resid = tv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            best_resid = best_resid.min(resid);
            if resid <= target {
                break;
            }
        }
        if best_resid > 1e-9 * norm {
            return Err(Error::NoConvergence(format!(
                "tridiagonal inverse iteration residual {best_resid:e} at eigenvalue {lambda}"
            )));
        }
        fix_sign(&mut v);
        Ok(v)
    }
}

/// LU factorization with partial pivoting of `T - σI` (LAPACK `gttrf` layout).
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(t: &SymTridiag, shift: f64, norm: f64) -> Self {
        let n = t.len();
        let mut dl = t.e.clone();
        let mut du = t.e.clone();
        let mut d: Vec<f64> = t.d.iter().map(|x| x - shift).collect();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let tiny = f64::EPSILON * norm;
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        TridiagLu { dl, d, du, du2, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            if i + 1 < n {
                acc -= self.du[i] * b[i + 1];
            }
            if i + 2 < n {
                acc -= self.du2[i] * b[i + 2];
            }
            b[i] = acc / self.d[i];
        }
        // rescale to avoid overflow on near-exact shifts
        let m = b.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if m > 1e150 {
            b.iter_mut().for_each(|x| *x /= m);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let m = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let n = v.iter().map(|x| (x / m).powi(2)).sum::<f64>().sqrt() * m;
    v.iter_mut().for_each(|x| *x /= n);
    n
}

fn fix_sign(v: &mut [f64]) {
    let mut imax = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[imax].abs() {
            imax = i;
        }
    }
    if v.get(imax).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(t: &SymTridiag) -> DMatrix<f64> {
        let n = t.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                t.d[i]
            } else if i + 1 == j {
                t.e[i]
            } else if j + 1 == i {
                t.e[j]
            } else {
                0.0
            }
        })
    }

    fn sample(n: usize) -> SymTridiag {
        let d = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let e = (0..n - 1).map(|i| 1.0 + ((i * 31) % 5) as f64 * 0.25).collect();
        SymTridiag::new(d, e)
    }

    #[test]
    fn bisection_matches_dense_solver() {
        let t = sample(40);
        let mut reference: Vec<f64> = dense(&t).symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, want) in reference.iter().enumerate() {
            assert!((t.kth_eigenvalue(k) - want).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn eigenpairs_have_small_residuals_and_are_orthonormal() {
        let t = sample(60);
        let (vals, vecs) = t.eigenpairs_in(-3.0, 3.0).unwrap();
        assert!(!vals.is_empty());
        for (l, v) in vals.iter().zip(&vecs) {
            let tv = t.matvec(v);
            let r: f64 = tv.iter().zip(v).map(|(a, b)| (a - l * b).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-11, "residual {r}");
        }
        for a in 0..vecs.len() {
            for b in 0..vecs.len() {
                let g = dot(&vecs[a], &vecs[b]);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10, "gram[{a},{b}] = {g}");
            }
        }
    }

    #[test]
    fn one_by_one() {
        let t = SymTridiag::new(vec![3.5], vec![]);
        assert_eq!(t.kth_eigenvalue(0), 3.5);
        let (v, x) = t.eigenpairs_in(0.0, 10.0).unwrap();
        assert_eq!(v, vec![3.5]);
        assert_eq!(x[0], vec![1.0]);
    }

    #[test]
    fn closed_interval_includes_ties() {
        let t = SymTridiag::new(vec![1.0, 2.0, 3.0], vec![0.0, 0.0]);
        assert_eq!(t.eigenvalues_in(1.0, 2.0).len(), 2);
        assert_eq!(t.eigenvalues_in(2.0, 2.0).len(), 1);
    }
}
