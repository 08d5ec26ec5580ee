//! Spectrum slicing for Hermitian band matrices.
//!
//! Eigenvalues inside a window are isolated by bisection on inertia counts,
//! eigenvectors obtained by (block) shifted inverse iteration, and the whole
//! set is finished with one Rayleigh–Ritz step so the returned basis is
//! orthonormal to working precision.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::band::HermitianBand;
use super::Field;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SliceOptions {
    /// Residual target relative to the matrix norm bound.
    pub residual_tol: f64,
    /// Bisection stops once an interval is narrower than this times the norm.
    pub isolation_tol: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions {
            residual_tol: 1e-9,
            isolation_tol: 1e-12,
            max_rounds: 4,
            seed: 0x005e_edf1_u64,
        }
    }
}

/// Eigenpairs returned by the slicer. `residual_max` is relative to `norm`.
#[derive(Debug, Clone)]
pub struct WindowEigen<T> {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<T>>,
    pub residual_max: f64,
    pub norm: f64,
}

#[derive(Clone, Copy)]
struct Slice {
    lo: f64,
    hi: f64,
    count_lo: usize,
    count_hi: usize,
}

/// Eigenpairs of `a` with eigenvalue in the closed interval `[lo, hi]`.
pub fn band_eigenpairs_in<T: Field>(
    a: &HermitianBand<T>,
    lo: f64,
    hi: f64,
    opts: &SliceOptions,
) -> Result<WindowEigen<T>> {
    let (glo, ghi) = a.gershgorin();
    let norm = glo.abs().max(ghi.abs()).max(f64::MIN_POSITIVE);
    let tie = 8.0 * f64::EPSILON * norm.max(lo.abs()).max(hi.abs());
    let lo = (lo - tie).max(glo - tie);
    let hi = (hi + tie).min(ghi + tie);
    let empty = WindowEigen {
        values: vec![],
        vectors: vec![],
        residual_max: 0.0,
        norm,
    };
    if lo > hi {
        return Ok(empty);
    }
    let root = Slice {
        lo,
        hi,
        count_lo: a.count_below(lo),
        count_hi: a.count_below(hi),
    };
    if root.count_hi <= root.count_lo {
        return Ok(empty);
    }
    let clusters = isolate(a, root, opts.isolation_tol * norm);
    let k: usize = clusters.iter().map(|c| c.1).sum();

    // per-cluster inverse iteration, independent and deterministic
    let blocks: Vec<Vec<Vec<T>>> = clusters
        .par_iter()
        .enumerate()
        .map(|(idx, &(center, mult))| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((idx as u64) << 20));
            let mut block: Vec<Vec<T>> = (0..mult)
                .map(|_| (0..a.dim()).map(|_| T::from_real(rng.random_range(-1.0..1.0))).collect())
                .collect();
            let f = a.factor(center);
            for _ in 0..3 {
                for v in block.iter_mut() {
                    f.solve(v);
                }
                orthonormalize(&mut block, &[]);
            }
            block
        })
        .collect();
    let mut vectors: Vec<Vec<T>> = Vec::with_capacity(k);
    for b in blocks {
        let mut b = b;
        orthonormalize(&mut b, &vectors);
        vectors.extend(b);
    }

    let mut values = vec![0.0; k];
    let mut residual_max = f64::INFINITY;
    for round in 0..opts.max_rounds {
        rayleigh_ritz(a, &mut vectors, &mut values);
        let resid: Vec<f64> = vectors
            .par_iter()
            .zip(values.par_iter())
            .map(|(v, &l)| residual(a, v, l) / norm)
            .collect();
        residual_max = resid.iter().cloned().fold(0.0, f64::max);
        if residual_max <= opts.residual_tol {
            break;
        }
        if round + 1 == opts.max_rounds {
            break;
        }
        // refine the offenders at their Ritz values
        let refined: Vec<(usize, Vec<T>)> = resid
            .par_iter()
            .enumerate()
            .filter(|(_, &r)| r > opts.residual_tol)
            .map(|(i, _)| {
                let shift = values[i] + 4.0 * f64::EPSILON * norm;
                let f = a.factor(shift);
                let mut v = vectors[i].clone();
                for _ in 0..2 {
                    f.solve(&mut v);
                    let nv = norm2(&v);
                    v.iter_mut().for_each(|x| *x = x.scale(1.0 / nv));
                }
                (i, v)
            })
            .collect();
        for (i, v) in refined {
            vectors[i] = v;
        }
        let snapshot = std::mem::take(&mut vectors);
        let mut rebuilt: Vec<Vec<T>> = Vec::with_capacity(k);
        for v in snapshot {
            let mut one = vec![v];
            orthonormalize(&mut one, &rebuilt);
            rebuilt.extend(one);
        }
        vectors = rebuilt;
    }
    if residual_max > opts.residual_tol {
        return Err(Error::NoConvergence(format!(
            "windowed solve on [{lo}, {hi}]: max relative residual {residual_max:e} exceeds {:e}",
            opts.residual_tol
        )));
    }
    Ok(WindowEigen {
        values,
        vectors,
        residual_max,
        norm,
    })
}

/// The `k`-th smallest eigenvalue (0-based) by bisection on inertia.
pub fn band_kth_eigenvalue<T: Field>(a: &HermitianBand<T>, k: usize) -> f64 {
    let (mut lo, mut hi) = a.gershgorin();
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    lo -= 4.0 * f64::EPSILON * scale;
    hi += 4.0 * f64::EPSILON * scale;
    while hi - lo > 4.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if a.count_below(mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Breadth-first bisection; returns (center, multiplicity) in ascending order.
fn isolate<T: Field>(a: &HermitianBand<T>, root: Slice, tol: f64) -> Vec<(f64, usize)> {
    let mut frontier = vec![root];
    let mut done: Vec<(f64, usize)> = Vec::new();
    while !frontier.is_empty() {
        let mids: Vec<f64> = frontier.iter().map(|s| 0.5 * (s.lo + s.hi)).collect();
        let counts: Vec<usize> = mids.par_iter().map(|&m| a.count_below(m)).collect();
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for ((s, &mid), &cm) in frontier.iter().zip(&mids).zip(&counts) {
            let halves = [
                Slice { lo: s.lo, hi: mid, count_lo: s.count_lo, count_hi: cm },
                Slice { lo: mid, hi: s.hi, count_lo: cm, count_hi: s.count_hi },
            ];
            for h in halves {
                let mult = h.count_hi.saturating_sub(h.count_lo);
                if mult == 0 {
                    continue;
                }
                if h.hi - h.lo <= tol || mid <= s.lo || mid >= s.hi {
                    done.push((0.5 * (h.lo + h.hi), mult));
                } else {
                    next.push(h);
                }
            }
        }
        frontier = next;
    }
    done.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    done
}

fn rayleigh_ritz<T: Field>(a: &HermitianBand<T>, vectors: &mut Vec<Vec<T>>, values: &mut [f64]) {
    let k = vectors.len();
    if k == 0 {
        return;
    }
    let av: Vec<Vec<T>> = vectors.par_iter().map(|v| a.matvec(v)).collect();
    let g = DMatrix::<T>::from_fn(k, k, |i, j| inner(&vectors[i], &av[j]));
    let g = (&g + g.adjoint()).scale(0.5);
    let (vals, q) = sorted_hermitian_eigen(g);
    let n = vectors[0].len();
    let rotated: Vec<Vec<T>> = (0..k)
        .into_par_iter()
        .map(|c| {
            let mut out = vec![T::from_real(0.0); n];
            for (r, v) in vectors.iter().enumerate() {
                let coef = q[(r, c)];
                for (o, x) in out.iter_mut().zip(v) {
                    *o += *x * coef;
                }
            }
            out
        })
        .collect();
    *vectors = rotated;
    values.copy_from_slice(&vals);
}

/// Dense Hermitian eigendecomposition with ascending eigenvalues.
pub fn sorted_hermitian_eigen<T: Field>(m: DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], m);
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn residual<T: Field>(a: &HermitianBand<T>, v: &[T], lambda: f64) -> f64 {
    let av = a.matvec(v);
    av.iter()
        .zip(v)
        .map(|(x, y)| (*x - y.scale(lambda)).modulus_squared())
        .sum::<f64>()
        .sqrt()
}

/// `⟨x, y⟩` conjugate-linear in the first slot.
pub fn inner<T: Field>(x: &[T], y: &[T]) -> T {
    let mut acc = T::from_real(0.0);
    for (a, b) in x.iter().zip(y) {
        acc += a.conjugate() * *b;
    }
    acc
}

pub fn norm2<T: Field>(x: &[T]) -> f64 {
    x.iter().map(|a| a.modulus_squared()).sum::<f64>().sqrt()
}

/// Modified Gram–Schmidt (applied twice) of `block` against `basis` and itself.
pub fn orthonormalize<T: Field>(block: &mut Vec<Vec<T>>, basis: &[Vec<T>]) {
    let mut kept: Vec<Vec<T>> = Vec::with_capacity(block.len());
    for mut v in block.drain(..) {
        let before = norm2(&v);
        for _ in 0..2 {
            for u in basis.iter().chain(kept.iter()) {
                let p = inner(u, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= *ui * p;
                }
            }
        }
        let nv = norm2(&v);
        if nv > 1e-14 * before && nv > 0.0 {
            v.iter_mut().for_each(|x| *x = x.scale(1.0 / nv));
            kept.push(v);
        }
    }
    *block = kept;
}
