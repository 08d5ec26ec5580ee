//! The truncated block Hamiltonian, its eigenpairs and spectral projections.
//!
//! Channels `j ∈ [−J, J]` are indexed `c = j + J`. Public vectors use the
//! channel-major layout `c·n_r + i` and are unit length in the Euclidean
//! norm; flat amplitudes are `u = v/√h`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flux::FluxProfile;
use crate::grid::{kinetic_stencil, ChannelOperator, RadialGrid};
use crate::io::{fmt_f64, write_csv, write_json};
use crate::linalg::{
    band_eigenpairs_in, band_kth_eigenvalue, sorted_hermitian_eigen, HermitianBand, Scalar, SliceOptions,
};
use crate::perturbation::{symmetric_split, xi_constant, AngularPotential};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct BlockHamiltonian {
    pub profile: FluxProfile,
    pub grid: RadialGrid,
    pub j_max: i64,
    /// Channel operators with `W_s` added to the diagonal.
    pub channels: Vec<ChannelOperator>,
    /// `W_s(r_i)`.
    pub ws: Vec<f64>,
    /// `coupling[m − 1][i] = Ŵ(r_i, m)/√(2π)` for `1 ≤ m ≤ m_eff`; negative
    /// `m` is the conjugate.
    coupling: Vec<Vec<Complex64>>,
    pub m_eff: usize,
    /// Norm bound of the couplings dropped by the channel truncation.
    pub dropped_coupling_bound: f64,
    pub symmetric_part_included: bool,
}

impl BlockHamiltonian {
    pub fn assemble(profile: &FluxProfile, w: &AngularPotential, grid: &RadialGrid, j_max: i64) -> Result<Self> {
        if j_max < 0 {
            return Err(Error::domain(format!("J_max must be nonnegative (got {j_max})")));
        }
        w.table.check_grid(grid)?;
        let defect = w.table.hermitian_defect();
        if defect > 1e-12 * w.table.max_abs().max(1.0) {
            return Err(Error::domain(format!(
                "perturbation is not real-valued: Ŵ(r, −m) differs from conj Ŵ(r, m) by {defect:e}"
            )));
        }
        let (ws, ns) = symmetric_split(&w.table);
        let m_eff = ns.m_max.min(2 * j_max as usize);
        let mut dropped = 0.0;
        if ns.m_max > m_eff {
            dropped = match &w.envelope {
                Some(env) => env.truncation_bound(grid, m_eff),
                None => {
                    let s = (2.0 * PI).sqrt();
                    (0..ns.n_r())
                        .map(|i| ((m_eff + 1) as i64..=ns.m_max as i64).map(|m| 2.0 * ns.get(i, m).norm() / s).sum::<f64>())
                        .fold(0.0, f64::max)
                }
            };
            log::info!(
                "angular modes |m| > {m_eff} cannot couple retained channels; dropped coupling norm ≤ {dropped:e}"
            );
        }
        let s = 1.0 / (2.0 * PI).sqrt();
        let coupling: Vec<Vec<Complex64>> = (1..=m_eff as i64)
            .map(|m| (0..grid.n_r()).map(|i| ns.get(i, m) * s).collect())
            .collect();
        let channels = (-j_max..=j_max)
            .map(|j| {
                let mut op = ChannelOperator::new(profile, j, grid)?;
                for (d, v) in op.diagonal.iter_mut().zip(&ws) {
                    *d += v;
                }
                Ok(op)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockHamiltonian {
            profile: profile.clone(),
            grid: grid.clone(),
            j_max,
            channels,
            ws,
            coupling,
            m_eff,
            dropped_coupling_bound: dropped,
            symmetric_part_included: true,
        })
    }

    pub fn n_channels(&self) -> usize {
        (2 * self.j_max + 1) as usize
    }

    pub fn n_r(&self) -> usize {
        self.grid.n_r()
    }

    pub fn dim(&self) -> usize {
        self.n_channels() * self.n_r()
    }

    pub fn channel_index(&self, j: i64) -> Option<usize> {
        (j.abs() <= self.j_max).then(|| (j + self.j_max) as usize)
    }

    pub fn channel_j(&self, c: usize) -> i64 {
        c as i64 - self.j_max
    }

    /// Block `(j, k)` diagonal entry at node `i`: `Ŵ(r_i, j − k)/√(2π)` for `j ≠ k`.
    pub fn coupling(&self, m: i64, i: usize) -> Complex64 {
        let a = m.unsigned_abs() as usize;
        if m == 0 || a > self.m_eff {
            ZERO
        } else if m > 0 {
            self.coupling[a - 1][i]
        } else {
            self.coupling[a - 1][i].conj()
        }
    }

    pub fn is_block_diagonal(&self) -> bool {
        self.coupling.iter().all(|col| col.iter().all(|z| *z == ZERO))
    }

    pub fn is_real(&self) -> bool {
        self.coupling.iter().all(|col| col.iter().all(|z| z.im == 0.0))
    }

    /// Shared kinetic off-diagonal.
    pub fn off_diagonal(&self) -> &[f64] {
        &self.channels[0].off_diagonal
    }

    /// Gershgorin bound on `‖H‖`.
    pub fn norm_bound(&self) -> f64 {
        let off = self.off_diagonal();
        let n = self.n_r();
        let mut worst: f64 = 0.0;
        for (c, op) in self.channels.iter().enumerate() {
            let j = self.channel_j(c);
            for i in 0..n {
                let mut row = op.diagonal[i].abs();
                if i > 0 {
                    row += off[i - 1].abs();
                }
                if i + 1 < n {
                    row += off[i].abs();
                }
                for k in -self.j_max..=self.j_max {
                    if k != j {
                        row += self.coupling(j - k, i).norm();
                    }
                }
                worst = worst.max(row);
            }
        }
        worst
    }

    /// `y = H x` on channel-major vectors.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n_r();
        let off = self.off_diagonal();
        let mut y = vec![ZERO; x.len()];
        for (c, op) in self.channels.iter().enumerate() {
            let xs = &x[c * n..(c + 1) * n];
            let ys = &mut y[c * n..(c + 1) * n];
            for i in 0..n {
                let mut acc = xs[i] * op.diagonal[i];
                if i > 0 {
                    acc += xs[i - 1] * off[i - 1];
                }
                if i + 1 < n {
                    acc += xs[i + 1] * off[i];
                }
                ys[i] = acc;
            }
        }
        self.add_coupling(x, &mut y);
        y
    }

    /// `y += W_ns x` (the inter-channel part only).
    pub fn add_coupling(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.n_r();
        let nc = self.n_channels();
        for cj in 0..nc {
            for ck in 0..nc {
                let m = cj as i64 - ck as i64;
                if m == 0 || m.unsigned_abs() as usize > self.m_eff {
                    continue;
                }
                for i in 0..n {
                    y[cj * n + i] += self.coupling(m, i) * x[ck * n + i];
                }
            }
        }
    }

    /// Node-major band form (`i·N_c + c`), optionally with extra diagonal
    /// terms per channel and the symmetrized conjugation by `e^{F}`, which
    /// multiplies every off-diagonal entry by `cosh(F_a − F_b)`.
    pub fn band<T: Scalar>(&self, extra: Option<&[Vec<f64>]>, twist: Option<&[Vec<f64>]>) -> HermitianBand<T> {
        let n = self.n_r();
        let nc = self.n_channels();
        let mut a = HermitianBand::<T>::zeros(n * nc, nc);
        let off = self.off_diagonal();
        let f = |c: usize, i: usize| twist.map_or(0.0, |t| t[c][i]);
        for (c, op) in self.channels.iter().enumerate() {
            for i in 0..n {
                let d = op.diagonal[i] + extra.map_or(0.0, |e| e[c][i]);
                a.add(i * nc + c, i * nc + c, T::from_real(d));
                if i + 1 < n {
                    let w = (f(c, i) - f(c, i + 1)).cosh();
                    a.add((i + 1) * nc + c, i * nc + c, T::from_real(off[i] * w));
                }
            }
        }
        for i in 0..n {
            for cj in 0..nc {
                for ck in 0..cj {
                    let m = (cj - ck) as i64;
                    if m as usize > self.m_eff {
                        continue;
                    }
                    let z = self.coupling(m, i) * (f(cj, i) - f(ck, i)).cosh();
                    if z != ZERO {
                        a.add(i * nc + cj, i * nc + ck, T::from_complex(z));
                    }
                }
            }
        }
        a
    }

    /// Dense channel-major matrix.
    pub fn dense(&self) -> DMatrix<Complex64> {
        let n = self.n_r();
        let dim = self.dim();
        let off = self.off_diagonal();
        let mut m = DMatrix::from_element(dim, dim, ZERO);
        for (c, op) in self.channels.iter().enumerate() {
            for i in 0..n {
                m[(c * n + i, c * n + i)] = Complex64::new(op.diagonal[i], 0.0);
                if i + 1 < n {
                    m[(c * n + i + 1, c * n + i)] = Complex64::new(off[i], 0.0);
                    m[(c * n + i, c * n + i + 1)] = Complex64::new(off[i], 0.0);
                }
            }
        }
        let nc = self.n_channels();
        for cj in 0..nc {
            for ck in 0..nc {
                if cj != ck {
                    for i in 0..n {
                        m[(cj * n + i, ck * n + i)] = self.coupling(cj as i64 - ck as i64, i);
                    }
                }
            }
        }
        m
    }

    fn node_major_to_channel<T: Scalar>(&self, v: &[T]) -> Vec<Complex64> {
        let n = self.n_r();
        let nc = self.n_channels();
        let mut out = vec![ZERO; n * nc];
        for i in 0..n {
            for c in 0..nc {
                out[c * n + i] = v[i * nc + c].to_complex();
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    BlockDiagonal,
    Dense,
    BandSlicing,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Largest dimension handled by the dense solver.
    pub dense_limit: usize,
    pub residual_tol: f64,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dense_limit: 256,
            residual_tol: 1e-9,
            seed: 0x5eed,
        }
    }
}

/// Eigenpairs as columns of a channel-major matrix.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
    /// Largest `‖Hv − λv‖/‖H‖`.
    pub residual_max: f64,
    pub norm: f64,
    pub method: SolveMethod,
}

impl Eigensystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `max |V^H V − I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.adjoint() * &self.vectors;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - want).norm());
            }
        }
        worst
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let rows = self.values.iter().enumerate().map(|(k, l)| vec![k.to_string(), fmt_f64(*l)]);
        write_csv(path, &["index", "lambda"], rows)
    }
}

/// All eigenpairs. Only for dimensions within the dense limit (block-diagonal
/// operators are solved channel by channel at any size).
pub fn diagonalize(h: &BlockHamiltonian, opts: &SolveOptions) -> Result<Eigensystem> {
    if h.is_block_diagonal() {
        return block_diagonal_in(h, f64::NEG_INFINITY, f64::INFINITY, opts);
    }
    if h.dim() > opts.dense_limit {
        return Err(Error::domain(format!(
            "full diagonalization of dimension {} exceeds the dense limit {}; use a window",
            h.dim(),
            opts.dense_limit
        )));
    }
    dense_in(h, f64::NEG_INFINITY, f64::INFINITY, opts)
}

/// Eigenpairs with eigenvalue in the closed interval `[lo, hi]`.
pub fn diagonalize_in(h: &BlockHamiltonian, lo: f64, hi: f64, opts: &SolveOptions) -> Result<Eigensystem> {
    if h.is_block_diagonal() {
        block_diagonal_in(h, lo, hi, opts)
    } else if h.dim() <= opts.dense_limit {
        dense_in(h, lo, hi, opts)
    } else if h.is_real() {
        band_in::<f64>(h, lo, hi, opts)
    } else {
        band_in::<Complex64>(h, lo, hi, opts)
    }
}

/// Smallest eigenvalue of `H`.
pub fn lowest_eigenvalue(h: &BlockHamiltonian, opts: &SolveOptions) -> Result<f64> {
    if h.is_block_diagonal() {
        return Ok(h
            .channels
            .iter()
            .map(|op| op.tridiag().kth_eigenvalue(0))
            .fold(f64::INFINITY, f64::min));
    }
    if h.dim() <= opts.dense_limit {
        return Ok(sorted_hermitian_eigen(h.dense()).0[0]);
    }
    Ok(if h.is_real() {
        band_kth_eigenvalue(&h.band::<f64>(None, None), 0)
    } else {
        band_kth_eigenvalue(&h.band::<Complex64>(None, None), 0)
    })
}

fn block_diagonal_in(h: &BlockHamiltonian, lo: f64, hi: f64, opts: &SolveOptions) -> Result<Eigensystem> {
    let n = h.n_r();
    let norm = h.norm_bound();
    let mut pairs: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    for (c, op) in h.channels.iter().enumerate() {
        let t = op.tridiag();
        let (first, last) = if lo.is_infinite() && hi.is_infinite() {
            (0, n)
        } else {
            t.index_range(lo, hi)
        };
        let (vals, vecs) = t.eigenpairs_by_index(first, last)?;
        pairs.extend(vals.into_iter().zip(vecs).map(|(l, v)| (l, c, v)));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut vectors = DMatrix::from_element(h.dim(), pairs.len(), ZERO);
    for (k, (_, c, v)) in pairs.iter().enumerate() {
        for (i, x) in v.iter().enumerate() {
            vectors[(c * n + i, k)] = Complex64::new(*x, 0.0);
        }
    }
    let values = pairs.iter().map(|p| p.0).collect();
    finish(h, values, vectors, norm, SolveMethod::BlockDiagonal, opts)
}

fn dense_in(h: &BlockHamiltonian, lo: f64, hi: f64, opts: &SolveOptions) -> Result<Eigensystem> {
    let norm = h.norm_bound();
    let tie = 8.0 * f64::EPSILON * norm.max(lo.abs().min(1e300)).max(hi.abs().min(1e300));
    let (vals, vecs) = if h.is_real() {
        let m = h.dense().map(|z| z.re);
        let (v, q) = sorted_hermitian_eigen(m);
        (v, q.map(|x| Complex64::new(x, 0.0)))
    } else {
        sorted_hermitian_eigen(h.dense())
    };
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] >= lo - tie && vals[k] <= hi + tie).collect();
    let values = keep.iter().map(|&k| vals[k]).collect();
    let vectors = DMatrix::from_fn(h.dim(), keep.len(), |r, c| vecs[(r, keep[c])]);
    finish(h, values, vectors, norm, SolveMethod::Dense, opts)
}

fn band_in<T: Scalar>(h: &BlockHamiltonian, lo: f64, hi: f64, opts: &SolveOptions) -> Result<Eigensystem> {
    let band = h.band::<T>(None, None);
    let sopts = SliceOptions {
        residual_tol: opts.residual_tol,
        seed: opts.seed,
        ..SliceOptions::default()
    };
    let w = band_eigenpairs_in(&band, lo, hi, &sopts)?;
    let mut vectors = DMatrix::from_element(h.dim(), w.values.len(), ZERO);
    for (k, v) in w.vectors.iter().enumerate() {
        for (r, z) in h.node_major_to_channel(v).into_iter().enumerate() {
            vectors[(r, k)] = z;
        }
    }
    finish(h, w.values, vectors, h.norm_bound(), SolveMethod::BandSlicing, opts)
}

fn finish(
    h: &BlockHamiltonian,
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
    norm: f64,
    method: SolveMethod,
    opts: &SolveOptions,
) -> Result<Eigensystem> {
    let norm = norm.max(f64::MIN_POSITIVE);
    let mut residual_max: f64 = 0.0;
    for (k, &l) in values.iter().enumerate() {
        let v: Vec<Complex64> = vectors.column(k).iter().copied().collect();
        let hv = h.matvec(&v);
        let r = hv.iter().zip(&v).map(|(a, b)| (a - b * l).norm_sqr()).sum::<f64>().sqrt();
        residual_max = residual_max.max(r / norm);
    }
    if residual_max > opts.residual_tol {
        return Err(Error::NoConvergence(format!(
            "{method:?} solve: max relative residual {residual_max:e} exceeds {:e}",
            opts.residual_tol
        )));
    }
    Ok(Eigensystem {
        values,
        vectors,
        residual_max,
        norm,
        method,
    })
}

/// `I = [e₀, E₀]` and the derived `Ẽ = E₀ + c₀ + δ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralWindow {
    pub e0: f64,
    #[serde(rename = "E0")]
    pub upper: f64,
    pub delta0: f64,
    pub c0: f64,
    pub e_tilde: f64,
}

impl SpectralWindow {
    /// `delta0` defaults to `0.1·(E₀ − e₀)`.
    pub fn new(e0: f64, upper: f64, delta0: Option<f64>, c0: f64) -> Result<Self> {
        if upper < e0 {
            return Err(Error::domain(format!("window upper edge {upper} lies below e0 = {e0}")));
        }
        let delta0 = delta0.unwrap_or(0.1 * (upper - e0));
        if !(delta0 > 0.0) {
            return Err(Error::domain(format!("δ0 must be positive (got {delta0}); set it explicitly")));
        }
        if !(c0 >= 0.0) {
            return Err(Error::domain(format!("c0 must be nonnegative (got {c0})")));
        }
        Ok(SpectralWindow {
            e0,
            upper,
            delta0,
            c0,
            e_tilde: upper + c0 + delta0,
        })
    }
}

/// `c₀ = max(0, −λ_min(−D² − ξ(a, ζ)·v))` with the `j = 0` radial stencil.
pub fn estimate_c0(v: &[f64], a: f64, zeta: f64, grid: &RadialGrid) -> Result<f64> {
    if v.len() != grid.n_r() {
        return Err(Error::GridMismatch(format!("v has {} values, grid has {} nodes", v.len(), grid.n_r())));
    }
    if v.iter().any(|x| *x < 0.0) {
        return Err(Error::domain("c0 comparison potential must be nonnegative"));
    }
    if v.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let xi = xi_constant(a, zeta, 1e-14)?;
    let mut t = kinetic_stencil(grid, true);
    for (d, x) in t.d.iter_mut().zip(v) {
        *d -= xi * x;
    }
    Ok((-t.kth_eigenvalue(0)).max(0.0))
}

/// Orthonormal basis of the window subspace.
#[derive(Debug, Clone)]
pub struct SpectralProjection {
    pub window: SpectralWindow,
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
    pub grid: RadialGrid,
    pub j_max: i64,
    pub residual_max: f64,
    pub method: SolveMethod,
}

/// Indices of `values` (ascending) inside `[lo, hi]`; an eigenvalue cluster
/// straddling an edge is kept whole.
pub fn select_closed(values: &[f64], lo: f64, hi: f64, scale: f64) -> Vec<usize> {
    let tie = 1e-10 * scale.max(1.0);
    let mut keep: Vec<usize> = (0..values.len())
        .filter(|&k| values[k] >= lo - tie && values[k] <= hi + tie)
        .collect();
    if let (Some(&first), Some(&last)) = (keep.first(), keep.last()) {
        let mut a = first;
        while a > 0 && values[a] - values[a - 1] <= tie {
            a -= 1;
        }
        let mut b = last;
        while b + 1 < values.len() && values[b + 1] - values[b] <= tie {
            b += 1;
        }
        keep = (a..=b).collect();
    }
    keep
}

impl SpectralProjection {
    pub fn from_eigensystem(h: &BlockHamiltonian, eig: &Eigensystem, window: SpectralWindow) -> Self {
        let keep = select_closed(&eig.values, window.e0, window.upper, window.upper.abs().max(window.e0.abs()));
        SpectralProjection {
            window,
            values: keep.iter().map(|&k| eig.values[k]).collect(),
            vectors: DMatrix::from_fn(h.dim(), keep.len(), |r, c| eig.vectors[(r, keep[c])]),
            grid: h.grid.clone(),
            j_max: h.j_max,
            residual_max: eig.residual_max,
            method: eig.method,
        }
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn n_r(&self) -> usize {
        self.grid.n_r()
    }

    pub fn channel_index(&self, j: i64) -> Option<usize> {
        (j.abs() <= self.j_max).then(|| (j + self.j_max) as usize)
    }

    /// `‖P² − P‖` on the retained basis: `max |g(g − 1)|` over the
    /// eigenvalues `g` of the Gram matrix.
    pub fn idempotency_defect(&self) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let g = self.vectors.adjoint() * &self.vectors;
        let (vals, _) = sorted_hermitian_eigen(g);
        vals.iter().map(|g| (g * (g - 1.0)).abs()).fold(0.0, f64::max)
    }

    /// Block `j` of the basis: `n_r × rank`.
    pub fn channel_block(&self, j: i64) -> DMatrix<Complex64> {
        let n = self.n_r();
        match self.channel_index(j) {
            Some(c) => self.vectors.rows(c * n, n).into_owned(),
            None => DMatrix::from_element(n, self.rank(), ZERO),
        }
    }

    /// `‖[P_j, E_I]‖ = ‖A B^H‖` with `A`, `B` the rows of the basis inside
    /// and outside channel `j`, evaluated through the triangular factors of
    /// thin QR decompositions so that exact block structure gives exact zero.
    pub fn channel_commutator(&self, j: i64) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let n = self.n_r();
        let a = self.channel_block(j);
        let b = match self.channel_index(j) {
            Some(c) => {
                let rows: Vec<usize> = (0..self.vectors.nrows()).filter(|r| r / n != c).collect();
                self.vectors.select_rows(rows.iter())
            }
            None => self.vectors.clone(),
        };
        let ra = a.qr().r();
        let rb = b.qr().r();
        let m = ra * rb.adjoint();
        let (vals, _) = sorted_hermitian_eigen(m.adjoint() * &m);
        vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// `‖D·P_j·E_I‖` for a diagonal node weight `D` (zero outside the region).
    pub fn weighted_channel_norm(&self, j: i64, weight: &[f64]) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let mut a = self.channel_block(j);
        for (i, w) in weight.iter().enumerate() {
            a.row_mut(i).scale_mut(*w);
        }
        let (vals, _) = sorted_hermitian_eigen(a.adjoint() * &a);
        vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// `‖1_{[lo, hi]}(r)·P_j·E_I‖`.
    pub fn channel_projection_norm(&self, j: i64, lo: f64, hi: f64) -> f64 {
        let range = self.grid.node_range(lo, hi);
        let w: Vec<f64> = (0..self.n_r()).map(|i| if range.contains(&i) { 1.0 } else { 0.0 }).collect();
        self.weighted_channel_norm(j, &w)
    }

    pub fn metadata(&self) -> ProjectionMeta {
        ProjectionMeta {
            window: self.window,
            rank: self.rank(),
            residual_max: self.residual_max,
            idempotency_defect: self.idempotency_defect(),
            empty: self.rank() == 0,
            method: self.method,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, &self.metadata())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionMeta {
    pub window: SpectralWindow,
    pub rank: usize,
    pub residual_max: f64,
    pub idempotency_defect: f64,
    pub empty: bool,
    pub method: SolveMethod,
}

/// Window from the computed spectrum floor, `c₀` from the envelope (or the
/// given override) and the requested upper edge; then the projection.
pub fn spectral_projection(
    h: &BlockHamiltonian,
    w: &AngularPotential,
    upper: f64,
    delta0: Option<f64>,
    c0_override: Option<f64>,
    opts: &SolveOptions,
) -> Result<SpectralProjection> {
    let e0 = lowest_eigenvalue(h, opts)?;
    let c0 = match c0_override {
        Some(c) => c,
        None => c0_for(h, w)?,
    };
    let window = SpectralWindow::new(e0, upper.max(e0), delta0, c0)?;
    let tie = 1e-10 * upper.abs().max(1.0);
    let eig = diagonalize_in(h, e0 - tie, window.upper + tie, opts)?;
    Ok(SpectralProjection::from_eigensystem(h, &eig, window))
}

/// `c₀` using the envelope's `b/√(2π)` (the coupling scale of the
/// assembled blocks) as comparison potential; zero without a perturbation.
pub fn c0_for(h: &BlockHamiltonian, w: &AngularPotential) -> Result<f64> {
    match &w.envelope {
        Some(env) if !w.table.is_zero() => {
            let s = 1.0 / (2.0 * PI).sqrt();
            let v: Vec<f64> = h.grid.nodes().iter().map(|&r| env.b_at(r) * s).collect();
            estimate_c0(&v, env.a, env.zeta, &h.grid)
        }
        _ => Ok(0.0),
    }
}
