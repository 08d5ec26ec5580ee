//! Time evolution inside the window subspace and the moment observables.
//!
//! A window-projected state is a combination `Σ_k c_k v_k` of window
//! eigenvectors, so `e^{−itH}` acts as `c_k ↦ e^{−iλ_k t} c_k`. Observables
//! that are quadratic in the state reduce to `k × k` matrices computed once.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{linear_fit, mann_kendall, LineFit};
use crate::flux::FluxProfile;
use crate::grid::{ChannelOperator, RadialGrid};
use crate::io::{fmt_f64, write_csv};
use crate::perturbation::DecayClass;
use crate::spectral::{BlockHamiltonian, SpectralProjection};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// `u = √r φ`, norm `Σ|u|² h`.
    Flat,
    /// `φ`, norm `Σ|φ|² r h`.
    Weighted,
}

/// Channel-major amplitudes `(j + j_max)·n_r + i`.
#[derive(Debug, Clone)]
pub struct WaveState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
    pub representation: Representation,
    pub grid: RadialGrid,
    pub j_max: i64,
}

impl WaveState {
    pub fn n_channels(&self) -> usize {
        (2 * self.j_max + 1) as usize
    }

    pub fn channel(&self, j: i64) -> &[Complex64] {
        let n = self.grid.n_r();
        let c = (j + self.j_max) as usize;
        &self.amplitudes[c * n..(c + 1) * n]
    }

    /// Node measure turning `|amplitude|²` into the `L²` density.
    fn measure(&self) -> Vec<f64> {
        let h = self.grid.h();
        match self.representation {
            Representation::Flat => vec![h; self.grid.n_r()],
            Representation::Weighted => self.grid.nodes().iter().map(|r| r * h).collect(),
        }
    }

    pub fn channel_norm_sq(&self, j: i64) -> f64 {
        if j.abs() > self.j_max {
            return 0.0;
        }
        self.channel(j).iter().zip(self.measure()).map(|(z, w)| z.norm_sqr() * w).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        (-self.j_max..=self.j_max).map(|j| self.channel_norm_sq(j)).sum()
    }

    pub fn to_flat(&self) -> WaveState {
        self.convert(Representation::Flat)
    }

    pub fn to_weighted(&self) -> WaveState {
        self.convert(Representation::Weighted)
    }

    fn convert(&self, to: Representation) -> WaveState {
        let n = self.grid.n_r();
        let nodes = self.grid.nodes();
        let amplitudes = match (self.representation, to) {
            (a, b) if a == b => self.amplitudes.clone(),
            (Representation::Flat, _) => {
                self.amplitudes.iter().enumerate().map(|(k, z)| z / nodes[k % n].sqrt()).collect()
            }
            (Representation::Weighted, _) => {
                self.amplitudes.iter().enumerate().map(|(k, z)| z * nodes[k % n].sqrt()).collect()
            }
        };
        WaveState {
            amplitudes,
            time: self.time,
            representation: to,
            grid: self.grid.clone(),
            j_max: self.j_max,
        }
    }

    /// Euclidean coordinates matching the unit-norm eigenvector columns.
    fn euclidean(&self) -> DVector<Complex64> {
        let s = self.grid.h().sqrt();
        DVector::from_vec(self.to_flat().amplitudes.iter().map(|z| z * s).collect())
    }

    fn from_euclidean(v: &DVector<Complex64>, time: f64, grid: &RadialGrid, j_max: i64) -> WaveState {
        let s = 1.0 / grid.h().sqrt();
        WaveState {
            amplitudes: v.iter().map(|z| z * s).collect(),
            time,
            representation: Representation::Flat,
            grid: grid.clone(),
            j_max,
        }
    }
}

/// `⟨|x|^ν⟩ = Σ r_i^ν |φ_{j,i}|² r_i h`.
pub fn moment_x(phi: &WaveState, nu: f64) -> f64 {
    let n = phi.grid.n_r();
    let w: Vec<f64> = phi
        .measure()
        .iter()
        .zip(phi.grid.nodes())
        .map(|(m, r)| m * r.powf(nu))
        .collect();
    phi.amplitudes.iter().enumerate().map(|(k, z)| z.norm_sqr() * w[k % n]).sum()
}

/// `⟨|J|^β⟩ = Σ_j |j|^β ‖P_j φ‖²` with `0⁰ = 1`.
pub fn moment_j(phi: &WaveState, beta: f64) -> f64 {
    (-phi.j_max..=phi.j_max)
        .map(|j| (j.unsigned_abs() as f64).powf(beta) * phi.channel_norm_sq(j))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSpec {
    /// The `index`-th window eigenvector (ascending eigenvalue).
    Eigenvector { index: usize },
    /// `exp(−(j−j0)²/2σ_j² − (r−r0)²/2σ_r²)` in the weighted representation.
    Gaussian { j0: f64, r0: f64, sigma_j: f64, sigma_r: f64 },
    /// A radial Gaussian bump in channel `j` only.
    Channel { j: i64, r0: f64, width: f64 },
}

/// `E_I` applied to the seed, normalized.
pub fn prepare_state(p: &SpectralProjection, seed: &SeedSpec) -> Result<WaveState> {
    if p.rank() == 0 {
        return Err(Error::EmptyProjection(0.0));
    }
    let grid = &p.grid;
    if let SeedSpec::Eigenvector { index } = *seed {
        if index >= p.rank() {
            return Err(Error::domain(format!("eigenvector index {index} ≥ window rank {}", p.rank())));
        }
        let v = p.vectors.column(index).into_owned();
        return Ok(WaveState::from_euclidean(&v, 0.0, grid, p.j_max));
    }
    let n = grid.n_r();
    let nc = (2 * p.j_max + 1) as usize;
    let mut amps = vec![ZERO; n * nc];
    for c in 0..nc {
        let j = c as i64 - p.j_max;
        for (i, &r) in grid.nodes().iter().enumerate() {
            let v = match *seed {
                SeedSpec::Gaussian { j0, r0, sigma_j, sigma_r } => {
                    (-(j as f64 - j0).powi(2) / (2.0 * sigma_j * sigma_j) - (r - r0).powi(2) / (2.0 * sigma_r * sigma_r))
                        .exp()
                }
                SeedSpec::Channel { j: js, r0, width } if js == j => (-(r - r0).powi(2) / (2.0 * width * width)).exp(),
                _ => 0.0,
            };
            amps[c * n + i] = Complex64::new(v, 0.0);
        }
    }
    let raw = WaveState {
        amplitudes: amps,
        time: 0.0,
        representation: Representation::Weighted,
        grid: grid.clone(),
        j_max: p.j_max,
    };
    let mut x = raw.euclidean();
    let norm = x.norm();
    if !(norm > 0.0) {
        return Err(Error::EmptyProjection(0.0));
    }
    x /= Complex64::new(norm, 0.0);
    let c = p.vectors.ad_mul(&x);
    let cn = c.norm();
    if cn < 1e-12 {
        return Err(Error::EmptyProjection(cn));
    }
    let v = &p.vectors * (c / Complex64::new(cn, 0.0));
    Ok(WaveState::from_euclidean(&v, 0.0, grid, p.j_max))
}

/// A state expanded in the window eigenbasis.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
    pub coeffs: DVector<Complex64>,
    pub t0: f64,
    pub grid: RadialGrid,
    pub j_max: i64,
    /// `‖φ₀‖² − ‖E_I φ₀‖²`: the part of the initial state the window basis drops.
    pub leakage: f64,
}

impl Evolution {
    pub fn new(p: &SpectralProjection, phi0: &WaveState) -> Result<Self> {
        if !phi0.grid.same_as(&p.grid) || phi0.j_max != p.j_max {
            return Err(Error::GridMismatch("state and projection live on different grids".into()));
        }
        let x = phi0.euclidean();
        let coeffs = p.vectors.ad_mul(&x);
        Ok(Evolution {
            values: p.values.clone(),
            vectors: p.vectors.clone(),
            leakage: (x.norm_squared() - coeffs.norm_squared()).max(0.0),
            coeffs,
            t0: phi0.time,
            grid: p.grid.clone(),
            j_max: p.j_max,
        })
    }

    fn coeffs_at(&self, t: f64) -> DVector<Complex64> {
        let dt = t - self.t0;
        DVector::from_iterator(
            self.values.len(),
            self.values.iter().zip(self.coeffs.iter()).map(|(l, c)| c * Complex64::from_polar(1.0, -l * dt)),
        )
    }

    /// `φ(t) = Σ_k e^{−iλ_k (t − t₀)} c_k v_k`.
    pub fn state_at(&self, t: f64) -> WaveState {
        WaveState::from_euclidean(&(&self.vectors * self.coeffs_at(t)), t, &self.grid, self.j_max)
    }

    fn channel_grams(&self) -> Vec<DMatrix<Complex64>> {
        let n = self.grid.n_r();
        (0..(2 * self.j_max + 1) as usize)
            .into_par_iter()
            .map(|c| {
                let b = self.vectors.rows(c * n, n);
                b.ad_mul(&b)
            })
            .collect()
    }

    fn radial_moment_matrix(&self, nu: f64) -> DMatrix<Complex64> {
        let n = self.grid.n_r();
        let pw: Vec<f64> = self.grid.nodes().iter().map(|r| r.powf(nu)).collect();
        let mut scaled = self.vectors.clone();
        for (row, mut x) in scaled.row_iter_mut().enumerate() {
            x.scale_mut(pw[row % n]);
        }
        self.vectors.ad_mul(&scaled)
    }

    /// Records `⟨|x|^ν⟩`, `⟨|J|^β⟩`, the norm and every channel norm at each
    /// time.
    pub fn observables(&self, times: &[f64], nu: f64, beta: f64) -> ObservableSeries {
        let grams = self.channel_grams();
        let mx = self.radial_moment_matrix(nu);
        let mut mj = DMatrix::from_element(self.values.len(), self.values.len(), ZERO);
        for (c, g) in grams.iter().enumerate() {
            let aj = (c as i64 - self.j_max).unsigned_abs() as f64;
            mj += g * Complex64::new(aj.powf(beta), 0.0);
        }
        let quad = |m: &DMatrix<Complex64>, a: &DVector<Complex64>| a.dotc(&(m * a)).re.max(0.0);
        let rows: Vec<(f64, f64, f64, Vec<f64>)> = times
            .par_iter()
            .map(|&t| {
                let a = self.coeffs_at(t);
                let cn = grams.iter().map(|g| quad(g, &a)).collect();
                (quad(&mx, &a), quad(&mj, &a), a.norm_squared(), cn)
            })
            .collect();
        let mut s = ObservableSeries {
            times: times.to_vec(),
            x_moment: Vec::with_capacity(rows.len()),
            j_moment: Vec::with_capacity(rows.len()),
            norm: Vec::with_capacity(rows.len()),
            channel_norms: Vec::with_capacity(rows.len()),
            nu,
            beta,
            j_max: self.j_max,
        };
        for (x, j, nrm, cn) in rows {
            s.x_moment.push(x);
            s.j_moment.push(j);
            s.norm.push(nrm);
            s.channel_norms.push(cn);
        }
        s
    }
}

/// `φ(t)` at each requested time.
pub fn propagate(p: &SpectralProjection, phi0: &WaveState, times: &[f64]) -> Result<Vec<WaveState>> {
    let evo = Evolution::new(p, phi0)?;
    Ok(times.par_iter().map(|&t| evo.state_at(t)).collect())
}

/// `t_k = t₀ ρ^k`, `n` points from `t0` to `t1`.
pub fn geometric_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![t0];
    }
    let rho = (t1 / t0).powf(1.0 / (n - 1) as f64);
    let mut t: Vec<f64> = (0..n).map(|k| t0 * rho.powi(k as i32)).collect();
    t[n - 1] = t1;
    t
}

/// `t_k = k·T/n`, `k = 0..=n`.
pub fn uniform_times(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_max * k as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub x_moment: Vec<f64>,
    pub j_moment: Vec<f64>,
    pub norm: Vec<f64>,
    /// `[time][j + j_max]`.
    pub channel_norms: Vec<Vec<f64>>,
    pub nu: f64,
    pub beta: f64,
    pub j_max: i64,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_norm_drift(&self) -> f64 {
        let n0 = self.norm.first().copied().unwrap_or(0.0).sqrt();
        self.norm.iter().map(|n| (n.sqrt() - n0).abs()).fold(0.0, f64::max)
    }

    pub fn max_channel_drift(&self) -> f64 {
        let Some(first) = self.channel_norms.first() else { return 0.0 };
        self.channel_norms
            .iter()
            .flat_map(|row| row.iter().zip(first).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["t", "x_moment", "j_moment", "norm"],
            (0..self.len()).map(|k| {
                vec![
                    fmt_f64(self.times[k]),
                    fmt_f64(self.x_moment[k]),
                    fmt_f64(self.j_moment[k]),
                    fmt_f64(self.norm[k]),
                ]
            }),
        )
    }

    pub fn save_channel_csv(&self, path: &Path) -> Result<()> {
        let jm = self.j_max;
        write_csv(
            path,
            &["t", "j", "norm2"],
            (0..self.len()).flat_map(|k| {
                self.channel_norms[k]
                    .iter()
                    .enumerate()
                    .map(move |(c, v)| vec![fmt_f64(self.times[k]), (c as i64 - jm).to_string(), fmt_f64(*v)])
                    .collect::<Vec<_>>()
            }),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HeisenbergReport {
    pub dt: f64,
    pub steps: usize,
    pub max_residual: f64,
    /// Largest residual per channel, `j + j_max` order.
    pub channel_residuals: Vec<f64>,
}

/// Compares `‖P_jφ(t)‖² − ‖P_jφ(0)‖²` with the trapezoid integral of
/// `−2 Im⟨W φ(s), P_j φ(s)⟩` on the uniform grid `s_k = k·t_max/steps`.
pub fn heisenberg_check(evo: &Evolution, h: &BlockHamiltonian, t_max: f64, steps: usize) -> Result<HeisenbergReport> {
    if h.dim() != evo.vectors.nrows() || h.j_max != evo.j_max {
        return Err(Error::GridMismatch("Hamiltonian and evolution differ in layout".into()));
    }
    let n = h.n_r();
    let nc = h.n_channels();
    let k = evo.values.len();
    let cols: Vec<Vec<Complex64>> = (0..k)
        .into_par_iter()
        .map(|c| {
            let x: Vec<Complex64> = evo.vectors.column(c).iter().copied().collect();
            let mut y = vec![ZERO; x.len()];
            h.add_coupling(&x, &mut y);
            y
        })
        .collect();
    let wv = DMatrix::from_fn(h.dim(), k, |r, c| cols[c][r]);
    let grams = evo.channel_grams();
    let cross: Vec<DMatrix<Complex64>> = (0..nc)
        .map(|c| wv.rows(c * n, n).ad_mul(&evo.vectors.rows(c * n, n)))
        .collect();
    let times = uniform_times(t_max, steps);
    let dt = t_max / steps as f64;
    let series: Vec<(Vec<f64>, Vec<f64>)> = times
        .par_iter()
        .map(|&t| {
            let a = evo.coeffs_at(evo.t0 + t);
            let p = grams.iter().map(|g| a.dotc(&(g * &a)).re).collect();
            let r = cross.iter().map(|m| -2.0 * a.dotc(&(m * &a)).im).collect();
            (p, r)
        })
        .collect();
    let mut channel_residuals = vec![0.0f64; nc];
    for c in 0..nc {
        let mut integral = 0.0;
        for s in 1..series.len() {
            integral += 0.5 * dt * (series[s - 1].1[c] + series[s].1[c]);
            let lhs = series[s].0[c] - series[0].0[c];
            channel_residuals[c] = channel_residuals[c].max((lhs - integral).abs());
        }
    }
    Ok(HeisenbergReport {
        dt,
        steps,
        max_residual: channel_residuals.iter().copied().fold(0.0, f64::max),
        channel_residuals,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm1Report {
    pub ratios: Vec<f64>,
    pub sup_ratio: f64,
    pub first_quartile_mean: f64,
    pub last_quartile_mean: f64,
    pub mann_kendall_z: f64,
    pub pass: bool,
}

/// `x_moment(t)/(‖φ‖² + j_moment(t))`; bounded if finite and the last
/// quartile mean stays within 1.1 times the first.
pub fn bound_check_thm1(run: &ObservableSeries, nu: f64, sigma_minus: f64, zeta: f64) -> Result<Thm1Report> {
    let beta = zeta * nu / sigma_minus;
    if (run.nu - nu).abs() > 1e-12 || (run.beta - beta).abs() > 1e-12 * beta.max(1.0) {
        return Err(Error::domain(format!(
            "series recorded (ν, β) = ({}, {}); this check needs ({nu}, {beta})",
            run.nu, run.beta
        )));
    }
    if run.len() < 4 {
        return Err(Error::Fit("ratio trend needs at least 4 times".into()));
    }
    let ratios: Vec<f64> = (0..run.len())
        .map(|k| run.x_moment[k] / (run.norm[k] + run.j_moment[k]))
        .collect();
    let q = (ratios.len() / 4).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = mean(&ratios[..q]);
    let last = mean(&ratios[ratios.len() - q..]);
    let sup = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (_, z) = mann_kendall(&ratios);
    Ok(Thm1Report {
        pass: sup.is_finite() && last <= 1.1 * first,
        sup_ratio: sup,
        first_quartile_mean: first,
        last_quartile_mean: last,
        mann_kendall_z: z,
        ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthModel {
    /// `⟨|J|^β⟩(t) − ⟨|J|^β⟩(0) ∝ t^x`.
    Power,
    /// `⟨|J|^β⟩(t) − ⟨|J|^β⟩(0) ∝ (ln t)^x`.
    Log,
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm2Report {
    pub model: GrowthModel,
    pub exponent: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
    pub reliable: bool,
    pub fit: Option<LineFit>,
}

/// Growth exponent of the angular-momentum moment against the bound for
/// the decay class of the non-symmetric part.
pub fn growth_fit_thm2(
    run: &ObservableSeries,
    decay: &DecayClass,
    sigma_plus: f64,
    zeta: f64,
    slack: f64,
) -> Result<Thm2Report> {
    let beta = run.beta;
    let (model, bound) = match *decay {
        DecayClass::Power { p } => {
            let d = zeta * p - sigma_plus;
            (GrowthModel::Power, if d > 0.0 { sigma_plus / d * beta } else { f64::INFINITY })
        }
        DecayClass::StretchedExponential { s, .. } => (GrowthModel::Log, beta / zeta.min(zeta * s / sigma_plus)),
        DecayClass::None => (GrowthModel::Power, 0.0),
    };
    let y0 = run.j_moment.first().copied().unwrap_or(0.0);
    let scale = y0.abs().max(1.0);
    let flat = run.j_moment.iter().all(|y| (y - y0).abs() <= 1e-12 * scale);
    if flat {
        return Ok(Thm2Report {
            model,
            exponent: 0.0,
            bound,
            slack,
            pass: true,
            reliable: true,
            fit: None,
        });
    }
    if matches!(decay, DecayClass::None) {
        return Err(Error::Fit("moment grows but the perturbation has no decay class".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sign_flip = false;
    for (t, y) in run.times.iter().zip(&run.j_moment) {
        let keep = match model {
            GrowthModel::Power => *t >= 1.0,
            GrowthModel::Log => *t > 1.0,
        };
        if !keep {
            continue;
        }
        let d = y - y0;
        if d <= 0.0 {
            sign_flip = true;
            continue;
        }
        xs.push(match model {
            GrowthModel::Power => t.ln(),
            GrowthModel::Log => t.ln().ln(),
        });
        ys.push(d.ln());
    }
    if xs.is_empty() {
        // the moment never exceeds its initial value: no growth to fit
        return Ok(Thm2Report {
            model,
            exponent: 0.0,
            bound,
            slack,
            pass: true,
            reliable: false,
            fit: None,
        });
    }
    if xs.len() < 4 {
        return Err(Error::Fit(format!("only {} usable points with positive growth", xs.len())));
    }
    let fit = linear_fit(&xs, &ys)?;
    let (_, z) = mann_kendall(&ys);
    Ok(Thm2Report {
        model,
        exponent: fit.slope,
        bound,
        slack,
        pass: fit.slope <= bound + slack,
        reliable: !sign_flip && z > 1.645,
        fit: Some(fit),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MobilityOptions {
    /// Energies below the edge whose eigenfunctions are tested for decay.
    pub low_band: (f64, f64),
    /// Energies above the edge whose eigenfunctions are tested for spreading.
    pub high_band: (f64, f64),
    pub low_box_factor: f64,
    pub high_box_factor: f64,
    pub min_decay_rate: f64,
    pub max_shift: f64,
    pub min_width_ratio: f64,
}

impl MobilityOptions {
    /// Bands `λ²·[0.1, 0.8]` and `λ²·[1.8, 2.2]`.
    pub fn for_lambda(lambda: f64) -> Self {
        let l2 = lambda * lambda;
        MobilityOptions {
            low_band: (0.1 * l2, 0.8 * l2),
            high_band: (1.8 * l2, 2.2 * l2),
            low_box_factor: 1.5,
            high_box_factor: 2.0,
            min_decay_rate: 0.05,
            max_shift: 1e-6,
            min_width_ratio: 1.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizedState {
    pub j: i64,
    pub index: usize,
    pub energy: f64,
    pub decay_rate: Option<f64>,
    pub decay_r2: Option<f64>,
    pub shift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtendedBand {
    pub j: i64,
    pub count_small: usize,
    pub count_large: usize,
    pub width_small: f64,
    pub width_large: f64,
    pub ratio: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MobilityReport {
    pub lambda: f64,
    pub options: MobilityOptions,
    pub r_max_small: f64,
    pub r_max_low_large: f64,
    pub r_max_high_large: f64,
    pub localized: Vec<LocalizedState>,
    pub extended: Vec<ExtendedBand>,
    pub low_band_empty: bool,
    pub high_band_empty: bool,
    pub localized_pass: bool,
    pub extended_pass: bool,
}

fn grown(grid: &RadialGrid, factor: f64) -> Result<RadialGrid> {
    let n = ((grid.n_r() + 1) as f64 * factor).round() as usize - 1;
    RadialGrid::new(n, grid.h() * (n + 1) as f64)
}

/// `(Σu²h)² / Σu⁴h`, a length.
fn participation_width(u: &[f64], h: f64) -> f64 {
    let s2: f64 = u.iter().map(|x| x * x).sum::<f64>() * h;
    let s4: f64 = u.iter().map(|x| x.powi(4)).sum::<f64>() * h;
    s2 * s2 / s4
}

/// Decay rate of `|u|` beyond `r_out + 1`, fitted until the amplitude drops
/// under `1e-10` of its peak or the last tenth of the box.
fn tail_decay(u: &[f64], grid: &RadialGrid, r_out: f64) -> Option<LineFit> {
    let peak = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &r) in grid.nodes().iter().enumerate() {
        if r <= r_out + 1.0 {
            continue;
        }
        if r > 0.9 * grid.r_max() || u[i].abs() < 1e-10 * peak {
            break;
        }
        xs.push(r);
        ys.push(u[i].abs());
    }
    crate::fit::decay_rate_fit(&xs, &ys).ok()
}

/// Localization below and spreading above `λ²` for the linear flux, channel
/// by channel, across box sizes at fixed spacing.
pub fn mobility_edge_scan(lambda: f64, grid: &RadialGrid, j_max: i64, opts: &MobilityOptions) -> Result<MobilityReport> {
    let l2 = lambda * lambda;
    if !(opts.low_band.1 < l2 && opts.high_band.0 > l2) {
        return Err(Error::domain(format!(
            "bands {:?} and {:?} must sit on either side of λ² = {l2}",
            opts.low_band, opts.high_band
        )));
    }
    let profile = FluxProfile::linear(lambda)?;
    let low_grid = grown(grid, opts.low_box_factor)?;
    let high_grid = grown(grid, opts.high_box_factor)?;
    let per_channel: Vec<(Vec<LocalizedState>, ExtendedBand)> = (-j_max..=j_max)
        .into_par_iter()
        .map(|j| -> Result<_> {
            let small = ChannelOperator::new(&profile, j, grid)?;
            let t_small = small.tridiag();
            let (lo, hi) = opts.low_band;
            let (k0, k1) = t_small.index_range(lo, hi);
            let mut loc = Vec::new();
            if k1 > k0 {
                let eig = small.lowest(k1)?;
                let t_big = ChannelOperator::new(&profile, j, &low_grid)?.tridiag();
                for k in k0..k1 {
                    let e = eig.values[k];
                    let region = profile.classical_region(j, e, grid)?;
                    let r_out = region.interval.map_or(0.0, |(_, b)| b);
                    let fit = tail_decay(&eig.flat[k], grid, r_out);
                    loc.push(LocalizedState {
                        j,
                        index: k,
                        energy: e,
                        decay_rate: fit.map(|f| -f.slope),
                        decay_r2: fit.map(|f| f.r2),
                        shift: (t_big.kth_eigenvalue(k) - e).abs(),
                    });
                }
            }
            let (a, b) = opts.high_band;
            let es = small.eigenpairs_in(a, b)?;
            let el = ChannelOperator::new(&profile, j, &high_grid)?.eigenpairs_in(a, b)?;
            let mean_width = |f: &[Vec<f64>], h: f64| {
                if f.is_empty() {
                    0.0
                } else {
                    f.iter().map(|u| participation_width(u, h)).sum::<f64>() / f.len() as f64
                }
            };
            let ws = mean_width(&es.flat, grid.h());
            let wl = mean_width(&el.flat, high_grid.h());
            let empty = es.flat.is_empty() || el.flat.is_empty();
            let ext = ExtendedBand {
                j,
                count_small: es.flat.len(),
                count_large: el.flat.len(),
                width_small: ws,
                width_large: wl,
                ratio: if empty { 0.0 } else { wl / ws },
                empty,
            };
            Ok((loc, ext))
        })
        .collect::<Result<_>>()?;
    let mut localized = Vec::new();
    let mut extended = Vec::new();
    for (l, e) in per_channel {
        localized.extend(l);
        extended.push(e);
    }
    let low_band_empty = localized.is_empty();
    let high_band_empty = extended.iter().all(|b| b.empty);
    let localized_pass = !low_band_empty
        && localized
            .iter()
            .all(|s| s.decay_rate.is_some_and(|d| d >= opts.min_decay_rate) && s.shift < opts.max_shift);
    let extended_pass = !high_band_empty
        && extended
            .iter()
            .filter(|b| !b.empty)
            .all(|b| b.ratio >= opts.min_width_ratio);
    if low_band_empty {
        log::warn!("no eigenvalues in the localized band {:?}", opts.low_band);
    }
    if high_band_empty {
        log::warn!("no eigenvalues in the extended band {:?}", opts.high_band);
    }
    Ok(MobilityReport {
        lambda,
        options: *opts,
        r_max_small: grid.r_max(),
        r_max_low_large: low_grid.r_max(),
        r_max_high_large: high_grid.r_max(),
        localized,
        extended,
        low_band_empty,
        high_band_empty,
        localized_pass,
        extended_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{Angular, AngularPotential, ClosedForm, Radial};
    use crate::spectral::{spectral_projection, SolveOptions};

    fn setup(w: ClosedForm, j_max: i64) -> (BlockHamiltonian, SpectralProjection) {
        let g = RadialGrid::new(120, 10.0).unwrap();
        let p = FluxProfile::power_law(1.0, 1.5).unwrap();
        let ap = AngularPotential::from_closed_form(w, &g, None, None, None).unwrap();
        let h = BlockHamiltonian::assemble(&p, &ap, &g, j_max).unwrap();
        let proj = spectral_projection(&h, &ap, 1.2, Some(0.1), None, &SolveOptions::default()).unwrap();
        (h, proj)
    }

    fn coupled() -> ClosedForm {
        ClosedForm::single(Radial::Exponential { amp: 0.4, rate: 0.5 }, Angular::Poisson { q: 0.4 })
    }

    fn single_node_state(value: f64, node: usize, j: i64) -> WaveState {
        let g = RadialGrid::new(20, 2.1).unwrap();
        let mut amps = vec![ZERO; 20 * 5];
        amps[((j + 2) * 20) as usize + node] = Complex64::new(value, 0.0);
        WaveState {
            amplitudes: amps,
            time: 0.0,
            representation: Representation::Weighted,
            grid: g,
            j_max: 2,
        }
    }

    #[test]
    fn moments_by_hand() {
        let s = single_node_state(2.0, 9, 1);
        let r = s.grid.nodes()[9];
        let h = s.grid.h();
        assert!((s.norm_sq() - 4.0 * r * h).abs() < 1e-14);
        assert!((moment_x(&s, 0.0) - s.norm_sq()).abs() < 1e-15);
        assert!((moment_x(&s, 2.5) - r.powf(2.5) * s.norm_sq()).abs() < 1e-13);
        assert!((moment_j(&s, 2.0) - s.norm_sq()).abs() < 1e-15);
        assert!((moment_j(&s, 0.0) - s.norm_sq()).abs() < 1e-15);
        assert_eq!(moment_j(&single_node_state(1.0, 3, 0), 1.5), 0.0);
        assert!((moment_j(&single_node_state(1.0, 3, 0), 0.0) - single_node_state(1.0, 3, 0).norm_sq()).abs() < 1e-15);
        // two nodes, ν = 2
        let mut two = single_node_state(1.0, 4, -2);
        two.amplitudes[10] = Complex64::new(0.0, 3.0);
        let nodes = two.grid.nodes();
        let expect = (nodes[4].powi(3) + 9.0 * nodes[10].powi(3)) * h;
        assert!((moment_x(&two, 2.0) - expect).abs() < 1e-13);
        let flat = two.to_flat();
        assert!((moment_x(&flat, 2.0) - expect).abs() < 1e-13);
        assert!((flat.to_weighted().amplitudes[10] - two.amplitudes[10]).norm() < 1e-15);
    }

    #[test]
    fn eigenvector_seed_is_exact_and_stationary() {
        let (_, proj) = setup(coupled(), 4);
        let s = prepare_state(&proj, &SeedSpec::Eigenvector { index: 1 }).unwrap();
        let s_h = proj.grid.h().sqrt();
        for (k, z) in s.amplitudes.iter().enumerate() {
            assert!((*z * s_h - proj.vectors[(k, 1)]).norm() <= 4.0 * f64::EPSILON);
        }
        let evo = Evolution::new(&proj, &s).unwrap();
        let t = 3.7;
        let st = evo.state_at(t);
        let phase = Complex64::from_polar(1.0, -proj.values[1] * t);
        let err = st
            .amplitudes
            .iter()
            .zip(&s.amplitudes)
            .map(|(a, b)| (a - b * phase).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        assert!(prepare_state(&proj, &SeedSpec::Eigenvector { index: proj.rank() }).is_err());
    }

    #[test]
    fn gaussian_seed_lies_in_the_window() {
        let (_, proj) = setup(coupled(), 4);
        let s = prepare_state(&proj, &SeedSpec::Gaussian { j0: 2.0, r0: 2.0, sigma_j: 1.5, sigma_r: 1.0 }).unwrap();
        assert!((s.norm_sq() - 1.0).abs() < 1e-12);
        let evo = Evolution::new(&proj, &s).unwrap();
        assert!(evo.leakage < 1e-12, "{}", evo.leakage);
        let back = evo.state_at(0.0);
        let err = back.amplitudes.iter().zip(&s.amplitudes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err * proj.grid.h().sqrt() < 1e-12);
    }

    #[test]
    fn seed_outside_the_window_is_rejected() {
        let (_, proj) = setup(ClosedForm::zero(), 3);
        // channels j ≤ 0 carry no window states for this flux and window
        let err = prepare_state(&proj, &SeedSpec::Channel { j: -3, r0: 2.0, width: 0.5 });
        assert!(matches!(err, Err(Error::EmptyProjection(_))), "{err:?}");
    }

    #[test]
    fn unitarity_and_time_reversal() {
        let (_, proj) = setup(coupled(), 4);
        let s = prepare_state(&proj, &SeedSpec::Gaussian { j0: 3.0, r0: 2.5, sigma_j: 1.0, sigma_r: 1.0 }).unwrap();
        let evo = Evolution::new(&proj, &s).unwrap();
        let times = geometric_times(1.0, 1e3, 50);
        let states = propagate(&proj, &s, &times).unwrap();
        for st in &states {
            assert!((st.norm_sq().sqrt() - 1.0).abs() < 1e-12);
        }
        let later = evo.state_at(250.0);
        let back = Evolution::new(&proj, &later).unwrap().state_at(0.0);
        let err = back.amplitudes.iter().zip(&s.amplitudes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err * proj.grid.h().sqrt() < 1e-10, "{err}");
        let obs = evo.observables(&times, 1.0, 2.0 / 3.0);
        assert!(obs.max_norm_drift() < 1e-12);
        for (k, st) in states.iter().enumerate() {
            assert!((obs.x_moment[k] - moment_x(st, 1.0)).abs() < 1e-10 * obs.x_moment[k]);
            assert!((obs.j_moment[k] - moment_j(st, 2.0 / 3.0)).abs() < 1e-10 * obs.j_moment[k].max(1.0));
        }
    }

    #[test]
    fn radial_perturbation_conserves_channel_norms() {
        let w = ClosedForm::single(Radial::Exponential { amp: 0.5, rate: 1.0 }, Angular::Constant);
        let (h, proj) = setup(w, 4);
        let s = prepare_state(&proj, &SeedSpec::Gaussian { j0: 3.0, r0: 2.0, sigma_j: 2.0, sigma_r: 1.0 }).unwrap();
        let evo = Evolution::new(&proj, &s).unwrap();
        let obs = evo.observables(&uniform_times(100.0, 200), 0.0, 0.0);
        assert!(obs.max_channel_drift() < 1e-12);
        for k in 0..obs.len() {
            assert!((obs.x_moment[k] - obs.norm[k]).abs() < 1e-12);
        }
        let rep = heisenberg_check(&evo, &h, 10.0, 100).unwrap();
        assert!(rep.max_residual < 1e-13);
    }

    #[test]
    fn heisenberg_residual_is_second_order() {
        let (h, proj) = setup(coupled(), 4);
        let s = prepare_state(&proj, &SeedSpec::Gaussian { j0: 3.0, r0: 2.0, sigma_j: 1.5, sigma_r: 1.0 }).unwrap();
        let evo = Evolution::new(&proj, &s).unwrap();
        let a = heisenberg_check(&evo, &h, 5.0, 200).unwrap();
        let b = heisenberg_check(&evo, &h, 5.0, 400).unwrap();
        let ratio = a.max_residual / b.max_residual;
        assert!(a.max_residual > 1e-9, "{a:?}");
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn thm1_ratio_checks() {
        let (_, proj) = setup(coupled(), 4);
        let s = prepare_state(&proj, &SeedSpec::Eigenvector { index: 0 }).unwrap();
        let evo = Evolution::new(&proj, &s).unwrap();
        let times = geometric_times(1.0, 1e3, 40);
        let obs = evo.observables(&times, 0.0, 0.0);
        let rep = bound_check_thm1(&obs, 0.0, 1.5, 1.0).unwrap();
        assert!(rep.pass && rep.sup_ratio <= 1.0);
        let obs = evo.observables(&times, 1.5, 1.0);
        let rep = bound_check_thm1(&obs, 1.5, 1.5, 1.0).unwrap();
        let spread = rep.ratios.iter().map(|r| (r - rep.ratios[0]).abs()).fold(0.0, f64::max);
        assert!(spread < 1e-10 * rep.ratios[0]);
        assert!(bound_check_thm1(&obs, 2.0, 1.5, 1.0).is_err());
    }

    fn synthetic(times: &[f64], f: impl Fn(f64) -> f64) -> ObservableSeries {
        ObservableSeries {
            times: times.to_vec(),
            x_moment: vec![1.0; times.len()],
            j_moment: times.iter().map(|&t| f(t)).collect(),
            norm: vec![1.0; times.len()],
            channel_norms: vec![vec![]; times.len()],
            nu: 1.0,
            beta: 1.0,
            j_max: 0,
        }
    }

    #[test]
    fn growth_fit_on_exact_data() {
        let mut times = vec![0.0];
        times.extend(geometric_times(1.0, 1e3, 60));
        let run = synthetic(&times, |t| 2.0 + 0.3 * t.powf(0.4));
        let rep = growth_fit_thm2(&run, &DecayClass::Power { p: 4.0 }, 1.5, 1.0, 0.1).unwrap();
        assert!((rep.exponent - 0.4).abs() < 1e-3);
        assert!((rep.bound - 0.6).abs() < 1e-15);
        assert!(rep.pass && rep.reliable);
        let run = synthetic(&times, |t| 1.0 + if t > 0.0 { t.ln().max(0.0).powf(1.2) } else { 0.0 });
        let rep = growth_fit_thm2(&run, &DecayClass::StretchedExponential { mu: 1.0, s: 1.0 }, 1.5, 1.0, 0.1).unwrap();
        assert!((rep.exponent - 1.2).abs() < 1e-9);
        assert!((rep.bound - 1.5).abs() < 1e-15);
        let flat = synthetic(&times, |_| 0.7);
        let rep = growth_fit_thm2(&flat, &DecayClass::None, 1.5, 1.0, 0.1).unwrap();
        assert_eq!(rep.exponent, 0.0);
        assert!(rep.pass);
        let wobble = synthetic(&times, |t| 1.0 + (t).sin());
        let rep = growth_fit_thm2(&wobble, &DecayClass::Power { p: 4.0 }, 1.5, 1.0, 0.1);
        assert!(rep.map_or(true, |r| !r.reliable));
    }

    #[test]
    fn mobility_edge_small_scan() {
        let g = RadialGrid::new(799, 40.0).unwrap();
        let rep = mobility_edge_scan(1.0, &g, 2, &MobilityOptions::for_lambda(1.0)).unwrap();
        assert!(!rep.low_band_empty);
        assert!(rep.localized.iter().all(|s| s.j > 0));
        for s in &rep.localized {
            let d = s.decay_rate.unwrap();
            assert!(d > 0.05, "{s:?}");
        }
        assert!(rep.extended.iter().filter(|b| !b.empty).all(|b| b.ratio > 1.4), "{:?}", rep.extended);
    }
}
