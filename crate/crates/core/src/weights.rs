//! Channel weight sequences, their hypothesis checks, the twisted coercivity
//! check and the tunnelling sums.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{decay_rate_fit, LineFit};
use crate::flux::{inner_forbidden_eps, outer_forbidden_eta, FluxKind, FluxProfile};
use crate::grid::RadialGrid;
use crate::io::{fmt_f64, write_csv, write_json};
use crate::linalg::{band_kth_eigenvalue, SymTridiag};
use crate::spectral::{BlockHamiltonian, SpectralProjection, SpectralWindow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Interior { eps: f64, j0: i64, sigma_plus: f64, zeta: f64 },
    Exterior { c: f64, eta: f64, sigma_minus: f64, zeta: f64 },
    Mobility { delta1: f64, eta1: f64 },
    Zero,
}

/// Requested weight; `None` fields are extracted from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightRequest {
    pub kind: WeightFamily,
    pub eps: Option<f64>,
    pub j0: Option<i64>,
    pub c: Option<f64>,
    pub eta: Option<f64>,
    pub delta1: Option<f64>,
    pub eta1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFamily {
    Interior,
    Exterior,
    Mobility,
    #[default]
    Zero,
}

impl WeightFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "interior" => Some(Self::Interior),
            "exterior" => Some(Self::Exterior),
            "mobility" => Some(Self::Mobility),
            "zero" => Some(Self::Zero),
            _ => None,
        }
    }
}

/// A weight together with the mask and decay constants of the matching
/// tunnelling sum (`c±`, `δ±`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightSequence {
    pub kind: WeightKind,
    pub e_tilde: f64,
    pub mask_constant: f64,
    pub decay_constant: f64,
}

impl WeightSequence {
    pub fn zero(e_tilde: f64) -> Self {
        WeightSequence {
            kind: WeightKind::Zero,
            e_tilde,
            mask_constant: 0.0,
            decay_constant: 0.0,
        }
    }

    pub fn interior(eps: f64, j0: i64, sigma_plus: f64, zeta: f64, e_tilde: f64) -> Self {
        WeightSequence {
            kind: WeightKind::Interior { eps, j0, sigma_plus, zeta },
            e_tilde,
            mask_constant: 0.5 * eps,
            decay_constant: eps,
        }
    }

    pub fn exterior(c: f64, eta: f64, sigma_minus: f64, zeta: f64, e_tilde: f64) -> Self {
        WeightSequence {
            kind: WeightKind::Exterior { c, eta, sigma_minus, zeta },
            e_tilde,
            mask_constant: eta * 4f64.powf(zeta / sigma_minus),
            decay_constant: 0.5 * c,
        }
    }

    pub fn mobility(delta1: f64, eta1: f64, e_tilde: f64) -> Self {
        WeightSequence {
            kind: WeightKind::Mobility { delta1, eta1 },
            e_tilde,
            mask_constant: 2.0 * eta1,
            decay_constant: 0.5 * delta1,
        }
    }

    /// `F_j(r)`.
    pub fn eval(&self, j: i64, r: f64) -> f64 {
        let aj = j.unsigned_abs() as f64;
        match self.kind {
            WeightKind::Interior { eps, j0, sigma_plus, zeta } => {
                if j.abs() <= j0 {
                    return 0.0;
                }
                aj.powf(zeta * (1.0 - 1.0 / sigma_plus)) * (eps * aj.powf(zeta / sigma_plus) - r).max(0.0)
            }
            WeightKind::Exterior { c, eta, sigma_minus, zeta } => {
                let p = zeta * sigma_minus;
                c * (r.powf(p) - eta.powf(p) * (1.0 + aj).powf(zeta)).max(0.0)
            }
            WeightKind::Mobility { delta1, eta1 } => delta1 * (r - eta1 * aj).max(0.0),
            WeightKind::Zero => 0.0,
        }
    }

    /// `F′_j(r)²`, taking the larger one-sided derivative at kinks.
    pub fn deriv_sq(&self, j: i64, r: f64) -> f64 {
        let aj = j.unsigned_abs() as f64;
        match self.kind {
            WeightKind::Interior { eps, j0, sigma_plus, zeta } => {
                if j.abs() <= j0 || r > eps * aj.powf(zeta / sigma_plus) {
                    0.0
                } else {
                    aj.powf(2.0 * zeta * (1.0 - 1.0 / sigma_plus))
                }
            }
            WeightKind::Exterior { c, eta, sigma_minus, zeta } => {
                let p = zeta * sigma_minus;
                if r < eta * (1.0 + aj).powf(1.0 / sigma_minus) {
                    0.0
                } else {
                    (c * p * r.powf(p - 1.0)).powi(2)
                }
            }
            WeightKind::Mobility { delta1, eta1 } => {
                if r < eta1 * aj {
                    0.0
                } else {
                    delta1 * delta1
                }
            }
            WeightKind::Zero => 0.0,
        }
    }

    /// Node values per channel, channel index `j + j_max`.
    pub fn on_grid(&self, grid: &RadialGrid, j_max: i64) -> Vec<Vec<f64>> {
        (-j_max..=j_max)
            .map(|j| grid.nodes().iter().map(|&r| self.eval(j, r)).collect())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, WeightKind::Zero)
    }
}

/// Builds the requested weight, extracting missing constants from the grid.
///
/// `a = ∞` stands for an absent perturbation (no cross-channel constraint).
pub fn build_weight(
    req: &WeightRequest,
    profile: &FluxProfile,
    window: &SpectralWindow,
    a: f64,
    zeta: f64,
    grid: &RadialGrid,
    j_max: i64,
) -> Result<WeightSequence> {
    let et = window.e_tilde;
    let growth = profile.validate_growth_conditions(grid)?;
    let g = profile.growth;
    match req.kind {
        WeightFamily::Zero => Ok(WeightSequence::zero(et)),
        WeightFamily::Interior => {
            if let Some(r) = growth.upper_first_violation {
                return Err(Error::WeightConstruction(format!("upper growth bound fails at r = {r}")));
            }
            if let (Some(eps), Some(j0)) = (req.eps, req.j0) {
                return Ok(WeightSequence::interior(eps, j0, g.sigma_plus, zeta, et));
            }
            interior_scan(req, profile, window, a, zeta, grid, j_max)
        }
        WeightFamily::Exterior => {
            if let Some(r) = growth.lower_first_violation {
                return Err(Error::WeightConstruction(format!("lower growth bound fails at r = {r}")));
            }
            let eta = match req.eta {
                Some(e) => e,
                None => match outer_forbidden_eta(profile, et, j_max, grid)? {
                    Some((e, _)) => e,
                    None => {
                        return Err(Error::WeightConstruction(format!(
                            "no η > 1 inside the box makes the outer region forbidden at Ẽ = {et}"
                        )))
                    }
                },
            };
            if !(eta > 1.0) {
                return Err(Error::WeightConstruction(format!("exterior weight needs η > 1 (got {eta})")));
            }
            let c = match req.c {
                Some(c) => c,
                None => {
                    let p = zeta * g.sigma_minus;
                    let mut cap = 0.5 * a / eta.powf(p);
                    for j in -j_max..=j_max {
                        let start = eta * (1.0 + j.unsigned_abs() as f64).powf(1.0 / g.sigma_minus);
                        for &r in grid.nodes().iter().filter(|&&r| r >= start) {
                            let v = profile.effective_potential(j, r)?;
                            let room = if v > et { v - et } else { v };
                            cap = cap.min(room.max(0.0).sqrt() / (p * r.powf(p - 1.0)));
                        }
                    }
                    0.99 * cap
                }
            };
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::WeightConstruction(format!(
                    "exterior weight: derivative bound (G′)² ≤ V − Ẽ leaves no room at η = {eta}"
                )));
            }
            Ok(WeightSequence::exterior(c, eta, g.sigma_minus, zeta, et))
        }
        WeightFamily::Mobility => {
            let lambda = match profile.kind {
                FluxKind::Linear { lambda } => lambda,
                _ => return Err(Error::WeightConstruction("mobility weight needs a linear flux profile".into())),
            };
            let gap = lambda * lambda - et;
            if !(gap > 0.0) {
                return Err(Error::WeightConstruction(format!(
                    "mobility weight needs Ẽ < λ² (Ẽ = {et}, λ² = {})",
                    lambda * lambda
                )));
            }
            let eta1 = req
                .eta1
                .unwrap_or_else(|| (4.0 * lambda / gap).max((1.0 + 1e-9) / (lambda - et.max(0.0).sqrt())));
            let delta1 = match req.delta1 {
                Some(d) => d,
                None => {
                    // |H_j − H_k| ≤ δ₁η₁|j−k| must stay below (a/2)|j−k|^ζ
                    let lip = (1..=2 * j_max.max(1))
                        .map(|d| 0.5 * a * (d as f64).powf(zeta - 1.0))
                        .fold(f64::INFINITY, f64::min);
                    0.99 * (0.5 * gap).sqrt().min(lip / eta1)
                }
            };
            if !(delta1 > 0.0) {
                return Err(Error::WeightConstruction(format!("mobility weight needs δ₁ > 0 (got {delta1})")));
            }
            Ok(WeightSequence::mobility(delta1, eta1, et))
        }
    }
}

/// Scans `j₀` and takes the largest admissible `ε` that passes validation.
fn interior_scan(
    req: &WeightRequest,
    profile: &FluxProfile,
    window: &SpectralWindow,
    a: f64,
    zeta: f64,
    grid: &RadialGrid,
    j_max: i64,
) -> Result<WeightSequence> {
    let sp = profile.growth.sigma_plus;
    let et = window.e_tilde;
    let candidates: Vec<i64> = match req.j0 {
        Some(j0) => vec![j0],
        None => (1..=(j_max / 2).max(1)).collect(),
    };
    let mut best: Option<WeightSequence> = None;
    let mut last_reason = String::from("no channel beyond j0 inside the retained range");
    for j0 in candidates {
        if j0 + 1 > j_max {
            continue;
        }
        let eps = match req.eps {
            Some(e) => e,
            None => {
                let Some(e_e) = inner_forbidden_eps(profile, et, j0, j_max, grid)? else {
                    last_reason = format!("inner forbidden-region bound fails for |j| ≥ {j0} at Ẽ = {et}");
                    continue;
                };
                e_e.min(0.5 * a / ((j0 + 1) as f64).powf(zeta))
            }
        };
        let w = WeightSequence::interior(eps, j0, sp, zeta, et);
        let rep = weight_validate(&w, profile, window, a, zeta, grid, j_max)?;
        if !rep.pass {
            last_reason = format!("j0 = {j0}, ε = {eps}: {}", rep.first_failure());
            continue;
        }
        if best.is_none_or(|b| match b.kind {
            WeightKind::Interior { eps: e, .. } => eps > e,
            _ => true,
        }) {
            best = Some(w);
        }
    }
    best.ok_or_else(|| Error::WeightConstruction(format!("no admissible interior parameters: {last_reason}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub pass: bool,
    pub violations: usize,
    /// `(j, r, F′², V − Ẽχ⊥)` at the worst node.
    pub worst: Option<(i64, f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundednessCheck {
    pub pass: bool,
    /// `max e^{F_j}` over the classical region.
    pub max_exp_weight: f64,
    pub zero_on_classical_region: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzCheck {
    pub pass: bool,
    pub violations: usize,
    /// `(j, k, r, |F_j − F_k|, (a/2)|j − k|^ζ)` at the worst pair.
    pub worst: Option<(i64, i64, f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightReport {
    pub weight: WeightSequence,
    pub pass: bool,
    pub derivative: DerivativeCheck,
    pub bounded: BoundednessCheck,
    pub lipschitz: LipschitzCheck,
}

impl WeightReport {
    pub fn first_failure(&self) -> String {
        if let Some((j, r, d, v)) = self.derivative.worst.filter(|_| !self.derivative.pass) {
            return format!("(F′)² = {d:.6e} exceeds V − Ẽχ⊥ = {v:.6e} at j = {j}, r = {r}");
        }
        if !self.bounded.pass {
            return "e^F unbounded on the classical region".into();
        }
        if let Some((j, k, r, d, b)) = self.lipschitz.worst.filter(|_| !self.lipschitz.pass) {
            return format!("|F_j − F_k| = {d:.6e} exceeds {b:.6e} at j = {j}, k = {k}, r = {r}");
        }
        "none".into()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

const REL: f64 = 1e-12;

/// Violation count, worst pair and its excess for one channel.
type PairScan = (usize, Option<(i64, i64, f64, f64, f64)>, f64);

/// The three weight hypotheses on every node and channel pair.
pub fn weight_validate(
    w: &WeightSequence,
    profile: &FluxProfile,
    window: &SpectralWindow,
    a: f64,
    zeta: f64,
    grid: &RadialGrid,
    j_max: i64,
) -> Result<WeightReport> {
    let et = window.e_tilde;
    let js: Vec<i64> = (-j_max..=j_max).collect();
    let pots: Vec<Vec<f64>> = js.iter().map(|&j| profile.potential_on(j, grid)).collect::<Result<_>>()?;
    let vals = w.on_grid(grid, j_max);

    let mut dv = 0usize;
    let mut dworst: Option<(i64, f64, f64, f64)> = None;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut max_exp: f64 = 0.0;
    let mut zero_on = true;
    for (c, &j) in js.iter().enumerate() {
        for (i, &r) in grid.nodes().iter().enumerate() {
            let v = pots[c][i];
            let room = if v > et { v - et } else { v };
            let d = w.deriv_sq(j, r);
            let excess = d - room;
            if excess > REL * room.abs().max(1.0) {
                dv += 1;
            }
            if excess > worst_excess {
                worst_excess = excess;
                dworst = Some((j, r, d, room));
            }
            if v <= et {
                max_exp = max_exp.max(vals[c][i].exp());
                zero_on &= vals[c][i] == 0.0;
            }
        }
    }

    let half_a = 0.5 * a;
    let pair_results: Vec<PairScan> = (0..js.len())
        .into_par_iter()
        .map(|cj| {
            let mut count = 0;
            let mut worst = None;
            let mut worst_ratio = f64::NEG_INFINITY;
            for ck in 0..cj {
                let bound = half_a * ((cj - ck) as f64).powf(zeta);
                for (i, &r) in grid.nodes().iter().enumerate() {
                    let diff = (vals[cj][i] - vals[ck][i]).abs();
                    if diff > bound * (1.0 + REL) {
                        count += 1;
                    }
                    let ratio = diff / bound;
                    if ratio > worst_ratio {
                        worst_ratio = ratio;
                        worst = Some((js[cj], js[ck], r, diff, bound));
                    }
                }
            }
            (count, worst, worst_ratio)
        })
        .collect();
    let lv: usize = pair_results.iter().map(|p| p.0).sum();
    let lworst = pair_results
        .iter()
        .filter(|p| p.1.is_some())
        .max_by(|x, y| x.2.total_cmp(&y.2))
        .and_then(|p| p.1);

    let derivative = DerivativeCheck {
        pass: dv == 0,
        violations: dv,
        worst: dworst,
    };
    let bounded = BoundednessCheck {
        pass: max_exp.is_finite(),
        max_exp_weight: max_exp,
        zero_on_classical_region: zero_on,
    };
    let lipschitz = LipschitzCheck {
        pass: lv == 0,
        violations: lv,
        worst: lworst,
    };
    Ok(WeightReport {
        weight: *w,
        pass: derivative.pass && bounded.pass && lipschitz.pass,
        derivative,
        bounded,
        lipschitz,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub pass: bool,
    pub lambda_min: f64,
    pub threshold: f64,
    pub slack: f64,
}

/// Smallest eigenvalue of the symmetrized twisted `H + Ẽχ(Ẽ)` against
/// `E₀ + δ₀/2`.
pub fn twisted_gap_check(h: &BlockHamiltonian, w: &WeightSequence, window: &SpectralWindow) -> Result<GapReport> {
    let et = window.e_tilde;
    let nodes = h.grid.nodes();
    let mut extra = Vec::with_capacity(h.n_channels());
    for c in 0..h.n_channels() {
        let j = h.channel_j(c);
        let row: Vec<f64> = nodes
            .iter()
            .map(|&r| Ok(if h.profile.effective_potential(j, r)? <= et { et } else { 0.0 }))
            .collect::<Result<_>>()?;
        extra.push(row);
    }
    let twist = w.on_grid(&h.grid, h.j_max);
    let lambda_min = if h.is_block_diagonal() {
        let off = h.off_diagonal();
        (0..h.n_channels())
            .into_par_iter()
            .map(|c| {
                let d = h.channels[c].diagonal.iter().zip(&extra[c]).map(|(a, b)| a + b).collect();
                let e = (0..off.len())
                    .map(|i| off[i] * (twist[c][i] - twist[c][i + 1]).cosh())
                    .collect();
                SymTridiag::new(d, e).kth_eigenvalue(0)
            })
            .reduce(|| f64::INFINITY, f64::min)
    } else if h.is_real() {
        band_kth_eigenvalue(&h.band::<f64>(Some(&extra), Some(&twist)), 0)
    } else {
        band_kth_eigenvalue(&h.band::<Complex64>(Some(&extra), Some(&twist)), 0)
    };
    let threshold = window.upper + 0.5 * window.delta0;
    let slack = lambda_min - threshold;
    Ok(GapReport {
        pass: slack >= 0.0,
        lambda_min,
        threshold,
        slack,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TunnellingRow {
    pub j: i64,
    pub norm: f64,
    pub term: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TunnellingTable {
    pub mask_constant: f64,
    pub decay_constant: f64,
    pub rows: Vec<TunnellingRow>,
    pub sum: f64,
    /// Sum of the terms with `|j| > J/2` over the sum with `|j| ≤ J/2`.
    pub tail_ratio: Option<f64>,
    /// `ln(max_± norm)` against `|j|` over the upper half, when well-defined.
    pub norm_fit: Option<LineFit>,
}

impl TunnellingTable {
    fn assemble(rows: Vec<TunnellingRow>, j_max: i64, mask_constant: f64, decay_constant: f64) -> Self {
        let sum = rows.iter().map(|r| r.term).sum();
        let split = j_max / 2;
        let head: f64 = rows.iter().filter(|r| r.j.abs() <= split).map(|r| r.term).sum();
        let tail: f64 = rows.iter().filter(|r| r.j.abs() > split).map(|r| r.term).sum();
        let tail_ratio = (head > 0.0).then(|| tail / head);
        let (x, y): (Vec<f64>, Vec<f64>) = (split + 1..=j_max)
            .map(|aj| {
                let n = rows.iter().filter(|r| r.j.abs() == aj).map(|r| r.norm).fold(0.0, f64::max);
                (aj as f64, n)
            })
            .unzip();
        let norm_fit = decay_rate_fit(&x, &y).ok();
        TunnellingTable {
            mask_constant,
            decay_constant,
            rows,
            sum,
            tail_ratio,
            norm_fit,
        }
    }

    /// Running sums in order of increasing `|j|`.
    pub fn partial_sums(&self) -> Vec<(i64, f64)> {
        let jm = self.rows.iter().map(|r| r.j.abs()).max().unwrap_or(0);
        let mut acc = 0.0;
        (0..=jm)
            .map(|aj| {
                acc += self.rows.iter().filter(|r| r.j.abs() == aj).map(|r| r.term).sum::<f64>();
                (aj, acc)
            })
            .collect()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["j", "norm", "weighted_term"],
            self.rows
                .iter()
                .map(|r| vec![r.j.to_string(), fmt_f64(r.norm), fmt_f64(r.term)]),
        )
    }
}

/// `e^{δ₊|j|^ζ}‖1_{[0, c₊|j|^{ζ/σ₊}]} P_j E_I‖²` for every retained `j`.
pub fn tunnelling_interior_sum(
    p: &SpectralProjection,
    c_plus: f64,
    delta_plus: f64,
    sigma_plus: f64,
    zeta: f64,
) -> TunnellingTable {
    let rows = (-p.j_max..=p.j_max)
        .into_par_iter()
        .map(|j| {
            let aj = j.unsigned_abs() as f64;
            let edge = c_plus * aj.powf(zeta / sigma_plus);
            let norm = p.channel_projection_norm(j, 0.0, edge);
            TunnellingRow {
                j,
                norm,
                term: (delta_plus * aj.powf(zeta)).exp() * norm * norm,
            }
        })
        .collect();
    TunnellingTable::assemble(rows, p.j_max, c_plus, delta_plus)
}

/// `‖1_{[c₋|j|^{ζ/σ₋}, r_max]} e^{δ₋ r^{ζσ₋}} P_j E_I‖²` for every retained `j`.
pub fn tunnelling_exterior_sum(
    p: &SpectralProjection,
    c_minus: f64,
    delta_minus: f64,
    sigma_minus: f64,
    zeta: f64,
) -> TunnellingTable {
    let rows = (-p.j_max..=p.j_max)
        .into_par_iter()
        .map(|j| {
            let start = c_minus * (j.unsigned_abs() as f64).powf(zeta / sigma_minus);
            let wt: Vec<f64> = p
                .grid
                .nodes()
                .iter()
                .map(|&r| if r >= start { (delta_minus * r.powf(zeta * sigma_minus)).exp() } else { 0.0 })
                .collect();
            let norm = p.weighted_channel_norm(j, &wt);
            TunnellingRow { j, norm, term: norm * norm }
        })
        .collect();
    TunnellingTable::assemble(rows, p.j_max, c_minus, delta_minus)
}
