//! Angular perturbations `W(r, θ)`: closed forms, Fourier tables, Gevrey
//! envelopes and the constant ξ(a, ζ).

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::io::{fmt_f64, read_csv, write_csv};

/// Radial profile `g(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Radial {
    Constant { value: f64 },
    /// `amp·e^{−rate·r}`
    Exponential { amp: f64, rate: f64 },
    /// `amp·(1 + (r/core)²)^{−p/2}`, decaying like `r^{−p}`.
    Algebraic { amp: f64, p: f64, core: f64 },
    /// `amp·e^{−(r−center)²/(2 width²)}`
    Gaussian { amp: f64, center: f64, width: f64 },
}

impl Radial {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Radial::Constant { value } => value,
            Radial::Exponential { amp, rate } => amp * (-rate * r).exp(),
            Radial::Algebraic { amp, p, core } => amp * (1.0 + (r / core).powi(2)).powf(-0.5 * p),
            Radial::Gaussian { amp, center, width } => {
                amp * (-(r - center).powi(2) / (2.0 * width * width)).exp()
            }
        }
    }
}

/// Angular factor of a term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Angular {
    Constant,
    Cos { m: u32 },
    Sin { m: u32 },
    /// Poisson kernel `(1 − q²)/(1 − 2q cos θ + q²)`, with Fourier
    /// coefficients `√(2π) q^{|m|}`.
    Poisson { q: f64 },
}

impl Angular {
    pub fn eval(&self, theta: f64) -> f64 {
        match *self {
            Angular::Constant => 1.0,
            Angular::Cos { m } => (m as f64 * theta).cos(),
            Angular::Sin { m } => (m as f64 * theta).sin(),
            Angular::Poisson { q } => (1.0 - q * q) / (1.0 - 2.0 * q * theta.cos() + q * q),
        }
    }

    /// Exact `(1/√2π)∫ f(θ) e^{−imθ} dθ`.
    pub fn coefficient(&self, m: i64) -> Complex64 {
        let s = (2.0 * PI).sqrt();
        match *self {
            Angular::Constant => Complex64::new(if m == 0 { s } else { 0.0 }, 0.0),
            Angular::Cos { m: 0 } => Complex64::new(if m == 0 { s } else { 0.0 }, 0.0),
            Angular::Cos { m: k } => {
                Complex64::new(if m.unsigned_abs() == k as u64 { 0.5 * s } else { 0.0 }, 0.0)
            }
            Angular::Sin { m: k } => {
                if k == 0 || m.unsigned_abs() != k as u64 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, -0.5 * s * m.signum() as f64)
                }
            }
            Angular::Poisson { q } => Complex64::new(s * q.powi(m.abs() as i32), 0.0),
        }
    }

    /// Highest mode carried, if finite.
    pub fn max_mode(&self) -> Option<usize> {
        match *self {
            Angular::Constant => Some(0),
            Angular::Cos { m } | Angular::Sin { m } => Some(m as usize),
            Angular::Poisson { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub radial: Radial,
    pub angular: Angular,
}

/// `W(r, θ) = Σ_k g_k(r) f_k(θ)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClosedForm {
    pub terms: Vec<Term>,
}

impl ClosedForm {
    pub fn zero() -> Self {
        ClosedForm { terms: vec![] }
    }

    pub fn single(radial: Radial, angular: Angular) -> Self {
        ClosedForm {
            terms: vec![Term { radial, angular }],
        }
    }

    pub fn eval(&self, r: f64, theta: f64) -> f64 {
        self.terms.iter().map(|t| t.radial.eval(r) * t.angular.eval(theta)).sum()
    }

    pub fn is_radial(&self) -> bool {
        self.terms
            .iter()
            .all(|t| matches!(t.angular, Angular::Constant | Angular::Cos { m: 0 }))
    }

    /// Highest angular mode if all terms are trigonometric polynomials.
    pub fn max_mode(&self) -> Option<usize> {
        self.terms
            .iter()
            .map(|t| t.angular.max_mode())
            .try_fold(0, |acc, m| m.map(|m| acc.max(m)))
    }

    /// An envelope valid for every term: `a` is the smallest Poisson rate
    /// (or `a_default` for trigonometric polynomials) and `b` absorbs the
    /// finite modes.
    pub fn envelope(&self, a_default: f64, zeta: f64) -> GevreyEnvelope {
        let a = self
            .terms
            .iter()
            .filter_map(|t| match t.angular {
                Angular::Poisson { q } => Some(-q.ln()),
                _ => None,
            })
            .fold(a_default, f64::min);
        let s = (2.0 * PI).sqrt();
        let b = self
            .terms
            .iter()
            .map(|t| {
                let c = match t.angular {
                    Angular::Constant | Angular::Cos { m: 0 } => s,
                    Angular::Cos { m } | Angular::Sin { m } => 0.5 * s * (a * (m as f64).powf(zeta)).exp(),
                    Angular::Poisson { .. } => s,
                };
                (c, t.radial)
            })
            .collect();
        GevreyEnvelope { a, zeta, b }
    }

    /// Decay class of the non-symmetric part, read off the radial profiles
    /// of the angle-dependent terms (the slowest one wins).
    pub fn infer_decay_class(&self) -> DecayClass {
        let mut class = DecayClass::None;
        let mut any = false;
        for t in self.terms.iter().filter(|t| !matches!(t.angular, Angular::Constant | Angular::Cos { m: 0 })) {
            any = true;
            let c = match t.radial {
                Radial::Constant { .. } => return DecayClass::None,
                Radial::Algebraic { p, .. } => DecayClass::Power { p },
                Radial::Exponential { rate, .. } => DecayClass::StretchedExponential { mu: rate, s: 1.0 },
                Radial::Gaussian { width, .. } => DecayClass::StretchedExponential {
                    mu: 0.5 / (width * width),
                    s: 2.0,
                },
            };
            class = slower(class, c);
        }
        if any {
            class
        } else {
            DecayClass::None
        }
    }
}

fn slower(a: DecayClass, b: DecayClass) -> DecayClass {
    use DecayClass::*;
    match (a, b) {
        (None, x) | (x, None) => x,
        (Power { p: p1 }, Power { p: p2 }) => Power { p: p1.min(p2) },
        (Power { p }, StretchedExponential { .. }) | (StretchedExponential { .. }, Power { p }) => Power { p },
        (StretchedExponential { mu: m1, s: s1 }, StretchedExponential { mu: m2, s: s2 }) => {
            if s1 < s2 || (s1 == s2 && m1 <= m2) {
                StretchedExponential { mu: m1, s: s1 }
            } else {
                StretchedExponential { mu: m2, s: s2 }
            }
        }
    }
}

/// Radial decay of the non-symmetric part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayClass {
    Power { p: f64 },
    StretchedExponential { mu: f64, s: f64 },
    None,
}

/// `|Ŵ(r, m)| ≤ b(r)·e^{−a|m|^ζ}` with `b = Σ c_k g_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevreyEnvelope {
    pub a: f64,
    pub zeta: f64,
    pub b: Vec<(f64, Radial)>,
}

impl GevreyEnvelope {
    pub fn new(a: f64, zeta: f64, b: Vec<(f64, Radial)>) -> Result<Self> {
        if !(a > 0.0) || !(zeta > 0.0 && zeta <= 1.0) {
            return Err(Error::domain(format!("envelope needs a > 0 and ζ ∈ (0, 1] (got a = {a}, ζ = {zeta})")));
        }
        Ok(GevreyEnvelope { a, zeta, b })
    }

    pub fn b_at(&self, r: f64) -> f64 {
        self.b.iter().map(|(c, g)| c * g.eval(r).abs()).sum()
    }

    pub fn bound(&self, r: f64, m: i64) -> f64 {
        self.b_at(r) * (-self.a * (m.unsigned_abs() as f64).powf(self.zeta)).exp()
    }

    pub fn b_max(&self, grid: &RadialGrid) -> f64 {
        grid.nodes().iter().map(|&r| self.b_at(r)).fold(0.0, f64::max)
    }

    /// Smallest `M` with `b_max·e^{−a M^ζ} < 1e−12`.
    pub fn default_m_max(&self, grid: &RadialGrid) -> usize {
        let bm = self.b_max(grid);
        if bm < 1e-12 {
            return 0;
        }
        let m = ((bm / 1e-12).ln() / self.a).powf(1.0 / self.zeta);
        let mut k = m.floor() as usize;
        while bm * (-self.a * (k as f64).powf(self.zeta)).exp() >= 1e-12 {
            k += 1;
        }
        k
    }

    /// `Σ_{|m| > M} b_max e^{−a|m|^ζ}`: the norm of couplings dropped by an
    /// angular truncation at `M`.
    pub fn truncation_bound(&self, grid: &RadialGrid, m_max: usize) -> f64 {
        2.0 * self.b_max(grid) * stretched_tail(self.a, self.zeta, m_max, 1e-16)
    }
}

/// Fourier coefficients on the grid, `m ∈ [−M, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub r: Vec<f64>,
    pub m_max: usize,
    data: Vec<Complex64>,
}

impl CoefficientTable {
    pub fn zeros(grid: &RadialGrid, m_max: usize) -> Self {
        CoefficientTable {
            r: grid.nodes().to_vec(),
            m_max,
            data: vec![Complex64::new(0.0, 0.0); grid.n_r() * (2 * m_max + 1)],
        }
    }

    pub fn n_r(&self) -> usize {
        self.r.len()
    }

    #[inline]
    fn idx(&self, i: usize, m: i64) -> usize {
        i * (2 * self.m_max + 1) + (m + self.m_max as i64) as usize
    }

    /// `Ŵ(r_i, m)`, zero outside the retained modes. `i` is 0-based.
    pub fn get(&self, i: usize, m: i64) -> Complex64 {
        if m.unsigned_abs() as usize > self.m_max {
            Complex64::new(0.0, 0.0)
        } else {
            self.data[self.idx(i, m)]
        }
    }

    pub fn set(&mut self, i: usize, m: i64, v: Complex64) {
        let k = self.idx(i, m);
        self.data[k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    /// True if only the `m = 0` column is nonzero.
    pub fn is_radial(&self) -> bool {
        (0..self.n_r()).all(|i| {
            (1..=self.m_max as i64).all(|m| self.get(i, m) == Complex64::new(0.0, 0.0) && self.get(i, -m) == Complex64::new(0.0, 0.0))
        })
    }

    /// True if every coefficient is real.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn check_grid(&self, grid: &RadialGrid) -> Result<()> {
        let same = self.r.len() == grid.n_r()
            && self
                .r
                .iter()
                .zip(grid.nodes())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));
        if same {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "coefficient table has {} nodes up to r = {:?}, grid has {} nodes up to {}",
                self.r.len(),
                self.r.last(),
                grid.n_r(),
                grid.r_max()
            )))
        }
    }

    /// Largest violation of `Ŵ(r, −m) = conj Ŵ(r, m)`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_r() {
            for m in 0..=self.m_max as i64 {
                worst = worst.max((self.get(i, -m) - self.get(i, m).conj()).norm());
            }
        }
        worst
    }

    /// Columns `(i, r_i, m, re, im)` with 1-based node index.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.n_r()).flat_map(|i| {
            (-(self.m_max as i64)..=self.m_max as i64).map(move |m| {
                let z = self.get(i, m);
                vec![(i + 1).to_string(), fmt_f64(self.r[i]), m.to_string(), fmt_f64(z.re), fmt_f64(z.im)]
            })
        });
        write_csv(path, &["i", "r_i", "m", "re", "im"], rows)
    }

    /// Loads a table written by [`CoefficientTable::save_csv`] onto `grid`.
    /// Missing `(i, m)` entries are zero.
    pub fn load_csv(path: &Path, grid: &RadialGrid) -> Result<Self> {
        let (header, rows) = read_csv(path)?;
        if header != ["i", "r_i", "m", "re", "im"] {
            return Err(Error::config("w.table", format!("unexpected CSV header {header:?}")));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::config("w.table", format!("cannot parse {what} `{s}`")))
        };
        let mut entries = Vec::with_capacity(rows.len());
        let mut m_max = 0usize;
        for row in &rows {
            let i = parse(&row[0], "i")? as usize;
            let m = parse(&row[2], "m")? as i64;
            if i == 0 || i > grid.n_r() {
                return Err(Error::GridMismatch(format!("node index {i} outside 1..={}", grid.n_r())));
            }
            let r = parse(&row[1], "r_i")?;
            let want = grid.nodes()[i - 1];
            if (r - want).abs() > 1e-9 * want.max(1.0) {
                return Err(Error::GridMismatch(format!("row for node {i} has r = {r}, grid has {want}")));
            }
            m_max = m_max.max(m.unsigned_abs() as usize);
            entries.push((i - 1, m, Complex64::new(parse(&row[3], "re")?, parse(&row[4], "im")?)));
        }
        let mut t = CoefficientTable::zeros(grid, m_max);
        for (i, m, z) in entries {
            t.set(i, m, z);
        }
        Ok(t)
    }
}

/// Trapezoidal Fourier coefficients of a closed form on the grid.
pub fn fourier_coefficients(w: &ClosedForm, grid: &RadialGrid, m_max: usize, n_theta: usize) -> Result<CoefficientTable> {
    if n_theta < 4 * m_max || n_theta == 0 {
        return Err(Error::Aliasing { n_theta, m_max });
    }
    let mut t = CoefficientTable::zeros(grid, m_max);
    if w.terms.is_empty() {
        return Ok(t);
    }
    let dtheta = 2.0 * PI / n_theta as f64;
    let norm = dtheta / (2.0 * PI).sqrt();
    let thetas: Vec<f64> = (0..n_theta).map(|k| k as f64 * dtheta).collect();
    // per-term angular transforms, then radial scaling
    let angular: Vec<Vec<Complex64>> = w
        .terms
        .iter()
        .map(|term| {
            let f: Vec<f64> = thetas.iter().map(|&th| term.angular.eval(th)).collect();
            (-(m_max as i64)..=m_max as i64)
                .map(|m| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (k, fk) in f.iter().enumerate() {
                        // exact phase reduction keeps the sum symmetric in ±m
                        let ph = ((m * k as i64).rem_euclid(n_theta as i64)) as f64 * dtheta;
                        acc += Complex64::new(ph.cos(), -ph.sin()) * *fk;
                    }
                    let z = acc * norm;
                    // real even factors have real coefficients, odd ones imaginary
                    match term.angular {
                        Angular::Sin { .. } => Complex64::new(0.0, z.im),
                        _ => Complex64::new(z.re, 0.0),
                    }
                })
                .collect()
        })
        .collect();
    for (i, &r) in grid.nodes().iter().enumerate() {
        for (term, coeffs) in w.terms.iter().zip(&angular) {
            let g = term.radial.eval(r);
            if g == 0.0 {
                continue;
            }
            for (c, m) in coeffs.iter().zip(-(m_max as i64)..=m_max as i64) {
                let k = t.idx(i, m);
                t.data[k] += c * g;
            }
        }
    }
    Ok(t)
}

/// Angular truncation and quadrature size for a closed form: finite modes
/// are kept exactly, otherwise the envelope default is used.
pub fn default_resolution(w: &ClosedForm, env: &GevreyEnvelope, grid: &RadialGrid) -> (usize, usize) {
    let m = w.max_mode().unwrap_or_else(|| env.default_m_max(grid));
    let n_theta = (4 * m).max(64).next_power_of_two();
    (m, n_theta)
}

/// A perturbation as the operator sees it: its coefficient table on the
/// grid plus the envelope and decay class claimed for it.
#[derive(Debug, Clone)]
pub struct AngularPotential {
    /// `None` when the table was loaded from data.
    pub closed_form: Option<ClosedForm>,
    pub table: CoefficientTable,
    pub envelope: Option<GevreyEnvelope>,
    pub decay: DecayClass,
}

impl AngularPotential {
    pub fn zero(grid: &RadialGrid) -> Self {
        AngularPotential {
            closed_form: Some(ClosedForm::zero()),
            table: CoefficientTable::zeros(grid, 0),
            envelope: None,
            decay: DecayClass::None,
        }
    }

    /// Tabulates `w`. Without an explicit envelope the closed form's own
    /// envelope (with `a = 1`, `ζ = 1` for trigonometric polynomials) is used;
    /// `m_max` defaults to the envelope's truncation rule.
    pub fn from_closed_form(
        w: ClosedForm,
        grid: &RadialGrid,
        envelope: Option<GevreyEnvelope>,
        m_max: Option<usize>,
        n_theta: Option<usize>,
    ) -> Result<Self> {
        let env = envelope.unwrap_or_else(|| w.envelope(1.0, 1.0));
        let (m_auto, nt_auto) = default_resolution(&w, &env, grid);
        let m = m_max.unwrap_or(m_auto);
        let nt = n_theta.unwrap_or_else(|| nt_auto.max((4 * m).next_power_of_two()));
        let table = fourier_coefficients(&w, grid, m, nt)?;
        let decay = w.infer_decay_class();
        let envelope = (!w.terms.is_empty()).then_some(env);
        Ok(AngularPotential {
            closed_form: Some(w),
            table,
            envelope,
            decay,
        })
    }

    pub fn from_table(table: CoefficientTable, envelope: Option<GevreyEnvelope>, decay: DecayClass) -> Self {
        AngularPotential {
            closed_form: None,
            table,
            envelope,
            decay,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GevreyReport {
    pub pass: bool,
    pub violations: usize,
    /// First failing entry as (0-based node, m).
    pub first_violation: Option<(usize, i64)>,
    /// Largest `a` for which the envelope holds with the given `b` and `ζ`,
    /// `None` if no positive value works.
    pub tightest_a: Option<f64>,
    /// Entries below this magnitude are treated as quadrature noise.
    pub noise_floor: f64,
}

pub fn gevrey_validate(table: &CoefficientTable, env: &GevreyEnvelope) -> GevreyReport {
    let floor = 1e-13 * table.max_abs();
    let mut violations = 0;
    let mut first = None;
    let mut tightest = f64::INFINITY;
    let mut admissible = true;
    for (i, &r) in table.r.iter().enumerate() {
        let b = env.b_at(r);
        for m in -(table.m_max as i64)..=table.m_max as i64 {
            let z = table.get(i, m).norm();
            if z <= floor {
                continue;
            }
            if z > env.bound(r, m) * (1.0 + 1e-12) {
                violations += 1;
                first.get_or_insert((i, m));
            }
            if m == 0 {
                admissible &= z <= b * (1.0 + 1e-12);
            } else if b > 0.0 {
                tightest = tightest.min((b / z).ln() / (m.unsigned_abs() as f64).powf(env.zeta));
            } else {
                admissible = false;
            }
        }
    }
    GevreyReport {
        pass: violations == 0,
        violations,
        first_violation: first,
        tightest_a: (admissible && tightest > 0.0).then_some(tightest),
        noise_floor: floor,
    }
}

/// `W_s(r_i) = Ŵ(r_i, 0)/√(2π)` and the table with the `m = 0` column removed.
pub fn symmetric_split(table: &CoefficientTable) -> (Vec<f64>, CoefficientTable) {
    let s = (2.0 * PI).sqrt();
    let ws = (0..table.n_r()).map(|i| table.get(i, 0).re / s).collect();
    let mut ns = table.clone();
    for i in 0..table.n_r() {
        ns.set(i, 0, Complex64::new(0.0, 0.0));
    }
    (ws, ns)
}

/// `Σ_{m > from} e^{−c m^ζ}`, summed until the integral tail bound drops
/// below `tol`; very slow tails are closed with an Euler–Maclaurin estimate.
fn stretched_tail(c: f64, zeta: f64, from: usize, tol: f64) -> f64 {
    const CAP: usize = 1 << 22;
    let f = |m: f64| (-c * m.powf(zeta)).exp();
    let mut sum = 0.0;
    let mut m = from;
    loop {
        if integral_tail(c, zeta, m as f64) < tol {
            return sum;
        }
        if m - from >= CAP {
            let x = m as f64;
            let df = -c * zeta * x.powf(zeta - 1.0) * f(x);
            return sum + integral_tail(c, zeta, x) - 0.5 * f(x) - df / 12.0;
        }
        m += 1;
        sum += f(m as f64);
    }
}

/// `∫_x^∞ e^{−c t^ζ} dt = Γ(1/ζ, c x^ζ)/(ζ c^{1/ζ})`.
fn integral_tail(c: f64, zeta: f64, x: f64) -> f64 {
    use statrs::function::gamma::{gamma_ur, ln_gamma};
    let s = 1.0 / zeta;
    let y = c * x.powf(zeta);
    let q = if y > 0.0 { gamma_ur(s, y) } else { 1.0 };
    q * (ln_gamma(s) - s * c.ln() - zeta.ln()).exp()
}

/// ξ(a, ζ) = Σ_{m∈ℤ} e^{−(a/2)|m|^ζ}.
pub fn xi_constant(a: f64, zeta: f64, tol: f64) -> Result<f64> {
    if !(a > 0.0) || !(zeta > 0.0 && zeta <= 1.0) || !(tol > 0.0) {
        return Err(Error::domain(format!("ξ needs a > 0, ζ ∈ (0, 1], tol > 0 (got {a}, {zeta}, {tol})")));
    }
    if a.is_infinite() {
        return Ok(1.0);
    }
    Ok(1.0 + 2.0 * stretched_tail(0.5 * a, zeta, 0, 0.5 * tol))
}

/// `|j + k|^ζ ≤ |j|^ζ + |k|^ζ`.
pub fn gevrey_triangle_holds(j: i64, k: i64, zeta: f64) -> bool {
    let p = |x: i64| (x.unsigned_abs() as f64).powf(zeta);
    p(j + k) <= (p(j) + p(k)) * (1.0 + 4.0 * f64::EPSILON)
}
