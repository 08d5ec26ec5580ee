//! Radial flux profiles, effective potentials and classical regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FluxKind {
    PowerLaw { lambda: f64, sigma: f64 },
    Linear { lambda: f64 },
    UniformField { b0: f64 },
    /// Piecewise linear through `(0, 0)` and the given nodes.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

/// Candidate constants for the upper bound `|Φ| ≤ λ₊(1 + r^σ₊)` and the
/// lower bound `|Φ| ≥ λ₋ r^σ₋` for `r ≥ r₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub lambda_plus: f64,
    pub sigma_plus: f64,
    pub lambda_minus: f64,
    pub sigma_minus: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxProfile {
    pub kind: FluxKind,
    pub growth: GrowthParams,
}

impl FluxProfile {
    pub fn power_law(lambda: f64, sigma: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(sigma >= 1.0) || !lambda.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "power_law needs λ > 0 and σ ≥ 1 (got λ = {lambda}, σ = {sigma})"
            )));
        }
        Ok(FluxProfile {
            kind: FluxKind::PowerLaw { lambda, sigma },
            growth: GrowthParams {
                lambda_plus: lambda,
                sigma_plus: sigma,
                lambda_minus: lambda,
                sigma_minus: sigma,
                r0: 1.0,
            },
        })
    }

    pub fn linear(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidProfile(format!("linear needs λ > 0 (got {lambda})")));
        }
        Ok(FluxProfile {
            kind: FluxKind::Linear { lambda },
            growth: GrowthParams {
                lambda_plus: lambda,
                sigma_plus: 1.0,
                lambda_minus: lambda,
                sigma_minus: 1.0,
                r0: 1.0,
            },
        })
    }

    pub fn uniform_field(b0: f64) -> Result<Self> {
        if !(b0 > 0.0) || !b0.is_finite() {
            return Err(Error::InvalidProfile(format!("uniform_field needs B₀ > 0 (got {b0})")));
        }
        Ok(FluxProfile {
            kind: FluxKind::UniformField { b0 },
            growth: GrowthParams {
                lambda_plus: 0.5 * b0,
                sigma_plus: 2.0,
                lambda_minus: 0.5 * b0,
                sigma_minus: 2.0,
                r0: 1.0,
            },
        })
    }

    /// Tabulated flux. Growth constants default to σ± = 1 with λ₊ the
    /// smallest admissible value and λ₋ the largest admissible one beyond the
    /// first node; override them with [`FluxProfile::with_growth`].
    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != values.len() {
            return Err(Error::InvalidProfile(format!(
                "tabulated flux needs matching non-empty node/value lists ({} nodes, {} values)",
                nodes.len(),
                values.len()
            )));
        }
        if !(nodes[0] > 0.0) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProfile(
                "tabulated nodes must be positive and strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "tabulated flux must be finite and nonnegative (found {v})"
            )));
        }
        let r0 = nodes[0];
        let lambda_plus = nodes
            .iter()
            .zip(&values)
            .map(|(r, v)| v / (1.0 + r))
            .fold(0.0, f64::max);
        let lambda_minus = nodes
            .iter()
            .zip(&values)
            .map(|(r, v)| v / r)
            .fold(f64::INFINITY, f64::min);
        Ok(FluxProfile {
            kind: FluxKind::Tabulated { nodes, values },
            growth: GrowthParams {
                lambda_plus,
                sigma_plus: 1.0,
                lambda_minus,
                sigma_minus: 1.0,
                r0,
            },
        })
    }

    pub fn with_growth(mut self, growth: GrowthParams) -> Self {
        self.growth = growth;
        self
    }

    /// Largest radius at which the profile is defined.
    pub fn r_limit(&self) -> f64 {
        match &self.kind {
            FluxKind::Tabulated { nodes, .. } => *nodes.last().unwrap(),
            _ => f64::INFINITY,
        }
    }

    /// Φ(r).
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("flux evaluated at r = {r} ≤ 0")));
        }
        Ok(match &self.kind {
            FluxKind::PowerLaw { lambda, sigma } => lambda * r.powf(*sigma),
            FluxKind::Linear { lambda } => lambda * r,
            FluxKind::UniformField { b0 } => 0.5 * b0 * r * r,
            FluxKind::Tabulated { nodes, values } => interpolate(nodes, values, r)?,
        })
    }

    /// Magnetic field B(r) = Φ′(r)/r.
    pub fn field(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("field evaluated at r = {r} ≤ 0")));
        }
        Ok(match &self.kind {
            FluxKind::PowerLaw { lambda, sigma } => lambda * sigma * r.powf(sigma - 2.0),
            FluxKind::Linear { lambda } => lambda / r,
            FluxKind::UniformField { b0 } => *b0,
            FluxKind::Tabulated { nodes, .. } => {
                let hi = *nodes.last().unwrap();
                let d = 1e-4 * nodes[0].min(hi - nodes[0]).max(nodes[0]);
                let (a, b) = ((r - d).max(0.5 * r), (r + d).min(hi));
                if b <= a {
                    return Err(Error::Extrapolation { r, hi });
                }
                (self.eval(b)? - self.eval(a)?) / (b - a) / r
            }
        })
    }

    /// V_j(r) = (Φ(r) − j)²/r².
    pub fn effective_potential(&self, j: i64, r: f64) -> Result<f64> {
        let phi = self.eval(r)?;
        let d = phi - j as f64;
        Ok(d * d / (r * r))
    }

    /// Node-wise potential on a grid.
    pub fn potential_on(&self, j: i64, grid: &RadialGrid) -> Result<Vec<f64>> {
        grid.nodes().iter().map(|&r| self.effective_potential(j, r)).collect()
    }

    /// Node indicator of `{V_j ≤ energy}`.
    pub fn allowed_mask(&self, j: i64, energy: f64, grid: &RadialGrid) -> Result<Vec<bool>> {
        Ok(self.potential_on(j, grid)?.into_iter().map(|v| v <= energy).collect())
    }

    /// The allowed set `{r : V_j(r) ≤ E}`. Linear flux uses the closed form
    /// (cut at `r_max`); everything else is a grid scan.
    pub fn classical_region(&self, j: i64, energy: f64, grid: &RadialGrid) -> Result<ClassicalRegion> {
        if !(energy >= 0.0) {
            return Err(Error::domain(format!("classical region at negative energy {energy}")));
        }
        if let FluxKind::Linear { lambda } = self.kind {
            let s = energy.sqrt();
            let jf = j as f64;
            let interval = if s < lambda {
                (j > 0).then(|| (jf / (lambda + s), jf / (lambda - s)))
            } else if j > 0 {
                Some((jf / (lambda + s), grid.r_max()))
            } else if j < 0 {
                Some((-jf / (s - lambda), grid.r_max()))
            } else {
                Some((grid.h(), grid.r_max()))
            };
            let interval = interval
                .map(|(a, b)| (a, b.min(grid.r_max())))
                .filter(|(a, b)| a <= b);
            return Ok(ClassicalRegion {
                j,
                energy,
                interval,
                disconnected: false,
            });
        }
        let mask = self.allowed_mask(j, energy, grid)?;
        let first = mask.iter().position(|&m| m);
        let last = mask.iter().rposition(|&m| m);
        let (interval, disconnected) = match (first, last) {
            (Some(a), Some(b)) => {
                let gap = mask[a..=b].iter().any(|&m| !m);
                if gap {
                    log::warn!("classical region for j = {j}, E = {energy} is disconnected; using its hull");
                }
                (Some((grid.nodes()[a], grid.nodes()[b])), gap)
            }
            _ => (None, false),
        };
        Ok(ClassicalRegion {
            j,
            energy,
            interval,
            disconnected,
        })
    }

    /// Checks both growth bounds at every grid node.
    pub fn validate_growth_conditions(&self, grid: &RadialGrid) -> Result<GrowthReport> {
        let g = self.growth;
        let mut upper = Vec::with_capacity(grid.n_r());
        let mut lower = Vec::with_capacity(grid.n_r());
        for &r in grid.nodes() {
            let phi = self.eval(r)?.abs();
            let ub = g.lambda_plus * (1.0 + r.powf(g.sigma_plus));
            upper.push(phi <= ub * (1.0 + 1e-14));
            if r >= g.r0 {
                let lb = g.lambda_minus * r.powf(g.sigma_minus);
                lower.push(phi >= lb * (1.0 - 1e-14));
            } else {
                lower.push(true);
            }
        }
        let first_upper = upper.iter().position(|&ok| !ok);
        let first_lower = lower.iter().position(|&ok| !ok);
        Ok(GrowthReport {
            params: g,
            pass: first_upper.is_none() && first_lower.is_none(),
            upper_first_violation: first_upper.map(|i| grid.nodes()[i]),
            lower_first_violation: first_lower.map(|i| grid.nodes()[i]),
            upper,
            lower,
        })
    }
}

fn interpolate(nodes: &[f64], values: &[f64], r: f64) -> Result<f64> {
    let hi = *nodes.last().unwrap();
    if r > hi {
        return Err(Error::Extrapolation { r, hi });
    }
    let k = nodes.partition_point(|&x| x < r);
    let (x0, y0) = if k == 0 { (0.0, 0.0) } else { (nodes[k - 1], values[k - 1]) };
    let (x1, y1) = (nodes[k], values[k]);
    Ok(y0 + (y1 - y0) * (r - x0) / (x1 - x0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalRegion {
    pub j: i64,
    pub energy: f64,
    pub interval: Option<(f64, f64)>,
    /// The scanned allowed set had a gap; `interval` is its hull.
    pub disconnected: bool,
}

impl ClassicalRegion {
    pub fn is_empty(&self) -> bool {
        self.interval.is_none()
    }

    pub fn contains(&self, r: f64) -> bool {
        self.interval.is_some_and(|(a, b)| a <= r && r <= b)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub params: GrowthParams,
    pub pass: bool,
    pub upper_first_violation: Option<f64>,
    pub lower_first_violation: Option<f64>,
    #[serde(skip)]
    pub upper: Vec<bool>,
    #[serde(skip)]
    pub lower: Vec<bool>,
}

/// Constants for the lower bound `V_j(r) − E ≥ |j|^{2(σ₊−1)/σ₊}` on
/// `r ≤ ε|j|^{1/σ₊}`, `j₀ ≤ |j| ≤ j_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerBound {
    pub j0: i64,
    pub eps: f64,
}

/// The largest `ε` for which the inner forbidden-region bound holds at every
/// grid node for all `j0 ≤ |j| ≤ j_max`, or `None` if no positive value works.
pub fn inner_forbidden_eps(
    profile: &FluxProfile,
    energy: f64,
    j0: i64,
    j_max: i64,
    grid: &RadialGrid,
) -> Result<Option<f64>> {
    let sp = profile.growth.sigma_plus;
    let mut eps = f64::INFINITY;
    for aj in j0.max(1)..=j_max {
        let scale = (aj as f64).powf(1.0 / sp);
        let need = (aj as f64).powf(2.0 * (sp - 1.0) / sp);
        let mut reach = grid.r_max();
        for sign in [1, -1] {
            let j = sign * aj;
            for &r in grid.nodes() {
                if profile.effective_potential(j, r)? - energy < need {
                    reach = reach.min(r);
                    break;
                }
            }
        }
        // every node strictly below `reach` satisfies the bound
        let e_j = (reach - 0.5 * grid.h()) / scale;
        if e_j < grid.h() / scale {
            return Ok(None);
        }
        eps = eps.min(e_j);
    }
    Ok(eps.is_finite().then_some(eps))
}

/// The smallest `η > 1` (searched on a geometric ladder) such that
/// `V_j(r) − E ≥ λ₀² r^{2(σ₋−1)}` for `r ≥ η(1+|j|)^{1/σ₋}`, together with
/// the realised `λ₀²`. The ladder stops once the support leaves the box.
pub fn outer_forbidden_eta(
    profile: &FluxProfile,
    energy: f64,
    j_max: i64,
    grid: &RadialGrid,
) -> Result<Option<(f64, f64)>> {
    let g = profile.growth;
    let mut eta: f64 = 1.0f64.max(g.r0) * 1.0001;
    while eta < grid.r_max() {
        let mut lam0_sq = f64::INFINITY;
        for j in -j_max..=j_max {
            let start = eta * (1.0 + j.unsigned_abs() as f64).powf(1.0 / g.sigma_minus);
            for &r in grid.nodes().iter().filter(|&&r| r >= start) {
                let q = (profile.effective_potential(j, r)? - energy) / r.powf(2.0 * (g.sigma_minus - 1.0));
                lam0_sq = lam0_sq.min(q);
            }
        }
        if lam0_sq > 0.0 && lam0_sq.is_finite() {
            return Ok(Some((eta, lam0_sq)));
        }
        eta *= 1.05;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> RadialGrid {
        RadialGrid::new(999, 10.0).unwrap()
    }

    #[test]
    fn flux_values() {
        assert_eq!(FluxProfile::power_law(1.0, 2.0).unwrap().eval(2.0).unwrap(), 4.0);
        assert_eq!(FluxProfile::linear(1.0).unwrap().eval(3.0).unwrap(), 3.0);
        assert_eq!(FluxProfile::uniform_field(2.0).unwrap().eval(1.0).unwrap(), 1.0);
        assert!(matches!(FluxProfile::linear(1.0).unwrap().eval(0.0), Err(Error::Domain(_))));
        assert!(FluxProfile::power_law(1.0, 0.5).is_err());
    }

    #[test]
    fn potential_values() {
        let p = FluxProfile::power_law(1.0, 2.0).unwrap();
        assert_eq!(p.effective_potential(3, 1.0).unwrap(), 4.0);
        let l = FluxProfile::linear(1.0).unwrap();
        assert_eq!(l.effective_potential(0, 2.0).unwrap(), 1.0);
        assert_eq!(l.effective_potential(2, 2.0).unwrap(), 0.0);
        assert!(l.effective_potential(1, -1.0).is_err());
    }

    #[test]
    fn tabulated_interpolation() {
        let t = FluxProfile::tabulated(vec![1.0, 2.0, 4.0], vec![1.0, 4.0, 4.0]).unwrap();
        assert!((t.eval(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((t.eval(1.5).unwrap() - 2.5).abs() < 1e-15);
        assert!((t.eval(3.0).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(t.eval(4.5), Err(Error::Extrapolation { .. })));
        assert!(FluxProfile::tabulated(vec![1.0, 2.0], vec![1.0, -1.0]).is_err());
        assert!(FluxProfile::tabulated(vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
        let u = FluxProfile::uniform_field(2.0).unwrap();
        assert!((u.field(0.7).unwrap() - 2.0).abs() < 1e-15);
        let q = FluxProfile::tabulated(vec![1.0, 2.0, 3.0], vec![1.0, 4.0, 9.0]).unwrap();
        assert!((q.field(1.5).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn linear_closed_form_regions() {
        let l = FluxProfile::linear(1.0).unwrap();
        let g = grid();
        let c = l.classical_region(1, 0.25, &g).unwrap();
        let (a, b) = c.interval.unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15 && (b - 2.0).abs() < 1e-15);
        assert!(l.classical_region(-2, 0.5, &g).unwrap().is_empty());
        assert!(l.classical_region(0, 0.5, &g).unwrap().is_empty());
        assert!(l.classical_region(1, -0.1, &g).is_err());
    }

    #[test]
    fn scanned_region_power_law() {
        let p = FluxProfile::power_law(1.0, 2.0).unwrap();
        let g = RadialGrid::new(99, 10.0).unwrap();
        let c = p.classical_region(0, 1.0, &g).unwrap();
        let (a, b) = c.interval.unwrap();
        assert!((a - 0.1).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-9);
        assert!(!c.disconnected);
    }

    #[test]
    fn linear_scan_agrees_with_closed_form() {
        let l = FluxProfile::linear(1.0).unwrap();
        let tab = FluxProfile::tabulated(vec![10.0], vec![10.0]).unwrap();
        let g = grid();
        for j in 1..6 {
            for e in [0.1, 0.25, 0.5, 0.8] {
                let exact = l.classical_region(j, e, &g).unwrap().interval.unwrap();
                let scanned = tab.classical_region(j, e, &g).unwrap().interval.unwrap();
                assert!((exact.0 - scanned.0).abs() <= g.h() * (1.0 + 1e-9));
                assert!((exact.1 - scanned.1).abs() <= g.h() * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn growth_condition_reports() {
        let g = grid();
        let p = FluxProfile::power_law(1.0, 1.5).unwrap();
        assert!(p.validate_growth_conditions(&g).unwrap().pass);
        let mut l = FluxProfile::linear(1.0).unwrap();
        l.growth.sigma_minus = 2.0;
        let rep = l.validate_growth_conditions(&g).unwrap();
        assert!(!rep.pass);
        assert!(rep.upper_first_violation.is_none());
        assert!(rep.lower_first_violation.unwrap() > 1.0);
        let u = FluxProfile::uniform_field(2.0).unwrap();
        assert!(u.validate_growth_conditions(&g).unwrap().pass);
    }

    #[test]
    fn inner_lemma_holds_with_scanned_eps() {
        let p = FluxProfile::power_law(1.0, 1.5).unwrap();
        let g = RadialGrid::new(400, 20.0).unwrap();
        let e = 1.5;
        let j0 = 4;
        let eps = inner_forbidden_eps(&p, e, j0, 30, &g).unwrap().unwrap();
        assert!(eps > 0.0);
        for aj in j0..=30i64 {
            for j in [aj, -aj] {
                for &r in g.nodes() {
                    if r <= eps * (aj as f64).powf(1.0 / 1.5) {
                        let lhs = p.effective_potential(j, r).unwrap() - e;
                        assert!(lhs >= (aj as f64).powf(2.0 * 0.5 / 1.5));
                    }
                }
            }
        }
        // the proof's choice 16ε² ≤ 1/(E+1), λ₊ε^σ ≤ 1/2, j₀ = 4λ₊ is admissible
        let eps_proof = (1.0 / (16.0 * (e + 1.0))).sqrt().min(0.5f64.powf(1.0 / 1.5));
        assert!(eps >= eps_proof);
    }

    #[test]
    fn outer_lemma_on_power_law() {
        let p = FluxProfile::power_law(1.0, 1.5).unwrap();
        let g = RadialGrid::new(400, 40.0).unwrap();
        let (eta, lam0) = outer_forbidden_eta(&p, 1.5, 6, &g).unwrap().unwrap();
        assert!(eta > 1.0 && lam0 > 0.0);
    }

    proptest! {
        #[test]
        fn regions_are_nested_in_energy(
            kind in 0usize..3,
            lam in 0.3f64..3.0,
            sig in 1.0f64..2.5,
            j in -8i64..12,
            e1 in 0.0f64..6.0,
            de in 0.0f64..3.0,
        ) {
            let p = match kind {
                0 => FluxProfile::power_law(lam, sig).unwrap(),
                1 => FluxProfile::linear(lam).unwrap(),
                _ => FluxProfile::uniform_field(lam).unwrap(),
            };
            let g = RadialGrid::new(200, 12.0).unwrap();
            let small = p.classical_region(j, e1, &g).unwrap();
            let big = p.classical_region(j, e1 + de, &g).unwrap();
            if let Some((a, b)) = small.interval {
                let (c, d) = big.interval.expect("larger energy lost the region");
                prop_assert!(c <= a * (1.0 + 1e-12) && b <= d * (1.0 + 1e-12));
            }
            let closed_form = matches!(p.kind, FluxKind::Linear { .. });
            for &r in g.nodes() {
                if small.contains(r) && !small.disconnected && !closed_form {
                    prop_assert!(p.effective_potential(j, r).unwrap() <= e1);
                }
            }
        }

        #[test]
        fn potential_zero_iff_flux_matches(j in -5i64..20, r in 0.05f64..8.0) {
            let p = FluxProfile::power_law(1.0, 2.0).unwrap();
            let v = p.effective_potential(j, r).unwrap();
            prop_assert_eq!(v == 0.0, p.eval(r).unwrap() == j as f64);
        }
    }
}
