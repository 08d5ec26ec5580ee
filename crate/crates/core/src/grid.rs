//! Radial grid and the per-channel radial operator.
//!
//! Channel `j` acts on `φ(r)` as `−(1/r)(r φ′)′ + V_j φ`. It is discretized
//! in flux form on the nodes `r_i = i·h` and symmetrized with
//! `u_i = √r_i φ_i`, which maps the weighted norm `Σ|φ_i|² r_i h` onto
//! `Σ|u_i|² h`. For `j = 0` the inner face carries no flux (regular origin);
//! for `j ≠ 0` the function vanishes at the origin.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flux::FluxProfile;
use crate::linalg::SymTridiag;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    n_r: usize,
    h: f64,
    r_max: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
}

impl RadialGrid {
    pub fn new(n_r: usize, r_max: f64) -> Result<Self> {
        if n_r < 8 {
            return Err(Error::domain(format!("grid needs n_r ≥ 8 (got {n_r})")));
        }
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::domain(format!("grid needs r_max > 0 (got {r_max})")));
        }
        let h = r_max / (n_r as f64 + 1.0);
        let nodes = (1..=n_r).map(|i| i as f64 * h).collect();
        Ok(RadialGrid { n_r, h, r_max, nodes })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `Σ|φ_i|² r_i h` for a weighted-representation vector.
    pub fn weighted_norm_sq(&self, phi: &[f64]) -> f64 {
        phi.iter().zip(&self.nodes).map(|(p, r)| p * p * r).sum::<f64>() * self.h
    }

    /// `u = √r φ`.
    pub fn to_flat(&self, phi: &[f64]) -> Vec<f64> {
        phi.iter().zip(&self.nodes).map(|(p, r)| p * r.sqrt()).collect()
    }

    /// `φ = u/√r`.
    pub fn to_weighted(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.nodes).map(|(x, r)| x / r.sqrt()).collect()
    }

    pub fn same_as(&self, other: &RadialGrid) -> bool {
        self.n_r == other.n_r && self.r_max == other.r_max
    }

    /// Index range of nodes inside `[lo, hi]`.
    pub fn node_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.nodes.partition_point(|&r| r < lo);
        let b = self.nodes.partition_point(|&r| r <= hi);
        a..b.max(a)
    }
}

/// Kinetic part of the channel stencil; `regular_origin` selects the `j = 0`
/// boundary row.
pub fn kinetic_stencil(grid: &RadialGrid, regular_origin: bool) -> SymTridiag {
    let h = grid.h();
    let h2 = h * h;
    let r = grid.nodes();
    let n = grid.n_r();
    let mut d = vec![2.0 / h2; n];
    if regular_origin {
        d[0] = (r[0] + 0.5 * h) / (h2 * r[0]);
    }
    let e = (0..n - 1)
        .map(|i| -(r[i] + 0.5 * h) / (h2 * (r[i] * r[i + 1]).sqrt()))
        .collect();
    SymTridiag::new(d, e)
}

#[derive(Debug, Clone)]
pub struct ChannelOperator {
    pub j: i64,
    pub grid: RadialGrid,
    pub diagonal: Vec<f64>,
    pub off_diagonal: Vec<f64>,
}

impl ChannelOperator {
    pub fn new(profile: &FluxProfile, j: i64, grid: &RadialGrid) -> Result<Self> {
        if grid.r_max() > profile.r_limit() {
            return Err(Error::Extrapolation {
                r: grid.r_max(),
                hi: profile.r_limit(),
            });
        }
        let k = kinetic_stencil(grid, j == 0);
        let v = profile.potential_on(j, grid)?;
        let diagonal = k.d.iter().zip(&v).map(|(a, b)| a + b).collect();
        Ok(ChannelOperator {
            j,
            grid: grid.clone(),
            diagonal,
            off_diagonal: k.e,
        })
    }

    pub fn tridiag(&self) -> SymTridiag {
        SymTridiag::new(self.diagonal.clone(), self.off_diagonal.clone())
    }

    /// Eigenpairs in `[lo, hi]`, returned in the flat representation with
    /// `Σ u_i² h = 1`.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64) -> Result<ChannelEigen> {
        let (values, vectors) = self.tridiag().eigenpairs_in(lo, hi)?;
        Ok(self.wrap(values, vectors))
    }

    /// Lowest `k` eigenpairs.
    pub fn lowest(&self, k: usize) -> Result<ChannelEigen> {
        let (values, vectors) = self.tridiag().eigenpairs_by_index(0, k.min(self.grid.n_r()))?;
        Ok(self.wrap(values, vectors))
    }

    fn wrap(&self, values: Vec<f64>, vectors: Vec<Vec<f64>>) -> ChannelEigen {
        let s = 1.0 / self.grid.h().sqrt();
        let flat = vectors
            .into_iter()
            .map(|v| v.into_iter().map(|x| x * s).collect())
            .collect();
        ChannelEigen {
            j: self.j,
            values,
            flat,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelEigen {
    pub j: i64,
    pub values: Vec<f64>,
    /// Flat amplitudes `u`, normalized so that `Σ u_i² h = 1`.
    pub flat: Vec<Vec<f64>>,
}

impl ChannelEigen {
    /// The `k`-th eigenfunction in the weighted representation `φ = u/√r`.
    pub fn weighted(&self, k: usize, grid: &RadialGrid) -> Vec<f64> {
        grid.to_weighted(&self.flat[k])
    }
}

/// Outer turning point of channel `j` at energy `e`, if the allowed set is
/// nonempty on the grid.
pub fn outer_turning_point(profile: &FluxProfile, j: i64, e: f64, grid: &RadialGrid) -> Result<Option<f64>> {
    Ok(profile.classical_region(j, e, grid)?.interval.map(|(_, b)| b))
}

/// Warns (and returns the message) when the box is less than 1.5 times the
/// outermost turning point over `|j| ≤ j_max` at energy `e0`.
pub fn truncation_check(profile: &FluxProfile, grid: &RadialGrid, j_max: i64, e0: f64) -> Result<Option<String>> {
    let mut outer: f64 = 0.0;
    for j in -j_max..=j_max {
        if let Some(b) = outer_turning_point(profile, j, e0.max(0.0), grid)? {
            outer = outer.max(b);
        }
    }
    if outer > 0.0 && grid.r_max() < 1.5 * outer {
        let msg = format!(
            "r_max = {} is below 1.5 × the outer turning point {outer:.4} at E0 = {e0}; finite-box effects may be visible",
            grid.r_max()
        );
        log::warn!("{msg}");
        return Ok(Some(msg));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = RadialGrid::new(9, 1.0).unwrap();
        assert!((g.h() - 0.1).abs() < 1e-15);
        assert!((g.nodes()[0] - 0.1).abs() < 1e-15);
        assert!((g.nodes()[8] - 0.9).abs() < 1e-15);
        let g = RadialGrid::new(999, 10.0).unwrap();
        assert!((g.h() - 0.01).abs() < 1e-15);
        assert!(RadialGrid::new(0, 1.0).is_err());
        assert!(RadialGrid::new(9, -1.0).is_err());
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn round_trip_is_identity() {
        let g = RadialGrid::new(50, 3.0).unwrap();
        let phi: Vec<f64> = g.nodes().iter().map(|r| (-r).exp() * r.sin()).collect();
        let back = g.to_weighted(&g.to_flat(&phi));
        for (a, b) in phi.iter().zip(&back) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
        }
        let u = g.to_flat(&phi);
        let flat: f64 = u.iter().map(|x| x * x).sum::<f64>() * g.h();
        assert!((flat - g.weighted_norm_sq(&phi)).abs() < 1e-14);
    }

    #[test]
    fn operator_is_exactly_symmetric() {
        let g = RadialGrid::new(100, 8.0).unwrap();
        let p = FluxProfile::uniform_field(2.0).unwrap();
        let op = ChannelOperator::new(&p, 2, &g).unwrap();
        let t = op.tridiag();
        let dense = nalgebra::DMatrix::from_fn(100, 100, |i, j| {
            if i == j {
                t.d[i]
            } else if i + 1 == j {
                t.e[i]
            } else if j + 1 == i {
                t.e[j]
            } else {
                0.0
            }
        });
        assert_eq!(dense, dense.transpose());
    }

    fn landau_error(n_r: usize, j: i64, k: usize, exact: f64) -> f64 {
        let g = RadialGrid::new(n_r, 12.0).unwrap();
        let p = FluxProfile::uniform_field(2.0).unwrap();
        let op = ChannelOperator::new(&p, j, &g).unwrap();
        (op.tridiag().kth_eigenvalue(k) - exact).abs()
    }

    #[test]
    fn landau_levels_converge_at_second_order() {
        for (j, k, exact) in [(0, 0, 2.0), (-1, 0, 6.0), (0, 1, 6.0), (3, 0, 2.0)] {
            let coarse = landau_error(999, j, k, exact);
            let fine = landau_error(1999, j, k, exact);
            assert!(coarse / exact < 1e-3, "j = {j}, k = {k}: {coarse}");
            let ratio = coarse / fine;
            assert!((3.5..=4.5).contains(&ratio), "j = {j}, k = {k}: ratio {ratio}");
        }
    }

    #[test]
    fn eigenvectors_are_normalized_in_both_representations() {
        let g = RadialGrid::new(400, 10.0).unwrap();
        let p = FluxProfile::uniform_field(2.0).unwrap();
        let op = ChannelOperator::new(&p, 1, &g).unwrap();
        let eig = op.lowest(2).unwrap();
        for k in 0..2 {
            let flat: f64 = eig.flat[k].iter().map(|x| x * x).sum::<f64>() * g.h();
            assert!((flat - 1.0).abs() < 1e-12);
            assert!((g.weighted_norm_sq(&eig.weighted(k, &g)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_warning_fires_for_small_box() {
        let p = FluxProfile::linear(1.0).unwrap();
        let g = RadialGrid::new(100, 5.0).unwrap();
        assert!(truncation_check(&p, &g, 4, 0.5).unwrap().is_some());
        let g = RadialGrid::new(100, 200.0).unwrap();
        assert!(truncation_check(&p, &g, 4, 0.5).unwrap().is_none());
    }
}
