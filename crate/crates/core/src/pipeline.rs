//! End-to-end helpers shared by the command line and the tests: the forward
//! guided mode at a chosen k, the slow-light operating point, and emitter
//! sites on the mode's polarization singularities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldGrid;
use crate::lightmatter::Vec2;
use crate::modesolver::{
    bands_through_gap, identify_guided_band, normalize_mode, BlochMode, GapWindow, Parity,
    PlaneWaveSolver, VelocityEstimate,
};
use crate::polarization::{find_c_points, CPoint};
use crate::SPEED_OF_LIGHT;

/// Effective slab thickness used for the energy normalization, in units of a.
pub const DEFAULT_H_EFF: f64 = 0.56;
/// Finite-difference step in `k_frac` for group velocities.
pub const VG_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GuidedMode {
    /// Normalized, forward-propagating mode (`vg > 0`).
    pub mode: BlochMode,
    pub grid: FieldGrid,
    pub gap: GapWindow,
    pub velocity: VelocityEstimate,
}

/// Guided even band at `|k_frac|`, labelled so that it propagates forward.
///
/// When the band has negative slope at `+|k|` the forward mode is its
/// time-reversed partner at `-|k|`.
pub fn guided_mode(solver: &PlaneWaveSolver, k_abs: f64, h_eff: f64) -> Result<GuidedMode> {
    let k = k_abs.abs();
    let map = solver.map();
    let gap = solver.bulk_gap(k)?;
    let modes = solver.solve(k, bands_through_gap(map), Parity::Even)?;
    let band = identify_guided_band(&modes, gap)?;
    let velocity = solver.group_velocity(band, k, VG_STEP, Parity::Even)?;
    let mut mode = modes[band].clone();
    mode.vg = Some(velocity.hellmann_feynman);
    if velocity.hellmann_feynman < 0.0 {
        mode = mode.time_reversed();
    }
    let mode = normalize_mode(&mode, map, h_eff * map.cell_x)?;
    let grid = FieldGrid::from_mode(&mode, map, h_eff * map.cell_x)?;
    Ok(GuidedMode {
        mode,
        grid,
        gap,
        velocity,
    })
}

/// Speed of the guided band at `|k_frac|` (m/s, unsigned).
pub fn guided_speed(solver: &PlaneWaveSolver, k_abs: f64) -> Result<f64> {
    let k = k_abs.abs();
    let gap = solver.bulk_gap(k)?;
    let modes = solver.solve(k, bands_through_gap(solver.map()), Parity::Even)?;
    let band = identify_guided_band(&modes, gap)?;
    Ok(solver
        .group_velocity(band, k, VG_STEP, Parity::Even)?
        .hellmann_feynman
        .abs())
}

/// `|k_frac|` in `[lo, hi]` where the guided band's speed equals
/// `c / slowdown`, by bisection. The speed must bracket the target.
pub fn slow_light_k(solver: &PlaneWaveSolver, slowdown: f64, lo: f64, hi: f64) -> Result<f64> {
    let target = SPEED_OF_LIGHT / slowdown;
    let f = |k: f64| guided_speed(solver, k).map(|v| v.ln() - target.ln());
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa * fb > 0.0 {
        return Err(Error::InvalidSolverInput(format!(
            "guided-band speed does not cross c/{slowdown} for |k_frac| in [{lo}, {hi}]"
        )));
    }
    while b - a > 2e-5 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// The C-point in the slab with the strongest field. Mirror partners have
/// equal intensity up to rounding; the positive-handedness one is taken.
pub fn chiral_site(grid: &FieldGrid) -> Result<CPoint> {
    let pts: Vec<CPoint> = find_c_points(grid)
        .points
        .into_iter()
        .filter(|p| grid.is_slab(nearest_node(grid, p.x, p.y)))
        .collect();
    let top = pts.iter().map(|p| p.intensity).fold(0.0, f64::max);
    pts.into_iter()
        .filter(|p| p.intensity >= top * (1.0 - 1e-6))
        .max_by(|a, b| {
            a.handedness
                .cmp(&b.handedness)
                .then(a.intensity.total_cmp(&b.intensity))
        })
        .ok_or_else(|| Error::NoSingularity("no C-point inside the slab".into()))
}

/// A point on the waveguide axis L-line at the strongest `|E_y|`, with the
/// real dipole orientation aligned to the local field.
pub fn linear_site(grid: &FieldGrid) -> Result<(f64, f64, Vec2)> {
    let axis = grid.ny / 2;
    let i = (0..grid.nx)
        .map(|ix| grid.idx(ix, axis))
        .max_by(|&i, &j| grid.ey[i].norm().total_cmp(&grid.ey[j].norm()))
        .ok_or_else(|| Error::NoSingularity("empty grid".into()))?;
    let e = [grid.ex[i], grid.ey[i]];
    let mu = aligned_linear(e).ok_or(Error::ZeroField)?;
    Ok((grid.x(i / grid.ny), grid.y(axis), mu))
}

/// Real unit vector along a linearly polarized field (global phase removed).
pub fn aligned_linear(e: Vec2) -> Option<Vec2> {
    let s = e[0] * e[0] + e[1] * e[1];
    let rot = if s.norm() > 0.0 {
        Complex64::from_polar(1.0, -0.5 * s.arg())
    } else {
        Complex64::new(1.0, 0.0)
    };
    let (x, y) = ((e[0] * rot).re, (e[1] * rot).re);
    let n = x.hypot(y);
    (n > 0.0).then(|| [Complex64::new(x / n, 0.0), Complex64::new(y / n, 0.0)])
}

fn nearest_node(grid: &FieldGrid, x: f64, y: f64) -> usize {
    let ix = (((x - grid.x0) / grid.dx).round() as i64).rem_euclid(grid.nx as i64) as usize;
    let iy = (((y - grid.y0) / grid.dy).round().max(0.0) as usize).min(grid.ny - 1);
    grid.idx(ix, iy)
}

/// Scalars describing the operating point, for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub k_frac: f64,
    pub freq: f64,
    pub omega: f64,
    pub vg: f64,
    pub slowdown: f64,
    pub gap_lower: f64,
    pub gap_upper: f64,
}

impl GuidedMode {
    pub fn operating_point(&self) -> OperatingPoint {
        let vg = self.mode.vg.unwrap_or(f64::NAN);
        OperatingPoint {
            k_frac: self.mode.k_frac,
            freq: self.mode.freq,
            omega: self.mode.omega,
            vg,
            slowdown: SPEED_OF_LIGHT / vg,
            gap_lower: self.gap.lower,
            gap_upper: self.gap.upper,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_linear_removes_global_phase() {
        let p = Complex64::from_polar(1.0, 0.7);
        let mu = aligned_linear([p * 0.6, p * -0.8]).unwrap();
        assert!((mu[0].re - 0.6).abs() < 1e-12 || (mu[0].re + 0.6).abs() < 1e-12);
        assert!((mu[0].re * 0.8 + mu[1].re * 0.6).abs() < 1e-12);
        assert!(aligned_linear([Complex64::default(); 2]).is_none());
    }
}
