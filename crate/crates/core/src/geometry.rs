//! W1 supercell geometry, rasterization and the Fourier table of 1/ε.
//!
//! The supercell spans one lattice constant along the waveguide (x) and
//! `2 * rows_per_side + 1` row slots across it (y), the centre slot being the
//! missing row. Rows of a triangular lattice alternate their x offset by a/2,
//! so an odd number of slots is only consistent with a sheared supercell:
//! the lattice vectors are `(a, 0)` and `(a/2, Ly)`. The rectangle
//! `[0, a) x [-Ly/2, Ly/2)` is still a fundamental domain, which is what the
//! pixel grid covers.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_PITCH: f64 = 0.866_025_403_784_438_6; // sqrt(3)/2
const SUBSAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Lattice constant (m).
    pub a: f64,
    /// Hole radius (m).
    pub hole_radius: f64,
    pub eps_slab: f64,
    pub eps_hole: f64,
    /// Rows of holes on each side of the line defect.
    pub rows_per_side: usize,
    /// Grid points per lattice constant.
    pub resolution: usize,
}

impl LatticeSpec {
    /// The W1 geometry of the reference device: a = 250 nm, r = 0.34a,
    /// holes in air, slab index `n_eff`.
    pub fn reference_w1(n_eff: f64) -> Self {
        let a = 250e-9;
        Self {
            a,
            hole_radius: 0.34 * a,
            eps_slab: n_eff * n_eff,
            eps_hole: 1.0,
            rows_per_side: 5,
            resolution: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidLattice(m.to_string()));
        if !(self.a > 0.0) {
            return bad("a must be positive");
        }
        if !(self.hole_radius >= 0.0 && self.hole_radius < 0.5 * self.a) {
            return bad("hole_radius must lie in [0, a/2)");
        }
        if !(self.eps_hole >= 1.0 && self.eps_slab > self.eps_hole) {
            return bad("need eps_slab > eps_hole >= 1");
        }
        if self.rows_per_side < 3 {
            return bad("rows_per_side must be >= 3");
        }
        if self.resolution < 16 {
            return bad("resolution must be >= 16");
        }
        if self.hole_radius > 0.0 {
            let pixels = 2.0 * self.hole_radius / self.a * self.resolution as f64;
            if pixels < 4.0 {
                return Err(Error::UnderResolved {
                    resolution: self.resolution,
                    pixels,
                });
            }
        }
        Ok(())
    }

    pub fn row_pitch(&self) -> f64 {
        ROW_PITCH * self.a
    }

    /// Transverse period of the supercell.
    pub fn cell_y(&self) -> f64 {
        (2 * self.rows_per_side + 1) as f64 * self.row_pitch()
    }

    /// Fill fraction of holes in the defect-free triangular lattice.
    pub fn bulk_fill_fraction(&self) -> f64 {
        let r = self.hole_radius / self.a;
        2.0 * std::f64::consts::PI / 3f64.sqrt() * r * r
    }
}

/// Rasterized permittivity over one supercell.
///
/// Node `(ix, iy)` sits at `x = ix * dx`, `y = y0 + iy * dy`; `ny` is odd so
/// the waveguide axis `y = 0` is a grid row. Storage is ix-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DielectricMap {
    pub spec: LatticeSpec,
    pub defect: bool,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub y0: f64,
    pub cell_x: f64,
    pub cell_y: f64,
    /// Smoothed permittivity.
    pub eps: Vec<f64>,
    /// Unsmoothed permittivity (pixel-centre test).
    pub eps_raw: Vec<f64>,
}

impl DielectricMap {
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.y0 + iy as f64 * self.dy
    }

    pub fn axis_row(&self) -> usize {
        self.ny / 2
    }

    pub fn eps_at(&self, ix: usize, iy: usize) -> f64 {
        self.eps[self.idx(ix, iy)]
    }

    /// True where the pixel lies entirely in slab material.
    pub fn is_slab(&self, ix: usize, iy: usize) -> bool {
        self.eps[self.idx(ix, iy)] >= self.spec.eps_slab * (1.0 - 1e-12)
    }

    /// Fraction of pixels whose centre lies in a hole.
    pub fn pixel_air_fraction(&self) -> f64 {
        let holes = self
            .eps_raw
            .iter()
            .filter(|&&e| e == self.spec.eps_hole)
            .count();
        holes as f64 / self.eps_raw.len() as f64
    }

    pub fn to_inverse(&self) -> Vec<f64> {
        self.eps.iter().map(|e| 1.0 / e).collect()
    }
}

/// Builds the W1 supercell (centre row of holes removed).
pub fn build_w1_supercell(spec: &LatticeSpec) -> Result<DielectricMap> {
    build_supercell(spec, true)
}

/// Defect-free reference supercell with the same dimensions; a perfect
/// triangular crystal thanks to the sheared transverse period.
pub fn build_bulk_supercell(spec: &LatticeSpec) -> Result<DielectricMap> {
    build_supercell(spec, false)
}

fn hole_centres(spec: &LatticeSpec, defect: bool) -> Vec<(f64, f64)> {
    let rows = spec.rows_per_side as i64;
    let pitch = spec.row_pitch();
    let mut out = Vec::new();
    // One extra row on each side covers the sheared periodic images.
    for j in -(rows + 1)..=(rows + 1) {
        if defect && j == 0 {
            continue;
        }
        let offset = if j.rem_euclid(2) == 1 { 0.5 * spec.a } else { 0.0 };
        for m in -1..=1 {
            out.push((offset + m as f64 * spec.a, j as f64 * pitch));
        }
    }
    out
}

fn build_supercell(spec: &LatticeSpec, defect: bool) -> Result<DielectricMap> {
    spec.validate()?;
    let nx = spec.resolution;
    let cell_x = spec.a;
    let cell_y = spec.cell_y();
    let mut ny = (spec.resolution as f64 * cell_y / spec.a).round() as usize;
    if ny.is_multiple_of(2) {
        ny += 1;
    }
    let dx = cell_x / nx as f64;
    let dy = cell_y / ny as f64;
    let y0 = -((ny / 2) as f64) * dy;

    let r = spec.hole_radius;
    let centres = if r > 0.0 {
        hole_centres(spec, defect)
    } else {
        Vec::new()
    };
    let half_diag = 0.5 * (dx * dx + dy * dy).sqrt();

    let mut eps = vec![spec.eps_slab; nx * ny];
    let mut eps_raw = vec![spec.eps_slab; nx * ny];
    for ix in 0..nx {
        let xc = ix as f64 * dx;
        for iy in 0..ny {
            let yc = y0 + iy as f64 * dy;
            let idx = ix * ny + iy;
            let mut nearest = f64::INFINITY;
            let mut near: Option<(f64, f64)> = None;
            for &(hx, hy) in &centres {
                let d = ((xc - hx).powi(2) + (yc - hy).powi(2)).sqrt();
                if d < nearest {
                    nearest = d;
                    near = Some((hx, hy));
                }
            }
            let Some(_) = near else { continue };
            if nearest < r {
                eps_raw[idx] = spec.eps_hole;
            }
            let fill = if nearest <= r - half_diag {
                1.0
            } else if nearest >= r + half_diag {
                0.0
            } else {
                subpixel_fill(xc, yc, dx, dy, r, &centres)
            };
            eps[idx] = fill * spec.eps_hole + (1.0 - fill) * spec.eps_slab;
        }
    }

    Ok(DielectricMap {
        spec: *spec,
        defect,
        nx,
        ny,
        dx,
        dy,
        y0,
        cell_x,
        cell_y,
        eps,
        eps_raw,
    })
}

fn subpixel_fill(xc: f64, yc: f64, dx: f64, dy: f64, r: f64, centres: &[(f64, f64)]) -> f64 {
    let r2 = r * r;
    let mut inside = 0usize;
    for sx in 0..SUBSAMPLES {
        let px = xc + ((sx as f64 + 0.5) / SUBSAMPLES as f64 - 0.5) * dx;
        for sy in 0..SUBSAMPLES {
            let py = yc + ((sy as f64 + 0.5) / SUBSAMPLES as f64 - 0.5) * dy;
            if centres
                .iter()
                .any(|&(hx, hy)| (px - hx).powi(2) + (py - hy).powi(2) < r2)
            {
                inside += 1;
            }
        }
    }
    inside as f64 / (SUBSAMPLES * SUBSAMPLES) as f64
}

/// Fourier coefficients of a lattice-periodic function on the sheared
/// reciprocal lattice `G = (2 pi m / a, pi p / Ly)`, `p = 2n - m`.
///
/// Indexed by `(m, p)` with `|m| <= max_m`, `|p| <= max_p` and
/// `p = m (mod 2)`; entries of the wrong parity are zero and never read.
#[derive(Debug, Clone)]
pub struct FourierTable {
    pub max_m: i64,
    pub max_p: i64,
    data: Vec<Complex64>,
}

impl FourierTable {
    #[inline]
    pub fn get(&self, m: i64, p: i64) -> Complex64 {
        debug_assert!(m.abs() <= self.max_m && p.abs() <= self.max_p);
        let w = (2 * self.max_p + 1) as usize;
        self.data[(m + self.max_m) as usize * w + (p + self.max_p) as usize]
    }

    pub fn dc(&self) -> Complex64 {
        self.get(0, 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        let (mm, mp) = (self.max_m, self.max_p);
        (-mm..=mm).flat_map(move |m| {
            (-mp..=mp)
                .filter(move |p| (p - m).rem_euclid(2) == 0)
                .map(move |p| (m, p, self.get(m, p)))
        })
    }
}

/// Transverse harmonic limit paired with an x-harmonic cutoff.
pub fn transverse_cutoff(map: &DielectricMap, cutoff: usize) -> i64 {
    (2.0 * cutoff as f64 * map.cell_y / map.cell_x + 1e-9).floor() as i64
}

/// Fourier table of 1/ε for `|m| <= cutoff`, `|p| <= 2 cutoff Ly / a`.
pub fn inverse_eps_fourier(map: &DielectricMap, cutoff: usize) -> Result<FourierTable> {
    let inv = map.to_inverse();
    fourier_table(map, &inv, cutoff)
}

pub fn fourier_table(map: &DielectricMap, values: &[f64], cutoff: usize) -> Result<FourierTable> {
    if cutoff < 1 {
        return Err(Error::InvalidSolverInput("cutoff must be >= 1".into()));
    }
    let max_m = cutoff as i64;
    let max_p = transverse_cutoff(map, cutoff);
    let (nx, ny) = (map.nx, map.ny);
    // Bins along y are n = (p + m) / 2; distinct n must not alias mod ny.
    let max_n = (max_p + max_m) / 2 + 1;
    if 2 * max_m >= nx as i64 || 2 * max_n >= ny as i64 {
        return Err(Error::CutoffAboveNyquist { cutoff, nx, ny });
    }

    let mut planner = FftPlanner::<f64>::new();
    let fft_x = planner.plan_fft_forward(nx);
    let fft_y = planner.plan_fft_forward(ny);

    // Transform along x for every y row.
    let mut along_x = vec![Complex64::new(0.0, 0.0); nx * ny]; // [iy * nx + m]
    let mut buf = vec![Complex64::new(0.0, 0.0); nx];
    for iy in 0..ny {
        for ix in 0..nx {
            buf[ix] = Complex64::new(values[map.idx(ix, iy)], 0.0);
        }
        fft_x.process(&mut buf);
        along_x[iy * nx..(iy + 1) * nx].copy_from_slice(&buf);
    }

    let w = (2 * max_p + 1) as usize;
    let mut data = vec![Complex64::new(0.0, 0.0); (2 * max_m + 1) as usize * w];
    let norm = 1.0 / (nx * ny) as f64;
    let ly = map.cell_y;
    let mut col = vec![Complex64::new(0.0, 0.0); ny];
    for m in -max_m..=max_m {
        let bin = m.rem_euclid(nx as i64) as usize;
        // Shear twist e^{+i pi m y / Ly} before the y transform.
        for iy in 0..ny {
            let y = map.y(iy);
            let twist = Complex64::from_polar(1.0, std::f64::consts::PI * m as f64 * y / ly);
            col[iy] = along_x[iy * nx + bin] * twist;
        }
        fft_y.process(&mut col);
        for p in -max_p..=max_p {
            if (p - m).rem_euclid(2) != 0 {
                continue;
            }
            let n = (p + m) / 2;
            let nbin = n.rem_euclid(ny as i64) as usize;
            // Offset of the first row: e^{-i 2 pi n y0 / Ly}.
            let shift =
                Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * n as f64 * map.y0 / ly);
            data[(m + max_m) as usize * w + (p + max_p) as usize] = col[nbin] * shift * norm;
        }
    }
    Ok(FourierTable { max_m, max_p, data })
}
