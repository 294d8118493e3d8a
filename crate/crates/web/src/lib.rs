//! Browser bindings for three small views of the library: the scattering
//! spectrum of a waveguide-coupled dipole, directional emission from a
//! local field ellipse, and the polarization map of a small W1 guide.

use chiralpcw::geometry::{build_w1_supercell, LatticeSpec};
use chiralpcw::lightmatter::{dot_h, linear, sigma_minus, sigma_plus, EmissionRates, Vec2};
use chiralpcw::modesolver::PlaneWaveSolver;
use chiralpcw::pipeline::{guided_mode, DEFAULT_H_EFF};
use chiralpcw::polarization::{find_c_points, stokes, StokesMap};
use chiralpcw::scattering::{detuning_grid, spectrum};
use num_complex::Complex64;
use wasm_bindgen::prelude::*;

const OMEGA0: f64 = 2.0e15;
const GAMMA_W: f64 = 1.0e10;

/// Spectrum for waveguide coupling `beta` and backward share
/// `gamma_b / (gamma_f + gamma_b)`. Returns rows of
/// `[detuning / gamma_w, |t|^2, |r|^2, arg t]`, flattened.
#[wasm_bindgen]
pub fn scattering_spectrum(beta: f64, backward_share: f64, points: usize) -> Result<Vec<f64>, JsError> {
    spectrum_rows(beta, backward_share, points).map_err(|e| JsError::new(&e))
}

fn spectrum_rows(beta: f64, backward_share: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(beta > 0.0 && beta <= 1.0) || !(0.0..=1.0).contains(&backward_share) {
        return Err("beta must lie in (0, 1] and the backward share in [0, 1]".into());
    }
    let gb = backward_share * GAMMA_W;
    let g0 = GAMMA_W * (1.0 - beta) / beta;
    let rates = EmissionRates::from_rates(OMEGA0, GAMMA_W - gb, gb, g0);
    let grid = detuning_grid(OMEGA0, 8.0 * rates.gamma_total(), points.max(2));
    let s = spectrum(&rates, OMEGA0, &grid).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(4 * grid.len());
    for ((w, t), r) in grid.iter().zip(&s.t).zip(&s.r) {
        out.extend([(w - OMEGA0) / GAMMA_W, t.norm_sqr(), r.norm_sqr(), t.arg()]);
    }
    Ok(out)
}

fn dipole(kind: &str, theta: f64) -> Result<Vec2, String> {
    match kind {
        "sigma_plus" => Ok(sigma_plus()),
        "sigma_minus" => Ok(sigma_minus()),
        "linear" => Ok(linear(theta)),
        other => Err(format!("unknown dipole `{other}`")),
    }
}

/// Forward and backward emission shares of a dipole in a local field with
/// ellipse orientation `psi` and ellipticity angle `chi` (radians).
/// Returns `[forward share, backward share, s3 / s0]`.
#[wasm_bindgen]
pub fn directionality(psi: f64, chi: f64, kind: &str, theta: f64) -> Result<Vec<f64>, JsError> {
    emission_shares(psi, chi, kind, theta).map_err(|e| JsError::new(&e))
}

fn emission_shares(psi: f64, chi: f64, kind: &str, theta: f64) -> Result<Vec<f64>, String> {
    let (a, b) = (chi.cos(), chi.sin());
    let e: Vec2 = [
        Complex64::new(a * psi.cos(), -b * psi.sin()),
        Complex64::new(a * psi.sin(), b * psi.cos()),
    ];
    let mu = dipole(kind, theta)?;
    let f = dot_h(&mu, &e).norm_sqr();
    let back = dot_h(&mu, &[e[0].conj(), e[1].conj()]).norm_sqr();
    let s = stokes(e[0], e[1]);
    let total = f + back;
    let (pf, pb) = if total > 0.0 { (f / total, back / total) } else { (0.0, 0.0) };
    Ok(vec![pf, pb, s.s3 / s.s0])
}

/// Guided mode of a reduced W1 guide (three rows per side) at `|k a / 2 pi|`.
#[wasm_bindgen]
pub struct PolarizationMap {
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    s3: Vec<f64>,
    s0: Vec<f64>,
    c_points: Vec<f64>,
    freq: f64,
    slowdown: f64,
}

#[wasm_bindgen]
impl PolarizationMap {
    #[wasm_bindgen(constructor)]
    pub fn new(k: f64) -> Result<PolarizationMap, JsError> {
        Self::solve(k).map_err(|e| JsError::new(&e))
    }

    fn solve(k: f64) -> Result<PolarizationMap, String> {
        let err = |e: chiralpcw::Error| e.to_string();
        let mut spec = LatticeSpec::reference_w1(2.8);
        spec.rows_per_side = 3;
        spec.resolution = 32;
        let map = build_w1_supercell(&spec).map_err(err)?;
        let solver = PlaneWaveSolver::new(&map, 3).map_err(err)?;
        let g = guided_mode(&solver, k, DEFAULT_H_EFF).map_err(err)?;
        let grid = &g.grid;
        let st = StokesMap::new(grid);
        // Rows of constant y, top row first, for direct drawing.
        let (nx, ny) = (grid.nx, grid.ny);
        let mut s3 = Vec::with_capacity(nx * ny);
        let mut s0 = Vec::with_capacity(nx * ny);
        for iy in (0..ny).rev() {
            for ix in 0..nx {
                let i = grid.idx(ix, iy);
                s0.push(st.s0[i]);
                s3.push(if st.s0[i] > 0.0 { st.s3[i] / st.s0[i] } else { 0.0 });
            }
        }
        let max = s0.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            s0.iter_mut().for_each(|v| *v /= max);
        }
        let c_points = find_c_points(grid)
            .points
            .iter()
            .flat_map(|p| [(p.x - grid.x0) / grid.period(), (grid.y_max() - p.y) / (grid.y_max() - grid.y0), p.handedness as f64])
            .collect();
        let vg = g.mode.vg.unwrap_or(f64::NAN);
        Ok(PolarizationMap {
            nx,
            ny,
            width: grid.period(),
            height: grid.y_max() - grid.y0,
            s3,
            s0,
            c_points,
            freq: g.mode.freq,
            slowdown: chiralpcw::SPEED_OF_LIGHT / vg.abs(),
        })
    }

    #[wasm_bindgen(getter)]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[wasm_bindgen(getter)]
    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Aspect ratio height / width of the map.
    #[wasm_bindgen(getter)]
    pub fn aspect(&self) -> f64 {
        self.height / self.width
    }

    /// `s3 / s0` per node, rows top to bottom.
    pub fn s3(&self) -> Vec<f64> {
        self.s3.clone()
    }

    /// `s0` scaled to its maximum, same layout as [`PolarizationMap::s3`].
    pub fn s0(&self) -> Vec<f64> {
        self.s0.clone()
    }

    /// `[u, v, handedness]` per C-point in fractions of the map size.
    pub fn c_points(&self) -> Vec<f64> {
        self.c_points.clone()
    }

    /// `omega a / 2 pi c`
    #[wasm_bindgen(getter)]
    pub fn freq(&self) -> f64 {
        self.freq
    }

    /// `c / vg`
    #[wasm_bindgen(getter)]
    pub fn slowdown(&self) -> f64 {
        self.slowdown
    }
}
