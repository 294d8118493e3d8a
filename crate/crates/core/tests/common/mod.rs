#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use chiralpcw::fields::{interpolate, FieldGrid, FieldMeta};
use chiralpcw::geometry::{build_w1_supercell, DielectricMap, LatticeSpec};
use chiralpcw::modesolver::PlaneWaveSolver;
use chiralpcw::pipeline::{guided_mode, slow_light_k, GuidedMode, DEFAULT_H_EFF};
use chiralpcw::polarization::{cell_distance, stokes};
use chiralpcw::SPEED_OF_LIGHT;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const CUTOFF: usize = 5;
pub const SLOWDOWN: f64 = 88.0;

/// The reference W1 guide at the k-point where vg = c/88.
pub struct W1 {
    pub map: DielectricMap,
    pub k: f64,
    pub guided: GuidedMode,
}

pub fn w1() -> &'static W1 {
    static CELL: OnceLock<W1> = OnceLock::new();
    CELL.get_or_init(|| {
        let map = build_w1_supercell(&LatticeSpec::reference_w1(2.8)).unwrap();
        let solver = PlaneWaveSolver::new(&map, CUTOFF).unwrap();
        let k = slow_light_k(&solver, SLOWDOWN, 0.41, 0.46).unwrap();
        let guided = guided_mode(&solver, k, DEFAULT_H_EFF).unwrap();
        drop(solver);
        W1 { map, k, guided }
    })
}

/// Normalized synthetic grid over one 250 nm period with mode metadata.
pub fn synthetic(nx: usize, ny: usize, f: impl Fn(f64, f64) -> (Complex64, Complex64)) -> FieldGrid {
    let a = 2.5e-7;
    let dy = 1e-8;
    let mut g = FieldGrid::from_fn(nx, ny, a / nx as f64, dy, 0.0, -0.5 * dy * (ny - 1) as f64, f);
    g.meta = FieldMeta {
        a: Some(a),
        k_frac: Some(0.0),
        omega: Some(2.0e15),
        vg: Some(SPEED_OF_LIGHT / 88.0),
        eps_slab: Some(1.0),
        h_eff: Some(1.4e-7),
    };
    g.normalize().unwrap();
    g
}

/// Random smooth field, periodic in x, built from a few plane waves.
pub fn random_field(seed: u64, nx: usize, ny: usize) -> FieldGrid {
    let mut rng = StdRng::seed_from_u64(seed);
    let a = 2.5e-7;
    let mut terms = Vec::new();
    for _ in 0..6 {
        let m = rng.random_range(-2i32..=2) as f64;
        let ky = rng.random_range(-1.0..1.0) * 2.0 * PI / a;
        let cx = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let cy = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        terms.push((m, ky, cx, cy));
    }
    synthetic(nx, ny, move |x, y| {
        let mut ex = Complex64::default();
        let mut ey = Complex64::default();
        for &(m, ky, cx, cy) in &terms {
            let ph = Complex64::from_polar(1.0, 2.0 * PI * m * x / a + ky * y);
            ex += cx * ph;
            ey += cy * ph;
        }
        (ex, ey)
    })
}

/// Independent C-point count: the phase of `Ey -+ i Ex` winds by 2 pi around
/// every zero, so each square of a grid `sub` times finer than the field grid
/// is tested for nonzero winding along its boundary. Squares where `s0` sits below the
/// significance floor are ignored.
pub fn brute_force_c_points(grid: &FieldGrid, sub: usize) -> Vec<(f64, f64, i8)> {
    let max_s0 = (0..grid.ex.len()).map(|i| grid.intensity(i)).fold(0.0, f64::max);
    let floor = 1e-3 * max_s0;
    let (mx, my) = (grid.nx * sub, (grid.ny - 1) * sub);
    let (hx, hy) = (grid.dx / sub as f64, grid.dy / sub as f64);
    // An irrational x offset keeps zeros off the square edges.
    let x_at = |i: usize| grid.x0 + (i as f64 + 0.371) * hx;
    let y_at = |j: usize| (grid.y0 + j as f64 * hy).min(grid.y_max());
    let mut out: Vec<(f64, f64, i8)> = Vec::new();
    for sign in [1.0, -1.0] {
        let f = |x: f64, y: f64| {
            let (ex, ey) = interpolate(grid, x, y).unwrap();
            ey - Complex64::new(0.0, sign) * ex
        };
        // Phase change along each square edge, integrated in short steps.
        const STEPS: usize = 8;
        let edge = |(xa, ya): (f64, f64), (xb, yb): (f64, f64)| -> f64 {
            let mut prev = f(xa, ya);
            let mut total = 0.0;
            for k in 1..=STEPS {
                let t = k as f64 / STEPS as f64;
                let next = f(xa + t * (xb - xa), ya + t * (yb - ya));
                total += (next / prev).arg();
                prev = next;
            }
            total
        };
        let horiz: Vec<f64> = (0..mx)
            .flat_map(|i| (0..=my).map(move |j| (i, j)))
            .map(|(i, j)| edge((x_at(i), y_at(j)), (x_at(i + 1), y_at(j))))
            .collect();
        let vert: Vec<f64> = (0..=mx)
            .flat_map(|i| (0..my).map(move |j| (i, j)))
            .map(|(i, j)| edge((x_at(i), y_at(j)), (x_at(i), y_at(j + 1))))
            .collect();
        let h = |i: usize, j: usize| horiz[i * (my + 1) + j];
        let v = |i: usize, j: usize| vert[i * my + j];
        for i in 0..mx {
            for j in 0..my {
                let winding = h(i, j) + v(i + 1, j) - h(i, j + 1) - v(i, j);
                if winding.abs() < PI {
                    continue;
                }
                let (x, y) = (x_at(i) + 0.5 * hx, y_at(j) + 0.5 * hy);
                let s = {
                    let (ex, ey) = interpolate(grid, x, y).unwrap();
                    stokes(ex, ey)
                };
                if s.s0 < floor {
                    continue;
                }
                let period = grid.nx as f64 * grid.dx;
                let x = grid.x0 + (x - grid.x0).rem_euclid(period);
                if out.iter().any(|p| cell_distance(grid, (p.0, p.1), (x, y)) < 0.25) {
                    continue;
                }
                out.push((x, y, if s.s3 >= 0.0 { 1 } else { -1 }));
            }
        }
    }
    out
}

/// Points of `a` with no partner of equal handedness in `b` within 0.25 cell.
pub fn unmatched(grid: &FieldGrid, a: &[(f64, f64, i8)], b: &[(f64, f64, i8)]) -> Vec<(f64, f64, i8)> {
    a.iter()
        .filter(|p| {
            !b.iter()
                .any(|q| q.2 == p.2 && cell_distance(grid, (p.0, p.1), (q.0, q.1)) < 0.25)
        })
        .copied()
        .collect()
}
