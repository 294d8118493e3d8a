//! Stokes maps, polarization ellipses and singularities (C-points, L-lines).

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{interpolate, FieldGrid};

/// Default purity a refined C-point must exceed.
pub const C_POINT_PURITY: f64 = 0.999;
/// C-points closer than this (in grid cells) are merged.
pub const DEDUP_CELLS: f64 = 0.25;
/// Singularities are only searched where `s0` exceeds this fraction of its
/// maximum; below it the field is numerical residue of the decaying tail.
pub const SIGNIFICANCE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stokes {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl Stokes {
    pub fn purity(&self) -> f64 {
        if self.s0 > 0.0 {
            self.s3.abs() / self.s0
        } else {
            0.0
        }
    }
}

pub fn stokes(ex: Complex64, ey: Complex64) -> Stokes {
    let (a, b) = (ex.norm_sqr(), ey.norm_sqr());
    let cross = ex.conj() * ey;
    Stokes {
        s0: a + b,
        s1: a - b,
        s2: 2.0 * cross.re,
        s3: 2.0 * cross.im,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// Major-axis angle from x (rad).
    pub orientation: f64,
    /// Signed minor/major ratio in [-1, 1].
    pub ellipticity: f64,
    /// Sign of s3: +1 for σ₊-like, -1 for σ₋-like, 0 for linear.
    pub handedness: i8,
}

pub fn ellipse_parameters(ex: Complex64, ey: Complex64) -> Result<Ellipse> {
    let s = stokes(ex, ey);
    if !(s.s0 > 0.0) {
        return Err(Error::UndefinedPolarization);
    }
    let chi = 0.5 * (s.s3 / s.s0).clamp(-1.0, 1.0).asin();
    Ok(Ellipse {
        orientation: 0.5 * s.s2.atan2(s.s1),
        ellipticity: chi.tan(),
        handedness: if s.s3 > 0.0 {
            1
        } else if s.s3 < 0.0 {
            -1
        } else {
            0
        },
    })
}

/// Stokes parameters at every node of a grid.
#[derive(Debug, Clone)]
pub struct StokesMap {
    pub nx: usize,
    pub ny: usize,
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub s3: Vec<f64>,
}

impl StokesMap {
    pub fn new(grid: &FieldGrid) -> Self {
        let n = grid.ex.len();
        let mut m = StokesMap {
            nx: grid.nx,
            ny: grid.ny,
            s0: Vec::with_capacity(n),
            s1: Vec::with_capacity(n),
            s2: Vec::with_capacity(n),
            s3: Vec::with_capacity(n),
        };
        for i in 0..n {
            let s = stokes(grid.ex[i], grid.ey[i]);
            m.s0.push(s.s0);
            m.s1.push(s.s1);
            m.s2.push(s.s2);
            m.s3.push(s.s3);
        }
        m
    }

    pub fn max_s0(&self) -> f64 {
        self.s0.iter().copied().fold(0.0, f64::max)
    }

    /// `x,y,s0,s1,s2,s3,orientation,ellipticity` per node.
    pub fn to_csv(&self, grid: &FieldGrid) -> String {
        let mut out = String::from("x,y,s0,s1,s2,s3,orientation,ellipticity\n");
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                let i = grid.idx(ix, iy);
                let (o, e) = match ellipse_parameters(grid.ex[i], grid.ey[i]) {
                    Ok(el) => (el.orientation, el.ellipticity),
                    Err(_) => (0.0, 0.0),
                };
                let _ = writeln!(
                    out,
                    "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                    grid.x(ix),
                    grid.y(iy),
                    self.s0[i],
                    self.s1[i],
                    self.s2[i],
                    self.s3[i],
                    o,
                    e
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CPoint {
    pub x: f64,
    pub y: f64,
    pub handedness: i8,
    pub purity: f64,
    /// `s0` at the refined point.
    pub intensity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CPointSearch {
    pub points: Vec<CPoint>,
    /// Cells where the zero set of `Ey -+ i Ex` was not isolated.
    pub degenerate_cells: usize,
}

/// Stokes parameters of the bilinearly interpolated field.
pub fn stokes_at(grid: &FieldGrid, x: f64, y: f64) -> Result<Stokes> {
    let (ex, ey) = interpolate(grid, x, y)?;
    Ok(stokes(ex, ey))
}

/// Locates points where `s1 = s2 = 0`. Inside each cell the interpolated
/// field is bilinear, so `Ey = +-i Ex` reduces to a real quadratic in the
/// fractional row coordinate and every zero is found exactly.
pub fn find_c_points(grid: &FieldGrid) -> CPointSearch {
    let map = StokesMap::new(grid);
    let floor = SIGNIFICANCE_FLOOR * map.max_s0();
    let mut out = CPointSearch::default();
    if floor <= 0.0 || grid.ny < 2 {
        return out;
    }
    let mut found: Vec<CPoint> = Vec::new();
    for ix in 0..grid.nx {
        let jx = (ix + 1) % grid.nx;
        for iy in 0..grid.ny - 1 {
            let corners = [
                grid.idx(ix, iy),
                grid.idx(jx, iy),
                grid.idx(ix, iy + 1),
                grid.idx(jx, iy + 1),
            ];
            if corners.iter().all(|&i| map.s0[i] < floor) {
                continue;
            }
            let (x0, y0) = (grid.x(ix), grid.y(iy));
            let Some(cell) = CellField::new(grid, x0, y0) else {
                continue;
            };
            for sign in [1.0, -1.0] {
                let roots = match cell.zeros(sign) {
                    Some(r) => r,
                    None => {
                        out.degenerate_cells += 1;
                        continue;
                    }
                };
                for (tx, ty) in roots {
                    let (x, y) = (x0 + tx * grid.dx, (y0 + ty * grid.dy).min(grid.y_max()));
                    let Ok(s) = stokes_at(grid, x, y) else { continue };
                    if s.s0 < floor || s.purity() <= C_POINT_PURITY {
                        continue;
                    }
                    let x = grid.x0 + (x - grid.x0).rem_euclid(grid.period());
                    if found.iter().any(|q| cell_distance(grid, (x, y), (q.x, q.y)) < DEDUP_CELLS) {
                        continue;
                    }
                    found.push(CPoint {
                        x,
                        y,
                        handedness: if s.s3 >= 0.0 { 1 } else { -1 },
                        purity: s.purity(),
                        intensity: s.s0,
                    });
                }
            }
        }
    }
    found.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    out.points = found;
    out
}

/// Bilinear coefficients `v = p + q tx + r ty + w tx ty` of both field
/// components over one cell.
struct CellField {
    ex: [Complex64; 4],
    ey: [Complex64; 4],
}

impl CellField {
    fn new(grid: &FieldGrid, x0: f64, y0: f64) -> Option<Self> {
        // Sampling strictly inside the cell sidesteps edge and wrap handling.
        let at = |tx: f64, ty: f64| interpolate(grid, x0 + tx * grid.dx, y0 + ty * grid.dy).ok();
        let a = at(0.25, 0.25)?;
        let b = at(0.75, 0.25)?;
        let c = at(0.25, 0.75)?;
        let d = at(0.75, 0.75)?;
        let coeffs = |v00: Complex64, v10: Complex64, v01: Complex64, v11: Complex64| {
            // Coefficients in u = 2 tx - 1/2, w = 2 ty - 1/2, then back to tx, ty.
            let q = v10 - v00;
            let r = v01 - v00;
            let s = v11 - v10 - v01 + v00;
            let p = v00 - 0.5 * q - 0.5 * r + 0.25 * s;
            [p, 2.0 * q - s, 2.0 * r - s, 4.0 * s]
        };
        Some(Self {
            ex: coeffs(a.0, b.0, c.0, d.0),
            ey: coeffs(a.1, b.1, c.1, d.1),
        })
    }

    /// Zeros of `Ey - sign i Ex` in the closed unit cell, or `None` when the
    /// zero set is not isolated.
    fn zeros(&self, sign: f64) -> Option<Vec<(f64, f64)>> {
        let i = Complex64::new(0.0, sign);
        let f: Vec<Complex64> = (0..4).map(|k| self.ey[k] - i * self.ex[k]).collect();
        let (a, b, c, d) = (f[0], f[1], f[2], f[3]);
        // (a + c ty) + tx (b + d ty) = 0 needs a real tx.
        let q2 = (c * d.conj()).im;
        let q1 = (a * d.conj()).im + (c * b.conj()).im;
        let q0 = (a * b.conj()).im;
        let scale = [a, b, c, d].iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        if scale == 0.0 {
            return None;
        }
        let tiny = 1e-13 * scale;
        let mut ty = Vec::new();
        if q2.abs() > tiny {
            let disc = q1 * q1 - 4.0 * q2 * q0;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let h = -0.5 * (q1 + q1.signum() * sq);
                if h != 0.0 {
                    ty.push(h / q2);
                    ty.push(q0 / h);
                } else {
                    ty.push(0.0);
                }
            }
        } else if q1.abs() > tiny {
            ty.push(-q0 / q1);
        } else if q0.abs() <= tiny {
            return None;
        }
        const EDGE: f64 = 1e-9;
        let mut out = Vec::new();
        for t in ty {
            if !(-EDGE..=1.0 + EDGE).contains(&t) {
                continue;
            }
            let num = a + c * t;
            let den = b + d * t;
            if den.norm_sqr() <= tiny {
                if num.norm_sqr() <= tiny {
                    return None;
                }
                continue;
            }
            let tx = -(num * den.conj()).re / den.norm_sqr();
            if (-EDGE..=1.0 + EDGE).contains(&tx) {
                out.push((tx.clamp(0.0, 1.0), t.clamp(0.0, 1.0)));
            }
        }
        Some(out)
    }
}

/// Distance in units of grid cells, periodic along x.
pub fn cell_distance(grid: &FieldGrid, a: (f64, f64), b: (f64, f64)) -> f64 {
    let period = grid.period();
    let mut dx = (a.0 - b.0).rem_euclid(period);
    if dx > 0.5 * period {
        dx -= period;
    }
    ((dx / grid.dx).powi(2) + ((a.1 - b.1) / grid.dy).powi(2)).sqrt()
}

/// Polyline along which `s3 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LLine {
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LLineSearch {
    pub lines: Vec<LLine>,
    /// `s3` vanishes identically: the whole domain is linearly polarized.
    pub globally_linear: bool,
}

/// Edge identifier: horizontal edges `(ix, iy, 0)` join `(ix, iy)` and
/// `(ix + 1, iy)`; vertical edges `(ix, iy, 1)` join `(ix, iy)` and
/// `(ix, iy + 1)`. `ix` is kept unwrapped so polylines stay continuous.
type EdgeId = (usize, usize, u8);

/// Zero contours of `s3` by marching squares, with vertices refined by
/// bisection along cell edges.
pub fn find_l_lines(grid: &FieldGrid) -> LLineSearch {
    let map = StokesMap::new(grid);
    let smax = map.max_s0();
    let s3max = map.s3.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if smax == 0.0 || s3max <= 1e-12 * smax {
        return LLineSearch {
            lines: Vec::new(),
            globally_linear: true,
        };
    }
    let floor = SIGNIFICANCE_FLOOR * smax;
    let s3 = |ix: usize, iy: usize| map.s3[grid.idx(ix % grid.nx, iy)];
    let positive = |ix: usize, iy: usize| s3(ix, iy) >= 0.0;

    let mut vertex_cache: HashMap<EdgeId, (f64, f64)> = HashMap::new();
    let mut vertex = |e: EdgeId| -> (f64, f64) {
        *vertex_cache.entry(e).or_insert_with(|| refine_edge(grid, &map, e))
    };

    let mut segments: Vec<(EdgeId, EdgeId)> = Vec::new();
    for ix in 0..grid.nx {
        for iy in 0..grid.ny - 1 {
            let corner_s0 = [
                map.s0[grid.idx(ix, iy)],
                map.s0[grid.idx((ix + 1) % grid.nx, iy)],
                map.s0[grid.idx(ix, iy + 1)],
                map.s0[grid.idx((ix + 1) % grid.nx, iy + 1)],
            ];
            if corner_s0.iter().all(|&v| v < floor) {
                continue;
            }
            // Corners: 0 = (ix,iy), 1 = (ix+1,iy), 2 = (ix+1,iy+1), 3 = (ix,iy+1).
            let p = [
                positive(ix, iy),
                positive(ix + 1, iy),
                positive(ix + 1, iy + 1),
                positive(ix, iy + 1),
            ];
            let case = p.iter().enumerate().fold(0u8, |c, (k, &b)| c | ((b as u8) << k));
            // Edges: bottom, right, top, left.
            let bottom = (ix, iy, 0u8);
            let right = (ix + 1, iy, 1u8);
            let top = (ix, iy + 1, 0u8);
            let left = (ix, iy, 1u8);
            let pairs: &[(EdgeId, EdgeId)] = match case {
                0 | 15 => &[],
                1 | 14 => &[(left, bottom)],
                2 | 13 => &[(bottom, right)],
                3 | 12 => &[(left, right)],
                4 | 11 => &[(right, top)],
                6 | 9 => &[(bottom, top)],
                7 | 8 => &[(left, top)],
                5 | 10 => {
                    let centre = stokes_at(grid, grid.x(ix) + 0.5 * grid.dx, grid.y(iy) + 0.5 * grid.dy)
                        .map(|s| s.s3 >= 0.0)
                        .unwrap_or(true);
                    // Case 5: corners 0 and 2 positive.
                    if (case == 5) == centre {
                        &[(left, top), (bottom, right)]
                    } else {
                        &[(left, bottom), (right, top)]
                    }
                }
                _ => unreachable!(),
            };
            segments.extend_from_slice(pairs);
        }
    }

    // Wrap edge ids on the periodic seam so neighbouring cells meet.
    let norm = |e: EdgeId| -> EdgeId { (e.0 % grid.nx, e.1, e.2) };
    let mut by_edge: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(norm(*a)).or_default().push(k);
        by_edge.entry(norm(*b)).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = vec![a, b];
        // Extend forward from b, then backward from a.
        for dir in 0..2 {
            loop {
                let end = if dir == 0 { *chain.last().unwrap() } else { chain[0] };
                let next = by_edge
                    .get(&norm(end))
                    .and_then(|v| v.iter().copied().find(|&k| !used[k]));
                let Some(k) = next else { break };
                used[k] = true;
                let (p, q) = segments[k];
                let other = if norm(p) == norm(end) { q } else { p };
                // Keep x continuous across the seam.
                let other = shift_like(other, end, norm(end));
                if dir == 0 {
                    chain.push(other);
                } else {
                    chain.insert(0, other);
                }
            }
        }
        let closed = chain.len() > 2 && norm(chain[0]) == norm(*chain.last().unwrap());
        let points = chain
            .iter()
            .map(|&e| {
                let (x, y) = vertex(norm(e));
                let wraps = (e.0 / grid.nx) as f64 - (norm(e).0 / grid.nx) as f64;
                (x + wraps * grid.period(), y)
            })
            .collect();
        lines.push(LLine { points, closed });
    }
    LLineSearch {
        lines,
        globally_linear: false,
    }
}

fn shift_like(other: EdgeId, end: EdgeId, end_norm: EdgeId) -> EdgeId {
    let offset = end.0 as isize - end_norm.0 as isize;
    let x = (other.0 as isize + offset).max(0) as usize;
    (x, other.1, other.2)
}

/// Zero of `s3` along an edge, by bisection on the interpolated field.
/// Endpoint signs follow the node classification used for the contouring.
fn refine_edge(grid: &FieldGrid, map: &StokesMap, e: EdgeId) -> (f64, f64) {
    let (ix, iy, dir) = e;
    let (x0, y0) = (grid.x(ix), grid.y(iy));
    let (x1, y1) = if dir == 0 {
        (x0 + grid.dx, y0)
    } else {
        (x0, grid.y(iy + 1))
    };
    let f = |t: f64| {
        stokes_at(grid, x0 + t * (x1 - x0), y0 + t * (y1 - y0))
            .map(|s| s.s3)
            .unwrap_or(0.0)
    };
    let pos_lo = map.s3[grid.idx(ix, iy)] >= 0.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) >= 0.0) == pos_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
}

/// `c_points.csv`: `x,y,handedness,purity`.
pub fn c_points_csv(points: &[CPoint]) -> String {
    let mut s = String::from("x,y,handedness,purity\n");
    for p in points {
        let _ = writeln!(s, "{:.12e},{:.12e},{},{:.12}", p.x, p.y, p.handedness, p.purity);
    }
    s
}

/// `l_lines.csv`: `line_id,x,y`.
pub fn l_lines_csv(lines: &[LLine]) -> String {
    let mut s = String::from("line_id,x,y\n");
    for (id, l) in lines.iter().enumerate() {
        for &(x, y) in &l.points {
            let _ = writeln!(s, "{id},{x:.12e},{y:.12e}");
        }
    }
    s
}
