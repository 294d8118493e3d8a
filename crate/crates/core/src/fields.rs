//! Field grids: PCWF v1 interchange, interpolation and antinode search.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DielectricMap;
use crate::modesolver::BlochMode;

pub const PCWF_MAGIC: &str = "#PCWF1";
const COLUMNS: &str = "ix,iy,re_ex,im_ex,re_ey,im_ey,eps";

/// Scalar metadata carried by a field grid. Every entry is needed for rate
/// calculations and for export.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub a: Option<f64>,
    pub k_frac: Option<f64>,
    pub omega: Option<f64>,
    pub vg: Option<f64>,
    pub eps_slab: Option<f64>,
    pub h_eff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompleteMeta {
    pub a: f64,
    pub k_frac: f64,
    pub omega: f64,
    pub vg: f64,
    pub eps_slab: f64,
    pub h_eff: f64,
}

impl FieldMeta {
    pub fn complete(&self) -> Result<CompleteMeta> {
        Ok(CompleteMeta {
            a: self.a.ok_or(Error::MissingMetadata("a"))?,
            k_frac: self.k_frac.ok_or(Error::MissingMetadata("k_frac"))?,
            omega: self.omega.ok_or(Error::MissingMetadata("omega"))?,
            vg: self.vg.ok_or(Error::MissingMetadata("vg"))?,
            eps_slab: self.eps_slab.ok_or(Error::MissingMetadata("eps_slab"))?,
            h_eff: self.h_eff.ok_or(Error::MissingMetadata("h_eff"))?,
        })
    }
}

/// Complex in-plane field sampled over one unit cell along x.
///
/// Node `(ix, iy)` sits at `(x0 + ix dx, y0 + iy dy)`; storage is ix-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub x0: f64,
    pub y0: f64,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
    pub eps: Vec<f64>,
    pub meta: FieldMeta,
}

impl FieldGrid {
    /// Grid from a solved mode. The mode's group velocity must be known.
    pub fn from_mode(mode: &BlochMode, map: &DielectricMap, h_eff: f64) -> Result<Self> {
        let vg = mode.vg.ok_or(Error::MissingMetadata("vg"))?;
        Ok(Self {
            nx: mode.nx,
            ny: mode.ny,
            dx: mode.dx,
            dy: mode.dy,
            x0: 0.0,
            y0: mode.y0,
            ex: mode.ex.clone(),
            ey: mode.ey.clone(),
            eps: map.eps.clone(),
            meta: FieldMeta {
                a: Some(mode.a),
                k_frac: Some(mode.k_frac),
                omega: Some(mode.omega),
                vg: Some(vg),
                eps_slab: Some(map.spec.eps_slab),
                h_eff: Some(h_eff),
            },
        })
    }

    /// Synthetic grid from closures, mostly for tests and demos.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        x0: f64,
        y0: f64,
        f: impl Fn(f64, f64) -> (Complex64, Complex64),
    ) -> Self {
        let mut ex = Vec::with_capacity(nx * ny);
        let mut ey = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                let (a, b) = f(x0 + ix as f64 * dx, y0 + iy as f64 * dy);
                ex.push(a);
                ey.push(b);
            }
        }
        Self {
            nx,
            ny,
            dx,
            dy,
            x0,
            y0,
            ex,
            ey,
            eps: vec![1.0; nx * ny],
            meta: FieldMeta::default(),
        }
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.y0 + iy as f64 * self.dy
    }

    pub fn period(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn y_max(&self) -> f64 {
        self.y0 + (self.ny - 1) as f64 * self.dy
    }

    pub fn intensity(&self, i: usize) -> f64 {
        self.ex[i].norm_sqr() + self.ey[i].norm_sqr()
    }

    /// Bloch factor `e^{i 2 pi k_frac}` per period; 1 without metadata.
    pub fn bloch_factor(&self) -> Complex64 {
        match self.meta.k_frac {
            Some(k) => Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k),
            None => Complex64::new(1.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nx * self.ny;
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::GridInvariant("grid must be at least 2x2".into()));
        }
        if self.ex.len() != n || self.ey.len() != n || self.eps.len() != n {
            return Err(Error::GridInvariant(format!(
                "sample count does not match nx*ny = {n}"
            )));
        }
        if let Some(a) = self.meta.a {
            let period = self.period();
            if ((period - a) / a).abs() > 1e-9 {
                return Err(Error::GridInvariant(format!(
                    "nx*dx = {period:e} differs from a = {a:e}"
                )));
            }
        }
        Ok(())
    }

    /// `sum eps |e|^2 dx dy h_eff` over the grid.
    pub fn energy_integral(&self) -> Option<f64> {
        let h = self.meta.h_eff?;
        let s: f64 = (0..self.ex.len())
            .map(|i| self.eps[i] * self.intensity(i))
            .sum();
        Some(s * self.dx * self.dy * h)
    }

    pub fn is_normalized(&self) -> bool {
        self.energy_integral()
            .is_some_and(|v| (v - 1.0).abs() < 1e-6)
    }

    /// Rescales the field so the energy integral is one.
    pub fn normalize(&mut self) -> Result<()> {
        let e = self.energy_integral().ok_or(Error::MissingMetadata("h_eff"))?;
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::ZeroField);
        }
        let s = 1.0 / e.sqrt();
        self.ex.iter_mut().for_each(|z| *z *= s);
        self.ey.iter_mut().for_each(|z| *z *= s);
        Ok(())
    }

    /// Conjugated field: the time-reversed (backward) Bloch mode.
    pub fn conjugated(&self) -> FieldGrid {
        let mut out = self.clone();
        out.ex.iter_mut().for_each(|z| *z = z.conj());
        out.ey.iter_mut().for_each(|z| *z = z.conj());
        out.meta.k_frac = self.meta.k_frac.map(|k| -k);
        out
    }

    /// True where the node lies in the slab material.
    pub fn is_slab(&self, i: usize) -> bool {
        match self.meta.eps_slab {
            Some(es) => self.eps[i] >= es * (1.0 - 1e-12),
            None => true,
        }
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes PCWF v1. Every metadata field must be present.
pub fn export_pcwf(grid: &FieldGrid, path: impl AsRef<Path>) -> Result<()> {
    let text = pcwf_string(grid)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn pcwf_string(grid: &FieldGrid) -> Result<String> {
    grid.validate()?;
    let m = grid.meta.complete()?;
    let mut s = String::with_capacity(grid.nx * grid.ny * 140 + 512);
    s.push_str(PCWF_MAGIC);
    s.push('\n');
    let _ = writeln!(
        s,
        "# a={} k_frac={} omega={} vg={} nx={} ny={} dx={} dy={} x0={} y0={} eps_slab={} h_eff={}",
        fmt17(m.a),
        fmt17(m.k_frac),
        fmt17(m.omega),
        fmt17(m.vg),
        grid.nx,
        grid.ny,
        fmt17(grid.dx),
        fmt17(grid.dy),
        fmt17(grid.x0),
        fmt17(grid.y0),
        fmt17(m.eps_slab),
        fmt17(m.h_eff)
    );
    s.push_str(COLUMNS);
    s.push('\n');
    for ix in 0..grid.nx {
        for iy in 0..grid.ny {
            let i = grid.idx(ix, iy);
            let _ = writeln!(
                s,
                "{ix},{iy},{},{},{},{},{}",
                fmt17(grid.ex[i].re),
                fmt17(grid.ex[i].im),
                fmt17(grid.ey[i].re),
                fmt17(grid.ey[i].im),
                fmt17(grid.eps[i])
            );
        }
    }
    Ok(s)
}

pub fn import_pcwf(path: impl AsRef<Path>) -> Result<FieldGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_pcwf(&text, path)
}

pub fn parse_pcwf(text: &str, path: &Path) -> Result<FieldGrid> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, magic) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    if magic.trim() != PCWF_MAGIC {
        return Err(Error::Version(magic.trim().to_string()));
    }

    let (ln, header) = lines
        .next()
        .ok_or_else(|| err(2, "missing metadata line".into()))?;
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| err(ln, "metadata line must start with '#'".into()))?;
    let mut meta = FieldMeta::default();
    let (mut nx, mut ny) = (None, None);
    let (mut dx, mut dy, mut x0, mut y0) = (None, None, None, None);
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| err(ln, format!("malformed metadata token `{tok}`")))?;
        let num = || -> Result<f64> {
            let x: f64 = v
                .parse()
                .map_err(|_| err(ln, format!("bad number for `{k}`: `{v}`")))?;
            if !x.is_finite() {
                return Err(err(ln, format!("non-finite value for `{k}`")));
            }
            Ok(x)
        };
        let int = || -> Result<usize> {
            v.parse()
                .map_err(|_| err(ln, format!("bad integer for `{k}`: `{v}`")))
        };
        match k {
            "a" => meta.a = Some(num()?),
            "k_frac" => meta.k_frac = Some(num()?),
            "omega" => meta.omega = Some(num()?),
            "vg" => meta.vg = Some(num()?),
            "eps_slab" => meta.eps_slab = Some(num()?),
            "h_eff" => meta.h_eff = Some(num()?),
            "nx" => nx = Some(int()?),
            "ny" => ny = Some(int()?),
            "dx" => dx = Some(num()?),
            "dy" => dy = Some(num()?),
            "x0" => x0 = Some(num()?),
            "y0" => y0 = Some(num()?),
            _ => return Err(err(ln, format!("unknown metadata key `{k}`"))),
        }
    }
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| err(ln, format!("missing `{name}`")));
    let nx = nx.ok_or_else(|| err(ln, "missing `nx`".into()))?;
    let ny = ny.ok_or_else(|| err(ln, "missing `ny`".into()))?;
    let (dx, dy) = (need(dx, "dx")?, need(dy, "dy")?);
    let (x0, y0) = (need(x0, "x0")?, need(y0, "y0")?);

    let (ln, cols) = lines
        .next()
        .ok_or_else(|| err(3, "missing column header".into()))?;
    if cols.trim() != COLUMNS {
        return Err(err(ln, format!("expected column header `{COLUMNS}`")));
    }

    let n = nx * ny;
    let mut ex = Vec::with_capacity(n);
    let mut ey = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    for row in 0..n {
        let (ix, iy) = (row / ny, row % ny);
        let Some((ln, line)) = lines.next() else {
            return Err(Error::GridInvariant(format!(
                "file ends before row {row} (ix={ix}, iy={iy}); expected {n} rows"
            )));
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(ln, format!("expected 7 columns, found {}", f.len())));
        }
        let gix: usize = f[0].parse().map_err(|_| err(ln, "bad ix".into()))?;
        let giy: usize = f[1].parse().map_err(|_| err(ln, "bad iy".into()))?;
        if gix != ix || giy != iy {
            return Err(err(ln, format!("expected node ({ix},{iy}), found ({gix},{giy})")));
        }
        let mut vals = [0.0f64; 5];
        for (k, v) in vals.iter_mut().enumerate() {
            let x: f64 = f[k + 2]
                .trim()
                .parse()
                .map_err(|_| err(ln, format!("bad number `{}`", f[k + 2])))?;
            if !x.is_finite() {
                return Err(err(ln, "NaN or Inf sample".into()));
            }
            *v = x;
        }
        ex.push(Complex64::new(vals[0], vals[1]));
        ey.push(Complex64::new(vals[2], vals[3]));
        eps.push(vals[4]);
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(err(ln, format!("unexpected trailing row `{extra}` beyond nx*ny = {n}")));
    }

    let grid = FieldGrid {
        nx,
        ny,
        dx,
        dy,
        x0,
        y0,
        ex,
        ey,
        eps,
        meta,
    };
    grid.validate()?;
    Ok(grid)
}

/// Bilinear interpolation of both components at `(x, y)`.
///
/// x wraps with the Bloch factor per period; y must lie inside the grid.
pub fn interpolate(grid: &FieldGrid, x: f64, y: f64) -> Result<(Complex64, Complex64)> {
    let (loc, bloch) = locate(grid, x, y)?;
    let s = |v: &[Complex64]| loc.sample(grid, v) * bloch;
    Ok((s(&grid.ex), s(&grid.ey)))
}

/// Bilinear stencil: lower-left node, fractional offsets, and the Bloch
/// factor for the right-hand column when it wraps past the last node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    ix: usize,
    iy: usize,
    tx: f64,
    ty: f64,
    wrap: Complex64,
}

impl Stencil {
    fn sample(&self, grid: &FieldGrid, v: &[Complex64]) -> Complex64 {
        let ix1 = (self.ix + 1) % grid.nx;
        let right = if self.ix + 1 == grid.nx { self.wrap } else { Complex64::new(1.0, 0.0) };
        let iy1 = (self.iy + 1).min(grid.ny - 1);
        let v00 = v[grid.idx(self.ix, self.iy)];
        let v01 = v[grid.idx(self.ix, iy1)];
        let v10 = v[grid.idx(ix1, self.iy)] * right;
        let v11 = v[grid.idx(ix1, iy1)] * right;
        let (tx, ty) = (self.tx, self.ty);
        v00 * ((1.0 - tx) * (1.0 - ty)) + v10 * (tx * (1.0 - ty)) + v01 * ((1.0 - tx) * ty) + v11 * (tx * ty)
    }
}

pub(crate) fn locate(grid: &FieldGrid, x: f64, y: f64) -> Result<(Stencil, Complex64)> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::OutsideGrid { x, y });
    }
    let span = grid.y_max() - grid.y0;
    let fy = (y - grid.y0) / grid.dy;
    if fy < -1e-9 || y - grid.y0 > span * (1.0 + 1e-12) + 1e-9 * grid.dy {
        return Err(Error::OutsideGrid { x, y });
    }
    let period = grid.period();
    let rel = x - grid.x0;
    let wraps = (rel / period).floor();
    let xr = rel - wraps * period;
    let fx = xr / grid.dx;
    let mut ix = fx.floor() as usize;
    let mut tx = fx - ix as f64;
    if ix >= grid.nx {
        ix = grid.nx - 1;
        tx = 1.0;
    }
    let fy = fy.clamp(0.0, (grid.ny - 1) as f64);
    let mut iy = fy.floor() as usize;
    let mut ty = fy - iy as f64;
    if iy >= grid.ny - 1 {
        iy = grid.ny - 2;
        ty = 1.0;
    }
    let bloch_step = grid.bloch_factor();
    let bloch = bloch_step.powi(wraps as i32);
    Ok((
        Stencil {
            ix,
            iy,
            tx,
            ty,
            wrap: bloch_step,
        },
        bloch,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Antinode {
    pub x: f64,
    pub y: f64,
    /// Refined maximum of `|e|^2`.
    pub intensity: f64,
}

/// Maximum of `eps_slab |e|^2` over slab nodes, refined by a separable
/// three-point parabola. Nodes inside holes are excluded: an emitter sits
/// in the slab. The returned value is `|e|^2` (no ε factor).
pub fn find_antinode(grid: &FieldGrid) -> Antinode {
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for ix in 0..grid.nx {
        for iy in 0..grid.ny {
            let i = grid.idx(ix, iy);
            if !grid.is_slab(i) {
                continue;
            }
            let v = grid.intensity(i);
            if v > best.2 {
                best = (ix, iy, v);
            }
        }
    }
    let (ix, iy, v0) = best;
    if !v0.is_finite() {
        return Antinode {
            x: grid.x0,
            y: grid.y0,
            intensity: 0.0,
        };
    }
    let at = |jx: isize, jy: usize| grid.intensity(grid.idx(jx.rem_euclid(grid.nx as isize) as usize, jy));
    let vertex = |m: f64, c: f64, p: f64| -> (f64, f64) {
        let curv = m - 2.0 * c + p;
        if curv < 0.0 {
            let off = (0.5 * (m - p) / curv).clamp(-0.5, 0.5);
            (off, c - 0.25 * (m - p) * off)
        } else {
            (0.0, c)
        }
    };
    let (ox, vx) = vertex(at(ix as isize - 1, iy), v0, at(ix as isize + 1, iy));
    let (oy, vy) = if iy > 0 && iy + 1 < grid.ny {
        vertex(at(ix as isize, iy - 1), v0, at(ix as isize, iy + 1))
    } else {
        (0.0, v0)
    };
    let refined = v0 + (vx - v0) + (vy - v0);
    Antinode {
        x: grid.x(ix) + ox * grid.dx,
        y: grid.y(iy) + oy * grid.dy,
        intensity: refined.max(v0),
    }
}
