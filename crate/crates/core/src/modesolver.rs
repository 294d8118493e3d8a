//! TE plane-wave expansion on the W1 supercell.
//!
//! The master equation for `H_z` reads
//! `sum_G' eta(G - G') (k + G).(k + G') h_G' = (omega / c)^2 h_G`,
//! with `eta` the Fourier table of 1/ε. Everything internal is in units of
//! `2 pi / a`, so eigenvalues are `u^2` with `u = omega a / (2 pi c)` and the
//! group velocity in units of c is `du / dk_frac`.
//!
//! The operator commutes with the mirror `y -> -y`, which maps the basis
//! vector `(m, p)` to `(m, -p)`. Solving in one parity sector halves the
//! dense problem.

use std::f64::consts::PI;

use std::sync::OnceLock;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_bulk_supercell, fourier_table, inverse_eps_fourier, transverse_cutoff, DielectricMap,
    FourierTable,
};
use crate::SPEED_OF_LIGHT;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Mirror sector of `H_z` about the waveguide axis. `Even` holds the W1
/// guided mode whose `E_y` is even about the axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Full,
}

#[derive(Debug, Clone)]
pub struct PlaneWaveBasis {
    pub m: Vec<i64>,
    pub p: Vec<i64>,
    pub max_m: i64,
    pub max_p: i64,
    /// a / (2 Ly): converts p into the y-component of G in units of 2 pi / a.
    gy_scale: f64,
}

impl PlaneWaveBasis {
    fn new(map: &DielectricMap, cutoff: usize) -> Self {
        let max_m = cutoff as i64;
        let max_p = transverse_cutoff(map, cutoff);
        let mut m = Vec::new();
        let mut p = Vec::new();
        for mi in -max_m..=max_m {
            for pi in -max_p..=max_p {
                if (pi - mi).rem_euclid(2) == 0 {
                    m.push(mi);
                    p.push(pi);
                }
            }
        }
        Self {
            m,
            p,
            max_m,
            max_p,
            gy_scale: map.cell_x / (2.0 * map.cell_y),
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    #[inline]
    fn kg(&self, i: usize, k_frac: f64) -> (f64, f64) {
        (k_frac + self.m[i] as f64, self.p[i] as f64 * self.gy_scale)
    }

    fn mirror_of(&self, i: usize) -> usize {
        // p runs over a contiguous parity-filtered range within each m block.
        let target = -self.p[i];
        let start = i - self.block_offset(i);
        let first_p = self.p[start];
        start + ((target - first_p) / 2) as usize
    }

    fn block_offset(&self, i: usize) -> usize {
        let first_p = if (self.max_p - self.m[i]).rem_euclid(2) == 0 {
            -self.max_p
        } else {
            -self.max_p + 1
        };
        ((self.p[i] - first_p) / 2) as usize
    }
}

/// Symmetry-adapted basis vector: sparse combination of plane waves.
#[derive(Debug, Clone)]
struct Orbit {
    terms: Vec<(usize, f64)>,
}

impl SectorLayout {
    fn new(basis: &PlaneWaveBasis) -> Self {
        let n = basis.len();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let full = (0..n).map(|i| Orbit { terms: vec![(i, 1.0)] }).collect();
        let mut self_mirror = Vec::new();
        let mut even_pairs = Vec::new();
        let mut odd = Vec::new();
        for i in 0..n {
            let j = basis.mirror_of(i);
            if j == i {
                self_mirror.push(Orbit { terms: vec![(i, 1.0)] });
            } else if basis.p[i] > 0 {
                even_pairs.push(Orbit { terms: vec![(i, s), (j, s)] });
                odd.push(Orbit { terms: vec![(i, s), (j, -s)] });
            }
        }
        let sm = self_mirror.len();
        let mut even = self_mirror;
        even.extend(even_pairs);
        Self { full, even, odd, self_mirror: sm }
    }
}

struct Eigenpair {
    lambda: f64,
    hz: Vec<Complex64>,
    sector: Vec<Complex64>,
}

/// `<orbit_a| M |orbit_b>` for a matrix given elementwise on plane waves.
fn project(orbits: &[Orbit], f: impl Fn(usize, usize) -> Complex64) -> Mat<Complex64> {
    let n = orbits.len();
    let mut out = Mat::<Complex64>::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let mut acc = C0;
            for &(i, wi) in &orbits[a].terms {
                for &(j, wj) in &orbits[b].terms {
                    acc += f(i, j) * (wi * wj);
                }
            }
            out[(a, b)] = acc;
            out[(b, a)] = acc.conj();
        }
    }
    out
}

/// A Bloch eigenmode of the supercell.
///
/// `ex`/`ey` hold the full Bloch field `e^{ikx} u(r)` on the map's grid,
/// ix-major, so that stepping one period along x picks up `e^{i 2 pi k_frac}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlochMode {
    /// Signed Bloch wavenumber `k a / 2 pi`.
    pub k_frac: f64,
    pub band_index: usize,
    pub parity: Parity,
    /// Angular frequency (rad/s).
    pub omega: f64,
    /// Normalized frequency `omega a / 2 pi c`.
    pub freq: f64,
    /// Group velocity (m/s), once computed.
    pub vg: Option<f64>,
    pub a: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub y0: f64,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
    /// Plane-wave coefficients of `H_z` in the solver basis (unit norm).
    pub hz: Vec<Complex64>,
    pub normalized: bool,
    /// Maximum |E| on the outermost grid rows relative to the global maximum.
    pub edge_ratio: f64,
}

impl BlochMode {
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    pub fn intensity(&self, i: usize) -> f64 {
        self.ex[i].norm_sqr() + self.ey[i].norm_sqr()
    }

    pub fn is_confined(&self) -> bool {
        self.edge_ratio <= 0.1
    }

    /// Time-reversed partner: the mode at `-k` with conjugated fields.
    pub fn time_reversed(&self) -> BlochMode {
        let mut out = self.clone();
        out.k_frac = -self.k_frac;
        out.ex.iter_mut().for_each(|z| *z = z.conj());
        out.ey.iter_mut().for_each(|z| *z = z.conj());
        // H_z(-k) coefficients: h_{-k-G} = conj(h_{k+G}); basis is symmetric.
        out.hz = self.hz.iter().rev().map(|z| z.conj()).collect();
        out.vg = self.vg.map(|v| -v);
        out
    }

    /// Fixes the global phase so `E_y` is real and positive at the node of
    /// largest |E_y| on the waveguide axis.
    pub fn fix_gauge(&mut self) {
        let axis = self.ny / 2;
        let best = (0..self.nx)
            .map(|ix| self.idx(ix, axis))
            .max_by(|&i, &j| self.ey[i].norm().total_cmp(&self.ey[j].norm()));
        if let Some(i) = best {
            let z = self.ey[i];
            if z.norm() > 0.0 {
                let rot = z.conj() / z.norm();
                self.ex.iter_mut().for_each(|v| *v *= rot);
                self.ey.iter_mut().for_each(|v| *v *= rot);
                self.hz.iter_mut().for_each(|v| *v *= rot);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandStructure {
    pub k_frac: Vec<f64>,
    /// `omega[i][b]`: rad/s, ascending in b.
    pub omega: Vec<Vec<f64>>,
    pub vg: Vec<Vec<Option<f64>>>,
    pub cutoff: usize,
    pub parity: Parity,
}

impl BandStructure {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k_frac,band_index,omega_rads,vg_ms\n");
        for (i, k) in self.k_frac.iter().enumerate() {
            for (b, w) in self.omega[i].iter().enumerate() {
                let vg = self.vg[i][b].map(|v| format!("{v:.17e}")).unwrap_or_default();
                s.push_str(&format!("{k:.17e},{b},{w:.17e},{vg}\n"));
            }
        }
        s
    }
}

/// Band edges of the bulk TE gap at one k, in normalized frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapWindow {
    pub lower: f64,
    pub upper: f64,
}

impl GapWindow {
    pub fn contains(&self, freq: f64) -> bool {
        freq > self.lower && freq < self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    /// Central finite difference (m/s); the primary value.
    pub finite_difference: f64,
    /// Hellmann–Feynman value from the eigenvector (m/s).
    pub hellmann_feynman: f64,
}

/// How the inverse permittivity enters the operator.
///
/// `InverseRule` inverts the Toeplitz matrix of ε restricted to the basis,
/// which converges markedly faster for TE fields than the plain Fourier
/// coefficients of 1/ε (`Direct`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FourierRule {
    Direct,
    #[default]
    InverseRule,
}

/// Orbit lists for the two mirror sectors. Pair orbits share their index
/// between `even` and `odd`, and come after the self-mirror orbits in `even`.
struct SectorLayout {
    full: Vec<Orbit>,
    even: Vec<Orbit>,
    odd: Vec<Orbit>,
    /// `even[self_mirror + q]` and `odd[q]` are built from the same pair.
    self_mirror: usize,
}

pub struct PlaneWaveSolver<'a> {
    map: &'a DielectricMap,
    basis: PlaneWaveBasis,
    eta: FourierTable,
    eps_hat: Option<FourierTable>,
    rule: FourierRule,
    cutoff: usize,
    layout: SectorLayout,
    sectors: [OnceLock<Mat<Complex64>>; 3],
}

impl<'a> PlaneWaveSolver<'a> {
    pub fn new(map: &'a DielectricMap, cutoff: usize) -> Result<Self> {
        Self::with_rule(map, cutoff, FourierRule::default())
    }

    pub fn with_rule(map: &'a DielectricMap, cutoff: usize, rule: FourierRule) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::InvalidSolverInput("cutoff must be >= 1".into()));
        }
        let basis = PlaneWaveBasis::new(map, cutoff);
        let eta = inverse_eps_fourier(map, 2 * cutoff)?;
        let eps_hat = match rule {
            FourierRule::Direct => None,
            FourierRule::InverseRule => Some(fourier_table(map, &map.eps, 2 * cutoff)?),
        };
        let layout = SectorLayout::new(&basis);
        Ok(Self {
            map,
            basis,
            eta,
            eps_hat,
            rule,
            cutoff,
            layout,
            sectors: [OnceLock::new(), OnceLock::new(), OnceLock::new()],
        })
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn rule(&self) -> FourierRule {
        self.rule
    }

    pub fn map(&self) -> &DielectricMap {
        self.map
    }

    fn orbits(&self, parity: Parity) -> &[Orbit] {
        match parity {
            Parity::Even => &self.layout.even,
            Parity::Odd => &self.layout.odd,
            Parity::Full => &self.layout.full,
        }
    }

    /// Inverse-permittivity matrix projected onto a sector's orbits.
    fn eta_sector(&self, parity: Parity) -> &Mat<Complex64> {
        let slot = match parity {
            Parity::Even => 0,
            Parity::Odd => 1,
            Parity::Full => 2,
        };
        self.sectors[slot].get_or_init(|| {
            let orbits = self.orbits(parity);
            let b = &self.basis;
            match &self.eps_hat {
                None => project(orbits, |i, j| self.eta.get(b.m[i] - b.m[j], b.p[i] - b.p[j])),
                Some(eps) => {
                    let e = project(orbits, |i, j| eps.get(b.m[i] - b.m[j], b.p[i] - b.p[j]));
                    let inv = e.partial_piv_lu().inverse();
                    let n = inv.nrows();
                    Mat::from_fn(n, n, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)].conj()))
                }
            }
        })
    }

    /// `(kx, ky)` of an orbit's representative plane wave (ky >= 0).
    fn orbit_k(&self, orbit: &Orbit, k_frac: f64) -> (f64, f64) {
        let i = orbit.terms[0].0;
        let (kx, ky) = self.basis.kg(i, k_frac);
        (kx, ky.abs())
    }

    /// Operator in a sector's orbit basis, units of `(2 pi / a)^2`:
    /// `H = Dx eta Dx + Dy eta Dy`, where `Dy` swaps the mirror sectors.
    fn sector_operator(&self, parity: Parity, k_frac: f64) -> Mat<Complex64> {
        let eta = self.eta_sector(parity);
        match parity {
            Parity::Full => {
                let n = self.basis.len();
                let k: Vec<(f64, f64)> = (0..n).map(|i| self.basis.kg(i, k_frac)).collect();
                Mat::from_fn(n, n, |i, j| eta[(i, j)] * (k[i].0 * k[j].0 + k[i].1 * k[j].1))
            }
            Parity::Even | Parity::Odd => {
                let other = if parity == Parity::Even { Parity::Odd } else { Parity::Even };
                let eta_other = self.eta_sector(other);
                let orbits = self.orbits(parity);
                let n = orbits.len();
                let k: Vec<(f64, f64)> = orbits.iter().map(|o| self.orbit_k(o, k_frac)).collect();
                // Position of each orbit's partner in the other sector.
                let sm = self.layout.self_mirror;
                let partner = |a: usize| -> Option<usize> {
                    match parity {
                        Parity::Even => a.checked_sub(sm),
                        _ => Some(a + sm),
                    }
                };
                let idx: Vec<Option<usize>> = (0..n).map(partner).collect();
                Mat::from_fn(n, n, |a, b| {
                    let mut v = eta[(a, b)] * (k[a].0 * k[b].0);
                    if let (Some(pa), Some(pb)) = (idx[a], idx[b]) {
                        v += eta_other[(pa, pb)] * (k[a].1 * k[b].1);
                    }
                    v
                })
            }
        }
    }

    /// Full operator in the plane-wave basis, units of `(2 pi / a)^2`.
    pub fn operator(&self, k_frac: f64) -> Mat<Complex64> {
        self.sector_operator(Parity::Full, k_frac)
    }

    /// Lowest `n_bands` eigenpairs of one sector.
    fn eigen(&self, k_frac: f64, n_bands: usize, parity: Parity) -> Result<Vec<Eigenpair>> {
        let orbits = self.orbits(parity);
        let h = self.sector_operator(parity, k_frac);
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let mut order: Vec<usize> = (0..orbits.len()).collect();
        order.sort_by(|&i, &j| s[i].re.total_cmp(&s[j].re));
        let nb = n_bands.min(orbits.len());
        let mut out = Vec::with_capacity(nb);
        for &col in order.iter().take(nb) {
            let sector: Vec<Complex64> = (0..orbits.len()).map(|a| u[(a, col)]).collect();
            let mut hz = vec![C0; self.basis.len()];
            for (a, orbit) in orbits.iter().enumerate() {
                for &(i, w) in &orbit.terms {
                    hz[i] += sector[a] * w;
                }
            }
            out.push(Eigenpair {
                lambda: s[col].re,
                hz,
                sector,
            });
        }
        Ok(out)
    }

    /// Eigenfrequencies only (normalized units), ascending.
    pub fn frequencies(&self, k_frac: f64, n_bands: usize, parity: Parity) -> Result<Vec<f64>> {
        check_k(k_frac)?;
        Ok(self
            .eigen(k_frac, n_bands, parity)?
            .into_iter()
            .map(|e| e.lambda.max(0.0).sqrt())
            .collect())
    }

    /// Solves for the lowest `n_bands` modes; fields are unnormalized.
    pub fn solve(&self, k_frac: f64, n_bands: usize, parity: Parity) -> Result<Vec<BlochMode>> {
        check_k(k_frac)?;
        if n_bands == 0 {
            return Err(Error::InvalidSolverInput("n_bands must be >= 1".into()));
        }
        let pairs = self.eigen(k_frac, n_bands, parity)?;
        let mut modes: Vec<BlochMode> = pairs
            .into_iter()
            .enumerate()
            .map(|(b, e)| self.build_mode(k_frac, b, parity, e.lambda, e.hz))
            .collect();
        // Ties in frequency: better-confined band first.
        modes.sort_by(|x, y| {
            let dx = x.freq - y.freq;
            if dx.abs() <= 1e-12 * x.freq.max(1e-30) {
                x.edge_ratio.total_cmp(&y.edge_ratio)
            } else {
                x.freq.total_cmp(&y.freq)
            }
        });
        for (b, m) in modes.iter_mut().enumerate() {
            m.band_index = b;
        }
        Ok(modes)
    }

    fn build_mode(&self, k_frac: f64, band: usize, parity: Parity, lambda: f64, hz: Vec<Complex64>) -> BlochMode {
        let map = self.map;
        let freq = lambda.max(0.0).sqrt();
        let omega = 2.0 * PI * SPEED_OF_LIGHT * freq / map.cell_x;
        let (ex, ey) = self.fields(k_frac, &hz);
        let mut mode = BlochMode {
            k_frac,
            band_index: band,
            parity,
            omega,
            freq,
            vg: None,
            a: map.cell_x,
            nx: map.nx,
            ny: map.ny,
            dx: map.dx,
            dy: map.dy,
            y0: map.y0,
            ex,
            ey,
            hz,
            normalized: false,
            edge_ratio: 0.0,
        };
        mode.edge_ratio = edge_ratio(&mode);
        mode.fix_gauge();
        mode
    }

    /// In-plane E on the grid from `H_z` coefficients:
    /// `D ~ (d_y H_z, -d_x H_z)`, `E = D / eps`.
    fn fields(&self, k_frac: f64, hz: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let map = self.map;
        let b = &self.basis;
        let (nx, ny) = (map.nx, map.ny);
        let nm = (2 * b.max_m + 1) as usize;
        // S_m(y) = sum_p c(m, p) e^{i pi p y / Ly} for both D components.
        let mut sx = vec![C0; nm * ny];
        let mut sy = vec![C0; nm * ny];
        for (i, &c) in hz.iter().enumerate() {
            if c == C0 {
                continue;
            }
            let (kx, ky) = b.kg(i, k_frac);
            let dxc = c * ky;
            let dyc = -c * kx;
            let mi = (b.m[i] + b.max_m) as usize;
            let step = PI * b.p[i] as f64 / map.cell_y;
            for iy in 0..ny {
                let ph = Complex64::from_polar(1.0, step * map.y(iy));
                sx[mi * ny + iy] += dxc * ph;
                sy[mi * ny + iy] += dyc * ph;
            }
        }
        let mut ex = vec![C0; nx * ny];
        let mut ey = vec![C0; nx * ny];
        for ix in 0..nx {
            let x = map.x(ix) / map.cell_x;
            let phases: Vec<Complex64> = (0..nm)
                .map(|mi| {
                    let m = mi as i64 - b.max_m;
                    Complex64::from_polar(1.0, 2.0 * PI * (k_frac + m as f64) * x)
                })
                .collect();
            for iy in 0..ny {
                let mut dxv = C0;
                let mut dyv = C0;
                for (mi, ph) in phases.iter().enumerate() {
                    dxv += sx[mi * ny + iy] * ph;
                    dyv += sy[mi * ny + iy] * ph;
                }
                let inv = 1.0 / map.eps_at(ix, iy);
                ex[ix * ny + iy] = dxv * inv;
                ey[ix * ny + iy] = dyv * inv;
            }
        }
        (ex, ey)
    }

    /// `du/dk_frac` from a sector eigenvector: `dH/dk = (kx_a + kx_b) eta_ab`.
    fn hellmann_feynman(&self, parity: Parity, k_frac: f64, v: &[Complex64], freq: f64) -> f64 {
        let eta = self.eta_sector(parity);
        let kx: Vec<f64> = self
            .orbits(parity)
            .iter()
            .map(|o| self.orbit_k(o, k_frac).0)
            .collect();
        let n = v.len();
        let mut acc = C0;
        for a in 0..n {
            let mut row = C0;
            for b in 0..n {
                row += eta[(a, b)] * (kx[a] + kx[b]) * v[b];
            }
            acc += v[a].conj() * row;
        }
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        acc.re / norm / (2.0 * freq)
    }

    /// Eigenvector overlap `|<a|b>|` for unit vectors.
    pub fn overlap(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm()
    }

    /// Group velocity of band `band_index` (within `parity`) at `k_frac`.
    ///
    /// The bands at `k +- dk` are matched to the centre band by eigenvector
    /// overlap; an overlap below 0.9 means a crossing within the stencil.
    pub fn group_velocity(&self, band_index: usize, k_frac: f64, dk: f64, parity: Parity) -> Result<VelocityEstimate> {
        check_k(k_frac)?;
        if !(dk > 0.0) {
            return Err(Error::InvalidSolverInput("dk must be positive".into()));
        }
        let n_bands = band_index + 4;
        let centre = self.eigen(k_frac, n_bands, parity)?;
        let c = centre
            .get(band_index)
            .ok_or_else(|| Error::InvalidSolverInput(format!("band {band_index} not found")))?;
        let freq0 = c.lambda.max(0.0).sqrt();
        let mut side = [0.0f64; 2];
        for (s, kk) in [k_frac - dk, k_frac + dk].into_iter().enumerate() {
            let pairs = self.eigen(kk, n_bands, parity)?;
            let (best, ov) = pairs
                .iter()
                .map(|e| (e.lambda, Self::overlap(&c.sector, &e.sector)))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty");
            if ov < 0.9 {
                return Err(Error::BandCrossing { k_frac, overlap: ov });
            }
            side[s] = best.max(0.0).sqrt();
        }
        let du_dk = (side[1] - side[0]) / (2.0 * dk);
        let hf = self.hellmann_feynman(parity, k_frac, &c.sector, freq0);
        Ok(VelocityEstimate {
            finite_difference: du_dk * SPEED_OF_LIGHT,
            hellmann_feynman: hf * SPEED_OF_LIGHT,
        })
    }

    /// Bulk TE gap at `k_frac` from the defect-free supercell built from the
    /// same lattice: `2 R + 1` primitive cells put that many bands below it.
    pub fn bulk_gap(&self, k_frac: f64) -> Result<GapWindow> {
        let spec = self.map.spec;
        let bulk = build_bulk_supercell(&spec)?;
        let solver = PlaneWaveSolver::with_rule(&bulk, self.cutoff, self.rule)?;
        let below = 2 * spec.rows_per_side + 1;
        let f = solver.frequencies(k_frac, below + 1, Parity::Full)?;
        Ok(GapWindow {
            lower: f[below - 1],
            upper: f[below],
        })
    }
}

fn check_k(k_frac: f64) -> Result<()> {
    if !k_frac.is_finite() || k_frac.abs() > 0.5 {
        return Err(Error::InvalidSolverInput(format!(
            "k_frac {k_frac} outside [-0.5, 0.5]"
        )));
    }
    Ok(())
}

fn edge_ratio(mode: &BlochMode) -> f64 {
    let mut max_all = 0.0f64;
    let mut max_edge = 0.0f64;
    for ix in 0..mode.nx {
        for iy in 0..mode.ny {
            let v = mode.intensity(mode.idx(ix, iy)).sqrt();
            max_all = max_all.max(v);
            if iy == 0 || iy == mode.ny - 1 {
                max_edge = max_edge.max(v);
            }
        }
    }
    if max_all == 0.0 {
        1.0
    } else {
        max_edge / max_all
    }
}

/// The n lowest bands of the TE master operator at one k (unnormalized).
pub fn solve_bands(map: &DielectricMap, k_frac: f64, n_bands: usize, cutoff: usize) -> Result<Vec<BlochMode>> {
    PlaneWaveSolver::new(map, cutoff)?.solve(k_frac, n_bands, Parity::Full)
}

pub fn group_velocity(
    map: &DielectricMap,
    band_index: usize,
    k_frac: f64,
    dk: f64,
    cutoff: usize,
    parity: Parity,
) -> Result<VelocityEstimate> {
    PlaneWaveSolver::new(map, cutoff)?.group_velocity(band_index, k_frac, dk, parity)
}

/// Scales fields so that `sum eps |e|^2 dx dy h_eff = 1` over one unit cell.
pub fn normalize_mode(mode: &BlochMode, map: &DielectricMap, h_eff: f64) -> Result<BlochMode> {
    let integral = energy_integral(mode, map, h_eff);
    if !(integral > 0.0) || !integral.is_finite() {
        return Err(Error::ZeroField);
    }
    let s = 1.0 / integral.sqrt();
    let mut out = mode.clone();
    out.ex.iter_mut().for_each(|z| *z *= s);
    out.ey.iter_mut().for_each(|z| *z *= s);
    out.normalized = true;
    Ok(out)
}

pub fn energy_integral(mode: &BlochMode, map: &DielectricMap, h_eff: f64) -> f64 {
    let dv = mode.dx * mode.dy * h_eff;
    (0..mode.ex.len())
        .map(|i| map.eps[i] * mode.intensity(i))
        .sum::<f64>()
        * dv
}

/// Index of the confined, even band inside the bulk gap.
pub fn identify_guided_band(modes: &[BlochMode], gap: GapWindow) -> Result<usize> {
    modes
        .iter()
        .filter(|m| gap.contains(m.freq) && m.is_confined() && m.parity != Parity::Odd)
        .min_by(|a, b| a.edge_ratio.total_cmp(&b.edge_ratio))
        .map(|m| m.band_index)
        .ok_or(Error::NoConfinedBand {
            gap_lo: gap.lower,
            gap_hi: gap.upper,
        })
}

/// Number of even-sector bands needed to reach past the bulk gap.
pub fn bands_through_gap(map: &DielectricMap) -> usize {
    map.spec.rows_per_side + 4
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_w1_supercell, LatticeSpec};

    fn small_spec() -> LatticeSpec {
        let mut s = LatticeSpec::reference_w1(2.8);
        s.rows_per_side = 3;
        s.resolution = 32;
        s
    }

    #[test]
    fn mirror_index_is_involution() {
        let map = build_w1_supercell(&small_spec()).unwrap();
        let solver = PlaneWaveSolver::new(&map, 4).unwrap();
        let b = solver.basis();
        for i in 0..b.len() {
            let j = b.mirror_of(i);
            assert_eq!(b.mirror_of(j), i);
            assert_eq!(b.p[j], -b.p[i]);
        }
    }

    #[test]
    fn sectors_partition_full_spectrum() {
        let map = build_w1_supercell(&small_spec()).unwrap();
        let solver = PlaneWaveSolver::new(&map, 3).unwrap();
        let full = solver.frequencies(0.3, 12, Parity::Full).unwrap();
        let mut both = solver.frequencies(0.3, 12, Parity::Even).unwrap();
        both.extend(solver.frequencies(0.3, 12, Parity::Odd).unwrap());
        both.sort_by(f64::total_cmp);
        for (a, b) in full.iter().zip(&both) {
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn normalization_is_idempotent_and_scale_free() {
        let spec = small_spec();
        let map = build_w1_supercell(&spec).unwrap();
        let modes = PlaneWaveSolver::new(&map, 3).unwrap().solve(0.35, 2, Parity::Even).unwrap();
        let h = 0.56 * spec.a;
        let n1 = normalize_mode(&modes[0], &map, h).unwrap();
        assert!((energy_integral(&n1, &map, h) - 1.0).abs() < 1e-12);
        let n2 = normalize_mode(&n1, &map, h).unwrap();
        for (a, b) in n1.ex.iter().zip(&n2.ex) {
            assert!((a - b).norm() <= 1e-14 * a.norm().max(1e-300) + 1e-300);
        }
        let mut scaled = modes[0].clone();
        scaled.ex.iter_mut().for_each(|z| *z *= 7.0);
        scaled.ey.iter_mut().for_each(|z| *z *= 7.0);
        let n3 = normalize_mode(&scaled, &map, h).unwrap();
        for (a, b) in n1.ey.iter().zip(&n3.ey) {
            assert!((a - b).norm() <= 1e-12 * a.norm() + 1e-300);
        }
    }

    #[test]
    fn zero_field_cannot_be_normalized() {
        let map = build_w1_supercell(&small_spec()).unwrap();
        let mut m = PlaneWaveSolver::new(&map, 2).unwrap().solve(0.3, 1, Parity::Even).unwrap().remove(0);
        m.ex.iter_mut().for_each(|z| *z = C0);
        m.ey.iter_mut().for_each(|z| *z = C0);
        assert!(matches!(normalize_mode(&m, &map, 1e-7), Err(Error::ZeroField)));
    }

    fn uniform_map() -> DielectricMap {
        let mut s = small_spec();
        s.hole_radius = 0.0;
        build_w1_supercell(&s).unwrap()
    }

    #[test]
    fn empty_lattice_matches_folded_dispersion() {
        let map = uniform_map();
        let n = map.spec.eps_slab.sqrt();
        for rule in [FourierRule::Direct, FourierRule::InverseRule] {
            let solver = PlaneWaveSolver::with_rule(&map, 4, rule).unwrap();
            for &k in &[0.1, 0.27, -0.41, 0.5] {
                let b = solver.basis();
                let mut exact: Vec<f64> = (0..b.len())
                    .map(|i| {
                        let (kx, ky) = b.kg(i, k);
                        kx.hypot(ky) / n
                    })
                    .collect();
                exact.sort_by(f64::total_cmp);
                let got = solver.frequencies(k, 8, Parity::Full).unwrap();
                for (g, e) in got.iter().zip(&exact) {
                    assert!((g - e).abs() <= 1e-10 * e, "{rule:?} k={k}: {g} vs {e}");
                }
            }
        }
    }

    #[test]
    fn uniform_medium_group_velocity_is_c_over_n() {
        let map = uniform_map();
        let n = map.spec.eps_slab.sqrt();
        let v = PlaneWaveSolver::new(&map, 3)
            .unwrap()
            .group_velocity(0, 0.2, 1e-3, Parity::Full)
            .unwrap();
        let c_n = SPEED_OF_LIGHT / n;
        assert!((v.finite_difference - c_n).abs() < 1e-8 * c_n);
        assert!((v.hellmann_feynman - c_n).abs() < 1e-8 * c_n);
    }

    #[test]
    fn operator_is_hermitian_with_nonnegative_spectrum() {
        let map = build_w1_supercell(&small_spec()).unwrap();
        for rule in [FourierRule::Direct, FourierRule::InverseRule] {
            let solver = PlaneWaveSolver::with_rule(&map, 4, rule).unwrap();
            let h = solver.operator(0.37);
            let mut scale = 0.0f64;
            let mut resid = 0.0f64;
            for i in 0..h.nrows() {
                for j in 0..h.ncols() {
                    scale = scale.max(h[(i, j)].norm());
                    resid = resid.max((h[(i, j)] - h[(j, i)].conj()).norm());
                }
            }
            assert!(resid < 1e-12 * scale, "{rule:?}: {resid}");
            let f = solver.frequencies(0.37, 6, Parity::Full).unwrap();
            assert!(f.windows(2).all(|w| w[0] <= w[1]));
            let evd = h.self_adjoint_eigen(Side::Lower).unwrap();
            let s = evd.S().column_vector();
            assert!((0..s.nrows()).all(|i| s[i].re >= -1e-12));
        }
    }

    #[test]
    fn time_reversal_conjugates_fields() {
        let map = build_w1_supercell(&small_spec()).unwrap();
        let solver = PlaneWaveSolver::new(&map, 4).unwrap();
        let plus = solver.solve(0.33, 3, Parity::Even).unwrap();
        let minus = solver.solve(-0.33, 3, Parity::Even).unwrap();
        for (p, m) in plus.iter().zip(&minus) {
            assert!((p.freq - m.freq).abs() < 1e-10);
            let conj: Vec<Complex64> = p.ey.iter().chain(&p.ex).map(|z| z.conj()).collect();
            let other: Vec<Complex64> = m.ey.iter().chain(&m.ex).copied().collect();
            let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let ov = PlaneWaveSolver::overlap(&conj, &other) / (norm(&conj) * norm(&other));
            assert!(ov > 1.0 - 1e-6, "band {}: {ov}", p.band_index);
            let tr = p.time_reversed();
            assert!(PlaneWaveSolver::overlap(&tr.hz, &m.hz) > 1.0 - 1e-6);
        }
    }

    #[test]
    fn w1_has_one_guided_even_band_with_consistent_velocity() {
        let map = build_w1_supercell(&small_spec()).unwrap();
        let solver = PlaneWaveSolver::new(&map, 4).unwrap();
        let k = 0.39;
        let gap = solver.bulk_gap(k).unwrap();
        let modes = solver.solve(k, bands_through_gap(&map), Parity::Even).unwrap();
        let guided: Vec<_> = modes
            .iter()
            .filter(|m| gap.contains(m.freq) && m.is_confined())
            .collect();
        assert_eq!(guided.len(), 1);
        let band = identify_guided_band(&modes, gap).unwrap();
        assert_eq!(band, guided[0].band_index);
        let v = solver.group_velocity(band, k, 1e-3, Parity::Even).unwrap();
        assert!(v.hellmann_feynman.abs() < 0.2 * SPEED_OF_LIGHT);
        let rel = (v.finite_difference - v.hellmann_feynman).abs() / v.hellmann_feynman.abs();
        assert!(rel < 0.01, "fd {} hf {}", v.finite_difference, v.hellmann_feynman);
        let near = solver.solve(k + 0.005, bands_through_gap(&map), Parity::Even).unwrap();
        let ov = PlaneWaveSolver::overlap(&modes[band].hz, &near[band].hz);
        assert!(ov > 0.99, "{ov}");
    }

    #[test]
    fn defect_free_map_has_no_confined_band() {
        let spec = small_spec();
        let bulk = build_bulk_supercell(&spec).unwrap();
        let solver = PlaneWaveSolver::new(&bulk, 4).unwrap();
        let gap = solver.bulk_gap(0.39).unwrap();
        let modes = solver.solve(0.39, bands_through_gap(&bulk), Parity::Even).unwrap();
        assert!(matches!(
            identify_guided_band(&modes, gap),
            Err(Error::NoConfinedBand { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_k() {
        let map = build_w1_supercell(&small_spec()).unwrap();
        let solver = PlaneWaveSolver::new(&map, 2).unwrap();
        assert!(solver.solve(0.7, 1, Parity::Even).is_err());
        assert!(PlaneWaveSolver::new(&map, 0).is_err());
    }
}
