//! Projected waveguide Green tensors, directional emission rates and the
//! usual figures of merit (β, Purcell factor, coupling efficiency, V_eff).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{find_antinode, interpolate, FieldGrid};
use crate::SPEED_OF_LIGHT;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// One Debye in C m.
pub const DEBYE: f64 = 3.33564e-30;

pub type Vec2 = [Complex64; 2];
pub type Tensor2 = [[Complex64; 2]; 2];

const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn sigma_plus() -> Vec2 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [Complex64::new(r, 0.0), Complex64::new(0.0, r)]
}

pub fn sigma_minus() -> Vec2 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [Complex64::new(r, 0.0), Complex64::new(0.0, -r)]
}

/// Real dipole at angle `theta` from x.
pub fn linear(theta: f64) -> Vec2 {
    [Complex64::new(theta.cos(), 0.0), Complex64::new(theta.sin(), 0.0)]
}

/// `a† b`
pub fn dot_h(a: &Vec2, b: &Vec2) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// `aᵀ b`
pub fn dot_t(a: &Vec2, b: &Vec2) -> Complex64 {
    a[0] * b[0] + a[1] * b[1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleSpec {
    pub x0: f64,
    pub y0: f64,
    /// Unit complex orientation.
    pub mu: Vec2,
    /// Dipole moment (C m).
    pub d0: f64,
    /// Transition angular frequency (rad/s).
    pub omega0: f64,
}

impl DipoleSpec {
    pub fn new(x0: f64, y0: f64, mu: Vec2, d0: f64, omega0: f64) -> Result<Self> {
        let n = dot_h(&mu, &mu).re;
        if (n - 1.0).abs() >= 1e-12 {
            return Err(Error::InvalidSolverInput(format!(
                "dipole orientation must be unit norm, |mu|^2 = {n}"
            )));
        }
        if !(d0 >= 0.0) || !(omega0 > 0.0) {
            return Err(Error::InvalidSolverInput(
                "d0 must be >= 0 and omega0 > 0".into(),
            ));
        }
        Ok(Self {
            x0,
            y0,
            mu,
            d0,
            omega0,
        })
    }

    pub fn from_debye(x0: f64, y0: f64, mu: Vec2, d0_debye: f64, omega0: f64) -> Result<Self> {
        Self::new(x0, y0, mu, d0_debye * DEBYE, omega0)
    }
}

/// Forward and backward projected Green tensors at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenTensors {
    pub g_f: Tensor2,
    pub g_b: Tensor2,
    /// `a omega / 2 v_g` (dimensionless).
    pub prefactor: f64,
    /// Full Bloch field at the point.
    pub e: Vec2,
}

impl GreenTensors {
    /// `μ† Im(G) μ` for either direction.
    pub fn project_im(g: &Tensor2, mu: &Vec2) -> f64 {
        let gm = [
            g[0][0] * mu[0] + g[0][1] * mu[1],
            g[1][0] * mu[0] + g[1][1] * mu[1],
        ];
        // G = i P h with Hermitian h, so Im(μ† G μ) = P μ† h μ.
        dot_h(mu, &gm).im
    }

    pub fn trace_im(g: &Tensor2) -> f64 {
        (g[0][0] + g[1][1]).im
    }
}

fn mode_scalars(grid: &FieldGrid) -> Result<(f64, f64, f64)> {
    let m = grid.meta.complete()?;
    if !(m.vg > 0.0) {
        return Err(Error::NonPositiveGroupVelocity(m.vg));
    }
    if !grid.is_normalized() {
        return Err(Error::NotNormalized);
    }
    Ok((m.a, m.omega, m.vg))
}

pub fn green_projected(grid: &FieldGrid, x0: f64, y0: f64) -> Result<GreenTensors> {
    let (a, omega, vg) = mode_scalars(grid)?;
    let (ex, ey) = interpolate(grid, x0, y0)?;
    let e = [ex, ey];
    let pre = a * omega / (2.0 * vg);
    let mut g_f = [[Complex64::default(); 2]; 2];
    let mut g_b = g_f;
    for i in 0..2 {
        for j in 0..2 {
            g_f[i][j] = I * pre * e[i] * e[j].conj();
            g_b[i][j] = I * pre * e[i].conj() * e[j];
        }
    }
    Ok(GreenTensors {
        g_f,
        g_b,
        prefactor: pre,
        e,
    })
}

/// How the leaky-mode rate Γ₀ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Gamma0Policy {
    /// Γ₀ = f Γ^hom.
    FractionOfHom(f64),
    /// Γ₀ in rad/s.
    Constant(f64),
    Zero,
}

impl Default for Gamma0Policy {
    fn default() -> Self {
        Gamma0Policy::FractionOfHom(0.1)
    }
}

impl Gamma0Policy {
    pub fn resolve(&self, gamma_hom: f64) -> f64 {
        match *self {
            Gamma0Policy::FractionOfHom(f) => f * gamma_hom,
            Gamma0Policy::Constant(g) => g,
            Gamma0Policy::Zero => 0.0,
        }
    }
}

/// Directional rates and figures of merit of one dipole. Rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionRates {
    pub x0: f64,
    pub y0: f64,
    pub omega0: f64,
    /// Mode angular frequency used for the Green tensor.
    pub omega: f64,
    pub gamma_f: f64,
    pub gamma_b: f64,
    /// Complex forward-to-backward amplitude, including the `e^{2ikx0}`
    /// phase carried by the Bloch field.
    pub gamma_fb: Complex64,
    pub gamma_0: f64,
    pub gamma_hom: f64,
    pub beta: f64,
    pub purcell: f64,
    pub eta_f: f64,
    pub eta_b: f64,
    pub v_eff: f64,
    pub q_w: f64,
    pub kappa_w: f64,
    /// `μ† e(r₀)`: amplitude into the forward mode.
    pub overlap_f: Complex64,
    /// `μ† e*(r₀)`: amplitude into the backward mode.
    pub overlap_b: Complex64,
    /// The field vanishes at r₀; all waveguide rates are zero.
    pub zero_field: bool,
}

impl EmissionRates {
    pub fn gamma_total(&self) -> f64 {
        self.gamma_f + self.gamma_b + self.gamma_0
    }

    /// Convenience value/2π (Hz).
    pub fn gamma_f_hz(&self) -> f64 {
        self.gamma_f / (2.0 * PI)
    }

    pub fn gamma_b_hz(&self) -> f64 {
        self.gamma_b / (2.0 * PI)
    }

    /// Record with forward and backward exchanged: the same emitter seen by
    /// the time-reversed mode.
    pub fn mirrored(&self) -> EmissionRates {
        EmissionRates {
            gamma_f: self.gamma_b,
            gamma_b: self.gamma_f,
            gamma_fb: self.gamma_fb.conj(),
            eta_f: self.eta_b,
            eta_b: self.eta_f,
            overlap_f: self.overlap_b,
            overlap_b: self.overlap_f,
            ..*self
        }
    }

    /// Record with explicit waveguide rates, for model studies that bypass a
    /// mode solve. The cross amplitude is real and saturates Cauchy-Schwarz.
    pub fn from_rates(omega0: f64, gamma_f: f64, gamma_b: f64, gamma_0: f64) -> EmissionRates {
        let tot = gamma_f + gamma_b;
        EmissionRates {
            x0: 0.0,
            y0: 0.0,
            omega0,
            omega: omega0,
            gamma_f,
            gamma_b,
            gamma_fb: Complex64::new((gamma_f * gamma_b).sqrt(), 0.0),
            gamma_0,
            gamma_hom: 0.0,
            beta: if tot + gamma_0 > 0.0 { tot / (tot + gamma_0) } else { 0.0 },
            purcell: 0.0,
            eta_f: 0.0,
            eta_b: 0.0,
            v_eff: 0.0,
            q_w: 0.0,
            kappa_w: 0.0,
            overlap_f: Complex64::new(gamma_f.sqrt(), 0.0),
            overlap_b: Complex64::new(gamma_b.sqrt(), 0.0),
            zero_field: tot == 0.0,
        }
    }
}

/// Rate of a dipole in a homogeneous medium of index `n` (rad/s).
pub fn homogeneous_rate(d0: f64, omega: f64, n: f64) -> f64 {
    d0 * d0 * omega.powi(3) * n / (3.0 * PI * EPS0 * HBAR * SPEED_OF_LIGHT.powi(3))
}

pub fn emission_rates(grid: &FieldGrid, dipole: &DipoleSpec, policy: Gamma0Policy) -> Result<EmissionRates> {
    let g = green_projected(grid, dipole.x0, dipole.y0)?;
    let m = grid.meta.complete()?;
    let mu = &dipole.mu;
    let e = g.e;
    let d2 = dipole.d0 * dipole.d0;
    let scale = 2.0 * d2 / (HBAR * EPS0);
    let gamma_f = scale * GreenTensors::project_im(&g.g_f, mu);
    let gamma_b = scale * GreenTensors::project_im(&g.g_b, mu);
    let overlap_f = dot_h(mu, &e);
    let overlap_b = dot_h(mu, &[e[0].conj(), e[1].conj()]);
    let gamma_fb = d2 * m.a * m.omega / (HBAR * EPS0 * m.vg) * dot_t(&e, mu) * overlap_f;

    let gamma_hom = homogeneous_rate(dipole.d0, dipole.omega0, m.eps_slab.sqrt());
    let gamma_0 = policy.resolve(gamma_hom);
    let wg = gamma_f + gamma_b;
    let beta = if wg + gamma_0 > 0.0 { wg / (wg + gamma_0) } else { 0.0 };
    let purcell = if gamma_hom > 0.0 { wg / gamma_hom } else { 0.0 };

    let max_node = (0..grid.ex.len()).map(|i| grid.intensity(i)).fold(0.0, f64::max);
    let (eta_f, eta_b) = if max_node > 0.0 {
        (
            (overlap_f.norm_sqr() / max_node).min(1.0),
            (overlap_b.norm_sqr() / max_node).min(1.0),
        )
    } else {
        (0.0, 0.0)
    };
    let antinode = find_antinode(grid);
    let v_eff = if antinode.intensity > 0.0 {
        1.0 / (m.eps_slab * antinode.intensity)
    } else {
        f64::INFINITY
    };
    let kappa_w = 2.0 * m.vg / m.a;
    if ((dipole.omega0 - m.omega) / m.omega).abs() > 0.05 {
        log::warn!(
            "dipole frequency {:.4e} rad/s is far from the mode frequency {:.4e} rad/s",
            dipole.omega0,
            m.omega
        );
    }
    Ok(EmissionRates {
        x0: dipole.x0,
        y0: dipole.y0,
        omega0: dipole.omega0,
        omega: m.omega,
        gamma_f,
        gamma_b,
        gamma_fb,
        gamma_0,
        gamma_hom,
        beta,
        purcell,
        eta_f,
        eta_b,
        v_eff,
        q_w: m.omega / kappa_w,
        kappa_w,
        overlap_f,
        overlap_b,
        zero_field: e[0].norm_sqr() + e[1].norm_sqr() == 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn rate_identities_report(r: &EmissionRates) -> IdentityReport {
    let mut checks = Vec::new();
    // Relative to the squared total rate, so a vanishing branch is judged
    // against the scale of the other one.
    let prod = r.gamma_f * r.gamma_b;
    let scale = (r.gamma_f + r.gamma_b).powi(2);
    let cs = if scale > 0.0 {
        (r.gamma_fb.norm_sqr() - prod).abs() / scale
    } else {
        r.gamma_fb.norm()
    };
    checks.push(IdentityCheck {
        name: "cross_rate_cauchy_schwarz".into(),
        residual: cs,
        pass: cs < 1e-10,
    });
    let wg = r.gamma_f + r.gamma_b;
    let beta = if wg + r.gamma_0 > 0.0 { wg / (wg + r.gamma_0) } else { 0.0 };
    let db = (beta - r.beta).abs();
    checks.push(IdentityCheck {
        name: "beta_recomputed".into(),
        residual: db,
        pass: db < 1e-12 && (0.0..=1.0).contains(&r.beta),
    });
    let eta_out = [r.eta_f, r.eta_b]
        .iter()
        .map(|&e| if e < 0.0 { -e } else if e > 1.0 { e - 1.0 } else { 0.0 })
        .fold(0.0, f64::max);
    checks.push(IdentityCheck {
        name: "eta_bounds".into(),
        residual: eta_out,
        pass: eta_out == 0.0,
    });
    let neg = (-r.gamma_f).max(-r.gamma_b).max(0.0);
    let size = r.gamma_f.abs() + r.gamma_b.abs();
    let neg = if size > 0.0 { neg / size } else { 0.0 };
    checks.push(IdentityCheck {
        name: "rates_nonnegative".into(),
        residual: neg,
        pass: neg < 1e-12,
    });
    IdentityReport { checks }
}
