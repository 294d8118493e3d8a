//! Single-photon transmission and reflection by a waveguide-coupled dipole
//! in the weak-excitation limit.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightmatter::{EmissionRates, EPS0, HBAR};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `2 omega0 d0^2 / (eps0 hbar (omega0^2 - omega^2))`.
pub fn bare_polarizability(d0: f64, omega0: f64, omega: f64) -> Result<Complex64> {
    let den = omega0 * omega0 - omega * omega;
    if den == 0.0 {
        return Err(Error::Pole);
    }
    Ok(Complex64::new(2.0 * omega0 * d0 * d0 / (EPS0 * HBAR * den), 0.0))
}

fn denominator(rates: &EmissionRates, omega0: f64, omega: f64) -> Complex64 {
    Complex64::new(omega0 * omega0 - omega * omega, -omega0 * rates.gamma_total())
}

pub fn amplitude_t(rates: &EmissionRates, omega0: f64, omega: f64) -> Complex64 {
    if rates.gamma_f == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    1.0 + I * omega0 * 2.0 * rates.gamma_f / denominator(rates, omega0, omega)
}

pub fn amplitude_r(rates: &EmissionRates, omega0: f64, omega: f64) -> Complex64 {
    // |gamma_fb|^2 <= gamma_f gamma_b, so any remainder is rounding.
    if rates.gamma_f <= 0.0 || rates.gamma_b <= 0.0 || rates.gamma_fb == Complex64::default() {
        return Complex64::default();
    }
    I * omega0 * 2.0 * rates.gamma_fb / denominator(rates, omega0, omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSpectrum {
    pub omega: Vec<f64>,
    pub t: Vec<Complex64>,
    pub r: Vec<Complex64>,
    pub omega0: f64,
    pub rates: EmissionRates,
}

/// Amplitudes on a monotone grid of angular frequencies.
pub fn spectrum(rates: &EmissionRates, omega0: f64, omega: &[f64]) -> Result<ScatterSpectrum> {
    if omega.len() < 2 || omega.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidSolverInput(
            "frequency grid must be strictly increasing with at least two points".into(),
        ));
    }
    let width = rates.gamma_total();
    let (lo, hi) = (omega[0], omega[omega.len() - 1]);
    if width > 0.0 && (omega0 - lo < 5.0 * width || hi - omega0 < 5.0 * width) {
        log::warn!("frequency grid spans fewer than 10 linewidths around the resonance");
    }
    Ok(ScatterSpectrum {
        omega: omega.to_vec(),
        t: omega.iter().map(|&w| amplitude_t(rates, omega0, w)).collect(),
        r: omega.iter().map(|&w| amplitude_r(rates, omega0, w)).collect(),
        omega0,
        rates: *rates,
    })
}

/// Evenly spaced grid of `n` points covering `omega0 ± half_span`.
pub fn detuning_grid(omega0: f64, half_span: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| omega0 - half_span + 2.0 * half_span * i as f64 / (n - 1) as f64)
        .collect()
}

impl ScatterSpectrum {
    /// `omega_rads,detuning_rads,re_t,im_t,abs_t2,phase_t,re_r,im_r,abs_r2`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega_rads,detuning_rads,re_t,im_t,abs_t2,phase_t,re_r,im_r,abs_r2\n");
        for ((w, t), r) in self.omega.iter().zip(&self.t).zip(&self.r) {
            let _ = writeln!(
                s,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                w,
                w - self.omega0,
                t.re,
                t.im,
                t.norm_sqr(),
                t.arg(),
                r.re,
                r.im,
                r.norm_sqr()
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceMetrics {
    pub t_res: Complex64,
    pub r_res: Complex64,
    /// Phase of the transmitted amplitude on resonance (rad).
    pub phase_t: f64,
    /// Full width at half depth of the |t|² dip (rad/s).
    pub fwhm_t: Option<f64>,
    /// Full width at half maximum of the |r|² peak (rad/s).
    pub fwhm_r: Option<f64>,
    pub loss_res: f64,
}

impl ResonanceMetrics {
    pub fn fwhm_t_hz(&self) -> Option<f64> {
        self.fwhm_t.map(|w| w / (2.0 * PI))
    }

    pub fn fwhm_r_hz(&self) -> Option<f64> {
        self.fwhm_r.map(|w| w / (2.0 * PI))
    }
}

/// On-resonance amplitudes and half-maximum widths. The half-level
/// crossings are bracketed on the sampled grid and refined by bisection.
pub fn resonance_metrics(spec: &ScatterSpectrum) -> Result<ResonanceMetrics> {
    let rates = &spec.rates;
    let w0 = spec.omega0;
    let t_res = amplitude_t(rates, w0, w0);
    let r_res = amplitude_r(rates, w0, w0);
    let t2 = |w: f64| amplitude_t(rates, w0, w).norm_sqr();
    let r2 = |w: f64| amplitude_r(rates, w0, w).norm_sqr();

    let dip = 1.0 - t_res.norm_sqr();
    let fwhm_t = if dip > 1e-12 {
        let level = 1.0 - 0.5 * dip;
        width(&spec.omega, w0, |w| t2(w) - level, true)
    } else {
        None
    };
    let peak = r_res.norm_sqr();
    let fwhm_r = if peak > 1e-12 {
        width(&spec.omega, w0, |w| r2(w) - 0.5 * peak, false)
    } else {
        None
    };
    // A lossless chiral emitter leaves |t| = 1 and shows only a phase
    // feature; anything else without a measurable width has no resonance
    // on this grid.
    let phase_only = rates.gamma_f > 0.0 && dip <= 1e-12 && peak <= 1e-12;
    if fwhm_t.is_none() && fwhm_r.is_none() && !phase_only {
        return Err(Error::NoResonance);
    }
    Ok(ResonanceMetrics {
        t_res,
        r_res,
        phase_t: t_res.arg(),
        fwhm_t,
        fwhm_r,
        loss_res: 1.0 - t_res.norm_sqr() - r_res.norm_sqr(),
    })
}

/// Distance between the half-level crossings on either side of `w0`.
/// `below_inside` says whether `f < 0` near the centre (a dip).
fn width(grid: &[f64], w0: f64, f: impl Fn(f64) -> f64, below_inside: bool) -> Option<f64> {
    let inside = |w: f64| (f(w) < 0.0) == below_inside;
    if !inside(w0) {
        return None;
    }
    let centre = grid.partition_point(|&w| w < w0);
    // Walk outwards on the sampled grid to bracket each crossing.
    let left = (0..centre).rev().find(|&i| !inside(grid[i]))?;
    let right = (centre..grid.len()).find(|&i| !inside(grid[i]))?;
    let lo_inner = if left + 1 < grid.len() { grid[left + 1].min(w0) } else { w0 };
    let hi_inner = if right > 0 { grid[right - 1].max(w0) } else { w0 };
    let a = bisect(grid[left], lo_inner, &inside);
    let b = bisect(hi_inner, grid[right], &inside);
    Some(b - a)
}

/// Boundary between an outside point and an inside point.
fn bisect(mut out: f64, mut inn: f64, inside: &impl Fn(f64) -> bool) -> f64 {
    if inside(out) {
        std::mem::swap(&mut out, &mut inn);
    }
    for _ in 0..200 {
        let mid = 0.5 * (out + inn);
        if mid == out || mid == inn {
            break;
        }
        if inside(mid) {
            inn = mid;
        } else {
            out = mid;
        }
    }
    0.5 * (out + inn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const W0: f64 = 2.0e15;

    fn rates(gf: f64, gb: f64, g0: f64) -> EmissionRates {
        EmissionRates::from_rates(W0, gf, gb, g0)
    }

    #[test]
    fn polarizability_limits() {
        let d0 = 1e-28;
        let a = bare_polarizability(d0, W0, 1.0).unwrap();
        let stat = 2.0 * d0 * d0 / (EPS0 * HBAR * W0);
        assert!((a.re / stat - 1.0).abs() < 1e-12);
        let d = 1e9;
        let p = bare_polarizability(d0, W0, W0 + d).unwrap();
        let m = bare_polarizability(d0, W0, W0 - d).unwrap();
        assert!((p.re + m.re).abs() < 1e-5 * m.re.abs());
        let q = bare_polarizability(2.0 * d0, W0, 1e15).unwrap();
        assert!((q.re / bare_polarizability(d0, W0, 1e15).unwrap().re - 4.0).abs() < 1e-12);
        assert!(matches!(bare_polarizability(d0, W0, W0), Err(Error::Pole)));
    }

    #[test]
    fn decoupled_dipole_transmits_unchanged() {
        let r = rates(0.0, 1e10, 1e9);
        for w in [W0 - 1e11, W0, W0 + 3e10] {
            assert_eq!(amplitude_t(&r, W0, w), Complex64::new(1.0, 0.0));
        }
        let r = rates(0.0, 0.0, 1e9);
        let s = spectrum(&r, W0, &detuning_grid(W0, 1e11, 101)).unwrap();
        assert!(matches!(resonance_metrics(&s), Err(Error::NoResonance)));
    }

    #[test]
    fn rounding_residue_in_cross_rate_is_ignored() {
        let mut r = rates(0.0, 0.0, 0.0);
        r.gamma_fb = Complex64::new(-3e-52, 0.0);
        assert_eq!(amplitude_r(&r, W0, W0), Complex64::default());
        assert_eq!(amplitude_t(&r, W0, W0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn chiral_point_gives_pi_phase() {
        // β = 0.95 and no backward coupling.
        let r = rates(0.95e10, 0.0, 0.05e10);
        let t = amplitude_t(&r, W0, W0);
        assert!((t.re + 0.9).abs() < 1e-12 && t.im.abs() < 1e-12);
        assert!((t.norm_sqr() - 0.81).abs() < 1e-10);
        assert_eq!(amplitude_r(&r, W0, W0 + 0.3), Complex64::default());
        let s = spectrum(&r, W0, &detuning_grid(W0, 5e11, 2001)).unwrap();
        let m = resonance_metrics(&s).unwrap();
        assert!((m.phase_t.abs() - PI).abs() < 1e-6);
        assert!(m.fwhm_r.is_none());
    }

    #[test]
    fn bidirectional_lossless_reflects_fully() {
        let g = 1e10;
        let r = rates(g, g, 0.0);
        assert!((amplitude_r(&r, W0, W0).norm() - 1.0).abs() < 1e-12);
        let s = spectrum(&r, W0, &detuning_grid(W0, 100.0 * 2.0 * g, 4001)).unwrap();
        let m = resonance_metrics(&s).unwrap();
        let w = m.fwhm_r.unwrap();
        assert!((w / (2.0 * g) - 1.0).abs() < 0.01, "{}", w / (2.0 * g));
        let first = (s.t[0].norm_sqr(), s.r[0].norm_sqr());
        assert!((first.0 - 1.0).abs() < 1e-3 && first.1 < 1e-3);
    }

    #[test]
    fn narrow_grid_is_reported() {
        let r = rates(1e10, 1e10, 0.0);
        let s = spectrum(&r, W0, &detuning_grid(W0, 1e9, 11)).unwrap();
        assert!(matches!(resonance_metrics(&s), Err(Error::NoResonance)));
    }

    #[test]
    fn rejects_non_monotone_grid() {
        assert!(spectrum(&rates(1.0, 1.0, 0.0), W0, &[W0, W0]).is_err());
    }

    #[test]
    fn csv_has_expected_header() {
        let s = spectrum(&rates(1e10, 0.0, 1e9), W0, &detuning_grid(W0, 1e11, 3)).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("omega_rads,detuning_rads,re_t,im_t,abs_t2,phase_t,re_r,im_r,abs_r2\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    proptest! {
        #[test]
        fn lossless_scattering_is_unitary(gf in 1e8f64..1e11, gb in 1e8f64..1e11, phase in 0.0f64..std::f64::consts::TAU, det in -1e12f64..1e12) {
            let mut r = rates(gf, gb, 0.0);
            r.gamma_fb = Complex64::from_polar((gf * gb).sqrt(), phase);
            let t = amplitude_t(&r, W0, W0 + det);
            let rr = amplitude_r(&r, W0, W0 + det);
            prop_assert!((t.norm_sqr() + rr.norm_sqr() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn lossy_scattering_is_subunitary(gf in 1e8f64..1e11, gb in 0.0f64..1e11, g0 in 1e7f64..1e10, det in -1e12f64..1e12) {
            let r = rates(gf, gb, g0);
            let t = amplitude_t(&r, W0, W0 + det);
            let rr = amplitude_r(&r, W0, W0 + det);
            prop_assert!(t.norm_sqr() + rr.norm_sqr() <= 1.0 + 1e-10);
            let tr = amplitude_t(&r, W0, W0);
            let rres = amplitude_r(&r, W0, W0);
            prop_assert!(1.0 - tr.norm_sqr() - rres.norm_sqr() > 0.0);
        }

        #[test]
        fn on_resonance_transmission_identity(gf in 0.0f64..1e11, gb in 0.0f64..1e11, g0 in 1e6f64..1e10) {
            let r = rates(gf, gb, g0);
            let t = amplitude_t(&r, W0, W0);
            let expect = 1.0 - 2.0 * gf / (gf + gb + g0);
            prop_assert!((t - expect).norm() < 1e-12);
        }

        #[test]
        fn emitter_position_only_rotates_reflection(gf in 1e8f64..1e11, gb in 1e8f64..1e11, p1 in 0.0f64..std::f64::consts::TAU, p2 in 0.0f64..std::f64::consts::TAU, det in -1e11f64..1e11) {
            let mut a = rates(gf, gb, 1e9);
            let mut b = a;
            a.gamma_fb = Complex64::from_polar((gf * gb).sqrt(), p1);
            b.gamma_fb = Complex64::from_polar((gf * gb).sqrt(), p2);
            let (ra, rb) = (amplitude_r(&a, W0, W0 + det), amplitude_r(&b, W0, W0 + det));
            prop_assert!((ra.norm() - rb.norm()).abs() <= 1e-12 * ra.norm().max(1e-300));
            prop_assert!((amplitude_t(&a, W0, W0 + det) - amplitude_t(&b, W0, W0 + det)).norm() == 0.0);
        }

        #[test]
        fn detuning_symmetry(gf in 1e8f64..1e11, gb in 0.0f64..1e11, g0 in 1e6f64..1e10, det in 0.0f64..1e11) {
            let r = rates(gf, gb, g0);
            let p = amplitude_t(&r, W0, W0 + det).norm();
            let m = amplitude_t(&r, W0, W0 - det).norm();
            prop_assert!((p - m).abs() < 10.0 * det / W0 + 1e-12);
        }
    }
}
