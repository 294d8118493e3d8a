//! Spin-path states of photons emitted or scattered by a trion spin, with
//! concurrence and directional probabilities.
//!
//! A state has two spin branches. For emission the branches are the
//! circular transitions (↑ with σ₊, ↓ with σ₋). Scattering takes any pair
//! of orthogonal dipole branches, so a linearly polarized basis such as
//! |±⟩ can be modelled by passing the matching rate records and the spin
//! expressed in that basis (see [`SpinState::to_pm_basis`]).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightmatter::EmissionRates;
use crate::scattering::{amplitude_r, amplitude_t};

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinState {
    pub c_up: Complex64,
    pub c_down: Complex64,
}

impl SpinState {
    pub fn new(c_up: Complex64, c_down: Complex64) -> Result<Self> {
        let n = c_up.norm_sqr() + c_down.norm_sqr();
        if (n - 1.0).abs() >= 1e-12 {
            return Err(Error::InvalidSolverInput(format!(
                "spin state must be normalized, got norm^2 = {n}"
            )));
        }
        Ok(Self { c_up, c_down })
    }

    pub fn up() -> Self {
        Self {
            c_up: Complex64::new(1.0, 0.0),
            c_down: C0,
        }
    }

    pub fn down() -> Self {
        Self {
            c_up: C0,
            c_down: Complex64::new(1.0, 0.0),
        }
    }

    /// `(|↑⟩ + e^{iφ}|↓⟩)/√2`
    pub fn equator(phi: f64) -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            c_up: Complex64::new(r, 0.0),
            c_down: Complex64::from_polar(r, phi),
        }
    }

    /// Coefficients on `|±⟩ = (|↑⟩ ± |↓⟩)/√2`, returned as (c₊, c₋) in the
    /// `c_up`, `c_down` slots.
    pub fn to_pm_basis(&self) -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            c_up: (self.c_up + self.c_down) * r,
            c_down: (self.c_up - self.c_down) * r,
        }
    }
}

/// Joint path-spin amplitudes. `_up`/`_down` name the two spin branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinPathState {
    pub a_f_up: Complex64,
    pub a_b_up: Complex64,
    pub a_f_down: Complex64,
    pub a_b_down: Complex64,
    pub p_loss: f64,
}

impl SpinPathState {
    pub fn amplitudes(&self) -> [Complex64; 4] {
        [self.a_f_up, self.a_b_up, self.a_f_down, self.a_b_down]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes().iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn p_forward(&self) -> f64 {
        self.a_f_up.norm_sqr() + self.a_f_down.norm_sqr()
    }

    pub fn p_backward(&self) -> f64 {
        self.a_b_up.norm_sqr() + self.a_b_down.norm_sqr()
    }

    /// `|⟨self|other⟩|²` of the renormalized surviving parts.
    pub fn fidelity(&self, other: &SpinPathState) -> f64 {
        let (a, b) = (self.amplitudes(), other.amplitudes());
        let ov: Complex64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        let n = self.norm_sqr() * other.norm_sqr();
        if n == 0.0 {
            0.0
        } else {
            ov.norm_sqr() / n
        }
    }
}

fn check_positions(up: &EmissionRates, down: &EmissionRates) -> Result<()> {
    let tol = 1e-12 * (up.x0.abs() + up.y0.abs()).max(1e-9);
    if (up.x0 - down.x0).abs() > tol || (up.y0 - down.y0).abs() > tol {
        return Err(Error::PositionMismatch);
    }
    Ok(())
}

fn unit_phase(z: Complex64) -> Complex64 {
    if z.norm() > 0.0 {
        z / z.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// One spontaneously emitted photon, branch by branch.
pub fn emitted_state(up: &EmissionRates, down: &EmissionRates, spin: &SpinState) -> Result<SpinPathState> {
    check_positions(up, down)?;
    let branch = |r: &EmissionRates, c: Complex64| -> (Complex64, Complex64, f64) {
        let tot = r.gamma_total();
        if tot <= 0.0 {
            // No decay channel at all: the excitation is counted as lost.
            return (C0, C0, c.norm_sqr());
        }
        let af = c * (r.gamma_f / tot).sqrt() * unit_phase(r.overlap_f);
        let ab = c * (r.gamma_b / tot).sqrt() * unit_phase(r.overlap_b);
        (af, ab, c.norm_sqr() * r.gamma_0 / tot)
    };
    let (fu, bu, lu) = branch(up, spin.c_up);
    let (fd, bd, ld) = branch(down, spin.c_down);
    Ok(SpinPathState {
        a_f_up: fu,
        a_b_up: bu,
        a_f_down: fd,
        a_b_down: bd,
        p_loss: lu + ld,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// A single photon of frequency `omega` scattered by the spin.
pub fn scattered_state(
    up: &EmissionRates,
    down: &EmissionRates,
    spin: &SpinState,
    omega: f64,
    input: Direction,
) -> Result<SpinPathState> {
    check_positions(up, down)?;
    let branch = |r: &EmissionRates, c: Complex64| -> (Complex64, Complex64) {
        match input {
            Direction::Forward => {
                (c * amplitude_t(r, r.omega0, omega), c * amplitude_r(r, r.omega0, omega))
            }
            Direction::Backward => {
                // A backward photon sees the time-reversed mode.
                let m = r.mirrored();
                (c * amplitude_r(&m, m.omega0, omega), c * amplitude_t(&m, m.omega0, omega))
            }
        }
    };
    let (fu, bu) = branch(up, spin.c_up);
    let (fd, bd) = branch(down, spin.c_down);
    let mut s = SpinPathState {
        a_f_up: fu,
        a_b_up: bu,
        a_f_down: fd,
        a_b_down: bd,
        p_loss: 0.0,
    };
    s.p_loss = (1.0 - s.norm_sqr()).max(0.0);
    Ok(s)
}

/// Pure-state concurrence of the path and spin qubits after discarding loss.
pub fn concurrence(state: &SpinPathState) -> Result<f64> {
    let n = state.norm_sqr();
    if n == 0.0 {
        return Err(Error::EmptyState);
    }
    let d = state.a_f_up * state.a_b_down - state.a_b_up * state.a_f_down;
    Ok((2.0 * d.norm() / n).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coherence {
    Coherent,
    Incoherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Process {
    Emission,
    Scattering { omega: f64, input: Direction },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathProbabilities {
    pub p_forward: f64,
    pub p_backward: f64,
    pub p_loss: f64,
}

fn probabilities(s: &SpinPathState) -> PathProbabilities {
    PathProbabilities {
        p_forward: s.p_forward(),
        p_backward: s.p_backward(),
        p_loss: s.p_loss,
    }
}

/// Forward, backward and loss probabilities. Incoherent input is the
/// classical mixture of the two spin branches weighted by `|c_s|²`.
pub fn path_probabilities(
    up: &EmissionRates,
    down: &EmissionRates,
    spin: &SpinState,
    process: Process,
    coherence: Coherence,
) -> Result<PathProbabilities> {
    let run = |s: &SpinState| match process {
        Process::Emission => emitted_state(up, down, s),
        Process::Scattering { omega, input } => scattered_state(up, down, s, omega, input),
    };
    match coherence {
        Coherence::Coherent => Ok(probabilities(&run(spin)?)),
        Coherence::Incoherent => {
            let (wu, wd) = (spin.c_up.norm_sqr(), spin.c_down.norm_sqr());
            let pu = probabilities(&run(&SpinState::up())?);
            let pd = probabilities(&run(&SpinState::down())?);
            Ok(PathProbabilities {
                p_forward: wu * pu.p_forward + wd * pd.p_forward,
                p_backward: wu * pu.p_backward + wd * pd.p_backward,
                p_loss: wu * pu.p_loss + wd * pd.p_loss,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const W0: f64 = 2.0e15;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Rates at a σ₊ C-point: ↑ couples forward only, ↓ backward only.
    fn c_point(g: f64, g0: f64) -> (EmissionRates, EmissionRates) {
        let up = EmissionRates::from_rates(W0, g, 0.0, g0);
        (up, up.mirrored())
    }

    #[test]
    fn basis_change_round_trip() {
        let s = SpinState::new(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let pm = s.to_pm_basis();
        let back = pm.to_pm_basis();
        assert!((back.c_up - s.c_up).norm() < 1e-15 && (back.c_down - s.c_down).norm() < 1e-15);
        assert!(SpinState::new(c(1.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn c_point_emission_is_maximally_entangled() {
        let (u, d) = c_point(1e10, 0.0);
        let s = emitted_state(&u, &d, &SpinState::equator(0.0)).unwrap();
        assert!((s.a_f_up.norm_sqr() - 0.5).abs() < 1e-15);
        assert!((s.a_b_down.norm_sqr() - 0.5).abs() < 1e-15);
        assert_eq!((s.a_b_up, s.a_f_down), (C0, C0));
        assert!((concurrence(&s).unwrap() - 1.0).abs() < 1e-12);
        let only_up = emitted_state(&u, &d, &SpinState::up()).unwrap();
        assert!((only_up.a_f_up.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l_line_emission_is_bidirectional() {
        let u = EmissionRates::from_rates(W0, 1e10, 1e10, 1e9);
        let s = emitted_state(&u, &u, &SpinState::up()).unwrap();
        assert!((s.a_f_up.norm() - s.a_b_up.norm()).abs() < 1e-15);
        assert!(concurrence(&s).unwrap() < 1e-12);
    }

    #[test]
    fn mismatched_positions_rejected() {
        let u = EmissionRates::from_rates(W0, 1e10, 0.0, 0.0);
        let mut d = u;
        d.x0 = 1e-8;
        assert!(matches!(emitted_state(&u, &d, &SpinState::up()), Err(Error::PositionMismatch)));
    }

    #[test]
    fn c_point_scattering_never_reflects() {
        let (u, d) = c_point(1e10, 0.0);
        let s = scattered_state(&u, &d, &SpinState::equator(0.0), W0, Direction::Forward).unwrap();
        assert_eq!((s.a_b_up, s.a_b_down), (C0, C0));
        assert!((s.a_f_up + s.a_f_down).norm() < 1e-12);
        assert!((s.p_forward() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_detuned_scattering_is_identity() {
        let (u, d) = c_point(1e10, 1e9);
        let spin = SpinState::new(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let s = scattered_state(&u, &d, &spin, W0 + 1e14, Direction::Forward).unwrap();
        assert!((s.a_f_up - spin.c_up).norm() < 1e-3);
        assert!((s.a_f_down - spin.c_down).norm() < 1e-3);
        assert!(s.a_b_up.norm() < 1e-3 && s.a_b_down.norm() < 1e-3);
    }

    #[test]
    fn backward_input_mirrors_forward() {
        let (u, d) = c_point(1e10, 0.0);
        let s = scattered_state(&u, &d, &SpinState::down(), W0, Direction::Backward).unwrap();
        // ↓ couples to the backward mode, so a backward photon picks up −1.
        assert!((s.a_b_down + 1.0).norm() < 1e-12);
    }

    #[test]
    fn concurrence_examples() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let prod = SpinPathState {
            a_f_up: c(r, 0.0),
            a_b_up: C0,
            a_f_down: c(r, 0.0),
            a_b_down: C0,
            p_loss: 0.0,
        };
        assert!(concurrence(&prod).unwrap() < 1e-15);
        let s = SpinPathState {
            a_f_up: c(0.8f64.sqrt(), 0.0),
            a_b_up: C0,
            a_f_down: C0,
            a_b_down: c(0.2f64.sqrt(), 0.0),
            p_loss: 0.0,
        };
        assert!((concurrence(&s).unwrap() - 0.8).abs() < 1e-12);
        let empty = SpinPathState {
            a_f_up: C0,
            a_b_up: C0,
            a_f_down: C0,
            a_b_down: C0,
            p_loss: 1.0,
        };
        assert!(matches!(concurrence(&empty), Err(Error::EmptyState)));
    }

    #[test]
    fn emission_versus_scattering_probabilities() {
        let (u, d) = c_point(1e10, 0.0);
        let spin = SpinState::equator(0.3);
        let em = path_probabilities(&u, &d, &spin, Process::Emission, Coherence::Incoherent).unwrap();
        assert!((em.p_forward - 0.5).abs() < 1e-12 && (em.p_backward - 0.5).abs() < 1e-12);
        let sc = Process::Scattering {
            omega: W0,
            input: Direction::Forward,
        };
        for coh in [Coherence::Coherent, Coherence::Incoherent] {
            let p = path_probabilities(&u, &d, &spin, sc, coh).unwrap();
            assert!((p.p_forward - 1.0).abs() < 1e-12 && p.p_backward.abs() < 1e-12);
        }
        let dn = scattered_state(&u, &d, &SpinState::down(), W0, Direction::Forward).unwrap();
        assert!((dn.a_f_down - 1.0).norm() < 1e-15);
    }

    fn spin_from(v: [f64; 4]) -> Option<SpinState> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n > 1e-3).then(|| SpinState {
            c_up: c(v[0] / n, v[1] / n),
            c_down: c(v[2] / n, v[3] / n),
        })
    }

    proptest! {
        #[test]
        fn norm_is_conserved(v in prop::array::uniform4(-1.0f64..1.0), gf in 0.0f64..1e10, gb in 0.0f64..1e10, g0 in 1e6f64..1e10, det in -1e11f64..1e11) {
            let Some(spin) = spin_from(v) else { return Ok(()) };
            let u = EmissionRates::from_rates(W0, gf, gb, g0);
            let d = EmissionRates::from_rates(W0, gb, gf, g0);
            let e = emitted_state(&u, &d, &spin).unwrap();
            prop_assert!((e.norm_sqr() + e.p_loss - 1.0).abs() < 1e-10);
            for dir in [Direction::Forward, Direction::Backward] {
                let s = scattered_state(&u, &d, &spin, W0 + det, dir).unwrap();
                prop_assert!((s.norm_sqr() + s.p_loss - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn lossless_scattering_preserves_inner_products(v in prop::array::uniform4(-1.0f64..1.0), w in prop::array::uniform4(-1.0f64..1.0), gf in 1e8f64..1e10, gb in 1e8f64..1e10, ph in 0.0f64..std::f64::consts::TAU, det in -1e11f64..1e11) {
            let (Some(s1), Some(s2)) = (spin_from(v), spin_from(w)) else { return Ok(()) };
            let mut u = EmissionRates::from_rates(W0, gf, gb, 0.0);
            u.gamma_fb = Complex64::from_polar((gf * gb).sqrt(), ph);
            let d = EmissionRates::from_rates(W0, gb, gf, 0.0);
            let a = scattered_state(&u, &d, &s1, W0 + det, Direction::Forward).unwrap();
            let b = scattered_state(&u, &d, &s2, W0 + det, Direction::Forward).unwrap();
            let out: Complex64 = a.amplitudes().iter().zip(b.amplitudes().iter()).map(|(x, y)| x.conj() * y).sum();
            let inp = s1.c_up.conj() * s2.c_up + s1.c_down.conj() * s2.c_down;
            prop_assert!((out - inp).norm() < 1e-10);
        }

        #[test]
        fn concurrence_ignores_local_phases(v in prop::array::uniform4(-1.0f64..1.0), p in prop::array::uniform4(0.0f64..std::f64::consts::TAU)) {
            let s = SpinPathState { a_f_up: c(v[0], 0.3), a_b_up: c(v[1], -0.1), a_f_down: c(v[2], 0.5), a_b_down: c(v[3], 0.2), p_loss: 0.0 };
            let base = concurrence(&s).unwrap();
            let g = Complex64::from_polar(1.0, p[0]);
            let (f, b) = (Complex64::from_polar(1.0, p[1]), Complex64::from_polar(1.0, p[2]));
            let (up, dn) = (Complex64::from_polar(1.0, p[3]), Complex64::new(1.0, 0.0));
            let t = SpinPathState {
                a_f_up: s.a_f_up * g * f * up,
                a_b_up: s.a_b_up * g * b * up,
                a_f_down: s.a_f_down * g * f * dn,
                a_b_down: s.a_b_down * g * b * dn,
                p_loss: 0.0,
            };
            prop_assert!((concurrence(&t).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn basis_states_ignore_coherence(gf in 0.0f64..1e10, gb in 0.0f64..1e10, g0 in 1e6f64..1e10, det in -1e11f64..1e11) {
            let u = EmissionRates::from_rates(W0, gf, gb, g0);
            let d = EmissionRates::from_rates(W0, gb, gf, g0);
            for spin in [SpinState::up(), SpinState::down()] {
                for proc_ in [Process::Emission, Process::Scattering { omega: W0 + det, input: Direction::Forward }] {
                    let a = path_probabilities(&u, &d, &spin, proc_, Coherence::Coherent).unwrap();
                    let b = path_probabilities(&u, &d, &spin, proc_, Coherence::Incoherent).unwrap();
                    prop_assert!((a.p_forward - b.p_forward).abs() < 1e-12);
                    prop_assert!((a.p_backward - b.p_backward).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn c_point_emission_always_entangles(v in prop::array::uniform4(-1.0f64..1.0)) {
            let Some(spin) = spin_from(v) else { return Ok(()) };
            if spin.c_up.norm() < 1e-3 || spin.c_down.norm() < 1e-3 { return Ok(()) }
            let (u, d) = c_point(1e10, 0.0);
            let s = emitted_state(&u, &d, &spin).unwrap();
            let expect = 2.0 * spin.c_up.norm() * spin.c_down.norm();
            prop_assert!((concurrence(&s).unwrap() - expect).abs() < 1e-10);
        }
    }
}
