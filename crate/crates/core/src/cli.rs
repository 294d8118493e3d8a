//! Command-line driver: TOML run configuration, `--set` overrides and the
//! seven pipeline subcommands.
//!
//! Every stage writes into the output directory. Stages after `mode` read
//! the guided mode back from `mode.pcwf`, so they can be rerun cheaply.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::fields::{export_pcwf, import_pcwf, FieldGrid, FieldMeta};
use crate::geometry::{build_w1_supercell, DielectricMap, LatticeSpec};
use crate::lightmatter::{
    emission_rates, rate_identities_report, sigma_minus, sigma_plus, DipoleSpec, EmissionRates,
    Gamma0Policy, Vec2,
};
use crate::modesolver::{identify_guided_band, BandStructure, FourierRule, Parity, PlaneWaveSolver};
use crate::pipeline::{self, aligned_linear, GuidedMode, VG_STEP};
use crate::polarization::{c_points_csv, find_c_points, find_l_lines, l_lines_csv, StokesMap};
use crate::quantum::{
    concurrence, emitted_state, path_probabilities, scattered_state, Coherence, Direction,
    Process, SpinPathState, SpinState,
};
use crate::scattering::{detuning_grid, resonance_metrics, spectrum};

#[derive(Debug, Parser)]
#[command(name = "chiralpcw", version, about = "Chiral emitter coupling in W1 photonic-crystal waveguides")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Stage,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set lattice.n_eff=3.0`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Stage {
    /// Band frequencies and group velocities of the even sector.
    Bands,
    /// Guided mode at the operating point, written as PCWF.
    Mode,
    /// Per-node Stokes parameters and ellipse of the stored mode.
    Polmap,
    /// C-points and L-lines of the stored mode.
    Singularities,
    /// Directional emission rates of the configured dipole.
    Emission,
    /// Transmission and reflection spectrum of the configured dipole.
    Spectrum,
    /// Spin-path states for emission and scattering.
    Qstate,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Bands => "bands",
            Stage::Mode => "mode",
            Stage::Polmap => "polmap",
            Stage::Singularities => "singularities",
            Stage::Emission => "emission",
            Stage::Spectrum => "spectrum",
            Stage::Qstate => "qstate",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: Option<LatticeConfig>,
    pub solver: Option<SolverConfig>,
    pub dipole: Option<DipoleConfig>,
    pub scattering: Option<ScatteringConfig>,
    pub quantum: Option<QuantumConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Lattice constant (m).
    pub a: f64,
    pub r_over_a: f64,
    pub n_eff: f64,
    #[serde(default = "one")]
    pub eps_hole: f64,
    pub rows_per_side: usize,
    pub resolution: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub cutoff: usize,
    #[serde(default)]
    pub rule: FourierRule,
    /// Even-sector bands written by `bands`.
    pub n_bands: usize,
    /// `|k a / 2 pi|` values for `bands`.
    pub k_list: Vec<f64>,
    /// Operating point by wavenumber...
    pub k_mode: Option<f64>,
    /// ...or by slowdown factor `c / vg`, searched in `k_search`.
    pub slowdown: Option<f64>,
    #[serde(default = "default_k_search")]
    pub k_search: [f64; 2],
    /// Normalization height in units of a.
    pub h_eff: f64,
}

fn default_k_search() -> [f64; 2] {
    [0.3, 0.49]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    /// Strongest C-point inside the slab.
    CPoint,
    /// Strongest `E_y` on the waveguide axis.
    LLine,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    SigmaPlus,
    SigmaMinus,
    X,
    Y,
    /// Real vector along the local field.
    Aligned,
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleConfig {
    pub site: Site,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub orientation: Orientation,
    /// `[re_x, im_x, re_y, im_y]`, normalized on input.
    pub mu: Option<[f64; 4]>,
    pub d0_debye: f64,
    /// Transition frequency (rad/s); the mode frequency when absent.
    pub omega0_rads: Option<f64>,
    pub gamma0: Gamma0Policy,
    /// Also write rates over every `map_stride`-th grid node.
    pub map_stride: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringConfig {
    pub points: usize,
    /// Half width of the frequency window (rad/s)...
    pub half_span_rads: Option<f64>,
    /// ...or in units of the total linewidth.
    pub half_span_linewidths: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumConfig {
    /// `[re_up, im_up, re_down, im_down]`, normalized on input.
    pub spin: [f64; 4],
    pub detuning_rads: f64,
    pub input: Direction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Mode read by downstream stages; `<dir>/mode.pcwf` when absent.
    pub mode_file: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require<'a, T>(block: &'a Option<T>, name: &str, stage: Stage) -> Result<&'a T> {
    block
        .as_ref()
        .ok_or_else(|| config_err(format!("`{}` needs a [{name}] block", stage.name())))
}

/// Parses the configuration text and applies `key=value` overrides before
/// deserializing, so overrides are checked exactly like file entries.
pub fn load_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut root: toml::Table = text.parse().map_err(|e| config_err(format!("{e}")))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    RunConfig::deserialize(toml::Value::Table(root)).map_err(|e| config_err(format!("{e}")))
}

fn apply_override(root: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{item}` is not KEY=VALUE")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in path {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl LatticeConfig {
    pub fn spec(&self) -> LatticeSpec {
        LatticeSpec {
            a: self.a,
            hole_radius: self.r_over_a * self.a,
            eps_slab: self.n_eff * self.n_eff,
            eps_hole: self.eps_hole,
            rows_per_side: self.rows_per_side,
            resolution: self.resolution,
        }
    }
}

/// Result of one stage: files written and a one-line summary.
#[derive(Debug, Clone)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    stage: Stage,
    files: Vec<PathBuf>,
}

impl Ctx {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }

    /// CSV with a leading `#` line carrying the only run-dependent content.
    fn write_csv(&mut self, name: &str, body: &str) -> Result<()> {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut text = format!(
            "# chiralpcw {} {} unix_time={secs}\n",
            env!("CARGO_PKG_VERSION"),
            self.stage.name()
        );
        text.push_str(body);
        self.write(name, &text)
    }

    fn write_json(&mut self, name: &str, mut value: serde_json::Value) -> Result<()> {
        value["config"] = serde_json::to_value(&self.cfg)?;
        let text = serde_json::to_string_pretty(&value)? + "\n";
        self.write(name, &text)
    }

    fn mode_path(&self) -> PathBuf {
        self.cfg
            .output
            .mode_file
            .clone()
            .unwrap_or_else(|| self.out.join("mode.pcwf"))
    }

    fn load_mode(&self) -> Result<FieldGrid> {
        let path = self.mode_path();
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        import_pcwf(&path)
    }
}

/// Runs one stage with an already loaded configuration.
pub fn run(stage: Stage, cfg: RunConfig, out: Option<&Path>) -> Result<Report> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out)?;
    let mut ctx = Ctx {
        cfg,
        out,
        stage,
        files: Vec::new(),
    };
    let summary = match stage {
        Stage::Bands => run_bands(&mut ctx)?,
        Stage::Mode => run_mode(&mut ctx)?,
        Stage::Polmap => run_polmap(&mut ctx)?,
        Stage::Singularities => run_singularities(&mut ctx)?,
        Stage::Emission => run_emission(&mut ctx)?,
        Stage::Spectrum => run_spectrum(&mut ctx)?,
        Stage::Qstate => run_qstate(&mut ctx)?,
    };
    Ok(Report {
        files: ctx.files,
        summary,
    })
}

/// Loads the configuration named on the command line and runs the stage.
pub fn run_cli(cli: &Cli) -> Result<Report> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config_err("--config <PATH> is required"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let cfg = load_config(&text, &cli.set)?;
    run(cli.command, cfg, cli.out.as_deref())
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        2
    } else {
        3
    }
}

fn build_map(ctx: &Ctx) -> Result<(DielectricMap, SolverConfig)> {
    let lattice = require(&ctx.cfg.lattice, "lattice", ctx.stage)?;
    let solver = require(&ctx.cfg.solver, "solver", ctx.stage)?;
    Ok((build_w1_supercell(&lattice.spec())?, solver.clone()))
}

fn run_bands(ctx: &mut Ctx) -> Result<String> {
    let (map, sc) = build_map(ctx)?;
    if sc.k_list.is_empty() || sc.n_bands == 0 {
        return Err(config_err("solver.k_list and solver.n_bands must be non-empty"));
    }
    let solver = PlaneWaveSolver::with_rule(&map, sc.cutoff, sc.rule)?;
    let mut bands = BandStructure {
        k_frac: Vec::new(),
        omega: Vec::new(),
        vg: Vec::new(),
        cutoff: sc.cutoff,
        parity: Parity::Even,
    };
    let mut guided = Vec::new();
    for &k in &sc.k_list {
        let modes = solver.solve(k, sc.n_bands, Parity::Even)?;
        let vg = (0..modes.len())
            .map(|b| {
                solver
                    .group_velocity(b, k, VG_STEP, Parity::Even)
                    .ok()
                    .map(|v| v.finite_difference)
            })
            .collect();
        let gap = solver.bulk_gap(k)?;
        guided.push(json!({
            "k_frac": k,
            "gap": gap,
            "band_index": identify_guided_band(&modes, gap).ok(),
        }));
        bands.k_frac.push(k);
        bands.omega.push(modes.iter().map(|m| m.omega).collect());
        bands.vg.push(vg);
    }
    ctx.write_csv("bands.csv", &bands.to_csv())?;
    ctx.write_json(
        "bands.json",
        json!({ "parity": "even", "cutoff": sc.cutoff, "guided": guided }),
    )?;
    Ok(format!(
        "bands: {} k-points x {} bands (cutoff {}, basis {})",
        bands.k_frac.len(),
        sc.n_bands,
        sc.cutoff,
        solver.basis().len()
    ))
}

fn run_mode(ctx: &mut Ctx) -> Result<String> {
    let (map, sc) = build_map(ctx)?;
    let solver = PlaneWaveSolver::with_rule(&map, sc.cutoff, sc.rule)?;
    let k = match (sc.k_mode, sc.slowdown) {
        (Some(k), None) => k,
        (None, Some(s)) => pipeline::slow_light_k(&solver, s, sc.k_search[0], sc.k_search[1])?,
        _ => return Err(config_err("set exactly one of solver.k_mode and solver.slowdown")),
    };
    let g: GuidedMode = pipeline::guided_mode(&solver, k, sc.h_eff)?;
    let op = g.operating_point();
    export_pcwf(&g.grid, ctx.out.join("mode.pcwf"))?;
    ctx.files.push(ctx.out.join("mode.pcwf"));
    let eps_grid = FieldGrid {
        ex: vec![Complex64::default(); g.grid.ex.len()],
        ey: vec![Complex64::default(); g.grid.ey.len()],
        meta: FieldMeta { ..g.grid.meta },
        ..g.grid.clone()
    };
    export_pcwf(&eps_grid, ctx.out.join("map.pcwf"))?;
    ctx.files.push(ctx.out.join("map.pcwf"));
    ctx.write_json(
        "mode.json",
        json!({
            "operating_point": op,
            "band_index": g.mode.band_index,
            "velocity": g.velocity,
            "edge_ratio": g.mode.edge_ratio,
            "basis_size": solver.basis().len(),
        }),
    )?;
    Ok(format!(
        "mode: k_frac={:.5} omega={:.5e} rad/s (a/lambda={:.5}) vg=c/{:.1} gap=[{:.4}, {:.4}]",
        op.k_frac, op.omega, op.freq, op.slowdown, op.gap_lower, op.gap_upper
    ))
}

fn run_polmap(ctx: &mut Ctx) -> Result<String> {
    let grid = ctx.load_mode()?;
    let map = StokesMap::new(&grid);
    ctx.write_csv("polmap.csv", &map.to_csv(&grid))?;
    Ok(format!("polmap: {}x{} nodes, max s0={:.4e}", grid.nx, grid.ny, map.max_s0()))
}

fn run_singularities(ctx: &mut Ctx) -> Result<String> {
    let grid = ctx.load_mode()?;
    let c = find_c_points(&grid);
    let l = find_l_lines(&grid);
    ctx.write_csv("c_points.csv", &c_points_csv(&c.points))?;
    ctx.write_csv("l_lines.csv", &l_lines_csv(&l.lines))?;
    let plus = c.points.iter().filter(|p| p.handedness > 0).count();
    ctx.write_json(
        "singularities.json",
        json!({
            "c_points": c.points.len(),
            "positive": plus,
            "negative": c.points.len() - plus,
            "degenerate_cells": c.degenerate_cells,
            "l_lines": l.lines.len(),
            "globally_linear": l.globally_linear,
        }),
    )?;
    Ok(format!(
        "singularities: {} C-points ({plus} positive), {} L-lines",
        c.points.len(),
        l.lines.len()
    ))
}

/// Dipole position and the field there.
fn site(grid: &FieldGrid, dc: &DipoleConfig) -> Result<(f64, f64)> {
    match dc.site {
        Site::CPoint => pipeline::chiral_site(grid).map(|p| (p.x, p.y)),
        Site::LLine => pipeline::linear_site(grid).map(|(x, y, _)| (x, y)),
        Site::Explicit => match (dc.x, dc.y) {
            (Some(x), Some(y)) => Ok((x, y)),
            _ => Err(config_err("dipole.site = \"explicit\" needs dipole.x and dipole.y")),
        },
    }
}

fn orientation(grid: &FieldGrid, dc: &DipoleConfig, x: f64, y: f64) -> Result<Vec2> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    Ok(match dc.orientation {
        Orientation::SigmaPlus => sigma_plus(),
        Orientation::SigmaMinus => sigma_minus(),
        Orientation::X => [c(1.0, 0.0), c(0.0, 0.0)],
        Orientation::Y => [c(0.0, 0.0), c(1.0, 0.0)],
        Orientation::Aligned => {
            let (ex, ey) = crate::fields::interpolate(grid, x, y)?;
            aligned_linear([ex, ey]).ok_or(Error::ZeroField)?
        }
        Orientation::Explicit => {
            let m = dc
                .mu
                .ok_or_else(|| config_err("dipole.orientation = \"explicit\" needs dipole.mu"))?;
            let n = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n > 0.0) {
                return Err(config_err("dipole.mu must be non-zero"));
            }
            [c(m[0] / n, m[1] / n), c(m[2] / n, m[3] / n)]
        }
    })
}

fn dipole_at(grid: &FieldGrid, dc: &DipoleConfig, x: f64, y: f64, mu: Vec2) -> Result<DipoleSpec> {
    let omega = grid.meta.complete()?.omega;
    DipoleSpec::from_debye(x, y, mu, dc.d0_debye, dc.omega0_rads.unwrap_or(omega))
}

fn configured_rates(ctx: &Ctx, grid: &FieldGrid) -> Result<(EmissionRates, Vec2)> {
    let dc = require(&ctx.cfg.dipole, "dipole", ctx.stage)?;
    let (x, y) = site(grid, dc)?;
    let mu = orientation(grid, dc, x, y)?;
    let rates = emission_rates(grid, &dipole_at(grid, dc, x, y, mu)?, dc.gamma0)?;
    Ok((rates, mu))
}

fn mu_json(mu: &Vec2) -> serde_json::Value {
    json!([mu[0].re, mu[0].im, mu[1].re, mu[1].im])
}

fn run_emission(ctx: &mut Ctx) -> Result<String> {
    let grid = ctx.load_mode()?;
    let (r, mu) = configured_rates(ctx, &grid)?;
    let report = rate_identities_report(&r);
    if r.zero_field {
        log::warn!("the mode field vanishes at the dipole; all waveguide rates are zero");
    }
    ctx.write_json(
        "emission.json",
        json!({
            "rates": r,
            "mu": mu_json(&mu),
            "gamma_f_over_2pi_hz": r.gamma_f_hz(),
            "gamma_b_over_2pi_hz": r.gamma_b_hz(),
            "gamma_total": r.gamma_total(),
            "identities": report,
        }),
    )?;
    let dc = require(&ctx.cfg.dipole, "dipole", ctx.stage)?.clone();
    if let Some(stride) = dc.map_stride {
        if stride == 0 {
            return Err(config_err("dipole.map_stride must be >= 1"));
        }
        let mut csv = String::from("x,y,gamma_f,gamma_b,beta,purcell\n");
        for ix in (0..grid.nx).step_by(stride) {
            for iy in (0..grid.ny).step_by(stride) {
                let (x, y) = (grid.x(ix), grid.y(iy));
                let m = emission_rates(&grid, &dipole_at(&grid, &dc, x, y, mu)?, dc.gamma0)?;
                let _ = writeln!(
                    csv,
                    "{x:.9e},{y:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                    m.gamma_f, m.gamma_b, m.beta, m.purcell
                );
            }
        }
        ctx.write_csv("emission_map.csv", &csv)?;
    }
    Ok(format!(
        "emission: gamma_f={:.4e} gamma_b={:.4e} rad/s beta={:.4} purcell={:.3} identities {}",
        r.gamma_f,
        r.gamma_b,
        r.beta,
        r.purcell,
        if report.all_pass() { "ok" } else { "FAILED" }
    ))
}

fn run_spectrum(ctx: &mut Ctx) -> Result<String> {
    let grid = ctx.load_mode()?;
    let (r, mu) = configured_rates(ctx, &grid)?;
    let sc = require(&ctx.cfg.scattering, "scattering", ctx.stage)?;
    let half = match (sc.half_span_rads, sc.half_span_linewidths) {
        (Some(h), None) => h,
        (None, Some(n)) if r.gamma_total() > 0.0 => n * r.gamma_total(),
        (None, Some(_)) => {
            return Err(config_err(
                "scattering.half_span_linewidths needs a non-zero linewidth; use half_span_rads",
            ))
        }
        _ => {
            return Err(config_err(
                "set exactly one of scattering.half_span_rads and scattering.half_span_linewidths",
            ))
        }
    };
    if !(half > 0.0) || sc.points < 3 {
        return Err(config_err("scattering needs half span > 0 and points >= 3"));
    }
    let omega0 = r.omega0;
    let s = spectrum(&r, omega0, &detuning_grid(omega0, half, sc.points))?;
    ctx.write_csv("spectrum.csv", &s.to_csv())?;
    let metrics = match resonance_metrics(&s) {
        Ok(m) => Some(m),
        Err(Error::NoResonance) => {
            log::warn!("no resonance: the dipole is decoupled from the guided mode and |t|^2 = 1");
            None
        }
        Err(e) => return Err(e),
    };
    ctx.write_json(
        "spectrum.json",
        json!({
            "metrics": metrics,
            "fwhm_t_over_2pi_hz": metrics.and_then(|m| m.fwhm_t_hz()),
            "fwhm_r_over_2pi_hz": metrics.and_then(|m| m.fwhm_r_hz()),
            "rates": r,
            "mu": mu_json(&mu),
            "note": "rates and widths are angular frequencies (rad/s); *_over_2pi_hz divide by 2 pi",
        }),
    )?;
    Ok(match metrics {
        Some(m) => format!(
            "spectrum: |t_res|^2={:.4} |r_res|^2={:.4} phase_t={:.4} fwhm_t={:.4e} rad/s",
            m.t_res.norm_sqr(),
            m.r_res.norm_sqr(),
            m.phase_t,
            m.fwhm_t.unwrap_or(f64::NAN)
        ),
        None => "spectrum: flat, |t|^2 = 1 (decoupled dipole)".to_string(),
    })
}

fn state_json(s: &SpinPathState) -> serde_json::Value {
    let c = |z: Complex64| json!([z.re, z.im]);
    json!({
        "a_f_up": c(s.a_f_up),
        "a_b_up": c(s.a_b_up),
        "a_f_down": c(s.a_f_down),
        "a_b_down": c(s.a_b_down),
        "p_loss": s.p_loss,
        "concurrence": concurrence(s).ok(),
    })
}

fn run_qstate(ctx: &mut Ctx) -> Result<String> {
    let grid = ctx.load_mode()?;
    let dc = require(&ctx.cfg.dipole, "dipole", ctx.stage)?.clone();
    let qc = require(&ctx.cfg.quantum, "quantum", ctx.stage)?.clone();
    let (x, y) = site(&grid, &dc)?;
    let up = emission_rates(&grid, &dipole_at(&grid, &dc, x, y, sigma_plus())?, dc.gamma0)?;
    let down = emission_rates(&grid, &dipole_at(&grid, &dc, x, y, sigma_minus())?, dc.gamma0)?;
    let n = qc.spin.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(config_err("quantum.spin must be non-zero"));
    }
    let spin = SpinState::new(
        Complex64::new(qc.spin[0] / n, qc.spin[1] / n),
        Complex64::new(qc.spin[2] / n, qc.spin[3] / n),
    )?;
    let omega = up.omega0 + qc.detuning_rads;
    let scat = Process::Scattering {
        omega,
        input: qc.input,
    };
    let probs = |p: Process| -> Result<serde_json::Value> {
        Ok(json!({
            "coherent": path_probabilities(&up, &down, &spin, p, Coherence::Coherent)?,
            "incoherent": path_probabilities(&up, &down, &spin, p, Coherence::Incoherent)?,
        }))
    };
    let emitted = emitted_state(&up, &down, &spin)?;
    let scattered = scattered_state(&up, &down, &spin, omega, qc.input)?;
    ctx.write_json(
        "qstate.json",
        json!({
            "site": [x, y],
            "spin": [qc.spin[0] / n, qc.spin[1] / n, qc.spin[2] / n, qc.spin[3] / n],
            "emission": { "state": state_json(&emitted), "probabilities": probs(Process::Emission)? },
            "scattering": {
                "omega_rads": omega,
                "input": qc.input,
                "state": state_json(&scattered),
                "probabilities": probs(scat)?,
            },
            "rates_up": up,
            "rates_down": down,
        }),
    )?;
    Ok(format!(
        "qstate: emission concurrence={:.6} scattering concurrence={:.6} scattering p_f={:.4} p_b={:.4}",
        concurrence(&emitted).unwrap_or(f64::NAN),
        concurrence(&scattered).unwrap_or(f64::NAN),
        scattered.p_forward(),
        scattered.p_backward()
    ))
}
