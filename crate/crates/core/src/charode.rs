//! Characteristic-path ODE systems and their integrator.
//!
//! Covers the per-path system without alignment (`x, u, E, rho, d`), the
//! coupled Lagrangian ensemble with alignment (`x, u, E, rho, G` per
//! particle, convolutions over the ensemble), the scalar auxiliary system
//! (`eta, xi`), and the comparison-lemma harnesses that integrate a
//! nonlinear system and its auxiliary side by side on a shared time grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{solve_linear_pq, AuxParams};
use crate::scenario::Scenario;

/// Lagrangian state along one particle path. `x` is kept unwrapped (the
/// background is evaluated at the torus-wrapped position; the unwrapped copy
/// feeds the energy-growth diagnostic).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CharacteristicState {
    pub alpha: f64,
    pub x: f64,
    pub u: f64,
    pub e: f64,
    pub rho: f64,
    /// `d = u_x` without alignment, `G = u_x + nu + psi*rho` with alignment.
    pub slope: f64,
    pub time: f64,
}

/// State of the auxiliary nonlinear system `eta' = -eta*xi`,
/// `xi' = -xi^2 - nu*xi + k*eta - k*gamma` (`beta` of the params plays `nu`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuxState {
    pub eta: f64,
    pub xi: f64,
    pub params: AuxParams,
}

/// Integration controls. Step halving triggers when the monitored slope or
/// density reaches 10% of its cap or a step moves any component by more than
/// 20% relative; breakdown is declared at a cap breach with negative slope.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    /// `D_max`: |slope| threshold that counts as divergence.
    pub slope_cap: f64,
    /// `R_max`: density threshold that counts as divergence.
    pub density_cap: f64,
    pub horizon: f64,
    /// Record every n-th accepted step (the initial and final states are
    /// always recorded).
    pub output_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            dt_min: 1e-10,
            slope_cap: 1e8,
            density_cap: 1e12,
            horizon: 50.0,
            output_stride: 10,
        }
    }
}

impl IntegratorConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_init) {
            return Err(Error::InvalidParam(format!(
                "need 0 < dt_min < dt_init, got dt_min = {}, dt_init = {}",
                self.dt_min, self.dt_init
            )));
        }
        if !(self.slope_cap > 0.0 && self.density_cap > 0.0) {
            return Err(Error::InvalidParam("caps must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParam(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Cap-relevant extract of a state vector.
#[derive(Debug, Clone, Copy)]
pub struct CapMonitor {
    pub min_slope: f64,
    pub max_density: f64,
}

/// An autonomous-in-structure ODE system over a flat state vector.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);
    /// Slope/density extract for blow-up detection; `None` disables caps.
    fn monitor(&self, _y: &[f64]) -> Option<CapMonitor> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    HorizonReached,
    /// A cap was breached with negative slope; the true breakdown time lies
    /// near `[t_last_ok, t_breach]` (the state is already past `D_max` at
    /// `t_breach`, a hair before the genuine singularity).
    BlowupDetected { t_last_ok: f64, t_breach: f64 },
    /// The step fell below `dt_min` without a cap breach: a diagnostic
    /// failure, not a blow-up verdict.
    StepUnderflow { t: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory never empty")
    }
}

/// One classical RK4 step.
pub fn rk4_step(sys: &dyn OdeSystem, t: f64, y: &[f64], dt: f64, out: &mut [f64]) {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    sys.rhs(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    sys.rhs(t + 0.5 * dt, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    sys.rhs(t + 0.5 * dt, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    sys.rhs(t + dt, &tmp, &mut k4);
    for i in 0..n {
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn max_relative_change(y: &[f64], y_new: &[f64]) -> f64 {
    y.iter()
        .zip(y_new)
        .map(|(&a, &b)| (b - a).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn breached(m: &CapMonitor, cfg: &IntegratorConfig) -> bool {
    (m.min_slope <= -cfg.slope_cap) || (m.max_density >= cfg.density_cap)
}

fn near_cap(m: &CapMonitor, cfg: &IntegratorConfig) -> bool {
    (m.min_slope.abs() >= 0.1 * cfg.slope_cap) || (m.max_density >= 0.1 * cfg.density_cap)
}

/// Fixed-step RK4 on `[0, horizon]`, recording every `stride`-th step. Used
/// by the comparison harnesses and closed-form cross-checks, where both
/// sides must share the exact time grid.
pub fn integrate_fixed(
    sys: &dyn OdeSystem,
    y0: &[f64],
    dt: f64,
    horizon: f64,
    stride: usize,
) -> Trajectory {
    let stride = stride.max(1);
    let steps = (horizon / dt).round().max(1.0) as usize;
    let mut y = y0.to_vec();
    let mut y_next = vec![0.0; y.len()];
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    for step in 0..steps {
        let t = step as f64 * dt;
        rk4_step(sys, t, &y, dt, &mut y_next);
        std::mem::swap(&mut y, &mut y_next);
        if (step + 1) % stride == 0 || step + 1 == steps {
            times.push((step + 1) as f64 * dt);
            states.push(y.clone());
        }
    }
    Trajectory {
        times,
        states,
        termination: Termination::HorizonReached,
    }
}

/// Adaptive RK4 with step halving and blow-up detection.
pub fn integrate(sys: &dyn OdeSystem, y0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let dim = sys.dim();
    if y0.len() != dim {
        return Err(Error::InvalidParam(format!(
            "state length {} does not match system dimension {dim}",
            y0.len()
        )));
    }
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; dim];
    let mut dt = cfg.dt_init;
    let mut accepted_streak = 0usize;
    let mut accepted_total = 0usize;
    let stride = cfg.output_stride.max(1);
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let record_final = |times: &mut Vec<f64>, states: &mut Vec<Vec<f64>>, t: f64, y: &[f64]| {
        if *times.last().unwrap() < t {
            times.push(t);
            states.push(y.to_vec());
        }
    };

    loop {
        if t >= cfg.horizon - 1e-14 {
            record_final(&mut times, &mut states, t, &y);
            return Ok(Trajectory {
                times,
                states,
                termination: Termination::HorizonReached,
            });
        }
        let dt_step = dt.min(cfg.horizon - t);
        rk4_step(sys, t, &y, dt_step, &mut y_new);
        let finite = y_new.iter().all(|v| v.is_finite());
        if !finite || max_relative_change(&y, &y_new) > 0.2 {
            // Non-finite values past the caps still count as a breach.
            if !finite {
                if let Some(m) = sys.monitor(&y) {
                    if near_cap(&m, cfg) {
                        let (t_last_ok, t_breach) = refine_bracket(sys, t, &y, dt_step, cfg);
                        record_final(&mut times, &mut states, t, &y);
                        return Ok(Trajectory {
                            times,
                            states,
                            termination: Termination::BlowupDetected { t_last_ok, t_breach },
                        });
                    }
                }
            }
            dt *= 0.5;
            accepted_streak = 0;
            if dt < cfg.dt_min {
                record_final(&mut times, &mut states, t, &y);
                return Ok(Trajectory {
                    times,
                    states,
                    termination: Termination::StepUnderflow { t },
                });
            }
            continue;
        }
        // Accept.
        if let Some(m) = sys.monitor(&y_new) {
            if breached(&m, cfg) {
                let (t_last_ok, t_breach) = refine_bracket(sys, t, &y, dt_step, cfg);
                record_final(&mut times, &mut states, t, &y);
                return Ok(Trajectory {
                    times,
                    states,
                    termination: Termination::BlowupDetected { t_last_ok, t_breach },
                });
            }
            if near_cap(&m, cfg) {
                dt = (dt * 0.5).max(cfg.dt_min);
                accepted_streak = 0;
            }
        }
        std::mem::swap(&mut y, &mut y_new);
        t += dt_step;
        accepted_total += 1;
        accepted_streak += 1;
        if accepted_total % stride == 0 {
            times.push(t);
            states.push(y.clone());
        }
        if accepted_streak >= 16 && dt < cfg.dt_init {
            dt = (dt * 2.0).min(cfg.dt_init);
            accepted_streak = 0;
        }
    }
}

/// Bisection refinement of the breach time inside the last step: starting
/// from the last fully accepted state, advance with ever smaller substeps,
/// tightening `[t_last_ok, t_breach]` until the bracket is below 1e-6 (or
/// the substep floors out).
fn refine_bracket(
    sys: &dyn OdeSystem,
    t0: f64,
    y0: &[f64],
    dt0: f64,
    cfg: &IntegratorConfig,
) -> (f64, f64) {
    let mut t_ok = t0;
    let mut y_ok = y0.to_vec();
    let mut t_breach = t0 + dt0;
    let mut dt = dt0 * 0.5;
    let mut y_try = vec![0.0; y0.len()];
    while t_breach - t_ok > 1e-6 && dt >= cfg.dt_min {
        rk4_step(sys, t_ok, &y_ok, dt, &mut y_try);
        let bad = y_try.iter().any(|v| !v.is_finite())
            || sys.monitor(&y_try).map_or(false, |m| breached(&m, cfg));
        if bad {
            t_breach = t_ok + dt;
            dt *= 0.5;
        } else {
            std::mem::swap(&mut y_ok, &mut y_try);
            t_ok += dt;
            if t_ok + dt >= t_breach {
                dt *= 0.5;
            }
        }
    }
    (t_ok, t_breach)
}

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

/// Layout of one characteristic inside a flat ensemble state vector.
pub const CHAR_DIM: usize = 5;
pub const IX_X: usize = 0;
pub const IX_U: usize = 1;
pub const IX_E: usize = 2;
pub const IX_RHO: usize = 3;
pub const IX_SLOPE: usize = 4;

/// Derivative of the no-alignment characteristic system:
/// `x' = u`, `u' = -nu*u + k*E`, `E' = -c(x)*u`, `rho' = -rho*d`,
/// `d' = -d^2 - nu*d + k*(rho - c(x))`.
pub fn rhs_no_alignment(state: &CharacteristicState, scn: &Scenario) -> [f64; CHAR_DIM] {
    let c = scn.background.eval(state.x);
    [
        state.u,
        -scn.nu * state.u + scn.k * state.e,
        -c * state.u,
        -state.rho * state.slope,
        -state.slope * state.slope - scn.nu * state.slope + scn.k * (state.rho - c),
    ]
}

/// Derivative of the auxiliary system `(eta, xi)`.
pub fn rhs_aux(state: &AuxState) -> [f64; 2] {
    let AuxParams { gamma, beta, k, .. } = state.params;
    [
        -state.eta * state.xi,
        -state.xi * state.xi - beta * state.xi + k * state.eta - k * gamma,
    ]
}

/// Ensemble of independent no-alignment characteristics (they share nothing
/// but the integrator time grid).
pub struct NoAlignmentEnsemble<'a> {
    pub scn: &'a Scenario,
    pub n_chars: usize,
}

impl OdeSystem for NoAlignmentEnsemble<'_> {
    fn dim(&self) -> usize {
        CHAR_DIM * self.n_chars
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let (nu, k) = (self.scn.nu, self.scn.k);
        for (ys, ds) in y.chunks_exact(CHAR_DIM).zip(dydt.chunks_exact_mut(CHAR_DIM)) {
            let c = self.scn.background.eval(ys[IX_X]);
            let (u, e, rho, d) = (ys[IX_U], ys[IX_E], ys[IX_RHO], ys[IX_SLOPE]);
            ds[IX_X] = u;
            ds[IX_U] = -nu * u + k * e;
            ds[IX_E] = -c * u;
            ds[IX_RHO] = -rho * d;
            ds[IX_SLOPE] = -d * d - nu * d + k * (rho - c);
        }
    }

    fn monitor(&self, y: &[f64]) -> Option<CapMonitor> {
        let mut min_slope = f64::INFINITY;
        let mut max_density = f64::NEG_INFINITY;
        for ys in y.chunks_exact(CHAR_DIM) {
            min_slope = min_slope.min(ys[IX_SLOPE]);
            max_density = max_density.max(ys[IX_RHO]);
        }
        Some(CapMonitor {
            min_slope,
            max_density,
        })
    }
}

/// Coupled alignment ensemble. The state is `[x, u, E, rho, G]` per
/// characteristic, followed by optional `(w, s)` probe pairs riding along
/// characteristic 0 (used by the comparison harness). Lagrangian masses are
/// constant in time.
pub struct AlignmentEnsemble<'a> {
    pub scn: &'a Scenario,
    pub masses: Vec<f64>,
    pub n_probes: usize,
}

impl AlignmentEnsemble<'_> {
    pub fn n_chars(&self) -> usize {
        self.masses.len()
    }

    fn kernel(&self) -> &crate::scenario::Kernel {
        self.scn.kernel.as_ref().expect("alignment ensemble requires kernel")
    }
}

impl OdeSystem for AlignmentEnsemble<'_> {
    fn dim(&self) -> usize {
        CHAR_DIM * self.n_chars() + 2 * self.n_probes
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let n = self.n_chars();
        let (nu, k) = (self.scn.nu, self.scn.k);
        let kernel = self.kernel();
        let chars = &y[..CHAR_DIM * n];
        for i in 0..n {
            let yi = &chars[CHAR_DIM * i..CHAR_DIM * (i + 1)];
            let (xi, ui) = (yi[IX_X], yi[IX_U]);
            // One pass over the ensemble for both convolutions.
            let mut conv = 0.0;
            let mut align = 0.0;
            for j in 0..n {
                let yj = &chars[CHAR_DIM * j..CHAR_DIM * (j + 1)];
                let w = kernel.eval(xi - yj[IX_X]) * self.masses[j];
                conv += w;
                align += w * (yj[IX_U] - ui);
            }
            let c = self.scn.background.eval(xi);
            let (e, rho, g) = (yi[IX_E], yi[IX_RHO], yi[IX_SLOPE]);
            let ds = &mut dydt[CHAR_DIM * i..CHAR_DIM * (i + 1)];
            ds[IX_X] = ui;
            ds[IX_U] = -nu * ui + k * e + align;
            ds[IX_E] = -c * ui;
            ds[IX_RHO] = -rho * (g - nu - conv);
            ds[IX_SLOPE] = -g * (g - nu - conv) + k * (rho - c);
        }
        // (w, s) probes ride along characteristic 0:
        // w' = k - k*c(x0)*s, s' = w - (nu + psi*rho(x0))*s.
        if self.n_probes > 0 {
            let x0 = chars[IX_X];
            let mut conv0 = 0.0;
            for j in 0..n {
                conv0 += kernel.eval(x0 - chars[CHAR_DIM * j + IX_X]) * self.masses[j];
            }
            let c0 = self.scn.background.eval(x0);
            let base = CHAR_DIM * n;
            for p in 0..self.n_probes {
                let (w, s) = (y[base + 2 * p], y[base + 2 * p + 1]);
                dydt[base + 2 * p] = k - k * c0 * s;
                dydt[base + 2 * p + 1] = w - (nu + conv0) * s;
            }
        }
    }

    fn monitor(&self, y: &[f64]) -> Option<CapMonitor> {
        let n = self.n_chars();
        let mut min_slope = f64::INFINITY;
        let mut max_density = f64::NEG_INFINITY;
        for ys in y[..CHAR_DIM * n].chunks_exact(CHAR_DIM) {
            min_slope = min_slope.min(ys[IX_SLOPE]);
            max_density = max_density.max(ys[IX_RHO]);
        }
        Some(CapMonitor {
            min_slope,
            max_density,
        })
    }
}

/// Spec-level alignment right-hand side on explicit characteristic states,
/// with externally supplied Lagrangian masses.
pub fn rhs_alignment(
    ensemble: &[CharacteristicState],
    masses: &[f64],
    scn: &Scenario,
) -> Result<Vec<[f64; CHAR_DIM]>> {
    if ensemble.len() != masses.len() {
        return Err(Error::Precondition(format!(
            "{} states vs {} masses",
            ensemble.len(),
            masses.len()
        )));
    }
    if masses.iter().any(|&m| m < 0.0) {
        return Err(Error::Precondition("negative Lagrangian mass".into()));
    }
    let sum: f64 = masses.iter().sum();
    if (sum - 1.0).abs() > crate::scenario::NORMALIZATION_TOL {
        return Err(Error::Precondition(format!(
            "Lagrangian masses sum to {sum}, expected 1"
        )));
    }
    if scn.kernel.is_none() {
        return Err(Error::Precondition("alignment rhs requires a kernel".into()));
    }
    let sys = AlignmentEnsemble {
        scn,
        masses: masses.to_vec(),
        n_probes: 0,
    };
    let mut y = Vec::with_capacity(CHAR_DIM * ensemble.len());
    for st in ensemble {
        y.extend_from_slice(&[st.x, st.u, st.e, st.rho, st.slope]);
    }
    let mut dydt = vec![0.0; y.len()];
    sys.rhs(0.0, &y, &mut dydt);
    Ok(dydt
        .chunks_exact(CHAR_DIM)
        .map(|c| [c[0], c[1], c[2], c[3], c[4]])
        .collect())
}

/// The auxiliary `(eta, xi)` system as an integrable system.
pub struct AuxSystem {
    pub params: AuxParams,
}

impl OdeSystem for AuxSystem {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let d = rhs_aux(&AuxState {
            eta: y[0],
            xi: y[1],
            params: self.params,
        });
        dydt.copy_from_slice(&d);
    }

    fn monitor(&self, y: &[f64]) -> Option<CapMonitor> {
        Some(CapMonitor {
            min_slope: y[1],
            max_density: y[0],
        })
    }
}

/// Seeds `n_chars` characteristics at uniform midpoint labels, with the
/// initial electric field from the cumulative charge imbalance and the slope
/// variable `d = u0x` (no kernel) or `G = u0x + nu + psi*rho0` (kernel).
/// Returns the flat state vector, the Lagrangian masses, and the labels.
pub fn seed_characteristics(scn: &Scenario, n_chars: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if n_chars < 2 {
        return Err(Error::Precondition(format!("need n_chars >= 2, got {n_chars}")));
    }
    let delta = 1.0 / n_chars as f64;
    let alphas: Vec<f64> = (0..n_chars)
        .map(|j| -0.5 + (j as f64 + 0.5) * delta)
        .collect();
    let masses: Vec<f64> = alphas.iter().map(|&a| scn.rho0.eval(a) * delta).collect();
    let mass_sum: f64 = masses.iter().sum();
    if (mass_sum - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!(
            "Lagrangian mass {mass_sum} deviates from 1 beyond tolerance; increase n_chars \
             or smooth rho0"
        )));
    }
    let mut y = Vec::with_capacity(CHAR_DIM * n_chars);
    for &a in &alphas {
        let u0 = scn.u0.eval(a);
        let slope = match &scn.kernel {
            None => scn.u0x.eval(a),
            Some(_) => scn.u0x.eval(a) + scn.nu + scn.psi_conv_rho0(a)?,
        };
        y.extend_from_slice(&[
            a,
            u0,
            scn.initial_electric_field(a),
            scn.rho0.eval(a),
            slope,
        ]);
    }
    Ok((y, masses, alphas))
}

// ---------------------------------------------------------------------------
// Comparison harnesses
// ---------------------------------------------------------------------------

/// Which extremum of the background the auxiliary parameter `gamma` takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaChoice {
    /// `gamma = min c`: requires `rho(0) < eta(0)` and `d(0) > xi(0)`.
    MinC,
    /// `gamma = max c`: requires `rho(0) > eta(0)` and `d(0) < xi(0)`.
    MaxC,
}

/// Branch of the linear comparison for the alignment system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignBranch {
    /// `gamma = c1`, `beta = nu + psi_M`: requires `s(0) > q(0)`, `w(0) > p(0)`.
    C1PsiMax,
    /// `gamma = c2`, `beta = nu + psi_m`: requires `s(0) < q(0)`, `w(0) < p(0)`.
    C2PsiMin,
}

/// Result of a side-by-side ordering check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingReport {
    pub held: bool,
    pub end_time: f64,
    pub end_reason: String,
    /// First time and description of an ordering violation, if any.
    pub first_violation: Option<(f64, String)>,
}

/// Joint system: one no-alignment characteristic plus the auxiliary
/// `(eta, xi)` pair, integrated with the same steps.
struct CharWithAux<'a> {
    scn: &'a Scenario,
    gamma: f64,
}

impl OdeSystem for CharWithAux<'_> {
    fn dim(&self) -> usize {
        CHAR_DIM + 2
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let (nu, k) = (self.scn.nu, self.scn.k);
        let c = self.scn.background.eval(y[IX_X]);
        let (u, e, rho, d) = (y[IX_U], y[IX_E], y[IX_RHO], y[IX_SLOPE]);
        dydt[IX_X] = u;
        dydt[IX_U] = -nu * u + k * e;
        dydt[IX_E] = -c * u;
        dydt[IX_RHO] = -rho * d;
        dydt[IX_SLOPE] = -d * d - nu * d + k * (rho - c);
        let (eta, xi) = (y[CHAR_DIM], y[CHAR_DIM + 1]);
        dydt[CHAR_DIM] = -eta * xi;
        dydt[CHAR_DIM + 1] = -xi * xi - nu * xi + k * eta - k * self.gamma;
    }
}

/// Integrates the nonlinear characteristic system and the auxiliary system
/// on a shared fixed grid and reports whether the comparison ordering held
/// (until the horizon or until either side diverges). A violation requires
/// a margin above 1e-9.
#[allow(clippy::too_many_arguments)]
pub fn compare_nonlin_vs_aux(
    scn: &Scenario,
    alpha: f64,
    rho0: f64,
    d0: f64,
    eta0: f64,
    xi0: f64,
    choice: GammaChoice,
    horizon: f64,
    dt: f64,
) -> Result<OrderingReport> {
    const MARGIN: f64 = 1e-9;
    match choice {
        GammaChoice::MinC => {
            if !(rho0 < eta0 && d0 > xi0) {
                return Err(Error::Precondition(format!(
                    "branch gamma = min c requires rho(0) < eta(0) and d(0) > xi(0) strictly, \
                     got rho0 = {rho0}, eta0 = {eta0}, d0 = {d0}, xi0 = {xi0}"
                )));
            }
        }
        GammaChoice::MaxC => {
            if !(rho0 > eta0 && d0 < xi0) {
                return Err(Error::Precondition(format!(
                    "branch gamma = max c requires rho(0) > eta(0) and d(0) < xi(0) strictly, \
                     got rho0 = {rho0}, eta0 = {eta0}, d0 = {d0}, xi0 = {xi0}"
                )));
            }
        }
    }
    let gamma = match choice {
        GammaChoice::MinC => scn.c1,
        GammaChoice::MaxC => scn.c2,
    };
    let sys = CharWithAux { scn, gamma };
    let y0 = [
        alpha,
        scn.u0.eval(alpha),
        scn.initial_electric_field(alpha),
        rho0,
        d0,
        eta0,
        xi0,
    ];
    let mut y = y0.to_vec();
    let mut y_next = vec![0.0; y.len()];
    let steps = (horizon / dt).ceil() as usize;
    let divergence_cap = 1e8;
    for step in 0..steps {
        let t = step as f64 * dt;
        rk4_step(&sys, t, &y, dt, &mut y_next);
        let t_next = t + dt;
        if y_next.iter().any(|v| !v.is_finite())
            || y_next[CHAR_DIM].abs() > divergence_cap
            || y_next[CHAR_DIM + 1].abs() > divergence_cap
            || y_next[IX_RHO].abs() > divergence_cap
            || y_next[IX_SLOPE].abs() > divergence_cap
        {
            return Ok(OrderingReport {
                held: true,
                end_time: t,
                end_reason: "held until divergence".into(),
                first_violation: None,
            });
        }
        std::mem::swap(&mut y, &mut y_next);
        let (rho, d, eta, xi) = (y[IX_RHO], y[IX_SLOPE], y[CHAR_DIM], y[CHAR_DIM + 1]);
        let violation = match choice {
            GammaChoice::MinC if rho - eta > MARGIN => {
                Some(format!("rho = {rho} >= eta = {eta}"))
            }
            GammaChoice::MinC if xi - d > MARGIN => Some(format!("d = {d} <= xi = {xi}")),
            GammaChoice::MaxC if eta - rho > MARGIN => {
                Some(format!("rho = {rho} <= eta = {eta}"))
            }
            GammaChoice::MaxC if d - xi > MARGIN => Some(format!("d = {d} >= xi = {xi}")),
            _ => None,
        };
        if let Some(msg) = violation {
            return Ok(OrderingReport {
                held: false,
                end_time: t_next,
                end_reason: "ordering violated".into(),
                first_violation: Some((t_next, msg)),
            });
        }
    }
    Ok(OrderingReport {
        held: true,
        end_time: horizon,
        end_reason: "held to horizon".into(),
        first_violation: None,
    })
}

/// Integrates `(w, s)` probes along characteristic 0 of a full alignment
/// ensemble and compares them with the closed-form `(p, q)` auxiliary
/// solutions of the chosen branch. Returns one report per probe.
pub fn compare_lin2_vs_auxlin2(
    scn: &Scenario,
    probes: &[((f64, f64), (f64, f64))],
    branch: AlignBranch,
    n_chars: usize,
    horizon: f64,
    dt: f64,
) -> Result<Vec<OrderingReport>> {
    const MARGIN: f64 = 1e-9;
    if scn.kernel.is_none() {
        return Err(Error::Precondition("alignment comparison requires a kernel".into()));
    }
    let kernel = scn.kernel.as_ref().unwrap();
    let (gamma, beta) = match branch {
        AlignBranch::C1PsiMax => (scn.c1, scn.nu + kernel.psi_max()),
        AlignBranch::C2PsiMin => (scn.c2, scn.nu + kernel.psi_min()),
    };
    for (i, &((w0, s0), (p0, q0))) in probes.iter().enumerate() {
        let ok = match branch {
            AlignBranch::C1PsiMax => s0 > q0 && w0 > p0 && q0 > 0.0,
            AlignBranch::C2PsiMin => s0 < q0 && w0 < p0 && s0 > 0.0,
        };
        if !ok {
            return Err(Error::Precondition(format!(
                "probe {i} violates the {branch:?} hypothesis: \
                 (w0, s0) = ({w0}, {s0}), (p0, q0) = ({p0}, {q0})"
            )));
        }
    }
    let params = AuxParams::new(gamma, beta, scn.k)?;
    let (mut y, masses, _) = seed_characteristics(scn, n_chars)?;
    let sys = AlignmentEnsemble {
        scn,
        masses,
        n_probes: probes.len(),
    };
    let base = CHAR_DIM * n_chars;
    for &((w0, s0), _) in probes {
        y.push(w0);
        y.push(s0);
    }
    let mut reports: Vec<Option<OrderingReport>> = vec![None; probes.len()];
    let steps = (horizon / dt).ceil() as usize;
    let mut y_next = vec![0.0; y.len()];
    for step in 0..steps {
        let t = step as f64 * dt;
        rk4_step(&sys, t, &y, dt, &mut y_next);
        std::mem::swap(&mut y, &mut y_next);
        let t_next = t + dt;
        for (idx, &(_, (p0, q0))) in probes.iter().enumerate() {
            if reports[idx].is_some() {
                continue;
            }
            let (w, s) = (y[base + 2 * idx], y[base + 2 * idx + 1]);
            let pq = solve_linear_pq(p0, q0, &params, t_next)?.coords;
            // The lemma speaks for as long as s >= 0 (and the auxiliary q
            // stays positive on branch ii).
            let expired = match branch {
                AlignBranch::C1PsiMax => s < 0.0,
                AlignBranch::C2PsiMin => s < 0.0 || pq[1] <= 0.0,
            };
            if expired {
                reports[idx] = Some(OrderingReport {
                    held: true,
                    end_time: t_next,
                    end_reason: "held until s (or q) reached zero".into(),
                    first_violation: None,
                });
                continue;
            }
            let violation = match branch {
                AlignBranch::C1PsiMax if pq[1] - s > MARGIN => {
                    Some(format!("s = {s} <= q = {}", pq[1]))
                }
                AlignBranch::C1PsiMax if pq[0] - w > MARGIN => {
                    Some(format!("w = {w} <= p = {}", pq[0]))
                }
                AlignBranch::C2PsiMin if s - pq[1] > MARGIN => {
                    Some(format!("s = {s} >= q = {}", pq[1]))
                }
                AlignBranch::C2PsiMin if w - pq[0] > MARGIN => {
                    Some(format!("w = {w} >= p = {}", pq[0]))
                }
                _ => None,
            };
            if let Some(msg) = violation {
                reports[idx] = Some(OrderingReport {
                    held: false,
                    end_time: t_next,
                    end_reason: "ordering violated".into(),
                    first_violation: Some((t_next, msg)),
                });
            }
        }
        if reports.iter().all(|r| r.is_some()) {
            break;
        }
    }
    Ok(reports
        .into_iter()
        .map(|r| {
            r.unwrap_or(OrderingReport {
                held: true,
                end_time: horizon,
                end_reason: "held to horizon".into(),
                first_violation: None,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Kernel, PeriodicProfile, ProfileFamily};
    use approx::assert_abs_diff_eq;

    fn profile(f: ProfileFamily, n: usize) -> PeriodicProfile {
        PeriodicProfile::from_family(f, n).unwrap()
    }

    fn scenario_basic(nu: f64, kernel: Option<ProfileFamily>) -> Scenario {
        let n = 64;
        Scenario::new(
            -1.0,
            nu,
            profile(ProfileFamily::Constant { value: 1.0 }, n),
            profile(ProfileFamily::Constant { value: 1.0 }, n),
            profile(ProfileFamily::Constant { value: 0.0 }, n),
            Some(profile(ProfileFamily::Constant { value: 0.5 }, n)),
            kernel.map(|f| Kernel::new(profile(f, n), None).unwrap()),
            false,
        )
        .unwrap()
    }

    fn scenario_variable(nu: f64) -> Scenario {
        let n = 128;
        Scenario::new(
            -1.0,
            nu,
            profile(
                ProfileFamily::AffineSine {
                    a: 1.0,
                    b: 0.3,
                    phase: 0.0,
                },
                n,
            ),
            profile(ProfileFamily::Constant { value: 1.0 }, n),
            profile(ProfileFamily::Constant { value: 0.0 }, n),
            Some(profile(ProfileFamily::Constant { value: 0.5 }, n)),
            None,
            false,
        )
        .unwrap()
    }

    #[test]
    fn rhs_no_alignment_equilibrium_is_fixed_point() {
        let scn = scenario_basic(0.7, None);
        let st = CharacteristicState {
            alpha: 0.1,
            x: 0.1,
            u: 0.0,
            e: 0.0,
            rho: 1.0,
            slope: 0.0,
            time: 0.0,
        };
        assert_eq!(rhs_no_alignment(&st, &scn), [0.0; 5]);
    }

    #[test]
    fn rhs_no_alignment_direct_substitution() {
        // c = 1, k = -1, nu = 0, (rho, d) = (2, 0): d' = k(rho - c) = -1.
        let scn = scenario_basic(0.0, None);
        let st = CharacteristicState {
            alpha: 0.0,
            x: 0.0,
            u: 0.0,
            e: 0.0,
            rho: 2.0,
            slope: 0.0,
            time: 0.0,
        };
        let d = rhs_no_alignment(&st, &scn);
        assert_eq!(d[IX_SLOPE], -1.0);
        // Zero density stays zero.
        let st0 = CharacteristicState { rho: 0.0, ..st };
        assert_eq!(rhs_no_alignment(&st0, &scn)[IX_RHO], 0.0);
    }

    #[test]
    fn rhs_aux_worked_values() {
        // (eta, xi) = (gamma, 0) is a fixed point for any nu.
        let p = AuxParams::new(1.0, 0.7, -1.0).unwrap();
        assert_eq!(
            rhs_aux(&AuxState {
                eta: 1.0,
                xi: 0.0,
                params: p
            }),
            [0.0, 0.0]
        );
        // Riccati root at eta = 0.
        let d = rhs_aux(&AuxState {
            eta: 0.0,
            xi: -p.roots.lambda,
            params: p,
        });
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-14);
        // nu = 0, k = -1, gamma = 1, (eta, xi) = (2, 1): eta' = -2, xi' = -2.
        let p0 = AuxParams::new(1.0, 0.0, -1.0).unwrap();
        let d = rhs_aux(&AuxState {
            eta: 2.0,
            xi: 1.0,
            params: p0,
        });
        assert_eq!(d, [-2.0, -2.0]);
    }

    #[test]
    fn alignment_consensus_has_zero_alignment_force() {
        let scn = scenario_basic(0.0, Some(ProfileFamily::RaisedCosine { a: 1.0, b: 1.0 }));
        let n = 16;
        let (y, masses, alphas) = seed_characteristics(&scn, n).unwrap();
        let states: Vec<CharacteristicState> = (0..n)
            .map(|j| CharacteristicState {
                alpha: alphas[j],
                x: y[CHAR_DIM * j + IX_X],
                u: 0.3, // identical velocities
                e: y[CHAR_DIM * j + IX_E],
                rho: y[CHAR_DIM * j + IX_RHO],
                slope: y[CHAR_DIM * j + IX_SLOPE],
                time: 0.0,
            })
            .collect();
        let derivs = rhs_alignment(&states, &masses, &scn).unwrap();
        for d in &derivs {
            // u' = -nu u + k E + 0; here nu = 0 and E = 0 (equilibrium).
            assert_abs_diff_eq!(d[IX_U], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn alignment_two_particle_hand_value() {
        // Two equal masses 1/2, psi(x1 - x2) = 1, u = (0, 1):
        // alignment term on particle 1 = 0.5 * 1 * (1 - 0) = 0.5.
        let n = 64;
        let scn = Scenario::new(
            -1.0,
            0.0,
            profile(ProfileFamily::Constant { value: 1.0 }, n),
            profile(ProfileFamily::Constant { value: 1.0 }, n),
            profile(ProfileFamily::Constant { value: 0.0 }, n),
            Some(profile(ProfileFamily::Constant { value: 0.0 }, n)),
            Some(Kernel::new(profile(ProfileFamily::Constant { value: 1.0 }, n), None).unwrap()),
            false,
        )
        .unwrap();
        let mk = |x: f64, u: f64| CharacteristicState {
            alpha: x,
            x,
            u,
            e: 0.0,
            rho: 1.0,
            slope: 0.0,
            time: 0.0,
        };
        let derivs =
            rhs_alignment(&[mk(-0.2, 0.0), mk(0.2, 1.0)], &[0.5, 0.5], &scn).unwrap();
        assert_abs_diff_eq!(derivs[0][IX_U], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(derivs[1][IX_U], -0.5, epsilon = 1e-14);
    }

    #[test]
    fn zero_kernel_alignment_matches_no_alignment_rhs() {
        let scn = scenario_basic(0.4, Some(ProfileFamily::Constant { value: 0.0 }));
        let st = CharacteristicState {
            alpha: 0.1,
            x: 0.1,
            u: 0.2,
            e: 0.05,
            rho: 1.3,
            slope: 0.7, // this is d; G = d + nu
            time: 0.0,
        };
        let g_state = CharacteristicState {
            slope: st.slope + scn.nu,
            ..st
        };
        let align = rhs_alignment(&[g_state], &[1.0], &scn).unwrap()[0];
        let plain = rhs_no_alignment(&st, &scn);
        // G' should equal d' when psi = 0, and the rest coincide.
        for i in 0..CHAR_DIM {
            assert_abs_diff_eq!(align[i], plain[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn integrate_equilibrium_reaches_horizon_unchanged() {
        let scn = scenario_basic(0.0, None);
        let sys = NoAlignmentEnsemble { scn: &scn, n_chars: 4 };
        let mut y0 = Vec::new();
        for j in 0..4 {
            y0.extend_from_slice(&[-0.375 + 0.25 * j as f64, 0.0, 0.0, 1.0, 0.0]);
        }
        let cfg = IntegratorConfig::with_horizon(3.0);
        let traj = integrate(&sys, &y0, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::HorizonReached);
        for (a, b) in y0.iter().zip(traj.final_state()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn integrate_riccati_blowup_bracket() {
        // eta0 = 0 embeds the scalar Riccati flow; xi0 = -2, blow-up at ln(3)/2.
        let params = AuxParams::new(1.0, 0.0, -1.0).unwrap();
        let sys = AuxSystem { params };
        let cfg = IntegratorConfig::with_horizon(5.0);
        let traj = integrate(&sys, &[0.0, -2.0], &cfg).unwrap();
        match traj.termination {
            Termination::BlowupDetected { t_last_ok, t_breach } => {
                let mid = 0.5 * (t_last_ok + t_breach);
                assert_abs_diff_eq!(mid, 0.5 * 3f64.ln(), epsilon = 1e-4);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn integrate_fixed_matches_rs_closed_form() {
        // The (r, s) linear system as a plain OdeSystem.
        struct Rs {
            p: AuxParams,
        }
        impl OdeSystem for Rs {
            fn dim(&self) -> usize {
                2
            }
            fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
                let v = crate::phase::vector_field(crate::phase::Plane::Rs, &self.p, y[0], y[1]);
                dydt.copy_from_slice(&v);
            }
        }
        let p = AuxParams::new(1.0, 3.0, -1.0).unwrap();
        let sys = Rs { p };
        let traj = integrate_fixed(&sys, &[1.0, 1.0], 1e-3, 5.0, 100);
        for (t, st) in traj.times.iter().zip(&traj.states) {
            let exact = crate::phase::solve_linear_rs(1.0, 1.0, &p, *t).unwrap().coords;
            assert_abs_diff_eq!(st[0], exact[0], epsilon = 1e-8);
            assert_abs_diff_eq!(st[1], exact[1], epsilon = 1e-8);
        }
    }

    #[test]
    fn comparison_lemma_branch_i_holds() {
        // c1 = 0.7; (rho0, d0) = (1.5, 2), (eta0, xi0) = (2, 1).
        let scn = scenario_variable(0.0);
        let rep = compare_nonlin_vs_aux(
            &scn,
            0.1,
            1.5,
            2.0,
            2.0,
            1.0,
            GammaChoice::MinC,
            1.0,
            1e-3,
        )
        .unwrap();
        assert!(rep.held, "{rep:?}");
    }

    #[test]
    fn comparison_lemma_branch_ii_holds_until_blowup() {
        let scn = scenario_variable(0.0);
        let rep = compare_nonlin_vs_aux(
            &scn,
            0.1,
            2.0,
            -1.0,
            1.5,
            -0.5,
            GammaChoice::MaxC,
            5.0,
            1e-3,
        )
        .unwrap();
        assert!(rep.held, "{rep:?}");
    }

    #[test]
    fn comparison_rejects_equal_initial_data() {
        let scn = scenario_variable(0.0);
        assert!(compare_nonlin_vs_aux(
            &scn,
            0.0,
            1.0,
            1.0,
            1.0,
            1.0,
            GammaChoice::MinC,
            1.0,
            1e-3
        )
        .is_err());
    }

    #[test]
    fn lin2_comparison_rejects_boundary_probe() {
        let scn = scenario_basic(0.0, Some(ProfileFamily::RaisedCosine { a: 1.0, b: 0.5 }));
        let err = compare_lin2_vs_auxlin2(
            &scn,
            &[((1.0, 0.5), (0.5, 0.5))], // s0 == q0
            AlignBranch::C1PsiMax,
            16,
            1.0,
            1e-3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("hypothesis"));
    }

    #[test]
    fn lin2_comparison_constant_kernel_holds() {
        // Constant psi: both sides are linear with identical coefficients up
        // to the strict initial gap, so ordering must persist.
        let scn = scenario_basic(0.2, Some(ProfileFamily::Constant { value: 0.6 }));
        let reports = compare_lin2_vs_auxlin2(
            &scn,
            &[((1.5, 1.2), (1.0, 0.8)), ((0.0, 2.0), (-0.5, 1.0))],
            AlignBranch::C1PsiMax,
            16,
            3.0,
            1e-3,
        )
        .unwrap();
        for r in reports {
            assert!(r.held, "{r:?}");
        }
    }
}
