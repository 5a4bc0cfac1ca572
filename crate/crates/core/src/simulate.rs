//! Ensemble-level experiments: full Lagrangian runs of both systems,
//! monitoring of the a priori bounds, blow-up detection across the
//! ensemble, and bisection sweeps that bracket the critical threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charode::{
    integrate, seed_characteristics, AlignmentEnsemble, IntegratorConfig, NoAlignmentEnsemble,
    Termination, CHAR_DIM, IX_E, IX_RHO, IX_SLOPE, IX_U, IX_X,
};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::thresholds::{classify_auto, omega, Verdict};

/// Final word of an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    GlobalToHorizon,
    Breakdown {
        /// Bisection-refined bracket around the first cap breach.
        t_bracket: (f64, f64),
        /// Bracket midpoint.
        t_estimate: f64,
        /// Label of the characteristic closest to the breach.
        worst_alpha: f64,
    },
}

impl Outcome {
    pub fn is_global(&self) -> bool {
        matches!(self, Outcome::GlobalToHorizon)
    }
}

/// Per-snapshot extremal diagnostics, with the density measured against its
/// theoretical growth envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundSeries {
    pub times: Vec<f64>,
    pub min_ux: Vec<f64>,
    pub max_ux: Vec<f64>,
    pub max_rho: Vec<f64>,
    /// Worst `max_rho(t) * exp(-lambda1 t) / max rho0` over the run.
    pub rho_growth_ratio: f64,
    /// The rate `lambda1` used in the ratio.
    pub lambda1: f64,
}

/// A completed Lagrangian simulation: snapshots of the whole ensemble on the
/// integrator's output grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub scenario: Scenario,
    pub n_chars: usize,
    pub config: IntegratorConfig,
    pub alphas: Vec<f64>,
    pub masses: Vec<f64>,
    pub times: Vec<f64>,
    /// Flat `[x, u, E, rho, slope]` blocks per characteristic, one vector
    /// per output time.
    pub states: Vec<Vec<f64>>,
    pub outcome: Outcome,
    pub bounds: BoundSeries,
    pub alignment: bool,
}

impl EnsembleRun {
    /// Component of characteristic `j` at snapshot `snap`.
    pub fn field(&self, snap: usize, j: usize, component: usize) -> f64 {
        self.states[snap][CHAR_DIM * j + component]
    }

    /// Velocity slope `u_x` of characteristic `j` at snapshot `snap`
    /// (converts `G` back through the convolution in the alignment case).
    pub fn ux(&self, snap: usize, j: usize) -> f64 {
        let slope = self.field(snap, j, IX_SLOPE);
        if !self.alignment {
            return slope;
        }
        let kernel = self.scenario.kernel.as_ref().expect("alignment run has kernel");
        let x = self.field(snap, j, IX_X);
        let mut conv = 0.0;
        for jj in 0..self.n_chars {
            conv += kernel.eval(x - self.field(snap, jj, IX_X)) * self.masses[jj];
        }
        slope - self.scenario.nu - conv
    }

    /// `int (rho - c)` reconstructed from the Lagrangian masses at snapshot
    /// `snap`. Should stay near zero (quadrature-limited).
    pub fn neutrality_residual(&self, snap: usize) -> f64 {
        // Masses are constant, so the rho integral is exactly 1; what can
        // drift is the background integral seen through the particles. Use
        // the mass-weighted estimate int c = sum c(x_j) * m_j / rho_j.
        let mut c_int = 0.0;
        for j in 0..self.n_chars {
            let rho = self.field(snap, j, IX_RHO);
            if rho > 0.0 {
                c_int += self.scenario.background.eval(self.field(snap, j, IX_X))
                    * self.masses[j]
                    / rho;
            }
        }
        1.0 - c_int
    }

    /// True if positions are monotone in the label at snapshot `snap`
    /// (no characteristic crossing), accounting for one periodic wrap.
    pub fn positions_monotone(&self, snap: usize) -> bool {
        let mut drops = 0;
        for j in 0..self.n_chars {
            let a = crate::scenario::wrap_torus(self.field(snap, j, IX_X));
            let b =
                crate::scenario::wrap_torus(self.field(snap, (j + 1) % self.n_chars, IX_X));
            if b < a {
                drops += 1;
            }
        }
        drops <= 1
    }
}

fn growth_rate(scn: &Scenario) -> Result<f64> {
    match &scn.kernel {
        None => omega(scn.c1, scn.nu, scn.k),
        Some(kr) => omega(scn.c1, scn.nu + kr.psi_max(), scn.k),
    }
}

/// Runs the full Lagrangian ensemble for a scenario, with or without
/// alignment depending on the kernel. `StepUnderflow` is a hard error; a cap
/// breach becomes a `Breakdown` outcome.
pub fn run_ensemble(scn: &Scenario, n_chars: usize, config: &IntegratorConfig) -> Result<EnsembleRun> {
    if n_chars < 16 {
        return Err(Error::Precondition(format!(
            "need at least 16 characteristics, got {n_chars}"
        )));
    }
    let (y0, masses, alphas) = seed_characteristics(scn, n_chars)?;
    let alignment = scn.kernel.is_some();
    let traj = if alignment {
        let sys = AlignmentEnsemble {
            scn,
            masses: masses.clone(),
            n_probes: 0,
        };
        integrate(&sys, &y0, config)?
    } else {
        let sys = NoAlignmentEnsemble { scn, n_chars };
        integrate(&sys, &y0, config)?
    };
    let outcome = match traj.termination {
        Termination::HorizonReached => Outcome::GlobalToHorizon,
        Termination::StepUnderflow { t } => {
            return Err(Error::Integration(format!(
                "step size underflow at t = {t} without a cap breach"
            )));
        }
        Termination::BlowupDetected { t_last_ok, t_breach } => {
            let last = traj.states.last().unwrap();
            let worst = (0..n_chars)
                .max_by(|&a, &b| {
                    let score = |j: usize| {
                        let rho = last[CHAR_DIM * j + IX_RHO] / config.density_cap;
                        let slope = -last[CHAR_DIM * j + IX_SLOPE] / config.slope_cap;
                        rho.max(slope)
                    };
                    score(a).total_cmp(&score(b))
                })
                .unwrap();
            Outcome::Breakdown {
                t_bracket: (t_last_ok, t_breach),
                t_estimate: 0.5 * (t_last_ok + t_breach),
                worst_alpha: alphas[worst],
            }
        }
    };
    let mut run = EnsembleRun {
        scenario: scn.clone(),
        n_chars,
        config: *config,
        alphas,
        masses,
        times: traj.times,
        states: traj.states,
        outcome,
        bounds: BoundSeries {
            times: Vec::new(),
            min_ux: Vec::new(),
            max_ux: Vec::new(),
            max_rho: Vec::new(),
            rho_growth_ratio: 0.0,
            lambda1: growth_rate(scn)?,
        },
        alignment,
    };
    let rho0_max = scn.rho0.grid_max();
    let mut bounds = run.bounds.clone();
    for snap in 0..run.times.len() {
        let t = run.times[snap];
        let mut min_ux = f64::INFINITY;
        let mut max_ux = f64::NEG_INFINITY;
        let mut max_rho = f64::NEG_INFINITY;
        for j in 0..n_chars {
            let ux = run.ux(snap, j);
            min_ux = min_ux.min(ux);
            max_ux = max_ux.max(ux);
            max_rho = max_rho.max(run.field(snap, j, IX_RHO));
        }
        bounds.times.push(t);
        bounds.min_ux.push(min_ux);
        bounds.max_ux.push(max_ux);
        bounds.max_rho.push(max_rho);
        bounds.rho_growth_ratio = bounds
            .rho_growth_ratio
            .max(max_rho * (-bounds.lambda1 * t).exp() / rho0_max);
    }
    run.bounds = bounds;
    Ok(run)
}

/// One a priori bound checked against a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub pass: bool,
    /// Worst slack toward the bound (negative slack means a violation).
    pub worst_margin: f64,
    pub time_of_worst: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

const BOUND_TOL: f64 = 1e-6;

fn check_series(name: &str, series: impl Iterator<Item = (f64, f64)>) -> BoundCheck {
    // Items are (time, slack); the bound holds when slack >= -tolerance.
    let mut worst = f64::INFINITY;
    let mut t_worst = 0.0;
    for (t, slack) in series {
        if slack < worst {
            worst = slack;
            t_worst = t;
        }
    }
    BoundCheck {
        name: name.into(),
        pass: worst >= -BOUND_TOL,
        worst_margin: worst,
        time_of_worst: t_worst,
    }
}

/// Checks every a priori bound applicable to the verdict on the recorded
/// snapshots. The density envelope and slope lower bound require a
/// subcritical verdict; the slope upper bound holds unconditionally.
pub fn verify_bounds(run: &EnsembleRun, verdict: &crate::thresholds::ThresholdVerdict) -> Result<BoundReport> {
    let scn = &run.scenario;
    let lambda1 = run.bounds.lambda1;
    let rho0_max = scn.rho0.grid_max();
    let u0x_max = scn.u0x.grid_max();
    let mut checks = Vec::new();
    if verdict.verdict == Verdict::Subcritical {
        checks.push(check_series(
            "density envelope rho <= max(rho0) exp(lambda1 t)",
            run.bounds.times.iter().zip(&run.bounds.max_rho).map(|(&t, &rho)| {
                let cap = rho0_max * (lambda1 * t).exp();
                (t, (cap - rho) / cap.max(1.0))
            }),
        ));
        checks.push(check_series(
            "slope lower bound u_x >= -lambda1",
            run.bounds
                .times
                .iter()
                .zip(&run.bounds.min_ux)
                .map(|(&t, &ux)| (t, ux + lambda1)),
        ));
    }
    let (upper, name) = match &scn.kernel {
        None => (
            u0x_max.max(crate::thresholds::theta(scn.c2, scn.nu, scn.k)?),
            "slope upper bound u_x <= max(max u0x, Theta(c2, nu))",
        ),
        Some(kr) => (
            u0x_max.max(crate::thresholds::theta(scn.c2, scn.nu + kr.psi_max(), scn.k)?)
                + kr.psi_max()
                - kr.psi_min(),
            "slope upper bound u_x <= max(max u0x, Theta(c2, nu+psi_M)) + psi_M - psi_m",
        ),
    };
    checks.push(check_series(
        name,
        run.bounds
            .times
            .iter()
            .zip(&run.bounds.max_ux)
            .map(|(&t, &ux)| (t, upper - ux)),
    ));
    Ok(BoundReport { checks })
}

/// One probe of a threshold sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepProbe {
    pub theta: f64,
    pub global: bool,
    /// Breakdown time estimate when not global.
    pub t_estimate: Option<f64>,
}

/// Empirical threshold bracket plus the analytic classifier bounds for the
/// same family (where they exist).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub bracket: (f64, f64),
    pub theta_gs: Option<f64>,
    pub theta_ftb: Option<f64>,
    pub probes: Vec<SweepProbe>,
}

impl SweepResult {
    pub fn bracket_midpoint(&self) -> f64 {
        0.5 * (self.bracket.0 + self.bracket.1)
    }
}

/// Bisects a global-vs-breakdown probe to a bracket of width `tol`. The
/// endpoints must disagree; either orientation is accepted.
pub fn sweep_threshold(
    param: &str,
    lo: f64,
    hi: f64,
    tol: f64,
    mut probe: impl FnMut(f64) -> Result<SweepProbe>,
) -> Result<SweepResult> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidParam(format!(
            "need lo < hi and tol > 0, got [{lo}, {hi}], tol = {tol}"
        )));
    }
    let p_lo = probe(lo)?;
    let p_hi = probe(hi)?;
    if p_lo.global == p_hi.global {
        return Err(Error::Precondition(format!(
            "sweep endpoints agree (both {}): nothing to bracket in [{lo}, {hi}]",
            if p_lo.global { "global" } else { "breakdown" }
        )));
    }
    let mut probes = vec![p_lo.clone(), p_hi.clone()];
    let (mut a, mut b) = (lo, hi);
    let global_side_hi = p_hi.global;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let p = probe(mid)?;
        let mid_like_hi = p.global == global_side_hi;
        probes.push(p);
        if mid_like_hi {
            b = mid;
        } else {
            a = mid;
        }
    }
    probes.sort_by(|x, y| x.theta.total_cmp(&y.theta));
    Ok(SweepResult {
        param: param.into(),
        lo,
        hi,
        bracket: (a, b),
        theta_gs: None,
        theta_ftb: None,
        probes,
    })
}

/// Bisects the analytic classifier over a scenario family: returns
/// `(theta_ftb, theta_gs)`, the edges of the supercritical and subcritical
/// regions inside `[lo, hi]`. Expects supercritical at `lo` and subcritical
/// at `hi` (the attractive-case orientation).
pub fn classifier_bounds(
    family: &(dyn Fn(f64) -> Result<Scenario> + Sync),
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let verdict_at = |theta: f64| -> Result<Verdict> {
        Ok(classify_auto(&family(theta)?)?.verdict)
    };
    if verdict_at(lo)? != Verdict::Supercritical {
        return Err(Error::Precondition(format!(
            "family is not supercritical at theta = {lo}"
        )));
    }
    if verdict_at(hi)? != Verdict::Subcritical {
        return Err(Error::Precondition(format!(
            "family is not subcritical at theta = {hi}"
        )));
    }
    // Upper edge of the supercritical region.
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if verdict_at(mid)? == Verdict::Supercritical {
            a = mid;
        } else {
            b = mid;
        }
    }
    let theta_ftb = 0.5 * (a + b);
    // Lower edge of the subcritical region.
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if verdict_at(mid)? == Verdict::Subcritical {
            b = mid;
        } else {
            a = mid;
        }
    }
    let theta_gs = 0.5 * (a + b);
    Ok((theta_ftb, theta_gs))
}

/// Full scenario-family sweep: ensemble probes bisected to `tol`, with the
/// analytic classifier bounds attached.
pub fn sweep_scenario_family(
    param: &str,
    family: &(dyn Fn(f64) -> Result<Scenario> + Sync),
    lo: f64,
    hi: f64,
    tol: f64,
    n_chars: usize,
    config: &IntegratorConfig,
) -> Result<SweepResult> {
    let mut result = sweep_threshold(param, lo, hi, tol, |theta| {
        let scn = family(theta)?;
        let run = run_ensemble(&scn, n_chars, config)?;
        Ok(SweepProbe {
            theta,
            global: run.outcome.is_global(),
            t_estimate: match run.outcome {
                Outcome::Breakdown { t_estimate, .. } => Some(t_estimate),
                Outcome::GlobalToHorizon => None,
            },
        })
    })?;
    let (theta_ftb, theta_gs) = classifier_bounds(family, lo, hi, tol.min(1e-6))?;
    result.theta_ftb = Some(theta_ftb);
    result.theta_gs = Some(theta_gs);
    Ok(result)
}

/// Runs several scenarios' ensembles in parallel (sweep probes and
/// verification batches are independent).
pub fn run_ensembles_parallel(
    scns: &[Scenario],
    n_chars: usize,
    config: &IntegratorConfig,
) -> Result<Vec<EnsembleRun>> {
    scns.par_iter()
        .map(|scn| run_ensemble(scn, n_chars, config))
        .collect()
}

/// Writes the trajectory CSV `(t, alpha, x, u, E, rho, slope)`.
pub fn write_trajectory_csv<W: std::io::Write>(run: &EnsembleRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "alpha", "x", "u", "E", "rho", "slope"])?;
    let fmt = |v: f64| format!("{v:?}");
    for snap in 0..run.times.len() {
        for j in 0..run.n_chars {
            w.write_record([
                fmt(run.times[snap]),
                fmt(run.alphas[j]),
                fmt(run.field(snap, j, IX_X)),
                fmt(run.field(snap, j, IX_U)),
                fmt(run.field(snap, j, IX_E)),
                fmt(run.field(snap, j, IX_RHO)),
                fmt(run.field(snap, j, IX_SLOPE)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the sweep CSV `(theta, outcome, t_c)` with the horizon standing in
/// for global probes.
pub fn write_sweep_csv<W: std::io::Write>(result: &SweepResult, horizon: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "outcome", "t_c_or_horizon"])?;
    for p in &result.probes {
        w.write_record([
            format!("{:?}", p.theta),
            if p.global { "global" } else { "breakdown" }.to_string(),
            format!("{:?}", p.t_estimate.unwrap_or(horizon)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reconstructs the electric field from sorted characteristic positions and
/// masses (cumulative charge imbalance) and reports the worst deviation from
/// the evolved per-characteristic `E` at snapshot `snap`.
pub fn electric_field_consistency(run: &EnsembleRun, snap: usize) -> f64 {
    // E(x) - E(x_first) = sum of masses in (x_first, x] minus int c over the
    // same arc; compare against the evolved E differences.
    let n = run.n_chars;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        crate::scenario::wrap_torus(run.field(snap, a, IX_X))
            .total_cmp(&crate::scenario::wrap_torus(run.field(snap, b, IX_X)))
    });
    let first = order[0];
    let x_first = crate::scenario::wrap_torus(run.field(snap, first, IX_X));
    let e_first = run.field(snap, first, IX_E);
    let mut worst = 0.0f64;
    let mut mass_acc = 0.0;
    let mut prev_mass = run.masses[first];
    let bg = &run.scenario.background;
    let n_quad = 512;
    // Cumulative background integral from x_first, tabulated once.
    let c_int = |x: f64| {
        let span = x - x_first;
        let h = span / n_quad as f64;
        let mut s = 0.0;
        for i in 0..n_quad {
            s += bg.eval(x_first + (i as f64 + 0.5) * h);
        }
        s * h
    };
    for &j in order.iter().skip(1) {
        // Particles sit at the midpoints of their mass cells, so the charge
        // between two neighbors is the average of their masses.
        mass_acc += 0.5 * (prev_mass + run.masses[j]);
        prev_mass = run.masses[j];
        let x_j = crate::scenario::wrap_torus(run.field(snap, j, IX_X));
        let e_rec = e_first + mass_acc - c_int(x_j);
        worst = worst.max((run.field(snap, j, IX_E) - e_rec).abs());
    }
    worst
}

/// Convenience: run and classify in one step, for report assembly.
pub fn run_with_verdict(
    scn: &Scenario,
    n_chars: usize,
    config: &IntegratorConfig,
) -> Result<(EnsembleRun, crate::thresholds::ThresholdVerdict)> {
    let verdict = classify_auto(scn)?;
    let run = run_ensemble(scn, n_chars, config)?;
    Ok((run, verdict))
}

/// Formats a float so that parsing it back yields the identical bits.
pub fn roundtrip_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Kernel, PeriodicProfile, ProfileFamily};
    use approx::assert_abs_diff_eq;

    fn profile(f: ProfileFamily, n: usize) -> PeriodicProfile {
        PeriodicProfile::from_family(f, n).unwrap()
    }

    fn equilibrium_scenario(n: usize) -> Scenario {
        Scenario::new(
            -1.0,
            0.0,
            profile(ProfileFamily::Constant { value: 1.0 }, n),
            profile(ProfileFamily::Constant { value: 1.0 }, n),
            profile(ProfileFamily::Constant { value: 0.0 }, n),
            Some(profile(ProfileFamily::Constant { value: 0.0 }, n)),
            None,
            false,
        )
        .unwrap()
    }

    fn variable_scenario(nu: f64, u0x_offset: f64, kernel: Option<Kernel>) -> Scenario {
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
            profile(ProfileFamily::RaisedCosine { a: 1.0, b: 0.3 }, n),
            profile(ProfileFamily::Constant { value: 0.0 }, n),
            Some(profile(
                ProfileFamily::AffineSine {
                    a: u0x_offset,
                    b: 0.3,
                    phase: 0.0,
                },
                n,
            )),
            kernel,
            false,
        )
        .unwrap()
    }

    // Derivative-consistent data (u0x is the true derivative of u0), needed
    // by the Eulerian reconstruction checks. Perturbations are kept small:
    // zero-mean u0x means such data always sits at or past the threshold
    // lines, so only weak damped cases stay smooth on test horizons.
    fn consistent_scenario(nu: f64) -> Scenario {
        let n = 128;
        Scenario::new(
            -1.0,
            nu,
            profile(
                ProfileFamily::AffineSine {
                    a: 1.0,
                    b: 0.05,
                    phase: 0.0,
                },
                n,
            ),
            profile(ProfileFamily::RaisedCosine { a: 1.0, b: 0.02 }, n),
            profile(
                ProfileFamily::AffineSine {
                    a: 0.0,
                    b: 0.005,
                    phase: 0.0,
                },
                n,
            ),
            None,
            None,
            false,
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_run_is_global_and_static() {
        let scn = equilibrium_scenario(64);
        let cfg = IntegratorConfig::with_horizon(3.0);
        let run = run_ensemble(&scn, 32, &cfg).unwrap();
        assert_eq!(run.outcome, Outcome::GlobalToHorizon);
        let last = run.times.len() - 1;
        for j in 0..run.n_chars {
            assert_abs_diff_eq!(run.field(last, j, IX_RHO), 1.0, epsilon = 1e-8);
            assert_abs_diff_eq!(run.field(last, j, IX_U), 0.0, epsilon = 1e-8);
            assert_abs_diff_eq!(
                run.field(last, j, IX_X),
                run.alphas[j],
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn subcritical_run_respects_bounds() {
        // u0x well above the Theorem 2.2 lines: classifier says subcritical.
        let scn = variable_scenario(0.0, 1.2, None);
        let verdict = classify_auto(&scn).unwrap();
        assert_eq!(verdict.verdict, Verdict::Subcritical);
        let cfg = IntegratorConfig::with_horizon(10.0);
        let run = run_ensemble(&scn, 64, &cfg).unwrap();
        assert!(run.outcome.is_global());
        let report = verify_bounds(&run, &verdict).unwrap();
        assert!(report.all_pass(), "{report:?}");
        assert_eq!(report.checks.len(), 3);
    }

    #[test]
    fn supercritical_run_breaks_down() {
        let scn = variable_scenario(0.0, -1.5, None);
        let verdict = classify_auto(&scn).unwrap();
        assert_eq!(verdict.verdict, Verdict::Supercritical);
        let cfg = IntegratorConfig::with_horizon(30.0);
        let run = run_ensemble(&scn, 64, &cfg).unwrap();
        match run.outcome {
            Outcome::Breakdown { t_bracket, t_estimate, .. } => {
                assert!(t_bracket.0 <= t_estimate && t_estimate <= t_bracket.1);
                assert!(t_estimate < 30.0);
            }
            Outcome::GlobalToHorizon => panic!("expected breakdown"),
        }
        // The unconditional slope upper bound still holds on the way down.
        let report = verify_bounds(&run, &verdict).unwrap();
        assert!(report.all_pass(), "{report:?}");
        assert_eq!(report.checks.len(), 1);
    }

    #[test]
    fn crossing_only_on_breakdown_runs() {
        let sub = run_ensemble(
            &consistent_scenario(1.0),
            64,
            &IntegratorConfig::with_horizon(5.0),
        )
        .unwrap();
        assert!(sub.outcome.is_global());
        for snap in 0..sub.times.len() {
            assert!(sub.positions_monotone(snap), "crossing at t = {}", sub.times[snap]);
        }
        let sup = run_ensemble(
            &variable_scenario(0.0, -1.5, None),
            64,
            &IntegratorConfig::with_horizon(30.0),
        )
        .unwrap();
        assert!(!sup.outcome.is_global());
    }

    #[test]
    fn neutrality_reconstruction_stays_small() {
        let scn = consistent_scenario(1.0);
        let run = run_ensemble(&scn, 256, &IntegratorConfig::with_horizon(3.0)).unwrap();
        assert!(run.outcome.is_global());
        for snap in 0..run.times.len() {
            assert!(
                run.neutrality_residual(snap).abs() < 2e-3,
                "residual {} at t = {}",
                run.neutrality_residual(snap),
                run.times[snap]
            );
        }
    }

    #[test]
    fn electric_field_reconstruction_consistent() {
        let scn = consistent_scenario(1.0);
        let run = run_ensemble(&scn, 256, &IntegratorConfig::with_horizon(2.0)).unwrap();
        assert!(run.outcome.is_global());
        for snap in 0..run.times.len() {
            assert!(
                electric_field_consistency(&run, snap) < 5e-3,
                "deviation {} at t = {}",
                electric_field_consistency(&run, snap),
                run.times[snap]
            );
        }
    }

    #[test]
    fn energy_growth_bound_holds() {
        let scn = variable_scenario(0.5, -1.5, None);
        let run = run_ensemble(&scn, 64, &IntegratorConfig::with_horizon(10.0)).unwrap();
        let rate = 2.0 * (1.0 + scn.k.abs() + 2.0 * scn.nu + scn.c2);
        for snap in 0..run.times.len() {
            let t = run.times[snap];
            for j in 0..run.n_chars {
                let (x, u, e) = (
                    run.field(snap, j, IX_X),
                    run.field(snap, j, IX_U),
                    run.field(snap, j, IX_E),
                );
                let lhs = x * x + u * u + e * e;
                let a = run.alphas[j];
                let e0 = run.field(0, j, IX_E);
                let u0 = run.field(0, j, IX_U);
                let rhs = (a * a + u0 * u0 + e0 * e0) * (rate * t).exp();
                assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12, "t = {t}, char {j}");
            }
        }
    }

    #[test]
    fn run_rejects_tiny_ensembles() {
        let scn = equilibrium_scenario(64);
        assert!(run_ensemble(&scn, 8, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn sweep_rejects_agreeing_endpoints() {
        let err = sweep_threshold("theta", 0.0, 1.0, 1e-3, |theta| {
            Ok(SweepProbe {
                theta,
                global: true,
                t_estimate: None,
            })
        })
        .unwrap_err();
        assert!(err.to_string().contains("endpoints agree"));
    }

    #[test]
    fn sweep_brackets_a_known_crossing() {
        let result = sweep_threshold("theta", 0.0, 1.0, 1e-4, |theta| {
            Ok(SweepProbe {
                theta,
                global: theta > 0.37,
                t_estimate: None,
            })
        })
        .unwrap();
        assert!(result.bracket.0 <= 0.37 && 0.37 <= result.bracket.1);
        assert!(result.bracket.1 - result.bracket.0 <= 1e-4);
    }

    #[test]
    fn classifier_bounds_bracket_the_gap() {
        let family = |theta: f64| -> Result<Scenario> {
            Ok(variable_scenario(0.0, theta, None))
        };
        let (ftb, gs) = classifier_bounds(&family, -3.0, 3.0, 1e-6).unwrap();
        assert!(ftb < gs);
        let mid = variable_scenario(0.0, 0.5 * (ftb + gs), None);
        assert_eq!(classify_auto(&mid).unwrap().verdict, Verdict::Indeterminate);
    }

    #[test]
    fn trajectory_csv_roundtrips_floats() {
        let scn = equilibrium_scenario(64);
        let run = run_ensemble(&scn, 16, &IntegratorConfig::with_horizon(0.5)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&run, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(
            rd.headers().unwrap().iter().collect::<Vec<_>>(),
            vec!["t", "alpha", "x", "u", "E", "rho", "slope"]
        );
        let first = rd.records().next().unwrap().unwrap();
        let alpha: f64 = first[1].parse().unwrap();
        assert_eq!(alpha.to_bits(), run.alphas[0].to_bits());
    }

    #[test]
    fn zero_kernel_alignment_run_matches_plain_run() {
        let n = 128;
        let kernel = Kernel::new(
            profile(ProfileFamily::Constant { value: 0.0 }, n),
            None,
        )
        .unwrap();
        let plain = variable_scenario(0.3, 1.2, None);
        let aligned = variable_scenario(0.3, 1.2, Some(kernel));
        let cfg = IntegratorConfig {
            horizon: 3.0,
            ..IntegratorConfig::default()
        };
        let run_a = run_ensemble(&plain, 32, &cfg).unwrap();
        let run_b = run_ensemble(&aligned, 32, &cfg).unwrap();
        assert_eq!(run_a.times.len(), run_b.times.len());
        let last = run_a.times.len() - 1;
        for j in 0..32 {
            for comp in [IX_X, IX_U, IX_E, IX_RHO] {
                assert_abs_diff_eq!(
                    run_a.field(last, j, comp),
                    run_b.field(last, j, comp),
                    epsilon = 1e-8
                );
            }
            // Slope stores d vs G = d + nu; compare through ux().
            assert_abs_diff_eq!(run_a.ux(last, j), run_b.ux(last, j), epsilon = 1e-8);
        }
    }
}
