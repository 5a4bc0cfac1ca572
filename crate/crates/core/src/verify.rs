//! Self-verification suites. Each check exercises one falsifiable claim of
//! the toolkit (root identities, blow-up times, invariant regions,
//! comparison orderings, sharpness of the thresholds, a priori bounds,
//! reductions, closed forms, figure data) and reports pass/fail with a
//! one-line detail. The `verify` CLI subcommand and the acceptance test
//! target both run these.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::charode::{
    compare_lin2_vs_auxlin2, compare_nonlin_vs_aux, integrate, integrate_fixed, AlignBranch,
    AuxSystem, GammaChoice, IntegratorConfig, OdeSystem, Termination, IX_E, IX_RHO, IX_U, IX_X,
};
use crate::error::{Error, Result};
use crate::phase::{
    critical_point, direction_field, region_membership_pq, region_membership_rs, riccati_blowup,
    separatrix_point, solve_linear_pq, solve_linear_rs, tc_bound_pq, tc_bound_rs, vector_field,
    AuxParams, GridSpec, Plane, RiccatiOutcome,
};
use crate::scenario::{Kernel, PeriodicProfile, ProfileFamily, Scenario};
use crate::simulate::{
    run_ensemble, sweep_scenario_family, sweep_threshold, verify_bounds, SweepProbe,
};
use crate::thresholds::{classify_auto, omega, theta, RootPair, Verdict};

#[derive(Debug, Clone)]
pub struct CheckResult {
    /// Stable identifier, `AC1` through `AC10`.
    pub id: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:5} {} ({:.2}s): {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Roots,
    Regions,
    Comparison,
    Sharpness,
    Bounds,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roots" => Ok(Suite::Roots),
            "regions" => Ok(Suite::Regions),
            "comparison" => Ok(Suite::Comparison),
            "sharpness" => Ok(Suite::Sharpness),
            "bounds" => Ok(Suite::Bounds),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidParam(format!(
                "unknown suite '{other}' (expected roots|regions|comparison|sharpness|bounds|all)"
            ))),
        }
    }
}

fn timed(
    id: &str,
    name: &str,
    body: impl FnOnce() -> Result<(bool, String)>,
) -> CheckResult {
    let start = Instant::now();
    let (pass, detail) = match body() {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        id: id.into(),
        name: name.into(),
        pass,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs a suite and returns its checks in order.
pub fn run_suite(suite: Suite) -> Vec<CheckResult> {
    match suite {
        Suite::Roots => vec![check_root_identities(), check_riccati_blowup_time()],
        Suite::Regions => vec![
            check_invariant_regions(),
            check_closed_form_vs_integrator(),
            check_figure_data(),
        ],
        Suite::Comparison => vec![check_comparison_lemmas(), check_reductions()],
        Suite::Sharpness => vec![
            check_constant_background_sharpness(),
            check_variable_background_bracketing(),
        ],
        Suite::Bounds => vec![check_a_priori_bounds()],
        Suite::All => {
            let mut all = run_suite(Suite::Roots);
            all.extend(run_suite(Suite::Sharpness));
            all.extend(run_suite(Suite::Comparison));
            all.extend(run_suite(Suite::Regions));
            all.extend(run_suite(Suite::Bounds));
            all.sort_by(|a, b| {
                let num = |c: &CheckResult| c.id[2..].parse::<u32>().unwrap_or(0);
                num(a).cmp(&num(b))
            });
            all
        }
    }
}

fn profile(f: ProfileFamily, n: usize) -> Result<PeriodicProfile> {
    PeriodicProfile::from_family(f, n)
}

// ---------------------------------------------------------------------------
// AC1
// ---------------------------------------------------------------------------

pub fn check_root_identities() -> CheckResult {
    timed("AC1", "root identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let gamma: f64 = rng.gen_range(0.0..10.0);
            let beta: f64 = rng.gen_range(0.0..10.0);
            let k: f64 = rng.gen_range(-10.0..-0.1);
            let roots = RootPair::new(gamma, beta, k)?;
            let RootPair { lambda, mu, .. } = roots;
            let vieta_prod = (lambda * mu + k * gamma).abs();
            let vieta_diff = (lambda - mu - beta).abs();
            let res = roots.residual(-lambda).abs().max(roots.residual(mu).abs());
            worst = worst.max(vieta_prod).max(vieta_diff).max(res);
        }
        Ok((
            worst < 1e-12,
            format!("10000 samples, worst identity residual {worst:.3e} (tol 1e-12)"),
        ))
    })
}

// ---------------------------------------------------------------------------
// AC2
// ---------------------------------------------------------------------------

/// Independent oracle for the scalar Riccati blow-up time: fixed-step RK4 of
/// `xi' = -(xi + lambda)(xi - mu)` until `xi < -1e8`, with Richardson
/// refinement across a step halving. The tail below `-1e8` contributes less
/// than `1e-8` to the blow-up time.
fn riccati_crossing_oracle(xi0: f64, params: &AuxParams, dt: f64) -> f64 {
    let RootPair { lambda, mu, .. } = params.roots;
    let f = |xi: f64| -(xi + lambda) * (xi - mu);
    let mut t = 0.0;
    let mut xi = xi0;
    loop {
        let k1 = f(xi);
        let k2 = f(xi + 0.5 * dt * k1);
        let k3 = f(xi + 0.5 * dt * k2);
        let k4 = f(xi + dt * k3);
        let next = xi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() || next < -1e8 {
            // Linear interpolation to the threshold inside the step.
            let frac = if next.is_finite() {
                ((-1e8) - xi) / (next - xi)
            } else {
                0.5
            };
            return t + frac.clamp(0.0, 1.0) * dt;
        }
        xi = next;
        t += dt;
    }
}

pub fn check_riccati_blowup_time() -> CheckResult {
    timed("AC2", "Riccati blow-up time", || {
        let params = AuxParams::new(1.0, 0.0, -1.0)?;
        let analytic = 0.5 * 3f64.ln();
        let coarse = riccati_crossing_oracle(-2.0, &params, 1e-5);
        let fine = riccati_crossing_oracle(-2.0, &params, 5e-6);
        let oracle = fine + (fine - coarse) / 15.0;
        let closed = match riccati_blowup(-2.0, &params) {
            RiccatiOutcome::Blowup { t_c, .. } => t_c,
            RiccatiOutcome::Global { .. } => {
                return Ok((false, "classified global for xi0 = -2".into()))
            }
        };
        let err_closed = (closed - analytic).abs();
        let err_oracle = (oracle - analytic).abs();
        Ok((
            err_closed < 1e-12 && err_oracle < 1e-4,
            format!(
                "t_c = ln(3)/2: closed form off by {err_closed:.3e}, \
                 integration oracle off by {err_oracle:.3e} (tol 1e-4)"
            ),
        ))
    })
}

// ---------------------------------------------------------------------------
// AC3
// ---------------------------------------------------------------------------

/// Global-vs-blowup probe of the constant-background single-characteristic
/// dynamics, which coincide with the auxiliary system at `gamma = c`.
fn aux_probe(params: &AuxParams, eta0: f64, xi0: f64, horizon: f64) -> Result<bool> {
    let sys = AuxSystem { params: *params };
    let cfg = IntegratorConfig::with_horizon(horizon);
    let traj = integrate(&sys, &[eta0, xi0], &cfg)?;
    match traj.termination {
        Termination::HorizonReached => Ok(true),
        Termination::BlowupDetected { .. } => Ok(false),
        Termination::StepUnderflow { t } => Err(Error::Integration(format!(
            "step underflow at t = {t} in threshold probe"
        ))),
    }
}

pub fn check_constant_background_sharpness() -> CheckResult {
    timed("AC3", "constant-background sharpness", || {
        let mut worst = 0.0f64;
        let mut cases = 0;
        for (c, nu, k) in [(1.0, 0.0, -1.0), (1.0, 1.0, -1.0), (2.0, 0.5, -2.0)] {
            let params = AuxParams::new(c, nu, k)?;
            for rho0 in [0.5, 1.0, 2.0] {
                let analytic = omega(c, nu, k)? / c * (rho0 - c);
                let result = sweep_threshold(
                    "d0",
                    analytic - 1.0,
                    analytic + 1.0,
                    1e-3,
                    |theta| {
                        Ok(SweepProbe {
                            theta,
                            global: aux_probe(&params, rho0, theta, 50.0)?,
                            t_estimate: None,
                        })
                    },
                )?;
                let err = (result.bracket_midpoint() - analytic).abs();
                worst = worst.max(err);
                cases += 1;
            }
        }
        Ok((
            worst < 5e-3,
            format!("{cases} (c,nu,k,rho0) cases, worst |empirical - analytic| = {worst:.3e} (tol 5e-3)"),
        ))
    })
}

// ---------------------------------------------------------------------------
// AC4
// ---------------------------------------------------------------------------

fn variable_family(nu: f64, theta: f64) -> Result<Scenario> {
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
        )?,
        profile(ProfileFamily::RaisedCosine { a: 1.0, b: 0.3 }, n)?,
        profile(ProfileFamily::Constant { value: 0.0 }, n)?,
        Some(profile(
            ProfileFamily::AffineSine {
                a: theta,
                b: 0.3,
                phase: 0.0,
            },
            n,
        )?),
        None,
        false,
    )
}

pub fn check_variable_background_bracketing() -> CheckResult {
    timed("AC4", "variable-background bracketing", || {
        let mut detail = String::new();
        let mut pass = true;
        for nu in [0.0, 1.0] {
            let family = move |theta: f64| variable_family(nu, theta);
            let cfg = IntegratorConfig::with_horizon(30.0);
            let result =
                sweep_scenario_family("u0x offset", &family, -3.0, 3.0, 1e-3, 128, &cfg)?;
            let ftb = result.theta_ftb.unwrap();
            let gs = result.theta_gs.unwrap();
            let (a, b) = result.bracket;
            let inside = a >= ftb - 1e-3 && b <= gs + 1e-3;
            pass &= inside;
            detail.push_str(&format!(
                "nu = {nu}: bracket [{a:.4}, {b:.4}] vs [theta_FTB, theta_GS] = \
                 [{ftb:.4}, {gs:.4}]{}; ",
                if inside { "" } else { " OUTSIDE" }
            ));
        }
        Ok((pass, detail.trim_end_matches("; ").to_string()))
    })
}

// ---------------------------------------------------------------------------
// AC5
// ---------------------------------------------------------------------------

fn comparison_scenario() -> Result<Scenario> {
    let n = 128;
    Scenario::new(
        -1.0,
        0.4,
        profile(
            ProfileFamily::AffineSine {
                a: 1.0,
                b: 0.3,
                phase: 0.0,
            },
            n,
        )?,
        profile(ProfileFamily::RaisedCosine { a: 1.0, b: 0.3 }, n)?,
        profile(ProfileFamily::Constant { value: 0.0 }, n)?,
        Some(profile(ProfileFamily::Constant { value: 0.2 }, n)?),
        None,
        false,
    )
}

fn alignment_comparison_scenario() -> Result<Scenario> {
    let n = 128;
    Scenario::new(
        -1.0,
        0.4,
        profile(
            ProfileFamily::AffineSine {
                a: 1.0,
                b: 0.3,
                phase: 0.0,
            },
            n,
        )?,
        profile(ProfileFamily::RaisedCosine { a: 1.0, b: 0.3 }, n)?,
        profile(ProfileFamily::Constant { value: 0.0 }, n)?,
        Some(profile(ProfileFamily::Constant { value: 0.2 }, n)?),
        Some(Kernel::new(
            profile(ProfileFamily::RaisedCosine { a: 1.0, b: 0.5 }, n)?,
            None,
        )?),
        false,
    )
}

pub fn check_comparison_lemmas() -> CheckResult {
    timed("AC5", "comparison lemmas", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
        let scn = comparison_scenario()?;
        let mut violations = 0usize;
        // Nonlinear comparison, both branches, 100 admissible pairs each.
        for trial in 0..200 {
            let min_branch = trial < 100;
            let alpha: f64 = rng.gen_range(-0.5..0.5);
            let (rho0, d0, eta0, xi0) = if min_branch {
                let eta0: f64 = rng.gen_range(0.2..3.0);
                let rho0 = eta0 * rng.gen_range(0.1..0.95);
                let xi0: f64 = rng.gen_range(-1.5..1.5);
                let d0 = xi0 + rng.gen_range(0.05..1.5);
                (rho0, d0, eta0, xi0)
            } else {
                let rho0: f64 = rng.gen_range(0.2..3.0);
                let eta0 = rho0 * rng.gen_range(0.1..0.95);
                let d0: f64 = rng.gen_range(-1.5..1.5);
                let xi0 = d0 + rng.gen_range(0.05..1.5);
                (rho0, d0, eta0, xi0)
            };
            let choice = if min_branch {
                GammaChoice::MinC
            } else {
                GammaChoice::MaxC
            };
            let rep =
                compare_nonlin_vs_aux(&scn, alpha, rho0, d0, eta0, xi0, choice, 3.0, 1e-3)?;
            if !rep.held {
                violations += 1;
            }
        }
        // Linear comparison along an alignment ensemble, both branches.
        let align = alignment_comparison_scenario()?;
        for branch in [AlignBranch::C1PsiMax, AlignBranch::C2PsiMin] {
            let probes: Vec<((f64, f64), (f64, f64))> = (0..100)
                .map(|_| match branch {
                    AlignBranch::C1PsiMax => {
                        let q0: f64 = rng.gen_range(0.1..2.0);
                        let s0 = q0 + rng.gen_range(0.01..1.0);
                        let p0: f64 = rng.gen_range(-1.0..1.0);
                        let w0 = p0 + rng.gen_range(0.01..1.0);
                        ((w0, s0), (p0, q0))
                    }
                    AlignBranch::C2PsiMin => {
                        let s0: f64 = rng.gen_range(0.1..2.0);
                        let q0 = s0 + rng.gen_range(0.01..1.0);
                        let p0: f64 = rng.gen_range(-1.0..1.0);
                        let w0 = p0 - rng.gen_range(0.01..1.0);
                        ((w0, s0), (p0, q0))
                    }
                })
                .collect();
            let reports = compare_lin2_vs_auxlin2(&align, &probes, branch, 48, 3.0, 1e-3)?;
            violations += reports.iter().filter(|r| !r.held).count();
        }
        Ok((
            violations == 0,
            format!("400 admissible pairs across 4 branches, {violations} ordering violations"),
        ))
    })
}

// ---------------------------------------------------------------------------
// AC6
// ---------------------------------------------------------------------------

pub fn check_invariant_regions() -> CheckResult {
    timed("AC6", "invariant regions", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
        let param_sets = [
            AuxParams::new(1.0, 3.0, -1.0)?,
            AuxParams::new(1.0, 0.0, -1.0)?,
            AuxParams::new(2.0, 1.5, -0.5)?,
            AuxParams::new(0.5, 2.0, -2.0)?,
        ];
        let mut escaped = 0usize;
        let mut missed_crossing = 0usize;
        for trial in 0..1000 {
            let p = &param_sets[trial % param_sets.len()];
            let lambda = p.roots.lambda;
            // Inside Sigma_gamma.
            let s0: f64 = rng.gen_range(0.001..3.0);
            let r0 = lambda / p.gamma * (1.0 - p.gamma * s0) + rng.gen_range(0.0..3.0);
            for t in [0.1, 1.0, 10.0] {
                let st = solve_linear_rs(r0, s0, p, t)?.coords;
                if !region_membership_rs(st[0], st[1], p) {
                    escaped += 1;
                }
            }
            // Inside Sigma_{gamma,beta}.
            let q0: f64 = rng.gen_range(0.001..3.0);
            let p0 = lambda / p.gamma - p.roots.mu * q0 + rng.gen_range(0.0..3.0);
            for t in [0.1, 1.0, 10.0] {
                let st = solve_linear_pq(p0, q0, p, t)?.coords;
                if !region_membership_pq(st[0], st[1], p) {
                    escaped += 1;
                }
            }
            // Outside, strictly below the separatrix: the ordinate must cross
            // zero no later than the analytic bound.
            let s0: f64 = rng.gen_range(0.001..3.0);
            let r0 = lambda / p.gamma * (1.0 - p.gamma * s0) - rng.gen_range(0.01..3.0);
            let bound = tc_bound_rs(r0, s0, p)?;
            if solve_linear_rs(r0, s0, p, bound)?.coords[1] > 1e-9 {
                missed_crossing += 1;
            }
            let q0: f64 = rng.gen_range(0.001..3.0);
            let p0 = lambda / p.gamma - p.roots.mu * q0 - rng.gen_range(0.01..3.0);
            let bound = tc_bound_pq(p0, q0, p)?;
            if solve_linear_pq(p0, q0, p, bound)?.coords[1] > 1e-9 {
                missed_crossing += 1;
            }
        }
        Ok((
            escaped == 0 && missed_crossing == 0,
            format!(
                "1000 states per side and plane: {escaped} region escapes, \
                 {missed_crossing} crossings after the tc bound"
            ),
        ))
    })
}

// ---------------------------------------------------------------------------
// AC7
// ---------------------------------------------------------------------------

/// Builds a subcritical scenario by raising a constant `u0x` offset until
/// the classifier accepts it.
fn raise_to_subcritical(
    build: impl Fn(f64) -> Result<Scenario>,
) -> Result<Scenario> {
    let mut offset = 0.5;
    for _ in 0..12 {
        let scn = build(offset)?;
        if classify_auto(&scn)?.verdict == Verdict::Subcritical {
            return Ok(scn);
        }
        offset *= 2.0;
    }
    Err(Error::Precondition(
        "could not reach a subcritical verdict by raising u0x".into(),
    ))
}

/// The 20 regression scenarios behind the a priori bound checks: 10 without
/// kernel, 10 with, all verified subcritical at construction.
pub fn shipped_subcritical_scenarios() -> Result<Vec<Scenario>> {
    let n = 128;
    let mut out = Vec::with_capacity(20);
    let make = |nu: f64,
                cb: f64,
                rb: f64,
                u0x_b: f64,
                kernel: Option<ProfileFamily>|
     -> Result<Scenario> {
        raise_to_subcritical(|offset| {
            Scenario::new(
                -1.0,
                nu,
                profile(
                    ProfileFamily::AffineSine {
                        a: 1.0,
                        b: cb,
                        phase: 0.0,
                    },
                    n,
                )?,
                profile(ProfileFamily::RaisedCosine { a: 1.0, b: rb }, n)?,
                profile(ProfileFamily::Constant { value: 0.0 }, n)?,
                Some(profile(
                    ProfileFamily::AffineSine {
                        a: offset,
                        b: u0x_b,
                        phase: 0.0,
                    },
                    n,
                )?),
                kernel
                    .clone()
                    .map(|f| Kernel::new(profile(f, n)?, None))
                    .transpose()?,
                false,
            )
        })
    };
    let plain_cases: [(f64, f64, f64, f64); 10] = [
        (0.0, 0.3, 0.3, 0.3),
        (0.5, 0.3, 0.3, 0.3),
        (1.0, 0.3, 0.3, 0.3),
        (2.0, 0.3, 0.3, 0.3),
        (0.0, 0.1, 0.2, 0.1),
        (0.5, 0.1, 0.4, 0.2),
        (1.0, 0.4, 0.1, 0.0),
        (1.5, 0.2, 0.2, 0.5),
        (0.0, 0.05, 0.05, 0.05),
        (3.0, 0.3, 0.5, 0.3),
    ];
    for (nu, cb, rb, ub) in plain_cases {
        out.push(make(nu, cb, rb, ub, None)?);
    }
    let kernels: [ProfileFamily; 5] = [
        ProfileFamily::Constant { value: 0.5 },
        ProfileFamily::Constant { value: 1.5 },
        ProfileFamily::RaisedCosine { a: 1.0, b: 0.5 },
        ProfileFamily::RaisedCosine { a: 0.5, b: 0.5 },
        ProfileFamily::RaisedCosine { a: 2.0, b: 1.0 },
    ];
    let kernel_cases: [(f64, f64, f64, f64); 10] = [
        (0.0, 0.3, 0.3, 0.3),
        (1.0, 0.3, 0.3, 0.3),
        (0.0, 0.1, 0.2, 0.1),
        (0.5, 0.2, 0.4, 0.2),
        (2.0, 0.3, 0.1, 0.0),
        (0.0, 0.3, 0.3, 0.5),
        (1.5, 0.1, 0.1, 0.1),
        (0.5, 0.4, 0.2, 0.3),
        (0.0, 0.05, 0.05, 0.05),
        (1.0, 0.2, 0.5, 0.2),
    ];
    for (i, (nu, cb, rb, ub)) in kernel_cases.into_iter().enumerate() {
        out.push(make(nu, cb, rb, ub, Some(kernels[i % kernels.len()].clone()))?);
    }
    Ok(out)
}

pub fn check_a_priori_bounds() -> CheckResult {
    timed("AC7", "a priori bounds", || {
        let scns = shipped_subcritical_scenarios()?;
        let mut failures = Vec::new();
        let mut worst = f64::INFINITY;
        for (i, scn) in scns.iter().enumerate() {
            let verdict = classify_auto(scn)?;
            if verdict.verdict != Verdict::Subcritical {
                failures.push(format!("scenario {i} not subcritical"));
                continue;
            }
            let (n_chars, horizon) = if scn.kernel.is_some() {
                (48, 15.0)
            } else {
                (128, 30.0)
            };
            let run = run_ensemble(scn, n_chars, &IntegratorConfig::with_horizon(horizon))?;
            if !run.outcome.is_global() {
                failures.push(format!("scenario {i} broke down"));
                continue;
            }
            let report = verify_bounds(&run, &verdict)?;
            for check in &report.checks {
                worst = worst.min(check.worst_margin);
                if !check.pass {
                    failures.push(format!("scenario {i}: {}", check.name));
                }
            }
        }
        Ok((
            failures.is_empty(),
            if failures.is_empty() {
                format!("20 subcritical scenarios, all bounds hold (worst margin {worst:.3e})")
            } else {
                failures.join("; ")
            },
        ))
    })
}

// ---------------------------------------------------------------------------
// AC8
// ---------------------------------------------------------------------------

pub fn check_reductions() -> CheckResult {
    timed("AC8", "reductions", || {
        let n = 128;
        // psi = 0 kernel vs no kernel, field by field.
        let build = |kernel: Option<Kernel>| -> Result<Scenario> {
            Scenario::new(
                -1.0,
                0.3,
                profile(
                    ProfileFamily::AffineSine {
                        a: 1.0,
                        b: 0.3,
                        phase: 0.0,
                    },
                    n,
                )?,
                profile(ProfileFamily::RaisedCosine { a: 1.0, b: 0.3 }, n)?,
                profile(ProfileFamily::Constant { value: 0.0 }, n)?,
                Some(profile(ProfileFamily::Constant { value: 1.2 }, n)?),
                kernel,
                false,
            )
        };
        let plain = build(None)?;
        let zero_kernel = build(Some(Kernel::new(
            profile(ProfileFamily::Constant { value: 0.0 }, n)?,
            None,
        )?))?;
        let cfg = IntegratorConfig::with_horizon(5.0);
        let run_a = run_ensemble(&plain, 32, &cfg)?;
        let run_b = run_ensemble(&zero_kernel, 32, &cfg)?;
        if run_a.times.len() != run_b.times.len() {
            return Ok((false, "snapshot grids diverged".into()));
        }
        let mut worst_field = 0.0f64;
        for snap in 0..run_a.times.len() {
            for j in 0..32 {
                for comp in [IX_X, IX_U, IX_E, IX_RHO] {
                    worst_field = worst_field
                        .max((run_a.field(snap, j, comp) - run_b.field(snap, j, comp)).abs());
                }
                worst_field = worst_field.max((run_a.ux(snap, j) - run_b.ux(snap, j)).abs());
            }
        }
        // Constant-psi classification vs the corollary formula.
        let psi0 = 0.7;
        let with_const_kernel = Scenario::new(
            -1.0,
            0.3,
            profile(
                ProfileFamily::AffineSine {
                    a: 1.0,
                    b: 0.3,
                    phase: 0.0,
                },
                n,
            )?,
            profile(ProfileFamily::RaisedCosine { a: 1.0, b: 0.3 }, n)?,
            profile(ProfileFamily::Constant { value: 0.0 }, n)?,
            Some(profile(ProfileFamily::Constant { value: 1.2 }, n)?),
            Some(Kernel::new(
                profile(ProfileFamily::Constant { value: psi0 }, n)?,
                None,
            )?),
            false,
        )?;
        let verdict = classify_auto(&with_const_kernel)?;
        // Corollary form: the alignment lines with psi* rho = psi0 and
        // beta = nu + psi0.
        let (c1, nu) = (with_const_kernel.c1, with_const_kernel.nu);
        let lam = omega(c1, nu + psi0, -1.0)?;
        let th = theta(c1, nu + psi0, -1.0)?;
        let mut corollary_margin = f64::INFINITY;
        for i in 0..n {
            let x = with_const_kernel.u0x.grid_x(i);
            let line = lam * with_const_kernel.rho0.eval(x) / c1 - th - nu - psi0;
            corollary_margin = corollary_margin.min(with_const_kernel.u0x.eval(x) - line);
        }
        let margin_err = (verdict.gs_margin - corollary_margin).abs();
        Ok((
            worst_field < 1e-8 && margin_err < 1e-12,
            format!(
                "psi=0 run deviation {worst_field:.3e} (tol 1e-8); constant-psi GS margin \
                 vs corollary formula off by {margin_err:.3e} (tol 1e-12)"
            ),
        ))
    })
}

// ---------------------------------------------------------------------------
// AC9
// ---------------------------------------------------------------------------

struct LinearPlane {
    plane: Plane,
    params: AuxParams,
}

impl OdeSystem for LinearPlane {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        dydt.copy_from_slice(&vector_field(self.plane, &self.params, y[0], y[1]));
    }
}

pub fn check_closed_form_vs_integrator() -> CheckResult {
    timed("AC9", "closed form vs integrator", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA9);
        let mut worst = 0.0f64;
        for (plane, params) in [
            (Plane::Rs, AuxParams::new(1.0, 3.0, -1.0)?),
            (Plane::Pq, AuxParams::new(1.0, 1.5, -1.0)?),
        ] {
            for _ in 0..100 {
                let a0: f64 = rng.gen_range(-2.0..2.0);
                let b0: f64 = rng.gen_range(-2.0..2.0);
                let sys = LinearPlane { plane, params };
                let traj = integrate_fixed(&sys, &[a0, b0], 1e-3, 5.0, 250);
                for (t, st) in traj.times.iter().zip(&traj.states) {
                    let exact = match plane {
                        Plane::Rs | Plane::Ws => solve_linear_rs(a0, b0, &params, *t)?.coords,
                        Plane::Pq => solve_linear_pq(a0, b0, &params, *t)?.coords,
                    };
                    worst = worst
                        .max((st[0] - exact[0]).abs())
                        .max((st[1] - exact[1]).abs());
                }
            }
        }
        Ok((
            worst < 1e-8,
            format!("200 random states, max |RK4 - eigen solution| = {worst:.3e} (tol 1e-8)"),
        ))
    })
}

// ---------------------------------------------------------------------------
// AC10
// ---------------------------------------------------------------------------

pub fn check_figure_data() -> CheckResult {
    timed("AC10", "figure direction-field data", || {
        let mut worst_cp = 0.0f64;
        let mut worst_cross = 0.0f64;
        for (plane, params) in [
            (Plane::Rs, AuxParams::new(1.0, 3.0, -1.0)?),
            (Plane::Pq, AuxParams::new(1.0, 1.5, -1.0)?),
        ] {
            let grid = GridSpec::new((-4.0, 4.0), (0.0, 4.0), 21, 21)?;
            let field = direction_field(plane, &params, &grid)?;
            if field.nodes.is_empty() || field.separatrix.len() < 2 {
                return Ok((false, "empty direction-field export".into()));
            }
            let cp = critical_point(plane, &params);
            let v = vector_field(plane, &params, cp[0], cp[1]);
            worst_cp = worst_cp.max(v[0].abs()).max(v[1].abs());
            // Separatrix tangent from two of its points.
            let p0 = separatrix_point(plane, &params, 0.5);
            let p1 = separatrix_point(plane, &params, 1.5);
            let tangent = [p1[0] - p0[0], p1[1] - p0[1]];
            let tnorm = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
            for &pt in &field.separatrix {
                let v = vector_field(plane, &params, pt[0], pt[1]);
                let vnorm = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if vnorm > 1e-14 {
                    let cross = (v[0] * tangent[1] - v[1] * tangent[0]).abs() / (vnorm * tnorm);
                    worst_cross = worst_cross.max(cross);
                }
            }
        }
        Ok((
            worst_cp < 1e-12 && worst_cross < 1e-12,
            format!(
                "critical-point speed {worst_cp:.3e}, separatrix normalized cross \
                 product {worst_cross:.3e} (tol 1e-12)"
            ),
        ))
    })
}
