//! Root functions and analytic critical-threshold classifiers.
//!
//! The two root functions
//! `Omega(gamma, beta) = (beta + sqrt(beta^2 - 4*k*gamma)) / 2` and
//! `Theta(gamma, beta) = (-beta + sqrt(beta^2 - 4*k*gamma)) / 2`
//! are nonnegative for `k < 0`, and `-Omega`, `Theta` are the two roots of
//! `z^2 + beta*z + k*gamma = 0`. Every classifier reduces to pointwise grid
//! inequalities between the initial slope `u0x` and lines built from these
//! roots at the background extrema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

fn check_root_args(gamma: f64, beta: f64, k: f64) -> Result<()> {
    if !(k < 0.0) {
        return Err(Error::InvalidParam(format!(
            "root functions require k < 0, got k = {k}"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParam(format!("gamma must be >= 0, got {gamma}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidParam(format!("beta must be >= 0, got {beta}")));
    }
    Ok(())
}

/// `Omega(gamma, beta)`: the magnitude of the negative root of
/// `z^2 + beta*z + k*gamma`.
pub fn omega(gamma: f64, beta: f64, k: f64) -> Result<f64> {
    check_root_args(gamma, beta, k)?;
    Ok((beta + (beta * beta - 4.0 * k * gamma).sqrt()) / 2.0)
}

/// `Theta(gamma, beta)`: the nonnegative root of `z^2 + beta*z + k*gamma`.
pub fn theta(gamma: f64, beta: f64, k: f64) -> Result<f64> {
    check_root_args(gamma, beta, k)?;
    Ok((-beta + (beta * beta - 4.0 * k * gamma).sqrt()) / 2.0)
}

/// Both roots for a parameter triple, carrying the Vieta identities
/// `lambda*mu = -k*gamma` and `lambda - mu = beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
    pub beta: f64,
    pub k: f64,
}

impl RootPair {
    pub fn new(gamma: f64, beta: f64, k: f64) -> Result<Self> {
        Ok(Self {
            lambda: omega(gamma, beta, k)?,
            mu: theta(gamma, beta, k)?,
            gamma,
            beta,
            k,
        })
    }

    /// Residual of `z^2 + beta*z + k*gamma` at `z`.
    pub fn residual(&self, z: f64) -> f64 {
        z * z + self.beta * z + self.k * self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Subcritical,
    Supercritical,
    Indeterminate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Subcritical => write!(f, "subcritical"),
            Verdict::Supercritical => write!(f, "supercritical"),
            Verdict::Indeterminate => write!(f, "indeterminate"),
        }
    }
}

/// Grid point witnessing the supercritical inequality.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Witness {
    pub index: usize,
    pub x: f64,
    pub u0x: f64,
    /// The breakdown line value the slope fell below.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdVerdict {
    pub verdict: Verdict,
    /// Named constants used by the tested inequalities.
    pub constants: BTreeMap<String, f64>,
    pub witness: Option<Witness>,
    /// Minimal slack of the tested inequality over the grid (negative for
    /// supercritical data).
    pub margin: f64,
    /// Minimal slack of the global-solution inequality.
    pub gs_margin: f64,
    /// Minimal slack of the breakdown inequality.
    pub ftb_margin: f64,
    /// Minimal pointwise distance between the two threshold lines; width of
    /// the indeterminate band (zero for a sharp classifier).
    pub gap_width: f64,
    pub grid_size: usize,
}

/// Shared scan: grid-pointwise slack of `u0x` against the subcritical and
/// supercritical lines.
fn scan_grid<FG, FF>(scn: &Scenario, gs_line: FG, ftb_line: FF) -> (f64, f64, f64, Option<Witness>)
where
    FG: Fn(usize) -> f64,
    FF: Fn(usize) -> f64,
{
    let mut gs_margin = f64::INFINITY;
    let mut ftb_margin = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut witness: Option<Witness> = None;
    for i in 0..scn.n {
        let d0 = scn.u0x.samples()[i];
        let gs = gs_line(i);
        let ftb = ftb_line(i);
        gs_margin = gs_margin.min(d0 - gs);
        gap = gap.min(gs - ftb);
        let slack = d0 - ftb;
        if slack < ftb_margin {
            ftb_margin = slack;
            if slack < 0.0 {
                witness = Some(Witness {
                    index: i,
                    x: scn.u0x.grid_x(i),
                    u0x: d0,
                    bound: ftb,
                });
            }
        }
    }
    (gs_margin, ftb_margin, gap, witness)
}

fn build_verdict(
    scn: &Scenario,
    constants: BTreeMap<String, f64>,
    gs_margin: f64,
    ftb_margin: f64,
    gap_width: f64,
    witness: Option<Witness>,
) -> ThresholdVerdict {
    let (verdict, margin, witness) = if gs_margin > 0.0 {
        (Verdict::Subcritical, gs_margin, None)
    } else if ftb_margin < 0.0 {
        (Verdict::Supercritical, ftb_margin, witness)
    } else {
        (Verdict::Indeterminate, gs_margin, None)
    };
    ThresholdVerdict {
        verdict,
        constants,
        witness,
        margin,
        gs_margin,
        ftb_margin,
        gap_width,
        grid_size: scn.n,
    }
}

/// Classifier for the system without alignment.
///
/// Subcritical iff `u0x(x) > (lambda1/c1)(rho0(x) - c1)` at every grid point
/// with `lambda1 = Omega(c1, nu)`; supercritical iff some grid point has
/// `u0x(x) < (Omega(c2, nu)/c2)(rho0(x) - c2)`; indeterminate otherwise.
pub fn classify_no_alignment(scn: &Scenario) -> Result<ThresholdVerdict> {
    let lambda1 = omega(scn.c1, scn.nu, scn.k)?;
    let lambda2 = omega(scn.c2, scn.nu, scn.k)?;
    let theta2 = theta(scn.c2, scn.nu, scn.k)?;
    let mut constants = BTreeMap::new();
    constants.insert("lambda1".into(), lambda1);
    constants.insert("lambda2".into(), lambda2);
    constants.insert("theta_c2_nu".into(), theta2);

    let (gs_margin, ftb_margin, gap, witness) = scan_grid(
        scn,
        |i| lambda1 / scn.c1 * (scn.rho0.samples()[i] - scn.c1),
        |i| lambda2 / scn.c2 * (scn.rho0.samples()[i] - scn.c2),
    );
    Ok(build_verdict(scn, constants, gs_margin, ftb_margin, gap, witness))
}

/// Sharp classifier for a constant background: global existence holds iff
/// `u0x(x) >= (Omega(c, nu)/c)(rho0(x) - c)` everywhere (non-strict), so the
/// verdict is never indeterminate.
pub fn classify_constant_background(scn: &Scenario) -> Result<ThresholdVerdict> {
    if !scn.background_is_constant() {
        return Err(Error::Precondition(format!(
            "background not constant: max c - min c = {:.3e}",
            scn.c2 - scn.c1
        )));
    }
    let c = scn.c1;
    let lam = omega(c, scn.nu, scn.k)?;
    let mu = theta(c, scn.nu, scn.k)?;
    let mut constants = BTreeMap::new();
    constants.insert("omega_c_nu".into(), lam);
    constants.insert("theta_c_nu".into(), mu);

    let mut margin = f64::INFINITY;
    let mut witness: Option<Witness> = None;
    for i in 0..scn.n {
        let d0 = scn.u0x.samples()[i];
        let line = lam / c * (scn.rho0.samples()[i] - c);
        let slack = d0 - line;
        if slack < margin {
            margin = slack;
            if slack < 0.0 {
                witness = Some(Witness {
                    index: i,
                    x: scn.u0x.grid_x(i),
                    u0x: d0,
                    bound: line,
                });
            }
        }
    }
    let verdict = if margin >= 0.0 {
        Verdict::Subcritical
    } else {
        Verdict::Supercritical
    };
    Ok(ThresholdVerdict {
        verdict,
        constants,
        witness: if verdict == Verdict::Supercritical {
            witness
        } else {
            None
        },
        margin,
        gs_margin: margin,
        ftb_margin: margin,
        gap_width: 0.0,
        grid_size: scn.n,
    })
}

/// Classifier for the alignment system.
///
/// Subcritical iff
/// `u0x(x) > lambda_M*rho0(x)/c1 - Theta(c1, nu+psi_M) - nu - (psi*rho0)(x)`
/// everywhere, with `lambda_M = Omega(c1, nu+psi_M)`; supercritical iff some
/// grid point has
/// `u0x(x) < Omega(c2, nu+psi_m)*rho0(x)/c2 - Theta(c2, nu+psi_m) - nu - (psi*rho0)(x)`.
pub fn classify_alignment(scn: &Scenario) -> Result<ThresholdVerdict> {
    let kernel = scn
        .kernel
        .as_ref()
        .ok_or_else(|| Error::Precondition("alignment classifier requires a kernel".into()))?;
    let psi_m = kernel.psi_min();
    let psi_mx = kernel.psi_max();
    let lambda_big = omega(scn.c1, scn.nu + psi_mx, scn.k)?;
    let mu_big = theta(scn.c1, scn.nu + psi_mx, scn.k)?;
    let lambda_small = omega(scn.c2, scn.nu + psi_m, scn.k)?;
    let mu_small = theta(scn.c2, scn.nu + psi_m, scn.k)?;
    let mut constants = BTreeMap::new();
    constants.insert("lambda_M".into(), lambda_big);
    constants.insert("mu_M".into(), mu_big);
    constants.insert("lambda_m".into(), lambda_small);
    constants.insert("mu_m".into(), mu_small);
    constants.insert("theta_c2_nu_psiM".into(), theta(scn.c2, scn.nu + psi_mx, scn.k)?);
    constants.insert("psi_min".into(), psi_m);
    constants.insert("psi_max".into(), psi_mx);

    let conv: Vec<f64> = (0..scn.n)
        .map(|i| scn.psi_conv_rho0(scn.rho0.grid_x(i)))
        .collect::<Result<_>>()?;

    let (gs_margin, ftb_margin, gap, witness) = scan_grid(
        scn,
        |i| lambda_big * scn.rho0.samples()[i] / scn.c1 - mu_big - scn.nu - conv[i],
        |i| lambda_small * scn.rho0.samples()[i] / scn.c2 - mu_small - scn.nu - conv[i],
    );
    Ok(build_verdict(scn, constants, gs_margin, ftb_margin, gap, witness))
}

/// Dispatches to the most specific applicable classifier: alignment when a
/// kernel is present, the sharp constant-background classifier when the
/// background is constant, the variable-background classifier otherwise.
pub fn classify_auto(scn: &Scenario) -> Result<ThresholdVerdict> {
    if scn.kernel.is_some() {
        classify_alignment(scn)
    } else if scn.background_is_constant() {
        classify_constant_background(scn)
    } else {
        classify_no_alignment(scn)
    }
}
