//! Problem instances: periodic profiles on the torus `T = [-1/2, 1/2)`,
//! alignment kernels, torus quadrature, and scenario validity checks
//! (attractive forcing, positivity, mass normalization, neutrality).

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod config;

/// Tolerance for mass normalization and neutrality checks.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Wraps `x` into the fundamental domain `[-1/2, 1/2)`.
pub fn wrap_torus(x: f64) -> f64 {
    let mut w = x - (x + 0.5).floor();
    if w >= 0.5 {
        w -= 1.0;
    } else if w < -0.5 {
        w += 1.0;
    }
    w
}

/// Torus metric: distance between `a` and `b` modulo 1, always in `[0, 1/2]`.
pub fn dist_torus(a: f64, b: f64) -> f64 {
    wrap_torus(a - b).abs()
}

/// Closed-form profile families shipped with the toolkit. All are smooth and
/// 1-periodic; derivatives stay within the family set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProfileFamily {
    Constant { value: f64 },
    /// `a + b*sin(2*pi*x + phase)`
    AffineSine {
        a: f64,
        b: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `a + b*cos(2*pi*x)`
    RaisedCosine { a: f64, b: f64 },
}

impl ProfileFamily {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ProfileFamily::Constant { value } => value,
            ProfileFamily::AffineSine { a, b, phase } => a + b * (TAU * x + phase).sin(),
            ProfileFamily::RaisedCosine { a, b } => a + b * (TAU * x).cos(),
        }
    }

    /// Exact derivative; closed under the shipped family set.
    pub fn derivative(&self) -> ProfileFamily {
        match *self {
            ProfileFamily::Constant { .. } => ProfileFamily::Constant { value: 0.0 },
            ProfileFamily::AffineSine { b, phase, .. } => ProfileFamily::AffineSine {
                a: 0.0,
                b: TAU * b,
                phase: phase + FRAC_PI_2,
            },
            ProfileFamily::RaisedCosine { b, .. } => ProfileFamily::AffineSine {
                a: 0.0,
                b: -TAU * b,
                phase: 0.0,
            },
        }
    }
}

/// A 1-periodic scalar function on the torus, represented by samples on a
/// uniform N-point grid plus an optional closed-form descriptor used for
/// exact off-grid evaluation. Sampled-only profiles interpolate linearly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicProfile {
    n: usize,
    samples: Vec<f64>,
    family: Option<ProfileFamily>,
}

impl PeriodicProfile {
    pub fn from_family(family: ProfileFamily, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidProfile(format!("grid size {n} < 4")));
        }
        let samples = (0..n)
            .map(|i| family.eval(-0.5 + i as f64 / n as f64))
            .collect();
        Ok(Self {
            n,
            samples,
            family: Some(family),
        })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::InvalidProfile(format!(
                "grid size {} < 4",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite sample".into()));
        }
        Ok(Self {
            n: samples.len(),
            samples,
            family: None,
        })
    }

    pub fn constant(value: f64, n: usize) -> Result<Self> {
        Self::from_family(ProfileFamily::Constant { value }, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing `1/N`.
    pub fn delta(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn grid_x(&self, i: usize) -> f64 {
        -0.5 + i as f64 / self.n as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn family(&self) -> Option<&ProfileFamily> {
        self.family.as_ref()
    }

    /// 1-periodic evaluation: the argument is wrapped into `[-1/2, 1/2)`
    /// first, so `eval(x + 1)` is bit-identical to `eval(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let xw = wrap_torus(x);
        match &self.family {
            Some(f) => f.eval(xw),
            None => {
                let pos = (xw + 0.5) * self.n as f64;
                let i0 = pos.floor() as usize % self.n;
                let frac = pos - pos.floor();
                let i1 = (i0 + 1) % self.n;
                self.samples[i0] * (1.0 - frac) + self.samples[i1] * frac
            }
        }
    }

    pub fn grid_min(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn grid_max(&self) -> f64 {
        self.samples
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Derivative profile: exact for closed-form families, centered finite
    /// differences on the periodic grid otherwise.
    pub fn derivative(&self) -> PeriodicProfile {
        match &self.family {
            Some(f) => Self::from_family(f.derivative(), self.n).expect("n already validated"),
            None => {
                let n = self.n;
                let two_dx = 2.0 / n as f64;
                let samples = (0..n)
                    .map(|i| (self.samples[(i + 1) % n] - self.samples[(i + n - 1) % n]) / two_dx)
                    .collect();
                Self {
                    n,
                    samples,
                    family: None,
                }
            }
        }
    }

    pub fn scale(&self, factor: f64) -> PeriodicProfile {
        let family = self.family.as_ref().map(|f| match *f {
            ProfileFamily::Constant { value } => ProfileFamily::Constant {
                value: value * factor,
            },
            ProfileFamily::AffineSine { a, b, phase } => ProfileFamily::AffineSine {
                a: a * factor,
                b: b * factor,
                phase,
            },
            ProfileFamily::RaisedCosine { a, b } => ProfileFamily::RaisedCosine {
                a: a * factor,
                b: b * factor,
            },
        });
        Self {
            n: self.n,
            samples: self.samples.iter().map(|v| v * factor).collect(),
            family,
        }
    }
}

/// Rectangle-rule quadrature over the torus, `Δ·Σ f(x_i)`. Spectrally
/// accurate for smooth periodic integrands.
pub fn torus_quadrature(f: &PeriodicProfile) -> f64 {
    f.samples.iter().sum::<f64>() * f.delta()
}

/// Alignment influence kernel: symmetric, 1-periodic, nonnegative, Lipschitz.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kernel {
    profile: PeriodicProfile,
    psi_min: f64,
    psi_max: f64,
    lipschitz_k: f64,
}

impl Kernel {
    /// Validates the kernel assumptions on the grid. If `lipschitz` is given
    /// it is checked against all grid pairs; otherwise the grid constant is
    /// derived.
    pub fn new(profile: PeriodicProfile, lipschitz: Option<f64>) -> Result<Self> {
        let n = profile.n();
        for i in 0..n {
            let x = profile.grid_x(i);
            let v = profile.eval(x);
            if v < 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "kernel negative at x = {x}: psi = {v}"
                )));
            }
            let sym_err = (v - profile.eval(-x)).abs();
            if sym_err > 1e-12 {
                return Err(Error::InvalidKernel(format!(
                    "kernel not symmetric at x = {x}: |psi(x)-psi(-x)| = {sym_err:.3e}"
                )));
            }
        }
        // Grid Lipschitz constant over all pairs.
        let mut grid_k = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist_torus(profile.grid_x(i), profile.grid_x(j));
                if d > 0.0 {
                    grid_k = grid_k.max((profile.samples()[i] - profile.samples()[j]).abs() / d);
                }
            }
        }
        let lipschitz_k = match lipschitz {
            Some(k) => {
                if k < 0.0 {
                    return Err(Error::InvalidKernel(format!("negative Lipschitz bound {k}")));
                }
                if grid_k > k * (1.0 + 1e-9) + 1e-12 {
                    return Err(Error::InvalidKernel(format!(
                        "declared Lipschitz bound {k} violated on grid (observed {grid_k:.6e})"
                    )));
                }
                k
            }
            None => grid_k,
        };
        let psi_min = profile.grid_min();
        let psi_max = profile.grid_max();
        Ok(Self {
            profile,
            psi_min,
            psi_max,
            lipschitz_k,
        })
    }

    pub fn profile(&self) -> &PeriodicProfile {
        &self.profile
    }

    pub fn psi_min(&self) -> f64 {
        self.psi_min
    }

    pub fn psi_max(&self) -> f64 {
        self.psi_max
    }

    pub fn lipschitz_k(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.profile.eval(x)
    }
}

/// Lagrangian convolution `(psi * rho)(x) = Σ_j psi(x - x_j) m_j` where the
/// weights are particle positions with nonnegative masses summing to one.
pub fn convolve(kernel: &Kernel, weights: &[(f64, f64)], x: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut sum = 0.0;
    for &(xj, mj) in weights {
        if mj < 0.0 {
            return Err(Error::Precondition(format!("negative mass {mj}")));
        }
        sum += mj;
        total += kernel.eval(x - xj) * mj;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Precondition(format!(
            "masses sum to {sum}, expected 1 within {NORMALIZATION_TOL:.0e}"
        )));
    }
    Ok(total)
}

/// A full problem instance for either system (the kernel is present only in
/// the alignment case). Immutable after construction; safe to share across
/// threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// Forcing coefficient, strictly negative (attractive).
    pub k: f64,
    /// Damping coefficient, nonnegative.
    pub nu: f64,
    /// Grid size shared by all profiles.
    pub n: usize,
    pub background: PeriodicProfile,
    /// Grid minimum of the background, strictly positive.
    pub c1: f64,
    /// Grid maximum of the background.
    pub c2: f64,
    pub rho0: PeriodicProfile,
    pub u0: PeriodicProfile,
    pub u0x: PeriodicProfile,
    pub kernel: Option<Kernel>,
}

impl Scenario {
    /// Assembles and validates a scenario. `u0x` defaults to the derivative
    /// of `u0`; it may be supplied directly since the threshold conditions
    /// treat the initial slope as free data. With `auto_rescale_rho0` the
    /// density is rescaled to unit mass instead of rejected.
    pub fn new(
        k: f64,
        nu: f64,
        background: PeriodicProfile,
        rho0: PeriodicProfile,
        u0: PeriodicProfile,
        u0x: Option<PeriodicProfile>,
        kernel: Option<Kernel>,
        auto_rescale_rho0: bool,
    ) -> Result<Self> {
        if !(k < 0.0) {
            return Err(Error::InvalidScenario(format!(
                "attractive forcing required (k<0), got k = {k}"
            )));
        }
        if !(nu >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "damping must be nonnegative, got nu = {nu}"
            )));
        }
        let n = background.n();
        let u0x = u0x.unwrap_or_else(|| u0.derivative());
        for (name, p) in [("rho0", &rho0), ("u0", &u0), ("u0x", &u0x)] {
            if p.n() != n {
                return Err(Error::InvalidScenario(format!(
                    "grid mismatch: background has N = {n}, {name} has N = {}",
                    p.n()
                )));
            }
        }
        if let Some(kr) = &kernel {
            if kr.profile().n() != n {
                return Err(Error::InvalidScenario(format!(
                    "grid mismatch: background has N = {n}, kernel has N = {}",
                    kr.profile().n()
                )));
            }
        }
        let c1 = background.grid_min();
        let c2 = background.grid_max();
        if !(c1 > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "background must be strictly positive, min c = {c1}"
            )));
        }
        let c_mass = torus_quadrature(&background);
        if (c_mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidScenario(format!(
                "background not normalized: int c = {c_mass}"
            )));
        }
        if rho0.grid_min() < 0.0 {
            return Err(Error::InvalidScenario(format!(
                "rho0 must be nonnegative, min rho0 = {}",
                rho0.grid_min()
            )));
        }
        let mut rho0 = rho0;
        let rho_mass = torus_quadrature(&rho0);
        if (rho_mass - 1.0).abs() > NORMALIZATION_TOL {
            if auto_rescale_rho0 && rho_mass > 0.0 {
                rho0 = rho0.scale(1.0 / rho_mass);
            } else {
                return Err(Error::InvalidScenario(format!(
                    "rho0 not normalized: int rho0 = {rho_mass}"
                )));
            }
        }
        let neutrality = torus_quadrature(&rho0) - c_mass;
        if neutrality.abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidScenario(format!(
                "neutrality violated: int(rho0 - c) = {neutrality:.3e}"
            )));
        }
        Ok(Self {
            k,
            nu,
            n,
            background,
            c1,
            c2,
            rho0,
            u0,
            u0x,
            kernel,
        })
    }

    /// Initial electric field `E(0, alpha) = int_{-1/2}^{alpha} (rho0 - c) dy`,
    /// by composite Simpson quadrature on the profile evaluations. Vanishes at
    /// both endpoints when neutrality holds.
    pub fn initial_electric_field(&self, alpha: f64) -> f64 {
        let a = -0.5;
        let b = alpha.clamp(-0.5, 0.5);
        if b <= a {
            return 0.0;
        }
        let span = b - a;
        let mut panels = ((span * 2.0 * self.n as f64).ceil() as usize).max(8);
        if panels % 2 == 1 {
            panels += 1;
        }
        let h = span / panels as f64;
        let f = |x: f64| self.rho0.eval(x) - self.background.eval(x);
        let mut sum = f(a) + f(b);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(a + i as f64 * h);
        }
        sum * h / 3.0
    }

    /// `psi * rho0` at `x`, using the grid-point Lagrangian masses
    /// `rho0(x_i)·Δ`. Errors if no kernel is attached.
    pub fn psi_conv_rho0(&self, x: f64) -> Result<f64> {
        let kernel = self
            .kernel
            .as_ref()
            .ok_or_else(|| Error::Precondition("scenario has no kernel".into()))?;
        let delta = self.rho0.delta();
        let weights: Vec<(f64, f64)> = (0..self.n)
            .map(|i| (self.rho0.grid_x(i), self.rho0.samples()[i] * delta))
            .collect();
        convolve(kernel, &weights, x)
    }

    /// True when the background is constant on the grid (within 1e-12).
    pub fn background_is_constant(&self) -> bool {
        self.c2 - self.c1 < 1e-12
    }
}
