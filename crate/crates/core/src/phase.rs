//! Phase-plane analytics for the transformed auxiliary systems.
//!
//! Two linear systems are covered:
//!
//! * the `(r, s)` plane, `r' = -beta*r + k - k*gamma*s`, `s' = r`, saddle at
//!   `(0, 1/gamma)`, separatrix `gamma*r = lambda*(1 - gamma*s)`;
//! * the `(p, q)` plane, `p' = k - k*gamma*q`, `q' = p - beta*q`, saddle at
//!   `(beta/gamma, 1/gamma)`, separatrix `p = lambda/gamma - mu*q`.
//!
//! Both have eigenvalues `-lambda`, `mu` with `lambda = Omega(gamma, beta)`
//! and `mu = Theta(gamma, beta)`; for `gamma > 0`, `k < 0` the eigenvalues
//! are distinct (`lambda + mu = sqrt(beta^2 - 4*k*gamma) > 0`), so the
//! eigen-mode solution never degenerates. The scalar Riccati case
//! `xi' = -(xi + lambda)(xi - mu)` is handled separately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thresholds::RootPair;

/// Parameters of the auxiliary systems. For the `(r, s)` system `beta` plays
/// the role of the damping `nu`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuxParams {
    pub gamma: f64,
    pub beta: f64,
    pub k: f64,
    pub roots: RootPair,
}

impl AuxParams {
    pub fn new(gamma: f64, beta: f64, k: f64) -> Result<Self> {
        Ok(Self {
            gamma,
            beta,
            k,
            roots: RootPair::new(gamma, beta, k)?,
        })
    }

    fn require_positive_gamma(&self) -> Result<()> {
        if self.gamma <= 0.0 {
            return Err(Error::Precondition(format!(
                "gamma = {} degenerate: the linear system has no critical point",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Which transformed plane a state lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    /// `(r, s) = (xi/eta, 1/eta)`.
    Rs,
    /// `(w, s) = (G/rho, 1/rho)`.
    Ws,
    /// Auxiliary `(p, q)` plane.
    Pq,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseState {
    pub plane: Plane,
    pub coords: [f64; 2],
    pub time: f64,
}

/// Coefficients of the decaying (`e^{-lambda t}`) and growing (`e^{mu t}`)
/// eigenmodes for a given initial condition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearModeCoefficients {
    pub decaying: f64,
    pub growing: f64,
}

/// Outcome of the scalar Riccati equation `xi' = -(xi + lambda)(xi - mu)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum RiccatiOutcome {
    /// Global solution, confined to `[lower, upper]` for all time.
    Global { lower: f64, upper: f64 },
    /// Finite-time divergence `xi -> -infinity` at `t_c`.
    Blowup {
        t_c: f64,
        /// Value of the published formula
        /// `(1/(mu+lambda)) * log|(xi0 + lambda)/(xi0 - mu)|`, reported for
        /// transparency; it is the negative of `t_c` in this regime.
        printed_formula_value: f64,
    },
}

/// Classifies the scalar Riccati flow: global iff `xi0 >= -lambda`, with the
/// separable-solution blow-up time otherwise.
pub fn riccati_blowup(xi0: f64, params: &AuxParams) -> RiccatiOutcome {
    let RootPair { lambda, mu, .. } = params.roots;
    if xi0 >= -lambda {
        RiccatiOutcome::Global {
            lower: -lambda,
            upper: xi0.max(mu),
        }
    } else {
        // From (xi - mu)/(xi + lambda) = const * e^{(lambda+mu) t}.
        let t_c = ((xi0 - mu) / (xi0 + lambda)).ln() / (lambda + mu);
        let printed_formula_value =
            ((xi0 + lambda) / (xi0 - mu)).abs().ln() / (mu + lambda);
        RiccatiOutcome::Blowup {
            t_c,
            printed_formula_value,
        }
    }
}

/// Eigenmode coefficients of an `(r, s)` state about the saddle `(0, 1/gamma)`.
pub fn mode_coefficients_rs(r0: f64, s0: f64, params: &AuxParams) -> Result<LinearModeCoefficients> {
    params.require_positive_gamma()?;
    let RootPair { lambda, mu, .. } = params.roots;
    let ds = s0 - 1.0 / params.gamma;
    Ok(LinearModeCoefficients {
        decaying: (mu * ds - r0) / (lambda + mu),
        growing: (lambda * ds + r0) / (lambda + mu),
    })
}

/// Closed-form solution of the `(r, s)` linear system at time `t`.
pub fn solve_linear_rs(r0: f64, s0: f64, params: &AuxParams, t: f64) -> Result<PhaseState> {
    let m = mode_coefficients_rs(r0, s0, params)?;
    let RootPair { lambda, mu, .. } = params.roots;
    let ed = (-lambda * t).exp();
    let eg = (mu * t).exp();
    Ok(PhaseState {
        plane: Plane::Rs,
        coords: [
            -lambda * m.decaying * ed + mu * m.growing * eg,
            1.0 / params.gamma + m.decaying * ed + m.growing * eg,
        ],
        time: t,
    })
}

/// Membership in the invariant region
/// `Sigma_gamma = { (r, s) : gamma*r >= lambda*(1 - gamma*s), s > 0 }`.
pub fn region_membership_rs(r: f64, s: f64, params: &AuxParams) -> bool {
    let lambda = params.roots.lambda;
    params.gamma * r >= lambda * (1.0 - params.gamma * s) && s > 0.0
}

/// Signed distance-like slack from the `(r, s)` separatrix; negative below it.
fn rs_breakdown_functional(r0: f64, s0: f64, params: &AuxParams) -> f64 {
    s0 - 1.0 / params.gamma + r0 / params.roots.lambda
}

/// Upper bound on the `s = 0` crossing time for `(r0, s0)` outside
/// `Sigma_gamma` with `s0 > 0`:
/// `(1/mu) ln( ((lambda+mu)/lambda) * (s0 + 2/gamma + |r0|/mu) / |s0 - 1/gamma + r0/lambda| )`.
pub fn tc_bound_rs(r0: f64, s0: f64, params: &AuxParams) -> Result<f64> {
    params.require_positive_gamma()?;
    let RootPair { lambda, mu, .. } = params.roots;
    if s0 <= 0.0 {
        return Err(Error::Precondition(format!("s0 = {s0} must be positive")));
    }
    let func = rs_breakdown_functional(r0, s0, params);
    if func >= -1e-12 {
        return Err(Error::Precondition(format!(
            "state not strictly below the separatrix: s0 - 1/gamma + r0/lambda = {func:.3e}"
        )));
    }
    Ok(((lambda + mu) / lambda * (s0 + 2.0 / params.gamma + r0.abs() / mu) / func.abs()).ln() / mu)
}

/// Eigenmode coefficients of a `(p, q)` state about the saddle
/// `(beta/gamma, 1/gamma)`; modes are `[k*gamma, lambda]` and `[-k*gamma, mu]`.
pub fn mode_coefficients_pq(p0: f64, q0: f64, params: &AuxParams) -> Result<LinearModeCoefficients> {
    params.require_positive_gamma()?;
    let RootPair { lambda, mu, .. } = params.roots;
    let kg = params.k * params.gamma;
    let dp = p0 - params.beta / params.gamma;
    let dq = q0 - 1.0 / params.gamma;
    let decaying = (dq + mu * dp / kg) / (lambda + mu);
    Ok(LinearModeCoefficients {
        decaying,
        growing: decaying - dp / kg,
    })
}

/// Closed-form solution of the `(p, q)` linear system at time `t`.
pub fn solve_linear_pq(p0: f64, q0: f64, params: &AuxParams, t: f64) -> Result<PhaseState> {
    let m = mode_coefficients_pq(p0, q0, params)?;
    let RootPair { lambda, mu, .. } = params.roots;
    let kg = params.k * params.gamma;
    let ed = (-lambda * t).exp();
    let eg = (mu * t).exp();
    Ok(PhaseState {
        plane: Plane::Pq,
        coords: [
            params.beta / params.gamma + kg * m.decaying * ed - kg * m.growing * eg,
            1.0 / params.gamma + lambda * m.decaying * ed + mu * m.growing * eg,
        ],
        time: t,
    })
}

/// Membership in
/// `Sigma_{gamma,beta} = { (p, q) : p >= lambda/gamma - mu*q, q > 0 }`.
pub fn region_membership_pq(p: f64, q: f64, params: &AuxParams) -> bool {
    let RootPair { lambda, mu, .. } = params.roots;
    p >= lambda / params.gamma - mu * q && q > 0.0
}

/// Upper bound on the `q = 0` crossing time for `(p0, q0)` outside
/// `Sigma_{gamma,beta}` with `q0 > 0`:
/// `(1/mu) ln( ((lambda+mu)(q0 + 1/gamma) + |p0|) / |p0 + mu*q0 - lambda/gamma| )`.
pub fn tc_bound_pq(p0: f64, q0: f64, params: &AuxParams) -> Result<f64> {
    params.require_positive_gamma()?;
    let RootPair { lambda, mu, .. } = params.roots;
    if q0 <= 0.0 {
        return Err(Error::Precondition(format!("q0 = {q0} must be positive")));
    }
    let func = p0 + mu * q0 - lambda / params.gamma;
    if func >= -1e-12 {
        return Err(Error::Precondition(format!(
            "state not strictly below the separatrix: p0 + mu*q0 - lambda/gamma = {func:.3e}"
        )));
    }
    Ok((((lambda + mu) * (q0 + 1.0 / params.gamma) + p0.abs()) / func.abs()).ln() / mu)
}

/// Vector field of the chosen plane at a point `(a, b)`.
pub fn vector_field(plane: Plane, params: &AuxParams, a: f64, b: f64) -> [f64; 2] {
    let AuxParams { gamma, beta, k, .. } = *params;
    match plane {
        Plane::Rs | Plane::Ws => [-beta * a + k - k * gamma * b, a],
        Plane::Pq => [k - k * gamma * b, a - beta * b],
    }
}

/// Saddle point of the chosen plane.
pub fn critical_point(plane: Plane, params: &AuxParams) -> [f64; 2] {
    match plane {
        Plane::Rs | Plane::Ws => [0.0, 1.0 / params.gamma],
        Plane::Pq => [params.beta / params.gamma, 1.0 / params.gamma],
    }
}

/// Separatrix point at ordinate `s` (resp. `q`).
pub fn separatrix_point(plane: Plane, params: &AuxParams, ordinate: f64) -> [f64; 2] {
    let RootPair { lambda, mu, .. } = params.roots;
    match plane {
        Plane::Rs | Plane::Ws => [lambda / params.gamma * (1.0 - params.gamma * ordinate), ordinate],
        Plane::Pq => [lambda / params.gamma - mu * ordinate, ordinate],
    }
}

/// Rectangular sampling grid for direction-field export.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub coord1: (f64, f64),
    pub coord2: (f64, f64),
    pub n1: usize,
    pub n2: usize,
}

impl GridSpec {
    pub fn new(coord1: (f64, f64), coord2: (f64, f64), n1: usize, n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 || !(coord1.1 > coord1.0) || !(coord2.1 > coord2.0) {
            return Err(Error::InvalidParam(
                "grid spec needs at least 2x2 nodes and increasing ranges".into(),
            ));
        }
        Ok(Self {
            coord1,
            coord2,
            n1,
            n2,
        })
    }
}

/// Direction-field sample: the vector field on the grid nodes plus the
/// separatrix polyline, enough to reproduce the phase portraits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionField {
    pub plane: Plane,
    pub nodes: Vec<([f64; 2], [f64; 2])>,
    pub separatrix: Vec<[f64; 2]>,
}

pub fn direction_field(plane: Plane, params: &AuxParams, grid: &GridSpec) -> Result<DirectionField> {
    params.require_positive_gamma()?;
    let mut nodes = Vec::with_capacity(grid.n1 * grid.n2);
    for i in 0..grid.n1 {
        let x = grid.coord1.0 + (grid.coord1.1 - grid.coord1.0) * i as f64 / (grid.n1 - 1) as f64;
        for j in 0..grid.n2 {
            let y =
                grid.coord2.0 + (grid.coord2.1 - grid.coord2.0) * j as f64 / (grid.n2 - 1) as f64;
            nodes.push(([x, y], vector_field(plane, params, x, y)));
        }
    }
    let m = 4 * grid.n2.max(32);
    let separatrix = (0..=m)
        .map(|j| {
            let y = grid.coord2.0 + (grid.coord2.1 - grid.coord2.0) * j as f64 / m as f64;
            separatrix_point(plane, params, y)
        })
        .collect();
    Ok(DirectionField {
        plane,
        nodes,
        separatrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(gamma: f64, beta: f64, k: f64) -> AuxParams {
        AuxParams::new(gamma, beta, k).unwrap()
    }

    #[test]
    fn riccati_equilibria_are_global() {
        let p = params(1.0, 0.0, -1.0);
        match riccati_blowup(-p.roots.lambda, &p) {
            RiccatiOutcome::Global { lower, .. } => assert_eq!(lower, -p.roots.lambda),
            _ => panic!("root -lambda must be an equilibrium"),
        }
        match riccati_blowup(p.roots.mu, &p) {
            RiccatiOutcome::Global { upper, .. } => assert_eq!(upper, p.roots.mu),
            _ => panic!("root mu must be an equilibrium"),
        }
    }

    #[test]
    fn riccati_blowup_time_half_log_three() {
        // gamma = 1, nu = 0, k = -1, xi0 = -2: t_c = ln(3)/2.
        let p = params(1.0, 0.0, -1.0);
        match riccati_blowup(-2.0, &p) {
            RiccatiOutcome::Blowup {
                t_c,
                printed_formula_value,
            } => {
                assert_abs_diff_eq!(t_c, 0.5 * 3f64.ln(), epsilon = 1e-14);
                // The published expression evaluates to the negated time here.
                assert_abs_diff_eq!(printed_formula_value, -t_c, epsilon = 1e-14);
            }
            _ => panic!("xi0 < -lambda must blow up"),
        }
    }

    #[test]
    fn rs_saddle_is_fixed_point() {
        let p = params(1.0, 3.0, -1.0);
        for t in [0.0, 0.7, 5.0] {
            let st = solve_linear_rs(0.0, 1.0, &p, t).unwrap();
            assert_abs_diff_eq!(st.coords[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(st.coords[1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rs_separatrix_decays_to_saddle() {
        let p = params(1.0, 3.0, -1.0);
        let lambda = p.roots.lambda;
        // Point on gamma*r = lambda*(1 - gamma*s).
        let s0 = 0.2;
        let r0 = lambda * (1.0 - s0);
        let m = mode_coefficients_rs(r0, s0, &p).unwrap();
        assert_abs_diff_eq!(m.growing, 0.0, epsilon = 1e-12);
        let d0 = ((r0 * r0) + (s0 - 1.0) * (s0 - 1.0)).sqrt();
        let t = 5.0 / lambda;
        let st = solve_linear_rs(r0, s0, &p, t).unwrap();
        let d = (st.coords[0].powi(2) + (st.coords[1] - 1.0).powi(2)).sqrt();
        assert_abs_diff_eq!(d, d0 * (-5.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn rs_solution_satisfies_ode() {
        let p = params(1.0, 3.0, -1.0);
        let (r0, s0) = (1.0, 1.0);
        let dt = 1e-5;
        for &t in &[0.1, 0.5, 1.0, 2.0] {
            let a = solve_linear_rs(r0, s0, &p, t - dt).unwrap().coords;
            let b = solve_linear_rs(r0, s0, &p, t).unwrap().coords;
            let c = solve_linear_rs(r0, s0, &p, t + dt).unwrap().coords;
            let drdt = (c[0] - a[0]) / (2.0 * dt);
            let dsdt = (c[1] - a[1]) / (2.0 * dt);
            let v = vector_field(Plane::Rs, &p, b[0], b[1]);
            assert_abs_diff_eq!(drdt, v[0], epsilon = 1e-6);
            assert_abs_diff_eq!(dsdt, v[1], epsilon = 1e-6);
        }
    }

    #[test]
    fn rs_region_membership_examples() {
        let p = params(1.0, 3.0, -1.0);
        let lambda = p.roots.lambda;
        // r-intercept of the separatrix at s = 0+.
        assert!(region_membership_rs(lambda, 1e-9, &p));
        // Saddle lies on the region boundary.
        assert!(region_membership_rs(0.0, 1.0, &p));
        // Below the separatrix.
        assert!(!region_membership_rs(0.0, 0.5, &p));
    }

    #[test]
    fn rs_tc_bound_worked_example() {
        // nu = 0, k = -1, gamma = 1 (lambda = mu = 1), (r0, s0) = (-2, 0.5):
        // slack = 0.5 - 1 - 2 = -2.5, bound = ln(2 * 4.5 / 2.5) = ln 3.6.
        let p = params(1.0, 0.0, -1.0);
        let bound = tc_bound_rs(-2.0, 0.5, &p).unwrap();
        assert_abs_diff_eq!(bound, 3.6f64.ln(), epsilon = 1e-12);
        // Crossing of the closed-form solution happens before the bound.
        let crossing = find_crossing(|t| solve_linear_rs(-2.0, 0.5, &p, t).unwrap().coords[1], bound);
        assert!(crossing <= bound);
    }

    #[test]
    fn rs_tc_bound_rejects_separatrix_states() {
        let p = params(1.0, 3.0, -1.0);
        let s0 = 0.3;
        let r0 = p.roots.lambda * (1.0 - s0);
        assert!(tc_bound_rs(r0, s0, &p).is_err());
        assert!(tc_bound_rs(0.0, -0.1, &p).is_err());
    }

    #[test]
    fn pq_critical_point_and_separatrix() {
        // beta = 1.5, k = -1, gamma = 1: saddle at (1.5, 1).
        let p = params(1.0, 1.5, -1.0);
        let cp = critical_point(Plane::Pq, &p);
        assert_abs_diff_eq!(cp[0], 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(cp[1], 1.0, epsilon = 1e-14);
        // Separatrix passes through the saddle: lambda - mu = beta.
        let sep = separatrix_point(Plane::Pq, &p, 1.0);
        assert_abs_diff_eq!(sep[0], 1.5, epsilon = 1e-12);
        let v = vector_field(Plane::Pq, &p, cp[0], cp[1]);
        assert_eq!(v, [0.0, 0.0]);
    }

    #[test]
    fn pq_outside_state_crosses_before_bound() {
        let p = params(1.0, 1.5, -1.0);
        let (p0, q0) = (0.0, 0.1);
        assert!(!region_membership_pq(p0, q0, &p));
        let bound = tc_bound_pq(p0, q0, &p).unwrap();
        let crossing = find_crossing(|t| solve_linear_pq(p0, q0, &p, t).unwrap().coords[1], bound);
        assert!(crossing <= bound, "crossing {crossing} vs bound {bound}");
    }

    #[test]
    fn direction_field_velocity_parallel_on_separatrix() {
        for (plane, p) in [
            (Plane::Rs, params(1.0, 3.0, -1.0)),
            (Plane::Pq, params(1.0, 1.5, -1.0)),
        ] {
            // Separatrix tangent = decaying eigenvector.
            let e = match plane {
                Plane::Rs | Plane::Ws => [-p.roots.lambda, 1.0],
                Plane::Pq => [p.k * p.gamma, p.roots.lambda],
            };
            for ord in [0.05, 0.4, 0.9, 1.7] {
                let pt = separatrix_point(plane, &p, ord);
                let v = vector_field(plane, &p, pt[0], pt[1]);
                let cross = v[0] * e[1] - v[1] * e[0];
                assert!(cross.abs() < 1e-12, "plane {plane:?} ord {ord}: {cross:e}");
            }
        }
    }

    #[test]
    fn fig1_separatrix_r_intercept() {
        // nu = 3, k = -1, gamma = 1: intercept at r = lambda = (3+sqrt(13))/2.
        let p = params(1.0, 3.0, -1.0);
        let pt = separatrix_point(Plane::Rs, &p, 0.0);
        assert_abs_diff_eq!(pt[0], (3.0 + 13f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    /// Bisection for the first zero of `f` in `(0, hi]`; `f(0) > 0` assumed.
    fn find_crossing(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
        assert!(f(hi) <= 0.0, "no sign change by t = {hi}");
        let (mut lo, mut hi) = (0.0, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    proptest! {
        #[test]
        fn growing_mode_zero_iff_on_separatrix(
            gamma in 0.2f64..4.0,
            beta in 0.0f64..4.0,
            k in -4.0f64..-0.2,
            ord in 0.01f64..3.0,
        ) {
            let p = params(gamma, beta, k);
            let rs = separatrix_point(Plane::Rs, &p, ord);
            let m = mode_coefficients_rs(rs[0], rs[1], &p).unwrap();
            prop_assert!(m.growing.abs() < 1e-10);
            let pq = separatrix_point(Plane::Pq, &p, ord);
            let m = mode_coefficients_pq(pq[0], pq[1], &p).unwrap();
            prop_assert!(m.growing.abs() < 1e-10);
            // And off the separatrix it is nonzero.
            let m = mode_coefficients_rs(rs[0] + 0.1, rs[1], &p).unwrap();
            prop_assert!(m.growing.abs() > 1e-12);
        }

        #[test]
        fn rs_membership_invariant_under_flow(
            gamma in 0.2f64..4.0,
            beta in 0.0f64..4.0,
            k in -4.0f64..-0.2,
            s0 in 0.01f64..3.0,
            bump in 1e-6f64..3.0,
            t in 0.0f64..8.0,
        ) {
            let p = params(gamma, beta, k);
            let sep = separatrix_point(Plane::Rs, &p, s0);
            let (r0, s0) = (sep[0] + bump, sep[1]);
            prop_assert!(region_membership_rs(r0, s0, &p));
            let st = solve_linear_rs(r0, s0, &p, t).unwrap();
            // Tiny slack for roundoff near the boundary.
            let lhs = gamma * st.coords[0] - p.roots.lambda * (1.0 - gamma * st.coords[1]);
            prop_assert!(lhs >= -1e-9 * (1.0 + lhs.abs()));
            prop_assert!(st.coords[1] > 0.0);
        }
    }
}
