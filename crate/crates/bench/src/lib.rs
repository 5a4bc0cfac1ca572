//! Shared fixtures for the criterion benchmarks.

use eptk_core::scenario::ProfileFamily;
use eptk_core::{Kernel, PeriodicProfile, Result, Scenario};

/// Variable-background scenario with a strongly expanding slope, sized for
/// benchmark runs.
pub fn bench_scenario(n: usize, kernel: bool) -> Result<Scenario> {
    let background = PeriodicProfile::from_family(
        ProfileFamily::AffineSine {
            a: 1.0,
            b: 0.3,
            phase: 0.0,
        },
        n,
    )?;
    let rho0 = PeriodicProfile::from_family(ProfileFamily::RaisedCosine { a: 1.0, b: 0.3 }, n)?;
    let u0 = PeriodicProfile::constant(0.0, n)?;
    let u0x = PeriodicProfile::from_family(
        ProfileFamily::AffineSine {
            a: 1.5,
            b: 0.3,
            phase: 0.0,
        },
        n,
    )?;
    let kernel = if kernel {
        Some(Kernel::new(
            PeriodicProfile::from_family(ProfileFamily::RaisedCosine { a: 1.0, b: 0.5 }, n)?,
            None,
        )?)
    } else {
        None
    };
    Scenario::new(-1.0, 1.0, background, rho0, u0, Some(u0x), kernel, false)
}
