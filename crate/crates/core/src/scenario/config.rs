//! Scenario config files: flat TOML with documented keys
//! (`k`, `nu`, `n`, `background.family`/params, `rho0`, `u0`, optional
//! `u0x`, optional `kernel`). Profiles may alternatively be given as CSV
//! columns `(x, value)`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Kernel, PeriodicProfile, ProfileFamily, Scenario};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub family: String,
    pub value: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub phase: Option<f64>,
    /// Inline samples (tabulated profile).
    pub values: Option<Vec<f64>>,
    /// CSV file with columns (x, value), linearly interpolated onto the grid.
    pub path: Option<String>,
}

impl ProfileSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            family: "constant".into(),
            value: Some(value),
            a: None,
            b: None,
            phase: None,
            values: None,
            path: None,
        }
    }

    pub fn affine_sine(a: f64, b: f64, phase: f64) -> Self {
        Self {
            family: "affine-sine".into(),
            value: None,
            a: Some(a),
            b: Some(b),
            phase: Some(phase),
            values: None,
            path: None,
        }
    }

    pub fn raised_cosine(a: f64, b: f64) -> Self {
        Self {
            family: "raised-cosine".into(),
            value: None,
            a: Some(a),
            b: Some(b),
            phase: None,
            values: None,
            path: None,
        }
    }

    fn require(&self, field: &str, v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| {
            Error::Config(format!(
                "profile '{name}' (family {}) is missing key '{field}'",
                self.family
            ))
        })
    }

    pub fn build(&self, n: usize, name: &str, base_dir: &Path) -> Result<PeriodicProfile> {
        match self.family.as_str() {
            "constant" => PeriodicProfile::from_family(
                ProfileFamily::Constant {
                    value: self.require("value", self.value, name)?,
                },
                n,
            ),
            "affine-sine" => PeriodicProfile::from_family(
                ProfileFamily::AffineSine {
                    a: self.require("a", self.a, name)?,
                    b: self.require("b", self.b, name)?,
                    phase: self.phase.unwrap_or(0.0),
                },
                n,
            ),
            "raised-cosine" => PeriodicProfile::from_family(
                ProfileFamily::RaisedCosine {
                    a: self.require("a", self.a, name)?,
                    b: self.require("b", self.b, name)?,
                },
                n,
            ),
            "tabulated" => {
                let values = self.values.clone().ok_or_else(|| {
                    Error::Config(format!("profile '{name}' (tabulated) is missing 'values'"))
                })?;
                PeriodicProfile::from_samples(values)
            }
            "csv" => {
                let rel = self.path.as_ref().ok_or_else(|| {
                    Error::Config(format!("profile '{name}' (csv) is missing 'path'"))
                })?;
                let path = base_dir.join(rel);
                load_csv_profile(&path, n)
            }
            other => Err(Error::Config(format!(
                "profile '{name}': unknown family '{other}'"
            ))),
        }
    }
}

/// Loads a `(x, value)` CSV table and resamples it onto the uniform N-point
/// grid by periodic linear interpolation.
pub fn load_csv_profile(path: &Path, n: usize) -> Result<PeriodicProfile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if rec.len() < 2 {
            return Err(Error::Config(format!(
                "{}: expected columns (x, value)",
                path.display()
            )));
        }
        let x: f64 = rec[0]
            .parse()
            .map_err(|e| Error::Config(format!("{}: bad x '{}': {e}", path.display(), &rec[0])))?;
        let v: f64 = rec[1].parse().map_err(|e| {
            Error::Config(format!("{}: bad value '{}': {e}", path.display(), &rec[1]))
        })?;
        pts.push((crate::scenario::wrap_torus(x), v));
    }
    if pts.len() < 4 {
        return Err(Error::Config(format!(
            "{}: need at least 4 points, got {}",
            path.display(),
            pts.len()
        )));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = pts.len();
    let samples = (0..n)
        .map(|i| {
            let x = -0.5 + i as f64 / n as f64;
            // Periodic linear interpolation between bracketing table points.
            let j = pts.partition_point(|p| p.0 <= x);
            let (x0, v0, x1, v1) = if j == 0 {
                let (xl, vl) = pts[m - 1];
                (xl - 1.0, vl, pts[0].0, pts[0].1)
            } else if j == m {
                let (xr, vr) = pts[0];
                (pts[m - 1].0, pts[m - 1].1, xr + 1.0, vr)
            } else {
                (pts[j - 1].0, pts[j - 1].1, pts[j].0, pts[j].1)
            };
            if x1 - x0 <= 0.0 {
                v0
            } else {
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        })
        .collect();
    PeriodicProfile::from_samples(samples)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub profile: ProfileSpec,
    /// Declared Lipschitz constant; derived from the grid when absent.
    pub lipschitz: Option<f64>,
}

/// Optional `[sweep]` section of a family file; values act as defaults for
/// the sweep command flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: Option<String>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tol: Option<f64>,
}

/// On-disk scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub k: f64,
    pub nu: f64,
    #[serde(alias = "N")]
    pub n: usize,
    pub background: ProfileSpec,
    pub rho0: ProfileSpec,
    pub u0: ProfileSpec,
    pub u0x: Option<ProfileSpec>,
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub auto_rescale_rho0: bool,
    pub sweep: Option<SweepSpec>,
}

impl ScenarioFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Builds the validated scenario. `base_dir` resolves relative CSV paths.
    pub fn build(&self, base_dir: &Path) -> Result<Scenario> {
        let background = self.background.build(self.n, "background", base_dir)?;
        let rho0 = self.rho0.build(self.n, "rho0", base_dir)?;
        let u0 = self.u0.build(self.n, "u0", base_dir)?;
        let u0x = self
            .u0x
            .as_ref()
            .map(|s| s.build(self.n, "u0x", base_dir))
            .transpose()?;
        let kernel = self
            .kernel
            .as_ref()
            .map(|ks| {
                let p = ks.profile.build(self.n, "kernel", base_dir)?;
                Kernel::new(p, ks.lipschitz)
            })
            .transpose()?;
        Scenario::new(
            self.k,
            self.nu,
            background,
            rho0,
            u0,
            u0x,
            kernel,
            self.auto_rescale_rho0,
        )
    }
}

/// Convenience: parse and build in one step.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let file = ScenarioFile::load(path)?;
    let base = path
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    file.build(&base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
k = -1.0
nu = 0.5
n = 128

[background]
family = "affine-sine"
a = 1.0
b = 0.3

[rho0]
family = "constant"
value = 1.0

[u0]
family = "constant"
value = 0.0

[u0x]
family = "constant"
value = 2.0

[kernel]
family = "raised-cosine"
a = 1.0
b = 0.5
"#;

    #[test]
    fn parses_and_builds_full_scenario() {
        let file = ScenarioFile::from_toml_str(EXAMPLE).unwrap();
        let scn = file.build(Path::new(".")).unwrap();
        assert_eq!(scn.n, 128);
        assert_eq!(scn.nu, 0.5);
        assert!(scn.kernel.is_some());
        assert!((scn.c1 - 0.7).abs() < 1e-12);
        assert!((scn.c2 - 1.3).abs() < 1e-12);
        assert_eq!(scn.u0x.eval(0.3), 2.0);
    }

    #[test]
    fn u0x_defaults_to_derivative_of_u0() {
        let text = r#"
k = -1.0
nu = 0.0
n = 64
background = { family = "constant", value = 1.0 }
rho0 = { family = "constant", value = 1.0 }
u0 = { family = "affine-sine", a = 0.0, b = 1.0 }
"#;
        let scn = ScenarioFile::from_toml_str(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap();
        // d/dx sin(2 pi x) = 2 pi cos(2 pi x).
        assert!((scn.u0x.eval(0.0) - std::f64::consts::TAU).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_family() {
        let text = r#"
k = -1.0
nu = 0.0
n = 64
background = { family = "sawtooth" }
rho0 = { family = "constant", value = 1.0 }
u0 = { family = "constant", value = 0.0 }
"#;
        let err = ScenarioFile::from_toml_str(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("unknown family"));
    }

    #[test]
    fn csv_profile_roundtrip() {
        let dir = std::env::temp_dir().join("eptk-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("profile.csv");
        let mut body = String::from("x,value\n");
        for i in 0..32 {
            let x = -0.5 + i as f64 / 32.0;
            body.push_str(&format!("{x},{}\n", 1.0 + 0.25 * (std::f64::consts::TAU * x).sin()));
        }
        std::fs::write(&path, body).unwrap();
        let p = load_csv_profile(&path, 64).unwrap();
        assert!((crate::scenario::torus_quadrature(&p) - 1.0).abs() < 1e-3);
        assert!((p.eval(0.25) - 1.25).abs() < 1e-2);
    }
}
