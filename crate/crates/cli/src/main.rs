//! `eptk`: command-line front end for the critical-threshold toolkit.
//!
//! Subcommands: `classify`, `simulate`, `sweep`, `phase`, `verify`. All
//! numeric outputs are CSV with headers and round-trip float formatting;
//! verdicts, run reports, and manifests are JSON. Every invocation writes a
//! `manifest.json` recording the command, inputs (with content hashes), and
//! toolkit version; re-running a manifest's command reproduces the CSV
//! outputs byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use eptk_core::charode::IntegratorConfig;
use eptk_core::phase::{
    critical_point, direction_field, AuxParams, GridSpec, Plane,
};
use eptk_core::scenario::config::{load_scenario, ScenarioFile};
use eptk_core::simulate::{
    classifier_bounds, run_ensemble, sweep_threshold, verify_bounds, write_sweep_csv,
    write_trajectory_csv, Outcome, SweepProbe, SweepResult,
};
use eptk_core::thresholds::{classify_auto, ThresholdVerdict, Verdict};
use eptk_core::verify::{run_suite, Suite};
use eptk_core::{Error, Result, Scenario};

const OUT_DIR_ENV: &str = "EPTK_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "eptk",
    version,
    about = "Critical-threshold toolkit for the damped Euler-Poisson system \
             with variable background (optionally with nonlocal alignment)"
)]
struct Cli {
    /// Output directory (default: $EPTK_OUT_DIR or the current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Reserved; the pipeline is deterministic and ignores it today.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress progress output on stdout (files are still written).
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a scenario file against the threshold conditions.
    Classify {
        /// Scenario TOML file.
        scenario: PathBuf,
    },
    /// Run the Lagrangian ensemble for a scenario.
    Simulate {
        /// Scenario TOML file.
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Bisect a one-parameter scenario family to bracket its threshold.
    Sweep {
        /// Family TOML file (a scenario plus an optional [sweep] section).
        family: PathBuf,
        /// Swept parameter path, e.g. `u0x.a`, `u0x.value`, or `nu`.
        #[arg(long)]
        param: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        /// Bracket width target.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Export direction-field data for the transformed linear planes.
    Phase {
        /// Which plane: `rs` or `pq`.
        #[arg(long)]
        system: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        k: f64,
        /// Grid as `a_min,a_max,b_min,b_max,n1,n2`.
        #[arg(long, default_value = "-4,4,0,4,21,21", allow_hyphen_values = true)]
        grid: String,
    },
    /// Run the self-verification suites.
    Verify {
        /// roots | regions | comparison | sharpness | bounds | all
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Integration horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of characteristics.
    #[arg(long)]
    chars: Option<usize>,
    /// Initial time step.
    #[arg(long)]
    dt: Option<f64>,
}

impl SimArgs {
    fn config(&self) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::default();
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(dt) = self.dt {
            cfg.dt_init = dt;
        }
        cfg
    }

    fn n_chars(&self, default: usize) -> usize {
        self.chars.unwrap_or(default)
    }

    fn overrides(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        if let Some(h) = self.horizon {
            m.insert("horizon".into(), format!("{h:?}"));
        }
        if let Some(c) = self.chars {
            m.insert("chars".into(), c.to_string());
        }
        if let Some(dt) = self.dt {
            m.insert("dt".into(), format!("{dt:?}"));
        }
        m
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    scenario: Option<String>,
    overrides: BTreeMap<String, String>,
    out_dir: String,
    timestamp: String,
    version: String,
    input_sha256: BTreeMap<String, String>,
}

struct Ctx {
    out_dir: PathBuf,
    quiet: bool,
    seed: Option<u64>,
}

impl Ctx {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        let body = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
        std::fs::write(&path, body + "\n")?;
        Ok(path)
    }

    fn write_manifest(
        &self,
        command: &str,
        scenario: Option<&Path>,
        mut overrides: BTreeMap<String, String>,
    ) -> Result<()> {
        if let Some(seed) = self.seed {
            overrides.insert("seed".into(), seed.to_string());
        }
        let mut hashes = BTreeMap::new();
        if let Some(path) = scenario {
            let bytes = std::fs::read(path)?;
            hashes.insert(path.display().to_string(), hex_sha256(&bytes));
        }
        let timestamp = time::OffsetDateTime::now_utc()
            .format(&time::format_description::well_known::Rfc3339)
            .map_err(|e| Error::Config(format!("timestamp formatting failed: {e}")))?;
        let manifest = RunManifest {
            command: command.into(),
            scenario: scenario.map(|p| p.display().to_string()),
            overrides,
            out_dir: self.out_dir.display().to_string(),
            timestamp,
            version: eptk_core::VERSION.into(),
            input_sha256: hashes,
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(())
    }
}

fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output directory {}: {e}", out_dir.display());
        return ExitCode::from(1);
    }
    let ctx = Ctx {
        out_dir,
        quiet: cli.quiet,
        seed: cli.seed,
    };
    let outcome = match &cli.command {
        Command::Classify { scenario } => cmd_classify(&ctx, scenario),
        Command::Simulate { scenario, sim } => cmd_simulate(&ctx, scenario, sim),
        Command::Sweep {
            family,
            param,
            lo,
            hi,
            tol,
            sim,
        } => cmd_sweep(&ctx, family, param.as_deref(), *lo, *hi, *tol, sim),
        Command::Phase {
            system,
            gamma,
            beta,
            k,
            grid,
        } => cmd_phase(&ctx, system, *gamma, *beta, *k, grid),
        Command::Verify { suite } => cmd_verify(&ctx, suite),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_classify(ctx: &Ctx, scenario_path: &Path) -> Result<u8> {
    let scn = load_scenario(scenario_path)?;
    let verdict = classify_auto(&scn)?;
    ctx.say(&format!("verdict: {}", verdict.verdict));
    for (name, value) in &verdict.constants {
        ctx.say(&format!("  {name} = {value:?}"));
    }
    ctx.say(&format!(
        "  margin = {:?} (gs {:?}, ftb {:?}, gap width {:?})",
        verdict.margin, verdict.gs_margin, verdict.ftb_margin, verdict.gap_width
    ));
    if let Some(w) = &verdict.witness {
        ctx.say(&format!(
            "  witness: x = {:?}, u0x = {:?}, bound = {:?}",
            w.x, w.u0x, w.bound
        ));
    }
    ctx.write_json("verdict.json", &verdict)?;
    ctx.write_manifest("classify", Some(scenario_path), BTreeMap::new())?;
    Ok(match verdict.verdict {
        Verdict::Subcritical => 0,
        Verdict::Supercritical => 2,
        Verdict::Indeterminate => 3,
    })
}

#[derive(Serialize)]
struct RunReport {
    outcome: Outcome,
    horizon: f64,
    n_chars: usize,
    final_time: f64,
    final_min_ux: f64,
    final_max_ux: f64,
    final_max_rho: f64,
    rho_growth_ratio: f64,
    bound_checks: eptk_core::simulate::BoundReport,
    verdict: ThresholdVerdict,
}

fn cmd_simulate(ctx: &Ctx, scenario_path: &Path, sim: &SimArgs) -> Result<u8> {
    let scn = load_scenario(scenario_path)?;
    let verdict = classify_auto(&scn)?;
    let cfg = sim.config();
    let n_chars = sim.n_chars(512);
    let run = run_ensemble(&scn, n_chars, &cfg)?;
    let traj_path = ctx.out_dir.join("trajectory.csv");
    write_trajectory_csv(&run, std::fs::File::create(&traj_path)?)?;
    let report = RunReport {
        outcome: run.outcome.clone(),
        horizon: cfg.horizon,
        n_chars,
        final_time: *run.bounds.times.last().unwrap(),
        final_min_ux: *run.bounds.min_ux.last().unwrap(),
        final_max_ux: *run.bounds.max_ux.last().unwrap(),
        final_max_rho: *run.bounds.max_rho.last().unwrap(),
        rho_growth_ratio: run.bounds.rho_growth_ratio,
        bound_checks: verify_bounds(&run, &verdict)?,
        verdict,
    };
    ctx.write_json("run.json", &report)?;
    ctx.write_manifest("simulate", Some(scenario_path), sim.overrides())?;
    match &run.outcome {
        Outcome::GlobalToHorizon => {
            ctx.say(&format!(
                "global to horizon t = {:?} ({n_chars} characteristics)",
                cfg.horizon
            ));
            Ok(0)
        }
        Outcome::Breakdown {
            t_bracket,
            t_estimate,
            worst_alpha,
        } => {
            ctx.say(&format!(
                "breakdown at t = {t_estimate:?} (bracket [{:?}, {:?}]) on \
                 characteristic alpha = {worst_alpha:?}",
                t_bracket.0, t_bracket.1
            ));
            Ok(2)
        }
    }
}

/// Applies the swept parameter to a copy of the scenario file.
fn apply_param(file: &ScenarioFile, param: &str, theta: f64) -> Result<ScenarioFile> {
    let mut out = file.clone();
    match param {
        "nu" => out.nu = theta,
        "u0x.a" => {
            let spec = out.u0x.as_mut().ok_or_else(|| {
                Error::Config("sweep over u0x.a needs a [u0x] section".into())
            })?;
            if spec.family != "affine-sine" {
                return Err(Error::Config(format!(
                    "sweep over u0x.a needs family affine-sine, got {}",
                    spec.family
                )));
            }
            spec.a = Some(theta);
        }
        "u0x.value" => {
            let spec = out.u0x.as_mut().ok_or_else(|| {
                Error::Config("sweep over u0x.value needs a [u0x] section".into())
            })?;
            if spec.family != "constant" {
                return Err(Error::Config(format!(
                    "sweep over u0x.value needs family constant, got {}",
                    spec.family
                )));
            }
            spec.value = Some(theta);
        }
        other => {
            return Err(Error::Config(format!(
                "unsupported sweep parameter '{other}' (supported: u0x.a, u0x.value, nu)"
            )));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SweepReport {
    result: SweepResult,
    horizon: f64,
    n_chars: usize,
}

fn cmd_sweep(
    ctx: &Ctx,
    family_path: &Path,
    param: Option<&str>,
    lo: Option<f64>,
    hi: Option<f64>,
    tol: Option<f64>,
    sim: &SimArgs,
) -> Result<u8> {
    let file = ScenarioFile::load(family_path)?;
    let defaults = file.sweep.clone().unwrap_or_default();
    let param = param
        .map(String::from)
        .or(defaults.param)
        .ok_or_else(|| Error::Config("missing --param (and no [sweep] section)".into()))?;
    let lo = lo
        .or(defaults.lo)
        .ok_or_else(|| Error::Config("missing --lo (and no [sweep] section)".into()))?;
    let hi = hi
        .or(defaults.hi)
        .ok_or_else(|| Error::Config("missing --hi (and no [sweep] section)".into()))?;
    let tol = tol.or(defaults.tol).unwrap_or(1e-3);
    let base_dir = family_path
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let build = |theta: f64| -> Result<Scenario> {
        apply_param(&file, &param, theta)?.build(&base_dir)
    };
    let cfg = {
        let mut cfg = sim.config();
        if sim.horizon.is_none() {
            cfg.horizon = 30.0;
        }
        cfg
    };
    let n_chars = sim.n_chars(128);
    let mut result = sweep_threshold(&param, lo, hi, tol, |theta| {
        let run = run_ensemble(&build(theta)?, n_chars, &cfg)?;
        ctx.say(&format!(
            "  probe {} = {theta:?}: {}",
            param,
            if run.outcome.is_global() { "global" } else { "breakdown" }
        ));
        Ok(SweepProbe {
            theta,
            global: run.outcome.is_global(),
            t_estimate: match run.outcome {
                Outcome::Breakdown { t_estimate, .. } => Some(t_estimate),
                Outcome::GlobalToHorizon => None,
            },
        })
    })?;
    // Analytic classifier bounds when the endpoints are decisively
    // classified; families stuck in the indeterminate gap skip them.
    if let Ok((ftb, gs)) = classifier_bounds(&build, lo, hi, tol.min(1e-6)) {
        result.theta_ftb = Some(ftb);
        result.theta_gs = Some(gs);
    }
    let sweep_path = ctx.out_dir.join("sweep.csv");
    write_sweep_csv(&result, cfg.horizon, std::fs::File::create(&sweep_path)?)?;
    ctx.say(&format!(
        "bracket: [{:?}, {:?}] (midpoint {:?})",
        result.bracket.0,
        result.bracket.1,
        result.bracket_midpoint()
    ));
    if let (Some(ftb), Some(gs)) = (result.theta_ftb, result.theta_gs) {
        ctx.say(&format!("analytic bounds: theta_FTB = {ftb:?}, theta_GS = {gs:?}"));
    }
    let mut overrides = sim.overrides();
    overrides.insert("param".into(), param.clone());
    overrides.insert("lo".into(), format!("{lo:?}"));
    overrides.insert("hi".into(), format!("{hi:?}"));
    overrides.insert("tol".into(), format!("{tol:?}"));
    ctx.write_json(
        "sweep.json",
        &SweepReport {
            result,
            horizon: cfg.horizon,
            n_chars,
        },
    )?;
    ctx.write_manifest("sweep", Some(family_path), overrides)?;
    Ok(0)
}

fn parse_grid(spec: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 6 {
        return Err(Error::Config(format!(
            "grid spec must be a_min,a_max,b_min,b_max,n1,n2, got '{spec}'"
        )));
    }
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad grid number '{s}': {e}")))
    };
    let count = |s: &str| -> Result<usize> {
        s.trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad grid count '{s}': {e}")))
    };
    GridSpec::new(
        (num(parts[0])?, num(parts[1])?),
        (num(parts[2])?, num(parts[3])?),
        count(parts[4])?,
        count(parts[5])?,
    )
}

fn cmd_phase(ctx: &Ctx, system: &str, gamma: f64, beta: f64, k: f64, grid: &str) -> Result<u8> {
    let plane = match system {
        "rs" => Plane::Rs,
        "pq" => Plane::Pq,
        other => {
            return Err(Error::Config(format!(
                "unknown system '{other}' (expected rs or pq)"
            )));
        }
    };
    let params = AuxParams::new(gamma, beta, k)?;
    let spec = parse_grid(grid)?;
    let field = direction_field(plane, &params, &spec)?;
    let field_path = ctx.out_dir.join(format!("field_{system}.csv"));
    {
        let mut w = csv::Writer::from_path(&field_path)?;
        w.write_record(["coord1", "coord2", "v1", "v2"])?;
        for (pt, v) in &field.nodes {
            w.write_record([
                format!("{:?}", pt[0]),
                format!("{:?}", pt[1]),
                format!("{:?}", v[0]),
                format!("{:?}", v[1]),
            ])?;
        }
        w.flush()?;
    }
    let sep_path = ctx.out_dir.join(format!("separatrix_{system}.csv"));
    {
        let mut w = csv::Writer::from_path(&sep_path)?;
        w.write_record(["coord1", "coord2"])?;
        for pt in &field.separatrix {
            w.write_record([format!("{:?}", pt[0]), format!("{:?}", pt[1])])?;
        }
        w.flush()?;
    }
    let cp = critical_point(plane, &params);
    ctx.say(&format!(
        "critical point at ({:?}, {:?}); lambda = {:?}, mu = {:?}",
        cp[0], cp[1], params.roots.lambda, params.roots.mu
    ));
    let mut overrides = BTreeMap::new();
    overrides.insert("system".into(), system.to_string());
    overrides.insert("gamma".into(), format!("{gamma:?}"));
    overrides.insert("beta".into(), format!("{beta:?}"));
    overrides.insert("k".into(), format!("{k:?}"));
    overrides.insert("grid".into(), grid.to_string());
    ctx.write_manifest("phase", None, overrides)?;
    Ok(0)
}

fn cmd_verify(ctx: &Ctx, suite: &str) -> Result<u8> {
    let suite: Suite = suite.parse()?;
    let results = run_suite(suite);
    let mut all_pass = true;
    for check in &results {
        // Always printed: the pass/fail table is the point of the command.
        println!("{check}");
        all_pass &= check.pass;
    }
    #[derive(Serialize)]
    struct CheckRow {
        id: String,
        name: String,
        pass: bool,
        detail: String,
        seconds: f64,
    }
    let rows: Vec<CheckRow> = results
        .iter()
        .map(|c| CheckRow {
            id: c.id.clone(),
            name: c.name.clone(),
            pass: c.pass,
            detail: c.detail.clone(),
            seconds: c.seconds,
        })
        .collect();
    ctx.write_json("verify.json", &rows)?;
    ctx.write_manifest("verify", None, BTreeMap::new())?;
    Ok(if all_pass { 0 } else { 1 })
}
