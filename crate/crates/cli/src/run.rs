//! Subcommand execution and artifact bookkeeping.

use std::fs;
use std::path::{Path, PathBuf};

use critvar::action::{minimize_rate, EndpointDistanceSq, LinearEndpoint, PathFunctional, RateStatus};
use critvar::coeffs::{
    check_subcriticality, probe_coercivity_a0b0, probe_coercivity_ab, probe_lipschitz, Coefficient, Criticality,
};
use critvar::io::{write_control_csv, write_json, write_paths_csv, write_table_csv, write_trajectory_csv};
use critvar::ldp::{laplace_estimate, ldp_slope, lln_check, stochastic_continuity_probe};
use critvar::linalg::{DenseMatrix, NoiseMatrix};
use critvar::lq::LqOracle;
use critvar::models::{linear_sde, Model, ModelSpec};
use critvar::path::{Control, TimeGrid, Trajectory};
use critvar::rng::{substream, substream_seed};
use critvar::sde::{ito_identity_check, ito_order, simulate, tightness_constant, tightness_probe, NoiseConfig};
use critvar::skeleton::{chain_rule_defect, fixed_point_defect, global_bound, residual, solve_skeleton};
use critvar::triple::Space;
use critvar::Error;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ExperimentConfig, LaplaceSpec, LdpProbe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Check,
    Skeleton,
    Simulate,
    Rate,
    Ldp,
    Convergence,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Check => "check",
            Subcommand::Skeleton => "skeleton",
            Subcommand::Simulate => "simulate",
            Subcommand::Rate => "rate",
            Subcommand::Ldp => "ldp",
            Subcommand::Convergence => "convergence",
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const VIOLATION: i32 = 2;
    pub const NONCONVERGENCE: i32 = 3;
}

/// Why a run stopped early.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    /// A certified property failed; `detail` carries the witness.
    Violation { message: String, detail: Value },
    Nonconvergence(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => exit::CONFIG,
            Failure::Violation { .. } => exit::VIOLATION,
            Failure::Nonconvergence(_) => exit::NONCONVERGENCE,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Nonconvergence(m) => m,
            Failure::Violation { message, .. } => message,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Rejected { reason, witness } => Failure::Violation {
                message: format!("rejected: {reason}"),
                detail: json!({ "reason": reason, "witness": witness }),
            },
            Error::Nonconvergence(_)
            | Error::ContractionFailure { .. }
            | Error::InsufficientHits(_)
            | Error::LinearSolve { .. } => Failure::Nonconvergence(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Single writer for everything under the output directory.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn emit(&mut self, name: &str, write: impl FnOnce(&Path) -> critvar::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        write(&path).map_err(|e| Failure::Config(format!("writing {name}: {e}")))?;
        let bytes = fs::read(&path).map_err(|e| Failure::Config(format!("reading back {name}: {e}")))?;
        self.files.retain(|f| f.file != name);
        self.files.push(OutputFile { file: name.to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        self.emit(name, |p| write_json(p, value))
    }

    pub fn table<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        self.emit(name, |p| write_table_csv(p, rows))
    }

    pub fn trajectory(&mut self, name: &str, traj: &Trajectory<f64>) -> Result<()> {
        self.emit(name, |p| write_trajectory_csv(p, traj))
    }

    pub fn control(&mut self, name: &str, psi: &Control<f64>) -> Result<()> {
        self.emit(name, |p| write_control_csv(p, psi))
    }

    pub fn paths(&mut self, name: &str, trajs: &[Trajectory<f64>]) -> Result<()> {
        self.emit(name, |p| write_paths_csv(p, trajs))
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical JSON form of the effective config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub critvar_version: &'static str,
    pub subcommand: &'static str,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config_sha256: String,
    pub config: &'a ExperimentConfig,
    pub outputs: &'a [OutputFile],
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs one subcommand, writes its artifacts plus `manifest.json`, and
/// returns the exit code.
pub fn execute(cfg: &ExperimentConfig, cmd: Subcommand, out_dir: &Path, threads: Option<usize>) -> i32 {
    let mut out = match Outputs::new(out_dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", out_dir.display());
            return exit::CONFIG;
        }
    };
    let result = dispatch(cfg, cmd, &mut out);
    let (code, error) = match &result {
        Ok(()) => (exit::OK, None),
        Err(f) => {
            if let Failure::Violation { detail, .. } = f {
                let _ = out.json("violation.json", &json!({ "message": f.message(), "detail": detail }));
            }
            (f.code(), Some(f.message().to_string()))
        }
    };
    let manifest = Manifest {
        tool: "critvar",
        version: env!("CARGO_PKG_VERSION"),
        critvar_version: critvar::VERSION,
        subcommand: cmd.name(),
        seed: cfg.seed,
        threads,
        config_sha256: config_hash(cfg),
        config: cfg,
        outputs: out.files(),
        exit_code: code,
        error: error.clone(),
    };
    if let Err(e) = write_json(&out_dir.join("manifest.json"), &manifest) {
        eprintln!("error: writing manifest: {e}");
        return exit::CONFIG;
    }
    if let Some(e) = error {
        eprintln!("error: {e}");
    }
    code
}

fn dispatch(cfg: &ExperimentConfig, cmd: Subcommand, out: &mut Outputs) -> Result<()> {
    match cmd {
        Subcommand::Check => check(cfg, out),
        Subcommand::Skeleton => skeleton(cfg, out),
        Subcommand::Simulate => simulate_cmd(cfg, out),
        Subcommand::Rate => rate(cfg, out),
        Subcommand::Ldp => ldp(cfg, out),
        Subcommand::Convergence => convergence(cfg, out),
    }
}

fn build(spec: &ModelSpec) -> Result<Model<f64>> {
    Ok(spec.build::<f64>()?)
}

fn check(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let model = match build(&cfg.model) {
        Ok(m) => m,
        Err(f) => {
            if let Failure::Violation { detail, .. } = &f {
                out.json("check.json", &json!({ "model": cfg.model.name(), "constructor": "rejected", "detail": detail }))?;
            }
            return Err(f);
        }
    };
    let (pair, triple) = (model.pair.as_ref(), &model.triple);
    let c = &cfg.check;
    let t = cfg.grid.t_final;
    let exps = pair.exponents();
    let verdicts = check_subcriticality(exps)?;
    let exponents: Vec<Value> = exps
        .iter()
        .zip(&verdicts)
        .map(|(e, v)| json!({ "rho": e.rho.to_string(), "beta": e.beta.to_string(), "verdict": v }))
        .collect();
    let ab = probe_coercivity_ab(pair, triple, t, c.n_samples, &mut substream(cfg.seed, "check/coercivity"))?;
    let lead =
        probe_coercivity_a0b0(pair, triple, c.radius, t, c.n_samples, None, &mut substream(cfg.seed, "check/leading"))?;
    let mut lipschitz = serde_json::Map::new();
    for (name, which, active) in
        [("f", Coefficient::F, pair.has_drift()), ("g", Coefficient::G, pair.has_state_noise())]
    {
        if active {
            let p = probe_lipschitz(pair, triple, which, c.radius, t, c.n_samples, &mut substream(cfg.seed, &format!("check/lip/{name}")))?;
            lipschitz.insert(name.into(), json!({ "c_hat": p.c_hat, "c_hat_half": p.c_hat_half }));
        }
    }
    let declared = pair.coercivity();
    let report = json!({
        "model": pair.name(),
        "constructor": "accepted",
        "dim": pair.dim(),
        "noise_dim": pair.noise_dim(),
        "exponents": exponents,
        "coercivity": {
            "declared_theta": declared.theta,
            "declared_m": declared.m,
            "theta_hat": ab.theta_hat,
            "falsified": ab.falsified(),
            "witness_t": ab.witness_t,
            "witness_v": ab.witness_v,
        },
        "leading_coercivity": {
            "theta_hat": lead.theta_hat,
            "theta_hat_unshifted": lead.theta_hat_unshifted,
            "m_shift": lead.m_shift,
        },
        "lipschitz": lipschitz,
    });
    out.json("check.json", &report)?;
    if let Some(i) = verdicts.iter().position(|v| *v == Criticality::Violated) {
        return Err(Failure::Violation {
            message: format!("exponent {} violates the subcriticality bound", exps[i]),
            detail: report["exponents"][i].clone(),
        });
    }
    if ab.falsified() {
        return Err(Failure::Violation {
            message: format!("coercivity falsified: theta_hat = {:e}", ab.theta_hat),
            detail: report["coercivity"].clone(),
        });
    }
    Ok(())
}

fn skeleton(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let model = build(&cfg.model)?;
    let (pair, triple) = (model.pair.as_ref(), &model.triple);
    let grid = cfg.grid()?;
    let x = cfg.initial.resolve(pair.dim())?;
    let psi = cfg.control.build(grid, pair.noise_dim())?;
    let sol = solve_skeleton(triple, pair, &psi, &x, &cfg.skeleton)?;
    let u = &sol.trajectory;
    let mr = u.mr_norm(triple);
    let bound = global_bound(pair, &psi, &x);
    let report = json!({
        "model": pair.name(),
        "action": psi.action(),
        "mr_norm": mr,
        "sup_h": u.sup_h(triple),
        "terminal_h": triple.norm(u.last(), Space::H)?,
        "residual": residual(triple, pair, &psi, u)?,
        "fixed_point_defect": fixed_point_defect(triple, pair, &psi, &sol)?,
        "chain_rule_defect": chain_rule_defect(pair, &psi, u)?,
        "global_bound": bound,
        "global_bound_margin": bound - mr,
        "max_contraction_factor": sol.report.max_contraction_factor(),
        "windows": sol.report.windows.len(),
        "rejected_windows": sol.report.rejected_windows,
        "iterations": sol.report.total_iterations(),
    });
    out.trajectory("skeleton.csv", u)?;
    out.control("control.csv", &psi)?;
    out.json("skeleton.json", &report)?;
    if bound - mr < 0.0 || mr.is_nan() {
        return Err(Failure::Violation {
            message: format!("negative global bound margin {:e}", bound - mr),
            detail: json!({ "global_bound": bound, "mr_norm": mr }),
        });
    }
    Ok(())
}

fn simulate_cmd(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let model = build(&cfg.model)?;
    let (pair, triple) = (model.pair.as_ref(), &model.triple);
    let grid = cfg.grid()?;
    let x = cfg.initial.resolve(pair.dim())?;
    let psi = cfg.control.build(grid, pair.noise_dim())?;
    let s = &cfg.simulate;
    let noise = NoiseConfig { noise_dim: pair.noise_dim(), seed: substream_seed(cfg.seed, "simulate") };
    let controlled = !matches!(cfg.control, crate::config::ControlSpec::Zero);
    let ens = simulate(pair, s.eps, &x, grid, &noise, controlled.then_some(&psi), s.n_paths)?;
    let ito = ito_identity_check(&ens, pair);
    let c = tightness_constant(pair, &x, psi.l2_norm(), grid.t_final);
    let rows = tightness_probe(&ens, triple, &s.gammas, c);
    let blown = ens.blown_up.iter().filter(|&&b| b).count();
    let keep = s.save_paths.min(ens.len());
    out.paths("paths.csv", &ens.trajectories[..keep])?;
    out.table("tightness.csv", &rows)?;
    out.json(
        "simulate.json",
        &json!({
            "model": pair.name(),
            "eps": s.eps,
            "n_paths": s.n_paths,
            "blown_up": blown,
            "noise_seed": noise.seed,
            "ito": ito,
            "tightness_constant": c,
            "tightness": rows,
        }),
    )?;
    if let Some(r) = rows.iter().find(|r| !r.respected) {
        return Err(Failure::Violation {
            message: format!("tightness envelope exceeded at gamma = {}", r.gamma),
            detail: serde_json::to_value(r).expect("row serializes"),
        });
    }
    Ok(())
}

/// The linear pair behind an `ou` spec, for the exact LQ reference.
fn linear_oracle(spec: &ModelSpec, x: &[f64], grid: TimeGrid<f64>) -> Option<LqOracle<f64>> {
    let ModelSpec::Ou { a, sigma, n } = spec else { return None };
    let am = DenseMatrix::from_row_major(*n, a.clone()).ok()?;
    let cols: Vec<Vec<f64>> = sigma.chunks(*n).map(<[f64]>::to_vec).collect();
    let (pair, _) = linear_sde(am, NoiseMatrix::from_columns(*n, &cols).ok()?).ok()?;
    LqOracle::new(&pair, x, grid).ok()
}

fn rate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let model = build(&cfg.model)?;
    let (pair, triple) = (model.pair.as_ref(), &model.triple);
    let grid = cfg.grid()?;
    let x = cfg.initial.resolve(pair.dim())?;
    let spec = cfg.event.as_ref().ok_or_else(|| Failure::Config("rate needs an [event] section".into()))?;
    let event = spec.build()?;
    let r = minimize_rate(triple, pair, &event, &x, grid, &cfg.mam)?;
    let oracle = linear_oracle(&cfg.model, &x, grid).and_then(|o| match spec {
        crate::config::EventSpec::Ball { center, radius } => o.ball_cost(center, *radius).ok(),
        crate::config::EventSpec::Halfspace { direction, level } => o.halfspace_cost(direction, *level).ok(),
    });
    let u = critvar::skeleton::forward_march(pair, &r.control, &x)?;
    out.control("rate_control.csv", &r.control)?;
    out.trajectory("rate_path.csv", &u)?;
    out.json(
        "rate.json",
        &json!({
            "model": pair.name(),
            "value": if r.value.is_finite() { json!(r.value) } else { json!("inf") },
            "status": r.status,
            "constraint_violation": r.constraint_violation,
            "certificate": r.certificate,
            "oracle_value": oracle,
            "stages": r.stages,
        }),
    )?;
    if r.status == RateStatus::Converged && r.certificate.global_bound_margin < 0.0 {
        return Err(Failure::Violation {
            message: "negative global bound margin along the minimizer".into(),
            detail: serde_json::to_value(&r.certificate).expect("certificate serializes"),
        });
    }
    Ok(())
}

fn ldp(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let model = build(&cfg.model)?;
    let (pair, triple) = (model.pair.as_ref(), &model.triple);
    let grid = cfg.grid()?;
    let x = cfg.initial.resolve(pair.dim())?;
    let l = &cfg.ldp;
    let mut summary = serde_json::Map::new();
    for probe in &l.probes {
        match probe {
            LdpProbe::Slope => {
                let spec = cfg.event.as_ref().ok_or_else(|| Failure::Config("the slope probe needs an [event] section".into()))?;
                let rep = ldp_slope(triple, pair, &spec.build()?, &l.eps, l.n_paths, &x, grid, cfg.seed, &cfg.mam)?;
                out.table("ldp_slope.csv", &rep.rows)?;
                summary.insert(
                    "slope".into(),
                    json!({
                        "fitted_rate": finite_or_str(rep.fitted_rate),
                        "fitted_rate_se": finite_or_str(rep.fitted_rate_se),
                        "rate_ref": finite_or_str(rep.rate_ref),
                        "fit_eps": rep.fit_eps,
                        "warnings": rep.warnings,
                    }),
                );
            }
            LdpProbe::Laplace => {
                let spec = l.laplace.as_ref().ok_or_else(|| Failure::Config("the laplace probe needs [ldp.laplace]".into()))?;
                let h: Box<dyn PathFunctional<f64>> = match spec {
                    LaplaceSpec::Linear { d } => Box::new(LinearEndpoint(d.clone())),
                    LaplaceSpec::DistanceSq { target } => Box::new(EndpointDistanceSq(target.clone())),
                };
                let rows: Vec<_> =
                    l.eps.iter().map(|&e| laplace_estimate(pair, h.as_ref(), e, l.n_paths, &x, grid, cfg.seed)).collect::<critvar::Result<_>>()?;
                out.json("laplace.json", &rows)?;
                summary.insert("laplace".into(), json!(rows.len()));
            }
            LdpProbe::Lln => {
                let mut eps = l.eps.clone();
                eps.sort_by(|a, b| b.total_cmp(a));
                let rep = lln_check(triple, pair, &eps, l.n_paths, &x, grid, cfg.seed, &cfg.skeleton)?;
                out.table("lln.csv", &rep.rows)?;
                summary.insert("lln".into(), json!({ "slope": rep.slope, "strictly_decreasing": rep.strictly_decreasing }));
            }
            LdpProbe::Continuity => {
                let mut eps = l.eps.clone();
                eps.sort_by(|a, b| b.total_cmp(a));
                let psi = cfg.control.build(grid, pair.noise_dim())?;
                let rep = stochastic_continuity_probe(triple, pair, &[psi], &eps, &l.deltas, l.n_paths, &x, cfg.seed, &cfg.skeleton)?;
                out.table("continuity.csv", &rep.rows)?;
                summary.insert("continuity".into(), json!({ "strictly_decreasing": rep.strictly_decreasing }));
            }
        }
    }
    out.json("ldp.json", &summary)
}

fn finite_or_str(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

#[derive(Debug, Serialize)]
struct RefinementRow {
    level: usize,
    parameter: usize,
    value: f64,
    difference: Option<f64>,
    ratio: Option<f64>,
}

fn refinement_rows(params: &[usize], values: &[f64]) -> Vec<RefinementRow> {
    let diffs: Vec<Option<f64>> =
        (0..values.len()).map(|i| (i > 0).then(|| (values[i] - values[i - 1]).abs())).collect();
    (0..values.len())
        .map(|i| RefinementRow {
            level: i,
            parameter: params[i],
            value: values[i],
            difference: diffs[i],
            ratio: match (i >= 2, diffs.get(i.wrapping_sub(1)).copied().flatten(), diffs[i]) {
                (true, Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            },
        })
        .collect()
}

/// The spec with the Galerkin size (`m`) or the noise truncation (`K_U`)
/// scaled by `2^level`; `None` when the model has no such knob.
fn refined(spec: &ModelSpec, level: usize, noise: bool) -> Option<(ModelSpec, usize)> {
    let f = 1usize << level;
    let mut s = spec.clone();
    let p = match (&mut s, noise) {
        (ModelSpec::Heat1d { cutoff, .. }, false) | (ModelSpec::Ns2d { cutoff, .. }, false) => {
            *cutoff *= f;
            *cutoff
        }
        (ModelSpec::AllenCahn { m, .. }, false) => {
            *m *= f;
            *m
        }
        (ModelSpec::AllenCahn { noise_modes, m, .. }, true) => {
            *noise_modes = (*noise_modes * f).min(*m);
            *noise_modes
        }
        _ => return None,
    };
    Some((s, p))
}

fn convergence(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let model = build(&cfg.model)?;
    let (pair, triple) = (model.pair.as_ref(), &model.triple);
    let c = &cfg.convergence;
    let levels = c.levels.max(2);
    let x = cfg.initial.resolve(pair.dim())?;
    let mut summary = serde_json::Map::new();

    // Δt: terminal skeleton state under step halving
    let mut steps = Vec::new();
    let mut finals: Vec<Vec<f64>> = Vec::new();
    for l in 0..levels {
        let grid = TimeGrid::new(cfg.grid.t_final, cfg.grid.steps << l)?;
        let psi = cfg.control.build(grid, pair.noise_dim())?;
        let u = solve_skeleton(triple, pair, &psi, &x, &cfg.skeleton)?.trajectory;
        steps.push(grid.steps);
        finals.push(u.last().to_vec());
    }
    let norms: Vec<f64> = finals.iter().map(|v| triple.norm(v, Space::H)).collect::<critvar::Result<_>>()?;
    let dt_rows = refinement_rows(&steps, &norms);
    out.table("convergence_dt.csv", &dt_rows)?;
    summary.insert("dt".into(), serde_json::to_value(&dt_rows).expect("rows serialize"));

    // m: terminal skeleton H-norm under Galerkin refinement
    let grid = cfg.grid()?;
    let mut params = Vec::new();
    let mut values = Vec::new();
    for l in 0..levels {
        let Some((spec, p)) = refined(&cfg.model, l, false) else { break };
        let m = build(&spec)?;
        let xm = cfg.initial.resolve(m.pair.dim())?;
        let psi = cfg.control.build(grid, m.pair.noise_dim())?;
        let u = solve_skeleton(&m.triple, m.pair.as_ref(), &psi, &xm, &cfg.skeleton)?.trajectory;
        params.push(p);
        values.push(m.triple.norm(u.last(), Space::H)?);
    }
    if !params.is_empty() {
        let rows = refinement_rows(&params, &values);
        out.table("convergence_modes.csv", &rows)?;
        summary.insert("modes".into(), serde_json::to_value(&rows).expect("rows serialize"));
    }

    // K_U: Monte Carlo mean of ‖Y(T)‖²_H under noise refinement, common seed
    let mut params = Vec::new();
    let mut values = Vec::new();
    for l in 0..levels {
        let Some((spec, p)) = refined(&cfg.model, l, true) else { break };
        if params.last() == Some(&p) {
            break;
        }
        let m = build(&spec)?;
        let noise = NoiseConfig { noise_dim: m.pair.noise_dim(), seed: substream_seed(cfg.seed, "convergence/noise") };
        let ens = simulate(m.pair.as_ref(), c.eps, &x, grid, &noise, None, c.n_paths)?;
        let sq: Vec<f64> =
            ens.trajectories.iter().map(|t| m.triple.norm(t.last(), Space::H).map(|n| n * n)).collect::<critvar::Result<_>>()?;
        params.push(p);
        values.push(sq.iter().sum::<f64>() / sq.len().max(1) as f64);
    }
    if !params.is_empty() {
        let rows = refinement_rows(&params, &values);
        out.table("convergence_noise.csv", &rows)?;
        summary.insert("noise".into(), serde_json::to_value(&rows).expect("rows serialize"));
    }

    let ito = ito_order(pair, c.eps, &x, grid, levels, substream_seed(cfg.seed, "convergence/ito"), c.n_paths)?;
    out.json("ito_order.json", &ito)?;
    summary.insert("ito_order".into(), serde_json::to_value(&ito).expect("report serializes"));
    out.json("convergence.json", &summary)
}
