//! Monte Carlo probes of the large deviation statements at desk scale:
//! the slope of `−ε log P(Y^ε ∈ E)`, Laplace functionals, the law of large
//! numbers and stochastic continuity of the controlled equation.
//!
//! Each probe takes one seed. The slope probe draws every `ε` from its own
//! named substream; the LLN and continuity probes reuse one substream for
//! all `ε` (common random numbers), so their tables are monotone path by
//! path whenever the deviation is.

use serde::{Deserialize, Serialize};

use crate::action::{minimize_rate, MamConfig, PathFunctional, RateStatus, TargetEvent};
use crate::coeffs::CoefficientPair;
use crate::error::{Error, Result};
use crate::path::{Control, TimeGrid, Trajectory};
use crate::rng::substream_seed;
use crate::sde::{simulate_map, DistanceObserver, NoiseConfig, PathObserver, TrajectoryObserver};
use crate::skeleton::{solve_skeleton, SkeletonConfig};
use crate::stats::{effective_sample_size, jackknife, log_mean_exp, median, ols_line, weighted_line, wilson};
use crate::triple::SpectralTriple;
use crate::Scalar;

/// Normal quantile of the reported 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Records whether a path ends up in the event.
struct EventObserver<'a, S> {
    event: &'a TargetEvent<S>,
    path: Option<TrajectoryObserver<S>>,
    last: Vec<S>,
}

impl<S: Scalar> PathObserver<S> for EventObserver<'_, S> {
    type Output = (bool, bool);
    fn observe(&mut self, i: usize, t: S, state: &[S]) {
        match &mut self.path {
            Some(p) => p.observe(i, t, state),
            None => {
                self.last.clear();
                self.last.extend_from_slice(state);
            }
        }
    }
    fn finish(self, blown_up: bool) -> (bool, bool) {
        if blown_up {
            return (false, true);
        }
        let hit = match self.path {
            Some(p) => self.event.contains(&p.finish(false).0),
            None => self.event.contains_endpoint(&self.last).unwrap_or(false),
        };
        (hit, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitCount {
    pub hits: u64,
    pub n: u64,
    pub blown_up: u64,
}

impl HitCount {
    pub fn p_hat(&self) -> f64 {
        self.hits as f64 / self.n as f64
    }
}

/// Counts paths of `Y^ε` that land in `event`. Blown-up paths count as
/// misses and are reported.
pub fn hit_count<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    event: &TargetEvent<S>,
    eps: S,
    x: &[S],
    grid: TimeGrid<S>,
    noise: &NoiseConfig,
    n_paths: usize,
) -> Result<HitCount> {
    event.check_dim(pair.dim())?;
    let m = pair.dim();
    let out = simulate_map(pair, eps, x, grid, noise, None, n_paths, |_| EventObserver {
        event,
        path: (!event.is_endpoint()).then(|| TrajectoryObserver::new(grid, m)),
        last: Vec::new(),
    })?;
    Ok(HitCount {
        hits: out.iter().filter(|o| o.0).count() as u64,
        n: n_paths as u64,
        blown_up: out.iter().filter(|o| o.1).count() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRow {
    pub eps: f64,
    pub seed: u64,
    pub hits: u64,
    pub n: u64,
    pub blown_up: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `−ε log P̂` and its delta-method standard error.
    pub scaled_log: f64,
    pub scaled_log_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub rows: Vec<EpsRow>,
    /// The two `ε` used in the fit.
    pub fit_eps: Vec<f64>,
    /// Intercept `I` of `−ε log P̂ = I + cε`.
    pub fitted_rate: f64,
    pub fitted_rate_se: f64,
    pub slope: f64,
    /// Minimized rate over the event (`+∞` for the infeasible verdict).
    pub rate_ref: f64,
    pub warnings: Vec<String>,
}

/// Seed of the `ε`-specific substream under `seed`.
pub fn eps_seed(seed: u64, tag: &str, eps: f64) -> u64 {
    substream_seed(seed, &format!("{tag}/eps={eps:e}"))
}

/// Fit of `−ε log P̂ = I + cε` on the two smallest `ε` with hits.
/// Weighted line through the two smallest noise levels with hits.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub eps: Vec<f64>,
    pub intercept: f64,
    pub intercept_se: f64,
    pub slope: f64,
    pub warnings: Vec<String>,
}

pub fn fit_rate(rows: &[EpsRow]) -> Result<RateFit> {
    let mut warnings = Vec::new();
    let mut usable: Vec<&EpsRow> = Vec::new();
    for r in rows {
        if r.hits == 0 {
            warnings.push(format!("no hits at eps = {}; dropped from the fit", r.eps));
        } else {
            usable.push(r);
        }
    }
    if usable.len() < 2 {
        return Err(Error::InsufficientHits(format!(
            "{} of {} noise levels have hits, need 2",
            usable.len(),
            rows.len()
        )));
    }
    usable.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let pick = &usable[..2];
    let x: Vec<f64> = pick.iter().map(|r| r.eps).collect();
    let y: Vec<f64> = pick.iter().map(|r| r.scaled_log).collect();
    let s: Vec<f64> = pick.iter().map(|r| r.scaled_log_se).collect();
    let fit = if s.iter().all(|&v| v > 0.0) { weighted_line(&x, &y, &s) } else { ols_line(&x, &y) }
        .ok_or_else(|| Error::InsufficientHits("degenerate fit".into()))?;
    Ok(RateFit { eps: x, intercept: fit.intercept, intercept_se: fit.intercept_se, slope: fit.slope, warnings })
}

/// Estimates `P(Y^ε ∈ event)` on every `ε` and compares the fitted rate
/// with the minimized rate over the event.
#[allow(clippy::too_many_arguments)]
pub fn ldp_slope<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    event: &TargetEvent<S>,
    eps_list: &[f64],
    n_paths: usize,
    x: &[S],
    grid: TimeGrid<S>,
    seed: u64,
    mam: &MamConfig,
) -> Result<SlopeReport> {
    if eps_list.len() < 3 {
        return Err(Error::InvalidParameter("need at least three noise levels".into()));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let s = eps_seed(seed, "ldp", eps);
        let noise = NoiseConfig { noise_dim: pair.noise_dim(), seed: s };
        let c = hit_count(pair, event, S::c(eps), x, grid, &noise, n_paths)?;
        let p = c.p_hat();
        let (lo, hi) = wilson(c.hits, c.n, Z95);
        let (scaled_log, scaled_log_se) = if c.hits == 0 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            (-eps * p.ln(), eps * ((1.0 - p) / (c.n as f64 * p)).sqrt())
        };
        rows.push(EpsRow {
            eps,
            seed: s,
            hits: c.hits,
            n: c.n,
            blown_up: c.blown_up,
            p_hat: p,
            ci_low: lo,
            ci_high: hi,
            scaled_log,
            scaled_log_se,
        });
    }
    let r = minimize_rate(triple, pair, event, x, grid, mam)?;
    let rate_ref = if r.status == RateStatus::Infeasible { f64::INFINITY } else { r.value.f64() };
    match fit_rate(&rows) {
        Ok(f) => Ok(SlopeReport {
            rows,
            fit_eps: f.eps,
            fitted_rate: f.intercept,
            fitted_rate_se: f.intercept_se,
            slope: f.slope,
            rate_ref,
            warnings: f.warnings,
        }),
        Err(e) if rate_ref.is_infinite() && rows.iter().all(|r| r.hits == 0) => {
            // consistent with inf ∅ = +∞: nothing to fit
            Ok(SlopeReport {
                warnings: vec![format!("{e}; event infeasible")],
                rows,
                fit_eps: Vec::new(),
                fitted_rate: f64::INFINITY,
                fitted_rate_se: f64::NAN,
                slope: f64::NAN,
                rate_ref,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub eps: f64,
    /// `−ε log Ê[exp(−h(Y^ε)/ε)]`.
    pub value: f64,
    /// Jackknife bias-corrected value and standard error.
    pub jackknife_value: f64,
    pub jackknife_se: f64,
    pub effective_sample_size: f64,
    pub blown_up: usize,
    pub warnings: Vec<String>,
}

struct FunctionalObserver<'a, S> {
    h: &'a dyn PathFunctional<S>,
    path: TrajectoryObserver<S>,
}

impl<S: Scalar> PathObserver<S> for FunctionalObserver<'_, S> {
    type Output = Option<f64>;
    fn observe(&mut self, i: usize, t: S, state: &[S]) {
        self.path.observe(i, t, state);
    }
    fn finish(self, blown_up: bool) -> Option<f64> {
        (!blown_up).then(|| self.h.value(&self.path.finish(false).0).f64())
    }
}

/// Monte Carlo Laplace functional `−ε log E[exp(−h(Y^ε)/ε)]`.
#[allow(clippy::too_many_arguments)]
pub fn laplace_estimate<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    h: &dyn PathFunctional<S>,
    eps: f64,
    n_paths: usize,
    x: &[S],
    grid: TimeGrid<S>,
    seed: u64,
) -> Result<LaplaceEstimate> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("noise level must be positive, got {eps}")));
    }
    let noise = NoiseConfig { noise_dim: pair.noise_dim(), seed: eps_seed(seed, "laplace", eps) };
    let m = pair.dim();
    let out = simulate_map(pair, S::c(eps), x, grid, &noise, None, n_paths, |_| FunctionalObserver {
        h,
        path: TrajectoryObserver::new(grid, m),
    })?;
    let blown_up = out.iter().filter(|o| o.is_none()).count();
    let a: Vec<f64> = out.iter().flatten().map(|&v| -v / eps).collect();
    if a.is_empty() {
        return Err(Error::InsufficientHits("every path blew up".into()));
    }
    let stat = |xs: &[f64]| -eps * log_mean_exp(xs);
    let value = stat(&a);
    let (jackknife_value, jackknife_se) = jackknife(&a, 20, stat);
    let ess = effective_sample_size(&a);
    let mut warnings = Vec::new();
    if ess < 10.0 {
        warnings.push(format!("degenerate weights: effective sample size {ess:.2} < 10"));
    }
    if blown_up > 0 {
        warnings.push(format!("{blown_up} paths hit the overflow guard and were excluded"));
    }
    Ok(LaplaceEstimate {
        eps,
        value,
        jackknife_value,
        jackknife_se,
        effective_sample_size: ess,
        blown_up,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnRow {
    pub eps: f64,
    /// Median and mean of `sup_t ‖Y^ε − u⁰‖_H`.
    pub median: f64,
    pub mean: f64,
    pub blown_up: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnReport {
    pub rows: Vec<LlnRow>,
    /// Log-log slope of the median against `ε` over the positive `ε`.
    pub slope: f64,
    pub strictly_decreasing: bool,
}

fn check_decreasing(eps_list: &[f64]) -> Result<()> {
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::InvalidParameter("noise levels must be nonnegative and strictly decreasing".into()));
    }
    Ok(())
}

/// Distances of the controlled paths to a reference, for each `ε` on one
/// shared noise stream.
#[allow(clippy::too_many_arguments)]
fn distance_table<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    reference: &Trajectory<S>,
    control: Option<&Control<S>>,
    eps_list: &[f64],
    n_paths: usize,
    x: &[S],
    seed: u64,
) -> Result<Vec<Vec<crate::sde::PathDistance<S>>>> {
    let noise = NoiseConfig { noise_dim: pair.noise_dim(), seed };
    eps_list
        .iter()
        .map(|&eps| {
            simulate_map(pair, S::c(eps), x, reference.grid, &noise, control, n_paths, |_| {
                DistanceObserver::new(triple, reference)
            })
        })
        .collect()
}

/// Median `sup_t ‖Y^ε − u⁰‖_H` over `ε`.
#[allow(clippy::too_many_arguments)]
pub fn lln_check<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    eps_list: &[f64],
    n_paths: usize,
    x: &[S],
    grid: TimeGrid<S>,
    seed: u64,
    cfg: &SkeletonConfig<S>,
) -> Result<LlnReport> {
    check_decreasing(eps_list)?;
    let zero = Control::zeros(grid, pair.noise_dim());
    let u0 = solve_skeleton(triple, pair, &zero, x, cfg)?.trajectory;
    let tables = distance_table(triple, pair, &u0, None, eps_list, n_paths, x, substream_seed(seed, "lln"))?;
    let rows: Vec<LlnRow> = eps_list
        .iter()
        .zip(&tables)
        .map(|(&eps, t)| {
            let d: Vec<f64> = t.iter().filter(|p| !p.blown_up).map(|p| p.sup_h.f64()).collect();
            LlnRow {
                eps,
                median: median(&d),
                mean: d.iter().sum::<f64>() / d.len().max(1) as f64,
                blown_up: t.len() - d.len(),
            }
        })
        .collect();
    let pos: Vec<&LlnRow> = rows.iter().filter(|r| r.eps > 0.0 && r.median > 0.0).collect();
    let lx: Vec<f64> = pos.iter().map(|r| r.eps.ln()).collect();
    let ly: Vec<f64> = pos.iter().map(|r| r.median.ln()).collect();
    let slope = ols_line(&lx, &ly).map_or(f64::NAN, |f| f.slope);
    let strictly_decreasing = rows.windows(2).all(|w| w[1].median < w[0].median);
    Ok(LlnReport { rows, slope, strictly_decreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub control: usize,
    pub eps: f64,
    pub delta: f64,
    pub exceed: u64,
    pub n: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub rows: Vec<ContinuityRow>,
    /// Per `(control, δ)`: whether `P̂` strictly decreases along `ε`.
    pub strictly_decreasing: Vec<(usize, f64, bool)>,
}

/// `P̂(‖X^ε − u^Ψ‖_MR > δ)` for deterministic controls `Ψ`.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_continuity_probe<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    controls: &[Control<S>],
    eps_list: &[f64],
    deltas: &[f64],
    n_paths: usize,
    x: &[S],
    seed: u64,
    cfg: &SkeletonConfig<S>,
) -> Result<ContinuityReport> {
    check_decreasing(eps_list)?;
    let mut rows = Vec::new();
    let mut strictly_decreasing = Vec::new();
    for (ci, psi) in controls.iter().enumerate() {
        let u = solve_skeleton(triple, pair, psi, x, cfg)?.trajectory;
        let s = substream_seed(seed, &format!("continuity/{ci}"));
        let tables = distance_table(triple, pair, &u, Some(psi), eps_list, n_paths, x, s)?;
        for &delta in deltas {
            let mut ps = Vec::new();
            for (&eps, t) in eps_list.iter().zip(&tables) {
                let exceed = t.iter().filter(|p| !(p.mr.f64() <= delta)).count() as u64;
                let n = t.len() as u64;
                let (lo, hi) = wilson(exceed, n, Z95);
                let p = exceed as f64 / n as f64;
                ps.push(p);
                rows.push(ContinuityRow { control: ci, eps, delta, exceed, n, p_hat: p, ci_low: lo, ci_high: hi });
            }
            strictly_decreasing.push((ci, delta, ps.windows(2).all(|w| w[1] < w[0])));
        }
    }
    Ok(ContinuityReport { rows, strictly_decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ConstantFunctional;
    use crate::models::ou;

    #[test]
    fn whole_space_event() {
        let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let ev = TargetEvent::PathFunctional(std::sync::Arc::new(ConstantFunctional(-1.0)));
        let r = ldp_slope(&triple, &pair, &ev, &[0.2, 0.1, 0.05], 200, &[0.0], grid, 1, &MamConfig::default()).unwrap();
        assert!(r.rows.iter().all(|r| r.p_hat == 1.0));
        assert_eq!(r.fitted_rate, 0.0);
        assert_eq!(r.rate_ref, 0.0);
    }

    #[test]
    fn constant_laplace_functional() {
        let (pair, _) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let e = laplace_estimate(&pair, &ConstantFunctional(0.7), 0.1, 100, &[0.0], grid, 2).unwrap();
        assert!((e.value - 0.7).abs() < 1e-12);
        assert!(e.jackknife_se < 1e-12);
    }

    #[test]
    fn lln_is_exactly_sqrt_eps_for_ou() {
        let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let r = lln_check(&triple, &pair, &[0.2, 0.1, 0.05, 0.0], 100, &[0.5], grid, 3, &SkeletonConfig::default())
            .unwrap();
        assert!((r.slope - 0.5).abs() < 1e-9, "{}", r.slope);
        assert!(r.rows[3].median < 1e-9);
        assert!(r.strictly_decreasing);
    }
}
