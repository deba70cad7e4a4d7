//! Validation suites run against a parametric problem: Bellman identities,
//! gradients against central finite differences, and the linear-system
//! residual of the sensitivity solves.

use crate::agent::MpcAgent;
use crate::sensitivity::{grad_q_theta, grad_v_theta, policy_gradient, SensitivityMethod};
use crate::solver::{sqp_solve, Solution, SolverSettings};
use crate::{Error, ParametricOcp, PrimalDualPoint, Result};
use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

/// Outcome of one suite.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    /// Worst observed error in the suite's own metric.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub elapsed: Duration,
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            cases: 0,
            max_error: 0.0,
            tolerance,
            passed: true,
            elapsed: Duration::ZERO,
            notes: Vec::new(),
        }
    }

    fn record(&mut self, err: f64, tol: f64, what: impl FnOnce() -> String) {
        let scaled = err / tol * self.tolerance;
        if !(scaled <= self.tolerance) {
            self.passed = false;
            self.notes.push(format!("{} (error {err:.3e} > {tol:.1e})", what()));
        }
        if scaled.is_nan() || scaled > self.max_error {
            self.max_error = scaled;
        }
    }

    fn fail(&mut self, note: String) {
        self.passed = false;
        self.notes.push(note);
    }
}

/// `|a - b|_inf / max(|a|_inf, |b|_inf, 1)`, entrywise version.
pub fn rel_err_entry(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn rel_err_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| rel_err_entry(*x, *y))
        .fold(0.0, f64::max)
}

/// True when every complementarity pair has one member well separated from
/// zero: `min(lam, t) / max(lam, t) < ratio`.
pub fn has_stable_active_set(p: &PrimalDualPoint<f64>, ratio: f64) -> bool {
    p.lam
        .iter()
        .zip(&p.t)
        .flat_map(|(l, t)| l.iter().zip(t.iter()))
        .all(|(&l, &t)| l.min(t) < ratio * l.max(t))
}

fn uniform_box(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..=hi))
}

#[derive(Clone, Debug)]
pub struct BellmanCheck {
    pub states: usize,
    pub actions_per_state: usize,
    pub state_range: (f64, f64),
    pub action_range: (f64, f64),
    pub tol: f64,
    pub seed: u64,
}

impl Default for BellmanCheck {
    fn default() -> Self {
        Self {
            states: 50,
            actions_per_state: 20,
            state_range: (-1.0, 1.0),
            action_range: (-1.0, 1.0),
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// `Q(s, pi(s)) = V(s)` and `Q(s, a) >= V(s)` on random states and actions.
pub fn bellman_suite(ocp: &ParametricOcp<f64>, cfg: &BellmanCheck, settings: &SolverSettings) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rep = SuiteReport::new("Bellman", cfg.tol);
    let mut agent = MpcAgent::new(ocp.clone(), *settings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = *ocp.dims();
    for _ in 0..cfg.states {
        let s = uniform_box(&mut rng, d.nx, cfg.state_range.0, cfg.state_range.1);
        let (v, vsol) = match agent.value(&s) {
            Ok(r) => r,
            Err(e) => {
                rep.fail(format!("V solve failed at s = {s:?}: {e}"));
                continue;
            }
        };
        let pi = vsol.u0().clone();
        // Cold start: warm-started from the value solution, the Q solve
        // would return that same point without iterating.
        match sqp_solve(ocp, &s, Some(&pi), None, settings).and_then(|q| q.require_converged().map(|_| q.value())) {
            Ok(q) => {
                rep.cases += 1;
                rep.record((q - v).abs(), cfg.tol, || {
                    format!("Q(s, pi(s)) != V(s) at s = {:?}", s.as_slice())
                });
            }
            Err(e) => rep.fail(format!("Q solve at pi(s) failed: {e}")),
        }
        for _ in 0..cfg.actions_per_state {
            let a = uniform_box(&mut rng, d.nu, cfg.action_range.0, cfg.action_range.1);
            match agent.action_value(&s, &a) {
                Ok((q, _)) => {
                    rep.cases += 1;
                    rep.record((v - q).max(0.0), cfg.tol, || {
                        format!("Q(s, a) < V(s) at s = {:?}, a = {:?}", s.as_slice(), a.as_slice())
                    });
                }
                Err(e) => rep.fail(format!("Q solve failed at a = {:?}: {e}", a.as_slice())),
            }
        }
    }
    rep.elapsed = start.elapsed();
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub states: usize,
    pub state_range: (f64, f64),
    pub action_range: (f64, f64),
    /// Central-difference step for `V` and `Q`.
    pub step_value: f64,
    /// Central-difference step for `pi`.
    pub step_policy: f64,
    pub tol: f64,
    /// Tolerance on the linear-system residual of every sensitivity solve.
    pub residual_tol: f64,
    /// Complementarity separation required of sampled solutions.
    pub stability_ratio: f64,
    /// Name of the additive value offset parameter, if any.
    pub offset_param: Option<String>,
    /// Negates the analytic gradients before comparing (fault injection).
    pub flip_sign: bool,
    pub seed: u64,
    /// KKT tolerance of all solves in this suite.
    pub kkt_tol: f64,
    /// Barrier level of all solves in this suite. The value gradient is
    /// exact for the barrier-augmented objective, so the plain objective
    /// differs from it by a term that vanishes like `sqrt(tau)` near weakly
    /// active constraints.
    pub tau_min: f64,
}

impl Default for GradientCheck {
    fn default() -> Self {
        Self {
            states: 10,
            state_range: (-1.0, 1.0),
            action_range: (-1.0, 1.0),
            step_value: 1e-6,
            step_policy: 1e-5,
            tol: 1e-4,
            residual_tol: 1e-6,
            stability_ratio: 0.1,
            offset_param: Some("V0".into()),
            flip_sign: false,
            seed: 1,
            kkt_tol: 1e-11,
            tau_min: 1e-12,
        }
    }
}

/// Both suites that need sensitivity evaluations.
#[derive(Clone, Debug)]
pub struct GradientReports {
    pub gradient: SuiteReport,
    pub ift_residual: SuiteReport,
}

struct Perturbed<'a> {
    ocp: ParametricOcp<f64>,
    base: &'a Solution<f64>,
    settings: &'a SolverSettings,
}

impl Perturbed<'_> {
    /// Central difference of `read` over every parameter. `None` when a
    /// perturbed solve fails or changes the active set.
    fn central<F>(&mut self, h: f64, ratio: f64, rows: usize, read: F) -> Result<Option<DMatrix<f64>>>
    where
        F: Fn(&Solution<f64>) -> DVector<f64>,
    {
        let n = self.ocp.dims().n_theta;
        let theta0 = self.ocp.theta().clone();
        let mut out = DMatrix::zeros(rows, n);
        for i in 0..n {
            let mut vals = Vec::with_capacity(2);
            for sign in [1.0, -1.0] {
                let mut th = theta0.clone();
                th[i] += sign * h;
                self.ocp.set_theta(&th)?;
                let sol = sqp_solve(
                    &self.ocp,
                    &self.base.s,
                    self.base.a.as_ref(),
                    Some(&self.base.point),
                    self.settings,
                )?;
                if !sol.info.converged() || !has_stable_active_set(&sol.point, ratio) {
                    self.ocp.set_theta(&theta0)?;
                    return Ok(None);
                }
                vals.push(read(&sol));
            }
            out.set_column(i, &((&vals[0] - &vals[1]) / (2.0 * h)));
        }
        self.ocp.set_theta(&theta0)?;
        Ok(Some(out))
    }
}

fn row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

/// `grad V`, `grad Q` and `grad pi` against central finite differences on
/// random states whose solutions have a stable active set, plus the
/// residual of every sensitivity solve.
pub fn gradient_suites(
    ocp: &ParametricOcp<f64>,
    cfg: &GradientCheck,
    settings: &SolverSettings,
) -> Result<GradientReports> {
    let start = Instant::now();
    let mut grad = SuiteReport::new("FD-gradient", cfg.tol);
    let mut ift = SuiteReport::new("IFT-residual", cfg.residual_tol);
    let settings = SolverSettings {
        kkt_tol: cfg.kkt_tol,
        tau_min: cfg.tau_min,
        ..*settings
    };
    settings.check()?;
    let d = *ocp.dims();
    let sign = if cfg.flip_sign { -1.0 } else { 1.0 };
    let offset = match &cfg.offset_param {
        Some(name) => Some(
            ocp.registry()
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter slice {name}")))?
                .start,
        ),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < cfg.states && attempts < 50 * cfg.states.max(1) {
        attempts += 1;
        let s = uniform_box(&mut rng, d.nx, cfg.state_range.0, cfg.state_range.1);
        let a = uniform_box(&mut rng, d.nu, cfg.action_range.0, cfg.action_range.1);
        let vsol = sqp_solve(ocp, &s, None, None, &settings)?;
        if !vsol.info.converged() || !has_stable_active_set(&vsol.point, cfg.stability_ratio) {
            debug!(
                "skipping state {:?}: not converged or unstable active set",
                s.as_slice()
            );
            continue;
        }
        let qsol = sqp_solve(ocp, &s, Some(&a), Some(&vsol.point), &settings)?;
        if !qsol.info.converged() || !has_stable_active_set(&qsol.point, cfg.stability_ratio) {
            continue;
        }
        let mut pv = Perturbed {
            ocp: ocp.clone(),
            base: &vsol,
            settings: &settings,
        };
        let Some(fd_v) = pv.central(cfg.step_value, cfg.stability_ratio, 1, |r| {
            DVector::from_element(1, r.value())
        })?
        else {
            continue;
        };
        let Some(fd_pi) = pv.central(cfg.step_policy, cfg.stability_ratio, d.nu, |r| r.u0().clone())? else {
            continue;
        };
        let mut pq = Perturbed {
            ocp: ocp.clone(),
            base: &qsol,
            settings: &settings,
        };
        let Some(fd_q) = pq.central(cfg.step_value, cfg.stability_ratio, 1, |r| {
            DVector::from_element(1, r.value())
        })?
        else {
            continue;
        };
        accepted += 1;
        grad.cases += 1;
        ift.cases += 1;
        let tag = format!("s = {:?}", s.as_slice());

        let gv = grad_v_theta(ocp, &vsol)? * sign;
        let gq = grad_q_theta(ocp, &qsol)? * sign;
        grad.record(rel_err_max(&row(&gv), &fd_v), cfg.tol, || format!("grad V at {tag}"));
        grad.record(rel_err_max(&row(&gq), &fd_q), cfg.tol, || {
            format!("grad Q at {tag}, a = {:?}", a.as_slice())
        });
        if let Some(i) = offset {
            grad.record((gv[i] - 1.0).abs(), 1e-10, || format!("dV/dV0 at {tag}"));
            grad.record((gq[i] - 1.0).abs(), 1e-10, || format!("dQ/dV0 at {tag}"));
        }
        for method in [SensitivityMethod::Structured, SensitivityMethod::Dense] {
            let (gp, res) = policy_gradient(ocp, &vsol, method)?;
            let gp = gp * sign;
            grad.record(rel_err_max(&gp, &fd_pi), cfg.tol, || {
                format!("grad pi ({method:?}) at {tag}")
            });
            if let Some(i) = offset {
                grad.record(gp.column(i).amax(), 1e-8, || format!("dpi/dV0 ({method:?}) at {tag}"));
            }
            ift.record(res, cfg.residual_tol, || {
                format!("{method:?} sensitivity residual at {tag}")
            });
        }
    }
    if accepted < cfg.states {
        let note = format!("only {accepted} of {} states had a stable active set", cfg.states);
        grad.fail(note.clone());
        ift.fail(note);
    }
    let elapsed = start.elapsed();
    grad.elapsed = elapsed;
    ift.elapsed = elapsed;
    info!("gradient suites: {accepted} states in {attempts} attempts, {elapsed:?}");
    Ok(GradientReports {
        gradient: grad,
        ift_residual: ift,
    })
}
