//! The MPC scheme as a function approximator: `V(s)`, `Q(s, a)` and `pi(s)`.

use crate::sensitivity::{grad_q_theta, grad_v_theta};
use crate::solver::{sqp_solve, Solution, SolverSettings};
use crate::{validate, Error, ParametricOcp, PrimalDualPoint, Real, Result};
use nalgebra::DVector;

/// Value and action-value solvers of one parametric problem with warm-start
/// caches. Changing the parameters clears the cached solutions; their
/// primal-dual points are kept as starting guesses.
#[derive(Clone, Debug)]
pub struct MpcAgent<T: Real> {
    ocp: ParametricOcp<T>,
    settings: SolverSettings,
    last_v: Option<Solution<T>>,
    last_q: Option<Solution<T>>,
    warm_v: Option<PrimalDualPoint<T>>,
    warm_q: Option<PrimalDualPoint<T>>,
}

impl<T: Real> MpcAgent<T> {
    pub fn new(ocp: ParametricOcp<T>, settings: SolverSettings) -> Result<Self> {
        settings.check()?;
        let report = validate(&ocp);
        if !report.is_valid() {
            return Err(Error::InvalidArgument(format!(
                "problem fails validation: {:?}",
                report.mismatches
            )));
        }
        Ok(Self {
            ocp,
            settings,
            last_v: None,
            last_q: None,
            warm_v: None,
            warm_q: None,
        })
    }

    pub fn ocp(&self) -> &ParametricOcp<T> {
        &self.ocp
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn theta(&self) -> &DVector<T> {
        self.ocp.theta()
    }

    pub fn set_theta(&mut self, theta: &DVector<T>) -> Result<()> {
        self.ocp.set_theta(theta)?;
        if let Some(v) = self.last_v.take() {
            self.warm_v = Some(v.point);
        }
        if let Some(q) = self.last_q.take() {
            self.warm_q = Some(q.point);
        }
        Ok(())
    }

    pub fn last_value_solution(&self) -> Option<&Solution<T>> {
        self.last_v.as_ref()
    }

    fn finish(sol: Solution<T>) -> Result<Solution<T>> {
        if sol.info.converged() {
            Ok(sol)
        } else {
            Err(Error::NotConverged(format!(
                "status {:?} after {} SQP and {} IP iterations, residual {:e}",
                sol.info.status, sol.info.sqp_iters, sol.info.ip_iters_total, sol.info.final_kkt_residual
            )))
        }
    }

    /// Solves the value NLP at `s`.
    pub fn value(&mut self, s: &DVector<T>) -> Result<(T, Solution<T>)> {
        let warm = self.last_v.as_ref().map(|v| &v.point).or(self.warm_v.as_ref());
        let sol = Self::finish(sqp_solve(&self.ocp, s, None, warm, &self.settings)?)?;
        self.warm_v = None;
        self.last_v = Some(sol.clone());
        Ok((sol.value(), sol))
    }

    /// Solves the action-value NLP at `(s, a)`, warm-started from the value
    /// solution at the same state when there is one.
    pub fn action_value(&mut self, s: &DVector<T>, a: &DVector<T>) -> Result<(T, Solution<T>)> {
        let d = self.ocp.dims();
        if a.len() != d.nu {
            return Err(Error::Dimension {
                what: "action".into(),
                expected: d.nu,
                got: a.len(),
            });
        }
        if d.ng > 0 {
            let g = self
                .ocp
                .input_constraint
                .eval(0, a.as_slice(), self.ocp.theta().as_slice());
            if let Some(v) = g.iter().find(|&&v| v > T::zero()) {
                return Err(Error::Precondition(format!(
                    "action violates an input constraint by {v:e}"
                )));
            }
        }
        let warm = match (&self.last_v, &self.last_q) {
            (Some(v), _) if v.s == *s => Some(&v.point),
            (_, Some(q)) => Some(&q.point),
            (Some(v), None) => Some(&v.point),
            (None, None) => self.warm_q.as_ref().or(self.warm_v.as_ref()),
        };
        let sol = Self::finish(sqp_solve(&self.ocp, s, Some(a), warm, &self.settings)?)?;
        self.warm_q = None;
        self.last_q = Some(sol.clone());
        Ok((sol.value(), sol))
    }

    /// Policy `pi(s) = u_0` of the value solution.
    pub fn act(&mut self, s: &DVector<T>) -> Result<(DVector<T>, Solution<T>)> {
        let (_, sol) = self.value(s)?;
        Ok((sol.u0().clone(), sol))
    }

    pub fn grad_v(&self, sol: &Solution<T>) -> Result<DVector<T>> {
        grad_v_theta(&self.ocp, sol)
    }

    pub fn grad_q(&self, sol: &Solution<T>) -> Result<DVector<T>> {
        grad_q_theta(&self.ocp, sol)
    }
}
