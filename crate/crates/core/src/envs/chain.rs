use super::{Environment, Step};
use crate::ad::{Jet1, Scalar};
use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Physical constants of a chain of masses. The first mass is fixed at the
/// origin and the last one is moved by a velocity input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainMassConfig {
    pub n_mass: usize,
    pub mass: f64,
    /// Per-axis spring stiffness, shared by all links.
    pub stiffness: [f64; 3],
    pub rest_length: [f64; 3],
    pub damping: [f64; 3],
    pub gravity: [f64; 3],
    pub dt: f64,
}

impl Default for ChainMassConfig {
    fn default() -> Self {
        Self {
            n_mass: 5,
            mass: 0.033,
            stiffness: [1.0, 1.2, 0.9],
            rest_length: [0.033, 0.0, 0.0],
            damping: [0.1, 0.1, 0.1],
            gravity: [0.0, 0.0, -9.81],
            dt: 0.1,
        }
    }
}

/// Links, masses and gravity of a chain. State: positions of the `n - 1`
/// free masses followed by velocities of the first `n - 2`; input: velocity
/// of the last mass.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainMassModel {
    pub n_mass: usize,
    /// Per link `i = 1..n`, connecting masses `i - 1` and `i`; index 0 unused.
    pub k: Vec<[f64; 3]>,
    pub l: Vec<[f64; 3]>,
    pub d: Vec<[f64; 3]>,
    /// Per mass; index 0 (fixed) and the last (driven) are unused.
    pub m: Vec<f64>,
    pub gravity: [f64; 3],
    pub dt: f64,
}

/// Singularity threshold on link lengths.
const MIN_LINK: f64 = 1e-9;

impl ChainMassModel {
    pub fn new(cfg: &ChainMassConfig) -> Result<Self> {
        if cfg.n_mass < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 masses, got {}",
                cfg.n_mass
            )));
        }
        if cfg.mass <= 0.0 || cfg.dt <= 0.0 {
            return Err(Error::InvalidArgument("mass and time step must be positive".into()));
        }
        let n = cfg.n_mass;
        Ok(Self {
            n_mass: n,
            k: vec![cfg.stiffness; n],
            l: vec![cfg.rest_length; n],
            d: vec![cfg.damping; n],
            m: vec![cfg.mass; n],
            gravity: cfg.gravity,
            dt: cfg.dt,
        })
    }

    pub fn nx(&self) -> usize {
        6 * (self.n_mass - 1) - 3
    }

    pub fn nu(&self) -> usize {
        3
    }

    fn n_free(&self) -> usize {
        self.n_mass - 1
    }

    /// Position of free mass `i` (1-based) inside the state.
    fn pos<S: Clone>(&self, x: &[S], i: usize) -> [S; 3] {
        std::array::from_fn(|c| x[3 * (i - 1) + c].clone())
    }

    /// Velocity of mass `i`; the last mass moves with `u`.
    fn vel<S: Clone>(&self, x: &[S], u: &[S], i: usize) -> [S; 3] {
        let vo = 3 * self.n_free();
        if i == self.n_free() {
            std::array::from_fn(|c| u[c].clone())
        } else {
            std::array::from_fn(|c| x[vo + 3 * (i - 1) + c].clone())
        }
    }

    /// Force transmitted by link `i` as seen from mass `i`.
    fn link_force<T: Real, S: Scalar<T>>(&self, x: &[S], u: &[S], i: usize) -> [S; 3] {
        let zero = || S::cst(T::zero());
        let (p0, v0) = if i == 1 {
            ([zero(), zero(), zero()], [zero(), zero(), zero()])
        } else {
            (self.pos(x, i - 1), self.vel(x, u, i - 1))
        };
        let p1 = self.pos(x, i);
        let v1 = self.vel(x, u, i);
        let dx: [S; 3] = std::array::from_fn(|c| p1[c].clone() - p0[c].clone());
        let dv: [S; 3] = std::array::from_fn(|c| v1[c].clone() - v0[c].clone());
        let r = (dx[0].clone() * dx[0].clone() + dx[1].clone() * dx[1].clone() + dx[2].clone() * dx[2].clone()).sqrt();
        let rest = norm3(&self.l[i]);
        let scale = S::cst(T::one()) - S::cst(T::of(rest)) / r;
        std::array::from_fn(|c| {
            dx[c].clone() * scale.clone() * T::of(self.k[i][c]) + dv[c].clone() * T::of(self.d[i][c])
        })
    }

    /// Continuous dynamics, generic over the scalar for differentiation.
    pub fn rhs_generic<T: Real, S: Scalar<T>>(&self, x: &[S], u: &[S]) -> Vec<S> {
        let nf = self.n_free();
        let mut out = Vec::with_capacity(self.nx());
        for i in 1..=nf {
            out.extend(self.vel(x, u, i));
        }
        let forces: Vec<[S; 3]> = (1..=nf).map(|i| self.link_force(x, u, i)).collect();
        for i in 1..nf {
            #[allow(clippy::needless_range_loop)]
            for c in 0..3 {
                let net = forces[i][c].clone() - forces[i - 1][c].clone();
                out.push(net / T::of(self.m[i]) + T::of(self.gravity[c]));
            }
        }
        out
    }

    /// Analytic Jacobian of the continuous dynamics with respect to `(x, u)`.
    /// The dynamics are linear in `u`, so it only depends on `x`.
    pub fn rhs_jacobian<T: Real>(&self, x: &[T]) -> DMatrix<T> {
        self.rhs_jacobian_mul(x, &DMatrix::identity(self.nx() + 3, self.nx() + 3))
    }

    /// Product of the continuous-dynamics Jacobian with a tangent `t` of
    /// `(x, u)`, exploiting the sparsity of the links.
    pub fn rhs_jacobian_mul<T: Real>(&self, x: &[T], t: &DMatrix<T>) -> DMatrix<T> {
        let nf = self.n_free();
        let nx = self.nx();
        let vo = 3 * nf;
        let nc = t.ncols();
        let mut out = DMatrix::zeros(nx, nc);
        // Tangent rows of the position / velocity of mass i, component c.
        let prow = |i: usize, c: usize| (i > 0).then(|| 3 * (i - 1) + c);
        let vrow = |i: usize, c: usize| match i {
            0 => None,
            i if i == nf => Some(nx + c),
            i => Some(vo + 3 * (i - 1) + c),
        };
        let diff = |r1: Option<usize>, r0: Option<usize>, j: usize| {
            r1.map_or(T::zero(), |r| t[(r, j)]) - r0.map_or(T::zero(), |r| t[(r, j)])
        };
        for i in 1..=nf {
            for c in 0..3 {
                let src = vrow(i, c).expect("moving mass");
                for j in 0..nc {
                    out[(3 * (i - 1) + c, j)] = t[(src, j)];
                }
            }
        }
        let mut df = vec![T::zero(); 3 * nc];
        for i in 1..=nf {
            let p1: [T; 3] = self.pos(x, i);
            let p0: [T; 3] = if i == 1 { [T::zero(); 3] } else { self.pos(x, i - 1) };
            let dx: [T; 3] = std::array::from_fn(|c| p1[c] - p0[c]);
            let r = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
            let rest = T::of(norm3(&self.l[i]));
            let r3 = r * r * r;
            // dF_c/d(dx_e) of link i.
            let dfdx: [[T; 3]; 3] = std::array::from_fn(|c| {
                std::array::from_fn(|e| {
                    let diag = if c == e { T::one() - rest / r } else { T::zero() };
                    T::of(self.k[i][c]) * (diag + dx[c] * rest * dx[e] / r3)
                })
            });
            for j in 0..nc {
                let dp: [T; 3] = std::array::from_fn(|e| diff(prow(i, e), prow(i - 1, e), j));
                for c in 0..3 {
                    let dv = diff(vrow(i, c), vrow(i - 1, c), j);
                    df[3 * j + c] =
                        dfdx[c][0] * dp[0] + dfdx[c][1] * dp[1] + dfdx[c][2] * dp[2] + T::of(self.d[i][c]) * dv;
                }
            }
            // Link i pulls mass i with -F_i and mass i-1 with +F_i.
            for (mass, sign) in [(i, -T::one()), (i - 1, T::one())] {
                if mass == 0 || mass == nf {
                    continue;
                }
                let row = vo + 3 * (mass - 1);
                let scale = sign / T::of(self.m[mass]);
                for j in 0..nc {
                    for c in 0..3 {
                        out[(row + c, j)] += df[3 * j + c] * scale;
                    }
                }
            }
        }
        out
    }

    /// Jacobian of [`Self::rk4_generic`] with respect to `(x, u)`, by the
    /// chain rule through the four stages.
    pub fn rk4_jacobian<T: Real>(&self, x: &[T], u: &[T], dt: f64) -> DMatrix<T> {
        let nx = self.nx();
        let n = nx + 3;
        let seed = DMatrix::<T>::identity(n, n);
        // Tangent of the stage input (x_s, u) given d x_s / d(x, u).
        let lift = |dxs: DMatrix<T>| -> DMatrix<T> {
            let mut t = seed.clone();
            t.rows_mut(0, nx).copy_from(&dxs);
            t
        };
        let top = seed.rows(0, nx).into_owned();
        let shift = |h: f64, k: &[T]| -> Vec<T> { x.iter().zip(k).map(|(&a, &b)| a + b * T::of(h)).collect() };
        let k1 = self.rhs_generic::<T, T>(x, u);
        let j1 = self.rhs_jacobian_mul(x, &seed);
        let x2 = shift(dt / 2.0, &k1);
        let k2 = self.rhs_generic::<T, T>(&x2, u);
        let j2 = self.rhs_jacobian_mul(&x2, &lift(&top + &j1 * T::of(dt / 2.0)));
        let x3 = shift(dt / 2.0, &k2);
        let k3 = self.rhs_generic::<T, T>(&x3, u);
        let j3 = self.rhs_jacobian_mul(&x3, &lift(&top + &j2 * T::of(dt / 2.0)));
        let x4 = shift(dt, &k3);
        let j4 = self.rhs_jacobian_mul(&x4, &lift(&top + &j3 * T::of(dt)));
        top + (j1 + (j2 + j3) * T::of(2.0) + j4) * T::of(dt / 6.0)
    }

    fn check_links(&self, x: &[f64]) -> Result<()> {
        for i in 1..=self.n_free() {
            let p1 = self.pos(x, i);
            let p0 = if i == 1 { [0.0; 3] } else { self.pos(x, i - 1) };
            let dx = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
            if norm3(&dx) < MIN_LINK {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
        }
        Ok(())
    }

    fn check_dims(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        if x.len() != self.nx() {
            return Err(Error::Dimension {
                what: "chain state".into(),
                expected: self.nx(),
                got: x.len(),
            });
        }
        if u.len() != 3 {
            return Err(Error::Dimension {
                what: "chain input".into(),
                expected: 3,
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `dx/dt`; coincident neighbouring masses are an error.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        self.check_links(x.as_slice())?;
        Ok(DVector::from_vec(
            self.rhs_generic::<f64, f64>(x.as_slice(), u.as_slice()),
        ))
    }

    /// One classical Runge-Kutta step, generic over the scalar.
    pub fn rk4_generic<T: Real, S: Scalar<T>>(&self, x: &[S], u: &[S], dt: f64) -> Vec<S> {
        let axpy = |a: &[S], h: f64, k: &[S]| -> Vec<S> {
            a.iter()
                .zip(k)
                .map(|(ai, ki)| ai.clone() + ki.clone() * T::of(h))
                .collect()
        };
        let k1 = self.rhs_generic(x, u);
        let k2 = self.rhs_generic(&axpy(x, dt / 2.0, &k1), u);
        let k3 = self.rhs_generic(&axpy(x, dt / 2.0, &k2), u);
        let k4 = self.rhs_generic(&axpy(x, dt, &k3), u);
        (0..x.len())
            .map(|i| {
                let incr = k1[i].clone() + (k2[i].clone() + k3[i].clone()) * T::of(2.0) + k4[i].clone();
                x[i].clone() + incr * T::of(dt / 6.0)
            })
            .collect()
    }

    pub fn rk4_step(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        self.check_links(x.as_slice())?;
        let next = DVector::from_vec(self.rk4_generic::<f64, f64>(x.as_slice(), u.as_slice(), dt));
        if next.iter().all(|v| v.is_finite()) {
            Ok(next)
        } else {
            Err(Error::Singular {
                condition: f64::INFINITY,
            })
        }
    }

    /// Resting state with the driven mass held at `end`, by damped Newton
    /// iterations on the accelerations of the intermediate masses.
    pub fn equilibrium(&self, end: [f64; 3]) -> Result<DVector<f64>> {
        let nf = self.n_free();
        let nv = 3 * (nf - 1);
        let mut p = DVector::zeros(nv);
        for i in 1..nf {
            let frac = i as f64 / nf as f64;
            for c in 0..3 {
                p[3 * (i - 1) + c] = frac * end[c];
            }
            // Sag below the straight line helps the springs start stretched.
            p[3 * (i - 1) + 2] -= 0.1 * frac * (1.0 - frac);
        }
        let full = |p: &[f64]| -> DVector<f64> {
            let mut x = DVector::zeros(self.nx());
            x.rows_mut(0, nv).copy_from_slice(p);
            x.rows_mut(nv, 3).copy_from_slice(&end);
            x
        };
        let accel = |p: &[f64]| -> DVector<f64> {
            let x = full(p);
            let r = self.rhs_generic::<f64, f64>(x.as_slice(), &[0.0; 3]);
            DVector::from_column_slice(&r[3 * nf..])
        };
        let mut res = accel(p.as_slice());
        for _ in 0..100 {
            let norm = res.amax();
            if norm <= 1e-12 {
                break;
            }
            let xj: Vec<Jet1<f64>> = Jet1::vars(full(p.as_slice()).as_slice(), 0, self.nx());
            let uj = vec![Jet1::constant(0.0); 3];
            let r = self.rhs_generic::<f64, Jet1<f64>>(&xj, &uj);
            let rows: Vec<Vec<f64>> = r[3 * nf..].iter().map(|ri| ri.grad(self.nx())).collect();
            let jac = DMatrix::from_fn(nv, nv, |i, j| rows[i][j]);
            let step = jac.lu().solve(&(-&res)).ok_or(Error::Singular {
                condition: f64::INFINITY,
            })?;
            let mut alpha = 1.0;
            loop {
                let trial = &p + &step * alpha;
                let tr = accel(trial.as_slice());
                if tr.iter().all(|v| v.is_finite()) && tr.amax() < norm || alpha < 1e-8 {
                    p = trial;
                    res = tr;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if res.amax() > 1e-9 {
            return Err(Error::NotConverged(format!("equilibrium residual {:e}", res.amax())));
        }
        Ok(full(p.as_slice()))
    }

    /// Kinetic plus spring plus gravitational energy. Requires isotropic
    /// springs, for which the link forces derive from a potential.
    pub fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        let iso = self.k.iter().skip(1).all(|k| k[0] == k[1] && k[1] == k[2]);
        if !iso {
            return Err(Error::Precondition("energy needs isotropic springs".into()));
        }
        let nf = self.n_free();
        let u = [0.0; 3];
        let mut e = 0.0;
        for i in 1..=nf {
            let p1 = self.pos(x.as_slice(), i);
            let p0 = if i == 1 {
                [0.0; 3]
            } else {
                self.pos(x.as_slice(), i - 1)
            };
            let r = norm3(&[p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]]);
            e += 0.5 * self.k[i][0] * (r - norm3(&self.l[i])).powi(2);
            if i < nf {
                let v = self.vel(x.as_slice(), &u, i);
                e += 0.5 * self.m[i] * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                e -= self.m[i] * (0..3).map(|c| self.gravity[c] * p1[c]).sum::<f64>();
            }
        }
        Ok(e)
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// The chain as an environment: the plant is exactly the prediction model.
/// Stage cost is `1/2 (|x - x_ref|^2 + |u|^2)`.
#[derive(Clone, Debug)]
pub struct ChainMassEnv {
    pub model: ChainMassModel,
    pub reference: DVector<f64>,
    state: DVector<f64>,
}

impl ChainMassEnv {
    pub fn new(model: ChainMassModel, reference: DVector<f64>) -> Self {
        let state = reference.clone();
        Self {
            model,
            reference,
            state,
        }
    }
}

impl Environment for ChainMassEnv {
    fn state_dim(&self) -> usize {
        self.model.nx()
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn seed(&mut self, _seed: u64) {}

    fn reset(&mut self, s0: &DVector<f64>, _seed: Option<u64>) -> DVector<f64> {
        self.state = s0.clone();
        self.state.clone()
    }

    fn state(&self) -> &DVector<f64> {
        &self.state
    }

    fn step(&mut self, a: &DVector<f64>) -> Step {
        let cost = 0.5 * ((&self.state - &self.reference).norm_squared() + a.norm_squared());
        let next = self
            .model
            .rk4_step(&self.state, a, self.model.dt)
            .unwrap_or_else(|_| DVector::from_element(self.model.nx(), f64::NAN));
        self.state = next.clone();
        Step {
            state: next,
            cost,
            violations: 0,
        }
    }
}
