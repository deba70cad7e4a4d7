use serde::{Deserialize, Serialize};

/// Problem dimensions.
///
/// Path constraints and their slacks live on stages
/// `first_path_stage..horizon`; the terminal constraint on stage `horizon`.
/// Every path row count excludes the `-sigma <= 0` rows, which the solver
/// appends on its own, one per slack component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub nu: usize,
    pub n_theta: usize,
    pub horizon: usize,
    /// Pure input constraint rows per stage.
    pub ng: usize,
    /// Mixed path constraint rows per stage.
    pub nh: usize,
    /// Slack dimension per stage.
    pub ns: usize,
    pub nh_terminal: usize,
    pub ns_terminal: usize,
    pub first_path_stage: usize,
}

impl Dims {
    pub fn new(nx: usize, nu: usize, n_theta: usize, horizon: usize) -> Self {
        Self {
            nx,
            nu,
            n_theta,
            horizon,
            ng: 0,
            nh: 0,
            ns: 0,
            nh_terminal: 0,
            ns_terminal: 0,
            first_path_stage: 0,
        }
    }

    pub fn with_input_constraints(mut self, ng: usize) -> Self {
        self.ng = ng;
        self
    }

    pub fn with_path_constraints(mut self, nh: usize, ns: usize, first_stage: usize) -> Self {
        self.nh = nh;
        self.ns = ns;
        self.first_path_stage = first_stage;
        self
    }

    pub fn with_terminal_constraints(mut self, nh: usize, ns: usize) -> Self {
        self.nh_terminal = nh;
        self.ns_terminal = ns;
        self
    }

    pub fn n(&self) -> usize {
        self.horizon
    }

    fn has_path(&self, k: usize) -> bool {
        k >= self.first_path_stage && k < self.horizon
    }

    /// Path constraint rows (without slack sign rows) at stage `k`.
    pub fn nh_at(&self, k: usize) -> usize {
        if k == self.horizon {
            self.nh_terminal
        } else if self.has_path(k) {
            self.nh
        } else {
            0
        }
    }

    pub fn ns_at(&self, k: usize) -> usize {
        if k == self.horizon {
            self.ns_terminal
        } else if self.has_path(k) {
            self.ns
        } else {
            0
        }
    }

    pub fn ng_at(&self, k: usize) -> usize {
        if k < self.horizon {
            self.ng
        } else {
            0
        }
    }

    pub fn nu_at(&self, k: usize) -> usize {
        if k < self.horizon {
            self.nu
        } else {
            0
        }
    }

    /// Number of inequality rows at stage `k`: input rows, path rows, slack sign rows.
    pub fn n_ineq(&self, k: usize) -> usize {
        self.ng_at(k) + self.nh_at(k) + self.ns_at(k)
    }

    /// Length of the stage vector `z_k = (x_k, u_k, sigma_k)`.
    pub fn nz(&self, k: usize) -> usize {
        self.nx + self.nu_at(k) + self.ns_at(k)
    }

    pub fn is_consistent(&self) -> bool {
        self.horizon >= 1 && self.first_path_stage <= self.horizon
    }
}
