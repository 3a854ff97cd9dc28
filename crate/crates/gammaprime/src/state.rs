//! Discrete field state and the interleaved unknown-vector layout used by
//! the nonlinear solver.
//!
//! A state holds the composition `c`, the order parameter `eta`, and (when
//! elasticity is active) one displacement component per active grid axis.
//! The solver works on a single flat vector with one block per cell,
//!
//! ```text
//! X = [ c_0, eta_0, u_0^x, ..., c_1, eta_1, u_1^x, ..., ... ]
//! ```
//!
//! i.e. block size `2 + d` with elasticity and `2` without. Keeping each
//! cell's unknowns adjacent makes the Jacobian point-block structured, which
//! is what the subdomain factorizations rely on.
//!
//! `cbar0` is the mean composition frozen at initialization. The eigenstrain
//! references it instead of the live mean: the two agree identically (the
//! flux form conserves the mean), and freezing keeps the elastic rows local
//! — a live mean would couple every displacement row to every composition
//! unknown.

use crate::grid::{tree_sum, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub c: Vec<f64>,
    pub eta: Vec<f64>,
    /// One displacement component per active axis; empty when elasticity is
    /// disabled.
    pub u: Vec<Vec<f64>>,
    /// Mean composition frozen at initialization (eigenstrain reference).
    pub cbar0: f64,
}

impl DiscreteState {
    /// Uniform state; `with_displacement` adds zeroed displacement fields
    /// (one per active axis).
    pub fn uniform(grid: &Grid, c0: f64, eta0: f64, with_displacement: bool) -> DiscreteState {
        let n = grid.ncells();
        let nu = if with_displacement { grid.ndim() } else { 0 };
        DiscreteState {
            c: vec![c0; n],
            eta: vec![eta0; n],
            u: (0..nu).map(|_| vec![0.0; n]).collect(),
            cbar0: c0,
        }
    }

    /// Build from explicit fields, freezing `cbar0` from `c`.
    pub fn from_fields(grid: &Grid, c: Vec<f64>, eta: Vec<f64>, u: Vec<Vec<f64>>) -> DiscreteState {
        assert_eq!(c.len(), grid.ncells());
        assert_eq!(eta.len(), grid.ncells());
        for comp in &u {
            assert_eq!(comp.len(), grid.ncells());
        }
        let cbar0 = tree_sum(&c) / grid.ncells() as f64;
        DiscreteState { c, eta, u, cbar0 }
    }

    /// Number of unknowns per cell.
    #[inline]
    pub fn block_size(&self) -> usize {
        2 + self.u.len()
    }

    /// Total unknown count.
    #[inline]
    pub fn nunknowns(&self) -> usize {
        self.c.len() * self.block_size()
    }

    /// Mean composition of the current `c` field.
    pub fn mean_c(&self) -> f64 {
        tree_sum(&self.c) / self.c.len() as f64
    }

    /// Interleave fields into the solver vector layout.
    pub fn pack(&self, x: &mut Vec<f64>) {
        let nb = self.block_size();
        x.resize(self.c.len() * nb, 0.0);
        for i in 0..self.c.len() {
            x[i * nb] = self.c[i];
            x[i * nb + 1] = self.eta[i];
            for (a, comp) in self.u.iter().enumerate() {
                x[i * nb + 2 + a] = comp[i];
            }
        }
    }

    /// Overwrite fields from a solver vector of matching layout.
    pub fn unpack(&mut self, x: &[f64]) {
        let nb = self.block_size();
        assert_eq!(x.len(), self.c.len() * nb);
        for i in 0..self.c.len() {
            self.c[i] = x[i * nb];
            self.eta[i] = x[i * nb + 1];
            for a in 0..self.u.len() {
                self.u[a][i] = x[i * nb + 2 + a];
            }
        }
    }
}
