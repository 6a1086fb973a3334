//! Time grids, piecewise-constant controls and trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::triple::SpectralTriple;

/// Uniform grid `t_i = iT/N`, `i = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<S> {
    pub t_final: S,
    pub steps: usize,
}

impl<S: Scalar> TimeGrid<S> {
    pub fn new(t_final: S, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter("time grid needs at least one step".into()));
        }
        if !(t_final > S::zero()) || !t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { t_final, steps })
    }

    pub fn dt(&self) -> S {
        self.t_final / S::from_usize_lossy(self.steps)
    }

    pub fn node(&self, i: usize) -> S {
        self.t_final * S::from_usize_lossy(i) / S::from_usize_lossy(self.steps)
    }

    /// Midpoint of cell `i`.
    pub fn midpoint(&self, i: usize) -> S {
        (self.node(i) + self.node(i + 1)) * S::c(0.5)
    }

    /// The grid with twice as many steps.
    pub fn refined(&self) -> Self {
        Self { t_final: self.t_final, steps: 2 * self.steps }
    }
}

/// Control `ψ ∈ L²(0,T; ℝ^{K_U})`, constant on each grid cell. Stored cell
/// by cell: `values[i*K_U .. (i+1)*K_U]` is `ψ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control<S> {
    pub grid: TimeGrid<S>,
    pub noise_dim: usize,
    pub values: Vec<S>,
}

impl<S: Scalar> Control<S> {
    pub fn zeros(grid: TimeGrid<S>, noise_dim: usize) -> Self {
        Self { grid, noise_dim, values: vec![S::zero(); grid.steps * noise_dim] }
    }

    pub fn from_values(grid: TimeGrid<S>, noise_dim: usize, values: Vec<S>) -> Result<Self> {
        crate::error::check_dim(grid.steps * noise_dim, values.len())?;
        Ok(Self { grid, noise_dim, values })
    }

    /// Same vector `c` on every cell.
    pub fn constant(grid: TimeGrid<S>, c: &[S]) -> Self {
        let mut values = Vec::with_capacity(grid.steps * c.len());
        for _ in 0..grid.steps {
            values.extend_from_slice(c);
        }
        Self { grid, noise_dim: c.len(), values }
    }

    /// Cell values `ψ_i = f(midpoint of cell i)`.
    pub fn from_fn(grid: TimeGrid<S>, noise_dim: usize, mut f: impl FnMut(S) -> Vec<S>) -> Self {
        let mut values = Vec::with_capacity(grid.steps * noise_dim);
        for i in 0..grid.steps {
            let v = f(grid.midpoint(i));
            assert_eq!(v.len(), noise_dim, "control function returned wrong length");
            values.extend(v);
        }
        Self { grid, noise_dim, values }
    }

    /// `amplitude · sin(2πnt) · e_dir`, with exact cell averages so the
    /// result is the `L²` projection onto piecewise constants.
    pub fn oscillatory(grid: TimeGrid<S>, noise_dim: usize, n: usize, dir: usize, amplitude: S) -> Self {
        let mut c = Self::zeros(grid, noise_dim);
        if n == 0 {
            return c;
        }
        let w = S::c(2.0) * S::PI() * S::from_usize_lossy(n);
        let dt = grid.dt();
        for i in 0..grid.steps {
            let (a, b) = (grid.node(i), grid.node(i + 1));
            c.values[i * noise_dim + dir] = amplitude * ((w * a).cos() - (w * b).cos()) / (w * dt);
        }
        c
    }

    pub fn cell(&self, i: usize) -> &[S] {
        &self.values[i * self.noise_dim..(i + 1) * self.noise_dim]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.values[i * self.noise_dim..(i + 1) * self.noise_dim]
    }

    /// `‖ψ‖²_{L²(0,T;U)}`.
    pub fn l2_sq(&self) -> S {
        self.values.iter().map(|&x| x * x).sum::<S>() * self.grid.dt()
    }

    pub fn l2_norm(&self) -> S {
        self.l2_sq().sqrt()
    }

    /// `½ ∫ ‖ψ‖²`.
    pub fn action(&self) -> S {
        self.l2_sq() * S::c(0.5)
    }

    pub fn scaled(&self, s: S) -> Self {
        Self { grid: self.grid, noise_dim: self.noise_dim, values: self.values.iter().map(|&x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        crate::error::check_dim(self.values.len(), other.values.len())?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect();
        Ok(Self { grid: self.grid, noise_dim: self.noise_dim, values })
    }

    /// Restriction to cells `a..b`, on a grid of length `t_b − t_a`.
    pub fn window(&self, a: usize, b: usize) -> Self {
        let grid = TimeGrid { t_final: self.grid.node(b) - self.grid.node(a), steps: b - a };
        Self { grid, noise_dim: self.noise_dim, values: self.values[a * self.noise_dim..b * self.noise_dim].to_vec() }
    }
}

/// States at the nodes of a grid, stored node by node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub grid: TimeGrid<S>,
    pub dim: usize,
    pub states: Vec<S>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn zeros(grid: TimeGrid<S>, dim: usize) -> Self {
        Self { grid, dim, states: vec![S::zero(); (grid.steps + 1) * dim] }
    }

    /// `u(t) = f(t)` at every node.
    pub fn from_fn(grid: TimeGrid<S>, dim: usize, mut f: impl FnMut(S) -> Vec<S>) -> Self {
        let mut states = Vec::with_capacity((grid.steps + 1) * dim);
        for i in 0..=grid.steps {
            let v = f(grid.node(i));
            assert_eq!(v.len(), dim, "state function returned wrong length");
            states.extend(v);
        }
        Self { grid, dim, states }
    }

    pub fn len(&self) -> usize {
        self.grid.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[S] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn state_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[S] {
        self.state(self.grid.steps)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[S]> {
        self.states.chunks_exact(self.dim)
    }

    /// `‖u‖_MR = sup_t ‖u(t)‖_H + (∫‖u(t)‖²_V dt)^{1/2}`, sup over nodes and
    /// the time integral by the trapezoidal rule.
    pub fn mr_norm(&self, triple: &SpectralTriple<S>) -> S {
        mr_of(triple, self.grid, self.iter())
    }

    /// `sup_t ‖u(t)‖_H` over nodes.
    pub fn sup_h(&self, triple: &SpectralTriple<S>) -> S {
        self.iter().map(|u| triple.h(u)).fold(S::zero(), S::max)
    }

    pub fn mr_distance(&self, triple: &SpectralTriple<S>, other: &Self) -> S {
        mr_of(triple, self.grid, self.iter().zip(other.iter()).map(|(a, b)| crate::scalar::sub(a, b)))
    }

    pub fn sup_h_distance(&self, triple: &SpectralTriple<S>, other: &Self) -> S {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| triple.h(&crate::scalar::sub(a, b)))
            .fold(S::zero(), S::max)
    }

    /// Nodes `a..=b`, on a grid of length `t_b − t_a`.
    pub fn window(&self, a: usize, b: usize) -> Self {
        let grid = TimeGrid { t_final: self.grid.node(b) - self.grid.node(a), steps: b - a };
        Self { grid, dim: self.dim, states: self.states[a * self.dim..(b + 1) * self.dim].to_vec() }
    }

    /// `⟨u(t_i), w(t_i)⟩_H` at every node.
    pub fn pointwise_inner(&self, other: &Self) -> Vec<S> {
        self.iter().zip(other.iter()).map(|(a, b)| dot(a, b)).collect()
    }
}

pub(crate) fn mr_of<S: Scalar, V: AsRef<[S]>>(
    triple: &SpectralTriple<S>,
    grid: TimeGrid<S>,
    states: impl Iterator<Item = V>,
) -> S {
    let mut sup = S::zero();
    let mut integral = S::zero();
    let mut prev: Option<S> = None;
    let half_dt = grid.dt() * S::c(0.5);
    for u in states {
        let u = u.as_ref();
        sup = sup.max(triple.h(u));
        let v = triple.v_sq(u);
        if let Some(p) = prev {
            integral += half_dt * (p + v);
        }
        prev = Some(v);
    }
    sup + integral.sqrt()
}

/// Running maximum of the `H`-norm and trapezoidal `L²(V)` integral, for
/// streaming over a path without storing it.
#[derive(Debug, Clone, Copy)]
pub struct MrAccumulator<S> {
    sup: S,
    integral: S,
    prev: Option<S>,
    half_dt: S,
}

impl<S: Scalar> MrAccumulator<S> {
    pub fn new(dt: S) -> Self {
        Self { sup: S::zero(), integral: S::zero(), prev: None, half_dt: dt * S::c(0.5) }
    }

    pub fn push(&mut self, triple: &SpectralTriple<S>, u: &[S]) {
        self.sup = self.sup.max(triple.h(u));
        let v = triple.v_sq(u);
        if let Some(p) = self.prev {
            self.integral += self.half_dt * (p + v);
        }
        self.prev = Some(v);
    }

    pub fn value(&self) -> S {
        self.sup + self.integral.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn mr_norm_examples() {
        let triple = SpectralTriple::new(vec![PI * PI, 4.0 * PI * PI]).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        assert_eq!(Trajectory::zeros(grid, 2).mr_norm(&triple), 0.0);
        let c = Trajectory::from_fn(grid, 2, |_| vec![1.0, 0.0]);
        assert_relative_eq!(c.mr_norm(&triple), 1.0 + PI, epsilon = 1e-12);
    }

    #[test]
    fn action_on_cells() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let c = Control::constant(grid, &[3.0]);
        assert_relative_eq!(c.action(), 4.5, epsilon = 1e-14);
        let grid = TimeGrid::new(2.0, 2).unwrap();
        let two = Control::from_values(grid, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        assert_relative_eq!(two.action(), 0.5 * (5.0 + 1.25), epsilon = 1e-14);
    }

    #[test]
    fn oscillatory_cells_average_exactly() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let c = Control::<f64>::oscillatory(grid, 2, 1, 1, 1.0);
        // the average over a full period vanishes
        let s: f64 = (0..8).map(|i| c.cell(i)[1]).sum();
        assert!(s.abs() < 1e-14);
        assert!(c.values.iter().step_by(2).all(|&x| x == 0.0));
        assert_eq!(Control::<f64>::oscillatory(grid, 1, 0, 0, 1.0).l2_sq(), 0.0);
    }
}
