//! Uniform space–time grid, tent-function interpolation, and the exterior
//! extension that supplies values outside the localized domain.

use std::fmt;
use std::sync::Arc;

use arrayvec::ArrayVec;

use crate::error::{Error, Result};

/// Relative tolerance (in cell units) for snapping a point onto a node.
const SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeGrid {
    x_lo: f64,
    x_hi: f64,
    h: f64,
    n_cells: usize,
    dt: f64,
    n_steps: usize,
    horizon: f64,
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let n = r.round();
    if !(r.is_finite() && n >= 1.0 && ((r - n) / n).abs() <= 1e-12) {
        return Err(Error::config(format!(
            "{what} = {r} is not a positive integer"
        )));
    }
    Ok(n as usize)
}

impl SpaceTimeGrid {
    pub fn new(x_lo: f64, x_hi: f64, h: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(h > 0.0 && dt > 0.0 && horizon > 0.0 && x_hi > x_lo) {
            return Err(Error::config(format!(
                "grid needs h > 0, dt > 0, T > 0 and x_hi > x_lo (got h={h}, dt={dt}, T={horizon}, [{x_lo}, {x_hi}])"
            )));
        }
        let n_cells = integer_ratio(x_hi - x_lo, h, "(x_hi - x_lo)/h")?;
        let n_steps = integer_ratio(horizon, dt, "T/dt")?;
        if n_cells < 2 {
            return Err(Error::config("grid needs at least one interior node"));
        }
        Ok(SpaceTimeGrid {
            x_lo,
            x_hi,
            h,
            n_cells,
            dt,
            n_steps,
            horizon,
        })
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }
    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    /// Number of nodes including both boundary nodes.
    pub fn len(&self) -> usize {
        self.n_cells + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn last(&self) -> usize {
        self.n_cells
    }
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.x_hi
        } else {
            self.x_lo + i as f64 * self.h
        }
    }
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }
    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }
    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i == self.n_cells
    }
    /// Index of the node at `x`, if `x` lies on the grid.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let s = (x - self.x_lo) / self.h;
        let r = s.round();
        if (s - r).abs() <= SNAP && r >= 0.0 && r <= self.n_cells as f64 {
            Some(r as usize)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRef {
    Node(usize),
    Exterior,
}

pub type TentWeights = ArrayVec<(NodeRef, f64), 2>;

/// Piecewise-linear interpolation weights of `x` on `grid`. Points outside
/// `[x_lo, x_hi]` get a single exterior entry of weight one.
pub fn tent_weights(x: f64, grid: &SpaceTimeGrid) -> TentWeights {
    let mut w = TentWeights::new();
    let s = (x - grid.x_lo) / grid.h;
    let last = grid.n_cells as f64;
    if s < -SNAP || s > last + SNAP || !s.is_finite() {
        w.push((NodeRef::Exterior, 1.0));
        return w;
    }
    let r = s.round();
    if (s - r).abs() <= SNAP {
        w.push((NodeRef::Node(r.clamp(0.0, last) as usize), 1.0));
        return w;
    }
    let i = s.floor();
    let frac = s - i;
    let i = i as usize;
    w.push((NodeRef::Node(i), 1.0 - frac));
    w.push((NodeRef::Node(i + 1), frac));
    w
}

/// Values used for every evaluation point outside the grid.
#[derive(Clone)]
pub struct ExteriorExtension {
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    time_homogeneous: bool,
}

impl fmt::Debug for ExteriorExtension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExteriorExtension")
            .field("time_homogeneous", &self.time_homogeneous)
            .finish_non_exhaustive()
    }
}

impl ExteriorExtension {
    /// Extension `(t, x) ↦ f(t, x)`.
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        ExteriorExtension {
            f: Arc::new(f),
            time_homogeneous: false,
        }
    }

    /// Extension that does not depend on time; callers may cache its values.
    pub fn stationary<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ExteriorExtension {
            f: Arc::new(move |_, x| f(x)),
            time_homogeneous: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::stationary(move |_| c)
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.f)(t, x)
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }
}

/// Tent interpolant of node values `u` at `x`, falling back on `ext` outside the grid.
pub fn interp(u: &[f64], x: f64, ext: &ExteriorExtension, t: f64, grid: &SpaceTimeGrid) -> f64 {
    debug_assert_eq!(u.len(), grid.len());
    tent_weights(x, grid)
        .iter()
        .map(|&(node, w)| match node {
            NodeRef::Node(m) => w * u[m],
            NodeRef::Exterior => w * ext.eval(t, x),
        })
        .sum()
}
