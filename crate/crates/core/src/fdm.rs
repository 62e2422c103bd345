//! Explicit finite differences for `u_t = D·u_xx` on `[0, 1]` with
//! Dirichlet boundaries:
//!
//! ```text
//! u[j+1][i] = u[j][i] + (D·Δt/Δx²)·(u[j][i+1] - 2·u[j][i] + u[j][i-1])
//! ```
//!
//! The scheme is stable only when `D·Δt ≤ Δx²/2`. Unstable grids are still
//! solved; values saturate at ±[`SATURATION`] and the first site that exceeds
//! [`BLOWUP`] is recorded so the error stays reportable.
//!
//! ```
//! use pinnkit::fdm::{cfl_check, fdm_mse, fdm_solve, FdmGrid};
//!
//! let grid = FdmGrid::new(0.05, 0.05, 0.025, 10.0)?;
//! assert!(cfl_check(0.025, 0.05, 0.05)?.satisfied);
//! let sol = fdm_solve(&grid)?;
//! assert!(sol.diverged.is_none());
//! assert!(fdm_mse(&sol, 0.025)? < 1e-5);
//! # Ok::<(), pinnkit::Error>(())
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{csv_error, heat_exact, lattice_steps};
use crate::error::{Error, Result};

/// Magnitude past which a solution counts as diverged.
pub const BLOWUP: f64 = 1e12;
/// Cap applied to solution values and to the reported MSE.
pub const SATURATION: f64 = 1e300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cfl {
    pub satisfied: bool,
    /// `Δx²/(2Δt) - D`; zero exactly on the stability boundary.
    pub margin: f64,
}

pub fn cfl_check(d: f64, dx: f64, dt: f64) -> Result<Cfl> {
    if !(d > 0.0 && dx > 0.0 && dt > 0.0) || !(d.is_finite() && dx.is_finite() && dt.is_finite()) {
        return Err(Error::config(format!("CFL check needs positive inputs, got D={d}, dx={dx}, dt={dt}")));
    }
    let limit = 0.5 * dx * dx;
    let used = d * dt;
    // Grid steps such as 0.05 are not exact binary fractions, so the bound
    // is compared with a relative slack of a few ulps' worth.
    let on_boundary = (used - limit).abs() <= 1e-12 * limit;
    let margin = if on_boundary { 0.0 } else { limit / dt - d };
    Ok(Cfl {
        satisfied: on_boundary || used < limit,
        margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdmGrid {
    pub dx: f64,
    pub dt: f64,
    pub d: f64,
    pub t_max: f64,
    /// `u(x, 0)` at every x-site, boundaries included.
    pub initial: Vec<f64>,
    pub left: f64,
    pub right: f64,
}

impl FdmGrid {
    /// Grid with `u(x, 0) = sin(πx)` and zero boundaries.
    pub fn new(dx: f64, dt: f64, d: f64, t_max: f64) -> Result<Self> {
        let nx = lattice_steps(1.0, dx, "dx")? + 1;
        let initial = (0..nx)
            .map(|i| if i + 1 == nx { 0.0 } else { (PI * i as f64 * dx).sin() })
            .collect();
        let grid = FdmGrid {
            dx,
            dt,
            d,
            t_max,
            initial,
            left: 0.0,
            right: 0.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        self.initial = initial;
        self.validate()?;
        Ok(self)
    }

    pub fn nx(&self) -> usize {
        self.initial.len()
    }

    pub fn nt(&self) -> Result<usize> {
        Ok(lattice_steps(self.t_max, self.dt, "dt")? + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let nx = lattice_steps(1.0, self.dx, "dx")? + 1;
        lattice_steps(self.t_max, self.dt, "dt")?;
        cfl_check(self.d, self.dx, self.dt)?;
        if self.initial.len() != nx {
            return Err(Error::LengthMismatch {
                expected: nx,
                found: self.initial.len(),
            });
        }
        if self.initial.iter().any(|v| !v.is_finite()) || !self.left.is_finite() || !self.right.is_finite() {
            return Err(Error::config("initial and boundary values must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdmSolution {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    /// Row-major `nt × nx`, time level outermost.
    pub surface: Vec<f64>,
    /// First `(j, i)` whose value exceeded [`BLOWUP`] or was non-finite.
    pub diverged: Option<(usize, usize)>,
}

impl FdmSolution {
    pub fn level(&self, j: usize) -> &[f64] {
        &self.surface[j * self.nx..(j + 1) * self.nx]
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            1.0
        } else {
            i as f64 * self.dx
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// Long-format `t,x,u` CSV, one row per lattice site.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["t", "x", "u"]).map_err(|e| csv_error(path, e))?;
        for j in 0..self.nt {
            for (i, u) in self.level(j).iter().enumerate() {
                w.write_record([self.t(j).to_string(), self.x(i).to_string(), u.to_string()])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn fdm_solve(grid: &FdmGrid) -> Result<FdmSolution> {
    grid.validate()?;
    let nx = grid.nx();
    let nt = grid.nt()?;
    let r = grid.d * grid.dt / (grid.dx * grid.dx);
    let mut surface = Vec::with_capacity(nx * nt);
    let mut u = grid.initial.clone();
    u[0] = grid.left;
    u[nx - 1] = grid.right;
    surface.extend_from_slice(&u);
    let mut next = vec![0.0; nx];
    let mut diverged = None;
    for j in 1..nt {
        next[0] = grid.left;
        next[nx - 1] = grid.right;
        for i in 1..nx - 1 {
            let v = u[i] + r * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
            if diverged.is_none() && !(v.abs() <= BLOWUP) {
                diverged = Some((j, i));
            }
            next[i] = if v.is_nan() { SATURATION } else { v.clamp(-SATURATION, SATURATION) };
        }
        std::mem::swap(&mut u, &mut next);
        surface.extend_from_slice(&u);
    }
    Ok(FdmSolution {
        nx,
        nt,
        dx: grid.dx,
        dt: grid.dt,
        surface,
        diverged,
    })
}

/// Mean over every lattice site and time level of `(u - exact)²`. A sum that
/// overflows (any saturated site squares to infinity) reports [`SATURATION`].
pub fn fdm_mse(solution: &FdmSolution, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::config(format!("diffusivity must be > 0, got {d}")));
    }
    let mut sum = 0.0;
    for j in 0..solution.nt {
        let t = solution.t(j);
        for (i, u) in solution.level(j).iter().enumerate() {
            let e = u - heat_exact(solution.x(i), t, d);
            sum += e * e;
        }
    }
    Ok((sum / solution.surface.len() as f64).min(SATURATION))
}
