//! Sampled nucleus trajectories on a uniform time grid.
//!
//! A path stores `q`, `qdot`, `qddot` at the nodes `t_k = k dt` together with
//! the initial velocity and the nucleus mass. Derivatives are analytic when
//! the path is prescribed and come from the integrator when the path is
//! produced by the coupled solve, so they are never finite-differenced from
//! noisy data.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("nucleus mass must be >= 1 and finite, got {0}")]
    BadMass(f64),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("a path needs at least 2 time nodes, got {0}")]
    TooShort(usize),
    #[error("non-finite path value at row {0}")]
    NonFinite(usize),
    #[error("time samples are not uniformly spaced at row {0}")]
    NonUniform(usize),
    #[error("bad path CSV header: expected \"{expected}\", got \"{got}\"")]
    BadHeader { expected: &'static str, got: String },
    #[error("bad path CSV row {row}: {what}")]
    BadRow { row: usize, what: String },
    #[error("paths have different sampling (len {0} step {1} vs len {2} step {3})")]
    SamplingMismatch(usize, f64, usize, f64),
    #[error("time {0} is not a node of the path (step {1}, horizon {2})")]
    TimeNotOnGrid(f64, f64, f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const CSV_HEADER: &str = "t,qx,qy,qz,vx,vy,vz,ax,ay,az";

#[inline]
fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NucleusPath {
    dt: f64,
    q: Vec<[f64; 3]>,
    qdot: Vec<[f64; 3]>,
    qddot: Vec<[f64; 3]>,
    v0: [f64; 3],
    mass: f64,
}

impl NucleusPath {
    fn validate_scalars(dt: f64, nodes: usize, mass: f64) -> Result<(), PathError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(PathError::BadStep(dt));
        }
        if nodes < 2 {
            return Err(PathError::TooShort(nodes));
        }
        if !(mass.is_finite() && mass >= 1.0) {
            return Err(PathError::BadMass(mass));
        }
        Ok(())
    }

    /// Samples an analytically prescribed path; `nodes` includes both ends,
    /// so the horizon is `(nodes-1) dt`.
    pub fn from_functions(
        dt: f64,
        nodes: usize,
        mass: f64,
        q: impl Fn(f64) -> [f64; 3],
        qdot: impl Fn(f64) -> [f64; 3],
        qddot: impl Fn(f64) -> [f64; 3],
    ) -> Result<Self, PathError> {
        Self::validate_scalars(dt, nodes, mass)?;
        let mut path = Self {
            dt,
            q: Vec::with_capacity(nodes),
            qdot: Vec::with_capacity(nodes),
            qddot: Vec::with_capacity(nodes),
            v0: qdot(0.0),
            mass,
        };
        for k in 0..nodes {
            let t = k as f64 * dt;
            path.q.push(q(t));
            path.qdot.push(qdot(t));
            path.qddot.push(qddot(t));
        }
        path.check_finite()?;
        Ok(path)
    }

    /// The resting nucleus, `q = 0`.
    pub fn rest(dt: f64, nodes: usize, mass: f64) -> Result<Self, PathError> {
        Self::from_functions(dt, nodes, mass, |_| [0.0; 3], |_| [0.0; 3], |_| [0.0; 3])
    }

    /// Free inertial motion `q(t) = v0 t`.
    pub fn inertial(dt: f64, nodes: usize, mass: f64, v0: [f64; 3]) -> Result<Self, PathError> {
        Self::from_functions(
            dt,
            nodes,
            mass,
            |t| [v0[0] * t, v0[1] * t, v0[2] * t],
            |_| v0,
            |_| [0.0; 3],
        )
    }

    /// Builds a path from sampled accelerations by double trapezoid
    /// integration with `q(0) = 0`, `qdot(0) = v0`.
    pub fn from_acceleration(
        dt: f64,
        mass: f64,
        v0: [f64; 3],
        accel: &[[f64; 3]],
    ) -> Result<Self, PathError> {
        Self::validate_scalars(dt, accel.len(), mass)?;
        let nodes = accel.len();
        let mut qdot = Vec::with_capacity(nodes);
        let mut q = Vec::with_capacity(nodes);
        let mut v = v0;
        let mut x = [0.0; 3];
        qdot.push(v);
        q.push(x);
        for k in 1..nodes {
            let mut v_next = [0.0; 3];
            let mut x_next = [0.0; 3];
            for i in 0..3 {
                v_next[i] = v[i] + 0.5 * dt * (accel[k - 1][i] + accel[k][i]);
                x_next[i] = x[i] + 0.5 * dt * (v[i] + v_next[i]);
            }
            v = v_next;
            x = x_next;
            qdot.push(v);
            q.push(x);
        }
        let path = Self {
            dt,
            q,
            qdot,
            qddot: accel.to_vec(),
            v0,
            mass,
        };
        path.check_finite()?;
        Ok(path)
    }

    fn check_finite(&self) -> Result<(), PathError> {
        for k in 0..self.len() {
            for i in 0..3 {
                if !(self.q[k][i].is_finite()
                    && self.qdot[k][i].is_finite()
                    && self.qddot[k][i].is_finite())
                {
                    return Err(PathError::NonFinite(k));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.q.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Final time `T = (len-1) dt`.
    #[inline]
    pub fn horizon(&self) -> f64 {
        self.t(self.len() - 1)
    }

    #[inline]
    pub fn q(&self, k: usize) -> [f64; 3] {
        self.q[k]
    }

    #[inline]
    pub fn qdot(&self, k: usize) -> [f64; 3] {
        self.qdot[k]
    }

    #[inline]
    pub fn qddot(&self, k: usize) -> [f64; 3] {
        self.qddot[k]
    }

    #[inline]
    pub fn v0(&self) -> [f64; 3] {
        self.v0
    }

    #[inline]
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Index of the node at time `t`, or an error if `t` is off the grid.
    pub fn node_at_time(&self, t: f64) -> Result<usize, PathError> {
        let k = (t / self.dt).round();
        let on_grid = k >= 0.0
            && (k as usize) < self.len()
            && (t - k * self.dt).abs() <= 1e-9 * t.abs().max(1.0);
        if on_grid {
            Ok(k as usize)
        } else {
            Err(PathError::TimeNotOnGrid(t, self.dt, self.horizon()))
        }
    }

    pub fn sup_q(&self) -> f64 {
        self.q.iter().map(|&v| norm3(v)).fold(0.0, f64::max)
    }

    pub fn sup_speed(&self) -> f64 {
        self.qdot.iter().map(|&v| norm3(v)).fold(0.0, f64::max)
    }

    /// `int_0^T |qddot(t)| dt` by the trapezoid rule.
    pub fn qddot_l1(&self) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.len() {
            acc += 0.5 * self.dt * (norm3(self.qddot[k - 1]) + norm3(self.qddot[k]));
        }
        acc
    }

    /// The contraction norm for the nucleus iteration,
    /// `sup_t |q| + int |qddot| dt`.
    pub fn z_norm(&self) -> f64 {
        self.sup_q() + self.qddot_l1()
    }

    /// Theorem-grade admissibility: `int |qddot| <= 1/2` and
    /// `sup |qdot| <= 1/2` (both with a rounding allowance).
    pub fn is_admissible(&self) -> bool {
        self.qddot_l1() <= 0.5 + 1e-12 && self.sup_speed() <= 0.5 + 1e-12
    }

    /// Z-norm distance between two paths on the same sampling.
    pub fn z_distance(&self, other: &Self) -> Result<f64, PathError> {
        if self.len() != other.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(PathError::SamplingMismatch(
                self.len(),
                self.dt,
                other.len(),
                other.dt,
            ));
        }
        let mut sup = 0.0f64;
        let mut l1 = 0.0;
        let mut prev = 0.0;
        for k in 0..self.len() {
            let dq = [
                self.q[k][0] - other.q[k][0],
                self.q[k][1] - other.q[k][1],
                self.q[k][2] - other.q[k][2],
            ];
            let da = [
                self.qddot[k][0] - other.qddot[k][0],
                self.qddot[k][1] - other.qddot[k][1],
                self.qddot[k][2] - other.qddot[k][2],
            ];
            sup = sup.max(norm3(dq));
            let na = norm3(da);
            if k > 0 {
                l1 += 0.5 * self.dt * (prev + na);
            }
            prev = na;
        }
        Ok(sup + l1)
    }

    // -- CSV serialization --------------------------------------------------

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_HEADER);
        s.push('\n');
        for k in 0..self.len() {
            let q = self.q[k];
            let v = self.qdot[k];
            let a = self.qddot[k];
            // Default float formatting is shortest-round-trip, so reading the
            // file back reproduces the samples bit for bit.
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                self.t(k),
                q[0],
                q[1],
                q[2],
                v[0],
                v[1],
                v[2],
                a[0],
                a[1],
                a[2]
            )
            .expect("string write");
        }
        s
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<(), PathError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parses the CSV emitted by [`Self::to_csv_string`]. The mass is not
    /// part of the file format and must be supplied.
    pub fn from_csv_str(text: &str, mass: f64) -> Result<Self, PathError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header.trim() != CSV_HEADER {
            return Err(PathError::BadHeader {
                expected: CSV_HEADER,
                got: header.to_string(),
            });
        }
        let mut times = Vec::new();
        let mut q = Vec::new();
        let mut qdot = Vec::new();
        let mut qddot = Vec::new();
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(PathError::BadRow {
                    row,
                    what: format!("expected 10 fields, got {}", fields.len()),
                });
            }
            let mut v = [0.0f64; 10];
            for (i, f) in fields.iter().enumerate() {
                v[i] = f.trim().parse().map_err(|e| PathError::BadRow {
                    row,
                    what: format!("field {i}: {e}"),
                })?;
                if !v[i].is_finite() {
                    return Err(PathError::NonFinite(row));
                }
            }
            times.push(v[0]);
            q.push([v[1], v[2], v[3]]);
            qdot.push([v[4], v[5], v[6]]);
            qddot.push([v[7], v[8], v[9]]);
        }
        if times.len() < 2 {
            return Err(PathError::TooShort(times.len()));
        }
        let dt = times[1] - times[0];
        Self::validate_scalars(dt, times.len(), mass)?;
        for k in 1..times.len() {
            let expect = times[0] + k as f64 * dt;
            if (times[k] - expect).abs() > 1e-9 * expect.abs().max(1.0) {
                return Err(PathError::NonUniform(k));
            }
        }
        let path = Self {
            dt,
            v0: qdot[0],
            q,
            qdot,
            qddot,
            mass,
        };
        path.check_finite()?;
        Ok(path)
    }

    pub fn read_csv_path(path: impl AsRef<Path>, mass: f64) -> Result<Self, PathError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?, mass)
    }
}
