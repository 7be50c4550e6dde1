//! Nucleus charge densities built from analytic radial profiles.
//!
//! The density is described by a couple of shape parameters rather than by an
//! arbitrary sampled field: that keeps it real and nonnegative by
//! construction and lets the regularity bookkeeping (integer-order `W^{k,1}`
//! proxies, polynomially weighted sups) be evaluated once and cached.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid3, GridError, Repr, ScalarField};

/// Highest integer derivative order carried by the `W^{k,1}` cache.
pub const MAX_DERIV_ORDER: usize = 8;

#[derive(Debug, Error)]
pub enum ChargeError {
    #[error("charge amplitude must be a finite nonnegative number, got {0}")]
    BadAmplitude(f64),
    #[error("charge {what} must be positive and finite, got {value}")]
    BadShape { what: &'static str, value: f64 },
    #[error("derivative order {got} exceeds the cached maximum {max}")]
    DerivativeOrder { max: usize, got: usize },
    #[error("weight exponent delta must be finite and nonnegative, got {0}")]
    BadWeight(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Analytic radial profile of the charge density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChargeProfile {
    /// `A exp(-|x|^2 / (2 sigma^2))`.
    Gaussian { amplitude: f64, sigma: f64 },
    /// Compactly supported `A exp(1 - 1/(1 - (|x|/radius)^2))` inside the
    /// ball, zero outside; smooth across the boundary.
    Bump { amplitude: f64, radius: f64 },
}

impl ChargeProfile {
    pub fn validate(&self) -> Result<(), ChargeError> {
        let (amplitude, shape, what) = match *self {
            Self::Gaussian { amplitude, sigma } => (amplitude, sigma, "width sigma"),
            Self::Bump { amplitude, radius } => (amplitude, radius, "support radius"),
        };
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(ChargeError::BadAmplitude(amplitude));
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(ChargeError::BadShape {
                what,
                value: shape,
            });
        }
        Ok(())
    }

    /// Pointwise value at `x`.
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        match *self {
            Self::Gaussian { amplitude, sigma } => {
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            Self::Bump { amplitude, radius } => {
                let u2 = r2 / (radius * radius);
                if u2 < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - u2)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Self::Gaussian { amplitude, .. } | Self::Bump { amplitude, .. } => amplitude,
        }
    }
}

/// A charge density sampled on a grid, with its spectrum and regularity
/// functionals precomputed or lazily cached.
#[derive(Debug)]
pub struct ChargeDensity {
    profile: ChargeProfile,
    field: ScalarField,
    spectrum: ScalarField,
    /// `|| |nabla|^j chi ||_{L^1}` for `j = 0..=MAX_DERIV_ORDER`.
    deriv_l1: [OnceLock<f64>; MAX_DERIV_ORDER + 1],
    grad_mag: OnceLock<Vec<f64>>,
}

impl ChargeDensity {
    pub fn new(grid: &Arc<Grid3>, profile: ChargeProfile) -> Result<Self, ChargeError> {
        profile.validate()?;
        let field = ScalarField::from_real_space_fn(grid, |x| profile.eval(x));
        let spectrum = field.clone().into_repr(Repr::Frequency);
        Ok(Self {
            profile,
            field,
            spectrum,
            deriv_l1: std::array::from_fn(|_| OnceLock::new()),
            grad_mag: OnceLock::new(),
        })
    }

    #[inline]
    pub fn profile(&self) -> ChargeProfile {
        self.profile
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid3> {
        self.field.grid()
    }

    /// The sampled density in the space representation.
    #[inline]
    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    /// The unitary DFT of the sampled density.
    #[inline]
    pub fn spectrum(&self) -> &ScalarField {
        &self.spectrum
    }

    /// Total charge `int chi dx` on the lattice.
    pub fn total(&self) -> f64 {
        let sum: f64 = self.field.values().iter().map(|v| v.re).sum();
        sum * self.grid().cell_volume()
    }

    /// Lattice `L^1` norm of `|nabla|^j chi`, computed spectrally.
    fn homogeneous_l1(&self, j: usize) -> f64 {
        *self.deriv_l1[j].get_or_init(|| {
            let mut f = self.spectrum.clone();
            f.apply_multiplier(|xi| {
                let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
                Complex64::new(r.powi(j as i32), 0.0)
            })
            .expect("spectrum is in the frequency representation");
            let f = f.into_repr(Repr::Space);
            let sum: f64 = f.values().iter().map(|v| v.norm()).sum();
            sum * self.grid().cell_volume()
        })
    }

    /// Lattice stand-in for the Sobolev norm `||chi||_{W^{k,1}}`:
    /// the sum over `j <= k` of the `L^1` norms of `|nabla|^j chi`.
    pub fn w_k1_norm(&self, k: usize) -> Result<f64, ChargeError> {
        if k > MAX_DERIV_ORDER {
            return Err(ChargeError::DerivativeOrder {
                max: MAX_DERIV_ORDER,
                got: k,
            });
        }
        Ok((0..=k).map(|j| self.homogeneous_l1(j)).sum())
    }

    fn weight(x: [f64; 3], delta: f64) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        (1.0 + r2).powf(0.5 * (3.0 + delta))
    }

    /// `sup_x <x>^(3+delta) |chi(x)|` on the lattice.
    pub fn weighted_sup(&self, delta: f64) -> Result<f64, ChargeError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(ChargeError::BadWeight(delta));
        }
        let mut sup = 0.0f64;
        self.grid().for_each_x(|k, x| {
            sup = sup.max(Self::weight(x, delta) * self.field.values()[k].norm());
        });
        Ok(sup)
    }

    /// `sup_x <x>^(3+delta) |nabla chi(x)|` on the lattice, with the gradient
    /// taken spectrally.
    pub fn weighted_grad_sup(&self, delta: f64) -> Result<f64, ChargeError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(ChargeError::BadWeight(delta));
        }
        let grad = self.grad_mag.get_or_init(|| {
            let mut mag = vec![0.0f64; self.grid().len()];
            for axis in 0..3 {
                let mut f = self.spectrum.clone();
                f.apply_multiplier(|xi| Complex64::new(0.0, xi[axis]))
                    .expect("spectrum is in the frequency representation");
                let f = f.into_repr(Repr::Space);
                for (m, v) in mag.iter_mut().zip(f.values()) {
                    *m += v.norm_sqr();
                }
            }
            for m in &mut mag {
                *m = m.sqrt();
            }
            mag
        });
        let mut sup = 0.0f64;
        self.grid().for_each_x(|k, x| {
            sup = sup.max(Self::weight(x, delta) * grad[k]);
        });
        Ok(sup)
    }
}
