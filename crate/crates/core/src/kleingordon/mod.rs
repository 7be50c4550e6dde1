//! The massive scalar field driven by a moving charge.
//!
//! The field solves `W_tt + (1 - Delta) W = chi(x - q(t))` with prescribed
//! initial data. Two independent routes to `W(t)` are implemented:
//!
//! * [`kg_duhamel_direct`]: trapezoid quadrature of the Duhamel integral in
//!   frequency space;
//! * the closed-form decomposition `W = W1 + W2 + W3` ([`build_w1`],
//!   [`build_w2`], [`build_w3`]), where `W1` rides along the source, `W2`
//!   carries the initial data and a static correction, and `W3` collects the
//!   acceleration-driven oscillatory integrals. For a path launched with
//!   nonzero initial velocity the stationary-phase boundary term at `tau = 0`
//!   does not cancel and [`boundary_corrector`] supplies it.
//!
//! Both routes agree up to quadrature error; that identity is the module's
//! central test and the solvers consume whichever side is configured.
//!
//! Kernels: the inverse transform of `1/<xi>^2` is the Yukawa kernel
//! [`kernel_y`], and the moving-frame resolvent `1/(<xi>^2 - (xi.v)^2)`
//! transforms to `gamma Y(L_v x)` ([`kernel_y_boosted`]). All transform
//! statements here are calibrated to the unitary convention of
//! [`crate::grid`]; lattice comparisons carry the `n^(3/2)/L^3` bridge
//! between unitary DFT coefficients and continuum transforms.

pub mod charge;
pub mod path;

pub use charge::{ChargeDensity, ChargeError, ChargeProfile, MAX_DERIV_ORDER};
pub use path::{NucleusPath, PathError};

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::bessel;
use crate::grid::{bracket, check_same_grid, Grid3, GridError, Repr, ScalarField};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("kernel is singular at x = 0")]
    SingularPoint,
    #[error("boost speed must satisfy |v| < 1, got |v| = {0}")]
    SuperluminalBoost(f64),
    #[error("path speed must stay below 1, got |qdot| = {0}")]
    SuperluminalPath(f64),
    #[error("the field decomposition needs an admissible path with sup |qdot| <= 1/2, got {0}")]
    PathNotAdmissible(f64),
    #[error("quadrature step {dt_quad} is not an integer multiple of the path step {path_dt}")]
    QuadratureMismatch { dt_quad: f64, path_dt: f64 },
    #[error("time {t} is not an integer multiple of the quadrature step {dt_quad}")]
    TimeOffQuadrature { t: f64, dt_quad: f64 },
    #[error("time {t} lies beyond the path horizon {horizon}")]
    BeyondPath { t: f64, horizon: f64 },
    #[error("field state must be real: relative imaginary residue {0}")]
    StateNotReal(f64),
    #[error("the time-integrated W3 diagnostic requires s >= 1, got s = {0}")]
    UnsupportedRegularity(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Charge(#[from] ChargeError),
    #[error(transparent)]
    Path(#[from] PathError),
}

// ---------------------------------------------------------------------------
// Lorentz maps and analytic kernels

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `1/sqrt(1 - |v|^2)`; rejects `|v| >= 1`.
pub fn lorentz_gamma(v: [f64; 3]) -> Result<f64, KgError> {
    let s2 = dot3(v, v);
    if s2 >= 1.0 || !s2.is_finite() {
        return Err(KgError::SuperluminalBoost(s2.sqrt()));
    }
    Ok(1.0 / (1.0 - s2).sqrt())
}

/// `L_v x`: stretches the component along `v` by `gamma`, fixes the
/// orthogonal complement. `L_0` is the identity.
pub fn lorentz_map(v: [f64; 3], x: [f64; 3]) -> Result<[f64; 3], KgError> {
    let gamma = lorentz_gamma(v)?;
    Ok(scale_along(v, x, gamma))
}

/// `L_v^{-1} x`: compresses along `v` by `gamma`.
pub fn lorentz_inverse_map(v: [f64; 3], x: [f64; 3]) -> Result<[f64; 3], KgError> {
    let gamma = lorentz_gamma(v)?;
    Ok(scale_along(v, x, 1.0 / gamma))
}

fn scale_along(v: [f64; 3], x: [f64; 3], factor: f64) -> [f64; 3] {
    let s2 = dot3(v, v);
    if s2 == 0.0 {
        return x;
    }
    let c = (factor - 1.0) * dot3(x, v) / s2;
    [x[0] + c * v[0], x[1] + c * v[1], x[2] + c * v[2]]
}

/// The boosted bracket `sqrt(<xi>^2 - (xi.v)^2)`, the symbol of `H_v`.
///
/// Always at least 1 for `|v| < 1` since
/// `<xi>^2 - (xi.v)^2 >= 1 + (1-|v|^2)|xi|^2`.
pub fn boosted_bracket(v: [f64; 3], xi: [f64; 3]) -> Result<f64, KgError> {
    let s2 = dot3(v, v);
    if s2 >= 1.0 || !s2.is_finite() {
        return Err(KgError::SuperluminalBoost(s2.sqrt()));
    }
    let b = bracket(xi);
    let d = dot3(xi, v);
    Ok((b * b - d * d).sqrt())
}

/// Yukawa kernel `e^{-|x|}/(4 pi |x|)`, the inverse transform of `1/<xi>^2`.
pub fn kernel_y(x: [f64; 3]) -> Result<f64, KgError> {
    let r = dot3(x, x).sqrt();
    if r == 0.0 {
        return Err(KgError::SingularPoint);
    }
    Ok((-r).exp() / (4.0 * std::f64::consts::PI * r))
}

/// Plain exponential envelope `e^{-|x|}`.
pub fn kernel_z(x: [f64; 3]) -> f64 {
    (-dot3(x, x).sqrt()).exp()
}

/// `K_1(|x|)/|x|` with the modified Bessel function of the second kind;
/// `K_1(r)/(2 pi^2 r)` is the inverse transform of `1/<xi>`.
pub fn kernel_k1(x: [f64; 3]) -> Result<f64, KgError> {
    let r = dot3(x, x).sqrt();
    if r == 0.0 {
        return Err(KgError::SingularPoint);
    }
    Ok(bessel::k1(r) / r)
}

/// Kernel of the moving-frame resolvent: the inverse transform of
/// `1/(<xi>^2 - (xi.v)^2)` equals `gamma Y(L_v x)`.
pub fn kernel_y_boosted(v: [f64; 3], x: [f64; 3]) -> Result<f64, KgError> {
    let gamma = lorentz_gamma(v)?;
    Ok(gamma * kernel_y(lorentz_map(v, x)?)?)
}

/// `(Y * G_sigma)(r)`: the Yukawa kernel convolved with the unit-amplitude
/// gaussian `exp(-|x|^2 / (2 sigma^2))`, in closed form.
///
/// With `a = sigma/sqrt(2)` and `b = r/(sqrt(2) sigma)`,
///
/// ```text
/// (Y * G)(r) = sigma^3 sqrt(pi/2) e^{sigma^2/2} / (2r)
///              * [ e^{-r} erfc(a - b)  -  e^{r} erfc(a + b) ].
/// ```
///
/// This is the analytic side of the transform-pair checks: a lattice kernel
/// cannot be compared with `Y` pointwise (the truncated series of a `1/r`
/// singularity rings at first order in the frequency cutoff), but applying
/// `1/<xi>^2` as a multiplier to a sampled gaussian is spectrally convergent
/// and must land on these values. The boosted pair reduces to the same
/// oracle: with probe `chi(L_v x)`, the symbol `1/(<xi>^2 - (xi.v)^2)`
/// produces `(Y * chi)(L_v x)` exactly (substitute `z = L_v y`; the Jacobian
/// cancels the kernel's `gamma`).
pub fn kernel_y_smoothed(sigma: f64, r: f64) -> Result<f64, KgError> {
    assert!(
        sigma.is_finite() && sigma > 0.0,
        "gaussian width must be positive"
    );
    if r <= 0.0 {
        return Err(KgError::SingularPoint);
    }
    let a = sigma / std::f64::consts::SQRT_2;
    let b = r / (std::f64::consts::SQRT_2 * sigma);
    let pref =
        sigma.powi(3) * (std::f64::consts::PI / 2.0).sqrt() * (sigma * sigma / 2.0).exp()
            / (2.0 * r);
    Ok(pref * ((-r).exp() * libm::erfc(a - b) - r.exp() * libm::erfc(a + b)))
}

/// `(Z * G_sigma)(r)`: the envelope kernel `e^{-|x|}` convolved with the unit
/// gaussian of width `sigma`. Pairs with the multiplier `1/<xi>^4` after the
/// `1/(8 pi)` transform normalization; same role as [`kernel_y_smoothed`].
pub fn kernel_z_smoothed(sigma: f64, r: f64) -> Result<f64, KgError> {
    assert!(
        sigma.is_finite() && sigma > 0.0,
        "gaussian width must be positive"
    );
    if r <= 0.0 {
        return Err(KgError::SingularPoint);
    }
    let s2 = sigma * sigma;
    // int_0^inf s exp(-(s - mu)^2 / (2 sigma^2)) ds
    let half_moment = |mu: f64| {
        s2 * (-mu * mu / (2.0 * s2)).exp()
            + mu * sigma
                * (std::f64::consts::PI / 2.0).sqrt()
                * libm::erfc(-mu / (std::f64::consts::SQRT_2 * sigma))
    };
    let inner = (s2 / 2.0 - r).exp() * half_moment(r - s2);
    let outer = (s2 / 2.0 + r).exp() * half_moment(-(r + s2));
    Ok(std::f64::consts::TAU * s2 / r * (inner - outer))
}

// ---------------------------------------------------------------------------
// Field state and free propagation

/// Largest tolerated `max|Im f| / max|f|` for fields that must be real.
pub const REALNESS_TOL: f64 = 1e-10;

/// `max|Im f| / max|f|` over the lattice; 0 for the zero field.
pub fn realness_defect(f: &ScalarField) -> f64 {
    let mut max_im = 0.0f64;
    let mut max_abs = 0.0f64;
    for v in f.values() {
        max_im = max_im.max(v.im.abs());
        max_abs = max_abs.max(v.norm());
    }
    if max_abs == 0.0 {
        0.0
    } else {
        max_im / max_abs
    }
}

/// Position/velocity pair `(w, wdot)` of the scalar field, canonically stored
/// in the space representation and real up to [`REALNESS_TOL`].
#[derive(Debug, Clone)]
pub struct KgState {
    w: ScalarField,
    wdot: ScalarField,
}

impl KgState {
    pub fn new(w: ScalarField, wdot: ScalarField) -> Result<Self, KgError> {
        check_same_grid(w.grid(), wdot.grid())?;
        let w = w.into_repr(Repr::Space);
        let wdot = wdot.into_repr(Repr::Space);
        for f in [&w, &wdot] {
            let defect = realness_defect(f);
            if defect > REALNESS_TOL {
                return Err(KgError::StateNotReal(defect));
            }
        }
        Ok(Self { w, wdot })
    }

    pub fn zero(grid: &Arc<Grid3>) -> Self {
        Self {
            w: ScalarField::zeros(grid, Repr::Space),
            wdot: ScalarField::zeros(grid, Repr::Space),
        }
    }

    #[inline]
    pub fn w(&self) -> &ScalarField {
        &self.w
    }

    #[inline]
    pub fn wdot(&self) -> &ScalarField {
        &self.wdot
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid3> {
        self.w.grid()
    }

    /// Frequency-representation copies of both components.
    fn spectra(&self) -> (ScalarField, ScalarField) {
        (
            self.w.clone().into_repr(Repr::Frequency),
            self.wdot.clone().into_repr(Repr::Frequency),
        )
    }

    /// Conserved energy `(||wdot||^2 + ||<grad> w||^2) / 2`.
    pub fn energy(&self) -> f64 {
        let (what, dhat) = self.spectra();
        let mut acc = 0.0;
        self.grid().for_each_xi(|b, xi| {
            let om2 = 1.0 + dot3(xi, xi);
            acc += dhat.values()[b].norm_sqr() + om2 * what.values()[b].norm_sqr();
        });
        0.5 * acc * self.grid().cell_volume()
    }
}

/// Exact free evolution by time `t`:
/// `w -> cos(t H) w + sin(t H)/H wdot`, `wdot -> -H sin(t H) w + cos(t H) wdot`
/// with `H = sqrt(1 - Delta)`.
pub fn kg_free_step(state: &KgState, t: f64) -> KgState {
    let (mut what, mut dhat) = state.spectra();
    let grid = state.grid().clone();
    {
        let wv = what.values_mut();
        // Split borrow: the two components are separate fields.
        let dv = dhat.values_mut();
        grid.for_each_xi(|b, xi| {
            let om = bracket(xi);
            let (s, c) = (om * t).sin_cos();
            let w = wv[b];
            let d = dv[b];
            wv[b] = w * c + d * (s / om);
            dv[b] = d * c - w * (om * s);
        });
    }
    KgState {
        w: what.into_repr(Repr::Space),
        wdot: dhat.into_repr(Repr::Space),
    }
}

// ---------------------------------------------------------------------------
// Duhamel quadrature

/// Running trapezoid accumulators for the paired oscillatory integrals
/// `B+-(t) = int_0^t e^{+-i om (t - tau)} h+-(tau) dtau`, advanced one node
/// at a time via
/// `B_k = rot (B_{k-1} + dt/2 h_{k-1}) + dt/2 h_k`, `rot = e^{+-i om dt}`.
struct DuhamelPair {
    dt: f64,
    rot: Vec<Complex64>,
    bplus: Vec<Complex64>,
    bminus: Vec<Complex64>,
    hplus_prev: Vec<Complex64>,
    hminus_prev: Vec<Complex64>,
    steps: usize,
}

impl DuhamelPair {
    fn new(grid: &Grid3, dt: f64) -> Self {
        let mut rot = vec![Complex64::ZERO; grid.len()];
        grid.for_each_xi(|b, xi| rot[b] = Complex64::from_polar(1.0, bracket(xi) * dt));
        let zeros = || vec![Complex64::ZERO; grid.len()];
        Self {
            dt,
            rot,
            bplus: zeros(),
            bminus: zeros(),
            hplus_prev: zeros(),
            hminus_prev: zeros(),
            steps: 0,
        }
    }

    /// Feeds the integrands at the next quadrature node. The first call
    /// records the `tau = 0` samples; each later call appends one panel.
    fn push(&mut self, hplus: &[Complex64], hminus: &[Complex64]) {
        if self.steps > 0 {
            let half = 0.5 * self.dt;
            for b in 0..self.bplus.len() {
                let rot = self.rot[b];
                self.bplus[b] =
                    rot * (self.bplus[b] + self.hplus_prev[b].scale(half)) + hplus[b].scale(half);
                self.bminus[b] = rot.conj() * (self.bminus[b] + self.hminus_prev[b].scale(half))
                    + hminus[b].scale(half);
            }
        }
        self.hplus_prev.copy_from_slice(hplus);
        self.hminus_prev.copy_from_slice(hminus);
        self.steps += 1;
    }
}

/// Path nodes per quadrature node; the quadrature may subsample the path but
/// must land on its nodes.
fn quad_stride(path: &NucleusPath, dt_quad: f64) -> Result<usize, KgError> {
    let ratio = dt_quad / path.dt();
    let rounded = ratio.round();
    if !(ratio.is_finite() && rounded >= 1.0) || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(KgError::QuadratureMismatch {
            dt_quad,
            path_dt: path.dt(),
        });
    }
    Ok(rounded as usize)
}

/// Number of quadrature panels needed to reach `t`.
fn quad_panels(t: f64, dt_quad: f64) -> Result<usize, KgError> {
    let ratio = t / dt_quad;
    let rounded = ratio.round();
    if !(ratio.is_finite() && rounded >= 0.0) || (ratio - rounded).abs() > 1e-9 * ratio.abs().max(1.0)
    {
        return Err(KgError::TimeOffQuadrature { t, dt_quad });
    }
    Ok(rounded as usize)
}

fn freq_field(grid: &Arc<Grid3>, values: Vec<Complex64>) -> ScalarField {
    let mut f = ScalarField::zeros(grid, Repr::Frequency);
    f.values_mut().copy_from_slice(&values);
    f
}

/// Charge spectrum with the unpaired Nyquist planes projected out.
///
/// On an even lattice a bin with an index component at `n/2` is its own
/// mirror under `xi -> -xi` while carrying the signed frequency `-Omega`, so
/// translation phases `e^{-i xi.q}` and odd symbols cannot act on it without
/// breaking the Hermitian symmetry that keeps the field real. Every
/// source-side assembly in this module therefore works with this projection
/// (uniformly, so the decomposition identity still closes bin by bin). The
/// initial-data terms keep their planes: their multipliers are even in `xi`.
fn filtered_source(chi: &ChargeDensity) -> Vec<Complex64> {
    let grid = chi.grid();
    let mut out = chi.spectrum().values().to_vec();
    let n = grid.n();
    if n % 2 != 0 {
        return out;
    }
    let half = n / 2;
    let mut b = 0;
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                if ix == half || iy == half || iz == half {
                    out[b] = Complex64::ZERO;
                }
                b += 1;
            }
        }
    }
    out
}

/// Source spectrum at one path node: `chihat(xi) e^{-i xi . q}`.
fn moving_source(grid: &Grid3, chihat: &[Complex64], q: [f64; 3], out: &mut [Complex64]) {
    grid.for_each_xi(|b, xi| {
        out[b] = chihat[b] * Complex64::from_polar(1.0, -dot3(xi, q));
    });
}

/// Solves the driven field at one time by direct Duhamel quadrature:
/// `What(t) = cos(om t) w0hat + sin(om t)/om w1hat
///           + int_0^t sin(om (t-tau))/om chihat e^{-i xi.q(tau)} dtau`,
/// the integral by the composite trapezoid rule with step `dt_quad`.
///
/// `dt_quad` must be an integer multiple of the path step and `t` an integer
/// multiple of `dt_quad` inside the path horizon.
pub fn kg_duhamel_direct(
    chi: &ChargeDensity,
    path: &NucleusPath,
    state0: &KgState,
    t: f64,
    dt_quad: f64,
) -> Result<ScalarField, KgError> {
    check_same_grid(chi.grid(), state0.grid())?;
    let stride = quad_stride(path, dt_quad)?;
    let panels = quad_panels(t, dt_quad)?;
    if panels * stride > path.len() - 1 {
        return Err(KgError::BeyondPath {
            t,
            horizon: path.horizon(),
        });
    }
    let grid = chi.grid();
    let chihat = filtered_source(chi);
    let mut pair = DuhamelPair::new(grid, dt_quad);
    let mut src = vec![Complex64::ZERO; grid.len()];
    for k in 0..=panels {
        moving_source(grid, &chihat, path.q(k * stride), &mut src);
        pair.push(&src, &src);
    }
    let (what, dhat) = state0.spectra();
    let mut out = vec![Complex64::ZERO; grid.len()];
    grid.for_each_xi(|b, xi| {
        let om = bracket(xi);
        let (s, c) = (om * t).sin_cos();
        let hom = what.values()[b] * c + dhat.values()[b] * (s / om);
        let duh = (pair.bplus[b] - pair.bminus[b]) * Complex64::new(0.0, -0.5 / om);
        out[b] = hom + duh;
    });
    Ok(freq_field(grid, out).into_repr(Repr::Space))
}

/// Direct-Duhamel field at every path node, marching once with the path's
/// own step. One inverse transform per node.
pub fn direct_w_series(
    chi: &ChargeDensity,
    path: &NucleusPath,
    state0: &KgState,
) -> Result<Vec<ScalarField>, KgError> {
    check_same_grid(chi.grid(), state0.grid())?;
    let grid = chi.grid();
    let chihat = filtered_source(chi);
    let (what, dhat) = state0.spectra();
    let mut pair = DuhamelPair::new(grid, path.dt());
    let mut src = vec![Complex64::ZERO; grid.len()];
    let mut series = Vec::with_capacity(path.len());
    for k in 0..path.len() {
        moving_source(grid, &chihat, path.q(k), &mut src);
        pair.push(&src, &src);
        let t = path.t(k);
        let mut out = vec![Complex64::ZERO; grid.len()];
        grid.for_each_xi(|b, xi| {
            let om = bracket(xi);
            let (s, c) = (om * t).sin_cos();
            let hom = what.values()[b] * c + dhat.values()[b] * (s / om);
            let duh = (pair.bplus[b] - pair.bminus[b]) * Complex64::new(0.0, -0.5 / om);
            out[b] = hom + duh;
        });
        series.push(freq_field(grid, out).into_repr(Repr::Space));
    }
    Ok(series)
}

// ---------------------------------------------------------------------------
// The explicit decomposition

/// The source-following near field
/// `W1hat(t) = e^{-i xi.q(t)} chihat / (<xi>^2 - (xi.qdot(t))^2)`.
///
/// At rest this is the static profile `(1 - Delta + ...)`, i.e. `H^{-2} chi`.
pub fn build_w1(chi: &ChargeDensity, path: &NucleusPath, t: f64) -> Result<ScalarField, KgError> {
    let node = path.node_at_time(t)?;
    let q = path.q(node);
    let v = path.qdot(node);
    let speed = dot3(v, v).sqrt();
    if speed >= 1.0 {
        return Err(KgError::SuperluminalPath(speed));
    }
    let grid = chi.grid();
    let chihat = filtered_source(chi);
    let mut out = vec![Complex64::ZERO; grid.len()];
    grid.for_each_xi(|b, xi| {
        let om = bracket(xi);
        let d = dot3(xi, v);
        out[b] = chihat[b] * Complex64::from_polar(1.0, -dot3(xi, q)) / (om * om - d * d);
    });
    Ok(freq_field(grid, out).into_repr(Repr::Space))
}

/// The data-carrying part
/// `W2hat(t) = cos(om t) w0hat + sin(om t)/om w1hat - cos(om t) chihat/om^2`.
///
/// The static correction enters with a minus sign: it cancels the `tau = 0`
/// boundary term that the near field `W1` introduces, so that
/// `W1(0) + W2(0) = w0` for a source starting at rest at the origin.
pub fn build_w2(chi: &ChargeDensity, state0: &KgState, t: f64) -> Result<ScalarField, KgError> {
    check_same_grid(chi.grid(), state0.grid())?;
    let grid = chi.grid();
    let chihat = filtered_source(chi);
    let (what, dhat) = state0.spectra();
    let mut out = vec![Complex64::ZERO; grid.len()];
    grid.for_each_xi(|b, xi| {
        let om = bracket(xi);
        let (s, c) = (om * t).sin_cos();
        out[b] = what.values()[b] * c + dhat.values()[b] * (s / om) - chihat[b] * (c / (om * om));
    });
    Ok(freq_field(grid, out).into_repr(Repr::Space))
}

/// Integrands of the two oscillatory integrals behind `W3`:
/// `h+-(tau) = chihat (xi.qddot) e^{-i xi.q} / (2 om (om +- xi.qdot)^2)`.
fn w3_integrands(
    grid: &Grid3,
    chihat: &[Complex64],
    path: &NucleusPath,
    node: usize,
    hplus: &mut [Complex64],
    hminus: &mut [Complex64],
) {
    let q = path.q(node);
    let v = path.qdot(node);
    let a = path.qddot(node);
    grid.for_each_xi(|b, xi| {
        let om = bracket(xi);
        let da = dot3(xi, a);
        let dv = dot3(xi, v);
        let base = chihat[b] * Complex64::from_polar(1.0, -dot3(xi, q)).scale(da / (2.0 * om));
        let dp = om + dv;
        let dm = om - dv;
        hplus[b] = base.scale(1.0 / (dp * dp));
        hminus[b] = base.scale(1.0 / (dm * dm));
    });
}

fn require_admissible_speed(path: &NucleusPath) -> Result<(), KgError> {
    let speed = path.sup_speed();
    if speed > 0.5 + 1e-12 {
        return Err(KgError::PathNotAdmissible(speed));
    }
    Ok(())
}

/// The acceleration-driven tail
/// `W3hat(t) = B+(t) - B-(t)`, `B+- = int_0^t e^{+-i om (t-tau)} h+- dtau`,
/// by trapezoid quadrature with step `dt_quad`. Identically zero on inertial
/// paths and real by the conjugate pairing of `h+` and `h-`.
pub fn build_w3(
    chi: &ChargeDensity,
    path: &NucleusPath,
    t: f64,
    dt_quad: f64,
) -> Result<ScalarField, KgError> {
    require_admissible_speed(path)?;
    let stride = quad_stride(path, dt_quad)?;
    let panels = quad_panels(t, dt_quad)?;
    if panels * stride > path.len() - 1 {
        return Err(KgError::BeyondPath {
            t,
            horizon: path.horizon(),
        });
    }
    let grid = chi.grid();
    let chihat = filtered_source(chi);
    let mut pair = DuhamelPair::new(grid, dt_quad);
    let mut hplus = vec![Complex64::ZERO; grid.len()];
    let mut hminus = vec![Complex64::ZERO; grid.len()];
    for k in 0..=panels {
        w3_integrands(grid, &chihat, path, k * stride, &mut hplus, &mut hminus);
        pair.push(&hplus, &hminus);
    }
    let mut out = vec![Complex64::ZERO; grid.len()];
    for b in 0..out.len() {
        out[b] = pair.bplus[b] - pair.bminus[b];
    }
    Ok(freq_field(grid, out).into_repr(Repr::Space))
}

/// Boundary term left over at `tau = 0` when the source is launched with
/// velocity `v0`:
/// `Bhat(v0, t) = chihat cos(om t)/om^2
///              - chihat (om cos(om t) - i (xi.v0) sin(om t))
///                / (om (om^2 - (xi.v0)^2))`.
///
/// Vanishes identically for `v0 = 0`; real by conjugate symmetry.
pub fn boundary_corrector(
    chi: &ChargeDensity,
    v0: [f64; 3],
    t: f64,
) -> Result<ScalarField, KgError> {
    let s2 = dot3(v0, v0);
    if s2 >= 1.0 || !s2.is_finite() {
        return Err(KgError::SuperluminalBoost(s2.sqrt()));
    }
    let grid = chi.grid();
    let chihat = filtered_source(chi);
    let mut out = vec![Complex64::ZERO; grid.len()];
    grid.for_each_xi(|b, xi| {
        let om = bracket(xi);
        let (s, c) = (om * t).sin_cos();
        let d = dot3(xi, v0);
        let moving = Complex64::new(om * c, -d * s) / (om * (om * om - d * d));
        out[b] = chihat[b] * (Complex64::new(c / (om * om), 0.0) - moving);
    });
    Ok(freq_field(grid, out).into_repr(Repr::Space))
}

/// Decomposition field `W1 + W2 + W3 (+ boundary corrector)` at every path
/// node, sharing one `W3` march; one inverse transform per node.
///
/// The corrector is included automatically when the path launches with
/// nonzero velocity.
pub fn decomposition_w_series(
    chi: &ChargeDensity,
    path: &NucleusPath,
    state0: &KgState,
) -> Result<Vec<ScalarField>, KgError> {
    check_same_grid(chi.grid(), state0.grid())?;
    require_admissible_speed(path)?;
    let grid = chi.grid();
    let chihat = filtered_source(chi);
    let (what, dhat) = state0.spectra();
    let v0 = path.v0();
    let with_corrector = dot3(v0, v0) > 0.0;
    let mut pair = DuhamelPair::new(grid, path.dt());
    let mut hplus = vec![Complex64::ZERO; grid.len()];
    let mut hminus = vec![Complex64::ZERO; grid.len()];
    let mut series = Vec::with_capacity(path.len());
    for k in 0..path.len() {
        w3_integrands(grid, &chihat, path, k, &mut hplus, &mut hminus);
        pair.push(&hplus, &hminus);
        let t = path.t(k);
        let q = path.q(k);
        let v = path.qdot(k);
        let mut out = vec![Complex64::ZERO; grid.len()];
        grid.for_each_xi(|b, xi| {
            let om = bracket(xi);
            let om2 = om * om;
            let (s, c) = (om * t).sin_cos();
            let dv = dot3(xi, v);
            let near = chihat[b] * Complex64::from_polar(1.0, -dot3(xi, q)) / (om2 - dv * dv);
            let data = what.values()[b] * c + dhat.values()[b] * (s / om)
                - chihat[b] * (c / om2);
            let tail = pair.bplus[b] - pair.bminus[b];
            out[b] = near + data + tail;
            if with_corrector {
                let d0 = dot3(xi, v0);
                let moving = Complex64::new(om * c, -d0 * s) / (om * (om2 - d0 * d0));
                out[b] += chihat[b] * (Complex64::new(c / om2, 0.0) - moving);
            }
        });
        series.push(freq_field(grid, out).into_repr(Repr::Space));
    }
    Ok(series)
}

/// Time-integrated sup bound on the tail: trapezoid-in-time sum of
/// `||<grad>^s W3(t)||_{L^inf}` over the quadrature nodes up to `t`.
///
/// The underlying estimate is only available for `s >= 1`; smaller `s` is
/// refused rather than extrapolated.
pub fn w3_sup_norm_integral(
    chi: &ChargeDensity,
    path: &NucleusPath,
    t: f64,
    dt_quad: f64,
    s: f64,
) -> Result<f64, KgError> {
    if !(s >= 1.0) {
        return Err(KgError::UnsupportedRegularity(s));
    }
    require_admissible_speed(path)?;
    let stride = quad_stride(path, dt_quad)?;
    let panels = quad_panels(t, dt_quad)?;
    if panels * stride > path.len() - 1 {
        return Err(KgError::BeyondPath {
            t,
            horizon: path.horizon(),
        });
    }
    let grid = chi.grid();
    let chihat = filtered_source(chi);
    let mut pair = DuhamelPair::new(grid, dt_quad);
    let mut hplus = vec![Complex64::ZERO; grid.len()];
    let mut hminus = vec![Complex64::ZERO; grid.len()];
    let mut acc = 0.0;
    let mut prev = 0.0;
    for k in 0..=panels {
        w3_integrands(grid, &chihat, path, k * stride, &mut hplus, &mut hminus);
        pair.push(&hplus, &hminus);
        let mut out = vec![Complex64::ZERO; grid.len()];
        grid.for_each_xi(|b, xi| {
            out[b] = (pair.bplus[b] - pair.bminus[b]).scale(bracket(xi).powf(s));
        });
        let w3 = freq_field(grid, out).into_repr(Repr::Space);
        let sup = w3.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        if k > 0 {
            acc += 0.5 * dt_quad * (prev + sup);
        }
        prev = sup;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TAU: f64 = std::f64::consts::TAU;

    fn test_chi(grid: &Arc<Grid3>) -> ChargeDensity {
        ChargeDensity::new(
            grid,
            ChargeProfile::Gaussian {
                amplitude: 1.0,
                sigma: 1.6,
            },
        )
        .unwrap()
    }

    fn oscillating_path(dt: f64, nodes: usize) -> NucleusPath {
        let a = 0.14;
        NucleusPath::from_functions(
            dt,
            nodes,
            100.0,
            move |t| [a * (1.0 - t.cos()), 0.0, 0.0],
            move |t| [a * t.sin(), 0.0, 0.0],
            move |t| [a * t.cos(), 0.0, 0.0],
        )
        .unwrap()
    }

    // -- Lorentz maps and brackets -------------------------------------------

    #[test]
    fn lorentz_identity_at_zero_velocity() {
        let x = [0.3, -1.7, 2.2];
        assert_eq!(lorentz_map([0.0; 3], x).unwrap(), x);
        assert_eq!(lorentz_inverse_map([0.0; 3], x).unwrap(), x);
    }

    #[test]
    fn lorentz_half_speed_example() {
        // v = (1/2, 0, 0), x = (1, 1, 0): parallel part stretches by 2/sqrt(3).
        let out = lorentz_map([0.5, 0.0, 0.0], [1.0, 1.0, 0.0]).unwrap();
        assert!((out[0] - 2.0 / 3.0f64.sqrt()).abs() < 1e-15);
        assert!((out[1] - 1.0).abs() < 1e-15);
        assert_eq!(out[2], 0.0);
    }

    #[test]
    fn lorentz_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v = [
                rng.gen_range(-0.57..0.57),
                rng.gen_range(-0.57..0.57),
                rng.gen_range(-0.57..0.57),
            ];
            let x = [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            ];
            let back = lorentz_inverse_map(v, lorentz_map(v, x).unwrap()).unwrap();
            for i in 0..3 {
                assert!((back[i] - x[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn lorentz_rejects_superluminal() {
        assert!(matches!(
            lorentz_map([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            Err(KgError::SuperluminalBoost(_))
        ));
        assert!(matches!(
            boosted_bracket([0.8, 0.8, 0.0], [1.0, 0.0, 0.0]),
            Err(KgError::SuperluminalBoost(_))
        ));
    }

    #[test]
    fn boosted_bracket_values() {
        let xi = [1.0, -2.0, 0.5];
        assert!((boosted_bracket([0.0; 3], xi).unwrap() - bracket(xi)).abs() < 1e-15);
        // Transverse modes are unaffected.
        let v = [0.4, 0.0, 0.0];
        let perp = [0.0, 3.0, -1.0];
        assert!((boosted_bracket(v, perp).unwrap() - bracket(perp)).abs() < 1e-15);
        // v = (1/2,0,0), xi = (2,0,0): sqrt(1 + 3/4 * 4) = 2.
        let b = boosted_bracket([0.5, 0.0, 0.0], [2.0, 0.0, 0.0]).unwrap();
        assert!((b - 2.0).abs() < 1e-15);
    }

    // -- Kernels --------------------------------------------------------------

    #[test]
    fn yukawa_identity() {
        for &x in &[[0.3, 0.0, 0.0], [1.0, -2.0, 0.7], [0.01, 0.02, -0.01]] {
            let r = dot3(x, x).sqrt();
            let y = kernel_y(x).unwrap();
            assert!((y * 4.0 * std::f64::consts::PI * r * r.exp() - 1.0).abs() < 1e-13);
        }
        assert!(matches!(kernel_y([0.0; 3]), Err(KgError::SingularPoint)));
    }

    #[test]
    fn envelope_kernel_halves_at_log_two() {
        let r = std::f64::consts::LN_2;
        assert!((kernel_z([r, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(kernel_z([0.0; 3]), 1.0);
    }

    #[test]
    fn bessel_kernel_matches_series() {
        let x = [0.6, 0.0, 0.8];
        assert!((kernel_k1(x).unwrap() - bessel::k1(1.0)).abs() < 1e-13);
        assert!(matches!(kernel_k1([0.0; 3]), Err(KgError::SingularPoint)));
    }

    /// Relative L^2 mismatch, on the annulus `|x| in [2dx, L/4]`, between the
    /// lattice transform pair (symbol applied as a multiplier to a sampled
    /// gaussian probe) and the analytic continuum convolution. The probe is
    /// resolved by both cutoffs, so the only honest error left is
    /// periodization.
    fn transform_pair_mismatch(
        n: usize,
        length: f64,
        probe: impl Fn([f64; 3]) -> f64,
        symbol: impl Fn([f64; 3]) -> f64,
        convolved: impl Fn([f64; 3]) -> f64,
    ) -> f64 {
        let grid = make_grid(n, length).unwrap();
        let mut f = ScalarField::from_real_space_fn(&grid, probe).into_repr(Repr::Frequency);
        f.apply_multiplier(|xi| Complex64::new(symbol(xi), 0.0)).unwrap();
        let f = f.into_repr(Repr::Space);
        let (mut num, mut den) = (0.0, 0.0);
        grid.for_each_x(|b, x| {
            let r = dot3(x, x).sqrt();
            if r >= 2.0 * grid.dx() && r <= length / 4.0 {
                let exact = convolved(x);
                num += (f.values()[b].re - exact) * (f.values()[b].re - exact);
                den += exact * exact;
            }
        });
        (num / den).sqrt()
    }

    #[test]
    fn yukawa_symbol_and_kernel_are_a_transform_pair() {
        let sigma = 2.0;
        let err = transform_pair_mismatch(
            48,
            30.0,
            |x| (-dot3(x, x) / (2.0 * sigma * sigma)).exp(),
            |xi| 1.0 / (1.0 + dot3(xi, xi)),
            |x| kernel_y_smoothed(sigma, dot3(x, x).sqrt()).unwrap(),
        );
        assert!(err <= 1e-3, "annulus mismatch {err}");
    }

    #[test]
    fn boosted_symbol_transforms_to_the_mapped_yukawa() {
        let v = [0.5, 0.0, 0.0];
        let sigma = 2.0;
        // With the probe pre-composed with L_v, the boosted convolution
        // collapses to the plain one at the mapped point.
        let err = transform_pair_mismatch(
            48,
            30.0,
            |x| {
                let z = lorentz_map(v, x).unwrap();
                (-dot3(z, z) / (2.0 * sigma * sigma)).exp()
            },
            |xi| {
                let om = bracket(xi);
                1.0 / (om * om - dot3(xi, v) * dot3(xi, v))
            },
            |x| {
                let z = lorentz_map(v, x).unwrap();
                kernel_y_smoothed(sigma, dot3(z, z).sqrt()).unwrap()
            },
        );
        assert!(err <= 1e-3, "annulus mismatch {err}");
    }

    #[test]
    fn envelope_symbol_transforms_to_the_smoothed_envelope() {
        let sigma = 2.0;
        let err = transform_pair_mismatch(
            48,
            30.0,
            |x| (-dot3(x, x) / (2.0 * sigma * sigma)).exp(),
            |xi| {
                let om2 = 1.0 + dot3(xi, xi);
                1.0 / (om2 * om2)
            },
            |x| {
                kernel_z_smoothed(sigma, dot3(x, x).sqrt()).unwrap()
                    / (8.0 * std::f64::consts::PI)
            },
        );
        assert!(err <= 1e-3, "annulus mismatch {err}");
    }

    #[test]
    fn smoothed_kernels_match_direct_quadrature() {
        // Midpoint quadrature of the radial Fourier integrals
        //   (Y*G)(r) = 1/(2 pi^2 r) int xi sin(xi r) ghat(xi) / <xi>^2  dxi
        // with ghat the continuum transform of the gaussian probe; the
        // integrand decays like e^{-sigma^2 xi^2/2} so a short uniform rule
        // is already exact to 1e-10.
        let sigma = 1.5;
        for &r in &[0.7, 2.0, 5.0] {
            let (mut y, mut z) = (0.0, 0.0);
            let (h, m) = (1e-3, 12_000);
            for i in 0..m {
                let xi = (i as f64 + 0.5) * h;
                let ghat =
                    (TAU * sigma * sigma).powf(1.5) * (-sigma * sigma * xi * xi / 2.0).exp();
                let base = xi * (xi * r).sin() * ghat / (TAU * std::f64::consts::PI * r);
                y += h * base / (1.0 + xi * xi);
                z += h * base * 8.0 * std::f64::consts::PI / (1.0 + xi * xi).powi(2);
            }
            let yc = kernel_y_smoothed(sigma, r).unwrap();
            let zc = kernel_z_smoothed(sigma, r).unwrap();
            assert!((y - yc).abs() <= 1e-10 * yc.abs(), "Y at r={r}: {y} vs {yc}");
            assert!((z - zc).abs() <= 1e-10 * zc.abs(), "Z at r={r}: {z} vs {zc}");
        }
        assert!(matches!(
            kernel_y_smoothed(1.0, 0.0),
            Err(KgError::SingularPoint)
        ));
    }

    // -- Free propagation ------------------------------------------------------

    fn smooth_state(grid: &Arc<Grid3>) -> KgState {
        let w = ScalarField::from_real_space_fn(grid, |x| {
            (-dot3(x, x) / 6.0).exp() * (1.0 + 0.3 * (TAU * x[0] / grid.length()).cos())
        });
        let wdot = ScalarField::from_real_space_fn(grid, |x| {
            0.5 * (-dot3(x, x) / 8.0).exp() * (TAU * x[1] / grid.length()).sin()
        });
        KgState::new(w, wdot).unwrap()
    }

    #[test]
    fn free_step_at_zero_is_identity() {
        let grid = make_grid(16, 12.0).unwrap();
        let s0 = smooth_state(&grid);
        let s1 = kg_free_step(&s0, 0.0);
        let mut worst = 0.0f64;
        for b in 0..grid.len() {
            worst = worst.max((s1.w().values()[b] - s0.w().values()[b]).norm());
            worst = worst.max((s1.wdot().values()[b] - s0.wdot().values()[b]).norm());
        }
        assert!(worst < 1e-13);
    }

    #[test]
    fn free_step_single_mode() {
        // w0 = cos(k.x), wdot0 = 0 evolves to cos(t <k>) cos(k.x).
        let grid = make_grid(16, 2.0 * TAU).unwrap();
        let k1 = grid.dk() * 2.0;
        let w = ScalarField::from_real_space_fn(&grid, |x| (k1 * x[0]).cos());
        let state = KgState::new(w, ScalarField::zeros(&grid, Repr::Space)).unwrap();
        let t = 0.83;
        let om = (1.0 + k1 * k1).sqrt();
        let stepped = kg_free_step(&state, t);
        let mut worst = 0.0f64;
        grid.for_each_x(|b, x| {
            let expect = (t * om).cos() * (k1 * x[0]).cos();
            worst = worst.max((stepped.w().values()[b].re - expect).abs());
            worst = worst.max(stepped.w().values()[b].im.abs());
        });
        assert!(worst < 1e-12, "single-mode deviation {worst}");
    }

    #[test]
    fn free_step_group_law_and_energy() {
        let grid = make_grid(16, 12.0).unwrap();
        let s0 = smooth_state(&grid);
        let e0 = s0.energy();
        assert!(e0 > 0.0);
        // Group law: two quarter steps equal one half step.
        let two = kg_free_step(&kg_free_step(&s0, 0.35), 0.35);
        let one = kg_free_step(&s0, 0.7);
        let mut worst = 0.0f64;
        for b in 0..grid.len() {
            worst = worst.max((two.w().values()[b] - one.w().values()[b]).norm());
        }
        assert!(worst < 1e-12);
        // Energy drift over 100 steps.
        let mut s = s0;
        for _ in 0..100 {
            s = kg_free_step(&s, 0.05);
        }
        assert!((s.energy() - e0).abs() / e0 < 1e-9);
    }

    // -- Direct Duhamel ---------------------------------------------------------

    #[test]
    fn direct_with_zero_source_is_free_evolution() {
        let grid = make_grid(16, 12.0).unwrap();
        let chi = ChargeDensity::new(
            &grid,
            ChargeProfile::Gaussian {
                amplitude: 0.0,
                sigma: 1.0,
            },
        )
        .unwrap();
        let path = NucleusPath::rest(0.05, 21, 10.0).unwrap();
        let s0 = smooth_state(&grid);
        let t = 1.0;
        let direct = kg_duhamel_direct(&chi, &path, &s0, t, 0.05).unwrap();
        let free = kg_free_step(&s0, t);
        let mut worst = 0.0f64;
        for b in 0..grid.len() {
            worst = worst.max((direct.values()[b] - free.w().values()[b]).norm());
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn direct_static_source_closed_form() {
        // Resting source, zero data: What(t) = chihat (1 - cos(om t)) / om^2.
        let grid = make_grid(16, 12.0).unwrap();
        let chi = test_chi(&grid);
        let t = 2.0;
        let levels: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dtq| {
                let nodes = (t / 0.0125) as usize + 1;
                let path = NucleusPath::rest(0.0125, nodes, 10.0).unwrap();
                let w =
                    kg_duhamel_direct(&chi, &path, &KgState::zero(&grid), t, dtq).unwrap();
                let exact = ScalarField::from_freq_fn(&grid, |xi| {
                    let om = bracket(xi);
                    Complex64::new((1.0 - (om * t).cos()) / (om * om), 0.0)
                });
                let chihat = chi.spectrum().values();
                let mut exact_vals: Vec<Complex64> = exact.values().to_vec();
                for (e, c) in exact_vals.iter_mut().zip(chihat) {
                    *e *= c;
                }
                let exact = freq_field(&grid, exact_vals).into_repr(Repr::Space);
                let mut num = 0.0;
                let mut den = 0.0;
                for b in 0..grid.len() {
                    num += (w.values()[b] - exact.values()[b]).norm_sqr();
                    den += exact.values()[b].norm_sqr();
                }
                (num / den).sqrt()
            })
            .collect();
        // Second-order quadrature: halving the step cuts the error ~4x.
        assert!(levels[0] < 1e-2);
        let r1 = levels[0] / levels[1];
        let r2 = levels[1] / levels[2];
        assert!((3.0..5.0).contains(&r1), "convergence ratio {r1}");
        assert!((3.0..5.0).contains(&r2), "convergence ratio {r2}");
    }

    #[test]
    fn direct_validates_quadrature_and_horizon() {
        let grid = make_grid(8, 8.0).unwrap();
        let chi = test_chi(&grid);
        let path = NucleusPath::rest(0.1, 11, 10.0).unwrap();
        let s0 = KgState::zero(&grid);
        assert!(matches!(
            kg_duhamel_direct(&chi, &path, &s0, 0.5, 0.15),
            Err(KgError::QuadratureMismatch { .. })
        ));
        assert!(matches!(
            kg_duhamel_direct(&chi, &path, &s0, 0.55, 0.2),
            Err(KgError::TimeOffQuadrature { .. })
        ));
        assert!(matches!(
            kg_duhamel_direct(&chi, &path, &s0, 1.2, 0.2),
            Err(KgError::BeyondPath { .. })
        ));
    }

    // -- Decomposition pieces ----------------------------------------------------

    #[test]
    fn w1_at_rest_is_the_static_profile() {
        let grid = make_grid(16, 12.0).unwrap();
        let chi = test_chi(&grid);
        let path = NucleusPath::rest(0.1, 11, 10.0).unwrap();
        let w1 = build_w1(&chi, &path, 0.5).unwrap();
        // The oracle carries the same Nyquist-plane projection as every
        // source-side builder.
        let expect = {
            let mut f = freq_field(&grid, filtered_source(&chi));
            f.apply_multiplier(|xi| {
                let om2 = 1.0 + dot3(xi, xi);
                Complex64::new(1.0 / om2, 0.0)
            })
            .unwrap();
            f.into_repr(Repr::Space)
        };
        let mut worst = 0.0f64;
        for b in 0..grid.len() {
            worst = worst.max((w1.values()[b] - expect.values()[b]).norm());
        }
        assert!(worst < 1e-13);
        assert!(realness_defect(&w1) < 1e-12);
    }

    #[test]
    fn w1_translation_covariance() {
        // A constant displacement acts as a lattice shift: the field of a
        // source parked at `a` equals the rest field moved by `a`.
        let grid = make_grid(16, 12.0).unwrap();
        let n = grid.n();
        let chi = test_chi(&grid);
        let rest = build_w1(&chi, &NucleusPath::rest(0.1, 11, 10.0).unwrap(), 0.5).unwrap();
        let shift: [isize; 3] = [2, -1, 3];
        let a = [
            shift[0] as f64 * grid.dx(),
            shift[1] as f64 * grid.dx(),
            shift[2] as f64 * grid.dx(),
        ];
        let parked = NucleusPath::from_functions(
            0.1,
            11,
            10.0,
            move |_| a,
            |_| [0.0; 3],
            |_| [0.0; 3],
        )
        .unwrap();
        let moved = build_w1(&chi, &parked, 0.5).unwrap();
        let mut worst = 0.0f64;
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    let from = grid.idx(
                        (ix + n).wrapping_add_signed(-shift[0]) % n,
                        (iy + n).wrapping_add_signed(-shift[1]) % n,
                        (iz + n).wrapping_add_signed(-shift[2]) % n,
                    );
                    let d = (moved.values()[grid.idx(ix, iy, iz)] - rest.values()[from]).norm();
                    worst = worst.max(d);
                }
            }
        }
        assert!(worst < 1e-12, "shift mismatch {worst}");
    }

    #[test]
    fn w1_denominator_stays_positive_at_half_speed() {
        let grid = make_grid(16, 12.0).unwrap();
        let v = [0.5, 0.0, 0.0];
        let mut min_den = f64::INFINITY;
        grid.for_each_xi(|_, xi| {
            let om = bracket(xi);
            min_den = min_den.min(om * om - dot3(xi, v) * dot3(xi, v));
        });
        assert!(min_den >= 1.0, "minimum denominator {min_den}");
    }

    #[test]
    fn w1_rejects_superluminal_nodes() {
        let grid = make_grid(8, 8.0).unwrap();
        let chi = test_chi(&grid);
        let fast = NucleusPath::inertial(0.1, 11, 10.0, [1.2, 0.0, 0.0]).unwrap();
        assert!(matches!(
            build_w1(&chi, &fast, 0.5),
            Err(KgError::SuperluminalPath(_))
        ));
    }

    #[test]
    fn w2_at_time_zero_with_zero_data() {
        // The static correction enters negatively: W2(0) = -(1-Delta)^{-1} chi,
        // cancelling W1(0) so the total field starts at w0.
        let grid = make_grid(16, 12.0).unwrap();
        let chi = test_chi(&grid);
        let w2 = build_w2(&chi, &KgState::zero(&grid), 0.0).unwrap();
        let w1 = build_w1(&chi, &NucleusPath::rest(0.1, 11, 10.0).unwrap(), 0.0).unwrap();
        let mut worst = 0.0f64;
        for b in 0..grid.len() {
            worst = worst.max((w2.values()[b] + w1.values()[b]).norm());
        }
        assert!(worst < 1e-13, "W1(0) + W2(0) residue {worst}");
    }

    #[test]
    fn w2_without_source_is_free_evolution() {
        let grid = make_grid(16, 12.0).unwrap();
        let zero_chi = ChargeDensity::new(
            &grid,
            ChargeProfile::Gaussian {
                amplitude: 0.0,
                sigma: 1.0,
            },
        )
        .unwrap();
        let s0 = smooth_state(&grid);
        let t = 1.3;
        let w2 = build_w2(&zero_chi, &s0, t).unwrap();
        let free = kg_free_step(&s0, t);
        let mut worst = 0.0f64;
        for b in 0..grid.len() {
            worst = worst.max((w2.values()[b] - free.w().values()[b]).norm());
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn w3_vanishes_on_inertial_paths() {
        let grid = make_grid(16, 12.0).unwrap();
        let chi = test_chi(&grid);
        let path = NucleusPath::inertial(0.05, 41, 10.0, [0.3, 0.0, 0.0]).unwrap();
        let w3 = build_w3(&chi, &path, 2.0, 0.1).unwrap();
        let sup = w3.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(sup < 1e-15, "inertial W3 sup {sup}");
    }

    #[test]
    fn w3_is_real_and_refuses_fast_paths() {
        let grid = make_grid(16, 12.0).unwrap();
        let chi = test_chi(&grid);
        let path = oscillating_path(0.02, 101);
        let w3 = build_w3(&chi, &path, 2.0, 0.04).unwrap();
        assert!(realness_defect(&w3) < 1e-9);
        let fast = NucleusPath::inertial(0.05, 41, 10.0, [0.7, 0.0, 0.0]).unwrap();
        assert!(matches!(
            build_w3(&chi, &fast, 1.0, 0.05),
            Err(KgError::PathNotAdmissible(_))
        ));
    }

    // -- The decomposition identity ------------------------------------------------

    fn rel_l2(a: &ScalarField, b: &ScalarField) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in a.values().iter().zip(b.values()) {
            num += (x - y).norm_sqr();
            den += y.norm_sqr();
        }
        (num / den).sqrt()
    }

    #[test]
    fn decomposition_matches_direct_duhamel() {
        // The module's central identity: W1 + W2 + W3 equals the directly
        // integrated field up to quadrature error, which drops ~4x per
        // halving of the quadrature step. The direct reference runs at a
        // much finer step so its own error stays below the measured levels.
        let grid = make_grid(16, 12.0).unwrap();
        let chi = test_chi(&grid);
        let t = 2.0;
        let path = oscillating_path(0.003125, 641);
        let s0 = smooth_state(&grid);
        let reference = kg_duhamel_direct(&chi, &path, &s0, t, 0.003125).unwrap();
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&dtq| {
                let w1 = build_w1(&chi, &path, t).unwrap();
                let w2 = build_w2(&chi, &s0, t).unwrap();
                let w3 = build_w3(&chi, &path, t, dtq).unwrap();
                let mut sum = w1;
                for b in 0..grid.len() {
                    sum.values_mut()[b] += w2.values()[b] + w3.values()[b];
                }
                rel_l2(&sum, &reference)
            })
            .collect();
        assert!(errs[2] < 5e-3, "decomposition residual {:?}", errs);
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!((3.0..5.5).contains(&r1), "ratios {:?}", errs);
        assert!((3.0..5.5).contains(&r2), "ratios {:?}", errs);
    }

    #[test]
    fn corrector_closes_the_identity_for_launched_paths() {
        // Inertial path with v0 != 0: W3 vanishes, but the tau = 0 boundary
        // term survives; W1 + W2 + corrector must reproduce the direct field.
        let grid = make_grid(16, 12.0).unwrap();
        let chi = test_chi(&grid);
        let v0 = [0.3, 0.0, 0.0];
        let path = NucleusPath::inertial(0.003125, 641, 10.0, v0).unwrap();
        let s0 = smooth_state(&grid);
        let t = 2.0;
        let reference = kg_duhamel_direct(&chi, &path, &s0, t, 0.003125).unwrap();
        let w1 = build_w1(&chi, &path, t).unwrap();
        let w2 = build_w2(&chi, &s0, t).unwrap();
        let corr = boundary_corrector(&chi, v0, t).unwrap();
        let mut sum = w1;
        for b in 0..grid.len() {
            sum.values_mut()[b] += w2.values()[b] + corr.values()[b];
        }
        let err = rel_l2(&sum, &reference);
        assert!(err < 1e-3, "launched-path residual {err}");
        // The corrector is genuinely load-bearing here.
        let mut without = build_w1(&chi, &path, t).unwrap();
        for b in 0..grid.len() {
            without.values_mut()[b] += w2.values()[b];
        }
        assert!(rel_l2(&without, &reference) > 10.0 * err);
    }

    #[test]
    fn corrector_vanishes_at_rest_and_is_real() {
        let grid = make_grid(16, 12.0).unwrap();
        let chi = test_chi(&grid);
        let zero = boundary_corrector(&chi, [0.0; 3], 1.7).unwrap();
        let sup = zero.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(sup < 1e-15);
        let moving = boundary_corrector(&chi, [0.25, -0.1, 0.0], 1.7).unwrap();
        assert!(realness_defect(&moving) < 1e-9);
    }

    #[test]
    fn series_builders_agree_with_single_time_builders() {
        let grid = make_grid(12, 10.0).unwrap();
        let chi = test_chi(&grid);
        let path = oscillating_path(0.05, 21);
        let s0 = smooth_state(&grid);
        let direct = direct_w_series(&chi, &path, &s0).unwrap();
        let decomp = decomposition_w_series(&chi, &path, &s0).unwrap();
        assert_eq!(direct.len(), path.len());
        assert_eq!(decomp.len(), path.len());
        for &k in &[0usize, 7, 20] {
            let t = path.t(k);
            let single = kg_duhamel_direct(&chi, &path, &s0, t, path.dt()).unwrap();
            assert!(rel_l2(&direct[k], &single) < 1e-12);
            let mut sum = build_w1(&chi, &path, t).unwrap();
            let w2 = build_w2(&chi, &s0, t).unwrap();
            let w3 = build_w3(&chi, &path, t, path.dt()).unwrap();
            for b in 0..grid.len() {
                sum.values_mut()[b] += w2.values()[b] + w3.values()[b];
            }
            let mut worst = 0.0f64;
            for b in 0..grid.len() {
                worst = worst.max((decomp[k].values()[b] - sum.values()[b]).norm());
            }
            assert!(worst < 1e-12, "node {k} mismatch {worst}");
        }
    }

    #[test]
    fn w3_integral_diagnostic() {
        let grid = make_grid(12, 10.0).unwrap();
        let chi = test_chi(&grid);
        let path = oscillating_path(0.05, 41);
        let bound = w3_sup_norm_integral(&chi, &path, 2.0, 0.1, 1.5).unwrap();
        assert!(bound.is_finite() && bound > 0.0);
        assert!(matches!(
            w3_sup_norm_integral(&chi, &path, 2.0, 0.1, 0.5),
            Err(KgError::UnsupportedRegularity(_))
        ));
    }
}
