//! Centered periodic Fourier grids and the fields that live on them.
//!
//! A [`Grid3`] discretizes the cube `[-L/2, L/2)^3` with `n` points per axis,
//! `x_i = (i - n/2) dx`, `dx = L/n`. The dual grid carries the frequencies
//! `xi_k = k' dk`, `dk = 2 pi / L`, with signed index `k' in {-n/2, ..., n/2-1}`
//! stored in standard FFT bin order. Transforms are unitary with respect to
//! the counting measure on both sides, so Parseval holds exactly:
//! `sum |f_j|^2 = sum |fhat_k|^2`.
//!
//! The centering phase is folded into the transform: since
//! `xi_k . x_j = 2 pi k' (j - n/2) / n`, a forward transform is a plain FFT
//! followed by a `(-1)^(kx+ky+kz)` sign flip, and the inverse applies the flip
//! first. Real fields that are even about the box center therefore get real
//! spectra, and multiplication by `exp(-i xi . a)` in frequency space is an
//! honest translation by `a` in space.
//!
//! Data layout is x-fastest: `idx = ix + n*(iy + n*iz)`, and spinors store
//! their four components as separate contiguous arrays.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use thiserror::Error;

/// Which side of the Fourier transform a field currently lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repr {
    /// Samples `f(x_j)` on the spatial lattice.
    Space,
    /// Unitary DFT coefficients `fhat(xi_k)`.
    Frequency,
}

/// Direction of a transform request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Space to frequency.
    Forward,
    /// Frequency to space.
    Inverse,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid size n must be even, got {0}")]
    OddN(usize),
    #[error("grid size n must be at least 4, got {0}")]
    SmallN(usize),
    #[error("box length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("field is already in the {0:?} representation")]
    AlreadyIn(Repr),
    #[error("expected a field in the {expected:?} representation, found {found:?}")]
    WrongRepr { expected: Repr, found: Repr },
    #[error("fields live on different grids: {0}^3 with L = {1} vs {2}^3 with L = {3}")]
    GridMismatch(usize, f64, usize, f64),
    #[error("multiplier produced a non-finite value at xi = ({0}, {1}, {2})")]
    NonFiniteMultiplier(f64, f64, f64),
}

/// The Japanese bracket `<xi> = sqrt(1 + |xi|^2)`.
#[inline]
pub fn bracket(xi: [f64; 3]) -> f64 {
    (1.0 + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
}

/// A cubic periodic grid with cached FFT plans.
///
/// Construct through [`make_grid`]; fields hold the grid behind an `Arc` so
/// plans are built once per resolution.
pub struct Grid3 {
    n: usize,
    length: f64,
    dx: f64,
    dk: f64,
    /// Unitary normalization `n^(-3/2)` shared by both transform directions.
    scale: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid3")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for Grid3 {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

/// Builds the grid with `n` points per axis on a box of side `length`.
///
/// `n` must be even (the centering phase assumes a lattice point at the
/// origin) and at least 4; `length` must be positive and finite.
pub fn make_grid(n: usize, length: f64) -> Result<Arc<Grid3>, GridError> {
    if n % 2 != 0 {
        return Err(GridError::OddN(n));
    }
    if n < 4 {
        return Err(GridError::SmallN(n));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(GridError::BadLength(length));
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft(n, FftDirection::Forward);
    let inv = planner.plan_fft(n, FftDirection::Inverse);
    Ok(Arc::new(Grid3 {
        n,
        length,
        dx: length / n as f64,
        dk: 2.0 * std::f64::consts::PI / length,
        scale: (n as f64).powi(3).sqrt().recip(),
        fwd,
        inv,
    }))
}

impl Grid3 {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Lattice spacing `L/n`.
    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Frequency spacing `2 pi / L`.
    #[inline]
    pub fn dk(&self) -> f64 {
        self.dk
    }

    /// Number of lattice points, `n^3`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element `dx^3` of the spatial lattice.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dx * self.dx
    }

    /// Volume element `dk^3` of the frequency lattice.
    #[inline]
    pub fn freq_cell_volume(&self) -> f64 {
        self.dk * self.dk * self.dk
    }

    /// Linear index of the lattice site `(ix, iy, iz)`; x runs fastest.
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n * (iy + self.n * iz)
    }

    /// Spatial coordinate along one axis, `(i - n/2) dx`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dx
    }

    /// Frequency along one axis in FFT bin order; bin `n/2` is the Nyquist
    /// mode `-n/2 * dk`.
    #[inline]
    pub fn freq(&self, i: usize) -> f64 {
        let signed = if i < self.n / 2 {
            i as f64
        } else {
            i as f64 - self.n as f64
        };
        signed * self.dk
    }

    #[inline]
    pub fn x(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [self.coord(ix), self.coord(iy), self.coord(iz)]
    }

    #[inline]
    pub fn xi(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [self.freq(ix), self.freq(iy), self.freq(iz)]
    }

    /// Visits every lattice site in storage order with its spatial point.
    pub fn for_each_x(&self, mut f: impl FnMut(usize, [f64; 3])) {
        let mut k = 0;
        for iz in 0..self.n {
            let z = self.coord(iz);
            for iy in 0..self.n {
                let y = self.coord(iy);
                for ix in 0..self.n {
                    f(k, [self.coord(ix), y, z]);
                    k += 1;
                }
            }
        }
    }

    /// Visits every frequency bin in storage order with its frequency vector.
    pub fn for_each_xi(&self, mut f: impl FnMut(usize, [f64; 3])) {
        let mut k = 0;
        for iz in 0..self.n {
            let xz = self.freq(iz);
            for iy in 0..self.n {
                let xy = self.freq(iy);
                for ix in 0..self.n {
                    f(k, [self.freq(ix), xy, xz]);
                    k += 1;
                }
            }
        }
    }

    /// In-place unitary transform of one component array.
    ///
    /// Forward: axis FFTs, then the centering sign `(-1)^(kx+ky+kz)` and the
    /// `n^(-3/2)` normalization. Inverse: sign and normalization first, then
    /// axis inverse FFTs. The two are exact inverses of each other up to
    /// rounding.
    pub(crate) fn transform_values(&self, vals: &mut [Complex64], dir: Direction) {
        debug_assert_eq!(vals.len(), self.len());
        match dir {
            Direction::Forward => {
                self.fft_all_axes(vals, &self.fwd);
                self.apply_centering(vals);
            }
            Direction::Inverse => {
                self.apply_centering(vals);
                self.fft_all_axes(vals, &self.inv);
            }
        }
    }

    /// Multiplies bin `k` by `scale * (-1)^(kx+ky+kz)`.
    fn apply_centering(&self, vals: &mut [Complex64]) {
        let n = self.n;
        let mut k = 0;
        for iz in 0..n {
            for iy in 0..n {
                let row = if (iy + iz) % 2 == 0 { self.scale } else { -self.scale };
                for ix in 0..n {
                    let s = if ix % 2 == 0 { row } else { -row };
                    vals[k] = vals[k].scale(s);
                    k += 1;
                }
            }
        }
    }

    fn fft_all_axes(&self, vals: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut scratch = vec![Complex64::ZERO; fft.get_inplace_scratch_len()];
        // x lines are contiguous.
        for line in vals.chunks_exact_mut(n) {
            fft.process_with_scratch(line, &mut scratch);
        }
        // y and z lines are strided; gather into a buffer.
        let mut line = vec![Complex64::ZERO; n];
        for iz in 0..n {
            for ix in 0..n {
                let base = ix + n * n * iz;
                for (iy, slot) in line.iter_mut().enumerate() {
                    *slot = vals[base + n * iy];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (iy, slot) in line.iter().enumerate() {
                    vals[base + n * iy] = *slot;
                }
            }
        }
        for iy in 0..n {
            for ix in 0..n {
                let base = ix + n * iy;
                for (iz, slot) in line.iter_mut().enumerate() {
                    *slot = vals[base + n * n * iz];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (iz, slot) in line.iter().enumerate() {
                    vals[base + n * n * iz] = *slot;
                }
            }
        }
    }
}

/// Checks that two fields share a grid; distances and pointwise combinations
/// are only defined on matching grids.
pub fn check_same_grid(a: &Grid3, b: &Grid3) -> Result<(), GridError> {
    if a == b {
        Ok(())
    } else {
        Err(GridError::GridMismatch(a.n, a.length, b.n, b.length))
    }
}

/// A complex scalar field on a [`Grid3`], tagged with its representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid3>,
    repr: Repr,
    values: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid3>, repr: Repr) -> Self {
        Self {
            grid: grid.clone(),
            repr,
            values: vec![Complex64::ZERO; grid.len()],
        }
    }

    /// Samples `f(x)` on the spatial lattice.
    pub fn from_space_fn(grid: &Arc<Grid3>, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let mut values = vec![Complex64::ZERO; grid.len()];
        grid.for_each_x(|k, x| values[k] = f(x));
        Self {
            grid: grid.clone(),
            repr: Repr::Space,
            values,
        }
    }

    /// Samples a real-valued profile on the spatial lattice.
    pub fn from_real_space_fn(grid: &Arc<Grid3>, f: impl Fn([f64; 3]) -> f64) -> Self {
        Self::from_space_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    /// Assembles a field directly from frequency coefficients `fhat(xi)`.
    pub fn from_freq_fn(grid: &Arc<Grid3>, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let mut values = vec![Complex64::ZERO; grid.len()];
        grid.for_each_xi(|k, xi| values[k] = f(xi));
        Self {
            grid: grid.clone(),
            repr: Repr::Frequency,
            values,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    #[inline]
    pub fn repr(&self) -> Repr {
        self.repr
    }

    #[inline]
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Transforms to the other representation; requesting the representation
    /// the field is already in is a usage error.
    pub fn transform(mut self, dir: Direction) -> Result<Self, GridError> {
        let target = match dir {
            Direction::Forward => Repr::Frequency,
            Direction::Inverse => Repr::Space,
        };
        if self.repr == target {
            return Err(GridError::AlreadyIn(target));
        }
        self.grid.clone().transform_values(&mut self.values, dir);
        self.repr = target;
        Ok(self)
    }

    /// Transforms only if needed.
    pub fn into_repr(self, repr: Repr) -> Self {
        if self.repr == repr {
            self
        } else {
            let dir = match repr {
                Repr::Space => Direction::Inverse,
                Repr::Frequency => Direction::Forward,
            };
            self.transform(dir).expect("repr checked")
        }
    }

    /// Multiplies each frequency coefficient by `m(xi)`. The field must be in
    /// the frequency representation, and the multiplier must stay finite on
    /// the frequency lattice.
    pub fn apply_multiplier(
        &mut self,
        m: impl Fn([f64; 3]) -> Complex64,
    ) -> Result<(), GridError> {
        if self.repr != Repr::Frequency {
            return Err(GridError::WrongRepr {
                expected: Repr::Frequency,
                found: self.repr,
            });
        }
        let mut bad: Option<[f64; 3]> = None;
        let values = &mut self.values;
        self.grid.for_each_xi(|k, xi| {
            let w = m(xi);
            if bad.is_none() && !(w.re.is_finite() && w.im.is_finite()) {
                bad = Some(xi);
            }
            values[k] *= w;
        });
        if let Some(xi) = bad {
            return Err(GridError::NonFiniteMultiplier(xi[0], xi[1], xi[2]));
        }
        Ok(())
    }

    /// `l^2` norm of the raw coefficient vector, `sqrt(sum |f_k|^2)`. The
    /// transforms are unitary, so this is representation-independent.
    pub fn l2_raw(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `L^2` norm with the `dx^3` quadrature weight.
    pub fn l2_norm(&self) -> f64 {
        self.l2_raw() * self.grid.cell_volume().sqrt()
    }
}

/// A four-component spinor field; components are stored as separate
/// contiguous arrays sharing one representation tag.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: Arc<Grid3>,
    repr: Repr,
    comps: [Vec<Complex64>; 4],
}

impl SpinorField {
    pub fn zeros(grid: &Arc<Grid3>, repr: Repr) -> Self {
        let make = || vec![Complex64::ZERO; grid.len()];
        Self {
            grid: grid.clone(),
            repr,
            comps: [make(), make(), make(), make()],
        }
    }

    /// Samples a spinor-valued function on the spatial lattice.
    pub fn from_space_fn(grid: &Arc<Grid3>, f: impl Fn([f64; 3]) -> [Complex64; 4]) -> Self {
        let mut out = Self::zeros(grid, Repr::Space);
        let [c0, c1, c2, c3] = &mut out.comps;
        grid.for_each_x(|k, x| {
            let u = f(x);
            c0[k] = u[0];
            c1[k] = u[1];
            c2[k] = u[2];
            c3[k] = u[3];
        });
        out
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    #[inline]
    pub fn repr(&self) -> Repr {
        self.repr
    }

    #[inline]
    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    #[inline]
    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comps[c]
    }

    /// Mutable access to all four components at once.
    #[inline]
    pub fn components_mut(&mut self) -> &mut [Vec<Complex64>; 4] {
        &mut self.comps
    }

    /// The spinor at one lattice site.
    #[inline]
    pub fn at(&self, k: usize) -> [Complex64; 4] {
        [
            self.comps[0][k],
            self.comps[1][k],
            self.comps[2][k],
            self.comps[3][k],
        ]
    }

    #[inline]
    pub fn set(&mut self, k: usize, u: [Complex64; 4]) {
        self.comps[0][k] = u[0];
        self.comps[1][k] = u[1];
        self.comps[2][k] = u[2];
        self.comps[3][k] = u[3];
    }

    /// See [`ScalarField::transform`].
    pub fn transform(mut self, dir: Direction) -> Result<Self, GridError> {
        let target = match dir {
            Direction::Forward => Repr::Frequency,
            Direction::Inverse => Repr::Space,
        };
        if self.repr == target {
            return Err(GridError::AlreadyIn(target));
        }
        let grid = self.grid.clone();
        for c in &mut self.comps {
            grid.transform_values(c, dir);
        }
        self.repr = target;
        Ok(self)
    }

    /// Transforms only if needed.
    pub fn into_repr(self, repr: Repr) -> Self {
        if self.repr == repr {
            self
        } else {
            let dir = match repr {
                Repr::Space => Direction::Inverse,
                Repr::Frequency => Direction::Forward,
            };
            self.transform(dir).expect("repr checked")
        }
    }

    /// Applies one scalar multiplier `m(xi)` to all four components.
    pub fn apply_multiplier(
        &mut self,
        m: impl Fn([f64; 3]) -> Complex64,
    ) -> Result<(), GridError> {
        if self.repr != Repr::Frequency {
            return Err(GridError::WrongRepr {
                expected: Repr::Frequency,
                found: self.repr,
            });
        }
        let mut bad: Option<[f64; 3]> = None;
        let [c0, c1, c2, c3] = &mut self.comps;
        self.grid.for_each_xi(|k, xi| {
            let w = m(xi);
            if bad.is_none() && !(w.re.is_finite() && w.im.is_finite()) {
                bad = Some(xi);
            }
            c0[k] *= w;
            c1[k] *= w;
            c2[k] *= w;
            c3[k] *= w;
        });
        if let Some(xi) = bad {
            return Err(GridError::NonFiniteMultiplier(xi[0], xi[1], xi[2]));
        }
        Ok(())
    }

    /// Applies a matrix-valued multiplier `xi -> M(xi)` acting on the spinor
    /// components at each frequency bin.
    pub fn apply_matrix_multiplier(
        &mut self,
        m: impl Fn([f64; 3]) -> [[Complex64; 4]; 4],
    ) -> Result<(), GridError> {
        if self.repr != Repr::Frequency {
            return Err(GridError::WrongRepr {
                expected: Repr::Frequency,
                found: self.repr,
            });
        }
        let mut bad: Option<[f64; 3]> = None;
        let [c0, c1, c2, c3] = &mut self.comps;
        self.grid.for_each_xi(|k, xi| {
            let mat = m(xi);
            let u = [c0[k], c1[k], c2[k], c3[k]];
            let mut out = [Complex64::ZERO; 4];
            for (row, slot) in mat.iter().zip(out.iter_mut()) {
                let mut acc = Complex64::ZERO;
                for (mij, uj) in row.iter().zip(u.iter()) {
                    if bad.is_none() && !(mij.re.is_finite() && mij.im.is_finite()) {
                        bad = Some(xi);
                    }
                    acc += mij * uj;
                }
                *slot = acc;
            }
            c0[k] = out[0];
            c1[k] = out[1];
            c2[k] = out[2];
            c3[k] = out[3];
        });
        if let Some(xi) = bad {
            return Err(GridError::NonFiniteMultiplier(xi[0], xi[1], xi[2]));
        }
        Ok(())
    }

    /// Pointwise `C^4` magnitude squared at one site.
    #[inline]
    pub fn abs2_at(&self, k: usize) -> f64 {
        self.comps[0][k].norm_sqr()
            + self.comps[1][k].norm_sqr()
            + self.comps[2][k].norm_sqr()
            + self.comps[3][k].norm_sqr()
    }

    /// `l^2` norm over all components of the raw coefficient vectors.
    pub fn l2_raw(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// `L^2` norm with the `dx^3` quadrature weight.
    pub fn l2_norm(&self) -> f64 {
        self.l2_raw() * self.grid.cell_volume().sqrt()
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Errors reading or writing the binary dump format.
#[derive(Debug, Error)]
pub enum DumpError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes; not a field dump")]
    BadMagic,
    #[error("unsupported dump version {0}")]
    BadVersion(u32),
    #[error("unknown field kind tag {0}")]
    UnknownKind(u8),
    #[error("dump holds a field of kind {found}, expected kind {expected}")]
    KindMismatch { found: u8, expected: u8 },
    #[error("non-finite value at linear index {index} in component {component}")]
    NonFinite { component: usize, index: usize },
    #[error("trailing bytes after field data")]
    TrailingData,
    #[error("invalid grid header: {0}")]
    Grid(#[from] GridError),
    #[error("field must be in the space representation to dump")]
    NotSpace,
}

const DUMP_MAGIC: &[u8; 4] = b"DKGA";
const DUMP_VERSION: u32 = 1;
const KIND_SCALAR: u8 = 0;
const KIND_SPINOR: u8 = 1;

/// A field recovered from a dump without knowing its kind in advance.
#[derive(Debug, Clone)]
pub enum FieldDump {
    Scalar(ScalarField),
    Spinor(SpinorField),
}

fn write_header(w: &mut impl Write, n: usize, length: f64, kind: u8) -> Result<(), DumpError> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&length.to_le_bytes())?;
    w.write_all(&[kind])?;
    Ok(())
}

fn write_component(w: &mut impl Write, vals: &[Complex64]) -> Result<(), DumpError> {
    // Interleaved (re, im) little-endian f64 pairs in storage order.
    let mut buf = Vec::with_capacity(vals.len() * 16);
    for v in vals {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct DumpHeader {
    grid: Arc<Grid3>,
    kind: u8,
}

fn read_header(r: &mut impl Read) -> Result<DumpHeader, DumpError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(DumpError::BadMagic);
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != DUMP_VERSION {
        return Err(DumpError::BadVersion(version));
    }
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let length = f64::from_le_bytes(b8);
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    if kind[0] != KIND_SCALAR && kind[0] != KIND_SPINOR {
        return Err(DumpError::UnknownKind(kind[0]));
    }
    Ok(DumpHeader {
        grid: make_grid(n, length)?,
        kind: kind[0],
    })
}

fn read_component(
    r: &mut impl Read,
    len: usize,
    component: usize,
) -> Result<Vec<Complex64>, DumpError> {
    let mut buf = vec![0u8; len * 16];
    r.read_exact(&mut buf)?;
    let mut vals = Vec::with_capacity(len);
    for (index, pair) in buf.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(pair[..8].try_into().unwrap());
        let im = f64::from_le_bytes(pair[8..].try_into().unwrap());
        if !(re.is_finite() && im.is_finite()) {
            return Err(DumpError::NonFinite { component, index });
        }
        vals.push(Complex64::new(re, im));
    }
    Ok(vals)
}

fn check_eof(r: &mut impl Read) -> Result<(), DumpError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(DumpError::TrailingData),
    }
}

impl ScalarField {
    /// Writes the field in the binary dump format. Dumps are canonical in the
    /// space representation.
    pub fn write_dump(&self, w: &mut impl Write) -> Result<(), DumpError> {
        if self.repr != Repr::Space {
            return Err(DumpError::NotSpace);
        }
        write_header(w, self.grid.n(), self.grid.length(), KIND_SCALAR)?;
        write_component(w, &self.values)
    }

    pub fn dump_to_path(&self, path: impl AsRef<Path>) -> Result<(), DumpError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_dump(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_dump(r: &mut impl Read) -> Result<Self, DumpError> {
        let header = read_header(r)?;
        if header.kind != KIND_SCALAR {
            return Err(DumpError::KindMismatch {
                found: header.kind,
                expected: KIND_SCALAR,
            });
        }
        let values = read_component(r, header.grid.len(), 0)?;
        check_eof(r)?;
        Ok(Self {
            grid: header.grid,
            repr: Repr::Space,
            values,
        })
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Self, DumpError> {
        Self::read_dump(&mut BufReader::new(File::open(path)?))
    }
}

impl SpinorField {
    /// Writes the field in the binary dump format, components outermost.
    pub fn write_dump(&self, w: &mut impl Write) -> Result<(), DumpError> {
        if self.repr != Repr::Space {
            return Err(DumpError::NotSpace);
        }
        write_header(w, self.grid.n(), self.grid.length(), KIND_SPINOR)?;
        for c in &self.comps {
            write_component(w, c)?;
        }
        Ok(())
    }

    pub fn dump_to_path(&self, path: impl AsRef<Path>) -> Result<(), DumpError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_dump(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_dump(r: &mut impl Read) -> Result<Self, DumpError> {
        let header = read_header(r)?;
        if header.kind != KIND_SPINOR {
            return Err(DumpError::KindMismatch {
                found: header.kind,
                expected: KIND_SPINOR,
            });
        }
        let len = header.grid.len();
        let comps = [
            read_component(r, len, 0)?,
            read_component(r, len, 1)?,
            read_component(r, len, 2)?,
            read_component(r, len, 3)?,
        ];
        check_eof(r)?;
        Ok(Self {
            grid: header.grid,
            repr: Repr::Space,
            comps,
        })
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Self, DumpError> {
        Self::read_dump(&mut BufReader::new(File::open(path)?))
    }
}

/// Loads a dump of either kind.
pub fn load_field(path: impl AsRef<Path>) -> Result<FieldDump, DumpError> {
    let bytes = std::fs::read(path)?;
    let mut cursor = &bytes[..];
    let header = read_header(&mut cursor)?;
    let mut cursor = &bytes[..];
    match header.kind {
        KIND_SCALAR => Ok(FieldDump::Scalar(ScalarField::read_dump(&mut cursor)?)),
        KIND_SPINOR => Ok(FieldDump::Spinor(SpinorField::read_dump(&mut cursor)?)),
        other => Err(DumpError::UnknownKind(other)),
    }
}
