//! Dense 4-way arrays in H×W×C×T layout.
//!
//! Element `(v, u, c, t)` lives at `v + H·(u + W·(c + C·t))`: rows vary
//! fastest, so every (channel, instance) plane and every instance is a
//! contiguous run of memory.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::scalar::{cast_slice, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims4 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub t: usize,
}

impl Dims4 {
    pub const fn new(h: usize, w: usize, c: usize, t: usize) -> Self {
        Self { h, w, c, t }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c * self.t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial plane size `H·W`.
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Values per batch instance `H·W·C`.
    pub fn instance(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn with_t(self, t: usize) -> Self {
        Self { t, ..self }
    }

    fn validate(&self) -> Result<()> {
        for (axis, n) in [("H", self.h), ("W", self.w), ("C", self.c), ("T", self.t)] {
            if n == 0 {
                return Err(Error::dim(axis, 1, 0));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.h, self.w, self.c, self.t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: Dims4,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(dims: Dims4, data: Vec<T>) -> Result<Self> {
        dims.validate()?;
        ensure_dim("data length", dims.len(), data.len())?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims4) -> Self {
        Self::filled(dims, T::zero())
    }

    pub fn filled(dims: Dims4, value: T) -> Self {
        assert!(!dims.is_empty(), "tensor dims must be positive, got {dims}");
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims4, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut out = Self::zeros(dims);
        for t in 0..dims.t {
            for c in 0..dims.c {
                for u in 0..dims.w {
                    for v in 0..dims.h {
                        let i = out.index(v, u, c, t);
                        out.data[i] = f(v, u, c, t);
                    }
                }
            }
        }
        out
    }

    /// Builds a tensor from `f64` values; handy in tests and oracles.
    pub fn from_f64(dims: Dims4, values: &[f64]) -> Result<Self> {
        Self::new(dims, values.iter().map(|&x| T::of(x)).collect())
    }

    pub fn dims(&self) -> Dims4 {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, v: usize, u: usize, c: usize, t: usize) -> usize {
        let d = self.dims;
        debug_assert!(v < d.h && u < d.w && c < d.c && t < d.t);
        v + d.h * (u + d.w * (c + d.c * t))
    }

    #[inline]
    pub fn at(&self, v: usize, u: usize, c: usize, t: usize) -> T {
        self.data[self.index(v, u, c, t)]
    }

    #[inline]
    pub fn set(&mut self, v: usize, u: usize, c: usize, t: usize, value: T) {
        let i = self.index(v, u, c, t);
        self.data[i] = value;
    }

    /// The spatial plane of channel `c` in instance `t`.
    pub fn plane(&self, c: usize, t: usize) -> &[T] {
        let p = self.dims.plane();
        let start = (c + self.dims.c * t) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, c: usize, t: usize) -> &mut [T] {
        let p = self.dims.plane();
        let start = (c + self.dims.c * t) * p;
        &mut self.data[start..start + p]
    }

    /// All values of instance `t`, flattened.
    pub fn instance(&self, t: usize) -> &[T] {
        let n = self.dims.instance();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn instance_mut(&mut self, t: usize) -> &mut [T] {
        let n = self.dims.instance();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn reshape(self, dims: Dims4) -> Result<Self> {
        Self::new(dims, self.data)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: cast_slice(&self.data),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Concatenates instances along T. All parts must agree on H, W, C.
    pub fn stack(parts: &[&Tensor4<T>]) -> Result<Self> {
        let first = parts.first().ok_or(Error::dim("T", 1, 0))?.dims;
        let mut data = Vec::with_capacity(first.instance() * parts.len());
        let mut t = 0;
        for p in parts {
            let d = p.dims;
            ensure_dim("H", first.h, d.h)?;
            ensure_dim("W", first.w, d.w)?;
            ensure_dim("C", first.c, d.c)?;
            data.extend_from_slice(&p.data);
            t += d.t;
        }
        Self::new(first.with_t(t), data)
    }

    /// Gathers the listed instances into a new batch.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let n = self.dims.instance();
        let mut data = Vec::with_capacity(n * indices.len());
        for &i in indices {
            data.extend_from_slice(self.instance(i));
        }
        Self {
            dims: self.dims.with_t(indices.len()),
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        crate::scalar::all_finite(&self.data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|x| x.f64()).sum()
    }
}

/// A value together with the gradient of some scalar with respect to it.
#[derive(Clone, Debug, PartialEq)]
pub struct GradPair<T = f32> {
    pub value: Tensor4<T>,
    pub grad: Tensor4<T>,
}

impl<T: Scalar> GradPair<T> {
    pub fn new(value: Tensor4<T>, grad: Tensor4<T>) -> Result<Self> {
        let (a, b) = (value.dims(), grad.dims());
        ensure_dim("H", a.h, b.h)?;
        ensure_dim("W", a.w, b.w)?;
        ensure_dim("C", a.c, b.c)?;
        ensure_dim("T", a.t, b.t)?;
        Ok(Self { value, grad })
    }

    pub fn zero_grad(value: Tensor4<T>) -> Self {
        let grad = Tensor4::zeros(value.dims());
        Self { value, grad }
    }
}
