use crate::error::{Error, Result};

/// Dense `[C, H, W, T]` extent. Time is the innermost (contiguous) axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub t: usize,
}

impl Shape4 {
    pub fn new(c: usize, h: usize, w: usize, t: usize) -> Self {
        Shape4 { c, h, w, t }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w * self.t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_channels(self, c: usize) -> Self {
        Shape4 { c, ..self }
    }
}

impl std::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.c, self.h, self.w, self.t)
    }
}

/// Real-valued 4-D array laid out as `[C, H, W, T]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape4,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: Shape4) -> Self {
        Tensor4 {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape4, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} elements for shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.c {
            for y in 0..shape.h {
                for x in 0..shape.w {
                    for t in 0..shape.t {
                        data.push(f(c, y, x, t));
                    }
                }
            }
        }
        Tensor4 { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize, t: usize) -> usize {
        debug_assert!(c < self.shape.c && y < self.shape.h && x < self.shape.w && t < self.shape.t);
        ((c * self.shape.h + y) * self.shape.w + x) * self.shape.t + t
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize, t: usize) -> f64 {
        self.data[self.index(c, y, x, t)]
    }

    #[inline]
    pub fn get_mut(&mut self, c: usize, y: usize, x: usize, t: usize) -> &mut f64 {
        let i = self.index(c, y, x, t);
        &mut self.data[i]
    }

    /// Time series of one neuron.
    #[inline]
    pub fn series(&self, c: usize, y: usize, x: usize) -> &[f64] {
        let start = ((c * self.shape.h + y) * self.shape.w + x) * self.shape.t;
        &self.data[start..start + self.shape.t]
    }

    #[inline]
    pub fn series_mut(&mut self, c: usize, y: usize, x: usize) -> &mut [f64] {
        let start = ((c * self.shape.h + y) * self.shape.w + x) * self.shape.t;
        &mut self.data[start..start + self.shape.t]
    }

    /// Iterates over every neuron's time series.
    pub fn neurons(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.shape.t.max(1))
    }

    pub fn neurons_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.shape.t.max(1))
    }

    /// Copy of one channel as a single-channel tensor.
    pub fn channel(&self, c: usize) -> Tensor4 {
        let n = self.shape.h * self.shape.w * self.shape.t;
        Tensor4 {
            shape: self.shape.with_channels(1),
            data: self.data[c * n..(c + 1) * n].to_vec(),
        }
    }

    /// Stacks tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor4]) -> Result<Tensor4> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("nothing to concatenate".to_string()))?;
        let base = first.shape;
        let mut c = 0;
        let mut data = Vec::new();
        for p in parts {
            if (p.shape.h, p.shape.w, p.shape.t) != (base.h, base.w, base.t) {
                return Err(Error::Shape(format!(
                    "cannot concatenate {} with {}",
                    p.shape, base
                )));
            }
            c += p.shape.c;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor4 {
            shape: base.with_channels(c),
            data,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4 {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        self.expect_shape(other.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn expect_shape(&self, shape: Shape4) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Shape(format!(
                "expected {shape}, found {}",
                self.shape
            )));
        }
        Ok(())
    }
}
