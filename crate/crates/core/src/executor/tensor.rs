use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::TensorShape;

/// Dense `f64` tensor in (batch, channel, row, column) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub shape: TensorShape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, shape: TensorShape) -> Self {
        Self {
            n,
            shape,
            data: vec![0.0; n * shape.numel()],
        }
    }

    pub fn from_vec(n: usize, shape: TensorShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * shape.numel() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n}x{shape}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor values must be finite"));
        }
        Ok(Self { n, shape, data })
    }

    /// Uniform values in [-1, 1) from a seeded generator.
    pub fn random(n: usize, shape: TensorShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            n,
            shape,
            data: (0..n * shape.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape.channels + c) * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(b, c, y, x);
        self.data[i] = v;
    }

    /// Value at a possibly out-of-bounds position; zero outside.
    #[inline]
    pub fn at_padded(&self, b: usize, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y as usize >= self.shape.height || x as usize >= self.shape.width {
            0.0
        } else {
            self.at(b, c, y as usize, x as usize)
        }
    }

    pub fn same_dims(&self, other: &Tensor) -> bool {
        self.n == other.n && self.shape == other.shape
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if !self.same_dims(other) {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.n, self.shape, other.n, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::ShapeMismatch("elementwise add of different shapes".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// One batch item as a batch of one.
    pub fn item(&self, b: usize) -> Tensor {
        let len = self.shape.numel();
        Tensor {
            n: 1,
            shape: self.shape,
            data: self.data[b * len..(b + 1) * len].to_vec(),
        }
    }

    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::invalid("cannot stack zero tensors"))?;
        let mut data = Vec::with_capacity(items.len() * first.shape.numel());
        for t in items {
            if t.shape != first.shape || t.n != 1 {
                return Err(Error::ShapeMismatch("stacked items differ in shape".into()));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            n: items.len(),
            shape: first.shape,
            data,
        })
    }
}
