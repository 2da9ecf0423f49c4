use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// One-dimensional tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// `rows × cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Stacks equally long rows into a `rows.len() × width` batch.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let width = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            let r = r.as_ref();
            if r.len() != width {
                return Err(Error::shape(&[width], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all trailing dimensions.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.row_len())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return Err(Error::shape(&shape, &self.shape));
        }
        self.shape = shape;
        Ok(self)
    }
}

/// Elementwise clamp into `[lo, hi]`.
pub fn clip_values(t: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
    let mut out = t.clone();
    clip_in_place(out.data_mut(), lo, hi)?;
    Ok(out)
}

pub fn clip_in_place(values: &mut [f64], lo: f64, hi: f64) -> Result<()> {
    if !(lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "clip bounds out of order: lo={lo} > hi={hi}"
        )));
    }
    for v in values {
        *v = v.clamp(lo, hi);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clip_examples() {
        let t = Tensor::vector(vec![0.3, -0.2]);
        assert_eq!(clip_values(&t, -0.1, 0.1).unwrap().data(), &[0.1, -0.1]);
        let t = Tensor::vector(vec![0.05, -0.07]);
        assert_eq!(clip_values(&t, -0.1, 0.1).unwrap(), t);
        let t = Tensor::vector(vec![-1.5, 2.0]);
        assert_eq!(clip_values(&t, -1.0, 1.0).unwrap().data(), &[-1.0, 1.0]);
    }

    #[test]
    fn clip_rejects_inverted_bounds() {
        let t = Tensor::vector(vec![0.0]);
        assert!(matches!(
            clip_values(&t, 1.0, -1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn new_checks_element_count() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().row_len(), 3);
    }

    proptest! {
        #[test]
        fn clipped_values_lie_in_bounds(
            vals in prop::collection::vec(-1e3f64..1e3, 1..64),
            a in -10.0f64..10.0,
            w in 0.0f64..10.0,
        ) {
            let t = Tensor::vector(vals);
            let out = clip_values(&t, a, a + w).unwrap();
            prop_assert!(out.data().iter().all(|&v| v >= a && v <= a + w));
        }
    }
}
