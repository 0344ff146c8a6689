//! Minimal dense tensor: a flat `Vec<f64>` plus a row-major shape.
//!
//! Deliberately small — just what the layers need. No broadcasting, no
//! views; reshapes copy the shape vector and keep the data.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension, i.e. the batch size for activations.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "cannot view {:?} as {:?}",
            self.shape,
            shape
        );
        Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        }
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at2_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let cols = self.shape[1];
        &mut self.data[i * cols + j]
    }

    #[inline]
    pub fn idx4(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx4(n, c, h, w)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::from_vec(&[2, 3], (0..6).map(f64::from).collect());
        assert_eq!(t.at2(1, 2), 5.0);
        let t4 = Tensor::from_vec(&[2, 2, 2, 2], (0..16).map(f64::from).collect());
        assert_eq!(t4.at4(1, 0, 1, 1), 11.0);
    }

    #[test]
    #[should_panic(expected = "shape")]
    fn mismatched_shape_panics() {
        Tensor::from_vec(&[2, 2], vec![1.0; 5]);
    }
}
