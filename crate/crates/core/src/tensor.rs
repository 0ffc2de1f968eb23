//! Dense rank-3 tensor with shape (height, width, channels).
//!
//! Layout is row-major over the grid with channels innermost: the element at
//! grid cell (i, j), channel c lives at `(i * width + j) * channels + c`.
//! Window tensors, convolution activations, and saliency maps all share this
//! layout, so a cell's channel vector is always one contiguous slice.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Tensor3 {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Wraps an existing buffer; `data.len()` must equal `h * w * c`.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            height * width * channels,
            "tensor buffer does not match shape"
        );
        Tensor3 {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, c: usize) -> usize {
        debug_assert!(i < self.height && j < self.width && c < self.channels);
        (i * self.width + j) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.idx(i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let k = self.idx(i, j, c);
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let k = self.idx(i, j, c);
        self.data[k] += v;
    }

    /// Channel vector of one grid cell as a contiguous slice.
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.width + j) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let start = (i * self.width + j) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Contiguous run of `span` cells starting at (i, j) within row i.
    #[inline]
    pub fn row_segment(&self, i: usize, j: usize, span: usize) -> &[f64] {
        debug_assert!(j + span <= self.width);
        let start = (i * self.width + j) * self.channels;
        &self.data[start..start + span * self.channels]
    }

    #[inline]
    pub fn row_segment_mut(&mut self, i: usize, j: usize, span: usize) -> &mut [f64] {
        debug_assert!(j + span <= self.width);
        let start = (i * self.width + j) * self.channels;
        &mut self.data[start..start + span * self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Tensor3 {
        Tensor3 {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn from_f32_slice(height: usize, width: usize, channels: usize, data: &[f32]) -> Self {
        assert_eq!(data.len(), height * width * channels);
        Tensor3 {
            height,
            width,
            channels,
            data: data.iter().map(|&v| v as f64).collect(),
        }
    }
}
