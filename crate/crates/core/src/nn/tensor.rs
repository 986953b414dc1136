//! Minimal dense 3-d tensor (height x width x channels), row-major per
//! channel. Index layout: data[(c * height + y) * width + x].

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
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

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * channels, "tensor size mismatch");
        Tensor3 {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    #[inline]
    pub fn add_at(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(y, x, c);
        self.data[i] += v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}
