use super::NnError;

/// Dense row-major array of finite `f64` values.
///
/// Sequence data is laid out time-major: a `[steps, channels]` tensor stores
/// all channels of step 0, then step 1, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::DataLength {
                shape,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    /// Skips validation. Callers guarantee `data.len() == product(shape)`;
    /// finiteness is checked at the optimizer boundary instead.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(shape.to_vec(), vec![0.0; shape.iter().product()])
    }

    pub fn vector(data: Vec<f64>) -> Result<Self, NnError> {
        Self::new(vec![data.len()], data)
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

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, NnError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NnError::DataLength {
                shape,
                len: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn sum_squared_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Mean squared difference over all elements.
    pub fn mse(&self, other: &Tensor) -> f64 {
        self.sum_squared_diff(other) / self.data.len() as f64
    }

    /// Value at `(step, channel)` of a rank-2 tensor.
    pub fn at(&self, step: usize, channel: usize) -> f64 {
        self.data[step * self.shape[1] + channel]
    }

    /// One channel of a `[steps, channels]` tensor as a contiguous vector.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        let width = self.shape[1];
        self.data.iter().skip(channel).step_by(width).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(NnError::NonFinite { index: 1 })
        ));
        assert!(Tensor::new(vec![1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn rejects_bad_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn channel_extraction() {
        let t = Tensor::new(vec![3, 2], vec![1., 10., 2., 20., 3., 30.]).unwrap();
        assert_eq!(t.channel(0), vec![1., 2., 3.]);
        assert_eq!(t.channel(1), vec![10., 20., 30.]);
        assert_eq!(t.at(2, 1), 30.);
    }
}
