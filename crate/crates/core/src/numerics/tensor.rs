use super::NumericsError;

/// Dense row-major tensor of `f64` values.
///
/// A tensor is a value: once constructed its shape and contents do not change
/// through the public API. Every dimension is strictly positive and every
/// element is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(NumericsError::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::LengthMismatch { shape, len: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor without validating finiteness. Shape must already be
    /// consistent with the data length.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self, NumericsError> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn scalar(value: f64) -> Result<Self, NumericsError> {
        Self::new(vec![1], vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor dimensions must be positive"
        );
        assert!(value.is_finite());
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return None;
            }
            flat = flat * d + i;
        }
        Some(self.data[flat])
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self, NumericsError> {
        Self::new(shape, self.data.clone())
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
pub(crate) fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn check_axis(shape: &[usize], axis: usize) -> Result<(), NumericsError> {
    if axis >= shape.len() {
        return Err(NumericsError::InvalidAxis {
            axis,
            rank: shape.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite(data: &[f64]) -> Result<(), NumericsError> {
    // A value is non-finite exactly when its exponent bits are all ones. The
    // integer OR-reduction vectorizes; the slow scan only runs on failure.
    const EXP: u64 = 0x7ff0_0000_0000_0000;
    let bad = data
        .iter()
        .fold(0u64, |acc, v| acc | u64::from(v.to_bits() & EXP == EXP));
    if bad == 0 {
        return Ok(());
    }
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(NumericsError::NonFinite { index }),
        None => Ok(()),
    }
}

/// Shape with `axis` removed; collapses to `[1]` when nothing remains.
pub(crate) fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter_map(|(i, &d)| (i != axis).then_some(d))
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

/// Softmax along `axis`, computed with max subtraction.
pub fn softmax(logits: &Tensor, axis: usize) -> Result<Tensor, NumericsError> {
    check_axis(logits.shape(), axis)?;
    check_finite(logits.data())?;
    let (outer, len, inner) = axis_extents(logits.shape(), axis);
    let mut out = vec![0.0; logits.numel()];
    super::kernels::softmax_strided(logits.data(), &mut out, outer, len, inner);
    Ok(Tensor::from_parts(logits.shape().to_vec(), out))
}

/// `log Σ exp` along `axis`, computed with max subtraction. The reduced axis
/// is removed from the output shape.
pub fn log_sum_exp(logits: &Tensor, axis: usize) -> Result<Tensor, NumericsError> {
    check_axis(logits.shape(), axis)?;
    check_finite(logits.data())?;
    let (outer, len, inner) = axis_extents(logits.shape(), axis);
    let mut out = vec![0.0; outer * inner];
    super::kernels::lse_strided(logits.data(), &mut out, outer, len, inner);
    Ok(Tensor::from_parts(reduced_shape(logits.shape(), axis), out))
}

/// Softmax of a plain slice.
pub fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    super::kernels::softmax_strided(logits, &mut out, 1, logits.len(), 1);
    out
}

/// `log Σ exp` of a plain slice.
pub fn log_sum_exp_slice(logits: &[f64]) -> Result<f64, NumericsError> {
    if logits.is_empty() {
        return Err(NumericsError::EmptyAxis);
    }
    check_finite(logits)?;
    let mut out = [0.0];
    super::kernels::lse_strided(logits, &mut out, 1, logits.len(), 1);
    Ok(out[0])
}
