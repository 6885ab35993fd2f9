use super::TensorError;

/// Dense complex array stored as separate real and imaginary planes (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    pub(crate) re: Vec<f64>,
    pub(crate) im: Vec<f64>,
    pub requires_grad: bool,
    /// Accumulated `(dL/dRe, dL/dIm)` after a backward pass.
    pub grad: Option<(Vec<f64>, Vec<f64>)>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl ComplexTensor {
    pub fn new(shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> Result<Self, TensorError> {
        let n = numel(shape);
        if re.len() != n || im.len() != n {
            return Err(TensorError::PlaneLength {
                shape: shape.to_vec(),
                re: re.len(),
                im: im.len(),
            });
        }
        let t = Self {
            shape: shape.to_vec(),
            re,
            im,
            requires_grad: false,
            grad: None,
        };
        t.check_finite()?;
        Ok(t)
    }

    pub(crate) fn new_unchecked(shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> Self {
        debug_assert_eq!(numel(shape), re.len());
        debug_assert_eq!(re.len(), im.len());
        Self {
            shape: shape.to_vec(),
            re,
            im,
            requires_grad: false,
            grad: None,
        }
    }

    /// Real-valued tensor (imaginary plane zero).
    pub fn from_real(shape: &[usize], re: Vec<f64>) -> Result<Self, TensorError> {
        let n = re.len();
        Self::new(shape, re, vec![0.0; n])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = numel(shape);
        Self {
            shape: shape.to_vec(),
            re: vec![0.0; n],
            im: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], re: f64, im: f64) -> Self {
        let n = numel(shape);
        Self {
            shape: shape.to_vec(),
            re: vec![re; n],
            im: vec![im; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(re: f64, im: f64) -> Self {
        Self::filled(&[1], re, im)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    pub fn get(&self, i: usize) -> (f64, f64) {
        (self.re[i], self.im[i])
    }

    pub fn set(&mut self, i: usize, re: f64, im: f64) {
        self.re[i] = re;
        self.im[i] = im;
    }

    pub fn into_planes(self) -> (Vec<f64>, Vec<f64>) {
        (self.re, self.im)
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        if numel(shape) != self.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        if let Some((gr, _)) = &self.grad {
            debug_assert_eq!(gr.len(), self.re.len());
        }
        Ok(self)
    }

    pub fn check_finite(&self) -> Result<(), TensorError> {
        if self.re.iter().chain(self.im.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite("tensor"))
        }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r.hypot(*i))
            .collect()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}
