//! Dense row-major tensors, stable reductions and a central-difference
//! gradient checker.

use thiserror::Error;

use crate::scalar::Scalar;

/// Relative-error denominator floor used by [`finite_difference_check`].
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("{0}: input vector is empty")]
    Empty(&'static str),
    #[error("{context}: non-finite value at index {index}")]
    NonFinite { context: String, index: usize },
    #[error("shape {shape:?} holds {expected} elements but data has {actual}")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Incompatible {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error("function evaluation is not finite at coordinate {coordinate}")]
    NonFiniteEvaluation { coordinate: usize },
}

/// Dense tensor with a row-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NumericsError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::ShapeData {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn from_elem(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// Stacks equally long rows into an `[rows.len(), width]` matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self, NumericsError> {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(NumericsError::Incompatible {
                    op: "from_rows",
                    left: vec![width],
                    right: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            shape: vec![rows.len(), width],
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    /// Leading extent; 1 for scalars.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Product of all trailing extents.
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self, NumericsError> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    /// Errors on the first NaN or infinity.
    pub fn check_finite(&self, context: &str) -> Result<(), NumericsError> {
        check_finite(&self.data, context)
    }
}

pub fn check_finite<T: Scalar>(values: &[T], context: &str) -> Result<(), NumericsError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(NumericsError::NonFinite {
            context: context.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

fn matrix_dims<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize), NumericsError> {
    if t.shape.len() != 2 {
        return Err(NumericsError::Incompatible {
            op,
            left: t.shape.clone(),
            right: vec![],
        });
    }
    Ok((t.shape[0], t.shape[1]))
}

/// Which operands of a product are read transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    None,
    Left,
    Right,
}

/// General matrix product `op(a) * op(b)` where `op` is selected by `mode`.
pub fn matmul_with<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    mode: Transpose,
) -> Result<Tensor<T>, NumericsError> {
    let (ar, ac) = matrix_dims(a, "matmul")?;
    let (br, bc) = matrix_dims(b, "matmul")?;
    let (m, k, a_strides) = match mode {
        Transpose::Left => (ac, ar, (1, ac as isize)),
        _ => (ar, ac, (ac as isize, 1)),
    };
    let (k2, n, b_strides) = match mode {
        Transpose::Right => (bc, br, (1, bc as isize)),
        _ => (br, bc, (bc as isize, 1)),
    };
    if k != k2 {
        return Err(NumericsError::Incompatible {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = Tensor::zeros(vec![m, n]);
    if m > 0 && n > 0 && k > 0 {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &a.data,
            a_strides,
            &b.data,
            b_strides,
            T::zero(),
            &mut out.data,
            (n as isize, 1),
        );
    }
    Ok(out)
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    matmul_with(a, b, Transpose::None)
}

/// Index of the largest element, ties resolved toward the smallest index.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `log(sum(exp(v)))`, shifted by the maximum so it cannot overflow.
pub fn log_sum_exp<T: Scalar>(v: &[T]) -> Result<T, NumericsError> {
    if v.is_empty() {
        return Err(NumericsError::Empty("log_sum_exp"));
    }
    check_finite(v, "log_sum_exp")?;
    let max = v[argmax(v)];
    let sum: T = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

pub fn softmax<T: Scalar>(v: &[T]) -> Result<Vec<T>, NumericsError> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

pub fn softmax_in_place<T: Scalar>(v: &mut [T]) -> Result<(), NumericsError> {
    if v.is_empty() {
        return Err(NumericsError::Empty("softmax"));
    }
    check_finite(v, "softmax")?;
    let max = v[argmax(v)];
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    Ok(())
}

/// Row-wise softmax of an `[n, L]` matrix.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i))?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport<T> {
    pub max_relative_error: T,
    pub worst_coordinate: usize,
    pub analytic: T,
    pub numeric: T,
}

/// Compares `analytic_grad` against central differences of `f` at `point`.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_difference_check<T, F>(
    mut f: F,
    point: &Tensor<T>,
    analytic_grad: &Tensor<T>,
    step: T,
) -> Result<GradCheckReport<T>, NumericsError>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> T,
{
    if !(step > T::zero()) || !step.is_finite() {
        return Err(NumericsError::BadStep(step.as_f64()));
    }
    if point.shape() != analytic_grad.shape() {
        return Err(NumericsError::Incompatible {
            op: "finite_difference_check",
            left: point.shape.clone(),
            right: analytic_grad.shape.clone(),
        });
    }
    let floor = T::of(REL_ERROR_FLOOR);
    let two = T::of(2.0);
    let mut probe = point.clone();
    let mut report = GradCheckReport {
        max_relative_error: T::zero(),
        worst_coordinate: 0,
        analytic: analytic_grad.data.first().copied().unwrap_or_else(T::zero),
        numeric: T::zero(),
    };
    let mut first = true;
    for i in 0..point.len() {
        let original = probe.data[i];
        probe.data[i] = original + step;
        let plus = f(&probe);
        probe.data[i] = original - step;
        let minus = f(&probe);
        probe.data[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericsError::NonFiniteEvaluation { coordinate: i });
        }
        let numeric = (plus - minus) / (two * step);
        let analytic = analytic_grad.data[i];
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        let rel = (analytic - numeric).abs() / denom;
        if first || rel > report.max_relative_error {
            report = GradCheckReport {
                max_relative_error: rel,
                worst_coordinate: i,
                analytic,
                numeric,
            };
            first = false;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tensor_shape_must_match_data() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]),
            Err(NumericsError::ShapeData { expected: 6, actual: 5, .. })
        ));
    }

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp(&[0.0f64, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let big = log_sum_exp(&[1000.0f64, 1000.0]).unwrap();
        assert!((big - (1000.0 + 2f64.ln())).abs() < 1e-12);
        // 2 + ln(1 + e^-2)
        assert!((log_sum_exp(&[2.0f64, 0.0]).unwrap() - 2.126_928_011_042_972_5).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), Err(NumericsError::Empty("log_sum_exp")));
        assert!(log_sum_exp(&[f64::NAN]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0f64, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        for c in [-50.0f64, 0.0, 3.7, 400.0] {
            let p = softmax(&[c, c + 3f64.ln()]).unwrap();
            assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
        }
        let p = softmax(&[-1e300f64, 0.0]).unwrap();
        assert!(p.iter().all(|v| !v.is_nan()));
        assert!(p[0] < 1e-300 && (p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_smallest_index_on_ties() {
        assert_eq!(argmax(&[0.5f64, 0.5]), 0);
        assert_eq!(argmax(&[0.1f64, 0.7, 0.7]), 1);
    }

    #[test]
    fn matmul_transposes_agree_with_naive_product() {
        let a = Tensor::new(vec![2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::new(vec![3, 2], vec![7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
        let at = Tensor::new(vec![3, 2], vec![1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0]).unwrap();
        assert_eq!(matmul_with(&at, &b, Transpose::Left).unwrap(), c);
        let bt = Tensor::new(vec![2, 3], vec![7.0f64, 9.0, 11.0, 8.0, 10.0, 12.0]).unwrap();
        assert_eq!(matmul_with(&a, &bt, Transpose::Right).unwrap(), c);
        assert!(matmul(&a, &a).is_err());
    }

    #[test]
    fn gradient_check_on_square() {
        let point = Tensor::new(vec![1], vec![3.0f64]).unwrap();
        let grad = Tensor::new(vec![1], vec![6.0f64]).unwrap();
        let r = finite_difference_check(|t| t.data()[0] * t.data()[0], &point, &grad, 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-8);
    }

    #[test]
    fn gradient_check_reports_scaled_gradient() {
        let point = Tensor::new(vec![1], vec![3.0f64]).unwrap();
        let grad = Tensor::new(vec![1], vec![12.0f64]).unwrap();
        let r = finite_difference_check(|t| t.data()[0] * t.data()[0], &point, &grad, 1e-5).unwrap();
        assert!((r.max_relative_error - 0.5).abs() < 1e-6);
        assert_eq!(r.worst_coordinate, 0);
    }

    #[test]
    fn gradient_check_names_non_finite_coordinate() {
        let point = Tensor::new(vec![2], vec![1.0f64, 1e-4]).unwrap();
        let grad = Tensor::new(vec![2], vec![0.0f64, 1e4]).unwrap();
        let err = finite_difference_check(|t| t.data()[1].ln(), &point, &grad, 1e-3);
        assert_eq!(err, Err(NumericsError::NonFiniteEvaluation { coordinate: 1 }));
        assert!(finite_difference_check(|_| 0.0, &point, &grad, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn log_sum_exp_shift(v in prop::collection::vec(-30.0f64..30.0, 1..8), c in -100.0f64..100.0) {
            let base = log_sum_exp(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let s = log_sum_exp(&shifted).unwrap();
            prop_assert!((s - (base + c)).abs() <= 1e-12 * (base + c).abs().max(1.0));
        }

        #[test]
        fn softmax_shift_and_normalization(v in prop::collection::vec(-30.0f64..30.0, 1..8), c in -100.0f64..100.0) {
            let p = softmax(&v).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
