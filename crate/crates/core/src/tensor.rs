//! Dense row-major tensors and the handful of linear-algebra kernels the
//! estimators and layers are built from.
//!
//! Every reduction accumulates left to right in index order, so repeated
//! runs over the same data produce bit-identical results.

use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Validation("tensor shape must have at least one axis".into()));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(dim_err(
                "Tensor::new",
                format!("shape {shape:?} needs {expected} elements, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        let mut t = Self::zeros(&[n, n]);
        for (i, &v) in values.iter().enumerate() {
            t.data[i * n + i] = v;
        }
        t
    }

    /// Builds an `rows × cols` matrix from row slices of equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(dim_err("Tensor::from_rows", "ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), cols], data)
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Validation("cannot stack zero tensors".into()))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape != first.shape {
                return Err(dim_err(
                    "Tensor::stack",
                    format!("{:?} vs {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        Self::new(shape, data)
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

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Reinterprets the shape without touching the data order.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(dim_err(
                "reshape",
                format!("{:?} -> {shape:?} changes element count", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        self.clone().reshape(shape)
    }

    /// Views the tensor as a matrix whose rows run along the leading axis.
    pub fn as_matrix(&self) -> Result<Self> {
        let rows = *self
            .shape
            .first()
            .ok_or_else(|| dim_err("as_matrix", "rank-0 tensor"))?;
        let cols = self.len().checked_div(rows).unwrap_or(0);
        self.reshaped(&[rows, cols])
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(dim_err("dims2", format!("expected a matrix, got shape {s:?}"))),
        }
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> T {
        self.data[i * self.shape[1] + j]
    }

    /// Number of entries along the leading axis.
    pub fn outer(&self) -> usize {
        self.shape[0]
    }

    /// Flat slice of the `i`-th entry along the leading axis.
    pub fn row(&self, i: usize) -> &[T] {
        let stride = self.len() / self.shape[0];
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let stride = self.len() / self.shape[0];
        &mut self.data[i * stride..(i + 1) * stride]
    }

    /// Copy of the `i`-th entry along the leading axis, with that axis removed.
    pub fn sample(&self, i: usize) -> Self {
        Self {
            shape: self.shape[1..].to_vec(),
            data: self.row(i).to_vec(),
        }
    }

    /// Gathers entries of the leading axis into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Self {
        let stride = self.len() / self.shape[0];
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self { shape, data }
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = Self::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, alpha: T) -> Self {
        self.map(|v| v * alpha)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        self.expect_same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.expect_same_shape(other, "dot")?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub(crate) fn expect_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(dim_err(op, format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }
}

#[inline]
/// Four interleaved partial sums so the loop vectorises.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    for (ca, cb) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let tail = n - n % 4;
    let rest = a[tail..].iter().zip(&b[tail..]).fold(T::zero(), |s, (&x, &y)| s + x * y);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

/// Matrix product `a · b`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k) = a.dims2()?;
    let (k2, m) = b.dims2()?;
    if k != k2 {
        return Err(dim_err(
            "matmul",
            format!("inner dimensions {k} and {k2} disagree"),
        ));
    }
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let row = &mut out.data[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Subtracts each column's mean.
pub fn center_columns<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, m) = x.dims2()?;
    if n == 0 {
        return Err(Error::Validation("center_columns needs at least one row".into()));
    }
    let mut means = vec![T::zero(); m];
    for i in 0..n {
        for (acc, &v) in means.iter_mut().zip(x.row(i)) {
            *acc += v;
        }
    }
    let inv = T::one() / T::from_count(n);
    for v in &mut means {
        *v *= inv;
    }
    let mut out = x.clone();
    for i in 0..n {
        for (v, &mu) in out.row_mut(i).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    Ok(out)
}

/// Row Gram matrix `x · xᵀ`, exactly symmetric.
pub fn gram<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, _) = x.dims2()?;
    let mut g = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i..n {
            let v = dot(x.row(i), x.row(j));
            g.data[i * n + j] = v;
            g.data[j * n + i] = v;
        }
    }
    Ok(g)
}

pub fn trace<T: Scalar>(a: &Tensor<T>) -> Result<T> {
    let (n, m) = a.dims2()?;
    if n != m {
        return Err(dim_err("trace", format!("non-square {n}x{m} input")));
    }
    Ok((0..n).fold(T::zero(), |acc, i| acc + a.data[i * n + i]))
}

/// Sum of squared entries.
pub fn frob_sq<T: Scalar>(a: &Tensor<T>) -> T {
    a.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identity_and_zero_products() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(matmul(&Tensor::identity(3), &a).unwrap(), a);
        let z = Tensor::zeros(&[2, 4]);
        assert_eq!(matmul(&a, &z).unwrap(), Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn matmul_rejects_bad_inner_dims() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn centering_examples() {
        assert_eq!(
            center_columns(&m(&[&[1.0], &[3.0]])).unwrap(),
            m(&[&[-1.0], &[1.0]])
        );
        let same = m(&[&[2.0, -1.0, 4.0], &[2.0, -1.0, 4.0]]);
        assert_eq!(center_columns(&same).unwrap(), Tensor::zeros(&[2, 3]));
    }

    #[test]
    fn gram_single_row_and_orthonormal_rows() {
        let r = m(&[&[1.0, 2.0, 2.0]]);
        assert_eq!(gram(&r).unwrap().data(), &[9.0]);
        let s = 0.5f64.sqrt();
        let q = m(&[&[s, s, 0.0], &[s, -s, 0.0]]);
        let g = gram(&q).unwrap();
        for (a, b) in g.data().iter().zip(Tensor::<f64>::identity(2).data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn trace_and_frobenius() {
        assert_eq!(trace(&Tensor::<f64>::identity(4)).unwrap(), 4.0);
        assert_eq!(frob_sq(&Tensor::diag(&[3.0, 4.0])), 25.0);
        assert_eq!(frob_sq(&Tensor::<f64>::zeros(&[3, 3])), 0.0);
        assert!(trace(&Tensor::<f64>::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn reshape_keeps_order() {
        let t = Tensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        let r = t.reshaped(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped(&[4, 2]).is_err());
    }

    #[test]
    fn new_validates_length() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![0.0; 3]).is_err());
    }
}
