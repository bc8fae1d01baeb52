//! Dense row-major tensors and the raw matmul kernels used by the graph.

use crate::error::{Error, Result};
use num_traits::{Float, FromPrimitive};

/// Element type for all tensor math. Training runs on `f32`; gradient
/// checking runs the same code on `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn of_f64(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 conversion")
    }
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense tensor, row-major. Rank 1 and 2 are the only shapes the graph
/// produces; scalars are `[1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "tensor shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![F::zero(); n] }
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: F) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<F>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Rows/cols of a rank-2 tensor; rank-1 counts as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            2 => (self.shape[0], self.shape[1]),
            1 => (1, self.shape[0]),
            _ => panic!("dims2 on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn row(&self, i: usize) -> &[F] {
        let (_, n) = self.dims2();
        &self.data[i * n..(i + 1) * n]
    }

    /// Same data under a new shape. Lengths must match.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Self { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn item(&self) -> F {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, rhs: &Tensor<F>) -> Result<()> {
        if self.shape != rhs.shape {
            return Err(Error::shape("add_assign", &self.shape, &rhs.shape));
        }
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transposed(&self) -> Tensor<F> {
        let (m, n) = self.dims2();
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor { shape: vec![n, m], data: out }
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::of_f64(v.as_f64())).collect(),
        }
    }
}

/// `a (ta) · b (tb)`. The `ta && tb` combination is never produced by the
/// graph and is rejected.
pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, ta: bool, tb: bool) -> Result<Tensor<F>> {
    let (ar, ac) = a.dims2();
    let (br, bc) = b.dims2();
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if tb { (bc, br) } else { (br, bc) };
    if k != kb || (ta && tb) {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![F::zero(); m * n];
    let ad = a.data();
    let bd = b.data();
    match (ta, tb) {
        (false, false) => {
            for i in 0..m {
                let arow = &ad[i * k..(i + 1) * k];
                let orow = &mut out[i * n..(i + 1) * n];
                for (p, &av) in arow.iter().enumerate() {
                    let brow = &bd[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                        *o = *o + av * bv;
                    }
                }
            }
        }
        (false, true) => {
            for i in 0..m {
                let arow = &ad[i * k..(i + 1) * k];
                let orow = &mut out[i * n..(i + 1) * n];
                for (j, o) in orow.iter_mut().enumerate() {
                    let brow = &bd[j * k..(j + 1) * k];
                    let mut acc = F::zero();
                    for (&av, &bv) in arow.iter().zip(brow.iter()) {
                        acc = acc + av * bv;
                    }
                    *o = acc;
                }
            }
        }
        (true, false) => {
            // a is [k, m]; walk a's rows and accumulate rank-1 updates.
            for p in 0..k {
                let arow = &ad[p * m..(p + 1) * m];
                let brow = &bd[p * n..(p + 1) * n];
                for (i, &av) in arow.iter().enumerate() {
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                        *o = *o + av * bv;
                    }
                }
            }
        }
        (true, true) => unreachable!(),
    }
    Tensor::from_vec(&[m, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_basic() {
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b, false, false).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_transposes_agree() {
        let a = t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 4.0, -1.0]);
        let b = t(&[3, 4], &[2.0, 1.0, 0.0, -1.0, 3.0, -2.0, 1.0, 0.5, 0.25, 2.0, -3.0, 1.0]);
        let plain = matmul(&a, &b, false, false).unwrap();
        let via_tb = matmul(&a, &b.transposed(), false, true).unwrap();
        let via_ta = matmul(&a.transposed(), &b, true, false).unwrap();
        assert_eq!(plain, via_tb);
        assert_eq!(plain, via_ta);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 2], &[0.0; 4]);
        let err = matmul(&a, &b, false, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn reshape_checks_len() {
        let a = t(&[2, 3], &[0.0; 6]);
        assert!(a.reshaped(&[3, 2]).is_ok());
        assert!(a.reshaped(&[4, 2]).is_err());
    }
}
