use std::fmt;

/// Dense row-major matrix of `f64`.
///
/// Everything in the tape is two-dimensional; sequences and batches are laid
/// out as stacked rows.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor data length does not match shape {rows}x{cols}"
        );
        Tensor { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_vec(1, 1, vec![value])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn argmax_row(&self, r: usize) -> usize {
        argmax(self.row(r))
    }

    /// Row-wise softmax, computed outside of any tape.
    pub fn softmax_rows(&self) -> Tensor {
        let mut out = self.clone();
        for r in 0..self.rows {
            softmax_in_place(out.row_mut(r));
        }
        out
    }

    /// `self * other`, both row-major.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(
            self,
            false,
            other,
            false,
            &mut out,
            1.0,
            0.0,
        );
        out
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}x{}", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, ", {:?}", self.data)?;
        }
        write!(f, ")")
    }
}

/// First index of the maximum; NaN-free input assumed.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` where `op` optionally transposes.
pub(crate) fn gemm(
    a: &Tensor,
    trans_a: bool,
    b: &Tensor,
    trans_b: bool,
    c: &mut Tensor,
    alpha: f64,
    beta: f64,
) {
    let (m, k) = if trans_a {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (kb, n) = if trans_b {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale_in_place(beta);
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    // SAFETY: strides and extents are derived from the owning tensors' shapes,
    // which the assertions above tie to m, k and n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Tensor::from_rows(&[vec![5.0], vec![6.0]]);
        assert_eq!(a.matmul(&b).data(), &[17.0, 39.0]);
    }

    #[test]
    fn gemm_transposes() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let mut c = Tensor::zeros(3, 3);
        gemm(&a, true, &a, false, &mut c, 1.0, 0.0);
        assert_eq!(c.get(0, 0), 17.0);
        assert_eq!(c.get(2, 1), 3.0 * 2.0 + 6.0 * 5.0);
        let mut d = Tensor::zeros(2, 2);
        gemm(&a, false, &a, true, &mut d, 1.0, 0.0);
        assert_eq!(d.data(), &[14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let t = Tensor::from_rows(&[vec![0.0, 10.0], vec![1.0, 1.0]]).softmax_rows();
        assert!((t.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(t.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
    }

    use proptest::prelude::*;

    fn naive(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
        let at = |i, p| if ta { a.get(p, i) } else { a.get(i, p) };
        let bt = |p, j| if tb { b.get(j, p) } else { b.get(p, j) };
        let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let n = if tb { b.rows } else { b.cols };
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let v = (0..k).map(|p| at(i, p) * bt(p, j)).sum();
                out.set(i, j, v);
            }
        }
        out
    }

    fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |d| Tensor::from_vec(rows, cols, d))
    }

    proptest! {
        #[test]
        fn gemm_matches_the_triple_loop(
            (a, b, ta, tb) in (1..5usize, 1..5usize, 1..5usize, any::<bool>(), any::<bool>()).prop_flat_map(|(m, k, n, ta, tb)| {
                let (ar, ac) = if ta { (k, m) } else { (m, k) };
                let (br, bc) = if tb { (n, k) } else { (k, n) };
                (tensor(ar, ac), tensor(br, bc), Just(ta), Just(tb))
            })
        ) {
            let want = naive(&a, ta, &b, tb);
            let mut got = Tensor::zeros(want.rows(), want.cols());
            gemm(&a, ta, &b, tb, &mut got, 1.0, 0.0);
            for (x, y) in got.data().iter().zip(want.data()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn softmax_ignores_a_constant_shift(row in prop::collection::vec(-50.0..50.0f64, 1..8), shift in -100.0..100.0f64) {
            let mut a = row.clone();
            let mut b: Vec<f64> = row.iter().map(|x| x + shift).collect();
            softmax_in_place(&mut a);
            softmax_in_place(&mut b);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
