use num_traits::Float;
use std::fmt::Debug;

/// A strided row-major matrix view: element `(i, j)` lives at
/// `data[i * rs + j * cs]`.
#[derive(Clone, Copy)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> View<'a, T> {
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, rs: cols, cs: 1 }
    }

    pub fn transposed(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn in_bounds(&self) -> bool {
        self.rows == 0
            || self.cols == 0
            || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

/// Scalar type the network can be instantiated with.
pub trait Real: Float + Debug + Default + Send + Sync + 'static {
    /// `c = a * b + beta * c` with `c` row-major `a.rows x b.cols`.
    fn gemm(a: View<'_, Self>, b: View<'_, Self>, beta: Self, c: &mut [Self]);

    fn from_f64(v: f64) -> Self;

    fn to_f64(self) -> f64;
}

fn check<T>(a: &View<'_, T>, b: &View<'_, T>, c: &[T]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(a.in_bounds() && b.in_bounds(), "view exceeds its buffer");
    assert_eq!(c.len(), a.rows * b.cols, "output has wrong size");
}

impl Real for f32 {
    fn gemm(a: View<'_, f32>, b: View<'_, f32>, beta: f32, c: &mut [f32]) {
        check(&a, &b, c);
        // SAFETY: `check` confirms all three operands fit their buffers.
        unsafe {
            matrixmultiply::sgemm(
                a.rows, a.cols, b.cols, 1.0,
                a.data.as_ptr(), a.rs as isize, a.cs as isize,
                b.data.as_ptr(), b.rs as isize, b.cs as isize,
                beta,
                c.as_mut_ptr(), b.cols as isize, 1,
            );
        }
    }

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn gemm(a: View<'_, f64>, b: View<'_, f64>, beta: f64, c: &mut [f64]) {
        check(&a, &b, c);
        // SAFETY: `check` confirms all three operands fit their buffers.
        unsafe {
            matrixmultiply::dgemm(
                a.rows, a.cols, b.cols, 1.0,
                a.data.as_ptr(), a.rs as isize, a.cs as isize,
                b.data.as_ptr(), b.rs as isize, b.cs as isize,
                beta,
                c.as_mut_ptr(), b.cols as isize, 1,
            );
        }
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }
}
