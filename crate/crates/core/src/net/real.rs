use std::fmt::{Debug, Display};

use num_traits::Float;

/// Floating-point element type of a network. `f32` in production, `f64` for
/// gradient checking.
pub trait Real: Float + Default + Debug + Display + Send + Sync + 'static {
    /// Row-major `C = alpha * op(A) * op(B) + beta * C` where `op(A)` is
    /// `m x k` and `op(B)` is `k x n`. A transposed operand is stored in its
    /// untransposed `k x m` (resp. `n x k`) row-major form.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        n: usize,
        k: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).unwrap()
    }

    fn as_f64(self) -> f64 {
        <f64 as num_traits::NumCast>::from(self).unwrap()
    }
}

fn strides(trans: bool, rows: usize, cols: usize) -> (isize, isize) {
    // Logical (rows x cols); when transposed the storage is (cols x rows).
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $f:path) => {
        impl Real for $t {
            fn gemm(
                trans_a: bool,
                trans_b: bool,
                m: usize,
                n: usize,
                k: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k, "gemm: A too small");
                assert!(b.len() >= k * n, "gemm: B too small");
                assert!(c.len() >= m * n, "gemm: C too small");
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(trans_a, m, k);
                let (rsb, csb) = strides(trans_b, k, n);
                // SAFETY: the asserts above bound every index the kernel
                // touches for the given dimensions and strides.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);
