//! Hermitian eigensolver backends.
//!
//! With the `lapack` feature the divide-and-conquer drivers `dsyevd` and
//! `zheevd` of the system LAPACK are used; otherwise nalgebra's implicit QR.
//! [`reference_eigen`] always runs the nalgebra routine, which makes it a
//! convenient independent check on the default path.
//!
//! Some BLAS builds pick a kernel that is silently wrong on virtualized CPUs
//! (OpenBLAS honours `OPENBLAS_CORETYPE` to override the detection). The
//! LAPACK path is therefore self-tested once per process against nalgebra and
//! abandoned with a warning if the two disagree.

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

const EIGEN_MAX_SWEEPS: usize = 100_000;

/// Name of the backend in use: `"lapack"` or `"nalgebra"`.
pub fn eigen_backend() -> &'static str {
    #[cfg(feature = "lapack")]
    if lapack_usable() {
        return "lapack";
    }
    "nalgebra"
}

/// Scalars the eigensolvers accept: `f64` and `Complex64`.
pub trait EigenScalar: ComplexField<RealField = f64> + Copy {
    #[doc(hidden)]
    fn backend_eigen(a: DMatrix<Self>) -> Option<SymmetricEigen<Self, Dyn>>;

    /// `W W†`.
    #[doc(hidden)]
    fn gram(w: &DMatrix<Self>) -> DMatrix<Self> {
        w * w.adjoint()
    }
}

/// `W W†` from four real products. nalgebra multiplies complex matrices
/// with naive loops, which is several times slower than this.
fn complex_gram(w: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let a = w.map(|z| z.re);
    let b = w.map(|z| z.im);
    let re = &a * a.transpose() + &b * b.transpose();
    let im = &b * a.transpose() - &a * b.transpose();
    re.zip_map(&im, Complex64::new)
}

/// nalgebra's symmetric QR iteration on an already Hermitian matrix.
pub fn reference_eigen<T: EigenScalar>(a: DMatrix<T>) -> Option<SymmetricEigen<T, Dyn>> {
    SymmetricEigen::try_new(a, f64::EPSILON, EIGEN_MAX_SWEEPS)
}

#[cfg(not(feature = "lapack"))]
impl EigenScalar for f64 {
    fn backend_eigen(a: DMatrix<f64>) -> Option<SymmetricEigen<f64, Dyn>> {
        reference_eigen(a)
    }
}

#[cfg(not(feature = "lapack"))]
impl EigenScalar for Complex64 {
    fn backend_eigen(a: DMatrix<Complex64>) -> Option<SymmetricEigen<Complex64, Dyn>> {
        reference_eigen(a)
    }

    fn gram(w: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        complex_gram(w)
    }
}

#[cfg(feature = "lapack")]
mod ffi {
    use num_complex::Complex64;
    use std::os::raw::{c_char, c_int};

    // Trailing arguments are the hidden lengths gfortran expects for
    // CHARACTER parameters.

    extern "C" {
        pub fn dsyevd_(
            jobz: *const c_char,
            uplo: *const c_char,
            n: *const c_int,
            a: *mut f64,
            lda: *const c_int,
            w: *mut f64,
            work: *mut f64,
            lwork: *const c_int,
            iwork: *mut c_int,
            liwork: *const c_int,
            info: *mut c_int,
            jobz_len: usize,
            uplo_len: usize,
        );
        pub fn zheevd_(
            jobz: *const c_char,
            uplo: *const c_char,
            n: *const c_int,
            a: *mut Complex64,
            lda: *const c_int,
            w: *mut f64,
            work: *mut Complex64,
            lwork: *const c_int,
            rwork: *mut f64,
            lrwork: *const c_int,
            iwork: *mut c_int,
            liwork: *const c_int,
            info: *mut c_int,
            jobz_len: usize,
            uplo_len: usize,
        );
    }
}

#[cfg(feature = "lapack")]
fn lapack_usable() -> bool {
    use rand::{Rng, SeedableRng};
    use std::sync::OnceLock;
    static OK: OnceLock<bool> = OnceLock::new();
    *OK.get_or_init(|| {
        // large enough to exercise the divide-and-conquer branch
        let n = 120;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5e1f);
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &a + a.transpose();
        let c = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let c = &c + c.adjoint();
        let ok = lapack_f64(a.clone()).is_some_and(|e| reconstructs(&e, &a))
            && lapack_c64(c.clone()).is_some_and(|e| reconstructs(&e, &c));
        if !ok {
            log::warn!("system LAPACK failed its self-test; using nalgebra eigensolvers");
        }
        ok
    })
}

#[cfg(feature = "lapack")]
fn reconstructs<T: ComplexField<RealField = f64> + Copy>(
    e: &SymmetricEigen<T, Dyn>,
    a: &DMatrix<T>,
) -> bool {
    let n = a.nrows();
    let v = &e.eigenvectors;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(T::from_real));
    let recon = (v * d * v.adjoint() - a).norm();
    let orth = (v.adjoint() * v - DMatrix::<T>::identity(n, n)).norm();
    recon < 1e-10 * a.norm().max(1.0) && orth < 1e-10
}

#[cfg(feature = "lapack")]
const JOBZ: &[u8; 2] = b"V\0";
#[cfg(feature = "lapack")]
const UPLO: &[u8; 2] = b"L\0";

#[cfg(feature = "lapack")]
impl EigenScalar for f64 {
    fn backend_eigen(a: DMatrix<f64>) -> Option<SymmetricEigen<f64, Dyn>> {
        if a.nrows() == 0 || !lapack_usable() {
            return reference_eigen(a);
        }
        // divide and conquer can fail to converge on rare inputs
        lapack_f64(a.clone()).or_else(|| {
            log::debug!("dsyevd failed for n={}; retrying with QR", a.nrows());
            reference_eigen(a)
        })
    }
}

#[cfg(feature = "lapack")]
fn lapack_f64(mut a: DMatrix<f64>) -> Option<SymmetricEigen<f64, Dyn>> {
    let n = a.nrows();
    let ni = i32::try_from(n).ok()?;
    let lwork = 1 + 6 * ni + 2 * ni * ni;
    let liwork = 3 + 5 * ni;
    let mut w = vec![0.0; n];
    let mut work = vec![0.0; lwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    let mut info = 0;
    // SAFETY: buffers are sized per the dsyevd documentation and `a` is a
    // contiguous column-major n×n array.
    unsafe {
        ffi::dsyevd_(
            JOBZ.as_ptr().cast(),
            UPLO.as_ptr().cast(),
            &ni,
            a.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
            1,
            1,
        );
    }
    (info == 0).then(|| SymmetricEigen {
        eigenvalues: DVector::from_vec(w),
        eigenvectors: a,
    })
}

#[cfg(feature = "lapack")]
impl EigenScalar for Complex64 {
    fn backend_eigen(a: DMatrix<Complex64>) -> Option<SymmetricEigen<Complex64, Dyn>> {
        if a.nrows() == 0 || !lapack_usable() {
            return reference_eigen(a);
        }
        lapack_c64(a.clone()).or_else(|| {
            log::debug!("zheevd failed for n={}; retrying with QR", a.nrows());
            reference_eigen(a)
        })
    }

    fn gram(w: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        complex_gram(w)
    }
}

#[cfg(feature = "lapack")]
fn lapack_c64(mut a: DMatrix<Complex64>) -> Option<SymmetricEigen<Complex64, Dyn>> {
    let n = a.nrows();
    let ni = i32::try_from(n).ok()?;
    let lwork = 2 * ni + ni * ni;
    let lrwork = 1 + 5 * ni + 2 * ni * ni;
    let liwork = 3 + 5 * ni;
    let mut w = vec![0.0; n];
    let mut work = vec![Complex64::new(0.0, 0.0); lwork as usize];
    let mut rwork = vec![0.0; lrwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    let mut info = 0;
    // SAFETY: as above; Complex64 is layout-compatible with LAPACK's
    // double complex.
    unsafe {
        ffi::zheevd_(
            JOBZ.as_ptr().cast(),
            UPLO.as_ptr().cast(),
            &ni,
            a.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
            1,
            1,
        );
    }
    (info == 0).then(|| SymmetricEigen {
        eigenvalues: DVector::from_vec(w),
        eigenvectors: a,
    })
}
