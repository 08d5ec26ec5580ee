//! Linear algebra kernels: tridiagonal and band eigensolvers.

pub mod band;
pub mod tridiag;
pub mod window;

pub use band::{BandLdl, HermitianBand};
pub use tridiag::SymTridiag;
pub use window::{band_eigenpairs_in, band_kth_eigenvalue, sorted_hermitian_eigen, SliceOptions, WindowEigen};

use num_complex::Complex64;

/// Scalars the band solvers work over: `f64` and `Complex64`.
pub trait Field: nalgebra::ComplexField<RealField = f64> + Copy {}

impl<T: nalgebra::ComplexField<RealField = f64> + Copy> Field for T {}

/// Conversion from the complex coupling values the model is built from.
pub trait Scalar: Field {
    fn from_complex(z: Complex64) -> Self;
    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn from_complex(z: Complex64) -> Self {
        z.re
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn from_complex(z: Complex64) -> Self {
        z
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}
