
pub mod bench;
pub mod bloch;
pub mod effective;
pub mod error;
pub mod liouville;
pub mod matcore;
pub mod spectral;

pub use error::{Error, Result};
pub use matcore::NormKind;

pub type C64 = num_complex::Complex64;
/// Dense complex matrix in double precision.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Single-precision counterpart, supported by the `matcore` kernel only.
pub type CMatrix32 = nalgebra::DMatrix<num_complex::Complex32>;
