//! Crate-internal imports shared by every module.

#[allow(unused_imports)]
pub(crate) use alloc::{
    boxed::Box,
    format,
    string::{String, ToString},
    vec,
    vec::Vec,
};
// Float math for `no_std` builds goes through the libm-backed simba traits.
#[allow(unused_imports)]
pub(crate) use nalgebra::{ComplexField, RealField};
