//! Numerical toolkit for boundary regularity of nondivergence-form elliptic
//! equations in Lipschitz and C¹-type domains.

pub mod barriers;
pub mod calibration;
pub mod config;
pub mod geometry;
pub mod harness;
pub mod modulus;
pub mod pucci;
pub mod quadrature;
pub mod regdist;
pub mod solver;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/moduli.md")]
    mod moduli {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/regularized-distance.md")]
    mod regularized_distance {}
    #[doc = include_str!("../../../book/src/barriers.md")]
    mod barriers {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/growth.md")]
    mod growth {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
