//! Wasserstein gradient flows of relative entropy against log-concave
//! reference measures, computed with the minimizing-movement (JKO) scheme,
//! together with the independent solvers used to check them.

pub mod dirichlet;
pub mod error;
pub mod io;
pub mod jko;
pub mod measures;
pub mod oracles;
pub mod quad;
pub mod stability;
pub mod transport;

pub use error::{Error, Result};

// The book's listings are compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/boundary.md")]
    mod boundary {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
