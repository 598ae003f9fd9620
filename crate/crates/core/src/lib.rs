//! Growth of matrix coefficients for multiplicative representations of free
//! groups, computed from a finite transfer operator and cross-checked against
//! brute-force enumeration of the Cayley tree.
//!
//! The usual entry points are [`format::parse_system`],
//! [`transfer::Prepared::new`] and [`spectral::classify_growth`]; the guide
//! under `book/` walks through each stage.

pub mod error;
pub mod format;
pub mod linalg;
pub mod normalization;
pub mod oracle;
pub mod report;
pub mod spectral;
pub mod sweep;
pub mod system;
pub mod transfer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/systems.md")]
    pub mod systems {}
    #[doc = include_str!("../../../book/src/normalization.md")]
    pub mod normalization {}
    #[doc = include_str!("../../../book/src/transfer.md")]
    pub mod transfer {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    pub mod oracle {}
    #[doc = include_str!("../../../book/src/classification.md")]
    pub mod classification {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    pub mod sweeps {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
