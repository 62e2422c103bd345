//! The guide in `book/`, compiled so that every snippet runs as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/residuals.md")]
pub mod residuals {}

#[doc = include_str!("../../../book/src/taylor.md")]
pub mod taylor {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/fdm.md")]
pub mod fdm {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
