//! The book's chapters, one module each, so `cargo test` runs every snippet
//! in `book/src` as a doc-test against the current library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/contracts.md")]
pub mod contracts {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/competition.md")]
pub mod competition {}
#[doc = include_str!("../../../book/src/transaction_costs.md")]
pub mod transaction_costs {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
