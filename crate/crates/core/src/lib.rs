pub mod encoders;
pub mod error;
pub mod rules;
pub mod structure;
pub mod workspace;
pub mod abstracter;
pub mod search;
pub mod scenarios;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/structures.md")]
mod book_structures {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/rules.md")]
mod book_rules {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/abstraction.md")]
mod book_abstraction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/search.md")]
mod book_search {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/encoders.md")]
mod book_encoders {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
