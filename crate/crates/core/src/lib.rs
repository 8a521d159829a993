//! Typed-graph double-pushout rewriting with an encoding of negative
//! application conditions into complemented graph structure.
//!
//! The crate is organised around a small category-of-graphs kernel
//! ([`graph`]) on top of which sit conditional grammars and DPO rewriting
//! ([`grammar`]), the classification of constraint shapes ([`shapes`]), the
//! complementation encoder ([`encoder`]), grammar morphisms and retyping
//! functors ([`morphism`]), bounded state-space exploration and the
//! equivalence test bench ([`explore`]), and the counter-based extension for
//! attributed, unsafe grammars ([`attributed`]).
//!
//! Grammars are read from and written to a JSON format ([`format`]); the
//! bundled corpus grammars are constructed programmatically in [`fixtures`].

pub mod attributed;
pub mod encoder;
pub mod explore;
pub mod fixtures;
pub mod format;
pub mod grammar;
pub mod graph;
pub mod morphism;
pub mod shapes;
