//! Rewriting ontology-mediated queries with EL TBoxes into unions of
//! conjunctive queries.

pub mod emit;
pub mod engine;
pub mod error;
pub mod io;
pub mod model;
pub mod names;
pub mod oracle;
pub mod reasoner;
pub mod reduction_rcq;
pub mod reduction_tq;
pub mod structure;

pub use error::{Error, ParseError, Result};
pub use model::{Abox, Atom, Concept, ConceptInclusion, ConjQuery, Omq, Signature, Symbol, TBox, UnionQuery, Var};
