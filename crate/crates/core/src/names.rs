//! Fresh names used by the reductions. All of them contain the reserved
//! marker, so no user signature admits them.

use crate::model::{Concept, Symbol, Var};

const AT: &str = "__at__";

/// The goal concept name `N`.
pub fn goal() -> Symbol {
    Symbol::from("__N")
}

/// The single answer variable of reduced queries.
pub fn root_var() -> Var {
    Var::from("__x0")
}

/// `A^x` (and `r^x` for roles).
pub fn at(name: &Symbol, x: &Var) -> Symbol {
    Symbol::from(format!("{name}{AT}{x}"))
}

/// Splits `A^x` into `(A, x)`.
pub fn split_at(name: &Symbol) -> Option<(Symbol, Var)> {
    name.as_str().rsplit_once(AT).map(|(a, x)| (Symbol::from(a), Var::from(x)))
}

/// `A^x_{∃r.E}`
pub fn exists_at(r: &Symbol, filler: &Concept, x: &Var) -> Symbol {
    Symbol::from(format!("EX__{r}__{}{AT}{x}", filler.code()))
}

const ABBREV: &str = "AC__";

/// `A_C`, the name abbreviating an eliminated tree.
pub fn abbrev(c: &Concept) -> Symbol {
    Symbol::from(format!("{ABBREV}{}", c.code()))
}

pub fn is_abbrev(name: &Symbol) -> bool {
    name.as_str().starts_with(ABBREV)
}
