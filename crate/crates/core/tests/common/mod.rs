//! Seeded random generators shared by the integration tests.
#![allow(dead_code)]

use omq_core::{Abox, Atom, Concept, ConceptInclusion, ConjQuery, Signature, Symbol, TBox, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONCEPTS: [&str; 3] = ["A", "B", "C"];
pub const ROLES: [&str; 2] = ["r", "s"];

/// The ABox signature of generated OMQs; `C` and `s` stay TBox-internal.
pub fn sigma() -> Signature {
    Signature::of(["A", "B"], ["r"])
}

pub fn seed() -> u64 {
    std::env::var("OMQ_REWRITER_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0x5eed)
}

/// An independent stream per test, derived from the global seed.
pub fn rng(stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed() ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn concept(rng: &mut impl Rng, depth: usize) -> Concept {
    let n = rng.gen_range(1..=2);
    let parts: Vec<Concept> = (0..n)
        .map(|_| {
            if depth > 0 && rng.gen_bool(0.4) {
                let filler = if rng.gen_bool(0.3) { Concept::top() } else { concept(rng, depth - 1) };
                Concept::exists(*ROLES.choose(rng).unwrap(), filler)
            } else {
                Concept::name(*CONCEPTS.choose(rng).unwrap())
            }
        })
        .collect();
    Concept::and(parts)
}

pub fn tbox(rng: &mut impl Rng, max_cis: usize) -> TBox {
    let n = rng.gen_range(1..=max_cis);
    TBox::from_inclusions((0..n).map(|_| {
        let lhs = concept(rng, 1);
        let rhs = if rng.gen_bool(0.7) { Concept::name(*CONCEPTS.choose(rng).unwrap()) } else { concept(rng, 1) };
        ConceptInclusion::new(lhs, rhs)
    }))
}

fn var(i: usize, answers: usize) -> Var {
    if i < answers {
        Var::new(&format!("x{i}"))
    } else {
        Var::new(&format!("y{}", i - answers))
    }
}

/// A rooted CQ: each quantified variable hangs off an earlier variable,
/// optionally with extra edges. With `tree_quantified`, extra edges only
/// join answer variables.
pub fn rooted_cq(rng: &mut impl Rng, answers: usize, max_vars: usize, tree_quantified: bool) -> ConjQuery {
    let total = rng.gen_range(answers..=max_vars.max(answers));
    let mut atoms = Vec::new();
    for i in 1..total {
        let parent = rng.gen_range(0..i);
        let r = *ROLES.choose(rng).unwrap();
        if i < answers && rng.gen_bool(0.5) {
            atoms.push(Atom::role(r, var(i, answers), var(parent, answers)));
        } else {
            atoms.push(Atom::role(r, var(parent, answers), var(i, answers)));
        }
    }
    let extra = rng.gen_range(0..=1);
    for _ in 0..extra {
        if tree_quantified {
            if answers > 1 {
                let a = rng.gen_range(0..answers);
                let b = rng.gen_range(0..answers);
                atoms.push(Atom::role(*ROLES.choose(rng).unwrap(), var(a, answers), var(b, answers)));
            }
        } else if total > 1 {
            let a = rng.gen_range(0..total);
            let b = rng.gen_range(0..total);
            atoms.push(Atom::role(*ROLES.choose(rng).unwrap(), var(a, answers), var(b, answers)));
        }
    }
    let labels = rng.gen_range(1..=total.max(1));
    for _ in 0..labels {
        let v = rng.gen_range(0..total);
        atoms.push(Atom::concept(*CONCEPTS.choose(rng).unwrap(), var(v, answers)));
    }
    ConjQuery::new((0..answers).map(|i| var(i, answers)).collect(), atoms).expect("generated query")
}

pub fn individual(i: usize) -> Symbol {
    Symbol::new(&format!("a{}", i + 1))
}

/// Assertions over the signature with roughly the given fill rate.
pub fn abox(rng: &mut impl Rng, sigma: &Signature, individuals: usize, rate: f64) -> Abox {
    let mut a = Abox::new();
    for c in &sigma.concept_names {
        for i in 0..individuals {
            if rng.gen_bool(rate) {
                a.add_concept(c.clone(), individual(i));
            }
        }
    }
    for r in &sigma.role_names {
        for i in 0..individuals {
            for j in 0..individuals {
                if rng.gen_bool(rate / 2.0) {
                    a.add_role(r.clone(), individual(i), individual(j));
                }
            }
        }
    }
    a
}

/// Every tuple of the given arity over the individuals.
pub fn tuples(inds: &[Symbol], arity: usize) -> Vec<Vec<Symbol>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|t: Vec<Symbol>| {
                inds.iter().map(move |i| {
                    let mut t = t.clone();
                    t.push(i.clone());
                    t
                })
            })
            .collect();
    }
    out
}
