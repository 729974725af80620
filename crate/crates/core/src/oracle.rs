//! Brute-force checks of rewritings against certain answers on all small
//! ABoxes over a finite signature.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{Abox, Atom, ConjQuery, Omq, Signature, Symbol, TBox, UnionQuery, Var};
use crate::reasoner::Reasoner;

pub const DEFAULT_MAX_INDIVIDUALS: usize = 3;

/// Transversal families beyond this size fall back to plain enumeration.
const MAX_TRANSVERSALS: usize = 200_000;
/// Largest fact universe plain enumeration is attempted on.
const MAX_PLAIN_FACTS: usize = 24;

fn individual(i: usize) -> Symbol {
    Symbol::from(format!("a{}", i + 1))
}

/// All possible assertions over a finite signature and `n` individuals.
#[derive(Debug, Clone)]
struct Facts {
    n: usize,
    concepts: Vec<Symbol>,
    roles: Vec<Symbol>,
}

impl Facts {
    fn new(sigma: &Signature, n: usize) -> Result<Self> {
        if sigma.full {
            return Err(Error::Precondition("enumeration needs a finite signature".into()));
        }
        let f = Facts {
            n,
            concepts: sigma.concept_names.iter().cloned().collect(),
            roles: sigma.role_names.iter().cloned().collect(),
        };
        if f.len() > 128 {
            return Err(Error::Precondition(format!("{} possible assertions exceed the oracle bound", f.len())));
        }
        Ok(f)
    }

    fn len(&self) -> usize {
        self.concepts.len() * self.n + self.roles.len() * self.n * self.n
    }

    fn concept_bit(&self, c: usize, a: usize) -> usize {
        c * self.n + a
    }

    fn role_bit(&self, r: usize, a: usize, b: usize) -> usize {
        self.concepts.len() * self.n + (r * self.n + a) * self.n + b
    }

    fn abox(&self, mask: u128) -> Abox {
        let mut abox = Abox::new();
        for i in 0..self.n {
            abox.add_individual(individual(i));
        }
        for (c, name) in self.concepts.iter().enumerate() {
            for a in 0..self.n {
                if mask >> self.concept_bit(c, a) & 1 == 1 {
                    abox.add_concept(name.clone(), individual(a));
                }
            }
        }
        for (r, name) in self.roles.iter().enumerate() {
            for a in 0..self.n {
                for b in 0..self.n {
                    if mask >> self.role_bit(r, a, b) & 1 == 1 {
                        abox.add_role(name.clone(), individual(a), individual(b));
                    }
                }
            }
        }
        abox
    }

    fn permuted(&self, mask: u128, p: &[usize]) -> u128 {
        let mut out = 0u128;
        for c in 0..self.concepts.len() {
            for (a, &pa) in p.iter().enumerate().take(self.n) {
                if mask >> self.concept_bit(c, a) & 1 == 1 {
                    out |= 1 << self.concept_bit(c, pa);
                }
            }
        }
        for r in 0..self.roles.len() {
            for a in 0..self.n {
                for b in 0..self.n {
                    if mask >> self.role_bit(r, a, b) & 1 == 1 {
                        out |= 1 << self.role_bit(r, p[a], p[b]);
                    }
                }
            }
        }
        out
    }

    /// Images of a CQ under maps sending answer variables to `tuple`; `None`
    /// when a symbol is outside the signature.
    fn images(&self, q: &ConjQuery, tuple: &[usize]) -> Option<Vec<u128>> {
        let cidx: BTreeMap<&Symbol, usize> = self.concepts.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let ridx: BTreeMap<&Symbol, usize> = self.roles.iter().enumerate().map(|(i, r)| (r, i)).collect();
        let mut fixed: BTreeMap<Var, usize> = BTreeMap::new();
        for (v, t) in q.answer_vars().iter().zip(tuple) {
            fixed.insert(v.clone(), *t);
        }
        for (x, y) in q.eq_atoms() {
            if fixed[x] != fixed[y] {
                return Some(Vec::new());
            }
        }
        let free: Vec<Var> = q.quantified_vars().into_iter().collect();
        let mut out = Vec::new();
        let mut assign = fixed.clone();
        let total = self.n.checked_pow(free.len() as u32).unwrap_or(usize::MAX);
        for code in 0..total {
            let mut k = code;
            for v in &free {
                assign.insert(v.clone(), k % self.n);
                k /= self.n;
            }
            let mut mask = 0u128;
            for a in q.atoms() {
                match a {
                    Atom::Concept(c, v) => mask |= 1 << self.concept_bit(*cidx.get(c)?, assign[v]),
                    Atom::Role(r, x, y) => mask |= 1 << self.role_bit(*ridx.get(r)?, assign[x], assign[y]),
                    Atom::Eq(_, _) => {}
                }
            }
            out.push(mask);
        }
        Some(out)
    }
}

/// Every ABox over the signature with individuals `a1..an`, each renaming
/// class once.
pub struct AboxEnumeration {
    facts: Facts,
    next: u128,
    end: u128,
    perms: Vec<Vec<usize>>,
}

impl AboxEnumeration {
    pub fn new(sigma: &Signature, n: usize) -> Result<Self> {
        let facts = Facts::new(sigma, n)?;
        if facts.len() > MAX_PLAIN_FACTS + 8 {
            return Err(Error::Precondition(format!("{} possible assertions are too many to enumerate", facts.len())));
        }
        let end = 1u128 << facts.len();
        Ok(AboxEnumeration { perms: permutations(n), facts, next: 0, end })
    }

    /// Number of ABoxes before renaming classes are merged.
    pub fn raw_count(&self) -> u128 {
        self.end
    }
}

impl Iterator for AboxEnumeration {
    type Item = Abox;

    fn next(&mut self) -> Option<Abox> {
        while self.next < self.end {
            let m = self.next;
            self.next += 1;
            if self.perms.iter().all(|p| self.facts.permuted(m, p) >= m) {
                return Some(self.facts.abox(m));
            }
        }
        None
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for k in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=k).map(move |i| {
                    let mut q = p.clone();
                    q.insert(i, k);
                    q
                })
            })
            .collect();
    }
    out
}

/// Tuples over `n` individuals up to renaming: first occurrences are in order.
fn canonical_tuples(arity: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(arity: usize, n: usize, used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == arity {
            out.push(cur.clone());
            return;
        }
        for i in 0..(used + 1).min(n) {
            cur.push(i);
            go(arity, n, used.max(i + 1), cur, out);
            cur.pop();
        }
    }
    go(arity, n, 0, &mut cur, &mut out);
    out
}

fn all_tuples(arity: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..arity {
        out = out.into_iter().flat_map(|t| (0..n).map(move |i| [t.clone(), vec![i]].concat())).collect();
    }
    out
}

/// Plain evaluation of a UCQ over an ABox: no TBox, equality as identity.
pub fn eval_ucq(a: &Abox, u: &UnionQuery, tuple: &[Symbol]) -> Result<bool> {
    if tuple.len() != u.arity() {
        return Err(Error::Arity { expected: u.arity(), got: tuple.len() });
    }
    let empty = Reasoner::new(&TBox::new());
    let sat = empty.saturate(a);
    Ok(u.disjuncts().iter().any(|d| sat.entails(d, tuple)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok {
        /// The finite signature the ABoxes were drawn from.
        sigma: Signature,
        max_individuals: usize,
    },
    Counterexample {
        abox: Abox,
        tuple: Vec<Symbol>,
        /// The certain answer; the rewriting says the opposite.
        expected: bool,
    },
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok { .. })
    }
}

/// How the ABox space is covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Minimal witnesses for one direction and maximal non-witnesses for the
    /// other; decides the same as `Exhaustive`.
    #[default]
    Extremal,
    /// Every ABox and every tuple.
    Exhaustive,
}

/// Compares the rewriting against certain answers on every Σ-ABox with at
/// most `max_individuals` individuals.
pub fn check_rewriting(omq: &Omq, u: &UnionQuery, max_individuals: usize) -> Result<Verdict> {
    check_rewriting_with(omq, u, max_individuals, Method::Extremal)
}

pub fn check_rewriting_with(omq: &Omq, u: &UnionQuery, max_individuals: usize, method: Method) -> Result<Verdict> {
    if u.arity() != omq.query.arity() {
        return Err(Error::Arity { expected: omq.query.arity(), got: u.arity() });
    }
    let reasoner = Reasoner::new(&omq.tbox);
    let sigma = omq.finite_sigma();
    let q0 = &omq.query;
    let mut target = |a: &Abox, t: &[Symbol]| reasoner.certain_answer(a, q0, t).expect("arity checked");
    compare(&sigma, u, max_individuals, method, &mut target).map(|v| match v {
        Verdict::Ok { max_individuals, .. } => Verdict::Ok { sigma, max_individuals },
        v => v,
    })
}

/// Equivalence of two UCQs: by plain containment of disjuncts, or, given a
/// signature, by agreement on all ABoxes with at most `n` individuals.
pub fn ucq_equivalent(u1: &UnionQuery, u2: &UnionQuery, context: Option<(&Signature, usize)>) -> Result<bool> {
    if u1.arity() != u2.arity() {
        return Err(Error::Arity { expected: u1.arity(), got: u2.arity() });
    }
    match context {
        None => Ok(ucq_contained(u1, u2) && ucq_contained(u2, u1)),
        Some((sigma, n)) => {
            let mut target = |a: &Abox, t: &[Symbol]| eval_ucq(a, u1, t).expect("arity checked");
            Ok(compare(sigma, u2, n, Method::Extremal, &mut target)?.is_ok())
        }
    }
}

/// Every disjunct of `u1` is contained in some disjunct of `u2`.
pub fn ucq_contained(u1: &UnionQuery, u2: &UnionQuery) -> bool {
    let empty = Reasoner::new(&TBox::new());
    u1.disjuncts().iter().all(|p| {
        let (abox, tuple) = crate::structure::collapsed_abox(p);
        let sat = empty.saturate(&abox);
        u2.disjuncts().iter().any(|d| sat.entails(d, &tuple))
    })
}

fn compare(
    sigma: &Signature,
    u: &UnionQuery,
    max_individuals: usize,
    method: Method,
    target: &mut impl FnMut(&Abox, &[Symbol]) -> bool,
) -> Result<Verdict> {
    let ok = Verdict::Ok { sigma: sigma.clone(), max_individuals };
    for n in 1..=max_individuals {
        let facts = Facts::new(sigma, n)?;
        let found = match method {
            Method::Exhaustive => exhaustive(&facts, u, target)?,
            Method::Extremal => match extremal(&facts, u, target)? {
                Some(found) => found,
                None => exhaustive(&facts, u, target)?,
            },
        };
        if let Some(v) = found {
            return Ok(v);
        }
    }
    Ok(ok)
}

fn exhaustive(
    facts: &Facts,
    u: &UnionQuery,
    target: &mut impl FnMut(&Abox, &[Symbol]) -> bool,
) -> Result<Option<Verdict>> {
    if facts.len() > MAX_PLAIN_FACTS {
        return Err(Error::Precondition(format!("{} possible assertions are too many to enumerate", facts.len())));
    }
    let empty = Reasoner::new(&TBox::new());
    let perms = permutations(facts.n);
    let tuples = all_tuples(u.arity(), facts.n);
    for m in 0..(1u128 << facts.len()) {
        if perms.iter().any(|p| facts.permuted(m, p) < m) {
            continue;
        }
        let abox = facts.abox(m);
        let sat = empty.saturate(&abox);
        for t in &tuples {
            let tuple: Vec<Symbol> = t.iter().map(|&i| individual(i)).collect();
            let got = u.disjuncts().iter().any(|d| sat.entails(d, &tuple));
            let expected = target(&abox, &tuple);
            if got != expected {
                return Ok(Some(Verdict::Counterexample { abox, tuple, expected }));
            }
        }
    }
    Ok(None)
}

/// `None` when the transversal family grows past the bound.
fn extremal(
    facts: &Facts,
    u: &UnionQuery,
    target: &mut impl FnMut(&Abox, &[Symbol]) -> bool,
) -> Result<Option<Option<Verdict>>> {
    let universe: u128 = if facts.len() == 128 { u128::MAX } else { (1u128 << facts.len()) - 1 };
    for t in canonical_tuples(u.arity(), facts.n) {
        let tuple: Vec<Symbol> = t.iter().map(|&i| individual(i)).collect();
        let mut witnesses = Vec::new();
        for d in u.disjuncts() {
            if let Some(im) = facts.images(d, &t) {
                witnesses.extend(im);
            }
        }
        // soundness: every minimal ABox the rewriting accepts
        for &w in &minimal_sets(witnesses.clone()) {
            let abox = facts.abox(w);
            if !target(&abox, &tuple) {
                return Ok(Some(Some(Verdict::Counterexample { abox, tuple, expected: false })));
            }
        }
        // completeness: every maximal ABox the rewriting rejects
        let Some(hitting) = minimal_transversals(&minimal_sets(witnesses)) else {
            return Ok(None);
        };
        for h in hitting {
            let abox = facts.abox(universe & !h);
            if target(&abox, &tuple) {
                return Ok(Some(Some(Verdict::Counterexample { abox, tuple, expected: true })));
            }
        }
    }
    Ok(Some(None))
}

fn minimal_sets(mut sets: Vec<u128>) -> Vec<u128> {
    sets.sort_by_key(|s| (s.count_ones(), *s));
    sets.dedup();
    let mut out: Vec<u128> = Vec::new();
    for s in sets {
        if !out.iter().any(|m| m & s == *m) {
            out.push(s);
        }
    }
    out
}

/// Minimal hitting sets (Berge's algorithm).
fn minimal_transversals(sets: &[u128]) -> Option<Vec<u128>> {
    let mut current: Vec<u128> = vec![0];
    for &s in sets {
        if s == 0 {
            return Some(Vec::new());
        }
        let mut next: BTreeSet<u128> = BTreeSet::new();
        for &t in &current {
            if t & s != 0 {
                next.insert(t);
            } else {
                let mut bits = s;
                while bits != 0 {
                    let low = bits & bits.wrapping_neg();
                    next.insert(t | low);
                    bits &= bits - 1;
                }
            }
        }
        current = minimal_sets(next.into_iter().collect());
        if current.len() > MAX_TRANSVERSALS {
            return None;
        }
    }
    Some(current)
}
