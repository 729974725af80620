//! Structural operations on CQs: classification, fork rewritings, cores,
//! tree subqueries and the ≺ relation, containment, minimization and
//! splittings.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::model::canonical;
use crate::model::{concept_below, tree_cq_to_concept, Abox, Atom, Concept, ConjQuery, Omq, Symbol, Var};
use crate::reasoner::{Reasoner, Saturation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryClass {
    AQ,
    TreeCQ,
    TqCQ,
    RCQ,
    Unsupported,
}

impl QueryClass {
    pub fn name(self) -> &'static str {
        match self {
            QueryClass::AQ => "AQ",
            QueryClass::TreeCQ => "TreeCQ",
            QueryClass::TqCQ => "TqCQ",
            QueryClass::RCQ => "RCQ",
            QueryClass::Unsupported => "Unsupported",
        }
    }
}

impl std::fmt::Display for QueryClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Every quantified variable is connected to an answer variable.
pub fn is_rooted(q: &ConjQuery) -> bool {
    if q.arity() == 0 {
        return false;
    }
    let mut seen: BTreeSet<Var> = q.answer_vars().iter().cloned().collect();
    let mut queue: VecDeque<Var> = seen.iter().cloned().collect();
    while let Some(v) = queue.pop_front() {
        for (_, x, y) in q.role_atoms() {
            let next = if *x == v {
                y
            } else if *y == v {
                x
            } else {
                continue;
            };
            if seen.insert(next.clone()) {
                queue.push_back(next.clone());
            }
        }
    }
    seen.len() == q.vars().len()
}

pub fn classify(q: &ConjQuery) -> QueryClass {
    if !is_rooted(q) {
        return QueryClass::Unsupported;
    }
    if q.arity() == 1 && q.len() == 1 {
        if let Some(Atom::Concept(_, v)) = q.atoms().iter().next() {
            if *v == q.answer_vars()[0] {
                return QueryClass::AQ;
            }
        }
    }
    if q.arity() == 1 && tree_cq_to_concept(q).is_ok() {
        return QueryClass::TreeCQ;
    }
    if is_tree_quantified(q) {
        return QueryClass::TqCQ;
    }
    QueryClass::RCQ
}

/// After removing the role atoms between answer variables, every component
/// is a tree rooted at its unique answer variable.
pub(crate) fn is_tree_quantified(q: &ConjQuery) -> bool {
    let roots: BTreeSet<Var> = q.answer_vars().iter().cloned().collect();
    is_forest_below(q, &roots)
}

/// After removing the role atoms inside `roots`, every variable outside
/// `roots` has a unique parent and reaches a variable of `roots` upwards,
/// and no atom enters `roots`.
pub(crate) fn is_forest_below(q: &ConjQuery, roots: &BTreeSet<Var>) -> bool {
    let inner: Vec<(&Symbol, &Var, &Var)> =
        q.role_atoms().filter(|(_, x, y)| !(roots.contains(*x) && roots.contains(*y))).collect();
    let mut indeg: BTreeMap<&Var, usize> = BTreeMap::new();
    for (_, _, y) in &inner {
        *indeg.entry(*y).or_default() += 1;
    }
    for v in q.vars().iter() {
        let d = indeg.get(v).copied().unwrap_or(0);
        if roots.contains(v) && d != 0 || !roots.contains(v) && d != 1 {
            return false;
        }
    }
    let parent: BTreeMap<&Var, &Var> = inner.iter().map(|(_, x, y)| (*y, *x)).collect();
    q.vars().iter().filter(|v| !roots.contains(*v)).all(|v| {
        let mut cur = v;
        for _ in 0..=parent.len() {
            match parent.get(cur) {
                Some(p) if roots.contains(*p) => return true,
                Some(p) => cur = p,
                None => return false,
            }
        }
        false
    })
}

/// Fork elimination of `r(x0,y), r(x1,y)` merging `x1` into `x0`, with the
/// roles of `x0`, `x1` swapped when only `x1` is an answer variable.
fn eliminate_fork(q: &ConjQuery, x0: &Var, x1: &Var) -> ConjQuery {
    let (keep, gone) = if !q.is_answer_var(x0) && q.is_answer_var(x1) { (x1, x0) } else { (x0, x1) };
    let sub = |v: &Var| if v == gone { keep.clone() } else { v.clone() };
    // equality atoms keep their variables; normalization recomputes the classes
    let mut atoms: Vec<Atom> = q
        .atoms()
        .iter()
        .map(|a| match a {
            Atom::Concept(n, v) => Atom::Concept(n.clone(), sub(v)),
            Atom::Role(r, x, y) => Atom::Role(r.clone(), sub(x), sub(y)),
            Atom::Eq(x, y) => Atom::Eq(x.clone(), y.clone()),
        })
        .collect();
    if q.is_answer_var(gone) {
        atoms.push(Atom::Eq(keep.clone(), gone.clone()));
    }
    ConjQuery::new(q.answer_vars().to_vec(), atoms).expect("fork elimination preserves well-formedness")
}

fn forks(q: &ConjQuery) -> Vec<(Var, Var)> {
    let mut out = BTreeSet::new();
    let roles: Vec<_> = q.role_atoms().collect();
    for (i, (r0, x0, y0)) in roles.iter().enumerate() {
        for (r1, x1, y1) in &roles[i + 1..] {
            if r0 == r1 && y0 == y1 && x0 != x1 && !q.is_answer_var(y0) {
                out.insert(((*x0).clone(), (*x1).clone()));
            }
        }
    }
    out.into_iter().collect()
}

/// All fork rewritings of `q0` (including `q0`), one per isomorphism class,
/// in discovery order.
pub fn fork_rewritings(q0: &ConjQuery) -> Vec<ConjQuery> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(q0.code());
    queue.push_back(q0.clone());
    while let Some(q) = queue.pop_front() {
        for (x0, x1) in forks(&q) {
            let p = eliminate_fork(&q, &x0, &x1);
            if seen.insert(p.code()) {
                queue.push_back(p);
            }
        }
        out.push(q);
    }
    out
}

/// The core of a CQ together with the tree hanging off every core variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Core {
    pub vars: BTreeSet<Var>,
    /// `(x, C)` where `C` collects the concept atoms at `x` and all
    /// non-core subtrees below it; one entry per core variable.
    pub trees: Vec<(Var, Concept)>,
}

pub fn core_of(q: &ConjQuery) -> Core {
    let vars = canonical::core_vars(q);
    let trees = vars.iter().map(|v| (v.clone(), canonical::tree_at(q, &vars, v))).collect();
    Core { vars, trees }
}

/// Equality classes of answer variables, in head order of their representatives.
pub fn eq_classes(q: &ConjQuery) -> Vec<BTreeSet<Var>> {
    let mut classes: BTreeMap<Var, BTreeSet<Var>> = BTreeMap::new();
    let merged = q.merged_vars();
    for v in q.answer_vars() {
        if !merged.contains(v) {
            classes.insert(v.clone(), [v.clone()].into());
        }
    }
    for (x, y) in q.eq_atoms() {
        classes.get_mut(x).expect("representative is an answer variable").insert(y.clone());
    }
    q.answer_vars().iter().filter_map(|v| classes.remove(v)).collect()
}

/// The representative (kept variable) of an answer variable.
pub fn representative(q: &ConjQuery, v: &Var) -> Var {
    q.eq_atoms().find(|(_, y)| *y == v).map(|(x, _)| x.clone()).unwrap_or_else(|| v.clone())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeSubquery {
    pub role: Symbol,
    pub parent: Var,
    pub root: Var,
    pub vars: BTreeSet<Var>,
    pub concept: Concept,
}

impl TreeSubquery {
    /// `∃r.q'` for link `r(x,y)` and subquery `q'`.
    pub fn as_exists(&self) -> Concept {
        Concept::exists(self.role.clone(), self.concept.clone())
    }
}

fn reachable_from(q: &ConjQuery, y: &Var) -> BTreeSet<Var> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![y.clone()];
    while let Some(v) = stack.pop() {
        if seen.insert(v.clone()) {
            stack.extend(q.out_edges(&v).map(|(_, w)| w.clone()));
        }
    }
    seen
}

/// The tree subquery with link `r(x,y)`, if there is one.
pub fn tree_subquery_at(q: &ConjQuery, r: &Symbol, x: &Var, y: &Var) -> Option<TreeSubquery> {
    if q.is_answer_var(y) {
        return None;
    }
    let vars = reachable_from(q, y);
    if vars.iter().any(|v| q.is_answer_var(v)) || vars.contains(x) {
        return None;
    }
    for (s, u, z) in q.role_atoms() {
        if vars.contains(z) {
            let outside = !vars.contains(u);
            if outside && !(s == r && u == x && z == y) {
                return None;
            }
            if !outside && z == y {
                return None;
            }
        }
    }
    // inside: every non-root variable has exactly one parent
    let mut indeg: BTreeMap<&Var, usize> = BTreeMap::new();
    for (_, u, z) in q.role_atoms() {
        if vars.contains(u) {
            *indeg.entry(z).or_default() += 1;
        }
    }
    if vars.iter().any(|v| v != y && indeg.get(v).copied().unwrap_or(0) != 1) {
        return None;
    }
    Some(TreeSubquery {
        role: r.clone(),
        parent: x.clone(),
        root: y.clone(),
        concept: concept_below(q, y),
        vars,
    })
}

pub fn tree_subqueries(q: &ConjQuery) -> Vec<TreeSubquery> {
    q.role_atoms().filter_map(|(r, x, y)| tree_subquery_at(q, r, x, y)).collect()
}

/// Removes the link and all atoms of a tree subquery.
pub fn remove_subquery(q: &ConjQuery, t: &TreeSubquery) -> ConjQuery {
    let link = Atom::Role(t.role.clone(), t.parent.clone(), t.root.clone());
    let atoms = q
        .atoms()
        .iter()
        .filter(|a| **a != link && !a.vars().any(|v| t.vars.contains(v)))
        .cloned()
        .collect();
    q.with_atoms(atoms)
}

/// All `q' ≺ q`, sorted by canonical code and deduplicated.
pub fn prec_children(q: &ConjQuery) -> Vec<ConjQuery> {
    let mut keyed: Vec<(String, ConjQuery)> = tree_subqueries(q)
        .iter()
        .map(|t| {
            let c = remove_subquery(q, t);
            (c.code(), c)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    keyed.into_iter().map(|(_, c)| c).collect()
}

/// `q` viewed as an ABox with equal answer variables collapsed, and the
/// tuple its answer variables denote.
pub fn collapsed_abox(q: &ConjQuery) -> (Abox, Vec<Symbol>) {
    let ind = |v: &Var| Symbol::from(format!("a_{}", representative(q, v)));
    let mut abox = Abox::new();
    for v in q.vars() {
        abox.add_individual(ind(&v));
    }
    for a in q.atoms() {
        match a {
            Atom::Concept(n, v) => {
                abox.add_concept(n.clone(), ind(v));
            }
            Atom::Role(r, x, y) => {
                abox.add_role(r.clone(), ind(x), ind(y));
            }
            Atom::Eq(_, _) => {}
        }
    }
    let tuple = q.answer_vars().iter().map(ind).collect();
    (abox, tuple)
}

/// `q1 ⊆_T q0` for the TBox of `reasoner`.
pub fn contained_in_with(reasoner: &Reasoner, q1: &ConjQuery, q0: &ConjQuery) -> Result<bool> {
    if q1.arity() != q0.arity() {
        return Err(Error::Arity { expected: q0.arity(), got: q1.arity() });
    }
    let (abox, tuple) = collapsed_abox(q1);
    reasoner.certain_answer(&abox, q0, &tuple)
}

pub fn contained_in(t: &crate::model::TBox, q1: &ConjQuery, q0: &ConjQuery) -> Result<bool> {
    contained_in_with(&Reasoner::new(t), q1, q0)
}

/// Greedy descent along ≺ to a ≺-minimal query still contained in `q0`,
/// always taking the first qualifying child in canonical order.
pub fn minimize_by(q: &ConjQuery, holds: &mut (impl FnMut(&ConjQuery) -> bool + ?Sized)) -> ConjQuery {
    let mut cur = q.clone();
    'descend: loop {
        for child in prec_children(&cur) {
            if holds(&child) {
                cur = child;
                continue 'descend;
            }
        }
        return cur;
    }
}

pub fn minimize_with(reasoner: &Reasoner, q: &ConjQuery, q0: &ConjQuery) -> Result<ConjQuery> {
    if !contained_in_with(reasoner, q, q0)? {
        return Err(Error::Precondition(format!("{q} is not contained in {q0}")));
    }
    Ok(minimize_by(q, &mut |c| contained_in_with(reasoner, c, q0).unwrap_or(false)))
}

pub fn minimize(q: &ConjQuery, t: &crate::model::TBox, q0: &ConjQuery) -> Result<ConjQuery> {
    minimize_with(&Reasoner::new(t), q, q0)
}

/// A tree part `S_i` of a splitting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SplitPart {
    pub vars: BTreeSet<Var>,
    pub root: Var,
    pub role: Symbol,
    /// `μ(i)`, the variable of `R` the part hangs off.
    pub mu: Var,
    /// `C_{q|S_i}`
    pub concept: Concept,
}

impl SplitPart {
    pub fn as_exists(&self) -> Concept {
        Concept::exists(self.role.clone(), self.concept.clone())
    }
}

/// The ABox-independent part of a splitting: `R` and the tree parts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Skeleton {
    pub r: BTreeSet<Var>,
    pub parts: Vec<SplitPart>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Splitting {
    pub skeleton: Skeleton,
    pub nu: BTreeMap<Var, Symbol>,
}

/// All skeletons of `q`: choices of `R ⊇ avar(q)` such that the remaining
/// variables split into directed trees, each entered by exactly one role
/// atom from `R` at its root and with no atoms leaving it.
pub fn skeletons(q: &ConjQuery) -> Vec<Skeleton> {
    let quantified: Vec<Var> = q.quantified_vars().into_iter().collect();
    assert!(quantified.len() < 32, "query too large for splitting enumeration");
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << quantified.len()) {
        let mut r: BTreeSet<Var> = q.answer_vars().iter().cloned().collect();
        for (i, v) in quantified.iter().enumerate() {
            if mask & (1 << i) != 0 {
                r.insert(v.clone());
            }
        }
        if let Some(parts) = split_rest(q, &r) {
            out.push(Skeleton { r, parts });
        }
    }
    out
}

fn split_rest(q: &ConjQuery, r: &BTreeSet<Var>) -> Option<Vec<SplitPart>> {
    let rest: BTreeSet<Var> = q.vars().into_iter().filter(|v| !r.contains(v)).collect();
    // no atoms from a tree part back into R
    if q.role_atoms().any(|(_, x, y)| rest.contains(x) && r.contains(y)) {
        return None;
    }
    let mut parts = Vec::new();
    let mut done = BTreeSet::new();
    for start in &rest {
        if done.contains(start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![start.clone()];
        while let Some(v) = stack.pop() {
            if !comp.insert(v.clone()) {
                continue;
            }
            for (_, x, y) in q.role_atoms() {
                if *x == v && rest.contains(y) {
                    stack.push(y.clone());
                }
                if *y == v && rest.contains(x) {
                    stack.push(x.clone());
                }
            }
        }
        done.extend(comp.iter().cloned());
        let mut indeg: BTreeMap<&Var, usize> = BTreeMap::new();
        let mut entry = Vec::new();
        for (s, x, y) in q.role_atoms() {
            if comp.contains(y) {
                if comp.contains(x) {
                    *indeg.entry(y).or_default() += 1;
                } else {
                    entry.push((s, x, y));
                }
            }
        }
        if entry.len() != 1 {
            return None;
        }
        let (role, mu, root) = entry[0];
        if indeg.get(root).copied().unwrap_or(0) != 0 {
            return None;
        }
        if comp.iter().any(|v| v != root && indeg.get(v).copied().unwrap_or(0) != 1) {
            return None;
        }
        // unique parents and a single source in a connected part make it a tree
        parts.push(SplitPart {
            vars: comp,
            root: root.clone(),
            role: role.clone(),
            mu: mu.clone(),
            concept: concept_below(q, root),
        });
    }
    Some(parts)
}

/// Assignments `ν : R → Ind(a)` satisfying conditions 1 and 2, restricted
/// per variable to `allowed` where given.
pub fn assignments(
    q: &ConjQuery,
    skeleton: &Skeleton,
    a: &Abox,
    allowed: &BTreeMap<Var, BTreeSet<Symbol>>,
) -> Vec<BTreeMap<Var, Symbol>> {
    let order: Vec<Var> = skeleton.r.iter().cloned().collect();
    let inds: Vec<Symbol> = a.individuals().iter().cloned().collect();
    let mut out = Vec::new();
    let mut nu = BTreeMap::new();
    assign(q, &skeleton.r, &order, 0, a, &inds, allowed, &mut nu, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn assign(
    q: &ConjQuery,
    r: &BTreeSet<Var>,
    order: &[Var],
    k: usize,
    a: &Abox,
    inds: &[Symbol],
    allowed: &BTreeMap<Var, BTreeSet<Symbol>>,
    nu: &mut BTreeMap<Var, Symbol>,
    out: &mut Vec<BTreeMap<Var, Symbol>>,
) {
    if k == order.len() {
        out.push(nu.clone());
        return;
    }
    let v = &order[k];
    for ind in inds {
        if allowed.get(v).map(|s| !s.contains(ind)).unwrap_or(false) {
            continue;
        }
        nu.insert(v.clone(), ind.clone());
        let ok = q.atoms().iter().all(|atom| match atom {
            Atom::Role(s, x, y) if (x == v || y == v) && r.contains(x) && r.contains(y) => {
                match (nu.get(x), nu.get(y)) {
                    (Some(ix), Some(iy)) => a.has_role(s, ix, iy),
                    _ => true,
                }
            }
            Atom::Eq(x, y) if x == v || y == v => match (nu.get(x), nu.get(y)) {
                (Some(ix), Some(iy)) => ix == iy,
                _ => true,
            },
            _ => true,
        });
        if ok {
            assign(q, r, order, k + 1, a, inds, allowed, nu, out);
        }
        nu.remove(v);
    }
}

/// All splittings of `q` with respect to `a`.
pub fn splittings(q: &ConjQuery, a: &Abox) -> Vec<Splitting> {
    let none = BTreeMap::new();
    let mut out = Vec::new();
    for sk in skeletons(q) {
        for nu in assignments(q, &sk, a, &none) {
            out.push(Splitting { skeleton: sk.clone(), nu });
        }
    }
    out
}

/// Decides `a ⊨ Q(ā)` through fork rewritings and splittings.
pub fn lemma1_entails(omq: &Omq, a: &Abox, tuple: &[Symbol]) -> Result<bool> {
    let reasoner = Reasoner::new(&omq.tbox);
    let forks = fork_rewritings(&omq.query);
    lemma1_entails_with(&reasoner, &omq.query, &forks, a, tuple)
}

pub fn lemma1_entails_with(
    reasoner: &Reasoner,
    q0: &ConjQuery,
    forks: &[ConjQuery],
    a: &Abox,
    tuple: &[Symbol],
) -> Result<bool> {
    if tuple.len() != q0.arity() {
        return Err(Error::Arity { expected: q0.arity(), got: tuple.len() });
    }
    let mut a = a.clone();
    tuple.iter().for_each(|t| a.add_individual(t.clone()));
    let sat = reasoner.saturate(&a);
    let allowed: BTreeMap<Var, BTreeSet<Symbol>> = q0
        .answer_vars()
        .iter()
        .zip(tuple)
        .map(|(v, t)| (v.clone(), [t.clone()].into()))
        .collect();
    for q in forks {
        for sk in skeletons(q) {
            let parts_ok = |nu: &BTreeMap<Var, Symbol>, sat: &Saturation<'_>| {
                sk.parts.iter().all(|p| sat.satisfies(&nu[&p.mu], &p.as_exists()))
            };
            for nu in assignments(q, &sk, &a, &allowed) {
                let atoms_ok = q
                    .concept_atoms()
                    .filter(|(_, x)| sk.r.contains(*x))
                    .all(|(n, x)| sat.has_label(&nu[x], n));
                if atoms_ok && parts_ok(&nu, &sat) {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}
