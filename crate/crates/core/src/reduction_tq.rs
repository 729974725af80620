//! Reduction of OMQs with tree-quantified CQs to OMQs with an atomic query
//! `N(x0)` over superscripted copies of the vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{add_concept_atoms, Atom, Concept, ConceptInclusion, ConjQuery, Omq, Signature, Symbol, TBox, Var};
use crate::names;
use crate::structure::{classify, QueryClass};

/// `C^x_L`: top-level names become `A^x`, top-level `∃r.E` become `A^x_{∃r.E}`.
pub(crate) fn left_copy(c: &Concept, x: &Var) -> Concept {
    let names = c.top_names().map(|a| Concept::Name(names::at(a, x)));
    let ex = c.top_exists().map(|(r, e)| Concept::Name(names::exists_at(r, e, x)));
    Concept::and(names.chain(ex))
}

/// `C^x_R`: top-level names become `A^x`, top-level `∃r.E` become `∃r^x.E`.
pub(crate) fn right_copy(c: &Concept, x: &Var) -> Concept {
    let names = c.top_names().map(|a| Concept::Name(names::at(a, x)));
    let ex = c.top_exists().map(|(r, e)| Concept::exists(names::at(r, x), e.clone()));
    Concept::and(names.chain(ex))
}

/// The reduction of a tqCQ OMQ, with the tables needed to translate
/// rewritings back.
#[derive(Debug, Clone)]
pub struct TqReduction {
    /// The input OMQ.
    pub original: Omq,
    /// The input with quantified trees replaced by abbreviation names.
    pub source: Omq,
    /// `(T′, Σ′, N(x0))`
    pub target: Omq,
    /// `A_C ↦ C` for every eliminated tree.
    pub abbreviations: BTreeMap<Symbol, Concept>,
}

/// Replaces every subtree `∃r.C` hanging off an answer variable `x` by a fresh
/// atom `A_{∃r.C}(x)` and adds `∃r.C ≡ A_{∃r.C}` to the TBox.
pub fn eliminate_quantified_trees(omq: &Omq) -> Result<(Omq, BTreeMap<Symbol, Concept>)> {
    let q = &omq.query;
    match classify(q) {
        QueryClass::AQ | QueryClass::TreeCQ | QueryClass::TqCQ => {}
        c => return Err(Error::Unsupported(c)),
    }
    let mut tbox = omq.tbox.clone();
    let mut abbreviations = BTreeMap::new();
    let mut atoms = BTreeSet::new();
    for a in q.atoms() {
        match a {
            Atom::Role(r, x, y) if !q.is_answer_var(y) => {
                let c = Concept::exists(r.clone(), crate::model::concept_below(q, y));
                let name = names::abbrev(&c);
                tbox.insert(ConceptInclusion::new(c.clone(), Concept::Name(name.clone())));
                // the converse makes A_C a definition, so minimization sees
                // everything C entails
                tbox.insert(ConceptInclusion::new(Concept::Name(name.clone()), c.clone()));
                abbreviations.insert(name.clone(), c);
                atoms.insert(Atom::Concept(name, x.clone()));
            }
            a if a.vars().all(|v| q.is_answer_var(v)) => {
                atoms.insert(a.clone());
            }
            _ => {}
        }
    }
    let query = q.with_atoms(atoms);
    Ok((Omq { tbox, sigma: omq.sigma.clone(), query }, abbreviations))
}

/// Builds `(T′, Σ′, N(x0))` for an OMQ whose query has answer variables only.
pub fn build_aq_reduction(omq: &Omq) -> Result<TqReduction> {
    let (source, abbreviations) = eliminate_quantified_trees(omq)?;
    let target = build_target(&source)?;
    Ok(TqReduction { original: omq.clone(), source, target, abbreviations })
}

fn build_target(source: &Omq) -> Result<Omq> {
    let q0 = &source.query;
    if !q0.quantified_vars().is_empty() {
        return Err(Error::Precondition("query must contain answer variables only".into()));
    }
    let t = &source.tbox;
    let avar = q0.answer_vars();
    let sub_l: Vec<(Symbol, Concept)> = t
        .lhs_subconcepts()
        .into_iter()
        .filter_map(|c| match c {
            Concept::Exists(r, e) => Some((r, *e)),
            _ => None,
        })
        .collect();

    let mut tp = t.clone();
    for x in avar {
        for ci in t {
            tp.insert(ConceptInclusion::new(left_copy(&ci.lhs, x), right_copy(&ci.rhs, x)));
        }
        for (r, e) in &sub_l {
            tp.insert(ConceptInclusion::new(
                Concept::exists(names::at(r, x), e.clone()),
                Concept::Name(names::exists_at(r, e, x)),
            ));
        }
    }
    for (r, x, y) in q0.role_atoms() {
        for (s, e) in sub_l.iter().filter(|(s, _)| s == r) {
            tp.insert(ConceptInclusion::new(left_copy(e, y), Concept::Name(names::exists_at(s, e, x))));
        }
    }
    let goal_lhs = Concept::and(q0.concept_atoms().map(|(a, x)| Concept::Name(names::at(a, x))));
    tp.insert(ConceptInclusion::new(goal_lhs, Concept::Name(names::goal())));

    let sigma = superscripted_sigma(source, avar, &BTreeSet::new());
    let query = ConjQuery::new(vec![names::root_var()], [Atom::Concept(names::goal(), names::root_var())])?;
    Ok(Omq { tbox: tp, sigma, query })
}

/// `Σ` (finitized to the symbols of `T ∪ q0`) plus `A^x`, `r^x` for admitted
/// base names and the given variables, together with any `extra` names.
pub(crate) fn superscripted_sigma(source: &Omq, vars: &[Var], extra: &BTreeSet<Symbol>) -> Signature {
    let base = source.finite_sigma();
    let mut sigma = base.clone();
    for x in vars {
        for a in &base.concept_names {
            sigma.concept_names.insert(names::at(a, x));
        }
        for r in &base.role_names {
            sigma.role_names.insert(names::at(r, x));
        }
    }
    sigma.concept_names.extend(extra.iter().cloned());
    sigma
}

impl TqReduction {
    pub fn answer_vars(&self) -> &[Var] {
        self.source.query.answer_vars()
    }

    pub fn is_conformant(&self, u: &crate::model::UnionQuery) -> bool {
        u.disjuncts().iter().all(|d| conformance(d, self.answer_vars()).is_ok())
    }

    /// The corresponding UCQ for the source OMQ.
    pub fn to_source_ucq(&self, u: &crate::model::UnionQuery) -> Result<crate::model::UnionQuery> {
        let q0 = &self.source.query;
        let core_edges: Vec<Atom> = q0.role_atoms().map(|(r, x, y)| Atom::role(r.clone(), x.clone(), y.clone())).collect();
        let mut out = Vec::new();
        for d in u.disjuncts() {
            conformance(d, self.answer_vars())?;
            let mut p = translate_back(d, &core_edges, q0.answer_vars().to_vec())?;
            p = expand_abbreviations(&p, &self.abbreviations);
            out.push(p);
        }
        crate::model::UnionQuery::new(q0.answer_vars().to_vec(), out)
    }

    /// The corresponding UCQ for the target OMQ, for derivatives of the source query.
    pub fn to_target_ucq(&self, u: &crate::model::UnionQuery) -> Result<crate::model::UnionQuery> {
        let q0 = &self.source.query;
        let mut out = Vec::new();
        for d in u.disjuncts() {
            check_derivative(d, q0)?;
            out.push(translate_forward(d, &q0.answer_vars().iter().cloned().collect()));
        }
        crate::model::UnionQuery::new(vec![names::root_var()], out)
    }
}

/// Conformance of a tCQ with answer variable `x0`: superscripted symbols only
/// at `x0`, plain symbols only at quantified variables.
pub(crate) fn conformance(d: &ConjQuery, vars: &[Var]) -> Result<()> {
    let x0 = names::root_var();
    if d.answer_vars() != [x0.clone()] {
        return Err(Error::NotConformant(format!("{d}: answer variable must be {x0}")));
    }
    let sup = |n: &Symbol| names::split_at(n).map(|(_, x)| vars.contains(&x));
    for a in d.atoms() {
        let (name, v) = match a {
            Atom::Concept(n, v) => (n, v),
            Atom::Role(r, v, _) => (r, v),
            Atom::Eq(_, _) => return Err(Error::NotConformant(format!("{d}: equality atom"))),
        };
        let ok = match sup(name) {
            Some(true) => *v == x0,
            Some(false) => false,
            None => *v != x0,
        };
        if !ok {
            return Err(Error::NotConformant(format!("{d}: atom {a}")));
        }
    }
    if crate::model::tree_cq_to_concept(d).is_err() {
        return Err(Error::NotConformant(format!("{d}: not tree-shaped")));
    }
    Ok(())
}

/// `A^x(x0) ↦ A(x)`, `r^x(x0,y) ↦ r(x,y)`, plus `extra` atoms.
pub(crate) fn translate_back(d: &ConjQuery, extra: &[Atom], answer_vars: Vec<Var>) -> Result<ConjQuery> {
    // keep the quantified variables of d apart from the base query's
    let mut taken: BTreeSet<Var> = d.vars();
    taken.extend(answer_vars.iter().cloned());
    taken.extend(extra.iter().flat_map(|a| a.vars().cloned()));
    let clash: BTreeMap<Var, Var> = d
        .quantified_vars()
        .into_iter()
        .filter(|v| answer_vars.contains(v) || extra.iter().any(|a| a.vars().any(|w| w == v)))
        .map(|v| (v, d.fresh_var("v", &mut taken)))
        .collect();
    let d = &d.rename(&clash);
    let mut atoms: Vec<Atom> = extra.to_vec();
    for a in d.atoms() {
        let t = match a {
            Atom::Concept(n, _) => {
                match names::split_at(n) {
                    Some((b, x)) => Atom::Concept(b, x),
                    None => a.clone(),
                }
            }
            Atom::Role(r, v, w) => match names::split_at(r) {
                Some((b, x)) => Atom::Role(b, x, w.clone()),
                None => Atom::Role(r.clone(), v.clone(), w.clone()),
            },
            Atom::Eq(_, _) => a.clone(),
        };
        atoms.push(t);
    }
    ConjQuery::new(answer_vars, atoms)
}

/// `A(x) ↦ A^x(x0)` and `r(x,y) ↦ r^x(x0,y)` for `x ∈ core`; role atoms inside
/// `core` are dropped.
pub(crate) fn translate_forward(d: &ConjQuery, core: &BTreeSet<Var>) -> ConjQuery {
    let x0 = names::root_var();
    let mut atoms = BTreeSet::new();
    for a in d.atoms() {
        match a {
            Atom::Concept(n, x) if core.contains(x) => {
                atoms.insert(Atom::Concept(names::at(n, x), x0.clone()));
            }
            Atom::Role(r, x, y) if core.contains(x) && core.contains(y) => {}
            Atom::Role(r, x, y) if core.contains(x) => {
                atoms.insert(Atom::Role(names::at(r, x), x0.clone(), y.clone()));
            }
            Atom::Eq(_, _) => {}
            a => {
                atoms.insert(a.clone());
            }
        }
    }
    ConjQuery::new(vec![x0], atoms).expect("no equality atoms")
}

fn expand_abbreviations(p: &ConjQuery, abbreviations: &BTreeMap<Symbol, Concept>) -> ConjQuery {
    if !p.concept_atoms().any(|(n, _)| abbreviations.contains_key(n)) {
        return p.clone();
    }
    let mut atoms = BTreeSet::new();
    let mut counter = 0;
    for a in p.atoms() {
        match a {
            Atom::Concept(n, x) if abbreviations.contains_key(n) => {
                add_concept_atoms(&abbreviations[n], x, &mut atoms, &mut counter, "t");
            }
            a => {
                atoms.insert(a.clone());
            }
        }
    }
    p.with_atoms(atoms)
}

/// A derivative of `q0` keeps its answer variables and the role atoms between
/// them, and hangs trees only off answer variables that carry a concept atom
/// in `q0`.
pub(crate) fn check_derivative(d: &ConjQuery, q0: &ConjQuery) -> Result<()> {
    let bad = |m: &str| Err(Error::NotDerivative(format!("{d}: {m}")));
    if d.answer_vars() != q0.answer_vars() {
        return bad("answer variables differ");
    }
    if d.has_eq() {
        return bad("equality atom");
    }
    let inner = |q: &ConjQuery| -> BTreeSet<Atom> {
        q.atoms()
            .iter()
            .filter(|a| matches!(a, Atom::Role(_, x, y) if q.is_answer_var(x) && q.is_answer_var(y)))
            .cloned()
            .collect()
    };
    if inner(d) != inner(q0) {
        return bad("role atoms between answer variables differ");
    }
    if !crate::structure::is_tree_quantified(d) {
        return bad("quantified part is not a forest below the answer variables");
    }
    for x in d.answer_vars() {
        let carries = q0.names_at(x).next().is_some();
        let used = d.names_at(x).next().is_some() || d.out_edges(x).any(|(_, y)| !d.is_answer_var(y));
        if used && !carries {
            return bad(&format!("atoms at {x}, which has no concept atom"));
        }
    }
    Ok(())
}

/// TBox inclusions of `T′` that are not in `T`.
pub fn added_inclusions(red: &TqReduction) -> TBox {
    TBox::from_inclusions(red.target.tbox.iter().filter(|ci| !red.source.tbox.contains(ci)).cloned())
}
