//! Reduction of rooted CQs: one pair `(Q_{q_r}, T^min_{q_r})` per fork
//! rewriting `q_r` of the input query.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{cq_as_abox, Atom, Concept, ConceptInclusion, ConjQuery, Omq, Signature, Symbol, TBox, UnionQuery, Var};
use crate::names;
use crate::reasoner::Reasoner;
use crate::reduction_tq::{conformance, left_copy, right_copy, translate_back, translate_forward};
use crate::structure::{assignments, core_of, fork_rewritings, is_forest_below, skeletons};

/// How `T^min ⊨ D ⊑ N` is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MinMode {
    /// Reason over `T^min` as a TBox.
    #[default]
    Materialized,
    /// Check the cached splitting concepts at the root directly.
    OnDemand,
}

#[derive(Debug, Clone)]
pub struct RcqReduction {
    pub original: Omq,
    /// `q_r`
    pub fork: ConjQuery,
    /// `core(q_r)` without the answer variables merged away by equality.
    pub core: BTreeSet<Var>,
    /// `(T_{q_r}, Σ_{q_r}, N(x0))`
    pub target: Omq,
    /// `T_{q_r}` together with the inclusions linking core variables along
    /// the role atoms between them.
    pub t_min_base: TBox,
    /// Left-hand sides of the inclusions `… ⊑ N` contributed by splittings.
    pub splitting_lhs: BTreeSet<Concept>,
    /// `T^min_{q_r}`: `t_min_base` plus `lhs ⊑ N` for every splitting lhs.
    pub t_min: TBox,
}

/// Builds the reductions for all fork rewritings of the query.
pub fn build_rcq_reductions(omq: &Omq) -> Result<Vec<RcqReduction>> {
    let forks = fork_rewritings(&omq.query);
    forks.iter().map(|q_r| build_with_forks(omq, q_r, &forks)).collect()
}

pub fn build_rcq_reduction(omq: &Omq, q_r: &ConjQuery) -> Result<RcqReduction> {
    let forks = fork_rewritings(&omq.query);
    if !forks.iter().any(|f| f.code() == q_r.code()) {
        return Err(Error::Precondition(format!("{q_r} is not a fork rewriting of {}", omq.query)));
    }
    build_with_forks(omq, q_r, &forks)
}

fn build_with_forks(omq: &Omq, q_r: &ConjQuery, forks: &[ConjQuery]) -> Result<RcqReduction> {
    if !crate::structure::is_rooted(q_r) {
        return Err(Error::Unsupported(crate::structure::classify(q_r)));
    }
    let t = &omq.tbox;
    let merged = q_r.merged_vars();
    let full_core = core_of(q_r);
    let core: BTreeSet<Var> = full_core.vars.iter().filter(|v| !merged.contains(*v)).cloned().collect();

    let mut tq = t.clone();
    for x in &core {
        for ci in t {
            tq.insert(ConceptInclusion::new(right_copy(&ci.lhs, x), right_copy(&ci.rhs, x)));
        }
    }
    let goal = Concept::Name(names::goal());
    let trees = full_core.trees.iter().filter(|(x, _)| core.contains(x));
    tq.insert(ConceptInclusion::new(Concept::and(trees.map(|(x, c)| right_copy(c, x))), goal.clone()));

    let base = omq.finite_sigma();
    let mut sigma = base.clone();
    let (cs, rs) = tq.symbols();
    for a in cs {
        if let Some((b, _)) = names::split_at(&a) {
            if base.admits_concept(&b) && a != names::goal() {
                sigma.concept_names.insert(a);
            }
        }
    }
    for r in rs {
        if let Some((b, _)) = names::split_at(&r) {
            if base.admits_role(&b) {
                sigma.role_names.insert(r);
            }
        }
    }
    let query = ConjQuery::new(vec![names::root_var()], [Atom::Concept(names::goal(), names::root_var())])?;
    let target = Omq { tbox: tq.clone(), sigma, query };

    let t_min_base = linking_inclusions(t, q_r, &core, tq);
    let splitting_lhs = splitting_concepts(&omq.query, q_r, &core, forks);
    let mut t_min = t_min_base.clone();
    for lhs in &splitting_lhs {
        t_min.insert(ConceptInclusion::new(lhs.clone(), goal.clone()));
    }
    Ok(RcqReduction {
        original: omq.clone(),
        fork: q_r.clone(),
        core,
        target,
        t_min_base,
        splitting_lhs,
        t_min,
    })
}

/// Copies `C^x_L ⊑ D^x_R` and the `A^x_{∃r.E}` names for core variables, so
/// that an existential at `x` can be witnessed by a core neighbour `y`.
fn linking_inclusions(t: &TBox, q_r: &ConjQuery, core: &BTreeSet<Var>, mut out: TBox) -> TBox {
    let sub_l: Vec<(Symbol, Concept)> = t
        .lhs_subconcepts()
        .into_iter()
        .filter_map(|c| match c {
            Concept::Exists(r, e) => Some((r, *e)),
            _ => None,
        })
        .collect();
    for x in core {
        for ci in t {
            out.insert(ConceptInclusion::new(left_copy(&ci.lhs, x), right_copy(&ci.rhs, x)));
        }
        for (r, e) in &sub_l {
            out.insert(ConceptInclusion::new(
                Concept::exists(names::at(r, x), e.clone()),
                Concept::Name(names::exists_at(r, e, x)),
            ));
        }
    }
    for (r, x, y) in q_r.role_atoms() {
        if !(core.contains(x) && core.contains(y)) {
            continue;
        }
        for (s, e) in sub_l.iter().filter(|(s, _)| s == r) {
            out.insert(ConceptInclusion::new(left_copy(e, y), Concept::Name(names::exists_at(s, e, x))));
        }
    }
    out
}

/// One lhs per fork rewriting `q` of `q0` and splitting of `q` with respect
/// to the core of `A_{q_r}` that preserves answer variables modulo equality.
fn splitting_concepts(q0: &ConjQuery, q_r: &ConjQuery, core: &BTreeSet<Var>, forks: &[ConjQuery]) -> BTreeSet<Concept> {
    let (abox, map) = cq_as_abox(q_r);
    let back: BTreeMap<Symbol, Var> = map.iter().map(|(v, i)| (i.clone(), v.clone())).collect();
    let core_inds: BTreeSet<Symbol> = core.iter().map(|v| map[v].clone()).collect();
    let class_of = |x: &Var| -> BTreeSet<Symbol> {
        let rep = crate::structure::representative(q_r, x);
        [map[&rep].clone()].into()
    };
    let mut out = BTreeSet::new();
    for q in forks {
        debug_assert_eq!(q.answer_vars(), q0.answer_vars());
        for sk in skeletons(q) {
            let allowed: BTreeMap<Var, BTreeSet<Symbol>> = sk
                .r
                .iter()
                .map(|v| (v.clone(), if q.is_answer_var(v) { class_of(v) } else { core_inds.clone() }))
                .collect();
            for nu in assignments(q, &sk, &abox, &allowed) {
                let at = |v: &Var| back[&nu[v]].clone();
                let names = q
                    .concept_atoms()
                    .filter(|(_, x)| sk.r.contains(*x))
                    .map(|(a, x)| Concept::Name(names::at(a, &at(x))));
                let parts = sk.parts.iter().map(|p| Concept::exists(names::at(&p.role, &at(&p.mu)), p.concept.clone()));
                out.insert(Concept::and(names.chain(parts)));
            }
        }
    }
    out
}

impl RcqReduction {
    /// `τ`: a derivative of `q_r` to a conformant tCQ with answer variable `x0`.
    pub fn tau(&self, q: &ConjQuery) -> Result<ConjQuery> {
        self.check_derivative(q)?;
        Ok(translate_forward(q, &self.core))
    }

    /// `π`: a conformant tCQ back to a derivative of `q_r`.
    pub fn pi(&self, qp: &ConjQuery) -> Result<ConjQuery> {
        let core: Vec<Var> = self.core.iter().cloned().collect();
        conformance(qp, &core)?;
        translate_back(qp, &self.fixed_atoms(), self.fork.answer_vars().to_vec())
    }

    pub fn pi_ucq(&self, u: &UnionQuery) -> Result<UnionQuery> {
        let ds = u.disjuncts().iter().map(|d| self.pi(d)).collect::<Result<Vec<_>>>()?;
        UnionQuery::new(self.fork.answer_vars().to_vec(), ds)
    }

    pub fn is_conformant(&self, u: &UnionQuery) -> bool {
        let core: Vec<Var> = self.core.iter().cloned().collect();
        u.disjuncts().iter().all(|d| conformance(d, &core).is_ok())
    }

    /// Role atoms between core variables and equality atoms of `q_r`.
    fn fixed_atoms(&self) -> Vec<Atom> {
        self.fork
            .atoms()
            .iter()
            .filter(|a| match a {
                Atom::Role(_, x, y) => self.core.contains(x) && self.core.contains(y),
                Atom::Eq(_, _) => true,
                Atom::Concept(_, _) => false,
            })
            .cloned()
            .collect()
    }

    fn check_derivative(&self, q: &ConjQuery) -> Result<()> {
        let bad = |m: &str| Err(Error::NotDerivative(format!("{q}: {m}")));
        if q.answer_vars() != self.fork.answer_vars() {
            return bad("answer variables differ");
        }
        let fixed = |c: &ConjQuery| -> BTreeSet<Atom> {
            c.atoms()
                .iter()
                .filter(|a| match a {
                    Atom::Role(_, x, y) => self.core.contains(x) && self.core.contains(y),
                    Atom::Eq(_, _) => true,
                    Atom::Concept(_, _) => false,
                })
                .cloned()
                .collect()
        };
        if fixed(q) != fixed(&self.fork) {
            return bad("core role atoms or equalities differ");
        }
        let mut roots = self.core.clone();
        roots.extend(q.merged_vars());
        if !is_forest_below(q, &roots) {
            return bad("not a forest below the core");
        }
        if q.merged_vars().iter().any(|v| q.names_at(v).next().is_some() || q.out_edges(v).next().is_some()) {
            return bad("atoms at a merged variable");
        }
        Ok(())
    }

    /// A checker for `T^min ⊨ D ⊑ N`.
    pub fn min_checker(&self, mode: MinMode) -> MinChecker<'_> {
        let tbox = match mode {
            MinMode::Materialized => &self.t_min,
            MinMode::OnDemand => &self.t_min_base,
        };
        MinChecker { red: self, mode, reasoner: Reasoner::new(tbox) }
    }

    /// Number of distinct `∃r^x.C` concepts across the splitting inclusions.
    pub fn splitting_exists_count(&self) -> usize {
        let mut seen = BTreeSet::new();
        for c in &self.splitting_lhs {
            for (r, e) in c.top_exists() {
                seen.insert(Concept::exists(r.clone(), e.clone()));
            }
        }
        seen.len()
    }
}

pub struct MinChecker<'a> {
    red: &'a RcqReduction,
    mode: MinMode,
    reasoner: Reasoner,
}

impl MinChecker<'_> {
    /// Whether the tCQ `qp` (answer variable `x0`) implies `N` under `T^min`.
    pub fn entails_goal(&self, qp: &ConjQuery) -> bool {
        let (abox, map) = cq_as_abox(qp);
        let root = &map[&qp.answer_vars()[0]];
        let sat = self.reasoner.saturate(&abox);
        if sat.has_label(root, &names::goal()) {
            return true;
        }
        match self.mode {
            MinMode::Materialized => false,
            MinMode::OnDemand => self.red.splitting_lhs.iter().any(|c| sat.satisfies(root, c)),
        }
    }
}

/// `Σ` restricted to the TBox and query plus the superscripted copies used
/// by the target; exposed for diagnostics.
pub fn target_signature(red: &RcqReduction) -> &Signature {
    &red.target.sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{parse_cq, parse_tbox};

    fn t1() -> TBox {
        parse_tbox(
            "Albinism SubClassOf HereditaryDisease\n\
             and(Person, some(hasDisease, HereditaryDisease)) SubClassOf GeneticRiskPatient\n",
        )
        .unwrap()
    }

    fn q3() -> ConjQuery {
        parse_cq(
            "q(x) :- Person(x), hasDisease(x,y1), hasDisease(x,y2), MelaninDeficiency(y1), \
             ImpairedVision(y2), causedBy(y1,z), causedBy(y2,z), GeneDefect(z).",
        )
        .unwrap()
    }

    fn sup(a: &str, x: &str) -> Concept {
        Concept::Name(names::at(&a.into(), &x.into()))
    }

    fn goal_ci(c: Concept) -> ConceptInclusion {
        ConceptInclusion::new(c, Concept::Name(names::goal()))
    }

    #[test]
    fn example_reduction() {
        let omq = Omq::new(t1(), Signature::full(), q3()).unwrap();
        let red = build_rcq_reduction(&omq, &q3()).unwrap();
        assert_eq!(red.core.len(), 4);
        let copy = ConceptInclusion::new(
            Concept::and([
                sup("Person", "x"),
                Concept::exists(names::at(&"hasDisease".into(), &"x".into()), Concept::name("HereditaryDisease")),
            ]),
            sup("GeneticRiskPatient", "x"),
        );
        assert!(red.target.tbox.contains(&copy));
        let n = goal_ci(Concept::and([
            sup("Person", "x"),
            sup("MelaninDeficiency", "y1"),
            sup("ImpairedVision", "y2"),
            sup("GeneDefect", "z"),
        ]));
        assert!(red.target.tbox.contains(&n));
        let filler = Concept::and([
            Concept::name("MelaninDeficiency"),
            Concept::name("ImpairedVision"),
            Concept::exists("causedBy", Concept::name("GeneDefect")),
        ]);
        let split = goal_ci(Concept::and([
            sup("Person", "x"),
            Concept::exists(names::at(&"hasDisease".into(), &"x".into()), filler),
        ]));
        assert!(red.t_min.contains(&split), "{:?}", red.splitting_lhs);
        assert!(red.t_min.is_superset(&red.target.tbox));
        assert!(!red.target.tbox.contains(&split));
        assert!(red.target.sigma.admits_role(&names::at(&"hasDisease".into(), &"x".into())));
        assert!(!red.target.sigma.admits_role(&names::at(&"causedBy".into(), &"y1".into())));
        assert!(!red.target.sigma.admits_concept(&names::goal()));
    }

    #[test]
    fn tau_and_pi() {
        let omq = Omq::new(t1(), Signature::full(), q3()).unwrap();
        let red = build_rcq_reduction(&omq, &q3()).unwrap();
        let tq = red.tau(&q3()).unwrap();
        assert_eq!(tq.answer_vars(), [names::root_var()]);
        assert_eq!(tq.len(), 4);
        assert_eq!(red.pi(&tq).unwrap().code(), q3().code());
        let d = parse_cq(
            "q(x) :- Person(x), hasDisease(x,y1), hasDisease(x,y2), MelaninDeficiency(y1), \
             ImpairedVision(y2), causedBy(y1,z), causedBy(y2,z), GeneDefect(z), causedBy(z,w), Albinism(w).",
        )
        .unwrap();
        assert_eq!(red.pi(&red.tau(&d).unwrap()).unwrap().code(), d.code());
        let clash = crate::io::parse_cq_internal("q(__x0) :- hasDisease__at__x(__x0,z), Albinism(z).").unwrap();
        let p = red.pi(&clash).unwrap();
        assert_eq!(p.len(), q3().len() - 4 + 2);
        assert_eq!(p.vars().len(), 5);
        let not_deriv = parse_cq("q(x) :- Person(x), hasDisease(x,y1).").unwrap();
        assert!(red.tau(&not_deriv).is_err());
    }

    #[test]
    fn non_fork_rejected() {
        let omq = Omq::new(t1(), Signature::full(), q3()).unwrap();
        assert!(build_rcq_reduction(&omq, &parse_cq("q(x) :- Person(x).").unwrap()).is_err());
        assert_eq!(build_rcq_reductions(&omq).unwrap().len(), 2);
    }

    #[test]
    fn modes_agree_on_goal() {
        let omq = Omq::new(t1(), Signature::full(), q3()).unwrap();
        for red in build_rcq_reductions(&omq).unwrap() {
            let m = red.min_checker(MinMode::Materialized);
            let o = red.min_checker(MinMode::OnDemand);
            let base = red.tau(&red.fork).unwrap();
            assert!(m.entails_goal(&base) && o.entails_goal(&base));
            for c in crate::structure::prec_children(&base) {
                assert_eq!(m.entails_goal(&c), o.entails_goal(&c));
            }
        }
    }

    #[test]
    fn core_neighbours_witness_existentials() {
        let t = parse_tbox("some(r, B) SubClassOf A\n").unwrap();
        let q0 = parse_cq("q(x) :- A(x), r(x,y), r(y,x), B(y).").unwrap();
        let omq = Omq::new(t, Signature::full(), q0.clone()).unwrap();
        let red = build_rcq_reduction(&omq, &q0).unwrap();
        let only_b = crate::io::parse_cq_internal("q(__x0) :- B__at__y(__x0).").unwrap();
        assert!(red.min_checker(MinMode::Materialized).entails_goal(&only_b));
        assert!(red.min_checker(MinMode::OnDemand).entails_goal(&only_b));
        let p = red.pi(&only_b).unwrap();
        assert!(crate::structure::contained_in(&omq.tbox, &p, &q0).unwrap());
    }
}
