mod common;

use omq_core::engine::{apply_ci, bc_aq, bc_aq_plus, prune, rewrite, Budget, RewriteOutcome, Strategy};
use omq_core::io::{parse_ucq, serialize_ucq};
use omq_core::model::{concept_to_tree_cq, cq_as_abox, tree_cq_to_concept};
use omq_core::oracle::{check_rewriting, eval_ucq};
use omq_core::reasoner::{certain_answer, saturate, Reasoner};
use omq_core::reduction_rcq::{build_rcq_reductions, MinMode};
use omq_core::reduction_tq::eliminate_quantified_trees;
use omq_core::structure::{classify, contained_in_with, fork_rewritings, minimize_with, prec_children, QueryClass};
use omq_core::{Abox, Atom, Concept, ConjQuery, Omq, Signature, Symbol, TBox, UnionQuery, Var};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gen(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ common::seed())
}

fn full_sigma() -> Signature {
    Signature::of(common::CONCEPTS, common::ROLES)
}

fn all_tuples(a: &Abox, arity: usize) -> Vec<Vec<Symbol>> {
    let inds: Vec<Symbol> = a.individuals().iter().cloned().collect();
    common::tuples(&inds, arity)
}

/// The query with its quantified variables renamed.
fn renamed(q: &ConjQuery, suffix: &str) -> ConjQuery {
    let f = |v: &Var| if q.is_answer_var(v) { v.clone() } else { Var::new(&format!("{v}{suffix}")) };
    let atoms = q.atoms().iter().map(|a| match a {
        Atom::Concept(n, v) => Atom::Concept(n.clone(), f(v)),
        Atom::Role(r, x, y) => Atom::Role(r.clone(), f(x), f(y)),
        Atom::Eq(x, y) => Atom::Eq(f(x), f(y)),
    });
    ConjQuery::new(q.answer_vars().to_vec(), atoms).unwrap()
}

fn with_extra_atoms(rng: &mut impl Rng, q: &ConjQuery) -> ConjQuery {
    let mut atoms: Vec<Atom> = q.atoms().iter().cloned().collect();
    let vars: Vec<Var> = q.vars().into_iter().collect();
    for i in 0..rng.gen_range(0..=2) {
        let x = vars.choose(rng).unwrap().clone();
        let y = Var::new(&format!("extra{i}"));
        atoms.push(Atom::role(*common::ROLES.choose(rng).unwrap(), x, y.clone()));
        if rng.gen_bool(0.5) {
            atoms.push(Atom::concept(*common::CONCEPTS.choose(rng).unwrap(), y));
        }
    }
    ConjQuery::new(q.answer_vars().to_vec(), atoms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concept_tree_round_trip(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let c = common::concept(&mut rng, 4);
        let q = concept_to_tree_cq(&c, "x");
        prop_assert_eq!(tree_cq_to_concept(&q).unwrap().code(), c.code());
        prop_assert_eq!(concept_to_tree_cq(&tree_cq_to_concept(&q).unwrap(), "x").code(), q.code());
    }

    #[test]
    fn codes_ignore_names_and_order(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let answers = rng.gen_range(1..=2);
        let q = common::rooted_cq(&mut rng, answers, 5, false);
        prop_assert_eq!(renamed(&q, "_k").code(), q.code());
        let c = common::concept(&mut rng, 3);
        let mut parts = c.conjuncts().to_vec();
        parts.reverse();
        prop_assert_eq!(Concept::and(parts).code(), c.code());
    }

    #[test]
    fn ucq_serialization_round_trip(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let answers = rng.gen_range(1..=2);
        let ds: Vec<ConjQuery> = (0..rng.gen_range(0..=3)).map(|_| common::rooted_cq(&mut rng, answers, 4, false)).collect();
        let head = common::rooted_cq(&mut rng, answers, 1, false).answer_vars().to_vec();
        let u = UnionQuery::new(head, ds).unwrap();
        let back = parse_ucq(&serialize_ucq(&u)).unwrap();
        prop_assert_eq!(back.canonical(), u.canonical());
    }

    #[test]
    fn subsumption_agrees_with_certain_answers(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let t = common::tbox(&mut rng, 4);
        let (c, d) = (common::concept(&mut rng, 3), common::concept(&mut rng, 3));
        let (a, map) = cq_as_abox(&concept_to_tree_cq(&c, "x"));
        let root = map[&Var::new("x")].clone();
        let by_chase = certain_answer(&a, &t, &concept_to_tree_cq(&d, "x"), &[root]).unwrap();
        prop_assert_eq!(Reasoner::new(&t).subsumes(&c, &d), by_chase, "{} vs {}", c, d);
    }

    #[test]
    fn saturation_is_monotone_and_idempotent(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let t = common::tbox(&mut rng, 4);
        let small = common::abox(&mut rng, &full_sigma(), 3, 0.2);
        let mut big = small.clone();
        for (c, i) in common::abox(&mut rng, &full_sigma(), 3, 0.2).concept_assertions() {
            big.add_concept(c.clone(), i.clone());
        }
        let s = saturate(&small, &t);
        prop_assert_eq!(saturate(&s, &t), s.clone());
        prop_assert!(saturate(&big, &t).is_superset(&s));
    }

    #[test]
    fn certain_answers_are_monotone(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let t = common::tbox(&mut rng, 4);
        let q = common::rooted_cq(&mut rng, 1, 4, false);
        let small = common::abox(&mut rng, &full_sigma(), 3, 0.25);
        let mut big = small.clone();
        for (r, x, y) in common::abox(&mut rng, &full_sigma(), 3, 0.25).role_assertions() {
            big.add_role(r.clone(), x.clone(), y.clone());
        }
        let reasoner = Reasoner::new(&t);
        for tuple in all_tuples(&small, 1) {
            if reasoner.certain_answer(&small, &q, &tuple).unwrap() {
                prop_assert!(reasoner.certain_answer(&big, &q, &tuple).unwrap());
            }
        }
    }

    #[test]
    fn fork_rewritings_shape(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let tq = rng.gen_bool(0.5);
        let answers = rng.gen_range(1..=2);
        let q = common::rooted_cq(&mut rng, answers, 5, tq);
        let forks = fork_rewritings(&q);
        prop_assert!(forks.iter().any(|f| f.code() == q.code()));
        prop_assert!(forks.iter().all(|f| f.vars().len() <= q.vars().len()));
        if classify(&q) <= QueryClass::TqCQ {
            prop_assert_eq!(forks.len(), 1);
        }
        for c in prec_children(&q) {
            prop_assert!(c.len() < q.len());
        }
    }

    #[test]
    fn minimization_is_idempotent_and_minimal(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let t = common::tbox(&mut rng, 3);
        let q0 = common::rooted_cq(&mut rng, 1, 3, true);
        let q = with_extra_atoms(&mut rng, &q0);
        let reasoner = Reasoner::new(&t);
        let p = minimize_with(&reasoner, &q, &q0).unwrap();
        prop_assert_eq!(minimize_with(&reasoner, &p, &q0).unwrap(), p.clone());
        for c in prec_children(&p) {
            prop_assert!(!contained_in_with(&reasoner, &c, &q0).unwrap(), "{} has child {}", p, c);
        }
    }

    #[test]
    fn tree_elimination_preserves_answers(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let t = common::tbox(&mut rng, 3);
        let answers = rng.gen_range(1..=2);
        let q = common::rooted_cq(&mut rng, answers, 4, true);
        let omq = Omq::new(t, common::sigma(), q).unwrap();
        let (src, _) = eliminate_quantified_trees(&omq).unwrap();
        let a = common::abox(&mut rng, &common::sigma(), 3, 0.3);
        let (before, after) = (Reasoner::new(&omq.tbox), Reasoner::new(&src.tbox));
        for tuple in all_tuples(&a, omq.query.arity()) {
            prop_assert_eq!(
                before.certain_answer(&a, &omq.query, &tuple).unwrap(),
                after.certain_answer(&a, &src.query, &tuple).unwrap()
            );
        }
    }

    #[test]
    fn evaluation_is_empty_tbox_certainty(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let answers = rng.gen_range(1..=2);
        let q = common::rooted_cq(&mut rng, answers, 4, false);
        let a = common::abox(&mut rng, &full_sigma(), 3, 0.35);
        for tuple in all_tuples(&a, q.arity()) {
            prop_assert_eq!(
                eval_ucq(&a, &UnionQuery::single(q.clone()), &tuple).unwrap(),
                certain_answer(&a, &TBox::new(), &q, &tuple).unwrap()
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plus_with_own_tbox_is_bc_aq(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let t = common::tbox(&mut rng, 3);
        let a = *common::CONCEPTS.choose(&mut rng).unwrap();
        let q = ConjQuery::new(vec![Var::new("x")], [Atom::concept(a, "x")]).unwrap();
        let omq = Omq::new(t, common::sigma(), q).unwrap();
        let b = Budget { max_queries: 300, max_depth: 6, max_seconds: 10.0 };
        prop_assert_eq!(bc_aq(&omq, &b).unwrap(), bc_aq_plus(&omq, &omq.tbox, &b).unwrap());
    }

    #[test]
    fn returned_rewritings_are_sound_and_complete(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let t = common::tbox(&mut rng, 3);
        let tq = rng.gen_bool(0.5);
        let answers = rng.gen_range(1..=2);
        let q = common::rooted_cq(&mut rng, answers, 4, tq);
        let omq = Omq::new(t, common::sigma(), q).unwrap();
        let b = Budget { max_queries: 1000, max_depth: 8, max_seconds: 5.0 };
        if let Ok(RewriteOutcome::Rewriting(u)) = rewrite(&omq, &b, Strategy::Auto) {
            prop_assert!(check_rewriting(&omq, &u, 3).unwrap().is_ok(), "{}", serialize_ucq(&u));
            let pruned = prune(&u).unwrap();
            prop_assert!(check_rewriting(&omq, &pruned, 3).unwrap().is_ok(), "pruned {}", serialize_ucq(&pruned));
        }
    }

    #[test]
    fn goal_membership_matches_containment(seed in any::<u64>()) {
        let mut rng = gen(seed);
        let t = common::tbox(&mut rng, 3);
        let answers = rng.gen_range(1..=2);
        let q0 = common::rooted_cq(&mut rng, answers, 4, false);
        let omq = Omq::new(t.clone(), Signature::full(), q0.clone()).unwrap();
        let reasoner = Reasoner::new(&t);
        for red in build_rcq_reductions(&omq).unwrap() {
            let checker = red.min_checker(MinMode::Materialized);
            let on_demand = red.min_checker(MinMode::OnDemand);
            let cis: Vec<_> = t.iter().collect();
            let mut d = red.fork.clone();
            for _ in 0..rng.gen_range(0..=2) {
                let vars: Vec<Var> = d.vars().into_iter().collect();
                let x = vars.choose(&mut rng).unwrap().clone();
                if let Some(n) = apply_ci(&d, cis.choose(&mut rng).unwrap(), &x).unwrap().into_iter().next() {
                    d = n;
                }
            }
            let mut seen = vec![d.clone()];
            let mut i = 0;
            while i < seen.len() && seen.len() < 12 {
                let kids = prec_children(&seen[i]);
                seen.extend(kids);
                i += 1;
            }
            for q in &seen {
                let tq = red.tau(q).unwrap();
                let contained = contained_in_with(&reasoner, q, &q0).unwrap();
                prop_assert_eq!(checker.entails_goal(&tq), contained, "{} via {}", q, tq);
                prop_assert_eq!(on_demand.entails_goal(&tq), contained);
            }
        }
    }
}
