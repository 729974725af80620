//! EL reasoning: rhs normalization, saturation of ABoxes, subsumption, a
//! bounded chase and certain answers to CQs.
//!
//! The canonical model is kept compact: every anonymous element is an
//! instance of one "witness type", one per existential filler on a
//! right-hand side. Concepts are evaluated on the compact model directly;
//! CQs are matched against its unraveling, explored lazily along paths.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::model::{
    concept_to_tree_cq, cq_as_abox, Abox, Atom, Concept, ConceptInclusion, ConjQuery, Symbol, TBox, Var,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalTBox {
    pub original: TBox,
    pub normalized: TBox,
    pub fresh_names: BTreeSet<Symbol>,
}

/// Splits right-hand-side conjunctions; drops inclusions with `Top` on the right.
pub fn normalize(t: &TBox) -> NormalTBox {
    let mut normalized = TBox::new();
    for ci in t {
        for part in ci.rhs.conjuncts() {
            normalized.insert(ConceptInclusion::new(ci.lhs.clone(), part.clone()));
        }
    }
    NormalTBox { original: t.clone(), normalized, fresh_names: BTreeSet::new() }
}

#[derive(Clone, Debug)]
enum Rhs {
    Name(Symbol),
    Exists(Symbol, usize),
}

#[derive(Clone, Debug)]
struct WitnessType {
    labels: BTreeSet<Symbol>,
    edges: BTreeSet<(Symbol, usize)>,
}

/// A TBox prepared for reasoning. Building one is linear in the number of
/// right-hand-side fillers plus a fixpoint over the witness types.
#[derive(Clone, Debug)]
pub struct Reasoner {
    normal: NormalTBox,
    rules: Vec<(Concept, Rhs)>,
    witnesses: Vec<WitnessType>,
}

fn intern(c: &Concept, index: &mut BTreeMap<Concept, usize>, out: &mut Vec<WitnessType>) -> usize {
    if let Some(&i) = index.get(c) {
        return i;
    }
    let i = out.len();
    index.insert(c.clone(), i);
    out.push(WitnessType { labels: c.top_names().cloned().collect(), edges: BTreeSet::new() });
    for (r, f) in c.top_exists() {
        let j = intern(f, index, out);
        out[i].edges.insert((r.clone(), j));
    }
    i
}

impl Reasoner {
    pub fn new(t: &TBox) -> Self {
        let normal = normalize(t);
        let mut index = BTreeMap::new();
        let mut witnesses = Vec::new();
        let mut rules = Vec::new();
        for ci in &normal.normalized {
            let rhs = match &ci.rhs {
                Concept::Name(a) => Rhs::Name(a.clone()),
                Concept::Exists(r, f) => Rhs::Exists(r.clone(), intern(f, &mut index, &mut witnesses)),
                _ => unreachable!("normalized right-hand side"),
            };
            rules.push((ci.lhs.clone(), rhs));
        }
        let mut r = Reasoner { normal, rules, witnesses };
        r.close_witnesses();
        r
    }

    pub fn tbox(&self) -> &TBox {
        &self.normal.original
    }

    pub fn normal(&self) -> &NormalTBox {
        &self.normal
    }

    fn close_witnesses(&mut self) {
        loop {
            let mut changed = false;
            for k in 0..self.witnesses.len() {
                for (lhs, rhs) in &self.rules {
                    let fires = match rhs {
                        Rhs::Name(a) => !self.witnesses[k].labels.contains(a),
                        Rhs::Exists(r, j) => !self.witnesses[k].edges.contains(&(r.clone(), *j)),
                    };
                    if fires && sat_witness(&self.witnesses, k, lhs) {
                        match rhs {
                            Rhs::Name(a) => self.witnesses[k].labels.insert(a.clone()),
                            Rhs::Exists(r, j) => self.witnesses[k].edges.insert((r.clone(), *j)),
                        };
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Closes `a` under the TBox on its named individuals.
    pub fn saturate(&self, a: &Abox) -> Saturation<'_> {
        let inds: Vec<Symbol> = a.individuals().iter().cloned().collect();
        let index: BTreeMap<Symbol, usize> = inds.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let n = inds.len();
        let mut labels = vec![BTreeSet::new(); n];
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for (c, x) in a.concept_assertions() {
            labels[index[x]].insert(c.clone());
        }
        for (r, x, y) in a.role_assertions() {
            succ[index[x]].push((r.clone(), index[y]));
            pred[index[y]].push((r.clone(), index[x]));
        }
        let mut s = Saturation {
            reasoner: self,
            inds,
            index,
            labels,
            succ,
            pred,
            anon: vec![BTreeSet::new(); n],
        };
        loop {
            let mut changed = false;
            for i in 0..n {
                for (lhs, rhs) in &self.rules {
                    let fires = match rhs {
                        Rhs::Name(a) => !s.labels[i].contains(a),
                        Rhs::Exists(r, j) => !s.anon[i].contains(&(r.clone(), *j)),
                    };
                    if fires && s.sat_named(i, lhs) {
                        match rhs {
                            Rhs::Name(a) => s.labels[i].insert(a.clone()),
                            Rhs::Exists(r, j) => s.anon[i].insert((r.clone(), *j)),
                        };
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        s
    }

    /// `T ⊨ c ⊑ d`.
    pub fn subsumes(&self, c: &Concept, d: &Concept) -> bool {
        if self.rules.is_empty() {
            return c.entails_structurally(d);
        }
        let (abox, map) = cq_as_abox(&concept_to_tree_cq(c, "x"));
        let s = self.saturate(&abox);
        s.satisfies(&map[&Var::from("x")], d)
    }

    /// Whether `ā` is a certain answer to `q` on `a` under the TBox.
    pub fn certain_answer(&self, a: &Abox, q: &ConjQuery, tuple: &[Symbol]) -> Result<bool> {
        if tuple.len() != q.arity() {
            return Err(Error::Arity { expected: q.arity(), got: tuple.len() });
        }
        if tuple.iter().any(|t| !a.individuals().contains(t)) {
            let mut a = a.clone();
            tuple.iter().for_each(|t| a.add_individual(t.clone()));
            return Ok(self.saturate(&a).entails(q, tuple));
        }
        Ok(self.saturate(a).entails(q, tuple))
    }

    pub fn chase(&self, a: &Abox, depth: usize) -> ChaseModel {
        let s = self.saturate(a);
        let mut base = a.clone();
        for (i, ind) in s.inds.iter().enumerate() {
            for l in &s.labels[i] {
                base.add_concept(l.clone(), ind.clone());
            }
        }
        let mut anon = Vec::new();
        let mut queue = VecDeque::new();
        if depth > 0 {
            for (i, ind) in s.inds.iter().enumerate() {
                for (r, k) in &s.anon[i] {
                    queue.push_back((ChaseParent::Individual(ind.clone()), r.clone(), *k, 1));
                }
            }
        }
        while let Some((parent, role, k, d)) = queue.pop_front() {
            let id = anon.len();
            anon.push(ChaseNode { parent, role, labels: self.witnesses[k].labels.clone(), depth: d });
            if d < depth {
                for (r, j) in &self.witnesses[k].edges {
                    queue.push_back((ChaseParent::Anon(id), r.clone(), *j, d + 1));
                }
            }
        }
        ChaseModel { base, anon, depth }
    }
}

fn sat_witness(ws: &[WitnessType], k: usize, c: &Concept) -> bool {
    c.top_names().all(|n| ws[k].labels.contains(n))
        && c
            .top_exists()
            .all(|(r, f)| ws[k].edges.iter().any(|(s, j)| s == r && sat_witness(ws, *j, f)))
}

/// A saturated ABox together with the compact anonymous part of its
/// canonical model.
pub struct Saturation<'r> {
    reasoner: &'r Reasoner,
    inds: Vec<Symbol>,
    index: BTreeMap<Symbol, usize>,
    labels: Vec<BTreeSet<Symbol>>,
    succ: Vec<Vec<(Symbol, usize)>>,
    pred: Vec<Vec<(Symbol, usize)>>,
    anon: Vec<BTreeSet<(Symbol, usize)>>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
enum Base {
    Named(usize),
    Free(usize),
}

/// An element of the unraveled canonical model.
#[derive(Clone, PartialEq, Eq, Debug)]
enum Elem {
    Named(usize),
    Anon { base: Base, path: Vec<(Symbol, usize)> },
}

impl<'r> Saturation<'r> {
    pub fn individuals(&self) -> &[Symbol] {
        &self.inds
    }

    /// Concept names entailed at `ind`; empty for unknown individuals.
    pub fn labels(&self, ind: &Symbol) -> BTreeSet<Symbol> {
        self.index.get(ind).map(|&i| self.labels[i].clone()).unwrap_or_default()
    }

    pub fn has_label(&self, ind: &Symbol, a: &Symbol) -> bool {
        self.index.get(ind).map(|&i| self.labels[i].contains(a)).unwrap_or(false)
    }

    /// The saturated ABox: the input plus all entailed concept assertions.
    pub fn to_abox(&self, original: &Abox) -> Abox {
        let mut a = original.clone();
        for (i, ind) in self.inds.iter().enumerate() {
            for l in &self.labels[i] {
                a.add_concept(l.clone(), ind.clone());
            }
        }
        a
    }

    /// Whether `ind` is an instance of `c`.
    pub fn satisfies(&self, ind: &Symbol, c: &Concept) -> bool {
        match self.index.get(ind) {
            Some(&i) => self.sat_named(i, c),
            None => *c == Concept::Top,
        }
    }

    fn sat_named(&self, i: usize, c: &Concept) -> bool {
        let ws = &self.reasoner.witnesses;
        c.top_names().all(|n| self.labels[i].contains(n))
            && c.top_exists().all(|(r, f)| {
                self.succ[i].iter().any(|(s, j)| s == r && self.sat_named(*j, f))
                    || self.anon[i].iter().any(|(s, k)| s == r && sat_witness(ws, *k, f))
            })
    }

    fn elem_labels(&self, e: &Elem) -> &BTreeSet<Symbol> {
        match e {
            Elem::Named(i) => &self.labels[*i],
            Elem::Anon { .. } => &self.reasoner.witnesses[self.type_of(e)].labels,
        }
    }

    fn type_of(&self, e: &Elem) -> usize {
        match e {
            Elem::Anon { path, .. } if !path.is_empty() => path.last().unwrap().1,
            Elem::Anon { base: Base::Free(k), .. } => *k,
            _ => unreachable!("named element has no witness type"),
        }
    }

    fn successors(&self, e: &Elem, r: &Symbol) -> Vec<Elem> {
        match e {
            Elem::Named(i) => {
                let mut out: Vec<Elem> =
                    self.succ[*i].iter().filter(|(s, _)| s == r).map(|(_, j)| Elem::Named(*j)).collect();
                out.extend(self.anon[*i].iter().filter(|(s, _)| s == r).map(|(s, k)| Elem::Anon {
                    base: Base::Named(*i),
                    path: vec![(s.clone(), *k)],
                }));
                out
            }
            Elem::Anon { base, path } => {
                let ws = &self.reasoner.witnesses;
                ws[self.type_of(e)]
                    .edges
                    .iter()
                    .filter(|(s, _)| s == r)
                    .map(|(s, k)| {
                        let mut p = path.clone();
                        p.push((s.clone(), *k));
                        Elem::Anon { base: base.clone(), path: p }
                    })
                    .collect()
            }
        }
    }

    fn predecessors(&self, e: &Elem, r: &Symbol) -> Vec<Elem> {
        match e {
            Elem::Named(j) => {
                self.pred[*j].iter().filter(|(s, _)| s == r).map(|(_, i)| Elem::Named(*i)).collect()
            }
            Elem::Anon { base, path } => match path.last() {
                Some((s, _)) if s == r => {
                    if path.len() == 1 {
                        match base {
                            Base::Named(i) => vec![Elem::Named(*i)],
                            Base::Free(k) => vec![Elem::Anon { base: Base::Free(*k), path: vec![] }],
                        }
                    } else {
                        vec![Elem::Anon { base: base.clone(), path: path[..path.len() - 1].to_vec() }]
                    }
                }
                _ => vec![],
            },
        }
    }

    fn has_edge(&self, x: &Elem, r: &Symbol, y: &Elem) -> bool {
        match (x, y) {
            (Elem::Named(i), Elem::Named(j)) => self.succ[*i].iter().any(|(s, k)| s == r && k == j),
            (_, Elem::Named(_)) => false,
            _ => self.successors(x, r).contains(y),
        }
    }

    /// Witness types occurring below some named individual.
    fn reachable_types(&self) -> BTreeSet<usize> {
        let ws = &self.reasoner.witnesses;
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.anon.iter().flat_map(|s| s.iter().map(|(_, k)| *k)).collect();
        while let Some(k) = stack.pop() {
            if seen.insert(k) {
                stack.extend(ws[k].edges.iter().map(|(_, j)| *j));
            }
        }
        seen
    }

    /// Whether `tuple` is a certain answer to `q`. Individuals outside the
    /// ABox make any query with atoms on them false.
    pub fn entails(&self, q: &ConjQuery, tuple: &[Symbol]) -> bool {
        assert_eq!(tuple.len(), q.arity(), "tuple arity");
        let mut fixed = BTreeMap::new();
        for (v, t) in q.answer_vars().iter().zip(tuple) {
            match self.index.get(t) {
                Some(&i) => {
                    fixed.insert(v.clone(), Elem::Named(i));
                }
                None => {
                    let used = q.atoms().iter().any(|a| a.vars().any(|w| w == v));
                    if used {
                        return false;
                    }
                }
            }
        }
        // answer variables bound to unknown individuals: compare by name
        for (x, y) in q.eq_atoms() {
            let px = q.answer_vars().iter().position(|v| v == x).unwrap();
            let py = q.answer_vars().iter().position(|v| v == y).unwrap();
            if tuple[px] != tuple[py] {
                return false;
            }
        }
        let plan = Plan::new(q);
        if !self.free_components_hold(q, &plan) {
            return false;
        }
        let mut found = false;
        let mut asg = fixed;
        self.search(q, &plan.main, 0, &mut asg, &mut |_| {
            found = true;
            true
        });
        found
    }

    /// All certain answers to `q` over the named individuals.
    pub fn answers(&self, q: &ConjQuery) -> BTreeSet<Vec<Symbol>> {
        let plan = Plan::new(q);
        let mut out = BTreeSet::new();
        if !self.free_components_hold(q, &plan) {
            return out;
        }
        let mut asg = BTreeMap::new();
        self.search(q, &plan.main, 0, &mut asg, &mut |asg| {
            let t = q
                .answer_vars()
                .iter()
                .map(|v| match &asg[v] {
                    Elem::Named(i) => self.inds[*i].clone(),
                    _ => unreachable!("answer variables map to named individuals"),
                })
                .collect();
            out.insert(t);
            false
        });
        out
    }

    fn free_components_hold(&self, q: &ConjQuery, plan: &Plan) -> bool {
        if plan.free.is_empty() {
            return true;
        }
        let types = self.reachable_types();
        plan.free.iter().all(|comp| {
            comp.iter().any(|start| {
                let order = bfs_order(q, std::slice::from_ref(start), comp);
                let mut starts: Vec<Elem> = (0..self.inds.len()).map(Elem::Named).collect();
                starts.extend(types.iter().map(|k| Elem::Anon { base: Base::Free(*k), path: vec![] }));
                starts.into_iter().any(|e| {
                    let mut asg = BTreeMap::new();
                    asg.insert(start.clone(), e);
                    if !self.consistent(q, start, &asg) {
                        return false;
                    }
                    let mut found = false;
                    self.search(q, &order, 1, &mut asg, &mut |_| {
                        found = true;
                        true
                    });
                    found
                })
            })
        })
    }

    /// Backtracking over `order[k..]`; `visit` returns true to stop.
    fn search(
        &self,
        q: &ConjQuery,
        order: &[Var],
        k: usize,
        asg: &mut BTreeMap<Var, Elem>,
        visit: &mut dyn FnMut(&BTreeMap<Var, Elem>) -> bool,
    ) -> bool {
        if k == order.len() {
            return visit(asg);
        }
        let v = &order[k];
        if asg.contains_key(v) {
            return self.consistent(q, v, asg) && self.search(q, order, k + 1, asg, visit);
        }
        let is_answer = q.is_answer_var(v);
        for e in self.candidates(q, v, asg, is_answer) {
            if is_answer && !matches!(e, Elem::Named(_)) {
                continue;
            }
            asg.insert(v.clone(), e);
            if self.consistent(q, v, asg) && self.search(q, order, k + 1, asg, visit) {
                asg.remove(v);
                return true;
            }
            asg.remove(v);
        }
        false
    }

    fn candidates(&self, q: &ConjQuery, v: &Var, asg: &BTreeMap<Var, Elem>, is_answer: bool) -> Vec<Elem> {
        for a in q.atoms() {
            match a {
                Atom::Role(r, x, y) if y == v && asg.contains_key(x) => return self.successors(&asg[x], r),
                Atom::Role(r, x, y) if x == v && asg.contains_key(y) => return self.predecessors(&asg[y], r),
                Atom::Eq(x, y) if y == v && asg.contains_key(x) => return vec![asg[x].clone()],
                Atom::Eq(x, y) if x == v && asg.contains_key(y) => return vec![asg[y].clone()],
                _ => {}
            }
        }
        debug_assert!(is_answer, "quantified variables are reached through an edge");
        (0..self.inds.len()).map(Elem::Named).collect()
    }

    /// Checks every atom on `v` whose other variable is assigned.
    fn consistent(&self, q: &ConjQuery, v: &Var, asg: &BTreeMap<Var, Elem>) -> bool {
        let e = &asg[v];
        q.atoms().iter().all(|a| match a {
            Atom::Concept(n, x) if x == v => self.elem_labels(e).contains(n),
            Atom::Role(r, x, y) if x == v || y == v => match (asg.get(x), asg.get(y)) {
                (Some(ex), Some(ey)) => self.has_edge(ex, r, ey),
                _ => true,
            },
            Atom::Eq(x, y) if x == v || y == v => match (asg.get(x), asg.get(y)) {
                (Some(ex), Some(ey)) => ex == ey,
                _ => true,
            },
            _ => true,
        })
    }
}

/// Variable orders for the hom search: one joint order for the components
/// containing answer variables, and the answer-free components separately.
struct Plan {
    main: Vec<Var>,
    free: Vec<Vec<Var>>,
}

impl Plan {
    fn new(q: &ConjQuery) -> Self {
        let vars: Vec<Var> = q.vars().into_iter().collect();
        let idx: BTreeMap<&Var, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let mut parent: Vec<usize> = (0..vars.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for a in q.atoms() {
            if let Atom::Role(_, x, y) | Atom::Eq(x, y) = a {
                let (rx, ry) = (find(&mut parent, idx[x]), find(&mut parent, idx[y]));
                parent[rx] = ry;
            }
        }
        let answer_roots: BTreeSet<usize> =
            q.answer_vars().iter().map(|v| find(&mut parent, idx[v])).collect();
        let mut free: BTreeMap<usize, Vec<Var>> = BTreeMap::new();
        let mut main_vars = BTreeSet::new();
        for (i, v) in vars.iter().enumerate() {
            let r = find(&mut parent, i);
            if answer_roots.contains(&r) {
                main_vars.insert(v.clone());
            } else {
                free.entry(r).or_default().push(v.clone());
            }
        }
        let main_vars: Vec<Var> = main_vars.into_iter().collect();
        let main = bfs_order(q, q.answer_vars(), &main_vars);
        Plan { main, free: free.into_values().collect() }
    }
}

fn bfs_order(q: &ConjQuery, starts: &[Var], within: &[Var]) -> Vec<Var> {
    let within: BTreeSet<&Var> = within.iter().collect();
    let mut order = Vec::new();
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<Var> = VecDeque::new();
    for s in starts {
        if seen.insert(s.clone()) {
            order.push(s.clone());
            queue.push_back(s.clone());
        }
    }
    while let Some(v) = queue.pop_front() {
        for a in q.atoms() {
            let next = match a {
                Atom::Role(_, x, y) | Atom::Eq(x, y) if x == &v => Some(y),
                Atom::Role(_, x, y) | Atom::Eq(x, y) if y == &v => Some(x),
                _ => None,
            };
            if let Some(w) = next {
                if within.contains(w) && seen.insert(w.clone()) {
                    order.push(w.clone());
                    queue.push_back(w.clone());
                }
            }
        }
    }
    order
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChaseParent {
    Individual(Symbol),
    Anon(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChaseNode {
    pub parent: ChaseParent,
    pub role: Symbol,
    pub labels: BTreeSet<Symbol>,
    pub depth: usize,
}

/// A breadth-first prefix of the canonical model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChaseModel {
    pub base: Abox,
    pub anon: Vec<ChaseNode>,
    pub depth: usize,
}

impl ChaseModel {
    pub fn children_of_individual<'a>(&'a self, a: &'a Symbol) -> impl Iterator<Item = (usize, &'a ChaseNode)> + 'a {
        self.anon
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.parent == ChaseParent::Individual(a.clone()))
    }

    pub fn children_of(&self, id: usize) -> impl Iterator<Item = (usize, &ChaseNode)> + '_ {
        self.anon.iter().enumerate().filter(move |(_, n)| n.parent == ChaseParent::Anon(id))
    }
}

pub fn saturate(a: &Abox, t: &TBox) -> Abox {
    let r = Reasoner::new(t);
    let s = r.saturate(a);
    s.to_abox(a)
}

pub fn subsumes(t: &TBox, c: &Concept, d: &Concept) -> bool {
    Reasoner::new(t).subsumes(c, d)
}

pub fn chase(a: &Abox, t: &TBox, depth: usize) -> ChaseModel {
    Reasoner::new(t).chase(a, depth)
}

pub fn certain_answer(a: &Abox, t: &TBox, q: &ConjQuery, tuple: &[Symbol]) -> Result<bool> {
    Reasoner::new(t).certain_answer(a, q, tuple)
}
