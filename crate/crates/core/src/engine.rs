//! Backwards chaining with ≺-minimization, under budgets.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{add_concept_atoms, tree_cq_to_concept, Atom, Concept, ConceptInclusion, ConjQuery, Omq, Signature, Symbol, TBox, UnionQuery, Var};
use crate::names;
use crate::oracle;
use crate::reasoner::Reasoner;
use crate::reduction_rcq::{build_rcq_reductions, MinMode};
use crate::reduction_tq::build_aq_reduction;
use crate::structure::{classify, contained_in_with, core_of, fork_rewritings, minimize_by, minimize_with, remove_subquery, tree_subquery_at, QueryClass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_queries: usize,
    pub max_depth: usize,
    pub max_seconds: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_queries: 100_000, max_depth: 30, max_seconds: 300.0 }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if self.max_queries == 0 || self.max_depth == 0 || self.max_seconds.is_nan() || self.max_seconds <= 0.0 {
            return Err(Error::InvalidQuery("budget limits must be positive".into()));
        }
        Ok(())
    }

    fn deadline(&self) -> Instant {
        Instant::now() + Duration::from_secs_f64(self.max_seconds.min(1e9))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Per-atom rewriting of the core first, then the reductions.
    #[default]
    Auto,
    /// `bc_rCQ` on the query itself.
    Direct,
    /// The reductions to atomic queries.
    Reduction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub prune_subsumed: bool,
    pub min_mode: MinMode,
    /// Individuals per ABox when the per-atom rewriting is verified.
    pub oracle_individuals: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options { prune_subsumed: false, min_mode: MinMode::default(), oracle_individuals: oracle::DEFAULT_MAX_INDIVIDUALS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exhaustion {
    Queries,
    Depth,
    Time,
}

/// A later member containing an earlier one below a chain of roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainWitness {
    pub earlier: ConjQuery,
    pub later: ConjQuery,
    pub path: Vec<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostics {
    pub reason: Exhaustion,
    pub frontier_size: usize,
    pub members: usize,
    pub max_depth: usize,
    pub largest: Option<ConjQuery>,
    pub sigma_hits: Vec<ConjQuery>,
    pub chain: Option<ChainWitness>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RewriteOutcome {
    Rewriting(UnionQuery),
    BudgetExhausted(Box<Diagnostics>),
}

impl RewriteOutcome {
    pub fn rewriting(&self) -> Option<&UnionQuery> {
        match self {
            RewriteOutcome::Rewriting(u) => Some(u),
            RewriteOutcome::BudgetExhausted(_) => None,
        }
    }
}

/// Which pipeline produced a rewriting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Atomic,
    PerAtom,
    TreeReduction,
    RootedReduction,
    Direct,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Atomic => "bc_aq",
            Route::PerAtom => "per-atom",
            Route::TreeReduction => "tq-reduction",
            Route::RootedReduction => "rcq-reduction",
            Route::Direct => "bc_rcq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub outcome: RewriteOutcome,
    pub route: Route,
    /// Members generated over all runs, including abandoned ones.
    pub members: usize,
}

/// The result of applying `ci` at `x`; empty when nothing is removed.
pub fn apply_ci(q: &ConjQuery, ci: &ConceptInclusion, x: &Var) -> Result<BTreeSet<ConjQuery>> {
    if !q.vars().contains(x) {
        return Err(Error::UnknownVariable(x.to_string()));
    }
    let d = &ci.rhs;
    let mut atoms = q.atoms().clone();
    let mut removed = false;
    for a in q.names_at(x) {
        if d.entails_structurally(&Concept::Name(a.clone())) {
            atoms.remove(&Atom::Concept(a.clone(), x.clone()));
            removed = true;
        }
    }
    for (r, y) in q.out_edges(x) {
        if let Some(t) = tree_subquery_at(q, r, x, y) {
            if d.entails_structurally(&t.as_exists()) {
                let gone = remove_subquery(q, &t);
                atoms.retain(|a| gone.atoms().contains(a));
                removed = true;
            }
        }
    }
    if !removed {
        return Ok(BTreeSet::new());
    }
    let mut counter = next_fresh(q, "e");
    add_concept_atoms(&ci.lhs, x, &mut atoms, &mut counter, "e");
    Ok([q.with_atoms(atoms)].into())
}

fn next_fresh(q: &ConjQuery, stem: &str) -> usize {
    let prefix = format!("__{stem}");
    q.vars()
        .iter()
        .filter_map(|v| v.as_str().strip_prefix(&prefix).and_then(|n| n.parse::<usize>().ok()))
        .map(|n| n + 1)
        .max()
        .unwrap_or(0)
}

struct Frontier {
    done: HashSet<String>,
    work: VecDeque<(ConjQuery, usize)>,
    members: Vec<ConjQuery>,
    sigma_hits: Vec<ConjQuery>,
    max_depth: usize,
}

impl Frontier {
    fn insert(&mut self, q: ConjQuery, depth: usize, sigma: &Signature) -> bool {
        let q = q.canonical();
        if !self.done.insert(q.code()) {
            return false;
        }
        if sigma.admits_query(&q) {
            self.sigma_hits.push(q.clone());
        }
        self.max_depth = self.max_depth.max(depth);
        self.members.push(q.clone());
        self.work.push_back((q, depth));
        true
    }

    fn exhausted(self, reason: Exhaustion) -> RewriteOutcome {
        let largest = self.members.iter().max_by_key(|m| (m.len(), std::cmp::Reverse(m.code()))).cloned();
        let chain = largest.as_ref().and_then(|l| chain_witness(&self.members, l));
        RewriteOutcome::BudgetExhausted(Box::new(Diagnostics {
            reason,
            frontier_size: self.work.len(),
            members: self.members.len(),
            max_depth: self.max_depth,
            largest,
            sigma_hits: self.sigma_hits,
            chain,
        }))
    }
}

fn chain_witness(members: &[ConjQuery], later: &ConjQuery) -> Option<ChainWitness> {
    let trees: BTreeMap<String, &ConjQuery> = members
        .iter()
        .filter(|m| m.len() < later.len() && m.arity() == 1 && tree_cq_to_concept(m).is_ok())
        .map(|m| (tree_cq_to_concept(m).expect("filtered").code(), m))
        .collect();
    let mut stack: Vec<(Var, Vec<Symbol>)> = later.answer_vars().iter().map(|v| (v.clone(), Vec::new())).collect();
    let mut seen = BTreeSet::new();
    while let Some((v, path)) = stack.pop() {
        if !seen.insert(v.clone()) {
            continue;
        }
        for (r, y) in later.out_edges(&v) {
            let mut p = path.clone();
            p.push(r.clone());
            if tree_subquery_at(later, r, &v, y).is_some() {
                let c = crate::model::concept_below(later, y);
                if let Some(e) = trees.get(&c.code()) {
                    return Some(ChainWitness { earlier: (*e).clone(), later: later.clone(), path: p });
                }
            }
            stack.push((y.clone(), p));
        }
    }
    None
}

/// Worklist closure: apply every CI of `chain` at every variable, minimize
/// with `holds`, until nothing new appears.
fn closure(
    seeds: Vec<ConjQuery>,
    chain: &TBox,
    holds: &mut dyn FnMut(&ConjQuery) -> bool,
    sigma: &Signature,
    budget: &Budget,
    deadline: Instant,
    generated: &mut usize,
) -> RewriteOutcome {
    let mut f = Frontier {
        done: HashSet::new(),
        work: VecDeque::new(),
        members: Vec::new(),
        sigma_hits: Vec::new(),
        max_depth: 0,
    };
    for s in seeds {
        f.insert(s, 0, sigma);
    }
    *generated += f.members.len();
    while let Some((q, depth)) = f.work.pop_front() {
        for x in q.vars() {
            for ci in chain {
                if Instant::now() >= deadline {
                    f.work.push_front((q, depth));
                    return f.exhausted(Exhaustion::Time);
                }
                let derived = apply_ci(&q, ci, &x).expect("x is a variable of q");
                for d in derived {
                    if !holds(&d) {
                        continue;
                    }
                    let p = minimize_by(&d, &mut *holds);
                    if f.done.contains(&p.canonical().code()) {
                        continue;
                    }
                    if depth + 1 > budget.max_depth {
                        f.work.push_front((q, depth));
                        return f.exhausted(Exhaustion::Depth);
                    }
                    if f.members.len() >= budget.max_queries {
                        f.work.push_front((q, depth));
                        return f.exhausted(Exhaustion::Queries);
                    }
                    f.insert(p, depth + 1, sigma);
                    *generated += 1;
                }
            }
        }
    }
    RewriteOutcome::Rewriting(
        UnionQuery::new(seeds_arity(&f.members), f.sigma_hits).expect("all members share the head").canonical(),
    )
}

fn seeds_arity(members: &[ConjQuery]) -> Vec<Var> {
    members.first().map(|m| m.answer_vars().to_vec()).unwrap_or_default()
}

fn atomic_goal(q: &ConjQuery) -> Result<Concept> {
    if classify(q) != QueryClass::AQ {
        return Err(Error::Unsupported(classify(q)));
    }
    tree_cq_to_concept(q)
}

/// `bc_AQ`: chaining and minimization both with the OMQ's TBox.
pub fn bc_aq(omq: &Omq, budget: &Budget) -> Result<RewriteOutcome> {
    bc_aq_plus(omq, &omq.tbox, budget)
}

/// `bc⁺_AQ`: chaining with the OMQ's TBox, minimization with `t_min`.
pub fn bc_aq_plus(omq: &Omq, t_min: &TBox, budget: &Budget) -> Result<RewriteOutcome> {
    budget.validate()?;
    let goal = atomic_goal(&omq.query)?;
    let reasoner = Reasoner::new(t_min);
    let mut holds = |d: &ConjQuery| tree_cq_to_concept(d).map(|c| reasoner.subsumes(&c, &goal)).unwrap_or(false);
    let mut n = 0;
    Ok(closure(vec![omq.query.clone()], &omq.tbox, &mut holds, &omq.sigma, budget, budget.deadline(), &mut n))
}

/// `bc_rCQ`: seeds are ≺-minimal members below every fork rewriting.
pub fn bc_rcq(omq: &Omq, budget: &Budget) -> Result<RewriteOutcome> {
    budget.validate()?;
    let mut n = 0;
    bc_rcq_inner(omq, budget, budget.deadline(), &mut n)
}

fn bc_rcq_inner(omq: &Omq, budget: &Budget, deadline: Instant, generated: &mut usize) -> Result<RewriteOutcome> {
    let q0 = &omq.query;
    if !crate::structure::is_rooted(q0) {
        return Err(Error::Unsupported(classify(q0)));
    }
    let reasoner = Reasoner::new(&omq.tbox);
    let seeds = fork_rewritings(q0)
        .iter()
        .map(|q_r| minimize_with(&reasoner, q_r, q0))
        .collect::<Result<Vec<_>>>()?;
    let mut holds = |d: &ConjQuery| contained_in_with(&reasoner, d, q0).unwrap_or(false);
    let out = closure(seeds, &omq.tbox, &mut holds, &omq.sigma, budget, deadline, generated);
    Ok(with_head(out, q0.answer_vars()))
}

/// An empty closure result has no head to take the arity from.
fn with_head(out: RewriteOutcome, head: &[Var]) -> RewriteOutcome {
    match out {
        RewriteOutcome::Rewriting(u) if u.is_empty() => {
            RewriteOutcome::Rewriting(UnionQuery::new(head.to_vec(), Vec::new()).expect("empty union"))
        }
        o => o,
    }
}

pub fn rewrite(omq: &Omq, budget: &Budget, strategy: Strategy) -> Result<RewriteOutcome> {
    rewrite_report(omq, budget, strategy, &Options::default()).map(|r| r.outcome)
}

pub fn rewrite_report(omq: &Omq, budget: &Budget, strategy: Strategy, options: &Options) -> Result<Report> {
    budget.validate()?;
    let class = classify(&omq.query);
    if class == QueryClass::Unsupported {
        return Err(Error::Unsupported(class));
    }
    let deadline = budget.deadline();
    let mut generated = 0;
    let (outcome, route) = if class == QueryClass::AQ {
        (bc_aq(omq, budget)?, Route::Atomic)
    } else {
        match strategy {
            Strategy::Direct => (bc_rcq_inner(omq, budget, deadline, &mut generated)?, Route::Direct),
            Strategy::Auto => match per_atom(omq, budget, deadline, options, &mut generated)? {
                Some(u) => (RewriteOutcome::Rewriting(u), Route::PerAtom),
                None => reduction(omq, class, budget, deadline, options, &mut generated)?,
            },
            Strategy::Reduction => reduction(omq, class, budget, deadline, options, &mut generated)?,
        }
    };
    let outcome = match outcome {
        RewriteOutcome::Rewriting(u) if options.prune_subsumed => RewriteOutcome::Rewriting(prune(&u)?),
        o => o,
    };
    Ok(Report { outcome, route, members: generated })
}

fn reduction(
    omq: &Omq,
    class: QueryClass,
    budget: &Budget,
    deadline: Instant,
    options: &Options,
    generated: &mut usize,
) -> Result<(RewriteOutcome, Route)> {
    let seed = || ConjQuery::new(vec![names::root_var()], [Atom::Concept(names::goal(), names::root_var())]);
    if matches!(class, QueryClass::TreeCQ | QueryClass::TqCQ) {
        let red = build_aq_reduction(omq)?;
        let reasoner = Reasoner::new(&red.target.tbox);
        let goal = Concept::Name(names::goal());
        let mut holds = |d: &ConjQuery| tree_cq_to_concept(d).map(|c| reasoner.subsumes(&c, &goal)).unwrap_or(false);
        let out = closure(vec![seed()?], &red.target.tbox, &mut holds, &red.target.sigma, budget, deadline, generated);
        let out = match out {
            RewriteOutcome::Rewriting(u) => RewriteOutcome::Rewriting(red.to_source_ucq(&lift_head(u))?.canonical()),
            o => o,
        };
        return Ok((out, Route::TreeReduction));
    }
    let mut all = Vec::new();
    for red in build_rcq_reductions(omq)? {
        let checker = red.min_checker(options.min_mode);
        let mut holds = |d: &ConjQuery| checker.entails_goal(d);
        let out = closure(vec![seed()?], &red.target.tbox, &mut holds, &red.target.sigma, budget, deadline, generated);
        match out {
            RewriteOutcome::Rewriting(u) => all.extend(red.pi_ucq(&lift_head(u))?.disjuncts().iter().cloned()),
            o => return Ok((o, Route::RootedReduction)),
        }
    }
    let u = UnionQuery::new(omq.query.answer_vars().to_vec(), all)?.canonical();
    Ok((RewriteOutcome::Rewriting(u), Route::RootedReduction))
}

/// Closure results over the reduced goal always have head `x0`.
fn lift_head(u: UnionQuery) -> UnionQuery {
    if u.is_empty() {
        UnionQuery::new(vec![names::root_var()], Vec::new()).expect("empty union")
    } else {
        u
    }
}

/// The per-atom attempt is abandoned early; the reductions are complete
/// without it.
const PER_ATOM_MAX_DEPTH: usize = 8;
const PER_ATOM_TIME_SHARE: u32 = 4;

/// Rewrites every concept atom of the core separately after folding the
/// non-core trees into abbreviation names; `None` when some atom does not
/// close within the budget or the combination fails verification.
fn per_atom(
    omq: &Omq,
    budget: &Budget,
    deadline: Instant,
    options: &Options,
    generated: &mut usize,
) -> Result<Option<UnionQuery>> {
    let leg = Budget { max_depth: budget.max_depth.min(PER_ATOM_MAX_DEPTH), ..*budget };
    let now = Instant::now();
    let leg_deadline = now + deadline.saturating_duration_since(now) / PER_ATOM_TIME_SHARE;
    let mut all = Vec::new();
    for q_r in fork_rewritings(&omq.query) {
        let merged = q_r.merged_vars();
        let core: BTreeSet<Var> = core_of(&q_r).vars.into_iter().filter(|v| !merged.contains(v)).collect();
        let mut tbox = omq.tbox.clone();
        let mut atoms: BTreeSet<Atom> = BTreeSet::new();
        let mut goals: Vec<(Symbol, Var)> = Vec::new();
        for a in q_r.atoms() {
            match a {
                Atom::Concept(n, x) if core.contains(x) => goals.push((n.clone(), x.clone())),
                Atom::Role(r, x, y) if core.contains(x) && !core.contains(y) => {
                    let c = Concept::exists(r.clone(), crate::model::concept_below(&q_r, y));
                    let name = names::abbrev(&c);
                    tbox.insert(ConceptInclusion::new(c, Concept::Name(name.clone())));
                    goals.push((name, x.clone()));
                }
                Atom::Role(_, x, y) if core.contains(x) && core.contains(y) => {
                    atoms.insert(a.clone());
                }
                Atom::Eq(_, _) => {
                    atoms.insert(a.clone());
                }
                _ => {}
            }
        }
        goals.sort();
        goals.dedup();
        let mut choices: Vec<(Var, Vec<ConjQuery>)> = Vec::new();
        for (name, x) in goals {
            let aq = ConjQuery::new(vec![Var::from("x")], [Atom::Concept(name.clone(), Var::from("x"))])?;
            let reasoner = Reasoner::new(&tbox);
            let goal = Concept::Name(name.clone());
            let mut holds =
                |d: &ConjQuery| tree_cq_to_concept(d).map(|c| reasoner.subsumes(&c, &goal)).unwrap_or(false);
            match closure(vec![aq], &tbox, &mut holds, &omq.sigma, &leg, leg_deadline, generated) {
                RewriteOutcome::Rewriting(u) => choices.push((x, u.disjuncts().to_vec())),
                RewriteOutcome::BudgetExhausted(_) => return Ok(None),
            }
        }
        let size = choices.iter().try_fold(1usize, |acc, (_, ds)| acc.checked_mul(ds.len()));
        if size.map(|s| s > budget.max_queries).unwrap_or(true) {
            return Ok(None);
        }
        for pick in product(&choices) {
            let mut body = atoms.clone();
            let mut counter = 0usize;
            for (x, d) in pick {
                let c = tree_cq_to_concept(d)?;
                add_concept_atoms(&c, x, &mut body, &mut counter, "p");
            }
            let p = ConjQuery::new(q_r.answer_vars().to_vec(), body)?;
            if omq.sigma.admits_query(&p) {
                all.push(p);
            }
        }
    }
    let u = UnionQuery::new(omq.query.answer_vars().to_vec(), all)?.canonical();
    match oracle::check_rewriting(omq, &u, options.oracle_individuals) {
        Ok(v) if v.is_ok() => Ok(Some(u)),
        _ => Ok(None),
    }
}

fn product(choices: &[(Var, Vec<ConjQuery>)]) -> Vec<Vec<(&Var, &ConjQuery)>> {
    let mut out: Vec<Vec<(&Var, &ConjQuery)>> = vec![Vec::new()];
    for (x, ds) in choices {
        out = out
            .into_iter()
            .flat_map(|pre| {
                ds.iter().map(move |d| {
                    let mut p = pre.clone();
                    p.push((x, d));
                    p
                })
            })
            .collect();
    }
    out
}

/// Drops disjuncts contained in an earlier or smaller one. Containment is
/// plain: the result is evaluated over the data alone, so the TBox may not
/// be used here.
pub fn prune(u: &UnionQuery) -> Result<UnionQuery> {
    let reasoner = Reasoner::new(&TBox::default());
    let ds = u.canonical().disjuncts().to_vec();
    let mut keep = Vec::new();
    for (i, p) in ds.iter().enumerate() {
        let mut redundant = false;
        for (j, other) in ds.iter().enumerate() {
            if i == j || !contained_in_with(&reasoner, p, other)? {
                continue;
            }
            // mutual containment keeps the first
            if j < i || !contained_in_with(&reasoner, other, p)? {
                redundant = true;
                break;
            }
        }
        if !redundant {
            keep.push(p.clone());
        }
    }
    UnionQuery::new(u.answer_vars().to_vec(), keep)
}
