//! Domain types: EL concepts, TBoxes, ABoxes, conjunctive queries, signatures
//! and ontology-mediated queries, together with the canonical encodings used
//! for deduplication.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Marker that every generated (fresh) name contains. User input never does.
pub const RESERVED_MARKER: &str = "__";

/// An interned name. Used for concept names, role names, individuals and
/// variables alike.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(s: &str) -> Self {
        Symbol(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Fresh names introduced by the reductions carry the reserved marker.
    pub fn is_reserved(&self) -> bool {
        self.0.contains(RESERVED_MARKER)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

impl From<String> for Symbol {
    fn from(s: String) -> Self {
        Symbol(Arc::from(s))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Var = Symbol;

/// An EL concept. Conjunctions are kept flat, sorted by canonical code and
/// free of duplicates and of `Top`; use the constructors to build values.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Concept {
    Top,
    Name(Symbol),
    And(Vec<Concept>),
    Exists(Symbol, Box<Concept>),
}

impl Concept {
    pub fn top() -> Self {
        Concept::Top
    }

    pub fn name(n: impl Into<Symbol>) -> Self {
        Concept::Name(n.into())
    }

    pub fn exists(role: impl Into<Symbol>, filler: Concept) -> Self {
        Concept::Exists(role.into(), Box::new(filler))
    }

    pub fn and<I: IntoIterator<Item = Concept>>(parts: I) -> Self {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Concept::Top => {}
                Concept::And(cs) => flat.extend(cs),
                c => flat.push(c),
            }
        }
        let mut keyed: Vec<(String, Concept)> = flat.into_iter().map(|c| (c.code(), c)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        let mut flat: Vec<Concept> = keyed.into_iter().map(|(_, c)| c).collect();
        match flat.len() {
            0 => Concept::Top,
            1 => flat.pop().unwrap(),
            _ => Concept::And(flat),
        }
    }

    /// Top-level conjuncts; empty for `Top`.
    pub fn conjuncts(&self) -> &[Concept] {
        match self {
            Concept::Top => &[],
            Concept::And(cs) => cs,
            c => std::slice::from_ref(c),
        }
    }

    pub fn top_names(&self) -> impl Iterator<Item = &Symbol> {
        self.conjuncts().iter().filter_map(|c| match c {
            Concept::Name(n) => Some(n),
            _ => None,
        })
    }

    pub fn top_exists(&self) -> impl Iterator<Item = (&Symbol, &Concept)> {
        self.conjuncts().iter().filter_map(|c| match c {
            Concept::Exists(r, f) => Some((r, f.as_ref())),
            _ => None,
        })
    }

    /// Deterministic string code; equal codes iff equal concepts (modulo
    /// conjunct order, which the constructors normalize).
    pub fn code(&self) -> String {
        let mut s = String::new();
        self.write_code(&mut s);
        s
    }

    fn write_code(&self, out: &mut String) {
        match self {
            Concept::Top => out.push_str("Top"),
            Concept::Name(n) => out.push_str(n.as_str()),
            Concept::And(cs) => {
                out.push_str("and(");
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    c.write_code(out);
                }
                out.push(')');
            }
            Concept::Exists(r, c) => {
                out.push_str("some(");
                out.push_str(r.as_str());
                out.push(',');
                c.write_code(out);
                out.push(')');
            }
        }
    }

    /// Number of nodes of the concept viewed as a tree (variables of
    /// the corresponding tree CQ).
    pub fn node_count(&self) -> usize {
        1 + self.top_exists().map(|(_, f)| f.node_count()).sum::<usize>()
    }

    pub fn role_depth(&self) -> usize {
        self.top_exists().map(|(_, f)| 1 + f.role_depth()).max().unwrap_or(0)
    }

    pub fn collect_names(&self, concepts: &mut BTreeSet<Symbol>, roles: &mut BTreeSet<Symbol>) {
        match self {
            Concept::Top => {}
            Concept::Name(n) => {
                concepts.insert(n.clone());
            }
            Concept::And(cs) => cs.iter().for_each(|c| c.collect_names(concepts, roles)),
            Concept::Exists(r, f) => {
                roles.insert(r.clone());
                f.collect_names(concepts, roles);
            }
        }
    }

    /// All subconcepts, including `self`.
    pub fn subconcepts(&self, out: &mut BTreeSet<Concept>) {
        out.insert(self.clone());
        match self {
            Concept::And(cs) => cs.iter().for_each(|c| c.subconcepts(out)),
            Concept::Exists(_, f) => f.subconcepts(out),
            _ => {}
        }
    }

    /// Structural subsumption `⊨ self ⊑ other` (empty TBox): a homomorphism
    /// from the tree of `other` into the tree of `self` fixing the root.
    pub fn entails_structurally(&self, other: &Concept) -> bool {
        other.conjuncts().iter().all(|g| match g {
            Concept::Name(n) => self.top_names().any(|m| m == n),
            Concept::Exists(r, gf) => self
                .top_exists()
                .any(|(s, sf)| s == r && sf.entails_structurally(gf)),
            _ => unreachable!("normalized conjuncts"),
        })
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl fmt::Debug for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptInclusion {
    pub lhs: Concept,
    pub rhs: Concept,
}

impl ConceptInclusion {
    pub fn new(lhs: Concept, rhs: Concept) -> Self {
        ConceptInclusion { lhs, rhs }
    }
}

impl fmt::Display for ConceptInclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} SubClassOf {}", self.lhs, self.rhs)
    }
}

impl fmt::Debug for ConceptInclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct TBox {
    inclusions: BTreeSet<ConceptInclusion>,
}

impl TBox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_inclusions<I: IntoIterator<Item = ConceptInclusion>>(cis: I) -> Self {
        TBox { inclusions: cis.into_iter().collect() }
    }

    pub fn insert(&mut self, ci: ConceptInclusion) -> bool {
        self.inclusions.insert(ci)
    }

    pub fn extend<I: IntoIterator<Item = ConceptInclusion>>(&mut self, cis: I) {
        self.inclusions.extend(cis)
    }

    pub fn contains(&self, ci: &ConceptInclusion) -> bool {
        self.inclusions.contains(ci)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConceptInclusion> {
        self.inclusions.iter()
    }

    pub fn len(&self) -> usize {
        self.inclusions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inclusions.is_empty()
    }

    pub fn is_superset(&self, other: &TBox) -> bool {
        self.inclusions.is_superset(&other.inclusions)
    }

    pub fn concept_names(&self) -> BTreeSet<Symbol> {
        self.symbols().0
    }

    pub fn role_names(&self) -> BTreeSet<Symbol> {
        self.symbols().1
    }

    pub fn symbols(&self) -> (BTreeSet<Symbol>, BTreeSet<Symbol>) {
        let mut cs = BTreeSet::new();
        let mut rs = BTreeSet::new();
        for ci in &self.inclusions {
            ci.lhs.collect_names(&mut cs, &mut rs);
            ci.rhs.collect_names(&mut cs, &mut rs);
        }
        (cs, rs)
    }

    /// Concepts occurring on a left-hand side, closed under subconcepts.
    pub fn lhs_subconcepts(&self) -> BTreeSet<Concept> {
        let mut out = BTreeSet::new();
        for ci in &self.inclusions {
            ci.lhs.subconcepts(&mut out);
        }
        out
    }
}

impl fmt::Debug for TBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.inclusions.iter()).finish()
    }
}

impl<'a> IntoIterator for &'a TBox {
    type Item = &'a ConceptInclusion;
    type IntoIter = std::collections::btree_set::Iter<'a, ConceptInclusion>;
    fn into_iter(self) -> Self::IntoIter {
        self.inclusions.iter()
    }
}

/// Concept and role assertions over a declared individual universe.
#[derive(Clone, Default, PartialEq, Eq, Hash, Debug)]
pub struct Abox {
    individuals: BTreeSet<Symbol>,
    concept_assertions: BTreeSet<(Symbol, Symbol)>,
    role_assertions: BTreeSet<(Symbol, Symbol, Symbol)>,
}

impl Abox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_individual(&mut self, a: impl Into<Symbol>) {
        self.individuals.insert(a.into());
    }

    pub fn add_concept(&mut self, name: impl Into<Symbol>, a: impl Into<Symbol>) -> bool {
        let a = a.into();
        self.individuals.insert(a.clone());
        self.concept_assertions.insert((name.into(), a))
    }

    pub fn add_role(&mut self, role: impl Into<Symbol>, a: impl Into<Symbol>, b: impl Into<Symbol>) -> bool {
        let (a, b) = (a.into(), b.into());
        self.individuals.insert(a.clone());
        self.individuals.insert(b.clone());
        self.role_assertions.insert((role.into(), a, b))
    }

    pub fn individuals(&self) -> &BTreeSet<Symbol> {
        &self.individuals
    }

    pub fn concept_assertions(&self) -> &BTreeSet<(Symbol, Symbol)> {
        &self.concept_assertions
    }

    pub fn role_assertions(&self) -> &BTreeSet<(Symbol, Symbol, Symbol)> {
        &self.role_assertions
    }

    pub fn has_concept(&self, name: &Symbol, a: &Symbol) -> bool {
        self.concept_assertions.contains(&(name.clone(), a.clone()))
    }

    pub fn has_role(&self, role: &Symbol, a: &Symbol, b: &Symbol) -> bool {
        self.role_assertions.contains(&(role.clone(), a.clone(), b.clone()))
    }

    pub fn len(&self) -> usize {
        self.concept_assertions.len() + self.role_assertions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_superset(&self, other: &Abox) -> bool {
        self.concept_assertions.is_superset(&other.concept_assertions)
            && self.role_assertions.is_superset(&other.role_assertions)
    }
}

impl fmt::Display for Abox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, a) in &self.concept_assertions {
            writeln!(f, "{c}({a})")?;
        }
        for (r, a, b) in &self.role_assertions {
            writeln!(f, "{r}({a},{b})")?;
        }
        Ok(())
    }
}

/// An ABox signature. With `full` set, every non-reserved symbol is admitted
/// and the name sets are ignored.
#[derive(Clone, Default, PartialEq, Eq, Hash, Debug)]
pub struct Signature {
    pub concept_names: BTreeSet<Symbol>,
    pub role_names: BTreeSet<Symbol>,
    pub full: bool,
}

impl Signature {
    pub fn full() -> Self {
        Signature { full: true, ..Default::default() }
    }

    pub fn of<C, R>(concepts: C, roles: R) -> Self
    where
        C: IntoIterator,
        C::Item: Into<Symbol>,
        R: IntoIterator,
        R::Item: Into<Symbol>,
    {
        Signature {
            concept_names: concepts.into_iter().map(Into::into).collect(),
            role_names: roles.into_iter().map(Into::into).collect(),
            full: false,
        }
    }

    pub fn admits_concept(&self, name: &Symbol) -> bool {
        if self.full {
            !name.is_reserved()
        } else {
            self.concept_names.contains(name)
        }
    }

    pub fn admits_role(&self, name: &Symbol) -> bool {
        if self.full {
            !name.is_reserved()
        } else {
            self.role_names.contains(name)
        }
    }

    pub fn admits_query(&self, q: &ConjQuery) -> bool {
        q.atoms().iter().all(|a| match a {
            Atom::Concept(n, _) => self.admits_concept(n),
            Atom::Role(r, _, _) => self.admits_role(r),
            Atom::Eq(_, _) => true,
        })
    }

    /// The finite signature of admitted symbols among the given ones.
    pub fn restrict_to(&self, concepts: &BTreeSet<Symbol>, roles: &BTreeSet<Symbol>) -> Signature {
        Signature {
            concept_names: concepts.iter().filter(|c| self.admits_concept(c)).cloned().collect(),
            role_names: roles.iter().filter(|r| self.admits_role(r)).cloned().collect(),
            full: false,
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Concept(Symbol, Var),
    Role(Symbol, Var, Var),
    /// `Eq(kept, merged)`: `merged` occurs in no other atom.
    Eq(Var, Var),
}

impl Atom {
    pub fn concept(name: impl Into<Symbol>, v: impl Into<Symbol>) -> Self {
        Atom::Concept(name.into(), v.into())
    }

    pub fn role(name: impl Into<Symbol>, a: impl Into<Symbol>, b: impl Into<Symbol>) -> Self {
        Atom::Role(name.into(), a.into(), b.into())
    }

    pub fn eq(a: impl Into<Symbol>, b: impl Into<Symbol>) -> Self {
        Atom::Eq(a.into(), b.into())
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        let (a, b) = match self {
            Atom::Concept(_, v) => (v, None),
            Atom::Role(_, x, y) | Atom::Eq(x, y) => (x, Some(y)),
        };
        std::iter::once(a).chain(b)
    }

    fn renamed(&self, f: &impl Fn(&Var) -> Var) -> Atom {
        match self {
            Atom::Concept(n, v) => Atom::Concept(n.clone(), f(v)),
            Atom::Role(r, x, y) => Atom::Role(r.clone(), f(x), f(y)),
            Atom::Eq(x, y) => Atom::Eq(f(x), f(y)),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Concept(n, v) => write!(f, "{n}({v})"),
            Atom::Role(r, x, y) => write!(f, "{r}({x},{y})"),
            Atom::Eq(x, y) => write!(f, "{x} = {y}"),
        }
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A conjunctive query `q(x̄) = ∃ȳ φ`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConjQuery {
    answer_vars: Vec<Var>,
    atoms: BTreeSet<Atom>,
}

impl ConjQuery {
    /// Builds a query, identifying variables so that every equality atom
    /// `x = y` has `y` occurring nowhere else. Rejects equalities that
    /// mention quantified variables and repeated answer variables.
    pub fn new<I: IntoIterator<Item = Atom>>(answer_vars: Vec<Var>, atoms: I) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in &answer_vars {
            if !seen.insert(v.clone()) {
                return Err(Error::InvalidQuery(format!("answer variable {v} repeated")));
            }
        }
        let mut plain = BTreeSet::new();
        let mut eqs = Vec::new();
        for a in atoms {
            match a {
                Atom::Eq(x, y) => {
                    for v in [&x, &y] {
                        if !seen.contains(v) {
                            return Err(Error::InvalidQuery(format!(
                                "equality on quantified variable {v}"
                            )));
                        }
                    }
                    if x != y {
                        eqs.push((x, y));
                    }
                }
                a => {
                    plain.insert(a);
                }
            }
        }
        if eqs.is_empty() {
            return Ok(ConjQuery { answer_vars, atoms: plain });
        }
        // union-find over answer variables; representative = earliest in head
        let pos: BTreeMap<&Var, usize> = answer_vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let mut parent: Vec<usize> = (0..answer_vars.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for (x, y) in &eqs {
            let (a, b) = (find(&mut parent, pos[x]), find(&mut parent, pos[y]));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
        }
        let rep: Vec<usize> = (0..answer_vars.len()).map(|i| find(&mut parent, i)).collect();
        let subst: BTreeMap<Var, Var> = answer_vars
            .iter()
            .enumerate()
            .filter(|(i, _)| rep[*i] != *i)
            .map(|(i, v)| (v.clone(), answer_vars[rep[i]].clone()))
            .collect();
        let f = |v: &Var| subst.get(v).cloned().unwrap_or_else(|| v.clone());
        let mut atoms: BTreeSet<Atom> = plain.iter().map(|a| a.renamed(&f)).collect();
        for (merged, kept) in &subst {
            atoms.insert(Atom::Eq(kept.clone(), merged.clone()));
        }
        Ok(ConjQuery { answer_vars, atoms })
    }

    /// Constructs a query whose atoms are already known to satisfy the
    /// equality invariant.
    pub(crate) fn from_parts(answer_vars: Vec<Var>, atoms: BTreeSet<Atom>) -> Self {
        ConjQuery { answer_vars, atoms }
    }

    pub fn answer_vars(&self) -> &[Var] {
        &self.answer_vars
    }

    pub fn arity(&self) -> usize {
        self.answer_vars.len()
    }

    pub fn atoms(&self) -> &BTreeSet<Atom> {
        &self.atoms
    }

    pub fn is_answer_var(&self, v: &Var) -> bool {
        self.answer_vars.contains(v)
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut vs: BTreeSet<Var> = self.answer_vars.iter().cloned().collect();
        for a in &self.atoms {
            vs.extend(a.vars().cloned());
        }
        vs
    }

    pub fn quantified_vars(&self) -> BTreeSet<Var> {
        let mut vs = self.vars();
        for v in &self.answer_vars {
            vs.remove(v);
        }
        vs
    }

    pub fn concept_atoms(&self) -> impl Iterator<Item = (&Symbol, &Var)> {
        self.atoms.iter().filter_map(|a| match a {
            Atom::Concept(n, v) => Some((n, v)),
            _ => None,
        })
    }

    pub fn role_atoms(&self) -> impl Iterator<Item = (&Symbol, &Var, &Var)> {
        self.atoms.iter().filter_map(|a| match a {
            Atom::Role(r, x, y) => Some((r, x, y)),
            _ => None,
        })
    }

    pub fn eq_atoms(&self) -> impl Iterator<Item = (&Var, &Var)> {
        self.atoms.iter().filter_map(|a| match a {
            Atom::Eq(x, y) => Some((x, y)),
            _ => None,
        })
    }

    pub fn has_eq(&self) -> bool {
        self.eq_atoms().next().is_some()
    }

    /// Variables that were merged away by an equality atom.
    pub fn merged_vars(&self) -> BTreeSet<Var> {
        self.eq_atoms().map(|(_, y)| y.clone()).collect()
    }

    pub fn names_at<'a>(&'a self, v: &'a Var) -> impl Iterator<Item = &'a Symbol> + 'a {
        self.concept_atoms().filter(move |(_, w)| *w == v).map(|(n, _)| n)
    }

    pub fn out_edges<'a>(&'a self, v: &'a Var) -> impl Iterator<Item = (&'a Symbol, &'a Var)> + 'a {
        self.role_atoms().filter(move |(_, x, _)| *x == v).map(|(r, _, y)| (r, y))
    }

    pub fn in_edges<'a>(&'a self, v: &'a Var) -> impl Iterator<Item = (&'a Symbol, &'a Var)> + 'a {
        self.role_atoms().filter(move |(_, _, y)| *y == v).map(|(r, x, _)| (r, x))
    }

    pub fn symbols(&self) -> (BTreeSet<Symbol>, BTreeSet<Symbol>) {
        let cs = self.concept_atoms().map(|(n, _)| n.clone()).collect();
        let rs = self.role_atoms().map(|(r, _, _)| r.clone()).collect();
        (cs, rs)
    }

    pub fn with_atoms(&self, atoms: BTreeSet<Atom>) -> ConjQuery {
        ConjQuery { answer_vars: self.answer_vars.clone(), atoms }
    }

    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> ConjQuery {
        let f = |v: &Var| map.get(v).cloned().unwrap_or_else(|| v.clone());
        ConjQuery {
            answer_vars: self.answer_vars.iter().map(f).collect(),
            atoms: self.atoms.iter().map(|a| a.renamed(&f)).collect(),
        }
    }

    /// A variable name not used in this query, derived from `stem`.
    pub fn fresh_var(&self, stem: &str, taken: &mut BTreeSet<Var>) -> Var {
        if taken.is_empty() {
            *taken = self.vars();
        }
        let mut i = taken.len();
        loop {
            let v = Var::from(format!("__{stem}{i}"));
            if taken.insert(v.clone()) {
                return v;
            }
            i += 1;
        }
    }

    /// The canonical code: equal codes iff the queries are isomorphic via a
    /// renaming of quantified variables (answer variables are positional).
    pub fn code(&self) -> String {
        canonical::analyze(self).code
    }

    /// Isomorphic copy with quantified variables renamed canonically.
    pub fn canonical(&self) -> ConjQuery {
        let a = canonical::analyze(self);
        self.rename(&a.renaming)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

impl fmt::Display for ConjQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::io::serialize_cq(self))
    }
}

impl fmt::Debug for ConjQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A disjunction of CQs sharing the same answer variables.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct UnionQuery {
    answer_vars: Vec<Var>,
    disjuncts: Vec<ConjQuery>,
}

impl UnionQuery {
    pub fn new(answer_vars: Vec<Var>, disjuncts: Vec<ConjQuery>) -> Result<Self> {
        for d in &disjuncts {
            if d.answer_vars() != answer_vars.as_slice() {
                return Err(Error::Arity { expected: answer_vars.len(), got: d.arity() });
            }
        }
        Ok(UnionQuery { answer_vars, disjuncts })
    }

    pub fn single(q: ConjQuery) -> Self {
        UnionQuery { answer_vars: q.answer_vars().to_vec(), disjuncts: vec![q] }
    }

    pub fn answer_vars(&self) -> &[Var] {
        &self.answer_vars
    }

    pub fn arity(&self) -> usize {
        self.answer_vars.len()
    }

    pub fn disjuncts(&self) -> &[ConjQuery] {
        &self.disjuncts
    }

    pub fn len(&self) -> usize {
        self.disjuncts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disjuncts.is_empty()
    }

    /// Sorted by canonical code, duplicates removed.
    pub fn canonical(&self) -> UnionQuery {
        let mut keyed: Vec<(String, ConjQuery)> =
            self.disjuncts.iter().map(|d| (d.code(), d.canonical())).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        UnionQuery {
            answer_vars: self.answer_vars.clone(),
            disjuncts: keyed.into_iter().map(|(_, d)| d).collect(),
        }
    }

    pub fn symbols(&self) -> (BTreeSet<Symbol>, BTreeSet<Symbol>) {
        let mut cs = BTreeSet::new();
        let mut rs = BTreeSet::new();
        for d in &self.disjuncts {
            let (c, r) = d.symbols();
            cs.extend(c);
            rs.extend(r);
        }
        (cs, rs)
    }
}

impl fmt::Display for UnionQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::io::serialize_ucq(self))
    }
}

impl fmt::Debug for UnionQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// An ontology-mediated query `(T, Σ, q)`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Omq {
    pub tbox: TBox,
    pub sigma: Signature,
    pub query: ConjQuery,
}

impl Omq {
    pub fn new(tbox: TBox, sigma: Signature, query: ConjQuery) -> Result<Self> {
        if query.has_eq() {
            return Err(Error::InvalidQuery("equality atoms are not allowed in an OMQ".into()));
        }
        Ok(Omq { tbox, sigma, query })
    }

    /// Symbols of `T ∪ q`.
    pub fn symbols(&self) -> (BTreeSet<Symbol>, BTreeSet<Symbol>) {
        let (mut cs, mut rs) = self.tbox.symbols();
        let (qc, qr) = self.query.symbols();
        cs.extend(qc);
        rs.extend(qr);
        (cs, rs)
    }

    /// Σ restricted to the symbols that can influence answers.
    pub fn finite_sigma(&self) -> Signature {
        let (cs, rs) = self.symbols();
        self.sigma.restrict_to(&cs, &rs)
    }
}

/// Views a concept as a tree-shaped CQ with `root` as its only answer variable.
pub fn concept_to_tree_cq(c: &Concept, root: impl Into<Var>) -> ConjQuery {
    let root = root.into();
    let mut atoms = BTreeSet::new();
    let mut counter = 0usize;
    add_concept_atoms(c, &root, &mut atoms, &mut counter, "y");
    ConjQuery::from_parts(vec![root], atoms)
}

/// Adds the atoms of `c` rooted at `at`, naming new variables `__<stem><n>`.
pub(crate) fn add_concept_atoms(
    c: &Concept,
    at: &Var,
    atoms: &mut BTreeSet<Atom>,
    counter: &mut usize,
    stem: &str,
) {
    for n in c.top_names() {
        atoms.insert(Atom::Concept(n.clone(), at.clone()));
    }
    for (r, f) in c.top_exists() {
        let y = Var::from(format!("__{stem}{counter}"));
        *counter += 1;
        atoms.insert(Atom::Role(r.clone(), at.clone(), y.clone()));
        add_concept_atoms(f, &y, atoms, counter, stem);
    }
}

/// Reads a tree-shaped CQ (root = its single answer variable) as a concept.
pub fn tree_cq_to_concept(q: &ConjQuery) -> Result<Concept> {
    if q.arity() != 1 {
        return Err(Error::NotTreeShaped(format!("expected one answer variable, got {}", q.arity())));
    }
    if q.has_eq() {
        return Err(Error::NotTreeShaped("equality atom".into()));
    }
    let root = &q.answer_vars()[0];
    let vars = q.vars();
    let mut parent_count: BTreeMap<&Var, usize> = BTreeMap::new();
    for (_, _, y) in q.role_atoms() {
        *parent_count.entry(y).or_default() += 1;
    }
    if parent_count.get(root).copied().unwrap_or(0) > 0 {
        return Err(Error::NotTreeShaped("root has an incoming edge".into()));
    }
    for v in &vars {
        if v != root && parent_count.get(v).copied().unwrap_or(0) != 1 {
            return Err(Error::NotTreeShaped(format!("variable {v} does not have exactly one parent")));
        }
    }
    // every variable reachable from the root (parents are unique, so no cycles then)
    let mut seen = BTreeSet::new();
    let mut stack = vec![root.clone()];
    while let Some(v) = stack.pop() {
        if seen.insert(v.clone()) {
            stack.extend(q.out_edges(&v).map(|(_, y)| y.clone()));
        }
    }
    if seen.len() != vars.len() {
        return Err(Error::NotTreeShaped("not connected to the root".into()));
    }
    Ok(concept_below(q, root))
}

/// The concept of the part of `q` reachable from `v`; the caller guarantees
/// that this part is a directed tree.
pub(crate) fn concept_below(q: &ConjQuery, v: &Var) -> Concept {
    let names = q.names_at(v).map(|n| Concept::Name(n.clone()));
    let succ: Vec<Concept> = q
        .out_edges(v)
        .map(|(r, y)| Concept::exists(r.clone(), concept_below(q, y)))
        .collect();
    Concept::and(names.chain(succ))
}

/// Views a CQ as an ABox: equality atoms are dropped and every variable
/// becomes a distinct individual `a_<var>`.
pub fn cq_as_abox(q: &ConjQuery) -> (Abox, BTreeMap<Var, Symbol>) {
    let map: BTreeMap<Var, Symbol> =
        q.vars().into_iter().map(|v| (v.clone(), Symbol::from(format!("a_{v}")))).collect();
    let mut abox = Abox::new();
    for ind in map.values() {
        abox.add_individual(ind.clone());
    }
    for a in q.atoms() {
        match a {
            Atom::Concept(n, v) => {
                abox.add_concept(n.clone(), map[v].clone());
            }
            Atom::Role(r, x, y) => {
                abox.add_role(r.clone(), map[x].clone(), map[y].clone());
            }
            Atom::Eq(_, _) => {}
        }
    }
    (abox, map)
}

pub(crate) mod canonical {
    use super::*;

    pub struct Analysis {
        pub code: String,
        pub renaming: BTreeMap<Var, Var>,
    }

    /// Least variable set containing the answer variables such that deleting
    /// the role atoms inside it leaves directed trees, each rooted at a
    /// member of the set and containing no other member.
    pub fn core_vars(q: &ConjQuery) -> BTreeSet<Var> {
        let mut core: BTreeSet<Var> = q.answer_vars().iter().cloned().collect();
        let vars = q.vars();
        loop {
            let mut added = false;
            for v in &vars {
                if core.contains(v) {
                    continue;
                }
                let indeg = q.in_edges(v).count();
                let into_core = q.out_edges(v).any(|(_, y)| core.contains(y) || y == v);
                if indeg != 1 || into_core {
                    core.insert(v.clone());
                    added = true;
                }
            }
            if added {
                continue;
            }
            // components not hanging off the core (only in non-rooted queries)
            let mut reached = core.clone();
            let mut stack: Vec<Var> = core.iter().cloned().collect();
            while let Some(v) = stack.pop() {
                for (_, y) in q.out_edges(&v) {
                    if reached.insert(y.clone()) {
                        stack.push(y.clone());
                    }
                }
            }
            let unreached: Vec<Var> = vars.iter().filter(|v| !reached.contains(*v)).cloned().collect();
            if unreached.is_empty() {
                break;
            }
            core.extend(unreached);
        }
        core
    }

    pub fn analyze(q: &ConjQuery) -> Analysis {
        let core = core_vars(q);
        let answers = q.answer_vars();
        let quantified_core: Vec<Var> =
            core.iter().filter(|v| !q.is_answer_var(v)).cloned().collect();
        let tree_code = |v: &Var| -> String { tree_at(q, &core, v).code() };
        let labels: BTreeMap<Var, String> = core.iter().map(|v| (v.clone(), tree_code(v))).collect();

        // quantified core variables: sort by label, permute within equal labels
        let mut groups: BTreeMap<&String, Vec<Var>> = BTreeMap::new();
        for v in &quantified_core {
            groups.entry(&labels[v]).or_default().push(v.clone());
        }
        let groups: Vec<Vec<Var>> = groups.into_values().collect();

        let mut best: Option<(String, Vec<Var>)> = None;
        let mut order: Vec<Var> = answers.to_vec();
        permute_groups(&groups, 0, &mut order, &mut |ord| {
            let code = encode(q, &core, &labels, ord);
            if best.as_ref().map(|(b, _)| code < *b).unwrap_or(true) {
                best = Some((code, ord.to_vec()));
            }
        });
        let (code, ord) = best.expect("at least one ordering");

        let mut renaming = BTreeMap::new();
        let mut counter = 0usize;
        for (i, v) in ord.iter().enumerate() {
            if i >= answers.len() {
                renaming.insert(v.clone(), Var::from(format!("__y{counter}")));
                counter += 1;
            }
        }
        for v in &ord {
            name_tree(q, &core, v, &mut renaming, &mut counter);
        }
        Analysis { code, renaming }
    }

    fn permute_groups(groups: &[Vec<Var>], gi: usize, order: &mut Vec<Var>, visit: &mut impl FnMut(&[Var])) {
        if gi == groups.len() {
            visit(order);
            return;
        }
        let mut g = groups[gi].clone();
        permute(&mut g, 0, &mut |perm| {
            let base = order.len();
            order.extend(perm.iter().cloned());
            permute_groups(groups, gi + 1, order, visit);
            order.truncate(base);
        });
    }

    fn permute(items: &mut Vec<Var>, k: usize, visit: &mut impl FnMut(&[Var])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }

    fn encode(q: &ConjQuery, core: &BTreeSet<Var>, labels: &BTreeMap<Var, String>, ord: &[Var]) -> String {
        let idx: BTreeMap<&Var, usize> = ord.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let mut s = format!("{}|", q.arity());
        for v in ord {
            s.push_str(&labels[v]);
            s.push(';');
        }
        let mut edges: Vec<(usize, usize, &str)> = q
            .role_atoms()
            .filter(|(_, x, y)| core.contains(*x) && core.contains(*y))
            .map(|(r, x, y)| (idx[x], idx[y], r.as_str()))
            .collect();
        edges.sort();
        for (i, j, r) in edges {
            s.push_str(&format!("|{r}:{i}:{j}"));
        }
        let mut eqs: Vec<(usize, usize)> = q.eq_atoms().map(|(x, y)| (idx[x], idx[y])).collect();
        eqs.sort();
        for (i, j) in eqs {
            s.push_str(&format!("|{i}={j}"));
        }
        s
    }

    /// Concept of the tree hanging off core variable `v`.
    pub fn tree_at(q: &ConjQuery, core: &BTreeSet<Var>, v: &Var) -> Concept {
        let names = q.names_at(v).map(|n| Concept::Name(n.clone()));
        let succ: Vec<Concept> = q
            .out_edges(v)
            .filter(|(_, y)| !core.contains(*y))
            .map(|(r, y)| Concept::exists(r.clone(), tree_at(q, core, y)))
            .collect();
        Concept::and(names.chain(succ))
    }

    fn name_tree(
        q: &ConjQuery,
        core: &BTreeSet<Var>,
        v: &Var,
        renaming: &mut BTreeMap<Var, Var>,
        counter: &mut usize,
    ) {
        let mut kids: Vec<(String, Var)> = q
            .out_edges(v)
            .filter(|(_, y)| !core.contains(*y))
            .map(|(r, y)| (format!("{r}|{}", tree_at(q, core, y).code()), y.clone()))
            .collect();
        kids.sort();
        for (_, y) in kids {
            renaming.insert(y.clone(), Var::from(format!("__y{counter}")));
            *counter += 1;
            name_tree(q, core, &y, renaming, counter);
        }
    }
}
