//! Rendering of rewritings as non-recursive Datalog and as SQL.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::io::readable;
use crate::model::{Abox, Atom, ConjQuery, Signature, Symbol, UnionQuery, Var};

/// Predicate collecting the individuals, for answer variables without atoms.
pub const ADOM: &str = "adom";

/// One rule per disjunct; equal answer variables share a head position name.
pub fn emit_datalog(u: &UnionQuery, head: &str) -> String {
    let (cs, rs) = u.symbols();
    emit_datalog_with(u, head, &Signature::of(cs, rs))
}

/// As `emit_datalog`, with `adom` defined over the given signature.
pub fn emit_datalog_with(u: &UnionQuery, head: &str, sigma: &Signature) -> String {
    let u = u.canonical();
    let mut out = String::new();
    if u.is_empty() {
        out.push_str("% empty rewriting: no rules\n");
        return out;
    }
    let mut uses_adom = false;
    for d in u.disjuncts() {
        let d = readable(d);
        let rep: BTreeMap<&Var, &Var> = d.eq_atoms().map(|(x, y)| (y, x)).collect();
        let args: Vec<&str> = d.answer_vars().iter().map(|v| rep.get(v).copied().unwrap_or(v).as_str()).collect();
        let mut body: Vec<String> = d.atoms().iter().filter(|a| !matches!(a, Atom::Eq(..))).map(|a| a.to_string()).collect();
        let bound: BTreeSet<&Var> = d.atoms().iter().filter(|a| !matches!(a, Atom::Eq(..))).flat_map(|a| a.vars()).collect();
        let mut isolated: Vec<&str> = args.iter().copied().filter(|v| !bound.contains(&Var::from(*v))).collect();
        isolated.dedup();
        for v in isolated {
            uses_adom = true;
            body.push(format!("{ADOM}({v})"));
        }
        let _ = writeln!(out, "{head}({}) :- {}.", args.join(","), body.join(", "));
    }
    if uses_adom {
        for c in &sigma.concept_names {
            let _ = writeln!(out, "{ADOM}(x) :- {c}(x).");
        }
        for r in &sigma.role_names {
            let _ = writeln!(out, "{ADOM}(x) :- {r}(x,y).");
            let _ = writeln!(out, "{ADOM}(y) :- {r}(x,y).");
        }
    }
    out
}

/// Unary tables per concept name (column `ind`), binary tables per role
/// name (columns `src`, `dst`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RelSchema {
    pub concepts: BTreeSet<Symbol>,
    pub roles: BTreeSet<Symbol>,
}

impl RelSchema {
    pub fn from_signature(sigma: &Signature) -> Self {
        RelSchema { concepts: sigma.concept_names.clone(), roles: sigma.role_names.clone() }
    }

    pub fn for_ucq(u: &UnionQuery) -> Self {
        let (concepts, roles) = u.symbols();
        RelSchema { concepts, roles }
    }

    pub fn for_abox(a: &Abox) -> Self {
        RelSchema {
            concepts: a.concept_assertions().iter().map(|(c, _)| c.clone()).collect(),
            roles: a.role_assertions().iter().map(|(r, _, _)| r.clone()).collect(),
        }
    }

    pub fn union(mut self, other: &RelSchema) -> Self {
        self.concepts.extend(other.concepts.iter().cloned());
        self.roles.extend(other.roles.iter().cloned());
        self
    }

    /// `CREATE TABLE` statements.
    pub fn ddl(&self) -> String {
        let mut out = String::new();
        for c in &self.concepts {
            let _ = writeln!(out, "CREATE TABLE {} (ind TEXT NOT NULL);", table(c));
        }
        for r in &self.roles {
            let _ = writeln!(out, "CREATE TABLE {} (src TEXT NOT NULL, dst TEXT NOT NULL);", table(r));
        }
        out
    }

    fn individuals_view(&self) -> String {
        let mut parts: Vec<String> = self.concepts.iter().map(|c| format!("SELECT ind FROM {}", table(c))).collect();
        for r in &self.roles {
            parts.push(format!("SELECT src AS ind FROM {}", table(r)));
            parts.push(format!("SELECT dst AS ind FROM {}", table(r)));
        }
        if parts.is_empty() {
            // no tables, no individuals
            return "(SELECT NULL AS ind WHERE 1 = 0)".into();
        }
        format!("({})", parts.join(" UNION "))
    }
}

const KEYWORDS: [&str; 24] = [
    "all", "and", "as", "by", "create", "distinct", "from", "group", "in", "index", "insert", "into", "join", "not",
    "null", "on", "or", "order", "select", "table", "union", "values", "where", "with",
];

/// Symbol names are used as table names, quoted when they are not plain
/// identifiers or clash with a keyword.
fn table(s: &Symbol) -> String {
    let name = s.as_str();
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&name.to_ascii_lowercase().as_str());
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// A UNION of SELECT blocks, one per disjunct.
pub fn emit_sql(u: &UnionQuery, schema: &RelSchema) -> String {
    let u = u.canonical();
    if u.is_empty() {
        let cols: Vec<&str> = vec!["t0.ind"; u.arity().max(1)];
        return format!("SELECT {} FROM {} AS t0 WHERE 1 = 0;\n", cols.join(", "), schema.individuals_view());
    }
    let blocks: Vec<String> = u.disjuncts().iter().map(|d| sql_block(d, schema)).collect();
    format!("{};\n", blocks.join("\nUNION\n"))
}

fn sql_block(d: &ConjQuery, schema: &RelSchema) -> String {
    let rep: BTreeMap<&Var, &Var> = d.eq_atoms().map(|(x, y)| (y, x)).collect();
    let rep_of = |v: &'_ Var| -> Var { rep.get(v).map(|x| (*x).clone()).unwrap_or_else(|| v.clone()) };
    let mut from: Vec<(String, Vec<(Var, &str)>)> = Vec::new();
    for a in d.atoms() {
        match a {
            Atom::Concept(c, v) => from.push((table(c), vec![(v.clone(), "ind")])),
            Atom::Role(r, x, y) => from.push((table(r), vec![(x.clone(), "src"), (y.clone(), "dst")])),
            Atom::Eq(_, _) => {}
        }
    }
    let bound: BTreeSet<Var> = from.iter().flat_map(|(_, cols)| cols.iter().map(|(v, _)| v.clone())).collect();
    let mut isolated: Vec<Var> = d.answer_vars().iter().map(&rep_of).filter(|v| !bound.contains(v)).collect();
    isolated.dedup();
    for v in isolated {
        from.push((schema.individuals_view(), vec![(v, "ind")]));
    }
    let aliased = from.len() > 1;
    let mut first: BTreeMap<Var, String> = BTreeMap::new();
    let mut conds: Vec<String> = Vec::new();
    let mut tables = Vec::new();
    for (i, (t, cols)) in from.iter().enumerate() {
        let alias = format!("t{i}");
        let is_view = t.starts_with('(');
        tables.push(if aliased || is_view { format!("{t} AS {alias}") } else { t.clone() });
        for (v, col) in cols {
            let r = if aliased || is_view { format!("{alias}.{col}") } else { (*col).to_string() };
            match first.get(v) {
                Some(prev) => conds.push(format!("{prev} = {r}")),
                None => {
                    first.insert(v.clone(), r);
                }
            }
        }
    }
    let select: Vec<String> = d.answer_vars().iter().map(|v| first[&rep_of(v)].clone()).collect();
    let mut s = format!("SELECT {} FROM {}", select.join(", "), tables.join(", "));
    if !conds.is_empty() {
        let _ = write!(s, " WHERE {}", conds.join(" AND "));
    }
    s
}

/// `INSERT` statements loading an ABox into the schema.
pub fn emit_abox_sql(a: &Abox) -> String {
    let mut out = String::new();
    for (c, i) in a.concept_assertions() {
        let _ = writeln!(out, "INSERT INTO {} VALUES ({});", table(c), quote(i.as_str()));
    }
    for (r, x, y) in a.role_assertions() {
        let _ = writeln!(out, "INSERT INTO {} VALUES ({}, {});", table(r), quote(x.as_str()), quote(y.as_str()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_ucq;

    #[test]
    fn datalog() {
        let u = parse_ucq("q(x) :- A(x).").unwrap();
        assert_eq!(emit_datalog(&u, "Q"), "Q(x) :- A(x).\n");
        let e = parse_ucq("q(x,y) :- B(x), x = y.").unwrap();
        assert_eq!(emit_datalog(&e, "Q"), "Q(x,x) :- B(x).\n");
        let t = parse_ucq("q(x) :- true.").unwrap();
        let sigma = Signature::of(["A"], ["r"]);
        assert_eq!(
            emit_datalog_with(&t, "Q", &sigma),
            "Q(x) :- adom(x).\nadom(x) :- A(x).\nadom(x) :- r(x,y).\nadom(y) :- r(x,y).\n"
        );
        let two = parse_ucq("q(x) :- GeneticRiskPatient(x).\n| q(x) :- Person(x), hasDisease(x,y), Albinism(y).").unwrap();
        assert_eq!(emit_datalog(&two, "Q").lines().count(), 2);
    }

    #[test]
    fn sql() {
        let u = parse_ucq("q(x) :- s(x,y).").unwrap();
        let schema = RelSchema::for_ucq(&u);
        assert_eq!(emit_sql(&u, &schema), "SELECT src FROM s;\n");
        let j = parse_ucq("q(x) :- A(x), r(x,y), B(y).").unwrap();
        assert_eq!(
            emit_sql(&j, &RelSchema::for_ucq(&j)),
            "SELECT t0.ind FROM A AS t0, B AS t1, r AS t2 WHERE t0.ind = t2.src AND t1.ind = t2.dst;\n"
        );
        let e = parse_ucq("q(x,y) :- true.\n| q(x,y) :- B(x), x = y.").unwrap();
        let sql = emit_sql(&e, &RelSchema::for_ucq(&e));
        assert_eq!(sql.matches("\nUNION\n").count(), 1);
        assert!(sql.contains("SELECT t0.ind, t0.ind FROM B AS t0") || sql.contains("SELECT ind, ind FROM B"), "{sql}");
        assert!(table(&Symbol::from("select")).starts_with('"'));
    }
}
