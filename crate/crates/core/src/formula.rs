//! Formula AST for the multi-agent modal mu-calculus, concrete syntax, and
//! the syntactic measures used by the rest of the crate.
//!
//! The grammar is in negation normal form: negation occurs only on
//! propositions. `negate` computes the NNF dual of a formula.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

/// A formula of the modal mu-calculus in negation normal form.
///
/// `And`/`Or` children, modal bodies, and fixed-point bodies are reference
/// counted so that programmatically built formulas (translations, the
/// tableau encoder) can share subterms cheaply.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Tt,
    Ff,
    Prop(String),
    NegProp(String),
    Var(String),
    And(Rc<Formula>, Rc<Formula>),
    Or(Rc<Formula>, Rc<Formula>),
    /// `[agent] body`
    Boxm(String, Rc<Formula>),
    /// `<agent> body`
    Diam(String, Rc<Formula>),
    Mu(String, Rc<Formula>),
    Nu(String, Rc<Formula>),
}

use Formula::*;

/// Frame conditions an agent's accessibility relation may be required to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    D,
    T,
    B,
    Four,
    Five,
}

impl Condition {
    /// The closure-preserving linear order D, T, B, 4, 5.
    pub const ORDER: [Condition; 5] = [
        Condition::D,
        Condition::T,
        Condition::B,
        Condition::Four,
        Condition::Five,
    ];

    pub fn letter(self) -> char {
        match self {
            Condition::D => 'D',
            Condition::T => 'T',
            Condition::B => 'B',
            Condition::Four => '4',
            Condition::Five => '5',
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A multi-agent logic: a map from agent names to sets of frame conditions.
/// Agents that are absent default to no conditions (plain K).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogicSpec {
    map: BTreeMap<String, BTreeSet<Condition>>,
}

impl LogicSpec {
    pub fn new() -> Self {
        LogicSpec::default()
    }

    /// Single-agent spec.
    pub fn single(agent: &str, conds: &[Condition]) -> Self {
        let mut s = LogicSpec::new();
        s.insert(agent, conds);
        s
    }

    pub fn insert(&mut self, agent: &str, conds: &[Condition]) {
        self.map
            .insert(agent.to_string(), conds.iter().copied().collect());
    }

    pub fn conditions(&self, agent: &str) -> BTreeSet<Condition> {
        self.map.get(agent).cloned().unwrap_or_default()
    }

    pub fn has(&self, agent: &str, c: Condition) -> bool {
        self.map.get(agent).map_or(false, |s| s.contains(&c))
    }

    pub fn agents(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.map.values().all(|v| v.is_empty())
    }

    /// Parses a logic name: letters D,T,B and digits 4,5 in any order,
    /// `K` alone for the empty set, aliases `S4` = T4 and `S5` = T45.
    pub fn parse_logic_name(name: &str) -> Result<BTreeSet<Condition>, String> {
        let name = name.trim();
        if name.eq_ignore_ascii_case("K") {
            return Ok(BTreeSet::new());
        }
        let expanded: String = if let Some(rest) = name.strip_prefix('S').or(name.strip_prefix('s')) {
            match rest {
                "4" => "T4".to_string(),
                "5" => "T45".to_string(),
                _ => return Err(format!("unknown logic name `{name}`")),
            }
        } else {
            name.to_string()
        };
        let mut out = BTreeSet::new();
        for ch in expanded.chars() {
            let c = match ch.to_ascii_uppercase() {
                'D' => Condition::D,
                'T' => Condition::T,
                'B' => Condition::B,
                '4' => Condition::Four,
                '5' => Condition::Five,
                'K' => continue,
                _ => return Err(format!("unknown condition `{ch}` in logic name `{name}`")),
            };
            out.insert(c);
        }
        Ok(out)
    }

    /// Parses `"a=K4;b=S5"` style specs.
    pub fn parse(text: &str) -> Result<LogicSpec, String> {
        let mut spec = LogicSpec::new();
        for part in text.split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (agent, name) = part
                .split_once('=')
                .ok_or_else(|| format!("expected `agent=LOGIC`, got `{part}`"))?;
            let conds = Self::parse_logic_name(name)?;
            spec.map.insert(agent.trim().to_string(), conds);
        }
        Ok(spec)
    }
}

impl fmt::Display for LogicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (agent, conds) in &self.map {
            if !first {
                write!(f, ";")?;
            }
            first = false;
            write!(f, "{agent}=")?;
            if conds.is_empty() {
                write!(f, "K")?;
            } else {
                for c in conds {
                    write!(f, "{c}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormulaError {
    Syntax { pos: usize, msg: String },
    UnboundVar(String),
    Recursive,
}

impl fmt::Display for FormulaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormulaError::Syntax { pos, msg } => write!(f, "syntax error at {pos}: {msg}"),
            FormulaError::UnboundVar(x) => write!(f, "unbound recursion variable `{x}`"),
            FormulaError::Recursive => write!(f, "operation rejects recursive formulas"),
        }
    }
}

impl std::error::Error for FormulaError {}

pub fn rc(f: Formula) -> Rc<Formula> {
    Rc::new(f)
}

pub fn and(a: Formula, b: Formula) -> Formula {
    And(rc(a), rc(b))
}

pub fn or(a: Formula, b: Formula) -> Formula {
    Or(rc(a), rc(b))
}

pub fn boxm(agent: &str, body: Formula) -> Formula {
    Boxm(agent.to_string(), rc(body))
}

pub fn diam(agent: &str, body: Formula) -> Formula {
    Diam(agent.to_string(), rc(body))
}

pub fn mu(var: &str, body: Formula) -> Formula {
    Mu(var.to_string(), rc(body))
}

pub fn nu(var: &str, body: Formula) -> Formula {
    Nu(var.to_string(), rc(body))
}

pub fn prop(name: &str) -> Formula {
    Prop(name.to_string())
}

pub fn neg_prop(name: &str) -> Formula {
    NegProp(name.to_string())
}

pub fn var(name: &str) -> Formula {
    Var(name.to_string())
}

/// Left-associated conjunction; the empty conjunction is `tt`.
pub fn big_and<I: IntoIterator<Item = Formula>>(items: I) -> Formula {
    let mut it = items.into_iter();
    match it.next() {
        None => Tt,
        Some(first) => it.fold(first, and),
    }
}

/// Left-associated disjunction; the empty disjunction is `ff`.
pub fn big_or<I: IntoIterator<Item = Formula>>(items: I) -> Formula {
    let mut it = items.into_iter();
    match it.next() {
        None => Ff,
        Some(first) => it.fold(first, or),
    }
}

/// `a -> b` desugared as `negate(a) | b`.
pub fn implies(a: Formula, b: Formula) -> Formula {
    or(negate(&a), b)
}

impl Formula {
    pub fn is_recursion_free(&self) -> bool {
        match self {
            Tt | Ff | Prop(_) | NegProp(_) => true,
            Var(_) | Mu(_, _) | Nu(_, _) => false,
            And(a, b) | Or(a, b) => a.is_recursion_free() && b.is_recursion_free(),
            Boxm(_, b) | Diam(_, b) => b.is_recursion_free(),
        }
    }

    pub fn is_mu_free(&self) -> bool {
        match self {
            Tt | Ff | Prop(_) | NegProp(_) | Var(_) => true,
            Mu(_, _) => false,
            Nu(_, b) | Boxm(_, b) | Diam(_, b) => b.is_mu_free(),
            And(a, b) | Or(a, b) => a.is_mu_free() && b.is_mu_free(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        fn walk(f: &Formula, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match f {
                Var(x) => {
                    if !bound.iter().any(|b| b == x) {
                        out.insert(x.clone());
                    }
                }
                Mu(x, b) | Nu(x, b) => {
                    bound.push(x.clone());
                    walk(b, bound, out);
                    bound.pop();
                }
                And(a, b) | Or(a, b) => {
                    walk(a, bound, out);
                    walk(b, bound, out);
                }
                Boxm(_, b) | Diam(_, b) => walk(b, bound, out),
                _ => {}
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Agent names occurring in modal operators.
    pub fn agents(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(f: &Formula, out: &mut BTreeSet<String>) {
            match f {
                Boxm(a, b) | Diam(a, b) => {
                    out.insert(a.clone());
                    walk(b, out);
                }
                And(x, y) | Or(x, y) => {
                    walk(x, out);
                    walk(y, out);
                }
                Mu(_, b) | Nu(_, b) => walk(b, out),
                _ => {}
            }
        }
        walk(self, &mut out);
        out
    }

    /// Proposition names occurring in the formula.
    pub fn props(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(f: &Formula, out: &mut BTreeSet<String>) {
            match f {
                Prop(p) | NegProp(p) => {
                    out.insert(p.clone());
                }
                And(x, y) | Or(x, y) => {
                    walk(x, out);
                    walk(y, out);
                }
                Boxm(_, b) | Diam(_, b) | Mu(_, b) | Nu(_, b) => walk(b, out),
                _ => {}
            }
        }
        walk(self, &mut out);
        out
    }

    /// All variable names bound by some fixed-point operator.
    pub fn bound_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn walk(f: &Formula, out: &mut BTreeSet<String>) {
            match f {
                Mu(x, b) | Nu(x, b) => {
                    out.insert(x.clone());
                    walk(b, out);
                }
                And(a, b) | Or(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Boxm(_, b) | Diam(_, b) => walk(b, out),
                _ => {}
            }
        }
        walk(self, &mut out);
        out
    }
}

/// The subformula set `sub(f)` in a stable preorder enumeration (duplicates
/// collapse to their first occurrence).
pub fn subformulas_ordered(f: &Formula) -> Vec<Formula> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    fn walk(f: &Formula, seen: &mut BTreeSet<Formula>, out: &mut Vec<Formula>) {
        if seen.insert(f.clone()) {
            out.push(f.clone());
        }
        match f {
            And(a, b) | Or(a, b) => {
                walk(a, seen, out);
                walk(b, seen, out);
            }
            Boxm(_, b) | Diam(_, b) | Mu(_, b) | Nu(_, b) => walk(b, seen, out),
            _ => {}
        }
    }
    walk(f, &mut seen, &mut out);
    out
}

/// `sub(f)` as a set.
pub fn subformulas(f: &Formula) -> BTreeSet<Formula> {
    subformulas_ordered(f).into_iter().collect()
}

/// `|f|` — the cardinality of `sub(f)`.
pub fn size(f: &Formula) -> usize {
    subformulas_ordered(f).len()
}

/// `sub(f) ∪ { negate(ψ) | ψ ∈ sub(f) }` in stable order: the subformula
/// enumeration first, then the negations of subformulas not already present.
pub fn subbar(f: &Formula) -> Vec<Formula> {
    let subs = subformulas_ordered(f);
    let mut seen: BTreeSet<Formula> = subs.iter().cloned().collect();
    let mut out = subs.clone();
    for s in &subs {
        let n = negate(s);
        if seen.insert(n.clone()) {
            out.push(n);
        }
    }
    out
}

/// The NNF dual: swaps tt/ff, p/~p, &/|, [a]/<a>, mu/nu. Variable occurrences
/// are left in place; the flip of their binders makes the result the
/// complement of the input on every model (for closed input).
pub fn negate(f: &Formula) -> Formula {
    match f {
        Tt => Ff,
        Ff => Tt,
        Prop(p) => NegProp(p.clone()),
        NegProp(p) => Prop(p.clone()),
        Var(x) => Var(x.clone()),
        And(a, b) => Or(rc(negate(a)), rc(negate(b))),
        Or(a, b) => And(rc(negate(a)), rc(negate(b))),
        Boxm(a, b) => Diam(a.clone(), rc(negate(b))),
        Diam(a, b) => Boxm(a.clone(), rc(negate(b))),
        Mu(x, b) => Nu(x.clone(), rc(negate(b))),
        Nu(x, b) => Mu(x.clone(), rc(negate(b))),
    }
}

/// Modal depth of a recursion-free formula.
pub fn modal_depth(f: &Formula) -> Result<usize, FormulaError> {
    match f {
        Tt | Ff | Prop(_) | NegProp(_) => Ok(0),
        Var(_) | Mu(_, _) | Nu(_, _) => Err(FormulaError::Recursive),
        And(a, b) | Or(a, b) => Ok(modal_depth(a)?.max(modal_depth(b)?)),
        Boxm(_, b) | Diam(_, b) => Ok(1 + modal_depth(b)?),
    }
}

/// The unique fixed-point subformula `fx(x)` binding `x` in `f`.
/// Assumes binders have been renamed apart.
pub fn fx(x: &str, f: &Formula) -> Result<Formula, FormulaError> {
    fn find(x: &str, f: &Formula) -> Option<Formula> {
        match f {
            Mu(y, b) | Nu(y, b) => {
                if y == x {
                    Some(f.clone())
                } else {
                    find(x, b)
                }
            }
            And(a, b) | Or(a, b) => find(x, a).or_else(|| find(x, b)),
            Boxm(_, b) | Diam(_, b) => find(x, b),
            _ => None,
        }
    }
    find(x, f).ok_or_else(|| FormulaError::UnboundVar(x.to_string()))
}

/// `x <= y` iff `fx(x)` is a subformula of `fx(y)`.
pub fn var_leq(x: &str, y: &str, f: &Formula) -> Result<bool, FormulaError> {
    let fx_x = fx(x, f)?;
    let fx_y = fx(y, f)?;
    Ok(subformulas(&fx_y).contains(&fx_x))
}

/// Capture-avoiding substitution of `repl` for free occurrences of `x`.
/// With binders renamed apart (and `repl` closed in our uses) no capture can
/// occur; shadowed occurrences are left alone.
pub fn substitute(f: &Formula, x: &str, repl: &Formula) -> Formula {
    match f {
        Var(y) if y == x => repl.clone(),
        Mu(y, _) | Nu(y, _) if y == x => f.clone(),
        Mu(y, b) => Mu(y.clone(), rc(substitute(b, x, repl))),
        Nu(y, b) => Nu(y.clone(), rc(substitute(b, x, repl))),
        And(a, b) => And(rc(substitute(a, x, repl)), rc(substitute(b, x, repl))),
        Or(a, b) => Or(rc(substitute(a, x, repl)), rc(substitute(b, x, repl))),
        Boxm(a, b) => Boxm(a.clone(), rc(substitute(b, x, repl))),
        Diam(a, b) => Diam(a.clone(), rc(substitute(b, x, repl))),
        _ => f.clone(),
    }
}

/// Closes `f` by repeatedly substituting a <=-minimal free variable with its
/// binding fixed-point formula taken from `root`.
pub fn cl(f: &Formula, root: &Formula) -> Result<Formula, FormulaError> {
    let mut cur = f.clone();
    loop {
        let free = cur.free_vars();
        if free.is_empty() {
            return Ok(cur);
        }
        // Pick a <=-minimal free variable: one whose fx is not a strict
        // superformula of another free variable's fx.
        let mut chosen: Option<(String, Formula)> = None;
        'outer: for x in &free {
            let fx_x = fx(x, root)?;
            for y in &free {
                if y == x {
                    continue;
                }
                let fx_y = fx(y, root)?;
                if subformulas(&fx_x).contains(&fx_y) && fx_x != fx_y {
                    continue 'outer; // x is not minimal
                }
            }
            chosen = Some((x.clone(), fx_x));
            break;
        }
        let (x, fx_x) =
            chosen.ok_or_else(|| FormulaError::UnboundVar(free.iter().next().unwrap().clone()))?;
        cur = substitute(&cur, &x, &fx_x);
    }
}

/// Deterministic fresh-name source. Generated names use the reserved `_Z`
/// prefix and skip anything already occurring in the formulas it was seeded
/// with.
pub struct FreshVars {
    used: BTreeSet<String>,
    next: usize,
}

impl FreshVars {
    pub fn for_formula(f: &Formula) -> Self {
        let mut used = f.bound_vars();
        used.extend(f.free_vars());
        FreshVars { used, next: 0 }
    }

    pub fn fresh(&mut self) -> String {
        loop {
            let cand = format!("_Z{}", self.next);
            self.next += 1;
            if !self.used.contains(&cand) {
                self.used.insert(cand.clone());
                return cand;
            }
        }
    }
}

/// `[A]f` — conjunction of `[a]f` over the agents; empty conjunction is `tt`.
pub fn box_set(f: &Formula, agents: &BTreeSet<String>) -> Formula {
    big_and(agents.iter().map(|a| Boxm(a.clone(), rc(f.clone()))))
}

/// `<A>f` — disjunction of `<a>f` over the agents; empty disjunction is `ff`.
pub fn diam_set(f: &Formula, agents: &BTreeSet<String>) -> Formula {
    big_or(agents.iter().map(|a| Diam(a.clone(), rc(f.clone()))))
}

/// `Inv(f) = nu Z.(f & [A]Z)` with `Z` fresh.
pub fn inv(f: &Formula, agents: &BTreeSet<String>) -> Formula {
    let mut fv = FreshVars::for_formula(f);
    let z = fv.fresh();
    Nu(z.clone(), rc(and(f.clone(), box_set(&Var(z), agents))))
}

/// `Eve(f) = mu Z.(f | <A>Z)` with `Z` fresh.
pub fn eve(f: &Formula, agents: &BTreeSet<String>) -> Formula {
    let mut fv = FreshVars::for_formula(f);
    let z = fv.fresh();
    Mu(z.clone(), rc(or(f.clone(), diam_set(&Var(z), agents))))
}

/// `Inv_d(f) = /\_{i<=d} [A]^i f`.
pub fn inv_d(f: &Formula, d: usize, agents: &BTreeSet<String>) -> Formula {
    let mut layers = Vec::with_capacity(d + 1);
    let mut cur = f.clone();
    layers.push(cur.clone());
    for _ in 0..d {
        cur = box_set(&cur, agents);
        layers.push(cur.clone());
    }
    big_and(layers)
}

/// Renames binders so every bound variable is bound by exactly one
/// fixed-point operator and no binder shadows another or a free variable.
/// First occurrences keep their names; later clashes get numeric suffixes.
pub fn rename_binders(f: &Formula) -> Formula {
    let mut taken: BTreeSet<String> = f.free_vars();

    fn pick(name: &str, taken: &mut BTreeSet<String>) -> String {
        if taken.insert(name.to_string()) {
            return name.to_string();
        }
        let mut i = 1;
        loop {
            let cand = format!("{name}{i}");
            if taken.insert(cand.clone()) {
                return cand;
            }
            i += 1;
        }
    }

    fn walk(f: &Formula, map: &mut Vec<(String, String)>, taken: &mut BTreeSet<String>) -> Formula {
        match f {
            Var(x) => {
                for (from, to) in map.iter().rev() {
                    if from == x {
                        return Var(to.clone());
                    }
                }
                Var(x.clone())
            }
            Mu(x, b) => {
                let nx = pick(x, taken);
                map.push((x.clone(), nx.clone()));
                let nb = walk(b, map, taken);
                map.pop();
                Mu(nx, rc(nb))
            }
            Nu(x, b) => {
                let nx = pick(x, taken);
                map.push((x.clone(), nx.clone()));
                let nb = walk(b, map, taken);
                map.pop();
                Nu(nx, rc(nb))
            }
            And(a, b) => And(rc(walk(a, map, taken)), rc(walk(b, map, taken))),
            Or(a, b) => Or(rc(walk(a, map, taken)), rc(walk(b, map, taken))),
            Boxm(a, b) => Boxm(a.clone(), rc(walk(b, map, taken))),
            Diam(a, b) => Diam(a.clone(), rc(walk(b, map, taken))),
            _ => f.clone(),
        }
    }

    walk(f, &mut Vec::new(), &mut taken)
}

// ---------------------------------------------------------------------------
// Concrete syntax
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Tt,
    Ff,
    MuKw,
    NuKw,
    NegKw,
    Prop(String),
    Var(String),
    Tilde,
    Amp,
    Pipe,
    Dot,
    LPar,
    RPar,
    LBrk(String), // [agent]
    LAng(String), // <agent>
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let bytes: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let n = bytes.len();

    let ident = |bytes: &[char], mut j: usize| -> (String, usize) {
        let start = j;
        while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == '_') {
            j += 1;
        }
        (bytes[start..j].iter().collect(), j)
    };
    // Identifiers starting with `_` are reserved generated names; the
    // character after the underscore decides the class.
    let classify = |name: &str| -> Tok {
        let mut chars = name.chars();
        let first = chars.next().unwrap();
        let decider = if first == '_' { chars.next().unwrap_or('a') } else { first };
        if decider.is_ascii_uppercase() {
            Tok::Var(name.to_string())
        } else {
            Tok::Prop(name.to_string())
        }
    };

    while i < n {
        let c = bytes[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let pos = i;
        match c {
            '~' => {
                toks.push((pos, Tok::Tilde));
                i += 1;
            }
            '&' => {
                toks.push((pos, Tok::Amp));
                i += 1;
            }
            '|' => {
                toks.push((pos, Tok::Pipe));
                i += 1;
            }
            '.' => {
                toks.push((pos, Tok::Dot));
                i += 1;
            }
            '(' => {
                toks.push((pos, Tok::LPar));
                i += 1;
            }
            ')' => {
                toks.push((pos, Tok::RPar));
                i += 1;
            }
            '[' => {
                let (name, j) = ident(&bytes, i + 1);
                if name.is_empty() || j >= n || bytes[j] != ']' {
                    return Err(FormulaError::Syntax {
                        pos,
                        msg: "expected `[agent]`".into(),
                    });
                }
                toks.push((pos, Tok::LBrk(name)));
                i = j + 1;
            }
            '<' => {
                let (name, j) = ident(&bytes, i + 1);
                if name.is_empty() || j >= n || bytes[j] != '>' {
                    return Err(FormulaError::Syntax {
                        pos,
                        msg: "expected `<agent>`".into(),
                    });
                }
                toks.push((pos, Tok::LAng(name)));
                i = j + 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let (name, j) = ident(&bytes, i);
                i = j;
                match name.as_str() {
                    "tt" => toks.push((pos, Tok::Tt)),
                    "ff" => toks.push((pos, Tok::Ff)),
                    "mu" => toks.push((pos, Tok::MuKw)),
                    "nu" => toks.push((pos, Tok::NuKw)),
                    "neg" => toks.push((pos, Tok::NegKw)),
                    _ => toks.push((pos, classify(&name))),
                }
            }
            _ => {
                return Err(FormulaError::Syntax {
                    pos,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|(_, t)| t.clone());
        self.i += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), FormulaError> {
        let pos = self.pos();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(FormulaError::Syntax {
                pos,
                msg: format!("expected {what}"),
            }),
        }
    }

    // formula := or ; or := and ('|' and)* ; and := unary ('&' unary)*
    fn parse_or(&mut self) -> Result<Formula, FormulaError> {
        let mut acc = self.parse_and()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.bump();
            let rhs = self.parse_and()?;
            acc = or(acc, rhs);
        }
        Ok(acc)
    }

    fn parse_and(&mut self) -> Result<Formula, FormulaError> {
        let mut acc = self.parse_unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.bump();
            let rhs = self.parse_unary()?;
            acc = and(acc, rhs);
        }
        Ok(acc)
    }

    fn parse_unary(&mut self) -> Result<Formula, FormulaError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Tt) => Ok(Tt),
            Some(Tok::Ff) => Ok(Ff),
            Some(Tok::Prop(p)) => Ok(Prop(p)),
            Some(Tok::Var(x)) => Ok(Var(x)),
            Some(Tok::Tilde) => {
                let pos2 = self.pos();
                match self.bump() {
                    Some(Tok::Prop(p)) => Ok(NegProp(p)),
                    _ => Err(FormulaError::Syntax {
                        pos: pos2,
                        msg: "`~` is only allowed before a proposition".into(),
                    }),
                }
            }
            Some(Tok::NegKw) => {
                self.expect(Tok::LPar, "`(` after `neg`")?;
                let inner = self.parse_or()?;
                self.expect(Tok::RPar, "`)`")?;
                Ok(negate(&inner))
            }
            Some(Tok::LBrk(a)) => {
                let body = self.parse_unary()?;
                Ok(boxm(&a, body))
            }
            Some(Tok::LAng(a)) => {
                let body = self.parse_unary()?;
                Ok(diam(&a, body))
            }
            Some(Tok::MuKw) | Some(Tok::NuKw) => {
                let is_mu = matches!(self.toks[self.i - 1].1, Tok::MuKw);
                let pos2 = self.pos();
                let x = match self.bump() {
                    Some(Tok::Var(x)) => x,
                    _ => {
                        return Err(FormulaError::Syntax {
                            pos: pos2,
                            msg: "expected a recursion variable".into(),
                        })
                    }
                };
                self.expect(Tok::Dot, "`.`")?;
                // Fixed-point scope extends maximally to the right.
                let body = self.parse_or()?;
                Ok(if is_mu { mu(&x, body) } else { nu(&x, body) })
            }
            Some(Tok::LPar) => {
                let inner = self.parse_or()?;
                self.expect(Tok::RPar, "`)`")?;
                Ok(inner)
            }
            _ => Err(FormulaError::Syntax {
                pos,
                msg: "expected a formula".into(),
            }),
        }
    }
}

/// Parses a formula, allowing free recursion variables. Binders are renamed
/// apart.
pub fn parse_open(text: &str) -> Result<Formula, FormulaError> {
    let toks = lex(text)?;
    let end = text.chars().count();
    let mut p = Parser { toks, i: 0, end };
    let f = p.parse_or()?;
    if p.i != p.toks.len() {
        return Err(FormulaError::Syntax {
            pos: p.pos(),
            msg: "trailing input".into(),
        });
    }
    Ok(rename_binders(&f))
}

/// Parses a closed formula. Binders are renamed apart.
pub fn parse(text: &str) -> Result<Formula, FormulaError> {
    let f = parse_open(text)?;
    if let Some(x) = f.free_vars().into_iter().next() {
        return Err(FormulaError::UnboundVar(x));
    }
    Ok(f)
}

// Printing. Precedence levels: 0 = or, 1 = and, 2 = unary. `tail` tracks
// whether the end of this subterm is the end of the enclosing group; a
// fixed point not in tail position must be parenthesized because its scope
// would otherwise swallow everything to its right.
fn print_prec(f: &Formula, level: u8, tail: bool, out: &mut String) {
    let needs_par = match f {
        Or(_, _) => level >= 1,
        And(_, _) => level >= 2,
        Mu(_, _) | Nu(_, _) => !tail,
        _ => false,
    };
    if needs_par {
        out.push('(');
    }
    let tail = tail || needs_par;
    match f {
        Tt => out.push_str("tt"),
        Ff => out.push_str("ff"),
        Prop(p) => out.push_str(p),
        NegProp(p) => {
            out.push('~');
            out.push_str(p);
        }
        Var(x) => out.push_str(x),
        And(a, b) => {
            print_prec(a, 1, false, out);
            out.push_str(" & ");
            print_prec(b, 2, tail, out);
        }
        Or(a, b) => {
            print_prec(a, 0, false, out);
            out.push_str(" | ");
            print_prec(b, 1, tail, out);
        }
        Boxm(a, b) => {
            out.push('[');
            out.push_str(a);
            out.push_str("] ");
            print_prec(b, 2, tail, out);
        }
        Diam(a, b) => {
            out.push('<');
            out.push_str(a);
            out.push_str("> ");
            print_prec(b, 2, tail, out);
        }
        Mu(x, b) => {
            out.push_str("mu ");
            out.push_str(x);
            out.push_str(". ");
            print_prec(b, 0, true, out);
        }
        Nu(x, b) => {
            out.push_str("nu ");
            out.push_str(x);
            out.push_str(". ");
            print_prec(b, 0, true, out);
        }
    }
    if needs_par {
        out.push(')');
    }
}

/// Canonical concrete syntax; `parse(print(f))` equals `f` up to binder
/// renaming.
pub fn print(f: &Formula) -> String {
    let mut s = String::new();
    print_prec(f, 0, true, &mut s);
    s
}

impl fmt::Display for Formula {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "{}", print(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(p("mu X. [a] X"), mu("X", boxm("a", var("X"))));
        assert_eq!(p("tt"), Tt);
        let phi1 = p("(p & <a>p) & mu X.(~p | [a]X)");
        assert_eq!(
            phi1,
            and(
                and(prop("p"), diam("a", prop("p"))),
                mu("X", or(neg_prop("p"), boxm("a", var("X"))))
            )
        );
    }

    #[test]
    fn parse_precedence() {
        // & binds over |, modalities tightest, mu scope maximal.
        assert_eq!(p("p | q & r"), or(prop("p"), and(prop("q"), prop("r"))));
        assert_eq!(p("[a] p & q"), and(boxm("a", prop("p")), prop("q")));
        assert_eq!(
            p("p & mu X. q | X"),
            and(prop("p"), mu("X", or(prop("q"), var("X"))))
        );
    }

    #[test]
    fn parse_errors_have_positions() {
        match parse("p & &") {
            Err(FormulaError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert_eq!(
            parse("mu X. [a] Y"),
            Err(FormulaError::UnboundVar("Y".into()))
        );
        assert!(parse_open("mu X. [a] Y").is_ok());
        // `~` only before propositions.
        assert!(parse("~(p & q)").is_err());
        // The `neg(...)` surface form applies `negate`.
        assert_eq!(p("neg(p & <a>q)"), or(neg_prop("p"), boxm("a", neg_prop("q"))));
    }

    #[test]
    fn print_examples() {
        assert_eq!(print(&Tt), "tt");
        assert_eq!(print(&mu("X", boxm("a", var("X")))), "mu X. [a] X");
        assert_eq!(print(&diam("b", prop("p"))), "<b> p");
    }

    #[test]
    fn rename_binders_makes_binders_unique() {
        let f = parse("mu X. (<a>mu X. X) | X").unwrap();
        // Inner binder got renamed; outer occurrences still refer to outer.
        if let Mu(x, body) = &f {
            assert_eq!(x, "X");
            if let Or(l, r) = &**body {
                assert_eq!(**r, var("X"));
                if let Diam(_, inner) = &**l {
                    if let Mu(y, ib) = &**inner {
                        assert_eq!(y, "X1");
                        assert_eq!(**ib, var("X1"));
                    } else {
                        panic!("inner shape");
                    }
                } else {
                    panic!("diamond shape");
                }
            } else {
                panic!("or shape");
            }
        } else {
            panic!("mu shape");
        }
    }

    #[test]
    fn subformula_examples() {
        let f = p("<a>p");
        assert_eq!(
            subformulas(&f),
            [f.clone(), prop("p")].into_iter().collect()
        );
        let g = p("mu X. [a] X");
        assert_eq!(
            subformulas(&g),
            [g.clone(), boxm("a", var("X")), var("X")]
                .into_iter()
                .collect()
        );
        assert_eq!(size(&p("p & p")), 2);
    }

    #[test]
    fn subbar_examples() {
        let f = prop("p");
        let sb = subbar(&f);
        assert_eq!(sb, vec![prop("p"), neg_prop("p")]);

        let f = p("<a>p");
        let sb: BTreeSet<_> = subbar(&f).into_iter().collect();
        let expect: BTreeSet<_> = [
            diam("a", prop("p")),
            prop("p"),
            boxm("a", neg_prop("p")),
            neg_prop("p"),
        ]
        .into_iter()
        .collect();
        assert_eq!(sb, expect);

        assert_eq!(subbar(&Tt), vec![Tt, Ff]);
    }

    #[test]
    fn negate_examples() {
        assert_eq!(
            negate(&p("p & <a>q")),
            or(neg_prop("p"), boxm("a", neg_prop("q")))
        );
        assert_eq!(negate(&p("mu X. [a] X")), nu("X", diam("a", var("X"))));
        let f = p("(p & <a>p) & mu X.(~p | [a]X)");
        assert_eq!(negate(&negate(&f)), f);
    }

    #[test]
    fn modal_depth_examples() {
        assert_eq!(modal_depth(&prop("p")), Ok(0));
        assert_eq!(modal_depth(&p("[a]<a>p")), Ok(2));
        assert_eq!(modal_depth(&p("(p & <a>p) | [b]q")), Ok(1));
        assert_eq!(modal_depth(&p("mu X. [a] X")), Err(FormulaError::Recursive));
    }

    #[test]
    fn fx_examples() {
        let f = p("mu X. [a] X");
        assert_eq!(fx("X", &f), Ok(f.clone()));
        let g = p("nu Y. <a> mu X. (p | X)");
        assert_eq!(fx("X", &g), Ok(mu("X", or(prop("p"), var("X")))));
        assert_eq!(fx("Z", &f), Err(FormulaError::UnboundVar("Z".into())));
    }

    #[test]
    fn var_leq_examples() {
        let f = p("nu Y. mu X. (Y | X)");
        assert_eq!(var_leq("X", "Y", &f), Ok(true));
        assert_eq!(var_leq("Y", "X", &f), Ok(false));
        assert_eq!(var_leq("X", "X", &f), Ok(true));
    }

    #[test]
    fn cl_examples() {
        let root = p("mu X. [a] X");
        let open_body = boxm("a", var("X"));
        assert_eq!(cl(&open_body, &root), Ok(boxm("a", root.clone())));
        assert_eq!(cl(&prop("p"), &root), Ok(prop("p")));
        assert_eq!(cl(&var("X"), &root), Ok(root.clone()));
    }

    #[test]
    fn inv_eve_examples() {
        let a: BTreeSet<String> = ["a".to_string()].into();
        let none: BTreeSet<String> = BTreeSet::new();
        let ab: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        assert_eq!(
            inv(&prop("p"), &a),
            nu("_Z0", and(prop("p"), boxm("a", var("_Z0"))))
        );
        assert_eq!(inv(&prop("p"), &none), nu("_Z0", and(prop("p"), Tt)));
        assert_eq!(
            eve(&prop("p"), &ab),
            mu(
                "_Z0",
                or(
                    prop("p"),
                    or(diam("a", var("_Z0")), diam("b", var("_Z0")))
                )
            )
        );
    }

    #[test]
    fn inv_d_examples() {
        let a: BTreeSet<String> = ["a".to_string()].into();
        let ab: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        assert_eq!(inv_d(&prop("p"), 0, &a), prop("p"));
        assert_eq!(
            inv_d(&prop("p"), 1, &a),
            and(prop("p"), boxm("a", prop("p")))
        );
        // [{a,b}]psi expands to [a]psi & [b]psi.
        let l1 = and(boxm("a", prop("p")), boxm("b", prop("p")));
        let l2 = and(boxm("a", l1.clone()), boxm("b", l1.clone()));
        assert_eq!(
            inv_d(&prop("p"), 2, &ab),
            and(and(prop("p"), l1), l2)
        );
    }

    #[test]
    fn reserved_names_lex_correctly() {
        // `_Z0` is a variable-class identifier, `_p` a proposition-class one.
        let f = parse("nu _Z0. (_p & [a] _Z0)").unwrap();
        assert_eq!(f, nu("_Z0", and(prop("_p"), boxm("a", var("_Z0")))));
    }

    #[test]
    fn logic_spec_parsing() {
        let s = LogicSpec::parse("a=K4;b=S5").unwrap();
        assert_eq!(s.conditions("a"), [Condition::Four].into());
        assert_eq!(
            s.conditions("b"),
            [Condition::T, Condition::Four, Condition::Five].into()
        );
        assert_eq!(s.conditions("c"), BTreeSet::new());
        assert!(LogicSpec::parse("a=K9").is_err());
        assert_eq!(LogicSpec::parse("a=S4").unwrap().to_string(), "a=T4");
    }
}
