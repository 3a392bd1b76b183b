//! Dedicated decision procedure for single-agent K4, D4, and S4 with
//! recursion, via depth-first construction of terse branches.
//!
//! The search keeps one root-to-leaf path of levels. A level is a tableau
//! prefix: its generating step formula, the formula set saturated under the
//! local rules, and the dependency edges it contributed. Diamonds (and boxes
//! under seriality) demand a step-child; when an ancestor level on the path
//! carries the same signature — step formula plus the boxes the new child
//! would inherit — the search loops back to it instead of deepening, which
//! realizes the repetition structure of transitive branches and bounds the
//! prefix stack. A branch is rejected when a dependency cycle through a
//! least-fixed-point occurrence appears among the path levels (loop edges
//! fold the infinite unfolding onto the path). The procedure is decisive:
//! no cutoff parameter is involved.

use crate::formula::{Condition, Formula};
use crate::kripke::{close_relation, KripkeModel, PointedModel};
use crate::modelcheck;
use crate::tableau::{Arena, FormulaId};
use num_bigint::BigUint;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum K4Logic {
    K4,
    D4,
    S4,
}

impl K4Logic {
    pub fn conditions(self) -> &'static [Condition] {
        match self {
            K4Logic::K4 => &[Condition::Four],
            K4Logic::D4 => &[Condition::D, Condition::Four],
            K4Logic::S4 => &[Condition::T, Condition::Four],
        }
    }

    pub fn parse(name: &str) -> Option<K4Logic> {
        match name.to_ascii_uppercase().as_str() {
            "K4" => Some(K4Logic::K4),
            "D4" => Some(K4Logic::D4),
            "S4" | "T4" => Some(K4Logic::S4),
            _ => None,
        }
    }

    fn serial(self) -> bool {
        matches!(self, K4Logic::D4)
    }

    fn reflexive(self) -> bool {
        matches!(self, K4Logic::S4)
    }
}

impl fmt::Display for K4Logic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            K4Logic::K4 => write!(f, "K4"),
            K4Logic::D4 => write!(f, "D4"),
            K4Logic::S4 => write!(f, "S4"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum K4Error {
    MultiAgent(Vec<String>),
    OpenFormula,
}

impl fmt::Display for K4Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            K4Error::MultiAgent(agents) => {
                write!(f, "the K4-family solver is single-agent; got {agents:?}")
            }
            K4Error::OpenFormula => write!(f, "formula has free recursion variables"),
        }
    }
}

impl std::error::Error for K4Error {}

/// A decisive verdict; Sat carries a verified witness.
#[derive(Debug, Clone)]
pub enum K4Verdict {
    Sat(PointedModel),
    Unsat,
}

impl K4Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, K4Verdict::Sat(_))
    }
}

impl fmt::Display for K4Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            K4Verdict::Sat(_) => write!(f, "SAT"),
            K4Verdict::Unsat => write!(f, "UNSAT"),
        }
    }
}

/// Search statistics backing the space-discipline assertion: the prefix
/// stack stays within `|f| * distinct-signature count`.
#[derive(Debug, Clone, Default)]
pub struct K4Stats {
    pub max_depth: usize,
    pub distinct_signatures: usize,
    pub formula_size: usize,
}

impl K4Stats {
    pub fn space_bound_holds(&self) -> bool {
        self.max_depth <= self.formula_size * self.distinct_signatures.max(1)
    }
}

/// `2 * |f|! - 1`, the small-model bound for the transitive family.
pub fn small_model_bound(f: &Formula) -> BigUint {
    let n = crate::formula::size(f);
    let mut fact = BigUint::from(1u32);
    for k in 2..=n {
        fact *= BigUint::from(k);
    }
    fact * BigUint::from(2u32) - BigUint::from(1u32)
}

type Node = (usize, FormulaId); // (level depth, formula)

#[derive(Clone)]
struct Level {
    /// Generating step formula; None for the root.
    step: Option<FormulaId>,
    /// Signature part: the formulas this level was created with.
    load: BTreeSet<FormulaId>,
    set: BTreeSet<FormulaId>,
    queue: Vec<FormulaId>,
    /// Dependency edges contributed while this level was on the stack.
    edges: Vec<(Node, Node)>,
    /// Loop discharges recorded at this level: (premise formulas, ancestor depth).
    loops: Vec<(Vec<FormulaId>, usize)>,
    /// Completed children (model reconstruction happens on the success path).
    done_children: Vec<DoneLevel>,
}

#[derive(Clone)]
struct DoneLevel {
    set: BTreeSet<FormulaId>,
    loops: Vec<usize>,
    children: Vec<DoneLevel>,
}

struct Search<'a> {
    arena: &'a Arena,
    logic: K4Logic,
    stats: K4Stats,
    signatures: BTreeSet<(Option<FormulaId>, Vec<FormulaId>)>,
    steps: u64,
}

const STEP_BUDGET: u64 = 50_000_000;

impl<'a> Search<'a> {
    fn child_load(&self, body: FormulaId, set: &BTreeSet<FormulaId>) -> BTreeSet<FormulaId> {
        let mut load = BTreeSet::new();
        load.insert(body);
        for &fid in set {
            if let Formula::Boxm(_, inner) = self.arena.formula(fid) {
                load.insert(self.arena.lookup(inner).unwrap());
                load.insert(fid);
            }
        }
        load
    }

    /// Saturates the top level and discharges its requirements; `stack` holds
    /// the current path. Returns the completed level on success.
    fn run(&mut self, stack: &mut Vec<Level>) -> Option<DoneLevel> {
        self.steps += 1;
        assert!(self.steps < STEP_BUDGET, "k4 search budget exhausted");
        self.stats.max_depth = self.stats.max_depth.max(stack.len());

        // Saturation with backtracking on disjunction choices.
        while let Some(fid) = {
            let top = stack.last_mut().unwrap();
            top.queue.pop()
        } {
            let depth = stack.len() - 1;
            let formula = self.arena.formula(fid).clone();
            match formula {
                Formula::Ff => return None,
                Formula::Prop(ref p) => {
                    if let Some(neg) = self.arena.lookup(&Formula::NegProp(p.clone())) {
                        if stack.last().unwrap().set.contains(&neg) {
                            return None;
                        }
                    }
                }
                Formula::NegProp(ref p) => {
                    if let Some(pos) = self.arena.lookup(&Formula::Prop(p.clone())) {
                        if stack.last().unwrap().set.contains(&pos) {
                            return None;
                        }
                    }
                }
                Formula::Tt | Formula::Diam(_, _) => {}
                Formula::And(ref a, ref b) => {
                    let ia = self.arena.lookup(a).unwrap();
                    let ib = self.arena.lookup(b).unwrap();
                    self.push_formula(stack.last_mut().unwrap(), depth, fid, ia);
                    self.push_formula(stack.last_mut().unwrap(), depth, fid, ib);
                }
                Formula::Or(ref a, ref b) => {
                    let ia = self.arena.lookup(a).unwrap();
                    let ib = self.arena.lookup(b).unwrap();
                    // Left disjunct first; the whole remaining search runs
                    // inside each alternative.
                    for pick in [ia, ib] {
                        let mut alt = stack.clone();
                        self.push_formula(alt.last_mut().unwrap(), depth, fid, pick);
                        if let Some(done) = self.run(&mut alt) {
                            *stack = alt;
                            return Some(done);
                        }
                    }
                    return None;
                }
                Formula::Mu(_, ref b) | Formula::Nu(_, ref b) => {
                    let ib = self.arena.lookup(b).unwrap();
                    self.push_formula(stack.last_mut().unwrap(), depth, fid, ib);
                }
                Formula::Var(_) => {
                    let fx = self.arena.fx_of(fid).expect("bound variable");
                    self.push_formula(stack.last_mut().unwrap(), depth, fid, fx);
                }
                Formula::Boxm(_, ref b) => {
                    if self.logic.reflexive() {
                        let ib = self.arena.lookup(b).unwrap();
                        self.push_formula(stack.last_mut().unwrap(), depth, fid, ib);
                    }
                }
            }
        }

        // Early cycle reject before spending work on children.
        if self.has_lfp_cycle(stack) {
            return None;
        }

        // Requirements: diamond bodies, plus box bodies under seriality.
        let depth = stack.len() - 1;
        let set = stack.last().unwrap().set.clone();
        let mut reqs: Vec<(FormulaId, Vec<FormulaId>)> = Vec::new();
        for &fid in &set {
            let body = match self.arena.formula(fid) {
                Formula::Diam(_, b) => Some(self.arena.lookup(b).unwrap()),
                Formula::Boxm(_, b) if self.logic.serial() => {
                    Some(self.arena.lookup(b).unwrap())
                }
                _ => None,
            };
            if let Some(b) = body {
                match reqs.iter_mut().find(|(rb, _)| *rb == b) {
                    Some((_, premises)) => premises.push(fid),
                    None => reqs.push((b, vec![fid])),
                }
            }
        }
        reqs.sort_by_key(|(b, _)| *b);
        self.discharge(stack, depth, reqs, 0)
    }

    fn discharge(
        &mut self,
        stack: &mut Vec<Level>,
        depth: usize,
        reqs: Vec<(FormulaId, Vec<FormulaId>)>,
        i: usize,
    ) -> Option<DoneLevel> {
        if i == reqs.len() {
            if self.has_lfp_cycle(stack) {
                return None;
            }
            let lvl = stack.last().unwrap();
            return Some(DoneLevel {
                set: lvl.set.clone(),
                loops: lvl.loops.iter().map(|(_, d)| *d).collect(),
                children: lvl.done_children.clone(),
            });
        }
        let (body, ref premises) = reqs[i];
        let load = self.child_load(body, &stack[depth].set);
        // A matching ancestor signature folds the child onto the path.
        let target = stack.iter().enumerate().find_map(|(d, lvl)| {
            (lvl.step == Some(body) && lvl.load == load).then_some(d)
        });
        match target {
            Some(anc) => {
                let mut edges = Vec::new();
                for &prem in premises {
                    edges.push(((depth, prem), (anc, body)));
                }
                for &fid in stack[depth].set.clone().iter() {
                    if let Formula::Boxm(_, inner) = self.arena.formula(fid) {
                        let ib = self.arena.lookup(inner).unwrap();
                        edges.push(((depth, fid), (anc, ib)));
                        edges.push(((depth, fid), (anc, fid)));
                    }
                }
                let top = stack.last_mut().unwrap();
                let edges_before = top.edges.len();
                top.edges.extend(edges);
                top.loops.push((premises.clone(), anc));
                let out = self.discharge(stack, depth, reqs.clone(), i + 1);
                if out.is_none() {
                    // Undo for sibling alternatives explored by callers.
                    let top = stack.last_mut().unwrap();
                    top.loops.pop();
                    top.edges.truncate(edges_before);
                }
                out
            }
            None => {
                let sig = (Some(body), load.iter().copied().collect::<Vec<_>>());
                if self.signatures.insert(sig) {
                    self.stats.distinct_signatures = self.signatures.len();
                }
                let mut child = Level {
                    step: Some(body),
                    load: load.clone(),
                    set: BTreeSet::new(),
                    queue: Vec::new(),
                    edges: Vec::new(),
                    loops: Vec::new(),
                    done_children: Vec::new(),
                };
                let cd = depth + 1;
                for &fid in &load {
                    if child.set.insert(fid) {
                        child.queue.push(fid);
                    }
                }
                // Edges into the new child: requirement premises to the body,
                // boxes to their bodies and themselves.
                for &prem in premises {
                    child.edges.push(((depth, prem), (cd, body)));
                }
                for &fid in stack[depth].set.clone().iter() {
                    if let Formula::Boxm(_, inner) = self.arena.formula(fid) {
                        let ib = self.arena.lookup(inner).unwrap();
                        child.edges.push(((depth, fid), (cd, ib)));
                        child.edges.push(((depth, fid), (cd, fid)));
                    }
                }
                stack.push(child);
                let done = self.run(stack);
                stack.pop();
                match done {
                    Some(d) => {
                        stack.last_mut().unwrap().done_children.push(d);
                        let out = self.discharge(stack, depth, reqs.clone(), i + 1);
                        if out.is_none() {
                            stack.last_mut().unwrap().done_children.pop();
                        }
                        out
                    }
                    None => None,
                }
            }
        }
    }

    fn push_formula(&mut self, level: &mut Level, depth: usize, premise: FormulaId, fid: FormulaId) {
        level.edges.push(((depth, premise), (depth, fid)));
        if level.set.insert(fid) {
            level.queue.push(fid);
        }
    }

    /// Rejects when some least-fixed-point occurrence lies on a dependency
    /// cycle among the path levels (loop edges included).
    fn has_lfp_cycle(&mut self, stack: &[Level]) -> bool {
        let edges: Vec<&(Node, Node)> = stack.iter().flat_map(|l| l.edges.iter()).collect();
        for x in 0..self.arena.n_lfp() {
            // Occurrence nodes of this variable.
            let occs: Vec<Node> = stack
                .iter()
                .enumerate()
                .flat_map(|(d, l)| {
                    l.set
                        .iter()
                        .filter(|&&fid| self.arena.lfp_base(fid, x) == 1)
                        .map(move |&fid| (d, fid))
                })
                .collect();
            for &start in &occs {
                // DFS over x-live edges; reaching start again closes a cycle.
                let mut seen: BTreeSet<Node> = BTreeSet::new();
                let mut todo = vec![start];
                while let Some(u) = todo.pop() {
                    for &&(from, to) in &edges {
                        if from != u || !self.arena.edge_live(from.1, x) {
                            continue;
                        }
                        if to == start {
                            return true;
                        }
                        if seen.insert(to) {
                            todo.push(to);
                        }
                    }
                }
            }
        }
        false
    }
}

/// Decides satisfiability of a closed single-agent formula for K4, D4, or S4.
pub fn solve_k4(f: &Formula, logic: K4Logic) -> Result<(K4Verdict, K4Stats), K4Error> {
    if !f.is_closed() {
        return Err(K4Error::OpenFormula);
    }
    let agents: Vec<String> = f.agents().into_iter().collect();
    if agents.len() > 1 {
        return Err(K4Error::MultiAgent(agents));
    }
    let agent = agents.first().cloned().unwrap_or_else(|| "a".to_string());
    let arena = Arena::build(f);
    let root_id = arena.lookup(&arena.root).expect("root interned");
    let mut search = Search {
        arena: &arena,
        logic,
        stats: K4Stats {
            formula_size: crate::formula::size(&arena.root),
            ..K4Stats::default()
        },
        signatures: BTreeSet::new(),
        steps: 0,
    };
    let root = Level {
        step: None,
        load: [root_id].into(),
        set: [root_id].into(),
        queue: vec![root_id],
        edges: Vec::new(),
        loops: Vec::new(),
        done_children: Vec::new(),
    };
    let mut stack = vec![root];
    let done = search.run(&mut stack);
    let stats = search.stats.clone();
    match done {
        None => Ok((K4Verdict::Unsat, stats)),
        Some(tree) => {
            let pm = build_model(&arena, &agent, logic, &tree);
            debug_assert_eq!(modelcheck::check(&pm, &arena.root), Ok(true));
            Ok((K4Verdict::Sat(pm), stats))
        }
    }
}

/// Materializes the witness from the accepted level tree: tree edges plus
/// loop edges, then the reflexive/serial additions and the transitive
/// closure.
fn build_model(arena: &Arena, agent: &str, logic: K4Logic, root: &DoneLevel) -> PointedModel {
    let mut names = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut props: Vec<Vec<String>> = Vec::new();

    fn walk(
        arena: &Arena,
        lvl: &DoneLevel,
        path: &mut Vec<usize>,
        names: &mut Vec<String>,
        edges: &mut Vec<(usize, usize)>,
        props: &mut Vec<Vec<String>>,
    ) -> usize {
        let id = names.len();
        names.push(format!("w{id}"));
        props.push(
            lvl.set
                .iter()
                .filter_map(|&fid| match arena.formula(fid) {
                    Formula::Prop(p) => Some(p.clone()),
                    _ => None,
                })
                .collect(),
        );
        path.push(id);
        for &anc in &lvl.loops {
            edges.push((id, path[anc]));
        }
        for child in &lvl.children {
            let cid = walk(arena, child, path, names, edges, props);
            edges.push((id, cid));
        }
        path.pop();
        id
    }

    let mut path = Vec::new();
    walk(arena, root, &mut path, &mut names, &mut edges, &mut props);

    let n = names.len();
    let mut rel: BTreeSet<(usize, usize)> = edges.into_iter().collect();
    if logic.reflexive() {
        for s in 0..n {
            rel.insert((s, s));
        }
    } else if logic.serial() {
        for s in 0..n {
            if !rel.iter().any(|&(u, _)| u == s) {
                rel.insert((s, s));
            }
        }
    }
    rel = close_relation(&rel, n, Condition::Four);

    let mut model = KripkeModel::new(names);
    for (u, v) in rel {
        model.add_edge_ids(agent, u, v);
    }
    for (s, ps) in props.iter().enumerate() {
        for p in ps {
            model.set_prop_id(s, p);
        }
    }
    PointedModel { model, point: 0 }
}
