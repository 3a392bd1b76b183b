//! Prefixed tableau for satisfiability under an arbitrary logic spec.
//!
//! Branches carry prefixed formulas, where a prefix is a sequence of
//! (agent, formula) steps written `a<psi>` and joined with dots. Rule
//! applications record dependency edges between prefixed formulas; a branch
//! is fixed-point-closed when some least-fixed-point variable X recurs more
//! than `kappa` times along a single dependency path (cycles pump the count
//! to the threshold). Open maximal branches are turned into models, which
//! are re-verified before a Sat verdict is returned.

use crate::formula::{Condition, Formula, LogicSpec, rename_binders};
use crate::kripke::{KripkeModel, PointedModel, close_relation};
use crate::modelcheck;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableauConfig {
    /// Threshold for fixed-point closure: a branch closes when some
    /// least-fixed-point variable appears more than `kappa` times on one
    /// dependency path. Stands in for the small-model bound; Unsat verdicts
    /// are relative to it.
    pub kappa: usize,
    /// Longest prefix the search may create; longer branches become Unknown.
    pub max_prefix_len: usize,
    /// Global budget on rule applications across the whole search.
    pub max_nodes: usize,
    /// Sufficiency cutoff: prefixes are not extended beyond this depth, and
    /// a branch that is saturated up to the cutoff counts as open if its
    /// extracted model verifies. The theoretically adequate depth is doubly
    /// exponential and practical only for trivial inputs, so this is off by
    /// default.
    pub sufficiency: Option<usize>,
}

impl Default for TableauConfig {
    fn default() -> Self {
        TableauConfig {
            kappa: 3,
            max_prefix_len: 12,
            max_nodes: 40_000,
            sufficiency: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundHit {
    PrefixLen,
    NodeBudget,
}

#[derive(Debug, Clone)]
pub enum Verdict {
    /// A verified witness: the model satisfies the formula and its frame
    /// passes every condition of the spec.
    Sat(PointedModel),
    /// Every branch closed within the configuration.
    Unsat(TableauConfig),
    /// Some branch hit a bound while still undetermined.
    Unknown(BoundHit),
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, Verdict::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, Verdict::Unsat(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Sat(_) => write!(f, "SAT"),
            Verdict::Unsat(_) => write!(f, "UNSAT"),
            Verdict::Unknown(_) => write!(f, "UNKNOWN"),
        }
    }
}

pub type FormulaId = u32;
pub type PrefixId = u32;
pub type NodeId = u32;
type AgentId = u16;

/// Interned subformula table for one root formula, with fixed-point
/// bookkeeping (binder map, least-fixed-point variable order).
pub struct Arena {
    pub root: Formula,
    formulas: Vec<Rc<Formula>>,
    ids: HashMap<Formula, FormulaId>,
    pub agents: Vec<String>,
    /// Formula id of `fx(X)` for each variable id occurring in the root.
    fx_of_var: HashMap<FormulaId, FormulaId>,
    /// Least-fixed-point variables, as ids of their `Var` formulas.
    lfp_vars: Vec<FormulaId>,
    /// For a `Var(Y)` formula id, the lfp indices x with x < Y (strictly):
    /// dependency edges out of Y-nodes are dead for those x.
    excluded: HashMap<FormulaId, Vec<bool>>,
}

impl Arena {
    pub fn build(f: &Formula) -> Arena {
        let root = rename_binders(f);
        let mut arena = Arena {
            root: root.clone(),
            formulas: Vec::new(),
            ids: HashMap::new(),
            agents: Vec::new(),
            fx_of_var: HashMap::new(),
            lfp_vars: Vec::new(),
            excluded: HashMap::new(),
        };
        arena.intern_all(&root);
        // Binder map and variable order.
        let mut binders: Vec<(String, Formula, bool)> = Vec::new(); // (var, fx, is_mu)
        fn collect(f: &Formula, out: &mut Vec<(String, Formula, bool)>) {
            match f {
                Formula::Mu(x, b) => {
                    out.push((x.clone(), f.clone(), true));
                    collect(b, out);
                }
                Formula::Nu(x, b) => {
                    out.push((x.clone(), f.clone(), false));
                    collect(b, out);
                }
                Formula::And(a, b) | Formula::Or(a, b) => {
                    collect(a, out);
                    collect(b, out);
                }
                Formula::Boxm(_, b) | Formula::Diam(_, b) => collect(b, out),
                _ => {}
            }
        }
        collect(&root, &mut binders);
        for (x, fxf, is_mu) in &binders {
            let var_id = arena.intern(&Formula::Var(x.clone()));
            let fx_id = arena.intern(fxf);
            arena.fx_of_var.insert(var_id, fx_id);
            if *is_mu {
                arena.lfp_vars.push(var_id);
            }
        }
        // excluded[Var(Y)][x] = fx(lfp x) strictly below fx(Y).
        let subs_of: HashMap<FormulaId, BTreeSet<Formula>> = binders
            .iter()
            .map(|(x, fxf, _)| {
                (
                    arena.intern(&Formula::Var(x.clone())),
                    crate::formula::subformulas(fxf),
                )
            })
            .collect();
        for (x, fxf, _) in &binders {
            let y_id = arena.intern(&Formula::Var(x.clone()));
            let mut mask = vec![false; arena.lfp_vars.len()];
            for (i, &xv) in arena.lfp_vars.clone().iter().enumerate() {
                let fx_x = &arena.formulas[arena.fx_of_var[&xv] as usize];
                if **fx_x != *fxf && subs_of[&y_id].contains(fx_x) {
                    mask[i] = true;
                }
            }
            arena.excluded.insert(y_id, mask);
        }
        arena
    }

    fn intern_all(&mut self, f: &Formula) {
        self.intern(f);
        match f {
            Formula::And(a, b) | Formula::Or(a, b) => {
                self.intern_all(a);
                self.intern_all(b);
            }
            Formula::Boxm(a, b) | Formula::Diam(a, b) => {
                self.agent_id(a);
                self.intern_all(b);
            }
            Formula::Mu(_, b) | Formula::Nu(_, b) => self.intern_all(b),
            _ => {}
        }
    }

    fn intern(&mut self, f: &Formula) -> FormulaId {
        if let Some(&id) = self.ids.get(f) {
            return id;
        }
        let id = self.formulas.len() as FormulaId;
        self.formulas.push(Rc::new(f.clone()));
        self.ids.insert(f.clone(), id);
        id
    }

    pub fn lookup(&self, f: &Formula) -> Option<FormulaId> {
        self.ids.get(f).copied()
    }

    pub fn formula(&self, id: FormulaId) -> &Formula {
        &self.formulas[id as usize]
    }

    fn agent_id(&mut self, name: &str) -> AgentId {
        if let Some(i) = self.agents.iter().position(|a| a == name) {
            return i as AgentId;
        }
        self.agents.push(name.to_string());
        (self.agents.len() - 1) as AgentId
    }

    pub fn n_lfp(&self) -> usize {
        self.lfp_vars.len()
    }

    /// Formula id of `fx(X)` for a `Var` formula id.
    pub fn fx_of(&self, var: FormulaId) -> Option<FormulaId> {
        self.fx_of_var.get(&var).copied()
    }

    /// Is this formula the occurrence of the x-th least-fixed-point variable?
    pub fn lfp_base(&self, f: FormulaId, x: usize) -> u32 {
        (f == self.lfp_vars[x]) as u32
    }

    /// A dependency edge out of this premise is live for the x-th
    /// least-fixed-point variable unless the premise is a variable bound
    /// strictly above it.
    pub fn edge_live(&self, premise_formula: FormulaId, x: usize) -> bool {
        match self.excluded.get(&premise_formula) {
            Some(mask) => !mask[x],
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PrefixInfo {
    parent: Option<PrefixId>,
    agent: AgentId,
    step: FormulaId,
    len: u16,
}

/// The tableau rules. Names follow the usual prefixed-tableau rule table;
/// `LittleD`, `LittleT`, `LittleB` are the (d), (t), (b) rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Fix,
    VarX,
    And,
    Or,
    B,
    D,
    LittleD,
    Four,
    LittleT,
    LittleB,
    B4,
    B5,
    B55,
    D5,
    D55,
}

impl Rule {
    /// Does this rule create a new prefix?
    pub fn creates_prefix(self) -> bool {
        matches!(self, Rule::D | Rule::LittleD | Rule::D5 | Rule::D55)
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::Fix => "fix",
            Rule::VarX => "X",
            Rule::And => "and",
            Rule::Or => "or",
            Rule::B => "B",
            Rule::D => "D",
            Rule::LittleD => "d",
            Rule::Four => "4",
            Rule::LittleT => "t",
            Rule::LittleB => "b",
            Rule::B4 => "b4",
            Rule::B5 => "B5",
            Rule::B55 => "B55",
            Rule::D5 => "D5",
            Rule::D55 => "D55",
        }
    }
}

/// One enabled, not-yet-applied rule application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleInstance {
    pub rule: Rule,
    pub premise: NodeId,
    /// For (B)/(4): the existing child prefix receiving the conclusion.
    /// For (B55): the existing sibling prefix.
    pub target: Option<PrefixId>,
}

/// A tableau branch: prefixed formulas, prefixes, the rule-application log,
/// and saturating per-path occurrence counters for fixed-point closure.
#[derive(Clone)]
pub struct Branch {
    nodes: Vec<(PrefixId, FormulaId)>,
    node_ids: HashMap<(PrefixId, FormulaId), NodeId>,
    prefixes: Vec<PrefixInfo>,
    prefix_ids: HashMap<(PrefixId, AgentId, FormulaId), PrefixId>,
    children: HashMap<PrefixId, Vec<PrefixId>>,
    applied: HashSet<RuleInstance>,
    dep_out: Vec<Vec<NodeId>>,
    /// counts[x][node]: max occurrences of lfp var x on a dependency path
    /// ending at the node, saturated at kappa+1.
    counts: Vec<Vec<u32>>,
    kappa: u32,
    prop_closed: bool,
    fp_closed: bool,
}

impl Branch {
    fn new(arena: &Arena, kappa: usize) -> Branch {
        let mut b = Branch {
            nodes: Vec::new(),
            node_ids: HashMap::new(),
            prefixes: vec![PrefixInfo {
                parent: None,
                agent: 0,
                step: 0,
                len: 0,
            }],
            prefix_ids: HashMap::new(),
            children: HashMap::new(),
            applied: HashSet::new(),
            dep_out: Vec::new(),
            counts: vec![Vec::new(); arena.n_lfp()],
            kappa: kappa as u32,
            prop_closed: false,
            fp_closed: false,
        };
        let root_id = arena.lookup(&arena.root).expect("root interned");
        b.add_node(arena, 0, root_id);
        b
    }

    pub const ROOT_PREFIX: PrefixId = 0;

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_prefixes(&self) -> usize {
        self.prefixes.len()
    }

    pub fn prefix_len(&self, p: PrefixId) -> usize {
        self.prefixes[p as usize].len as usize
    }

    pub fn contains(&self, prefix: PrefixId, formula: FormulaId) -> bool {
        self.node_ids.contains_key(&(prefix, formula))
    }

    pub fn node(&self, id: NodeId) -> (PrefixId, FormulaId) {
        self.nodes[id as usize]
    }

    pub fn node_list(&self) -> &[(PrefixId, FormulaId)] {
        &self.nodes
    }

    /// All recorded dependency edges as node-id pairs.
    pub fn dep_edge_list(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (u, targets) in self.dep_out.iter().enumerate() {
            for &v in targets {
                out.push((u as NodeId, v));
            }
        }
        out
    }

    /// (parent, agent index, step formula) of a prefix; None for the root.
    pub fn prefix_step(&self, p: PrefixId) -> Option<(PrefixId, u16, FormulaId)> {
        let info = &self.prefixes[p as usize];
        info.parent.map(|par| (par, info.agent, info.step))
    }

    /// Is one prefix a strict ancestor of another?
    pub fn is_strict_prefix(&self, anc: PrefixId, desc: PrefixId) -> bool {
        let mut cur = desc;
        while let Some(parent) = self.prefixes[cur as usize].parent {
            if parent == anc {
                return true;
            }
            cur = parent;
        }
        false
    }

    /// Prefix rendering: `a<psi>` steps joined with dots; the root is `e`.
    pub fn render_prefix(&self, arena: &Arena, p: PrefixId) -> String {
        let info = &self.prefixes[p as usize];
        match info.parent {
            None => "e".to_string(),
            Some(parent) => {
                let step = format!(
                    "{}<{}>",
                    arena.agents[info.agent as usize],
                    compact(&crate::formula::print(arena.formula(info.step)))
                );
                if parent == 0 {
                    step
                } else {
                    format!("{}.{}", self.render_prefix(arena, parent), step)
                }
            }
        }
    }

    fn add_node(&mut self, arena: &Arena, prefix: PrefixId, formula: FormulaId) -> NodeId {
        if let Some(&id) = self.node_ids.get(&(prefix, formula)) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push((prefix, formula));
        self.node_ids.insert((prefix, formula), id);
        self.dep_out.push(Vec::new());
        for x in 0..self.counts.len() {
            let base = arena.lfp_base(formula, x);
            self.counts[x].push(base);
            if base > self.kappa {
                self.fp_closed = true;
            }
        }
        // Propositional closure check.
        match arena.formula(formula) {
            Formula::Ff => self.prop_closed = true,
            Formula::Prop(p) => {
                if let Some(neg) = arena.lookup(&Formula::NegProp(p.clone())) {
                    if self.contains(prefix, neg) {
                        self.prop_closed = true;
                    }
                }
            }
            Formula::NegProp(p) => {
                if let Some(pos) = arena.lookup(&Formula::Prop(p.clone())) {
                    if self.contains(prefix, pos) {
                        self.prop_closed = true;
                    }
                }
            }
            _ => {}
        }
        id
    }

    fn add_prefix(
        &mut self,
        parent: PrefixId,
        agent: AgentId,
        step: FormulaId,
    ) -> (PrefixId, bool) {
        if let Some(&id) = self.prefix_ids.get(&(parent, agent, step)) {
            return (id, false);
        }
        let id = self.prefixes.len() as PrefixId;
        self.prefixes.push(PrefixInfo {
            parent: Some(parent),
            agent,
            step,
            len: self.prefixes[parent as usize].len + 1,
        });
        self.prefix_ids.insert((parent, agent, step), id);
        self.children.entry(parent).or_default().push(id);
        (id, true)
    }

    /// Records a dependency edge and relaxes the saturating counters.
    fn add_edge(&mut self, arena: &Arena, from: NodeId, to: NodeId) {
        if self.dep_out[from as usize].contains(&to) {
            return;
        }
        self.dep_out[from as usize].push(to);
        let premise_formula = self.nodes[from as usize].1;
        for x in 0..self.counts.len() {
            if !arena.edge_live(premise_formula, x) {
                continue;
            }
            let cand =
                (self.counts[x][from as usize] + arena.lfp_base(self.nodes[to as usize].1, x))
                    .min(self.kappa + 1);
            if cand > self.counts[x][to as usize] {
                self.counts[x][to as usize] = cand;
                self.relax(arena, to, x);
            }
        }
    }

    fn relax(&mut self, arena: &Arena, start: NodeId, x: usize) {
        let mut queue = vec![start];
        while let Some(u) = queue.pop() {
            if self.counts[x][u as usize] > self.kappa {
                self.fp_closed = true;
            }
            let premise_formula = self.nodes[u as usize].1;
            if !arena.edge_live(premise_formula, x) {
                continue;
            }
            let base_u = self.counts[x][u as usize];
            for &v in self.dep_out[u as usize].clone().iter() {
                let cand =
                    (base_u + arena.lfp_base(self.nodes[v as usize].1, x)).min(self.kappa + 1);
                if cand > self.counts[x][v as usize] {
                    self.counts[x][v as usize] = cand;
                    queue.push(v);
                }
            }
        }
    }

    /// `sigma ff` present, or complementary literals share a prefix.
    pub fn is_prop_closed(&self) -> bool {
        self.prop_closed
    }

    /// Some least-fixed-point variable appears more than `kappa` times on a
    /// single dependency path.
    pub fn is_fp_closed(&self) -> bool {
        self.fp_closed
    }

    fn is_alpha_flat(&self, spec: &LogicSpec, arena: &Arena, prefix: PrefixId, agent: &str) -> bool {
        let info = &self.prefixes[prefix as usize];
        match info.parent {
            None => false,
            Some(_) => {
                arena.agents[info.agent as usize] == agent
                    && spec.has(agent, Condition::Five)
            }
        }
    }
}

fn compact(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// A tableau search context: the interned root formula, the logic, and the
/// configuration.
pub struct Tableau {
    pub arena: Arena,
    pub spec: LogicSpec,
    pub cfg: TableauConfig,
}

impl Tableau {
    pub fn new(f: &Formula, spec: &LogicSpec, cfg: TableauConfig) -> Tableau {
        Tableau {
            arena: Arena::build(f),
            spec: spec.clone(),
            cfg,
        }
    }

    pub fn initial_branch(&self) -> Branch {
        Branch::new(&self.arena, self.cfg.kappa)
    }

    /// All enabled rule instances not yet applied on this branch, in the
    /// deterministic order the solver considers them.
    pub fn applicable_rules(&self, b: &Branch) -> Vec<RuleInstance> {
        let mut out = Vec::new();
        for (nid, &(prefix, fid)) in b.nodes.iter().enumerate() {
            let nid = nid as NodeId;
            let info = &b.prefixes[prefix as usize];
            match self.arena.formula(fid) {
                Formula::Mu(_, _) | Formula::Nu(_, _) => {
                    out.push(RuleInstance {
                        rule: Rule::Fix,
                        premise: nid,
                        target: None,
                    });
                }
                Formula::Var(_) => {
                    out.push(RuleInstance {
                        rule: Rule::VarX,
                        premise: nid,
                        target: None,
                    });
                }
                Formula::And(_, _) => out.push(RuleInstance {
                    rule: Rule::And,
                    premise: nid,
                    target: None,
                }),
                Formula::Or(_, _) => out.push(RuleInstance {
                    rule: Rule::Or,
                    premise: nid,
                    target: None,
                }),
                Formula::Boxm(agent, _) => {
                    let conds = self.spec.conditions(agent);
                    if conds.contains(&Condition::T) {
                        out.push(RuleInstance {
                            rule: Rule::LittleT,
                            premise: nid,
                            target: None,
                        });
                    }
                    // (B) and (4) to every existing child with this agent.
                    if let Some(kids) = b.children.get(&prefix) {
                        for &kid in kids {
                            if self.arena.agents[b.prefixes[kid as usize].agent as usize] != *agent
                            {
                                continue;
                            }
                            out.push(RuleInstance {
                                rule: Rule::B,
                                premise: nid,
                                target: Some(kid),
                            });
                            if conds.contains(&Condition::Four) {
                                out.push(RuleInstance {
                                    rule: Rule::Four,
                                    premise: nid,
                                    target: Some(kid),
                                });
                            }
                        }
                    }
                    if conds.contains(&Condition::D) {
                        out.push(RuleInstance {
                            rule: Rule::LittleD,
                            premise: nid,
                            target: None,
                        });
                    }
                    // Rules that move along the step into this prefix.
                    if let Some(parent) = info.parent {
                        if self.arena.agents[info.agent as usize] == *agent {
                            if conds.contains(&Condition::B) {
                                out.push(RuleInstance {
                                    rule: Rule::LittleB,
                                    premise: nid,
                                    target: None,
                                });
                                if conds.contains(&Condition::Four) {
                                    out.push(RuleInstance {
                                        rule: Rule::B4,
                                        premise: nid,
                                        target: None,
                                    });
                                }
                            }
                            if conds.contains(&Condition::Five) {
                                out.push(RuleInstance {
                                    rule: Rule::B5,
                                    premise: nid,
                                    target: None,
                                });
                                if let Some(sibs) = b.children.get(&parent) {
                                    for &sib in sibs {
                                        if sib == prefix {
                                            continue;
                                        }
                                        if self.arena.agents
                                            [b.prefixes[sib as usize].agent as usize]
                                            == *agent
                                        {
                                            out.push(RuleInstance {
                                                rule: Rule::B55,
                                                premise: nid,
                                                target: Some(sib),
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Formula::Diam(agent, _) => {
                    let has5 = self.spec.has(agent, Condition::Five);
                    if !b.is_alpha_flat(&self.spec, &self.arena, prefix, agent) {
                        out.push(RuleInstance {
                            rule: Rule::D,
                            premise: nid,
                            target: None,
                        });
                    } else if has5 {
                        // prefix = parent.a<chi>; (D5) when parent is not
                        // a-flat, (D55) otherwise; both only if the diamond
                        // is absent one step up.
                        let parent = info.parent.expect("flat prefix has a parent");
                        if !b.contains(parent, fid) {
                            if !b.is_alpha_flat(&self.spec, &self.arena, parent, agent) {
                                out.push(RuleInstance {
                                    rule: Rule::D5,
                                    premise: nid,
                                    target: None,
                                });
                            } else {
                                out.push(RuleInstance {
                                    rule: Rule::D55,
                                    premise: nid,
                                    target: None,
                                });
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        out.retain(|inst| !b.applied.contains(inst));
        out
    }

    /// Conclusions of an instance as (prefix-to-create-or-use, formula). For
    /// `Or`, the two disjuncts (the branch splits).
    fn conclusions(&self, b: &Branch, inst: &RuleInstance) -> Conclusions {
        let (prefix, fid) = b.node(inst.premise);
        let f = self.arena.formula(fid).clone();
        match (inst.rule, f) {
            (Rule::Fix, Formula::Mu(_, body)) | (Rule::Fix, Formula::Nu(_, body)) => {
                Conclusions::Same(vec![(prefix, self.arena.lookup(&body).unwrap())])
            }
            (Rule::VarX, Formula::Var(_)) => {
                let fx = self.arena.fx_of_var[&fid];
                Conclusions::Same(vec![(prefix, fx)])
            }
            (Rule::And, Formula::And(a, bd)) => Conclusions::Same(vec![
                (prefix, self.arena.lookup(&a).unwrap()),
                (prefix, self.arena.lookup(&bd).unwrap()),
            ]),
            (Rule::Or, Formula::Or(a, bd)) => Conclusions::Split(
                (prefix, self.arena.lookup(&a).unwrap()),
                (prefix, self.arena.lookup(&bd).unwrap()),
            ),
            (Rule::LittleT, Formula::Boxm(_, body)) => {
                Conclusions::Same(vec![(prefix, self.arena.lookup(&body).unwrap())])
            }
            (Rule::B, Formula::Boxm(_, body)) => {
                Conclusions::Same(vec![(inst.target.unwrap(), self.arena.lookup(&body).unwrap())])
            }
            (Rule::Four, Formula::Boxm(_, _)) => {
                Conclusions::Same(vec![(inst.target.unwrap(), fid)])
            }
            (Rule::B55, Formula::Boxm(_, _)) => {
                Conclusions::Same(vec![(inst.target.unwrap(), fid)])
            }
            (Rule::LittleB, Formula::Boxm(_, body)) => {
                let parent = b.prefixes[prefix as usize].parent.unwrap();
                Conclusions::Same(vec![(parent, self.arena.lookup(&body).unwrap())])
            }
            (Rule::B4, Formula::Boxm(_, _)) | (Rule::B5, Formula::Boxm(_, _)) => {
                let parent = b.prefixes[prefix as usize].parent.unwrap();
                Conclusions::Same(vec![(parent, fid)])
            }
            (Rule::LittleD, Formula::Boxm(agent, body)) => {
                let body_id = self.arena.lookup(&body).unwrap();
                Conclusions::New(prefix, agent_index(&self.arena, &agent), body_id, body_id)
            }
            (Rule::D, Formula::Diam(agent, body)) => {
                let body_id = self.arena.lookup(&body).unwrap();
                Conclusions::New(prefix, agent_index(&self.arena, &agent), body_id, body_id)
            }
            (Rule::D5, Formula::Diam(agent, body)) => {
                let body_id = self.arena.lookup(&body).unwrap();
                Conclusions::New(prefix, agent_index(&self.arena, &agent), body_id, body_id)
            }
            (Rule::D55, Formula::Diam(agent, body)) => {
                // New sibling: child of the parent prefix keyed by the body.
                let parent = b.prefixes[prefix as usize].parent.unwrap();
                let body_id = self.arena.lookup(&body).unwrap();
                Conclusions::New(parent, agent_index(&self.arena, &agent), body_id, body_id)
            }
            (rule, f) => unreachable!("rule {rule:?} on {f}"),
        }
    }

    /// Applies an instance, producing one successor branch (two for `Or`).
    /// Conclusions already present still get their dependency edge recorded.
    pub fn apply(&self, b: &Branch, inst: &RuleInstance) -> Vec<Branch> {
        match self.conclusions(b, inst) {
            Conclusions::Split(left, right) => {
                let mut bl = b.clone();
                bl.applied.insert(*inst);
                self.add_conclusion(&mut bl, inst.premise, left.0, left.1);
                let mut br = b.clone();
                br.applied.insert(*inst);
                self.add_conclusion(&mut br, inst.premise, right.0, right.1);
                vec![bl, br]
            }
            other => {
                let mut nb = b.clone();
                self.apply_mut(&mut nb, inst, other);
                vec![nb]
            }
        }
    }

    fn apply_mut(&self, b: &mut Branch, inst: &RuleInstance, concl: Conclusions) {
        b.applied.insert(*inst);
        match concl {
            Conclusions::Same(list) => {
                for (prefix, fid) in list {
                    self.add_conclusion(b, inst.premise, prefix, fid);
                }
            }
            Conclusions::New(parent, agent, step, fid) => {
                let (prefix, _created) = b.add_prefix(parent, agent, step);
                self.add_conclusion(b, inst.premise, prefix, fid);
            }
            Conclusions::Split(_, _) => unreachable!("splits handled by apply"),
        }
    }

    fn add_conclusion(&self, b: &mut Branch, premise: NodeId, prefix: PrefixId, fid: FormulaId) {
        let node = b.add_node(&self.arena, prefix, fid);
        b.add_edge(&self.arena, premise, node);
    }

    /// Picks the next instance under the scheduling discipline: local
    /// (non-prefix-creating, non-splitting) rules first, then `Or` splits,
    /// then prefix-creating rules, everything in branch insertion order.
    /// Under a sufficiency cutoff, prefixes stop being extended beyond the
    /// cutoff depth (local rules still saturate everywhere); the resulting
    /// truncation is accepted only if its extracted model verifies.
    fn pick(&self, b: &Branch) -> Option<RuleInstance> {
        let mut all = self.applicable_rules(b);
        if let Some(limit) = self.cfg.sufficiency {
            all.retain(|i| {
                !i.rule.creates_prefix() || b.prefix_len(b.node(i.premise).0) < limit
            });
        }
        all.iter()
            .find(|i| !i.rule.creates_prefix() && i.rule != Rule::Or)
            .or_else(|| all.iter().find(|i| i.rule == Rule::Or))
            .or_else(|| all.first())
            .copied()
    }

    /// Depth-first backtracking search over `Or` splits.
    pub fn solve(&self) -> Verdict {
        let mut stack = vec![self.initial_branch()];
        let mut budget = self.cfg.max_nodes;
        let mut bound_hit: Option<BoundHit> = None;
        while let Some(mut b) = stack.pop() {
            loop {
                if b.is_prop_closed() || b.is_fp_closed() {
                    break;
                }
                let inst = match self.pick(&b) {
                    None => {
                        // Maximal open branch: extract and verify.
                        let pm = self.extract_model(&b);
                        let ok = pm.model.satisfies_spec(&self.spec)
                            && modelcheck::check(&pm, &self.arena.root) == Ok(true);
                        if ok {
                            return Verdict::Sat(pm);
                        }
                        bound_hit.get_or_insert(BoundHit::NodeBudget);
                        break;
                    }
                    Some(i) => i,
                };
                if budget == 0 {
                    bound_hit.get_or_insert(BoundHit::NodeBudget);
                    return Verdict::Unknown(bound_hit.unwrap());
                }
                budget -= 1;
                if inst.rule.creates_prefix() {
                    let (prefix, _) = b.node(inst.premise);
                    // (D55) creates a sibling, everything else a child.
                    let base = if inst.rule == Rule::D55 {
                        b.prefix_len(prefix).saturating_sub(1)
                    } else {
                        b.prefix_len(prefix)
                    };
                    if base + 1 > self.cfg.max_prefix_len {
                        bound_hit.get_or_insert(BoundHit::PrefixLen);
                        break;
                    }
                }
                match self.conclusions(&b, &inst) {
                    Conclusions::Split(left, right) => {
                        let mut br = b.clone();
                        br.applied.insert(inst);
                        self.add_conclusion(&mut br, inst.premise, right.0, right.1);
                        stack.push(br);
                        b.applied.insert(inst);
                        self.add_conclusion(&mut b, inst.premise, left.0, left.1);
                    }
                    other => self.apply_mut(&mut b, &inst, other),
                }
            }
        }
        match bound_hit {
            Some(hit) => Verdict::Unknown(hit),
            None => Verdict::Unsat(self.cfg),
        }
    }

    /// Builds the candidate model of an open branch: prefixes as states, the
    /// step edges plus reflexive/serial loops, then symmetric, euclidean,
    /// and transitive closures per agent in that order.
    pub fn extract_model(&self, b: &Branch) -> PointedModel {
        let names: Vec<String> = (0..b.prefixes.len())
            .map(|p| b.render_prefix(&self.arena, p as PrefixId))
            .collect();
        let mut model = KripkeModel::new(names);
        for (agent_idx, agent) in self.arena.agents.iter().enumerate() {
            let mut rel: BTreeSet<(usize, usize)> = BTreeSet::new();
            for (pid, info) in b.prefixes.iter().enumerate() {
                if let Some(parent) = info.parent {
                    if info.agent as usize == agent_idx {
                        rel.insert((parent as usize, pid));
                    }
                }
            }
            let conds = self.spec.conditions(agent);
            if conds.contains(&Condition::T) {
                for s in 0..b.prefixes.len() {
                    rel.insert((s, s));
                }
            } else if conds.contains(&Condition::D) {
                for s in 0..b.prefixes.len() {
                    if !rel.iter().any(|&(u, _)| u == s) {
                        rel.insert((s, s));
                    }
                }
            }
            if conds.contains(&Condition::B) {
                rel = close_relation(&rel, b.prefixes.len(), Condition::B);
            }
            if conds.contains(&Condition::Five) {
                rel = close_relation(&rel, b.prefixes.len(), Condition::Five);
            }
            if conds.contains(&Condition::Four) {
                rel = close_relation(&rel, b.prefixes.len(), Condition::Four);
            }
            for (u, v) in rel {
                model.add_edge_ids(agent, u, v);
            }
        }
        for &(prefix, fid) in &b.nodes {
            if let Formula::Prop(p) = self.arena.formula(fid) {
                model.set_prop_id(prefix as usize, p);
            }
        }
        PointedModel {
            model,
            point: Branch::ROOT_PREFIX as usize,
        }
    }
}

enum Conclusions {
    /// Conclusions at existing prefixes.
    Same(Vec<(PrefixId, FormulaId)>),
    /// A conclusion at a (possibly new) prefix: (parent, agent, step, formula).
    New(PrefixId, AgentId, FormulaId, FormulaId),
    Split((PrefixId, FormulaId), (PrefixId, FormulaId)),
}

fn agent_index(arena: &Arena, name: &str) -> AgentId {
    arena
        .agents
        .iter()
        .position(|a| a == name)
        .expect("agent interned at build") as AgentId
}

/// Solves satisfiability of a closed formula under the spec.
pub fn solve(f: &Formula, spec: &LogicSpec, cfg: TableauConfig) -> Verdict {
    debug_assert!(f.is_closed(), "tableau solve requires a closed formula");
    Tableau::new(f, spec, cfg).solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse, Condition::*};
    use crate::modelcheck::check;

    fn cfg() -> TableauConfig {
        TableauConfig::default()
    }

    #[test]
    fn applicable_rule_examples() {
        // {e <a>p}, K: one (D) instance.
        let f = parse("<a>p").unwrap();
        let t = Tableau::new(&f, &LogicSpec::single("a", &[]), cfg());
        let mut b = t.initial_branch();
        // unfold the root conjunction-free diamond directly: root IS <a>p
        let rules = t.applicable_rules(&b);
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].rule, Rule::D);

        // {e [a]p}, K, no extended prefix: no instance.
        let f = parse("[a]p").unwrap();
        let t = Tableau::new(&f, &LogicSpec::single("a", &[]), cfg());
        let b2 = t.initial_branch();
        assert!(t.applicable_rules(&b2).is_empty());

        // A box landing at a child prefix of a 5-agent enables (B5), whose
        // conclusion sits at the shorter prefix.
        let f = parse("<b>[b]q").unwrap();
        let t = Tableau::new(&f, &LogicSpec::single("b", &[Five]), cfg());
        b = t.initial_branch();
        let d = t.applicable_rules(&b)[0];
        assert_eq!(d.rule, Rule::D);
        b = t.apply(&b, &d).swap_remove(0);
        let rules = t.applicable_rules(&b);
        let b5 = rules.iter().find(|i| i.rule == Rule::B5).expect("B5 enabled");
        let (prefix, fid) = b.node(b5.premise);
        assert_eq!(b.render_prefix(&t.arena, prefix), "b<[b]q>");
        assert_eq!(t.arena.formula(fid), &parse("[b]q").unwrap());
        b = t.apply(&b, b5).swap_remove(0);
        let boxq = t.arena.lookup(&parse("[b]q").unwrap()).unwrap();
        assert!(b.contains(Branch::ROOT_PREFIX, boxq));
    }

    #[test]
    fn apply_examples() {
        let f = parse("(p & <a>q) | [a]p").unwrap();
        let t = Tableau::new(&f, &LogicSpec::single("a", &[]), cfg());
        let b = t.initial_branch();
        let rules = t.applicable_rules(&b);
        assert_eq!(rules[0].rule, Rule::Or);
        let succ = t.apply(&b, &rules[0]);
        assert_eq!(succ.len(), 2);
        let and_id = t.arena.lookup(&parse("p & <a>q").unwrap()).unwrap();
        assert!(succ[0].contains(Branch::ROOT_PREFIX, and_id));
        // (and) adds both conjuncts to one branch.
        let rules = t.applicable_rules(&succ[0]);
        let and_inst = rules.iter().find(|i| i.rule == Rule::And).unwrap();
        let after = t.apply(&succ[0], and_inst).swap_remove(0);
        assert!(after.contains(0, t.arena.lookup(&parse("p").unwrap()).unwrap()));
        assert!(after.contains(0, t.arena.lookup(&parse("<a>q").unwrap()).unwrap()));
    }

    #[test]
    fn prop_closure_examples() {
        let f = parse("p & ~p").unwrap();
        let t = Tableau::new(&f, &LogicSpec::single("a", &[]), cfg());
        let mut b = t.initial_branch();
        assert!(!b.is_prop_closed());
        let inst = t.applicable_rules(&b)[0];
        b = t.apply(&b, &inst).swap_remove(0);
        assert!(b.is_prop_closed());

        // Different prefixes do not clash.
        let f = parse("p & <a>~p").unwrap();
        let t = Tableau::new(&f, &LogicSpec::single("a", &[]), cfg());
        let mut b = t.initial_branch();
        while let Some(inst) = t.pick(&b) {
            b = t.apply(&b, &inst).swap_remove(0);
        }
        assert!(!b.is_prop_closed());
    }

    #[test]
    fn solve_figure_examples() {
        // phi1 is satisfiable under a=K.
        let phi1 = parse("(p & <a>p) & mu X.(~p | [a]X)").unwrap();
        let v = solve(&phi1, &LogicSpec::single("a", &[]), cfg());
        match v {
            Verdict::Sat(pm) => {
                assert!(pm.model.n_states() <= 3);
                assert_eq!(check(&pm, &phi1), Ok(true));
            }
            other => panic!("expected SAT, got {other}"),
        }

        // phi2 is unsatisfiable under b=K5 with kappa 2.
        let phi2 = parse("<b>p & mu X.([b]~p | [b]X)").unwrap();
        let mut c = cfg();
        c.kappa = 2;
        let v = solve(&phi2, &LogicSpec::single("b", &[Five]), c);
        assert!(v.is_unsat(), "expected UNSAT, got {v}");
    }

    #[test]
    fn solve_all_paths_finite() {
        let f = parse("mu X. [a] X").unwrap();
        // Unsat over reflexive frames.
        let v = solve(&f, &LogicSpec::single("a", &[T]), cfg());
        assert!(v.is_unsat(), "expected UNSAT under T, got {v}");
        // Sat over arbitrary frames with a one-state edgeless witness.
        let v = solve(&f, &LogicSpec::single("a", &[]), cfg());
        match v {
            Verdict::Sat(pm) => {
                assert_eq!(pm.model.n_states(), 1);
                assert!(pm.model.relation("a").is_empty());
            }
            other => panic!("expected SAT, got {other}"),
        }
    }

    #[test]
    fn fp_closure_counts() {
        // nu-only branches never fixed-point-close.
        let f = parse("nu X. (p & [a] X)").unwrap();
        let v = solve(&f, &LogicSpec::single("a", &[]), cfg());
        assert!(v.is_sat());

        // A mu loop at one prefix closes for any kappa.
        let f = parse("mu X. (p & X)").unwrap();
        let v = solve(&f, &LogicSpec::single("a", &[]), cfg());
        assert!(v.is_unsat(), "self-looping mu must close, got {v}");
    }

    #[test]
    fn extract_model_examples() {
        // Single-prefix branch for p.
        let f = parse("p").unwrap();
        let t = Tableau::new(&f, &LogicSpec::single("a", &[]), cfg());
        let b = t.initial_branch();
        let pm = t.extract_model(&b);
        assert_eq!(pm.model.n_states(), 1);
        assert!(pm.model.has_prop(0, "p"));

        // T adds a loop at the root for [a]p & p.
        let f = parse("[a]p & p").unwrap();
        let t = Tableau::new(&f, &LogicSpec::single("a", &[T]), cfg());
        let mut b = t.initial_branch();
        while let Some(inst) = t.pick(&b) {
            b = t.apply(&b, &inst).swap_remove(0);
        }
        let pm = t.extract_model(&b);
        assert!(pm.model.relation("a").contains(&(0, 0)));
        assert_eq!(check(&pm, &f), Ok(true));
    }

    #[test]
    fn sufficiency_cutoff_accepts_verified_truncations() {
        // Under seriality the truncated chain closes into a loop that the
        // model checker accepts, so the cutoff turns Unknown into SAT.
        let f = parse("nu X. (p & <a>X)").unwrap();
        let spec = LogicSpec::single("a", &[Condition::D]);
        let mut c = cfg();
        c.max_prefix_len = 4;
        c.max_nodes = 400;
        let v = solve(&f, &spec, c);
        assert!(matches!(v, Verdict::Unknown(_)), "got {v}");
        c.sufficiency = Some(2);
        match solve(&f, &spec, c) {
            Verdict::Sat(pm) => assert_eq!(check(&pm, &f), Ok(true)),
            other => panic!("expected SAT with sufficiency cutoff, got {other}"),
        }
    }

    #[test]
    fn unknown_on_growing_nu_diamond() {
        // nu X. <a>X forces ever-deeper prefixes; with a small budget the
        // search reports Unknown rather than guessing.
        let f = parse("nu X. <a> X").unwrap();
        let c = TableauConfig {
            kappa: 3,
            max_prefix_len: 4,
            max_nodes: 1000,
            sufficiency: None,
        };
        let v = solve(&f, &LogicSpec::single("a", &[]), c);
        assert!(matches!(v, Verdict::Unknown(_)), "got {v}");
    }
}
