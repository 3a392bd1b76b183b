//! Encoding of tableau search into the mu-calculus, for logics where no
//! agent has the euclidean condition.
//!
//! Dependency graphs over the subformulas of the input serve as
//! propositional variables; each (agent, subformula) pair serves as an
//! agent. The `rules` formula describes maximal, propositionally open
//! branches; the `fp`/`ip` families describe finite and infinite dependency
//! paths through the branch; the full encoding conjoins `rules`, the
//! invariant negation of `inf_path`, and the demand that the root carries
//! the input formula.
//!
//! Graphs are enumerated tightly: only edges generated by the same-prefix
//! rules (with the disjunction choice), and only label marks realizable by
//! a rule interaction, which is exactly the family of graphs a maximal
//! branch can produce. When the input has no least-fixed-point variables
//! the path machinery is vacuous, so graphs collapse to their vertex sets
//! with every realizable mark switched on.

use crate::formula::{
    big_and, big_or, implies, negate, rc, subformulas_ordered, Condition, Formula, LogicSpec,
};
use crate::kripke::{KripkeModel, PointedModel};
use crate::tableau::{Branch, PrefixId, Tableau};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub const LABEL_IN_TOP: u8 = 1;
pub const LABEL_IN_BOT: u8 = 2;
pub const LABEL_OUT_TOP: u8 = 4;
pub const LABEL_OUT_BOT: u8 = 8;
const ALL_LABELS: u8 = 15;

/// Vertex ids index the encoder's formula table (the subformulas of the
/// input, extended by the box formulas the path search constructs).
pub type VertexId = u32;

/// A labelled subformula graph describing one tableau prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DepGraph {
    pub vertices: BTreeSet<VertexId>,
    /// Rule-generated edges; the per-variable edge sets drop edges whose
    /// source is a variable bound strictly above.
    pub edges: BTreeSet<(VertexId, VertexId)>,
    pub labels: BTreeMap<VertexId, u8>,
}

impl DepGraph {
    pub fn has_label(&self, v: VertexId, mask: u8) -> bool {
        self.labels.get(&v).map_or(false, |l| l & mask != 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodeError {
    EuclideanAgent(String),
    CapExceeded(String),
    ClosedBranch,
}

impl fmt::Display for EncodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodeError::EuclideanAgent(a) => {
                write!(f, "agent `{a}` has condition 5; the encoding excludes euclidean agents")
            }
            EncodeError::CapExceeded(msg) => write!(f, "encoding cap exceeded: {msg}"),
            EncodeError::ClosedBranch => write!(f, "branch is propositionally closed"),
        }
    }
}

impl std::error::Error for EncodeError {}

/// Caps keeping the construction at desk scale.
#[derive(Debug, Clone, Copy)]
pub struct EncodeCaps {
    /// Largest admissible |sub(f)|.
    pub sub_cap: usize,
    /// Largest admissible number of graphs.
    pub graph_cap: usize,
}

impl Default for EncodeCaps {
    fn default() -> Self {
        EncodeCaps {
            sub_cap: 4,
            graph_cap: 100_000,
        }
    }
}

pub struct Encoder {
    pub root: Formula,
    pub spec: LogicSpec,
    /// Formula table: subformulas of the root first, then constructed boxes.
    table: Vec<Formula>,
    ids: BTreeMap<Formula, VertexId>,
    n_sub: usize,
    base_agents: Vec<String>,
    /// Least-fixed-point variables: (Var vertex, fx vertex).
    mv: Vec<(VertexId, VertexId)>,
    /// excluded[var vertex] per mv index: edge sources that are variables
    /// bound strictly above the mv variable.
    excluded: BTreeMap<VertexId, Vec<bool>>,
    pub graphs: Vec<DepGraph>,
    graph_names: Vec<String>,
}

impl Encoder {
    pub fn new(f: &Formula, spec: &LogicSpec, caps: EncodeCaps) -> Result<Encoder, EncodeError> {
        let root = crate::formula::rename_binders(f);
        for agent in root.agents() {
            if spec.has(&agent, Condition::Five) {
                return Err(EncodeError::EuclideanAgent(agent));
            }
        }
        let subs = subformulas_ordered(&root);
        if subs.len() > caps.sub_cap {
            return Err(EncodeError::CapExceeded(format!(
                "|sub(f)| = {} exceeds the graph cap {}",
                subs.len(),
                caps.sub_cap
            )));
        }
        let mut enc = Encoder {
            root: root.clone(),
            spec: spec.clone(),
            table: Vec::new(),
            ids: BTreeMap::new(),
            n_sub: subs.len(),
            base_agents: root.agents().into_iter().collect(),
            mv: Vec::new(),
            excluded: BTreeMap::new(),
            graphs: Vec::new(),
            graph_names: Vec::new(),
        };
        for s in &subs {
            enc.intern(s);
        }
        // Fixed-point bookkeeping.
        let mut binders: Vec<(String, Formula, bool)> = Vec::new();
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
            if *is_mu {
                let v = enc.intern(&Formula::Var(x.clone()));
                let fxid = enc.intern(fxf);
                enc.mv.push((v, fxid));
            }
        }
        for (y, fy, _) in &binders {
            let y_id = enc.intern(&Formula::Var(y.clone()));
            let sub_y = crate::formula::subformulas(fy);
            let mask: Vec<bool> = enc
                .mv
                .iter()
                .map(|&(_, fxid)| {
                    let fx_x = enc.table[fxid as usize].clone();
                    fx_x != *fy && sub_y.contains(&fx_x)
                })
                .collect();
            enc.excluded.insert(y_id, mask);
        }
        enc.enumerate(caps)?;
        Ok(enc)
    }

    fn intern(&mut self, f: &Formula) -> VertexId {
        if let Some(&id) = self.ids.get(f) {
            return id;
        }
        let id = self.table.len() as VertexId;
        self.table.push(f.clone());
        self.ids.insert(f.clone(), id);
        id
    }

    pub fn formula(&self, v: VertexId) -> &Formula {
        &self.table[v as usize]
    }

    pub fn lookup(&self, f: &Formula) -> Option<VertexId> {
        self.ids.get(f).copied()
    }

    pub fn n_mv(&self) -> usize {
        self.mv.len()
    }

    fn edge_live(&self, source: VertexId, x: usize) -> bool {
        match self.excluded.get(&source) {
            Some(mask) => !mask[x],
            None => true,
        }
    }

    /// Agent name for the (base agent, step formula) pair; valid in the
    /// formula grammar.
    pub fn enc_agent(&self, base: &str, step: VertexId) -> String {
        format!("{base}_{step}")
    }

    /// Every agent of the encoded vocabulary.
    pub fn enc_agents(&self) -> Vec<String> {
        let mut out = Vec::new();
        for a in &self.base_agents {
            for v in 0..self.n_sub {
                out.push(self.enc_agent(a, v as VertexId));
            }
        }
        out
    }

    pub fn graph_prop(&self, idx: usize) -> Formula {
        Formula::Prop(self.graph_names[idx].clone())
    }

    pub fn graph_name(&self, idx: usize) -> &str {
        &self.graph_names[idx]
    }

    /// Sidecar table: proposition name -> graph description.
    pub fn graph_table(&self) -> Vec<(String, String)> {
        self.graphs
            .iter()
            .enumerate()
            .map(|(i, g)| (self.graph_names[i].clone(), self.describe(g)))
            .collect()
    }

    pub fn describe(&self, g: &DepGraph) -> String {
        let verts: Vec<String> = g
            .vertices
            .iter()
            .map(|&v| {
                let mut marks = String::new();
                if g.has_label(v, LABEL_IN_TOP) {
                    marks.push_str(" in-top");
                }
                if g.has_label(v, LABEL_IN_BOT) {
                    marks.push_str(" in-bot");
                }
                if g.has_label(v, LABEL_OUT_TOP) {
                    marks.push_str(" out-top");
                }
                if g.has_label(v, LABEL_OUT_BOT) {
                    marks.push_str(" out-bot");
                }
                format!("{}{}", self.formula(v), marks)
            })
            .collect();
        let edges: Vec<String> = g
            .edges
            .iter()
            .map(|&(u, v)| format!("{} -> {}", self.formula(u), self.formula(v)))
            .collect();
        format!("vertices: [{}]; edges: [{}]", verts.join(", "), edges.join(", "))
    }

    /// Does the path machinery matter at all? Without least-fixed-point
    /// variables the label and edge structure is irrelevant and graphs
    /// collapse to their vertex sets.
    fn labels_matter(&self) -> bool {
        !self.mv.is_empty()
    }

    // --- graph enumeration -------------------------------------------------

    /// Mandatory same-prefix conclusions of a vertex, and whether it is a
    /// disjunction (handled by choice).
    fn local_conclusions(&self, v: VertexId) -> Vec<VertexId> {
        match self.formula(v).clone() {
            Formula::Mu(_, b) | Formula::Nu(_, b) => vec![self.lookup(&b).unwrap()],
            Formula::Var(x) => vec![self
                .mv_fx_of(&x)
                .expect("bound variable occurs under its binder")],
            Formula::And(a, b) => vec![self.lookup(&a).unwrap(), self.lookup(&b).unwrap()],
            Formula::Boxm(agent, b) if self.spec.has(&agent, Condition::T) => {
                vec![self.lookup(&b).unwrap()]
            }
            _ => vec![],
        }
    }

    fn mv_fx_of(&self, x: &str) -> Option<VertexId> {
        // fx of any variable (mu or nu): search the table for the binder.
        let var = Formula::Var(x.to_string());
        let _ = self.ids.get(&var)?;
        self.table.iter().position(|f| match f {
            Formula::Mu(y, _) | Formula::Nu(y, _) => y == x,
            _ => false,
        }).map(|i| i as VertexId)
    }

    /// Realizable label marks for a vertex.
    fn allowed_labels(&self, v: VertexId) -> (u8, u8) {
        // (required, optional)
        let mut required = 0u8;
        let mut optional = 0u8;
        let f = self.formula(v).clone();
        match &f {
            Formula::Diam(_, _) => required |= LABEL_OUT_BOT,
            Formula::Boxm(agent, _) => {
                if self.spec.has(agent, Condition::D) {
                    required |= LABEL_OUT_BOT;
                } else {
                    optional |= LABEL_OUT_BOT;
                }
                if self.spec.has(agent, Condition::B) {
                    required |= LABEL_OUT_TOP;
                }
            }
            _ => {}
        }
        // (in,top): realizable when this formula can be pushed down from a
        // parent: as a box or diamond body, or as a transferred box.
        let from_above = self.table[..self.n_sub].iter().any(|g| match g {
            Formula::Boxm(_, b) | Formula::Diam(_, b) => **b == f,
            _ => false,
        }) || matches!(&f, Formula::Boxm(agent, _) if self.spec.has(agent, Condition::Four));
        if from_above {
            optional |= LABEL_IN_TOP;
        }
        // (in,bot): realizable when pushed up by a symmetry rule.
        let from_below = self.table[..self.n_sub].iter().any(|g| match g {
            Formula::Boxm(agent, b) => **b == f && self.spec.has(agent, Condition::B),
            _ => false,
        }) || matches!(&f, Formula::Boxm(agent, _)
            if self.spec.has(agent, Condition::B) && self.spec.has(agent, Condition::Four));
        if from_below {
            optional |= LABEL_IN_BOT;
        }
        (required, optional)
    }

    fn enumerate(&mut self, caps: EncodeCaps) -> Result<(), EncodeError> {
        let n = self.n_sub;
        let mut seen_keys: BTreeSet<String> = BTreeSet::new();
        for bits in 0u64..(1u64 << n) {
            let vertices: BTreeSet<VertexId> =
                (0..n as u32).filter(|v| bits >> v & 1 == 1).collect();
            if !self.vertex_set_ok(&vertices) {
                continue;
            }
            // Disjunction choices.
            let ors: Vec<(VertexId, Vec<VertexId>)> = vertices
                .iter()
                .filter_map(|&v| match self.formula(v).clone() {
                    Formula::Or(a, b) => {
                        let ia = self.lookup(&a).unwrap();
                        let ib = self.lookup(&b).unwrap();
                        let present: Vec<VertexId> = [ia, ib]
                            .into_iter()
                            .filter(|t| vertices.contains(t))
                            .collect();
                        if present.is_empty() {
                            None // filtered by vertex_set_ok
                        } else {
                            Some((v, present))
                        }
                    }
                    _ => None,
                })
                .collect();

            if !self.labels_matter() {
                // One representative: all rule edges, all marks.
                let mut edges = BTreeSet::new();
                for &v in &vertices {
                    for c in self.local_conclusions(v) {
                        edges.insert((v, c));
                    }
                }
                for (v, present) in &ors {
                    for t in present {
                        edges.insert((*v, *t));
                    }
                }
                let labels = vertices.iter().map(|&v| (v, ALL_LABELS)).collect();
                let g = DepGraph {
                    vertices,
                    edges,
                    labels,
                };
                self.push_graph(g, &mut seen_keys, caps)?;
                continue;
            }

            // Or-choice odometer.
            let mut choice = vec![0usize; ors.len()];
            loop {
                let mut edges = BTreeSet::new();
                for &v in &vertices {
                    for c in self.local_conclusions(v) {
                        edges.insert((v, c));
                    }
                }
                for (i, (v, present)) in ors.iter().enumerate() {
                    edges.insert((*v, present[choice[i]]));
                }
                // Label odometer over optional bits.
                let opts: Vec<(VertexId, u8, u8)> = vertices
                    .iter()
                    .map(|&v| {
                        let (req, opt) = self.allowed_labels(v);
                        (v, req, opt)
                    })
                    .collect();
                let opt_bits: Vec<(VertexId, u8)> = opts
                    .iter()
                    .flat_map(|&(v, _, opt)| {
                        [LABEL_IN_TOP, LABEL_IN_BOT, LABEL_OUT_TOP, LABEL_OUT_BOT]
                            .into_iter()
                            .filter(move |m| opt & m != 0)
                            .map(move |m| (v, m))
                    })
                    .collect();
                for combo in 0u64..(1u64 << opt_bits.len()) {
                    let mut labels: BTreeMap<VertexId, u8> =
                        opts.iter().map(|&(v, req, _)| (v, req)).collect();
                    for (i, &(v, m)) in opt_bits.iter().enumerate() {
                        if combo >> i & 1 == 1 {
                            *labels.get_mut(&v).unwrap() |= m;
                        }
                    }
                    let g = DepGraph {
                        vertices: vertices.clone(),
                        edges: edges.clone(),
                        labels,
                    };
                    self.push_graph(g, &mut seen_keys, caps)?;
                }
                // Advance or-choice.
                let mut i = 0;
                loop {
                    if i == choice.len() {
                        break;
                    }
                    choice[i] += 1;
                    if choice[i] < ors[i].1.len() {
                        break;
                    }
                    choice[i] = 0;
                    i += 1;
                }
                if i == choice.len() {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Vertex-set conditions of local compatibility: closure under the
    /// deterministic same-prefix rules, at least one disjunct present, no
    /// `ff`, no complementary pair.
    fn vertex_set_ok(&self, vertices: &BTreeSet<VertexId>) -> bool {
        for &v in vertices {
            let f = self.formula(v).clone();
            if f == Formula::Ff {
                return false;
            }
            // A variable is syntactically its own dual; the clash check is
            // about genuine complements.
            if !matches!(f, Formula::Var(_)) {
                if let Some(nid) = self.lookup(&negate(&f)) {
                    if vertices.contains(&nid) {
                        return false;
                    }
                }
            }
            for c in self.local_conclusions(v) {
                if !vertices.contains(&c) {
                    return false;
                }
            }
            if let Formula::Or(a, b) = f {
                let ia = self.lookup(&a).unwrap();
                let ib = self.lookup(&b).unwrap();
                if !vertices.contains(&ia) && !vertices.contains(&ib) {
                    return false;
                }
            }
        }
        true
    }

    fn push_graph(
        &mut self,
        g: DepGraph,
        seen: &mut BTreeSet<String>,
        caps: EncodeCaps,
    ) -> Result<(), EncodeError> {
        let key = self.canonical_key(&g);
        if !seen.insert(key.clone()) {
            return Ok(());
        }
        if self.graphs.len() >= caps.graph_cap {
            return Err(EncodeError::CapExceeded(format!(
                "more than {} graphs",
                caps.graph_cap
            )));
        }
        let name = format!("g_{:x}", fnv1a(key.as_bytes()));
        self.graphs.push(g);
        self.graph_names.push(name);
        Ok(())
    }

    /// Canonical serialization: sorted vertices, edges, label pairs. When
    /// labels are irrelevant the key is the vertex set alone.
    pub fn canonical_key(&self, g: &DepGraph) -> String {
        let mut s = String::new();
        for &v in &g.vertices {
            s.push_str(&format!("v{v};"));
        }
        if self.labels_matter() {
            for &(u, v) in &g.edges {
                s.push_str(&format!("e{u},{v};"));
            }
            for (&v, &l) in &g.labels {
                s.push_str(&format!("l{v}:{l};"));
            }
        }
        s
    }

    pub fn find_graph(&self, g: &DepGraph) -> Option<usize> {
        let key = self.canonical_key(g);
        self.graphs
            .iter()
            .position(|h| self.canonical_key(h) == key)
    }

    // --- child predicates ---------------------------------------------------

    /// Prospective step-child: `chi = Some(x)` for an `agent<x>`-child,
    /// `None` for the agent-level predicate.
    pub fn child(&self, h: &DepGraph, g: &DepGraph, agent: &str, chi: Option<VertexId>) -> bool {
        if let Some(x) = chi {
            let xf = self.formula(x).clone();
            let diam = self
                .lookup(&Formula::Diam(agent.into(), rc(xf.clone())))
                .map_or(false, |d| h.vertices.contains(&d));
            let boxed = self.spec.has(agent, Condition::D)
                && self
                    .lookup(&Formula::Boxm(agent.into(), rc(xf)))
                    .map_or(false, |b| h.vertices.contains(&b));
            if !(diam || boxed) {
                return false;
            }
            if !g.vertices.contains(&x) || !g.has_label(x, LABEL_IN_TOP) {
                return false;
            }
        }
        // Forward box transfer.
        for &v in &h.vertices {
            if let Formula::Boxm(a, b) = self.formula(v).clone() {
                if a != agent {
                    continue;
                }
                let body = self.lookup(&b).unwrap();
                if !g.vertices.contains(&body) || !g.has_label(body, LABEL_IN_TOP) {
                    return false;
                }
                if self.spec.has(&a, Condition::Four)
                    && (!g.vertices.contains(&v) || !g.has_label(v, LABEL_IN_TOP))
                {
                    return false;
                }
            }
        }
        // Backward box transfer for symmetric agents.
        for &v in &g.vertices {
            if let Formula::Boxm(a, b) = self.formula(v).clone() {
                if a != agent || !self.spec.has(&a, Condition::B) {
                    continue;
                }
                let body = self.lookup(&b).unwrap();
                if !h.vertices.contains(&body) || !h.has_label(body, LABEL_IN_BOT) {
                    return false;
                }
                if self.spec.has(&a, Condition::Four)
                    && (!h.vertices.contains(&v) || !h.has_label(v, LABEL_IN_BOT))
                {
                    return false;
                }
            }
        }
        true
    }

    // --- the rules formula ----------------------------------------------------

    /// Invariance over the encoded agent vocabulary.
    fn inv_enc(&self, body: Formula) -> Formula {
        let agents: BTreeSet<String> = self.enc_agents().into_iter().collect();
        crate::formula::inv(&body, &agents)
    }

    pub fn rules(&self) -> Formula {
        let gs = &self.graphs;
        let mut conjuncts: Vec<Formula> = Vec::new();
        conjuncts.push(big_or((0..gs.len()).map(|i| self.graph_prop(i))));
        for i in 0..gs.len() {
            for j in (i + 1)..gs.len() {
                conjuncts.push(negate(&Formula::And(
                    rc(self.graph_prop(i)),
                    rc(self.graph_prop(j)),
                )));
            }
        }
        // Diamond discharge (and box discharge under seriality).
        for (i, g) in gs.iter().enumerate() {
            for &v in &g.vertices {
                let (agent, body, from_box) = match self.formula(v).clone() {
                    Formula::Diam(a, b) => (a, b, false),
                    Formula::Boxm(a, b) => (a, b, true),
                    _ => continue,
                };
                if from_box && !self.spec.has(&agent, Condition::D) {
                    continue;
                }
                let step = self.lookup(&body).unwrap();
                let targets = big_or(
                    gs.iter()
                        .enumerate()
                        .filter(|(_, h)| self.child(g, h, &agent, Some(step)))
                        .map(|(j, _)| self.graph_prop(j)),
                );
                conjuncts.push(implies(
                    self.graph_prop(i),
                    Formula::Diam(self.enc_agent(&agent, step), rc(targets)),
                ));
            }
        }
        // Box conjuncts: every step edge leads to a prospective child.
        for (i, g) in gs.iter().enumerate() {
            for agent in &self.base_agents {
                let targets = rc(big_or(
                    gs.iter()
                        .enumerate()
                        .filter(|(_, h)| self.child(g, h, agent, None))
                        .map(|(j, _)| self.graph_prop(j)),
                ));
                let all_steps = big_and((0..self.n_sub).map(|s| {
                    Formula::Boxm(self.enc_agent(agent, s as VertexId), targets.clone())
                }));
                conjuncts.push(implies(self.graph_prop(i), all_steps));
            }
        }
        self.inv_enc(big_and(conjuncts))
    }

    // --- path relations (finite and infinite dependency paths) -----------------

    /// Edges of a graph live for the x-th least-fixed-point variable.
    fn edges_for(&self, g: &DepGraph, x: Option<usize>) -> BTreeSet<(VertexId, VertexId)> {
        match x {
            None => g.edges.clone(),
            Some(x) => g
                .edges
                .iter()
                .copied()
                .filter(|&(u, _)| self.edge_live(u, x))
                .collect(),
        }
    }

    fn reach(
        edges: &BTreeSet<(VertexId, VertexId)>,
        from: VertexId,
        to: VertexId,
    ) -> bool {
        let mut seen = BTreeSet::new();
        let mut todo = vec![from];
        while let Some(u) = todo.pop() {
            for &(a, b) in edges {
                if a == u && seen.insert(b) {
                    if b == to {
                        return true;
                    }
                    todo.push(b);
                }
            }
        }
        from == to
    }

    /// `T ->_{g[,x]} S`: the S detours (plus the variable occurrence when
    /// `require_x`) lie on a path from T.0 to T.1 in the graph augmented by
    /// the back edge and the S short-circuits.
    pub fn t_arrow(
        &self,
        g: &DepGraph,
        x: Option<usize>,
        require_x: bool,
        t: Option<(VertexId, VertexId)>,
        s: &[(VertexId, VertexId)],
    ) -> bool {
        if let Some((p1, p2)) = t {
            if !g.vertices.contains(&p1)
                || !g.vertices.contains(&p2)
                || !g.has_label(p1, LABEL_IN_TOP)
                || !g.has_label(p2, LABEL_OUT_TOP)
            {
                return false;
            }
        }
        for &(a, b) in s {
            if !g.vertices.contains(&a)
                || !g.vertices.contains(&b)
                || !g.has_label(a, LABEL_OUT_BOT)
                || !g.has_label(b, LABEL_IN_BOT)
            {
                return false;
            }
        }
        let mut edges = self.edges_for(g, x);
        for &(a, b) in s {
            edges.insert((a, b));
        }
        let mut required: Vec<VertexId> = s.iter().flat_map(|&(a, b)| [a, b]).collect();
        if require_x {
            let xv = self.mv[x.expect("require_x needs a variable")].0;
            if !g.vertices.contains(&xv) {
                return false;
            }
            required.push(xv);
        }
        match t {
            Some((p1, p2)) => {
                // Back edge folds repeated round trips into one walk.
                edges.insert((p2, p1));
                required
                    .iter()
                    .all(|&v| Self::reach(&edges, p1, v) && Self::reach(&edges, v, p2))
            }
            None => {
                // Cycle form: everything required on one cycle.
                if required.is_empty() {
                    return true;
                }
                let anchor = required[0];
                required.iter().all(|&v| {
                    Self::reach(&edges, anchor, v) && Self::reach(&edges, v, anchor)
                }) && Self::cycle_through(&edges, anchor)
            }
        }
    }

    fn cycle_through(edges: &BTreeSet<(VertexId, VertexId)>, v: VertexId) -> bool {
        // A nontrivial return: v reaches itself through at least one edge.
        let mut seen = BTreeSet::new();
        let mut todo: Vec<VertexId> = edges
            .iter()
            .filter(|&&(a, _)| a == v)
            .map(|&(_, b)| b)
            .collect();
        while let Some(u) = todo.pop() {
            if u == v {
                return true;
            }
            if seen.insert(u) {
                for &(a, b) in edges {
                    if a == u {
                        todo.push(b);
                    }
                }
            }
        }
        false
    }

    /// `psi ->_{g[,x]} S, psi'`: like the T form but ending at an exit
    /// vertex carrying (out,bot).
    pub fn psi_arrow(
        &self,
        g: &DepGraph,
        x: Option<usize>,
        require_x: bool,
        psi: VertexId,
        s: &[(VertexId, VertexId)],
        psi_exit: VertexId,
    ) -> bool {
        if !g.vertices.contains(&psi)
            || !g.vertices.contains(&psi_exit)
            || !g.has_label(psi_exit, LABEL_OUT_BOT)
        {
            return false;
        }
        for &(a, b) in s {
            if !g.vertices.contains(&a)
                || !g.vertices.contains(&b)
                || !g.has_label(a, LABEL_OUT_BOT)
                || !g.has_label(b, LABEL_IN_BOT)
            {
                return false;
            }
        }
        let mut edges = self.edges_for(g, x);
        for &(a, b) in s {
            edges.insert((a, b));
        }
        edges.insert((psi_exit, psi));
        let mut required: Vec<VertexId> = s.iter().flat_map(|&(a, b)| [a, b]).collect();
        if require_x {
            let xv = self.mv[x.expect("require_x needs a variable")].0;
            if !g.vertices.contains(&xv) {
                return false;
            }
            required.push(xv);
        }
        required
            .iter()
            .all(|&v| Self::reach(&edges, psi, v) && Self::reach(&edges, v, psi_exit))
            && Self::reach(&edges, psi, psi_exit)
    }

    /// Detour candidates: (out,bot) modal sources times (in,bot) returns.
    fn s_candidates(&self, g: &DepGraph) -> Vec<(VertexId, VertexId)> {
        let outs: Vec<VertexId> = g
            .vertices
            .iter()
            .copied()
            .filter(|&v| {
                g.has_label(v, LABEL_OUT_BOT)
                    && matches!(
                        self.formula(v),
                        Formula::Boxm(_, _) | Formula::Diam(_, _)
                    )
            })
            .collect();
        let ins: Vec<VertexId> = g
            .vertices
            .iter()
            .copied()
            .filter(|&v| g.has_label(v, LABEL_IN_BOT))
            .collect();
        let mut out = Vec::new();
        for &a in &outs {
            for &b in &ins {
                out.push((a, b));
            }
        }
        out
    }

    fn subsets(cands: &[(VertexId, VertexId)]) -> Vec<Vec<(VertexId, VertexId)>> {
        let mut out = Vec::new();
        for bits in 0u64..(1u64 << cands.len()) {
            out.push(
                cands
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| bits >> i & 1 == 1)
                    .map(|(_, &p)| p)
                    .collect(),
            );
        }
        out
    }

    /// `nx` of a detour pair: trace (body, [agent]return) inside the child.
    fn nx_pair(&mut self, s: (VertexId, VertexId)) -> (VertexId, VertexId) {
        let (agent, body) = self.modal_parts(s.0);
        let ret = self.formula(s.1).clone();
        let boxed = Formula::Boxm(agent, rc(ret));
        let boxed_id = self.intern(&boxed);
        (body, boxed_id)
    }

    fn modal_parts(&self, v: VertexId) -> (String, VertexId) {
        match self.formula(v).clone() {
            Formula::Boxm(a, b) | Formula::Diam(a, b) => {
                let id = self.lookup(&b).unwrap();
                (a, id)
            }
            other => unreachable!("modal vertex expected, got {other}"),
        }
    }

    /// The step modality of a detour source or exit: the specific step agent
    /// for diamonds, every step agent of the base for boxes.
    fn alpha_modality(&self, v: VertexId, body: Formula) -> Formula {
        match self.formula(v).clone() {
            Formula::Diam(a, b) => {
                let step = self.lookup(&b).unwrap();
                Formula::Diam(self.enc_agent(&a, step), rc(body))
            }
            Formula::Boxm(a, _) => big_or(
                (0..self.n_sub)
                    .map(|s| Formula::Diam(self.enc_agent(&a, s as VertexId), rc(body.clone()))),
            ),
            other => unreachable!("modal vertex expected, got {other}"),
        }
    }

    fn zvar_fp(&self, x: Option<usize>, t: (VertexId, VertexId)) -> String {
        match x {
            Some(x) => format!("_ZfpX{}t{}_{}", x, t.0, t.1),
            None => format!("_Zfpt{}_{}", t.0, t.1),
        }
    }

    /// Finite-path formula family. `require_x` selects the variant that
    /// demands the variable occurrence on the path; `memo` is the string of
    /// T pairs already being unfolded.
    pub fn fp(
        &mut self,
        t: Option<(VertexId, VertexId)>,
        x: Option<usize>,
        require_x: bool,
        memo: &[(VertexId, VertexId)],
    ) -> Formula {
        match t {
            None => {
                // Cycle form, used only at the top of inf_path.
                let mut branches = Vec::new();
                for i in 0..self.graphs.len() {
                    let g = self.graphs[i].clone();
                    if self.t_arrow(&g, x, require_x, None, &[]) {
                        branches.push(self.graph_prop(i));
                    } else {
                        let inner = self.fp_in_graph(None, x, require_x, &[], i);
                        if inner != Formula::Ff {
                            branches.push(Formula::And(rc(self.graph_prop(i)), rc(inner)));
                        }
                    }
                }
                big_or(branches)
            }
            Some(pair) => {
                if memo.contains(&pair) {
                    return Formula::Var(self.zvar_fp(if require_x { x } else { None }, pair));
                }
                let mut memo2 = memo.to_vec();
                memo2.push(pair);
                let mut branches = Vec::new();
                for i in 0..self.graphs.len() {
                    let g = self.graphs[i].clone();
                    let t_in_g = g.vertices.contains(&pair.0)
                        && g.vertices.contains(&pair.1)
                        && g.has_label(pair.0, LABEL_IN_TOP)
                        && g.has_label(pair.1, LABEL_OUT_TOP);
                    if !t_in_g {
                        continue;
                    }
                    if self.t_arrow(&g, x, require_x, Some(pair), &[]) {
                        branches.push(self.graph_prop(i));
                    } else {
                        let inner = self.fp_in_graph(Some(pair), x, require_x, &memo2, i);
                        if inner != Formula::Ff {
                            branches.push(Formula::And(rc(self.graph_prop(i)), rc(inner)));
                        }
                    }
                }
                Formula::Mu(
                    self.zvar_fp(if require_x { x } else { None }, pair),
                    rc(big_or(branches)),
                )
            }
        }
    }

    /// One graph's contribution: ranging over detour sets S.
    fn fp_in_graph(
        &mut self,
        t: Option<(VertexId, VertexId)>,
        x: Option<usize>,
        require_x: bool,
        memo: &[(VertexId, VertexId)],
        gi: usize,
    ) -> Formula {
        let g = self.graphs[gi].clone();
        let cands = self.s_candidates(&g);
        let mut disjuncts = Vec::new();
        for s in Self::subsets(&cands) {
            if s.is_empty() {
                continue; // the empty detour set is the direct case handled above
            }
            if require_x {
                // Either the path in g sees the variable with plain detours ...
                if self.t_arrow(&g, x, true, t, &s) {
                    let conj = big_and(s.iter().map(|&d| {
                        let nx = self.nx_pair(d);
                        let sub = self.fp(Some(nx), x, false, &[]);
                        self.alpha_modality(d.0, sub)
                    }));
                    disjuncts.push(conj);
                }
                // ... or some detour carries it.
                if self.t_arrow(&g, x, false, t, &s) {
                    let all_plain = big_and(s.iter().map(|&d| {
                        let nx = self.nx_pair(d);
                        let sub = self.fp(Some(nx), x, false, &[]);
                        self.alpha_modality(d.0, sub)
                    }));
                    let mut memo2 = memo.to_vec();
                    if let Some(pair) = t {
                        if !memo2.contains(&pair) {
                            memo2.push(pair);
                        }
                    }
                    let some_x = big_or(s.iter().map(|&d| {
                        let nx = self.nx_pair(d);
                        let sub = self.fp(Some(nx), x, true, &memo2);
                        self.alpha_modality(d.0, sub)
                    }));
                    disjuncts.push(Formula::And(rc(some_x), rc(all_plain)));
                }
            } else if self.t_arrow(&g, x, false, t, &s) {
                let mut memo2 = memo.to_vec();
                if let Some(pair) = t {
                    if !memo2.contains(&pair) {
                        memo2.push(pair);
                    }
                }
                let conj = big_and(s.iter().map(|&d| {
                    let nx = self.nx_pair(d);
                    let sub = self.fp(Some(nx), x, false, &memo2);
                    self.alpha_modality(d.0, sub)
                }));
                disjuncts.push(conj);
            }
        }
        big_or(disjuncts)
    }

    fn zvar_ip(&self, x: usize, psi: VertexId, with_x: bool) -> String {
        if with_x {
            format!("_ZipX{x}p{psi}")
        } else {
            format!("_Zip{x}p{psi}")
        }
    }

    /// Infinite-path formula: from `psi`, the variable recurs forever.
    pub fn ip(&mut self, x: usize, psi: VertexId, memo: &[VertexId], memo_x: &[VertexId]) -> Formula {
        if memo_x.contains(&psi) {
            return Formula::Var(self.zvar_ip(x, psi, true));
        }
        if memo.contains(&psi) {
            return Formula::Var(self.zvar_ip(x, psi, false));
        }
        let mut branches = Vec::new();
        for i in 0..self.graphs.len() {
            if !self.graphs[i].vertices.contains(&psi) {
                continue;
            }
            let inner = self.ip_in_graph(x, psi, memo, memo_x, i);
            if inner != Formula::Ff {
                branches.push(Formula::And(rc(self.graph_prop(i)), rc(inner)));
            }
        }
        Formula::Nu(
            self.zvar_ip(x, psi, false),
            rc(Formula::Mu(
                self.zvar_ip(x, psi, true),
                rc(big_or(branches)),
            )),
        )
    }

    fn ip_in_graph(
        &mut self,
        x: usize,
        psi: VertexId,
        memo: &[VertexId],
        memo_x: &[VertexId],
        gi: usize,
    ) -> Formula {
        let g = self.graphs[gi].clone();
        let cands = self.s_candidates(&g);
        let exits: Vec<VertexId> = g
            .vertices
            .iter()
            .copied()
            .filter(|&v| {
                g.has_label(v, LABEL_OUT_BOT)
                    && matches!(self.formula(v), Formula::Boxm(_, _) | Formula::Diam(_, _))
            })
            .collect();
        let mut memo2 = memo.to_vec();
        memo2.push(psi);
        let mut memo_x2 = memo_x.to_vec();
        memo_x2.push(psi);
        let mut disjuncts = Vec::new();
        for &exit in &exits {
            let (_, exit_body) = self.modal_parts(exit);
            for s in Self::subsets(&cands) {
                let all_plain = |enc: &mut Self| {
                    big_and(s.iter().map(|&d| {
                        let nx = enc.nx_pair(d);
                        let sub = enc.fp(Some(nx), Some(x), false, &[]);
                        enc.alpha_modality(d.0, sub)
                    }))
                };
                if self.psi_arrow(&g, Some(x), true, psi, &s, exit) {
                    let cont = self.ip(x, exit_body, &memo2, &[]);
                    let step = self.alpha_modality(exit, cont);
                    disjuncts.push(Formula::And(rc(all_plain(self)), rc(step)));
                }
                if self.psi_arrow(&g, Some(x), false, psi, &s, exit) {
                    // A detour sees the variable, or the spine keeps going.
                    if !s.is_empty() {
                        let some_x = big_or(s.iter().map(|&d| {
                            let nx = self.nx_pair(d);
                            let sub = self.fp(Some(nx), Some(x), true, &[]);
                            self.alpha_modality(d.0, sub)
                        }));
                        let cont = self.ip(x, exit_body, &memo2, &[]);
                        let step = self.alpha_modality(exit, cont);
                        disjuncts.push(Formula::And(
                            rc(Formula::And(rc(some_x), rc(all_plain(self)))),
                            rc(step),
                        ));
                    }
                    let cont = self.ip(x, exit_body, &memo2, &memo_x2);
                    let step = self.alpha_modality(exit, cont);
                    disjuncts.push(Formula::And(rc(all_plain(self)), rc(step)));
                }
            }
        }
        big_or(disjuncts)
    }

    pub fn inf_path(&mut self) -> Formula {
        let mut per_var = Vec::new();
        for x in 0..self.mv.len() {
            let mut parts = vec![self.fp(None, Some(x), true, &[])];
            for i in 0..self.graphs.len() {
                for psi in self.graphs[i].vertices.clone() {
                    let ipf = self.ip(x, psi, &[], &[]);
                    parts.push(Formula::And(rc(self.graph_prop(i)), rc(ipf)));
                }
            }
            per_var.push(big_or(parts));
        }
        big_or(per_var)
    }

    /// The full encoding: `rules /\ Inv(~inf_path) /\ \/ {g : f in g}`.
    pub fn encode(&mut self) -> Formula {
        let rules = self.rules();
        let ip = self.inf_path();
        let guard = self.inv_enc(negate(&ip));
        let root_id = self.lookup(&self.root.clone()).unwrap();
        let final_disjunct = big_or(
            (0..self.graphs.len())
                .filter(|&i| self.graphs[i].vertices.contains(&root_id))
                .map(|i| self.graph_prop(i)),
        );
        crate::formula::rename_binders(&Formula::And(
            rc(Formula::And(rc(rules), rc(guard))),
            rc(final_disjunct),
        ))
    }
}

// --- branch bridge -----------------------------------------------------------

/// The graph a branch induces at one of its prefixes: the formulas there,
/// the dependency edges inside it, and labels from the cross-prefix edges.
/// With no least-fixed-point variables in play, the canonical representative
/// (all realizable marks) is returned.
pub fn branch_to_graph(
    enc: &Encoder,
    t: &Tableau,
    b: &Branch,
    prefix: PrefixId,
) -> Result<DepGraph, EncodeError> {
    if b.is_prop_closed() {
        return Err(EncodeError::ClosedBranch);
    }
    let mut vertices = BTreeSet::new();
    let mut node_of: BTreeMap<u32, VertexId> = BTreeMap::new();
    for (nid, &(p, fid)) in b.node_list().iter().enumerate() {
        if p == prefix {
            let v = enc
                .lookup(t.arena.formula(fid))
                .expect("branch formulas are subformulas of the root");
            vertices.insert(v);
            node_of.insert(nid as u32, v);
        }
    }
    let mut edges = BTreeSet::new();
    let mut labels: BTreeMap<VertexId, u8> = vertices.iter().map(|&v| (v, 0)).collect();
    for (u, v) in b.dep_edge_list() {
        let (pu, _) = b.node(u);
        let (pv, _) = b.node(v);
        match (node_of.get(&u), node_of.get(&v)) {
            (Some(&a), Some(&c)) if pu == prefix && pv == prefix => {
                edges.insert((a, c));
            }
            (Some(&a), None) if pu == prefix => {
                let mark = if b.is_strict_prefix(prefix, pv) {
                    LABEL_OUT_BOT
                } else {
                    LABEL_OUT_TOP
                };
                *labels.get_mut(&a).unwrap() |= mark;
            }
            (None, Some(&c)) if pv == prefix => {
                let mark = if b.is_strict_prefix(prefix, pu) {
                    LABEL_IN_BOT
                } else {
                    LABEL_IN_TOP
                };
                *labels.get_mut(&c).unwrap() |= mark;
            }
            _ => {}
        }
    }
    let mut g = DepGraph {
        vertices,
        edges,
        labels,
    };
    if enc.n_mv() == 0 {
        g.labels = g.vertices.iter().map(|&v| (v, ALL_LABELS)).collect();
    }
    Ok(g)
}

/// The model a propositionally open branch represents: prefixes as states,
/// step edges labelled with the encoded agents, each state's valuation the
/// graph proposition of its prefix.
pub fn branch_to_model(
    enc: &Encoder,
    t: &Tableau,
    b: &Branch,
) -> Result<PointedModel, EncodeError> {
    if b.is_prop_closed() {
        return Err(EncodeError::ClosedBranch);
    }
    let n = b.n_prefixes();
    let names: Vec<String> = (0..n).map(|p| b.render_prefix(&t.arena, p as PrefixId)).collect();
    let mut model = KripkeModel::new(names);
    for p in 0..n {
        if let Some((parent, agent_idx, step)) = b.prefix_step(p as PrefixId) {
            let base = &t.arena.agents[agent_idx as usize];
            let stepf = t.arena.formula(step).clone();
            let sv = enc.lookup(&stepf).expect("step bodies are subformulas");
            model.add_edge_ids(&enc.enc_agent(base, sv), parent as usize, p);
        }
    }
    for p in 0..n {
        let g = branch_to_graph(enc, t, b, p as PrefixId)?;
        let gi = enc.find_graph(&g).ok_or_else(|| {
            EncodeError::CapExceeded(format!(
                "branch graph not in the enumeration: {}",
                enc.describe(&g)
            ))
        })?;
        model.set_prop_id(p, enc.graph_name(gi));
    }
    Ok(PointedModel {
        model,
        point: Branch::ROOT_PREFIX as usize,
    })
}

fn fnv1a(data: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

// --- bounded satisfiability of the encoded formula ---------------------------

/// Bounded-model satisfiability for the encoding: exhaustive over frames of
/// the positively occurring encoded agents (all others can be empty) and
/// over valuations assigning each state exactly one graph proposition,
/// which loses no models of `rules`-shaped formulas.
pub fn encode_sat_bounded(enc: &mut Encoder, max_states: usize) -> bool {
    let formula = enc.encode();
    let compiled = crate::modelcheck::Compiled::new(&formula);
    // Positive diamonds: step agents of diamonds (and boxes under seriality).
    let mut positive: BTreeSet<String> = BTreeSet::new();
    for v in 0..enc.n_sub {
        match enc.formula(v as VertexId).clone() {
            Formula::Diam(a, b) => {
                let s = enc.lookup(&b).unwrap();
                positive.insert(enc.enc_agent(&a, s));
            }
            Formula::Boxm(a, b) if enc.spec.has(&a, Condition::D) => {
                let s = enc.lookup(&b).unwrap();
                positive.insert(enc.enc_agent(&a, s));
            }
            _ => {}
        }
    }
    let prop_to_graph: BTreeMap<&str, usize> = (0..enc.graphs.len())
        .map(|i| (enc.graph_name(i), i))
        .collect();
    let n_graphs = enc.graphs.len();
    for n in 1..=max_states {
        // Frames: odometer over the positive agents' relations.
        let active: Vec<&String> = compiled
            .agents
            .iter()
            .filter(|a| positive.contains(a.as_str()))
            .collect();
        let bits_per = n * n;
        let mut frame_bits = vec![0u64; active.len()];
        loop {
            let succ: Vec<Vec<u64>> = compiled
                .agents
                .iter()
                .map(|a| match active.iter().position(|x| *x == a) {
                    None => vec![0u64; n],
                    Some(i) => {
                        let mut masks = vec![0u64; n];
                        for u in 0..n {
                            for v in 0..n {
                                if frame_bits[i] >> (u * n + v) & 1 == 1 {
                                    masks[u] |= 1 << v;
                                }
                            }
                        }
                        masks
                    }
                })
                .collect();
            // Valuations: each state gets exactly one graph.
            let mut assign = vec![0usize; n];
            loop {
                let props: Vec<u64> = compiled
                    .props
                    .iter()
                    .map(|p| {
                        let gi = prop_to_graph.get(p.as_str());
                        let mut mask = 0u64;
                        if let Some(&gi) = gi {
                            for (s, &a) in assign.iter().enumerate() {
                                if a == gi {
                                    mask |= 1 << s;
                                }
                            }
                        }
                        mask
                    })
                    .collect();
                if compiled.eval(n, &succ, &props) != 0 {
                    return true;
                }
                // Advance valuation.
                let mut i = 0;
                loop {
                    if i == n {
                        break;
                    }
                    assign[i] += 1;
                    if assign[i] < n_graphs {
                        break;
                    }
                    assign[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
            // Advance frame.
            let mut i = 0;
            loop {
                if i == frame_bits.len() {
                    break;
                }
                frame_bits[i] += 1;
                if frame_bits[i] < (1u64 << bits_per) {
                    break;
                }
                frame_bits[i] = 0;
                i += 1;
            }
            if i == frame_bits.len() {
                break;
            }
        }
    }
    false
}

// --- spec-shaped free functions ----------------------------------------------

pub fn enumerate_graphs(
    f: &Formula,
    spec: &LogicSpec,
    caps: EncodeCaps,
) -> Result<Vec<DepGraph>, EncodeError> {
    Ok(Encoder::new(f, spec, caps)?.graphs)
}

pub fn build_rules(f: &Formula, spec: &LogicSpec, caps: EncodeCaps) -> Result<Formula, EncodeError> {
    Ok(Encoder::new(f, spec, caps)?.rules())
}

pub fn build_inf_path(
    f: &Formula,
    spec: &LogicSpec,
    caps: EncodeCaps,
) -> Result<Formula, EncodeError> {
    Ok(Encoder::new(f, spec, caps)?.inf_path())
}

pub fn encode(f: &Formula, spec: &LogicSpec, caps: EncodeCaps) -> Result<Formula, EncodeError> {
    Ok(Encoder::new(f, spec, caps)?.encode())
}
