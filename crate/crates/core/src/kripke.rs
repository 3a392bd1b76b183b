//! Finite Kripke models: frame conditions and closures, tree unfolding,
//! bisimilarity, the line-oriented text format, and bounded enumeration.

use crate::formula::{Condition, LogicSpec};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

/// A finite Kripke model. States are ordered by their index; all public
/// lookups also work by name. Relations and valuations mention only declared
/// states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KripkeModel {
    states: Vec<String>,
    index: BTreeMap<String, usize>,
    relations: BTreeMap<String, BTreeSet<(usize, usize)>>,
    valuation: Vec<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointedModel {
    pub model: KripkeModel,
    pub point: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    UnknownState(String),
    UnknownAgent(String),
    Parse { line: usize, msg: String },
    CapExceeded(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::UnknownState(s) => write!(f, "unknown state `{s}`"),
            ModelError::UnknownAgent(a) => write!(f, "unknown agent `{a}`"),
            ModelError::Parse { line, msg } => write!(f, "model parse error on line {line}: {msg}"),
            ModelError::CapExceeded(msg) => write!(f, "enumeration cap exceeded: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl KripkeModel {
    pub fn new<S: Into<String>>(states: Vec<S>) -> Self {
        let states: Vec<String> = states.into_iter().map(|s| s.into()).collect();
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let n = states.len();
        KripkeModel {
            states,
            index,
            relations: BTreeMap::new(),
            valuation: vec![BTreeSet::new(); n],
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, i: usize) -> &str {
        &self.states[i]
    }

    pub fn state_id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn agents(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(|s| s.as_str())
    }

    pub fn add_edge_ids(&mut self, agent: &str, from: usize, to: usize) {
        self.relations
            .entry(agent.to_string())
            .or_default()
            .insert((from, to));
    }

    pub fn add_edge(&mut self, agent: &str, from: &str, to: &str) -> Result<(), ModelError> {
        let f = self
            .state_id(from)
            .ok_or_else(|| ModelError::UnknownState(from.into()))?;
        let t = self
            .state_id(to)
            .ok_or_else(|| ModelError::UnknownState(to.into()))?;
        self.add_edge_ids(agent, f, t);
        Ok(())
    }

    pub fn set_prop_id(&mut self, state: usize, p: &str) {
        self.valuation[state].insert(p.to_string());
    }

    pub fn set_prop(&mut self, state: &str, p: &str) -> Result<(), ModelError> {
        let s = self
            .state_id(state)
            .ok_or_else(|| ModelError::UnknownState(state.into()))?;
        self.set_prop_id(s, p);
        Ok(())
    }

    pub fn relation(&self, agent: &str) -> BTreeSet<(usize, usize)> {
        self.relations.get(agent).cloned().unwrap_or_default()
    }

    pub fn props_at(&self, state: usize) -> &BTreeSet<String> {
        &self.valuation[state]
    }

    pub fn has_prop(&self, state: usize, p: &str) -> bool {
        self.valuation[state].contains(p)
    }

    /// Successor bitmasks for an agent, indexed by source state. States are
    /// assumed to number at most 64 (enforced by the enumeration caps).
    pub fn succ_masks(&self, agent: &str) -> Vec<u64> {
        let mut out = vec![0u64; self.n_states()];
        if let Some(rel) = self.relations.get(agent) {
            for &(u, v) in rel {
                out[u] |= 1 << v;
            }
        }
        out
    }

    /// Does `R_agent` satisfy the frame condition?
    pub fn has_condition(&self, agent: &str, x: Condition) -> bool {
        let rel = self.relation(agent);
        relation_has_condition(&rel, self.n_states(), x)
    }

    /// The closure of `R_agent` under one condition; other agents untouched.
    pub fn close(&self, agent: &str, x: Condition) -> KripkeModel {
        let mut out = self.clone();
        let rel = self.relation(agent);
        let closed = close_relation(&rel, self.n_states(), x);
        out.relations.insert(agent.to_string(), closed);
        out
    }

    /// Per agent, applies that agent's condition closures in the order
    /// D, T, B, 5, 4. Applying the transitive closure last is what makes
    /// the order closure-preserving: the euclidean closure of a transitive
    /// relation need not be transitive (witness {(0,1),(2,1),(2,2)}), while
    /// every earlier condition survives the later closures.
    pub fn close_logic(&self, spec: &LogicSpec) -> KripkeModel {
        const APPLICATION_ORDER: [Condition; 5] = [
            Condition::D,
            Condition::T,
            Condition::B,
            Condition::Five,
            Condition::Four,
        ];
        let mut out = self.clone();
        for agent in spec.agents() {
            let conds = spec.conditions(agent);
            for c in APPLICATION_ORDER {
                if conds.contains(&c) {
                    out = out.close(agent, c);
                }
            }
        }
        out
    }

    /// Does the frame satisfy every condition of the spec for every agent?
    pub fn satisfies_spec(&self, spec: &LogicSpec) -> bool {
        spec.agents().all(|agent| {
            spec.conditions(agent)
                .iter()
                .all(|&c| self.has_condition(agent, c))
        })
    }

    /// Parses the line-oriented model text format.
    pub fn parse(text: &str) -> Result<KripkeModel, ModelError> {
        let mut states: Option<Vec<String>> = None;
        let mut rels: Vec<(usize, String, Vec<(String, String)>)> = Vec::new();
        let mut vals: Vec<(usize, String, Vec<String>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 1;
            let (key, rest) = line.split_once(':').ok_or(ModelError::Parse {
                line: lineno,
                msg: "expected `key: ...`".into(),
            })?;
            let key = key.trim();
            let rest = rest.trim();
            if key == "states" {
                let mut list: Vec<String> =
                    rest.split_whitespace().map(|s| s.to_string()).collect();
                match &mut states {
                    None => states = Some(list),
                    Some(existing) => existing.append(&mut list),
                }
            } else if let Some(agent) = key.strip_prefix("rel ") {
                let mut pairs = Vec::new();
                for chunk in rest.split(';') {
                    let chunk = chunk.trim();
                    if chunk.is_empty() {
                        continue;
                    }
                    let parts: Vec<&str> = chunk.split_whitespace().collect();
                    if parts.len() != 2 {
                        return Err(ModelError::Parse {
                            line: lineno,
                            msg: format!("expected `from to` pair, got `{chunk}`"),
                        });
                    }
                    pairs.push((parts[0].to_string(), parts[1].to_string()));
                }
                rels.push((lineno, agent.trim().to_string(), pairs));
            } else if let Some(p) = key.strip_prefix("val ") {
                let list = rest.split_whitespace().map(|s| s.to_string()).collect();
                vals.push((lineno, p.trim().to_string(), list));
            } else {
                return Err(ModelError::Parse {
                    line: lineno,
                    msg: format!("unknown declaration `{key}`"),
                });
            }
        }
        let states = states.ok_or(ModelError::Parse {
            line: 0,
            msg: "missing `states:` declaration".into(),
        })?;
        let mut m = KripkeModel::new(states);
        for (line, agent, pairs) in rels {
            for (from, to) in pairs {
                m.add_edge(&agent, &from, &to)
                    .map_err(|e| ModelError::Parse {
                        line,
                        msg: e.to_string(),
                    })?;
            }
        }
        for (line, p, list) in vals {
            for s in list {
                m.set_prop(&s, &p).map_err(|e| ModelError::Parse {
                    line,
                    msg: e.to_string(),
                })?;
            }
        }
        Ok(m)
    }

    /// Renders the model in the text format; `parse` round-trips it.
    pub fn print(&self) -> String {
        let mut out = String::new();
        out.push_str("states:");
        for s in &self.states {
            out.push(' ');
            out.push_str(s);
        }
        out.push('\n');
        for (agent, rel) in &self.relations {
            if rel.is_empty() {
                continue;
            }
            out.push_str(&format!("rel {agent}:"));
            let mut first = true;
            for &(u, v) in rel {
                if !first {
                    out.push_str(" ;");
                }
                first = false;
                out.push_str(&format!(" {} {}", self.states[u], self.states[v]));
            }
            out.push('\n');
        }
        let mut props: BTreeSet<&String> = BTreeSet::new();
        for v in &self.valuation {
            props.extend(v.iter());
        }
        for p in props {
            out.push_str(&format!("val {p}:"));
            for (i, v) in self.valuation.iter().enumerate() {
                if v.contains(p) {
                    out.push(' ');
                    out.push_str(&self.states[i]);
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn relation_has_condition(rel: &BTreeSet<(usize, usize)>, n: usize, x: Condition) -> bool {
    match x {
        Condition::D => (0..n).all(|s| rel.iter().any(|&(u, _)| u == s)),
        Condition::T => (0..n).all(|s| rel.contains(&(s, s))),
        Condition::B => rel.iter().all(|&(u, v)| rel.contains(&(v, u))),
        Condition::Four => rel
            .iter()
            .all(|&(u, v)| rel.iter().filter(|&&(a, _)| a == v).all(|&(_, w)| rel.contains(&(u, w)))),
        Condition::Five => rel.iter().all(|&(s, t)| {
            rel.iter()
                .filter(|&&(a, _)| a == s)
                .all(|&(_, r)| rel.contains(&(t, r)))
        }),
    }
}

pub fn close_relation(
    rel: &BTreeSet<(usize, usize)>,
    n: usize,
    x: Condition,
) -> BTreeSet<(usize, usize)> {
    let mut out = rel.clone();
    match x {
        Condition::D => {
            for s in 0..n {
                if !out.iter().any(|&(u, _)| u == s) {
                    out.insert((s, s));
                }
            }
        }
        Condition::T => {
            for s in 0..n {
                out.insert((s, s));
            }
        }
        Condition::B => {
            let pairs: Vec<_> = out.iter().copied().collect();
            for (u, v) in pairs {
                out.insert((v, u));
            }
        }
        Condition::Four => loop {
            let mut added = false;
            let pairs: Vec<_> = out.iter().copied().collect();
            for &(u, v) in &pairs {
                for &(a, w) in &pairs {
                    if a == v && out.insert((u, w)) {
                        added = true;
                    }
                }
            }
            if !added {
                break;
            }
        },
        // Work-list fixed point of: if (s,u),(s,v) present then add (u,v).
        Condition::Five => loop {
            let mut added = false;
            let pairs: Vec<_> = out.iter().copied().collect();
            for &(s, u) in &pairs {
                for &(s2, v) in &pairs {
                    if s == s2 && out.insert((u, v)) {
                        added = true;
                    }
                }
            }
            if !added {
                break;
            }
        },
    }
    out
}

/// Tree unfolding of a pointed model, truncated to paths of at most `depth`
/// transitions. States are dot-joined `w0.a.w1` path names, the root is the
/// length-0 path.
pub fn unfold(pm: &PointedModel, depth: usize) -> PointedModel {
    let m = &pm.model;
    // Paths as (state-id sequence interleaved with agents), plus name.
    struct Path {
        last: usize,
        name: String,
        len: usize,
    }
    let root = Path {
        last: pm.point,
        name: m.state_name(pm.point).to_string(),
        len: 0,
    };
    let mut paths: Vec<Path> = vec![root];
    let mut edges: Vec<(String, usize, usize)> = Vec::new(); // (agent, from, to) path ids
    let mut queue: VecDeque<usize> = VecDeque::new();
    queue.push_back(0);
    let agents: Vec<String> = m.relations.keys().cloned().collect();
    while let Some(pid) = queue.pop_front() {
        if paths[pid].len >= depth {
            continue;
        }
        let last = paths[pid].last;
        for agent in &agents {
            let rel = m.relations.get(agent).unwrap();
            for &(u, v) in rel {
                if u != last {
                    continue;
                }
                let name = format!("{}.{}.{}", paths[pid].name, agent, m.state_name(v));
                let nid = paths.len();
                paths.push(Path {
                    last: v,
                    name,
                    len: paths[pid].len + 1,
                });
                edges.push((agent.clone(), pid, nid));
                queue.push_back(nid);
            }
        }
    }
    let mut out = KripkeModel::new(paths.iter().map(|p| p.name.clone()).collect::<Vec<_>>());
    for (agent, from, to) in edges {
        out.add_edge_ids(&agent, from, to);
    }
    for (i, p) in paths.iter().enumerate() {
        for prop in m.props_at(p.last) {
            out.set_prop_id(i, prop);
        }
    }
    PointedModel {
        model: out,
        point: 0,
    }
}

/// Greatest fixed point of the zig-zag refinement on the product of the two
/// state sets: true iff the pointed models are related by some bisimulation.
pub fn bisimilar(pm1: &PointedModel, pm2: &PointedModel) -> bool {
    let m1 = &pm1.model;
    let m2 = &pm2.model;
    let n1 = m1.n_states();
    let n2 = m2.n_states();
    let agents: BTreeSet<String> = m1
        .relations
        .keys()
        .chain(m2.relations.keys())
        .cloned()
        .collect();
    // related[i][j]: states i of m1 and j of m2 currently considered bisimilar.
    let mut related = vec![vec![false; n2]; n1];
    for (i, row) in related.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = m1.props_at(i) == m2.props_at(j);
        }
    }
    loop {
        let mut changed = false;
        for i in 0..n1 {
            for j in 0..n2 {
                if !related[i][j] {
                    continue;
                }
                let ok = agents.iter().all(|agent| {
                    let r1 = m1.relation(agent);
                    let r2 = m2.relation(agent);
                    let forth = r1
                        .iter()
                        .filter(|&&(u, _)| u == i)
                        .all(|&(_, v)| r2.iter().any(|&(u2, v2)| u2 == j && related[v][v2]));
                    let back = r2
                        .iter()
                        .filter(|&&(u, _)| u == j)
                        .all(|&(_, v2)| r1.iter().any(|&(u1, v1)| u1 == i && related[v1][v2]));
                    forth && back
                });
                if !ok {
                    related[i][j] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    related[pm1.point][pm2.point]
}

/// Streams every labelled model on exactly `n_states` states over the given
/// agents and propositions whose frame satisfies `spec`. Frames are filtered
/// before valuations are expanded.
pub struct ModelEnumerator {
    n: usize,
    agents: Vec<String>,
    props: Vec<String>,
    spec: LogicSpec,
    // Odometer over per-agent relation bitmaps (n*n bits each) and the
    // valuation bitmap (n * |props| bits).
    rel_bits: Vec<u64>,
    val_bits: u64,
    rel_done: bool,
    frame: Option<Vec<BTreeSet<(usize, usize)>>>,
}

pub const ENUM_STATE_CAP: usize = 6;

impl ModelEnumerator {
    pub fn new(
        n_states: usize,
        agents: &[String],
        props: &[String],
        spec: &LogicSpec,
    ) -> Result<Self, ModelError> {
        if n_states == 0 {
            return Err(ModelError::CapExceeded("need at least one state".into()));
        }
        if n_states > ENUM_STATE_CAP {
            return Err(ModelError::CapExceeded(format!(
                "{n_states} states exceeds the enumeration cap of {ENUM_STATE_CAP}"
            )));
        }
        if n_states * n_states > 36 || n_states * props.len() > 60 {
            return Err(ModelError::CapExceeded(
                "state/proposition space too large to enumerate".into(),
            ));
        }
        let mut e = ModelEnumerator {
            n: n_states,
            agents: agents.to_vec(),
            props: props.to_vec(),
            spec: spec.clone(),
            rel_bits: vec![0; agents.len()],
            val_bits: 0,
            rel_done: false,
            frame: None,
        };
        e.frame = e.current_frame_if_valid();
        while e.frame.is_none() && !e.rel_done {
            e.advance_frame();
            e.frame = e.current_frame_if_valid();
        }
        Ok(e)
    }

    fn bits_to_rel(&self, bits: u64) -> BTreeSet<(usize, usize)> {
        let mut rel = BTreeSet::new();
        for u in 0..self.n {
            for v in 0..self.n {
                if bits >> (u * self.n + v) & 1 == 1 {
                    rel.insert((u, v));
                }
            }
        }
        rel
    }

    fn current_frame_if_valid(&self) -> Option<Vec<BTreeSet<(usize, usize)>>> {
        if self.rel_done {
            return None;
        }
        let mut frame = Vec::with_capacity(self.agents.len());
        for (ai, agent) in self.agents.iter().enumerate() {
            let rel = self.bits_to_rel(self.rel_bits[ai]);
            for &c in self.spec.conditions(agent).iter() {
                if !relation_has_condition(&rel, self.n, c) {
                    return None;
                }
            }
            frame.push(rel);
        }
        Some(frame)
    }

    fn advance_frame(&mut self) {
        let max = 1u64 << (self.n * self.n);
        for ai in 0..self.rel_bits.len() {
            self.rel_bits[ai] += 1;
            if self.rel_bits[ai] < max {
                return;
            }
            self.rel_bits[ai] = 0;
        }
        self.rel_done = true;
    }
}

impl Iterator for ModelEnumerator {
    type Item = KripkeModel;

    fn next(&mut self) -> Option<KripkeModel> {
        loop {
            let frame = match &self.frame {
                Some(f) => f.clone(),
                None => return None,
            };
            let val_max = 1u64 << (self.n * self.props.len());
            if self.val_bits < val_max {
                let names: Vec<String> = (0..self.n).map(|i| format!("s{i}")).collect();
                let mut m = KripkeModel::new(names);
                for (ai, rel) in frame.iter().enumerate() {
                    for &(u, v) in rel {
                        m.add_edge_ids(&self.agents[ai], u, v);
                    }
                }
                for s in 0..self.n {
                    for (pi, p) in self.props.iter().enumerate() {
                        if self.val_bits >> (s * self.props.len() + pi) & 1 == 1 {
                            m.set_prop_id(s, p);
                        }
                    }
                }
                self.val_bits += 1;
                return Some(m);
            }
            // Next frame.
            self.val_bits = 0;
            loop {
                self.advance_frame();
                if self.rel_done {
                    self.frame = None;
                    break;
                }
                self.frame = self.current_frame_if_valid();
                if self.frame.is_some() {
                    break;
                }
            }
        }
    }
}

pub fn enumerate_models(
    n_states: usize,
    agents: &[String],
    props: &[String],
    spec: &LogicSpec,
) -> Result<ModelEnumerator, ModelError> {
    ModelEnumerator::new(n_states, agents, props, spec)
}
