//! Fixed-point model checking on finite models.
//!
//! State sets are dense `u64` bitmasks indexed by the model's state ordering,
//! so models are limited to 64 states (far beyond anything the enumeration
//! caps allow). Least and greatest fixed points are computed by iteration
//! from the empty / full set; on a finite model each fixed point converges
//! within `|W|` iterations.

use crate::formula::Formula;
use crate::kripke::{KripkeModel, PointedModel};
use std::collections::BTreeMap;
use std::fmt;

pub type StateSet = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckError {
    UnassignedVar(String),
    TooManyStates(usize),
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckError::UnassignedVar(x) => write!(f, "free variable `{x}` not assigned"),
            CheckError::TooManyStates(n) => write!(f, "model has {n} states, limit is 64"),
        }
    }
}

impl std::error::Error for CheckError {}

/// An environment for free recursion variables.
pub type Environment = BTreeMap<String, StateSet>;

fn full_mask(n: usize) -> StateSet {
    if n >= 64 {
        !0
    } else {
        (1u64 << n) - 1
    }
}

/// Evaluates `f` on `m` under `env` per the standard clauses; returns the set
/// of states satisfying `f`.
pub fn eval(m: &KripkeModel, f: &Formula, env: &Environment) -> Result<StateSet, CheckError> {
    let n = m.n_states();
    if n > 64 {
        return Err(CheckError::TooManyStates(n));
    }
    let mut env = env.clone();
    eval_in(m, f, &mut env)
}

fn eval_in(m: &KripkeModel, f: &Formula, env: &mut Environment) -> Result<StateSet, CheckError> {
    let n = m.n_states();
    let full = full_mask(n);
    Ok(match f {
        Formula::Tt => full,
        Formula::Ff => 0,
        Formula::Prop(p) => {
            let mut s = 0;
            for i in 0..n {
                if m.has_prop(i, p) {
                    s |= 1 << i;
                }
            }
            s
        }
        Formula::NegProp(p) => {
            let mut s = 0;
            for i in 0..n {
                if !m.has_prop(i, p) {
                    s |= 1 << i;
                }
            }
            s
        }
        Formula::Var(x) => *env
            .get(x)
            .ok_or_else(|| CheckError::UnassignedVar(x.clone()))?,
        Formula::And(a, b) => eval_in(m, a, env)? & eval_in(m, b, env)?,
        Formula::Or(a, b) => eval_in(m, a, env)? | eval_in(m, b, env)?,
        Formula::Boxm(agent, body) => {
            let t = eval_in(m, body, env)?;
            let succ = m.succ_masks(agent);
            let mut s = 0;
            for (i, &mask) in succ.iter().enumerate() {
                if mask & !t == 0 {
                    s |= 1 << i;
                }
            }
            s
        }
        Formula::Diam(agent, body) => {
            let t = eval_in(m, body, env)?;
            let succ = m.succ_masks(agent);
            let mut s = 0;
            for (i, &mask) in succ.iter().enumerate() {
                if mask & t != 0 {
                    s |= 1 << i;
                }
            }
            s
        }
        Formula::Mu(x, body) => {
            let saved = env.get(x).copied();
            let mut cur: StateSet = 0;
            loop {
                env.insert(x.clone(), cur);
                let next = eval_in(m, body, env)?;
                if next == cur {
                    break;
                }
                cur = next;
            }
            restore(env, x, saved);
            cur
        }
        Formula::Nu(x, body) => {
            let saved = env.get(x).copied();
            let mut cur: StateSet = full;
            loop {
                env.insert(x.clone(), cur);
                let next = eval_in(m, body, env)?;
                if next == cur {
                    break;
                }
                cur = next;
            }
            restore(env, x, saved);
            cur
        }
    })
}

fn restore(env: &mut Environment, x: &str, saved: Option<StateSet>) {
    match saved {
        Some(v) => {
            env.insert(x.to_string(), v);
        }
        None => {
            env.remove(x);
        }
    }
}

/// `(M, s) |= f` for closed `f`.
pub fn check(pm: &PointedModel, f: &Formula) -> Result<bool, CheckError> {
    let s = eval(&pm.model, f, &Environment::new())?;
    Ok(s >> pm.point & 1 == 1)
}

// ---------------------------------------------------------------------------
// Compiled evaluator for enumeration-heavy callers
// ---------------------------------------------------------------------------

/// A formula compiled to a postorder program over prop/agent/variable slots,
/// so the brute-force oracle can evaluate it across millions of models
/// without re-walking names.
pub struct Compiled {
    ops: Vec<Op>,
    pub props: Vec<String>,
    pub agents: Vec<String>,
    n_slots: usize,
}

enum Op {
    True,
    False,
    Prop(usize),
    NegProp(usize),
    Var(usize),
    And(usize, usize),
    Or(usize, usize),
    Boxm(usize, usize),
    Diam(usize, usize),
    Mu(usize, usize),
    Nu(usize, usize),
}

impl Compiled {
    pub fn new(f: &Formula) -> Compiled {
        let mut c = Compiled {
            ops: Vec::new(),
            props: Vec::new(),
            agents: Vec::new(),
            n_slots: 0,
        };
        let mut scope: Vec<(String, usize)> = Vec::new();
        c.compile(f, &mut scope);
        c
    }

    fn intern(list: &mut Vec<String>, name: &str) -> usize {
        if let Some(i) = list.iter().position(|x| x == name) {
            i
        } else {
            list.push(name.to_string());
            list.len() - 1
        }
    }

    fn compile(&mut self, f: &Formula, scope: &mut Vec<(String, usize)>) -> usize {
        let op = match f {
            Formula::Tt => Op::True,
            Formula::Ff => Op::False,
            Formula::Prop(p) => Op::Prop(Self::intern(&mut self.props, p)),
            Formula::NegProp(p) => Op::NegProp(Self::intern(&mut self.props, p)),
            Formula::Var(x) => {
                let slot = scope
                    .iter()
                    .rev()
                    .find(|(n, _)| n == x)
                    .map(|(_, s)| *s)
                    .expect("compile: free variable (compile only closed formulas)");
                Op::Var(slot)
            }
            Formula::And(a, b) => {
                let ia = self.compile(a, scope);
                let ib = self.compile(b, scope);
                Op::And(ia, ib)
            }
            Formula::Or(a, b) => {
                let ia = self.compile(a, scope);
                let ib = self.compile(b, scope);
                Op::Or(ia, ib)
            }
            Formula::Boxm(agent, body) => {
                let ai = Self::intern(&mut self.agents, agent);
                let ib = self.compile(body, scope);
                Op::Boxm(ai, ib)
            }
            Formula::Diam(agent, body) => {
                let ai = Self::intern(&mut self.agents, agent);
                let ib = self.compile(body, scope);
                Op::Diam(ai, ib)
            }
            Formula::Mu(x, body) => {
                let slot = self.n_slots;
                self.n_slots += 1;
                scope.push((x.clone(), slot));
                let ib = self.compile(body, scope);
                scope.pop();
                Op::Mu(slot, ib)
            }
            Formula::Nu(x, body) => {
                let slot = self.n_slots;
                self.n_slots += 1;
                scope.push((x.clone(), slot));
                let ib = self.compile(body, scope);
                scope.pop();
                Op::Nu(slot, ib)
            }
        };
        self.ops.push(op);
        self.ops.len() - 1
    }

    /// Evaluates against successor masks (indexed by this compilation's agent
    /// slots) and proposition masks (indexed by prop slots).
    pub fn eval(&self, n_states: usize, succ: &[Vec<u64>], props: &[u64]) -> u64 {
        let full = full_mask(n_states);
        let mut slots = vec![0u64; self.n_slots];
        self.eval_at(self.ops.len() - 1, n_states, full, succ, props, &mut slots)
    }

    fn eval_at(
        &self,
        i: usize,
        n: usize,
        full: u64,
        succ: &[Vec<u64>],
        props: &[u64],
        slots: &mut Vec<u64>,
    ) -> u64 {
        match &self.ops[i] {
            Op::True => full,
            Op::False => 0,
            Op::Prop(p) => props[*p],
            Op::NegProp(p) => full & !props[*p],
            Op::Var(s) => slots[*s],
            Op::And(a, b) => {
                let l = self.eval_at(*a, n, full, succ, props, slots);
                if l == 0 {
                    return 0;
                }
                l & self.eval_at(*b, n, full, succ, props, slots)
            }
            Op::Or(a, b) => {
                let l = self.eval_at(*a, n, full, succ, props, slots);
                if l == full {
                    return full;
                }
                l | self.eval_at(*b, n, full, succ, props, slots)
            }
            Op::Boxm(agent, b) => {
                let t = self.eval_at(*b, n, full, succ, props, slots);
                let mut out = 0;
                for (s, &mask) in succ[*agent].iter().enumerate() {
                    if mask & !t == 0 {
                        out |= 1 << s;
                    }
                }
                out
            }
            Op::Diam(agent, b) => {
                let t = self.eval_at(*b, n, full, succ, props, slots);
                let mut out = 0;
                for (s, &mask) in succ[*agent].iter().enumerate() {
                    if mask & t != 0 {
                        out |= 1 << s;
                    }
                }
                out
            }
            Op::Mu(slot, b) => {
                let mut cur = 0u64;
                loop {
                    slots[*slot] = cur;
                    let next = self.eval_at(*b, n, full, succ, props, slots);
                    if next == cur {
                        return cur;
                    }
                    cur = next;
                }
            }
            Op::Nu(slot, b) => {
                let mut cur = full;
                loop {
                    slots[*slot] = cur;
                    let next = self.eval_at(*b, n, full, succ, props, slots);
                    if next == cur {
                        return cur;
                    }
                    cur = next;
                }
            }
        }
    }
}
