#![allow(dead_code)]

//! Shared test support: an independent brute-force evaluator for the
//! fixed-point semantics (subset search instead of iteration) and seeded
//! model generators.

use mucalc_core::formula::Formula;
use mucalc_core::kripke::KripkeModel;
use mucalc_core::modelcheck::Environment;
use rand::Rng;

/// Evaluates by the raw set definitions: a least fixed point is the
/// intersection of all prefixed points, a greatest fixed point the union of
/// all postfixed points, both found by enumerating every subset of the state
/// space. Exponential, independent of the iterative evaluator.
pub fn eval_kt(m: &KripkeModel, f: &Formula, env: &Environment) -> u64 {
    let n = m.n_states();
    let full: u64 = if n >= 64 { !0 } else { (1 << n) - 1 };
    match f {
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
        Formula::Var(x) => *env.get(x).expect("assigned variable"),
        Formula::And(a, b) => eval_kt(m, a, env) & eval_kt(m, b, env),
        Formula::Or(a, b) => eval_kt(m, a, env) | eval_kt(m, b, env),
        Formula::Boxm(agent, body) => {
            let t = eval_kt(m, body, env);
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
            let t = eval_kt(m, body, env);
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
            let mut acc = full;
            for subset in 0..=full {
                let mut env2 = env.clone();
                env2.insert(x.clone(), subset);
                if eval_kt(m, body, &env2) & !subset == 0 {
                    acc &= subset;
                }
            }
            acc
        }
        Formula::Nu(x, body) => {
            let mut acc = 0;
            for subset in 0..=full {
                let mut env2 = env.clone();
                env2.insert(x.clone(), subset);
                if subset & !eval_kt(m, body, &env2) == 0 {
                    acc |= subset;
                }
            }
            acc
        }
    }
}

/// Seeded random model; `acyclic` restricts edges to go from lower to
/// higher state indices.
pub fn random_model<R: Rng>(
    rng: &mut R,
    n: usize,
    agents: &[&str],
    props: &[&str],
    acyclic: bool,
) -> KripkeModel {
    let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut m = KripkeModel::new(names);
    for agent in agents {
        for u in 0..n {
            for v in 0..n {
                if acyclic && v <= u {
                    continue;
                }
                if rng.gen_bool(0.35) {
                    m.add_edge_ids(agent, u, v);
                }
            }
        }
    }
    for s in 0..n {
        for p in props {
            if rng.gen_bool(0.5) {
                m.set_prop_id(s, p);
            }
        }
    }
    m
}

/// Adds a fresh copy of a state: the copy shares the valuation and the
/// outgoing edges, and every predecessor of the original also reaches the
/// copy. The result is bisimilar to the original at every original state.
pub fn duplicate_state(m: &KripkeModel, s: usize) -> KripkeModel {
    let n = m.n_states();
    let mut names: Vec<String> = (0..n).map(|i| m.state_name(i).to_string()).collect();
    names.push(format!("{}_copy", m.state_name(s)));
    let mut out = KripkeModel::new(names);
    let copy = n;
    let agents: Vec<String> = m.agents().map(|a| a.to_string()).collect();
    for agent in &agents {
        for (u, v) in m.relation(agent) {
            out.add_edge_ids(agent, u, v);
            if v == s {
                out.add_edge_ids(agent, u, copy);
            }
            if u == s {
                out.add_edge_ids(agent, copy, v);
            }
        }
    }
    for i in 0..n {
        for p in m.props_at(i) {
            out.set_prop_id(i, p);
        }
    }
    for p in m.props_at(s) {
        out.set_prop_id(copy, p);
    }
    out
}

/// Length of the longest path in an acyclic model (edges go up in index).
pub fn longest_path(m: &KripkeModel) -> usize {
    let n = m.n_states();
    let mut d = vec![0usize; n];
    let agents: Vec<String> = m.agents().map(|a| a.to_string()).collect();
    for u in (0..n).rev() {
        for agent in &agents {
            for (a, b) in m.relation(agent) {
                if a == u {
                    d[u] = d[u].max(1 + d[b]);
                }
            }
        }
    }
    d.into_iter().max().unwrap_or(0)
}
