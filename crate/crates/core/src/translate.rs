//! Satisfiability-preserving formula translations between logics with
//! different frame conditions, the frame-axiom schemata they instantiate,
//! and the pipeline that composes them.

use crate::formula::{Formula::*, *};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranslateError {
    RecursiveInput,
    MuBinderPresent,
    ReservedProp(String),
    Unsupported(String),
}

impl fmt::Display for TranslateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TranslateError::RecursiveInput => {
                write!(f, "the one-step translation requires a recursion-free formula")
            }
            TranslateError::MuBinderPresent => {
                write!(f, "the symmetry translation requires a formula without mu binders")
            }
            TranslateError::ReservedProp(p) => {
                write!(f, "input uses the reserved proposition `{p}`")
            }
            TranslateError::Unsupported(msg) => write!(f, "unsupported translation: {msg}"),
        }
    }
}

impl std::error::Error for TranslateError {}

/// The frame axiom `ax^x_agent` with `psi` plugged in for `p`; implications
/// are desugared through `negate`.
pub fn axiom(x: Condition, agent: &str, psi: &Formula) -> Formula {
    match x {
        Condition::D => diam(agent, Tt),
        Condition::T => implies(boxm(agent, psi.clone()), psi.clone()),
        Condition::B => implies(diam(agent, boxm(agent, psi.clone())), psi.clone()),
        Condition::Four => implies(
            boxm(agent, psi.clone()),
            boxm(agent, boxm(agent, psi.clone())),
        ),
        Condition::Five => implies(
            diam(agent, boxm(agent, psi.clone())),
            boxm(agent, psi.clone()),
        ),
    }
}

/// The agent universe used for the invariance operators of a translation:
/// the agents that the condition is removed for, plus everything occurring
/// in the formula.
fn agent_universe(f: &Formula, set: &BTreeSet<String>) -> BTreeSet<String> {
    let mut a = f.agents();
    a.extend(set.iter().cloned());
    a
}

/// One-step translation: `f /\ Inv_d(/\ ax^x_agent[psi/p])` over
/// `psi in subbar(f)` and the agents in `set`, with `d = md(f)` for
/// x in {D,T,B} and `d = md(f)*|f|` for x in {4,5}. Duplicate axiom
/// instances collapse; conjunct order follows the subbar enumeration.
pub fn translate_onestep(
    f: &Formula,
    set: &BTreeSet<String>,
    x: Condition,
) -> Result<Formula, TranslateError> {
    if !f.is_recursion_free() {
        return Err(TranslateError::RecursiveInput);
    }
    let md = modal_depth(f).map_err(|_| TranslateError::RecursiveInput)?;
    let d = match x {
        Condition::Four | Condition::Five => md * size(f),
        _ => md,
    };
    let mut seen = BTreeSet::new();
    let mut conjuncts = Vec::new();
    for psi in subbar(f) {
        for agent in set {
            let inst = axiom(x, agent, &psi);
            if seen.insert(inst.clone()) {
                conjuncts.push(inst);
            }
        }
    }
    let body = big_and(conjuncts);
    let ag = agent_universe(f, set);
    Ok(and(f.clone(), inv_d(&body, d, &ag)))
}

/// Seriality: `f /\ Inv(/\_{a in set} <a>tt)`.
pub fn translate_d_mu(f: &Formula, set: &BTreeSet<String>) -> Formula {
    let body = big_and(set.iter().map(|a| diam(a, Tt)));
    let ag = agent_universe(f, set);
    and(f.clone(), inv(&body, &ag))
}

/// Reflexivity: homomorphic except `[a]g -> [a]t(g) & t(g)` and
/// `<a>g -> <a>t(g) | t(g)` for agents in `set`.
pub fn translate_t_mu(f: &Formula, set: &BTreeSet<String>) -> Formula {
    match f {
        Boxm(a, b) if set.contains(a) => {
            let tb = translate_t_mu(b, set);
            and(Boxm(a.clone(), rc(tb.clone())), tb)
        }
        Diam(a, b) if set.contains(a) => {
            let tb = translate_t_mu(b, set);
            or(Diam(a.clone(), rc(tb.clone())), tb)
        }
        Boxm(a, b) => Boxm(a.clone(), rc(translate_t_mu(b, set))),
        Diam(a, b) => Diam(a.clone(), rc(translate_t_mu(b, set))),
        And(a, b) => and(translate_t_mu(a, set), translate_t_mu(b, set)),
        Or(a, b) => or(translate_t_mu(a, set), translate_t_mu(b, set)),
        Mu(x, b) => Mu(x.clone(), rc(translate_t_mu(b, set))),
        Nu(x, b) => Nu(x.clone(), rc(translate_t_mu(b, set))),
        _ => f.clone(),
    }
}

/// Transitivity: `[a]g -> Inv^a([a]t(g))` and `<a>g -> Eve^a(<a>t(g))` for
/// agents in `set`, homomorphic elsewhere. Fresh recursion variables come
/// from a deterministic `_Z` counter.
pub fn translate_4_mu(f: &Formula, set: &BTreeSet<String>) -> Formula {
    let mut fresh = FreshVars::for_formula(f);
    fn walk(f: &Formula, set: &BTreeSet<String>, fresh: &mut FreshVars) -> Formula {
        match f {
            Boxm(a, b) if set.contains(a) => {
                let tb = walk(b, set, fresh);
                let z = fresh.fresh();
                // Inv^a([a]tb) = nu Z.([a]tb & [a]Z)
                Nu(
                    z.clone(),
                    rc(and(Boxm(a.clone(), rc(tb)), Boxm(a.clone(), rc(Var(z))))),
                )
            }
            Diam(a, b) if set.contains(a) => {
                let tb = walk(b, set, fresh);
                let z = fresh.fresh();
                // Eve^a(<a>tb) = mu Z.(<a>tb | <a>Z)
                Mu(
                    z.clone(),
                    rc(or(Diam(a.clone(), rc(tb)), Diam(a.clone(), rc(Var(z))))),
                )
            }
            Boxm(a, b) => Boxm(a.clone(), rc(walk(b, set, fresh))),
            Diam(a, b) => Diam(a.clone(), rc(walk(b, set, fresh))),
            And(a, b) => and(walk(a, set, fresh), walk(b, set, fresh)),
            Or(a, b) => or(walk(a, set, fresh), walk(b, set, fresh)),
            Mu(x, b) => Mu(x.clone(), rc(walk(b, set, fresh))),
            Nu(x, b) => Nu(x.clone(), rc(walk(b, set, fresh))),
            _ => f.clone(),
        }
    }
    walk(f, set, &mut fresh)
}

/// The marker proposition used by the symmetry translation.
pub const SYMM_MARKER: &str = "_p";

/// Symmetry (for formulas without `mu` binders): conjoins, per agent in
/// `set`, the three-conjunct invariant over the closed subformula set, with
/// the fresh marker proposition `_p`.
pub fn translate_b_mu(f: &Formula, set: &BTreeSet<String>) -> Result<Formula, TranslateError> {
    if !f.is_mu_free() {
        return Err(TranslateError::MuBinderPresent);
    }
    if f.props().contains(SYMM_MARKER) {
        return Err(TranslateError::ReservedProp(SYMM_MARKER.into()));
    }
    let marker = prop(SYMM_MARKER);
    let not_marker = neg_prop(SYMM_MARKER);
    // Closed subbar: cl(psi) for subformulas, negate(cl(psi)) for their
    // negations. The closure of a negated subformula is the negation of the
    // closure.
    let subs = subformulas_ordered(f);
    let mut seen = BTreeSet::new();
    let mut closed_subbar = Vec::new();
    for s in &subs {
        let c = cl(s, f).expect("subformula closes within its own root");
        if seen.insert(c.clone()) {
            closed_subbar.push(c);
        }
    }
    for s in &subs {
        let c = negate(&cl(s, f).expect("subformula closes within its own root"));
        if seen.insert(c.clone()) {
            closed_subbar.push(c);
        }
    }

    let ag = agent_universe(f, set);
    let mut agent_conjs = Vec::new();
    for a in set {
        // [a](~_p -> <a>_p)
        let c1 = boxm(a, implies(not_marker.clone(), diam(a, marker.clone())));
        // cl(psi) -> [a][a](_p -> cl(psi)) for every member.
        let c2 = big_and(closed_subbar.iter().map(|m| {
            implies(
                m.clone(),
                boxm(a, boxm(a, implies(marker.clone(), m.clone()))),
            )
        }));
        // <a>cl(psi) -> <a>(~_p & cl(psi)) for diamond-shaped members.
        let c3 = big_and(closed_subbar.iter().filter_map(|m| match m {
            Diam(agent, body) if agent == a => Some(implies(
                m.clone(),
                diam(a, and(not_marker.clone(), (**body).clone())),
            )),
            _ => None,
        }));
        agent_conjs.push(inv(&and(and(c1, c2), c3), &ag));
    }
    Ok(and(f.clone(), big_and(agent_conjs)))
}

/// Marker propositions for the embedding of K into denser logics.
pub const K_MARKERS: [&str; 2] = ["_p", "_q"];

/// The three marker conjunctions `p&q`, `p&~q`, `~p&q`.
fn marker_vectors() -> [Formula; 3] {
    let p = prop(K_MARKERS[0]);
    let np = neg_prop(K_MARKERS[0]);
    let q = prop(K_MARKERS[1]);
    let nq = neg_prop(K_MARKERS[1]);
    [and(p.clone(), q.clone()), and(p, nq), and(np, q)]
}

/// `next` cycles the marker conjunctions.
pub fn next_marker(i: usize) -> usize {
    (i + 1) % 3
}

/// Embedding of K into logics with conditions from {D,T,B}:
/// `<a>g -> /\_{pv}(pv -> <a>(next(pv) & t(g)))` and
/// `[a]g -> /\_{pv}(pv -> [a](next(pv) -> t(g)))` for agents in `set`.
/// When the input mentions any modality of an agent in `set`, the root
/// marker `_p & _q` is conjoined so a satisfying state carries a marker.
pub fn translate_k_mu(f: &Formula, set: &BTreeSet<String>) -> Result<Formula, TranslateError> {
    for m in K_MARKERS {
        if f.props().contains(m) {
            return Err(TranslateError::ReservedProp(m.into()));
        }
    }
    let vecs = marker_vectors();
    fn walk(f: &Formula, set: &BTreeSet<String>, vecs: &[Formula; 3]) -> Formula {
        match f {
            Diam(a, b) if set.contains(a) => {
                let tb = walk(b, set, vecs);
                big_and((0..3).map(|i| {
                    implies(
                        vecs[i].clone(),
                        Diam(a.clone(), rc(and(vecs[next_marker(i)].clone(), tb.clone()))),
                    )
                }))
            }
            Boxm(a, b) if set.contains(a) => {
                let tb = walk(b, set, vecs);
                big_and((0..3).map(|i| {
                    implies(
                        vecs[i].clone(),
                        Boxm(a.clone(), rc(implies(vecs[next_marker(i)].clone(), tb.clone()))),
                    )
                }))
            }
            Boxm(a, b) => Boxm(a.clone(), rc(walk(b, set, vecs))),
            Diam(a, b) => Diam(a.clone(), rc(walk(b, set, vecs))),
            And(a, b) => and(walk(a, set, vecs), walk(b, set, vecs)),
            Or(a, b) => or(walk(a, set, vecs), walk(b, set, vecs)),
            Mu(x, b) => Mu(x.clone(), rc(walk(b, set, vecs))),
            Nu(x, b) => Nu(x.clone(), rc(walk(b, set, vecs))),
            _ => f.clone(),
        }
    }
    let translated = walk(f, set, &vecs);
    let touches_set = f.agents().iter().any(|a| set.contains(a));
    Ok(if touches_set {
        // Pin a marker at the root; the embedding evaluates the rewritten
        // formula at a state satisfying p&q.
        and(translated, vecs[0].clone())
    } else {
        translated
    })
}

/// Composes translations to rewrite `f` from satisfiability under
/// `from_spec` to satisfiability under `to_spec`.
///
/// Recursion-free inputs go through the one-step translation, removing
/// conditions in reverse closure order (5, 4, B, T, D). Recursive inputs use
/// the dedicated translations in the order 4, T, B, D (B only for mu-free
/// inputs); removing 5 from a recursive formula is unsupported.
pub fn pipeline(
    f: &Formula,
    from_spec: &LogicSpec,
    to_spec: &LogicSpec,
) -> Result<Formula, TranslateError> {
    let mut agents: BTreeSet<String> = f.agents();
    agents.extend(from_spec.agents().map(|s| s.to_string()));
    agents.extend(to_spec.agents().map(|s| s.to_string()));

    let mut removal: Vec<(Condition, BTreeSet<String>)> = Vec::new();
    for c in Condition::ORDER {
        let mut set = BTreeSet::new();
        for agent in &agents {
            let from = from_spec.conditions(agent);
            let to = to_spec.conditions(agent);
            if !from.is_superset(&to) {
                return Err(TranslateError::Unsupported(format!(
                    "target logic for agent `{agent}` has conditions the source lacks"
                )));
            }
            if from.contains(&c) && !to.contains(&c) {
                set.insert(agent.clone());
            }
        }
        if !set.is_empty() {
            removal.push((c, set));
        }
    }

    let mut cur = f.clone();
    if f.is_recursion_free() {
        // Remove in reverse linear order so residual conditions always
        // precede the condition being removed.
        for (c, set) in removal.into_iter().rev() {
            for agent in &set {
                let pos_c = Condition::ORDER.iter().position(|o| *o == c);
                if let Some(bad) = to_spec
                    .conditions(agent)
                    .into_iter()
                    .find(|r| Condition::ORDER.iter().position(|o| o == r) >= pos_c)
                {
                    return Err(TranslateError::Unsupported(format!(
                        "residual condition {bad} for agent `{agent}` does not precede {c}"
                    )));
                }
            }
            cur = translate_onestep(&cur, &set, c)?;
        }
        return Ok(cur);
    }

    // Recursive input: removing 5 is unsupported; then 4 (residual within
    // {D,T,B}), T (within {D,B}), B (within {D}, mu-free only), D (empty).
    let order = [
        Condition::Five,
        Condition::Four,
        Condition::T,
        Condition::B,
        Condition::D,
    ];
    for c in order {
        let set = match removal.iter().find(|(x, _)| *x == c) {
            Some((_, s)) => s.clone(),
            None => continue,
        };
        let check_residual = |allowed: &[Condition]| -> Result<(), TranslateError> {
            for agent in &set {
                for r in to_spec.conditions(agent) {
                    if !allowed.contains(&r) {
                        return Err(TranslateError::Unsupported(format!(
                            "cannot remove {c} for agent `{agent}` while keeping {r}"
                        )));
                    }
                }
            }
            Ok(())
        };
        match c {
            Condition::Five => {
                return Err(TranslateError::Unsupported(
                    "removing condition 5 from a recursive formula".into(),
                ))
            }
            Condition::Four => {
                check_residual(&[Condition::D, Condition::T, Condition::B])?;
                cur = translate_4_mu(&cur, &set);
            }
            Condition::T => {
                check_residual(&[Condition::D, Condition::B])?;
                cur = translate_t_mu(&cur, &set);
            }
            Condition::B => {
                check_residual(&[Condition::D])?;
                cur = translate_b_mu(&cur, &set)?;
            }
            Condition::D => {
                check_residual(&[])?;
                cur = translate_d_mu(&cur, &set);
            }
        }
    }
    Ok(cur)
}
