//! Brute-force bounded satisfiability and the differential-testing driver.
//!
//! The oracle enumerates every labelled model up to a state cap whose frame
//! satisfies the logic spec, restricted to the agents and propositions that
//! occur in the formula (other agents' relations are irrelevant to
//! satisfaction and can always be completed to meet any frame condition).
//! `Found` verdicts report the least admitting state count and carry a
//! verified witness.

use crate::formula::{Formula, LogicSpec};
use crate::kripke::{ModelError, PointedModel};
use crate::modelcheck::Compiled;
use crate::tableau::{self, TableauConfig, Verdict};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

#[derive(Debug, Clone)]
pub enum OracleResult {
    /// A pointed model of the least admitting size; re-verified before return.
    Found(PointedModel),
    /// No model with at most this many states (the search was exhaustive up
    /// to the reported count).
    NoneWithin(usize),
}

impl OracleResult {
    pub fn is_found(&self) -> bool {
        matches!(self, OracleResult::Found(_))
    }
}

impl fmt::Display for OracleResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleResult::Found(pm) => write!(f, "FOUND({} states)", pm.model.n_states()),
            OracleResult::NoneWithin(n) => write!(f, "NONE-WITHIN({n})"),
        }
    }
}

/// Exhaustive bounded satisfiability: ascends through state counts
/// 1..=max_states and returns the first model found (deterministic
/// enumeration order: frames, then valuations).
pub fn sat_bounded(
    f: &Formula,
    spec: &LogicSpec,
    max_states: usize,
) -> Result<OracleResult, ModelError> {
    sat_bounded_budgeted(f, spec, max_states, u64::MAX)
}

/// Like [`sat_bounded`] but stops ascending when the next state count would
/// exceed `budget` candidate models; the result then reports the largest
/// exhausted count. The budget keeps differential sweeps bounded when a
/// target side has no small models.
pub fn sat_bounded_budgeted(
    f: &Formula,
    spec: &LogicSpec,
    max_states: usize,
    budget: u64,
) -> Result<OracleResult, ModelError> {
    let agents: Vec<String> = f.agents().into_iter().collect();
    let props: Vec<String> = f.props().into_iter().collect();
    let compiled = Compiled::new(f);
    let mut exhausted = 0usize;
    for n in 1..=max_states {
        let frames: f64 = (2f64).powi((n * n) as i32 * agents.len().max(1) as i32);
        let vals: f64 = (2f64).powi((n * props.len()) as i32);
        if frames * vals > budget as f64 && n > 1 {
            break;
        }
        let mut enumerator = crate::kripke::enumerate_models(n, &agents, &props, spec)?;
        let found = enumerator.find_map(|m| {
            let succ: Vec<Vec<u64>> = compiled.agents.iter().map(|a| m.succ_masks(a)).collect();
            let pmask: Vec<u64> = compiled
                .props
                .iter()
                .map(|p| {
                    let mut mask = 0u64;
                    for s in 0..m.n_states() {
                        if m.has_prop(s, p) {
                            mask |= 1 << s;
                        }
                    }
                    mask
                })
                .collect();
            let sat = compiled.eval(n, &succ, &pmask);
            if sat != 0 {
                Some(PointedModel {
                    model: m,
                    point: sat.trailing_zeros() as usize,
                })
            } else {
                None
            }
        });
        if let Some(mut pm) = found {
            // Spec agents absent from the formula get the identity relation,
            // which satisfies every frame condition.
            for agent in spec.agents().map(|s| s.to_string()).collect::<Vec<_>>() {
                if !agents.contains(&agent) && !spec.conditions(&agent).is_empty() {
                    for s in 0..pm.model.n_states() {
                        pm.model.add_edge_ids(&agent, s, s);
                    }
                }
            }
            debug_assert_eq!(crate::modelcheck::check(&pm, f), Ok(true));
            debug_assert!(pm.model.satisfies_spec(spec));
            return Ok(OracleResult::Found(pm));
        }
        exhausted = n;
    }
    Ok(OracleResult::NoneWithin(exhausted))
}

/// One side of a differential comparison.
#[derive(Debug, Clone)]
pub struct SideReport {
    pub formula: Formula,
    pub spec: LogicSpec,
    pub oracle: OracleResult,
    pub tableau: Verdict,
}

/// Structured record of both oracle results plus tableau verdicts for a
/// source formula and its translation, flagging Found/Unsat contradictions.
#[derive(Debug, Clone)]
pub struct DiffReport {
    pub source: SideReport,
    pub target: SideReport,
    pub contradictions: Vec<String>,
}

impl DiffReport {
    pub fn consistent(&self) -> bool {
        self.contradictions.is_empty()
    }
}

/// Runs oracle and tableau on both sides and collects every conclusive
/// SAT-versus-UNSAT clash. `NoneWithin` and `Unknown` are bounded outcomes
/// and contradict nothing by themselves; a tableau Sat (verified witness) or
/// an oracle Found is conclusive satisfiability, and a tableau Unsat (or an
/// exhausted oracle range covering a witness) is the unsatisfiability side
/// of a clash.
#[allow(clippy::too_many_arguments)]
pub fn differential(
    f: &Formula,
    g: &Formula,
    spec_f: &LogicSpec,
    spec_g: &LogicSpec,
    cap_f: usize,
    cap_g: usize,
    budget: u64,
    cfg: TableauConfig,
) -> Result<DiffReport, ModelError> {
    let src_oracle = sat_bounded_budgeted(f, spec_f, cap_f, budget)?;
    let src_tab = tableau::solve(f, spec_f, cfg);
    let tgt_oracle = sat_bounded_budgeted(g, spec_g, cap_g, budget)?;
    let tgt_tab = tableau::solve(g, spec_g, cfg);

    let mut contradictions = Vec::new();
    let sat_src = src_oracle.is_found() || src_tab.is_sat();
    let sat_tgt = tgt_oracle.is_found() || tgt_tab.is_sat();
    if sat_src && tgt_tab.is_unsat() {
        contradictions.push(format!(
            "source satisfiable ({src_oracle}/{src_tab}) but target tableau UNSAT"
        ));
    }
    if sat_tgt && src_tab.is_unsat() {
        contradictions.push(format!(
            "target satisfiable ({tgt_oracle}/{tgt_tab}) but source tableau UNSAT"
        ));
    }
    // Same-side clashes: an exhaustive oracle sweep versus a tableau verdict.
    for (name, oracle, tab) in [
        ("source", &src_oracle, &src_tab),
        ("target", &tgt_oracle, &tgt_tab),
    ] {
        if oracle.is_found() && tab.is_unsat() {
            contradictions.push(format!("{name}: oracle Found but tableau UNSAT"));
        }
        if let (OracleResult::NoneWithin(reached), Verdict::Sat(pm)) = (oracle, tab) {
            if pm.model.n_states() <= *reached {
                contradictions.push(format!(
                    "{name}: tableau witness of {} states inside exhausted oracle range {reached}",
                    pm.model.n_states()
                ));
            }
        }
    }
    Ok(DiffReport {
        source: SideReport {
            formula: f.clone(),
            spec: spec_f.clone(),
            oracle: src_oracle,
            tableau: src_tab,
        },
        target: SideReport {
            formula: g.clone(),
            spec: spec_g.clone(),
            oracle: tgt_oracle,
            tableau: tgt_tab,
        },
        contradictions,
    })
}

/// Parameters for the seeded corpus generator.
#[derive(Debug, Clone)]
pub struct CorpusParams {
    pub max_depth: usize,
    pub props: Vec<String>,
    pub agents: Vec<String>,
    /// Probability of generating a fixed-point binder at an inner node.
    pub fixpoint_prob: f64,
    /// Generate only recursion-free formulas.
    pub recursion_free: bool,
    /// Generate only mu-free formulas.
    pub mu_free: bool,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            max_depth: 4,
            props: vec!["p".into(), "q".into()],
            agents: vec!["a".into(), "b".into()],
            fixpoint_prob: 0.3,
            recursion_free: false,
            mu_free: false,
        }
    }
}

/// Seeded random closed formulas. Variables are drawn from the binders in
/// scope; nodes at the depth limit are literals.
pub struct CorpusGen {
    rng: ChaCha8Rng,
    params: CorpusParams,
    var_counter: usize,
}

impl CorpusGen {
    pub fn new(seed: u64, params: CorpusParams) -> CorpusGen {
        CorpusGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params,
            var_counter: 0,
        }
    }

    pub fn next_formula(&mut self) -> Formula {
        self.var_counter = 0;
        let depth = self.params.max_depth;
        let f = self.gen(depth, &mut Vec::new());
        crate::formula::rename_binders(&f)
    }

    fn literal(&mut self, scope: &[String]) -> Formula {
        let n_lit = self.params.props.len() * 2 + 2;
        let n = n_lit + scope.len();
        let k = self.rng.gen_range(0..n);
        if k < self.params.props.len() {
            Formula::Prop(self.params.props[k].clone())
        } else if k < self.params.props.len() * 2 {
            Formula::NegProp(self.params.props[k - self.params.props.len()].clone())
        } else if k == n_lit - 2 {
            Formula::Tt
        } else if k == n_lit - 1 {
            Formula::Ff
        } else {
            Formula::Var(scope[k - n_lit].clone())
        }
    }

    fn gen(&mut self, depth: usize, scope: &mut Vec<String>) -> Formula {
        use crate::formula::rc;
        if depth == 0 {
            return self.literal(scope);
        }
        let allow_fp = !self.params.recursion_free;
        if allow_fp && self.rng.gen_bool(self.params.fixpoint_prob) {
            let name = format!("V{}", self.var_counter);
            self.var_counter += 1;
            let is_mu = !self.params.mu_free && self.rng.gen_bool(0.5);
            scope.push(name.clone());
            let body = self.gen(depth - 1, scope);
            scope.pop();
            return if is_mu {
                Formula::Mu(name, rc(body))
            } else {
                Formula::Nu(name, rc(body))
            };
        }
        match self.rng.gen_range(0..5) {
            0 => {
                let a = self.gen(depth - 1, scope);
                let b = self.gen(depth - 1, scope);
                Formula::And(rc(a), rc(b))
            }
            1 => {
                let a = self.gen(depth - 1, scope);
                let b = self.gen(depth - 1, scope);
                Formula::Or(rc(a), rc(b))
            }
            2 => {
                let agent = self.pick_agent();
                Formula::Boxm(agent, rc(self.gen(depth - 1, scope)))
            }
            3 => {
                let agent = self.pick_agent();
                Formula::Diam(agent, rc(self.gen(depth - 1, scope)))
            }
            _ => self.literal(scope),
        }
    }

    fn pick_agent(&mut self) -> String {
        let i = self.rng.gen_range(0..self.params.agents.len());
        self.params.agents[i].clone()
    }
}

/// Greedy shrinker: repeatedly replaces subtrees by simpler formulas while
/// `still_failing` keeps reporting the disagreement.
pub fn shrink<F: Fn(&Formula) -> bool>(f: &Formula, still_failing: F) -> Formula {
    let mut cur = f.clone();
    loop {
        let mut improved = false;
        for cand in shrink_candidates(&cur) {
            if !cand.is_closed() || crate::formula::size(&cand) >= crate::formula::size(&cur) {
                continue;
            }
            if still_failing(&cand) {
                cur = cand;
                improved = true;
                break;
            }
        }
        if !improved {
            return cur;
        }
    }
}

fn shrink_candidates(f: &Formula) -> Vec<Formula> {
    use crate::formula::rc;
    let mut out = vec![Formula::Tt, Formula::Ff];
    match f {
        Formula::And(a, b) | Formula::Or(a, b) => {
            out.push((**a).clone());
            out.push((**b).clone());
            for ca in shrink_candidates(a) {
                out.push(match f {
                    Formula::And(_, _) => Formula::And(rc(ca), b.clone()),
                    _ => Formula::Or(rc(ca), b.clone()),
                });
            }
            for cb in shrink_candidates(b) {
                out.push(match f {
                    Formula::And(_, _) => Formula::And(a.clone(), rc(cb)),
                    _ => Formula::Or(a.clone(), rc(cb)),
                });
            }
        }
        Formula::Boxm(ag, b) => {
            out.push((**b).clone());
            for cb in shrink_candidates(b) {
                out.push(Formula::Boxm(ag.clone(), rc(cb)));
            }
        }
        Formula::Diam(ag, b) => {
            out.push((**b).clone());
            for cb in shrink_candidates(b) {
                out.push(Formula::Diam(ag.clone(), rc(cb)));
            }
        }
        Formula::Mu(x, b) => {
            for cb in shrink_candidates(b) {
                out.push(Formula::Mu(x.clone(), rc(cb)));
            }
        }
        Formula::Nu(x, b) => {
            for cb in shrink_candidates(b) {
                out.push(Formula::Nu(x.clone(), rc(cb)));
            }
        }
        _ => {}
    }
    out
}
