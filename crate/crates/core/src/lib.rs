//! Multi-agent modal mu-calculus over restricted Kripke frames.
//!
//! The crate provides:
//! - [`formula`]: the NNF formula AST, a parser/printer, and syntactic
//!   measures (subformulas, negation, modal depth, closures);
//! - [`kripke`]: finite Kripke models, frame-condition predicates and
//!   closures, tree unfolding, bisimilarity, and bounded model enumeration;
//! - [`modelcheck`]: fixed-point model checking;
//! - [`translate`]: satisfiability-preserving formula translations between
//!   logics with different frame conditions;
//! - [`tableau`]: a prefixed tableau for satisfiability with model
//!   extraction;
//! - [`k4solver`]: a dedicated decision procedure for single-agent K4/D4/S4
//!   with recursion;
//! - [`muencode`]: an encoding of tableau search into the mu-calculus for
//!   logics without euclidean agents;
//! - [`oracle`]: brute-force bounded satisfiability and the differential
//!   test driver.

pub mod formula;
pub mod k4solver;
pub mod kripke;
pub mod modelcheck;
pub mod muencode;
pub mod oracle;
pub mod tableau;
pub mod translate;
