//! Golden tests for the command-line surface: output forms, round trips,
//! and the exit-code contract (0 true/SAT, 1 false/UNSAT, 2 UNKNOWN,
//! 3 usage/parse error).

use std::io::Write;
use std::process::{Command, Output};

fn mucalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mucalc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_tmp(name: &str, content: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("mucalc-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
    path
}

const MODEL: &str = "states: s0 s1\nrel a: s0 s1\nval p: s1\n";

#[test]
fn fmt_canonicalizes() {
    let out = mucalc(&["fmt", "mu X.[a]X"]);
    assert_eq!(stdout(&out), "mu X. [a] X");
    assert_eq!(code(&out), 0);

    // fmt output re-parses to the same canonical form.
    let again = mucalc(&["fmt", &stdout(&out)]);
    assert_eq!(stdout(&again), "mu X. [a] X");
}

#[test]
fn fmt_rejects_bad_input_with_exit_3() {
    let out = mucalc(&["fmt", "p & &"]);
    assert_eq!(code(&out), 3);
    let out = mucalc(&["fmt", "mu X. Y"]);
    assert_eq!(code(&out), 3);
    // Free variables are fine in open mode.
    let out = mucalc(&["fmt", "--open", "[a] X"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn mc_reports_truth_and_exit_codes() {
    let model = write_tmp("mc.km", MODEL);
    let m = model.to_str().unwrap();
    let out = mucalc(&["mc", m, "s0", "<a>p"]);
    assert_eq!(stdout(&out), "true");
    assert_eq!(code(&out), 0);
    let out = mucalc(&["mc", m, "s0", "p"]);
    assert_eq!(stdout(&out), "false");
    assert_eq!(code(&out), 1);
    let out = mucalc(&["mc", m, "nosuch", "p"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn sat_figure_examples() {
    let out = mucalc(&["sat", "(p & <a>p) & mu X.(~p | [a]X)", "--logic", "a=K"]);
    assert_eq!(stdout(&out), "SAT");
    assert_eq!(code(&out), 0);

    let out = mucalc(&[
        "sat",
        "<b>p & mu X.([b]~p | [b]X)",
        "--logic",
        "b=K5",
        "--kappa",
        "2",
    ]);
    assert_eq!(stdout(&out), "UNSAT");
    assert_eq!(code(&out), 1);
}

#[test]
fn sat_unknown_exit_code() {
    let out = mucalc(&[
        "sat",
        "nu X. <a> X",
        "--logic",
        "a=K",
        "--max-prefix",
        "3",
        "--max-nodes",
        "500",
    ]);
    assert_eq!(stdout(&out), "UNKNOWN");
    assert_eq!(code(&out), 2);
}

#[test]
fn sat_emits_verifiable_model() {
    let dir = std::env::temp_dir().join("mucalc-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let witness = dir.join("witness.km");
    let out = mucalc(&[
        "sat",
        "p & <a>q",
        "--logic",
        "a=K",
        "--emit-model",
        witness.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&out), "SAT");
    let text = std::fs::read_to_string(&witness).unwrap();
    // The witness file parses and model checking confirms it.
    let model = mucalc_core::kripke::KripkeModel::parse(&text).unwrap();
    let f = mucalc_core::formula::parse("p & <a>q").unwrap();
    let pm = mucalc_core::kripke::PointedModel { model, point: 0 };
    assert_eq!(mucalc_core::modelcheck::check(&pm, &f), Ok(true));
}

#[test]
fn sat_k4_family() {
    let out = mucalc(&["sat-k4", "mu X. [a] X", "--logic", "K4"]);
    assert_eq!(stdout(&out), "SAT");
    let out = mucalc(&["sat-k4", "mu X. [a] X", "--logic", "S4"]);
    assert_eq!(stdout(&out), "UNSAT");
    assert_eq!(code(&out), 1);
    let out = mucalc(&["sat-k4", "<a>p & [b]q", "--logic", "K4"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn translate_remove_and_pipeline() {
    // Recursion-free input goes through the one-step translation: the
    // T axiom instantiated over subbar([a]p), under Inv_1.
    let out = mucalc(&["translate", "--agents", "a", "--remove", "T", "[a]p"]);
    let body = "(<a> <a> ~p | [a] p) & (<a> ~p | p) & (<a> [a] p | <a> ~p) & (<a> p | ~p)";
    assert_eq!(stdout(&out), format!("[a] p & ({body} & [a] ({body}))"));
    assert_eq!(code(&out), 0);

    // Recursive input uses the dedicated translation.
    let out = mucalc(&["translate", "--agents", "a", "--remove", "T", "mu X. [a] X"]);
    assert_eq!(stdout(&out), "mu X. [a] X & X");

    let out = mucalc(&[
        "translate",
        "--from",
        "a=TB",
        "--to",
        "a=K",
        "nu X. (p & [a] X)",
    ]);
    assert_eq!(code(&out), 0);
    // Output parses in the standard grammar.
    let fmt = mucalc(&["fmt", &stdout(&out)]);
    assert_eq!(code(&fmt), 0);

    let out = mucalc(&["translate", "--from", "a=5", "--to", "a=K", "mu X. [a] X"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn closure_output_reparses_and_satisfies_conditions() {
    let model = write_tmp("closure.km", MODEL);
    let out = mucalc(&["closure", model.to_str().unwrap(), "--logic", "a=T4"]);
    assert_eq!(code(&out), 0);
    let closed = mucalc_core::kripke::KripkeModel::parse(&stdout(&out)).unwrap();
    use mucalc_core::formula::Condition;
    assert!(closed.has_condition("a", Condition::T));
    assert!(closed.has_condition("a", Condition::Four));
}

#[test]
fn oracle_reports_minimal_counts() {
    let out = mucalc(&["oracle", "p & <a>~p", "--logic", "a=K", "--max-states", "3"]);
    assert!(stdout(&out).starts_with("FOUND 2 states"));
    assert_eq!(code(&out), 0);
    let out = mucalc(&["oracle", "mu X. [a] X", "--logic", "a=T", "--max-states", "3"]);
    assert_eq!(stdout(&out), "NONE-WITHIN 3");
    assert_eq!(code(&out), 1);
}

#[test]
fn bisim_compares_pointed_models() {
    let m1 = write_tmp("b1.km", MODEL);
    let m2 = write_tmp("b2.km", "states: t0 t1 t2\nrel a: t0 t1 ; t0 t2\nval p: t1 t2\n");
    let out = mucalc(&[
        "bisim",
        m1.to_str().unwrap(),
        "s0",
        m2.to_str().unwrap(),
        "t0",
    ]);
    assert_eq!(stdout(&out), "bisimilar");
    assert_eq!(code(&out), 0);
    let out = mucalc(&[
        "bisim",
        m1.to_str().unwrap(),
        "s0",
        m2.to_str().unwrap(),
        "t1",
    ]);
    assert_eq!(stdout(&out), "not bisimilar");
    assert_eq!(code(&out), 1);
}

#[test]
fn encode_emits_table_and_parseable_formula() {
    let dir = std::env::temp_dir().join("mucalc-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let table = dir.join("graphs.tsv");
    let out = mucalc(&[
        "encode",
        "<a>p",
        "--logic",
        "a=K",
        "--emit-table",
        table.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let fmt = mucalc(&["fmt", &stdout(&out)]);
    assert_eq!(code(&fmt), 0);
    let table_text = std::fs::read_to_string(&table).unwrap();
    assert!(table_text.lines().count() >= 2);
    assert!(table_text.contains("g_"));
}

#[test]
fn corpus_requires_seed_and_reports_lines() {
    // Missing --seed is a usage error (exit 2 from clap remaps to nonzero).
    let out = mucalc(&["corpus", "--check", "tableau", "--count", "3"]);
    assert_ne!(code(&out), 0);

    let out = mucalc(&["corpus", "--seed", "5", "--check", "tableau", "--count", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 4);
    assert!(stdout(&out).contains("ok"));
}

#[test]
fn unknown_flags_are_rejected() {
    let out = mucalc(&["fmt", "--no-such-flag", "tt"]);
    assert_ne!(code(&out), 0);
    let out = mucalc(&["sat", "tt", "--logic", "a=K9"]);
    assert_eq!(code(&out), 3);
}
