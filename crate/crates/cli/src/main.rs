//! `mucalc` — satisfiability, model checking, and translations for the
//! multi-agent modal mu-calculus over restricted frames.
//!
//! Exit codes: 0 success/true/SAT, 1 false/UNSAT, 2 UNKNOWN,
//! 3 usage or parse error.

use clap::{Parser, Subcommand};
use mucalc_core::formula::{self, Condition, Formula, LogicSpec};
use mucalc_core::k4solver::{self, K4Logic};
use mucalc_core::kripke::{self, KripkeModel, PointedModel};
use mucalc_core::modelcheck;
use mucalc_core::muencode::{self, EncodeCaps};
use mucalc_core::oracle::{self, CorpusGen, CorpusParams, OracleResult};
use mucalc_core::tableau::{self, TableauConfig, Verdict};
use mucalc_core::translate;
use std::collections::BTreeSet;
use std::io::Read;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mucalc", version, about = "Modal mu-calculus over restricted Kripke frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a formula and print its canonical form.
    Fmt {
        /// Formula text, a path containing one, or `-` for stdin.
        formula: String,
        /// Force reading the argument as a file path.
        #[arg(long)]
        file: bool,
        /// Allow free recursion variables.
        #[arg(long)]
        open: bool,
    },
    /// Model check: does the formula hold at a state of a model?
    Mc {
        /// Model file in the line-oriented model format.
        model: String,
        /// State name.
        state: String,
        formula: String,
        #[arg(long)]
        file: bool,
    },
    /// Tableau satisfiability under a logic spec.
    Sat {
        formula: String,
        /// Logic spec such as "a=K4;b=S5".
        #[arg(long, default_value = "")]
        logic: String,
        /// Fixed-point closure threshold.
        #[arg(long, default_value_t = 3)]
        kappa: usize,
        #[arg(long, default_value_t = 12)]
        max_prefix: usize,
        #[arg(long, default_value_t = 40000)]
        max_nodes: usize,
        /// Treat branches as open once only rules beyond this prefix length
        /// remain, provided the extracted model verifies.
        #[arg(long)]
        sufficiency: Option<usize>,
        /// Write the witness model here on SAT.
        #[arg(long)]
        emit_model: Option<String>,
        #[arg(long)]
        file: bool,
    },
    /// Dedicated single-agent solver for K4, D4, and S4.
    SatK4 {
        formula: String,
        #[arg(long)]
        logic: String,
        #[arg(long)]
        emit_model: Option<String>,
        #[arg(long)]
        file: bool,
    },
    /// Satisfiability-preserving translation between logics.
    Translate {
        formula: String,
        /// Agents the condition is removed for, comma separated.
        #[arg(long)]
        agents: Option<String>,
        /// Single condition to remove (D, T, B, 4, or 5).
        #[arg(long)]
        remove: Option<String>,
        /// Source logic spec; used with --to.
        #[arg(long)]
        from: Option<String>,
        /// Target logic spec; used with --from.
        #[arg(long)]
        to: Option<String>,
        #[arg(long)]
        file: bool,
    },
    /// Encode tableau search for the formula into the mu-calculus.
    Encode {
        formula: String,
        #[arg(long, default_value = "")]
        logic: String,
        /// Cap on |sub(f)|.
        #[arg(long, default_value_t = 4)]
        graph_cap: usize,
        /// Write the graph-proposition sidecar table here.
        #[arg(long)]
        emit_table: Option<String>,
        #[arg(long)]
        file: bool,
    },
    /// Brute-force bounded satisfiability.
    Oracle {
        formula: String,
        #[arg(long, default_value = "")]
        logic: String,
        #[arg(long)]
        max_states: usize,
        #[arg(long)]
        file: bool,
    },
    /// Close a model's relations under a logic's frame conditions.
    Closure {
        model: String,
        #[arg(long)]
        logic: String,
    },
    /// Check two pointed models for bisimilarity.
    Bisim {
        model1: String,
        state1: String,
        model2: String,
        state2: String,
    },
    /// Differential testing over a seeded corpus.
    Corpus {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// What to cross-check: translations, tableau, k4, or encode.
        #[arg(long)]
        check: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Formula arguments are inline unless `--file` is set, the argument is `-`
/// (stdin), or it contains a path separator.
fn read_formula_arg(arg: &str, force_file: bool) -> Result<String, String> {
    if arg == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| format!("reading stdin: {e}"))?;
        return Ok(buf);
    }
    if force_file || arg.contains(std::path::MAIN_SEPARATOR) {
        return std::fs::read_to_string(arg).map_err(|e| format!("reading `{arg}`: {e}"));
    }
    Ok(arg.to_string())
}

fn parse_formula(arg: &str, force_file: bool) -> Result<Formula, String> {
    let text = read_formula_arg(arg, force_file)?;
    formula::parse(text.trim()).map_err(|e| e.to_string())
}

fn parse_spec(text: &str) -> Result<LogicSpec, String> {
    if text.trim().is_empty() {
        return Ok(LogicSpec::new());
    }
    LogicSpec::parse(text)
}

fn load_model(path: &str) -> Result<KripkeModel, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("reading `{path}`: {e}"))?;
    KripkeModel::parse(&text).map_err(|e| e.to_string())
}

fn write_model(path: &str, pm: &PointedModel) -> Result<(), String> {
    let mut text = pm.model.print();
    text.push_str(&format!("# point: {}\n", pm.model.state_name(pm.point)));
    std::fs::write(path, text).map_err(|e| format!("writing `{path}`: {e}"))
}

fn run(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Fmt { formula: arg, file, open } => {
            let text = read_formula_arg(&arg, file)?;
            let f = if open {
                formula::parse_open(text.trim()).map_err(|e| e.to_string())?
            } else {
                formula::parse(text.trim()).map_err(|e| e.to_string())?
            };
            println!("{}", formula::print(&f));
            Ok(ExitCode::SUCCESS)
        }
        Command::Mc { model, state, formula: arg, file } => {
            let m = load_model(&model)?;
            let point = m
                .state_id(&state)
                .ok_or_else(|| format!("unknown state `{state}`"))?;
            let f = parse_formula(&arg, file)?;
            let pm = PointedModel { model: m, point };
            let holds = modelcheck::check(&pm, &f).map_err(|e| e.to_string())?;
            println!("{}", if holds { "true" } else { "false" });
            Ok(if holds { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Sat { formula: arg, logic, kappa, max_prefix, max_nodes, sufficiency, emit_model, file } => {
            let f = parse_formula(&arg, file)?;
            let spec = parse_spec(&logic)?;
            let cfg = TableauConfig {
                kappa,
                max_prefix_len: max_prefix,
                max_nodes,
                sufficiency,
            };
            match tableau::solve(&f, &spec, cfg) {
                Verdict::Sat(pm) => {
                    println!("SAT");
                    if let Some(path) = emit_model {
                        write_model(&path, &pm)?;
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Verdict::Unsat(_) => {
                    println!("UNSAT");
                    Ok(ExitCode::from(1))
                }
                Verdict::Unknown(_) => {
                    println!("UNKNOWN");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::SatK4 { formula: arg, logic, emit_model, file } => {
            let f = parse_formula(&arg, file)?;
            let logic = K4Logic::parse(&logic)
                .ok_or_else(|| format!("unknown K4-family logic `{logic}`"))?;
            match k4solver::solve_k4(&f, logic).map_err(|e| e.to_string())? {
                (k4solver::K4Verdict::Sat(pm), _) => {
                    println!("SAT");
                    if let Some(path) = emit_model {
                        write_model(&path, &pm)?;
                    }
                    Ok(ExitCode::SUCCESS)
                }
                (k4solver::K4Verdict::Unsat, _) => {
                    println!("UNSAT");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Translate { formula: arg, agents, remove, from, to, file } => {
            let f = parse_formula(&arg, file)?;
            let out = match (agents, remove, from, to) {
                (Some(agents), Some(cond), None, None) => {
                    let set: BTreeSet<String> =
                        agents.split(',').map(|s| s.trim().to_string()).collect();
                    let c = match cond.trim() {
                        "D" | "d" => Condition::D,
                        "T" | "t" => Condition::T,
                        "B" | "b" => Condition::B,
                        "4" => Condition::Four,
                        "5" => Condition::Five,
                        other => return Err(format!("unknown condition `{other}`")),
                    };
                    if f.is_recursion_free() {
                        translate::translate_onestep(&f, &set, c).map_err(|e| e.to_string())?
                    } else {
                        match c {
                            Condition::D => translate::translate_d_mu(&f, &set),
                            Condition::T => translate::translate_t_mu(&f, &set),
                            Condition::Four => translate::translate_4_mu(&f, &set),
                            Condition::B => {
                                translate::translate_b_mu(&f, &set).map_err(|e| e.to_string())?
                            }
                            Condition::Five => {
                                return Err(
                                    "removing condition 5 from a recursive formula is unsupported"
                                        .into(),
                                )
                            }
                        }
                    }
                }
                (None, None, Some(from), Some(to)) => {
                    let from = parse_spec(&from)?;
                    let to = parse_spec(&to)?;
                    translate::pipeline(&f, &from, &to).map_err(|e| e.to_string())?
                }
                _ => {
                    return Err(
                        "use either --agents with --remove, or --from with --to".into()
                    )
                }
            };
            println!("{}", formula::print(&out));
            Ok(ExitCode::SUCCESS)
        }
        Command::Encode { formula: arg, logic, graph_cap, emit_table, file } => {
            let f = parse_formula(&arg, file)?;
            let spec = parse_spec(&logic)?;
            let caps = EncodeCaps {
                sub_cap: graph_cap,
                ..EncodeCaps::default()
            };
            let mut enc =
                muencode::Encoder::new(&f, &spec, caps).map_err(|e| e.to_string())?;
            let out = enc.encode();
            println!("{}", formula::print(&out));
            if let Some(path) = emit_table {
                let mut text = String::new();
                for (name, desc) in enc.graph_table() {
                    text.push_str(&format!("{name}\t{desc}\n"));
                }
                std::fs::write(&path, text).map_err(|e| format!("writing `{path}`: {e}"))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { formula: arg, logic, max_states, file } => {
            let f = parse_formula(&arg, file)?;
            let spec = parse_spec(&logic)?;
            match oracle::sat_bounded(&f, &spec, max_states).map_err(|e| e.to_string())? {
                OracleResult::Found(pm) => {
                    println!("FOUND {} states", pm.model.n_states());
                    print!("{}", pm.model.print());
                    println!("# point: {}", pm.model.state_name(pm.point));
                    Ok(ExitCode::SUCCESS)
                }
                OracleResult::NoneWithin(n) => {
                    println!("NONE-WITHIN {n}");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Closure { model, logic } => {
            let m = load_model(&model)?;
            let spec = parse_spec(&logic)?;
            print!("{}", m.close_logic(&spec).print());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bisim { model1, state1, model2, state2 } => {
            let m1 = load_model(&model1)?;
            let m2 = load_model(&model2)?;
            let p1 = m1
                .state_id(&state1)
                .ok_or_else(|| format!("unknown state `{state1}`"))?;
            let p2 = m2
                .state_id(&state2)
                .ok_or_else(|| format!("unknown state `{state2}`"))?;
            let pm1 = PointedModel { model: m1, point: p1 };
            let pm2 = PointedModel { model: m2, point: p2 };
            if kripke::bisimilar(&pm1, &pm2) {
                println!("bisimilar");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("not bisimilar");
                Ok(ExitCode::from(1))
            }
        }
        Command::Corpus { seed, count, check } => corpus_check(seed, count, &check),
    }
}

fn corpus_check(seed: u64, count: usize, check: &str) -> Result<ExitCode, String> {
    let mut bad = 0usize;
    match check {
        "tableau" => {
            let mut gen = CorpusGen::new(
                seed,
                CorpusParams {
                    max_depth: 3,
                    agents: vec!["a".into()],
                    ..CorpusParams::default()
                },
            );
            let spec = LogicSpec::new();
            let cfg = TableauConfig::default();
            for i in 0..count {
                let f = gen.next_formula();
                let tab = tableau::solve(&f, &spec, cfg);
                let orc = oracle::sat_bounded(&f, &spec, 3).map_err(|e| e.to_string())?;
                let clash = matches!((&tab, &orc), (Verdict::Unsat(_), OracleResult::Found(_)));
                if clash {
                    bad += 1;
                }
                println!(
                    "{i}\t{}\ttableau={tab}\toracle={orc}\t{}",
                    formula::print(&f),
                    if clash { "CONTRADICTION" } else { "ok" }
                );
            }
        }
        "k4" => {
            let mut gen = CorpusGen::new(
                seed,
                CorpusParams {
                    max_depth: 3,
                    agents: vec!["a".into()],
                    ..CorpusParams::default()
                },
            );
            for i in 0..count {
                let f = gen.next_formula();
                let logic = [K4Logic::K4, K4Logic::D4, K4Logic::S4][i % 3];
                let spec = LogicSpec::single("a", logic.conditions());
                let (v, _) = k4solver::solve_k4(&f, logic).map_err(|e| e.to_string())?;
                let orc = oracle::sat_bounded(&f, &spec, 3).map_err(|e| e.to_string())?;
                let clash = matches!(
                    (&v, &orc),
                    (k4solver::K4Verdict::Unsat, OracleResult::Found(_))
                );
                if clash {
                    bad += 1;
                }
                println!(
                    "{i}\t{logic}\t{}\tk4={v}\toracle={orc}\t{}",
                    formula::print(&f),
                    if clash { "CONTRADICTION" } else { "ok" }
                );
            }
        }
        "translations" => {
            let mut gen = CorpusGen::new(
                seed,
                CorpusParams {
                    max_depth: 3,
                    agents: vec!["a".into()],
                    recursion_free: true,
                    ..CorpusParams::default()
                },
            );
            let cfg = TableauConfig::default();
            for i in 0..count {
                let f = gen.next_formula();
                let cond = [Condition::D, Condition::T, Condition::B][i % 3];
                let set: BTreeSet<String> = ["a".to_string()].into();
                let t = translate::translate_onestep(&f, &set, cond)
                    .map_err(|e| e.to_string())?;
                let from = LogicSpec::single("a", &[cond]);
                let to = LogicSpec::new();
                let rep = oracle::differential(&f, &t, &from, &to, 3, 3, 2_000_000, cfg)
                    .map_err(|e| e.to_string())?;
                if !rep.consistent() {
                    bad += 1;
                }
                println!(
                    "{i}\tremove-{cond}\t{}\tsrc={}\ttgt={}\t{}",
                    formula::print(&f),
                    rep.source.oracle,
                    rep.target.oracle,
                    if rep.consistent() { "ok" } else { "CONTRADICTION" }
                );
            }
        }
        "encode" => {
            let suite = ["tt", "p", "p & ~p", "<a>p", "[a]p & <a>q", "mu X. [a] X"];
            let specs = [
                ("K", vec![]),
                ("T", vec![Condition::T]),
                ("D", vec![Condition::D]),
            ];
            let mut i = 0;
            for text in suite.iter().take(count.max(1)) {
                let f = formula::parse(text).map_err(|e| e.to_string())?;
                for (name, conds) in &specs {
                    let spec = LogicSpec::single("a", conds);
                    let direct = oracle::sat_bounded(&f, &spec, 3)
                        .map_err(|e| e.to_string())?
                        .is_found();
                    let caps = EncodeCaps { sub_cap: 5, graph_cap: 100_000 };
                    let mut enc = muencode::Encoder::new(&f, &spec, caps)
                        .map_err(|e| e.to_string())?;
                    let esat = muencode::encode_sat_bounded(&mut enc, 3);
                    let clash = direct != esat;
                    if clash {
                        bad += 1;
                    }
                    println!(
                        "{i}\t{text}\t{name}\tdirect={direct}\tencode={esat}\t{}",
                        if clash { "CONTRADICTION" } else { "ok" }
                    );
                    i += 1;
                }
            }
        }
        other => return Err(format!("unknown corpus check `{other}`")),
    }
    if bad > 0 {
        eprintln!("{bad} contradictions");
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
