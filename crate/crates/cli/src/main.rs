use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use rtreelab::cex::{self, Chain, CexError};
use rtreelab::exec::Exec;
use rtreelab::freegrp::{parse_word_list, FreeGroupError, ReducedWord, SubgroupGraph};
use rtreelab::gog::{self, GogError};
use rtreelab::isosys::{self, IsometrySystem, IsosysError, MachineStatus};
use rtreelab::mtree::{self, TreeError, TreeInstance};
use rtreelab::scalar::{self, Scalar, ScalarBasis, ScalarError};

#[derive(Parser, Debug)]
#[command(name = "rtreelab", version, about = "Exact computations for group actions on R-trees")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Opts {
    /// JSON report (default)
    #[arg(long, global = true, conflicts_with_all = ["dot", "csv"])]
    json: bool,
    /// Graphviz output where the command has a graph
    #[arg(long, global = true, conflicts_with = "csv")]
    dot: bool,
    /// CSV output where the command has a table
    #[arg(long, global = true)]
    csv: bool,
    /// Orbit points explored per orbit
    #[arg(long, global = true, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    orbit_budget: u64,
    /// Rips machine steps, also the fold-move budget
    #[arg(long, global = true, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    max_steps: u64,
    /// Word length bound for enumerations
    #[arg(long, global = true, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    max_len: u64,
    /// Seed recorded in the report; no command currently samples
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Add wall-clock time to the report (makes output non-reproducible)
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Subgroups of free groups
    #[command(subcommand)]
    Group(GroupCmd),
    /// Finite metric trees and subtree families
    #[command(subcommand)]
    Tree(TreeCmd),
    /// Systems of partial isometries
    #[command(subcommand)]
    Isosys(IsosysCmd),
    /// Graphs of groups
    #[command(subcommand)]
    Gog(GogCmd),
    /// The nested-chain counterexample
    #[command(subcommand)]
    Cex(CexCmd),
}

#[derive(Args, Debug)]
struct Sub {
    /// Comma-separated generators, e.g. "a,babb"
    #[arg(long)]
    sub: String,
    /// Ambient free rank; defaults to the largest generator used (at least 2)
    #[arg(long)]
    rank: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum GroupCmd {
    /// Folded Stallings graph of a subgroup
    Fold(Sub),
    /// Membership of a word
    Member {
        #[command(flatten)]
        sub: Sub,
        #[arg(long)]
        word: String,
    },
    /// Intersection of two subgroups
    Intersect {
        #[command(flatten)]
        sub: Sub,
        #[arg(long)]
        other: String,
    },
    /// Malnormality inside an ambient subgroup (default the whole free group)
    Malnormal {
        #[command(flatten)]
        sub: Sub,
        #[arg(long)]
        ambient: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum TreeCmd {
    /// Four-point condition and transverse covering check
    Check { file: PathBuf },
    /// Skeleton of the subtree family
    Skeleton { file: PathBuf },
    /// Collapse the members listed under "kill" (or --kill)
    Collapse {
        file: PathBuf,
        #[arg(long, value_delimiter = ',')]
        kill: Option<Vec<usize>>,
    },
}

#[derive(Subcommand, Debug)]
enum IsosysCmd {
    /// Multiplicity profile of the bases
    Profile { file: PathBuf },
    /// Run the Rips machine and classify
    Run { file: PathBuf },
    /// Orbit of a point
    Orbit {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Classification with certificate
    Classify { file: PathBuf },
    /// Leaf-space graph of the suspension
    Leafspace { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum GogCmd {
    /// Check edge inclusions
    Validate { file: PathBuf },
    /// Scott complexity monitor
    Monitor { file: PathBuf },
    /// Decompose a morphism into fold moves
    Fold { file: PathBuf },
    /// Monitor a sequence of levels and report the limit edge group
    Scott { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum CexCmd {
    /// Levels b_1..b_N of the chain
    Chain { n: usize },
    /// Malnormality of M_i in M_{i-1}
    Malnormal { i: usize },
    /// Substitution-length check over words up to length L in (a, b_N)
    Intersection { n: usize, l: usize },
    /// The graph of groups Gamma_k
    Gamma { k: usize },
    /// Distance between the two spine endpoints
    Spine {
        #[arg(conflicts_with = "k")]
        pos: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Length of the fixed set of g on the spine of T_k
    Extent { g: String, k: usize },
    /// Translation lengths of g g' in T_0..T_kmax
    Lengths { g: String, g_prime: String, k_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Dot,
    Csv,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Budget(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Budget(_) => 2,
        }
    }
}

impl From<FreeGroupError> for Failure {
    fn from(e: FreeGroupError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ScalarError> for Failure {
    fn from(e: ScalarError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<TreeError> for Failure {
    fn from(e: TreeError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<IsosysError> for Failure {
    fn from(e: IsosysError) -> Self {
        match e {
            IsosysError::BudgetExceeded(_) | IsosysError::NotSimplicial(_) => Failure::Budget(e.to_string()),
            e => Failure::Input(e.to_string()),
        }
    }
}

impl From<GogError> for Failure {
    fn from(e: GogError) -> Self {
        match e {
            GogError::BudgetExceeded(_) => Failure::Budget(e.to_string()),
            e => Failure::Input(e.to_string()),
        }
    }
}

impl From<CexError> for Failure {
    fn from(e: CexError) -> Self {
        Failure::Input(e.to_string())
    }
}

/// What a command produced: the JSON result plus optional alternative renderings.
#[derive(Default)]
struct Outcome {
    result: Value,
    dot: Option<String>,
    csv: Option<String>,
    exhausted: bool,
}

impl Outcome {
    fn json(result: Value) -> Self {
        Outcome { result, ..Default::default() }
    }

    fn with_dot(mut self, dot: String) -> Self {
        self.dot = Some(dot);
        self
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

/// Replaces serialized scalars `{"basis":..,"coeffs":..}` with their display strings.
fn scalars_to_strings(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            if m.len() == 2 && m.contains_key("basis") && m.contains_key("coeffs") {
                if let Ok(s) = serde_json::from_value::<Scalar>(Value::Object(m.clone())) {
                    return Value::String(s.to_string());
                }
            }
            Value::Object(m.into_iter().map(|(k, v)| (k, scalars_to_strings(v))).collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(scalars_to_strings).collect()),
        other => other,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn at(path: &Path) -> impl Fn(String) -> Failure + '_ {
    move |msg| Failure::Input(format!("{}: {msg}", path.display()))
}

fn words(s: &str) -> Result<Vec<ReducedWord>, Failure> {
    Ok(parse_word_list(s)?)
}

fn word(s: &str) -> Result<ReducedWord, Failure> {
    Ok(s.parse::<ReducedWord>()?)
}

fn infer_rank(explicit: Option<usize>, all: &[&[ReducedWord]]) -> Result<usize, Failure> {
    let used = all.iter().flat_map(|ws| ws.iter()).map(|w| w.max_generator()).max().unwrap_or(0);
    match explicit {
        Some(r) if r < used => Err(Failure::Input(format!("rank {r} is smaller than generator {used} in use"))),
        Some(0) => Err(Failure::Input("rank must be positive".into())),
        Some(r) => Ok(r),
        None => Ok(used.max(2)),
    }
}

fn group(cmd: &GroupCmd) -> Result<Outcome, Failure> {
    match cmd {
        GroupCmd::Fold(sub) => {
            let gens = words(&sub.sub)?;
            let rank = infer_rank(sub.rank, &[&gens])?;
            let h = SubgroupGraph::stallings(rank, &gens);
            Ok(Outcome::json(json!({ "subgroup": to_value(&h.summary()) })).with_dot(h.to_dot("H")))
        }
        GroupCmd::Member { sub, word: w } => {
            let gens = words(&sub.sub)?;
            let w = word(w)?;
            let rank = infer_rank(sub.rank, &[&gens, std::slice::from_ref(&w)])?;
            let h = SubgroupGraph::stallings(rank, &gens);
            let member = h.member(&w);
            let rewrite = if member { Some(h.rewrite_in_basis(&w)?) } else { None };
            Ok(Outcome::json(json!({
                "word": w,
                "member": member,
                "basis": h.basis(),
                "in_basis": rewrite,
            }))
            .with_dot(h.to_dot("H")))
        }
        GroupCmd::Intersect { sub, other } => {
            let (g1, g2) = (words(&sub.sub)?, words(other)?);
            let rank = infer_rank(sub.rank, &[&g1, &g2])?;
            let (h, k) = (SubgroupGraph::stallings(rank, &g1), SubgroupGraph::stallings(rank, &g2));
            let i = h.intersect(&k);
            Ok(Outcome::json(json!({
                "left": to_value(&h.summary()),
                "right": to_value(&k.summary()),
                "intersection": to_value(&i.summary()),
                "trivial": i.is_trivial(),
            }))
            .with_dot(i.to_dot("intersection")))
        }
        GroupCmd::Malnormal { sub, ambient } => {
            let gens = words(&sub.sub)?;
            let amb = match ambient {
                Some(a) => Some(words(a)?),
                None => None,
            };
            let rank = infer_rank(sub.rank, &[&gens, amb.as_deref().unwrap_or(&[])])?;
            let h = SubgroupGraph::stallings(rank, &gens);
            let g = match &amb {
                Some(a) => SubgroupGraph::stallings(rank, a),
                None => SubgroupGraph::full(rank),
            };
            let verdict = h.malnormal_in(&g)?;
            Ok(Outcome::json(json!({
                "subgroup": h.basis(),
                "ambient": g.basis(),
                "verdict": to_value(&verdict),
            }))
            .with_dot(h.to_dot("H")))
        }
    }
}

fn tree_instance(path: &Path) -> Result<TreeInstance, Failure> {
    mtree::parse_tree_json(&read(path)?).map_err(|e| at(path)(e.to_string()))
}

fn tree(cmd: &TreeCmd) -> Result<Outcome, Failure> {
    match cmd {
        TreeCmd::Check { file } => {
            let inst = tree_instance(file)?;
            let covering = match &inst.family {
                Some(f) => Some(to_value(&mtree::check_transverse_covering(f)?)),
                None => None,
            };
            Ok(Outcome::json(json!({
                "vertices": inst.tree.vertex_count(),
                "edges": inst.tree.edge_count(),
                "total_length": inst.tree.total_length(),
                "four_point": mtree::check_four_point(&inst.tree)?,
                "covering": covering,
            }))
            .with_dot(inst.tree.to_dot()))
        }
        TreeCmd::Skeleton { file } => {
            let inst = tree_instance(file)?;
            let f = inst.family.as_ref().ok_or_else(|| at(file)("no \"family\" given".into()))?;
            let s = mtree::skeleton(f)?;
            let as_tree = s.as_metric_tree()?;
            Ok(Outcome::json(json!({
                "skeleton": to_value(&s),
                "v0_count": s.v0.len(),
                "v1_count": s.v1.len(),
                "edge_count": s.edges.len(),
                "is_tree": s.is_tree(),
                "four_point": mtree::check_four_point(&as_tree)?,
            }))
            .with_dot(s.to_dot()))
        }
        TreeCmd::Collapse { file, kill } => {
            let inst = tree_instance(file)?;
            let f = inst.family.as_ref().ok_or_else(|| at(file)("no \"family\" given".into()))?;
            let kill = kill.clone().unwrap_or_else(|| inst.kill.clone());
            let (target, map) = mtree::collapse(f, &kill)?;
            let alignment = map.check_alignment(&target);
            Ok(Outcome::json(json!({
                "kill": kill,
                "target": to_value(&target),
                "map": to_value(&map),
                "alignment": to_value(&alignment),
                "four_point": mtree::check_four_point(&target)?,
            }))
            .with_dot(target.to_dot()))
        }
    }
}

fn system(path: &Path) -> Result<IsometrySystem, Failure> {
    isosys::parse_system_json(&read(path)?).map_err(|e| at(path)(e.to_string()))
}

fn system_basis(s: &IsometrySystem) -> Arc<ScalarBasis> {
    s.maps
        .iter()
        .map(|m| m.t.basis().clone())
        .chain(s.d.components.iter().flat_map(|c| [c.lo.basis().clone(), c.hi.basis().clone()]))
        .max_by_key(|b| b.dim())
        .unwrap_or_else(ScalarBasis::rational)
}

fn machine_report(out: &isosys::MachineOutcome) -> Value {
    json!({
        "status": out.status,
        "steps": out.steps,
        "erased": out.erased,
        "log": out.log,
        "system": isosys::system_to_json(&out.system),
    })
}

fn isosys_cmd(cmd: &IsosysCmd, opts: &Opts, exec: Exec) -> Result<Outcome, Failure> {
    let (steps, budget) = (opts.max_steps as usize, opts.orbit_budget as usize);
    match cmd {
        IsosysCmd::Profile { file } => {
            let s = system(file)?;
            let p = s.multiplicity_profile()?;
            Ok(Outcome::json(json!({ "profile": to_value(&p), "pure": s.is_pure()? })))
        }
        IsosysCmd::Run { file } => {
            let s = system(file)?;
            let out = s.rips_run(steps)?;
            let class = s.classify(steps, budget)?;
            let exhausted = out.status == MachineStatus::BudgetExceeded;
            Ok(Outcome {
                result: json!({ "machine": machine_report(&out), "classification": to_value(&class) }),
                exhausted,
                ..Default::default()
            })
        }
        IsosysCmd::Orbit { file, x } => {
            let s = system(file)?;
            let x = Scalar::parse(x, &system_basis(&s))?;
            let o = s.orbit(&x, budget)?;
            Ok(Outcome::json(json!({ "orbit": to_value(&o), "size": o.points.len() })))
        }
        IsosysCmd::Classify { file } => {
            let s = system(file)?;
            let class = s.classify(steps, budget)?;
            let imanishi = s.imanishi_components_with(budget, exec).ok();
            let exhausted = class.machine == MachineStatus::BudgetExceeded;
            Ok(Outcome {
                result: json!({ "classification": to_value(&class), "imanishi": imanishi.map(|r| to_value(&r)) }),
                exhausted,
                ..Default::default()
            })
        }
        IsosysCmd::Leafspace { file } => {
            let s = system(file)?;
            let l = s.leaf_space_graph_with(budget, exec)?;
            Ok(Outcome::json(json!({ "leaf_space": to_value(&l) })).with_dot(l.to_dot()))
        }
    }
}

fn gog_graph(path: &Path) -> Result<gog::GraphOfGroups, Failure> {
    gog::parse_gog_json(&read(path)?).map_err(|e| at(path)(e.to_string()))
}

/// Negative verdicts of the fold calculus, reported rather than treated as failures.
fn gog_verdict(e: &GogError) -> Option<Value> {
    match e {
        GogError::StarViolation { edge, witness, detail } => {
            Some(json!({ "verdict": "STAR_VIOLATION", "edge": edge, "witness": witness, "detail": detail }))
        }
        GogError::NotRealizable(detail) => Some(json!({ "verdict": "NOT_REALIZABLE", "detail": detail })),
        GogError::MonotonicityViolation { level, next, monitor, detail, witness } => Some(json!({
            "verdict": "MONOTONICITY_VIOLATION",
            "level": level,
            "next": next,
            "monitor": monitor,
            "detail": detail,
            "witness": witness,
        })),
        _ => None,
    }
}

fn gog_cmd(cmd: &GogCmd, opts: &Opts) -> Result<Outcome, Failure> {
    match cmd {
        GogCmd::Validate { file } => {
            let g = gog_graph(file)?;
            Ok(Outcome::json(json!({ "validation": to_value(&g.validate()) })).with_dot(g.to_dot()))
        }
        GogCmd::Monitor { file } => {
            let g = gog_graph(file)?;
            Ok(Outcome::json(json!({
                "valid": g.validate().valid,
                "betti": g.betti(),
                "monitor": to_value(&g.monitor()),
            }))
            .with_dot(g.to_dot()))
        }
        GogCmd::Fold { file } => {
            let spec = gog::parse_morphism_json(&read(file)?).map_err(|e| at(file)(e.to_string()))?;
            match gog::fold_decompose(&spec, opts.max_steps as usize) {
                Ok(d) => {
                    let moves: Vec<gog::FoldMove> = d.moves.iter().map(|m| m.mv.clone()).collect();
                    let end = gog::replay(&spec.source, &moves)?;
                    Ok(Outcome::json(json!({
                        "verdict": if d.isomorphic && d.monotone { "DECOMPOSED" } else { "MISMATCH" },
                        "decomposition": to_value(&d),
                        "result": gog::gog_to_json(&end),
                    }))
                    .with_dot(end.to_dot()))
                }
                Err(e) => gog_verdict(&e).map(Outcome::json).ok_or_else(|| e.into()),
            }
        }
        GogCmd::Scott { file } => {
            let (levels, maps) = gog::parse_pipeline_json(&read(file)?).map_err(|e| at(file)(e.to_string()))?;
            match gog::scott_pipeline(&levels, &maps) {
                Ok(t) => {
                    let csv = t.to_csv();
                    Ok(Outcome { result: json!({ "verdict": "MONOTONE", "trace": to_value(&t) }), csv: Some(csv), ..Default::default() })
                }
                Err(e) => {
                    let v = gog_verdict(&e).ok_or_else(|| Failure::from(e.clone()))?;
                    let csv = format!(
                        "violation,level,next,monitor,witness\nMONOTONICITY_VIOLATION,{},{},{},{}\n",
                        v["level"], v["next"], v["monitor"].as_str().unwrap_or(""), v["witness"].as_str().unwrap_or("")
                    );
                    Ok(Outcome { result: v, csv: Some(csv), ..Default::default() })
                }
            }
        }
    }
}

fn chain_word(s: &str) -> Result<ReducedWord, Failure> {
    let w = word(s)?;
    if w.max_generator() > cex::AMBIENT_RANK {
        return Err(Failure::Input(format!("{s} uses a generator outside F(a,b,c)")));
    }
    Ok(w)
}

fn cex_cmd(cmd: &CexCmd, exec: Exec) -> Result<Outcome, Failure> {
    let depth = |k: usize| -> Result<usize, Failure> {
        if k > cex::MAX_DEPTH {
            Err(Failure::Budget(format!("depth {k} exceeds the chain limit {}", cex::MAX_DEPTH)))
        } else {
            Ok(k)
        }
    };
    match cmd {
        CexCmd::Chain { n } => {
            let chain = Chain::build(depth(*n)?);
            Ok(Outcome::json(json!({ "seed": chain.seed, "levels": to_value(&chain.levels) })))
        }
        CexCmd::Malnormal { i } => {
            if *i == 0 {
                return Err(Failure::Input("level must be at least 1".into()));
            }
            let chain = Chain::build(depth(*i)?);
            let step = cex::verify_malnormal_step(&chain, *i)?;
            let control = if *i >= 2 { Some(to_value(&cex::malnormal_control(&chain, *i)?)) } else { None };
            Ok(Outcome::json(json!({ "step": to_value(&step), "control": control })))
        }
        CexCmd::Intersection { n, l } => {
            let r = cex::verify_intersection(depth(*n)?, *l, exec);
            Ok(Outcome::json(json!({ "intersection": to_value(&r) })))
        }
        CexCmd::Gamma { k } => {
            let mut chain = Chain::build(1);
            let g = cex::build_gamma(&mut chain, depth(*k)?);
            Ok(Outcome::json(json!({ "k": g.k, "graph": gog::gog_to_json(&g.graph), "lengths": g.lengths })).with_dot(g.to_dot()))
        }
        CexCmd::Spine { pos, k } => {
            let k = pos.or(*k).ok_or_else(|| Failure::Input("spine needs k".into()))?;
            Ok(Outcome::json(json!({ "spine": to_value(&cex::spine_metrics(depth(k)?)) })))
        }
        CexCmd::Extent { g, k } => {
            let g = chain_word(g)?;
            let mut chain = Chain::build(1);
            match cex::fixed_extent(&mut chain, &g, depth(*k)?) {
                Ok(x) => Ok(Outcome::json(json!({ "g": g, "k": k, "in_c": false, "extent": x }))),
                Err(CexError::InC(_)) => Ok(Outcome::json(json!({ "g": g, "k": k, "in_c": true, "extent": null }))),
                Err(e) => Err(e.into()),
            }
        }
        CexCmd::Lengths { g, g_prime, k_max } => {
            let (g, gp) = (chain_word(g)?, chain_word(g_prime)?);
            let mut chain = Chain::build(1);
            let seq = cex::length_monotone(&mut chain, &g, &gp, depth(*k_max)?)?;
            let mut csv = String::from("k,length\n");
            for (k, l) in seq.lengths.iter().enumerate() {
                csv.push_str(&format!("{k},{l}\n"));
            }
            Ok(Outcome { result: json!({ "lengths": to_value(&seq) }), csv: Some(csv), ..Default::default() })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome, Failure> {
    let exec = Exec::default();
    match &cli.command {
        Command::Group(c) => group(c),
        Command::Tree(c) => tree(c),
        Command::Isosys(c) => isosys_cmd(c, &cli.opts, exec),
        Command::Gog(c) => gog_cmd(c, &cli.opts),
        Command::Cex(c) => cex_cmd(c, exec),
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let format = if cli.opts.dot {
        Format::Dot
    } else if cli.opts.csv {
        Format::Csv
    } else {
        Format::Json
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let budgets = json!({
        "orbit_budget": cli.opts.orbit_budget,
        "max_steps": cli.opts.max_steps,
        "max_len": cli.opts.max_len,
        "seed": cli.opts.seed,
        "precision_bits": scalar::precision_cap(),
    });
    let started = Instant::now();
    let outcome = dispatch(&cli).and_then(|o| {
        let missing = |what: &str| Failure::Input(format!("this command has no {what} output"));
        match format {
            Format::Dot if o.dot.is_none() => Err(missing("DOT")),
            Format::Csv if o.csv.is_none() => Err(missing("CSV")),
            _ => Ok(o),
        }
    });
    match outcome {
        Ok(o) => {
            let code = if o.exhausted { 2 } else { 0 };
            match format {
                Format::Dot => print!("{}", o.dot.unwrap_or_default()),
                Format::Csv => print!("{}", o.csv.unwrap_or_default()),
                Format::Json => {
                    let mut report = json!({
                        "command": argv,
                        "budgets": budgets,
                        "result": scalars_to_strings(o.result),
                    });
                    if o.exhausted {
                        report["budget_exhausted"] = json!(true);
                    }
                    if cli.opts.timing {
                        report["timing_ms"] = json!(started.elapsed().as_secs_f64() * 1e3);
                    }
                    print!("{}", pretty(&report));
                }
            }
            ExitCode::from(code)
        }
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Input(m) => ("input", m),
                Failure::Budget(m) => ("budget", m),
            };
            eprint!("{}", pretty(&json!({ "command": argv, "budgets": budgets, "error": { "kind": kind, "message": msg } })));
            ExitCode::from(f.code())
        }
    }
}
