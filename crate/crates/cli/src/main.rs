use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use memplan_core::analysis::{compute_bounds, compute_levels, enforce_early_weight_updates};
use memplan_core::graph::{generate_graph, load_graph, save_graph, GeneratorKind, GeneratorSpec, Graph};
use memplan_core::milp::{encode_addresses, encode_joint, encode_scheduling, write_lp, EncodeOptions};
use memplan_core::oracle::{enumerate_min_packing, enumerate_min_peak, OracleBudget, PackItem};
use memplan_core::pipeline::{plan_graph, PipelineError, PlanMode, PlanOptions, PlanReport};
use memplan_core::placement::{fragmentation, run_baseline, AllocPolicy};
use memplan_core::plan::{build_timeline, load_plan, save_plan, validate_plan, MemoryPlan};
use memplan_core::solve::{solve_placement_exact, solve_schedule_exact, Schedule, SolveConfig, SolveError, SolveMode};

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;

#[derive(Parser)]
#[command(name = "memplan", version, about = "Static memory planning for operator dataflow graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print levels, ASAP/ALAP spans and lifetime windows.
    Analyze {
        graph: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Find a minimum-peak execution order.
    Schedule {
        graph: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Assign addresses for the lifetimes of a fixed order.
    Place {
        graph: PathBuf,
        /// Use the program order instead of the optimal order.
        #[arg(long)]
        program_order: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run the whole pipeline and write a plan file.
    Plan {
        graph: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check a plan against its graph.
    Validate {
        plan: PathBuf,
        graph: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a free-list allocator on the program order.
    Baseline {
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "first-fit")]
        policy: PolicyArg,
        #[command(flatten)]
        common: Common,
    },
    /// Write one of the integer programs in LP format.
    ExportLp {
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "schedule")]
        phase: PhaseArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic graph.
    Gen {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        size: u64,
        #[arg(long, default_value_t = 12)]
        weight_size: u64,
        #[arg(long, default_value_t = 0)]
        jitter: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Graph size, variable counts and the program-order resident set.
    Stats {
        graph: PathBuf,
        /// Report this plan's timeline instead of the program order's.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Seconds per solve phase.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    /// Solve order and addresses together.
    #[arg(long, conflicts_with = "split")]
    joint: bool,
    /// Solve order first, then addresses (default).
    #[arg(long)]
    split: bool,
    #[arg(long)]
    no_control_edges: bool,
    #[arg(long)]
    no_preplacement: bool,
    #[arg(long)]
    no_pruning: bool,
    /// External solver command; `{lp}` and `{sol}` are replaced by file paths.
    #[arg(long)]
    solver_cmd: Option<String>,
    #[arg(long, value_enum, default_value = "auto")]
    engine: EngineArg,
    /// Round every tensor size up to this power of two.
    #[arg(long)]
    align: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-check results against brute force when the instance is small.
    #[arg(long)]
    oracle: bool,
    /// Also write a machine-readable report here.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    FirstFit,
    BestFit,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Schedule,
    Addresses,
    Joint,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Chain,
    ForkJoin,
    TrainingLike,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Auto,
    Internal,
    External,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self { code: EXIT_INPUT, message: message.to_string() }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        let code = if matches!(e, SolveError::Timeout(_)) { EXIT_TIMEOUT } else { EXIT_SOLVER };
        Self { code, message: e.to_string() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Solve(s) => s.into(),
            PipelineError::Invalid(report) => {
                let mut message = "plan failed validation:".to_string();
                for v in &report.violations {
                    let _ = write!(message, "\n  {}: {}", v.kind.tag(), v.message);
                }
                Self::input(message)
            }
            PipelineError::Graph(_) => Self::input(e),
            other => Self { code: EXIT_SOLVER, message: other.to_string() },
        }
    }
}

type CmdResult = Result<u8, Failure>;

impl Common {
    fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            mode: match self.engine {
                EngineArg::Auto => SolveMode::Auto,
                EngineArg::Internal => SolveMode::Internal,
                EngineArg::External => SolveMode::External,
            },
            time_limit: self.time_limit,
            solver_cmd: self.solver_cmd.clone(),
            ..SolveConfig::default()
        }
    }

    fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            mode: if self.joint { PlanMode::Joint } else { PlanMode::Split },
            pruning: !self.no_pruning,
            control_edges: !self.no_control_edges,
            preplacement: !self.no_preplacement,
            align: self.align,
            solve: self.solve_config(),
        }
    }

    fn encode_options(&self) -> EncodeOptions {
        EncodeOptions { pruning: !self.no_pruning }
    }

    /// The graph as the planner sees it before solving.
    fn prepared(&self, graph: Graph) -> Result<Graph, Failure> {
        let graph = match self.align {
            Some(a) => graph.aligned(a).map_err(Failure::input)?,
            None => graph,
        };
        Ok(if self.no_control_edges { graph } else { enforce_early_weight_updates(&graph).graph })
    }

    fn write_json(&self, value: &serde_json::Value) -> Result<(), Failure> {
        if let Some(path) = &self.json_out {
            let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
            text.push('\n');
            write_file(path, text.as_bytes())?;
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Result<Graph, Failure> {
    load_graph(&read_file(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn emit(output: &Option<PathBuf>, bytes: &[u8]) -> Result<(), Failure> {
    match output {
        Some(path) => write_file(path, bytes),
        None => {
            print!("{}", String::from_utf8_lossy(bytes));
            Ok(())
        }
    }
}

fn names(graph: &Graph, order: &[memplan_core::graph::NodeIx]) -> Vec<String> {
    order.iter().map(|v| graph.node(*v).id.clone()).collect()
}

fn cmd_analyze(path: &Path, common: &Common) -> CmdResult {
    let graph = common.prepared(read_graph(path)?)?;
    let levels = compute_levels(&graph);
    let bounds = compute_bounds(&graph);
    println!("{:<16} {:>4} {:>4} {:>5} {:>5}", "node", "fwd", "bwd", "asap", "alap");
    for v in graph.node_ids() {
        println!(
            "{:<16} {:>4} {:>4} {:>5} {:>5}",
            graph.node(v).id,
            levels.fwd(v),
            levels.bwd(v),
            bounds.asap[v.0],
            bounds.alap[v.0]
        );
    }
    println!();
    println!("{:<16} {:>6} {:>9} {:>9}", "edge", "size", "mul", "pres");
    let window = |i: memplan_core::analysis::Interval| {
        if i.is_empty() {
            "-".to_string()
        } else {
            format!("[{},{}]", i.lo, i.hi)
        }
    };
    for e in graph.edge_ids() {
        println!(
            "{:<16} {:>6} {:>9} {:>9}",
            graph.edge(e).id,
            graph.size(e),
            window(bounds.mul(e)),
            window(bounds.pres(e))
        );
    }
    common.write_json(&json!({
        "nodes": graph.node_ids().map(|v| json!({
            "id": graph.node(v).id, "fwd": levels.fwd(v), "bwd": levels.bwd(v),
            "asap": bounds.asap[v.0], "alap": bounds.alap[v.0],
        })).collect::<Vec<_>>(),
        "edges": graph.edge_ids().map(|e| json!({
            "id": graph.edge(e).id, "size": graph.size(e),
            "mul": [bounds.mul(e).lo, bounds.mul(e).hi], "pres": [bounds.pres(e).lo, bounds.pres(e).hi],
        })).collect::<Vec<_>>(),
    }))?;
    Ok(0)
}

fn oracle_order_check(graph: &Graph, peak: u64) -> Option<(u64, bool)> {
    let best = enumerate_min_peak(graph, &OracleBudget::default()).ok()?;
    Some((best.min_peak, best.min_peak == peak))
}

fn cmd_schedule(path: &Path, common: &Common) -> CmdResult {
    let graph = common.prepared(read_graph(path)?)?;
    let result = solve_schedule_exact(&graph, &common.solve_config())?;
    let peak = result.outcome.objective as u64;
    println!("order:   {}", names(&graph, &result.order).join(" "));
    println!("peak_rs: {peak}");
    println!("status:  {}", result.outcome.status.label());
    let mut code = if result.outcome.status.is_optimal() { 0 } else { EXIT_TIMEOUT };
    let mut oracle = serde_json::Value::Null;
    if common.oracle {
        match oracle_order_check(&graph, peak) {
            Some((min, agree)) => {
                println!("oracle:  {min} ({})", if agree { "agrees" } else { "DISAGREES" });
                if !agree {
                    code = EXIT_SOLVER;
                }
                oracle = json!(min);
            }
            None => println!("oracle:  skipped (beyond budget)"),
        }
    }
    common.write_json(&json!({
        "order": names(&graph, &result.order),
        "peak_rs": peak,
        "status": result.outcome.status,
        "seconds": result.outcome.wall_time,
        "oracle_min_peak": oracle,
    }))?;
    Ok(code)
}

fn cmd_place(path: &Path, program_order: bool, common: &Common) -> CmdResult {
    let graph = common.prepared(read_graph(path)?)?;
    let config = common.solve_config();
    let schedule = if program_order {
        Schedule::from_order(&graph, &graph.topological_order())
    } else {
        solve_schedule_exact(&graph, &config)?.schedule
    };
    let problem = schedule.placement_problem(&graph);
    let result = solve_placement_exact(&problem, &config)?;
    let rs = problem.resident_lower_bound();
    let frag = fragmentation(result.peak, rs).map_err(|e| Failure { code: EXIT_SOLVER, message: e.to_string() })?;
    println!("{:<16} {:>8} {:>6} {:>9}", "tensor", "offset", "size", "live");
    for t in &problem.tensors {
        println!("{:<16} {:>8} {:>6} {:>9}", t.id, result.addresses[&t.id], t.size, format!("[{},{}]", t.live.lo, t.live.hi));
    }
    println!("peak_mem:      {}", result.peak);
    println!("peak_rs:       {rs}");
    println!("fragmentation: {:.4}", frag.as_f64());
    println!("status:        {}", result.outcome.status.label());
    let mut code = if result.outcome.status.is_optimal() { 0 } else { EXIT_TIMEOUT };
    let mut oracle = serde_json::Value::Null;
    if common.oracle {
        let items: Vec<PackItem> =
            problem.tensors.iter().map(|t| PackItem { first: t.live.lo, last: t.live.hi, size: t.size }).collect();
        match enumerate_min_packing(&items, &OracleBudget::default()) {
            Ok(best) => {
                let agree = best.min_peak == result.peak;
                println!("oracle:        {} ({})", best.min_peak, if agree { "agrees" } else { "DISAGREES" });
                if !agree {
                    code = EXIT_SOLVER;
                }
                oracle = json!(best.min_peak);
            }
            Err(_) => println!("oracle:        skipped (beyond budget)"),
        }
    }
    common.write_json(&json!({
        "addresses": result.addresses,
        "peak_mem": result.peak,
        "peak_rs": rs,
        "fragmentation": frag.as_f64(),
        "status": result.outcome.status,
        "oracle_min_peak": oracle,
    }))?;
    Ok(code)
}

fn print_plan_summary(report: &PlanReport) {
    let p = &report.plan;
    let prov = &p.provenance;
    println!("sequence:         {}", p.sequence.nodes().join(" "));
    println!("peak_rs:          {}", p.timeline.peak_rs);
    println!("peak_mem:         {}", p.peak_mem);
    println!("fragmentation:    {:.4}", p.fragmentation());
    println!("program order rs: {}", report.program_order_peak_rs);
    println!("savings:          {:.1}%", report.savings_pct());
    println!("control edges:    {}", p.added_control_edges.len());
    println!(
        "schedule phase:   {} {} {:.3}s",
        prov.schedule_engine, prov.schedule_status, prov.schedule_seconds
    );
    println!(
        "placement phase:  {} {} {:.3}s",
        prov.placement_engine, prov.placement_status, prov.placement_seconds
    );
    if prov.timed_out {
        println!("WARNING: time limit reached; this is the best plan found");
    }
}

fn cmd_plan(path: &Path, output: &Option<PathBuf>, common: &Common) -> CmdResult {
    let graph = read_graph(path)?;
    let report = plan_graph(&graph, &common.plan_options())?;
    let out = output.clone().unwrap_or_else(|| path.with_extension("plan.json"));
    write_file(&out, &save_plan(&report.plan))?;
    print_plan_summary(&report);
    println!("plan written to   {}", out.display());
    let mut code = if report.plan.provenance.timed_out { EXIT_TIMEOUT } else { 0 };
    let mut oracle = serde_json::Value::Null;
    if common.oracle {
        match oracle_order_check(&report.graph, report.plan.timeline.peak_rs) {
            Some((min, agree)) => {
                println!("oracle min peak:  {min} ({})", if agree { "agrees" } else { "DISAGREES" });
                if !agree && code == 0 {
                    code = EXIT_SOLVER;
                }
                oracle = json!(min);
            }
            None => println!("oracle min peak:  skipped (beyond budget)"),
        }
    }
    common.write_json(&json!({
        "plan": report.plan,
        "program_order_peak_rs": report.program_order_peak_rs,
        "savings_pct": report.savings_pct(),
        "fragmentation": report.plan.fragmentation(),
        "oracle_min_peak": oracle,
    }))?;
    Ok(code)
}

fn cmd_validate(plan_path: &Path, graph_path: &Path, common: &Common) -> CmdResult {
    let plan: MemoryPlan =
        load_plan(&read_file(plan_path)?).map_err(|e| Failure::input(format!("{}: {e}", plan_path.display())))?;
    let graph = read_graph(graph_path)?;
    let report = validate_plan(&plan, &graph);
    if report.is_valid() {
        println!("valid: 0 violations");
    } else {
        println!("{:<18} message", "tag");
        for v in &report.violations {
            println!("{:<18} {}", v.kind.tag(), v.message);
        }
        println!("invalid: {} violation(s)", report.violations.len());
    }
    common.write_json(&serde_json::to_value(&report).expect("report serializes"))?;
    Ok(if report.is_valid() { 0 } else { EXIT_INPUT })
}

fn cmd_baseline(path: &Path, policy: PolicyArg, common: &Common) -> CmdResult {
    let graph = read_graph(path)?;
    let graph = match common.align {
        Some(a) => graph.aligned(a).map_err(Failure::input)?,
        None => graph,
    };
    let policy = match policy {
        PolicyArg::FirstFit => AllocPolicy::FirstFit,
        PolicyArg::BestFit => AllocPolicy::BestFit,
    };
    let r = run_baseline(&graph, &graph.topological_order(), policy).map_err(Failure::input)?;
    println!("policy:        {}", serde_json::to_value(policy).expect("policy serializes").as_str().unwrap_or(""));
    println!("mr_peak:       {}", r.mr_peak);
    println!("rs_at_peak:    {}", r.rs_at_peak);
    println!("peak_timestep: {}", r.peak_timestep);
    println!("fragmentation: {:.4}", r.fragmentation.as_f64());
    common.write_json(&json!({
        "policy": r.policy,
        "mr_peak": r.mr_peak,
        "rs_at_peak": r.rs_at_peak,
        "peak_timestep": r.peak_timestep,
        "fragmentation": r.fragmentation.as_f64(),
        "addresses": r.addresses,
    }))?;
    Ok(0)
}

fn cmd_export_lp(path: &Path, phase: PhaseArg, output: &Option<PathBuf>, common: &Common) -> CmdResult {
    let graph = common.prepared(read_graph(path)?)?;
    let opts = common.encode_options();
    let model = match phase {
        PhaseArg::Schedule => encode_scheduling(&graph, &compute_bounds(&graph), opts),
        PhaseArg::Joint => encode_joint(&graph, &compute_bounds(&graph), opts),
        PhaseArg::Addresses => {
            // Lifetimes come from the optimal order, as in the split pipeline.
            let schedule = solve_schedule_exact(&graph, &common.solve_config())?.schedule;
            encode_addresses(&schedule.placement_problem(&graph), opts)
        }
    }
    .map_err(Failure::input)?;
    emit(output, &write_lp(&model).map_err(Failure::input)?)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    kind: KindArg,
    layers: usize,
    size: u64,
    weight_size: u64,
    jitter: u64,
    output: &Option<PathBuf>,
    common: &Common,
) -> CmdResult {
    let kind = match kind {
        KindArg::Chain => GeneratorKind::Chain,
        KindArg::ForkJoin => GeneratorKind::ForkJoin,
        KindArg::TrainingLike => GeneratorKind::TrainingLike,
        KindArg::Random => GeneratorKind::Random,
    };
    let spec = GeneratorSpec::new(kind, layers).with_sizes(size, weight_size, jitter).with_seed(common.seed);
    let graph = generate_graph(&spec).map_err(Failure::input)?;
    emit(output, &save_graph(&graph))?;
    Ok(0)
}

fn cmd_stats(path: &Path, plan_path: &Option<PathBuf>, common: &Common) -> CmdResult {
    let graph = read_graph(path)?;
    let timeline = match plan_path {
        Some(p) => load_plan(&read_file(p)?).map_err(Failure::input)?.timeline,
        None => {
            let schedule = Schedule::from_order(&graph, &graph.topological_order());
            build_timeline(&schedule.assignment(&graph), &graph)
        }
    };
    let (n, e) = (graph.num_nodes(), graph.num_edges());
    println!("nodes:           {n}");
    println!("edges:           {e}");
    println!("total bytes:     {}", graph.total_size());
    println!("raw binaries:    {}", 2 * n * e);
    println!("peak_rs:         {} at t{}", timeline.peak_rs, timeline.peak_timestep);
    println!("{:>4} {:>10}  live", "t", "bytes");
    for s in &timeline.steps {
        println!("{:>4} {:>10}  {}", s.t, s.bytes, s.live.join(" "));
    }
    common.write_json(&json!({
        "nodes": n,
        "edges": e,
        "total_bytes": graph.total_size(),
        "raw_binaries": 2 * n * e,
        "timeline": timeline,
    }))?;
    Ok(0)
}

fn run(cli: Cli) -> CmdResult {
    match &cli.command {
        Command::Analyze { graph, common } => cmd_analyze(graph, common),
        Command::Schedule { graph, common } => cmd_schedule(graph, common),
        Command::Place { graph, program_order, common } => cmd_place(graph, *program_order, common),
        Command::Plan { graph, output, common } => cmd_plan(graph, output, common),
        Command::Validate { plan, graph, common } => cmd_validate(plan, graph, common),
        Command::Baseline { graph, policy, common } => cmd_baseline(graph, *policy, common),
        Command::ExportLp { graph, phase, output, common } => cmd_export_lp(graph, *phase, output, common),
        Command::Gen { kind, layers, size, weight_size, jitter, output, common } => {
            cmd_gen(*kind, *layers, *size, *weight_size, *jitter, output, common)
        }
        Command::Stats { graph, plan, common } => cmd_stats(graph, plan, common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
