//! Command-line front end: `tree build`, `hedge`, `verify`, `backtest`, `inspect`.
//!
//! Every command reads a declarative JSON [`RunConfig`]; flags override the
//! corresponding config keys. Exit codes: 0 ok, 1 verification failure,
//! 2 config or parameter error, 3 degenerate market, 4 size bound.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backtest::{
    compare_report, pretty_report, run_strategy, sample_paths, Evaluation, StrategyKind,
};
use crate::error::{Error, Result};
use crate::fmt::{g17, to_json_string};
use crate::hedging::{hedging_error, HedgePlan};
use crate::opportunity::{compute_opportunity, measures, mvt_process, sharpe_ratio};
use crate::oracle::MAX_ORACLE_LEAVES;
use crate::tree::{
    attach_claim, build_binomial, build_iid_multinomial, build_random, build_regime_switching,
    Claim, ClaimSpec, Increment, RandomTreeSpec, ScenarioTree, StepMode,
};
use crate::verify::{oracle_checks, structural_checks, EngineOverride, ORACLE_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_TOO_LARGE: i32 = 4;

/// Builder name plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Binomial {
        s0: Vec<f64>,
        up: f64,
        down: f64,
        p_up: f64,
        periods: usize,
    },
    Iid {
        s0: Vec<f64>,
        increments: Vec<Increment>,
        periods: usize,
        #[serde(default)]
        mode: StepMode,
    },
    RegimeSwitching {
        s0: Vec<f64>,
        regimes: Vec<Vec<Increment>>,
        transition: Vec<Vec<f64>>,
        #[serde(default)]
        initial_regime: usize,
        periods: usize,
        #[serde(default)]
        mode: StepMode,
    },
    Random(RandomTreeSpec),
    /// A tree JSON document, optionally carrying its claim.
    File {
        path: PathBuf,
    },
}

/// Endowment as written in config files: a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum V0Spec {
    Value(f64),
    Keyword(V0Keyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum V0Keyword {
    Auto,
}

impl V0Spec {
    fn parse(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(V0Spec::Keyword(V0Keyword::Auto));
        }
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(V0Spec::Value)
            .ok_or_else(|| Error::bad("v0", format!("expected a number or `auto`, got `{s}`")))
    }

    fn resolve(self, plan: &HedgePlan) -> f64 {
        match self {
            V0Spec::Value(x) => x,
            V0Spec::Keyword(V0Keyword::Auto) => plan.v0(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub claim: Option<ClaimSpec>,
    #[serde(default)]
    pub v0: Option<V0Spec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: Option<usize>,
    #[serde(default)]
    pub exact: Option<bool>,
    #[serde(default)]
    pub strategies: Option<Vec<StrategyKind>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Summary JSON of an earlier `hedge` run to verify instead of fresh engine values.
    #[serde(default)]
    pub engine_summary: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads a config and makes every relative path absolute against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ModelSpec::File { path } = &mut cfg.model {
            fix(path);
        }
        if let Some(p) = cfg.out.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.engine_summary.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn build(&self) -> Result<(ScenarioTree, Option<Claim>)> {
        let (tree, file_claim) = match &self.model {
            ModelSpec::Binomial {
                s0,
                up,
                down,
                p_up,
                periods,
            } => (build_binomial(s0, *up, *down, *p_up, *periods)?, None),
            ModelSpec::Iid {
                s0,
                increments,
                periods,
                mode,
            } => (
                build_iid_multinomial(s0, increments, *periods, *mode)?,
                None,
            ),
            ModelSpec::RegimeSwitching {
                s0,
                regimes,
                transition,
                initial_regime,
                periods,
                mode,
            } => (
                build_regime_switching(s0, regimes, transition, *initial_regime, *periods, *mode)?,
                None,
            ),
            ModelSpec::Random(spec) => (build_random(spec)?, None),
            ModelSpec::File { path } => ScenarioTree::from_json(&std::fs::read_to_string(path)?)?,
        };
        let claim = match &self.claim {
            Some(spec) => Some(attach_claim(&tree, spec)?),
            None => file_claim,
        };
        Ok((tree, claim))
    }
}

#[derive(Debug, Parser)]
#[command(name = "mvhedge", about = "Mean-variance hedging on scenario trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Evaluate by exact expectation over all leaves instead of sampling.
    #[arg(long)]
    pub exact: bool,
    /// Initial endowment, a number or `auto`.
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Option<String>,
    /// Relative tolerance for verification.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scenario tree commands.
    Tree {
        #[command(subcommand)]
        action: TreeAction,
    },
    /// Compute the optimal hedge and its expected squared error.
    Hedge(CommonArgs),
    /// Cross-check the engine against the brute-force oracles.
    Verify(CommonArgs),
    /// Compare hedging strategies by simulation or exact expectation.
    Backtest(CommonArgs),
    /// Dump one per-node field as CSV on standard output.
    Inspect {
        /// One of L, a, V, xi, sharpe, mvt, qstar, opportunity.
        field: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum TreeAction {
    /// Build a tree from the configured model and write it as JSON.
    Build(CommonArgs),
}

/// Configuration after flags are merged and paths resolved.
struct Resolved {
    cfg: RunConfig,
    out: PathBuf,
    v0: V0Spec,
    tol: f64,
    seed: u64,
    paths: usize,
    exact: bool,
}

fn resolve(args: &CommonArgs) -> Result<Resolved> {
    let cfg = RunConfig::load(&args.config)?;
    let v0 = match &args.v0 {
        Some(s) => V0Spec::parse(s)?,
        None => cfg.v0.unwrap_or(V0Spec::Keyword(V0Keyword::Auto)),
    };
    let cwd = std::env::current_dir()?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .map(|p| if p.is_relative() { cwd.join(p) } else { p })
        .unwrap_or_else(|| cwd.clone());
    let tol = args.tol.or(cfg.tol).unwrap_or(ORACLE_TOL);
    if !(tol > 0.0) {
        return Err(Error::bad("tol", "must be positive"));
    }
    Ok(Resolved {
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        paths: args.paths.or(cfg.paths).unwrap_or(100_000),
        exact: args.exact || cfg.exact.unwrap_or(false),
        cfg,
        out,
        v0,
        tol,
    })
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::DegenerateStep { .. } | Error::Infeasible { .. } => EXIT_DEGENERATE,
        Error::TooLarge { .. } => EXIT_TOO_LARGE,
        _ => EXIT_CONFIG,
    }
}

fn require_claim(claim: Option<Claim>) -> Result<Claim> {
    claim.ok_or_else(|| Error::bad("claim", "no claim in config or tree file"))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Tree {
            action: TreeAction::Build(a),
        } => resolve(a).and_then(|r| cmd_tree_build(&r, stdout)),
        Command::Hedge(a) => resolve(a).and_then(|r| cmd_hedge(&r, stdout)),
        Command::Verify(a) => resolve(a).and_then(|r| cmd_verify(&r, stdout)),
        Command::Backtest(a) => resolve(a).and_then(|r| cmd_backtest(&r, stdout)),
        Command::Inspect { field, common } => {
            resolve(common).and_then(|r| cmd_inspect(&r, field, stdout))
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_tree_build(r: &Resolved, stdout: &mut dyn Write) -> Result<i32> {
    let (tree, claim) = r.cfg.build()?;
    let path = write_file(&r.out, "tree.json", &tree.to_json(claim.as_ref()))?;
    writeln!(
        stdout,
        "nodes={} leaves={} file={}",
        tree.len(),
        tree.num_leaves(),
        path.display()
    )?;
    Ok(EXIT_OK)
}

/// Summary JSON written by `hedge`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeSummary {
    pub v0: f64,
    #[serde(rename = "V0")]
    pub v0_opt: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub total_error: f64,
    pub endowment_term: f64,
    pub slice_error: Vec<f64>,
    pub negative_weight_nodes: usize,
}

pub fn hedge_nodes_csv(tree: &ScenarioTree, plan: &HedgePlan) -> String {
    let d = tree.num_assets();
    let mut out = String::from("id,time,V");
    for i in 0..d {
        write!(out, ",xi_{i}").unwrap();
    }
    out.push_str(",e\n");
    for n in 0..tree.len() {
        write!(out, "{},{},{}", n, tree.node(n).time, g17(plan.v[n])).unwrap();
        if tree.is_leaf(n) {
            out.push_str(&",".repeat(d + 1));
        } else {
            for x in plan.xi[n].iter() {
                write!(out, ",{}", g17(*x)).unwrap();
            }
            write!(out, ",{}", g17(plan.e[n])).unwrap();
        }
        out.push('\n');
    }
    out
}

fn cmd_hedge(r: &Resolved, stdout: &mut dyn Write) -> Result<i32> {
    let (tree, claim) = r.cfg.build()?;
    let claim = require_claim(claim)?;
    let surf = compute_opportunity(&tree)?;
    let ms = measures(&tree, &surf);
    let plan = HedgePlan::compute(&tree, &surf, &claim);
    let v0 = r.v0.resolve(&plan);
    let report = hedging_error(&tree, &surf, &plan, v0);
    let summary = HedgeSummary {
        v0,
        v0_opt: report.v0_opt,
        l0: report.l0,
        total_error: report.total_error,
        endowment_term: report.endowment_term,
        slice_error: report.slice_error.clone(),
        negative_weight_nodes: ms.negative_weight_nodes,
    };
    write_file(&r.out, "hedge_nodes.csv", &hedge_nodes_csv(&tree, &plan))?;
    let json = to_json_string(&summary)?;
    write_file(&r.out, "hedge_summary.json", &json)?;
    stdout.write_all(json.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_verify(r: &Resolved, stdout: &mut dyn Write) -> Result<i32> {
    let (tree, claim) = r.cfg.build()?;
    if tree.num_leaves() > MAX_ORACLE_LEAVES {
        return Err(Error::TooLarge {
            leaves: tree.num_leaves(),
            limit: MAX_ORACLE_LEAVES,
        });
    }
    let claim = require_claim(claim)?;
    let mut engine = EngineOverride::default();
    let mut v0_spec = r.v0;
    if let Some(path) = &r.cfg.engine_summary {
        let summary: HedgeSummary = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        engine = EngineOverride {
            l0: Some(summary.l0),
            v0_opt: Some(summary.v0_opt),
            total_error: Some(summary.total_error),
        };
        v0_spec = V0Spec::Value(summary.v0);
    }
    let surf = compute_opportunity(&tree)?;
    let ms = measures(&tree, &surf);
    let plan = HedgePlan::compute(&tree, &surf, &claim);
    let v0 = v0_spec.resolve(&plan);
    let mut checks = oracle_checks(&tree, &claim, &surf, &ms, &plan, v0, r.tol, engine)?;
    checks.extend(structural_checks(&tree, &surf, &ms, &plan)?);
    let failed = checks.iter().filter(|c| !c.pass()).count();
    for c in &checks {
        writeln!(stdout, "{c}")?;
    }
    writeln!(stdout, "SUMMARY checks={} failed={}", checks.len(), failed)?;
    Ok(if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn cmd_backtest(r: &Resolved, stdout: &mut dyn Write) -> Result<i32> {
    let (tree, claim) = r.cfg.build()?;
    let claim = require_claim(claim)?;
    let kinds = r
        .cfg
        .strategies
        .clone()
        .unwrap_or_else(|| vec![StrategyKind::Mvh, StrategyKind::PureXi, StrategyKind::Gkw]);
    if kinds.is_empty() {
        return Err(Error::bad("strategies", "need at least one strategy"));
    }
    if kinds.contains(&StrategyKind::Markowitz) && claim.constant_value().is_none() {
        return Err(Error::IncompatibleClaim {
            strategy: StrategyKind::Markowitz.name().into(),
        });
    }
    let surf = compute_opportunity(&tree)?;
    let plan = HedgePlan::compute(&tree, &surf, &claim);
    let v0 = r.v0.resolve(&plan);
    let paths = if r.exact {
        Vec::new()
    } else {
        sample_paths(&tree, r.paths, r.seed)?
    };
    let eval = if r.exact {
        Evaluation::Exact
    } else {
        Evaluation::Sampled(&paths)
    };
    let reports = kinds
        .iter()
        .map(|&k| run_strategy(&tree, &surf, &plan, &claim, k, v0, eval))
        .collect::<Result<Vec<_>>>()?;
    write_file(&r.out, "backtest.csv", &compare_report(&reports))?;
    write_file(
        &r.out,
        "backtest.json",
        &to_json_string(&crate::backtest::comparison_rows(&reports))?,
    )?;
    stdout.write_all(pretty_report(&reports).as_bytes())?;
    Ok(EXIT_OK)
}

/// Fields accepted by `inspect`.
pub const INSPECT_FIELDS: [&str; 8] =
    ["L", "a", "V", "xi", "sharpe", "mvt", "qstar", "opportunity"];

pub fn inspect_csv(tree: &ScenarioTree, claim: Option<&Claim>, field: &str) -> Result<String> {
    if !INSPECT_FIELDS.contains(&field) {
        return Err(Error::bad(
            "field",
            format!("unknown field `{field}`; expected one of {INSPECT_FIELDS:?}"),
        ));
    }
    let surf = compute_opportunity(tree)?;
    let d = tree.num_assets();
    let cols = |prefix: &str| (0..d).map(|i| format!(",{prefix}_{i}")).collect::<String>();
    let vec_cells = |v: &nalgebra::DVector<f64>| {
        v.iter()
            .map(|x| format!(",{}", g17(*x)))
            .collect::<String>()
    };
    let mut out = String::new();
    match field {
        "L" => {
            out.push_str("id,time,L\n");
            for n in 0..tree.len() {
                writeln!(out, "{},{},{}", n, tree.node(n).time, g17(surf.l(n))).unwrap();
            }
        }
        "a" => {
            writeln!(out, "id,time{}{},dAK", cols("a_tilde"), cols("a_hat")).unwrap();
            for n in tree.interior() {
                let s = surf.step(n);
                writeln!(
                    out,
                    "{},{}{}{},{}",
                    n,
                    tree.node(n).time,
                    vec_cells(&s.a_tilde),
                    vec_cells(&s.a_hat),
                    g17(s.dak)
                )
                .unwrap();
            }
        }
        "V" | "xi" => {
            let claim = claim.ok_or_else(|| Error::bad("claim", "field requires a claim"))?;
            let plan = HedgePlan::compute(tree, &surf, claim);
            if field == "V" {
                out.push_str("id,time,V\n");
                for n in 0..tree.len() {
                    writeln!(out, "{},{},{}", n, tree.node(n).time, g17(plan.v[n])).unwrap();
                }
            } else {
                writeln!(out, "id,time{}", cols("xi")).unwrap();
                for n in tree.interior() {
                    writeln!(out, "{},{}{}", n, tree.node(n).time, vec_cells(&plan.xi[n])).unwrap();
                }
            }
        }
        "sharpe" => {
            out.push_str("id,time,sharpe\n");
            for n in 0..tree.len() {
                writeln!(
                    out,
                    "{},{},{}",
                    n,
                    tree.node(n).time,
                    g17(sharpe_ratio(&surf, n))
                )
                .unwrap();
            }
        }
        "mvt" => {
            let mvt = mvt_process(tree, &surf)?;
            out.push_str("id,time,dK_hat\n");
            for n in tree.interior() {
                writeln!(out, "{},{},{}", n, tree.node(n).time, g17(mvt.dk_hat[n])).unwrap();
            }
        }
        "qstar" => {
            let ms = measures(tree, &surf);
            out.push_str("node,child,qstar_w,pstar_p\n");
            for n in tree.interior() {
                for (k, e) in tree.node(n).children.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{},{}",
                        n,
                        e.node,
                        g17(ms.qstar_w[n][k]),
                        g17(ms.pstar_p[n][k])
                    )
                    .unwrap();
                }
            }
        }
        _ => {
            let mvt = mvt_process(tree, &surf)?;
            writeln!(
                out,
                "id,time,L{}{},dAK,dK_hat,sharpe",
                cols("a_tilde"),
                cols("a_hat")
            )
            .unwrap();
            for n in 0..tree.len() {
                write!(out, "{},{},{}", n, tree.node(n).time, g17(surf.l(n))).unwrap();
                if tree.is_leaf(n) {
                    out.push_str(&",".repeat(2 * d + 2));
                } else {
                    let s = surf.step(n);
                    write!(
                        out,
                        "{}{},{},{}",
                        vec_cells(&s.a_tilde),
                        vec_cells(&s.a_hat),
                        g17(s.dak),
                        g17(mvt.dk_hat[n])
                    )
                    .unwrap();
                }
                writeln!(out, ",{}", g17(sharpe_ratio(&surf, n))).unwrap();
            }
        }
    }
    Ok(out)
}

fn cmd_inspect(r: &Resolved, field: &str, stdout: &mut dyn Write) -> Result<i32> {
    if !INSPECT_FIELDS.contains(&field) {
        return Err(Error::bad("field", format!("unknown field `{field}`")));
    }
    let (tree, claim) = r.cfg.build()?;
    stdout.write_all(inspect_csv(&tree, claim.as_ref(), field)?.as_bytes())?;
    Ok(EXIT_OK)
}
