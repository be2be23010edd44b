use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rankenv::combined::{concatenate, deviation_vector, CombinedCurveSet, CurveSet, DeviationMeasure, PartInfo};
use rankenv::envelope::{central_curve, recommend_simulations, run_rank_test, RankTestResult, VectorKind, DEFAULT_MAX_WIDTH};
use rankenv::fanova::{permutation_engine, Construction, Scaling};
use rankenv::io::{self, envelope_rows, ResultSummary};
use rankenv::rank::{Side, TestMatrix};
use rankenv::spatial::{parse_functions, EdgeCorrection, FitFamily, Model, PointPattern, SummaryFunction, Window};
use rankenv::study::{self, GofOptions, GridSpec, NullSpec, StudyConfig};
use rankenv::Seed;

#[derive(Parser)]
#[command(name = "rankenv", version, about = "Global rank envelope tests for Monte Carlo and permutation testing")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "RANKENV_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of simulations s (default depends on the command).
    #[arg(long)]
    nsim: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    rmin: f64,
    #[arg(long, default_value_t = 0.125)]
    rmax: f64,
    #[arg(long = "K", default_value_t = GridSpec::DEFAULT_K)]
    k: usize,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.rmin, self.rmax, self.k)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupMode {
    Means,
    Pairwise,
    LeaveOneOut,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    None,
    Unit,
    MovingAverage,
}

#[derive(Subcommand)]
enum Command {
    /// Rank envelope test on one curve-set CSV (`r,obs,sim1,...`).
    RankTest {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value = "two-sided")]
        side: Side,
        #[command(flatten)]
        common: Common,
    },
    /// Combined test of several curve sets sharing s.
    Combine {
        #[arg(long = "input", short, required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "two-sided")]
        side: Side,
        /// Combine scalar deviation measures (int, max or qdir) instead of the curves.
        #[arg(long)]
        measure: Option<String>,
        /// Allow parts with different grid lengths.
        #[arg(long)]
        allow_unequal: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Goodness-of-fit test of one or more point patterns.
    Gof {
        #[arg(long = "pattern", short, required = true)]
        patterns: Vec<PathBuf>,
        /// Window JSON; defaults to `<pattern>.window.json`.
        #[arg(long = "window")]
        windows: Vec<PathBuf>,
        /// Known null model as JSON.
        #[arg(long, conflicts_with = "fit")]
        model: Option<PathBuf>,
        /// Fit the null model to each pattern: csr or matclust.
        #[arg(long)]
        fit: Option<FitFamily>,
        #[arg(long, default_value = "L")]
        functions: String,
        #[arg(long)]
        edge: Option<EdgeCorrection>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Permutation functional ANOVA with the pointwise F statistic.
    Fanova {
        #[arg(long, short)]
        input: PathBuf,
        /// Welch's F for unequal group variances.
        #[arg(long)]
        welch: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Permutation comparison of group means.
    Groupdiff {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "pairwise")]
        mode: GroupMode,
        #[arg(long, value_enum, default_value = "moving-average")]
        scaling: ScalingArg,
        /// Moving-average window for the variances.
        #[arg(long = "window-b", default_value_t = 75)]
        window_b: usize,
        /// Use the weight column of the input.
        #[arg(long)]
        weights: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate point patterns from a model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        window: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Estimate summary functions of a pattern.
    Summary {
        #[arg(long, short)]
        pattern: PathBuf,
        #[arg(long)]
        window: Option<PathBuf>,
        #[arg(long, default_value = "L,F,G,J")]
        functions: String,
        #[arg(long)]
        edge: Option<EdgeCorrection>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Random superposition test of a marked pattern by toroidal shifts.
    ShiftTest {
        #[arg(long, short)]
        pattern: PathBuf,
        #[arg(long)]
        window: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Replicated rejection-rate study described by a JSON config.
    PowerStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        nsim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::RankTest { input, side, common } => {
            check_alpha(common.alpha)?;
            let mut c = io::read_curve_set(&input, "curve", side)?;
            if let Some(n) = common.nsim {
                if n != c.nsim() {
                    bail!("--nsim {n} does not match the {} simulations in {}", c.nsim(), input.display());
                }
            }
            c.name = stem(&input);
            let combined = concatenate(std::slice::from_ref(&c), false)?;
            let res = run_rank_test(&combined.matrix, common.alpha)?;
            emit(&common.out, "rank-test", &combined, &res, json!({ "input": input, "side": side }))
        }
        Command::Combine { inputs, side, measure, allow_unequal, common } => {
            check_alpha(common.alpha)?;
            let parts = inputs
                .iter()
                .map(|p| io::read_curve_set(p, &stem(p), side).map_err(Into::into))
                .collect::<Result<Vec<CurveSet>>>()?;
            match measure {
                None => {
                    let combined = concatenate(&parts, allow_unequal)?;
                    let res = run_rank_test(&combined.matrix, common.alpha)?;
                    emit(&common.out, "combine", &combined, &res, json!({ "inputs": inputs, "side": side }))
                }
                Some(m) => {
                    let measure = DeviationMeasure::parse(&m)?;
                    let devs = deviation_vector(&parts, measure)?;
                    let res = run_rank_test(&devs.matrix, common.alpha)?;
                    let combined = CombinedCurveSet {
                        parts: devs
                            .names
                            .iter()
                            .enumerate()
                            .map(|(i, n)| PartInfo { name: n.clone(), offset: i, len: 1, side: Side::Upper })
                            .collect(),
                        args: (0..devs.names.len()).map(|i| i as f64).collect(),
                        matrix: devs.matrix.clone(),
                    };
                    let extra = json!({ "inputs": inputs, "measure": measure, "excluded_points": devs.excluded_points });
                    emit(&common.out, "combine", &combined, &res, extra)
                }
            }
        }
        Command::Gof { patterns, windows, model, fit, functions, edge, grid, common } => {
            check_alpha(common.alpha)?;
            let functions = parse_functions(&functions)?;
            let null = match (model, fit) {
                (Some(m), _) => NullSpec::Known(io::read_json::<Model>(&m)?),
                (None, Some(f)) => NullSpec::Fitted(f),
                (None, None) => bail!("give either --model or --fit"),
            };
            let pats = read_patterns(&patterns, &windows)?;
            let nsim = match common.nsim {
                Some(n) => n,
                None => recommend_simulations(VectorKind::Functions { k: functions.len() * pats.len() }, DEFAULT_MAX_WIDTH)?,
            };
            let opts = GofOptions { functions: functions.clone(), grid: grid.spec()?, nsim, alpha: common.alpha, edge };
            let out = study::gof_test_multi(&pats, &null, &opts, Seed::new(common.seed))?;
            let extra = json!({
                "patterns": patterns,
                "functions": functions.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "grid": opts.grid,
                "null": null,
                "models": out.models,
                "seed": common.seed,
            });
            emit(&common.out, "gof", &out.combined, &out.result, extra)
        }
        Command::Fanova { input, welch, common } => {
            let c = Construction::Fstat { welch };
            permutation_command(&input, false, c, common.nsim.unwrap_or(2499), &common, "fanova")
        }
        Command::Groupdiff { input, mode, scaling, window_b, weights, common } => {
            let scaling = match scaling {
                ScalingArg::None => Scaling::None,
                ScalingArg::Unit => Scaling::UnitVar,
                ScalingArg::MovingAverage => Scaling::UnitVarMa(window_b),
            };
            let c = match mode {
                GroupMode::Means => Construction::GroupMeans,
                GroupMode::Pairwise => Construction::PairwiseDiff(scaling),
                GroupMode::LeaveOneOut => Construction::LeaveOneOut { window: window_b },
            };
            permutation_command(&input, weights, c, common.nsim.unwrap_or(7500), &common, "groupdiff")
        }
        Command::Simulate { model, window, count, seed, out } => {
            let m: Model = io::read_json(&model)?;
            let w = match window {
                Some(p) => io::read_json::<Window>(&p)?,
                None => Window::unit_square(),
            };
            fs::create_dir_all(&out)?;
            let root = Seed::new(seed);
            for i in 0..count {
                let p = m.generate(&w, &mut root.child(i as u64).rng())?;
                let name = if count == 1 { "pattern".to_string() } else { format!("pattern{}", i + 1) };
                io::write_pattern(&out.join(format!("{name}.csv")), &out.join(format!("{name}.window.json")), &p)?;
            }
            Ok(())
        }
        Command::Summary { pattern, window, functions, edge, grid, out } => {
            let functions = parse_functions(&functions)?;
            let p = read_pattern(&pattern, window.as_deref())?;
            let r = grid.spec()?.values();
            let curves = study::estimate_functions(&p, &functions, &r, edge)?;
            fs::create_dir_all(&out)?;
            let names: Vec<String> = functions.iter().map(ToString::to_string).collect();
            io::write_summary_csv(&out.join("summary.csv"), &r, &names, &curves)?;
            Ok(())
        }
        Command::ShiftTest { pattern, window, grid, common } => {
            check_alpha(common.alpha)?;
            let p = read_pattern(&pattern, window.as_deref())?;
            let npairs = p.types().len() * p.types().len().saturating_sub(1) / 2;
            let nsim = match common.nsim {
                Some(n) => n,
                None => recommend_simulations(VectorKind::Functions { k: npairs.max(1) }, DEFAULT_MAX_WIDTH)?,
            };
            let out = study::shift_test(&p, &grid.spec()?, nsim, common.alpha, Seed::new(common.seed))?;
            let extra = json!({ "pattern": pattern, "grid": grid.spec()?, "seed": common.seed });
            emit(&common.out, "shift-test", &out.combined, &out.result, extra)
        }
        Command::PowerStudy { config, replicates, nsim, seed, out } => {
            let mut cfg: StudyConfig = io::read_json(&config)?;
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(s) = nsim {
                cfg.nsim = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = study::run_study(&cfg)?;
            fs::create_dir_all(&out)?;
            io::write_json(&out.join("report.json"), &report)?;
            for cell in &report.cells {
                for r in &cell.rates {
                    let names: Vec<String> = r.functions.iter().map(SummaryFunction::to_string).collect();
                    println!(
                        "{:<32} {:<10} rate {:.3} ({}/{}), 95% CI [{:.3}, {:.3}]",
                        cell.label,
                        names.join(","),
                        r.rate,
                        r.rejections,
                        cell.replicates,
                        r.ci.0,
                        r.ci.1
                    );
                }
            }
            Ok(())
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("--alpha must lie in (0, 1), got {alpha}");
    }
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "curve".to_string(), |s| s.to_string_lossy().into_owned())
}

fn sidecar(pattern: &Path) -> PathBuf {
    pattern.with_extension("window.json")
}

fn read_pattern(pattern: &Path, window: Option<&Path>) -> Result<PointPattern> {
    let w = window.map_or_else(|| sidecar(pattern), Path::to_path_buf);
    io::read_pattern(pattern, &w).with_context(|| format!("reading {}", pattern.display()))
}

fn read_patterns(patterns: &[PathBuf], windows: &[PathBuf]) -> Result<Vec<PointPattern>> {
    if !windows.is_empty() && windows.len() != 1 && windows.len() != patterns.len() {
        bail!("give one --window for all patterns or one per pattern");
    }
    patterns
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let w = match windows.len() {
                0 => None,
                1 => Some(windows[0].as_path()),
                _ => Some(windows[i].as_path()),
            };
            read_pattern(p, w)
        })
        .collect()
}

fn permutation_command(input: &Path, weights: bool, c: Construction, nsim: usize, common: &Common, name: &str) -> Result<()> {
    check_alpha(common.alpha)?;
    let g = io::read_grouped_csv(input, weights)?;
    let perm = permutation_engine(&g, c, nsim, Seed::new(common.seed))?;
    let combined = CombinedCurveSet { parts: perm.segments.clone(), args: perm.args.clone(), matrix: perm.matrix.clone() };
    let res = run_rank_test(&perm.matrix, common.alpha)?;
    let extra = json!({
        "input": input,
        "construction": c,
        "groups": g.labels(),
        "weighted": g.is_weighted(),
        "degenerate_points": perm.degenerate_points,
        "seed": common.seed,
    });
    emit(&common.out, name, &combined, &res, extra)
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

/// Writes `result.json`, `envelope.csv`, one envelope file per part and
/// `manifest.json`.
fn emit(out: &Path, command: &str, combined: &CombinedCurveSet, res: &RankTestResult, extra: serde_json::Value) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let m: &TestMatrix = &combined.matrix;
    let central = central_curve(m);
    let rows = envelope_rows(&combined.args, &res.envelope, &central, m.row(0));
    io::write_envelope_csv(&out.join("envelope.csv"), &rows)?;
    let mut files = vec!["result.json".to_string(), "envelope.csv".to_string()];
    let mut part_files = Vec::new();
    if combined.parts.len() > 1 {
        for (i, p) in combined.parts.iter().enumerate() {
            let file = format!("envelope_{}_{}.csv", i + 1, file_safe(&p.name));
            let mut sub = rows[p.offset..p.offset + p.len].to_vec();
            for (j, r) in sub.iter_mut().enumerate() {
                r.index = j;
            }
            io::write_envelope_csv(&out.join(&file), &sub)?;
            part_files.push(json!({ "part": p.name, "file": file }));
            files.push(file);
        }
    }
    let summary = ResultSummary::new(res, if combined.parts.len() > 1 { combined.parts.clone() } else { Vec::new() });
    io::write_json(&out.join("result.json"), &summary)?;
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "alpha": res.alpha,
        "s": res.nsim,
        "dimension": m.dim(),
        "files": files,
        "parts": part_files,
        "settings": extra,
    });
    io::write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "p-interval ({:.4}, {:.4}], erc p-value {:.4}, decision: {}",
        res.p_interval.p_minus,
        res.p_interval.p_plus,
        res.p_erc,
        res.decision.as_str()
    );
    Ok(())
}
