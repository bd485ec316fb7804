//! `mbrc` — build marginal biodiversity recovery cost curves, quote
//! target-compatible shadow prices, price project footprints, sweep the
//! species-area exponent, and generate or validate scenario packages.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 target
//! unreachable, 4 configuration mismatch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mbrc_core::cba::{price_project, project_delta_index, EvaluationState, ProjectDelta, ProjectFootprint};
use mbrc_core::curve::{build_curve, shadow_price, sweep_z, sweep_to_csv, MbrcCurve, ShadowPriceQuote};
use mbrc_core::package::{load_scenario, save_scenario};
use mbrc_core::prioritizer::{build_sequence, PrioritizerMode, SequenceOutcome, StopRule};
use mbrc_core::scenario::{validate, Scenario};
use mbrc_core::synth::{gen_synthetic, CostDistribution, SynthParams};
use mbrc_core::Error;

#[derive(Parser)]
#[command(name = "mbrc", version, about = "Biodiversity shadow-pricing engine")]
struct Cli {
    /// Worker threads for candidate re-scoring (default: all cores).
    /// Outputs are byte-identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Lazy,
}

impl From<Mode> for PrioritizerMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Exact => PrioritizerMode::Exact,
            Mode::Lazy => PrioritizerMode::Lazy,
        }
    }
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario package directory
    #[arg(long)]
    scenario: PathBuf,

    /// Override the manifest's central z for this run
    #[arg(long)]
    z: Option<f64>,

    /// Prioritizer mode; both modes produce identical output
    #[arg(long, value_enum, default_value_t = Mode::Lazy)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Command {
    /// Build the MBRC curve; writes curve.csv, summary.json and map.csv
    BuildCurve {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Stop once the index reaches this level instead of exhausting
        /// all beneficial actions
        #[arg(long)]
        target: Option<f64>,
        /// Also write curve_envelope.csv, the lower convex hull of the
        /// cumulative cost profile (smoothed presentation view)
        #[arg(long)]
        envelope: bool,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Quote the shadow price at a target index level (JSON on stdout)
    ShadowPrice {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        target: f64,
        /// Also write quote.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Price a project footprint at the target-compatible shadow price
    PriceProject {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        target: Option<f64>,
        /// Footprint JSON: {"label", "changes": [{"cell_id", "forced_class"}]}
        #[arg(long, conflicts_with = "delta_pp")]
        footprint: Option<PathBuf>,
        /// Inject a precomputed index impact (percentage points) instead
        /// of evaluating a footprint
        #[arg(long, allow_negative_numbers = true)]
        delta_pp: Option<f64>,
        /// Inject a precomputed quote JSON instead of building the curve
        #[arg(long)]
        quote: Option<PathBuf>,
        /// Also write appraisal.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the pipeline at z_low/z_central/z_high; writes sweep.csv
    SweepZ {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        target: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scenario package
    GenSynthetic {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        rows: u32,
        #[arg(long, default_value_t = 20)]
        cols: u32,
        #[arg(long, default_value_t = 10)]
        species: u32,
        #[arg(long, default_value_t = 2)]
        technologies: u32,
        #[arg(long, default_value_t = 0.35)]
        range_density: f64,
        #[arg(long, default_value_t = 0.5)]
        suitability_density: f64,
        /// Cost distribution: lognormal:LOCATION:SCALE or uniform:LO:HI
        #[arg(long, default_value = "lognormal:4:1")]
        cost: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a scenario package and report findings
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        /// Emit the report as JSON
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: failed to configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::TargetUnreachable { .. } => 3,
        Error::TagMismatch(_) => 4,
        _ => 2,
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::BuildCurve {
            common,
            target,
            envelope,
            out,
        } => cmd_build_curve(&common, target, envelope, &out),
        Command::ShadowPrice { common, target, out } => cmd_shadow_price(&common, target, out.as_deref()),
        Command::PriceProject {
            common,
            target,
            footprint,
            delta_pp,
            quote,
            out,
        } => cmd_price_project(&common, target, footprint.as_deref(), delta_pp, quote.as_deref(), out.as_deref()),
        Command::SweepZ { common, target, out } => cmd_sweep_z(&common, target, &out),
        Command::GenSynthetic {
            seed,
            rows,
            cols,
            species,
            technologies,
            range_density,
            suitability_density,
            cost,
            out,
        } => {
            let params = SynthParams {
                rows,
                cols,
                n_species: species,
                n_technologies: technologies,
                cost_distribution: parse_cost(&cost)?,
                range_density,
                suitability_density,
            };
            let scenario = gen_synthetic(seed, &params)?;
            save_scenario(&scenario, &out)?;
            println!("wrote scenario package to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario, json } => cmd_validate(&scenario, json),
    }
}

fn parse_cost(spec: &str) -> Result<CostDistribution, Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Domain(format!("invalid cost spec '{spec}' (want lognormal:LOC:SCALE or uniform:LO:HI)"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[1].parse().map_err(|_| bad())?;
    let b: f64 = parts[2].parse().map_err(|_| bad())?;
    match parts[0] {
        "lognormal" => Ok(CostDistribution::LogNormal { location: a, scale: b }),
        "uniform" => Ok(CostDistribution::Uniform { lo: a, hi: b }),
        _ => Err(bad()),
    }
}

/// Load, semantically validate, and resolve the run's z value.
fn prepare(common: &ScenarioArgs) -> Result<(Scenario, mbrc_core::scenario::EngineView, f64), Error> {
    let scenario = load_scenario(&common.scenario)?;
    let report = validate(&scenario);
    if !report.is_ok() {
        return Err(Error::InvalidScenario(report.render()));
    }
    for item in &report.warnings {
        eprintln!("warning [{}]: {}", item.context, item.message);
    }
    let z = common.z.unwrap_or(scenario.z.central);
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::Domain(format!("z must lie in (0, 1), got {z}")));
    }
    let view = scenario.engine_view()?;
    Ok((scenario, view, z))
}

fn check_target(target: f64) -> Result<(), Error> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Domain(format!("target must lie in (0, 1], got {target}")));
    }
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn cmd_build_curve(
    common: &ScenarioArgs,
    target: Option<f64>,
    envelope: bool,
    out: &Path,
) -> Result<ExitCode, Error> {
    let (scenario, view, z) = prepare(common)?;
    let stop = match target {
        Some(t) => {
            check_target(t)?;
            StopRule::TargetIndex(t)
        }
        None => StopRule::ExhaustAll,
    };
    let outcome = build_sequence(&scenario, &view, z, common.mode.into(), stop)?;
    let curve = build_curve(&outcome.steps, outcome.baseline_index, z)?;
    if curve.steps.is_empty() {
        eprintln!("warning: no beneficial restoration candidates; curve has zero steps");
    }
    if envelope {
        let points = mbrc_core::curve::lower_convex_envelope(&curve);
        write_file(&out.join("curve_envelope.csv"), &mbrc_core::curve::envelope_to_csv(&points))?;
    }

    write_file(&out.join("curve.csv"), &curve.to_csv())?;
    write_file(&out.join("map.csv"), &map_csv(&outcome))?;
    write_file(&out.join("summary.json"), &summary_json(&curve, &outcome, z, common.mode, target)?)?;
    println!(
        "curve: {} steps, index {} -> {}, total cost {}",
        curve.steps.len(),
        curve.baseline_index,
        curve.final_index(),
        curve.total_cost()
    );
    Ok(ExitCode::SUCCESS)
}

fn map_csv(outcome: &SequenceOutcome) -> String {
    let mut out = String::from("cell_id,rank,technology_id,marginal_benefit,cost,cost_effectiveness\n");
    for (k, step) in outcome.steps.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            step.action.cell_id,
            k + 1,
            step.action.technology_id,
            step.marginal_benefit,
            step.action.cost,
            step.cost_effectiveness
        ));
    }
    out
}

fn summary_json(
    curve: &MbrcCurve,
    outcome: &SequenceOutcome,
    z: f64,
    mode: Mode,
    target: Option<f64>,
) -> Result<String, Error> {
    let value = serde_json::json!({
        "baseline_index": curve.baseline_index,
        "final_index": curve.final_index(),
        "steps": curve.steps.len(),
        "total_cost": curve.total_cost(),
        "z": z,
        "mode": match mode { Mode::Exact => "exact", Mode::Lazy => "lazy" },
        "target": target,
        "reached_target": outcome.reached_target,
    });
    Ok(format!("{}\n", serde_json::to_string_pretty(&value).expect("json")))
}

fn quote_at_target(
    scenario: &Scenario,
    view: &mbrc_core::scenario::EngineView,
    z: f64,
    mode: Mode,
    target: f64,
) -> Result<(ShadowPriceQuote, SequenceOutcome), Error> {
    check_target(target)?;
    let outcome = build_sequence(scenario, view, z, mode.into(), StopRule::TargetIndex(target))?;
    let curve = build_curve(&outcome.steps, outcome.baseline_index, z)?;
    let quote = shadow_price(&curve, target)?;
    Ok((quote, outcome))
}

fn cmd_shadow_price(common: &ScenarioArgs, target: f64, out: Option<&Path>) -> Result<ExitCode, Error> {
    let (scenario, view, z) = prepare(common)?;
    let (quote, _) = quote_at_target(&scenario, &view, z, common.mode, target)?;
    let json = serde_json::to_string_pretty(&quote).expect("json");
    println!("{json}");
    if let Some(dir) = out {
        write_file(&dir.join("quote.json"), &format!("{json}\n"))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_price_project(
    common: &ScenarioArgs,
    target: Option<f64>,
    footprint: Option<&Path>,
    delta_pp: Option<f64>,
    quote_file: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExitCode, Error> {
    let (scenario, view, z) = prepare(common)?;

    let quote = match quote_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let quote: ShadowPriceQuote = serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.display().to_string(),
                source: e,
            })?;
            if let Some(t) = target {
                if t != quote.target {
                    return Err(Error::TagMismatch(format!(
                        "--target {t} does not match quote target {}",
                        quote.target
                    )));
                }
            }
            if common.z.is_some() && z != quote.z {
                return Err(Error::TagMismatch(format!(
                    "--z {z} does not match quote z {}",
                    quote.z
                )));
            }
            quote
        }
        None => {
            let t = target.ok_or_else(|| Error::Domain("--target is required unless --quote is given".into()))?;
            quote_at_target(&scenario, &view, z, common.mode, t)?.0
        }
    };

    let delta = match (footprint, delta_pp) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let fp = ProjectFootprint::from_json(&text, &path.display().to_string())?;
            // impact is measured at the target level of the metric, so the
            // evaluation state is the restored state, not the baseline
            let (_, outcome) = quote_at_target(&scenario, &view, quote.z, common.mode, quote.target)?;
            let delta_pp = project_delta_index(&scenario, &view, &fp, quote.z, EvaluationState::AtTarget(&outcome))?;
            ProjectDelta {
                label: fp.label,
                delta_pp,
                z: quote.z,
                target: Some(quote.target),
            }
        }
        (None, Some(value)) => ProjectDelta {
            label: "injected".into(),
            delta_pp: value,
            z,
            target: Some(target.unwrap_or(quote.target)),
        },
        _ => {
            return Err(Error::Domain(
                "exactly one of --footprint or --delta-pp is required".into(),
            ))
        }
    };

    let appraisal = price_project(&quote, &delta)?;
    let json = serde_json::to_string_pretty(&appraisal).expect("json");
    println!("{json}");
    if let Some(dir) = out {
        write_file(&dir.join("appraisal.json"), &format!("{json}\n"))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_z(common: &ScenarioArgs, target: f64, out: &Path) -> Result<ExitCode, Error> {
    let (scenario, view, _) = prepare(common)?;
    check_target(target)?;
    let entries = sweep_z(&scenario, &view, &scenario.z, target, common.mode.into())?;
    write_file(&out.join("sweep.csv"), &sweep_to_csv(&entries, target))?;
    let reachable = entries.iter().filter(|e| e.quote.is_ok()).count();
    for e in &entries {
        match &e.quote {
            Ok(q) => println!(
                "z={} ({}): baseline {}, price {} per percentage point",
                e.z, e.label, e.baseline_index, q.price_per_pp
            ),
            Err(err) => println!("z={} ({}): {err}", e.z, e.label),
        }
    }
    if reachable == 0 {
        return Err(Error::TargetUnreachable {
            target,
            max_achievable: entries
                .iter()
                .map(|e| e.max_achievable_index)
                .fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(scenario_dir: &Path, json: bool) -> Result<ExitCode, Error> {
    let scenario = load_scenario(scenario_dir)?;
    let report = validate(&scenario);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    } else {
        print!("{}", report.render());
    }
    if report.is_ok() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}
