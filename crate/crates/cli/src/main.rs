//! Command-line surface: simulate traces, train models, run detection,
//! inspect isolability thresholds, and fuzz the numerical core.
//!
//! Exit codes: 0 success, 2 configuration error, 3 ingestion error,
//! 4 model/trace compatibility error, 5 property violation, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wmavmd::analysis::{select_window, IsolabilityTable, WindowSelection};
use wmavmd::augment::{virtual_wheelset, VirtualPolicy};
use wmavmd::detect::{baseline_criteria, detect_trace, BaselineThresholds};
use wmavmd::error::Error;
use wmavmd::frame::Trace;
use wmavmd::fuzz::{fuzz_min_operator, fuzz_owv, fuzz_scalar_min, fuzz_vmd_operator, FuzzReport};
use wmavmd::io;
use wmavmd::model::{train_model, ClPolicy, DetectorModel, VirtualPolicyTag};
use wmavmd::sim::{generate, inject};

#[derive(Parser)]
#[command(name = "wmavmd", version, about = "Weighted moving-average anomaly detection for multichannel velocity signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace (and ground-truth labels) from a scenario file
    Simulate(SimulateArgs),
    /// Train a detector model from an anomaly-free trace
    Train(TrainArgs),
    /// Run detection over a trace with a trained model
    Detect(DetectArgs),
    /// Print the isolability threshold table and select a window length
    Analyze(AnalyzeArgs),
    /// Run the randomized property suites
    Fuzz(FuzzArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON (profile, noise, optional injection)
    #[arg(long, env = "WMAVMD_SCENARIO")]
    scenario: PathBuf,
    /// Output trace CSV
    #[arg(long, env = "WMAVMD_OUTPUT")]
    output: PathBuf,
    /// Output ground-truth labels CSV (required when the scenario injects faults)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Override the scenario's noise seed
    #[arg(long, env = "WMAVMD_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Input trace CSV (anomaly-free training data)
    #[arg(long, env = "WMAVMD_INPUT")]
    input: PathBuf,
    /// Output model JSON
    #[arg(long, env = "WMAVMD_MODEL")]
    model: PathBuf,
    /// Single window length
    #[arg(long, env = "WMAVMD_WINDOW")]
    window: Option<usize>,
    /// Inclusive window range, e.g. 1..5
    #[arg(long, env = "WMAVMD_WINDOW_RANGE", value_parser = parse_window_range)]
    window_range: Option<(usize, usize)>,
    /// Sample interval of the trace in seconds
    #[arg(long, env = "WMAVMD_INTERVAL", default_value_t = 0.1)]
    interval: f64,
    /// Control-limit policy: `max` or `quantile:<q>`
    #[arg(long, env = "WMAVMD_CL_POLICY", default_value = "max", value_parser = parse_cl_policy)]
    cl_policy: ClPolicy,
    /// Virtual channel: `inertial[:max_accel]` or `reference:<csv>`
    #[arg(long, env = "WMAVMD_VIRTUAL", value_parser = parse_virtual)]
    r#virtual: Option<VirtualArg>,
}

#[derive(Args)]
struct DetectArgs {
    /// Input trace CSV
    #[arg(long, env = "WMAVMD_INPUT")]
    input: PathBuf,
    /// Trained model JSON
    #[arg(long, env = "WMAVMD_MODEL")]
    model: PathBuf,
    /// Output alarm log CSV
    #[arg(long, env = "WMAVMD_OUTPUT")]
    output: PathBuf,
    /// Per-sample index/control-limit series CSV for plotting
    #[arg(long)]
    index_series: Option<PathBuf>,
    /// Window length to detect with (default: largest trained)
    #[arg(long, env = "WMAVMD_WINDOW")]
    window: Option<usize>,
    /// Sample interval of the trace in seconds (default: the model's)
    #[arg(long, env = "WMAVMD_INTERVAL")]
    interval: Option<f64>,
    /// Reference series CSV for a model trained with a reference virtual channel
    #[arg(long)]
    virtual_ref: Option<PathBuf>,
    /// Also evaluate the baseline threshold criteria into this CSV
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Baseline traction velocity-difference threshold (km/h)
    #[arg(long, env = "WMAVMD_JPE", default_value_t = 3.0)]
    jpe: f64,
    /// Baseline traction acceleration threshold ((km/h)/s)
    #[arg(long, env = "WMAVMD_JPA", default_value_t = 5.0)]
    jpa: f64,
    /// Baseline braking velocity-difference threshold (km/h)
    #[arg(long, env = "WMAVMD_JBE", default_value_t = 3.0)]
    jbe: f64,
    /// Baseline braking acceleration threshold ((km/h)/s)
    #[arg(long, env = "WMAVMD_JBA", default_value_t = 5.0)]
    jba: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trained model JSON (with a window range)
    #[arg(long, env = "WMAVMD_MODEL")]
    model: PathBuf,
    /// Tolerable fault magnitude per channel (km/h): one value broadcast, or
    /// a comma list
    #[arg(long, env = "WMAVMD_F_CHECK", value_parser = parse_f_check)]
    f_check: Option<FCheck>,
    /// Also write the threshold table as CSV
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    /// Cases per operator suite
    #[arg(long, env = "WMAVMD_ITERATIONS", default_value_t = 100_000)]
    iterations: u64,
    /// Random instances for the solver suite
    #[arg(long, env = "WMAVMD_INSTANCES", default_value_t = 1000)]
    instances: u64,
    #[arg(long, env = "WMAVMD_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Debug)]
enum VirtualArg {
    Inertial(f64),
    Reference(PathBuf),
}

#[derive(Clone, Debug)]
struct FCheck(Vec<f64>);

/// Default vehicle acceleration bound for the inertial virtual channel,
/// (km/h)/s.
const DEFAULT_MAX_ACCEL: f64 = 1.5;

fn parse_window_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let lo: usize = a.trim().parse().map_err(|_| format!("bad start {a:?}"))?;
    let hi: usize = b.trim().parse().map_err(|_| format!("bad end {b:?}"))?;
    if lo == 0 || hi < lo {
        return Err(format!("invalid range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn parse_cl_policy(s: &str) -> Result<ClPolicy, String> {
    if s == "max" {
        return Ok(ClPolicy::Max);
    }
    if let Some(q) = s.strip_prefix("quantile:") {
        let q: f64 = q.parse().map_err(|_| format!("bad quantile {q:?}"))?;
        return Ok(ClPolicy::Quantile(q));
    }
    Err(format!("expected \"max\" or \"quantile:<q>\", got {s:?}"))
}

fn parse_virtual(s: &str) -> Result<VirtualArg, String> {
    if s == "inertial" {
        return Ok(VirtualArg::Inertial(DEFAULT_MAX_ACCEL));
    }
    if let Some(a) = s.strip_prefix("inertial:") {
        let a: f64 = a.parse().map_err(|_| format!("bad acceleration {a:?}"))?;
        return Ok(VirtualArg::Inertial(a));
    }
    if let Some(p) = s.strip_prefix("reference:") {
        return Ok(VirtualArg::Reference(PathBuf::from(p)));
    }
    Err(format!(
        "expected \"inertial[:max_accel]\" or \"reference:<csv>\", got {s:?}"
    ))
}

fn parse_f_check(s: &str) -> Result<FCheck, String> {
    let values: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|_| format!("bad f-check list {s:?}"))?;
    if values.is_empty() {
        return Err("empty f-check list".into());
    }
    Ok(FCheck(values))
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Ingestion { .. } => 3,
        Error::Config(_) | Error::InvalidSpec(_) => 2,
        Error::Incompatible(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // Die quietly when the downstream pipe closes (e.g. `analyze | head`)
    // instead of panicking on the failed print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Fuzz(args) => return cmd_fuzz(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut scenario = io::read_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.noise.seed = seed;
    }
    let trace = generate(&scenario.profile, &scenario.noise)?;
    match &scenario.injection {
        Some(spec) if !spec.events.is_empty() => {
            let outcome = inject(&trace, spec)?;
            if outcome.clamp_warnings > 0 {
                eprintln!(
                    "warning: {} slide sample(s) clamped at zero velocity; additivity does \
                     not hold there",
                    outcome.clamp_warnings
                );
            }
            io::write_trace(&args.output, &outcome.trace)?;
            match &args.labels {
                Some(path) => io::write_labels(path, &outcome.labels)?,
                None => {
                    return Err(Error::Config(
                        "scenario injects faults; pass --labels to keep the ground truth".into(),
                    ))
                }
            }
            println!(
                "wrote {} frames ({} faulted samples) to {}",
                outcome.trace.len(),
                outcome.labels.len(),
                args.output.display()
            );
        }
        _ => {
            io::write_trace(&args.output, &trace)?;
            if let Some(path) = &args.labels {
                io::write_labels(path, &[])?;
                println!("no injection in scenario; wrote empty labels to {}", path.display());
            }
            println!("wrote {} frames to {}", trace.len(), args.output.display());
        }
    }
    Ok(())
}

fn load_augmented(
    trace: Trace,
    policy: Option<&VirtualArg>,
) -> Result<(Trace, Option<VirtualPolicyTag>), Error> {
    match policy {
        None => Ok((trace, None)),
        Some(VirtualArg::Inertial(max_accel)) => {
            let policy = VirtualPolicy::Inertial {
                max_accel_kmh_s: *max_accel,
            };
            let tag = policy.tag();
            Ok((virtual_wheelset(&trace, &policy)?, Some(tag)))
        }
        Some(VirtualArg::Reference(path)) => {
            let series = io::read_reference_series(path)?;
            let policy = VirtualPolicy::Reference(series);
            let tag = policy.tag();
            Ok((virtual_wheelset(&trace, &policy)?, Some(tag)))
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let windows: Vec<usize> = match (args.window, args.window_range) {
        (Some(w), None) => vec![w],
        (None, Some((lo, hi))) => (lo..=hi).collect(),
        (None, None) => return Err(Error::Config("pass --window or --window-range".into())),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--window and --window-range are mutually exclusive".into(),
            ))
        }
    };
    let trace = io::read_trace(&args.input, args.interval)?;
    let (trace, tag) = load_augmented(trace, args.r#virtual.as_ref())?;
    let model = train_model(&trace, &windows, args.cl_policy, tag)?;
    // Persist before reporting: a truncated stdout pipe must not cost the
    // artifact.
    io::write_model(&args.model, &model)?;

    println!(
        "trained {} entries over {} channels ({} frames)",
        model.entries.len(),
        model.channels,
        trace.len()
    );
    for e in &model.entries {
        let weights: Vec<String> = e
            .weights
            .as_slice()
            .iter()
            .map(|w| format!("{w:.6}"))
            .collect();
        let note = match e.fallback {
            Some(f) => format!(" fallback={f:?}"),
            None => String::new(),
        };
        println!(
            "  channel {} {} W={}: weights [{}] delta={:.4} phi={:.4} owv_positive={}{}",
            e.channel + 1,
            e.class,
            e.window,
            weights.join(", "),
            e.delta,
            e.phi,
            e.owv_positive,
            note
        );
    }
    println!("wrote model to {}", args.model.display());
    Ok(())
}

fn detection_window(model: &DetectorModel, requested: Option<usize>) -> Result<usize, Error> {
    let available = model.windows();
    match requested {
        Some(w) if available.contains(&w) => Ok(w),
        Some(w) => Err(Error::Config(format!(
            "model has no window-{w} entries (available: {available:?})"
        ))),
        None => available
            .last()
            .copied()
            .ok_or_else(|| Error::Config("model has no entries".into())),
    }
}

fn cmd_detect(args: DetectArgs) -> Result<(), Error> {
    let model = io::read_model(&args.model)?;
    let interval = args.interval.unwrap_or(model.sample_interval_s);
    let trace = io::read_trace(&args.input, interval)?;

    // Re-apply the augmentation the model was trained with.
    let trace = match &model.virtual_policy {
        None => {
            if args.virtual_ref.is_some() {
                return Err(Error::Config(
                    "--virtual-ref given but the model was trained without a virtual channel"
                        .into(),
                ));
            }
            trace
        }
        Some(VirtualPolicyTag::Inertial { max_accel_kmh_s }) => virtual_wheelset(
            &trace,
            &VirtualPolicy::Inertial {
                max_accel_kmh_s: *max_accel_kmh_s,
            },
        )?,
        Some(VirtualPolicyTag::Reference) => {
            let path = args.virtual_ref.as_ref().ok_or_else(|| {
                Error::Config(
                    "model was trained with a reference virtual channel; pass --virtual-ref"
                        .into(),
                )
            })?;
            let series = io::read_reference_series(path)?;
            virtual_wheelset(&trace, &VirtualPolicy::Reference(series))?
        }
    };

    let window = detection_window(&model, args.window)?;
    let (records, alarms) = detect_trace(&model, &trace, window)?;
    io::write_alarms(&args.output, &alarms)?;
    if let Some(path) = &args.index_series {
        io::write_index_series(path, &records)?;
    }

    let evaluated = records.iter().filter(|r| r.index.is_some()).count();
    if trace.is_empty() {
        eprintln!("warning: empty trace; wrote empty outputs");
    }
    println!(
        "evaluated {} windows over {} frames with W={}: {} alarm(s)",
        evaluated,
        trace.len(),
        window,
        alarms.len()
    );
    if evaluated > 0 {
        println!(
            "false-alarm rate if the trace is anomaly-free: {:.4}%",
            100.0 * alarms.len() as f64 / evaluated as f64
        );
    }

    if let Some(path) = &args.baseline {
        let thresholds = BaselineThresholds {
            jpe: args.jpe,
            jpa: args.jpa,
            jbe: args.jbe,
            jba: args.jba,
        };
        let baseline = baseline_criteria(&trace, &thresholds)?;
        io::write_baseline_alarms(path, &baseline)?;
        println!("baseline criteria raised {} alarm(s)", baseline.len());
    }
    Ok(())
}

fn print_threshold_block(table: &IsolabilityTable, class: wmavmd::frame::ModeClass) {
    let channels = table.channels();
    let kind = match class {
        wmavmd::frame::ModeClass::Traction => "Slip",
        wmavmd::frame::ModeClass::Braking => "Slide",
    };
    print!("{:<12}", format!("{kind} (km/h)"));
    for ch in 1..=channels {
        print!(" {:>10}", format!("i={ch}"));
    }
    println!();
    for w in table.windows() {
        print!("{:<12}", format!("W={w}"));
        for ch in 0..channels {
            let entry = table
                .rows(ch, class)
                .into_iter()
                .find(|e| e.window == w);
            match entry {
                Some(e) => {
                    let flag = if e.owv_positive { "" } else { "*" };
                    print!(" {:>10}", format!("{:.4}{flag}", e.threshold));
                }
                None => print!(" {:>10}", "-"),
            }
        }
        println!();
    }
}

fn print_selection(selection: &WindowSelection) {
    let kind = match selection.class {
        wmavmd::frame::ModeClass::Traction => "slip",
        wmavmd::frame::ModeClass::Braking => "slide",
    };
    for choice in &selection.per_channel {
        match choice.window {
            Some(w) => println!("  channel {} {kind}: W* = {w}", choice.channel + 1),
            None => println!(
                "  channel {} {kind}: no window qualifies (closest gap {:.4} km/h)",
                choice.channel + 1,
                choice.closest_gap.unwrap_or(f64::NAN)
            ),
        }
        if choice.conditional {
            println!(
                "    note: some thresholds are conditional (non-positive optimal weights)"
            );
        }
    }
    match selection.combined {
        Some(w) => println!("  combined {kind}: W* = {w}"),
        None => println!("  combined {kind}: no window qualifies"),
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Error> {
    let model = io::read_model(&args.model)?;
    if model.windows().len() < 2 {
        return Err(Error::Config(
            "model holds a single window length; train with --window-range to analyze".into(),
        ));
    }
    let table = IsolabilityTable::from_model(&model);
    if let Some(path) = &args.output {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["class", "channel", "window", "threshold", "owv_positive"])?;
        for e in &table.entries {
            writer.write_record(&[
                e.class.to_string(),
                (e.channel + 1).to_string(),
                e.window.to_string(),
                format!("{}", e.threshold),
                e.owv_positive.to_string(),
            ])?;
        }
        writer.flush()?;
    }
    for class in table.classes() {
        print_threshold_block(&table, class);
        println!();
    }
    if table.entries.iter().any(|e| !e.owv_positive) {
        println!("* threshold conditional: optimal weights not all positive\n");
    }

    if let Some(FCheck(values)) = &args.f_check {
        let f_check: Vec<f64> = if values.len() == 1 {
            vec![values[0]; model.channels]
        } else {
            values.clone()
        };
        let selections = select_window(&model, &f_check)?;
        println!("window selection for tolerable magnitudes {f_check:?}:");
        for selection in &selections {
            print_selection(selection);
        }
    }

    if let Some(path) = &args.output {
        println!("wrote threshold table to {}", path.display());
    }
    Ok(())
}

fn cmd_fuzz(args: FuzzArgs) -> ExitCode {
    let reports: Vec<FuzzReport> = vec![
        fuzz_scalar_min(args.iterations, args.seed),
        fuzz_min_operator(args.iterations, args.seed.wrapping_add(1)),
        fuzz_vmd_operator(args.iterations, args.seed.wrapping_add(2)),
        fuzz_owv(args.instances, args.seed.wrapping_add(3)),
    ];
    let mut failed = false;
    for report in &reports {
        println!("{report}");
        failed |= !report.passed();
    }
    if failed {
        eprintln!("property violations found");
        ExitCode::from(5)
    } else {
        println!("all suites clean");
        ExitCode::SUCCESS
    }
}
