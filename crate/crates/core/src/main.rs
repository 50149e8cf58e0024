//! Command-line front end: instance generation, policy evaluation, PPO
//! training, alpha grid search, feature-impact analysis, and the oracle
//! self-test.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::prelude::*;

use techroute::domain::{Customer, CustomerId, Point, Skill, Task, Technician, TechnicianId};
use techroute::experiments::{
    self, brute_force_post_value, brute_force_value, emit_report, feature_impact_table,
    TinyScenario,
};
use techroute::instances::{generate_instance, save_instance, InstanceConfig};
use techroute::policies::{default_alpha_grid, grid_search_alpha, PolicyKind};
use techroute::rl::{load_model, save_model, train, TrainConfig};
use techroute::routing::FEASIBILITY_EPS;

#[derive(Parser)]
#[command(
    name = "techroute",
    about = "Simulate, benchmark, and train dispatch policies for technician routing with rework risk"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded instance files plus a manifest.
    Generate(GenerateArgs),
    /// Evaluate a policy over an instance directory and emit reports.
    Run(RunArgs),
    /// Train the dynamic-balance model.
    Train(TrainArgs),
    /// Grid-search the static balance parameter.
    Gridsearch(GridSearchArgs),
    /// Feature-impact analysis of a trained model.
    Analyze(AnalyzeArgs),
    /// Self-test of the exact tiny-scale oracle.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Instance parameter file (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 150)]
    count: u32,
    /// Base seed; instance i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Policy spec: mysf|myex|myef|sf|ex|ef|sb:<alpha>|db:<model-path>.
    #[arg(long)]
    policy: String,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Periods whose routes are dumped as text.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u32, 4, 8, 16])]
    dump_periods: Vec<u32>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training parameter file (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration-count override.
    #[arg(long)]
    iterations: Option<u32>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Learning-curve CSV (defaults next to the model).
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct GridSearchArgs {
    #[arg(long)]
    instances: PathBuf,
    /// Grid points; defaults to 0.10..=0.60 step 0.05.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    /// Optional output file for the table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Run the randomized self-test.
    #[arg(long, default_value_t = true)]
    selftest: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch_command(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch_command(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Run(args) => run(args),
        Command::Train(args) => train_command(args),
        Command::Gridsearch(args) => gridsearch(args),
        Command::Analyze(args) => analyze(args),
        Command::Oracle(args) => oracle(args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn generate(args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let mut config: InstanceConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => InstanceConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    std::fs::create_dir_all(&args.out)?;
    let base_seed = config.seed;
    let mut manifest = serde_json::json!({
        "config": config,
        "count": args.count,
        "base_seed": base_seed,
        "files": [],
    });
    let files = manifest["files"].as_array_mut().expect("files array");
    for i in 0..args.count {
        let instance_config = InstanceConfig { seed: base_seed + i as u64, ..config.clone() };
        let realization = generate_instance(&instance_config)?;
        for warning in realization.validation_warnings() {
            eprintln!("instance {i}: {warning}");
        }
        let name = format!("instance_{i:04}.json");
        save_instance(&realization, &args.out.join(&name))?;
        files.push(serde_json::json!({"name": name, "seed": instance_config.seed}));
    }
    std::fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} instances to {}", args.count, args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let policy = PolicyKind::parse(&args.policy)?;
    let run = experiments::evaluate(&policy, &args.instances)?;
    for warning in &run.warnings {
        eprintln!("warning: {warning}");
    }
    let config = InstanceConfig::default();
    emit_report(&run.report, &run.episodes, &config, &args.out, &args.dump_periods)?;
    println!(
        "policy {}: mean inconvenience {:.4} (se {:.4}), mean delay {:.4} days, {} instances",
        run.report.policy,
        run.report.mean_inconvenience,
        run.report.se_inconvenience,
        run.report.mean_delay_days,
        run.report.instances.len()
    );
    if !run.failures.is_empty() {
        for (path, message) in &run.failures {
            eprintln!("failed: {}: {message}", path.display());
        }
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn train_command(args: TrainArgs) -> anyhow::Result<ExitCode> {
    let mut config: TrainConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(iterations) = args.iterations {
        config.iterations = iterations;
    }
    let outcome = train(&config)?;
    for line in &outcome.diagnostics {
        eprintln!("diagnostic: {line}");
    }
    save_model(&outcome.model, &args.out)?;
    let curve_path = args.curve.unwrap_or_else(|| args.out.with_extension("curve.csv"));
    techroute::rl::train::save_curve(&curve_path, &outcome.curve)?;
    println!(
        "trained {} iterations; final sigma {:.4}; model {}",
        config.iterations,
        outcome.model.sigma,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_instances_dir(
    dir: &PathBuf,
) -> anyhow::Result<Vec<techroute::instances::InstanceRealization>> {
    let files = experiments::instance_files(dir)?;
    if files.is_empty() {
        bail!("no instance files found in {}", dir.display());
    }
    let mut realizations = Vec::with_capacity(files.len());
    for path in files {
        let (realization, warnings) = techroute::instances::load_instance(&path)?;
        for warning in warnings {
            eprintln!("warning: {}: {warning}", path.display());
        }
        realizations.push(realization);
    }
    Ok(realizations)
}

fn gridsearch(args: GridSearchArgs) -> anyhow::Result<ExitCode> {
    let realizations = load_instances_dir(&args.instances)?;
    let grid = args.grid.unwrap_or_else(default_alpha_grid);
    let result = grid_search_alpha(&realizations, &grid)?;
    println!("alpha,mean_inconvenience");
    for (alpha, mean) in &result.table {
        println!("{alpha:.2},{mean:.6}");
    }
    println!("best alpha: {:.2}", result.best_alpha);
    Ok(ExitCode::SUCCESS)
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<ExitCode> {
    let model = load_model(&args.model)?;
    let realizations = load_instances_dir(&args.instances)?;
    let table = feature_impact_table(&model, &realizations)?;
    for warning in &table.warnings {
        eprintln!("warning: {warning}");
    }
    let mut text = String::from("feature,below_mean_pct,above_mean_pct\n");
    for row in &table.rows {
        text.push_str(&format!("{},{:.2},{:.2}\n", row.feature, row.below_pct, row.above_pct));
    }
    print!("{text}");
    println!("mean alpha: {:.4} over {} states", table.mean_alpha, table.states);
    if let Some(out) = args.out {
        std::fs::write(out, text)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Randomized spot-checks of the exact oracle: deadline-relaxation
/// monotonicity and the earlier-deadline preference for co-located twins.
fn oracle(args: OracleArgs) -> anyhow::Result<ExitCode> {
    if !args.selftest {
        bail!("nothing to do; pass --selftest");
    }
    let mut rng = StdRng::seed_from_u64(90210);
    let mut pass = true;

    let mut monotone_failures = 0;
    for _ in 0..50 {
        let scenario = random_tiny(&mut rng);
        let base = brute_force_value(&scenario)?;
        let mut relaxed = scenario.clone();
        let which = rng.gen_range(0..relaxed.customers.len());
        relaxed.customers[which].deadline += 1;
        if brute_force_value(&relaxed)? > base + FEASIBILITY_EPS {
            monotone_failures += 1;
        }
    }
    report_check(
        "deadline relaxation never increases the exact value",
        monotone_failures,
        &mut pass,
    );

    let mut twin_failures = 0;
    for _ in 0..50 {
        let mut scenario = random_tiny(&mut rng);
        let twin_task = if rng.gen_bool(0.5) { Task::Easy } else { Task::Advanced };
        let location =
            Point::new(rng.gen::<f64>() * 60.0 - 30.0, rng.gen::<f64>() * 60.0 - 30.0);
        let base_id = scenario.customers.len() as u32;
        for (offset, deadline) in [(1u32, 2u32), (2, 3)] {
            scenario.customers.push(Customer {
                id: CustomerId(base_id + offset),
                location,
                task: twin_task,
                arrival_period: 1,
                deadline,
                visits_so_far: 0,
            });
        }
        let early = scenario.customers.len() - 2;
        let late = scenario.customers.len() - 1;
        let others: Vec<usize> = (0..early).collect();
        // Serving the earlier twin leaves the later one waiting and vice
        // versa; the former can never be worse.
        let mut left_after_early = others.clone();
        left_after_early.push(late);
        let mut left_after_late = others;
        left_after_late.push(early);
        let serve_early = brute_force_post_value(&scenario, 1, &left_after_early, &[])?;
        let serve_late = brute_force_post_value(&scenario, 1, &left_after_late, &[])?;
        if serve_early > serve_late + FEASIBILITY_EPS {
            twin_failures += 1;
        }
    }
    report_check("serving the earlier co-located twin is never worse", twin_failures, &mut pass);

    if pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn report_check(name: &str, failures: u32, pass: &mut bool) {
    if failures == 0 {
        println!("PASS {name}");
    } else {
        println!("FAIL {name} ({failures} violations)");
        *pass = false;
    }
}

fn random_tiny(rng: &mut StdRng) -> TinyScenario {
    let horizon = rng.gen_range(1..=3u32);
    let m = rng.gen_range(1..=2u32);
    let technicians: Vec<Technician> = (0..m)
        .map(|i| Technician {
            id: TechnicianId(i),
            skill: if rng.gen_bool(0.5) { Skill::Regular } else { Skill::Expert },
        })
        .collect();
    let n = rng.gen_range(1..=3u32);
    let customers = (0..n)
        .map(|i| Customer {
            id: CustomerId(i + 1),
            location: Point::new(rng.gen::<f64>() * 120.0 - 60.0, rng.gen::<f64>() * 120.0 - 60.0),
            task: if rng.gen_bool(0.5) { Task::Easy } else { Task::Advanced },
            arrival_period: rng.gen_range(1..=horizon.min(2)),
            deadline: rng.gen_range(1..=4),
            visits_so_far: 0,
        })
        .collect();
    TinyScenario {
        horizon,
        technicians,
        availability: (0..horizon)
            .map(|_| (0..m).map(|_| rng.gen_bool(0.85)).collect())
            .collect(),
        work_limit_minutes: rng.gen_range(150.0..420.0),
        speed_kmh: 60.0,
        service_minutes: 30.0,
        depot: Point::new(0.0, 0.0),
        rework_prob: 0.5,
        eta: 1.1,
        customers,
    }
}
