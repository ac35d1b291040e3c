use anyhow::{anyhow, bail, Context};
use chargecap::lolp::lolp_exact;
use chargecap::{
    capacity_exact, lolp, simulate, simulate_profile, solve_equilibrium_with, solve_profile,
    LolpVector, QosTargets, Scenario, Severity, SimConfig, SimResult, SolverOptions,
};
use rayon::prelude::*;

use crate::config::ConfigFile;
use crate::grid::Grid;
use crate::table::{per_class, timestamp, Cell, Output, RunManifest, Table};
use crate::{report_error, report_warning, Command, Common, Failure, Split};

const DEFAULT_HORIZON: f64 = 1e4;
const DEFAULT_REPLICATIONS: usize = 10;
const CHECK_STDERRS: f64 = 3.0;

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { common } => validate(&common),
        Command::Lolp {
            common,
            sweep_lambda,
            split,
            sweep_capacity,
            exact,
        } => cmd_lolp(&common, sweep_lambda, split, sweep_capacity, exact),
        Command::Provision {
            common,
            delta,
            delta_grid,
            strict_delta,
        } => cmd_provision(&common, delta, delta_grid, strict_delta),
        Command::Price {
            common,
            objective,
            init,
            customers,
        } => cmd_price(&common, objective.into(), init, customers),
        Command::Simulate {
            common,
            horizon,
            warmup,
            reps,
            service,
            check,
        } => cmd_simulate(
            &common,
            horizon,
            warmup,
            reps,
            service.map(Into::into),
            check,
        ),
    }
}

struct Loaded {
    config: ConfigFile,
    digest: String,
}

impl Loaded {
    fn manifest(&self, subcommand: &str, common: &Common, seed: Option<u64>) -> RunManifest {
        RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: common.config.clone(),
            input_digest: self.digest.clone(),
            seed,
            arguments: std::env::args().skip(1).collect(),
            timestamp: timestamp(),
            outputs: Vec::new(),
        }
    }
}

/// Reads the config and prints its diagnostics; any error-level one aborts.
fn load(common: &Common) -> Result<Loaded, Failure> {
    let (config, digest) = ConfigFile::load(&common.config)?;
    let diagnostics = config.diagnostics();
    let mut errors = 0;
    for d in &diagnostics {
        match d.severity {
            Severity::Error => {
                errors += 1;
                report_error(&d.message);
            }
            Severity::Warning => report_warning(&d.message),
        }
    }
    if errors > 0 {
        return Err(Failure::Input(anyhow!(
            "{}: {errors} problem(s) in config",
            common.config.display()
        )));
    }
    Ok(Loaded { config, digest })
}

fn output(common: &Common) -> Output<'_> {
    Output {
        dir: common.out.as_deref(),
        format: common.format,
    }
}

fn validate(common: &Common) -> Result<(), Failure> {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let s = cfg.scenario(common.capacity)?;
    let mut extras = Vec::new();
    if cfg.qos.is_some() {
        extras.push("qos targets".to_string());
    }
    if cfg.weights.is_some() {
        extras.push("utility weights".to_string());
    }
    if let Some(p) = &cfg.profile {
        extras.push(format!("{}-period profile", p.len()));
    }
    let extras = if extras.is_empty() {
        String::new()
    } else {
        format!("; {}", extras.join(", "))
    };
    println!(
        "ok: {} classes, capacity {}{extras}",
        s.num_classes(),
        s.capacity
    );
    Ok(())
}

fn split_rates(total: f64, base: &[f64], split: Split) -> anyhow::Result<Vec<f64>> {
    let n = base.len() as f64;
    match split {
        Split::Equal => Ok(vec![total / n; base.len()]),
        Split::Proportional => {
            let sum: f64 = base.iter().sum();
            if sum <= 0.0 {
                bail!("proportional split needs a positive total rate in the config");
            }
            Ok(base.iter().map(|l| l * total / sum).collect())
        }
    }
}

fn beta_of(s: &Scenario, exact: bool) -> anyhow::Result<LolpVector> {
    if exact {
        Ok(lolp_exact(s)?)
    } else {
        Ok(lolp(s))
    }
}

fn cmd_lolp(
    common: &Common,
    sweep_lambda: Option<Grid>,
    split: Split,
    sweep_capacity: Option<Grid>,
    exact: bool,
) -> Result<(), Failure> {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let base = cfg.scenario(common.capacity)?;
    let n = base.num_classes();

    let profile = cfg.profile();
    if profile.is_some() && (sweep_lambda.is_some() || sweep_capacity.is_some()) {
        return Err(anyhow!("sweeps cannot be combined with a profile in the config").into());
    }

    // (period, scenario) cells in output order
    let cells: Vec<(Option<usize>, Scenario)> = match &profile {
        Some(p) => p
            .scenarios(base.classes())?
            .into_iter()
            .enumerate()
            .map(|(k, s)| (Some(k), s))
            .collect(),
        None => {
            let mut capacities: Vec<u32> = match sweep_capacity {
                Some(g) => g
                    .points()
                    .iter()
                    .map(|c| c.round().max(0.0) as u32)
                    .collect(),
                None => vec![base.capacity],
            };
            capacities.dedup();
            let rates: Vec<Vec<f64>> = match sweep_lambda {
                Some(g) => g
                    .points()
                    .iter()
                    .map(|&t| split_rates(t, &base.lambdas(), split))
                    .collect::<anyhow::Result<_>>()?,
                None => vec![base.lambdas()],
            };
            let mut cells = Vec::new();
            for &c in &capacities {
                for r in &rates {
                    cells.push((None, base.with_capacity(c).with_lambdas(r)?));
                }
            }
            cells
        }
    };

    let betas: Vec<LolpVector> = cells
        .par_iter()
        .map(|(_, s)| beta_of(s, exact))
        .collect::<anyhow::Result<_>>()?;

    let mut columns = Vec::new();
    if profile.is_some() {
        columns.push("period".to_string());
    }
    columns.extend(["capacity".to_string(), "total_lambda".to_string()]);
    columns.extend(per_class("lambda", n));
    columns.extend(per_class("beta", n));
    let mut table = Table::new(columns);
    for ((period, s), beta) in cells.iter().zip(&betas) {
        let mut row = Vec::new();
        if let Some(k) = period {
            row.push(Cell::from(*k));
        }
        let l = s.lambdas();
        row.push(Cell::from(s.capacity));
        row.push(Cell::from(l.iter().sum::<f64>()));
        row.extend(l.into_iter().map(Cell::from));
        row.extend(beta.beta.iter().copied().map(Cell::from));
        table.push(row);
    }
    output(common).emit("lolp", &table, loaded.manifest("lolp", common, common.seed))?;
    Ok(())
}

fn cmd_provision(
    common: &Common,
    delta: Option<Vec<f64>>,
    delta_grid: Option<Grid>,
    strict_delta: f64,
) -> Result<(), Failure> {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let s = cfg.scenario(common.capacity)?;
    let classes = s.classes();
    let n = classes.len();

    let target_sets: Vec<Vec<f64>> = match (delta, delta_grid) {
        (Some(d), _) => vec![d],
        (None, Some(g)) => {
            // every combination, first class varying slowest
            let axis = g.points();
            let mut sets = vec![Vec::new()];
            for _ in 0..n {
                sets = sets
                    .into_iter()
                    .flat_map(|prefix: Vec<f64>| {
                        axis.iter().map(move |&d| {
                            let mut v = prefix.clone();
                            v.push(d);
                            v
                        })
                    })
                    .collect();
            }
            sets
        }
        (None, None) => match &cfg.qos {
            Some(q) => vec![q.clone()],
            None => {
                return Err(anyhow!(
                    "no targets: give `qos` in the config, --delta or --delta-grid"
                )
                .into())
            }
        },
    };
    let targets: Vec<QosTargets> = target_sets
        .iter()
        .map(|d| {
            if d.len() != n {
                bail!("{} targets for {n} classes", d.len());
            }
            Ok(QosTargets::new(d.clone())?)
        })
        .collect::<anyhow::Result<_>>()?;

    let strict = QosTargets::uniform(strict_delta, n)?;
    let strict_capacity = capacity_exact(classes, &strict)
        .context("provisioning the strict reference design")?
        .capacity_exact;

    let results: Vec<_> = targets
        .par_iter()
        .map(|t| capacity_exact(classes, t))
        .collect();

    let mut columns: Vec<String> = per_class("delta", n).collect();
    columns.extend(
        [
            "capacity_exact",
            "capacity_asymptotic",
            "dominant_class",
            "x_star",
        ]
        .map(String::from),
    );
    columns.extend(per_class("beta", n));
    columns.extend(["savings_pct", "error"].map(String::from));
    let mut table = Table::new(columns);
    let mut failures = 0;
    for (d, r) in target_sets.iter().zip(&results) {
        let mut row: Vec<Cell> = d.iter().copied().map(Cell::from).collect();
        match r {
            Ok(p) => {
                row.push(Cell::from(p.capacity_exact));
                row.push(Cell::from(p.capacity_asymptotic));
                row.push(Cell::from(p.dominant_class + 1));
                row.push(Cell::from(p.x_star));
                row.extend(p.beta.beta.iter().copied().map(Cell::from));
                let savings = if strict_capacity == 0 {
                    0.0
                } else {
                    100.0 * (1.0 - f64::from(p.capacity_exact) / f64::from(strict_capacity))
                };
                row.push(Cell::from(savings));
                row.push(Cell::Empty);
            }
            Err(e) => {
                failures += 1;
                row.extend(std::iter::repeat(Cell::Empty).take(5 + n));
                row.push(Cell::Text(e.to_string()));
            }
        }
        table.push(row);
    }
    output(common).emit(
        "provision",
        &table,
        loaded.manifest("provision", common, common.seed),
    )?;
    if failures > 0 {
        return Err(Failure::Check(format!(
            "{failures} target set(s) could not be provisioned"
        )));
    }
    Ok(())
}

fn cmd_price(
    common: &Common,
    objective: chargecap::Objective,
    init: Option<Vec<f64>>,
    customers: Option<usize>,
) -> Result<(), Failure> {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let s = cfg.scenario(common.capacity)?;
    let n = s.num_classes();
    let weights = cfg
        .weights()
        .ok_or_else(|| anyhow!("pricing needs `weights` (omega, theta) in the config"))??;
    let opts = SolverOptions {
        objective,
        ..SolverOptions::default()
    };
    if customers == Some(0) {
        return Err(anyhow!("--customers must be at least 1").into());
    }

    let profile = cfg.profile();
    let results = match &profile {
        Some(p) => solve_profile(s.classes(), &weights, p, &opts)?,
        None => vec![solve_equilibrium_with(
            &s,
            &weights,
            init.as_deref(),
            &opts,
        )?],
    };

    let mut columns = Vec::new();
    if profile.is_some() {
        columns.push("period".to_string());
    }
    columns.push("capacity".to_string());
    columns.extend(per_class("lambda", n));
    columns.extend(per_class("price", n));
    columns.extend(per_class("beta", n));
    columns.extend(
        [
            "welfare",
            "gross_utility",
            "converged",
            "iterations",
            "gradient_norm",
        ]
        .map(String::from),
    );
    if customers.is_some() {
        columns.extend(per_class("lambda_per_customer", n));
    }
    let mut table = Table::new(columns);
    let mut unconverged = 0;
    for (k, r) in results.iter().enumerate() {
        let mut row = Vec::new();
        if profile.is_some() {
            row.push(Cell::from(k));
        }
        row.push(Cell::from(r.capacity));
        row.extend(r.lambda_star.iter().copied().map(Cell::from));
        row.extend(r.prices.iter().copied().map(Cell::from));
        row.extend(r.beta_star.beta.iter().copied().map(Cell::from));
        row.push(Cell::from(r.welfare));
        row.push(Cell::from(r.gross_utility));
        row.push(Cell::from(r.converged()));
        row.push(Cell::from(r.convergence.iterations));
        row.push(Cell::from(r.convergence.gradient_norm));
        if let Some(c) = customers {
            row.extend(r.per_customer(c).into_iter().map(Cell::from));
        }
        unconverged += usize::from(!r.converged());
        table.push(row);
    }
    output(common).emit(
        "price",
        &table,
        loaded.manifest("price", common, common.seed),
    )?;
    if unconverged > 0 {
        return Err(Failure::Check(format!(
            "solver did not converge for {unconverged} row(s)"
        )));
    }
    Ok(())
}

fn cmd_simulate(
    common: &Common,
    horizon: Option<f64>,
    warmup: Option<f64>,
    reps: Option<usize>,
    service: Option<chargecap::ServiceDistribution>,
    check: bool,
) -> Result<(), Failure> {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let s = cfg.scenario(common.capacity)?;
    let file = cfg.simulation.clone().unwrap_or_default();
    let horizon = horizon.or(file.horizon).unwrap_or(DEFAULT_HORIZON);
    let sim = SimConfig {
        horizon,
        warmup: warmup.or(file.warmup).unwrap_or(horizon / 10.0),
        seed: common.seed.or(file.seed).unwrap_or(0),
        replications: reps.or(file.replications).unwrap_or(DEFAULT_REPLICATIONS),
        service: service.or(file.service).unwrap_or_default(),
    };
    sim.validate()?;

    let profile = cfg.profile();
    let (scenarios, results): (Vec<Scenario>, Vec<SimResult>) = match &profile {
        Some(p) => (
            p.scenarios(s.classes())?,
            simulate_profile(s.classes(), p, &sim)?,
        ),
        None => (vec![s.clone()], vec![simulate(&s, &sim)?]),
    };

    let mut columns = Vec::new();
    if profile.is_some() {
        columns.push("period".to_string());
    }
    columns.extend(
        [
            "capacity",
            "class",
            "b",
            "lambda",
            "arrivals",
            "blocked",
            "beta_hat",
            "stderr",
            "utilization",
        ]
        .map(String::from),
    );
    if check {
        columns.extend(["lolp", "z", "within"].map(String::from));
    }
    let mut table = Table::new(columns);
    let mut outside = 0;
    for (k, (sc, r)) in scenarios.iter().zip(&results).enumerate() {
        let analytic = check.then(|| lolp(sc));
        for (j, c) in sc.classes().iter().enumerate() {
            let mut row = Vec::new();
            if profile.is_some() {
                row.push(Cell::from(k));
            }
            row.push(Cell::from(sc.capacity));
            row.push(Cell::from(j + 1));
            row.push(Cell::from(c.b));
            row.push(Cell::from(c.lambda));
            row.push(Cell::from(r.counts[j].arrivals));
            row.push(Cell::from(r.counts[j].blocked));
            row.push(Cell::from(r.beta_hat[j]));
            row.push(Cell::from(r.stderr[j]));
            row.push(Cell::from(r.utilization));
            if let Some(beta) = &analytic {
                let diff = r.beta_hat[j] - beta[j];
                let z = if diff == 0.0 { 0.0 } else { diff / r.stderr[j] };
                let within = z.abs() <= CHECK_STDERRS;
                outside += usize::from(!within);
                row.push(Cell::from(beta[j]));
                row.push(Cell::from(z));
                row.push(Cell::from(within));
            }
            table.push(row);
        }
    }
    output(common).emit(
        "simulate",
        &table,
        loaded.manifest("simulate", common, Some(sim.seed)),
    )?;
    if outside > 0 {
        return Err(Failure::Check(format!(
            "{outside} estimate(s) more than {CHECK_STDERRS} standard errors from the analytic LoLP"
        )));
    }
    Ok(())
}
