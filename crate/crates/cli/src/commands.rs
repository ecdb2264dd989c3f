use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use log::info;
use spikemon::detector::MatrixMonitor;
use spikemon::eigen::EigenOptions;
use spikemon::experiments::{run_pfa, run_power, write_results, ExperimentPlan, Thresholds};
use spikemon::ingest::{
    center_by_baseline, deseasonalize, fit_seasonal, outer_product_stream, resolve_missing,
    MissingPolicy, PanelSeries,
};
use spikemon::io::{write_quantile_table_to, MatrixStreamWriter};
use spikemon::quantiles::{quantiles_cached, QuantileRequest, QuantileTable};
use spikemon::rng::mix64;
use spikemon::synth::{DiscreteLaw, SignalLaw, SignalSpec, StreamGenerator, WignerStreamSpec};
use spikemon::{read_matrix_stream, write_matrix_stream, MonitorOptions};

use crate::exit::{usage, Outcome};
use crate::{
    Cli, Command, ExperimentArgs, ExperimentCommand, IngestCommand, MonitorArgs, QuantilesArgs,
    RegimeArg, SimArgs, SynthArgs,
};

pub fn run(cli: Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match cli.command {
        Command::Quantiles(args) => quantiles(args, seed),
        Command::Monitor(args) => monitor(args, seed),
        Command::Synth(args) => synth(args, seed),
        Command::Experiment(ExperimentCommand::Pfa(args)) => experiment(args, None, seed),
        Command::Experiment(ExperimentCommand::Power {
            common,
            delta,
            kstar,
        }) => experiment(common, Some((delta, kstar)), seed),
        Command::Ingest(cmd) => ingest(cmd),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn quantiles(args: QuantilesArgs, seed: u64) -> Result<Outcome> {
    let req = QuantileRequest {
        m: args.m,
        horizon: args.horizon,
        alphas: args.alpha,
        replications: args.reps,
        seed,
    };
    let table = quantiles_cached(&req, &args.out)
        .with_context(|| format!("quantile table {}", args.out.display()))?;
    let stdout = io::stdout();
    write_quantile_table_to(&table, &mut stdout.lock())?;
    Ok(Outcome::Done)
}

/// Exact-`m` critical values from the cache, simulating whatever is missing.
fn critical_values(sim: &SimArgs, m: usize, alphas: &[f64], seed: u64) -> Result<QuantileTable> {
    let cache = if sim.table.exists() {
        QuantileTable::read(&sim.table)
            .with_context(|| format!("quantile table {}", sim.table.display()))?
    } else {
        QuantileTable::default()
    };
    let mut out = QuantileTable::default();
    let mut missing = Vec::new();
    for &alpha in alphas {
        let best = cache
            .rows()
            .iter()
            .filter(|r| r.m == m && r.horizon == sim.horizon && r.alpha == alpha)
            .max_by_key(|r| r.replications);
        match best {
            Some(r) => out.insert(*r),
            None => missing.push(alpha),
        }
    }
    if !missing.is_empty() {
        info!(
            "simulating critical values for m = {m}, T = {}, {} replications",
            sim.horizon, sim.reps
        );
        let req = QuantileRequest {
            m,
            horizon: sim.horizon,
            alphas: missing,
            replications: sim.reps,
            seed,
        };
        let fresh = quantiles_cached(&req, &sim.table)
            .with_context(|| format!("quantile table {}", sim.table.display()))?;
        out.merge(&fresh);
    }
    Ok(out)
}

fn monitor(args: MonitorArgs, seed: u64) -> Result<Outcome> {
    let train = read_matrix_stream(&args.train)
        .with_context(|| format!("training stream {}", args.train.display()))?;
    let stream = read_matrix_stream(&args.stream)
        .with_context(|| format!("monitoring stream {}", args.stream.display()))?;
    let m = train.len();
    let threshold = match args.threshold {
        Some(q) => q,
        None => {
            let t = critical_values(&args.sim, m, &[args.alpha], seed)?;
            t.threshold_for(args.alpha, Some(m))
                .ok_or_else(|| anyhow::anyhow!("no critical value for alpha = {}", args.alpha))?
        }
    };
    let mut mon = MatrixMonitor::train(&train, threshold, EigenOptions::default())?;
    let opts = MonitorOptions {
        max_k: args.max_k,
        trace_after_alarm: args.keep_going,
    };
    let verdict = mon.run(&stream, opts)?;

    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        writeln!(w, "k,gamma")?;
        for (k, g) in &verdict.gamma_trace {
            writeln!(w, "{k},{}", spikemon::io::format_f64(*g))?;
        }
        w.flush()?;
    }

    let state = mon.state();
    println!("m = {m}, n = {}, threshold = {threshold}", state.n());
    if let Some(g) = verdict.max_gamma() {
        println!(
            "max gamma = {g:.4} over {} steps",
            verdict.gamma_trace.len()
        );
    }
    match verdict.k_hat {
        Some(k) => {
            println!("alarm at k = {k}");
            Ok(Outcome::Alarm)
        }
        None => {
            println!("no alarm");
            Ok(Outcome::Done)
        }
    }
}

fn parse_law(s: &str) -> Result<SignalLaw> {
    match s.to_ascii_lowercase().as_str() {
        "uniform" => Ok(SignalLaw::Uniform01),
        "beta" | "beta24" => Ok(SignalLaw::Beta24),
        other => {
            let v: f64 = other.parse().map_err(|_| {
                usage(format!(
                    "unknown law `{s}`; use uniform, beta or a number in [0, 1]"
                ))
            })?;
            DiscreteLaw::constant(v)
                .map(SignalLaw::Table)
                .map_err(|e| usage(e.to_string()))
        }
    }
}

fn synth(args: SynthArgs, seed: u64) -> Result<Outcome> {
    if args.len < args.m {
        return Err(usage(format!(
            "--len {} is shorter than --m {}",
            args.len, args.m
        )));
    }
    let law = parse_law(&args.law)?;
    let signal = match args.regime {
        RegimeArg::Sub => SignalSpec::subcritical(law),
        RegimeArg::Super => SignalSpec::supercritical(law, args.delta, args.kstar),
    };
    let mut wspec = WignerStreamSpec::new(args.n, seed, mix64(seed));
    wspec.burn_in = args.burn_in;
    let generator = StreamGenerator::new(&wspec, &signal, args.m)?;

    let mut all = args
        .out
        .as_deref()
        .map(create)
        .transpose()?
        .map(MatrixStreamWriter::new)
        .transpose()?;
    let mut train = args
        .train_out
        .as_deref()
        .map(create)
        .transpose()?
        .map(MatrixStreamWriter::new)
        .transpose()?;
    let mut rest = args
        .stream_out
        .as_deref()
        .map(create)
        .transpose()?
        .map(MatrixStreamWriter::new)
        .transpose()?;
    for (i, mat) in generator.take(args.len).enumerate() {
        if let Some(w) = all.as_mut() {
            w.push(&mat)?;
        }
        let part = if i < args.m {
            train.as_mut()
        } else {
            rest.as_mut()
        };
        if let Some(w) = part {
            w.push(&mat)?;
        }
    }
    for w in [all, train, rest].into_iter().flatten() {
        w.finish()?.flush()?;
    }
    Ok(Outcome::Done)
}

fn experiment(
    args: ExperimentArgs,
    power: Option<(Vec<f64>, Vec<usize>)>,
    seed: u64,
) -> Result<Outcome> {
    let law = parse_law(&args.law)?;
    let mut plan = ExperimentPlan::new(
        args.m.clone(),
        args.n.clone(),
        args.alpha.clone(),
        law,
        args.reps,
        seed,
    );
    plan.horizon_factor = args.horizon_factor;
    plan.burn_in = args.burn_in;
    if let Some((delta, kstar)) = &power {
        plan = plan.with_power_grid(delta.clone(), kstar.clone());
    }

    let thresholds = match args.threshold {
        Some(q) => Thresholds::Constant(q),
        None => {
            let mut table = QuantileTable::default();
            for &m in &args.m {
                let sim = SimArgs {
                    horizon: args.horizon.unwrap_or(args.horizon_factor * m),
                    reps: args.quantile_reps,
                    table: args.table.clone(),
                };
                table.merge(&critical_values(&sim, m, &args.alpha, seed)?);
            }
            Thresholds::Table(table)
        }
    };
    let rows = match power {
        None => run_pfa(&plan, &thresholds)?,
        Some(_) => run_power(&plan, &thresholds)?,
    };
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            write_results(&rows, &mut w)?;
            w.flush()?;
        }
        None => write_results(&rows, &mut io::stdout().lock())?,
    }
    Ok(Outcome::Done)
}

fn policy(interpolate: bool) -> MissingPolicy {
    if interpolate {
        MissingPolicy::Interpolate
    } else {
        MissingPolicy::Error
    }
}

fn read_panel(path: &Path) -> Result<PanelSeries> {
    PanelSeries::read(path).with_context(|| format!("panel {}", path.display()))
}

fn ingest(cmd: IngestCommand) -> Result<Outcome> {
    match cmd {
        IngestCommand::Deseasonalize {
            history,
            series,
            window,
            period,
            interpolate,
            out,
        } => {
            let history = resolve_missing(&read_panel(&history)?, policy(interpolate))?;
            let mut series = read_panel(&series)?;
            if interpolate {
                series = resolve_missing(&series, MissingPolicy::Interpolate)?;
            }
            let model = fit_seasonal(&history, period, window)?;
            deseasonalize(&series, &model)?.write(&out)?;
        }
        IngestCommand::Outer {
            series,
            interpolate,
            out,
        } => {
            let series = resolve_missing(&read_panel(&series)?, policy(interpolate))?;
            write_matrix_stream(&outer_product_stream(&series)?, &out)?;
        }
        IngestCommand::Center {
            stream,
            baseline,
            out,
        } => {
            let matrices = read_matrix_stream(&stream)
                .with_context(|| format!("matrix stream {}", stream.display()))?;
            write_matrix_stream(&center_by_baseline(&matrices, baseline)?, &out)?;
        }
    }
    Ok(Outcome::Done)
}
