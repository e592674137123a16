//! `twreach`: simulate, check and sweep the tap-withdrawal circuit.
//!
//! Exit codes: 0 completed, 1 property unknown or budget-limited partial
//! result, 2 configuration or I/O error, 3 numerical failure (including a
//! failed soundness suite).

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use twreach::circuit::{classify_trajectory, g_to_p, load_circuit, parse_circuit, Circuit, ParamAxis, StimulusSchedule};
use twreach::odesim::{simulate, SimConfig};
use twreach::output::{self, config_hash, Header};
use twreach::properties::evaluate;
use twreach::reach::{cover_count, reach_cell, Cell, ReachConfig, VerdictKind};
use twreach::sweep::{run_prepared, trend_check, Experiment, Prepared, RegionReport, RunOptions};
use twreach::validate;
use twreach::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "twreach", version, about = "Reachability and parameter synthesis for the tap-withdrawal circuit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Circuit definition (TOML). Defaults to the shipped circuit.
    #[arg(long, global = true)]
    circuit: Option<PathBuf>,
    /// Experiment file (TOML). `sweep` and `validate` accept several.
    #[arg(long, global = true)]
    experiment: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for cell evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Maximum number of cell simulations.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Seed for the Monte-Carlo suites.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cell half-width on each parameter axis (p units).
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Comma-separated δ schedule overriding the experiment's.
    #[arg(long, global = true, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    /// Print the plan and cell counts, write nothing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Remove every stimulus pulse from the circuit.
    #[arg(long, global = true)]
    no_stimulus: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Debug, Clone)]
struct PointArgs {
    /// Parameter point p = 10/g_gap, one value per experiment axis.
    #[arg(long, value_delimiter = ',', conflicts_with = "g")]
    point: Option<Vec<f64>>,
    /// Parameter point given as g_gap values.
    #[arg(long, value_delimiter = ',')]
    g: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validated simulation from the equilibrium, with the behavior label.
    Simulate {
        #[command(flatten)]
        point: PointArgs,
        /// Horizon when no experiment is given (s).
        #[arg(long, default_value_t = 0.4)]
        horizon: f64,
    },
    /// Reach tube for one parameter cell.
    Reach {
        #[command(flatten)]
        point: PointArgs,
    },
    /// Reach tube plus a verdict for every behavior of the experiment.
    Check {
        #[command(flatten)]
        point: PointArgs,
    },
    /// Refine the experiment's parameter box and report certified regions.
    Sweep,
    /// Classify one trajectory by the signed readout integral.
    Classify {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = 0.4)]
        horizon: f64,
    },
    /// Monte-Carlo soundness suites.
    Validate {
        /// Trajectory pairs per system in the discrepancy suite.
        #[arg(long, default_value_t = 500)]
        pairs: usize,
        /// Random parameter cells in the containment suite.
        #[arg(long, default_value_t = 20)]
        cells: usize,
        /// Trajectories per cell.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Also sweep each experiment and check its regions against the classifier.
        #[arg(long)]
        regions: bool,
        /// Sampled points per certified region.
        #[arg(long, default_value_t = 50)]
        per_region: usize,
    },
}

/// Loaded inputs plus the text they came from, for the config hash.
struct Inputs {
    circuit: Circuit,
    circuit_text: String,
    experiments: Vec<(Experiment, String)>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))
}

fn load(common: &Common) -> Result<Inputs> {
    let (mut circuit, circuit_text) = match &common.circuit {
        Some(p) => (load_circuit(p)?, read(p)?),
        None => (parse_circuit(twreach::DEFAULT_CIRCUIT)?, twreach::DEFAULT_CIRCUIT.to_string()),
    };
    if common.no_stimulus {
        circuit = circuit.with_stimulus(StimulusSchedule::none())?;
    }
    let mut experiments = Vec::new();
    for p in &common.experiment {
        experiments.push((Experiment::load(p)?, read(p)?));
    }
    if common.workers == 0 {
        return Err(Error::config("--workers must be at least 1"));
    }
    if let Some(d) = common.delta {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::config("--delta must be finite and nonnegative"));
        }
    }
    Ok(Inputs { circuit, circuit_text, experiments })
}

fn run_options(common: &Common, record_rounds: bool) -> RunOptions {
    RunOptions { workers: common.workers, budget: common.budget, schedule: common.schedule.clone(), record_rounds }
}

fn header(inputs: &Inputs, common: &Common, command: &str, extra: &[String]) -> Header {
    let mut parts: Vec<String> = vec![command.to_string(), inputs.circuit_text.clone()];
    parts.extend(inputs.experiments.iter().map(|e| e.1.clone()));
    parts.push(format!(
        "budget={:?} seed={} delta={:?} schedule={:?} no_stimulus={}",
        common.budget, common.seed, common.delta, common.schedule, common.no_stimulus
    ));
    parts.extend(extra.iter().cloned());
    let refs: Vec<&str> = parts.iter().map(|s| s.as_str()).collect();
    Header::new(config_hash(&refs), common.schedule.clone().unwrap_or_default()).with("command", command)
}

fn single_experiment<'a>(inputs: &'a Inputs, cmd: &str) -> Result<Option<&'a Experiment>> {
    match inputs.experiments.len() {
        0 => Ok(None),
        1 => Ok(Some(&inputs.experiments[0].0)),
        _ => Err(Error::config(format!("{cmd} takes a single --experiment"))),
    }
}

fn required_experiment<'a>(inputs: &'a Inputs, cmd: &str) -> Result<&'a Experiment> {
    single_experiment(inputs, cmd)?.ok_or_else(|| Error::config(format!("{cmd} needs --experiment")))
}

fn parse_point(pa: &PointArgs, axes: &[ParamAxis]) -> Result<Option<Vec<f64>>> {
    let p = match (&pa.point, &pa.g) {
        (Some(p), _) => p.clone(),
        (None, Some(g)) => g.iter().map(|&g| g_to_p(g)).collect::<Result<_>>()?,
        (None, None) => return Ok(None),
    };
    if p.len() != axes.len() {
        return Err(Error::config(format!("point has {} values for {} axes", p.len(), axes.len())));
    }
    for (v, a) in p.iter().zip(axes) {
        if !(*v >= a.lo && *v <= a.hi) {
            return Err(Error::config(format!("p_{} = {v} outside the axis range [{}, {}]", a.neuron, a.lo, a.hi)));
        }
    }
    Ok(Some(p))
}

fn state_names(prep: &Prepared) -> Vec<String> {
    let mut n = prep.circuit.conn.names.clone();
    n.extend(prep.augmented.axes.iter().map(|a| format!("p_{}", a.neuron)));
    n
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut dyn std::io::Write) -> Result<()>) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(&path, buf)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn cmd_simulate(common: &Common, inputs: &Inputs, pa: &PointArgs, horizon: f64, classify_only: bool) -> Result<u8> {
    let exp = single_experiment(inputs, "simulate")?;
    let (field, x0, names, onset, ava, avb, grace, threshold, sim): (Box<dyn twreach::field::VectorField>, _, _, _, _, _, _, _, _) =
        match exp {
            Some(e) => {
                let prep = Prepared::new(&inputs.circuit, e, &run_options(common, false))?;
                let p = parse_point(pa, &e.axes)?
                    .ok_or_else(|| Error::config("give --point or --g for the experiment axes"))?;
                let names = state_names(&prep);
                let x0 = prep.state(&p);
                let sim = SimConfig::new(e.tau, e.eps, e.horizon);
                (Box::new(prep.augmented.clone()), x0, names, prep.onset, prep.ava, prep.avb, e.grace, e.classifier_threshold, sim)
            }
            None => {
                if pa.point.is_some() || pa.g.is_some() {
                    return Err(Error::config("--point needs an --experiment that defines the axes"));
                }
                let c = inputs.circuit.with_equilibrium()?;
                let (ava, avb) = c.readouts()?;
                let onset = c.params.stim.onset().unwrap_or(0.0);
                let x0 = c.params.v_eq.clone();
                let names = c.conn.names.clone();
                let sim = SimConfig::new(0.005, 1e-6, horizon);
                (Box::new(c), x0, names, onset, ava, avb, twreach::properties::DEFAULT_GRACE, 5e-5, sim)
            }
        };
    sim.validate()?;
    if common.dry_run {
        println!("dry run: would simulate {} states to t = {} s", x0.len(), sim.horizon);
        return Ok(0);
    }
    let class = classify_trajectory(field.as_ref(), &x0, sim.horizon, ava, avb, onset, grace, threshold)?;
    println!(
        "classification: {} (integral {:.6e} V*s, stopped at t = {:.4} s)",
        class.behavior, class.integral, class.stop
    );
    log::info!("integral {:e}", class.integral);
    if classify_only {
        return Ok(0);
    }
    let trace = simulate(field.as_ref(), &x0, &sim)?;
    let h = header(inputs, common, "simulate", &[format!("{:?}", pa.point), format!("{:?}", pa.g), horizon.to_string()])
        .with("classification", class.behavior)
        .with("integral", class.integral);
    write_file(&common.out, "trace.csv", |w| output::write_trace(w, &h, &trace, &names))?;
    Ok(0)
}

fn point_cell(prep: &Prepared, p: &[f64], delta: f64) -> Cell {
    let nv = prep.n_voltage();
    let mut radius = vec![0.0; nv];
    radius.extend(std::iter::repeat_n(delta, p.len()));
    Cell { center: prep.state(p), radius }
}

fn cmd_reach(common: &Common, inputs: &Inputs, pa: &PointArgs, with_check: bool) -> Result<u8> {
    let name = if with_check { "check" } else { "reach" };
    let exp = required_experiment(inputs, name)?;
    let prep = Prepared::new(&inputs.circuit, exp, &run_options(common, false))?;
    let p = parse_point(pa, &exp.axes)?.ok_or_else(|| Error::config("give --point or --g"))?;
    let delta = common.delta.unwrap_or(0.0);
    let cell = point_cell(&prep, &p, delta);
    if common.dry_run {
        println!("dry run: one cell {cell}, {} behaviors", prep.properties.len());
        return Ok(0);
    }
    let cfg = ReachConfig::new(SimConfig::new(exp.tau, exp.eps, exp.horizon));
    let tube = reach_cell(&cell, &prep.augmented, &cfg)?;
    let names = state_names(&prep);
    let extra = [format!("{p:?}"), delta.to_string()];
    let mut h = header(inputs, common, name, &extra).with("cell", &cell);
    let mut status = 0;
    let mut verdicts = Vec::new();
    if with_check {
        for prop in &prep.properties {
            let v = evaluate(&tube, prop)?;
            println!("{}: {}", prop.kind, v.kind);
            if v.kind == VerdictKind::Unknown {
                status = 1;
            }
            h = h.with(prop.kind.as_str(), v.kind);
            verdicts.push((prop.kind, v.kind));
        }
    }
    println!("tube: {} segments, scaled initial radius {:.3e}, max bloat {:.3e}", tube.segments.len(), tube.delta,
        tube.beta_max.iter().cloned().fold(0.0, f64::max));
    write_file(&common.out, "tube.csv", |w| output::write_tube(w, &h, &tube, &names))?;
    if with_check {
        let bands = vec![names[prep.ava].clone(), names[prep.avb].clone()];
        let idx = [prep.ava, prep.avb];
        let mut proj = tube.clone();
        for (b, _) in &mut proj.segments {
            *b = idx.iter().map(|&i| b[i]).collect();
        }
        write_file(&common.out, "bands.csv", |w| output::write_tube(w, &h, &proj, &bands))?;
    }
    Ok(status)
}

fn cmd_sweep(common: &Common, inputs: &Inputs) -> Result<u8> {
    if inputs.experiments.is_empty() {
        return Err(Error::config("sweep needs at least one --experiment"));
    }
    let opts = run_options(common, true);
    let mut preps = Vec::new();
    for (e, _) in &inputs.experiments {
        preps.push(Prepared::new(&inputs.circuit, e, &opts)?);
    }
    if common.dry_run {
        for ((e, _), prep) in inputs.experiments.iter().zip(&preps) {
            let first = prep.initial_cells();
            let last = cover_count(&prep.theta, *prep.schedule.last().unwrap());
            println!(
                "dry run: {}: {} initial cells at delta {}, at most {} at delta {}, budget {}{}",
                e.name,
                first,
                prep.schedule[0],
                last,
                prep.schedule.last().unwrap(),
                prep.budget,
                if first > prep.budget { " (initial cover exceeds budget)" } else { "" }
            );
        }
        return Ok(0);
    }
    let mut reports: Vec<RegionReport> = Vec::new();
    let mut status = 0;
    for ((e, text), prep) in inputs.experiments.iter().zip(&preps) {
        let report = run_prepared(prep, e, &opts)?;
        log::info!("{}: {:.1} s", e.name, report.wall_time.as_secs_f64());
        eprintln!("{}: finished in {:.1} s", e.name, report.wall_time.as_secs_f64());
        if !report.complete {
            status = 1;
        }
        let single = Inputs {
            circuit: inputs.circuit.clone(),
            circuit_text: inputs.circuit_text.clone(),
            experiments: vec![(e.clone(), text.clone())],
        };
        let h = header(&single, common, "sweep", &[])
            .with("experiment", &e.name)
            .with("complete", report.complete);
        let h = Header { schedule: prep.schedule.clone(), ..h };
        let dir = common.out.join(&e.name);
        let nv = prep.n_voltage();
        let axes: Vec<usize> = (nv..nv + e.axes.len()).collect();
        let names: Vec<String> = e.axes.iter().map(|a| format!("p_{}", a.neuron)).collect();
        write_file(&dir, "regions.csv", |w| output::write_regions(w, &h, &report))?;
        write_file(&dir, "partition.csv", |w| output::write_partition(w, &h, &report.partition, &axes, &names))?;
        write_file(&dir, "rounds.csv", |w| output::write_rounds(w, &h, &report.partition, &axes, &names))?;
        let table = output::summary_table(&report);
        print!("{table}");
        write_file(&dir, "summary.txt", |w| Ok(w.write_all(table.as_bytes())?))?;
        reports.push(report);
    }
    let refs: Vec<&RegionReport> = reports.iter().collect();
    let trend = output::trend_table(&trend_check(&refs));
    print!("{trend}");
    write_file(&common.out, "trend.txt", |w| Ok(w.write_all(trend.as_bytes())?))?;
    Ok(status)
}

fn cmd_validate(
    common: &Common,
    inputs: &Inputs,
    pairs: usize,
    cells: usize,
    samples: usize,
    regions: bool,
    per_region: usize,
) -> Result<u8> {
    let cell_delta = common.delta.unwrap_or(5e-5);
    if common.dry_run {
        println!(
            "dry run: {pairs} pairs on 4 systems, {cells} cells x {samples} trajectories per experiment{}",
            if regions { format!(", {per_region} samples per certified region") } else { String::new() }
        );
        return Ok(0);
    }
    let mut rows: Vec<[String; 4]> = Vec::new();
    let mut failed = false;
    let mut rng = validate::rng(common.seed);
    for s in validate::test_matrix(&inputs.circuit, 1e-4)? {
        let r = validate::discrepancy_pairs(s.field.as_ref(), &s.center, s.delta, &s.sim, pairs, &mut rng)?;
        failed |= !r.passed();
        println!("discrepancy {:<20} {} ({} checks, {} violations, max ratio {:.6})", s.name, pass(r.passed()), r.checks, r.violations, r.max_ratio);
        rows.push(["discrepancy".into(), s.name, pass(r.passed()).into(), format!("violations={} checks={}", r.violations, r.checks)]);
    }
    let default_exp;
    let exps: Vec<&Experiment> = if inputs.experiments.is_empty() {
        default_exp = Experiment::parse(DEFAULT_VALIDATION_EXPERIMENT)?;
        vec![&default_exp]
    } else {
        inputs.experiments.iter().map(|e| &e.0).collect()
    };
    for exp in exps {
        let prep = Prepared::new(&inputs.circuit, exp, &run_options(common, false))?;
        let cfg = ReachConfig::new(SimConfig::new(exp.tau, exp.eps, exp.horizon));
        let (mut misses, mut contradictions, mut conclusive) = (0, 0, 0);
        for cell in validate::random_cells(&prep, cells, cell_delta, &mut rng) {
            let (tube, c) = validate::cell_containment(&cell, &prep.augmented, &cfg, samples, &mut rng)?;
            misses += c.misses;
            for prop in &prep.properties {
                let kind = evaluate(&tube, prop)?.kind;
                if kind.is_conclusive() {
                    conclusive += 1;
                    let v = validate::verdict_soundness(&cell, &prep.augmented, prop, kind, samples, &mut rng)?;
                    contradictions += v.contradictions;
                }
            }
        }
        failed |= misses > 0 || contradictions > 0;
        println!("containment {:<20} {} ({cells} cells, {misses} misses)", exp.name, pass(misses == 0));
        println!("verdicts    {:<20} {} ({conclusive} conclusive verdicts, {contradictions} contradictions)", exp.name, pass(contradictions == 0));
        rows.push(["containment".into(), exp.name.clone(), pass(misses == 0).into(), format!("cells={cells} misses={misses}")]);
        rows.push(["verdicts".into(), exp.name.clone(), pass(contradictions == 0).into(), format!("conclusive={conclusive} contradictions={contradictions}")]);
        if regions {
            let report = run_prepared(&prep, exp, &run_options(common, false))?;
            let overlaps = validate::overlapping_behaviors(&report);
            let oracle = validate::oracle_consistency(&prep, exp, &report, per_region, &mut rng)?;
            let agree: usize = oracle.iter().map(|o| o.agree).sum();
            let total: usize = oracle.iter().map(|o| o.samples).sum();
            let ok = overlaps.is_empty() && agree == total;
            failed |= !ok;
            println!("regions     {:<20} {} ({} overlaps, {agree}/{total} samples agree)", exp.name, pass(ok), overlaps.len());
            rows.push(["regions".into(), exp.name.clone(), pass(ok).into(), format!("overlaps={} agree={agree} samples={total}", overlaps.len())]);
        }
    }
    let h = header(inputs, common, "validate", &[format!("{pairs} {cells} {samples} {regions} {per_region} {cell_delta}")]);
    write_file(&common.out, "validate.csv", |w| {
        h.write(w)?;
        writeln!(w, "suite,system,result,detail")?;
        for r in &rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    })?;
    Ok(if failed { 3 } else { 0 })
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

const DEFAULT_VALIDATION_EXPERIMENT: &str = r#"
name = "control-avm"
group = "control"
horizon = 0.4
resp_epsilon = 2e-4
behaviors = ["reversal", "acceleration", "no_response"]
[[axis]]
neuron = "AVM"
lo = 0.01
hi = 1.0
[schedule]
delta0 = 1e-4
"#;

fn run(cli: &Cli) -> Result<u8> {
    let inputs = load(&cli.common)?;
    let c = &cli.common;
    match &cli.cmd {
        Command::Simulate { point, horizon } => cmd_simulate(c, &inputs, point, *horizon, false),
        Command::Classify { point, horizon } => cmd_simulate(c, &inputs, point, *horizon, true),
        Command::Reach { point } => cmd_reach(c, &inputs, point, false),
        Command::Check { point } => cmd_reach(c, &inputs, point, true),
        Command::Sweep => cmd_sweep(c, &inputs),
        Command::Validate { pairs, cells, samples, regions, per_region } => {
            cmd_validate(c, &inputs, *pairs, *cells, *samples, *regions, *per_region)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
