//! Acceptance suite. Runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::time::Instant;
use twreach::circuit::{parse_circuit, Circuit, CircuitParams, Connectome, StimulusSchedule};
use twreach::field::{Linear, VectorField};
use twreach::interval::Interval;
use twreach::discrepancy::{local_discrepancy, DiscrepancyOptions};
use twreach::odesim::{simulate, SimConfig};
use twreach::output::{self, Header};
use twreach::reach::{verify_refine, ReachConfig, ReachTube, RefineConfig, TubeProperty, VerdictKind};
use twreach::sweep::{run_prepared, trend_check, Experiment, Prepared, RegionReport, RunOptions};
use twreach::validate;
use twreach::circuit::Behavior;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn shipped() -> Circuit {
    parse_circuit(twreach::DEFAULT_CIRCUIT).unwrap()
}

fn experiment(name: &str) -> Experiment {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/experiments").join(name);
    Experiment::load(&path).unwrap()
}

fn criterion_1() -> twreach::Result<Outcome> {
    let start = Instant::now();
    let mut rng = validate::rng(1);
    let mut parts = Vec::new();
    let mut ok = true;
    for s in validate::test_matrix(&shipped(), 1e-4)? {
        let r = validate::discrepancy_pairs(s.field.as_ref(), &s.center, s.delta, &s.sim, 500, &mut rng)?;
        ok &= r.passed();
        parts.push(format!("{} {}/{} over bound", s.name, r.violations, r.checks));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 300.0;
    Ok(outcome(ok, format!("{}; {secs:.1} s", parts.join(", "))))
}

fn criterion_2() -> twreach::Result<Outcome> {
    let start = Instant::now();
    let exp = experiment("control__avm.toml");
    let prep = Prepared::new(&shipped(), &exp, &RunOptions { workers: 1, ..Default::default() })?;
    let cfg = ReachConfig::new(SimConfig::new(exp.tau, exp.eps, exp.horizon));
    let mut rng = validate::rng(2);
    let (mut misses, mut checks, mut failures) = (0, 0, 0);
    for cell in validate::random_cells(&prep, 20, 1e-4, &mut rng) {
        match validate::cell_containment(&cell, &prep.augmented, &cfg, 200, &mut rng) {
            Ok((_, r)) => {
                misses += r.misses;
                checks += r.checks;
            }
            Err(e) => {
                eprintln!("containment cell {cell}: {e}");
                failures += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        misses == 0 && failures == 0 && secs <= 600.0,
        format!("20 cells x 200 trajectories, {misses}/{checks} samples outside, {failures} tube failures; {secs:.1} s"),
    ))
}

fn fd_error(f: &dyn VectorField, x: &[f64], h: f64) -> f64 {
    let n = f.dim();
    let j = f.jacobian(0.1, x);
    let scale = (0..n * n).map(|k| j[(k / n, k % n)].abs()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for c in 0..n {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[c] += h;
        xm[c] -= h;
        let (fp, fm) = (f.eval_vec(0.1, &xp), f.eval_vec(0.1, &xm));
        for r in 0..n {
            let fd = (fp[r] - fm[r]) / (2.0 * h);
            worst = worst.max((fd - j[(r, c)]).abs() / j[(r, c)].abs().max(1e-6 * scale));
        }
    }
    worst
}

fn criterion_3() -> twreach::Result<Outcome> {
    use rand::Rng;
    let c = shipped();
    let mut rng = validate::rng(3);
    let mut jac = 0.0f64;
    for _ in 0..100 {
        let v: Vec<f64> = (0..c.n()).map(|_| rng.gen_range(-0.07..0.0)).collect();
        jac = jac.max(fd_error(&c, &v, 1e-7));
    }
    let rest = c.with_stimulus(StimulusSchedule::none())?;
    let eq = rest.equilibrium()?;
    let resid = rest.relative_residual(&eq.v)?;

    // B sits at its sigmoid center and A at its leak potential, so
    // dV_A/dt = g_syn (E_B − V_A) σ = 32 · 0.0625 · σ, which is 1 iff σ = 1/2.
    let mut conn = Connectome::empty(&["A", "B"]);
    conn.add_synapse(1, 0, 1);
    let params = CircuitParams {
        g_leak: vec![8.0, 8.0],
        g_gap: vec![1.0, 1.0],
        g_syn: vec![32.0, 32.0],
        v_leak: vec![-0.0625, -0.03125],
        e_rev: vec![0.0, 0.0],
        v_range: 0.03125,
        v_eq: vec![-0.0625, -0.03125],
        stim: StimulusSchedule::none(),
    };
    let pair = Circuit::new(conn, params)?;
    let half = pair.vector_field(&[-0.0625, -0.03125], 0.0)?[0];

    // node time t = 1 of the ẋ = −x tube from B_δ(1): node box bloated by β(1)
    let delta = 1e-3;
    let decay = Linear::scalar(-1.0);
    let trace = simulate(&decay, &[1.0], &SimConfig::new(0.05, 1e-9, 1.0))?;
    let disc = local_discrepancy(&trace, delta, &decay, &DiscrepancyOptions { weights: Some(vec![1.0]), ..Default::default() })?;
    let node = trace.boxes.last().unwrap()[0];
    let beta = *disc.beta.last().unwrap();
    let tube_box = node.inflate(beta);
    let target = (-1.0f64).exp();
    let contains = *trace.times.last().unwrap() == 1.0 && tube_box.contains(target);
    let tube_radius = (tube_box.hi - target).max(target - tube_box.lo);
    let bound = delta * target + 2.0 * node.width();
    let decay_ok = contains && tube_radius <= bound;
    let ok = jac <= 1e-5 && resid <= 1e-9 && half == 1.0 && decay_ok;
    Ok(outcome(
        ok,
        format!(
            "jacobian rel err {jac:.2e}, equilibrium residual {resid:.2e}, half activation {}, \
             decay tube at t=1 contains e^-1: {contains}, radius {tube_radius:.4e} vs {bound:.4e}",
            if half == 1.0 { "exact" } else { "inexact" }
        ),
    ))
}

/// Holds iff every tube segment stays within `eps` of the cell center.
struct Confined {
    eps: f64,
}

impl TubeProperty for Confined {
    fn name(&self) -> String {
        "confined".into()
    }

    fn evaluate(&self, tube: &ReachTube) -> VerdictKind {
        let c = tube.cell.center[0];
        if tube.segments.iter().all(|(b, _)| b[0].lo > c - self.eps && b[0].hi < c + self.eps) {
            VerdictKind::Satisfied
        } else {
            VerdictKind::Unknown
        }
    }
}

fn criterion_4() -> twreach::Result<Outcome> {
    let field = Linear::scalar(0.0);
    let theta = vec![Interval::new(0.5, 0.5008)];
    let prop = Confined { eps: 7.5e-5 };
    let props: [&dyn TubeProperty; 1] = [&prop];
    let cfg = RefineConfig {
        reach: ReachConfig::new(SimConfig::new(0.1, 1e-9, 1.0)),
        schedule: vec![1e-4, 5e-5, 2.5e-5],
        budget: 1000,
        workers: 1,
        record_rounds: true,
    };
    let a = verify_refine(&theta, &field, &props, &cfg)?;
    let b = verify_refine(&theta, &field, &props, &cfg)?;
    let round = |k: usize| a.rounds.get(k).map(|r| r.cells.iter().map(|c| c.1[0]).collect::<Vec<_>>());
    let r0 = round(0).unwrap_or_default();
    let r1 = round(1).unwrap_or_default();
    let coarse_unknown = !r0.is_empty() && r0.iter().all(|v| *v == VerdictKind::Unknown);
    let fine_sat = !r1.is_empty() && r1.iter().all(|v| *v == VerdictKind::Satisfied);
    let stopped = a.rounds.len() == 2 && a.complete && a.leaves.iter().all(|l| l.delta == 5e-5);
    let same = format!("{:?}", a.leaves) == format!("{:?}", b.leaves);
    Ok(outcome(
        coarse_unknown && fine_sat && stopped && same,
        format!(
            "delta 1e-4: {} cells unknown, delta 5e-5: {} cells satisfied, rounds {}, repeat identical {same}",
            r0.len(),
            r1.len(),
            a.rounds.len()
        ),
    ))
}

struct Sweeps {
    control: RegionReport,
    ablated: RegionReport,
    control_exp: Experiment,
    ablated_exp: Experiment,
    secs: f64,
}

fn run(exp: &Experiment, workers: usize) -> twreach::Result<(Prepared, RegionReport)> {
    let opts = RunOptions { workers, ..Default::default() };
    let prep = Prepared::new(&shipped(), exp, &opts)?;
    let report = run_prepared(&prep, exp, &opts)?;
    Ok((prep, report))
}

fn region_text(r: &RegionReport) -> String {
    r.region(Behavior::Reversal)
        .map(|b| b.regions.iter().map(|x| format!("[{:.4}, {:.4}]", x.bounds[0].lo, x.bounds[0].hi)).collect::<Vec<_>>().join(" "))
        .unwrap_or_default()
}

fn criterion_5(s: &Sweeps) -> Outcome {
    let trend = trend_check(&[&s.control, &s.ablated]);
    let m = |r: &RegionReport, b| r.measure(b);
    let (rev, acc, none) = (m(&s.control, Behavior::Reversal), m(&s.control, Behavior::Acceleration), m(&s.control, Behavior::NoResponse));
    let control_ok = rev > acc && acc > none && none == 0.0;
    let ab_rev = s.ablated.region(Behavior::Reversal).map(|r| r.cells.len()).unwrap_or(0);
    let ab_acc = s.ablated.region(Behavior::Acceleration).map(|r| r.cells.len()).unwrap_or(0);
    let ablated_ok = ab_rev == 0 && ab_acc > 0;
    let final_delta = s.control.schedule.last() == Some(&1e-4) && s.ablated.schedule.last() == Some(&1e-4);
    let trend_ok = trend.iter().all(|t| t.pass != Some(false));
    print!("{}", output::summary_table(&s.control));
    print!("{}", output::summary_table(&s.ablated));
    print!("{}", output::trend_table(&trend));
    outcome(
        control_ok && ablated_ok && final_delta && trend_ok && s.secs <= 1800.0,
        format!(
            "control g-measure reversal {rev:.4e} > acceleration {acc:.4e} > no_response {none:.1e} (reversal {}); \
             ALM,AVM ablated: {ab_rev} reversal cells, {ab_acc} acceleration cells; {:.1} s",
            region_text(&s.control),
            s.secs
        ),
    )
}

fn criterion_6(s: &Sweeps) -> twreach::Result<Outcome> {
    let mut rng = validate::rng(6);
    let mut overlaps = 0;
    let (mut agree, mut total, mut regions) = (0, 0, 0);
    for (report, exp) in [(&s.control, &s.control_exp), (&s.ablated, &s.ablated_exp)] {
        overlaps += validate::overlapping_behaviors(report).len();
        let prep = Prepared::new(&shipped(), exp, &RunOptions::default())?;
        for o in validate::oracle_consistency(&prep, exp, report, 50, &mut rng)? {
            regions += 1;
            agree += o.agree;
            total += o.samples;
            for (p, b, i) in o.mismatches.iter().take(3) {
                eprintln!("oracle mismatch in {} {} region {}: p = {p:?} classified {b} (integral {i:.3e})", report.name, o.behavior, o.region);
            }
        }
    }
    Ok(outcome(
        overlaps == 0 && agree == total && regions > 0,
        format!("{overlaps} overlapping behavior pairs, {agree}/{total} samples agree over {regions} regions"),
    ))
}

fn regions_csv(r: &RegionReport) -> twreach::Result<Vec<u8>> {
    let h = Header::new(output::config_hash(&[&r.name]), r.schedule.clone());
    let mut buf = Vec::new();
    output::write_regions(&mut buf, &h, r)?;
    Ok(buf)
}

fn partition_csv(r: &RegionReport) -> twreach::Result<Vec<u8>> {
    let h = Header::new(output::config_hash(&[&r.name]), r.schedule.clone());
    let mut buf = Vec::new();
    let nv = r.partition.theta.len() - r.axes.len();
    let axes: Vec<usize> = (nv..r.partition.theta.len()).collect();
    let names: Vec<String> = r.axes.iter().map(|a| a.neuron.clone()).collect();
    output::write_partition(&mut buf, &h, &r.partition, &axes, &names)?;
    Ok(buf)
}

fn criterion_7(s: &Sweeps) -> twreach::Result<Outcome> {
    let (_, again) = run(&s.ablated_exp, 2)?;
    let same_regions = regions_csv(&s.ablated)? == regions_csv(&again)?;
    let same_partition = partition_csv(&s.ablated)? == partition_csv(&again)?;
    Ok(outcome(
        same_regions && same_partition,
        format!("{} at 1 vs 2 workers: regions identical {same_regions}, partition identical {same_partition}", s.ablated.name),
    ))
}

fn report(n: usize, r: twreach::Result<Outcome>, failed: &mut Vec<usize>) {
    let o = r.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    if !o.pass {
        failed.push(n);
    }
    println!("criterion {n}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    let mut failed = Vec::new();
    report(1, criterion_1(), &mut failed);
    report(2, criterion_2(), &mut failed);
    report(3, criterion_3(), &mut failed);
    report(4, criterion_4(), &mut failed);
    let start = Instant::now();
    let sweeps = (|| -> twreach::Result<Sweeps> {
        let control_exp = experiment("control__avm.toml");
        let ablated_exp = experiment("alm_avm__plm.toml");
        let (_, control) = run(&control_exp, 1)?;
        let (_, ablated) = run(&ablated_exp, 1)?;
        Ok(Sweeps { control, ablated, control_exp, ablated_exp, secs: start.elapsed().as_secs_f64() })
    })();
    match sweeps {
        Ok(s) => {
            report(5, Ok(criterion_5(&s)), &mut failed);
            report(6, criterion_6(&s), &mut failed);
            report(7, criterion_7(&s), &mut failed);
        }
        Err(e) => {
            for n in 5..=7 {
                report(n, Err(twreach::Error::Numerical(format!("sweep failed: {e}"))), &mut failed);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 7 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
