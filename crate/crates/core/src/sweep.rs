//! Gap-conductance parameter sweeps over ablation groups.

use crate::circuit::{Augmented, Behavior, Circuit, ParamAxis, SENSORY};
use crate::error::{Error, Result};
use crate::interval::{IBox, Interval};
use crate::odesim::SimConfig;
use crate::properties::{BehaviorProperty, ViolationMode, DEFAULT_GRACE, DEFAULT_RESP_EPSILON};
use crate::reach::{
    cover_count, halving_schedule, verify_refine, Partition, ReachConfig, RefineConfig, TubeProperty, VerdictKind,
    DEFAULT_BUDGET,
};
use serde::Deserialize;
use std::path::Path;
use std::time::{Duration, Instant};

/// The ablation groups with a documented expectation.
pub const GROUPS: [(&str, &[&str]); 5] = [
    ("control", &[]),
    ("plm", &["PLM"]),
    ("alm", &["ALM"]),
    ("alm_avm", &["ALM", "AVM"]),
    ("alm_dva", &["ALM", "DVA"]),
];

pub fn group_ablation(group: &str) -> Option<&'static [&'static str]> {
    GROUPS.iter().find(|(g, _)| *g == group).map(|(_, a)| *a)
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub delta0: Option<f64>,
    #[serde(default)]
    pub delta_min: Option<f64>,
    /// Explicit δ values; overrides the halving schedule.
    #[serde(default)]
    pub explicit: Option<Vec<f64>>,
}

impl ScheduleSpec {
    pub fn deltas(&self) -> Result<Vec<f64>> {
        let s = match (&self.explicit, self.delta0, self.delta_min) {
            (Some(e), None, None) => e.clone(),
            (None, Some(d0), Some(dm)) => halving_schedule(d0, dm)?,
            (None, Some(d0), None) => vec![d0],
            _ => return Err(Error::config("schedule needs either `explicit` or `delta0` (and optional `delta_min`)")),
        };
        check_schedule(&s)?;
        Ok(s)
    }
}

pub fn check_schedule(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::config("empty delta schedule"));
    }
    if s.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::config("delta values must be positive"));
    }
    if s.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::config("delta schedule must be strictly decreasing"));
    }
    Ok(())
}

/// Reach-set and property settings shared by every behavior.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub group: String,
    /// Neurons to remove; defaults to the group's standard ablation set.
    #[serde(default)]
    pub ablate: Option<Vec<String>>,
    /// Recompute the resting state of the ablated circuit.
    #[serde(default = "yes")]
    pub recompute_equilibrium: bool,
    pub horizon: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_grace")]
    pub grace: f64,
    /// Checked interval; defaults to [onset + grace, horizon].
    #[serde(default)]
    pub t_int: Option<[f64; 2]>,
    #[serde(default = "default_resp")]
    pub resp_epsilon: f64,
    /// Read reversal as V_AVB > V_AVA.
    #[serde(default)]
    pub flip: bool,
    #[serde(default)]
    pub violation: ViolationMode,
    pub behaviors: Vec<Behavior>,
    #[serde(rename = "axis")]
    pub axes: Vec<ParamAxis>,
    pub schedule: ScheduleSpec,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// |∫(V_AVA − V_AVB)| below this is no response (V·s).
    #[serde(default = "default_threshold")]
    pub classifier_threshold: f64,
}

fn yes() -> bool {
    true
}
fn default_tau() -> f64 {
    0.005
}
fn default_eps() -> f64 {
    1e-6
}
fn default_grace() -> f64 {
    DEFAULT_GRACE
}
fn default_resp() -> f64 {
    DEFAULT_RESP_EPSILON
}
fn default_budget() -> u64 {
    DEFAULT_BUDGET
}
fn default_threshold() -> f64 {
    5e-5
}

impl Experiment {
    pub fn parse(text: &str) -> Result<Self> {
        let e: Experiment = toml::from_str(text).map_err(|e| Error::config(format!("experiment file: {e}")))?;
        e.validate()?;
        Ok(e)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn ablation(&self) -> Result<Vec<String>> {
        match &self.ablate {
            Some(a) => Ok(a.clone()),
            None => group_ablation(&self.group)
                .map(|a| a.iter().map(|s| s.to_string()).collect())
                .ok_or_else(|| Error::config(format!("group {} has no standard ablation set; give `ablate`", self.group))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dead = self.ablation()?;
        if self.axes.is_empty() || self.axes.len() > 3 {
            return Err(Error::config("an experiment needs one to three axes"));
        }
        for a in &self.axes {
            a.validate()?;
            if !SENSORY.contains(&a.neuron.as_str()) {
                return Err(Error::config(format!("axis neuron {} is not sensory", a.neuron)));
            }
            if dead.contains(&a.neuron) {
                return Err(Error::config(format!("axis neuron {} is ablated in group {}", a.neuron, self.group)));
            }
        }
        if self.behaviors.is_empty() {
            return Err(Error::config("no behaviors to check"));
        }
        let mut b = self.behaviors.clone();
        b.sort();
        b.dedup();
        if b.len() != self.behaviors.len() {
            return Err(Error::config("duplicate behavior"));
        }
        SimConfig::new(self.tau, self.eps, self.horizon).validate()?;
        if !(self.grace >= 0.0) || !(self.resp_epsilon > 0.0) || !(self.classifier_threshold >= 0.0) {
            return Err(Error::config("grace ≥ 0, resp_epsilon > 0 and classifier_threshold ≥ 0 required"));
        }
        self.schedule.deltas()?;
        Ok(())
    }
}

/// Options that come from the command line rather than the file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub workers: usize,
    pub budget: Option<u64>,
    pub schedule: Option<Vec<f64>>,
    pub record_rounds: bool,
}

/// The circuit, augmented field and properties an experiment runs on.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub circuit: Circuit,
    pub augmented: Augmented,
    pub theta: IBox,
    pub properties: Vec<BehaviorProperty>,
    pub onset: f64,
    pub ava: usize,
    pub avb: usize,
    pub schedule: Vec<f64>,
    pub budget: u64,
}

impl Prepared {
    pub fn new(base: &Circuit, exp: &Experiment, opts: &RunOptions) -> Result<Self> {
        exp.validate()?;
        let dead = exp.ablation()?;
        let refs: Vec<&str> = dead.iter().map(|s| s.as_str()).collect();
        let mut circuit = base.ablate(&refs)?;
        if exp.recompute_equilibrium {
            circuit = circuit.with_equilibrium()?;
        }
        let augmented = circuit.augment(&exp.axes)?;
        let (ava, avb) = circuit.readouts()?;
        let onset = circuit.params.stim.onset().unwrap_or(0.0);
        let mut theta: IBox = circuit.params.v_eq.iter().map(|&v| Interval::point(v)).collect();
        theta.extend(exp.axes.iter().map(|a| Interval::new(a.lo, a.hi)));
        let mut properties = Vec::new();
        for &b in &exp.behaviors {
            let mut p = BehaviorProperty::new(b, onset, exp.grace, exp.horizon, ava, avb)?;
            if let Some([a, z]) = exp.t_int {
                p.t_int = (a, z);
            }
            p.resp_epsilon = exp.resp_epsilon;
            p.flip = exp.flip;
            p.violation = exp.violation;
            p.validate(onset)?;
            if p.t_int.1 > exp.horizon {
                return Err(Error::config("checked interval extends past the horizon"));
            }
            properties.push(p);
        }
        let schedule = match &opts.schedule {
            Some(s) => {
                check_schedule(s)?;
                s.clone()
            }
            None => exp.schedule.deltas()?,
        };
        Ok(Prepared {
            circuit,
            augmented,
            theta,
            properties,
            onset,
            ava,
            avb,
            schedule,
            budget: opts.budget.unwrap_or(exp.budget),
        })
    }

    pub fn n_voltage(&self) -> usize {
        self.augmented.n_voltage()
    }

    /// Initial state for parameter point `p`.
    pub fn state(&self, p: &[f64]) -> Vec<f64> {
        self.augmented.state(&self.circuit.params.v_eq, p)
    }

    pub fn p_box(&self) -> IBox {
        self.theta[self.n_voltage()..].to_vec()
    }

    pub fn initial_cells(&self) -> u64 {
        cover_count(&self.theta, self.schedule[0])
    }
}

/// A certified run of cells along axis 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub bounds: IBox,
    pub cells: usize,
    /// Smallest δ among the merged cells.
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct BehaviorRegion {
    pub behavior: Behavior,
    /// Certified cells in p-space, sorted.
    pub cells: Vec<(IBox, f64)>,
    pub regions: Vec<Region>,
    /// Sum of cell volumes in p.
    pub measure_p: f64,
    /// Sum of cell volumes after mapping each axis to g = 10/p.
    pub measure_g: f64,
    /// Cells where this behavior's negation was certified.
    pub violated_measure_p: f64,
}

#[derive(Clone, Debug)]
pub struct RegionReport {
    pub name: String,
    pub group: String,
    pub axes: Vec<ParamAxis>,
    pub schedule: Vec<f64>,
    pub behaviors: Vec<BehaviorRegion>,
    /// Cells that no behavior certified, in p.
    pub unknown_measure_p: f64,
    /// Cells certified for more than one behavior; these are excluded
    /// from every region.
    pub conflicts: Vec<(IBox, Vec<Behavior>)>,
    pub partition: Partition,
    pub complete: bool,
    pub simulations: u64,
    pub wall_time: Duration,
}

impl RegionReport {
    pub fn region(&self, b: Behavior) -> Option<&BehaviorRegion> {
        self.behaviors.iter().find(|r| r.behavior == b)
    }

    pub fn measure(&self, b: Behavior) -> f64 {
        self.region(b).map(|r| r.measure_g).unwrap_or(0.0)
    }
}

fn p_volume(b: &[Interval]) -> f64 {
    b.iter().map(|i| i.hi - i.lo).product()
}

fn g_volume(b: &[Interval]) -> f64 {
    b.iter().map(|i| 10.0 / i.lo - 10.0 / i.hi).product()
}

/// Cell faces built from center ± radius agree only up to rounding.
fn touching(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Merge cells that are adjacent along axis 0 and identical on the others.
pub fn contiguous_regions(cells: &[(IBox, f64)]) -> Vec<Region> {
    let mut sorted: Vec<&(IBox, f64)> = cells.iter().collect();
    sorted.sort_by(|a, b| {
        for k in (1..a.0.len()).chain(std::iter::once(0)) {
            let o = a.0[k].lo.total_cmp(&b.0[k].lo).then(a.0[k].hi.total_cmp(&b.0[k].hi));
            if o != std::cmp::Ordering::Equal {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    });
    let mut out: Vec<Region> = Vec::new();
    for (b, d) in sorted {
        if let Some(last) = out.last_mut() {
            let same_rest = (1..b.len()).all(|k| touching(last.bounds[k].lo, b[k].lo) && touching(last.bounds[k].hi, b[k].hi));
            if same_rest && touching(last.bounds[0].hi, b[0].lo) {
                last.bounds[0].hi = b[0].hi;
                last.cells += 1;
                last.delta = last.delta.min(*d);
                continue;
            }
        }
        out.push(Region { bounds: b.clone(), cells: 1, delta: *d });
    }
    out.sort_by(|a, b| {
        for k in 0..a.bounds.len() {
            let o = a.bounds[k].lo.total_cmp(&b.bounds[k].lo);
            if o != std::cmp::Ordering::Equal {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    });
    out
}

/// Certify regions for every behavior of `exp` on `base`.
pub fn run_experiment(base: &Circuit, exp: &Experiment, opts: &RunOptions) -> Result<RegionReport> {
    let prep = Prepared::new(base, exp, opts)?;
    run_prepared(&prep, exp, opts)
}

pub fn run_prepared(prep: &Prepared, exp: &Experiment, opts: &RunOptions) -> Result<RegionReport> {
    let start = Instant::now();
    let props: Vec<&dyn TubeProperty> = prep.properties.iter().map(|p| p as &dyn TubeProperty).collect();
    let cfg = RefineConfig {
        reach: ReachConfig::new(SimConfig::new(exp.tau, exp.eps, exp.horizon)),
        schedule: prep.schedule.clone(),
        budget: prep.budget,
        workers: opts.workers,
        record_rounds: opts.record_rounds,
    };
    let partition = verify_refine(&prep.theta, &prep.augmented, &props, &cfg)?;
    let nv = prep.n_voltage();
    let mut behaviors: Vec<BehaviorRegion> = exp
        .behaviors
        .iter()
        .map(|&b| BehaviorRegion {
            behavior: b,
            cells: Vec::new(),
            regions: Vec::new(),
            measure_p: 0.0,
            measure_g: 0.0,
            violated_measure_p: 0.0,
        })
        .collect();
    let mut unknown = 0.0;
    let mut conflicts = Vec::new();
    for leaf in &partition.leaves {
        let pb: IBox = leaf.cell.bounds()[nv..].to_vec();
        let sat: Vec<usize> = (0..behaviors.len()).filter(|&k| leaf.verdicts[k] == VerdictKind::Satisfied).collect();
        for (k, v) in leaf.verdicts.iter().enumerate() {
            if *v == VerdictKind::Violated {
                behaviors[k].violated_measure_p += p_volume(&pb);
            }
        }
        match sat.len() {
            0 => unknown += p_volume(&pb),
            1 => {
                let r = &mut behaviors[sat[0]];
                r.measure_p += p_volume(&pb);
                r.measure_g += g_volume(&pb);
                r.cells.push((pb, leaf.delta));
            }
            _ => conflicts.push((pb, sat.iter().map(|&k| exp.behaviors[k]).collect())),
        }
    }
    for r in &mut behaviors {
        r.regions = contiguous_regions(&r.cells);
    }
    if !conflicts.is_empty() {
        log::warn!("{}: {} cells certified for more than one behavior", exp.name, conflicts.len());
    }
    Ok(RegionReport {
        name: exp.name.clone(),
        group: exp.group.clone(),
        axes: exp.axes.clone(),
        schedule: prep.schedule.clone(),
        behaviors,
        unknown_measure_p: unknown,
        conflicts,
        complete: partition.complete,
        simulations: partition.simulations,
        partition,
        wall_time: start.elapsed(),
    })
}

/// Expected dominant behavior per group and an annotation where the
/// model is known to disagree with the laser-ablation data.
pub fn expected_dominance(group: &str) -> Option<(Behavior, Option<&'static str>)> {
    match group {
        "control" => Some((Behavior::Reversal, None)),
        "alm_avm" => Some((Behavior::Acceleration, None)),
        "alm" => Some((
            Behavior::Reversal,
            Some("model predicts reversal; the ablation data show mostly acceleration for this group"),
        )),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub struct TrendResult {
    pub group: String,
    /// Behaviors by decreasing certified measure (g-space).
    pub ordering: Vec<(Behavior, f64)>,
    pub expected: Option<Behavior>,
    pub pass: Option<bool>,
    pub note: Option<&'static str>,
}

/// Order behaviors by certified measure per group and compare the
/// dominant one against the expected table.
pub fn trend_check(reports: &[&RegionReport]) -> Vec<TrendResult> {
    let mut groups: Vec<&str> = Vec::new();
    for r in reports {
        if !groups.contains(&r.group.as_str()) {
            groups.push(&r.group);
        }
    }
    let mut out = Vec::new();
    for g in groups {
        let mut m: Vec<(Behavior, f64)> = Behavior::ALL.iter().map(|&b| (b, 0.0)).collect();
        for r in reports.iter().filter(|r| r.group == g) {
            for br in &r.behaviors {
                if let Some(e) = m.iter_mut().find(|(b, _)| *b == br.behavior) {
                    e.1 += br.measure_g;
                }
            }
        }
        m.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let exp = expected_dominance(g);
        let pass = exp.map(|(b, _)| m[0].0 == b && m[0].1 > m[1].1);
        out.push(TrendResult {
            group: g.to_string(),
            ordering: m,
            expected: exp.map(|e| e.0),
            pass,
            note: exp.and_then(|e| e.1),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
group = "control"
horizon = 0.4
behaviors = ["reversal"]
[[axis]]
neuron = "AVM"
[schedule]
delta0 = 0.1
delta_min = 0.025
"#;

    #[test]
    fn parse_minimal() {
        let e = Experiment::parse(MINIMAL).unwrap();
        assert_eq!(e.axes[0].lo, 0.01);
        assert_eq!(e.schedule.deltas().unwrap(), vec![0.1, 0.05, 0.025]);
        assert_eq!(e.ablation().unwrap(), Vec::<String>::new());
        assert_eq!(e.resp_epsilon, 1e-3);
    }

    #[test]
    fn rejects_bad_files() {
        let bad = MINIMAL.replace("horizon", "horizn");
        assert!(matches!(Experiment::parse(&bad), Err(Error::Config(m)) if m.contains("horizn")));
        let ablated = MINIMAL.replace("\"control\"", "\"alm_avm\"");
        assert!(Experiment::parse(&ablated).is_err());
        let motor = MINIMAL.replace("\"AVM\"", "\"AVA\"");
        assert!(Experiment::parse(&motor).is_err());
        let increasing = MINIMAL.replace("delta0 = 0.1\ndelta_min = 0.025", "explicit = [0.1, 0.2]");
        assert!(Experiment::parse(&increasing).is_err());
    }

    #[test]
    fn explicit_schedule() {
        let s = ScheduleSpec { delta0: None, delta_min: None, explicit: Some(vec![7e-5, 6e-5, 5.5e-5, 5e-5]) };
        assert_eq!(s.deltas().unwrap().len(), 4);
    }

    #[test]
    fn merges_runs() {
        let c = |lo: f64, hi: f64| (vec![Interval::new(lo, hi)], 0.1);
        let cells = vec![c(0.2, 0.3), c(0.0, 0.1), c(0.1, 0.2), c(0.5, 0.6)];
        let r = contiguous_regions(&cells);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].bounds[0], Interval::new(0.0, 0.3));
        assert_eq!(r[0].cells, 3);
        let c2 = |a: f64, b: f64| (vec![Interval::new(a, a + 0.1), Interval::new(b, b + 0.1)], 0.05);
        let r = contiguous_regions(&[c2(0.0, 0.0), c2(0.1, 0.0), c2(0.0, 0.1)]);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn measures() {
        let b = [Interval::new(0.01, 0.02), Interval::new(0.5, 1.0)];
        assert!((p_volume(&b) - 0.005).abs() < 1e-15);
        assert!((g_volume(&b) - 500.0 * 10.0).abs() < 1e-9);
    }
}
