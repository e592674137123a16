//! δ-covers, reach tubes and selective refinement.

use crate::discrepancy::{local_discrepancy, scaled_norm, DiscrepancyOptions};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::interval::{IBox, Interval};
use crate::odesim::{simulate, SimConfig};
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::fmt;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Max-norm ball (box) with per-coordinate radius.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl Cell {
    pub fn bounds(&self) -> IBox {
        self.center.iter().zip(&self.radius).map(|(&c, &r)| Interval::new(c - r, c + r)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.center.iter().zip(&self.radius).zip(x).all(|((&c, &r), &v)| v >= c - r && v <= c + r)
    }

    /// Lexicographic order on lower corners, used for deterministic output.
    pub fn cmp_position(&self, o: &Cell) -> Ordering {
        for (a, b) in self.bounds().iter().zip(o.bounds().iter()) {
            match a.lo.total_cmp(&b.lo) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .bounds()
            .iter()
            .filter(|i| i.width() > 0.0)
            .map(|i| format!("[{:.9}, {:.9}]", i.lo, i.hi))
            .collect();
        write!(f, "{}", parts.join("x"))
    }
}

#[derive(Clone, Debug)]
pub struct Cover {
    pub theta: IBox,
    pub delta: f64,
    pub cells: Vec<Cell>,
}

fn cells_per_dim(width: f64, delta: f64) -> u64 {
    if width <= 0.0 {
        1
    } else {
        // guard against 0.99/1e-4 landing a hair above an integer
        ((width / (2.0 * delta)) * (1.0 - 1e-12)).ceil().max(1.0) as u64
    }
}

pub fn cover_count(theta: &[Interval], delta: f64) -> u64 {
    theta
        .iter()
        .map(|i| cells_per_dim(i.width(), delta))
        .fold(1u64, |a, b| a.saturating_mul(b))
}

/// Regular grid cover of Θ with cells of radius at most δ.
pub fn delta_cover(theta: &[Interval], delta: f64, budget: u64) -> Result<Cover> {
    if !(delta > 0.0) {
        return Err(Error::domain("delta must be positive"));
    }
    if theta.is_empty() || theta.iter().any(|i| !(i.lo <= i.hi) || !i.is_finite()) {
        return Err(Error::domain("cover box must be bounded and nonempty"));
    }
    let needed = cover_count(theta, delta);
    if needed > budget {
        return Err(Error::Resource { needed, budget });
    }
    let counts: Vec<u64> = theta.iter().map(|i| cells_per_dim(i.width(), delta)).collect();
    let mut cells = Vec::with_capacity(needed as usize);
    let mut idx = vec![0u64; theta.len()];
    loop {
        let mut center = Vec::with_capacity(theta.len());
        let mut radius = Vec::with_capacity(theta.len());
        for (d, iv) in theta.iter().enumerate() {
            let n = counts[d] as f64;
            let w = iv.width() / n;
            let lo = iv.lo + w * idx[d] as f64;
            let hi = if idx[d] + 1 == counts[d] { iv.hi } else { iv.lo + w * (idx[d] + 1) as f64 };
            center.push(0.5 * (lo + hi));
            radius.push(0.5 * (hi - lo));
        }
        cells.push(Cell { center, radius });
        let mut d = theta.len();
        loop {
            if d == 0 {
                return Ok(Cover { theta: theta.to_vec(), delta, cells });
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReachTube {
    /// Box and time interval of each segment.
    pub segments: Vec<(IBox, (f64, f64))>,
    pub cell: Cell,
    /// Scaled initial radius and per-segment discrepancy maxima.
    pub delta: f64,
    pub beta_max: Vec<f64>,
    pub weights: Vec<f64>,
    /// Width of the simulation enclosure at the final node.
    pub enclosure_width: f64,
}

impl ReachTube {
    /// Segments overlapping the open interval (a, b), plus those at an end
    /// point when a = b.
    pub fn segments_in(&self, a: f64, b: f64) -> impl Iterator<Item = &(IBox, (f64, f64))> {
        self.segments.iter().filter(move |(_, (lo, hi))| *hi > a && *lo < b || (a == b && *lo <= a && a <= *hi))
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map(|s| s.1 .1).unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct ReachConfig {
    pub sim: SimConfig,
    pub passes: usize,
    /// Fixed metric weights; `None` selects them automatically per cell.
    pub weights: Option<Vec<f64>>,
}

impl ReachConfig {
    pub fn new(sim: SimConfig) -> Self {
        ReachConfig { sim, passes: 6, weights: None }
    }
}

/// Over-approximate the states reachable from `cell` over `[0, T]`.
pub fn reach_cell(cell: &Cell, field: &dyn VectorField, cfg: &ReachConfig) -> Result<ReachTube> {
    let wrap = |e: Error| Error::Cell { cell: cell.to_string(), source: Box::new(e) };
    let trace = simulate(field, &cell.center, &cfg.sim).map_err(wrap)?;
    let constant = field.constant_coords();
    let bounds = cell.bounds();
    let fixed: Vec<(usize, Interval)> = constant.iter().map(|&i| (i, bounds[i])).collect();
    let weights = match &cfg.weights {
        Some(w) => w.clone(),
        None => crate::discrepancy::auto_weights(field, &trace).map_err(wrap)?,
    };
    let delta = scaled_norm(cell.radius.iter().copied(), &weights);
    let opts = DiscrepancyOptions { weights: Some(weights.clone()), fixed: fixed.clone(), passes: cfg.passes };
    let disc = local_discrepancy(&trace, delta, field, &opts).map_err(wrap)?;
    let mut segments = Vec::with_capacity(trace.segments());
    for k in 0..trace.segments() {
        let mut b = trace.segment_hull(k);
        let r = disc.beta_max[k];
        for (i, iv) in b.iter_mut().enumerate() {
            if r > 0.0 {
                *iv = iv.inflate(r / weights[i]);
            }
        }
        for &(i, exact) in &fixed {
            b[i] = exact;
        }
        segments.push((b, (trace.times[k], trace.times[k + 1])));
    }
    let enclosure_width = trace.boxes.last().map(|b| crate::interval::box_diameter(b)).unwrap_or(0.0);
    Ok(ReachTube {
        segments,
        cell: cell.clone(),
        delta,
        beta_max: disc.beta_max,
        weights,
        enclosure_width,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Satisfied,
    Violated,
    Unknown,
}

impl VerdictKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictKind::Satisfied => "satisfied",
            VerdictKind::Violated => "violated",
            VerdictKind::Unknown => "unknown",
        }
    }

    pub fn is_conclusive(&self) -> bool {
        *self != VerdictKind::Unknown
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub cell: Cell,
    pub delta: f64,
}

/// A predicate over reach tubes with a three-valued answer.
pub trait TubeProperty: Sync {
    fn name(&self) -> String;
    fn evaluate(&self, tube: &ReachTube) -> VerdictKind;
}

/// Always satisfied.
pub struct Tautology;

impl TubeProperty for Tautology {
    fn name(&self) -> String {
        "true".into()
    }

    fn evaluate(&self, _tube: &ReachTube) -> VerdictKind {
        VerdictKind::Satisfied
    }
}

pub fn check_cell(tube: &ReachTube, prop: &dyn TubeProperty, delta: f64) -> Verdict {
    Verdict { kind: prop.evaluate(tube), cell: tube.cell.clone(), delta }
}

/// One leaf of the refinement: a cell and its verdict per property.
#[derive(Clone, Debug)]
pub struct LeafCell {
    pub cell: Cell,
    /// δ of the round that produced this cell.
    pub delta: f64,
    pub round: usize,
    pub verdicts: Vec<VerdictKind>,
    /// False if the budget ran out before this cell was simulated.
    pub evaluated: bool,
}

/// Per-round verdict record, for refinement heat maps.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub round: usize,
    pub delta: f64,
    pub cells: Vec<(Cell, Vec<VerdictKind>)>,
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub theta: IBox,
    pub schedule: Vec<f64>,
    pub properties: Vec<String>,
    /// Sorted by cell position; disjoint up to shared faces; union = Θ.
    pub leaves: Vec<LeafCell>,
    pub rounds: Vec<RoundRecord>,
    pub simulations: u64,
    /// Cells whose tube could not be bounded; they count as unknown.
    pub numerical_failures: u64,
    pub complete: bool,
}

impl Partition {
    pub fn cells_with(&self, prop: usize, v: VerdictKind) -> impl Iterator<Item = &LeafCell> {
        self.leaves.iter().filter(move |l| l.verdicts[prop] == v)
    }
}

#[derive(Clone, Debug)]
pub struct RefineConfig {
    pub reach: ReachConfig,
    /// Strictly decreasing δ values; round r covers unresolved cells at schedule[r].
    pub schedule: Vec<f64>,
    pub budget: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    /// Keep per-round records.
    pub record_rounds: bool,
}

/// Halving schedule δ₀, δ₀/2, … down to the last value ≥ δ_min.
pub fn halving_schedule(delta0: f64, delta_min: f64) -> Result<Vec<f64>> {
    if !(delta0 >= delta_min && delta_min > 0.0) {
        return Err(Error::config("need delta0 >= delta_min > 0"));
    }
    let mut s = vec![delta0];
    let mut d = delta0;
    while d / 2.0 >= delta_min * (1.0 - 1e-12) {
        d /= 2.0;
        s.push(d);
    }
    Ok(s)
}

fn resolved(v: &[VerdictKind]) -> bool {
    v.contains(&VerdictKind::Satisfied) || v.iter().all(|k| k.is_conclusive())
}

/// Sub-cover of one cell at radius `delta`.
fn refine_cell(cell: &Cell, delta: f64) -> Vec<Cell> {
    delta_cover(&cell.bounds(), delta, u64::MAX).map(|c| c.cells).unwrap_or_else(|_| vec![cell.clone()])
}

/// Cover Θ at schedule[0], evaluate every property on every cell, and
/// re-cover unresolved cells at the next δ. A cell is resolved once some
/// property is satisfied or all are conclusive.
pub fn verify_refine(
    theta: &[Interval],
    field: &dyn VectorField,
    props: &[&dyn TubeProperty],
    cfg: &RefineConfig,
) -> Result<Partition> {
    if cfg.schedule.is_empty() {
        return Err(Error::config("empty delta schedule"));
    }
    for w in cfg.schedule.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::config("delta schedule must be strictly decreasing"));
        }
    }
    let run = || -> Result<Partition> {
        let first = delta_cover(theta, cfg.schedule[0], cfg.budget)?;
        let mut frontier = first.cells;
        let mut leaves = Vec::new();
        let mut rounds = Vec::new();
        let mut sims = 0u64;
        let mut failures = 0u64;
        let mut complete = true;
        for (r, &delta) in cfg.schedule.iter().enumerate() {
            if frontier.is_empty() {
                break;
            }
            frontier.sort_by(|a, b| a.cmp_position(b));
            let room = cfg.budget.saturating_sub(sims) as usize;
            let skipped: Vec<Cell> = if frontier.len() > room {
                complete = false;
                frontier.split_off(room)
            } else {
                Vec::new()
            };
            let results: Vec<Result<Option<Vec<VerdictKind>>>> = frontier
                .par_iter()
                .map(|c| match reach_cell(c, field, &cfg.reach) {
                    Ok(tube) => Ok(Some(props.iter().map(|p| p.evaluate(&tube)).collect())),
                    // a tube too wide to bound is inconclusive, not fatal
                    Err(e) if e.exit_code() == 3 => {
                        log::debug!("{e}");
                        Ok(None)
                    }
                    Err(e) => Err(e),
                })
                .collect();
            sims += frontier.len() as u64;
            let mut next = Vec::new();
            let last = r + 1 == cfg.schedule.len();
            let mut record = Vec::new();
            for (cell, res) in frontier.drain(..).zip(results) {
                let v = match res? {
                    Some(v) => v,
                    None => {
                        failures += 1;
                        vec![VerdictKind::Unknown; props.len()]
                    }
                };
                if cfg.record_rounds {
                    record.push((cell.clone(), v.clone()));
                }
                if resolved(&v) || last || !complete {
                    leaves.push(LeafCell { cell, delta, round: r, verdicts: v, evaluated: true });
                } else {
                    next.extend(refine_cell(&cell, cfg.schedule[r + 1]));
                }
            }
            for cell in skipped {
                leaves.push(LeafCell {
                    cell,
                    delta,
                    round: r,
                    verdicts: vec![VerdictKind::Unknown; props.len()],
                    evaluated: false,
                });
            }
            if cfg.record_rounds {
                rounds.push(RoundRecord { round: r, delta, cells: record });
            }
            if !complete {
                for cell in next.drain(..) {
                    leaves.push(LeafCell {
                        cell,
                        delta: cfg.schedule[r + 1],
                        round: r + 1,
                        verdicts: vec![VerdictKind::Unknown; props.len()],
                        evaluated: false,
                    });
                }
                break;
            }
            frontier = next;
        }
        leaves.sort_by(|a, b| a.cell.cmp_position(&b.cell));
        Ok(Partition {
            theta: theta.to_vec(),
            schedule: cfg.schedule.clone(),
            properties: props.iter().map(|p| p.name()).collect(),
            leaves,
            rounds,
            simulations: sims,
            numerical_failures: failures,
            complete,
        })
    };
    if cfg.workers == 0 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        pool.install(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Linear;

    #[test]
    fn point_cover() {
        let c = delta_cover(&[Interval::point(0.5)], 0.1, 10).unwrap();
        assert_eq!(c.cells.len(), 1);
        assert_eq!(c.cells[0].center, vec![0.5]);
    }

    #[test]
    fn unit_interval_quarter() {
        let c = delta_cover(&[Interval::new(0.0, 1.0)], 0.25, 10).unwrap();
        let centers: Vec<f64> = c.cells.iter().map(|c| c.center[0]).collect();
        assert_eq!(centers, vec![0.25, 0.75]);
        assert!(c.cells.iter().all(|c| c.radius[0] == 0.25));
    }

    #[test]
    fn budget_fires_for_fine_square() {
        let sq = [Interval::new(0.01, 1.0), Interval::new(0.01, 1.0)];
        assert_eq!(cover_count(&sq, 5e-5), 9900 * 9900);
        match delta_cover(&sq, 5e-5, DEFAULT_BUDGET) {
            Err(Error::Resource { needed, .. }) => assert_eq!(needed, 9900 * 9900),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn cover_tiles_box() {
        let b = [Interval::new(0.0, 1.0), Interval::new(2.0, 2.3), Interval::point(7.0)];
        let c = delta_cover(&b, 0.07, 1000).unwrap();
        assert_eq!(c.cells.len() as u64, cover_count(&b, 0.07));
        let area: f64 = c.cells.iter().map(|c| 4.0 * c.radius[0] * c.radius[1]).sum();
        assert!((area - 0.3).abs() < 1e-12);
        assert!(c.cells.iter().all(|c| c.radius.iter().all(|&r| r <= 0.07)));
        for x in [[0.0, 2.0, 7.0], [1.0, 2.3, 7.0], [0.5, 2.15, 7.0]] {
            assert!(c.cells.iter().any(|c| c.contains(&x)));
        }
    }

    #[test]
    fn static_tube_is_cell_plus_enclosure() {
        let f = Linear::scalar(0.0);
        let cell = Cell { center: vec![0.0], radius: vec![0.1] };
        let cfg = ReachConfig::new(SimConfig::new(0.1, 1e-6, 1.0));
        let tube = reach_cell(&cell, &f, &cfg).unwrap();
        for (b, _) in &tube.segments {
            assert!(b[0].lo <= -0.1 && b[0].hi >= 0.1);
            assert!(b[0].width() <= 0.2 + 1e-6 + 1e-9);
        }
    }

    #[test]
    fn decay_tube_shrinks() {
        let f = Linear::scalar(-1.0);
        let cell = Cell { center: vec![1.0], radius: vec![0.1] };
        let cfg = ReachConfig::new(SimConfig::new(0.05, 1e-6, 1.0));
        let tube = reach_cell(&cell, &f, &cfg).unwrap();
        let radii: Vec<f64> = tube.beta_max.clone();
        for w in radii.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn tautology_needs_one_round() {
        let f = Linear::scalar(-1.0);
        let cfg = RefineConfig {
            reach: ReachConfig::new(SimConfig::new(0.1, 1e-6, 0.5)),
            schedule: vec![0.25, 0.125, 0.0625],
            budget: 100,
            workers: 1,
            record_rounds: false,
        };
        let p = verify_refine(&[Interval::new(0.0, 1.0)], &f, &[&Tautology], &cfg).unwrap();
        assert_eq!(p.simulations, 2);
        assert!(p.leaves.iter().all(|l| l.round == 0 && l.verdicts[0] == VerdictKind::Satisfied));
    }

    #[test]
    fn halving() {
        let s = halving_schedule(0.0256, 1e-4).unwrap();
        assert_eq!(s.len(), 9);
        assert!((s.last().unwrap() - 1e-4).abs() < 1e-18);
    }
}
