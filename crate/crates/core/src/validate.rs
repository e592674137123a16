//! Monte-Carlo checks of the soundness claims: discrepancy pairs, tube
//! containment, verdicts, and agreement of certified regions with the
//! trajectory classifier. All sampling is seeded and sequential.

use crate::circuit::{classify_trajectory, Behavior, Circuit, ParamAxis};
use crate::discrepancy::{auto_weights, local_discrepancy, scaled_norm, DiscrepancyOptions};
use crate::error::Result;
use crate::field::{Linear, VanDerPol, VectorField};
use crate::interval::{IBox, Interval};
use crate::linalg::Mat;
use crate::odesim::{simulate, solve_points, SimConfig};
use crate::properties::{BehaviorProperty, SegmentCheck, ViolationMode};
use crate::reach::{reach_cell, Cell, ReachConfig, ReachTube, VerdictKind};
use crate::sweep::{Experiment, Prepared, RegionReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Absolute slack for integrator error in the pair check.
pub const PAIR_SLACK: f64 = 1e-9;
/// Tolerance of reference trajectories.
pub const REFERENCE_TOL: f64 = 1e-10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point in the scaled ball ‖D(x − c)‖ ≤ r.
pub fn sample_ball(rng: &mut impl Rng, center: &[f64], r: f64, w: &[f64]) -> Vec<f64> {
    let n = center.len();
    let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let rho = r * rng.gen::<f64>().powf(1.0 / n as f64);
    (0..n).map(|i| center[i] + rho * z[i] / norm / w[i]).collect()
}

/// Uniform point in a box.
pub fn sample_box(rng: &mut impl Rng, b: &[Interval]) -> Vec<f64> {
    b.iter()
        .map(|iv| if iv.hi > iv.lo { iv.lo + (iv.hi - iv.lo) * rng.gen::<f64>() } else { iv.lo })
        .collect()
}

/// One system of the discrepancy test matrix.
pub struct TestSystem {
    pub name: String,
    pub field: Box<dyn VectorField>,
    pub center: Vec<f64>,
    pub delta: f64,
    pub sim: SimConfig,
}

/// Linear contracting, linear expanding, Van der Pol, and the full circuit
/// augmented with one p-axis at p = 0.5.
pub fn test_matrix(circuit: &Circuit, tw_delta: f64) -> Result<Vec<TestSystem>> {
    let contracting = Linear::new(Mat::from_rows(&[vec![-1.0, 0.5], vec![-0.5, -2.0]]));
    let expanding = Linear::new(Mat::from_rows(&[vec![0.5, 1.0], vec![0.0, 0.3]]));
    let aug = circuit.augment(&[ParamAxis::new("AVM", 0.01, 1.0)])?;
    let tw_center = aug.state(&circuit.params.v_eq, &[0.5]);
    Ok(vec![
        TestSystem {
            name: "linear_contracting".into(),
            field: Box::new(contracting),
            center: vec![1.0, -0.5],
            delta: 1e-2,
            sim: SimConfig::new(0.05, 1e-6, 2.0),
        },
        TestSystem {
            name: "linear_expanding".into(),
            field: Box::new(expanding),
            center: vec![1.0, 1.0],
            delta: 1e-2,
            sim: SimConfig::new(0.05, 1e-6, 2.0),
        },
        TestSystem {
            name: "van_der_pol".into(),
            field: Box::new(VanDerPol { mu: 1.0 }),
            center: vec![1.0, 0.0],
            delta: 1e-2,
            sim: SimConfig::new(0.02, 1e-6, 3.0),
        },
        TestSystem { name: "tw_circuit".into(), field: Box::new(aug), center: tw_center, delta: tw_delta, sim: SimConfig::new(0.005, 1e-6, 0.4) },
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairReport {
    pub pairs: usize,
    pub checks: usize,
    pub violations: usize,
    /// max over checks of distance − bound; negative when sound.
    pub worst_margin: f64,
    /// max over checks of distance / bound.
    pub max_ratio: f64,
}

impl PairReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Sample pairs in the δ-ball around `center` and compare their scaled
/// distance at every node time with the discrepancy bound. Each point is
/// also compared with the center trajectory.
pub fn discrepancy_pairs(
    field: &dyn VectorField,
    center: &[f64],
    delta: f64,
    sim: &SimConfig,
    pairs: usize,
    rng: &mut impl Rng,
) -> Result<PairReport> {
    let trace = simulate(field, center, sim)?;
    let w = auto_weights(field, &trace)?;
    let fixed = field.constant_coords().into_iter().map(|i| (i, Interval::centered(center[i], delta / w[i]))).collect();
    let opts = DiscrepancyOptions { weights: Some(w.clone()), fixed, passes: 6 };
    let bound = local_discrepancy(&trace, delta, field, &opts)?;
    let c_ref = solve_points(field, center, &trace.times, REFERENCE_TOL)?;
    let mut rep = PairReport { pairs, checks: 0, violations: 0, worst_margin: f64::NEG_INFINITY, max_ratio: 0.0 };
    let dist = |a: &[f64], b: &[f64]| scaled_norm(a.iter().zip(b).map(|(x, y)| x - y), &w);
    let record = |d: f64, b: f64, rep: &mut PairReport| {
        rep.checks += 1;
        rep.worst_margin = rep.worst_margin.max(d - b);
        if b > 0.0 {
            rep.max_ratio = rep.max_ratio.max(d / b);
        }
        if d > b + PAIR_SLACK {
            rep.violations += 1;
        }
    };
    for _ in 0..pairs {
        let x = sample_ball(rng, center, delta, &w);
        let y = sample_ball(rng, center, delta, &w);
        let xs = solve_points(field, &x, &trace.times, REFERENCE_TOL)?;
        let ys = solve_points(field, &y, &trace.times, REFERENCE_TOL)?;
        let (dxy, dxc) = (dist(&x, &y), dist(&x, center));
        for k in 0..trace.times.len() {
            record(dist(&xs[k], &ys[k]), bound.pair_bound_at(dxy, k), &mut rep);
            record(dist(&xs[k], &c_ref[k]), bound.pair_bound_at(dxc, k), &mut rep);
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContainmentReport {
    pub trajectories: usize,
    pub checks: usize,
    pub misses: usize,
    /// Largest scaled distance of a sample outside its segment box.
    pub worst_excess: f64,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.misses == 0
    }
}

fn excess(b: &[Interval], x: &[f64], w: &[f64]) -> f64 {
    scaled_norm(b.iter().zip(x).map(|(iv, &v)| (iv.lo - v).max(v - iv.hi).max(0.0)), w)
}

/// Trajectories from uniform points of the cell, checked against the
/// segment boxes at both ends and the midpoint of every segment.
pub fn tube_containment(tube: &ReachTube, field: &dyn VectorField, samples: usize, rng: &mut impl Rng) -> Result<ContainmentReport> {
    let mut ts = Vec::with_capacity(3 * tube.segments.len());
    let mut seg = Vec::with_capacity(ts.capacity());
    for (k, (_, (a, b))) in tube.segments.iter().enumerate() {
        for t in [*a, 0.5 * (a + b), *b] {
            ts.push(t);
            seg.push(k);
        }
    }
    let bounds = tube.cell.bounds();
    let mut rep = ContainmentReport { trajectories: samples, checks: 0, misses: 0, worst_excess: 0.0 };
    for _ in 0..samples {
        let x = sample_box(rng, &bounds);
        let xs = solve_points(field, &x, &ts, REFERENCE_TOL)?;
        for (i, p) in xs.iter().enumerate() {
            rep.checks += 1;
            let e = excess(&tube.segments[seg[i]].0, p, &tube.weights);
            if e > 0.0 {
                rep.misses += 1;
                rep.worst_excess = rep.worst_excess.max(e);
            }
        }
    }
    Ok(rep)
}

/// Build the tube for `cell` and run [`tube_containment`] on it.
pub fn cell_containment(
    cell: &Cell,
    field: &dyn VectorField,
    cfg: &ReachConfig,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<(ReachTube, ContainmentReport)> {
    let tube = reach_cell(cell, field, cfg)?;
    let rep = tube_containment(&tube, field, samples, rng)?;
    Ok((tube, rep))
}

/// `n` cells of half-width `radius` on every p-axis, centers uniform in
/// the parameter box shrunk by `radius`.
pub fn random_cells(prep: &Prepared, n: usize, radius: f64, rng: &mut impl Rng) -> Vec<Cell> {
    let shrunk: IBox = prep
        .p_box()
        .iter()
        .map(|iv| if iv.width() > 2.0 * radius { Interval::new(iv.lo + radius, iv.hi - radius) } else { Interval::point(iv.mid()) })
        .collect();
    let nv = prep.n_voltage();
    (0..n)
        .map(|_| {
            let p = sample_box(rng, &shrunk);
            let mut r = vec![0.0; nv];
            r.extend(std::iter::repeat_n(radius, p.len()));
            Cell { center: prep.state(&p), radius: r }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerdictReport {
    pub kind: VerdictKind,
    pub trajectories: usize,
    /// Trajectories on which the pointwise check contradicts the verdict.
    pub contradictions: usize,
}

impl VerdictReport {
    pub fn passed(&self) -> bool {
        self.contradictions == 0
    }
}

/// Check a conclusive verdict on sampled trajectories over the property's
/// checked interval. Satisfied requires the pointwise condition at every
/// sample time, violated its negation (at some time in partial mode).
pub fn verdict_soundness(
    cell: &Cell,
    field: &dyn VectorField,
    prop: &BehaviorProperty,
    kind: VerdictKind,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<VerdictReport> {
    let mut rep = VerdictReport { kind, trajectories: 0, contradictions: 0 };
    if !kind.is_conclusive() {
        return Ok(rep);
    }
    let (a, b) = prop.t_int;
    let n = 400;
    let ts: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
    let bounds = cell.bounds();
    for _ in 0..samples {
        rep.trajectories += 1;
        let x = sample_box(rng, &bounds);
        let xs = solve_points(field, &x, &ts, REFERENCE_TOL)?;
        let checks = xs.iter().map(|p| prop.point_check(p)).collect::<Result<Vec<_>>>()?;
        let ok = match kind {
            VerdictKind::Satisfied => checks.iter().all(|c| *c == SegmentCheck::Holds),
            _ if prop.violation == ViolationMode::Partial => checks.contains(&SegmentCheck::Fails),
            _ => checks.iter().all(|c| *c == SegmentCheck::Fails),
        };
        if !ok {
            rep.contradictions += 1;
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub behavior: Behavior,
    pub region: usize,
    pub bounds: IBox,
    pub samples: usize,
    pub agree: usize,
    /// Parameter points where the classifier disagreed, with its label and integral.
    pub mismatches: Vec<(Vec<f64>, Behavior, f64)>,
}

/// Classify `per_region` uniform parameter points of every certified region
/// with the trajectory classifier.
pub fn oracle_consistency(
    prep: &Prepared,
    exp: &Experiment,
    report: &RegionReport,
    per_region: usize,
    rng: &mut impl Rng,
) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for br in &report.behaviors {
        for (k, r) in br.regions.iter().enumerate() {
            let mut rep = OracleReport {
                behavior: br.behavior,
                region: k,
                bounds: r.bounds.clone(),
                samples: per_region,
                agree: 0,
                mismatches: Vec::new(),
            };
            for _ in 0..per_region {
                let p = sample_box(rng, &r.bounds);
                let c = classify_trajectory(
                    &prep.augmented,
                    &prep.state(&p),
                    exp.horizon,
                    prep.ava,
                    prep.avb,
                    prep.onset,
                    exp.grace,
                    exp.classifier_threshold,
                )?;
                if c.behavior == br.behavior {
                    rep.agree += 1;
                } else {
                    rep.mismatches.push((p, c.behavior, c.integral));
                }
            }
            out.push(rep);
        }
    }
    Ok(out)
}

fn interiors_meet(a: &[Interval], b: &[Interval]) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        let tol = 1e-12 * x.hi.abs().max(y.hi.abs()).max(1.0);
        x.lo.max(y.lo) < x.hi.min(y.hi) - tol
    })
}

/// Pairs of behaviors whose certified cells overlap in their interiors.
pub fn overlapping_behaviors(report: &RegionReport) -> Vec<(Behavior, Behavior)> {
    let mut out = Vec::new();
    for (i, a) in report.behaviors.iter().enumerate() {
        for b in &report.behaviors[i + 1..] {
            let hit = a.cells.iter().any(|(ca, _)| b.cells.iter().any(|(cb, _)| interiors_meet(ca, cb)));
            if hit {
                out.push((a.behavior, b.behavior));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_samples_stay_inside() {
        let mut r = rng(7);
        let w = [2.0, 0.5, 1.0];
        for _ in 0..1000 {
            let x = sample_ball(&mut r, &[1.0, 2.0, 3.0], 0.1, &w);
            let d = scaled_norm(x.iter().zip([1.0, 2.0, 3.0]).map(|(a, b)| a - b), &w);
            assert!(d <= 0.1 + 1e-15);
        }
    }

    #[test]
    fn seeded_samples_repeat() {
        let b = vec![Interval::new(0.0, 1.0), Interval::point(3.0)];
        let a: Vec<Vec<f64>> = (0..5).scan(rng(3), |r, _| Some(sample_box(r, &b))).collect();
        let c: Vec<Vec<f64>> = (0..5).scan(rng(3), |r, _| Some(sample_box(r, &b))).collect();
        assert_eq!(a, c);
        assert!(a.iter().all(|x| x[1] == 3.0 && (0.0..=1.0).contains(&x[0])));
    }

    #[test]
    fn decay_pairs_are_bounded() {
        let f = Linear::scalar(-1.0);
        let rep = discrepancy_pairs(&f, &[1.0], 0.1, &SimConfig::new(0.1, 1e-6, 1.0), 50, &mut rng(1)).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.max_ratio <= 1.0 + 1e-6);
    }

    #[test]
    fn decay_tube_contains_samples() {
        let f = Linear::scalar(-1.0);
        let cell = Cell { center: vec![1.0], radius: vec![0.1] };
        let cfg = ReachConfig::new(SimConfig::new(0.1, 1e-6, 1.0));
        let (_, rep) = cell_containment(&cell, &f, &cfg, 50, &mut rng(2)).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn excess_is_zero_inside() {
        let b = vec![Interval::new(0.0, 1.0)];
        assert_eq!(excess(&b, &[0.5], &[1.0]), 0.0);
        assert!((excess(&b, &[1.5], &[2.0]) - 1.0).abs() < 1e-15);
    }
}
