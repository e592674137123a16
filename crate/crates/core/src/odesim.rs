//! Validated simulation: a time-stamped sequence of boxes around one
//! trajectory.
//!
//! The integrator is Runge–Kutta–Fehlberg 4(5). The order-4 solution is
//! propagated; twice the embedded error estimate is charged as local error.
//! Accumulated error is carried in the field's weighted 2-norm
//! ‖D(x − y)‖₂ and grown over a step by exp(μ h), where μ bounds the
//! log-norm of D J D⁻¹ over an interval box around the step.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::interval::{box_hull, IBox, Interval};
use crate::linalg::sym_lambda_bound;

pub const MIN_STEP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Maximum node spacing.
    pub tau: f64,
    /// Maximum box diameter.
    pub eps: f64,
    pub horizon: f64,
}

impl SimConfig {
    pub fn new(tau: f64, eps: f64, horizon: f64) -> Self {
        SimConfig { tau, eps, horizon }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.eps > 0.0 && self.horizon > 0.0)
            || !(self.tau.is_finite() && self.eps.is_finite() && self.horizon.is_finite())
        {
            return Err(Error::config("tau, eps and horizon must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ValidatedTrace {
    pub origin: Vec<f64>,
    pub tau: f64,
    pub eps: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    /// Numerical solution at each node.
    pub points: Vec<Vec<f64>>,
    /// R_i
    pub boxes: Vec<IBox>,
    /// Per-segment extra padding for excursions between nodes; `pads[k]`
    /// belongs to `[t_k, t_{k+1}]`.
    pub pads: Vec<Vec<f64>>,
    /// Weights of the error norm.
    pub weights: Vec<f64>,
}

impl ValidatedTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    /// hull(R_k, R_{k+1}) plus the excursion pad of segment k.
    pub fn segment_hull(&self, k: usize) -> IBox {
        box_hull(&self.boxes[k], &self.boxes[k + 1])
            .into_iter()
            .zip(&self.pads[k])
            .map(|(iv, &p)| if p > 0.0 { iv.inflate(p) } else { iv })
            .collect()
    }

    /// Enclosure of the solution at time `t`.
    pub fn dense_point(&self, t: f64) -> Result<IBox> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        let k = self.times.partition_point(|&s| s < t);
        if k < self.times.len() && self.times[k] == t {
            return Ok(self.boxes[k].clone());
        }
        Ok(self.segment_hull(k - 1))
    }

    /// Index of the segment containing `t` (left-closed).
    pub fn segment_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.times.len() - 1) - 1
    }
}

// Fehlberg coefficients.
const C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];
const B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];

struct Step {
    y4: Vec<f64>,
    err: Vec<f64>,
    k: [Vec<f64>; 6],
    stages: [Vec<f64>; 6],
}

/// Stage times are clamped below `t_cap` so a step ending on a breakpoint
/// only sees the field's left limit there.
fn rkf45(field: &dyn VectorField, t: f64, x: &[f64], h: f64, t_cap: f64) -> Step {
    let n = x.len();
    let mut k: [Vec<f64>; 6] = Default::default();
    let mut stages: [Vec<f64>; 6] = Default::default();
    for s in 0..6 {
        let mut xs = x.to_vec();
        for (r, kr) in k.iter().enumerate().take(s) {
            let a = A[s][r];
            if a != 0.0 {
                for i in 0..n {
                    xs[i] += h * a * kr[i];
                }
            }
        }
        let mut d = vec![0.0; n];
        field.eval((t + C[s] * h).min(t_cap), &xs, &mut d);
        k[s] = d;
        stages[s] = xs;
    }
    let mut y4 = x.to_vec();
    let mut err = vec![0.0; n];
    for i in 0..n {
        let mut s4 = 0.0;
        let mut s5 = 0.0;
        for s in 0..6 {
            s4 += B4[s] * k[s][i];
            s5 += B5[s] * k[s][i];
        }
        y4[i] += h * s4;
        err[i] = h * (s5 - s4);
    }
    // the embedded difference understates the error when the leading term
    // nearly cancels; two order-5 half steps give an independent estimate
    let half = order5(field, t, x, 0.5 * h, t_cap);
    let fine = order5(field, t + 0.5 * h, &half, 0.5 * h, t_cap);
    for i in 0..n {
        let d = y4[i] - fine[i];
        if d.abs() > err[i].abs() {
            err[i] = d;
        }
    }
    Step { y4, err, k, stages }
}

fn order5(field: &dyn VectorField, t: f64, x: &[f64], h: f64, t_cap: f64) -> Vec<f64> {
    let n = x.len();
    let mut k: [Vec<f64>; 6] = Default::default();
    let mut xs = vec![0.0; n];
    for s in 0..6 {
        xs.copy_from_slice(x);
        for (r, kr) in k.iter().enumerate().take(s) {
            let a = A[s][r];
            if a != 0.0 {
                for i in 0..n {
                    xs[i] += h * a * kr[i];
                }
            }
        }
        let mut d = vec![0.0; n];
        field.eval((t + C[s] * h).min(t_cap), &xs, &mut d);
        k[s] = d;
    }
    let mut y = x.to_vec();
    for i in 0..n {
        y[i] += h * (0..6).map(|s| B5[s] * k[s][i]).sum::<f64>();
    }
    y
}

fn wnorm(v: &[f64], w: &[f64], keep: &[usize]) -> f64 {
    keep.iter().map(|&i| (w[i] * v[i]).powi(2)).sum::<f64>().sqrt()
}

/// Sorted stop times in (0, T]: field breakpoints and the horizon.
fn stop_times(field: &dyn VectorField, horizon: f64) -> Vec<f64> {
    let mut s: Vec<f64> = field.breakpoints().into_iter().filter(|&b| b > 0.0 && b < horizon).collect();
    s.push(horizon);
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Validated trace from `x0` over `[0, cfg.horizon]`.
pub fn simulate(field: &dyn VectorField, x0: &[f64], cfg: &SimConfig) -> Result<ValidatedTrace> {
    cfg.validate()?;
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::config(format!("initial state has dimension {}, field has {n}", x0.len())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite initial state"));
    }
    let constant = field.constant_coords();
    let keep: Vec<usize> = (0..n).filter(|i| !constant.contains(i)).collect();
    let w = field.metric_weights(x0);
    if keep.iter().any(|&i| !(w[i] > 0.0 && w[i].is_finite())) {
        return Err(Error::config("metric weights must be positive"));
    }
    let wmin = keep.iter().map(|&i| w[i]).fold(f64::INFINITY, f64::min);
    // weighted error e keeps every coordinate within e / w_i
    let e_cap = if keep.is_empty() { 0.0 } else { 0.5 * cfg.eps * wmin };
    let horizon = cfg.horizon;
    let stops = stop_times(field, horizon);

    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut e = 0.0f64;
    let mut times = vec![0.0];
    let mut points = vec![x.clone()];
    let mut boxes = vec![coord_box(&x, e, &w, &keep)];
    let mut pads: Vec<Vec<f64>> = Vec::new();
    let mut h = cfg.tau.min(horizon);
    let mut si = 0;

    while t < horizon {
        while stops[si] <= t {
            si += 1;
        }
        let stop = stops[si];
        h = h.min(cfg.tau).min(stop - t);
        loop {
            let step = rkf45(field, t, &x, h, stop.next_down());
            let est = wnorm(&step.err, &w, &keep);
            if !step.y4.iter().all(|v| v.is_finite()) || !est.is_finite() {
                if h * 0.5 < MIN_STEP {
                    return Err(Error::Divergence { t, msg: "non-finite state".into() });
                }
                h *= 0.5;
                continue;
            }
            // rounding in the stage sums, which the embedded estimate misses
            let round: Vec<f64> = (0..n)
                .map(|i| {
                    let kmax = step.k.iter().fold(0.0f64, |m, kk| m.max(kk[i].abs()));
                    16.0 * f64::EPSILON * (x[i].abs() + step.y4[i].abs() + h * kmax)
                })
                .collect();
            let local = 2.0 * est + wnorm(&round, &w, &keep);
            // box around every stage point, the step end, and the error radius
            let r = e + 2.0 * local;
            let mut big: IBox = x.iter().map(|&v| Interval::point(v)).collect();
            for st in step.stages.iter().chain(std::iter::once(&step.y4)) {
                for i in 0..n {
                    big[i] = big[i].hull(&Interval::point(st[i]));
                }
            }
            for &i in &keep {
                big[i] = big[i].inflate(r / w[i] + 1e-12 * (1.0 + big[i].mag()));
            }
            let jenc = field.jacobian_enclosure(Interval::new(t, t + h), &big)?;
            let jc = field.jacobian(t + 0.5 * h, &crate::interval::box_center(&big));
            let mu = if keep.is_empty() { 0.0 } else { sym_lambda_bound(&jenc, &jc, &w, &keep)? };
            let grow = (mu * h).exp();
            let e_new = e * grow + local;
            let remaining = (horizon - t - h).max(0.0);
            let budget = if mu < 0.0 {
                (1.0 - grow).max(h / horizon)
            } else {
                h / horizon * (-mu * remaining).exp()
            };
            let tol = 0.25 * e_cap * budget;
            if e_new <= e_cap && local <= tol.max(f64::MIN_POSITIVE) {
                let mut pad = vec![0.0; n];
                for &i in &keep {
                    let (mut lo, mut hi, mut amax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
                    for kk in &step.k {
                        lo = lo.min(kk[i]);
                        hi = hi.max(kk[i]);
                        amax = amax.max(kk[i].abs());
                    }
                    if lo < 0.0 && hi > 0.0 {
                        pad[i] = 2.0 * h * amax;
                    }
                }
                let t_new = if (stop - (t + h)).abs() <= 1e-12 * stop.max(1.0) { stop } else { t + h };
                t = t_new;
                x = step.y4;
                e = e_new;
                times.push(t);
                boxes.push(coord_box(&x, e, &w, &keep));
                points.push(x.clone());
                pads.push(pad);
                let fac = if local == 0.0 { 2.0 } else { (0.9 * (tol / local).powf(0.2)).clamp(0.2, 2.0) };
                h = (h * fac).max(MIN_STEP);
                break;
            }
            if h * 0.5 < MIN_STEP {
                return Err(Error::Tolerance { t, eps: cfg.eps });
            }
            h *= 0.5;
        }
    }
    Ok(ValidatedTrace {
        origin: x0.to_vec(),
        tau: cfg.tau,
        eps: cfg.eps,
        horizon,
        times,
        points,
        boxes,
        pads,
        weights: w,
    })
}

fn coord_box(x: &[f64], e: f64, w: &[f64], keep: &[usize]) -> IBox {
    let mut b: IBox = x.iter().map(|&v| Interval::point(v)).collect();
    for &i in keep {
        if e > 0.0 {
            b[i] = Interval::centered(x[i], e / w[i]);
        }
    }
    b
}

/// Plain adaptive integration with mixed tolerance `tol`, returning the
/// state at each requested time. Times must be nondecreasing and start at
/// or after 0. Used for reference trajectories and the behavior oracle.
pub fn solve_points(field: &dyn VectorField, x0: &[f64], ts: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::config("initial state dimension mismatch"));
    }
    let horizon = ts.last().copied().unwrap_or(0.0);
    let mut breaks: Vec<f64> = field.breakpoints().into_iter().filter(|&b| b > 0.0 && b < horizon).collect();
    breaks.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(ts.len());
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut h: f64 = 1e-4f64.min(horizon.max(1e-12));
    let mut bi = 0;
    for &target in ts {
        if target < t {
            return Err(Error::domain("sample times must be nondecreasing"));
        }
        while t < target {
            while bi < breaks.len() && breaks[bi] <= t {
                bi += 1;
            }
            let stop = if bi < breaks.len() { breaks[bi].min(target) } else { target };
            let hh = h.min(stop - t);
            let step = rkf45(field, t, &x, hh, stop.next_down());
            let mut err: f64 = 0.0;
            for i in 0..n {
                err = err.max(step.err[i].abs() / (tol * (1.0 + x[i].abs().max(step.y4[i].abs()))));
            }
            if !err.is_finite() {
                if hh < MIN_STEP {
                    return Err(Error::Divergence { t, msg: "non-finite state".into() });
                }
                h = hh * 0.25;
                continue;
            }
            if err <= 1.0 {
                t = if (stop - (t + hh)).abs() <= 1e-14 * stop.max(1.0) { stop } else { t + hh };
                x = step.y4;
                // local extrapolation is deliberately not used; keep order 4
                let fac = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 4.0) };
                if hh == h || fac < 1.0 {
                    h = hh * fac;
                }
            } else {
                if hh < MIN_STEP {
                    return Err(Error::Tolerance { t, eps: tol });
                }
                h = hh * (0.9 * err.powf(-0.25)).clamp(0.1, 0.5);
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Linear, VanDerPol};
    use crate::interval::box_contains_point;

    #[test]
    fn constant_field_boxes_contain_start() {
        let f = Linear::scalar(0.0);
        let tr = simulate(&f, &[3.5], &SimConfig::new(0.1, 1e-6, 1.0)).unwrap();
        for b in &tr.boxes {
            assert!(b[0].contains(3.5));
            assert!(b[0].width() <= 1e-6);
        }
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn decay_contains_closed_form() {
        let f = Linear::scalar(-1.0);
        let tr = simulate(&f, &[1.0], &SimConfig::new(0.05, 1e-6, 1.0)).unwrap();
        for (t, b) in tr.times.iter().zip(&tr.boxes) {
            assert!(b[0].contains((-t).exp()), "t = {t}: {} vs {}", b[0], (-t).exp());
        }
        assert!(tr.boxes.last().unwrap()[0].contains((-1.0f64).exp()));
        let mid = tr.dense_point(0.5).unwrap();
        assert!(mid[0].contains((-0.5f64).exp()));
    }

    #[test]
    fn timestamp_contract() {
        let f = VanDerPol { mu: 1.0 };
        let cfg = SimConfig::new(0.01, 1e-5, 2.0);
        let tr = simulate(&f, &[1.0, 0.0], &cfg).unwrap();
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(*tr.times.last().unwrap(), 2.0);
        for w in tr.times.windows(2) {
            assert!(w[1] > w[0] && w[1] - w[0] <= cfg.tau * (1.0 + 1e-12));
        }
        for b in &tr.boxes {
            assert!(crate::interval::box_diameter(b) <= cfg.eps);
        }
    }

    #[test]
    fn dense_point_at_node_is_node_box() {
        let f = Linear::scalar(-2.0);
        let tr = simulate(&f, &[1.0], &SimConfig::new(0.1, 1e-6, 1.0)).unwrap();
        let k = tr.len() / 2;
        assert_eq!(tr.dense_point(tr.times[k]).unwrap(), tr.boxes[k]);
        let t = 0.5 * (tr.times[k] + tr.times[k + 1]);
        let b = tr.dense_point(t).unwrap();
        assert!(b[0].contains_interval(&tr.boxes[k][0]) && b[0].contains_interval(&tr.boxes[k + 1][0]));
        assert!(tr.dense_point(1.5).is_err());
    }

    #[test]
    fn rotation_stays_enclosed() {
        // ẋ = y, ẏ = -x from (1, 0): (cos t, -sin t)
        let f = Linear::new(crate::linalg::Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]));
        let tr = simulate(&f, &[1.0, 0.0], &SimConfig::new(0.05, 1e-6, 6.0)).unwrap();
        for k in 0..tr.segments() {
            let h = tr.segment_hull(k);
            for s in 0..=8 {
                let t = tr.times[k] + (tr.times[k + 1] - tr.times[k]) * s as f64 / 8.0;
                assert!(box_contains_point(&h, &[t.cos(), -t.sin()]), "t = {t}");
            }
        }
    }

    #[test]
    fn solve_points_matches_exponential() {
        let f = Linear::scalar(-3.0);
        let xs = solve_points(&f, &[2.0], &[0.0, 0.5, 1.0], 1e-12).unwrap();
        assert!((xs[2][0] - 2.0 * (-3.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn unattainable_tolerance_reports() {
        let f = Linear::scalar(30.0);
        let r = simulate(&f, &[1.0], &SimConfig::new(0.1, 1e-14, 1.0));
        assert!(matches!(r, Err(Error::Tolerance { .. })), "{r:?}");
    }
}
