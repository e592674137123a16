//! Trajectory-local discrepancy functions.
//!
//! Distances are measured as ‖D(x − y)‖₂ for a positive diagonal D. Along
//! each trace segment a coarse box S is built around the segment hull, and
//! the growth rate λ_k bounds the largest eigenvalue of the symmetric part
//! of D J D⁻¹ over S. β then evolves as β_k = β_{k−1} exp(λ_k Δt_k).

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::interval::{IBox, Interval};
use crate::linalg::{sym_lambda_bound, IMat, Mat};
use crate::odesim::ValidatedTrace;

#[derive(Clone, Debug)]
pub struct CoarseEnclosure {
    pub region: IBox,
    /// Growth rate used for the bloat.
    pub rate: f64,
}

/// Piecewise-exponential discrepancy along a trace.
#[derive(Clone, Debug)]
pub struct DiscrepancyBound {
    pub times: Vec<f64>,
    /// λ_k on `[times[k], times[k+1]]`.
    pub rates: Vec<f64>,
    /// β at each node time.
    pub beta: Vec<f64>,
    /// max of β over each piece.
    pub beta_max: Vec<f64>,
    /// Initial radius in the scaled norm.
    pub delta: f64,
    pub weights: Vec<f64>,
    /// Hull of every coarse enclosure.
    pub valid_region: IBox,
    /// Growth rate used in each coarse enclosure.
    pub coarse_rates: Vec<f64>,
}

impl DiscrepancyBound {
    /// β(x, x′, t) for a pair at scaled distance `dist`, evaluated at node `k`.
    pub fn pair_bound_at(&self, dist: f64, k: usize) -> f64 {
        if self.delta == 0.0 {
            return 0.0;
        }
        dist * self.beta[k] / self.delta
    }

    /// β(t) for the full radius, linear-in-log interpolation inside a piece.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len()) - 1;
        if k >= self.rates.len() {
            return *self.beta.last().unwrap();
        }
        self.beta[k] * (self.rates[k] * (t - self.times[k])).exp()
    }

    /// Scaled distance between two states.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        scaled_norm(x.iter().zip(y).map(|(a, b)| a - b), &self.weights)
    }
}

pub fn scaled_norm(v: impl IntoIterator<Item = f64>, w: &[f64]) -> f64 {
    v.into_iter().zip(w).map(|(x, &d)| (d * x).powi(2)).sum::<f64>().sqrt()
}

/// Upper bound on the induced ∞-norm of the Jacobian over `region`
/// (row-sum norm of the entrywise interval magnitudes).
pub fn lipschitz_estimate(region: &[Interval], field: &dyn VectorField, t: Interval) -> Result<f64> {
    let j = enclosure(field, t, region)?;
    Ok(j.row_sum_norm())
}

/// Upper bound on ‖D J D⁻¹‖₂ over `region`, using ‖A‖₂ ≤ √(‖A‖₁‖A‖_∞).
pub fn lipschitz_weighted(region: &[Interval], field: &dyn VectorField, t: Interval, w: &[f64]) -> Result<f64> {
    let j = enclosure(field, t, region)?;
    let m = j.mag().similarity_diag(w);
    Ok((m.row_sum_norm() * m.col_sum_norm()).sqrt())
}

fn enclosure(field: &dyn VectorField, t: Interval, region: &[Interval]) -> Result<IMat> {
    if region.iter().any(|i| !i.is_finite()) {
        return Err(Error::domain("unbounded region"));
    }
    let j = field.jacobian_enclosure(t, region)?;
    if !j.is_finite() {
        return Err(Error::domain("Jacobian enclosure is unbounded over the region"));
    }
    Ok(j)
}

/// S = hull bloated by δ·e^{rate·Δt}/w_i in coordinate i, with constant
/// coordinates clipped to their exact ranges.
pub fn coarse_reach(
    hull: &[Interval],
    delta: f64,
    rate: f64,
    dt: f64,
    weights: &[f64],
    fixed: &[(usize, Interval)],
) -> Result<CoarseEnclosure> {
    let grow = delta * (rate * dt).exp();
    if !grow.is_finite() {
        return Err(Error::Numerical(format!("coarse bloat overflow (rate = {rate:e}, dt = {dt:e})")));
    }
    let mut region: IBox = hull
        .iter()
        .zip(weights)
        .map(|(iv, &w)| if grow > 0.0 { iv.inflate(grow / w) } else { *iv })
        .collect();
    clip_fixed(&mut region, fixed);
    Ok(CoarseEnclosure { region, rate })
}

fn clip_fixed(region: &mut [Interval], fixed: &[(usize, Interval)]) {
    for &(i, r) in fixed {
        region[i] = region[i].intersect(&r).unwrap_or(r);
    }
}

/// Bound on the largest eigenvalue of sym(D J D⁻¹) for every state in `S`:
/// λ_max(sym(D J_c D⁻¹)) plus the row-sum norm of the symmetrized scaled
/// radius matrix, where J_c is the Jacobian at the box center.
pub fn symmetric_eig_upper(s: &[Interval], field: &dyn VectorField, t: Interval, w: &[f64]) -> Result<f64> {
    let enc = enclosure(field, t, s)?;
    let c: Vec<f64> = s.iter().map(|i| i.mid()).collect();
    let jc: Mat = field.jacobian(t.mid(), &c);
    let keep: Vec<usize> = (0..s.len()).collect();
    sym_lambda_bound(&enc, &jc, w, &keep)
}

#[derive(Clone, Debug)]
pub struct DiscrepancyOptions {
    /// Metric weights. `None` takes the field's weights at the trace origin
    /// and chooses constant-coordinate weights automatically.
    pub weights: Option<Vec<f64>>,
    /// Exact ranges of constant coordinates for clipping.
    pub fixed: Vec<(usize, Interval)>,
    /// Maximum fixed-point iterations per coarse enclosure.
    pub passes: usize,
}

impl Default for DiscrepancyOptions {
    fn default() -> Self {
        DiscrepancyOptions { weights: None, fixed: Vec::new(), passes: 6 }
    }
}

/// Weights for constant coordinates that balance initial radius against
/// coupling growth: for coordinate c, K_c√(T/(2a)), with K_c the largest
/// scaled Jacobian column norm along the trace and a the contraction rate
/// of the state block at the origin.
pub fn auto_weights(field: &dyn VectorField, trace: &ValidatedTrace) -> Result<Vec<f64>> {
    let mut w = field.metric_weights(&trace.origin);
    let constant = field.constant_coords();
    if constant.is_empty() {
        return Ok(w);
    }
    let n = field.dim();
    let keep: Vec<usize> = (0..n).filter(|i| !constant.contains(i)).collect();
    let wmin = keep.iter().map(|&i| w[i]).fold(f64::INFINITY, f64::min);
    let j0 = field.jacobian(0.0, &trace.origin);
    let rate = if keep.is_empty() {
        0.0
    } else {
        sym_lambda_bound(&IMat::from_point(&j0), &j0, &w, &keep)?
    };
    let horizon = trace.horizon;
    let a = (-rate).max(1.0 / horizon);
    for &c in &constant {
        let mut k: f64 = 0.0;
        for (idx, x) in trace.points.iter().enumerate() {
            let t = trace.times[idx];
            let j = field.jacobian(t, x);
            let col = scaled_norm(keep.iter().map(|&i| j[(i, c)]), &keep.iter().map(|&i| w[i]).collect::<Vec<_>>());
            k = k.max(col);
        }
        let d = k * (horizon / (2.0 * a)).sqrt();
        w[c] = if d > 0.0 && d.is_finite() { d } else { wmin };
    }
    Ok(w)
}

/// Discrepancy along `trace` for initial pairs within scaled radius `delta`.
pub fn local_discrepancy(
    trace: &ValidatedTrace,
    delta: f64,
    field: &dyn VectorField,
    opts: &DiscrepancyOptions,
) -> Result<DiscrepancyBound> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::domain("discrepancy radius must be finite and nonnegative"));
    }
    let weights = match &opts.weights {
        Some(w) => w.clone(),
        None => auto_weights(field, trace)?,
    };
    if weights.len() != field.dim() || weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::config("discrepancy weights must be positive, one per coordinate"));
    }
    let segs = trace.segments();
    let mut rates = Vec::with_capacity(segs);
    let mut beta = Vec::with_capacity(segs + 1);
    let mut beta_max = Vec::with_capacity(segs);
    let mut lips = Vec::with_capacity(segs);
    let mut valid: Option<IBox> = None;
    let mut b = delta;
    beta.push(b);
    for k in 0..segs {
        let hull = trace.segment_hull(k);
        let dt = trace.times[k + 1] - trace.times[k];
        let tint = Interval::new(trace.times[k], trace.times[k + 1]);
        let s = validated_enclosure(&hull, b, dt, field, tint, &weights, opts)?;
        let lam = symmetric_eig_upper(&s.region, field, tint, &weights)?;
        let grow = (lam * dt).exp();
        let next = b * grow;
        if !next.is_finite() {
            return Err(Error::Numerical(format!("discrepancy overflow at t = {}", trace.times[k + 1])));
        }
        beta_max.push(b.max(next));
        rates.push(lam);
        lips.push(s.rate);
        b = next;
        beta.push(b);
        valid = Some(match valid {
            None => s.region,
            Some(v) => crate::interval::box_hull(&v, &s.region),
        });
    }
    Ok(DiscrepancyBound {
        times: trace.times.clone(),
        rates,
        beta,
        beta_max,
        delta,
        weights,
        valid_region: valid.unwrap_or_else(|| trace.boxes[0].clone()),
        coarse_rates: lips,
    })
}

/// Find S with hull ⊕ δe^{μ⁺(S)Δt} ⊆ S, where μ⁺ is the positive part of
/// the weighted log-norm bound over S. Distances between two solutions
/// that stay in the convex box S grow at most at rate μ(S). Start from a
/// guessed growth factor and enlarge until the bound over the guess
/// confirms it.
fn validated_enclosure(
    hull: &[Interval],
    delta: f64,
    dt: f64,
    field: &dyn VectorField,
    t: Interval,
    w: &[f64],
    opts: &DiscrepancyOptions,
) -> Result<CoarseEnclosure> {
    let mut factor = 1.05f64;
    for _ in 0..opts.passes.max(1) {
        let guess = coarse_reach(hull, delta * factor, 0.0, dt, w, &opts.fixed)?;
        let mu = symmetric_eig_upper(&guess.region, field, t, w)?.max(0.0);
        let need = (mu * dt).exp();
        if need <= factor {
            return coarse_reach(hull, delta, mu, dt, w, &opts.fixed);
        }
        factor = need * 1.25;
    }
    Err(Error::Numerical(format!(
        "coarse enclosure did not stabilize on [{}, {}] (growth factor {factor:e})",
        t.lo, t.hi
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Linear;
    use crate::odesim::{simulate, SimConfig};

    fn opts_identity(n: usize) -> DiscrepancyOptions {
        DiscrepancyOptions { weights: Some(vec![1.0; n]), ..Default::default() }
    }

    #[test]
    fn lipschitz_of_linear_is_row_sum() {
        let a = Mat::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]);
        let f = Linear::new(a.clone());
        let r = vec![Interval::new(-5.0, 5.0); 2];
        assert_eq!(lipschitz_estimate(&r, &f, Interval::point(0.0)).unwrap(), a.row_sum_norm());
        let s = Linear::scalar(-1.0);
        assert_eq!(lipschitz_estimate(&[Interval::new(0.0, 1.0)], &s, Interval::point(0.0)).unwrap(), 1.0);
    }

    #[test]
    fn coarse_reach_examples() {
        let hull = vec![Interval::new(0.0, 1.0)];
        let s = coarse_reach(&hull, 0.0, 5.0, 1.0, &[1.0], &[]).unwrap();
        assert_eq!(s.region, hull);
        let s = coarse_reach(&hull, 0.1, 0.0, 3.0, &[1.0], &[]).unwrap();
        assert!((s.region[0].lo + 0.1).abs() < 1e-15 && (s.region[0].hi - 1.1).abs() < 1e-15);
        let s = coarse_reach(&hull, 0.1, 1.0, 1.0, &[1.0], &[]).unwrap();
        assert!((s.region[0].hi - 1.0 - 0.1 * std::f64::consts::E).abs() < 1e-14);
    }

    #[test]
    fn eig_of_linear_is_exact() {
        let a = Mat::from_rows(&[vec![-1.0, 4.0], vec![0.0, -3.0]]);
        let f = Linear::new(a.clone());
        let lam = symmetric_eig_upper(&[Interval::new(0.0, 1.0); 2], &f, Interval::point(0.0), &[1.0, 1.0]).unwrap();
        let exact = crate::linalg::lambda_max_sym(&a.sym_part()).unwrap();
        assert!((lam - exact).abs() < 1e-10);
        let s = Linear::scalar(-1.0);
        let lam = symmetric_eig_upper(&[Interval::new(0.0, 1.0)], &s, Interval::point(0.0), &[1.0]).unwrap();
        assert!((lam + 1.0).abs() < 1e-10);
    }

    #[test]
    fn scalar_decay_matches_exponential() {
        let f = Linear::scalar(-1.0);
        let tr = simulate(&f, &[1.0], &SimConfig::new(0.05, 1e-6, 1.0)).unwrap();
        let d = local_discrepancy(&tr, 0.1, &f, &opts_identity(1)).unwrap();
        for (k, &l) in d.rates.iter().enumerate() {
            assert!((l + 1.0).abs() < 1e-9, "rate {k} = {l}");
        }
        for (t, b) in d.times.iter().zip(&d.beta) {
            assert!((b - 0.1 * (-t).exp()).abs() < 1e-9);
        }
        for w in d.beta.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn static_system_keeps_radius() {
        let f = Linear::scalar(0.0);
        let tr = simulate(&f, &[0.3], &SimConfig::new(0.1, 1e-6, 1.0)).unwrap();
        let d = local_discrepancy(&tr, 0.25, &f, &opts_identity(1)).unwrap();
        assert!(d.beta.iter().all(|&b| (b - 0.25).abs() < 1e-12));
        assert_eq!(d.pair_bound_at(0.0, 3), 0.0);
    }
}
