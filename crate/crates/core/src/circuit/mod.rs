//! Tap-withdrawal circuit: normalized membrane dynamics, Jacobian,
//! resting-state solve, ablation and gap-parameter augmentation.

mod behavior;
mod file;

pub use behavior::{classify_behavior, classify_trajectory, Behavior, Classification};
pub use file::{load_circuit, parse_circuit, CircuitFile};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::interval::Interval;
use crate::linalg::{IMat, Mat};
use serde::{Deserialize, Serialize};

/// Sigmoid steepness constant: σ(V) = 1/(1 + exp(−K (V − V_EQ)/V_Range)).
pub const SIGMOID_GAIN: f64 = 4.3944;

pub const NEURONS: [&str; 9] = ["PLM", "PVD", "ALM", "AVM", "AVD", "DVA", "PVC", "AVA", "AVB"];
pub const SENSORY: [&str; 4] = ["PLM", "PVD", "ALM", "AVM"];
pub const READOUT: [&str; 2] = ["AVA", "AVB"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Excitatory,
    Inhibitory,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeuronId {
    pub name: String,
    pub index: usize,
}

/// Connection counts. `n_gap[i][j]` is symmetric; `n_syn[i][j]` counts
/// synapses from pre-synaptic j onto post-synaptic i.
#[derive(Clone, Debug, PartialEq)]
pub struct Connectome {
    pub names: Vec<String>,
    pub n_gap: Vec<Vec<u32>>,
    pub n_syn: Vec<Vec<u32>>,
    pub polarity: Vec<Polarity>,
}

impl Connectome {
    pub fn empty(names: &[&str]) -> Self {
        let n = names.len();
        Connectome {
            names: names.iter().map(|s| s.to_string()).collect(),
            n_gap: vec![vec![0; n]; n],
            n_syn: vec![vec![0; n]; n],
            polarity: vec![Polarity::Excitatory; n],
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn neuron(&self, name: &str) -> Result<NeuronId> {
        self.index_of(name)
            .map(|index| NeuronId { name: name.to_string(), index })
            .ok_or_else(|| Error::config(format!("unknown neuron {name}")))
    }

    pub fn add_gap(&mut self, a: usize, b: usize, count: u32) {
        self.n_gap[a][b] += count;
        self.n_gap[b][a] += count;
    }

    pub fn add_synapse(&mut self, pre: usize, post: usize, count: u32) {
        self.n_syn[post][pre] += count;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let mut seen = std::collections::HashSet::new();
        for name in &self.names {
            if !seen.insert(name) {
                return Err(Error::config(format!("duplicate neuron {name}")));
            }
        }
        if self.n_gap.len() != n || self.n_syn.len() != n || self.polarity.len() != n {
            return Err(Error::config("connectome dimension mismatch"));
        }
        for i in 0..n {
            if self.n_gap[i].len() != n || self.n_syn[i].len() != n {
                return Err(Error::config("connectome rows must have length N"));
            }
            if self.n_gap[i][i] != 0 || self.n_syn[i][i] != 0 {
                return Err(Error::config(format!("self connection on {}", self.names[i])));
            }
            for j in 0..n {
                if self.n_gap[i][j] != self.n_gap[j][i] {
                    return Err(Error::config(format!(
                        "gap junction counts between {} and {} are not symmetric",
                        self.names[i], self.names[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pulse {
    pub neuron: usize,
    pub start: f64,
    pub end: f64,
    pub amplitude: f64,
}

/// Rectangular current pulses, half-open `[start, end)`, in V/s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StimulusSchedule {
    pub pulses: Vec<Pulse>,
}

impl StimulusSchedule {
    pub fn none() -> Self {
        StimulusSchedule::default()
    }

    pub fn current(&self, neuron: usize, t: f64) -> f64 {
        self.pulses
            .iter()
            .filter(|p| p.neuron == neuron && p.start <= t && t < p.end)
            .map(|p| p.amplitude)
            .sum()
    }

    /// Enclosure of the injected current over a time interval.
    pub fn current_range(&self, neuron: usize, t: Interval) -> Interval {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for p in self.pulses.iter().filter(|p| p.neuron == neuron) {
            let overlaps = t.hi >= p.start && t.lo < p.end;
            let covers = t.lo >= p.start && t.hi < p.end;
            if covers {
                lo += p.amplitude;
                hi += p.amplitude;
            } else if overlaps {
                lo += p.amplitude.min(0.0);
                hi += p.amplitude.max(0.0);
            }
        }
        Interval::new(lo, hi)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pulses.iter().flat_map(|p| [p.start, p.end]).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Earliest pulse start, if any.
    pub fn onset(&self) -> Option<f64> {
        self.pulses
            .iter()
            .filter(|p| p.amplitude != 0.0)
            .map(|p| p.start)
            .min_by(f64::total_cmp)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for p in &self.pulses {
            if p.neuron >= n {
                return Err(Error::config("stimulus on unknown neuron"));
            }
            if !(p.end > p.start) || !p.start.is_finite() || !p.end.is_finite() {
                return Err(Error::config(format!("stimulus interval [{}, {}) is empty", p.start, p.end)));
            }
            if !p.amplitude.is_finite() {
                return Err(Error::config("stimulus amplitude must be finite"));
            }
        }
        for (k, a) in self.pulses.iter().enumerate() {
            for b in &self.pulses[k + 1..] {
                if a.neuron == b.neuron && a.start < b.end && b.start < a.end {
                    return Err(Error::config("overlapping stimulus pulses on one neuron"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitParams {
    pub g_leak: Vec<f64>,
    pub g_gap: Vec<f64>,
    pub g_syn: Vec<f64>,
    pub v_leak: Vec<f64>,
    /// Synaptic reversal potential of each neuron as a pre-synaptic cell.
    pub e_rev: Vec<f64>,
    pub v_range: f64,
    /// Sigmoid centers.
    pub v_eq: Vec<f64>,
    pub stim: StimulusSchedule,
}

impl CircuitParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        let vecs = [
            ("g_leak", &self.g_leak),
            ("g_gap", &self.g_gap),
            ("g_syn", &self.g_syn),
            ("v_leak", &self.v_leak),
            ("e_rev", &self.e_rev),
            ("v_eq", &self.v_eq),
        ];
        for (name, v) in vecs {
            if v.len() != n {
                return Err(Error::config(format!("{name} has length {}, expected {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(format!("{name} has non-finite entries")));
            }
        }
        for (name, v) in [("g_leak", &self.g_leak), ("g_gap", &self.g_gap), ("g_syn", &self.g_syn)] {
            if v.iter().any(|&x| x <= 0.0) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.v_range > 0.0) {
            return Err(Error::config("v_range must be positive"));
        }
        self.stim.validate(n)
    }
}

#[inline]
fn sigmoid(v: f64, center: f64, v_range: f64) -> f64 {
    1.0 / (1.0 + (-SIGMOID_GAIN * (v - center) / v_range).exp())
}

#[inline]
fn sigmoid_slope(v: f64, center: f64, v_range: f64) -> f64 {
    let s = sigmoid(v, center, v_range);
    SIGMOID_GAIN / v_range * s * (1.0 - s)
}

/// Relative widening applied to sigmoid enclosures to absorb rounding.
const SIG_PAD: f64 = 1e-14;

fn sigmoid_range(v: Interval, center: f64, v_range: f64) -> Interval {
    let a = sigmoid(v.lo, center, v_range);
    let b = sigmoid(v.hi, center, v_range);
    Interval::new((a * (1.0 - SIG_PAD)).max(0.0), (b * (1.0 + SIG_PAD)).min(1.0))
}

fn sigmoid_slope_range(v: Interval, center: f64, v_range: f64) -> Interval {
    let a = sigmoid_slope(v.lo, center, v_range);
    let b = sigmoid_slope(v.hi, center, v_range);
    let peak = SIGMOID_GAIN / (4.0 * v_range);
    let (lo, hi) = if v.contains(center) { (a.min(b), peak) } else { (a.min(b), a.max(b)) };
    Interval::new(lo * (1.0 - SIG_PAD), (hi * (1.0 + SIG_PAD)).min(peak * (1.0 + SIG_PAD)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub conn: Connectome,
    pub params: CircuitParams,
    gap_rows: Vec<Vec<(usize, f64)>>,
    syn_rows: Vec<Vec<(usize, f64)>>,
}

/// Equilibrium solve result with its diagnostics.
#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub v: Vec<f64>,
    pub condition: f64,
}

impl Circuit {
    pub fn new(conn: Connectome, params: CircuitParams) -> Result<Self> {
        conn.validate()?;
        params.validate(conn.len())?;
        let n = conn.len();
        let rows = |m: &Vec<Vec<u32>>| -> Vec<Vec<(usize, f64)>> {
            (0..n)
                .map(|i| (0..n).filter(|&j| m[i][j] > 0).map(|j| (j, m[i][j] as f64)).collect())
                .collect()
        };
        let gap_rows = rows(&conn.n_gap);
        let syn_rows = rows(&conn.n_syn);
        Ok(Circuit { conn, params, gap_rows, syn_rows })
    }

    pub fn n(&self) -> usize {
        self.conn.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.conn.index_of(name)
    }

    pub fn readouts(&self) -> Result<(usize, usize)> {
        let a = self.index_of("AVA").ok_or_else(|| Error::config("circuit has no AVA"))?;
        let b = self.index_of("AVB").ok_or_else(|| Error::config("circuit has no AVB"))?;
        Ok((a, b))
    }

    fn check_state(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::config(format!("state has dimension {}, circuit has {}", v.len(), self.n())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite membrane potential"));
        }
        Ok(())
    }

    /// dV/dt with the gap conductance of row i supplied by `gap(i)`.
    #[inline]
    fn rhs_with(&self, t: f64, v: &[f64], gap: impl Fn(usize) -> f64, dv: &mut [f64]) {
        let p = &self.params;
        let n = self.n();
        let mut sig = [0.0f64; 32];
        let mut sig_heap;
        let sig: &mut [f64] = if n <= 32 {
            &mut sig[..n]
        } else {
            sig_heap = vec![0.0; n];
            &mut sig_heap
        };
        for j in 0..n {
            sig[j] = sigmoid(v[j], p.v_eq[j], p.v_range);
        }
        for i in 0..n {
            let vi = v[i];
            let mut g = 0.0;
            for &(j, c) in &self.gap_rows[i] {
                g += c * (v[j] - vi);
            }
            let mut s = 0.0;
            for &(j, c) in &self.syn_rows[i] {
                s += c * (p.e_rev[j] - vi) * sig[j];
            }
            dv[i] = p.g_leak[i] * (p.v_leak[i] - vi) + gap(i) * g + p.g_syn[i] * s + p.stim.current(i, t);
        }
    }

    fn jacobian_with(&self, v: &[f64], gap: impl Fn(usize) -> f64) -> Mat {
        let p = &self.params;
        let n = self.n();
        let mut j = Mat::zeros(n);
        for i in 0..n {
            let gi = gap(i);
            let mut d = -p.g_leak[i];
            for &(k, c) in &self.gap_rows[i] {
                d -= gi * c;
                j[(i, k)] += gi * c;
            }
            for &(k, c) in &self.syn_rows[i] {
                d -= p.g_syn[i] * c * sigmoid(v[k], p.v_eq[k], p.v_range);
                j[(i, k)] += p.g_syn[i] * c * (p.e_rev[k] - v[i]) * sigmoid_slope(v[k], p.v_eq[k], p.v_range);
            }
            j[(i, i)] = d;
        }
        j
    }

    fn jacobian_enclosure_with(&self, b: &[Interval], gap: impl Fn(usize) -> Interval) -> IMat {
        let p = &self.params;
        let n = self.n();
        let sig: Vec<Interval> = (0..n).map(|k| sigmoid_range(b[k], p.v_eq[k], p.v_range)).collect();
        let slope: Vec<Interval> = (0..n).map(|k| sigmoid_slope_range(b[k], p.v_eq[k], p.v_range)).collect();
        let mut j = IMat::zeros(n);
        for i in 0..n {
            let gi = gap(i);
            let mut d = Interval::point(-p.g_leak[i]);
            for &(k, c) in &self.gap_rows[i] {
                let term = gi.scale(c);
                d = d - term;
                j[(i, k)] = j[(i, k)] + term;
            }
            let gs = p.g_syn[i];
            for &(k, c) in &self.syn_rows[i] {
                d = d - sig[k].scale(gs * c);
                let drive = (Interval::point(p.e_rev[k]) - b[i]).scale(gs * c);
                j[(i, k)] = j[(i, k)] + drive * slope[k];
            }
            j[(i, i)] = d;
        }
        j
    }

    /// dV/dt for the circuit as configured.
    pub fn vector_field(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_state(v)?;
        let mut dv = vec![0.0; self.n()];
        self.rhs_with(t, v, |i| self.params.g_gap[i], &mut dv);
        Ok(dv)
    }

    pub fn jacobian(&self, v: &[f64]) -> Result<Mat> {
        self.check_state(v)?;
        Ok(self.jacobian_with(v, |i| self.params.g_gap[i]))
    }

    /// Max over neurons of |f_i| divided by the largest summed term magnitude,
    /// evaluated with the stimulus removed.
    pub fn relative_residual(&self, v: &[f64]) -> Result<f64> {
        self.check_state(v)?;
        let p = &self.params;
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..self.n() {
            let vi = v[i];
            let leak = p.g_leak[i] * (p.v_leak[i] - vi);
            let mut scale = leak.abs();
            let mut f = leak;
            for &(j, c) in &self.gap_rows[i] {
                let term = p.g_gap[i] * c * (v[j] - vi);
                f += term;
                scale += term.abs();
            }
            for &(j, c) in &self.syn_rows[i] {
                let term = p.g_syn[i] * c * (p.e_rev[j] - vi) * sigmoid(v[j], p.v_eq[j], p.v_range);
                f += term;
                scale += term.abs();
            }
            num = num.max(f.abs());
            den = den.max(scale.max(p.g_leak[i] * p.v_leak[i].abs()));
        }
        Ok(if den == 0.0 { num } else { num / den })
    }

    /// Resting potentials with every sigmoid held at one half. Row i reads
    /// (1 + (g_gap_i Σ n_gap_ij + g_syn_i Σ n_syn_ij / 2)/g_leak_i) V_i
    ///   − Σ (g_gap_i n_gap_ij / g_leak_i) V_j = V_l_i + g_syn_i/(2 g_leak_i) Σ n_syn_ij E_j.
    pub fn equilibrium(&self) -> Result<Equilibrium> {
        let p = &self.params;
        let n = self.n();
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        for i in 0..n {
            let gl = p.g_leak[i];
            let ngap: f64 = self.gap_rows[i].iter().map(|&(_, c)| c).sum();
            let nsyn: f64 = self.syn_rows[i].iter().map(|&(_, c)| c).sum();
            a[(i, i)] = 1.0 + (p.g_gap[i] * ngap + p.g_syn[i] * nsyn / 2.0) / gl;
            for &(j, c) in &self.gap_rows[i] {
                a[(i, j)] = -p.g_gap[i] * c / gl;
            }
            let drive: f64 = self.syn_rows[i].iter().map(|&(j, c)| c * p.e_rev[j]).sum();
            b[i] = p.v_leak[i] + p.g_syn[i] / (2.0 * gl) * drive;
        }
        let sv = a.clone().singular_values();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= 1e12) {
            return Err(Error::Numerical(format!(
                "equilibrium matrix ill-conditioned: condition number {condition:e} (singular values {smin:e}..{smax:e})"
            )));
        }
        let v = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical("equilibrium matrix is singular".into()))?;
        Ok(Equilibrium { v: v.iter().copied().collect(), condition })
    }

    /// Copy with the sigmoid centers replaced by the equilibrium.
    pub fn with_equilibrium(&self) -> Result<Circuit> {
        let eq = self.equilibrium()?;
        let mut c = self.clone();
        c.params.v_eq = eq.v;
        Ok(c)
    }

    pub fn with_stimulus(&self, stim: StimulusSchedule) -> Result<Circuit> {
        stim.validate(self.n())?;
        let mut c = self.clone();
        c.params.stim = stim;
        Ok(c)
    }

    /// Remove neurons. Rows and columns of both count matrices and every
    /// per-neuron vector are dropped; pulses on removed cells vanish.
    /// Sigmoid centers are carried over unchanged; callers that want the
    /// reduced system's own resting state call `with_equilibrium`.
    pub fn ablate(&self, dead: &[&str]) -> Result<Circuit> {
        let mut idx = Vec::new();
        for name in dead {
            if READOUT.contains(name) {
                return Err(Error::config(format!("cannot ablate readout neuron {name}")));
            }
            idx.push(self.conn.neuron(name)?.index);
        }
        let keep: Vec<usize> = (0..self.n()).filter(|i| !idx.contains(i)).collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let sub = |m: &Vec<Vec<u32>>| {
            keep.iter().map(|&i| keep.iter().map(|&j| m[i][j]).collect()).collect::<Vec<Vec<u32>>>()
        };
        let conn = Connectome {
            names: keep.iter().map(|&i| self.conn.names[i].clone()).collect(),
            n_gap: sub(&self.conn.n_gap),
            n_syn: sub(&self.conn.n_syn),
            polarity: keep.iter().map(|&i| self.conn.polarity[i]).collect(),
        };
        let p = &self.params;
        let stim = StimulusSchedule {
            pulses: p
                .stim
                .pulses
                .iter()
                .filter_map(|q| {
                    keep.iter().position(|&i| i == q.neuron).map(|ni| Pulse { neuron: ni, ..q.clone() })
                })
                .collect(),
        };
        let params = CircuitParams {
            g_leak: pick(&p.g_leak),
            g_gap: pick(&p.g_gap),
            g_syn: pick(&p.g_syn),
            v_leak: pick(&p.v_leak),
            e_rev: pick(&p.e_rev),
            v_range: p.v_range,
            v_eq: pick(&p.v_eq),
            stim,
        };
        Circuit::new(conn, params)
    }

    /// Extend the state with p = 10/g_gap for each axis neuron.
    pub fn augment(&self, axes: &[ParamAxis]) -> Result<Augmented> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::config("between one and three parameter axes are supported"));
        }
        let mut idx = Vec::new();
        for a in axes {
            let i = self
                .index_of(&a.neuron)
                .ok_or_else(|| Error::config(format!("axis neuron {} is not in the circuit", a.neuron)))?;
            if !SENSORY.contains(&a.neuron.as_str()) {
                return Err(Error::config(format!("axis neuron {} is not sensory", a.neuron)));
            }
            if idx.contains(&i) {
                return Err(Error::config(format!("duplicate axis {}", a.neuron)));
            }
            a.validate()?;
            idx.push(i);
        }
        let mut axis_of = vec![None; self.n()];
        for (k, &i) in idx.iter().enumerate() {
            axis_of[i] = Some(k);
        }
        Ok(Augmented { base: self.clone(), axes: axes.to_vec(), axis_neuron: idx, axis_of })
    }

    /// Metric weights 1/√g_gap_i.
    fn weights_with(&self, gap: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..self.n()).map(|i| 1.0 / gap(i).sqrt()).collect()
    }
}

impl VectorField for Circuit {
    fn dim(&self) -> usize {
        self.n()
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        self.rhs_with(t, x, |i| self.params.g_gap[i], dx);
    }

    fn jacobian(&self, _t: f64, x: &[f64]) -> Mat {
        self.jacobian_with(x, |i| self.params.g_gap[i])
    }

    fn jacobian_enclosure(&self, _t: Interval, b: &[Interval]) -> Result<IMat> {
        Ok(self.jacobian_enclosure_with(b, |i| Interval::point(self.params.g_gap[i])))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.params.stim.breakpoints()
    }

    fn metric_weights(&self, _x: &[f64]) -> Vec<f64> {
        self.weights_with(|i| self.params.g_gap[i])
    }
}

/// Gap-conductance parameter axis in p = 10/g space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamAxis {
    pub neuron: String,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
}

fn default_lo() -> f64 {
    0.01
}

fn default_hi() -> f64 {
    1.0
}

impl ParamAxis {
    pub fn new(neuron: &str, lo: f64, hi: f64) -> Self {
        ParamAxis { neuron: neuron.to_string(), lo, hi }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0) || !(self.lo < self.hi) || !self.hi.is_finite() {
            return Err(Error::config(format!(
                "axis {} range [{}, {}] must satisfy 0 < lo < hi",
                self.neuron, self.lo, self.hi
            )));
        }
        Ok(())
    }
}

pub fn p_to_g(p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::domain(format!("p must be positive, got {p}")));
    }
    Ok(10.0 / p)
}

pub fn g_to_p(g: f64) -> Result<f64> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::domain(format!("g must be positive, got {g}")));
    }
    Ok(10.0 / g)
}

/// Circuit state extended with constant p-coordinates. State layout is
/// `[V_0 .. V_{N-1}, p_0 .. p_{k-1}]`.
#[derive(Clone, Debug)]
pub struct Augmented {
    pub base: Circuit,
    pub axes: Vec<ParamAxis>,
    pub axis_neuron: Vec<usize>,
    axis_of: Vec<Option<usize>>,
}

impl Augmented {
    pub fn n_voltage(&self) -> usize {
        self.base.n()
    }

    pub fn state(&self, v: &[f64], p: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        x.extend_from_slice(p);
        x
    }

    #[inline]
    fn gap_at(&self, i: usize, x: &[f64]) -> f64 {
        match self.axis_of[i] {
            Some(k) => 10.0 / x[self.base.n() + k],
            None => self.base.params.g_gap[i],
        }
    }

    /// The circuit at a fixed parameter point, with the axis conductances
    /// installed as ordinary constants.
    pub fn at(&self, p: &[f64]) -> Result<Circuit> {
        let mut c = self.base.clone();
        for (k, &i) in self.axis_neuron.iter().enumerate() {
            c.params.g_gap[i] = p_to_g(p[k])?;
        }
        c.params.validate(c.n())?;
        Ok(c)
    }
}

impl VectorField for Augmented {
    fn dim(&self) -> usize {
        self.base.n() + self.axes.len()
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let n = self.base.n();
        self.base.rhs_with(t, &x[..n], |i| self.gap_at(i, x), &mut dx[..n]);
        for d in &mut dx[n..] {
            *d = 0.0;
        }
    }

    fn jacobian(&self, _t: f64, x: &[f64]) -> Mat {
        let n = self.base.n();
        let m = self.dim();
        let inner = self.base.jacobian_with(&x[..n], |i| self.gap_at(i, x));
        let mut j = Mat::zeros(m);
        for r in 0..n {
            j.a[r * m..r * m + n].copy_from_slice(&inner.a[r * n..(r + 1) * n]);
        }
        for (k, &i) in self.axis_neuron.iter().enumerate() {
            let p = x[n + k];
            let s: f64 = self.base.gap_rows[i].iter().map(|&(jj, c)| c * (x[jj] - x[i])).sum();
            j[(i, n + k)] = -10.0 / (p * p) * s;
        }
        j
    }

    fn jacobian_enclosure(&self, _t: Interval, b: &[Interval]) -> Result<IMat> {
        let n = self.base.n();
        let m = self.dim();
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            g.push(match self.axis_of[i] {
                Some(k) => Interval::point(10.0)
                    .div(&b[n + k])
                    .ok_or_else(|| Error::domain("parameter box touches p = 0"))?,
                None => Interval::point(self.base.params.g_gap[i]),
            });
        }
        let inner = self.base.jacobian_enclosure_with(&b[..n], |i| g[i]);
        let mut j = IMat::zeros(m);
        for r in 0..n {
            j.a[r * m..r * m + n].copy_from_slice(&inner.a[r * n..(r + 1) * n]);
        }
        for (k, &i) in self.axis_neuron.iter().enumerate() {
            let p2 = b[n + k].sqr();
            let coef = Interval::point(-10.0)
                .div(&p2)
                .ok_or_else(|| Error::domain("parameter box touches p = 0"))?;
            let mut s = Interval::ZERO;
            for &(jj, c) in &self.base.gap_rows[i] {
                s = s + (b[jj] - b[i]).scale(c);
            }
            j[(i, n + k)] = coef * s;
        }
        Ok(j)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints()
    }

    fn constant_coords(&self) -> Vec<usize> {
        (self.base.n()..self.dim()).collect()
    }

    fn metric_weights(&self, x: &[f64]) -> Vec<f64> {
        let mut w = self.base.weights_with(|i| self.gap_at(i, x));
        w.extend(std::iter::repeat_n(1.0, self.axes.len()));
        w
    }
}
