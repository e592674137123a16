//! Circuit definition files (TOML). See `docs/circuit-format.md`.

use super::{Circuit, CircuitParams, Connectome, Polarity, Pulse, StimulusSchedule};
use crate::error::{Error, Result};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitFile {
    pub name: String,
    pub version: String,
    #[serde(default)]
    pub placeholder: bool,
    #[serde(default)]
    pub notes: Option<String>,
    pub v_range: f64,
    pub reversal: ReversalPotentials,
    /// Polarity assigned to neurons marked "unknown".
    #[serde(default)]
    pub unknown_polarity: Option<Polarity>,
    pub neuron: Vec<NeuronEntry>,
    #[serde(default)]
    pub gap: Vec<GapEntry>,
    #[serde(default)]
    pub synapse: Vec<SynapseEntry>,
    #[serde(default)]
    pub stimulus: Vec<PulseEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReversalPotentials {
    pub excitatory: f64,
    pub inhibitory: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronEntry {
    pub name: String,
    pub polarity: Polarity,
    pub g_leak: f64,
    pub g_gap: f64,
    pub g_syn: f64,
    pub v_leak: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapEntry {
    pub a: String,
    pub b: String,
    pub count: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynapseEntry {
    pub pre: String,
    pub post: String,
    pub count: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseEntry {
    pub neuron: String,
    pub start: f64,
    pub end: f64,
    pub amplitude: f64,
}

impl CircuitFile {
    pub fn build(&self) -> Result<Circuit> {
        if !(self.reversal.excitatory > self.reversal.inhibitory) {
            return Err(Error::config("excitatory reversal potential must exceed the inhibitory one"));
        }
        let names: Vec<&str> = self.neuron.iter().map(|n| n.name.as_str()).collect();
        let mut conn = Connectome::empty(&names);
        let fallback = self.unknown_polarity.unwrap_or(Polarity::Excitatory);
        if fallback == Polarity::Unknown {
            return Err(Error::config("unknown_polarity must be excitatory or inhibitory"));
        }
        for (i, n) in self.neuron.iter().enumerate() {
            conn.polarity[i] = match n.polarity {
                Polarity::Unknown => {
                    if self.unknown_polarity.is_some() {
                        log::info!("neuron {} has unknown polarity; treating it as {:?}", n.name, fallback);
                    } else {
                        log::warn!("neuron {} has unknown polarity; treating it as {:?}", n.name, fallback);
                    }
                    fallback
                }
                p => p,
            };
        }
        let idx = |name: &str, what: &str| {
            names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::config(format!("{what} references unknown neuron {name}")))
        };
        let mut gaps = Vec::new();
        for g in &self.gap {
            let a = idx(&g.a, "gap")?;
            let b = idx(&g.b, "gap")?;
            if a == b {
                return Err(Error::config(format!("gap junction from {} to itself", g.a)));
            }
            gaps.push((a, b, g.count));
        }
        let mut syns = Vec::new();
        for s in &self.synapse {
            let pre = idx(&s.pre, "synapse")?;
            let post = idx(&s.post, "synapse")?;
            if pre == post {
                return Err(Error::config(format!("synapse from {} onto itself", s.pre)));
            }
            syns.push((pre, post, s.count));
        }
        for (a, b, c) in gaps {
            conn.add_gap(a, b, c);
        }
        for (pre, post, c) in syns {
            conn.add_synapse(pre, post, c);
        }
        let mut pulses = Vec::new();
        for s in &self.stimulus {
            pulses.push(Pulse {
                neuron: idx(&s.neuron, "stimulus")?,
                start: s.start,
                end: s.end,
                amplitude: s.amplitude,
            });
        }
        let e_rev = conn
            .polarity
            .iter()
            .map(|p| match p {
                Polarity::Inhibitory => self.reversal.inhibitory,
                _ => self.reversal.excitatory,
            })
            .collect();
        let params = CircuitParams {
            g_leak: self.neuron.iter().map(|n| n.g_leak).collect(),
            g_gap: self.neuron.iter().map(|n| n.g_gap).collect(),
            g_syn: self.neuron.iter().map(|n| n.g_syn).collect(),
            v_leak: self.neuron.iter().map(|n| n.v_leak).collect(),
            e_rev,
            v_range: self.v_range,
            v_eq: self.neuron.iter().map(|n| n.v_leak).collect(),
            stim: StimulusSchedule { pulses },
        };
        let c = Circuit::new(conn, params)?;
        if self.placeholder {
            log::info!("circuit {} v{} uses placeholder constants", self.name, self.version);
        }
        c.with_equilibrium()
    }
}

/// Parse a circuit file and install its resting state as sigmoid centers.
pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let f: CircuitFile = toml::from_str(text).map_err(|e| Error::config(format!("circuit file: {e}")))?;
    f.build()
}

pub fn load_circuit(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    parse_circuit(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
