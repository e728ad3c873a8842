use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Network, NetworkSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution kernel; `fan_in` is the number of taps feeding one output.
    Conv {
        fan_in: usize,
    },
    Bias,
    BnGamma,
    BnBeta,
    BnMean,
    BnVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::BnMean | ParamKind::BnVar)
    }
}

/// One named parameter tensor the network expects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Ordered, named parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    spec: Option<NetworkSpec>,
    entries: Vec<WeightEntry>,
    index: HashMap<String, usize>,
}

impl Weights {
    pub fn from_entries(spec: Option<NetworkSpec>, entries: Vec<WeightEntry>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.shape.iter().product::<usize>() != e.data.len() {
                return Err(Error::LayerShape {
                    layer: e.name.clone(),
                    expected: e.shape.clone(),
                    found: vec![e.data.len()],
                });
            }
            if index.insert(e.name.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate layer {}", e.name)));
            }
        }
        Ok(Weights {
            spec,
            entries,
            index,
        })
    }

    /// Fan-in uniform kernels, zero biases, identity batch norm.
    pub fn init(params: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::fill(params, |p| match p.kind {
            ParamKind::Conv { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                (0..p.numel())
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect()
            }
            kind => vec![identity_value(kind); p.numel()],
        })
    }

    /// Zero kernels and biases, identity batch norm.
    pub fn zeros(params: &[ParamSpec]) -> Self {
        Self::fill(params, |p| match p.kind {
            ParamKind::Conv { .. } => vec![0.0; p.numel()],
            kind => vec![identity_value(kind); p.numel()],
        })
    }

    fn fill(params: &[ParamSpec], mut f: impl FnMut(&ParamSpec) -> Vec<f32>) -> Self {
        let entries = params
            .iter()
            .map(|p| WeightEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: f(p),
            })
            .collect();
        Self::from_entries(None, entries).expect("parameter plans have unique names")
    }

    pub fn with_spec(mut self, spec: NetworkSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn spec(&self) -> Option<&NetworkSpec> {
        self.spec.as_ref()
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, name: &str) -> Result<&WeightEntry> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| Error::MissingLayer(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&[f32]> {
        self.entry(name).map(|e| e.data.as_slice())
    }

    /// Replaces the payload of `name`, keeping its shape.
    pub fn set(&mut self, name: &str, data: Vec<f32>) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::MissingLayer(name.to_string()))?;
        let e = &mut self.entries[i];
        if data.len() != e.data.len() {
            return Err(Error::LayerShape {
                layer: name.to_string(),
                expected: e.shape.clone(),
                found: vec![data.len()],
            });
        }
        e.data = data;
        Ok(())
    }

    /// Every expected parameter present with its exact shape, nothing extra.
    pub fn check_against(&self, params: &[ParamSpec]) -> Result<()> {
        let expected: HashMap<&str, &ParamSpec> =
            params.iter().map(|p| (p.name.as_str(), p)).collect();
        for e in &self.entries {
            match expected.get(e.name.as_str()) {
                None => return Err(Error::UnexpectedLayer(e.name.clone())),
                Some(p) if p.shape != e.shape => {
                    return Err(Error::LayerShape {
                        layer: e.name.clone(),
                        expected: p.shape.clone(),
                        found: e.shape.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(p) = params.iter().find(|p| !self.index.contains_key(&p.name)) {
            return Err(Error::MissingLayer(p.name.clone()));
        }
        Ok(())
    }
}

fn identity_value(kind: ParamKind) -> f32 {
    match kind {
        ParamKind::BnGamma | ParamKind::BnVar => 1.0,
        _ => 0.0,
    }
}

/// Trainable parameters: kernels, biases and batch-norm affine terms.
pub fn count_parameters(spec: &NetworkSpec) -> Result<usize> {
    Ok(Network::new(spec)?
        .params()
        .iter()
        .filter(|p| p.kind.trainable())
        .map(ParamSpec::numel)
        .sum())
}

pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<Weights> {
    let net = Network::new(spec)?;
    Ok(Weights::init(&net.params(), seed).with_spec(spec.clone()))
}

pub fn zero_weights(spec: &NetworkSpec) -> Result<Weights> {
    let net = Network::new(spec)?;
    Ok(Weights::zeros(&net.params()).with_spec(spec.clone()))
}
