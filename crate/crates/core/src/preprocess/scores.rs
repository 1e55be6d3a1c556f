//! Partial SOFA and SIRS scores over a raw-unit window.
//!
//! Thresholds live in a bundled TOML table so they can be audited and
//! replaced without touching code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::VitalRegistry;

const STANDARD_SCORES: &str = include_str!("../../data/scores.toml");

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("parsing score table: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("score component {component:?} references unknown vital {vital:?}")]
    UnknownVital { component: String, vital: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Each threshold the value falls below adds one point.
    Below,
    /// Each threshold the value reaches adds one point.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SofaComponent {
    pub name: String,
    pub vital: String,
    /// Optional denominator vital; the scored quantity becomes
    /// `vital / (per * per_scale)`.
    #[serde(default)]
    pub per: Option<String>,
    #[serde(default = "one")]
    pub per_scale: f64,
    pub direction: Direction,
    pub thresholds: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirsCondition {
    pub vital: String,
    #[serde(default)]
    pub below: Option<f64>,
    #[serde(default)]
    pub above: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirsCriterion {
    pub name: String,
    pub conditions: Vec<SirsCondition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub sofa: Vec<SofaComponent>,
    pub sirs: Vec<SirsCriterion>,
}

impl ScoreConfig {
    pub fn standard() -> Self {
        Self::from_toml(STANDARD_SCORES).expect("bundled score table is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, ScoreError> {
        Ok(toml::from_str(text)?)
    }

    /// Resolves vital names against `registry`.
    pub fn bind(&self, registry: &VitalRegistry) -> Result<BoundScores, ScoreError> {
        let find = |component: &str, vital: &str| {
            registry.index_of(vital).ok_or_else(|| ScoreError::UnknownVital {
                component: component.to_string(),
                vital: vital.to_string(),
            })
        };
        let mut sofa = Vec::new();
        for c in &self.sofa {
            let per = match &c.per {
                Some(p) => Some(find(&c.name, p)?),
                None => None,
            };
            sofa.push((find(&c.name, &c.vital)?, per, c.clone()));
        }
        let mut sirs = Vec::new();
        for c in &self.sirs {
            let conds = c
                .conditions
                .iter()
                .map(|cond| Ok((find(&c.name, &cond.vital)?, cond.below, cond.above)))
                .collect::<Result<Vec<_>, ScoreError>>()?;
            sirs.push(conds);
        }
        Ok(BoundScores { sofa, sirs })
    }
}

type BoundSirs = Vec<(usize, Option<f64>, Option<f64>)>;

/// Score table resolved to registry indices.
#[derive(Debug, Clone)]
pub struct BoundScores {
    sofa: Vec<(usize, Option<usize>, SofaComponent)>,
    sirs: Vec<BoundSirs>,
}

impl BoundScores {
    /// Sum over components of the worst hourly sub-score. `window[v][t]` is raw.
    pub fn sofa_partial(&self, window: &[Vec<f64>]) -> u32 {
        self.sofa
            .iter()
            .map(|(v, per, comp)| {
                let hours = window[*v].len();
                (0..hours)
                    .map(|t| {
                        let mut value = window[*v][t];
                        if let Some(p) = per {
                            value /= window[*p][t] * comp.per_scale;
                        }
                        component_points(value, comp)
                    })
                    .max()
                    .unwrap_or(0)
            })
            .sum()
    }

    /// Number of criteria met at some hour of the window.
    pub fn sirs(&self, window: &[Vec<f64>]) -> u32 {
        self.sirs
            .iter()
            .filter(|conds| {
                conds.iter().any(|&(v, below, above)| {
                    window[v].iter().any(|&x| below.is_some_and(|b| x < b) || above.is_some_and(|a| x > a))
                })
            })
            .count() as u32
    }
}

fn component_points(value: f64, comp: &SofaComponent) -> u32 {
    if !value.is_finite() {
        return 0;
    }
    comp.thresholds
        .iter()
        .filter(|&&th| match comp.direction {
            Direction::Below => value < th,
            Direction::Above => value >= th,
        })
        .count() as u32
}
