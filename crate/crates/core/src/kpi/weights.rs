use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// What a [`WeightMap`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapLabel {
    GroundTruth,
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Fused,
    Smoothed,
    Potential,
}

impl MapLabel {
    pub const PER_KPI: [MapLabel; 5] = [MapLabel::Q1, MapLabel::Q2, MapLabel::Q3, MapLabel::Q4, MapLabel::Q5];

    pub fn as_str(&self) -> &'static str {
        match self {
            MapLabel::GroundTruth => "ground_truth",
            MapLabel::Q1 => "q1",
            MapLabel::Q2 => "q2",
            MapLabel::Q3 => "q3",
            MapLabel::Q4 => "q4",
            MapLabel::Q5 => "q5",
            MapLabel::Fused => "fused",
            MapLabel::Smoothed => "smoothed",
            MapLabel::Potential => "potential",
        }
    }
}

impl fmt::Display for MapLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ground_truth" => MapLabel::GroundTruth,
            "q1" => MapLabel::Q1,
            "q2" => MapLabel::Q2,
            "q3" => MapLabel::Q3,
            "q4" => MapLabel::Q4,
            "q5" => MapLabel::Q5,
            "fused" => MapLabel::Fused,
            "smoothed" => MapLabel::Smoothed,
            "potential" => MapLabel::Potential,
            other => return Err(Error::InvalidInput(format!("unknown map label {other:?}"))),
        })
    }
}

/// An `m x m` matrix of non-negative per-pixel weights, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub m: usize,
    pub pixel_size: f64,
    pub label: MapLabel,
    values: Vec<f64>,
}

impl WeightMap {
    pub fn zeros(spec: &GridSpec, label: MapLabel) -> Self {
        WeightMap {
            m: spec.m,
            pixel_size: spec.pixel_size,
            label,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn from_values(m: usize, pixel_size: f64, label: MapLabel, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m {
            return Err(Error::InvalidInput(format!(
                "{} values for a {m}x{m} map",
                values.len()
            )));
        }
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "weight {v} at index {k} is negative or not finite"
            )));
        }
        Ok(WeightMap {
            m,
            pixel_size,
            label,
            values,
        })
    }

    pub fn for_grid(spec: &GridSpec, label: MapLabel, values: Vec<f64>) -> Result<Self> {
        Self::from_values(spec.m, spec.pixel_size, label, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the largest weight; lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        best
    }

    pub fn with_label(mut self, label: MapLabel) -> Self {
        self.label = label;
        self
    }

    /// Copy scaled to unit sum; an all-zero map stays all-zero.
    pub fn normalized(&self) -> WeightMap {
        let s = self.sum();
        let mut out = self.clone();
        if s > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= s);
        }
        out
    }

    pub fn scaled(&self, c: f64) -> WeightMap {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn ensure_same_grid(&self, other: &WeightMap) -> Result<()> {
        if self.m != other.m || self.pixel_size != other.pixel_size {
            return Err(Error::Mismatch(format!(
                "{} is {}x{} @ {} m, {} is {}x{} @ {} m",
                self.label, self.m, self.m, self.pixel_size, other.label, other.m, other.m, other.pixel_size
            )));
        }
        Ok(())
    }

    pub fn ensure_grid(&self, spec: &GridSpec) -> Result<()> {
        if self.m != spec.m || self.pixel_size != spec.pixel_size {
            return Err(Error::Mismatch(format!(
                "{} is {}x{} @ {} m, grid is {}x{} @ {} m",
                self.label, self.m, self.m, self.pixel_size, spec.m, spec.m, spec.pixel_size
            )));
        }
        Ok(())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
