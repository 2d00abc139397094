use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::plan::ContaminationPlan;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionTag {
    Beginning,
    Middle,
    End,
    Uniform,
}

impl PositionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PositionTag::Beginning => "beginning",
            PositionTag::Middle => "middle",
            PositionTag::End => "end",
            PositionTag::Uniform => "uniform",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionProfile {
    pub offsets: Vec<f64>,
    pub mean: f64,
    pub tag: PositionTag,
}

fn tercile(x: f64) -> usize {
    ((x * 3.0) as usize).min(2)
}

impl PositionProfile {
    /// Offsets are fractions of the run in [0, 1]; they are sorted here.
    pub fn from_offsets(mut offsets: Vec<f64>) -> Self {
        offsets.sort_by(f64::total_cmp);
        let n = offsets.len();
        let mean = if n == 0 { 0.0 } else { offsets.iter().sum::<f64>() / n as f64 };
        let mut seen = [false; 3];
        for &x in &offsets {
            seen[tercile(x)] = true;
        }
        let tag = if n > 0 && seen.iter().all(|&s| s) && max_gap(&offsets) < 2.0 / n as f64 {
            PositionTag::Uniform
        } else {
            match tercile(mean) {
                0 => PositionTag::Beginning,
                1 => PositionTag::Middle,
                _ => PositionTag::End,
            }
        };
        PositionProfile { offsets, mean, tag }
    }
}

/// Largest spacing between consecutive offsets, counting the run edges 0 and 1.
fn max_gap(sorted: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut gap: f64 = 0.0;
    for &x in sorted {
        gap = gap.max(x - prev);
        prev = x;
    }
    gap.max(1.0 - prev)
}

pub fn position_profile(plan: &ContaminationPlan, stream_length: u64) -> Result<BTreeMap<String, PositionProfile>> {
    let mut offsets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let denom = stream_length.max(1) as f64;
    for ins in plan.resolve_insertions(stream_length)? {
        offsets.entry(ins.question_id).or_default().push(ins.position as f64 / denom);
    }
    Ok(offsets.into_iter().map(|(id, o)| (id, PositionProfile::from_offsets(o))).collect())
}

pub fn tag_counts(profiles: &BTreeMap<String, PositionProfile>) -> BTreeMap<PositionTag, usize> {
    let mut counts = BTreeMap::new();
    for p in profiles.values() {
        *counts.entry(p.tag).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_offsets_are_beginning() {
        let p = PositionProfile::from_offsets(vec![0.3, 0.01, 0.2]);
        assert_eq!(p.tag, PositionTag::Beginning);
        assert_eq!(p.offsets, vec![0.01, 0.2, 0.3]);
    }

    #[test]
    fn evenly_spread_is_uniform() {
        let p = PositionProfile::from_offsets(vec![0.1, 0.5, 0.9]);
        assert!((p.mean - 0.5).abs() < 1e-15);
        assert_eq!(p.tag, PositionTag::Uniform);
        let clustered = PositionProfile::from_offsets(vec![0.05, 0.34, 0.35, 0.36, 0.95]);
        assert_eq!(clustered.tag, PositionTag::Middle);
    }

    #[test]
    fn late_single_offset_is_end() {
        assert_eq!(PositionProfile::from_offsets(vec![0.99]).tag, PositionTag::End);
        assert_eq!(PositionProfile::from_offsets(vec![1.0]).tag, PositionTag::End);
    }
}
