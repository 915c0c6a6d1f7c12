use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u64,
    pub samples: Vec<f64>,
}

/// A univariate stream split into contiguous, time-ordered segments.
/// Windows are never formed across a segment boundary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentedSeries {
    segments: Vec<Segment>,
}

impl SegmentedSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// A single-segment series. Empty input yields an empty series.
    pub fn single(samples: Vec<f64>) -> Self {
        let mut s = Self::new();
        if !samples.is_empty() {
            s.segments.push(Segment { id: 0, samples });
        }
        s
    }

    pub fn push_segment(&mut self, id: u64, samples: Vec<f64>) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::Data(format!("segment {id} is empty")));
        }
        self.segments.push(Segment { id, samples });
        Ok(())
    }

    pub fn from_segments(segments: impl IntoIterator<Item = (u64, Vec<f64>)>) -> Result<Self> {
        let mut s = Self::new();
        for (id, samples) in segments {
            s.push_segment(id, samples)?;
        }
        Ok(s)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// All samples in order, ignoring segment boundaries.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().flat_map(|s| s.samples.iter().copied())
    }

    /// Segment lengths, in order.
    pub fn lengths(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.samples.len()).collect()
    }

    /// The first `len` samples, keeping segment structure.
    pub fn truncate(&self, len: usize) -> SegmentedSeries {
        let mut out = SegmentedSeries::new();
        let mut left = len;
        for seg in &self.segments {
            if left == 0 {
                break;
            }
            let take = left.min(seg.samples.len());
            out.segments.push(Segment {
                id: seg.id,
                samples: seg.samples[..take].to_vec(),
            });
            left -= take;
        }
        out
    }
}
