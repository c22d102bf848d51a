use serde::{Deserialize, Serialize};

/// Inclusive token span. In marked-context coordinates `(0, 0)` is the
/// no-answer span pointing at the sequence-start token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanPair {
    pub start: usize,
    pub end: usize,
}

impl SpanPair {
    pub const NONE: SpanPair = SpanPair { start: 0, end: 0 };

    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "span start {start} after end {end}");
        SpanPair { start, end }
    }

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// L1 distance between the endpoint pairs.
    pub fn l1(&self, other: &SpanPair) -> u64 {
        (self.start.abs_diff(other.start) + self.end.abs_diff(other.end)) as u64
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos <= self.end
    }

    pub fn overlaps(&self, other: &SpanPair) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl From<(usize, usize)> for SpanPair {
    fn from((start, end): (usize, usize)) -> Self {
        SpanPair::new(start, end)
    }
}
