use std::ops::Range;

/// Contiguous class-ordered spans over an index axis (sample columns or
/// dictionary atoms).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    ranges: Vec<Range<usize>>,
}

impl Partition {
    pub fn from_counts(counts: &[usize]) -> Self {
        let mut start = 0;
        let ranges = counts
            .iter()
            .map(|&c| {
                let r = start..start + c;
                start += c;
                r
            })
            .collect();
        Self { ranges }
    }

    pub fn uniform(classes: usize, per_class: usize) -> Self {
        Self::from_counts(&vec![per_class; classes])
    }

    /// Number of parts.
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Total number of indices covered.
    pub fn total(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn range(&self, part: usize) -> Range<usize> {
        self.ranges[part].clone()
    }

    pub fn size(&self, part: usize) -> usize {
        self.ranges[part].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Part containing `index`.
    pub fn part_of(&self, index: usize) -> Option<usize> {
        self.ranges.iter().position(|r| r.contains(&index))
    }
}
