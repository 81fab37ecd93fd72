use crate::error::{param_err, Result};

/// One local prediction task over a view ring: a center view and its `N`
/// circularly nearest neighbors, `N/2` on each side, ordered left to right.
///
/// Indices are zero-based view positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Section {
    pub center: usize,
    pub neighbors: Vec<usize>,
}

impl Section {
    /// Same center with the neighbor order reversed (right-to-left traversal).
    pub fn reversed(&self) -> Self {
        Self { center: self.center, neighbors: self.neighbors.iter().rev().copied().collect() }
    }
}

/// Builds the `V` overlapping sections of a ring of `views` views.
pub fn build_sections(views: usize, neighbors: usize) -> Result<Vec<Section>> {
    if neighbors < 2 || neighbors % 2 != 0 {
        return Err(param_err!("neighbor count N={neighbors} must be even and at least 2"));
    }
    if neighbors >= views {
        return Err(param_err!("neighbor count N={neighbors} must be smaller than V={views}"));
    }
    let half = neighbors / 2;
    Ok((0..views)
        .map(|c| {
            let left = (1..=half).rev().map(|d| (c + views - d) % views);
            let right = (1..=half).map(|d| (c + d) % views);
            Section { center: c, neighbors: left.chain(right).collect() }
        })
        .collect())
}

/// A section of a particular shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShapeSection {
    pub shape: usize,
    pub section: Section,
}
