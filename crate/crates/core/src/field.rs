/// Per-node vector field stored row-major: one row of `width` values per grid node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeField {
    width: usize,
    data: Vec<f64>,
}

impl NodeField {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            data: Vec::new(),
        }
    }

    pub fn filled(nodes: usize, row: &[f64]) -> Self {
        let mut f = Self::new(row.len());
        for _ in 0..nodes {
            f.push_row(row);
        }
        f
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn nodes(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.width..(k + 1) * self.width]
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.width, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width.max(1))
    }

    /// Values of component `i` across all nodes.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs_diff(&self, other: &NodeField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn truncate(&mut self, nodes: usize) {
        self.data.truncate(nodes * self.width);
    }
}
