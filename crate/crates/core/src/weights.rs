use crate::error::{FlockError, Result};
use crate::hierarchy::Hierarchy;

/// Realized interaction coefficients `a_ij[t]` for one step.
///
/// `rows[i]` is aligned with `hier.leader_indices(i)`; entries outside the
/// leader sets do not exist, so the support always equals the hierarchy's.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    t: u64,
    rows: Vec<Vec<f64>>,
}

impl WeightMatrix {
    pub fn new(hier: &Hierarchy, t: u64, rows: Vec<Vec<f64>>) -> Result<Self> {
        let w = WeightMatrix { t, rows };
        w.check_against(hier)?;
        Ok(w)
    }

    /// Every supported entry set to `value`.
    pub fn constant(hier: &Hierarchy, t: u64, value: f64) -> Result<Self> {
        let rows = (0..hier.k()).map(|i| vec![value; hier.leader_indices(i).len()]).collect();
        Self::new(hier, t, rows)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Weights of the bird at 0-based index `i`, in leader order.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// `a_ij` by 1-based labels, `None` when `j` is not a leader of `i`.
    pub fn get(&self, hier: &Hierarchy, i: usize, j: usize) -> Option<f64> {
        let pos = hier.leader_indices(i - 1).iter().position(|&l| l + 1 == j)?;
        Some(self.rows[i - 1][pos])
    }

    /// `Σ_{j ∈ L(i)} a_ij` for 0-based `i`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().sum()
    }

    pub(crate) fn check_against(&self, hier: &Hierarchy) -> Result<()> {
        if self.rows.len() != hier.k() {
            return Err(FlockError::DimensionMismatch(format!(
                "weights have {} rows for a {}-bird hierarchy",
                self.rows.len(),
                hier.k()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            let expected = hier.leader_indices(i).len();
            if row.len() != expected {
                return Err(FlockError::InvalidWeights(format!(
                    "bird {} has {} weights but {} leaders",
                    i + 1,
                    row.len(),
                    expected
                )));
            }
            if let Some(a) = row.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(FlockError::InvalidWeights(format!(
                    "bird {} has weight {a} outside [0, 1]",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}
