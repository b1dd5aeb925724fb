use crate::error::Result;
use crate::learners::fold_assignment;

/// Fold labels keyed on row ids rather than positions, so a permuted copy of
/// a dataset gets the same partition and the same per-fold training order.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold label per row position.
    pub fold_id: Vec<usize>,
    /// Training positions per fold, in ascending row-id order.
    pub train: Vec<Vec<usize>>,
    /// Held-out positions per fold, in ascending row-id order.
    pub test: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn new(row_ids: &[u64], k: usize, seed: u64) -> Result<Self> {
        let n = row_ids.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (row_ids[i], i));
        let labels = fold_assignment(n, k, seed)?;
        let mut fold_id = vec![0; n];
        for (c, &pos) in order.iter().enumerate() {
            fold_id[pos] = labels[c];
        }
        let mut train = vec![Vec::new(); k];
        let mut test = vec![Vec::new(); k];
        for &pos in &order {
            let f = fold_id[pos];
            test[f].push(pos);
            for (g, tr) in train.iter_mut().enumerate() {
                if g != f {
                    tr.push(pos);
                }
            }
        }
        Ok(Self { k, fold_id, train, test })
    }
}
