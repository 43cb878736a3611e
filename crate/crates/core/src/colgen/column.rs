use std::collections::HashMap;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Priced,
    SharedRepriced,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub block: usize,
    pub design: Vec<i64>,
    /// Upper bound on the cheapest completion of `design`; exact once `exact` is set.
    pub cost: f64,
    pub provenance: Provenance,
    pub exact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insert {
    New(usize),
    /// Known design whose stored cost dropped.
    Improved(usize),
    Duplicate(usize),
}

impl Insert {
    pub fn index(self) -> usize {
        match self {
            Insert::New(i) | Insert::Improved(i) | Insert::Duplicate(i) => i,
        }
    }

    pub fn is_new(self) -> bool {
        matches!(self, Insert::New(_))
    }
}

/// Designs proven infeasible for at least one block of a shared-design model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfeasibleDesign {
    pub design: Vec<i64>,
    pub blocks: Vec<usize>,
}

/// Columns deduplicated by `(block, design)`.
#[derive(Clone, Debug, Default)]
pub struct ColumnPool {
    columns: Vec<Column>,
    index: HashMap<(usize, Vec<i64>), usize>,
    infeasible: Vec<InfeasibleDesign>,
}

impl ColumnPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, col: Column) -> Insert {
        if let Some(&k) = self.index.get(&(col.block, col.design.clone())) {
            let old = &mut self.columns[k];
            if col.cost < old.cost {
                old.cost = col.cost;
                old.exact |= col.exact;
                return Insert::Improved(k);
            }
            old.exact |= col.exact && col.cost <= old.cost;
            return Insert::Duplicate(k);
        }
        let k = self.columns.len();
        self.index.insert((col.block, col.design.clone()), k);
        self.columns.push(col);
        Insert::New(k)
    }

    pub fn find(&self, block: usize, design: &[i64]) -> Option<usize> {
        self.index.get(&(block, design.to_vec())).copied()
    }

    pub fn get(&self, k: usize) -> &Column {
        &self.columns[k]
    }

    /// Replaces a stored cost by an exact value.
    pub fn set_exact_cost(&mut self, k: usize, cost: f64) {
        let c = &mut self.columns[k];
        c.cost = cost;
        c.exact = true;
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn mark_infeasible(&mut self, design: &[i64], block: usize) {
        match self.infeasible.iter_mut().find(|d| d.design == design) {
            Some(d) => {
                if !d.blocks.contains(&block) {
                    d.blocks.push(block);
                    d.blocks.sort_unstable();
                }
            }
            None => self.infeasible.push(InfeasibleDesign { design: design.to_vec(), blocks: vec![block] }),
        }
    }

    pub fn is_infeasible(&self, design: &[i64]) -> bool {
        self.infeasible.iter().any(|d| d.design == design)
    }

    pub fn infeasible(&self) -> &[InfeasibleDesign] {
        &self.infeasible
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(block: usize, design: Vec<i64>, cost: f64) -> Column {
        Column { block, design, cost, provenance: Provenance::Priced, exact: false }
    }

    #[test]
    fn dedup_keeps_minimum_cost() {
        let mut pool = ColumnPool::new();
        assert_eq!(pool.insert(col(0, vec![1], 5.0)), Insert::New(0));
        assert_eq!(pool.insert(col(1, vec![1], 5.0)), Insert::New(1));
        assert_eq!(pool.insert(col(0, vec![1], 7.0)), Insert::Duplicate(0));
        assert_eq!(pool.insert(col(0, vec![1], 4.0)), Insert::Improved(0));
        assert_eq!(pool.get(0).cost, 4.0);
        assert_eq!(pool.len(), 2);
    }

    #[test]
    fn infeasible_registry() {
        let mut pool = ColumnPool::new();
        pool.mark_infeasible(&[1, 2], 3);
        pool.mark_infeasible(&[1, 2], 1);
        pool.mark_infeasible(&[1, 2], 3);
        assert_eq!(pool.infeasible(), &[InfeasibleDesign { design: vec![1, 2], blocks: vec![1, 3] }]);
        assert!(pool.is_infeasible(&[1, 2]));
    }
}
