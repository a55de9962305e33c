//! Scatter-based fuzzy ranking of candidate relays.
//!
//! Each metric column is summarised by its relative variance; a one-input fuzzy
//! system turns the (max-normalized) relative variances into per-metric weights,
//! and a node's utility is the weighted sum of its per-metric ranks. Ranking
//! instead of raw values keeps metrics of very different magnitudes comparable.

mod inference;
mod table;

use std::cmp::Ordering;

use thiserror::Error;

pub use inference::{FuzzySystem, Triangle};
pub use table::{MetricTable, Orientation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("metric table is empty")]
    EmptyTable,
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("column mean is zero; relative variance undefined")]
    MeanIsZero,
    #[error("rule count overflows u64")]
    Overflow,
    #[error("a fuzzy partition needs at least two terms, got {0}")]
    TermCount(usize),
    #[error("unknown orientation {0:?} (expected benefit or cost)")]
    BadOrientation(String),
    #[error("line {line}, column {col}: {text:?} is not a number")]
    BadNumber { line: usize, col: usize, text: String },
    #[error("csv: {0}")]
    Csv(String),
}

/// Population variance `(1/m) Σ (u - ū)²`. Zero for an empty column.
pub fn variance(column: &[f64]) -> f64 {
    if column.is_empty() {
        return 0.0;
    }
    let m = column.len() as f64;
    let mean = column.iter().sum::<f64>() / m;
    column.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / m
}

/// Relative variance `(1/m) Σ ((u - ū)/ū)²`: dispersion with the magnitude factored out.
pub fn relative_variance(column: &[f64]) -> Result<f64, FuzzyError> {
    if column.is_empty() {
        return Err(FuzzyError::EmptyTable);
    }
    let m = column.len() as f64;
    let mean = column.iter().sum::<f64>() / m;
    let scale = column.iter().fold(0.0_f64, |acc, u| acc.max(u.abs()));
    if scale == 0.0 || mean.abs() <= 1e-12 * scale {
        return Err(FuzzyError::MeanIsZero);
    }
    Ok(column.iter().map(|u| ((u - mean) / mean).powi(2)).sum::<f64>() / m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeVarianceVector(pub Vec<f64>);

impl RelativeVarianceVector {
    /// Relative variance of every column. A zero-mean column carries no usable
    /// dispersion and is given 0 (with a warning).
    pub fn of_table(table: &MetricTable) -> Self {
        let d = (0..table.cols())
            .map(|j| match relative_variance(&table.column(j)) {
                Ok(v) => v,
                Err(_) => {
                    log::warn!(
                        "metric {:?} has zero mean; using relative variance 0",
                        table.column_names()[j]
                    );
                    0.0
                }
            })
            .collect();
        Self(d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Normalizes relative variances by their maximum and maps each through the fuzzy system.
pub fn fuzzy_weights(rv: &RelativeVarianceVector, sys: &FuzzySystem) -> WeightVector {
    let max = rv.0.iter().copied().fold(0.0_f64, f64::max);
    let w = rv
        .0
        .iter()
        .map(|&d| {
            let x = if max > 0.0 { d / max } else { 0.0 };
            sys.infer(x)
        })
        .collect();
    WeightVector(w)
}

/// Per-metric ranks, `m × n`, where a larger rank is always the better value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankTable {
    ranks: Vec<u32>,
    rows: usize,
    cols: usize,
}

impl RankTable {
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self, FuzzyError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(FuzzyError::EmptyTable);
        }
        let mut ranks = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(FuzzyError::RaggedRow {
                    row: i,
                    expected: cols,
                    found: r.len(),
                });
            }
            ranks.extend_from_slice(r);
        }
        Ok(Self {
            ranks,
            rows: rows.len(),
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rank(&self, row: usize, col: usize) -> u32 {
        self.ranks[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<u32> {
        (0..self.rows).map(|i| self.rank(i, col)).collect()
    }
}

/// Ranks each column: benefit metrics ascend (smallest value is rank 1), cost
/// metrics descend (largest value is rank 1). Tied values share the smallest
/// rank of their group.
pub fn rank_table(table: &MetricTable) -> RankTable {
    let (m, n) = (table.rows(), table.cols());
    let mut ranks = vec![0u32; m * n];
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for j in 0..n {
        let col = table.column(j);
        order.clear();
        order.extend(0..m);
        let cmp = |a: &usize, b: &usize| match table.orientations()[j] {
            Orientation::Benefit => col[*a].total_cmp(&col[*b]),
            Orientation::Cost => col[*b].total_cmp(&col[*a]),
        };
        order.sort_by(cmp);
        let mut group_rank = 1u32;
        for (pos, &i) in order.iter().enumerate() {
            if pos > 0 && col[i] != col[order[pos - 1]] {
                group_rank = pos as u32 + 1;
            }
            ranks[i * n + j] = group_rank;
        }
    }
    RankTable { ranks, rows: m, cols: n }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityVector(pub Vec<f64>);

impl UtilityVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `ψ_i = Σ_j w_j · rank(i, j)`.
pub fn node_utilities(ranks: &RankTable, w: &WeightVector) -> Result<UtilityVector, FuzzyError> {
    if w.0.len() != ranks.cols() {
        return Err(FuzzyError::DimensionMismatch {
            what: "weight vector",
            expected: ranks.cols(),
            found: w.0.len(),
        });
    }
    let psi = (0..ranks.rows())
        .map(|i| {
            w.0.iter()
                .enumerate()
                .map(|(j, wj)| wj * f64::from(ranks.rank(i, j)))
                .sum()
        })
        .collect();
    Ok(UtilityVector(psi))
}

/// Every intermediate of a prioritization, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct SbflReport {
    pub relative_variance: RelativeVarianceVector,
    pub weights: WeightVector,
    pub ranks: RankTable,
    pub utilities: UtilityVector,
    /// `(row index, utility)`, best first.
    pub order: Vec<(usize, f64)>,
}

pub fn analyze(table: &MetricTable, sys: &FuzzySystem) -> Result<SbflReport, FuzzyError> {
    let rv = RelativeVarianceVector::of_table(table);
    let weights = fuzzy_weights(&rv, sys);
    let ranks = rank_table(table);
    let utilities = node_utilities(&ranks, &weights)?;
    let order = order_by_utility(&utilities);
    Ok(SbflReport {
        relative_variance: rv,
        weights,
        ranks,
        utilities,
        order,
    })
}

/// Candidate rows sorted by descending utility; ties go to the lower row index.
pub fn prioritize(table: &MetricTable, sys: &FuzzySystem) -> Result<Vec<(usize, f64)>, FuzzyError> {
    analyze(table, sys).map(|r| r.order)
}

/// Row indices with their utilities, best first; ties go to the lower row index.
pub fn order_by_utility(psi: &UtilityVector) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = psi.0.iter().copied().enumerate().collect();
    order.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleMode {
    /// Full multi-input rule base: one rule per combination of input terms.
    Classic,
    /// Single relative-variance input: one rule per term.
    Sbfl,
}

pub fn rule_count(term_count: u32, metric_count: u32, mode: RuleMode) -> Result<u64, FuzzyError> {
    match mode {
        RuleMode::Classic => u64::from(term_count)
            .checked_pow(metric_count)
            .ok_or(FuzzyError::Overflow),
        RuleMode::Sbfl => Ok(u64::from(term_count)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table3() -> MetricTable {
        MetricTable::from_columns(
            vec!["metric_1".into(), "metric_2".into(), "metric_3".into()],
            vec![Orientation::Benefit; 3],
            &[
                vec![45.1, 84.0, 22.9, 91.3, 15.2],
                vec![0.602, 0.263, 0.654, 0.689, 0.784],
                vec![826.0, 538.0, 996.0, 78.0, 443.0],
            ],
        )
        .unwrap()
    }

    fn table1() -> MetricTable {
        MetricTable::from_columns(
            vec!["metric_1".into(), "metric_2".into(), "metric_3".into()],
            vec![Orientation::Benefit; 3],
            &[
                vec![1001.0, 1002.0, 1003.0],
                vec![0.5, 0.8, 0.1],
                vec![1000.0, 2000.0, 3000.0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn relative_variance_examples() {
        let rv = |c: &[f64]| relative_variance(c).unwrap();
        assert!((rv(&[45.1, 84.0, 22.9, 91.3, 15.2]) - 0.361).abs() < 1e-3);
        assert!((rv(&[0.5, 0.8, 0.1]) - 0.377).abs() < 1e-3);
        assert_eq!(rv(&[7.0, 7.0, 7.0]), 0.0);
        assert!((rv(&[1000.0, 2000.0, 3000.0]) - 0.167).abs() < 1e-3);
        // Table 1 metric_1 evaluates to 6.64e-7 (the printed 1e-6 exponent is off by ten)
        assert!((rv(&[1001.0, 1002.0, 1003.0]) - 6.64e-7).abs() < 0.01e-7);
    }

    #[test]
    fn zero_mean_is_an_error_and_substituted() {
        assert_eq!(relative_variance(&[1.0, -1.0]), Err(FuzzyError::MeanIsZero));
        assert_eq!(relative_variance(&[0.0, 0.0]), Err(FuzzyError::MeanIsZero));
        let t = MetricTable::from_rows(vec![vec![0.0, 1.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(RelativeVarianceVector::of_table(&t).0[0], 0.0);
    }

    #[test]
    fn variance_examples() {
        assert!((variance(&[1001.0, 1002.0, 1003.0]) - 0.667).abs() < 1e-3);
        assert!((variance(&[1000.0, 2000.0, 3000.0]) - 666_667.0).abs() < 1.0);
        assert_eq!(variance(&[42.0]), 0.0);
    }

    #[test]
    fn weights_follow_relative_variance_order() {
        let sys = FuzzySystem::default();
        let w = fuzzy_weights(&RelativeVarianceVector(vec![0.361, 0.0914, 0.305]), &sys);
        assert!(w.0[0] > w.0[2] && w.0[2] > w.0[1], "{:?}", w.0);
        let w = fuzzy_weights(&RelativeVarianceVector(vec![0.0; 3]), &sys);
        assert!(w.0.iter().all(|&x| x == w.0[0]));
        let w = fuzzy_weights(&RelativeVarianceVector(vec![2.5, 2.5]), &sys);
        assert_eq!(w.0[0], w.0[1]);
        assert!(w.0.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn ranks_match_printed_orders() {
        let r = rank_table(&table3());
        assert_eq!(r.column(0), vec![3, 4, 2, 5, 1]);
        assert_eq!(r.column(1), vec![2, 1, 3, 4, 5]);
        assert_eq!(r.column(2), vec![4, 3, 5, 1, 2]);
        let r = rank_table(&table1());
        assert_eq!(r.column(1), vec![2, 3, 1]);
    }

    #[test]
    fn ranks_ties_and_cost() {
        let t = MetricTable::from_rows(vec![vec![5.0], vec![5.0], vec![1.0]]).unwrap();
        assert_eq!(rank_table(&t).column(0), vec![2, 2, 1]);
        let t = MetricTable::from_rows(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(rank_table(&t).column(0), vec![1, 2, 3]);
        let t = MetricTable::new(
            vec!["etx".into()],
            vec![Orientation::Cost],
            vec![vec![1.0], vec![3.0], vec![2.0], vec![3.0]],
        )
        .unwrap();
        assert_eq!(rank_table(&t).column(0), vec![4, 1, 3, 1]);
    }

    #[test]
    fn utilities_with_printed_weights() {
        let w = WeightVector(vec![0.849, 0.233, 0.76]);
        let psi = node_utilities(&rank_table(&table3()), &w).unwrap();
        let expected = [6.053, 5.909, 6.197, 5.937, 3.534];
        for (got, want) in psi.0.iter().zip(expected) {
            assert!((got - want).abs() < 0.01, "{got} vs {want}");
        }
        let w = WeightVector(vec![0.0523, 0.753, 0.333]);
        let psi = node_utilities(&rank_table(&table1()), &w).unwrap();
        assert!((psi.0[0] - 1.891).abs() < 0.01);
        assert!((psi.0[2] - 1.909).abs() < 0.01);
        // node2 prints 2.697 but the weighted rank sum is 3.030
        assert!((psi.0[1] - 3.030).abs() < 0.01);

        let zero = node_utilities(&rank_table(&table3()), &WeightVector(vec![0.0; 3])).unwrap();
        assert!(zero.0.iter().all(|&p| p == 0.0));
        assert!(node_utilities(&rank_table(&table3()), &WeightVector(vec![1.0])).is_err());
    }

    #[test]
    fn prioritize_tables() {
        let sys = FuzzySystem::default();
        let order: Vec<usize> = prioritize(&table3(), &sys).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(order, vec![2, 0, 3, 1, 4]);
        let order: Vec<usize> = prioritize(&table1(), &sys).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(order, vec![1, 2, 0]);
        let single = MetricTable::from_rows(vec![vec![3.0, 4.0]]).unwrap();
        let p = prioritize(&single, &sys).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].0, 0);
    }

    #[test]
    fn utility_ties_break_by_index() {
        let t = MetricTable::from_rows(vec![vec![1.0], vec![1.0], vec![0.5]]).unwrap();
        let p = prioritize(&t, &FuzzySystem::default()).unwrap();
        assert_eq!(p.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn rule_counts() {
        assert_eq!(rule_count(3, 3, RuleMode::Classic), Ok(27));
        assert_eq!(rule_count(7, 3, RuleMode::Sbfl), Ok(7));
        assert_eq!(rule_count(5, 1, RuleMode::Classic), Ok(5));
        assert_eq!(rule_count(7, 40, RuleMode::Classic), Err(FuzzyError::Overflow));
    }
}
