//! Per-feature histogram bins from the training distribution.
//!
//! Bins are cut between distinct training values by rank, so any strictly
//! monotone transform of a feature leaves the bin of every training value
//! unchanged.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    /// Upper edge of bin `i` for `i < n_bins - 1`; `x <= edges[i]` lands in bin `<= i`.
    pub edges: Vec<f64>,
}

impl BinMapper {
    pub fn fit(values: &[f64], max_bins: usize) -> BinMapper {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        sorted.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in sorted {
            match distinct.last_mut() {
                Some((last, c)) if *last == v => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        if distinct.len() <= 1 {
            return BinMapper { edges: Vec::new() };
        }
        let max_bins = max_bins.max(2);
        let cut_after: Vec<usize> = if distinct.len() <= max_bins {
            (0..distinct.len() - 1).collect()
        } else {
            // greedy equal-frequency grouping of distinct values
            let total: usize = distinct.iter().map(|d| d.1).sum();
            let mut cuts = Vec::new();
            let mut acc = 0usize;
            let mut bins_left = max_bins;
            let mut remaining = total;
            let mut in_bin = 0usize;
            for (i, &(_, c)) in distinct.iter().enumerate().take(distinct.len() - 1) {
                acc += c;
                in_bin += c;
                let target = remaining as f64 / bins_left as f64;
                let distinct_left = distinct.len() - 1 - i;
                if (in_bin as f64 >= target || distinct_left < bins_left) && bins_left > 1 {
                    cuts.push(i);
                    remaining = total - acc;
                    bins_left -= 1;
                    in_bin = 0;
                }
            }
            cuts
        };
        let edges = cut_after
            .into_iter()
            .map(|i| {
                let (lo, hi) = (distinct[i].0, distinct[i + 1].0);
                let mid = lo + (hi - lo) / 2.0;
                // keep the edge strictly below the next value
                if mid < hi {
                    mid
                } else {
                    lo
                }
            })
            .collect();
        BinMapper { edges }
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin(&self, x: f64) -> u8 {
        self.edges.partition_point(|&e| e < x) as u8
    }
}
