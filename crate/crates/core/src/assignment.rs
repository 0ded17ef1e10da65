//! Maximum-weight bipartite assignment (Hungarian method with potentials).

use alloc::vec;
use alloc::vec::Vec;

/// Solves the assignment problem on a rectangular profit matrix given as
/// rows. Returns the total profit of an optimal matching and, for every row,
/// the matched column (`None` when the row is left unmatched because there
/// are more rows than columns).
pub fn max_weight_assignment(profit: &[Vec<i64>]) -> (i64, Vec<Option<usize>>) {
    let rows = profit.len();
    let cols = profit.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    if size == 0 {
        return (0, Vec::new());
    }
    let max = profit.iter().flatten().copied().max().unwrap_or(0).max(0);
    // Square cost matrix, padded with zero-profit cells.
    let cost = |i: usize, j: usize| -> i64 {
        let p = if i < rows && j < cols {
            profit[i][j]
        } else {
            0
        };
        max - p
    };

    // 1-based potentials formulation; column 0 is a sentinel.
    let mut u = vec![0i64; size + 1];
    let mut v = vec![0i64; size + 1];
    let mut owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut matched = vec![None; rows];
    let mut total = 0;
    for j in 1..=size {
        let i = owner[j] - 1;
        if i < rows && j - 1 < cols {
            matched[i] = Some(j - 1);
            total += profit[i][j - 1];
        }
    }
    (total, matched)
}
