//! Rectangular maximum-weight assignment via the O(n³) Hungarian method with
//! potentials, run on the padded square cost matrix.

/// Minimum-cost perfect assignment of an `n × n` matrix. Returns the column
/// assigned to each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays with a sentinel column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Maximum-weight matching on a `rows × cols` weight matrix where `None`
/// marks a missing edge. Returns the matched column per row.
pub fn max_weight_matching(weights: &[Vec<Option<f64>>], cols: usize) -> Vec<Option<usize>> {
    let rows = weights.len();
    let n = rows.max(cols);
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match weights.get(i).and_then(|r| r.get(j).copied().flatten()) {
                    Some(w) => -w,
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&cost);
    (0..rows)
        .map(|i| {
            let j = assignment[i];
            match weights[i].get(j).copied().flatten() {
                Some(w) if w > 0.0 => Some(j),
                _ => None,
            }
        })
        .collect()
}
