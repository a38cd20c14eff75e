//! Optimal rectangular assignment (Hungarian method with potentials).

/// Solves the min-cost assignment over a possibly sparse cost matrix.
///
/// `cost[i][j] == None` marks an inadmissible pair. The result maximizes the
/// number of admissible pairs first and minimizes their total cost second,
/// which is what a gated tracker wants: a pair is never sacrificed to lower
/// the total. Pairs come back sorted by row.
pub fn solve(cost: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    // Large enough that any matching with one more admissible pair is
    // strictly cheaper.
    let max_cost = cost.iter().flatten().flatten().fold(0.0f64, |a, &c| a.max(c.abs()));
    let big = (rows.min(cols) as f64 + 1.0) * (2.0 * max_cost + 1.0);
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let dense: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let c = if transpose { cost[j][i] } else { cost[i][j] };
                    c.unwrap_or(big)
                })
                .collect()
        })
        .collect();
    let assigned = hungarian(&dense);
    let mut pairs: Vec<(usize, usize)> = assigned
        .into_iter()
        .enumerate()
        .map(|(i, j)| if transpose { (j, i) } else { (i, j) })
        .filter(|&(r, c)| cost[r][c].is_some())
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Dense Hungarian for `n <= m`; returns the column assigned to each row.
/// Ties resolve towards lower column indices.
fn hungarian(a: &[Vec<f64>]) -> Vec<usize> {
    let n = a.len();
    let m = a[0].len();
    assert!(n <= m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}
