//! Exact minimum-cost bipartite assignment.
//!
//! A shortest-augmenting-path solver with dual potentials (the Hungarian /
//! Jonker-Volgenant family) runs on a square padding of the input. Forbidden
//! entries are priced so that any matching with fewer forbidden pairs is
//! strictly cheaper, which yields a maximum-cardinality matching over the
//! allowed entries with minimum cost among those.
//!
//! Among optimal matchings the solver returns the one whose row-to-column
//! mapping is lexicographically smallest (rows in order, smaller column first,
//! "unmatched" last). That tie-break is resolved by fixing rows one at a time
//! and re-solving the remaining subproblem.

/// Dense cost matrix; `f64::INFINITY` marks a forbidden pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "cost matrix data has wrong length");
        assert!(
            data.iter().all(|v| v.is_finite() || *v == f64::INFINITY),
            "cost entries must be finite or +inf (forbidden)"
        );
        CostMatrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CostMatrix::new(rows, cols, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        CostMatrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn is_allowed(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_finite()
    }

    pub fn forbid(&mut self, row: usize, col: usize) {
        self.data[row * self.cols + col] = f64::INFINITY;
    }

    pub fn transpose(&self) -> CostMatrix {
        CostMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

/// Result of [`solve_assignment`]: matched `(row, col)` pairs sorted by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    /// Column matched to `row`, if any.
    pub fn col_for(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|(r, _)| *r == row).map(|(_, c)| *c)
    }
}

pub fn solve_assignment(cost: &CostMatrix) -> Assignment {
    if cost.rows == 0 || cost.cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    let all_rows: Vec<usize> = (0..cost.rows).collect();
    let all_cols: Vec<usize> = (0..cost.cols).collect();
    let best = solve_sub(cost, &all_rows, &all_cols);
    let scale = cost
        .data
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * (1.0 + scale * cost.rows.min(cost.cols) as f64);

    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut fixed_cost = 0.0;
    let mut free_cols = all_cols;
    for row in 0..cost.rows {
        let rest: Vec<usize> = (row + 1..cost.rows).collect();
        let mut chosen = None;
        for (slot, &col) in free_cols.iter().enumerate() {
            if !cost.is_allowed(row, col) {
                continue;
            }
            let mut cols = free_cols.clone();
            cols.remove(slot);
            let sub = solve_sub(cost, &rest, &cols);
            let card = fixed.len() + 1 + sub.card;
            let total = fixed_cost + cost.get(row, col) + sub.cost;
            if card == best.card && (total - best.cost).abs() <= tol {
                chosen = Some(slot);
                break;
            }
        }
        if let Some(slot) = chosen {
            let col = free_cols.remove(slot);
            fixed_cost += cost.get(row, col);
            fixed.push((row, col));
        }
        // Otherwise the row stays unmatched; some optimal matching must leave it out.
    }

    let total_cost = fixed.iter().map(|&(r, c)| cost.get(r, c)).sum();
    Assignment {
        pairs: fixed,
        total_cost,
    }
}

struct SubSolution {
    card: usize,
    cost: f64,
}

/// Optimal (max-cardinality, then min-cost) value of the submatrix restricted
/// to `rows` x `cols`.
fn solve_sub(cost: &CostMatrix, rows: &[usize], cols: &[usize]) -> SubSolution {
    if rows.is_empty() || cols.is_empty() {
        return SubSolution { card: 0, cost: 0.0 };
    }
    let n = rows.len().max(cols.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &r in rows {
        for &c in cols {
            let v = cost.get(r, c);
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() {
        return SubSolution { card: 0, cost: 0.0 };
    }
    let penalty = hi + n as f64 * (hi - lo) + 1.0;
    let mut square = vec![0.0; n * n];
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let v = cost.get(r, c);
            square[i * n + j] = if v.is_finite() { v } else { penalty };
        }
    }
    let row_to_col = hungarian(n, &square);
    let mut card = 0;
    let mut total = 0.0;
    for (i, &j) in row_to_col.iter().enumerate() {
        if i < rows.len() && j < cols.len() {
            let v = cost.get(rows[i], cols[j]);
            if v.is_finite() {
                card += 1;
                total += v;
            }
        }
    }
    SubSolution { card, cost: total }
}

/// Shortest augmenting path with potentials on an `n x n` finite matrix.
/// Returns the column assigned to each row.
fn hungarian(n: usize, a: &[f64]) -> Vec<usize> {
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|m| *m = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
