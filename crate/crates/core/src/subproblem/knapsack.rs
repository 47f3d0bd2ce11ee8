use crate::error::{Error, Result};

/// Reduced costs below `-FIX_TOL` are candidates; everything else stays at 0.
pub const FIX_TOL: f64 = 1e-12;

/// Default guard on `candidates x (capacity + 1)` DP cells.
pub const DEFAULT_CELL_LIMIT: usize = 400_000_000;

/// Machine subproblem of the relaxed GAP: `min r . x, w . x <= b, x binary`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackSubproblem {
    pub reduced_costs: Vec<f64>,
    pub weights: Vec<u64>,
    pub capacity: u64,
}

/// Exact minimizer of a 0-1 knapsack with real costs.
///
/// Only items with negative reduced cost can be worth taking; the DP runs
/// over those items and every capacity `0..=b`. Among optimal solutions
/// the lexicographically smallest vector is returned.
pub fn solve_knapsack_min(sub: &KnapsackSubproblem, cell_limit: usize) -> Result<(Vec<i64>, f64)> {
    let n = sub.reduced_costs.len();
    if sub.weights.len() != n {
        return Err(Error::Dimension {
            what: "knapsack weights",
            expected: n,
            got: sub.weights.len(),
        });
    }
    if sub.reduced_costs.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("knapsack reduced costs"));
    }
    let items: Vec<usize> = (0..n)
        .filter(|&i| sub.reduced_costs[i] < -FIX_TOL && sub.weights[i] <= sub.capacity)
        .collect();
    let mut x = vec![0i64; n];
    if items.is_empty() {
        return Ok((x, 0.0));
    }
    let total: u64 = items.iter().map(|&i| sub.weights[i]).sum();
    let cap = total.min(sub.capacity) as usize;
    let cells = items.len().saturating_mul(cap + 1);
    if cells > cell_limit {
        return Err(Error::Resource(format!(
            "knapsack table of {cells} cells exceeds the limit of {cell_limit}"
        )));
    }

    // best[c]: min value over the current item suffix with load <= c
    let mut best = vec![0.0f64; cap + 1];
    let mut take = vec![false; cells];
    for (k, &i) in items.iter().enumerate().rev() {
        let w = sub.weights[i] as usize;
        let r = sub.reduced_costs[i];
        let row = &mut take[k * (cap + 1)..(k + 1) * (cap + 1)];
        for c in (w..=cap).rev() {
            let with = r + best[c - w];
            // ties keep the item out, which yields the lexicographic minimum
            if with < best[c] - FIX_TOL * (1.0 + best[c].abs()) {
                best[c] = with;
                row[c] = true;
            }
        }
    }
    let mut c = cap;
    for (k, &i) in items.iter().enumerate() {
        if take[k * (cap + 1) + c] {
            x[i] = 1;
            c -= sub.weights[i] as usize;
        }
    }
    let value = x
        .iter()
        .zip(&sub.reduced_costs)
        .filter(|(&v, _)| v == 1)
        .map(|(_, r)| r)
        .sum();
    Ok((x, value))
}
