//! Phase-1 feasibility for `a_k . lambda >= c_k` with a dense Bland simplex.
//!
//! The row normals are first orthonormalized; the LP runs over coordinates
//! in their span, so its width is bounded by the row count rather than by
//! the multiplier dimension.

use super::{Feasibility, Halfspace};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const RANK_TOL: f64 = 1e-10;

/// Tolerances for [`lp_feasible_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Feasible iff `t* <= feas_scale * (1 + max |c_k|)`.
    pub feas_scale: f64,
    /// Pivot budget; `None` means `50 * (dimension + rows)`.
    pub iteration_cap: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_scale: 1e-9,
            iteration_cap: None,
        }
    }
}

/// Orthonormal basis of the span of `vectors` (rows of the result).
pub(crate) fn orthonormal_basis<'a>(
    vectors: impl IntoIterator<Item = &'a [f64]>,
    dim: usize,
) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.to_vec();
        // two passes of modified Gram-Schmidt keep the basis orthogonal
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > RANK_TOL * scale {
            w.iter_mut().for_each(|x| *x /= n);
            basis.push(w);
        }
        if basis.len() == dim {
            break;
        }
    }
    basis
}

pub fn lp_feasible(rows: &[Halfspace]) -> Result<Feasibility> {
    lp_feasible_with(rows, &LpOptions::default())
}

/// Solves `min t  s.t.  a_k . lambda + t >= c_k` and classifies the system.
///
/// `t` is bounded below by `-1`, which keeps the program bounded; reaching
/// that bound just means the system is strictly feasible.
pub fn lp_feasible_with(rows: &[Halfspace], opts: &LpOptions) -> Result<Feasibility> {
    let dim = rows.first().map_or(0, |r| r.normal.len());
    if rows.iter().any(|r| r.normal.len() != dim) {
        return Err(Error::Detector("halfspace normals differ in length".into()));
    }
    if rows
        .iter()
        .any(|r| !r.offset.is_finite() || r.normal.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("halfspace system"));
    }
    if rows.is_empty() {
        return Ok(Feasibility::Feasible {
            witness: vec![0.0; dim],
        });
    }
    let basis = orthonormal_basis(rows.iter().map(|r| r.normal.as_slice()), dim);
    let r = basis.len();
    let n = rows.len();
    let cmax = rows.iter().map(|r| r.offset.abs()).fold(0.0, f64::max);

    // columns: z+ (r), z- (r), t' (1), surplus (n); t = t' - 1
    let cols = 2 * r + 1 + n;
    let width = cols + 1;
    let mut tab = vec![0.0f64; (n + 1) * width];
    for (k, row) in rows.iter().enumerate() {
        let line = &mut tab[k * width..(k + 1) * width];
        // stored as  -B a . z + ... - t' + s = -(c + 1)
        for (q, b) in basis.iter().enumerate() {
            let coef: f64 = row.normal.iter().zip(b).map(|(x, y)| x * y).sum();
            line[q] = -coef;
            line[r + q] = coef;
        }
        line[2 * r] = -1.0;
        line[2 * r + 1 + k] = 1.0;
        line[cols] = -(row.offset + 1.0);
    }
    // objective row holds reduced costs of  min t'
    tab[n * width + 2 * r] = 1.0;
    let mut basic: Vec<usize> = (0..n).map(|k| 2 * r + 1 + k).collect();

    // one pivot on t' at the most violated row makes every row feasible
    let start = (0..n)
        .min_by(|&a, &b| tab[a * width + cols].total_cmp(&tab[b * width + cols]))
        .unwrap_or(0);
    if tab[start * width + cols] < 0.0 {
        pivot(&mut tab, width, n, start, 2 * r);
        basic[start] = 2 * r;
    }

    let cap = opts.iteration_cap.unwrap_or(50 * (dim + n));
    let mut iterations = 0;
    loop {
        let obj = &tab[n * width..(n + 1) * width];
        // Bland: lowest-index column with negative reduced cost
        let Some(enter) = (0..cols).find(|&j| obj[j] < -PIVOT_TOL) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for k in 0..n {
            let a = tab[k * width + enter];
            if a > PIVOT_TOL {
                let ratio = tab[k * width + cols] / a;
                let better = match leave {
                    None => true,
                    Some((l, best)) => {
                        ratio < best - 1e-12 || (ratio <= best + 1e-12 && basic[k] < basic[l])
                    }
                };
                if better {
                    leave = Some((k, ratio));
                }
            }
        }
        let Some((leave, _)) = leave else {
            return Err(Error::Solver(format!(
                "phase-1 program unbounded in column {enter}; t is bounded below, so this is numerical"
            )));
        };
        if iterations >= cap {
            return Err(Error::Solver(format!(
                "simplex exceeded {cap} pivots ({n} rows, rank {r}, dimension {dim})"
            )));
        }
        pivot(&mut tab, width, n, leave, enter);
        basic[leave] = enter;
        iterations += 1;
    }

    let mut z = vec![0.0; 2 * r + 1];
    for (k, &b) in basic.iter().enumerate() {
        if b <= 2 * r {
            z[b] = tab[k * width + cols];
        }
    }
    let t = z[2 * r] - 1.0;
    if t <= opts.feas_scale * (1.0 + cmax) {
        let mut witness = vec![0.0; dim];
        for (q, b) in basis.iter().enumerate() {
            let zq = z[q] - z[r + q];
            witness.iter_mut().zip(b).for_each(|(w, v)| *w += zq * v);
        }
        Ok(Feasibility::Feasible { witness })
    } else {
        Ok(Feasibility::Infeasible { margin: t })
    }
}

/// Gauss-Jordan pivot; the objective row is row `n`.
fn pivot(tab: &mut [f64], width: usize, n: usize, row: usize, col: usize) {
    let p = tab[row * width + col];
    for v in &mut tab[row * width..(row + 1) * width] {
        *v /= p;
    }
    let pivot_row: Vec<f64> = tab[row * width..(row + 1) * width].to_vec();
    for k in 0..=n {
        if k == row {
            continue;
        }
        let f = tab[k * width + col];
        if f != 0.0 {
            for (v, pr) in tab[k * width..(k + 1) * width].iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            tab[k * width + col] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(normal: &[f64], offset: f64) -> Halfspace {
        Halfspace {
            normal: normal.to_vec(),
            offset,
        }
    }

    #[test]
    fn touching_halfspaces_are_feasible() {
        match lp_feasible(&[hs(&[1.0], 1.0), hs(&[-1.0], -1.0)]).unwrap() {
            Feasibility::Feasible { witness } => assert!((witness[0] - 1.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_violation_margin() {
        match lp_feasible(&[hs(&[1.0], 1.5), hs(&[-1.0], -1.0)]).unwrap() {
            Feasibility::Infeasible { margin } => assert!((margin - 0.25).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_system_has_origin_witness() {
        assert_eq!(
            lp_feasible(&[]).unwrap(),
            Feasibility::Feasible { witness: vec![] }
        );
    }

    #[test]
    fn witness_lies_in_every_halfspace() {
        let rows = [
            hs(&[1.0, 0.0, 2.0], 1.0),
            hs(&[0.0, -1.0, 1.0], -3.0),
            hs(&[2.0, 2.0, 4.0], 2.0),
        ];
        let Feasibility::Feasible { witness } = lp_feasible(&rows).unwrap() else {
            panic!("expected feasible");
        };
        for r in &rows {
            let lhs: f64 = r.normal.iter().zip(&witness).map(|(a, b)| a * b).sum();
            assert!(lhs >= r.offset - 1e-9);
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let rows = [
            hs(&[1.0, 1.0], 3.0),
            hs(&[-1.0, 2.0], 1.0),
            hs(&[0.5, -1.0], 2.0),
        ];
        let opts = LpOptions {
            iteration_cap: Some(0),
            ..LpOptions::default()
        };
        assert!(matches!(
            lp_feasible_with(&rows, &opts),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn basis_drops_dependent_vectors() {
        let v = [
            vec![1.0, 1.0, 0.0],
            vec![2.0, 2.0, 0.0],
            vec![0.0, 0.0, 3.0],
        ];
        let b = orthonormal_basis(v.iter().map(|x| x.as_slice()), 3);
        assert_eq!(b.len(), 2);
    }
}
