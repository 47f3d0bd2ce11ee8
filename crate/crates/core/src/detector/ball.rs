//! Ball-shaped variant of the convergence-feasibility system.
//!
//! Each step contributes `|lambda - lambda^{k+1}| <= c_k |lambda - lambda^k|`
//! with `c_k = sqrt(1 - 2 nu s^k) < 1`, which is a ball. Feasibility of an
//! intersection of balls (and, optionally, halfspaces) is decided
//! approximately by subgradient descent on the worst signed distance.

use super::{Feasibility, Halfspace, WindowEntry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Intersection of balls and halfspaces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BallSystem {
    pub balls: Vec<Ball>,
    pub planes: Vec<Halfspace>,
    /// Window positions whose step was too large for a ball.
    pub excluded: Vec<usize>,
}

/// `{lambda : |lambda - p| <= c |lambda - q|}` for `0 <= c < 1`.
pub fn apollonius_ball(q: &[f64], p: &[f64], c: f64) -> Result<Ball> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Detector(format!(
            "contraction factor {c} does not give a ball"
        )));
    }
    let c2 = c * c;
    let denom = 1.0 - c2;
    let center = p.iter().zip(q).map(|(p, q)| (p - c2 * q) / denom).collect();
    let dist = p
        .iter()
        .zip(q)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    Ok(Ball {
        center,
        radius: c * dist / denom,
    })
}

/// Balls for every step with `1 - 2 nu s > 0`; other steps are listed in `excluded`.
pub fn build_ball_system(window: &[WindowEntry], nu: f64) -> Result<BallSystem> {
    let mut system = BallSystem::default();
    for (pos, e) in window.iter().enumerate() {
        let arg = 1.0 - 2.0 * nu * e.step;
        if arg <= 0.0 || arg >= 1.0 {
            system.excluded.push(pos);
            continue;
        }
        system
            .balls
            .push(apollonius_ball(&e.multipliers, &e.next(), arg.sqrt())?);
    }
    if system.balls.is_empty() && !window.is_empty() {
        return Err(Error::Detector(format!(
            "nu too large for stepsizes: all {} steps excluded",
            window.len()
        )));
    }
    Ok(system)
}

/// Options for [`ball_feasible_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallOptions {
    pub iterations: usize,
    pub eps: f64,
}

impl Default for BallOptions {
    fn default() -> Self {
        BallOptions {
            iterations: 2000,
            eps: 1e-7,
        }
    }
}

pub fn ball_feasible(system: &BallSystem) -> Feasibility {
    ball_feasible_with(system, &BallOptions::default())
}

/// [`ball_feasible_with`] started from the centroid of the ball centers,
/// or the origin when there are no balls.
pub fn ball_feasible_with(system: &BallSystem, opts: &BallOptions) -> Feasibility {
    ball_feasible_from(system, None, opts)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest signed distance from `x` to a ball or halfspace of the system.
pub(crate) fn worst_distance(system: &BallSystem, x: &[f64]) -> f64 {
    worst(system, x).0
}

/// Worst signed distance to the system at `x`, and the index of the worst part.
fn worst(system: &BallSystem, x: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, b) in system.balls.iter().enumerate() {
        let d: f64 = x
            .iter()
            .zip(&b.center)
            .map(|(x, c)| (x - c) * (x - c))
            .sum::<f64>()
            .sqrt()
            - b.radius;
        if d > best.0 {
            best = (d, i);
        }
    }
    for (i, h) in system.planes.iter().enumerate() {
        let n = norm(&h.normal);
        if n == 0.0 {
            continue;
        }
        let d = (h.offset - h.normal.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()) / n;
        if d > best.0 {
            best = (d, system.balls.len() + i);
        }
    }
    best
}

/// Minimizes the worst signed distance by subgradient descent.
///
/// Starts from `start` (default: the centroid of the ball centers) with
/// steps `c0 / sqrt(t)`, `c0` the larger of the largest radius and the
/// starting violation. "Feasible" always comes with a witness whose worst
/// distance is at most `eps`; "infeasible" may be wrong when the descent
/// budget is too small.
pub fn ball_feasible_from(
    system: &BallSystem,
    start: Option<&[f64]>,
    opts: &BallOptions,
) -> Feasibility {
    let dim = system
        .balls
        .first()
        .map(|b| b.center.len())
        .or_else(|| system.planes.first().map(|h| h.normal.len()))
        .unwrap_or(0);
    if system.balls.is_empty() && system.planes.is_empty() {
        return Feasibility::Feasible {
            witness: vec![0.0; dim],
        };
    }
    let mut x = vec![0.0; dim];
    if let Some(s) = start {
        x.copy_from_slice(s);
    } else if !system.balls.is_empty() {
        for b in &system.balls {
            x.iter_mut().zip(&b.center).for_each(|(x, c)| *x += c);
        }
        let m = system.balls.len() as f64;
        x.iter_mut().for_each(|v| *v /= m);
    }
    let c0 = system
        .balls
        .iter()
        .map(|b| b.radius)
        .fold(0.0, f64::max)
        .max(worst(system, &x).0)
        .max(1e-3);
    let (mut best_f, mut witness) = (worst(system, &x).0, x.clone());
    for t in 1..=opts.iterations {
        if best_f <= 0.0 {
            break;
        }
        let (_, idx) = worst(system, &x);
        let g: Vec<f64> = if idx < system.balls.len() {
            let c = &system.balls[idx].center;
            let d: Vec<f64> = x.iter().zip(c).map(|(x, c)| x - c).collect();
            let n = norm(&d);
            if n == 0.0 {
                break;
            }
            d.into_iter().map(|v| v / n).collect()
        } else {
            let h = &system.planes[idx - system.balls.len()];
            let n = norm(&h.normal);
            h.normal.iter().map(|a| -a / n).collect()
        };
        let step = c0 / (t as f64).sqrt();
        x.iter_mut().zip(&g).for_each(|(x, g)| *x -= step * g);
        let f = worst(system, &x).0;
        if f < best_f {
            best_f = f;
            witness.clone_from(&x);
        }
    }
    if best_f <= opts.eps {
        Feasibility::Feasible { witness }
    } else {
        Feasibility::Infeasible { margin: best_f }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball(center: &[f64], radius: f64) -> Ball {
        Ball {
            center: center.to_vec(),
            radius,
        }
    }

    #[test]
    fn apollonius_in_one_dimension() {
        let b = apollonius_ball(&[0.0], &[1.0], 0.5).unwrap();
        assert!((b.center[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((b.radius - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_contraction_is_the_point() {
        let b = apollonius_ball(&[0.0, 3.0], &[1.0, 2.0], 0.0).unwrap();
        assert_eq!(b.center, vec![1.0, 2.0]);
        assert_eq!(b.radius, 0.0);
    }

    #[test]
    fn unit_contraction_is_rejected() {
        assert!(apollonius_ball(&[0.0], &[1.0], 1.0).is_err());
        let e = WindowEntry {
            multipliers: vec![0.0],
            direction: vec![1.0],
            step: 0.1,
            value: 0.0,
            raw_norm_sq: 1.0,
        };
        // nu = 0 gives c = 1; every step is excluded
        assert!(build_ball_system(std::slice::from_ref(&e), 0.0).is_err());
        // 1 - 2 nu s <= 0 is excluded as well
        let big = WindowEntry {
            step: 0.5,
            ..e.clone()
        };
        let sys = build_ball_system(&[e, big], 2.0).unwrap();
        assert_eq!(sys.balls.len(), 1);
        assert_eq!(sys.excluded, vec![1]);
    }

    #[test]
    fn disjoint_balls_are_infeasible() {
        let sys = BallSystem {
            balls: vec![ball(&[0.0], 1.0), ball(&[10.0], 1.0)],
            ..BallSystem::default()
        };
        match ball_feasible(&sys) {
            Feasibility::Infeasible { margin } => assert!(margin >= 4.0 - 1e-7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_balls_are_feasible_at_the_center() {
        let sys = BallSystem {
            balls: vec![ball(&[2.0, -1.0], 0.5), ball(&[2.0, -1.0], 0.5)],
            ..BallSystem::default()
        };
        assert_eq!(
            ball_feasible(&sys),
            Feasibility::Feasible {
                witness: vec![2.0, -1.0]
            }
        );
    }

    #[test]
    fn distant_halfspaces_alone_are_feasible() {
        let plane = |o: f64| Halfspace {
            normal: vec![1.0, 0.0],
            offset: o,
        };
        let sys = BallSystem {
            planes: vec![plane(200.0), plane(202.0)],
            ..BallSystem::default()
        };
        assert!(matches!(ball_feasible(&sys), Feasibility::Feasible { .. }));
        let from = ball_feasible_from(&sys, Some(&[101.0, 7.0]), &BallOptions::default());
        assert!(matches!(from, Feasibility::Feasible { .. }));
    }

    #[test]
    fn halfspaces_participate() {
        let sys = BallSystem {
            balls: vec![ball(&[0.0, 0.0], 1.0)],
            planes: vec![Halfspace {
                normal: vec![1.0, 0.0],
                offset: 0.5,
            }],
            excluded: vec![],
        };
        let Feasibility::Feasible { witness } = ball_feasible(&sys) else {
            panic!("expected feasible");
        };
        assert!(witness[0] >= 0.5 - 1e-7 && norm(&witness) <= 1.0 + 1e-7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn agrees_with_a_grid_in_two_dimensions(
            balls in prop::collection::vec(((-2.0f64..2.0, -2.0f64..2.0), 0.1f64..1.5), 2..=3),
        ) {
            let sys = BallSystem {
                balls: balls.iter().map(|&((x, y), r)| ball(&[x, y], r)).collect(),
                ..BallSystem::default()
            };
            // grid minimum of the worst distance, resolution h
            let h = 1e-2;
            let mut grid_min = f64::INFINITY;
            let steps = (8.0 / h) as i64;
            for i in 0..=steps {
                for j in 0..=steps {
                    let p = [-4.0 + i as f64 * h, -4.0 + j as f64 * h];
                    grid_min = grid_min.min(worst(&sys, &p).0);
                }
            }
            // the true minimum lies within h / sqrt(2) of the grid minimum
            let slack = h;
            match ball_feasible(&sys) {
                Feasibility::Feasible { witness } => {
                    prop_assert!(worst(&sys, &witness).0 <= 1e-7);
                    prop_assert!(grid_min <= slack);
                }
                Feasibility::Infeasible { margin } => {
                    // false negatives are possible only near the boundary
                    prop_assert!(grid_min > -0.05, "grid found interior point {}, margin {}", grid_min, margin);
                }
            }
        }
    }
}
