//! Derivative-free minimization over a 2-D box.
//!
//! A plain Nelder–Mead simplex with box projection is all the contrast needs:
//! the objective is smooth but its gradient would require moment-derivative
//! bookkeeping per approximation variant, and +inf is used to signal
//! infeasible parameter points.

#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_iters: usize,
    /// Convergence when the simplex diameter, relative to the box edge
    /// lengths, falls below this.
    pub rel_tol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NmOutcome {
    pub x: [f64; 2],
    pub fx: f64,
    pub iters: usize,
    pub converged: bool,
}

fn clamp(p: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])]
}

/// Minimize `f` over the box `[lo, hi]` starting from `start`. Reflection,
/// expansion and contraction points are projected back into the box.
pub fn nelder_mead_box<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    lo: [f64; 2],
    hi: [f64; 2],
    start: [f64; 2],
    opts: &NmOptions,
) -> NmOutcome {
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIG: f64 = 0.5; // shrink

    let span = [hi[0] - lo[0], hi[1] - lo[1]];
    let start = clamp(start, lo, hi);
    let mut simplex: Vec<[f64; 2]> = vec![start; 3];
    for d in 0..2 {
        let mut p = start;
        let step = 0.05 * span[d];
        p[d] = if p[d] + step <= hi[d] {
            p[d] + step
        } else {
            p[d] - step
        };
        simplex[d + 1] = p;
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|p| f(p[0], p[1])).collect();

    let mut iters = 0;
    let mut converged = false;
    while iters < opts.max_iters {
        iters += 1;
        // order best..worst
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let (b, m, w) = (idx[0], idx[1], idx[2]);

        let diam = (0..2)
            .map(|d| {
                let lo_d = simplex.iter().map(|p| p[d]).fold(f64::MAX, f64::min);
                let hi_d = simplex.iter().map(|p| p[d]).fold(f64::MIN, f64::max);
                (hi_d - lo_d) / span[d]
            })
            .fold(0.0f64, f64::max);
        if diam < opts.rel_tol {
            converged = true;
            break;
        }

        let centroid = [
            0.5 * (simplex[b][0] + simplex[m][0]),
            0.5 * (simplex[b][1] + simplex[m][1]),
        ];
        let refl = clamp(
            [
                centroid[0] + ALPHA * (centroid[0] - simplex[w][0]),
                centroid[1] + ALPHA * (centroid[1] - simplex[w][1]),
            ],
            lo,
            hi,
        );
        let f_refl = f(refl[0], refl[1]);

        if f_refl < fvals[b] {
            let exp = clamp(
                [
                    centroid[0] + GAMMA * (refl[0] - centroid[0]),
                    centroid[1] + GAMMA * (refl[1] - centroid[1]),
                ],
                lo,
                hi,
            );
            let f_exp = f(exp[0], exp[1]);
            if f_exp < f_refl {
                simplex[w] = exp;
                fvals[w] = f_exp;
            } else {
                simplex[w] = refl;
                fvals[w] = f_refl;
            }
        } else if f_refl < fvals[m] {
            simplex[w] = refl;
            fvals[w] = f_refl;
        } else {
            let contr = clamp(
                [
                    centroid[0] + RHO * (simplex[w][0] - centroid[0]),
                    centroid[1] + RHO * (simplex[w][1] - centroid[1]),
                ],
                lo,
                hi,
            );
            let f_contr = f(contr[0], contr[1]);
            if f_contr < fvals[w] {
                simplex[w] = contr;
                fvals[w] = f_contr;
            } else {
                for i in 0..3 {
                    if i != b {
                        simplex[i] = clamp(
                            [
                                simplex[b][0] + SIG * (simplex[i][0] - simplex[b][0]),
                                simplex[b][1] + SIG * (simplex[i][1] - simplex[b][1]),
                            ],
                            lo,
                            hi,
                        );
                        fvals[i] = f(simplex[i][0], simplex[i][1]);
                    }
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..3 {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    NmOutcome {
        x: simplex[best],
        fx: fvals[best],
        iters,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let out = nelder_mead_box(
            |x, y| (x - 1.0).powi(2) + (y - 2.0).powi(2),
            [-5.0, -5.0],
            [5.0, 5.0],
            [3.0, -3.0],
            &NmOptions::default(),
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6);
        assert!((out.x[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn respects_box_constraints() {
        // unconstrained minimum sits at (6, 6), outside the box
        let out = nelder_mead_box(
            |x, y| (x - 6.0).powi(2) + (y - 6.0).powi(2),
            [0.0, 0.0],
            [2.0, 3.0],
            [1.0, 1.0],
            &NmOptions::default(),
        );
        assert!((out.x[0] - 2.0).abs() < 1e-6);
        assert!((out.x[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn constant_shift_leaves_argmin_unchanged() {
        let run = |shift: f64| {
            nelder_mead_box(
                |x, y| (x + 0.5).powi(2) + 3.0 * (y - 1.5).powi(2) + shift,
                [-4.0, -4.0],
                [4.0, 4.0],
                [2.0, -2.0],
                &NmOptions::default(),
            )
        };
        let a = run(0.0);
        let b = run(123.456);
        // rounding can flip near-tie comparisons, so the iterates are not
        // bitwise identical, but the argmin is the same point
        assert!((a.x[0] - b.x[0]).abs() < 1e-6);
        assert!((a.x[1] - b.x[1]).abs() < 1e-6);
        assert!((b.fx - a.fx - 123.456).abs() < 1e-6);
    }

    #[test]
    fn tolerates_infinite_regions() {
        let out = nelder_mead_box(
            |x, y| {
                if y < 0.5 {
                    f64::INFINITY
                } else {
                    (x - 1.0).powi(2) + (y - 1.0).powi(2)
                }
            },
            [-5.0, 0.0],
            [5.0, 5.0],
            [4.0, 4.0],
            &NmOptions::default(),
        );
        assert!((out.x[0] - 1.0).abs() < 1e-5);
        assert!((out.x[1] - 1.0).abs() < 1e-5);
    }
}
