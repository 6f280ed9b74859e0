//! Composite Gauss–Legendre quadrature.
//!
//! Every integrand in this crate is smooth and compactly supported, so fixed
//! panels with a doubled-panel convergence check are sufficient; no adaptive
//! machinery is needed.

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Build an `n`-node rule. Nodes are the roots of the Legendre polynomial
    /// `P_n`, located by Newton iteration from the Chebyshev initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "Gauss-Legendre rule needs at least two nodes");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_deriv(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over `[a, b]` with a single panel.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let c = 0.5 * (b + a);
        let h = 0.5 * (b - a);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + h * x);
        }
        acc * h
    }

    /// Integrate `f` over `[a, b]` split into `panels` equal panels.
    pub fn integrate_composite<F: Fn(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        f: &F,
    ) -> f64 {
        assert!(panels >= 1);
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            acc += self.integrate(lo, lo + h, f);
        }
        acc
    }
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`, by the
/// three-term recurrence.
fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integrate with panel doubling until two successive estimates agree within
/// `tol` (absolute), starting from `panels`. Returns the refined value and
/// whether the check converged before `max_doublings` was exhausted.
pub fn integrate_refined<F: Fn(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
    max_doublings: u32,
    f: &F,
) -> (f64, bool) {
    let mut p = panels.max(1);
    let mut prev = rule.integrate_composite(a, b, p, f);
    for _ in 0..max_doublings {
        p *= 2;
        let next = rule.integrate_composite(a, b, p, f);
        if (next - prev).abs() <= tol {
            return (next, true);
        }
        prev = next;
    }
    (prev, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_integrate_exactly() {
        let rule = GaussLegendre::new(16);
        // degree 31 is the highest exact degree for 16 nodes
        let val = rule.integrate(0.0, 1.0, |x| x.powi(9));
        assert!((val - 0.1).abs() < 1e-14);
        let val = rule.integrate(-2.0, 3.0, |x| 3.0 * x * x);
        assert!((val - (27.0 + 8.0)).abs() < 1e-12);
    }

    #[test]
    fn composite_matches_single_panel_for_smooth_integrand() {
        let rule = GaussLegendre::new(16);
        let f = |x: f64| (-x * x).exp();
        let one = rule.integrate(-1.0, 1.0, f);
        let comp = rule.integrate_composite(-1.0, 1.0, 8, &f);
        assert!((one - comp).abs() < 1e-13);
    }

    #[test]
    fn refinement_reports_convergence() {
        let rule = GaussLegendre::new(16);
        let f = |x: f64| (5.0 * x).sin();
        let (val, ok) = integrate_refined(&rule, 0.0, std::f64::consts::PI, 2, 1e-12, 8, &f);
        assert!(ok);
        let exact = (1.0 - (5.0 * std::f64::consts::PI).cos()) / 5.0;
        assert!((val - exact).abs() < 1e-10);
    }
}
