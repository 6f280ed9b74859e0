//! Smooth truncation functions.
//!
//! [`phi0_eval`] is the plain smooth cutoff: identically 1 on `[-1, 1]`,
//! identically 0 outside `[-2, 2]`, with an exponential bump transition in
//! between. [`TruncationKernel::oscillating`] builds the dilation family
//! `phi_d^(l)` on top of the level-one difference
//! `phi_d^(1)(x) = (d*phi0(x) - phi0(x/d)) / (d - 1)`,
//! whose moments `∫ x^k phi(x) dx` vanish for every `k = 0..=l`. Vanishing
//! moments are what remove the leading jump contribution from the
//! conditional-moment expansions, so the moment check here is load-bearing.

use crate::quad::GaussLegendre;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("oscillating kernel requires scale > 1, got {0}")]
    InvalidScale(f64),
    #[error("oscillating kernel requires level >= 1")]
    InvalidLevel,
}

/// Smooth step on `[0, 1]`: 0 at 0, 1 at 1, `C^inf`, and symmetric about 1/2.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// The plain truncation function: 1 on `[-1, 1]`, 0 outside `[-2, 2]`,
/// `1 - s(|x| - 1)` in between with `s` the exponential bump step.
pub fn phi0_eval(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        1.0
    } else if ax >= 2.0 {
        0.0
    } else {
        1.0 - smooth_step(ax - 1.0)
    }
}

/// A smooth, compactly supported truncation function equal to 1 on `[-1, 1]`.
///
/// `level = 0` is the plain cutoff `phi0`. `level = l >= 1` with `scale = d`
/// is the oscillating combination of dilated level-one functions with
/// coefficients proportional to `C(l,k) (-1)^(k+1) / k^2`; the normalization
/// keeps the plateau at exactly one, and the binomial identity
/// `sum_k (-1)^k C(l,k) k^m = 0` for `m < l` makes `∫ x^j phi = 0` for all
/// `j <= l` (odd moments vanish by symmetry).
#[derive(Debug, Clone)]
pub struct TruncationKernel {
    level: u32,
    scale: f64,
    support_radius: f64,
    /// `(weight, dilation)` pairs: `phi(x) = sum w_k * phi1(x / k)`.
    terms: Vec<(f64, f64)>,
}

impl TruncationKernel {
    /// The plain bump `phi0` (no vanishing moments).
    pub fn plain() -> Self {
        Self {
            level: 0,
            scale: 1.0,
            support_radius: 2.0,
            terms: Vec::new(),
        }
    }

    /// Oscillating kernel with `level >= 1` vanishing moments and dilation
    /// scale `d > 1`. Support is `[-2*d*level, 2*d*level]`.
    pub fn oscillating(level: u32, scale: f64) -> Result<Self, KernelError> {
        if level < 1 {
            return Err(KernelError::InvalidLevel);
        }
        if !(scale > 1.0) || !scale.is_finite() {
            return Err(KernelError::InvalidScale(scale));
        }
        let mut terms = Vec::with_capacity(level as usize);
        let mut norm = 0.0;
        for k in 1..=level {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let w = sign * binomial(level, k) / (kf * kf);
            norm += w;
            terms.push((w, kf));
        }
        for t in &mut terms {
            t.0 /= norm;
        }
        Ok(Self {
            level,
            scale,
            support_radius: 2.0 * scale * level as f64,
            terms,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Level-one building block `(d*phi0(y) - phi0(y/d)) / (d - 1)`.
    fn phi1(&self, y: f64) -> f64 {
        let d = self.scale;
        (d * phi0_eval(y) - phi0_eval(y / d)) / (d - 1.0)
    }

    /// Evaluate the kernel. The plateau and the complement of the support are
    /// handled by exact branches so those invariants hold bit-for-bit.
    pub fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax <= 1.0 {
            return 1.0;
        }
        if ax >= self.support_radius {
            return 0.0;
        }
        if self.level == 0 {
            return phi0_eval(x);
        }
        self.terms
            .iter()
            .map(|&(w, k)| w * self.phi1(x / k))
            .sum()
    }

    /// Composite Gauss–Legendre estimate of `∫ x^k phi(x) dx` over the
    /// support, with `panels` panels of a 16-node rule.
    pub fn moment(&self, k: u32, panels: usize) -> f64 {
        let rule = GaussLegendre::new(16);
        let r = self.support_radius;
        rule.integrate_composite(-r, r, panels.max(1), &|x: f64| x.powi(k as i32) * self.eval(x))
    }

    /// Uniformly sampled `(x, phi(x))` pairs over the support, for plotting.
    pub fn plot_data(&self, n_points: usize) -> Vec<(f64, f64)> {
        let r = self.support_radius;
        if n_points == 1 {
            return vec![(0.0, self.eval(0.0))];
        }
        (0..n_points)
            .map(|i| {
                let x = -r + 2.0 * r * i as f64 / (n_points - 1) as f64;
                (x, self.eval(x))
            })
            .collect()
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MOMENT_PANELS: usize = 256;

    #[test]
    fn phi0_plateau_support_and_midpoint() {
        assert_eq!(phi0_eval(0.5), 1.0);
        assert_eq!(phi0_eval(2.5), 0.0);
        // s(1/2) = 1/2 by symmetry of the bump step
        assert!((phi0_eval(1.5) - 0.5).abs() < 1e-15);
        assert!((phi0_eval(-1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn oscillating_plateau_and_hand_value() {
        let k = TruncationKernel::oscillating(1, 2.0).unwrap();
        assert_eq!(k.eval(0.5), 1.0);
        let k2 = TruncationKernel::oscillating(2, 1.4).unwrap();
        assert_eq!(k2.eval(0.0), 1.0);
        // level 1, d = 2 at x = 1.5: (2*phi0(1.5) - phi0(0.75)) / 1 = 0
        assert!(k.eval(1.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(TruncationKernel::oscillating(1, 1.0).is_err());
        assert!(TruncationKernel::oscillating(1, 0.5).is_err());
        assert!(TruncationKernel::oscillating(0, 2.0).is_err());
    }

    #[test]
    fn moments_vanish_up_to_level() {
        for &(l, d) in &[(1u32, 2.0f64), (2, 1.4), (4, 1.2)] {
            let k = TruncationKernel::oscillating(l, d).unwrap();
            let r = k.support_radius();
            for j in 0..=l {
                let m = k.moment(j, MOMENT_PANELS);
                let tol = 1e-8 * r.powi(j as i32 + 1);
                assert!(
                    m.abs() <= tol,
                    "moment {j} of phi_{d}^({l}) = {m}, tol {tol}"
                );
            }
        }
    }

    #[test]
    fn plain_kernel_moments() {
        let k = TruncationKernel::plain();
        // odd moment vanishes by symmetry
        assert!(k.moment(1, MOMENT_PANELS).abs() < 1e-12);
        // mass is between the plateau (length 2) and the support (length 4)
        let m0 = k.moment(0, MOMENT_PANELS);
        assert!(m0 > 2.0 && m0 < 4.0, "m0 = {m0}");
    }

    #[test]
    fn moment_quadrature_stable_under_doubling() {
        let k = TruncationKernel::oscillating(2, 1.4).unwrap();
        let a = k.moment(4, MOMENT_PANELS);
        let b = k.moment(4, 2 * MOMENT_PANELS);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn plot_data_shape() {
        let k = TruncationKernel::oscillating(2, 1.4).unwrap();
        let pts = k.plot_data(101);
        assert_eq!(pts.len(), 101);
        assert_eq!(pts[0].1, 0.0);
        assert_eq!(pts[100].1, 0.0);
        assert_eq!(pts[50], (0.0, 1.0));
    }

    #[test]
    fn first_derivative_bounded_on_fine_grid() {
        // smoothness proxy: central differences stay bounded, no jumps
        for kern in [
            TruncationKernel::plain(),
            TruncationKernel::oscillating(2, 1.4).unwrap(),
        ] {
            let r = kern.support_radius();
            let h = 1e-5;
            let mut max_d = 0.0f64;
            let n = 20_000;
            for i in 0..n {
                let x = -r + 2.0 * r * i as f64 / n as f64;
                let d = (kern.eval(x + h) - kern.eval(x - h)) / (2.0 * h);
                max_d = max_d.max(d.abs());
            }
            assert!(max_d < 50.0, "finite-difference slope {max_d}");
        }
    }

    proptest! {
        #[test]
        fn kernels_are_even(x in -12.0f64..12.0) {
            let k0 = TruncationKernel::plain();
            let k2 = TruncationKernel::oscillating(2, 1.4).unwrap();
            prop_assert!((k0.eval(x) - k0.eval(-x)).abs() < 1e-15);
            prop_assert!((k2.eval(x) - k2.eval(-x)).abs() < 1e-15);
        }

        #[test]
        fn plateau_is_exact(x in -1.0f64..=1.0) {
            let k = TruncationKernel::oscillating(4, 1.2).unwrap();
            prop_assert_eq!(k.eval(x), 1.0);
        }

        #[test]
        fn support_is_exact(x in 10.0f64..100.0) {
            let k = TruncationKernel::oscillating(4, 1.2).unwrap();
            prop_assert_eq!(k.eval(x), 0.0);
            prop_assert_eq!(k.eval(-x), 0.0);
        }
    }
}
