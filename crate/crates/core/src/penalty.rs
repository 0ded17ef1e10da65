//! Geographically weighted minimax concave penalty.

use alloc::format;

#[allow(unused_imports)] // inherent float methods in core shadow these on newer toolchains
use num_traits::Float;

use crate::error::{Error, Result};

/// `omega * lambda * int_0^t (1 - x / (gamma lambda))_+ dx`.
///
/// Quadratic up to `gamma * lambda`, then flat at `omega * gamma * lambda^2 / 2`.
pub fn mcp_penalty(t: f64, lambda: f64, gamma: f64, omega: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty argument must be nonnegative, got {t}"
        )));
    }
    Ok(mcp_value(t, lambda, gamma, omega))
}

#[inline]
pub(crate) fn mcp_value(t: f64, lambda: f64, gamma: f64, omega: f64) -> f64 {
    if omega == 0.0 || lambda == 0.0 {
        return 0.0;
    }
    if t <= gamma * lambda {
        omega * (lambda * t - t * t / (2.0 * gamma))
    } else {
        omega * gamma * lambda * lambda / 2.0
    }
}

/// Proximal map of the weighted MCP on a coefficient-difference vector:
/// writes `argmin_d (vartheta / 2) ||zeta - d||^2 + mcp(||d||)` into `out`.
///
/// Inside `||zeta|| <= gamma * lambda` this is a group soft threshold at
/// `omega * lambda / vartheta`, rescaled by `1 / (1 - omega / (gamma vartheta))`;
/// beyond it the difference is left untouched. Requires `gamma * vartheta > omega`.
/// Returns `true` when the output is exactly zero.
#[inline]
pub fn mcp_prox(
    zeta: &[f64],
    out: &mut [f64],
    lambda: f64,
    gamma: f64,
    omega: f64,
    vartheta: f64,
) -> bool {
    let shrink = omega * lambda / vartheta;
    if shrink == 0.0 {
        out.copy_from_slice(zeta);
        return zeta.iter().all(|v| *v == 0.0);
    }
    let norm = zeta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= shrink {
        out.fill(0.0);
        return true;
    }
    if norm <= gamma * lambda {
        let scale = (1.0 - shrink / norm) / (1.0 - omega / (gamma * vartheta));
        for (o, z) in out.iter_mut().zip(zeta) {
            *o = scale * z;
        }
    } else {
        out.copy_from_slice(zeta);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn penalty_values() {
        assert_eq!(mcp_penalty(0.0, 1.0, 3.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            mcp_penalty(5.0, 1.0, 3.0, 1.0).unwrap(),
            1.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            mcp_penalty(1.0, 1.0, 3.0, 0.5).unwrap(),
            0.5 * (1.0 - 1.0 / 6.0),
            epsilon = 1e-15
        );
        assert!(mcp_penalty(-0.1, 1.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn penalty_matches_quadrature() {
        // Midpoint rule on the integrand.
        let (lambda, gamma, omega) = (0.7, 2.5, 0.6);
        for &t in &[0.3, 1.0, 1.75, 2.5, 4.0] {
            let steps = 200_000;
            let h = t / steps as f64;
            let integral: f64 = (0..steps)
                .map(|k| {
                    let x = (k as f64 + 0.5) * h;
                    (1.0 - x / (gamma * lambda)).max(0.0)
                })
                .sum::<f64>()
                * h;
            assert_abs_diff_eq!(
                mcp_penalty(t, lambda, gamma, omega).unwrap(),
                omega * lambda * integral,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn prox_cases() {
        let mut out = [0.0; 2];
        // Far beyond gamma * lambda: untouched.
        let zeta = [6.0, 8.0];
        assert!(!mcp_prox(&zeta, &mut out, 1.0, 3.0, 1.0, 1.0));
        assert_eq!(out, zeta);
        // Inside the threshold: exact zero.
        assert!(mcp_prox(&[0.5, 0.0], &mut out, 1.0, 3.0, 1.0, 1.0));
        assert_eq!(out, [0.0, 0.0]);
        // No weight: no fusion.
        assert!(!mcp_prox(&[0.01, 0.0], &mut out, 10.0, 3.0, 0.0, 1.0));
        assert_eq!(out, [0.01, 0.0]);
        // Shrinkage region: (1 - 1/2) / (1 - 1/3) = 3/4 of zeta.
        mcp_prox(&[2.0, 0.0], &mut out, 1.0, 3.0, 1.0, 1.0);
        assert_abs_diff_eq!(out[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn prox_minimizes_scalar_objective() {
        // Grid search over the ray through zeta; the prox is radial.
        for &(lambda, gamma, omega, vartheta) in &[
            (1.0, 3.0, 1.0, 1.0),
            (0.8, 2.0, 0.4, 1.5),
            (2.0, 3.0, 0.9, 0.7),
        ] {
            for k in 0..60 {
                let z = k as f64 * 0.1;
                let mut out = [0.0];
                mcp_prox(&[z], &mut out, lambda, gamma, omega, vartheta);
                let f = |d: f64| {
                    0.5 * vartheta * (z - d).powi(2) + mcp_value(d.abs(), lambda, gamma, omega)
                };
                let best = (0..=60_000)
                    .map(|s| f(s as f64 * 1e-4))
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    f(out[0]) <= best + 1e-7,
                    "z={z}: prox {} vs grid {}",
                    f(out[0]),
                    best
                );
            }
        }
    }
}
