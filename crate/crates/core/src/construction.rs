//! Reliability estimation of the synthetic bit channels by Gaussian
//! approximation of the LLR densities.
//!
//! Every channel LLR is modelled as `N(mu, 2 mu)`. The two polarizing
//! transforms map the mean as
//!
//! * check node: `mu -> phi^-1(1 - (1 - phi(mu))^2)`
//! * variable node: `mu -> 2 mu`
//!
//! with the usual two-piece approximation of `phi`. Everything runs in the
//! log domain because `phi(mu)` underflows `f64` for the means reached by the
//! most reliable channels at `N = 1024`.

use std::f64::consts::PI;

const PHI_SPLIT: f64 = 10.0;
const BISECTION_STEPS: usize = 200;

/// `ln phi(x)`.
pub(crate) fn ln_phi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < PHI_SPLIT {
        (-0.4527 * x.powf(0.86) + 0.0218).min(0.0)
    } else {
        0.5 * (PI / x).ln() - x / 4.0 + (1.0 - 10.0 / (7.0 * x)).ln()
    }
}

/// Solves `ln_phi(x) = target` for `x` in `[0, upper]` by bisection.
fn ln_phi_inverse(target: f64, upper: f64) -> f64 {
    if target >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, upper.max(1.0));
    while ln_phi(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if ln_phi(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn check_node_mean(mu: f64) -> f64 {
    let lp = ln_phi(mu);
    // ln(1 - (1 - phi)^2) = ln phi + ln(2 - phi)
    let target = lp + (2.0 - lp.exp()).ln();
    ln_phi_inverse(target, mu)
}

pub(crate) fn variable_node_mean(mu: f64) -> f64 {
    2.0 * mu
}

/// Mean LLR of every synthetic channel `u_i`, natural index order, for a
/// channel whose LLR mean is `channel_mean`. Larger means are more reliable.
pub fn ga_channel_means(n_bits: usize, channel_mean: f64) -> Vec<f64> {
    debug_assert!(n_bits.is_power_of_two());
    let mut means = vec![channel_mean];
    // The most significant index bit selects the outermost transform.
    while means.len() < n_bits {
        means = means
            .iter()
            .flat_map(|&m| [check_node_mean(m), variable_node_mean(m)])
            .collect();
    }
    means
}

/// Indices sorted from least to most reliable; ties keep the lower index first.
pub fn reliability_order(reliability: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..reliability.len()).collect();
    order.sort_by(|&a, &b| reliability[a].total_cmp(&reliability[b]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bhattacharyya-parameter evolution, an independent reliability proxy.
    fn bhattacharyya(n_bits: usize, z0: f64) -> Vec<f64> {
        let mut z = vec![z0];
        while z.len() < n_bits {
            z = z.iter().flat_map(|&v| [2.0 * v - v * v, v * v]).collect();
        }
        z
    }

    #[test]
    fn n4_order_matches_bhattacharyya() {
        // Far below 1 the additive offset of the phi fit swaps u1 and u2.
        for snr_mean in [1.0, 3.17, 10.0, 40.0] {
            let means = ga_channel_means(4, snr_mean);
            assert_eq!(
                reliability_order(&means),
                vec![0, 1, 2, 3],
                "mu0 = {snr_mean}"
            );
        }
        for z0 in [0.1, 0.5, 0.9] {
            let z = bhattacharyya(4, z0);
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            assert_eq!(reliability_order(&neg), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn variable_node_dominates_check_node() {
        for mu in [0.01, 0.5, 2.0, 9.99, 10.0, 50.0, 3000.0] {
            let minus = check_node_mean(mu);
            assert!(minus >= 0.0 && minus < mu, "mu {mu} -> {minus}");
            assert!(variable_node_mean(mu) > mu);
        }
    }

    #[test]
    fn means_stay_finite_at_1024() {
        let means = ga_channel_means(1024, 3.17);
        assert!(means.iter().all(|m| m.is_finite() && *m >= 0.0));
        assert_eq!(means[1023], 3.17 * 1024.0);
    }

    #[test]
    fn inverse_round_trips() {
        for x in [0.3, 1.0, 5.0, 12.0, 100.0, 2500.0] {
            let back = ln_phi_inverse(ln_phi(x), x * 2.0);
            assert!((back - x).abs() <= 1e-9 * x, "{x} -> {back}");
        }
    }
}
