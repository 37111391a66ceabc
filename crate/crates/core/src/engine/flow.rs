//! Fluid TCP model: setup latency, slow-start rounds and fair sharing.

use crate::model::SimConfig;

/// Time from assigning a transfer to a connection until the first response
/// byte, in seconds.
pub fn transfer_setup_latency(reused: bool, tls_needed: bool, rtt: f64, config: &SimConfig) -> f64 {
    let base = if reused {
        config.reuse_rtts
    } else {
        config.new_conn_rtts
    };
    let tls = if tls_needed { config.tls_handshake_rtts } else { 0 };
    f64::from(base) * rtt + f64::from(tls) * rtt
}

/// Congestion-window-limited rate during slow-start round `round`.
pub fn cwnd_rate(round: u32, rtt: f64, config: &SimConfig) -> f64 {
    config.initial_window_bytes() * 2f64.powi(round as i32) / rtt
}

/// Rate of a flow in slow-start round `round_index` given its fair share,
/// and whether the flow leaves slow start.
pub fn slow_start_rate(round_index: u32, rtt: f64, fair_share: f64, config: &SimConfig) -> (f64, bool) {
    let uncapped = cwnd_rate(round_index, rtt, config);
    (uncapped.min(fair_share), uncapped >= fair_share)
}

/// Water-filling split of `bandwidth` among flows with the given rate caps
/// (`f64::INFINITY` for flows past slow start).
///
/// Returns the per-flow rates and the water level: the rate every
/// unconstrained flow receives. The level is infinite when every flow is
/// cap-limited and capacity is left over. A flow whose cap is not below the
/// level has reached its fair share.
pub fn water_fill(bandwidth: f64, caps: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&a, &b| caps[a].total_cmp(&caps[b]).then(a.cmp(&b)));

    let mut rates = vec![0.0; caps.len()];
    let mut left = bandwidth;
    let mut level = f64::INFINITY;
    for (pos, &i) in order.iter().enumerate() {
        let equal = left / (caps.len() - pos) as f64;
        if caps[i] < equal {
            rates[i] = caps[i];
            left -= caps[i];
        } else {
            level = equal;
            for &j in &order[pos..] {
                rates[j] = equal;
            }
            break;
        }
    }
    (rates, level)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn setup_latency_examples() {
        let c = SimConfig::default();
        assert!(close(transfer_setup_latency(false, false, 0.05, &c), 0.100));
        assert!(close(transfer_setup_latency(true, false, 0.05, &c), 0.050));
        assert!(close(transfer_setup_latency(false, true, 0.05, &c), 0.200));
        assert!(close(transfer_setup_latency(true, true, 0.05, &c), 0.150));
    }

    #[test]
    fn slow_start_examples() {
        let c = SimConfig::default();
        let (r, exit) = slow_start_rate(0, 0.1, 1_250_000.0, &c);
        assert!(close(r, 146_000.0) && !exit);
        let (r, exit) = slow_start_rate(4, 0.1, 1_250_000.0, &c);
        assert!(close(r, 1_250_000.0) && exit);
        let (r, exit) = slow_start_rate(0, 0.01, 62_500.0, &c);
        assert!(close(r, 62_500.0) && exit);
    }

    #[test]
    fn slow_start_rounds_double_until_capped() {
        let c = SimConfig::default();
        let mut prev = 0.0;
        for round in 0..12 {
            let (r, _) = slow_start_rate(round, 0.05, 5e6, &c);
            assert!(r >= prev);
            prev = r;
        }
        assert_eq!(prev, 5e6);
    }

    #[test]
    fn fair_share_examples() {
        let (r, level) = water_fill(1_250_000.0, &[f64::INFINITY]);
        assert_eq!(r, vec![1_250_000.0]);
        assert_eq!(level, 1_250_000.0);

        let (r, _) = water_fill(1_250_000.0, &[f64::INFINITY, f64::INFINITY]);
        assert_eq!(r, vec![625_000.0, 625_000.0]);

        let (r, level) = water_fill(1_250_000.0, &[146_000.0, f64::INFINITY]);
        assert!(close(r[0], 146_000.0));
        assert!(close(r[1], 1_104_000.0));
        assert!(close(level, 1_104_000.0));
    }

    #[test]
    fn all_capped_leaves_capacity_unused() {
        let (r, level) = water_fill(1_000.0, &[100.0, 200.0]);
        assert_eq!(r, vec![100.0, 200.0]);
        assert!(level.is_infinite());
    }

    #[test]
    fn cap_equal_to_share_counts_as_reaching_it() {
        let (r, level) = water_fill(1_000.0, &[500.0, 500.0]);
        assert_eq!(r, vec![500.0, 500.0]);
        assert_eq!(level, 500.0);
        assert!(water_fill(1_000.0, &[]).0.is_empty());
    }

    /// Independent oracle: bisection on the water level.
    fn bisect_level(bandwidth: f64, caps: &[f64]) -> Vec<f64> {
        let total_caps: f64 = caps.iter().sum();
        if total_caps <= bandwidth {
            return caps.to_vec();
        }
        let (mut lo, mut hi) = (0.0, bandwidth);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let used: f64 = caps.iter().map(|c| c.min(mid)).sum();
            if used > bandwidth {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        caps.iter().map(|c| c.min(lo)).collect()
    }

    proptest::proptest! {
        #[test]
        fn water_fill_matches_bisection(
            bw in 1.0f64..1e8,
            caps in proptest::collection::vec(proptest::option::of(1.0f64..1e8), 1..20),
        ) {
            let caps: Vec<f64> = caps.into_iter().map(|c| c.unwrap_or(f64::INFINITY)).collect();
            let (rates, _) = water_fill(bw, &caps);
            let sum: f64 = rates.iter().sum();
            proptest::prop_assert!(sum <= bw * (1.0 + 1e-12));
            for (r, c) in rates.iter().zip(&caps) {
                proptest::prop_assert!(*r <= *c);
            }
            let finite: Vec<f64> = caps.iter().map(|&c| if c.is_finite() { c } else { 2e8 }).collect();
            let expect = bisect_level(bw, &finite);
            for (r, e) in rates.iter().zip(&expect) {
                proptest::prop_assert!((r - e).abs() <= 1e-6 * bw, "{} vs {}", r, e);
            }
        }
    }
}
