use std::cmp::Ordering;

use crate::graph::Weight;

/// Rebalancing priority of a node: `gain * c(u)` for non-negative gains and
/// `gain / c(u)` for negative ones. Every non-negative entry outranks every
/// negative one. Comparisons are exact (cross-multiplication in `i128`).
#[derive(Debug, Clone, Copy)]
pub struct Priority {
    gain: Weight,
    weight: Weight,
}

impl Priority {
    pub fn new(gain: Weight, node_weight: Weight) -> Self {
        debug_assert!(node_weight > 0);
        Priority {
            gain,
            weight: node_weight,
        }
    }

    /// Below every priority a real move can produce.
    pub fn lowest() -> Self {
        Priority {
            gain: Weight::MIN / 4,
            weight: 1,
        }
    }

    pub fn gain(&self) -> Weight {
        self.gain
    }

    /// Monotone floating-point image, used only to pick between two queues.
    pub fn approx(&self) -> f64 {
        if self.gain >= 0 {
            self.gain as f64 * self.weight as f64
        } else {
            self.gain as f64 / self.weight as f64
        }
    }
}

impl Ord for Priority {
    fn cmp(&self, other: &Self) -> Ordering {
        let primary = match (self.gain >= 0, other.gain >= 0) {
            (true, true) => (self.gain as i128 * self.weight as i128).cmp(&(other.gain as i128 * other.weight as i128)),
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            (false, false) => {
                (self.gain as i128 * other.weight as i128).cmp(&(other.gain as i128 * self.weight as i128))
            }
        };
        primary
            .then(self.gain.cmp(&other.gain))
            .then(other.weight.cmp(&self.weight))
    }
}

impl PartialOrd for Priority {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Priority {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Priority {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_gains_compare_by_ratio() {
        // -6/3 = -2 ranks above -6/1 = -6
        assert!(Priority::new(-6, 3) > Priority::new(-6, 1));
        assert!(Priority::new(-1, 1) > Priority::new(-10, 1));
    }

    #[test]
    fn non_negative_gains_compare_by_product() {
        let p = Priority::new(4, 3);
        assert!(p > Priority::new(11, 1));
        assert!(p < Priority::new(13, 1));
        assert!(p > Priority::new(-1, 100));
    }

    #[test]
    fn zero_gain_outranks_negative() {
        for w in [1, 7, 1000] {
            assert!(Priority::new(0, w) > Priority::new(-1, 1_000_000));
        }
        assert!(Priority::new(-1, 1) > Priority::lowest());
    }

    #[test]
    fn equal_ratio_prefers_larger_gain() {
        assert!(Priority::new(-2, 2) > Priority::new(-4, 4));
    }

    #[test]
    fn approx_is_monotone_on_samples() {
        let samples: Vec<Priority> = (-20..20)
            .flat_map(|g| (1..6).map(move |w| Priority::new(g, w)))
            .collect();
        for a in &samples {
            for b in &samples {
                if a > b {
                    assert!(a.approx() >= b.approx(), "{a:?} {b:?}");
                }
            }
        }
    }
}
