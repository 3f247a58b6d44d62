//! Performance profiles and aggregates over run records.

use std::collections::{BTreeMap, BTreeSet};

use super::RunRecord;
use crate::error::{Error, Result};
use crate::testkit::geometric_mean;

type InstanceKey = (String, usize);

/// Mean cut over the valid runs of every (instance, config). `None` when a
/// config has no valid run on an instance.
pub fn aggregate_quality(records: &[RunRecord]) -> BTreeMap<InstanceKey, BTreeMap<String, Option<f64>>> {
    let configs: BTreeSet<&str> = records.iter().map(|r| r.config.as_str()).collect();
    let mut sums: BTreeMap<InstanceKey, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let per_config = sums.entry(r.instance()).or_default();
        let entry = per_config.entry(r.config.clone()).or_insert((0.0, 0));
        if let (true, Some(cut)) = (r.is_valid(), r.cut) {
            entry.0 += cut as f64;
            entry.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(instance, per_config)| {
            let qualities = configs
                .iter()
                .map(|&c| {
                    let q = per_config
                        .get(c)
                        .and_then(|&(sum, count)| (count > 0).then(|| sum / count as f64));
                    (c.to_string(), q)
                })
                .collect();
            (instance, qualities)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub config: String,
    /// `(theta, fraction of instances within theta of the best)`.
    pub points: Vec<(f64, f64)>,
}

impl ProfileCurve {
    pub fn fraction_at(&self, theta: f64) -> f64 {
        self.points
            .iter()
            .take_while(|&&(t, _)| t <= theta)
            .last()
            .map_or(0.0, |&(_, f)| f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub instances: usize,
    pub curves: Vec<ProfileCurve>,
}

fn within(quality: f64, best: f64, theta: f64) -> bool {
    quality <= theta * best * (1.0 + 1e-12)
}

/// For every config, the share of instances on which its mean cut is at most
/// `theta` times the best mean cut of any config. Configs that never produced
/// a valid result on an instance count as not within any `theta` there.
/// Without explicit `thetas`, the curve has a point at 1 and at every
/// occurring ratio.
pub fn performance_profile(records: &[RunRecord], thetas: Option<&[f64]>) -> Result<Profile> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to profile".into()));
    }
    let quality = aggregate_quality(records);
    let configs: Vec<String> = quality
        .values()
        .next()
        .map(|m| m.keys().cloned().collect())
        .unwrap_or_default();
    let mut ratios: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for per_config in quality.values() {
        let best = per_config.values().flatten().copied().fold(f64::INFINITY, f64::min);
        for (config, q) in per_config {
            let ratio = match *q {
                None => f64::INFINITY,
                Some(_) if best == 0.0 => {
                    if *q == Some(0.0) {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                }
                Some(q) => q / best,
            };
            ratios.entry(config).or_default().push(ratio);
        }
    }
    let grid: Vec<f64> = match thetas {
        Some(t) => t.to_vec(),
        None => {
            let mut all: Vec<f64> = ratios.values().flatten().copied().filter(|r| r.is_finite()).collect();
            all.push(1.0);
            all.sort_by(f64::total_cmp);
            all.dedup();
            all
        }
    };
    let n = quality.len() as f64;
    let curves = configs
        .iter()
        .map(|config| {
            let mine = &ratios[config.as_str()];
            let points = grid
                .iter()
                .map(|&theta| {
                    let hits = mine.iter().filter(|&&r| r.is_finite() && within(r, 1.0, theta)).count();
                    (theta, hits as f64 / n)
                })
                .collect();
            ProfileCurve {
                config: config.clone(),
                points,
            }
        })
        .collect();
    Ok(Profile {
        instances: quality.len(),
        curves,
    })
}

/// Geometric mean over instances of each config's mean cut, skipping
/// instances without a valid run.
pub fn geometric_mean_per_config(records: &[RunRecord]) -> BTreeMap<String, f64> {
    let quality = aggregate_quality(records);
    let mut per_config: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for qualities in quality.values() {
        for (config, q) in qualities {
            let values = per_config.entry(config.clone()).or_default();
            if let Some(q) = q {
                values.push(*q);
            }
        }
    }
    per_config
        .into_iter()
        .map(|(config, values)| (config, geometric_mean(values)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{Status, SCHEMA_VERSION};
    use super::*;

    fn record(graph: &str, config: &str, seed: u64, cut: i64) -> RunRecord {
        RunRecord {
            schema: SCHEMA_VERSION,
            graph: graph.into(),
            k: 2,
            config: config.into(),
            seed,
            cut: Some(cut),
            imbalance: Some(0.0),
            time: 1.0,
            balanced: true,
            timeout: false,
            status: Status::Ok,
        }
    }

    #[test]
    fn two_configs_one_instance() {
        let records = [record("g", "A", 0, 100), record("g", "B", 0, 110)];
        let p = performance_profile(&records, Some(&[1.0, 1.1])).unwrap();
        let a = &p.curves[0];
        let b = &p.curves[1];
        assert_eq!((a.config.as_str(), b.config.as_str()), ("A", "B"));
        assert_eq!(a.fraction_at(1.0), 1.0);
        assert_eq!(b.fraction_at(1.0), 0.0);
        assert_eq!(a.fraction_at(1.1), 1.0);
        assert_eq!(b.fraction_at(1.1), 1.0);
    }

    #[test]
    fn ties_and_single_config() {
        let records = [
            record("g", "A", 0, 5),
            record("g", "B", 0, 5),
            record("h", "A", 0, 7),
            record("h", "B", 0, 7),
        ];
        let p = performance_profile(&records, None).unwrap();
        assert!(p.curves.iter().all(|c| c.fraction_at(1.0) == 1.0));
        let p = performance_profile(&records[..1], None).unwrap();
        assert_eq!(p.curves[0].fraction_at(1.0), 1.0);
        assert!(performance_profile(&[], None).is_err());
    }

    #[test]
    fn failed_config_is_never_best() {
        let mut failed = record("g", "B", 0, 1);
        failed.status = Status::Timeout;
        let records = [record("g", "A", 0, 100), failed];
        let p = performance_profile(&records, Some(&[1.0, 10.0])).unwrap();
        assert_eq!(p.curves[1].fraction_at(10.0), 0.0);
        assert_eq!(p.curves[0].fraction_at(1.0), 1.0);
    }

    #[test]
    fn means_over_seeds() {
        let records = [
            record("g", "A", 0, 10),
            record("g", "A", 1, 30),
            record("h", "A", 0, 80),
        ];
        let gm = geometric_mean_per_config(&records);
        assert!((gm["A"] - 40.0).abs() < 1e-9);
    }
}
