//! Benchmark sweeps and their CSV records.

mod profile;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fm::Variant;
use crate::graph::{Graph, Weight};
use crate::io::{read_partition, write_partition};
use crate::partition::{cut_from_scratch, BalanceLimit};
use crate::pipeline::{partition, PartitionConfig, Preset};
use crate::runtime::Runtime;

pub use profile::{aggregate_quality, geometric_mean_per_config, performance_profile, Profile, ProfileCurve};

/// Version of the CSV layout written by [`write_records`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Imbalanced,
    Timeout,
    Infeasible,
    Failed,
}

/// One run of one configuration on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub graph: String,
    pub k: usize,
    pub config: String,
    pub seed: u64,
    /// Cut of the emitted partition, recomputed from the file.
    pub cut: Option<Weight>,
    pub imbalance: Option<f64>,
    /// Wall time in seconds; the time limit for timed-out runs.
    pub time: f64,
    pub balanced: bool,
    pub timeout: bool,
    pub status: Status,
}

impl RunRecord {
    /// Instance key: graph name and block count.
    pub fn instance(&self) -> (String, usize) {
        (self.graph.clone(), self.k)
    }

    /// Whether the run produced a usable, balanced result in time.
    pub fn is_valid(&self) -> bool {
        self.status == Status::Ok
    }
}

/// A named solver configuration. Ids look like `preset` or
/// `preset:variant`, for example `unconstrained:constant-penalty`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub id: String,
    pub preset: Preset,
    pub variant: Variant,
    pub workers: usize,
}

impl BenchConfig {
    pub fn parse(id: &str, workers: usize) -> Result<Self> {
        let (preset, variant) = match id.split_once(':') {
            Some((p, v)) => (p.parse()?, v.parse()?),
            None => (id.parse()?, Variant::default()),
        };
        Ok(BenchConfig {
            id: id.to_string(),
            preset,
            variant,
            workers,
        })
    }

    pub fn partition_config(&self, k: usize, epsilon: f64, seed: u64) -> PartitionConfig {
        PartitionConfig::with_preset(k, epsilon, self.preset)
            .variant(self.variant)
            .seed(seed)
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub graph: Graph,
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub instances: Vec<Instance>,
    pub ks: Vec<usize>,
    pub configs: Vec<BenchConfig>,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    pub time_limit: Duration,
    /// Partition files are written here.
    pub work_dir: PathBuf,
}

fn partition_path(dir: &Path, graph: &str, k: usize, config: &str, seed: u64) -> PathBuf {
    let clean: String = format!("{graph}.k{k}.{config}.s{seed}.part")
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    dir.join(clean)
}

/// Runs every configuration on every (instance, k) with every seed, one run
/// at a time. A run that finishes after the time limit is recorded as a
/// timeout with the limit as its time. Failures are recorded, not raised.
pub fn cmd_bench(plan: &BenchPlan) -> Result<Vec<RunRecord>> {
    std::fs::create_dir_all(&plan.work_dir).map_err(|e| Error::io(&plan.work_dir, e))?;
    let mut records = Vec::new();
    for instance in &plan.instances {
        for &k in &plan.ks {
            for config in &plan.configs {
                let runtime = Runtime::new(config.workers);
                for &seed in &plan.seeds {
                    let record = run_one(plan, instance, k, config, seed, &runtime);
                    info!(
                        "{} k={} {} seed {}: {:?} cut {:?} in {:.3}s",
                        instance.name, k, config.id, seed, record.status, record.cut, record.time
                    );
                    records.push(record);
                }
            }
        }
    }
    Ok(records)
}

fn run_one(
    plan: &BenchPlan,
    instance: &Instance,
    k: usize,
    config: &BenchConfig,
    seed: u64,
    runtime: &Runtime,
) -> RunRecord {
    let mut record = RunRecord {
        schema: SCHEMA_VERSION,
        graph: instance.name.clone(),
        k,
        config: config.id.clone(),
        seed,
        cut: None,
        imbalance: None,
        time: 0.0,
        balanced: false,
        timeout: false,
        status: Status::Failed,
    };
    let started = Instant::now();
    let result = partition(
        &instance.graph,
        &config.partition_config(k, plan.epsilon, seed),
        runtime,
    );
    let elapsed = started.elapsed();
    record.time = elapsed.as_secs_f64();
    if elapsed > plan.time_limit {
        record.timeout = true;
        record.time = plan.time_limit.as_secs_f64();
        record.status = Status::Timeout;
        return record;
    }
    let result = match result {
        Ok(r) => r,
        Err(Error::Infeasible(msg)) => {
            warn!("{} k={k} {}: infeasible: {msg}", instance.name, config.id);
            record.status = Status::Infeasible;
            return record;
        }
        Err(e) => {
            warn!("{} k={k} {}: {e}", instance.name, config.id);
            return record;
        }
    };
    let path = partition_path(&plan.work_dir, &instance.name, k, &config.id, seed);
    let blocks = match write_partition(&result.blocks, &path).and_then(|_| read_partition(&path)) {
        Ok(b) if b.len() == instance.graph.n() && b.iter().all(|&x| (x as usize) < k) => b,
        Ok(_) => {
            warn!("{}: emitted partition is malformed", path.display());
            return record;
        }
        Err(e) => {
            warn!("{e}");
            return record;
        }
    };
    let mut weights = vec![0 as Weight; k];
    for v in instance.graph.nodes() {
        weights[blocks[v as usize] as usize] += instance.graph.node_weight(v);
    }
    let limit = BalanceLimit::new(instance.graph.total_node_weight(), k, plan.epsilon).expect("validated by the run");
    let heaviest = weights.iter().copied().max().unwrap_or(0);
    record.cut = Some(cut_from_scratch(&instance.graph, &blocks));
    record.imbalance = Some(heaviest as f64 / limit.perfect_weight().max(1) as f64 - 1.0);
    record.balanced = limit.is_balanced(heaviest);
    record.status = if record.balanced {
        Status::Ok
    } else {
        Status::Imbalanced
    };
    record
}

pub fn write_records(records: &[RunRecord], out: impl std::io::Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer
            .serialize(r)
            .map_err(|e| Error::InvalidArgument(format!("cannot write record: {e}")))?;
    }
    writer.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn read_records(input: impl std::io::Read) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<RunRecord>().enumerate() {
        let record = row.map_err(|e| Error::parse(i + 2, e.to_string()))?;
        if record.schema != SCHEMA_VERSION {
            return Err(Error::parse(
                i + 2,
                format!("schema version {} (expected {SCHEMA_VERSION})", record.schema),
            ));
        }
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::grid;

    fn plan(dir: &Path, limit: Duration) -> BenchPlan {
        BenchPlan {
            instances: vec![
                Instance {
                    name: "grid".into(),
                    graph: grid(8, 8),
                },
                Instance {
                    name: "path".into(),
                    graph: Graph::unit(10, (0..9).map(|v| (v, v + 1))).unwrap(),
                },
            ],
            ks: vec![2],
            configs: vec![
                BenchConfig::parse("unconstrained", 1).unwrap(),
                BenchConfig::parse("constrained", 1).unwrap(),
            ],
            seeds: vec![0, 1, 2],
            epsilon: 0.03,
            time_limit: limit,
            work_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn full_cross_product_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let records = cmd_bench(&plan(dir.path(), Duration::from_secs(60))).unwrap();
        assert_eq!(records.len(), 12);
        assert!(records.iter().all(|r| r.status == Status::Ok && r.balanced));
        let mut csv = Vec::new();
        write_records(&records, &mut csv).unwrap();
        assert_eq!(read_records(csv.as_slice()).unwrap(), records);
    }

    #[test]
    fn zero_limit_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let records = cmd_bench(&plan(dir.path(), Duration::ZERO)).unwrap();
        assert!(records
            .iter()
            .all(|r| r.timeout && r.time == 0.0 && r.status == Status::Timeout));
    }

    #[test]
    fn config_ids() {
        let c = BenchConfig::parse("unconstrained:limited-imbalance", 2).unwrap();
        assert_eq!(
            (c.preset, c.variant, c.workers),
            (Preset::Unconstrained, Variant::LimitedImbalance, 2)
        );
        assert!(BenchConfig::parse("fast", 1).is_err());
    }
}
