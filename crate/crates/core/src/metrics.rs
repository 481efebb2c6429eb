//! Acceptance counters, end-to-end delay statistics and sampled resource
//! usage for one episode, plus their CSV/JSON export.
//!
//! Output files (all written to one directory):
//!
//! | file              | columns                                                       |
//! |-------------------|---------------------------------------------------------------|
//! | `acceptance.csv`  | `sfc,generated,accepted,dropped,acceptance_ratio` (+ `all` row) |
//! | `e2e.csv`         | `sfc,count,mean_ms,median_ms,p95_ms` (accepted requests only)   |
//! | `resources.csv`   | `step,dc,storage_used_frac,compute_used_frac`                 |
//! | `summary.json`    | [`MetricsSummary`]                                            |
//!
//! An empty ratio or statistic is written as an empty CSV cell and `null` in
//! JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::SfcKind;
use crate::engine::{CompletionRecord, DropRecord, EngineState};
use crate::request_gen::SfcTag;
use crate::STEPS_PER_MS;

pub const SUMMARY_SCHEMA: &str = "sfcsim-metrics";
pub const SUMMARY_VERSION: u32 = 1;
/// 15 ms.
pub const DEFAULT_SAMPLE_PERIOD: u64 = 1500;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("request {0} finalized twice")]
    DoubleFinalization(SfcTag),
    #[error("more {0} requests finalized than generated")]
    Overcount(SfcKind),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported summary {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub generated: u64,
    pub accepted: u64,
    pub dropped: u64,
}

impl TypeCounts {
    pub fn ratio(&self) -> Option<f64> {
        ratio(self.accepted, self.generated)
    }

    fn add(&mut self, o: &TypeCounts) {
        self.generated += o.generated;
        self.accepted += o.accepted;
        self.dropped += o.dropped;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct E2eStats {
    pub count: u64,
    pub mean_ms: f64,
    pub median_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_ms: f64,
}

impl E2eStats {
    pub fn from_steps(values: &[u64]) -> Option<E2eStats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        let n = v.len();
        let ms = |s: u64| s as f64 / STEPS_PER_MS as f64;
        let sum: u64 = v.iter().sum();
        let median = if n % 2 == 1 {
            ms(v[n / 2])
        } else {
            (ms(v[n / 2 - 1]) + ms(v[n / 2])) / 2.0
        };
        let rank = (95 * n).div_ceil(100);
        Some(E2eStats {
            count: n as u64,
            mean_ms: sum as f64 / n as f64 / STEPS_PER_MS as f64,
            median_ms: median,
            p95_ms: ms(v[rank - 1]),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    pub step: u64,
    pub dc: usize,
    pub storage_used_frac: f64,
    pub compute_used_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceMean {
    /// `None` for the all-DC mean.
    pub dc: Option<usize>,
    pub storage_used_frac: f64,
    pub compute_used_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsBundle {
    n_dcs: usize,
    sample_period: u64,
    counts: [TypeCounts; SfcKind::COUNT],
    e2e_steps: [Vec<u64>; SfcKind::COUNT],
    finalized: BTreeSet<SfcTag>,
    samples: Vec<ResourceSample>,
}

impl MetricsBundle {
    pub fn new(n_dcs: usize, sample_period: u64) -> MetricsBundle {
        assert!(sample_period > 0, "sample period must be positive");
        MetricsBundle {
            n_dcs,
            sample_period,
            counts: Default::default(),
            e2e_steps: Default::default(),
            finalized: BTreeSet::new(),
            samples: Vec::new(),
        }
    }

    pub fn n_dcs(&self) -> usize {
        self.n_dcs
    }

    pub fn sample_period(&self) -> u64 {
        self.sample_period
    }

    pub fn record_generated(&mut self, kind: SfcKind) {
        self.counts[kind.index()].generated += 1;
    }

    fn finalize(&mut self, tag: SfcTag, kind: SfcKind) -> Result<(), MetricsError> {
        if !self.finalized.insert(tag) {
            return Err(MetricsError::DoubleFinalization(tag));
        }
        let c = &self.counts[kind.index()];
        if c.accepted + c.dropped >= c.generated {
            return Err(MetricsError::Overcount(kind));
        }
        Ok(())
    }

    /// Counts an accepted request; a delivery past its deadline counts as a
    /// drop instead.
    pub fn record_completion(&mut self, c: &CompletionRecord) -> Result<(), MetricsError> {
        self.finalize(c.tag, c.kind)?;
        let i = c.kind.index();
        if c.e2e_steps <= c.deadline_steps {
            self.counts[i].accepted += 1;
            self.e2e_steps[i].push(c.e2e_steps);
        } else {
            self.counts[i].dropped += 1;
        }
        Ok(())
    }

    pub fn record_drop(&mut self, d: &DropRecord) -> Result<(), MetricsError> {
        self.finalize(d.tag, d.kind)?;
        self.counts[d.kind.index()].dropped += 1;
        Ok(())
    }

    /// Appends one sample per DC at the state's current step.
    pub fn sample_resources(&mut self, state: &EngineState) {
        let step = state.step_index();
        for dc in state.dcs() {
            self.samples.push(ResourceSample {
                step,
                dc: dc.id().0,
                storage_used_frac: dc.storage_used_fraction(),
                compute_used_frac: dc.compute_used_fraction(),
            });
        }
    }

    pub fn counts(&self, kind: SfcKind) -> TypeCounts {
        self.counts[kind.index()]
    }

    pub fn totals(&self) -> TypeCounts {
        let mut t = TypeCounts::default();
        for c in &self.counts {
            t.add(c);
        }
        t
    }

    /// Accepted over generated, across all types.
    pub fn acceptance_ratio(&self) -> Option<f64> {
        self.totals().ratio()
    }

    pub fn type_ratio(&self, kind: SfcKind) -> Option<f64> {
        self.counts(kind).ratio()
    }

    pub fn e2e_values(&self, kind: SfcKind) -> &[u64] {
        &self.e2e_steps[kind.index()]
    }

    pub fn e2e_stats(&self, kind: SfcKind) -> Option<E2eStats> {
        E2eStats::from_steps(&self.e2e_steps[kind.index()])
    }

    pub fn samples(&self) -> &[ResourceSample] {
        &self.samples
    }

    /// Time-mean of the sampled series per DC, followed by the all-DC mean.
    pub fn resource_means(&self) -> Vec<ResourceMean> {
        let mut out = Vec::new();
        if self.samples.is_empty() {
            return out;
        }
        let mut acc = vec![(0.0, 0.0, 0u64); self.n_dcs];
        for s in &self.samples {
            let a = &mut acc[s.dc];
            a.0 += s.storage_used_frac;
            a.1 += s.compute_used_frac;
            a.2 += 1;
        }
        for (dc, (st, cp, n)) in acc.iter().enumerate() {
            if *n > 0 {
                out.push(ResourceMean {
                    dc: Some(dc),
                    storage_used_frac: st / *n as f64,
                    compute_used_frac: cp / *n as f64,
                });
            }
        }
        let k = out.len() as f64;
        out.push(ResourceMean {
            dc: None,
            storage_used_frac: out.iter().map(|m| m.storage_used_frac).sum::<f64>() / k,
            compute_used_frac: out.iter().map(|m| m.compute_used_frac).sum::<f64>() / k,
        });
        out
    }

    /// Folds `other` into `self`; resource samples are concatenated.
    pub fn merge(&mut self, other: &MetricsBundle) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.add(b);
        }
        for (a, b) in self.e2e_steps.iter_mut().zip(&other.e2e_steps) {
            a.extend_from_slice(b);
        }
        self.samples.extend_from_slice(&other.samples);
        self.finalized.clear();
    }

    pub fn summary(&self, meta: &ExportMeta) -> MetricsSummary {
        let totals = self.totals();
        MetricsSummary {
            schema: SUMMARY_SCHEMA.into(),
            version: SUMMARY_VERSION,
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            policy: meta.policy.clone(),
            n_dcs: self.n_dcs,
            sample_period: self.sample_period,
            generated: totals.generated,
            accepted: totals.accepted,
            dropped: totals.dropped,
            acceptance_ratio: totals.ratio(),
            per_type: SfcKind::ALL
                .iter()
                .map(|&k| {
                    let c = self.counts(k);
                    (
                        k.name().to_string(),
                        TypeSummary {
                            generated: c.generated,
                            accepted: c.accepted,
                            dropped: c.dropped,
                            acceptance_ratio: c.ratio(),
                            e2e: self.e2e_stats(k),
                        },
                    )
                })
                .collect(),
            n_samples: (self.samples.len() / self.n_dcs.max(1)) as u64,
            resource_means: self.resource_means(),
        }
    }

    /// Writes the four export files into `dir`, creating it if needed.
    pub fn export(&self, dir: &Path, meta: &ExportMeta) -> Result<MetricsSummary, MetricsError> {
        fs::create_dir_all(dir)?;
        let summary = self.summary(meta);

        let mut w = csv::Writer::from_path(dir.join("acceptance.csv"))?;
        w.write_record(["sfc", "generated", "accepted", "dropped", "acceptance_ratio"])?;
        let mut row = |name: &str, c: &TypeCounts| {
            w.write_record([
                name.to_string(),
                c.generated.to_string(),
                c.accepted.to_string(),
                c.dropped.to_string(),
                opt(c.ratio()),
            ])
        };
        for k in SfcKind::ALL {
            row(k.name(), &self.counts(k))?;
        }
        row("all", &self.totals())?;
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("e2e.csv"))?;
        w.write_record(["sfc", "count", "mean_ms", "median_ms", "p95_ms"])?;
        for k in SfcKind::ALL {
            let s = self.e2e_stats(k);
            w.write_record([
                k.name().to_string(),
                s.map_or(0, |s| s.count).to_string(),
                opt(s.map(|s| s.mean_ms)),
                opt(s.map(|s| s.median_ms)),
                opt(s.map(|s| s.p95_ms)),
            ])?;
        }
        w.flush()?;

        // The header is written by hand so that an empty run still gets one.
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join("resources.csv"))?;
        w.write_record(["step", "dc", "storage_used_frac", "compute_used_frac"])?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;

        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        fs::write(dir.join("summary.json"), text)?;
        Ok(summary)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Provenance recorded in every summary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportMeta {
    pub config_hash: String,
    pub seed: u64,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub generated: u64,
    pub accepted: u64,
    pub dropped: u64,
    pub acceptance_ratio: Option<f64>,
    pub e2e: Option<E2eStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub policy: String,
    pub n_dcs: usize,
    pub sample_period: u64,
    pub generated: u64,
    pub accepted: u64,
    pub dropped: u64,
    pub acceptance_ratio: Option<f64>,
    pub per_type: BTreeMap<String, TypeSummary>,
    /// Sampling instants; `resources.csv` holds one row per instant and DC.
    pub n_samples: u64,
    pub resource_means: Vec<ResourceMean>,
}

pub fn import_summary(path: &Path) -> Result<MetricsSummary, MetricsError> {
    let s: MetricsSummary = serde_json::from_str(&fs::read_to_string(path)?)?;
    if s.schema != SUMMARY_SCHEMA || s.version != SUMMARY_VERSION {
        return Err(MetricsError::Schema(format!("{}/{}", s.schema, s.version)));
    }
    Ok(s)
}
