//! Line-delimited episode trace.
//!
//! The first line is a header `{"schema":"sfcsim-trace","version":1}`. Every
//! following line is one [`TraceRecord`]: a `step` field plus the event fields
//! flattened in, discriminated by `event`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::catalog::{SfcKind, VnfKind};
use crate::datacenter::FuncId;
use crate::request_gen::SfcTag;
use crate::topology::DcId;

pub const TRACE_SCHEMA: &str = "sfcsim-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Deadline passed with VNFs still pending.
    Deadline,
    /// Chain finished but the final packet arrived after the deadline.
    LateDelivery,
    /// Final packet still had no route once the deadline had passed.
    Unroutable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Inject {
        tag: SfcTag,
        sfc: SfcKind,
        src: DcId,
        dest: DcId,
        bw_kbps: u64,
    },
    Install {
        dc: DcId,
        vnf: VnfKind,
        func: FuncId,
    },
    Allocate {
        tag: SfcTag,
        vnf: VnfKind,
        dc: DcId,
        func: FuncId,
    },
    Uninstall {
        dc: DcId,
        vnf: VnfKind,
        func: FuncId,
    },
    /// Idle instance removed after reaching the idle threshold.
    Reap {
        dc: DcId,
        vnf: VnfKind,
        func: FuncId,
    },
    TxStart {
        tag: SfcTag,
        path: Vec<DcId>,
        steps: u64,
    },
    TxEnd {
        tag: SfcTag,
    },
    NoPath {
        tag: SfcTag,
        from: DcId,
        to: DcId,
    },
    VnfDone {
        tag: SfcTag,
        vnf: VnfKind,
        dc: DcId,
        func: FuncId,
    },
    ForceRevoke {
        tag: SfcTag,
        vnf: VnfKind,
        dc: DcId,
        func: FuncId,
    },
    Drop {
        tag: SfcTag,
        sfc: SfcKind,
        pending: usize,
        reason: DropReason,
    },
    FinalTxStart {
        tag: SfcTag,
        path: Vec<DcId>,
        steps: u64,
    },
    Complete {
        tag: SfcTag,
        sfc: SfcKind,
        e2e_steps: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    let header = Header {
        schema: TRACE_SCHEMA.into(),
        version: TRACE_VERSION,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace<R: BufRead>(input: R) -> io::Result<Vec<TraceRecord>> {
    let mut lines = input.lines();
    let header: Header = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(io::Error::new(io::ErrorKind::InvalidData, "empty trace")),
    };
    if header.schema != TRACE_SCHEMA || header.version != TRACE_VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported trace {}/{}", header.schema, header.version),
        ));
    }
    lines
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
