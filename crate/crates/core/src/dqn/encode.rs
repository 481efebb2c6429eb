use crate::catalog::{SfcKind, VnfKind};
use crate::engine::EngineState;

/// Features of one engine state, flattened as `[dc | sfc | link]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoding {
    widths: [usize; 3],
    data: Vec<f64>,
}

/// Per-DC features: free storage and compute fractions, then idle, in-use and
/// pending-head counts per VNF type.
pub const DC_FEATURES: usize = 2 + 3 * VnfKind::COUNT;
/// Per-SFC-type features: pending head counts per VNF type, then the minimum
/// and mean remaining-deadline fraction of those pending requests.
pub const SFC_FEATURES: usize = VnfKind::COUNT + 2;

pub fn encoding_widths(n_dcs: usize, n_links: usize) -> [usize; 3] {
    [
        n_dcs * DC_FEATURES,
        SfcKind::COUNT * SFC_FEATURES,
        n_links.max(1),
    ]
}

impl StateEncoding {
    pub fn from_parts(widths: [usize; 3], data: Vec<f64>) -> StateEncoding {
        assert_eq!(widths.iter().sum::<usize>(), data.len());
        StateEncoding { widths, data }
    }

    pub fn widths(&self) -> [usize; 3] {
        self.widths
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dc_block(&self) -> &[f64] {
        self.branch(0)
    }

    pub fn sfc_block(&self) -> &[f64] {
        self.branch(1)
    }

    pub fn link_block(&self) -> &[f64] {
        self.branch(2)
    }

    pub fn branch(&self, i: usize) -> &[f64] {
        let start: usize = self.widths[..i].iter().sum();
        &self.data[start..start + self.widths[i]]
    }

    pub fn branches(&self) -> [&[f64]; 3] {
        [self.branch(0), self.branch(1), self.branch(2)]
    }
}

/// Encodes `state`. Only aggregates are used, so the result does not depend
/// on request tags or instance ids.
pub fn encode(state: &EngineState, count_cap: f64) -> StateEncoding {
    let n = state.dcs().len();
    let links = state.graph().links();
    let widths = encoding_widths(n, links.len());
    let mut data = Vec::with_capacity(widths.iter().sum());
    let scale = |c: usize| (c as f64 / count_cap).min(1.0);

    let mut pending_at = vec![[0usize; VnfKind::COUNT]; n];
    let mut pending_by_type = [[0usize; VnfKind::COUNT]; SfcKind::COUNT];
    let mut slack = [(f64::INFINITY, 0.0f64, 0usize); SfcKind::COUNT];
    for rec in state.live().values() {
        let Some(v) = rec.head_pending() else { continue };
        pending_at[rec.sfc_dc.0][v.index()] += 1;
        pending_by_type[rec.kind.index()][v.index()] += 1;
        let frac = (rec.remaining_steps() as f64 / rec.deadline_steps as f64).clamp(0.0, 1.0);
        let s = &mut slack[rec.kind.index()];
        s.0 = s.0.min(frac);
        s.1 += frac;
        s.2 += 1;
    }

    for (d, dc) in state.dcs().iter().enumerate() {
        data.push(dc.cur_storage() as f64 / dc.max_storage() as f64);
        data.push(dc.cur_compute() as f64 / dc.max_compute() as f64);
        for k in VnfKind::ALL {
            data.push(scale(dc.idle_count(k)));
        }
        for k in VnfKind::ALL {
            data.push(scale(dc.in_use_count(k)));
        }
        for k in VnfKind::ALL {
            data.push(scale(pending_at[d][k.index()]));
        }
    }
    for s in SfcKind::ALL {
        for k in VnfKind::ALL {
            data.push(scale(pending_by_type[s.index()][k.index()]));
        }
        let (min, sum, cnt) = slack[s.index()];
        if cnt == 0 {
            data.extend([1.0, 1.0]);
        } else {
            data.extend([min, sum / cnt as f64]);
        }
    }
    if links.is_empty() {
        data.push(0.0);
    }
    for l in links {
        data.push(l.residual.0 as f64 / l.capacity.0 as f64);
    }
    StateEncoding::from_parts(widths, data)
}
