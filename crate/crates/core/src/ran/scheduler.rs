//! Per-cell resource-block scheduler.
//!
//! Strict priority between traffic classes, round-robin inside a class.
//! GBR UEs are served first, one RB at a time in rotating order, until each
//! one's backlog is covered or the RBs run out. Non-GBR UEs are then served
//! the same way from what is left, and any RBs still unused are spread
//! round-robin over the backlogged non-GBR UEs (or over the GBR UEs if no
//! non-GBR UE is waiting), so a lone backlogged UE receives the whole carrier.

use super::TrafficType;

/// One backlogged UE as seen by its serving cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedRequest {
    pub traffic: TrafficType,
    /// RBs needed to clear the queue at the cell's rate estimate; at least 1.
    pub demand_rbs: usize,
}

/// Returns, for every RB, the index into `requests` of the UE it is given to.
pub fn schedule_rbs(requests: &[SchedRequest], rb_count: usize, tti: u64) -> Vec<Option<usize>> {
    let mut alloc = vec![None; rb_count];
    let mut next_rb = 0;
    let gbr = rotated(requests, TrafficType::Gbr, tti);
    let non_gbr = rotated(requests, TrafficType::NonGbr, tti);

    for class in [&gbr, &non_gbr] {
        let mut need: Vec<usize> = class
            .iter()
            .map(|&k| requests[k].demand_rbs.max(1))
            .collect();
        while next_rb < rb_count && need.iter().any(|&n| n > 0) {
            for (slot, &k) in class.iter().enumerate() {
                if next_rb == rb_count {
                    break;
                }
                if need[slot] > 0 {
                    need[slot] -= 1;
                    alloc[next_rb] = Some(k);
                    next_rb += 1;
                }
            }
        }
    }

    let leftover = if non_gbr.is_empty() { &gbr } else { &non_gbr };
    if !leftover.is_empty() {
        for (i, rb) in alloc[next_rb..].iter_mut().enumerate() {
            *rb = Some(leftover[i % leftover.len()]);
        }
    }
    alloc
}

/// Indices of one class, rotated so the round-robin start moves every TTI.
fn rotated(requests: &[SchedRequest], traffic: TrafficType, tti: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..requests.len())
        .filter(|&k| requests[k].traffic == traffic)
        .collect();
    if !idx.is_empty() {
        let shift = (tti % idx.len() as u64) as usize;
        idx.rotate_left(shift);
    }
    idx
}
