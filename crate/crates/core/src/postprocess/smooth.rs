use crate::timeline::{encode_runs, ActionTimeline, Segment};

pub const DEFAULT_MIN_LEN: usize = 5;

/// Absorb every segment shorter than `min_len` into a neighbour.
///
/// Segments flanked by the same class on both sides go first (shortest, then
/// heaviest flanks), since merging them cannot pick a wrong side. Remaining
/// short segments join the longer neighbour, the preceding one on ties.
pub fn remove_short_segments(t: &ActionTimeline, min_len: usize) -> ActionTimeline {
    let mut runs = encode_runs(t.labels());
    while runs.len() > 1 {
        let Some(j) = pick_short(&runs, min_len) else { break };
        let target = absorbing_neighbour(&runs, j);
        runs[j].class_id = runs[target].class_id;
        runs = encode_runs(&expand(&runs));
    }
    t.with_labels(expand(&runs)).expect("labels come from a valid timeline")
}

fn expand(runs: &[Segment]) -> Vec<u8> {
    runs.iter().flat_map(|s| std::iter::repeat_n(s.class_id, s.len())).collect()
}

fn is_spike(runs: &[Segment], j: usize) -> bool {
    j > 0 && j + 1 < runs.len() && runs[j - 1].class_id == runs[j + 1].class_id
}

fn pick_short(runs: &[Segment], min_len: usize) -> Option<usize> {
    (0..runs.len())
        .filter(|&j| runs[j].len() < min_len)
        .min_by_key(|&j| {
            let spike = is_spike(runs, j);
            let flank = if spike { runs[j - 1].len() + runs[j + 1].len() } else { 0 };
            (!spike, runs[j].len(), std::cmp::Reverse(flank), j)
        })
}

fn absorbing_neighbour(runs: &[Segment], j: usize) -> usize {
    if j == 0 {
        return 1;
    }
    if j + 1 == runs.len() {
        return j - 1;
    }
    if runs[j + 1].len() > runs[j - 1].len() {
        j + 1
    } else {
        j - 1
    }
}
