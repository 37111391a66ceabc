use crate::error::WorkloadError;
use crate::model::{TransferSpec, WorkloadPage};

use super::HarEntry;

/// Tolerance for HAR timestamp rounding, in milliseconds.
pub const DEFAULT_JITTER_MS: f64 = 1.0;

/// Builds a page from a recorded trace: B depends on A when A had finished
/// by the time B started (within `jitter_ms`). Edges are restricted to point
/// forward in (end, start, index) order, which keeps the graph acyclic, and
/// the result is transitively reduced.
///
/// Transfer ids are `e<index>` in trace order; the page is named after the
/// first entry's host.
pub fn derive_dependencies(entries: &[HarEntry], jitter_ms: f64) -> Result<WorkloadPage, WorkloadError> {
    let first = entries.first().ok_or(WorkloadError::EmptyTrace)?;
    let base = entries.iter().map(|e| e.started_at).min().unwrap_or(first.started_at);
    let spans: Vec<(f64, f64)> = entries
        .iter()
        .map(|e| {
            let offset = (e.started_at - base).num_microseconds().unwrap_or(i64::MAX) as f64 / 1000.0;
            (offset, offset + e.duration_ms)
        })
        .collect();

    let n = entries.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        spans[a]
            .1
            .total_cmp(&spans[b].1)
            .then(spans[a].0.total_cmp(&spans[b].0))
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    // preds[b] = all a with a -> b.
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|b| {
            (0..n)
                .filter(|&a| rank[a] < rank[b] && spans[a].1 <= spans[b].0 + jitter_ms)
                .collect()
        })
        .collect();
    let reduced = transitive_reduction(&preds, &order);

    let width = (n.max(1) - 1).to_string().len();
    let id = |i: usize| format!("e{i:0width$}");
    let transfers = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            TransferSpec::new(id(i), e.body_size_bytes, e.host.clone())
                .with_tls(e.is_tls())
                .with_deps(reduced[i].iter().map(|&p| id(p)))
        })
        .collect();
    Ok(WorkloadPage::new(first.host.clone(), transfers))
}

/// Removes every edge implied by a longer path. `preds[v]` lists the direct
/// predecessors of `v`; `topo` is a topological order (predecessors first).
/// Returned predecessor lists are sorted by index.
pub fn transitive_reduction(preds: &[Vec<usize>], topo: &[usize]) -> Vec<Vec<usize>> {
    let n = preds.len();
    let mut pos = vec![0; n];
    for (p, &v) in topo.iter().enumerate() {
        pos[v] = p;
    }
    // ancestors[v][u]: u reaches v through at least one edge.
    let mut ancestors = vec![vec![false; n]; n];
    let mut out = vec![Vec::new(); n];
    for &v in topo {
        let mut direct = preds[v].clone();
        // Latest predecessors first: an earlier one is redundant if a later
        // one already covers it.
        direct.sort_by_key(|&u| std::cmp::Reverse(pos[u]));
        let mut anc = vec![false; n];
        for u in direct {
            if anc[u] {
                continue;
            }
            out[v].push(u);
            anc[u] = true;
            for (w, &a) in ancestors[u].iter().enumerate() {
                if a {
                    anc[w] = true;
                }
            }
        }
        out[v].sort_unstable();
        ancestors[v] = anc;
    }
    out
}
