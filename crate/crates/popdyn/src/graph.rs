//! Tiny directed-graph reachability helper shared by validation and the
//! Markov module.

/// Strong connectivity of the directed graph on `k` nodes with edge
/// predicate `edge(i, j)`, via two breadth-first sweeps (forward and
/// reverse) from node 0.
pub(crate) fn strongly_connected(k: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if k == 0 {
        return false;
    }
    if k == 1 {
        return true;
    }
    bfs_reaches_all(k, &|i, j| edge(i, j)) && bfs_reaches_all(k, &|i, j| edge(j, i))
}

fn bfs_reaches_all(k: usize, edge: &dyn Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; k];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for j in 0..k {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == k
}
