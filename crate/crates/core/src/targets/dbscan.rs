use std::collections::VecDeque;

/// Density-based clustering over `n` points with a caller-supplied
/// neighbourhood predicate. A point is core when its eps-neighbourhood
/// (itself included) holds at least `min_pts` points. Clusters are
/// returned in order of their lowest-index core point, members ascending;
/// border points join the first cluster that reaches them.
pub fn dbscan(n: usize, min_pts: usize, mut within_eps: impl FnMut(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if within_eps(i, j) {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
        }
    }
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() + 1 >= min_pts).collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters = Vec::new();
    for seed in 0..n {
        if label[seed].is_some() || !is_core[seed] {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![seed];
        label[seed] = Some(id);
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if label[q].is_some() {
                    continue;
                }
                label[q] = Some(id);
                members.push(q);
                if is_core[q] {
                    queue.push_back(q);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}
