use nalgebra::DVector;

use super::finder::FixedPointCandidate;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointCluster {
    /// Lowest-speed member.
    pub state: DVector<f64>,
    pub speed: f64,
    pub members: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage merge of converged candidates: any two within
/// `merge_radius` (Euclidean) end up in the same cluster. Candidates are
/// sorted first (speed, then coordinates), so the output is independent of
/// input order.
pub fn cluster_candidates(
    cands: &[FixedPointCandidate],
    merge_radius: f64,
) -> Vec<FixedPointCluster> {
    assert!(merge_radius > 0.0, "merge_radius must be positive");
    let mut pts: Vec<&FixedPointCandidate> = cands.iter().filter(|c| c.converged).collect();
    pts.sort_by(|a, b| {
        a.speed.total_cmp(&b.speed).then_with(|| {
            a.state
                .iter()
                .zip(b.state.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if (&pts[i].state - &pts[j].state).norm() <= merge_radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    // Keep the lower index (lower speed) as root.
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut clusters: Vec<(usize, FixedPointCluster)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match clusters.iter_mut().find(|(r, _)| *r == root) {
            Some((_, c)) => c.members += 1,
            None => clusters.push((
                root,
                FixedPointCluster {
                    state: pts[root].state.clone(),
                    speed: pts[root].speed,
                    members: 1,
                },
            )),
        }
    }
    clusters.into_iter().map(|(_, c)| c).collect()
}
