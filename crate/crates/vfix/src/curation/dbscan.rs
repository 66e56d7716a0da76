//! Density-based clustering over a pluggable pairwise distance.
//!
//! Deterministic by construction: seeds are visited in input order, clusters
//! are numbered by discovery order, and border points attach to the cluster
//! of their nearest core neighbor, so the partition (up to relabeling) does
//! not depend on input order unless two core neighbors are exactly
//! equidistant.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterLabel {
    Cluster(usize),
    Noise,
}

impl ClusterLabel {
    pub fn cluster(self) -> Option<usize> {
        match self {
            ClusterLabel::Cluster(id) => Some(id),
            ClusterLabel::Noise => None,
        }
    }

    pub fn is_noise(self) -> bool {
        self == ClusterLabel::Noise
    }
}

/// Standard DBSCAN: a core point has at least `min_pts` neighbors within
/// `eps` (itself included); clusters are the connected components of core
/// points plus their border points; everything else is noise.
pub fn dbscan<T, D>(items: &[T], distance: D, eps: f64, min_pts: usize) -> Vec<ClusterLabel>
where
    D: Fn(&T, &T) -> f64,
{
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }

    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(&items[i], &items[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist[i][j] <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    let mut labels = vec![ClusterLabel::Noise; n];
    let mut next_cluster = 0usize;

    // Breadth-first expansion over core points, seeds in input order.
    let mut assigned = vec![false; n];
    for seed in 0..n {
        if !core[seed] || assigned[seed] {
            continue;
        }
        let id = next_cluster;
        next_cluster += 1;
        let mut queue = std::collections::VecDeque::from([seed]);
        assigned[seed] = true;
        labels[seed] = ClusterLabel::Cluster(id);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if core[q] && !assigned[q] {
                    assigned[q] = true;
                    labels[q] = ClusterLabel::Cluster(id);
                    queue.push_back(q);
                }
            }
        }
    }

    // Border points: non-core within eps of a core point. Attach to the
    // nearest core neighbor's cluster; ties resolve to the earliest core
    // point in input order.
    for p in 0..n {
        if core[p] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &q in &neighbors[p] {
            if !core[q] {
                continue;
            }
            let candidate = (dist[p][q], q);
            best = match best {
                None => Some(candidate),
                Some(current) if candidate.0 < current.0 => Some(candidate),
                Some(current) => Some(current),
            };
        }
        if let Some((_, q)) = best {
            labels[p] = labels[q];
        }
    }

    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_points(xs: &[f64], eps: f64, min_pts: usize) -> Vec<ClusterLabel> {
        dbscan(xs, |a, b| (a - b).abs(), eps, min_pts)
    }

    #[test]
    fn line_example_two_clusters_one_noise() {
        let labels = line_points(&[0.0, 0.1, 0.2, 10.0, 10.1, 50.0], 0.5, 2);
        assert_eq!(labels[0], ClusterLabel::Cluster(0));
        assert_eq!(labels[1], ClusterLabel::Cluster(0));
        assert_eq!(labels[2], ClusterLabel::Cluster(0));
        assert_eq!(labels[3], ClusterLabel::Cluster(1));
        assert_eq!(labels[4], ClusterLabel::Cluster(1));
        assert_eq!(labels[5], ClusterLabel::Noise);
    }

    #[test]
    fn all_far_apart_is_all_noise() {
        let labels = line_points(&[0.0, 10.0, 20.0], 0.5, 2);
        assert!(labels.iter().all(|l| l.is_noise()));
    }

    #[test]
    fn single_item_with_min_pts_one_is_a_cluster() {
        let labels = line_points(&[42.0], 0.5, 1);
        assert_eq!(labels, vec![ClusterLabel::Cluster(0)]);
    }

    #[test]
    fn border_point_attaches_to_nearest_core() {
        // Two dense groups with a non-core point at 0.76, within eps of a
        // core on each side (0.37 at d=0.39 and 1.17 at d=0.41) but itself
        // having only 3 < min_pts neighbors. It must join the left cluster.
        let xs = [0.0, 0.1, 0.2, 0.3, 0.37, 1.17, 1.3, 1.4, 1.5, 1.6, 0.76];
        let labels = line_points(&xs, 0.45, 5);
        assert_eq!(labels[0], ClusterLabel::Cluster(0));
        assert_eq!(labels[5], ClusterLabel::Cluster(1));
        assert_eq!(labels[10], ClusterLabel::Cluster(0));
    }

    #[test]
    fn empty_input() {
        assert!(line_points(&[], 0.5, 2).is_empty());
    }
}
