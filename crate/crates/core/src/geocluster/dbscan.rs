use super::spatial::GeoGrid;
use super::{ClusterParams, GeoPoint};

/// Per-point assignment: a cluster number or `None` for noise.
pub type Labels = Vec<Option<usize>>;

#[derive(Clone, Copy, PartialEq)]
enum State {
    Unvisited,
    Noise,
    Member(usize),
}

/// Density-based clustering with haversine neighbourhoods. Points are visited
/// in input order; a border point joins the first cluster that reaches it.
pub fn dbscan(points: &[GeoPoint], params: &ClusterParams) -> Labels {
    if points.is_empty() {
        return Vec::new();
    }
    let grid = GeoGrid::new(points, params.eps);
    dbscan_with_grid(&grid, points.len(), params)
}

pub(crate) fn dbscan_with_grid(grid: &GeoGrid<'_>, n: usize, params: &ClusterParams) -> Labels {
    dbscan_by(n, params.min_pts, |i, out| grid.neighbors(i, params.eps, out))
}

/// DBSCAN over an arbitrary neighbourhood: `neighbors(i, out)` fills `out`
/// with the points within eps of `i`, itself included.
pub(crate) fn dbscan_by(n: usize, min_pts: usize, mut neighbors_of: impl FnMut(usize, &mut Vec<usize>)) -> Labels {
    let mut state = vec![State::Unvisited; n];
    let mut next_cluster = 0;
    let mut neighbors = Vec::new();
    let mut queue = Vec::new();
    for i in 0..n {
        if state[i] != State::Unvisited {
            continue;
        }
        neighbors_of(i, &mut neighbors);
        if neighbors.len() < min_pts {
            state[i] = State::Noise;
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        state[i] = State::Member(c);
        queue.clear();
        queue.extend(neighbors.iter().copied().filter(|&j| j != i));
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head];
            head += 1;
            match state[q] {
                State::Member(_) => continue,
                State::Noise => {
                    state[q] = State::Member(c);
                    continue;
                }
                State::Unvisited => {}
            }
            state[q] = State::Member(c);
            neighbors_of(q, &mut neighbors);
            if neighbors.len() >= min_pts {
                queue.extend(
                    neighbors
                        .iter()
                        .copied()
                        .filter(|&j| !matches!(state[j], State::Member(_))),
                );
            }
        }
    }
    state
        .into_iter()
        .map(|s| match s {
            State::Member(c) => Some(c),
            _ => None,
        })
        .collect()
}

pub fn cluster_count(labels: &Labels) -> usize {
    labels.iter().flatten().max().map_or(0, |m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocluster::haversine_km;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Full distance matrix, union-find over core points, border points
    /// assigned to the earliest-discovered adjacent component.
    fn oracle(points: &[GeoPoint], params: &ClusterParams) -> Labels {
        let n = points.len();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| haversine_km(points[i], points[j]) <= params.eps).collect())
            .collect();
        let core: Vec<bool> = adj.iter().map(|a| a.len() >= params.min_pts).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for i in 0..n {
            if !core[i] {
                continue;
            }
            for &j in &adj[i] {
                if core[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut rank = std::collections::HashMap::new();
        for i in 0..n {
            if core[i] {
                let r = find(&mut parent, i);
                let next = rank.len();
                rank.entry(r).or_insert(next);
            }
        }
        (0..n)
            .map(|i| {
                if core[i] {
                    Some(rank[&find(&mut parent, i)])
                } else {
                    adj[i]
                        .iter()
                        .filter(|&&j| core[j])
                        .map(|&j| rank[&find(&mut parent, j)])
                        .min()
                }
            })
            .collect()
    }

    fn blobs(centers_km: &[(f64, f64)], per: usize, sigma: f64, seed: u64) -> Vec<GeoPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let origin = GeoPoint::new(114.0, 22.5);
        centers_km
            .iter()
            .flat_map(|&(x, y)| (0..per).map(move |_| (x, y)))
            .map(|(x, y)| origin.offset_km(x + normal.sample(&mut rng), y + normal.sample(&mut rng)))
            .collect()
    }

    #[test]
    fn two_gaussian_blobs() {
        let pts = blobs(&[(0.0, 0.0), (14.0, 0.0)], 50, 0.1, 3);
        let labels = dbscan(&pts, &ClusterParams { eps: 1.0, min_pts: 5 });
        assert_eq!(labels, oracle(&pts, &ClusterParams { eps: 1.0, min_pts: 5 }));
        assert_eq!(cluster_count(&labels), 2);
        assert!(labels.iter().all(Option::is_some));
        assert!(labels[..50].iter().all(|l| *l == Some(0)));
        assert!(labels[50..].iter().all(|l| *l == Some(1)));
    }

    #[test]
    fn sparse_points_are_noise() {
        let origin = GeoPoint::new(10.0, 50.0);
        let pts: Vec<_> = (0..10).map(|i| origin.offset_km(i as f64 * 3.0, 0.0)).collect();
        let labels = dbscan(&pts, &ClusterParams { eps: 1.0, min_pts: 2 });
        assert!(labels.iter().all(Option::is_none));
    }

    #[test]
    fn matches_oracle_on_random_layouts() {
        for seed in 0..10 {
            let pts = blobs(&[(0.0, 0.0), (2.0, 1.0), (5.0, -1.0)], 40, 0.8, seed);
            for (eps, min_pts) in [(0.3, 3), (0.5, 5), (0.8, 8)] {
                let p = ClusterParams { eps, min_pts };
                assert_eq!(dbscan(&pts, &p), oracle(&pts, &p), "seed {seed} eps {eps}");
            }
        }
    }

    #[test]
    fn every_point_gets_one_label() {
        let pts = blobs(&[(0.0, 0.0)], 30, 1.0, 1);
        let labels = dbscan(&pts, &ClusterParams { eps: 0.4, min_pts: 4 });
        assert_eq!(labels.len(), pts.len());
    }
}
