//! Cluster lineage across consecutive periods.
//!
//! Each cluster links to the successor it shares the most members with.
//! Several clusters may link to the same successor (a merge); a split keeps
//! only the largest-overlap branch.

use std::collections::HashMap;

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::geocluster::{haversine_km, ClusterId, PeriodClusters, RegionalCluster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LineageEdge {
    pub from_cluster: ClusterId,
    pub to_cluster: ClusterId,
    /// Enterprises present in both clusters.
    pub overlap: usize,
    pub centroid_shift_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EvolutionPath {
    pub path_id: usize,
    /// Chain of clusters, one per period, oldest first.
    pub clusters: Vec<ClusterId>,
    pub edges: Vec<LineageEdge>,
}

impl EvolutionPath {
    pub fn periods(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters.iter().map(|c| c.period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct MatchOptions {
    pub min_overlap: usize,
    /// Additionally require `overlap >= min_fraction * |from|`.
    pub min_fraction: Option<f64>,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            min_overlap: 1,
            min_fraction: None,
        }
    }
}

/// Number of shared member ids.
pub fn overlap(a: &RegionalCluster, b: &RegionalCluster) -> usize {
    let (small, large) = if a.member_ids.len() <= b.member_ids.len() { (a, b) } else { (b, a) };
    let set: std::collections::HashSet<&str> = large.member_ids.iter().map(String::as_str).collect();
    small.member_ids.iter().filter(|id| set.contains(id.as_str())).count()
}

/// Full overlap counts between the clusters of two periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OverlapMatrix {
    pub from_period: usize,
    pub to_period: usize,
    pub rows: Vec<ClusterId>,
    pub cols: Vec<ClusterId>,
    /// `counts[i][j]` = overlap of `rows[i]` and `cols[j]`.
    pub counts: Vec<Vec<usize>>,
}

pub fn overlap_matrix(from: &[RegionalCluster], to: &[RegionalCluster]) -> OverlapMatrix {
    let mut owner: HashMap<&str, usize> = HashMap::new();
    for (j, c) in to.iter().enumerate() {
        for id in &c.member_ids {
            owner.insert(id.as_str(), j);
        }
    }
    let counts = from
        .iter()
        .map(|c| {
            let mut row = vec![0; to.len()];
            for id in &c.member_ids {
                if let Some(&j) = owner.get(id.as_str()) {
                    row[j] += 1;
                }
            }
            row
        })
        .collect();
    OverlapMatrix {
        from_period: from.first().map_or(0, |c| c.id.period),
        to_period: to.first().map_or(0, |c| c.id.period),
        rows: from.iter().map(|c| c.id).collect(),
        cols: to.iter().map(|c| c.id).collect(),
        counts,
    }
}

/// One edge per cluster of `from` to its argmax-overlap successor in `to`;
/// ties go to the smaller centroid shift, then the smaller successor id.
pub fn match_period_pair(from: &[RegionalCluster], to: &[RegionalCluster], opts: &MatchOptions) -> (Vec<LineageEdge>, OverlapMatrix) {
    let matrix = overlap_matrix(from, to);
    let edges = from
        .iter()
        .zip(&matrix.counts)
        .filter_map(|(a, row)| {
            let floor = opts
                .min_fraction
                .map_or(0, |f| (f * a.member_ids.len() as f64).ceil() as usize)
                .max(opts.min_overlap)
                .max(1);
            let best = row
                .iter()
                .zip(to)
                .filter(|&(&n, _)| n >= floor)
                .map(|(&n, b)| (n, haversine_km(a.centroid, b.centroid), b.id))
                .min_by(|x, y| y.0.cmp(&x.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)))?;
            Some(LineageEdge {
                from_cluster: a.id,
                to_cluster: best.2,
                overlap: best.0,
                centroid_shift_km: best.1,
            })
        })
        .collect();
    (edges, matrix)
}

/// Chains from every cluster without a predecessor along the unique
/// successor edges. Merged chains share their common suffix.
pub fn build_paths(periods: &[Vec<RegionalCluster>], edges: &[LineageEdge]) -> Vec<EvolutionPath> {
    let next: HashMap<ClusterId, &LineageEdge> = edges.iter().map(|e| (e.from_cluster, e)).collect();
    let has_pred: std::collections::HashSet<ClusterId> = edges.iter().map(|e| e.to_cluster).collect();
    let mut starts: Vec<ClusterId> = periods.iter().flatten().map(|c| c.id).filter(|id| !has_pred.contains(id)).collect();
    starts.sort();
    starts
        .into_iter()
        .enumerate()
        .map(|(path_id, start)| {
            let mut clusters = vec![start];
            let mut chain = Vec::new();
            let mut at = start;
            while let Some(e) = next.get(&at) {
                chain.push((*e).clone());
                clusters.push(e.to_cluster);
                at = e.to_cluster;
            }
            EvolutionPath {
                path_id,
                clusters,
                edges: chain,
            }
        })
        .collect()
}

/// Transfer count and centroid shift of an edge, with a display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EdgeAnnotation {
    pub from_cluster: ClusterId,
    pub to_cluster: ClusterId,
    pub transfers: usize,
    pub shift_km: f64,
    pub label: String,
}

pub fn edge_annotations(edge: &LineageEdge) -> EdgeAnnotation {
    EdgeAnnotation {
        from_cluster: edge.from_cluster,
        to_cluster: edge.to_cluster,
        transfers: edge.overlap,
        shift_km: edge.centroid_shift_km,
        label: format!("{} enterprises, {:.2} km", edge.overlap, edge.centroid_shift_km),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Lineage {
    pub edges: Vec<LineageEdge>,
    pub paths: Vec<EvolutionPath>,
    pub annotations: Vec<EdgeAnnotation>,
    pub overlaps: Vec<OverlapMatrix>,
}

/// Matches every consecutive period pair and assembles the paths.
pub fn track_lineage(periods: &[PeriodClusters], opts: &MatchOptions) -> Lineage {
    let pairs: Vec<(Vec<LineageEdge>, OverlapMatrix)> = periods
        .par_windows(2)
        .map(|w| {
            let (edges, mut m) = match_period_pair(&w[0].clusters, &w[1].clusters, opts);
            m.from_period = w[0].period.index;
            m.to_period = w[1].period.index;
            (edges, m)
        })
        .collect();
    let mut edges = Vec::new();
    let mut overlaps = Vec::new();
    for (e, m) in pairs {
        edges.extend(e);
        overlaps.push(m);
    }
    let clusters: Vec<Vec<RegionalCluster>> = periods.iter().map(|p| p.clusters.clone()).collect();
    let paths = build_paths(&clusters, &edges);
    let annotations = edges.iter().map(edge_annotations).collect();
    Lineage {
        edges,
        paths,
        annotations,
        overlaps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocluster::GeoPoint;
    use proptest::prelude::*;

    fn cluster(period: usize, index: usize, ids: impl IntoIterator<Item = usize>, centroid: GeoPoint) -> RegionalCluster {
        let member_ids: Vec<String> = ids.into_iter().map(|i| format!("e{i}")).collect();
        RegionalCluster {
            id: ClusterId { period, index },
            size: member_ids.len(),
            member_ids,
            centroid,
            members: Vec::new(),
        }
    }

    fn at(east: f64) -> GeoPoint {
        GeoPoint::new(113.9, 22.5).offset_km(east, 0.0)
    }

    #[test]
    fn overlap_examples() {
        let a = cluster(0, 0, 0..5, at(0.0));
        assert_eq!(overlap(&a, &a.clone()), 5);
        assert_eq!(overlap(&a, &cluster(1, 0, 10..15, at(0.0))), 0);
        let x = cluster(0, 0, 1..=100, at(0.0));
        let y = cluster(1, 0, 51..=150, at(0.0));
        let oracle = (1..=100).filter(|i| (51..=150).contains(i)).count();
        assert_eq!(overlap(&x, &y), oracle);
        assert_eq!(oracle, 50);
    }

    #[test]
    fn identical_cluster_gives_zero_shift() {
        let a = cluster(0, 0, 0..8, at(1.0));
        let b = cluster(1, 0, 0..8, at(1.0));
        let (edges, _) = match_period_pair(&[a], &[b], &MatchOptions::default());
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].centroid_shift_km, 0.0);
        let ann = edge_annotations(&edges[0]);
        assert_eq!((ann.transfers, ann.shift_km), (8, 0.0));
    }

    #[test]
    fn even_split_goes_to_nearer_successor() {
        let a = cluster(0, 0, 0..10, at(0.0));
        // c1 listed first but farther away
        let far = cluster(1, 0, 0..5, at(3.0));
        let near = cluster(1, 1, 5..10, at(1.0));
        let (edges, _) = match_period_pair(&[a], &[far, near], &MatchOptions::default());
        assert_eq!(edges[0].to_cluster, ClusterId { period: 1, index: 1 });
        assert_eq!(edges[0].overlap, 5);
    }

    #[test]
    fn full_tie_goes_to_smaller_id() {
        let a = cluster(0, 0, 0..10, at(0.0));
        let left = cluster(1, 0, 0..5, at(-1.0));
        let right = cluster(1, 1, 5..10, at(1.0));
        let (edges, _) = match_period_pair(&[a], &[right, left], &MatchOptions::default());
        assert_eq!(edges[0].to_cluster, ClusterId { period: 1, index: 0 });
    }

    #[test]
    fn merge_keeps_both_incoming_paths() {
        let p0 = vec![cluster(0, 0, 0..10, at(0.0)), cluster(0, 1, 10..20, at(5.0))];
        let p1 = vec![cluster(1, 0, 0..20, at(2.5))];
        let p2 = vec![cluster(2, 0, 0..20, at(2.5))];
        let (e01, _) = match_period_pair(&p0, &p1, &MatchOptions::default());
        let (e12, _) = match_period_pair(&p1, &p2, &MatchOptions::default());
        assert_eq!(e01.len(), 2);
        assert!(e01.iter().all(|e| e.to_cluster == ClusterId { period: 1, index: 0 }));
        let edges: Vec<_> = e01.into_iter().chain(e12).collect();
        let paths = build_paths(&[p0, p1, p2], &edges);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].clusters[1..], paths[1].clusters[1..]);
        assert_eq!(paths[0].edges.len(), 2);
        assert_ne!(paths[0].clusters[0], paths[1].clusters[0]);
    }

    #[test]
    fn persistent_cluster_is_one_path() {
        let ps: Vec<Vec<RegionalCluster>> = (0..3).map(|p| vec![cluster(p, 0, 0..6, at(0.1 * p as f64))]).collect();
        let edges: Vec<_> = ps.windows(2).flat_map(|w| match_period_pair(&w[0], &w[1], &MatchOptions::default()).0).collect();
        let paths = build_paths(&ps, &edges);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].edges.len(), 2);
        assert_eq!(paths[0].periods().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn disjoint_periods_give_singletons() {
        let ps: Vec<Vec<RegionalCluster>> = (0..3).map(|p| vec![cluster(p, 0, p * 10..p * 10 + 5, at(0.0))]).collect();
        let edges: Vec<_> = ps.windows(2).flat_map(|w| match_period_pair(&w[0], &w[1], &MatchOptions::default()).0).collect();
        assert!(edges.is_empty());
        let paths = build_paths(&ps, &edges);
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().all(|p| p.clusters.len() == 1 && p.edges.is_empty()));
    }

    #[test]
    fn fraction_threshold_drops_hairline_edges() {
        let a = cluster(0, 0, 0..100, at(0.0));
        let b = cluster(1, 0, 98..200, at(0.0));
        assert_eq!(match_period_pair(&[a.clone()], &[b.clone()], &MatchOptions::default()).0.len(), 1);
        let opts = MatchOptions { min_fraction: Some(0.05), ..Default::default() };
        assert!(match_period_pair(&[a], &[b], &opts).0.is_empty());
    }

    #[test]
    fn annotations_recompute() {
        let a = cluster(0, 0, 0..30, at(0.0));
        let b = cluster(1, 0, 10..40, at(1.87));
        let (edges, _) = match_period_pair(&[a.clone()], &[b.clone()], &MatchOptions::default());
        let ann = edge_annotations(&edges[0]);
        assert_eq!(ann.transfers, overlap(&a, &b));
        assert_eq!(ann.shift_km, haversine_km(a.centroid, b.centroid));
        assert_eq!(ann.label, format!("20 enterprises, {:.2} km", ann.shift_km));
    }

    proptest! {
        #[test]
        fn degree_and_conservation(
            assign0 in prop::collection::vec(prop::option::of(0usize..4), 1..80),
            assign1 in prop::collection::vec(prop::option::of(0usize..4), 1..80),
        ) {
            let build = |period: usize, assign: &[Option<usize>]| -> Vec<RegionalCluster> {
                (0..4)
                    .map(|c| {
                        let ids: Vec<usize> = assign.iter().enumerate().filter(|(_, a)| **a == Some(c)).map(|(i, _)| i).collect();
                        cluster(period, c, ids, at(c as f64))
                    })
                    .filter(|c| !c.member_ids.is_empty())
                    .collect()
            };
            let p0 = build(0, &assign0);
            let p1 = build(1, &assign1);
            let (edges, m) = match_period_pair(&p0, &p1, &MatchOptions::default());
            let mut seen = std::collections::HashSet::new();
            for e in &edges {
                prop_assert!(seen.insert(e.from_cluster));
                prop_assert!(e.overlap >= 1);
                let a = p0.iter().find(|c| c.id == e.from_cluster).unwrap();
                let b = p1.iter().find(|c| c.id == e.to_cluster).unwrap();
                prop_assert_eq!(e.overlap, overlap(a, b));
                let row = m.rows.iter().position(|&r| r == a.id).unwrap();
                prop_assert_eq!(e.overlap, *m.counts[row].iter().max().unwrap());
            }
            for (a, row) in p0.iter().zip(&m.counts) {
                prop_assert!(row.iter().sum::<usize>() <= a.member_ids.len());
            }
        }
    }
}
