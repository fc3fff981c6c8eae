//! Spatial indexes over geographic points: a fixed-cell grid for eps range
//! queries and a 3-D kd-tree over unit vectors for k-nearest neighbours.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::geo::{chord2, chord2_for_km, haversine_km, GeoPoint, EARTH_RADIUS_KM};

/// Relative band around the eps chord threshold in which the exact
/// haversine distance decides membership.
const BOUNDARY_BAND: f64 = 1e-9;

/// Grid with cells at least `cell_km` wide everywhere in the point set, so
/// every point within `cell_km` of a query lies in the surrounding 3x3 block.
pub struct GeoGrid<'a> {
    points: &'a [GeoPoint],
    units: Vec<[f64; 3]>,
    cell_km: f64,
    /// Points sorted by cell; `cells[c]` is a range into `order`.
    order: Vec<u32>,
    cells: Vec<(usize, usize)>,
    cell_of: Vec<u32>,
    /// Neighbouring (3x3) non-empty cells of each cell.
    adjacency: Vec<Vec<u32>>,
}

impl<'a> GeoGrid<'a> {
    pub fn new(points: &'a [GeoPoint], cell_km: f64) -> Self {
        assert!(cell_km > 0.0);
        let units: Vec<[f64; 3]> = points.iter().map(GeoPoint::unit_vector).collect();
        let max_abs_lat = points.iter().map(|p| p.lat.abs()).fold(0.0, f64::max);
        let (min_lon, max_lon) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.lon), b.max(p.lon)));
        let dlat = cell_km / EARTH_RADIUS_KM;
        // Lower bound on distance for a longitude gap L at |lat| <= phi:
        // sin(d / 2R) >= cos(phi) sin(L / 2).
        let ratio = (cell_km / (2.0 * EARTH_RADIUS_KM)).sin() / max_abs_lat.to_radians().cos();
        let dlon = if ratio >= 1.0 || max_lon - min_lon > 180.0 {
            f64::INFINITY
        } else {
            2.0 * ratio.asin()
        };
        let key = |p: &GeoPoint| -> (i64, i64) {
            let i = (p.lat.to_radians() / dlat).floor() as i64;
            let j = if dlon.is_finite() {
                (p.lon.to_radians() / dlon).floor() as i64
            } else {
                0
            };
            (i, j)
        };
        let keys: Vec<(i64, i64)> = points.iter().map(key).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        order.sort_by_key(|&i| (keys[i as usize], i));
        let mut cells = Vec::new();
        let mut cell_keys = Vec::new();
        let mut cell_of = vec![0u32; points.len()];
        let mut start = 0;
        while start < order.len() {
            let k = keys[order[start] as usize];
            let mut end = start;
            while end < order.len() && keys[order[end] as usize] == k {
                cell_of[order[end] as usize] = cells.len() as u32;
                end += 1;
            }
            cells.push((start, end));
            cell_keys.push(k);
            start = end;
        }
        let lookup: HashMap<(i64, i64), u32> = cell_keys.iter().enumerate().map(|(c, &k)| (k, c as u32)).collect();
        let adjacency = cell_keys
            .iter()
            .map(|&(i, j)| {
                let mut adj = Vec::with_capacity(9);
                for di in -1..=1 {
                    for dj in -1..=1 {
                        if !dlon.is_finite() && dj != 0 {
                            continue;
                        }
                        if let Some(&c) = lookup.get(&(i + di, j + dj)) {
                            adj.push(c);
                        }
                    }
                }
                adj.sort_unstable();
                adj
            })
            .collect();
        Self {
            points,
            units,
            cell_km,
            order,
            cells,
            cell_of,
            adjacency,
        }
    }

    pub fn cell_km(&self) -> f64 {
        self.cell_km
    }

    /// Calls `f` for every point within `eps_km` of point `i` (itself
    /// included). `eps_km` must not exceed the cell size.
    pub fn for_each_neighbor(&self, i: usize, eps_km: f64, mut f: impl FnMut(usize)) {
        debug_assert!(eps_km <= self.cell_km * (1.0 + 1e-12));
        let threshold = chord2_for_km(eps_km);
        let (lo, hi) = (threshold * (1.0 - BOUNDARY_BAND), threshold * (1.0 + BOUNDARY_BAND));
        let ui = &self.units[i];
        for &c in &self.adjacency[self.cell_of[i] as usize] {
            let (s, e) = self.cells[c as usize];
            for &j in &self.order[s..e] {
                let j = j as usize;
                let c2 = chord2(ui, &self.units[j]);
                let inside = if c2 < lo {
                    true
                } else if c2 > hi {
                    false
                } else {
                    haversine_km(self.points[i], self.points[j]) <= eps_km
                };
                if inside {
                    f(j);
                }
            }
        }
    }

    pub fn neighbors(&self, i: usize, eps_km: f64, out: &mut Vec<usize>) {
        out.clear();
        self.for_each_neighbor(i, eps_km, |j| out.push(j));
    }

    pub fn count_neighbors(&self, i: usize, eps_km: f64) -> usize {
        let mut n = 0;
        self.for_each_neighbor(i, eps_km, |_| n += 1);
        n
    }
}

#[derive(Debug)]
enum KdNode {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over unit vectors.
pub struct KdTree {
    units: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<KdNode>,
}

const LEAF_SIZE: usize = 12;

#[derive(PartialEq)]
struct HeapItem(f64, u32);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    pub fn new(points: &[GeoPoint]) -> Self {
        let units: Vec<[f64; 3]> = points.iter().map(GeoPoint::unit_vector).collect();
        let mut tree = Self {
            order: (0..units.len() as u32).collect(),
            units,
            nodes: Vec::new(),
        };
        if !tree.units.is_empty() {
            tree.build(0, tree.units.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(KdNode::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let u = &self.units[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(u[a]);
                hi[a] = hi[a].max(u[a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        if hi[axis] - lo[axis] == 0.0 {
            return id;
        }
        let mid = (start + end) / 2;
        let units = &self.units;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            units[a as usize][axis].total_cmp(&units[b as usize][axis])
        });
        let value = self.units[self.order[mid] as usize][axis];
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = KdNode::Split { axis, value, left, right };
        id
    }

    /// The `k` nearest points to point `i` (excluding `i`), as squared chord
    /// lengths with indices, nearest first.
    pub fn knn_excluding(&self, i: usize, k: usize) -> Vec<(f64, u32)> {
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, &self.units[i], i as u32, k, &mut heap);
        }
        let mut out: Vec<(f64, u32)> = heap.into_iter().map(|h| (h.0, h.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn search(&self, node: usize, q: &[f64; 3], skip: u32, k: usize, heap: &mut BinaryHeap<HeapItem>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j == skip {
                        continue;
                    }
                    let d = chord2(q, &self.units[j as usize]);
                    if heap.len() < k {
                        heap.push(HeapItem(d, j));
                    } else if d < heap.peek().unwrap().0 {
                        heap.pop();
                        heap.push(HeapItem(d, j));
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
                    self.search(far, q, skip, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<GeoPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = GeoPoint::new(114.0, 22.5);
        (0..n)
            .map(|_| o.offset_km(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect()
    }

    #[test]
    fn grid_range_query_matches_brute_force() {
        let pts = cloud(400, 4);
        for eps in [0.2, 0.7, 2.0] {
            let grid = GeoGrid::new(&pts, eps);
            let mut buf = Vec::new();
            for i in 0..pts.len() {
                grid.neighbors(i, eps, &mut buf);
                buf.sort_unstable();
                let expected: Vec<usize> = (0..pts.len()).filter(|&j| haversine_km(pts[i], pts[j]) <= eps).collect();
                assert_eq!(buf, expected);
            }
        }
    }

    #[test]
    fn grid_works_at_high_latitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let o = GeoPoint::new(25.0, 69.6);
        let pts: Vec<_> = (0..300)
            .map(|_| o.offset_km(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)))
            .collect();
        let grid = GeoGrid::new(&pts, 1.0);
        for i in 0..pts.len() {
            let expected = (0..pts.len()).filter(|&j| haversine_km(pts[i], pts[j]) <= 1.0).count();
            assert_eq!(grid.count_neighbors(i, 1.0), expected);
        }
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut pts = cloud(500, 6);
        pts.push(pts[3]);
        let tree = KdTree::new(&pts);
        for i in (0..pts.len()).step_by(7) {
            let got: Vec<f64> = tree
                .knn_excluding(i, 10)
                .iter()
                .map(|&(_, j)| haversine_km(pts[i], pts[j as usize]))
                .collect();
            let mut all: Vec<f64> = (0..pts.len()).filter(|&j| j != i).map(|j| haversine_km(pts[i], pts[j])).collect();
            all.sort_by(f64::total_cmp);
            for (g, e) in got.iter().zip(&all[..10]) {
                assert!((g - e).abs() < 1e-9);
            }
        }
    }
}
