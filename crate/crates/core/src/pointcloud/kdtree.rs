//! Exact k-nearest-neighbour and fixed-radius search over a [`PointSet`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Point3, PointSet};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// A static kd-tree. Queries are exact: results agree with a brute-force
/// distance scan, ties ordered by point index.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl NeighborIndex {
    pub fn build(ps: &PointSet) -> Result<Self> {
        if ps.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let points: Vec<[f64; 3]> = ps.iter().map(Point3::to_array).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        let n = order.len();
        build_node(&points, &mut order, 0, n, &mut nodes);
        Ok(Self {
            points,
            order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query` as `(index, distance)`, sorted by
    /// distance then index. Returns fewer than `k` entries only when the set
    /// is smaller than `k`.
    pub fn nearest(&self, query: Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let q = query.to_array();
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_recurse(0, &q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|c| (c.index, c.dist2.sqrt()))
            .collect()
    }

    /// Every point whose distance to `query` is strictly less than `radius`,
    /// as `(index, distance)` sorted by index.
    pub fn within(&self, query: Point3, radius: f64) -> Vec<(usize, f64)> {
        self.within_by(query, radius, false)
    }

    /// As [`within`](Self::within) but with a closed ball (distance ≤ radius).
    pub fn within_closed(&self, query: Point3, radius: f64) -> Vec<(usize, f64)> {
        self.within_by(query, radius, true)
    }

    fn within_by(&self, query: Point3, radius: f64, closed: bool) -> Vec<(usize, f64)> {
        let q = query.to_array();
        let mut out = Vec::new();
        if radius < 0.0 || radius.is_nan() {
            return out;
        }
        self.radius_recurse(0, &q, radius, closed, &mut out);
        out.sort_unstable_by_key(|&(i, _)| i);
        out
    }

    fn knn_recurse(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Candidate {
                        dist2: dist2(q, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(worst) = heap.peek() {
                        if cand < *worst {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_recurse(near, q, k, heap);
                let visit_far = heap.len() < k
                    || heap
                        .peek()
                        .map(|w| diff * diff <= w.dist2)
                        .unwrap_or(true);
                if visit_far {
                    self.knn_recurse(far, q, k, heap);
                }
            }
        }
    }

    fn radius_recurse(
        &self,
        node: usize,
        q: &[f64; 3],
        radius: f64,
        closed: bool,
        out: &mut Vec<(usize, f64)>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, &self.points[i]).sqrt();
                    if d < radius || (closed && d == radius) {
                        out.push((i, d));
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                if diff <= radius {
                    self.radius_recurse(left, q, radius, closed, out);
                }
                if -diff <= radius {
                    self.radius_recurse(right, q, radius, closed, out);
                }
            }
        }
    }
}

fn build_node(
    points: &[[f64; 3]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &order[start..end] {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] == 0.0 {
        // all coincident
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis])
    });
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start, end });
    // Left holds coordinates <= value, right holds coordinates >= value.
    let left = build_node(points, order, start, mid, nodes);
    let right = build_node(points, order, mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_knn(pts: &[Point3], q: Point3, k: usize) -> Vec<(usize, f64)> {
        let qa = q.to_array();
        let mut all: Vec<(usize, f64)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist2(&qa, &p.to_array())))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all.into_iter().map(|(i, d)| (i, d.sqrt())).collect()
    }

    fn brute_within(pts: &[Point3], q: Point3, r: f64) -> Vec<(usize, f64)> {
        let qa = q.to_array();
        pts.iter()
            .enumerate()
            .map(|(i, p)| (i, dist2(&qa, &p.to_array()).sqrt()))
            .filter(|&(_, d)| d < r)
            .collect()
    }

    #[test]
    fn single_point() {
        let ps = PointSet::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap();
        let idx = NeighborIndex::build(&ps).unwrap();
        assert_eq!(idx.nearest(Point3::new(1.0, 0.0, 0.0), 1), vec![(0, 1.0)]);
    }

    #[test]
    fn cube_corners_radius() {
        let mut pts = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    pts.push(Point3::new(i as f64, j as f64, k as f64));
                }
            }
        }
        let ps = PointSet::new(pts.clone()).unwrap();
        let idx = NeighborIndex::build(&ps).unwrap();
        let got = idx.within(Point3::new(0.0, 0.0, 0.0), 1.5);
        assert_eq!(got, brute_within(&pts, Point3::new(0.0, 0.0, 0.0), 1.5));
        let ids: Vec<usize> = got.iter().map(|p| p.0).collect();
        // face diagonals (sqrt 2) fall inside 1.5, only the far corner is excluded
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5, 6]);
        let adjacent: Vec<usize> = idx.within(Point3::new(0.0, 0.0, 0.0), 1.2).iter().map(|p| p.0).collect();
        assert_eq!(adjacent, vec![0, 1, 2, 4]);
    }

    #[test]
    fn matches_brute_force_on_random_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Point3> = (0..1000)
            .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let ps = PointSet::new(pts.clone()).unwrap();
        let idx = NeighborIndex::build(&ps).unwrap();
        for _ in 0..50 {
            let q = Point3::new(rng.gen_range(-0.2..1.2), rng.gen(), rng.gen());
            let k = rng.gen_range(1..40);
            assert_eq!(idx.nearest(q, k), brute_knn(&pts, q, k));
            let r = rng.gen_range(0.0..0.3);
            assert_eq!(idx.within(q, r), brute_within(&pts, q, r));
        }
    }

    #[test]
    fn lattice_ties_are_exact() {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    pts.push(Point3::new(i as f64, j as f64, k as f64));
                }
            }
        }
        let ps = PointSet::new(pts.clone()).unwrap();
        let idx = NeighborIndex::build(&ps).unwrap();
        for (q, k) in [(pts[43], 7), (pts[0], 4), (Point3::new(2.5, 2.5, 2.5), 9)] {
            assert_eq!(idx.nearest(q, k), brute_knn(&pts, q, k));
        }
        assert_eq!(idx.within(pts[43], 1.0).len(), 1);
        assert_eq!(idx.within_closed(pts[43], 1.0).len(), 7);
    }

    #[test]
    fn k_larger_than_set() {
        let ps = PointSet::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)])
            .unwrap();
        let idx = NeighborIndex::build(&ps).unwrap();
        assert_eq!(idx.nearest(Point3::new(0.0, 0.0, 0.0), 5).len(), 2);
    }
}
