//! Exact k-nearest-neighbor and radius queries over a fixed point set.
//!
//! Results are identical to an exhaustive scan, with ties on distance broken
//! by the lower point index.

use crate::cloud::Point3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Exact spatial index (kd-tree) over a block's points.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    /// Point indices, partitioned by the tree structure.
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

/// Candidate ordering: distance first, then index (lower wins ties).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbor {
    d2: f64,
    idx: u32,
}

impl Neighbor {
    fn key(&self) -> (f64, u32) {
        (self.d2, self.idx)
    }

    fn worse_than(&self, other: &Neighbor) -> bool {
        self.key() > other.key()
    }
}

impl SpatialIndex {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let root = Self::build_node(points, &mut order, 0, points.len(), &mut nodes);
        Ok(Self { points: points.to_vec(), order, nodes, root })
    }

    fn build_node(
        points: &[Point3],
        order: &mut [u32],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        if end - start <= LEAF_SIZE {
            nodes.push(Node::Leaf { start, end });
            return nodes.len() - 1;
        }
        // Split on the widest dimension at the median.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &order[start..end] {
            let p = &points[i as usize];
            for d in 0..3 {
                lo[d] = lo[d].min(p.coord(d));
                hi[d] = hi[d].max(p.coord(d));
            }
        }
        let dim = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        if hi[dim] - lo[dim] == 0.0 {
            // All points coincide; no split is possible.
            nodes.push(Node::Leaf { start, end });
            return nodes.len() - 1;
        }
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize].coord(dim).total_cmp(&points[b as usize].coord(dim))
        });
        let value = points[order[mid] as usize].coord(dim);
        let left = Self::build_node(points, order, start, mid, nodes);
        let right = Self::build_node(points, order, mid, end, nodes);
        nodes.push(Node::Split { dim, value, left, right });
        nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// k nearest neighbors of an indexed point, excluding the point itself.
    /// Returns `min(k, n - 1)` entries sorted ascending by (distance, index).
    pub fn knn_of_member(&self, member: usize, k: usize) -> Vec<(usize, f64)> {
        self.search(&self.points[member], k, f64::INFINITY, Some(member as u32))
    }

    /// k nearest neighbors of a free query point (no exclusion).
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<(usize, f64)> {
        self.search(query, k, f64::INFINITY, None)
    }

    /// Hybrid search: at most `k` neighbors with distance <= `radius`.
    pub fn knn_within(&self, query: &Point3, k: usize, radius: f64) -> Vec<(usize, f64)> {
        self.search(query, k, radius * radius, None)
    }

    /// Single global nearest neighbor.
    pub fn nearest(&self, query: &Point3) -> (usize, f64) {
        self.search(query, 1, f64::INFINITY, None)[0]
    }

    fn search(
        &self,
        query: &Point3,
        k: usize,
        radius2: f64,
        exclude: Option<u32>,
    ) -> Vec<(usize, f64)> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        self.visit(self.root, query, k, radius2, exclude, &mut best);
        best.sort_by(|a, b| a.key().partial_cmp(&b.key()).unwrap());
        best.into_iter().map(|nb| (nb.idx as usize, nb.d2.sqrt())).collect()
    }

    fn worst_bound(best: &[Neighbor], k: usize, radius2: f64) -> f64 {
        if best.len() < k {
            radius2
        } else {
            // Heap max is the last-worst; `best` is maintained as a max-heap
            // by `push_candidate`.
            best[0].d2.min(radius2)
        }
    }

    fn push_candidate(best: &mut Vec<Neighbor>, k: usize, cand: Neighbor) {
        if best.len() < k {
            best.push(cand);
            // Sift up (max-heap on (d2, idx)).
            let mut i = best.len() - 1;
            while i > 0 {
                let parent = (i - 1) / 2;
                if best[parent].worse_than(&best[i]) {
                    break;
                }
                best.swap(i, parent);
                i = parent;
            }
        } else if best[0].worse_than(&cand) {
            best[0] = cand;
            // Sift down.
            let mut i = 0;
            loop {
                let (l, r) = (2 * i + 1, 2 * i + 2);
                let mut largest = i;
                if l < best.len() && best[l].worse_than(&best[largest]) {
                    largest = l;
                }
                if r < best.len() && best[r].worse_than(&best[largest]) {
                    largest = r;
                }
                if largest == i {
                    break;
                }
                best.swap(i, largest);
                i = largest;
            }
        }
    }

    fn visit(
        &self,
        node: usize,
        query: &Point3,
        k: usize,
        radius2: f64,
        exclude: Option<u32>,
        best: &mut Vec<Neighbor>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d2 = query.dist2(&self.points[i as usize]);
                    if d2 > radius2 {
                        continue;
                    }
                    let cand = Neighbor { d2, idx: i };
                    if best.len() < k || best[0].worse_than(&cand) {
                        Self::push_candidate(best, k, cand);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let q = query.coord(dim);
                let (near, far) = if q < value { (left, right) } else { (right, left) };
                self.visit(near, query, k, radius2, exclude, best);
                let plane = q - value;
                // Strict comparison: equal-distance points on the far side may
                // still win a tie on index, so they must be visited.
                if plane * plane <= Self::worst_bound(best, k, radius2) {
                    self.visit(far, query, k, radius2, exclude, best);
                }
            }
        }
    }
}

/// Exhaustive reference search used by oracle tests and tiny inputs.
pub fn brute_force_knn(
    points: &[Point3],
    query: &Point3,
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| (query.dist2(p), i))
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.truncate(k);
    all.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
}
