use std::cmp::Ordering;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::Vec3;

const LEAF_SIZE: usize = 12;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact kd-tree over a point cloud.
///
/// Ties in distance resolve to the smallest original index, so results are
/// identical to a brute-force scan with the same rule.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    points: Vec<Vec3>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

/// (squared distance, original index), compared lexicographically.
fn closer(a: (f64, usize), b: (f64, usize)) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Less) => true,
        Some(Ordering::Equal) => a.1 < b.1,
        _ => false,
    }
}

impl NeighborIndex {
    /// Index every point of the cloud.
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_subset(cloud.points(), (0..cloud.len()).collect())
    }

    /// Index only points with positive weight; results still report original indices.
    pub fn build_active(cloud: &PointCloud) -> Result<Self> {
        Self::from_subset(cloud.points(), cloud.active_indices())
    }

    fn from_subset(all: &[Vec3], ids: Vec<usize>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut order = ids;
        let mut nodes = Vec::new();
        let len = order.len();
        build_node(all, &mut order, 0, len, &mut nodes);
        Ok(Self {
            points: order.iter().map(|&i| all[i]).collect(),
            ids: order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest indexed point: `(original index, distance)`.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search_one(0, q, &mut best);
        (best.1, best.0.sqrt())
    }

    /// The `k` nearest points, closest first.
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search_k(0, q, k, &mut best);
        best.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn search_one(&self, node: usize, q: &Vec3, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for j in start..end {
                    let cand = ((self.points[j] - q).norm_squared(), self.ids[j]);
                    if closer(cand, *best) {
                        *best = cand;
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
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_one(near, q, best);
                if diff * diff <= best.0 {
                    self.search_one(far, q, best);
                }
            }
        }
    }

    fn search_k(&self, node: usize, q: &Vec3, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for j in start..end {
                    let cand = ((self.points[j] - q).norm_squared(), self.ids[j]);
                    if best.len() < k || closer(cand, best[k - 1]) {
                        let pos = best.partition_point(|&b| closer(b, cand));
                        best.insert(pos, cand);
                        best.truncate(k);
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
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_k(near, q, k, best);
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.search_k(far, q, k, best);
                }
            }
        }
    }
}

fn build_node(all: &[Vec3], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf { start, end });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let slice = &mut order[start..end];
    let mut lo = all[slice[0]];
    let mut hi = lo;
    for &i in slice.iter() {
        lo = lo.inf(&all[i]);
        hi = hi.sup(&all[i]);
    }
    let spread = hi - lo;
    let axis = spread.imax();
    if spread[axis] <= 0.0 {
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        all[a][axis]
            .partial_cmp(&all[b][axis])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let value = all[slice[mid]][axis];
    let left = build_node(all, order, start, start + mid, nodes);
    let right = build_node(all, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}
