use super::{GeomError, PointCloud, Vec3};

#[inline]
pub(crate) fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn better(d: f64, i: usize, best: (usize, f64)) -> bool {
    d < best.1 || (d == best.1 && i < best.0)
}

/// Linear-scan nearest neighbour; lowest index wins ties.
pub fn brute_force_nearest(query: &Vec3, targets: &[Vec3]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in targets.iter().enumerate() {
        let d = dist2(query, t);
        if best.is_none_or(|b| better(d, i, b)) {
            best = Some((i, d));
        }
    }
    best
}

/// `k` nearest targets ordered by (squared distance, index).
pub fn k_nearest_brute_force(query: &Vec3, targets: &[Vec3], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| (i, dist2(query, t)))
        .collect();
    let k = k.min(all.len());
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

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

/// Static 3-d tree over a point set. Queries return exactly what a linear
/// scan returns, including lowest-index tie breaking.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist2(q, &self.points[i]);
                    if better(d, i, *best) {
                        *best = (i, d);
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
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                // points on the far side are at least diff^2 away; equality
                // still needs a visit because of index tie breaking
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Nearest target point to `query` by squared Euclidean distance.
pub fn nearest_neighbor(query: &Vec3, target: &PointCloud) -> Result<(usize, f64), GeomError> {
    if target.is_empty() {
        return Err(GeomError::EmptyCloud);
    }
    let tree = KdTree::new(&target.positions);
    Ok(tree.nearest(query).expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn self_query_and_forced_case() {
        let cloud =
            PointCloud::from_positions(vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0)]);
        assert_eq!(nearest_neighbor(&Vec3::zeros(), &cloud).unwrap(), (0, 1.0));
        assert_eq!(
            nearest_neighbor(&Vec3::new(0.0, 2.0, 0.0), &cloud).unwrap(),
            (1, 0.0)
        );
    }

    #[test]
    fn empty_target_errors() {
        assert!(matches!(
            nearest_neighbor(&Vec3::zeros(), &PointCloud::default()),
            Err(GeomError::EmptyCloud)
        ));
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let pts: Vec<Vec3> = (0..40)
            .map(|i| Vec3::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0))
            .collect();
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vec3::zeros()), Some((0, 1.0)));
        assert_eq!(tree.nearest(&Vec3::new(-0.5, 0.0, 0.0)), Some((1, 0.25)));
    }

    proptest! {
        #[test]
        fn matches_linear_scan(
            pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..300),
            qs in prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5), 1..20),
        ) {
            // quantize so that exact ties actually occur
            let q = |v: f64| (v * 8.0).round() / 8.0;
            let pts: Vec<Vec3> = pts.into_iter().map(|(x, y, z)| Vec3::new(q(x), q(y), q(z))).collect();
            let tree = KdTree::new(&pts);
            for (x, y, z) in qs {
                let query = Vec3::new(q(x), q(y), q(z));
                prop_assert_eq!(tree.nearest(&query), brute_force_nearest(&query, &pts));
            }
        }
    }
}
