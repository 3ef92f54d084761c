use super::kdtree::dist2;
use super::{GeomError, Vec3};

/// Greedy farthest point sampling starting from index 0.
///
/// Each step picks the point maximizing the squared distance to the already
/// selected set; ties go to the lowest index.
pub fn farthest_point_sample(points: &[Vec3], k: usize) -> Result<Vec<usize>, GeomError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(GeomError::SampleCountOutOfRange { k, n });
    }
    let mut selected = Vec::with_capacity(k);
    let mut min_dist = vec![f64::INFINITY; n];
    let mut current = 0;
    selected.push(current);
    min_dist[current] = f64::NEG_INFINITY;
    while selected.len() < k {
        let anchor = points[current];
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (i, p) in points.iter().enumerate() {
            if min_dist[i] == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(&anchor, p);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best.1 {
                best = (i, min_dist[i]);
            }
        }
        current = best.0;
        min_dist[current] = f64::NEG_INFINITY;
        selected.push(current);
    }
    Ok(selected)
}
