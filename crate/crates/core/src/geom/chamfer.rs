use super::{GeomError, KdTree, PointCloud, Vec3};

/// For every point of `from`, its nearest point in `to` as (index, squared distance).
pub fn directed_nearest(from: &[Vec3], to: &[Vec3]) -> Vec<(usize, f64)> {
    let tree = KdTree::new(to);
    from.iter()
        .map(|p| tree.nearest(p).expect("non-empty target"))
        .collect()
}

fn mean_sq(pairs: &[(usize, f64)]) -> f64 {
    pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64
}

/// Bi-directional mean squared nearest-neighbour distance (no square root).
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64, GeomError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeomError::EmptyCloud);
    }
    let ab = mean_sq(&directed_nearest(&a.positions, &b.positions));
    let ba = mean_sq(&directed_nearest(&b.positions, &a.positions));
    Ok(ab + ba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_positions(pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    #[test]
    fn examples() {
        let a = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(
            chamfer(&cloud(&[[0.0, 0.0, 0.0]]), &cloud(&[[1.0, 0.0, 0.0]])).unwrap(),
            2.0
        );
        // a->b: 1 and 1, mean 1; b->a: 1
        assert_eq!(chamfer(&a, &cloud(&[[1.0, 0.0, 0.0]])).unwrap(), 2.0);
        assert!(chamfer(&a, &PointCloud::default()).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(
            a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..60),
            b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..60),
        ) {
            let a = cloud(&a.into_iter().map(|(x, y, z)| [x, y, z]).collect::<Vec<_>>());
            let b = cloud(&b.into_iter().map(|(x, y, z)| [x, y, z]).collect::<Vec<_>>());
            let ab = chamfer(&a, &b).unwrap();
            prop_assert_eq!(ab, chamfer(&b, &a).unwrap());
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        }
    }
}
