use rayon::prelude::*;

use super::{GeomError, Vec3};

/// The `k` nearest points to one query, by ascending distance then ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

const LEAF: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a point set.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn coord(p: Vec3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                let c = coord(self.points[i], a);
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = (start + end) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coord(pts[a], axis).total_cmp(&coord(pts[b], axis)).then(a.cmp(&b))
        });
        let value = coord(pts[self.order[mid]], axis);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Exact k-nearest query.
    pub fn query(&self, q: Vec3, k: usize) -> Neighbors {
        // (squared distance, index), kept sorted ascending
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, q, k, &mut best);
        }
        Neighbors {
            indices: best.iter().map(|b| b.1).collect(),
            distances: best.iter().map(|b| b.0.sqrt()).collect(),
        }
    }

    fn search(&self, node: usize, q: Vec3, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = self.points[i].distance_squared(q);
                    let cand = (d, i);
                    if best.len() == k {
                        let worst = best[k - 1];
                        if (cand.0, cand.1) >= (worst.0, worst.1) {
                            continue;
                        }
                        best.pop();
                    }
                    let pos = best.partition_point(|b| (b.0, b.1) < (cand.0, cand.1));
                    best.insert(pos, cand);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = coord(q, axis) - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                // points equal to the split value may sit on either side
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

/// k nearest `points` for every query; queries are processed in parallel, results keep query order.
pub fn knn(points: &[Vec3], queries: &[Vec3], k: usize) -> Result<Vec<Neighbors>, GeomError> {
    if k > points.len() {
        return Err(GeomError::KTooLarge { k, n: points.len() });
    }
    let tree = KdTree::new(points);
    Ok(queries.par_iter().map(|&q| tree.query(q, k)).collect())
}

/// Exhaustive scan, used as a reference for the tree.
pub fn knn_brute_force(points: &[Vec3], queries: &[Vec3], k: usize) -> Result<Vec<Neighbors>, GeomError> {
    if k > points.len() {
        return Err(GeomError::KTooLarge { k, n: points.len() });
    }
    Ok(queries
        .iter()
        .map(|&q| {
            let mut all: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .map(|(i, p)| (p.distance_squared(q), i))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.truncate(k);
            Neighbors {
                indices: all.iter().map(|a| a.1).collect(),
                distances: all.iter().map(|a| a.0.sqrt()).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn integer_line() {
        let pts: Vec<Vec3> = (0..4).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let r = knn(&pts, &[Vec3::new(0.1, 0.0, 0.0)], 3).unwrap();
        assert_eq!(r[0].indices, vec![0, 1, 2]);
        let r = knn(&pts, &[pts[2]], 2).unwrap();
        assert_eq!(r[0].distances[0], 0.0);
        assert_eq!(r[0].indices[0], 2);
    }

    #[test]
    fn ties_break_by_index() {
        let pts: Vec<Vec3> = [-1.0, 1.0, -2.0, 2.0].iter().map(|&x| Vec3::new(x, 0.0, 0.0)).collect();
        let r = knn(&pts, &[Vec3::ZERO], 4).unwrap();
        assert_eq!(r[0].indices, vec![0, 1, 2, 3]);
        // many duplicates force equal distances through several tree levels
        let dup = vec![Vec3::new(1.0, 1.0, 1.0); 50];
        let r = knn(&dup, &[Vec3::ZERO], 5).unwrap();
        assert_eq!(r[0].indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn k_too_large() {
        assert!(matches!(knn(&[Vec3::ZERO], &[Vec3::ZERO], 2), Err(GeomError::KTooLarge { .. })));
    }

    #[test]
    fn matches_exhaustive_scan_on_200_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        assert_eq!(knn(&pts, &pts, 5).unwrap(), knn_brute_force(&pts, &pts, 5).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn agrees_with_exhaustive_oracle(seed in any::<u64>(), n in 1usize..1000, k in 1usize..12, grid in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // the grid variant produces many exact distance ties
            let pts: Vec<Vec3> = (0..n)
                .map(|_| if grid {
                    Vec3::new(rng.random_range(0..5) as f64, rng.random_range(0..5) as f64, rng.random_range(0..3) as f64)
                } else {
                    Vec3::new(rng.random(), rng.random(), rng.random())
                })
                .collect();
            let queries: Vec<Vec3> = (0..20).map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 4.0).collect();
            let k = k.min(n);
            prop_assert_eq!(knn(&pts, &queries, k).unwrap(), knn_brute_force(&pts, &queries, k).unwrap());
        }
    }
}
