//! Radius-graph connected components (single linkage) over 3D points.

use std::collections::HashMap;

use nalgebra::Vector3;

/// Disjoint sets with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

fn cell_of(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

/// Connected components of the graph linking points at distance `<= radius`.
///
/// Components are ordered by their smallest member index and members are
/// ascending, so the output depends only on the input order.
pub fn radius_components(points: &[Vector3<f64>], radius: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut uf = UnionFind::new(n);
    let r2 = radius * radius;
    let (lo, hi) = points.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let extent = (hi - lo).max();
    if extent <= radius {
        // Every pair is within the bounding-box diagonal test below; avoid a
        // degenerate hash when the radius dwarfs the point set.
        for i in 0..n {
            for j in i + 1..n {
                if (points[i] - points[j]).norm_squared() <= r2 {
                    uf.union(i, j);
                }
            }
        }
    } else {
        let cell = radius.max(extent * 1e-9);
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(cell_of(p, cell)).or_default().push(i);
        }
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p, cell);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                            continue;
                        };
                        for &j in bucket {
                            if j > i && (points[j] - p).norm_squared() <= r2 {
                                uf.union(i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut index_of_root: HashMap<usize, usize> = HashMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        let slot = *index_of_root.entry(root).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[slot].push(i);
    }
    out
}

pub fn centroid<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Vector3<f64> {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for p in points {
        sum += p;
        n += 1;
    }
    if n == 0 {
        sum
    } else {
        sum / n as f64
    }
}
