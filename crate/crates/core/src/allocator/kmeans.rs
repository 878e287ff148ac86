/// Result of Lloyd's algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct Clusters {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(centroid, x);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Deterministic k-means: farthest-point seeding from the first point, then
/// Lloyd iterations until labels stop changing. `k` is capped at the number
/// of distinct seeds found.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize) -> Clusters {
    if points.is_empty() || k == 0 {
        return Clusters { centroids: Vec::new(), labels: vec![0; points.len()] };
    }
    let mut centroids = vec![points[0].clone()];
    while centroids.len() < k {
        let (far, d) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, centroids.iter().map(|c| sq_dist(c, p)).fold(f64::INFINITY, f64::min)))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if d <= 0.0 {
            break;
        }
        centroids.push(points[far].clone());
    }

    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..centroids.len() {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Clusters { centroids, labels }
}
