use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;

use super::{ClusterAssignment, FeatureVector, Stage, VisualError, NOISE};

/// Above this many points a grid index is used when the dimension allows.
pub const EXACT_SEARCH_LIMIT: usize = 50_000;
/// Highest dimension for which the grid index is worthwhile.
pub const GRID_MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborIndex {
    /// Exact scan up to [`EXACT_SEARCH_LIMIT`] points, grid above it for
    /// low dimensions.
    Auto,
    Exact,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    pub index: NeighborIndex,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps: 35.0,
            min_pts: 3,
            index: NeighborIndex::Auto,
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// DBSCAN with inclusive radius and self-counting `min_pts`. Points are
/// scanned in ascending sha256 order; a border point joins the first
/// cluster that reaches it. Output follows input order.
pub fn dbscan(points: &[FeatureVector], eps: f64, min_pts: usize) -> Result<Vec<ClusterAssignment>, VisualError> {
    dbscan_with(
        points,
        &DbscanParams {
            eps,
            min_pts,
            index: NeighborIndex::Auto,
        },
    )
}

pub fn dbscan_with(points: &[FeatureVector], params: &DbscanParams) -> Result<Vec<ClusterAssignment>, VisualError> {
    if !(params.eps > 0.0 && params.eps.is_finite()) {
        return Err(VisualError::InvalidParameter(format!("eps must be positive, got {}", params.eps)));
    }
    if params.min_pts == 0 {
        return Err(VisualError::InvalidParameter("min_pts must be at least 1".into()));
    }
    let dim = points.first().map_or(0, |p| p.values.len());
    for p in points {
        if p.values.len() != dim {
            return Err(VisualError::DimensionMismatch {
                expected: dim,
                found: p.values.len(),
                sha256: p.sha256.clone(),
            });
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(VisualError::NonFiniteValue(p.sha256.clone()));
        }
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].sha256.cmp(&points[b].sha256).then(a.cmp(&b)));
    let scanned: Vec<&[f64]> = order.iter().map(|&i| points[i].values.as_slice()).collect();

    let use_grid = match params.index {
        NeighborIndex::Exact => false,
        NeighborIndex::Grid => dim <= GRID_MAX_DIM,
        NeighborIndex::Auto => points.len() > EXACT_SEARCH_LIMIT && dim <= GRID_MAX_DIM,
    };
    let search: Box<dyn Neighbors + Sync> = if use_grid {
        Box::new(GridIndex::build(&scanned, params.eps))
    } else {
        Box::new(ExactIndex { points: &scanned, eps: params.eps })
    };

    let core: Vec<bool> = (0..scanned.len())
        .into_par_iter()
        .map(|i| search.count_within(i, params.min_pts) >= params.min_pts)
        .collect();

    let mut labels = vec![NOISE; scanned.len()];
    let mut next_cluster = 0i64;
    let mut queue = VecDeque::new();
    let mut buffer = Vec::new();
    for seed in 0..scanned.len() {
        if !core[seed] || labels[seed] != NOISE {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[seed] = cluster;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            buffer.clear();
            search.neighbors(p, &mut buffer);
            for &q in &buffer {
                if labels[q] == NOISE {
                    labels[q] = cluster;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }

    let mut out: Vec<ClusterAssignment> = points
        .iter()
        .map(|p| ClusterAssignment {
            sha256: p.sha256.clone(),
            cluster_id: NOISE,
            stage: Stage::Dbscan,
        })
        .collect();
    for (rank, &original) in order.iter().enumerate() {
        out[original].cluster_id = labels[rank];
    }
    Ok(out)
}

trait Neighbors {
    /// Neighbours of `i` (itself included), stopping once `cap` are found.
    fn count_within(&self, i: usize, cap: usize) -> usize;
    fn neighbors(&self, i: usize, out: &mut Vec<usize>);
}

struct ExactIndex<'a> {
    points: &'a [&'a [f64]],
    eps: f64,
}

impl Neighbors for ExactIndex<'_> {
    fn count_within(&self, i: usize, cap: usize) -> usize {
        let p = self.points[i];
        let mut n = 0;
        for q in self.points {
            if euclidean(p, q) <= self.eps {
                n += 1;
                if n >= cap {
                    break;
                }
            }
        }
        n
    }

    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        let p = self.points[i];
        out.extend((0..self.points.len()).filter(|&j| euclidean(p, self.points[j]) <= self.eps));
    }
}

/// Uniform grid with cell side `eps`; a query inspects the 3^d cells around
/// the query cell and applies the exact distance test to each candidate.
struct GridIndex<'a> {
    points: &'a [&'a [f64]],
    eps: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    keys: Vec<Vec<i64>>,
}

impl<'a> GridIndex<'a> {
    fn build(points: &'a [&'a [f64]], eps: f64) -> Self {
        let keys: Vec<Vec<i64>> = points
            .iter()
            .map(|p| p.iter().map(|v| (v / eps).floor() as i64).collect())
            .collect();
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            cells.entry(key.clone()).or_default().push(i);
        }
        GridIndex { points, eps, cells, keys }
    }

    fn visit(&self, i: usize, mut f: impl FnMut(usize) -> bool) {
        let base = &self.keys[i];
        let dim = base.len();
        let p = self.points[i];
        let mut offset = vec![-1i64; dim];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b.saturating_add(*o)).collect();
            if let Some(members) = self.cells.get(&key) {
                for &j in members {
                    if euclidean(p, self.points[j]) <= self.eps && !f(j) {
                        return;
                    }
                }
            }
            // Odometer over {-1, 0, 1}^dim.
            let mut d = 0;
            while d < dim && offset[d] == 1 {
                offset[d] = -1;
                d += 1;
            }
            if d == dim {
                return;
            }
            offset[d] += 1;
        }
    }
}

impl Neighbors for GridIndex<'_> {
    fn count_within(&self, i: usize, cap: usize) -> usize {
        let mut n = 0;
        self.visit(i, |_| {
            n += 1;
            n < cap
        });
        n
    }

    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        self.visit(i, |j| {
            out.push(j);
            true
        });
        out.sort_unstable();
    }
}
