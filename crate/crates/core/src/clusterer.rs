//! Density-based hierarchical clustering over mutual reachability distances.
//!
//! Core distances turn the input metric into mutual reachability; an exact
//! Prim MST over that metric yields the single-linkage hierarchy, which is
//! condensed with `min_cluster_size` and cut by excess of mass. Points not
//! covered by a selected cluster are labelled `-1`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{squared_euclidean, Matrix};
use crate::scalar::{total_cmp, Scalar};

pub const NOISE: i32 = -1;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need more than min_samples={min_samples} points, got {n}")]
    TooFewPoints { n: usize, min_samples: usize },
    #[error("invalid clusterer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClustererConfig {
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

impl ClustererConfig {
    pub fn hs_paper() -> Self {
        Self {
            min_cluster_size: 10,
            min_samples: 5,
        }
    }

    pub fn dl_paper() -> Self {
        Self {
            min_cluster_size: 5,
            min_samples: 5,
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::InvalidConfig("min_cluster_size must be >= 2".into()));
        }
        if self.min_samples < 1 {
            return Err(ClusterError::InvalidConfig("min_samples must be >= 1".into()));
        }
        if self.min_samples > self.min_cluster_size {
            log::debug!(
                "min_samples ({}) exceeds min_cluster_size ({})",
                self.min_samples,
                self.min_cluster_size
            );
        }
        Ok(())
    }
}

/// Per-point cluster labels (`-1` for noise) numbered by decreasing size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub probabilities: Vec<f64>,
}

impl ClusterAssignment {
    pub fn all_noise(n: usize) -> Self {
        Self {
            labels: vec![NOISE; n],
            probabilities: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().filter(|&&l| l >= 0).map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster as i32)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters()];
        for &l in &self.labels {
            if l >= 0 {
                s[l as usize] += 1;
            }
        }
        s
    }
}

/// Mutual reachability `max(core_i, core_j, d(i, j))` over Euclidean points.
pub struct MutualReachability<'a, T> {
    points: &'a Matrix<T>,
    pub core: Vec<T>,
}

impl<T: Scalar> MutualReachability<'_, T> {
    #[inline]
    pub fn base(&self, i: usize, j: usize) -> T {
        squared_euclidean(self.points.row(i), self.points.row(j)).sqrt()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> T {
        self.base(i, j).max(self.core[i]).max(self.core[j])
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances<T: Scalar>(points: &Matrix<T>, min_samples: usize) -> Result<Vec<T>, ClusterError> {
    let n = points.nrows();
    if min_samples == 0 || n <= min_samples {
        return Err(ClusterError::TooFewPoints { n, min_samples });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<T> = (0..n)
                .filter(|&j| j != i)
                .map(|j| squared_euclidean(points.row(i), points.row(j)).sqrt())
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(min_samples - 1, |a, b| total_cmp(*a, *b));
            *kth
        })
        .collect())
}

pub fn mutual_reachability<T: Scalar>(
    points: &Matrix<T>,
    min_samples: usize,
) -> Result<MutualReachability<'_, T>, ClusterError> {
    Ok(MutualReachability {
        points,
        core: core_distances(points, min_samples)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge<T> {
    pub a: usize,
    pub b: usize,
    pub weight: T,
}

/// Lexicographic edge key `(weight, min, max)`; makes the MST unique.
#[inline]
fn edge_less<T: Scalar>(w1: T, a1: usize, b1: usize, w2: T, a2: usize, b2: usize) -> bool {
    total_cmp(w1, w2)
        .then((a1.min(b1), a1.max(b1)).cmp(&(a2.min(b2), a2.max(b2))))
        .is_lt()
}

/// Exact O(n²) Prim over a dense distance oracle. Edges come back with
/// `a < b`, sorted by `(weight, a, b)`.
pub fn build_mst<T: Scalar>(n: usize, dist: impl Fn(usize, usize) -> T) -> Vec<MstEdge<T>> {
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best_w = vec![T::infinity(); n];
    let mut best_from = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = dist(current, v);
            if best_from[v] == usize::MAX || edge_less(d, current, v, best_w[v], best_from[v], v) {
                best_w[v] = d;
                best_from[v] = current;
            }
            if next == usize::MAX
                || edge_less(best_w[v], best_from[v], v, best_w[next], best_from[next], next)
            {
                next = v;
            }
        }
        in_tree[next] = true;
        let (a, b) = (best_from[next].min(next), best_from[next].max(next));
        edges.push(MstEdge {
            a,
            b,
            weight: best_w[next],
        });
        current = next;
    }
    edges.sort_by(|x, y| total_cmp(x.weight, y.weight).then((x.a, x.b).cmp(&(y.a, y.b))));
    edges
}

/// Internal node `n + i` of the single-linkage hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkageNode<T> {
    pub left: usize,
    pub right: usize,
    pub distance: T,
    pub size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage merges from MST edges sorted by weight.
pub fn single_linkage<T: Scalar>(mst: &[MstEdge<T>], n: usize) -> Vec<LinkageNode<T>> {
    // Union-find over 2n-1 ids so each root is the latest linkage node.
    let mut uf = UnionFind::new(2 * n);
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for e in mst {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let id = n + out.len();
        let size = uf.size[ra] + uf.size[rb];
        uf.parent[ra] = id;
        uf.parent[rb] = id;
        uf.size[id] = size;
        out.push(LinkageNode {
            left: ra,
            right: rb,
            distance: e.weight,
            size,
        });
    }
    out
}

/// One row of the condensed tree: `child` (a point `< n_points` or a
/// cluster `>= n_points`) leaves `parent` at density `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedEntry<T> {
    pub parent: usize,
    pub child: usize,
    pub lambda: T,
    pub child_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree<T> {
    pub n_points: usize,
    pub entries: Vec<CondensedEntry<T>>,
    /// Excess-of-mass stability per condensed cluster id.
    pub stability: BTreeMap<usize, T>,
    /// Selected condensed cluster ids, ascending.
    pub selected: Vec<usize>,
}

impl<T: Scalar> CondensedTree<T> {
    pub fn root(&self) -> usize {
        self.n_points
    }

    pub fn cluster_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = std::iter::once(self.root())
            .chain(self.entries.iter().filter(|e| e.child >= self.n_points).map(|e| e.child))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn child_clusters(&self, cluster: usize) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.parent == cluster && e.child >= self.n_points)
            .map(|e| e.child)
            .collect()
    }

    /// Lambda at which `cluster` separated from its parent (0 for the root).
    pub fn birth_lambda(&self, cluster: usize) -> T {
        self.entries
            .iter()
            .find(|e| e.child == cluster)
            .map_or(T::zero(), |e| e.lambda)
    }

    /// All points under `cluster`, with the lambda at which each fell out.
    pub fn points_under(&self, cluster: usize) -> Vec<(usize, T)> {
        let mut out = Vec::new();
        let mut stack = vec![cluster];
        while let Some(c) = stack.pop() {
            for e in self.entries.iter().filter(|e| e.parent == c) {
                if e.child < self.n_points {
                    out.push((e.child, e.lambda));
                } else {
                    stack.push(e.child);
                }
            }
        }
        out
    }
}

#[inline]
fn lambda_of<T: Scalar>(distance: T) -> T {
    T::one() / distance.max(T::epsilon())
}

/// Condenses the single-linkage hierarchy: a split in which one side holds
/// fewer than `min_cluster_size` points is recorded as those points falling
/// out of the surviving cluster.
pub fn condense<T: Scalar>(linkage: &[LinkageNode<T>], n: usize, min_cluster_size: usize) -> Vec<CondensedEntry<T>> {
    if linkage.is_empty() {
        return Vec::new();
    }
    let size_of = |node: usize| if node < n { 1 } else { linkage[node - n].size };
    let leaves_under = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let l = &linkage[x - n];
                stack.push(l.right);
                stack.push(l.left);
            }
        }
        out
    };
    let root = n + linkage.len() - 1;
    let mut entries = Vec::new();
    let mut next_label = n + 1;
    // (linkage node, condensed label)
    let mut stack = vec![(root, n)];
    while let Some((node, label)) = stack.pop() {
        let l = &linkage[node - n];
        let lambda = lambda_of(l.distance);
        let (ls, rs) = (size_of(l.left), size_of(l.right));
        let big = |s: usize| s >= min_cluster_size;
        match (big(ls), big(rs)) {
            (true, true) => {
                let (ll, rl) = (next_label, next_label + 1);
                next_label += 2;
                entries.push(CondensedEntry { parent: label, child: ll, lambda, child_size: ls });
                entries.push(CondensedEntry { parent: label, child: rl, lambda, child_size: rs });
                // Push right first so the left subtree is condensed first.
                if l.right >= n {
                    stack.push((l.right, rl));
                }
                if l.left >= n {
                    stack.push((l.left, ll));
                }
            }
            (false, false) => {
                for p in leaves_under(l.left).into_iter().chain(leaves_under(l.right)) {
                    entries.push(CondensedEntry { parent: label, child: p, lambda, child_size: 1 });
                }
            }
            (true, false) | (false, true) => {
                let (keep, drop) = if big(ls) { (l.left, l.right) } else { (l.right, l.left) };
                for p in leaves_under(drop) {
                    entries.push(CondensedEntry { parent: label, child: p, lambda, child_size: 1 });
                }
                if keep >= n {
                    stack.push((keep, label));
                } else {
                    entries.push(CondensedEntry { parent: label, child: keep, lambda, child_size: 1 });
                }
            }
        }
    }
    entries
}

/// Σ (λ_child − λ_birth) · child_size over the rows leaving each cluster.
pub fn stabilities<T: Scalar>(entries: &[CondensedEntry<T>], n_points: usize) -> BTreeMap<usize, T> {
    let mut birth: BTreeMap<usize, T> = BTreeMap::new();
    birth.insert(n_points, T::zero());
    for e in entries.iter().filter(|e| e.child >= n_points) {
        birth.insert(e.child, e.lambda);
    }
    let mut stab: BTreeMap<usize, T> = birth.keys().map(|&k| (k, T::zero())).collect();
    for e in entries {
        let b = birth[&e.parent];
        let s = stab.get_mut(&e.parent).expect("parent registered");
        *s = *s + (e.lambda - b) * T::from_usize_lossy(e.child_size);
    }
    stab
}

/// Excess-of-mass selection. A cluster is kept when its own stability is at
/// least the best total its descendants can offer. The root is a candidate
/// only when it holds at least `min_cluster_size` points.
pub fn select_eom<T: Scalar>(
    entries: &[CondensedEntry<T>],
    stability: &BTreeMap<usize, T>,
    n_points: usize,
    min_cluster_size: usize,
) -> Vec<usize> {
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.child >= n_points) {
        children.entry(e.parent).or_default().push(e.child);
    }
    let root = n_points;
    // Children always carry larger ids than their parent, so a reverse sweep
    // visits every cluster after all of its descendants.
    let mut best: BTreeMap<usize, (T, Vec<usize>)> = BTreeMap::new();
    for (&c, &s) in stability.iter().rev() {
        let kids = children.get(&c).map(Vec::as_slice).unwrap_or(&[]);
        let (sub_total, sub_sel) = kids.iter().fold((T::zero(), Vec::new()), |(t, mut sel), k| {
            let (kt, ks) = &best[k];
            sel.extend_from_slice(ks);
            (t + *kt, sel)
        });
        let root_allowed = c != root || n_points >= min_cluster_size;
        if root_allowed && (kids.is_empty() || s >= sub_total) {
            best.insert(c, (s, vec![c]));
        } else {
            best.insert(c, (sub_total, sub_sel));
        }
    }
    let mut sel = best.remove(&root).map(|(_, s)| s).unwrap_or_default();
    sel.sort_unstable();
    sel
}

/// Condenses, scores and cuts the hierarchy encoded by `mst`.
pub fn extract_clusters<T: Scalar>(
    mst: &[MstEdge<T>],
    n: usize,
    cfg: &ClustererConfig,
) -> (ClusterAssignment, CondensedTree<T>) {
    let linkage = single_linkage(mst, n);
    let entries = condense(&linkage, n, cfg.min_cluster_size);
    let stability = stabilities(&entries, n);
    let selected = if n >= cfg.min_cluster_size && !entries.is_empty() {
        select_eom(&entries, &stability, n, cfg.min_cluster_size)
    } else {
        Vec::new()
    };
    let tree = CondensedTree {
        n_points: n,
        entries,
        stability,
        selected,
    };

    let mut groups: Vec<Vec<(usize, T)>> = tree
        .selected
        .iter()
        .map(|&c| {
            let mut pts = tree.points_under(c);
            pts.sort_unstable_by_key(|p| p.0);
            pts
        })
        .filter(|g| !g.is_empty())
        .collect();
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].0.cmp(&b[0].0)));

    let mut assignment = ClusterAssignment::all_noise(n);
    for (label, group) in groups.iter().enumerate() {
        let lmax = group.iter().fold(T::zero(), |m, p| m.max(p.1));
        for &(p, lambda) in group {
            assignment.labels[p] = label as i32;
            assignment.probabilities[p] = if lmax > T::zero() {
                (lambda / lmax).as_f64().clamp(0.0, 1.0)
            } else {
                1.0
            };
        }
    }
    (assignment, tree)
}

/// Clusters Euclidean points end to end.
pub fn cluster<T: Scalar>(
    points: &Matrix<T>,
    cfg: &ClustererConfig,
) -> Result<(ClusterAssignment, CondensedTree<T>), ClusterError> {
    cfg.validate()?;
    let n = points.nrows();
    if n < cfg.min_cluster_size {
        return Ok((
            ClusterAssignment::all_noise(n),
            CondensedTree {
                n_points: n,
                entries: Vec::new(),
                stability: BTreeMap::new(),
                selected: Vec::new(),
            },
        ));
    }
    let mr = mutual_reachability(points, cfg.min_samples)?;
    let mst = build_mst(n, |i, j| mr.dist(i, j));
    Ok(extract_clusters(&mst, n, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn line(xs: &[f64]) -> Matrix<f64> {
        Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn min_samples_one_core_is_nearest_neighbour() {
        let pts = line(&[0.0, 1.0, 3.0, 7.0]);
        let mr = mutual_reachability(&pts, 1).unwrap();
        assert_eq!(mr.core, vec![1.0, 1.0, 2.0, 4.0]);
        for i in 0..4 {
            for j in 0..4 {
                assert!(mr.dist(i, j) >= mr.base(i, j));
            }
        }
    }

    #[test]
    fn coincident_points() {
        let pts = line(&[2.0, 2.0, 2.0, 9.0]);
        let mr = mutual_reachability(&pts, 1).unwrap();
        assert_eq!(mr.core[0], 0.0);
        assert_eq!(mr.dist(0, 1), 0.0);
        assert_eq!(mr.dist(0, 3), 7.0);
    }

    #[test]
    fn too_few_points() {
        let pts = line(&[0.0, 1.0]);
        assert_eq!(
            core_distances(&pts, 2).unwrap_err(),
            ClusterError::TooFewPoints { n: 2, min_samples: 2 }
        );
    }

    #[test]
    fn triangle_mst() {
        let d = [[0.0, 1.0, 3.0], [1.0, 0.0, 2.0], [3.0, 2.0, 0.0]];
        let mst = build_mst(3, |i, j| d[i][j]);
        let total: f64 = mst.iter().map(|e| e.weight).sum();
        assert_eq!(total, 3.0);
        assert_eq!(mst.len(), 2);
        assert_eq!((mst[0].a, mst[0].b), (0, 1));
        assert_eq!((mst[1].a, mst[1].b), (1, 2));
    }

    #[test]
    fn chain_mst_is_a_path() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let mst = build_mst(5, |i, j| squared_euclidean(pts.row(i), pts.row(j)).sqrt());
        let mut pairs: Vec<(usize, usize)> = mst.iter().map(|e| (e.a, e.b)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }

    /// Two groups of six on a line. With min_samples=1 the mutual
    /// reachability MST is the chain of gaps, so the condensed tree can be
    /// traced by hand: the root splits at the 10-unit gap (λ = 0.1) into two
    /// 6-point clusters; points then fall out of each one.
    #[test]
    fn hand_traced_miniature() {
        let left = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let right = [15.0, 15.5, 16.0, 16.5, 17.0, 17.5];
        let xs: Vec<f64> = left.iter().chain(&right).copied().collect();
        let pts = line(&xs);
        let cfg = ClustererConfig { min_cluster_size: 3, min_samples: 1 };
        let (assign, tree) = cluster(&pts, &cfg).unwrap();

        // Root split at distance 10.
        let root_kids = tree.child_clusters(12);
        assert_eq!(root_kids.len(), 2);
        for &c in &root_kids {
            assert!((tree.birth_lambda(c) - 0.1).abs() < 1e-12);
        }
        // Left group: all gaps 1, so all six points leave at λ = 1 together
        // (no sub-split can leave two sides of size >= 3 with a smaller λ).
        // Stability = 6 · (1 − 0.1) = 5.4. Right group: gaps 0.5 → λ = 2,
        // stability = 6 · (2 − 0.1) = 11.4. Root: 12 · (0.1 − 0) = 1.2.
        let mut stabs: Vec<f64> = root_kids.iter().map(|c| tree.stability[c]).collect();
        stabs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((stabs[0] - 5.4).abs() < 1e-9, "{stabs:?}");
        assert!((stabs[1] - 11.4).abs() < 1e-9, "{stabs:?}");
        assert!((tree.stability[&12] - 1.2).abs() < 1e-9);

        assert_eq!(assign.n_clusters(), 2);
        assert_eq!(assign.noise_count(), 0);
        // equal sizes: the cluster holding point 0 gets id 0
        assert!(assign.labels[..6].iter().all(|&l| l == 0));
        assert!(assign.labels[6..].iter().all(|&l| l == 1));
        assert!(assign.probabilities.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn min_cluster_size_above_n_is_all_noise() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0]);
        let (a, _) = cluster(&pts, &ClustererConfig { min_cluster_size: 5, min_samples: 1 }).unwrap();
        assert_eq!(a.noise_count(), 4);
        assert!(a.probabilities.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn single_blob_is_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![nd.sample(&mut rng), nd.sample(&mut rng)]).collect();
        let pts = Matrix::from_rows(&rows).unwrap();
        let (a, tree) = cluster(&pts, &ClustererConfig { min_cluster_size: 30, min_samples: 5 }).unwrap();
        assert_eq!(a.n_clusters(), 1);
        assert!(a.sizes()[0] >= 30);
        assert_eq!(tree.selected.len(), 1);
    }

    fn two_blobs_with_outliers(seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        for c in [0.0, 10.0] {
            for _ in 0..50 {
                rows.push(vec![c + nd.sample(&mut rng), nd.sample(&mut rng)]);
            }
        }
        for _ in 0..10 {
            rows.push(vec![rng.gen_range(-40.0..50.0), rng.gen_range(25.0..60.0)]);
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn two_blobs_and_outliers() {
        for seed in 0..5 {
            let pts = two_blobs_with_outliers(seed);
            let (a, tree) = cluster(&pts, &ClustererConfig { min_cluster_size: 10, min_samples: 5 }).unwrap();
            assert_eq!(a.n_clusters(), 2, "seed {seed}");
            let outliers_noise = a.labels[100..].iter().filter(|&&l| l == NOISE).count();
            assert!(outliers_noise >= 8, "seed {seed}: {outliers_noise}");
            // selection rule holds on the tree
            for &c in &tree.selected {
                let kids_total: f64 = tree.child_clusters(c).iter().map(|k| tree.stability[k]).sum();
                assert!(tree.stability[&c] >= kids_total || tree.child_clusters(c).is_empty());
            }
            for (l, p) in a.labels.iter().zip(&a.probabilities) {
                assert_eq!(*l == NOISE, *p == 0.0);
                assert!((0.0..=1.0).contains(p));
            }
        }
    }

    #[test]
    fn labels_ordered_by_size() {
        let mut xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        xs.extend((0..8).map(|i| 100.0 + i as f64 * 0.1));
        xs.extend((0..12).map(|i| 50.0 + i as f64 * 0.1));
        let (a, _) = cluster(&line(&xs), &ClustererConfig { min_cluster_size: 5, min_samples: 2 }).unwrap();
        assert_eq!(a.sizes(), vec![20, 12, 8]);
        assert_eq!(a.labels[0], 0);
        assert_eq!(a.labels[20], 2);
        assert_eq!(a.labels[28], 1);
    }

    #[test]
    fn f32_points_cluster() {
        let pts = two_blobs_with_outliers(1).map(|v| v as f32);
        let (a, _) = cluster(&pts, &ClustererConfig { min_cluster_size: 10, min_samples: 5 }).unwrap();
        assert_eq!(a.n_clusters(), 2);
    }

    #[test]
    fn raising_min_samples_never_lowers_core_distances() {
        let pts = two_blobs_with_outliers(3);
        let mut prev = core_distances(&pts, 1).unwrap();
        for ms in 2..12 {
            let cur = core_distances(&pts, ms).unwrap();
            assert!(cur.iter().zip(&prev).all(|(c, p)| c >= p));
            prev = cur;
        }
    }
}
