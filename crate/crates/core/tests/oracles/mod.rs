//! Slow, obviously-correct reference implementations used by the
//! integration tests. None of them share code with the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance to the `min_samples`-th nearest other point.
pub fn core_distance(points: &[Vec<f64>], i: usize, min_samples: usize) -> f64 {
    let mut d: Vec<f64> = (0..points.len()).filter(|&j| j != i).map(|j| euclidean(&points[i], &points[j])).collect();
    d.sort_by(f64::total_cmp);
    d[min_samples - 1]
}

pub fn mutual_reachability(points: &[Vec<f64>], min_samples: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let core: Vec<f64> = (0..n).map(|i| core_distance(points, i, min_samples)).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { core[i].max(core[j]).max(euclidean(&points[i], &points[j])) })
                .collect()
        })
        .collect()
}

/// Kruskal over the full edge list; returns the accepted weights in the
/// order they were accepted.
pub fn kruskal_weights(d: &[Vec<f64>]) -> Vec<f64> {
    let n = d.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((d[i][j], i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut comp: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for (w, i, j) in edges {
        let (ci, cj) = (comp[i], comp[j]);
        if ci == cj {
            continue;
        }
        for c in comp.iter_mut() {
            if *c == cj {
                *c = ci;
            }
        }
        out.push(w);
    }
    out
}

/// Binary merge tree node.
#[derive(Debug, Clone)]
pub enum Node {
    Leaf(usize),
    Merge { left: Box<Node>, right: Box<Node>, distance: f64 },
}

impl Node {
    pub fn leaves(&self) -> Vec<usize> {
        match self {
            Node::Leaf(p) => vec![*p],
            Node::Merge { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    pub fn size(&self) -> usize {
        self.leaves().len()
    }
}

/// O(n³) single linkage: repeatedly merge the two clusters joined by the
/// smallest `(distance, i, j)` pair.
pub fn naive_single_linkage(d: &[Vec<f64>]) -> Node {
    let n = d.len();
    let mut clusters: Vec<(Vec<usize>, Node)> = (0..n).map(|i| (vec![i], Node::Leaf(i))).collect();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                for &i in &clusters[a].0 {
                    for &j in &clusters[b].0 {
                        let key = (d[i][j], i.min(j), i.max(j));
                        let better = match best {
                            None => true,
                            Some((w, x, y, _, _)) => key.0 < w || (key.0 == w && (key.1, key.2) < (x, y)),
                        };
                        if better {
                            best = Some((key.0, key.1, key.2, a, b));
                        }
                    }
                }
            }
        }
        let (w, _, _, a, b) = best.unwrap();
        let (mb, nb) = clusters.remove(b);
        let (ma, na) = clusters.remove(a);
        let mut members = ma;
        members.extend(mb);
        clusters.push((members, Node::Merge { left: Box::new(na), right: Box::new(nb), distance: w }));
    }
    clusters.pop().unwrap().1
}

#[derive(Debug, Clone, Default)]
pub struct RefCluster {
    pub birth: f64,
    pub fallen: Vec<(usize, f64)>,
    pub children: Vec<usize>,
    pub child_births: Vec<(usize, f64)>,
}

/// Condensed tree built top-down by recursion over the merge tree.
pub struct RefTree {
    pub clusters: Vec<RefCluster>,
}

fn lambda(d: f64) -> f64 {
    1.0 / d.max(f64::EPSILON)
}

fn descend(node: &Node, cluster: usize, mcs: usize, tree: &mut RefTree) {
    let Node::Merge { left, right, distance } = node else {
        return;
    };
    let l = lambda(*distance);
    let (ls, rs) = (left.size(), right.size());
    if ls >= mcs && rs >= mcs {
        for child in [left, right] {
            let id = tree.clusters.len();
            tree.clusters.push(RefCluster { birth: l, ..Default::default() });
            tree.clusters[cluster].children.push(id);
            tree.clusters[cluster].child_births.push((child.size(), l));
            descend(child, id, mcs, tree);
        }
    } else {
        for (child, big) in [(left, ls >= mcs), (right, rs >= mcs)] {
            if big {
                descend(child, cluster, mcs, tree);
            } else {
                for p in child.leaves() {
                    tree.clusters[cluster].fallen.push((p, l));
                }
            }
        }
    }
}

impl RefTree {
    pub fn build(root: &Node, mcs: usize) -> Self {
        let mut tree = RefTree { clusters: vec![RefCluster::default()] };
        descend(root, 0, mcs, &mut tree);
        tree
    }

    pub fn stability(&self, c: usize) -> f64 {
        let cl = &self.clusters[c];
        cl.fallen.iter().map(|&(_, l)| l - cl.birth).sum::<f64>()
            + cl.child_births.iter().map(|&(s, l)| (l - cl.birth) * s as f64).sum::<f64>()
    }

    fn eom(&self, c: usize) -> (f64, Vec<usize>) {
        let own = self.stability(c);
        if self.clusters[c].children.is_empty() {
            return (own, vec![c]);
        }
        let mut total = 0.0;
        let mut sel = Vec::new();
        for &k in &self.clusters[c].children {
            let (t, s) = self.eom(k);
            total += t;
            sel.extend(s);
        }
        if own >= total {
            (own, vec![c])
        } else {
            (total, sel)
        }
    }

    pub fn points_under(&self, c: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.clusters[c].fallen.iter().map(|p| p.0).collect();
        for &k in &self.clusters[c].children {
            out.extend(self.points_under(k));
        }
        out
    }
}

/// Reference HDBSCAN: labels (arbitrary numbering, −1 noise) and every
/// condensed cluster's stability.
pub fn naive_hdbscan(points: &[Vec<f64>], mcs: usize, min_samples: usize) -> (Vec<i32>, Vec<f64>) {
    let n = points.len();
    if n < mcs || n < 2 {
        return (vec![-1; n], Vec::new());
    }
    let d = mutual_reachability(points, min_samples);
    let tree = RefTree::build(&naive_single_linkage(&d), mcs);
    let (_, selected) = tree.eom(0);
    let mut labels = vec![-1; n];
    for (k, &c) in selected.iter().enumerate() {
        for p in tree.points_under(c) {
            labels[p] = k as i32;
        }
    }
    let stab = (0..tree.clusters.len()).map(|c| tree.stability(c)).collect();
    (labels, stab)
}

/// Relabels by first appearance so partitions compare with `==`.
pub fn canonical(labels: &[i32]) -> Vec<i32> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i32;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefLinkage {
    Average,
    Complete,
    Single,
}

/// Agglomeration recomputing every cluster distance from member lists.
/// Returns `(node_a, node_b, distance, new_node)` per merge.
pub fn brute_force_linkage(rows: &[Vec<f64>], linkage: RefLinkage) -> Vec<(usize, usize, f64, usize)> {
    let m = rows.len();
    let d: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| cosine_distance(&rows[i], &rows[j])).collect()).collect();
    let mut active: Vec<(usize, Vec<usize>)> = (0..m).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    for step in 0..m - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                let pairs: Vec<f64> = active[a]
                    .1
                    .iter()
                    .flat_map(|&i| active[b].1.iter().map(move |&j| (i, j)))
                    .map(|(i, j)| d[i][j])
                    .collect();
                let v = match linkage {
                    RefLinkage::Average => pairs.iter().sum::<f64>() / pairs.len() as f64,
                    RefLinkage::Complete => pairs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    RefLinkage::Single => pairs.iter().copied().fold(f64::INFINITY, f64::min),
                };
                let la = *active[a].1.iter().min().unwrap();
                let lb = *active[b].1.iter().min().unwrap();
                let key = (v, la.min(lb), la.max(lb));
                let better = match best {
                    None => true,
                    Some((w, x, y, _, _)) => key.0 < w - 1e-12 || ((key.0 - w).abs() <= 1e-12 && (key.1, key.2) < (x, y)),
                };
                if better {
                    best = Some((key.0, key.1, key.2, a, b));
                }
            }
        }
        let (v, _, _, a, b) = best.unwrap();
        let (nb, mb) = active.remove(b);
        let (na, ma) = active.remove(a);
        let new = m + step;
        merges.push((na.min(nb), na.max(nb), v, new));
        active.push((new, ma.into_iter().chain(mb).collect()));
    }
    merges
}

/// Least-squares fit of `1 / (1 + a x^{2b})` to the min_dist target curve
/// by coarse-to-fine grid search.
pub fn grid_fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() }).collect();
    let loss = |a: f64, b: f64| {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y) * (f - y)
            })
            .sum::<f64>()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let (mut ra, mut rb) = (4.0, 2.0);
    for _ in 0..40 {
        let mut best = (loss(a, b), a, b);
        for i in 0..=20 {
            for j in 0..=20 {
                let ca = (a - ra + 2.0 * ra * i as f64 / 20.0).max(1e-6);
                let cb = (b - rb + 2.0 * rb * j as f64 / 20.0).max(1e-6);
                let l = loss(ca, cb);
                if l < best.0 {
                    best = (l, ca, cb);
                }
            }
        }
        a = best.1;
        b = best.2;
        ra *= 0.6;
        rb *= 0.6;
    }
    (a, b)
}
