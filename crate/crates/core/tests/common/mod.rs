//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urban_perception::domain::Point2;
use urban_perception::model::{Node, Tree};

/// Expected tree output when only the features in `known` are observed:
/// splits on unknown features average their children by cover.
pub fn conditional_value(tree: &Tree, x: &[f64], known: &[bool], node: usize) -> f64 {
    match tree.nodes[node] {
        Node::Leaf { value, .. } => value,
        Node::Split { feature, threshold, left, right, .. } => {
            if known[feature] {
                let next = if x[feature] <= threshold { left } else { right };
                conditional_value(tree, x, known, next)
            } else {
                let (cl, cr) = (tree.nodes[left].cover(), tree.nodes[right].cover());
                (cl * conditional_value(tree, x, known, left) + cr * conditional_value(tree, x, known, right)) / (cl + cr)
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values by enumerating every coalition.
pub fn brute_shapley(tree: &Tree, x: &[f64], n_features: usize) -> Vec<f64> {
    let m = n_features;
    let mut phi = vec![0.0; m];
    for mask in 0u32..(1 << m) {
        let known: Vec<bool> = (0..m).map(|j| mask & (1 << j) != 0).collect();
        let base = conditional_value(tree, x, &known, 0);
        let size = known.iter().filter(|k| **k).count();
        for i in 0..m {
            if known[i] {
                continue;
            }
            let mut with = known.clone();
            with[i] = true;
            let w = factorial(size) * factorial(m - size - 1) / factorial(m);
            phi[i] += w * (conditional_value(tree, x, &with, 0) - base);
        }
    }
    phi
}

/// Random tree of depth at most `max_depth` over `n_features` features,
/// with consistent covers.
pub fn random_tree(rng: &mut ChaCha8Rng, max_depth: usize, n_features: usize) -> Tree {
    fn grow(rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>, depth: usize, max_depth: usize, p: usize) -> usize {
        let id = nodes.len();
        if depth == max_depth || (depth > 0 && rng.random_bool(0.25)) {
            nodes.push(Node::Leaf { value: rng.random_range(-2.0..2.0), cover: rng.random_range(1..20) as f64 });
            return id;
        }
        nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
        let feature = rng.random_range(0..p);
        let threshold = rng.random_range(0.0..1.0);
        let left = grow(rng, nodes, depth + 1, max_depth, p);
        let right = grow(rng, nodes, depth + 1, max_depth, p);
        let cover = nodes[left].cover() + nodes[right].cover();
        nodes[id] = Node::Split { feature, threshold, left, right, cover };
        id
    }
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, 0, max_depth, n_features);
    Tree { nodes }
}

/// The `k` nearest other points of `i` by full scan, ties to the lower id.
pub fn brute_knn(points: &[Point2], i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> =
        (0..points.len()).filter(|&j| j != i).map(|j| (points[i].distance_squared(&points[j]), j)).collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().take(k).map(|e| e.1).collect()
}

pub fn dense_knn(points: &[Point2], k: usize, row_standardize: bool, include_self: bool) -> Vec<Vec<f64>> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            let nb = brute_knn(points, i, k);
            let w = if row_standardize { 1.0 / nb.len() as f64 } else { 1.0 };
            for j in nb {
                row[j] = w;
            }
            if include_self {
                row[i] = 1.0;
            }
            row
        })
        .collect()
}

/// Moran's I with its expectation and normality z-score, from a dense matrix.
pub fn dense_moran(x: &[f64], w: &[Vec<f64>]) -> (f64, f64) {
    let n = x.len();
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let z: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let mut s0 = 0.0;
    let mut cross = 0.0;
    let mut s1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            s0 += w[i][j];
            cross += w[i][j] * z[i] * z[j];
            s1 += 0.5 * (w[i][j] + w[j][i]).powi(2);
        }
    }
    let s2: f64 = (0..n)
        .map(|i| {
            let out: f64 = w[i].iter().sum();
            let inc: f64 = (0..n).map(|j| w[j][i]).sum();
            (out + inc).powi(2)
        })
        .sum();
    let m2: f64 = z.iter().map(|v| v * v).sum();
    let i_stat = nf / s0 * cross / m2;
    let e = -1.0 / (nf - 1.0);
    let var = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0) - e * e;
    (i_stat, (i_stat - e) / var.sqrt())
}

/// G* z-score of every point from a dense matrix that includes self weights.
pub fn dense_gstar(x: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let s = (x.iter().map(|v| v * v).sum::<f64>() / n - mean * mean).sqrt();
    w.iter()
        .map(|row| {
            let wi: f64 = row.iter().sum();
            let s1i: f64 = row.iter().map(|v| v * v).sum();
            let lag: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            (lag - mean * wi) / (s * ((n * s1i - wi * wi) / (n - 1.0)).sqrt())
        })
        .collect()
}

fn sample_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Cronbach's alpha from item variances and the variance of row totals.
/// `rows[rater][image]`, no missing cells.
pub fn textbook_alpha(rows: &[Vec<f64>]) -> f64 {
    let k = rows.len() as f64;
    let n_images = rows[0].len();
    let item: f64 = rows.iter().map(|r| sample_var(r)).sum();
    let totals: Vec<f64> = (0..n_images).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    k / (k - 1.0) * (1.0 - item / sample_var(&totals))
}

/// Two-sided exact Mann-Whitney p by listing every way to choose the first
/// group's ranks, for samples without ties. Returns `(min U, p)`.
pub fn enumerated_mwu_p(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    // rank = 1 + number of smaller values
    let rank = |v: f64| 1 + pooled.iter().filter(|&&o| o < v).count();
    let offset = na * (na + 1) / 2;
    let ua = a.iter().map(|&v| rank(v)).sum::<usize>() - offset;
    let u_obs = ua.min(na * nb - ua);
    let mut total = 0usize;
    let mut hits = 0usize;
    let mut combo: Vec<usize> = (0..na).collect();
    loop {
        total += 1;
        let u = combo.iter().map(|&i| i + 1).sum::<usize>() - offset;
        if u.min(na * nb - u) <= u_obs {
            hits += 1;
        }
        // next combination in lexicographic order
        let mut i = na;
        while i > 0 && combo[i - 1] == n - na + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..na {
            combo[j] = combo[j - 1] + 1;
        }
    }
    // both tails counted together, so no doubling
    (u_obs as f64, (hits as f64 / total as f64).min(1.0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lists every file under `dir` with its bytes, sorted by relative path.
pub fn tree_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, d: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Recursive copy of a directory tree.
pub fn copy_dir(from: &std::path::Path, to: &std::path::Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            std::fs::copy(&p, &dest).unwrap();
        }
    }
}

pub fn demo_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}
