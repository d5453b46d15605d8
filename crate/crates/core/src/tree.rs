//! Finite point sets in Z_p^d (d = 1 or 3), the radix-p^d trie over them, and
//! the ball statistics read off that trie.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("empty point set")]
    Empty,
    #[error("dimension must be 1 or 3, got {0}")]
    BadDimension(usize),
    #[error("coordinate {value} is not a residue mod p^{depth}")]
    OutOfRange { value: u64, depth: u32 },
    #[error("duplicate point {0:?}")]
    Duplicate(Vec<u64>),
    #[error("scale {k} outside 0..={max}")]
    ScaleOutOfRange { k: u32, max: u32 },
    #[error("point {0:?} is not in the set")]
    NotAMember(Vec<u64>),
    #[error("need (#F)^(eps/2) > 4 log_p #F: have {lhs} vs {rhs}")]
    SizeCondition { lhs: f64, rhs: f64 },
    #[error("energy hypothesis fails: max energy {energy} > D (#F)^(1+eps) = {bound}")]
    EnergyHypothesis { energy: f64, bound: f64 },
    #[error("no admissible scale: l1 must lie in [{lo}, {hi}]")]
    NoAdmissibleScale { lo: f64, hi: f64 },
    #[error("malformed point file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, TreeError>;

/// Distinct points of (Z/p^m)^d.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PointSet {
    p: u64,
    dim: usize,
    depth: u32,
    coords: Vec<u64>,
}

impl PointSet {
    pub fn new(p: u64, dim: usize, depth: u32, points: &[Vec<u64>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(points.len() * dim);
        for pt in points {
            if pt.len() != dim {
                return Err(TreeError::BadDimension(pt.len()));
            }
            flat.extend_from_slice(pt);
        }
        PointSet::from_flat(p, dim, depth, flat)
    }

    pub fn from_flat(p: u64, dim: usize, depth: u32, coords: Vec<u64>) -> Result<Self> {
        if dim != 1 && dim != 3 {
            return Err(TreeError::BadDimension(dim));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(TreeError::BadDimension(coords.len() % dim));
        }
        let modulus = p.pow(depth);
        if let Some(&value) = coords.iter().find(|&&x| x >= modulus) {
            return Err(TreeError::OutOfRange { value, depth });
        }
        let mut seen = HashSet::with_capacity(coords.len() / dim);
        for pt in coords.chunks(dim) {
            if !seen.insert(pt) {
                return Err(TreeError::Duplicate(pt.to_vec()));
            }
        }
        Ok(PointSet { p, dim, depth, coords })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[u64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[u64]> {
        self.coords.chunks(self.dim)
    }

    pub fn contains(&self, pt: &[u64]) -> bool {
        self.points().any(|q| q == pt)
    }

    /// Subset given by indices (kept in the given order).
    pub fn subset(&self, idx: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        PointSet { p: self.p, dim: self.dim, depth: self.depth, coords }
    }

    /// v_p of x − y, capped at the depth (distance ≤ p^-m when they agree).
    pub fn distance_valuation(&self, x: &[u64], y: &[u64]) -> u32 {
        let modulus = self.p.pow(self.depth);
        x.iter()
            .zip(y)
            .map(|(a, b)| {
                let d = (a + modulus - b) % modulus;
                if d == 0 {
                    self.depth
                } else {
                    crate::padic::valuation_u64(d, self.p).unwrap()
                }
            })
            .min()
            .unwrap_or(self.depth)
    }

    /// "# p=5,d=3,m=4" header followed by one comma-separated point per line.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# p={},d={},m={}\n", self.p, self.dim, self.depth);
        for pt in self.points() {
            let line: Vec<String> = pt.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| TreeError::Parse("missing header".into()))?;
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| TreeError::Parse("header must start with #".into()))?;
        let (mut p, mut d, mut m) = (None, None, None);
        for field in header.split(',') {
            let (k, v) = field
                .trim()
                .split_once('=')
                .ok_or_else(|| TreeError::Parse(format!("bad header field {field}")))?;
            let v: u64 = v.trim().parse().map_err(|_| TreeError::Parse(format!("bad value {v}")))?;
            match k.trim() {
                "p" => p = Some(v),
                "d" => d = Some(v as usize),
                "m" => m = Some(v as u32),
                other => return Err(TreeError::Parse(format!("unknown header key {other}"))),
            }
        }
        let p = p.ok_or_else(|| TreeError::Parse("header lacks p".into()))?;
        let m = m.ok_or_else(|| TreeError::Parse("header lacks m".into()))?;
        let mut coords = Vec::new();
        let mut dim = d;
        for line in lines {
            let row: std::result::Result<Vec<u64>, _> =
                line.split(',').map(|x| x.trim().parse::<u64>()).collect();
            let row = row.map_err(|e| TreeError::Parse(e.to_string()))?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => return Err(TreeError::BadDimension(row.len())),
                _ => {}
            }
            coords.extend(row);
        }
        PointSet::from_flat(p, dim.unwrap_or(3), m, coords)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Node {
    depth: u32,
    /// digit tuple at level depth − 1, encoded in base p
    code: u64,
    start: usize,
    end: usize,
    first_child: usize,
    n_children: usize,
}

/// Radix-p^d trie; node ranges index into the points sorted by digit tuples.
#[derive(Debug, Clone)]
pub struct PBallTree {
    p: u64,
    dim: usize,
    depth: u32,
    order: Vec<usize>,
    nodes: Vec<Node>,
    by_depth: Vec<Vec<usize>>,
}

fn level_code(pt: &[u64], p: u64, j: u32) -> u64 {
    let pj = p.pow(j);
    pt.iter().rev().fold(0, |acc, &x| acc * p + (x / pj) % p)
}

impl PBallTree {
    pub fn build(e: &PointSet) -> Result<Self> {
        if e.is_empty() {
            return Err(TreeError::Empty);
        }
        let (p, m) = (e.p, e.depth);
        let keys: Vec<Vec<u64>> =
            e.points().map(|pt| (0..m).map(|j| level_code(pt, p, j)).collect()).collect();
        let mut order: Vec<usize> = (0..e.len()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        let mut nodes = vec![Node { depth: 0, code: 0, start: 0, end: order.len(), first_child: 0, n_children: 0 }];
        let mut by_depth = vec![vec![0usize]];
        let mut frontier = vec![0usize];
        for j in 0..m {
            let mut next = Vec::new();
            for &id in &frontier {
                let (start, end) = (nodes[id].start, nodes[id].end);
                let first = nodes.len();
                let mut s = start;
                while s < end {
                    let code = keys[order[s]][j as usize];
                    let mut t = s + 1;
                    while t < end && keys[order[t]][j as usize] == code {
                        t += 1;
                    }
                    next.push(nodes.len());
                    nodes.push(Node { depth: j + 1, code, start: s, end: t, first_child: 0, n_children: 0 });
                    s = t;
                }
                nodes[id].first_child = first;
                nodes[id].n_children = nodes.len() - first;
            }
            by_depth.push(next.clone());
            frontier = next;
        }
        Ok(PBallTree { p, dim: e.dim, depth: m, order, nodes, by_depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total(&self) -> usize {
        self.order.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Counts of all nonempty balls of radius p^-k.
    pub fn counts_at(&self, k: u32) -> impl Iterator<Item = usize> + '_ {
        self.by_depth[k as usize].iter().map(|&id| self.nodes[id].end - self.nodes[id].start)
    }

    pub fn max_count(&self, k: u32) -> usize {
        if k > self.depth {
            return 1;
        }
        self.counts_at(k).max().unwrap_or(0)
    }

    fn child(&self, id: usize, code: u64) -> Option<usize> {
        let n = &self.nodes[id];
        let kids = &self.nodes[n.first_child..n.first_child + n.n_children];
        kids.binary_search_by_key(&code, |c| c.code).ok().map(|i| n.first_child + i)
    }

    /// Node ids along the path of `center`, from the root to the deepest nonempty ball.
    fn path(&self, center: &[u64], k: u32) -> Vec<usize> {
        let mut ids = vec![0];
        let mut id = 0;
        for j in 0..k {
            match self.child(id, level_code(center, self.p, j)) {
                Some(c) => {
                    id = c;
                    ids.push(c);
                }
                None => break,
            }
        }
        ids
    }

    /// #{x ∈ E : ‖x − center‖ ≤ p^-k}.
    pub fn ball_count(&self, center: &[u64], k: u32) -> Result<usize> {
        if k > self.depth {
            return Err(TreeError::ScaleOutOfRange { k, max: self.depth });
        }
        let path = self.path(center, k);
        if path.len() as u32 == k + 1 {
            let n = &self.nodes[*path.last().unwrap()];
            Ok(n.end - n.start)
        } else {
            Ok(0)
        }
    }

    /// Ball counts c_0 ≥ c_1 ≥ ... ≥ c_m around `center`.
    pub fn path_counts(&self, center: &[u64]) -> Vec<usize> {
        let path = self.path(center, self.depth);
        let mut out: Vec<usize> = path.iter().map(|&id| self.nodes[id].end - self.nodes[id].start).collect();
        out.resize(self.depth as usize + 1, 0);
        out
    }

    /// Indices (into the original set) of the points in a node.
    fn members(&self, id: usize) -> &[usize] {
        &self.order[self.nodes[id].start..self.nodes[id].end]
    }
}

pub fn build_tree(e: &PointSet) -> Result<PBallTree> {
    PBallTree::build(e)
}

/// Largest ball masses at scales p^-l1 ... p^-l0 and the constants they force.
#[derive(Debug, Clone, Serialize)]
pub struct NonConcProfile {
    pub p: u64,
    pub l0: u32,
    pub l1: u32,
    pub total: usize,
    /// (k, max ball count at radius p^-k)
    pub max_counts: Vec<(u32, usize)>,
    /// max count / #E, per k
    pub ratios: Vec<f64>,
    /// α the constant below refers to
    pub alpha: f64,
    /// smallest D with ratio_k ≤ D·p^{-α(k − l1)} for every listed k
    pub d_at_alpha: f64,
    /// largest α with D = ratio_{l1}
    pub fitted_alpha: f64,
    pub fitted_d: f64,
}

impl NonConcProfile {
    pub fn constant_for(&self, alpha: f64) -> f64 {
        let p = self.p as f64;
        self.ratios
            .iter()
            .zip(&self.max_counts)
            .map(|(r, (k, _))| r * p.powf(alpha * (*k as f64 - self.l1 as f64)))
            .fold(0.0, f64::max)
    }
}

/// Profile on scales b0 = p^-l0 ≤ b ≤ b1 = p^-l1.  Scales deeper than the
/// set's depth hold at most one point per ball.
pub fn non_concentration_profile(e: &PointSet, l0: u32, l1: u32, alpha: f64) -> Result<NonConcProfile> {
    let tree = PBallTree::build(e)?;
    profile_of_tree(&tree, l0, l1, alpha)
}

pub fn profile_of_tree(tree: &PBallTree, l0: u32, l1: u32, alpha: f64) -> Result<NonConcProfile> {
    if l1 > l0 {
        return Err(TreeError::ScaleOutOfRange { k: l1, max: l0 });
    }
    let total = tree.total();
    let max_counts: Vec<(u32, usize)> = (l1..=l0).map(|k| (k, tree.max_count(k))).collect();
    let ratios: Vec<f64> = max_counts.iter().map(|(_, c)| *c as f64 / total as f64).collect();
    let p = tree.p as f64;
    let fitted_d = ratios[0];
    let fitted_alpha = max_counts
        .iter()
        .zip(&ratios)
        .skip(1)
        .map(|((k, _), r)| (fitted_d / r).ln() / p.ln() / (*k - l1) as f64)
        .fold(f64::INFINITY, f64::min);
    let fitted_alpha = if fitted_alpha.is_finite() { fitted_alpha } else { 0.0 };
    let mut prof = NonConcProfile {
        p: tree.p,
        l0,
        l1,
        total,
        max_counts,
        ratios,
        alpha,
        d_at_alpha: 0.0,
        fitted_alpha,
        fitted_d,
    };
    prof.d_at_alpha = prof.constant_for(alpha);
    Ok(prof)
}

/// Σ_{w' ≠ w} ‖w' − w‖^-α, grouped by distance and summed from far to near.
pub fn energy_sum(f: &PointSet, alpha: f64, w: &[u64]) -> Result<f64> {
    let tree = PBallTree::build(f)?;
    energy_in_tree(&tree, alpha, w)
}

pub fn energy_in_tree(tree: &PBallTree, alpha: f64, w: &[u64]) -> Result<f64> {
    let counts = tree.path_counts(w);
    if counts[tree.depth as usize] != 1 {
        return Err(TreeError::NotAMember(w.to_vec()));
    }
    Ok(shell_sum(tree.p, alpha, &counts))
}

/// Σ_v (c_v − c_{v+1})·p^{αv} over v < m, from nested ball counts c_0..c_m.
pub fn shell_sum(p: u64, alpha: f64, counts: &[usize]) -> f64 {
    let p = p as f64;
    let mut s = 0.0;
    for v in 0..counts.len() - 1 {
        let shell = counts[v] - counts[v + 1];
        if shell > 0 {
            s += shell as f64 * p.powf(alpha * v as f64);
        }
    }
    s
}

/// Valuation histogram of w' − w over w' ≠ w: entry v counts points at distance p^-v.
pub fn distance_histogram(tree: &PBallTree, w: &[u64]) -> Vec<usize> {
    let c = tree.path_counts(w);
    (0..c.len() - 1).map(|v| c[v] - c[v + 1]).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BourgainParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub d: f64,
    /// skip the (#F)^{ε/2} > 4 log_p #F requirement (diagnostics only)
    pub waive_size_condition: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Regularized {
    pub w0: Vec<u64>,
    pub l1: u32,
    pub fprime: PointSet,
    /// measured constant at exponent γ = α − 20ε
    pub c_prime: f64,
    pub gamma: f64,
    /// admissible real interval for l1
    pub l1_range: (f64, f64),
    /// finest scale checked: p^-k_max ≥ (#F)^-1
    pub k_max: u32,
    pub max_energy: f64,
    pub profile: NonConcProfile,
}

/// Admissible interval for l1 = −log_p b1 at #F = n.
pub fn admissible_l1(p: u64, n: usize, alpha: f64, eps: f64) -> (f64, f64) {
    let l = (n as f64).ln() / (p as f64).ln();
    (eps * l, l * (3.0 - alpha + 5.0 * eps) / (3.0 - alpha + 20.0 * eps))
}

pub fn size_condition(p: u64, n: usize, eps: f64) -> (bool, f64, f64) {
    let lhs = (n as f64).powf(eps / 2.0);
    let rhs = 4.0 * (n as f64).ln() / (p as f64).ln();
    (lhs > rhs, lhs, rhs)
}

/// Localize F to a ball B(w0, b1) and prune it to a subset F' that is
/// (C', α − 20ε)-regular below b1 at all scales down to (#F)^-1.
///
/// Every node at an admissible depth is a candidate; inside it the subtree is
/// trimmed so that a depth-k ball keeps at most θ·n·p^{-γ(k − l1)} points, for
/// a ladder of θ.  Among all results the smallest measured C' wins, ties going
/// to the larger F'.
pub fn bourgain_regularize(f: &PointSet, params: &BourgainParams) -> Result<Regularized> {
    let n = f.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    let (alpha, eps) = (params.alpha, params.epsilon);
    let p = f.p();
    let (ok, lhs, rhs) = size_condition(p, n, eps);
    // a single point satisfies the inequality vacuously (log_p 1 = 0) but is not "large"
    if (!ok || n < 2) && !params.waive_size_condition {
        return Err(TreeError::SizeCondition { lhs, rhs });
    }
    let tree = PBallTree::build(f)?;
    let max_energy = f
        .points()
        .map(|w| energy_in_tree(&tree, alpha, w).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let bound = params.d * (n as f64).powf(1.0 + eps);
    if max_energy > bound {
        return Err(TreeError::EnergyHypothesis { energy: max_energy, bound });
    }
    let (lo, hi) = admissible_l1(p, n, alpha, eps);
    let l_lo = lo.ceil().max(0.0) as u32;
    let l_hi = hi.floor();
    if l_hi < 0.0 || (l_lo as f64) > l_hi {
        return Err(TreeError::NoAdmissibleScale { lo, hi });
    }
    let l_hi = l_hi as u32;
    let k_max = ((n as f64).ln() / (p as f64).ln() + 1e-12).floor() as u32;
    let gamma = alpha - 20.0 * eps;
    let thetas = [1.0, 2.0, 4.0, 8.0, 16.0, f64::INFINITY];

    let mut best: Option<(f64, Vec<usize>, u32)> = None;
    for l1 in l_lo..=l_hi.min(tree.depth) {
        for &id in &tree.by_depth[l1 as usize] {
            let size = tree.nodes[id].end - tree.nodes[id].start;
            for &theta in &thetas {
                let kept = prune(&tree, id, l1, k_max, gamma, theta * size as f64);
                if kept.is_empty() {
                    continue;
                }
                let c = measured_constant(f, &kept, l1, k_max, gamma);
                let better = match &best {
                    None => true,
                    Some((bc, bk, _)) => c < *bc || (c == *bc && kept.len() > bk.len()),
                };
                if better {
                    best = Some((c, kept, l1));
                }
            }
        }
    }
    let (c_prime, kept, l1) = best.ok_or(TreeError::NoAdmissibleScale { lo, hi })?;
    let mut kept = kept;
    kept.sort_unstable();
    let fprime = f.subset(&kept);
    let w0 = fprime.point(0).to_vec();
    let profile = non_concentration_profile(&fprime, k_max.max(l1), l1, gamma)?;
    Ok(Regularized {
        w0,
        l1,
        fprime,
        c_prime,
        gamma,
        l1_range: (lo, hi),
        k_max,
        max_energy,
        profile,
    })
}

/// Largest subset of node `root` whose depth-k ball counts stay below
/// scale·p^{-γ(k − l1)} for l1 < k ≤ k_max (water-filling on the trie).
fn prune(tree: &PBallTree, root: usize, l1: u32, k_max: u32, gamma: f64, scale: f64) -> Vec<usize> {
    let p = tree.p as f64;
    let cap = |depth: u32| -> usize {
        if depth <= l1 || depth > k_max || scale.is_infinite() {
            usize::MAX
        } else {
            let c = scale * p.powf(-gamma * (depth - l1) as f64);
            (c.floor() as usize).max(1)
        }
    };
    // bottom-up: how many points each node can keep
    fn avail(tree: &PBallTree, id: usize, cap: &dyn Fn(u32) -> usize, memo: &mut Vec<(usize, usize)>) -> usize {
        let n = &tree.nodes[id];
        let raw = if n.n_children == 0 {
            n.end - n.start
        } else {
            (n.first_child..n.first_child + n.n_children).map(|c| avail(tree, c, cap, memo)).sum()
        };
        let a = raw.min(cap(n.depth));
        memo.push((id, a));
        a
    }
    let mut memo = Vec::new();
    let budget = avail(tree, root, &cap, &mut memo);
    let lookup: std::collections::HashMap<usize, usize> = memo.into_iter().collect();
    let mut kept = Vec::with_capacity(budget);
    distribute(tree, root, budget, &lookup, &mut kept);
    kept
}

fn distribute(
    tree: &PBallTree,
    id: usize,
    budget: usize,
    avail: &std::collections::HashMap<usize, usize>,
    kept: &mut Vec<usize>,
) {
    if budget == 0 {
        return;
    }
    let n = &tree.nodes[id];
    if n.n_children == 0 {
        kept.extend_from_slice(&tree.members(id)[..budget]);
        return;
    }
    let kids: Vec<(usize, usize)> =
        (n.first_child..n.first_child + n.n_children).map(|c| (c, avail[&c])).collect();
    // water level t: give each child min(avail, t), leftover one each in order
    let mut levels: Vec<usize> = kids.iter().map(|k| k.1).collect();
    levels.sort_unstable();
    let mut remaining = budget;
    let mut t = 0usize;
    let mut active = kids.len();
    let mut prev = 0usize;
    for &lv in &levels {
        let step = lv - prev;
        if step * active <= remaining {
            remaining -= step * active;
            t = lv;
            prev = lv;
            active -= 1;
        } else {
            t = prev + remaining / active;
            remaining -= (t - prev) * active;
            break;
        }
    }
    for (c, a) in kids {
        let mut give = a.min(t);
        if a > t && remaining > 0 {
            give += 1;
            remaining -= 1;
        }
        distribute(tree, c, give, avail, kept);
    }
}

/// max over l1 ≤ k ≤ k_max of (max ball count / #F')·p^{γ(k − l1)}.
fn measured_constant(f: &PointSet, kept: &[usize], l1: u32, k_max: u32, gamma: f64) -> f64 {
    let sub = f.subset(kept);
    let tree = PBallTree::build(&sub).expect("nonempty");
    let total = kept.len() as f64;
    let p = f.p() as f64;
    (l1..=k_max.max(l1))
        .map(|k| tree.max_count(k) as f64 / total * p.powf(gamma * (k - l1) as f64))
        .fold(0.0, f64::max)
}
