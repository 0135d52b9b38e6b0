//! Partitions of the class set and clusterwise calibration.

use crate::calibrate::{ConformalBand, PredictionSet};
use crate::cluster::hierarchy::Hierarchy;
use crate::conditional::{mondrian_fit_with, mondrian_predict_band, mondrian_predict_set, MondrianCalibration};
use crate::error::{Error, Result};
use crate::quantile::SortedSample;
use crate::rng::SeededRng;
use crate::scores::{RegressionOutputs, RegressionScore};

/// Quantile levels used for class embeddings by default.
pub const DEFAULT_EMBED_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// A partition of classes `0..k` into clusters `0..m`.
///
/// Clusters are ordered by their smallest member, and members are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMap {
    cluster_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClusterMap {
    /// Builds a map from cluster member lists; empty lists are dropped.
    pub fn from_members(n_classes: usize, members: Vec<Vec<usize>>) -> Result<Self> {
        let mut members: Vec<Vec<usize>> = members
            .into_iter()
            .filter(|m| !m.is_empty())
            .map(|mut m| {
                m.sort_unstable();
                m
            })
            .collect();
        members.sort_by_key(|m| m[0]);
        let mut cluster_of = vec![usize::MAX; n_classes];
        for (id, m) in members.iter().enumerate() {
            for &c in m {
                let slot = cluster_of.get_mut(c).ok_or(Error::LabelOutOfRange { label: c, n_classes })?;
                if *slot != usize::MAX {
                    return Err(Error::invalid(format!("class {} is in two clusters", c + 1)));
                }
                *slot = id;
            }
        }
        if let Some(c) = cluster_of.iter().position(|&id| id == usize::MAX) {
            return Err(Error::invalid(format!("class {} is in no cluster", c + 1)));
        }
        Ok(Self { cluster_of, members })
    }

    /// Builds a map from per-class cluster labels (any integers).
    pub fn from_assignment(labels: &[usize]) -> Result<Self> {
        let top = labels.iter().max().map_or(0, |&m| m + 1);
        let mut members = vec![Vec::new(); top];
        for (c, &l) in labels.iter().enumerate() {
            members[l].push(c);
        }
        Self::from_members(labels.len(), members)
    }

    pub fn singletons(n_classes: usize) -> Self {
        Self {
            cluster_of: (0..n_classes).collect(),
            members: (0..n_classes).map(|c| vec![c]).collect(),
        }
    }

    pub fn single(n_classes: usize) -> Self {
        Self {
            cluster_of: vec![0; n_classes],
            members: vec![(0..n_classes).collect()],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn cluster_of(&self, class: usize) -> Result<usize> {
        self.cluster_of.get(class).copied().ok_or(Error::LabelOutOfRange {
            label: class,
            n_classes: self.cluster_of.len(),
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.members
    }
}

/// Per-class empirical quantiles at `levels`.
pub fn quantile_embed(per_class_scores: &[Vec<f64>], levels: &[f64]) -> Result<Vec<Vec<f64>>> {
    let empty: Vec<String> = (0..per_class_scores.len())
        .filter(|&c| per_class_scores[c].is_empty())
        .map(|c| (c + 1).to_string())
        .collect();
    if !empty.is_empty() {
        return Err(Error::invalid(format!("classes without scores: {}", empty.join(","))));
    }
    per_class_scores
        .iter()
        .map(|s| {
            let sorted = SortedSample::new(s.clone())?;
            levels.iter().map(|&l| sorted.quantile(l)).collect()
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Lloyd's k-means from k-means++ seeding. Points are classes; empty
/// clusters keep their previous center and are dropped from the result.
pub fn kmeans(points: &[Vec<f64>], m: usize, rng: &mut SeededRng, max_iter: usize, tol: f64) -> Result<ClusterMap> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("cannot form {m} clusters from {n} points")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("points have different dimensions"));
    }
    let mut chosen = vec![rng.index(n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; m];
        let mut counts = vec![0usize; m];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut shift: f64 = 0.0;
        for j in 0..m {
            if counts[j] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sq_dist(&next, &centers[j]).sqrt());
            centers[j] = next;
        }
        assign = points.iter().map(|p| nearest(p, &centers)).collect();
        if shift < tol {
            break;
        }
    }
    ClusterMap::from_assignment(&assign)
}

/// Three-band clustering: classes with fewer than `min_obs` scores share a
/// rest cluster, classes with at least `size_threshold` stay alone and the
/// rest are grouped by k-means on their quantile embeddings (with `m`
/// capped at the number of such classes).
pub fn composite_cluster(
    per_class_scores: &[Vec<f64>],
    levels: &[f64],
    size_threshold: usize,
    min_obs: usize,
    m: usize,
    rng: &mut SeededRng,
) -> Result<ClusterMap> {
    let k = per_class_scores.len();
    let mut rest = Vec::new();
    let mut middle = Vec::new();
    let mut clusters = Vec::new();
    for (c, s) in per_class_scores.iter().enumerate() {
        let count = s.len();
        if count < min_obs || count == 0 {
            rest.push(c);
        } else if count < size_threshold {
            middle.push(c);
        } else {
            clusters.push(vec![c]);
        }
    }
    if !middle.is_empty() {
        let scores: Vec<Vec<f64>> = middle.iter().map(|&c| per_class_scores[c].clone()).collect();
        let embeddings = quantile_embed(&scores, levels)?;
        let groups = kmeans(&embeddings, m.clamp(1, middle.len()), rng, 100, 1e-9)?;
        for g in groups.clusters() {
            clusters.push(g.iter().map(|&i| middle[i]).collect());
        }
    }
    clusters.push(rest);
    ClusterMap::from_members(k, clusters)
}

/// Climbs from each uncovered class's leaf until the node holds at least
/// `threshold` points (or is the root). Earlier clusters inside the chosen
/// node are absorbed, so the result partitions the classes by nodes.
pub fn size_threshold_cluster(hier: &Hierarchy, counts: &[usize], threshold: usize) -> Result<ClusterMap> {
    let k = hier.n_classes();
    if counts.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: counts.len(),
        });
    }
    let total = |node: usize| -> usize { hier.members(node).iter().map(|&c| counts[c]).sum() };
    let mut chosen: Vec<usize> = Vec::new();
    let mut covered = vec![false; k];
    for c in 0..k {
        if covered[c] {
            continue;
        }
        let mut node = hier.leaf(c)?;
        while total(node) < threshold {
            match hier.parent(node) {
                Some(p) => node = p,
                None => break,
            }
        }
        let inside = hier.members(node);
        chosen.retain(|&other| !hier.members(other).iter().all(|m| inside.binary_search(m).is_ok()));
        for &m in inside {
            covered[m] = true;
        }
        chosen.push(node);
    }
    ClusterMap::from_members(k, chosen.iter().map(|&n| hier.members(n).to_vec()).collect())
}

/// Mondrian calibration over the clusters of a class partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterwiseCalibration {
    map: ClusterMap,
    inner: MondrianCalibration,
}

impl ClusterwiseCalibration {
    pub fn fit(map: ClusterMap, scores: &[f64], classes: &[usize], alpha: f64) -> Result<Self> {
        Self::fit_with(map, scores, classes, alpha, true)
    }

    pub fn fit_with(map: ClusterMap, scores: &[f64], classes: &[usize], alpha: f64, strict: bool) -> Result<Self> {
        let clusters = classes
            .iter()
            .map(|&c| map.cluster_of(c))
            .collect::<Result<Vec<_>>>()?;
        let inner = mondrian_fit_with(scores, &clusters, map.n_clusters(), alpha, strict)?;
        Ok(Self { map, inner })
    }

    pub fn map(&self) -> &ClusterMap {
        &self.map
    }

    pub fn mondrian(&self) -> &MondrianCalibration {
        &self.inner
    }

    /// Critical score of the cluster holding `class`.
    pub fn critical_score(&self, class: usize) -> Result<f64> {
        self.inner.critical_score(self.map.cluster_of(class)?)
    }

    /// Label set where label `y` is judged against the cluster of class `y`.
    pub fn predict_set(&self, label_scores: &[f64]) -> Result<PredictionSet> {
        let class_of_label = (0..label_scores.len())
            .map(|y| self.map.cluster_of(y))
            .collect::<Result<Vec<_>>>()?;
        mondrian_predict_set(label_scores, &class_of_label, &self.inner)
    }

    pub fn predict_band(&self, out: &RegressionOutputs, class: usize, kind: RegressionScore) -> Result<ConformalBand> {
        mondrian_predict_band(out, self.map.cluster_of(class)?, &self.inner, kind)
    }
}

/// Scores of the calibration rows whose descriptor is at least as similar to
/// `query` as the `top_k`-th most similar distinct descriptor. Ties at that
/// similarity are all kept.
pub fn similarity_calibration<T: PartialEq>(
    scores: &[f64],
    descriptors: &[T],
    query: &T,
    sim: impl Fn(&T, &T) -> f64,
    top_k: usize,
) -> Result<Vec<f64>> {
    let keep = similarity_mask(descriptors, query, &sim, top_k)?;
    select(scores, &keep)
}

/// Two-sided variant: instance and target similarities must both reach
/// their own top-`k` / top-`l` thresholds.
#[allow(clippy::too_many_arguments)]
pub fn similarity_calibration_two_sided<X: PartialEq, T: PartialEq>(
    scores: &[f64],
    instances: &[X],
    targets: &[T],
    query: (&X, &T),
    sim_x: impl Fn(&X, &X) -> f64,
    sim_t: impl Fn(&T, &T) -> f64,
    top_k: usize,
    top_l: usize,
) -> Result<Vec<f64>> {
    if instances.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: instances.len(),
            actual: targets.len(),
        });
    }
    let a = similarity_mask(instances, query.0, &sim_x, top_k)?;
    let b = similarity_mask(targets, query.1, &sim_t, top_l)?;
    let both: Vec<bool> = a.iter().zip(&b).map(|(x, y)| *x && *y).collect();
    select(scores, &both)
}

fn select(scores: &[f64], keep: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != keep.len() {
        return Err(Error::LengthMismatch {
            expected: keep.len(),
            actual: scores.len(),
        });
    }
    Ok(scores.iter().zip(keep).filter(|(_, &k)| k).map(|(&s, _)| s).collect())
}

fn similarity_mask<T: PartialEq>(descriptors: &[T], query: &T, sim: &impl Fn(&T, &T) -> f64, top_k: usize) -> Result<Vec<bool>> {
    if descriptors.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut distinct: Vec<&T> = Vec::new();
    for d in descriptors {
        if !distinct.contains(&d) {
            distinct.push(d);
        }
    }
    if top_k == 0 || top_k > distinct.len() {
        return Err(Error::invalid(format!(
            "top_k {top_k} outside 1..={} distinct descriptors",
            distinct.len()
        )));
    }
    let mut sims: Vec<f64> = distinct.iter().map(|d| sim(query, d)).collect();
    if let Some(v) = sims.iter().find(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            context: "similarity".into(),
            value: *v,
        });
    }
    sims.sort_by(|a, b| b.total_cmp(a));
    let threshold = sims[top_k - 1];
    Ok(descriptors.iter().map(|d| sim(query, d) >= threshold).collect())
}
