//! Movable-object clustering per time token, cross-frame pairing, the motion
//! indicator, and consolidation of moving objects into one reference frame.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{ClassId, GaussianField, SemanticTaxonomy};
use crate::spatial::{centroid, radius_components};

/// Components smaller than this are treated as noise.
pub const MIN_CLUSTER_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub class: ClassId,
    pub frame: u32,
    /// Indices into the field, ascending.
    pub members: Vec<usize>,
    pub centroid: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Static,
    Dynamic,
}

impl Motion {
    pub fn as_str(self) -> &'static str {
        match self {
            Motion::Static => "static",
            Motion::Dynamic => "dynamic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicConfig {
    /// Motion threshold on the mean cross-frame member distance, meters.
    pub rho: f64,
    /// Largest centroid distance at which two clusters may be paired, meters.
    pub pair_gate: f64,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        Self { rho: 4.0, pair_gate: 12.0 }
    }
}

impl DynamicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.pair_gate > 0.0) {
            return Err(Error::Config(format!("invalid dynamic config {self:?}")));
        }
        Ok(())
    }
}

/// Radius-graph components of the movable-class Gaussians carrying token `t`,
/// per class, dropping components below [`MIN_CLUSTER_SIZE`].
pub fn cluster_movable(field: &GaussianField, t: u32, taxonomy: &SemanticTaxonomy) -> Vec<Cluster> {
    let mut out = Vec::new();
    for policy in taxonomy.classes().iter().filter(|p| p.movable) {
        let idx: Vec<usize> = (0..field.len())
            .filter(|&i| {
                let g = &field.gaussians[i];
                g.frame == t && g.class() == policy.id
            })
            .collect();
        let points: Vec<Vector3<f64>> = idx.iter().map(|&i| field.gaussians[i].center).collect();
        for comp in radius_components(&points, policy.cluster_radius) {
            if comp.len() < MIN_CLUSTER_SIZE {
                continue;
            }
            let members: Vec<usize> = comp.iter().map(|&c| idx[c]).collect();
            out.push(Cluster {
                class: policy.id,
                frame: t,
                centroid: centroid(comp.iter().map(|&c| &points[c])),
                members,
            });
        }
    }
    out
}

/// Greedy matching of same-class clusters by increasing centroid distance,
/// gated at `gate`. Returns index pairs into the two lists.
pub fn pair_clusters(a: &[Cluster], b: &[Cluster], gate: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, ca) in a.iter().enumerate() {
        for (j, cb) in b.iter().enumerate() {
            let d = (ca.centroid - cb.centroid).norm();
            if ca.class == cb.class && d <= gate {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Mean distance over all cross-frame member pairs, and the motion decision
/// (dynamic iff that mean exceeds `rho`).
pub fn motion_indicator(field: &GaussianField, a: &Cluster, b: &Cluster, rho: f64) -> (f64, Motion) {
    let mut sum = 0.0;
    for &i in &a.members {
        for &j in &b.members {
            sum += (field.gaussians[i].center - field.gaussians[j].center).norm();
        }
    }
    let d = sum / (a.members.len() * b.members.len()) as f64;
    (d, if d > rho { Motion::Dynamic } else { Motion::Static })
}

/// A paired and classified cluster couple, by index into a cluster list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDecision {
    pub from: usize,
    pub to: usize,
    pub mean_distance: f64,
    pub motion: Motion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub frame: u32,
    pub members: Vec<usize>,
    pub centroid: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTrack {
    pub id: usize,
    pub class: ClassId,
    /// Strictly increasing frames.
    pub entries: Vec<TrackEntry>,
    /// Mean of the pair indicators along the chain.
    pub mean_distance: f64,
    pub motion: Motion,
}

/// Chain the pairs into tracks, flag members of dynamic tracks (`v = 1`) and
/// translate each frame's members so its centroid lands on the earliest
/// frame's centroid. Static tracks get `v = 0` and stay in place.
///
/// Gaussians live in world coordinates, so no further ego-motion transform is
/// applied here.
pub fn aggregate_tracks(
    field: &GaussianField,
    clusters: &[Cluster],
    pairs: &[PairDecision],
) -> Result<(GaussianField, Vec<ClusterTrack>)> {
    let n = clusters.len();
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    for (k, p) in pairs.iter().enumerate() {
        if p.from >= n || p.to >= n {
            return Err(Error::Structural(format!("pair {k} refers to a missing cluster")));
        }
        let (a, b) = (&clusters[p.from], &clusters[p.to]);
        if a.class != b.class || a.frame >= b.frame {
            return Err(Error::Structural(format!(
                "pair {k} links clusters of classes {}/{} at frames {}/{}",
                a.class, b.class, a.frame, b.frame
            )));
        }
        if next[p.from].replace(p.to).is_some() || prev[p.to].replace(p.from).is_some() {
            return Err(Error::Structural(format!("cluster in pair {k} belongs to two tracks")));
        }
    }
    let mut owner: Vec<Option<usize>> = vec![None; field.len()];
    let mut out = field.clone();
    let mut tracks = Vec::new();
    for start in (0..n).filter(|&c| prev[c].is_none() && next[c].is_some()) {
        let mut chain = vec![start];
        while let Some(c) = next[*chain.last().unwrap()] {
            chain.push(c);
        }
        let links: Vec<&PairDecision> = chain.windows(2).map(|w| pairs.iter().find(|p| p.from == w[0] && p.to == w[1]).unwrap()).collect();
        let motion = if links.iter().any(|p| p.motion == Motion::Dynamic) { Motion::Dynamic } else { Motion::Static };
        let mean_distance = links.iter().map(|p| p.mean_distance).sum::<f64>() / links.len() as f64;
        let id = tracks.len();
        let reference = clusters[start].centroid;
        let mut entries = Vec::new();
        for &c in &chain {
            let cl = &clusters[c];
            let shift = reference - cl.centroid;
            for &m in &cl.members {
                if owner[m].replace(id).is_some() {
                    return Err(Error::Structural(format!("gaussian {m} belongs to two tracks")));
                }
                let g = &mut out.gaussians[m];
                g.dynamic = motion == Motion::Dynamic;
                if g.dynamic {
                    g.center += shift;
                }
            }
            entries.push(TrackEntry { frame: cl.frame, members: cl.members.clone(), centroid: cl.centroid });
        }
        tracks.push(ClusterTrack { id, class: clusters[start].class, entries, mean_distance, motion });
    }
    Ok((out, tracks))
}

/// Full stage: cluster every time token present among movable Gaussians, pair
/// consecutive tokens, classify and aggregate.
pub fn cluster_dynamic(field: &GaussianField, config: &DynamicConfig) -> Result<(GaussianField, Vec<ClusterTrack>)> {
    config.validate()?;
    let tax = field.taxonomy.clone();
    let tokens: Vec<u32> = field
        .gaussians
        .iter()
        .filter(|g| tax.is_movable(g.class()))
        .map(|g| g.frame)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let per_frame: Vec<Vec<Cluster>> = tokens.par_iter().map(|&t| cluster_movable(field, t, &tax)).collect();
    let mut offsets = Vec::with_capacity(per_frame.len());
    let mut clusters = Vec::new();
    for f in &per_frame {
        offsets.push(clusters.len());
        clusters.extend(f.iter().cloned());
    }
    let mut decisions = Vec::new();
    for w in 0..per_frame.len().saturating_sub(1) {
        for (i, j) in pair_clusters(&per_frame[w], &per_frame[w + 1], config.pair_gate) {
            let (d, motion) = motion_indicator(field, &per_frame[w][i], &per_frame[w + 1][j], config.rho);
            decisions.push(PairDecision { from: offsets[w] + i, to: offsets[w + 1] + j, mean_distance: d, motion });
        }
    }
    aggregate_tracks(field, &clusters, &decisions)
}

pub fn tracks_csv(tracks: &[ClusterTrack]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["track_id", "class", "frames", "mean_D", "classification"]).expect("in-memory write");
    for t in tracks {
        let frames: Vec<String> = t.entries.iter().map(|e| e.frame.to_string()).collect();
        w.write_record([
            t.id.to_string(),
            t.class.to_string(),
            frames.join(";"),
            t.mean_distance.to_string(),
            t.motion.as_str().to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
}

pub fn write_tracks(path: &Path, tracks: &[ClusterTrack]) -> Result<()> {
    std::fs::write(path, tracks_csv(tracks)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::scene::{test_policy, Gaussian};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn taxonomy() -> Arc<SemanticTaxonomy> {
        let mut car = test_policy(0, "car");
        car.movable = true;
        let mut ped = test_policy(1, "pedestrian");
        ped.movable = true;
        Arc::new(SemanticTaxonomy::new(vec![car, ped, test_policy(2, "road")], None).unwrap())
    }

    fn g(p: Vector3<f64>, class: usize, t: u32) -> Gaussian {
        let mut logits = vec![0.0; 3];
        logits[class] = 3.0;
        Gaussian::new(p, Vector3::repeat(0.1), 0.8, logits).with_frame(t)
    }

    fn blob(rng: &mut SplitMix64, c: Vector3<f64>, n: usize, spread: f64, class: usize, t: u32) -> Vec<Gaussian> {
        (0..n)
            .map(|_| g(c + Vector3::new(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-spread, spread)), class, t))
            .collect()
    }

    #[test]
    fn one_tight_group_is_one_cluster() {
        let mut rng = SplitMix64::new(1);
        let f = GaussianField::with_gaussians(taxonomy(), blob(&mut rng, Vector3::zeros(), 10, 0.14, 0, 0));
        let c = cluster_movable(&f, 0, &f.taxonomy);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members.len(), 10);
    }

    #[test]
    fn distant_groups_and_noise() {
        let mut rng = SplitMix64::new(2);
        let mut gs = blob(&mut rng, Vector3::zeros(), 5, 0.2, 0, 0);
        gs.extend(blob(&mut rng, Vector3::new(10.0, 0.0, 0.0), 5, 0.2, 0, 0));
        gs.push(g(Vector3::new(30.0, 0.0, 0.0), 0, 0));
        gs.push(g(Vector3::new(-30.0, 0.0, 0.0), 0, 0));
        // Other token and static class are ignored.
        gs.extend(blob(&mut rng, Vector3::zeros(), 5, 0.2, 0, 1));
        gs.extend(blob(&mut rng, Vector3::zeros(), 5, 0.2, 2, 0));
        let f = GaussianField::with_gaussians(taxonomy(), gs);
        let c = cluster_movable(&f, 0, &f.taxonomy);
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.members.len() == 5));
    }

    #[test]
    fn two_isolated_gaussians_give_no_cluster() {
        let f = GaussianField::with_gaussians(
            taxonomy(),
            vec![g(Vector3::zeros(), 0, 0), g(Vector3::new(5.0, 0.0, 0.0), 0, 0)],
        );
        assert!(cluster_movable(&f, 0, &f.taxonomy).is_empty());
    }

    fn cluster(class: ClassId, c: [f64; 3]) -> Cluster {
        Cluster { class, frame: 0, members: vec![], centroid: c.into() }
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair_clusters(&[cluster(0, [0.0; 3])], &[cluster(0, [1.0, 0.0, 0.0])], 12.0), vec![(0, 0)]);
        assert!(pair_clusters(&[cluster(0, [0.0; 3])], &[cluster(1, [1.0, 0.0, 0.0])], 12.0).is_empty());
        assert!(pair_clusters(&[cluster(0, [0.0; 3])], &[cluster(0, [13.0, 0.0, 0.0])], 12.0).is_empty());
        let a = [cluster(0, [0.0; 3]), cluster(0, [5.0, 0.0, 0.0])];
        let b = [cluster(0, [5.5, 0.0, 0.0]), cluster(0, [0.4, 0.0, 0.0])];
        assert_eq!(pair_clusters(&a, &b, 12.0), vec![(0, 1), (1, 0)]);
    }

    /// Minimum total distance over all maximum-cardinality matchings.
    fn brute_force_cost(a: &[Cluster], b: &[Cluster], gate: f64) -> (usize, f64) {
        fn rec(i: usize, a: &[Cluster], b: &[Cluster], used: &mut Vec<bool>, gate: f64) -> (usize, f64) {
            if i == a.len() {
                return (0, 0.0);
            }
            let mut best = rec(i + 1, a, b, used, gate);
            for j in 0..b.len() {
                let d = (a[i].centroid - b[j].centroid).norm();
                if !used[j] && a[i].class == b[j].class && d <= gate {
                    used[j] = true;
                    let (n, c) = rec(i + 1, a, b, used, gate);
                    used[j] = false;
                    if n + 1 > best.0 || (n + 1 == best.0 && c + d < best.1) {
                        best = (n + 1, c + d);
                    }
                }
            }
            best
        }
        rec(0, a, b, &mut vec![false; b.len()], gate)
    }

    proptest! {
        #[test]
        fn well_separated_greedy_matches_optimal(seed in any::<u64>(), na in 1usize..=4, nb in 1usize..=4) {
            // Objects far apart relative to their frame-to-frame motion.
            let mut rng = SplitMix64::new(seed);
            let sites: Vec<Vector3<f64>> = (0..4).map(|k| Vector3::new(20.0 * k as f64, rng.uniform(-1.0, 1.0), 0.0)).collect();
            let jitter = |rng: &mut SplitMix64, p: Vector3<f64>| p + Vector3::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0);
            let a: Vec<Cluster> = (0..na).map(|k| Cluster { centroid: jitter(&mut rng, sites[k]), ..cluster(0, [0.0; 3]) }).collect();
            let b: Vec<Cluster> = (0..nb).map(|k| Cluster { centroid: jitter(&mut rng, sites[k]), ..cluster(0, [0.0; 3]) }).collect();
            let pairs = pair_clusters(&a, &b, 12.0);
            let cost: f64 = pairs.iter().map(|&(i, j)| (a[i].centroid - b[j].centroid).norm()).sum();
            let (n, best) = brute_force_cost(&a, &b, 12.0);
            prop_assert_eq!(pairs.len(), n);
            prop_assert!((cost - best).abs() < 1e-9);
            let mut seen_a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let mut seen_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            seen_a.sort();
            seen_a.dedup();
            seen_b.sort();
            seen_b.dedup();
            prop_assert_eq!(seen_a.len(), pairs.len());
            prop_assert_eq!(seen_b.len(), pairs.len());
        }
    }

    fn members_at(field: &mut Vec<Gaussian>, pts: &[[f64; 3]], t: u32) -> Cluster {
        let start = field.len();
        for p in pts {
            field.push(g(Vector3::from(*p), 0, t));
        }
        let members: Vec<usize> = (start..field.len()).collect();
        Cluster {
            class: 0,
            frame: t,
            centroid: centroid(field[start..].iter().map(|g| &g.center)),
            members,
        }
    }

    #[test]
    fn indicator_examples() {
        let mut gs = Vec::new();
        let a = members_at(&mut gs, &[[0.0; 3], [0.3, 0.0, 0.0]], 0);
        let b = members_at(&mut gs, &[[0.0; 3], [0.3, 0.0, 0.0]], 1);
        let c = members_at(&mut gs, &[[5.0, 0.0, 0.0], [5.3, 0.0, 0.0]], 1);
        let f = GaussianField::with_gaussians(taxonomy(), gs);
        let (d, m) = motion_indicator(&f, &a, &b, 4.0);
        assert!((d - 0.15).abs() < 1e-12);
        assert_eq!(m, Motion::Static);
        let (d, m) = motion_indicator(&f, &a, &c, 4.0);
        assert!((d - 5.0).abs() < 1e-12);
        assert_eq!(m, Motion::Dynamic);
        assert_eq!(motion_indicator(&f, &a, &c, 5.0).1, Motion::Static);
    }

    fn moving_field(velocity: f64, frames: u32) -> GaussianField {
        let mut rng = SplitMix64::new(9);
        let base = blob(&mut rng, Vector3::new(2.0, 1.0, 0.5), 8, 0.2, 0, 0);
        let mut gs = Vec::new();
        for t in 0..frames {
            gs.extend(base.iter().map(|x| {
                let mut y = x.clone().with_frame(t);
                y.center.x += velocity * t as f64;
                y
            }));
        }
        gs.extend(blob(&mut rng, Vector3::new(0.0, 0.0, -1.0), 6, 2.0, 2, 0));
        GaussianField::with_gaussians(taxonomy(), gs)
    }

    #[test]
    fn dynamic_track_consolidates_onto_frame_zero() {
        let f = moving_field(5.0, 3);
        let (out, tracks) = cluster_dynamic(&f, &DynamicConfig::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].motion, Motion::Dynamic);
        assert_eq!(tracks[0].entries.iter().map(|e| e.frame).collect::<Vec<_>>(), vec![0, 1, 2]);
        for t in 0..3usize {
            for k in 0..8 {
                let moved = &out.gaussians[t * 8 + k];
                assert!(moved.dynamic);
                assert!((moved.center - f.gaussians[k].center).norm() < 1e-9);
            }
        }
        // Background untouched.
        assert_eq!(out.gaussians[24..], f.gaussians[24..]);
    }

    #[test]
    fn parked_object_is_static_and_unchanged() {
        let f = moving_field(0.0, 3);
        let (out, tracks) = cluster_dynamic(&f, &DynamicConfig::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].motion, Motion::Static);
        assert_eq!(out, f);
    }

    #[test]
    fn no_movable_gaussians_is_identity() {
        let mut rng = SplitMix64::new(3);
        let f = GaussianField::with_gaussians(taxonomy(), blob(&mut rng, Vector3::zeros(), 10, 1.0, 2, 0));
        let (out, tracks) = cluster_dynamic(&f, &DynamicConfig::default()).unwrap();
        assert!(tracks.is_empty());
        assert_eq!(out, f);
    }

    #[test]
    fn shared_cluster_is_structural_error() {
        let f = moving_field(1.0, 3);
        let clusters: Vec<Cluster> = (0..3).flat_map(|t| cluster_movable(&f, t, &f.taxonomy)).collect();
        let pd = |from, to| PairDecision { from, to, mean_distance: 1.0, motion: Motion::Static };
        let err = aggregate_tracks(&f, &clusters, &[pd(0, 1), pd(0, 2)]).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn rigid_transform_keeps_classification() {
        let f = moving_field(1.5, 3);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1);
        let shift = Vector3::new(40.0, -7.0, 2.0);
        let mut moved = f.clone();
        for g in &mut moved.gaussians {
            g.center = rot * g.center + shift;
        }
        let cfg = DynamicConfig { rho: 1.0, ..Default::default() };
        let (_, a) = cluster_dynamic(&f, &cfg).unwrap();
        let (_, b) = cluster_dynamic(&moved, &cfg).unwrap();
        assert_eq!(a.iter().map(|t| t.motion).collect::<Vec<_>>(), b.iter().map(|t| t.motion).collect::<Vec<_>>());
    }

    #[test]
    fn csv_report() {
        let f = moving_field(5.0, 2);
        let (_, tracks) = cluster_dynamic(&f, &DynamicConfig::default()).unwrap();
        let text = tracks_csv(&tracks);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("track_id,class,frames,mean_D,classification"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("0,0,0;1,") && row.ends_with(",dynamic"), "{row}");
    }
}
