//! Cluster merging and plane / surface detection.
//!
//! Flat clusters are linked pairwise when four judgments all pass: aligned
//! normals, small normal-direction offset, a small gap between three-sigma
//! ellipsoids, and actual point adjacency. Connected components of that graph
//! are concatenated and classified as planes or curved surfaces by thinness.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::cloud::{compute_moments, Moments, PipelineConfig, PointMatrix};
use crate::cluster::ClusterSet;
use crate::error::Result;

/// Normal alignment: passes when the normals are within `merge_angle` of
/// parallel or antiparallel.
pub fn judge_angle(mi: &Moments, mj: &Moments, merge_angle: f64) -> bool {
    mi.normal().dot(&mj.normal()).abs() > merge_angle.cos()
}

/// Mean offset along the two normals, averaged, must stay below `max_dist`.
pub fn judge_normal_distance(mi: &Moments, mj: &Moments, max_dist: f64) -> bool {
    let delta = mi.mean - mj.mean;
    let li = mi.normal().dot(&delta).abs();
    let lj = mj.normal().dot(&delta).abs();
    (li + lj) / 2.0 < max_dist
}

/// Center distance minus both three-sigma extents along the center line must
/// stay below five voxels. Extents use componentwise absolute projections so
/// they are nonnegative.
pub fn judge_gaussian_gap(mi: &Moments, mj: &Moments, voxel_size: f64) -> bool {
    let delta = mi.mean - mj.mean;
    let dist = delta.norm();
    if dist == 0.0 {
        return true;
    }
    let dir = delta / dist;
    let extent = |m: &Moments| {
        3.0 * (0..3)
            .map(|k| m.eigenvalues[k].sqrt() * m.axis(k).dot(&dir).abs())
            .sum::<f64>()
    };
    dist - extent(mi) - extent(mj) < 5.0 * voxel_size
}

/// True when some pair of points across the clusters is closer than three
/// voxels. Uses a uniform hash grid; equal to the brute-force double loop.
pub fn judge_point_adjacency(pi: &PointMatrix, pj: &PointMatrix, voxel_size: f64) -> bool {
    let radius = 3.0 * voxel_size;
    let (small, large) = if pi.len() <= pj.len() { (pi, pj) } else { (pj, pi) };
    let key = |p: &Vector3<f64>| {
        (
            (p.x / radius).floor() as i64,
            (p.y / radius).floor() as i64,
            (p.z / radius).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (idx, p) in large.iter().enumerate() {
        grid.entry(key(p)).or_default().push(idx);
    }
    let r2 = radius * radius;
    for p in small.iter() {
        let (cx, cy, cz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        if bucket
                            .iter()
                            .any(|&idx| (large[idx] - p).norm_squared() < r2)
                        {
                            return true;
                        }
                    }
                }
            }
        }
    }
    false
}

/// Adjacency over the flat clusters: nodes index into the flat list, edges
/// are pairs with all four judgments passing.
#[derive(Clone, Debug)]
pub struct MergeGraph {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Evaluates the pairwise judgment chain, cheapest first. When
/// `use_gap_prefilter` is false the ellipsoid-gap test is skipped so tests
/// can verify it never changes the outcome.
pub fn build_merge_graph(
    flats: &[(&PointMatrix, &Moments)],
    cfg: &PipelineConfig,
    use_gap_prefilter: bool,
) -> MergeGraph {
    let mut edges = Vec::new();
    for i in 0..flats.len() {
        for j in (i + 1)..flats.len() {
            let (pi, mi) = flats[i];
            let (pj, mj) = flats[j];
            if !judge_angle(mi, mj, cfg.merge_angle) {
                continue;
            }
            if !judge_normal_distance(mi, mj, cfg.merge_distance) {
                continue;
            }
            if use_gap_prefilter && !judge_gaussian_gap(mi, mj, cfg.voxel_size) {
                continue;
            }
            if judge_point_adjacency(pi, pj, cfg.voxel_size) {
                edges.push((i, j));
            }
        }
    }
    MergeGraph {
        nodes: flats.len(),
        edges,
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components ordered by smallest member index; members ascending.
pub fn connected_components(graph: &MergeGraph) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(graph.nodes);
    for &(a, b) in &graph.edges {
        uf.union(a, b);
    }
    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    for node in 0..graph.nodes {
        let root = uf.find(node);
        by_root.entry(root).or_default().push(node);
    }
    let mut components: Vec<Vec<usize>> = by_root.into_values().collect();
    for c in &mut components {
        c.sort_unstable();
    }
    components.sort_by_key(|c| c[0]);
    components
}

/// A Gaussian region kept as mean plus covariance.
#[derive(Clone, Debug)]
pub struct GaussianComponent {
    pub moments: Moments,
    pub point_count: usize,
}

/// Final split of the cluster set into Gaussian regions, merged planes and
/// merged curved surfaces.
#[derive(Clone, Debug)]
pub struct DetectionResult {
    pub gaussians: Vec<GaussianComponent>,
    pub planes: Vec<PointMatrix>,
    pub surfaces: Vec<PointMatrix>,
}

impl DetectionResult {
    pub fn total_points(&self) -> usize {
        self.gaussians.iter().map(|g| g.point_count).sum::<usize>()
            + self.planes.iter().map(|p| p.len()).sum::<usize>()
            + self.surfaces.iter().map(|s| s.len()).sum::<usize>()
    }
}

/// Splits terminal clusters into Gaussians and flats, merges flats over the
/// judgment graph, refits each merged component and classifies it by
/// thinness. Components too degenerate to carry a plane frame (fewer than
/// three points or a collinear spread) are kept as Gaussians.
pub fn detect(clusters: &ClusterSet, cfg: &PipelineConfig) -> Result<DetectionResult> {
    let mut gaussians = Vec::new();
    let mut flats: Vec<(&PointMatrix, &Moments)> = Vec::new();
    for entry in &clusters.clusters {
        if entry.flat {
            flats.push((&entry.points, &entry.moments));
        } else {
            gaussians.push(GaussianComponent {
                moments: entry.moments,
                point_count: entry.points.len(),
            });
        }
    }

    let graph = build_merge_graph(&flats, cfg, true);
    let mut planes = Vec::new();
    let mut surfaces = Vec::new();
    for component in connected_components(&graph) {
        let mut merged = Vec::new();
        for &idx in &component {
            merged.extend_from_slice(flats[idx].0.points());
        }
        let merged = PointMatrix::from_valid(merged);
        let m = compute_moments(&merged)?;
        let degenerate = merged.len() < 3 || m.eigenvalues[1] <= m.eigenvalues[0] * 1e-12;
        if degenerate {
            gaussians.push(GaussianComponent {
                moments: m,
                point_count: merged.len(),
            });
        } else if 6.0 * m.eigenvalues[2].sqrt() < cfg.voxel_size {
            planes.push(merged);
        } else {
            surfaces.push(merged);
        }
    }

    Ok(DetectionResult {
        gaussians,
        planes,
        surfaces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::hierarchical_cluster;
    use nalgebra::Matrix3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iso_moments(mean: Vector3<f64>, lambda: f64) -> Moments {
        Moments {
            mean,
            covariance: Matrix3::identity() * lambda,
            eigenvalues: Vector3::new(lambda, lambda, lambda),
            eigenvectors: Matrix3::identity(),
        }
    }

    fn plane_moments(mean: Vector3<f64>, normal_axis: usize) -> Moments {
        let mut vals = Vector3::new(1.0, 1.0, 1.0);
        vals[normal_axis] = 0.0;
        let (v0, v1, v2) = match normal_axis {
            0 => (Vector3::y(), Vector3::z(), Vector3::x()),
            1 => (Vector3::x(), Vector3::z(), Vector3::y()),
            _ => (Vector3::x(), Vector3::y(), Vector3::z()),
        };
        Moments {
            mean,
            covariance: Matrix3::from_diagonal(&vals),
            eigenvalues: Vector3::new(1.0, 1.0, 0.0),
            eigenvectors: Matrix3::from_columns(&[v0, v1, v2]),
        }
    }

    #[test]
    fn angle_identical_and_antiparallel() {
        let a = plane_moments(Vector3::zeros(), 2);
        let mut b = a;
        assert!(judge_angle(&a, &b, 15.0_f64.to_radians()));
        b.eigenvectors = Matrix3::from_columns(&[
            Vector3::x(),
            -Vector3::y(),
            -Vector3::z(),
        ]);
        assert!(judge_angle(&a, &b, 15.0_f64.to_radians()));
    }

    #[test]
    fn angle_20_degrees_apart_fails_at_15() {
        let a = plane_moments(Vector3::zeros(), 2);
        let theta = 20.0_f64.to_radians();
        let mut b = a;
        b.eigenvectors = Matrix3::from_columns(&[
            Vector3::x(),
            Vector3::new(0.0, theta.cos(), -theta.sin()),
            Vector3::new(0.0, theta.sin(), theta.cos()),
        ]);
        assert!(!judge_angle(&a, &b, 15.0_f64.to_radians()));
    }

    #[test]
    fn angle_at_exact_threshold_fails() {
        let theta = 60.0_f64.to_radians();
        let c = theta.cos();
        let a = plane_moments(Vector3::zeros(), 0);
        let mut b = a;
        // Normal constructed so the dot product is bit-exactly cos(theta).
        b.eigenvectors = Matrix3::from_columns(&[
            Vector3::new(-(1.0 - c * c).sqrt(), c, 0.0).normalize(),
            Vector3::z(),
            Vector3::new(c, (1.0 - c * c).sqrt(), 0.0),
        ]);
        assert_eq!(b.normal().dot(&a.normal()), c);
        assert!(!judge_angle(&a, &b, theta));
        assert!(judge_angle(&a, &b, theta * 1.001));
    }

    #[test]
    fn normal_distance_cases() {
        let l_min = 0.06;
        let a = plane_moments(Vector3::zeros(), 2);
        let coincident = plane_moments(Vector3::zeros(), 2);
        assert!(judge_normal_distance(&a, &coincident, l_min));

        let offset = plane_moments(Vector3::new(0.0, 0.0, 0.1), 2);
        assert!(!judge_normal_distance(&a, &offset, l_min));

        let tangential = plane_moments(Vector3::new(5.0, -2.0, 0.0), 2);
        assert!(judge_normal_distance(&a, &tangential, l_min));
    }

    #[test]
    fn normal_distance_at_exact_threshold_fails() {
        let l_min = 0.0625;
        let a = plane_moments(Vector3::zeros(), 2);
        let b = plane_moments(Vector3::new(0.0, 0.0, 0.0625), 2);
        assert!(!judge_normal_distance(&a, &b, l_min));
        assert!(judge_normal_distance(&a, &b, l_min + 1e-9));
    }

    #[test]
    fn gaussian_gap_spheres() {
        // Isotropic spheres have extent 3r exactly along any direction.
        let a_voxel = 0.25;
        let r = 0.5;
        let at = iso_moments(Vector3::new(6.0 * r + 5.0 * a_voxel, 0.0, 0.0), r * r);
        let near = iso_moments(Vector3::new(6.0 * r + 4.0 * a_voxel, 0.0, 0.0), r * r);
        let far = iso_moments(Vector3::new(6.0 * r + 6.0 * a_voxel, 0.0, 0.0), r * r);
        let origin = iso_moments(Vector3::zeros(), r * r);
        assert!(!judge_gaussian_gap(&origin, &at, a_voxel), "gap exactly 5a");
        assert!(judge_gaussian_gap(&origin, &near, a_voxel));
        assert!(!judge_gaussian_gap(&origin, &far, a_voxel));
        assert!(judge_gaussian_gap(&origin, &origin, a_voxel), "overlap");
    }

    #[test]
    fn point_adjacency_cases() {
        let a_voxel = 0.25;
        let shared = PointMatrix::new(vec![Vector3::zeros(), Vector3::new(9.0, 0.0, 0.0)]).unwrap();
        let other = PointMatrix::new(vec![Vector3::zeros(), Vector3::new(-9.0, 0.0, 0.0)]).unwrap();
        assert!(judge_point_adjacency(&shared, &other, a_voxel));

        let at = PointMatrix::new(vec![Vector3::new(0.75, 0.0, 0.0)]).unwrap();
        let origin = PointMatrix::new(vec![Vector3::zeros()]).unwrap();
        assert!(!judge_point_adjacency(&origin, &at, a_voxel), "exactly 3a");

        let near = PointMatrix::new(vec![Vector3::new(0.625, 0.0, 0.0)]).unwrap();
        assert!(judge_point_adjacency(&origin, &near, a_voxel), "2.5a");
    }

    #[test]
    fn adjacency_equals_brute_force_on_random_clusters() {
        let a_voxel = 0.03;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..40 {
            let spread = if case % 2 == 0 { 0.2 } else { 2.0 };
            let mk = |rng: &mut ChaCha8Rng, offset: f64| {
                PointMatrix::new(
                    (0..30)
                        .map(|_| {
                            Vector3::new(
                                rng.gen::<f64>() * spread + offset,
                                rng.gen::<f64>() * spread,
                                rng.gen::<f64>() * spread,
                            )
                        })
                        .collect(),
                )
                .unwrap()
            };
            let a = mk(&mut rng, 0.0);
            let offset = rng.gen::<f64>() * 0.4;
            let b = mk(&mut rng, offset);
            let brute = a.iter().any(|p| {
                b.iter()
                    .any(|q| (p - q).norm() < 3.0 * a_voxel)
            });
            assert_eq!(judge_point_adjacency(&a, &b, a_voxel), brute, "case {case}");
        }
    }

    fn patch(
        nx: usize,
        ny: usize,
        pitch: f64,
        origin: Vector3<f64>,
        rot_y_deg: f64,
        seed: u64,
    ) -> PointMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), rot_y_deg.to_radians());
        let mut pts = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                let jitter = Vector3::new(
                    (rng.gen::<f64>() - 0.5) * pitch * 0.2,
                    (rng.gen::<f64>() - 0.5) * pitch * 0.2,
                    0.0,
                );
                let local = Vector3::new(i as f64 * pitch, j as f64 * pitch, 0.0) + jitter;
                pts.push(origin + rot * local);
            }
        }
        PointMatrix::new(pts).unwrap()
    }

    fn flat_refs(entries: &[(PointMatrix, Moments)]) -> Vec<(&PointMatrix, &Moments)> {
        entries.iter().map(|(p, m)| (p, m)).collect()
    }

    fn with_moments(patches: Vec<PointMatrix>) -> Vec<(PointMatrix, Moments)> {
        patches
            .into_iter()
            .map(|p| {
                let m = compute_moments(&p).unwrap();
                (p, m)
            })
            .collect()
    }

    #[test]
    fn components_match_bfs_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..50 {
            let nodes = rng.gen_range(1..12);
            let mut edges = Vec::new();
            for i in 0..nodes {
                for j in (i + 1)..nodes {
                    if rng.gen::<f64>() < 0.25 {
                        edges.push((i, j));
                    }
                }
            }
            let graph = MergeGraph { nodes, edges };
            let got = connected_components(&graph);

            // Independent BFS.
            let mut adjacency = vec![Vec::new(); nodes];
            for &(a, b) in &graph.edges {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
            let mut seen = vec![false; nodes];
            let mut expected = Vec::new();
            for start in 0..nodes {
                if seen[start] {
                    continue;
                }
                let mut queue = vec![start];
                let mut comp = Vec::new();
                seen[start] = true;
                while let Some(v) = queue.pop() {
                    comp.push(v);
                    for &w in &adjacency[v] {
                        if !seen[w] {
                            seen[w] = true;
                            queue.push(w);
                        }
                    }
                }
                comp.sort_unstable();
                expected.push(comp);
            }
            expected.sort_by_key(|c| c[0]);
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn coplanar_halves_merge_into_one_plane() {
        let cfg = PipelineConfig::default();
        let left = patch(20, 20, 0.028, Vector3::zeros(), 0.0, 1);
        let right = patch(20, 20, 0.028, Vector3::new(20.0 * 0.028, 0.0, 0.0), 0.0, 2);
        let entries = with_moments(vec![left, right]);
        let flats = flat_refs(&entries);

        // Oracle: all four judgments pass for the pair.
        assert!(judge_angle(&entries[0].1, &entries[1].1, cfg.merge_angle));
        assert!(judge_normal_distance(&entries[0].1, &entries[1].1, cfg.merge_distance));
        assert!(judge_gaussian_gap(&entries[0].1, &entries[1].1, cfg.voxel_size));
        assert!(judge_point_adjacency(&entries[0].0, &entries[1].0, cfg.voxel_size));

        let graph = build_merge_graph(&flats, &cfg, true);
        assert_eq!(graph.edges, vec![(0, 1)]);
        let comps = connected_components(&graph);
        assert_eq!(comps.len(), 1);

        let mut merged = entries[0].0.points().to_vec();
        merged.extend_from_slice(entries[1].0.points());
        let merged = compute_moments(&PointMatrix::new(merged).unwrap()).unwrap();
        assert!(6.0 * merged.eigenvalues[2].sqrt() < cfg.voxel_size);
    }

    #[test]
    fn distant_parallel_patches_stay_separate() {
        let cfg = PipelineConfig::default();
        let a = patch(15, 15, 0.028, Vector3::zeros(), 0.0, 3);
        let b = patch(15, 15, 0.028, Vector3::new(0.0, 0.0, 2.0), 0.0, 4);
        let entries = with_moments(vec![a, b]);
        let graph = build_merge_graph(&flat_refs(&entries), &cfg, true);
        assert!(graph.edges.is_empty());
    }

    #[test]
    fn cylinder_strips_chain_into_one_surface() {
        let cfg = PipelineConfig::default();
        // Narrow flat strips around a cylinder of radius 1, 10 degrees apart.
        let r = 1.0;
        let strip_count = 9;
        let mut strips = Vec::new();
        for s in 0..strip_count {
            let theta0 = (s as f64) * 10.0_f64.to_radians();
            let mut pts = Vec::new();
            for a in 0..6 {
                for h in 0..40 {
                    let theta = theta0 + (a as f64 / 5.0 - 0.5) * 9.0_f64.to_radians();
                    pts.push(Vector3::new(
                        r * theta.sin(),
                        h as f64 * 0.025,
                        r * theta.cos(),
                    ));
                }
            }
            strips.push(PointMatrix::new(pts).unwrap());
        }
        let entries = with_moments(strips);
        let flats = flat_refs(&entries);
        let graph = build_merge_graph(&flats, &cfg, true);
        let comps = connected_components(&graph);
        assert_eq!(comps.len(), 1, "strip chain must be one component");

        // Chain connectivity: each consecutive pair is an edge.
        for s in 0..strip_count - 1 {
            assert!(graph.edges.contains(&(s, s + 1)), "edge {s}-{}", s + 1);
        }

        let mut merged = Vec::new();
        for (p, _) in &entries {
            merged.extend_from_slice(p.points());
        }
        let mm = compute_moments(&PointMatrix::new(merged).unwrap()).unwrap();
        assert!(
            6.0 * mm.eigenvalues[2].sqrt() >= cfg.voxel_size,
            "merged strips are curved, not thin"
        );
    }

    #[test]
    fn gap_prefilter_never_changes_edges_on_scenes() {
        let cfg = PipelineConfig::default();
        let scenes: Vec<Vec<PointMatrix>> = vec![
            vec![
                patch(12, 12, 0.028, Vector3::zeros(), 0.0, 5),
                patch(12, 12, 0.028, Vector3::new(0.35, 0.0, 0.0), 0.0, 6),
                patch(12, 12, 0.028, Vector3::new(0.0, 0.0, 1.0), 30.0, 7),
            ],
            vec![
                patch(10, 25, 0.028, Vector3::zeros(), 0.0, 8),
                patch(10, 25, 0.028, Vector3::new(0.29, 0.0, 0.0), 10.0, 9),
                patch(25, 10, 0.028, Vector3::new(0.0, 0.7, 0.0), 0.0, 10),
            ],
        ];
        for (idx, scene) in scenes.into_iter().enumerate() {
            let entries = with_moments(scene);
            let flats = flat_refs(&entries);
            let with = build_merge_graph(&flats, &cfg, true);
            let without = build_merge_graph(&flats, &cfg, false);
            assert_eq!(
                with.edges, without.edges,
                "scene {idx}: gap prefilter changed the edge set: {:?} vs {:?}",
                with.edges, without.edges
            );
        }
    }

    #[test]
    fn detect_splits_and_conserves() {
        let cfg = PipelineConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut pts: Vec<Vector3<f64>> = Vec::new();
        // Dense flat patch in generic pose.
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, 0.2, 0.1);
        for _ in 0..4000 {
            let local = Vector3::new(rng.gen::<f64>() * 1.4, rng.gen::<f64>() * 1.2, 0.0);
            pts.push(rot * local);
        }
        // Unstructured blob far away.
        for _ in 0..300 {
            let g = |r: &mut ChaCha8Rng| {
                let v: f64 = r.sample(rand_distr::StandardNormal);
                v * 0.15
            };
            pts.push(Vector3::new(4.0, 4.0, 1.0) + Vector3::new(g(&mut rng), g(&mut rng), g(&mut rng)));
        }
        let cloud = PointMatrix::new(pts).unwrap();
        let filtered = crate::cloud::voxel_filter(&cloud, cfg.voxel_size).unwrap();
        let set = hierarchical_cluster(&filtered, &cfg).unwrap();
        let det = detect(&set, &cfg).unwrap();

        assert_eq!(det.total_points(), filtered.len(), "conservation");
        assert!(!det.planes.is_empty());
        for p in &det.planes {
            let m = compute_moments(p).unwrap();
            assert!(6.0 * m.eigenvalues[2].sqrt() < cfg.voxel_size);
        }
        for s in &det.surfaces {
            let m = compute_moments(s).unwrap();
            assert!(6.0 * m.eigenvalues[2].sqrt() >= cfg.voxel_size);
        }
    }

    #[test]
    fn degenerate_flat_component_becomes_gaussian() {
        let cfg = PipelineConfig::default();
        // A two-point "flat" cluster cannot carry a plane frame.
        let tiny = PointMatrix::new(vec![Vector3::zeros(), Vector3::new(0.01, 0.0, 0.0)]).unwrap();
        let m = compute_moments(&tiny).unwrap();
        let set = ClusterSet {
            clusters: vec![crate::cluster::ClusterEntry {
                points: tiny,
                moments: m,
                flat: true,
            }],
            iterations: 1,
        };
        let det = detect(&set, &cfg).unwrap();
        assert!(det.planes.is_empty() && det.surfaces.is_empty());
        assert_eq!(det.gaussians.len(), 1);
        assert_eq!(det.gaussians[0].point_count, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn judgments_are_symmetric(seed in 0u64..3000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng| {
                let pts: Vec<Vector3<f64>> = (0..12)
                    .map(|_| {
                        Vector3::new(
                            rng.gen::<f64>() + rng.gen::<f64>(),
                            rng.gen::<f64>() * 2.0,
                            rng.gen::<f64>() * 0.3,
                        ) + Vector3::new(rng.gen::<f64>() * 3.0, 0.0, 0.0)
                    })
                    .collect();
                let pm = PointMatrix::new(pts).unwrap();
                let m = compute_moments(&pm).unwrap();
                (pm, m)
            };
            let (pa, ma) = mk(&mut rng);
            let (pb, mb) = mk(&mut rng);
            let angle = 15.0_f64.to_radians();
            prop_assert_eq!(judge_angle(&ma, &mb, angle), judge_angle(&mb, &ma, angle));
            prop_assert_eq!(
                judge_normal_distance(&ma, &mb, 0.045),
                judge_normal_distance(&mb, &ma, 0.045)
            );
            prop_assert_eq!(
                judge_gaussian_gap(&ma, &mb, 0.03),
                judge_gaussian_gap(&mb, &ma, 0.03)
            );
            prop_assert_eq!(
                judge_point_adjacency(&pa, &pb, 0.03),
                judge_point_adjacency(&pb, &pa, 0.03)
            );
        }
    }
}
