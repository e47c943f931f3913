use labtwin_core::camera::{CameraView, Lens};
use labtwin_core::geom::{Aabb, Vec3};
use labtwin_core::octree::{
    build_in_memory, select_nodes, BuildConfig, LodBuild, LodGeometry, LodHierarchy, NodeName, PointRecord,
    RootSpacing, SubtreeBuilder, Placement,
};
use labtwin_core::point::ColorPoint;
use labtwin_core::scene::{ExitPoint, SceneDefinition};
use labtwin_core::sim::{measure_area, nearest_exit, CameraPose, TourPath};
use labtwin_core::subsample::{subsample, SubsampleConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(seed: u64, n: usize, extent: f64) -> Vec<ColorPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            ColorPoint::new(
                rng.random::<f64>() * extent,
                rng.random::<f64>() * extent,
                rng.random::<f64>() * extent * 0.3,
                rng.random(),
                rng.random(),
                rng.random(),
            )
        })
        .collect()
}

fn bounds_of(pts: &[ColorPoint]) -> Aabb {
    let mut b = Aabb::from_point(pts[0].position());
    for p in pts {
        b.extend(p.position());
    }
    b
}

// Subsample oracle: brute-force pairwise checks.

fn min_pairwise(pts: &[Vec3]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            m = m.min(pts[i].distance(pts[j]));
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subsample_spacing_maximality_idempotence(seed in any::<u64>(), n in 1usize..1500, spacing in 0.01f64..0.3) {
        let input = cloud(seed, n, 1.0);
        let out = subsample(input.iter().copied(), SubsampleConfig::with_spacing(spacing)).unwrap();
        prop_assert_eq!(out.kept + out.dropped, n as u64);
        let kept: Vec<Vec3> = out.points.iter().map(|p| p.position()).collect();
        prop_assert!(min_pairwise(&kept) >= spacing);
        // Subset in stream order, and every dropped point has a kept neighbor.
        let mut k = 0;
        for p in &input {
            if k < out.points.len() && out.points[k] == *p {
                k += 1;
            } else {
                prop_assert!(kept.iter().any(|q| q.distance(p.position()) < spacing));
            }
        }
        prop_assert_eq!(k, out.points.len());
        let again = subsample(out.points.iter().copied(), SubsampleConfig::with_spacing(spacing)).unwrap();
        prop_assert_eq!(again.points, out.points);
    }
}

// Octree oracle: an independent recursive builder with brute-force Poisson
// tests and octant choice by comparison against node centers.

#[derive(Default)]
struct OracleNode {
    accepted: Vec<Vec3>,
    records: Vec<PointRecord>,
    overflow: bool,
}

fn oracle_build(pts: &[ColorPoint], bounds: Aabb, cfg: &BuildConfig) -> Vec<(String, Vec<PointRecord>, bool)> {
    let geom = LodGeometry::new(bounds, cfg).unwrap();
    let side = geom.side();
    let mut nodes: std::collections::BTreeMap<String, OracleNode> = Default::default();
    for p in pts {
        let rec = geom.quantize(p);
        let pos = rec.local();
        let mut name = String::from("r");
        let mut min = [0.0f64; 3];
        let mut level = 0u8;
        loop {
            let spacing = geom.spacing(level);
            let node = nodes.entry(name.clone()).or_default();
            let clear = node.accepted.iter().all(|q| q.distance(pos) >= spacing);
            if (node.accepted.len() as u32) < cfg.leaf_capacity && clear {
                node.accepted.push(pos);
                node.records.push(rec);
                break;
            }
            if level == cfg.max_level {
                node.overflow = true;
                node.records.push(rec);
                break;
            }
            let half = side / f64::from(1u32 << (level + 1));
            let o = pos.to_array();
            let mut octant = 0u8;
            for axis in 0..3 {
                if o[axis] >= min[axis] + half {
                    octant |= 1 << (2 - axis);
                    min[axis] += half;
                }
            }
            name.push(char::from(b'0' + octant));
            level += 1;
        }
    }
    nodes.into_iter().map(|(k, v)| (k, v.records, v.overflow)).collect()
}

fn as_named(build: &LodBuild) -> Vec<(String, Vec<PointRecord>, bool)> {
    build.nodes.iter().zip(&build.blobs).map(|(n, b)| (n.name.to_string(), b.clone(), n.overflow)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn octree_matches_oracle_and_audits(seed in any::<u64>(), n in 1usize..3000, cap in 1u32..400, spacing in 0.05f64..2.0) {
        let pts = cloud(seed, n, 4.0);
        let b = bounds_of(&pts);
        let cfg = BuildConfig {
            root_spacing: RootSpacing::Fixed(spacing),
            leaf_capacity: cap,
            max_level: 6,
            ..Default::default()
        };
        let build = build_in_memory(pts.iter().copied(), b, &cfg).unwrap();
        prop_assert_eq!(build.total_points(), n as u64);
        // Differential check against the naive builder.
        let ours = as_named(&build);
        let oracle = oracle_build(&pts, b, &cfg);
        let ours_names: Vec<_> = ours.iter().map(|n| n.0.clone()).collect();
        let oracle_names: Vec<_> = oracle.iter().map(|n| n.0.clone()).collect();
        prop_assert_eq!(ours_names, oracle_names);
        prop_assert_eq!(ours, oracle);
        let geom = build.geometry;
        for (node, blob) in build.nodes.iter().zip(&build.blobs) {
            prop_assert_eq!(node.byte_size, node.num_points * 16);
            prop_assert_eq!(blob.len() as u64, node.num_points);
            if let Some(parent) = node.name.parent() {
                let pn = build.nodes.iter().find(|x| x.name == parent).unwrap();
                prop_assert_eq!(node.spacing, pn.spacing / 2.0);
                prop_assert_eq!(node.level, pn.level + 1);
                prop_assert!(pn.child_mask & (1 << node.name.octant()) != 0);
            }
            let nb = geom.node_bounds(node.name);
            let quantum = geom.side() * f64::EPSILON.max(f64::from(f32::EPSILON));
            for r in blob {
                let w = geom.to_world(r).position().to_array();
                for axis in 0..3 {
                    prop_assert!(w[axis] >= nb.min.to_array()[axis] - quantum);
                    prop_assert!(w[axis] <= nb.max.to_array()[axis] + quantum);
                }
            }
            if !node.overflow {
                let local: Vec<Vec3> = blob.iter().map(|r| r.local()).collect();
                prop_assert!(min_pairwise(&local) >= node.spacing);
            }
        }
    }

    #[test]
    fn chunked_build_equals_single_pass(seed in any::<u64>(), n in 1usize..2000, spill in 1u8..4) {
        let pts = cloud(seed, n, 3.0);
        let b = bounds_of(&pts);
        let cfg = BuildConfig { root_spacing: RootSpacing::Fixed(0.4), leaf_capacity: 64, max_level: 7, ..Default::default() };
        let single = build_in_memory(pts.iter().copied(), b, &cfg).unwrap();
        let geom = single.geometry;
        let mut top = SubtreeBuilder::new(&geom, cfg.leaf_capacity, NodeName::ROOT, Some(spill));
        let mut chunks: std::collections::BTreeMap<NodeName, Vec<PointRecord>> = Default::default();
        for p in &pts {
            let rec = geom.quantize(p);
            if let Placement::Spill(name) = top.insert(rec) {
                chunks.entry(name).or_default().push(rec);
            }
        }
        let mut all = top.finish();
        for (name, recs) in chunks {
            let mut sub = SubtreeBuilder::new(&geom, cfg.leaf_capacity, name, None);
            for r in recs {
                sub.insert(r);
            }
            all.extend(sub.finish());
        }
        all.sort_by_key(|n| n.name);
        let chunked: Vec<_> = all.into_iter().map(|n| (n.name.to_string(), n.records, n.overflow)).collect();
        prop_assert_eq!(chunked, as_named(&single));
    }
}

// Selection oracle: enumerate the candidate tree, rank everything, take the
// longest prefix that fits.

fn oracle_select(h: &LodHierarchy, view: &CameraView, budget: u64, min_px: f64) -> Vec<NodeName> {
    let fr = view.frustum();
    let mut cands = Vec::new();
    let mut stack = vec![NodeName::ROOT];
    while let Some(name) = stack.pop() {
        let node = h.get(name).unwrap();
        let ext = labtwin_core::octree::projected_extent(node, view);
        cands.push((ext, name, node.num_points));
        for c in h.children(name) {
            if fr.intersects(&c.bounds) && labtwin_core::octree::projected_extent(c, view) >= min_px {
                stack.push(c.name);
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut total = 0u64;
    let mut out = Vec::new();
    for (_, name, n) in cands {
        if total + n > budget {
            break;
        }
        total += n;
        out.push(name);
    }
    out
}

fn random_view(rng: &mut ChaCha8Rng, b: &Aabb) -> CameraView {
    let c = b.center();
    let s = b.size();
    let pos = Vec3::new(
        c.x + (rng.random::<f64>() - 0.5) * s.x * 3.0,
        c.y + (rng.random::<f64>() - 0.5) * s.y * 3.0,
        c.z + (rng.random::<f64>() - 0.5) * s.z * 3.0,
    );
    let pose = CameraPose::new(pos, rng.random::<f64>() * 360.0, rng.random::<f64>() * 120.0 - 60.0);
    pose.view(Lens { far: 50.0, ..Lens::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn selection_matches_oracle_and_is_monotone(seed in any::<u64>()) {
        let pts = cloud(seed, 8000, 10.0);
        let b = bounds_of(&pts);
        let cfg = BuildConfig { root_spacing: RootSpacing::Fixed(1.0), leaf_capacity: 200, max_level: 8, ..Default::default() };
        let build = build_in_memory(pts, b, &cfg).unwrap();
        let root_points = build.nodes[0].num_points;
        let h = LodHierarchy::new(build.nodes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e1ec7);
        for _ in 0..20 {
            let view = random_view(&mut rng, &b);
            let min_px = if rng.random::<bool>() { 0.0 } else { rng.random::<f64>() * 200.0 };
            let budget = root_points + rng.random_range(0..6000u64);
            let sel = select_nodes(&h, &view, budget, min_px).unwrap();
            prop_assert_eq!(&sel.nodes, &oracle_select(&h, &view, budget, min_px));
            prop_assert!(sel.total_points <= budget);
            let chosen: std::collections::BTreeSet<_> = sel.nodes.iter().copied().collect();
            for n in &sel.nodes {
                if let Some(p) = n.parent() {
                    prop_assert!(chosen.contains(&p));
                }
            }
            let bigger = select_nodes(&h, &view, budget + rng.random_range(0..3000u64), 0.0).unwrap();
            let smaller = select_nodes(&h, &view, budget, 0.0).unwrap();
            let big: std::collections::BTreeSet<_> = bigger.nodes.iter().collect();
            prop_assert!(smaller.nodes.iter().all(|n| big.contains(n)));
        }
    }
}

// Measurement, engine and tour properties.

fn rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    // Random unit quaternion to rotation matrix.
    let q: [f64; 4] = loop {
        let v = [0; 4].map(|_: i32| rng.random::<f64>() * 2.0 - 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            break v.map(|x| x / n);
        }
    };
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn apply(m: &[[f64; 3]; 3], p: Vec3, t: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
        m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
        m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
    ) + t
}

fn shoelace(pts: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for i in 0..pts.len() {
        let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
        s += a.0 * b.1 - b.0 * a.1;
    }
    0.5 * s.abs()
}

proptest! {
    #[test]
    fn area_invariant_under_rigid_motion(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Star-shaped pentagon in the xy plane.
        let flat: Vec<(f64, f64)> = (0..5)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 5.0 + rng.random::<f64>() * 0.5;
                let r = 1.0 + rng.random::<f64>() * 4.0;
                (r * a.cos(), r * a.sin())
            })
            .collect();
        let expected = shoelace(&flat);
        let m = rotation(&mut rng);
        let t = Vec3::new(rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0, rng.random::<f64>() * 10.0);
        let moved: Vec<Vec3> = flat.iter().map(|&(x, y)| apply(&m, Vec3::new(x, y, 0.0), t)).collect();
        let got = measure_area(&moved).unwrap();
        prop_assert!(((got - expected) / expected).abs() < 1e-9, "{} vs {}", got, expected);
    }

    #[test]
    fn nearest_exit_is_brute_force_argmin(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exits: Vec<ExitPoint> = (0..6)
            .map(|i| ExitPoint {
                id: format!("e{}", rng.random_range(0..4) * 10 + i),
                name: String::new(),
                position: Vec3::new(rng.random_range(0..5) as f64 * 8.0, rng.random_range(0..5) as f64 * 20.0, 1.7),
            })
            .collect();
        let scene = SceneDefinition {
            version: 1,
            waypoints: Vec::new(),
            tour: Default::default(),
            hotspots: Vec::new(),
            exits: exits.clone(),
        };
        for _ in 0..50 {
            let pos = Vec3::new(rng.random_range(0..=40) as f64, rng.random_range(0..=100) as f64, 1.7);
            let pose = CameraPose::new(pos, 0.0, 0.0);
            let mut best = &exits[0];
            for e in &exits[1..] {
                // Ties are distances equal to the millimeter.
                let mm = |x: &ExitPoint| (x.position.distance(pos) * 1000.0).round();
                let (de, db) = (mm(e), mm(best));
                if de < db || (de == db && e.id < best.id) {
                    best = e;
                }
            }
            prop_assert_eq!(&nearest_exit(&scene, &pose).unwrap().id, &best.id);
        }
    }

    #[test]
    fn tour_is_continuous_and_hits_controls(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poses: Vec<CameraPose> = (0..n)
            .map(|_| CameraPose::new(
                Vec3::new(rng.random::<f64>() * 30.0, rng.random::<f64>() * 30.0, 1.7),
                rng.random::<f64>() * 360.0,
                0.0,
            ))
            .collect();
        let path = TourPath::through(&poses).unwrap();
        for (i, p) in poses.iter().enumerate() {
            prop_assert!(path.position_at(path.station(i)).distance(p.position) < 1e-6);
        }
        let total = path.total_length();
        let steps = 2000;
        let mut prev = path.position_at(0.0);
        for k in 1..=steps {
            let s = total * k as f64 / steps as f64;
            let q = path.position_at(s);
            // Constant speed: equal arc steps give equal chords within 1%.
            let step = total / steps as f64;
            prop_assert!(q.distance(prev) <= step * 1.01 + 1e-9);
            prev = q;
        }
    }
}
