use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracelens_core::cluster::{dbscan, extract_clusters, optics, ClusterLabeling, Role};
use tracelens_core::geo::LocalFrame;
use tracelens_core::{haversine, ClusterParams, Point};

fn cloud(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = LocalFrame::new(Point { lat: 38.98, lon: -76.94 });
    // A few blobs plus uniform background, so every role shows up.
    let centers: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0)))
        .collect();
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.7) {
                let (cx, cy) = centers[rng.gen_range(0..3)];
                frame.to_latlon(cx + rng.gen_range(-150.0..150.0), cy + rng.gen_range(-150.0..150.0))
            } else {
                frame.to_latlon(rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0))
            }
        })
        .collect()
}

/// Reference DBSCAN by definition: cores by neighbor count, clusters as
/// connected components of cores, borders as non-cores next to a core.
struct Reference {
    core: Vec<bool>,
    component: Vec<Option<usize>>,
    /// Components of cores within eps of each non-core point.
    border_options: Vec<BTreeSet<usize>>,
}

fn reference(points: &[Point], eps: f64, min_pts: usize) -> Reference {
    let n = points.len();
    let near = |i: usize, j: usize| haversine(points[i], points[j]) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut component = vec![None; n];
    let mut next = 0;
    for s in 0..n {
        if !core[s] || component[s].is_some() {
            continue;
        }
        let mut stack = vec![s];
        component[s] = Some(next);
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if core[v] && component[v].is_none() && near(u, v) {
                    component[v] = Some(next);
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    let border_options = (0..n)
        .map(|i| {
            if core[i] {
                BTreeSet::new()
            } else {
                (0..n).filter(|&j| core[j] && near(i, j)).map(|j| component[j].unwrap()).collect()
            }
        })
        .collect();
    Reference {
        core,
        component,
        border_options,
    }
}

fn check_against_reference(points: &[Point], eps: f64, min_pts: usize) -> Result<(), String> {
    let got = dbscan(points, &ClusterParams::new(eps, min_pts).unwrap()).map_err(|e| e.to_string())?;
    let want = reference(points, eps, min_pts);
    // Cluster ids map one-to-one onto reference components via cores.
    let mut to_ref: BTreeMap<usize, usize> = BTreeMap::new();
    let mut from_ref: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..points.len() {
        let is_core = got.roles[i] == Role::Core;
        if is_core != want.core[i] {
            return Err(format!("point {i}: core {is_core} vs reference {}", want.core[i]));
        }
        if is_core {
            let (g, r) = (got.labels[i].unwrap(), want.component[i].unwrap());
            if *to_ref.entry(g).or_insert(r) != r || *from_ref.entry(r).or_insert(g) != g {
                return Err(format!("point {i}: cluster {g} does not map to component {r}"));
            }
        }
    }
    for i in 0..points.len() {
        if want.core[i] {
            continue;
        }
        let opts = &want.border_options[i];
        match (got.roles[i], got.labels[i]) {
            (Role::Noise, None) if opts.is_empty() => {}
            (Role::Border, Some(g)) if opts.contains(&to_ref[&g]) => {}
            other => return Err(format!("point {i}: {other:?}, reference options {opts:?}")),
        }
    }
    Ok(())
}

#[test]
fn dbscan_matches_brute_force_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..200 {
        let n = rng.gen_range(1..=200);
        let eps = rng.gen_range(20.0..400.0);
        let min_pts = rng.gen_range(1..=10);
        let pts = cloud(case, n);
        if let Err(e) = check_against_reference(&pts, eps, min_pts) {
            panic!("case {case} (n={n}, eps={eps}, min_pts={min_pts}): {e}");
        }
    }
}

fn cores(l: &ClusterLabeling) -> BTreeSet<usize> {
    l.indices_with_role(Role::Core).into_iter().collect()
}

fn noise(l: &ClusterLabeling) -> BTreeSet<usize> {
    l.indices_with_role(Role::Noise).into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shuffling_keeps_core_and_noise_sets(seed in 0u64..100_000, n in 1usize..150, eps in 30.0f64..300.0, min_pts in 1usize..8) {
        let pts = cloud(seed, n);
        let p = ClusterParams::new(eps, min_pts).unwrap();
        let base = dbscan(&pts, &p).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled: Vec<Point> = perm.iter().map(|&i| pts[i]).collect();
        let other = dbscan(&shuffled, &p).unwrap();
        let back = |s: BTreeSet<usize>| s.into_iter().map(|k| perm[k]).collect::<BTreeSet<_>>();
        prop_assert_eq!(cores(&base), back(cores(&other)));
        prop_assert_eq!(noise(&base), back(noise(&other)));
        prop_assert_eq!(base.n_clusters(), other.n_clusters());
    }

    #[test]
    fn larger_eps_never_adds_noise(seed in 0u64..100_000, n in 1usize..150, eps in 20.0f64..300.0, grow in 1.0f64..3.0, min_pts in 1usize..8) {
        let pts = cloud(seed, n);
        let a = dbscan(&pts, &ClusterParams::new(eps, min_pts).unwrap()).unwrap();
        let b = dbscan(&pts, &ClusterParams::new(eps * grow, min_pts).unwrap()).unwrap();
        prop_assert!(b.n_noise() <= a.n_noise());
    }

    #[test]
    fn extraction_and_dbscan_share_cores(seed in 0u64..100_000, n in 1usize..150, t in 30.0f64..300.0, min_pts in 1usize..8) {
        let pts = cloud(seed, n);
        let ord = optics(&pts, min_pts, 1000.0).unwrap();
        let ext = extract_clusters(&ord, t).unwrap();
        let db = dbscan(&pts, &ClusterParams::new(t, min_pts).unwrap()).unwrap();
        // Border points may fall either way under a horizontal cut; cores may not.
        prop_assert_eq!(cores(&ext), cores(&db));
    }
}
