use std::collections::BTreeMap;

use agrocate::geo::{compute_abundance, GridSpec, ParcelRecord};
use agrocate::seed::stream;
use rand::Rng;

struct Shape {
    crop: String,
    vertices: Vec<(f64, f64)>,
}

/// Even-odd ray casting.
fn inside(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut c = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            c = !c;
        }
    }
    c
}

/// Jittered-grid sampling of every cell (`m * m` points each); per-crop hit
/// fractions then go through the documented cap-and-rescale rule.
fn sampled_abundance(shapes: &[Shape], grid: &GridSpec, m: usize, seed: u64) -> BTreeMap<(u64, String), f64> {
    let mut rng = stream(seed, 0);
    let s = grid.cell_size;
    let mut out = BTreeMap::new();
    for i in 0..grid.n_rows {
        for j in 0..grid.n_cols {
            let x0 = grid.origin_x + f64::from(j) * s;
            let y0 = grid.origin_y - f64::from(i + 1) * s;
            let mut hits: BTreeMap<String, f64> = BTreeMap::new();
            let h = s / m as f64;
            for a in 0..m {
                for b in 0..m {
                    let p = (x0 + (a as f64 + rng.random::<f64>()) * h, y0 + (b as f64 + rng.random::<f64>()) * h);
                    for sh in shapes {
                        if inside(p, &sh.vertices) {
                            *hits.entry(sh.crop.clone()).or_default() += 1.0;
                        }
                    }
                }
            }
            let total_pts = (m * m) as f64;
            let mut fr: BTreeMap<String, f64> = hits.into_iter().map(|(c, v)| (c, (v / total_pts).min(1.0))).collect();
            let sum: f64 = fr.values().sum();
            if sum > 1.0 {
                fr.values_mut().for_each(|v| *v /= sum);
            }
            for (c, v) in fr {
                out.insert((grid.cell_id(i, j), c), v);
            }
        }
    }
    out
}

fn random_convex(rng: &mut impl Rng, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let (cx, cy) = (rng.random_range(lo..hi), rng.random_range(lo..hi));
    let k = rng.random_range(3..7);
    let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles
        .iter()
        .map(|&t| {
            let r = rng.random_range(0.2..1.2);
            (cx + r * t.cos(), cy + r * t.sin())
        })
        .collect()
}

#[test]
fn random_parcels_match_sampled_areas() {
    let grid = GridSpec::new(0.0, 3.0, 1.0, 3, 3).unwrap();
    let mut rng = stream(2024, 0);
    let crops = ["wheat", "barley", "olive"];
    let shapes: Vec<Shape> = (0..15)
        .map(|k| Shape {
            crop: crops[k % 3].to_string(),
            vertices: random_convex(&mut rng, -0.3, 3.3),
        })
        .collect();
    let parcels: Vec<ParcelRecord> = shapes
        .iter()
        .enumerate()
        .map(|(k, s)| ParcelRecord::new(format!("p{k}"), 2020, s.crop.clone(), s.vertices.clone()).unwrap())
        .collect();
    let table = compute_abundance(&parcels, &grid).unwrap();
    let oracle = sampled_abundance(&shapes, &grid, 400, 7);

    let mut computed = BTreeMap::new();
    for (cell, _, e) in table.entries() {
        for (c, &v) in &e.crops {
            computed.insert((cell, c.clone()), v);
        }
    }
    let keys: std::collections::BTreeSet<_> = computed.keys().chain(oracle.keys()).cloned().collect();
    assert!(!keys.is_empty());
    for k in keys {
        let a = computed.get(&k).copied().unwrap_or(0.0);
        let b = oracle.get(&k).copied().unwrap_or(0.0);
        assert!((a - b).abs() <= 1e-3, "{k:?}: clipped {a}, sampled {b}");
    }
}
