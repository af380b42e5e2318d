//! Scans checked against exact segment/polygon intersection.

use apcm_core::geometry::{ConvexPolygon, Vec2};
use apcm_core::grid::{GridGeometry, OccupancyGrid};
use apcm_core::sensor::{sensor_scan, Pose, SensorModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn orient(a: Vec2<f64>, b: Vec2<f64>, c: Vec2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(p: Vec2<f64>, q: Vec2<f64>, a: Vec2<f64>, b: Vec2<f64>) -> bool {
    let (d1, d2) = (orient(a, b, p), orient(a, b, q));
    let (d3, d4) = (orient(p, q, a), orient(p, q, b));
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0
}

fn segment_hits(poly: &ConvexPolygon<f64>, p: Vec2<f64>, q: Vec2<f64>) -> bool {
    if poly.contains(p) || poly.contains(q) {
        return true;
    }
    let v = poly.vertices();
    (0..v.len()).any(|i| segments_cross(p, q, v[i], v[(i + 1) % v.len()]))
}

fn scene(seed: u64) -> (Vec<ConvexPolygon<f64>>, OccupancyGrid<f64>, Vec2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GridGeometry::new(100, 100, 0.4, Vec2::new(0.0, 0.0)).unwrap();
    let sensor = Vec2::new(20.0, 20.0);
    let mut polys = Vec::new();
    while polys.len() < 8 {
        let c = Vec2::new(rng.random_range(3.0..37.0), rng.random_range(3.0..37.0));
        let poly = ConvexPolygon::rectangle(c, rng.random_range(-3.0..3.0), 4.8, 2.0);
        if poly.distance(sensor) > 1.0 {
            polys.push(poly);
        }
    }
    let mut raster = OccupancyGrid::filled(g, 0.0).unwrap();
    for p in &polys {
        raster.rasterize_polygon(p, 1.0);
    }
    (polys, raster, sensor)
}

#[test]
fn free_cells_have_clear_sight_lines() {
    for seed in 0..10 {
        let (polys, raster, at) = scene(seed);
        let sensor = SensorModel::new(15.0, 0.004, Pose::new(at.x, at.y, 0.3)).unwrap();
        let ogm = sensor_scan(&raster, &sensor, *raster.geometry()).unwrap();
        let mut free = 0;
        for cell in ogm.cells() {
            let v = ogm.get(cell);
            assert!(v == 0.0 || v == 0.5 || v == 1.0);
            if v == 0.0 {
                free += 1;
                let center = ogm.cell_center(cell);
                assert!(center.distance(at) <= 15.0 + 0.3);
                for p in &polys {
                    assert!(!segment_hits(p, at, center), "seed {seed} {cell:?}");
                }
            }
        }
        assert!(free > 100);
    }
}

#[test]
fn wall_casts_a_shadow() {
    let g = GridGeometry::new(60, 60, 0.4, Vec2::new(0.0, 0.0)).unwrap();
    let mut raster = OccupancyGrid::filled(g, 0.0).unwrap();
    let wall = ConvexPolygon::rectangle(Vec2::new(16.0, 12.0), 0.0, 0.8, 6.0);
    raster.rasterize_polygon(&wall, 1.0);
    let at = Vec2::new(8.0, 12.0);
    let sensor = SensorModel::new(20.0, 0.002, Pose::new(at.x, at.y, 0.0)).unwrap();
    let ogm = sensor_scan(&raster, &sensor, g).unwrap();
    for cell in ogm.cells() {
        let c = ogm.cell_center(cell);
        let behind = c.x > 17.2 && segment_hits(&wall, at, c);
        if behind {
            assert_eq!(ogm.get(cell), 0.5, "{cell:?}");
        }
    }
    // Directly behind the wall, well inside the shadow.
    assert_eq!(ogm.value_at(Vec2::new(20.0, 12.0)), Some(0.5));
    assert_eq!(ogm.value_at(Vec2::new(12.0, 12.0)), Some(0.0));
}
