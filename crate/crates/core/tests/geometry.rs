use omr_core::analytic::{areas, between, Contour};
use omr_core::channel::{
    aggregate_gain, colocated_contour, coverage_contour, detection_constant, PhyConfig,
};
use omr_core::rng::seeded;
use omr_core::Point2D;
use rand::Rng;

fn phy(dbm: f64) -> PhyConfig {
    PhyConfig::default().with_tx_dbm(dbm)
}

#[test]
fn first_hop_reach_is_single_transmitter_radius() {
    for dbm in [12.0, 24.0, 33.0] {
        let p = phy(dbm);
        let u = detection_constant(&p);
        let x = coverage_contour(&[Point2D::ORIGIN], 0.0, u, p.alpha).unwrap();
        let r1 = u.value().powf(-1.0 / p.alpha);
        assert!(((x - r1) / r1).abs() < 1e-9, "{x} vs {r1}");
        assert!(((p.single_hop_radius() - r1) / r1).abs() < 1e-12);
    }
}

#[test]
fn contour_sits_on_threshold() {
    let p = phy(24.0);
    let u = detection_constant(&p);
    let mut r = seeded(17);
    for _ in 0..200 {
        let k = r.random_range(1..12);
        let relays: Vec<Point2D> = (0..k)
            .map(|_| Point2D::new(r.random_range(0.0..150.0), r.random_range(-100.0..100.0)))
            .collect();
        let y = r.random_range(-100.0..100.0);
        let Ok(x) = coverage_contour(&relays, y, u, p.alpha) else {
            continue;
        };
        let h = aggregate_gain(Point2D::new(x, y), &relays, p.alpha).unwrap();
        assert!(
            ((h - u.value()) / u.value()).abs() < 1e-9,
            "H/U - 1 = {}",
            h / u.value() - 1.0
        );
    }
}

#[test]
fn stacked_relays_match_closed_form() {
    let p = phy(24.0);
    let u = detection_constant(&p);
    let at = Point2D::new(40.0, 10.0);
    for k in 1..=10 {
        let relays = vec![at; k];
        for y in [0.0, 10.0, 55.0, -60.0] {
            let exact = coverage_contour(&relays, y, u, p.alpha).unwrap();
            let closed = colocated_contour(at, k as f64, y, u, p.alpha).unwrap();
            assert!(((exact - closed) / closed).abs() < 1e-9);
        }
    }
}

/// Area between two contours by stratified sampling: one uniform point per
/// cell of an n-by-n grid over the bounding box.
fn stratified_area(lo: &Contour, hi: &Contour, w: f64, x0: f64, x1: f64, n: usize) -> f64 {
    let mut r = seeded(99);
    let (dx, dy) = ((x1 - x0) / n as f64, w / n as f64);
    let mut hits = 0usize;
    for a in 0..n {
        for b in 0..n {
            let x = x0 + (a as f64 + r.random::<f64>()) * dx;
            let y = -w / 2.0 + (b as f64 + r.random::<f64>()) * dy;
            if x > lo.at(y) && x < hi.at(y) {
                hits += 1;
            }
        }
    }
    hits as f64 * dx * dy
}

#[test]
fn strip_areas_match_sampling() {
    let w = 200.0;
    let cases = [
        (
            Contour::Rear {
                center: 0.0,
                radius: 120.0,
            },
            Contour::Front {
                apex: 120.0,
                radius: 120.0,
            },
        ),
        (
            Contour::Front {
                apex: 150.0,
                radius: 180.0,
            },
            Contour::Front {
                apex: 260.0,
                radius: 220.0,
            },
        ),
        (
            Contour::Decision {
                target: 2000.0,
                radius: 1850.0,
            },
            Contour::Front {
                apex: 260.0,
                radius: 220.0,
            },
        ),
    ];
    for (lo, hi) in cases {
        let quad = between(&lo, &hi, w);
        let mc = stratified_area(&lo, &hi, w, -150.0, 300.0, 1000);
        assert!(((quad - mc) / mc).abs() < 1e-3, "{quad} vs {mc}");
    }
}

#[test]
fn eligible_area_is_max_of_two_lower_contours() {
    let w = 200.0;
    let x_c = Contour::Decision {
        target: 2000.0,
        radius: 1880.0,
    };
    let prev = Contour::Front {
        apex: 150.0,
        radius: 180.0,
    };
    let new = Contour::Front {
        apex: 260.0,
        radius: 220.0,
    };
    let prev2 = Contour::Front {
        apex: 40.0,
        radius: 120.0,
    };
    let a = areas(&x_c, &prev, &new, &prev2, w).unwrap();
    let mut r = seeded(5);
    let n = 1000;
    let (x0, x1) = (-100.0, 300.0);
    let (dx, dy) = ((x1 - x0) / n as f64, w / n as f64);
    let mut hits = 0usize;
    for i in 0..n {
        for j in 0..n {
            let x = x0 + (i as f64 + r.random::<f64>()) * dx;
            let y = -w / 2.0 + (j as f64 + r.random::<f64>()) * dy;
            if x > x_c.at(y).max(prev.at(y)) && x < new.at(y) {
                hits += 1;
            }
        }
    }
    let mc = hits as f64 * dx * dy;
    assert!(((a.a_r - mc) / mc).abs() < 1e-3, "{} vs {mc}", a.a_r);
    assert!(a.a_r <= a.a_d);
}
