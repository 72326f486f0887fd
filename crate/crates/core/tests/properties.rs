use omr_core::analytic::{j_pmf, p_z, poisson_dist, IntDist, ProgressModel, SUPPORT_CAP, TAIL_TOL};
use omr_core::bcl::{hop_energy_rx, hop_energy_tx, progress_band, BclConfig, Expectations};
use omr_core::channel::{detection_constant, PhyConfig};
use omr_core::concurrent::Frame;
use omr_core::engine::{rach_resolve, run_trial, EngineConfig, RetransmitPolicy};
use omr_core::field::FieldConfig;
use omr_core::metrics::hop_energy;
use omr_core::Point2D;
use proptest::prelude::*;

proptest! {
    #[test]
    fn poisson_moments(mean in 0.01f64..300.0) {
        let d = poisson_dist(mean, TAIL_TOL, SUPPORT_CAP).unwrap();
        prop_assert!(d.check(TAIL_TOL).is_ok());
        prop_assert!((d.total() - 1.0).abs() <= TAIL_TOL);
        prop_assert!((d.mean() - mean).abs() <= 1e-6 * mean.max(1.0));
        prop_assert!((d.variance() - mean).abs() <= 1e-5 * mean.max(1.0));
    }

    #[test]
    fn convolution_adds_means(a in 0.1f64..60.0, b in 0.1f64..60.0) {
        let da = poisson_dist(a, TAIL_TOL, SUPPORT_CAP).unwrap();
        let db = poisson_dist(b, TAIL_TOL, SUPPORT_CAP).unwrap();
        let c = da.convolve(&db, TAIL_TOL, SUPPORT_CAP).unwrap();
        prop_assert!(c.check(TAIL_TOL).is_ok());
        // trimming both tails shifts the mean by at most tol times the support
        prop_assert!((c.mean() - (a + b)).abs() < 1e-7 * (a + b).max(1.0));
    }

    #[test]
    fn zero_truncation_conditions(mean in 0.05f64..40.0) {
        let d = poisson_dist(mean, TAIL_TOL, SUPPORT_CAP).unwrap();
        let z = d.zero_truncated().unwrap();
        prop_assert_eq!(z.get(0), 0.0);
        prop_assert!((z.total() - 1.0).abs() < 1e-12);
        let want = d.mean() / (1.0 - d.get(0));
        prop_assert!((z.mean() - want).abs() < 1e-9 * want.max(1.0));
    }

    #[test]
    fn custom_pmf_normalizes(w in prop::collection::vec(0.0f64..1.0, 1..40)) {
        prop_assume!(w.iter().sum::<f64>() > 1e-3);
        let s: f64 = w.iter().sum();
        let d = IntDist::from_pmf(w.iter().map(|x| x / s).collect()).unwrap();
        prop_assert!(d.check(TAIL_TOL).is_ok());
    }

    #[test]
    fn j_pmf_is_distribution(k in 1usize..40, b in 3u32..40) {
        let pmf = j_pmf(k, b).unwrap();
        prop_assert_eq!(pmf.len(), k + 1);
        prop_assert!(pmf.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn p_z_is_probability(z in 0usize..30, k in 1usize..30, b in 2u32..40) {
        // the recursion is only used for z <= K; beyond that its exponents turn negative
        prop_assume!(z <= k);
        let p = p_z(z, k, b);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn progress_recursion_matches_closed_form(
        ks in prop::collection::vec(1.0f64..40.0, 0..25),
        varphi in 0.5f64..10.0,
        beta in 0.0f64..1.5,
    ) {
        let m = ProgressModel { varphi, beta, u: detection_constant(&PhyConfig::default()), alpha: 3.0 };
        let x = ks.iter().fold(m.r1(), |x, &k| m.step(x, k));
        prop_assert!((x - m.closed_form(&ks)).abs() < 1e-9 * x);
    }

    #[test]
    fn omr_energy_is_affine(l in 0.0f64..200.0, k in 0.0f64..60.0, n in 0.0f64..4.0, h in 0.1f64..5.0) {
        let p = PhyConfig::default();
        let f = |l: f64, k: f64, n: f64| hop_energy(l, k, n, &p);
        let tol = 1e-12 * f(l + 2.0 * h, k + 2.0 * h, n + 2.0 * h).max(1e-30);
        prop_assert!((f(l + 2.0 * h, k, n) - 2.0 * f(l + h, k, n) + f(l, k, n)).abs() <= tol);
        prop_assert!((f(l, k + 2.0 * h, n) - 2.0 * f(l, k + h, n) + f(l, k, n)).abs() <= tol);
        prop_assert!((f(l, k, n + 2.0 * h) - 2.0 * f(l, k, n + h) + f(l, k, n)).abs() <= tol);
    }

    #[test]
    fn bcl_energy_is_affine(eta in 0.0f64..3.0, me in 0.0f64..4.0, mn in 1.0f64..6.0, h in 0.1f64..2.0, xi in 0.05f64..1.0) {
        let p = PhyConfig::default();
        let c = BclConfig::for_phy(&p);
        let f = |eta: f64, me: f64, mn: f64| {
            let e = Expectations { eta, m_e: me, m_n: mn };
            hop_energy_tx(&e, xi, 40.0, &c, &p) + hop_energy_rx(&e, xi, 40.0, &c, &p)
        };
        let tol = 1e-12 * f(eta + 2.0 * h, me + 2.0 * h, mn + 2.0 * h);
        prop_assert!((f(eta + 2.0 * h, me, mn) - 2.0 * f(eta + h, me, mn) + f(eta, me, mn)).abs() <= tol);
        prop_assert!((f(eta, me + 2.0 * h, mn) - 2.0 * f(eta, me + h, mn) + f(eta, me, mn)).abs() <= tol);
        prop_assert!((f(eta, me, mn + 2.0 * h) - 2.0 * f(eta, me, mn + h) + f(eta, me, mn)).abs() <= tol);
    }

    #[test]
    fn bands_cover_slots(progress in 1e-6f64..200.0, n_p in 1u32..16) {
        let b = progress_band(progress, 200.0, n_p);
        prop_assert!(b < n_p);
        // larger progress never lands in a later slot
        prop_assert!(progress_band((progress * 1.1).min(200.0), 200.0, n_p) <= b);
    }

    #[test]
    fn first_resolvable_is_first_unique(slots in prop::collection::vec(0u32..6, 0..10)) {
        let o = rach_resolve(slots.clone());
        let unique = |i: usize| slots.iter().filter(|&&s| s == slots[i]).count() == 1;
        match o.first {
            0 => prop_assert!((0..slots.len()).all(|i| !unique(i))),
            j => {
                prop_assert!(unique(j - 1));
                prop_assert!((0..j - 1).all(|i| !unique(i)));
            }
        }
    }

    #[test]
    fn frame_preserves_distances(
        sx in -1e3f64..1e3, sy in -1e3f64..1e3, dx in -1e3f64..1e3, dy in -1e3f64..1e3,
        px in -1e3f64..1e3, py in -1e3f64..1e3,
    ) {
        let (s, d, p) = (Point2D::new(sx, sy), Point2D::new(dx, dy), Point2D::new(px, py));
        prop_assume!(s.dist(&d) > 1.0);
        let f = Frame::new(s, d);
        let (ls, ld, lp) = (f.to_local(s), f.to_local(d), f.to_local(p));
        prop_assert!(ls.dist(&Point2D::ORIGIN) < 1e-9);
        prop_assert!(ld.y.abs() < 1e-9 && ld.x > 0.0);
        prop_assert!((lp.dist(&ld) - p.dist(&d)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trials_are_deterministic(seed in any::<u64>()) {
        let field = FieldConfig {
            rho: 900e-6,
            epsilon: 0.25,
            length: 800.0,
            strip_width: 200.0,
            max_strip_width: 200.0,
            margin: 100.0,
        };
        let cfg = EngineConfig::new(field, PhyConfig::default().with_tx_dbm(21.0), RetransmitPolicy::for_width(200.0), 8);
        prop_assert_eq!(run_trial(&cfg, seed), run_trial(&cfg, seed));
    }
}
