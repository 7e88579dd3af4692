use fpm_core::diagnostics::Trajectory;
use fpm_core::ladder::{gdelta_probe, truncation_probe};
use fpm_core::lattice::{make_grid, snapshot, Grid, ScalarField};
use fpm_core::stepper::{face_mobility, pressure_step, transport_term, SchemeParams};
use proptest::prelude::*;

fn grid() -> Grid {
    make_grid(8, 2.0).unwrap()
}

fn field(lo: f64, hi: f64) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(lo..hi, 64).prop_map(|v| ScalarField::from_values(&grid(), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mobility_is_a_mean(a in 0.0..5.0f64, b in 0.0..5.0f64, beta in 1.1..4.0f64) {
        let m = face_mobility(a, b, beta);
        prop_assert!(m >= a.min(b) * (1.0 - 1e-12) && m <= a.max(b) * (1.0 + 1e-12));
        prop_assert!((m - face_mobility(b, a, beta)).abs() <= 1e-12 * m.max(1.0));
    }

    #[test]
    fn transport_conserves_mass(z in field(0.0, 2.0), p in field(0.0, 1.0), beta in 1.5..3.0f64) {
        let t = transport_term(&z, &p, beta);
        prop_assert!(t.integral().abs() <= 1e-12 * (1.0 + t.max_abs()) * grid().area());
    }

    #[test]
    fn pressure_gain_is_the_source_mass(p in field(0.0, 1.0), src in field(0.0, 2.0), tau in 1e-4..0.5f64) {
        let params = SchemeParams { tau, ..SchemeParams::default() };
        let next = pressure_step(&p, &src, &params).unwrap();
        let gain = next.integral() - p.integral() - tau * src.integral();
        prop_assert!(gain.abs() <= 1e-12 * (next.integral() + 1.0));
        prop_assert!(next.min() >= -1e-12 * next.max_abs());
    }

    #[test]
    fn truncation_pairing_is_monotone(a in field(0.0, 3.0), b in field(0.0, 3.0)) {
        let t = truncation_probe(
            &Trajectory::single(a.clone(), a),
            &Trajectory::single(b.clone(), b),
            &[0.5, 1.0, 2.0],
            2.0,
        );
        prop_assert!(t.nonnegative && t.monotone);
    }

    #[test]
    fn gdelta_increases_to_positive_mass(p in field(-0.5, 1.0)) {
        let t = gdelta_probe(&p, &[1.0, 0.1, 0.01, 1e-8]);
        prop_assert!(t.monotone && t.bounded);
        prop_assert!(t.limit - t.rows[3].1 <= 1e-8 * grid().area() + 1e-14);
    }

    #[test]
    fn snapshot_bytes_round_trip(f in field(-1e6, 1e6), time in 0.0..10.0f64) {
        let mut buf = Vec::new();
        snapshot::encode(&f, time, "p", &mut buf).unwrap();
        let back = snapshot::decode(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.field, f);
        prop_assert_eq!(back.time, time);
    }
}
