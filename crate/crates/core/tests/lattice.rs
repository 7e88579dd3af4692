use fpm_core::lattice::{
    fractional_laplacian, fractional_laplacian_quadrature, make_grid, read_snapshot, spectral, stencil, write_snapshot,
    ScalarField,
};

#[test]
fn snapshot_file_round_trip() {
    let g = make_grid(16, 3.0).unwrap();
    let f = ScalarField::from_fn(&g, |x, y| x.sin() * y.cos() + 0.25);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("f.fpm");
    write_snapshot(&path, &f, 0.125, "u").unwrap();
    let snap = read_snapshot(&path).unwrap();
    assert_eq!(snap.time, 0.125);
    assert_eq!(snap.name, "u");
    assert_eq!(snap.field, f);
}

#[test]
fn mixed_mode_eigenvalue() {
    let g = make_grid(64, std::f64::consts::PI).unwrap();
    let f = ScalarField::from_fn(&g, |x, y| (3.0 * x + 4.0 * y).cos());
    for s in [0.25, 0.6, 0.9] {
        let out = fractional_laplacian(&f, s).unwrap();
        let c = 25f64.powf(s);
        assert!(out.zip_map(&f, |a, b| a - c * b).max_abs() < 1e-10 * c, "s = {s}");
    }
}

#[test]
fn five_point_laplacian_matches_its_symbol() {
    let g = make_grid(32, 5.0).unwrap();
    let f = ScalarField::from_fn(&g, |x, y| (-(x * x + 2.0 * y * y) / 4.0).exp());
    let spectral = spectral::forward(&f).apply_indexed(|i| -g.difference_symbol(i));
    let direct = stencil::laplacian(&f);
    assert!(spectral.sub(&direct).max_abs() < 1e-12 * direct.max_abs());
}

#[test]
fn quadrature_agrees_with_cosine_closed_form() {
    let f = |x: f64, _: f64| x.cos();
    for s in [0.3, 0.75] {
        let est = fractional_laplacian_quadrature(&f, s, (0.4, -1.0), 1.0, 60.0).unwrap();
        assert!((est.value - 0.4f64.cos()).abs() < 1e-3, "s = {s}: {}", est.value);
    }
}
