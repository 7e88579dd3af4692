use crate::diagnostics::{battery, Trajectory};
use crate::lattice::ScalarField;

/// `T_k(x) = min(x, k)`.
pub fn truncate(x: f64, k: f64) -> f64 {
    x.min(k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationRow {
    pub test: usize,
    pub k: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruncationTable {
    pub rows: Vec<TruncationRow>,
    pub nonnegative: bool,
    pub monotone: bool,
}

/// Frame weights: interval lengths ending at each frame, or `1` for a single frame.
fn weights(t: &Trajectory) -> Vec<f64> {
    if t.frames.len() == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0];
    w.extend(t.intervals().map(|(_, _, dt)| dt));
    w
}

/// `sum_t dt int (u_i - u_j)(T_k(u_i)^beta - T_k(u_j)^beta) phi` for each
/// battery function `phi` and each `k` in increasing order. Both trajectories
/// must share their frame times.
pub fn truncation_probe(a: &Trajectory, b: &Trajectory, k_list: &[f64], beta: f64) -> TruncationTable {
    assert_eq!(a.len(), b.len(), "trajectories have different frame counts");
    let Some(first) = a.frames.first() else {
        return TruncationTable {
            nonnegative: true,
            monotone: true,
            ..TruncationTable::default()
        };
    };
    let grid = first.u.grid();
    let mut ks = k_list.to_vec();
    ks.sort_by(f64::total_cmp);
    let w = weights(a);
    let tests: Vec<ScalarField> = battery(grid.half_width()).iter().map(|t| t.field(grid)).collect();
    let mut rows = Vec::new();
    for (ti, phi) in tests.iter().enumerate() {
        for &k in &ks {
            let pow = |x: f64| truncate(x.max(0.0), k).powf(beta);
            let value: f64 = a
                .frames
                .iter()
                .zip(&b.frames)
                .zip(&w)
                .map(|((fa, fb), &dt)| {
                    let g = fa.u.zip_map(&fb.u, |x, y| (x - y) * (pow(x) - pow(y)));
                    dt * g.dot(phi)
                })
                .sum();
            rows.push(TruncationRow { test: ti, k, value });
        }
    }
    let nonnegative = rows.iter().all(|r| r.value >= 0.0);
    let monotone = rows
        .windows(2)
        .filter(|w| w[0].test == w[1].test)
        .all(|w| w[1].value >= w[0].value);
    TruncationTable {
        rows,
        nonnegative,
        monotone,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdeltaTable {
    /// `(delta, int G_delta(p) p)` for decreasing `delta`.
    pub rows: Vec<(f64, f64)>,
    /// `int p_+`.
    pub limit: f64,
    pub monotone: bool,
    pub bounded: bool,
}

/// `int G_delta(p) p` with `G_delta(x) = min(x_+/delta, 1)`, which increases
/// to `int p_+` as `delta` decreases.
pub fn gdelta_probe(p: &ScalarField, deltas: &[f64]) -> GdeltaTable {
    let mut ds = deltas.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    let rows: Vec<(f64, f64)> = ds
        .iter()
        .map(|&d| (d, p.integrate_with(|x| (x.max(0.0) / d).min(1.0) * x)))
        .collect();
    let limit = p.integrate_with(|x| x.max(0.0));
    let slack = 1e-14 * limit.abs();
    GdeltaTable {
        monotone: rows.windows(2).all(|w| w[1].1 >= w[0].1 - slack),
        bounded: rows.iter().all(|r| r.1 <= limit + slack),
        rows,
        limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    #[test]
    fn scalar_spot_check() {
        let f = |x: f64, y: f64, k: f64| (x - y) * (truncate(x, k).powi(2) - truncate(y, k).powi(2));
        assert_eq!(f(2.0, 1.0, 1.0), 0.0);
        assert_eq!(f(2.0, 1.0, 3.0), 3.0);
    }

    #[test]
    fn identical_pair_is_zero() {
        let g = make_grid(16, 4.0).unwrap();
        let u = ScalarField::from_fn(&g, |x, y| (-(x * x + y * y)).exp());
        let t = Trajectory::single(u.clone(), u);
        let tab = truncation_probe(&t, &t, &[0.5, 1.0, 2.0], 2.0);
        assert!(tab.rows.iter().all(|r| r.value == 0.0));
        assert!(tab.nonnegative && tab.monotone);
        assert_eq!(tab.rows.len(), 24);
    }

    #[test]
    fn gdelta_constant() {
        let g = make_grid(8, 2.0).unwrap();
        let p = ScalarField::constant(&g, 1.0);
        let tab = gdelta_probe(&p, &[2.0, 1.0, 0.5]);
        assert!((tab.rows[0].1 - g.area() / 2.0).abs() < 1e-12);
        assert!((tab.rows[2].1 - g.area()).abs() < 1e-12);
        assert!(tab.monotone && tab.bounded);
    }
}
