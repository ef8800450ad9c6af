use hjlab::grid::{
    elliptic_apply, gradient_central, lp_space_norm, lq_spacetime_norm, CoefField, ScalarField,
    TimeGrid, TorusGrid, Trajectory, VectorField,
};
use hjlab::hamiltonian::PowerHamiltonian;
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid_strategy() -> impl Strategy<Value = TorusGrid> {
    (1usize..=2, prop::sample::select(vec![8usize, 12, 16]))
        .prop_map(|(d, n)| TorusGrid::new(d, n).unwrap())
}

fn values(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

fn field_in(grid: TorusGrid, lo: f64, hi: f64) -> impl Strategy<Value = ScalarField> {
    values(grid.len(), lo, hi).prop_map(move |v| ScalarField::new(grid, v).unwrap())
}

/// Smooth symmetric positive definite coefficients built from random modes.
fn coef(grid: TorusGrid, m: [f64; 4]) -> CoefField {
    CoefField::from_fn(grid, |x| {
        let s = (2.0 * PI * x[0]).sin();
        let c = (2.0 * PI * x[1]).cos();
        let a11 = 1.0 + 0.4 * m[0] * s;
        let a22 = 1.0 + 0.4 * m[1] * c;
        let a12 = 0.3 * m[2] * s * c;
        [a11, a12, a22 + 0.1 * m[3].abs()]
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_of_constant_vanishes(g in grid_strategy(), c in -1e3f64..1e3) {
        let f = ScalarField::constant(g, c).unwrap();
        let df = gradient_central(&f);
        prop_assert!(df.values().iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn elliptic_operator_is_linear(
        (g, f, h) in grid_strategy().prop_flat_map(|g| (Just(g), field_in(g, -1.0, 1.0), field_in(g, -1.0, 1.0))),
        m in prop::array::uniform4(-1.0f64..1.0),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let a = coef(g, m);
        let comb = f.axpby(alpha, &h, beta).unwrap();
        let lhs = elliptic_apply(&a, &comb).unwrap();
        let rf = elliptic_apply(&a, &f).unwrap();
        let rh = elliptic_apply(&a, &h).unwrap();
        let scale = 1.0 / (g.h() * g.h());
        for i in 0..g.len() {
            let rhs = alpha * rf.get(i) + beta * rh.get(i);
            prop_assert!((lhs.get(i) - rhs).abs() <= 1e-11 * scale, "cell {i}: {} vs {rhs}", lhs.get(i));
        }
    }

    #[test]
    fn lp_norms_increase_with_p(
        f in grid_strategy().prop_flat_map(|g| field_in(g, -1.0, 1.0)),
        p in 1.0f64..12.0,
        dp in 0.0f64..12.0,
    ) {
        let a = lp_space_norm(&f, p).unwrap();
        let b = lp_space_norm(&f, p + dp).unwrap();
        let s = lp_space_norm(&f, f64::INFINITY).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12) + 1e-300);
        prop_assert!(b <= s * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn spacetime_sup_dominates(
        g in grid_strategy(),
        steps in 1usize..6,
        t1 in 0.1f64..2.0,
        q in 1.0f64..8.0,
        seed in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let tg = TimeGrid::new(0.0, t1, steps).unwrap();
        let u = Trajectory::from_fn(g, tg, |x, t| {
            seed[0] * (2.0 * PI * x[0] + seed[1] * t).sin() + seed[2] * x[1] * t + seed[3] * (seed[4] * x[0]).cos() + seed[5]
        })
        .unwrap();
        let sup = lq_spacetime_norm(&u, f64::INFINITY).unwrap();
        let lq = lq_spacetime_norm(&u, q).unwrap();
        // |Q| = t1 on the unit torus.
        prop_assert!(sup * (1.0 + 1e-12) >= lq / t1.powf(1.0 / q));
    }
}

fn ham_strategy() -> impl Strategy<Value = (PowerHamiltonian, f64)> {
    (
        1usize..=2,
        1.2f64..4.0,
        prop::collection::vec(0.5f64..2.0, 4),
    )
        .prop_map(|(d, gamma, m)| {
            let g = TorusGrid::new(d, 8).unwrap();
            let h =
                ScalarField::from_fn(g, |x| m[0] + 0.3 * m[1] * (2.0 * PI * x[0]).sin().powi(2))
                    .unwrap();
            (
                PowerHamiltonian::new(gamma, h, VectorField::zeros(g)).unwrap(),
                gamma,
            )
        })
}

fn vec2(d: usize, a: f64, b: f64) -> [f64; 2] {
    if d == 1 {
        [a, 0.0]
    } else {
        [a, b]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn euler_homogeneity((ham, gamma) in ham_strategy(), cell in 0usize..64, r in 0.1f64..5.0, th in 0.0f64..(2.0 * PI)) {
        let g = *ham.grid();
        let x = cell % g.len();
        let p = vec2(g.d(), r * th.cos(), r * th.sin());
        let dp = ham.eval_dph(x, p).unwrap();
        let lhs = dp[0] * p[0] + dp[1] * p[1] - ham.eval_h(x, p) + ham.shift();
        let pn = p[0].hypot(p[1]);
        let rhs = (gamma - 1.0) * ham.h().get(x) * pn.powf(gamma);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn conjugate_exponents((ham, gamma) in ham_strategy()) {
        let gp = ham.gamma_prime();
        prop_assert!((1.0 / gamma + 1.0 / gp - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn legendre_maximizer_is_critical(
        (ham, _) in ham_strategy(),
        cell in 0usize..64,
        r in 0.05f64..5.0,
        th in 0.0f64..(2.0 * PI),
        b in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let g = *ham.grid();
        let x = cell % g.len();
        // Add a constant drift so that the b·p part is exercised.
        let ham = PowerHamiltonian::new(ham.gamma(), ham.h().clone(), VectorField::constant(g, vec2(g.d(), b[0], b[1])).unwrap()).unwrap();
        let nu = vec2(g.d(), r * th.cos(), r * th.sin());
        let lv = ham.legendre(x, nu);
        let dp = ham.eval_dph(x, lv.maximizer).unwrap();
        prop_assert!((dp[0] - nu[0]).abs() <= 1e-8 && (dp[1] - nu[1]).abs() <= 1e-8, "{dp:?} vs {nu:?}");
    }

    #[test]
    fn lagrangian_bracket(gamma in 1.2f64..4.0, h in 0.5f64..2.0, r in 0.0f64..1.0, th in 0.0f64..(2.0 * PI), d in 1usize..=2) {
        let g = TorusGrid::new(d, 8).unwrap();
        let ham = PowerHamiltonian::constant(g, gamma, h, [0.0, 0.0]).unwrap();
        let cert = ham.certify_bounds(2.0, 1000).unwrap();
        let c = cert.c_l.expect("power Hamiltonians have a finite C_L");
        let nu = vec2(d, r * th.cos(), r * th.sin());
        let a = nu[0].hypot(nu[1]).powf(cert.gamma_prime);
        let l = ham.legendre(0, nu).value;
        let slack = 1e-10 * (1.0 + a);
        prop_assert!(a / c - c <= l + slack);
        prop_assert!(l <= c * a + slack);
    }

    /// Re-conjugating `L` on a `ν`-grid of spacing `δ` recovers `H` up to
    /// `O(δ²)`.
    #[test]
    fn double_conjugate_recovers_h(gamma in 1.5f64..3.0, h in 0.5f64..2.0, p in -2.0f64..2.0) {
        let g = TorusGrid::new(1, 8).unwrap();
        let ham = PowerHamiltonian::constant(g, gamma, h, [0.0, 0.0]).unwrap();
        let delta = 1e-2;
        let r = 30.0;
        let k = (r / delta) as i64;
        let best = (-k..=k)
            .map(|i| {
                let nu = i as f64 * delta;
                nu * p - ham.legendre(0, [nu, 0.0]).value
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let exact = ham.eval_h(0, [p, 0.0]);
        prop_assert!(best <= exact + 1e-9);
        prop_assert!(exact - best <= 1e-2 * (1.0 + exact), "{best} vs {exact}");
    }
}
