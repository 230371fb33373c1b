use fracpinn::fracops::{l1_weights, TimeGrid};
use fracpinn::fracsolver::{infectious_peak, simulate, SolverConfig};
use fracpinn::loss::loss_physics_values;
use fracpinn::model::{EpidemicParams, SimplexState};
use fracpinn::Execution;
use proptest::prelude::*;

fn mpox(alpha: f64) -> EpidemicParams {
    EpidemicParams::new(0.25, 0.13, 0.052, 0.005, alpha).unwrap()
}

fn ic() -> SimplexState {
    SimplexState::new(0.99, 0.005, 0.005, 0.0, 0.0).unwrap()
}

#[test]
fn solver_trajectory_has_zero_physics_residual() {
    for &alpha in &[0.6, 0.9, 1.0] {
        let tr = simulate(&ic(), &mpox(alpha), 0.5, 600, &SolverConfig::default()).unwrap();
        let grid = TimeGrid::new(0.5, 600).unwrap();
        let stencil = l1_weights(alpha, grid.dt(), 600).unwrap();
        let r = loss_physics_values(&tr.arrays(), &stencil, &mpox(alpha), 600, Execution::default()).unwrap();
        assert!(r < 1e-18, "α={alpha}: residual {r:e}");
        let off = l1_weights(alpha - 0.05, grid.dt(), 600).unwrap();
        let r_off = loss_physics_values(&tr.arrays(), &off, &mpox(alpha), 600, Execution::default()).unwrap();
        assert!(r_off > 1e-10);
    }
}

#[test]
fn memory_delays_and_flattens_the_peak() {
    let peaks: Vec<(f64, f64)> = [1.0, 0.95, 0.9]
        .iter()
        .map(|&a| infectious_peak(&simulate(&ic(), &mpox(a), 0.5, 600, &SolverConfig::default()).unwrap()))
        .collect();
    for w in peaks.windows(2) {
        assert!(w[1].0 >= w[0].0 && w[1].1 <= w[0].1, "{peaks:?}");
    }
}

fn simplex() -> impl Strategy<Value = SimplexState> {
    prop::array::uniform5(0.0f64..1.0).prop_filter("non-degenerate", |w| w.iter().sum::<f64>() > 1e-3).prop_map(|w| {
        let s: f64 = w.iter().sum();
        let mut x = w.map(|v| v / s);
        // keep 1 - d away from zero
        if x[4] > 0.9 {
            let excess = x[4] - 0.9;
            x[4] = 0.9;
            x[0] += excess;
        }
        SimplexState::from_array(x).unwrap()
    })
}

fn params() -> impl Strategy<Value = EpidemicParams> {
    (0.1f64..0.4, 0.077f64..0.3, 0.036f64..0.1, 0.001f64..0.03, 0.6f64..=1.0)
        .prop_map(|(b, s, g, m, a)| EpidemicParams::new(b, s, g, m, a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_stay_on_the_simplex(x0 in simplex(), p in params(), dt in 0.1f64..1.0) {
        let tr = simulate(&x0, &p, dt, 200, &SolverConfig::default()).unwrap();
        for s in tr.states() {
            prop_assert!((s.sum() - 1.0).abs() < 1e-9);
            prop_assert!(s.to_array().iter().all(|v| *v > -1e-12));
        }
    }
}
