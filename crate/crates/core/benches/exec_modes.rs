use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracpinn::data::{make_synthetic, NoiseSpec};
use fracpinn::fracops::{caputo_l1_batch, l1_weights};
use fracpinn::loss::{AlphaControl, LossMode, PinnProblem};
use fracpinn::model::unconstrain;
use fracpinn::net::{init_xavier, OutputHead};
use fracpinn::{simulate, EpidemicParams, Execution, LossWeights, ParamBounds, SimplexState, SolverConfig};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn truth() -> (SimplexState, EpidemicParams) {
    (
        SimplexState::new(0.99, 0.005, 0.005, 0.0, 0.0).unwrap(),
        EpidemicParams::new(0.25, 0.13, 0.052, 0.005, 0.9).unwrap(),
    )
}

fn l1_batch(c: &mut Criterion) {
    let (ic, p) = truth();
    let mut group = c.benchmark_group("caputo_l1_batch");
    for n in [300, 600, 1200] {
        let traj = simulate(&ic, &p, 300.0 / n as f64, n, &SolverConfig::default()).unwrap();
        let values = traj.arrays();
        let stencil = l1_weights(0.9, traj.dt(), n).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| caputo_l1_batch(black_box(&values), &stencil, n, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn joint_loss(c: &mut Criterion) {
    let (ic, p) = truth();
    let traj = simulate(&ic, &p, 0.5, 600, &SolverConfig::default()).unwrap();
    let obs = make_synthetic(&traj, 1, &NoiseSpec::noise_free()).unwrap();
    let bounds = ParamBounds::default();
    let raw = unconstrain(&p, &bounds).unwrap();
    let net = init_xavier(&[1, 64, 64, 64, 5], OutputHead::Softmax, 0).unwrap();
    let problem = PinnProblem::new(traj.grid().unwrap(), obs, ic, LossWeights::default(), bounds).unwrap();
    let mut group = c.benchmark_group("joint_loss_and_gradient");
    group.sample_size(20);
    for (name, exec) in MODES {
        let problem = problem.clone().with_exec(exec);
        group.bench_function(name, |b| {
            b.iter(|| problem.evaluate(black_box(&net), &raw, LossMode::Joint, AlphaControl::Free).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, l1_batch, joint_loss);
criterion_main!(benches);
