use std::sync::OnceLock;

use hints_core::deeponet::{forward, train, Arch, DeepONetParams, TrainConfig};
use hints_core::fem::ProblemKind;
use hints_core::hints::{hints_solve, ElasticityFeed, HintsConfig};
use hints_core::linalg::norm2;
use hints_core::mesh::{GeometryTag, Point};
use hints_core::problem::{generate, operator_dataset, Sampler};
use proptest::prelude::*;

/// A Darcy network after a short run on real samples, shared by all tests.
fn darcy_net() -> &'static (Sampler, DeepONetParams) {
    static NET: OnceLock<(Sampler, DeepONetParams)> = OnceLock::new();
    NET.get_or_init(|| {
        let sampler = Sampler::new(ProblemKind::Darcy, GeometryTag::LShape, 8).unwrap();
        let data = operator_dataset(&sampler, &generate(&sampler, 1, 0, 16).unwrap()).unwrap();
        let cfg = TrainConfig { epochs: 20, batch_size: 8, seed: 2, ..Default::default() };
        let out = train(&data, None, &Arch::darcy(), &cfg).unwrap();
        (sampler, out.state.params.clone())
    })
}

fn largest_step(params: &DeepONetParams, input: &[f64], a: Point, b: Point, n: usize) -> f64 {
    let pts: Vec<Point> =
        (0..=n).map(|k| k as f64 / n as f64).map(|t| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]).collect();
    let out = forward(params, input, 1, &pts).unwrap();
    assert!(out.iter().all(|v| v.is_finite()));
    out.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn trunk_is_continuous_off_grid(
        ax in 0.0f64..1.0, ay in 0.0f64..1.0, bx in 0.0f64..1.0, by in 0.0f64..1.0, sample in 0u64..8,
    ) {
        let (sampler, params) = darcy_net();
        let input = sampler.branch_input(&sampler.instance(5, sample).unwrap());
        let (a, b) = ([ax, ay], [bx, by]);
        let coarse = largest_step(params, &input, a, b, 16);
        let fine = largest_step(params, &input, a, b, 256);
        // steps shrink with the spacing: a Lipschitz map, not just a finite one
        prop_assert!(fine <= coarse / 4.0 + 1e-15, "coarse {coarse:e} fine {fine:e}");
    }
}

#[test]
fn hints_reaches_machine_precision_on_the_source_geometry() {
    let (sampler, params) = darcy_net();
    let cfg = HintsConfig { n_r: 5, ..Default::default() };
    for i in 0..3 {
        let inst = sampler.instance(77, i).unwrap();
        let sys = sampler.system(&inst).unwrap();
        let (u, trace) = hints_solve(&sys, params, &sampler.masked_coeff(&inst), &cfg, None).unwrap();
        let u_star = sys.solve_direct().unwrap();
        let err: Vec<f64> = u.iter().zip(&u_star).map(|(a, b)| a - b).collect();
        assert!(trace.converged_at.is_some());
        assert!(norm2(&err) <= 1e-12 * norm2(&u_star).max(1.0));
        assert!(trace.records.iter().any(|r| r.step_kind.as_str() == "deeponet"));
    }
}

#[test]
fn elasticity_hints_converges_with_either_feed() {
    let sampler = Sampler::new(ProblemKind::Elasticity, GeometryTag::SquareCircle, 6).unwrap();
    let data = operator_dataset(&sampler, &generate(&sampler, 1, 0, 8).unwrap()).unwrap();
    let cfg = TrainConfig { epochs: 5, batch_size: 8, seed: 1, ..Default::default() };
    let params = train(&data, None, &Arch::elasticity(), &cfg).unwrap().state.params;
    let inst = sampler.instance(3, 0).unwrap();
    let sys = sampler.system(&inst).unwrap();
    for feed in [ElasticityFeed::Alternate, ElasticityFeed::Superpose] {
        let cfg = HintsConfig { n_r: 4, elasticity_feed: feed, ..Default::default() };
        let (_, trace) = hints_solve(&sys, &params, &sampler.masked_coeff(&inst), &cfg, None).unwrap();
        assert!(trace.converged_at.is_some(), "{feed:?}");
        assert!(trace.final_error() <= trace.threshold);
    }
}
