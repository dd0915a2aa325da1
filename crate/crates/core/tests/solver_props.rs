mod common;

use common::{rel_t, rmat, rng, rten};
use gtf_hsr::degradation::{
    make_agk, make_band_average_response, make_igk, numeric_rank_policy, simulate_pair, BlurKernel, DegradationModel,
    DownsampleSpec,
};
use gtf_hsr::solver::{fuse, sylvester_like_solve, SolverConfig, SylvesterOperator};
use gtf_hsr::synthetic::{generate_scene, SceneSpec};
use gtf_hsr::tensor::{multi_mode_product, tucker_reconstruct};
use gtf_hsr::DenseTensor;
use rand::Rng;

#[test]
fn sylvester_stationarity_and_exact_recovery() {
    let mut g = rng(21);
    for _ in 0..20 {
        let core = [g.random_range(1..5), g.random_range(1..5), g.random_range(1..4)];
        let rows = [core[0] + g.random_range(0..4), core[1] + g.random_range(0..4), core[2] + g.random_range(0..3)];
        let q: Vec<_> = (0..3).map(|n| rmat(&mut g, rows[n], core[n])).collect();
        let h = rten(&mut g, &rows);
        let k = rten(&mut g, &core);
        let tau = g.random_range(0.1..5.0);
        let op = SylvesterOperator::new(&q[0], &q[1], &q[2]).unwrap();
        let s = op.solve(&h, &k, tau).unwrap();
        let at_s = op.gradient(&s, &h, &k, tau).unwrap().frobenius_norm();
        let at_k = op.gradient(&k, &h, &k, tau).unwrap().frobenius_norm();
        assert!(at_s <= 1e-8 * at_k, "stationarity {at_s} vs {at_k}");

        let truth = rten(&mut g, &core);
        let exact = multi_mode_product(&truth, &[&q[0], &q[1], &q[2]]).unwrap();
        let back = sylvester_like_solve(&exact, &q[0], &q[1], &q[2], &k, 0.0).unwrap();
        assert!(rel_t(&back, &truth) <= 1e-10);
    }
}

struct Case {
    x: DenseTensor,
    y: DenseTensor,
    model: DegradationModel,
}

fn case(kernel: &BlurKernel) -> Case {
    let scene = generate_scene(&SceneSpec {
        dims: [16, 16, 8],
        ranks: [8, 8, 4],
        block: [2, 2, 2],
        active_fraction: 0.6,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let wl: Vec<f64> = (0..8).map(|k| 400.0 + 50.0 * k as f64).collect();
    let r = make_band_average_response(&wl, &[(380.0, 520.0), (520.0, 620.0), (620.0, 760.0)]).unwrap();
    let pol = numeric_rank_policy(kernel, 1e-8).unwrap();
    let (x, y, model) = simulate_pair(&scene.sri, kernel, &DownsampleSpec::new(2), &r, pol, None).unwrap();
    Case { x, y, model }
}

fn cfg() -> SolverConfig {
    SolverConfig {
        l1: 10,
        l2: 10,
        k1: 8,
        k2: 8,
        c: 4,
        block: [2, 2, 2],
        rho0: 0.1,
        admm_max_iter: 150,
        ..Default::default()
    }
}

#[test]
fn estimate_is_the_tucker_reconstruction_and_deterministic() {
    let c = case(&make_agk(2, 0.6, 0.4, 1.3).unwrap());
    assert!(c.model.kr() > 1);
    let a = fuse(&c.x, &c.y, &c.model, &cfg()).unwrap();
    assert!(rel_t(&a.sri_estimate, &tucker_reconstruct(&a.factors).unwrap()) <= 1e-12);
    let b = fuse(&c.x, &c.y, &c.model, &cfg()).unwrap();
    assert_eq!(a.sri_estimate, b.sri_estimate);
    assert_eq!(a.factors.core, b.factors.core);
    assert_eq!(a.history.coding.len(), b.history.coding.len());
}

#[test]
fn truncating_a_rank_one_model_changes_nothing() {
    let c = case(&make_igk(2, 1.0).unwrap());
    assert_eq!(c.model.kr(), 1);
    let full = fuse(&c.x, &c.y, &c.model, &cfg()).unwrap();
    let trunc = fuse(&c.x, &c.y, &c.model, &SolverConfig { kr_truncate: Some(1), ..cfg() }).unwrap();
    assert_eq!(full.sri_estimate, trunc.sri_estimate);
    assert_eq!(trunc.history.kr_used, 1);
}

#[test]
fn combined_residual_trends_down() {
    let c = case(&make_agk(2, 0.6, 0.4, 1.3).unwrap());
    let out = fuse(&c.x, &c.y, &c.model, &cfg()).unwrap();
    let rec = &out.history.coding;
    let mut checked = 0;
    for k in 5..=rec.len() / 10 {
        assert!(rec[10 * k - 1].combined <= rec[k - 1].combined, "iteration {} vs {}", 10 * k, k);
        checked += 1;
    }
    assert!(checked > 0, "only {} iterations", rec.len());
}
