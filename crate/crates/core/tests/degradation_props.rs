mod common;

use common::{rel_t, rng, rten};
use gtf_hsr::degradation::{
    apply_spatial, apply_spatial_conv, build_dense_d, build_spatial_degradations, make_agk, make_custom, make_igk,
    BlurKernel, DownsampleSpec,
};
use gtf_hsr::kronecker::{kron_rank, KronShape, RankPolicy};
use gtf_hsr::tensor::{mode_fold, mode_unfold};
use gtf_hsr::{DenseMatrix, DenseTensor};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sum of `rank` outer products of positive vectors, so the rank is exact.
fn kernel_of_rank(g: &mut ChaCha8Rng, radius: usize, rank: usize) -> BlurKernel {
    let side = 2 * radius + 1;
    let mut phi = DenseMatrix::zeros(side, side);
    for _ in 0..rank {
        let u: Vec<f64> = (0..side).map(|_| g.random_range(0.1..1.0)).collect();
        let v: Vec<f64> = (0..side).map(|_| g.random_range(0.1..1.0)).collect();
        phi.axpy(1.0, &DenseMatrix::from_fn(side, side, |i, j| u[i] * v[j]));
    }
    make_custom(phi).unwrap()
}

fn spec(g: &mut ChaCha8Rng, factor: usize) -> DownsampleSpec {
    DownsampleSpec { factor, offsets: [g.random_range(0..factor), g.random_range(0..factor)], shift: None }
}

/// Row `p` of `D` is the degraded unit impulse at high-resolution pixel `p`.
fn dense_d_from_impulses(k: &BlurKernel, ds: &DownsampleSpec, m1: usize, m2: usize) -> DenseMatrix {
    let (l1, l2) = (m1 / ds.factor, m2 / ds.factor);
    let mut d = DenseMatrix::zeros(m1 * m2, l1 * l2);
    for p in 0..m1 * m2 {
        let mut data = vec![0.0; m1 * m2];
        data[p] = 1.0;
        let low = apply_spatial_conv(&DenseTensor::new(vec![m1, m2, 1], data).unwrap(), k, ds).unwrap();
        for (q, v) in low.data().iter().enumerate() {
            d.set(p, q, *v);
        }
    }
    d
}

#[test]
fn kronecker_rank_of_d_equals_kernel_rank() {
    let mut g = rng(11);
    for (m, factors) in [(12usize, &[2usize, 3, 4][..]), (16, &[2, 4]), (24, &[2, 3, 4])] {
        for &d in factors {
            for rank in 1..=3 {
                let k = kernel_of_rank(&mut g, 2, rank);
                assert_eq!(k.rank(1e-8).unwrap(), rank);
                let ds = spec(&mut g, d);
                let dense = dense_d_from_impulses(&k, &ds, m, m);
                let s = KronShape::new(m, m, m / d, m / d).unwrap();
                assert_eq!(kron_rank(&dense, s, 1e-8).unwrap(), rank, "M={m} d={d} rank={rank}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn pair_model_matches_dense_d(
        m in prop::sample::select(vec![6usize, 8, 12]),
        factor in prop::sample::select(vec![1usize, 2, 3]),
        radius in 0usize..3,
        rank in 1usize..4,
        bands in 1usize..4,
        seed in any::<u64>(),
    ) {
        prop_assume!(m % factor == 0);
        let mut g = rng(seed);
        let k = kernel_of_rank(&mut g, radius, rank.min(2 * radius + 1));
        let ds = spec(&mut g, factor);
        let side = 2 * radius + 1;
        let op = build_spatial_degradations(&k, m, m + factor, &ds, RankPolicy::Exact { rank: side }).unwrap();
        let z = rten(&mut g, &[m, m + factor, bands]);
        let x = apply_spatial(&z, &op).unwrap();
        let via_d = mode_fold(&mode_unfold(&z, 3).unwrap().dot(&build_dense_d(&op).unwrap()), 3, x.dims()).unwrap();
        prop_assert!(via_d.sub(&x).frobenius_norm() <= 1e-10 * x.frobenius_norm());
    }

    #[test]
    fn pair_model_matches_convolution(radius in 0usize..4, rank in 1usize..4, factor in 1usize..4, seed in any::<u64>()) {
        let mut g = rng(seed);
        let k = kernel_of_rank(&mut g, radius, rank.min(2 * radius + 1));
        let ds = spec(&mut g, factor);
        let (m1, m2) = (factor * 5, factor * 4);
        prop_assume!(2 * radius + 1 <= m2);
        let exact = k.rank(1e-8).unwrap().max(1);
        let op = build_spatial_degradations(&k, m1, m2, &ds, RankPolicy::Exact { rank: exact }).unwrap();
        let z = rten(&mut g, &[m1, m2, 3]);
        let conv = apply_spatial_conv(&z, &k, &ds).unwrap();
        prop_assert!(rel_t(&apply_spatial(&z, &op).unwrap(), &conv) <= 1e-10);
    }

    #[test]
    fn normalized_kernels_preserve_constants(
        radius in 0usize..4,
        theta in 0.0f64..3.2,
        a in 0.2f64..2.0,
        b in 0.2f64..2.0,
        level in -5.0f64..5.0,
    ) {
        let ds = DownsampleSpec::new(2);
        let z = DenseTensor::from_fn(&[8, 8, 2], |_| level);
        for k in [make_igk(radius, 1.0 / a).unwrap(), make_agk(radius, theta, a, b).unwrap()] {
            let x = apply_spatial_conv(&z, &k, &ds).unwrap();
            prop_assert!(x.data().iter().all(|v| (v - level).abs() <= 1e-12 * level.abs().max(1.0)));
        }
    }

    #[test]
    fn equal_axes_give_isotropic_kernel(radius in 0usize..5, theta in -3.2f64..3.2, a in 0.1f64..3.0) {
        let agk = make_agk(radius, theta, a, a).unwrap();
        let igk = make_igk(radius, 1.0 / a).unwrap();
        prop_assert!(agk.phi.max_abs_diff(&igk.phi) <= 1e-12);
    }
}
