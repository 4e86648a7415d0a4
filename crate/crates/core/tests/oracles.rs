use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rlus_core::collapse::{collapse, init_estimate};
use rlus_core::gwalign::{brute_force_gw, entropic_gw, gw_cost, stage_b, threshold_to_permutation};
use rlus_core::stage_a::{
    block_sort_indices, candidate_pairs, forward_error, measure_error, run_stage_a, sort_within_blocks,
    AugmentedSystem, CandidateMode, StageAConfig,
};
use rlus_core::{
    depermute, fractional_hamming, generate, Coupling, DepermuteConfig, GwConfig, InstanceConfig, Permutation,
    RLocalPermutation,
};

fn gaussian(rows: usize, cols: usize, g: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| g.sample(StandardNormal))
}

/// Min-norm solution of a full-row-rank system through the normal equations.
fn min_norm_oracle(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let gram = a * a.transpose();
    a.transpose() * gram.cholesky().expect("full row rank").solve(b)
}

#[test]
fn init_estimate_is_the_min_norm_solution() {
    let mut g = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let b = gaussian(16, 8, &mut g);
        let x = gaussian(8, 1, &mut g);
        let pi = RLocalPermutation::sample(16, 4, &mut g).unwrap();
        let y = pi.apply(&(&b * &x)).unwrap();
        let cs = collapse(&b, &y, 4).unwrap();
        let expect = min_norm_oracle(&cs.b_tilde, &cs.y_tilde.column(0).into_owned());
        let est = cs.solve().unwrap();
        assert!((est.column(0) - &expect).norm() < 1e-10 * (1.0 + expect.norm()));
        let y_hat = init_estimate(&cs, &b).unwrap();
        assert!((y_hat.column(0) - &b * &expect).norm() < 1e-9 * (1.0 + expect.norm()));
    }
}

#[test]
fn forward_error_matches_dense_oracle_for_every_feasible_pair() {
    let mut g = ChaCha8Rng::seed_from_u64(12);
    let b = gaussian(8, 4, &mut g);
    let x = gaussian(4, 1, &mut g).column(0).into_owned();
    let pi = RLocalPermutation::sample(8, 4, &mut g).unwrap();
    let y = pi.apply_vec(&(&b * &x)).unwrap();
    let aug = AugmentedSystem::new(&b, &y, 4).unwrap();
    for k in 0..2 {
        for p in k * 4..k * 4 + 4 {
            for q in k * 4..k * 4 + 4 {
                let (err, xc) = forward_error(&b, &y, &aug, p, q).unwrap();
                let mut a = aug.b_aug.clone().insert_row(2, 0.0);
                a.row_mut(2).copy_from(&b.row(p));
                let rhs = aug.y_aug.clone().insert_row(2, y[q]);
                let xo = min_norm_oracle(&a, &rhs);
                assert!((&xc - &xo).norm() < 1e-10 * (1.0 + xo.norm()));
                assert!((err - (&y - &b * &xo).norm()).abs() < 1e-10 * (1.0 + err));
            }
        }
    }
}

#[test]
fn single_augmentation_matches_exhaustive_search() {
    // d = 3, r = 2, n = 4: two collapsed rows and exactly one append.
    let mut g = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..25 {
        let b = gaussian(4, 3, &mut g);
        let x = gaussian(3, 1, &mut g).column(0).into_owned();
        let clean = &b * &x;
        let cfg = StageAConfig::default();
        for blocks in (0..2).map(|_| (0..2).permutations(2)).multi_cartesian_product() {
            let pi = RLocalPermutation::from_blocks(2, blocks.into_iter().map(|m| Permutation::new(m).unwrap()).collect())
                .unwrap();
            let y = pi.apply_vec(&clean).unwrap();
            let out = run_stage_a(&b, &y, 2, &cfg).unwrap();
            assert_eq!(out.trace.len(), 1);

            let aug = AugmentedSystem::new(&b, &y, 2).unwrap();
            let x0 = aug.solve().unwrap();
            let y_hat = &b * &x0;
            let y_sorted = sort_within_blocks(y.as_slice(), 2);
            let mut best = f64::INFINITY;
            for k in 0..2 {
                let ps = block_sort_indices(y_hat.as_slice(), aug.p_mask(), 2, k);
                let qs = block_sort_indices(y.as_slice(), aug.q_mask(), 2, k);
                for (p, q) in candidate_pairs(&ps, &qs, CandidateMode::RankMatched).unwrap() {
                    let mut a = aug.b_aug.clone().insert_row(2, 0.0);
                    a.row_mut(2).copy_from(&b.row(p));
                    let rhs = aug.y_aug.clone().insert_row(2, y[q]);
                    let xc = a.lu().solve(&rhs).expect("square and generic");
                    best = best.min(measure_error(cfg.error_metric, &y, &y_sorted, &(&b * &xc), 2));
                }
            }
            let got = out.trace[0].forward_error;
            assert!((got - best).abs() < 1e-9 * (1.0 + best), "trial {trial}: {got} vs {best}");
        }
    }
}

fn symmetric(s: usize, g: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(s, s, |_, _| g.random_range(-1.0..1.0));
    &a + a.transpose()
}

fn conjugate(c: &DMatrix<f64>, pi: &Permutation) -> DMatrix<f64> {
    DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(pi.get(i), pi.get(j))])
}

#[test]
fn entropic_gw_recovers_planted_permutations() {
    let mut g = ChaCha8Rng::seed_from_u64(14);
    let cfg = GwConfig::default();
    let mut hits = 0;
    for _ in 0..100 {
        let src = symmetric(4, &mut g);
        let pi = Permutation::sample(4, &mut g);
        let tgt = conjugate(&src, &pi);
        let est = threshold_to_permutation(&entropic_gw(&src, &tgt, &cfg).unwrap());
        hits += usize::from(est == pi.inverse());
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn entropic_gw_against_brute_force_on_unplanted_pairs() {
    // Random unrelated pairs: the uniform-start local solver reaches the
    // global optimum only part of the time, so the rate is reported and
    // pinned at its measured level rather than at 100%.
    let mut g = ChaCha8Rng::seed_from_u64(15);
    let cfg = GwConfig::default();
    let mut close = 0;
    for _ in 0..100 {
        let (src, tgt) = (symmetric(5, &mut g), symmetric(5, &mut g));
        let coupling = entropic_gw(&src, &tgt, &cfg).unwrap();
        let rounded = Coupling::from_permutation(&threshold_to_permutation(&coupling));
        let (_, best) = brute_force_gw(&src, &tgt).unwrap();
        assert!(gw_cost(&src, &tgt, &rounded).unwrap() + 1e-9 >= best);
        close += usize::from(gw_cost(&src, &tgt, &coupling).unwrap() <= 1.05 * best);
    }
    println!("entropic GW cost within 5% of brute force: {close}/100");
    assert!(close >= 50, "{close}/100");
}

#[test]
fn stage_b_recovers_toy_planted_blocks() {
    let mut g = ChaCha8Rng::seed_from_u64(16);
    let mut hits = 0;
    for _ in 0..50 {
        let clean = gaussian(6, 4, &mut g);
        let pi = RLocalPermutation::sample(6, 3, &mut g).unwrap();
        let y = pi.apply(&clean).unwrap();
        let out = stage_b(&clean, &y, 3, &GwConfig::default()).unwrap();
        hits += usize::from(out.pi_hat == pi);
    }
    println!("stage_b toy recovery: {hits}/50");
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn single_block_stage_b_matches_brute_force_qap() {
    let mut g = ChaCha8Rng::seed_from_u64(17);
    let mut agree = 0;
    for _ in 0..100 {
        let clean = gaussian(4, 3, &mut g);
        let pi = RLocalPermutation::sample(4, 4, &mut g).unwrap();
        let y = pi.apply(&clean).unwrap();
        let out = stage_b(&clean, &y, 4, &GwConfig::default()).unwrap();
        let c_hat = &clean * clean.transpose();
        let c_obs = &y * y.transpose();
        // brute force over pi: ||C_Y - pi C_hat pi^T||
        let (bf, _) = brute_force_gw(&c_obs, &c_hat).unwrap();
        agree += usize::from(out.pi_hat.block(0) == &bf);
    }
    assert!(agree >= 90, "{agree}/100");
}

/// Distortion of the permutation minimizing the least-squares residual over
/// all r-local permutations (ties keep the first found).
fn qap_oracle_distortion(b: &DMatrix<f64>, y: &DMatrix<f64>, r: usize, truth: &RLocalPermutation) -> f64 {
    let k = b.nrows() / r;
    let mut best = (f64::INFINITY, 1.0);
    for blocks in (0..k).map(|_| (0..r).permutations(r)).multi_cartesian_product() {
        let pi = RLocalPermutation::from_blocks(r, blocks.into_iter().map(|m| Permutation::new(m).unwrap()).collect())
            .unwrap();
        let pb = pi.apply(b).unwrap();
        let x = pb.clone().svd(true, true).solve(y, 1e-12).unwrap();
        let resid = (&pb * x - y).norm();
        if resid < best.0 - 1e-12 {
            best = (resid, fractional_hamming(&pi, truth).unwrap());
        }
    }
    best.1
}

#[test]
fn pipeline_never_beats_the_qap_oracle() {
    for seed in 0..5 {
        let inst = generate::<f64>(&InstanceConfig { n: 8, d: 3, m: 4, r: 4, snr_db: None, seed }).unwrap();
        let sol = depermute(&inst.b, &inst.y, 4, &DepermuteConfig::default()).unwrap();
        let ours = fractional_hamming(&sol.pi_hat, &inst.pi_star).unwrap();
        let oracle = qap_oracle_distortion(&inst.b, &inst.y, 4, &inst.pi_star);
        println!("seed {seed}: pipeline {ours:.3}, oracle {oracle:.3}");
        assert!(ours >= oracle);
    }
}

#[test]
fn pipeline_is_equivariant_to_local_relabeling() {
    let mut g = ChaCha8Rng::seed_from_u64(18);
    for seed in 0..3 {
        let inst = generate::<f64>(&InstanceConfig { n: 48, d: 8, m: 4, r: 4, snr_db: Some(30.0), seed }).unwrap();
        let sigma = RLocalPermutation::sample(48, 4, &mut g).unwrap();
        let cfg = DepermuteConfig::default();
        let a = depermute(&inst.b, &inst.y, 4, &cfg).unwrap();
        let b = depermute(&inst.b, &sigma.apply(&inst.y).unwrap(), 4, &cfg).unwrap();
        assert!((&a.x_hat - &b.x_hat).norm() < 1e-10 * a.x_hat.norm());
        assert_eq!(sigma.then(&a.pi_hat).unwrap(), b.pi_hat);
    }
}
