use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use resalign::linalg::{dot, exact_svd_small, norm2, DenseMatrix};
use resalign::rametrics::{ra1_scores, ra4_fit};
use resalign::ujm::{
    ra1_construction, trace_inequality_check, ujm_analytic_optimum, ujm_grad, ujm_logit, ujm_objective, ujm_solve,
    ujm_verify, UjmSolveOptions, UjmState,
};

fn random_state(l: usize, d: usize, lambda: f64, seed: u64) -> UjmState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 0.4).unwrap();
    let js = (0..l).map(|_| DenseMatrix::from_fn(d, d, |_, _| n.sample(&mut rng))).collect();
    let w = (0..d).map(|_| n.sample(&mut rng)).collect();
    let dx: Vec<f64> = (0..d).map(|_| n.sample(&mut rng)).collect();
    UjmState::new(js, w, dx, if seed % 2 == 0 { 1.0 } else { -1.0 }, lambda).unwrap()
}

#[test]
fn objective_matches_forty_digit_evaluation() {
    let j1 = DenseMatrix::from_rows(&[vec![0.1, -0.2, 0.3], vec![0.05, 0.4, -0.1], vec![-0.3, 0.2, 0.15]]).unwrap();
    let j2 = DenseMatrix::from_rows(&[vec![0.2, 0.1, -0.05], vec![-0.15, 0.3, 0.25], vec![0.1, -0.2, 0.35]]).unwrap();
    let state = UjmState::new(vec![j1, j2], vec![0.7, -0.4, 0.9], vec![1.2, -0.5, 0.8], -1.0, 0.03).unwrap();
    // Evaluated with 40-digit arithmetic on the exact binary values above.
    let logit = 2.593800000000000021965763;
    let objective = 2.700749589345648924733487;
    assert!((ujm_logit(&state) - logit).abs() < 4e-16 * logit);
    assert!((ujm_objective(&state) - objective).abs() < 4e-16 * objective);
}

#[test]
fn logit_matches_step_by_step_propagation() {
    for seed in 0..5 {
        let state = random_state(4, 5, 0.1, seed);
        let mut h = state.delta_x.clone();
        for j in &state.jacobians {
            let mut next = h.clone();
            for a in 0..h.len() {
                for b in 0..h.len() {
                    next[a] += j[(a, b)] * h[b];
                }
            }
            h = next;
        }
        let expect = dot(&state.w, &h);
        assert!((ujm_logit(&state) - expect).abs() <= 1e-14 * (1.0 + expect.abs()));
    }
}

#[test]
fn gradient_matches_central_differences() {
    let step = 1e-5;
    for seed in 0..4 {
        let state = random_state(3, 6, 0.05, seed);
        let g = ujm_grad(&state);
        let f = |s: &UjmState| ujm_objective(s);
        let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
        let mut worst: f64 = 0.0;
        for k in 0..3 {
            for a in 0..6 {
                for b in 0..6 {
                    let mut up = state.clone();
                    up.jacobians[k][(a, b)] += step;
                    let mut down = state.clone();
                    down.jacobians[k][(a, b)] -= step;
                    worst = worst.max(rel((f(&up) - f(&down)) / (2.0 * step), g.jacobians[k][(a, b)]));
                }
            }
        }
        for a in 0..6 {
            let mut up = state.clone();
            up.w[a] += step;
            let mut down = state.clone();
            down.w[a] -= step;
            worst = worst.max(rel((f(&up) - f(&down)) / (2.0 * step), g.w[a]));
        }
        assert!(worst < 1e-7, "seed {seed}: {worst:e}");
    }
}

#[test]
fn analytic_optimum_matches_brute_force_fixture() {
    // Grid search with step 1e-3 over the feasible box, refined with
    // 40-digit Newton iteration.
    let o = ujm_analytic_optimum(1.0, 4, 1e-2).unwrap();
    assert!((o.s - 0.6037386108261290).abs() < 1e-8, "{o:?}");
    assert!((o.a - 0.9839913216224994).abs() < 1e-8, "{o:?}");
    assert!((o.objective - 0.013619808074407888).abs() < 1e-14, "{o:?}");
}

#[test]
fn solver_reaches_the_aligned_rank_one_optimum() {
    let dx = [0.9, -0.4, 0.3, 1.1, -0.7, 0.2, 0.5, -0.1];
    let sol = ujm_solve(&dx, 1.0, &UjmSolveOptions::default()).unwrap();
    assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
    let v = ujm_verify(&sol.state).unwrap();
    assert!(v.loss_gap.unwrap().abs() < 1e-6, "{v:?}");
    assert!(v.max_rank1_ratio() < 1e-3);
    assert!(v.alignment > 0.999);
    assert!(v.sv_cv < 1e-3);
    assert!(v.w_alignment > 0.999);
    assert!(!v.degenerate);
}

#[test]
fn heavy_penalty_drives_everything_to_zero() {
    let opts = UjmSolveOptions {
        lambda: 1e3,
        iters: 2000,
        lr: 1e-4,
        ..UjmSolveOptions::default()
    };
    let sol = ujm_solve(&[1.0, -1.0, 0.5], -1.0, &opts).unwrap();
    let v = ujm_verify(&sol.state).unwrap();
    assert!(v.top_singular_values.iter().all(|s| *s < 1e-6));
    assert!(norm2(&sol.state.w) < 1e-3);
    assert!((v.objective - std::f64::consts::LN_2).abs() < 1e-3);
    assert!(v.loss_gap.unwrap().abs() < 1e-9);
}

#[test]
fn verdict_alignment_matches_pairwise_cosines() {
    let state = random_state(4, 5, 0.1, 3);
    let v = ujm_verify(&state).unwrap();
    let tops: Vec<Vec<f64>> = state
        .jacobians
        .iter()
        .map(|j| exact_svd_small(j).unwrap().u.column(0))
        .collect();
    let mut expect: f64 = 1.0;
    for i in 0..4 {
        for k in i + 1..4 {
            expect = expect.min(dot(&tops[i], &tops[k]).abs() / (norm2(&tops[i]) * norm2(&tops[k])));
        }
    }
    assert!((v.alignment - expect).abs() < 1e-12);
    assert!(v.max_rank1_ratio() > 0.0);
}

#[test]
fn construction_realizes_straight_equispaced_lines() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..5 {
        let raw: Vec<f64> = (0..12).map(|_| n.sample(&mut rng)).collect();
        let u: Vec<f64> = raw.iter().map(|v| v / norm2(&raw)).collect();
        let h1: Vec<f64> = (0..12).map(|_| n.sample(&mut rng)).collect();
        let c = ra1_construction(&u, &h1, 16).unwrap();
        let shift = dot(&u, &h1);
        for step in c.trajectory.steps() {
            for (s, ui) in step.iter().zip(&u) {
                assert!((s - ui * shift).abs() < 1e-10);
            }
        }
        let scores = ra1_scores(&c.trajectory).unwrap();
        assert!((scores.collinearity - 1.0).abs() < 1e-10);
        assert!(scores.equispacing_cv.abs() < 1e-10);
        let tops: Vec<f64> = c.jacobians.iter().map(|j| exact_svd_small(j).unwrap().s[0]).collect();
        let fit = ra4_fit(&tops, 1).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-10);
    }
}

#[test]
fn trace_inequality_holds_on_random_rotations() {
    let rep = trace_inequality_check(5, 3, 2000, 1).unwrap();
    assert!(rep.passed(), "{rep:?}");
    assert!(rep.max_excess < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_history_never_increases_and_never_beats_the_oracle(
        dx in prop::collection::vec(-2.0f64..2.0, 2..5),
        blocks in 1usize..4,
        log_lambda in -2.0f64..0.0,
        seed in 0u64..1000,
    ) {
        prop_assume!(norm2(&dx) > 0.1);
        let lambda = 10f64.powf(log_lambda);
        let opts = UjmSolveOptions { blocks, lambda, iters: 400, seed, ..UjmSolveOptions::default() };
        let sol = ujm_solve(&dx, 1.0, &opts).unwrap();
        prop_assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
        let oracle = ujm_analytic_optimum(norm2(&dx), blocks, lambda).unwrap();
        prop_assert!(*sol.history.last().unwrap() >= oracle.objective - 1e-9);
    }

    #[test]
    fn gradient_of_zero_classifier_is_pure_decay(seed in 0u64..500, lambda in 0.0f64..2.0) {
        let mut state = random_state(3, 4, lambda, seed);
        state.w = vec![0.0; 4];
        let g = ujm_grad(&state);
        for (gj, j) in g.jacobians.iter().zip(&state.jacobians) {
            prop_assert!(gj.sub(&j.scaled(lambda)).max_abs() < 1e-14);
        }
    }
}
