use mrf_spg::bounds::{grand_sum_pow, influence_matrix};
use mrf_spg::eval::{generate_ground_truth, roc_auc, sample_dataset, WeightBand};
use mrf_spg::exact::exact_objective;
use mrf_spg::optimizer::{exact_proximal_gradient, run_spg, SpgConfig, TauStrategy};
use mrf_spg::ModelParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_problem(seed: u64) -> mrf_spg::Dataset {
    let truth = generate_ground_truth(4, 0.5, WeightBand::default(), seed).unwrap();
    sample_dataset(&truth, 300, 100, seed).unwrap()
}

#[test]
fn accurate_steps_decrease_the_objective() {
    let mut checked = 0;
    for seed in 0..4 {
        let data = small_problem(seed);
        let cfg = SpgConfig {
            q: 200,
            strategy: TauStrategy::Fixed(2),
            max_iters: 30,
            master_seed: seed,
            instrument_exact: true,
            ..SpgConfig::default()
        };
        let run = run_spg(&data, &cfg).unwrap();
        let mut objectives: Vec<f64> = run
            .records
            .iter()
            .map(|r| r.exact.as_ref().unwrap().objective)
            .collect();
        objectives.push(run.final_exact_objective.unwrap());
        for (k, r) in run.records.iter().enumerate() {
            let e = r.exact.as_ref().unwrap();
            if e.delta_norm < 0.5 * r.g_norm {
                checked += 1;
                assert!(
                    objectives[k + 1] < objectives[k],
                    "seed {seed} iter {k}: {} -> {}",
                    objectives[k],
                    objectives[k + 1]
                );
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn spg_approaches_the_deterministic_minimizer() {
    let data = small_problem(7);
    let lambda = 0.025;
    let reference = exact_proximal_gradient(&data, 0.4, lambda, 5000, 1e-12).unwrap();
    let g_star = exact_objective(&reference, &data, lambda).unwrap();
    let cfg = SpgConfig {
        q: 2000,
        strategy: TauStrategy::Tay,
        max_iters: 100,
        master_seed: 7,
        ..SpgConfig::default()
    };
    let run = run_spg(&data, &cfg).unwrap();
    let averaged = ModelParams::new(4, run.averaged_theta.clone()).unwrap();
    let gap_last = exact_objective(&run.theta, &data, lambda).unwrap() - g_star;
    let gap_avg = exact_objective(&averaged, &data, lambda).unwrap() - g_star;
    eprintln!("objective gap after 100 iterations: last {gap_last:.2e}, averaged {gap_avg:.2e}");
    assert!((-1e-9..0.05).contains(&gap_last));
}

#[test]
fn auc_of_random_scores_is_centred() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 10_000;
    let n = 20;
    let mut sum = 0.0;
    let mut done = 0;
    while done < trials {
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        sum += roc_auc(&scores, &labels).unwrap();
        done += 1;
    }
    // per-trial sd is below 0.15 here, so 4 sd of the mean is 0.006
    let mean = sum / trials as f64;
    assert!((mean - 0.5).abs() < 0.006, "{mean}");
}

fn theta_strategy(p: usize, scale: f64) -> impl Strategy<Value = ModelParams> {
    prop::collection::vec(-scale..scale, p * (p + 1) / 2).prop_map(move |t| ModelParams::new(p, t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grand_sum_never_grows_when_rows_contract(theta in (2usize..7).prop_flat_map(|p| theta_strategy(p, 0.8))) {
        let inf = influence_matrix(&theta);
        let max_row = (0..theta.p()).map(|i| inf.u.row(i).sum()).fold(0.0, f64::max);
        prop_assume!(max_row <= 1.0);
        let sums: Vec<f64> = inf.grand_sums().take(15).collect();
        for w in sums.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        // substochastic rows give geometric decay at the max row sum
        for (t, &g) in sums.iter().enumerate() {
            prop_assert!(g <= theta.p() as f64 * max_row.powi(t as i32 + 1) + 1e-12);
        }
    }

    #[test]
    fn grand_sum_iterator_matches_direct_power(theta in (2usize..6).prop_flat_map(|p| theta_strategy(p, 2.0)), tau in 1usize..12) {
        let inf = influence_matrix(&theta);
        let iter = inf.grand_sums().nth(tau - 1).unwrap();
        let direct = grand_sum_pow(&inf.b, tau).unwrap();
        prop_assert!((iter - direct).abs() <= 1e-12 * direct.max(1.0));
    }
}
