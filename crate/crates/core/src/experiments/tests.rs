use super::*;
use crate::beta_model::logistic;
use crate::epidemic::Case;
use crate::mixture::MixtureState;

fn draw(atoms: Vec<f64>, assignments: Vec<usize>, params: EpidemicParams) -> ChainDraw {
    let n = assignments.len();
    let k = atoms.len();
    let proportions = vec![1.0 / k as f64; k];
    let mixture = MixtureState {
        sticks: crate::mixture::sticks_from_proportions(&proportions),
        proportions,
        assignments,
        atoms,
        concentration: 1.0,
        base_mean: 0.0,
        base_var: 1.0,
    };
    let case = Case { member: 0, exposed: 0.0, infectious: 1.0, removed: 2.0, infector: None };
    ChainDraw {
        iteration: 1,
        params,
        mixture,
        imputed_record: EpidemicRecord::new(n, vec![case]).unwrap(),
        imputed_contacts: ContactNetwork::empty(n),
        log_posterior: 0.0,
    }
}

fn quick_config() -> ExperimentConfig {
    ExperimentConfig {
        n_members: 20,
        replications: 3,
        chain: ChainConfig { iterations: 200, burn_in: 50, thin: 10, ..ExperimentConfig::default().chain },
        sample_sizes: vec![0, 20],
        ..ExperimentConfig::default()
    }
}

#[test]
fn quantiles_interpolate() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(quantile(&xs, 0.5), 3.0);
    assert_eq!(quantile(&xs, 0.0), 1.0);
    assert_eq!(quantile(&xs, 1.0), 5.0);
    assert!((quantile(&xs, 0.125) - 1.5).abs() < 1e-12);
    assert!(quantile(&[], 0.5).is_nan());
}

#[test]
fn fixed_sizes_use_largest_remainders() {
    assert_eq!(TruthConfig::error_study().sizes(60), vec![41, 16, 3]);
    assert_eq!(TruthConfig::error_study().sizes(187), vec![127, 50, 10]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = simulate_truth(&TruthConfig::error_study(), 60, &mut rng).unwrap();
    assert_eq!(t.assignments.iter().filter(|&&z| z == 2).count(), 3);
    assert!(t.record.n_infected() >= 5);
    t.record.validate_with_network(&t.network).unwrap();
}

#[test]
fn zero_replications_give_an_empty_table() {
    let cfg = ExperimentConfig { replications: 0, ..quick_config() };
    let t = coverage_experiment(&cfg).unwrap();
    assert!(t.rows.is_empty() && t.failures.is_empty());
}

#[test]
fn coverage_is_reproducible_and_bounded() {
    let cfg = quick_config();
    let a = coverage_experiment(&cfg).unwrap();
    let b = coverage_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 8);
    for row in &a.rows {
        assert_eq!(row.replications + a.failures.len(), 3);
        assert!((0.0..=1.0).contains(&row.coverage));
        assert!(row.mean_width >= 0.0);
    }
}

#[test]
fn replication_failures_are_recorded() {
    // More true clusters than the fit can represent.
    let mut cfg = quick_config();
    cfg.chain.k = 2;
    let t = coverage_experiment(&cfg).unwrap();
    assert!(t.rows.is_empty());
    assert_eq!(t.failures.len(), 3);
    assert_eq!(t.failures[1].replication, 1);
}

#[test]
fn mse_curve_has_one_block_per_sample_size() {
    let cfg = ExperimentConfig { truth: TruthConfig::error_study(), sample_sizes: vec![10], replications: 2, ..quick_config() };
    let c = mse_experiment(&cfg).unwrap();
    assert_eq!(c.sample_sizes, vec![10]);
    assert_eq!(c.rows.len(), 8);
    assert!(c.rows.iter().all(|r| r.n == 10 && r.mse_median >= 0.0 && r.mse_mean >= 0.0));
    assert!(c.get(10, "gamma_3").is_some());
    let bad = ExperimentConfig { sample_sizes: vec![21], ..quick_config() };
    assert!(mse_experiment(&bad).is_err());
}

#[test]
fn cluster_matching_follows_the_posterior_mass() {
    let report = RelabelReport {
        permutations: vec![],
        loss_trajectory: vec![],
        converged: true,
        rounds: 0,
        reference_probabilities: vec![
            vec![0.0, 0.9, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.7, 0.1, 0.2],
            vec![0.2, 0.2, 0.6],
        ],
    };
    assert_eq!(match_clusters(&report, 10, &[0, 0, 1, 2], 3).unwrap(), vec![1, 0, 2]);
    assert_eq!(match_clusters(&report, 10, &[1, 1, 0, 0], 2).unwrap(), vec![0, 1]);
    assert!(match_clusters(&report, 10, &[0, 1, 2, 3], 4).is_err());
}

#[test]
fn dpp_draws_have_valid_expected_degrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws = dpp_demo(5.0, -5.0, 25.0, 200, 10, &mut rng).unwrap();
    assert_eq!(draws.len(), 10);
    for d in &draws {
        assert_eq!(d.theta.len(), 200);
        assert!(d.expected_degrees.iter().all(|&m| (0.0..=199.0).contains(&m)));
    }
    assert!(dpp_demo(0.0, 0.0, 1.0, 10, 1, &mut rng).is_err());
}

#[test]
fn small_concentration_collapses_onto_one_atom() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = dpp_demo(0.01, 0.0, 1.0, 100, 100, &mut rng).unwrap();
    let dominated = draws
        .iter()
        .filter(|d| {
            let mut sorted = d.theta.clone();
            sorted.sort_by(f64::total_cmp);
            let mut best = 0;
            let mut run = 0;
            for w in 0..sorted.len() {
                run = if w > 0 && sorted[w] == sorted[w - 1] { run + 1 } else { 1 };
                best = best.max(run);
            }
            best as f64 / 100.0 > 0.9
        })
        .count();
    assert!(dominated >= 90, "{dominated}");
}

#[test]
fn isolated_population_has_no_contacts_or_spread() {
    let params = reference_params();
    let d = draw(vec![-50.0], vec![0; 15], params);
    let refs = vec![&d; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for h in ppc_degrees(&refs, &mut rng).unwrap() {
        assert_eq!(h[0], 15);
    }
    assert!(ppc_epidemic_max(&refs, 3, &mut rng).unwrap().iter().all(|&m| m == 1));
    assert!(ppc_degrees(&[], &mut rng).is_err());
}

#[test]
fn homogeneous_mean_degree_matches_closed_form() {
    let (n, gamma) = (30, -1.2);
    let d = draw(vec![gamma], vec![0; n], reference_params());
    let refs = vec![&d; 2000];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let means: Vec<f64> = ppc_degrees(&refs, &mut rng)
        .unwrap()
        .iter()
        .map(|h| h.iter().enumerate().map(|(k, &c)| (k * c) as f64).sum::<f64>() / n as f64)
        .collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt();
    let expected = (n - 1) as f64 * logistic(2.0 * gamma);
    assert!((m - expected).abs() < 3.0 * sd / (means.len() as f64).sqrt(), "{m} vs {expected}");
}

#[test]
fn predictive_checks_ignore_labels() {
    let params = reference_params();
    let a = draw(vec![-1.0, 0.5, -3.0], vec![0, 1, 2, 0, 1, 2, 0, 0], params);
    let mut b = a.clone();
    b.mixture.permute_labels(&[2, 0, 1]);
    let (ra, rb) = (vec![&a; 20], vec![&b; 20]);
    let mut r1 = ChaCha8Rng::seed_from_u64(6);
    let mut r2 = ChaCha8Rng::seed_from_u64(6);
    assert_eq!(ppc_degrees(&ra, &mut r1).unwrap(), ppc_degrees(&rb, &mut r2).unwrap());
    assert_eq!(ppc_epidemic_max(&ra, 2, &mut r1).unwrap(), ppc_epidemic_max(&rb, 2, &mut r2).unwrap());
}

#[test]
fn subsample_spreads_over_the_chain() {
    let d = draw(vec![0.0], vec![0; 3], reference_params());
    let draws: Vec<ChainDraw> = (0..10).map(|i| ChainDraw { iteration: i, ..d.clone() }).collect();
    let s: Vec<u64> = subsample(&draws, 4).iter().map(|d| d.iteration).collect();
    assert_eq!(s, vec![0, 2, 5, 7]);
    assert_eq!(subsample(&draws, 50).len(), 10);
}

#[test]
fn ppc_calibration_runs() {
    let cfg = ExperimentConfig { design: Design { contacts: ContactDesign::EgoCentric(10), ..Design::default() }, ..quick_config() };
    let c = ppc_calibration(&cfg).unwrap();
    assert_eq!(c.replications.len() + c.failures.len(), 3);
    for r in &c.replications {
        assert!(r.lower <= r.upper);
    }
}
