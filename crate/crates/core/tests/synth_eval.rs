use catmix::criteria::fit_candidates;
use catmix::eval::{cramers_v_table, selection_rate_experiment, ExperimentConfig};
use catmix::mml::fit_em_mml;
use catmix::synth::{empirical_check, frequencies_by_label};
use catmix::{
    cramers_v, e_step, fit_em, generate, log_likelihood, separation, validate_dataset, CategoricalDataset, Criterion,
    EmConfig, GenSpec, InitSpec, Method, MixError, MixtureModel, MmlConfig, RawTable, ResponsibilityMatrix,
    SelectionConfig,
};

fn two_binary(a: [f64; 2], b: [f64; 2]) -> MixtureModel {
    MixtureModel::new(
        vec![2],
        vec![1],
        vec![0.5, 0.5],
        vec![vec![a.to_vec()], vec![b.to_vec()]],
    )
    .unwrap()
}

/// Eq.-by-hand separation: mean symmetric KL over unordered pairs.
fn separation_oracle(model: &MixtureModel) -> f64 {
    let k = model.k();
    let kl = |a: usize, b: usize| -> f64 {
        model
            .component(a)
            .iter()
            .zip(model.component(b))
            .map(|(p, q)| p * (p / q).ln())
            .sum()
    };
    let mut pairs = 0.0;
    let mut total = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            total += kl(a, b) + kl(b, a);
            pairs += 1.0;
        }
    }
    total / pairs
}

#[test]
fn separation_reference_values() {
    let s = separation(&two_binary([0.7, 0.3], [0.3, 0.7])).unwrap();
    assert!((s - 0.677838).abs() < 1e-6, "{s}");
    assert!((s - 0.8 * (7.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!(separation(&two_binary([0.4, 0.6], [0.4, 0.6])).unwrap().abs() <= 1e-12);
    let single = MixtureModel::new(vec![2], vec![1], vec![1.0], vec![vec![vec![0.5, 0.5]]]).unwrap();
    assert!(matches!(separation(&single), Err(MixError::UndefinedSeparation)));
    assert!(matches!(
        separation(&two_binary([1.0, 0.0], [0.5, 0.5])),
        Err(MixError::InfiniteDivergence { .. })
    ));
}

#[test]
fn generated_separation_lands_in_target() {
    for seed in 0..5 {
        let spec = GenSpec::binary(2, 7, 500, (0.04, 0.06), seed);
        let (data, planted) = generate(&spec).unwrap();
        let s = separation_oracle(&planted.model);
        assert!((0.04..=0.06).contains(&s), "{s}");
        assert!((s - planted.separation).abs() < 1e-12);
        assert_eq!(data.n(), 500);
        assert_eq!(data.categories(), &[2; 7]);
        assert!(planted.model.component(0).iter().all(|&t| t >= 1e-7));
    }
    let spec = GenSpec::binary(3, 5, 200, (0.1, 0.12), 9);
    let (_, planted) = generate(&spec).unwrap();
    assert!((0.1..=0.12).contains(&separation_oracle(&planted.model)));
}

#[test]
fn unreachable_target_exhausts_budget() {
    let spec = GenSpec {
        budget: 200,
        ..GenSpec::binary(2, 7, 50, (0.0, 0.0), 1)
    };
    assert!(matches!(generate(&spec), Err(MixError::RejectionBudget { .. })));
}

#[test]
fn degenerate_mixing_gives_one_label() {
    let spec = GenSpec {
        alpha_true: vec![1.0, 0.0],
        ..GenSpec::binary(2, 4, 100, (0.0, 50.0), 3)
    };
    let (_, planted) = generate(&spec).unwrap();
    assert!(planted.labels.iter().all(|&l| l == 0));
}

#[test]
fn generation_is_deterministic() {
    let spec = GenSpec::binary(3, 6, 150, (0.05, 0.2), 42);
    let (a, pa) = generate(&spec).unwrap();
    let (b, pb) = generate(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

#[test]
fn large_sample_matches_planted_frequencies() {
    let spec = GenSpec {
        alpha_true: vec![1.0],
        ..GenSpec::binary(1, 7, 10_000, (0.0, 0.0), 5)
    };
    let (data, planted) = generate(&spec).unwrap();
    let report = empirical_check(&data, &planted).unwrap();
    assert!(report.max_abs_deviation.unwrap() < 0.02);
}

#[test]
fn per_label_frequencies_match_recount() {
    let spec = GenSpec::binary(3, 4, 300, (0.2, 2.0), 8);
    let (data, planted) = generate(&spec).unwrap();
    let (freq, counts) = frequencies_by_label(&data, &planted.labels, 3);
    for k in 0..3 {
        let members: Vec<usize> = (0..data.n()).filter(|&i| planted.labels[i] == k).collect();
        assert_eq!(counts[k], members.len() as f64);
        for l in 0..4 {
            let ones = members.iter().filter(|&&i| data.category_of(i, l) == Some(1)).count();
            let expect = ones as f64 / members.len() as f64;
            assert!((freq[k][2 * l + 1] - expect).abs() < 1e-12);
        }
    }
    let report = empirical_check(&data, &planted).unwrap();
    assert_eq!(report.components.len(), 3);
}

#[test]
fn empty_component_has_no_deviation() {
    let spec = GenSpec {
        alpha_true: vec![1.0, 0.0],
        ..GenSpec::binary(2, 3, 50, (0.0, 50.0), 2)
    };
    let (data, planted) = generate(&spec).unwrap();
    let report = empirical_check(&data, &planted).unwrap();
    assert_eq!(report.components[1].max_abs_deviation, None);
    assert!(report.components[0].max_abs_deviation.is_some());
}

#[test]
fn cramers_v_reference_tables() {
    assert_eq!(cramers_v_table(&[vec![10.0, 0.0], vec![0.0, 10.0]]).unwrap(), 1.0);
    assert_eq!(cramers_v_table(&[vec![5.0, 5.0], vec![5.0, 5.0]]).unwrap(), 0.0);
    // expected counts 5.5/4.5 per row; χ² = Σ (o - e)² / e
    let chi2: f64 = [(8.0, 5.5), (2.0, 4.5), (3.0, 5.5), (7.0, 4.5)]
        .iter()
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    assert!((chi2 - 5.05).abs() < 0.01);
    let v = cramers_v_table(&[vec![8.0, 2.0], vec![3.0, 7.0]]).unwrap();
    assert!((v - (chi2 / 20.0).sqrt()).abs() < 1e-12);
    assert!((v - 0.5025).abs() < 1e-3);
    let labels = [0, 0, 1, 1, 1];
    let values = [2, 2, 0, 0, 0];
    assert!((cramers_v(&labels, &values).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn dataset_validation_examples() {
    let ok = RawTable {
        categories: vec![2],
        trials: vec![3],
        rows: vec![vec![2, 1]],
        weights: None,
    };
    assert!(validate_dataset(&ok, None).is_ok());
    let bad = RawTable {
        rows: vec![vec![2, 1], vec![2, 2]],
        ..ok.clone()
    };
    assert!(matches!(
        validate_dataset(&bad, None),
        Err(MixError::RowSum { obs: 1, var: 0, .. })
    ));
    let neg = RawTable {
        rows: vec![vec![4, -1]],
        ..ok
    };
    assert!(matches!(validate_dataset(&neg, None), Err(MixError::NegativeCount { .. })));

    let onehot = RawTable {
        categories: vec![2; 7],
        trials: vec![1; 7],
        rows: vec![[1, 0].repeat(7), [0, 1].repeat(7)],
        weights: None,
    };
    let v = validate_dataset(&onehot, Some(2)).unwrap();
    assert_eq!(v.warning.unwrap().min_trials, 1);
    assert!(validate_dataset(&onehot, Some(1)).unwrap().warning.is_none());
}

#[test]
fn e_step_examples() {
    let data = CategoricalDataset::from_categorical(vec![2, 3], &[vec![0, 2], vec![1, 0], vec![1, 1]]).unwrap();
    let theta = vec![vec![0.3, 0.7], vec![0.2, 0.3, 0.5]];
    let same = MixtureModel::new(vec![2, 3], vec![1, 1], vec![0.5, 0.5], vec![theta.clone(), theta.clone()]).unwrap();
    let resp = e_step(&data, &same).unwrap();
    assert!((0..3).all(|i| resp.row(i) == [0.5, 0.5]));

    let other = vec![vec![0.6, 0.4], vec![0.1, 0.1, 0.8]];
    let lopsided = MixtureModel::new(vec![2, 3], vec![1, 1], vec![1.0, 0.0], vec![theta, other]).unwrap();
    let resp = e_step(&data, &lopsided).unwrap();
    assert!((0..3).all(|i| resp.row(i) == [1.0, 0.0]));
}

#[test]
fn log_likelihood_examples() {
    let model = MixtureModel::new(vec![2], vec![1], vec![1.0], vec![vec![vec![0.5, 0.5]]]).unwrap();
    let data = CategoricalDataset::new(vec![2], vec![1], &[vec![1, 0]], None).unwrap();
    assert!((log_likelihood(&data, &model).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    let model = MixtureModel::new(vec![2], vec![2], vec![1.0], vec![vec![vec![0.5, 0.5]]]).unwrap();
    let data = CategoricalDataset::new(vec![2], vec![2], &[vec![1, 1]], None).unwrap();
    assert!((log_likelihood(&data, &model).unwrap() - 0.5f64.ln()).abs() < 1e-15);

    let impossible = MixtureModel::new(vec![2], vec![1], vec![1.0], vec![vec![vec![1.0, 0.0]]]).unwrap();
    let data = CategoricalDataset::new(vec![2], vec![1], &[vec![1, 0], vec![0, 1]], None).unwrap();
    assert!(matches!(
        log_likelihood(&data, &impossible),
        Err(MixError::DegenerateLikelihood { obs: 1 })
    ));
}

#[test]
fn single_component_em_is_independence_model() {
    let spec = GenSpec::binary(2, 5, 300, (0.1, 1.0), 4);
    let (data, _) = generate(&spec).unwrap();
    let fit = fit_em(&data, 1, &InitSpec::seeded(1), &EmConfig::default()).unwrap();
    let freq = catmix::em::empirical_frequencies(&data);
    for (a, b) in fit.model.component(0).iter().zip(&freq) {
        assert!((a - b).abs() < 1e-12);
    }
    let independence: f64 = (0..data.n())
        .map(|i| (0..5).map(|l| freq[2 * l + data.category_of(i, l).unwrap()].ln()).sum::<f64>())
        .sum();
    assert!((fit.log_likelihood() - independence).abs() < 1e-9);
    assert!(fit.log_likelihood() >= fit.objective_trace[0]);
}

#[test]
fn empty_component_is_an_error_for_classical_m_step() {
    let data = CategoricalDataset::from_categorical(vec![2], &[vec![0], vec![1]]).unwrap();
    let resp = ResponsibilityMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    assert!(matches!(
        catmix::m_step_ml(&data, &resp),
        Err(MixError::EmptyComponent { component: 1 })
    ));
}

/// Seven binary variables, components 0.9/0.1 against 0.1/0.9.
fn well_separated(seed: u64, n: usize) -> (CategoricalDataset, Vec<usize>) {
    let theta = |p: f64| vec![vec![p, 1.0 - p]; 7];
    let model = MixtureModel::new(vec![2; 7], vec![1; 7], vec![0.5, 0.5], vec![theta(0.9), theta(0.1)]).unwrap();
    let mut rng = catmix::rng::rng_from_seed(seed);
    catmix::synth::sample_from(&model, n, &mut rng).unwrap()
}

fn agreement(labels: &[usize], truth: &[usize]) -> f64 {
    let same = labels.iter().zip(truth).filter(|(a, b)| a == b).count() as f64;
    let frac = same / labels.len() as f64;
    frac.max(1.0 - frac)
}

#[test]
fn em_recovers_well_separated_labels() {
    for seed in 0..3 {
        let (data, labels) = well_separated(seed, 500);
        let best = (0..5)
            .map(|r| fit_em(&data, 2, &InitSpec::seeded(seed * 10 + r), &EmConfig::default()).unwrap())
            .max_by(|a, b| a.log_likelihood().total_cmp(&b.log_likelihood()))
            .unwrap();
        assert!(agreement(&best.hard_assignment, &labels) >= 0.95);
    }
}

#[test]
fn mml_selects_one_component_for_a_single_multinomial() {
    for seed in 0..5 {
        let spec = GenSpec {
            alpha_true: vec![1.0],
            ..GenSpec::binary(1, 7, 500, (0.0, 0.0), seed)
        };
        let (data, _) = generate(&spec).unwrap();
        let config = MmlConfig {
            k_max: 5,
            seed,
            ..MmlConfig::default()
        };
        assert_eq!(fit_em_mml(&data, &config).unwrap().selected_k(), 1);
    }
}

#[test]
fn well_separated_data_selects_true_k() {
    let (data, _) = well_separated(11, 500);
    let config = MmlConfig {
        k_max: 10,
        seed: 1,
        ..MmlConfig::default()
    };
    assert_eq!(fit_em_mml(&data, &config).unwrap().selected_k(), 2);
    let fits = fit_candidates(
        &data,
        &SelectionConfig {
            k_range: 1..=5,
            seed: 1,
            ..SelectionConfig::default()
        },
    )
    .unwrap();
    for c in Criterion::ALL {
        assert_eq!(fits.select(&data, c).unwrap().best_k, 2, "{c}");
    }
}

#[test]
fn criterion_identities() {
    let spec = GenSpec::binary(2, 5, 200, (0.5, 3.0), 6);
    let (data, _) = generate(&spec).unwrap();
    let fits = fit_candidates(
        &data,
        &SelectionConfig {
            k_range: 1..=3,
            restarts: 2,
            ..SelectionConfig::default()
        },
    )
    .unwrap();
    for (_, fit) in &fits.fits {
        let fit = fit.as_ref().unwrap();
        let s = |c| catmix::score(c, &data, &fit.model, &fit.responsibilities).unwrap();
        let c = fit.model.num_params() as f64;
        assert!((s(Criterion::Caic).value - s(Criterion::Bic).value - c).abs() < 1e-9);
        assert!(s(Criterion::Aic).value < s(Criterion::Maic).value);
        assert!(s(Criterion::Icl).value >= s(Criterion::Bic).value);
    }
    let hard = ResponsibilityMatrix::from_rows(&vec![vec![1.0]; data.n()]).unwrap();
    let one = fits.fits[0].1.as_ref().unwrap();
    assert_eq!(
        catmix::score(Criterion::Icl, &data, &one.model, &hard).unwrap().value,
        catmix::score(Criterion::Bic, &data, &one.model, &hard).unwrap().value
    );
}

#[test]
fn selection_experiment_is_reproducible() {
    let scenarios = vec![GenSpec::binary(2, 5, 100, (0.1, 0.5), 0)];
    let config = ExperimentConfig {
        k_max: 4,
        restarts: 2,
        ..ExperimentConfig::default()
    };
    let methods = Method::ALL.to_vec();
    let a = selection_rate_experiment(&scenarios, &methods, 1, 9, &config).unwrap();
    let b = selection_rate_experiment(&scenarios, &methods, 1, 9, &config).unwrap();
    let strip = |o: &catmix::eval::ExperimentOutput| {
        o.results
            .iter()
            .map(|r| (r.method, r.selected_k, r.seed, r.separation.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.results.len(), 6);
    assert!(a.results.iter().all(|r| r.wall_time_ms > 0.0 && r.selected_k >= 1));
}

