use framr_core::evaluation::{partition, split_rows, PartitionSpec, Split};
use framr_core::frame::AnalysisFrame;
use framr_core::modeling::{
    default_menu, default_predictors, fit_logistic, refit_final, select_model, DesignMeta, Family, FitOptions,
    ModelSpec, SelectOptions, Transform, predict,
};
use framr_core::stats::{mean, sample_variance};
use framr_core::synth::{population_frame, sample_population, GeneratorConfig};

fn split(frame: &AnalysisFrame, seed: u64) -> (AnalysisFrame, AnalysisFrame, AnalysisFrame) {
    let labels = partition(frame.n_rows(), &PartitionSpec { seed, ..PartitionSpec::default() }).unwrap();
    let part = |s| frame.subset(&split_rows(&labels, s));
    (part(Split::Train), part(Split::Dev), part(Split::Validation))
}

fn planted(n: usize, seed: u64, bmi_sq: f64) -> AnalysisFrame {
    let mut cfg = GeneratorConfig::default();
    cfg.true_model.bmi_sq = bmi_sq;
    population_frame(&sample_population(&cfg, n, seed).unwrap())
}

#[test]
fn single_candidate_is_chosen() {
    let f = planted(4000, 1, 0.0);
    let (tr, dv, _) = split(&f, 1);
    let spec = ModelSpec::new("only", Family::LogisticLinear, Transform::Raw, default_predictors());
    let sel = select_model(std::slice::from_ref(&spec), &[tr], &[dv], &SelectOptions::default()).unwrap();
    assert_eq!(sel.chosen, 0);
    assert_eq!(sel.chosen_spec(), &spec);
}

#[test]
fn failing_candidates_are_skipped() {
    let f = planted(4000, 2, 0.0);
    let (tr, dv, _) = split(&f, 2);
    let bad = ModelSpec::new("bad", Family::LogisticLinear, Transform::Raw, vec!["nope".into()]);
    let good = ModelSpec::new("good", Family::LogisticLinear, Transform::Raw, default_predictors());
    let sel = select_model(&[bad.clone(), good], std::slice::from_ref(&tr), std::slice::from_ref(&dv), &SelectOptions::default()).unwrap();
    assert_eq!(sel.chosen, 1);
    assert!(sel.table[0].error.is_some());
    assert!(select_model(&[bad], &[tr], &[dv], &SelectOptions::default()).is_err());
}

#[test]
fn refit_with_empty_dev_equals_training_fit() {
    let f = planted(3000, 3, 0.0);
    let (tr, dv, _) = split(&f, 3);
    let spec = ModelSpec::new("logistic", Family::LogisticLinear, Transform::Raw, default_predictors());
    let meta = DesignMeta::new(&spec, &tr).unwrap();
    let empty = dv.subset(&[]);
    let refit = refit_final(&meta, None, std::slice::from_ref(&tr), &[empty], &FitOptions::default()).unwrap();
    let direct = fit_logistic(&meta.matrix(&tr).unwrap(), &tr.outcome().unwrap(), &meta.names(), &FitOptions::default())
        .unwrap();
    assert_eq!(refit.beta, direct.coefficients);
    assert_eq!(refit.names, meta.names());
}

#[test]
fn refit_standard_errors_shrink() {
    let spec = ModelSpec::new("logistic", Family::LogisticLinear, Transform::Raw, default_predictors());
    let reps = 50;
    let mut smaller = vec![0usize; 6];
    for r in 0..reps {
        let f = planted(3000, 100 + r, 0.0);
        let (tr, dv, _) = split(&f, r);
        let meta = DesignMeta::new(&spec, &tr).unwrap();
        let train = refit_final(&meta, None, std::slice::from_ref(&tr), &[tr.subset(&[])], &FitOptions::default()).unwrap();
        let both = refit_final(&meta, None, &[tr], &[dv], &FitOptions::default()).unwrap();
        for (j, (a, b)) in both.std_errors().iter().zip(train.std_errors()).enumerate() {
            smaller[j] += usize::from(*a <= b);
        }
    }
    assert!(smaller.iter().all(|&c| c == reps as usize), "{smaller:?}");
}

/// Mean and SE of the per-row dev log-loss difference, linear minus spline.
fn paired_loss_gap(tr: &AnalysisFrame, dv: &AnalysisFrame, lambda: f64) -> (f64, f64) {
    let preds = default_predictors();
    let lin = ModelSpec::new("logistic", Family::LogisticLinear, Transform::Raw, preds.clone());
    let spl = ModelSpec::new("spline", Family::AdditiveSpline, Transform::Raw, preds);
    let y = dv.outcome().unwrap();
    let row_loss = |spec: &ModelSpec, lambda| {
        let meta = DesignMeta::new(spec, tr).unwrap();
        let m = refit_final(&meta, lambda, std::slice::from_ref(tr), &[tr.subset(&[])], &FitOptions::default()).unwrap();
        predict(&meta.matrix(dv).unwrap(), &m.beta)
            .iter()
            .zip(&y)
            .map(|(p, y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
            .collect::<Vec<f64>>()
    };
    let d: Vec<f64> = row_loss(&lin, None)
        .iter()
        .zip(row_loss(&spl, Some(lambda)))
        .map(|(a, b)| a - b)
        .collect();
    (mean(&d), (sample_variance(&d) / d.len() as f64).sqrt())
}

#[test]
fn menu_ranks_linear_and_quadratic_truth() {
    let menu = default_menu(&default_predictors());
    for (bmi_sq, seed) in [(0.0, 5u64), (0.006, 6)] {
        let f = planted(40_000, seed, bmi_sq);
        let (tr, dv, _) = split(&f, seed);
        let sel = select_model(&menu, std::slice::from_ref(&tr), std::slice::from_ref(&dv), &SelectOptions::default()).unwrap();
        let chosen = &sel.table[sel.chosen];
        let lambda = sel.table[3].lambda.unwrap();
        let (gap, se) = paired_loss_gap(&tr, &dv, lambda);
        if bmi_sq == 0.0 {
            assert_eq!(chosen.name, "logistic");
            assert!(gap < se, "spline wins by {gap} (se {se}) on linear truth");
        } else {
            assert!(chosen.name != "logistic" && chosen.name != "logistic_log", "{}", chosen.name);
            assert!(gap > 2.0 * se, "spline gap {gap} (se {se}) on quadratic truth");
        }
    }
}
