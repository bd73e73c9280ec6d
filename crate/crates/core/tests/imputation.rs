use framr_core::frame::{AnalysisFrame, ColumnKind};
use framr_core::imputation::{
    impute, missingness_simulation, ImputationConfig, ImputeError, Method, SimMechanism, SimulationConfig,
};
use framr_core::modeling::pool_scalar;
use framr_core::stats::{mean, sample_variance};
use framr_core::synth::{population_frame, sample_population, GeneratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `y = x + e` with a tight residual, plus a binary noise column and an
/// outcome.
fn linear_frame(n: usize, seed: u64) -> AnalysisFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let b: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.4)))).collect();
    let o: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.3)))).collect();
    let mut f = AnalysisFrame::new((0..n).map(|i| format!("r{i}")).collect());
    f.push_column("x", ColumnKind::Continuous, x.into_iter().map(Some).collect()).unwrap();
    f.push_column("y", ColumnKind::Continuous, y.into_iter().map(Some).collect()).unwrap();
    f.push_column("b", ColumnKind::Binary, b.into_iter().map(Some).collect()).unwrap();
    f.push_column("outcome", ColumnKind::Binary, o.into_iter().map(Some).collect()).unwrap();
    f
}

fn blank(f: &mut AnalysisFrame, col: &str, rate: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = f.column_mut(col).unwrap();
    let mut rows = Vec::new();
    for (i, v) in c.values.iter_mut().enumerate() {
        if rng.gen_bool(rate) {
            *v = None;
            rows.push(i);
        }
    }
    rows
}

fn small_cfg(m: usize, seed: u64) -> ImputationConfig {
    ImputationConfig {
        m,
        cycles: 5,
        seed,
        ..ImputationConfig::default()
    }
}

#[test]
fn complete_frame_copies_are_identity() {
    let f = linear_frame(50, 1);
    let set = impute(&f, &small_cfg(3, 1)).unwrap();
    assert_eq!(set.copies.len(), 3);
    assert!(set.copies.iter().all(|c| *c == f));
    assert!(set.plan.is_empty());
}

#[test]
fn precondition_errors() {
    let mut f = linear_frame(30, 1);
    for v in &mut f.column_mut("y").unwrap().values {
        *v = None;
    }
    assert!(matches!(impute(&f, &small_cfg(2, 1)), Err(ImputeError::AllMissing(v)) if v == "y"));

    let mut f = linear_frame(30, 1);
    f.column_mut("outcome").unwrap().values[3] = None;
    assert!(matches!(impute(&f, &small_cfg(2, 1)), Err(ImputeError::OutcomeMissing)));

    let f = linear_frame(30, 1);
    assert!(matches!(impute(&f, &small_cfg(1, 1)), Err(ImputeError::Config(_))));
    let bad = ImputationConfig {
        pmm_k: 0,
        ..small_cfg(2, 1)
    };
    assert!(impute(&f, &bad).is_err());
}

#[test]
fn observed_cells_fixed_and_pmm_draws_are_donors() {
    let mut f = linear_frame(400, 2);
    let miss_y = blank(&mut f, "y", 0.3, 5);
    let miss_b = blank(&mut f, "b", 0.1, 6);
    let set = impute(&f, &small_cfg(5, 9)).unwrap();
    assert_eq!(set.plan[0].variable, "y", "most-missing variable visited first");
    let observed: Vec<f64> = f.column("y").unwrap().observed().collect();
    for c in &set.copies {
        assert!(c.is_complete());
        for (orig, new) in f.columns.iter().zip(&c.columns) {
            for (a, b) in orig.values.iter().zip(&new.values) {
                if let Some(a) = a {
                    assert_eq!(a.to_bits(), b.unwrap().to_bits());
                }
            }
        }
        let y = c.column("y").unwrap();
        for &i in &miss_y {
            assert!(observed.contains(&y.values[i].unwrap()));
        }
        let b = c.column("b").unwrap();
        for &i in &miss_b {
            assert!(matches!(b.values[i], Some(v) if v == 0.0 || v == 1.0));
        }
    }
    // proper imputation: imputed cells vary between copies
    let spread: f64 = miss_y
        .iter()
        .map(|&i| {
            let vals: Vec<f64> = set.copies.iter().map(|c| c.column("y").unwrap().values[i].unwrap()).collect();
            sample_variance(&vals)
        })
        .sum();
    assert!(spread > 0.0);
}

#[test]
fn normal_linear_tracks_regression() {
    let mut f = linear_frame(500, 3);
    let miss = blank(&mut f, "y", 0.3, 4);
    let full = linear_frame(500, 3);
    let mut cfg = small_cfg(4, 2);
    cfg.methods.insert("y".into(), Method::NormalLinear);
    let set = impute(&f, &cfg).unwrap();
    let truth = full.column("y").unwrap().dense();
    for c in &set.copies {
        let y = c.column("y").unwrap().dense();
        let rmse = (miss.iter().map(|&i| (y[i] - truth[i]).powi(2)).sum::<f64>() / miss.len() as f64).sqrt();
        assert!(rmse < 0.25, "rmse {rmse}");
    }
}

#[test]
fn deterministic_across_thread_counts() {
    let mut f = linear_frame(300, 4);
    blank(&mut f, "y", 0.2, 1);
    blank(&mut f, "x", 0.1, 2);
    let cfg = small_cfg(4, 11);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| impute(&f, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn mcar_bmi_pooled_mean_near_complete_mean() {
    let cfg = GeneratorConfig::default();
    let full = population_frame(&sample_population(&cfg, 5000, 17).unwrap());
    let complete_mean = mean(&full.column("bmi").unwrap().dense());
    let mut f = full.clone();
    blank(&mut f, "bmi", 0.28, 3);
    let set = impute(&f, &small_cfg(10, 5)).unwrap();
    let n = f.n_rows() as f64;
    let (means, vars): (Vec<f64>, Vec<f64>) = set
        .copies
        .iter()
        .map(|c| {
            let v = c.column("bmi").unwrap().dense();
            (mean(&v), sample_variance(&v) / n)
        })
        .unzip();
    let p = pool_scalar(&means, &vars);
    assert!(
        (p.estimate - complete_mean).abs() < 3.0 * p.total.sqrt(),
        "{} vs {complete_mean} (se {})",
        p.estimate,
        p.total.sqrt()
    );
}

#[test]
fn simulation_rate_zero_and_coverage_on_generator_data() {
    let f = population_frame(&sample_population(&GeneratorConfig::default(), 1000, 8).unwrap());
    let cfg = SimulationConfig {
        target: "bmi".into(),
        rates: vec![0.0, 0.3],
        replications: 200,
        mechanism: SimMechanism::Mcar,
        imputation: small_cfg(5, 21),
        ..SimulationConfig::default()
    };
    let rows = missingness_simulation(&f, &cfg).unwrap();
    assert_eq!(rows[0].rmse, 0.0);
    assert!((0.90..=0.99).contains(&rows[1].coverage), "coverage {}", rows[1].coverage);
    assert!(rows[1].rmse > 0.0);
}

#[test]
fn simulation_mar_and_errors() {
    let f = linear_frame(200, 9);
    let cfg = SimulationConfig {
        target: "y".into(),
        rates: vec![0.2, 0.4],
        replications: 5,
        mechanism: SimMechanism::Mar {
            covariate: "x".into(),
            slope: 1.0,
        },
        imputation: small_cfg(3, 1),
        ..SimulationConfig::default()
    };
    let rows = missingness_simulation(&f, &cfg).unwrap();
    assert_eq!(rows[1].n_deleted, 80);
    let empty = f.subset(&[]);
    assert!(matches!(missingness_simulation(&empty, &cfg), Err(ImputeError::EmptyCompleteCases)));
}

#[test]
fn rmse_grows_with_deletion_rate() {
    let f = linear_frame(200, 12);
    let cfg = SimulationConfig {
        target: "y".into(),
        replications: 50,
        imputation: small_cfg(5, 4),
        ..SimulationConfig::default()
    };
    let rows = missingness_simulation(&f, &cfg).unwrap();
    for r in &rows {
        eprintln!("{:.1} rmse {:.4} se {:.4} bias {:.4} cov {:.2}", r.rate, r.rmse, r.rmse_se, r.bias, r.coverage);
    }
    let inversions: Vec<usize> = (1..rows.len()).filter(|&i| rows[i].rmse < rows[i - 1].rmse).collect();
    assert!(inversions.len() <= 1, "{inversions:?}");
    for &i in &inversions {
        assert!(rows[i - 1].rmse - rows[i].rmse <= rows[i].rmse_se.max(rows[i - 1].rmse_se));
    }
}
