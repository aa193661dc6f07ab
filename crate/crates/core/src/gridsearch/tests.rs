use super::*;
use crate::data::{make_teacher, sample_features, TeacherKind};
use crate::nonlinearity::{moments, Nonlinearity};
use crate::training::{train, Noise};

struct Setup {
    teacher: TeacherSpec,
    train: Dataset,
    valid: Dataset,
    features: FeatureMatrix,
}

fn setup(n: usize, m: usize, k: usize, seed: u64) -> Setup {
    let teacher = make_teacher(n, TeacherKind::Relu, 0.05, &RngStream::new(seed, 0)).unwrap();
    let train = generate(&teacher, m, Role::Train, &RngStream::new(seed, 1)).unwrap();
    let mut valid = generate(&teacher, 3 * m, Role::Validation, &RngStream::new(seed, 2)).unwrap();
    valid.role = Role::Validation;
    let features = sample_features(n, k, &RngStream::new(seed, 3)).unwrap();
    Setup {
        teacher,
        train,
        valid,
        features,
    }
}

fn small_grid() -> SearchGrid {
    SearchGrid::new(vec![0.2, 0.5, 1.0, 2.0], vec![0.0, 0.1, 0.3, 0.9]).unwrap()
}

#[test]
fn grid_validation() {
    assert!(SearchGrid::new(vec![], vec![0.0]).is_err());
    assert!(SearchGrid::new(vec![0.0, 1.0], vec![0.0]).is_err());
    assert!(SearchGrid::new(vec![1.0, 0.5], vec![0.0]).is_err());
    assert!(SearchGrid::new(vec![1.0], vec![-0.1]).is_err());
    let grid = small_grid();
    assert_eq!(grid.points()[1], (0.2, 0.1));
    let json = serde_json::to_string(&grid).unwrap();
    assert_eq!(serde_json::from_str::<SearchGrid>(&json).unwrap(), grid);
    assert!(serde_json::from_str::<SearchGrid>(r#"{"mu1_values":[-1],"mu2_values":[0]}"#).is_err());
}

#[test]
fn default_grid_shape() {
    let grid = default_grid(1.0);
    assert_eq!((grid.mu1_values().len(), grid.mu2_values().len()), (24, 24));
    assert_eq!(grid.mu1_values()[0], 0.05);
    assert_eq!(*grid.mu1_values().last().unwrap(), 4.0);
    assert_eq!(grid.mu2_values()[0], 0.0);
    assert_eq!(grid.mu2_values()[1], 0.05);
    assert_eq!(default_grid_for(LossKind::Hinge, 1.0).len(), 100);
    assert_eq!(default_grid_for(LossKind::Squared, 2.0).mu1_values()[0], 0.1);
}

#[test]
fn grids_bracket_relu_moments() {
    // Some point lies within a factor 1.3 of (0.5, 0.301) in both coordinates.
    for grid in [default_grid(1.0), reduced_grid(1.0)] {
        let close = grid.points().iter().any(|&(a, b)| {
            let ra = a / 0.5;
            let rb = b / 0.301;
            (1.0 / 1.3..=1.3).contains(&ra) && (1.0 / 1.3..=1.3).contains(&rb)
        });
        assert!(close);
    }
}

#[test]
fn single_point_grid_matches_direct_training() {
    let s = setup(8, 40, 30, 1);
    let grid = SearchGrid::new(vec![1.0], vec![0.0]).unwrap();
    let rng = RngStream::new(1, 9);
    let result = optimize_mapping_params(
        &s.train,
        EvalSource::Validation(&s.valid),
        &s.features,
        LossKind::Squared,
        0.01,
        &grid,
        &rng,
    )
    .unwrap();
    assert_eq!(result.best_index, 0);
    assert_eq!(result.surface.len(), 1);
    let model = result.model(s.features.clone());
    let direct = train(model.family.clone(), &s.train, LossKind::Squared, 0.01).unwrap();
    for (a, b) in direct.omega.iter().zip(&result.omega_best) {
        assert!((a - b).abs() < 1e-9);
    }
    let yhat = model.predict(s.valid.x.as_ref(), &result.eval_noise).unwrap();
    let recomputed = LossKind::Squared.mean_loss(&s.valid.y, &yhat);
    assert!((recomputed - result.best_error).abs() < 1e-10);
}

fn check_fast_path_against_model(k: usize) {
    let s = setup(10, 50, k, 2);
    let rng = RngStream::new(2, 9);
    let result = optimize_mapping_params(
        &s.train,
        EvalSource::Validation(&s.valid),
        &s.features,
        LossKind::Squared,
        0.005,
        &small_grid(),
        &rng,
    )
    .unwrap();
    // Rebuild every point with the explicit training code and compare.
    for (p, point) in result.surface.iter().enumerate() {
        let mut probe = result.clone();
        probe.mu_opt = MappingParams::new(0.0, point.mu1, point.mu2);
        probe.best_index = p;
        let template = probe.model(s.features.clone());
        let model = train(template.family, &s.train, LossKind::Squared, 0.005).unwrap();
        let fitted = model.predict_dataset(&s.train, &rng).unwrap();
        let train_error = LossKind::Squared.mean_loss(&s.train.y, &fitted);
        let yhat = model.predict(s.valid.x.as_ref(), &result.eval_noise).unwrap();
        let eval_error = LossKind::Squared.mean_loss(&s.valid.y, &yhat);
        assert!((train_error - point.train_error).abs() < 1e-10, "{p}: {train_error} vs {}", point.train_error);
        assert!((eval_error - point.eval_error).abs() < 1e-10, "{p}: {eval_error} vs {}", point.eval_error);
    }
}

#[test]
fn fast_primal_path_matches_explicit_training() {
    check_fast_path_against_model(20);
}

#[test]
fn fast_dual_path_matches_explicit_training() {
    check_fast_path_against_model(90);
}

#[test]
fn search_invariants() {
    let s = setup(12, 60, 45, 3);
    let rng = RngStream::new(3, 9);
    let grid = default_grid(1.0);
    let eval = EvalSource::Teacher {
        teacher: &s.teacher,
        samples: Some(2000),
    };
    let result = optimize_mapping_params(&s.train, eval, &s.features, LossKind::Squared, 0.01, &grid, &rng).unwrap();

    // Dominance and tie-breaking: the winner is the first minimum.
    let first_min = result
        .surface
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.failed)
        .fold(None::<(usize, f64)>, |acc, (i, p)| match acc {
            Some((_, e)) if p.eval_error >= e => acc,
            _ => Some((i, p.eval_error)),
        })
        .unwrap();
    assert_eq!(first_min.0, result.best_index);
    assert!(result.surface.iter().filter(|p| !p.failed).all(|p| result.best_error <= p.eval_error));

    // mu0 consistency.
    let sum: f64 = result.omega_best.iter().sum();
    assert!((result.mu_opt.mu0 * sum - s.train.label_mean()).abs() < 1e-10);

    // Determinism.
    let again = optimize_mapping_params(&s.train, eval, &s.features, LossKind::Squared, 0.01, &grid, &rng).unwrap();
    assert_eq!(again, result);

    // A sub-grid never does better.
    let sub = SearchGrid::new(
        grid.mu1_values().iter().step_by(3).copied().collect(),
        grid.mu2_values().iter().step_by(2).copied().collect(),
    )
    .unwrap();
    let coarse = optimize_mapping_params(&s.train, eval, &s.features, LossKind::Squared, 0.01, &sub, &rng).unwrap();
    assert!(result.best_error <= coarse.best_error);

    // The optimum is at least as good as the point nearest the ReLU moments.
    let relu = moments(&Nonlinearity::Relu).unwrap();
    let with_relu = SearchGrid::new(vec![relu.mu1], vec![relu.mu2]).unwrap();
    let at_relu = optimize_mapping_params(&s.train, eval, &s.features, LossKind::Squared, 0.01, &with_relu, &rng).unwrap();
    let mut merged_mu1 = grid.mu1_values().to_vec();
    merged_mu1.push(relu.mu1);
    merged_mu1.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged_mu2 = grid.mu2_values().to_vec();
    merged_mu2.push(relu.mu2);
    merged_mu2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let merged = SearchGrid::new(merged_mu1, merged_mu2).unwrap();
    let full = optimize_mapping_params(&s.train, eval, &s.features, LossKind::Squared, 0.01, &merged, &rng).unwrap();
    assert!(full.best_error <= at_relu.best_error);
}

#[test]
fn per_point_noise_mode_runs() {
    let s = setup(6, 30, 10, 4);
    let rng = RngStream::new(4, 9);
    let options = SearchOptions {
        noise: NoiseMode::PerPoint,
        ..Default::default()
    };
    let result = optimize_mapping_params_with(
        &s.train,
        EvalSource::Validation(&s.valid),
        &s.features,
        LossKind::Squared,
        0.01,
        &small_grid(),
        &rng,
        &options,
    )
    .unwrap();
    let model = result.model(s.features.clone());
    let yhat = model.predict(s.valid.x.as_ref(), &result.eval_noise).unwrap();
    assert!((LossKind::Squared.mean_loss(&s.valid.y, &yhat) - result.best_error).abs() < 1e-10);
    let shared = optimize_mapping_params(
        &s.train,
        EvalSource::Validation(&s.valid),
        &s.features,
        LossKind::Squared,
        0.01,
        &small_grid(),
        &rng,
    )
    .unwrap();
    assert_ne!(shared.train_noise, result.train_noise);
}

fn sign_setup(seed: u64) -> Setup {
    let teacher = make_teacher(6, TeacherKind::Sign, 0.0, &RngStream::new(seed, 0)).unwrap();
    let train = generate(&teacher, 40, Role::Train, &RngStream::new(seed, 1)).unwrap();
    let valid = generate(&teacher, 100, Role::Validation, &RngStream::new(seed, 2)).unwrap();
    let features = sample_features(6, 12, &RngStream::new(seed, 3)).unwrap();
    Setup {
        teacher,
        train,
        valid,
        features,
    }
}

#[test]
fn hinge_search_reproduces_its_error() {
    let s = sign_setup(5);
    let rng = RngStream::new(5, 9);
    let grid = SearchGrid::new(vec![0.5, 1.0], vec![0.0, 0.3]).unwrap();
    let result = optimize_mapping_params(
        &s.train,
        EvalSource::Validation(&s.valid),
        &s.features,
        LossKind::Hinge,
        0.05,
        &grid,
        &rng,
    )
    .unwrap();
    let model = result.model(s.features.clone());
    let yhat = model.predict(s.valid.x.as_ref(), &result.eval_noise).unwrap();
    assert!((LossKind::Hinge.mean_loss(&s.valid.y, &yhat) - result.best_error).abs() < 1e-10);
    let fitted = model.predict_with(s.train.x.as_ref(), Noise::Stored).unwrap();
    assert!((LossKind::Hinge.mean_loss(&s.train.y, &fitted) - result.best_train_error).abs() < 1e-10);
}

#[test]
fn all_failed_points_are_reported() {
    let s = sign_setup(6);
    let options = SearchOptions {
        hinge: HingeOptions {
            tol: 1e-15,
            max_epochs: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let err = optimize_mapping_params_with(
        &s.train,
        EvalSource::Validation(&s.valid),
        &s.features,
        LossKind::Hinge,
        1e-3,
        &SearchGrid::new(vec![1.0], vec![0.0, 0.5]).unwrap(),
        &RngStream::new(6, 9),
        &options,
    )
    .unwrap_err();
    assert!(matches!(err, Error::AllPointsFailed { points: 2 }));
}

#[test]
fn vanishing_weight_sum_is_degenerate() {
    // Columns f and -f give weights (w, -w).
    let s = setup(5, 30, 1, 7);
    let f = &s.features.f;
    let mirrored = FeatureMatrix::from_matrix(Matrix::from_fn(5, 2, |i, j| if j == 0 { f[(i, 0)] } else { -f[(i, 0)] }))
        .unwrap();
    let err = optimize_mapping_params(
        &s.train,
        EvalSource::Validation(&s.valid),
        &mirrored,
        LossKind::Squared,
        0.01,
        &SearchGrid::new(vec![1.0], vec![0.0]).unwrap(),
        &RngStream::new(7, 9),
    )
    .unwrap_err();
    assert!(matches!(err, Error::DegenerateMu0 { .. }), "{err}");
}
