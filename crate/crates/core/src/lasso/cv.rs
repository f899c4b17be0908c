use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cd::PathWalker;
use super::{LassoFit, SolverOptions};
use crate::error::{DdlError, Result};
use crate::scalar::Real;

/// Fold label of every row: a seeded shuffle dealt round-robin into `folds` groups.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(DdlError::invalid("cross-validation needs at least two folds"));
    }
    if n < folds {
        return Err(DdlError::DegenerateFolds { fold: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        labels[row] = pos % folds;
    }
    Ok(labels)
}

/// Grid points without a new minimum before the CV path may stop early.
pub const CV_STOP_PATIENCE: usize = 10;
/// The CV path stops early only once the error exceeds this multiple of the minimum.
pub const CV_STOP_RATIO: f64 = 1.1;

#[derive(Clone, Debug)]
pub struct CvOutcome<T: Real> {
    pub lambda: T,
    /// Position of `lambda` in `grid`.
    pub index: usize,
    pub grid: Vec<T>,
    /// Mean held-out squared prediction error per evaluated grid point. Shorter than
    /// `grid` when the curve was cut short: after [`CV_STOP_PATIENCE`] points without
    /// a new minimum and with the error above [`CV_STOP_RATIO`] times the minimum.
    pub mean_error: Vec<T>,
}

fn validate_grid<T: Real>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(DdlError::invalid("empty penalty grid"));
    }
    if grid.iter().any(|&l| !(l >= T::zero()) || !l.is_finite()) {
        return Err(DdlError::invalid("penalties must be finite and nonnegative"));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DdlError::invalid("penalty grid must be strictly decreasing"));
    }
    Ok(())
}

/// K-fold cross-validated penalty on already transformed data.
///
/// Folds split rows; column weights stay those of the full data. Errors are
/// accumulated by fold index so the result does not depend on evaluation order.
/// Ties go to the larger penalty.
pub fn cv_lambda<T: Real>(
    design: &DMatrix<T>,
    response: &DVector<T>,
    weights: &DVector<T>,
    folds: usize,
    grid: &[T],
    seed: u64,
    opts: &SolverOptions<T>,
) -> Result<CvOutcome<T>> {
    validate_grid(grid)?;
    let labels = fold_assignment(design.nrows(), folds, seed)?;
    cv_lambda_with_folds(design, response, weights, &labels, grid, opts)
}

/// Cross-validation with an explicit fold label per row.
pub fn cv_lambda_with_folds<T: Real>(
    design: &DMatrix<T>,
    response: &DVector<T>,
    weights: &DVector<T>,
    labels: &[usize],
    grid: &[T],
    opts: &SolverOptions<T>,
) -> Result<CvOutcome<T>> {
    validate_grid(grid)?;
    let n = design.nrows();
    if labels.len() != n || response.len() != n {
        return Err(DdlError::DimensionMismatch {
            expected: n,
            found: labels.len().min(response.len()),
        });
    }
    let folds = labels.iter().copied().max().map_or(0, |m| m + 1);
    if folds < 2 {
        return Err(DdlError::invalid("cross-validation needs at least two folds"));
    }

    struct Split<T: Real> {
        x_train: DMatrix<T>,
        y_train: DVector<T>,
        x_test: DMatrix<T>,
        y_test: DVector<T>,
    }
    let mut splits = Vec::with_capacity(folds);
    for fold in 0..folds {
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == fold).collect();
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != fold).collect();
        if test.is_empty() || train.is_empty() {
            return Err(DdlError::DegenerateFolds { fold });
        }
        splits.push(Split {
            x_train: design.select_rows(train.iter()),
            y_train: response.select_rows(train.iter()),
            x_test: design.select_rows(test.iter()),
            y_test: response.select_rows(test.iter()),
        });
    }
    let mut walkers = splits
        .iter()
        .map(|s| PathWalker::new(&s.x_train, &s.y_train, weights))
        .collect::<Result<Vec<_>>>()?;

    // All folds advance together along the grid so the curve can be cut short
    // once it has clearly turned upwards; errors are summed in fold order.
    let n_t = T::lit(n as f64);
    let stop_ratio = T::lit(CV_STOP_RATIO);
    let mut mean_error: Vec<T> = Vec::with_capacity(grid.len());
    let mut index = 0;
    for (g, &lambda) in grid.iter().enumerate() {
        let mut total = T::zero();
        for (walker, split) in walkers.iter_mut().zip(&splits) {
            let step = walker.step(lambda, opts);
            total += (&split.y_test - &split.x_test * &step.fit.coef).norm_squared();
        }
        let err = total / n_t;
        mean_error.push(err);
        if err < mean_error[index] {
            index = g;
        }
        if g - index >= CV_STOP_PATIENCE && err > stop_ratio * mean_error[index] {
            break;
        }
    }
    Ok(CvOutcome {
        lambda: grid[index],
        index,
        grid: grid.to_vec(),
        mean_error,
    })
}

#[derive(Clone, Debug)]
pub struct VarianceInflation<T: Real> {
    pub lambda: T,
    pub index: usize,
    /// `v(lambda) / v(lambda_cv)`.
    pub ratio: T,
    /// False when no grid point reached the requested inflation.
    pub reached: bool,
    pub fit: LassoFit<T>,
    /// `v(lambda_cv)`.
    pub base_variance: T,
}

/// Walks the grid from the cross-validated penalty towards smaller penalties and
/// returns the first point whose variance functional reaches `target · v(λ_cv)`.
///
/// `variance` maps regression coefficients to the variance functional (up to the
/// noise factor). Points where it reports a degenerate denominator are skipped.
/// If the target is never reached, the last grid point visited is returned with
/// `reached == false`.
#[allow(clippy::too_many_arguments)]
pub fn inflate_lambda_for_variance<T, F>(
    design: &DMatrix<T>,
    response: &DVector<T>,
    weights: &DVector<T>,
    grid: &[T],
    cv_index: usize,
    target: T,
    mut variance: F,
    opts: &SolverOptions<T>,
) -> Result<VarianceInflation<T>>
where
    T: Real,
    F: FnMut(&DVector<T>) -> Result<T>,
{
    validate_grid(grid)?;
    if cv_index >= grid.len() {
        return Err(DdlError::IndexOutOfRange {
            index: cv_index,
            limit: grid.len(),
        });
    }
    let mut walker = PathWalker::new(design, response, weights)?;
    let mut cv_fit = None;
    for &lambda in &grid[..=cv_index] {
        cv_fit = Some(walker.step(lambda, opts));
    }
    let cv_fit = cv_fit.expect("grid prefix is nonempty").fit;
    let base = variance(&cv_fit.coef)?;
    let mut best = VarianceInflation {
        lambda: grid[cv_index],
        index: cv_index,
        ratio: T::one(),
        reached: target <= T::one(),
        fit: cv_fit,
        base_variance: base,
    };
    if best.reached {
        return Ok(best);
    }

    let wanted = target * base;
    for (i, &lambda) in grid.iter().enumerate().skip(cv_index + 1) {
        let step = walker.step(lambda, opts);
        match variance(&step.fit.coef) {
            Ok(v) => {
                best = VarianceInflation {
                    lambda,
                    index: i,
                    ratio: v / base,
                    reached: v >= wanted,
                    fit: step.fit,
                    base_variance: base,
                };
                if best.reached {
                    return Ok(best);
                }
            }
            Err(DdlError::DegenerateDenominator { .. }) => {}
            Err(e) => return Err(e),
        }
        if step.saturated {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::{column_weights, lambda_grid, lambda_max, lasso_path};

    fn toy(n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(n, d, |i, j| {
            (((i * 37 + j * 11 + i * j * 3) % 29) as f64 - 14.0) / 8.0
        });
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] - 0.5 * x[(i, 1)] + ((i * 7) % 5) as f64 * 0.1);
        (x, y)
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let a = fold_assignment(23, 5, 9).unwrap();
        let b = fold_assignment(23, 5, 9).unwrap();
        assert_eq!(a, b);
        for f in 0..5 {
            let c = a.iter().filter(|&&l| l == f).count();
            assert!(c == 4 || c == 5);
        }
        assert_ne!(a, fold_assignment(23, 5, 10).unwrap());
        assert!(matches!(fold_assignment(3, 5, 0), Err(DdlError::DegenerateFolds { .. })));
        assert!(fold_assignment(10, 1, 0).is_err());
    }

    #[test]
    fn single_point_grid() {
        let (x, y) = toy(30, 4);
        let w = column_weights(&x);
        let out = cv_lambda(&x, &y, &w, 5, &[0.3], 1, &SolverOptions::default()).unwrap();
        assert_eq!(out.lambda, 0.3);
        assert_eq!(out.index, 0);
    }

    #[test]
    fn rejects_non_decreasing_grid() {
        let (x, y) = toy(30, 4);
        let w = column_weights(&x);
        let opts = SolverOptions::default();
        assert!(cv_lambda(&x, &y, &w, 5, &[0.1, 0.2], 1, &opts).is_err());
        assert!(cv_lambda(&x, &y, &w, 5, &[], 1, &opts).is_err());
    }

    #[test]
    fn duplicated_halves_reproduce_in_sample_curve() {
        let (half_x, half_y) = toy(20, 5);
        let x = DMatrix::from_fn(40, 5, |i, j| half_x[(i % 20, j)]);
        let y = DVector::from_fn(40, |i, _| half_y[i % 20]);
        let labels: Vec<usize> = (0..40).map(|i| i / 20).collect();
        let w = column_weights(&x);
        let grid = lambda_grid(lambda_max(&x, &y, &w), 30, 1e-2);
        let opts = SolverOptions::with_tol(1e-12);
        let cv = cv_lambda_with_folds(&x, &y, &w, &labels, &grid, &opts).unwrap();

        let in_sample: Vec<f64> = lasso_path(&half_x, &half_y, &w, &grid, &opts)
            .unwrap()
            .iter()
            .map(|p| (&half_y - &half_x * &p.fit.coef).norm_squared() / 20.0)
            .collect();
        for (a, b) in cv.mean_error.iter().zip(&in_sample) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
        let argmin = in_sample
            .iter()
            .enumerate()
            .fold(0, |best, (i, &e)| if e < in_sample[best] { i } else { best });
        assert_eq!(cv.index, argmin);
    }

    #[test]
    fn unit_target_returns_cv_point() {
        let (x, y) = toy(30, 4);
        let w = column_weights(&x);
        let grid = lambda_grid(lambda_max(&x, &y, &w), 20, 1e-2);
        let out = inflate_lambda_for_variance(
            &x,
            &y,
            &w,
            &grid,
            5,
            1.0,
            |c: &DVector<f64>| Ok(1.0 + c.norm()),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(out.index, 5);
        assert!(out.reached);
    }

    #[test]
    fn constant_functional_is_flagged() {
        let (x, y) = toy(30, 4);
        let w = column_weights(&x);
        let grid = lambda_grid(lambda_max(&x, &y, &w), 20, 1e-2);
        let out = inflate_lambda_for_variance(
            &x,
            &y,
            &w,
            &grid,
            5,
            1.25,
            |_: &DVector<f64>| Ok(2.0),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(!out.reached);
        assert_eq!(out.index, grid.len() - 1);
        assert_eq!(out.ratio, 1.0);
    }
}
