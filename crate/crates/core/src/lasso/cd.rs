use nalgebra::{Cholesky, DMatrix, DVector};

use super::{soft_threshold, LassoFit, LassoProblem, SolverOptions, COVARIANCE_UPDATE_LIMIT};
use crate::error::Result;
use crate::scalar::Real;

/// Gradient bookkeeping. `grad_l = X_l'(y - Xβ) / n`.
enum Updates<T: Real> {
    /// Cached Gram columns `X'X_l / n`, computed the first time `β_l` moves.
    Covariance {
        xty: DVector<T>,
        gram: Vec<Option<DVector<T>>>,
    },
    /// Running residual `y - Xβ`.
    Naive { resid: DVector<T> },
}

/// Warm-startable coordinate-descent state for one design/response pair.
pub(crate) struct CoordinateDescent<'a, T: Real> {
    x: &'a DMatrix<T>,
    y: &'a DVector<T>,
    weights: &'a DVector<T>,
    inv_n: T,
    col_sq: Vec<T>,
    usable: Vec<bool>,
    beta: DVector<T>,
    grad: DVector<T>,
    updates: Updates<T>,
    /// Penalty of the previous solve, for the sequential strong rule.
    previous: Option<T>,
    last_rss: T,
}

/// Sweeps with an unchanged signed support before an active-set Newton step is tried.
const POLISH_AFTER: usize = 3;

impl<'a, T: Real> CoordinateDescent<'a, T> {
    pub(crate) fn new(x: &'a DMatrix<T>, y: &'a DVector<T>, weights: &'a DVector<T>) -> Self {
        let (n, d) = x.shape();
        let inv_n = T::one() / T::lit(n as f64);
        let col_sq: Vec<T> = x.column_iter().map(|c| c.norm_squared() * inv_n).collect();
        let usable = (0..d)
            .map(|l| weights[l] > T::zero() && col_sq[l] > T::zero())
            .collect();
        let xty = x.tr_mul(y) * inv_n;
        let updates = if d < COVARIANCE_UPDATE_LIMIT {
            Updates::Covariance {
                xty: xty.clone(),
                gram: vec![None; d],
            }
        } else {
            Updates::Naive { resid: y.clone() }
        };
        Self {
            x,
            y,
            weights,
            inv_n,
            col_sq,
            usable,
            beta: DVector::zeros(d),
            grad: xty,
            updates,
            previous: None,
            last_rss: y.norm_squared(),
        }
    }

    pub(crate) fn coef(&self) -> &DVector<T> {
        &self.beta
    }

    /// Current gradient entry; exact in naive mode, maintained on the working set otherwise.
    fn gradient_at(&self, l: usize) -> T {
        match &self.updates {
            Updates::Covariance { .. } => self.grad[l],
            Updates::Naive { resid } => self.x.column(l).dot(resid) * self.inv_n,
        }
    }

    fn move_coordinate(&mut self, l: usize, delta: T, working: &[usize]) {
        self.beta[l] += delta;
        let (x, inv_n) = (self.x, self.inv_n);
        match &mut self.updates {
            Updates::Covariance { gram, .. } => {
                let g = gram[l].get_or_insert_with(|| x.tr_mul(&x.column(l)) * inv_n);
                for &k in working {
                    self.grad[k] -= delta * g[k];
                }
            }
            Updates::Naive { resid } => resid.axpy(-delta, &x.column(l), T::one()),
        }
    }

    fn refresh_gradient(&mut self) {
        match &self.updates {
            Updates::Covariance { xty, gram } => {
                let mut g = xty.clone();
                for (l, &b) in self.beta.iter().enumerate() {
                    if b != T::zero() {
                        let col = gram[l].as_ref().expect("moved coordinates have gram columns");
                        g.axpy(-b, col, T::one());
                    }
                }
                self.grad = g;
            }
            Updates::Naive { .. } => {
                // Recompute the residual to shed accumulated rounding.
                let r = self.y - self.x * &self.beta;
                self.grad = self.x.tr_mul(&r) * self.inv_n;
                self.updates = Updates::Naive { resid: r };
            }
        }
    }

    /// Signed support restricted to the working set.
    fn signed_support(&self, working: &[usize]) -> Vec<(usize, bool)> {
        working
            .iter()
            .filter(|&&l| self.beta[l] != T::zero())
            .map(|&l| (l, self.beta[l] > T::zero()))
            .collect()
    }

    /// Active-set Newton step.
    ///
    /// With the signs `s` of the support `A` fixed, the objective is the quadratic
    /// minimised by `G_AA β_A = c_A - λ w_A s_A`. Moving from the current point
    /// towards that minimiser, stopping at the first sign change, never increases
    /// the objective. Returns false when the step was not taken (naive updates or a
    /// numerically singular `G_AA`).
    fn polish(&mut self, support: &[(usize, bool)], lambda: T, working: &[usize]) -> bool {
        let Updates::Covariance { xty, gram } = &self.updates else {
            return false;
        };
        let k = support.len();
        if k == 0 {
            return false;
        }
        let g_aa = DMatrix::from_fn(k, k, |r, c| {
            gram[support[c].0].as_ref().expect("active coordinates have gram columns")[support[r].0]
        });
        let rhs = DVector::from_fn(k, |r, _| {
            let (l, positive) = support[r];
            let pen = lambda * self.weights[l];
            xty[l] - if positive { pen } else { -pen }
        });
        let Some(chol) = Cholesky::new(g_aa) else {
            return false;
        };
        let target = chol.solve(&rhs);
        if target.iter().any(|v| !v.is_finite()) {
            return false;
        }
        // Largest step in (0, 1] keeping every coordinate on its side of zero.
        let mut step = T::one();
        let mut blocking = None;
        for (r, &(l, _)) in support.iter().enumerate() {
            let (from, to) = (self.beta[l], target[r]);
            if to * from < T::zero() || to == T::zero() {
                let t = from / (from - to);
                if t < step {
                    step = t;
                    blocking = Some(l);
                }
            }
        }
        for (r, &(l, _)) in support.iter().enumerate() {
            let next = if blocking == Some(l) {
                T::zero()
            } else {
                self.beta[l] + step * (target[r] - self.beta[l])
            };
            let delta = next - self.beta[l];
            if delta != T::zero() {
                self.move_coordinate(l, delta, working);
            }
        }
        true
    }

    fn violation(&self, l: usize, g: T, lambda: T) -> T {
        let bound = lambda * self.weights[l];
        if self.beta[l] == T::zero() {
            (g.abs() - bound).max(T::zero())
        } else {
            (g - bound * self.beta[l].signum()).abs()
        }
    }

    /// Solves at `lambda` starting from the current coefficients.
    pub(crate) fn fit(&mut self, lambda: T, opts: &SolverOptions<T>) -> LassoFit<T> {
        let d = self.beta.len();
        let limit = opts.sweep_limit(d);
        let tol = opts.tol;

        let mut in_set = vec![false; d];
        let mut working: Vec<usize> = Vec::new();
        // Sequential strong rule on top of the current support.
        let strong_cut = self.previous.map(|prev| lambda + lambda - prev);
        for l in 0..d {
            if !self.usable[l] {
                continue;
            }
            let keep = self.beta[l] != T::zero()
                || strong_cut.is_some_and(|cut| self.grad[l].abs() >= cut * self.weights[l]);
            if keep {
                in_set[l] = true;
                working.push(l);
            }
        }

        let mut sweeps = 0;
        let mut kkt;
        let mut converged = false;
        loop {
            let mut support = self.signed_support(&working);
            let mut stable = 0;
            // Inner sweeps restricted to the working set.
            while sweeps < limit {
                sweeps += 1;
                for idx in 0..working.len() {
                    let l = working[idx];
                    let g = self.gradient_at(l);
                    let c = self.col_sq[l];
                    let target =
                        soft_threshold(g + c * self.beta[l], lambda * self.weights[l]) / c;
                    let delta = target - self.beta[l];
                    if delta != T::zero() {
                        self.move_coordinate(l, delta, &working);
                    }
                }
                let inner = working
                    .iter()
                    .map(|&l| self.violation(l, self.gradient_at(l), lambda))
                    .fold(T::zero(), T::max);
                if inner <= tol {
                    break;
                }
                let now = self.signed_support(&working);
                if now == support {
                    stable += 1;
                } else {
                    support = now;
                    stable = 0;
                }
                if stable >= POLISH_AFTER {
                    stable = 0;
                    if self.polish(&support, lambda, &working) {
                        self.refresh_gradient();
                    }
                }
            }

            self.refresh_gradient();
            kkt = T::zero();
            for l in 0..d {
                if !self.usable[l] {
                    continue;
                }
                let v = self.violation(l, self.grad[l], lambda);
                kkt = kkt.max(v);
                if v > tol && !in_set[l] {
                    in_set[l] = true;
                    working.push(l);
                }
            }
            if kkt <= tol {
                converged = true;
                break;
            }
            if sweeps >= limit {
                break;
            }
        }
        self.previous = Some(lambda);

        let mut resid = self.y.clone();
        for (l, &b) in self.beta.iter().enumerate() {
            if b != T::zero() {
                resid.axpy(-b, &self.x.column(l), T::one());
            }
        }
        self.last_rss = resid.norm_squared();
        let n = T::one() / self.inv_n;
        let penalty = self
            .weights
            .iter()
            .zip(self.beta.iter())
            .fold(T::zero(), |acc, (&w, &b)| acc + w * b.abs());
        LassoFit {
            coef: self.beta.clone(),
            objective: self.last_rss / (n + n) + lambda * penalty,
            iterations: sweeps,
            kkt_violation: kkt,
            lambda_used: lambda,
            converged,
        }
    }

    /// `‖y - Xβ‖²` at the end of the last solve.
    pub(crate) fn residual_sum_of_squares(&self) -> T {
        self.last_rss
    }
}

/// Coordinate-descent solve from a zero start.
///
/// A fit that exhausts its sweep budget is returned with `converged == false`
/// so callers can still inspect the best iterate.
pub fn solve<T: Real>(problem: &LassoProblem<'_, T>, opts: &SolverOptions<T>) -> Result<LassoFit<T>> {
    problem.validate()?;
    let mut cd = CoordinateDescent::new(problem.design, problem.response, problem.weights);
    Ok(cd.fit(problem.lambda, opts))
}

/// One point of a warm-started penalty path.
#[derive(Clone, Debug)]
pub struct PathFit<T: Real> {
    pub fit: LassoFit<T>,
    /// Set once the training fit explains ≥ 99.9% of the response energy;
    /// from there on the path is frozen at the last computed fit.
    pub saturated: bool,
}

pub(crate) const SATURATION_R2: f64 = 0.999;

/// Warm-started fits along a decreasing grid.
pub fn lasso_path<T: Real>(
    design: &DMatrix<T>,
    response: &DVector<T>,
    weights: &DVector<T>,
    grid: &[T],
    opts: &SolverOptions<T>,
) -> Result<Vec<PathFit<T>>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut walker = PathWalker::new(design, response, weights)?;
    for &lambda in grid {
        out.push(walker.step(lambda, opts));
    }
    Ok(out)
}

/// Incremental path evaluation, so callers can stop early.
pub(crate) struct PathWalker<'a, T: Real> {
    cd: CoordinateDescent<'a, T>,
    total: T,
    last: Option<LassoFit<T>>,
    saturated: bool,
}

impl<'a, T: Real> PathWalker<'a, T> {
    pub(crate) fn new(
        design: &'a DMatrix<T>,
        response: &'a DVector<T>,
        weights: &'a DVector<T>,
    ) -> Result<Self> {
        LassoProblem::new(design, response, weights, T::zero()).validate()?;
        Ok(Self {
            cd: CoordinateDescent::new(design, response, weights),
            total: response.norm_squared(),
            last: None,
            saturated: false,
        })
    }

    pub(crate) fn step(&mut self, lambda: T, opts: &SolverOptions<T>) -> PathFit<T> {
        if self.saturated {
            let fit = self.last.clone().expect("saturated path has a fit");
            return PathFit {
                fit,
                saturated: true,
            };
        }
        let fit = self.cd.fit(lambda, opts);
        if self.total > T::zero() {
            let r2 = T::one() - self.cd.residual_sum_of_squares() / self.total;
            if r2 >= T::lit(SATURATION_R2) {
                self.saturated = true;
            }
        }
        self.last = Some(fit.clone());
        PathFit {
            fit,
            saturated: false,
        }
    }

    #[allow(dead_code)]
    pub(crate) fn coef(&self) -> &DVector<T> {
        self.cd.coef()
    }
}
