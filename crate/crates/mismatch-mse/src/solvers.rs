//! Scalar root finding and small damped-Newton systems.

use thiserror::Error;

/// Maximum number of geometric bracket expansions before giving up.
const MAX_EXPANSIONS: usize = 60;
/// Maximum number of step halvings in the Newton line search.
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootConfig {
    pub abs_tol: f64,
    pub max_iters: usize,
    pub bracket_expansion: f64,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig {
            abs_tol: 1e-11,
            max_iters: 200,
            bracket_expansion: 2.0,
        }
    }
}

impl RootConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.abs_tol > 0.0) || !self.abs_tol.is_finite() {
            return Err(SolverError::InvalidConfig(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if self.max_iters < 1 {
            return Err(SolverError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.bracket_expansion > 1.0) || !self.bracket_expansion.is_finite() {
            return Err(SolverError::InvalidConfig(format!(
                "bracket_expansion must exceed 1, got {}",
                self.bracket_expansion
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("non-finite residual at {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("no convergence after {iterations} iterations, residual {residual:e} at {point:?}")]
    MaxIters {
        iterations: usize,
        residual: f64,
        point: Vec<f64>,
    },

    #[error("singular jacobian at {point:?}")]
    SingularJacobian { point: Vec<f64> },

    #[error("bracket collapsed at x = {x} with residual {residual:e}")]
    PrecisionLimit { x: f64, residual: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSolution {
    pub point: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn expand(lo: f64, hi: f64, factor: f64) -> (f64, f64) {
    if lo > 0.0 {
        (lo / factor, hi * factor)
    } else {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo) * factor;
        (mid - half, mid + half)
    }
}

/// Finds a root of `f` inside `bracket` by bisection with bracketed secant
/// steps.
///
/// If the bracket shows no sign change it is widened geometrically: a
/// positive bracket is scaled multiplicatively (so it stays positive), any
/// other bracket is widened about its midpoint.
pub fn solve_scalar_root<F>(mut f: F, bracket: (f64, f64), cfg: &RootConfig) -> Result<f64, SolverError>
where
    F: FnMut(f64) -> f64,
{
    cfg.validate()?;
    let (mut a, mut b) = if bracket.0 <= bracket.1 {
        bracket
    } else {
        (bracket.1, bracket.0)
    };
    let eval = |f: &mut F, x: f64| -> Result<f64, SolverError> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SolverError::NonFinite { point: vec![x] })
        }
    };
    let mut fa = eval(&mut f, a)?;
    let mut fb = eval(&mut f, b)?;
    let mut expansions = 0;
    while fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        if expansions == MAX_EXPANSIONS {
            return Err(SolverError::NoSignChange {
                lo: a,
                hi: b,
                f_lo: fa,
                f_hi: fb,
            });
        }
        (a, b) = expand(a, b, cfg.bracket_expansion);
        fa = eval(&mut f, a)?;
        fb = eval(&mut f, b)?;
        expansions += 1;
    }
    if fa.abs() <= cfg.abs_tol {
        return Ok(a);
    }
    if fb.abs() <= cfg.abs_tol {
        return Ok(b);
    }

    let (mut x_prev, mut f_prev) = (a, fa);
    let (mut x_cur, mut f_cur) = (b, fb);
    let mut force_bisect = false;
    for _ in 0..cfg.max_iters {
        let width = b - a;
        let mut x = if !force_bisect && f_cur != f_prev {
            x_cur - f_cur * (x_cur - x_prev) / (f_cur - f_prev)
        } else {
            f64::NAN
        };
        let secant = x > a && x < b;
        if !secant {
            x = 0.5 * (a + b);
        }
        let fx = eval(&mut f, x)?;
        if fx.abs() <= cfg.abs_tol {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        force_bisect = secant && (b - a) > 0.5 * width;
        (x_prev, f_prev) = (x_cur, f_cur);
        (x_cur, f_cur) = (x, fx);
        if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) || b - a == 0.0 {
            let (x, r) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
            return Err(SolverError::PrecisionLimit { x, residual: r.abs() });
        }
    }
    let (x, r) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
    Err(SolverError::MaxIters {
        iterations: cfg.max_iters,
        residual: r.abs(),
        point: vec![x],
    })
}

/// `cfg` with the residual tolerance removed, so the scalar solver runs to
/// bracket collapse.
pub(crate) fn machine_precision(cfg: &RootConfig) -> RootConfig {
    RootConfig {
        abs_tol: f64::MIN_POSITIVE,
        max_iters: cfg.max_iters.max(200),
        ..*cfg
    }
}

/// Like [`solve_scalar_root`], but accepts a bracket that has collapsed to
/// machine precision as a root even if the residual is above `abs_tol`.
pub(crate) fn solve_scalar_root_to_precision<F>(
    f: F,
    bracket: (f64, f64),
    cfg: &RootConfig,
) -> Result<f64, SolverError>
where
    F: FnMut(f64) -> f64,
{
    match solve_scalar_root(f, bracket, cfg) {
        Err(SolverError::PrecisionLimit { x, .. }) => Ok(x),
        other => other,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves the dense system `jac · x = rhs` by Gaussian elimination with
/// partial pivoting. `jac` is row-major `k × k`.
fn solve_linear(mut jac: Vec<f64>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let k = rhs.len();
    let scale = max_abs(&jac);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| jac[i * k + col].abs().total_cmp(&jac[j * k + col].abs()))
            .unwrap();
        if jac[pivot * k + col].abs() <= 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for j in 0..k {
                jac.swap(pivot * k + j, col * k + j);
            }
            rhs.swap(pivot, col);
        }
        for row in col + 1..k {
            let m = jac[row * k + col] / jac[col * k + col];
            for j in col..k {
                jac[row * k + j] -= m * jac[col * k + j];
            }
            rhs[row] -= m * rhs[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut acc = rhs[row];
        for j in row + 1..k {
            acc -= jac[row * k + j] * x[j];
        }
        x[row] = acc / jac[row * k + row];
    }
    Some(x)
}

/// Damped Newton iteration with a forward-difference Jacobian.
///
/// Each step is halved (up to 30 times) until the infinity norm of the
/// residual decreases. Returns an error unless `‖F‖∞ ≤ abs_tol` is reached.
pub fn solve_system<F>(mut f: F, x0: &[f64], cfg: &RootConfig) -> Result<SystemSolution, SolverError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    let k = x0.len();
    if !(1..=3).contains(&k) {
        return Err(SolverError::InvalidConfig(format!(
            "system dimension must be 1, 2 or 3, got {k}"
        )));
    }
    let mut x = x0.to_vec();
    let mut r = f(&x);
    if r.len() != k {
        return Err(SolverError::InvalidConfig(format!(
            "residual has {} entries for {k} unknowns",
            r.len()
        )));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite { point: x });
    }
    let mut norm = max_abs(&r);
    for iter in 0..cfg.max_iters {
        if norm <= cfg.abs_tol {
            return Ok(SystemSolution {
                point: x,
                residual_norm: norm,
                iterations: iter,
                converged: true,
            });
        }
        let mut jac = vec![0.0; k * k];
        for j in 0..k {
            let h = (1e-7 * x[j].abs()).max(1e-7);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = f(&xp);
            if rp.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::NonFinite { point: xp });
            }
            for i in 0..k {
                jac[i * k + j] = (rp[i] - r[i]) / h;
            }
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = solve_linear(jac, rhs).ok_or_else(|| SolverError::SingularJacobian {
            point: x.clone(),
        })?;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi + t * si).collect();
            let rt = f(&trial);
            if rt.iter().all(|v| v.is_finite()) {
                let nt = max_abs(&rt);
                if nt < norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(SolverError::MaxIters {
                iterations: iter + 1,
                residual: norm,
                point: x,
            });
        }
    }
    if norm <= cfg.abs_tol {
        return Ok(SystemSolution {
            point: x,
            residual_norm: norm,
            iterations: cfg.max_iters,
            converged: true,
        });
    }
    Err(SolverError::MaxIters {
        iterations: cfg.max_iters,
        residual: norm,
        point: x,
    })
}
