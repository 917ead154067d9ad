//! Special functions backing the estimators and identification threshold:
//! principal-branch Lambert-W, the regularized incomplete beta function, and
//! log-gamma. All functions here are pure and thread-safe.

use thiserror::Error;

/// Domain violations for the special functions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("lambert_w0 requires x >= -1/e, got {0}")]
    BelowBranchPoint(f64),
    #[error(
        "regularized incomplete beta requires a > 0, b > 0, 0 <= x <= 1, got a={a}, b={b}, x={x}"
    )]
    BetaDomain { a: f64, b: f64, x: f64 },
    #[error("log_gamma requires x > 0, got {0}")]
    LogGammaDomain(f64),
}

const INV_E: f64 = 1.0 / std::f64::consts::E;
const HALLEY_MAX_ITER: usize = 100;
const HALLEY_STEP_TOL: f64 = 1e-15;

/// Principal branch of the Lambert-W function: the solution `w >= -1` of
/// `w * exp(w) = x`, defined for `x >= -1/e`.
///
/// Halley iteration from a piecewise initial guess (branch-point series near
/// `-1/e`, asymptotic log expansion for large `x`); stops when the step drops
/// below 1e-15 or after 100 iterations.
pub fn lambert_w0(x: f64) -> Result<f64, NumericsError> {
    if !x.is_finite() || x < -INV_E - 1e-12 {
        return Err(NumericsError::BelowBranchPoint(x));
    }
    if x <= -INV_E {
        // Within tolerance of the branch point.
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let mut w = initial_guess(x);
    for _ in 0..HALLEY_MAX_ITER {
        let ew = w.exp();
        let wew = w * ew;
        let f = wew - x;
        // Halley: w' = w - f / (f' - f * f'' / (2 f')) with f' = (w+1)e^w,
        // f'' = (w+2)e^w.
        let deriv = ew * (w + 1.0);
        let denom = deriv - f * (w + 2.0) / (2.0 * (w + 1.0));
        let step = if denom != 0.0 { f / denom } else { f / deriv };
        w -= step;
        if w < -1.0 {
            w = -1.0;
        }
        if step.abs() <= HALLEY_STEP_TOL || step == 0.0 {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(x: f64) -> f64 {
    if x < -INV_E + 0.04 {
        // Series around the branch point in p = sqrt(2(e*x + 1)).
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < std::f64::consts::E {
        // Small-|x| series; adequate seed for Halley on (-1/e, e).
        let w = x * (1.0 - x + 1.5 * x * x);
        w.max(-0.99)
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// Regularized incomplete beta function `I_x(a, b) = P(Beta(a, b) <= x)`.
///
/// Continued-fraction evaluation (modified Lentz) with the standard symmetry
/// flip `I_x(a,b) = 1 - I_{1-x}(b,a)` when `x > (a+1)/(a+b+2)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64, NumericsError> {
    if a.is_nan() || a <= 0.0 || b.is_nan() || b <= 0.0 || !(0.0..=1.0).contains(&x) {
        return Err(NumericsError::BetaDomain { a, b, x });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if a == b && x == 0.5 {
        // Beta(a, a) is symmetric about 1/2.
        return Ok(0.5);
    }
    // ln of the front factor x^a (1-x)^b / (a B(a, b)).
    let ln_front =
        a * x.ln() + b * (1.0 - x).ln() + log_gamma(a + b)? - log_gamma(a)? - log_gamma(b)?;
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() / a) * beta_continued_fraction(a, b, x)
    } else {
        1.0 - (ln_front.exp() / b) * beta_continued_fraction(b, a, 1.0 - x)
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Modified Lentz evaluation of the continued fraction for `I_x(a, b)`.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;

        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

// Lanczos coefficients (g = 607/128, 15 terms).
#[allow(clippy::excessive_precision)]
const LANCZOS_BASE: f64 = 0.999999999999997092;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 14] = [
    57.1562356658629235,
    -59.5979603554754912,
    14.1360979747417471,
    -0.491913816097620199,
    0.339946499848118887e-4,
    0.465236289270485756e-4,
    -0.983744753048795646e-4,
    0.158088703224912494e-3,
    -0.210264441724104883e-3,
    0.217439618115212643e-3,
    -0.164318106536763890e-3,
    0.844182239838527433e-4,
    -0.261908384015814087e-4,
    0.368991826595316234e-5,
];
const SQRT_2PI: f64 = 2.5066282746310005;

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64, NumericsError> {
    if x.is_nan() || x <= 0.0 {
        return Err(NumericsError::LogGammaDomain(x));
    }
    if x < 0.5 {
        // Reflection keeps full accuracy on (0, 1/2).
        let reflected = log_gamma(1.0 - x)?;
        return Ok((std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - reflected);
    }
    let mut y = x;
    let tmp = x + 5.2421875;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = LANCZOS_BASE;
    for c in LANCZOS_COEF {
        y += 1.0;
        ser += c / y;
    }
    Ok(tmp + (SQRT_2PI * ser / x).ln())
}
