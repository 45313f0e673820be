//! Analytic non-convex test functions where every coordinate is its own
//! "layer". They make saddle escape and per-layer gradient spread directly
//! measurable.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::LayerGradients;
use crate::optim::OptimizerState;
use crate::tensor::Tensor;

pub const DEFAULT_ESCAPE_RADIUS: f64 = 1.0;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Landscape {
    /// `f(x, y) = ½x² − ½y²`; layers `{x}`, `{y}`; escape along `y`.
    QuadraticSaddle,
    /// `f(x, y) = x³ − 3xy²`; layers `{x}`, `{y}`.
    MonkeySaddle,
    /// `f(w) = ½(w₁w₂⋯w_d − 1)²`; each `wᵢ` is a layer.
    DeepLinearChain { depth: usize },
}

impl Landscape {
    pub fn dim(&self) -> usize {
        match *self {
            Landscape::QuadraticSaddle | Landscape::MonkeySaddle => 2,
            Landscape::DeepLinearChain { depth } => depth,
        }
    }

    pub fn saddle(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn check(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::dim("landscape point", &[point.len()], &[self.dim()]));
        }
        Ok(())
    }

    /// Value and exact gradient (one entry per coordinate).
    pub fn value_and_gradient(&self, point: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(point)?;
        Ok(match *self {
            Landscape::QuadraticSaddle => {
                let (x, y) = (point[0], point[1]);
                (0.5 * x * x - 0.5 * y * y, vec![x, -y])
            }
            Landscape::MonkeySaddle => {
                let (x, y) = (point[0], point[1]);
                (
                    x * x * x - 3.0 * x * y * y,
                    vec![3.0 * x * x - 3.0 * y * y, -6.0 * x * y],
                )
            }
            Landscape::DeepLinearChain { depth } => {
                // prefix[i] = w₀⋯w_{i−1}, suffix[i] = w_i⋯w_{d−1}
                let mut prefix = vec![1.0; depth + 1];
                for i in 0..depth {
                    prefix[i + 1] = prefix[i] * point[i];
                }
                let mut suffix = vec![1.0; depth + 1];
                for i in (0..depth).rev() {
                    suffix[i] = suffix[i + 1] * point[i];
                }
                let residual = prefix[depth] - 1.0;
                let grad = (0..depth).map(|i| prefix[i] * suffix[i + 1] * residual).collect();
                (0.5 * residual * residual, grad)
            }
        })
    }

    pub fn value(&self, point: &[f64]) -> Result<f64> {
        Ok(self.value_and_gradient(point)?.0)
    }

    /// A start at offset `y0` from the saddle along a descent direction:
    /// `(0, y0)`, `(−y0, 0)` for the monkey saddle, and `y0` in every
    /// coordinate of the chain.
    pub fn start_point(&self, y0: f64) -> Vec<f64> {
        match *self {
            Landscape::QuadraticSaddle => vec![0.0, y0],
            Landscape::MonkeySaddle => vec![-y0, 0.0],
            Landscape::DeepLinearChain { depth } => vec![y0; depth],
        }
    }

    /// Distance from the saddle used for the escape test.
    pub fn escape_distance(&self, point: &[f64]) -> f64 {
        match self {
            Landscape::QuadraticSaddle => point[1].abs(),
            _ => point.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

impl fmt::Display for Landscape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Landscape::QuadraticSaddle => write!(f, "quadratic-saddle"),
            Landscape::MonkeySaddle => write!(f, "monkey-saddle"),
            Landscape::DeepLinearChain { depth } => write!(f, "deep-linear-chain:{depth}"),
        }
    }
}

impl FromStr for Landscape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quadratic-saddle" => Ok(Landscape::QuadraticSaddle),
            "monkey-saddle" => Ok(Landscape::MonkeySaddle),
            other => {
                let depth = other
                    .strip_prefix("deep-linear-chain:")
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown landscape `{other}`")))?;
                if depth < 2 {
                    return Err(Error::Config("chain depth must be at least 2".into()));
                }
                Ok(Landscape::DeepLinearChain { depth })
            }
        }
    }
}

/// Coordinates as one scalar parameter tensor per layer.
pub fn point_to_params(point: &[f64]) -> Vec<Vec<Tensor>> {
    point.iter().map(|&v| vec![Tensor::scalar(v)]).collect()
}

pub fn params_to_point(params: &[Vec<Tensor>]) -> Vec<f64> {
    params.iter().map(|g| g[0].data()[0]).collect()
}

/// Value and per-layer gradients.
pub fn eval_grad(landscape: &Landscape, point: &[f64]) -> Result<(f64, LayerGradients)> {
    let (value, grad) = landscape.value_and_gradient(point)?;
    Ok((value, LayerGradients::new(point_to_params(&grad))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeOutcome {
    /// Steps taken until the distance from the saddle first exceeded the radius.
    Escaped(u64),
    /// Still inside the radius after `max_iter` steps.
    NotEscaped { max_iter: u64 },
}

impl EscapeOutcome {
    /// Escape count, or `max_iter` as a sentinel.
    pub fn iterations(&self) -> u64 {
        match *self {
            EscapeOutcome::Escaped(k) => k,
            EscapeOutcome::NotEscaped { max_iter } => max_iter,
        }
    }

    pub fn escaped(&self) -> bool {
        matches!(self, EscapeOutcome::Escaped(_))
    }
}

/// Runs `opt` with constant rate `lr` from `start` until the iterate leaves
/// `escape_radius` around the saddle.
pub fn run_escape_trial(
    opt: &mut OptimizerState,
    landscape: &Landscape,
    start: &[f64],
    lr: f64,
    escape_radius: f64,
    max_iter: u64,
) -> Result<EscapeOutcome> {
    landscape.check(start)?;
    if landscape.escape_distance(start) > escape_radius {
        return Err(Error::Config(format!(
            "start {start:?} already lies outside escape radius {escape_radius}"
        )));
    }
    const TAIL: usize = 5;
    let mut params = point_to_params(start);
    let mut tail: Vec<Vec<f64>> = Vec::with_capacity(TAIL);
    for k in 1..=max_iter {
        let at = if opt.needs_lookahead() {
            params_to_point(&opt.lookahead(&params))
        } else {
            params_to_point(&params)
        };
        let (_, grads) = eval_grad(landscape, &at)?;
        if let Err(e) = opt.step(&mut params, &grads, lr) {
            return Err(match e {
                Error::Numeric { message, .. } => Error::Numeric {
                    iteration: Some(k),
                    message: format!("{message}; last points {tail:?}"),
                },
                other => other,
            });
        }
        let point = params_to_point(&params);
        if tail.len() == TAIL {
            tail.remove(0);
        }
        tail.push(point.clone());
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                iteration: Some(k),
                message: format!("iterate diverged; last points {tail:?}"),
            });
        }
        if landscape.escape_distance(&point) > escape_radius {
            return Ok(EscapeOutcome::Escaped(k));
        }
    }
    Ok(EscapeOutcome::NotEscaped { max_iter })
}

/// `|∂f/∂wᵢ|` for the depth-`d` chain at `point`.
pub fn chain_gradient_profile(depth: usize, point: &[f64]) -> Result<Vec<f64>> {
    if depth < 2 {
        return Err(Error::Config("chain depth must be at least 2".into()));
    }
    let (_, g) = Landscape::DeepLinearChain { depth }.value_and_gradient(point)?;
    Ok(g.into_iter().map(f64::abs).collect())
}

/// Iterations plain gradient descent needs on the quadratic saddle from
/// `(0, y0)`: `|y_k| = y0 (1 + t)^k`.
pub fn quadratic_saddle_escape_closed_form(y0: f64, lr: f64, radius: f64) -> u64 {
    ((radius / y0).ln() / lr.ln_1p()).ceil() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_saddle_values() {
        let l = Landscape::QuadraticSaddle;
        assert_eq!(l.value_and_gradient(&[0.0, 0.0]).unwrap(), (0.0, vec![0.0, 0.0]));
        assert_eq!(l.value_and_gradient(&[1.0, 2.0]).unwrap().1, vec![1.0, -2.0]);
    }

    #[test]
    fn chain_values() {
        let l = Landscape::DeepLinearChain { depth: 3 };
        let (v, g) = l.value_and_gradient(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g, vec![2.0, 2.0, 1.0]);
        let (a, b) = (0.3, -1.7);
        let g = chain_gradient_profile(2, &[a, b]).unwrap();
        let r: f64 = a * b - 1.0;
        assert!((g[0] - (b * r).abs()).abs() < 1e-15);
        assert!((g[1] - (a * r).abs()).abs() < 1e-15);
    }

    #[test]
    fn dimension_checked() {
        assert!(Landscape::QuadraticSaddle.value_and_gradient(&[1.0]).is_err());
        assert!(chain_gradient_profile(1, &[1.0]).is_err());
    }

    #[test]
    fn parse_roundtrip() {
        for l in [
            Landscape::QuadraticSaddle,
            Landscape::MonkeySaddle,
            Landscape::DeepLinearChain { depth: 7 },
        ] {
            assert_eq!(l.to_string().parse::<Landscape>().unwrap(), l);
        }
        assert!("deep-linear-chain:1".parse::<Landscape>().is_err());
    }

    #[test]
    fn closed_form_escape() {
        assert_eq!(quadratic_saddle_escape_closed_form(0.1, 0.1, 1.0), 25);
    }
}
