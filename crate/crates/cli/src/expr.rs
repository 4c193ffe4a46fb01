//! Function arguments such as `--q` and `--rho`: arithmetic expressions in
//! `t` over `sin`, `cos`, `tan`, `exp`, `sqrt`, `ln` and the constants `pi`, `e`.
//! An argument naming an existing file is read as the expression text.

use std::f64::consts::{E, PI};
use std::path::Path;
use std::sync::Arc;

use meval::{ContextProvider, FuncEvalError};

use crate::CliError;

struct Vars {
    t: f64,
}

impl ContextProvider for Vars {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "t" => Some(self.t),
            "pi" => Some(PI),
            "e" => Some(E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
        let f: fn(f64) -> f64 = match name {
            "sin" => f64::sin,
            "cos" => f64::cos,
            "tan" => f64::tan,
            "exp" => f64::exp,
            "sqrt" => f64::sqrt,
            "ln" => f64::ln,
            _ => return Err(FuncEvalError::UnknownFunction),
        };
        match args {
            [x] => Ok(f(*x)),
            _ => Err(FuncEvalError::NumberArgs(1)),
        }
    }
}

/// A parsed expression in the variable `t`.
#[derive(Clone)]
pub struct Expr {
    source: String,
    expr: Arc<meval::Expr>,
}

impl Expr {
    pub fn parse(arg: &str) -> Result<Self, CliError> {
        let source = if Path::new(arg).is_file() {
            std::fs::read_to_string(arg)
                .map_err(|e| CliError::Parameter(format!("cannot read {arg}: {e}")))?
                .trim()
                .to_string()
        } else {
            arg.to_string()
        };
        let expr: meval::Expr = source
            .parse()
            .map_err(|e| CliError::Parameter(format!("cannot parse {source:?}: {e}")))?;
        expr.eval_with_context(Vars { t: 0.5 })
            .map_err(|e| CliError::Parameter(format!("cannot evaluate {source:?}: {e}")))?;
        Ok(Self {
            source,
            expr: Arc::new(expr),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.expr.eval_with_context(Vars { t }).unwrap_or(f64::NAN)
    }

    /// Sixth-order central difference with step `1e-3`.
    pub fn derivative(&self, t: f64) -> f64 {
        let h = 1e-3;
        let d = |k: f64| self.eval(t + k * h) - self.eval(t - k * h);
        (45.0 * d(1.0) - 9.0 * d(2.0) + d(3.0)) / (60.0 * h)
    }

    pub fn into_fn(self) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
        move |t| self.eval(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        let e = Expr::parse("-(1 + sin(2*pi*t)^2)").unwrap();
        let t: f64 = 0.1;
        let s = (2.0 * PI * t).sin();
        assert!((e.eval(t) + 1.0 + s * s).abs() < 1e-15);
        assert!((Expr::parse("1/2").unwrap().eval(0.0) - 0.5).abs() < 1e-15);
        assert!((Expr::parse("exp(t) * e").unwrap().eval(1.0) - E * E).abs() < 1e-14);
        assert!(Expr::parse("foo(t)").is_err());
        assert!(Expr::parse("x + 1").is_err());
        assert!(Expr::parse("1 +").is_err());
    }

    #[test]
    fn derivative() {
        let e = Expr::parse("1 + 0.3*cos(2*pi*t)").unwrap();
        for &t in &[0.0, 0.2, 0.77] {
            let exact = -0.3 * 2.0 * PI * (2.0 * PI * t).sin();
            assert!((e.derivative(t) - exact).abs() < 1e-10);
        }
    }
}
