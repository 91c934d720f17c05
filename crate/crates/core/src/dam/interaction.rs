//! Leaky rectified polynomial interaction function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f(x) = x^n` for `x > 0`, `-eps_leak * x` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    n: f64,
    eps_leak: f64,
    // Integer vertices take the `powi` path, which is exact for small powers.
    int_power: Option<i32>,
}

impl Interaction {
    pub fn new(n: f64, eps_leak: f64) -> Result<Self> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "interaction vertex must be finite and > 0, got {n}"
            )));
        }
        if !(eps_leak.is_finite() && eps_leak >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "leak slope must be finite and >= 0, got {eps_leak}"
            )));
        }
        let int_power = (n.fract() == 0.0 && n <= 64.0).then(|| n as i32 - 1);
        Ok(Self {
            n,
            eps_leak,
            int_power,
        })
    }

    pub fn vertex(&self) -> f64 {
        self.n
    }

    pub fn eps_leak(&self) -> f64 {
        self.eps_leak
    }

    /// Value and derivative without input validation; used in the hot loops.
    #[inline]
    pub fn value_and_deriv(&self, x: f64) -> (f64, f64) {
        if x > 0.0 {
            let p = match self.int_power {
                Some(k) => x.powi(k),
                None => x.powf(self.n - 1.0),
            };
            (p * x, self.n * p)
        } else {
            (-self.eps_leak * x, -self.eps_leak)
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.value_and_deriv(x).0
    }

    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("interaction argument {x}")));
        }
        Ok(self.value_and_deriv(x))
    }
}

pub fn interaction_and_deriv(x: f64, n: f64, eps_leak: f64) -> Result<(f64, f64)> {
    Interaction::new(n, eps_leak)?.eval(x)
}
