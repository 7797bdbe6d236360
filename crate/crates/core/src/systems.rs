//! Small systems with analytically known behaviour, used as oracles.

use crate::ode::DynamicalSystem;

/// `du/dt = diag(rates)·u`. Lyapunov exponents are exactly the rates.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalLinear {
    rates: Vec<f64>,
}

impl DiagonalLinear {
    pub fn new(rates: Vec<f64>) -> Self {
        Self { rates }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

impl DynamicalSystem for DiagonalLinear {
    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn rhs(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        for ((d, r), x) in du.iter_mut().zip(&self.rates).zip(u) {
            *d = r * x;
        }
    }

    fn stiff_linear_part(&self) -> Option<&[f64]> {
        Some(&self.rates)
    }

    fn nonlinear(&self, _t: f64, _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn label(&self) -> String {
        let rates: Vec<String> = self.rates.iter().map(|r| r.to_string()).collect();
        format!("diaglin({})", rates.join(","))
    }
}

/// The Lorenz system. Its divergence is the constant `-(σ + 1 + β)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl Lorenz {
    pub fn trace(&self) -> f64 {
        -(self.sigma + 1.0 + self.beta)
    }
}

impl DynamicalSystem for Lorenz {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        let (x, y, z) = (u[0], u[1], u[2]);
        du[0] = self.sigma * (y - x);
        du[1] = x * (self.rho - z) - y;
        du[2] = x * y - self.beta * z;
    }

    fn label(&self) -> String {
        format!("lorenz(sigma={}, rho={}, beta={})", self.sigma, self.rho, self.beta)
    }
}
