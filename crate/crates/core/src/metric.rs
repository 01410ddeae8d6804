//! Diagonal variable metric and sparsity weights.
//!
//! A [`DiagonalMetric`] is stored through the diagonal of its inverse
//! (`g_inv`), since the hyperslab projection and the ball conjugation consume
//! `G^{-1}` and `G^{±1/2}`. The diagonal of `G` itself is `1 / g_inv`.

use crate::error::{check_dim, check_finite, Error, Result};

/// Entries of `g_inv` and of the sparsity weights must exceed this.
pub const POSITIVE_FLOOR: f64 = 1e-300;

/// Default regularizer of the reweighting rule.
pub const DEFAULT_EPS_TILDE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMetric {
    g_inv: Vec<f64>,
}

impl DiagonalMetric {
    /// The Euclidean metric, `G = I`.
    pub fn identity(m: usize) -> Self {
        DiagonalMetric {
            g_inv: vec![1.0; m],
        }
    }

    pub fn from_inverse_diagonal(g_inv: Vec<f64>) -> Result<Self> {
        check_finite("g_inv", &g_inv)?;
        if let Some(i) = g_inv.iter().position(|&g| g <= POSITIVE_FLOOR) {
            return Err(Error::InvalidInput(format!(
                "g_inv[{i}] = {} is not strictly positive",
                g_inv[i]
            )));
        }
        Ok(DiagonalMetric { g_inv })
    }

    /// Proportionate metric built from the estimate `h`:
    /// `g_inv_i = (1 - alpha)/m + alpha |h_i| / ||h||_1`.
    ///
    /// A zero estimate yields the uniform metric `1/m`, the `alpha -> 0`
    /// limit of the formula.
    pub fn update(h: &[f64], alpha: f64) -> Result<Self> {
        check_finite("h", h)?;
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!(
                "alpha = {alpha} must lie in [0, 1)"
            )));
        }
        let m = h.len();
        if m == 0 {
            return Err(Error::InvalidInput("empty estimate".into()));
        }
        let uniform = 1.0 / m as f64;
        let l1: f64 = h.iter().map(|x| x.abs()).sum();
        let g_inv = if l1 > 0.0 {
            let base = (1.0 - alpha) * uniform;
            h.iter().map(|x| base + alpha * x.abs() / l1).collect()
        } else {
            vec![uniform; m]
        };
        // alpha < 1 keeps every entry at least (1 - alpha)/m.
        Self::from_inverse_diagonal(g_inv)
    }

    pub fn dim(&self) -> usize {
        self.g_inv.len()
    }

    /// Diagonal of `G^{-1}`.
    pub fn g_inv(&self) -> &[f64] {
        &self.g_inv
    }

    pub fn is_identity(&self) -> bool {
        self.g_inv.iter().all(|&g| g == 1.0)
    }

    /// `<a, b>_G = sum a_i b_i / g_inv_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        Ok(self.inner_unchecked(a, b))
    }

    pub fn norm(&self, h: &[f64]) -> Result<f64> {
        check_dim(self.dim(), h.len())?;
        Ok(self.norm_sq_unchecked(h).sqrt())
    }

    /// `||a - b||_G`.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        Ok(a.iter()
            .zip(b)
            .zip(&self.g_inv)
            .map(|((x, y), g)| (x - y) * (x - y) / g)
            .sum::<f64>()
            .sqrt())
    }

    /// `||u||^2_{G^{-1}} = sum g_inv_i u_i^2`.
    pub fn dual_norm_sq(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        Ok(self.dual_norm_sq_unchecked(u))
    }

    pub(crate) fn inner_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.g_inv)
            .map(|((x, y), g)| x * y / g)
            .sum()
    }

    pub(crate) fn norm_sq_unchecked(&self, h: &[f64]) -> f64 {
        h.iter().zip(&self.g_inv).map(|(x, g)| x * x / g).sum()
    }

    pub(crate) fn dual_norm_sq_unchecked(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.g_inv).map(|(x, g)| g * x * x).sum()
    }
}

/// Reweighting vector of the weighted ℓ1 ball.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityWeights {
    w: Vec<f64>,
    eps_tilde: f64,
}

impl SparsityWeights {
    /// `w_i = 1 / (|h_i| + eps_tilde)`.
    pub fn update(h: &[f64], eps_tilde: f64) -> Result<Self> {
        if !(eps_tilde > 0.0 && eps_tilde.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "eps_tilde = {eps_tilde} must be positive and finite"
            )));
        }
        check_finite("h", h)?;
        let w = h.iter().map(|x| 1.0 / (x.abs() + eps_tilde)).collect();
        Ok(SparsityWeights { w, eps_tilde })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn eps_tilde(&self) -> f64 {
        self.eps_tilde
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.w
    }
}
