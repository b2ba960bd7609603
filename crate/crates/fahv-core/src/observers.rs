//! State reconstruction and lumped-disturbance estimation.
//!
//! * [`SigTracker`]: second-order tracking differentiator driven by the bounded
//!   sigmoid `sig`. One instance reconstructs `h` and `h'` from the measured
//!   altitude, a cascaded one tracks the reconstructed flight-path angle.
//! * [`FtNnObserver`]: practical fixed-time observer whose RBF network output
//!   estimates the lumped disturbance of one channel.
//! * Scalar primitives shared by the observers and the control laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest margin kept between `|h'/V|` and 1 before `arcsin`.
pub const ARCSIN_MARGIN: f64 = 1e-9;

/// Upper bound of `(|x| - x tanh(x/l)) / l` over all `x`.
pub const TANH_SLACK: f64 = 0.2785;

/// `eta0 * (1 / (1 + exp(-eta1 x)) - 1/2)`, evaluated as `eta0/2 * tanh(eta1 x / 2)`
/// so that oddness holds bit-for-bit.
pub fn sig(x: f64, eta0: f64, eta1: f64) -> f64 {
    0.5 * eta0 * (0.5 * eta1 * x).tanh()
}

/// Signed power `|x|^a sgn(x)`.
pub fn spow(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(a).copysign(x)
    }
}

/// `|x| - x tanh(x / l)`: the gap between `|x|` and its smooth-sign surrogate,
/// evaluated as `2|x| / (exp(2|x|/l) + 1)` to avoid cancellation for large `|x|`.
pub fn smooth_sign_slack(x: f64, l: f64) -> f64 {
    let a = x.abs();
    2.0 * a / ((2.0 * a / l).exp() + 1.0)
}

/// Both sides of `(sum |x_i|)^a <= max(n^(a-1), 1) * sum |x_i|^a`.
pub fn power_sum_sides(x: &[f64], a: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let lhs = x.iter().map(|v| v.abs()).sum::<f64>().powf(a);
    let rhs = n.powf(a - 1.0).max(1.0) * x.iter().map(|v| v.abs().powf(a)).sum::<f64>();
    (lhs, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigTrackerParams {
    pub d: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
}

impl SigTrackerParams {
    pub fn new(d: f64, eta: f64) -> Self {
        SigTrackerParams {
            d,
            eta0: eta,
            eta1: eta,
            eta2: eta,
            eta3: eta,
        }
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        for (name, v) in [
            ("d", self.d),
            ("eta0", self.eta0),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{key}.{name}"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// `z1` tracks the input signal, `z2` its derivative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SigTracker {
    pub z1: f64,
    pub z2: f64,
}

impl SigTracker {
    /// `(z1', z2')` with `z2' = -d^2 [sig(z1 - u; eta0, eta1) + sig(z2 / d; eta2, eta3)]`.
    pub fn rhs(&self, p: &SigTrackerParams, measured: f64) -> (f64, f64) {
        let z2_dot = -p.d
            * p.d
            * (sig(self.z1 - measured, p.eta0, p.eta1) + sig(self.z2 / p.d, p.eta2, p.eta3));
        (self.z2, z2_dot)
    }
}

/// `gamma_hat = asin(chi_h / V)`, `alpha_hat = theta - gamma_hat`.
pub fn reconstruct_angles(chi_h: f64, v: f64, theta: f64) -> Result<(f64, f64)> {
    let ratio = chi_h / v;
    if !(ratio.abs() <= 1.0 - ARCSIN_MARGIN) {
        return Err(Error::ArcsinDomain { ratio });
    }
    let gamma_hat = ratio.asin();
    Ok((gamma_hat, theta - gamma_hat))
}

/// Gaussian activations `h_i = exp(-|x - c_i|^2 / b^2)`; `centers` is row-major, one center per row.
pub fn rbf_eval(x: &[f64], centers: &[f64], width: f64) -> Result<Vec<f64>> {
    let dim = x.len();
    if dim == 0 || centers.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: centers.len(),
        });
    }
    if !(width > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "RBF width must be positive, got {width}"
        )));
    }
    let mut out = vec![0.0; centers.len() / dim];
    rbf_into(x, centers, width, &mut out);
    Ok(out)
}

fn rbf_into(x: &[f64], centers: &[f64], width: f64, out: &mut [f64]) {
    let inv_b2 = 1.0 / (width * width);
    for (h, c) in out.iter_mut().zip(centers.chunks_exact(x.len())) {
        let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        *h = (-r2 * inv_b2).exp();
    }
}

/// Tensor-product grid of Gaussian nodes over an axis-aligned input box.
///
/// Inputs are mapped affinely onto the unit cube before evaluation so that a
/// single width serves dimensions with very different physical scales.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork {
    lo: Vec<f64>,
    span: Vec<f64>,
    centers: Vec<f64>,
    width: f64,
}

impl RbfNetwork {
    /// `nodes_per_dim` uniformly spaced centers per input, width `width_factor` times the spacing.
    pub fn grid(ranges: &[[f64; 2]], nodes_per_dim: usize, width_factor: f64) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::ParameterDomain("RBF network needs an input".into()));
        }
        if nodes_per_dim < 2 {
            return Err(Error::ParameterDomain(
                "RBF grid needs at least 2 nodes per dimension".into(),
            ));
        }
        if !(width_factor > 0.0) {
            return Err(Error::ParameterDomain(
                "RBF width factor must be positive".into(),
            ));
        }
        for r in ranges {
            if !(r[0] < r[1]) {
                return Err(Error::ParameterDomain(format!("empty RBF input range {r:?}")));
            }
        }
        let dim = ranges.len();
        let spacing = 1.0 / (nodes_per_dim - 1) as f64;
        let count = nodes_per_dim.pow(dim as u32);
        let mut centers = Vec::with_capacity(count * dim);
        for idx in 0..count {
            let mut rem = idx;
            for _ in 0..dim {
                centers.push((rem % nodes_per_dim) as f64 * spacing);
                rem /= nodes_per_dim;
            }
        }
        Ok(RbfNetwork {
            lo: ranges.iter().map(|r| r[0]).collect(),
            span: ranges.iter().map(|r| r[1] - r[0]).collect(),
            centers,
            width: width_factor * spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Centers in normalized (unit-cube) coordinates.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Activations for a raw (physical-unit) input.
    pub fn activations(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if out.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: out.len(),
            });
        }
        let mut u = [0.0; 8];
        let u = &mut u[..x.len()];
        for i in 0..x.len() {
            u[i] = (x[i] - self.lo[i]) / self.span[i];
        }
        rbf_into(u, &self.centers, self.width, out);
        Ok(())
    }
}

/// Gains of one fixed-time observer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtNnGains {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// Weight leakage.
    pub k: f64,
    pub gamma_w: f64,
    /// Exponent in (0, 1).
    pub alpha1: f64,
    /// Exponent in (1, inf).
    pub beta1: f64,
}

impl FtNnGains {
    pub fn validate(&self, key: &str) -> Result<()> {
        for (name, v) in [
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("k", self.k),
            ("gamma_w", self.gamma_w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{key}.{name}"), "must be positive"));
            }
        }
        if !(self.alpha1 > 0.0 && self.alpha1 < 1.0) {
            return Err(Error::validation(format!("{key}.alpha1"), "must lie in (0, 1)"));
        }
        if !(self.beta1 > 1.0 && self.beta1.is_finite()) {
            return Err(Error::validation(format!("{key}.beta1"), "must be > 1"));
        }
        Ok(())
    }

    /// Output-injection term `-l1 <e>^a1 - l2 <e>^b1 - l3 e`.
    pub fn correction(&self, e1: f64) -> f64 {
        -self.l1 * spow(e1, self.alpha1) - self.l2 * spow(e1, self.beta1) - self.l3 * e1
    }

    /// Lemma-1 settling-time bound for the observation error, using
    /// `V1 = e1^2 / 2`, `c1 = l1`, `c2 = l2`, `p = (a1 + 1) / 2`, `q = (b1 + 1) / 2`.
    pub fn settling_bound(&self, w: f64) -> Result<f64> {
        fixed_time_bound(
            self.l1,
            self.l2,
            0.5 * (self.alpha1 + 1.0),
            0.5 * (self.beta1 + 1.0),
            w,
        )
    }
}

/// Integrated state of one observer.
#[derive(Debug, Clone, PartialEq)]
pub struct FtNnState {
    pub z: f64,
    pub w: Vec<f64>,
}

/// Right-hand side and outputs of one observer evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FtNnEval {
    pub z_dot: f64,
    /// Disturbance estimate, the network output `W^T h(x)`.
    pub d_hat: f64,
    /// Output injection `f(z - x)`.
    pub correction: f64,
}

/// Practical fixed-time RBF neural-network disturbance observer for one channel.
///
/// ```text
/// z'  = W^T h(x) + f(z - x) + f_i + g_i xbar
/// f(e) = -l1 <e>^a1 - l2 <e>^b1 - l3 e
/// W'  = -Gamma_w ((z - x) h(x) + k W)
/// ```
///
/// The weight law descends the composite Lyapunov function
/// `e^2/2 + W~^T W~ / (2 Gamma_w)`; see `weight_law_sign` in the tests.
/// Once `z - x` has settled, `z' = x'` and the estimate differs from the lumped
/// disturbance by the injection term `f(z - x)` plus the network residual.
#[derive(Debug, Clone, PartialEq)]
pub struct FtNnObserver {
    pub gains: FtNnGains,
    pub net: RbfNetwork,
}

impl FtNnObserver {
    pub fn new(gains: FtNnGains, net: RbfNetwork) -> Self {
        FtNnObserver { gains, net }
    }

    pub fn initial_state(&self, x0: f64) -> FtNnState {
        FtNnState {
            z: x0,
            w: vec![0.0; self.net.len()],
        }
    }

    /// Evaluates the observer; `w_dot` and `scratch` must have the network's length.
    #[allow(clippy::too_many_arguments)]
    pub fn rhs(
        &self,
        z: f64,
        w: &[f64],
        x: f64,
        xbar: f64,
        f: f64,
        g: f64,
        nn_input: &[f64],
        w_dot: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<FtNnEval> {
        if w.len() != self.net.len() {
            return Err(Error::DimensionMismatch {
                expected: self.net.len(),
                got: w.len(),
            });
        }
        self.net.activations(nn_input, scratch)?;
        let e1 = z - x;
        let d_hat: f64 = w.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
        let correction = self.gains.correction(e1);
        let gw = self.gains.gamma_w;
        let k = self.gains.k;
        for ((wd, wi), hi) in w_dot.iter_mut().zip(w).zip(scratch.iter()) {
            *wd = -gw * (e1 * hi + k * wi);
        }
        Ok(FtNnEval {
            z_dot: d_hat + correction + f + g * xbar,
            d_hat,
            correction,
        })
    }
}

fn check_lemma1(c1: f64, c2: f64, p: f64, q: f64, w: f64) -> Result<()> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "c1, c2 must be positive (got {c1}, {c2})"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ParameterDomain(format!("p must lie in (0, 1), got {p}")));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::ParameterDomain(format!("q must be > 1, got {q}")));
    }
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::ParameterDomain(format!("w must lie in (0, 1), got {w}")));
    }
    Ok(())
}

/// Settling-time bound `1/(c1 w (1-p)) + 1/(c2 w (q-1))` for
/// `V' <= -c1 V^p - c2 V^q + varsigma`.
pub fn fixed_time_bound(c1: f64, c2: f64, p: f64, q: f64, w: f64) -> Result<f64> {
    check_lemma1(c1, c2, p, q, w)?;
    Ok(1.0 / (c1 * w * (1.0 - p)) + 1.0 / (c2 * w * (q - 1.0)))
}

/// Residual level `min{(s/((1-w)c1))^(1/p), (s/((1-w)c2))^(1/q)}`.
pub fn residual_set_bound(c1: f64, c2: f64, p: f64, q: f64, w: f64, varsigma: f64) -> Result<f64> {
    check_lemma1(c1, c2, p, q, w)?;
    if !(varsigma > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "varsigma must be positive, got {varsigma}"
        )));
    }
    let a = (varsigma / ((1.0 - w) * c1)).powf(1.0 / p);
    let b = (varsigma / ((1.0 - w) * c2)).powf(1.0 / q);
    Ok(a.min(b))
}
