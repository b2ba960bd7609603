use crate::error::{Error, Result};

/// Stage buffers for [`rk4_step`], sized once per state dimension.
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        Rk4Workspace {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }

    /// Derivative from the first stage of the most recent step.
    pub fn first_stage(&self) -> &[f64] {
        &self.k[0]
    }
}

fn check(k: &[f64], t: f64) -> Result<()> {
    match k.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteDerivative { index, t }),
        None => Ok(()),
    }
}

/// Classical fourth-order Runge-Kutta step, in place.
pub fn rk4_step<F>(x: &mut [f64], t: f64, dt: f64, ws: &mut Rk4Workspace, mut rhs: F) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    if ws.tmp.len() != n {
        return Err(Error::DimensionMismatch {
            expected: ws.tmp.len(),
            got: n,
        });
    }
    let [k1, k2, k3, k4] = &mut ws.k;
    let tmp = &mut ws.tmp;
    let half = 0.5 * dt;

    rhs(t, x, k1)?;
    check(k1, t)?;
    for i in 0..n {
        tmp[i] = x[i] + half * k1[i];
    }
    rhs(t + half, tmp, k2)?;
    check(k2, t + half)?;
    for i in 0..n {
        tmp[i] = x[i] + half * k2[i];
    }
    rhs(t + half, tmp, k3)?;
    check(k3, t + half)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    rhs(t + dt, tmp, k4)?;
    check(k4, t + dt)?;
    let sixth = dt / 6.0;
    for i in 0..n {
        x[i] += sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        dx[0] = -x[0];
        Ok(())
    }

    fn endpoint_error(dt: f64) -> f64 {
        let mut ws = Rk4Workspace::new(1);
        let mut x = [1.0];
        let n = (1.0 / dt).round() as usize;
        for k in 0..n {
            rk4_step(&mut x, k as f64 * dt, dt, &mut ws, decay).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let mut ws = Rk4Workspace::new(3);
        let mut x = [1.0, -2.0, 3.5];
        rk4_step(&mut x, 0.0, 0.1, &mut ws, |_, _, dx| {
            dx.fill(0.0);
            Ok(())
        })
        .unwrap();
        assert_eq!(x, [1.0, -2.0, 3.5]);
    }

    #[test]
    fn single_decay_step() {
        let mut ws = Rk4Workspace::new(1);
        let mut x = [1.0];
        rk4_step(&mut x, 0.0, 0.1, &mut ws, decay).unwrap();
        // 1 - h + h^2/2 - h^3/6 + h^4/24
        assert!((x[0] - 0.904_837_5).abs() < 1e-15);
        // truncation error is the series tail h^5/120 - h^6/720 + ...
        let err = x[0] - (-0.1f64).exp();
        let tail = 0.1f64.powi(5) / 120.0 - 0.1f64.powi(6) / 720.0;
        assert!((err - tail).abs() < 1e-10, "{err}");
    }

    #[test]
    fn fourth_order_convergence() {
        let ratio = endpoint_error(0.1) / endpoint_error(0.05);
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn non_finite_component_reported() {
        let mut ws = Rk4Workspace::new(2);
        let mut x = [1.0, 0.0];
        let err = rk4_step(&mut x, 0.0, 0.1, &mut ws, |_, _, dx| {
            dx[0] = 0.0;
            dx[1] = f64::NAN;
            Ok(())
        })
        .unwrap_err();
        assert_eq!(err, Error::NonFiniteDerivative { index: 1, t: 0.0 });
    }
}
