//! Constitutive law S, its derivative form DS, the nonlinearity F and the
//! convex potential whose gradient is S.
//!
//! All operator families have Uhlenbeck structure S(xi) = nu(|xi|) xi for a
//! C^1 radial profile nu, which makes S the gradient of a radial convex
//! potential and turns the implicit time step into a convex minimization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Registry of admissible radial profiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorFamily {
    /// nu(s) = (1 + s)^(p-2), the non-degenerate p-Laplacian.
    PLaplacian,
    /// nu(s) = 1 + 1/(1+s): bounded profile with quadratic growth.
    /// Ellipticity holds against the p = 2 weight with lambda >= 1, Lambda <= 2.
    UhlenbeckBounded,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Spatial dimension of the box G = (0,1)^d.
    pub d: usize,
    /// Number of components of u.
    pub target_dim: usize,
    /// Growth exponent, p > 1.
    pub p: f64,
    pub family: OperatorFamily,
    /// Regularization weight in front of the added Laplacian.
    pub epsilon: f64,
    /// Final time T > 0.
    pub t_final: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidModel("d must be >= 1".into()));
        }
        if self.target_dim < 1 {
            return Err(Error::InvalidModel("target dimension must be >= 1".into()));
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(Error::InvalidModel(format!("p must lie in (1, inf), got {}", self.p)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidModel(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.epsilon == 0.0 && self.p < 2.0 {
            return Err(Error::InvalidModel(
                "the subquadratic regime p < 2 requires epsilon > 0".into(),
            ));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::InvalidModel(format!("T must be > 0, got {}", self.t_final)));
        }
        Ok(())
    }
}

/// Radial profile nu(s).
pub fn nu(family: OperatorFamily, p: f64, s: f64) -> f64 {
    match family {
        OperatorFamily::PLaplacian => (1.0 + s).powf(p - 2.0),
        OperatorFamily::UhlenbeckBounded => 1.0 + 1.0 / (1.0 + s),
    }
}

/// nu'(s).
pub fn nu_prime(family: OperatorFamily, p: f64, s: f64) -> f64 {
    match family {
        OperatorFamily::PLaplacian => (p - 2.0) * (1.0 + s).powf(p - 3.0),
        OperatorFamily::UhlenbeckBounded => {
            let t = 1.0 + s;
            -1.0 / (t * t)
        }
    }
}

/// Radial potential phi(s) = int_0^s nu(theta) theta dtheta, so that the
/// matrix potential phi(|xi|) has gradient S(xi).
pub fn potential_radial(family: OperatorFamily, p: f64, s: f64) -> f64 {
    match family {
        OperatorFamily::PLaplacian => power_potential(s, p - 2.0),
        OperatorFamily::UhlenbeckBounded => 0.5 * s * s + s - s.ln_1p(),
    }
}

/// int_0^s (1+theta)^alpha theta dtheta in closed form; valid whenever
/// alpha + 1 and alpha + 2 are nonzero (here alpha = p - 2 > -1).
pub fn power_potential(s: f64, alpha: f64) -> f64 {
    let t = 1.0 + s;
    (t.powf(alpha + 2.0) - 1.0) / (alpha + 2.0) - (t.powf(alpha + 1.0) - 1.0) / (alpha + 1.0)
}

#[inline]
fn frob_norm(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(xi: &[f64], context: &'static str) -> Result<()> {
    if xi.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

/// S(xi) = nu(|xi|) xi.
pub fn eval_s(xi: &[f64], model: &ModelSpec) -> Result<Vec<f64>> {
    check_finite(xi, "eval_s input")?;
    let nv = nu(model.family, model.p, frob_norm(xi));
    Ok(xi.iter().map(|v| nv * v).collect())
}

/// F(xi) = (1 + |xi|)^((p-2)/2) xi.
pub fn eval_f(xi: &[f64], p: f64) -> Result<Vec<f64>> {
    check_finite(xi, "eval_f input")?;
    let w = (1.0 + frob_norm(xi)).powf(0.5 * (p - 2.0));
    Ok(xi.iter().map(|v| w * v).collect())
}

#[inline]
pub(crate) fn f_weight(p: f64, s: f64) -> f64 {
    (1.0 + s).powf(0.5 * (p - 2.0))
}

/// Quadratic form DS(xi)(zeta, zeta) of the analytic derivative of S.
/// The singular second term is defined as 0 at xi = 0 (its limit).
pub fn eval_ds(xi: &[f64], zeta: &[f64], model: &ModelSpec) -> Result<f64> {
    check_finite(xi, "eval_ds input xi")?;
    check_finite(zeta, "eval_ds input zeta")?;
    Ok(ds_quadratic_form(xi, zeta, model))
}

#[inline]
pub(crate) fn ds_quadratic_form(xi: &[f64], zeta: &[f64], model: &ModelSpec) -> f64 {
    let s = frob_norm(xi);
    let z2 = dot(zeta, zeta);
    let mut val = nu(model.family, model.p, s) * z2;
    if s > 0.0 {
        let xz = dot(xi, zeta);
        val += nu_prime(model.family, model.p, s) * xz * xz / s;
    }
    val
}

/// DS(xi) applied to eta (matrix-valued directional derivative of S).
#[inline]
pub(crate) fn ds_apply(xi: &[f64], eta: &[f64], model: &ModelSpec, out: &mut [f64]) {
    let s = frob_norm(xi);
    let nv = nu(model.family, model.p, s);
    if s > 0.0 {
        let coef = nu_prime(model.family, model.p, s) * dot(xi, eta) / s;
        for ((o, &e), &x) in out.iter_mut().zip(eta).zip(xi) {
            *o = nv * e + coef * x;
        }
    } else {
        for (o, &e) in out.iter_mut().zip(eta) {
            *o = nv * e;
        }
    }
}

/// Convex potential phi(xi) with grad phi = S.
pub fn eval_potential(xi: &[f64], model: &ModelSpec) -> Result<f64> {
    check_finite(xi, "eval_potential input")?;
    Ok(potential_radial(model.family, model.p, frob_norm(xi)))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EllipticityEstimate {
    pub lambda_hat: f64,
    pub lambda_hat_upper: f64,
}

impl EllipticityEstimate {
    pub fn lambda(&self) -> f64 {
        self.lambda_hat
    }
    pub fn big_lambda(&self) -> f64 {
        self.lambda_hat_upper
    }
}

/// Sample random (xi, zeta) pairs over a logarithmic range of |xi| and
/// return min/max of DS(xi)(zeta, zeta) / ((1+|xi|)^(p-2) |zeta|^2).
/// A positive minimum certifies the ellipticity condition.
pub fn check_ellipticity(
    model: &ModelSpec,
    n_samples: usize,
    rng_seed: u64,
) -> Result<EllipticityEstimate> {
    if n_samples < 1 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let m = model.d * model.target_dim;
    let mut stream = Stream::new(rng_seed, 0x0e11);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut xi = vec![0.0; m];
    let mut zeta = vec![0.0; m];
    for sample in 0..n_samples {
        let radius = if sample == 0 { 0.0 } else { stream.log_uniform(1e-6, 1e6) };
        for v in xi.iter_mut() {
            *v = stream.normal();
        }
        let norm = frob_norm(&xi).max(f64::MIN_POSITIVE);
        for v in xi.iter_mut() {
            *v *= radius / norm;
        }
        for v in zeta.iter_mut() {
            *v = stream.normal();
        }
        // every few samples align zeta with xi to probe the radial direction
        if sample % 4 == 1 && radius > 0.0 {
            zeta.copy_from_slice(&xi);
        }
        let z2 = dot(&zeta, &zeta);
        if z2 == 0.0 {
            continue;
        }
        let weight = (1.0 + frob_norm(&xi)).powf(model.p - 2.0);
        let ratio = ds_quadratic_form(&xi, &zeta, model) / (weight * z2);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    if !(lo > 0.0) {
        return Err(Error::EllipticityViolated { lambda_hat: lo });
    }
    Ok(EllipticityEstimate { lambda_hat: lo, lambda_hat_upper: hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(p: f64) -> ModelSpec {
        ModelSpec {
            d: 2,
            target_dim: 2,
            p,
            family: OperatorFamily::PLaplacian,
            epsilon: if p < 2.0 { 1e-3 } else { 0.0 },
            t_final: 1.0,
        }
    }

    #[test]
    fn validation_rules() {
        assert!(model(1.5).validate().is_ok());
        assert!(model(0.9).validate().is_err());
        let mut m = model(1.5);
        m.epsilon = 0.0;
        assert!(m.validate().is_err());
        let mut m = model(3.0);
        m.epsilon = 0.0;
        assert!(m.validate().is_ok());
        m.t_final = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn s_closed_forms() {
        // p = 2: identity
        let xi = [0.3, -1.2, 0.5, 2.0];
        let s = eval_s(&xi, &model(2.0)).unwrap();
        for (a, b) in s.iter().zip(&xi) {
            assert_relative_eq!(a, b);
        }
        // S(0) = 0
        let z = eval_s(&[0.0; 4], &model(3.0)).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        // p = 3, |xi| = 1: factor 2
        let xi = [1.0, 0.0, 0.0, 0.0];
        let s = eval_s(&xi, &model(3.0)).unwrap();
        assert_relative_eq!(s[0], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn f_closed_forms() {
        let xi = [0.3, -1.2, 0.5, 2.0];
        let f = eval_f(&xi, 2.0).unwrap();
        for (a, b) in f.iter().zip(&xi) {
            assert_relative_eq!(a, b);
        }
        assert!(eval_f(&[0.0; 4], 4.0).unwrap().iter().all(|&v| v == 0.0));
        let xi = [0.0, 1.0, 0.0, 0.0];
        let f = eval_f(&xi, 4.0).unwrap();
        assert_relative_eq!(f[1], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(eval_s(&[f64::NAN, 0.0], &model(2.0)).is_err());
        assert!(eval_f(&[f64::INFINITY], 2.0).is_err());
        assert!(eval_ds(&[0.0], &[f64::NAN], &model(2.0)).is_err());
        assert!(eval_potential(&[f64::NAN], &model(2.0)).is_err());
    }

    #[test]
    fn ds_closed_forms() {
        let m2 = model(2.0);
        let xi = [0.7, -0.2, 1.1, 0.4];
        let zeta = [0.5, 0.5, -1.0, 2.0];
        let z2: f64 = zeta.iter().map(|v| v * v).sum();
        assert_relative_eq!(eval_ds(&xi, &zeta, &m2).unwrap(), z2, max_relative = 1e-14);
        // xi = 0: second term vanishes for any p
        let m3 = model(3.0);
        assert_relative_eq!(eval_ds(&[0.0; 4], &zeta, &m3).unwrap(), z2, max_relative = 1e-14);
        // p = 3, |xi| = 1, zeta = xi: nu(1)*1 + nu'(1)*1 = 2 + 1 = 3,
        // cross-checked below against central differences of eval_s
        let xi = [1.0, 0.0, 0.0, 0.0];
        let analytic = eval_ds(&xi, &xi, &m3).unwrap();
        assert_relative_eq!(analytic, 3.0, max_relative = 1e-14);
        let h = 1e-6;
        let sp = eval_s(&[1.0 + h, 0.0, 0.0, 0.0], &m3).unwrap();
        let sm = eval_s(&[1.0 - h, 0.0, 0.0, 0.0], &m3).unwrap();
        let fd = (sp[0] - sm[0]) / (2.0 * h);
        assert_relative_eq!(analytic, fd, max_relative = 1e-8);
    }

    #[test]
    fn potential_closed_forms() {
        let m2 = model(2.0);
        let xi = [0.3, -1.2, 0.5, 2.0];
        let s2: f64 = xi.iter().map(|v| v * v).sum();
        assert_relative_eq!(eval_potential(&xi, &m2).unwrap(), 0.5 * s2, max_relative = 1e-14);
        assert_eq!(eval_potential(&[0.0; 4], &model(3.0)).unwrap(), 0.0);
        // p = 3, |xi| = 1: int_0^1 (1+s) s ds = 5/6
        let xi = [0.0, 0.0, 1.0, 0.0];
        assert_relative_eq!(
            eval_potential(&xi, &model(3.0)).unwrap(),
            5.0 / 6.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn ellipticity_p2_is_exactly_one() {
        let est = check_ellipticity(&model(2.0), 2000, 9).unwrap();
        assert_relative_eq!(est.lambda_hat, 1.0, max_relative = 1e-12);
        assert_relative_eq!(est.lambda_hat_upper, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn ellipticity_bounds_p3_p15() {
        let est = check_ellipticity(&model(3.0), 20_000, 10).unwrap();
        assert!(est.lambda_hat >= 1.0 - 1e-9);
        assert!(est.lambda_hat_upper <= 2.0 + 1e-9);
        let est = check_ellipticity(&model(1.5), 20_000, 11).unwrap();
        assert!(est.lambda_hat >= 0.5 - 1e-9);
        assert!(est.lambda_hat_upper <= 1.5 + 1e-9);
    }

    #[test]
    fn bounded_profile_admissible() {
        let mut m = model(2.0);
        m.family = OperatorFamily::UhlenbeckBounded;
        let est = check_ellipticity(&m, 20_000, 12).unwrap();
        assert!(est.lambda_hat >= 1.0 - 1e-9);
        assert!(est.lambda_hat_upper <= 2.0 + 1e-9);
    }
}
