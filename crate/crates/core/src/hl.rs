//! The power potential h(s) = int_0^s (1+theta)^alpha theta dtheta, the
//! truncated family g_L / h_L built from a cubic smoothstep cutoff, and a
//! numerical certification of the lemma-style properties of (h_L):
//! (a) agreement with h on [0, 3L/2] and pointwise convergence in L,
//! (b) domination h_L <= h, g_L <= g with bounded h_L'',
//! (c) two-sided comparison of h_L'' with h_L'(s)/s, uniformly in L,
//! (d) the mixed bound (h_L'(s)/s) t^2 <= C (1 + h_L(s) + h_L(t) t^2).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    /// Plateau to 3L/2, cubic smoothstep down to 0 at 2L.
    Smoothstep,
    /// Negative control: plateau ends at L instead of 3L/2, so h_L deviates
    /// from h already on (L, 3L/2).
    BrokenPlateau,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HlFamily {
    pub alpha: f64,
    pub l: f64,
    pub quad_tol: f64,
    pub psi: PsiKind,
}

impl HlFamily {
    pub fn new(alpha: f64, l: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", alpha)));
        }
        if !(l >= 1.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("L must be >= 1, got {}", l)));
        }
        Ok(HlFamily { alpha, l, quad_tol: 1e-12, psi: PsiKind::Smoothstep })
    }

    pub fn broken(alpha: f64, l: f64) -> Result<Self> {
        Ok(HlFamily { psi: PsiKind::BrokenPlateau, ..Self::new(alpha, l)? })
    }

    fn plateau_end(&self) -> f64 {
        match self.psi {
            PsiKind::Smoothstep => 1.5 * self.l,
            PsiKind::BrokenPlateau => self.l,
        }
    }

    fn support_end(&self) -> f64 {
        2.0 * self.l
    }
}

/// h(s) = int_0^s (1+theta)^alpha theta dtheta, closed form.
pub fn eval_h(s: f64, alpha: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("s must be >= 0, got {}", s)));
    }
    let w = 1.0 + s;
    Ok((w.powf(alpha + 2.0) - 1.0) / (alpha + 2.0) - (w.powf(alpha + 1.0) - 1.0) / (alpha + 1.0))
}

#[inline]
pub fn eval_g(s: f64, alpha: f64) -> f64 {
    (1.0 + s).powf(alpha)
}

#[inline]
fn g_prime(s: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        0.0
    } else {
        alpha * (1.0 + s).powf(alpha - 1.0)
    }
}

/// Cutoff value and derivative with the standard plateau [0, 3L/2].
pub fn eval_psi(theta: f64, l: f64) -> (f64, f64) {
    psi_on(theta, 1.5 * l, 2.0 * l)
}

fn psi_on(theta: f64, a: f64, b: f64) -> (f64, f64) {
    if theta <= a {
        (1.0, 0.0)
    } else if theta >= b {
        (0.0, 0.0)
    } else {
        let r = (theta - a) / (b - a);
        (1.0 - r * r * (3.0 - 2.0 * r), -6.0 * r * (1.0 - r) / (b - a))
    }
}

impl HlFamily {
    fn psi_value(&self, theta: f64) -> f64 {
        psi_on(theta, self.plateau_end(), self.support_end()).0
    }

    /// int_a^tau psi g' dtheta for tau in [a, b], in closed form: psi is a
    /// cubic in w = 1 + theta, so each term integrates to a power of w.
    fn transition_integral(&self, tau: f64) -> f64 {
        let alpha = self.alpha;
        if alpha == 0.0 {
            return 0.0;
        }
        let a = self.plateau_end();
        let b = self.support_end();
        let delta = b - a;
        let aa = 1.0 + a; // plateau end in the shifted variable
        let (d2, d3) = (delta * delta, delta * delta * delta);
        let c = [
            1.0 - 3.0 * aa * aa / d2 - 2.0 * aa * aa * aa / d3,
            6.0 * aa / d2 + 6.0 * aa * aa / d3,
            -3.0 / d2 - 6.0 * aa / d3,
            2.0 / d3,
        ];
        let w = 1.0 + tau.min(b);
        let mut acc = 0.0;
        for (j, &cj) in c.iter().enumerate() {
            let e = alpha + j as f64;
            acc += cj * (w.powf(e) - aa.powf(e)) / e;
        }
        alpha * acc
    }

    /// g_L(tau) = g(0) + int_0^tau psi g'.
    pub fn g_l(&self, tau: f64) -> Result<f64> {
        if !(tau >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {}", tau)));
        }
        let a = self.plateau_end();
        if tau <= a {
            Ok(eval_g(tau, self.alpha))
        } else {
            Ok(eval_g(a, self.alpha) + self.transition_integral(tau))
        }
    }

    /// h_L(s) = int_0^s tau g_L(tau) dtau; closed form on [0, plateau], the
    /// transition window by adaptive quadrature, linear-weight tail beyond 2L.
    pub fn eval_h_l(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::InvalidArgument(format!("s must be >= 0, got {}", s)));
        }
        let a = self.plateau_end();
        if s <= a {
            return eval_h(s, self.alpha);
        }
        let b = self.support_end();
        let upper = s.min(b);
        let f = |tau: f64| tau * self.g_l(tau).expect("tau >= 0 inside panel");
        let mut acc = eval_h(a, self.alpha)? + adaptive_simpson(&f, a, upper, self.quad_tol)?;
        if s > b {
            acc += self.g_l(b)? * 0.5 * (s * s - b * b);
        }
        Ok(acc)
    }

    pub fn h_l_prime(&self, s: f64) -> Result<f64> {
        Ok(s * self.g_l(s)?)
    }

    pub fn h_l_second(&self, s: f64) -> Result<f64> {
        Ok(self.g_l(s)? + s * self.psi_value(s) * g_prime(s, self.alpha))
    }
}

/// Adaptive Simpson with a per-panel error estimate; errors out if the
/// subdivision depth is exhausted before reaching the tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(b >= a && tol > 0.0) {
        return Err(Error::InvalidArgument("bad quadrature interval".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let err = left + right - whole;
        if err.abs() <= 15.0 * tol {
            return Some(left + right + err / 15.0);
        }
        if depth == 0 {
            return None;
        }
        let l = recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)?;
        let r = recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)?;
        Some(l + r)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    // tolerance is relative to the integral's own scale
    let scaled = tol * whole.abs().max(1.0);
    recurse(f, a, fa, b, fb, m, fm, whole, scaled, 48)
        .ok_or(Error::QuadratureFailed { a, b, tol })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ItemReport {
    pub pass: bool,
    /// Measured constant for the item (max observed ratio).
    pub constant: f64,
    pub worst_s: f64,
    pub worst_t: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaReport {
    pub alpha: f64,
    pub l: f64,
    pub pass: bool,
    pub item_a: ItemReport,
    pub item_b: ItemReport,
    pub item_c: ItemReport,
    pub item_d: ItemReport,
}

const SLACK: f64 = 1e-9;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Check all four lemma items on a dense log grid over (0, 4L] plus random
/// (s, t) pairs. The per-item constants are reported, not asserted; only the
/// inequalities carrying explicit directions are pass/fail.
pub fn certify_lemma(fam: &HlFamily, n_grid: usize, seed: u64) -> Result<LemmaReport> {
    if n_grid < 16 {
        return Err(Error::InvalidArgument("n_grid must be >= 16".into()));
    }
    let grid = log_grid(1e-3, 4.0 * fam.l, n_grid);
    let alpha = fam.alpha;

    // (a) agreement with h on [0, 3L/2] — checked against the *nominal*
    // plateau so a broken cutoff fails here — then pointwise convergence
    // through the L-doubling sweep.
    let mut a_pass = true;
    let mut a_worst = (0.0f64, 0.0f64); // (deviation, s)
    for &s in grid.iter().filter(|&&s| s <= 1.5 * fam.l) {
        let dev = (fam.eval_h_l(s)? - eval_h(s, alpha)?).abs()
            / eval_h(s, alpha)?.max(1.0);
        if dev > a_worst.0 {
            a_worst = (dev, s);
        }
        if dev > SLACK.max(10.0 * fam.quad_tol) {
            a_pass = false;
        }
    }
    for &s in &[2.0 * fam.l, 3.0 * fam.l] {
        let h = eval_h(s, alpha)?;
        let sweep: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&k| {
                HlFamily { l: k * fam.l, ..*fam }.eval_h_l(s)
            })
            .collect::<Result<_>>()?;
        let scale = h.max(1.0);
        for w in sweep.windows(2) {
            if w[1] < w[0] - SLACK * scale {
                a_pass = false;
            }
        }
        let gap_first = h - sweep[0];
        let gap_last = h - sweep[3];
        if gap_last > gap_first + SLACK * scale {
            a_pass = false;
        }
    }

    // (b) h_L <= h, g_L <= g, and sup |h_L''| finite.
    let mut b_pass = true;
    let mut b_sup = 0.0f64;
    let mut b_worst = 0.0f64;
    for &s in &grid {
        let h = eval_h(s, alpha)?;
        let hl = fam.eval_h_l(s)?;
        if hl > h + SLACK * h.max(1.0) {
            b_pass = false;
            b_worst = s;
        }
        if fam.g_l(s)? > eval_g(s, alpha) * (1.0 + SLACK) {
            b_pass = false;
            b_worst = s;
        }
        let h2 = fam.h_l_second(s)?;
        if !h2.is_finite() {
            b_pass = false;
            b_worst = s;
        }
        b_sup = b_sup.max(h2.abs());
    }

    // (c) h_L'(s)/s <= h_L''(s) <= C(alpha+1) h_L'(s)/s and h_L'(s) s <= C h_L(s).
    let mut c_pass = true;
    let mut c_const = 0.0f64;
    let mut c_worst = 0.0f64;
    let mut c_hs = 0.0f64;
    for &s in &grid {
        let hp_over_s = fam.g_l(s)?; // h_L'(s)/s exactly
        let h2 = fam.h_l_second(s)?;
        if hp_over_s > h2 * (1.0 + SLACK) + SLACK {
            c_pass = false;
            c_worst = s;
        }
        let ratio = h2 / hp_over_s;
        if ratio > c_const {
            c_const = ratio;
            if c_pass {
                c_worst = s;
            }
        }
        let hl = fam.eval_h_l(s)?;
        if hl > 0.0 {
            c_hs = c_hs.max(s * fam.h_l_prime(s)? / hl);
        }
    }
    if !(c_const.is_finite() && c_hs.is_finite()) {
        c_pass = false;
    }

    // (d) (h_L'(s)/s) t^2 <= C (1 + h_L(s) + h_L(t) t^2) over sampled pairs.
    let mut d_const = 0.0f64;
    let mut d_worst = (0.0f64, 0.0f64);
    let mut stream = Stream::new(seed, 0x41);
    let n_pairs = (n_grid / 4).max(256);
    for _ in 0..n_pairs {
        let s = stream.log_uniform(1e-3, 4.0 * fam.l);
        let t = stream.log_uniform(1e-3, 4.0 * fam.l);
        let lhs = fam.g_l(s)? * t * t;
        let rhs = 1.0 + fam.eval_h_l(s)? + fam.eval_h_l(t)? * t * t;
        let ratio = lhs / rhs;
        if ratio > d_const {
            d_const = ratio;
            d_worst = (s, t);
        }
    }
    let d_pass = d_const.is_finite();

    let item_a = ItemReport { pass: a_pass, constant: a_worst.0, worst_s: a_worst.1, worst_t: None };
    let item_b = ItemReport { pass: b_pass, constant: b_sup, worst_s: b_worst, worst_t: None };
    let item_c = ItemReport { pass: c_pass, constant: c_const, worst_s: c_worst, worst_t: None };
    let item_d =
        ItemReport { pass: d_pass, constant: d_const, worst_s: d_worst.0, worst_t: Some(d_worst.1) };
    let pass = a_pass && b_pass && c_pass && d_pass;
    Ok(LemmaReport { alpha: fam.alpha, l: fam.l, pass, item_a, item_b, item_c, item_d })
}

/// Max/min ratio of the item-(c) measured constant across an L sweep;
/// the uniformity-in-L evidence.
pub fn item_c_stability(alpha: f64, ls: &[f64], n_grid: usize, seed: u64) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &l in ls {
        let rep = certify_lemma(&HlFamily::new(alpha, l)?, n_grid, seed)?;
        if !rep.pass {
            return Err(Error::InvalidArgument(format!(
                "certification failed at alpha = {}, L = {}",
                alpha, l
            )));
        }
        lo = lo.min(rep.item_c.constant);
        hi = hi.max(rep.item_c.constant);
    }
    Ok(hi / lo)
}
