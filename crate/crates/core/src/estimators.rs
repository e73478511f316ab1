//! Online per-path regularity functionals, Monte Carlo aggregation with
//! t-distribution confidence intervals, and the Moser exponent ladder.
//!
//! All integrals in time use the right-endpoint rule tau * sum over steps
//! n >= 1; suprema run over discrete steps including t = 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::grid::{
    difference_quotient_cells, norm_lq_cells, norm_lq_masked, norm_lq_nodal, CellGradient,
    NodalField, SubdomainMask, WeightKind,
};
use crate::model::{self, ModelSpec};

/// Per-path functional values keyed by functional id.
pub type FunctionalValues = BTreeMap<String, f64>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mask: SubdomainMask,
    pub energy_triple: bool,
    pub natural_regularity: bool,
    pub higher_integrability_q: Vec<f64>,
    pub higher_moments_q: Vec<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            mask: SubdomainMask { margin: 0.125, weight_kind: WeightKind::SharpIndicator },
            energy_triple: true,
            natural_regularity: true,
            higher_integrability_q: Vec::new(),
            higher_moments_q: Vec::new(),
        }
    }
}

impl EstimatorConfig {
    /// No functionals at all (pure evolution runs).
    pub fn none() -> Self {
        EstimatorConfig {
            mask: SubdomainMask::full(),
            energy_triple: false,
            natural_regularity: false,
            higher_integrability_q: Vec::new(),
            higher_moments_q: Vec::new(),
        }
    }
}

fn format_q(q: f64) -> String {
    if q == q.round() {
        format!("{:.0}", q)
    } else {
        format!("{}", q)
    }
}

/// Streaming accumulator fed one state per accepted step.
pub struct EstimatorState {
    cfg: EstimatorConfig,
    p: f64,
    epsilon: f64,
    sup_u2: f64,
    gradp_sum: f64,
    grad2_sum: f64,
    sup_grad2: f64,
    grad_f2_sum: f64,
    hi_sums: Vec<f64>,
    sup_uq: Vec<f64>,
}

impl EstimatorState {
    pub fn new(cfg: EstimatorConfig, model: &ModelSpec) -> Result<Self> {
        for &q in cfg.higher_integrability_q.iter().chain(&cfg.higher_moments_q) {
            if !(q >= 1.0 && q.is_finite()) {
                return Err(Error::InvalidArgument(format!("q must be >= 1, got {}", q)));
            }
        }
        if (cfg.natural_regularity || !cfg.higher_integrability_q.is_empty())
            && cfg.mask.margin <= 0.0
        {
            return Err(Error::InvalidArgument(
                "interior functionals need a mask with margin > 0".into(),
            ));
        }
        let nq = cfg.higher_integrability_q.len();
        let nm = cfg.higher_moments_q.len();
        Ok(EstimatorState {
            cfg,
            p: model.p,
            epsilon: model.epsilon,
            sup_u2: 0.0,
            gradp_sum: 0.0,
            grad2_sum: 0.0,
            sup_grad2: 0.0,
            grad_f2_sum: 0.0,
            hi_sums: vec![0.0; nq],
            sup_uq: vec![0.0; nm],
        })
    }

    pub fn update(&mut self, step: usize, u: &NodalField, gu: &CellGradient) -> Result<()> {
        if !u.is_finite() {
            return Err(Error::NonFinite { context: "estimator update" });
        }
        let full = SubdomainMask::full();
        if self.cfg.energy_triple {
            self.sup_u2 = self.sup_u2.max(norm_lq_nodal(u, 2.0, &full)?);
            if step > 0 {
                self.gradp_sum += norm_lq_cells(gu, self.p, &full)?;
                self.grad2_sum += norm_lq_cells(gu, 2.0, &full)?;
            }
        }
        if self.cfg.natural_regularity {
            self.sup_grad2 = self.sup_grad2.max(norm_lq_cells(gu, 2.0, &self.cfg.mask)?);
            if step > 0 {
                let f_cells = eval_f_cells(gu, self.p);
                for gamma in 0..gu.grid.d {
                    let dq = difference_quotient_cells(&f_cells, gamma, 1)?;
                    self.grad_f2_sum += norm_lq_masked(&dq, 2.0, &self.cfg.mask)?;
                }
            }
        }
        if step > 0 {
            for (acc, &q) in self.hi_sums.iter_mut().zip(&self.cfg.higher_integrability_q) {
                *acc += norm_lq_cells(gu, q, &self.cfg.mask)?;
            }
        }
        for (acc, &q) in self.sup_uq.iter_mut().zip(&self.cfg.higher_moments_q) {
            *acc = acc.max(norm_lq_nodal(u, q, &full)?);
        }
        Ok(())
    }

    pub fn finalize(self, tau: f64, _n_steps: usize) -> FunctionalValues {
        let mut out = FunctionalValues::new();
        if self.cfg.energy_triple {
            out.insert("sup_u2".into(), self.sup_u2);
            out.insert("int_gradp".into(), tau * self.gradp_sum);
            out.insert("eps_int_grad2".into(), self.epsilon * tau * self.grad2_sum);
        }
        if self.cfg.natural_regularity {
            out.insert("sup_grad2".into(), self.sup_grad2);
            out.insert("int_gradF2".into(), tau * self.grad_f2_sum);
        }
        for (acc, &q) in self.hi_sums.iter().zip(&self.cfg.higher_integrability_q) {
            out.insert(format!("higher_integrability_q{}", format_q(q)), tau * acc);
        }
        if !self.cfg.higher_moments_q.is_empty() {
            let energy = self.sup_u2 + tau * self.gradp_sum;
            for (acc, &q) in self.sup_uq.iter().zip(&self.cfg.higher_moments_q) {
                out.insert(format!("higher_moment_energy_q{}", format_q(q)), energy.powf(q));
                out.insert(format!("sup_uq_q{}", format_q(q)), *acc);
            }
        }
        out
    }
}

/// F(grad u) = (1 + |grad u|)^{(p-2)/2} grad u per cell.
pub fn eval_f_cells(gu: &CellGradient, p: f64) -> CellGradient {
    let epc = gu.entries_per_cell();
    let mut out = CellGradient::zeros(gu.grid, gu.comps);
    for cell in 0..gu.grid.num_cells() {
        let xi = &gu.values[cell * epc..(cell + 1) * epc];
        let s = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w = model::f_weight(p, s);
        for (o, &v) in out.values[cell * epc..(cell + 1) * epc].iter_mut().zip(xi) {
            *o = w * v;
        }
    }
    out
}

/// Offline re-evaluation of the same functionals from a stored trajectory;
/// the online/offline agreement oracle.
pub fn functionals_from_states(
    states: &[NodalField],
    model: &ModelSpec,
    cfg: &EstimatorConfig,
    tau: f64,
) -> Result<FunctionalValues> {
    let mut est = EstimatorState::new(cfg.clone(), model)?;
    for (step, u) in states.iter().enumerate() {
        est.update(step, u, &crate::grid::grad(u))?;
    }
    Ok(est.finalize(tau, states.len().saturating_sub(1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub var: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_paths: usize,
    pub stats: BTreeMap<String, Stats>,
}

/// Sorted summation: bit-identical under any permutation of the paths.
fn stable_sum(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Monte Carlo aggregation: mean, sample variance, standard error, and the
/// 95% t-interval with n - 1 degrees of freedom.
pub fn aggregate(paths: &[FunctionalValues]) -> Result<AggregateReport> {
    let first = paths.first().ok_or(Error::NoPaths)?;
    let keys: Vec<&String> = first.keys().collect();
    for r in paths {
        if r.len() != keys.len() || !keys.iter().all(|k| r.contains_key(*k)) {
            return Err(Error::MismatchedKeys(format!(
                "expected {} keys, found {}",
                keys.len(),
                r.len()
            )));
        }
    }
    let n = paths.len();
    let mut stats = BTreeMap::new();
    for key in keys {
        let mut vals: Vec<f64> = paths.iter().map(|r| r[key]).collect();
        let mean = stable_sum(&mut vals) / n as f64;
        let s = if n >= 2 {
            let mut sq: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
            let var = stable_sum(&mut sq) / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .expect("n >= 2 gives valid dof")
                .inverse_cdf(0.975);
            Stats {
                mean,
                var: Some(var),
                se: Some(se),
                ci_lo: Some(mean - t * se),
                ci_hi: Some(mean + t * se),
            }
        } else {
            Stats { mean, var: None, se: None, ci_lo: None, ci_hi: None }
        };
        stats.insert(key.clone(), s);
    }
    Ok(AggregateReport { n_paths: n, stats })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MoserLadder {
    pub p: f64,
    pub d: usize,
    pub alphas: Vec<f64>,
    pub qs: Vec<f64>,
}

pub fn omega(p: f64, d: usize, alpha: f64) -> f64 {
    (p + alpha) * (1.0 + (2.0 / d as f64) * (alpha + 2.0) / (alpha + p))
}

/// Exponent iteration alpha_0 = 0, alpha_{k+1} = omega(alpha_k) - p.
pub fn moser_ladder(p: f64, d: usize, k_max: usize) -> Result<MoserLadder> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    if !(p > 2.0 - 4.0 / d as f64) {
        return Err(Error::LadderHypothesis { p, d });
    }
    let mut alphas = vec![0.0];
    for _ in 0..k_max {
        let a = *alphas.last().expect("nonempty");
        alphas.push(omega(p, d, a) - p);
    }
    let qs = alphas.iter().map(|a| p + a).collect();
    Ok(MoserLadder { p, d, alphas, qs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grad, Grid};
    use crate::model::OperatorFamily;
    use crate::rng::Stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(p: f64) -> ModelSpec {
        ModelSpec {
            d: 2,
            target_dim: 1,
            p,
            family: OperatorFamily::PLaplacian,
            epsilon: 0.5,
            t_final: 1.0,
        }
    }

    fn full_cfg(qs: &[f64], ms: &[f64]) -> EstimatorConfig {
        EstimatorConfig {
            higher_integrability_q: qs.to_vec(),
            higher_moments_q: ms.to_vec(),
            ..EstimatorConfig::default()
        }
    }

    fn frozen(u: &NodalField, n_steps: usize) -> Vec<NodalField> {
        vec![u.clone(); n_steps + 1]
    }

    #[test]
    fn zero_path_all_zero() {
        let grid = Grid::new(2, 8).unwrap();
        let z = NodalField::zeros(grid, 1);
        let m = model(3.0);
        let vals =
            functionals_from_states(&frozen(&z, 5), &m, &full_cfg(&[4.0], &[2.0]), 0.2).unwrap();
        for (k, v) in &vals {
            assert_eq!(*v, 0.0, "{}", k);
        }
    }

    #[test]
    fn frozen_field_definitional() {
        // constant-in-time state: sup_u2 = ||u||^2, int_gradp = T ||grad u||_p^p
        let grid = Grid::new(2, 12).unwrap();
        let m = model(3.0);
        let u = NodalField::from_fn(grid, 1, |x, _| {
            (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin()
        });
        let tau = 0.1;
        let n_steps = 10; // T = 1
        let vals = functionals_from_states(&frozen(&u, n_steps), &m, &full_cfg(&[], &[]), tau)
            .unwrap();
        let full = SubdomainMask::full();
        assert_relative_eq!(vals["sup_u2"], norm_lq_nodal(&u, 2.0, &full).unwrap(), max_relative = 1e-13);
        assert_relative_eq!(
            vals["int_gradp"],
            norm_lq_cells(&grad(&u), 3.0, &full).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            vals["eps_int_grad2"],
            0.5 * norm_lq_cells(&grad(&u), 2.0, &full).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn p2_f_is_identity() {
        let grid = Grid::new(2, 8).unwrap();
        let u = NodalField::from_fn(grid, 2, |x, c| (x[0] * (1.0 - x[1])).powi(c as i32 + 1));
        let gu = grad(&u);
        let f = eval_f_cells(&gu, 2.0);
        assert_eq!(f.values, gu.values);
    }

    #[test]
    fn affine_field_zero_grad_f2() {
        // affine u has constant gradient; difference quotients of F(grad u) vanish
        // (interior cells only; the mask must avoid the boundary layer)
        let grid = Grid::new(2, 16).unwrap();
        let m = model(3.0);
        let u = NodalField::from_fn(grid, 1, |x, _| 0.3 * x[0] - 0.7 * x[1] + 0.1);
        let vals =
            functionals_from_states(&frozen(&u, 3), &m, &full_cfg(&[], &[]), 0.25).unwrap();
        assert_relative_eq!(vals["int_gradF2"], 0.0, epsilon = 1e-24);
    }

    #[test]
    fn higher_integrability_q_eq_p_coincides() {
        let grid = Grid::new(2, 10).unwrap();
        let m = model(3.0);
        let u = NodalField::from_fn(grid, 1, |x, _| x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1]));
        let cfg = full_cfg(&[3.0], &[]);
        let vals = functionals_from_states(&frozen(&u, 4), &m, &cfg, 0.25).unwrap();
        let masked_gradp = norm_lq_cells(&grad(&u), 3.0, &cfg.mask).unwrap();
        assert_relative_eq!(vals["higher_integrability_q3"], masked_gradp, max_relative = 1e-13);
    }

    #[test]
    fn frozen_unit_gradient_measures_mask() {
        // |grad u| = 1 everywhere for u = x_1: the q = 4 integral equals the
        // measured mask volume, T = 1
        let grid = Grid::new(1, 200).unwrap();
        let mut m = model(3.0);
        m.d = 1;
        let u = NodalField::from_fn(grid, 1, |x, _| x[0]);
        let cfg = full_cfg(&[4.0], &[]);
        let vals = functionals_from_states(&frozen(&u, 4), &m, &cfg, 0.25).unwrap();
        // mask [1/8, 7/8]: measure 3/4 up to one cell width
        assert_relative_eq!(vals["higher_integrability_q4"], 0.75, max_relative = 2e-2);
    }

    #[test]
    fn higher_moments_identities() {
        let grid = Grid::new(2, 8).unwrap();
        let m = model(2.0);
        let u = NodalField::from_fn(grid, 1, |x, _| x[0] * (1.0 - x[0]) * x[1]);
        let vals =
            functionals_from_states(&frozen(&u, 4), &m, &full_cfg(&[], &[1.0, 2.0]), 0.25).unwrap();
        let energy = vals["sup_u2"] + vals["int_gradp"];
        assert_relative_eq!(vals["higher_moment_energy_q1"], energy, max_relative = 1e-14);
        assert_relative_eq!(
            vals["higher_moment_energy_q2"],
            energy * energy,
            max_relative = 1e-13
        );
        let full = SubdomainMask::full();
        assert_relative_eq!(
            vals["sup_uq_q1"],
            norm_lq_nodal(&u, 1.0, &full).unwrap(),
            max_relative = 1e-14
        );
    }

    proptest! {
        #[test]
        fn scaling_laws(c in -3.0f64..3.0, seed in 0u64..50) {
            prop_assume!(c.abs() > 1e-3);
            let grid = Grid::new(2, 6).unwrap();
            let m = model(3.0);
            let mut s = Stream::new(seed, 9);
            let mut u = NodalField::zeros(grid, 1);
            for v in u.values.iter_mut() { *v = s.uniform(-1.0, 1.0); }
            let mut cu = u.clone();
            cu.scale(c);
            let cfg = full_cfg(&[4.0], &[]);
            let a = functionals_from_states(&frozen(&u, 2), &m, &cfg, 0.5).unwrap();
            let b = functionals_from_states(&frozen(&cu, 2), &m, &cfg, 0.5).unwrap();
            prop_assert!((b["sup_u2"] - c * c * a["sup_u2"]).abs() <= 1e-10 * a["sup_u2"].max(1.0));
            prop_assert!(
                (b["int_gradp"] - c.abs().powi(3) * a["int_gradp"]).abs()
                    <= 1e-10 * a["int_gradp"].max(1.0)
            );
            prop_assert!(
                (b["higher_integrability_q4"] - c.powi(4) * a["higher_integrability_q4"]).abs()
                    <= 1e-10 * a["higher_integrability_q4"].max(1.0)
            );
        }
    }

    #[test]
    fn log_convexity_in_q() {
        // normalized means of |grad u|^q over the mask are log-convex in q
        let grid = Grid::new(2, 12).unwrap();
        let m = model(3.0);
        let mut s = Stream::new(3, 1);
        let mut u = NodalField::zeros(grid, 1);
        for v in u.values.iter_mut() {
            *v = s.uniform(-1.0, 1.0);
        }
        let _ = m;
        let mask = SubdomainMask::full();
        let vol = grid.num_cells() as f64 * grid.cell_volume();
        let mean_q = |q: f64| norm_lq_cells(&grad(&u), q, &mask).unwrap() / vol;
        for qs in [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.5, 2.5, 3.5]] {
            let (a, b, c) = (mean_q(qs[0]).ln(), mean_q(qs[1]).ln(), mean_q(qs[2]).ln());
            assert!(b <= 0.5 * (a + c) + 1e-12, "not log-convex at {:?}", qs);
        }
    }

    #[test]
    fn ladder_p2_d2_exact() {
        let l = moser_ladder(2.0, 2, 4).unwrap();
        assert_eq!(l.alphas, vec![0.0, 2.0, 6.0, 14.0, 30.0]);
        assert_eq!(l.qs, vec![2.0, 4.0, 8.0, 16.0, 32.0]);
        for w in l.alphas.windows(2) {
            assert_eq!(w[1], 2.0 * w[0] + 2.0);
        }
    }

    #[test]
    fn ladder_p3_d3_first_step() {
        let l = moser_ladder(3.0, 3, 1).unwrap();
        assert_relative_eq!(l.alphas[1], 13.0 / 3.0 - 3.0, max_relative = 1e-15);
    }

    #[test]
    fn ladder_k0_and_guard() {
        assert_eq!(moser_ladder(1.5, 2, 0).unwrap().alphas, vec![0.0]);
        assert!(matches!(
            moser_ladder(0.9, 4, 3),
            Err(Error::LadderHypothesis { .. })
        ));
    }

    #[test]
    fn aggregate_closed_forms() {
        let mk = |v: f64| {
            let mut m = FunctionalValues::new();
            m.insert("f".into(), v);
            m
        };
        let one = aggregate(&[mk(3.0)]).unwrap();
        assert_eq!(one.stats["f"].mean, 3.0);
        assert!(one.stats["f"].var.is_none());
        let two = aggregate(&[mk(1.0), mk(3.0)]).unwrap();
        assert_eq!(two.stats["f"].mean, 2.0);
        assert_relative_eq!(two.stats["f"].var.unwrap(), 2.0, max_relative = 1e-15);
        assert!(matches!(aggregate(&[]), Err(Error::NoPaths)));
        let mut other = mk(1.0);
        other.insert("g".into(), 2.0);
        assert!(matches!(aggregate(&[mk(1.0), other]), Err(Error::MismatchedKeys(_))));
    }

    #[test]
    fn aggregate_permutation_invariant() {
        let mut s = Stream::new(7, 7);
        let reports: Vec<FunctionalValues> = (0..33)
            .map(|_| {
                let mut m = FunctionalValues::new();
                m.insert("f".into(), s.normal() * 1e6 + s.uniform(0.0, 1e-6));
                m
            })
            .collect();
        let a = aggregate(&reports).unwrap();
        let mut rev = reports;
        rev.reverse();
        rev.swap(3, 17);
        let b = aggregate(&rev).unwrap();
        assert_eq!(a.stats["f"], b.stats["f"]);
    }

    #[test]
    fn ci_coverage() {
        // 200 repetitions of 1000 N(1, 0.1) draws; the 95% t-interval must
        // cover the true mean in at least 93% of them
        let mut covered = 0;
        for rep in 0..200u64 {
            let mut s = Stream::new(0xc0ffee, rep);
            let reports: Vec<FunctionalValues> = (0..1000)
                .map(|_| {
                    let mut m = FunctionalValues::new();
                    m.insert("f".into(), 1.0 + 0.1 * s.normal());
                    m
                })
                .collect();
            let agg = aggregate(&reports).unwrap();
            let st = &agg.stats["f"];
            if st.ci_lo.unwrap() <= 1.0 && 1.0 <= st.ci_hi.unwrap() {
                covered += 1;
            }
        }
        assert!(covered >= 186, "coverage {}/200", covered);
    }
}
