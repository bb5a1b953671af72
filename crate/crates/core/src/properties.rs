//! Falsification harnesses for the separation and uniform fading memory
//! properties.
//!
//! A PASS means no counterexample was found for the probe; reports carry
//! the hypothesis checks and trial counts needed to interpret it.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::ReservoirModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{derive_seed, rng_from_seed};
use crate::series::TimeSeries;
use crate::tdr::{run_reservoir, solve_fixed_point, KernelSpec, Reservoir, TdrParams};

/// Either the exact reservoir or its linearized model.
#[derive(Debug, Clone, Copy)]
pub enum System<'a> {
    Tdr(&'a TdrParams<KernelSpec>),
    Model(&'a ReservoirModel),
}

impl System<'_> {
    fn reservoir(&self) -> &dyn Reservoir {
        match self {
            System::Tdr(p) => *p,
            System::Model(m) => *m,
        }
    }

    /// Rest state used as the initial condition of every probe.
    pub fn rest_state(&self) -> Result<Vec<f64>> {
        match self {
            System::Tdr(p) => {
                let fp = solve_fixed_point(&p.kernel, None)?;
                Ok(vec![fp.x0; p.n()])
            }
            System::Model(m) => Ok(m.x0().as_slice().to_vec()),
        }
    }

    fn run(&self, input: &TimeSeries, init: &[f64]) -> Result<crate::tdr::StatePath> {
        run_reservoir(self.reservoir(), input, init)
    }
}

fn inf_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Separation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpProbe {
    pub base_input: TimeSeries,
    /// Index into `base_input` of the perturbed sample.
    pub perturb_index: usize,
    pub delta: f64,
    pub horizon: usize,
    /// Absolute gap floor; defaults to `1e-12 · max(1, max |x|)`.
    #[serde(default)]
    pub gap_floor: Option<f64>,
}

/// Numerically decidable hypotheses behind the separation property of the
/// model: nonsingular `A` and an injective input map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpHypotheses {
    pub min_eigen_modulus: f64,
    pub nonsingular: bool,
    /// Some neuron's input polynomial is strictly monotone on the scanned range.
    pub input_map_injective: bool,
    pub scan_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub gaps: Vec<f64>,
    pub min_gap: f64,
    pub gap_floor: f64,
    pub pass: bool,
    pub hypotheses: Option<SpHypotheses>,
}

/// Scan `ε(z)` on `[lo, hi]` for a strictly monotone component.
pub fn sp_hypotheses(model: &ReservoirModel, lo: f64, hi: f64) -> SpHypotheses {
    let min_eig = linalg::min_eigen_modulus(model.a());
    let scale = linalg::max_abs(model.a()).max(f64::MIN_POSITIVE);
    let p = model.poly().matrix();
    let grid = 2001;
    let injective = (0..model.dim()).any(|j| {
        let deriv = |z: f64| (0..p.ncols()).map(|r| (r + 1) as f64 * p[(j, r)] * z.powi(r as i32)).sum::<f64>();
        let signs: Vec<f64> = (0..grid)
            .map(|k| deriv(lo + (hi - lo) * k as f64 / (grid - 1) as f64))
            .collect();
        signs.iter().all(|&d| d > 0.0) || signs.iter().all(|&d| d < 0.0)
    });
    SpHypotheses {
        min_eigen_modulus: min_eig,
        nonsingular: min_eig > 1e-12 * scale,
        input_map_injective: injective,
        scan_range: (lo, hi),
    }
}

/// Run the base input and a copy perturbed by `delta` at `perturb_index`
/// from the same rest state, and record `‖x(t) - x'(t)‖∞` on
/// `[s, s + horizon]`.
pub fn check_separation(system: System<'_>, probe: &SpProbe) -> Result<SeparationReport> {
    let s = probe.perturb_index;
    if s >= probe.base_input.len() {
        return Err(Error::InvalidArgument(format!("perturbation index {s} outside the input")));
    }
    let end = (s + probe.horizon + 1).min(probe.base_input.len());
    let base = TimeSeries::new(probe.base_input.values()[..end].to_vec(), probe.base_input.origin())?;
    let mut pert = base.values().to_vec();
    pert[s] += probe.delta;
    let pert = TimeSeries::new(pert, base.origin())?;
    let init = system.rest_state()?;
    let a = system.run(&base, &init)?;
    let b = system.run(&pert, &init)?;
    let gaps: Vec<f64> = (s..end).map(|k| inf_gap(a.row(k), b.row(k))).collect();
    let magnitude = (s..end)
        .flat_map(|k| a.row(k).iter().chain(b.row(k)))
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let floor = probe.gap_floor.unwrap_or(1e-12 * magnitude);
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let hypotheses = match system {
        System::Model(m) => {
            let bound = probe.base_input.values().iter().fold(0.0f64, |acc, v| acc.max(v.abs())) + probe.delta.abs();
            Some(sp_hypotheses(m, -bound, bound))
        }
        System::Tdr(_) => None,
    };
    Ok(SeparationReport { pass: min_gap > floor, gaps, min_gap, gap_floor: floor, hypotheses })
}

// ---------------------------------------------------------------------------
// Fading memory
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UfmProbe {
    /// Tolerance the final-state gap must respect.
    pub epsilon: f64,
    /// Agreement level of the two inputs over the recent window.
    pub delta_eps: f64,
    /// The inputs agree within `delta_eps` on the last `h_eps + 1` samples.
    pub h_eps: usize,
    pub trials: usize,
    /// Inputs are drawn uniformly from `[-input_bound, input_bound]`.
    pub input_bound: f64,
    /// Length of the independent earlier histories.
    pub history: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingMemoryReport {
    pub probe: UfmProbe,
    pub max_final_gap: f64,
    pub pass: bool,
    /// `‖A‖∞`, `ε1`, `K_max` and the resulting analytic bound (model only).
    pub norm_a: Option<f64>,
    pub epsilon1: Option<f64>,
    pub k_max: Option<f64>,
    pub analytic_bound: Option<f64>,
    pub within_analytic_bound: Option<bool>,
}

/// `max_j Σ_r |a_r^j| k^r`, a bound on `‖ε(z)‖∞` for `|z| ≤ k`.
pub fn input_map_bound(model: &ReservoirModel, k: f64) -> f64 {
    let p = model.poly().matrix();
    (0..p.nrows())
        .map(|j| (0..p.ncols()).map(|r| p[(j, r)].abs() * k.powi(r as i32 + 1)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `max_j Σ_r r |a_r^j| k^{r-1}`, a Lipschitz constant of `ε` on `|z| ≤ k`.
pub fn input_map_lipschitz(model: &ReservoirModel, k: f64) -> f64 {
    let p = model.poly().matrix();
    (0..p.nrows())
        .map(|j| (0..p.ncols()).map(|r| (r + 1) as f64 * p[(j, r)].abs() * k.powi(r as i32)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(ε1 + (2 K_max - ε1) ‖A‖^{h+1}) / (1 - ‖A‖)`
pub fn fading_memory_bound(norm_a: f64, epsilon1: f64, k_max: f64, h: usize) -> f64 {
    (epsilon1 + (2.0 * k_max - epsilon1) * norm_a.powi(h as i32 + 1)) / (1.0 - norm_a)
}

fn draw_pair(probe: &UfmProbe, seed: u64) -> (TimeSeries, TimeSeries) {
    let mut rng = rng_from_seed(seed);
    let k = probe.input_bound;
    let len = probe.history + probe.h_eps + 1;
    let mut a = Vec::with_capacity(len);
    let mut b = Vec::with_capacity(len);
    for t in 0..len {
        let za: f64 = rng.random_range(-k..=k);
        let zb = if t < probe.history {
            rng.random_range(-k..=k)
        } else {
            (za + rng.random_range(-probe.delta_eps..=probe.delta_eps)).clamp(-k, k)
        };
        a.push(za);
        b.push(zb);
    }
    (TimeSeries::from_values(a).expect("finite"), TimeSeries::from_values(b).expect("finite"))
}

/// Draw input pairs with arbitrary histories that agree within `delta_eps`
/// on their last `h_eps + 1` samples and record the final-state gap.
pub fn check_fading_memory(system: System<'_>, probe: &UfmProbe, seed: u64) -> Result<FadingMemoryReport> {
    if !(probe.epsilon > 0.0 && probe.delta_eps > 0.0 && probe.input_bound > 0.0) || probe.trials == 0 {
        return Err(Error::InvalidArgument("fading-memory probe needs positive epsilon, delta, bound and trials".into()));
    }
    let analytic = match system {
        System::Model(m) => {
            let norm = linalg::inf_norm(m.a());
            if norm >= 1.0 {
                return Err(Error::HypothesisViolated(format!("‖A‖∞ = {norm} is not below 1")));
            }
            let e1 = input_map_lipschitz(m, probe.input_bound) * probe.delta_eps;
            let kmax = input_map_bound(m, probe.input_bound);
            Some((norm, e1, kmax, fading_memory_bound(norm, e1, kmax, probe.h_eps)))
        }
        System::Tdr(_) => None,
    };
    let init = system.rest_state()?;
    let gaps = (0..probe.trials)
        .into_par_iter()
        .map(|i| {
            let (a, b) = draw_pair(probe, derive_seed(seed, &format!("ufm/{i}")));
            let xa = system.run(&a, &init)?;
            let xb = system.run(&b, &init)?;
            Ok(inf_gap(xa.last(), xb.last()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_gap = gaps.into_iter().fold(0.0, f64::max);
    Ok(FadingMemoryReport {
        probe: *probe,
        max_final_gap: max_gap,
        pass: max_gap <= probe.epsilon,
        norm_a: analytic.map(|a| a.0),
        epsilon1: analytic.map(|a| a.1),
        k_max: analytic.map(|a| a.2),
        analytic_bound: analytic.map(|a| a.3),
        within_analytic_bound: analytic.map(|a| max_gap <= a.3),
    })
}

/// Per-step contraction `‖x(t+1) - x'(t+1)‖∞ ≤ ‖A‖∞ ‖x(t) - x'(t)‖∞` of the
/// model once the inputs coincide; returns the largest violation.
pub fn contraction_violation(model: &ReservoirModel, input: &TimeSeries, init_a: &[f64], init_b: &[f64]) -> Result<f64> {
    let norm = linalg::inf_norm(model.a());
    let xa = run_reservoir(model, input, init_a)?;
    let xb = run_reservoir(model, input, init_b)?;
    let mut prev = inf_gap(init_a, init_b);
    let mut worst = 0.0f64;
    for k in 0..xa.len() {
        let gap = inf_gap(xa.row(k), xb.row(k));
        worst = worst.max(gap - norm * prev);
        prev = gap;
    }
    Ok(worst)
}

/// Closed-form gap `‖A^{t-s} (ε(z(s)+δ) - ε(z(s)))‖∞` for the model.
pub fn model_separation_gap(model: &ReservoirModel, z_s: f64, delta: f64, steps: usize) -> f64 {
    let mut d: DVector<f64> = model.epsilon(z_s + delta) - model.epsilon(z_s);
    for _ in 0..steps {
        d = model.a() * d;
    }
    linalg::max_abs_vec(&d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdr::{generate_mask, Ikeda, InputPolynomials};
    use nalgebra::DMatrix;
    use rand::SeedableRng;

    fn model(a: DMatrix<f64>, p: DMatrix<f64>) -> ReservoirModel {
        let n = a.nrows();
        ReservoirModel::new(DVector::from_element(n, 0.2), a, InputPolynomials::from_matrix(p)).unwrap()
    }

    fn noise(len: usize, seed: u64) -> TimeSeries {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        TimeSeries::from_values((0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_perturbation_fails_by_design() {
        let m = model(DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]), DMatrix::from_row_slice(2, 1, &[1.0, 0.5]));
        let probe = SpProbe { base_input: noise(50, 1), perturb_index: 10, delta: 0.0, horizon: 20, gap_floor: None };
        let r = check_separation(System::Model(&m), &probe).unwrap();
        assert!(r.gaps.iter().all(|&g| g == 0.0));
        assert!(!r.pass);
    }

    #[test]
    fn linear_model_gap_matches_closed_form() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, -0.1, 0.6, 0.1, 0.0, 0.3, 0.4]);
        let m = model(a, DMatrix::from_row_slice(3, 1, &[1.0, -0.5, 0.8]));
        let input = noise(100, 2);
        let probe = SpProbe { base_input: input.clone(), perturb_index: 30, delta: 0.01, horizon: 25, gap_floor: None };
        let r = check_separation(System::Model(&m), &probe).unwrap();
        assert!(r.pass);
        let h = r.hypotheses.as_ref().unwrap();
        assert!(h.nonsingular && h.input_map_injective);
        for (k, g) in r.gaps.iter().enumerate() {
            let exact = model_separation_gap(&m, input.values()[30], 0.01, k);
            assert!((g - exact).abs() < 1e-12, "step {k}");
        }
    }

    #[test]
    fn benchmark_tdr_separates_over_short_horizon() {
        let p = TdrParams::new(0.839, KernelSpec::Ikeda(Ikeda::BENCHMARK), generate_mask(40, 3)).unwrap();
        let probe = SpProbe { base_input: noise(100, 3), perturb_index: 50, delta: 0.01, horizon: 3, gap_floor: None };
        let r = check_separation(System::Tdr(&p), &probe).unwrap();
        assert!(r.pass, "{:?}", r.gaps);
    }

    #[test]
    fn identical_inputs_have_zero_gap() {
        let m = model(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0));
        let probe = UfmProbe { epsilon: 1e-3, delta_eps: 1e-300, h_eps: 1000, trials: 4, input_bound: 1.0, history: 0 };
        let r = check_fading_memory(System::Model(&m), &probe, 1).unwrap();
        assert!(r.max_final_gap < 1e-250);
        assert!(r.pass && r.within_analytic_bound.unwrap());
    }

    #[test]
    fn memoryless_model_gap_is_one_step_lipschitz() {
        let p = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, -0.3, 0.1, 0.4]);
        let m = model(DMatrix::zeros(2, 2), p);
        let probe = UfmProbe { epsilon: 1.0, delta_eps: 0.05, h_eps: 0, trials: 200, input_bound: 1.0, history: 20 };
        let r = check_fading_memory(System::Model(&m), &probe, 2).unwrap();
        let lip = input_map_lipschitz(&m, 1.0);
        assert!(r.max_final_gap <= lip * 0.05);
        assert!((r.analytic_bound.unwrap() - lip * 0.05).abs() < 1e-15);
    }

    #[test]
    fn scalar_linear_gap_is_geometric_sum() {
        let (alpha, a1) = (0.6, 0.8);
        let m = model(DMatrix::from_element(1, 1, alpha), DMatrix::from_element(1, 1, a1));
        let za = noise(40, 5);
        let zb = noise(40, 6);
        let init = [0.2];
        let xa = run_reservoir(&m, &za, &init).unwrap();
        let xb = run_reservoir(&m, &zb, &init).unwrap();
        let observed = xa.last()[0] - xb.last()[0];
        let analytic: f64 = (0..40).map(|i| a1 * alpha.powi(i as i32) * (za.values()[39 - i] - zb.values()[39 - i])).sum();
        assert!((observed - analytic).abs() < 1e-12);
    }

    #[test]
    fn fading_memory_rejects_expansive_norm() {
        let m = model(DMatrix::from_row_slice(2, 2, &[0.6, 0.6, 0.0, 0.1]), DMatrix::from_element(2, 1, 1.0));
        let probe = UfmProbe { epsilon: 1.0, delta_eps: 0.1, h_eps: 2, trials: 2, input_bound: 1.0, history: 5 };
        assert!(matches!(
            check_fading_memory(System::Model(&m), &probe, 3),
            Err(Error::HypothesisViolated(_))
        ));
    }

    #[test]
    fn bound_decreases_with_window() {
        for h in 0..30 {
            assert!(fading_memory_bound(0.7, 0.01, 2.0, h + 1) <= fading_memory_bound(0.7, 0.01, 2.0, h));
        }
    }

    #[test]
    fn model_contracts_per_step() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -0.4, 0.2, 0.5]);
        let m = model(a, DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.4, 0.3]));
        let v = contraction_violation(&m, &noise(200, 7), &[3.0, -2.0], &[-1.0, 4.0]).unwrap();
        assert!(v <= 1e-12);
    }
}
