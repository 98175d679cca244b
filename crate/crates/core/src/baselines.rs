//! Comparison baselines: adiabatic ramp evolution, textbook phase-estimation
//! filtering in the eigenbasis, adiabatic preconditioning feeding the filter
//! cycles, and the error-versus-total-time comparison across methods.

use ndarray::prelude::*;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rodeo::{self, TimeAccounting};
use crate::seeding;
use crate::spectral::{
    eigendecompose, project_to_eigenbasis, weights_of, ComplexVector, EigenDecomposition,
    HermitianOperator, SpectralState,
};

const MAX_DOUBLINGS: usize = 20;
const MAX_PHASE_BITS: u32 = 24;
const NORM_TOL: f64 = 1e-10;

/// Ramp-evolution configuration. `steps` is the starting step count for the
/// doubling loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticConfig {
    pub total_time: f64,
    pub steps: usize,
    pub convergence_tol: f64,
}

impl AdiabaticConfig {
    fn validate(&self) -> Result<()> {
        if !(self.total_time > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "total time must be positive, got {}",
                self.total_time
            )));
        }
        if self.steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "step count must be ≥ 2, got {}",
                self.steps
            )));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "convergence tolerance must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Phase-estimation configuration: ancilla bit count, evolution time per
/// controlled-power unit, and the energy window mapped onto [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpeConfig {
    pub phase_bits: u32,
    pub base_time: f64,
    pub energy_window: (f64, f64),
}

impl QpeConfig {
    /// Window spanning all levels with a one-unit margin on each side.
    pub fn window_for(eig: &EigenDecomposition) -> (f64, f64) {
        let lo = eig.energies().iter().copied().fold(f64::MAX, f64::min);
        let hi = eig.energies().iter().copied().fold(f64::MIN, f64::max);
        (lo - 1.0, hi + 1.0)
    }

    fn validate(&self) -> Result<()> {
        if self.phase_bits == 0 || self.phase_bits > MAX_PHASE_BITS {
            return Err(Error::InvalidArgument(format!(
                "phase bits must lie in 1..={MAX_PHASE_BITS}, got {}",
                self.phase_bits
            )));
        }
        if !(self.base_time > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "base time must be positive, got {}",
                self.base_time
            )));
        }
        if !(self.energy_window.0 < self.energy_window.1) {
            return Err(Error::InvalidArgument(format!(
                "energy window must be nonempty, got [{}, {}]",
                self.energy_window.0, self.energy_window.1
            )));
        }
        Ok(())
    }

    pub fn outcomes(&self) -> usize {
        1usize << self.phase_bits
    }

    /// Eigenphase of an energy under the window mapping.
    pub fn phase_of(&self, energy: f64) -> f64 {
        let (lo, hi) = self.energy_window;
        std::f64::consts::TAU * (energy - lo) / (hi - lo)
    }

    /// Total evolution time: (2^t − 1) controlled-power units.
    pub fn total_time(&self) -> f64 {
        ((1u64 << self.phase_bits) - 1) as f64 * self.base_time
    }
}

/// Method label for a comparison row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rodeo,
    Qpe,
    Adiabatic,
    FaRef,
    FgRef,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rodeo => "rodeo",
            Method::Qpe => "qpe",
            Method::Adiabatic => "adiabatic",
            Method::FaRef => "f_a_ref",
            Method::FgRef => "f_g_ref",
        }
    }
}

/// One point of the error-versus-time comparison. `seed` is set only for
/// stochastic (rodeo) rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub total_time: f64,
    pub log_delta: f64,
    pub seed: Option<u64>,
}

/// One row of the preconditioning table: overlap with the target level after
/// `cycles` post-selected filter cycles, averaged over schedule draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreconditionRow {
    pub t_ae: f64,
    pub cycles: usize,
    pub mean_overlap: f64,
    pub stderr: f64,
}

fn ramp_operator(h_i: &Array2<f64>, h_obj: &Array2<f64>, fraction: f64) -> Array2<f64> {
    let angle = std::f64::consts::FRAC_PI_2 * fraction;
    let c = angle.cos().powi(2);
    let s = angle.sin().powi(2);
    h_i * c + h_obj * s
}

/// Indices reachable from the support of `psi` through nonzero entries of
/// either operator. Evolution is exact on this block; everything outside it
/// never acquires amplitude.
fn reachable_block(psi: &ComplexVector, ops: [&HermitianOperator; 2]) -> Vec<usize> {
    let d = psi.dim();
    let mut in_block = vec![false; d];
    let mut queue: Vec<usize> = (0..d)
        .filter(|&i| psi.entries()[i].norm_sqr() > 0.0)
        .collect();
    for &i in &queue {
        in_block[i] = true;
    }
    while let Some(i) = queue.pop() {
        for op in ops {
            for j in 0..d {
                if !in_block[j] && op.entries()[(i, j)] != Complex64::new(0.0, 0.0) {
                    in_block[j] = true;
                    queue.push(j);
                }
            }
        }
    }
    (0..d).filter(|&i| in_block[i]).collect()
}

fn gather_real(op: &HermitianOperator, block: &[usize]) -> Array2<f64> {
    let b = block.len();
    let mut m = Array2::zeros((b, b));
    for (r, &i) in block.iter().enumerate() {
        for (c, &j) in block.iter().enumerate() {
            m[(r, c)] = op.entries()[(i, j)].re;
        }
    }
    m
}

/// Evolve with a fixed step count: each step applies the exact exponential
/// of the ramp operator frozen at the step midpoint.
pub fn adiabatic_fixed_steps(
    psi: &ComplexVector,
    h_i: &HermitianOperator,
    h_obj: &HermitianOperator,
    total_time: f64,
    steps: usize,
) -> Result<ComplexVector> {
    if h_i.dim() != h_obj.dim() || psi.dim() != h_i.dim() {
        return Err(Error::DimensionMismatch {
            context: "adiabatic evolution",
            expected: h_i.dim(),
            found: psi.dim().min(h_obj.dim()),
        });
    }
    if !h_i.is_real() || !h_obj.is_real() {
        return Err(Error::InvalidArgument(
            "ramp evolution expects real-symmetric operators".into(),
        ));
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::Unnormalized {
            norm,
            tol: NORM_TOL,
        });
    }
    let block = reachable_block(psi, [h_i, h_obj]);
    let hi_block = gather_real(h_i, &block);
    let hobj_block = gather_real(h_obj, &block);
    let mut amp: Array1<Complex64> = block.iter().map(|&i| psi.entries()[i]).collect();
    let dt = total_time / steps as f64;
    for step in 0..steps {
        let fraction = (step as f64 + 0.5) * dt / total_time;
        let frozen = ramp_operator(&hi_block, &hobj_block, fraction);
        let op = HermitianOperator::from_real(frozen)?;
        let eig = eigendecompose(&op)?;
        let mut coeffs = Array1::<Complex64>::zeros(block.len());
        for j in 0..block.len() {
            let mut a = Complex64::new(0.0, 0.0);
            for (v, p) in eig.vector(j).iter().zip(amp.iter()) {
                a += v.conj() * p;
            }
            coeffs[j] = a * Complex64::from_polar(1.0, -eig.energies()[j] * dt);
        }
        amp = eig.vectors().dot(&coeffs);
    }
    let mut out = Array1::<Complex64>::zeros(psi.dim());
    for (r, &i) in block.iter().enumerate() {
        out[i] = amp[r];
    }
    ComplexVector::new(out)
}

/// Ramp from `h_i` to `h_obj` over `cfg.total_time`, doubling the step count
/// until the final state moves by less than `cfg.convergence_tol` in
/// fidelity between consecutive refinements. Returns the evolved state and
/// the converged step count.
pub fn adiabatic_evolve(
    psi: &ComplexVector,
    h_i: &HermitianOperator,
    h_obj: &HermitianOperator,
    cfg: &AdiabaticConfig,
) -> Result<(ComplexVector, usize)> {
    cfg.validate()?;
    let mut steps = cfg.steps;
    let mut current = adiabatic_fixed_steps(psi, h_i, h_obj, cfg.total_time, steps)?;
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        steps *= 2;
        let refined = adiabatic_fixed_steps(psi, h_i, h_obj, cfg.total_time, steps)?;
        let fid: Complex64 = refined
            .entries()
            .iter()
            .zip(current.entries().iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        last_change = 1.0 - fid.norm();
        current = refined;
        if last_change < cfg.convergence_tol {
            return Ok((current, steps));
        }
    }
    Err(Error::NotConverged {
        doublings: MAX_DOUBLINGS as u32,
        last_change,
        tol: cfg.convergence_tol,
    })
}

/// Dirichlet kernel amplitude (1/2^t)Σ_k e^{ik·delta} in closed form.
fn kernel_amplitude(delta: f64, phase_bits: u32) -> Complex64 {
    let size = (1u64 << phase_bits) as f64;
    let wrapped = delta - std::f64::consts::TAU * (delta / std::f64::consts::TAU).round();
    if wrapped.abs() < 1e-12 {
        return Complex64::new(1.0, 0.0);
    }
    let half = 0.5 * wrapped;
    let magnitude = (size * half).sin() / (size * half.sin());
    Complex64::from_polar(magnitude, (size - 1.0) * half)
}

fn outcome_probability(
    state: &SpectralState,
    eig: &EigenDecomposition,
    cfg: &QpeConfig,
    m: usize,
) -> f64 {
    let phi_m = std::f64::consts::TAU * m as f64 / cfg.outcomes() as f64;
    (0..state.dim())
        .map(|j| {
            let a = state.amplitudes()[j];
            if a == Complex64::new(0.0, 0.0) {
                return 0.0;
            }
            let delta = cfg.phase_of(eig.energies()[j]) - phi_m;
            a.norm_sqr() * kernel_amplitude(delta, cfg.phase_bits).norm_sqr()
        })
        .sum()
}

/// Sample an outcome from its exact distribution by visiting outcomes in
/// order of distance from each component's phase peak.
fn sample_outcome<R: Rng>(
    state: &SpectralState,
    eig: &EigenDecomposition,
    cfg: &QpeConfig,
    rng: &mut R,
) -> usize {
    // Pick the component, then the outcome within its kernel.
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut component = state.dim() - 1;
    for j in 0..state.dim() {
        acc += state.amplitudes()[j].norm_sqr();
        if u < acc {
            component = j;
            break;
        }
    }
    let size = cfg.outcomes();
    let phi = cfg.phase_of(eig.energies()[component]);
    let center = (phi * size as f64 / std::f64::consts::TAU).round() as i64;
    let v: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last = 0usize;
    for rank in 0..size as i64 {
        let offset = if rank % 2 == 0 { rank / 2 } else { -(rank / 2 + 1) };
        let m = (center + offset).rem_euclid(size as i64) as usize;
        let phi_m = std::f64::consts::TAU * m as f64 / size as f64;
        cumulative += kernel_amplitude(phi - phi_m, cfg.phase_bits).norm_sqr();
        last = m;
        if v < cumulative {
            return m;
        }
    }
    last
}

/// Apply one phase-estimation round. The outcome is forced when given,
/// otherwise sampled from its exact distribution. Returns the posterior
/// state, the outcome, and the probability of that outcome.
pub fn qpe_filter<R: Rng>(
    state: &SpectralState,
    eig: &EigenDecomposition,
    cfg: &QpeConfig,
    outcome: Option<usize>,
    rng: &mut R,
) -> Result<(SpectralState, usize, f64)> {
    cfg.validate()?;
    if state.dim() != eig.dim() {
        return Err(Error::DimensionMismatch {
            context: "qpe_filter",
            expected: eig.dim(),
            found: state.dim(),
        });
    }
    let (lo, hi) = cfg.energy_window;
    for j in 0..state.dim() {
        let energy = eig.energies()[j];
        if state.amplitudes()[j].norm_sqr() > 0.0 && !(lo <= energy && energy <= hi) {
            return Err(Error::LevelOutsideWindow { energy, lo, hi });
        }
    }
    let m = match outcome {
        Some(m) if m < cfg.outcomes() => m,
        Some(m) => {
            return Err(Error::IndexOutOfRange {
                index: m,
                dim: cfg.outcomes(),
            })
        }
        None => sample_outcome(state, eig, cfg, rng),
    };
    let probability = outcome_probability(state, eig, cfg, m);
    if probability < 1e-300 {
        return Err(Error::Underflow { probability });
    }
    let phi_m = std::f64::consts::TAU * m as f64 / cfg.outcomes() as f64;
    let scale = 1.0 / probability.sqrt();
    let amplitudes: Array1<Complex64> = (0..state.dim())
        .map(|j| {
            let delta = cfg.phase_of(eig.energies()[j]) - phi_m;
            state.amplitudes()[j] * kernel_amplitude(delta, cfg.phase_bits) * scale
        })
        .collect();
    let survival = state.survival_probability() * probability;
    Ok((SpectralState::new(amplitudes, survival)?, m, probability))
}

fn target_level(eig: &EigenDecomposition, target_e: f64) -> Vec<usize> {
    let nearest = (0..eig.dim())
        .min_by(|&a, &b| {
            (eig.energies()[a] - target_e)
                .abs()
                .total_cmp(&(eig.energies()[b] - target_e).abs())
        })
        .expect("nonempty spectrum");
    eig.level_indices(nearest)
}

fn delta_against_level(state: &SpectralState, level: &[usize]) -> f64 {
    let orthogonal: f64 = state
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(j, _)| !level.contains(j))
        .map(|(_, a)| a.norm_sqr())
        .sum();
    orthogonal.sqrt()
}

/// Adiabatically precondition for `t_ae`, then apply post-selected filter
/// cycles at the lowest occupied level of the bare initial state. One row
/// per entry of `cycle_counts`, averaged over `replicas` schedule seeds.
#[allow(clippy::too_many_arguments)]
pub fn precondition_then_rodeo(
    psi: &ComplexVector,
    h_i: &HermitianOperator,
    h_obj: &HermitianOperator,
    t_ae: f64,
    t_rms: f64,
    cycle_counts: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<Vec<PreconditionRow>> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be ≥ 1".into()));
    }
    if !(t_rms > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t_rms must be positive, got {t_rms}"
        )));
    }
    let eig = eigendecompose(h_obj)?;
    let bare = project_to_eigenbasis(psi, &eig)?;
    let occupied = weights_of(&bare, &eig)?
        .merged()
        .occupied(rodeo::OCCUPANCY_FLOOR);
    let (target_e, _) = *occupied.first().ok_or_else(|| {
        Error::InvalidArgument("initial state has no occupied level".into())
    })?;
    let level = target_level(&eig, target_e);

    let preconditioned = if t_ae > 0.0 {
        let cfg = AdiabaticConfig {
            total_time: t_ae,
            steps: 16,
            convergence_tol: 1e-8,
        };
        adiabatic_evolve(psi, h_i, h_obj, &cfg)?.0
    } else {
        psi.clone()
    };
    let start = project_to_eigenbasis(&preconditioned, &eig)?;

    let mut rows = Vec::with_capacity(cycle_counts.len());
    for &n in cycle_counts {
        if n == 0 {
            rows.push(PreconditionRow {
                t_ae,
                cycles: 0,
                mean_overlap: start.weight_of(&level),
                stderr: 0.0,
            });
            continue;
        }
        let mut overlaps = Vec::with_capacity(replicas);
        for r in 0..replicas {
            let schedule = rodeo::draw_schedule(
                n,
                t_rms,
                seeding::derive_seed(seed, n as u64, r as u64),
            )?;
            let cfg = rodeo::RodeoConfig {
                cycles: n,
                t_rms,
                filter_energy: target_e,
                seed: 0,
                recenter: false,
            };
            let (filtered, _) = rodeo::run_postselected(&start, &eig, &cfg, &schedule)?;
            overlaps.push(filtered.weight_of(&level));
        }
        let mean = overlaps.iter().sum::<f64>() / replicas as f64;
        let stderr = if replicas > 1 {
            let var = overlaps
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (replicas - 1) as f64;
            (var / replicas as f64).sqrt()
        } else {
            0.0
        };
        rows.push(PreconditionRow {
            t_ae,
            cycles: n,
            mean_overlap: mean,
            stderr,
        });
    }
    Ok(rows)
}

/// Knobs of the error-versus-time comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub seeds: usize,
    pub master_seed: u64,
    pub qpe_base_time: f64,
    pub adiabatic_tol: f64,
    pub adiabatic_steps: usize,
    pub time_accounting: TimeAccounting,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            seeds: 25,
            master_seed: 0,
            qpe_base_time: 1.0,
            adiabatic_tol: 1e-6,
            adiabatic_steps: 16,
            time_accounting: TimeAccounting::SumAbs,
        }
    }
}

const COMPARE_T_RMS: f64 = 1.0;

fn cycles_within_budget<R: Rng>(budget: f64, accounting: TimeAccounting, rng: &mut R) -> Vec<f64> {
    let mut times = Vec::new();
    let mut used = 0.0;
    loop {
        let t: f64 = COMPARE_T_RMS * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let cost = match accounting {
            TimeAccounting::SumAbs => t.abs(),
            TimeAccounting::NTimesTrms => COMPARE_T_RMS,
        };
        if used + cost > budget {
            return times;
        }
        used += cost;
        times.push(t);
    }
}

/// Mean |t| per cycle for the reference-curve cycle count at a budget.
fn reference_cycles(budget: f64, accounting: TimeAccounting) -> u32 {
    let per_cycle = match accounting {
        TimeAccounting::SumAbs => {
            COMPARE_T_RMS * (2.0 / std::f64::consts::PI).sqrt()
        }
        TimeAccounting::NTimesTrms => COMPARE_T_RMS,
    };
    (budget / per_cycle).floor().max(0.0) as u32
}

/// Run all three methods at each time budget against the same target level,
/// emitting per-seed rodeo rows, deterministic baseline rows, and the
/// arithmetic/geometric reference curves.
pub fn compare_methods(
    psi: &ComplexVector,
    h_i: &HermitianOperator,
    h_obj: &HermitianOperator,
    target_e: f64,
    budgets: &[f64],
    cfg: &CompareConfig,
) -> Result<Vec<ComparisonRow>> {
    if budgets.is_empty() {
        return Err(Error::InvalidArgument("no time budgets given".into()));
    }
    if cfg.seeds == 0 {
        return Err(Error::InvalidArgument("seed count must be ≥ 1".into()));
    }
    let eig = eigendecompose(h_obj)?;
    let start = project_to_eigenbasis(psi, &eig)?;
    let level = target_level(&eig, target_e);
    let p = start.weight_of(&level);
    if p < rodeo::OCCUPANCY_FLOOR {
        return Err(Error::InvalidArgument(format!(
            "target level at {target_e} has weight {p}, below the occupancy floor"
        )));
    }
    let exact_target = eig.energies()[level[0]];
    let log10 = |x: f64| x.max(1e-300).log10();
    let mut rows = Vec::new();
    for (b_idx, &budget) in budgets.iter().enumerate() {
        if !(budget > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time budgets must be positive, got {budget}"
            )));
        }
        // Stochastic filter rows, one per seed.
        for s in 0..cfg.seeds {
            let seed = seeding::derive_seed(cfg.master_seed, b_idx as u64, s as u64);
            let mut rng = seeding::rng_from(seed);
            let times = cycles_within_budget(budget, cfg.time_accounting, &mut rng);
            let mut cur = start.clone();
            let mut sink = seeding::rng_from(0);
            for &t in &times {
                let (next, _) =
                    rodeo::apply_cycle(&cur, &eig, exact_target, t, Some(1), &mut sink)?;
                cur = next;
            }
            rows.push(ComparisonRow {
                method: Method::Rodeo,
                total_time: budget,
                log_delta: log10(delta_against_level(&cur, &level)),
                seed: Some(seed),
            });
        }
        // Deterministic ramp row.
        let ad_cfg = AdiabaticConfig {
            total_time: budget,
            steps: cfg.adiabatic_steps,
            convergence_tol: cfg.adiabatic_tol,
        };
        let (evolved, _) = adiabatic_evolve(psi, h_i, h_obj, &ad_cfg)?;
        let evolved_state = project_to_eigenbasis(&evolved, &eig)?;
        rows.push(ComparisonRow {
            method: Method::Adiabatic,
            total_time: budget,
            log_delta: log10(delta_against_level(&evolved_state, &level)),
            seed: None,
        });
        // Phase-estimation row at the largest bit count within budget,
        // conditioned on the outcome nearest the target phase.
        let mut bits = 0u32;
        while bits < MAX_PHASE_BITS
            && ((1u64 << (bits + 1)) - 1) as f64 * cfg.qpe_base_time <= budget
        {
            bits += 1;
        }
        let qpe_delta = if bits == 0 {
            delta_against_level(&start, &level)
        } else {
            let window = QpeConfig::window_for(&eig);
            let qpe_cfg = QpeConfig {
                phase_bits: bits,
                base_time: cfg.qpe_base_time,
                energy_window: window,
            };
            let phi = qpe_cfg.phase_of(exact_target);
            let size = qpe_cfg.outcomes();
            let m = ((phi * size as f64 / std::f64::consts::TAU).round() as usize) % size;
            let mut sink = seeding::rng_from(0);
            let (posterior, _, _) = qpe_filter(&start, &eig, &qpe_cfg, Some(m), &mut sink)?;
            delta_against_level(&posterior, &level)
        };
        rows.push(ComparisonRow {
            method: Method::Qpe,
            total_time: budget,
            log_delta: log10(qpe_delta),
            seed: None,
        });
        // Closed-form reference curves.
        let n_ref = reference_cycles(budget, cfg.time_accounting);
        rows.push(ComparisonRow {
            method: Method::FaRef,
            total_time: budget,
            log_delta: log10(rodeo::estimate_fa(p, n_ref)?),
            seed: None,
        });
        rows.push(ComparisonRow {
            method: Method::FgRef,
            total_time: budget,
            log_delta: log10(rodeo::estimate_fg(p, n_ref)?),
            seed: None,
        });
    }
    Ok(rows)
}
