//! The filtering engine: cycle schedules, branch factors, success
//! probabilities, post-selected and sampled evolution, residual tracking,
//! arithmetic/geometric residual estimates, eigenstate preparation with
//! re-centering, and a full ancilla-statevector reference simulator.

use ndarray::prelude::*;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;
use crate::spectral::{
    eigendecompose, ComplexVector, EigenDecomposition, HermitianOperator, SpectralState,
    SpectralWeights,
};

/// Largest dimension accepted by the explicit ancilla-statevector reference.
pub const MAX_REFERENCE_DIM: usize = 64;

const UNDERFLOW_FLOOR: f64 = 1e-300;
/// Weights below this are treated as unoccupied when hunting for targets.
pub const OCCUPANCY_FLOOR: f64 = 1e-6;

/// How total evolution time is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeAccounting {
    /// Σ|t_n| over the realized schedule.
    SumAbs,
    /// N·t_RMS, the nominal budget.
    NTimesTrms,
}

/// Evolution times t_1..t_N with their generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSchedule {
    times: Vec<f64>,
    t_rms: f64,
    seed: u64,
}

impl CycleSchedule {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_rms(&self) -> f64 {
        self.t_rms
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Total evolution time under the chosen accounting.
    pub fn total_time(&self, accounting: TimeAccounting) -> f64 {
        match accounting {
            TimeAccounting::SumAbs => self.times.iter().map(|t| t.abs()).sum(),
            TimeAccounting::NTimesTrms => self.times.len() as f64 * self.t_rms,
        }
    }
}

/// Engine configuration for one filtering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodeoConfig {
    pub cycles: usize,
    pub t_rms: f64,
    pub filter_energy: f64,
    pub seed: u64,
    pub recenter: bool,
}

impl RodeoConfig {
    fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::InvalidArgument("cycle count must be ≥ 1".into()));
        }
        if !(self.t_rms > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_rms must be positive, got {}",
                self.t_rms
            )));
        }
        Ok(())
    }
}

/// One ancilla measurement: bit 1 = success, with the probability of the
/// branch actually taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOutcome {
    pub bit: u8,
    pub probability: f64,
}

/// One re-centering trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreparationStep {
    pub cycle: usize,
    pub delta: f64,
    pub filter_energy: f64,
    pub survival_probability: f64,
}

/// Residual bookkeeping for a prepared state.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub target_index: usize,
    pub delta: f64,
    pub overlap: f64,
    pub per_cycle_trace: Vec<PreparationStep>,
}

/// Draw t_1..t_N i.i.d. Gaussian (mean 0, sd t_rms), deterministically from
/// the seed. times(2k, seed) equals 2·times(k, seed) exactly, entry by entry.
pub fn draw_schedule(cycles: usize, t_rms: f64, seed: u64) -> Result<CycleSchedule> {
    if cycles == 0 {
        return Err(Error::InvalidArgument("cycle count must be ≥ 1".into()));
    }
    if !(t_rms > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t_rms must be positive, got {t_rms}"
        )));
    }
    let mut rng = seeding::rng_from(seed);
    let times = (0..cycles)
        .map(|_| t_rms * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(CycleSchedule {
        times,
        t_rms,
        seed,
    })
}

/// Branch factors of one cycle for a component at E_j:
/// success (1 + e^{−i(E_j−E)t})/2, failure (1 − e^{−i(E_j−E)t})/2.
pub fn cycle_factors(e_j: f64, e: f64, t: f64) -> (Complex64, Complex64) {
    let phase = Complex64::from_polar(1.0, -(e_j - e) * t);
    let one = Complex64::new(1.0, 0.0);
    ((one + phase) * 0.5, (one - phase) * 0.5)
}

/// P_N(E) = Σ_j w_j Π_n cos²[(E_j−E)t_n/2] for a realized schedule.
pub fn success_probability(weights: &SpectralWeights, e: f64, schedule: &CycleSchedule) -> f64 {
    weights
        .energies()
        .iter()
        .zip(weights.weights())
        .map(|(&e_j, &w)| {
            let p: f64 = schedule
                .times()
                .iter()
                .map(|&t| {
                    let c = (0.5 * (e_j - e) * t).cos();
                    c * c
                })
                .product();
            w * p
        })
        .sum()
}

/// Schedule-averaged success probability in closed form:
/// Σ_j w_j [(1 + exp(−(E_j−E)² t_rms²/2))/2]^N.
pub fn expected_success_probability(
    weights: &SpectralWeights,
    e: f64,
    cycles: usize,
    t_rms: f64,
) -> f64 {
    weights
        .energies()
        .iter()
        .zip(weights.weights())
        .map(|(&e_j, &w)| {
            let x = (e_j - e) * t_rms;
            let per_cycle = 0.5 * (1.0 + (-0.5 * x * x).exp());
            w * per_cycle.powi(cycles as i32)
        })
        .sum()
}

/// Apply one cycle. The branch is the forced bit when given, otherwise
/// sampled from the current state's success probability (one uniform draw).
/// survival_probability is multiplied by the branch probability when the
/// success path is taken.
pub fn apply_cycle<R: Rng>(
    state: &SpectralState,
    eig: &EigenDecomposition,
    e: f64,
    t: f64,
    forced: Option<u8>,
    rng: &mut R,
) -> Result<(SpectralState, CycleOutcome)> {
    if state.dim() != eig.dim() {
        return Err(Error::DimensionMismatch {
            context: "apply_cycle",
            expected: eig.dim(),
            found: state.dim(),
        });
    }
    let d = state.dim();
    let mut success_amp = Array1::<Complex64>::zeros(d);
    let mut failure_amp = Array1::<Complex64>::zeros(d);
    let mut p_success = 0.0;
    for j in 0..d {
        let (s, f) = cycle_factors(eig.energies()[j], e, t);
        let a = state.amplitudes()[j];
        success_amp[j] = a * s;
        failure_amp[j] = a * f;
        p_success += success_amp[j].norm_sqr();
    }
    let bit = match forced {
        Some(b) if b <= 1 => b,
        Some(b) => {
            return Err(Error::InvalidArgument(format!(
                "forced bit must be 0 or 1, got {b}"
            )))
        }
        None => {
            let u: f64 = rng.random();
            u8::from(u < p_success)
        }
    };
    let probability = if bit == 1 { p_success } else { 1.0 - p_success };
    if probability < UNDERFLOW_FLOOR {
        return Err(Error::DegenerateBranch { bit, probability });
    }
    let mut amplitudes = if bit == 1 { success_amp } else { failure_amp };
    let scale = 1.0 / probability.sqrt();
    amplitudes.mapv_inplace(|z| z * scale);
    let survival = if bit == 1 {
        state.survival_probability() * p_success
    } else {
        state.survival_probability()
    };
    let next = SpectralState::new(amplitudes, survival)?;
    Ok((next, CycleOutcome { bit, probability }))
}

/// Apply all-success branches for a schedule. Returns the filtered state and
/// the joint success probability, which equals success_probability of the
/// initial weights.
pub fn run_postselected(
    state: &SpectralState,
    eig: &EigenDecomposition,
    config: &RodeoConfig,
    schedule: &CycleSchedule,
) -> Result<(SpectralState, f64)> {
    config.validate()?;
    if schedule.len() != config.cycles {
        return Err(Error::DimensionMismatch {
            context: "schedule length vs configured cycles",
            expected: config.cycles,
            found: schedule.len(),
        });
    }
    let mut rng = seeding::rng_from(0);
    let mut cur = state.clone();
    let mut joint = 1.0f64;
    for &t in schedule.times() {
        let (next, outcome) = apply_cycle(&cur, eig, config.filter_energy, t, Some(1), &mut rng)
            .map_err(|err| match err {
                Error::DegenerateBranch { probability, .. } => Error::Underflow { probability },
                other => other,
            })?;
        joint *= outcome.probability;
        if joint < UNDERFLOW_FLOOR {
            return Err(Error::Underflow { probability: joint });
        }
        cur = next;
    }
    Ok((cur, joint))
}

/// Sample a full measurement trajectory; the schedule comes from the config
/// seed and the outcomes from `rng`.
pub fn run_sampled<R: Rng>(
    state: &SpectralState,
    eig: &EigenDecomposition,
    config: &RodeoConfig,
    rng: &mut R,
) -> Result<(Vec<CycleOutcome>, SpectralState)> {
    config.validate()?;
    let schedule = draw_schedule(config.cycles, config.t_rms, config.seed)?;
    let mut cur = state.clone();
    let mut outcomes = Vec::with_capacity(config.cycles);
    for &t in schedule.times() {
        let (next, outcome) = apply_cycle(&cur, eig, config.filter_energy, t, None, rng)?;
        outcomes.push(outcome);
        cur = next;
    }
    Ok((outcomes, cur))
}

/// Residual of a state against eigenvector `target_index`. delta is computed
/// from the orthogonal amplitudes directly so tiny residuals keep full
/// relative precision.
pub fn residual(state: &SpectralState, target_index: usize) -> Result<ResidualReport> {
    if target_index >= state.dim() {
        return Err(Error::IndexOutOfRange {
            index: target_index,
            dim: state.dim(),
        });
    }
    let delta_sq: f64 = state
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_index)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let delta = delta_sq.sqrt();
    Ok(ResidualReport {
        target_index,
        delta,
        overlap: 1.0 - delta_sq,
        per_cycle_trace: Vec::new(),
    })
}

fn check_estimate_args(p: f64, _n: u32) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "overlap probability must lie in (0,1], got {p}"
        )));
    }
    Ok(())
}

/// Arithmetic-mean residual estimate F_A = sqrt(2^{−N}(1−p)/[p + 2^{−N}(1−p)]).
pub fn estimate_fa(p: f64, n: u32) -> Result<f64> {
    check_estimate_args(p, n)?;
    let r = 2.0f64.powi(-(n as i32)) * (1.0 - p);
    Ok((r / (p + r)).sqrt())
}

/// Geometric-mean residual estimate F_G = sqrt(4^{−N}(1−p)/[p + 4^{−N}(1−p)]).
pub fn estimate_fg(p: f64, n: u32) -> Result<f64> {
    check_estimate_args(p, n)?;
    let r = 4.0f64.powi(-(n as i32)) * (1.0 - p);
    Ok((r / (p + r)).sqrt())
}

/// Radius within which a competing occupied level makes the target ambiguous.
pub fn isolation_radius(t_rms: f64) -> f64 {
    1.0 / t_rms
}

/// Post-selected preparation with per-cycle re-centering of the filter energy
/// on the success-probability peak (quadratic fit over {E−δE, E, E+δE},
/// δE = 1/(t_rms·√cycle)).
pub fn prepare_eigenstate(
    state: &SpectralState,
    eig: &EigenDecomposition,
    e_start: f64,
    config: &RodeoConfig,
    schedule_seed: u64,
) -> Result<(SpectralState, ResidualReport)> {
    config.validate()?;
    let weights0 = crate::spectral::weights_of(state, eig)?;
    let merged = weights0.merged();
    let occupied = merged.occupied(OCCUPANCY_FLOOR);
    if occupied.is_empty() {
        return Err(Error::InvalidArgument(
            "state has no occupied level to prepare".into(),
        ));
    }
    let (target_energy, _) = occupied
        .iter()
        .copied()
        .min_by(|a, b| (a.0 - e_start).abs().total_cmp(&(b.0 - e_start).abs()))
        .unwrap();
    let radius = isolation_radius(config.t_rms);
    let competitors: Vec<(f64, f64)> = occupied
        .iter()
        .copied()
        .filter(|&(e_lvl, _)| e_lvl != target_energy && (e_lvl - e_start).abs() <= radius)
        .collect();
    if !competitors.is_empty() {
        return Err(Error::AmbiguousTarget {
            target: target_energy,
            radius,
            competitors,
        });
    }
    let level_tol = 1e-9 * target_energy.abs().max(1.0);
    let level: Vec<usize> = (0..eig.dim())
        .filter(|&j| (eig.energies()[j] - target_energy).abs() <= level_tol)
        .collect();
    let target_index = level[0];

    let schedule = draw_schedule(config.cycles, config.t_rms, schedule_seed)?;
    let mut rng = seeding::rng_from(0);
    let mut cur = state.clone();
    let mut e_cur = e_start;
    let mut trace = Vec::with_capacity(config.cycles + 1);
    {
        let delta = (1.0 - cur.weight_of(&level)).max(0.0).sqrt();
        trace.push(PreparationStep {
            cycle: 0,
            delta,
            filter_energy: e_cur,
            survival_probability: cur.survival_probability(),
        });
    }
    for (k, &t) in schedule.times().iter().enumerate() {
        let cycle = k + 1;
        let (next, _) = apply_cycle(&cur, eig, e_cur, t, Some(1), &mut rng)?;
        cur = next;
        let orthogonal: f64 = cur
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(j, _)| !level.contains(j))
            .map(|(_, a)| a.norm_sqr())
            .sum();
        let delta = orthogonal.sqrt();
        trace.push(PreparationStep {
            cycle,
            delta,
            filter_energy: e_cur,
            survival_probability: cur.survival_probability(),
        });
        if config.recenter {
            let de = 1.0 / (config.t_rms * (cycle as f64).sqrt());
            let realized = &schedule.times()[..cycle];
            let joint_at = |e_probe: f64| -> f64 {
                weights0
                    .energies()
                    .iter()
                    .zip(weights0.weights())
                    .map(|(&e_j, &w)| {
                        let p: f64 = realized
                            .iter()
                            .map(|&tn| {
                                let c = (0.5 * (e_j - e_probe) * tn).cos();
                                c * c
                            })
                            .product();
                        w * p
                    })
                    .sum()
            };
            let f_lo = joint_at(e_cur - de);
            let f_mid = joint_at(e_cur);
            let f_hi = joint_at(e_cur + de);
            let curvature = f_lo - 2.0 * f_mid + f_hi;
            if curvature < 0.0 {
                let vertex = 0.5 * (f_lo - f_hi) / curvature;
                e_cur += vertex.clamp(-1.0, 1.0) * de;
            }
        }
    }
    let delta = trace.last().unwrap().delta;
    let report = ResidualReport {
        target_index,
        delta,
        overlap: 1.0 - delta * delta,
        per_cycle_trace: trace,
    };
    Ok((cur, report))
}

/// Explicit circuit reference: one logically reused ancilla, Hadamard,
/// controlled e^{−iHt_n}, phase e^{iEt_n} on |1⟩, Hadamard, projection
/// onto |1⟩. Joint statevector of dimension 2d simulated per cycle.
pub fn full_statevector_reference(
    h: &HermitianOperator,
    psi: &ComplexVector,
    e: f64,
    schedule: &CycleSchedule,
) -> Result<(ComplexVector, f64)> {
    let d = h.dim();
    if d > MAX_REFERENCE_DIM {
        return Err(Error::SizeLimit {
            context: "statevector reference",
            requested: d,
            max: MAX_REFERENCE_DIM,
        });
    }
    if psi.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "statevector reference",
            expected: d,
            found: psi.dim(),
        });
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Unnormalized { norm, tol: 1e-10 });
    }
    let eig = eigendecompose(h)?;
    let apply_u = |v: &Array1<Complex64>, t: f64| -> Array1<Complex64> {
        // e^{−iHt} v via the eigendecomposition.
        let mut coeffs = Array1::<Complex64>::zeros(d);
        for j in 0..d {
            let mut a = Complex64::new(0.0, 0.0);
            for (vv, p) in eig.vector(j).iter().zip(v.iter()) {
                a += vv.conj() * p;
            }
            coeffs[j] = a * Complex64::from_polar(1.0, -eig.energies()[j] * t);
        }
        eig.vectors().dot(&coeffs)
    };
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut obj = psi.entries().clone();
    let mut joint = 1.0f64;
    for &t in schedule.times() {
        // Ancilla starts in |1⟩: block0 = 0, block1 = obj.
        // Hadamard: |1⟩ → (|0⟩ − |1⟩)/√2.
        let mut block0 = obj.mapv(|z| z * inv_sqrt2);
        let mut block1 = obj.mapv(|z| z * (-inv_sqrt2));
        // Controlled evolution on the ancilla-|1⟩ half.
        block1 = apply_u(&block1, t);
        // Phase gate multiplies e^{iEt} onto |1⟩.
        let ph = Complex64::from_polar(1.0, e * t);
        block1.mapv_inplace(|z| z * ph);
        // Second Hadamard.
        let fin1: Array1<Complex64> = block0
            .iter()
            .zip(block1.iter())
            .map(|(a, b)| (a - b) * inv_sqrt2)
            .collect();
        block0 = block0
            .iter()
            .zip(block1.iter())
            .map(|(a, b)| (a + b) * inv_sqrt2)
            .collect();
        let _ = block0;
        // Measure |1⟩ and post-select.
        let p1: f64 = fin1.iter().map(|z| z.norm_sqr()).sum();
        if p1 < UNDERFLOW_FLOOR {
            return Err(Error::Underflow { probability: p1 });
        }
        joint *= p1;
        let scale = 1.0 / p1.sqrt();
        obj = fin1.mapv(|z| z * scale);
    }
    Ok((ComplexVector::new(obj)?, joint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::project_to_eigenbasis;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn diag_eig(energies: &[f64]) -> EigenDecomposition {
        let d = energies.len();
        let mut m = Array2::<f64>::zeros((d, d));
        for (i, &e) in energies.iter().enumerate() {
            m[(i, i)] = e;
        }
        let h = HermitianOperator::from_real(m).unwrap();
        // Diagonal matrices may reorder; rebuild so index i ↔ energies[i].
        let eig = eigendecompose(&h).unwrap();
        assert!(energies.windows(2).all(|w| w[0] <= w[1]), "test helper wants sorted input");
        eig
    }

    fn unit_state(d: usize, index: usize) -> SpectralState {
        let mut a = Array1::<Complex64>::zeros(d);
        a[index] = Complex64::new(1.0, 0.0);
        SpectralState::new(a, 1.0).unwrap()
    }

    fn two_component(w0: f64) -> SpectralState {
        let a = ndarray::array![
            Complex64::new(w0.sqrt(), 0.0),
            Complex64::new((1.0 - w0).sqrt(), 0.0)
        ];
        SpectralState::new(a, 1.0).unwrap()
    }

    #[test]
    fn schedule_determinism_and_scaling() {
        let a = draw_schedule(3, 5.0, 42).unwrap();
        let b = draw_schedule(3, 5.0, 42).unwrap();
        assert_eq!(a.times(), b.times());
        let k = draw_schedule(64, 1.25, 7).unwrap();
        let k2 = draw_schedule(64, 2.5, 7).unwrap();
        for (x, y) in k.times().iter().zip(k2.times()) {
            assert_eq!(*y, 2.0 * x);
        }
    }

    #[test]
    fn schedule_pooled_statistics() {
        let n = 100_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for chunk in 0..100 {
            let s = draw_schedule(n / 100, 10.0, seeding::derive_seed(3, chunk, 0)).unwrap();
            for &t in s.times() {
                sum += t;
                sum_sq += t * t;
            }
        }
        let mean = sum / n as f64;
        let rms = (sum_sq / n as f64).sqrt();
        assert!(mean.abs() < 0.1, "pooled mean {mean}");
        assert!((9.9..=10.1).contains(&rms), "pooled rms {rms}");
    }

    #[test]
    fn factor_examples() {
        let (s, f) = cycle_factors(2.0, 2.0, 1.7);
        assert_abs_diff_eq!((s - Complex64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.norm(), 0.0, epsilon = 1e-15);

        let (s, _) = cycle_factors(1.0, 0.0, std::f64::consts::PI);
        assert!(s.norm() < 1e-15);

        let (s, _) = cycle_factors(1.0, 0.0, std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!((s - Complex64::new(0.5, -0.5)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.norm_sqr(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn success_probability_simple() {
        let w = SpectralWeights::new(vec![3.0], vec![1.0]).unwrap();
        let sched = draw_schedule(5, 2.0, 1).unwrap();
        assert_abs_diff_eq!(success_probability(&w, 3.0, &sched), 1.0, epsilon = 1e-12);

        let w = SpectralWeights::new(vec![1.0], vec![1.0]).unwrap();
        let sched = CycleSchedule {
            times: vec![std::f64::consts::FRAC_PI_2],
            t_rms: 1.0,
            seed: 0,
        };
        assert_abs_diff_eq!(success_probability(&w, 0.0, &sched), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn ln_success_slope_reaches_asymptote() {
        // Mean of ln P_N at θ_RMS = 3.0 falls by ln 4 per cycle.
        let w = SpectralWeights::new(vec![6.0], vec![1.0]).unwrap();
        let theta_rms = 3.0;
        let t_rms = 2.0 * theta_rms / 6.0;
        let schedules = 2000;
        let ns = [4usize, 6, 8, 10, 12];
        let mut means = Vec::new();
        for (i, &n) in ns.iter().enumerate() {
            let mut acc = 0.0;
            for s in 0..schedules {
                let sched =
                    draw_schedule(n, t_rms, seeding::derive_seed(11, i as u64, s)).unwrap();
                acc += success_probability(&w, 0.0, &sched).ln();
            }
            means.push(acc / schedules as f64);
        }
        let slope = (means.last().unwrap() - means.first().unwrap())
            / (ns[ns.len() - 1] - ns[0]) as f64;
        let target = -(4.0f64.ln());
        assert!(
            (slope - target).abs() < 0.1 * target.abs(),
            "slope {slope} vs {target}"
        );
    }

    #[test]
    fn expected_success_cases() {
        let w = SpectralWeights::new(vec![2.0], vec![1.0]).unwrap();
        assert_abs_diff_eq!(expected_success_probability(&w, 2.0, 7, 3.0), 1.0, epsilon = 1e-14);
        // Far off resonance the per-cycle factor is 1/2.
        let far = expected_success_probability(&w, 200.0, 15, 3.0);
        let want = 2.0f64.powi(-15);
        assert!((far - want).abs() / want < 0.01);
    }

    #[test]
    fn expected_matches_monte_carlo() {
        let w = SpectralWeights::new(vec![-1.0, 0.4, 2.3], vec![0.2, 0.5, 0.3]).unwrap();
        let (e, n, t_rms) = (0.3, 4, 1.3);
        let m = 10_000;
        let mut vals = Vec::with_capacity(m);
        for s in 0..m {
            let sched = draw_schedule(n, t_rms, seeding::derive_seed(23, 0, s as u64)).unwrap();
            vals.push(success_probability(&w, e, &sched));
        }
        let mean: f64 = vals.iter().sum::<f64>() / m as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
        let se = (var / m as f64).sqrt();
        let expect = expected_success_probability(&w, e, n, t_rms);
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "MC {mean} vs closed form {expect}, 3·SE {}",
            3.0 * se
        );
    }

    #[test]
    fn apply_cycle_pure_on_resonance() {
        let eig = diag_eig(&[1.0, 2.0]);
        let state = unit_state(2, 1);
        let mut rng = seeding::rng_from(0);
        let (next, out) = apply_cycle(&state, &eig, 2.0, 1.3, None, &mut rng).unwrap();
        assert_eq!(out.bit, 1);
        assert_abs_diff_eq!(out.probability, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            (next.amplitudes()[1] - state.amplitudes()[1]).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn apply_cycle_forced_collapse() {
        // (E_1−E)t = 0 and (E_2−E)t = π: success keeps component 1 only.
        let eig = diag_eig(&[0.0, 1.0]);
        let state = two_component(0.5);
        let mut rng = seeding::rng_from(0);
        let (s1, o1) =
            apply_cycle(&state, &eig, 0.0, std::f64::consts::PI, Some(1), &mut rng).unwrap();
        assert_abs_diff_eq!(o1.probability, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s1.amplitudes()[0].norm(), 1.0, epsilon = 1e-12);
        assert!(s1.amplitudes()[1].norm() < 1e-12);
        assert_abs_diff_eq!(s1.survival_probability(), 0.5, epsilon = 1e-14);

        let (s0, o0) =
            apply_cycle(&state, &eig, 0.0, std::f64::consts::PI, Some(0), &mut rng).unwrap();
        assert_abs_diff_eq!(o0.probability, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s0.amplitudes()[1].norm(), 1.0, epsilon = 1e-12);
        assert!(s0.amplitudes()[0].norm() < 1e-12);
        // Failure path leaves the survival bookkeeping alone.
        assert_abs_diff_eq!(s0.survival_probability(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn apply_cycle_degenerate_branch_errors() {
        let eig = diag_eig(&[0.0]);
        let state = unit_state(1, 0);
        let mut rng = seeding::rng_from(0);
        // On resonance the failure branch has probability 0.
        let err = apply_cycle(&state, &eig, 0.0, 1.0, Some(0), &mut rng);
        assert!(matches!(err, Err(Error::DegenerateBranch { bit: 0, .. })));
    }

    #[test]
    fn postselected_pure_target() {
        let eig = diag_eig(&[-4.0, 1.0]);
        let state = unit_state(2, 0);
        let cfg = RodeoConfig {
            cycles: 6,
            t_rms: 2.0,
            filter_energy: -4.0,
            seed: 5,
            recenter: false,
        };
        let sched = draw_schedule(6, 2.0, 9).unwrap();
        let (out, joint) = run_postselected(&state, &eig, &cfg, &sched).unwrap();
        assert_abs_diff_eq!(joint, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.amplitudes()[0].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn postselected_joint_equals_formula_and_commutes() {
        let eig = diag_eig(&[-1.5, 0.2, 2.8]);
        let a = ndarray::array![
            Complex64::new(0.6, 0.1),
            Complex64::new(0.3, -0.5),
            Complex64::new(0.2, 0.51)
        ];
        let norm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let state = SpectralState::new(a.mapv(|z| z / norm), 1.0).unwrap();
        let w = crate::spectral::weights_of(&state, &eig).unwrap();
        let cfg = RodeoConfig {
            cycles: 4,
            t_rms: 1.7,
            filter_energy: 0.2,
            seed: 0,
            recenter: false,
        };
        let sched = draw_schedule(4, 1.7, 31).unwrap();
        let (out_a, joint) = run_postselected(&state, &eig, &cfg, &sched).unwrap();
        let formula = success_probability(&w, 0.2, &sched);
        assert_abs_diff_eq!(joint, formula, epsilon = 1e-12);

        let mut rev = sched.clone();
        rev.times.reverse();
        let (out_b, joint_b) = run_postselected(&state, &eig, &cfg, &rev).unwrap();
        assert_abs_diff_eq!(joint, joint_b, epsilon = 1e-12);
        for j in 0..3 {
            assert!((out_a.amplitudes()[j] - out_b.amplitudes()[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn sampled_trajectories() {
        let eig = diag_eig(&[0.5]);
        let state = unit_state(1, 0);
        let cfg = RodeoConfig {
            cycles: 8,
            t_rms: 1.0,
            filter_energy: 0.5,
            seed: 3,
            recenter: false,
        };
        let mut rng = seeding::rng_from(17);
        let (outs, _) = run_sampled(&state, &eig, &cfg, &mut rng).unwrap();
        assert!(outs.iter().all(|o| o.bit == 1));

        // Off-resonant antinode: (E_j−E)t = π each cycle forces failure.
        let eig2 = diag_eig(&[0.0, 1.0]);
        let sched_state = unit_state(2, 1);
        let mut all0 = sched_state.clone();
        let mut rng2 = seeding::rng_from(4);
        for _ in 0..5 {
            let (next, out) =
                apply_cycle(&all0, &eig2, 0.0, std::f64::consts::PI, None, &mut rng2).unwrap();
            assert_eq!(out.bit, 0);
            all0 = next;
        }
    }

    #[test]
    fn sampled_frequency_matches_formula() {
        let eig = diag_eig(&[-1.0, 1.0, 2.5]);
        let a = ndarray::array![
            Complex64::new(0.5f64.sqrt(), 0.0),
            Complex64::new(0.3f64.sqrt(), 0.0),
            Complex64::new(0.2f64.sqrt(), 0.0)
        ];
        let state = SpectralState::new(a, 1.0).unwrap();
        let w = crate::spectral::weights_of(&state, &eig).unwrap();
        let trials = 10_000;
        let mut all_success = 0usize;
        let cfg = RodeoConfig {
            cycles: 3,
            t_rms: 1.1,
            filter_energy: 1.0,
            seed: 77,
            recenter: false,
        };
        let sched = draw_schedule(cfg.cycles, cfg.t_rms, cfg.seed).unwrap();
        for k in 0..trials {
            let mut rng = seeding::rng_from(seeding::derive_seed(99, 0, k as u64));
            let mut cur = state.clone();
            let mut ok = true;
            for &t in sched.times() {
                let (next, out) = apply_cycle(&cur, &eig, cfg.filter_energy, t, None, &mut rng).unwrap();
                if out.bit == 0 {
                    ok = false;
                    break;
                }
                cur = next;
            }
            if ok {
                all_success += 1;
            }
        }
        let p_hat = all_success as f64 / trials as f64;
        let p = success_probability(&w, cfg.filter_energy, &sched);
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (p_hat - p).abs() <= 3.0 * se,
            "empirical {p_hat} vs formula {p} (3·SE {})",
            3.0 * se
        );
    }

    #[test]
    fn residual_arithmetic() {
        let a = ndarray::array![
            Complex64::new(0.110f64.sqrt(), 0.0),
            Complex64::new(0.890f64.sqrt(), 0.0)
        ];
        let state = SpectralState::new(a, 1.0).unwrap();
        let rep = residual(&state, 0).unwrap();
        assert_abs_diff_eq!(rep.delta, 0.890f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(rep.delta * rep.delta + rep.overlap, 1.0, epsilon = 1e-12);

        let b = ndarray::array![
            Complex64::new(0.997f64.sqrt(), 0.0),
            Complex64::new(0.003f64.sqrt(), 0.0)
        ];
        let rep = residual(&SpectralState::new(b, 1.0).unwrap(), 0).unwrap();
        assert!((rep.delta - 0.0548).abs() < 1e-4);

        let pure = unit_state(3, 2);
        assert_eq!(residual(&pure, 2).unwrap().delta, 0.0);
        assert!(residual(&pure, 9).is_err());
    }

    #[test]
    fn estimate_values() {
        assert_abs_diff_eq!(estimate_fa(0.3, 0).unwrap(), 0.7f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(estimate_fg(0.3, 0).unwrap(), 0.7f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(estimate_fa(0.110, 3).unwrap(), 0.709_101, epsilon = 5e-7);
        assert_abs_diff_eq!(estimate_fg(0.110, 3).unwrap(), 0.335_010_5, epsilon = 1e-6);
        assert!(estimate_fa(1.0, 10).unwrap() < 1e-12);
        assert!(estimate_fg(1.0, 10).unwrap() < 1e-12);
        assert!(estimate_fa(0.0, 3).is_err());
        // Decreasing in N.
        let mut prev = estimate_fa(0.2, 0).unwrap();
        for n in 1..12 {
            let cur = estimate_fa(0.2, n).unwrap();
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn prepare_on_target_never_moves() {
        let eig = diag_eig(&[-2.0, 3.0]);
        let state = unit_state(2, 0);
        let cfg = RodeoConfig {
            cycles: 5,
            t_rms: 1.0,
            filter_energy: -2.0,
            seed: 0,
            recenter: true,
        };
        let (out, rep) = prepare_eigenstate(&state, &eig, -2.0, &cfg, 12).unwrap();
        assert_eq!(rep.target_index, 0);
        for step in &rep.per_cycle_trace {
            assert_eq!(step.filter_energy, -2.0);
            assert_eq!(step.delta, 0.0);
        }
        assert_abs_diff_eq!(out.amplitudes()[0].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn prepare_recenters_toward_peak() {
        // Two levels split far beyond the filter bandwidth.
        let eig = diag_eig(&[0.0, 40.0]);
        let state = two_component(0.6);
        let t_rms = 1.0;
        let cfg = RodeoConfig {
            cycles: 8,
            t_rms,
            filter_energy: 0.0,
            seed: 0,
            recenter: true,
        };
        let e_start = 0.2 / t_rms;
        let (_, rep) = prepare_eigenstate(&state, &eig, e_start, &cfg, 1).unwrap();
        let by5 = rep
            .per_cycle_trace
            .iter()
            .find(|s| s.cycle == 5)
            .unwrap()
            .filter_energy;
        assert!(
            by5.abs() <= 0.05 / t_rms,
            "re-centered filter energy {by5} still off target"
        );
        // Across many schedules, most trajectories settle on the level; a few
        // can lock onto a false local maximum of the cos² product.
        let cfg12 = RodeoConfig {
            cycles: 12,
            ..cfg
        };
        let mut settled = 0;
        for seed in 1..=24u64 {
            let (_, rep) = prepare_eigenstate(&state, &eig, e_start, &cfg12, seed).unwrap();
            if rep.per_cycle_trace.last().unwrap().filter_energy.abs() <= 0.01 {
                settled += 1;
            }
        }
        assert!(settled >= 18, "only {settled}/24 schedules settled");
    }

    #[test]
    fn prepare_rejects_ambiguous_target() {
        let eig = diag_eig(&[0.0, 0.4]);
        let state = two_component(0.5);
        let cfg = RodeoConfig {
            cycles: 3,
            t_rms: 1.0,
            filter_energy: 0.0,
            seed: 0,
            recenter: true,
        };
        match prepare_eigenstate(&state, &eig, 0.0, &cfg, 1) {
            Err(Error::AmbiguousTarget { competitors, .. }) => {
                assert_eq!(competitors.len(), 1);
                assert_abs_diff_eq!(competitors[0].0, 0.4, epsilon = 1e-12);
            }
            other => panic!("expected AmbiguousTarget, got {other:?}"),
        }
    }

    #[test]
    fn statevector_scalar_and_identity_cases() {
        let h = HermitianOperator::from_real(ndarray::array![[0.9]]).unwrap();
        let psi = ComplexVector::basis(1, 0).unwrap();
        let sched = draw_schedule(6, 1.4, 8).unwrap();
        let (_, joint) = full_statevector_reference(&h, &psi, 0.2, &sched).unwrap();
        let expect: f64 = sched
            .times()
            .iter()
            .map(|&t| {
                let c = (0.5 * (0.9 - 0.2) * t).cos();
                c * c
            })
            .product();
        assert_abs_diff_eq!(joint, expect, epsilon = 1e-12);

        let h0 = HermitianOperator::from_real(Array2::zeros((4, 4))).unwrap();
        let mut v = Array1::<Complex64>::zeros(4);
        v[0] = Complex64::new(0.5, 0.5);
        v[3] = Complex64::new(0.5, -0.5);
        let psi = ComplexVector::new(v).unwrap();
        let (out, joint) = full_statevector_reference(&h0, &psi, 0.0, &sched).unwrap();
        assert_abs_diff_eq!(joint, 1.0, epsilon = 1e-12);
        for (a, b) in out.entries().iter().zip(psi.entries().iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn engine_matches_circuit_reference() {
        for case in 0..6u64 {
            let d = 2 + (case as usize % 5) * 3;
            let mut rng = seeding::rng_from(1000 + case);
            let mut m = Array2::<Complex64>::zeros((d, d));
            for i in 0..d {
                m[(i, i)] = Complex64::new(rng.random::<f64>() * 4.0 - 2.0, 0.0);
                for j in (i + 1)..d {
                    let z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            let h = HermitianOperator::new(m).unwrap();
            let mut v = Array1::<Complex64>::zeros(d);
            for e in v.iter_mut() {
                *e = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.mapv_inplace(|z| z / norm);
            let psi = ComplexVector::new(v).unwrap();
            let e_filter = rng.random::<f64>() * 2.0 - 1.0;
            let n = 1 + (case as usize) % 4;
            let sched = draw_schedule(n, 1.2, 500 + case).unwrap();

            let eig = eigendecompose(&h).unwrap();
            let state = project_to_eigenbasis(&psi, &eig).unwrap();
            let cfg = RodeoConfig {
                cycles: n,
                t_rms: 1.2,
                filter_energy: e_filter,
                seed: 0,
                recenter: false,
            };
            let (out_state, joint_engine) = run_postselected(&state, &eig, &cfg, &sched).unwrap();
            let engine_vec = crate::spectral::reconstruct(&out_state, &eig).unwrap();
            let (circuit_vec, joint_circuit) =
                full_statevector_reference(&h, &psi, e_filter, &sched).unwrap();
            assert_abs_diff_eq!(joint_engine, joint_circuit, epsilon = 1e-10);
            for (a, b) in engine_vec.entries().iter().zip(circuit_vec.entries().iter()) {
                assert!((a - b).norm() < 1e-10, "amplitude mismatch case {case}");
            }
        }
    }

    #[test]
    fn uniform_theta_log_mean_is_minus_ln4() {
        let mut rng = seeding::rng_from(2024);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            acc += theta.cos().powi(2).max(1e-320).ln();
        }
        let mean = acc / n as f64;
        let target = -(4.0f64.ln());
        assert!(
            (mean - target).abs() < 0.01 * target.abs(),
            "mean {mean} vs {target}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn branch_completeness(e_j in -50.0f64..50.0, e in -50.0f64..50.0, t in -20.0f64..20.0) {
            let (s, f) = cycle_factors(e_j, e, t);
            prop_assert!((s.norm_sqr() + f.norm_sqr() - 1.0).abs() <= 1e-14);
            let c = (0.5 * (e_j - e) * t).cos();
            prop_assert!((s.norm_sqr() - c * c).abs() <= 1e-14);
        }

        #[test]
        fn monotone_suppression(offset in 0.3f64..5.0, t_rms in 0.2f64..4.0) {
            let w = SpectralWeights::new(vec![offset], vec![1.0]).unwrap();
            let mut prev = 1.0f64 + 1e-9;
            for n in 1..=12 {
                let cur = expected_success_probability(&w, 0.0, n, t_rms);
                prop_assert!(cur < prev);
                prev = cur;
            }
        }

        #[test]
        fn postselected_norm_and_range(seed in 0u64..10_000) {
            let eig = diag_eig(&[-1.0, 0.5, 2.0]);
            let a = ndarray::array![
                Complex64::new(0.5f64.sqrt(), 0.0),
                Complex64::new(0.25f64.sqrt(), 0.0),
                Complex64::new(0.25f64.sqrt(), 0.0)
            ];
            let state = SpectralState::new(a, 1.0).unwrap();
            let cfg = RodeoConfig { cycles: 3, t_rms: 1.0, filter_energy: 0.5, seed, recenter: false };
            let sched = draw_schedule(3, 1.0, seed).unwrap();
            let (out, joint) = run_postselected(&state, &eig, &cfg, &sched).unwrap();
            let norm_sq: f64 = out.amplitudes().iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((norm_sq - 1.0).abs() <= 1e-10);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&joint));
        }
    }
}
