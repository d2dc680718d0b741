//! Potential function and the per-AP power equilibrium solvers.
//!
//! For a fixed association the game splits into one independent subgame per
//! AP. Each subgame has the concave potential
//! `P_w(p) = sum_k ln(n(k) + sum_i g_ik p_ik)` whose maximizers are exactly
//! the NE power profiles, so any NE finder doubles as a potential maximizer.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::netmodel::NetworkSnapshot;
use crate::radio::{interference, waterfill, AssociationProfile, PowerProfile};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_A_IWF_MAX_ITER: usize = 100_000;
pub const DEFAULT_S_IWF_MAX_SWEEPS: usize = 10_000;

/// Step sizes for the averaged solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `alpha_t = 1 / (t + offset)`.
    Harmonic { offset: u32 },
    /// `alpha_t = scale / (t + offset)` with `scale < offset`: roughly constant
    /// steps for the first `scale` iterations, harmonic decay afterwards.
    ScaledHarmonic { scale: u32, offset: u32 },
}

impl Default for StepSchedule {
    /// `alpha_t = 1000 / (t + 2000)`. Plain `1 / (t + 2)` decays too fast to
    /// cross the flat ridges of ill-conditioned subgames within the cap.
    fn default() -> Self {
        StepSchedule::ScaledHarmonic {
            scale: 1000,
            offset: 2000,
        }
    }
}

impl StepSchedule {
    pub fn alpha(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Harmonic { offset } => 1.0 / (t as f64 + offset as f64),
            StepSchedule::ScaledHarmonic { scale, offset } => scale as f64 / (t as f64 + offset as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    AIwf,
    #[default]
    SIwf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    /// Potential of the AP before the first iteration and after each one.
    pub potential_trace: Vec<f64>,
    #[serde(skip)]
    pub wallclock: Duration,
}

impl SolveReport {
    fn trivial(potential: f64) -> Self {
        Self {
            converged: true,
            iterations: 0,
            final_residual: 0.0,
            potential_trace: vec![potential],
            wallclock: Duration::ZERO,
        }
    }
}

/// Potential of the subgame at `ap`.
pub fn potential_ap(s: &NetworkSnapshot, p: &PowerProfile, a: &AssociationProfile, ap: usize) -> f64 {
    let members = a.members(ap);
    s.channels(ap)
        .iter()
        .map(|&k| {
            let received: f64 = members.iter().map(|&i| s.gain(i, k) * p.get(i, k)).sum();
            (s.noise(k) + received).ln()
        })
        .sum()
}

pub fn system_potential(s: &NetworkSnapshot, p: &PowerProfile, a: &AssociationProfile) -> f64 {
    (0..s.n_aps()).map(|w| potential_ap(s, p, a, w)).sum()
}

/// Potential of `ap` with no transmitters.
pub fn noise_potential(s: &NetworkSnapshot, ap: usize) -> f64 {
    s.channels(ap).iter().map(|&k| s.noise(k).ln()).sum()
}

/// Best response of `cu` at `ap` against the others' current powers.
fn best_response(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    p: &PowerProfile,
    cu: usize,
    ap: usize,
) -> Result<Vec<f64>> {
    let ipn = interference(s, a, p, cu, ap);
    Ok(waterfill(&s.gains_on(cu, ap), &ipn, s.budget(cu))?.power)
}

fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
}

/// NE residual of the subgame at `ap`: the largest sup-norm distance between a
/// member's power and its water-filling best response.
pub fn ne_residual(s: &NetworkSnapshot, a: &AssociationProfile, p: &PowerProfile, ap: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in a.members(ap) {
        let br = best_response(s, a, p, i, ap)?;
        worst = worst.max(sup_dist(&p.on_ap(s, i, ap), &br));
    }
    Ok(worst)
}

/// NE residual over all APs.
pub fn ne_residual_all(s: &NetworkSnapshot, a: &AssociationProfile, p: &PowerProfile) -> Result<f64> {
    let mut worst = 0.0f64;
    for w in 0..s.n_aps() {
        worst = worst.max(ne_residual(s, a, p, w)?);
    }
    Ok(worst)
}

/// Averaged iterative water-filling on the subgame at `ap`. Every member starts
/// at its best response to silence, then all members move simultaneously
/// toward their current best responses with step `alpha_t`. Only the rows of
/// members of `ap` are populated.
pub fn a_iwf(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    ap: usize,
    schedule: StepSchedule,
    tol: f64,
    max_iter: usize,
) -> Result<(PowerProfile, SolveReport)> {
    let start = Instant::now();
    let members = a.members(ap);
    let mut p = PowerProfile::zeros(s.n_cus(), s.n_channels());
    if members.is_empty() {
        return Ok((p, SolveReport::trivial(noise_potential(s, ap))));
    }
    // first step is a full best response to silence
    for &i in &members {
        let br = best_response(s, a, &p, i, ap)?;
        p.set_on_ap(s, i, ap, &br);
    }
    let mut trace = vec![potential_ap(s, &p, a, ap)];
    let mut residual = f64::INFINITY;
    let mut t = 0;
    while t < max_iter {
        let responses = members
            .iter()
            .map(|&i| best_response(s, a, &p, i, ap))
            .collect::<Result<Vec<_>>>()?;
        residual = members
            .iter()
            .zip(&responses)
            .map(|(&i, br)| sup_dist(&p.on_ap(s, i, ap), br))
            .fold(0.0, f64::max);
        if residual < tol {
            break;
        }
        let alpha = schedule.alpha(t);
        for (&i, br) in members.iter().zip(&responses) {
            let next: Vec<f64> = p
                .on_ap(s, i, ap)
                .iter()
                .zip(br)
                .map(|(cur, b)| (1.0 - alpha) * cur + alpha * b)
                .collect();
            p.set_on_ap(s, i, ap, &next);
        }
        t += 1;
        trace.push(potential_ap(s, &p, a, ap));
    }
    if t == max_iter {
        residual = ne_residual(s, a, &p, ap)?;
    }
    Ok((
        p,
        SolveReport {
            converged: residual < tol,
            iterations: t,
            final_residual: residual,
            potential_trace: trace,
            wallclock: start.elapsed(),
        },
    ))
}

/// Sequential iterative water-filling on the subgame at `ap`, started from
/// zero power. Members take turns in index order; one sweep gives every member
/// one turn. The potential never decreases.
pub fn s_iwf(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    ap: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<(PowerProfile, SolveReport)> {
    let p = PowerProfile::zeros(s.n_cus(), s.n_channels());
    s_iwf_from(s, a, ap, p, tol, max_sweeps)
}

/// [`s_iwf`] started from the given powers.
pub fn s_iwf_from(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    ap: usize,
    mut p: PowerProfile,
    tol: f64,
    max_sweeps: usize,
) -> Result<(PowerProfile, SolveReport)> {
    let start = Instant::now();
    let members = a.members(ap);
    if members.is_empty() {
        return Ok((p, SolveReport::trivial(noise_potential(s, ap))));
    }
    let mut trace = vec![potential_ap(s, &p, a, ap)];
    let mut residual = ne_residual(s, a, &p, ap)?;
    let mut sweeps = 0;
    while residual >= tol && sweeps < max_sweeps {
        for &i in &members {
            let br = best_response(s, a, &p, i, ap)?;
            p.set_on_ap(s, i, ap, &br);
        }
        sweeps += 1;
        trace.push(potential_ap(s, &p, a, ap));
        residual = ne_residual(s, a, &p, ap)?;
    }
    Ok((
        p,
        SolveReport {
            converged: residual < tol,
            iterations: sweeps,
            final_residual: residual,
            potential_trace: trace,
            wallclock: start.elapsed(),
        },
    ))
}

/// Runs the chosen solver with the default caps.
pub fn solve_ap(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    ap: usize,
    solver: InnerSolver,
    tol: f64,
) -> Result<(PowerProfile, SolveReport)> {
    match solver {
        InnerSolver::AIwf => a_iwf(s, a, ap, StepSchedule::default(), tol, DEFAULT_A_IWF_MAX_ITER),
        InnerSolver::SIwf => s_iwf(s, a, ap, tol, DEFAULT_S_IWF_MAX_SWEEPS),
    }
}

/// NE powers for every AP under `a`, merged into one profile.
pub fn solve_all(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    solver: InnerSolver,
    tol: f64,
) -> Result<(PowerProfile, Vec<SolveReport>)> {
    let mut p = PowerProfile::zeros(s.n_cus(), s.n_channels());
    let mut reports = Vec::with_capacity(s.n_aps());
    for w in 0..s.n_aps() {
        let (pw, report) = solve_ap(s, a, w, solver, tol)?;
        for i in a.members(w) {
            p.power[i] = pw.power[i].clone();
        }
        reports.push(report);
    }
    Ok((p, reports))
}

/// Equilibrium potential of `ap`: the maximum of its potential, reached by
/// S-IWF. Returns the value and the maximizing powers.
pub fn equilibrium_potential(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    ap: usize,
    tol: f64,
) -> Result<(f64, PowerProfile)> {
    if a.members(ap).is_empty() {
        return Ok((noise_potential(s, ap), PowerProfile::zeros(s.n_cus(), s.n_channels())));
    }
    let (p, _) = s_iwf(s, a, ap, tol, DEFAULT_S_IWF_MAX_SWEEPS)?;
    Ok((potential_ap(s, &p, a, ap), p))
}

/// Sum of the per-AP equilibrium potentials.
pub fn system_equilibrium_potential(s: &NetworkSnapshot, a: &AssociationProfile, tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for w in 0..s.n_aps() {
        total += equilibrium_potential(s, a, w, tol)?.0;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{generate_snapshot, NetworkParams};
    use crate::radio::{current_rate, rate};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn single_cu() -> NetworkSnapshot {
        NetworkSnapshot::from_parts(vec![vec![0, 1]], vec![vec![1.0, 1.0]], vec![1.0, 1.0], vec![4.0]).unwrap()
    }

    #[test]
    fn schedule_is_in_unit_interval() {
        for sch in [StepSchedule::default(), StepSchedule::Harmonic { offset: 2 }] {
            assert_eq!(sch.alpha(0), 0.5);
            assert!((0..100_000).all(|t| sch.alpha(t) > 0.0 && sch.alpha(t) < 1.0));
            assert!(sch.alpha(10_000_000) < 1e-3);
        }
    }

    #[test]
    fn potential_examples() {
        let s = single_cu();
        let a = AssociationProfile(vec![0]);
        let zero = PowerProfile::zeros(1, 2);
        assert_eq!(potential_ap(&s, &zero, &a, 0), 0.0);
        let mut p = zero.clone();
        p.set_on_ap(&s, 0, 0, &[3.0, 1.0]);
        assert!(close(potential_ap(&s, &p, &a, 0), 4f64.ln() + 2f64.ln(), 1e-15));
        // one CU: potential above the noise floor is its rate
        let r = current_rate(&s, &a, &p, 0);
        assert!(close(potential_ap(&s, &p, &a, 0) - noise_potential(&s, 0), r, 1e-14));
    }

    #[test]
    fn system_potential_adds_over_aps() {
        let s = generate_snapshot(&NetworkParams::new(4, 2, 6, 5)).unwrap();
        let a = AssociationProfile(vec![0, 1, 1, 0]);
        let (p, _) = solve_all(&s, &a, InnerSolver::SIwf, 1e-9).unwrap();
        let sum = potential_ap(&s, &p, &a, 0) + potential_ap(&s, &p, &a, 1);
        assert!(close(system_potential(&s, &p, &a), sum, 1e-12));
        let zero = PowerProfile::zeros(4, 6);
        let floor: f64 = s.noises().iter().map(|n| n.ln()).sum();
        assert!(close(system_potential(&s, &zero, &a), floor, 1e-12));
    }

    #[test]
    fn single_cu_solvers_hit_waterfill() {
        let s = NetworkSnapshot::from_parts(
            vec![vec![0, 1, 2]],
            vec![vec![1.0, 0.5, 2.0]],
            vec![1.0, 1.0, 0.5],
            vec![2.0],
        )
        .unwrap();
        let a = AssociationProfile(vec![0]);
        let wf = waterfill(&s.gains_on(0, 0), &[1.0, 1.0, 0.5], 2.0).unwrap();
        let (ps, rs) = s_iwf(&s, &a, 0, 1e-9, 10).unwrap();
        assert!(rs.converged);
        assert_eq!(rs.iterations, 1);
        assert!(sup_dist(&ps.on_ap(&s, 0, 0), &wf.power) < 1e-12);
        let (pa, ra) = a_iwf(&s, &a, 0, StepSchedule::default(), 1e-7, 100_000).unwrap();
        assert!(ra.converged, "{ra:?}");
        assert!(sup_dist(&pa.on_ap(&s, 0, 0), &wf.power) < 1e-7);
        let (ep, _) = equilibrium_potential(&s, &a, 0, 1e-9).unwrap();
        let cap = rate(&s.gains_on(0, 0), &wf.power, &[1.0, 1.0, 0.5]);
        assert!(close(ep, noise_potential(&s, 0) + cap, 1e-12));
    }

    #[test]
    fn single_channel_forces_full_budgets() {
        let s = NetworkSnapshot::from_parts(
            vec![vec![0]],
            vec![vec![0.3], vec![1.2], vec![0.8]],
            vec![0.5],
            vec![1.0, 2.0, 0.5],
        )
        .unwrap();
        let a = AssociationProfile(vec![0, 0, 0]);
        let (p, report) = a_iwf(&s, &a, 0, StepSchedule::default(), 1e-9, 10).unwrap();
        assert!(report.converged);
        assert_eq!(report.final_residual, 0.0);
        let (ps, _) = s_iwf(&s, &a, 0, 1e-12, 10).unwrap();
        for i in 0..3 {
            assert!(close(ps.get(i, 0), s.budget(i), 1e-15));
        }
        let (ep, _) = equilibrium_potential(&s, &a, 0, 1e-12).unwrap();
        let expected = (0.5f64 + 0.3 * 1.0 + 1.2 * 2.0 + 0.8 * 0.5).ln();
        assert!(close(ep, expected, 1e-14));
        assert!(p.get(0, 0) > 0.0);
    }

    #[test]
    fn empty_ap_has_noise_potential() {
        let s = generate_snapshot(&NetworkParams::new(2, 2, 4, 1)).unwrap();
        let a = AssociationProfile(vec![0, 0]);
        let (ep, p) = equilibrium_potential(&s, &a, 1, 1e-9).unwrap();
        assert_eq!(ep, noise_potential(&s, 1));
        assert_eq!(p, PowerProfile::zeros(2, 4));
    }

    #[test]
    fn s_iwf_trace_never_decreases() {
        for seed in 0..50 {
            let s = generate_snapshot(&NetworkParams::new(4, 1, 6, seed)).unwrap();
            let a = AssociationProfile::uniform(4, 0);
            let (_, r) = s_iwf(&s, &a, 0, 1e-9, 1000).unwrap();
            assert!(r.converged);
            for pair in r.potential_trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-12, "seed {seed}: {pair:?}");
            }
        }
    }

    #[test]
    fn sep_matches_w1_and_is_permutation_invariant() {
        let s = generate_snapshot(&NetworkParams::new(3, 1, 5, 8)).unwrap();
        let a = AssociationProfile::uniform(3, 0);
        let sep = system_equilibrium_potential(&s, &a, 1e-10).unwrap();
        let (ep, _) = equilibrium_potential(&s, &a, 0, 1e-10).unwrap();
        assert!(close(sep, ep, 1e-12));

        let doc = s.to_doc();
        let mut permuted = doc.clone();
        permuted.gain = vec![doc.gain[2].clone(), doc.gain[0].clone(), doc.gain[1].clone()];
        let sp = crate::netmodel::NetworkSnapshot::from_doc(permuted).unwrap();
        let sep_p = system_equilibrium_potential(&sp, &a, 1e-10).unwrap();
        assert!(close(sep, sep_p, 1e-8));
    }

    #[test]
    fn concave_along_segments() {
        let s = generate_snapshot(&NetworkParams::new(3, 1, 4, 21)).unwrap();
        let a = AssociationProfile::uniform(3, 0);
        let mut x = PowerProfile::zeros(3, 4);
        let mut y = PowerProfile::zeros(3, 4);
        for i in 0..3 {
            x.power[i] = vec![1.0, 0.0, 0.0, 0.0];
            y.power[i] = vec![0.1, 0.2, 0.3, 0.4];
        }
        let mut mid = x.clone();
        for i in 0..3 {
            for k in 0..4 {
                mid.power[i][k] = 0.5 * (x.power[i][k] + y.power[i][k]);
            }
        }
        let avg = 0.5 * (potential_ap(&s, &x, &a, 0) + potential_ap(&s, &y, &a, 0));
        assert!(potential_ap(&s, &mid, &a, 0) >= avg);
    }
}
