//! Joint AP selection and power allocation.
//!
//! Three outer loops share the same building blocks:
//!
//! * [`jaspa_run`]: solve the power NE for the current association, let every
//!   CU pick a best-reply AP, fold it into a sliding-window belief and sample
//!   the next association from that belief.
//! * [`se_jaspa_run`]: one CU per iteration greedily moves to its best AP and
//!   water-fills there; everyone else is frozen.
//! * [`si_jaspa_run`]: all CUs update beliefs and associations each iteration
//!   without waiting for an intermediate power equilibrium.
//!
//! Rates are nats internally; the connection cost is configured in bits.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibria::{ne_residual_all, solve_all, system_potential, InnerSolver, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::netmodel::NetworkSnapshot;
use crate::radio::{
    bits_to_nats, current_rate, estimated_best_rate, interference, nats_to_bits, sum_rate, waterfill,
    AssociationProfile, PowerProfile,
};

/// Sliding-window belief over APs built from the last `M` best replies.
///
/// Before `M` replies have been seen the window is padded with the first
/// reply, so after `s <= M` replies `beta = ((M - s + 1) b1 + b2 + ... + bs) / M`.
/// Afterwards it is the plain average of the `M` most recent replies.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    memory_len: usize,
    memory: VecDeque<usize>,
    first_reply: Option<usize>,
    counts: Vec<usize>,
    beta: Vec<f64>,
}

impl BeliefState {
    pub fn new(n_aps: usize, memory_len: usize) -> Self {
        assert!(memory_len >= 1, "memory length must be positive");
        Self {
            memory_len,
            memory: VecDeque::with_capacity(memory_len),
            first_reply: None,
            counts: vec![0; n_aps],
            beta: vec![0.0; n_aps],
        }
    }

    /// Folds in the next best reply `e_ap`.
    pub fn update(&mut self, ap: usize) {
        let first = *self.first_reply.get_or_insert(ap);
        if self.memory.is_empty() {
            self.counts[first] = self.memory_len;
        } else if self.memory.len() < self.memory_len {
            // one padding copy of the first reply leaves the window
            self.counts[first] -= 1;
            self.counts[ap] += 1;
        } else {
            let oldest = self.memory.pop_front().expect("full window");
            self.counts[oldest] -= 1;
            self.counts[ap] += 1;
        }
        self.memory.push_back(ap);
        let m = self.memory_len as f64;
        for (b, &c) in self.beta.iter_mut().zip(&self.counts) {
            *b = c as f64 / m;
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Number of replies folded in so far, capped at the window length.
    pub fn len(&self) -> usize {
        self.memory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memory.is_empty()
    }

    pub fn memory(&self) -> impl Iterator<Item = usize> + '_ {
        self.memory.iter().copied()
    }

    pub fn first_reply(&self) -> Option<usize> {
        self.first_reply
    }

    /// The AP carrying all the mass, if the belief is an elementary vector.
    pub fn elementary(&self) -> Option<usize> {
        self.counts.iter().position(|&c| c == self.memory_len)
    }
}

/// One draw from the categorical distribution `beta`.
pub fn sample_association<R: Rng + ?Sized>(beta: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let total: f64 = beta.iter().sum();
    let mut acc = 0.0;
    let mut last = 0;
    for (w, &b) in beta.iter().enumerate() {
        if b <= 0.0 {
            continue;
        }
        acc += b / total;
        last = w;
        if u < acc {
            return w;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaspaConfig {
    /// Belief window `M`.
    pub memory_len: usize,
    /// Minimum rate gain, in bits, before a CU abandons its AP.
    pub connection_cost_bits: f64,
    pub inner_solver: InnerSolver,
    pub inner_tol: f64,
    /// Extra strict-improvement margin, nats.
    pub switch_margin: f64,
    pub max_outer: usize,
    pub seed: u64,
    /// Permit `memory_len < N`, outside the convergence guarantee.
    pub allow_short_memory: bool,
    /// Record per-iteration beliefs in the trace (only for small `N * W`).
    pub record_beliefs: bool,
    pub verify_power_tol: f64,
    pub verify_rate_margin: f64,
}

/// Beliefs are only recorded when `N * W` is at most this.
pub const BELIEF_RECORD_LIMIT: usize = 1024;

impl JaspaConfig {
    pub fn new(n_cus: usize, seed: u64) -> Self {
        Self {
            memory_len: n_cus.max(10),
            connection_cost_bits: 0.0,
            inner_solver: InnerSolver::SIwf,
            inner_tol: DEFAULT_TOL,
            switch_margin: 1e-9,
            max_outer: 500,
            seed,
            allow_short_memory: false,
            record_beliefs: false,
            verify_power_tol: 1e-5,
            verify_rate_margin: 1e-6,
        }
    }

    pub fn validate(&self, n_cus: usize) -> Result<()> {
        if self.memory_len == 0 {
            return Err(Error::Config("memory_len must be at least 1".into()));
        }
        if self.memory_len < n_cus && !self.allow_short_memory {
            return Err(Error::Config(format!(
                "memory_len {} < N = {n_cus}; set allow_short_memory to override",
                self.memory_len
            )));
        }
        if self.connection_cost_bits.is_nan() || self.connection_cost_bits < 0.0 {
            return Err(Error::Config("connection cost must be >= 0".into()));
        }
        if self.inner_tol.is_nan() || self.inner_tol <= 0.0 || self.switch_margin.is_nan() || self.switch_margin < 0.0 {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn cost_nats(&self) -> f64 {
        bits_to_nats(self.connection_cost_bits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestReply {
    pub ap: usize,
    pub current_rate: f64,
    /// Water-filled rate estimate at every AP; the entry for the current AP
    /// is the current rate.
    pub estimates: Vec<f64>,
}

impl BestReply {
    /// The elementary best-reply vector.
    pub fn vector(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.estimates.len()];
        b[self.ap] = 1.0;
        b
    }
}

/// Picks the AP offering the highest estimated rate among those that beat
/// the current rate by more than `cost + margin`; stays put if none does.
pub fn best_reply_association<R: Rng + ?Sized>(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    p: &PowerProfile,
    cu: usize,
    cost: f64,
    margin: f64,
    rng: &mut R,
) -> Result<BestReply> {
    let here = a.ap_of(cu);
    let current = current_rate(s, a, p, cu);
    let mut estimates = vec![current; s.n_aps()];
    for w in (0..s.n_aps()).filter(|&w| w != here) {
        estimates[w] = estimated_best_rate(s, a, p, cu, w)?.0;
    }
    let threshold = current + cost + margin;
    let ap = pick_best(&estimates, |w| w != here && estimates[w] > threshold, rng).unwrap_or(here);
    Ok(BestReply {
        ap,
        current_rate: current,
        estimates,
    })
}

/// Argmax of `values` over indices passing `keep`, ties broken uniformly.
fn pick_best<R: Rng + ?Sized>(values: &[f64], keep: impl Fn(usize) -> bool, rng: &mut R) -> Option<usize> {
    let best = (0..values.len())
        .filter(|&w| keep(w))
        .map(|w| values[w])
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&w| keep(w) && values[w] == best).collect();
    match ties.len() {
        0 => None,
        1 => Some(ties[0]),
        _ => ties.choose(rng).copied(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub association: AssociationProfile,
    /// Sum rate, nats.
    pub sum_rate: f64,
    pub system_potential: f64,
    pub switches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// `beliefs[t][i]` is CU `i`'s belief after the update of outer iteration
    /// `t`, the one the association of row `t + 1` was sampled from.
    pub beliefs: Option<Vec<Vec<Vec<f64>>>>,
}

impl RunTrace {
    fn push(&mut self, s: &NetworkSnapshot, a: &AssociationProfile, p: &PowerProfile, switches: usize) {
        self.rows.push(TraceRow {
            iter: self.rows.len(),
            association: a.clone(),
            sum_rate: sum_rate(s, a, p),
            system_potential: system_potential(s, p, a),
            switches,
        });
    }

    /// `iter,sum_rate_bits,potential_nats,switches,assoc`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,sum_rate_bits,potential_nats,switches,assoc\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter,
                nats_to_bits(r.sum_rate),
                r.system_potential,
                r.switches,
                r.association.label()
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JepReport {
    pub is_jep: bool,
    pub power_residual: f64,
    /// Per CU, the largest rate gain (nats) available by switching AP and
    /// water-filling there; zero when no switch helps.
    pub best_deviation_gain: Vec<f64>,
    pub power_tol: f64,
    pub rate_margin: f64,
}

impl JepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Checks the joint equilibrium conditions: every CU water-fills at its own AP
/// (within `power_tol`) and no unilateral AP switch gains more than
/// `rate_margin`.
pub fn verify_jep(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    p: &PowerProfile,
    power_tol: f64,
    rate_margin: f64,
) -> Result<JepReport> {
    let power_residual = ne_residual_all(s, a, p)?;
    let mut gains = Vec::with_capacity(s.n_cus());
    for i in 0..s.n_cus() {
        let current = current_rate(s, a, p, i);
        let mut best = 0.0f64;
        for w in (0..s.n_aps()).filter(|&w| w != a.ap_of(i)) {
            best = best.max(estimated_best_rate(s, a, p, i, w)?.0 - current);
        }
        gains.push(best);
    }
    Ok(JepReport {
        is_jep: power_residual < power_tol && gains.iter().all(|&g| g <= rate_margin),
        power_residual,
        best_deviation_gain: gains,
        power_tol,
        rate_margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub association: AssociationProfile,
    pub power: PowerProfile,
    pub trace: RunTrace,
    /// Stopped through the convergence detector rather than `max_outer`.
    pub converged: bool,
    /// Outer iterations performed.
    pub iterations: usize,
    pub jep: JepReport,
}

impl RunOutcome {
    /// Sum rate of the final profile, nats.
    pub fn sum_rate(&self, s: &NetworkSnapshot) -> f64 {
        sum_rate(s, &self.association, &self.power)
    }
}

fn cu_rngs(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + i as u64);
            rng
        })
        .collect()
}

fn random_association(s: &NetworkSnapshot, rngs: &mut [ChaCha8Rng]) -> AssociationProfile {
    AssociationProfile(rngs.iter_mut().map(|r| r.gen_range(0..s.n_aps())).collect())
}

/// Random feasible split of each CU's budget over its AP's channels.
fn random_power(s: &NetworkSnapshot, a: &AssociationProfile, rngs: &mut [ChaCha8Rng]) -> PowerProfile {
    let mut p = PowerProfile::zeros(s.n_cus(), s.n_channels());
    for (i, rng) in rngs.iter_mut().enumerate() {
        let ap = a.ap_of(i);
        let weights: Vec<f64> = s.channels(ap).iter().map(|_| rng.gen::<f64>() + 1e-12).collect();
        let total: f64 = weights.iter().sum();
        let split: Vec<f64> = weights.iter().map(|w| w / total * s.budget(i)).collect();
        p.set_on_ap(s, i, ap, &split);
    }
    p
}

fn belief_snapshot(beliefs: &[BeliefState]) -> Vec<Vec<f64>> {
    beliefs.iter().map(|b| b.beta().to_vec()).collect()
}

fn records_beliefs(s: &NetworkSnapshot, cfg: &JaspaConfig) -> bool {
    cfg.record_beliefs && s.n_cus() * s.n_aps() <= BELIEF_RECORD_LIMIT
}

/// Absorbing state: the association has not changed for `M` iterations and
/// every belief is concentrated on the AP its CU already uses.
fn absorbed(stable: usize, beliefs: &[BeliefState], a: &AssociationProfile, memory_len: usize) -> bool {
    stable >= memory_len
        && beliefs
            .iter()
            .enumerate()
            .all(|(i, b)| b.elementary() == Some(a.ap_of(i)))
}

/// JASPA: power NE per association, best replies, belief update, sampling.
pub fn jaspa_run(s: &NetworkSnapshot, cfg: &JaspaConfig) -> Result<RunOutcome> {
    cfg.validate(s.n_cus())?;
    let n = s.n_cus();
    let mut rngs = cu_rngs(cfg.seed, n);
    let mut a = random_association(s, &mut rngs);
    let mut beliefs = vec![BeliefState::new(s.n_aps(), cfg.memory_len); n];
    let record = records_beliefs(s, cfg);
    let mut trace = RunTrace {
        rows: Vec::new(),
        beliefs: record.then(Vec::new),
    };
    let mut switches = 0;
    let mut stable = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut p;
    loop {
        p = solve_all(s, &a, cfg.inner_solver, cfg.inner_tol)?.0;
        trace.push(s, &a, &p, switches);
        if absorbed(stable, &beliefs, &a, cfg.memory_len) {
            converged = true;
            break;
        }
        if iterations == cfg.max_outer {
            break;
        }
        let mut next = a.clone();
        for i in 0..n {
            let reply = best_reply_association(s, &a, &p, i, cfg.cost_nats(), cfg.switch_margin, &mut rngs[i])?;
            beliefs[i].update(reply.ap);
            next.0[i] = sample_association(beliefs[i].beta(), &mut rngs[i]);
        }
        if let Some(b) = trace.beliefs.as_mut() {
            b.push(belief_snapshot(&beliefs));
        }
        switches = next.switches_from(&a);
        stable = if switches == 0 { stable + 1 } else { 0 };
        a = next;
        iterations += 1;
    }
    let jep = verify_jep(s, &a, &p, cfg.verify_power_tol, cfg.verify_rate_margin)?;
    Ok(RunOutcome {
        association: a,
        power: p,
        trace,
        converged,
        iterations,
        jep,
    })
}

/// Se-JASPA: at iteration `t` only CU `(t + 1) mod N` acts. It moves to the AP
/// with the highest water-filled rate (staying unless another AP beats its
/// own best by more than `cost + margin`) and water-fills there against the
/// others' current powers. The system potential never decreases.
///
/// Converges once `N` consecutive turns bring no switch and no power change
/// larger than `inner_tol`.
pub fn se_jaspa_run(s: &NetworkSnapshot, cfg: &JaspaConfig) -> Result<RunOutcome> {
    cfg.validate(s.n_cus())?;
    let n = s.n_cus();
    let mut rngs = cu_rngs(cfg.seed, n);
    let mut a = random_association(s, &mut rngs);
    let mut p = random_power(s, &a, &mut rngs);
    let mut trace = RunTrace::default();
    trace.push(s, &a, &p, 0);
    let mut quiet = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_outer {
        let i = (iterations + 1) % n;
        let here = a.ap_of(i);
        let mut estimates = Vec::with_capacity(s.n_aps());
        let mut powers = Vec::with_capacity(s.n_aps());
        for w in 0..s.n_aps() {
            let (r, pw) = estimated_best_rate(s, &a, &p, i, w)?;
            estimates.push(r);
            powers.push(pw);
        }
        let threshold = estimates[here] + cfg.cost_nats() + cfg.switch_margin;
        let target = pick_best(&estimates, |w| w != here && estimates[w] > threshold, &mut rngs[i]).unwrap_or(here);

        let before = p.power[i].clone();
        a.0[i] = target;
        p.set_on_ap(s, i, target, &powers[target]);
        let change = before
            .iter()
            .zip(&p.power[i])
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let switched = usize::from(target != here);
        iterations += 1;
        trace.push(s, &a, &p, switched);

        quiet = if switched == 0 && change < cfg.inner_tol {
            quiet + 1
        } else {
            0
        };
        if quiet >= n {
            converged = true;
            break;
        }
    }
    let jep = verify_jep(s, &a, &p, cfg.verify_power_tol, cfg.verify_rate_margin)?;
    Ok(RunOutcome {
        association: a,
        power: p,
        trace,
        converged,
        iterations,
        jep,
    })
}

/// Si-JASPA: every CU picks a best reply against the current (non-equilibrium)
/// powers, updates its belief, samples an AP and moves toward its best
/// response there. Staying CUs average with step `1 / (T_i + 1)` where `T_i`
/// counts iterations at the current AP; switching CUs jump to the best
/// response.
///
/// Uses the same absorption detector as [`jaspa_run`]; once it fires the
/// powers are finished by the inner solver at the final association.
pub fn si_jaspa_run(s: &NetworkSnapshot, cfg: &JaspaConfig) -> Result<RunOutcome> {
    si_jaspa_with_stays(s, cfg).map(|(outcome, _)| outcome)
}

/// [`si_jaspa_run`] that also returns each CU's duration-of-stay history.
pub fn si_jaspa_with_stays(s: &NetworkSnapshot, cfg: &JaspaConfig) -> Result<(RunOutcome, Vec<Vec<usize>>)> {
    cfg.validate(s.n_cus())?;
    let n = s.n_cus();
    let mut rngs = cu_rngs(cfg.seed, n);
    let mut a = random_association(s, &mut rngs);
    let mut p = random_power(s, &a, &mut rngs);
    let mut beliefs = vec![BeliefState::new(s.n_aps(), cfg.memory_len); n];
    let record = records_beliefs(s, cfg);
    let mut trace = RunTrace {
        rows: Vec::new(),
        beliefs: record.then(Vec::new),
    };
    let mut stay = vec![0usize; n];
    let mut stays = vec![Vec::new(); n];
    let mut switches = 0;
    let mut stable = 0;
    let mut converged = false;
    let mut iterations = 0;
    loop {
        trace.push(s, &a, &p, switches);
        if absorbed(stable, &beliefs, &a, cfg.memory_len) {
            converged = true;
            break;
        }
        if iterations == cfg.max_outer {
            break;
        }
        let mut next_a = a.clone();
        for i in 0..n {
            let reply = best_reply_association(s, &a, &p, i, cfg.cost_nats(), cfg.switch_margin, &mut rngs[i])?;
            beliefs[i].update(reply.ap);
            next_a.0[i] = sample_association(beliefs[i].beta(), &mut rngs[i]);
        }
        let mut next_p = PowerProfile::zeros(s.n_cus(), s.n_channels());
        for i in 0..n {
            let w = next_a.ap_of(i);
            let ipn = interference(s, &a, &p, i, w);
            let target = waterfill(&s.gains_on(i, w), &ipn, s.budget(i))?.power;
            if w != a.ap_of(i) {
                stay[i] = 1;
                next_p.set_on_ap(s, i, w, &target);
            } else {
                stay[i] += 1;
                let alpha = 1.0 / (stay[i] as f64 + 1.0);
                let mixed: Vec<f64> = p
                    .on_ap(s, i, w)
                    .iter()
                    .zip(&target)
                    .map(|(cur, t)| (1.0 - alpha) * cur + alpha * t)
                    .collect();
                next_p.set_on_ap(s, i, w, &mixed);
            }
            stays[i].push(stay[i]);
        }
        if let Some(b) = trace.beliefs.as_mut() {
            b.push(belief_snapshot(&beliefs));
        }
        switches = next_a.switches_from(&a);
        stable = if switches == 0 { stable + 1 } else { 0 };
        a = next_a;
        p = next_p;
        iterations += 1;
    }
    let p_final = solve_all(s, &a, cfg.inner_solver, cfg.inner_tol)?.0;
    let jep = verify_jep(s, &a, &p_final, cfg.verify_power_tol, cfg.verify_rate_margin)?;
    Ok((
        RunOutcome {
            association: a,
            power: p_final,
            trace,
            converged,
            iterations,
            jep,
        },
        stays,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{generate_snapshot, NetworkParams};

    #[test]
    fn first_reply_fills_belief() {
        let mut b = BeliefState::new(3, 4);
        b.update(2);
        assert_eq!(b.beta(), &[0.0, 0.0, 1.0]);
        assert_eq!(b.elementary(), Some(2));
    }

    #[test]
    fn second_reply_with_window_two() {
        let mut b = BeliefState::new(3, 2);
        b.update(0);
        b.update(1);
        assert_eq!(b.beta(), &[0.5, 0.5, 0.0]);
        assert_eq!(b.elementary(), None);
    }

    #[test]
    fn identical_replies_give_elementary_belief() {
        let mut b = BeliefState::new(4, 5);
        b.update(0);
        for _ in 0..5 {
            b.update(3);
        }
        assert_eq!(b.beta(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(b.len(), 5);
        assert_eq!(b.memory().collect::<Vec<_>>(), vec![3; 5]);
    }

    #[test]
    fn sampling_elementary_and_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| sample_association(&[0.0, 0.0, 1.0], &mut rng) == 2));
        let hits = (0..10_000)
            .filter(|_| sample_association(&[0.5, 0.5], &mut rng) == 0)
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&freq), "{freq}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_association(&[0.2, 0.3, 0.5], &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn single_ap_never_switches() {
        let s = generate_snapshot(&NetworkParams::new(3, 1, 4, 2)).unwrap();
        let a = AssociationProfile::uniform(3, 0);
        let (p, _) = solve_all(&s, &a, InnerSolver::SIwf, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = best_reply_association(&s, &a, &p, 1, 0.0, 1e-9, &mut rng).unwrap();
        assert_eq!(r.ap, 0);
        assert_eq!(r.vector(), vec![1.0]);
    }

    #[test]
    fn huge_cost_blocks_switching() {
        let s = generate_snapshot(&NetworkParams::new(4, 3, 6, 2)).unwrap();
        let a = AssociationProfile::uniform(4, 0);
        let (p, _) = solve_all(&s, &a, InnerSolver::SIwf, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..4 {
            let r = best_reply_association(&s, &a, &p, i, 1e12, 1e-9, &mut rng).unwrap();
            assert_eq!(r.ap, 0);
        }
    }

    #[test]
    fn config_guards_memory_length() {
        let mut cfg = JaspaConfig::new(12, 0);
        assert!(cfg.validate(12).is_ok());
        cfg.memory_len = 5;
        assert!(cfg.validate(12).is_err());
        cfg.allow_short_memory = true;
        assert!(cfg.validate(12).is_ok());
        cfg.connection_cost_bits = -1.0;
        assert!(cfg.validate(12).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let s = generate_snapshot(&NetworkParams::new(2, 2, 4, 5)).unwrap();
        let out = jaspa_run(&s, &JaspaConfig::new(2, 1)).unwrap();
        let csv = out.trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iter,sum_rate_bits,potential_nats,switches,assoc"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 5);
        assert_eq!(first[0], "0");
        assert!(first[4].split('-').all(|w| w == "1" || w == "2"));
    }

    #[test]
    fn si_single_cu_single_ap_reaches_waterfill() {
        let s = generate_snapshot(&NetworkParams::new(1, 1, 4, 8)).unwrap();
        let (out, stays) = si_jaspa_with_stays(&s, &JaspaConfig::new(1, 3)).unwrap();
        assert!(out.converged);
        assert!(out.jep.is_jep);
        assert_eq!(stays[0], (1..=stays[0].len()).collect::<Vec<_>>());
    }
}
