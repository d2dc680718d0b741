//! Physical-layer primitives: interference aggregation, achievable rate and
//! the water-filling best response.
//!
//! Rates are in nats. Per-AP vectors (gains, IPN, powers) are indexed by the
//! position of the channel in [`NetworkSnapshot::channels`], not by the global
//! channel index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::NetworkSnapshot;

/// Convert nats to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * std::f64::consts::LN_2
}

/// One AP index per CU.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssociationProfile(pub Vec<usize>);

impl AssociationProfile {
    pub fn uniform(n_cus: usize, ap: usize) -> Self {
        Self(vec![ap; n_cus])
    }

    pub fn ap_of(&self, cu: usize) -> usize {
        self.0[cu]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// CUs associated with `ap`, ascending.
    pub fn members(&self, ap: usize) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w == ap)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_valid_for(&self, s: &NetworkSnapshot) -> bool {
        self.0.len() == s.n_cus() && self.0.iter().all(|&w| w < s.n_aps())
    }

    /// Dash-joined, 1-based AP indices, e.g. `1-2-2`.
    pub fn label(&self) -> String {
        self.0.iter().map(|w| (w + 1).to_string()).collect::<Vec<_>>().join("-")
    }

    pub fn switches_from(&self, previous: &AssociationProfile) -> usize {
        self.0.iter().zip(&previous.0).filter(|(a, b)| a != b).count()
    }
}

/// `N x K` power matrix over global channel indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub power: Vec<Vec<f64>>,
}

impl PowerProfile {
    pub fn zeros(n_cus: usize, n_channels: usize) -> Self {
        Self {
            power: vec![vec![0.0; n_channels]; n_cus],
        }
    }

    pub fn get(&self, cu: usize, channel: usize) -> f64 {
        self.power[cu][channel]
    }

    /// Powers of `cu` on the channels of `ap`, in channel order.
    pub fn on_ap(&self, s: &NetworkSnapshot, cu: usize, ap: usize) -> Vec<f64> {
        s.channels(ap).iter().map(|&k| self.power[cu][k]).collect()
    }

    /// Replaces the row of `cu` with `values` on the channels of `ap` and zero
    /// elsewhere.
    pub fn set_on_ap(&mut self, s: &NetworkSnapshot, cu: usize, ap: usize, values: &[f64]) {
        let row = &mut self.power[cu];
        row.iter_mut().for_each(|p| *p = 0.0);
        for (&k, &v) in s.channels(ap).iter().zip(values) {
            row[k] = v;
        }
    }

    /// Checks nonnegativity, budgets (with `tol` slack) and the support
    /// constraint relative to `a`.
    pub fn is_feasible(&self, s: &NetworkSnapshot, a: &AssociationProfile, tol: f64) -> bool {
        self.power.iter().enumerate().all(|(i, row)| {
            let total: f64 = row.iter().sum();
            row.iter().all(|&p| p >= 0.0)
                && total <= s.budget(i) * (1.0 + tol) + tol
                && row
                    .iter()
                    .enumerate()
                    .all(|(k, &p)| p == 0.0 || s.owner(k) == a.ap_of(i))
        })
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &PowerProfile) -> f64 {
        self.power
            .iter()
            .flatten()
            .zip(other.power.iter().flatten())
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Interference plus noise seen by `cu` on each channel of `ap`: `n(k)` plus
/// the received power of every other CU associated with `ap`. Works for a
/// hypothetical switch (`ap != a(cu)`) as well.
pub fn interference(s: &NetworkSnapshot, a: &AssociationProfile, p: &PowerProfile, cu: usize, ap: usize) -> Vec<f64> {
    s.channels(ap)
        .iter()
        .map(|&k| {
            let others: f64 = (0..s.n_cus())
                .filter(|&j| j != cu && a.ap_of(j) == ap)
                .map(|j| s.gain(j, k) * p.get(j, k))
                .sum();
            s.noise(k) + others
        })
        .collect()
}

/// Shannon rate `sum_k ln(1 + g_k p_k / ipn_k)` over the channels of one AP.
pub fn rate(gains: &[f64], power: &[f64], ipn: &[f64]) -> f64 {
    gains
        .iter()
        .zip(power)
        .zip(ipn)
        .map(|((g, p), n)| (g * p / n).ln_1p())
        .sum()
}

/// Rate of `cu` on `ap` with the given per-channel powers.
pub fn rate_on(s: &NetworkSnapshot, cu: usize, ap: usize, power: &[f64], ipn: &[f64]) -> f64 {
    rate(&s.gains_on(cu, ap), power, ipn)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub power: Vec<f64>,
    /// The water level `1/sigma`.
    pub level: f64,
}

/// Bisection stops once the bracket is this narrow relative to the level.
const LEVEL_TOL: f64 = 1e-12;

/// Rate-maximizing split of `budget` over parallel channels:
/// `p_k = [level - ipn_k / g_k]^+` with `sum_k p_k = budget`.
///
/// The level is bracketed and bisected; the active set found that way then
/// fixes the level in closed form and the residual budget is spread over the
/// active channels, so the output saturates the budget to rounding precision.
pub fn waterfill(gains: &[f64], ipn: &[f64], budget: f64) -> Result<WaterFill> {
    if gains.is_empty() {
        return Err(Error::NoChannels);
    }
    debug_assert_eq!(gains.len(), ipn.len());
    let floors: Vec<f64> = gains.iter().zip(ipn).map(|(g, n)| n / g).collect();
    let poured = |level: f64| floors.iter().map(|f| (level - f).max(0.0)).sum::<f64>();

    let min_floor = floors.iter().copied().fold(f64::INFINITY, f64::min);
    // poured(lo) = 0 < budget <= poured(hi)
    let mut lo = min_floor;
    let mut hi = min_floor + budget;
    while hi - lo > LEVEL_TOL * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if poured(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let active: Vec<usize> = (0..floors.len()).filter(|&k| floors[k] < hi).collect();
    let level = (budget + active.iter().map(|&k| floors[k]).sum::<f64>()) / active.len() as f64;
    let mut power = vec![0.0; floors.len()];
    for &k in &active {
        power[k] = (level - floors[k]).max(0.0);
    }
    let spill = budget - power.iter().sum::<f64>();
    if spill != 0.0 {
        let share = spill / active.len() as f64;
        for &k in &active {
            power[k] = (power[k] + share).max(0.0);
        }
    }
    Ok(WaterFill { power, level })
}

/// Water-filled best response of `cu` on `ap` against the current powers of
/// everyone else, returned as `(rate, powers over the channels of ap)`.
pub fn estimated_best_rate(
    s: &NetworkSnapshot,
    a: &AssociationProfile,
    p: &PowerProfile,
    cu: usize,
    ap: usize,
) -> Result<(f64, Vec<f64>)> {
    let ipn = interference(s, a, p, cu, ap);
    let gains = s.gains_on(cu, ap);
    let wf = waterfill(&gains, &ipn, s.budget(cu))?;
    Ok((rate(&gains, &wf.power, &ipn), wf.power))
}

/// Current rate of `cu` at its associated AP.
pub fn current_rate(s: &NetworkSnapshot, a: &AssociationProfile, p: &PowerProfile, cu: usize) -> f64 {
    let ap = a.ap_of(cu);
    let ipn = interference(s, a, p, cu, ap);
    rate_on(s, cu, ap, &p.on_ap(s, cu, ap), &ipn)
}

/// Sum of all CU rates, nats.
pub fn sum_rate(s: &NetworkSnapshot, a: &AssociationProfile, p: &PowerProfile) -> f64 {
    (0..s.n_cus()).map(|i| current_rate(s, a, p, i)).sum()
}
