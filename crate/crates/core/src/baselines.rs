//! Reference schemes and oracles.
//!
//! The equilibrium potential of an AP only depends on which CUs are
//! associated with it, so exhaustive search solves one subgame per distinct
//! `(AP, member set)` pair and assembles every profile from those values.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{
    a_iwf, equilibrium_potential, noise_potential, SolveReport, StepSchedule, DEFAULT_A_IWF_MAX_ITER,
};
use crate::error::{Error, Result};
use crate::netmodel::NetworkSnapshot;
use crate::radio::{nats_to_bits, sum_rate, AssociationProfile, PowerProfile};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Each CU goes to the nearest AP; distance ties go to the lowest index.
pub fn closest_ap(s: &NetworkSnapshot) -> AssociationProfile {
    let aps = s.ap_positions();
    AssociationProfile(
        s.cu_positions()
            .iter()
            .map(|cu| {
                let mut best = 0;
                for w in 1..aps.len() {
                    if cu.distance(&aps[w]) < cu.distance(&aps[best]) {
                        best = w;
                    }
                }
                best
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub assoc: AssociationProfile,
    pub sep: f64,
    /// Sum of per-AP MAC sum capacities, nats.
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustiveResult {
    pub best_assoc: AssociationProfile,
    pub best_sep: f64,
    pub per_profile: Option<Vec<ProfileRow>>,
}

impl ExhaustiveResult {
    /// `assoc,sep_nats,throughput_bits`; empty body when the table was not kept.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("assoc,sep_nats,throughput_bits\n");
        for row in self.per_profile.iter().flatten() {
            out.push_str(&format!(
                "{},{},{}\n",
                row.assoc.label(),
                row.sep,
                nats_to_bits(row.throughput)
            ));
        }
        out
    }
}

fn profile_count(s: &NetworkSnapshot) -> f64 {
    (s.n_aps() as f64).powi(s.n_cus() as i32)
}

fn decode(mut index: u64, n: usize, w: usize) -> AssociationProfile {
    let mut assoc = vec![0; n];
    for slot in assoc.iter_mut() {
        *slot = (index % w as u64) as usize;
        index /= w as u64;
    }
    AssociationProfile(assoc)
}

fn member_mask(a: &AssociationProfile, ap: usize) -> u64 {
    a.0.iter()
        .enumerate()
        .filter(|&(_, &w)| w == ap)
        .fold(0, |m, (i, _)| m | (1 << i))
}

fn mask_profile(mask: u64, n: usize, ap: usize) -> AssociationProfile {
    // members sit on `ap`; everyone else on any other AP (index 0 or 1)
    let other = usize::from(ap == 0);
    AssociationProfile((0..n).map(|i| if mask >> i & 1 == 1 { ap } else { other }).collect())
}

/// Enumerates every association profile and returns the one with the largest
/// system equilibrium potential. Ties keep the lowest enumeration index.
pub fn exhaustive_sep(s: &NetworkSnapshot, tol: f64, cap: u64, keep_table: bool) -> Result<ExhaustiveResult> {
    let total = profile_count(s);
    if total > cap as f64 || s.n_cus() > 63 {
        return Err(Error::EnumerationCap { profiles: total, cap });
    }
    let (n, w) = (s.n_cus(), s.n_aps());
    let total = total as u64;

    let needed: BTreeSet<(usize, u64)> = (0..total)
        .flat_map(|idx| {
            let a = decode(idx, n, w);
            (0..w).map(move |ap| (ap, member_mask(&a, ap)))
        })
        .collect();
    let needed: Vec<(usize, u64)> = needed.into_iter().collect();
    let values: Vec<f64> = needed
        .par_iter()
        .map(|&(ap, mask)| {
            if mask == 0 {
                Ok(noise_potential(s, ap))
            } else {
                equilibrium_potential(s, &mask_profile(mask, n, ap), ap, tol).map(|(v, _)| v)
            }
        })
        .collect::<Result<_>>()?;
    let ep: HashMap<(usize, u64), f64> = needed.into_iter().zip(values).collect();
    let noise_floor: f64 = (0..w).map(|ap| noise_potential(s, ap)).sum();

    let rows: Vec<ProfileRow> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let assoc = decode(idx, n, w);
            let sep: f64 = (0..w).map(|ap| ep[&(ap, member_mask(&assoc, ap))]).sum();
            ProfileRow {
                assoc,
                sep,
                throughput: sep - noise_floor,
            }
        })
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.sep > rows[b].sep { i } else { b });
    Ok(ExhaustiveResult {
        best_assoc: rows[best].assoc.clone(),
        best_sep: rows[best].sep,
        per_profile: keep_table.then_some(rows),
    })
}

/// Sum capacity of the multiple-access channel at `ap` under `a`: the
/// equilibrium potential above the noise-only potential.
pub fn mac_sum_capacity(s: &NetworkSnapshot, a: &AssociationProfile, ap: usize, tol: f64) -> Result<f64> {
    Ok(equilibrium_potential(s, a, ap, tol)?.0 - noise_potential(s, ap))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputBound {
    /// `T*`, nats.
    pub t_star: f64,
    pub best_assoc: AssociationProfile,
}

/// Largest network throughput over all association profiles. Since every
/// channel belongs to some AP, `T(a)` is the SEP shifted by a constant and both
/// share the same maximizer.
pub fn max_throughput(s: &NetworkSnapshot, tol: f64, cap: u64) -> Result<ThroughputBound> {
    let ex = exhaustive_sep(s, tol, cap, false)?;
    let noise_floor: f64 = (0..s.n_aps()).map(|ap| noise_potential(s, ap)).sum();
    Ok(ThroughputBound {
        t_star: ex.best_sep - noise_floor,
        best_assoc: ex.best_assoc,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KConnectivity {
    /// Powers over all `K` channels.
    pub power: PowerProfile,
    /// Sum of CU rates at the equilibrium, nats.
    pub throughput: f64,
    pub report: SolveReport,
}

/// Every CU spreads its single budget over all channels of all APs. Solved by
/// A-IWF on the merged single-AP game.
pub fn k_connectivity(s: &NetworkSnapshot, tol: f64) -> Result<KConnectivity> {
    let merged = s.merged();
    let a = AssociationProfile::uniform(s.n_cus(), 0);
    let (power, report) = a_iwf(&merged, &a, 0, StepSchedule::default(), tol, DEFAULT_A_IWF_MAX_ITER)?;
    let throughput = sum_rate(&merged, &a, &power);
    Ok(KConnectivity {
        power,
        throughput,
        report,
    })
}
