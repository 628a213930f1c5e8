//! V2V link models.
//!
//! All Mode 4 impairments are folded into one packet error probability `β`.
//! A packet is resent until it gets through, so the number of attempts is
//! geometric on `{1, 2, ...}` with mean `1 / (1 - β)`. Allocations are
//! counted in resource blocks: `channel_rate` is the rate of one block, which
//! keeps throughput linear in the integer block count.

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use thiserror::Error;

use crate::objectives::SelectionVector;
use crate::scenario::{CommsBudget, Vehicle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommsError {
    #[error("packet error probability {0} outside [0, 1)")]
    BetaOutOfRange(f64),
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("candidate {index} is not selected but was given {what}")]
    UnselectedResource { index: usize, what: &'static str },
    #[error("negative transmit power {power} for candidate {index}")]
    NegativePower { index: usize, power: f64 },
    #[error("mean delay must be positive, got {0}")]
    NonpositiveDelay(f64),
}

fn check_beta(beta: f64) -> Result<(), CommsError> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(CommsError::BetaOutOfRange(beta))
    }
}

/// Mean number of transmissions needed to deliver one packet.
pub fn expected_retransmissions(beta: f64) -> Result<f64, CommsError> {
    check_beta(beta)?;
    Ok(1.0 / (1.0 - beta))
}

/// Goodput of `vehicle` when given `rb_count` blocks.
pub fn effective_throughput(vehicle: &Vehicle, rb_count: u32, comms: &CommsBudget) -> f64 {
    comms.channel_rate * (1.0 - vehicle.packet_error_prob) * rb_count as f64
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), CommsError> {
    if expected == got {
        Ok(())
    } else {
        Err(CommsError::LengthMismatch {
            what,
            expected,
            got,
        })
    }
}

/// Total goodput of the selected helpers under `rb_alloc`.
pub fn f3_throughput(
    alpha: &SelectionVector,
    rb_alloc: &[u32],
    comms: &CommsBudget,
    vehicles: &[Vehicle],
) -> Result<f64, CommsError> {
    check_len("selection", vehicles.len(), alpha.len())?;
    check_len("rb allocation", vehicles.len(), rb_alloc.len())?;
    let mut total = 0.0;
    for (i, (&w, v)) in rb_alloc.iter().zip(vehicles).enumerate() {
        if !alpha.is_selected(i) {
            if w != 0 {
                return Err(CommsError::UnselectedResource {
                    index: i,
                    what: "resource blocks",
                });
            }
            continue;
        }
        total += effective_throughput(v, w, comms);
    }
    Ok(total)
}

/// Throughput as a function of the allocation alone, for a selection that is
/// already fixed: every vehicle with blocks counts.
pub fn f3_for_allocation(
    rb_alloc: &[u32],
    comms: &CommsBudget,
    vehicles: &[Vehicle],
) -> Result<f64, CommsError> {
    check_len("rb allocation", vehicles.len(), rb_alloc.len())?;
    Ok(rb_alloc
        .iter()
        .zip(vehicles)
        .map(|(&w, v)| effective_throughput(v, w, comms))
        .sum())
}

/// Expected power cost of the selected helpers, `Σ α_i P_i / (R_ch (1 - β_i))`.
pub fn f4_energy(
    alpha: &SelectionVector,
    powers: &[f64],
    comms: &CommsBudget,
    vehicles: &[Vehicle],
) -> Result<f64, CommsError> {
    check_len("selection", vehicles.len(), alpha.len())?;
    check_len("powers", vehicles.len(), powers.len())?;
    let mut total = 0.0;
    for (i, (&p, v)) in powers.iter().zip(vehicles).enumerate() {
        if p < 0.0 {
            return Err(CommsError::NegativePower { index: i, power: p });
        }
        if !alpha.is_selected(i) {
            if p != 0.0 {
                return Err(CommsError::UnselectedResource {
                    index: i,
                    what: "transmit power",
                });
            }
            continue;
        }
        check_beta(v.packet_error_prob)?;
        total += p / (comms.channel_rate * (1.0 - v.packet_error_prob));
    }
    Ok(total)
}

/// Constant transmission delay of one packet, `l / R_ch`.
pub fn transmission_delay(comms: &CommsBudget) -> f64 {
    comms.packet_length / comms.channel_rate
}

/// Expected end-to-end delay used for the delay bound.
pub fn expected_delay(vehicle: &Vehicle, comms: &CommsBudget) -> f64 {
    if comms.include_tx_delay {
        vehicle.mean_delay + transmission_delay(comms)
    } else {
        vehicle.mean_delay
    }
}

/// Inclusive delay bound `E[D_i] <= T_tr`.
pub fn meets_delay_constraint(vehicle: &Vehicle, comms: &CommsBudget) -> bool {
    expected_delay(vehicle, comms) <= comms.delay_threshold
}

/// One exponential end-to-end delay draw for `vehicle`.
pub fn sample_delay<R: Rng + ?Sized>(vehicle: &Vehicle, rng: &mut R) -> Result<f64, CommsError> {
    if !(vehicle.mean_delay > 0.0) {
        return Err(CommsError::NonpositiveDelay(vehicle.mean_delay));
    }
    let exp = Exp::new(1.0 / vehicle.mean_delay).expect("positive rate");
    Ok(exp.sample(rng))
}

/// Number of transmissions until the first success.
pub fn sample_transmissions<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> Result<u64, CommsError> {
    check_beta(beta)?;
    // `Geometric` counts failures before the first success.
    let geo = Geometric::new(1.0 - beta).expect("success probability in (0, 1]");
    Ok(geo.sample(rng) + 1)
}

/// One realization of a packet's trip: how many attempts it took and the
/// delay of each attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub retransmission_count: u64,
    pub delays: Vec<f64>,
}

impl ChannelDraw {
    pub fn total_delay(&self) -> f64 {
        self.delays.iter().sum()
    }
}

pub fn draw_channel<R: Rng + ?Sized>(vehicle: &Vehicle, rng: &mut R) -> Result<ChannelDraw, CommsError> {
    let retransmission_count = sample_transmissions(vehicle.packet_error_prob, rng)?;
    let delays = (0..retransmission_count)
        .map(|_| sample_delay(vehicle, rng))
        .collect::<Result<_, _>>()?;
    Ok(ChannelDraw {
        retransmission_count,
        delays,
    })
}

/// Monte-Carlo goodput: pushes `packets` packets through a link of
/// `rb_count` blocks, resending each until delivered, and reports delivered
/// bits per unit of channel time.
pub fn simulate_goodput<R: Rng + ?Sized>(
    vehicle: &Vehicle,
    rb_count: u32,
    comms: &CommsBudget,
    packets: u64,
    rng: &mut R,
) -> Result<f64, CommsError> {
    let mut attempts = 0u64;
    for _ in 0..packets {
        attempts += sample_transmissions(vehicle.packet_error_prob, rng)?;
    }
    if attempts == 0 {
        return Ok(0.0);
    }
    let link_rate = comms.channel_rate * rb_count as f64;
    Ok(link_rate * packets as f64 / attempts as f64)
}
