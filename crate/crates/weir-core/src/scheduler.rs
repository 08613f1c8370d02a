//! Uplink scheduling: the pending-packet queue and the per-slot transmit
//! decision under each uplink policy.
//!
//! The queue keeps packets ordered by descending entropy (most ambiguous
//! first), breaking ties by earlier slot and then lexicographic observation
//! id, so a transmit always sends a prefix of the queue and two runs over
//! the same inputs drain it identically.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::{energy_budget, BatteryState};
use crate::trigger::InsightPacket;

pub const DEFAULT_QUEUE_MAX_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UplinkPolicy {
    /// Send as many queued packets as the charge above the reserve affords.
    Adaptive,
    /// Radio is powered only inside a fixed daily window; inside it the
    /// whole queue goes out regardless of budget.
    FixedWindow {
        start_slot_of_day: u64,
        window_slots: u64,
    },
    /// Radio held up every slot: pays a per-slot link load and sends the
    /// whole queue immediately.
    AlwaysOn { link_load_wh: f64 },
}

impl UplinkPolicy {
    /// Whether the downlink can reach the station this slot. Patches ride
    /// the same radio as packets, so delivery waits for a contact.
    pub fn contact(
        &self,
        battery: &BatteryState,
        b_safe_wh: f64,
        e_pkt_wh: f64,
        slot: u64,
        slots_per_day: u64,
    ) -> bool {
        match self {
            UplinkPolicy::Adaptive => energy_budget(battery, b_safe_wh) >= e_pkt_wh,
            UplinkPolicy::FixedWindow {
                start_slot_of_day,
                window_slots,
            } => in_window(slot, slots_per_day, *start_slot_of_day, *window_slots),
            UplinkPolicy::AlwaysOn { .. } => true,
        }
    }
}

fn in_window(slot: u64, slots_per_day: u64, start: u64, len: u64) -> bool {
    let slot_of_day = slot % slots_per_day;
    slot_of_day >= start && slot_of_day < start + len
}

fn priority(a: &InsightPacket, b: &InsightPacket) -> Ordering {
    b.entropy
        .total_cmp(&a.entropy)
        .then_with(|| a.slot.cmp(&b.slot))
        .then_with(|| a.obs_id.cmp(&b.obs_id))
}

/// Bounded priority queue of pending packets.
#[derive(Debug, Clone, Default)]
pub struct InsightQueue {
    packets: Vec<InsightPacket>,
    max_len: usize,
}

impl InsightQueue {
    pub fn new(max_len: usize) -> Self {
        InsightQueue {
            packets: Vec::new(),
            max_len: max_len.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &InsightPacket> {
        self.packets.iter()
    }

    /// Insert in priority position. When full, the lowest-priority packet
    /// (possibly the newcomer) is dropped and returned.
    pub fn enqueue(&mut self, packet: InsightPacket) -> Option<InsightPacket> {
        let pos = self
            .packets
            .partition_point(|queued| priority(queued, &packet) != Ordering::Greater);
        self.packets.insert(pos, packet);
        if self.packets.len() > self.max_len {
            self.packets.pop()
        } else {
            None
        }
    }

    fn drain_front(&mut self, k: usize) -> Vec<InsightPacket> {
        self.packets.drain(..k.min(self.packets.len())).collect()
    }
}

/// Packets affordable under a budget: floor(budget / cost), capped by the
/// queue length.
pub fn select_k(queue_len: usize, budget_wh: f64, e_pkt_wh: f64) -> Result<usize> {
    if !(e_pkt_wh > 0.0) {
        return Err(Error::NonPositivePacketCost(e_pkt_wh));
    }
    let mut k = ((budget_wh / e_pkt_wh).floor().max(0.0) as usize).min(queue_len);
    // Guard the floor against upward rounding in k * e_pkt.
    while k > 0 && k as f64 * e_pkt_wh > budget_wh {
        k -= 1;
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmitReport {
    pub k_selected: usize,
    pub packets_sent: Vec<String>,
    /// Packet energy only; the always-on link load is accounted separately.
    pub energy_spent_wh: f64,
    pub link_load_wh: f64,
    pub total_entropy_sent: f64,
    pub bytes_sent: u64,
}

/// Run one slot's uplink. Drains the selected prefix from the queue,
/// debits the battery, and returns the sent packets in queue order.
pub fn transmit(
    queue: &mut InsightQueue,
    battery: &mut BatteryState,
    b_safe_wh: f64,
    e_pkt_wh: f64,
    policy: &UplinkPolicy,
    slot: u64,
    slots_per_day: u64,
) -> Result<(TransmitReport, Vec<InsightPacket>)> {
    if !(e_pkt_wh > 0.0) {
        return Err(Error::NonPositivePacketCost(e_pkt_wh));
    }
    let mut link_load_wh = 0.0;
    let k = match policy {
        UplinkPolicy::Adaptive => {
            select_k(queue.len(), energy_budget(battery, b_safe_wh), e_pkt_wh)?
        }
        UplinkPolicy::FixedWindow {
            start_slot_of_day,
            window_slots,
        } => {
            if in_window(slot, slots_per_day, *start_slot_of_day, *window_slots) {
                queue.len()
            } else {
                0
            }
        }
        UplinkPolicy::AlwaysOn { link_load_wh: load } => {
            link_load_wh = *load;
            queue.len()
        }
    };
    let sent = queue.drain_front(k);
    let energy_spent_wh = k as f64 * e_pkt_wh;
    battery.soc_wh = (battery.soc_wh - energy_spent_wh - link_load_wh).clamp(0.0, battery.capacity_wh);
    let report = TransmitReport {
        k_selected: k,
        packets_sent: sent.iter().map(|p| p.obs_id.clone()).collect(),
        energy_spent_wh,
        link_load_wh,
        total_entropy_sent: sent.iter().map(|p| p.entropy).sum(),
        bytes_sent: sent.iter().map(|p| p.size_bytes).sum(),
    };
    Ok((report, sent))
}
