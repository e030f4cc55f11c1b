//! Turn-based sharing of a cluster's pilot and the omitted-device count.
//!
//! A device needs `payload_bits / (se * bandwidth)` seconds to deliver its
//! report. Devices of a cluster transmit one after another; whoever has not
//! finished when the reporting period ends is omitted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficModel {
    pub payload_bits: f64,
    pub period_s: f64,
    pub bandwidth_hz: f64,
}

impl TrafficModel {
    pub fn new(payload_bits: f64, period_s: f64, bandwidth_hz: f64) -> Result<Self> {
        for (name, v) in [
            ("payload", payload_bits),
            ("period", period_s),
            ("bandwidth", bandwidth_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            payload_bits,
            period_s,
            bandwidth_hz,
        })
    }
}

/// Order in which the devices of a cluster take the pilot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TurnOrder {
    /// Strongest serving gain first.
    #[default]
    Gain,
    /// Device index order.
    Fifo,
}

/// Members of a cluster in the order they transmit.
///
/// `key` ranks devices for [`TurnOrder::Gain`] (larger first, ties by index).
pub fn turn_order(members: &[usize], key: &[f64], order: TurnOrder) -> Vec<usize> {
    let mut out = members.to_vec();
    match order {
        TurnOrder::Fifo => out.sort_unstable(),
        TurnOrder::Gain => out.sort_by(|&a, &b| {
            key[b]
                .partial_cmp(&key[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        }),
    }
    out
}

/// Seconds needed to deliver the payload at spectral efficiency `se`.
pub fn tx_time(se: f64, traffic: &TrafficModel) -> f64 {
    if se > 0.0 {
        traffic.payload_bits / (se * traffic.bandwidth_hz)
    } else {
        f64::INFINITY
    }
}

/// Outcome for one cluster, positions refer to the turn order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSchedule {
    pub served: Vec<usize>,
    pub omitted: Vec<usize>,
    pub times: Vec<f64>,
}

/// Walks the cluster in turn order; a device is served when its transmission
/// ends within the period. Devices below `min_se` are skipped as unservable.
pub fn schedule_cluster(se: &[f64], traffic: &TrafficModel, min_se: Option<f64>) -> ClusterSchedule {
    let mut clock = 0.0;
    let mut out = ClusterSchedule {
        served: Vec::new(),
        omitted: Vec::new(),
        times: Vec::with_capacity(se.len()),
    };
    let mut open = true;
    for (pos, &s) in se.iter().enumerate() {
        let t = if min_se.is_some_and(|m| s < m) {
            f64::INFINITY
        } else {
            tx_time(s, traffic)
        };
        out.times.push(t);
        if open && t.is_finite() && clock + t <= traffic.period_s {
            clock += t;
            out.served.push(pos);
        } else {
            // served devices form a prefix: once one fails, the rest wait
            open = false;
            out.omitted.push(pos);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub devices: usize,
    pub served: Vec<usize>,
    pub omitted: Vec<usize>,
    /// Omitted devices over all devices of all cells.
    pub omit_rate: f64,
    /// `[cell][device]`.
    pub per_device_time: Vec<Vec<f64>>,
    pub per_device_se: Vec<Vec<f64>>,
    pub per_device_served: Vec<Vec<bool>>,
}

impl ScheduleReport {
    pub fn omitted_total(&self) -> usize {
        self.omitted.iter().sum()
    }

    /// Mean omitted devices per cell.
    pub fn omitted_per_cell(&self) -> f64 {
        self.omitted_total() as f64 / self.omitted.len().max(1) as f64
    }
}

/// Schedules one reporting period in every cell.
///
/// `turns[cell][cluster]` lists devices in turn order and `se[cell][device]`
/// is each device's average SE over its transmission.
pub fn run_period(
    turns: &[Vec<Vec<usize>>],
    se: &[Vec<f64>],
    traffic: &TrafficModel,
    min_se: Option<f64>,
) -> Result<ScheduleReport> {
    if turns.len() != se.len() {
        return Err(Error::Structural("turn lists and SE cover different cells".into()));
    }
    let devices = se.first().map_or(0, |s| s.len());
    let mut report = ScheduleReport {
        devices,
        served: Vec::with_capacity(se.len()),
        omitted: Vec::with_capacity(se.len()),
        omit_rate: 0.0,
        per_device_time: Vec::with_capacity(se.len()),
        per_device_se: se.to_vec(),
        per_device_served: Vec::with_capacity(se.len()),
    };
    for (cell, clusters) in turns.iter().enumerate() {
        let cell_se = &se[cell];
        if cell_se.len() != devices {
            return Err(Error::Structural(format!("cell {cell} has a different device count")));
        }
        let mut time = vec![f64::NAN; devices];
        let mut served = vec![false; devices];
        let mut seen = vec![false; devices];
        for order in clusters {
            for &k in order {
                if k >= devices || seen[k] {
                    return Err(Error::Structural(format!(
                        "device {k} of cell {cell} is scheduled twice or does not exist"
                    )));
                }
                seen[k] = true;
            }
            let s: Vec<f64> = order.iter().map(|&k| cell_se[k]).collect();
            let sched = schedule_cluster(&s, traffic, min_se);
            for (pos, &k) in order.iter().enumerate() {
                time[k] = sched.times[pos];
            }
            for pos in sched.served {
                served[order[pos]] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Structural(format!("cell {cell} leaves devices unscheduled")));
        }
        let n_served = served.iter().filter(|&&s| s).count();
        report.served.push(n_served);
        report.omitted.push(devices - n_served);
        report.per_device_time.push(time);
        report.per_device_served.push(served);
    }
    let total = devices * turns.len();
    report.omit_rate = if total == 0 {
        0.0
    } else {
        report.omitted_total() as f64 / total as f64
    };
    Ok(report)
}
