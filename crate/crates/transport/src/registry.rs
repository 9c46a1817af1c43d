//! Devices known to the server, fed by HELLO beacons.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use parking_lot::RwLock;
use serde::Serialize;

/// Default spacing of HELLO beacons.
pub const DEFAULT_HELLO_INTERVAL: Duration = Duration::from_millis(2000);
/// A device is offline once this many beacons in a row were missed.
pub const MISSED_HELLOS_OFFLINE: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceRecord {
    pub device_id: String,
    pub address: SocketAddr,
    pub channel_count: u8,
    pub last_seen: Instant,
    pub next_seq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeviceStatus {
    pub device_id: String,
    pub address: SocketAddr,
    pub channel_count: u8,
    pub online: bool,
    pub last_seen_ms_ago: u64,
}

#[derive(Debug, Default)]
pub struct Registry {
    devices: RwLock<HashMap<String, DeviceRecord>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or refreshes a device. Returns `true` when the id is new.
    pub fn upsert_hello(&self, device_id: &str, address: SocketAddr, channel_count: u8, now: Instant) -> bool {
        let mut devices = self.devices.write();
        match devices.get_mut(device_id) {
            Some(rec) => {
                rec.address = address;
                rec.channel_count = channel_count;
                rec.last_seen = rec.last_seen.max(now);
                false
            }
            None => {
                devices.insert(
                    device_id.to_owned(),
                    DeviceRecord {
                        device_id: device_id.to_owned(),
                        address,
                        channel_count,
                        last_seen: now,
                        next_seq: 1,
                    },
                );
                true
            }
        }
    }

    /// Marks the device at `address` as seen and returns its id.
    pub fn touch(&self, address: SocketAddr, now: Instant) -> Option<String> {
        let mut devices = self.devices.write();
        let rec = devices
            .values_mut()
            .filter(|r| r.address == address)
            .max_by_key(|r| r.last_seen)?;
        rec.last_seen = rec.last_seen.max(now);
        Some(rec.device_id.clone())
    }

    pub fn get(&self, device_id: &str) -> Option<DeviceRecord> {
        self.devices.read().get(device_id).cloned()
    }

    pub fn contains(&self, device_id: &str) -> bool {
        self.devices.read().contains_key(device_id)
    }

    /// Hands out the next sequence number for `device_id`.
    pub fn next_seq(&self, device_id: &str) -> Option<u32> {
        let mut devices = self.devices.write();
        let rec = devices.get_mut(device_id)?;
        let seq = rec.next_seq;
        rec.next_seq = rec.next_seq.wrapping_add(1);
        Some(seq)
    }

    pub fn len(&self) -> usize {
        self.devices.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records sorted by device id.
    pub fn snapshot(&self) -> Vec<DeviceRecord> {
        let mut out: Vec<_> = self.devices.read().values().cloned().collect();
        out.sort_by(|a, b| a.device_id.cmp(&b.device_id));
        out
    }

    pub fn status(&self, now: Instant, hello_interval: Duration) -> Vec<DeviceStatus> {
        self.snapshot()
            .into_iter()
            .map(|r| {
                let age = now.saturating_duration_since(r.last_seen);
                DeviceStatus {
                    online: is_online(r.last_seen, now, hello_interval),
                    device_id: r.device_id,
                    address: r.address,
                    channel_count: r.channel_count,
                    last_seen_ms_ago: age.as_millis() as u64,
                }
            })
            .collect()
    }
}

pub fn is_online(last_seen: Instant, now: Instant, hello_interval: Duration) -> bool {
    now.saturating_duration_since(last_seen) < hello_interval * MISSED_HELLOS_OFFLINE
}

/// `(device_id, online)` for every registered device, sorted by id.
pub fn device_liveness(registry: &Registry, now: Instant, hello_interval: Duration) -> Vec<(String, bool)> {
    registry
        .snapshot()
        .into_iter()
        .map(|r| {
            let online = is_online(r.last_seen, now, hello_interval);
            (r.device_id, online)
        })
        .collect()
}
