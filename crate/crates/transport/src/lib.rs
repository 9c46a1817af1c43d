//! Reliable delivery of band messages over UDP.
//!
//! Every PATTERN and STOP is acknowledged by the device. Unacknowledged
//! messages are re-sent after the ACK timeout, up to three retries, after
//! which the delivery is reported as failed. Devices announce themselves with
//! periodic HELLO beacons, which also drive the online/offline status.

pub mod fault;
pub mod registry;
mod reliable;

use thiserror::Error;

pub use fault::FaultPlan;
pub use registry::{device_liveness, DeviceRecord, DeviceStatus, Registry, DEFAULT_HELLO_INTERVAL};
pub use reliable::{
    DeliveryResult, DeliveryStatus, Outbound, StatsSnapshot, Submission, Transport, TransportConfig,
    DEFAULT_ACK_TIMEOUT, DEFAULT_MAX_RETRIES, DEFAULT_UDP_PORT,
};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("E_UNKNOWN_DEVICE: no device registered as {0:?}")]
    UnknownDevice(String),
    #[error("E_SOCKET: {0}")]
    Socket(#[source] std::io::Error),
    #[error(transparent)]
    Encode(#[from] haptic_core::WireError),
    #[error("transport shut down")]
    Shutdown,
}
