use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use haptic_core::wire::{decode, encode, Body, PatternPayload, WireMessage};
use haptic_core::MAX_DATAGRAM_BYTES;
use parking_lot::Mutex;
use serde::Serialize;
use tokio::net::UdpSocket;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tracing::{debug, warn};

use crate::fault::FaultPlan;
use crate::registry::{DeviceStatus, Registry, DEFAULT_HELLO_INTERVAL};
use crate::TransportError;

pub const DEFAULT_ACK_TIMEOUT: Duration = Duration::from_millis(200);
pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_UDP_PORT: u16 = 9750;

#[derive(Debug, Clone)]
pub struct TransportConfig {
    pub ack_timeout: Duration,
    pub max_retries: u32,
    pub hello_interval: Duration,
    pub faults: FaultPlan,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            ack_timeout: DEFAULT_ACK_TIMEOUT,
            max_retries: DEFAULT_MAX_RETRIES,
            hello_interval: DEFAULT_HELLO_INTERVAL,
            faults: FaultPlan::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeliveryStatus {
    Delivered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliveryResult {
    pub status: DeliveryStatus,
    pub seq: u32,
    /// Transmissions made, 1 initial plus retries.
    pub attempts: u32,
    /// Time from the last transmission to its ACK.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtt_ms: Option<f64>,
}

impl DeliveryResult {
    pub fn delivered(&self) -> bool {
        self.status == DeliveryStatus::Delivered
    }
}

/// Message to deliver reliably.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outbound {
    Pattern(PatternPayload),
    Stop,
}

impl Outbound {
    fn into_body(self) -> Body {
        match self {
            Outbound::Pattern(p) => Body::Pattern(p),
            Outbound::Stop => Body::Stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Submission {
    /// Replaced by a newer realtime pattern before it was transmitted.
    Superseded,
    Completed(DeliveryResult),
}

/// Counters for inbound traffic that was not routed anywhere.
#[derive(Debug, Default)]
pub struct Stats {
    pub malformed: AtomicU64,
    pub stray_acks: AtomicU64,
    pub hellos: AtomicU64,
    pub unexpected: AtomicU64,
    pub transmissions: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatsSnapshot {
    pub malformed: u64,
    pub stray_acks: u64,
    pub hellos: u64,
    pub unexpected: u64,
    pub transmissions: u64,
}

struct Job {
    outbound: Outbound,
    realtime: bool,
    reply: oneshot::Sender<Result<Submission, TransportError>>,
}

impl Job {
    fn is_stop(&self) -> bool {
        self.outbound == Outbound::Stop
    }
}

#[derive(Default)]
struct DeviceQueue {
    jobs: VecDeque<Job>,
    busy: bool,
}

struct Waiter {
    seq: u32,
    ack: oneshot::Sender<Instant>,
}

struct Inner {
    socket: UdpSocket,
    registry: Registry,
    config: TransportConfig,
    faults: Mutex<FaultPlan>,
    waiters: Mutex<HashMap<String, Waiter>>,
    queues: Mutex<HashMap<String, DeviceQueue>>,
    stats: Stats,
}

/// Server side of the band protocol.
///
/// Owns the UDP socket, answers HELLO beacons, and delivers PATTERN/STOP
/// messages with acknowledgement and retransmission. Each device has its own
/// FIFO queue with at most one unacknowledged message in flight.
pub struct Transport {
    inner: Arc<Inner>,
    recv_task: JoinHandle<()>,
}

impl Drop for Transport {
    fn drop(&mut self) {
        self.recv_task.abort();
    }
}

impl Transport {
    /// Binds the socket and starts the receive loop. Must be called inside a
    /// tokio runtime.
    pub async fn bind(addr: SocketAddr, config: TransportConfig) -> Result<Self, TransportError> {
        let socket = UdpSocket::bind(addr).await.map_err(TransportError::Socket)?;
        let inner = Arc::new(Inner {
            socket,
            registry: Registry::new(),
            faults: Mutex::new(config.faults.clone()),
            config,
            waiters: Mutex::new(HashMap::new()),
            queues: Mutex::new(HashMap::new()),
            stats: Stats::default(),
        });
        let recv_task = tokio::spawn(receive_loop(inner.clone()));
        Ok(Self { inner, recv_task })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.inner.socket.local_addr().expect("bound socket has an address")
    }

    pub fn registry(&self) -> &Registry {
        &self.inner.registry
    }

    pub fn config(&self) -> &TransportConfig {
        &self.inner.config
    }

    pub fn set_faults(&self, plan: FaultPlan) {
        *self.inner.faults.lock() = plan;
    }

    pub fn devices(&self) -> Vec<DeviceStatus> {
        self.inner.registry.status(Instant::now(), self.inner.config.hello_interval)
    }

    pub fn stats(&self) -> StatsSnapshot {
        let s = &self.inner.stats;
        StatsSnapshot {
            malformed: s.malformed.load(Ordering::Relaxed),
            stray_acks: s.stray_acks.load(Ordering::Relaxed),
            hellos: s.hellos.load(Ordering::Relaxed),
            unexpected: s.unexpected.load(Ordering::Relaxed),
            transmissions: s.transmissions.load(Ordering::Relaxed),
        }
    }

    /// Queues `outbound` for `device_id` and waits for the outcome.
    ///
    /// STOP jumps ahead of queued patterns. A realtime pattern evicts any
    /// realtime pattern still waiting in the queue; the evicted request
    /// resolves to [`Submission::Superseded`].
    pub async fn submit(&self, device_id: &str, outbound: Outbound, realtime: bool) -> Result<Submission, TransportError> {
        if !self.inner.registry.contains(device_id) {
            return Err(TransportError::UnknownDevice(device_id.to_owned()));
        }
        let (reply, rx) = oneshot::channel();
        let job = Job {
            outbound,
            realtime,
            reply,
        };
        let spawn_worker = {
            let mut queues = self.inner.queues.lock();
            let queue = queues.entry(device_id.to_owned()).or_default();
            if job.is_stop() {
                let at = queue.jobs.iter().take_while(|j| j.is_stop()).count();
                queue.jobs.insert(at, job);
            } else {
                if job.realtime {
                    let (stale, keep): (VecDeque<Job>, VecDeque<Job>) = std::mem::take(&mut queue.jobs)
                        .into_iter()
                        .partition(|j| j.realtime && !j.is_stop());
                    queue.jobs = keep;
                    for j in stale {
                        let _ = j.reply.send(Ok(Submission::Superseded));
                    }
                }
                queue.jobs.push_back(job);
            }
            !std::mem::replace(&mut queue.busy, true)
        };
        if spawn_worker {
            tokio::spawn(device_worker(self.inner.clone(), device_id.to_owned()));
        }
        rx.await.map_err(|_| TransportError::Shutdown)?
    }

    /// Delivers one message through the device queue and waits for its ACK.
    pub async fn send_reliable(&self, device_id: &str, outbound: Outbound) -> Result<DeliveryResult, TransportError> {
        match self.submit(device_id, outbound, false).await? {
            Submission::Completed(result) => Ok(result),
            Submission::Superseded => unreachable!("only realtime submissions are superseded"),
        }
    }
}

async fn device_worker(inner: Arc<Inner>, device_id: String) {
    loop {
        let job = {
            let mut queues = inner.queues.lock();
            let queue = queues.get_mut(&device_id).expect("queue exists while busy");
            match queue.jobs.pop_front() {
                Some(job) => job,
                None => {
                    queue.busy = false;
                    return;
                }
            }
        };
        let result = send_reliable(&inner, &device_id, job.outbound)
            .await
            .map(Submission::Completed);
        let _ = job.reply.send(result);
    }
}

async fn send_reliable(inner: &Inner, device_id: &str, outbound: Outbound) -> Result<DeliveryResult, TransportError> {
    let seq = inner
        .registry
        .next_seq(device_id)
        .ok_or_else(|| TransportError::UnknownDevice(device_id.to_owned()))?;
    let datagram = encode(&WireMessage::new(seq, outbound.into_body()))?;

    let (ack_tx, mut ack_rx) = oneshot::channel();
    inner.waiters.lock().insert(device_id.to_owned(), Waiter { seq, ack: ack_tx });

    let faults = inner.faults.lock().clone();
    let total = 1 + inner.config.max_retries;
    for attempt in 1..=total {
        // Re-resolve every attempt: the device may have re-registered from
        // a new port.
        let address = match inner.registry.get(device_id) {
            Some(rec) => rec.address,
            None => break,
        };
        if !faults.delay.is_zero() {
            tokio::time::sleep(faults.delay).await;
        }
        let sent_at = Instant::now();
        inner.stats.transmissions.fetch_add(1, Ordering::Relaxed);
        if faults.drops(attempt) {
            debug!(device_id, seq, attempt, "fault layer dropped datagram");
        } else {
            for _ in 0..faults.copies() {
                if let Err(e) = inner.socket.send_to(&datagram, address).await {
                    warn!(device_id, seq, attempt, error = %e, "send failed");
                }
            }
        }
        match tokio::time::timeout(inner.config.ack_timeout, &mut ack_rx).await {
            Ok(Ok(acked_at)) => {
                return Ok(DeliveryResult {
                    status: DeliveryStatus::Delivered,
                    seq,
                    attempts: attempt,
                    rtt_ms: Some(acked_at.saturating_duration_since(sent_at).as_secs_f64() * 1e3),
                });
            }
            Ok(Err(_)) => break,
            Err(_) => debug!(device_id, seq, attempt, "ack timeout"),
        }
    }

    {
        let mut waiters = inner.waiters.lock();
        if waiters.get(device_id).is_some_and(|w| w.seq == seq) {
            waiters.remove(device_id);
        }
    }
    warn!(device_id, seq, "delivery failed after {total} attempts");
    Ok(DeliveryResult {
        status: DeliveryStatus::Failed,
        seq,
        attempts: total,
        rtt_ms: None,
    })
}

async fn receive_loop(inner: Arc<Inner>) {
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let (len, from) = match inner.socket.recv_from(&mut buf).await {
            Ok(x) => x,
            Err(e) => {
                // ICMP port-unreachable from a vanished device surfaces here.
                debug!(error = %e, "recv error");
                continue;
            }
        };
        handle_datagram(&inner, &buf[..len], from).await;
    }
}

async fn handle_datagram(inner: &Inner, datagram: &[u8], from: SocketAddr) {
    let now = Instant::now();
    let msg = match decode(datagram) {
        Ok(msg) if datagram.len() <= MAX_DATAGRAM_BYTES => msg,
        Ok(_) | Err(_) => {
            inner.stats.malformed.fetch_add(1, Ordering::Relaxed);
            return;
        }
    };
    match msg.body {
        Body::Ack => {
            let Some(device_id) = inner.registry.touch(from, now) else {
                inner.stats.stray_acks.fetch_add(1, Ordering::Relaxed);
                return;
            };
            let waiter = {
                let mut waiters = inner.waiters.lock();
                match waiters.get(&device_id) {
                    Some(w) if w.seq == msg.seq => waiters.remove(&device_id),
                    _ => None,
                }
            };
            match waiter {
                Some(w) => {
                    let _ = w.ack.send(now);
                }
                None => {
                    inner.stats.stray_acks.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        Body::Hello {
            ref device_id,
            channel_count,
        } => {
            inner.stats.hellos.fetch_add(1, Ordering::Relaxed);
            if inner.registry.upsert_hello(device_id, from, channel_count, now) {
                debug!(device_id, %from, channel_count, "device registered");
            }
            if let Ok(ack) = encode(&WireMessage::ack(msg.seq)) {
                let _ = inner.socket.send_to(&ack, from).await;
            }
        }
        Body::Pattern(_) | Body::Stop => {
            inner.stats.unexpected.fetch_add(1, Ordering::Relaxed);
        }
    }
}
