//! The simulated band: a network thread and a tick clock sharing one
//! [`PlaybackState`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use haptic_core::wire::{decode, encode, Body, WireMessage};
use parking_lot::{Condvar, Mutex};
use serde::Serialize;
use tracing::{debug, warn};

use crate::playback::{Interrupt, Levels, LoadedPattern, Phase, PlaybackEvent, PlaybackState};
use crate::trace::{write_line, TraceEvent, TraceHeader, TraceKind};

pub const DEFAULT_CHANNELS: u8 = 3;
pub const DEFAULT_HELLO_INTERVAL: Duration = Duration::from_millis(2000);

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub server: SocketAddr,
    pub device_id: String,
    pub channels: u8,
    pub listen: SocketAddr,
    pub hello_interval: Duration,
    pub trace_path: Option<PathBuf>,
    /// Keep events in memory for [`Simulator::trace`].
    pub record: bool,
    /// Swallow the first `n` ACKs instead of sending them.
    pub drop_acks: u32,
}

impl SimConfig {
    pub fn new(server: SocketAddr, device_id: impl Into<String>) -> Self {
        Self {
            server,
            device_id: device_id.into(),
            channels: DEFAULT_CHANNELS,
            listen: SocketAddr::from(([0, 0, 0, 0], 0)),
            hello_interval: DEFAULT_HELLO_INTERVAL,
            trace_path: None,
            record: true,
            drop_acks: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SimStats {
    pub hellos_sent: u64,
    pub received: u64,
    pub acks_sent: u64,
    pub acks_dropped: u64,
    pub applied: u64,
    pub duplicates: u64,
    pub malformed: u64,
}

struct TraceSink {
    events: Vec<TraceEvent>,
    record: bool,
    file: Option<BufWriter<File>>,
}

impl TraceSink {
    fn push(&mut self, event: TraceEvent) {
        if let Some(f) = &mut self.file {
            if let Err(e) = write_line(f, &event).and_then(|_| f.flush()) {
                warn!(error = %e, "trace write failed; disabling file trace");
                self.file = None;
            }
        }
        if self.record {
            self.events.push(event);
        }
    }
}

struct SimState {
    playback: PlaybackState,
    trace: TraceSink,
    next_tick: Option<Instant>,
    last_applied: HashMap<SocketAddr, u32>,
    acks_to_drop: u32,
    stats: SimStats,
}

struct Shared {
    state: Mutex<SimState>,
    wake: Condvar,
    shutdown: AtomicBool,
    epoch: Instant,
}

impl Shared {
    fn t_ms(&self, at: Instant) -> f64 {
        at.saturating_duration_since(self.epoch).as_secs_f64() * 1e3
    }
}

fn record(shared: &Shared, st: &mut SimState, at: Instant, events: Vec<PlaybackEvent>) {
    let t_ms = shared.t_ms(at);
    for e in events {
        let event = match e {
            PlaybackEvent::Tick(levels) => TraceEvent {
                levels: Some(levels),
                ..TraceEvent::new(t_ms, TraceKind::Tick)
            },
            PlaybackEvent::Stopped => TraceEvent::new(t_ms, TraceKind::Stopped),
            PlaybackEvent::Replaced => TraceEvent::new(t_ms, TraceKind::Replaced),
        };
        st.trace.push(event);
    }
}

/// A running simulator. Dropping it stops both threads.
pub struct Simulator {
    shared: Arc<Shared>,
    local_addr: SocketAddr,
    config: SimConfig,
    threads: Vec<JoinHandle<()>>,
}

impl Simulator {
    pub fn spawn(config: SimConfig) -> io::Result<Self> {
        let socket = UdpSocket::bind(config.listen)?;
        socket.set_read_timeout(Some(POLL))?;
        let local_addr = socket.local_addr()?;

        let mut file = None;
        if let Some(path) = &config.trace_path {
            let mut f = BufWriter::new(File::create(path)?);
            write_line(&mut f, &TraceHeader::new(&config.device_id, config.channels))?;
            f.flush()?;
            file = Some(f);
        }

        let shared = Arc::new(Shared {
            state: Mutex::new(SimState {
                playback: PlaybackState::new(),
                trace: TraceSink {
                    events: Vec::new(),
                    record: config.record,
                    file,
                },
                next_tick: None,
                last_applied: HashMap::new(),
                acks_to_drop: config.drop_acks,
                stats: SimStats::default(),
            }),
            wake: Condvar::new(),
            shutdown: AtomicBool::new(false),
            epoch: Instant::now(),
        });

        let net = {
            let shared = shared.clone();
            let config = config.clone();
            std::thread::Builder::new()
                .name("hband-net".into())
                .spawn(move || network_loop(&shared, &socket, &config))?
        };
        let clock = {
            let shared = shared.clone();
            std::thread::Builder::new()
                .name("hband-clock".into())
                .spawn(move || clock_loop(&shared))?
        };

        Ok(Self {
            shared,
            local_addr,
            config,
            threads: vec![net, clock],
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn device_id(&self) -> &str {
        &self.config.device_id
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader::new(&self.config.device_id, self.config.channels)
    }

    /// Events recorded so far.
    pub fn trace(&self) -> Vec<TraceEvent> {
        self.shared.state.lock().trace.events.clone()
    }

    pub fn stats(&self) -> SimStats {
        self.shared.state.lock().stats
    }

    pub fn phase(&self) -> Phase {
        self.shared.state.lock().playback.phase()
    }

    pub fn levels(&self) -> Levels {
        self.shared.state.lock().playback.levels()
    }

    /// Blocks until shutdown is requested from another handle or the
    /// threads exit.
    pub fn join(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(&self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        self.shared.wake.notify_all();
    }
}

impl Drop for Simulator {
    fn drop(&mut self) {
        self.shutdown();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn network_loop(shared: &Shared, socket: &UdpSocket, config: &SimConfig) {
    let mut buf = vec![0u8; 64 * 1024];
    let mut hello_seq = 0u32;
    let mut next_hello = Instant::now();
    while !shared.shutdown.load(Ordering::SeqCst) {
        if Instant::now() >= next_hello {
            hello_seq = hello_seq.wrapping_add(1);
            let hello = WireMessage::new(
                hello_seq,
                Body::Hello {
                    device_id: config.device_id.clone(),
                    channel_count: config.channels,
                },
            );
            match encode(&hello) {
                Ok(bytes) => {
                    if let Err(e) = socket.send_to(&bytes, config.server) {
                        debug!(error = %e, "hello send failed");
                    }
                    shared.state.lock().stats.hellos_sent += 1;
                }
                Err(e) => warn!(error = %e, "cannot encode HELLO"),
            }
            next_hello += config.hello_interval;
        }
        match socket.recv_from(&mut buf) {
            Ok((len, from)) => handle_datagram(shared, socket, config, &buf[..len], from),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            // Port-unreachable from an absent server, among others.
            Err(e) => {
                debug!(error = %e, "recv failed");
                std::thread::sleep(POLL);
            }
        }
    }
}

fn handle_datagram(shared: &Shared, socket: &UdpSocket, config: &SimConfig, datagram: &[u8], from: SocketAddr) {
    let msg = match decode(datagram) {
        Ok(msg) => msg,
        Err(e) => {
            debug!(error = %e, "dropping malformed datagram");
            shared.state.lock().stats.malformed += 1;
            return;
        }
    };
    if matches!(msg.body, Body::Ack) {
        return;
    }

    let mut st = shared.state.lock();
    let now = Instant::now();
    st.stats.received += 1;
    let last = st.last_applied.get(&from).copied().unwrap_or(0);
    // A server restart begins again at seq 1.
    let fresh = msg.seq > last || (msg.seq == 1 && last > 1);
    st.trace.push(TraceEvent {
        seq: Some(msg.seq),
        msg: Some(msg.kind().as_str().to_owned()),
        duplicate: !fresh,
        ..TraceEvent::new(shared.t_ms(now), TraceKind::MsgRx)
    });

    if st.acks_to_drop > 0 {
        st.acks_to_drop -= 1;
        st.stats.acks_dropped += 1;
    } else {
        let ack = encode(&WireMessage::ack(msg.seq)).expect("ACK always encodes");
        match socket.send_to(&ack, from) {
            Ok(_) => {
                st.stats.acks_sent += 1;
                st.trace.push(TraceEvent {
                    seq: Some(msg.seq),
                    ..TraceEvent::new(shared.t_ms(Instant::now()), TraceKind::AckTx)
                });
            }
            Err(e) => warn!(error = %e, "ack send failed"),
        }
    }

    if !fresh {
        st.stats.duplicates += 1;
        return;
    }
    let interrupt = match &msg.body {
        Body::Pattern(p) => Interrupt::Replace(LoadedPattern::from_payload(p, config.channels)),
        Body::Stop => Interrupt::Stop,
        Body::Hello { .. } | Body::Ack => return,
    };
    st.last_applied.insert(from, msg.seq);
    st.stats.applied += 1;
    let events = st.playback.interrupt(interrupt);
    record(shared, &mut st, Instant::now(), events);
    drop(st);
    shared.wake.notify_all();
}

fn clock_loop(shared: &Shared) {
    let mut st = shared.state.lock();
    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            return;
        }
        if st.playback.phase() == Phase::Idle && !st.playback.has_pending() {
            st.next_tick = None;
            shared.wake.wait(&mut st);
            continue;
        }
        let now = Instant::now();
        let due = *st.next_tick.get_or_insert(now);
        if now < due {
            shared.wake.wait_until(&mut st, due);
            continue;
        }
        let events = st.playback.tick();
        record(shared, &mut st, now, events);
        st.next_tick = st.playback.delta_ms().map(|ms| {
            let next = due + Duration::from_millis(u64::from(ms));
            // Resynchronise rather than burst after a long stall.
            if next + Duration::from_millis(u64::from(ms)) < now {
                now + Duration::from_millis(u64::from(ms))
            } else {
                next
            }
        });
    }
}
