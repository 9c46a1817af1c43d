#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use haptic_core::{decode, encode, Body, WireMessage};
use haptic_transport::TransportConfig;
use hdesigner_server::{Server, ServerConfig};
use parking_lot::Mutex;
use tokio::net::UdpSocket;

pub async fn start(library: &Path, transport: TransportConfig) -> Server {
    start_with(ServerConfig {
        http_addr: "127.0.0.1:0".parse().unwrap(),
        udp_addr: "127.0.0.1:0".parse().unwrap(),
        library_path: library.to_owned(),
        ui_dir: None,
        transport,
    })
    .await
}

pub async fn start_with(config: ServerConfig) -> Server {
    Server::start(config).await.expect("server starts")
}

pub fn fast_transport() -> TransportConfig {
    TransportConfig {
        ack_timeout: Duration::from_millis(50),
        hello_interval: Duration::from_millis(100),
        ..TransportConfig::default()
    }
}

#[derive(Clone)]
pub struct Api {
    pub base: String,
    pub http: reqwest::Client,
}

impl Api {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            base: format!("http://{addr}"),
            http: reqwest::Client::new(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn get(&self, path: &str) -> (u16, serde_json::Value) {
        let r = self.http.get(self.url(path)).send().await.unwrap();
        split(r).await
    }

    pub async fn post(&self, path: &str, body: &impl serde::Serialize) -> (u16, serde_json::Value) {
        let r = self.http.post(self.url(path)).json(body).send().await.unwrap();
        split(r).await
    }

    pub async fn post_raw(&self, path: &str, body: &'static str) -> (u16, serde_json::Value) {
        let r = self
            .http
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        split(r).await
    }

    pub async fn put(&self, path: &str, body: &impl serde::Serialize) -> (u16, serde_json::Value) {
        let r = self.http.put(self.url(path)).json(body).send().await.unwrap();
        split(r).await
    }

    pub async fn delete(&self, path: &str) -> (u16, serde_json::Value) {
        let r = self.http.delete(self.url(path)).send().await.unwrap();
        split(r).await
    }
}

async fn split(r: reqwest::Response) -> (u16, serde_json::Value) {
    let status = r.status().as_u16();
    let text = r.text().await.unwrap();
    let json = if text.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text))
    };
    (status, json)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckPolicy {
    Ack,
    AckAfter(Duration),
    Silent,
}

/// A hand-driven band: registers with one HELLO, records every datagram
/// it receives, and ACKs according to its policy.
pub struct FakeDevice {
    pub received: Arc<Mutex<Vec<Vec<u8>>>>,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for FakeDevice {
    fn drop(&mut self) {
        self.task.abort();
    }
}

impl FakeDevice {
    pub async fn register(server_udp: SocketAddr, id: &str, channels: u8, policy: AckPolicy) -> Self {
        let socket = Arc::new(UdpSocket::bind("127.0.0.1:0").await.unwrap());
        let hello = WireMessage::new(
            1,
            Body::Hello {
                device_id: id.to_owned(),
                channel_count: channels,
            },
        );
        socket.send_to(&encode(&hello).unwrap(), server_udp).await.unwrap();
        let mut buf = vec![0u8; 16 * 1024];
        let (len, _) = tokio::time::timeout(Duration::from_secs(2), socket.recv_from(&mut buf))
            .await
            .expect("HELLO acknowledged")
            .unwrap();
        assert_eq!(decode(&buf[..len]).unwrap(), WireMessage::ack(1));

        let received = Arc::new(Mutex::new(Vec::new()));
        let task = tokio::spawn({
            let received = received.clone();
            async move {
                loop {
                    let Ok((len, from)) = socket.recv_from(&mut buf).await else {
                        return;
                    };
                    let datagram = buf[..len].to_vec();
                    received.lock().push(datagram.clone());
                    let Ok(msg) = decode(&datagram) else { continue };
                    let ack = encode(&WireMessage::ack(msg.seq)).unwrap();
                    match policy {
                        AckPolicy::Ack => {
                            let _ = socket.send_to(&ack, from).await;
                        }
                        AckPolicy::AckAfter(d) => {
                            let socket = socket.clone();
                            tokio::spawn(async move {
                                tokio::time::sleep(d).await;
                                let _ = socket.send_to(&ack, from).await;
                            });
                        }
                        AckPolicy::Silent => {}
                    }
                }
            }
        });
        Self { received, task }
    }

    pub fn messages(&self) -> Vec<WireMessage> {
        self.received.lock().iter().map(|d| decode(d).unwrap()).collect()
    }

    pub async fn wait_for_count(&self, n: usize) {
        let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
        while self.received.lock().len() < n {
            assert!(tokio::time::Instant::now() < deadline, "device never received {n} datagrams");
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
    }
}

/// A spec whose single channel renders to `samples` ticks at 10 ms.
pub fn spec_with_len(samples: u32) -> serde_json::Value {
    assert!(samples >= 2);
    serde_json::json!({
        "delta_ms": 10,
        "repeat": 1,
        "delay_ms": 0,
        "assignments": [{
            "mask": 1,
            "offset_ms": 0,
            "envelope": {
                "peak_pct": 100.0,
                "min_pct": 0.0,
                "attack": {"duration_ms": 10, "curve": "LINEAR"},
                "sustain_ms": (samples - 2) * 10,
                "release": {"duration_ms": 10, "curve": "LINEAR"}
            }
        }]
    })
}
