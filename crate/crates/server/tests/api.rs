mod common;

use std::time::Duration;

use common::{fast_transport, spec_with_len, start, start_with, AckPolicy, Api, FakeDevice};
use haptic_core::{builtin_presets, Body, PatternSpec};
use haptic_transport::TransportConfig;
use hband_sim::{SimConfig, Simulator};
use hdesigner_server::ServerConfig;
use serde_json::json;

fn heartbeat() -> serde_json::Value {
    serde_json::to_value(&builtin_presets().iter().find(|p| p.name == "heartbeat-60").unwrap().spec).unwrap()
}

async fn sim_for(server: &hdesigner_server::Server, id: &str) -> Simulator {
    let mut config = SimConfig::new(server.udp_addr(), id);
    config.listen = "127.0.0.1:0".parse().unwrap();
    config.hello_interval = Duration::from_millis(100);
    let sim = Simulator::spawn(config).unwrap();
    for _ in 0..500 {
        if server.transport().registry().contains(id) {
            return sim;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("simulator never registered");
}

#[tokio::test(flavor = "multi_thread")]
async fn render_returns_channels_and_segments() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("lib.json"), fast_transport()).await;
    let api = Api::new(srv.http_addr());

    let (code, body) = api.post("/api/render", &heartbeat()).await;
    assert_eq!(code, 200, "{body}");
    assert_eq!(body["delta_ms"], 10);
    let channels = body["channels"].as_object().unwrap();
    assert_eq!(channels.keys().collect::<Vec<_>>(), ["0", "1", "2"]);
    // 4 beats of 25 samples, 3 gaps of 75 ticks, 20 ticks of dub offset.
    assert_eq!(channels["0"].as_array().unwrap().len(), 345);
    let labels: Vec<&str> = body["segments"]["1"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels[0], "OFFSET");
    assert!(labels.contains(&"ATTACK") && labels.contains(&"RELEASE"));
    assert!(body["cycle"]["channels"].is_object());
}

#[tokio::test(flavor = "multi_thread")]
async fn render_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("lib.json"), fast_transport()).await;
    let api = Api::new(srv.http_addr());

    let mut bad = spec_with_len(10);
    bad["assignments"][0]["envelope"]["min_pct"] = json!(80.0);
    bad["assignments"][0]["envelope"]["peak_pct"] = json!(20.0);
    let (code, body) = api.post("/api/render", &bad).await;
    assert_eq!(code, 400);
    assert!(body["field"].as_str().unwrap().contains("min_pct"), "{body}");
    assert!(body["message"].as_str().unwrap().contains("min_pct"));

    let (code, body) = api.post("/api/render", &spec_with_len(600)).await;
    assert_eq!(code, 422);
    assert_eq!(body["error"], "REJECT_TOO_LONG");
    let (code, _) = api.post("/api/render", &spec_with_len(512)).await;
    assert_eq!(code, 200);

    let (code, body) = api.post_raw("/api/render", "{\"delta_ms\": 10").await;
    assert_eq!((code, body["error"].as_str()), (400, Some("E_SCHEMA")));

    let mut extra = spec_with_len(10);
    extra["bogus"] = json!(1);
    let (code, body) = api.post("/api/render", &extra).await;
    assert_eq!((code, body["field"].as_str()), (400, Some("bogus")));

    let mut missing = spec_with_len(10);
    missing["assignments"][0]["envelope"].as_object_mut().unwrap().remove("release");
    let (code, body) = api.post("/api/render", &missing).await;
    assert_eq!((code, body["field"].as_str()), (400, Some("release")));

    let mut curve = spec_with_len(10);
    curve["assignments"][0]["envelope"]["attack"]["curve"] = json!("CUBIC");
    assert_eq!(api.post("/api/render", &curve).await.0, 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn devices_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("lib.json"), fast_transport()).await;
    let api = Api::new(srv.http_addr());
    assert_eq!(api.get("/api/devices").await, (200, json!([])));

    let sim = sim_for(&srv, "band-01").await;
    let (_, devices) = api.get("/api/devices").await;
    assert_eq!(devices.as_array().unwrap().len(), 1);
    assert_eq!(devices[0]["device_id"], "band-01");
    assert_eq!(devices[0]["channel_count"], 3);
    assert_eq!(devices[0]["online"], true);

    // Three missed beacons at 100 ms.
    drop(sim);
    tokio::time::sleep(Duration::from_millis(400)).await;
    let (_, devices) = api.get("/api/devices").await;
    assert_eq!(devices[0]["online"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn play_and_stop_on_a_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("lib.json"), fast_transport()).await;
    let api = Api::new(srv.http_addr());
    let sim = sim_for(&srv, "band-01").await;

    let (code, body) = api.post("/api/devices/band-01/play", &heartbeat()).await;
    assert_eq!(code, 200, "{body}");
    assert_eq!(body["status"], "DELIVERED");
    assert_eq!(body["attempts"], 1);
    assert_eq!(body["seq"], 1);
    tokio::time::sleep(Duration::from_millis(150)).await;
    assert_eq!(sim.phase(), hband_sim::Phase::Playing);

    let (code, body) = api.post("/api/devices/band-01/stop", &json!(null)).await;
    assert_eq!((code, body["status"].as_str()), (200, Some("DELIVERED")));
    tokio::time::sleep(Duration::from_millis(40)).await;
    assert_eq!(sim.phase(), hband_sim::Phase::Idle);
    assert_eq!(sim.levels(), [0; 8]);

    // Stopping an idle band is harmless.
    let (code, _) = api.post("/api/devices/band-01/stop", &json!(null)).await;
    assert_eq!(code, 200);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_devices_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("lib.json"), fast_transport()).await;
    let api = Api::new(srv.http_addr());
    let (code, body) = api.post("/api/devices/ghost/play", &heartbeat()).await;
    assert_eq!((code, body["error"].as_str()), (404, Some("E_UNKNOWN_DEVICE")));
    let (code, _) = api.post("/api/devices/ghost/stop", &json!(null)).await;
    assert_eq!(code, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn play_rejects_masks_beyond_the_band() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("lib.json"), fast_transport()).await;
    let api = Api::new(srv.http_addr());
    let device = FakeDevice::register(srv.udp_addr(), "two", 2, AckPolicy::Ack).await;
    let (code, body) = api.post("/api/devices/two/play", &heartbeat()).await;
    assert_eq!(code, 400);
    assert_eq!(body["field"], "assignments[0].mask");
    let (code, _) = api.post("/api/devices/two/play", &spec_with_len(600)).await;
    assert_eq!(code, 422);
    assert!(device.received.lock().is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn oversized_datagram_is_422() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("lib.json"), fast_transport()).await;
    let api = Api::new(srv.http_addr());
    let _device = FakeDevice::register(srv.udp_addr(), "big", 8, AckPolicy::Ack).await;
    let mut spec = spec_with_len(512);
    spec["assignments"][0]["mask"] = json!(0xff);
    let (code, body) = api.post("/api/devices/big/play", &spec).await;
    assert_eq!((code, body["error"].as_str()), (422, Some("E_TOO_LARGE")));
    // No sequence number was spent.
    let (_, body) = api.post("/api/devices/big/play", &spec_with_len(10)).await;
    assert_eq!(body["seq"], 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn silent_device_fails_with_502_after_four_attempts() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("lib.json"), fast_transport()).await;
    let api = Api::new(srv.http_addr());
    let device = FakeDevice::register(srv.udp_addr(), "mute", 3, AckPolicy::Silent).await;
    let (code, body) = api.post("/api/devices/mute/play", &heartbeat()).await;
    assert_eq!(code, 502);
    assert_eq!(body["status"], "FAILED");
    assert_eq!(body["attempts"], 4);
    assert_eq!(device.received.lock().len(), 4);
    let (code, body) = api.post("/api/devices/mute/stop", &json!(null)).await;
    assert_eq!((code, body["attempts"].as_u64()), (502, Some(4)));
}

#[tokio::test(flavor = "multi_thread")]
async fn rapid_realtime_plays_coalesce() {
    let dir = tempfile::tempdir().unwrap();
    let transport = TransportConfig {
        ack_timeout: Duration::from_millis(1000),
        ..fast_transport()
    };
    let srv = start(&dir.path().join("lib.json"), transport).await;
    let api = Api::new(srv.http_addr());
    let device = FakeDevice::register(srv.udp_addr(), "slow", 3, AckPolicy::AckAfter(Duration::from_millis(200))).await;

    let play = |len: u32| {
        let api = api.clone();
        tokio::spawn(async move { api.post("/api/devices/slow/play?realtime=true", &spec_with_len(len)).await })
    };
    let first = play(3);
    device.wait_for_count(1).await;
    let second = play(4);
    tokio::time::sleep(Duration::from_millis(50)).await;
    let third = play(5);

    let (first, second, third) = (first.await.unwrap(), second.await.unwrap(), third.await.unwrap());
    assert_eq!((first.0, first.1["status"].as_str()), (200, Some("DELIVERED")));
    assert_eq!((second.0, second.1["status"].as_str()), (200, Some("SUPERSEDED")));
    assert_eq!(second.1["attempts"], 0);
    assert_eq!((third.0, third.1["status"].as_str()), (200, Some("DELIVERED")));

    // The superseded pattern never reached the wire.
    let lens: Vec<usize> = device
        .messages()
        .iter()
        .map(|m| match &m.body {
            Body::Pattern(p) => p.channels[&0].len(),
            other => panic!("unexpected {other:?}"),
        })
        .collect();
    assert_eq!(lens, vec![3, 5]);
}

#[tokio::test(flavor = "multi_thread")]
async fn stop_overtakes_queued_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let transport = TransportConfig {
        ack_timeout: Duration::from_millis(1000),
        ..fast_transport()
    };
    let srv = start(&dir.path().join("lib.json"), transport).await;
    let api = Api::new(srv.http_addr());
    let device = FakeDevice::register(srv.udp_addr(), "slow", 3, AckPolicy::AckAfter(Duration::from_millis(150))).await;

    let a = {
        let api = api.clone();
        tokio::spawn(async move { api.post("/api/devices/slow/play", &spec_with_len(3)).await })
    };
    device.wait_for_count(1).await;
    let b = {
        let api = api.clone();
        tokio::spawn(async move { api.post("/api/devices/slow/play", &spec_with_len(4)).await })
    };
    tokio::time::sleep(Duration::from_millis(30)).await;
    let (code, _) = api.post("/api/devices/slow/stop", &json!(null)).await;
    assert_eq!(code, 200);
    assert_eq!(a.await.unwrap().0, 200);
    assert_eq!(b.await.unwrap().0, 200);
    let kinds: Vec<&str> = device.messages().iter().map(|m| m.kind().as_str()).collect();
    assert_eq!(kinds, ["PATTERN", "STOP", "PATTERN"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn preset_crud() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lib.json");
    let srv = start(&path, fast_transport()).await;
    let api = Api::new(srv.http_addr());

    let (code, list) = api.get("/api/presets").await;
    assert_eq!(code, 200);
    assert_eq!(list, serde_json::to_value(builtin_presets()).unwrap());
    assert!(list.as_array().unwrap().iter().all(|p| p["builtin"] == true));

    let (code, hb) = api.get("/api/presets/heartbeat-60").await;
    assert_eq!((code, hb["spec"]["delta_ms"].as_u64()), (200, Some(10)));
    assert_eq!(api.get("/api/presets/nope").await.0, 404);

    let (code, saved) = api.put("/api/presets/my-heartbeat", &heartbeat()).await;
    assert_eq!(code, 201);
    assert_eq!(saved["builtin"], false);
    assert_eq!(api.put("/api/presets/my-heartbeat", &spec_with_len(5)).await.0, 200);
    assert_eq!(api.put("/api/presets/heartbeat-60", &heartbeat()).await.0, 409);
    assert_eq!(api.delete("/api/presets/heartbeat-60").await.0, 409);
    assert_eq!(api.delete("/api/presets/missing").await.0, 404);

    let mut bad = spec_with_len(5);
    bad["assignments"][0]["envelope"]["min_pct"] = json!(100.0);
    bad["assignments"][0]["envelope"]["peak_pct"] = json!(50.0);
    let (code, body) = api.put("/api/presets/bad", &bad).await;
    assert_eq!(code, 400);
    assert!(body["field"].as_str().unwrap().ends_with("min_pct"));

    api.put("/api/presets/name%20with%20spaces", &spec_with_len(7)).await;
    let (_, got) = api.get("/api/presets/name%20with%20spaces").await;
    assert_eq!(got["name"], "name with spaces");

    // Survives a restart.
    srv.shutdown().await.unwrap();
    let srv = start(&path, fast_transport()).await;
    let api = Api::new(srv.http_addr());
    let (_, list) = api.get("/api/presets").await;
    let names: Vec<&str> = list.as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), builtin_presets().len() + 2);
    assert!(names.contains(&"my-heartbeat"));
    let (_, mine) = api.get("/api/presets/my-heartbeat").await;
    let spec: PatternSpec = serde_json::from_value(mine["spec"].clone()).unwrap();
    assert_eq!(serde_json::to_value(spec).unwrap(), spec_with_len(5));

    assert_eq!(api.delete("/api/presets/my-heartbeat").await.0, 204);
    assert_eq!(api.get("/api/presets/my-heartbeat").await.0, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn serves_the_ui_directory() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<!doctype html><title>designer</title>").unwrap();
    std::fs::write(ui.join("app.js"), "console.log(1)").unwrap();
    let srv = start_with(ServerConfig {
        http_addr: "127.0.0.1:0".parse().unwrap(),
        udp_addr: "127.0.0.1:0".parse().unwrap(),
        library_path: dir.path().join("lib.json"),
        ui_dir: Some(ui),
        transport: fast_transport(),
    })
    .await;
    let base = format!("http://{}", srv.http_addr());
    let index = reqwest::get(format!("{base}/")).await.unwrap().text().await.unwrap();
    assert!(index.contains("designer"));
    let js = reqwest::get(format!("{base}/app.js")).await.unwrap().text().await.unwrap();
    assert_eq!(js, "console.log(1)");
    let api = reqwest::get(format!("{base}/api/presets")).await.unwrap();
    assert_eq!(api.status().as_u16(), 200);
}
