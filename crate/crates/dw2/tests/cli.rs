// SPDX-License-Identifier: Apache-2.0

use std::net::TcpListener;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use dw2::client::{query_info_timeout, ClientOptions, ClientSession};
use dw2::codec::Quality;
use dw2::config::{grid_config, to_json};
use dw2::images::generate_synthetic;
use dw2::service::sink::png_path;
use dw2::Mode;

const BENCH: &str = env!("CARGO_BIN_EXE_dw2-bench");
const SERVICE: &str = env!("CARGO_BIN_EXE_dw2-service");

#[test]
fn bench_writes_csv() {
    let out = Command::new(BENCH)
        .args(["--frames", "3", "--sweep", "mode=direct,dispatcher;tile_size=64,128"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5, "{text}");
    assert!(lines[0].starts_with("mode,tile_size,quality,clients"));
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 11));
}

#[test]
fn bench_rejects_bad_axis() {
    let out = Command::new(BENCH).args(["--sweep", "colour=red"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn service_refuses_window_sink() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wall.json");
    std::fs::write(&cfg, to_json(&grid_config(1, 1, 64, 48, Mode::Direct, 1, "127.0.0.1", 1).unwrap())).unwrap();
    let out = Command::new(SERVICE)
        .args(["--config", cfg.to_str().unwrap(), "--role", "display", "--display-id", "0", "--sink", "window"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("window"));
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn service_roles_as_processes() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = grid_config(2, 1, 64, 48, Mode::Direct, 2, "127.0.0.1", 0).unwrap();
    config.coordinator.port = free_port();
    for d in &mut config.displays {
        d.endpoint.port = free_port();
    }
    let path = dir.path().join("wall.json");
    std::fs::write(&path, to_json(&config)).unwrap();
    let frames_dir = dir.path().join("frames");
    let spawn = |extra: &[&str]| {
        let mut c = Command::new(SERVICE);
        c.args(["--config", path.to_str().unwrap(), "--log-level", "warn"]).args(extra).stdout(Stdio::null());
        Killed(c.spawn().unwrap())
    };
    let sink = format!("png:{}", frames_dir.display());
    let _head = spawn(&["--role", "head"]);
    let _displays: Vec<Killed> = (0..2)
        .map(|i| spawn(&["--role", "display", "--display-id", &i.to_string(), "--sink", &sink]))
        .collect();

    let info = query_info_timeout(&config.coordinator, Duration::from_secs(20)).unwrap();
    let options = ClientOptions {
        quality: Quality::Raw,
        ..Default::default()
    };
    let mut s = ClientSession::connect(&info, 0, 1, options).unwrap();
    let image = generate_synthetic(128, 48, 16, 1);
    for _ in 0..2 {
        let f = s.begin_frame_timeout(Duration::from_secs(20)).unwrap().unwrap();
        s.send_rgba(f, image.clone(), 0, 0).unwrap();
    }
    assert!(s.wait_frame_complete(1, Duration::from_secs(20)).unwrap());
    s.disconnect().unwrap();
    for d in 0..2 {
        let p = png_path(&frames_dir, d, 1);
        // the sink writes asynchronously after completion
        for _ in 0..200 {
            if p.exists() {
                break;
            }
            std::thread::sleep(Duration::from_millis(25));
        }
        let got = image::open(&p).unwrap().into_rgba8();
        let want = image.crop(&config.display_region(d).unwrap()).unwrap();
        assert_eq!(got.as_raw(), want.as_bytes(), "display {d}");
    }
}
