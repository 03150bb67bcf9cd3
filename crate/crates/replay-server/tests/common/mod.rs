#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use adreplay_core::warc::write_warc;
use adreplay_core::{CaptureRecord, RuleSet, Timestamp14};
use replay_server::{router, AppState, Collection, ServerConfig};

pub fn response(url: &str, ts14: &str, mime: &str, body: &[u8]) -> CaptureRecord {
    let at = Timestamp14::parse(ts14).unwrap().to_datetime();
    CaptureRecord::response(url, at, 200, &[("Content-Type", mime)], body.to_vec())
}

pub fn response_with(url: &str, ts14: &str, status: u16, headers: &[(&str, &str)], body: &[u8]) -> CaptureRecord {
    let at = Timestamp14::parse(ts14).unwrap().to_datetime();
    CaptureRecord::response(url, at, status, headers, body.to_vec())
}

pub fn write(dir: &Path, name: &str, records: &[CaptureRecord]) -> PathBuf {
    let path = dir.join(name);
    write_warc(records, true, &path).unwrap();
    path
}

pub fn collection(paths: &[PathBuf]) -> Collection {
    let (c, reports) = Collection::open(paths, RuleSet::builtin()).unwrap();
    assert!(reports.iter().all(|r| r.error.is_none()), "{reports:?}");
    c
}

pub struct TestServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
}

/// Starts the router on an ephemeral loopback port in a background runtime.
pub fn start(config: ServerConfig, collection: Collection) -> TestServer {
    let state = AppState::new(config, collection);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    TestServer { addr, state }
}

pub fn start_default(paths: &[PathBuf]) -> TestServer {
    start(ServerConfig::default(), collection(paths))
}

#[derive(Debug)]
pub struct Reply {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.text()))
    }
}

impl TestServer {
    pub fn get(&self, target: &str) -> Reply {
        self.request("GET", target, &[])
    }

    pub fn request(&self, method: &str, target: &str, headers: &[(&str, &str)]) -> Reply {
        let mut stream = TcpStream::connect(self.addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        let mut req = format!("{method} {target} HTTP/1.1\r\nHost: {}\r\nConnection: close\r\n", self.addr);
        for (n, v) in headers {
            req.push_str(&format!("{n}: {v}\r\n"));
        }
        req.push_str("\r\n");
        stream.write_all(req.as_bytes()).unwrap();
        let mut raw = Vec::new();
        stream.read_to_end(&mut raw).unwrap();
        parse_reply(&raw, method == "HEAD")
    }
}

fn parse_reply(raw: &[u8], head_only: bool) -> Reply {
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("response head");
    let head = std::str::from_utf8(&raw[..split]).unwrap();
    let mut lines = head.split("\r\n");
    let status: u16 = lines.next().unwrap().split(' ').nth(1).unwrap().parse().unwrap();
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(n, v)| (n.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut body = raw[split + 4..].to_vec();
    let chunked = headers
        .iter()
        .any(|(n, v)| n.eq_ignore_ascii_case("transfer-encoding") && v.contains("chunked"));
    if chunked && !head_only {
        body = dechunk(&body);
    }
    Reply { status, headers, body }
}

fn dechunk(mut rest: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let end = rest.windows(2).position(|w| w == b"\r\n").unwrap();
        let size = usize::from_str_radix(std::str::from_utf8(&rest[..end]).unwrap().trim(), 16).unwrap();
        rest = &rest[end + 2..];
        if size == 0 {
            return out;
        }
        out.extend_from_slice(&rest[..size]);
        rest = &rest[size + 2..];
    }
}

/// Watches this process's sockets and records every remote endpoint that
/// is not loopback. Linux only: reads `/proc`.
pub struct NetworkMonitor {
    stop: Arc<AtomicBool>,
    seen: Arc<Mutex<BTreeSet<String>>>,
    handle: Option<JoinHandle<()>>,
    pub samples: Arc<Mutex<usize>>,
    /// Loopback sockets observed; proves the table parsing sees our own
    /// connections.
    pub loopback: Arc<Mutex<usize>>,
}

impl NetworkMonitor {
    pub fn start() -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let seen = Arc::new(Mutex::new(BTreeSet::new()));
        let samples = Arc::new(Mutex::new(0));
        let loopback = Arc::new(Mutex::new(0));
        let handle = {
            let (stop, seen, samples, lo) = (stop.clone(), seen.clone(), samples.clone(), loopback.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let (found, local) = endpoints();
                    seen.lock().unwrap().extend(found);
                    *lo.lock().unwrap() += local;
                    *samples.lock().unwrap() += 1;
                    std::thread::sleep(Duration::from_millis(1));
                }
            })
        };
        Self {
            stop,
            seen,
            handle: Some(handle),
            samples,
            loopback,
        }
    }

    /// Stops sampling and returns every non-loopback remote seen.
    pub fn finish(mut self) -> BTreeSet<String> {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
        let (found, _) = endpoints();
        let mut seen = self.seen.lock().unwrap().clone();
        seen.extend(found);
        seen
    }
}

fn socket_inodes() -> BTreeSet<u64> {
    let Ok(dir) = std::fs::read_dir("/proc/self/fd") else {
        return BTreeSet::new();
    };
    dir.filter_map(|e| std::fs::read_link(e.ok()?.path()).ok())
        .filter_map(|target| {
            let t = target.to_string_lossy().into_owned();
            t.strip_prefix("socket:[")?.strip_suffix(']')?.parse().ok()
        })
        .collect()
}

/// Non-loopback remotes of this process's sockets, and how many connected
/// loopback sockets were seen.
fn endpoints() -> (Vec<String>, usize) {
    let inodes = socket_inodes();
    let mut out = Vec::new();
    let mut local = 0;
    for table in ["tcp", "tcp6", "udp", "udp6"] {
        let Ok(text) = std::fs::read_to_string(format!("/proc/self/net/{table}")) else {
            continue;
        };
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() < 10 {
                continue;
            }
            let Ok(inode) = cols[9].parse::<u64>() else { continue };
            if !inodes.contains(&inode) {
                continue;
            }
            let remote = cols[2];
            if !is_local_or_unset(remote) {
                out.push(format!("{table} {remote}"));
            } else if !remote.split(':').next().unwrap_or("").chars().all(|c| c == '0') {
                local += 1;
            }
        }
    }
    (out, local)
}

/// `remote` is `HEXADDR:HEXPORT` with the address in host byte order
/// per 32-bit word.
pub fn is_local_or_unset(remote: &str) -> bool {
    let Some((addr, _port)) = remote.split_once(':') else {
        return true;
    };
    if addr.chars().all(|c| c == '0') {
        return true;
    }
    let words: Vec<u32> = (0..addr.len() / 8)
        .filter_map(|i| u32::from_str_radix(&addr[i * 8..i * 8 + 8], 16).ok())
        .collect();
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    match bytes.len() {
        4 => bytes[0] == 127,
        16 => {
            let v6: [u8; 16] = bytes.try_into().unwrap();
            let ip = std::net::Ipv6Addr::from(v6);
            ip.is_loopback() || ip.to_ipv4_mapped().is_some_and(|v4| v4.is_loopback())
        }
        _ => false,
    }
}
