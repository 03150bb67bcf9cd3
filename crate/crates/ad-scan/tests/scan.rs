use std::path::{Path, PathBuf};
use std::process::Command;

use ad_scan::{gallery_manifest, open_index, scan_report, GalleryManifest, ScanReport};
use adreplay_core::ads::{spn_block_check, AdType, BlockReason, Service};
use adreplay_core::warc::write_warc;
use adreplay_core::{canonicalize, CaptureRecord, Timestamp14};
use proptest::prelude::*;

const TS: &str = "20230307120000";
const SEED: &str = "https://www.ign.com/tv/the-last-of-us-the-series";

fn rec(url: &str, mime: &str, body: &[u8]) -> CaptureRecord {
    let at = Timestamp14::parse(TS).unwrap().to_datetime();
    CaptureRecord::response(url, at, 200, &[("Content-Type", mime)], body.to_vec())
}

fn warc(dir: &Path, records: &[CaptureRecord]) -> PathBuf {
    let path = dir.join("data.warc.gz");
    write_warc(records, true, &path).unwrap();
    path
}

/// A PNG header declaring `w`×`h`.
fn png(w: u32, h: u32) -> Vec<u8> {
    let mut v = b"\x89PNG\r\n\x1a\n\x00\x00\x00\x0dIHDR".to_vec();
    v.extend_from_slice(&w.to_be_bytes());
    v.extend_from_slice(&h.to_be_bytes());
    v.extend_from_slice(&[8, 6, 0, 0, 0, 0, 0, 0, 0]);
    v
}

fn gallery_fixture() -> Vec<CaptureRecord> {
    vec![
        rec(SEED, "text/html", b"<html><body>page</body></html>"),
        rec("https://s0.2mdn.net/ads/banner.png", "image/png", &png(300, 250)),
        rec("https://cdn.example.test/side.jpg", "image/jpeg", b"\xff\xd8\xff\xe0 not a full jpeg"),
        rec("https://s-static.innovid.com/v/spot.mp4", "video/mp4", b"\x00\x00\x00\x18ftypmp42"),
        rec("https://securepubads.g.doubleclick.net/pixel.gif", "image/gif", b"GIF89a\x01\x00\x01\x00"),
    ]
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ad-scan"))
}

#[test]
fn gallery_lists_three_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let path = warc(dir.path(), &gallery_fixture());
    let out = dir.path().join("g");
    let m = ad_scan::emit_gallery(&path, SEED, &out, "http://localhost:8080/web/").unwrap();

    // Oracle: everything that is image/video/html, not the seed, not named
    // like a tracking pixel.
    let fixture = gallery_fixture();
    let expected: Vec<&str> = fixture
        .iter()
        .filter_map(|r| r.target_uri.as_deref())
        .filter(|u| *u != SEED && !u.ends_with("pixel.gif"))
        .collect();
    assert_eq!(m.len(), expected.len());
    assert_eq!(m.len(), 3);
    let mut listed: Vec<&str> = m.items().map(|i| i.urir.as_str()).collect();
    listed.sort();
    let mut want = expected.clone();
    want.sort();
    assert_eq!(listed, want);
    assert_eq!(m.groups[&AdType::Image].len(), 2);
    assert_eq!(m.groups[&AdType::Video].len(), 1);

    let on_disk: GalleryManifest =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, m);
    for item in m.items() {
        assert_eq!(item.urim, format!("http://localhost:8080/web/{TS}id_/{}", item.urir));
        let page = std::fs::read_to_string(out.join(&item.page)).unwrap();
        assert!(page.contains(&item.urim));
    }
    let index = std::fs::read_to_string(out.join("index.html")).unwrap();
    assert!(index.contains("<h2>image (2)</h2>"));
    assert!(!index.contains("pixel.gif"));
}

#[test]
fn tiny_images_are_filtered_by_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let path = warc(
        dir.path(),
        &[rec(SEED, "text/html", b"x"), rec("https://t.test/beacon.png", "image/png", &png(1, 1)), rec("https://t.test/ad.png", "image/png", &png(3, 2))],
    );
    let index = open_index(&path).unwrap();
    let m = gallery_manifest(&index, SEED, "/web/").unwrap();
    let urls: Vec<&str> = m.items().map(|i| i.urir.as_str()).collect();
    assert_eq!(urls, ["https://t.test/ad.png"]);
}

#[test]
fn seed_only_archive_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = warc(dir.path(), &[rec(SEED, "text/html", b"<p>only</p>")]);
    let out = dir.path().join("g");
    let status = bin()
        .args(["gallery"])
        .arg(&path)
        .arg(SEED)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let m: GalleryManifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(m.is_empty());
}

#[test]
fn ign_invocation_shape() {
    let dir = tempfile::tempdir().unwrap();
    warc(dir.path(), &gallery_fixture());
    let output = bin()
        .current_dir(dir.path())
        .args(["gallery", "data.warc.gz", SEED])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(dir.path().join("gallery/manifest.json").exists());
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("3 candidates"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.warc");
    std::fs::write(&bad, b"NOT A WARC\r\n\r\n").unwrap();
    let run = |args: &[&str]| bin().current_dir(dir.path()).args(args).output().unwrap().status.code();
    assert_eq!(run(&["report", "bad.warc"]), Some(1));
    assert_eq!(run(&["report", "missing.warc"]), Some(1));
    assert_eq!(run(&["gallery", "bad.warc", SEED]), Some(1));
    assert_eq!(run(&["report"]), Some(2));
    assert_eq!(run(&["report", "x", "--format", "yaml"]), Some(2));
    assert_eq!(run(&["frobnicate"]), Some(2));
    assert_eq!(run(&["spn-check", "imgAd.jpg"]), Some(2));
    assert_eq!(run(&["spn-check"]), Some(2));
    warc(dir.path(), &gallery_fixture());
    assert_eq!(run(&["gallery", "data.warc.gz", "not a url"]), Some(2));
}

#[test]
fn spn_check_cli() {
    let output = bin()
        .args(["spn-check", "https://treid003.github.io/displayAds.js", "https://savingads.github.io/no_extension/imgAd"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert_eq!(
        text,
        "blocked\tad_file_name\tdisplayads\thttps://treid003.github.io/displayAds.js\n\
         allowed\tnot_blocked\t-\thttps://savingads.github.io/no_extension/imgAd\n"
    );
}

#[test]
fn report_counts_services() {
    let dir = tempfile::tempdir().unwrap();
    let path = warc(
        dir.path(),
        &[
            rec("https://e76308bcf1c30aa4c853507f4b382285.safeframe.googlesyndication.com/safeframe/1-0-40/html/container.html", "text/html", b"a"),
            rec("https://af393d3d232450caab92d97eaefb484e.safeframe.googlesyndication.com/safeframe/1-0-40/html/container.html", "text/html", b"b"),
            rec("https://aax-us-east.amazon-adsystem.com/e/dtb/admi?b=1&rnd=2", "text/html", b"c"),
        ],
    );
    let r = scan_report(&path).unwrap();
    let nonzero: Vec<(Service, usize)> = r.services.iter().filter(|(_, n)| **n > 0).map(|(s, n)| (*s, *n)).collect();
    assert_eq!(nonzero, [(Service::GoogleSafeframe, 2), (Service::Amazon, 1)]);
    assert_eq!(r.ad_types[&AdType::EmbeddedWebPage], 3);
    assert_eq!(r.verdicts.len(), 3);
    assert!(r.verdicts.iter().all(|v| v.reason == BlockReason::AdServiceHost));

    let json = r.to_json();
    assert!(json.contains("\"google_safeframe\": 2"));
    assert_eq!(ScanReport::from_json(&json).unwrap(), r);
    assert!(r.to_text().contains("google_safeframe   2"));
}

#[test]
fn empty_archive_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.warc");
    std::fs::write(&path, b"").unwrap();
    let r = scan_report(&path).unwrap();
    assert_eq!(r.captures, 0);
    assert!(r.services.values().all(|n| *n == 0));
    assert!(r.ad_types.values().all(|n| *n == 0));
    assert_eq!(r.services.len(), Service::ALL.len());

    let out = bin().args(["report", "--format", "json"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    let parsed = ScanReport::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(parsed, r);
}

#[test]
fn report_round_trips_through_loader() {
    let dir = tempfile::tempdir().unwrap();
    let path = warc(dir.path(), &gallery_fixture());
    let r = scan_report(&path).unwrap();
    assert_eq!(r.invisible, 1);
    assert_eq!(ScanReport::from_json(&r.to_json()).unwrap(), r);
    assert!(ScanReport::from_json("{\"archive\": 1}").is_err());
}

#[test]
fn classification_matches_mime_over_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let path = warc(dir.path(), &gallery_fixture());
    let index = open_index(&path).unwrap();
    for e in index.entries() {
        let r = ad_scan::classify(&index, e);
        match r.ad_type {
            AdType::Image => assert!(e.mime.starts_with("image/")),
            AdType::Video => assert!(e.mime.starts_with("video/")),
            AdType::EmbeddedWebPage => assert_eq!(e.mime, "text/html"),
            AdType::Other => {}
        }
    }
}

fn token_case() -> impl Strategy<Value = String> {
    (proptest::sample::select(vec!["imgad", "displayads", "videoad", "webad"]), any::<u64>()).prop_map(|(t, bits)| {
        t.chars()
            .enumerate()
            .map(|(i, c)| if bits >> (i % 64) & 1 == 1 { c.to_ascii_uppercase() } else { c })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verdicts_ignore_token_case(token in token_case(), ext in "[a-z]{1,4}", dir in "[a-z]{1,6}") {
        let lower = spn_block_check(&format!("https://h.test/{dir}/{}.{ext}", token.to_ascii_lowercase())).unwrap();
        let mixed = spn_block_check(&format!("https://h.test/{dir}/{token}.{ext}")).unwrap();
        prop_assert_eq!(lower.reason, mixed.reason);
        prop_assert_eq!(&lower.matched_token, &mixed.matched_token);
        prop_assert!(mixed.blocked);
        prop_assert_eq!(mixed.blocked, mixed.reason != BlockReason::NotBlocked);
    }

    #[test]
    fn file_tokens_without_extension_pass(token in token_case(), dir in "[a-z]{1,6}") {
        prop_assume!(!["advertisement_files", "displayads", "videoad", "webad", "ads"].contains(&dir.as_str()));
        let v = spn_block_check(&format!("https://h.test/{dir}/{token}")).unwrap();
        prop_assert!(!v.blocked, "{:?}", v);
    }

    #[test]
    fn manifest_never_contains_seed(
        paths in proptest::collection::vec("/[a-z]{1,5}(\\.(png|mp4|html))?", 1..8),
        seed_idx in 0usize..8,
        www in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mimes = ["image/png", "video/mp4", "text/html"];
        let records: Vec<CaptureRecord> = paths
            .iter()
            .enumerate()
            .map(|(i, p)| rec(&format!("https://www.site.test{p}"), mimes[i % 3], b"payload"))
            .collect();
        let seed_path = &paths[seed_idx % paths.len()];
        // The seed may be spelled differently from the capture.
        let seed = if www { format!("https://site.test{seed_path}") } else { format!("http://www.site.test{seed_path}") };
        let path = warc(dir.path(), &records);
        let index = open_index(&path).unwrap();
        let m = gallery_manifest(&index, &seed, "/web/").unwrap();
        let seed_key = canonicalize(&seed).unwrap();
        for item in m.items() {
            prop_assert_ne!(canonicalize(&item.urir).unwrap(), seed_key.clone());
        }
    }
}
