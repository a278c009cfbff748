use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn lava(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lava")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("s.cfg"), "preset = ellipsoid\nlayers = 3\n").unwrap();
    std::fs::write(p.join("cam.cfg"), "azimuth_deg = 15\nelevation_deg = 10\ndistance = 4\nwidth = 48\nheight = 48\n").unwrap();
    let row = |k: usize| (0..63).map(|i| format!("{}", ((i * 7 + k * 3) % 11) as f32 / 10.0 - 0.5)).collect::<Vec<_>>().join(",");
    std::fs::write(p.join("p.csv"), format!("{}\n{}\n", row(0), row(1))).unwrap();
    let o = lava(&["bake", "s.cfg", "-o", "a.lava", "--grid", "16", "--tex", "16"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

#[test]
fn bake_inspect_render_compare() {
    let dir = setup();
    let p = dir.path();
    let info = stdout(&lava(&["inspect", "a.lava"], p));
    assert!(info.contains("layers      3") && info.contains("params      63") && info.contains("BLND"), "{info}");

    for (out, mode) in [("r1", "prebaked"), ("r2", "prebaked"), ("f", "fused")] {
        let o = lava(&["render", "a.lava", "--params", "p.csv", "--camera", "cam.cfg", "-o", out, "--mode", mode, "--raw", "--transmittance"], p);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(p.join("r1/frame_00001.png").exists() && p.join("r1/frame_00001.raw").exists() && p.join("r1/frame_00001.t").exists());
    let same = stdout(&lava(&["compare", "r1", "r2", "--metric", "psnr"], p));
    assert!(same.contains("mean\tinf"), "{same}");
    let o = lava(&["oracle-render", "s.cfg", "--params", "p.csv", "--camera", "cam.cfg", "-o", "o"], p);
    assert!(o.status.success());
    let cmp = stdout(&lava(&["compare", "r1", "o", "--foreground", "r1"], p));
    let mean: f64 = cmp.lines().last().unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!(mean > 25.0, "{cmp}");
}

#[test]
fn render_reports_layer_order() {
    let dir = setup();
    let o = lava(&["render", "a.lava", "--params", "p.csv", "--camera", "cam.cfg", "-o", "r", "--check-order"], dir.path());
    assert_eq!(stdout(&o).trim(), "layer-order violations: 0");
}

#[test]
fn background_is_an_rgb_triple() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("far.cfg"), "distance = 60\nwidth = 8\nheight = 8\n").unwrap();
    let o = lava(&["render", "a.lava", "--params", "p.csv", "--camera", "far.cfg", "-o", "bg", "--raw", "--background", "0.2,0.4,0.6"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let raw = std::fs::read(p.join("bg/frame_00000.raw")).unwrap();
    assert_eq!(&raw[12..15], &[51, 102, 153]);
    let o = lava(&["render", "a.lava", "--params", "p.csv", "--camera", "far.cfg", "-o", "bg", "--background", "0.2,0.4"], p);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = setup();
    let p = dir.path();
    assert_eq!(lava(&["render", "a.lava", "--nope"], p).status.code(), Some(1));
    assert_eq!(lava(&["inspect", "missing.lava"], p).status.code(), Some(3));
    std::fs::write(p.join("bad.lava"), b"LAVX").unwrap();
    let o = lava(&["inspect", "bad.lava"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad magic"));
    std::fs::write(p.join("short.csv"), "1,2,3\n").unwrap();
    assert_eq!(lava(&["render", "a.lava", "--params", "short.csv", "--camera", "cam.cfg", "-o", "r"], p).status.code(), Some(2));
    assert_eq!(lava(&["--help"], p).status.code(), Some(0));
}

#[test]
fn serve_and_play_over_both_transports() {
    let dir = setup();
    let p = dir.path();
    let mut server = Command::new(env!("CARGO_BIN_EXE_lava"))
        .args(["serve", "a.lava", "--params", "p.csv", "--mode", "both", "--listen", "127.0.0.1:0"])
        .args(["--listen-ws", "127.0.0.1:0", "--sessions", "1"])
        .current_dir(p)
        .stderr(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(server.stderr.take().unwrap());
    let mut addrs = Vec::new();
    for _ in 0..2 {
        let mut line = String::new();
        err.read_line(&mut line).unwrap();
        addrs.push(line.split_whitespace().last().unwrap().to_string());
    }
    let tcp = lava(&["play", "--connect", &addrs[0], "--camera", "cam.cfg", "-o", "pt", "--mode", "server"], p);
    assert!(tcp.status.success(), "{}", String::from_utf8_lossy(&tcp.stderr));
    let ws = lava(&["play", "--connect", &addrs[1], "--camera", "cam.cfg", "-o", "pw"], p);
    assert!(ws.status.success(), "{}", String::from_utf8_lossy(&ws.stderr));
    assert!(stdout(&ws).starts_with("frames 2 "));
    let out = server.wait_with_output().unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("sessions 2 ok 2"));

    assert!(lava(&["render", "a.lava", "--params", "p.csv", "--camera", "cam.cfg", "-o", "r"], p).status.success());
    assert!(stdout(&lava(&["compare", "r", "pw"], p)).contains("mean\tinf"));
    assert!(lava(&["compare", "r", "pt"], p).status.success());
}

#[test]
fn play_against_nothing_is_an_io_error() {
    let dir = setup();
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    drop(l);
    let o = lava(&["play", "--connect", &addr, "--camera", "cam.cfg", "-o", "x"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bench_prints_a_table() {
    let dir = setup();
    let o = lava(&["bench", "a.lava", "--sizes", "32,48", "--mesh", "4,16", "--frames", "2"], dir.path());
    let s = stdout(&o);
    assert!(o.status.success());
    assert!(s.contains("32x32") && s.contains("16^2") && s.matches("fps").count() == 4, "{s}");
}
