//! End-to-end checks of the command-line surface: exit codes, deterministic
//! output and the trace round trip.

use std::process::Command;

fn pim(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pim"))
        .args(args)
        .env_remove("PIM_SEED")
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    (out.status.code().unwrap_or(-1), text)
}

#[test]
fn mult_reports_table_values() {
    let (code, out) = pim(&[
        "mult",
        "--n",
        "32",
        "--a",
        "0xDEADBEEF",
        "--b",
        "0x12345678",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("cycles     611"), "{out}");
    assert!(out.contains("memristors 441"));
    assert!(out.contains("partitions 31"));
    let want = 0xDEADBEEFu128 * 0x12345678u128;
    assert!(out.contains(&format!("({want})")));
}

#[test]
fn mult_zero_and_width_error() {
    let (code, out) = pim(&["mult", "--n", "8", "--a", "0", "--b", "7"]);
    assert_eq!(code, 0);
    assert!(out.contains("product    0x0 (0)"));
    let (code, _) = pim(&["mult", "--n", "8", "--a", "0x1FF", "--b", "1"]);
    assert_eq!(code, 2);
}

#[test]
fn verify_is_deterministic_and_exhaustive() {
    let (code, out) = pim(&["verify", "--n", "4"]);
    assert_eq!(code, 0);
    assert!(out.contains("256 products"));
    let args = ["verify", "--n", "16", "--samples", "50", "--seed", "42"];
    let (c1, first) = pim(&args);
    let (c2, second) = pim(&args);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(
        first, second,
        "same invocation and seed must match byte for byte"
    );
}

#[test]
fn tables_reproduce_published_values() {
    let (code, out) = pim(&["tables", "--which", "latency", "--csv"]);
    assert_eq!(code, 0);
    assert!(out.contains("multpim,N log2 N+14N+3,291,611"), "{out}");
    assert!(out.contains("rime,2N^2+16N-19,749,2541"));
    let (code, out) = pim(&["tables", "--which", "area", "--csv"]);
    assert_eq!(code, 0);
    assert!(out.contains("multpim,14N-7,217,441"));
    assert!(out.contains("multpim_area,10N,160,320"));
    let (code, out) = pim(&["tables", "--which", "matvec", "--csv"]);
    assert_eq!(code, 0);
    assert!(out.contains("floatpim,109616,m x 1723"));
    assert!(out.contains("multpim,4292,m x 965"));
    assert!(out.contains("multpim_area,6204,m x 778"));
}

#[test]
fn trace_round_trip() {
    let dir = std::env::temp_dir().join("pim-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("trace.jsonl");
    let path_s = path.to_str().unwrap();
    let (code, _) = pim(&[
        "mult", "--n", "8", "--a", "0xAB", "--b", "0xCD", "--trace", path_s,
    ]);
    assert_eq!(code, 0);
    let (code, out) = pim(&[
        "trace-replay",
        "--trace",
        path_s,
        "--n",
        "8",
        "--a",
        "0xAB",
        "--b",
        "0xCD",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("replayed 139 cycles"), "{out}");
    assert!(out.contains("product 0x88ef"));
}

#[test]
fn matvec_subcommand() {
    let (code, out) = pim(&[
        "matvec", "--rows", "2", "--cols", "2", "--bits", "4", "--matrix", "1 2 3 4", "--x", "5 6",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("y[0] = 0x11 (17)"), "{out}");
    assert!(out.contains("y[1] = 0x27 (39)"));
    let (code, _) = pim(&[
        "matvec", "--rows", "2", "--cols", "2", "--bits", "4", "--matrix", "1 2 3", "--x", "5 6",
    ]);
    assert_eq!(code, 2);
}
