use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dhop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhop"))
        .arg("--config")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const HARDY: &str = r#"
command = "constant"
kind = "A_sup"
p = 2.0
operator = { alpha = -0.5, kernel = "hardy" }
"#;

#[test]
fn constant_round_trips_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("{HARDY}p = 3.0\n").replace("p = 2.0\n", ""),
    );
    let o = dhop(&[s(&cfg)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = json(&o);
    let b = &v["results"][0]["bound"];
    assert_eq!(b["kind"], "A_sup");
    let got = b["value"].as_f64().unwrap();
    assert!((got - 1.5).abs() < 1e-12, "{got}");
    assert_eq!(v["meta"]["config"]["p"], 3.0);
    assert!(v["meta"]["timestamp"].is_string());
}

#[test]
fn zero_kernel_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "z.toml",
        "command = \"apply\"\npoints = [1.0]\noperator = { alpha = 0.3, kernel = \"zero\" }\nfunction = { terms = [{ c = 5.0, lo = -3.0, hi = inf }] }\n",
    );
    let o = dhop(&[s(&cfg)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(json(&o)["results"][0]["points"][0]["value"], 0.0);
}

#[test]
fn output_is_deterministic_apart_from_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "command = \"report\"\ncheck = \"upper_bound_sweep\"\nn = 6\n",
    );
    let run = |seed: &str| {
        let mut v = json(&dhop(&[s(&cfg), "--seed", seed]));
        v["meta"]["timestamp"] = Value::Null;
        v
    };
    let (a, b) = (run("7"), run("7"));
    assert_eq!(a, b);
    assert_eq!(a["results"][0]["sweep"]["n"], 6);
    assert_eq!(a["results"][0]["sweep"]["violations"], 0);
    assert_ne!(
        a["results"][0]["sweep"]["records"],
        run("8")["results"][0]["sweep"]["records"]
    );
}

#[test]
fn divergent_constants_are_reported_as_inf() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.toml",
        &format!("{HARDY}weight = {{ type = \"power\", beta = 1.0 }}\n"),
    );
    let o = dhop(&[s(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["results"][0]["bound"]["value"], "inf");
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn batch_accumulates_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{HARDY}\n[[batch]]\nlabel = \"a\"\n\n[[batch]]\nlabel = \"b\"\nkind = \"hardy_power\"\np = 4.0\n\n[[batch]]\nlabel = \"c\"\ncommand = \"apply\"\nfunction = {{ terms = [{{ lo = 0.0, hi = 1.0 }}] }}\npoints = [2.0]\noracle = \"hardy\"\n"
    );
    let cfg = write(dir.path(), "b.toml", &text);
    let o = dhop(&[s(&cfg)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = json(&o);
    let r = v["results"].as_array().unwrap();
    assert_eq!(r.len(), 3);
    assert_eq!(r[0]["label"], "a");
    assert!((r[0]["bound"]["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((r[1]["bound"]["value"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-15);
    let pt = &r[2]["points"][0];
    assert!((pt["value"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert!((pt["oracle"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn csv_curve_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "command = \"certify\"\np = 2.0\nu_grid = [0.1, 0.01]\noperator = { alpha = -0.5, kernel = \"hardy\" }\n[output]\nformat = \"csv\"\n",
    );
    let out = dir.path().join("curve.csv");
    let o = dhop(&[s(&cfg), "--out", s(&out)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "u,L,err");
    assert_eq!(lines.len(), 3);
    let l: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // L(u) = 2 - 2(1-u)/log(1/u) for the Hardy average on L^2.
    for (u, l) in [0.1f64, 0.01].into_iter().zip(l) {
        assert!(
            (l - (2.0 - 2.0 * (1.0 - u) / (1.0 / u).ln())).abs() < 1e-8,
            "{l}"
        );
    }
}

#[test]
fn config_errors_exit_1_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (format!("{HARDY}colour = 3\n"), "colour"),
        (HARDY.replace("p = 2.0", "p = 0.5"), "`p`"),
        (HARDY.replace("\"hardy\"", "\"hardyy\""), "operator.kernel"),
        (HARDY.replace("p = 2.0", "p = "), "line"),
        ("command = \"report\"\n".to_string(), "check"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("e{i}.toml"), text);
        let o = dhop(&[s(&cfg)]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(1), "case {i}: {err}");
        assert!(err.contains(needle), "case {i}: {err}");
        assert!(o.stdout.is_empty());
    }
    let o = dhop(&[s(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn non_convergence_exits_2_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "n.toml",
        "command = \"apply\"\ntol = 1e-300\npoints = [0.5]\noperator = { alpha = -0.5, kernel = \"hardy\" }\nfunction = { terms = [{ a = -0.9, lo = 0.0, hi = 1.0 }] }\n",
    );
    let o = dhop(&[s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    assert_eq!(v["results"][0]["points"][0]["converged"], false);
    assert!(v["warnings"][0]
        .as_str()
        .unwrap()
        .contains("did not converge"));
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/c4_multiplicative.toml");
    let run = |n: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_dhop"))
            .arg("--config")
            .arg(&cfg)
            .env("DHOP_THREADS", n)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        let mut v = json(&o);
        v["meta"]["timestamp"] = Value::Null;
        v
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            dhop_cli::config::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert_eq!(n, 8);
}
