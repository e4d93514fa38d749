mod common;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use nudgecred::dataset::read_ratings;
use nudgecred::nudge::NudgeKind;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nudgecred"));
    c.env("RUST_LOG", "warn");
    c
}

fn run_with_stdin(mut cmd: Command, input: &str) -> Output {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // the child may exit before reading its input
    let _ = child.stdin.take().unwrap().write_all(input.as_bytes());
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn annotate_fixture() {
    let out = bin()
        .args(["annotate", "--feed"])
        .arg(common::fixture("study_feed.jsonl"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 9);
    let input = std::fs::read_to_string(common::fixture("study_feed.jsonl")).unwrap();
    for (line, original) in lines.iter().zip(input.lines()) {
        let mut stripped = line.clone();
        stripped.as_object_mut().unwrap().remove("nudge");
        assert_eq!(stripped, serde_json::from_str::<serde_json::Value>(original).unwrap());
        assert_eq!(line["nudge"]["post_id"], line["id"]);
    }
    let kinds: Vec<&str> = lines.iter().map(|l| l["nudge"]["kind"].as_str().unwrap()).collect();
    assert_eq!(
        kinds,
        [
            "Reliable",
            "Reliable",
            "Reliable",
            "Questionable",
            "Questionable",
            "Questionable",
            "Unreliable",
            "Unreliable",
            "Unreliable"
        ]
    );
}

#[test]
fn annotate_reports_bad_lines_and_continues() {
    let good = r#"{"id":"a","author_handle":"someblog","text":"x","created_at":"2019-07-01T00:00:00Z","share_count":1,"replies":[]}"#;
    let input = format!("{good}\n{{broken\n\n{good}\n");
    let out = run_with_stdin(
        {
            let mut c = bin();
            c.args(["annotate", "--feed", "-"]);
            c
        },
        &input,
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout(&out).lines().count(), 1);
    let err = stderr(&out);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("line 4") && err.contains("duplicate"), "{err}");
    let v: serde_json::Value = serde_json::from_str(stdout(&out).lines().next().unwrap()).unwrap();
    assert_eq!(v["nudge"]["kind"], "None");
    assert_eq!(v["nudge"]["tooltip"], "");
}

#[test]
fn annotate_empty_input() {
    let out = run_with_stdin(
        {
            let mut c = bin();
            c.arg("annotate");
            c
        },
        "",
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn annotate_unreadable_registry() {
    let out = bin()
        .args([
            "annotate",
            "--registry-mainstream",
            "/nonexistent/mainstream.tsv",
            "--registry-nonmainstream",
            "/nonexistent/nonmainstream.tsv",
            "--feed",
        ])
        .arg(common::fixture("study_feed.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("registry"));
}

#[test]
fn annotate_with_custom_registry() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.tsv");
    let n = dir.path().join("n.tsv");
    std::fs::write(&m, "domain\thandle\tdisplay_name\tbias\nexample.org\texorg\tExample\tCenter\n").unwrap();
    std::fs::write(&n, "domain\thandle\tdisplay_name\tbias\tcategory\nbad.example\t\tBad\tRight\tsatire\n").unwrap();
    let input = concat!(
        r#"{"id":"a","author_handle":"exorg","text":"x","created_at":"2019-07-01T00:00:00Z","share_count":1}"#,
        "\n",
        r#"{"id":"b","author_handle":"x","source_domain":"news.bad.example","text":"x","created_at":"2019-07-01T00:00:00Z","share_count":1}"#,
        "\n",
        r#"{"id":"c","author_handle":"nytimes","text":"x","created_at":"2019-07-01T00:00:00Z","share_count":1}"#,
        "\n"
    );
    let out = run_with_stdin(
        {
            let mut c = bin();
            c.arg("annotate").arg("--registry-mainstream").arg(&m).arg("--registry-nonmainstream").arg(&n);
            c
        },
        input,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let kinds: Vec<String> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["nudge"]["kind"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds, ["Reliable", "Unreliable", "None"]);
    assert!(stdout(&out).contains("promotes satire"));
}

fn simulate(args: &[&str], out_dir: &Path) -> Output {
    bin().arg("simulate").args(args).arg("--out-dir").arg(out_dir).output().unwrap()
}

fn cell_means(dir: &Path) -> Vec<(String, String, f64)> {
    let rows = read_ratings(std::fs::File::open(dir.join("ratings.csv")).unwrap()).unwrap();
    let mut out = Vec::new();
    for kind in NudgeKind::NUDGES {
        for group in ["Control", "Treatment"] {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.nudge_kind == kind && r.group.to_string() == group)
                .map(|r| r.raw_score)
                .collect();
            out.push((kind.short_label().to_string(), group.to_string(), xs.iter().sum::<f64>() / xs.len() as f64));
        }
    }
    out
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let spec = common::fixture("comparison_spec.json");
    let spec = spec.to_str().unwrap();
    assert!(simulate(&["--spec", spec, "--seed", "42"], &a).status.success());
    assert!(simulate(&["--spec", spec, "--seed", "42"], &b).status.success());
    assert!(simulate(&["--spec", spec, "--seed", "43"], &c).status.success());
    for f in ["ratings.csv", "profiles.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(a.join("ratings.csv")).unwrap(), std::fs::read(c.join("ratings.csv")).unwrap());

    let targets = [0.62, 0.67, 0.58, 0.55, 0.46, 0.37];
    for dir in [&a, &c] {
        for ((label, group, mean), target) in cell_means(dir).into_iter().zip(targets) {
            assert!((mean - target).abs() <= 0.01, "{label} {group}: {mean}");
        }
    }
}

#[test]
fn simulate_rejects_malformed_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let text = std::fs::read_to_string(common::fixture("comparison_spec.json")).unwrap();
    std::fs::write(&spec, text.replace("\"participant_sd\"", "\"participant_sdev\"")).unwrap();
    let out = simulate(&["--spec", spec.to_str().unwrap()], &dir.path().join("out"));
    assert!(!out.status.success());
    assert!(stderr(&out).contains("participant_sdev"), "{}", stderr(&out));

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["cells"][1]["mean"] = "high".into();
    std::fs::write(&spec, v.to_string()).unwrap();
    let out = simulate(&["--spec", spec.to_str().unwrap()], &dir.path().join("out"));
    assert!(!out.status.success());
    assert!(stderr(&out).contains("mean"), "{}", stderr(&out));
}

#[test]
fn report_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate(&["--seed", "3"], dir.path()).status.success());
    let out = bin()
        .args(["report", "--ratings"])
        .arg(dir.path().join("ratings.csv"))
        .arg("--profiles")
        .arg(dir.path().join("profiles.csv"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let row = |label: &str| text.lines().find(|l| l.starts_with(label)).unwrap().to_string();
    assert!(row("T_R").contains("0.62") && row("T_R").contains("0.67"), "{text}");
    assert!(row("T_Q").contains("0.58") && row("T_Q").contains("0.55"), "{text}");
    assert!(row("T_U").contains("0.46") && row("T_U").contains("0.37") && row("T_U").ends_with("***"), "{text}");
    assert!(row("n ").contains("693") && row("n ").contains("597"), "{text}");
    assert!(text.contains("Cronbach's alpha"));

    let out = bin()
        .args(["report", "--format", "json", "--ratings"])
        .arg(dir.path().join("ratings.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["n_ratings"], 3870);
    assert_eq!(v["cells"].as_array().unwrap().len(), 3);
    let alpha = v["reliability"]["alpha"].as_f64().unwrap();
    assert!((alpha - 0.95).abs() <= 0.02, "{alpha}");
}

#[test]
fn report_single_group_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let header = "participant_id,post_id,group,nudge_kind,item1,item2,item3,item4,item5,interest,raw_score,z_score\n";
    let single = format!(
        "{header}a,t1,Control,Reliable,1,2,3,4,5,3,3.0,0\nb,t1,Control,Reliable,2,2,3,4,5,3,3.2,0\nb,t2,Control,Unreliable,2,2,2,2,2,3,2.0,0\n"
    );
    let path = dir.path().join("single.csv");
    std::fs::write(&path, single).unwrap();
    let out = bin().arg("report").arg("--ratings").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for label in ["T_R", "T_Q", "T_U"] {
        let row = text.lines().find(|l| l.starts_with(label)).unwrap();
        assert!(row.ends_with("N/A"), "{row}");
    }

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, header).unwrap();
    let out = bin().arg("report").arg("--ratings").arg(&empty).output().unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no data rows"), "{}", stderr(&out));
}

/// Child process killed on drop.
struct Served(std::process::Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_rate_export_report() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let mut child = Served(
        bin()
            .args(["serve", "--port", "0", "--seed", "11", "--feed"])
            .arg(common::fixture("study_feed.jsonl"))
            .arg("--store-dir")
            .arg(&store)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(child.0.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").expect("listening line").to_string();

    let client = reqwest::blocking::Client::new();
    let mut orders = Vec::new();
    for p in 0..5 {
        let pid = format!("cli{p}");
        let view: serde_json::Value =
            serde_json::from_str(&client.get(format!("{base}/api/feed?participant={pid}")).send().unwrap().text().unwrap())
                .unwrap();
        let ids: Vec<String> = view["posts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["id"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(ids.len(), 9);
        for (i, id) in ids.iter().enumerate() {
            let v = (i % 5 + 1) as u8;
            let resp = client
                .post(format!("{base}/api/ratings"))
                .header("content-type", "application/json")
                .body(common::rating(id, &pid, [v, v, 6 - v, v, v]).to_string())
                .send()
                .unwrap();
            assert_eq!(resp.status().as_u16(), 201);
        }
        orders.push(ids);
    }
    // presentation order is shuffled per participant
    assert!(orders.iter().any(|o| o != &orders[0]));
    drop(child);

    let out = bin().arg("report").arg("--store-dir").arg(&store).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("T_R") && text.contains("T_Q") && text.contains("T_U"));

    let export = dir.path().join("export");
    let out = bin()
        .args(["export", "--store-dir"])
        .arg(&store)
        .arg("--out-dir")
        .arg(&export)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_ratings(std::fs::File::open(export.join("ratings.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 45);
    let out = bin().arg("report").arg("--ratings").arg(export.join("ratings.csv")).output().unwrap();
    assert_eq!(stdout(&out), text);
}

#[test]
fn serve_fails_fast_on_bad_feed() {
    let dir = tempfile::tempdir().unwrap();
    let feed = dir.path().join("feed.jsonl");
    std::fs::write(&feed, "{oops\n").unwrap();
    let out = bin()
        .args(["serve", "--port", "0", "--feed"])
        .arg(&feed)
        .arg("--store-dir")
        .arg(dir.path().join("s"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
}
