//! The binary against direct library calls on the same inputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cadkit_core::eval::{chamfer, load_autoconstrain_dir, run_autoconstrain_eval, EvalConfig};
use cadkit_core::render::{display_image, encode_png, render_sketch, render_sketch_svg, RasterImage};
use cadkit_core::serialize::{parse_json, serialize, SerializationConfig};
use cadkit_core::solid::{extrude, rectangle_sketch, BooleanOp, ExtrusionOp, SolidModel};
use cadkit_core::solver::{check_constraint, solve, total_residual};
use cadkit_core::{Constraint, ConstraintKind, Ref, SubRef};
use rand::{Rng, SeedableRng};
use serde_json::Value;

const SQUARE: &str = r#"{"primitives": [
  {"id": 0, "type": "line", "x_s": 0, "y_s": 0, "x_e": 1.02, "y_e": 0.03},
  {"id": 1, "type": "line", "x_s": 1, "y_s": 0.01, "x_e": 0.98, "y_e": 1},
  {"id": 2, "type": "line", "x_s": 1, "y_s": 1.02, "x_e": 0, "y_e": 0.97},
  {"id": 3, "type": "line", "x_s": 0.01, "y_s": 1, "x_e": 0, "y_e": 0.02}
], "constraints": [
  {"kind": "coincident", "refs": [{"id": 0, "subref": "end"}, {"id": 1, "subref": "start"}]},
  {"kind": "coincident", "refs": [{"id": 1, "subref": "end"}, {"id": 2, "subref": "start"}]},
  {"kind": "coincident", "refs": [{"id": 2, "subref": "end"}, {"id": 3, "subref": "start"}]},
  {"kind": "coincident", "refs": [{"id": 3, "subref": "end"}, {"id": 0, "subref": "start"}]},
  {"kind": "horizontal", "refs": [{"id": 0}]},
  {"kind": "horizontal", "refs": [{"id": 2}]},
  {"kind": "vertical", "refs": [{"id": 1}]},
  {"kind": "equal", "refs": [{"id": 0}, {"id": 1}]}
]}"#;

fn cadkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadkit")).args(args).env("NO_COLOR", "1").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn square(dir: &Path) -> PathBuf {
    let p = dir.join("square.sketch.json");
    std::fs::write(&p, SQUARE).unwrap();
    p
}

#[test]
fn solve_writes_a_residual_clean_sketch() {
    let dir = tempfile::tempdir().unwrap();
    let input = square(dir.path());
    let output = dir.path().join("out.json");
    let out = cadkit(&["solve", path(&input), "-o", path(&output)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&output).unwrap();
    let solved = parse_json(&text).unwrap();
    assert!(total_residual(&solved).unwrap() <= 1e-6);
    let lib = solve(&parse_json(SQUARE).unwrap()).unwrap();
    assert_eq!(text, serialize(&lib.solved, &SerializationConfig::exact()).unwrap());
}

#[test]
fn unsolvable_sketches_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.sketch.json");
    std::fs::write(&input, "{\"primitives\": [{\"id\": 0, \"type\": \"line\"}], \"constraints\": []}").unwrap();
    let out = cadkit(&["solve", path(&input), "-o", path(&dir.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
    let out = cadkit(&["solve", path(&dir.path().join("missing.json")), "-o", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two_with_help() {
    let out = cadkit(&["solve", "a.json", "-o", "b.json", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("--frobnicate"));
    assert!(err.contains("Solve a sketch's constraints"), "{err}");
    assert!(err.contains("Usage: cadkit solve"));
    assert!(!err.contains('\u{1b}'));

    let out = cadkit(&["eval", "chamfer", "only-one.png"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Chamfer distance between two binary images"));

    let out = cadkit(&["check", "a.json", "--constraint", "fillet(0,1)"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown constraint kind"));

    assert_eq!(cadkit(&["--help"]).status.code(), Some(0));
    assert_eq!(cadkit(&[]).status.code(), Some(2));
}

#[test]
fn chamfer_of_an_image_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.png");
    let out = cadkit(&["render", path(&square(dir.path())), "-o", path(&img), "--size", "64"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = cadkit(&["eval", "chamfer", path(&img), path(&img)]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "0.0\n");
}

#[test]
fn chamfer_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut masks = Vec::new();
    for name in ["a.png", "b.png"] {
        let mut img = RasterImage::new(32, 32);
        for _ in 0..20 {
            img.set(r.gen_range(0..32), r.gen_range(0..32));
        }
        std::fs::write(dir.path().join(name), img.to_png().unwrap()).unwrap();
        masks.push(img);
    }
    let out = cadkit(&["eval", "chamfer", path(&dir.path().join("a.png")), path(&dir.path().join("b.png")), "--json"]);
    let want = serde_json::json!({ "chamfer": chamfer(&masks[0], &masks[1]).unwrap() });
    assert_eq!(stdout(&out), format!("{want}\n"));
}

#[test]
fn check_prints_the_library_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.sketch.json");
    let sketch = r#"{"primitives": [
      {"id": 0, "type": "line", "x_s": 0, "y_s": 0, "x_e": 1, "y_e": 0},
      {"id": 1, "type": "line", "x_s": 1.1, "y_s": 0.1, "x_e": 1.2, "y_e": 1}
    ], "constraints": []}"#;
    std::fs::write(&input, sketch).unwrap();
    let g = parse_json(sketch).unwrap();
    let cases = [
        ("horizontal(0)", Constraint::unary(ConstraintKind::Horizontal, 0)),
        ("vertical(0)", Constraint::unary(ConstraintKind::Vertical, 0)),
        ("coincident(0.end, 1.start)", Constraint::new(ConstraintKind::Coincident, Ref::new(0, SubRef::End), Ref::new(1, SubRef::Start))),
        ("coincident(0.start,0.end)", Constraint::new(ConstraintKind::Coincident, Ref::new(0, SubRef::Start), Ref::new(0, SubRef::End))),
        ("perpendicular(0,1)", Constraint::new(ConstraintKind::Perpendicular, Ref::entire(0), Ref::entire(1))),
    ];
    for (spec, c) in cases {
        let out = cadkit(&["check", path(&input), "--constraint", spec, "--json"]);
        assert!(out.status.success(), "{spec}: {}", stderr(&out));
        let want = serde_json::to_string_pretty(&check_constraint(&g, &c).unwrap()).unwrap();
        assert_eq!(stdout(&out), want + "\n", "{spec}");
    }
    let out = cadkit(&["check", path(&input), "--constraint", "horizontal(0)"]);
    assert!(stdout(&out).starts_with("valid: true\ncauses_movement: false\ndegenerate: false\n"), "{}", stdout(&out));
}

#[test]
fn serialize_and_render_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let input = square(dir.path());
    let g = parse_json(SQUARE).unwrap();
    for (format, strategy) in [("csv", "implicit"), ("markdown", "point_based"), ("html", "overparameterized"), ("json", "implicit")] {
        let out = cadkit(&["serialize", path(&input), "--format", format, "--strategy", strategy, "--precision", "4"]);
        assert!(out.status.success(), "{}", stderr(&out));
        let cfg = SerializationConfig {
            format: cadkit_core::serialize::Format::from_name(format).unwrap(),
            strategy: cadkit_core::params::Strategy::from_name(strategy).unwrap(),
            float_precision: 4,
        };
        assert_eq!(stdout(&out), serialize(&g, &cfg).unwrap(), "{format}/{strategy}");
    }
    assert_eq!(cadkit(&["serialize", path(&input), "--format", "yaml"]).status.code(), Some(2));

    let svg = dir.path().join("s.svg");
    assert!(cadkit(&["render", path(&input), "-o", path(&svg), "--marks"]).status.success());
    assert_eq!(std::fs::read_to_string(&svg).unwrap(), render_sketch_svg(&g, true));
    let png = dir.path().join("s.png");
    assert!(cadkit(&["render", path(&input), "-o", path(&png), "--size", "96"]).status.success());
    let want = encode_png(&display_image(&render_sketch(&g, 96, 96, false).unwrap())).unwrap();
    assert_eq!(std::fs::read(&png).unwrap(), want);
    assert_eq!(cadkit(&["render", path(&input), "-o", path(&dir.path().join("s.gif"))]).status.code(), Some(1));
}

#[test]
fn config_file_sets_render_size() {
    let dir = tempfile::tempdir().unwrap();
    let input = square(dir.path());
    let cfg = dir.path().join("cadkit.toml");
    std::fs::write(&cfg, "[render]\nsize = 48\n").unwrap();
    let png = dir.path().join("s.png");
    let out = cadkit(&["--config", path(&cfg), "render", path(&input), "-o", path(&png)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let img = RasterImage::from_image_bytes(&std::fs::read(&png).unwrap()).unwrap();
    assert_eq!((img.width, img.height), (48, 48));
}

fn cube_file(dir: &Path) -> PathBuf {
    let cube = extrude(&SolidModel::new(), rectangle_sketch(0.0, 0.0, 1.0, 1.0), ExtrusionOp::along_z(1.0, BooleanOp::New)).unwrap();
    let p = dir.join("cube.solid.json");
    std::fs::write(&p, serde_json::to_string(&cube).unwrap()).unwrap();
    p
}

#[test]
fn sections_and_solid_views() {
    let dir = tempfile::tempdir().unwrap();
    let cube = cube_file(dir.path());
    let loops = dir.path().join("sec.json");
    let img = dir.path().join("sec.png");
    let out = cadkit(&["section", "--solid", path(&cube), "--plane", "0,0,0.5,0,0,1", "-o", path(&loops), "--image", path(&img), "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["loops"], 1);
    assert!((v["area"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    assert!(std::fs::read(&img).unwrap().starts_with(b"\x89PNG"));
    let doc = cadkit_core::serialize::parse_document(&std::fs::read_to_string(&loops).unwrap()).unwrap();
    assert_eq!(doc.loops.len(), 1);

    // an open tetrahedron: one face missing
    let obj = dir.path().join("open.obj");
    std::fs::write(&obj, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 2 3 4\n").unwrap();
    let out = cadkit(&["section", "--mesh", path(&obj), "--plane", "0,0,0.5,0,0,1", "-o", path(&loops)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning: 1 open chain(s)"), "{}", stderr(&out));

    let out = cadkit(&["section", "--plane", "0,0,0,0,0,1", "-o", path(&loops)]);
    assert_eq!(out.status.code(), Some(2));
    let out = cadkit(&["section", "--mesh", path(&obj), "--solid", path(&cube), "--plane", "0,0,0,0,0,1", "-o", path(&loops)]);
    assert_eq!(out.status.code(), Some(2));

    let views = dir.path().join("views");
    let out = cadkit(&["render-solid", path(&cube), "-o", path(&views), "--size", "64"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["front", "right", "top", "isometric"] {
        assert!(views.join(format!("{name}.png")).is_file(), "{name}");
    }
}

#[test]
fn eval_commands_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    std::fs::create_dir_all(&gt).unwrap();
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::write(gt.join("a.sketch.json"), SQUARE).unwrap();
    let without_equal = SQUARE.replace(",\n  {\"kind\": \"equal\", \"refs\": [{\"id\": 0}, {\"id\": 1}]}", "");
    std::fs::write(pred.join("a.sketch.json"), SQUARE.replace("\"equal\"", "\"parallel\"")).unwrap();
    std::fs::write(gt.join("b.sketch.json"), SQUARE).unwrap();
    std::fs::write(pred.join("b.sketch.json"), without_equal).unwrap();
    std::fs::write(gt.join("c.sketch.json"), SQUARE).unwrap();

    let report = dir.path().join("report.json");
    let out = cadkit(&["eval", "autoconstrain", "--gt", path(&gt), "--pred", path(&pred), "-o", path(&report), "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let data = load_autoconstrain_dir(&gt, &pred).unwrap();
    let want = run_autoconstrain_eval(&data.items, &EvalConfig::default()).with_failures(data.failures).to_json();
    assert_eq!(stdout(&out).trim_end(), want);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), want);
    let text = cadkit(&["eval", "autoconstrain", "--gt", path(&gt), "--pred", path(&pred)]);
    assert!(text.status.success());
    assert!(serde_json::from_str::<Value>(&stdout(&text)).is_err());

    let qa = dir.path().join("qa.jsonl");
    let item = |gold: usize, pred: &str| {
        format!("{{\"question\": \"q\", \"options\": [\"a\", \"b\", \"c\", \"d\"], \"gold\": {gold}, \"predicted\": {pred}}}\n")
    };
    std::fs::write(&qa, [item(0, "0"), item(1, "1"), item(2, "0"), item(3, "null")].concat()).unwrap();
    let out = cadkit(&["eval", "qa", path(&qa), "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!((v["accuracy"].as_f64(), v["correct"].as_u64(), v["total"].as_u64()), (Some(0.5), Some(2), Some(4)));
    assert_eq!(v["unanswered"], serde_json::json!([3]));
    std::fs::write(&qa, "not json\n").unwrap();
    assert_eq!(cadkit(&["eval", "qa", path(&qa)]).status.code(), Some(1));
}

fn agent_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../agent")
}

#[test]
fn agent_run_reproduces_the_golden_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let artifacts = dir.path().join("artifacts");
    let planner = format!("scripted:{}", agent_root().join("fixtures/plate.json").display());
    let out = cadkit(&[
        "agent", "run", "--planner", &planner,
        "--query", "Make a 40 x 25 x 5 plate with a centered 8 mm hole.",
        "-o", path(&transcript), "--artifacts", path(&artifacts),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("Terminated after 6 step(s)"), "{}", stderr(&out));
    let golden = std::fs::read_to_string(agent_root().join("tests/golden/plate.transcript.jsonl")).unwrap();
    assert_eq!(std::fs::read_to_string(&transcript).unwrap(), golden);
    assert!(artifacts.join("s04_c00_cross_section.png").is_file());

    let attach = agent_root().join("fixtures/slot_bare.sketch.json");
    let planner = format!("scripted:{}", agent_root().join("fixtures/autoconstrain.json").display());
    let out = cadkit(&[
        "agent", "run", "--planner", &planner,
        "--query", "Add the constraints this sketch is missing without changing its shape.",
        "--attach", path(&attach),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let golden = std::fs::read_to_string(agent_root().join("tests/golden/autoconstrain.transcript.jsonl")).unwrap();
    assert_eq!(stdout(&out), golden);

    let out = cadkit(&["agent", "run", "--planner", "scripted:/no/such/fixture.json", "--query", "q"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cadkit(&["agent", "run", "--planner", "telepathy", "--query", "q"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn llm_planner_without_a_server_fails_the_session() {
    let out = Command::new(env!("CARGO_BIN_EXE_cadkit"))
        .args(["agent", "run", "--planner", "llm", "--query", "q"])
        .env("LLM_API_BASE", "http://127.0.0.1:9")
        .env("LLM_MODEL", "m")
        .env("LLM_API_KEY", "k")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("Failed"), "{}", stderr(&out));
}
