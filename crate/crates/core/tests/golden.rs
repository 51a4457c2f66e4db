//! Locked Colang output for the fixture flows. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test -p codial-core --test golden`.

use std::path::PathBuf;

use codial_core::chief::parse_chief;
use codial_core::compiler::{check_colang, compile, emit_colang};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn golden(name: &str) {
    let flow = std::fs::read_to_string(fixtures().join(format!("flows/{name}.chief.json"))).unwrap();
    let program = compile(&parse_chief(&flow).unwrap()).unwrap();
    let text = emit_colang(&program);
    check_colang(&text).unwrap_or_else(|e| panic!("{name}: {e:?}"));

    let ir_path = fixtures().join(format!("golden/{name}.ir.json"));
    let co_path = fixtures().join(format!("golden/{name}.co"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&co_path, &text).unwrap();
        std::fs::write(&ir_path, program.to_canonical_json()).unwrap();
    }
    let expected = std::fs::read_to_string(&co_path).unwrap();
    assert_eq!(text, expected, "{name}.co differs from the golden file");
    let expected_ir = std::fs::read_to_string(&ir_path).unwrap();
    assert_eq!(program.to_canonical_json(), expected_ir, "{name}.ir.json differs");
}

#[test]
fn taxi() {
    golden("taxi");
}

#[test]
fn confirm() {
    golden("confirm");
}

#[test]
fn weather() {
    golden("weather");
}
