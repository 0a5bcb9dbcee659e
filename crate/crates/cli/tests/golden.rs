//! The shipped model files, null-vector files and analysis reports are kept
//! under version control. Set `NOCT_BLESS=1` to regenerate them from the
//! library.

use std::path::{Path, PathBuf};
use std::process::Command;

use noct_core::expr::Expr;
use noct_core::models::{
    const_accel_null_vector, pure_translation_null_vectors, single_axis_null_vector, vio_constrained, vio_system,
    VioConstraintKind,
};
use noct_core::observability::{analyze, AnalysisOptions};
use noct_core::system::{apply_constraints, AffineControlSystem, GenericCheck};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bless() -> bool {
    std::env::var_os("NOCT_BLESS").is_some()
}

fn check_file(path: &Path, expected: &str) {
    if bless() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, expected).unwrap();
    }
    let found = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(found == expected, "{} is out of date (rerun with NOCT_BLESS=1)", path.display());
}

fn model_name(kind: Option<VioConstraintKind>) -> String {
    match kind {
        None => "vio".into(),
        Some(k) => format!("vio_{}", k.name()),
    }
}

fn builtin(kind: Option<VioConstraintKind>) -> AffineControlSystem {
    kind.map(vio_constrained).unwrap_or_else(vio_system)
}

fn vector_text(sys: &AffineControlSystem, vectors: &[Vec<Expr>]) -> String {
    let mut out = String::from("# one expression per state of the converted system; `---` separates vectors\n");
    for (k, v) in vectors.iter().enumerate() {
        if k > 0 {
            out.push_str("---\n");
        }
        for (e, name) in v.iter().zip(&sys.state) {
            out.push_str(&format!("{e}  # {name}\n"));
        }
    }
    out
}

fn all_kinds() -> Vec<Option<VioConstraintKind>> {
    std::iter::once(None).chain(VioConstraintKind::ALL.map(Some)).collect()
}

#[test]
fn model_files_match_builtin_models() {
    for kind in all_kinds() {
        let path = root().join("models").join(format!("{}.json", model_name(kind)));
        check_file(&path, &(builtin(kind).to_json() + "\n"));
    }
}

#[test]
fn null_vector_files_match_fixtures() {
    for kind in VioConstraintKind::ALL {
        let sys = apply_constraints(&vio_constrained(kind), &GenericCheck::default()).unwrap();
        let vectors = match kind {
            VioConstraintKind::ConstLocalAccel => vec![const_accel_null_vector()],
            VioConstraintKind::SingleAxisZ => vec![single_axis_null_vector()],
            VioConstraintKind::PureTranslation => pure_translation_null_vectors(),
        };
        let path = root().join("models/null").join(format!("{}.txt", kind.name()));
        check_file(&path, &vector_text(&sys, &vectors));
    }
}

/// Reports from the binary equal the in-process library reports and the
/// committed golden copies.
#[test]
fn cli_reports_match_library_and_golden_copies() {
    for kind in all_kinds() {
        let name = model_name(kind);
        let sys = apply_constraints(&builtin(kind), &GenericCheck::default()).unwrap();
        let (_, report) = analyze(&sys, &AnalysisOptions::default()).unwrap();
        let library = report.to_json() + "\n";

        let out = Command::new(env!("CARGO_BIN_EXE_noct"))
            .arg("analyze")
            .arg(root().join("models").join(format!("{name}.json")))
            .env_remove("NOCT_SEED")
            .output()
            .unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let cli = String::from_utf8(out.stdout).unwrap();
        assert!(cli == library, "{name}: CLI and library reports differ");

        check_file(&root().join(format!("crates/cli/tests/golden/{name}.report.json")), &library);
    }
}
