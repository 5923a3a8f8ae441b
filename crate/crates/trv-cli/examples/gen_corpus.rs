// SPDX-License-Identifier: Apache-2.0
//! Regenerates the checked-in rule corpus under `corpus/` at the workspace
//! root: one JSON file per rule plus `expected.json` with the expected
//! verdicts and inferred bounds.
//!
//! Run with `cargo run -p trv-cli --example gen_corpus`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use trv_cli::corpus::{builtin_rules, file_name, CorpusEntry};
use trv_core::analysis;

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    std::fs::create_dir_all(&dir)?;
    let mut entries = Vec::new();
    for (rule, verdict, note) in builtin_rules()? {
        let file = file_name(&rule.name);
        std::fs::write(dir.join(&file), serde_json::to_string_pretty(&rule)? + "\n")?;
        let bounds = analysis::bound_report(&rule)?;
        let expected_bounds: BTreeMap<String, usize> =
            bounds.rclasses.iter().map(|c| (c.rclass.clone(), c.bound)).collect();
        entries.push(CorpusEntry {
            name: rule.name.clone(),
            file,
            expected_verdict: verdict.to_string(),
            expected_bounds,
            note: note.to_string(),
        });
    }
    std::fs::write(dir.join("expected.json"), serde_json::to_string_pretty(&entries)? + "\n")?;
    println!("wrote {} rules to {}", entries.len(), dir.display());
    Ok(())
}
