//! Mine event templates from raw log lines and show the structured output.
//!
//! ```bash
//! cargo run --example parse_templates
//! ```

use omlog::corpus::{parse_lines, render_body, DatasetKind, DrainConfig};

const LINES: &[&str] = &[
    "- 1117838570 kernel INFO generating core.55239",
    "- 1117838571 kernel INFO generating core.55240",
    "- 1117838572 mmcs WARN ciod error reading message prefix on control stream",
    "- 1117838573 kernel INFO instruction cache parity error corrected",
    "- 1117838574 mmcs WARN ciod error reading message prefix on control stream",
    "- 1117838575 kernel INFO generating core.61011",
    "- 1117838576 linkcard ERROR MidplaneSwitchController performing bit sparing on chip 3",
    "- 1117838577 linkcard ERROR MidplaneSwitchController performing bit sparing on chip 14",
    "- 1117838578 kernel INFO instruction cache parity error corrected",
];

fn main() -> omlog::Result<()> {
    let stream = parse_lines(
        LINES
            .iter()
            .enumerate()
            .map(|(i, l)| (i as u64 + 1, l.to_string())),
        DatasetKind::Generic,
        &DrainConfig::default(),
    )?;

    println!(
        "mined {} templates from {} lines:\n",
        stream.vocab.len(),
        LINES.len()
    );
    for event in stream.vocab.iter() {
        println!("  [{}] {}", event.event_id, event.template_string());
    }

    println!("\nper-record view (event id, params, reconstructed body):");
    for record in &stream.records {
        println!(
            "  line {:>2} -> event {} params {:?} | {}",
            record.line_no,
            record.event_id,
            record.params,
            render_body(record, &stream.vocab),
        );
    }
    Ok(())
}
