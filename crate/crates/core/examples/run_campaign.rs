//! Runs a campaign section from a TOML file and writes the report, like the binary does.
//!
//! cargo run --release --example run_campaign -- examples/configs/identity_1d.toml heat /tmp/report

use elliptic_lab::campaign::{run, CampaignConfig, Status, Subcommand};
use std::path::PathBuf;

fn main() -> elliptic_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/identity_1d.toml").into()));
    let section = args.next().unwrap_or_else(|| "assemble".into());
    let sub = Subcommand::SECTIONS.into_iter().chain([Subcommand::All]).find(|s| s.name() == section).expect("unknown section");
    let config = CampaignConfig::from_path(&path)?;
    let report = run(sub, &config)?;
    for r in &report.records {
        let mark = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Recorded => "    ",
        };
        println!("{mark} {:<36} {}", r.name, r.criterion);
    }
    if let Some(out) = args.next() {
        for f in report.write(std::path::Path::new(&out))? {
            println!("wrote {}", f.display());
        }
    }
    Ok(())
}
