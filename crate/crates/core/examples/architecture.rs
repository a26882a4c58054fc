//! Parameter counts of the paper and desk networks and the architecture
//! text format.
//!
//! cargo run --example architecture

use acoustic_repro::msnet::MultiScaleConfig;

fn main() -> acoustic_repro::Result<()> {
    for (name, cfg) in [("paper", MultiScaleConfig::paper()), ("desk", MultiScaleConfig::desk())] {
        println!("== {name}: {} convolutions, {} parameters", cfg.conv_count(), cfg.parameter_count());
        print!("{}", cfg.parameter_report());
        println!("hash {}", hex::encode(cfg.hash()));
    }
    let text = MultiScaleConfig::desk().render();
    println!("\ndesk architecture file:\n{text}");
    let parsed = MultiScaleConfig::parse(&text)?;
    assert_eq!(parsed, MultiScaleConfig::desk());
    Ok(())
}
