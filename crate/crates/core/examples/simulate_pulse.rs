//! Centered Gaussian pulse on the desk grid: writes the trajectory to a
//! frame container and prints mass drift and the wall signal.
//!
//! cargo run --release --example simulate_pulse [out.lbmf]

use acoustic_repro::container;
use acoustic_repro::lbm::{self, PulseSpec, SimConfig};

fn main() -> acoustic_repro::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/centered_pulse.lbmf".into());
    let cfg = SimConfig {
        total_timesteps: 120,
        ..SimConfig::desk()
    };
    let n = cfg.grid_size;

    let mut state = lbm::init_pulses::<f64>(&cfg, &[PulseSpec::centered()])?;
    let mass0 = state.total_mass();
    let mut scratch = Vec::new();
    let mut frames = vec![state.acoustic_field(cfg.ambient_density, 0)];
    for t in 1..=cfg.total_timesteps {
        state.advance(cfg.relaxation_time, &mut scratch)?;
        if t % cfg.timestep_jump == 0 {
            frames.push(state.acoustic_field(cfg.ambient_density, t / cfg.timestep_jump));
        }
    }
    println!("grid {n}x{n}, {} steps, {} stored frames", cfg.total_timesteps, frames.len());
    println!("relative mass drift {:.2e}", (state.total_mass() - mass0) / mass0);
    for f in frames.iter().step_by(5) {
        println!(
            "frame {:>3}  max |rho'| {:.3e}  wall midpoint {:+.3e}",
            f.frame_index,
            f.max_abs(),
            f.at(0, n / 2)
        );
    }

    container::write(std::path::Path::new(&out), &cfg, &frames)?;
    let back = container::read(std::path::Path::new(&out))?;
    assert_eq!(back.frames, frames);
    println!("wrote {out} ({} frames, double precision)", back.frames.len());
    Ok(())
}
