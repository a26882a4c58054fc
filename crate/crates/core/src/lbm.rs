//! D2Q9 lattice-Boltzmann solver for linear acoustics in a closed square box.
//!
//! Nine velocity directions, `y` grows with the row index:
//! ```text
//!   7   4   8
//!    \  |  /
//!   3 - 0 - 1
//!    /  |  \
//!   6   2   5
//! ```
//! Collision is BGK with a single relaxation time; all four walls use
//! half-way bounce-back, which imposes zero velocity on the wall and reflects
//! acoustic waves. Cell `i` sits at `(i + 0.5) dx`, so the walls are at `0`
//! and `domain_length`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{sum_in_order, Real};

pub const Q: usize = 9;

/// Discrete velocities `(ex, ey)`.
pub const VELOCITIES: [(i32, i32); Q] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (-1, 0),
    (0, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
];

pub const WEIGHTS: [f64; Q] = [
    4.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

pub const OPPOSITE: [usize; Q] = [0, 3, 4, 1, 2, 7, 8, 5, 6];

/// Lattice speed of sound, `1/sqrt(3)` cells per timestep.
pub const LATTICE_SOUND_SPEED: f64 = 0.577_350_269_189_625_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Points per side.
    pub grid_size: usize,
    /// Physical side length in meters.
    pub domain_length: f64,
    /// Physical sound speed in m/s.
    pub sound_speed: f64,
    pub ambient_density: f64,
    /// Simulation timesteps between two stored frames.
    pub timestep_jump: usize,
    pub relaxation_time: f64,
    pub total_timesteps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl SimConfig {
    /// 200 x 200 box of 100 m, sound speed 343 m/s.
    pub fn paper() -> Self {
        Self {
            grid_size: 200,
            domain_length: 100.0,
            sound_speed: 343.0,
            ambient_density: 1.0,
            timestep_jump: 4,
            relaxation_time: 0.55,
            total_timesteps: 156,
        }
    }

    pub fn desk() -> Self {
        Self {
            grid_size: 64,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 8 {
            return Err(Error::Config(format!(
                "grid_size must be >= 8, got {}",
                self.grid_size
            )));
        }
        if self.timestep_jump < 1 {
            return Err(Error::Config("timestep_jump must be >= 1".into()));
        }
        if !(self.relaxation_time > 0.5) {
            return Err(Error::Config(format!(
                "relaxation_time must exceed 0.5 for BGK stability, got {}",
                self.relaxation_time
            )));
        }
        if !(self.domain_length > 0.0 && self.sound_speed > 0.0 && self.ambient_density > 0.0) {
            return Err(Error::Config(
                "domain_length, sound_speed and ambient_density must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Grid spacing in meters.
    pub fn dx(&self) -> f64 {
        self.domain_length / self.grid_size as f64
    }

    /// Physical duration of one timestep, from `a = c_s dx / dt`.
    pub fn dt(&self) -> f64 {
        LATTICE_SOUND_SPEED * self.dx() / self.sound_speed
    }

    /// Number of stored frames a run of `total_timesteps` yields.
    pub fn frame_count(&self) -> usize {
        self.total_timesteps / self.timestep_jump + 1
    }

    /// Timesteps needed to store `frames` frames.
    pub fn timesteps_for_frames(&self, frames: usize) -> usize {
        frames.saturating_sub(1) * self.timestep_jump
    }
}

/// Gaussian density pulse, amplitude relative to the ambient density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Center as a fraction of the domain side, `(x, y)`.
    pub center: (f64, f64),
    pub amplitude: f64,
    /// Half-width at half maximum, in grid spacings.
    pub half_width: f64,
}

impl PulseSpec {
    pub const PAPER_AMPLITUDE: f64 = 0.001;
    pub const PAPER_HALF_WIDTH: f64 = 12.0;

    pub fn new(center: (f64, f64), amplitude: f64, half_width: f64) -> Self {
        Self {
            center,
            amplitude,
            half_width,
        }
    }

    pub fn centered() -> Self {
        Self::new((0.5, 0.5), Self::PAPER_AMPLITUDE, Self::PAPER_HALF_WIDTH)
    }

    fn validate(&self) -> Result<()> {
        let (cx, cy) = self.center;
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return Err(Error::InvalidInput(format!(
                "pulse center ({cx}, {cy}) lies outside the unit square"
            )));
        }
        if !(self.half_width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pulse half-width must be positive, got {}",
                self.half_width
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidInput("pulse amplitude is not finite".into()));
        }
        Ok(())
    }

    /// `eps * exp(-ln2 d^2 / hw^2)` at a point given in grid-spacing units.
    fn relative_density(&self, n: usize, x: f64, y: f64) -> f64 {
        let cx = self.center.0 * n as f64;
        let cy = self.center.1 * n as f64;
        let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        self.amplitude * (-std::f64::consts::LN_2 * d2 / (self.half_width * self.half_width)).exp()
    }
}

/// Gaussian profile in `x`, extruded along `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveSpec {
    /// Center as a fraction of the domain side.
    pub center_x: f64,
    pub amplitude: f64,
    pub half_width: f64,
}

/// Initial condition of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Initializer {
    Pulses(Vec<PulseSpec>),
    PlaneWave(PlaneWaveSpec),
}

/// Acoustic density `rho - rho0` on an `n x n` grid, row-major (`y` is the row).
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D<T = f64> {
    pub n: usize,
    pub values: Vec<T>,
    pub frame_index: usize,
}

impl<T: Real> Field2D<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![T::zero(); n * n],
            frame_index: 0,
        }
    }

    pub fn from_values(n: usize, values: Vec<T>, frame_index: usize) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!(
                "field of side {n} needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self {
            n,
            values,
            frame_index,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.values[y * self.n + x]
    }

    pub fn mean(&self) -> T {
        sum_in_order(&self.values) / T::of(self.values.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Field2D<U> {
        Field2D {
            n: self.n,
            values: self.values.iter().map(|&v| U::of(v.f64())).collect(),
            frame_index: self.frame_index,
        }
    }

    /// Applies one of the eight symmetries of the square: `k` quarter turns
    /// counter-clockwise, preceded by a mirror in `x` when `mirror` is set.
    pub fn transformed(&self, k: usize, mirror: bool) -> Self {
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for y in 0..n {
            for x in 0..n {
                let (mut sx, sy) = (x, y);
                if mirror {
                    sx = n - 1 - sx;
                }
                let (tx, ty) = rotate_index(sx, sy, n, k);
                out[ty * n + tx] = self.values[y * n + x];
            }
        }
        Self {
            n,
            values: out,
            frame_index: self.frame_index,
        }
    }
}

/// Destination of `(x, y)` after `k` counter-clockwise quarter turns of an
/// `n x n` grid.
#[inline]
pub fn rotate_index(x: usize, y: usize, n: usize, k: usize) -> (usize, usize) {
    match k % 4 {
        0 => (x, y),
        1 => (y, n - 1 - x),
        2 => (n - 1 - x, n - 1 - y),
        _ => (n - 1 - y, x),
    }
}

/// Particle distributions of every cell, stored direction-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState<T = f64> {
    pub n: usize,
    pub distributions: Vec<T>,
    pub timestep: usize,
}

impl<T: Real> LatticeState<T> {
    /// Equilibrium at zero velocity for the given density field.
    pub fn at_rest(n: usize, density: &[T]) -> Self {
        let cells = n * n;
        let mut distributions = vec![T::zero(); Q * cells];
        for (i, w) in WEIGHTS.iter().enumerate() {
            let w = T::of(*w);
            for (c, &rho) in density.iter().enumerate() {
                distributions[i * cells + c] = w * rho;
            }
        }
        Self {
            n,
            distributions,
            timestep: 0,
        }
    }

    #[inline]
    fn cells(&self) -> usize {
        self.n * self.n
    }

    pub fn density(&self) -> Vec<T> {
        let cells = self.cells();
        let f = &self.distributions;
        (0..cells)
            .map(|c| {
                let fc = |i: usize| f[i * cells + c];
                moment_density(fc(0), fc(1), fc(2), fc(3), fc(4), fc(5), fc(6), fc(7), fc(8))
            })
            .collect()
    }

    /// Velocity field `(ux, uy)` per cell.
    pub fn velocity(&self) -> Vec<(T, T)> {
        let cells = self.cells();
        let f = &self.distributions;
        (0..cells)
            .map(|c| {
                let g: [T; Q] = std::array::from_fn(|i| f[i * cells + c]);
                let rho = moment_density(g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], g[8]);
                let (jx, jy) = moment_momentum(&g);
                (jx / rho, jy / rho)
            })
            .collect()
    }

    /// Acoustic density `rho - rho0` as a frame.
    pub fn acoustic_field(&self, ambient_density: f64, frame_index: usize) -> Field2D<T> {
        let rho0 = T::of(ambient_density);
        Field2D {
            n: self.n,
            values: self.density().into_iter().map(|r| r - rho0).collect(),
            frame_index,
        }
    }

    pub fn total_mass(&self) -> T {
        sum_in_order(&self.density())
    }

    pub fn is_finite(&self) -> bool {
        self.distributions.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> LatticeState<U> {
        LatticeState {
            n: self.n,
            distributions: self.distributions.iter().map(|v| U::of(v.f64())).collect(),
            timestep: self.timestep,
        }
    }

    /// Advances one collide-and-stream timestep in place.
    ///
    /// The moment sums use a grouping that maps onto itself under the square
    /// symmetries, so symmetric initial conditions stay bit-exactly symmetric.
    pub fn advance(&mut self, relaxation_time: f64, scratch: &mut Vec<T>) -> Result<()> {
        let n = self.n;
        let cells = n * n;
        let omega = T::of(1.0 / relaxation_time);
        let w: [T; Q] = std::array::from_fn(|i| T::of(WEIGHTS[i]));
        let three = T::of(3.0);
        let four_half = T::of(4.5);
        let one_half = T::of(1.5);
        let one = T::one();

        scratch.clear();
        scratch.resize(Q * cells, T::zero());
        let f = &mut self.distributions;
        let mut finite = true;

        // Collide in place.
        for c in 0..cells {
            let g: [T; Q] = std::array::from_fn(|i| f[i * cells + c]);
            let rho = moment_density(g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], g[8]);
            let (jx, jy) = moment_momentum(&g);
            let ux = jx / rho;
            let uy = jy / rho;
            let usq = ux * ux + uy * uy;
            let eu = [
                T::zero(),
                ux,
                uy,
                -ux,
                -uy,
                ux + uy,
                uy - ux,
                -(ux + uy),
                ux - uy,
            ];
            for i in 0..Q {
                let feq = w[i] * rho * (one + three * eu[i] + four_half * eu[i] * eu[i] - one_half * usq);
                f[i * cells + c] = g[i] - omega * (g[i] - feq);
            }
            finite &= rho.is_finite();
        }
        if !finite {
            return Err(Error::NonFinite(format!(
                "lattice density became non-finite at timestep {}",
                self.timestep
            )));
        }

        // Stream with half-way bounce-back at the walls.
        for (i, &(ex, ey)) in VELOCITIES.iter().enumerate() {
            let src = &f[i * cells..(i + 1) * cells];
            let opp = OPPOSITE[i];
            for y in 0..n {
                let ty = y as isize + ey as isize;
                for x in 0..n {
                    let tx = x as isize + ex as isize;
                    let v = src[y * n + x];
                    if tx >= 0 && ty >= 0 && (tx as usize) < n && (ty as usize) < n {
                        scratch[i * cells + ty as usize * n + tx as usize] = v;
                    } else {
                        scratch[opp * cells + y * n + x] = v;
                    }
                }
            }
        }
        std::mem::swap(f, scratch);
        self.timestep += 1;
        Ok(())
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn moment_density<T: Real>(f0: T, f1: T, f2: T, f3: T, f4: T, f5: T, f6: T, f7: T, f8: T) -> T {
    f0 + ((f1 + f3) + (f2 + f4)) + ((f5 + f7) + (f6 + f8))
}

#[inline(always)]
fn moment_momentum<T: Real>(g: &[T; Q]) -> (T, T) {
    let jx = (g[1] + (g[5] + g[8])) - (g[3] + (g[6] + g[7]));
    let jy = (g[2] + (g[5] + g[6])) - (g[4] + (g[7] + g[8]));
    (jx, jy)
}

fn cell_center(i: usize) -> f64 {
    i as f64 + 0.5
}

/// Density field of the superposed pulses, `rho0 (1 + sum_k eps_k exp(..))`.
pub fn pulse_density(config: &SimConfig, pulses: &[PulseSpec]) -> Result<Vec<f64>> {
    if pulses.is_empty() {
        return Err(Error::InvalidInput("at least one pulse is required".into()));
    }
    for p in pulses {
        p.validate()?;
    }
    let n = config.grid_size;
    let mut rho = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let rel: f64 = pulses
                .iter()
                .map(|p| p.relative_density(n, cell_center(x), cell_center(y)))
                .sum();
            rho[y * n + x] = (1.0 + rel) * config.ambient_density;
        }
    }
    Ok(rho)
}

pub fn plane_wave_density(config: &SimConfig, wave: &PlaneWaveSpec) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&wave.center_x) || !(wave.half_width > 0.0) {
        return Err(Error::InvalidInput(format!("invalid plane wave {wave:?}")));
    }
    let n = config.grid_size;
    let cx = wave.center_x * n as f64;
    let profile: Vec<f64> = (0..n)
        .map(|x| {
            let d = cell_center(x) - cx;
            let rel = wave.amplitude
                * (-std::f64::consts::LN_2 * d * d / (wave.half_width * wave.half_width)).exp();
            (1.0 + rel) * config.ambient_density
        })
        .collect();
    Ok((0..n * n).map(|c| profile[c % n]).collect())
}

/// Equilibrium lattice at rest whose density follows the pulse superposition.
pub fn init_pulses<T: Real>(config: &SimConfig, pulses: &[PulseSpec]) -> Result<LatticeState<T>> {
    config.validate()?;
    let rho = pulse_density(config, pulses)?;
    let rho: Vec<T> = rho.into_iter().map(T::of).collect();
    Ok(LatticeState::at_rest(config.grid_size, &rho))
}

pub fn init_plane_wave<T: Real>(
    config: &SimConfig,
    wave: &PlaneWaveSpec,
) -> Result<LatticeState<T>> {
    config.validate()?;
    let rho = plane_wave_density(config, wave)?;
    let rho: Vec<T> = rho.into_iter().map(T::of).collect();
    Ok(LatticeState::at_rest(config.grid_size, &rho))
}

pub fn initialize<T: Real>(config: &SimConfig, init: &Initializer) -> Result<LatticeState<T>> {
    match init {
        Initializer::Pulses(p) => init_pulses(config, p),
        Initializer::PlaneWave(w) => init_plane_wave(config, w),
    }
}

/// One timestep as a pure function.
pub fn step<T: Real>(state: &LatticeState<T>, config: &SimConfig) -> Result<LatticeState<T>> {
    let mut next = state.clone();
    let mut scratch = Vec::new();
    next.advance(config.relaxation_time, &mut scratch)?;
    Ok(next)
}

/// Runs `total_timesteps` steps from `state`, returning the acoustic field
/// every `timestep_jump` steps starting with the initial one.
pub fn evolve<T: Real>(mut state: LatticeState<T>, config: &SimConfig) -> Result<Vec<Field2D<T>>> {
    config.validate()?;
    let jump = config.timestep_jump;
    let mut frames = Vec::with_capacity(config.frame_count());
    frames.push(state.acoustic_field(config.ambient_density, 0));
    let mut scratch = Vec::new();
    for t in 1..=config.total_timesteps {
        state.advance(config.relaxation_time, &mut scratch)?;
        if t % jump == 0 {
            frames.push(state.acoustic_field(config.ambient_density, t / jump));
        }
    }
    Ok(frames)
}

pub fn run_simulation<T: Real>(config: &SimConfig, pulses: &[PulseSpec]) -> Result<Vec<Field2D<T>>> {
    evolve(init_pulses(config, pulses)?, config)
}

pub fn run_initializer<T: Real>(config: &SimConfig, init: &Initializer) -> Result<Vec<Field2D<T>>> {
    evolve(initialize(config, init)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SimConfig {
        SimConfig {
            grid_size: n,
            total_timesteps: 16,
            ..SimConfig::paper()
        }
    }

    #[test]
    fn pulse_peak_and_half_width() {
        let cfg = SimConfig::paper();
        let p = PulseSpec::centered();
        // Center (100, 100) is a cell corner; evaluate the closed form there.
        assert!((p.relative_density(200, 100.0, 100.0) - 0.001).abs() < 1e-18);
        let at_hw = p.relative_density(200, 112.0, 100.0);
        assert!((at_hw - 0.0005).abs() < 1e-15);
        let rho = pulse_density(&cfg, &[p]).unwrap();
        let max = rho.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max < 1.001 && max > 1.000_99);
    }

    #[test]
    fn zero_amplitude_is_uniform() {
        let cfg = small(16);
        let s: LatticeState = init_pulses(&cfg, &[PulseSpec::new((0.3, 0.6), 0.0, 4.0)]).unwrap();
        assert!(s.acoustic_field(1.0, 0).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_out_of_domain_pulse() {
        let cfg = small(16);
        let err = init_pulses::<f64>(&cfg, &[PulseSpec::new((1.2, 0.5), 0.001, 4.0)]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        assert!(init_pulses::<f64>(&cfg, &[]).is_err());
    }

    #[test]
    fn rest_state_is_a_fixed_point() {
        let cfg = small(12);
        for rho in [1.0f64, 1.5] {
            let s = LatticeState::at_rest(12, &vec![rho; 144]);
            let next = step(&s, &cfg).unwrap();
            assert_eq!(next.distributions, s.distributions);
        }
        let s = LatticeState::at_rest(12, &vec![1.0f32; 144]);
        assert_eq!(step(&s, &cfg).unwrap().distributions, s.distributions);
    }

    #[test]
    fn frame_cadence() {
        let cfg = small(16);
        let frames: Vec<Field2D> = run_simulation(&cfg, &[PulseSpec::new((0.5, 0.5), 0.001, 3.0)]).unwrap();
        assert_eq!(frames.len(), 5);
        assert_eq!(
            frames.iter().map(|f| f.frame_index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
        let cfg0 = SimConfig {
            timestep_jump: 1,
            total_timesteps: 0,
            ..cfg
        };
        assert_eq!(run_simulation::<f64>(&cfg0, &[PulseSpec::centered()]).unwrap().len(), 1);
    }

    #[test]
    fn mass_is_conserved() {
        let cfg = SimConfig {
            grid_size: 40,
            total_timesteps: 120,
            ..SimConfig::paper()
        };
        let pulses = [
            PulseSpec::new((0.3, 0.7), 0.001, 4.0),
            PulseSpec::new((0.8, 0.2), 0.001, 4.0),
        ];
        let mut s: LatticeState = init_pulses(&cfg, &pulses).unwrap();
        let m0 = s.total_mass();
        let mut scratch = Vec::new();
        for _ in 0..cfg.total_timesteps {
            s.advance(cfg.relaxation_time, &mut scratch).unwrap();
            assert!(((s.total_mass() - m0) / m0).abs() < 1e-12);
        }
        let mut s: LatticeState<f32> = init_pulses(&cfg, &pulses).unwrap();
        let m0 = s.total_mass();
        let mut scratch = Vec::new();
        for _ in 0..cfg.total_timesteps {
            s.advance(cfg.relaxation_time, &mut scratch).unwrap();
        }
        assert!(((s.total_mass() - m0) / m0).abs() < 1e-5);
    }

    #[test]
    fn symmetric_pulse_stays_symmetric() {
        let cfg = SimConfig {
            grid_size: 32,
            total_timesteps: 60,
            ..SimConfig::paper()
        };
        let mut s: LatticeState = init_pulses(&cfg, &[PulseSpec::new((0.5, 0.5), 0.001, 5.0)]).unwrap();
        let mut scratch = Vec::new();
        for _ in 0..cfg.total_timesteps {
            s.advance(cfg.relaxation_time, &mut scratch).unwrap();
            let f = s.acoustic_field(1.0, 0);
            for k in 0..4 {
                for mirror in [false, true] {
                    let g = f.transformed(k, mirror);
                    let worst = f
                        .values
                        .iter()
                        .zip(&g.values)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    assert!(worst <= 1e-12, "asymmetry {worst} for k={k} mirror={mirror}");
                }
            }
        }
    }

    #[test]
    fn instability_is_reported() {
        let cfg = small(8);
        let mut s: LatticeState = init_pulses(&cfg, &[PulseSpec::centered()]).unwrap();
        s.distributions[10] = f64::NAN;
        assert!(matches!(step(&s, &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn paper_timestep_matches() {
        let cfg = SimConfig::paper();
        let ratio = cfg.dt() / (cfg.domain_length / cfg.sound_speed);
        assert!((ratio - 0.0029).abs() < 5e-5, "{ratio}");
    }

    #[test]
    fn rotation_index_is_a_group_action() {
        let n = 7;
        for x in 0..n {
            for y in 0..n {
                let (a, b) = rotate_index(x, y, n, 1);
                let (c, d) = rotate_index(a, b, n, 3);
                assert_eq!((c, d), (x, y));
            }
        }
    }
}
