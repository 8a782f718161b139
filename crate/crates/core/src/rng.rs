//! 64-bit linear congruential generator with fixed constants.
//!
//! The recurrence and output function are part of the file-format contract:
//! any implementation seeded identically must produce the same stream, so
//! this is hand-rolled rather than delegated to a crate whose algorithm may
//! change between versions.

const MULTIPLIER: u64 = 6364136223846793005;
const INCREMENT: u64 = 1442695040888963407;
const TWO_POW_32: f64 = 4294967296.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Advances the state and returns its top 32 bits.
    pub fn next_u32(&mut self) -> u32 {
        self.state = self.state.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT);
        (self.state >> 32) as u32
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        f64::from(self.next_u32()) / TWO_POW_32
    }

    /// Uniform draw in `(0, 1]`.
    fn next_open_f64(&mut self) -> f64 {
        (f64::from(self.next_u32()) + 1.0) / TWO_POW_32
    }

    /// Standard normal draw (Box-Muller, one output per two uniforms).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_open_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
