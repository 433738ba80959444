//! IIR filter design and application.
//!
//! Designs go through the analog zero-pole-gain route: analog prototype,
//! frequency transformation on pre-warped edges, bilinear transform, then
//! grouping into second-order sections.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::DspError;

/// One second-order section, normalized so that `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Stability triangle test for `1 + a1 z^-1 + a2 z^-2`.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Roots of the denominator polynomial.
    pub fn poles(&self) -> [Complex64; 2] {
        // z^2 + a1 z + a2 = 0
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    /// Internal state reached after an infinitely long unit-step input.
    fn step_state(&self) -> [f64; 2] {
        let dc = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        let s2 = self.b2 - self.a2 * dc;
        let s1 = self.b1 - self.a1 * dc + s2;
        [s1, s2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub overall_gain: f64,
}

/// Transposed direct-form II delay line for every section of a cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    delays: Vec<[f64; 2]>,
}

impl FilterState {
    pub fn zeroed(cascade: &BiquadCascade) -> Self {
        FilterState {
            delays: vec![[0.0; 2]; cascade.sections.len()],
        }
    }
}

impl BiquadCascade {
    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(self.overall_gain, 0.0), |acc, s| {
                acc * s.response(z_inv)
            })
    }

    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        self.response(freq_hz, fs).norm()
    }

    #[inline]
    pub fn step(&self, x: f64, state: &mut FilterState) -> f64 {
        let mut v = x * self.overall_gain;
        for (s, d) in self.sections.iter().zip(state.delays.iter_mut()) {
            let y = s.b0 * v + d[0];
            d[0] = s.b1 * v - s.a1 * y + d[1];
            d[1] = s.b2 * v - s.a2 * y;
            v = y;
        }
        v
    }

    /// Causal filtering starting from `state`.
    pub fn filter_with(&self, x: &[f64], state: &mut FilterState) -> Vec<f64> {
        x.iter().map(|&v| self.step(v, state)).collect()
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        self.filter_with(x, &mut FilterState::zeroed(self))
    }

    /// State for which a constant input of `level` produces a constant output.
    pub fn steady_state(&self, level: f64) -> FilterState {
        let mut input = level * self.overall_gain;
        let delays = self
            .sections
            .iter()
            .map(|s| {
                let [s1, s2] = s.step_state();
                let d = [s1 * input, s2 * input];
                input *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
                d
            })
            .collect();
        FilterState { delays }
    }

    /// Forward-backward (zero-phase) filtering.
    ///
    /// The signal is extended at both ends by odd reflection and each pass
    /// starts from the steady state matching its first sample, so slow edges
    /// do not ring. The result is linear in `x`.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let trivial = self
            .sections
            .iter()
            .filter(|s| s.b2 == 0.0 && s.a2 == 0.0)
            .count();
        let padlen = (3 * (2 * self.sections.len() + 1 - trivial)).min(n - 1);

        let mut ext = Vec::with_capacity(n + 2 * padlen);
        ext.extend((1..=padlen).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=padlen).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let mut st = self.steady_state(ext[0]);
        let mut y = self.filter_with(&ext, &mut st);
        y.reverse();
        let mut st = self.steady_state(y[0]);
        let mut y = self.filter_with(&y, &mut st);
        y.reverse();
        y.drain(..padlen);
        y.truncate(n);
        y
    }
}

/// Analog or digital filter in zero-pole-gain form.
#[derive(Debug, Clone)]
struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

fn butterworth_prototype(order: usize) -> Zpk {
    let n = order as f64;
    let poles = (0..order)
        .map(|i| {
            let m = -(n - 1.0) + 2.0 * i as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * n))
        })
        .collect();
    Zpk {
        zeros: Vec::new(),
        poles,
        gain: 1.0,
    }
}

fn chebyshev1_prototype(order: usize, ripple_db: f64) -> Zpk {
    let n = order as f64;
    let eps = (10f64.powf(0.1 * ripple_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / n;
    let poles: Vec<Complex64> = (0..order)
        .map(|i| {
            let m = -(n - 1.0) + 2.0 * i as f64;
            let theta = PI * m / (2.0 * n);
            -Complex64::new(mu, theta).sinh()
        })
        .collect();
    let mut gain = poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * -p)
        .re;
    if order % 2 == 0 {
        gain /= (1.0 + eps * eps).sqrt();
    }
    Zpk {
        zeros: Vec::new(),
        poles,
        gain,
    }
}

fn lowpass_to_highpass(proto: &Zpk, wo: f64) -> Zpk {
    let degree = proto.poles.len() - proto.zeros.len();
    let prod_z = proto
        .zeros
        .iter()
        .fold(Complex64::new(1.0, 0.0), |a, z| a * -z);
    let prod_p = proto
        .poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |a, p| a * -p);
    let mut zeros: Vec<Complex64> = proto.zeros.iter().map(|z| wo / z).collect();
    zeros.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(degree));
    Zpk {
        zeros,
        poles: proto.poles.iter().map(|p| wo / p).collect(),
        gain: proto.gain * (prod_z / prod_p).re,
    }
}

fn lowpass_to_bandpass(proto: &Zpk, wo: f64, bw: f64) -> Zpk {
    let degree = proto.poles.len() - proto.zeros.len();
    let split = |r: &Complex64| {
        let lp = r * bw / 2.0;
        let d = (lp * lp - wo * wo).sqrt();
        [lp + d, lp - d]
    };
    let mut zeros: Vec<Complex64> = proto.zeros.iter().flat_map(split).collect();
    zeros.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(degree));
    Zpk {
        zeros,
        poles: proto.poles.iter().flat_map(split).collect(),
        gain: proto.gain * bw.powi(degree as i32),
    }
}

fn bilinear(analog: &Zpk, fs: f64) -> Zpk {
    let fs2 = 2.0 * fs;
    let degree = analog.poles.len() - analog.zeros.len();
    let map = |s: &Complex64| (fs2 + s) / (fs2 - s);
    let mut zeros: Vec<Complex64> = analog.zeros.iter().map(map).collect();
    zeros.extend(std::iter::repeat(Complex64::new(-1.0, 0.0)).take(degree));
    let num = analog
        .zeros
        .iter()
        .fold(Complex64::new(1.0, 0.0), |a, z| a * (fs2 - z));
    let den = analog
        .poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |a, p| a * (fs2 - p));
    Zpk {
        zeros,
        poles: analog.poles.iter().map(map).collect(),
        gain: analog.gain * (num / den).re,
    }
}

/// Groups roots into real quadratic factors `[1, c1, c2]`.
///
/// Complex roots are matched with their conjugates; leftover real roots are
/// paired in order of magnitude, a final unpaired real root gives a first-order
/// factor.
fn quadratic_factors(roots: &[Complex64]) -> Vec<(f64, f64)> {
    const TOL: f64 = 1e-10;
    let mut complex: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > TOL).collect();
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let mut real: Vec<f64> = roots
        .iter()
        .filter(|r| r.im.abs() <= TOL)
        .map(|r| r.re)
        .collect();
    real.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let mut out: Vec<(f64, f64)> = complex
        .iter()
        .map(|r| (-2.0 * r.re, r.norm_sqr()))
        .collect();
    for pair in real.chunks(2) {
        match pair {
            [r1, r2] => out.push((-(r1 + r2), r1 * r2)),
            [r] => out.push((-r, 0.0)),
            _ => unreachable!(),
        }
    }
    out
}

fn to_cascade(digital: &Zpk) -> BiquadCascade {
    let mut den = quadratic_factors(&digital.poles);
    let mut num = quadratic_factors(&digital.zeros);
    // Least stable sections last, matching the usual ordering convention.
    den.sort_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
    while num.len() < den.len() {
        num.push((0.0, 0.0));
    }
    let sections = den
        .iter()
        .zip(num.iter())
        .map(|(&(a1, a2), &(c1, c2))| Biquad {
            b0: 1.0,
            b1: c1,
            b2: c2,
            a1,
            a2,
        })
        .collect();
    BiquadCascade {
        sections,
        overall_gain: digital.gain,
    }
}

fn prewarp(freq_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq_hz / fs).tan()
}

/// Butterworth high-pass of the given order with its -3 dB point at `cutoff_hz`.
pub fn design_butterworth_highpass(
    order: usize,
    cutoff_hz: f64,
    fs: f64,
) -> Result<BiquadCascade, DspError> {
    if order == 0 || !(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0 {
        return Err(DspError::InvalidBand {
            low: cutoff_hz,
            high: fs / 2.0,
            fs,
        });
    }
    let hp = lowpass_to_highpass(&butterworth_prototype(order), prewarp(cutoff_hz, fs));
    Ok(to_cascade(&bilinear(&hp, fs)))
}

/// Chebyshev type-I band-pass with equiripple passband between `low_hz` and
/// `high_hz`. The prototype order is `order`, so the digital filter has
/// `2 * order` poles.
pub fn design_cheby1_bandpass(
    order: usize,
    ripple_db: f64,
    low_hz: f64,
    high_hz: f64,
    fs: f64,
) -> Result<BiquadCascade, DspError> {
    if order == 0 || !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(DspError::InvalidBand {
            low: low_hz,
            high: high_hz,
            fs,
        });
    }
    if !(ripple_db > 0.0) {
        return Err(DspError::InvalidRipple(ripple_db));
    }
    let w1 = prewarp(low_hz, fs);
    let w2 = prewarp(high_hz, fs);
    let bp = lowpass_to_bandpass(
        &chebyshev1_prototype(order, ripple_db),
        (w1 * w2).sqrt(),
        w2 - w1,
    );
    Ok(to_cascade(&bilinear(&bp, fs)))
}
