//! Signal processing kernels: IIR Butterworth band-pass design (second-order
//! sections), zero-phase forward-backward filtering, Welch spectral density,
//! and Kaiser-windowed polyphase resampling.
//!
//! All filters operate on `f64` slices; multichannel callers map over rows.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// FFT plan cache
// ---------------------------------------------------------------------------

thread_local! {
    static FFT_CACHE: RefCell<(FftPlanner<f64>, HashMap<usize, Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

/// Forward FFT of a complex buffer in place, with per-thread plan caching.
pub fn fft_forward(buf: &mut [Complex64]) {
    let n = buf.len();
    FFT_CACHE.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        let plan = cache
            .entry(n)
            .or_insert_with(|| planner.plan_fft_forward(n))
            .clone();
        plan.process(buf);
    });
}

/// Inverse FFT (unnormalised; caller divides by n).
pub fn fft_inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    FFT_CACHE.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        // Inverse plans are cached under n | high bit to avoid clashing.
        let key = n | (1usize << 63);
        let plan = cache
            .entry(key)
            .or_insert_with(|| planner.plan_fft_inverse(n))
            .clone();
        plan.process(buf);
    });
}

// ---------------------------------------------------------------------------
// Biquad sections and Butterworth band-pass design
// ---------------------------------------------------------------------------

/// One second-order section, direct form II transposed.
/// `y[n] = b0 x + z1; z1 = b1 x - a1 y + z2; z2 = b2 x - a2 y` (a0 = 1).
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Steady-state filter state for a unit-amplitude constant input,
    /// used to suppress start-up transients in zero-phase filtering.
    fn step_state(&self) -> [f64; 2] {
        let g = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z[0];
            z[0] = b1 * xin - a1 * y + z[1];
            z[1] = b2 * xin - a2 * y;
            *v = y;
        }
    }

    /// Complex response at normalised angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = Complex64::new(self.b[0], 0.0) + z1 * self.b[1] + z2 * self.b[2];
        let den = Complex64::new(1.0, 0.0) + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }
}

/// A cascade of biquads.
#[derive(Debug, Clone)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    pub fn response(&self, w: f64) -> Complex64 {
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    /// Number of poles of the cascade.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }
}

/// Design an order-`order` Butterworth band-pass as second-order sections.
///
/// `order` counts prototype low-pass poles; the band-pass cascade has
/// `2·order` poles (the usual `butter(order, [lo, hi])` convention). The
/// design path is analog prototype → band transform → bilinear map, with
/// the gain normalised to unity at the (warped) geometric centre frequency.
pub fn butter_bandpass(lo: f64, hi: f64, fs: f64, order: usize) -> Result<SosFilter> {
    if !(lo > 0.0) {
        return Err(Error::Invalid(format!("bandpass: lo must be > 0, got {lo}")));
    }
    if hi >= fs / 2.0 {
        return Err(Error::Invalid(format!(
            "bandpass: hi={hi} must be below Nyquist {}",
            fs / 2.0
        )));
    }
    if lo >= hi {
        return Err(Error::Invalid(format!("bandpass: lo={lo} >= hi={hi}")));
    }
    if order == 0 {
        return Err(Error::Invalid("bandpass: order must be >= 1".into()));
    }

    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / fs).tan();
    let wlo = warp(lo);
    let whi = warp(hi);
    let w0 = (wlo * whi).sqrt();
    let bw = whi - wlo;

    // Analog Butterworth prototype poles (unit cutoff, left half-plane).
    let n = order;
    let mut proto = Vec::with_capacity(n);
    for k in 1..=n {
        let theta = std::f64::consts::PI * (2 * k + n - 1) as f64 / (2 * n) as f64;
        proto.push(Complex64::new(theta.cos(), theta.sin()));
    }

    // Low-pass → band-pass: each prototype pole expands into a pair.
    let mut poles = Vec::with_capacity(2 * n);
    for &p in &proto {
        let s = p * (bw / 2.0);
        let disc = (s * s - Complex64::new(w0 * w0, 0.0)).sqrt();
        poles.push(s + disc);
        poles.push(s - disc);
    }

    // Bilinear transform of the poles; zeros land at z = ±1.
    let zpoles: Vec<Complex64> = poles
        .iter()
        .map(|&s| (Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s))
        .collect();

    // Pair poles into conjugate sections. Poles come in conjugate pairs by
    // construction; sort by imaginary magnitude then pair adjacent entries.
    let mut sorted = zpoles.clone();
    sorted.sort_by(|a, b| {
        a.im.abs()
            .partial_cmp(&b.im.abs())
            .unwrap()
            .then(a.re.partial_cmp(&b.re).unwrap())
            .then(a.im.partial_cmp(&b.im).unwrap())
    });

    let mut sections = Vec::with_capacity(n);
    let mut i = 0;
    while i < sorted.len() {
        let p1 = sorted[i];
        let p2 = sorted[i + 1];
        // (z - p1)(z - p2) = z^2 - (p1+p2) z + p1 p2; coefficients are real
        // for conjugate (or real-real) pairs.
        let a1 = -(p1 + p2).re;
        let a2 = (p1 * p2).re;
        // One zero at z = +1 and one at z = -1 per section: b = [1, 0, -1].
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [a1, a2],
        });
        i += 2;
    }

    let mut filter = SosFilter { sections };

    // Normalise to unit gain at the warped centre frequency.
    let wc = 2.0 * (w0 / fs2).atan();
    let gain = filter.response(wc).norm();
    if !(gain > 0.0) {
        return Err(Error::Numerical("bandpass: degenerate design gain".into()));
    }
    for c in filter.sections[0].b.iter_mut() {
        *c /= gain;
    }
    Ok(filter)
}

// ---------------------------------------------------------------------------
// Zero-phase filtering
// ---------------------------------------------------------------------------

/// Forward-backward application of an SOS cascade (zero phase, squared
/// magnitude response) with odd reflection padding of `3 × (order + 1)`
/// samples and steady-state initial conditions per section.
pub fn filtfilt(filter: &SosFilter, x: &[f64]) -> Result<Vec<f64>> {
    let padlen = 3 * (filter.order() + 1);
    if x.len() <= padlen {
        return Err(Error::Invalid(format!(
            "filtfilt: signal length {} must exceed pad length {padlen}",
            x.len()
        )));
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * padlen);
    let first = x[0];
    let last = x[n - 1];
    for i in 0..padlen {
        ext.push(2.0 * first - x[padlen - i]);
    }
    ext.extend_from_slice(x);
    for i in 0..padlen {
        ext.push(2.0 * last - x[n - 2 - i]);
    }

    let run_cascade = |data: &mut [f64], sections: &[Biquad]| {
        for s in sections {
            let zi = s.step_state();
            let x0 = data[0];
            s.run(data, [zi[0] * x0, zi[1] * x0]);
        }
    };

    run_cascade(&mut ext, &filter.sections);
    ext.reverse();
    run_cascade(&mut ext, &filter.sections);
    ext.reverse();

    Ok(ext[padlen..padlen + n].to_vec())
}

// ---------------------------------------------------------------------------
// Welch power spectral density
// ---------------------------------------------------------------------------

/// One-sided Welch PSD estimate.
///
/// Segments of `nperseg` samples (50% overlap), periodic Hann window,
/// per-segment mean removal, zero-padded to `nfft` bins. Returns
/// `(frequencies, density)`; the density integrates (bin × df) to the
/// signal variance.
pub struct WelchSpec {
    pub nperseg: usize,
    pub nfft: usize,
}

impl Default for WelchSpec {
    fn default() -> Self {
        // 128-sample segments, 2× zero padding for finer band edges.
        WelchSpec {
            nperseg: 128,
            nfft: 256,
        }
    }
}

pub fn welch_psd(x: &[f64], fs: f64, spec: &WelchSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.is_empty() {
        return Err(Error::Empty("welch: empty signal".into()));
    }
    let nperseg = spec.nperseg.min(x.len());
    let nfft = spec.nfft.max(nperseg);
    let step = (nperseg / 2).max(1);

    let window: Vec<f64> = (0..nperseg)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / nperseg as f64).cos()))
        .collect();
    let win_norm: f64 = window.iter().map(|w| w * w).sum();

    let n_bins = nfft / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let mut n_segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];

    let mut start = 0usize;
    while start + nperseg <= x.len() {
        let seg = &x[start..start + nperseg];
        let mean = seg.iter().sum::<f64>() / nperseg as f64;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < nperseg {
                Complex64::new((seg[i] - mean) * window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft_forward(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let p = buf[k].norm_sqr();
            let one_sided = if k == 0 || (nfft % 2 == 0 && k == nfft / 2) {
                1.0
            } else {
                2.0
            };
            *a += one_sided * p;
        }
        n_segments += 1;
        start += step;
    }
    if n_segments == 0 {
        // Shorter than one segment: single windowed block.
        return welch_psd(
            x,
            fs,
            &WelchSpec {
                nperseg: x.len(),
                nfft: nfft.max(x.len()),
            },
        );
    }

    let scale = 1.0 / (fs * win_norm * n_segments as f64);
    let psd: Vec<f64> = acc.iter().map(|a| a * scale).collect();
    let freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * fs / nfft as f64).collect();
    Ok((freqs, psd))
}

/// Integrated in-band power: sum of `psd · df` for bins with `lo ≤ f < hi`.
pub fn band_power_from_psd(freqs: &[f64], psd: &[f64], lo: f64, hi: f64) -> f64 {
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 1.0 };
    freqs
        .iter()
        .zip(psd.iter())
        .filter(|(f, _)| **f >= lo && **f < hi)
        .map(|(_, p)| p * df)
        .sum()
}

// ---------------------------------------------------------------------------
// Polyphase resampling
// ---------------------------------------------------------------------------

/// Best rational approximation `l/m ≈ ratio` with `m ≤ max_den`
/// (continued-fraction convergents).
pub fn best_rational(ratio: f64, max_den: u64) -> (u64, u64) {
    let mut x = ratio;
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    for _ in 0..64 {
        let a = x.floor() as u64;
        let h2 = a.checked_mul(h1).and_then(|v| v.checked_add(h0));
        let k2 = a.checked_mul(k1).and_then(|v| v.checked_add(k0));
        match (h2, k2) {
            (Some(h2), Some(k2)) if k2 <= max_den => {
                h0 = h1;
                h1 = h2;
                k0 = k1;
                k1 = k2;
            }
            _ => break,
        }
        let frac = x - x.floor();
        if frac.abs() < 1e-12 {
            break;
        }
        x = 1.0 / frac;
    }
    (h1.max(1), k1.max(1))
}

fn bessel_i0(x: f64) -> f64 {
    // Power series; converges quickly for the β values used here.
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc low-pass prototype for an L/M polyphase resampler.
fn kaiser_sinc_taps(l: u64, m: u64, beta: f64) -> Vec<f64> {
    let half = (10 * l.max(m)) as i64;
    let fc = 1.0 / l.max(m) as f64; // in units of the upsampled Nyquist
    let i0b = bessel_i0(beta);
    let mut h = Vec::with_capacity((2 * half + 1) as usize);
    for i in -half..=half {
        let t = i as f64;
        let sinc = if i == 0 {
            1.0
        } else {
            (std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * fc * t)
        };
        let r = t / half as f64;
        let win = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
        h.push(l as f64 * fc * sinc * win);
    }
    h
}

/// Resample `x` from `fs_in` to `fs_out` (anti-aliased polyphase, Kaiser
/// β = 8.6). Output length is `round(len · fs_out / fs_in)`.
pub fn resample(x: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>> {
    if !(fs_out > 0.0) {
        return Err(Error::Invalid(format!("resample: target fs {fs_out} must be > 0")));
    }
    if !(fs_in > 0.0) {
        return Err(Error::Invalid("resample: source fs must be > 0".into()));
    }
    // Sub-ppm rate differences are header-precision artifacts, not real
    // rate conversions.
    if (fs_in - fs_out).abs() < 1e-6 * fs_in {
        return Ok(x.to_vec());
    }
    let (l, m) = best_rational(fs_out / fs_in, 1 << 14);
    let taps = kaiser_sinc_taps(l, m, 8.6);
    let half = (taps.len() / 2) as i64;
    let n = x.len() as i64;
    let out_len = ((x.len() as u128 * 2 * l as u128 + m as u128) / (2 * m as u128)) as usize;

    let l_i = l as i64;
    let m_i = m as i64;
    let mut y = Vec::with_capacity(out_len);
    for j in 0..out_len as i64 {
        // Upsampled-grid position of output j, filter centred at `half`.
        let p = j * m_i + half;
        // Tap indices congruent to p mod L hit non-zero (stuffed) samples.
        let k0 = p.rem_euclid(l_i);
        let mut accum = 0.0f64;
        let mut k = k0;
        while k < taps.len() as i64 {
            let q = (p - k) / l_i;
            if q >= 0 && q < n {
                accum += taps[k as usize] * x[q as usize];
            }
            k += l_i;
        }
        y.push(accum);
    }
    Ok(y)
}
