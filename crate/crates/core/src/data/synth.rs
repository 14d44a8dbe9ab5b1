use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SensorStream;
use crate::error::{invalid, Result};
use crate::numcore::Rng;

/// Nuisance-variation knobs for the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Half-range of each subject's persistent frequency multiplier.
    pub freq_spread: f64,
    /// Half-range of each subject's persistent amplitude multiplier.
    pub amp_spread: f64,
    /// Maximum angle of each subject's sensor-orientation rotation, degrees.
    pub rotation_deg: f64,
    /// Relative standard deviation of the slow within-activity tempo drift.
    pub tempo_drift: f64,
    /// Relative standard deviation of the slow amplitude envelope.
    pub amp_drift: f64,
    pub noise_std: f64,
    pub gravity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            freq_spread: 0.12,
            amp_spread: 0.3,
            rotation_deg: 40.0,
            tempo_drift: 0.04,
            amp_drift: 0.15,
            noise_std: 0.35,
            gravity: 1.0,
        }
    }
}

/// Fixed per-class waveform: fundamental, harmonic mix and per-axis profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWaveform {
    pub freq_hz: f64,
    pub harmonics: [f64; 2],
    pub axis_gain: [f64; 3],
    pub axis_phase: [f64; 3],
}

pub fn class_waveform(c: usize) -> ClassWaveform {
    let cf = c as f64;
    let frac = |v: f64| v - v.floor();
    ClassWaveform {
        freq_hz: 1.0 + 0.5 * cf,
        harmonics: [0.6 * frac(0.37 * cf + 0.2), 0.35 * frac(0.61 * cf + 0.5)],
        axis_gain: [0, 1, 2].map(|k| 0.4 + 0.6 * (1.3 * cf + 2.1 * k as f64).cos().abs()),
        axis_phase: [0, 1, 2].map(|k| 0.7 * k as f64 * (cf + 1.0)),
    }
}

/// Rotation about a random unit axis by a random angle in `[0, max_rad]`.
fn random_rotation(rng: &mut Rng, max_rad: f64) -> [[f64; 3]; 3] {
    let (mut a, mut n);
    loop {
        a = [rng.normal(), rng.normal(), rng.normal()];
        n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        if n > 1e-9 {
            break;
        }
    }
    let [x, y, z] = a.map(|v| v / n);
    let th = rng.uniform() * max_rad;
    let (s, c) = th.sin_cos();
    let t = 1.0 - c;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}

/// Unit-variance Ornstein–Uhlenbeck step with time constant `tau` seconds.
fn ou_step(v: f64, dt: f64, tau: f64, rng: &mut Rng) -> f64 {
    let a = (-dt / tau).exp();
    a * v + (1.0 - a * a).sqrt() * rng.normal()
}

pub fn synth_generate(
    n_subjects: usize,
    n_classes: usize,
    rate_hz: f64,
    seconds_per_class: f64,
    rng: &mut Rng,
) -> Result<Vec<SensorStream>> {
    synth_generate_with(n_subjects, n_classes, rate_hz, seconds_per_class, &SynthConfig::default(), rng)
}

/// Three-axis streams; each subject performs every class for the same
/// duration, in a subject-specific random order.
pub fn synth_generate_with(
    n_subjects: usize,
    n_classes: usize,
    rate_hz: f64,
    seconds_per_class: f64,
    cfg: &SynthConfig,
    rng: &mut Rng,
) -> Result<Vec<SensorStream>> {
    if n_subjects < 2 || n_classes < 2 {
        return Err(invalid("synthetic corpus needs at least 2 subjects and 2 classes"));
    }
    if !(rate_hz > 0.0) || !(seconds_per_class * rate_hz >= 1.0) {
        return Err(invalid("rate and duration must give at least one sample per class"));
    }
    let per_class = (seconds_per_class * rate_hz).round() as usize;
    let dt = 1.0 / rate_hz;
    let mut out = Vec::with_capacity(n_subjects);
    for s in 0..n_subjects {
        let mut r = rng.fork(s as u64);
        let freq_mul = 1.0 + cfg.freq_spread * r.uniform_range(-1.0, 1.0);
        let amp_mul = 1.0 + cfg.amp_spread * r.uniform_range(-1.0, 1.0);
        let rot = random_rotation(&mut r, cfg.rotation_deg.to_radians());
        let gravity = [0, 1, 2].map(|i| rot[i][2] * cfg.gravity);
        let mut order: Vec<usize> = (0..n_classes).collect();
        r.shuffle(&mut order);

        let n = per_class * n_classes;
        let mut channels = vec![Vec::with_capacity(n); 3];
        let mut labels = Vec::with_capacity(n);
        let (mut phase, mut tempo, mut env) = (r.uniform() * 2.0 * PI, r.normal(), r.normal());
        for &c in &order {
            let w = class_waveform(c);
            for _ in 0..per_class {
                tempo = ou_step(tempo, dt, 2.0, &mut r);
                env = ou_step(env, dt, 3.0, &mut r);
                phase += 2.0 * PI * w.freq_hz * freq_mul * (1.0 + cfg.tempo_drift * tempo) * dt;
                let a = amp_mul * (1.0 + cfg.amp_drift * env).max(0.0);
                let body = [0, 1, 2].map(|k| {
                    let p = phase + w.axis_phase[k];
                    a * w.axis_gain[k] * (p.sin() + w.harmonics[0] * (2.0 * p).sin() + w.harmonics[1] * (3.0 * p + 0.5).sin())
                });
                for i in 0..3 {
                    let v = rot[i][0] * body[0] + rot[i][1] * body[1] + rot[i][2] * body[2];
                    channels[i].push(v + gravity[i] + cfg.noise_std * r.normal());
                }
                labels.push(Some(format!("act{c:02}")));
            }
        }
        out.push(SensorStream {
            subject: format!("subj{s:02}"),
            sample_rate_hz: rate_hz,
            channel_names: (0..3).map(|k| format!("ch{k}")).collect(),
            channels,
            labels,
            t: (0..n).map(|i| i as f64 * dt).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Index of the largest DFT magnitude (bins 1..n/2) of the mean-removed
    /// signal, summed over channels.
    fn dft_peak_hz(chans: &[&[f64]], rate: f64) -> f64 {
        let n = chans[0].len();
        let mut best = (0, 0.0);
        for k in 1..n / 2 {
            let mut mag = 0.0;
            for ch in chans {
                let mean = ch.iter().sum::<f64>() / n as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in ch.iter().enumerate() {
                    let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += (v - mean) * ang.cos();
                    im += (v - mean) * ang.sin();
                }
                mag += (re * re + im * im).sqrt();
            }
            if mag > best.1 {
                best = (k, mag);
            }
        }
        best.0 as f64 * rate / n as f64
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = synth_generate(3, 4, 20.0, 10.0, &mut Rng::new(7)).unwrap();
        let b = synth_generate(3, 4, 20.0, 10.0, &mut Rng::new(7)).unwrap();
        let c = synth_generate(3, 4, 20.0, 10.0, &mut Rng::new(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn equal_time_per_class() {
        let s = synth_generate(2, 6, 20.0, 12.0, &mut Rng::new(1)).unwrap();
        for st in &s {
            assert_eq!(st.len(), 6 * 240);
            st.validate().unwrap();
            for c in 0..6 {
                let name = format!("act{c:02}");
                assert_eq!(st.labels.iter().filter(|l| l.as_deref() == Some(&name)).count(), 240);
            }
        }
    }

    #[test]
    fn class_spectral_peaks_are_ordered() {
        let rate = 20.0;
        let streams = synth_generate(4, 6, rate, 30.0, &mut Rng::new(3)).unwrap();
        for st in &streams {
            let mut peaks = Vec::new();
            for c in 0..6 {
                let name = format!("act{c:02}");
                let idx: Vec<usize> = (0..st.len()).filter(|&i| st.labels[i].as_deref() == Some(&name)).collect();
                let chans: Vec<Vec<f64>> = st.channels.iter().map(|ch| idx.iter().map(|&i| ch[i]).collect()).collect();
                let refs: Vec<&[f64]> = chans.iter().map(Vec::as_slice).collect();
                peaks.push(dft_peak_hz(&refs, rate));
            }
            for w in peaks.windows(2) {
                assert!(w[1] > w[0] + 0.2, "peaks not separated for {}: {peaks:?}", st.subject);
            }
            for (c, p) in peaks.iter().enumerate() {
                let f = class_waveform(c).freq_hz;
                assert!((p / f - 1.0).abs() < 0.2, "class {c}: peak {p} vs nominal {f}");
            }
        }
    }
}
