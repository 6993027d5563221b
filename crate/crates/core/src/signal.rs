//! Hilbert-phase analysis of hip series and touchdown-angle estimation from
//! limb-angle series.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Result, SlipError};

/// Uniformly sampled scalar series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub sample_rate: f64,
    pub t0: f64,
    pub units: String,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(sample_rate: f64, values: Vec<f64>) -> Result<Self> {
        Self::with_units(sample_rate, 0.0, "", values)
    }

    pub fn with_units(sample_rate: f64, t0: f64, units: &str, values: Vec<f64>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SlipError::Domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        if !t0.is_finite() {
            return Err(SlipError::Domain("start time must be finite".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SlipError::Domain(format!("non-finite value at sample {i}")));
        }
        Ok(Self { sample_rate, t0, units: units.into(), values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }
}

/// Tunables of the phase and touchdown pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalOptions {
    /// Moving-average width for the frequency signal, as a fraction of the series length.
    pub smoothing_fraction: f64,
    /// Fraction of samples dropped at each end of a segment before fitting or peak search.
    pub edge_fraction: f64,
    /// Peak prominence below `flatness * |median|` counts as a flat frequency signal.
    pub flatness: f64,
    /// A touchdown is flagged where mean |angular velocity| drops below this ratio.
    pub touchdown_ratio: f64,
    /// Window length for the touchdown velocity comparison, in seconds.
    pub touchdown_window: f64,
}

impl Default for SignalOptions {
    fn default() -> Self {
        Self { smoothing_fraction: 0.05, edge_fraction: 0.1, flatness: 0.05, touchdown_ratio: 0.5, touchdown_window: 0.05 }
    }
}

fn detrend(xs: &[f64]) -> Vec<f64> {
    let (intercept, slope) = linear_fit_idx(xs);
    xs.iter().enumerate().map(|(i, x)| x - intercept - slope * i as f64).collect()
}

fn linear_fit_idx(xs: &[f64]) -> (f64, f64) {
    let ts: Vec<f64> = (0..xs.len()).map(|i| i as f64).collect();
    linear_fit(&ts, xs)
}

/// Least-squares line `y = a + b t`; returns `(a, b)`.
pub fn linear_fit(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        sxx += (t - mt) * (t - mt);
        sxy += (t - mt) * (y - my);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mt, b)
}

/// One-sided spectral projection of a complex sequence, zero-padded to the
/// next power of two: negative bins zeroed, DC and Nyquist halved, positive
/// bins kept. Returns the full padded sequence.
pub fn positive_projection_padded(xs: &[Complex64]) -> Vec<Complex64> {
    let n = xs.len().next_power_of_two().max(2);
    let mut buf = xs.to_vec();
    buf.resize(n, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        *b *= match k {
            0 => 0.5,
            _ if k == n / 2 => 0.5,
            _ if k < n / 2 => 1.0,
            _ => 0.0,
        };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|b| *b *= scale);
    buf
}

/// One-sided projection truncated back to the input length; leaves
/// positive-frequency content unchanged.
pub fn positive_projection(xs: &[Complex64]) -> Vec<Complex64> {
    let mut z = positive_projection_padded(xs);
    z.truncate(xs.len());
    z
}

/// Analytic signal of a real sequence over the padded length: DC and Nyquist
/// kept, positive bins doubled, negative bins zeroed.
pub fn analytic_padded(xs: &[f64]) -> Vec<Complex64> {
    let c: Vec<Complex64> = xs.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let mut z = positive_projection_padded(&c);
    z.iter_mut().for_each(|v| *v *= 2.0);
    z
}

/// Analytic signal of a detrended real series.
pub fn analytic_signal(s: &TimeSeries) -> Result<Vec<Complex64>> {
    if s.len() < 8 {
        return Err(SlipError::Domain(format!("analytic signal needs at least 8 samples, got {}", s.len())));
    }
    let mut z = analytic_padded(&detrend(&s.values));
    z.truncate(s.len());
    Ok(z)
}

/// Unwraps a phase sequence so consecutive differences lie in (−π, π].
pub fn unwrap(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let prev = out[i - 1];
            let d = wrap_angle(p + offset - prev);
            offset = prev + d - p;
        }
        out.push(p + offset);
    }
    out
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - 2.0 * PI * (a / (2.0 * PI)).round();
    if w <= -PI {
        w + 2.0 * PI
    } else if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Centered moving average of odd width; shrinks at the ends.
pub fn moving_average(xs: &[f64], width: usize) -> Vec<f64> {
    let h = width.max(1) / 2;
    let mut prefix = vec![0.0; xs.len() + 1];
    for (i, x) in xs.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(xs.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Derivative of a sampled sequence: central differences inside, one-sided at the ends.
pub fn gradient(xs: &[f64], rate: f64) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|i| match i {
            _ if n < 2 => 0.0,
            0 => (xs[1] - xs[0]) * rate,
            _ if i == n - 1 => (xs[n - 1] - xs[n - 2]) * rate,
            _ => (xs[i + 1] - xs[i - 1]) * 0.5 * rate,
        })
        .collect()
}

/// Unwrapped instantaneous phase and frequency (rad/s) of a series.
pub fn phase_and_frequency(s: &TimeSeries) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = analytic_signal(s)?;
    let phase = unwrap(&z.iter().map(|c| c.arg()).collect::<Vec<_>>());
    let freq = gradient(&phase, s.sample_rate);
    Ok((phase, freq))
}

fn is_flat_series(xs: &[f64]) -> bool {
    let d = detrend(xs);
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    d.iter().all(|x| x.abs() <= 1e-12 * scale)
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn edge(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).floor() as usize
}

fn transition_from(freq: &[f64], opts: &SignalOptions) -> Result<usize> {
    let n = freq.len();
    let width = ((n as f64 * opts.smoothing_fraction).round() as usize).max(1) | 1;
    let smooth = moving_average(freq, width);
    let e = edge(n, opts.edge_fraction);
    let inner = &smooth[e..n - e];
    let med = median(inner);
    let (peak, max) = inner.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    if !(max - med > opts.flatness * med.abs()) {
        return Err(SlipError::NoTransition);
    }
    // localize within the smoothing window on the raw frequency
    let peak = peak + e;
    let lo = peak.saturating_sub(width / 2).max(e);
    let hi = (peak + width / 2 + 1).min(n - e);
    Ok((lo..hi).fold(lo, |b, i| if freq[i] > freq[b] { i } else { b }))
}

/// Index of the highest peak of the smoothed instantaneous frequency.
pub fn transition_point(hip: &TimeSeries, opts: &SignalOptions) -> Result<usize> {
    if hip.len() >= 8 && is_flat_series(&hip.values) {
        return Err(SlipError::NoTransition);
    }
    let (_, freq) = phase_and_frequency(hip)?;
    transition_from(&freq, opts)
}

fn side_intercept(phase: &[f64], range: std::ops::Range<usize>, origin: usize, rate: f64, opts: &SignalOptions) -> Result<f64> {
    let len = range.len();
    let cycles = (phase[range.end - 1] - phase[range.start]).abs() / (2.0 * PI);
    if cycles < 2.0 {
        return Err(SlipError::Domain(format!("need at least 2 cycles on each side of the transition, found {cycles:.2}")));
    }
    let e = edge(len, opts.edge_fraction);
    let idx = range.start + e..range.end - e;
    if idx.len() < 2 {
        return Err(SlipError::Domain("too few samples to fit".into()));
    }
    let ts: Vec<f64> = idx.clone().map(|i| (i as f64 - origin as f64) / rate).collect();
    Ok(linear_fit(&ts, &phase[idx]).0)
}

fn phase_change_from(phase: &[f64], t_index: usize, rate: f64, opts: &SignalOptions) -> Result<f64> {
    if t_index == 0 || t_index >= phase.len() {
        return Err(SlipError::Domain(format!("transition index {t_index} outside the series")));
    }
    let before = side_intercept(phase, 0..t_index, t_index, rate, opts)?;
    let after = side_intercept(phase, t_index..phase.len(), t_index, rate, opts)?;
    Ok(wrap_angle(after - before))
}

/// Phase change across `t_index`: difference of the intercepts of linear fits
/// to the unwrapped phase on each side, wrapped to (−π, π].
pub fn phase_change(hip: &TimeSeries, t_index: usize, opts: &SignalOptions) -> Result<f64> {
    let (phase, _) = phase_and_frequency(hip)?;
    phase_change_from(&phase, t_index, hip.sample_rate, opts)
}

/// Result of the phase pipeline on one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAnalysis {
    pub status: AnalysisStatus,
    pub sample_rate: f64,
    pub transition_index: Option<usize>,
    pub transition_time: Option<f64>,
    pub phase_change_rad: Option<f64>,
    pub phase_change_deg: Option<f64>,
    pub phase: Vec<f64>,
    pub frequency: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisStatus {
    Ok,
    NoTransition,
    InsufficientCycles,
}

/// Runs the full phase pipeline. A flat frequency signal or too few cycles is
/// reported through `status` rather than as an error.
pub fn analyze_phase(hip: &TimeSeries, opts: &SignalOptions) -> Result<PhaseAnalysis> {
    let (phase, frequency) = if is_flat_series(&hip.values) && hip.len() >= 8 {
        (vec![0.0; hip.len()], vec![0.0; hip.len()])
    } else {
        phase_and_frequency(hip)?
    };
    let mut out = PhaseAnalysis {
        status: AnalysisStatus::NoTransition,
        sample_rate: hip.sample_rate,
        transition_index: None,
        transition_time: None,
        phase_change_rad: None,
        phase_change_deg: None,
        phase,
        frequency,
    };
    let idx = match transition_from(&out.frequency, opts) {
        Ok(i) => i,
        Err(SlipError::NoTransition) => return Ok(out),
        Err(e) => return Err(e),
    };
    out.transition_index = Some(idx);
    out.transition_time = Some(hip.time(idx));
    match phase_change_from(&out.phase, idx, hip.sample_rate, opts) {
        Ok(d) => {
            out.status = AnalysisStatus::Ok;
            out.phase_change_rad = Some(d);
            out.phase_change_deg = Some(d.to_degrees());
        }
        Err(SlipError::Domain(_)) => out.status = AnalysisStatus::InsufficientCycles,
        Err(e) => return Err(e),
    }
    Ok(out)
}

/// A detected touchdown: sample index, time and limb angle at that sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Touchdown {
    pub index: usize,
    pub time: f64,
    pub angle: f64,
}

/// Flags samples where the mean angular speed over the following window
/// drops below `touchdown_ratio` times that over the preceding window; each
/// contiguous run of flagged samples yields its sharpest drop.
pub fn estimate_touchdown_angles(limb: &TimeSeries, opts: &SignalOptions) -> Result<Vec<Touchdown>> {
    if limb.len() < 3 {
        return Err(SlipError::Domain(format!("touchdown estimation needs at least 3 samples, got {}", limb.len())));
    }
    let speed: Vec<f64> = limb.values.windows(2).map(|w| ((w[1] - w[0]) * limb.sample_rate).abs()).collect();
    let w = ((opts.touchdown_window * limb.sample_rate).round() as usize).max(1);
    let mut prefix = vec![0.0; speed.len() + 1];
    for (i, v) in speed.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let scale = speed.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut out = Vec::new();
    let mut run: Option<(usize, f64)> = None;
    let mut flush = |run: &mut Option<(usize, f64)>| {
        if let Some((i, _)) = run.take() {
            out.push(Touchdown { index: i, time: limb.time(i), angle: limb.values[i] });
        }
    };
    for i in w..=speed.len().saturating_sub(w) {
        if i < w || i + w > speed.len() {
            continue;
        }
        let before = (prefix[i] - prefix[i - w]) / w as f64;
        let after = (prefix[i + w] - prefix[i]) / w as f64;
        let significant = before > 1e-9 * scale.max(f64::MIN_POSITIVE);
        if significant && after < opts.touchdown_ratio * before {
            let ratio = after / before;
            match run {
                Some((_, best)) if best <= ratio => {}
                _ => run = Some((i, ratio)),
            }
        } else {
            flush(&mut run);
        }
    }
    flush(&mut run);
    Ok(out)
}

/// Reads a two-column `time,value` CSV. Leading `#` lines carry metadata:
/// `sample_rate_hz` (required) and `units` (optional).
pub fn read_series_csv<R: Read>(mut r: R) -> Result<TimeSeries> {
    let mut text = String::new();
    r.read_to_string(&mut text).map_err(|e| SlipError::Parse(e.to_string()))?;
    let mut rate = None;
    let mut units = String::new();
    for line in text.lines().map(str::trim).take_while(|l| l.starts_with('#') || l.is_empty()) {
        let Some((k, v)) = line.trim_start_matches('#').split_once('=') else { continue };
        match k.trim() {
            "sample_rate_hz" => {
                rate = Some(v.trim().parse::<f64>().map_err(|e| SlipError::Parse(format!("sample_rate_hz: {e}")))?)
            }
            "units" => units = v.trim().to_string(),
            _ => {}
        }
    }
    let rate = rate.ok_or_else(|| SlipError::Parse("missing `# sample_rate_hz = ...` header".into()))?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rd.headers().map_err(|e| SlipError::Parse(e.to_string()))?.clone();
    if headers.len() != 2 {
        return Err(SlipError::Parse(format!("expected 2 columns, found {}", headers.len())));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in rd.deserialize::<(f64, f64)>().enumerate() {
        let (t, v) = rec.map_err(|e| SlipError::Parse(format!("row {k}: {e}")))?;
        times.push(t);
        values.push(v);
    }
    let t0 = times.first().copied().unwrap_or(0.0);
    let s = TimeSeries::with_units(rate, t0, &units, values).map_err(|e| SlipError::Parse(e.to_string()))?;
    let tol = 1e-6 * s.dt().max(t0.abs()).max(1.0) + 1e-3 * s.dt();
    if let Some(i) = times.iter().enumerate().position(|(i, t)| !((t - s.time(i)).abs() <= tol)) {
        return Err(SlipError::Parse(format!("row {i}: time is not uniformly sampled at {rate} Hz")));
    }
    Ok(s)
}

/// Writes a series in the format read by [`read_series_csv`].
pub fn write_series_csv<W: Write>(s: &TimeSeries, mut w: W) -> Result<()> {
    writeln!(w, "# sample_rate_hz = {}", s.sample_rate)?;
    if !s.units.is_empty() {
        writeln!(w, "# units = {}", s.units)?;
    }
    writeln!(w, "time,value")?;
    for (i, v) in s.values.iter().enumerate() {
        writeln!(w, "{},{}", s.time(i), v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(n: usize, rate: f64, omega: f64) -> TimeSeries {
        TimeSeries::new(rate, (0..n).map(|i| (omega * i as f64 / rate).cos()).collect()).unwrap()
    }

    #[test]
    fn cosine_has_unit_envelope_and_linear_phase() {
        let s = cosine(4000, 100.0, 2.0 * PI * 2.0);
        let z = analytic_signal(&s).unwrap();
        let phase = unwrap(&z.iter().map(|c| c.arg()).collect::<Vec<_>>());
        for i in 400..3600 {
            assert!((z[i].norm() - 1.0).abs() < 1e-3, "|z[{i}]| = {}", z[i].norm());
            let expected = 2.0 * PI * 2.0 * i as f64 / 100.0;
            assert!(wrap_angle(phase[i] - expected).abs() < 1e-3);
        }
    }

    #[test]
    fn too_short_is_rejected() {
        let s = TimeSeries::new(10.0, vec![1.0; 7]).unwrap();
        assert!(matches!(analytic_signal(&s), Err(SlipError::Domain(_))));
    }

    #[test]
    fn unwrap_keeps_steps_in_range() {
        let raw: Vec<f64> = (0..200).map(|i| wrap_angle(0.7 * i as f64)).collect();
        let u = unwrap(&raw);
        for w in u.windows(2) {
            let d = w[1] - w[0];
            assert!(d > -PI && d <= PI);
            assert!((d - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_angle_has_no_touchdowns() {
        let s = TimeSeries::new(200.0, vec![0.3; 400]).unwrap();
        assert!(estimate_touchdown_angles(&s, &SignalOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn series_csv_round_trip() {
        let s = TimeSeries::with_units(250.0, 1.5, "m", vec![1.0, 0.98, 0.97, 0.99]).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&s, &mut buf).unwrap();
        let back = read_series_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(read_series_csv(&b"time,value\n0,1\n"[..]).is_err());
    }

    fn spliced(rate: f64, n1: usize, n2: usize, w1: f64, w2: f64, jump: f64) -> TimeSeries {
        let ts = n1 as f64 / rate;
        let v = (0..n1 + n2)
            .map(|i| {
                let t = i as f64 / rate;
                if i < n1 {
                    (w1 * t).cos()
                } else {
                    (w2 * (t - ts) + w1 * ts + jump).cos()
                }
            })
            .collect();
        TimeSeries::new(rate, v).unwrap()
    }

    #[test]
    fn positive_exponential_is_unchanged_inside() {
        // on-bin frequency: exact
        let n = 4096;
        let w = 2.0 * PI * 300.0 / n as f64;
        let xs: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, w * i as f64)).collect();
        let z = positive_projection(&xs);
        let err = (0..n).map(|i| (z[i] - xs[i]).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        // off-bin frequency: edge leakage only
        let xs: Vec<Complex64> = (0..4000).map(|i| Complex64::from_polar(1.0, 0.37 * i as f64)).collect();
        let z = positive_projection(&xs);
        let err = (400..3600).map(|i| (z[i] - xs[i]).norm()).fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn white_noise_energy_matches_spectral_sum() {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let xs: Vec<f64> = (0..256)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let z = analytic_padded(&xs);
        let n = xs.len();
        // direct DFT
        let bins: Vec<Complex64> = (0..n)
            .map(|k| xs.iter().enumerate().map(|(j, x)| *x * Complex64::from_polar(1.0, -2.0 * PI * (k * j) as f64 / n as f64)).sum())
            .collect();
        let positive: f64 = bins[1..n / 2].iter().map(|b| b.norm_sqr()).sum::<f64>() / n as f64;
        let ends = (bins[0].norm_sqr() + bins[n / 2].norm_sqr()) / n as f64;
        let energy: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        assert!((energy - (4.0 * positive + ends)).abs() < 1e-9 * energy);
        // one-sided content: twice the energy of the positive-frequency half
        let real_energy: f64 = xs.iter().map(|x| x * x).sum();
        assert!((energy - 2.0 * real_energy + ends).abs() < 1e-9 * energy);
    }

    #[test]
    fn splice_and_jump_are_recovered() {
        let opts = SignalOptions::default();
        let s = spliced(100.0, 1500, 1500, 2.0 * PI * 1.0, 2.0 * PI * 1.4, PI / 2.0);
        let idx = transition_point(&s, &opts).unwrap();
        assert!(idx.abs_diff(1500) <= 3, "{idx}");
        let d = phase_change(&s, 1500, &opts).unwrap();
        assert!((d - PI / 2.0).abs() < 2f64.to_radians(), "{}", d.to_degrees());
    }

    #[test]
    fn pure_sinusoid_has_no_transition() {
        let opts = SignalOptions::default();
        let s = cosine(3000, 100.0, 2.0 * PI * 1.2);
        assert_eq!(transition_point(&s, &opts), Err(SlipError::NoTransition));
        let d = phase_change(&s, 1500, &opts).unwrap();
        assert!(d.abs() < 1f64.to_radians());
        let a = analyze_phase(&s, &opts).unwrap();
        assert_eq!(a.status, AnalysisStatus::NoTransition);
        let c = TimeSeries::new(100.0, vec![1.0; 500]).unwrap();
        assert_eq!(analyze_phase(&c, &opts).unwrap().status, AnalysisStatus::NoTransition);
    }

    #[test]
    fn too_few_cycles_is_a_domain_error() {
        let s = cosine(400, 100.0, 2.0 * PI * 0.5);
        assert!(matches!(phase_change(&s, 200, &SignalOptions::default()), Err(SlipError::Domain(_))));
    }

    #[test]
    fn sawtooth_touchdowns_are_located() {
        // fast swing for 40 samples, slow stance for 60, repeated
        let rate = 200.0;
        let mut v = Vec::new();
        let mut a = 0.0;
        let mut drops = Vec::new();
        for cycle in 0..6 {
            for i in 0..100 {
                if i == 40 {
                    drops.push(cycle * 100 + 40);
                }
                v.push(a);
                a += if i < 40 { 0.02 } else { -0.003 };
            }
        }
        let s = TimeSeries::new(rate, v).unwrap();
        let found = estimate_touchdown_angles(&s, &SignalOptions::default()).unwrap();
        let idx: Vec<usize> = found.iter().map(|t| t.index).collect();
        let expected: Vec<usize> = drops.iter().copied().filter(|d| *d >= 10 && *d + 10 < s.len()).collect();
        assert_eq!(idx.len(), expected.len(), "{idx:?}");
        for (f, e) in idx.iter().zip(&expected) {
            assert!(f.abs_diff(*e) <= 1, "{idx:?} vs {expected:?}");
        }
        assert_eq!(found[0].angle, s.values[found[0].index]);
    }
}
