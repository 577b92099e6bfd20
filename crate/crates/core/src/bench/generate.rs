use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabeledSequence;
use crate::data::ObservationSequence;
use crate::emissions::{EmissionFamily, Theta};
use crate::error::{Error, Result};
use crate::kernels::{sample_categorical, std_normal};

/// Oval track: two straights joined by two semicircular turns, one
/// ground-truth state per segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NascarConfig {
    pub laps: usize,
    /// Speeds on (bottom straight, right turn, top straight, left turn).
    pub speeds: [f64; 4],
    pub noise_sd: f64,
    pub straight: f64,
    pub radius: f64,
    pub dt: f64,
}

impl Default for NascarConfig {
    fn default() -> Self {
        Self {
            laps: 20,
            speeds: [1.0, 1.5, 0.75, 1.25],
            noise_sd: 0.05,
            straight: 20.0,
            radius: 5.0,
            dt: 0.1,
        }
    }
}

impl NascarConfig {
    fn validate(&self) -> Result<()> {
        if self.speeds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::input("speeds must be positive"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::input("noise_sd must be nonnegative"));
        }
        if !(self.straight > 0.0 && self.radius > 0.0 && self.dt > 0.0) || self.laps == 0 {
            return Err(Error::input("degenerate track geometry"));
        }
        Ok(())
    }

    /// Arc length of each segment.
    pub fn segment_lengths(&self) -> [f64; 4] {
        let turn = PI * self.radius;
        [self.straight, turn, self.straight, turn]
    }

    /// Timesteps spent in each segment per lap: arc length / (speed·dt),
    /// rounded to the nearest integer so that every lap is identical.
    pub fn segment_steps(&self) -> [usize; 4] {
        let len = self.segment_lengths();
        std::array::from_fn(|i| ((len[i] / (self.speeds[i] * self.dt)).round() as usize).max(1))
    }

    /// Position after arc fraction `u ∈ [0, 1]` of segment `seg`.
    fn position(&self, seg: usize, u: f64) -> [f64; 2] {
        let (l, r) = (self.straight, self.radius);
        match seg {
            0 => [u * l, 0.0],
            1 => {
                let a = -PI / 2.0 + u * PI;
                [l + r * a.cos(), r + r * a.sin()]
            }
            2 => [l - u * l, 2.0 * r],
            _ => {
                let a = PI / 2.0 + u * PI;
                [r * a.cos(), r + r * a.sin()]
            }
        }
    }
}

/// Noisy 2-d positions of a car lapping the oval with a fixed speed per
/// segment. Dwell times are set by position, not by a geometric clock.
pub fn generate_nascar<R: Rng + ?Sized>(cfg: &NascarConfig, rng: &mut R) -> Result<LabeledSequence> {
    cfg.validate()?;
    let steps = cfg.segment_steps();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..cfg.laps {
        for (seg, &n) in steps.iter().enumerate() {
            for i in 0..n {
                let p = cfg.position(seg, i as f64 / n as f64);
                for v in p {
                    values.push(v + cfg.noise_sd * std_normal(rng));
                }
                labels.push(seg);
            }
        }
    }
    Ok(LabeledSequence {
        observations: ObservationSequence::new(2, values)?,
        labels,
        meta: format!(
            "nascar laps={} speeds={:?} noise_sd={} straight={} radius={} dt={}",
            cfg.laps, cfg.speeds, cfg.noise_sd, cfg.straight, cfg.radius, cfg.dt
        ),
    })
}

/// Finite HMM with conjugate-family emissions y_t ~ N(A_k x_t, Σ_k).
#[derive(Clone, Debug)]
pub struct HmmSpec {
    pub transition: Vec<Vec<f64>>,
    /// Distribution of z₀; uniform when absent.
    pub initial: Option<Vec<f64>>,
    pub family: EmissionFamily,
    pub thetas: Vec<Theta>,
    /// Observation preceding y₀ for autoregressive families.
    pub y_init: Vec<f64>,
}

impl HmmSpec {
    /// Scalar-mean Gaussian HMM with shared noise and a common self-transition
    /// probability.
    pub fn gaussian(means: &[Vec<f64>], sd: f64, stay: f64) -> Result<Self> {
        let n = means.len();
        if n == 0 {
            return Err(Error::input("need at least one state"));
        }
        let d = means[0].len();
        let transition = (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| match (n, j == k) {
                        (1, _) => 1.0,
                        (_, true) => stay,
                        _ => (1.0 - stay) / (n - 1) as f64,
                    })
                    .collect()
            })
            .collect();
        let thetas = means
            .iter()
            .map(|m| {
                if m.len() != d {
                    return Err(Error::input("state means differ in dimension"));
                }
                let a = nalgebra::DMatrix::from_column_slice(d, 1, m);
                Theta::new(a, nalgebra::DMatrix::identity(d, d) * (sd * sd))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            transition,
            initial: None,
            family: EmissionFamily::Gaussian,
            thetas,
            y_init: vec![0.0; d],
        })
    }

    fn validate(&self) -> Result<usize> {
        let n = self.transition.len();
        if n == 0 || self.thetas.len() != n {
            return Err(Error::input("transition matrix and emission parameters disagree on the state count"));
        }
        let check = |row: &[f64], what: &str| -> Result<()> {
            if row.len() != n
                || row.iter().any(|p| !(*p >= 0.0 && p.is_finite()))
                || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(Error::input(format!("{what} is not a probability vector over {n} states")));
            }
            Ok(())
        };
        for (j, row) in self.transition.iter().enumerate() {
            check(row, &format!("transition row {j}"))?;
        }
        if let Some(init) = &self.initial {
            check(init, "initial distribution")?;
        }
        let d = self.y_init.len();
        let p = self.family.regressor_dim(d);
        for th in &self.thetas {
            if th.a().nrows() != d || th.a().ncols() != p {
                return Err(Error::input("emission coefficients have the wrong shape"));
            }
        }
        Ok(n)
    }
}

pub fn generate_hmm<R: Rng + ?Sized>(spec: &HmmSpec, t_len: usize, rng: &mut R) -> Result<LabeledSequence> {
    let n = spec.validate()?;
    let d = spec.y_init.len();
    let uniform = vec![1.0 / n as f64; n];
    let init = spec.initial.as_deref().unwrap_or(&uniform);
    let mut labels: Vec<usize> = Vec::with_capacity(t_len);
    let mut values = Vec::with_capacity(t_len * d);
    let mut prev = spec.y_init.clone();
    let mut x = Vec::with_capacity(d + 1);
    for t in 0..t_len {
        let z = if t == 0 {
            sample_categorical(init, rng)?
        } else {
            sample_categorical(&spec.transition[labels[t - 1]], rng)?
        };
        x.clear();
        match spec.family {
            EmissionFamily::Gaussian => x.push(1.0),
            EmissionFamily::Ar1 => x.extend_from_slice(&prev),
            EmissionFamily::Ar1Affine => {
                x.extend_from_slice(&prev);
                x.push(1.0);
            }
        }
        let y = spec.thetas[z].sample(&x, rng);
        values.extend_from_slice(&y);
        prev = y;
        labels.push(z);
    }
    Ok(LabeledSequence {
        observations: ObservationSequence::new(d, values)?,
        labels,
        meta: format!("hmm states={n} family={:?} T={t_len}", spec.family),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RngStream;

    #[test]
    fn noiseless_lap_closes() {
        let cfg = NascarConfig {
            laps: 1,
            noise_sd: 0.0,
            ..Default::default()
        };
        let s = generate_nascar(&cfg, &mut RngStream::new(0, 0)).unwrap();
        let first = s.observations.row(0);
        let last = s.observations.row(s.len() - 1);
        // One more step along the left turn returns to the start.
        let n = cfg.segment_steps()[3] as f64;
        let a = PI / 2.0 + (n - 1.0) / n * PI;
        let step = PI / n;
        let next = [cfg.radius * (a + step).cos(), cfg.radius + cfg.radius * (a + step).sin()];
        assert!((last[0] - cfg.radius * a.cos()).abs() < 1e-12);
        assert!((next[0] - first[0]).abs() < 1e-9 && (next[1] - first[1]).abs() < 1e-9);
    }

    #[test]
    fn identity_matrix_gives_constant_labels() {
        let mut spec = HmmSpec::gaussian(&[vec![0.0], vec![5.0]], 1.0, 1.0).unwrap();
        spec.initial = Some(vec![0.0, 1.0]);
        let s = generate_hmm(&spec, 200, &mut RngStream::new(1, 0)).unwrap();
        assert!(s.labels.iter().all(|&z| z == 1));
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let mut spec = HmmSpec::gaussian(&[vec![0.0], vec![5.0]], 1.0, 0.9).unwrap();
        spec.transition[0] = vec![0.5, 0.6];
        assert!(generate_hmm(&spec, 10, &mut RngStream::new(1, 0)).is_err());
    }
}
