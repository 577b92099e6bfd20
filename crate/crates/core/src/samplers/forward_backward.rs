//! Blocked forward-backward over the joint (z_t, w_t) chain.
//!
//! From z_{t−1} = i the chain either sticks (w_t = 1, z_t = i) with
//! probability κ_{i,t} or draws z_t ~ π̄_i (w_t = 0). The stick branch is
//! diagonal, so a backward step costs O(L²) rather than O((2L)²):
//!
//! B_t(i) = κ_{i,t+1} u(i) + (1 − κ_{i,t+1}) Σ_k π̄_{ik} u(k),
//! u(k) = E_{t+1}(k) B_{t+1}(k).
//!
//! Emissions and messages are rescaled every step and the log scale factors
//! accumulate into the marginal likelihood.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::sample_categorical;
use crate::recurrence::KappaSchedule;

/// Parameters of one forward-backward problem.
#[derive(Clone, Copy, Debug)]
pub struct FbProblem<'a> {
    /// Distribution of z at t = 0.
    pub initial: &'a [f64],
    /// Rows π̄_i used when the chain does not stick.
    pub rows: &'a [Vec<f64>],
    /// κ_{i,t}; only t ≥ 1 is read.
    pub kappa: &'a KappaSchedule,
    /// Row-major T×L emission log-likelihoods.
    pub loglik: &'a [f64],
}

impl FbProblem<'_> {
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn len(&self) -> usize {
        self.loglik.len() / self.initial.len().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.loglik.is_empty()
    }

    fn check(&self) -> Result<()> {
        let l = self.n_states();
        if l == 0 {
            return Err(Error::input("forward-backward needs at least one state"));
        }
        if self.loglik.len() % l != 0 || self.rows.len() != l || self.rows.iter().any(|r| r.len() != l) {
            return Err(Error::input("forward-backward dimensions disagree"));
        }
        let t_len = self.len();
        if self.kappa.n_states() < l && t_len > 0 || self.kappa.len() != t_len {
            return Err(Error::input("persistence schedule does not match the problem size"));
        }
        Ok(())
    }
}

/// Scaled emissions and backward messages.
#[derive(Clone, Debug)]
pub struct Messages {
    l: usize,
    emis: Vec<f64>,
    back: Vec<f64>,
    pub log_marginal: f64,
}

impl Messages {
    pub fn backward(&self, t: usize, k: usize) -> f64 {
        self.back[t * self.l + k]
    }
}

/// Backward pass. Fails with a numerical error if a message degenerates.
pub fn backward(p: &FbProblem<'_>) -> Result<Messages> {
    p.check()?;
    let l = p.n_states();
    let t_len = p.len();
    let mut emis = vec![0.0; t_len * l];
    let mut log_scale = 0.0;
    for t in 0..t_len {
        let row = &p.loglik[t * l..(t + 1) * l];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::Numerical(format!("no state can emit observation {t}")));
        }
        log_scale += m;
        for k in 0..l {
            emis[t * l + k] = (row[k] - m).exp();
        }
    }
    let mut back = vec![0.0; t_len * l];
    back[(t_len - 1) * l..].fill(1.0);
    let mut u = vec![0.0; l];
    for t in (0..t_len - 1).rev() {
        for k in 0..l {
            u[k] = emis[(t + 1) * l + k] * back[(t + 1) * l + k];
        }
        let mut total = 0.0;
        for i in 0..l {
            let kap = p.kappa.get(i, t + 1);
            let mixed: f64 = p.rows[i].iter().zip(&u).map(|(a, b)| a * b).sum();
            let b = kap * u[i] + (1.0 - kap) * mixed;
            back[t * l + i] = b;
            total += b;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical(format!("backward message vanished at t = {t}")));
        }
        for v in &mut back[t * l..(t + 1) * l] {
            *v /= total;
        }
        log_scale += total.ln();
    }
    let z0: f64 = (0..l).map(|k| p.initial[k] * emis[k] * back[k]).sum();
    if !(z0 > 0.0) || !z0.is_finite() {
        return Err(Error::Numerical("initial message vanished".into()));
    }
    Ok(Messages {
        l,
        emis,
        back,
        log_marginal: log_scale + z0.ln(),
    })
}

/// Draw (z, w) jointly from the posterior given precomputed messages.
pub fn sample_path<R: Rng + ?Sized>(p: &FbProblem<'_>, msg: &Messages, rng: &mut R) -> Result<(Vec<usize>, Vec<bool>)> {
    let l = msg.l;
    let t_len = p.len();
    let mut z = Vec::with_capacity(t_len);
    let mut w = Vec::with_capacity(t_len);
    let mut weights = vec![0.0; l + 1];
    for k in 0..l {
        weights[k] = p.initial[k] * msg.emis[k] * msg.back[k];
    }
    z.push(sample_categorical(&weights[..l], rng)?);
    w.push(false);
    for t in 1..t_len {
        let i = z[t - 1];
        let kap = p.kappa.get(i, t);
        let base = t * l;
        for k in 0..l {
            weights[k] = (1.0 - kap) * p.rows[i][k] * msg.emis[base + k] * msg.back[base + k];
        }
        weights[l] = kap * msg.emis[base + i] * msg.back[base + i];
        let c = sample_categorical(&weights, rng)?;
        if c == l {
            z.push(i);
            w.push(true);
        } else {
            z.push(c);
            w.push(false);
        }
    }
    Ok((z, w))
}

/// Posterior marginals p(z_t = k | y) from a scaled forward pass combined
/// with the backward messages, plus the forward-pass log marginal.
pub fn marginals(p: &FbProblem<'_>, msg: &Messages) -> (Vec<f64>, f64) {
    let l = msg.l;
    let t_len = p.len();
    let mut alpha = vec![0.0; t_len * l];
    let mut log_scale = 0.0;
    for t in 0..t_len {
        let m = p.loglik[t * l..(t + 1) * l].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        log_scale += m;
        for k in 0..l {
            let prior = if t == 0 {
                p.initial[k]
            } else {
                let prev = &alpha[(t - 1) * l..t * l];
                let mut s = prev[k] * p.kappa.get(k, t);
                for i in 0..l {
                    s += prev[i] * (1.0 - p.kappa.get(i, t)) * p.rows[i][k];
                }
                s
            };
            alpha[t * l + k] = prior * msg.emis[t * l + k];
        }
        let c: f64 = alpha[t * l..(t + 1) * l].iter().sum();
        for v in &mut alpha[t * l..(t + 1) * l] {
            *v /= c;
        }
        log_scale += c.ln();
    }
    let mut marg = vec![0.0; t_len * l];
    for t in 0..t_len {
        let s: f64 = (0..l).map(|k| alpha[t * l + k] * msg.back[t * l + k]).sum();
        for k in 0..l {
            marg[t * l + k] = alpha[t * l + k] * msg.back[t * l + k] / s;
        }
    }
    (marg, log_scale)
}

/// Index of a legal (z, w) path in base 2L, used to tabulate samples.
pub fn encode_path(z: &[usize], w: &[bool], l: usize) -> usize {
    z.iter()
        .zip(w)
        .rev()
        .fold(0, |acc, (&k, &s)| acc * 2 * l + 2 * k + usize::from(s))
}

/// Exhaustive enumeration of every legal (z, w) path with its log joint
/// density ln p(z, w, y). Exponential in T; for small verification
/// instances only.
pub fn enumerate_paths(p: &FbProblem<'_>) -> Result<Vec<(usize, f64)>> {
    p.check()?;
    let l = p.n_states();
    let t_len = p.len();
    let mut out = Vec::new();
    let mut z = vec![0usize; t_len];
    let mut w = vec![false; t_len];
    fn rec(
        p: &FbProblem<'_>,
        l: usize,
        t: usize,
        acc: f64,
        z: &mut Vec<usize>,
        w: &mut Vec<bool>,
        out: &mut Vec<(usize, f64)>,
    ) {
        if t == z.len() {
            out.push((encode_path(z, w, l), acc));
            return;
        }
        for k in 0..l {
            for stick in [false, true] {
                let lp = if t == 0 {
                    if stick {
                        continue;
                    }
                    p.initial[k].ln()
                } else {
                    let i = z[t - 1];
                    let kap = p.kappa.get(i, t);
                    if stick {
                        if k != i {
                            continue;
                        }
                        kap.ln()
                    } else {
                        (1.0 - kap).ln() + p.rows[i][k].ln()
                    }
                };
                z[t] = k;
                w[t] = stick;
                rec(p, l, t + 1, acc + lp + p.loglik[t * l + k], z, w, out);
            }
        }
    }
    rec(p, l, 0, 0.0, &mut z, &mut w, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{log_sum_exp, sample_dirichlet, RngStream};

    fn random_problem(rng: &mut RngStream, t_len: usize, l: usize) -> (Vec<f64>, Vec<Vec<f64>>, KappaSchedule, Vec<f64>) {
        let initial = sample_dirichlet(&vec![1.0; l], rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..l).map(|_| sample_dirichlet(&vec![1.0; l], rng).unwrap()).collect();
        let kap: Vec<f64> = (0..l * t_len).map(|_| 0.05 + 0.9 * crate::kernels::uniform_open(rng)).collect();
        let kappa = KappaSchedule::from_values(l, t_len, kap).unwrap();
        let loglik: Vec<f64> = (0..t_len * l).map(|_| 3.0 * crate::kernels::std_normal(rng)).collect();
        (initial, rows, kappa, loglik)
    }

    #[test]
    fn log_marginal_matches_enumeration_and_forward_pass() {
        let mut rng = RngStream::new(31, 0);
        for case in 0..20 {
            let t_len = 1 + case % 5;
            let l = 1 + case % 3;
            let (initial, rows, kappa, loglik) = random_problem(&mut rng, t_len, l);
            let p = FbProblem {
                initial: &initial,
                rows: &rows,
                kappa: &kappa,
                loglik: &loglik,
            };
            let msg = backward(&p).unwrap();
            let all: Vec<f64> = enumerate_paths(&p).unwrap().into_iter().map(|x| x.1).collect();
            let exact = log_sum_exp(&all);
            assert!((msg.log_marginal - exact).abs() < 1e-10, "{} vs {exact}", msg.log_marginal);
            let (_, fwd) = marginals(&p, &msg);
            assert!((fwd - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn no_stickiness_with_identical_rows_factorizes() {
        let mut rng = RngStream::new(32, 0);
        let l = 3;
        let t_len = 6;
        let row = sample_dirichlet(&[1.0, 2.0, 3.0], &mut rng).unwrap();
        let rows = vec![row.clone(); l];
        let kappa = KappaSchedule::zeros(l, t_len);
        let loglik: Vec<f64> = (0..t_len * l).map(|_| crate::kernels::std_normal(&mut rng)).collect();
        let p = FbProblem {
            initial: &row,
            rows: &rows,
            kappa: &kappa,
            loglik: &loglik,
        };
        let msg = backward(&p).unwrap();
        let (marg, _) = marginals(&p, &msg);
        for t in 0..t_len {
            let w: Vec<f64> = (0..l).map(|k| row[k] * loglik[t * l + k].exp()).collect();
            let s: f64 = w.iter().sum();
            for k in 0..l {
                assert!((marg[t * l + k] - w[k] / s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_state_path_is_constant() {
        let mut rng = RngStream::new(33, 0);
        let initial = [1.0];
        let rows = vec![vec![1.0]];
        let kappa = KappaSchedule::constant(&[0.4], 8);
        let loglik = vec![-1.0; 8];
        let p = FbProblem {
            initial: &initial,
            rows: &rows,
            kappa: &kappa,
            loglik: &loglik,
        };
        let msg = backward(&p).unwrap();
        assert!((msg.log_marginal + 8.0).abs() < 1e-12);
        let (z, w) = sample_path(&p, &msg, &mut rng).unwrap();
        assert!(z.iter().all(|&k| k == 0));
        assert!(!w[0]);
    }

    #[test]
    fn extreme_loglik_does_not_underflow() {
        let mut rng = RngStream::new(34, 0);
        let (initial, rows, kappa, mut loglik) = random_problem(&mut rng, 200, 3);
        loglik.iter_mut().for_each(|v| *v = *v * 300.0 - 5000.0);
        let p = FbProblem {
            initial: &initial,
            rows: &rows,
            kappa: &kappa,
            loglik: &loglik,
        };
        let msg = backward(&p).unwrap();
        assert!(msg.log_marginal.is_finite());
        let (z, w) = sample_path(&p, &msg, &mut rng).unwrap();
        for t in 1..z.len() {
            assert!(!w[t] || z[t] == z[t - 1]);
        }
    }
}
