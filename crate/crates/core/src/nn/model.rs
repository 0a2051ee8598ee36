use rand::Rng;

use super::mlp::{MlpSegment, SegmentCache};
use crate::env::{UeAction, NUM_UES};
use crate::error::{Error, Result};

pub const Q_WIDTH: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    /// Hidden layer widths, shared by all six segments.
    pub hidden: Vec<usize>,
    /// Width of the UCM and DCM activation vectors.
    pub cm_width: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { hidden: vec![16, 16], cm_width: 8 }
    }
}

/// Neural protocol model: per-UE uplink segments, per-UE downlink segments
/// hosted at the BS, and per-UE action heads producing Q-values for
/// Silence, Access, Discard.
#[derive(Clone, Debug, PartialEq)]
pub struct NpModel {
    pub b_max: usize,
    pub ucm: [MlpSegment; NUM_UES],
    pub dcm: [MlpSegment; NUM_UES],
    pub action: [MlpSegment; NUM_UES],
}

/// Everything one communication cycle computes.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleForward {
    pub u: [Vec<f64>; NUM_UES],
    pub d: [Vec<f64>; NUM_UES],
    pub q: [Vec<f64>; NUM_UES],
    pub actions: [UeAction; NUM_UES],
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Argmax with ties resolved towards the earlier action (S < A < D).
pub fn greedy_action(q: &[f64]) -> UeAction {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    UeAction::from_index(best).expect("action head has three outputs")
}

pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub fn huber_grad(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

impl NpModel {
    pub fn new<R: Rng + ?Sized>(b_max: usize, arch: &Architecture, rng: &mut R) -> Self {
        let levels = b_max + 1;
        let cm = arch.cm_width;
        let make = |input, output, rect, rng: &mut R| MlpSegment::new(&sizes(input, &arch.hidden, output), rect, rng);
        let ucm = [make(levels, cm, true, rng), make(levels, cm, true, rng)];
        let dcm = [make(NUM_UES * cm, cm, true, rng), make(NUM_UES * cm, cm, true, rng)];
        let action = [make(cm, Q_WIDTH, false, rng), make(cm, Q_WIDTH, false, rng)];
        Self { b_max, ucm, dcm, action }
    }

    pub fn zeros(b_max: usize, arch: &Architecture) -> Self {
        let cm = arch.cm_width;
        let make = |input, output, rect| MlpSegment::zeros(&sizes(input, &arch.hidden, output), rect);
        Self {
            b_max,
            ucm: [make(b_max + 1, cm, true), make(b_max + 1, cm, true)],
            dcm: [make(NUM_UES * cm, cm, true), make(NUM_UES * cm, cm, true)],
            action: [make(cm, Q_WIDTH, false), make(cm, Q_WIDTH, false)],
        }
    }

    /// Zero-valued model of identical shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let z = |s: &MlpSegment| MlpSegment::zeros(&s.layer_sizes(), s.rectify_output());
        Self {
            b_max: self.b_max,
            ucm: [z(&self.ucm[0]), z(&self.ucm[1])],
            dcm: [z(&self.dcm[0]), z(&self.dcm[1])],
            action: [z(&self.action[0]), z(&self.action[1])],
        }
    }

    pub fn cm_width(&self) -> usize {
        self.ucm[0].output_width()
    }

    pub fn segments(&self) -> impl Iterator<Item = &MlpSegment> {
        self.ucm.iter().chain(self.dcm.iter()).chain(self.action.iter())
    }

    pub fn segments_mut(&mut self) -> impl Iterator<Item = &mut MlpSegment> {
        self.ucm.iter_mut().chain(self.dcm.iter_mut()).chain(self.action.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.segments().map(MlpSegment::param_count).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.segments().flat_map(|s| s.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.segments_mut().flat_map(|s| s.params_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.segments().all(MlpSegment::is_finite)
    }

    /// Estimated FLOPs of one full cycle: two per multiply-accumulate.
    pub fn inference_flops(&self) -> u64 {
        2 * self.segments().map(|s| s.macs() as u64).sum::<u64>()
    }

    fn check_ue(ue: usize) -> Result<()> {
        if ue >= NUM_UES {
            return Err(Error::UeOutOfRange(ue));
        }
        Ok(())
    }

    pub fn one_hot(&self, level: usize) -> Result<Vec<f64>> {
        if level > self.b_max {
            return Err(Error::BufferOutOfRange { level, b_max: self.b_max });
        }
        let mut x = vec![0.0; self.b_max + 1];
        x[level] = 1.0;
        Ok(x)
    }

    pub fn forward_ucm(&self, ue: usize, level: usize) -> Result<Vec<f64>> {
        Self::check_ue(ue)?;
        self.ucm[ue].forward(&self.one_hot(level)?)
    }

    pub fn forward_dcm(&self, ue: usize, u1: &[f64], u2: &[f64]) -> Result<Vec<f64>> {
        Self::check_ue(ue)?;
        let w = self.cm_width();
        for u in [u1, u2] {
            if u.len() != w {
                return Err(Error::WidthMismatch { expected: w, got: u.len() });
            }
        }
        let cat: Vec<f64> = u1.iter().chain(u2).copied().collect();
        self.dcm[ue].forward(&cat)
    }

    pub fn forward_action(&self, ue: usize, d: &[f64]) -> Result<(Vec<f64>, UeAction)> {
        Self::check_ue(ue)?;
        let q = self.action[ue].forward(d)?;
        let a = greedy_action(&q);
        Ok((q, a))
    }

    pub fn full_cycle_forward(&self, b: [usize; NUM_UES]) -> Result<CycleForward> {
        let u = [self.forward_ucm(0, b[0])?, self.forward_ucm(1, b[1])?];
        let d = [self.forward_dcm(0, &u[0], &u[1])?, self.forward_dcm(1, &u[0], &u[1])?];
        let (q0, a0) = self.forward_action(0, &d[0])?;
        let (q1, a1) = self.forward_action(1, &d[1])?;
        Ok(CycleForward { u, d, q: [q0, q1], actions: [a0, a1] })
    }

    /// Q-values of both action heads.
    pub fn q_values(&self, b: [usize; NUM_UES]) -> Result<[Vec<f64>; NUM_UES]> {
        Ok(self.full_cycle_forward(b)?.q)
    }

    /// Joint TD loss `sum_i huber(Q_i(b, a_i) - y_i)` at one sample, scaled by
    /// `scale`; its gradient is accumulated into `grads`. Returns the unscaled loss.
    pub fn accumulate_td_gradient(
        &self,
        b: [usize; NUM_UES],
        actions: [UeAction; NUM_UES],
        targets: [f64; NUM_UES],
        delta: f64,
        scale: f64,
        grads: &mut NpModel,
    ) -> Result<f64> {
        let cu: Vec<SegmentCache> =
            (0..NUM_UES).map(|i| self.ucm[i].forward_cached(&self.one_hot(b[i])?)).collect::<Result<_>>()?;
        let cat: Vec<f64> = cu.iter().flat_map(|c| c.output().iter().copied()).collect();
        let cd: Vec<SegmentCache> = (0..NUM_UES).map(|i| self.dcm[i].forward_cached(&cat)).collect::<Result<_>>()?;
        let ca: Vec<SegmentCache> =
            (0..NUM_UES).map(|i| self.action[i].forward_cached(cd[i].output())).collect::<Result<_>>()?;

        let w = self.cm_width();
        let mut loss = 0.0;
        let mut grad_cat = vec![0.0; cat.len()];
        for i in 0..NUM_UES {
            let residual = ca[i].output()[actions[i].index()] - targets[i];
            loss += huber(residual, delta);
            let mut gq = vec![0.0; Q_WIDTH];
            gq[actions[i].index()] = scale * huber_grad(residual, delta);
            let gd = self.action[i].backward(&ca[i], &gq, &mut grads.action[i]);
            let gc = self.dcm[i].backward(&cd[i], &gd, &mut grads.dcm[i]);
            grad_cat.iter_mut().zip(&gc).for_each(|(a, g)| *a += g);
        }
        for i in 0..NUM_UES {
            self.ucm[i].backward(&cu[i], &grad_cat[i * w..(i + 1) * w], &mut grads.ucm[i]);
        }
        Ok(loss)
    }

    /// Same gradient as calling [`Self::accumulate_td_gradient`] on every
    /// sample, computed with one forward/backward pass per distinct state and
    /// one uplink backward per distinct buffer level. Returns the summed loss.
    pub fn accumulate_batch_gradient(
        &self,
        samples: &[TdSample],
        delta: f64,
        scale: f64,
        grads: &mut NpModel,
    ) -> Result<f64> {
        let levels = self.b_max + 1;
        let w = self.cm_width();
        let cu: Vec<Vec<SegmentCache>> = (0..NUM_UES)
            .map(|i| (0..levels).map(|l| self.ucm[i].forward_cached(&self.one_hot(l)?)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let mut grad_u = vec![vec![vec![0.0; w]; levels]; NUM_UES];
        let mut used = vec![vec![false; levels]; NUM_UES];
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by_key(|&k| samples[k].state);
        let mut loss = 0.0;
        let mut start = 0;
        while start < order.len() {
            let b = samples[order[start]].state;
            let mut end = start;
            while end < order.len() && samples[order[end]].state == b {
                end += 1;
            }
            if b.iter().any(|&l| l >= levels) {
                return Err(Error::BufferOutOfRange { level: b[0].max(b[1]), b_max: self.b_max });
            }
            let cat: Vec<f64> = (0..NUM_UES).flat_map(|i| cu[i][b[i]].output().iter().copied()).collect();
            for i in 0..NUM_UES {
                let cd = self.dcm[i].forward_cached(&cat)?;
                let ca = self.action[i].forward_cached(cd.output())?;
                let mut gq = vec![0.0; Q_WIDTH];
                for &k in &order[start..end] {
                    let a = samples[k].actions[i].index();
                    let residual = ca.output()[a] - samples[k].targets[i];
                    loss += huber(residual, delta);
                    gq[a] += scale * huber_grad(residual, delta);
                }
                let gd = self.action[i].backward(&ca, &gq, &mut grads.action[i]);
                let gc = self.dcm[i].backward(&cd, &gd, &mut grads.dcm[i]);
                for j in 0..NUM_UES {
                    used[j][b[j]] = true;
                    grad_u[j][b[j]].iter_mut().zip(&gc[j * w..(j + 1) * w]).for_each(|(a, g)| *a += g);
                }
            }
            start = end;
        }
        for i in 0..NUM_UES {
            for l in 0..levels {
                if used[i][l] {
                    self.ucm[i].backward(&cu[i][l], &grad_u[i][l], &mut grads.ucm[i]);
                }
            }
        }
        Ok(loss)
    }
}

/// One TD regression sample: state, taken actions and per-UE targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdSample {
    pub state: [usize; NUM_UES],
    pub actions: [UeAction; NUM_UES],
    pub targets: [f64; NUM_UES],
}
