use std::ops::Range;

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{DwlstmConfig, TrainingWindow};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tensor {
    DynWeight,
    DynBias,
    StaticWeight,
    StaticBias,
    GateWeight,
    GateBias,
    HeadWeight,
    HeadBias,
}

impl Tensor {
    pub const ALL: [Tensor; 8] = [
        Tensor::DynWeight,
        Tensor::DynBias,
        Tensor::StaticWeight,
        Tensor::StaticBias,
        Tensor::GateWeight,
        Tensor::GateBias,
        Tensor::HeadWeight,
        Tensor::HeadBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::DynWeight => "dyn_weight",
            Tensor::DynBias => "dyn_bias",
            Tensor::StaticWeight => "static_weight",
            Tensor::StaticBias => "static_bias",
            Tensor::GateWeight => "gate_weight",
            Tensor::GateBias => "gate_bias",
            Tensor::HeadWeight => "head_weight",
            Tensor::HeadBias => "head_bias",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Weights are regularized, biases are not.
    pub fn is_weight(self) -> bool {
        matches!(
            self,
            Tensor::DynWeight | Tensor::StaticWeight | Tensor::GateWeight | Tensor::HeadWeight
        )
    }
}

/// Tensor shapes of one network, all packed into a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub input: usize,
    pub statics: usize,
    pub dyn_proj: usize,
    pub static_proj: usize,
    pub hidden: usize,
}

impl Layout {
    pub fn from_config(c: &DwlstmConfig) -> Self {
        Self {
            input: c.input_size(),
            statics: c.static_size,
            dyn_proj: c.dyn_proj,
            static_proj: c.static_proj,
            hidden: c.hidden,
        }
    }

    /// (rows, cols); vectors have one column.
    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        let h = self.hidden;
        match t {
            Tensor::DynWeight => (self.dyn_proj, self.input),
            Tensor::DynBias => (self.dyn_proj, 1),
            Tensor::StaticWeight => (self.static_proj, self.statics),
            Tensor::StaticBias => (self.static_proj, 1),
            // gate rows ordered input, forget, candidate, output
            Tensor::GateWeight => (4 * h, self.dyn_proj + h),
            Tensor::GateBias => (4 * h, 1),
            Tensor::HeadWeight => (1, h + self.static_proj),
            Tensor::HeadBias => (1, 1),
        }
    }

    pub fn size(&self, t: Tensor) -> usize {
        let (r, c) = self.shape(t);
        r * c
    }

    pub fn range(&self, t: Tensor) -> Range<usize> {
        let start: usize = Tensor::ALL.iter().take_while(|&&x| x != t).map(|&x| self.size(x)).sum();
        start..start + self.size(t)
    }

    pub fn len(&self) -> usize {
        Tensor::ALL.iter().map(|&t| self.size(t)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mask over the flat vector, true on regularized entries.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for t in Tensor::ALL.into_iter().filter(|t| t.is_weight()) {
            mask[self.range(t)].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            data: vec![T::zero(); layout.len()],
        }
    }

    pub fn tensor(&self, t: Tensor) -> &[T] {
        &self.data[self.layout.range(t)]
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [T] {
        let r = self.layout.range(t);
        &mut self.data[r]
    }

    pub fn view(&self, t: Tensor) -> ArrayView2<'_, T> {
        ArrayView2::from_shape(self.layout.shape(t), self.tensor(t)).expect("layout shape")
    }

    /// Σ w² over weight tensors.
    pub fn weight_sq_norm(&self) -> T {
        Tensor::ALL
            .into_iter()
            .filter(|t| t.is_weight())
            .flat_map(|t| self.tensor(t).iter())
            .map(|&w| w * w)
            .sum()
    }

    pub fn weights(&self) -> Vec<T> {
        Tensor::ALL
            .into_iter()
            .filter(|t| t.is_weight())
            .flat_map(|t| self.tensor(t).iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

// out = W·x + b, W row-major rows×x.len()
fn affine<T: Scalar>(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for (a, v) in row.iter().zip(x) {
            acc += *a * *v;
        }
        *o = acc;
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Affine map W·v + b.
pub fn project<T: Scalar>(v: &[T], w: ArrayView2<T>, b: &[T]) -> Result<Vec<T>> {
    if w.ncols() != v.len() || w.nrows() != b.len() {
        return Err(Error::LengthMismatch {
            left: w.ncols(),
            right: v.len(),
        });
    }
    Ok(w.dot(&ndarray::ArrayView1::from(v))
        .iter()
        .zip(b)
        .map(|(&a, &c)| a + c)
        .collect())
}

/// One LSTM cell update over `[x ⊕ h]`, gate rows ordered i, f, g, o.
pub fn lstm_step<T: Scalar>(x: &[T], h: &[T], c: &[T], w: ArrayView2<T>, b: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let n = h.len();
    if c.len() != n || w.nrows() != 4 * n || b.len() != 4 * n || w.ncols() != x.len() + n {
        return Err(Error::LengthMismatch {
            left: w.ncols(),
            right: x.len() + n,
        });
    }
    let z: Vec<T> = x.iter().chain(h).copied().collect();
    let w = w.as_standard_layout();
    let cache = cell(w.as_slice().unwrap(), b, &z, c);
    Ok((cache.h, cache.c))
}

#[derive(Debug, Clone)]
struct Cell<T> {
    z: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates i, f, g, o.
    gates: Vec<T>,
    c: Vec<T>,
    tc: Vec<T>,
    h: Vec<T>,
}

fn cell<T: Scalar>(w: &[T], b: &[T], z: &[T], c_prev: &[T]) -> Cell<T> {
    let n = c_prev.len();
    let mut gates = vec![T::zero(); 4 * n];
    affine(w, b, z, &mut gates);
    for (k, g) in gates.iter_mut().enumerate() {
        *g = if k / n == 2 { g.tanh() } else { sigmoid(*g) };
    }
    let mut c = vec![T::zero(); n];
    let mut tc = vec![T::zero(); n];
    let mut h = vec![T::zero(); n];
    for j in 0..n {
        c[j] = gates[n + j] * c_prev[j] + gates[j] * gates[2 * n + j];
        tc[j] = c[j].tanh();
        h[j] = gates[3 * n + j] * tc[j];
    }
    Cell {
        z: z.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c,
        tc,
        h,
    }
}

struct Step<T> {
    u: Vec<T>,
    cell: Cell<T>,
}

/// Teacher-forced pass over the input window.
pub struct ForwardPass<T> {
    /// Prediction for the day after each input day.
    pub predictions: Vec<T>,
    pub h: Vec<T>,
    pub c: Vec<T>,
    /// Projected static vector.
    pub statics: Vec<T>,
    steps: Vec<Step<T>>,
}

fn check_window<T: Scalar>(p: &Params<T>, w: &TrainingWindow<T>, history: bool) -> Result<()> {
    let l = p.layout;
    let w_in = w.history.len();
    let dyn_size = l.input - usize::from(history);
    if w_in == 0 || w.dynamic.len() != w_in * dyn_size {
        return Err(Error::LengthMismatch {
            left: w.dynamic.len(),
            right: w_in * dyn_size,
        });
    }
    if w.statics.len() != l.statics {
        return Err(Error::LengthMismatch {
            left: w.statics.len(),
            right: l.statics,
        });
    }
    Ok(())
}

fn head<T: Scalar>(p: &Params<T>, h: &[T], s: &[T]) -> T {
    let wh = p.tensor(Tensor::HeadWeight);
    let mut acc = p.tensor(Tensor::HeadBias)[0];
    for (a, v) in wh.iter().zip(h.iter().chain(s)) {
        acc += *a * *v;
    }
    acc
}

struct Net<'a, T> {
    p: &'a Params<T>,
    history: bool,
}

impl<T: Scalar> Net<'_, T> {
    fn input(&self, dyn_row: &[T], target: T) -> Vec<T> {
        let mut u = dyn_row.to_vec();
        if self.history {
            u.push(target);
        }
        u
    }

    fn step(&self, u: Vec<T>, h: &[T], c: &[T]) -> Step<T> {
        let l = self.p.layout;
        let mut z = vec![T::zero(); l.dyn_proj + l.hidden];
        affine(
            self.p.tensor(Tensor::DynWeight),
            self.p.tensor(Tensor::DynBias),
            &u,
            &mut z[..l.dyn_proj],
        );
        z[l.dyn_proj..].copy_from_slice(h);
        let cell = cell(
            self.p.tensor(Tensor::GateWeight),
            self.p.tensor(Tensor::GateBias),
            &z,
            c,
        );
        Step { u, cell }
    }

    fn statics(&self, x: &[T]) -> Vec<T> {
        let mut s = vec![T::zero(); self.p.layout.static_proj];
        affine(
            self.p.tensor(Tensor::StaticWeight),
            self.p.tensor(Tensor::StaticBias),
            x,
            &mut s,
        );
        s
    }
}

fn fault<T: Scalar>(step: usize, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericFault {
            step,
            detail: "non-finite activation".into(),
        })
    }
}

/// Runs the input window; `history` says whether the target is part of each input.
pub fn forward<T: Scalar>(p: &Params<T>, w: &TrainingWindow<T>, history: bool) -> Result<ForwardPass<T>> {
    check_window(p, w, history)?;
    let net = Net { p, history };
    let n = p.layout.hidden;
    let statics = net.statics(&w.statics);
    let (mut h, mut c) = (vec![T::zero(); n], vec![T::zero(); n]);
    let mut predictions = Vec::with_capacity(w.w_in());
    let mut steps = Vec::with_capacity(w.w_in());
    for t in 0..w.w_in() {
        let st = net.step(net.input(w.dynamic_row(t), w.history[t]), &h, &c);
        h.clone_from(&st.cell.h);
        c.clone_from(&st.cell.c);
        let y = head(p, &h, &statics);
        fault(t, y)?;
        predictions.push(y);
        steps.push(st);
    }
    Ok(ForwardPass {
        predictions,
        h,
        c,
        statics,
        steps,
    })
}

/// Autoregressive forecast of `w_out` days. Each prediction is fed back as
/// the next day's target input (raised to `floor` if given); exogenous
/// features stay at their last observed values.
pub fn rollout<T: Scalar>(
    p: &Params<T>,
    w: &TrainingWindow<T>,
    w_out: usize,
    history: bool,
    floor: Option<T>,
) -> Result<Vec<T>> {
    if w_out == 0 {
        return Ok(Vec::new());
    }
    let fp = forward(p, w, history)?;
    let net = Net { p, history };
    let last_dyn = w.dynamic_row(w.w_in() - 1);
    let mut out = Vec::with_capacity(w_out);
    let mut y = *fp.predictions.last().unwrap();
    out.push(y);
    let (mut h, mut c) = (fp.h, fp.c);
    for k in 1..w_out {
        let fed = floor.map_or(y, |f| y.max(f));
        let st = net.step(net.input(last_dyn, fed), &h, &c);
        h = st.cell.h;
        c = st.cell.c;
        y = head(p, &h, &fp.statics);
        fault(w.w_in() + k - 1, y)?;
        out.push(y);
    }
    Ok(out)
}

/// Target of each teacher-forced step: the observed value of the next day.
pub fn step_targets<T: Scalar>(w: &TrainingWindow<T>) -> Vec<T> {
    w.history[1..].iter().chain(w.targets.first()).copied().collect()
}

fn point_weight<T: Scalar>(target: T, threshold: T, boost: T) -> T {
    if target > threshold {
        T::one() + boost
    } else {
        T::one()
    }
}

/// Σwₜ(predₜ−targetₜ)²/Σwₜ + λ‖weights‖², wₜ = 1 + α·[targetₜ > θ].
pub fn weighted_mse<T: Scalar>(pred: &[T], target: &[T], threshold: T, boost: T, l2: T, weights: &[T]) -> Result<T> {
    crate::error::check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let (mut num, mut den) = (T::zero(), T::zero());
    for (&p, &y) in pred.iter().zip(target) {
        let w = point_weight(y, threshold, boost);
        num += w * (p - y) * (p - y);
        den += w;
    }
    Ok(num / den + l2 * weights.iter().map(|&w| w * w).sum::<T>())
}

// Accumulates the gradient of Σwₜ(pₜ−yₜ)² for one window into `grad`.
// Returns (Σwₜ(pₜ−yₜ)², Σwₜ).
fn window_grad<T: Scalar>(
    p: &Params<T>,
    w: &TrainingWindow<T>,
    history: bool,
    threshold: T,
    boost: T,
    grad: &mut [T],
) -> Result<(T, T)> {
    let l = p.layout;
    let n = l.hidden;
    let dp = l.dyn_proj;
    let fp = forward(p, w, history)?;
    let targets = step_targets(w);
    if targets.len() != fp.predictions.len() {
        return Err(Error::TooShort {
            needed: 1,
            got: w.targets.len(),
        });
    }
    let (mut sse, mut wsum) = (T::zero(), T::zero());
    let mut dpred = Vec::with_capacity(targets.len());
    for (&y, &yhat) in targets.iter().zip(&fp.predictions) {
        let wt = point_weight(y, threshold, boost);
        sse += wt * (yhat - y) * (yhat - y);
        wsum += wt;
        dpred.push(T::of(2.0) * wt * (yhat - y));
    }

    let r_head = l.range(Tensor::HeadWeight);
    let r_hb = l.range(Tensor::HeadBias);
    let r_gw = l.range(Tensor::GateWeight);
    let r_gb = l.range(Tensor::GateBias);
    let r_dw = l.range(Tensor::DynWeight);
    let r_db = l.range(Tensor::DynBias);
    let wh = p.tensor(Tensor::HeadWeight);
    let wg = p.tensor(Tensor::GateWeight);
    let zc = dp + n;

    let mut ds = vec![T::zero(); l.static_proj];
    let mut dh_next = vec![T::zero(); n];
    let mut dc_next = vec![T::zero(); n];
    let mut da = vec![T::zero(); 4 * n];
    let mut dz = vec![T::zero(); zc];
    for t in (0..fp.steps.len()).rev() {
        let st = &fp.steps[t];
        let cl = &st.cell;
        let g = dpred[t];
        // head
        for (k, v) in cl.h.iter().chain(&fp.statics).enumerate() {
            grad[r_head.start + k] += g * *v;
        }
        grad[r_hb.start] += g;
        for k in 0..l.static_proj {
            ds[k] += g * wh[n + k];
        }
        // cell
        for j in 0..n {
            let (i, f, gg, o) = (cl.gates[j], cl.gates[n + j], cl.gates[2 * n + j], cl.gates[3 * n + j]);
            let dh = g * wh[j] + dh_next[j];
            let d_o = dh * cl.tc[j];
            let dc = dc_next[j] + dh * o * (T::one() - cl.tc[j] * cl.tc[j]);
            da[j] = dc * gg * i * (T::one() - i);
            da[n + j] = dc * cl.c_prev[j] * f * (T::one() - f);
            da[2 * n + j] = dc * i * (T::one() - gg * gg);
            da[3 * n + j] = d_o * o * (T::one() - o);
            dc_next[j] = dc * f;
        }
        dz.iter_mut().for_each(|v| *v = T::zero());
        for (r, &a) in da.iter().enumerate() {
            grad[r_gb.start + r] += a;
            let row = &wg[r * zc..(r + 1) * zc];
            let grow = &mut grad[r_gw.start + r * zc..r_gw.start + (r + 1) * zc];
            for k in 0..zc {
                grow[k] += a * cl.z[k];
                dz[k] += a * row[k];
            }
        }
        dh_next.copy_from_slice(&dz[dp..]);
        // dynamic projection
        let ni = st.u.len();
        for r in 0..dp {
            let dx = dz[r];
            grad[r_db.start + r] += dx;
            let grow = &mut grad[r_dw.start + r * ni..r_dw.start + (r + 1) * ni];
            for k in 0..ni {
                grow[k] += dx * st.u[k];
            }
        }
    }
    let r_sw = l.range(Tensor::StaticWeight);
    let r_sb = l.range(Tensor::StaticBias);
    let ns = l.statics;
    for r in 0..l.static_proj {
        grad[r_sb.start + r] += ds[r];
        for k in 0..ns {
            grad[r_sw.start + r * ns + k] += ds[r] * w.statics[k];
        }
    }
    Ok((sse, wsum))
}

/// Pooled weighted MSE over the per-step predictions of all windows, plus
/// the L2 term, and its exact gradient. Windows are processed in parallel
/// and reduced in input order.
pub fn loss_and_grad<T: Scalar>(
    p: &Params<T>,
    windows: &[&TrainingWindow<T>],
    history: bool,
    threshold: T,
    boost: T,
    l2: T,
) -> Result<(T, Vec<T>)> {
    if windows.is_empty() {
        return Err(Error::EmptySplit("no windows for gradient".into()));
    }
    let parts: Vec<(T, T, Vec<T>)> = windows
        .par_iter()
        .map(|w| {
            let mut g = vec![T::zero(); p.data.len()];
            let (sse, ws) = window_grad(p, w, history, threshold, boost, &mut g)?;
            Ok((sse, ws, g))
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![T::zero(); p.data.len()];
    let (mut sse, mut wsum) = (T::zero(), T::zero());
    for (s, ws, g) in parts {
        sse += s;
        wsum += ws;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += *b;
        }
    }
    for v in grad.iter_mut() {
        *v /= wsum;
    }
    let two_l2 = T::of(2.0) * l2;
    for (k, m) in p.layout.weight_mask().into_iter().enumerate() {
        if m {
            grad[k] += two_l2 * p.data[k];
        }
    }
    Ok((sse / wsum + l2 * p.weight_sq_norm(), grad))
}

/// Gradient for a single window.
pub fn backward<T: Scalar>(
    p: &Params<T>,
    w: &TrainingWindow<T>,
    history: bool,
    threshold: T,
    boost: T,
    l2: T,
) -> Result<(T, Vec<T>)> {
    loss_and_grad(p, &[w], history, threshold, boost, l2)
}

/// Loss of [`loss_and_grad`] without the gradient.
pub fn loss<T: Scalar>(
    p: &Params<T>,
    windows: &[&TrainingWindow<T>],
    history: bool,
    threshold: T,
    boost: T,
    l2: T,
) -> Result<T> {
    if windows.is_empty() {
        return Err(Error::EmptySplit("no windows for loss".into()));
    }
    let parts: Vec<(T, T)> = windows
        .par_iter()
        .map(|w| {
            let fp = forward(p, w, history)?;
            let (mut sse, mut ws) = (T::zero(), T::zero());
            for (&y, &yhat) in step_targets(w).iter().zip(&fp.predictions) {
                let wt = point_weight(y, threshold, boost);
                sse += wt * (yhat - y) * (yhat - y);
                ws += wt;
            }
            Ok((sse, ws))
        })
        .collect::<Result<_>>()?;
    let (sse, ws) = parts
        .into_iter()
        .fold((T::zero(), T::zero()), |(a, b), (c, d)| (a + c, b + d));
    Ok(sse / ws + l2 * p.weight_sq_norm())
}
