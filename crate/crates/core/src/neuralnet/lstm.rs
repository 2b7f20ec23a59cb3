//! LSTM layer: standard gated recurrence with zero initial state, plus exact
//! backpropagation through time.
//!
//! Weight layout per layer: `wx` is (in_dim, 4*units), `wh` is
//! (units, 4*units), `b` is (4*units); gate columns are ordered
//! [input | forget | candidate | output]. Sequences are held time-major
//! (t, batch, width) internally so every per-step slice is contiguous.

use super::math::{sigmoid64, tanh64};
use super::pool::{give_buf, take_buf, take_buf_raw};
use super::tensor::{gemm_nn, gemm_tn, transpose_into, Tensor};
use super::NetError;

pub(crate) struct LstmLayer<'a> {
    pub wx: &'a [f64],
    pub wh: &'a [f64],
    pub b: &'a [f64],
    pub in_dim: usize,
    pub units: usize,
}

/// Everything the backward pass needs, recorded during forward. Buffers
/// return to the thread pool on drop.
pub(crate) struct LstmCache {
    pub t_steps: usize,
    pub batch: usize,
    pub in_dim: usize,
    pub units: usize,
    /// input as fed (post input-dropout), (t, batch, in_dim)
    pub x: Vec<f64>,
    /// activated gate values i,f,g,o, (t, batch, 4*units)
    pub gates: Vec<f64>,
    /// cell states after each step, (t, batch, units)
    pub c: Vec<f64>,
    /// tanh of each cell state, (t, batch, units)
    pub tc: Vec<f64>,
    /// hidden states, (t, batch, units)
    pub h: Vec<f64>,
}

impl Drop for LstmCache {
    fn drop(&mut self) {
        give_buf(std::mem::take(&mut self.x));
        give_buf(std::mem::take(&mut self.gates));
        give_buf(std::mem::take(&mut self.c));
        give_buf(std::mem::take(&mut self.tc));
        give_buf(std::mem::take(&mut self.h));
    }
}

/// Runs the recurrence over a time-major input of shape (t_steps, batch,
/// in_dim); `h_0 = c_0 = 0`. The input is copied (and `mask` applied to the
/// copy) so the cache records exactly what the layer consumed.
pub(crate) fn lstm_layer_forward(
    x_in: &[f64],
    t_steps: usize,
    batch: usize,
    layer: &LstmLayer,
    mask: Option<&[f64]>,
) -> LstmCache {
    let (i_dim, u) = (layer.in_dim, layer.units);
    let g4 = 4 * u;
    debug_assert_eq!(x_in.len(), t_steps * batch * i_dim);
    debug_assert_eq!(layer.wx.len(), i_dim * g4);
    debug_assert_eq!(layer.wh.len(), u * g4);
    debug_assert_eq!(layer.b.len(), g4);

    let mut x = take_buf_raw(x_in.len());
    x.copy_from_slice(x_in);
    if let Some(mask) = mask {
        for (xv, &mv) in x.iter_mut().zip(mask) {
            *xv *= mv;
        }
    }

    // every step's input projection lands straight in the gate buffer
    let mut gates = take_buf_raw(t_steps * batch * g4);
    gemm_nn(t_steps * batch, i_dim, g4, &x, layer.wx, &mut gates, false);

    let mut c = take_buf_raw(t_steps * batch * u);
    let mut tc = take_buf_raw(t_steps * batch * u);
    let mut h = take_buf_raw(t_steps * batch * u);

    for t in 0..t_steps {
        let step = t * batch;
        let z = &mut gates[step * g4..(step + batch) * g4];
        if t > 0 {
            let h_prev = &h[(t - 1) * batch * u..t * batch * u];
            gemm_nn(batch, u, g4, h_prev, layer.wh, z, true);
        }
        // activate gate blocks: contiguous maps vectorize
        for zrow in z.chunks_exact_mut(g4) {
            for (zv, &bv) in zrow.iter_mut().zip(layer.b) {
                *zv += bv;
            }
            for zv in &mut zrow[..2 * u] {
                *zv = sigmoid64(*zv); // input, forget
            }
            for zv in &mut zrow[2 * u..3 * u] {
                *zv = tanh64(*zv); // candidate
            }
            for zv in &mut zrow[3 * u..] {
                *zv = sigmoid64(*zv); // output
            }
        }
        // cell update
        let (c_head, c_step) = c.split_at_mut(step * u);
        let c_step = &mut c_step[..batch * u];
        let c_prev = &c_head[c_head.len().saturating_sub(batch * u)..];
        let z = &gates[step * g4..(step + batch) * g4];
        for bi in 0..batch {
            let zrow = &z[bi * g4..(bi + 1) * g4];
            let gi = &zrow[..u];
            let gf = &zrow[u..2 * u];
            let gg = &zrow[2 * u..3 * u];
            let crow = &mut c_step[bi * u..(bi + 1) * u];
            if t > 0 {
                let cp = &c_prev[bi * u..(bi + 1) * u];
                for ui in 0..u {
                    crow[ui] = gf[ui] * cp[ui] + gi[ui] * gg[ui];
                }
            } else {
                for ui in 0..u {
                    crow[ui] = gi[ui] * gg[ui];
                }
            }
        }
        let tc_step = &mut tc[step * u..(step + batch) * u];
        for (tcv, &cv) in tc_step.iter_mut().zip(c_step.iter()) {
            *tcv = tanh64(cv);
        }
        let h_step = &mut h[step * u..(step + batch) * u];
        for bi in 0..batch {
            let go = &z[bi * g4 + 3 * u..(bi + 1) * g4];
            let trow = &tc_step[bi * u..(bi + 1) * u];
            let hrow = &mut h_step[bi * u..(bi + 1) * u];
            for ui in 0..u {
                hrow[ui] = go[ui] * trow[ui];
            }
        }
    }

    LstmCache { t_steps, batch, in_dim: i_dim, units: u, x, gates, c, tc, h }
}

/// Upstream gradient arriving at the layer's hidden states.
pub(crate) enum SeqGrad<'a> {
    /// (t, batch, units): gradient at every step (return-sequence layers).
    Full(&'a [f64]),
    /// (batch, units): gradient at the final step only.
    Last(&'a [f64]),
}

pub(crate) struct LstmLayerGrads {
    pub dwx: Vec<f64>,
    pub dwh: Vec<f64>,
    pub db: Vec<f64>,
    /// (t, batch, in_dim), only when requested (not needed for the first layer)
    pub dx: Option<Vec<f64>>,
}

impl Drop for LstmLayerGrads {
    fn drop(&mut self) {
        give_buf(std::mem::take(&mut self.dwx));
        give_buf(std::mem::take(&mut self.dwh));
        give_buf(std::mem::take(&mut self.db));
        if let Some(dx) = self.dx.take() {
            give_buf(dx);
        }
    }
}

/// Exact BPTT given the forward cache.
///
/// Per step only the recurrent product runs; the weight/bias/input gradients
/// batch over all steps at the end, where the GEMM shapes are large.
pub(crate) fn lstm_layer_backward(
    cache: &LstmCache,
    layer: &LstmLayer,
    dh_in: SeqGrad,
    need_dx: bool,
) -> LstmLayerGrads {
    let (t_steps, batch, i_dim, u) = (cache.t_steps, cache.batch, cache.in_dim, cache.units);
    let g4 = 4 * u;

    let mut wh_t = take_buf_raw(u * g4); // (4u, u)
    transpose_into(u, g4, layer.wh, &mut wh_t);
    let mut dz_all = take_buf_raw(t_steps * batch * g4);
    let mut dh = take_buf(batch * u); // carried recurrent gradient
    let mut dc = take_buf(batch * u);

    for t in (0..t_steps).rev() {
        let step = t * batch;
        match dh_in {
            SeqGrad::Full(g) => {
                let g_t = &g[step * u..(step + batch) * u];
                for (d, &gv) in dh.iter_mut().zip(g_t) {
                    *d += gv;
                }
            }
            SeqGrad::Last(g) => {
                if t == t_steps - 1 {
                    dh.copy_from_slice(g);
                }
            }
        }

        let dz = &mut dz_all[step * g4..(step + batch) * g4];
        let gates = &cache.gates[step * g4..(step + batch) * g4];
        let tc = &cache.tc[step * u..(step + batch) * u];
        let c_prev = if t > 0 { Some(&cache.c[(t - 1) * batch * u..t * batch * u]) } else { None };
        for bi in 0..batch {
            let grow = &gates[bi * g4..(bi + 1) * g4];
            let (gi, gf) = (&grow[..u], &grow[u..2 * u]);
            let (gg, go) = (&grow[2 * u..3 * u], &grow[3 * u..]);
            let trow = &tc[bi * u..(bi + 1) * u];
            let dhrow = &dh[bi * u..(bi + 1) * u];
            let dcrow = &mut dc[bi * u..(bi + 1) * u];
            let dzrow = &mut dz[bi * g4..(bi + 1) * g4];
            let cp = c_prev.map(|c| &c[bi * u..(bi + 1) * u]);
            for ui in 0..u {
                let dzo = dhrow[ui] * trow[ui] * go[ui] * (1.0 - go[ui]);
                let dct = dcrow[ui] + dhrow[ui] * go[ui] * (1.0 - trow[ui] * trow[ui]);
                dzrow[ui] = dct * gg[ui] * gi[ui] * (1.0 - gi[ui]);
                dzrow[u + ui] = match cp {
                    Some(cp) => dct * cp[ui] * gf[ui] * (1.0 - gf[ui]),
                    None => 0.0,
                };
                dzrow[2 * u + ui] = dct * gi[ui] * (1.0 - gg[ui] * gg[ui]);
                dzrow[3 * u + ui] = dzo;
                dcrow[ui] = dct * gf[ui];
            }
        }

        // gradient reaching h_{t-1} through the recurrence
        gemm_nn(batch, g4, u, dz, &wh_t, &mut dh, false);
    }

    // weight, bias, and input gradients over all steps at once
    let mut dwx = take_buf_raw(i_dim * g4);
    gemm_tn(t_steps * batch, i_dim, g4, &cache.x, &dz_all, &mut dwx, false);

    let mut dwh = take_buf(u * g4);
    if t_steps > 1 {
        // step t pairs with h_{t-1}: rows 1.. of dz against rows ..t-1 of h
        let h_prev = &cache.h[..(t_steps - 1) * batch * u];
        let dz_tail = &dz_all[batch * g4..];
        gemm_tn((t_steps - 1) * batch, u, g4, h_prev, dz_tail, &mut dwh, true);
    }

    let mut db = take_buf(g4);
    for dzrow in dz_all.chunks_exact(g4) {
        for (dbv, &dzv) in db.iter_mut().zip(dzrow) {
            *dbv += dzv;
        }
    }

    let dx = if need_dx {
        let mut wx_t = take_buf_raw(i_dim * g4); // (4u, i)
        transpose_into(i_dim, g4, layer.wx, &mut wx_t);
        let mut dx = take_buf_raw(t_steps * batch * i_dim);
        gemm_nn(t_steps * batch, g4, i_dim, &dz_all, &wx_t, &mut dx, false);
        give_buf(wx_t);
        Some(dx)
    } else {
        None
    };

    give_buf(wh_t);
    give_buf(dz_all);
    give_buf(dh);
    give_buf(dc);

    LstmLayerGrads { dwx, dwh, db, dx }
}

/// Public single-layer forward with the spec's batch-major interface.
///
/// `input` is (batch, t, in_dim) or (batch, t) for a scalar feature. Returns
/// (batch, t, units) when `return_sequence`, else the final (batch, units).
pub fn lstm_forward(
    input: &Tensor,
    wx: &Tensor,
    wh: &Tensor,
    b: &Tensor,
    return_sequence: bool,
) -> Result<Tensor, NetError> {
    let ishape = input.shape();
    let (batch, t_steps, in_dim) = match *ishape {
        [bt, tt] => (bt, tt, 1),
        [bt, tt, ii] => (bt, tt, ii),
        _ => {
            return Err(NetError::ShapeMismatch {
                op: "lstm_forward",
                detail: format!("input {ishape:?}"),
            })
        }
    };
    let wxs = wx.shape();
    if wxs.len() != 2 || wxs[0] != in_dim || wxs[1] % 4 != 0 {
        return Err(NetError::ShapeMismatch {
            op: "lstm_forward",
            detail: format!("wx {wxs:?} for in_dim {in_dim}"),
        });
    }
    let units = wxs[1] / 4;
    if wh.shape() != [units, 4 * units] || b.len() != 4 * units {
        return Err(NetError::ShapeMismatch {
            op: "lstm_forward",
            detail: format!("wh {:?}, b {:?} for units {units}", wh.shape(), b.shape()),
        });
    }

    let x = to_time_major(input.data(), batch, t_steps, in_dim);
    let layer = LstmLayer { wx: wx.data(), wh: wh.data(), b: b.data(), in_dim, units };
    let cache = lstm_layer_forward(&x, t_steps, batch, &layer, None);

    if return_sequence {
        let mut out = Tensor::zeros(&[batch, t_steps, units]);
        let data = out.data_mut();
        for t in 0..t_steps {
            for bi in 0..batch {
                let src = ((t * batch) + bi) * units;
                let dst = (bi * t_steps + t) * units;
                data[dst..dst + units].copy_from_slice(&cache.h[src..src + units]);
            }
        }
        Ok(out)
    } else {
        let mut out = Tensor::zeros(&[batch, units]);
        let data = out.data_mut();
        let last = (t_steps - 1) * batch * units;
        data.copy_from_slice(&cache.h[last..last + batch * units]);
        Ok(out)
    }
}

/// (batch, t, width) -> (t, batch, width)
pub(crate) fn to_time_major(input: &[f64], batch: usize, t_steps: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; input.len()];
    for bi in 0..batch {
        for t in 0..t_steps {
            let src = (bi * t_steps + t) * width;
            let dst = (t * batch + bi) * width;
            out[dst..dst + width].copy_from_slice(&input[src..src + width]);
        }
    }
    out
}
