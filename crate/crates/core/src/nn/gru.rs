//! Bidirectional GRU with backpropagation through time.
//!
//! Row-vector convention, per direction:
//!
//! ```text
//! z = σ(x·Wz + h·Uz + bz)
//! r = σ(x·Wr + h·Ur + br)
//! n = tanh(x·Wh + (r ⊙ h)·Uh + bh)
//! h' = (1 − z) ⊙ h + z ⊙ n
//! ```
//!
//! The backward direction runs on the time-reversed sequence; outputs of the
//! two directions are concatenated along the feature axis (forward first).

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub struct GruDirection<F> {
    pub w_z: Tensor<F>,
    pub w_r: Tensor<F>,
    pub w_h: Tensor<F>,
    pub u_z: Tensor<F>,
    pub u_r: Tensor<F>,
    pub u_h: Tensor<F>,
    pub b_z: Tensor<F>,
    pub b_r: Tensor<F>,
    pub b_h: Tensor<F>,
    cache: Option<DirCache<F>>,
}

/// Time-major activations of one direction (T×B×H each).
struct DirCache<F> {
    x: Vec<F>,
    h_prev: Vec<F>,
    z: Vec<F>,
    r: Vec<F>,
    n: Vec<F>,
    rh: Vec<F>,
}

impl<F: Scalar> GruDirection<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let m = |r, c| Tensor::param(&[r, c], vec![F::ZERO; r * c]).expect("shape");
        let v = |c| Tensor::param(&[c], vec![F::ZERO; c]).expect("shape");
        GruDirection {
            w_z: m(input, hidden),
            w_r: m(input, hidden),
            w_h: m(input, hidden),
            u_z: m(hidden, hidden),
            u_r: m(hidden, hidden),
            u_h: m(hidden, hidden),
            b_z: v(hidden),
            b_r: v(hidden),
            b_h: v(hidden),
            cache: None,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.dim(0)
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.dim(1)
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<F>)> {
        vec![
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_h", &mut self.w_h),
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_h", &mut self.u_h),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ]
    }

    /// Runs over time-major `xs` (T×B×D) in index order, returning T×B×H.
    fn forward(&mut self, xs: Vec<F>, t_len: usize, batch: usize, record: bool) -> Vec<F> {
        let d = self.input_size();
        let h = self.hidden_size();
        let rows = t_len * batch;
        let project = |w: &Tensor<F>, b: &Tensor<F>| {
            let mut out = vec![F::ZERO; rows * h];
            for row in out.chunks_mut(h) {
                row.copy_from_slice(b.data());
            }
            F::gemm(rows, d, h, F::ONE, &xs, d as isize, 1, w.data(), h as isize, 1, F::ONE, &mut out, h as isize, 1);
            out
        };
        let mut z = project(&self.w_z, &self.b_z);
        let mut r = project(&self.w_r, &self.b_r);
        let mut n = project(&self.w_h, &self.b_h);
        let mut hs = vec![F::ZERO; rows * h];
        let mut h_prev_all = vec![F::ZERO; rows * h];
        let mut rh_all = vec![F::ZERO; rows * h];
        let mut h_prev = vec![F::ZERO; batch * h];
        let step = batch * h;
        for t in 0..t_len {
            let span = t * step..(t + 1) * step;
            let zt = &mut z[span.clone()];
            F::gemm(batch, h, h, F::ONE, &h_prev, h as isize, 1, self.u_z.data(), h as isize, 1, F::ONE, zt, h as isize, 1);
            zt.iter_mut().for_each(|v| *v = v.sigmoid());
            let rt = &mut r[span.clone()];
            F::gemm(batch, h, h, F::ONE, &h_prev, h as isize, 1, self.u_r.data(), h as isize, 1, F::ONE, rt, h as isize, 1);
            rt.iter_mut().for_each(|v| *v = v.sigmoid());
            let rht = &mut rh_all[span.clone()];
            for ((o, &a), &b) in rht.iter_mut().zip(rt.iter()).zip(&h_prev) {
                *o = a * b;
            }
            let nt = &mut n[span.clone()];
            F::gemm(batch, h, h, F::ONE, rht, h as isize, 1, self.u_h.data(), h as isize, 1, F::ONE, nt, h as isize, 1);
            nt.iter_mut().for_each(|v| *v = v.tanh());
            h_prev_all[span.clone()].copy_from_slice(&h_prev);
            let ht = &mut hs[span.clone()];
            for i in 0..step {
                ht[i] = (F::ONE - zt[i]) * h_prev[i] + zt[i] * nt[i];
            }
            h_prev.copy_from_slice(ht);
        }
        if record {
            self.cache = Some(DirCache {
                x: xs,
                h_prev: h_prev_all,
                z,
                r,
                n,
                rh: rh_all,
            });
        } else {
            self.cache = None;
        }
        hs
    }

    /// BPTT given time-major output gradients; returns time-major input gradients.
    fn backward(&mut self, dhs: &[F], t_len: usize, batch: usize) -> Result<Vec<F>> {
        let c = self.cache.take().ok_or_else(|| {
            Error::InvalidArgument("bigru: backward called without a recorded forward".into())
        })?;
        let d = self.input_size();
        let h = self.hidden_size();
        let step = batch * h;
        let rows = t_len * batch;
        let mut da_z = vec![F::ZERO; rows * h];
        let mut da_r = vec![F::ZERO; rows * h];
        let mut da_h = vec![F::ZERO; rows * h];
        let mut dh_next = vec![F::ZERO; step];
        let mut dh_prev = vec![F::ZERO; step];
        let mut drh = vec![F::ZERO; step];
        for t in (0..t_len).rev() {
            let span = t * step..(t + 1) * step;
            let (zt, rt, nt, hp) = (&c.z[span.clone()], &c.r[span.clone()], &c.n[span.clone()], &c.h_prev[span.clone()]);
            let dh_out = &dhs[span.clone()];
            let (az, ar, ah) = (&mut da_z[span.clone()], &mut da_r[span.clone()], &mut da_h[span.clone()]);
            for i in 0..step {
                let dh = dh_out[i] + dh_next[i];
                let dz = dh * (nt[i] - hp[i]);
                let dn = dh * zt[i];
                dh_prev[i] = dh * (F::ONE - zt[i]);
                ah[i] = dn * (F::ONE - nt[i] * nt[i]);
                az[i] = dz * zt[i] * (F::ONE - zt[i]);
            }
            // drh = dah · Uhᵀ
            F::gemm(batch, h, h, F::ONE, ah, h as isize, 1, self.u_h.data(), 1, h as isize, F::ZERO, &mut drh, h as isize, 1);
            for i in 0..step {
                let dr = drh[i] * hp[i];
                dh_prev[i] += drh[i] * rt[i];
                ar[i] = dr * rt[i] * (F::ONE - rt[i]);
            }
            F::gemm(batch, h, h, F::ONE, az, h as isize, 1, self.u_z.data(), 1, h as isize, F::ONE, &mut dh_prev, h as isize, 1);
            F::gemm(batch, h, h, F::ONE, ar, h as isize, 1, self.u_r.data(), 1, h as isize, F::ONE, &mut dh_prev, h as isize, 1);
            std::mem::swap(&mut dh_next, &mut dh_prev);
        }
        // Recurrent weight gradients: U += h_prevᵀ·da over all steps.
        F::gemm(h, rows, h, F::ONE, &c.h_prev, 1, h as isize, &da_z, h as isize, 1, F::ONE, self.u_z.grad_mut(), h as isize, 1);
        F::gemm(h, rows, h, F::ONE, &c.h_prev, 1, h as isize, &da_r, h as isize, 1, F::ONE, self.u_r.grad_mut(), h as isize, 1);
        F::gemm(h, rows, h, F::ONE, &c.rh, 1, h as isize, &da_h, h as isize, 1, F::ONE, self.u_h.grad_mut(), h as isize, 1);
        let mut dx = vec![F::ZERO; rows * d];
        for (da, w, b) in [
            (&da_z, &mut self.w_z, &mut self.b_z),
            (&da_r, &mut self.w_r, &mut self.b_r),
            (&da_h, &mut self.w_h, &mut self.b_h),
        ] {
            let (wd, wg) = w.data_and_grad_mut();
            F::gemm(d, rows, h, F::ONE, &c.x, 1, d as isize, da, h as isize, 1, F::ONE, wg, h as isize, 1);
            F::gemm(rows, h, d, F::ONE, da, h as isize, 1, wd, 1, h as isize, F::ONE, &mut dx, d as isize, 1);
            let bg = b.grad_mut();
            for row in da.chunks(h) {
                bg.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
            }
        }
        Ok(dx)
    }
}

pub struct BiGru<F> {
    pub forward_dir: GruDirection<F>,
    pub backward_dir: GruDirection<F>,
    dims: Option<(usize, usize)>,
}

impl<F: Scalar> BiGru<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiGru {
            forward_dir: GruDirection::zeros(input, hidden),
            backward_dir: GruDirection::zeros(input, hidden),
            dims: None,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.forward_dir.hidden_size()
    }

    /// `x` is B×T×D; returns B×T×2H.
    pub fn forward(&mut self, x: &Tensor<F>, record: bool) -> Result<Tensor<F>> {
        x.expect_rank(3, "bigru input")?;
        let (b, t_len, d) = (x.dim(0), x.dim(1), x.dim(2));
        if d != self.forward_dir.input_size() {
            return Err(Error::Shape(format!(
                "bigru expects input width {}, got {d}",
                self.forward_dir.input_size()
            )));
        }
        let h = self.hidden_size();
        let mut fwd_in = vec![F::ZERO; t_len * b * d];
        let mut bwd_in = vec![F::ZERO; t_len * b * d];
        for s in 0..b {
            for t in 0..t_len {
                let src = &x.data()[(s * t_len + t) * d..][..d];
                fwd_in[(t * b + s) * d..][..d].copy_from_slice(src);
                bwd_in[((t_len - 1 - t) * b + s) * d..][..d].copy_from_slice(src);
            }
        }
        let hf = self.forward_dir.forward(fwd_in, t_len, b, record);
        let hb = self.backward_dir.forward(bwd_in, t_len, b, record);
        let mut out = Tensor::zeros(&[b, t_len, 2 * h]);
        for s in 0..b {
            for t in 0..t_len {
                let dst = &mut out.data_mut()[(s * t_len + t) * 2 * h..][..2 * h];
                dst[..h].copy_from_slice(&hf[(t * b + s) * h..][..h]);
                dst[h..].copy_from_slice(&hb[((t_len - 1 - t) * b + s) * h..][..h]);
            }
        }
        self.dims = record.then_some((b, t_len));
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<F>) -> Result<Tensor<F>> {
        let (b, t_len) = self
            .dims
            .take()
            .ok_or_else(|| Error::InvalidArgument("bigru: backward called without a recorded forward".into()))?;
        let h = self.hidden_size();
        let d = self.forward_dir.input_size();
        if grad.shape() != [b, t_len, 2 * h] {
            return Err(Error::Shape(format!("bigru grad {:?}", grad.shape())));
        }
        let mut gf = vec![F::ZERO; t_len * b * h];
        let mut gb = vec![F::ZERO; t_len * b * h];
        for s in 0..b {
            for t in 0..t_len {
                let src = &grad.data()[(s * t_len + t) * 2 * h..][..2 * h];
                gf[(t * b + s) * h..][..h].copy_from_slice(&src[..h]);
                gb[((t_len - 1 - t) * b + s) * h..][..h].copy_from_slice(&src[h..]);
            }
        }
        let dxf = self.forward_dir.backward(&gf, t_len, b)?;
        let dxb = self.backward_dir.backward(&gb, t_len, b)?;
        let mut dx = Tensor::zeros(&[b, t_len, d]);
        for s in 0..b {
            for t in 0..t_len {
                let dst = &mut dx.data_mut()[(s * t_len + t) * d..][..d];
                let a = &dxf[(t * b + s) * d..][..d];
                let c = &dxb[((t_len - 1 - t) * b + s) * d..][..d];
                for i in 0..d {
                    dst[i] = a[i] + c[i];
                }
            }
        }
        Ok(dx)
    }

    /// Forward-direction parameters first, each named `fwd.*` / `bwd.*`.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out: Vec<(String, &mut Tensor<F>)> = Vec::new();
        for (dir, d) in [("fwd", &mut self.forward_dir), ("bwd", &mut self.backward_dir)] {
            out.extend(d.params_mut().into_iter().map(|(n, t)| (format!("{dir}.{n}"), t)));
        }
        out
    }
}
