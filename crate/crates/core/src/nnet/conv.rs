//! 2-D convolution over CHW tensors via im2col and dgemm.

/// Shape and parameter offsets of one convolution. Weights are stored
/// `[out][in][k][k]` followed by `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl Conv2d {
    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    pub fn out_dim(&self, dim: usize) -> usize {
        (dim + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let n = ho * wo;
        let mut col = vec![0.0; self.fan_in() * n];
        for c in 0..self.in_ch {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut col[row * n..(row + 1) * n];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let drow = &mut dst[oy * wo..(oy + 1) * wo];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let n = ho * wo;
        let mut dx = vec![0.0; self.in_ch * h * w];
        for c in 0..self.in_ch {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &col[row * n..(row + 1) * n];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let prow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                prow[ix as usize] += src[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Returns the `out_ch x ho x wo` output and its spatial size.
    pub fn forward(&self, params: &[f64], x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
        let (ho, wo) = (self.out_dim(h), self.out_dim(w));
        let n = ho * wo;
        let kk = self.fan_in();
        let col = self.im2col(x, h, w, ho, wo);
        let mut out = vec![0.0; self.out_ch * n];
        for (o, chunk) in out.chunks_mut(n).enumerate() {
            chunk.fill(params[self.b_off + o]);
        }
        let wts = &params[self.w_off..self.w_off + self.weight_len()];
        // out[O x N] += W[O x K] * col[K x N]
        unsafe {
            matrixmultiply::dgemm(
                self.out_ch,
                kk,
                n,
                1.0,
                wts.as_ptr(),
                kk as isize,
                1,
                col.as_ptr(),
                n as isize,
                1,
                1.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        (out, ho, wo)
    }

    /// Accumulates weight and bias gradients into `grads` and returns the
    /// input gradient when `need_dx`.
    pub fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        x: &[f64],
        h: usize,
        w: usize,
        dout: &[f64],
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        let (ho, wo) = (self.out_dim(h), self.out_dim(w));
        let n = ho * wo;
        let kk = self.fan_in();
        let col = self.im2col(x, h, w, ho, wo);
        for o in 0..self.out_ch {
            grads[self.b_off + o] += dout[o * n..(o + 1) * n].iter().sum::<f64>();
        }
        let gw = &mut grads[self.w_off..self.w_off + self.weight_len()];
        // dW[O x K] += dout[O x N] * col^T[N x K]
        unsafe {
            matrixmultiply::dgemm(
                self.out_ch,
                n,
                kk,
                1.0,
                dout.as_ptr(),
                n as isize,
                1,
                col.as_ptr(),
                1,
                n as isize,
                1.0,
                gw.as_mut_ptr(),
                kk as isize,
                1,
            );
        }
        if !need_dx {
            return None;
        }
        let wts = &params[self.w_off..self.w_off + self.weight_len()];
        let mut dcol = vec![0.0; kk * n];
        // dcol[K x N] = W^T[K x O] * dout[O x N]
        unsafe {
            matrixmultiply::dgemm(
                kk,
                self.out_ch,
                n,
                1.0,
                wts.as_ptr(),
                1,
                kk as isize,
                dout.as_ptr(),
                n as isize,
                1,
                0.0,
                dcol.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        Some(self.col2im(&dcol, h, w, ho, wo))
    }
}
