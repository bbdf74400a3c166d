//! Layer primitives. Each layer stores only parameter handles; values and
//! gradients live in the [`ParameterStore`]. Backward passes accumulate into
//! the store's gradient buffers so a mini-batch is one zero_grads / N
//! backward calls / one sgd_step cycle.

use rand::Rng;

use super::{uniform_init, ParamId, ParameterStore, Tensor};

/// Fully connected layer, weights `[out, in]` row-major so output growth is
/// a row append.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn init(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.register(
            &format!("{name}.w"),
            Tensor::from_vec(
                &[out_dim, in_dim],
                uniform_init(rng, in_dim, out_dim * in_dim),
            ),
        );
        let b = store.register(
            &format!("{name}.b"),
            Tensor::from_vec(&[out_dim], uniform_init(rng, in_dim, out_dim)),
        );
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    /// Current output dimension (may exceed `out_dim` after growth).
    pub fn rows(&self, store: &ParameterStore) -> usize {
        store.value(self.w).rows()
    }

    pub fn forward(&self, store: &ParameterStore, x: &[f64]) -> Vec<f64> {
        let w = store.value(self.w);
        let b = store.value(self.b);
        debug_assert_eq!(x.len(), w.shape[1]);
        let mut y = Vec::with_capacity(w.rows());
        for o in 0..w.rows() {
            let row = w.row(o);
            let mut acc = b.data[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y.push(acc);
        }
        y
    }

    /// Accumulate parameter gradients for one sample and return dL/dx.
    pub fn backward(&self, store: &mut ParameterStore, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let cols = store.value(self.w).shape[1];
        let mut dx = vec![0.0; cols];
        {
            let gw = store.grad_mut(self.w);
            for (o, &d) in dy.iter().enumerate() {
                let row = &mut gw.data[o * cols..(o + 1) * cols];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
        {
            let gb = store.grad_mut(self.b);
            for (o, &d) in dy.iter().enumerate() {
                gb.data[o] += d;
            }
        }
        let w = store.value(self.w);
        for (o, &d) in dy.iter().enumerate() {
            let row = w.row(o);
            for (dxi, wi) in dx.iter_mut().zip(row) {
                *dxi += d * wi;
            }
        }
        dx
    }
}

/// Row-lookup embedding table `[vocab, dim]`.
#[derive(Clone, Copy, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn init(
        store: &mut ParameterStore,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let table = store.register(
            name,
            Tensor::from_vec(&[vocab, dim], uniform_init(rng, dim, vocab * dim)),
        );
        Self { table, dim }
    }

    pub fn vocab(&self, store: &ParameterStore) -> usize {
        store.value(self.table).rows()
    }

    pub fn forward(&self, store: &ParameterStore, id: usize) -> Vec<f64> {
        store.value(self.table).row(id).to_vec()
    }

    pub fn backward(&self, store: &mut ParameterStore, id: usize, d: &[f64]) {
        let g = store.grad_mut(self.table);
        let row = &mut g.data[id * self.dim..(id + 1) * self.dim];
        for (gi, di) in row.iter_mut().zip(d) {
            *gi += di;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM cell unrolled by the caller. Gate order in the stacked weight
/// matrix `[4H, I+H]` is input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

/// Forward cache for one timestep, consumed by `backward`.
#[derive(Clone, Debug)]
pub struct LstmStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmCell {
    pub fn init(
        store: &mut ParameterStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = input_dim + hidden;
        let w = store.register(
            &format!("{name}.w"),
            Tensor::from_vec(
                &[4 * hidden, fan_in],
                uniform_init(rng, fan_in, 4 * hidden * fan_in),
            ),
        );
        let b = store.register(
            &format!("{name}.b"),
            Tensor::from_vec(&[4 * hidden], uniform_init(rng, fan_in, 4 * hidden)),
        );
        Self {
            w,
            b,
            input_dim,
            hidden,
        }
    }

    pub fn forward(
        &self,
        store: &ParameterStore,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> LstmStep {
        debug_assert_eq!(x.len(), self.input_dim);
        debug_assert_eq!(h_prev.len(), self.hidden);
        let w = store.value(self.w);
        let b = store.value(self.b);
        let hh = self.hidden;
        let mut z = vec![0.0; 4 * hh];
        for (r, zr) in z.iter_mut().enumerate() {
            let row = w.row(r);
            let mut acc = b.data[r];
            for (wi, xi) in row[..self.input_dim].iter().zip(x) {
                acc += wi * xi;
            }
            for (wi, hi) in row[self.input_dim..].iter().zip(h_prev) {
                acc += wi * hi;
            }
            *zr = acc;
        }
        let i: Vec<f64> = z[..hh].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[hh..2 * hh].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * hh..3 * hh].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * hh..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..hh).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
        let h: Vec<f64> = (0..hh).map(|k| o[k] * tanh_c[k]).collect();
        LstmStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
            h,
            c,
        }
    }

    /// Backward one timestep. `dh`/`dc` are the gradients flowing into this
    /// step's outputs; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &self,
        store: &mut ParameterStore,
        step: &LstmStep,
        dh: &[f64],
        dc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hh = self.hidden;
        let mut dz = vec![0.0; 4 * hh];
        let mut dc_prev = vec![0.0; hh];
        for k in 0..hh {
            let do_ = dh[k] * step.tanh_c[k];
            let dct = dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]) + dc[k];
            let di = dct * step.g[k];
            let df = dct * step.c_prev[k];
            let dg = dct * step.i[k];
            dc_prev[k] = dct * step.f[k];
            dz[k] = di * step.i[k] * (1.0 - step.i[k]);
            dz[hh + k] = df * step.f[k] * (1.0 - step.f[k]);
            dz[2 * hh + k] = dg * (1.0 - step.g[k] * step.g[k]);
            dz[3 * hh + k] = do_ * step.o[k] * (1.0 - step.o[k]);
        }

        let fan_in = self.input_dim + hh;
        {
            let gw = store.grad_mut(self.w);
            for (r, &d) in dz.iter().enumerate() {
                let row = &mut gw.data[r * fan_in..(r + 1) * fan_in];
                for (slot, xi) in row[..self.input_dim].iter_mut().zip(&step.x) {
                    *slot += d * xi;
                }
                for (slot, hi) in row[self.input_dim..].iter_mut().zip(&step.h_prev) {
                    *slot += d * hi;
                }
            }
        }
        {
            let gb = store.grad_mut(self.b);
            for (r, &d) in dz.iter().enumerate() {
                gb.data[r] += d;
            }
        }

        let w = store.value(self.w);
        let mut dx = vec![0.0; self.input_dim];
        let mut dh_prev = vec![0.0; hh];
        for (r, &d) in dz.iter().enumerate() {
            let row = w.row(r);
            for (slot, wi) in dx.iter_mut().zip(&row[..self.input_dim]) {
                *slot += d * wi;
            }
            for (slot, wi) in dh_prev.iter_mut().zip(&row[self.input_dim..]) {
                *slot += d * wi;
            }
        }
        (dx, dh_prev, dc_prev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_forward_matches_manual() {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = Dense::init(&mut store, "d", 2, 2, &mut rng);
        store
            .value_mut(layer.w)
            .data
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        store.value_mut(layer.b).data.copy_from_slice(&[0.5, -0.5]);
        let y = layer.forward(&store, &[1.0, -1.0]);
        assert_eq!(y, vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 0.5]);
    }

    #[test]
    fn embedding_backward_touches_only_looked_up_row() {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let emb = Embedding::init(&mut store, "e", 3, 2, &mut rng);
        emb.backward(&mut store, 1, &[1.0, 2.0]);
        let g = store.grad(emb.table);
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(1), &[1.0, 2.0]);
        assert_eq!(g.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn lstm_shapes_and_determinism() {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCell::init(&mut store, "lstm", 3, 4, &mut rng);
        let x = [0.5, -0.2, 0.1];
        let h0 = vec![0.0; 4];
        let c0 = vec![0.0; 4];
        let a = cell.forward(&store, &x, &h0, &c0);
        let b = cell.forward(&store, &x, &h0, &c0);
        assert_eq!(a.h, b.h);
        assert_eq!(a.c, b.c);
        assert_eq!(a.h.len(), 4);
    }
}
