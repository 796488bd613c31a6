use rand::Rng;

use super::functional::dropout_mask;
use super::graph::{Graph, Padding, Var};
use super::{ParamId, ParamStore};
use crate::error::{ensure, Result};
use crate::Scalar;

/// Affine map `W x + b` with `W: [out, in]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: store.add_uniform(format!("{name}.weight"), vec![d_out, d_in], d_in, rng),
            bias: store.add_uniform(format!("{name}.bias"), vec![1, d_out], d_in, rng),
            d_in,
            d_out,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        g.linear(x, w, Some(b))
    }
}

/// Projection without bias, used for attention queries/keys/values.
#[derive(Clone, Debug)]
pub struct Projection {
    pub weight: ParamId,
}

impl Projection {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: store.add_uniform(format!("{name}.weight"), vec![d, d], d, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        g.linear(x, w, None)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * kernel;
        Self {
            weight: store.add_uniform(format!("{name}.weight"), vec![c_out, c_in, kernel], fan_in, rng),
            bias: store.add_uniform(format!("{name}.bias"), vec![1, c_out], fan_in, rng),
            kernel,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, padding: Padding) -> Result<Var> {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        g.conv1d(x, w, Some(b), padding)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        Self {
            gain: store.add_const(format!("{name}.gain"), vec![1, d], T::one()),
            bias: store.add_const(format!("{name}.bias"), vec![1, d], T::zero()),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias)
    }
}

/// Dropout policy for one forward pass.
pub enum Dropout<'r, R: Rng + ?Sized> {
    Eval,
    Train { rate: f64, rng: &'r mut R },
}

impl<R: Rng + ?Sized> Dropout<'_, R> {
    pub fn apply<T: Scalar>(&mut self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        match self {
            Dropout::Train { rate, rng } if *rate > 0.0 => {
                let mask = dropout_mask(g.value(x).len(), *rate, &mut **rng);
                g.mul_const(x, mask)
            }
            _ => Ok(x),
        }
    }
}

/// Single-query transformer block: multi-head attention over the key set,
/// then a position-wise feed-forward network; each step is followed by
/// dropout, a residual connection and layer normalization.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub query: Projection,
    pub key: Projection,
    pub value: Projection,
    pub output: Dense,
    pub norm1: LayerNorm,
    pub ffn_in: Dense,
    pub ffn_out: Dense,
    pub norm2: LayerNorm,
    pub heads: usize,
    pub d: usize,
}

impl AttentionBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Result<Self> {
        ensure!(heads >= 1 && d % heads == 0, "model width {d} not divisible by {heads} heads");
        Ok(Self {
            query: Projection::new(store, &format!("{name}.q"), d, rng),
            key: Projection::new(store, &format!("{name}.k"), d, rng),
            value: Projection::new(store, &format!("{name}.v"), d, rng),
            output: Dense::new(store, &format!("{name}.out"), d, d, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d),
            ffn_in: Dense::new(store, &format!("{name}.ffn_in"), d, d_ff, rng),
            ffn_out: Dense::new(store, &format!("{name}.ffn_out"), d_ff, d, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d),
            heads,
            d,
        })
    }

    /// `query: [1, d]`, `keys`/`values`: projected `[k, d]` rows already
    /// stacked. The residual attaches to the unprojected query row.
    pub fn forward_projected<T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        query_in: Var,
        keys: Var,
        values: Var,
        dropout: &mut Dropout<'_, R>,
    ) -> Result<Var> {
        let q = self.query.forward(g, query_in)?;
        let att = g.attention(q, keys, values, self.heads)?;
        let att = self.output.forward(g, att)?;
        let att = dropout.apply(g, att)?;
        let res = g.add(att, query_in)?;
        let u = self.norm1.forward(g, res)?;
        let f = self.ffn_in.forward(g, u)?;
        let f = g.relu(f);
        let f = self.ffn_out.forward(g, f)?;
        let f = dropout.apply(g, f)?;
        let res = g.add(f, u)?;
        self.norm2.forward(g, res)
    }

    /// Full block from raw feature rows: the last row is the query, all
    /// rows are keys and values.
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        rows: &[Var],
        dropout: &mut Dropout<'_, R>,
    ) -> Result<Var> {
        ensure!(!rows.is_empty(), "attention needs at least one feature row");
        let mut ks = Vec::with_capacity(rows.len());
        let mut vs = Vec::with_capacity(rows.len());
        for &r in rows {
            ks.push(self.key.forward(g, r)?);
            vs.push(self.value.forward(g, r)?);
        }
        let keys = g.stack_rows(&ks)?;
        let values = g.stack_rows(&vs)?;
        self.forward_projected(g, *rows.last().unwrap(), keys, values, dropout)
    }
}
