use rand::Rng;

use crate::error::{Error, Result};
use crate::model::HemiConfig;
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// GCN weights (one matrix per layer) and the PReLU slope of one encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub weights: Vec<Tensor>,
    pub slope: Tensor,
}

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoders: Vec<EncoderParams>,
    /// `d_m × d`
    pub w_sem: Tensor,
    /// `d_m`
    pub b_sem: Tensor,
    /// `d_m`
    pub q: Tensor,
    /// Fine-grain bilinear matrices, `d × d`.
    pub disc_fine: Vec<Tensor>,
    /// Coarse-grain bilinear matrices, `d × d`.
    pub disc_coarse: Vec<Tensor>,
    num_metapaths: usize,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        num_metapaths: usize,
        config: &HemiConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if num_metapaths == 0 || in_dim == 0 {
            return Err(Error::InvalidArgument(
                "need at least one meta-path and one input feature".into(),
            ));
        }
        let d = config.dim;
        let n_enc = if config.shared_encoder { 1 } else { num_metapaths };
        let encoders = (0..n_enc)
            .map(|_| {
                let mut weights = vec![Tensor::glorot(in_dim, d, rng)];
                for _ in 1..config.layers {
                    weights.push(Tensor::glorot(d, d, rng));
                }
                EncoderParams {
                    weights,
                    slope: Tensor::scalar(config.prelu_init),
                }
            })
            .collect();
        let w_sem = Tensor::glorot(config.attn_dim, d, rng);
        let b_sem = Tensor::zeros(&[config.attn_dim]);
        let q = Tensor::glorot(config.attn_dim, 1, rng)
            .reshape(vec![config.attn_dim])
            .expect("same length");
        let n_disc = if config.shared_discriminators { 1 } else { num_metapaths };
        let disc_fine = (0..n_disc).map(|_| Tensor::glorot(d, d, rng)).collect();
        let disc_coarse = (0..n_disc).map(|_| Tensor::glorot(d, d, rng)).collect();
        Ok(ModelParams {
            encoders,
            w_sem,
            b_sem,
            q,
            disc_fine,
            disc_coarse,
            num_metapaths,
        })
    }

    /// Reassembles parameters from named tensors (see [`ModelParams::named`]).
    pub fn from_named(num_metapaths: usize, named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut encoders: Vec<EncoderParams> = Vec::new();
        let mut w_sem = None;
        let mut b_sem = None;
        let mut q = None;
        let mut disc_fine = Vec::new();
        let mut disc_coarse = Vec::new();
        for (name, t) in named {
            let parts: Vec<&str> = name.split('.').collect();
            match parts.as_slice() {
                ["encoder", i, "weight", l] => {
                    let (i, l) = (parse_index(&name, i)?, parse_index(&name, l)?);
                    ensure_slot(&mut encoders, i);
                    if encoders[i].weights.len() != l {
                        return Err(Error::Data(format!("out-of-order tensor `{name}`")));
                    }
                    encoders[i].weights.push(t);
                }
                ["encoder", i, "slope"] => {
                    let i = parse_index(&name, i)?;
                    ensure_slot(&mut encoders, i);
                    encoders[i].slope = t;
                }
                ["attention", "w_sem"] => w_sem = Some(t),
                ["attention", "b"] => b_sem = Some(t),
                ["attention", "q"] => q = Some(t),
                ["disc_fine", _] => disc_fine.push(t),
                ["disc_coarse", _] => disc_coarse.push(t),
                _ => return Err(Error::Data(format!("unexpected tensor `{name}`"))),
            }
        }
        let missing = |what: &str| Error::Data(format!("checkpoint lacks {what}"));
        let params = ModelParams {
            encoders,
            w_sem: w_sem.ok_or_else(|| missing("attention.w_sem"))?,
            b_sem: b_sem.ok_or_else(|| missing("attention.b"))?,
            q: q.ok_or_else(|| missing("attention.q"))?,
            disc_fine,
            disc_coarse,
            num_metapaths,
        };
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Data(format!("inconsistent parameter shapes: {what}")));
        if self.encoders.is_empty() || self.disc_fine.is_empty() {
            return bad("empty encoder or discriminator list");
        }
        if self.disc_fine.len() != self.disc_coarse.len() {
            return bad("discriminator counts differ");
        }
        let d = self.dim();
        let dm = self.w_sem.rows();
        if self.w_sem.shape() != [dm, d] || self.b_sem.shape() != [dm] || self.q.shape() != [dm]
        {
            return bad("attention");
        }
        for enc in &self.encoders {
            if enc.weights.is_empty() || enc.slope.len() != 1 {
                return bad("encoder");
            }
            if enc.weights.iter().any(|w| w.rank() != 2 || w.cols() != d) {
                return bad("encoder width");
            }
        }
        if self
            .disc_fine
            .iter()
            .chain(&self.disc_coarse)
            .any(|w| w.shape() != [d, d])
        {
            return bad("discriminator");
        }
        Ok(())
    }

    pub fn num_metapaths(&self) -> usize {
        self.num_metapaths
    }

    pub fn dim(&self) -> usize {
        self.w_sem.cols()
    }

    pub fn in_dim(&self) -> usize {
        self.encoders[0].weights[0].rows()
    }

    pub fn encoder(&self, metapath: usize) -> &EncoderParams {
        &self.encoders[metapath.min(self.encoders.len() - 1)]
    }

    /// Stable names and tensors, in optimizer order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, enc) in self.encoders.iter().enumerate() {
            for (l, w) in enc.weights.iter().enumerate() {
                out.push((format!("encoder.{i}.weight.{l}"), w));
            }
            out.push((format!("encoder.{i}.slope"), &enc.slope));
        }
        out.push(("attention.w_sem".into(), &self.w_sem));
        out.push(("attention.b".into(), &self.b_sem));
        out.push(("attention.q".into(), &self.q));
        for (j, w) in self.disc_fine.iter().enumerate() {
            out.push((format!("disc_fine.{j}"), w));
        }
        for (j, w) in self.disc_coarse.iter().enumerate() {
            out.push((format!("disc_coarse.{j}"), w));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    /// Mutable tensors in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for enc in &mut self.encoders {
            out.extend(enc.weights.iter_mut());
            out.push(&mut enc.slope);
        }
        out.push(&mut self.w_sem);
        out.push(&mut self.b_sem);
        out.push(&mut self.q);
        out.extend(self.disc_fine.iter_mut());
        out.extend(self.disc_coarse.iter_mut());
        out
    }

    /// Records every parameter as a leaf of `tape`.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> ParamVars<'t> {
        ParamVars {
            encoders: self
                .encoders
                .iter()
                .map(|e| EncoderVars {
                    weights: e.weights.iter().map(|w| tape.var(w.clone())).collect(),
                    slope: tape.var(e.slope.clone()),
                })
                .collect(),
            w_sem: tape.var(self.w_sem.clone()),
            b_sem: tape.var(self.b_sem.clone()),
            q: tape.var(self.q.clone()),
            disc_fine: self.disc_fine.iter().map(|w| tape.var(w.clone())).collect(),
            disc_coarse: self.disc_coarse.iter().map(|w| tape.var(w.clone())).collect(),
        }
    }
}

fn parse_index(name: &str, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Data(format!("bad index in tensor name `{name}`")))
}

fn ensure_slot(encoders: &mut Vec<EncoderParams>, i: usize) {
    while encoders.len() <= i {
        encoders.push(EncoderParams {
            weights: Vec::new(),
            slope: Tensor::scalar(0.25),
        });
    }
}

#[derive(Clone, Debug)]
pub struct EncoderVars<'t> {
    pub weights: Vec<Var<'t>>,
    pub slope: Var<'t>,
}

/// Parameters as tape leaves.
#[derive(Clone, Debug)]
pub struct ParamVars<'t> {
    pub encoders: Vec<EncoderVars<'t>>,
    pub w_sem: Var<'t>,
    pub b_sem: Var<'t>,
    pub q: Var<'t>,
    pub disc_fine: Vec<Var<'t>>,
    pub disc_coarse: Vec<Var<'t>>,
}

impl<'t> ParamVars<'t> {
    pub fn encoder(&self, metapath: usize) -> &EncoderVars<'t> {
        &self.encoders[metapath.min(self.encoders.len() - 1)]
    }

    pub fn disc_fine(&self, metapath: usize) -> Var<'t> {
        self.disc_fine[metapath.min(self.disc_fine.len() - 1)]
    }

    pub fn disc_coarse(&self, metapath: usize) -> Var<'t> {
        self.disc_coarse[metapath.min(self.disc_coarse.len() - 1)]
    }

    fn vars(&self) -> Vec<Var<'t>> {
        let mut out = Vec::new();
        for e in &self.encoders {
            out.extend(e.weights.iter().copied());
            out.push(e.slope);
        }
        out.extend([self.w_sem, self.b_sem, self.q]);
        out.extend(self.disc_fine.iter().copied());
        out.extend(self.disc_coarse.iter().copied());
        out
    }

    /// Gradients in [`ModelParams::named`] order.
    pub fn grads(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars().into_iter().map(|v| grads.get(v)).collect()
    }
}
