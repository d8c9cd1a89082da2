use std::ops::Range;

use super::config::ModelConfig;

/// One named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Receives decoupled weight decay (matrices and embeddings only).
    pub decay: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerRanges {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w_qkv: Range<usize>,
    pub b_qkv: Range<usize>,
    pub w_o: Range<usize>,
    pub b_o: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w_fc1: Range<usize>,
    pub b_fc1: Range<usize>,
    pub w_fc2: Range<usize>,
    pub b_fc2: Range<usize>,
}

/// Declaration order of all tensors: token embedding, then per layer
/// `ln1, qkv, attn-out, ln2, fc1, fc2`, then the final norm and the output
/// projection.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub specs: Vec<TensorSpec>,
    pub(crate) tok_emb: Range<usize>,
    pub(crate) layers: Vec<LayerRanges>,
    pub(crate) lnf_g: Range<usize>,
    pub(crate) lnf_b: Range<usize>,
    pub(crate) w_out: Range<usize>,
    pub(crate) b_out: Range<usize>,
    total: usize,
}

struct Builder {
    specs: Vec<TensorSpec>,
    offset: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, decay: bool) -> Range<usize> {
        let spec = TensorSpec {
            name,
            shape,
            offset: self.offset,
            decay,
        };
        let r = spec.range();
        self.offset = r.end;
        self.specs.push(spec);
        r
    }
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (v, d, m) = (cfg.vocab, cfg.hidden, cfg.mlp());
        let mut b = Builder {
            specs: Vec::new(),
            offset: 0,
        };
        let tok_emb = b.push("tok_emb".into(), vec![v, d], true);
        let layers = (0..cfg.layers)
            .map(|l| LayerRanges {
                ln1_g: b.push(format!("h{l}.ln1.g"), vec![d], false),
                ln1_b: b.push(format!("h{l}.ln1.b"), vec![d], false),
                w_qkv: b.push(format!("h{l}.attn.w_qkv"), vec![d, 3 * d], true),
                b_qkv: b.push(format!("h{l}.attn.b_qkv"), vec![3 * d], false),
                w_o: b.push(format!("h{l}.attn.w_o"), vec![d, d], true),
                b_o: b.push(format!("h{l}.attn.b_o"), vec![d], false),
                ln2_g: b.push(format!("h{l}.ln2.g"), vec![d], false),
                ln2_b: b.push(format!("h{l}.ln2.b"), vec![d], false),
                w_fc1: b.push(format!("h{l}.mlp.w_fc1"), vec![d, m], true),
                b_fc1: b.push(format!("h{l}.mlp.b_fc1"), vec![m], false),
                w_fc2: b.push(format!("h{l}.mlp.w_fc2"), vec![m, d], true),
                b_fc2: b.push(format!("h{l}.mlp.b_fc2"), vec![d], false),
            })
            .collect();
        let lnf_g = b.push("lnf.g".into(), vec![d], false);
        let lnf_b = b.push("lnf.b".into(), vec![d], false);
        let w_out = b.push("head.w_out".into(), vec![d, v], true);
        let b_out = b.push("head.b_out".into(), vec![v], false);
        ParamLayout {
            specs: b.specs,
            tok_emb,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            total: b.offset,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}
