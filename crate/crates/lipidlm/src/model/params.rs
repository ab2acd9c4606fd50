use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, TaskHeadKind};
use super::scalar::Scalar;

/// How a tensor is filled at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Normal(0, 0.02): weight matrices and embeddings.
    Normal,
    /// Zeros: biases and layernorm shifts.
    Zero,
    /// Ones: layernorm scales.
    One,
}

#[derive(Debug, Clone)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
    /// Whether AdamW weight decay applies (2-D tensors only).
    pub decay: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Named-tensor layout over one flat buffer, derived from the config. The
/// order of `specs` is the checkpoint serialization order.
#[derive(Debug, Clone)]
pub struct Layout {
    specs: Vec<TensorSpec>,
    by_name: HashMap<String, usize>,
    total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let h = cfg.hidden;
        let mut b = LayoutBuilder::default();

        b.tensor("embed.token", &[cfg.vocab_size, h], Init::Normal);
        b.tensor("embed.position", &[cfg.pos_len(), h], Init::Normal);
        b.tensor("embed.segment", &[2, h], Init::Normal);
        b.layer_norm("embed.ln", h);

        for i in 0..cfg.n_layers {
            let p = format!("layer{i}");
            b.linear(&format!("{p}.attn.q"), h, h);
            b.linear(&format!("{p}.attn.k"), h, h);
            b.linear(&format!("{p}.attn.v"), h, h);
            b.linear(&format!("{p}.attn.out"), h, h);
            b.layer_norm(&format!("{p}.attn.ln"), h);
            b.linear(&format!("{p}.ffn.in"), h, cfg.ffn_dim);
            b.linear(&format!("{p}.ffn.out"), cfg.ffn_dim, h);
            b.layer_norm(&format!("{p}.ffn.ln"), h);
        }

        b.linear("pooler", h, h);

        // MLM head: dense + GeLU + layernorm + untied output projection.
        b.linear("mlm.dense", h, h);
        b.layer_norm("mlm.ln", h);
        b.linear("mlm.out", h, cfg.vocab_size);

        if cfg.has_task(TaskHeadKind::NumTails) {
            b.linear("head.ntails", h, cfg.n_tail_classes);
        }
        if cfg.has_task(TaskHeadKind::ConnSeq) {
            b.linear("head.connseq", h, cfg.n_pos_classes);
        }
        if cfg.has_task(TaskHeadKind::ConnToken) {
            b.linear("head.conntoken", h, 2);
        }
        if cfg.has_task(TaskHeadKind::HeadTail) {
            b.linear("head.headtail", h, 3);
        }
        if cfg.has_task(TaskHeadKind::PairCls) {
            b.linear("head.pair", h, 2);
        }
        if cfg.has_task(TaskHeadKind::Regression) {
            let mut prev = h;
            for (i, &d) in cfg.regression_dims.iter().enumerate() {
                b.linear(&format!("reg.l{i}"), prev, d);
                prev = d;
            }
            b.linear("reg.out", prev, 1);
        }

        b.finish()
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn spec(&self, name: &str) -> &TensorSpec {
        let idx = *self
            .by_name
            .get(name)
            .unwrap_or_else(|| panic!("unknown tensor {name}"));
        &self.specs[idx]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }
}

#[derive(Default)]
struct LayoutBuilder {
    specs: Vec<TensorSpec>,
    offset: usize,
}

impl LayoutBuilder {
    fn tensor(&mut self, name: &str, shape: &[usize], init: Init) {
        let len: usize = shape.iter().product();
        self.specs.push(TensorSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: self.offset,
            init,
            decay: shape.len() == 2,
        });
        self.offset += len;
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) {
        self.tensor(&format!("{prefix}.w"), &[d_in, d_out], Init::Normal);
        self.tensor(&format!("{prefix}.b"), &[d_out], Init::Zero);
    }

    fn layer_norm(&mut self, prefix: &str, dim: usize) {
        self.tensor(&format!("{prefix}.scale"), &[dim], Init::One);
        self.tensor(&format!("{prefix}.shift"), &[dim], Init::Zero);
    }

    fn finish(self) -> Layout {
        let by_name = self
            .specs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        Layout {
            specs: self.specs,
            by_name,
            total: self.offset,
        }
    }
}

/// The complete parameter set (or an equally-shaped gradient / moment set).
#[derive(Debug, Clone)]
pub struct ParamSet<F> {
    pub layout: Arc<Layout>,
    pub data: Vec<F>,
}

impl<F: Scalar> ParamSet<F> {
    /// Initializes parameters: weights ~ Normal(0, 0.02), biases 0,
    /// layernorm scale 1 / shift 0. Deterministic per seed; tensors are
    /// filled in layout order from one stream.
    pub fn init(cfg: &ModelConfig, seed: u64) -> ParamSet<F> {
        let layout = Arc::new(Layout::new(cfg));
        let mut data = vec![F::zero(); layout.total_len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = F::from_f64(0.02);
        for spec in layout.specs() {
            let slice = &mut data[spec.offset..spec.offset + spec.len()];
            match spec.init {
                Init::Normal => {
                    for v in slice {
                        *v = F::sample_standard_normal(&mut rng) * sd;
                    }
                }
                Init::Zero => {}
                Init::One => slice.fill(F::one()),
            }
        }
        ParamSet { layout, data }
    }

    /// Same layout, all zeros — gradient and optimizer-moment containers.
    pub fn zeros_like(&self) -> ParamSet<F> {
        ParamSet {
            layout: Arc::clone(&self.layout),
            data: vec![F::zero(); self.data.len()],
        }
    }

    pub fn slice(&self, name: &str) -> &[F] {
        let s = self.layout.spec(name);
        &self.data[s.offset..s.offset + s.len()]
    }

    pub fn slice_mut(&mut self, name: &str) -> &mut [F] {
        let s = self.layout.spec(name);
        let (off, len) = (s.offset, s.len());
        &mut self.data[off..off + len]
    }

    pub fn view2(&self, name: &str) -> ArrayView2<'_, F> {
        let s = self.layout.spec(name);
        assert_eq!(s.shape.len(), 2, "{name} is not 2-D");
        ArrayView2::from_shape((s.shape[0], s.shape[1]), self.slice(name)).expect("layout shape")
    }

    pub fn view1(&self, name: &str) -> ArrayView1<'_, F> {
        let s = self.layout.spec(name);
        assert_eq!(s.shape.len(), 1, "{name} is not 1-D");
        ArrayView1::from_shape(s.shape[0], self.slice(name)).expect("layout shape")
    }

    pub fn view2_mut(&mut self, name: &str) -> ArrayViewMut2<'_, F> {
        let s = self.layout.spec(name).clone();
        ArrayViewMut2::from_shape((s.shape[0], s.shape[1]), self.slice_mut(&s.name))
            .expect("layout shape")
    }

    pub fn view1_mut(&mut self, name: &str) -> ArrayViewMut1<'_, F> {
        let s = self.layout.spec(name).clone();
        ArrayViewMut1::from_shape(s.shape[0], self.slice_mut(&s.name)).expect("layout shape")
    }

    /// First non-finite entry, as (tensor name, index).
    pub fn find_non_finite(&self) -> Option<(String, usize)> {
        for spec in self.layout.specs() {
            let slice = &self.data[spec.offset..spec.offset + spec.len()];
            if let Some(i) = slice.iter().position(|v| !v.is_finite()) {
                return Some((spec.name.clone(), i));
            }
        }
        None
    }

    /// Casts to f32 in layout order (checkpoint serialization).
    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|v| v.as_f64() as f32).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        let mut c = ModelConfig::tiny_test();
        c.vocab_size = 16;
        c.tasks = vec![TaskHeadKind::Mlm, TaskHeadKind::NumTails];
        c
    }

    #[test]
    fn same_seed_bitwise_identical() {
        let a: ParamSet<f32> = ParamSet::init(&cfg(), 5);
        let b: ParamSet<f32> = ParamSet::init(&cfg(), 5);
        assert_eq!(a.data, b.data);
        let c: ParamSet<f32> = ParamSet::init(&cfg(), 6);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn shapes_follow_config() {
        let mut c = cfg();
        c.hidden = 16;
        let p: ParamSet<f64> = ParamSet::init(&c, 0);
        assert_eq!(p.view2("embed.token").dim(), (16, 16));
        assert_eq!(p.view2("layer0.ffn.in.w").dim(), (16, 32));
        assert_eq!(p.view1("layer0.ffn.in.b").len(), 32);
        assert_eq!(p.view2("head.ntails.w").dim(), (16, 5));
        assert!(!p.layout.contains("head.pair.w"));
        assert_eq!(p.view1("embed.ln.scale").iter().copied().sum::<f64>(), 16.0);
    }

    #[test]
    fn init_statistics() {
        // Mean of a large Normal(0, 0.02) tensor is within ±0.001 of zero.
        let mut c = ModelConfig::desk();
        c.vocab_size = 4000; // embed.token becomes 4000×128 ≈ 5·10⁵ entries
        c.tasks = vec![TaskHeadKind::Mlm];
        let p: ParamSet<f64> = ParamSet::init(&c, 3);
        let emb = p.slice("embed.token");
        let n = emb.len() as f64;
        let mean = emb.iter().sum::<f64>() / n;
        assert!(mean.abs() < 1e-3, "mean {mean}");
        let sd = (emb.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd - 0.02).abs() < 2e-3, "sd {sd}");
    }

    #[test]
    fn decay_flags_are_2d_only() {
        let p: ParamSet<f32> = ParamSet::init(&cfg(), 0);
        for spec in p.layout.specs() {
            assert_eq!(spec.decay, spec.shape.len() == 2, "{}", spec.name);
        }
    }

    #[test]
    fn pair_task_grows_position_table() {
        let mut c = cfg();
        c.tasks.push(TaskHeadKind::PairCls);
        let p: ParamSet<f32> = ParamSet::init(&c, 0);
        assert_eq!(p.view2("embed.position").dim().0, 2 * c.max_len);
        assert!(p.layout.contains("head.pair.w"));
    }
}
