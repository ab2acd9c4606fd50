use serde::{Deserialize, Serialize};

/// Task heads a model instance can carry. MLM is mandatory during
/// pre-training; the regression head is added for fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskHeadKind {
    #[serde(rename = "mlm")]
    Mlm,
    #[serde(rename = "ntails")]
    NumTails,
    #[serde(rename = "connseq")]
    ConnSeq,
    #[serde(rename = "conntoken")]
    ConnToken,
    #[serde(rename = "headtail")]
    HeadTail,
    #[serde(rename = "pair")]
    PairCls,
    #[serde(rename = "regression")]
    Regression,
}

impl TaskHeadKind {
    pub fn parse(name: &str) -> Option<TaskHeadKind> {
        Some(match name {
            "mlm" => TaskHeadKind::Mlm,
            "ntails" => TaskHeadKind::NumTails,
            "connseq" => TaskHeadKind::ConnSeq,
            "conntoken" => TaskHeadKind::ConnToken,
            "headtail" => TaskHeadKind::HeadTail,
            "pair" => TaskHeadKind::PairCls,
            "regression" => TaskHeadKind::Regression,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskHeadKind::Mlm => "mlm",
            TaskHeadKind::NumTails => "ntails",
            TaskHeadKind::ConnSeq => "connseq",
            TaskHeadKind::ConnToken => "conntoken",
            TaskHeadKind::HeadTail => "headtail",
            TaskHeadKind::PairCls => "pair",
            TaskHeadKind::Regression => "regression",
        }
    }
}

/// Encoder hyperparameters plus the active head set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    /// Single-sequence position budget. Pair inputs use twice this.
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub layernorm_eps: f64,
    pub n_tail_classes: usize,
    /// Connecting-atom class count for sequence classification.
    pub n_pos_classes: usize,
    /// Widths of the four regression MLP layers (input is `hidden`).
    pub regression_dims: [usize; 4],
    pub seed: u64,
    pub tasks: Vec<TaskHeadKind>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// BERTbase-sized preset: 12 layers, hidden 768, 12 heads, FFN 3072,
    /// 128-token sequences.
    pub fn paper() -> Self {
        ModelConfig {
            n_layers: 12,
            hidden: 768,
            n_heads: 12,
            ffn_dim: 3072,
            max_len: 128,
            vocab_size: 0,
            dropout: 0.1,
            layernorm_eps: 1e-12,
            n_tail_classes: 5,
            n_pos_classes: 64,
            regression_dims: [512, 256, 128, 128],
            seed: 0,
            tasks: vec![TaskHeadKind::Mlm],
        }
    }

    /// Desktop-scale preset: 2 layers, hidden 128, 4 heads, FFN 512,
    /// 96-token sequences.
    pub fn desk() -> Self {
        ModelConfig {
            n_layers: 2,
            hidden: 128,
            n_heads: 4,
            ffn_dim: 512,
            max_len: 96,
            vocab_size: 0,
            dropout: 0.1,
            layernorm_eps: 1e-12,
            n_tail_classes: 5,
            n_pos_classes: 64,
            regression_dims: [96, 64, 48, 32],
            seed: 0,
            tasks: vec![TaskHeadKind::Mlm],
        }
    }

    /// Tiny model for gradient audits: 1 layer, hidden 16, 2 heads, 8-token
    /// sequences.
    pub fn tiny_test() -> Self {
        ModelConfig {
            n_layers: 1,
            hidden: 16,
            n_heads: 2,
            ffn_dim: 32,
            max_len: 8,
            vocab_size: 0,
            dropout: 0.0,
            layernorm_eps: 1e-12,
            n_tail_classes: 5,
            n_pos_classes: 8,
            regression_dims: [12, 10, 8, 8],
            seed: 0,
            tasks: vec![TaskHeadKind::Mlm],
        }
    }

    pub fn with_tasks(mut self, tasks: &[TaskHeadKind]) -> Self {
        self.tasks = tasks.to_vec();
        self
    }

    pub fn has_task(&self, t: TaskHeadKind) -> bool {
        self.tasks.contains(&t)
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.n_heads
    }

    /// Rows of the position-embedding table: doubled when the model also
    /// processes pair sequences.
    pub fn pos_len(&self) -> usize {
        if self.has_task(TaskHeadKind::PairCls) {
            2 * self.max_len
        } else {
            self.max_len
        }
    }

    /// Sequence budget for pair inputs.
    pub fn pair_len(&self) -> usize {
        2 * self.max_len
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 || self.n_heads == 0 || self.hidden % self.n_heads != 0 {
            return Err(format!(
                "hidden ({}) must be a positive multiple of n_heads ({})",
                self.hidden, self.n_heads
            ));
        }
        if self.vocab_size <= 5 {
            return Err("vocab_size must cover the special tokens plus content".to_string());
        }
        if self.max_len < 3 {
            return Err("max_len must fit [CLS] + content + [SEP]".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err("dropout must be in [0,1)".to_string());
        }
        if self.n_tail_classes == 0 || self.n_pos_classes == 0 {
            return Err("classifier widths must be positive".to_string());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for mut cfg in [ModelConfig::paper(), ModelConfig::desk(), ModelConfig::tiny_test()] {
            cfg.vocab_size = 30;
            assert_eq!(cfg.validate(), Ok(()));
            assert_eq!(cfg.hidden % cfg.n_heads, 0);
        }
    }

    #[test]
    fn pair_task_doubles_positions() {
        let mut cfg = ModelConfig::desk();
        cfg.vocab_size = 30;
        assert_eq!(cfg.pos_len(), 96);
        cfg.tasks.push(TaskHeadKind::PairCls);
        assert_eq!(cfg.pos_len(), 192);
    }

    #[test]
    fn task_names_round_trip() {
        for t in [
            TaskHeadKind::Mlm,
            TaskHeadKind::NumTails,
            TaskHeadKind::ConnSeq,
            TaskHeadKind::ConnToken,
            TaskHeadKind::HeadTail,
            TaskHeadKind::PairCls,
            TaskHeadKind::Regression,
        ] {
            assert_eq!(TaskHeadKind::parse(t.name()), Some(t));
        }
        assert_eq!(TaskHeadKind::parse("nsp"), None);
    }
}
