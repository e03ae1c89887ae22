//! Parameter registration: names, shapes, and initialization.
//!
//! Registration order is the single source of truth for parameter ids; the
//! same walk is used for fresh initialization and for checkpoint loading, so
//! ids are stable for a given configuration.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{ParamStore, Scalar};

use super::config::{ArchKind, EncoderKind, ModelConfig};

#[derive(Debug, Clone)]
pub struct LinearIds {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub struct LnIds {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub struct AttnIds {
    pub q: LinearIds,
    pub k: LinearIds,
    pub v: LinearIds,
    pub o: LinearIds,
}

#[derive(Debug, Clone)]
pub struct SelfBlockIds {
    pub ln1: LnIds,
    pub attn: AttnIds,
    pub ln2: LnIds,
    pub ff1: LinearIds,
    pub ff2: LinearIds,
}

#[derive(Debug, Clone)]
pub struct CrossBlockIds {
    pub ln_self: LnIds,
    pub self_attn: AttnIds,
    pub ln_q: LnIds,
    pub ln_kv: LnIds,
    pub cross_attn: AttnIds,
    pub ln_ffn: LnIds,
    pub ff1: LinearIds,
    pub ff2: LinearIds,
}

#[derive(Debug, Clone)]
pub struct EncoderIds {
    pub conv1_taps: Vec<usize>,
    pub conv1_bias: usize,
    pub conv2_taps: Vec<usize>,
    pub conv2_bias: usize,
    pub proj: LinearIds,
}

/// Resolved parameter ids for the whole network.
#[derive(Debug, Clone)]
pub struct Layout {
    pub encoder: Option<EncoderIds>,
    pub pos: Option<usize>,
    pub channel_blocks: Vec<SelfBlockIds>,
    /// Cross stacks, one per direction: [0] queries channel 0, [1] channel 1.
    pub cross_blocks: [Vec<CrossBlockIds>; 2],
    pub final_ln: Option<[LnIds; 2]>,
    pub vap_head: Option<LinearIds>,
    pub vad_head: Option<LinearIds>,
    pub bc_head: Option<LinearIds>,
}

enum Init {
    Random(ChaCha8Rng),
    Zeros,
}

struct Registrar<F: Scalar> {
    store: ParamStore<F>,
    init: Init,
}

impl<F: Scalar> Registrar<F> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let v = match &mut self.init {
            Init::Zeros => Array2::zeros((rows, cols)),
            Init::Random(rng) => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                Array2::from_shape_fn((rows, cols), |_| {
                    F::from((rng.random::<f64>() * 2.0 - 1.0) * a).unwrap()
                })
            }
        };
        self.store.add(name, v)
    }

    fn pos_table(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let v = match &mut self.init {
            Init::Zeros => Array2::zeros((rows, cols)),
            Init::Random(rng) => Array2::from_shape_fn((rows, cols), |_| {
                F::from((rng.random::<f64>() * 2.0 - 1.0) * 0.02).unwrap()
            }),
        };
        self.store.add(name, v)
    }

    fn zeros(&mut self, name: String, cols: usize) -> usize {
        self.store.add(name, Array2::zeros((1, cols)))
    }

    fn ones(&mut self, name: String, cols: usize) -> usize {
        self.store.add(name, Array2::from_elem((1, cols), F::one()))
    }

    fn linear(&mut self, prefix: &str, input: usize, output: usize) -> LinearIds {
        LinearIds {
            w: self.weight(format!("{prefix}.w"), input, output),
            b: self.zeros(format!("{prefix}.b"), output),
        }
    }

    fn layer_norm(&mut self, prefix: &str, dim: usize) -> LnIds {
        LnIds {
            g: self.ones(format!("{prefix}.g"), dim),
            b: self.zeros(format!("{prefix}.b"), dim),
        }
    }

    fn attn(&mut self, prefix: &str, dim: usize) -> AttnIds {
        AttnIds {
            q: self.linear(&format!("{prefix}.q"), dim, dim),
            k: self.linear(&format!("{prefix}.k"), dim, dim),
            v: self.linear(&format!("{prefix}.v"), dim, dim),
            o: self.linear(&format!("{prefix}.o"), dim, dim),
        }
    }

    fn self_block(&mut self, prefix: &str, dim: usize, ffn: usize) -> SelfBlockIds {
        SelfBlockIds {
            ln1: self.layer_norm(&format!("{prefix}.ln1"), dim),
            attn: self.attn(&format!("{prefix}.attn"), dim),
            ln2: self.layer_norm(&format!("{prefix}.ln2"), dim),
            ff1: self.linear(&format!("{prefix}.ff1"), dim, ffn),
            ff2: self.linear(&format!("{prefix}.ff2"), ffn, dim),
        }
    }

    fn cross_block(&mut self, prefix: &str, dim: usize, ffn: usize) -> CrossBlockIds {
        CrossBlockIds {
            ln_self: self.layer_norm(&format!("{prefix}.ln_self"), dim),
            self_attn: self.attn(&format!("{prefix}.self_attn"), dim),
            ln_q: self.layer_norm(&format!("{prefix}.ln_q"), dim),
            ln_kv: self.layer_norm(&format!("{prefix}.ln_kv"), dim),
            cross_attn: self.attn(&format!("{prefix}.cross_attn"), dim),
            ln_ffn: self.layer_norm(&format!("{prefix}.ln_ffn"), dim),
            ff1: self.linear(&format!("{prefix}.ff1"), dim, ffn),
            ff2: self.linear(&format!("{prefix}.ff2"), ffn, dim),
        }
    }
}

/// Walk the topology for `config`, producing the parameter store and layout.
/// `seed` picks fresh random values; `None` registers zeros (checkpoint
/// loading overwrites them).
pub fn build<F: Scalar>(config: &ModelConfig, seed: Option<u64>) -> (ParamStore<F>, Layout) {
    let mut reg = Registrar {
        store: ParamStore::new(),
        init: match seed {
            Some(s) => Init::Random(rand::SeedableRng::seed_from_u64(s)),
            None => Init::Zeros,
        },
    };
    let d = config.d_channel;
    let ffn = d * config.ffn_mult;

    let encoder = match config.encoder {
        EncoderKind::ExternalFeatures => None,
        EncoderKind::Reference => {
            let conv1_taps = (0..3)
                .map(|j| reg.weight(format!("enc.conv1.w{j}"), config.n_bands, d))
                .collect();
            let conv1_bias = reg.zeros("enc.conv1.b".into(), d);
            let conv2_taps =
                (0..2).map(|j| reg.weight(format!("enc.conv2.w{j}"), d, d)).collect();
            let conv2_bias = reg.zeros("enc.conv2.b".into(), d);
            let proj = reg.linear("enc.proj", d, d);
            Some(EncoderIds { conv1_taps, conv1_bias, conv2_taps, conv2_bias, proj })
        }
    };

    let mut layout = Layout {
        encoder,
        pos: None,
        channel_blocks: Vec::new(),
        cross_blocks: [Vec::new(), Vec::new()],
        final_ln: None,
        vap_head: None,
        vad_head: None,
        bc_head: None,
    };

    match config.arch {
        ArchKind::EncoderLinear => {
            layout.bc_head = Some(reg.linear("head.bc", config.d_concat, config.bc_classes));
        }
        ArchKind::Vap => {
            layout.pos = Some(reg.pos_table("pos.table".into(), config.max_context, d));
            for i in 0..config.n_channel_layers {
                layout.channel_blocks.push(reg.self_block(&format!("ch.l{i}"), d, ffn));
            }
            for dir in 0..2 {
                for i in 0..config.n_cross_layers {
                    layout.cross_blocks[dir]
                        .push(reg.cross_block(&format!("cross.d{dir}.l{i}"), d, ffn));
                }
            }
            layout.final_ln =
                Some([reg.layer_norm("final.c0.ln", d), reg.layer_norm("final.c1.ln", d)]);
            layout.vap_head = Some(reg.linear("head.vap", config.d_concat, 256));
            layout.vad_head = Some(reg.linear("head.vad", config.d_concat, 2));
            if config.bc_classes > 0 {
                layout.bc_head = Some(reg.linear("head.bc", config.d_concat, config.bc_classes));
            }
        }
    }

    (reg.store, layout)
}
