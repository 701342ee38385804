//! Native inference of the single-layer LSTM controller stored in an `NFSW1`
//! bundle.
//!
//! Tensor names and gate order follow PyTorch's `nn.LSTM` (`i, f, g, o`):
//!
//! | name                | shape        |
//! |---------------------|--------------|
//! | `lstm.weight_ih_l0` | `[4H, L+1]`  |
//! | `lstm.weight_hh_l0` | `[4H, H]`    |
//! | `lstm.bias_ih_l0`   | `[4H]`       |
//! | `lstm.bias_hh_l0`   | `[4H]`       |
//! | `head.weight`       | `[O, H]`     |
//! | `head.bias`         | `[O]`        |
//!
//! The state encoding is fed one bit position per step. The flip head
//! (`O = 1`) maps every step's hidden state to that position's logit; the
//! validate head (`O = 2`) maps the final hidden state to
//! `(continue, re-select)` logits.

use super::bundle::{BundleMetadata, HeadKind, ModelBundle, Tensor, TensorInfo, INPUT_LAYOUT};
use crate::code::PolarCode;
use crate::error::ScorerError;
use crate::flip::{
    FlipPlan, FlipScorer, FlipValidator, FvAction, FvDecision, ScoringInput, StateEncoding,
};

pub const ARCHITECTURE: &str = "lstm_v1";

/// Flip masses at or below this are never selected.
const MASS_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub input_size: usize,
    pub hidden: usize,
    pub output: usize,
    pub weight_ih: Vec<f32>,
    pub weight_hh: Vec<f32>,
    pub bias_ih: Vec<f32>,
    pub bias_hh: Vec<f32>,
    pub head_weight: Vec<f32>,
    pub head_bias: Vec<f32>,
}

impl LstmWeights {
    pub fn zeros(input_size: usize, hidden: usize, output: usize) -> Self {
        Self {
            input_size,
            hidden,
            output,
            weight_ih: vec![0.0; 4 * hidden * input_size],
            weight_hh: vec![0.0; 4 * hidden * hidden],
            bias_ih: vec![0.0; 4 * hidden],
            bias_hh: vec![0.0; 4 * hidden],
            head_weight: vec![0.0; output * hidden],
            head_bias: vec![0.0; output],
        }
    }

    /// Packs the weights into a bundle targeting `code` decoded with `list_size`.
    pub fn into_bundle(
        self,
        head: HeadKind,
        code: &PolarCode,
        list_size: usize,
    ) -> Result<ModelBundle, ScorerError> {
        let (i, h, o) = (self.input_size, self.hidden, self.output);
        let tensor = |name: &str, shape: Vec<usize>, data: Vec<f32>| Tensor {
            info: TensorInfo {
                name: name.into(),
                shape,
            },
            data,
        };
        let tensors = vec![
            tensor("lstm.weight_ih_l0", vec![4 * h, i], self.weight_ih),
            tensor("lstm.weight_hh_l0", vec![4 * h, h], self.weight_hh),
            tensor("lstm.bias_ih_l0", vec![4 * h], self.bias_ih),
            tensor("lstm.bias_hh_l0", vec![4 * h], self.bias_hh),
            tensor("head.weight", vec![o, h], self.head_weight),
            tensor("head.bias", vec![o], self.head_bias),
        ];
        let metadata = BundleMetadata {
            architecture: ARCHITECTURE.into(),
            head,
            input_layout: INPUT_LAYOUT.into(),
            n: code.n_bits(),
            list_size,
            input_size: i,
            hidden: h,
            output: o,
            code_digest: code.digest_hex(),
            tensors: tensors.iter().map(|t| t.info.clone()).collect(),
        };
        ModelBundle::new(metadata, tensors)
    }
}

#[derive(Debug, Clone)]
pub struct LstmModel {
    head: HeadKind,
    n_bits: usize,
    list_size: usize,
    w: LstmWeights,
    /// `bias_ih + bias_hh`.
    bias: Vec<f32>,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    pub fn from_bundle(bundle: &ModelBundle) -> Result<Self, ScorerError> {
        let m = &bundle.metadata;
        if m.architecture != ARCHITECTURE {
            return Err(ScorerError::Model(format!(
                "unsupported architecture {:?}",
                m.architecture
            )));
        }
        let want_out = match m.head {
            HeadKind::Flip => 1,
            HeadKind::Validate => 2,
        };
        if m.output != want_out {
            return Err(ScorerError::Model(format!(
                "{:?} head needs {want_out} outputs, bundle has {}",
                m.head, m.output
            )));
        }
        let (i, h, o) = (m.input_size, m.hidden, m.output);
        let get = |name: &str, shape: &[usize]| -> Result<Vec<f32>, ScorerError> {
            let t = bundle
                .tensor(name)
                .ok_or_else(|| ScorerError::Model(format!("missing tensor {name}")))?;
            if t.info.shape != shape {
                return Err(ScorerError::Model(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.info.shape
                )));
            }
            Ok(t.data.clone())
        };
        let w = LstmWeights {
            input_size: i,
            hidden: h,
            output: o,
            weight_ih: get("lstm.weight_ih_l0", &[4 * h, i])?,
            weight_hh: get("lstm.weight_hh_l0", &[4 * h, h])?,
            bias_ih: get("lstm.bias_ih_l0", &[4 * h])?,
            bias_hh: get("lstm.bias_hh_l0", &[4 * h])?,
            head_weight: get("head.weight", &[o, h])?,
            head_bias: get("head.bias", &[o])?,
        };
        let bias = w
            .bias_ih
            .iter()
            .zip(&w.bias_hh)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            head: m.head,
            n_bits: m.n,
            list_size: m.list_size,
            w,
            bias,
        })
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    fn check_input(&self, enc: &StateEncoding) -> Result<(), ScorerError> {
        if enc.n_bits() != self.n_bits || enc.list_size() != self.list_size {
            return Err(ScorerError::Model(format!(
                "state has N={} L={}, model expects N={} L={}",
                enc.n_bits(),
                enc.list_size(),
                self.n_bits,
                self.list_size
            )));
        }
        Ok(())
    }

    fn project(&self, h: &[f32], out: &mut Vec<f32>) {
        let hid = self.w.hidden;
        for r in 0..self.w.output {
            let row = &self.w.head_weight[r * hid..(r + 1) * hid];
            out.push(self.w.head_bias[r] + row.iter().zip(h).map(|(a, b)| a * b).sum::<f32>());
        }
    }

    /// Runs the recurrence. Flip head: one logit per step. Validate head: the
    /// two logits of the final step.
    pub fn logits(&self, enc: &StateEncoding) -> Result<Vec<f32>, ScorerError> {
        self.check_input(enc)?;
        let (inp, hid) = (self.w.input_size, self.w.hidden);
        let mut h = vec![0.0f32; hid];
        let mut c = vec![0.0f32; hid];
        let mut z = vec![0.0f32; 4 * hid];
        let mut x = vec![0.0f32; inp];
        let mut out = Vec::with_capacity(self.n_bits);
        for i in 0..self.n_bits {
            for (slot, v) in x.iter_mut().zip(enc.step(i)) {
                *slot = v;
            }
            for (r, zr) in z.iter_mut().enumerate() {
                let wi = &self.w.weight_ih[r * inp..(r + 1) * inp];
                let wh = &self.w.weight_hh[r * hid..(r + 1) * hid];
                *zr = self.bias[r]
                    + wi.iter().zip(&x).map(|(a, b)| a * b).sum::<f32>()
                    + wh.iter().zip(&h).map(|(a, b)| a * b).sum::<f32>();
            }
            for k in 0..hid {
                let ig = sigmoid(z[k]);
                let fg = sigmoid(z[hid + k]);
                let gg = z[2 * hid + k].tanh();
                let og = sigmoid(z[3 * hid + k]);
                c[k] = fg * c[k] + ig * gg;
                h[k] = og * c[k].tanh();
            }
            if self.head == HeadKind::Flip {
                self.project(&h, &mut out);
            }
        }
        if self.head == HeadKind::Validate {
            self.project(&h, &mut out);
        }
        Ok(out)
    }
}

fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let e: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Top-`omega` free positions of the softmax over the per-bit logits.
#[derive(Debug, Clone)]
pub struct NeuralFlipScorer {
    model: LstmModel,
    omega: usize,
}

impl NeuralFlipScorer {
    pub fn new(
        bundle: &ModelBundle,
        code: &PolarCode,
        list_size: usize,
        omega: usize,
    ) -> Result<Self, ScorerError> {
        bundle.check_target(code, list_size)?;
        let model = LstmModel::from_bundle(bundle)?;
        if model.head != HeadKind::Flip {
            return Err(ScorerError::Model(
                "flip scorer needs a bundle with a flip head".into(),
            ));
        }
        Ok(Self { model, omega })
    }

    /// Softmax over all `N` positions.
    pub fn distribution(&self, enc: &StateEncoding) -> Result<Vec<f64>, ScorerError> {
        Ok(softmax(&self.model.logits(enc)?))
    }
}

impl FlipScorer for NeuralFlipScorer {
    fn score_flips(&self, input: &ScoringInput<'_>) -> Result<FlipPlan, ScorerError> {
        let dist = self.distribution(input.encoding)?;
        let mut free: Vec<usize> = input
            .code
            .free_positions()
            .iter()
            .copied()
            .filter(|&i| dist[i] > MASS_FLOOR)
            .collect();
        free.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
        free.truncate(self.omega);
        if free.is_empty() {
            return Ok(FlipPlan::empty());
        }
        let masses = free.iter().map(|&i| dist[i]).collect();
        Ok(FlipPlan::from_weights(free, masses)?)
    }
}

/// Two-way classifier over the final hidden state; ties continue.
#[derive(Debug, Clone)]
pub struct NeuralValidator {
    model: LstmModel,
}

impl NeuralValidator {
    pub fn new(
        bundle: &ModelBundle,
        code: &PolarCode,
        list_size: usize,
    ) -> Result<Self, ScorerError> {
        bundle.check_target(code, list_size)?;
        let model = LstmModel::from_bundle(bundle)?;
        if model.head != HeadKind::Validate {
            return Err(ScorerError::Model(
                "flip validator needs a bundle with a validate head".into(),
            ));
        }
        Ok(Self { model })
    }
}

impl FlipValidator for NeuralValidator {
    fn validate_flip(&self, input: &ScoringInput<'_>) -> Result<FvDecision, ScorerError> {
        let logits = self.model.logits(input.encoding)?;
        let p = softmax(&logits);
        if logits[1] > logits[0] {
            Ok(FvDecision::new(FvAction::Reselect, p[1]))
        } else {
            Ok(FvDecision::new(FvAction::Continue, p[0]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{decode, DecoderConfig, FlipSpec};
    use crate::flip::encode_state;

    fn code() -> PolarCode {
        small_code(4)
    }

    fn small_code(k: usize) -> PolarCode {
        let crc = crate::crc::Crc::new(4, 0x3).unwrap();
        PolarCode::construct(
            16,
            k,
            crc,
            &crate::code::ConstructionMethod::GaussianApproximation,
            2.0,
        )
        .unwrap()
    }

    /// Hidden size 1 with every weight zero except one.
    fn single_unit(output: usize) -> LstmWeights {
        let mut w = LstmWeights::zeros(2, 1, output);
        w.bias_ih = vec![0.0, -100.0, 0.0, 100.0];
        w.weight_ih[4] = 1.0; // g gate <- grad_1
        w
    }

    #[test]
    fn hand_computed_single_step() {
        // One unit, input gate and output gate pinned open, forget gate shut:
        // h = tanh(tanh(x)), so logit = 2 h + 0.5.
        let code = code();
        let mut w = single_unit(1);
        w.bias_ih[0] = 100.0;
        w.head_weight = vec![2.0];
        w.head_bias = vec![0.5];
        let bundle = w.into_bundle(HeadKind::Flip, &code, 1).unwrap();
        let model = LstmModel::from_bundle(&bundle).unwrap();
        let mut values = vec![0.0f32; 32];
        values[3] = 0.7;
        let enc = StateEncoding::from_parts(16, 1, values).unwrap();
        let logits = model.logits(&enc).unwrap();
        assert_eq!(logits.len(), 16);
        let want = 2.0 * (0.7f64.tanh()).tanh() + 0.5;
        assert!((logits[3] as f64 - want).abs() < 1e-6);
        assert!((logits[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn general_recurrence_matches_reference() {
        // Independent scalar re-derivation of the PyTorch cell with nonzero
        // recurrent weights and two hidden units.
        let code = code();
        let (i, h) = (2usize, 2usize);
        let mut w = LstmWeights::zeros(i, h, 2);
        let fill = |v: &mut Vec<f32>, seed: f32| {
            for (k, x) in v.iter_mut().enumerate() {
                *x = ((k as f32 + seed) * 0.37).sin() * 0.8;
            }
        };
        fill(&mut w.weight_ih, 1.0);
        fill(&mut w.weight_hh, 2.0);
        fill(&mut w.bias_ih, 3.0);
        fill(&mut w.bias_hh, 4.0);
        fill(&mut w.head_weight, 5.0);
        fill(&mut w.head_bias, 6.0);
        let weights = w.clone();
        let bundle = w.into_bundle(HeadKind::Validate, &code, 1).unwrap();
        let model = LstmModel::from_bundle(&bundle).unwrap();
        let values: Vec<f32> = (0..32).map(|k| ((k * 7 % 5) as f32 - 2.0) * 0.3).collect();
        let enc = StateEncoding::from_parts(16, 1, values.clone()).unwrap();
        let got = model.logits(&enc).unwrap();

        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let (mut hs, mut cs) = (vec![0.0f64; h], vec![0.0f64; h]);
        for t in 0..16 {
            let x = [values[t] as f64, values[16 + t] as f64];
            let gate = |r: usize| -> f64 {
                let mut s = weights.bias_ih[r] as f64 + weights.bias_hh[r] as f64;
                for j in 0..i {
                    s += weights.weight_ih[r * i + j] as f64 * x[j];
                }
                for j in 0..h {
                    s += weights.weight_hh[r * h + j] as f64 * hs[j];
                }
                s
            };
            let z: Vec<f64> = (0..4 * h).map(gate).collect();
            for k in 0..h {
                cs[k] = sig(z[h + k]) * cs[k] + sig(z[k]) * z[2 * h + k].tanh();
                hs[k] = sig(z[3 * h + k]) * cs[k].tanh();
            }
        }
        for r in 0..2 {
            let mut want = weights.head_bias[r] as f64;
            for k in 0..h {
                want += weights.head_weight[r * h + k] as f64 * hs[k];
            }
            assert!((got[r] as f64 - want).abs() < 1e-5, "{} vs {want}", got[r]);
        }
    }

    #[test]
    fn flip_plan_stays_on_free_positions() {
        let code = code();
        let mut w = single_unit(1);
        w.bias_ih[0] = 100.0;
        w.head_weight = vec![10.0];
        let bundle = w.into_bundle(HeadKind::Flip, &code, 1).unwrap();
        let scorer = NeuralFlipScorer::new(&bundle, &code, 1, 3).unwrap();
        let llrs: Vec<f64> = (0..16).map(|i| (i as f64 - 7.5) * 0.4).collect();
        let st = decode(&code, &llrs, &DecoderConfig::sc(), &FlipSpec::none()).unwrap();
        let enc = encode_state(&st, 1).unwrap();
        let dist = scorer.distribution(&enc).unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let none = FlipSpec::none();
        let plan = scorer
            .score_flips(&ScoringInput {
                code: &code,
                state: &st,
                encoding: &enc,
                flips: &none,
            })
            .unwrap();
        assert_eq!(plan.omega(), 3);
        assert!(plan.positions().iter().all(|&p| code.is_free(p)));
        assert!((plan.likelihoods().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validator_tie_continues() {
        let code = code();
        let bundle = LstmWeights::zeros(2, 1, 2)
            .into_bundle(HeadKind::Validate, &code, 1)
            .unwrap();
        let v = NeuralValidator::new(&bundle, &code, 1).unwrap();
        let st = decode(&code, &[1.0; 16], &DecoderConfig::sc(), &FlipSpec::none()).unwrap();
        let enc = encode_state(&st, 1).unwrap();
        let none = FlipSpec::none();
        let d = v
            .validate_flip(&ScoringInput {
                code: &code,
                state: &st,
                encoding: &enc,
                flips: &none,
            })
            .unwrap();
        assert_eq!(d, FvDecision::new(FvAction::Continue, 0.5));

        let mut w = LstmWeights::zeros(2, 1, 2);
        w.head_bias = vec![0.0, 1.0];
        let bundle = w.into_bundle(HeadKind::Validate, &code, 1).unwrap();
        let d = NeuralValidator::new(&bundle, &code, 1)
            .unwrap()
            .validate_flip(&ScoringInput {
                code: &code,
                state: &st,
                encoding: &enc,
                flips: &none,
            })
            .unwrap();
        assert_eq!(d.action, FvAction::Reselect);
        assert!((d.confidence - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn wrong_target_rejected() {
        let code = code();
        let bundle = LstmWeights::zeros(2, 1, 1)
            .into_bundle(HeadKind::Flip, &code, 1)
            .unwrap();
        let other = small_code(5);
        assert!(NeuralFlipScorer::new(&bundle, &other, 1, 2).is_err());
        assert!(NeuralFlipScorer::new(&bundle, &code, 2, 2).is_err());
        assert!(NeuralValidator::new(&bundle, &code, 1).is_err());
    }
}
