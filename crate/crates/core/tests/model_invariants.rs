mod common;

use candle_core::{DType, Device, Tensor};
use common::{max_abs_diff, split, tiny_run, values};
use fblnet::config::{EncoderMode, FeedbackNode};
use fblnet::data::{make_batch, Split};
use fblnet::harness::{evaluate_model, train, train_step, TrainState};
use fblnet::shape::{shape_plan, Stage};
use fblnet::{FblNet, FusionMode, ModelConfig};

fn images(seed: u64, batch: usize, side: usize) -> Tensor {
    let v = common::uniform(seed, batch * 3 * side * side, 0.0, 1.0);
    Tensor::from_vec(v, (batch, 3, side, side), &Device::Cpu).unwrap()
}

fn model(fusion: FusionMode, dtype: DType) -> FblNet {
    let mut cfg = ModelConfig::with_scale(32, 8);
    cfg.fusion_mode = fusion;
    FblNet::new(&cfg, dtype).unwrap()
}

#[test]
fn every_stage_matches_the_plan() {
    for (s, w) in [(64, 16), (32, 8)] {
        let cfg = ModelConfig::with_scale(s, w);
        let plan = shape_plan(&cfg).unwrap();
        let net = FblNet::new(&cfg, DType::F32).unwrap();
        let out = net.forward(&images(1, 2, s)).unwrap();
        for (i, f) in out.cnn.iter().enumerate() {
            assert_eq!(f.dims(), plan.get(Stage::Cnn(i + 1)).batched(2));
        }
        for (i, f) in out.trans.iter().enumerate() {
            assert_eq!(f.dims(), plan.get(Stage::Trans(i + 1)).batched(2));
        }
        for (j, f) in out.decoder.iter().enumerate() {
            assert_eq!(f.dims(), plan.get(Stage::Decoder(j)).batched(2));
        }
        assert_eq!(out.fused.dims(), plan.knowledge_fusion.batched(2));
        assert_eq!(out.knowledge_fusion.unwrap().dims(), plan.knowledge_fusion.batched(1));
        assert_eq!(net.knowledge.k.dims(), plan.knowledge.dims());
        assert_eq!(out.attention.dims(), [2, 1, s, s]);
    }
}

#[test]
fn fresh_knowledge_is_neutral() {
    let x = images(2, 2, 32);
    for train_mode in [true, false] {
        let (mut a, mut b) = (model(FusionMode::Fbl, DType::F64), model(FusionMode::NoFbl, DType::F64));
        if !train_mode {
            a.eval();
            b.eval();
        }
        let diff = max_abs_diff(&values(&a.predict(&x).unwrap()), &values(&b.predict(&x).unwrap()));
        assert!(diff < 1e-6, "train={train_mode}: {diff}");
    }
}

#[test]
fn no_fbl_ignores_knowledge_contents() {
    let x = images(3, 2, 32);
    let mut m = model(FusionMode::NoFbl, DType::F32);
    m.eval();
    let before = values(&m.predict(&x).unwrap());
    let dims = m.knowledge.k.dims().to_vec();
    m.knowledge.k = common::random_nd(9, &dims).tensor().to_dtype(DType::F32).unwrap();
    assert_eq!(values(&m.predict(&x).unwrap()), before);
}

#[test]
fn knowledge_moves_in_training_and_never_in_evaluation() {
    let run = tiny_run(FusionMode::Fbl, 3);
    let mut st = TrainState::new(&run, DType::F32).unwrap();
    let ds = split(&run, Split::Train);
    train(&mut st, &ds, None, None).unwrap();
    assert!(!st.model.knowledge.is_all_ones().unwrap());
    assert_eq!(st.model.knowledge.iteration, st.step);
    for slot in st.optim.state.values() {
        assert_eq!(slot.steps, st.step);
    }
    let k = values(&st.model.knowledge.k);
    let stats = values(&st.model.knowledge.update.running_mean.get());
    let val = split(&run, Split::Val);
    let opts = st.eval_options();
    let first = evaluate_model(&mut st.model, &val, &opts).unwrap();
    let second = evaluate_model(&mut st.model, &val, &opts).unwrap();
    assert_eq!(values(&st.model.knowledge.k), k);
    assert_eq!(values(&st.model.knowledge.update.running_mean.get()), stats);
    assert_eq!(st.model.knowledge.iteration, 3);
    assert_eq!(first.to_tsv().unwrap(), second.to_tsv().unwrap());
    assert!(st.model.mode().is_train());
}

#[test]
fn iteration_counts_one_per_step_in_fbl_only() {
    for fusion in FusionMode::ALL {
        let run = tiny_run(fusion, 2);
        let mut st = TrainState::new(&run, DType::F32).unwrap();
        let ds = split(&run, Split::Train);
        for step in 1..=2u64 {
            train_step(&mut st, &make_batch(&ds, &[0, 1], DType::F32).unwrap()).unwrap();
            let want = if fusion == FusionMode::Fbl { step } else { 0 };
            assert_eq!(st.model.knowledge.iteration, want, "{fusion}");
        }
    }
}

#[test]
fn every_feedback_node_closes_the_loop() {
    for node in FeedbackNode::ALL {
        let mut run = tiny_run(FusionMode::Fbl, 1);
        run.model.feedback_node = node;
        let mut st = TrainState::new(&run, DType::F32).unwrap();
        let ds = split(&run, Split::Train);
        train_step(&mut st, &make_batch(&ds, &[0, 1], DType::F32).unwrap()).unwrap();
        assert_eq!(st.model.knowledge.k.dims(), st.model.plan.decoder[node.index()].dims());
        assert_eq!(st.model.knowledge.iteration, 1);
    }
}

#[test]
fn encoder_modes_keep_shapes_and_zero_the_missing_pathway() {
    let x = images(4, 2, 32);
    for mode in EncoderMode::ALL {
        let mut cfg = ModelConfig::with_scale(32, 8);
        cfg.encoder_mode = mode;
        let net = FblNet::new(&cfg, DType::F32).unwrap();
        let out = net.forward(&x).unwrap();
        assert_eq!(out.attention.dims(), [2, 1, 32, 32]);
        let zero = |t: &Tensor| values(t).iter().all(|v| *v == 0.0);
        assert_eq!(zero(&out.cnn[3].data), !mode.uses_cnn(), "{mode}");
        assert_eq!(zero(&out.trans[2].data), !mode.uses_trans(), "{mode}");
    }
}

#[test]
fn predictions_are_open_unit_interval_and_batch_independent_in_eval() {
    let mut m = model(FusionMode::Fbl, DType::F64);
    m.eval();
    let x = images(5, 3, 32);
    let batched = values(&m.predict(&x).unwrap());
    assert!(batched.iter().all(|v| *v > 0.0 && *v < 1.0));
    let per = 32 * 32;
    for i in 0..3 {
        let one = values(&m.predict(&x.narrow(0, i, 1).unwrap()).unwrap());
        assert!(max_abs_diff(&one, &batched[i * per..(i + 1) * per]) < 1e-5);
    }
}
