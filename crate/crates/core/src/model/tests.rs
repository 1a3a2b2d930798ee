use super::*;
use crate::numerics::{dot, finite_diff_check, softmax};
use crate::textpipe::{Label, PAD_ID};

fn small_config() -> ModelConfig {
    ModelConfig {
        d_emb: 8,
        prompt_len: 2,
        conv_filters: 4,
        kernel_size: 3,
        pool_size: 2,
        lstm_hidden: 3,
        n_classes: 3,
        keep_prob: 1.0,
        lstm_input_dropout: 0.0,
        seq_len: 6,
        pooling: Pooling::Attention,
        norm_eps: 1e-5,
    }
}

fn random_example(rng: &mut Rng, vocab: usize, seq_len: usize, true_length: usize) -> EncodedExample {
    let mut ids = vec![PAD_ID; seq_len];
    for id in ids.iter_mut().take(true_length) {
        *id = 1 + rng.below(vocab - 1) as u32;
    }
    EncodedExample {
        ids,
        true_length,
        label: Label::from_id(rng.below(3)).unwrap(),
    }
}

fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

fn loss_of(params: &ModelParams, config: &ModelConfig, ex: &EncodedExample, r: &[f64]) -> f64 {
    let logits = predict_logits(params, config, ex).unwrap();
    dot(&logits, r)
}

#[test]
fn init_shapes_and_pad_row() {
    let config = ModelConfig::default();
    let params = init_params(&config, 100, &mut Rng::new(0)).unwrap();
    assert_eq!(params.net.prompt.as_ref().unwrap().shape(), &[10, 300]);
    assert!(params.embedding.row(0).iter().all(|&v| v == 0.0));
    assert!(params
        .embedding
        .data()
        .iter()
        .all(|v| v.abs() <= 0.05));
    let again = init_params(&config, 100, &mut Rng::new(0)).unwrap();
    assert_eq!(params, again);
    let forget = &params.net.lstm_forward.bias.data()[256..512];
    assert!(forget.iter().all(|&b| b == 1.0));
    assert!(params.net.lstm_forward.bias.data()[..256].iter().all(|&b| b == 0.0));
    params.check_shapes(&config).unwrap();
    assert!(init_params(&config, 2, &mut Rng::new(0)).is_err());
}

#[test]
fn recurrent_blocks_are_orthogonal() {
    let config = small_config();
    let params = init_params(&config, 20, &mut Rng::new(4)).unwrap();
    let h = config.lstm_hidden;
    let w = params.net.lstm_backward.w_recurrent.data();
    for gate in 0..4 {
        let block = &w[gate * h * h..(gate + 1) * h * h];
        for i in 0..h {
            for j in 0..h {
                let d = dot(&block[i * h..(i + 1) * h], &block[j * h..(j + 1) * h]);
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn config_validation() {
    let mut c = small_config();
    c.kernel_size = 2;
    assert!(c.validate().is_err());
    let mut c = small_config();
    c.keep_prob = 0.0;
    assert!(c.validate().is_err());
    let mut c = small_config();
    c.lstm_input_dropout = 1.0;
    assert!(c.validate().is_err());
    assert!(small_config().validate().is_ok());
}

#[test]
fn embed_shapes_and_masks() {
    let config = ModelConfig {
        d_emb: 4,
        prompt_len: 2,
        seq_len: 3,
        ..small_config()
    };
    let params = init_params(&config, 10, &mut Rng::new(1)).unwrap();
    let ex = EncodedExample {
        ids: vec![3, 4, PAD_ID],
        true_length: 2,
        label: Label::Normal,
    };
    let (e, mask) = embed_with_prompt(&params, &ex).unwrap();
    assert_eq!(e.shape(), &[5, 4]);
    assert_eq!(mask.flags(), &[true, true, true, true, false]);
    assert_eq!(e.row(0), params.net.prompt.as_ref().unwrap().row(0));
    assert_eq!(e.row(3), params.embedding.row(4));

    let all_pad = EncodedExample {
        ids: vec![PAD_ID; 3],
        true_length: 0,
        label: Label::Normal,
    };
    let (e, mask) = embed_with_prompt(&params, &all_pad).unwrap();
    assert!(e.data()[2 * 4..].iter().all(|&v| v == 0.0));
    assert_eq!(mask.flags(), &[true, true, false, false, false]);

    let bad = EncodedExample {
        ids: vec![10, 0, 0],
        true_length: 1,
        label: Label::Normal,
    };
    assert!(matches!(embed_with_prompt(&params, &bad), Err(Error::InvalidArgument(_))));
}

#[test]
fn conv_identity_kernel_gives_pairwise_maxima() {
    let rows = 6;
    let d = 3;
    let mut rng = Rng::new(2);
    let data: Vec<f64> = (0..rows * d).map(|_| rng.uniform(0.0, 1.0)).collect();
    let embedded = Tensor::from_vec(&[rows, d], data.clone()).unwrap();
    let mut weight = Tensor::zeros(&[1, 1, d]);
    weight.data_mut()[0] = 1.0;
    let bias = Tensor::zeros(&[1]);
    let mask = AttentionMask::new(vec![true; rows]);
    let out = conv_relu_maxpool(&embedded, &mask, &weight, &bias, 2);
    assert_eq!(out.pooled.shape(), &[3, 1]);
    for j in 0..3 {
        let expected = data[2 * j * d].max(data[(2 * j + 1) * d]);
        assert_eq!(out.pooled.data()[j], expected);
    }
}

#[test]
fn conv_relu_zeroes_negative_preactivations() {
    let embedded = Tensor::from_vec(&[4, 2], vec![1.0; 8]).unwrap();
    let mut weight = Tensor::zeros(&[2, 3, 2]);
    weight.fill(-1.0);
    let bias = Tensor::zeros(&[2]);
    let mask = AttentionMask::new(vec![true; 4]);
    let out = conv_relu_maxpool(&embedded, &mask, &weight, &bias, 2);
    assert!(out.pooled.data().iter().all(|&v| v == 0.0));
    // odd length pools to ceil(len / s)
    let embedded = Tensor::from_vec(&[5, 2], vec![1.0; 10]).unwrap();
    let out = conv_relu_maxpool(&embedded, &AttentionMask::new(vec![true; 5]), &weight, &bias, 2);
    assert_eq!(out.pooled.shape(), &[3, 2]);
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut rng = Rng::new(3);
    let (rows, d, filters, kernel) = (12, 5, 4, 3);
    let embedded = Tensor::from_vec(&[rows, d], random_vec(&mut rng, rows * d)).unwrap();
    let mask = AttentionMask::new(vec![true; rows]);
    let params = vec![
        Tensor::from_vec(&[filters, kernel, d], random_vec(&mut rng, filters * kernel * d)).unwrap(),
        Tensor::from_vec(&[filters], random_vec(&mut rng, filters)).unwrap(),
        embedded.clone(),
    ];
    let out = conv_relu_maxpool(&embedded, &mask, &params[0], &params[1], 2);
    assert_eq!(out.pooled.shape(), &[6, filters]);
    let r = random_vec(&mut rng, 6 * filters);
    let (dw, db, de) = conv::conv_backward(&embedded, &params[0], &out.cache, &r);
    let objective = |p: &Vec<Tensor>| {
        let o = conv_relu_maxpool(&p[2], &mask, &p[0], &p[1], 2);
        dot(o.pooled.data(), &r)
    };
    let report = finite_diff_check(objective, &params, &vec![dw, db, de], 1e-6, 1e-4).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn bilstm_zero_parameters_give_zero_states() {
    let fwd = LstmParams::zeros(4, 3);
    let bwd = LstmParams::zeros(4, 3);
    let mut rng = Rng::new(5);
    let xs = random_vec(&mut rng, 5 * 4);
    let (out, _) = bilstm(&fwd, &bwd, &xs, 5);
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn backward_direction_is_forward_over_reversed_input() {
    let config = small_config();
    let params = init_params(&config, 20, &mut Rng::new(6)).unwrap();
    let p = &params.net.lstm_forward;
    let (n, d, h) = (5, config.conv_filters, config.lstm_hidden);
    let mut rng = Rng::new(7);
    let xs = random_vec(&mut rng, n * d);
    let mut reversed = Vec::with_capacity(xs.len());
    for t in (0..n).rev() {
        reversed.extend_from_slice(&xs[t * d..(t + 1) * d]);
    }
    let back = lstm::lstm_forward(p, &xs, n, true);
    let fwd_on_reversed = lstm::lstm_forward(p, &reversed, n, false);
    for t in 0..n {
        assert_eq!(
            &back.hidden[t * h..(t + 1) * h],
            &fwd_on_reversed.hidden[(n - 1 - t) * h..(n - t) * h]
        );
    }
}

#[test]
fn bilstm_gradients_match_finite_differences() {
    let config = small_config();
    let params = init_params(&config, 20, &mut Rng::new(8)).unwrap();
    let (n, d, h) = (5, config.conv_filters, config.lstm_hidden);
    let mut rng = Rng::new(9);
    let xs = random_vec(&mut rng, n * d);
    let r = random_vec(&mut rng, n * 2 * h);
    let f = &params.net.lstm_forward;
    let b = &params.net.lstm_backward;
    let packed = vec![
        f.w_input.clone(),
        f.w_recurrent.clone(),
        f.bias.clone(),
        b.w_input.clone(),
        b.w_recurrent.clone(),
        b.bias.clone(),
        Tensor::from_vec(&[n, d], xs.clone()).unwrap(),
    ];
    let unpack = |p: &Vec<Tensor>| {
        (
            LstmParams {
                w_input: p[0].clone(),
                w_recurrent: p[1].clone(),
                bias: p[2].clone(),
            },
            LstmParams {
                w_input: p[3].clone(),
                w_recurrent: p[4].clone(),
                bias: p[5].clone(),
            },
        )
    };
    let objective = |p: &Vec<Tensor>| {
        let (lf, lb) = unpack(p);
        let (out, _) = bilstm(&lf, &lb, p[6].data(), n);
        dot(&out, &r)
    };
    let (_, cache) = bilstm(f, b, &xs, n);
    let mut gf = LstmParams::zeros(d, h);
    let mut gb = LstmParams::zeros(d, h);
    let dx = lstm::bilstm_backward(f, b, &cache, &xs, &r, &mut gf, &mut gb);
    let grads = vec![
        gf.w_input,
        gf.w_recurrent,
        gf.bias,
        gb.w_input,
        gb.w_recurrent,
        gb.bias,
        Tensor::from_vec(&[n, d], dx).unwrap(),
    ];
    let report = finite_diff_check(objective, &packed, &grads, 1e-6, 1e-4).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn attention_examples() {
    let hidden = vec![0.3, -0.2, 0.9];
    let (c, alpha) =
        attention_pool(&hidden, &[0.5, 0.1, -2.0], &AttentionMask::new(vec![true])).unwrap();
    assert_eq!(alpha, vec![1.0]);
    assert_eq!(c, hidden);

    let mut rng = Rng::new(10);
    let hidden = random_vec(&mut rng, 4 * 2);
    let (c, alpha) = attention_pool(&hidden, &[0.0, 0.0], &AttentionMask::new(vec![true; 4])).unwrap();
    assert!(alpha.iter().all(|&a| (a - 0.25).abs() < 1e-15));
    for k in 0..2 {
        let mean = (0..4).map(|t| hidden[t * 2 + k]).sum::<f64>() / 4.0;
        assert!((c[k] - mean).abs() < 1e-12);
    }

    let (_, alpha) = attention_pool(
        &hidden,
        &[1.0, -1.0],
        &AttentionMask::new(vec![true, true, false, false]),
    )
    .unwrap();
    assert_eq!(&alpha[2..], &[0.0, 0.0]);

    assert!(attention_pool(&hidden, &[1.0, 1.0], &AttentionMask::new(vec![false; 4])).is_err());
}

#[test]
fn attention_gradients_match_finite_differences() {
    let mut rng = Rng::new(11);
    let (t, width) = (4, 6);
    let mask = AttentionMask::new(vec![true, true, true, false]);
    let params = vec![
        Tensor::from_vec(&[width], random_vec(&mut rng, width)).unwrap(),
        Tensor::from_vec(&[t, width], random_vec(&mut rng, t * width)).unwrap(),
    ];
    let r = random_vec(&mut rng, width);
    let objective = |p: &Vec<Tensor>| {
        let (c, _) = attention_pool(p[1].data(), p[0].data(), &mask).unwrap();
        dot(&c, &r)
    };
    let (_, alpha) = attention_pool(params[1].data(), params[0].data(), &mask).unwrap();
    let (dw, dh) = attention::attention_backward(params[1].data(), params[0].data(), &alpha, &r);
    let grads = vec![
        Tensor::from_vec(&[width], dw).unwrap(),
        Tensor::from_vec(&[t, width], dh).unwrap(),
    ];
    let report = finite_diff_check(objective, &params, &grads, 1e-6, 1e-4).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn forward_contract() {
    let config = small_config();
    let params = init_params(&config, 20, &mut Rng::new(12)).unwrap();
    let ex = random_example(&mut Rng::new(13), 20, 6, 4);
    let a = predict_logits(&params, &config, &ex).unwrap();
    let b = predict_logits(&params, &config, &ex).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);
    assert!((softmax(&a).unwrap().iter().sum::<f64>() - 1.0).abs() <= 1e-12);

    let wrong_len = EncodedExample {
        ids: vec![2; 5],
        true_length: 5,
        label: Label::Normal,
    };
    assert!(predict_logits(&params, &config, &wrong_len).is_err());
}

#[test]
fn empty_input_without_prompt_still_classifies() {
    let config = ablation_variant(&small_config(), ModelVariant::NoPrompt);
    let params = init_params(&config, 20, &mut Rng::new(14)).unwrap();
    let ex = EncodedExample {
        ids: vec![PAD_ID; 6],
        true_length: 0,
        label: Label::Normal,
    };
    let (logits, cache) = forward(&params, &config, &ex, Mode::Eval, &mut Rng::new(0)).unwrap();
    assert!(logits.iter().all(|v| v.is_finite()));
    assert_eq!(cache.pooled_mask.valid_len(), 1);
}

#[test]
fn backward_is_linear_in_dlogits() {
    let config = ModelConfig {
        keep_prob: 0.7,
        lstm_input_dropout: 0.2,
        ..small_config()
    };
    let params = init_params(&config, 20, &mut Rng::new(15)).unwrap();
    let ex = random_example(&mut Rng::new(16), 20, 6, 5);
    let (_, cache) = forward(&params, &config, &ex, Mode::Train, &mut Rng::new(17)).unwrap();

    let zero = backward(&cache, &params, &config, &[0.0; 3]).unwrap();
    assert_eq!(zero.sum_squares(), 0.0);

    let d = [0.3, -0.7, 0.4];
    let once = backward(&cache, &params, &config, &d).unwrap();
    let twice = backward(&cache, &params, &config, &[0.6, -1.4, 0.8]).unwrap();
    let mut doubled = once.clone();
    doubled.scale(2.0);
    assert_eq!(doubled, twice);

    // dropped context units pass no gradient to the norm output
    let mask = cache.dropout.as_ref().unwrap();
    let dropped: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == 0.0).collect();
    for &i in &dropped {
        let col: f64 = (0..3)
            .map(|c| once.net.classifier_weight.data()[c * 6 + i].abs())
            .sum();
        assert_eq!(col, 0.0);
    }
}

#[test]
fn backward_rejects_mismatched_cache() {
    let config = small_config();
    let params = init_params(&config, 20, &mut Rng::new(18)).unwrap();
    let ex = random_example(&mut Rng::new(19), 20, 6, 3);
    let (_, cache) = forward(&params, &config, &ex, Mode::Eval, &mut Rng::new(0)).unwrap();
    let other = ModelConfig {
        seq_len: 8,
        ..config.clone()
    };
    assert!(matches!(
        backward(&cache, &params, &other, &[1.0, 0.0, 0.0]),
        Err(Error::InvalidState(_))
    ));
}

fn whole_model_check(seed: u64, pooling: Pooling) -> crate::numerics::GradReport {
    let config = ModelConfig {
        pooling,
        ..small_config()
    };
    let mut rng = Rng::new(seed);
    let params = init_params(&config, 20, &mut rng).unwrap();
    let true_length = 1 + rng.below(6);
    let ex = random_example(&mut rng, 20, 6, true_length);
    let r = random_vec(&mut rng, 3);
    let (_, cache) = forward(&params, &config, &ex, Mode::Train, &mut Rng::new(0)).unwrap();
    let grads = backward(&cache, &params, &config, &r).unwrap();
    let dense = grads.to_dense(20);
    // small steps lose the ~1e-8 recurrent gradients to cancellation, large ones hit kinks
    finite_diff_check(|p| loss_of(p, &config, &ex, &r), &params, &dense, 3e-5, 1e-4).unwrap()
}

#[test]
fn whole_model_gradients_match_finite_differences() {
    for seed in 0..5 {
        let report = whole_model_check(100 + seed, Pooling::Attention);
        assert!(report.passed, "seed {seed}: {report:?}");
    }
    let report = whole_model_check(200, Pooling::Mean);
    assert!(report.passed, "{report:?}");
}

#[test]
fn prompt_receives_gradient() {
    let config = small_config();
    let mut nonzero = 0;
    for seed in 0..5 {
        let mut rng = Rng::new(300 + seed);
        let params = init_params(&config, 20, &mut rng).unwrap();
        let ex = random_example(&mut rng, 20, 6, 4);
        let (_, cache) = forward(&params, &config, &ex, Mode::Train, &mut rng).unwrap();
        let grads = backward(&cache, &params, &config, &[0.2, -0.5, 0.3]).unwrap();
        if grads.net.prompt.as_ref().unwrap().sum_squares().sqrt() > 1e-12 {
            nonzero += 1;
        }
    }
    assert!(nonzero >= 4);
}

#[test]
fn pad_row_never_gets_gradient() {
    let config = small_config();
    let params = init_params(&config, 20, &mut Rng::new(20)).unwrap();
    let ex = random_example(&mut Rng::new(21), 20, 6, 2);
    let (_, cache) = forward(&params, &config, &ex, Mode::Eval, &mut Rng::new(0)).unwrap();
    let grads = backward(&cache, &params, &config, &[1.0, -1.0, 0.5]).unwrap();
    assert!(!grads.embedding_rows.contains_key(&PAD_ID));
    assert!(grads.embedding_rows.keys().all(|id| ex.ids[..2].contains(id)));
}

#[test]
fn ablation_variants() {
    let base = small_config();
    assert_eq!(ablation_variant(&base, ModelVariant::Full), base);
    let np = ablation_variant(&base, ModelVariant::NoPrompt);
    assert_eq!(np.input_len(), np.seq_len);
    let params = init_params(&np, 20, &mut Rng::new(22)).unwrap();
    let ex = random_example(&mut Rng::new(23), 20, 6, 6);
    let (e, _) = embed_with_prompt(&params, &ex).unwrap();
    assert_eq!(e.shape()[0], 6);

    let na = ablation_variant(&base, ModelVariant::NoAttention);
    let mut params = init_params(&na, 20, &mut Rng::new(24)).unwrap();
    let ex = random_example(&mut Rng::new(25), 20, 6, 3);
    let (_, cache) = forward(&params, &na, &ex, Mode::Eval, &mut Rng::new(0)).unwrap();
    let live: Vec<usize> = cache.pooled_mask.positions().collect();
    let width = na.context_width();
    for k in 0..width {
        let mean = live
            .iter()
            .map(|&t| cache.hidden.data()[t * width + k])
            .sum::<f64>()
            / live.len() as f64;
        assert!((cache.context[k] - mean).abs() <= 1e-12);
    }
    // the attention vector has no effect
    params.net.attention.fill(3.0);
    let (_, again) = forward(&params, &na, &ex, Mode::Eval, &mut Rng::new(0)).unwrap();
    assert_eq!(again.context, cache.context);

    assert!("no_everything".parse::<ModelVariant>().is_err());
    assert_eq!("no_prompt".parse::<ModelVariant>().unwrap(), ModelVariant::NoPrompt);
}

#[test]
fn extra_padding_leaves_logits_unchanged() {
    let config = small_config();
    let longer = ModelConfig {
        seq_len: 11,
        ..config.clone()
    };
    let params = init_params(&config, 20, &mut Rng::new(26)).unwrap();
    for seed in 0..20 {
        let mut rng = Rng::new(400 + seed);
        let true_length = rng.below(7);
        let ex = random_example(&mut rng, 20, 6, true_length);
        let mut padded = ex.clone();
        padded.ids.resize(11, PAD_ID);
        let a = predict_logits(&params, &config, &ex).unwrap();
        let b = predict_logits(&params, &longer, &padded).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9);
        }
    }
}

