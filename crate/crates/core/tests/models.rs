mod common;

use common::turn;
use ssdmn::autodiff::Matrix;
use ssdmn::data::{builtin_domain, generate, split, Dialog};
use ssdmn::models::{
    predict_dialog, read_checkpoint, train, train_from, write_checkpoint, ModelParams, ModelVariant,
    TrainConfig, TurnPrediction,
};
use ssdmn::Error;

fn predict(params: &ModelParams, dialog: &Dialog) -> Vec<TurnPrediction> {
    predict_dialog(params, &params.prepare(dialog).unwrap()).unwrap()
}

fn max_prob_diff(a: &[TurnPrediction], b: &[TurnPrediction]) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.probabilities.iter().zip(&y.probabilities) {
            for (u, v) in p.iter().zip(q) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    worst
}

#[test]
fn distributions_are_normalized_for_every_variant() {
    for v in ModelVariant::ALL {
        let (params, dialog) = common::tiny_model(v, 1);
        for t in predict(&params, &dialog) {
            for p in &t.probabilities {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(p.iter().all(|x| *x >= 0.0));
            }
        }
    }
}

#[test]
fn zero_context_weights_reduce_to_lstm() {
    let (mut ssdmn, dialog) = common::tiny_model(ModelVariant::Ssdmn, 3);
    ssdmn.w_u = Matrix::zeros(ssdmn.w_u.rows(), ssdmn.w_u.cols());
    ssdmn.w_m = Matrix::zeros(ssdmn.w_m.rows(), ssdmn.w_m.cols());
    let lstm = ModelParams {
        variant: ModelVariant::Lstm,
        ..ssdmn.clone()
    };
    assert_eq!(max_prob_diff(&predict(&ssdmn, &dialog), &predict(&lstm, &dialog)), 0.0);
}

#[test]
fn first_turn_without_prompt_uses_only_hidden_state() {
    let (ssdmn, dialog) = common::tiny_model(ModelVariant::Ssdmn, 5);
    let lstm = ModelParams {
        variant: ModelVariant::Lstm,
        ..ssdmn.clone()
    };
    let a = predict(&ssdmn, &dialog);
    let b = predict(&lstm, &dialog);
    assert_eq!(max_prob_diff(&a[..1], &b[..1]), 0.0);
    assert!(max_prob_diff(&a[1..], &b[1..]) > 0.0);
}

#[test]
fn mns_ignores_system_turns() {
    let (params, dialog) = common::tiny_model(ModelVariant::Mns, 6);
    let mut silent = dialog.clone();
    for t in &mut silent.turns {
        t.system_slots.clear();
        t.system_text.clear();
    }
    assert_eq!(max_prob_diff(&predict(&params, &dialog), &predict(&params, &silent)), 0.0);
}

#[test]
fn mns_s_memory_holds_user_and_prompt_tokens() {
    let (params, dialog) = common::tiny_model(ModelVariant::MnsS, 6);
    let preds = predict(&params, &dialog);
    for (t, p) in preds.iter().enumerate() {
        let users: usize = dialog.turns[..t].iter().map(|x| x.user_tokens.len()).sum();
        let prompts: usize = dialog.turns[..=t].iter().map(|x| x.system_text.len()).sum();
        assert_eq!(p.user_memory.len(), users + prompts, "turn {}", t + 1);
        for row in &p.alpha {
            assert_eq!(row.len(), users + prompts);
        }
    }
}

#[test]
fn last_prompt_variant_matches_single_entry_memory() {
    let (mut ssdmn, _) = common::tiny_model(ModelVariant::Ssdmn, 8);
    ssdmn.w_u = Matrix::zeros(ssdmn.w_u.rows(), ssdmn.w_u.cols());
    let dialog = Dialog {
        id: "x".into(),
        domain: "reservation".into(),
        turns: vec![
            turn("", "hello", "table at pizza hut", "O O B-place I-place"),
            turn("people", "how many people ?", "three", "B-people"),
        ],
    };
    for v in [ModelVariant::Ls, ModelVariant::PreLs] {
        let ls = ModelParams {
            variant: v,
            ..ssdmn.clone()
        };
        let diff = max_prob_diff(&predict(&ssdmn, &dialog), &predict(&ls, &dialog));
        assert!(diff < 1e-15, "{v}: {diff}");
    }
}

#[test]
fn attention_rows_are_distributions() {
    let (params, dialog) = common::tiny_model(ModelVariant::Ssdmn, 9);
    let preds = predict(&params, &dialog);
    assert!(preds[0].alpha.iter().all(Vec::is_empty));
    for p in &preds[1..] {
        for row in p.alpha.iter().chain(&p.beta) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    assert_eq!(preds[2].system_memory, vec![2, 3]);
}

#[test]
fn checkpoint_round_trip() {
    let (params, dialog) = common::tiny_model(ModelVariant::Ssdmn, 10);
    let mut buf = Vec::new();
    write_checkpoint(&params, &mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("{\"format\":\"ssdmn-v1\""));
    let back = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(back, params);
    assert_eq!(predict(&back, &dialog), predict(&params, &dialog));

    let text = String::from_utf8(buf).unwrap();
    let wrong_tag = text.replacen("ssdmn-v1", "ssdmn-v0", 1);
    assert!(matches!(read_checkpoint(wrong_tag.as_bytes()), Err(Error::Checkpoint(_))));
    let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
    assert!(matches!(read_checkpoint(truncated.as_bytes()), Err(Error::Checkpoint(_))));
}

fn small_corpus() -> (Vec<Dialog>, Vec<Dialog>, Vec<Dialog>) {
    let all = generate(&builtin_domain("reservation", 0.5).unwrap(), 40, 4).unwrap();
    split(&all, (0.7, 0.15, 0.15), 4).unwrap()
}

#[test]
fn same_seed_same_training_log() {
    let (tr, dv, _) = small_corpus();
    let config = TrainConfig {
        input_dim: 8,
        hidden_dim: 8,
        max_epochs: 3,
        ..Default::default()
    };
    let a = train(&tr, &dv, None, &config).unwrap();
    let b = train(&tr, &dv, None, &config).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
    let c = train(&tr, &dv, None, &TrainConfig { seed: 8, ..config }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn ls_and_prels_start_apart_only_in_projection() {
    let (tr, _, _) = small_corpus();
    let tags = ssdmn::data::tagset_from_dialogs(&tr).unwrap();
    let base = TrainConfig {
        input_dim: 8,
        hidden_dim: 8,
        ..Default::default()
    };
    let ls = ssdmn::models::init_params(&tr, tags.clone(), &TrainConfig { variant: ModelVariant::Ls, ..base.clone() }).unwrap();
    let pre = ssdmn::models::init_params(&tr, tags, &TrainConfig { variant: ModelVariant::PreLs, ..base }).unwrap();
    for (i, (a, b)) in ls.tensors().iter().zip(pre.tensors()).enumerate() {
        if i == 4 {
            assert_ne!(*a, b);
        } else {
            assert_eq!(*a, b, "tensor {i}");
        }
    }
}

#[test]
fn training_rejects_empty_and_non_finite() {
    let (tr, dv, _) = small_corpus();
    assert!(matches!(train(&[], &dv, None, &TrainConfig::default()), Err(Error::Empty(_))));

    let config = TrainConfig {
        input_dim: 4,
        hidden_dim: 4,
        max_epochs: 1,
        ..Default::default()
    };
    let mut params = train(&tr, &[], None, &config).unwrap().params;
    params.w_h.set(0, 0, f64::NAN);
    match train_from(&mut params, &tr, &[], &config) {
        Err(Error::NonFinite(id)) => assert!(tr.iter().any(|d| d.id == id)),
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn bad_config_is_rejected() {
    let (tr, dv, _) = small_corpus();
    for config in [
        TrainConfig { keep_prob: 0.0, ..Default::default() },
        TrainConfig { lr: -1.0, ..Default::default() },
        TrainConfig { hidden_dim: 0, ..Default::default() },
        TrainConfig { projection_path: Some("/nonexistent/p.txt".into()), ..Default::default() },
    ] {
        assert!(matches!(train(&tr, &dv, None, &config), Err(Error::Config(_))));
    }
}

/// Both readings of a bare "three" occur in training; the prompt decides.
#[test]
fn prompt_disambiguates_bare_number() {
    let all = generate(&builtin_domain("reservation", 0.5).unwrap(), 600, 7).unwrap();
    let (tr, dv, _) = split(&all, (0.8, 0.2, 0.0), 7).unwrap();
    let config = TrainConfig {
        input_dim: 32,
        hidden_dim: 32,
        max_epochs: 15,
        ..Default::default()
    };
    let model = train(&tr, &dv, None, &config).unwrap().params;
    let ask = |slots: &str, prompt: &str| Dialog {
        id: "t1".into(),
        domain: "reservation".into(),
        turns: vec![
            turn("", "how can i help you ?", "book a table at pizza hut", ""),
            turn(slots, prompt, "actually it's three", ""),
        ],
    };
    let people = predict(&model, &ask("number_people", "for how many people ?"));
    assert_eq!(people[1].labels, ["O", "O", "B-number_people"]);
    let time = predict(&model, &ask("time date", "what day and time ?"));
    assert_eq!(time[1].labels, ["O", "O", "B-time"]);

    let closing = Dialog {
        id: "t2".into(),
        domain: "reservation".into(),
        turns: vec![turn("", "anything else ?", "yes please", "")],
    };
    assert_eq!(predict(&model, &closing)[0].labels, ["O", "O"]);
}
