use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;
use svcnet::alignment::SoundId;
use svcnet::corpus::{corpus_from_text, corpus_to_text, generate_corpus, CorpusSpec};
use svcnet::model_io::{model_from_text, model_to_text};
use svcnet::net::{backward, init_network, Activation, LayerSpec, OutputMask};
use svcnet::ppc::PpcVector;
use svcnet::svc::{AccumulateMode, AccumulatorState, SoundLayout};

fn tiny_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        n_speakers: 3,
        n_words: 4,
        n_phones: 5,
        phones_per_word: 2,
        seed,
        ..CorpusSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn running_mean_matches_direct_mean(
        obs in prop::collection::vec((0u32..3, -2.0f64..2.0, -2.0f64..2.0), 1..40)
    ) {
        let sounds: Vec<SoundId> = (0..3).map(|p| SoundId::new(p, 0)).collect();
        let layout = SoundLayout::new(sounds.clone(), 2).unwrap();
        let mut acc = AccumulatorState::new(&layout, AccumulateMode::ZeroFill);
        for &(p, a, b) in &obs {
            acc.accumulate(&layout, SoundId::new(p, 0), &PpcVector(vec![a, b])).unwrap();
        }
        let input = acc.input_vector(&layout);
        for (i, &s) in sounds.iter().enumerate() {
            let seen: Vec<_> = obs.iter().filter(|o| o.0 == i as u32).collect();
            prop_assert_eq!(acc.count(&layout, s).unwrap(), seen.len() as u64);
            for d in 0..2 {
                let want = if seen.is_empty() {
                    0.0
                } else {
                    seen.iter().map(|o| if d == 0 { o.1 } else { o.2 }).sum::<f64>() / seen.len() as f64
                };
                prop_assert!((input[i * 2 + d] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unmasked_targets_do_not_move_gradients(seed in 0u64..500, junk in -5.0f64..5.0) {
        let spec = LayerSpec::uniform(vec![4, 3, 4], Activation::Sigmoid).unwrap();
        let net = init_network(&spec, seed);
        let input = [0.1, 0.9, 0.4, 0.3];
        let mask = OutputMask::new(vec![true, false, true, false]);
        let a = backward(&net, &input, &[0.2, 0.0, 0.7, 0.0], &mask).unwrap();
        let b = backward(&net, &input, &[0.2, junk, 0.7, -junk], &mask).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn feedback_fills_unheard_slots_with_previous_output() {
    let sounds: Vec<SoundId> = (0..3).map(|p| SoundId::new(p, 1)).collect();
    let layout = SoundLayout::new(sounds.clone(), 1).unwrap();
    let mut fb = AccumulatorState::new(&layout, AccumulateMode::Feedback);
    let mut zf = AccumulatorState::new(&layout, AccumulateMode::ZeroFill);
    for acc in [&mut fb, &mut zf] {
        acc.accumulate(&layout, sounds[1], &PpcVector(vec![0.5])).unwrap();
        acc.commit(&[0.1, 0.2, 0.3]).unwrap();
    }
    assert_eq!(fb.input_vector(&layout), vec![0.1, 0.5, 0.3]);
    assert_eq!(zf.input_vector(&layout), vec![0.0, 0.5, 0.0]);
    assert!(fb.commit(&[0.0]).is_err());
}

#[test]
fn corpus_round_trips_through_text() {
    let g = generate_corpus(&tiny_spec(4)).unwrap();
    let text = corpus_to_text(&g.corpus);
    let back = corpus_from_text(&text, Path::new("mem")).unwrap();
    assert_eq!(back, g.corpus);
    assert_eq!(corpus_to_text(&back), text);
}

#[test]
fn generated_corpus_shape() {
    let spec = tiny_spec(9);
    let g = generate_corpus(&spec).unwrap();
    assert_eq!(g.corpus.frames.len(), spec.expected_frames());
    assert_eq!(g.latents.len(), spec.n_speakers);
    assert!(g.latents.iter().all(|z| z.len() == spec.latent_dim));
    let sets: BTreeSet<Vec<u32>> = g
        .lexicon
        .iter()
        .map(|w| {
            let mut w = w.clone();
            w.sort();
            w
        })
        .collect();
    assert_eq!(sets.len(), spec.n_words);
    assert!(g.corpus.frames.iter().all(|f| f.features.len() == spec.feature_dim));
}

#[test]
fn same_seed_same_corpus_other_seed_differs() {
    let a = generate_corpus(&tiny_spec(2)).unwrap();
    let b = generate_corpus(&tiny_spec(2)).unwrap();
    let c = generate_corpus(&tiny_spec(3)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.corpus, c.corpus);
}

#[test]
fn oversized_lexicon_is_rejected() {
    let spec = CorpusSpec {
        n_words: 11,
        ..tiny_spec(1)
    };
    assert!(generate_corpus(&spec).is_err());
}

#[test]
fn model_text_round_trip_is_exact() {
    let spec = LayerSpec::new(vec![3, 2, 3], vec![Activation::Sigmoid, Activation::Linear]).unwrap();
    let net = init_network(&spec, 17);
    let text = model_to_text(&net);
    let back = model_from_text(&text, Path::new("mem")).unwrap();
    assert_eq!(back, net);
    assert!(model_from_text(&text.replace("sigmoid", "relu"), Path::new("mem")).is_err());
}
