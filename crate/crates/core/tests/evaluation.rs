use cadet_core::data::{generate_synthetic, SyntheticSpec};
use cadet_core::eval::{
    export_latents, predict_with_factors, run_ablation, run_ablation_grid, run_transfer, Factor,
};
use cadet_core::train::Trainer;
use cadet_core::{CadetModel, Config, Corpus, Error, LossName, Style};

fn corpus(n: usize) -> Corpus {
    generate_synthetic(&SyntheticSpec::default(), n).unwrap().corpus
}

fn quick() -> Config {
    let mut c = Config::tiny();
    c.train.max_epochs = 2;
    c.train.batch_size = 16;
    c.train.val_fraction = 0.2;
    c
}

#[test]
fn single_run_transfer_report() {
    let report = run_transfer(&quick(), &corpus(120), Style::Explicit, 1).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.target_style, Style::Implicit);
    let m = report.runs[0].metrics;
    assert!(m.precision.is_finite() && m.recall.is_finite() && m.macro_f1.is_finite());
    assert_eq!(report.runs[0].test_size, corpus(120).style_counts().get(Style::Implicit));
}

#[test]
fn transfer_mean_is_the_run_average_and_reproducible() {
    let data = corpus(120);
    let report = run_transfer(&quick(), &data, Style::Explicit, 3).unwrap();
    let mean = report.runs.iter().map(|r| r.metrics.macro_f1).sum::<f64>() / 3.0;
    assert!((report.mean.macro_f1 - mean).abs() < 1e-9);
    assert_eq!(report.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(run_transfer(&quick(), &data, Style::Explicit, 3).unwrap(), report);
}

#[test]
fn identity_ablation_has_zero_deltas() {
    let report = run_ablation_grid(&quick(), &corpus(120), Style::Explicit, &[vec![]], 1).unwrap();
    let d = report.rows[0].delta;
    assert_eq!((d.precision, d.recall, d.macro_f1), (0.0, 0.0, 0.0));
}

#[test]
fn ablation_rows_carry_their_disabled_set() {
    let report = run_ablation(&quick(), &corpus(120), Style::Explicit, &[LossName::Cf, LossName::Cycle], 1).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].disabled, vec![LossName::Cf, LossName::Cycle]);
    assert_eq!(report.rows[0].report.disabled, vec![LossName::Cf, LossName::Cycle]);
    assert!(report.full.disabled.is_empty());
}

#[test]
fn unknown_loss_names_list_the_valid_ones() {
    let err = LossName::parse_list("cf,nope").unwrap_err();
    assert!(matches!(err, Error::UnknownLoss(_)));
    let msg = err.to_string();
    for n in LossName::ALL {
        assert!(msg.contains(n.as_str()), "{msg}");
    }
}

#[test]
fn export_has_one_deterministic_row_per_record() {
    let data = corpus(30);
    let config = quick();
    let model = CadetModel::for_corpora(&config, &[&data]).unwrap();
    for (factor, width) in [
        (Factor::M, config.latent.dim_m),
        (Factor::T, data.target_group_count()),
        (Factor::S, 2),
        (Factor::U, config.latent.dim_u),
    ] {
        let a = export_latents(&model, &data, factor).unwrap();
        assert_eq!(a.len(), data.len());
        assert_eq!(a.width(), width);
        assert_eq!(a, export_latents(&model, &data, factor).unwrap());
    }
    assert_eq!(Config::default().latent.dim_m, 768);
    assert!("w".parse::<Factor>().is_err());
}

#[test]
fn readout_recovers_injected_explicit_markers() {
    let data = corpus(400);
    let mut config = Config::toy();
    config.train.max_epochs = 4;
    let model = CadetModel::for_corpora(&config, &[&data]).unwrap();
    // Rising scores keep the last epoch.
    let mut epoch = 0.0;
    let model = Trainer::new(model)
        .unwrap()
        .fit(&data, |_| {
            epoch += 1.0;
            Ok(epoch)
        })
        .unwrap()
        .model;

    let readout = predict_with_factors(&model, "sexp_1 sexp_4 mbenign_2 tgt0_1 plat1_0 fill_3").unwrap();
    let sum: f64 = readout.style_probs.values().sum();
    assert!((sum - 1.0).abs() < 1e-6);
    assert!(readout.style_probs["explicit"] > readout.style_probs["implicit"], "{readout:?}");
    assert_eq!(readout.target_probs.len(), data.target_group_count());
    let implicit = predict_with_factors(&model, "simp_1 simp_4 mbenign_2 tgt0_1 plat0_0 fill_3").unwrap();
    assert!(implicit.style_probs["implicit"] > implicit.style_probs["explicit"], "{implicit:?}");
    assert!(predict_with_factors(&model, "").is_err());
}
