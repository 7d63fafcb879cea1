use emoforge::datagen::{gen_corpus, CorpusConfig};
use emoforge::ep_align::{
    align_infer, eval_alignment, load_checkpoint, save_checkpoint, train_epalign, AlignCheckpoint, Modality,
    TrainAlignConfig,
};

#[test]
fn trained_alignment_generalizes_and_survives_a_checkpoint() {
    let corpus = gen_corpus(&CorpusConfig {
        samples_per_class: 60,
        ..CorpusConfig::default()
    })
    .unwrap();
    let (train, test) = corpus.split();
    let cfg = TrainAlignConfig::default();
    let trained = train_epalign(&train, &cfg).unwrap();
    assert!(trained.loss_curve.last().unwrap() < &trained.initial_loss);
    let eval = eval_alignment(&trained.params, &test, &Modality::ALL).unwrap();
    assert!(eval.accuracy >= 0.9, "{eval:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("align.json");
    save_checkpoint(&path, &AlignCheckpoint::new(trained.params.clone(), cfg.modalities.clone(), cfg.seed)).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    for s in test.iter().take(10) {
        let f = s.features(&Modality::ALL);
        let a = align_infer(&f, &trained.params).unwrap();
        let b = align_infer(&f, &loaded.params).unwrap();
        assert_eq!(a.u_emo, b.u_emo);
        assert_eq!(a.predicted_class, b.predicted_class);
    }
}
