use std::fs;
use std::path::Path;

use emoforge::datagen::{gen_corpus, load_corpus, load_wav, write_corpus, CorpusConfig, MANIFEST};

fn small() -> CorpusConfig {
    CorpusConfig {
        samples_per_class: 4,
        seed: 11,
        ..CorpusConfig::default()
    }
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("wavs")] {
        for e in fs::read_dir(&sub).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_writes_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_corpus(&gen_corpus(&small()).unwrap(), a.path()).unwrap();
    write_corpus(&gen_corpus(&small()).unwrap(), b.path()).unwrap();
    let (la, lb) = (listing(a.path()), listing(b.path()));
    assert_eq!(la.len(), 2 + 20);
    assert_eq!(la, lb);
}

#[test]
fn load_round_trips_and_wavs_match_render() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen_corpus(&small()).unwrap();
    write_corpus(&corpus, dir.path()).unwrap();
    let back = load_corpus(dir.path()).unwrap();
    assert_eq!(back.utterances, corpus.utterances);
    let u = &corpus.utterances[7];
    let wav = load_wav(dir.path(), u).unwrap();
    let rendered = corpus.render(u).unwrap();
    let err = wav.samples.iter().zip(&rendered.samples).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err <= 2f64.powi(-15));
}

#[test]
fn truncated_manifest_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&gen_corpus(&small()).unwrap(), dir.path()).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_corpus(dir.path()), Err(emoforge::Error::Format { .. })));
}
