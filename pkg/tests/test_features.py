import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framesynth import features
from framesynth.errors import ConfigError, DomainError, FormatError, SymbolError
from framesynth.features import (
    Corpus,
    SynthSpec,
    Utterance,
    build_control_track,
    coarse_code_position,
    control_dim,
    encode_control,
    gen_synthetic_corpus,
    nearest_template,
    read_corpus,
    read_features,
    write_corpus,
    write_features,
)


def triangular_basis(p):
    # Independent statement of the coarse-coding bases used as an oracle.
    centers = [0.0, 0.5, 1.0]
    return np.array([max(0.0, 1.0 - abs(p - c) / 0.5) for c in centers])


def test_coarse_code_boundaries():
    assert np.allclose(coarse_code_position(0.0), [1, 0, 0])
    assert np.allclose(coarse_code_position(0.5), [0, 1, 0])
    assert np.allclose(coarse_code_position(1.0), [0, 0, 1])


def test_coarse_code_quarter():
    expected = triangular_basis(0.25)
    assert np.allclose(expected, [0.5, 0.5, 0.0])
    assert np.allclose(coarse_code_position(0.25), expected)


@given(st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=200, deadline=None)
def test_coarse_code_partition_of_unity(p):
    out = coarse_code_position(p)
    assert np.all(out >= 0)
    assert abs(out.sum() - 1.0) < 1e-6
    assert np.allclose(out, triangular_basis(p), atol=1e-6)


def test_coarse_code_domain_error():
    with pytest.raises(DomainError):
        coarse_code_position(-0.01)
    with pytest.raises(DomainError):
        coarse_code_position(1.01)


ALPHABET10 = ["sil"] + [f"p{i:02d}" for i in range(1, 10)]


def test_encode_control_dimensions_and_ones():
    vec = encode_control("sil", "p01", "p02", 0.0, ALPHABET10)
    assert vec.shape == (33,)
    assert vec[0] == 1.0  # prev block, sil at index 0
    assert vec[10 + 1] == 1.0  # cur block, p01 at index 1
    assert vec[20 + 2] == 1.0  # next block, p02 at index 2
    assert vec[:30].sum() == 3.0


def test_encode_control_identical_symbols():
    vec = encode_control("p03", "p03", "p03", 0.5, ALPHABET10)
    hits = np.flatnonzero(vec[:30])
    assert list(hits) == [3, 13, 23]


def test_encode_control_position_block():
    vec = encode_control("p01", "p02", "p03", 0.25, ALPHABET10)
    assert np.allclose(vec[30:], [0.5, 0.5, 0.0])


def test_encode_control_unknown_symbol():
    with pytest.raises(SymbolError, match="zz"):
        encode_control("p01", "zz", "p02", 0.0, ALPHABET10)


@given(st.integers(min_value=4, max_value=40))
@settings(max_examples=20, deadline=None)
def test_encode_control_length(n):
    alphabet = [f"s{i}" for i in range(n)]
    vec = encode_control(alphabet[0], alphabet[1], alphabet[n - 1], 0.3, alphabet)
    assert vec.shape == (3 * n + 3,)


def random_utterance(rng, t=17, alphabet_size=6):
    streams = {
        "harmonic": rng.standard_normal((t, 60)).astype(np.float32),
        "aperiodic": rng.standard_normal((t, 4)).astype(np.float32),
        "vuv": (rng.random((t, 1)) < 0.5).astype(np.float32),
    }
    segs = [("a0", max(1, t // 2)), ("a1", t - max(1, t // 2))] if t else []
    alphabet = [f"a{i}" for i in range(alphabet_size)]
    if t:
        control, labels = build_control_track(segs, alphabet)
    else:
        control = np.zeros((0, control_dim(alphabet_size)), dtype=np.float32)
        labels = np.zeros(0, dtype=np.int64)
    return Utterance(streams, control, labels)


def test_feature_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    utt = random_utterance(rng)
    path = tmp_path / "u.npsf"
    write_features(utt, path)
    back = read_features(path)
    assert back.hop_seconds == utt.hop_seconds
    assert list(back.stream_frames) == list(utt.stream_frames)
    for name in utt.stream_frames:
        assert np.array_equal(back.stream_frames[name], utt.stream_frames[name])
    assert np.array_equal(back.control, utt.control)
    assert np.array_equal(back.phoneme_labels, utt.phoneme_labels)


def test_feature_roundtrip_empty(tmp_path):
    rng = np.random.default_rng(1)
    utt = random_utterance(rng, t=0)
    path = tmp_path / "empty.npsf"
    write_features(utt, path)
    back = read_features(path)
    assert back.num_frames == 0
    assert back.stream_frames["harmonic"].shape == (0, 60)


def test_feature_bad_magic(tmp_path):
    path = tmp_path / "bad.npsf"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(FormatError) as exc:
        read_features(path)
    assert exc.value.offset == 0


def test_feature_truncated(tmp_path):
    rng = np.random.default_rng(2)
    utt = random_utterance(rng)
    path = tmp_path / "u.npsf"
    write_features(utt, path)
    data = path.read_bytes()
    cut = tmp_path / "cut.npsf"
    cut.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError):
        read_features(cut)


def test_vuv_must_be_hard(tmp_path):
    rng = np.random.default_rng(3)
    utt = random_utterance(rng)
    utt.stream_frames["vuv"][0, 0] = 0.25
    with pytest.raises(DomainError):
        write_features(utt, tmp_path / "u.npsf")


def corpus_bytes(corpus, tmp_path, name):
    d = tmp_path / name
    write_corpus(corpus, d)
    blobs = []
    for p in sorted(d.iterdir()):
        blobs.append((p.name, p.read_bytes()))
    return blobs


def test_synthetic_corpus_determinism(tmp_path):
    spec = SynthSpec(n_utterances=8)
    a = corpus_bytes(gen_synthetic_corpus(spec, seed=1), tmp_path, "a")
    b = corpus_bytes(gen_synthetic_corpus(spec, seed=1), tmp_path, "b")
    assert a == b
    c = corpus_bytes(gen_synthetic_corpus(spec, seed=2), tmp_path, "c")
    assert a != c


def test_corpus_roundtrip(tmp_path):
    spec = SynthSpec(n_utterances=6)
    corpus = gen_synthetic_corpus(spec, seed=5)
    write_corpus(corpus, tmp_path / "corp")
    back = read_corpus(tmp_path / "corp")
    assert back.phoneme_alphabet == corpus.phoneme_alphabet
    assert back.split == corpus.split
    assert len(back.utterances) == len(corpus.utterances)
    assert np.array_equal(back.generator_truth["harmonic"], corpus.generator_truth["harmonic"])
    for u1, u2 in zip(back.utterances, corpus.utterances):
        for name in u1.stream_frames:
            assert np.array_equal(u1.stream_frames[name], u2.stream_frames[name])


def test_corpus_split_disjoint_and_sized():
    corpus = gen_synthetic_corpus(SynthSpec(n_utterances=50), seed=7)
    train = set(corpus.indices("train"))
    val = set(corpus.indices("val"))
    assert not (train & val)
    assert len(train) + len(val) == 50
    assert abs(len(val) - 5) <= 1


def test_noiseless_frames_converge_to_template():
    spec = SynthSpec(n_utterances=3, noise_std=0.0, dur_frames=(30, 40))
    corpus = gen_synthetic_corpus(spec, seed=11)
    harm = corpus.generator_truth["harmonic"]
    utt = corpus.utterances[0]
    labels = utt.phoneme_labels
    # Pick frames deep inside segments: label constant in a wide window.
    for t in range(12, utt.num_frames - 12):
        if np.all(labels[t - 8: t + 9] == labels[t]):
            diff = np.abs(utt.stream_frames["harmonic"][t] - harm[labels[t]]).max()
            assert diff < 1e-4


def test_nearest_template_classification_accuracy():
    spec = SynthSpec(n_utterances=10, noise_std=0.0)
    corpus = gen_synthetic_corpus(spec, seed=13)
    harm = corpus.generator_truth["harmonic"]
    total, correct = 0, 0
    for utt in corpus.utterances:
        pred = nearest_template(utt.stream_frames["harmonic"], harm)
        correct += int((pred == utt.phoneme_labels).sum())
        total += utt.num_frames
    assert correct / total >= 0.99


def test_degenerate_spec_rejected():
    with pytest.raises(ConfigError):
        gen_synthetic_corpus(SynthSpec(n_utterances=0), seed=0)
    with pytest.raises(ConfigError):
        gen_synthetic_corpus(SynthSpec(n_phonemes=2), seed=0)


def test_vuv_classes_both_present():
    corpus = gen_synthetic_corpus(SynthSpec(n_utterances=4), seed=3)
    voiced = corpus.generator_truth["voiced"]
    assert voiced[0] == 0.0  # silence is unvoiced
    assert voiced[1:].max() == 1.0 and voiced[1:].min() == 0.0
