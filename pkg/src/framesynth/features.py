"""Acoustic/linguistic feature types, file formats, and the synthetic corpus.

An utterance is a set of named per-frame feature streams over a common
time axis (5 ms hop): "harmonic" (60 warped log-spectral coefficients),
"aperiodic" (4 band coefficients) and "vuv" (one hard voiced/unvoiced
value in {0, 1}), plus a per-frame linguistic control track and a
per-frame phoneme label track.

The control encoding concatenates one-hot vectors for the previous,
current and next phoneme with a 3-value coarse-coded position, giving
3*|P| + 3 channels for an alphabet of |P| symbols.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import lfilter

from .errors import ConfigError, DomainError, FormatError, SymbolError

HARMONIC_DIM = 60
APERIODIC_DIM = 4
VUV_DIM = 1
STREAM_DIMS = {"harmonic": HARMONIC_DIM, "aperiodic": APERIODIC_DIM, "vuv": VUV_DIM}
STREAM_ORDER = ("harmonic", "aperiodic", "vuv")
SILENCE = "sil"
DEFAULT_HOP_SECONDS = 0.005

_MAGIC = b"NPSF"
_VERSION = 1


def coarse_code_position(p: float) -> np.ndarray:
    """Encode a relative position in [0, 1] as three triangular basis activations.

    The bases are centred at 0, 0.5 and 1 with half-width 0.5, so the
    outputs are non-negative and always sum to 1.
    """
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"position {p} outside [0, 1]")
    out = np.empty(3, dtype=np.float32)
    out[0] = max(0.0, 1.0 - 2.0 * p)
    out[1] = max(0.0, 1.0 - 2.0 * abs(p - 0.5))
    out[2] = max(0.0, 2.0 * p - 1.0)
    return out


def control_dim(alphabet_size: int) -> int:
    return 3 * alphabet_size + 3


def encode_control(prev: str, cur: str, nxt: str, p: float, alphabet) -> np.ndarray:
    """Concatenated prev/cur/next one-hots plus coarse-coded position."""
    index = {s: i for i, s in enumerate(alphabet)}
    n = len(alphabet)
    vec = np.zeros(control_dim(n), dtype=np.float32)
    for block, sym in enumerate((prev, cur, nxt)):
        if sym not in index:
            raise SymbolError(sym)
        vec[block * n + index[sym]] = 1.0
    vec[3 * n:] = coarse_code_position(p)
    return vec


@dataclass
class Utterance:
    """One aligned utterance: feature streams, control track, labels."""

    stream_frames: dict[str, np.ndarray]  # name -> (T, N) float32
    control: np.ndarray  # (T, 3*|P| + 3) float32
    phoneme_labels: np.ndarray  # (T,) int, ids into the corpus alphabet
    hop_seconds: float = DEFAULT_HOP_SECONDS

    @property
    def num_frames(self) -> int:
        return self.control.shape[0]

    @property
    def alphabet_size(self) -> int:
        return (self.control.shape[1] - 3) // 3

    def validate(self):
        if self.hop_seconds <= 0:
            raise DomainError(f"hop_seconds must be positive, got {self.hop_seconds}")
        t = self.num_frames
        for name, frames in self.stream_frames.items():
            if frames.ndim != 2 or frames.shape[0] != t:
                raise DomainError(
                    f"stream {name!r} has shape {frames.shape}, expected ({t}, N)"
                )
            if not np.all(np.isfinite(frames)):
                raise DomainError(f"stream {name!r} contains non-finite values")
        if "vuv" in self.stream_frames:
            vuv = self.stream_frames["vuv"]
            if not np.all((vuv == 0.0) | (vuv == 1.0)):
                raise DomainError("stored vuv values must be exactly 0.0 or 1.0")
        if self.phoneme_labels.shape != (t,):
            raise DomainError("phoneme_labels length does not match frame count")
        if self.control.shape[1] != control_dim(self.alphabet_size):
            raise DomainError("control width is not of the form 3*|P| + 3")


@dataclass
class Corpus:
    """A set of utterances with a shared alphabet and a train/validation split."""

    utterances: list[Utterance]
    phoneme_alphabet: list[str]
    split: list[str]  # per utterance: "train" or "val"
    generator_truth: dict[str, np.ndarray] | None = None
    hop_seconds: float = DEFAULT_HOP_SECONDS

    def indices(self, tag: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == tag]

    def validate(self):
        if len(self.split) != len(self.utterances):
            raise ConfigError("split length does not match utterance count")
        for tag in self.split:
            if tag not in ("train", "val"):
                raise ConfigError(f"unknown split tag {tag!r}")
        n = len(self.utterances)
        n_val = len(self.indices("val"))
        if n >= 5 and abs(n_val - 0.1 * n) > 1.0:
            raise ConfigError(
                f"validation split has {n_val}/{n} utterances, expected ~10%"
            )
        for u in self.utterances:
            u.validate()
            if u.alphabet_size != len(self.phoneme_alphabet):
                raise ConfigError("utterance control width disagrees with alphabet")


# ---------------------------------------------------------------------------
# Feature file format
# ---------------------------------------------------------------------------


class _Reader:
    """Byte cursor that raises FormatError with the offending offset."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self.take(8, what))[0]

    def array(self, count: int, dtype, what: str) -> np.ndarray:
        nbytes = count * np.dtype(dtype).itemsize
        raw = self.take(nbytes, what)
        return np.frombuffer(raw, dtype=dtype).copy()


def write_features(utterance: Utterance, path):
    """Serialize one utterance; read_features(write_features(u)) is bit-exact."""
    utterance.validate()
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<I", _VERSION)
    buf += struct.pack("<d", utterance.hop_seconds)
    buf += struct.pack("<B", len(utterance.stream_frames))
    for name, frames in utterance.stream_frames.items():
        encoded = name.encode("utf-8")
        buf += struct.pack("<B", len(encoded))
        buf += encoded
        t, n = frames.shape
        buf += struct.pack("<II", n, t)
        buf += np.ascontiguousarray(frames, dtype="<f4").tobytes()
    t, dim = utterance.control.shape
    buf += struct.pack("<III", utterance.alphabet_size, dim, t)
    buf += np.ascontiguousarray(utterance.control, dtype="<f4").tobytes()
    buf += struct.pack("<I", t)
    buf += np.ascontiguousarray(utterance.phoneme_labels, dtype="<u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def read_features(path) -> Utterance:
    with open(path, "rb") as fh:
        rd = _Reader(fh.read())
    if rd.take(4, "magic") != _MAGIC:
        raise FormatError("bad magic, not a feature file", 0)
    version = rd.u32("version")
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    hop = rd.f64("hop_seconds")
    streams: dict[str, np.ndarray] = {}
    for _ in range(rd.u8("stream count")):
        name_len = rd.u8("stream name length")
        name = rd.take(name_len, "stream name").decode("utf-8")
        n = rd.u32(f"stream {name} width")
        t = rd.u32(f"stream {name} length")
        data = rd.array(t * n, "<f4", f"stream {name} values")
        streams[name] = data.reshape(t, n)
    alpha = rd.u32("alphabet size")
    dim = rd.u32("control width")
    t = rd.u32("control length")
    if dim != control_dim(alpha):
        raise FormatError(f"control width {dim} inconsistent with |P|={alpha}", rd.pos)
    control = rd.array(t * dim, "<f4", "control values").reshape(t, dim)
    t_labels = rd.u32("label count")
    labels = rd.array(t_labels, "<u2", "labels").astype(np.int64)
    if rd.pos != len(rd.data):
        raise FormatError("trailing bytes after payload", rd.pos)
    utt = Utterance(streams, control, labels, hop)
    utt.validate()
    return utt


def write_corpus(corpus: Corpus, dirpath):
    """Lay a corpus out as a directory: manifest, alphabet, optional templates."""
    corpus.validate()
    os.makedirs(dirpath, exist_ok=True)
    lines = []
    for i, (utt, tag) in enumerate(zip(corpus.utterances, corpus.split)):
        name = f"utt_{i:04d}.npsf"
        write_features(utt, os.path.join(dirpath, name))
        lines.append(f"{name} {tag}\n")
    with open(os.path.join(dirpath, "manifest.txt"), "w") as fh:
        fh.writelines(lines)
    with open(os.path.join(dirpath, "alphabet.txt"), "w") as fh:
        fh.write("".join(s + "\n" for s in corpus.phoneme_alphabet))
    if corpus.generator_truth is not None:
        write_features(_truth_to_utterance(corpus), os.path.join(dirpath, "templates.npsf"))


def read_corpus(dirpath) -> Corpus:
    manifest = os.path.join(dirpath, "manifest.txt")
    if not os.path.exists(manifest):
        raise ConfigError(f"no manifest.txt in {dirpath}")
    with open(os.path.join(dirpath, "alphabet.txt")) as fh:
        alphabet = [line.strip() for line in fh if line.strip()]
    utterances, split = [], []
    with open(manifest) as fh:
        for line in fh:
            if not line.strip():
                continue
            name, tag = line.split()
            utterances.append(read_features(os.path.join(dirpath, name)))
            split.append(tag)
    truth = None
    templates_path = os.path.join(dirpath, "templates.npsf")
    if os.path.exists(templates_path):
        truth = _truth_from_utterance(read_features(templates_path))
    hop = utterances[0].hop_seconds if utterances else DEFAULT_HOP_SECONDS
    corpus = Corpus(utterances, alphabet, split, truth, hop)
    corpus.validate()
    return corpus


def _truth_to_utterance(corpus: Corpus) -> Utterance:
    # Templates ride in an ordinary feature file: one "frame" per phoneme.
    truth = corpus.generator_truth
    p = len(corpus.phoneme_alphabet)
    return Utterance(
        stream_frames={
            "harmonic": truth["harmonic"].astype(np.float32),
            "aperiodic": truth["aperiodic"].astype(np.float32),
            "vuv": truth["voiced"].reshape(-1, 1).astype(np.float32),
        },
        control=np.zeros((p, control_dim(p)), dtype=np.float32),
        phoneme_labels=np.arange(p, dtype=np.int64),
        hop_seconds=corpus.hop_seconds,
    )


def _truth_from_utterance(utt: Utterance) -> dict[str, np.ndarray]:
    return {
        "harmonic": utt.stream_frames["harmonic"],
        "aperiodic": utt.stream_frames["aperiodic"],
        "voiced": utt.stream_frames["vuv"].reshape(-1),
    }


# ---------------------------------------------------------------------------
# Synthetic corpus generator
# ---------------------------------------------------------------------------


@dataclass
class SynthSpec:
    """Parameters of the synthetic stand-in corpus.

    Each phoneme gets one smooth random spectral template and a fixed
    voiced/unvoiced class; utterances are random phoneme sequences
    rendered by cross-faded template interpolation plus low-amplitude
    AR(1) noise.
    """

    n_phonemes: int = 10  # includes the silence symbol
    n_utterances: int = 50
    phones_per_utt: tuple[int, int] = (4, 8)
    dur_frames: tuple[int, int] = (15, 40)
    sil_dur_frames: tuple[int, int] = (10, 20)
    noise_std: float = 0.4
    noise_ar: float = 0.9
    xfade_frames: int = 3
    template_smooth: float = 4.0
    harmonic_base: float = -25.0
    harmonic_spread: float = 8.0
    aperiodic_voiced: float = -18.0
    aperiodic_unvoiced: float = -6.0
    aperiodic_spread: float = 3.0
    voiced_fraction: float = 0.65
    val_fraction: float = 0.1
    hop_seconds: float = DEFAULT_HOP_SECONDS

    def validate(self):
        if self.n_phonemes < 4:
            raise ConfigError("need at least 4 phonemes (including silence)")
        if self.n_utterances < 1:
            raise ConfigError("need at least one utterance")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if not (0 <= self.noise_ar < 1):
            raise ConfigError("noise_ar must lie in [0, 1)")


def _smooth_template(rng, dim, sigma, level, spread):
    raw = rng.standard_normal(dim)
    if sigma > 0:
        raw = gaussian_filter1d(raw, sigma, mode="nearest")
    raw = raw - raw.mean()
    std = raw.std()
    if std > 0:
        raw = raw / std
    return (level + spread * raw).astype(np.float32)


def _ar1_noise(rng, shape, std, a):
    eps = rng.standard_normal(shape)
    if std == 0.0:
        return np.zeros(shape, dtype=np.float32)
    drive = std * np.sqrt(1.0 - a * a) * eps
    drive[0] = std * eps[0]
    out = lfilter([1.0], [1.0, -a], drive, axis=0)
    return out.astype(np.float32)


def build_control_track(segments, alphabet):
    """Expand (symbol, duration) segments into per-frame control and labels.

    Edge segments take themselves as previous/next context.
    """
    index = {s: i for i, s in enumerate(alphabet)}
    for sym, dur in segments:
        if sym not in index:
            raise SymbolError(sym)
        if dur < 1:
            raise ConfigError(f"segment {sym!r} has non-positive duration {dur}")
    n = len(alphabet)
    total = sum(d for _, d in segments)
    control = np.zeros((total, control_dim(n)), dtype=np.float32)
    labels = np.zeros(total, dtype=np.int64)
    t = 0
    for k, (sym, dur) in enumerate(segments):
        prev_sym = segments[k - 1][0] if k > 0 else sym
        next_sym = segments[k + 1][0] if k + 1 < len(segments) else sym
        for j in range(dur):
            p = j / (dur - 1) if dur > 1 else 0.5
            control[t, index[prev_sym]] = 1.0
            control[t, n + index[sym]] = 1.0
            control[t, 2 * n + index[next_sym]] = 1.0
            control[t, 3 * n:] = coarse_code_position(p)
            labels[t] = index[sym]
            t += 1
    return control, labels


def gen_synthetic_corpus(spec: SynthSpec, seed: int) -> Corpus:
    """Deterministically generate a corpus: equal (spec, seed) gives equal bytes."""
    spec.validate()
    rng = np.random.default_rng(seed)
    alphabet = [SILENCE] + [f"p{i:02d}" for i in range(1, spec.n_phonemes)]
    n = spec.n_phonemes

    voiced = np.zeros(n, dtype=bool)
    voiced[1:] = rng.random(n - 1) < spec.voiced_fraction
    if not voiced[1:].any():
        voiced[1] = True
    if voiced[1:].all():
        voiced[n - 1] = False

    harm = np.zeros((n, HARMONIC_DIM), dtype=np.float32)
    aper = np.zeros((n, APERIODIC_DIM), dtype=np.float32)
    for i in range(n):
        level = spec.harmonic_base - 35.0 if i == 0 else spec.harmonic_base
        harm[i] = _smooth_template(
            rng, HARMONIC_DIM, spec.template_smooth, level, spec.harmonic_spread
        )
        ap_level = spec.aperiodic_voiced if voiced[i] else spec.aperiodic_unvoiced
        aper[i] = _smooth_template(rng, APERIODIC_DIM, 1.0, ap_level, spec.aperiodic_spread)
    truth = {"harmonic": harm, "aperiodic": aper, "voiced": voiced.astype(np.float32)}

    utterances = []
    others = list(range(1, n))
    for _ in range(spec.n_utterances):
        n_seg = int(rng.integers(spec.phones_per_utt[0], spec.phones_per_utt[1] + 1))
        phones, last = [], 0
        for _ in range(n_seg):
            choices = [p for p in others if p != last] or others
            last = int(choices[rng.integers(0, len(choices))])
            phones.append(last)
        segments = [(0, int(rng.integers(*spec.sil_dur_frames)))]
        segments += [(p, int(rng.integers(*spec.dur_frames))) for p in phones]
        segments.append((0, int(rng.integers(*spec.sil_dur_frames))))
        utterances.append(_render_utterance(spec, rng, alphabet, segments, harm, aper, voiced))

    n_val = max(1, round(spec.val_fraction * spec.n_utterances))
    n_val = min(n_val, spec.n_utterances - 1) if spec.n_utterances > 1 else n_val
    order = rng.permutation(spec.n_utterances)
    val_set = set(order[:n_val].tolist())
    split = ["val" if i in val_set else "train" for i in range(spec.n_utterances)]

    corpus = Corpus(utterances, alphabet, split, truth, spec.hop_seconds)
    corpus.validate()
    return corpus


def _render_utterance(spec, rng, alphabet, segments, harm, aper, voiced):
    named = [(alphabet[pid], dur) for pid, dur in segments]
    control, labels = build_control_track(named, alphabet)
    t = labels.shape[0]

    harm_track = harm[labels]
    aper_track = aper[labels]
    if spec.xfade_frames > 0:
        # Hann-window smoothing realizes the cross-fade at segment joins.
        win = np.hanning(2 * spec.xfade_frames + 3)[1:-1]
        win = (win / win.sum()).astype(np.float32)
        harm_track = _smooth_time(harm_track, win)
        aper_track = _smooth_time(aper_track, win)
    harm_track = harm_track + _ar1_noise(rng, harm_track.shape, spec.noise_std, spec.noise_ar)
    aper_track = aper_track + _ar1_noise(rng, aper_track.shape, spec.noise_std, spec.noise_ar)
    vuv_track = voiced[labels].astype(np.float32).reshape(t, 1)

    return Utterance(
        stream_frames={
            "harmonic": harm_track.astype(np.float32),
            "aperiodic": aper_track.astype(np.float32),
            "vuv": vuv_track,
        },
        control=control,
        phoneme_labels=labels,
        hop_seconds=spec.hop_seconds,
    )


def _smooth_time(track, win):
    padded = np.pad(track, ((len(win) // 2, len(win) // 2), (0, 0)), mode="edge")
    out = np.empty_like(track)
    for c in range(track.shape[1]):
        out[:, c] = np.convolve(padded[:, c], win, mode="valid")
    return out


def nearest_template(frames: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Classify each frame to the closest template by Euclidean distance."""
    d2 = ((frames[:, None, :] - templates[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)
