"""Corpus loading: speech-commands trees, JSON-lines manifests with keyword
timestamps, and a deterministic synthetic corpus for desk-scale runs.

The manifest format is one JSON object per line:

    {"path": "go/a.wav", "label": "go", "t_begin": 0.12, "t_end": 0.71,
     "split": "train"}

t_begin/t_end are optional keyword timestamps in seconds. Paths are stored
relative to the manifest file.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .features import FbankConfig, compute_fbank
from .wav import read_wav, write_wav

SPLITS = ("train", "val", "test")


@dataclass
class Sample:
    """One utterance: file reference, class index, split, optional keyword
    timestamps in seconds."""

    audio_path: str
    label: int
    split: str
    t_begin: Optional[float] = None
    t_end: Optional[float] = None


@dataclass
class Manifest:
    """An ordered corpus plus its class vocabulary."""

    samples: list
    classes: list
    sample_rate: int = 16000
    clip_seconds: float = 1.0
    root: Path = field(default=Path("."), compare=False)

    @property
    def n_classes(self):
        return len(self.classes)

    def split(self, name):
        """Samples belonging to one split, in manifest order."""
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [s for s in self.samples if s.split == name]

    def resolve(self, sample: Sample) -> Path:
        return self.root / sample.audio_path


def _validate_sample(path, label_name, split, t_begin, t_end, clip_seconds, where):
    if not isinstance(path, str) or not path:
        raise ValueError(f"{where}: missing or empty 'path'")
    if not isinstance(label_name, str) or not label_name:
        raise ValueError(f"{where}: missing or empty 'label'")
    if split not in SPLITS:
        raise ValueError(f"{where}: split must be one of {SPLITS}, got {split!r}")
    if (t_begin is None) != (t_end is None):
        raise ValueError(f"{where}: t_begin and t_end must be given together")
    if t_begin is not None:
        if not (0.0 <= t_begin < t_end):
            raise ValueError(f"{where}: need 0 <= t_begin < t_end")
        if t_end > clip_seconds:
            raise ValueError(
                f"{where}: t_end {t_end} exceeds the {clip_seconds} s clip"
            )


def load_manifest(path, expected_classes=None, sample_rate=16000,
                  clip_seconds=1.0) -> Manifest:
    """Parse a JSON-lines manifest, validating every line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    entries = []
    label_names = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{where}: malformed JSON ({exc.msg})") from exc
            t_begin = obj.get("t_begin")
            t_end = obj.get("t_end")
            _validate_sample(
                obj.get("path"), obj.get("label"), obj.get("split"),
                t_begin, t_end, clip_seconds, where,
            )
            if expected_classes is not None and obj["label"] not in expected_classes:
                raise ValueError(f"{where}: unknown class {obj['label']!r}")
            label_names.add(obj["label"])
            entries.append((obj["path"], obj["label"], obj["split"], t_begin, t_end))
    classes = list(expected_classes) if expected_classes is not None else sorted(label_names)
    index = {name: i for i, name in enumerate(classes)}
    samples = [
        Sample(audio_path=p, label=index[name], split=sp, t_begin=tb, t_end=te)
        for p, name, sp, tb, te in entries
    ]
    return Manifest(samples, classes, sample_rate, clip_seconds, root=path.parent)


def save_manifest(manifest: Manifest, path):
    """Write the manifest back as JSON lines (one sample per line)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for s in manifest.samples:
            obj = {"path": s.audio_path, "label": manifest.classes[s.label]}
            if s.t_begin is not None:
                obj["t_begin"] = s.t_begin
                obj["t_end"] = s.t_end
            obj["split"] = s.split
            f.write(json.dumps(obj) + "\n")


def load_gsc(root) -> Manifest:
    """Load a Google-Speech-Commands-style directory tree.

    Expects per-keyword subdirectories of WAV files plus validation_list.txt
    and testing_list.txt; everything not listed is a training sample. The
    _background_noise_ directory is ignored.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    lists = {}
    for split, fname in (("val", "validation_list.txt"), ("test", "testing_list.txt")):
        list_path = root / fname
        if not list_path.exists():
            raise FileNotFoundError(f"missing split list: {list_path}")
        with open(list_path, "r", encoding="utf-8") as f:
            lists[split] = {line.strip() for line in f if line.strip()}
    classes = sorted(
        d.name
        for d in root.iterdir()
        if d.is_dir() and d.name != "_background_noise_" and not d.name.startswith(".")
    )
    if not classes:
        raise FileNotFoundError(f"no keyword directories under {root}")
    index = {name: i for i, name in enumerate(classes)}
    samples = []
    for name in classes:
        for wav_path in sorted((root / name).glob("*.wav")):
            rel = f"{name}/{wav_path.name}"
            if rel in lists["val"]:
                split = "val"
            elif rel in lists["test"]:
                split = "test"
            else:
                split = "train"
            samples.append(Sample(audio_path=rel, label=index[name], split=split))
    return Manifest(samples, classes, root=root)


def load_clip(path, sample_rate=16000, clip_seconds=1.0) -> np.ndarray:
    """Read a clip, zero-padding short files to the fixed length; clips
    longer than the fixed length are rejected."""
    samples, _ = read_wav(path, expect_rate=sample_rate)
    target = int(round(sample_rate * clip_seconds))
    if len(samples) > target:
        raise ValueError(f"{path}: clip has {len(samples)} samples, expected <= {target}")
    if len(samples) < target:
        samples = np.concatenate([samples, np.zeros(target - len(samples))])
    return samples


def synth_dataset(n_classes, per_class, seed, out_dir, noise_amp=0.01,
                  chirp_amp=0.5) -> Manifest:
    """Generate a deterministic annotated corpus of chirp keywords.

    Class k is a linear chirp from 300+60k Hz to 600+60k Hz at fixed
    amplitude, lasting 0.4 to 1.0 s, placed at a random offset inside a one
    second clip over low-level noise. The exact onset/offset times are
    recorded as t_begin/t_end. A fixed seed reproduces the corpus byte for
    byte. Splits are assigned round-robin per class at roughly 80/10/10.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    if per_class < 3:
        raise ValueError("per_class must be >= 3 so every split is non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sample_rate = 16000
    clip_len = sample_rate
    rng = np.random.default_rng(seed)
    classes = [f"class{k}" for k in range(n_classes)]
    samples = []
    for k in range(n_classes):
        class_dir = out_dir / classes[k]
        class_dir.mkdir(exist_ok=True)
        f0 = 300.0 + 60.0 * k
        f1 = 600.0 + 60.0 * k
        for j in range(per_class):
            duration = rng.uniform(0.4, 1.0)
            offset = rng.uniform(0.0, 1.0 - duration)
            clip = noise_amp * rng.standard_normal(clip_len)
            n_key = int(round(duration * sample_rate))
            tau = np.arange(n_key) / sample_rate
            phase = 2.0 * np.pi * (f0 * tau + (f1 - f0) * tau**2 / (2.0 * duration))
            # rounding must not push the keyword past the end of the clip
            start = min(int(round(offset * sample_rate)), clip_len - n_key)
            clip[start : start + n_key] += chirp_amp * np.sin(phase)
            rel = f"{classes[k]}/{classes[k]}_{j:04d}.wav"
            write_wav(out_dir / rel, clip, sample_rate)
            if j % 10 == 8:
                split = "val"
            elif j % 10 == 9:
                split = "test"
            else:
                split = "train"
            t_begin = start / sample_rate
            t_end = (start + n_key) / sample_rate
            samples.append(
                Sample(audio_path=rel, label=k, split=split, t_begin=t_begin, t_end=t_end)
            )
    manifest = Manifest(samples, classes, sample_rate, 1.0, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest


def class_balanced_sampler(manifest: Manifest, seed, split="train"):
    """Endless index stream drawing classes uniformly, then a uniform member.

    Yields indices into manifest.samples. Raises if any class has no sample
    in the split.
    """
    by_class = [[] for _ in manifest.classes]
    for i, s in enumerate(manifest.samples):
        if s.split == split:
            by_class[s.label].append(i)
    for k, members in enumerate(by_class):
        if not members:
            raise ValueError(f"class {manifest.classes[k]!r} has no {split} sample")
    rng = np.random.default_rng(seed)
    n_classes = len(by_class)
    while True:
        k = int(rng.integers(n_classes))
        members = by_class[k]
        yield members[int(rng.integers(len(members)))]


def extract_features(manifest: Manifest, split, config: FbankConfig = FbankConfig(),
                     threads=1):
    """Features, labels and annotation frames for one split.

    Returns (features (N, T, F), labels (N,), t_end_frames (N,) with NaN for
    unannotated samples, samples list). Samples are processed in manifest
    order regardless of thread count, so the output is deterministic.
    """
    from .decision import annotation_to_frame  # local import: avoids a cycle

    samples = manifest.split(split)
    if not samples:
        raise ValueError(f"no samples in split {split!r}")
    n_frames = config.n_frames(int(round(manifest.sample_rate * manifest.clip_seconds)))

    def one(sample):
        audio = load_clip(
            manifest.resolve(sample), manifest.sample_rate, manifest.clip_seconds
        )
        return compute_fbank(audio, config)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            feats = list(pool.map(one, samples))
    else:
        feats = [one(s) for s in samples]
    features = np.stack(feats)
    labels = np.array([s.label for s in samples])
    t_end_frames = np.array(
        [
            annotation_to_frame(s.t_end, config, n_frames) if s.t_end is not None
            else math.nan
            for s in samples
        ]
    )
    return features, labels, t_end_frames, samples
