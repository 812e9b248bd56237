"""(sample, user) -> sparse feature vectors: hashed bag-of-words plus one-hot demographics."""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .dataset import Annotator

UNKNOWN = "unknown"
_TOKEN_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class FeatureSpec:
    n_text_buckets: int = 2**18
    demographic_vocab: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    include_demographics: bool = False
    hash_seed: int = 0

    def __post_init__(self):
        n = self.n_text_buckets
        if n < 1 or n & (n - 1):
            raise ValueError(f"n_text_buckets must be a power of two, got {n}")
        object.__setattr__(
            self, "demographic_vocab", {k: tuple(v) for k, v in self.demographic_vocab.items()}
        )

    @property
    def demographic_width(self) -> int:
        if not self.include_demographics:
            return 0
        return sum(len(v) + 1 for v in self.demographic_vocab.values())

    @property
    def width(self) -> int:
        return self.n_text_buckets + self.demographic_width

    def attribute_offsets(self) -> dict[str, int]:
        """Start column of each attribute's one-hot block (values, then the unknown slot)."""
        offsets = {}
        pos = self.n_text_buckets
        for attr, values in self.demographic_vocab.items():
            offsets[attr] = pos
            pos += len(values) + 1
        return offsets

    def with_demographics(self, include: bool) -> "FeatureSpec":
        return FeatureSpec(self.n_text_buckets, self.demographic_vocab, include, self.hash_seed)

    def to_dict(self) -> dict:
        return {
            "n_text_buckets": self.n_text_buckets,
            "demographic_vocab": {k: list(v) for k, v in self.demographic_vocab.items()},
            "include_demographics": self.include_demographics,
            "hash_seed": self.hash_seed,
            "hash": "blake2b-64",
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSpec":
        return cls(
            n_text_buckets=int(d["n_text_buckets"]),
            demographic_vocab={k: tuple(v) for k, v in d.get("demographic_vocab", {}).items()},
            include_demographics=bool(d.get("include_demographics", False)),
            hash_seed=int(d.get("hash_seed", 0)),
        )

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureVector:
    entries: Mapping[int, float]
    width: int

    def __post_init__(self):
        entries = dict(sorted(self.entries.items()))
        for idx, w in entries.items():
            if not 0 <= idx < self.width:
                raise ValueError(f"index {idx} outside width {self.width}")
            if not math.isfinite(w):
                raise ValueError(f"non-finite weight at index {idx}")
        object.__setattr__(self, "entries", entries)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.width)
        for idx, w in self.entries.items():
            out[idx] = w
        return out


def tokenize(text: str) -> list[str]:
    """Lowercase, split on any non-alphanumeric character, drop empties."""
    return _TOKEN_RE.findall(text.lower())


@lru_cache(maxsize=1 << 16)
def _raw_hash(token: str, seed: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little", signed=True)
    ).digest()
    return int.from_bytes(digest, "little")


def token_bucket(token: str, spec: FeatureSpec) -> int:
    return _raw_hash(token, spec.hash_seed) & (spec.n_text_buckets - 1)


def _text_entries(text: str, spec: FeatureSpec) -> dict[int, float]:
    counts = Counter(token_bucket(t, spec) for t in tokenize(text))
    if not counts:
        return {}
    norm = math.sqrt(sum(c * c for c in counts.values()))
    return {b: c / norm for b, c in counts.items()}


def featurize_sample(text: str, spec: FeatureSpec) -> FeatureVector:
    return FeatureVector(_text_entries(text, spec), spec.width)


def demographic_entries(annotator: Annotator | None, spec: FeatureSpec) -> dict[int, float]:
    if not spec.include_demographics:
        return {}
    demo = (annotator.demographics if annotator is not None else None) or {}
    out = {}
    for attr, offset in spec.attribute_offsets().items():
        values = spec.demographic_vocab[attr]
        value = demo.get(attr)
        slot = values.index(value) if value in values else len(values)
        out[offset + slot] = 1.0
    return out


def featurize_pair(text: str, annotator: Annotator | None, spec: FeatureSpec) -> FeatureVector:
    entries = _text_entries(text, spec)
    entries.update(demographic_entries(annotator, spec))
    return FeatureVector(entries, spec.width)


def to_csr(vectors: Sequence[FeatureVector], width: int | None = None) -> sp.csr_matrix:
    """Stack feature vectors row-wise into a CSR matrix."""
    if width is None:
        width = vectors[0].width if vectors else 0
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for v in vectors:
        if v.width != width:
            raise ValueError(f"vector width {v.width} != {width}")
        indices.extend(v.entries.keys())
        data.extend(v.entries.values())
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(vectors), width),
    )


def collision_rate(vocabulary: Iterable[str], spec: FeatureSpec) -> float:
    """Fraction of distinct tokens that share their bucket with another token."""
    tokens = set(vocabulary)
    if not tokens:
        return 0.0
    per_bucket = Counter(token_bucket(t, spec) for t in tokens)
    clashing = sum(c for c in per_bucket.values() if c > 1)
    return clashing / len(tokens)
