"""On-disk formats, dataset splits, and the synthetic hypersphere-mixture generator.

EMB1 binary layout (little-endian):
    bytes 0-3    ASCII magic "EMB1"
    bytes 4-7    uint32 version (= 1)
    bytes 8-15   uint64 row count N
    bytes 16-19  uint32 dimension d
    then N*d float32 values, row-major

Manifest text layout: header ``index,gt_class,is_known_class,split`` followed
by one record per line, ``is_known_class`` in {0,1} and ``split`` in
{labeled, unlabeled, validation}.

Storage is float32; all in-memory computation is float64.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    EmbeddingCorruptionError,
    EmbeddingFormatError,
    HiddenLabelError,
    InfeasibleConfigError,
    ManifestError,
)

EMB1_MAGIC = b"EMB1"
EMB1_VERSION = 1
UNIT_NORM_TOL = 1e-5

SPLIT_LABELED = "labeled"
SPLIT_UNLABELED = "unlabeled"
SPLIT_VALIDATION = "validation"
SPLITS = (SPLIT_LABELED, SPLIT_UNLABELED, SPLIT_VALIDATION)


@dataclass(frozen=True)
class EmbeddingBank:
    """Matrix of unit-norm feature vectors; the search space for kNN retrieval."""

    vectors: np.ndarray  # (N, d) float64, rows unit L2 norm
    renormalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"expected 2-d matrix, got shape {v.shape}")
        object.__setattr__(self, "vectors", v)
        if v.shape[0] > 0:
            norms = np.linalg.norm(v, axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
                worst = int(np.argmax(np.abs(norms - 1.0)))
                raise ValueError(
                    f"row {worst} has norm {norms[worst]:.6g}, "
                    f"outside unit tolerance {UNIT_NORM_TOL:g}"
                )

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def normalize_rows(matrix: np.ndarray, zero_tol: float = 0.0) -> np.ndarray:
    """L2-normalize each row; raises DegenerateInputError on a zero-norm row."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms <= zero_tol):
        bad = int(np.argmin(norms))
        raise DegenerateInputError(f"row {bad} has zero norm")
    return m / norms[:, None]


def load_embedding_bank(path) -> EmbeddingBank:
    """Read an EMB1 file.

    Rows whose stored norm deviates from 1.0 by more than ``UNIT_NORM_TOL``
    trigger a full renormalization pass, recorded on the returned bank.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20:
        raise EmbeddingFormatError(f"{path}: file shorter than the 20-byte header")
    magic = blob[:4]
    if magic != EMB1_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != EMB1_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    (count,) = struct.unpack_from("<Q", blob, 8)
    (dim,) = struct.unpack_from("<I", blob, 16)
    if dim == 0:
        raise EmbeddingFormatError(f"{path}: dimension must be positive")
    expected = count * dim * 4
    payload = blob[20:]
    if len(payload) != expected:
        raise EmbeddingCorruptionError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    vectors = flat.astype(np.float64).reshape(count, dim) if count else np.zeros((0, dim))
    renormalized = False
    if count:
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0.0):
            bad = int(np.argmin(norms))
            raise DegenerateInputError(f"{path}: row {bad} has zero norm")
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            vectors = vectors / norms[:, None]
            renormalized = True
    return EmbeddingBank(vectors=vectors, renormalized=renormalized)


def save_embedding_bank(bank: EmbeddingBank, path) -> None:
    """Write an EMB1 file; load(save(bank)) reproduces the float32 payload bit-for-bit."""
    header = EMB1_MAGIC + struct.pack("<IQI", EMB1_VERSION, bank.count, bank.dim)
    payload = np.ascontiguousarray(bank.vectors, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


@dataclass(frozen=True)
class ManifestItem:
    index: int
    gt_class: int
    is_known_class: bool
    split: str


class DatasetManifest:
    """Per-item ground truth, known/unknown flag, and split assignment.

    Ground-truth classes of unlabeled items are readable here (evaluation
    side); training and inference code receives a :class:`ManifestView`
    with those labels hidden.
    """

    def __init__(self, items: list[ManifestItem]):
        n = len(items)
        seen = set()
        for it in items:
            if it.split not in SPLITS:
                raise ManifestError(f"item {it.index}: unknown split {it.split!r}")
            if it.index in seen:
                raise ManifestError(f"duplicate index {it.index}")
            seen.add(it.index)
            if it.split == SPLIT_LABELED and not it.is_known_class:
                raise ManifestError(
                    f"item {it.index} is labeled but marked unknown-class"
                )
        if seen != set(range(n)):
            missing = sorted(set(range(n)) - seen)
            raise ManifestError(f"indices are not 0..{n - 1}: missing {missing[:5]}")
        ordered = sorted(items, key=lambda it: it.index)
        self.items = ordered
        self.gt_class = np.array([it.gt_class for it in ordered], dtype=np.int64)
        self.is_known_class = np.array([it.is_known_class for it in ordered], dtype=bool)
        self.split = np.array([it.split for it in ordered])

    def __len__(self) -> int:
        return len(self.items)

    def indices_of(self, split: str) -> np.ndarray:
        return np.nonzero(self.split == split)[0]

    def unlabeled_indices(self) -> np.ndarray:
        return self.indices_of(SPLIT_UNLABELED)

    def labeled_indices(self) -> np.ndarray:
        return self.indices_of(SPLIT_LABELED)

    def validation_indices(self) -> np.ndarray:
        return self.indices_of(SPLIT_VALIDATION)

    def num_classes(self) -> int:
        return len(np.unique(self.gt_class))

    def training_view(self) -> "ManifestView":
        return ManifestView(self)


class ManifestView:
    """Label-access boundary handed to training and inference code.

    A label is visible iff the item is in the labeled split, or in the
    validation split and of a known class (the known-labeled validation
    images). Any other label request raises and is therefore impossible to
    use silently; successful reads are logged for instrumentation.
    """

    def __init__(self, manifest: DatasetManifest):
        self._manifest = manifest
        self.split = manifest.split
        self.visible = (manifest.split == SPLIT_LABELED) | (
            (manifest.split == SPLIT_VALIDATION) & manifest.is_known_class
        )
        self.reads: list[int] = []

    def __len__(self) -> int:
        return len(self._manifest)

    def label_of(self, index: int) -> int:
        if not self.visible[index]:
            raise HiddenLabelError(
                f"ground-truth label of item {index} (split={self.split[index]}) is hidden"
            )
        self.reads.append(int(index))
        return int(self._manifest.gt_class[index])

    def visible_labels(self, indices: np.ndarray) -> list[int | None]:
        """Labels for a batch; None where hidden. Visible reads are logged."""
        return [self.label_of(i) if self.visible[i] else None for i in indices]

    def train_indices(self) -> np.ndarray:
        """Items participating in training and final clustering (labeled + unlabeled)."""
        return np.nonzero(self.split != SPLIT_VALIDATION)[0]

    def labeled_indices(self) -> np.ndarray:
        return self._manifest.labeled_indices()

    def validation_indices(self) -> np.ndarray:
        return self._manifest.validation_indices()

    def labeled_validation_indices(self) -> np.ndarray:
        val = self.split == SPLIT_VALIDATION
        return np.nonzero(val & self.visible)[0]


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "index,gt_class,is_known_class,split":
        raise ManifestError(f"{path}: missing or bad header line")
    items = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise ManifestError(f"{path}: bad record {ln!r}")
        try:
            index = int(parts[0])
            gt = int(parts[1])
            known = int(parts[2])
        except ValueError as exc:
            raise ManifestError(f"{path}: non-integer field in {ln!r}") from exc
        if known not in (0, 1):
            raise ManifestError(f"{path}: is_known_class must be 0 or 1 in {ln!r}")
        items.append(ManifestItem(index, gt, bool(known), parts[3]))
    return DatasetManifest(items)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,gt_class,is_known_class,split\n")
        for it in manifest.items:
            fh.write(f"{it.index},{it.gt_class},{int(it.is_known_class)},{it.split}\n")


@dataclass(frozen=True)
class SyntheticConfig:
    """Desk-scale surrogate for the image benchmarks: a mixture on the unit sphere."""

    num_classes: int
    dim: int
    per_class: int
    center_max_cosine: float = 0.2
    noise_scale: float = 0.1
    known_fraction: float = 0.5
    labeled_fraction: float = 0.5
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.dim < 1 or self.per_class < 1:
            raise InfeasibleConfigError("num_classes, dim, per_class must be positive")
        if not -1.0 <= self.center_max_cosine <= 1.0:
            raise InfeasibleConfigError("center_max_cosine must lie in [-1, 1]")
        if self.noise_scale < 0:
            raise InfeasibleConfigError("noise_scale must be non-negative")
        if not 0.0 < self.known_fraction <= 1.0:
            raise InfeasibleConfigError("known_fraction must lie in (0, 1]")
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise InfeasibleConfigError("labeled_fraction must lie in (0, 1]")
        if not 0.0 <= self.val_fraction < 1.0:
            raise InfeasibleConfigError("val_fraction must lie in [0, 1)")


MAX_CENTER_ATTEMPTS = 100_000


def _sample_centers(cfg: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample unit vectors whose pairwise cosines stay below the cap."""
    centers = np.zeros((cfg.num_classes, cfg.dim))
    accepted = 0
    for _ in range(MAX_CENTER_ATTEMPTS):
        cand = rng.standard_normal(cfg.dim)
        norm = np.linalg.norm(cand)
        if norm == 0.0:
            continue
        cand /= norm
        if accepted == 0 or np.all(centers[:accepted] @ cand <= cfg.center_max_cosine):
            centers[accepted] = cand
            accepted += 1
            if accepted == cfg.num_classes:
                return centers
    raise InfeasibleConfigError(
        f"could not place {cfg.num_classes} centers with pairwise cosine "
        f"<= {cfg.center_max_cosine} in {MAX_CENTER_ATTEMPTS} attempts"
    )


def generate_synthetic(cfg: SyntheticConfig) -> tuple[EmbeddingBank, DatasetManifest]:
    """Deterministic mixture of tangent-noise perturbations around sphere centers.

    Splits per class block (items of class c occupy indices
    [c*per_class, (c+1)*per_class)):
      - the first floor(val_fraction*per_class) items go to validation,
      - for known classes the next ceil(labeled_fraction*per_class) items are
        labeled,
      - everything else is unlabeled.
    Carving validation out first keeps the labeled-split count at exactly
    ceil(labeled_fraction*per_class) per known class; validation items of
    known classes play the known-labeled role (their labels stay visible).
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    centers = _sample_centers(cfg, rng)

    n_val = math.floor(cfg.val_fraction * cfg.per_class)
    n_lab = math.ceil(cfg.labeled_fraction * cfg.per_class)
    n_known = math.ceil(cfg.known_fraction * cfg.num_classes)
    if n_val + n_lab > cfg.per_class:
        raise InfeasibleConfigError(
            f"per-class validation ({n_val}) + labeled ({n_lab}) quota "
            f"exceeds per_class ({cfg.per_class})"
        )

    vectors = np.zeros((cfg.num_classes * cfg.per_class, cfg.dim))
    items = []
    for c in range(cfg.num_classes):
        center = centers[c]
        known = c < n_known
        for j in range(cfg.per_class):
            idx = c * cfg.per_class + j
            if cfg.noise_scale > 0.0:
                g = rng.standard_normal(cfg.dim)
                tangent = g - (g @ center) * center
                x = center + cfg.noise_scale * tangent
                x /= np.linalg.norm(x)
            else:
                x = center
            vectors[idx] = x
            if j < n_val:
                split = SPLIT_VALIDATION
            elif known and j < n_val + n_lab:
                split = SPLIT_LABELED
            else:
                split = SPLIT_UNLABELED
            items.append(ManifestItem(idx, c, known, split))

    return EmbeddingBank(vectors=vectors), DatasetManifest(items)
