"""IDX parsing, binary relabelling and the frozen reference classifier.

Real images enter the experiment only through a ``RelabelPool``: the
normalized inputs and the reference model's P(Y=1 | x) for each of them.
Labels are redrawn as Bernoulli(P(Y=1 | x)) per replication, so the
conditional mean of the relabelled data is known exactly.
"""
from __future__ import annotations

import gzip
import os
import struct
import urllib.request
from dataclasses import dataclass, field

import numpy as np

from .datagen import Dataset
from .nn import Network, TrainConfig, predict, reference_arch, train

IMAGE_MAGIC, LABEL_MAGIC = 0x00000803, 0x00000801

# {0, 2, 3, 4, 6} are tops and coats; the remaining classes map to 1.
FASHION_ZERO_CLASSES = (0, 2, 3, 4, 6)

# Where the official archives can be fetched from; ``fetch_idx`` is never
# called by the library itself.
MIRRORS = {
    "mnist": "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "fashion_mnist": "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
}
FILES = ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz",
         "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz")
SOURCE_TAGS = tuple(MIRRORS)


class IdxFormatError(ValueError):
    pass


class IdxLengthError(IdxFormatError):
    pass


def _open(path):
    return gzip.open(path, "rb") if str(path).endswith(".gz") else open(path, "rb")


def read_idx(path, expected_magic=None):
    """Read an unsigned-byte IDX file (gzip allowed) into a uint8 array.

    The header is a big-endian magic number followed by one big-endian
    uint32 per dimension; the payload must hold exactly prod(dims) bytes.
    """
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxLengthError(f"{path}: truncated header ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    allowed = (IMAGE_MAGIC, LABEL_MAGIC) if expected_magic is None else (expected_magic,)
    if magic not in allowed:
        want = " or ".join(f"0x{m:08x}" for m in allowed)
        raise IdxFormatError(f"{path}: magic number 0x{magic:08x}, expected {want}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IdxLengthError(f"{path}: truncated header, need {head} bytes, have {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) - head != size:
        raise IdxLengthError(
            f"{path}: header declares {size} payload bytes for shape {dims}, file has {len(raw) - head}")
    return np.frombuffer(raw, dtype=np.uint8, offset=head).reshape(dims).copy()


def write_idx(path, array):
    """Serialize a uint8 array of 1 or 3 dimensions as IDX."""
    a = np.asarray(array)
    if a.dtype != np.uint8 or a.ndim not in (1, 3):
        raise ValueError("write_idx takes uint8 arrays of 1 or 3 dimensions")
    magic = LABEL_MAGIC if a.ndim == 1 else IMAGE_MAGIC
    with (gzip.open(path, "wb") if str(path).endswith(".gz") else open(path, "wb")) as fh:
        fh.write(struct.pack(f">I{a.ndim}I", magic, *a.shape))
        fh.write(np.ascontiguousarray(a).tobytes())


@dataclass
class ImageSet:
    images: np.ndarray  # (N, side, side) uint8
    labels: np.ndarray  # (N,) in 0..9
    source_tag: str

    def __post_init__(self):
        if self.source_tag not in SOURCE_TAGS:
            raise ValueError(f"source_tag must be one of {SOURCE_TAGS}")
        if self.images.ndim != 3 or self.images.shape[1] != self.images.shape[2]:
            raise IdxFormatError(f"images must be (N, side, side), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise IdxLengthError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.labels.size and self.labels.max() > 9:
            raise IdxFormatError("labels must lie in 0..9")

    def __len__(self):
        return self.labels.size


def load_image_set(images_path, labels_path, source_tag):
    return ImageSet(read_idx(images_path, IMAGE_MAGIC), read_idx(labels_path, LABEL_MAGIC),
                    source_tag)


def binarize_labels(image_set: ImageSet) -> np.ndarray:
    lab = image_set.labels
    if image_set.source_tag == "mnist":
        return (lab == 1).astype(np.uint8)
    return (~np.isin(lab, FASHION_ZERO_CLASSES)).astype(np.uint8)


def normalize_images(images) -> np.ndarray:
    """uint8 (N, side, side) -> float (N, side*side) in [-1, 1]."""
    a = np.asarray(images, dtype=float)
    return (a / 127.5 - 1.0).reshape(a.shape[0], -1)


@dataclass(frozen=True)
class ReferenceConfig:
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 5e-4
    dropout: float = 0.5
    seed: int = 0
    train_size: int | None = None  # use the first ``train_size`` images only


@dataclass
class ReferenceModel:
    """A trained classifier whose parameters are read-only."""

    network: Network
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.network.params.setflags(write=False)

    def probabilities(self, inputs, chunk=1000):
        x = np.asarray(inputs, dtype=float)
        return np.concatenate([predict(self.network, x[i:i + chunk])
                               for i in range(0, x.shape[0], chunk)]) if x.shape[0] else np.zeros(0)


@dataclass
class _Binary:
    inputs: np.ndarray
    targets: np.ndarray


def _accuracy(model, inputs, labels):
    return float(np.mean((model.probabilities(inputs) >= 0.5) == (labels == 1)))


def train_reference_model(train_set: ImageSet, config=ReferenceConfig(), test_set=None,
                          arch=None) -> ReferenceModel:
    """Fit the binary reference classifier with cross-entropy and Adam.

    ``arch`` defaults to the seven-stage convolutional reference network;
    smaller architectures are accepted for tests. Accuracy on the training
    data (and on ``test_set`` when given) is stored in ``metadata``.
    """
    side = train_set.images.shape[1]
    arch = arch or reference_arch(image_side=side, dropout=config.dropout)
    m = len(train_set) if config.train_size is None else min(config.train_size, len(train_set))
    x = normalize_images(train_set.images[:m])
    y = binarize_labels(train_set)[:m]
    cfg = TrainConfig(config.epochs, config.batch_size, "ce", config.seed, config.learning_rate)
    net = train(arch, cfg, _Binary(x, y.astype(float)))
    model = ReferenceModel(net, {"source_tag": train_set.source_tag, "train_size": m,
                                 "epochs": config.epochs, "seed": config.seed})
    model.metadata["train_accuracy"] = _accuracy(model, x, y)
    if test_set is not None:
        model.metadata["test_accuracy"] = _accuracy(
            model, normalize_images(test_set.images), binarize_labels(test_set))
    return model


@dataclass
class RelabelPool:
    """Normalized images with their fixed P(Y=1 | x) under a reference model."""

    inputs: np.ndarray
    prob: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        if self.prob.shape != (self.inputs.shape[0],):
            raise ValueError("one probability per image is required")
        if np.any((self.prob < 0) | (self.prob > 1)) or not np.all(np.isfinite(self.prob)):
            raise ValueError("probabilities must lie in [0, 1]")

    def __len__(self):
        return self.prob.size


def build_pool(image_set: ImageSet, model: ReferenceModel) -> RelabelPool:
    x = normalize_images(image_set.images)
    return RelabelPool(x, model.probabilities(x), image_set.source_tag)


def relabel_pool(pool: RelabelPool, idx, seed) -> Dataset:
    """Bernoulli labels for ``pool[idx]``; true_mean is the fixed probability."""
    idx = np.asarray(idx)
    p = pool.prob[idx]
    y = (np.random.default_rng(int(seed)).random(p.size) < p).astype(float)
    return Dataset(pool.inputs[idx], y, p, pool.source_tag)


def relabel(image_set: ImageSet, model: ReferenceModel, seed) -> Dataset:
    pool = build_pool(image_set, model)
    return relabel_pool(pool, np.arange(len(pool)), seed)


def fetch_idx(source_tag, dest_dir):
    """Download the four official archives into ``dest_dir``; returns their paths.

    Needs network access. Nothing else in the package downloads data.
    """
    base = MIRRORS[source_tag]
    os.makedirs(dest_dir, exist_ok=True)
    paths = []
    for name in FILES:
        target = os.path.join(dest_dir, name)
        if not os.path.exists(target):
            urllib.request.urlretrieve(base + name, target)
        paths.append(target)
    return paths
