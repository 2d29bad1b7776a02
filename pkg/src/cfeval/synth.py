"""Planted-marker synthetic benchmark and the FakeMNIST constructor.

The world is a Gaussian mixture whose class centroids carry signal in two
places: a small block of marker dims and the remaining dims. A *flawed*
classifier looks only at the markers and plays the model being explained. An
*oracle* looks at every dim. Three counterfactual simulators span the range
from adversarial-like edits (``tiny``) to realistic moves toward the target
prototype (``prototype``), with ``mid`` in between.

Randomness
----------
Every random draw comes from a named stream::

    Generator(Philox(SeedSequence(seed, spawn_key=(crc32(name),))))

Philox-4x64 is counter based, and the stream key is the CRC-32 of the UTF-8
stream name, so adding a new stream never shifts existing ones.
"""

import warnings
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .data import (
    EvaluationBundle,
    LabelOracleOutputs,
    ReconstructionTriplet,
    TensorSet,
    validate_bundle,
)
from .errors import (
    AlreadyTarget,
    DimensionMismatch,
    NoValidAlpha,
    SpecInvalid,
    TooNarrow,
    UnknownAttribute,
    ValidationFailed,
)

__all__ = [
    "SyntheticSpec",
    "SyntheticWorld",
    "LinearAutoencoder",
    "METHODS",
    "stream",
    "gen_world",
    "classify",
    "label_oracle",
    "reconstruct",
    "embed",
    "cf_tiny_change",
    "cf_prototype_blend",
    "cf_mid",
    "make_fakemnist",
    "build_bundle",
    "rescale_bundle",
]

METHODS = ("tiny", "mid", "prototype")
ALPHA_GRID = tuple(k / 20 for k in range(1, 21))
TINY_MARGIN = 1e-3


def stream(seed, name):
    """Independent generator for the stream ``name`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SyntheticSpec:
    n_per_class: int = 200
    dim: int = 64
    classes: int = 5
    marker_dims: int = 8
    class_separation: float = 10.0
    noise_sd: float = 1.0
    seed: int = 0
    # share of the squared centroid separation carried by the marker block
    marker_share: float = 0.8
    n_attributes: int = 3

    def validate(self):
        problems = []
        if self.classes < 2:
            problems.append("classes must be >= 2")
        if not 1 <= self.marker_dims < self.dim:
            problems.append("need 1 <= marker_dims < dim")
        if not self.class_separation > 0:
            problems.append("class_separation must be > 0")
        if not self.noise_sd > 0:
            problems.append("noise_sd must be > 0")
        if not 0 < self.marker_share < 1:
            problems.append("marker_share must lie in (0, 1)")
        if self.n_per_class < 2:
            problems.append("n_per_class must be >= 2")
        if self.n_attributes < 1:
            problems.append("n_attributes must be >= 1")
        elif self.dim - (self.classes - 1) < self.n_attributes - 1:
            problems.append("dim too small for the requested number of orthogonal attributes")
        if not 0 <= int(self.seed) < 2**64:
            problems.append("seed must be an unsigned 64-bit integer")
        if problems:
            raise SpecInvalid("; ".join(problems))
        return self


@dataclass(frozen=True, eq=False)
class LinearAutoencoder:
    """Rank-k orthogonal projector around ``mean``."""

    mean: np.ndarray
    components: np.ndarray  # k x dim, orthonormal rows
    k: int


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    spec: SyntheticSpec
    data: TensorSet
    labels: np.ndarray
    centroids: np.ndarray
    flawed_centroids: np.ndarray
    label_directions: np.ndarray
    label_anchor: np.ndarray
    autoencoders: tuple  # one per class
    global_autoencoder: LinearAutoencoder

    @property
    def classes(self):
        return self.centroids.shape[0]

    @property
    def marker_dims(self):
        return self.flawed_centroids.shape[1]


def _block_centroids(k, width, sq_sep):
    """``k`` points in ``width`` dims with pairwise squared distance ``sq_sep``
    (scaled one-hot), or at least that much (points on a line) if width < k."""
    out = np.zeros((k, width))
    if width >= k:
        out[np.arange(k), np.arange(k)] = np.sqrt(sq_sep / 2.0)
    else:
        out[:, 0] = np.arange(k) * np.sqrt(sq_sep)
    return out


def _orthonormalize(vectors, basis, tol=1e-12):
    """Modified Gram-Schmidt (two passes) of ``vectors`` against ``basis`` and
    each other. Near-dependent vectors are dropped."""
    out = [np.asarray(b, dtype=np.float64) for b in basis]
    fresh = []
    for v in vectors:
        w = np.array(v, dtype=np.float64)
        norm0 = np.linalg.norm(w)
        for _ in range(2):
            for b in out:
                w -= (w @ b) * b
        n = np.linalg.norm(w)
        if n > tol * max(norm0, 1.0):
            w /= n
            out.append(w)
            fresh.append(w)
    return fresh


def _fit_autoencoder(rows, k):
    # Uncentered (second-moment) PCA: the projector is linear, so
    # reconstruct(a * c) == a * reconstruct(c).
    x = np.asarray(rows, dtype=np.float64)
    second = x.T @ x / x.shape[0]
    second = np.triu(second) + np.triu(second, 1).T
    _, v = linalg.sym_eigen(second)
    return LinearAutoencoder(mean=np.zeros(x.shape[1]), components=np.ascontiguousarray(v[:, :k].T), k=k)


def gen_world(spec=None):
    spec = (spec or SyntheticSpec()).validate()
    K, d, m = spec.classes, spec.dim, spec.marker_dims
    sep2 = spec.class_separation**2
    centroids = np.hstack([
        _block_centroids(K, m, spec.marker_share * sep2),
        _block_centroids(K, d - m, (1.0 - spec.marker_share) * sep2),
    ])
    labels = np.repeat(np.arange(K, dtype=np.int64), spec.n_per_class)
    noise = stream(spec.seed, "world.data").standard_normal((labels.size, d))
    data = centroids[labels] + spec.noise_sd * noise

    k = min(8, d - 1)
    aes = tuple(_fit_autoencoder(data[labels == j], k) for j in range(K))
    global_ae = _fit_autoencoder(data, k)

    diffs = centroids[1:] - centroids[0]
    attr0 = (centroids[1] - centroids[0]) / np.linalg.norm(centroids[1] - centroids[0])
    span = _orthonormalize([attr0, *diffs], [])
    draws = stream(spec.seed, "world.labels").standard_normal((4 * spec.n_attributes + 8, d))
    extra = []
    for v in draws:
        if len(extra) == spec.n_attributes - 1:
            break
        extra += _orthonormalize([v], span + extra)
    if len(extra) < spec.n_attributes - 1:
        raise SpecInvalid("could not build orthogonal label directions")
    directions = np.vstack([attr0, *extra]) if extra else attr0[None, :]

    return SyntheticWorld(
        spec=spec,
        data=TensorSet("world", data),
        labels=labels,
        centroids=centroids,
        flawed_centroids=centroids[:, :m].copy(),
        label_directions=directions,
        label_anchor=(centroids[0] + centroids[1]) / 2.0,
        autoencoders=aes,
        global_autoencoder=global_ae,
    )


def _rows(sample, width=None):
    x = np.asarray(sample, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if width is not None and x.shape[1] != width:
        raise DimensionMismatch(f"expected {width} features, got {x.shape[1]}")
    return x, single


def _softmax_neg_sqdist(x, centers):
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    z = -d2
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def classify(world, sample, which="oracle"):
    """Softmax over negative squared centroid distances.

    ``which="flawed"`` looks at the marker dims only and accepts either full
    samples or marker-only vectors.
    """
    d, m = world.spec.dim, world.marker_dims
    x = np.asarray(sample, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if which == "oracle":
        if x.shape[1] != d:
            raise DimensionMismatch(f"oracle expects {d} features, got {x.shape[1]}")
        p = _softmax_neg_sqdist(x, world.centroids)
    elif which == "flawed":
        if x.shape[1] not in (d, m):
            raise DimensionMismatch(f"flawed classifier expects {d} or {m} features, got {x.shape[1]}")
        p = _softmax_neg_sqdist(x[:, :m], world.flawed_centroids)
    else:
        raise ValueError(f"which must be 'flawed' or 'oracle', got {which!r}")
    return p[0] if single else p


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def label_oracle(world, sample, attribute):
    """Binary attribute oracle ``(1 - s, s)`` with
    ``s = logistic((x - anchor) . w / noise_sd)``."""
    if not 0 <= int(attribute) < world.label_directions.shape[0]:
        raise UnknownAttribute(f"attribute {attribute} not in [0, {world.label_directions.shape[0]})")
    x, single = _rows(sample, world.spec.dim)
    proj = (x - world.label_anchor) @ world.label_directions[int(attribute)] / world.spec.noise_sd
    s = _sigmoid(proj)
    out = np.column_stack([1.0 - s, s])
    return out[0] if single else out


def reconstruct(ae, sample):
    x, single = _rows(sample, ae.mean.size)
    z = (x - ae.mean) @ ae.components.T
    out = ae.mean + z @ ae.components
    return out[0] if single else out


def embed(world, sample):
    """Embedding used for FID: flawed and oracle class probabilities side by side."""
    x, single = _rows(sample, world.spec.dim)
    e = np.hstack([classify(world, x, "flawed"), classify(world, x, "oracle")])
    return e[0] if single else e


def _targets(target, n):
    t = np.asarray(target, dtype=np.int64)
    return np.full(n, int(t)) if t.ndim == 0 else t


def cf_tiny_change(world, x, target):
    """Smallest marker-only step that makes the flawed classifier predict
    ``target``, plus a margin of 1e-3 times the centroid gap.

    The step runs along ``f_target - f_current`` (flawed centroids) and is
    long enough to clear every pairwise boundary between the target and a
    competing class.
    """
    X, single = _rows(x, world.spec.dim)
    q = _targets(target, X.shape[0])
    f = world.flawed_centroids
    m = world.marker_dims
    p = np.argmax(classify(world, X, "flawed"), axis=1)
    if np.any(p == q):
        raise AlreadyTarget("flawed classifier already predicts the target")
    out = X.copy()
    for i in range(X.shape[0]):
        u = f[q[i]] - f[p[i]]
        gap = np.linalg.norm(u)
        u = u / gap
        xm = X[i, :m]
        t = -np.inf
        for r in range(f.shape[0]):
            if r == q[i]:
                continue
            w = f[q[i]] - f[r]
            w = w / np.linalg.norm(w)
            coef = u @ w
            if coef > 0:
                mid = (f[q[i]] + f[r]) / 2.0
                t = max(t, ((mid - xm) @ w + TINY_MARGIN * gap) / coef)
        out[i, :m] = xm + t * u
    return out[0] if single else out


def _blend_alphas(world, X, q):
    alphas = np.full(X.shape[0], np.nan)
    pending = np.arange(X.shape[0])
    mu = world.centroids[q]
    for a in ALPHA_GRID:
        if pending.size == 0:
            break
        c = X[pending] + a * (mu[pending] - X[pending])
        ok = (np.argmax(classify(world, c, "flawed"), axis=1) == q[pending]) & (
            np.argmax(classify(world, c, "oracle"), axis=1) == q[pending])
        alphas[pending[ok]] = a
        pending = pending[~ok]
    if pending.size:
        raise NoValidAlpha(f"{pending.size} samples never reach the target on the alpha grid")
    return alphas


def cf_prototype_blend(world, x, target, return_alpha=False):
    """``x + a * (centroid_target - x)`` for the smallest grid value ``a``
    at which both classifiers predict the target."""
    X, single = _rows(x, world.spec.dim)
    q = _targets(target, X.shape[0])
    alphas = _blend_alphas(world, X, q)
    out = X + alphas[:, None] * (world.centroids[q] - X)
    if single:
        return (out[0], alphas[0]) if return_alpha else out[0]
    return (out, alphas) if return_alpha else out


def cf_mid(world, x, target, rng=None, noise_fraction=0.25):
    """Prototype blend on the marker dims only, plus N(0, noise_sd) noise on a
    random ``noise_fraction`` of the other dims."""
    X, single = _rows(x, world.spec.dim)
    q = _targets(target, X.shape[0])
    p = np.argmax(classify(world, X, "flawed"), axis=1)
    if np.any(p == q):
        raise AlreadyTarget("flawed classifier already predicts the target")
    if rng is None:
        rng = stream(world.spec.seed, "cf.mid")
    m = world.marker_dims
    proto = cf_prototype_blend(world, X, q)
    out = X.copy()
    out[:, :m] = proto[:, :m]
    rest = X.shape[1] - m
    mask = rng.random((X.shape[0], rest)) < noise_fraction
    noise = rng.standard_normal((X.shape[0], rest)) * world.spec.noise_sd
    out[:, m:] += np.where(mask, noise, 0.0)
    return out[0] if single else out


def make_fakemnist(images, num_classes=10, seed=0, value_range=(0.0, 1.0), height=None, width=None):
    """Shuffle images, draw uniform random labels and paint each label as a
    one-hot in the first ``num_classes`` pixels of row 0.

    Returns ``(TensorSet of shape (N, H, W), labels)``.
    """
    vals = np.asarray(getattr(images, "values", images), dtype=np.float64)
    if vals.ndim == 2:
        if height is None or width is None or height * width != vals.shape[1]:
            raise DimensionMismatch("flat images need height and width matching the row length")
        vals = vals.reshape(vals.shape[0], height, width)
    elif vals.ndim != 3:
        raise DimensionMismatch(f"expected (N, H, W) images, got shape {vals.shape}")
    n, _, w = vals.shape
    if w < num_classes:
        raise TooNarrow(f"width {w} cannot hold {num_classes} one-hot pixels")
    if num_classes > 10:
        warnings.warn("more than 10 FakeMNIST classes; the reference construction uses at most 10",
                      stacklevel=2)
    order = stream(seed, "fakemnist.shuffle").permutation(n)
    labels = stream(seed, "fakemnist.labels").integers(0, num_classes, size=n, dtype=np.int64)
    out = vals[order].copy()
    lo, hi = float(value_range[0]), float(value_range[1])
    out[:, 0, :num_classes] = lo
    out[np.arange(n), 0, labels] = hi
    name = getattr(images, "name", "images")
    return TensorSet(f"fake_{name}", out), labels


def build_bundle(world, method, n_eval=500, seed=0):
    """Score-ready bundle for one simulator on ``n_eval`` world samples.

    The input class is the flawed classifier's prediction, and each target is
    drawn uniformly from the other classes.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    data = world.data.values
    if not 1 <= n_eval <= data.shape[0]:
        raise ValueError(f"n_eval must be in [1, {data.shape[0]}]")
    K = world.classes
    idx = np.sort(stream(seed, "bundle.eval").choice(data.shape[0], size=n_eval, replace=False))
    x = data[idx]
    f_in = classify(world, x, "flawed")
    p = np.argmax(f_in, axis=1)
    q = (p + stream(seed, "bundle.targets").integers(1, K, size=n_eval)) % K

    if method == "tiny":
        c = cf_tiny_change(world, x, q)
    elif method == "mid":
        c = cf_mid(world, x, q, rng=stream(seed, "cf.mid"))
    else:
        c = cf_prototype_blend(world, x, q)

    ae_target = np.empty_like(c)
    ae_input = np.empty_like(c)
    for j in range(K):
        ae_target[q == j] = reconstruct(world.autoencoders[j], c[q == j])
        ae_input[p == j] = reconstruct(world.autoencoders[j], c[p == j])
    ae_full = reconstruct(world.global_autoencoder, c)

    label_oracles = tuple(
        LabelOracleOutputs(f"attr{a}", label_oracle(world, x, a), label_oracle(world, c, a))
        for a in range(world.label_directions.shape[0])
    )
    bundle = EvaluationBundle(
        inputs=x,
        counterfactuals=c,
        f_probs_inputs=f_in,
        f_probs_counterfactuals=classify(world, c, "flawed"),
        targets=q,
        oracle_probs_counterfactuals=classify(world, c, "oracle"),
        reconstructions=ReconstructionTriplet(ae_target, ae_input, ae_full),
        embeddings_reference=embed(world, data),
        embeddings_counterfactuals=embed(world, c),
        label_oracles=label_oracles,
        method_name=method,
        normalization_range=(float(data.min()), float(data.max())),
    )
    findings = [f for f in validate_bundle(bundle) if f.severity == "error"]
    if findings:
        raise ValidationFailed(findings)
    return bundle


def rescale_bundle(bundle, new_range):
    """Re-express the pixel-space tensors of ``bundle`` in ``new_range``.

    Inputs, counterfactuals and reconstructions are mapped affinely from the
    bundle's normalization range. Model outputs and embeddings are left as
    they are: a model trained on the rescaled data sees the same images.
    """
    lo, hi = bundle.normalization_range
    nlo, nhi = float(new_range[0]), float(new_range[1])
    scale = (nhi - nlo) / (hi - lo)

    def f(a):
        return nlo + (a - lo) * scale

    rec = bundle.reconstructions
    if rec is not None:
        rec = ReconstructionTriplet(f(rec.ae_target), f(rec.ae_input_class), f(rec.ae_full))
    return replace(
        bundle,
        inputs=f(bundle.inputs),
        counterfactuals=f(bundle.counterfactuals),
        reconstructions=rec,
        normalization_range=(nlo, nhi),
    )
