"""Scene anchor generation from factorized scene posteriors.

A scene is a (weather, time-of-day, road type) combination. Each attribute
gets its own linear head over the image CLS embedding; the three marginal
posteriors are combined by tensor product into a posterior over every
combination, and the cached per-combination class prototypes are averaged
under that posterior to give one anchor row per class.
"""

import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError, ParameterError, ShapeError
from .tensor_core import marginalize_joint, softmax_with_temperature, tensor_product_joint
from .validation import as_matrix, as_vector, check_distribution

ATTRIBUTES = ("weather", "time_of_day", "road_type")
DEFAULT_CLASSES = ("traversable", "non_traversable")
DEFAULT_TEMPERATURE = 0.07
TABLE_VERSION = 1
KEY_SEP = "|"


def to_float32_precision(x):
    """Round to the nearest float32 value, kept as float64."""
    return np.asarray(x, dtype=np.float64).astype(np.float32).astype(np.float64)


@dataclass(frozen=True)
class AttributeSpace:
    weather: tuple
    time_of_day: tuple
    road_type: tuple

    def __post_init__(self):
        for name in ATTRIBUTES:
            values = tuple(str(v) for v in getattr(self, name))
            if not values:
                raise DataError(f"attribute {name!r} has no categories")
            if len(set(values)) != len(values):
                raise DataError(f"attribute {name!r} has duplicate categories")
            if any(KEY_SEP in v for v in values):
                raise DataError(f"category names may not contain {KEY_SEP!r}")
            object.__setattr__(self, name, values)

    @property
    def sizes(self):
        return (len(self.weather), len(self.time_of_day), len(self.road_type))

    @property
    def n_combinations(self):
        w, d, r = self.sizes
        return w * d * r

    def categories(self, attribute):
        return getattr(self, attribute)

    def combinations(self):
        """All combinations as name triples, weather-major."""
        return list(product(self.weather, self.time_of_day, self.road_type))

    def index(self, combo):
        """Flat weather-major index of a ``(weather, time, road)`` name triple."""
        w, d, r = combo
        try:
            iw = self.weather.index(w)
            idn = self.time_of_day.index(d)
            ir = self.road_type.index(r)
        except ValueError as exc:
            raise DataError(f"unknown scene combination {combo!r}") from exc
        _, nd, nr = self.sizes
        return (iw * nd + idn) * nr + ir

    def label_indices(self, combo):
        return tuple(self.categories(a).index(v) for a, v in zip(ATTRIBUTES, combo))

    @staticmethod
    def key(combo):
        return KEY_SEP.join(combo)

    @staticmethod
    def parse_key(key):
        parts = tuple(key.split(KEY_SEP))
        if len(parts) != 3:
            raise DataError(f"malformed scene key {key!r}")
        return parts

    def to_dict(self):
        return {a: list(getattr(self, a)) for a in ATTRIBUTES}

    @classmethod
    def from_dict(cls, d):
        return cls(**{a: tuple(d[a]) for a in ATTRIBUTES})


@dataclass(frozen=True)
class ScenePosterior:
    p_weather: np.ndarray
    p_time: np.ndarray
    p_road: np.ndarray
    joint: np.ndarray

    @classmethod
    def from_marginals(cls, p_weather, p_time, p_road):
        joint = tensor_product_joint(p_weather, p_time, p_road)
        return cls(
            np.asarray(p_weather, dtype=np.float64),
            np.asarray(p_time, dtype=np.float64),
            np.asarray(p_road, dtype=np.float64),
            joint,
        )

    @classmethod
    def one_hot(cls, space, combo):
        marginals = []
        for attribute, idx in zip(ATTRIBUTES, space.label_indices(combo)):
            p = np.zeros(len(space.categories(attribute)))
            p[idx] = 1.0
            marginals.append(p)
        return cls.from_marginals(*marginals)

    @property
    def marginals(self):
        return self.p_weather, self.p_time, self.p_road

    def remarginalize(self):
        sizes = (self.p_weather.size, self.p_time.size, self.p_road.size)
        return marginalize_joint(self.joint, sizes)


@dataclass
class LinearHead:
    """Text-embedding classifier: logits are ``<cls, T_i> / temperature``."""

    text_embeddings: np.ndarray
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        self.text_embeddings = as_matrix(self.text_embeddings, "text_embeddings")
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature!r}")

    @property
    def n_categories(self):
        return self.text_embeddings.shape[0]

    @property
    def embedding_dim(self):
        return self.text_embeddings.shape[1]

    def copy(self):
        return LinearHead(self.text_embeddings.copy(), self.temperature)

    def to_dict(self):
        return {
            "temperature": float(self.temperature),
            "text_embeddings": to_float32_precision(self.text_embeddings).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(to_float32_precision(d["text_embeddings"]), float(d.get("temperature", DEFAULT_TEMPERATURE)))


def classify_attribute(cls_embedding, head):
    """Posterior over one attribute's categories from raw inner products."""
    x = np.asarray(cls_embedding, dtype=np.float64)
    if x.shape[-1] != head.embedding_dim:
        raise ShapeError(f"CLS dimension {x.shape[-1]} does not match head dimension {head.embedding_dim}")
    return softmax_with_temperature(x @ head.text_embeddings.T, head.temperature)


def infer_scene_posterior(cls_embedding, heads):
    """Three marginal posteriors and their tensor-product joint.

    ``heads`` is a sequence of three :class:`LinearHead` in attribute order
    (weather, time-of-day, road type) or a mapping keyed by attribute name.
    """
    heads = _head_sequence(heads)
    x = as_vector(cls_embedding, "cls_embedding")
    return ScenePosterior.from_marginals(*(classify_attribute(x, h) for h in heads))


def _head_sequence(heads):
    if isinstance(heads, dict):
        heads = [heads[a] for a in ATTRIBUTES]
    heads = list(heads)
    if len(heads) != 3:
        raise ShapeError(f"expected three attribute heads, got {len(heads)}")
    return heads


@dataclass
class PrototypeTable:
    """Cached class prototypes for every scene combination.

    ``prototypes`` has shape ``(n_combinations, n_classes, embedding_dim)``
    with combinations in weather-major order. All stored vectors, head text
    embeddings included, are rounded to float32 precision so that a
    save/load round trip is lossless.
    """

    attribute_space: AttributeSpace
    prototypes: np.ndarray
    meta: np.ndarray
    classes: tuple = DEFAULT_CLASSES
    heads: dict = field(default_factory=dict)
    frozen: dict = field(default_factory=dict)

    def __post_init__(self):
        self.classes = tuple(self.classes)
        protos = to_float32_precision(self.prototypes)
        meta = to_float32_precision(self.meta)
        n_s = self.attribute_space.n_combinations
        if protos.ndim != 3 or protos.shape[:2] != (n_s, len(self.classes)):
            raise ShapeError(
                f"prototypes must have shape ({n_s}, {len(self.classes)}, dim), got {protos.shape}"
            )
        if meta.shape != (len(self.classes), protos.shape[2]):
            raise ShapeError(f"meta must have shape ({len(self.classes)}, {protos.shape[2]}), got {meta.shape}")
        if not np.all(np.isfinite(protos)):
            raise DataError("prototypes contain non-finite values")
        if np.any(np.linalg.norm(protos, axis=2) == 0):
            raise DataError("prototype vectors must have nonzero norm")
        self.prototypes = protos
        self.meta = meta
        self.heads = {
            name: LinearHead(to_float32_precision(h.text_embeddings), h.temperature) for name, h in self.heads.items()
        }
        for name, head in self.heads.items():
            if name not in ATTRIBUTES:
                raise DataError(f"unknown attribute head {name!r}")
            if head.n_categories != len(self.attribute_space.categories(name)):
                raise ShapeError(f"head {name!r} has {head.n_categories} rows for "
                                 f"{len(self.attribute_space.categories(name))} categories")
            if head.embedding_dim != self.embedding_dim:
                raise ShapeError(f"head {name!r} dimension {head.embedding_dim} != {self.embedding_dim}")
        self.frozen = {k: to_float32_precision(v) for k, v in self.frozen.items()}

    @property
    def embedding_dim(self):
        return self.prototypes.shape[2]

    @property
    def n_classes(self):
        return len(self.classes)

    def prototype(self, combo):
        return self.prototypes[self.attribute_space.index(combo)]

    def to_dict(self):
        space = self.attribute_space
        out = {
            "version": TABLE_VERSION,
            "embedding_dim": self.embedding_dim,
            "classes": list(self.classes),
            "attributes": space.to_dict(),
            "temperature": {a: float(h.temperature) for a, h in self.heads.items()},
            "text_embeddings": {
                a: to_float32_precision(h.text_embeddings).tolist() for a, h in self.heads.items()
            },
            "meta": self.meta.tolist(),
            "prototypes": {
                space.key(c): self.prototypes[i].tolist() for i, c in enumerate(space.combinations())
            },
        }
        if self.frozen:
            out["frozen"] = {k: np.asarray(v).tolist() for k, v in self.frozen.items()}
        return out

    @classmethod
    def from_dict(cls, d):
        known = {"version", "embedding_dim", "classes", "attributes", "temperature",
                 "text_embeddings", "meta", "prototypes", "frozen"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown prototype-table fields: {sorted(unknown)}")
        if d.get("version") != TABLE_VERSION:
            raise DataError(f"unsupported prototype-table version {d.get('version')!r}")
        space = AttributeSpace.from_dict(d["attributes"])
        entries = d["prototypes"]
        missing = [space.key(c) for c in space.combinations() if space.key(c) not in entries]
        if missing:
            raise DataError(f"prototype table has no entry for {missing[:3]}"
                            + (" ..." if len(missing) > 3 else ""))
        extra = set(entries) - {space.key(c) for c in space.combinations()}
        if extra:
            raise DataError(f"prototype table has entries outside the attribute space: {sorted(extra)[:3]}")
        protos = np.array([entries[space.key(c)] for c in space.combinations()], dtype=np.float64)
        if protos.shape[2] != d["embedding_dim"]:
            raise ShapeError(f"prototype dimension {protos.shape[2]} != embedding_dim {d['embedding_dim']}")
        temps = d.get("temperature", {})
        heads = {
            a: LinearHead(to_float32_precision(t), float(temps.get(a, DEFAULT_TEMPERATURE)))
            for a, t in d.get("text_embeddings", {}).items()
        }
        frozen = {k: np.asarray(v, dtype=np.float64) for k, v in d.get("frozen", {}).items()}
        return cls(space, protos, np.asarray(d["meta"], dtype=np.float64), tuple(d["classes"]), heads, frozen)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: not a valid prototype table ({exc})") from exc
        return cls.from_dict(data)


def synthesize_anchor(posterior, table):
    """Posterior-weighted sum of cached prototypes, one row per class."""
    joint = posterior.joint if isinstance(posterior, ScenePosterior) else np.asarray(posterior, dtype=np.float64)
    if joint.shape != (table.prototypes.shape[0],):
        raise ShapeError(
            f"posterior covers {joint.size} combinations, table has {table.prototypes.shape[0]}"
        )
    return np.einsum("s,skc->kc", joint, table.prototypes)


def head_loss_and_grad(head, X, labels):
    """Mean softmax cross-entropy of one head and its gradient w.r.t. the text embeddings."""
    logits = X @ head.text_embeddings.T / head.temperature
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    n = X.shape[0]
    loss = float(np.mean(log_norm - shifted[np.arange(n), labels]))
    probs = np.exp(shifted - log_norm[:, None])
    probs[np.arange(n), labels] -= 1.0
    grad = probs.T @ X / (head.temperature * n)
    return loss, grad


def _check_labels(labels, n_categories, attribute):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_categories):
        raise DataError(f"{attribute} label out of range [0, {n_categories})")
    return labels.astype(np.int64)


def train_heads(dataset, heads, steps, learning_rate):
    """Fit three attribute heads by gradient descent on summed cross-entropy.

    ``dataset`` is a sequence of ``(cls_embedding, weather, time, road)``
    where labels are category indices. Temperatures are held fixed. The
    input heads are not modified.

    Returns ``(trained_heads, trace)`` where ``trace[t]`` is the summed loss
    before step ``t`` and the last entry is the loss after training.
    """
    dataset = list(dataset)
    if not dataset:
        raise DataError("cannot train heads on an empty dataset")
    heads = [h.copy() for h in _head_sequence(heads)]
    X = as_matrix(np.array([row[0] for row in dataset], dtype=np.float64), "cls embeddings")
    labels = [
        _check_labels([row[1 + a] for row in dataset], heads[a].n_categories, ATTRIBUTES[a])
        for a in range(3)
    ]
    for h in heads:
        if h.embedding_dim != X.shape[1]:
            raise ShapeError(f"head dimension {h.embedding_dim} != embedding dimension {X.shape[1]}")
    trace = []
    for _ in range(int(steps)):
        total = 0.0
        grads = []
        for h, y in zip(heads, labels):
            loss, grad = head_loss_and_grad(h, X, y)
            total += loss
            grads.append(grad)
        trace.append(total)
        for h, grad in zip(heads, grads):
            h.text_embeddings = h.text_embeddings - learning_rate * grad
    trace.append(sum(head_loss_and_grad(h, X, y)[0] for h, y in zip(heads, labels)))
    return heads, trace


class AttributeHeadClassifier(ClassifierMixin, BaseEstimator):
    """One attribute head as a scikit-learn classifier.

    Parameters
    ----------
    temperature : float, default=0.07
    n_steps : int, default=500
        Full-batch gradient steps.
    learning_rate : float, default=0.1
    init_embeddings : array-like of shape (n_classes, n_features), optional
        Starting text embeddings (e.g. from a frozen text encoder). Zeros
        when omitted.
    """

    def __init__(self, temperature=DEFAULT_TEMPERATURE, n_steps=500, learning_rate=0.1, init_embeddings=None):
        self.temperature = temperature
        self.n_steps = n_steps
        self.learning_rate = learning_rate
        self.init_embeddings = init_embeddings

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.init_embeddings is None:
            init = np.zeros((self.classes_.size, X.shape[1]))
        else:
            init = as_matrix(self.init_embeddings, "init_embeddings")
            if init.shape != (self.classes_.size, X.shape[1]):
                raise ShapeError(f"init_embeddings shape {init.shape} != ({self.classes_.size}, {X.shape[1]})")
        head = LinearHead(init.copy(), self.temperature)
        self.loss_curve_ = []
        for _ in range(int(self.n_steps)):
            loss, grad = head_loss_and_grad(head, X, y_idx)
            self.loss_curve_.append(loss)
            head.text_embeddings = head.text_embeddings - self.learning_rate * grad
        self.head_ = head
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return classify_attribute(X, self.head_)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class SceneAnchorGenerator(TransformerMixin, BaseEstimator):
    """Map CLS embeddings to class anchors through the cached prototype table.

    ``fit`` trains the three attribute heads starting from the table's
    stored text embeddings; ``y`` holds one ``(weather, time, road)`` index
    triple per row. With ``n_steps=0`` the table's heads are used as is.
    ``transform`` returns an array of shape ``(n_samples, n_classes, dim)``.
    """

    def __init__(self, table, n_steps=500, learning_rate=0.1):
        self.table = table
        self.n_steps = n_steps
        self.learning_rate = learning_rate

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        initial = [self.table.heads[a] for a in ATTRIBUTES]
        if y is None or self.n_steps == 0:
            self.heads_ = [h.copy() for h in initial]
            self.loss_curve_ = []
        else:
            y = np.asarray(y)
            dataset = [(x, *labels) for x, labels in zip(X, y)]
            self.heads_, self.loss_curve_ = train_heads(dataset, initial, self.n_steps, self.learning_rate)
        self.n_features_in_ = X.shape[1]
        return self

    def posterior(self, x):
        check_is_fitted(self)
        return infer_scene_posterior(x, self.heads_)

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return np.stack([synthesize_anchor(self.posterior(x), self.table) for x in X])
