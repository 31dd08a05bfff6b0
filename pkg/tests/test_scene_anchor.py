import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from otfuse.config import ExperimentConfig
from otfuse.exceptions import DataError, ParameterError, ShapeError
from otfuse.scene_anchor import (
    ATTRIBUTES,
    AttributeHeadClassifier,
    AttributeSpace,
    LinearHead,
    PrototypeTable,
    SceneAnchorGenerator,
    ScenePosterior,
    classify_attribute,
    head_loss_and_grad,
    infer_scene_posterior,
    synthesize_anchor,
    train_heads,
)
from otfuse.synthetic import make_basis, make_table

SPACE = AttributeSpace(("sunny", "rainy", "foggy"), ("day", "night"), ("dirt", "grass"))


def tiny_table(rng, dim=8):
    protos = rng.standard_normal((SPACE.n_combinations, 2, dim))
    heads = {a: LinearHead(rng.standard_normal((len(SPACE.categories(a)), dim))) for a in ATTRIBUTES}
    return PrototypeTable(SPACE, protos, rng.standard_normal((2, dim)), heads=heads)


def separable_set(config, rng, n_per_combo=5, noise=0.15):
    space = config.attribute_space
    basis = make_basis(space, config.embedding_dim, rng)
    table = make_table(config, basis, rng)
    rows = []
    for combo in space.combinations():
        for _ in range(n_per_combo):
            x = basis.cls_mean(space, combo) + noise * rng.standard_normal(config.embedding_dim)
            rows.append((x, *space.label_indices(combo)))
    return table, rows


def test_attribute_space_indexing():
    assert SPACE.sizes == (3, 2, 2) and SPACE.n_combinations == 12
    combos = SPACE.combinations()
    assert combos[0] == ("sunny", "day", "dirt") and combos[1] == ("sunny", "day", "grass")
    assert all(SPACE.index(c) == i for i, c in enumerate(combos))
    assert SPACE.parse_key(SPACE.key(combos[5])) == combos[5]
    with pytest.raises(DataError):
        SPACE.index(("snowy", "day", "dirt"))
    with pytest.raises(DataError):
        AttributeSpace(("a", "a"), ("b",), ("c",))
    assert AttributeSpace.from_dict(SPACE.to_dict()) == SPACE


def test_posterior_from_heads_matches_manual_softmax(rng):
    table = tiny_table(rng)
    x = rng.standard_normal(8)
    post = infer_scene_posterior(x, table.heads)
    for p, a in zip(post.marginals, ATTRIBUTES):
        h = table.heads[a]
        z = x @ h.text_embeddings.T / h.temperature
        expected = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
        np.testing.assert_allclose(p, expected, atol=1e-12)
    assert post.joint.sum() == pytest.approx(1.0)


def test_one_hot_anchor_is_prototype(rng):
    table = tiny_table(rng)
    for combo in SPACE.combinations():
        np.testing.assert_array_equal(synthesize_anchor(ScenePosterior.one_hot(SPACE, combo), table), table.prototype(combo))


def test_anchor_is_expectation_over_combinations(rng):
    table = tiny_table(rng)
    joint = rng.random(SPACE.n_combinations)
    joint /= joint.sum()
    manual = sum(joint[s] * table.prototypes[s] for s in range(SPACE.n_combinations))
    np.testing.assert_allclose(synthesize_anchor(joint, table), manual, atol=1e-14)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_anchor_linear_in_posterior(seed, alpha):
    rng = np.random.default_rng(seed)
    table = tiny_table(rng)
    p, q = (rng.dirichlet(np.ones(SPACE.n_combinations)) for _ in range(2))
    mixed = synthesize_anchor(alpha * p + (1 - alpha) * q, table)
    split = alpha * synthesize_anchor(p, table) + (1 - alpha) * synthesize_anchor(q, table)
    np.testing.assert_allclose(mixed, split, atol=1e-10)


def test_anchor_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        synthesize_anchor(np.ones(5) / 5, tiny_table(rng))


def test_table_json_round_trip_is_lossless(tmp_path, rng):
    table = tiny_table(rng)
    table.save(tmp_path / "t.json")
    back = PrototypeTable.load(tmp_path / "t.json")
    np.testing.assert_array_equal(back.prototypes, table.prototypes)
    np.testing.assert_array_equal(back.meta, table.meta)
    for a in ATTRIBUTES:
        np.testing.assert_array_equal(back.heads[a].text_embeddings, table.heads[a].text_embeddings)
    assert back.attribute_space == SPACE


def test_table_rejects_bad_files(tmp_path, rng):
    d = tiny_table(rng).to_dict()
    for mutate, exc in [
        (lambda x: x.update(extra=1), DataError),
        (lambda x: x.update(version=2), DataError),
        (lambda x: x["prototypes"].pop("sunny|day|dirt"), DataError),
        (lambda x: x.update(embedding_dim=9), ShapeError),
    ]:
        bad = json.loads(json.dumps(d))
        mutate(bad)
        with pytest.raises(exc):
            PrototypeTable.from_dict(bad)
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(DataError):
        PrototypeTable.load(tmp_path / "bad.json")


def test_table_rejects_zero_prototype(rng):
    protos = rng.standard_normal((SPACE.n_combinations, 2, 4))
    protos[3, 1] = 0.0
    with pytest.raises(DataError):
        PrototypeTable(SPACE, protos, np.ones((2, 4)))


def test_head_gradient_matches_finite_differences(rng):
    head = LinearHead(rng.standard_normal((3, 6)) * 0.1, temperature=0.07)
    X = rng.standard_normal((20, 6))
    y = rng.integers(0, 3, 20)
    _, grad = head_loss_and_grad(head, X, y)
    h = 1e-6
    fd = np.zeros_like(grad)
    for idx in np.ndindex(grad.shape):
        up, down = head.copy(), head.copy()
        up.text_embeddings[idx] += h
        down.text_embeddings[idx] -= h
        fd[idx] = (head_loss_and_grad(up, X, y)[0] - head_loss_and_grad(down, X, y)[0]) / (2 * h)
    assert np.abs(fd - grad).max() <= 1e-6


def test_train_heads_reaches_high_accuracy_and_keeps_inputs(rng):
    config = ExperimentConfig()
    table, rows = separable_set(config, rng)
    initial = [table.heads[a] for a in ATTRIBUTES]
    before = [h.text_embeddings.copy() for h in initial]
    heads, trace = train_heads(rows, initial, 500, 0.1)
    assert len(trace) == 501 and trace[-1] < trace[0]
    X = np.array([r[0] for r in rows])
    for a, h in enumerate(heads):
        acc = np.mean(classify_attribute(X, h).argmax(1) == np.array([r[1 + a] for r in rows]))
        assert acc >= 0.95
    for h, b in zip(initial, before):
        np.testing.assert_array_equal(h.text_embeddings, b)


def test_train_heads_zero_steps_is_identity(rng):
    config = ExperimentConfig()
    table, rows = separable_set(config, rng, n_per_combo=1)
    heads, trace = train_heads(rows, table.heads, 0, 0.1)
    assert len(trace) == 1
    for a, h in zip(ATTRIBUTES, heads):
        np.testing.assert_array_equal(h.text_embeddings, table.heads[a].text_embeddings)


def test_train_heads_errors(rng):
    table = tiny_table(rng)
    with pytest.raises(DataError):
        train_heads([], table.heads, 1, 0.1)
    with pytest.raises(DataError):
        train_heads([(np.ones(8), 5, 0, 0)], table.heads, 1, 0.1)
    with pytest.raises(ParameterError):
        LinearHead(np.ones((2, 2)), temperature=0.0)


def test_attribute_head_classifier(rng):
    centers = np.eye(4)[:3] * 3
    y = np.repeat(["a", "b", "c"], 20)
    X = np.repeat(centers, 20, axis=0) + 0.1 * rng.standard_normal((60, 4))
    clf = AttributeHeadClassifier(n_steps=200).fit(X, y)
    assert clf.score(X, y) == 1.0
    assert clf.loss_curve_[-1] < clf.loss_curve_[0]
    np.testing.assert_allclose(clf.predict_proba(X).sum(1), 1.0)
    assert clone(clf).get_params()["n_steps"] == 200


def test_scene_anchor_generator(rng):
    config = ExperimentConfig()
    table, rows = separable_set(config, rng, n_per_combo=2)
    X = np.array([r[0] for r in rows])
    y = np.array([r[1:] for r in rows])
    gen = SceneAnchorGenerator(table, n_steps=100).fit(X, y)
    out = gen.transform(X[:3])
    assert out.shape == (3, 2, config.embedding_dim)
    np.testing.assert_allclose(out[0], synthesize_anchor(infer_scene_posterior(X[0], gen.heads_), table))
    untrained = SceneAnchorGenerator(table, n_steps=0).fit(X)
    for a, h in zip(ATTRIBUTES, untrained.heads_):
        np.testing.assert_array_equal(h.text_embeddings, table.heads[a].text_embeddings)
