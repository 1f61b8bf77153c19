import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from regnav.estimator import NavigationAgent, encode_features, expert_dataset
from regnav.nnet.checkpoint import save_checkpoint
from regnav.nnet.params import ParamStore
from regnav.world.navgraph import NUM_ACTIONS

TINY = dict(state_dim=8, latent_dim=4, hidden=16, workers=2, unroll=5, max_episodes=12, val_every=6, val_tasks=3,
            curriculum=False, lr=1e-3)


@pytest.fixture(scope="module")
def fitted(scene_sets):
    return NavigationAgent(**TINY).fit(scene_sets["train"][:3], val_scenes=scene_sets["val"][:1])


def test_params_and_clone():
    agent = NavigationAgent(variant="bc", lr=3e-4)
    twin = clone(agent)
    assert twin.get_params() == agent.get_params()
    assert twin.set_params(hidden=7).hidden == 7 and agent.hidden == 128


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        NavigationAgent().predict(np.zeros((1, 10)))


@pytest.mark.parametrize("bad", [{"variant": "nope"}, {"hidden": 0}, {"lr": 0.0}, {"workers": 1.5}])
def test_invalid_params(bad, scene_sets):
    with pytest.raises(ValueError):
        NavigationAgent(**{**TINY, **bad}).fit(scene_sets["train"][:3])


def test_needs_two_scenes_without_val(scene_sets):
    with pytest.raises(ValueError, match="two scenes"):
        NavigationAgent(**TINY).fit(scene_sets["train"][:1])


def test_predict_shapes(fitted, scene_sets):
    X, y = expert_dataset(scene_sets["val"][:1], n_tasks=3)
    assert X.shape[1] == fitted.n_features_in_ and len(X) == len(y)
    proba = fitted.predict_proba(X)
    assert proba.shape == (len(X), NUM_ACTIONS)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    pred = fitted.predict(X)
    assert pred.shape == (len(X),) and set(pred) <= set(range(NUM_ACTIONS))
    np.testing.assert_array_equal(pred, np.argmax(proba, axis=1))
    assert 0.0 <= fitted.score(X, y) <= 1.0
    assert fitted.val_log_ and fitted.train_log_


def test_feature_count_mismatch(fitted):
    with pytest.raises(ValueError, match="features"):
        fitted.predict(np.zeros((2, fitted.n_features_in_ + 1)))


def test_encode_features_layout():
    row = encode_features(np.ones((4, 3)), np.full(2, 2.0), 5)
    np.testing.assert_array_equal(row, [1] * 12 + [2, 2, 5])


def test_from_checkpoint_matches(fitted, tmp_path, scene_sets):
    path = tmp_path / "agent.ckpt"
    template = fitted.model_.init_params(0)
    store = ParamStore({k: fitted.params_[k] for k in template.params},
                       {k: fitted.params_[k] for k in template.buffers})
    save_checkpoint(path, store, {"model": fitted.model_.cfg.to_dict(), "train": {"seed": 0}})
    loaded = NavigationAgent.from_checkpoint(path)
    X, _ = expert_dataset(scene_sets["val"][:1], n_tasks=2)
    np.testing.assert_array_equal(loaded.predict_proba(X), fitted.predict_proba(X))
    assert loaded.hidden == 16 and loaded.variant == "full"


def test_evaluate_report(fitted, scene_sets):
    rep = fitted.evaluate(scene_sets["test"], n=5)
    assert rep.N == 5 and 0.0 <= rep.SR <= 100.0
