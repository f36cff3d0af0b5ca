import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from colordecode.channel import NoiseParams, label_errors, sample_errors
from colordecode.color_code import build_code
from colordecode.estimators import (
    HInverseDecoder,
    HomologyMLPClassifier,
    MaximumLikelihoodDecoder,
    SyndromeEncoder,
    TwoStepDecoder,
)
from colordecode.neural import ShapeMismatch

C18 = build_code((3, 3, 0))


def _data(p=0.05, count=4000, seed=0):
    e = sample_errors(C18, NoiseParams(p, seed), 0, count)
    s, _, labels = label_errors(C18, e)
    return e, s, labels


def test_params_and_clone():
    dec = TwoStepDecoder(code=(3, 3, 0), approach=2, hidden_factor=1)
    params = dec.get_params()
    assert params["approach"] == 2 and params["hidden_factor"] == 1
    c = clone(dec)
    assert c.get_params() == params
    assert MaximumLikelihoodDecoder(p_err=0.1).set_params(p_err=0.2).p_err == 0.2


def test_hinv_decoder():
    e, s, _ = _data()
    dec = HInverseDecoder((3, 3, 0)).fit()
    assert not dec.predict_homology(s).any()
    corr = dec.predict(s)
    assert (C18.syndrome(corr) == s).all()
    assert (dec.transform(s) == corr).all()
    assert 0 < dec.score(e) < 1
    with pytest.raises(ValueError):
        dec.predict(np.zeros((2, 8)))


def test_mld_decoder_beats_hinv():
    e, s, labels = _data()
    mld = MaximumLikelihoodDecoder((3, 3, 0), p_err=0.05)
    assert mld.score(e) > HInverseDecoder((3, 3, 0)).score(e)
    proba = mld.predict_proba(s[:10])
    assert proba.shape == (10, 16) and np.allclose(proba.sum(axis=1), 1)
    with pytest.raises(ValueError):
        MaximumLikelihoodDecoder((3, 3, 0)).predict_homology(s)


def test_syndrome_encoder():
    _, s, _ = _data(count=10)
    assert SyndromeEncoder((3, 3, 0), 1).fit_transform(s).shape == (10, 9)
    assert SyndromeEncoder((3, 3, 0), 2).fit_transform(s).shape == (10, 27)
    with pytest.raises(ValueError):
        SyndromeEncoder((3, 3, 0), 3).fit(s)


def test_mlp_classifier_in_pipeline():
    _, s, labels = _data(count=20000)
    pipe = make_pipeline(SyndromeEncoder((3, 3, 0), 1), HomologyMLPClassifier(hidden_width=18, batch_size=200, epochs=3))
    pipe.fit(s, labels)
    acc = pipe.score(s, labels)
    # majority class alone scores the class-0 frequency
    assert acc > np.mean(labels == 0) + 0.05
    clf = pipe[-1]
    assert clf.predict_proba(pipe[0].transform(s[:5])).shape == (5, 16)
    assert clf.loss_curve_[-1] < clf.loss_curve_[0]


def test_mlp_classifier_partial_fit_and_validation():
    clf = HomologyMLPClassifier(hidden_width=8, batch_size=50)
    X = np.random.default_rng(0).integers(0, 2, (200, 9)).astype(float)
    y = np.random.default_rng(1).integers(0, 16, 200)
    clf.partial_fit(X, y)
    clf.partial_fit(X, y)
    assert clf.adam_.t == 8
    with pytest.raises(ValueError):
        clf.partial_fit(X[:, :5], y)
    with pytest.raises(Exception):
        HomologyMLPClassifier().predict(X)


def test_two_step_decoder_fit_roundtrip():
    dec = TwoStepDecoder(
        code=(3, 3, 0), samples_per_rate=5000, batch_size=100, validation_samples=1000, error_rates=(0.05, 0.07)
    ).fit()
    e, s, _ = _data()
    assert dec.decoder_id == "nn1"
    assert (C18.syndrome(dec.predict(s)) == s).all()
    again = TwoStepDecoder.from_bytes(dec.to_bytes())
    assert (again.predict_homology(s) == dec.predict_homology(s)).all()
    assert again.get_params() == dec.get_params()
    assert np.allclose(dec.predict_proba(s[:3]).sum(axis=1), 1)


def test_two_step_decoder_config_mismatch():
    dec = TwoStepDecoder(code=(3, 3, 0), samples_per_rate=400, batch_size=100, validation_samples=0, error_rates=(0.05,)).fit()
    blob = TwoStepDecoder(code=(3, 3, 0), approach=2, samples_per_rate=400, batch_size=100, error_rates=(0.05,)).plan().to_dict()
    from colordecode.neural import save_checkpoint

    with pytest.raises(ShapeMismatch):
        TwoStepDecoder.from_bytes(save_checkpoint(dec.model_, None, {"plan": blob}))


def test_unfitted_two_step_raises():
    with pytest.raises(Exception):
        TwoStepDecoder().predict_homology(np.zeros((1, 9)))
