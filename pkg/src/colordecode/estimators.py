"""scikit-learn style front end for the two-step decoder.

Decoders take syndromes (rows of length F) and expose

* ``predict_homology(S)``: residual class per row, in ``[0, 16)``;
* ``predict(S)``: the full correction (step-one estimate plus logical);
* ``score(E)``: fraction of the given errors decoded successfully.

``HomologyMLPClassifier`` is a plain classifier over arbitrary features and
can be used on its own, e.g. inside a ``Pipeline`` after
``SyndromeEncoder``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import gf2
from .channel import MODES, encode_inputs
from .color_code import build_code
from .hinv import decode_step_one
from .homology import NUM_CLASSES, MLDOracle, final_correction, is_success
from .neural import (
    AdamState,
    MlpConfig,
    ShapeMismatch,
    adam_step,
    init_model,
    load_checkpoint,
    log_softmax,
    loss_and_grad,
    predict_logits,
    save_checkpoint,
)
from .training import APPROACH_MODES, STANDARD_LADDER, TrainPlan, train_progressive


def _check_syndromes(S, code) -> np.ndarray:
    S = check_array(S, dtype=None, ensure_2d=False)
    S = np.atleast_2d(gf2.as_bits(S))
    if S.shape[1] != code.num_faces:
        raise ValueError(f"syndromes have {S.shape[1]} columns, code has F={code.num_faces}")
    return S


class _DecoderMixin:
    """Shared ``predict``/``score`` on top of ``predict_homology``."""

    def predict(self, S):
        code = self._code
        S = _check_syndromes(S, code)
        return final_correction(code, S, self.predict_homology(S))

    def score(self, E, y=None):
        code = self._code
        E = np.atleast_2d(gf2.as_bits(check_array(E, dtype=None)))
        corrections = self.predict(code.syndrome(E))
        return float(np.mean(is_success(code, E, corrections)))

    @property
    def _code(self):
        return build_code(self.code)


class HInverseDecoder(_DecoderMixin, BaseEstimator):
    """Step-one estimate used as the final correction (residual class always 0)."""

    decoder_id = "hinv"

    def __init__(self, code=(3, 3, 0)):
        self.code = code

    def fit(self, X=None, y=None):
        self.code_ = self._code
        return self

    def predict_homology(self, S):
        S = _check_syndromes(S, self._code)
        return np.zeros(S.shape[0], dtype=np.int64)

    def transform(self, S):
        """Step-one error estimates ``e_hat``."""
        return decode_step_one(self._code, _check_syndromes(S, self._code))


class MaximumLikelihoodDecoder(_DecoderMixin, BaseEstimator):
    """Exact coset-probability decoder; small codes only."""

    decoder_id = "mld"

    def __init__(self, code=(3, 3, 0), p_err=None, max_log2=16):
        self.code = code
        self.p_err = p_err
        self.max_log2 = max_log2

    def fit(self, X=None, y=None):
        self.oracle_ = self._oracle()
        return self

    def _oracle(self):
        if self.p_err is None:
            raise ValueError("MaximumLikelihoodDecoder needs p_err")
        cached = getattr(self, "oracle_", None)
        if cached is not None and cached.p_err == self.p_err and cached.code is self._code:
            return cached
        self.oracle_ = MLDOracle(self._code, self.p_err, self.max_log2)
        return self.oracle_

    def predict_homology(self, S):
        return self._oracle().predict_homology(_check_syndromes(S, self._code))

    def predict_proba(self, S):
        oracle = self._oracle()
        return np.array([oracle.posterior(s)[1] for s in _check_syndromes(S, self._code)])


class SyndromeEncoder(TransformerMixin, BaseEstimator):
    """Syndromes to network inputs: ``s`` (approach 1) or ``e_hat`` then ``s`` (approach 2)."""

    def __init__(self, code=(3, 3, 0), approach=1):
        self.code = code
        self.approach = approach

    def fit(self, S=None, y=None):
        if self.approach not in APPROACH_MODES:
            raise ValueError(f"approach must be 1 or 2, got {self.approach!r}")
        self.code_ = build_code(self.code)
        self.mode_ = APPROACH_MODES[self.approach]
        return self

    def transform(self, S):
        check_is_fitted(self, "code_")
        S = _check_syndromes(S, self.code_)
        e_hat = decode_step_one(self.code_, S) if self.mode_ == "concat_estimate" else None
        return encode_inputs(S, e_hat, self.mode_)


class HomologyMLPClassifier(ClassifierMixin, BaseEstimator):
    """16-way fully connected classifier trained with Adam on cross-entropy.

    ``fit`` runs ``epochs`` passes over the given data in shuffled
    mini-batches; ``partial_fit`` performs Adam steps on the given rows
    only, which is what streaming training uses.
    """

    def __init__(
        self,
        hidden_layers=1,
        hidden_width=18,
        learning_rate=1e-3,
        batch_size=500,
        epochs=1,
        output_batchnorm=True,
        bn_after_activation=False,
        random_state=0,
    ):
        self.hidden_layers = hidden_layers
        self.hidden_width = hidden_width
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.output_batchnorm = output_batchnorm
        self.bn_after_activation = bn_after_activation
        self.random_state = random_state

    def _init(self, n_features):
        config = MlpConfig(
            input_dim=n_features,
            hidden_layers=self.hidden_layers,
            hidden_width=self.hidden_width,
            output_dim=NUM_CLASSES,
            output_batchnorm=self.output_batchnorm,
            bn_after_activation=self.bn_after_activation,
        )
        self.model_ = init_model(config, self.random_state)
        self.adam_ = AdamState(lr=self.learning_rate)
        self.classes_ = np.arange(NUM_CLASSES)
        self.n_features_in_ = n_features
        self.loss_curve_ = []

    def _steps(self, X, y):
        for start in range(0, len(y), self.batch_size):
            xb, yb = X[start : start + self.batch_size], y[start : start + self.batch_size]
            if len(yb) < 2:
                continue
            loss, grads = loss_and_grad(self.model_, xb, yb)
            adam_step(self.model_, self.adam_, grads)
            self.loss_curve_.append(loss)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        self._init(X.shape[1])
        rng = np.random.default_rng(self.random_state)
        for _ in range(self.epochs):
            order = rng.permutation(len(y))
            self._steps(X[order], y[order])
        self.model_.eval()
        return self

    def partial_fit(self, X, y, classes=None):
        X, y = check_X_y(X, y, dtype=np.float32)
        if not hasattr(self, "model_"):
            self._init(X.shape[1])
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        self.model_.train()
        self._steps(X, y)
        self.model_.eval()
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float32)
        return predict_logits(self.model_, X)

    def predict_proba(self, X):
        return np.exp(log_softmax(self.decision_function(X)))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def to_bytes(self, metadata=None) -> bytes:
        check_is_fitted(self, "model_")
        return save_checkpoint(self.model_, self.adam_, metadata)


class TwoStepDecoder(_DecoderMixin, BaseEstimator):
    """Pseudo-inverse first step plus a neural homology classifier.

    ``fit`` generates its own training data: progressive training over
    ``error_rates`` with ``samples_per_rate`` fresh samples per rate. The
    ``X``/``y`` arguments are accepted for API compatibility and ignored.
    """

    def __init__(
        self,
        code=(3, 3, 0),
        approach=1,
        hidden_layers=1,
        hidden_factor=2.0,
        batch_size=500,
        learning_rate=1e-3,
        error_rates=STANDARD_LADDER,
        samples_per_rate=10**6,
        validation_samples=10**5,
        output_batchnorm=True,
        bn_after_activation=False,
        seed=0,
    ):
        self.code = code
        self.approach = approach
        self.hidden_layers = hidden_layers
        self.hidden_factor = hidden_factor
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.error_rates = error_rates
        self.samples_per_rate = samples_per_rate
        self.validation_samples = validation_samples
        self.output_batchnorm = output_batchnorm
        self.bn_after_activation = bn_after_activation
        self.seed = seed

    @property
    def decoder_id(self):
        return f"nn{self.approach}"

    def plan(self) -> TrainPlan:
        return TrainPlan(
            code=self.code,
            approach=self.approach,
            error_rates=tuple(self.error_rates),
            samples_per_rate=self.samples_per_rate,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            hidden_layers=self.hidden_layers,
            hidden_factor=self.hidden_factor,
            seed=self.seed,
            validation_samples=self.validation_samples,
            output_batchnorm=self.output_batchnorm,
            bn_after_activation=self.bn_after_activation,
        )

    def fit(self, X=None, y=None, out_dir=None):
        result = train_progressive(self.plan(), out_dir=out_dir)
        self._set_fitted(result.model)
        self.history_ = result.history
        self.rates_ = result.rates
        self.adam_ = result.adam
        return self

    def _set_fitted(self, model):
        if self.approach not in APPROACH_MODES:
            raise ValueError(f"approach must be 1 or 2, got {self.approach!r}")
        self.model_ = model.eval()
        self.code_ = build_code(self.code)
        self.mode_ = APPROACH_MODES[self.approach]
        self.n_features_in_ = self.code_.num_faces

    def _inputs(self, S):
        e_hat = decode_step_one(self.code_, S) if self.mode_ == "concat_estimate" else None
        return encode_inputs(S, e_hat, self.mode_)

    def predict_homology(self, S):
        check_is_fitted(self, "model_")
        S = _check_syndromes(S, self.code_)
        return np.argmax(predict_logits(self.model_, self._inputs(S)), axis=1)

    def predict_proba(self, S):
        check_is_fitted(self, "model_")
        S = _check_syndromes(S, self.code_)
        return np.exp(log_softmax(predict_logits(self.model_, self._inputs(S))))

    def to_bytes(self, metadata=None) -> bytes:
        check_is_fitted(self, "model_")
        meta = {"plan": self.plan().to_dict(), **(metadata or {})}
        return save_checkpoint(self.model_, getattr(self, "adam_", None), meta)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TwoStepDecoder":
        """Rebuild a fitted decoder from checkpoint bytes written by training."""
        model, adam, meta = load_checkpoint(data)
        plan = TrainPlan.from_dict(meta["plan"])
        dec = cls(
            code=plan.code,
            approach=plan.approach,
            hidden_layers=plan.hidden_layers,
            hidden_factor=plan.hidden_factor,
            batch_size=plan.batch_size,
            learning_rate=plan.learning_rate,
            error_rates=plan.error_rates,
            samples_per_rate=plan.samples_per_rate,
            validation_samples=plan.validation_samples,
            output_batchnorm=plan.output_batchnorm,
            bn_after_activation=plan.bn_after_activation,
            seed=plan.seed,
        )
        if model.config != plan.mlp_config():
            raise ShapeMismatch("checkpoint network does not match its recorded plan")
        dec._set_fitted(model)
        dec.adam_ = adam
        return dec

    @classmethod
    def from_result(cls, result) -> "TwoStepDecoder":
        """Wrap a :class:`~colordecode.training.TrainResult` as a fitted decoder."""
        plan = result.plan
        dec = cls(**{k: v for k, v in plan.to_dict().items() if k in cls._get_param_names()})
        dec.code = tuple(plan.code)
        dec.error_rates = tuple(plan.error_rates)
        dec._set_fitted(result.model)
        dec.history_ = result.history
        dec.rates_ = result.rates
        dec.adam_ = result.adam
        return dec


__all__ = [
    "HInverseDecoder",
    "MaximumLikelihoodDecoder",
    "SyndromeEncoder",
    "HomologyMLPClassifier",
    "TwoStepDecoder",
    "MODES",
]
