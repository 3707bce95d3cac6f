"""Meta-learning regressor: a 2x10 tanh network mapping constraint features and
solver-parameter encodings to predicted FEN per solver, fitted with
Levenberg-Marquardt."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .features import FEATURE_LENGTH, FeatureVector, NormStats, extract_features, fit_norm
from .solvers import ENCODED_FIELDS, SOLVER_ORDER, SolverConfig, SolverKind, encode_configs

HIDDEN = (10, 10)
N_OUT = len(SOLVER_ORDER)
N_IN = FEATURE_LENGTH + len(SOLVER_ORDER) * len(ENCODED_FIELDS)
FORMAT_NAME = "copselect-model"
FORMAT_VERSION = 1


class ModelError(ValueError):
    pass


class ModelFileError(ModelError):
    pass


class TrainingError(ModelError):
    pass


@dataclass
class PredictionModel:
    layer_sizes: tuple
    weights: list  # [(W (out, in), b (out,)), ...]
    input_norm: Optional[NormStats] = None
    output_norm: Optional[NormStats] = None
    budget: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise ModelError("one (W, b) pair per layer is required")
        for (w, b), n_in, n_out in zip(self.weights, self.layer_sizes[:-1], self.layer_sizes[1:]):
            if np.shape(w) != (n_out, n_in) or np.shape(b) != (n_out,):
                raise ModelError("weight shapes do not match layer_sizes")

    @property
    def n_params(self) -> int:
        return sum(o * i + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def flat(self) -> np.ndarray:
        return pack(self.weights)

    def with_flat(self, w: np.ndarray) -> "PredictionModel":
        return PredictionModel(self.layer_sizes, unpack(w, self.layer_sizes), self.input_norm,
                               self.output_norm, self.budget, dict(self.metadata))


@dataclass(frozen=True)
class PredictionResult:
    predicted_fen: Dict[SolverKind, float]
    best: SolverKind


@dataclass(frozen=True)
class LMConfig:
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    lambda_max: float = 1e10
    max_epochs: int = 500
    sse_tol: float = 1e-12
    seed: int = 0
    validation_fraction: float = 0.2
    patience: int = 20

    def __post_init__(self):
        if self.lambda0 <= 0 or self.lambda_up <= 1.0 or not 0.0 < self.lambda_down < 1.0:
            raise ModelError("need lambda0 > 0, lambda_up > 1 and 0 < lambda_down < 1")
        if self.max_epochs < 0 or not 0.0 <= self.validation_fraction < 1.0 or self.patience < 1:
            raise ModelError("invalid epoch, validation or patience setting")


@dataclass
class TrainingLog:
    train_sse: List[float] = field(default_factory=list)  # after each accepted epoch
    valid_sse: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""


# -- parameters ----------------------------------------------------------------

def pack(weights) -> np.ndarray:
    return np.concatenate([np.concatenate([np.asarray(w, float).ravel(), np.asarray(b, float)])
                           for w, b in weights])


def unpack(flat: np.ndarray, layer_sizes: Sequence[int]) -> list:
    out, pos = [], 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = np.array(flat[pos:pos + n_in * n_out], dtype=float).reshape(n_out, n_in)
        pos += n_in * n_out
        b = np.array(flat[pos:pos + n_out], dtype=float)
        pos += n_out
        out.append((w, b))
    if pos != len(flat):
        raise ModelError(f"parameter vector has {len(flat)} entries, layout needs {pos}")
    return out


def init_model(n_in: int = N_IN, seed: int = 0, hidden=HIDDEN, n_out: int = N_OUT) -> PredictionModel:
    """Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    sizes = (n_in,) + tuple(hidden) + (n_out,)
    rng = np.random.default_rng(seed)
    weights = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(a)
        weights.append((rng.uniform(-bound, bound, (b, a)), rng.uniform(-bound, bound, b)))
    return PredictionModel(sizes, weights)


# -- network -------------------------------------------------------------------

def _activations(weights, x: np.ndarray) -> list:
    acts = [x]
    for i, (w, b) in enumerate(weights):
        z = acts[-1] @ w.T + b
        acts.append(z if i == len(weights) - 1 else np.tanh(z))
    return acts


def forward(model: PredictionModel, x) -> np.ndarray:
    """Network output for one input (n_in,) or a batch (N, n_in)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_sizes[0]:
        raise ModelError(f"input length {x.shape[-1]} does not match n_in={model.layer_sizes[0]}")
    return _activations(model.weights, x)[-1]


def output_jacobian(model: PredictionModel, x) -> tuple:
    """Outputs (N, n_out) and d outputs / d flat params as (N * n_out, P).

    Rows are ordered sample-major, so row ``n * n_out + k`` is output ``k`` of
    sample ``n``; columns follow :func:`pack`.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    weights = model.weights
    acts = _activations(weights, x)
    n, n_out = x.shape[0], model.layer_sizes[-1]
    blocks = [None] * len(weights)
    # delta[n, k, :] = d out_k / d z at the current layer
    delta = np.broadcast_to(np.eye(n_out), (n, n_out, n_out))
    for layer in range(len(weights) - 1, -1, -1):
        a_prev = acts[layer]
        gw = delta[:, :, :, None] * a_prev[:, None, None, :]
        blocks[layer] = np.concatenate([gw.reshape(n, n_out, -1), delta], axis=2)
        if layer:
            w = weights[layer][0]
            delta = (delta @ w) * (1.0 - acts[layer] ** 2)[:, None, :]
    jac = np.concatenate(blocks, axis=2).reshape(n * n_out, -1)
    return acts[-1], jac


def residuals(model: PredictionModel, x, t) -> np.ndarray:
    return (forward(model, np.atleast_2d(x)) - np.atleast_2d(t)).ravel()


# -- training ------------------------------------------------------------------

def _sse(model, x, t) -> float:
    r = residuals(model, x, t)
    return float(r @ r)


def lm_step(model: PredictionModel, x, t, lam: float) -> np.ndarray:
    """Solve (J^T J + lam I) dw = -J^T r."""
    out, jac = output_jacobian(model, x)
    r = (out - np.atleast_2d(t)).ravel()
    a = jac.T @ jac
    a[np.diag_indices_from(a)] += lam
    return np.linalg.solve(a, -jac.T @ r)


def split_indices(n: int, fraction: float, seed: int) -> tuple:
    """Shuffled train/validation split; no validation set below 10 samples."""
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(round(fraction * n)) if n >= 10 else 0
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train_lm(inputs, targets, config: LMConfig = LMConfig(), model: Optional[PredictionModel] = None,
             log: Optional[TrainingLog] = None) -> PredictionModel:
    """Fit a network to pre-normalised ``inputs`` and ``targets``.

    Each epoch takes one accepted LM step, raising lambda on rejection until
    the training SSE decreases.  With a validation split the weights of the
    best validation epoch are returned and training stops after ``patience``
    epochs without improvement.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if x.shape[0] == 0 or x.shape[0] != t.shape[0]:
        raise TrainingError("inputs and targets must be non-empty and of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise TrainingError("training data must be finite")
    if model is None:
        model = init_model(x.shape[1], config.seed, n_out=t.shape[1])
    log = log if log is not None else TrainingLog()

    tr, va = split_indices(x.shape[0], config.validation_fraction, config.seed)
    xt, tt, xv, tv = x[tr], t[tr], x[va], t[va]
    w = model.flat()
    sse = _sse(model, xt, tt)
    if not math.isfinite(sse):
        raise TrainingError("non-finite SSE at initialisation")
    best_w, best_val = w, (_sse(model, xv, tv) if len(va) else sse)
    lam, since_best, epoch = config.lambda0, 0, 0
    log.stop_reason = "max_epochs"
    while epoch < config.max_epochs:
        if sse <= config.sse_tol:
            log.stop_reason = "sse_tol"
            break
        current = model.with_flat(w)
        accepted = False
        while lam <= config.lambda_max:
            try:
                dw = lm_step(current, xt, tt, lam)
            except np.linalg.LinAlgError:
                lam *= config.lambda_up
                continue
            trial = model.with_flat(w + dw)
            new = _sse(trial, xt, tt)
            if math.isfinite(new) and new < sse:
                w, sse, accepted = w + dw, new, True
                lam = max(lam * config.lambda_down, 1e-300)
                break
            lam *= config.lambda_up
        if not accepted:
            log.stop_reason = "lambda_max"
            break
        epoch += 1
        log.train_sse.append(sse)
        if len(va):
            val = _sse(model.with_flat(w), xv, tv)
            log.valid_sse.append(val)
            if val < best_val:
                best_w, best_val, since_best, log.best_epoch = w, val, 0, epoch
            else:
                since_best += 1
                if since_best >= config.patience:
                    log.stop_reason = "early_stop"
                    break
        else:
            best_w, log.best_epoch = w, epoch
    fitted = model.with_flat(best_w)
    fitted.metadata.update(epochs=epoch, best_epoch=log.best_epoch, final_sse=_sse(fitted, xt, tt),
                           stop_reason=log.stop_reason)
    return fitted


# -- data preparation and prediction -------------------------------------------

def encode_input(features, configs: Dict[SolverKind, SolverConfig]) -> np.ndarray:
    fv = features.as_array() if isinstance(features, FeatureVector) else np.asarray(features, dtype=float)
    return np.concatenate([fv, encode_configs(configs)])


def fit_model(features: Sequence, fens, configs: Dict[SolverKind, SolverConfig], budget: float,
              config: LMConfig = LMConfig(), metadata: Optional[dict] = None,
              log: Optional[TrainingLog] = None) -> PredictionModel:
    """Normalise raw features and FENs, train, and attach the norm statistics.

    ``fens`` is (N, 3) in solver order DE, ES, PSO.
    """
    raw_x = np.vstack([encode_input(f, configs) for f in features])
    raw_t = np.asarray(fens, dtype=float) / float(budget)
    in_norm, out_norm = fit_norm(raw_x), fit_norm(raw_t)
    model = train_lm(in_norm.apply(raw_x), out_norm.apply(raw_t), config, log=log)
    model.input_norm, model.output_norm, model.budget = in_norm, out_norm, float(budget)
    model.metadata.update(metadata or {})
    model.metadata.setdefault("seed", config.seed)
    return model


def _argmin_tiebreak(values: Sequence[float]) -> int:
    # np.argmin returns the first minimum, which is the DE < ES < PSO order
    return int(np.argmin(np.asarray(values, dtype=float)))


def predict_features(model: PredictionModel, features, configs: Dict[SolverKind, SolverConfig]) -> PredictionResult:
    if model.input_norm is None or model.output_norm is None:
        raise ModelFileError("model carries no normalisation statistics")
    z = model.input_norm.apply(encode_input(features, configs))
    fen = model.output_norm.invert(forward(model, z)) * model.budget
    pred = {k: float(v) for k, v in zip(SOLVER_ORDER, fen)}
    return PredictionResult(pred, SOLVER_ORDER[_argmin_tiebreak(fen)])


def predict(model: PredictionModel, instance, configs: Dict[SolverKind, SolverConfig]) -> PredictionResult:
    """Extract features with the settings stored at training time and predict."""
    md = model.metadata
    fv = extract_features(instance, int(md.get("n_samples", 10_000)),
                          float(md.get("vicinity_radius_fraction", 0.1)), int(md.get("feature_seed", 0)))
    return predict_features(model, fv, configs)


# -- persistence ---------------------------------------------------------------

def model_to_dict(model: PredictionModel) -> dict:
    def norm(ns):
        return None if ns is None else {"mean": list(ns.mean), "scale": list(ns.scale)}

    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "activation": "tanh",
        "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in model.weights],
        "input_norm": norm(model.input_norm),
        "output_norm": norm(model.output_norm),
        "budget": model.budget,
        "solver_order": [k.value for k in SOLVER_ORDER],
        "metadata": model.metadata,
    }


def model_from_dict(doc: dict) -> PredictionModel:
    if doc.get("format") != FORMAT_NAME:
        raise ModelFileError("not a model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFileError(f"model file version {doc.get('version')} is not supported "
                             f"(this build reads version {FORMAT_VERSION})")
    try:
        weights = [(np.array(l["W"], dtype=float), np.array(l["b"], dtype=float)) for l in doc["layers"]]
        norms = []
        for key in ("input_norm", "output_norm"):
            ns = doc[key]
            if ns is None:
                raise ModelFileError(f"model file has no {key}")
            norms.append(NormStats(tuple(float(v) for v in ns["mean"]), tuple(float(v) for v in ns["scale"])))
        model = PredictionModel(tuple(doc["layer_sizes"]), weights, norms[0], norms[1],
                                float(doc["budget"]), dict(doc.get("metadata", {})))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"malformed model file: {exc}") from exc
    return model


def save_model(model: PredictionModel, path) -> None:
    text = json.dumps(model_to_dict(model), indent=1)
    with open(path, "w") as fh:
        fh.write(text + "\n")


def load_model(path) -> PredictionModel:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"cannot parse model file {path}: {exc}") from exc
    return model_from_dict(doc)
