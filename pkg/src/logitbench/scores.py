"""Post-hoc OOD scoring functions. Every score maps (model, input row) to a
real number where higher means more in-distribution.

MSP:      max softmax probability.
ODIN:     temperature-scaled MSP after a small input perturbation toward
          higher confidence; reduces to MSP exactly at T=1, eps=0.
Energy:   T * logsumexp(f / T), the negated free energy.
GradNorm: L1 norm of the last-layer weight gradient of the cross-entropy
          between softmax(f / T) and the uniform distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .model import MlpModel, forward, forward_traced
from .tensor import Matrix2D, rowwise_softmax

MSP = "msp"
ODIN = "odin"
ENERGY = "energy"
GRADNORM = "gradnorm"
SCORE_KINDS = (MSP, ODIN, ENERGY, GRADNORM)


@dataclass(frozen=True)
class ScoreConfig:
    kind: str = MSP
    odin_T: float = 1000.0
    odin_eps: float = 0.0014
    energy_T: float = 1.0
    gradnorm_T: float = 1.0

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ConfigError(f"unknown score kind {self.kind!r}, expected one of {SCORE_KINDS}")
        if self.odin_T <= 0 or self.energy_T <= 0 or self.gradnorm_T <= 0:
            raise ConfigError("score temperatures must be positive")
        if self.odin_eps < 0:
            raise ConfigError(f"odin_eps must be nonnegative, got {self.odin_eps}")

    @property
    def name(self) -> str:
        return self.kind


@dataclass(frozen=True)
class ScoredExample:
    score: float
    origin: str  # "ID" or "OOD"

    def __post_init__(self):
        if self.origin not in ("ID", "OOD"):
            raise DataError(f"origin must be ID or OOD, got {self.origin!r}")
        if not np.isfinite(self.score):
            raise DataError(f"score must be finite, got {self.score}")


def _as_row(x) -> Matrix2D:
    if isinstance(x, Matrix2D):
        return x
    return Matrix2D(np.asarray(x, dtype=np.float64).reshape(1, -1))


def msp_score(model: MlpModel, x) -> float:
    logits = forward(model, _as_row(x))
    return float(rowwise_softmax(logits)[0].max())


def odin_score(model: MlpModel, x, T: float = 1000.0, eps: float = 0.0014) -> float:
    """Perturb the input to increase the temperature-scaled max softmax,
    then score the perturbed input with temperature-scaled MSP."""
    if T <= 0:
        raise ConfigError(f"T must be positive, got {T}")
    x = _as_row(x)
    if eps > 0.0:
        trace = forward_traced(model, x, input_grad=True)
        scaled = trace.tape.scale(trace.logits, 1.0 / T)
        pred = np.array([int(np.argmax(trace.logits.value[0]))])
        # CE to the predicted class is -log S_pred, so stepping against its
        # gradient increases the max softmax.
        nll = trace.tape.softmax_cross_entropy(scaled, pred)
        trace.tape.backward(nll)
        grad = trace.tape.grad(trace.input)
        x = Matrix2D(x.data - eps * np.sign(grad))
    logits = forward(model, x)
    return float(rowwise_softmax(logits.data / T)[0].max())


def energy_score(model: MlpModel, x, T: float = 1.0) -> float:
    if T <= 0:
        raise ConfigError(f"T must be positive, got {T}")
    logits = forward(model, _as_row(x)).data[0] / T
    m = logits.max()
    return float(T * (m + np.log(np.exp(logits - m).sum())))


def gradnorm_score(model: MlpModel, x, T: float = 1.0) -> float:
    if T <= 0:
        raise ConfigError(f"T must be positive, got {T}")
    trace = forward_traced(model, _as_row(x))
    scaled = trace.tape.scale(trace.logits, 1.0 / T)
    loss = trace.tape.uniform_cross_entropy(scaled)
    trace.tape.backward(loss)
    return float(np.abs(trace.tape.grad(trace.weights[-1])).sum())


def score_one(model: MlpModel, x, cfg: ScoreConfig) -> float:
    if cfg.kind == MSP:
        return msp_score(model, x)
    if cfg.kind == ODIN:
        return odin_score(model, x, cfg.odin_T, cfg.odin_eps)
    if cfg.kind == ENERGY:
        return energy_score(model, x, cfg.energy_T)
    return gradnorm_score(model, x, cfg.gradnorm_T)


def score_batch(model: MlpModel, features: Matrix2D, cfg: ScoreConfig) -> np.ndarray:
    """Score every row; examples are independent, looped for simplicity."""
    return np.array([score_one(model, features.data[i:i + 1], cfg)
                     for i in range(features.rows)])


# Score dump interchange: one "<origin>,<decimal>" record per line.

def write_scores(path, scored: list[ScoredExample]) -> None:
    with open(path, "w") as fh:
        for ex in scored:
            fh.write(f"{ex.origin},{ex.score:.17g}\n")


def read_scores(path) -> list[ScoredExample]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                origin, value = line.split(",")
                out.append(ScoredExample(float(value), origin))
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    if not out:
        raise DataError(f"{path}: empty score dump")
    return out
