"""Environment core: context models, reward models, regret accounting.

Conventions, applied identically to every algorithm so comparisons are fair:

* every sampled context vector has Euclidean norm <= 1 and every realized
  reward lies in [0, 1] (checked on each draw);
* the mean reward of playing feature vector x is (<x, theta*> + 1) / 2 --
  an affine map of the raw linear score into [0, 1].  It is monotone, so
  the optimal action is unchanged.  Learners undo the map on receipt
  (r -> 2r - 1), recovering a conditional mean of exactly <x, theta*>, so
  their least-squares estimates target theta* itself;
* regret is accounted in raw linear-score units:
  max_a <X_a, theta*> - <X_chosen, theta*>.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .quantizer import AssumptionViolation

__all__ = [
    "GaussianProjected",
    "BinarySupport",
    "CustomDiscrete",
    "Bernoulli",
    "TruncatedGaussian",
    "EnvironmentSpec",
    "sample_context",
    "sample_contexts",
    "context_mean",
    "mean_reward",
    "realize_reward",
    "regret_gap",
    "RegretTrace",
    "ExcitationDiagnostic",
    "assumption2_diagnostic",
]

_TOL = 1e-9
_NORMAL = NormalDist()


# --------------------------------------------------------------------------
# context models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianProjected:
    """Per-action isotropic Gaussians, rescaled onto the unit ball when outside."""

    scales: tuple[float, ...]  # covariance scale c_a; X ~ N(0, c_a I) then projected

    def __post_init__(self):
        if any(c < 0 for c in self.scales):
            raise ValueError("covariance scales must be nonnegative")


@dataclass(frozen=True)
class BinarySupport:
    """Coordinates are +-1/sqrt(d) i.i.d.; p_minus[a] = P(coordinate = -1/sqrt(d)).

    At d=1 this is the two-point +-1 distribution.
    """

    p_minus: tuple[float, ...]

    def __post_init__(self):
        if any(not 0.0 <= p <= 1.0 for p in self.p_minus):
            raise ValueError("p_minus entries must lie in [0, 1]")


@dataclass(frozen=True)
class CustomDiscrete:
    """Explicit finite support per action: supports[a] is (S_a, d), probs[a] sums to 1."""

    supports: tuple
    probs: tuple

    def __post_init__(self):
        for a, (sup, p) in enumerate(zip(self.supports, self.probs)):
            sup = np.asarray(sup, dtype=float)
            p = np.asarray(p, dtype=float)
            if sup.ndim != 2 or sup.shape[0] != p.size:
                raise ValueError(f"action {a}: support/probs shape mismatch")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"action {a}: probabilities must be a distribution")
            if np.any(np.linalg.norm(sup, axis=1) > 1.0 + _TOL):
                raise ValueError(f"action {a}: support vector outside the unit ball")


# --------------------------------------------------------------------------
# reward models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Bernoulli:
    """Reward is 1 with probability equal to the mapped mean, else 0."""


@dataclass(frozen=True)
class TruncatedGaussian:
    """Mean plus Gaussian noise truncated symmetrically so r stays in [0, 1].

    The truncation window is +-min(mu, 1-mu), so the noise is exactly
    zero-mean and the realized reward never leaves [0, 1].  Sampling uses
    the inverse CDF, consuming one uniform draw per reward regardless of
    the window, which keeps paired-seed runs aligned.
    """

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


# --------------------------------------------------------------------------
# environment spec
# --------------------------------------------------------------------------

@dataclass
class EnvironmentSpec:
    """Immutable description of one simulated bandit environment."""

    d: int
    n_actions: int
    theta_star: np.ndarray
    context_model: object
    noise_model: object
    horizon: int

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        problems = self.validate()
        if problems:
            raise ValueError("invalid environment spec: " + "; ".join(problems))

    def validate(self) -> list[str]:
        """Return a list of every constraint violation (empty when valid)."""
        problems = []
        if self.d < 1:
            problems.append(f"dimension must be >= 1, got {self.d}")
        if self.n_actions < 1:
            problems.append(f"need at least one action, got {self.n_actions}")
        if self.theta_star.shape != (self.d,):
            problems.append(
                f"theta_star shape {self.theta_star.shape} does not match d={self.d}"
            )
        elif np.linalg.norm(self.theta_star) > 1.0 + _TOL:
            problems.append(
                f"||theta_star|| = {np.linalg.norm(self.theta_star):.6g} exceeds 1"
            )
        if self.horizon < 0:
            problems.append(f"horizon must be nonnegative, got {self.horizon}")
        cm = self.context_model
        if isinstance(cm, GaussianProjected) and len(cm.scales) != self.n_actions:
            problems.append("one Gaussian scale per action required")
        if isinstance(cm, BinarySupport) and len(cm.p_minus) != self.n_actions:
            problems.append("one p_minus per action required")
        if isinstance(cm, CustomDiscrete):
            if len(cm.supports) != self.n_actions:
                problems.append("one support table per action required")
            else:
                for a, sup in enumerate(cm.supports):
                    if np.asarray(sup).shape[1] != self.d:
                        problems.append(f"action {a}: support dimension != d")
        if not isinstance(cm, (GaussianProjected, BinarySupport, CustomDiscrete)):
            problems.append(f"unknown context model {type(cm).__name__}")
        if not isinstance(self.noise_model, (Bernoulli, TruncatedGaussian)):
            problems.append(f"unknown noise model {type(self.noise_model).__name__}")
        return problems

    def digest(self) -> str:
        """Stable hash of the spec, recorded in traces for provenance."""
        payload = {
            "d": self.d,
            "n_actions": self.n_actions,
            "theta_star": self.theta_star.tolist(),
            "context_model": repr(self.context_model),
            "noise_model": repr(self.noise_model),
            "horizon": self.horizon,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def sample_contexts(spec: EnvironmentSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. context sets, shape (n, n_actions, d), norms <= 1."""
    cm = spec.context_model
    K, d = spec.n_actions, spec.d
    if isinstance(cm, GaussianProjected):
        out = rng.standard_normal((n, K, d))
        out *= np.sqrt(np.asarray(cm.scales))[None, :, None]
        norms = np.linalg.norm(out, axis=2, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 1.0)
    elif isinstance(cm, BinarySupport):
        p = np.asarray(cm.p_minus)[None, :, None]
        signs = np.where(rng.random((n, K, d)) < p, -1.0, 1.0)
        out = signs / math.sqrt(d)
    elif isinstance(cm, CustomDiscrete):
        out = np.empty((n, K, d))
        for a in range(K):
            sup = np.asarray(cm.supports[a], dtype=float)
            idx = rng.choice(sup.shape[0], size=n, p=np.asarray(cm.probs[a], dtype=float))
            out[:, a, :] = sup[idx]
    else:
        raise ValueError(f"unknown context model {type(cm).__name__}")
    if np.any(np.linalg.norm(out, axis=2) > 1.0 + _TOL):
        raise AssumptionViolation("sampled context outside the unit ball")
    return out


def sample_context(spec: EnvironmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one context set, shape (n_actions, d)."""
    return sample_contexts(spec, 1, rng)[0]


def context_mean(spec: EnvironmentSpec, action: int) -> np.ndarray:
    """Exact E[X_a] for the given action."""
    cm = spec.context_model
    if isinstance(cm, GaussianProjected):
        return np.zeros(spec.d)  # symmetric about the origin, projection included
    if isinstance(cm, BinarySupport):
        mean_coord = (1.0 - 2.0 * cm.p_minus[action]) / math.sqrt(spec.d)
        return np.full(spec.d, mean_coord)
    if isinstance(cm, CustomDiscrete):
        sup = np.asarray(cm.supports[action], dtype=float)
        p = np.asarray(cm.probs[action], dtype=float)
        return p @ sup
    raise ValueError(f"unknown context model {type(cm).__name__}")


# --------------------------------------------------------------------------
# rewards
# --------------------------------------------------------------------------

def mean_reward(spec: EnvironmentSpec, x: np.ndarray) -> float:
    """Mapped mean reward of playing feature vector x: (<x, theta*> + 1) / 2."""
    score = float(np.dot(x, spec.theta_star))
    if abs(score) > 1.0 + _TOL:
        raise AssumptionViolation(f"|<x, theta*>| = {abs(score)} exceeds 1")
    return min(max((score + 1.0) / 2.0, 0.0), 1.0)


def realize_reward(spec: EnvironmentSpec, x: np.ndarray, rng: np.random.Generator) -> float:
    """Draw one reward in [0, 1] with conditional mean mean_reward(spec, x)."""
    mu = mean_reward(spec, x)
    nm = spec.noise_model
    if isinstance(nm, Bernoulli):
        r = float(rng.random() < mu)
    elif isinstance(nm, TruncatedGaussian):
        w = min(mu, 1.0 - mu)
        u = rng.random()  # always consume one draw to keep streams aligned
        if nm.sigma == 0.0 or w == 0.0:
            r = mu
        else:
            lo = _NORMAL.cdf(-w / nm.sigma)
            hi = _NORMAL.cdf(w / nm.sigma)
            r = mu + nm.sigma * _NORMAL.inv_cdf(lo + u * (hi - lo))
    else:
        raise ValueError(f"unknown noise model {type(nm).__name__}")
    if not 0.0 - _TOL <= r <= 1.0 + _TOL:
        raise AssumptionViolation(f"realized reward {r} outside [0, 1]")
    return min(max(r, 0.0), 1.0)


# --------------------------------------------------------------------------
# regret accounting
# --------------------------------------------------------------------------

def regret_gap(context_set: np.ndarray, theta_star: np.ndarray, action: int) -> float:
    """Instantaneous regret max_a <X_a, theta*> - <X_action, theta*> (>= 0)."""
    scores = context_set @ theta_star
    return float(scores.max() - scores[action])


class RegretTrace:
    """Per-round regret and uplink-bit log for one simulation."""

    def __init__(self, seed: int, spec_digest: str = ""):
        self.seed = seed
        self.spec_digest = spec_digest
        self.inst_regret: list[float] = []
        self.cum_regret: list[float] = []
        self.bits: list[int] = []

    def __len__(self) -> int:
        return len(self.inst_regret)

    def record(self, inst: float, bits: int) -> None:
        if inst < -_TOL:
            raise ValueError(f"negative instantaneous regret {inst}")
        prev = self.cum_regret[-1] if self.cum_regret else 0.0
        self.inst_regret.append(inst)
        self.cum_regret.append(prev + inst)
        self.bits.append(bits)

    @property
    def total_regret(self) -> float:
        return self.cum_regret[-1] if self.cum_regret else 0.0

    def regret_at(self, t: int) -> float:
        """Cumulative regret after round t (1-based)."""
        if not 1 <= t <= len(self):
            raise ValueError(f"round {t} outside 1..{len(self)}")
        return self.cum_regret[t - 1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "inst_regret", "cum_regret", "bits"])
            for t in range(len(self)):
                writer.writerow(
                    [t + 1, repr(self.inst_regret[t]), repr(self.cum_regret[t]), self.bits[t]]
                )

    @classmethod
    def read_csv(cls, path) -> "RegretTrace":
        trace = cls(seed=-1)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["t", "inst_regret", "cum_regret", "bits"]:
                raise ValueError(f"{path}: unexpected trace header {header}")
            for row in reader:
                trace.inst_regret.append(float(row[1]))
                trace.cum_regret.append(float(row[2]))
                trace.bits.append(int(row[3]))
        return trace


def regret_step(trace: RegretTrace, context_set: np.ndarray, theta_star: np.ndarray,
                action: int, bits: int = 0) -> RegretTrace:
    """Append one round's regret (and uplink bits) to the trace."""
    trace.record(regret_gap(context_set, theta_star, action), bits)
    return trace


# --------------------------------------------------------------------------
# excitation diagnostic
# --------------------------------------------------------------------------

@dataclass
class ExcitationDiagnostic:
    """Minimum-eigenvalue growth of the played-context Gram matrix."""

    ts: np.ndarray
    lambda_min: np.ndarray
    c: float  # largest c with lambda_min(t) >= c * t / d for all t >= t0
    t0: int


def assumption2_diagnostic(played: np.ndarray, t0: int | None = None) -> ExcitationDiagnostic:
    """Profile lambda_min(sum_{i<=t} X_i X_i^T) and the empirical excitation rate.

    Reported, never enforced: c ~ 0 flags a context distribution (or policy)
    whose Gram matrix is not gaining rank fast enough for least squares.
    """
    played = np.asarray(played, dtype=float)
    if played.ndim != 2:
        raise ValueError(f"expected (t, d) history, got shape {played.shape}")
    T, d = played.shape
    if T == 0:
        raise ValueError("empty history")
    if t0 is None:
        t0 = min(d, T)
    gram = np.zeros((d, d))
    lam = np.empty(T)
    for t in range(T):
        gram += np.outer(played[t], played[t])
        lam[t] = np.linalg.eigvalsh(gram)[0]
    ts = np.arange(1, T + 1)
    mask = ts >= t0
    c = float(np.min(lam[mask] * d / ts[mask])) if mask.any() else 0.0
    return ExcitationDiagnostic(ts=ts, lambda_min=lam, c=max(c, 0.0), t0=t0)
