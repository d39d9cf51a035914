"""Component families, the noisy oracle model and variance-reduced estimators.

A :class:`ComponentFamily` is an indexed list of mappings (the ``H_i`` or the
``grad g_i``) together with their Lipschitz constants.  Indices are sampled
with probability proportional to the Lipschitz constant, and the single-index
estimator is rescaled by the inverse probability so that it is unbiased for
the full sum.

Noisy evaluations add a fixed per-component bias vector (norm exactly
``bias_norm``) and a zero-mean random vector of squared norm exactly
``std**2`` (uniform direction on the sphere).
"""
from __future__ import annotations

import dataclasses
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ConstraintSet, StaleCacheError, Whole

__all__ = [
    "ComponentFamily",
    "CompositeVIProblem",
    "NoiseModel",
    "CallCounter",
    "SnapshotCache",
    "TheoryConstants",
    "unit_sphere",
    "sample_component",
    "eval_component_noisy",
    "vr_estimate",
    "refresh_snapshot",
    "compute_theory_constants",
    "make_streams",
]


def make_streams(seed: int, names: Sequence[str]) -> dict:
    """Independent counter-based (Philox) generators, one per name."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.Generator(np.random.Philox(ss)) for name, ss in zip(names, children)}


def unit_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform draw from the unit sphere in R^n (normalised Gaussian, +-1 for n=1)."""
    if n == 1:
        return np.array([1.0 if rng.random() < 0.5 else -1.0])
    while True:
        u = rng.standard_normal(n)
        nrm = np.linalg.norm(u)
        if nrm > 0:
            return u / nrm


class ComponentFamily:
    """Indexed mappings with per-component Lipschitz constants.

    Parameters
    ----------
    components : sequence of callables
        ``components[i](x)`` returns the i-th mapping at ``x``.  When
        ``stochastic`` is true the callables take ``(x, rng)`` and are
        themselves random (zeroth-order estimators, for instance).
    lipschitz : sequence of float
        Positive Lipschitz constants, one per component.
    values : sequence of callables, optional
        Scalar functions whose gradients the components are (g-families only).
    kind : {"h", "g"}
        Which oracle counter the evaluations are charged to.
    """

    def __init__(
        self,
        components: Sequence[Callable],
        lipschitz: Sequence[float],
        values: Optional[Sequence[Callable]] = None,
        kind: str = "h",
        stochastic: bool = False,
    ):
        self.components = list(components)
        self.lipschitz = np.asarray(lipschitz, dtype=np.float64).reshape(-1)
        if len(self.components) != self.lipschitz.shape[0]:
            raise ValueError("need one Lipschitz constant per component")
        if np.any(~(self.lipschitz > 0)) or not np.all(np.isfinite(self.lipschitz)):
            raise ValueError("Lipschitz constants must be positive and finite")
        if values is not None and len(values) != len(self.components):
            raise ValueError("need one value function per component")
        if kind not in ("h", "g"):
            raise ValueError("kind must be 'h' or 'g'")
        self.values = None if values is None else list(values)
        self.kind = kind
        self.stochastic = stochastic
        self.total_lipschitz = float(self.lipschitz.sum()) if len(self) else 0.0
        if len(self):
            self.probs = self.lipschitz / self.total_lipschitz
            self.cdf = np.cumsum(self.probs)
            self.cdf[-1] = 1.0
        else:
            self.probs = np.zeros(0)
            self.cdf = np.zeros(0)

    def __len__(self):
        return len(self.components)

    @property
    def m(self) -> int:
        return len(self.components)

    def eval(self, i: int, x, rng=None) -> np.ndarray:
        if self.stochastic:
            return self.components[i](x, rng)
        return self.components[i](x)

    def sum(self, x, rng=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for i in range(len(self)):
            out = out + self.eval(i, x, rng)
        return out

    def value(self, x) -> float:
        if self.values is None:
            if len(self):
                raise ValueError("family carries no value functions")
            return 0.0
        return float(sum(f(x) for f in self.values))


class CompositeVIProblem:
    """VI with operator ``F = sum_i H_i + sum_i grad g_i`` over ``constraint``.

    ``mu_h`` is the strong-monotonicity modulus of ``sum_i H_i`` (``None`` or
    0 when it is merely monotone).
    """

    def __init__(
        self,
        h: ComponentFamily,
        g: ComponentFamily,
        constraint: Optional[ConstraintSet] = None,
        mu_h: Optional[float] = None,
        dim: Optional[int] = None,
        name: str = "",
    ):
        if h.kind != "h" or g.kind != "g":
            raise ValueError("expected an 'h' family and a 'g' family")
        if constraint is None:
            if dim is None:
                raise ValueError("need either a constraint set or a dimension")
            constraint = Whole(dim)
        self.h = h
        self.g = g
        self.constraint = constraint
        self.mu_h = mu_h
        self.dim = constraint.dim
        self.name = name

    @property
    def m1(self):
        return len(self.h)

    @property
    def m2(self):
        return len(self.g)

    @property
    def L_h(self):
        return self.h.total_lipschitz

    @property
    def L_g(self):
        return self.g.total_lipschitz

    def h_sum(self, x) -> np.ndarray:
        return self.h.sum(x)

    def g_grad_sum(self, x) -> np.ndarray:
        return self.g.sum(x)

    def g_value(self, x) -> float:
        return self.g.value(x)

    def operator(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.h.sum(x) + self.g.sum(x)


@dataclasses.dataclass(eq=False)
class NoiseModel:
    """Additive noise with bounded bias and variance.

    ``bias_vectors[i]`` has norm exactly ``bias_norm`` and is drawn once.
    Each evaluation adds ``std * u`` with ``u`` uniform on the unit sphere,
    averaged over ``samples`` independent draws (so the variance is
    ``std**2 / samples``).
    """

    bias_norm: float = 0.0
    std: float = 0.0
    m: int = 0
    dim: int = 0
    rng_stream_id: int = 0
    samples: int = 1
    bias_vectors: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.bias_norm < 0 or self.std < 0:
            raise ValueError("bias_norm and std must be nonnegative")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.bias_vectors is None:
            b = np.zeros((self.m, self.dim))
            if self.bias_norm > 0:
                rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.rng_stream_id, 7919])))
                for i in range(self.m):
                    b[i] = self.bias_norm * unit_sphere(rng, self.dim)
            self.bias_vectors = b

    @classmethod
    def exact(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def for_family(cls, family: ComponentFamily, dim: int, bias_norm=0.0, std=0.0, stream=0, samples=1):
        return cls(bias_norm=bias_norm, std=std, m=len(family), dim=dim, rng_stream_id=stream, samples=samples)

    @property
    def is_exact(self) -> bool:
        return self.bias_norm == 0 and self.std == 0

    @property
    def effective_std(self) -> float:
        return self.std / np.sqrt(self.samples)

    def apply(self, i: int, value: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.is_exact:
            return value
        out = value + self.bias_vectors[i] if self.bias_norm > 0 else value
        if self.std > 0:
            n = value.shape[0]
            u = unit_sphere(rng, n)
            for _ in range(self.samples - 1):
                u = u + unit_sphere(rng, n)
            out = out + (self.std / self.samples) * u
        return out


class CallCounter:
    """Cumulative single-component evaluation counts."""

    __slots__ = ("h", "g")

    def __init__(self, h: int = 0, g: int = 0):
        self.h = h
        self.g = g

    def add(self, kind: str, n: int = 1):
        if kind == "h":
            self.h += n
        else:
            self.g += n

    @property
    def total(self) -> int:
        return self.h + self.g

    def __repr__(self):
        return f"CallCounter(h={self.h}, g={self.g})"


@dataclasses.dataclass(eq=False)
class SnapshotCache:
    """Anchor point, the noisy evaluations made there and their sum."""

    anchor: np.ndarray
    full_sum: np.ndarray
    per_component: list


@dataclasses.dataclass
class TheoryConstants:
    sigma_h_tilde_sq: float
    sigma_g_tilde_sq: float
    delta_cap: float
    inv_lipschitz_sum_h: float
    inv_lipschitz_sum_g: float


def sample_component(family: ComponentFamily, rng: np.random.Generator) -> int:
    """Index ``i`` drawn with probability ``lipschitz[i] / total_lipschitz``."""
    if not len(family):
        raise ValueError("cannot sample from an empty family")
    i = int(np.searchsorted(family.cdf, rng.random(), side="right"))
    return min(i, len(family) - 1)


def eval_component_noisy(family, noise: Optional[NoiseModel], i: int, x, rng, counter: Optional[CallCounter] = None):
    if not 0 <= i < len(family):
        raise IndexError(f"component index {i} out of range")
    value = np.asarray(family.eval(i, x, rng), dtype=np.float64)
    if counter is not None:
        counter.add(family.kind, noise.samples if noise is not None else 1)
    if noise is None:
        return value
    return noise.apply(i, value, rng)


def refresh_snapshot(family, noise, anchor, rng, counter: Optional[CallCounter] = None) -> SnapshotCache:
    """Evaluate every component once at ``anchor`` and store the realisations."""
    anchor = np.array(anchor, dtype=np.float64)
    per = [eval_component_noisy(family, noise, i, anchor, rng, counter) for i in range(len(family))]
    full = np.sum(per, axis=0) if per else np.zeros_like(anchor)
    return SnapshotCache(anchor=anchor, full_sum=full, per_component=per)


def vr_estimate(cache: SnapshotCache, family, noise, i: int, x, rng, counter=None, anchor=None):
    """Variance-reduced estimate of the full sum at ``x`` using index ``i``.

    Returns ``full_sum + (f_i(x) - f_i(anchor)) / prob_i`` where the anchor
    term reuses the cached realisation.  Passing ``anchor`` asserts that the
    cache is current.
    """
    if anchor is not None and not np.array_equal(anchor, cache.anchor):
        raise StaleCacheError("snapshot cache anchor does not match the current anchor")
    x = np.asarray(x, dtype=np.float64)
    if np.array_equal(x, cache.anchor):
        return cache.full_sum.copy()
    fresh = eval_component_noisy(family, noise, i, x, rng, counter)
    return cache.full_sum + (fresh - cache.per_component[i]) / family.probs[i]


def _noise_params(noise):
    if noise is None:
        return 0.0, 0.0
    return float(noise.bias_norm), float(noise.effective_std)


def compute_theory_constants(h_family, g_family, noise_h, noise_g, q: float = 0.75) -> TheoryConstants:
    """Stochastic-error constants of the noisy oracle model.

    ``sigma_h_tilde_sq = 2 L_h (sigma_h^2 + delta_h^2) sum_i 1/L_h(i)``, the
    same for ``g``, and the monotone-solver error
    ``Delta = 2 sigma_h_tilde_sq + (2 m2 sigma_g^2 + 4 sigma_g_tilde_sq) / (1 - q)``.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    dh, sh = _noise_params(noise_h)
    dg, sg = _noise_params(noise_g)
    inv_h = float(np.sum(1.0 / h_family.lipschitz)) if len(h_family) else 0.0
    inv_g = float(np.sum(1.0 / g_family.lipschitz)) if len(g_family) else 0.0
    sht = 2.0 * h_family.total_lipschitz * (sh**2 + dh**2) * inv_h
    sgt = 2.0 * g_family.total_lipschitz * (sg**2 + dg**2) * inv_g
    delta = 2.0 * sht + (2.0 * len(g_family) * sg**2 + 4.0 * sgt) / (1.0 - q)
    return TheoryConstants(sht, sgt, delta, inv_h, inv_g)
