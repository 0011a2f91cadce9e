"""Random matrices with a prescribed spectrum or Jordan structure.

Non-normal matrices are built as ``S J S^-1`` where ``S = U diag(s) W`` with
Haar unitaries ``U, W`` and log-spaced singular values, so ``cond(S)`` is
controlled exactly.  Matrix ``i`` of a batch draws from its own stream
``SeedSequence([seed, i])``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..linalg import haar_unitary


class EnsembleKind(str, enum.Enum):
    DIAGONALIZABLE = "prescribed_spectrum_diagonalizable"
    JORDAN = "jordan_structured"
    NORMAL = "normal"
    PERTURBED_NORMAL = "perturbed_normal"


@dataclass(frozen=True)
class EnsembleSpec:
    kind: EnsembleKind
    r: int
    spectrum: tuple | None = None
    jordan_blocks: tuple | None = None  # ((eigenvalue, size), ...)
    condition_cap: float = 10.0
    count: int = 1
    seed: int = 0
    min_separation: float = 0.2  # for randomly drawn spectra
    modulus_range: tuple = (0.5, 2.0)
    perturbation: float = 1e-2  # strictly upper part for perturbed_normal

    def __post_init__(self):
        object.__setattr__(self, "kind", EnsembleKind(self.kind))
        if self.spectrum is not None:
            object.__setattr__(self, "spectrum", tuple(complex(z) for z in self.spectrum))
        if self.jordan_blocks is not None:
            object.__setattr__(
                self, "jordan_blocks",
                tuple((complex(lam), int(m)) for lam, m in self.jordan_blocks),
            )
        self.validate()

    def validate(self):
        if self.r < 1:
            raise ValueError("r must be positive")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.condition_cap < 1:
            raise ValueError("condition_cap must be at least 1")
        if self.spectrum is not None and len(self.spectrum) != self.r:
            raise ValueError(f"spectrum has {len(self.spectrum)} entries, expected r = {self.r}")
        if self.kind is EnsembleKind.JORDAN:
            if not self.jordan_blocks:
                raise ValueError("jordan_structured ensembles need jordan_blocks")
            if any(m < 1 for _, m in self.jordan_blocks):
                raise ValueError("Jordan block sizes must be positive")
            if sum(m for _, m in self.jordan_blocks) != self.r:
                raise ValueError("Jordan block sizes must add up to r")
        elif self.jordan_blocks is not None:
            raise ValueError(f"jordan_blocks only apply to {EnsembleKind.JORDAN.value}")
        lo, hi = self.modulus_range
        if not 0 < lo <= hi:
            raise ValueError("modulus_range must satisfy 0 < low <= high")


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def random_spectrum(r: int, rng: np.random.Generator, min_separation: float = 0.2,
                    modulus_range=(0.5, 2.0), max_tries: int = 10_000) -> np.ndarray:
    """Nonzero eigenvalues in an annulus with pairwise distance >= ``min_separation``."""
    lo, hi = modulus_range
    out = []
    for _ in range(max_tries):
        z = rng.uniform(lo, hi) * np.exp(2j * np.pi * rng.uniform())
        if all(abs(z - w) >= min_separation for w in out):
            out.append(z)
            if len(out) == r:
                return np.array(out)
    raise ValueError(f"could not place {r} eigenvalues with separation {min_separation}")


def jordan_matrix(blocks) -> np.ndarray:
    r = sum(m for _, m in blocks)
    j = np.zeros((r, r), dtype=complex)
    i = 0
    for lam, m in blocks:
        j[i:i + m, i:i + m] = lam * np.eye(m) + np.eye(m, k=1)
        i += m
    return j


def conditioned_similarity(r: int, cond: float, rng: np.random.Generator) -> np.ndarray:
    s = np.logspace(0.0, np.log10(cond), r)
    return (haar_unitary(r, rng) * s) @ haar_unitary(r, rng)


def _similar(j: np.ndarray, cap: float, rng) -> np.ndarray:
    r = j.shape[0]
    cond = cap ** rng.uniform() if cap > 1 else 1.0
    s = conditioned_similarity(r, cond, rng)
    return s @ j @ np.linalg.inv(s)


def draw(spec: EnsembleSpec, index: int):
    """Matrix ``index`` of the batch together with its exact eigenvalues."""
    rng = stream(spec.seed, index)
    r = spec.r
    if spec.kind is EnsembleKind.JORDAN:
        d = np.concatenate([np.full(m, lam) for lam, m in spec.jordan_blocks])
        return _similar(jordan_matrix(spec.jordan_blocks), spec.condition_cap, rng), d
    if spec.spectrum is not None:
        d = np.asarray(spec.spectrum, dtype=complex)
    else:
        d = random_spectrum(r, rng, spec.min_separation, spec.modulus_range)
    if spec.kind is EnsembleKind.DIAGONALIZABLE:
        return _similar(np.diag(d), spec.condition_cap, rng), d
    core = np.diag(d)
    if spec.kind is EnsembleKind.PERTURBED_NORMAL and r > 1:
        # a strictly upper triangular part keeps the spectrum and breaks normality
        g = np.triu(rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r)), 1)
        core = core + spec.perturbation * g / np.linalg.norm(g)
    v = haar_unitary(r, rng)
    return v @ core @ v.conj().T, d


def generate_one(spec: EnsembleSpec, index: int) -> np.ndarray:
    return draw(spec, index)[0]


def generate(spec: EnsembleSpec) -> list:
    """``spec.count`` matrices, identical for identical specs."""
    return [generate_one(spec, i) for i in range(spec.count)]
