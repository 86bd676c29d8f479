"""Core types and algebra for the marriage-market inverse problem.

A market is described by a non-negative gains matrix Pi (shape I x J,
entries Pi_ij = exp(pi_ij)) and a positive population vector
nu = [m | f] of length I + J.  The unknowns are the amplitudes
beta_k = sqrt(number of singles of type k); once beta is known, the full
marital distribution follows from

    mu_ij  = Pi_ij * beta_i * beta_{I+j},
    mu_i0  = beta_i ** 2,
    mu_0j  = beta_{I+j} ** 2.

Market clearing is equivalent to residual(beta) = 0, which in turn is the
first-order condition of the strictly convex function
b -> H(b) - <nu, b> in log-amplitude space b = log(beta).

All types here are immutable after construction and all operations are
pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Computations run in b = log(beta) space.  Entries beyond this bound would
# push e^{2b} against the double exponent range; realistic markets sit far
# inside it since beta ~ sqrt(nu).
LOG_AMPLITUDE_BOUND = 350.0

# Default for all "to relative tolerance" clearing checks.
DEFAULT_REL_TOL = 1e-9


class ScalingError(ValueError):
    """Raised when log-amplitudes exceed the safe exponent range.

    The remedy is to rescale the population to smaller units rather than to
    let the exponentials overflow silently.
    """


def rel_close(lhs, rhs, tol: float = DEFAULT_REL_TOL) -> bool:
    """Clearing-check comparison: |lhs - rhs| <= tol * max(1, |rhs|)."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    return bool(np.all(np.abs(lhs - rhs) <= tol * np.maximum(1.0, np.abs(rhs))))


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    arr.setflags(write=False)
    return arr


def _default_labels(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{k + 1}" for k in range(n))


@dataclass(frozen=True)
class GainsMatrix:
    """Exponentiated gains Pi_ij >= 0 for each (male type, female type) pair."""

    entries: np.ndarray
    row_labels: tuple[str, ...] = ()
    col_labels: tuple[str, ...] = ()

    def __post_init__(self):
        arr = _frozen_array(self.entries, "gains matrix")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"gains matrix must be 2-D and non-empty, got shape {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("gains matrix entries must be non-negative")
        object.__setattr__(self, "entries", arr)
        rows = tuple(self.row_labels) or _default_labels("m", arr.shape[0])
        cols = tuple(self.col_labels) or _default_labels("f", arr.shape[1])
        if len(rows) != arr.shape[0] or len(cols) != arr.shape[1]:
            raise ValueError("label counts do not match gains matrix shape")
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)

    @property
    def n_male_types(self) -> int:
        return self.entries.shape[0]

    @property
    def n_female_types(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class PopulationVector:
    """Counts nu = [m | f]: first I entries men per type, last J women per type."""

    counts: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.counts, "population vector")
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("population vector must be 1-D with at least two entries")
        if np.any(arr <= 0):
            raise ValueError(
                "population entries must be strictly positive "
                "(route zero-population types through reduce_unpopulated)"
            )
        object.__setattr__(self, "counts", arr)

    def __len__(self) -> int:
        return self.counts.size


@dataclass(frozen=True)
class AmplitudeVector:
    """Amplitudes beta_k = sqrt(singles of type k) and their logs b_k."""

    beta: np.ndarray
    log_beta: np.ndarray

    def __post_init__(self):
        beta = _frozen_array(self.beta, "beta")
        log_beta = _frozen_array(self.log_beta, "log_beta")
        if beta.shape != log_beta.shape or beta.ndim != 1:
            raise ValueError("beta and log_beta must be 1-D vectors of equal length")
        if np.any(beta <= 0):
            raise ValueError("amplitudes must be strictly positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "log_beta", log_beta)

    @classmethod
    def from_beta(cls, beta) -> "AmplitudeVector":
        beta = np.asarray(beta, dtype=float)
        if np.any(beta <= 0):
            raise ValueError("amplitudes must be strictly positive")
        return cls(beta=beta, log_beta=np.log(beta))

    @classmethod
    def from_log(cls, b) -> "AmplitudeVector":
        b = np.asarray(b, dtype=float)
        return cls(beta=np.exp(b), log_beta=b)

    def __len__(self) -> int:
        return self.beta.size


@dataclass(frozen=True)
class MaritalDistribution:
    """Marriages mu_ij plus singles mu_i0 (men) and mu_0j (women)."""

    married: np.ndarray
    single_men: np.ndarray
    single_women: np.ndarray

    def __post_init__(self):
        married = _frozen_array(self.married, "married")
        single_men = _frozen_array(self.single_men, "single_men")
        single_women = _frozen_array(self.single_women, "single_women")
        if married.ndim != 2:
            raise ValueError("married must be an I x J matrix")
        if single_men.shape != (married.shape[0],) or single_women.shape != (married.shape[1],):
            raise ValueError("singles vectors must match the marriage matrix shape")
        if np.any(married < 0) or np.any(single_men < 0) or np.any(single_women < 0):
            raise ValueError("marital distribution entries must be non-negative")
        object.__setattr__(self, "married", married)
        object.__setattr__(self, "single_men", single_men)
        object.__setattr__(self, "single_women", single_women)

    def row_totals(self) -> np.ndarray:
        """mu_i0 + sum_j mu_ij, which must clear to m_i."""
        return self.single_men + self.married.sum(axis=1)

    def column_totals(self) -> np.ndarray:
        """mu_0j + sum_i mu_ij, which must clear to f_j."""
        return self.single_women + self.married.sum(axis=0)

    def clears(self, population: PopulationVector, tol: float = DEFAULT_REL_TOL) -> bool:
        counts = population.counts
        n_men = self.married.shape[0]
        return rel_close(self.row_totals(), counts[:n_men], tol) and rel_close(
            self.column_totals(), counts[n_men:], tol
        )


@dataclass(frozen=True)
class ValidatedMarket:
    """Dimension-checked (gains, population) bundle plus degeneracy flags."""

    gains: GainsMatrix
    population: PopulationVector
    flags: tuple[str, ...] = ()

    @property
    def n_male_types(self) -> int:
        return self.gains.n_male_types

    @property
    def n_female_types(self) -> int:
        return self.gains.n_female_types

    @property
    def size(self) -> int:
        return self.n_male_types + self.n_female_types

    @property
    def men(self) -> np.ndarray:
        return self.population.counts[: self.n_male_types]

    @property
    def women(self) -> np.ndarray:
        return self.population.counts[self.n_male_types :]

    @property
    def degenerate(self) -> bool:
        """True when some row or column of the gains matrix is all zero."""
        return bool(self.flags)


def validate_market(gains: GainsMatrix, population: PopulationVector) -> ValidatedMarket:
    """Bundle gains and population after checking dimensional consistency.

    All-zero rows or columns of the gains matrix are flagged, not rejected:
    the equilibrium still exists and is unique, but the strict sign results
    of the substitution matrix degrade to weak inequalities.
    """
    expected = gains.n_male_types + gains.n_female_types
    if len(population) != expected:
        raise ValueError(
            f"population has {len(population)} entries, expected "
            f"{gains.n_male_types} + {gains.n_female_types} = {expected}"
        )
    flags = []
    for i in range(gains.n_male_types):
        if np.all(gains.entries[i] == 0):
            flags.append(f"row {i + 1} of the gains matrix is zero")
    for j in range(gains.n_female_types):
        if np.all(gains.entries[:, j] == 0):
            flags.append(f"column {j + 1} of the gains matrix is zero")
    return ValidatedMarket(gains=gains, population=population, flags=tuple(flags))


def _beta_of(beta) -> np.ndarray:
    if isinstance(beta, AmplitudeVector):
        return beta.beta
    return np.asarray(beta, dtype=float)


def residual(beta, market: ValidatedMarket) -> np.ndarray:
    """Market-clearing residual of the quadratic amplitude system.

    Component k is beta_k^2 + beta_k * sum_(opposite l) Pi * beta_l - nu_k;
    the zero vector exactly at the equilibrium amplitudes.
    """
    b = _beta_of(beta)
    n_men = market.n_male_types
    pi = market.gains.entries
    men, women = b[:n_men], b[n_men:]
    out = np.empty(market.size)
    out[:n_men] = men**2 + men * (pi @ women) - market.men
    out[n_men:] = women**2 + women * (pi.T @ men) - market.women
    return out


def marriage_distribution(beta, gains: GainsMatrix) -> MaritalDistribution:
    """Recover the full marital distribution from positive amplitudes."""
    b = _beta_of(beta)
    n_men = gains.n_male_types
    men, women = b[:n_men], b[n_men:]
    return MaritalDistribution(
        married=gains.entries * np.outer(men, women),
        single_men=men**2,
        single_women=women**2,
    )


def objective_E(beta, market: ValidatedMarket) -> float:
    """Variational objective over amplitudes; +inf on the coordinate hyperplanes.

    E(beta) = 1/2 sum beta_k^2 + sum_ij Pi_ij beta_i beta_{I+j}
              - sum_k nu_k log|beta_k|
    and equals objective_H(log beta) - <nu, log beta> on the positive orthant.
    """
    b = _beta_of(beta)
    if np.any(b == 0):
        return float("inf")
    n_men = market.n_male_types
    men, women = b[:n_men], b[n_men:]
    quad = 0.5 * np.sum(b**2) + men @ market.gains.entries @ women
    return float(quad - market.population.counts @ np.log(np.abs(b)))


def objective_H(b, gains: GainsMatrix) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of the convex dual potential H.

    H(b) = 1/2 sum_k e^{2 b_k} + sum_ij Pi_ij e^{b_i + b_{I+j}}.  The
    gradient at b minus nu equals residual(e^b), and the Hessian factors as
    diag(beta) * [[D_I, Pi], [Pi^T, D_J]] * diag(beta) with
    (D_I)_ii = 2 + (sum_j Pi_ij beta_{I+j}) / beta_i (and symmetrically for
    D_J), hence is symmetric positive definite for every finite b.
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("log-amplitudes must be finite")
    if np.any(np.abs(b) > LOG_AMPLITUDE_BOUND):
        raise ScalingError(
            f"log-amplitude magnitude exceeds {LOG_AMPLITUDE_BOUND}; "
            "rescale populations to smaller units"
        )
    n_men = gains.n_male_types
    pi = gains.entries
    beta = np.exp(b)
    men, women = beta[:n_men], beta[n_men:]

    cross = pi * np.outer(men, women)  # Pi_ij beta_i beta_{I+j}
    value = float(0.5 * np.sum(beta**2) + cross.sum())

    grad = np.empty(b.size)
    grad[:n_men] = men**2 + cross.sum(axis=1)
    grad[n_men:] = women**2 + cross.sum(axis=0)

    diag_men = 2.0 + (pi @ women) / men
    diag_women = 2.0 + (pi.T @ men) / women
    inner = np.zeros((b.size, b.size))
    inner[:n_men, :n_men] = np.diag(diag_men)
    inner[n_men:, n_men:] = np.diag(diag_women)
    inner[:n_men, n_men:] = pi
    inner[n_men:, :n_men] = pi.T
    hessian = inner * np.outer(beta, beta)
    return value, grad, hessian
