"""Dataset containers, normalization, and hyperparameter records.

A :class:`Dataset` holds N low-fidelity points in R^D and, optionally, M
high-fidelity points aligned with the FIRST M low-fidelity rows.  That
leading-rows convention is load-bearing: every solver downstream selects
high-fidelity rows with a plain ``[:M]`` slice, and the acquisition module
is the only place allowed to reorder rows to establish it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .exceptions import (
    DimensionMismatch,
    InvalidConfig,
    MissingHighFidelity,
    NonFiniteInput,
    RowCountMismatch,
    ZeroNorm,
    ZeroVariance,
)

DEGENERACY_TOL = 1e-14


def _frozen_f64(a) -> np.ndarray:
    """Copy to a C-contiguous float64 array and lock it against writes."""
    out = np.array(a, dtype=np.float64, order="C", copy=True)
    out.setflags(write=False)
    return out


def _require_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")


class Normalization(Enum):
    """How a dataset is rescaled before graph construction."""

    COMPONENT = "component"   # zero mean, unit (population) std per column
    INSTANCE = "instance"     # unit Euclidean norm per row
    NONE = "none"


@dataclass(frozen=True)
class Dataset:
    """Aligned low-/high-fidelity point sets.

    Parameters
    ----------
    lf : ndarray, shape (N, D)
        Low-fidelity points, one row per point.
    hf : ndarray, shape (M, D), optional
        High-fidelity points; row ``i`` corresponds to ``lf[i]``.
    param_ids : sequence of length N, optional
        Opaque identifiers tying rows back to input parameters.
    """

    lf: np.ndarray
    hf: Optional[np.ndarray] = None
    param_ids: Optional[tuple] = None

    def __post_init__(self):
        lf = _frozen_f64(self.lf)
        if lf.ndim != 2:
            raise DimensionMismatch(f"lf must be 2-D, got ndim={lf.ndim}")
        n, d = lf.shape
        if n < 2:
            raise RowCountMismatch(f"need at least 2 low-fidelity points, got {n}")
        if d < 1:
            raise DimensionMismatch("points must have at least one component")
        _require_finite(lf, "lf")
        object.__setattr__(self, "lf", lf)

        if self.hf is not None:
            hf = _frozen_f64(self.hf)
            if hf.ndim != 2 or hf.shape[1] != d:
                raise DimensionMismatch(
                    f"hf must be (M, {d}), got {hf.shape if hf.ndim == 2 else hf.ndim}"
                )
            if hf.shape[0] > n:
                raise RowCountMismatch(
                    f"more high-fidelity rows ({hf.shape[0]}) than low-fidelity ({n})"
                )
            _require_finite(hf, "hf")
            object.__setattr__(self, "hf", hf)

        if self.param_ids is not None:
            ids = tuple(self.param_ids)
            if len(ids) != n:
                raise RowCountMismatch(
                    f"param_ids has {len(ids)} entries for {n} rows"
                )
            object.__setattr__(self, "param_ids", ids)

    @property
    def n(self) -> int:
        return self.lf.shape[0]

    @property
    def d(self) -> int:
        return self.lf.shape[1]

    @property
    def m(self) -> int:
        """Number of high-fidelity rows (0 when absent)."""
        return 0 if self.hf is None else self.hf.shape[0]


@dataclass(frozen=True)
class NormalizationSpec:
    """Stored statistics that make a normalization invertible.

    ``mean``/``std`` are set for per-component standardization, ``scales``
    for per-instance scaling.  Both transforms act on matrices whose rows
    align with the originating dataset's rows (a leading subset is fine,
    matching the first-M convention).
    """

    mode: Normalization
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("mean", "std", "scales"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen_f64(v))
        if self.mode is Normalization.COMPONENT:
            if self.mean is None or self.std is None:
                raise InvalidConfig("component normalization needs mean and std")
            if np.any(self.std <= 0):
                raise InvalidConfig("stored stds must be positive")
        elif self.mode is Normalization.INSTANCE:
            if self.scales is None:
                raise InvalidConfig("instance normalization needs scale factors")
            if np.any(self.scales <= 0):
                raise InvalidConfig("stored norms must be positive")

    def apply(self, a: np.ndarray) -> np.ndarray:
        """Forward transform of a row-aligned matrix."""
        a = np.asarray(a, dtype=np.float64)
        if self.mode is Normalization.NONE:
            return a.copy()
        if self.mode is Normalization.COMPONENT:
            self._check_cols(a)
            return (a - self.mean) / self.std
        self._check_rows(a)
        return a / self.scales[: a.shape[0], None]

    def invert(self, a: np.ndarray) -> np.ndarray:
        """Inverse transform of a row-aligned matrix."""
        a = np.asarray(a, dtype=np.float64)
        if self.mode is Normalization.NONE:
            return a.copy()
        if self.mode is Normalization.COMPONENT:
            self._check_cols(a)
            return a * self.std + self.mean
        self._check_rows(a)
        return a * self.scales[: a.shape[0], None]

    def invert_spread(self, a: np.ndarray) -> np.ndarray:
        """Scale-only inverse, for displacements and standard deviations.

        Offsets cancel in differences, so only the multiplicative part of
        the transform is undone.
        """
        a = np.asarray(a, dtype=np.float64)
        if self.mode is Normalization.NONE:
            return a.copy()
        if self.mode is Normalization.COMPONENT:
            self._check_cols(a)
            return a * self.std
        self._check_rows(a)
        return a * self.scales[: a.shape[0], None]

    def _check_cols(self, a: np.ndarray) -> None:
        if a.ndim != 2 or a.shape[1] != self.mean.shape[0]:
            raise DimensionMismatch(
                f"expected (*, {self.mean.shape[0]}) matrix, got {a.shape}"
            )

    def _check_rows(self, a: np.ndarray) -> None:
        if a.ndim != 2 or a.shape[0] > self.scales.shape[0]:
            raise DimensionMismatch(
                f"matrix rows {a.shape} exceed stored scales ({self.scales.shape[0]})"
            )


def component_stats(lf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population standard deviation of ``lf``."""
    lf = np.asarray(lf, dtype=np.float64)
    mean = lf.mean(axis=0)
    std = lf.std(axis=0)  # population (1/N) convention
    bad = np.flatnonzero(std < DEGENERACY_TOL)
    if bad.size:
        raise ZeroVariance(int(bad[0]))
    return mean, std


def instance_scales(lf: np.ndarray) -> np.ndarray:
    """Per-row Euclidean norms of ``lf``."""
    lf = np.asarray(lf, dtype=np.float64)
    scales = np.linalg.norm(lf, axis=1)
    bad = np.flatnonzero(scales < DEGENERACY_TOL)
    if bad.size:
        raise ZeroNorm(int(bad[0]))
    return scales


def normalize(
    data: Dataset, mode: Normalization
) -> tuple[Dataset, NormalizationSpec]:
    """Rescale a dataset, applying identical statistics to hf rows.

    Per-component mode standardizes each column to zero mean and unit
    population standard deviation, with the statistics computed over the
    low-fidelity set only.  Per-instance mode divides pair ``i`` (both the
    low- and high-fidelity row) by ``||lf[i]||_2``.

    Returns
    -------
    (Dataset, NormalizationSpec)
        The transformed copy and the statistics needed to invert it.

    Raises
    ------
    ZeroVariance
        Component mode, when a column's std over lf is below 1e-14.
    ZeroNorm
        Instance mode, when a low-fidelity row's norm is below 1e-14.
    """
    if mode is Normalization.NONE:
        return data, NormalizationSpec(mode=mode)
    if mode is Normalization.COMPONENT:
        mean, std = component_stats(data.lf)
        spec = NormalizationSpec(mode=mode, mean=mean, std=std)
    elif mode is Normalization.INSTANCE:
        spec = NormalizationSpec(mode=mode, scales=instance_scales(data.lf))
    else:
        raise InvalidConfig(f"unknown normalization mode {mode!r}")
    lf = spec.apply(data.lf)
    hf = spec.apply(data.hf) if data.hf is not None else None
    return Dataset(lf=lf, hf=hf, param_ids=data.param_ids), spec


def denormalize(data: Dataset, spec: NormalizationSpec) -> Dataset:
    """Undo :func:`normalize` using the stored statistics."""
    lf = spec.invert(data.lf)
    hf = spec.invert(data.hf) if data.hf is not None else None
    return Dataset(lf=lf, hf=hf, param_ids=data.param_ids)


@dataclass(frozen=True)
class HyperParameters:
    """Likelihood and prior hyperparameters (sigma, omega, tau, beta, r).

    ``kappa = omega * tau**beta`` is the derived reparameterized strength.
    """

    sigma: float
    omega: float
    tau: float
    beta: float = 2.0
    r: float = 3.0

    def __post_init__(self):
        if not (self.sigma > 0):
            raise InvalidConfig(f"sigma must be positive, got {self.sigma}")
        if not (self.omega > 0):
            raise InvalidConfig(f"omega must be positive, got {self.omega}")
        if not (self.tau > 0):
            raise InvalidConfig(f"tau must be positive, got {self.tau}")
        if not (self.beta >= 1):
            raise InvalidConfig(f"beta must be >= 1, got {self.beta}")
        if not (self.r > 1):
            raise InvalidConfig(f"r must exceed 1, got {self.r}")

    @property
    def kappa(self) -> float:
        return self.omega * self.tau ** self.beta


@dataclass(frozen=True)
class DisplacementMatrices:
    """Observed displacements phi_hat (M x D) and, once solved, the MAP
    displacement field phi_star (N x D)."""

    phi_hat: np.ndarray
    phi_star: Optional[np.ndarray] = None

    def __post_init__(self):
        ph = _frozen_f64(self.phi_hat)
        if ph.ndim != 2:
            raise DimensionMismatch("phi_hat must be 2-D")
        _require_finite(ph, "phi_hat")
        object.__setattr__(self, "phi_hat", ph)
        if self.phi_star is not None:
            ps = _frozen_f64(self.phi_star)
            if ps.ndim != 2 or ps.shape[1] != ph.shape[1]:
                raise DimensionMismatch("phi_star column count must match phi_hat")
            if ps.shape[0] < ph.shape[0]:
                raise RowCountMismatch("phi_star has fewer rows than phi_hat")
            _require_finite(ps, "phi_star")
            object.__setattr__(self, "phi_star", ps)


def displacements(data: Dataset) -> DisplacementMatrices:
    """Observed low-to-high-fidelity displacements hf - lf[:M].

    Raises
    ------
    MissingHighFidelity
        When the dataset has no high-fidelity rows.
    """
    if data.hf is None or data.m == 0:
        raise MissingHighFidelity("dataset has no high-fidelity rows")
    return DisplacementMatrices(phi_hat=data.hf - data.lf[: data.m])
