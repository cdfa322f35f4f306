"""Belief kernel service: distribution functions, moments and expected log-densities."""

import math
from typing import Callable, Literal, Optional, Sequence

import numpy as np
import pydantic
from loguru import logger
from scipy import integrate, special, stats

from expertkm.modules.kernels.schemas import BeliefKernel, KernelKind
from expertkm.modules.semiparametric.schemas import ParametricModel
from expertkm.utils import constants
from expertkm.utils.exceptions import (
    DomainError,
    KernelConstructionError,
    NumericError,
    QuadratureError,
    ValidationError,
)

_CHUNK = 256
_LOG_MAX = math.log(np.finfo(float).max)


def _as_grid(t) -> np.ndarray:
    return np.atleast_1d(np.asarray(t, dtype=float))


def _scalar_or_array(out: np.ndarray, t):
    return float(out[0]) if np.ndim(t) == 0 else out


class KernelService:
    """Service for belief kernels K_i on [W_i, inf)."""

    @staticmethod
    def make_kernel(kind: KernelKind, lower: float, p1: float, p2: Optional[float] = None, index: Optional[int] = None) -> BeliefKernel:
        """
        Build and validate a kernel.

        Raises:
            KernelConstructionError: Invalid parameters or a normalizer below EPS_DIV
        """
        try:
            return BeliefKernel(kind=kind, lower=lower, p1=p1, p2=p2)
        except pydantic.ValidationError as exc:
            where = "" if index is None else f" for observation {index}"
            logger.warning(f"❌ Kernel construction failed{where}: {exc.errors()[0]['msg']}")
            raise KernelConstructionError(
                f"invalid {kind} kernel{where}: {exc.errors()[0]['msg']}",
                indices=[] if index is None else [index],
            )

    @staticmethod
    def _cdf_rows(kind: str, lower: np.ndarray, p1: np.ndarray, p2: np.ndarray, t: np.ndarray, left: bool) -> np.ndarray:
        """CDF rows for kernels of one kind on the grid t, shape (len(lower), len(t))."""
        low = lower[:, None]
        grid = t[None, :]
        if kind == "dirac":
            atom = p1[:, None]
            return (grid > atom if left else grid >= atom).astype(float)

        with np.errstate(divide="ignore", invalid="ignore"):
            if kind == "uniform":
                out = (grid - low) / (p1[:, None] - low)
            elif kind == "truncated-gaussian":
                loc, scale = p1[:, None], p2[:, None]
                out = 1.0 - special.ndtr(-(grid - loc) / scale) / special.ndtr(-(low - loc) / scale)
            else:
                shape, rate = p1[:, None], p2[:, None]
                out = 1.0 - special.gammaincc(shape, rate * np.maximum(grid, low)) / special.gammaincc(shape, rate * low)
        return np.where(grid < low, 0.0, np.clip(out, 0.0, 1.0))

    @staticmethod
    def _grouped(kernels: Sequence[BeliefKernel]) -> dict[str, np.ndarray]:
        groups: dict[str, list[int]] = {}
        for i, k in enumerate(kernels):
            groups.setdefault(k.kind, []).append(i)
        return {kind: np.asarray(idx, dtype=int) for kind, idx in groups.items()}

    @staticmethod
    def _columns(kernels: Sequence[BeliefKernel], idx: np.ndarray):
        lower = np.array([kernels[i].lower for i in idx], dtype=float)
        p1 = np.array([kernels[i].p1 for i in idx], dtype=float)
        p2 = np.array([np.nan if kernels[i].p2 is None else kernels[i].p2 for i in idx], dtype=float)
        return lower, p1, p2

    @staticmethod
    def kernel_cdf(k: BeliefKernel, t):
        """
        K([lower, t]): mass on the closed interval, 0 for t < lower.

        A Dirac kernel at W reproduces 1{W <= t} exactly.
        """
        grid = _as_grid(t)
        row = KernelService._cdf_rows(
            k.kind, np.array([k.lower]), np.array([k.p1]), np.array([np.nan if k.p2 is None else k.p2]), grid, left=False
        )[0]
        return _scalar_or_array(row, t)

    @staticmethod
    def kernel_left_cdf(k: BeliefKernel, t):
        """K([lower, t)); differs from kernel_cdf only at a Dirac atom."""
        grid = _as_grid(t)
        row = KernelService._cdf_rows(
            k.kind, np.array([k.lower]), np.array([k.p1]), np.array([np.nan if k.p2 is None else k.p2]), grid, left=True
        )[0]
        return _scalar_or_array(row, t)

    @staticmethod
    def cdf_matrix(kernels: Sequence[BeliefKernel], t, left: bool = False) -> np.ndarray:
        """K_i(t_j) for all kernels and grid points, shape (len(kernels), len(t))."""
        grid = _as_grid(t)
        out = np.empty((len(kernels), grid.size))
        for kind, idx in KernelService._grouped(kernels).items():
            lower, p1, p2 = KernelService._columns(kernels, idx)
            out[idx] = KernelService._cdf_rows(kind, lower, p1, p2, grid, left)
        return out

    @staticmethod
    def mixture_cdf(kernels: Sequence[BeliefKernel], weights, t, left: bool = False):
        """sum_i weights_i K_i(t), evaluated kind by kind in chunks."""
        grid = _as_grid(t)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(kernels),):
            raise ValidationError(f"weights has shape {weights.shape}, expected ({len(kernels)},)")

        total = np.zeros(grid.size)
        for kind, idx in KernelService._grouped(kernels).items():
            idx = idx[weights[idx] != 0]
            for start in range(0, idx.size, _CHUNK):
                block = idx[start:start + _CHUNK]
                lower, p1, p2 = KernelService._columns(kernels, block)
                total += weights[block] @ KernelService._cdf_rows(kind, lower, p1, p2, grid, left)
        return _scalar_or_array(total, t)

    @staticmethod
    def kernel_pdf(k: BeliefKernel, t):
        """Density on [lower, inf); Dirac kernels have none."""
        if k.is_atomic:
            raise ValidationError("a dirac kernel has no density")
        grid = _as_grid(t)
        if k.kind == "uniform":
            out = np.where((grid >= k.lower) & (grid <= k.p1), 1.0 / (k.p1 - k.lower), 0.0)
        elif k.kind == "truncated-gaussian":
            out = stats.truncnorm.pdf(grid, (k.lower - k.p1) / k.p2, np.inf, loc=k.p1, scale=k.p2)
        else:
            normalizer = special.gammaincc(k.p1, k.p2 * k.lower)
            out = np.where(grid >= k.lower, stats.gamma.pdf(grid, k.p1, scale=1.0 / k.p2) / normalizer, 0.0)
        return _scalar_or_array(np.asarray(out, dtype=float), t)

    @staticmethod
    def kernel_mean(k: BeliefKernel) -> float:
        """
        Mean of the kernel.

        The truncated Gamma mean is gamma_bar(alpha + 1, beta lower) / (beta gamma_bar(alpha, beta lower)),
        computed from regularized functions as alpha Q(alpha + 1, x) / (beta Q(alpha, x)).
        """
        if k.kind == "dirac":
            return float(k.p1)
        if k.kind == "uniform":
            return 0.5 * (k.lower + k.p1)
        if k.kind == "truncated-gaussian":
            return float(stats.truncnorm.mean((k.lower - k.p1) / k.p2, np.inf, loc=k.p1, scale=k.p2))
        x = k.p2 * k.lower
        return float(k.p1 * special.gammaincc(k.p1 + 1.0, x) / (k.p2 * special.gammaincc(k.p1, x)))

    @staticmethod
    def kernel_upper_bound(k: BeliefKernel, tail: Optional[float] = None) -> float:
        """Point beyond which the kernel carries less than `tail` mass."""
        tail = constants.QUAD_TAIL_MASS if tail is None else tail
        if k.kind in ("dirac", "uniform"):
            return float(k.p1)
        if k.kind == "truncated-gaussian":
            bound = float(stats.truncnorm.isf(tail, (k.lower - k.p1) / k.p2, np.inf, loc=k.p1, scale=k.p2))
        else:
            bound = float(special.gammainccinv(k.p1, tail * special.gammaincc(k.p1, k.p2 * k.lower)) / k.p2)
        return max(bound, k.lower)

    @staticmethod
    def _interior_mode(k: BeliefKernel, upper: float) -> list[float]:
        if k.kind == "truncated-gaussian":
            mode = k.p1
        elif k.kind == "truncated-gamma" and k.p1 > 1:
            mode = (k.p1 - 1.0) / k.p2
        else:
            return []
        return [mode] if k.lower < mode < upper else []

    @staticmethod
    def kernel_expectation(k: BeliefKernel, fn: Callable[[float], float], tail: Optional[float] = None) -> float:
        """
        Integral of fn dK over [lower, upper bound].

        Dirac kernels are evaluated at the atom; other kernels by adaptive
        quadrature up to the point where the remaining mass is below `tail`.

        Raises:
            QuadratureError: If quad reports non-convergence beyond tolerance
        """
        if k.is_atomic:
            return float(fn(k.p1))

        upper = KernelService.kernel_upper_bound(k, tail)
        points = KernelService._interior_mode(k, upper) or None
        result = integrate.quad(
            lambda t: fn(t) * KernelService.kernel_pdf(k, t),
            k.lower,
            upper,
            epsabs=constants.QUAD_TOL,
            epsrel=constants.QUAD_TOL,
            limit=constants.QUAD_LIMIT,
            points=points,
            full_output=1,
        )
        value, abserr, info = result[0], result[1], result[2]
        message = result[3] if len(result) > 3 else None

        if not np.isfinite(value) or (message is not None and abserr > 1e-8 * max(1.0, abs(value))):
            diagnostics = {
                "kind": k.kind,
                "lower": k.lower,
                "p1": k.p1,
                "p2": k.p2,
                "upper": upper,
                "value": float(value),
                "abserr": float(abserr),
                "neval": int(info.get("neval", -1)),
                "message": message,
            }
            logger.warning(f"⚠️ Quadrature did not converge: {diagnostics}")
            raise QuadratureError(f"quadrature over [{k.lower:g}, {upper:g}] did not converge: {message}", diagnostics)
        return float(value)

    @staticmethod
    def expected_log_density(
        k: BeliefKernel, model: ParametricModel, theta: float, method: Literal["auto", "quadrature"] = "auto"
    ) -> float:
        """
        Integral of log f_theta dK over [lower, inf).

        `auto` uses point evaluation for Dirac kernels and the closed form
        log(lambda) - lambda * mean(K) for the Exponential model; everything
        else goes through quadrature.
        """
        if not (np.isfinite(theta) and theta > 0):
            raise ValidationError(f"parameter must be finite and > 0, got {theta!r}")
        if method not in ("auto", "quadrature"):
            raise ValidationError(f"unknown method {method!r}")
        if model.family == "pareto" and k.lower < model.sigma:
            raise DomainError(f"kernel lower bound {k.lower!r} below pareto sigma {model.sigma!r}")
        if k.is_atomic and not np.isfinite(k.p1):
            raise DomainError("a dirac kernel at +inf has no finite expected log-density")

        if k.is_atomic:
            return float(model.log_density(k.p1, theta))
        if method == "auto" and model.family == "exponential":
            return math.log(theta) - theta * KernelService.kernel_mean(k)
        return KernelService.kernel_expectation(k, lambda t: model.log_density(t, theta))

    @staticmethod
    def upper_incomplete_gamma(s: float, x: float) -> float:
        """
        Non-regularized upper incomplete gamma function, integral of t^(s-1) e^(-t) over [x, inf).

        Raises:
            ValidationError: If s <= 0 or x < 0
            NumericError: If the result overflows or underflows double precision
        """
        if not (s > 0 and np.isfinite(s)):
            raise ValidationError(f"shape must be finite and > 0, got {s!r}")
        if not (x >= 0):
            raise ValidationError(f"x must be >= 0, got {x!r}")

        regularized = special.gammaincc(s, x)
        if regularized <= 0:
            raise NumericError(f"upper incomplete gamma underflows at s={s!r}, x={x!r}")
        log_value = special.gammaln(s) + math.log(regularized)
        if log_value > _LOG_MAX:
            raise NumericError(f"upper incomplete gamma overflows at s={s!r}, x={x!r}")
        value = math.exp(log_value)
        if value == 0.0:
            raise NumericError(f"upper incomplete gamma underflows at s={s!r}, x={x!r}")
        return value
