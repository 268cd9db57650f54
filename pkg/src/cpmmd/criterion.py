"""The complexity proxy, the penalized selection criterion, and certificates.

The proxy for a feature map h on a pooled sample D is

    proxy(h) = L(h) * ||D||_F / N,

a closed-form surrogate for the Gaussian complexity of the class searched by
the optimizer. The deployed criterion subtracts a calibrated multiple of it
from the empirical MMD:

    j_cp = mmd - c1_hat * proxy.

Worst-case constants (C1, C2) and the two concentration certificates are kept
here as well; they are conservative by design and reported, not enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ContractViolationError
from .features import lipschitz_constant
from .mmd import PooledSample

HELD_OUT_THRESHOLD_CONSTANT = 16.0  # multiplier in the held-out rejection threshold


@dataclass(frozen=True)
class UciConstants:
    """Worst-case constants of the uniform concentration bound.

    c1 = 2*sqrt(2*pi) * l * rho * (1 + rho)   (complexity multiplier)
    c2 = 4 * nu * rho                          (concentration multiplier)

    For balanced samples (rho = 2) with l = 1 these are 12*sqrt(2*pi) ~ 30.08
    and 8*nu.
    """

    c1: float
    c2: float

    @classmethod
    def from_regularity(cls, lip: float, nu: float, rho_star: float) -> "UciConstants":
        if rho_star < 2.0:
            raise ContractViolationError("rho_star is at least 2 by construction")
        return cls(c1=2.0 * math.sqrt(2.0 * math.pi) * lip * rho_star * (1.0 + rho_star),
                   c2=4.0 * nu * rho_star)


def complexity_proxy(h, sample: PooledSample) -> float:
    """L(h) * ||D||_F / N for the given feature map and pooled sample."""
    return lipschitz_constant(h) * sample.frobenius_d / sample.total


def j_cp(mmd: float, c1_hat: float, proxy: float) -> float:
    """Penalized criterion: empirical MMD net of the calibrated penalty."""
    if c1_hat < 0 or proxy < 0:
        raise ContractViolationError("c1_hat and proxy must be nonnegative")
    return mmd - c1_hat * proxy


def uci_bound(consts: UciConstants, proxy_class: float, total: int,
              delta: float) -> float:
    """Worst-case bound on the empirical-to-population MMD gap.

    ``proxy_class`` stands in for the Gaussian complexity of the searched
    class (the closed-form surrogate above, maximized over the trajectory).
    """
    if not 0.0 < delta < 1.0:
        raise ContractViolationError("delta must lie in (0, 1)")
    return consts.c1 * proxy_class + consts.c2 * math.sqrt(math.log(2.0 / delta) / total)


@dataclass(frozen=True)
class Certificate:
    """Population lower bound at a selected kernel: mmd - complexity - concentration."""

    lower_bound: float
    delta: float
    mmd: float
    complexity_term: float
    concentration_term: float


def trajectory_certificate(mmd: float, penalty_coefficient: float,
                           proxy_class: float, c2: float, total: int,
                           delta: float) -> Certificate:
    """Lower bound on the population MMD at a visited iterate.

    ``penalty_coefficient`` is either the worst-case C1 or the calibrated
    coefficient; ``proxy_class`` is the trajectory maximum of the proxy.
    """
    if not 0.0 < delta < 1.0:
        raise ContractViolationError("delta must lie in (0, 1)")
    complexity = penalty_coefficient * proxy_class
    concentration = c2 * math.sqrt(math.log(2.0 / delta) / total)
    return Certificate(lower_bound=mmd - complexity - concentration,
                       delta=delta, mmd=mmd, complexity_term=complexity,
                       concentration_term=concentration)


@dataclass(frozen=True)
class PowerCertificate:
    """Outcome of the held-out rejection-threshold check.

    ``satisfied`` means the training-half lower bound on the population MMD
    clears the held-out threshold, certifying rejection with probability at
    least 1 - delta - delta_prime. The finite-permutation slack
    1/(n_perm + 1) is reported alongside, not folded into the threshold.
    """

    satisfied: bool
    lhs: float
    rhs: float
    permutation_slack: float = 0.0


def power_certificate(mmd_train: float, proxy: float, c1: float,
                      n_train: int, n_holdout: int, alpha: float,
                      delta: float, delta_prime: float, nu: float,
                      rho_star: float = 2.0,
                      n_perm: int | None = None) -> PowerCertificate:
    """Check the finite-sample rejection certificate at the selected kernel.

    lhs = mmd_train - c1 * proxy - C2 * sqrt(ln(2/delta') / N_train)
    rhs = 16 * nu * sqrt((ln(2/alpha) + ln(2/delta)) / N_holdout)

    ``c1`` may be the worst-case constant (vacuous at desk scale) or the
    calibrated coefficient. The threshold is a known-loose surrogate for the
    permutation quantile; conservativeness is intentional.
    """
    for name, value in (("alpha", alpha), ("delta", delta), ("delta_prime", delta_prime)):
        if not 0.0 < value < 1.0:
            raise ContractViolationError(f"{name} must lie in (0, 1)")
    c2 = 4.0 * nu * rho_star
    lhs = mmd_train - c1 * proxy - c2 * math.sqrt(math.log(2.0 / delta_prime) / n_train)
    rhs = HELD_OUT_THRESHOLD_CONSTANT * nu * math.sqrt(
        (math.log(2.0 / alpha) + math.log(2.0 / delta)) / n_holdout)
    slack = 0.0 if n_perm is None else 1.0 / (n_perm + 1.0)
    return PowerCertificate(satisfied=bool(lhs >= rhs), lhs=float(lhs),
                            rhs=float(rhs), permutation_slack=slack)
