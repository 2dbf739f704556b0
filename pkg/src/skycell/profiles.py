"""Heterogeneous user demand and channel profiles."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import DomainError


@dataclass(frozen=True)
class UserProfile:
    index: int
    rate_threshold: float
    cov_threshold: float
    mean_gain_param: float
    rice_k: float

    def __post_init__(self):
        if self.index < 1:
            raise DomainError(f"user index starts at 1, got {self.index}")
        if not 0 < self.cov_threshold < 1:
            raise DomainError(f"cov_threshold must lie in (0, 1), got {self.cov_threshold}")
        if not self.rate_threshold > 0:
            raise DomainError(f"rate_threshold must be positive, got {self.rate_threshold}")
        if not self.mean_gain_param > 0:
            raise DomainError(f"mean_gain_param must be positive, got {self.mean_gain_param}")
        if not self.rice_k >= 0:
            raise DomainError(f"rice_k must be nonnegative, got {self.rice_k}")

    def with_(self, **changes) -> "UserProfile":
        return replace(self, **changes)


@dataclass(frozen=True)
class HeterogeneityModel:
    """Index-driven demand model.

    User ``i`` asks for rate ``base_rate * i**(1/beta)`` with coverage
    ``max_cov * i**(-1/(a1*beta))`` and sees mean gain
    ``base_gain * i**(1/(a2*beta))``. Smaller ``beta`` spreads the users out
    more. ``n_users`` is the size of the candidate population the planners
    draw from, in index order.
    """

    beta: float = 5.0
    base_rate: float = 0.1
    max_cov: float = 0.99
    base_gain: float = 1e-2
    a1: float = 5.0
    a2: float = 5.0
    rice_k: float = 2.0
    n_users: int = 50

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not 0 < self.max_cov < 1:
            raise DomainError(f"max_cov must lie in (0, 1), got {self.max_cov}")
        if not (self.base_rate > 0 and self.base_gain > 0):
            raise DomainError("base_rate and base_gain must be positive")
        if not (self.a1 > 0 and self.a2 > 0):
            raise DomainError("a1 and a2 must be positive")
        if not self.rice_k >= 0:
            raise DomainError(f"rice_k must be nonnegative, got {self.rice_k}")
        if self.n_users < 1:
            raise DomainError(f"n_users must be >= 1, got {self.n_users}")

    def with_(self, **changes) -> "HeterogeneityModel":
        return replace(self, **changes)


def make_profile(model: HeterogeneityModel, i: int) -> UserProfile:
    return UserProfile(
        index=i,
        rate_threshold=model.base_rate * i ** (1.0 / model.beta),
        cov_threshold=model.max_cov * i ** (-1.0 / (model.a1 * model.beta)),
        mean_gain_param=model.base_gain * i ** (1.0 / (model.a2 * model.beta)),
        rice_k=model.rice_k,
    )


def make_profiles(model: HeterogeneityModel, n: int | None = None) -> list[UserProfile]:
    """Profiles for users ``1..n`` (defaults to ``model.n_users``)."""
    if n is None:
        n = model.n_users
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return [make_profile(model, i) for i in range(1, n + 1)]
