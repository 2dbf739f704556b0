"""Bracket for the number of servable users.

Both bounds split power and time evenly over ``N`` users and ask whether a
single proxy user would still meet its coverage target. The optimistic proxy
combines the easiest demand with the best channel; the pessimistic one the
hardest demand with the worst channel.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

from .coverage import pcov_exact
from .errors import DomainError, NumericError
from .geometry import SystemParams
from .profiles import UserProfile

__all__ = ["largest_feasible", "n_lower", "n_upper", "proxy_user", "uniform_split_feasible"]

BRACKET_SEED = 4096
_BRACKET_LIMIT = 1 << 40

PowerRule = Optional[Callable[[int], float]]


def largest_feasible(pred: Callable[[int], bool], seed: int = BRACKET_SEED) -> int:
    """Largest ``n >= 1`` with ``pred(n)`` true, for a predicate that is true then false.

    Returns 0 when ``pred(1)`` fails. The upper end of the bracket starts at
    ``seed`` and doubles until the predicate fails.
    """
    if not pred(1):
        return 0
    lo, hi = 1, max(seed, 2)
    while pred(hi):
        lo, hi = hi, 2 * hi
        if hi > _BRACKET_LIMIT:
            raise NumericError("feasibility predicate never fails; budget is effectively unbounded")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def proxy_user(profiles: Sequence[UserProfile], optimistic: bool) -> UserProfile:
    """Extreme-case user built from the profile list.

    The Rice factor is taken from the first profile; profiles produced by a
    :class:`~skycell.profiles.HeterogeneityModel` all share it.
    """
    if not profiles:
        raise DomainError("profiles must be nonempty")
    rates = [u.rate_threshold for u in profiles]
    covs = [u.cov_threshold for u in profiles]
    gains = [u.mean_gain_param for u in profiles]
    if optimistic:
        rate, cov, gain = min(rates), min(covs), max(gains)
    else:
        rate, cov, gain = max(rates), max(covs), min(gains)
    return UserProfile(index=1, rate_threshold=rate, cov_threshold=cov,
                       mean_gain_param=gain, rice_k=profiles[0].rice_k)


def uniform_split_feasible(user: UserProfile, n: int, params: SystemParams,
                           power: PowerRule = None, tau: PowerRule = None) -> bool:
    """Whether ``user`` meets its target with power ``P_t/n`` and time ``1/n``.

    ``power`` and ``tau`` optionally replace the even split by a rule of ``n``.
    """
    p = power(n) if power is not None else params.p_budget / n
    t = tau(n) if tau is not None else 1.0 / n
    if p <= 0 or not 0 < t <= 1:
        return False
    return pcov_exact(user, p, t, params) >= user.cov_threshold


def _bound(params, profiles, optimistic, power, tau) -> int:
    user = proxy_user(profiles, optimistic)
    return largest_feasible(lambda n: uniform_split_feasible(user, n, params, power, tau))


def n_upper(params: SystemParams, profiles: Sequence[UserProfile],
            power: PowerRule = None, tau: PowerRule = None) -> int:
    """Upper bound on the number of users: easiest demand, best channel."""
    return _bound(params, profiles, True, power, tau)


def n_lower(params: SystemParams, profiles: Sequence[UserProfile],
            power: PowerRule = None, tau: PowerRule = None) -> int:
    """Lower bound on the number of users: hardest demand, worst channel."""
    return _bound(params, profiles, False, power, tau)
