"""Centering constants for the maximum.

``m_N`` uses natural logarithms of the side length N. Level-indexed
quantities use ``n`` with ln N = n ln 2; ``level_log`` is the only place
where the two conventions meet.
"""

from __future__ import annotations

import math

from .errors import DomainError
from .profile import VarianceProfile

LOG2 = math.log(2.0)


def level_log(n: float) -> float:
    """ln N for N = 2**n."""
    return n * LOG2


def m_N(N: float) -> float:
    """2 ln N - (ln ln N) / 4."""
    if N <= math.e:
        raise DomainError("m_N needs N > e so that ln ln N is defined")
    return 2.0 * math.log(N) - 0.25 * math.log(math.log(N))


def M_n(k: float, t: float, profile: VarianceProfile, n: int, lbar: float = 0) -> float:
    """Level-indexed centering 2 ln2 I(k/n, t/n) n - (t ^ (n - lbar)) ln n / (4 (n - lbar))."""
    if not 0 <= k <= t <= n:
        raise DomainError("need 0 <= k <= t <= n")
    if not 0 <= lbar < n:
        raise DomainError("need 0 <= lbar < n")
    if n < 2:
        raise DomainError("need n >= 2 so that ln n > 0")
    main = 2.0 * LOG2 * profile.I(k / n, t / n) * n
    return main - min(t, n - lbar) * math.log(n) / (4.0 * (n - lbar))


def centering_offset(n: int) -> float:
    """m_N - M_n(0, n) for N = 2**n and sigma = 1; equals -ln(ln 2)/4."""
    return m_N(2.0 ** n) - (2.0 * LOG2 * n - 0.25 * math.log(n))
