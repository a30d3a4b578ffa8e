"""Saturation fixed point of the classic two-equation DCF Markov model."""
from ..errors import NumericError


def _tau_of_p(p: float, window: int, m: int) -> float:
    if abs(1.0 - 2.0 * p) < 1e-12:
        # removable singularity at p = 1/2
        return 2.0 / (window + 1 + window * m / 2.0)
    return 2.0 * (1.0 - 2.0 * p) / ((1.0 - 2.0 * p) * (window + 1) + p * window * (1.0 - (2.0 * p) ** m))


def bianchi_fixed_point(n: int, cw_min: int, m: int, damping: float = 0.5,
                        tol: float = 1e-12, max_iter: int = 100_000) -> tuple[float, float]:
    """Return ``(tau, p)`` for ``n`` saturated stations.

    ``cw_min`` is the contention window as configured (backoff drawn from
    ``[0, cw_min]``), so the model's window size is ``W = cw_min + 1``.
    ``m`` is the number of doubling stages (1023 = 2**6 * 16 - 1 gives m = 6).
    """
    if n < 1 or cw_min < 0 or m < 0:
        raise ValueError("need n >= 1, cw_min >= 0, m >= 0")
    window = cw_min + 1
    if n == 1:
        return 2.0 / (window + 1), 0.0
    p = 0.0
    for _ in range(max_iter):
        tau = _tau_of_p(p, window, m)
        p_new = 1.0 - (1.0 - tau) ** (n - 1)
        resid = abs(p_new - p)
        p = (1.0 - damping) * p + damping * p_new
        if resid < tol:
            tau = _tau_of_p(p, window, m)
            return tau, 1.0 - (1.0 - tau) ** (n - 1)
    raise NumericError(f"fixed point did not converge for n={n}, W={window}, m={m}")


def saturation_throughput(n: int, tau: float, payload_us: float, success_us: float,
                          collision_us: float, slot_us: float) -> float:
    """Fraction of airtime spent on payload bits, given per-slot ``tau``."""
    p_tr = 1.0 - (1.0 - tau) ** n
    p_s = n * tau * (1.0 - tau) ** (n - 1) / p_tr if p_tr > 0 else 0.0
    denom = (1.0 - p_tr) * slot_us + p_tr * p_s * success_us + p_tr * (1.0 - p_s) * collision_us
    return p_s * p_tr * payload_us / denom
