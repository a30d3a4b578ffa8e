"""Joint contention-window / aggregation control for dense Wi-Fi with a diffusion-policy actor-critic."""
from ._accel import NUMBA_ENABLED

__version__ = "0.1.0"
__all__ = ["NUMBA_ENABLED", "__version__"]
