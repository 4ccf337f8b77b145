"""Tagged particle diffusion in exclusion processes on the torus."""

from ._sepdiff import *  # noqa: F401,F403
from ._sepdiff import SepdiffError, __version__  # noqa: F401
