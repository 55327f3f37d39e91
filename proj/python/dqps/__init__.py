"""DQPS quantum key distribution model and simulator."""

from ._dqps import *  # noqa: F401,F403
from ._dqps import __doc__  # noqa: F401
