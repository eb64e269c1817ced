"""Physics-prior-guided transmission propagation for image restoration."""

try:
    from ._hazeprop import *  # noqa: F401,F403  (installed wheel layout)
except ImportError:  # pragma: no cover
    from _hazeprop import *  # noqa: F401,F403  (in-tree build on PYTHONPATH)
