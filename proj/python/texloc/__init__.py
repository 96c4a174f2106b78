"""Global localization from ground-texture images.

The compiled extension carries the full pipeline; this package re-exports
it. See ``help(texloc._texloc)`` for the operation-level API.
"""

try:
    from ._texloc import *  # noqa: F401,F403  (wheel layout)
    from . import _texloc as _impl
except ImportError:  # in-tree builds put _texloc on PYTHONPATH directly
    from _texloc import *  # noqa: F401,F403
    import _texloc as _impl

__version__ = "0.1.0"
__all__ = [name for name in dir(_impl) if not name.startswith("_")]
