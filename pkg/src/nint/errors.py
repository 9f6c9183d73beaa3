"""Exception types shared across the package.

Everything derives from :class:`NintError` so callers (and the CLI) can catch
library failures with a single except clause while still letting genuine bugs
propagate as ordinary exceptions.
"""

from __future__ import annotations


class NintError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NintError, ValueError):
    """A config file is malformed: unknown key, missing key, or bad value."""


class MalformedHeader(NintError, ValueError):
    """A map file header could not be parsed (bad magic, dims, or scale)."""


class MapIoError(NintError, IOError):
    """Reading or writing a map file failed (truncation, bad payload size)."""


class DimensionMismatch(NintError, ValueError):
    """Arrays that must share a shape do not."""


class NonUnitNormals(NintError, ValueError):
    """Normal vectors deviate from unit length far beyond storage noise.

    This usually means the map was written in a different convention
    (e.g. 0..255 encoded) rather than raw unit vectors.
    """


class EmptyMask(NintError, ValueError):
    """The validity mask contains no pixels."""


class EmptyGraph(NintError, ValueError):
    """No usable pixel pair survived graph construction."""


class DegenerateRay(NintError, ValueError):
    """A coefficient denominator (an ``n . tau`` product) is numerically zero."""


class SingularSystem(NintError, ValueError):
    """The local-plane linear system is rank deficient."""


class NonPositiveLogArgument(NintError, FloatingPointError):
    """The log-domain relation was evaluated on a non-positive argument.

    This must never happen under the documented update scheme; it is raised
    (never clamped) so that a violation is loud.
    """


class NonConvergentUndistortion(NintError, ValueError):
    """Undistortion failed to converge; distortion parameters are extreme
    for the requested pixel (outside the invertible range of the model)."""


class NonConvergentRoot(NintError, ValueError):
    """A scene's ray-surface root find failed to converge."""


class OutOfBounds(NintError, IndexError):
    """Pixel coordinates fall outside the image grid."""
