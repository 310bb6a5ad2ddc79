"""Exception hierarchy. All library errors derive from ElasticMatchError so the
CLI can map them to exit codes without catching bare Exception."""


class ElasticMatchError(Exception):
    """Base class for all errors raised by this package."""


class MeshFormatError(ElasticMatchError):
    """A mesh file does not conform to the OFF / ascii-PLY grammar."""


class MeshValidationError(ElasticMatchError):
    """Mesh data violates a structural invariant (bad index, repeated index,
    texture length mismatch, isolated vertex)."""


class CombinatoricsError(ElasticMatchError):
    """Two meshes that must share the same face list do not."""


class TextureError(ElasticMatchError):
    """Texture is missing, or texture configuration is inconsistent."""


class DecimationError(ElasticMatchError):
    """Edge collapses were exhausted before reaching the target face count."""


class ConfigError(ElasticMatchError):
    """A configuration value is invalid or an unknown key was supplied."""
