"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Invalid geometric input: angles out of range, point outside the wedge."""


class RegimeError(ValueError):
    """Operation requested in a reflection-parameter regime where it is undefined."""


class CertificateError(ValueError):
    """A smooth test function lacks, or failed, its boundary-derivative certificates."""


class ConfigError(ValueError):
    """Invalid simulation or experiment configuration."""
