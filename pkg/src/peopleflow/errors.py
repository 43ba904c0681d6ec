"""Exception types shared across the package."""


class PeopleFlowError(Exception):
    """Base class for all errors raised by this package."""


class RejectedInput(PeopleFlowError):
    """Input data violates a documented contract (bad frame, bad payload)."""


class ConfigurationError(PeopleFlowError):
    """Invalid configuration value (bad threshold, malformed scenario)."""


class AuthorizationError(PeopleFlowError):
    """Key rejected by the whitelist. Terminal: callers must not retry."""


class ProtocolError(PeopleFlowError):
    """Malformed wire frame or frame sent in an illegal session state."""


class GeocodeError(PeopleFlowError):
    """Address not resolvable by the configured geocoder."""
