"""Device-independent conference key agreement from the multipartite
Hardy paradox: state construction, protocol simulation, closed-form and
noisy key rates, and moment-relaxation bounds for self-testing and
eavesdropper guessing probabilities."""

__version__ = "0.1.0"

from . import hardy, keyrate, npa, protosim, qstate, sdp  # noqa: F401
