"""Fronthaul-aware functional-split simulator for cloud radio access.

Models where the physical-layer processing sits relative to the fronthaul
link -- channel estimation at the central unit versus at the radio heads on
the uplink, precoding forwarded as quantized signals versus as quantized
coefficients on the downlink -- and optimizes each placement's resource
split under shared fronthaul capacity and transmit power budgets.
"""

from . import channel, downlink, harness, optim, uplink

__version__ = "0.1.0"

__all__ = ["channel", "downlink", "harness", "optim", "uplink",
           "__version__"]
