"""smartbus: deterministic smart-bus fleet simulator and service suite.

Subsystems: on-bus blind-spot perception and door logic, an RFID punch
ledger, a telemetry ingestion/query server, solar-powered stop displays,
the message protocol tying them together, and the energy/detection-metric
calculators used to size and evaluate the system.
"""

from .kernels import backend as kernel_backend

__version__ = "0.1.0"

__all__ = ["__version__", "kernel_backend"]
