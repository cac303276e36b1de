"""Simulation and analysis toolkit for a pulsed, heralded single-photon source.

Modules: ``signal_core`` (pump pulse and cavity filtering), ``click_sim``
(APD click delays), ``homodyne_sim`` (synthetic homodyne windows),
``mode_tomography`` (temporal mode, Fock fit, Wigner center) and the CLI
plumbing in ``config``, ``fileio``, ``pipeline`` and ``cli``.
"""

from .errors import HeraldSimError

__version__ = "0.1.0"

__all__ = ["HeraldSimError", "__version__"]
