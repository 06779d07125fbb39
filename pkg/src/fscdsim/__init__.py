"""Discrete-event simulator for fibre sensing control devices and their control plane."""

from fscdsim.errors import FscdSimError

__version__ = "0.1.0"

__all__ = ["FscdSimError", "__version__"]
