"""Dynamic connectivity of slotted-ALOHA Poisson networks under the protocol model."""

__version__ = "0.1.0"
