"""Measured UEFI boot-service monitoring with remote attestation and rule-based detection."""

__version__ = "0.1.0"
