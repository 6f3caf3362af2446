"""opaque-virt - opaque service virtualisation by recorded-interaction matching."""

__version__ = "0.1.0"
