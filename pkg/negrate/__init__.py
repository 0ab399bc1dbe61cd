"""American options and their exercise boundaries under negative interest
rates and dividend yields."""

__version__ = "0.1.0"
