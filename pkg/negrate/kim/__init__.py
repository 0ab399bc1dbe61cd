"""Integral-equation pricers.

Keep this module free of side-effect imports: ``negrate.pricing.qdplus``
imports the boundary types from ``negrate.kim.collocation`` while
``negrate.kim.solver`` imports the QD+ initial guess.
"""
