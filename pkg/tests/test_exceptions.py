from __future__ import annotations

import pytest

from negrate.exceptions import BreakdownError, ConfigurationError, DomainError, NegrateError, NonConvergence


def test_domain_error_renders_field_and_message():
    err = DomainError("spot", "must be positive")
    assert str(err) == "DomainError[spot: must be positive]"
    assert err.field == "spot"
    assert isinstance(err, ValueError)
    assert isinstance(err, NegrateError)


def test_configuration_error_renders_key():
    err = ConfigurationError("ROOT_SOLVER", "unknown solver")
    assert str(err) == "ConfigurationError[ROOT_SOLVER: unknown solver]"
    assert err.key == "ROOT_SOLVER"


def test_non_convergence_keeps_last_iterates():
    err = NonConvergence("halley", 64, (83.86, 89.22))
    assert err.last_iterates == (83.86, 89.22)
    assert "halley" in str(err)
    assert "64" in str(err)


def test_breakdown_error_names_the_knot():
    with pytest.raises(NegrateError) as info:
        raise BreakdownError("fp-b", 3)
    assert info.value.knot == 3
    assert str(info.value) == "BreakdownError[fp-b: invalid update at knot 3]"
