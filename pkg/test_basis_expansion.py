#!/usr/bin/env python3
"""
Test suite for the basis expansion:
- Term degrees, canonical enumeration and display parsing
- Design matrix construction, standardization and the domain guard
- Lagged features and single-step evaluation
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from basis_expansion import (INTERCEPT, OUTPUT_ID, POWER, ExpansionConfig, Factor, FeatureTerm, enumerate_terms,
                             evaluate_terms, expand, parse_term, term_columns, term_degree, terms_from_json,
                             terms_to_json)
from errors import ConfigurationError, DataError, DimensionMismatchError, DomainViolationError


@pytest.fixture
def positive_inputs():
    """100 rows of three inputs drawn from U(1, 10)"""
    rng = np.random.default_rng(3)
    return rng.uniform(1.0, 10.0, size=(100, 3))


class TestTermDegree:
    """Test effective term degrees"""

    def test_triple_product(self):
        assert term_degree(parse_term('X0*X1*X2')) == 3

    def test_intercept(self):
        assert term_degree(INTERCEPT) == 0
        assert INTERCEPT.is_intercept

    def test_log_over_power(self):
        assert term_degree(parse_term('ln(X0)^2/X0')) == 3

    def test_half_power_counts_its_rounded_up_exponent(self):
        assert parse_term('X0^1.5').degree == 2
        assert parse_term('X0^0.5').degree == 1

    def test_duplicate_factor_rejected(self):
        with pytest.raises(ConfigurationError):
            FeatureTerm((Factor(0), Factor(0, transform=POWER, b=2)))

    def test_output_needs_a_lag(self):
        with pytest.raises(ConfigurationError):
            Factor(OUTPUT_ID, lag=0)


class TestEnumerateTerms:
    """Test canonical candidate enumeration"""

    def test_three_inputs_degree_one(self):
        assert len(enumerate_terms(3, ExpansionConfig(degree=1))) == 13

    def test_single_input_degree_one(self):
        displays = [t.display for t in enumerate_terms(1, ExpansionConfig(degree=1))]
        assert displays == ['1', 'X0', 'ln(X0)', 'X0^0.5', '1/X0']

    def test_three_inputs_degree_two(self):
        assert len(enumerate_terms(3, ExpansionConfig(degree=2))) == 31

    def test_count_identity_for_degree_one(self):
        for m in range(1, 7):
            assert len(enumerate_terms(m, ExpansionConfig(degree=1))) == 1 + 4 * m

    def test_lower_degree_is_prefix(self):
        low = enumerate_terms(2, ExpansionConfig(degree=2))
        high = enumerate_terms(2, ExpansionConfig(degree=3))
        assert high[:len(low)] == low

    def test_degrees_one_to_five_are_nested(self):
        previous = []
        for degree in range(1, 6):
            terms = enumerate_terms(2, ExpansionConfig(degree=degree))
            assert set(previous) < set(terms)
            assert terms[:len(previous)] == previous
            assert max(term_degree(t) for t in terms) == degree
            previous = terms

    def test_family_filter(self):
        """Polynomial-only expansion of two inputs at degree 2: 1, X0, X1, X0^2, X0*X1, X1^2"""
        terms = enumerate_terms(2, ExpansionConfig(degree=2, families={'power'}))
        assert [t.display for t in terms] == ['1', 'X0', 'X1', 'X0^2', 'X0*X1', 'X1^2']

    def test_deterministic(self):
        config = ExpansionConfig(degree=3)
        assert enumerate_terms(2, config) == enumerate_terms(2, config)

    def test_no_inputs_without_lag(self):
        with pytest.raises(ConfigurationError):
            enumerate_terms(0, ExpansionConfig(degree=1))

    def test_degree_guardrail(self):
        with pytest.raises(ConfigurationError):
            ExpansionConfig(degree=11, max_degree=10)
        with pytest.raises(ConfigurationError):
            ExpansionConfig(degree=0)

    def test_unknown_family(self):
        with pytest.raises(ConfigurationError):
            ExpansionConfig(families={'power', 'exp'})


class TestTermDisplay:
    """Test the display grammar and its JSON form"""

    def test_every_enumerated_term_parses_back(self):
        for term in enumerate_terms(2, ExpansionConfig(degree=3, lag=1, lag_interactions=True)):
            assert parse_term(term.display) == term

    def test_render_with_names(self):
        assert parse_term('X0^1.5').render(['a']) == 'a^1.5'
        assert parse_term('X0^2*X1^2').render(['m', 'v']) == 'm^2*v^2'
        assert parse_term('y[t-2]').render(['a']) == 'y[t-2]'

    def test_unparsable_factor(self):
        with pytest.raises(ConfigurationError):
            parse_term('sin(X0)')

    def test_json_round_trip(self):
        terms = [parse_term('X0'), parse_term('ln(X1)^2/X1'), parse_term('X0[t-1]*y[t-1]')]
        assert terms_from_json(terms_to_json(terms)) == terms

    def test_json_display_mismatch(self):
        document = terms_to_json([parse_term('X0^2')])
        document[0]['display'] = 'X0^3'
        with pytest.raises(DataError):
            terms_from_json(document)


class TestExpand:
    """Test design matrix construction"""

    def test_standardized_columns(self, positive_inputs):
        D = expand(positive_inputs, config=ExpansionConfig(degree=1))
        assert D.shape == (100, 13)
        np.testing.assert_array_equal(D.values[:, 0], np.ones(100))
        np.testing.assert_allclose(D.features.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(D.features.std(axis=0), 1.0, atol=1e-12)

    def test_raw_columns_match_term_columns(self, positive_inputs):
        D = expand(positive_inputs, config=ExpansionConfig(degree=2))
        np.testing.assert_allclose(D.raw, term_columns(D.terms, positive_inputs))

    def test_constant_columns_dropped(self):
        """All-ones input: every monomial is constant and only the intercept survives"""
        D = expand(np.ones((5, 1)), config=ExpansionConfig(degree=2, families={'power'}))
        assert [t.display for t in D.terms] == ['1']
        assert D.scaling.dropped_constant_columns == [1, 2]

    def test_target_scaling(self, positive_inputs):
        y = positive_inputs @ np.array([1.0, 2.0, 3.0])
        D = expand(positive_inputs, y, ExpansionConfig(degree=1))
        assert D.scaled_target.mean() == pytest.approx(0.0, abs=1e-12)
        assert D.scaled_target.std() == pytest.approx(1.0)
        assert D.scaling.y_mean == pytest.approx(y.mean())

    def test_domain_guard_auto_skips_positive_only_families(self):
        X = np.linspace(-2.0, 3.0, 20).reshape(-1, 1)
        D = expand(X, config=ExpansionConfig(degree=2))
        assert [t.display for t in D.terms] == ['1', 'X0', 'X0^2']
        assert len(D.skipped_by_domain) == 7

    def test_domain_guard_strict_raises(self):
        X = np.linspace(-2.0, 3.0, 20).reshape(-1, 1)
        with pytest.raises(DomainViolationError):
            expand(X, config=ExpansionConfig(degree=1, domain_guard='strict'))

    def test_lagged_expansion(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(1.0, 2.0, size=(10, 1))
        y = rng.uniform(1.0, 2.0, size=10)
        D = expand(X, y, ExpansionConfig(degree=1, lag=2))
        displays = {t.display for t in D.terms}
        assert D.shape[0] == 8
        assert {'X0[t-1]', 'X0[t-2]', 'y[t-1]', 'y[t-2]', 'ln(y[t-1])', '1/X0[t-2]'} <= displays
        np.testing.assert_allclose(D.raw[:, D.terms.index(parse_term('y[t-2]'))], y[:8])

    def test_lag_requires_output(self):
        with pytest.raises(DataError):
            expand(np.ones((10, 1)), config=ExpansionConfig(degree=1, lag=1))

    def test_non_finite_input(self):
        X = np.ones((5, 2))
        X[2, 1] = np.nan
        with pytest.raises(DataError):
            expand(X)

    def test_length_mismatch(self, positive_inputs):
        with pytest.raises(DimensionMismatchError):
            expand(positive_inputs, np.ones(99))


class TestEvaluateTerms:
    """Test single-step term evaluation"""

    def test_intercept_only(self):
        np.testing.assert_array_equal(evaluate_terms([INTERCEPT], [4.0, 5.0]), [1.0])

    def test_product_term(self):
        assert evaluate_terms([parse_term('X0^2*X1')], [2.0, 3.0])[0] == pytest.approx(12.0)

    def test_half_power_at_one(self):
        assert evaluate_terms([parse_term('X0^1.5')], [1.0])[0] == pytest.approx(1.0)

    def test_lagged_terms_use_history(self):
        terms = [parse_term('X0[t-1]'), parse_term('y[t-2]')]
        values = evaluate_terms(terms, [9.0], history_X=[[1.0], [2.0]], history_y=[5.0, 6.0])
        np.testing.assert_allclose(values, [2.0, 5.0])

    def test_single_row_matches_design_matrix(self, positive_inputs):
        D = expand(positive_inputs, config=ExpansionConfig(degree=3))
        for row in (0, 41, 99):
            np.testing.assert_allclose(evaluate_terms(D.terms, positive_inputs[row]), D.raw[row], rtol=1e-12)

    def test_single_row_matches_lagged_design_matrix(self, positive_inputs):
        y = positive_inputs.sum(axis=1)
        D = expand(positive_inputs, y, ExpansionConfig(degree=2, lag=2))
        for row in (0, 50, 97):
            values = evaluate_terms(D.terms, positive_inputs[row + 2], history_X=positive_inputs[row:row + 2],
                                    history_y=y[row:row + 2])
            np.testing.assert_allclose(values, D.raw[row], rtol=1e-12)

    def test_missing_history(self):
        with pytest.raises(DataError):
            evaluate_terms([parse_term('y[t-1]')], [1.0])

    def test_domain_violation(self):
        with pytest.raises(DomainViolationError):
            evaluate_terms([parse_term('ln(X0)')], [-1.0])
