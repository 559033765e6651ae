import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thingsearch.errors import InsufficientDataError, ParseError
from thingsearch.grammar import (
    BinBoundaries,
    Statement,
    StatementHistogram,
    all_statements,
    empty_histogram,
    fit_boundaries,
    histogram_from_statements,
    histogram_from_syntax,
    histogram_length,
    parse_statement,
    quantize_value,
    quantize_window,
    render_statement,
    statement_from_index,
    statement_index,
    vocabulary,
)
from thingsearch.windows import SyntaxMatrix, ThingWindow, mask_from_names

THIRDS = BinBoundaries(bins_per_property=3, cuts=(
    (1 / 3, 2 / 3), (1 / 3, 2 / 3), (1 / 3, 2 / 3), (1 / 3, 2 / 3)))


def syntax_of(*windows):
    return SyntaxMatrix(image_id="img", rows=tuple(windows))


def statements_strategy(bins_per_property):
    bin_values = st.integers(min_value=0, max_value=bins_per_property - 1)
    return st.builds(
        Statement,
        horizontal_bin=bin_values, vertical_bin=bin_values,
        size_bin=bin_values, ratio_bin=bin_values,
        color=st.integers(min_value=0, max_value=10))


# --- vocabulary and boundaries ------------------------------------------------

def test_vocabulary_word_scales():
    v3 = vocabulary(3)
    assert v3["size"] == ("small", "medium", "large")
    assert v3["ratio"] == ("tall", "squared", "wide")
    v5 = vocabulary(5)
    assert len(v5["horizontal"]) == 5
    assert v5["vertical"][0] == "most-top"
    v7 = vocabulary(7)
    assert v7["size"][2] == "size-2"


def test_bin_boundaries_validation():
    with pytest.raises(ValueError):
        BinBoundaries(bins_per_property=1, cuts=((), (), (), ()))
    with pytest.raises(ValueError):
        BinBoundaries(bins_per_property=3, cuts=((0.5,), (0.2, 0.4), (0.2, 0.4), (0.2, 0.4)))
    with pytest.raises(ValueError):
        BinBoundaries(bins_per_property=3, cuts=(
            (0.5, 0.4), (0.2, 0.4), (0.2, 0.4), (0.2, 0.4)))


def test_fit_boundaries_places_cuts_at_quantiles():
    rng = np.random.default_rng(0)
    windows = [ThingWindow(x=float(x), y=float(y), size=float(s), ratio=float(r), color=0)
               for x, y, s, r in zip(rng.uniform(size=500), rng.beta(2, 5, 500),
                                     rng.uniform(0.01, 1.0, 500), rng.beta(2, 2, 500))]
    boundaries = fit_boundaries([syntax_of(*windows)], 4)
    ys = np.array([w.y for w in windows])
    expected = np.quantile(ys, [0.25, 0.5, 0.75])
    assert boundaries.cuts_for("vertical") == pytest.approx(tuple(expected))


def test_fit_boundaries_balances_mass():
    rng = np.random.default_rng(1)
    windows = [ThingWindow(x=float(x), y=float(y), size=float(s), ratio=float(r), color=0)
               for x, y, s, r in zip(rng.beta(2, 8, 2000), rng.beta(3, 3, 2000),
                                     rng.uniform(0.01, 1.0, 2000), rng.beta(2, 2, 2000))]
    boundaries = fit_boundaries([syntax_of(*windows)], 5)
    cuts = boundaries.cuts_for("horizontal")
    bins = [quantize_value(w.x, cuts) for w in windows]
    counts = np.bincount(bins, minlength=5)
    assert np.all(np.abs(counts / 2000 - 0.2) < 0.03)


def test_fit_boundaries_needs_spread_out_data():
    windows = [ThingWindow(x=0.5, y=0.5, size=0.5, ratio=0.5, color=0)] * 50
    with pytest.raises(InsufficientDataError):
        fit_boundaries([syntax_of(*windows)], 3)


def test_fit_boundaries_needs_enough_windows():
    with pytest.raises(InsufficientDataError):
        fit_boundaries([syntax_of(ThingWindow(x=0.5, y=0.5, size=0.5, ratio=0.5, color=0))], 3)


# --- quantization ---------------------------------------------------------------

@given(st.lists(st.floats(min_value=0.01, max_value=0.99, allow_nan=False),
                min_size=1, max_size=8, unique=True),
       st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
def test_quantize_value_matches_linear_scan(cuts, value):
    cuts = sorted(cuts)
    # Half-open bins, value exactly on a cut goes up.
    expected = sum(1 for c in cuts if c <= value)
    assert quantize_value(value, cuts) == expected


def test_values_on_a_cut_go_up():
    assert quantize_value(1 / 3, (1 / 3, 2 / 3)) == 1
    assert quantize_value(2 / 3, (1 / 3, 2 / 3)) == 2
    assert quantize_value(0.0, (1 / 3, 2 / 3)) == 0
    assert quantize_value(1.0, (1 / 3, 2 / 3)) == 2


def test_quantize_window_hand_case():
    window = ThingWindow(x=0.1, y=0.9, size=0.5, ratio=0.5, color=2)
    statement = quantize_window(window, THIRDS)
    assert statement == Statement(horizontal_bin=0, vertical_bin=2,
                                  size_bin=1, ratio_bin=1, color=2)


# --- histogram indexing ----------------------------------------------------------

def test_histogram_length_constants():
    assert histogram_length(3) == 891
    assert histogram_length(5) == 6875
    assert histogram_length(3, mask_from_names(("size",))) == 3
    assert histogram_length(3, mask_from_names(("size", "color"))) == 33


def test_statement_index_is_row_major():
    s = Statement(horizontal_bin=1, vertical_bin=2, size_bin=0, ratio_bin=1, color=4)
    expected = ((((1 * 3) + 2) * 3 + 0) * 3 + 1) * 11 + 4
    assert statement_index(s, 3) == expected


def test_all_statements_enumerates_in_index_order():
    for i, s in enumerate(all_statements(3)):
        assert statement_index(s, 3) == i
    assert i == 890


@given(st.integers(min_value=3, max_value=7).flatmap(
    lambda b: st.tuples(st.just(b), statements_strategy(b))))
def test_statement_index_round_trip(case):
    bins_per_property, statement = case
    idx = statement_index(statement, bins_per_property)
    assert statement_from_index(idx, bins_per_property) == statement


def test_statement_index_rejects_wildcard_and_bad_index():
    wild = Statement(horizontal_bin=0, vertical_bin=0, size_bin=0, ratio_bin=0, color=None)
    with pytest.raises(ValueError):
        statement_index(wild, 3)
    with pytest.raises(ValueError):
        statement_from_index(891, 3)


def test_masked_index_round_trip():
    mask = mask_from_names(("vertical", "size", "color"))
    s = Statement(horizontal_bin=0, vertical_bin=2, size_bin=1, ratio_bin=0, color=9)
    idx = statement_index(s, 3, mask)
    back = statement_from_index(idx, 3, mask)
    assert (back.vertical_bin, back.size_bin, back.color) == (2, 1, 9)
    assert (back.horizontal_bin, back.ratio_bin) == (0, 0)


# --- rendering and parsing --------------------------------------------------------

def test_render_statement_reads_naturally():
    s = Statement(horizontal_bin=1, vertical_bin=0, size_bin=2, ratio_bin=2, color=4)
    assert render_statement(s, 3) == "Green large wide thing at top middle"


@given(st.integers(min_value=3, max_value=7).flatmap(
    lambda b: st.tuples(st.just(b), statements_strategy(b))))
def test_render_parse_round_trip(case):
    bins_per_property, statement = case
    assert parse_statement(render_statement(statement, bins_per_property),
                           bins_per_property) == statement


def test_parse_accepts_loose_forms():
    expected = parse_statement("Red small tall thing at top left")
    assert parse_statement("red SMALL tall at top left") == expected
    assert parse_statement("  Red small tall thing at top left.  ") == expected
    assert parse_statement('"Red small tall thing at top left"') == expected


def test_parse_wildcard_color():
    s = parse_statement("Any small tall thing at top left")
    assert s.color is None


def test_parse_lone_center_fills_middle_horizontal():
    s = parse_statement("Red small tall thing at center")
    assert (s.vertical_bin, s.horizontal_bin) == (1, 1)
    s5 = parse_statement("Red smallest most-tall thing at center", 5)
    assert (s5.vertical_bin, s5.horizontal_bin) == (2, 2)


def test_parse_lone_non_center_position_fails():
    with pytest.raises(ParseError):
        parse_statement("Red small tall thing at top")


def test_parse_error_carries_token_and_position():
    with pytest.raises(ParseError) as excinfo:
        parse_statement("Red small BOGUS thing at top left")
    assert excinfo.value.token == "bogus"
    assert excinfo.value.position == 2
    with pytest.raises(ParseError) as excinfo:
        parse_statement("Red small tall thing at top left extra")
    assert excinfo.value.token == "extra"
    with pytest.raises(ParseError):
        parse_statement("")


# --- histograms -------------------------------------------------------------------

def test_histogram_from_syntax_counts_every_window():
    windows = [
        ThingWindow(x=0.1, y=0.9, size=0.5, ratio=0.5, color=2),
        ThingWindow(x=0.1, y=0.9, size=0.5, ratio=0.5, color=2),
        ThingWindow(x=0.9, y=0.1, size=0.1, ratio=0.9, color=7),
    ]
    hist = histogram_from_syntax(syntax_of(*windows), THIRDS)
    assert hist.total == 3
    idx = statement_index(Statement(0, 2, 1, 1, 2), 3)
    assert hist.counts[idx] == 2


def test_histogram_from_statements_and_back():
    texts = ["Green large wide thing at top middle",
             "Green large wide thing at top middle",
             "Red small tall thing at bottom right"]
    hist = histogram_from_statements(texts, 3)
    assert hist.total == pytest.approx(3)
    idx = statement_index(parse_statement(texts[0]), 3)
    assert hist.counts[idx] == 2


def test_wildcard_statement_spreads_over_color_slices():
    hist = histogram_from_statements(["Any small tall thing at top left"], 3)
    assert hist.total == pytest.approx(1.0)
    # (0, 0, 0, 0, c) occupies the first eleven indices.
    assert hist.counts[:11] == pytest.approx(np.full(11, 1 / 11))
    assert np.all(hist.counts[11:] == 0)


def test_histogram_from_statements_reports_line_numbers():
    texts = ["Red small tall thing at top left",
             "Red small nonsense thing at top left"]
    with pytest.raises(ParseError) as excinfo:
        histogram_from_statements(texts, 3)
    assert excinfo.value.line == 2
    assert str(excinfo.value).startswith("line 2:")


def test_histogram_shape_and_compatibility_checks():
    with pytest.raises(ValueError):
        StatementHistogram(bins_per_property=3, counts=np.zeros(10))
    with pytest.raises(ValueError):
        StatementHistogram(bins_per_property=3, counts=-np.ones(891))
    a = empty_histogram(3)
    b = empty_histogram(5)
    c = empty_histogram(3, mask_from_names(("size", "color")))
    assert a.compatible_with(a)
    assert not a.compatible_with(b)
    assert not a.compatible_with(c)


def test_normalized_histogram_sums_to_one():
    hist = histogram_from_statements(["Red small tall thing at top left"] * 4, 3)
    assert hist.normalized().sum() == pytest.approx(1.0)
    assert empty_histogram(3).normalized().sum() == 0.0


def test_masked_histogram_from_syntax():
    mask = mask_from_names(("size", "color"))
    windows = [ThingWindow(x=0.1, y=0.9, size=0.9, ratio=0.5, color=2)]
    hist = histogram_from_syntax(syntax_of(*windows), THIRDS, mask)
    assert hist.counts.shape == (33,)
    assert hist.counts[2 * 11 + 2] == 1   # size bin 2, color 2
