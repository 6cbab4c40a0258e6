from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from pricescope.extract import (
    DOM_PATH, TEXT_ANCHOR, Money, PriceSelector, RawPriceText, SelectorAmbiguous,
    SelectorMiss, UnknownCurrency, UnparseablePrice, apply_selector,
    canonical_format, detect_currency, parse_price,
)

PAGE = """
<html>
<body>
<div class="nav"><a href="/">home</a></div>
<div class="product">
  <span>€19.99</span>
  <p>In stock</p>
</div>
</body>
</html>
"""


def sel(kind, expr):
    return PriceSelector(kind=kind, expression=expr)


class TestApplySelector:
    def test_dom_path_hit(self):
        raw = apply_selector(PAGE, sel(DOM_PATH, "body/div[2]/span[1]"))
        assert raw.text == "€19.99"

    def test_dom_path_miss(self):
        with pytest.raises(SelectorMiss):
            apply_selector(PAGE, sel(DOM_PATH, "body/div[9]/span[1]"))

    def test_dom_path_with_html_prefix(self):
        raw = apply_selector(PAGE, sel(DOM_PATH, "html/body/div[2]/span[1]"))
        assert raw.text == "€19.99"

    def test_determinism(self):
        s = sel(DOM_PATH, "body/div[2]/span[1]")
        assert apply_selector(PAGE, s) == apply_selector(PAGE, s)

    def test_malformed_markup_recovered(self):
        page = "<body><div><span>€5.00</div><div><span>€9.00</span></div>"
        raw = apply_selector(page, sel(DOM_PATH, "body/div[2]/span[1]"))
        assert raw.text == "€9.00"

    def test_text_anchor_same_node(self):
        page = "<body><div><span>Price: $12.50</span></div></body>"
        raw = apply_selector(page, sel(TEXT_ANCHOR, "Price:"))
        assert raw.text == "Price: $12.50"

    def test_text_anchor_offset(self):
        page = ("<body><div><span>Total</span><span>$3.00</span>"
                "</div></body>")
        raw = apply_selector(page, sel(TEXT_ANCHOR, "Total@@1"))
        assert raw.text == "$3.00"

    def test_text_anchor_ambiguous(self):
        page = "<body><p>sale</p><p>sale</p></body>"
        with pytest.raises(SelectorAmbiguous):
            apply_selector(page, sel(TEXT_ANCHOR, "sale"))

    def test_text_anchor_missing(self):
        with pytest.raises(SelectorMiss):
            apply_selector(PAGE, sel(TEXT_ANCHOR, "no such anchor"))

    def test_locale_hint_from_page_language(self):
        page = '<html lang="fi"><body><div><span>19,99 €</span></div></body></html>'
        raw = apply_selector(page, sel(DOM_PATH, "body/div[1]/span[1]"))
        assert raw.locale_hint == "fi"

    def test_locale_hint_from_symbol(self):
        raw = apply_selector(PAGE, sel(DOM_PATH, "body/div[2]/span[1]"))
        assert raw.locale_hint == "de"

    def test_invalid_path_rejected_at_selector_build(self):
        with pytest.raises(ValueError):
            PriceSelector(kind=DOM_PATH, expression="div[0]/span")
        with pytest.raises(ValueError):
            PriceSelector(kind=DOM_PATH, expression="")


# Independent oracle: formatted/parsed pairs per locale, written by hand
# from each locale's separator conventions before the parser existed.
LOCALE_PAIRS = [
    ("de", "1.234,56", Decimal("1234.56")),
    ("de", "19,99", Decimal("19.99")),
    ("de", "12.345", Decimal("12345")),
    ("fi", "1 234,56", Decimal("1234.56")),
    ("fi", "9,90", Decimal("9.90")),
    ("fr", "2 499,00", Decimal("2499.00")),
    ("en-US", "1,234.56", Decimal("1234.56")),
    ("en-US", "0.99", Decimal("0.99")),
    ("en-US", "12,345", Decimal("12345")),
    ("en-GB", "999.50", Decimal("999.50")),
    ("pt-BR", "1.299,90", Decimal("1299.90")),
    ("it", "149,00", Decimal("149.00")),
    ("es-MX", "1,500.75", Decimal("1500.75")),
    ("ja", "1,235", Decimal("1235")),
]


class TestParsePrice:
    def test_continental_hint(self):
        m = parse_price(RawPriceText("€1.234,56", locale_hint="de"))
        assert m == Money(Decimal("1234.56"), "EUR")

    def test_anglophone_no_hint(self):
        m = parse_price(RawPriceText("$1,234.56"))
        assert m == Money(Decimal("1234.56"), "USD")

    def test_bare_number_with_page_currency(self):
        m = parse_price(RawPriceText("19,99"), page_context="Alle Preise in EUR")
        assert m == Money(Decimal("19.99"), "EUR")

    @pytest.mark.parametrize("locale,text,expected", LOCALE_PAIRS)
    def test_locale_oracle_table(self, locale, text, expected):
        m = parse_price(RawPriceText(text, locale_hint=locale),
                        page_context="USD")
        assert m.amount == expected

    def test_grouping_without_hint(self):
        assert parse_price(RawPriceText("$1.234")).amount == Decimal("1234")
        assert parse_price(RawPriceText("$0.123")).amount == Decimal("0.123")
        assert parse_price(RawPriceText("$1.234.567,89")).amount == \
            Decimal("1234567.89")

    def test_lone_separator_two_digits_is_decimal(self):
        assert parse_price(RawPriceText("€19,99")).amount == Decimal("19.99")
        assert parse_price(RawPriceText("$19.99")).amount == Decimal("19.99")

    def test_surrounding_text_ignored(self):
        m = parse_price(RawPriceText("Now only $49.00 per unit"))
        assert m == Money(Decimal("49.00"), "USD")

    def test_percent_regions_skipped(self):
        m = parse_price(RawPriceText("Save 20% — €19.99"))
        assert m == Money(Decimal("19.99"), "EUR")

    def test_ambiguous_regions_rejected(self):
        with pytest.raises(UnparseablePrice):
            parse_price(RawPriceText("19.99 29.99"), page_context="USD")

    def test_no_digits(self):
        with pytest.raises(UnparseablePrice):
            parse_price(RawPriceText("call for price"))

    def test_inconsistent_grouping(self):
        with pytest.raises(UnparseablePrice):
            parse_price(RawPriceText("$1,23.45"))

    def test_unknown_currency(self):
        with pytest.raises(UnknownCurrency):
            parse_price(RawPriceText("12.00"))


class TestDetectCurrency:
    def test_unambiguous_symbol(self):
        assert detect_currency(RawPriceText("£12.00")) == "GBP"

    def test_dollar_with_page_context(self):
        assert detect_currency(RawPriceText("$12.00"),
                               page_context="Prices shown in CAD") == "CAD"

    def test_dollar_without_context_defaults(self):
        assert detect_currency(RawPriceText("$12.00")) == "USD"

    def test_nothing_to_detect(self):
        with pytest.raises(UnknownCurrency):
            detect_currency(RawPriceText("12.00"))

    def test_iso_code_in_text_wins(self):
        assert detect_currency(RawPriceText("CAD $12.00")) == "CAD"

    def test_multichar_symbol(self):
        assert detect_currency(RawPriceText("R$ 12,00")) == "BRL"


class TestCanonicalFormat:
    def test_pads_to_two_digits(self):
        assert canonical_format(Money(Decimal("1234.5"), "EUR")) == "EUR 1234.50"

    def test_small_amount(self):
        assert canonical_format(Money(Decimal("0.99"), "USD")) == "USD 0.99"

    def test_no_grouping(self):
        assert canonical_format(Money(Decimal("1234567.89"), "USD")) == \
            "USD 1234567.89"


amounts = st.decimals(min_value=Decimal("0.01"), max_value=Decimal("999999.99"),
                      places=2)
codes = st.sampled_from(["USD", "EUR", "GBP", "BRL", "JPY", "CAD"])


class TestProperties:
    @given(amount=amounts, code=codes)
    def test_canonical_round_trip(self, amount, code):
        m = Money(amount, code)
        assert parse_price(RawPriceText(canonical_format(m))) == m

    @given(amount=amounts)
    def test_locale_duality(self, amount):
        # a string valid under both conventions never parses to the same
        # amount unless it carries no separator ambiguity
        text = f"{amount:,.2f}"          # anglophone rendering
        flipped = text.replace(",", "x").replace(".", ",").replace("x", ".")
        anglo = parse_price(RawPriceText(text, locale_hint="en-US"),
                            page_context="USD").amount
        cont = parse_price(RawPriceText(flipped, locale_hint="de"),
                           page_context="USD").amount
        assert anglo == cont == amount

    @given(n=st.integers(min_value=1000, max_value=999999))
    def test_ambiguous_strings_differ_across_hints(self, n):
        # "1,234" is readable under both conventions and the readings
        # must disagree (grouping vs 3-digit decimal)
        text = f"{n:,}"
        anglo = parse_price(RawPriceText(text, locale_hint="en-US"),
                            page_context="USD").amount
        cont = parse_price(RawPriceText(text, locale_hint="de"),
                           page_context="USD").amount
        assert anglo != cont
        assert anglo == Decimal(n)


class TestDecoyPages:
    PAGE = """
    <html lang="en"><body>
    <div class="masthead"><span>Gift cards from $5.00</span></div>
    <div class="product"><h1>Widget</h1><span>$49.00</span></div>
    <div class="recs"><div><span>$12.00</span></div></div>
    </body></html>
    """

    def test_selector_beats_decoys(self):
        raw = apply_selector(self.PAGE, sel(DOM_PATH, "body/div[2]/span[1]"))
        assert parse_price(raw, page_context=self.PAGE).amount == Decimal("49.00")

    def test_naive_symbol_grep_fails_here(self):
        import re
        first = re.search(r"[$€£]\s*[\d.,]+\d", self.PAGE).group(0)
        assert parse_price(RawPriceText(first)).amount != Decimal("49.00")
