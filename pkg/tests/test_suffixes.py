import pytest

from services.suffixes import (
    DISCONTINUED_SUFFIXES,
    PublicSuffixList,
    extract_host,
    normalize_domain,
    parent_domains,
    try_normalize,
)
from utils.errors import BadSuffixList, Unparseable

PSL_TEXT = """
// comment lines and blanks are ignored
com
uk
gov.uk
co.uk
br
gov.br
*.ck
!www.ck
"""


@pytest.fixture
def psl():
    return PublicSuffixList.from_lines(PSL_TEXT.splitlines())


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("gps.gov.uk", "gps.gov.uk"),
        ("www.gov.br", "gov.br"),
        ("gov.uk", "gov.uk"),
        ("http://www.example.com/path?q=1", "example.com"),
        ("https://user@shop.Example.COM:8080/", "example.com"),
        ("a.b.c.example.co.uk", "example.co.uk"),
        ("foo.bar.ck", "foo.bar.ck"),
        ("example.com.", "example.com"),
    ],
)
def test_normalize_domain(psl, raw, expected):
    assert normalize_domain(raw, psl) == expected


@pytest.mark.parametrize(
    "raw",
    ["+.gov.br", "", "localhost", "example.unknowntld", "com", "www.com", "-bad.com", "bad-.com", "exa mple.com"],
)
def test_normalize_domain_rejects(psl, raw):
    with pytest.raises(Unparseable):
        normalize_domain(raw, psl)


def test_plain_iterable_is_accepted():
    assert normalize_domain("news.example.org", ["org"]) == "example.org"


def test_try_normalize_returns_none(psl):
    assert try_normalize("+.gov.br", psl) is None
    assert try_normalize("www.example.com", psl) == "example.com"


def test_discontinued_suffixes_extend_the_list():
    base = PublicSuffixList.from_lines(["com"])
    with pytest.raises(Unparseable):
        normalize_domain("www.site.yu", base)
    extended = PublicSuffixList.from_lines(["com"], extend_discontinued=True)
    assert normalize_domain("www.site.yu", extended) == "site.yu"
    assert normalize_domain("faculty.bg.ac.yu", extended) == "faculty.bg.ac.yu"
    assert len(extended) == 1 + len(DISCONTINUED_SUFFIXES)


def test_from_file(tmp_path):
    path = tmp_path / "suffixes.dat"
    path.write_text(PSL_TEXT, encoding="utf-8")
    psl = PublicSuffixList.from_file(path)
    assert len(psl) == 8
    assert "gov.uk" in psl
    assert "*.ck" in psl
    assert "!www.ck" in psl
    assert normalize_domain("news.bbc.co.uk", psl) == "bbc.co.uk"


def test_missing_file_is_rejected(tmp_path):
    with pytest.raises(BadSuffixList):
        PublicSuffixList.from_file(tmp_path / "missing.dat")


def test_comment_only_file_is_rejected(tmp_path):
    path = tmp_path / "suffixes.dat"
    path.write_text("// nothing here\n", encoding="utf-8")
    with pytest.raises(BadSuffixList):
        PublicSuffixList.from_file(path)


def test_extract_host():
    assert extract_host("HTTP://WWW.Example.com/a/b") == "www.example.com"
    assert extract_host("example.com/some/path") == "example.com"
    assert extract_host("  ") == ""


def test_parent_domains():
    assert parent_domains("a.b.example.com") == ["b.example.com", "example.com"]
    assert parent_domains("example.com") == []


def test_wildcard_and_exception_rules(psl):
    assert psl.suffix_length(["foo", "bar", "ck"]) == 2
    assert psl.suffix_length(["www", "ck"]) == 1
    assert psl.suffix_length(["example", "org"]) == 0


def test_split(psl):
    assert psl.split("a.b.example.co.uk") == ("a.b", "example", "co.uk")
    assert psl.split("gov.uk") == ("", "", "gov.uk")
    assert psl.split("example.unknowntld")[2] == ""


def test_only_the_given_rules_are_used():
    # A real suffix absent from the file stays unknown.
    psl = PublicSuffixList.from_lines(["com"])
    with pytest.raises(Unparseable):
        normalize_domain("example.org", psl)
    assert psl.suffix_length(["example", "co", "uk"]) == 0
