# services/suffixes.py
"""
Public-suffix rules and domain normalization for browsing histories.

Suffix matching is delegated to tldextract, fed only from the configured
suffix file (no network fetch, no bundled snapshot, no disk cache). A host
whose TLD matches no rule has an empty suffix and is rejected.
"""
import logging
import os
import re
import tempfile
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Tuple, Union
from urllib.parse import urlparse

import tldextract
from tldextract.suffix_list import SuffixListNotFound

from utils.errors import BadSuffixList, Unparseable

logger = logging.getLogger(__name__)

# Retired TLDs still present in older browsing logs.
DISCONTINUED_SUFFIXES: Tuple[str, ...] = (
    "bg.ac.yu", "ac.yu", "cg.yu", "co.yu", "edu.yu", "gov.yu", "net.yu", "org.yu", "yu",
    "or.tp", "tp",
    "an",
)

_LABEL_RE = re.compile(r"^[a-z0-9](?:[a-z0-9-]*[a-z0-9])?$")
_CONTROL_RE = re.compile(r"[\x00-\x1f\x7f\[\]]")
_ONLY_W_RE = re.compile(r"^w+$")


def _read_rules(lines: Iterable[str]) -> List[str]:
    rules = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("//"):
            continue
        rules.append(line.split()[0].lower())
    return rules


class PublicSuffixList:
    """A suffix file loaded into a tldextract extractor."""

    def __init__(self, path: Union[str, Path], extend_discontinued: bool = False):
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as f:
                rules = _read_rules(f)
        except OSError as e:
            raise BadSuffixList(f"cannot read suffix list {path}: {e}") from e
        extra = DISCONTINUED_SUFFIXES if extend_discontinued else ()
        self.rules: FrozenSet[str] = frozenset(rules) | frozenset(extra)
        if not self.rules:
            raise BadSuffixList(f"suffix list {path} has no rules")

        self._extractor = tldextract.TLDExtract(
            cache_dir=None,
            suffix_list_urls=(path.resolve().as_uri(),),
            fallback_to_snapshot=False,
            include_psl_private_domains=False,
            extra_suffixes=list(extra),
        )
        try:
            # Forces the fetch so a bad file fails here rather than on the first host.
            self._extractor.tlds
        except (SuffixListNotFound, ValueError) as e:
            raise BadSuffixList(f"cannot load suffix list {path}: {e}") from e

    def __len__(self) -> int:
        return len(self.rules)

    def __contains__(self, rule: str) -> bool:
        return rule in self.rules

    @classmethod
    def from_lines(cls, lines: Iterable[str], extend_discontinued: bool = False) -> "PublicSuffixList":
        rules = _read_rules(lines)
        fd, name = tempfile.mkstemp(suffix=".dat", prefix="suffixes-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write("\n".join(rules) + "\n")
            return cls(name, extend_discontinued=extend_discontinued)
        finally:
            os.unlink(name)

    @classmethod
    def from_file(cls, path: Union[str, Path], extend_discontinued: bool = False) -> "PublicSuffixList":
        psl = cls(path, extend_discontinued=extend_discontinued)
        logger.info("Loaded %d suffix rules from %s", len(psl), path)
        return psl

    def split(self, host: str) -> Tuple[str, str, str]:
        """(subdomain, domain, suffix) of a lowercase host; suffix is empty when no rule matches."""
        parts = self._extractor(host)
        return parts.subdomain, parts.domain, parts.suffix

    def suffix_length(self, labels: List[str]) -> int:
        """Number of trailing labels forming the public suffix; 0 when no rule matches."""
        _, _, suffix = self.split(".".join(labels))
        return len(suffix.split(".")) if suffix else 0


def as_suffix_list(suffix_list: Union[PublicSuffixList, Iterable[str]]) -> PublicSuffixList:
    if isinstance(suffix_list, PublicSuffixList):
        return suffix_list
    return PublicSuffixList.from_lines(suffix_list)


def extract_host(raw: str) -> str:
    """Host part of a URL, or of a bare domain with an optional path."""
    text = _CONTROL_RE.sub("", raw or "").strip().lower()
    if not text:
        return ""
    parsed = urlparse(text)
    host = parsed.netloc or parsed.path
    host = host.split("/", 1)[0]
    host = host.rsplit("@", 1)[-1]
    host = host.split(":", 1)[0]
    return host.strip(".")


def normalize_domain(raw: str, suffix_list: Union[PublicSuffixList, Iterable[str]]) -> str:
    """
    Registrable domain (public suffix plus one label) of a URL or host.

    A host that is itself a multi-label suffix is kept as-is, and a
    subdomain made only of w's in front of one is dropped.
    """
    psl = as_suffix_list(suffix_list)
    host = extract_host(raw)
    if not host:
        raise Unparseable(f"no host in {raw!r}")
    for label in host.split("."):
        if not _LABEL_RE.match(label):
            raise Unparseable(f"invalid label {label!r} in {raw!r}")

    _, domain, suffix = psl.split(host)
    if not suffix:
        raise Unparseable(f"empty suffix for {raw!r}")
    if not domain or _ONLY_W_RE.match(domain):
        if "." not in suffix:
            raise Unparseable(f"single-label suffix {suffix!r} without a domain")
        return suffix
    return f"{domain}.{suffix}"


def try_normalize(raw: str, suffix_list: PublicSuffixList) -> Optional[str]:
    try:
        return normalize_domain(raw, suffix_list)
    except Unparseable as e:
        logger.debug("Dropping %r: %s", raw, e)
        return None


def parent_domains(domain: str) -> List[str]:
    """Proper ancestors of a domain with at least two labels, longest first."""
    labels = domain.split(".")
    return [".".join(labels[i:]) for i in range(1, len(labels) - 1)]
