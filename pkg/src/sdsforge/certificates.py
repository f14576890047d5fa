"""Published SDS certificates shipped with the package."""

from __future__ import annotations

from importlib import resources

from .hadamard import SdsCertificate, parse_certificate

NAMES = ("v213", "v251a", "v251b", "v631a", "v631b", "v631c", "v631d")
SKEW = {"v213", "v631a", "v631b"}


def bundled(name: str) -> SdsCertificate:
    if name not in NAMES:
        raise KeyError(f"unknown certificate {name!r}; choose from {', '.join(NAMES)}")
    text = resources.files(__package__).joinpath("data", f"{name}.cert").read_text()
    return parse_certificate(text)


def all_bundled() -> dict[str, SdsCertificate]:
    return {name: bundled(name) for name in NAMES}
