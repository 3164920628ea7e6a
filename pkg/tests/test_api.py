"""Package-level export surface."""

import ipinfer


def test_all_names_resolve():
    missing = [name for name in ipinfer.__all__ if not hasattr(ipinfer, name)]
    assert missing == []


def test_imputer_kinds_exported():
    assert ipinfer.KINDS == (
        ipinfer.MEAN_KIND,
        ipinfer.ZERO_KIND,
        ipinfer.HOTDECK_KIND,
        ipinfer.GAUSSIAN_KIND,
        ipinfer.CHAINED_KIND,
    )


def test_version_matches_metadata():
    assert ipinfer.__version__ == "0.1.0"
