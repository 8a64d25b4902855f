"""Published hyper-parameters and dataset shapes for the benchmark suite.

``PRESETS`` holds the (k_index, k_search) pair that was reported as best
for each dataset.  ``DATASETS`` holds (total, dim, build, query) sizes;
the real data sets are not shipped, the shapes serve as loader fixtures
and as sizes for synthetic stand-ins.
"""

from __future__ import annotations

from typing import NamedTuple

__all__ = ["Preset", "DatasetShape", "PRESETS", "DATASETS", "get_preset"]


class Preset(NamedTuple):
    k_index: int
    k_search: int


class DatasetShape(NamedTuple):
    total: int
    dim: int
    build: int
    query: int


PRESETS: dict[str, Preset] = {
    "artificial": Preset(50, 20),
    "faces": Preset(50, 20),
    "corel": Preset(50, 10),
    "mnist": Preset(40, 15),
    "fmnist": Preset(50, 10),
    "covtype": Preset(40, 50),
    "tinyimages": Preset(20, 50),
    "twitter": Preset(30, 20),
    "yearpred": Preset(30, 25),
    "sift": Preset(40, 30),
    "gist": Preset(40, 55),
    "openi-resnet": Preset(110, 35),
    "openi-convnext": Preset(30, 110),
}

DATASETS: dict[str, DatasetShape] = {
    "artificial": DatasetShape(10_000, 40, 9_000, 1_000),
    "faces": DatasetShape(10_304, 20, 9_304, 1_000),
    "corel": DatasetShape(68_040, 32, 58_040, 10_000),
    "mnist": DatasetShape(70_000, 784, 60_000, 10_000),
    "fmnist": DatasetShape(70_000, 784, 60_000, 10_000),
    "tinyimages": DatasetShape(100_000, 384, 90_000, 10_000),
    "covtype": DatasetShape(581_012, 54, 571_012, 10_000),
    "twitter": DatasetShape(583_250, 78, 573_250, 10_000),
    "yearpred": DatasetShape(515_345, 90, 505_345, 10_000),
    "sift": DatasetShape(1_000_000, 128, 990_000, 10_000),
    "gist": DatasetShape(1_000_000, 960, 999_000, 1_000),
    "openi-resnet": DatasetShape(12_851_263, 512, 12_841_263, 10_000),
    "openi-convnext": DatasetShape(12_851_263, 1_536, 12_841_263, 10_000),
}


def get_preset(name: str) -> Preset:
    key = name.lower()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return PRESETS[key]
