"""Evaluation metrics, the random-ratings baseline, and dataset manifests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MANIFEST_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1

# One-sided 5% normal quantile.
Z_05 = 1.6449


def metric1(s, g, c: int) -> float:
    """Normalized quadratic agreement between score vectors, in [0, 1].

    ((c-1)^2 - mean |s_i - g_i|^2) / (c-1)^2; 1 at perfect agreement,
    0 at maximal disagreement.
    """
    s = np.asarray(s, dtype=float)
    g = np.asarray(g, dtype=float)
    if s.shape != g.shape or s.ndim != 1 or len(s) == 0:
        raise ValueError("score vectors must be equal-length and non-empty")
    if c <= 1:
        raise ValueError("need more than one score category")
    denom = (c - 1) ** 2
    return float((denom - np.mean((s - g) ** 2)) / denom)


def accuracy_per_category(s, g, c: int) -> dict[int, float | None]:
    """Exact-guess rate per ground-truth category; absent ones are None."""
    s = np.asarray(s, dtype=int)
    g = np.asarray(g, dtype=int)
    if s.shape != g.shape:
        raise ValueError("score vectors must be equal length")
    out: dict[int, float | None] = {}
    for k in range(1, c + 1):
        mask = g == k
        out[k] = float(np.mean(s[mask] == k)) if np.any(mask) else None
    return out


def random_baseline(g, c: int, trials: int, rng_seed: int,
                    chunk: int = 20_000) -> tuple[float, float, float]:
    """Metric 1 distribution of uniform random scoring against g.

    Returns (mu, sigma, p05) with p05 = mu + 1.6449 sigma, the value
    exceeded by chance with probability <= 0.05 under a normal fit.
    """
    g = np.asarray(g, dtype=int)
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    rng = np.random.default_rng(rng_seed)
    denom = (c - 1) ** 2
    vals = np.empty(trials)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        draws = rng.integers(1, c + 1, size=(m, len(g)))
        errs = np.mean((draws - g[None, :]) ** 2, axis=1)
        vals[done:done + m] = (denom - errs) / denom
        done += m
    mu = float(vals.mean())
    sigma = float(vals.std(ddof=1))
    return mu, sigma, mu + Z_05 * sigma


@dataclass(frozen=True)
class ManifestEntry:
    cloud_path: str
    mass: float
    labels: dict[str, int]

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mass must be > 0")
        for task, label in self.labels.items():
            if label not in (1, 2, 3, 4):
                raise ValueError(f"label for '{task}' must be in 1..4")


@dataclass(frozen=True)
class DatasetManifest:
    entries: list[ManifestEntry]

    @classmethod
    def load(cls, path, check_paths: bool = True) -> "DatasetManifest":
        base = Path(path).parent
        d = json.loads(Path(path).read_text())
        entries = []
        for e in d["entries"]:
            entry = ManifestEntry(cloud_path=e["cloud_path"], mass=e["mass"],
                                  labels={k: int(v) for k, v in e["labels"].items()})
            if check_paths and not (base / entry.cloud_path).exists():
                raise FileNotFoundError(f"cloud not found: {entry.cloud_path}")
            entries.append(entry)
        return cls(entries=entries)

    def save(self, path) -> None:
        d = {"schema_version": MANIFEST_SCHEMA_VERSION,
             "entries": [{"cloud_path": e.cloud_path, "mass": e.mass,
                          "labels": e.labels} for e in self.entries]}
        Path(path).write_text(json.dumps(d, indent=2) + "\n")


@dataclass(frozen=True)
class EvalReport:
    metric1: float
    accuracy_per_category: dict[int, float | None]
    baseline_mu: float
    baseline_sigma: float
    baseline_p05: float
    n: int

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "metric1": self.metric1,
            "accuracy_per_category": {str(k): v for k, v in
                                      self.accuracy_per_category.items()},
            "baseline_mu": self.baseline_mu,
            "baseline_sigma": self.baseline_sigma,
            "baseline_p05": self.baseline_p05,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(metric1=d["metric1"],
                   accuracy_per_category={int(k): v for k, v in
                                          d["accuracy_per_category"].items()},
                   baseline_mu=d["baseline_mu"],
                   baseline_sigma=d["baseline_sigma"],
                   baseline_p05=d["baseline_p05"],
                   n=d["n"])


def build_report(s, g, c: int = 4, trials: int = 100_000,
                 rng_seed: int = 0) -> EvalReport:
    """Metric 1, per-category accuracy and the chance baseline for s vs g."""
    mu, sigma, p05 = random_baseline(g, c, trials, rng_seed)
    return EvalReport(metric1=metric1(s, g, c),
                      accuracy_per_category=accuracy_per_category(s, g, c),
                      baseline_mu=mu, baseline_sigma=sigma, baseline_p05=p05,
                      n=len(np.asarray(g)))
