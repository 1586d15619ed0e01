"""Seeded synthetic dataset generator with planted per-modality preferences.

The generator plants a recoverable structure:

* item popularity follows Zipf(s), giving the usual long-tail skew;
* each item carries iid standard-normal tsem/sem/sty vectors;
* modality tastes are drawn from a small set of cluster prototypes, and a
  user's cluster memberships are exposed as interest tokens ("sty:c2", ...);
* each user belongs to a cohort (style / semantic / text / mixed) exposed
  as the "cohort" profile field; the cohort fixes the mixing weights over
  (tsem, sem, sty) taste scores;
* labels are Bernoulli draws from sigmoid(b0 + taste score + noise), with
  b0 calibrated by bisection so the mean probability hits target_rate;
* the catalog grows over time: a cold_fraction of items only arrives in
  the trailing cold_window of the timeline, so any temporal split leaves
  test-only items that cannot be answered by memorizing the training
  catalog, only by generalizing through the modality vectors.

A model that learns per-user modality weighting can recover the cohorts;
one that cannot will leave the planted attention signal on the table.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np

from .errors import DataError

COHORTS = ("style", "semantic", "text", "mixed")
# Mixing weights over (tsem, sem, sty).  "mixed" uses 1/sqrt(3) per modality
# so the total score variance matches the single-modality cohorts.
_BETA = {
    "style": (0.0, 0.0, 1.0),
    "semantic": (0.0, 1.0, 0.0),
    "text": (1.0, 0.0, 0.0),
    "mixed": (3.0 ** -0.5,) * 3,
}
_TS_START = 1_600_000_000
_TS_SPAN = 10_000_000


@dataclass
class SynthSpec:
    """Generator recipe; all randomness derives from `seed`."""

    n_users: int = 2000
    n_items: int = 5000
    n_interactions: int = 100_000
    zipf_exponent: float = 1.1
    tsem_dim: int = 16
    sem_dim: int = 16
    sty_dim: int = 16
    cohort_style: float = 0.3
    cohort_semantic: float = 0.3
    cohort_text: float = 0.3
    cohort_mixed: float = 0.1
    noise: float = 0.25
    taste_clusters: int = 2
    taste_gain: float = 3.5
    target_rate: float = 0.3
    cold_fraction: float = 0.3
    cold_window: float = 0.2
    seed: int = 0

    def validate(self):
        if min(self.n_users, self.n_items, self.n_interactions) <= 0:
            raise DataError("n_users, n_items, n_interactions must all be positive")
        if min(self.tsem_dim, self.sem_dim, self.sty_dim) <= 0:
            raise DataError("modality dims must be positive")
        if self.taste_clusters <= 0:
            raise DataError("taste_clusters must be positive")
        total = self.cohort_style + self.cohort_semantic + self.cohort_text + self.cohort_mixed
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"cohort fractions must sum to 1, got {total}")
        if not 0.0 < self.target_rate < 1.0:
            raise DataError("target_rate must lie in (0, 1)")
        if not 0.0 <= self.cold_fraction < 1.0:
            raise DataError("cold_fraction must lie in [0, 1)")
        if not 0.0 < self.cold_window < 1.0:
            raise DataError("cold_window must lie in (0, 1)")


SPEC_FIELDS = {f.name: f.type for f in fields(SynthSpec)}


def parse_spec_file(path) -> SynthSpec:
    """Key-value text file mirroring SynthSpec fields; unknown keys rejected."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in SPEC_FIELDS:
                raise DataError(f"{path}:{lineno}: unknown synth spec key {key!r}")
            caster = int if SPEC_FIELDS[key] == "int" else float
            try:
                values[key] = caster(raw)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad value for {key!r} ({exc})") from exc
    spec = SynthSpec(**values)
    spec.validate()
    return spec


def _cohort_counts(spec: SynthSpec):
    """Exact largest-remainder apportionment of users to cohorts."""
    fracs = np.array([spec.cohort_style, spec.cohort_semantic,
                      spec.cohort_text, spec.cohort_mixed])
    raw = fracs * spec.n_users
    counts = np.floor(raw).astype(int)
    short = spec.n_users - counts.sum()
    order = np.argsort(-(raw - counts))
    counts[order[:short]] += 1
    return counts


def _calibrate_bias(z, target):
    """Bisect b0 so that mean sigmoid(b0 + z) == target."""
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(mid + z)))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate(spec: SynthSpec, out_dir) -> dict:
    """Write users.jsonl / items.jsonl / interactions.tsv; return a summary."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dims = {"tsem": spec.tsem_dim, "sem": spec.sem_dim, "sty": spec.sty_dim}
    mods = ("tsem", "sem", "sty")

    # Users: cohort assignment, per-modality taste clusters.
    counts = _cohort_counts(spec)
    cohort_of = np.repeat(np.arange(4), counts)[rng.permutation(spec.n_users)]
    cluster_of = rng.integers(0, spec.taste_clusters, size=(spec.n_users, 3))
    prototypes = {
        m: rng.normal(0.0, spec.taste_gain, size=(spec.taste_clusters, dims[m]))
        for m in mods
    }

    # Items: iid standard-normal modality vectors; popularity ~ Zipf.
    item_vecs = {m: rng.standard_normal((spec.n_items, dims[m])) for m in mods}
    ranks = np.arange(1, spec.n_items + 1, dtype=np.float64)
    pop = ranks ** -spec.zipf_exponent
    pop /= pop.sum()

    # Catalog growth: cold items arrive in the trailing cold_window and
    # receive their full popularity burst within their shorter lifetime.
    arrival = np.zeros(spec.n_items)
    n_cold = int(round(spec.cold_fraction * spec.n_items))
    cold_ids = rng.choice(spec.n_items, size=n_cold, replace=False)
    arrival[cold_ids] = _TS_SPAN * (1.0 - spec.cold_window * rng.random(n_cold))

    # Interactions: item popularity ~ Zipf; timestamps uniform over each
    # item's availability window.
    inter_item = rng.choice(spec.n_items, size=spec.n_interactions, p=pop)
    inter_user = rng.integers(0, spec.n_users, size=spec.n_interactions)
    beta = np.array([_BETA[c] for c in COHORTS])
    z = np.zeros(spec.n_interactions)
    for j, m in enumerate(mods):
        taste = prototypes[m][cluster_of[inter_user, j]]      # (n, D)
        score = np.einsum("nd,nd->n", taste, item_vecs[m][inter_item])
        z += beta[cohort_of[inter_user], j] * score / np.sqrt(dims[m])
    z += spec.noise * rng.standard_normal(spec.n_interactions)
    b0 = _calibrate_bias(z, spec.target_rate)
    prob = 1.0 / (1.0 + np.exp(-(b0 + z)))
    labels = (rng.random(spec.n_interactions) < prob).astype(int)
    born = arrival[inter_item]
    timestamps = (_TS_START + born
                  + rng.random(spec.n_interactions) * (_TS_SPAN - born)).astype(np.int64)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "users.jsonl"), "w", encoding="utf-8") as fh:
        for u in range(spec.n_users):
            interests = [f"{m}:c{cluster_of[u, j]}" for j, m in enumerate(mods)]
            rec = (
                f'{{"user_id": "u{u:05d}", '
                f'"interests": {_json_strs(interests)}, '
                f'"profile": {{"cohort": "{COHORTS[cohort_of[u]]}"}}}}'
            )
            fh.write(rec + "\n")
    head, mid = max(1, spec.n_items // 100), max(2, spec.n_items // 5)
    with open(os.path.join(out_dir, "items.jsonl"), "w", encoding="utf-8") as fh:
        for i in range(spec.n_items):
            bucket = "head" if i < head else ("mid" if i < mid else "tail")
            parts = [f'"item_id": "i{i:05d}"']
            for m in mods:
                parts.append(f'"{m}": {_json_floats(item_vecs[m][i])}')
            parts.append(f'"meta": {{"pop": "{bucket}"}}')
            fh.write("{" + ", ".join(parts) + "}\n")
    with open(os.path.join(out_dir, "interactions.tsv"), "w", encoding="utf-8") as fh:
        for n in range(spec.n_interactions):
            fh.write(
                f"u{inter_user[n]:05d}\ti{inter_item[n]:05d}\t"
                f"{labels[n]}\t{timestamps[n]}\n"
            )

    return {
        "n_users": spec.n_users,
        "n_items": spec.n_items,
        "n_interactions": spec.n_interactions,
        "bias": b0,
        "positive_rate": float(labels.mean()),
        "time_range": (_TS_START, _TS_START + _TS_SPAN),
    }


def _json_strs(strs):
    return "[" + ", ".join(f'"{s}"' for s in strs) + "]"


def _json_floats(vec):
    return "[" + ", ".join(repr(float(x)) for x in vec) + "]"
