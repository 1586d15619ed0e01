"""Synthetic generator: determinism, long tail, cohorts, calibration."""

from collections import Counter

import pytest

from fuserank.data import load_dataset
from fuserank.errors import DataError
from fuserank.synth import SynthSpec, generate, parse_spec_file

SMALL = dict(n_users=100, n_items=200, n_interactions=3000)


def test_same_seed_byte_identical(tmp_path):
    spec = SynthSpec(seed=5, **SMALL)
    generate(spec, tmp_path / "a")
    generate(spec, tmp_path / "b")
    for name in ("users.jsonl", "items.jsonl", "interactions.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs(tmp_path):
    generate(SynthSpec(seed=1, **SMALL), tmp_path / "a")
    generate(SynthSpec(seed=2, **SMALL), tmp_path / "b")
    assert (tmp_path / "a" / "interactions.tsv").read_bytes() != \
           (tmp_path / "b" / "interactions.tsv").read_bytes()


def test_steep_zipf_concentrates_top_item(tmp_path):
    generate(SynthSpec(seed=3, zipf_exponent=3.0, **SMALL), tmp_path)
    counts = Counter(line.split("\t")[1]
                     for line in (tmp_path / "interactions.tsv").read_text().splitlines())
    top_share = counts.most_common(1)[0][1] / SMALL["n_interactions"]
    assert top_share > 1.0 / SMALL["n_items"]
    assert top_share > 0.25  # rank-1 item dominates at s=3


def test_single_cohort_tags_every_user(tmp_path):
    spec = SynthSpec(seed=4, cohort_style=1.0, cohort_semantic=0.0,
                     cohort_text=0.0, cohort_mixed=0.0, **SMALL)
    generate(spec, tmp_path)
    ds = load_dataset(tmp_path)
    assert all(u.profile["cohort"] == "style" for u in ds.users)


def test_positive_rate_near_target(tmp_path):
    spec = SynthSpec(seed=6, n_users=500, n_items=800, n_interactions=15000)
    summary = generate(spec, tmp_path)
    assert abs(summary["positive_rate"] - spec.target_rate) <= 0.05


def test_generated_files_load_cleanly(tmp_path):
    spec = SynthSpec(seed=7, **SMALL)
    generate(spec, tmp_path)
    ds = load_dataset(tmp_path)
    assert len(ds.users) == 100
    assert len(ds.items) == 200
    assert len(ds.interactions) == 3000
    assert ds.schema.modality_dims == {"tsem": 16, "sem": 16, "sty": 16}
    # every timestamp falls inside the generator's declared range
    lo, hi = 1_600_000_000, 1_610_000_000
    assert all(lo <= i.timestamp < hi for i in ds.interactions)


def test_cold_items_only_appear_late(tmp_path):
    spec = SynthSpec(seed=8, **SMALL)
    generate(spec, tmp_path)
    ds = load_dataset(tmp_path)
    lo, hi = 1_600_000_000, 1_610_000_000
    cutoff = hi - int(spec.cold_window * (hi - lo))
    first_seen = {}
    for i in ds.interactions:
        first_seen[i.item_id] = min(first_seen.get(i.item_id, hi), i.timestamp)
    n_cold_observed = sum(1 for t in first_seen.values() if t >= cutoff)
    assert n_cold_observed >= 0.15 * len(first_seen)


class TestSpecFile:
    def test_parse_and_defaults(self, tmp_path):
        path = tmp_path / "spec.txt"
        path.write_text("n_users = 50\nzipf_exponent = 2.0\n# comment\n\nseed = 9\n")
        spec = parse_spec_file(path)
        assert spec.n_users == 50
        assert spec.zipf_exponent == 2.0
        assert spec.seed == 9
        assert spec.n_items == SynthSpec().n_items

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "spec.txt"
        path.write_text("n_userz = 50\n")
        with pytest.raises(DataError, match="n_userz"):
            parse_spec_file(path)

    def test_bad_fractions_rejected(self):
        with pytest.raises(DataError, match="sum to 1"):
            SynthSpec(cohort_style=0.9, cohort_semantic=0.9,
                      cohort_text=0.0, cohort_mixed=0.0).validate()
