import json
import tempfile
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formsynth import scenarios
from formsynth.core import Outcome, Premise
from formsynth.extraction import (
    DATASETS,
    PremiseSample,
    export_datasets,
    extract_all,
    extract_correction_samples,
    extract_premise_samples,
    extract_proof_samples,
    extract_sketch_samples,
    extract_statement_samples,
    mentions,
    success_only,
)

from .conftest import run_world


def sizes(trajectory):
    return {name: len(samples) for name, samples in extract_all(trajectory).items()}


def test_failed_run_still_yields_sub_task_samples(delta_run):
    assert delta_run.outcome is Outcome.STATEMENT_ONLY
    assert len(extract_statement_samples(delta_run)) >= 1
    proofs = extract_proof_samples(delta_run)
    assert [p.origin for p in proofs] == ["subgoal", "subgoal"]
    assert len(extract_correction_samples(delta_run)) == 1
    sketches = extract_sketch_samples(delta_run)
    assert len(sketches) == 1 and sketches[0].verified_closed is False
    assert success_only([delta_run]) == []


def test_per_world_yields(golden_runs):
    assert sizes(golden_runs["alpha"]) == {"statements": 2, "proofs": 1, "premises": 1, "corrections": 0, "sketches": 0}
    assert sizes(golden_runs["beta"]) == {"statements": 1, "proofs": 3, "premises": 1, "corrections": 1, "sketches": 1}
    assert sizes(golden_runs["gamma"]) == {"statements": 1, "proofs": 0, "premises": 1, "corrections": 0, "sketches": 0}
    assert extract_sketch_samples(golden_runs["beta"])[0].verified_closed is True


def test_statement_samples_carry_the_run_outcome(golden_runs):
    gamma = extract_statement_samples(golden_runs["gamma"])[0]
    assert gamma.S_F == scenarios.GAMMA_STATEMENT  # the judge's correction, not the wrong sample
    assert gamma.trajectory_outcome is Outcome.STATEMENT_ONLY


def test_main_theorem_proof_sample(golden_runs):
    [main] = extract_proof_samples(golden_runs["alpha"])
    assert main.origin == "main_theorem"
    assert main.S_F == scenarios.ALPHA_STATEMENT and main.R_F == scenarios.ALPHA_PROOF


def test_correction_pairs_come_from_proof_repairs_only(golden_runs, delta_run):
    for t in [*golden_runs.values(), delta_run]:
        for sample in extract_correction_samples(t):
            assert sample.R_F != sample.R_F_fixed
            assert sample.E
    # gamma's sketch repair and failed refinements are not correction pairs
    assert extract_correction_samples(golden_runs["gamma"]) == []


def test_premise_positives_are_names_used_in_verified_code(golden_runs):
    [alpha] = extract_premise_samples(golden_runs["alpha"])
    assert [p.name for p in alpha.positives] == ["Nat.add_comm"]
    assert "Nat.add_comm" not in [p.name for p in alpha.hard_negatives]
    assert alpha.Q


def test_premise_sample_rejects_overlap():
    p = Premise("Nat.add_comm", "")
    with pytest.raises(ValueError):
        PremiseSample("s", ("q",), (p,), (p,))


@pytest.mark.parametrize("name, source, expected", [
    ("add_comm", "exact add_comm a b", True),
    ("add_comm", "exact Nat.add_comm a b", False),
    ("add_comm", "exact add_comm' a b", False),
    ("add_comm", "exact add_comm_left", False),
    ("Nat.add_comm", "(Nat.add_comm a b)", True),
])
def test_mentions_is_whole_token(name, source, expected):
    assert mentions(name, source) is expected


def test_success_only_export_has_no_failed_origin_samples(tmp_path, delta_run):
    manifest = export_datasets([delta_run], tmp_path, successful_only=True)
    assert manifest["proofs"] == {"from_successful": 0, "from_failed": 0}
    assert (tmp_path / "proofs.jsonl").read_text() == ""


def test_export_is_deterministic_and_matches_manifest(tmp_path, golden_runs, delta_run):
    runs = [*golden_runs.values(), delta_run]
    first = export_datasets(runs, tmp_path / "a")
    export_datasets(runs, tmp_path / "b")
    for name in [*DATASETS, "manifest"]:
        suffix = ".json" if name == "manifest" else ".jsonl"
        assert (tmp_path / "a" / f"{name}{suffix}").read_bytes() == (tmp_path / "b" / f"{name}{suffix}").read_bytes()
    assert json.loads((tmp_path / "a" / "manifest.json").read_text()) == first
    for name in DATASETS:
        lines = (tmp_path / "a" / f"{name}.jsonl").read_text().splitlines()
        assert len(lines) == first[name]["from_successful"] + first[name]["from_failed"]
        assert all(json.loads(line) for line in lines)
    assert first["proofs"] == {"from_successful": 4, "from_failed": 2}


def test_empty_export_writes_empty_files(tmp_path):
    manifest = export_datasets([], tmp_path)
    assert all(v == {"from_successful": 0, "from_failed": 0} for v in manifest.values())
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted([f"{n}.jsonl" for n in DATASETS] + ["manifest.json"])


WORLD_RUNS = {name: run_world(scenarios.WORLDS[name]())[name] for name in ("alpha", "beta", "gamma", "delta")}


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(sorted(WORLD_RUNS)), max_size=6))
def test_export_counts_are_additive_over_trajectories(names):
    runs = [WORLD_RUNS[n] for n in names]
    with tempfile.TemporaryDirectory() as tmp:
        combined = export_datasets(runs, Path(tmp) / "all")
        parts = [export_datasets([t], Path(tmp) / str(i)) for i, t in enumerate(runs)]
        filtered = export_datasets(runs, Path(tmp) / "ok", successful_only=True)
    for name in DATASETS:
        for bucket in ("from_successful", "from_failed"):
            assert combined[name][bucket] == sum(p[name][bucket] for p in parts)
        assert filtered[name]["from_failed"] == 0
        assert filtered[name]["from_successful"] == combined[name]["from_successful"]
