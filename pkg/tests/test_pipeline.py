import json

import numpy as np
import pytest

from modresp.extractors import parse_extractor
from modresp.pipeline import (
    RunConfig,
    f0_dirname,
    load_or_make_set,
    measure,
    run_cell_group,
)


def test_f0_dirname():
    assert f0_dirname(80.0) == "0080000"
    assert f0_dirname(226.27417) == "0226274"


def test_set_key_tracks_relevant_fields():
    a = RunConfig()
    assert a.set_key() == RunConfig(jobs=4, f0_max=500.0).set_key()
    assert a.set_key() != RunConfig(seed=1).set_key()
    assert a.set_key() != RunConfig(num_sections=100).set_key()


def test_set_cache_round_trip(tmp_path):
    cfg = RunConfig(num_candidates=4, pool_size=3, num_sections=40)
    first = load_or_make_set(cfg, cache_dir=tmp_path)
    files = list(tmp_path.glob("capricep_*.json"))
    assert len(files) == 1
    again = load_or_make_set(cfg, cache_dir=tmp_path)
    assert again.active == first.active
    for a, b in zip(first.units, again.units):
        np.testing.assert_array_equal(a.samples, b.samples)


def test_reference_depth_and_length(small_system):
    ref = small_system.reference
    assert len(ref) == 36 * 24576 + 22050 - 1
    lo, hi = 4 * 24576, 8 * 4 * 24576
    assert np.sqrt(np.mean(ref[lo:hi] ** 2)) == pytest.approx(25.0)
    assert 19.9 < small_system.duration_s < 20.6


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cell_failure_is_isolated(small_system, tmp_path):
    specs = [parse_extractor("builtin:identity:noise_cents=1e9,name=broken"),
             parse_extractor("builtin:identity")]
    res = run_cell_group(small_system, 200.0, specs, tmp_path)
    assert [r.extractor_id for r in res] == ["broken", "identity"]
    assert res[1].error is None and res[1].path is not None
    assert res[1].metrics["bw"] > 0


def test_parallel_matches_serial(tmp_path, small_set_path):
    specs = [parse_extractor("builtin:ncf")]
    cfg = RunConfig(num_candidates=16, f0_min=200.0, f0_max=240.0, steps_per_octave=4)
    measure(cfg, specs, tmp_path / "a", set_path=small_set_path)
    par = RunConfig(num_candidates=16, f0_min=200.0, f0_max=240.0, steps_per_octave=4, jobs=2)
    measure(par, specs, tmp_path / "b", set_path=small_set_path)
    for cell in (tmp_path / "a" / "ncf").iterdir():
        other = tmp_path / "b" / "ncf" / cell.name / "response.json"
        assert (cell / "response.json").read_bytes() == other.read_bytes()


def test_duplicate_ids_rejected(tmp_path, small_set_path):
    from modresp.errors import ModrespError

    specs = [parse_extractor("builtin:ncf"), parse_extractor("builtin:ncf")]
    with pytest.raises(ModrespError):
        measure(RunConfig(f0_min=200, f0_max=200), specs, tmp_path, set_path=small_set_path)


def test_keep_audio(tmp_path, small_set_path):
    from modresp.synth import read_wav_24bit

    cfg = RunConfig(num_candidates=16, f0_min=300.0, f0_max=300.0, keep_audio=True)
    measure(cfg, [parse_extractor("builtin:yin")], tmp_path, set_path=small_set_path)
    audio, rate = read_wav_24bit(tmp_path / "yin" / "0300000" / "audio.wav")
    assert rate == 44100.0 and np.max(np.abs(audio)) == pytest.approx(0.5, abs=1e-6)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["run_config"]["keep_audio"] is True
