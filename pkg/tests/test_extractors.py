import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modresp.errors import (
    ArgumentError,
    ConfigurationError,
    ExtractorFailure,
    InsufficientDataError,
    TrackParseError,
)
from modresp.extractors import (
    ExtractorSpec,
    PitchTrack,
    frame_times,
    parse_extractor,
    parse_track_csv,
    run_builtin,
    run_external,
    track_to_cents,
    unvoiced_spans,
)
from modresp.synth import VfoConfig, fm_harmonic_tone

FS = 44100.0


def test_parse_builtin_with_options():
    s = parse_extractor("builtin:ncf:interpolate=false,frame_interval_s=0.005")
    assert s.kind == "ncf"
    assert s.params == {"interpolate": False, "frame_interval_s": 0.005}
    assert s.id == "ncf_frame_interval_s-0p005_interpolate-False"
    assert parse_extractor("builtin:yin").id == "yin"
    assert parse_extractor("builtin:cep:name=mycep").id == "mycep"


def test_parse_external():
    s = parse_extractor("external:/opt/bin/my-tool --in {input} --out {output}")
    assert s.kind == "external" and s.id == "ext-my_tool"


@pytest.mark.parametrize("text", ["builtin:nope", "builtin:", "other:ncf", "builtin:ncf:oops",
                                  "builtin:ncf:bogus=1", "external:tool {input}",
                                  "builtin:ncf:frame_interval_s=0",
                                  "builtin:yin:search_low_hz=900,search_high_hz=100"])
def test_parse_errors(text):
    with pytest.raises(ConfigurationError):
        parse_extractor(text)


def test_frame_times():
    t = frame_times(1.0, 0.01)
    assert len(t) == 101 and t[-1] == pytest.approx(1.0)


@pytest.fixture(scope="module")
def steady_tones():
    return {f: fm_harmonic_tone(np.zeros(int(FS * 0.6)), VfoConfig(f)) for f in
            (80.0, 90.0, 150.0, 240.0, 440.0, 700.0, 800.0)}


@pytest.mark.parametrize("kind", ["ncf", "yin", "cep"])
@pytest.mark.parametrize("f0", [80.0, 90.0, 150.0, 240.0, 440.0, 700.0, 800.0])
def test_builtin_steady_tone(kind, f0, steady_tones):
    tr = run_builtin(parse_extractor(f"builtin:{kind}"), steady_tones[f0], FS)
    inner = (tr.times > 0.05) & (tr.times < 0.55)
    assert tr.voiced[inner].all()
    err = 1200 * np.log2(tr.f0[inner] / f0)
    tol = 15.0 if kind == "cep" else 3.0
    assert np.max(np.abs(err)) < tol


def test_interpolation_reduces_quantization(steady_tones):
    audio = steady_tones[440.0]
    raw = run_builtin(parse_extractor("builtin:ncf:interpolate=false"), audio, FS)
    fine = run_builtin(parse_extractor("builtin:ncf"), audio, FS)
    sl = slice(5, -5)
    e_raw = np.abs(1200 * np.log2(raw.f0[sl] / 440.0)).max()
    e_fine = np.abs(1200 * np.log2(fine.f0[sl] / 440.0)).max()
    assert e_fine < e_raw


def test_silence_is_unvoiced():
    for kind in ("ncf", "yin", "cep"):
        tr = run_builtin(parse_extractor(f"builtin:{kind}"), np.zeros(8820), FS)
        assert tr.voiced_fraction == 0.0


def test_builtin_argument_checks():
    with pytest.raises(ArgumentError):
        run_builtin(parse_extractor("builtin:ncf"), np.zeros(0), FS)
    with pytest.raises(ArgumentError):
        run_builtin(parse_extractor("builtin:identity"), np.zeros(5), FS)
    with pytest.raises(ArgumentError):
        run_builtin(parse_extractor("builtin:ncf:search_high_hz=3000"), np.zeros(100), 4000.0)
    with pytest.raises(ArgumentError):
        run_builtin(ExtractorSpec("external", command="x {input} {output}"), np.zeros(5), FS)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-300, 300), min_size=16, max_size=200), st.floats(60.0, 900.0))
def test_identity_round_trip(cents, f0):
    ref = np.repeat(np.asarray(cents), 8)
    tr = run_builtin(parse_extractor("builtin:identity"), np.zeros(1), FS, ref, f0)
    y = track_to_cents(tr, f0, FS / 8, len(ref) / FS)
    np.testing.assert_allclose(y, cents, atol=1e-9)


def test_identity_options():
    ref = np.linspace(-10, 10, 800)
    spec = parse_extractor("builtin:identity:scale=2,quad_alpha=0.01,boxcar_s=0")
    tr = run_builtin(spec, np.zeros(1), FS, ref, 100.0)
    c = 1200 * np.log2(tr.f0 / 100.0)
    r = ref[::8]
    np.testing.assert_allclose(c, 2 * (r + 0.01 * r * r), atol=1e-9)


def test_parse_track_csv():
    tr = parse_track_csv("time_sec,f0_hz\n0.0,100\n0.01,\n0.02,0\n0.03,101.5\n")
    assert len(tr.times) == 4
    np.testing.assert_array_equal(tr.voiced, [True, False, False, True])
    assert tr.frame_interval == pytest.approx(0.01)


@pytest.mark.parametrize("text,line", [("0.0,1\n0.0,2\n", 2), ("0,1\n0.1,x\n", 2),
                                       ("0,1,2\n0.1,1,2\n", 2), ("", None),
                                       ("0.0,1\nnan,2\n", 2)])
def test_parse_track_csv_errors(text, line):
    with pytest.raises(TrackParseError) as err:
        parse_track_csv(text)
    assert err.value.line == line


def test_unvoiced_spans():
    tr = PitchTrack(np.arange(6) * 0.1, np.array([1, np.nan, np.nan, 1, 1, np.nan]))
    assert unvoiced_spans(tr) == [(0.1, pytest.approx(0.3)), (0.5, 0.5)]


def test_track_to_cents_bridges_gaps():
    tr = PitchTrack(np.array([0.0, 0.1, 0.2, 0.3]), np.array([100.0, np.nan, np.nan, 200.0]))
    y = track_to_cents(tr, 100.0, 100.0, 0.4)
    assert len(y) == 40
    assert y[15] == pytest.approx(600.0)
    assert y[-1] == pytest.approx(1200.0)
    with pytest.raises(InsufficientDataError):
        track_to_cents(PitchTrack(np.array([0.0]), np.array([100.0])), 100.0, 100.0, 1.0)


def test_pitch_track_validation():
    with pytest.raises(ArgumentError):
        PitchTrack(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(ArgumentError):
        PitchTrack(np.array([0.0]), np.array([1.0, 2.0]))


def _script(tmp_path, body):
    path = tmp_path / "tool.py"
    path.write_text(textwrap.dedent(body))
    return f"{sys.executable} {path} {{input}} {{output}}"


def test_run_external_success(tmp_path):
    cmd = _script(tmp_path, """
        import sys
        with open(sys.argv[2], "w") as f:
            f.write("time_sec,f0_hz\\n0.0,100\\n0.01,101\\n")
    """)
    wav = tmp_path / "a.wav"
    wav.write_bytes(b"")
    tr = run_external(parse_extractor("external:" + cmd), wav, tmp_path)
    np.testing.assert_array_equal(tr.f0, [100.0, 101.0])


def test_run_external_failure(tmp_path):
    cmd = _script(tmp_path, """
        import sys
        sys.stderr.write("boom")
        sys.exit(3)
    """)
    with pytest.raises(ExtractorFailure) as err:
        run_external(parse_extractor("external:" + cmd), tmp_path / "a.wav", tmp_path)
    assert err.value.returncode == 3 and "boom" in err.value.stderr


def test_run_external_missing_output(tmp_path):
    cmd = _script(tmp_path, "pass\n")
    with pytest.raises(TrackParseError):
        run_external(parse_extractor("external:" + cmd), tmp_path / "a.wav", tmp_path)
