import json
import math
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binaural_tse.spatial_synth import (
    AudioClip,
    AzimuthLookupError,
    DataError,
    HRIRCoverageError,
    HRIRDatabase,
    HRIRPair,
    ManifestEntry,
    ManifestError,
    MixtureSpec,
    fit_length,
    generate_dataset,
    load_hrir_db,
    make_mixture,
    read_manifest,
    read_wav,
    sample_mixture_spec,
    save_hrir_db,
    spatialize,
    split_speakers,
    synth_spherical_hrir,
    write_manifest,
    write_wav,
)
from binaural_tse.spatial_synth.hrir import MAX_IR_TAPS

from conftest import ArrayCorpus, square_wave


def naive_convolve(x, h):
    out = np.zeros(len(x) + len(h) - 1)
    for i, xi in enumerate(x):
        for j, hj in enumerate(h):
            out[i + j] += xi * hj
    return out


# --- HRIR databases -------------------------------------------------------


def test_spherical_db_sizes():
    assert len(synth_spherical_hrir(5)) == 37
    assert len(synth_spherical_hrir(15)) == 13
    assert synth_spherical_hrir(15).azimuths == list(range(-90, 91, 15))


def test_spherical_symmetry(db):
    np.testing.assert_array_equal(db[0].left, db[0].right)
    for az in (5, 40, 90):
        np.testing.assert_array_equal(db[az].left, db[-az].right)
        np.testing.assert_array_equal(db[az].right, db[-az].left)


def test_spherical_woodworth_delay():
    db = synth_spherical_hrir(5, head_radius_m=0.0875)
    # r/c * (pi/2 + sin(pi/2)) seconds at 16 kHz
    expected = round(0.0875 / 343.0 * (math.pi / 2 + 1.0) * 16000)
    pair = db[90]
    assert np.argmax(np.abs(pair.left)) - np.argmax(np.abs(pair.right)) == expected
    assert expected == 10


def test_spherical_ir_too_short():
    with pytest.raises(ValueError, match="ir_length"):
        synth_spherical_hrir(5, ir_length=8)


def test_resolution_must_divide_180():
    with pytest.raises(ValueError):
        synth_spherical_hrir(7)


def test_load_empty_directory_reports_all_missing(tmp_path):
    with pytest.raises(HRIRCoverageError) as err:
        load_hrir_db(tmp_path, 5)
    assert err.value.missing == list(range(-90, 91, 5))
    assert len(err.value.missing) == 37


def test_load_roundtrip_and_gaps(tmp_path, db):
    save_hrir_db(db, tmp_path)
    loaded = load_hrir_db(tmp_path, 5)
    assert len(loaded) == 37
    for az in db.azimuths:
        np.testing.assert_allclose(loaded[az].left, db[az].left, atol=1e-7)
    (tmp_path / "azi_-35L.wav").unlink()
    (tmp_path / "azi_40R.wav").unlink()
    with pytest.raises(HRIRCoverageError) as err:
        load_hrir_db(tmp_path, 5)
    assert err.value.missing == [-35, 40]


def test_load_coarser_grid_ignores_extra(tmp_path, db):
    save_hrir_db(db, tmp_path)
    assert len(load_hrir_db(tmp_path, 15)) == 13


def test_load_resamples_and_truncates(tmp_path):
    from scipy.io import wavfile

    rng = np.random.default_rng(0)
    for az in range(-90, 91, 90):
        for ear in "LR":
            wavfile.write(str(tmp_path / f"azi_{az}{ear}.wav"), 48000, rng.standard_normal(3000).astype(np.float32))
    db = load_hrir_db(tmp_path, 90)
    assert db.ir_length == MAX_IR_TAPS
    assert db[0].left[-1] == 0.0  # faded to zero


def test_load_sample_rate_error_without_resampler(tmp_path):
    from scipy.io import wavfile
    from binaural_tse.spatial_synth import AudioFormatError

    wavfile.write(str(tmp_path / "x.wav"), 44100, np.zeros(10, dtype=np.float32))
    with pytest.raises(AudioFormatError):
        read_wav(tmp_path / "x.wav")


def test_load_with_mapping_file(tmp_path, db):
    coarse = synth_spherical_hrir(90)
    mapping = {}
    for az, pair in coarse.pairs.items():
        write_wav(tmp_path / f"L{az + 90:03d}.wav", pair.left)
        write_wav(tmp_path / f"R{az + 90:03d}.wav", pair.right)
        mapping[str(az)] = {"L": f"L{az + 90:03d}.wav", "R": f"R{az + 90:03d}.wav"}
    (tmp_path / "map.json").write_text(json.dumps(mapping))
    loaded = load_hrir_db(tmp_path, 90, mapping_file=tmp_path / "map.json")
    np.testing.assert_allclose(loaded[90].right, coarse[90].right, atol=1e-7)


@pytest.mark.skipif(not os.environ.get("SURREY_HRIR_DIR"), reason="set SURREY_HRIR_DIR to the Surrey KEMAR HRIRs")
def test_surrey_kemar_has_37_azimuths():
    assert len(load_hrir_db(os.environ["SURREY_HRIR_DIR"], 5)) == 37


def test_database_rejects_unequal_lengths():
    pairs = {az: HRIRPair(az, np.ones(4), np.ones(4)) for az in (-90, 0, 90)}
    pairs[0] = HRIRPair(0, np.ones(5), np.ones(5))
    with pytest.raises(ValueError, match="lengths"):
        HRIRDatabase(90, pairs)


# --- spatialize -----------------------------------------------------------


def _delta_db():
    ir = np.zeros(8)
    ir[0] = 1.0
    return HRIRDatabase(90, {az: HRIRPair(az, ir.copy(), ir.copy()) for az in (-90, 0, 90)}, "test")


def test_spatialize_unit_impulse_is_identity():
    x = AudioClip(np.random.default_rng(1).standard_normal(500))
    left, right = spatialize(x, 90, _delta_db())
    np.testing.assert_array_equal(left.samples, x.samples)
    np.testing.assert_array_equal(right.samples, x.samples)


def test_spatialize_frontal_is_symmetric(db):
    x = AudioClip(np.random.default_rng(2).standard_normal(1000))
    left, right = spatialize(x, 0, db)
    np.testing.assert_array_equal(left.samples, right.samples)


def test_spatialize_matches_naive_convolution():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(300)
    irs = {az: HRIRPair(az, rng.standard_normal(40), rng.standard_normal(40)) for az in (-90, 0, 90)}
    db = HRIRDatabase(90, irs, "random")
    left, right = spatialize(AudioClip(x), -90, db)
    ref_l = naive_convolve(x, irs[-90].left)[:300]
    ref_r = naive_convolve(x, irs[-90].right)[:300]
    assert np.max(np.abs(left.samples - ref_l)) <= 1e-6 * np.max(np.abs(ref_l))
    assert np.max(np.abs(right.samples - ref_r)) <= 1e-6 * np.max(np.abs(ref_r))


def test_spatialize_off_grid(db):
    x = AudioClip(np.zeros(10))
    with pytest.raises(AzimuthLookupError):
        spatialize(x, 7, db)
    with pytest.raises(AzimuthLookupError):
        spatialize(x, 2.5, db)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), az=st.sampled_from(list(range(-90, 91, 5))), seed=st.integers(0, 10**6))
def test_spatialize_is_linear(db, a, b, az, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(256), rng.standard_normal(256)
    lhs = spatialize(AudioClip(a * x + b * y), az, db)
    sx, sy = spatialize(AudioClip(x), az, db), spatialize(AudioClip(y), az, db)
    for ear in (0, 1):
        np.testing.assert_allclose(lhs[ear].samples, a * sx[ear].samples + b * sy[ear].samples, atol=1e-6)


def test_audio_clip_validation():
    with pytest.raises(ValueError):
        AudioClip(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        AudioClip(np.zeros(4), sample_rate=8000)
    assert AudioClip(np.zeros(16000)).duration == 1.0


def test_fit_length():
    np.testing.assert_array_equal(fit_length([1, 2, 3], 2), [1, 2])
    np.testing.assert_array_equal(fit_length([1, 2], 4), [1, 2, 0, 0])


# --- make_mixture ---------------------------------------------------------


def _spec(**kw):
    base = dict(azimuths=(-30, 45), overlap_ratio=0.5, relative_snr_db=2.0, rng_seed=11,
                duration_s=0.5, enrollment_duration_s=1.0)
    base.update(kw)
    return MixtureSpec(**base)


def test_equal_power_zero_db_gives_unit_gain_ratio(db):
    n = 4000
    corpus = ArrayCorpus({
        "a": {"a1": square_wave(40, n), "a2": square_wave(40, n)},
        "b": {"b1": square_wave(64, n), "b2": square_wave(64, n)},
    })
    for seed in range(5):
        ex = make_mixture(_spec(relative_snr_db=0.0, rng_seed=seed, overlap_ratio=1.0), corpus, db)
        assert ex.gains[1] / ex.gains[0] == pytest.approx(1.0, abs=1e-12)


def test_overlap_zero_is_time_disjoint(corpus, db):
    for seed in range(10):
        ex = make_mixture(_spec(overlap_ratio=0.0, rng_seed=seed), corpus, db)
        (s0, e0), (s1, e1) = ex.source_intervals
        assert min(e0, e1) <= max(s0, s1)
        both = (ex.target_reference.samples != 0) & (ex.interferer_reference.samples != 0)
        assert not both.any()


@pytest.mark.parametrize("ratio", [0.0, 0.25, 0.5, 0.9, 1.0])
def test_realized_overlap_matches_spec(corpus, db, ratio):
    ex = make_mixture(_spec(overlap_ratio=ratio, duration_s=2.0), corpus, db)
    (s0, e0), (s1, e1) = ex.source_intervals
    shorter = min(e0 - s0, e1 - s1)
    assert abs(ex.realized_overlap - ratio) <= 1.0 / shorter
    assert 0 <= min(s0, s1) and max(e0, e1) <= ex.spec.num_samples


def test_relative_snr_over_overlap(corpus, db):
    ex = make_mixture(_spec(relative_snr_db=3.7, overlap_ratio=0.6, duration_s=2.0), corpus, db)
    (s0, e0), (s1, e1) = ex.source_intervals
    lo, hi = max(s0, s1), min(e0, e1)
    pt = np.mean(ex.target_reference.samples[lo:hi] ** 2)
    pi = np.mean(ex.interferer_reference.samples[lo:hi] ** 2)
    assert 10 * np.log10(pt / pi) == pytest.approx(3.7, abs=1e-9)


def test_mixture_is_sum_of_rendered_sources(corpus, db):
    ex = make_mixture(_spec(), corpus, db)
    tl, tr = spatialize(ex.target_reference, ex.spec.azimuths[0], db)
    il, ir = spatialize(ex.interferer_reference, ex.spec.azimuths[1], db)
    np.testing.assert_allclose(ex.mix_left.samples, tl.samples + il.samples, atol=1e-6)
    np.testing.assert_allclose(ex.mix_right.samples, tr.samples + ir.samples, atol=1e-6)
    np.testing.assert_allclose(ex.target_rendered_left.samples, tl.samples, atol=1e-6)


def test_mixture_contract(corpus, db):
    ex = make_mixture(_spec(duration_s=4.0, enrollment_duration_s=8.0), corpus, db)
    assert len(ex.mix_left) == len(ex.mix_right) == len(ex.target_reference) == 64000
    assert len(ex.enrollment) == 128000
    assert ex.target_speaker_id not in ex.interferer_speaker_ids
    assert ex.utterance_ids["enrollment"] != ex.utterance_ids["target"]
    assert ex.utterance_ids["enrollment"].split("/")[0] == ex.target_speaker_id
    assert np.max(np.abs(ex.mix_left.samples)) <= 0.99


def test_mixture_is_deterministic(corpus, db):
    a = make_mixture(_spec(rng_seed=99), corpus, db)
    b = make_mixture(_spec(rng_seed=99), corpus, db)
    for name in ("mix_left", "mix_right", "target_reference", "interferer_reference", "enrollment"):
        assert getattr(a, name) == getattr(b, name)
    assert a.utterance_ids == b.utterance_ids
    c = make_mixture(_spec(rng_seed=100), corpus, db)
    assert not (a.mix_left == c.mix_left)


def test_enrollment_needs_second_utterance(db):
    corpus = ArrayCorpus({"a": {"a1": square_wave(40, 1000)}, "b": {"b1": square_wave(64, 1000)}})
    with pytest.raises(DataError):
        make_mixture(_spec(), corpus, db)


def test_silent_utterance_is_skipped(db):
    n = 8000
    corpus = ArrayCorpus({
        "a": {"a_silent": np.zeros(n), "a1": square_wave(40, n), "a2": square_wave(40, n)},
        "b": {"b_silent": np.zeros(n), "b1": square_wave(64, n), "b2": square_wave(64, n)},
    })
    for seed in range(8):
        ex = make_mixture(_spec(rng_seed=seed), corpus, db, speakers=["a", "b"])
        assert "silent" not in ex.utterance_ids["target"]
        assert "silent" not in ex.utterance_ids["enrollment"]
        assert all("silent" not in u for u in ex.utterance_ids["interferers"])


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        _spec(overlap_ratio=1.5)
    with pytest.raises(ValueError):
        _spec(azimuths=(0,))
    with pytest.raises(ValueError):
        MixtureSpec(azimuths=(0, 5, 10), overlap_ratio=0.5, relative_snr_db=0, rng_seed=0, num_sources=3)


def test_sampled_specs_are_on_grid(db):
    rng = np.random.default_rng(0)
    for _ in range(50):
        spec = sample_mixture_spec(rng, db, rng_seed=0)
        assert set(spec.azimuths) <= set(db.azimuths)
        assert spec.azimuths[0] != spec.azimuths[1]
        assert 0 <= spec.overlap_ratio <= 1 and 0 <= spec.relative_snr_db <= 5


# --- splits and datasets ----------------------------------------------------


def test_split_speakers_disjoint_and_stable():
    speakers = [f"s{i}" for i in range(251)]
    splits = split_speakers(speakers)
    sets = [set(v) for v in splits.values()]
    assert sum(len(s) for s in sets) == 251
    assert set.union(*sets) == set(speakers)
    assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
    assert split_speakers(list(reversed(speakers))) == splits


def test_generated_splits_share_no_speakers(tmp_path, corpus, db):
    spk = {}
    for split in ("train", "valid", "test"):
        m = generate_dataset(corpus, db, tmp_path, 4, split, seed=1, duration_s=0.25, enrollment_duration_s=0.5)
        entries = read_manifest(m)
        spk[split] = {e.target_speaker_id for e in entries} | {s for e in entries for s in e.interferer_speaker_ids}
    assert not (spk["train"] & spk["valid"]) and not (spk["train"] & spk["test"]) and not (spk["valid"] & spk["test"])


def test_generate_dataset_files(tmp_path, corpus, db):
    m = generate_dataset(corpus, db, tmp_path, 3, "train", seed=5, duration_s=0.5, enrollment_duration_s=1.0)
    entries = read_manifest(m)
    assert len(entries) == 3
    x, rate = read_wav(entries[0].resolve("mix_left", m.parent))
    assert rate == 16000 and len(x) == 8000
    assert len(read_wav(entries[0].resolve("enrollment", m.parent))[0]) == 16000


# --- manifests --------------------------------------------------------------


def _entry(tmp_path, i, azimuths=(-35, 40)):
    paths = {}
    for role in ("mix_left", "mix_right", "target", "enrollment"):
        p = tmp_path / f"e{i}_{role}.wav"
        write_wav(p, np.zeros(4))
        paths[role] = p.name
    spec = MixtureSpec(azimuths=azimuths, overlap_ratio=0.123456789, relative_snr_db=4.2, rng_seed=2**63 + 7)
    return ManifestEntry(f"ex{i}", paths, spec, "spk1", ("spk2",), {"target": "u1"}, ((0, 10), (5, 20)), (0.1, 0.2))


def test_manifest_empty_roundtrip(tmp_path):
    path = write_manifest([], tmp_path / "m.jsonl")
    assert path.read_text() == ""
    assert read_manifest(path) == []


def test_manifest_roundtrip_order(tmp_path):
    entries = [_entry(tmp_path, i) for i in range(3)]
    path = write_manifest(entries, tmp_path / "m.jsonl")
    assert len(path.read_text().splitlines()) == 3
    assert read_manifest(path) == entries


def test_manifest_azimuths_exact(tmp_path):
    path = write_manifest([_entry(tmp_path, 0, (-35, 40))], tmp_path / "m.jsonl")
    (back,) = read_manifest(path)
    assert back.spec.azimuths == (-35, 40)
    assert back.spec.overlap_ratio == 0.123456789
    assert back.spec.rng_seed == 2**63 + 7


def test_manifest_malformed_line(tmp_path):
    path = write_manifest([_entry(tmp_path, 0)], tmp_path / "m.jsonl")
    with open(path, "a") as f:
        f.write("{not json\n")
    with pytest.raises(ManifestError, match="line 2"):
        read_manifest(path)


def test_manifest_missing_audio(tmp_path):
    e = _entry(tmp_path, 0)
    path = write_manifest([e], tmp_path / "m.jsonl")
    (tmp_path / e.paths["target"]).unlink()
    with pytest.raises(ManifestError, match="line 1"):
        read_manifest(path)
    with pytest.raises(FileNotFoundError):
        write_manifest([e], tmp_path / "m2.jsonl")


def test_swap_target_exchanges_roles(corpus, db):
    from binaural_tse.spatial_synth import swap_target

    ex = make_mixture(_spec(azimuths=(-30, 45), relative_snr_db=2.0), corpus, db)
    sw = swap_target(ex, corpus, db)
    assert sw.mix_left == ex.mix_left and sw.mix_right == ex.mix_right
    assert sw.target_reference == ex.interferer_reference and sw.interferer_reference == ex.target_reference
    assert sw.target_speaker_id == ex.interferer_speaker_ids[0]
    assert sw.interferer_speaker_ids == (ex.target_speaker_id,)
    assert sw.spec.azimuths == (45, -30) and sw.spec.relative_snr_db == -2.0
    assert sw.utterance_ids["enrollment"].split("/")[0] == sw.target_speaker_id
    assert sw.utterance_ids["enrollment"] != sw.utterance_ids["target"]
    il, _ = spatialize(ex.interferer_reference, 45, db)
    np.testing.assert_allclose(sw.target_rendered_left.samples, il.samples)
    assert np.sqrt(np.mean(sw.enrollment.samples ** 2)) == pytest.approx(0.05)


def test_paired_dataset_shares_mixtures(tmp_path, corpus, db):
    m = generate_dataset(corpus, db, tmp_path, 4, "train", seed=5, duration_s=0.25, enrollment_duration_s=0.5,
                         paired=True)
    e = read_manifest(m)
    for a, b in ((e[0], e[1]), (e[2], e[3])):
        assert read_wav(a.resolve("mix_left", m.parent))[0].tolist() == read_wav(b.resolve("mix_left", m.parent))[0].tolist()
        assert a.target_speaker_id == b.interferer_speaker_ids[0]
    assert e[0].spec.rng_seed != e[2].spec.rng_seed
